//! Scenario description and its JSON document form.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::control::{CircleTrajectory, ControlGains, TrajectorySpec};
use crate::ekf::EkfConfig;
use crate::error::{Error, Result};
use crate::estimators::{CorrectorParams, ObserverParams};
use crate::plant::{UavParams, UavState, UncertaintyModel, AXES};
use crate::sensors::{Dropout, LargeErrorModel, NoiseMixture, SensorConfig};

/// How the corrector, observer and EKF states are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorInit {
    /// From the first sensor readings (large error included).
    #[default]
    FirstMeasurement,
    /// From the true initial state, as when the vehicle starts on a surveyed pad.
    KnownStart,
}

/// Which state estimate feeds the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlSource {
    /// Corrector position/velocity plus observer uncertainty.
    #[default]
    Estimates,
    /// EKF position/velocity plus observer uncertainty.
    Ekf,
    /// True state and exact uncertainty, evaluated at every integrator stage.
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    /// Trace sampling interval (s); a multiple of `dt`.
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    /// Start of the steady-state metrics window (s).
    #[serde(default = "default_settle")]
    pub settle: f64,
}

fn default_sample_interval() -> f64 {
    0.01
}

fn default_settle() -> f64 {
    20.0
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions { sample_interval: default_sample_interval(), settle: default_settle() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Simulated time (s).
    pub duration: f64,
    /// Integration step shared by every subsystem (s).
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    pub uav: UavParams,
    #[serde(default)]
    pub uncertainty: UncertaintyModel,
    pub sensors: SensorConfig,
    #[serde(default)]
    pub gains: ControlGains,
    /// One parameter set for all axes, or an array of six.
    #[serde(deserialize_with = "per_axis")]
    pub correctors: [CorrectorParams; AXES],
    #[serde(deserialize_with = "per_axis")]
    pub observers: [ObserverParams; AXES],
    #[serde(deserialize_with = "per_axis")]
    pub ekf: [EkfConfig; AXES],
    pub trajectory: TrajectorySpec,
    /// Defaults to rest at the trajectory's starting pose.
    #[serde(default)]
    pub initial_state: Option<UavState>,
    #[serde(default)]
    pub estimator_init: EstimatorInit,
    #[serde(default)]
    pub control_source: ControlSource,
    #[serde(default)]
    pub output: OutputOptions,
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrSix<T> {
    Six([T; AXES]),
    One(T),
}

fn per_axis<'de, D, T>(d: D) -> std::result::Result<[T; AXES], D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de> + Clone,
{
    Ok(match OneOrSix::deserialize(d)? {
        OneOrSix::Six(a) => a,
        OneOrSix::One(v) => std::array::from_fn(|_| v.clone()),
    })
}

// Re-labels a parameter error with the document path of the offending value.
fn keyed(prefix: String, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::InvalidParameter { name, value, reason } => {
            Error::config(format!("{prefix}.{name}"), format!("{value}: {reason}"))
        }
        Error::Config { key, message } => Error::config(format!("{prefix}.{key}"), message),
        other => Error::config(prefix, other.to_string()),
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

impl ScenarioConfig {
    /// Parses and validates a JSON document; errors name the offending key path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg = Self::parse_json_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without checking parameter ranges.
    pub fn parse_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "document".to_string() } else { path };
            Error::config(key, e.into_inner().to_string())
        })?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&read(path.as_ref())?)
    }

    pub fn parse_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_json_str(&read(path.as_ref())?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario config serializes")
    }

    pub fn tick_count(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn sample_stride(&self) -> u64 {
        ((self.output.sample_interval / self.dt).round() as u64).max(1)
    }

    pub fn initial_state(&self) -> UavState {
        self.initial_state.unwrap_or_else(|| {
            let s = self.trajectory.sample(0.0);
            UavState { q: s.q, qd: s.qd }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::config("duration", "must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be positive"));
        }
        let fastest = self.sensors.position_period.min(self.sensors.velocity_period);
        if self.dt > fastest * (1.0 + 1e-9) {
            return Err(Error::config("dt", format!("exceeds the fastest sensor period {fastest}")));
        }
        let n = self.duration / self.dt;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::config("duration", "must be a whole number of steps"));
        }
        let si = self.output.sample_interval;
        if !(si >= self.dt * (1.0 - 1e-9)) {
            return Err(Error::config("output.sample_interval", "must be at least dt"));
        }
        let stride = si / self.dt;
        if (stride - stride.round()).abs() > 1e-6 {
            return Err(Error::config("output.sample_interval", "must be a multiple of dt"));
        }
        if self.tick_count() % self.sample_stride() != 0 {
            return Err(Error::config("output.sample_interval", "must divide the duration"));
        }
        if !(self.output.settle >= 0.0) {
            return Err(Error::config("output.settle", "must be nonnegative"));
        }
        keyed("uav".into(), self.uav.validate())?;
        self.uncertainty.validate()?;
        self.sensors.validate()?;
        keyed("gains".into(), self.gains.validate())?;
        keyed("trajectory".into(), self.trajectory.validate())?;
        for i in 0..AXES {
            keyed(format!("correctors[{i}]"), self.correctors[i].validate())?;
            keyed(format!("observers[{i}]"), self.observers[i].validate())?;
            self.ekf[i].validate(&format!("ekf[{i}]"))?;
        }
        if let Some(s) = &self.initial_state {
            if !s.q.iter().chain(&s.qd).all(|v| v.is_finite()) {
                return Err(Error::config("initial_state", "must be finite"));
            }
        }
        Ok(())
    }

    /// Circle flight with a ~20 m biased position channel, a GPS outage and
    /// the reference estimator and control gains.
    pub fn paper_sec6() -> Self {
        let mut sensors = SensorConfig::large_error_default();
        sensors.dropouts = vec![Dropout { start: 40.0, end: 46.0 }];
        ScenarioConfig {
            duration: 100.0,
            dt: 1e-4,
            seed: 2016,
            uav: UavParams::default(),
            uncertainty: UncertaintyModel::reference(),
            sensors,
            gains: ControlGains::default(),
            correctors: [CorrectorParams::REFERENCE; AXES],
            observers: [ObserverParams::REFERENCE; AXES],
            ekf: [EkfConfig { q: 0.1, r1: 1.0, r2: 3e-5, p0: 10.0 }; AXES],
            trajectory: TrajectorySpec::Circle(CircleTrajectory::default()),
            initial_state: None,
            estimator_init: EstimatorInit::KnownStart,
            control_source: ControlSource::Estimates,
            output: OutputOptions::default(),
        }
    }

    /// Uncertainty estimation run: reference disturbances and drag on the
    /// circle, accurate velocity channel.
    pub fn paper_fig5() -> Self {
        ScenarioConfig { duration: 60.0, ..Self::paper_sec6() }
    }

    /// Unbiased position noise only, for a like-for-like EKF comparison.
    pub fn noise_only() -> Self {
        let mut sensors = SensorConfig::ideal();
        for ax in sensors.axes.iter_mut().take(3) {
            ax.position_noise = NoiseMixture { gaussian_std: 1.0, ..Default::default() };
            ax.velocity_noise = NoiseMixture::doppler();
        }
        ScenarioConfig { sensors, duration: 60.0, ..Self::paper_sec6() }
    }

    /// Zero noise, zero sensing error, zero uncertainty hover.
    pub fn ideal_hover(position: [f64; 3]) -> Self {
        ScenarioConfig {
            duration: 10.0,
            dt: 1e-3,
            uncertainty: UncertaintyModel::default(),
            sensors: SensorConfig::ideal(),
            trajectory: TrajectorySpec::Hover { position },
            estimator_init: EstimatorInit::FirstMeasurement,
            ..Self::paper_sec6()
        }
    }

    /// Sets the constant large error on the position axes to `l_d` and turns
    /// every noise source and dropout off.
    pub fn with_constant_error(mut self, l_d: f64) -> Self {
        self.sensors.dropouts.clear();
        for (i, ax) in self.sensors.axes.iter_mut().enumerate() {
            ax.large_error = if i < 3 { LargeErrorModel::constant(l_d) } else { LargeErrorModel::zero() };
            ax.position_noise = NoiseMixture::default();
            ax.velocity_noise = NoiseMixture::default();
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [
            ScenarioConfig::paper_sec6(),
            ScenarioConfig::paper_fig5(),
            ScenarioConfig::noise_only(),
            ScenarioConfig::ideal_hover([0.0, 0.0, 1.0]),
        ] {
            cfg.validate().unwrap();
            let back = ScenarioConfig::from_json_str(&cfg.to_json_pretty()).unwrap();
            assert!(back.to_json_pretty() == cfg.to_json_pretty());
        }
    }

    #[test]
    fn single_parameter_set_applies_to_all_axes() {
        let mut v: serde_json::Value = serde_json::from_str(&ScenarioConfig::paper_sec6().to_json_pretty()).unwrap();
        v["correctors"] = serde_json::json!({"k1": 2.0, "k2": 3.0, "alpha_c": 0.5, "eps_c": 0.5});
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        assert!(cfg.correctors.iter().all(|c| c.k1 == 2.0));
    }

    #[test]
    fn errors_name_the_key() {
        let mut v: serde_json::Value = serde_json::from_str(&ScenarioConfig::paper_sec6().to_json_pretty()).unwrap();
        v["uav"].as_object_mut().unwrap().remove("mass");
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("mass"), "{err}");

        let mut v: serde_json::Value = serde_json::from_str(&ScenarioConfig::paper_sec6().to_json_pretty()).unwrap();
        v["correctors"][2]["k1"] = serde_json::json!(-1.0);
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("correctors[2].k1"), "{err}");

        let mut v: serde_json::Value = serde_json::from_str(&ScenarioConfig::paper_sec6().to_json_pretty()).unwrap();
        v["dt"] = serde_json::json!(0.5);
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("dt"), "{err}");

        assert!(ScenarioConfig::from_json_str("{").is_err());
        assert!(ScenarioConfig::from_json_str("[]").is_err());
    }

    #[test]
    fn sample_stride_and_ticks() {
        let cfg = ScenarioConfig { duration: 1.0, dt: 1e-3, ..ScenarioConfig::paper_sec6() };
        assert_eq!(cfg.tick_count(), 1000);
        assert_eq!(cfg.sample_stride(), 10);
    }
}
