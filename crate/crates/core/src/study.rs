//! Multi-run experiments built on the engine: parameter sweeps, error-order
//! studies, the decoupling check and the EKF comparison.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::ekf::{ekf_predict, ekf_update, EkfConfig, EkfState};
use crate::engine::{simulate, PerturbTarget, Perturbation, RunOptions};
use crate::error::{Error, Result};
use crate::estimators::{step_observer, ObserverParams, ObserverState};
use crate::metrics::{axis_error, corrector_error, corrector_velocity_error, ekf_error, metrics, observer_error, Summary};
use crate::plant::{AXES, AXIS_NAMES};
use crate::sensors::LargeErrorModel;
use crate::trace::{column_names, TraceLog, GROUPS};

/// Scenario parameters that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    EpsC,
    EpsO,
    AlphaC,
    AlphaO,
    K1,
    K2,
    K3,
    K4,
    /// Gaussian standard deviation of every position channel.
    PositionNoise,
    /// Gaussian standard deviation of every velocity channel.
    VelocityNoise,
    /// Large-error bound on the position axes (shape rescaled to fit).
    LargeError,
}

pub const SWEEPABLE: [&str; 11] = [
    "eps_c",
    "eps_o",
    "alpha_c",
    "alpha_o",
    "k1",
    "k2",
    "k3",
    "k4",
    "position_noise",
    "velocity_noise",
    "L_d",
];

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use SweepParam::*;
        Ok(match s {
            "eps_c" => EpsC,
            "eps_o" => EpsO,
            "alpha_c" => AlphaC,
            "alpha_o" => AlphaO,
            "k1" => K1,
            "k2" => K2,
            "k3" => K3,
            "k4" => K4,
            "position_noise" => PositionNoise,
            "velocity_noise" => VelocityNoise,
            "L_d" | "l_d" => LargeError,
            _ => {
                return Err(Error::config(
                    "parameter",
                    format!("unknown sweep parameter `{s}`; expected one of: {}", SWEEPABLE.join(", ")),
                ))
            }
        })
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        SWEEPABLE[self as usize]
    }

    /// Returns a copy of `base` with this parameter set to `v` on every axis.
    pub fn apply(self, base: &ScenarioConfig, v: f64) -> Result<ScenarioConfig> {
        use SweepParam::*;
        let mut cfg = base.clone();
        for i in 0..AXES {
            let (c, o) = (&mut cfg.correctors[i], &mut cfg.observers[i]);
            match self {
                EpsC => c.eps_c = v,
                EpsO => o.eps_o = v,
                AlphaC => c.alpha_c = v,
                AlphaO => o.alpha_o = v,
                K1 => c.k1 = v,
                K2 => c.k2 = v,
                K3 => o.k3 = v,
                K4 => o.k4 = v,
                PositionNoise => cfg.sensors.axes[i].position_noise.gaussian_std = v,
                VelocityNoise => cfg.sensors.axes[i].velocity_noise.gaussian_std = v,
                LargeError => {
                    if i < 3 {
                        let e = &mut cfg.sensors.axes[i].large_error;
                        if e.bound > 0.0 {
                            let s = v / e.bound;
                            e.constant *= s;
                            e.walk_step *= s;
                            for t in &mut e.sinusoids {
                                t.amplitude *= s;
                            }
                            e.bound = v;
                        } else {
                            *e = LargeErrorModel::constant(v);
                        }
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One row of metrics per swept value, in the order given.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub parameter: String,
    pub columns: Vec<String>,
    pub rows: Vec<(f64, Vec<f64>)>,
}

impl SweepResult {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.1[j]).collect())
    }

    /// Whether `name` never increases from one row to the next.
    pub fn is_nonincreasing(&self, name: &str) -> bool {
        self.column(name).is_some_and(|c| c.windows(2).all(|w| w[1] <= w[0]))
    }

    pub fn is_nondecreasing(&self, name: &str) -> bool {
        self.column(name).is_some_and(|c| c.windows(2).all(|w| w[1] >= w[0]))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{}\n", self.parameter, self.columns.join(","));
        for (v, row) in &self.rows {
            let _ = write!(out, "{v}");
            for x in row {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

/// Columns of a scenario sweep: position-axis corrector, observer and EKF errors.
pub const SWEEP_COLUMNS: [&str; 7] = [
    "corrector_max",
    "corrector_rms",
    "corrector_velocity_max",
    "observer_max",
    "observer_rms",
    "ekf_max",
    "ekf_rms",
];

fn summary_row(s: &Summary) -> Vec<f64> {
    vec![
        Summary::position_max(&s.corrector),
        Summary::position_rms(&s.corrector),
        Summary::position_max(&s.corrector_velocity),
        Summary::position_max(&s.observer),
        Summary::position_rms(&s.observer),
        Summary::position_max(&s.ekf),
        Summary::position_rms(&s.ekf),
    ]
}

/// Runs `f` over `items` on up to `jobs` threads; output keeps input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("lock not poisoned").into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Shrinks `cfg.dt` by `(eps / reference)^power`, rounded so the step still
/// divides the trace interval. With `power` matching the estimator's time
/// scaling (3 for the corrector, 2 for the observer) every run sees the same
/// discrete stiffness.
pub fn stiffness_matched(mut cfg: ScenarioConfig, eps: f64, reference: f64, power: i32) -> Result<ScenarioConfig> {
    let raw = cfg.dt * (eps / reference).powi(power);
    let per_sample = (cfg.output.sample_interval / raw).ceil();
    cfg.dt = cfg.output.sample_interval / per_sample;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the scenario once per value of `param`.
///
/// With `resolve_stiffness` (only for `eps_c` and `eps_o`) each run's step is
/// shrunk relative to the largest swept value, see [`stiffness_matched`].
pub fn sweep(base: &ScenarioConfig, param: SweepParam, values: &[f64], resolve_stiffness: bool, jobs: usize) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::config("values", "at least one value is required"));
    }
    let power = match (resolve_stiffness, param) {
        (false, _) => None,
        (true, SweepParam::EpsC) => Some(3),
        (true, SweepParam::EpsO) => Some(2),
        (true, _) => return Err(Error::config("resolve_stiffness", "applies only to eps_c and eps_o")),
    };
    let reference = values.iter().copied().fold(f64::MIN, f64::max);
    let configs = values
        .iter()
        .map(|v| {
            let cfg = param.apply(base, *v)?;
            match power {
                Some(p) => stiffness_matched(cfg, *v, reference, p),
                None => Ok(cfg),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = parallel_map(&configs, jobs, |cfg| {
        let out = simulate(cfg, &RunOptions::default())?;
        metrics(&out.trace, cfg.output.settle).map(|s| summary_row(&s))
    });
    Ok(SweepResult {
        parameter: param.name().to_string(),
        columns: SWEEP_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows: values.iter().copied().zip(rows.into_iter().collect::<Result<Vec<_>>>()?).collect(),
    })
}

fn check_descending_unit(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config("values", "at least one value is required"));
    }
    if values.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::config("values", "every epsilon must lie in (0, 1)"));
    }
    if values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("values", "epsilons must be strictly descending"));
    }
    Ok(())
}

/// Noise-free runs with the constant large error `l_d` on the position axes,
/// one per `eps_c`. Columns: steady-state max `|e1|` and `|e2|` over the
/// position axes.
///
/// With `resolve_stiffness`, each run's step is scaled by `(eps / eps_max)^3`
/// (rounded down to divide the trace interval) so every run sees the same
/// discrete stiffness `k2 dt / eps^3`; otherwise all runs share `base.dt`.
pub fn convergence_study(
    base: &ScenarioConfig,
    l_d: f64,
    eps_values: &[f64],
    resolve_stiffness: bool,
    jobs: usize,
) -> Result<SweepResult> {
    check_descending_unit(eps_values)?;
    let base = base.clone().with_constant_error(l_d);
    let configs = eps_values
        .iter()
        .map(|v| {
            let cfg = SweepParam::EpsC.apply(&base, *v)?;
            if resolve_stiffness {
                stiffness_matched(cfg, *v, eps_values[0], 3)
            } else {
                Ok(cfg)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = parallel_map(&configs, jobs, |cfg| {
        let out = simulate(cfg, &RunOptions::default())?;
        let end = out.trace.records.last().map_or(0.0, |r| r.t);
        let settle = cfg.output.settle;
        let e1 = (0..3).map(|i| axis_error(&out.trace, i, settle, end, corrector_error).max).fold(0.0, f64::max);
        let e2 = (0..3).map(|i| axis_error(&out.trace, i, settle, end, corrector_velocity_error).max).fold(0.0, f64::max);
        Ok(vec![e1, e2])
    });
    Ok(SweepResult {
        parameter: "eps_c".into(),
        columns: vec!["e1_max".into(), "e2_max".into()],
        rows: eps_values.iter().copied().zip(rows.into_iter().collect::<Result<Vec<_>>>()?).collect(),
    })
}

/// Observer-only runs tracking a ramp uncertainty `sigma(t) = slope t` on an
/// exactly measured velocity, one per `eps_o`. Columns: max and RMS of
/// `xhat4 - sigma` after `settle`.
pub fn observer_ramp_study(
    p: &ObserverParams,
    slope: f64,
    eps_values: &[f64],
    duration: f64,
    settle: f64,
    dt: f64,
) -> Result<SweepResult> {
    check_descending_unit(eps_values)?;
    let mut rows = Vec::with_capacity(eps_values.len());
    for &eps in eps_values {
        let p = ObserverParams { eps_o: eps, ..*p };
        p.validate()?;
        let n = (duration / dt).round() as u64;
        let mut s = ObserverState::new(0.0, 0.0);
        let (mut max, mut sq, mut count) = (0.0f64, 0.0, 0usize);
        for k in 0..=n {
            let t = k as f64 * dt;
            if t >= settle {
                let e = s.xhat4 - slope * t;
                max = max.max(e.abs());
                sq += e * e;
                count += 1;
            }
            if k < n {
                // v(t) = slope t^2 / 2, h = 0
                s = step_observer(&s, 0.5 * slope * t * t, 0.0, &p, dt)?;
            }
        }
        rows.push((eps, vec![max, (sq / count.max(1) as f64).sqrt()]));
    }
    Ok(SweepResult { parameter: "eps_o".into(), columns: vec!["e4_max".into(), "e4_rms".into()], rows })
}

/// First sample/column where two traces disagree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub time: f64,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecouplingVerdict {
    /// Which estimator was perturbed.
    pub perturbed: &'static str,
    /// Which estimator's trace columns were compared.
    pub compared: &'static str,
    pub open_loop: bool,
    pub magnitude: f64,
    pub identical: bool,
    pub first_divergence: Option<Divergence>,
}

fn group_range(name: &str) -> std::ops::Range<usize> {
    let mut start = 1;
    for (g, n) in GROUPS {
        if g == name {
            return start..start + n;
        }
        start += n;
    }
    unreachable!("unknown trace group {name}")
}

fn first_difference(a: &TraceLog, b: &TraceLog, cols: std::ops::Range<usize>) -> Option<Divergence> {
    let names = column_names();
    for (ra, rb) in a.records.iter().zip(&b.records) {
        let (x, y) = (ra.to_row(), rb.to_row());
        if let Some(j) = cols.clone().find(|&j| x[j].to_bits() != y[j].to_bits()) {
            return Some(Divergence { time: ra.t, column: names[j].clone() });
        }
    }
    if a.len() != b.len() {
        return Some(Divergence { time: a.records.len().min(b.records.len()) as f64 * a.sample_interval, column: "t".into() });
    }
    None
}

/// Perturbs one estimator at `duration / 2` and checks that the other
/// estimator's trace is bit-identical to an unperturbed run.
///
/// Open loop, both runs replay the wrenches recorded from a closed-loop run,
/// which isolates the estimators; closed loop, the perturbation can reach the
/// other estimator through control and the plant.
pub fn decoupling_check(cfg: &ScenarioConfig, target: PerturbTarget, magnitude: f64, open_loop: bool) -> Result<DecouplingVerdict> {
    let tick = cfg.tick_count() / 2;
    let recorded;
    let replay = if open_loop {
        recorded = simulate(cfg, &RunOptions { record_controls: true, ..Default::default() })?.controls;
        Some(recorded.as_slice())
    } else {
        None
    };
    let a = simulate(cfg, &RunOptions { replay, ..Default::default() })?.trace;
    let b = simulate(
        cfg,
        &RunOptions { replay, perturbation: Some(Perturbation { tick, target, magnitude }), ..Default::default() },
    )?
    .trace;
    let (perturbed, compared) = match target {
        PerturbTarget::Observer => ("observer", "corr"),
        PerturbTarget::Corrector => ("corrector", "obs"),
    };
    let first_divergence = first_difference(&a, &b, group_range(compared));
    Ok(DecouplingVerdict {
        perturbed,
        compared: if compared == "corr" { "corrector" } else { "observer" },
        open_loop,
        magnitude,
        identical: first_divergence.is_none(),
        first_divergence,
    })
}

/// Grids searched by [`tune_ekf`].
pub const EKF_Q_GRID: [f64; 9] = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0];
pub const EKF_R1_GRID: [f64; 7] = [1e-4, 1e-2, 0.1, 1.0, 10.0, 100.0, 1e4];
pub const EKF_R2_GRID: [f64; 5] = [1e-6, 1e-5, 3e-5, 1e-4, 1e-3];

/// Initial covariance used when the filter starts from the known state.
pub const EKF_KNOWN_START_P0: f64 = 1e-6;

/// Grid search over `(q, r1, r2)` per axis, minimizing the EKF's position
/// RMS error against truth after the settle time. Tuning runs on the
/// scenario with its large errors removed (the EKF has no model for them),
/// replaying one recorded measurement stream for every grid point. With a
/// known start `p0` is set to [`EKF_KNOWN_START_P0`], otherwise it is kept.
pub fn tune_ekf(cfg: &ScenarioConfig, jobs: usize) -> Result<[EkfConfig; AXES]> {
    let mut clean = cfg.clone();
    for a in clean.sensors.axes.iter_mut() {
        a.large_error = crate::sensors::LargeErrorModel::zero();
    }
    let rec = simulate(&clean, &RunOptions { record_measurements: true, ..Default::default() })?.measurements;
    let settle = cfg.output.settle;
    let mut grid = Vec::new();
    for &q in &EKF_Q_GRID {
        for &r1 in &EKF_R1_GRID {
            for &r2 in &EKF_R2_GRID {
                grid.push(EkfConfig { q, r1, r2, p0: 0.0 });
            }
        }
    }
    let mut tuned = cfg.ekf;
    for (i, slot) in tuned.iter_mut().enumerate() {
        let p0 = match cfg.estimator_init {
            crate::config::EstimatorInit::FirstMeasurement => cfg.ekf[i].p0,
            crate::config::EstimatorInit::KnownStart => EKF_KNOWN_START_P0,
        };
        let base = EkfConfig { p0, ..cfg.ekf[i] };
        let scores = parallel_map(&grid, jobs, |g| -> Result<f64> {
            let c = EkfConfig { p0, ..*g };
            let (m0, s0) = &rec[0];
            let mut s = match cfg.estimator_init {
                crate::config::EstimatorInit::FirstMeasurement => EkfState::from_measurement(&m0.axes[i], &c),
                crate::config::EstimatorInit::KnownStart => EkfState::new(s0.q[i], s0.qd[i], &c),
            };
            let (mut sq, mut n) = (0.0, 0usize);
            let mut last_t = m0.t;
            for (frame, truth) in &rec[1..] {
                let m = frame.axes[i];
                if !(m.y_o1_fresh || m.y_o2_fresh) {
                    continue;
                }
                s = ekf_update(&ekf_predict(&s, frame.t - last_t, &c)?, &m, &c)?;
                last_t = frame.t;
                if frame.t >= settle {
                    let e = s.position() - truth.q[i];
                    sq += e * e;
                    n += 1;
                }
            }
            Ok(if n > 0 { (sq / n as f64).sqrt() } else { f64::INFINITY })
        });
        let mut best = (f64::INFINITY, base);
        for (k, score) in scores.into_iter().enumerate() {
            let score = score?;
            if score < best.0 {
                best = (score, EkfConfig { p0, ..grid[k] });
            }
        }
        *slot = best.1;
    }
    Ok(tuned)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisComparison {
    pub axis: &'static str,
    pub corrector_max: f64,
    pub corrector_rms: f64,
    pub ekf_max: f64,
    pub ekf_rms: f64,
    /// EKF RMS over corrector RMS.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub settle: f64,
    pub tuned: bool,
    pub ekf: [EkfConfig; AXES],
    pub axes: Vec<AxisComparison>,
    /// Smallest position-axis ratio.
    pub min_position_ratio: f64,
    /// Largest position-axis ratio.
    pub max_position_ratio: f64,
    pub observer_rms: Vec<f64>,
}

impl Comparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }
}

/// Corrector versus EKF position errors, optionally retuning the EKF first.
pub fn compare_ekf(cfg: &ScenarioConfig, tune: bool, jobs: usize) -> Result<Comparison> {
    let mut cfg = cfg.clone();
    if tune {
        cfg.ekf = tune_ekf(&cfg, jobs)?;
    }
    let trace = simulate(&cfg, &RunOptions::default())?.trace;
    let settle = cfg.output.settle;
    let end = trace.records.last().map_or(0.0, |r| r.t);
    let axes: Vec<AxisComparison> = (0..AXES)
        .map(|i| {
            let c = axis_error(&trace, i, settle, end, corrector_error);
            let e = axis_error(&trace, i, settle, end, ekf_error);
            AxisComparison {
                axis: AXIS_NAMES[i],
                corrector_max: c.max,
                corrector_rms: c.rms,
                ekf_max: e.max,
                ekf_rms: e.rms,
                ratio: e.rms / c.rms,
            }
        })
        .collect();
    let ratios: Vec<f64> = axes[..3].iter().map(|a| a.ratio).collect();
    Ok(Comparison {
        settle,
        tuned: tune,
        ekf: cfg.ekf,
        min_position_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max_position_ratio: ratios.iter().copied().fold(0.0, f64::max),
        observer_rms: (0..3).map(|i| axis_error(&trace, i, settle, end, observer_error).rms).collect(),
        axes,
    })
}
