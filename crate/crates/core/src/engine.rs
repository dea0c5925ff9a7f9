//! Fixed-step closed-loop simulation.
//!
//! Per tick `k` (time `t = k dt`): the sensors sample, the EKF predicts and
//! fuses, the controller computes a wrench from the current estimates, the
//! tick is logged if it falls on the sample grid, and then the plant,
//! correctors and observers are advanced to `t + dt`.

use crate::config::{ControlSource, EstimatorInit, ScenarioConfig};
use crate::control::{attitude_control, position_control, EstimateBundle, TrajectorySample};
use crate::ekf::{ekf_predict, ekf_update, EkfState};
use crate::error::{Error, Result};
use crate::estimators::{step_corrector, step_observer, AxisMeasurement, CorrectorState, ObserverState};
use crate::plant::{step_plant, UavState, WrenchInput, AXES};
use crate::sensors::{MeasurementFrame, SensorSuite};
use crate::trace::{TraceLog, TraceRecord};

/// States beyond this magnitude are treated as numerical divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Which estimator a mid-run perturbation is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbTarget {
    /// Added to every observer's uncertainty state.
    Observer,
    /// Added to every corrector's position state.
    Corrector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub tick: u64,
    pub target: PerturbTarget,
    pub magnitude: f64,
}

/// Knobs beyond the scenario document, used by the studies.
#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    /// Replays these wrenches (one per tick) instead of computing control.
    pub replay: Option<&'a [WrenchInput]>,
    pub perturbation: Option<Perturbation>,
    /// Keep every tick's applied wrench in [`RunOutput::controls`].
    pub record_controls: bool,
    /// Keep every tick's measurement frame and true state.
    pub record_measurements: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub trace: TraceLog,
    pub controls: Vec<WrenchInput>,
    pub measurements: Vec<(MeasurementFrame, UavState)>,
}

/// Runs the scenario and returns its trace.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TraceLog> {
    Ok(simulate(cfg, &RunOptions::default())?.trace)
}

fn diverged(subsystem: &str, tick: u64, dt: f64) -> Error {
    Error::Diverged { subsystem: subsystem.to_string(), tick, time: tick as f64 * dt }
}

fn check(subsystem: &str, tick: u64, dt: f64, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite() && v.abs() < DIVERGENCE_LIMIT) {
        Ok(())
    } else {
        Err(diverged(subsystem, tick, dt))
    }
}

fn true_uncertainty(cfg: &ScenarioConfig, s: &UavState, t: f64) -> [f64; AXES] {
    std::array::from_fn(|i| cfg.uncertainty.generalized_force(i, s.qd[i], t, &cfg.uav))
}

fn control_from(cfg: &ScenarioConfig, est: &EstimateBundle, traj: &TrajectorySample) -> Result<WrenchInput> {
    let f = position_control(est, traj, &cfg.gains, &cfg.uav)?;
    let m = attitude_control(est, traj, &cfg.gains, &cfg.uav)?;
    Ok(WrenchInput::new(f, m))
}

fn truth_control(cfg: &ScenarioConfig, s: &UavState, t: f64) -> Result<WrenchInput> {
    let est = EstimateBundle { q: s.q, qd: s.qd, delta: true_uncertainty(cfg, s, t) };
    control_from(cfg, &est, &cfg.trajectory.sample(t))
}

/// Full simulation with the extra hooks in `opts`.
pub fn simulate(cfg: &ScenarioConfig, opts: &RunOptions<'_>) -> Result<RunOutput> {
    cfg.validate()?;
    let dt = cfg.dt;
    let n = cfg.tick_count();
    let stride = cfg.sample_stride();
    if let Some(r) = opts.replay {
        if (r.len() as u64) < n {
            return Err(Error::config("replay", format!("needs {n} wrenches, got {}", r.len())));
        }
    }
    let inertia = cfg.uav.inertia();

    let mut state = cfg.initial_state();
    let mut sensors = SensorSuite::new(cfg.sensors.clone(), cfg.seed);
    let first = sensors.measure(&state, 0.0);
    let init: [AxisMeasurement; AXES] = match cfg.estimator_init {
        EstimatorInit::FirstMeasurement => first.axes,
        EstimatorInit::KnownStart => std::array::from_fn(|i| AxisMeasurement::new(state.q[i], state.qd[i], 0.0)),
    };
    let mut corr: [CorrectorState; AXES] = std::array::from_fn(|i| CorrectorState::from_measurement(&init[i]));
    let mut obs: [ObserverState; AXES] = std::array::from_fn(|i| ObserverState::from_measurement(&init[i]));
    let mut ekf: [EkfState; AXES] = std::array::from_fn(|i| EkfState::from_measurement(&init[i], &cfg.ekf[i]));

    let mut out = RunOutput {
        trace: TraceLog::new(cfg.output.sample_interval),
        controls: Vec::new(),
        measurements: Vec::new(),
    };
    out.trace.records.reserve((n / stride + 1) as usize);
    if opts.record_controls {
        out.controls.reserve(n as usize);
    }

    for k in 0..=n {
        let t = k as f64 * dt;
        let frame = if k == 0 { first } else { sensors.measure(&state, t) };
        check("sensors", k, dt, &frame.axes.iter().flat_map(|m| [m.y_o1, m.y_o2]).collect::<Vec<_>>())?;

        if k > 0 {
            for i in 0..AXES {
                let p = ekf_predict(&ekf[i], dt, &cfg.ekf[i]).map_err(|_| diverged("ekf", k, dt))?;
                ekf[i] = ekf_update(&p, &frame.axes[i], &cfg.ekf[i]).map_err(|_| diverged("ekf", k, dt))?;
            }
        }

        if let Some(p) = opts.perturbation {
            if p.tick == k {
                for i in 0..AXES {
                    match p.target {
                        PerturbTarget::Observer => obs[i].xhat4 += p.magnitude,
                        PerturbTarget::Corrector => corr[i].xhat1 += p.magnitude,
                    }
                }
            }
        }

        let traj = cfg.trajectory.sample(t);
        let delta_hat: [f64; AXES] = std::array::from_fn(|i| inertia[i] * obs[i].xhat4);
        let u = if let Some(r) = opts.replay {
            r[k.min(n - 1) as usize]
        } else {
            match cfg.control_source {
                ControlSource::Estimates => {
                    let est = EstimateBundle {
                        q: std::array::from_fn(|i| corr[i].xhat1),
                        qd: std::array::from_fn(|i| corr[i].xhat2),
                        delta: delta_hat,
                    };
                    control_from(cfg, &est, &traj)
                }
                ControlSource::Ekf => {
                    let est = EstimateBundle {
                        q: std::array::from_fn(|i| ekf[i].position()),
                        qd: std::array::from_fn(|i| ekf[i].velocity()),
                        delta: delta_hat,
                    };
                    control_from(cfg, &est, &traj)
                }
                ControlSource::Truth => truth_control(cfg, &state, t),
            }
            .map_err(|_| diverged("control", k, dt))?
        };
        check("control", k, dt, &u.u)?;

        if k % stride == 0 {
            out.trace.records.push(TraceRecord {
                t,
                truth: state.to_array(),
                measurement: std::array::from_fn(|j| if j < AXES { frame.axes[j].y_o1 } else { frame.axes[j - AXES].y_o2 }),
                corrector: std::array::from_fn(|j| if j < AXES { corr[j].xhat1 } else { corr[j - AXES].xhat2 }),
                observer: std::array::from_fn(|j| if j < AXES { obs[j].xhat3 } else { delta_hat[j - AXES] }),
                ekf: std::array::from_fn(|i| ekf[i].position()),
                control: u.u,
                desired: traj.q,
                uncertainty: true_uncertainty(cfg, &state, t),
            });
        }
        if opts.record_measurements {
            out.measurements.push((frame, state));
        }
        if k == n {
            break;
        }
        if opts.record_controls {
            out.controls.push(u);
        }

        let per_stage = opts.replay.is_none() && cfg.control_source == ControlSource::Truth;
        state = if per_stage {
            step_plant(&state, t, dt, &cfg.uncertainty, &cfg.uav, |tau, s| truth_control(cfg, s, tau))
        } else {
            step_plant(&state, t, dt, &cfg.uncertainty, &cfg.uav, |_, _| Ok(u))
        }
        .map_err(|_| diverged("plant", k, dt))?;
        check("plant", k, dt, &state.to_array())?;

        let h = u.known_acceleration(&cfg.uav);
        for i in 0..AXES {
            corr[i] = step_corrector(&corr[i], &frame.axes[i], &cfg.correctors[i], dt).map_err(|_| diverged("corrector", k, dt))?;
            obs[i] = step_observer(&obs[i], frame.axes[i].y_o2, h[i], &cfg.observers[i], dt)
                .map_err(|_| diverged("observer", k, dt))?;
            check("corrector", k, dt, &[corr[i].xhat1, corr[i].xhat2])?;
            check("observer", k, dt, &[obs[i].xhat3, obs[i].xhat4])?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hover_holds_exactly() {
        let cfg = ScenarioConfig::ideal_hover([1.0, -2.0, 3.0]);
        let trace = run_scenario(&cfg).unwrap();
        assert_eq!(trace.len(), 1001);
        for r in &trace.records {
            for i in 0..3 {
                assert!((r.truth[i] - [1.0, -2.0, 3.0][i]).abs() < 1e-6, "t={} axis {i}", r.t);
            }
        }
    }

    #[test]
    fn record_count_follows_sample_interval() {
        let mut cfg = ScenarioConfig::paper_sec6();
        cfg.duration = 1.0;
        assert_eq!(run_scenario(&cfg).unwrap().len(), 101);
        cfg.output.sample_interval = 0.1;
        let trace = run_scenario(&cfg).unwrap();
        assert_eq!(trace.len(), 11);
        assert!(trace.records.windows(2).all(|w| ((w[1].t - w[0].t) - 0.1).abs() < 1e-9));
    }

    #[test]
    fn ballistic_through_the_engine() {
        // Zero wrench and zero uncertainty: free fall from rest.
        let mut cfg = ScenarioConfig::ideal_hover([0.0, 0.0, 100.0]);
        cfg.duration = 2.0;
        let controls = vec![WrenchInput::default(); cfg.tick_count() as usize];
        let out = simulate(&cfg, &RunOptions { replay: Some(&controls), ..Default::default() }).unwrap();
        for r in &out.trace.records {
            let z = 100.0 - 0.5 * cfg.uav.gravity * r.t * r.t;
            assert!((r.truth[2] - z).abs() < 1e-9, "t={}", r.t);
            assert!((r.truth[8] + cfg.uav.gravity * r.t).abs() < 1e-9);
        }
    }

    #[test]
    fn divergence_names_subsystem_and_tick() {
        let mut cfg = ScenarioConfig::ideal_hover([0.0, 0.0, 1.0]);
        cfg.duration = 1.0;
        let controls = vec![WrenchInput::new([1e12, 0.0, 0.0], [0.0; 3]); cfg.tick_count() as usize];
        let err = simulate(&cfg, &RunOptions { replay: Some(&controls), ..Default::default() }).unwrap_err();
        match err {
            Error::Diverged { subsystem, tick, .. } => {
                assert_eq!(subsystem, "control");
                assert_eq!(tick, 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let mut cfg = ScenarioConfig::paper_sec6();
        cfg.duration = 5.0;
        let a = run_scenario(&cfg).unwrap().to_csv();
        let b = run_scenario(&cfg).unwrap().to_csv();
        assert!(a == b);
        cfg.seed += 1;
        assert!(run_scenario(&cfg).unwrap().to_csv() != a);
    }
}
