//! Error statistics over a trace.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::plant::{AXES, AXIS_NAMES};
use crate::trace::{TraceLog, TraceRecord};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisError {
    pub axis: &'static str,
    pub max: f64,
    pub rms: f64,
}

/// Ratio of the late-window peak error to the early-window peak error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftMetric {
    pub reference_window: [f64; 2],
    pub late_window: [f64; 2],
    pub reference_max: f64,
    pub late_max: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub settle: f64,
    pub samples: usize,
    /// `xhat1 - q` per axis.
    pub corrector: Vec<AxisError>,
    /// `xhat2 - q'` per axis.
    pub corrector_velocity: Vec<AxisError>,
    /// Estimated minus true uncertainty force/torque per axis.
    pub observer: Vec<AxisError>,
    /// EKF position minus true position per axis.
    pub ekf: Vec<AxisError>,
    /// Raw position-channel error per axis.
    pub measurement: Vec<AxisError>,
    /// True minus desired pose per axis.
    pub tracking: Vec<AxisError>,
    /// Corrector position-axis drift; absent when the trace is too short.
    pub drift: Option<DriftMetric>,
}

/// Per-record error for one estimator column.
pub type ErrorFn = fn(&TraceRecord, usize) -> f64;

pub fn corrector_error(r: &TraceRecord, i: usize) -> f64 {
    r.corrector[i] - r.truth[i]
}

pub fn corrector_velocity_error(r: &TraceRecord, i: usize) -> f64 {
    r.corrector[AXES + i] - r.truth[AXES + i]
}

pub fn observer_error(r: &TraceRecord, i: usize) -> f64 {
    r.observer[AXES + i] - r.uncertainty[i]
}

pub fn ekf_error(r: &TraceRecord, i: usize) -> f64 {
    r.ekf[i] - r.truth[i]
}

pub fn measurement_error(r: &TraceRecord, i: usize) -> f64 {
    r.measurement[i] - r.truth[i]
}

pub fn tracking_error(r: &TraceRecord, i: usize) -> f64 {
    r.truth[i] - r.desired[i]
}

fn window<'a>(trace: &'a TraceLog, t0: f64, t1: f64) -> impl Iterator<Item = &'a TraceRecord> {
    // half a sample of slack so window edges land on grid points
    let slack = 0.5 * trace.sample_interval.max(0.0);
    trace.records.iter().filter(move |r| r.t >= t0 - slack && r.t <= t1 + slack)
}

/// Max and RMS of `err` for one axis over `[t0, t1]`.
pub fn axis_error(trace: &TraceLog, i: usize, t0: f64, t1: f64, err: ErrorFn) -> AxisError {
    let (mut max, mut sq, mut n) = (0.0f64, 0.0, 0usize);
    for r in window(trace, t0, t1) {
        let e = err(r, i);
        max = max.max(e.abs());
        sq += e * e;
        n += 1;
    }
    AxisError { axis: AXIS_NAMES[i], max, rms: if n > 0 { (sq / n as f64).sqrt() } else { 0.0 } }
}

fn all_axes(trace: &TraceLog, t0: f64, t1: f64, err: ErrorFn) -> Vec<AxisError> {
    (0..AXES).map(|i| axis_error(trace, i, t0, t1, err)).collect()
}

/// Largest position-axis (x, y, z) error magnitude over `[t0, t1]`.
pub fn position_window_max(trace: &TraceLog, t0: f64, t1: f64, err: ErrorFn) -> f64 {
    window(trace, t0, t1).flat_map(|r| (0..3).map(move |i| err(r, i).abs())).fold(0.0, f64::max)
}

pub fn drift(trace: &TraceLog, reference: [f64; 2], late: [f64; 2], err: ErrorFn) -> DriftMetric {
    let reference_max = position_window_max(trace, reference[0], reference[1], err);
    let late_max = position_window_max(trace, late[0], late[1], err);
    DriftMetric { reference_window: reference, late_window: late, reference_max, late_max, ratio: late_max / reference_max }
}

/// Steady-state statistics after `settle` seconds.
///
/// The drift windows are `[0.05 T, 0.1 T]` and `[0.1 T, T]`; drift is
/// reported only when the early window starts after `settle`.
pub fn metrics(trace: &TraceLog, settle: f64) -> Result<Summary> {
    let (first, last) = match (trace.records.first(), trace.records.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::EmptyTrace),
    };
    if !(settle >= first && settle < last) {
        return Err(Error::param("settle", settle, "must lie inside the trace"));
    }
    let span = last - first;
    let reference = [first + 0.05 * span, first + 0.1 * span];
    Ok(Summary {
        settle,
        samples: window(trace, settle, last).count(),
        corrector: all_axes(trace, settle, last, corrector_error),
        corrector_velocity: all_axes(trace, settle, last, corrector_velocity_error),
        observer: all_axes(trace, settle, last, observer_error),
        ekf: all_axes(trace, settle, last, ekf_error),
        measurement: all_axes(trace, settle, last, measurement_error),
        tracking: all_axes(trace, settle, last, tracking_error),
        drift: (reference[0] >= settle).then(|| drift(trace, reference, [reference[1], last], corrector_error)),
    })
}

impl Summary {
    /// Largest position-axis maximum.
    pub fn position_max(errors: &[AxisError]) -> f64 {
        errors[..3].iter().map(|e| e.max).fold(0.0, f64::max)
    }

    /// Largest position-axis RMS.
    pub fn position_rms(errors: &[AxisError]) -> f64 {
        errors[..3].iter().map(|e| e.rms).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize, f: impl Fn(f64) -> f64) -> TraceLog {
        let mut log = TraceLog::new(0.1);
        for k in 0..n {
            let t = k as f64 * 0.1;
            let mut r = TraceRecord { t, ..Default::default() };
            for i in 0..AXES {
                r.truth[i] = (t + i as f64).sin();
                r.truth[AXES + i] = (t + i as f64).cos();
                r.corrector[i] = r.truth[i] + f(t);
                r.corrector[AXES + i] = r.truth[AXES + i];
                r.ekf[i] = r.truth[i];
                r.measurement[i] = r.truth[i];
                r.desired[i] = r.truth[i];
                r.uncertainty[i] = t;
                r.observer[AXES + i] = t;
            }
            log.records.push(r);
        }
        log
    }

    #[test]
    fn perfect_trace_is_all_zero() {
        let s = metrics(&synthetic(101, |_| 0.0), 2.0).unwrap();
        for group in [&s.corrector, &s.corrector_velocity, &s.observer, &s.ekf, &s.measurement, &s.tracking] {
            assert!(group.iter().all(|e| e.max == 0.0 && e.rms == 0.0));
        }
        assert_eq!(s.samples, 81);
    }

    #[test]
    fn constant_offset_stats() {
        let s = metrics(&synthetic(101, |_| 0.5), 0.0).unwrap();
        assert!(s.corrector.iter().all(|e| (e.max - 0.5).abs() < 1e-12 && (e.rms - 0.5).abs() < 1e-12));
        let d = s.drift.unwrap();
        assert_eq!(d.reference_window, [0.5, 1.0]);
        assert!((d.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn drift_detects_growth() {
        let s = metrics(&synthetic(1001, |t| 0.01 * t), 0.0).unwrap();
        assert!(s.drift.unwrap().ratio > 5.0);
    }

    #[test]
    fn errors() {
        assert_eq!(metrics(&TraceLog::new(0.1), 0.0), Err(Error::EmptyTrace));
        assert!(metrics(&synthetic(11, |_| 0.0), 5.0).is_err());
    }
}
