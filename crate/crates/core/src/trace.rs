//! Uniformly sampled simulation record and its CSV form.
//!
//! Column order is fixed: `t`, then the groups truth, measurement, corrector,
//! observer, ekf, control, desired and uncertainty (see [`column_names`]).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::plant::{AXES, AXIS_NAMES};

/// One sampled instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraceRecord {
    pub t: f64,
    /// True `q` then `q'`.
    pub truth: [f64; 2 * AXES],
    /// `y_o1` for each axis then `y_o2` for each axis.
    pub measurement: [f64; 2 * AXES],
    /// `xhat1` for each axis then `xhat2`.
    pub corrector: [f64; 2 * AXES],
    /// `xhat3` for each axis then the uncertainty estimate in force/torque units.
    pub observer: [f64; 2 * AXES],
    /// EKF position estimate per axis.
    pub ekf: [f64; AXES],
    /// Applied wrench `(u_x, u_y, u_z, u_psi, u_theta, u_phi)`.
    pub control: [f64; AXES],
    /// Desired `q`.
    pub desired: [f64; AXES],
    /// True uncertainty force/torque `Delta_i - k_i q_i'`.
    pub uncertainty: [f64; AXES],
}

pub const GROUPS: [(&str, usize); 8] = [
    ("truth", 2 * AXES),
    ("meas", 2 * AXES),
    ("corr", 2 * AXES),
    ("obs", 2 * AXES),
    ("ekf", AXES),
    ("u", AXES),
    ("des", AXES),
    ("unc", AXES),
];

pub const COLUMN_COUNT: usize = 1 + 4 * 2 * AXES + 4 * AXES;

/// Header names in column order.
pub fn column_names() -> Vec<String> {
    let mut names = vec!["t".to_string()];
    let pair = |prefix: &str, a: &str, b: &str, names: &mut Vec<String>| {
        for ax in AXIS_NAMES {
            names.push(format!("{prefix}_{a}_{ax}"));
        }
        for ax in AXIS_NAMES {
            names.push(format!("{prefix}_{b}_{ax}"));
        }
    };
    pair("truth", "pos", "vel", &mut names);
    pair("meas", "y1", "y2", &mut names);
    pair("corr", "pos", "vel", &mut names);
    pair("obs", "vel", "delta", &mut names);
    for prefix in ["ekf_pos", "u", "des", "unc"] {
        for ax in AXIS_NAMES {
            names.push(format!("{prefix}_{ax}"));
        }
    }
    names
}

impl TraceRecord {
    pub fn to_row(&self) -> [f64; COLUMN_COUNT] {
        let mut row = [0.0; COLUMN_COUNT];
        row[0] = self.t;
        let mut i = 1;
        for group in [&self.truth[..], &self.measurement, &self.corrector, &self.observer, &self.ekf, &self.control, &self.desired, &self.uncertainty] {
            row[i..i + group.len()].copy_from_slice(group);
            i += group.len();
        }
        row
    }

    pub fn from_row(row: &[f64; COLUMN_COUNT]) -> Self {
        let mut r = TraceRecord { t: row[0], ..Default::default() };
        let mut i = 1;
        for group in [
            &mut r.truth[..],
            &mut r.measurement,
            &mut r.corrector,
            &mut r.observer,
            &mut r.ekf,
            &mut r.control,
            &mut r.desired,
            &mut r.uncertainty,
        ] {
            let n = group.len();
            group.copy_from_slice(&row[i..i + n]);
            i += n;
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceLog {
    pub sample_interval: f64,
    pub records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn new(sample_interval: f64) -> Self {
        TraceLog { sample_interval, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t) - self.records.first().map_or(0.0, |r| r.t)
    }

    /// CSV with a header row; floats use the shortest round-trip representation.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * COLUMN_COUNT * 12);
        out.push_str(&column_names().join(","));
        out.push('\n');
        for r in &self.records {
            for (i, v) in r.to_row().iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the output of [`TraceLog::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::EmptyTrace)?;
        let expected = column_names();
        let got: Vec<&str> = header.split(',').map(str::trim).collect();
        if got.len() != expected.len() {
            return Err(Error::config("header", format!("expected {} columns, found {}", expected.len(), got.len())));
        }
        if let Some((g, e)) = got.iter().zip(&expected).find(|(g, e)| **g != e.as_str()) {
            return Err(Error::config("header", format!("unexpected column `{g}`, expected `{e}`")));
        }
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut row = [0.0; COLUMN_COUNT];
            let mut count = 0;
            for (i, field) in line.split(',').enumerate() {
                if i >= COLUMN_COUNT {
                    return Err(Error::config(format!("row {}", n + 1), "too many fields"));
                }
                row[i] = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::config(format!("row {} column `{}`", n + 1, expected[i]), e.to_string()))?;
                count = i + 1;
            }
            if count != COLUMN_COUNT {
                return Err(Error::config(format!("row {}", n + 1), format!("expected {COLUMN_COUNT} fields, found {count}")));
            }
            records.push(TraceRecord::from_row(&row));
        }
        if records.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let sample_interval = if records.len() > 1 { records[1].t - records[0].t } else { 0.0 };
        Ok(TraceLog { sample_interval, records })
    }
}
