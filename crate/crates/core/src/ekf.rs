//! Per-axis constant-velocity Kalman filter fusing the position and velocity
//! channels. The measurement model is linear, so the extended filter reduces
//! to the ordinary one.

use nalgebra::{Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::estimators::AxisMeasurement;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EkfConfig {
    /// White-noise acceleration intensity.
    pub q: f64,
    /// Position measurement variance.
    pub r1: f64,
    /// Velocity measurement variance.
    pub r2: f64,
    /// Initial covariance scale.
    pub p0: f64,
}

impl EkfConfig {
    pub fn validate(&self, key: &str) -> Result<()> {
        for (name, v) in [("q", self.q), ("r1", self.r1), ("r2", self.r2), ("p0", self.p0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{key}.{name}"), "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    /// `(position, velocity)`.
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl EkfState {
    pub fn new(position: f64, velocity: f64, cfg: &EkfConfig) -> Self {
        EkfState {
            mean: Vector2::new(position, velocity),
            cov: Matrix2::identity() * cfg.p0,
        }
    }

    pub fn from_measurement(m: &AxisMeasurement, cfg: &EkfConfig) -> Self {
        EkfState::new(m.y_o1, m.y_o2, cfg)
    }

    pub fn position(&self) -> f64 {
        self.mean[0]
    }

    pub fn velocity(&self) -> f64 {
        self.mean[1]
    }
}

fn is_spd(p: &Matrix2<f64>) -> bool {
    p[(0, 0)] > 0.0 && p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)] > 0.0 && p.iter().all(|v| v.is_finite())
}

fn symmetrize(p: &Matrix2<f64>) -> Matrix2<f64> {
    (p + p.transpose()) * 0.5
}

fn checked_cov(p: Matrix2<f64>) -> Result<Matrix2<f64>> {
    if is_spd(&p) && p[(0, 1)] == p[(1, 0)] {
        return Ok(p);
    }
    let s = symmetrize(&p);
    if is_spd(&s) {
        Ok(s)
    } else {
        Err(Error::NotPositiveDefinite)
    }
}

/// Propagates mean and covariance over `dt` with the discretized white-noise
/// acceleration model.
pub fn ekf_predict(s: &EkfState, dt: f64, cfg: &EkfConfig) -> Result<EkfState> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", dt, "must be positive"));
    }
    let f = Matrix2::new(1.0, dt, 0.0, 1.0);
    let (dt2, dt3) = (dt * dt, dt * dt * dt);
    let q = Matrix2::new(dt3 / 3.0, dt2 / 2.0, dt2 / 2.0, dt) * cfg.q;
    Ok(EkfState {
        mean: f * s.mean,
        cov: checked_cov(f * s.cov * f.transpose() + q)?,
    })
}

fn scalar_update(s: &EkfState, row: usize, z: f64, r: f64) -> Result<EkfState> {
    let h = if row == 0 { RowVector2::new(1.0, 0.0) } else { RowVector2::new(0.0, 1.0) };
    let innovation = z - (h * s.mean)[0];
    let s_cov = (h * s.cov * h.transpose())[0] + r;
    if !(s_cov > 0.0 && s_cov.is_finite()) {
        return Err(Error::SingularInnovation);
    }
    let k = s.cov * h.transpose() / s_cov;
    let i_kh = Matrix2::identity() - k * h;
    // Joseph form
    let cov = i_kh * s.cov * i_kh.transpose() + k * k.transpose() * r;
    Ok(EkfState {
        mean: s.mean + k * innovation,
        cov: checked_cov(symmetrize(&cov))?,
    })
}

/// Fuses whichever channels are fresh in `m`; stale channels are skipped.
pub fn ekf_update(s: &EkfState, m: &AxisMeasurement, cfg: &EkfConfig) -> Result<EkfState> {
    ensure_finite("ekf measurement", &[m.y_o1, m.y_o2])?;
    let mut out = *s;
    if m.y_o1_fresh {
        out = scalar_update(&out, 0, m.y_o1, cfg.r1)?;
    }
    if m.y_o2_fresh {
        out = scalar_update(&out, 1, m.y_o2, cfg.r2)?;
    }
    Ok(out)
}
