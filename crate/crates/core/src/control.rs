//! Desired trajectories and the estimate-driven position/attitude control laws.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::plant::{UavParams, AXES};

/// Desired pose and its first two derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TrajectorySample {
    /// `(x_d, y_d, z_d, psi_d, theta_d, phi_d)`.
    pub q: [f64; AXES],
    pub qd: [f64; AXES],
    pub qdd: [f64; AXES],
}

/// Take-off climb followed by a constant-speed horizontal circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleTrajectory {
    pub radius: f64,
    pub speed: f64,
    pub altitude: f64,
    pub climb_time: f64,
    /// Horizontal take-off point; the circle starts here after the climb.
    #[serde(default)]
    pub start: [f64; 2],
    #[serde(default)]
    pub ground_altitude: f64,
}

impl Default for CircleTrajectory {
    fn default() -> Self {
        CircleTrajectory {
            radius: 5.0,
            speed: 1.0,
            altitude: 3.0,
            climb_time: 10.0,
            start: [0.0, 0.0],
            ground_altitude: 0.0,
        }
    }
}

impl CircleTrajectory {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("radius", self.radius),
            ("speed", self.speed),
            ("altitude", self.altitude),
            ("climb_time", self.climb_time),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, v, "must be positive"));
            }
        }
        Ok(())
    }

    pub fn angular_rate(&self) -> f64 {
        self.speed / self.radius
    }

    pub fn center(&self) -> [f64; 2] {
        [self.start[0] - self.radius, self.start[1]]
    }

    pub fn sample(&self, t: f64) -> TrajectorySample {
        let mut s = TrajectorySample::default();
        let [cx, cy] = self.center();
        if t < self.climb_time {
            // quintic rest-to-rest altitude profile
            let tau = (t / self.climb_time).max(0.0);
            let rise = self.altitude - self.ground_altitude;
            let (t2, t3) = (tau * tau, tau * tau * tau);
            let ct = self.climb_time;
            s.q[0] = self.start[0];
            s.q[1] = self.start[1];
            s.q[2] = self.ground_altitude + rise * (10.0 * t3 - 15.0 * t3 * tau + 6.0 * t3 * t2);
            s.qd[2] = rise * (30.0 * t2 - 60.0 * t3 + 30.0 * t2 * t2) / ct;
            s.qdd[2] = rise * (60.0 * tau - 180.0 * t2 + 120.0 * t3) / (ct * ct);
        } else {
            let w = self.angular_rate();
            let th = w * (t - self.climb_time);
            let (sn, cs) = th.sin_cos();
            let r = self.radius;
            s.q[0] = cx + r * cs;
            s.q[1] = cy + r * sn;
            s.q[2] = self.altitude;
            s.qd[0] = -r * w * sn;
            s.qd[1] = r * w * cs;
            s.qdd[0] = -r * w * w * cs;
            s.qdd[1] = -r * w * w * sn;
        }
        s
    }
}

/// Trajectory families available to scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    Circle(CircleTrajectory),
    Hover { position: [f64; 3] },
}

impl TrajectorySpec {
    pub fn sample(&self, t: f64) -> TrajectorySample {
        match self {
            TrajectorySpec::Circle(c) => c.sample(t),
            TrajectorySpec::Hover { position } => {
                let mut s = TrajectorySample::default();
                s.q[..3].copy_from_slice(position);
                s
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TrajectorySpec::Circle(c) => c.validate(),
            TrajectorySpec::Hover { position } => ensure_finite("hover position", position),
        }
    }
}

/// Builds a circle-trajectory sample directly from its parameters.
pub fn circle_trajectory(t: f64, radius: f64, speed: f64, altitude: f64, climb_time: f64) -> Result<TrajectorySample> {
    let c = CircleTrajectory { radius, speed, altitude, climb_time, ..Default::default() };
    c.validate()?;
    Ok(c.sample(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlGains {
    pub k_p1: f64,
    pub k_p2: f64,
    pub k_a1: f64,
    pub k_a2: f64,
    /// Optional symmetric clamp on each force component (N).
    #[serde(default)]
    pub force_limit: Option<f64>,
    /// Optional symmetric clamp on each torque component (N m).
    #[serde(default)]
    pub torque_limit: Option<f64>,
}

impl Default for ControlGains {
    fn default() -> Self {
        ControlGains { k_p1: 2.5, k_p2: 4.0, k_a1: 2.5, k_a2: 4.0, force_limit: None, torque_limit: None }
    }
}

impl ControlGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k_p1", self.k_p1), ("k_p2", self.k_p2), ("k_a1", self.k_a1), ("k_a2", self.k_a2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, v, "must be positive"));
            }
        }
        Ok(())
    }
}

/// What the controller knows: corrected pose and rates plus uncertainty
/// estimates already expressed as forces/torques.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EstimateBundle {
    /// Corrected `(x, y, z, psi, theta, phi)`.
    pub q: [f64; AXES],
    pub qd: [f64; AXES],
    /// `(delta_p, delta_a)`: uncertainty forces then torques.
    pub delta: [f64; AXES],
}

/// Feed-forward terms `(Xi_p, Xi_a)` of the tracking-error dynamics.
pub fn feedforward_terms(traj: &TrajectorySample, params: &UavParams) -> ([f64; 3], [f64; 3]) {
    let m = params.mass;
    let xi_p = [-m * traj.qdd[0], -m * traj.qdd[1], -m * traj.qdd[2] - m * params.gravity];
    let xi_a = [
        -params.j_psi * traj.qdd[3],
        -params.j_theta * traj.qdd[4],
        -params.j_phi * traj.qdd[5],
    ];
    (xi_p, xi_a)
}

fn clamp_opt(v: f64, limit: Option<f64>) -> f64 {
    match limit {
        Some(l) => v.clamp(-l, l),
        None => v,
    }
}

pub fn position_control(
    est: &EstimateBundle,
    traj: &TrajectorySample,
    gains: &ControlGains,
    params: &UavParams,
) -> Result<[f64; 3]> {
    ensure_finite("position estimate", &est.q[..3])?;
    ensure_finite("velocity estimate", &est.qd[..3])?;
    ensure_finite("uncertainty estimate", &est.delta[..3])?;
    let (xi_p, _) = feedforward_terms(traj, params);
    let m = params.mass;
    let mut u = [0.0; 3];
    for i in 0..3 {
        let e = est.q[i] - traj.q[i];
        let ed = est.qd[i] - traj.qd[i];
        u[i] = clamp_opt(
            -xi_p[i] - est.delta[i] - m * (gains.k_p1 * e + gains.k_p2 * ed),
            gains.force_limit,
        );
    }
    Ok(u)
}

pub fn attitude_control(
    est: &EstimateBundle,
    traj: &TrajectorySample,
    gains: &ControlGains,
    params: &UavParams,
) -> Result<[f64; 3]> {
    ensure_finite("attitude estimate", &est.q[3..])?;
    ensure_finite("rate estimate", &est.qd[3..])?;
    ensure_finite("uncertainty estimate", &est.delta[3..])?;
    let (_, xi_a) = feedforward_terms(traj, params);
    let j = [params.j_psi, params.j_theta, params.j_phi];
    let mut u = [0.0; 3];
    for i in 0..3 {
        let e = est.q[3 + i] - traj.q[3 + i];
        let ed = est.qd[3 + i] - traj.qd[3 + i];
        u[i] = clamp_opt(
            -xi_a[i] - est.delta[3 + i] - j[i] * (gains.k_a1 * e + gains.k_a2 * ed),
            gains.torque_limit,
        );
    }
    Ok(u)
}

/// Converts observer uncertainty accelerations `sigma_hat_i` into the
/// force/torque form used by the control laws.
pub fn uncertainty_rescale(sigma_hat: &[f64; AXES], params: &UavParams) -> ([f64; 3], [f64; 3]) {
    let inertia = params.inertia();
    let mut dp = [0.0; 3];
    let mut da = [0.0; 3];
    for i in 0..3 {
        dp[i] = inertia[i] * sigma_hat[i];
        da[i] = inertia[3 + i] * sigma_hat[3 + i];
    }
    (dp, da)
}
