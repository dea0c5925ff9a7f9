//! Fully-actuated quadrotor rigid-body model with lumped per-axis
//! uncertainties.
//!
//! Generalized coordinates are ordered `(x, y, z, psi, theta, phi)`; each obeys
//! `q_i'' = h_i + sigma_i` where `h_i` is the known input term and `sigma_i`
//! collects drag and unmodelled disturbances.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::integrate::rk4_step;

pub const AXES: usize = 6;
pub const AXIS_NAMES: [&str; AXES] = ["x", "y", "z", "psi", "theta", "phi"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavParams {
    /// Mass (kg).
    pub mass: f64,
    pub gravity: f64,
    /// Rotor-to-centre distance (m).
    pub arm_length: f64,
    pub j_psi: f64,
    pub j_theta: f64,
    pub j_phi: f64,
    /// Rotor force coefficient.
    pub b: f64,
    /// Rotor torque coefficient.
    pub k: f64,
}

impl Default for UavParams {
    fn default() -> Self {
        UavParams {
            mass: 2.01,
            gravity: 9.81,
            arm_length: 0.2,
            j_psi: 2.5,
            j_theta: 1.25,
            j_phi: 1.25,
            b: 2.923e-3,
            k: 5e-4,
        }
    }
}

impl UavParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("arm_length", self.arm_length),
            ("j_psi", self.j_psi),
            ("j_theta", self.j_theta),
            ("j_phi", self.j_phi),
            ("b", self.b),
            ("k", self.k),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, v, "must be positive"));
            }
        }
        Ok(())
    }

    /// Per-axis generalized inertia: `m` for translation, `J` for rotation.
    pub fn inertia(&self) -> [f64; AXES] {
        [self.mass, self.mass, self.mass, self.j_psi, self.j_theta, self.j_phi]
    }
}

/// Thrust that balances gravity.
pub fn hover_thrust(params: &UavParams) -> f64 {
    params.mass * params.gravity
}

/// Positions/angles and their rates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UavState {
    /// `(x, y, z, psi, theta, phi)`.
    pub q: [f64; AXES],
    /// Time derivatives of `q`.
    pub qd: [f64; AXES],
}

impl UavState {
    pub fn at_rest(position: [f64; 3]) -> Self {
        let mut s = UavState::default();
        s.q[..3].copy_from_slice(&position);
        s
    }

    pub fn to_array(&self) -> [f64; 2 * AXES] {
        let mut a = [0.0; 2 * AXES];
        a[..AXES].copy_from_slice(&self.q);
        a[AXES..].copy_from_slice(&self.qd);
        a
    }

    pub fn from_array(a: &[f64; 2 * AXES]) -> Self {
        let mut s = UavState::default();
        s.q.copy_from_slice(&a[..AXES]);
        s.qd.copy_from_slice(&a[AXES..]);
        s
    }

    /// Copy with attitude angles wrapped to (-pi, pi].
    pub fn wrapped(&self) -> Self {
        let mut s = *self;
        for a in &mut s.q[3..] {
            *a = wrap_angle(*a);
        }
        s
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Translational forces (N) and torques (N m) applied to the airframe.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WrenchInput {
    /// `(u_x, u_y, u_z, u_psi, u_theta, u_phi)`.
    pub u: [f64; AXES],
}

impl WrenchInput {
    pub fn new(force: [f64; 3], torque: [f64; 3]) -> Self {
        let mut u = [0.0; AXES];
        u[..3].copy_from_slice(&force);
        u[3..].copy_from_slice(&torque);
        WrenchInput { u }
    }

    /// Known acceleration term `h_i` for every axis.
    pub fn known_acceleration(&self, params: &UavParams) -> [f64; AXES] {
        let inertia = params.inertia();
        let mut h = [0.0; AXES];
        for i in 0..AXES {
            h[i] = self.u[i] / inertia[i];
        }
        h[2] -= params.gravity;
        h
    }
}

/// Aggregates the four rotor thrusts into the body wrench at the given attitude.
pub fn rotor_forces_to_wrench(thrusts: [f64; 4], attitude: [f64; 3], params: &UavParams) -> Result<WrenchInput> {
    for (i, f) in thrusts.iter().enumerate() {
        if !(*f >= 0.0) {
            return Err(Error::InvalidParameter {
                name: ["F1", "F2", "F3", "F4"][i],
                value: *f,
                reason: "rotor thrust must be nonnegative",
            });
        }
    }
    ensure_finite("attitude", &attitude)?;
    let [f1, f2, f3, f4] = thrusts;
    let total = f1 + f2 + f3 + f4;
    let [psi, theta, phi] = attitude;
    let (sps, cps) = psi.sin_cos();
    let (sth, cth) = theta.sin_cos();
    let (sph, cph) = phi.sin_cos();
    Ok(WrenchInput::new(
        [
            (cps * sth * cph + sps * sph) * total,
            (sps * sth * cph - cps * sph) * total,
            cth * cph * total,
        ],
        [
            params.k / params.b * (f1 - f2 + f3 - f4),
            (f3 - f1) * params.arm_length,
            (f2 - f4) * params.arm_length,
        ],
    ))
}

/// One sinusoidal component `amplitude * sin(frequency * t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub amplitude: f64,
    /// Angular frequency (rad/s).
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Sinusoid {
    pub fn sin(amplitude: f64, frequency: f64) -> Self {
        Sinusoid { amplitude, frequency, phase: 0.0 }
    }

    pub fn cos(amplitude: f64, frequency: f64) -> Self {
        Sinusoid { amplitude, frequency, phase: 0.5 * PI }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * (self.frequency * t + self.phase).sin()
    }

    #[inline]
    pub fn rate(&self, t: f64) -> f64 {
        self.amplitude * self.frequency * (self.frequency * t + self.phase).cos()
    }
}

/// Constant plus a sum of sinusoids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicSeries {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<Sinusoid>,
}

impl HarmonicSeries {
    pub fn value(&self, t: f64) -> f64 {
        self.constant + self.terms.iter().map(|s| s.value(t)).sum::<f64>()
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.terms.iter().map(|s| s.rate(t)).sum()
    }

    /// Upper bound on `|value|`.
    pub fn bound(&self) -> f64 {
        self.constant.abs() + self.terms.iter().map(|s| s.amplitude.abs()).sum::<f64>()
    }

    /// Upper bound on `|rate|`.
    pub fn rate_bound(&self) -> f64 {
        self.terms.iter().map(|s| (s.amplitude * s.frequency).abs()).sum()
    }
}

pub type DisturbanceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// An unmodelled disturbance force or torque as a function of time.
#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Disturbance {
    Harmonic(HarmonicSeries),
    #[serde(skip)]
    Custom(DisturbanceFn),
}

impl Default for Disturbance {
    fn default() -> Self {
        Disturbance::Harmonic(HarmonicSeries::default())
    }
}

impl fmt::Debug for Disturbance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disturbance::Harmonic(h) => h.fmt(f),
            Disturbance::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Disturbance {
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Disturbance::Harmonic(h) => h.value(t),
            Disturbance::Custom(f) => f(t),
        }
    }

    pub fn harmonic(constant: f64, terms: Vec<Sinusoid>) -> Self {
        Disturbance::Harmonic(HarmonicSeries { constant, terms })
    }
}

/// Drag coefficients and unmodelled disturbances for the six axes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyModel {
    /// `(k_x, k_y, k_z, k_psi, k_theta, k_phi)`.
    #[serde(default)]
    pub drag: [f64; AXES],
    #[serde(default)]
    pub disturbances: [Disturbance; AXES],
}

impl UncertaintyModel {
    /// Drag and translational disturbances used for the uncertainty-estimation run.
    pub fn reference() -> Self {
        UncertaintyModel {
            drag: [0.01, 0.01, 0.01, 0.012, 0.012, 0.012],
            disturbances: [
                Disturbance::harmonic(0.0, vec![Sinusoid::sin(0.3, 1.0), Sinusoid::cos(0.2, 0.5)]),
                Disturbance::harmonic(0.0, vec![Sinusoid::sin(0.2, 0.5), Sinusoid::cos(0.5, 1.0)]),
                Disturbance::harmonic(0.0, vec![Sinusoid::sin(0.4, 0.6), Sinusoid::cos(0.2, 1.0)]),
                Disturbance::default(),
                Disturbance::default(),
                Disturbance::default(),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, k) in self.drag.iter().enumerate() {
            if !(*k >= 0.0 && k.is_finite()) {
                return Err(Error::config(format!("uncertainty.drag[{i}]"), "drag must be nonnegative"));
            }
        }
        Ok(())
    }

    /// Bound on the derivative of each `sigma_i` for harmonic disturbances and
    /// a bounded-acceleration trajectory (`accel_bound` on `q_i''`).
    pub fn sigma_rate_bound(&self, params: &UavParams, accel_bound: f64) -> [Option<f64>; AXES] {
        let inertia = params.inertia();
        let mut out = [None; AXES];
        for i in 0..AXES {
            if let Disturbance::Harmonic(h) = &self.disturbances[i] {
                let drag = self.drag[i] * drag_lever(i, params);
                out[i] = Some((drag * accel_bound + h.rate_bound()) / inertia[i]);
            }
        }
        out
    }

    /// The uncertainty force/torque `Delta_i - k_i' q_i'` (before division by
    /// the axis inertia).
    #[inline]
    pub fn generalized_force(&self, axis: usize, rate: f64, t: f64, params: &UavParams) -> f64 {
        self.disturbances[axis].value(t) - drag_lever(axis, params) * self.drag[axis] * rate
    }
}

// Pitch and roll drag act through the rotor arm; yaw drag does not.
#[inline]
fn drag_lever(axis: usize, params: &UavParams) -> f64 {
    if axis == 4 || axis == 5 {
        params.arm_length
    } else {
        1.0
    }
}

/// Uncertainty acceleration `sigma_i` for the 1-based axis index `i`.
pub fn sigma(axis: usize, state: &UavState, t: f64, unc: &UncertaintyModel, params: &UavParams) -> Result<f64> {
    if !(1..=AXES).contains(&axis) {
        return Err(Error::InvalidAxis(axis));
    }
    let i = axis - 1;
    Ok(unc.generalized_force(i, state.qd[i], t, params) / params.inertia()[i])
}

/// All six `sigma_i` at once.
pub fn sigma_all(state: &UavState, t: f64, unc: &UncertaintyModel, params: &UavParams) -> [f64; AXES] {
    let inertia = params.inertia();
    let mut out = [0.0; AXES];
    for i in 0..AXES {
        out[i] = unc.generalized_force(i, state.qd[i], t, params) / inertia[i];
    }
    out
}

/// Time derivative of the full state under the given wrench.
pub fn dynamics_derivative(
    state: &UavState,
    u: &WrenchInput,
    unc: &UncertaintyModel,
    params: &UavParams,
    t: f64,
) -> Result<[f64; 2 * AXES]> {
    ensure_finite("plant state", &state.q)?;
    ensure_finite("plant state", &state.qd)?;
    ensure_finite("wrench", &u.u)?;
    let h = u.known_acceleration(params);
    let s = sigma_all(state, t, unc, params);
    let mut d = [0.0; 2 * AXES];
    d[..AXES].copy_from_slice(&state.qd);
    for i in 0..AXES {
        d[AXES + i] = h[i] + s[i];
    }
    Ok(d)
}

/// Advances the plant one RK4 step, evaluating the wrench at every stage.
///
/// Pass a closure that ignores its arguments for a zero-order-held command.
pub fn step_plant<W>(
    state: &UavState,
    t: f64,
    dt: f64,
    unc: &UncertaintyModel,
    params: &UavParams,
    mut wrench: W,
) -> Result<UavState>
where
    W: FnMut(f64, &UavState) -> Result<WrenchInput>,
{
    let next = rk4_step(&state.to_array(), t, dt, |tau, x| {
        let s = UavState::from_array(x);
        let u = wrench(tau, &s)?;
        dynamics_derivative(&s, &u, unc, params, tau)
    })?;
    Ok(UavState::from_array(&next))
}
