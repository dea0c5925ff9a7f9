//! Decoupled second-order estimators for a channel with a large-error position
//! measurement and an accurate velocity measurement.
//!
//! The *signal corrector* reconstructs position and velocity from
//! `(y_o1, y_o2)`; the *uncertainty observer* reconstructs velocity and the
//! lumped model uncertainty from `(y_o2, h)` only. Neither estimator reads the
//! other's state.
//!
//! Both estimators are available in a concrete fractional-power form and in a
//! general form that accepts any feedback function satisfying the
//! finite-time-stability assumptions.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::integrate::rk4_step;

/// `|v|^alpha * sign(v)` with `sign(0) = 0`.
///
/// Computed as `exp(alpha * ln|v|)` so that negative bases never reach a
/// fractional `powf`.
pub fn falpha(v: f64, alpha: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::NonFinite("falpha argument"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha", alpha, "must lie in (0, 1]"));
    }
    Ok(sig_pow(v, alpha))
}

/// Unchecked kernel of [`falpha`].
#[inline]
pub(crate) fn sig_pow(v: f64, alpha: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        let mag = (alpha * v.abs().ln()).exp();
        if v > 0.0 {
            mag
        } else {
            -mag
        }
    }
}

fn check_open_unit(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, v, "must lie in (0, 1)"))
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, v, "must be positive"))
    }
}

/// Gains of the fractional-power signal corrector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorParams {
    pub k1: f64,
    pub k2: f64,
    pub alpha_c: f64,
    pub eps_c: f64,
}

impl CorrectorParams {
    /// Values flown in the circle-tracking experiment.
    pub const REFERENCE: CorrectorParams = CorrectorParams {
        k1: 1.0,
        k2: 30.0,
        alpha_c: 0.1,
        eps_c: 1.0 / 1.2,
    };

    pub fn new(k1: f64, k2: f64, alpha_c: f64, eps_c: f64) -> Result<Self> {
        let p = CorrectorParams { k1, k2, alpha_c, eps_c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("k1", self.k1)?;
        check_positive("k2", self.k2)?;
        check_open_unit("alpha_c", self.alpha_c)?;
        check_open_unit("eps_c", self.eps_c)
    }

    /// Exponent applied to the position innovation, `alpha_c / (2 - alpha_c)`.
    pub fn position_exponent(&self) -> f64 {
        self.alpha_c / (2.0 - self.alpha_c)
    }

    /// The corrector's feedback function `f_c(z1, z2)` in its fractional-power form.
    ///
    /// `z1` is the time-scaled position innovation `eps_c * (xhat1 - y_o1)` and
    /// `z2` the velocity innovation `xhat2 - y_o2`.
    #[inline]
    pub fn feedback(&self, z1: f64, z2: f64) -> f64 {
        -self.k1 * sig_pow(z1, self.position_exponent()) - self.k2 * sig_pow(z2, self.alpha_c)
    }
}

/// Gains of the fractional-power uncertainty observer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverParams {
    pub k3: f64,
    pub k4: f64,
    pub alpha_o: f64,
    pub eps_o: f64,
}

impl ObserverParams {
    /// Values flown in the circle-tracking experiment.
    pub const REFERENCE: ObserverParams = ObserverParams {
        k3: 20.0,
        k4: 4.0,
        alpha_o: 0.6,
        eps_o: 1.0 / 1.1,
    };

    pub fn new(k3: f64, k4: f64, alpha_o: f64, eps_o: f64) -> Result<Self> {
        let p = ObserverParams { k3, k4, alpha_o, eps_o };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("k3", self.k3)?;
        check_positive("k4", self.k4)?;
        check_open_unit("alpha_o", self.alpha_o)?;
        check_open_unit("eps_o", self.eps_o)
    }

    /// First-channel feedback `f_o1(e) = -k4 |e|^((alpha_o+1)/2) sign(e)`.
    #[inline]
    pub fn feedback_velocity(&self, e: f64) -> f64 {
        -self.k4 * sig_pow(e, 0.5 * (self.alpha_o + 1.0))
    }

    /// Second-channel feedback `f_o2(e) = -k3 |e|^alpha_o sign(e)`.
    #[inline]
    pub fn feedback_uncertainty(&self, e: f64) -> f64 {
        -self.k3 * sig_pow(e, self.alpha_o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrectorState {
    pub xhat1: f64,
    pub xhat2: f64,
}

impl CorrectorState {
    pub fn new(xhat1: f64, xhat2: f64) -> Self {
        CorrectorState { xhat1, xhat2 }
    }

    /// Starts on the first available readings.
    pub fn from_measurement(m: &AxisMeasurement) -> Self {
        CorrectorState { xhat1: m.y_o1, xhat2: m.y_o2 }
    }

    fn as_array(&self) -> [f64; 2] {
        [self.xhat1, self.xhat2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObserverState {
    pub xhat3: f64,
    /// Estimate of the lumped uncertainty acceleration.
    pub xhat4: f64,
}

impl ObserverState {
    pub fn new(xhat3: f64, xhat4: f64) -> Self {
        ObserverState { xhat3, xhat4 }
    }

    /// Starts on the first velocity reading with a zero uncertainty prior.
    pub fn from_measurement(m: &AxisMeasurement) -> Self {
        ObserverState { xhat3: m.y_o2, xhat4: 0.0 }
    }

    fn as_array(&self) -> [f64; 2] {
        [self.xhat3, self.xhat4]
    }
}

/// One axis' pair of readings at a given instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisMeasurement {
    /// Position-channel reading (may carry a large bounded error).
    pub y_o1: f64,
    /// Velocity-channel reading.
    pub y_o2: f64,
    pub t: f64,
    /// Whether `y_o1` was refreshed on this tick (false while held).
    pub y_o1_fresh: bool,
    /// Whether `y_o2` was refreshed on this tick.
    pub y_o2_fresh: bool,
}

impl AxisMeasurement {
    pub fn new(y_o1: f64, y_o2: f64, t: f64) -> Self {
        AxisMeasurement {
            y_o1,
            y_o2,
            t,
            y_o1_fresh: true,
            y_o2_fresh: true,
        }
    }
}

/// Right-hand side of the fractional-power signal corrector.
pub fn corrector_derivative(
    s: &CorrectorState,
    m: &AxisMeasurement,
    p: &CorrectorParams,
) -> Result<(f64, f64)> {
    ensure_finite("corrector input", &[s.xhat1, s.xhat2, m.y_o1, m.y_o2])?;
    let eps = p.eps_c;
    let f = p.feedback(eps * (s.xhat1 - m.y_o1), s.xhat2 - m.y_o2);
    Ok((s.xhat2, f / (eps * eps * eps)))
}

/// Right-hand side of the fractional-power uncertainty observer.
///
/// `h` is the known part of the channel's acceleration (control input and
/// other modelled terms).
pub fn observer_derivative(
    s: &ObserverState,
    y_o2: f64,
    h: f64,
    p: &ObserverParams,
) -> Result<(f64, f64)> {
    ensure_finite("observer input", &[s.xhat3, s.xhat4, y_o2, h])?;
    let eps = p.eps_o;
    let e = s.xhat3 - y_o2;
    Ok((
        s.xhat4 + p.feedback_velocity(e) / eps + h,
        p.feedback_uncertainty(e) / (eps * eps),
    ))
}

/// A corrector feedback function `f_c(z1, z2)` with a Hölder bound in `z1`.
pub struct GeneralCorrectorSpec<F> {
    pub f_c: F,
    /// Hölder exponent in (0, 1].
    pub rho: f64,
    /// Hölder constant.
    pub a: f64,
}

impl<F: Fn(f64, f64) -> f64> GeneralCorrectorSpec<F> {
    pub fn new(f_c: F, rho: f64, a: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::param("rho", rho, "must lie in (0, 1]"));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::param("a", a, "must be nonnegative"));
        }
        let origin = f_c(0.0, 0.0);
        if origin != 0.0 {
            return Err(Error::param("f_c(0, 0)", origin, "feedback must vanish at the origin"));
        }
        Ok(GeneralCorrectorSpec { f_c, rho, a })
    }

    /// Checks `|f_c(u, w) - f_c(v, w)| <= a |u - v|^rho` on the given triples
    /// `(u, v, w)`; returns the first violating triple.
    pub fn holder_violation(&self, samples: &[(f64, f64, f64)]) -> Option<(f64, f64, f64)> {
        samples.iter().copied().find(|&(u, v, w)| {
            let lhs = ((self.f_c)(u, w) - (self.f_c)(v, w)).abs();
            let rhs = self.a * (u - v).abs().powf(self.rho);
            lhs > rhs * (1.0 + 1e-12) + 1e-300
        })
    }
}

impl GeneralCorrectorSpec<Box<dyn Fn(f64, f64) -> f64 + Send + Sync>> {
    /// The fractional-power feedback as a general spec, with its Hölder
    /// constant `2^(1-rho) k1`.
    pub fn fractional(p: CorrectorParams) -> Self {
        let rho = p.position_exponent();
        GeneralCorrectorSpec {
            f_c: Box::new(move |z1, z2| p.feedback(z1, z2)),
            rho,
            a: 2f64.powf(1.0 - rho) * p.k1,
        }
    }
}

/// Observer feedback pair `(f_o1, f_o2)`, both vanishing at zero.
pub struct GeneralObserverSpec<F1, F2> {
    pub f_o1: F1,
    pub f_o2: F2,
}

impl<F1: Fn(f64) -> f64, F2: Fn(f64) -> f64> GeneralObserverSpec<F1, F2> {
    pub fn new(f_o1: F1, f_o2: F2) -> Result<Self> {
        let (a, b) = (f_o1(0.0), f_o2(0.0));
        if a != 0.0 {
            return Err(Error::param("f_o1(0)", a, "feedback must vanish at zero"));
        }
        if b != 0.0 {
            return Err(Error::param("f_o2(0)", b, "feedback must vanish at zero"));
        }
        Ok(GeneralObserverSpec { f_o1, f_o2 })
    }
}

pub type BoxedFeedback = Box<dyn Fn(f64) -> f64 + Send + Sync>;

impl GeneralObserverSpec<BoxedFeedback, BoxedFeedback> {
    pub fn fractional(p: ObserverParams) -> Self {
        GeneralObserverSpec {
            f_o1: Box::new(move |e| p.feedback_velocity(e)),
            f_o2: Box::new(move |e| p.feedback_uncertainty(e)),
        }
    }
}

/// Right-hand side of the corrector with a pluggable feedback function.
pub fn general_corrector_derivative<F: Fn(f64, f64) -> f64>(
    s: &CorrectorState,
    m: &AxisMeasurement,
    spec: &GeneralCorrectorSpec<F>,
    eps_c: f64,
) -> Result<(f64, f64)> {
    ensure_finite("corrector input", &[s.xhat1, s.xhat2, m.y_o1, m.y_o2, eps_c])?;
    let f = (spec.f_c)(eps_c * (s.xhat1 - m.y_o1), s.xhat2 - m.y_o2);
    Ok((s.xhat2, f / (eps_c * eps_c * eps_c)))
}

/// Right-hand side of the observer with pluggable feedback functions.
pub fn general_observer_derivative<F1: Fn(f64) -> f64, F2: Fn(f64) -> f64>(
    s: &ObserverState,
    y_o2: f64,
    h: f64,
    spec: &GeneralObserverSpec<F1, F2>,
    eps_o: f64,
) -> Result<(f64, f64)> {
    ensure_finite("observer input", &[s.xhat3, s.xhat4, y_o2, h, eps_o])?;
    let e = s.xhat3 - y_o2;
    Ok((
        s.xhat4 + (spec.f_o1)(e) / eps_o + h,
        (spec.f_o2)(e) / (eps_o * eps_o),
    ))
}

/// One fixed RK4 step of the corrector with the measurement held over the step.
pub fn step_corrector(
    s: &CorrectorState,
    m: &AxisMeasurement,
    p: &CorrectorParams,
    dt: f64,
) -> Result<CorrectorState> {
    check_positive("dt", dt)?;
    let next = rk4_step(&s.as_array(), m.t, dt, |_, x| {
        let (a, b) = corrector_derivative(&CorrectorState::new(x[0], x[1]), m, p)?;
        Ok([a, b])
    })?;
    ensure_finite("corrector state", &next)?;
    Ok(CorrectorState::new(next[0], next[1]))
}

/// One fixed RK4 step of the observer with `y_o2` and `h` held over the step.
pub fn step_observer(
    s: &ObserverState,
    y_o2: f64,
    h: f64,
    p: &ObserverParams,
    dt: f64,
) -> Result<ObserverState> {
    check_positive("dt", dt)?;
    let next = rk4_step(&s.as_array(), 0.0, dt, |_, x| {
        let (a, b) = observer_derivative(&ObserverState::new(x[0], x[1]), y_o2, h, p)?;
        Ok([a, b])
    })?;
    ensure_finite("observer state", &next)?;
    Ok(ObserverState::new(next[0], next[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const C6: CorrectorParams = CorrectorParams::REFERENCE;
    const O6: ObserverParams = ObserverParams::REFERENCE;

    fn meas(y1: f64, y2: f64) -> AxisMeasurement {
        AxisMeasurement::new(y1, y2, 0.0)
    }

    #[test]
    fn falpha_examples() {
        assert_eq!(falpha(0.0, 0.5).unwrap(), 0.0);
        assert!((falpha(-1.0, 0.3).unwrap() + 1.0).abs() < 1e-15);
        assert!((falpha(4.0, 0.5).unwrap() - 2.0).abs() < 1e-14);
        assert!(falpha(f64::NAN, 0.5).is_err());
        assert!(falpha(f64::INFINITY, 0.5).is_err());
        assert!(falpha(1.0, 0.0).is_err());
        assert!(falpha(1.0, 1.5).is_err());
    }

    #[test]
    fn params_reject_out_of_range() {
        assert!(CorrectorParams::new(0.0, 1.0, 0.5, 0.5).is_err());
        assert!(CorrectorParams::new(1.0, 1.0, 1.0, 0.5).is_err());
        assert!(CorrectorParams::new(1.0, 1.0, 0.5, 1.0).is_err());
        assert!(ObserverParams::new(1.0, -1.0, 0.5, 0.5).is_err());
        assert!(ObserverParams::new(1.0, 1.0, 0.5, 0.0).is_err());
        assert!(C6.validate().is_ok() && O6.validate().is_ok());
    }

    #[test]
    fn corrector_derivative_examples() {
        let d = corrector_derivative(&CorrectorState::new(0.0, 0.0), &meas(0.0, 0.0), &C6).unwrap();
        assert_eq!(d, (0.0, 0.0));

        // extended-precision reference: -(1/1.2)^(0.1/1.9) / (1/1.2)^3
        let d = corrector_derivative(&CorrectorState::new(1.0, 0.0), &meas(0.0, 0.0), &C6).unwrap();
        assert_eq!(d.0, 0.0);
        assert!((d.1 - -1.711_497_638_103_480_3).abs() < 1e-12, "{}", d.1);

        let d = corrector_derivative(&CorrectorState::new(0.0, 1.0), &meas(0.0, 0.0), &C6).unwrap();
        assert_eq!(d.0, 1.0);
        assert!((d.1 - -51.84).abs() < 1e-11, "{}", d.1);

        assert!(corrector_derivative(&CorrectorState::new(f64::NAN, 0.0), &meas(0.0, 0.0), &C6).is_err());
    }

    #[test]
    fn observer_derivative_examples() {
        let d = observer_derivative(&ObserverState::new(0.7, 0.0), 0.7, 0.0, &O6).unwrap();
        assert_eq!(d, (0.0, 0.0));

        let d = observer_derivative(&ObserverState::new(1.0, 2.0), 0.0, 0.0, &O6).unwrap();
        assert!((d.0 - -2.4).abs() < 1e-12);
        assert!((d.1 - -24.2).abs() < 1e-12);

        let d = observer_derivative(&ObserverState::new(0.3, 5.0), 0.3, -3.0, &O6).unwrap();
        assert_eq!(d, (2.0, 0.0));

        assert!(observer_derivative(&ObserverState::new(0.0, 0.0), 0.0, f64::NAN, &O6).is_err());
    }

    #[test]
    fn general_corrector_examples() {
        let zero = GeneralCorrectorSpec::new(|_, _| 0.0, 1.0, 0.0).unwrap();
        let d = general_corrector_derivative(&CorrectorState::new(3.0, -2.0), &meas(1.0, 1.0), &zero, 0.5)
            .unwrap();
        assert_eq!(d, (-2.0, 0.0));

        let frac = GeneralCorrectorSpec::fractional(C6);
        let d = general_corrector_derivative(&CorrectorState::new(1.0, 0.0), &meas(0.0, 0.0), &frac, C6.eps_c)
            .unwrap();
        assert!((d.1 - -1.711_497_638_103_480_3).abs() < 1e-12);

        let lin = GeneralCorrectorSpec::new(|a, b| -a - b, 1.0, 1.0).unwrap();
        let d = general_corrector_derivative(&CorrectorState::new(1.0, 1.0), &meas(0.0, 0.0), &lin, 0.5)
            .unwrap();
        assert_eq!(d, (1.0, -12.0));

        assert!(GeneralCorrectorSpec::new(|_, _| 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn general_observer_examples() {
        let zero = GeneralObserverSpec::new(|_| 0.0, |_| 0.0).unwrap();
        let d = general_observer_derivative(&ObserverState::new(1.0, 2.0), 0.0, 0.5, &zero, 0.3).unwrap();
        assert_eq!(d, (2.5, 0.0));

        let frac = GeneralObserverSpec::fractional(O6);
        let d = general_observer_derivative(&ObserverState::new(1.0, 2.0), 0.0, 0.0, &frac, O6.eps_o).unwrap();
        assert!((d.0 - -2.4).abs() < 1e-12 && (d.1 - -24.2).abs() < 1e-12);

        let lin = GeneralObserverSpec::new(|e| -e, |e| -e).unwrap();
        let d = general_observer_derivative(&ObserverState::new(2.0, 0.0), 0.0, 0.0, &lin, 0.5).unwrap();
        assert_eq!(d, (-4.0, -8.0));

        assert!(GeneralObserverSpec::new(|e: f64| e + 1.0, |e| e).is_err());
    }

    #[test]
    fn fractional_spec_holder_bound_holds() {
        let spec = GeneralCorrectorSpec::fractional(C6);
        let samples: Vec<_> = (0..2000)
            .map(|i| {
                let u = ((i * 7919) % 2001) as f64 / 100.0 - 10.0;
                let v = ((i * 104_729) % 1999) as f64 / 100.0 - 10.0;
                (u, v, (i % 13) as f64 - 6.0)
            })
            .collect();
        assert_eq!(spec.holder_violation(&samples), None);
    }

    /// Fine-step reference: plain RK4 at 1e-6 s written independently of the
    /// crate integrator.
    fn fine_corrector(mut x: [f64; 2], y1: f64, y2: f64, p: &CorrectorParams, dur: f64) -> [f64; 2] {
        let h = 1e-6;
        let f = |x: [f64; 2]| {
            let e = p.eps_c;
            let b = p.alpha_c / (2.0 - p.alpha_c);
            let z1 = e * (x[0] - y1);
            let z2 = x[1] - y2;
            let t1 = p.k1 * z1.abs().powf(b) * z1.signum();
            let t2 = if z2 == 0.0 { 0.0 } else { p.k2 * z2.abs().powf(p.alpha_c) * z2.signum() };
            [x[1], (-t1 - t2) / (e * e * e)]
        };
        for _ in 0..(dur / h).round() as usize {
            let a = f(x);
            let b = f([x[0] + h / 2.0 * a[0], x[1] + h / 2.0 * a[1]]);
            let c = f([x[0] + h / 2.0 * b[0], x[1] + h / 2.0 * b[1]]);
            let d = f([x[0] + h * c[0], x[1] + h * c[1]]);
            x[0] += h / 6.0 * (a[0] + 2.0 * b[0] + 2.0 * c[0] + d[0]);
            x[1] += h / 6.0 * (a[1] + 2.0 * b[1] + 2.0 * c[1] + d[1]);
        }
        x
    }

    #[test]
    fn step_corrector_matches_fine_reference() {
        let eq = CorrectorState::new(2.0, 0.0);
        assert_eq!(step_corrector(&eq, &meas(2.0, 0.0), &C6, 0.01).unwrap(), eq);

        // Velocity innovation stays away from zero over the step.
        let s = step_corrector(&CorrectorState::new(1.0, 0.5), &meas(0.0, 0.0), &C6, 0.001).unwrap();
        let r = fine_corrector([1.0, 0.5], 0.0, 0.0, &C6, 0.001);
        assert!((s.xhat1 - r[0]).abs() < 1e-6 && (s.xhat2 - r[1]).abs() < 1e-6, "{s:?} vs {r:?}");

        // Starting at zero velocity innovation the fine path slides on
        // xhat2 = 0 while one coarse step overshoots through the
        // non-Lipschitz point; position still agrees closely.
        let s = step_corrector(&CorrectorState::new(1.0, 0.0), &meas(0.0, 0.0), &C6, 0.001).unwrap();
        let r = fine_corrector([1.0, 0.0], 0.0, 0.0, &C6, 0.001);
        assert!((s.xhat1 - r[0]).abs() < 1e-5, "{s:?} vs {r:?}");
        assert!((s.xhat2 - r[1]).abs() < 5e-3, "{s:?} vs {r:?}");

        assert!(step_corrector(&eq, &meas(2.0, 0.5), &C6, 0.0).is_err());
    }

    #[test]
    fn step_corrector_local_error_is_fifth_order() {
        // Smooth regime (innovation bounded away from zero) with a linear-ish
        // feedback so the local truncation error is clean.
        let p = CorrectorParams::new(1.0, 2.0, 0.9, 0.9).unwrap();
        let s0 = CorrectorState::new(1.0, 3.0);
        let m = meas(-5.0, -4.0);
        let local = |dt: f64| {
            let one = step_corrector(&s0, &m, &p, dt).unwrap();
            let half = step_corrector(&step_corrector(&s0, &m, &p, dt / 2.0).unwrap(), &m, &p, dt / 2.0).unwrap();
            (one.xhat2 - half.xhat2).abs()
        };
        let (e1, e2) = (local(0.02), local(0.01));
        let ratio = e1 / e2;
        assert!(ratio > 24.0 && ratio < 40.0, "ratio {ratio}");
    }

    fn fine_observer(mut x: [f64; 2], y2: f64, h: f64, p: &ObserverParams, dur: f64) -> [f64; 2] {
        let dt = 1e-6;
        let f = |x: [f64; 2]| {
            let e = x[0] - y2;
            let s = if e == 0.0 { 0.0 } else { e.signum() };
            [
                x[1] - p.k4 / p.eps_o * e.abs().powf((p.alpha_o + 1.0) / 2.0) * s + h,
                -p.k3 / (p.eps_o * p.eps_o) * e.abs().powf(p.alpha_o) * s,
            ]
        };
        for _ in 0..(dur / dt).round() as usize {
            let a = f(x);
            let b = f([x[0] + dt / 2.0 * a[0], x[1] + dt / 2.0 * a[1]]);
            let c = f([x[0] + dt / 2.0 * b[0], x[1] + dt / 2.0 * b[1]]);
            let d = f([x[0] + dt * c[0], x[1] + dt * c[1]]);
            x[0] += dt / 6.0 * (a[0] + 2.0 * b[0] + 2.0 * c[0] + d[0]);
            x[1] += dt / 6.0 * (a[1] + 2.0 * b[1] + 2.0 * c[1] + d[1]);
        }
        x
    }

    #[test]
    fn step_observer_examples() {
        let eq = ObserverState::new(0.4, 0.0);
        assert_eq!(step_observer(&eq, 0.4, 0.0, &O6, 0.001).unwrap(), eq);

        let s = step_observer(&ObserverState::new(1.0, 2.0), 0.0, 0.0, &O6, 0.001).unwrap();
        let r = fine_observer([1.0, 2.0], 0.0, 0.0, &O6, 0.001);
        assert!((s.xhat3 - r[0]).abs() < 1e-6 && (s.xhat4 - r[1]).abs() < 1e-6);

        for innov in [-2.0, -0.01, 0.01, 3.0] {
            let s = step_observer(&ObserverState::new(innov, 0.0), 0.0, 0.0, &O6, 1e-4).unwrap();
            assert_eq!(s.xhat4.signum(), -innov.signum());
        }
    }

    #[test]
    fn long_run_stays_finite() {
        let mut c = CorrectorState::new(5.0, -3.0);
        let mut o = ObserverState::new(2.0, 1.0);
        for i in 0..1_000_000u32 {
            let t = i as f64 * 1e-3;
            let y2 = (t * 0.7).sin();
            let m = AxisMeasurement::new(20.0 + (t * 0.1).cos(), y2, t);
            c = step_corrector(&c, &m, &C6, 1e-3).unwrap();
            o = step_observer(&o, y2, 0.3 * t.sin(), &O6, 1e-3).unwrap();
        }
        assert!(c.xhat1.is_finite() && c.xhat2.is_finite() && o.xhat3.is_finite() && o.xhat4.is_finite());
    }

    proptest! {
        #[test]
        fn falpha_is_odd_and_monotone(v in -1e6f64..1e6, w in -1e6f64..1e6, a in 0.01f64..=1.0) {
            let fv = falpha(v, a).unwrap();
            prop_assert_eq!(falpha(-v, a).unwrap(), -fv);
            let fw = falpha(w, a).unwrap();
            if v <= w { prop_assert!(fv <= fw); }
        }

        #[test]
        fn general_forms_reproduce_concrete_bitwise(
            x1 in -50f64..50.0, x2 in -10f64..10.0, y1 in -50f64..50.0, y2 in -10f64..10.0, h in -20f64..20.0,
        ) {
            let m = AxisMeasurement::new(y1, y2, 0.0);
            let c = CorrectorState::new(x1, x2);
            let spec = GeneralCorrectorSpec::fractional(C6);
            prop_assert_eq!(
                corrector_derivative(&c, &m, &C6).unwrap(),
                general_corrector_derivative(&c, &m, &spec, C6.eps_c).unwrap()
            );
            let o = ObserverState::new(x2, x1);
            let ospec = GeneralObserverSpec::fractional(O6);
            prop_assert_eq!(
                observer_derivative(&o, y2, h, &O6).unwrap(),
                general_observer_derivative(&o, y2, h, &ospec, O6.eps_o).unwrap()
            );
        }
    }
}
