//! Describing-function linearization of the corrector and observer, their
//! natural frequencies, and the parameter-selection rules.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{CorrectorParams, ObserverParams};

const SIMPSON_TOL: f64 = 1e-10;
const SIMPSON_MAX_DEPTH: u32 = 50;

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, SIMPSON_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// `Omega(alpha) = (2/pi) * integral_0^pi |sin x|^(alpha + 1) dx`, the
/// amplitude-independent factor of the describing function of
/// `|v|^alpha sign(v)`.
pub fn omega_coefficient(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha", alpha, "must lie in (0, 1]"));
    }
    let p = alpha + 1.0;
    // symmetric about pi/2
    let half = adaptive_simpson(&|x: f64| x.sin().powf(p), 0.0, 0.5 * PI, 0.5 * SIMPSON_TOL);
    Ok(4.0 / PI * half)
}

/// Describing function of the fractional-power nonlinearity at amplitude `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescribingFunctionResult {
    pub omega_coeff: f64,
    pub equivalent_gain: f64,
    pub amplitude: f64,
}

pub fn describing_function(alpha: f64, amplitude: f64) -> Result<DescribingFunctionResult> {
    check_amplitude("amplitude", amplitude)?;
    let omega_coeff = omega_coefficient(alpha)?;
    Ok(DescribingFunctionResult {
        omega_coeff,
        equivalent_gain: omega_coeff / amplitude.powf(1.0 - alpha),
        amplitude,
    })
}

fn check_amplitude(name: &'static str, a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, a, "amplitude must be positive"))
    }
}

/// Quasi-linear error dynamics `[[0, 1], [-stiffness, -damping]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearizedSystem {
    pub matrix: [[f64; 2]; 2],
    pub natural_frequency: f64,
}

impl LinearizedSystem {
    fn companion(stiffness: f64, damping: f64) -> Self {
        LinearizedSystem {
            matrix: [[0.0, 1.0], [-stiffness, -damping]],
            natural_frequency: stiffness.sqrt(),
        }
    }

    pub fn stiffness(&self) -> f64 {
        -self.matrix[1][0]
    }

    pub fn damping(&self) -> f64 {
        -self.matrix[1][1]
    }

    /// Eigenvalues of the 2x2 state matrix.
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let [[a, b], [c, d]] = self.matrix;
        let tr = a + d;
        let det = a * d - b * c;
        let disc = Complex64::new(tr * tr / 4.0 - det, 0.0).sqrt();
        let half = Complex64::new(tr / 2.0, 0.0);
        [half + disc, half - disc]
    }

    pub fn is_hurwitz(&self) -> bool {
        self.eigenvalues().iter().all(|l| l.re < 0.0)
    }
}

/// Natural frequency of the linearized corrector at position-error amplitude `a_c1`.
pub fn corrector_natural_frequency(p: &CorrectorParams, a_c1: f64) -> Result<f64> {
    check_amplitude("A_c1", a_c1)?;
    p.validate_for_analysis()?;
    let a = p.alpha_c;
    let om = omega_coefficient(a / (2.0 - a))?;
    Ok((om * p.k1).sqrt()
        / (p.eps_c.powf((3.0 - 2.0 * a) / (2.0 - a)) * a_c1.powf((1.0 - a) / (2.0 - a))))
}

/// Natural frequency of the linearized observer at velocity-error amplitude `a_o`.
pub fn observer_natural_frequency(p: &ObserverParams, a_o: f64) -> Result<f64> {
    check_amplitude("A_o", a_o)?;
    p.validate_for_analysis()?;
    let a = p.alpha_o;
    Ok((omega_coefficient(a)? * p.k3).sqrt() / (p.eps_o * a_o.powf((1.0 - a) / 2.0)))
}

pub fn linearize_corrector(p: &CorrectorParams, a_c1: f64, a_c2: f64) -> Result<LinearizedSystem> {
    check_amplitude("A_c1", a_c1)?;
    check_amplitude("A_c2", a_c2)?;
    p.validate_for_analysis()?;
    let a = p.alpha_c;
    let stiffness = p.k1 * omega_coefficient(a / (2.0 - a))?
        / (p.eps_c.powf((6.0 - 4.0 * a) / (2.0 - a)) * a_c1.powf((2.0 - 2.0 * a) / (2.0 - a)));
    let damping = p.k2 * omega_coefficient(a)? / (p.eps_c.powi(3) * a_c2.powf(1.0 - a));
    Ok(LinearizedSystem::companion(stiffness, damping))
}

pub fn linearize_observer(p: &ObserverParams, a_o: f64) -> Result<LinearizedSystem> {
    check_amplitude("A_o", a_o)?;
    p.validate_for_analysis()?;
    let a = p.alpha_o;
    let damping = p.k4 * omega_coefficient(0.5 * (1.0 + a))? / (p.eps_o * a_o.powf(0.5 * (1.0 - a)));
    let stiffness = p.k3 * omega_coefficient(a)? / (p.eps_o * p.eps_o * a_o.powf(1.0 - a));
    Ok(LinearizedSystem::companion(stiffness, damping))
}

// The describing-function formulas stay meaningful at alpha = 1 and eps = 1
// (the linear limit), so analysis accepts the closed upper bound.
trait AnalysisRange {
    fn validate_for_analysis(&self) -> Result<()>;
}

fn in_half_open(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, v, "must lie in (0, 1]"))
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, v, "must be positive"))
    }
}

impl AnalysisRange for CorrectorParams {
    fn validate_for_analysis(&self) -> Result<()> {
        positive("k1", self.k1)?;
        positive("k2", self.k2)?;
        in_half_open("alpha_c", self.alpha_c)?;
        in_half_open("eps_c", self.eps_c)
    }
}

impl AnalysisRange for ObserverParams {
    fn validate_for_analysis(&self) -> Result<()> {
        positive("k3", self.k3)?;
        positive("k4", self.k4)?;
        in_half_open("alpha_o", self.alpha_o)?;
        in_half_open("eps_o", self.eps_o)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamValidationReport {
    pub stable: bool,
    pub oscillation_free: bool,
    pub messages: Vec<String>,
}

fn open_unit(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

pub fn validate_corrector_params(p: &CorrectorParams) -> ParamValidationReport {
    let mut messages = Vec::new();
    for (name, v) in [("k1", p.k1), ("k2", p.k2)] {
        if !(v > 0.0) {
            messages.push(format!("{name} = {v} must be positive"));
        }
    }
    for (name, v) in [("eps_c", p.eps_c), ("alpha_c", p.alpha_c)] {
        if !open_unit(v) {
            messages.push(format!("{name} = {v} must lie in (0, 1)"));
        }
    }
    let stable = messages.is_empty();
    let mut oscillation_free = false;
    if stable {
        let bound = 4.0 * p.eps_c.powf(4.0 * p.alpha_c) * p.k1;
        oscillation_free = p.k2 * p.k2 >= bound;
        if !oscillation_free {
            messages.push(format!(
                "warning: k2^2 = {:.6} < 4 eps_c^(4 alpha_c) k1 = {bound:.6}; transients may oscillate",
                p.k2 * p.k2
            ));
        }
    }
    ParamValidationReport { stable, oscillation_free, messages }
}

pub fn validate_observer_params(p: &ObserverParams) -> ParamValidationReport {
    let mut messages = Vec::new();
    for (name, v) in [("k3", p.k3), ("k4", p.k4)] {
        if !(v > 0.0) {
            messages.push(format!("{name} = {v} must be positive"));
        }
    }
    for (name, v) in [("eps_o", p.eps_o), ("alpha_o", p.alpha_o)] {
        if !open_unit(v) {
            messages.push(format!("{name} = {v} must lie in (0, 1)"));
        }
    }
    let stable = messages.is_empty();
    let mut oscillation_free = false;
    if stable {
        oscillation_free = p.k4 * p.k4 >= 4.0 * p.k3;
        if !oscillation_free {
            messages.push(format!(
                "warning: k4^2 = {:.6} < 4 k3 = {:.6}; transients may oscillate",
                p.k4 * p.k4,
                4.0 * p.k3
            ));
        }
    }
    ParamValidationReport { stable, oscillation_free, messages }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    None,
    Low,
    Moderate,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increase,
    Decrease,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Adjustment {
    pub parameter: &'static str,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Advice {
    pub adjustments: Vec<Adjustment>,
    pub natural_frequency: f64,
    pub text: String,
}

/// Which estimator an [`Advice`] concerns.
#[derive(Debug, Clone, Copy)]
pub enum EstimatorParams {
    Corrector(CorrectorParams),
    Observer(ObserverParams),
}

/// Reference amplitude at which advisory frequencies are quoted.
pub const REFERENCE_AMPLITUDE: f64 = 1.0;

/// Bandwidth guidance: under heavier noise the time-scale parameter and/or
/// the exponent should grow, narrowing the low-pass bandwidth.
pub fn filtering_advice(p: EstimatorParams, noise: NoiseLevel) -> Result<Advice> {
    let (eps, alpha, wn, label) = match p {
        EstimatorParams::Corrector(c) => (
            "eps_c",
            "alpha_c",
            corrector_natural_frequency(&c, REFERENCE_AMPLITUDE)?,
            "corrector",
        ),
        EstimatorParams::Observer(o) => (
            "eps_o",
            "alpha_o",
            observer_natural_frequency(&o, REFERENCE_AMPLITUDE)?,
            "observer",
        ),
    };
    let adjustments = match noise {
        NoiseLevel::None | NoiseLevel::Low => Vec::new(),
        NoiseLevel::Moderate | NoiseLevel::High => vec![
            Adjustment { parameter: eps, direction: Direction::Increase },
            Adjustment { parameter: alpha, direction: Direction::Increase },
        ],
    };
    let text = if adjustments.is_empty() {
        format!("{label}: natural frequency {wn:.4} rad/s at unit amplitude; no change advised")
    } else {
        format!(
            "{label}: natural frequency {wn:.4} rad/s at unit amplitude; increase {eps} and/or {alpha} \
             to narrow the bandwidth under {noise:?} noise"
        )
    };
    Ok(Advice { adjustments, natural_frequency: wn, text })
}

/// Guidance for a larger position-channel error bound: the error effect
/// scales with `k1 * L_d^(alpha_c / (2 - alpha_c))`, so `k1` and `alpha_c`
/// should come down.
pub fn sensing_error_advice(p: &CorrectorParams, l_d: f64) -> Result<Advice> {
    if !(l_d >= 0.0 && l_d.is_finite()) {
        return Err(Error::param("L_d", l_d, "must be nonnegative"));
    }
    let wn = corrector_natural_frequency(p, REFERENCE_AMPLITUDE)?;
    let effect = p.k1 * l_d.powf(p.position_exponent());
    let adjustments = if l_d > 0.0 {
        vec![
            Adjustment { parameter: "k1", direction: Direction::Decrease },
            Adjustment { parameter: "alpha_c", direction: Direction::Decrease },
        ]
    } else {
        Vec::new()
    };
    let text = if adjustments.is_empty() {
        "corrector: no position-channel error; no change advised".to_string()
    } else {
        format!(
            "corrector: error effect k1*L_d^(alpha_c/(2-alpha_c)) = {effect:.4} for L_d = {l_d}; \
             decrease k1 and/or alpha_c as L_d grows"
        )
    };
    Ok(Advice { adjustments, natural_frequency: wn, text })
}

#[cfg(test)]
mod tests {
    use super::*;

    const C6: CorrectorParams = CorrectorParams::REFERENCE;
    const O6: ObserverParams = ObserverParams::REFERENCE;

    #[test]
    fn omega_examples() {
        assert!((omega_coefficient(1.0).unwrap() - 1.0).abs() < 1e-9);
        // (2/pi) B(1.25, 0.5), 30-digit reference
        assert!((omega_coefficient(0.5).unwrap() - 1.112_835_788_898_764_2).abs() < 1e-9);
        assert!((omega_coefficient(1e-6).unwrap() - 4.0 / PI).abs() < 1e-3);
        assert!(omega_coefficient(0.0).is_err());
        assert!(omega_coefficient(1.2).is_err());
    }

    #[test]
    fn omega_monotone_and_bounded_on_grid() {
        let mut prev = f64::INFINITY;
        for i in 1..=100 {
            let a = i as f64 / 100.0;
            let om = omega_coefficient(a).unwrap();
            assert!(om >= 1.0 - 1e-12 && om < 4.0 / PI, "alpha {a}: {om}");
            assert!(om < prev);
            prev = om;
        }
    }

    #[test]
    fn corrector_frequency_examples() {
        // quadrature oracle: Omega(0.1/1.9) = 1.2531439229377684
        let w = corrector_natural_frequency(&C6, 1.0).unwrap();
        assert!((w - 1.464_497_478_424_500_5).abs() < 1e-8, "{w}");

        let lin = CorrectorParams { alpha_c: 1.0, ..C6 };
        let w1 = corrector_natural_frequency(&lin, 1.0).unwrap();
        assert!((w1 - 1.0 / C6.eps_c).abs() < 1e-9);
        assert!((corrector_natural_frequency(&lin, 7.0).unwrap() - w1).abs() < 1e-12);

        let ratio = corrector_natural_frequency(&C6, 0.5).unwrap() / w;
        assert!((ratio - 2f64.powf(0.9 / 1.9)).abs() < 1e-12);
        assert!(corrector_natural_frequency(&C6, 0.0).is_err());
    }

    #[test]
    fn observer_frequency_examples() {
        let lin = ObserverParams { alpha_o: 1.0, ..O6 };
        let w = observer_natural_frequency(&lin, 3.0).unwrap();
        assert!((w - 20f64.sqrt() * 1.1).abs() < 1e-9);

        // Omega(0.6) = 1.0872931957198433 by quadrature
        let w = observer_natural_frequency(&O6, 1.0).unwrap();
        assert!((w - 5.129_570_677_592_834).abs() < 1e-8, "{w}");

        let ratio = w / observer_natural_frequency(&O6, 16.0).unwrap();
        assert!((ratio - 16f64.powf(0.2)).abs() < 1e-12);
        assert!(observer_natural_frequency(&O6, -1.0).is_err());
    }

    #[test]
    fn linearized_corrector() {
        let lin = CorrectorParams { alpha_c: 1.0, ..C6 };
        let sys = linearize_corrector(&lin, 2.0, 3.0).unwrap();
        let e3 = C6.eps_c.powi(3);
        assert!((sys.stiffness() - C6.k1 / (C6.eps_c * C6.eps_c)).abs() < 1e-9);
        assert!((sys.damping() - C6.k2 / e3).abs() < 1e-9);

        let sys = linearize_corrector(&C6, 1.0, 1.0).unwrap();
        assert!(sys.is_hurwitz());
        let w = corrector_natural_frequency(&C6, 1.0).unwrap();
        assert!((sys.natural_frequency - w).abs() < 1e-9);
        assert!(linearize_corrector(&C6, 1.0, 0.0).is_err());
    }

    #[test]
    fn linearized_observer() {
        let lin = ObserverParams { alpha_o: 1.0, ..O6 };
        let sys = linearize_observer(&lin, 5.0).unwrap();
        assert!((sys.damping() - O6.k4 / O6.eps_o).abs() < 1e-9);
        assert!((sys.stiffness() - O6.k3 / (O6.eps_o * O6.eps_o)).abs() < 1e-9);

        let sys = linearize_observer(&O6, 1.0).unwrap();
        assert!(sys.is_hurwitz());
        assert!((sys.natural_frequency - observer_natural_frequency(&O6, 1.0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn unit_linear_systems_match_quadratic_roots() {
        for (k1, k2) in [(1.0, 30.0), (4.0, 4.0), (2.5, 1.0)] {
            let p = CorrectorParams { k1, k2, alpha_c: 1.0, eps_c: 1.0 };
            let ev = linearize_corrector(&p, 1.0, 1.0).unwrap().eigenvalues();
            let disc = Complex64::new(k2 * k2 - 4.0 * k1, 0.0).sqrt();
            let roots = [(-k2 + disc) / 2.0, (-k2 - disc) / 2.0];
            for (a, b) in ev.iter().zip(roots.iter()) {
                // the (4, 4) pair is a double root, where sqrt amplifies rounding
                assert!((a - b).norm() < 1e-7, "{ev:?} vs {roots:?}");
            }
        }
    }

    #[test]
    fn corrector_validator_examples() {
        let r = validate_corrector_params(&C6);
        assert!(r.stable && r.oscillation_free && r.messages.is_empty());

        let r = validate_corrector_params(&CorrectorParams { k1: -1.0, ..C6 });
        assert!(!r.stable && !r.oscillation_free);

        let r = validate_corrector_params(&CorrectorParams { k1: 1.0, k2: 0.1, eps_c: 0.9, alpha_c: 0.5 });
        assert!(r.stable && !r.oscillation_free);

        let r = validate_corrector_params(&CorrectorParams { k1: f64::NAN, ..C6 });
        assert!(!r.stable);
    }

    #[test]
    fn observer_validator_examples() {
        let r = validate_observer_params(&O6);
        assert!(r.stable && !r.oscillation_free);
        assert!(r.messages[0].contains("warning"));

        let r = validate_observer_params(&ObserverParams { k3: 4.0, k4: 4.0, ..O6 });
        assert!(r.oscillation_free);

        let r = validate_observer_params(&ObserverParams { k3: 0.0, ..O6 });
        assert!(!r.stable);
    }

    #[test]
    fn advice_directions() {
        let a = filtering_advice(EstimatorParams::Corrector(C6), NoiseLevel::High).unwrap();
        assert!(a.adjustments.contains(&Adjustment { parameter: "eps_c", direction: Direction::Increase }));
        assert!(a.adjustments.contains(&Adjustment { parameter: "alpha_c", direction: Direction::Increase }));
        assert!(a.text.contains("1.4645"));

        let a = filtering_advice(EstimatorParams::Observer(O6), NoiseLevel::None).unwrap();
        assert!(a.adjustments.is_empty());

        let a = sensing_error_advice(&C6, 40.0).unwrap();
        assert!(a.adjustments.contains(&Adjustment { parameter: "k1", direction: Direction::Decrease }));
        assert!(a.adjustments.contains(&Adjustment { parameter: "alpha_c", direction: Direction::Decrease }));
    }
}
