//! Fixed-step classical Runge-Kutta integration shared by every simulated
//! subsystem (plant, corrector, observer).

use crate::error::Result;

/// Advances `state` from `t` to `t + dt` with one fourth-order Runge-Kutta step.
///
/// The derivative callback may fail (non-finite inputs); the first failure
/// aborts the step.
pub fn rk4_step<const N: usize, F>(state: &[f64; N], t: f64, dt: f64, mut deriv: F) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let k1 = deriv(t, state)?;
    let k2 = deriv(t + 0.5 * dt, &axpy(state, 0.5 * dt, &k1))?;
    let k3 = deriv(t + 0.5 * dt, &axpy(state, 0.5 * dt, &k2))?;
    let k4 = deriv(t + dt, &axpy(state, dt, &k3))?;
    let mut out = *state;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

#[inline]
fn axpy<const N: usize>(x: &[f64; N], a: f64, y: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += a * y[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_fourth_order() {
        // y' = -y, y(0) = 1
        let run = |dt: f64| {
            let steps = (1.0 / dt).round() as usize;
            let mut y = [1.0];
            for i in 0..steps {
                y = rk4_step(&y, i as f64 * dt, dt, |_, s| Ok([-s[0]])).unwrap();
            }
            (y[0] - (-1.0f64).exp()).abs()
        };
        let e1 = run(0.1);
        let e2 = run(0.05);
        // global error ratio ~ 2^4
        assert!(e1 / e2 > 14.0 && e1 / e2 < 18.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn polynomial_of_degree_four_is_exact() {
        // y' = 4 t^3 integrates exactly under RK4 (Simpson weights)
        let y = rk4_step(&[0.0], 0.0, 1.0, |t, _| Ok([4.0 * t * t * t])).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15);
    }
}
