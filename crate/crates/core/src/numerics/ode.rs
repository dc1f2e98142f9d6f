//! Dormand-Prince 5(4) stepping for the stationary Schrödinger system
//! `f' = g`, `g' = (V(x) - E) f` with complex `f`.

use num_complex::Complex64;

/// State `(f, f')` of the second-order equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub f: Complex64,
    pub df: Complex64,
}

impl State {
    fn axpy(self, h: f64, k: &State) -> State {
        State {
            f: self.f + k.f * h,
            df: self.df + k.df * h,
        }
    }

    fn norm(&self) -> f64 {
        self.f.norm().max(self.df.norm())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rtol: 1e-12,
            atol: 1e-300,
        }
    }
}

// Dormand-Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates the Schrödinger system across `[a, b]` (either orientation)
/// with adaptive steps. `q(x)` returns `V(x) - E`; it is only sampled at
/// points strictly inside the interval, so a discontinuity at an endpoint is
/// seen from the correct side.
///
/// `h` carries the step-size guess between calls. Returns the number of
/// accepted steps.
pub fn integrate<Q>(q: &Q, a: f64, b: f64, y: &mut State, h: &mut f64, tol: Tolerance) -> usize
where
    Q: Fn(f64) -> f64,
{
    let span = b - a;
    if span == 0.0 {
        return 0;
    }
    let dir = span.signum();
    let eps = 1e-13 * span.abs().max(1e-300);
    let lo = a.min(b) + eps;
    let hi = a.max(b) - eps;
    let rhs = |x: f64, s: &State| State {
        f: s.df,
        df: s.f * q(x.clamp(lo, hi)),
    };

    let mut x = a;
    let mut step = h.abs().min(span.abs()).max(1e-6 * span.abs()) * dir;
    let mut k1 = rhs(x, y);
    let mut accepted = 0;
    let mut rejects = 0usize;
    loop {
        let remaining = b - x;
        if remaining * dir <= 0.0 {
            break;
        }
        let last =
            (step.abs() >= remaining.abs()) || (remaining.abs() - step.abs()) < 1e-12 * span.abs();
        let hs = if last { remaining } else { step };

        let k2 = rhs(x + C2 * hs, &y.axpy(hs * A21, &k1));
        let y3 = State {
            f: y.f + (k1.f * A31 + k2.f * A32) * hs,
            df: y.df + (k1.df * A31 + k2.df * A32) * hs,
        };
        let k3 = rhs(x + C3 * hs, &y3);
        let y4 = State {
            f: y.f + (k1.f * A41 + k2.f * A42 + k3.f * A43) * hs,
            df: y.df + (k1.df * A41 + k2.df * A42 + k3.df * A43) * hs,
        };
        let k4 = rhs(x + C4 * hs, &y4);
        let y5 = State {
            f: y.f + (k1.f * A51 + k2.f * A52 + k3.f * A53 + k4.f * A54) * hs,
            df: y.df + (k1.df * A51 + k2.df * A52 + k3.df * A53 + k4.df * A54) * hs,
        };
        let k5 = rhs(x + C5 * hs, &y5);
        let y6 = State {
            f: y.f + (k1.f * A61 + k2.f * A62 + k3.f * A63 + k4.f * A64 + k5.f * A65) * hs,
            df: y.df + (k1.df * A61 + k2.df * A62 + k3.df * A63 + k4.df * A64 + k5.df * A65) * hs,
        };
        let k6 = rhs(x + hs, &y6);
        let ynew = State {
            f: y.f + (k1.f * B1 + k3.f * B3 + k4.f * B4 + k5.f * B5 + k6.f * B6) * hs,
            df: y.df + (k1.df * B1 + k3.df * B3 + k4.df * B4 + k5.df * B5 + k6.df * B6) * hs,
        };
        let k7 = rhs(x + hs, &ynew);
        let err = State {
            f: (k1.f * E1 + k3.f * E3 + k4.f * E4 + k5.f * E5 + k6.f * E6 + k7.f * E7) * hs,
            df: (k1.df * E1 + k3.df * E3 + k4.df * E4 + k5.df * E5 + k6.df * E6 + k7.df * E7) * hs,
        };
        let scale = tol.atol + tol.rtol * y.norm().max(ynew.norm());
        let ratio = err.norm() / scale;

        if ratio <= 1.0 || hs.abs() < 1e-12 * span.abs() {
            x = if last { b } else { x + hs };
            *y = ynew;
            k1 = k7;
            accepted += 1;
            rejects = 0;
            let grow = if ratio == 0.0 {
                5.0
            } else {
                (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
            };
            let proposal = hs * grow;
            if !last || proposal.abs() > step.abs() {
                step = proposal;
            }
        } else {
            rejects += 1;
            let shrink = (0.9 * ratio.powf(-0.25)).clamp(0.1, 0.9);
            step = hs * if rejects > 3 { 0.1 } else { shrink };
        }
    }
    *h = step.abs();
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_plane_wave_is_reproduced() {
        // f'' = -k^2 f with f = e^{ikx}.
        let k = 1.3;
        let q = |_x: f64| -k * k;
        let i = Complex64::i();
        let mut y = State {
            f: Complex64::new(1.0, 0.0),
            df: i * k,
        };
        let mut h = 0.1;
        integrate(&q, 0.0, 10.0, &mut y, &mut h, Tolerance::default());
        let exact = (i * k * 10.0).exp();
        assert!((y.f - exact).norm() < 1e-10, "{:?} vs {exact}", y.f);
        assert!((y.df - i * k * exact).norm() < 1e-10);
    }

    #[test]
    fn backward_integration_matches_exponential() {
        let kappa = 0.7;
        let q = |_x: f64| kappa * kappa;
        let mut y = State {
            f: Complex64::new((-kappa * 5.0f64).exp(), 0.0),
            df: Complex64::new(-kappa * (-kappa * 5.0f64).exp(), 0.0),
        };
        let mut h = 0.1;
        integrate(&q, 5.0, -5.0, &mut y, &mut h, Tolerance::default());
        let exact = (kappa * 5.0f64).exp();
        assert!((y.f.re - exact).abs() / exact < 1e-10);
    }

    #[test]
    fn endpoint_discontinuity_seen_from_inside() {
        // q jumps at x = 0; integrating over [-1, 0] must only see q = -1.
        let q = |x: f64| if x < 0.0 { -1.0 } else { 100.0 };
        let i = Complex64::i();
        let mut y = State {
            f: (-i).exp(),
            df: i * (-i).exp(),
        };
        let mut h = 0.05;
        integrate(&q, -1.0, 0.0, &mut y, &mut h, Tolerance::default());
        assert!((y.f - Complex64::new(1.0, 0.0)).norm() < 1e-10);
    }
}
