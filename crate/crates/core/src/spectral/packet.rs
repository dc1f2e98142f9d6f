use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{SpatialGrid, SpatialState};
use crate::stationary::EnergyGrid;
use crate::{Error, Result};

pub const DEFAULT_THETA: f64 = 5.0;

fn default_theta() -> f64 {
    DEFAULT_THETA
}

fn default_leakage_tol() -> f64 {
    0.75
}

/// Packet parameters as they appear in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub center_x: f64,
    pub center_p: f64,
    pub spread: f64,
    /// Energy windows `[E, E']`, at most one below and one above `V_r`.
    pub windows: Vec<[f64; 2]>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Largest admissible fraction of the Gaussian seed falling outside the
    /// windows.
    #[serde(default = "default_leakage_tol")]
    pub leakage_tol: f64,
}

/// An incoming right-moving packet with compact energy support.
#[derive(Debug, Clone)]
pub struct AdmissiblePacket {
    pub state: SpatialState,
    pub spec: PacketSpec,
    pub delta1: Option<[f64; 2]>,
    pub delta2: Option<[f64; 2]>,
    pub theta: f64,
    /// Gaussian seed mass outside the windows.
    pub leakage: f64,
    /// `∫(1+|x|)^{2θ}|φ|²` on the grid.
    pub weight_integral: f64,
    /// Share of `weight_integral` from the outer tenth of the grid on each side.
    pub tail_bound: f64,
}

/// `exp(1 - 1/(1 - u²))` on `|u| < 1`, zero outside; peak value 1.
pub fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

// (below V_r, above V_r)
type WindowPair = (Option<[f64; 2]>, Option<[f64; 2]>);

fn classify_windows(spec: &PacketSpec, v_left: f64, v_right: f64) -> Result<WindowPair> {
    let mut below = None;
    let mut above = None;
    if spec.windows.is_empty() || spec.windows.len() > 2 {
        return Err(Error::Config(
            "a packet needs one or two energy windows".into(),
        ));
    }
    for &[a, b] in &spec.windows {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!("bad energy window [{a}, {b}]")));
        }
        if a <= v_left {
            return Err(Error::Threshold {
                energy: a,
                threshold: v_left,
                radius: 0.0,
            });
        }
        let slot = if b < v_right {
            &mut below
        } else if a > v_right {
            &mut above
        } else {
            return Err(Error::Threshold {
                energy: if (a - v_right).abs() < (b - v_right).abs() {
                    a
                } else {
                    b
                },
                threshold: v_right,
                radius: 0.0,
            });
        };
        if slot.is_some() {
            return Err(Error::Config(
                "at most one window below and one above V_r".into(),
            ));
        }
        *slot = Some([a, b]);
    }
    Ok((below, above))
}

/// Gaussian seed `exp(i p₀(x - x₀) - (x - x₀)²/(4s²))` filtered in momentum
/// space by a smooth bump over each energy window (with `E = p² + V_ℓ`,
/// `p > 0`), then normalized.
pub fn make_admissible_packet(
    spec: &PacketSpec,
    v_left: f64,
    v_right: f64,
    grid: SpatialGrid,
) -> Result<AdmissiblePacket> {
    grid.validate()?;
    if !(spec.spread > 0.0) || !(spec.center_p > 0.0) {
        return Err(Error::Config(
            "packet needs spread > 0 and center_p > 0".into(),
        ));
    }
    if !(spec.theta >= 0.0) {
        return Err(Error::Config(format!(
            "theta {} must be non-negative",
            spec.theta
        )));
    }
    let (delta1, delta2) = classify_windows(spec, v_left, v_right)?;
    let windows: Vec<[f64; 2]> = delta1.into_iter().chain(delta2).collect();
    let p_max = windows
        .iter()
        .map(|w| (w[1] - v_left).sqrt())
        .fold(0.0, f64::max);
    if p_max > 0.5 * grid.nyquist() {
        return Err(Error::Config(format!(
            "momentum {p_max} is not resolved by spacing {}",
            grid.dx
        )));
    }

    let s = spec.spread;
    let weight = |p: f64| -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let e = p * p + v_left;
        windows
            .iter()
            .map(|w| bump((2.0 * e - w[0] - w[1]) / (w[1] - w[0])))
            .sum()
    };
    let inside = |p: f64| -> bool {
        let e = p * p + v_left;
        p > 0.0 && windows.iter().any(|w| e > w[0] && e < w[1])
    };

    let mut seed_total = 0.0;
    let mut seed_outside = 0.0;
    let mut momentum = Vec::with_capacity(grid.n);
    for j in 0..grid.n {
        let p = grid.momentum(j);
        let g = 2f64.sqrt() * s * (-(p - spec.center_p).powi(2) * s * s).exp();
        seed_total += g * g;
        if !inside(p) {
            seed_outside += g * g;
        }
        momentum.push(Complex64::from_polar(g * weight(p), -p * spec.center_x));
    }
    let leakage = seed_outside / seed_total;
    if leakage > spec.leakage_tol {
        return Err(Error::Config(format!(
            "spread {s} too small for the energy windows: leakage {leakage:.3} > {}",
            spec.leakage_tol
        )));
    }
    let norm = (momentum.iter().map(|m| m.norm_sqr()).sum::<f64>() * grid.dp()).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Config("packet vanishes on the momentum grid".into()));
    }
    momentum.iter_mut().for_each(|m| *m /= norm);
    let state = SpatialState::from_momentum(grid, momentum)?;

    let weight_integral = state.weighted_norm_sq(spec.theta);
    let edge = grid.n / 10;
    let tail: f64 = state
        .values()
        .iter()
        .enumerate()
        .filter(|(m, _)| *m < edge || *m >= grid.n - edge)
        .map(|(m, v)| (1.0 + grid.x(m).abs()).powf(2.0 * spec.theta) * v.norm_sqr())
        .sum::<f64>()
        * grid.dx;

    Ok(AdmissiblePacket {
        state,
        spec: spec.clone(),
        delta1,
        delta2,
        theta: spec.theta,
        leakage,
        weight_integral,
        tail_bound: tail / weight_integral,
    })
}

impl AdmissiblePacket {
    pub fn windows(&self) -> Vec<[f64; 2]> {
        self.delta1.into_iter().chain(self.delta2).collect()
    }

    /// One uniform run of `points` energies per window.
    pub fn energy_grid(&self, points: usize) -> EnergyGrid {
        let segs: Vec<(f64, f64, usize)> = self
            .windows()
            .iter()
            .map(|w| (w[0], w[1], points))
            .collect();
        EnergyGrid::segments(&segs)
    }

    /// Largest `|φ̂(p)|` over `p <= 0` relative to the peak.
    pub fn negative_momentum_ratio(&self) -> f64 {
        let g = self.state.grid();
        let (mut neg, mut peak) = (0.0f64, 0.0f64);
        for (j, v) in self.state.momentum_values().iter().enumerate() {
            peak = peak.max(v.norm());
            if g.momentum(j) <= 0.0 {
                neg = neg.max(v.norm());
            }
        }
        neg / peak
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(windows: Vec<[f64; 2]>, center_p: f64, spread: f64) -> PacketSpec {
        PacketSpec {
            center_x: 0.0,
            center_p,
            spread,
            windows,
            theta: DEFAULT_THETA,
            leakage_tol: default_leakage_tol(),
        }
    }

    #[test]
    fn bump_profile() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(1.0), 0.0);
        assert!((bump(0.5) - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn packet_is_normalized_and_right_moving() {
        let pk = make_admissible_packet(
            &spec(vec![[1.5, 2.5]], 2f64.sqrt(), 6.0),
            0.0,
            1.0,
            SpatialGrid::centered(4096, 0.1),
        )
        .unwrap();
        assert!((pk.state.norm_sq() - 1.0).abs() < 1e-12);
        assert_eq!(pk.negative_momentum_ratio(), 0.0);
        assert!(pk.delta1.is_none() && pk.delta2.is_some());
        assert!(pk.leakage < 0.5);
    }

    #[test]
    fn window_rules() {
        let g = SpatialGrid::centered(1024, 0.1);
        let p = 1.0;
        assert!(make_admissible_packet(&spec(vec![[0.5, 1.5]], p, 5.0), 0.0, 1.0, g).is_err());
        assert!(make_admissible_packet(&spec(vec![[0.0, 0.5]], p, 5.0), 0.0, 1.0, g).is_err());
        assert!(
            make_admissible_packet(&spec(vec![[0.2, 0.4], [0.5, 0.7]], 0.6, 5.0), 0.0, 1.0, g)
                .is_err()
        );
        assert!(make_admissible_packet(&spec(vec![], p, 5.0), 0.0, 1.0, g).is_err());
    }

    #[test]
    fn tiny_spread_leaks() {
        let g = SpatialGrid::centered(1024, 0.1);
        let err =
            make_admissible_packet(&spec(vec![[1.5, 2.5]], 1.4, 0.2), 0.0, 1.0, g).unwrap_err();
        assert!(err.to_string().contains("leakage"), "{err}");
    }
}
