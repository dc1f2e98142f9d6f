//! Time evolution: exact channel propagators, Strang split-step for the full
//! Hamiltonian, finite-time Møller approximants and sojourn integrals.

mod sojourn;

pub use sojourn::{
    scattered_states, sigma_integrals, sojourn_integrals, sojourn_times, tail_estimate, Channel,
    ChannelWindows, Quadrature, SojournCurve, SojournMeta, SojournRun, TimeSamples, WindowSet,
};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::fit_line;
use crate::potential::Potential;
use crate::spectral::{FftPair, SpatialGrid, SpatialState};
use crate::{Error, Result};

/// Which Hamiltonian drives an evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Hamiltonian {
    Full,
    Channel { kappa: f64 },
    InFree { v_left: f64, v_right: f64 },
    OutFree { v_left: f64, v_right: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FourierMultiplier,
    SplitStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSpec {
    pub hamiltonian: Hamiltonian,
    pub dt: f64,
    pub t_max: f64,
    pub method: Method,
}

impl EvolutionSpec {
    pub fn validate(&self) -> Result<()> {
        let exact = !matches!(self.hamiltonian, Hamiltonian::Full);
        if exact != (self.method == Method::FourierMultiplier) {
            return Err(Error::Config(format!(
                "{:?} must use {}",
                self.hamiltonian,
                if exact {
                    "the Fourier multiplier"
                } else {
                    "split-step"
                }
            )));
        }
        if !(self.dt > 0.0) || !self.t_max.is_finite() {
            return Err(Error::Config(
                "evolution needs dt > 0 and a finite horizon".into(),
            ));
        }
        Ok(())
    }

    /// Evolves `phi` to `t_max`.
    pub fn run(&self, phi: &SpatialState, potential: &Potential) -> Result<SpatialState> {
        self.validate()?;
        let t = self.t_max;
        Ok(match self.hamiltonian {
            Hamiltonian::Full => evolve_full(phi, potential, t, self.dt)?,
            Hamiltonian::Channel { kappa } => evolve_channel(phi, kappa, t),
            Hamiltonian::InFree { v_left, v_right } => evolve_in_free(phi, v_left, v_right, t),
            Hamiltonian::OutFree { v_left, v_right } => evolve_out_free(phi, v_left, v_right, t),
        })
    }
}

/// `e^{-i(p² + κ(p))t}` applied in momentum space; `kappa` picks the
/// constant potential for each sign of `p`.
pub(crate) fn multiplier(phi: &SpatialState, t: f64, kappa: impl Fn(f64) -> f64) -> Vec<Complex64> {
    let g = phi.grid();
    phi.momentum_values()
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let p = g.momentum(j);
            v * Complex64::from_polar(1.0, -(p * p + kappa(p)) * t)
        })
        .collect()
}

pub fn evolve_channel(phi: &SpatialState, kappa: f64, t: f64) -> SpatialState {
    let m = multiplier(phi, t, |_| kappa);
    SpatialState::from_momentum(*phi.grid(), m).expect("grid already validated")
}

/// `e^{-iH^in t}` with `H^in = H_ℓΠ₊ + H_rΠ₋`.
pub fn evolve_in_free(phi: &SpatialState, v_left: f64, v_right: f64, t: f64) -> SpatialState {
    let m = multiplier(phi, t, |p| if p > 0.0 { v_left } else { v_right });
    SpatialState::from_momentum(*phi.grid(), m).expect("grid already validated")
}

/// `e^{-iH^out t}` with `H^out = H_rΠ₊ + H_ℓΠ₋`.
pub fn evolve_out_free(phi: &SpatialState, v_left: f64, v_right: f64, t: f64) -> SpatialState {
    let m = multiplier(phi, t, |p| if p > 0.0 { v_right } else { v_left });
    SpatialState::from_momentum(*phi.grid(), m).expect("grid already validated")
}

/// Default tolerance on probability found near the grid edges.
pub const LEAKAGE_TOL: f64 = 1e-8;

/// Probability in the outer 5% of the grid on each side.
pub fn boundary_mass(grid: &SpatialGrid, values: &[Complex64]) -> f64 {
    let edge = (grid.n / 20).max(1);
    let lo: f64 = values[..edge].iter().map(|v| v.norm_sqr()).sum();
    let hi: f64 = values[grid.n - edge..].iter().map(|v| v.norm_sqr()).sum();
    (lo + hi) * grid.dx
}

pub(crate) fn check_leakage(grid: &SpatialGrid, values: &[Complex64], tol: f64) -> Result<f64> {
    let m = boundary_mass(grid, values);
    if m > tol {
        return Err(Error::certificate("grid-leakage", m, tol));
    }
    Ok(m)
}

/// Strang splitting `e^{-iV dt/2} e^{-iH₀ dt} e^{-iV dt/2}` on a fixed grid.
pub struct SplitStep {
    grid: SpatialGrid,
    fft: FftPair,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    pub dt: f64,
}

impl SplitStep {
    pub fn new(grid: SpatialGrid, potential: &Potential, dt: f64) -> Result<Self> {
        grid.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step {dt} must be positive")));
        }
        let half_potential = grid
            .xs()
            .iter()
            .map(|&x| Complex64::from_polar(1.0, -potential.eval(x) * dt / 2.0))
            .collect();
        let inv_n = 1.0 / grid.n as f64;
        let kinetic = (0..grid.n)
            .map(|j| {
                let p = grid.momentum(j);
                Complex64::from_polar(inv_n, -p * p * dt)
            })
            .collect();
        Ok(SplitStep {
            grid,
            fft: FftPair::new(grid.n),
            half_potential,
            kinetic,
            dt,
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn fft(&self) -> &FftPair {
        &self.fft
    }

    /// Advances raw grid values by `steps` time steps.
    pub fn advance(&self, values: &mut [Complex64], steps: usize) {
        for _ in 0..steps {
            for (v, h) in values.iter_mut().zip(&self.half_potential) {
                *v *= h;
            }
            self.fft.forward_raw(values);
            for (v, k) in values.iter_mut().zip(&self.kinetic) {
                *v *= k;
            }
            self.fft.inverse_raw(values);
            for (v, h) in values.iter_mut().zip(&self.half_potential) {
                *v *= h;
            }
        }
    }
}

/// `e^{-iHt}φ` by split-step with the largest step `<= dt` dividing `t`.
/// Boundary probability is checked every 100 steps.
pub fn evolve_full(
    phi: &SpatialState,
    potential: &Potential,
    t: f64,
    dt: f64,
) -> Result<SpatialState> {
    let steps = (t.abs() / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    if h == 0.0 {
        return Ok(phi.clone());
    }
    let prop = if h > 0.0 {
        SplitStep::new(*phi.grid(), potential, h)?
    } else {
        // backward evolution: conjugate, evolve forward, conjugate
        let back = evolve_full(&phi.time_reverse(), potential, -t, dt)?;
        return Ok(back.time_reverse());
    };
    let mut values = phi.values().to_vec();
    let mut done = 0;
    while done < steps {
        let chunk = (steps - done).min(100);
        prop.advance(&mut values, chunk);
        done += chunk;
        check_leakage(phi.grid(), &values, LEAKAGE_TOL)?;
    }
    SpatialState::from_values_with(prop.fft(), *phi.grid(), values)
}

/// Observed convergence order of split-step from runs at `dt`, `dt/2`, `dt/4`.
pub fn split_step_order(phi: &SpatialState, potential: &Potential, t: f64, dt: f64) -> Result<f64> {
    let a = evolve_full(phi, potential, t, dt)?;
    let b = evolve_full(phi, potential, t, dt / 2.0)?;
    let c = evolve_full(phi, potential, t, dt / 4.0)?;
    Ok((a.distance(&b) / b.distance(&c)).log2())
}

#[derive(Debug, Clone)]
pub struct MollerApproximant {
    pub state: SpatialState,
    /// `‖Ω(T)φ - Ω(2T)φ‖`.
    pub defect: f64,
    /// `|‖ψ‖ - ‖φ‖|`.
    pub norm_defect: f64,
}

pub const MOLLER_TOL: f64 = 1e-3;

/// `Ω⁻φ ≈ e^{-iHT} e^{iH^in T} φ` at `T = t_asym`, certified by comparison
/// with `2T`.
pub fn moller_minus(
    phi: &SpatialState,
    potential: &Potential,
    t_asym: f64,
    dt: f64,
    tol: f64,
) -> Result<MollerApproximant> {
    if !(t_asym > 0.0) {
        return Err(Error::Config("t_asym must be positive".into()));
    }
    let (vl, vr) = (potential.v_left, potential.v_right);
    let omega = |t: f64| -> Result<SpatialState> {
        let start = evolve_in_free(phi, vl, vr, -t);
        evolve_full(&start, potential, t, dt)
    };
    let a = omega(t_asym)?;
    let b = omega(2.0 * t_asym)?;
    let defect = a.distance(&b);
    let norm_defect = (a.norm_sq().sqrt() - phi.norm_sq().sqrt()).abs();
    if defect > tol {
        return Err(Error::certificate("moller-defect", defect, tol));
    }
    Ok(MollerApproximant {
        state: a,
        defect,
        norm_defect,
    })
}

/// Power-law fit of a decaying observable, `value ~ C t^{-exponent}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub exponent: f64,
    pub exponent_stderr: f64,
    /// Number of samples above the resolution floor used in the fit.
    pub points: usize,
}

fn decay_fit(times: &[f64], values: &[f64], floor: f64) -> Result<DecayFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > floor)
        .map(|(&t, &v)| (t.ln(), v.ln()))
        .unzip();
    if lx.len() < 3 {
        return Err(Error::Domain(
            "fewer than three resolvable samples for the decay fit".into(),
        ));
    }
    let fit = fit_line(&lx, &ly);
    Ok(DecayFit {
        times: times.to_vec(),
        values: values.to_vec(),
        exponent: -fit.slope,
        exponent_stderr: fit.slope_stderr,
        points: lx.len(),
    })
}

/// Probability on `x < 0` under the channel evolution at each time.
pub fn left_tail_decay(
    phi: &SpatialState,
    kappa: f64,
    times: &[f64],
    floor: f64,
) -> Result<DecayFit> {
    let g = *phi.grid();
    let values: Vec<f64> = times
        .par_iter()
        .map(|&t| {
            let st = evolve_channel(phi, kappa, t);
            st.values()
                .iter()
                .enumerate()
                .filter(|(m, _)| g.x(*m) < 0.0)
                .map(|(_, v)| v.norm_sqr())
                .sum::<f64>()
                * g.dx
        })
        .collect();
    decay_fit(times, &values, floor)
}

/// `∫(1+|x|)^{-2μ}|φ_t|²` under the channel evolution at each time.
pub fn weighted_decay(
    phi: &SpatialState,
    kappa: f64,
    mu: f64,
    times: &[f64],
    floor: f64,
) -> Result<DecayFit> {
    let g = *phi.grid();
    let values: Vec<f64> = times
        .par_iter()
        .map(|&t| {
            let st = evolve_channel(phi, kappa, t);
            st.values()
                .iter()
                .enumerate()
                .map(|(m, v)| (1.0 + g.x(m).abs()).powf(-2.0 * mu) * v.norm_sqr())
                .sum::<f64>()
                * g.dx
        })
        .collect();
    decay_fit(times, &values, floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::make_pure_step;

    fn gaussian(grid: SpatialGrid, x0: f64, p0: f64, s: f64) -> SpatialState {
        let values = grid
            .xs()
            .iter()
            .map(|&x| {
                let y = x - x0;
                Complex64::from_polar((-y * y / (4.0 * s * s)).exp(), p0 * y)
            })
            .collect();
        SpatialState::from_values(grid, values).unwrap()
    }

    #[test]
    fn channel_evolution_is_unitary() {
        let st = gaussian(SpatialGrid::centered(1024, 0.1), 0.0, 1.0, 2.0);
        let ev = evolve_channel(&st, 0.3, 7.0);
        assert!((ev.norm_sq() - st.norm_sq()).abs() < 1e-12 * st.norm_sq());
        assert!(evolve_channel(&st, 0.3, 0.0).distance(&st) < 1e-13);
    }

    #[test]
    fn split_step_exact_for_constant_potential() {
        let st = gaussian(SpatialGrid::centered(1024, 0.1), -5.0, 1.0, 2.0);
        let pot = make_pure_step(0.4, 0.4).unwrap();
        let a = evolve_full(&st, &pot, 3.0, 0.05).unwrap();
        let b = evolve_channel(&st, 0.4, 3.0);
        assert!(a.distance(&b) < 1e-10);
    }

    #[test]
    fn backward_full_evolution_inverts_forward() {
        let st = gaussian(SpatialGrid::centered(4096, 0.1), -5.0, 1.0, 2.0);
        let pot = make_pure_step(0.0, 1.0).unwrap();
        let f = evolve_full(&st, &pot, 4.0, 0.004).unwrap();
        let back = evolve_full(&f, &pot, -4.0, 0.004).unwrap();
        assert!(back.distance(&st) < 1e-10);
    }

    #[test]
    fn in_free_on_right_movers_is_left_channel() {
        let st = gaussian(SpatialGrid::centered(1024, 0.1), 0.0, 2.0, 3.0);
        let a = evolve_in_free(&st, 0.0, 1.0, 5.0);
        let b = evolve_channel(&st, 0.0, 5.0);
        // Π₋φ is a Gaussian tail of order e^{-2·(2·3)²}
        assert!(a.distance(&b) < 1e-12);
        let c = evolve_out_free(&st, 0.5, 0.5, 5.0);
        assert!(c.distance(&evolve_channel(&st, 0.5, 5.0)) < 1e-12);
    }

    #[test]
    fn evolution_spec_rules() {
        let bad = EvolutionSpec {
            hamiltonian: Hamiltonian::Channel { kappa: 0.0 },
            dt: 0.01,
            t_max: 1.0,
            method: Method::SplitStep,
        };
        assert!(bad.validate().is_err());
        let good = EvolutionSpec {
            hamiltonian: Hamiltonian::Full,
            method: Method::SplitStep,
            ..bad
        };
        assert!(good.validate().is_ok());
    }

    #[test]
    fn leakage_is_detected() {
        let st = gaussian(SpatialGrid::centered(256, 0.1), 0.0, 3.0, 1.0);
        let pot = make_pure_step(0.0, 0.0).unwrap();
        let err = evolve_full(&st, &pot, 10.0, 0.01).unwrap_err();
        assert!(err.is_certificate(), "{err}");
    }
}
