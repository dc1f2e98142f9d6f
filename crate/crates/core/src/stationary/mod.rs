//! Stationary scattering: Jost solutions, Wronskians and the on-shell
//! scattering matrix.
//!
//! Jost solutions are integrated directly from finite cutoffs. The cutoffs
//! are sized from the declared decay of the potential so that the neglected
//! Volterra tail `(1/|k|) ∫_{|x|>X} |V - V_asym|` stays below
//! [`Settings::volterra_tol`].
//!
//! Phase convention: every amplitude refers to plane waves anchored at
//! `x = 0`. With `f_ℓ ~ e^{-i k_ℓ x}` at `-∞` and `f_r ~ e^{i k_r x}` at `+∞`,
//!
//! ```text
//! s_rl = 2i √(k_ℓ k_r) / W(f_ℓ, f_r)
//! s_ll = -W(conj f_ℓ, f_r) / W(f_ℓ, f_r)
//! s_rr = -W(f_ℓ, conj f_r) / W(f_ℓ, f_r)
//! ```
//!
//! while `s_lr` is read off the asymptotic amplitude of `f_ℓ` at the right
//! cutoff, so that reciprocity is a genuine check rather than an identity.
//! A constant potential gives `s_rl = s_lr = 1`, `s_ll = s_rr = 0`.

mod sweep;

pub use sweep::{
    ew_matrix, scattering_sweep, DerivativeScheme, EWMatrixPoint, EnergyGrid, ScatteringData,
    SweepTolerances,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ode::{self, State, Tolerance};
use crate::numerics::{complex_median, derivative_weights, stencil};
use crate::potential::{Potential, Side};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Numerical policy shared by all stationary computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    /// Energies closer than this to `V_ℓ` or `V_r` are rejected.
    pub threshold_radius: f64,
    /// Bound on the neglected Volterra tail beyond each cutoff.
    pub volterra_tol: f64,
    pub ode_rtol: f64,
    /// Spacing of the sampling grid for Jost solutions.
    pub spacing: f64,
    /// Relative tolerance for the Wronskian constancy audit.
    pub wronskian_rtol: f64,
    /// Tolerance for unitarity, reciprocity, reflection symmetry and
    /// time-reversal defects.
    pub structure_tol: f64,
}

impl Settings {
    pub fn for_potential(pot: &Potential) -> Self {
        let gap = pot.v_right - pot.v_left;
        Settings {
            threshold_radius: if gap > 0.0 { 0.05 * gap } else { 0.05 },
            volterra_tol: 1e-8,
            ode_rtol: 1e-12,
            spacing: 0.05,
            wronskian_rtol: 1e-8,
            structure_tol: 1e-6,
        }
    }

    fn ode_tolerance(&self) -> Tolerance {
        Tolerance {
            rtol: self.ode_rtol,
            ..Tolerance::default()
        }
    }
}

/// Sampling grid for Jost solutions on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub spacing: f64,
}

impl GridSpec {
    /// Nodes at (roughly) the requested spacing, with every breakpoint of the
    /// potential inside the range inserted as a node.
    pub fn nodes(&self, pot: &Potential) -> Vec<f64> {
        let n = ((self.x_max - self.x_min) / self.spacing).ceil().max(4.0) as usize;
        let h = (self.x_max - self.x_min) / n as f64;
        let mut xs: Vec<f64> = (0..=n).map(|i| self.x_min + h * i as f64).collect();
        xs[n] = self.x_max;
        for b in pot.breakpoints() {
            if b > self.x_min && b < self.x_max {
                xs.push(b);
            }
        }
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * h);
        xs
    }
}

/// Channel wavenumber `√(E - V)` on the principal branch: positive for open
/// channels, `i√(V - E)` for closed ones.
pub fn wavenumber(energy: f64, v: f64) -> Complex64 {
    Complex64::new(energy - v, 0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `V_ℓ < E < V_r`: only the left channel is open.
    OneChannel,
    /// `E > V_r`.
    TwoChannel,
}

#[derive(Debug, Clone)]
pub struct JostSolution {
    pub energy: f64,
    pub side: Side,
    pub k: Complex64,
    pub x: Vec<f64>,
    pub values: Vec<Complex64>,
    pub derivative: Vec<Complex64>,
}

impl JostSolution {
    /// Relative residual of `-f'' + (V - E) f = 0`, with `f''` obtained by a
    /// five-point finite difference of the stored derivative. Stencils touching
    /// a breakpoint of the potential are skipped.
    pub fn residual(&self, pot: &Potential) -> f64 {
        let breaks = pot.breakpoints();
        let n = self.x.len();
        let scale = self
            .values
            .iter()
            .zip(&self.x)
            .map(|(f, &x)| f.norm() * (1.0 + self.energy.abs() + pot.eval(x).abs()))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let win = stencil(i, 5, 0..n);
            let (lo, hi) = (self.x[win.start], self.x[win.end - 1]);
            if breaks.iter().any(|&b| b >= lo && b <= hi) {
                continue;
            }
            let w = derivative_weights(self.x[i], &self.x[win.clone()]);
            let d2: Complex64 = w
                .iter()
                .zip(&self.derivative[win])
                .map(|(w, d)| d * *w)
                .sum();
            let r = -d2 + self.values[i] * (pot.eval(self.x[i]) - self.energy);
            worst = worst.max(r.norm());
        }
        worst / scale
    }
}

/// Value of a Wronskian taken as the median over grid points, with the
/// largest deviation from that median kept as a quality audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wronskian {
    pub value: Complex64,
    pub max_deviation: f64,
}

fn wronskian_samples(
    f: &[Complex64],
    df: &[Complex64],
    g: &[Complex64],
    dg: &[Complex64],
) -> Wronskian {
    let w: Vec<Complex64> = (0..f.len()).map(|i| f[i] * dg[i] - g[i] * df[i]).collect();
    let value = complex_median(&w);
    let max_deviation = w.iter().map(|z| (z - value).norm()).fold(0.0, f64::max);
    Wronskian {
        value,
        max_deviation,
    }
}

/// `W(f, g) = f g' - g f'` for two solutions at the same energy on the same
/// grid.
pub fn wronskian(f: &JostSolution, g: &JostSolution) -> Result<Wronskian> {
    if f.energy != g.energy {
        return Err(Error::Domain(format!(
            "Wronskian of solutions at different energies {} and {}",
            f.energy, g.energy
        )));
    }
    if f.x != g.x {
        return Err(Error::Domain(
            "Wronskian of solutions on different grids".into(),
        ));
    }
    Ok(wronskian_samples(
        &f.values,
        &f.derivative,
        &g.values,
        &g.derivative,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SMatrixPoint {
    pub energy: f64,
    pub regime: Regime,
    pub k_left: f64,
    /// Real in the two-channel regime; `i√(V_r - E)` below `V_r`.
    pub k_right: Complex64,
    pub s_ll: Complex64,
    s_rl: Option<Complex64>,
    s_rr: Option<Complex64>,
    s_lr: Option<Complex64>,
    /// `‖S*S - I‖_F` (or `||s_ll| - 1|` in the one-channel regime).
    pub unitarity_defect: f64,
    /// Largest relative deviation of `W(f_ℓ, f_r)` from its median.
    pub wronskian_deviation: f64,
}

impl SMatrixPoint {
    pub fn s_rl(&self) -> Option<Complex64> {
        self.s_rl
    }

    pub fn s_rr(&self) -> Option<Complex64> {
        self.s_rr
    }

    pub fn s_lr(&self) -> Option<Complex64> {
        self.s_lr
    }

    /// `[[s_rl, s_rr], [s_ll, s_lr]]`, mapping `(in_ℓ, in_r)` to
    /// `(out_r, out_ℓ)`. `None` in the one-channel regime.
    pub fn matrix(&self) -> Option<[[Complex64; 2]; 2]> {
        Some([[self.s_rl?, self.s_rr?], [self.s_ll, self.s_lr?]])
    }

    pub fn reciprocity_defect(&self) -> f64 {
        match (self.s_rl, self.s_lr) {
            (Some(a), Some(b)) => (a - b).norm(),
            _ => 0.0,
        }
    }

    pub fn reflection_defect(&self) -> f64 {
        match self.s_rr {
            Some(rr) => (self.s_ll.norm() - rr.norm()).abs(),
            None => 0.0,
        }
    }

    /// Largest entrywise difference between `S(E)` and its time-reversal
    /// image `X S(E)ᵀ X`, `X` the channel swap. Zero in the one-channel regime.
    pub fn time_reversal_defect(&self) -> f64 {
        let Some(m) = self.matrix() else { return 0.0 };
        let image = [[m[1][1], m[0][1]], [m[1][0], m[0][0]]];
        let mut worst: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((m[r][c] - image[r][c]).norm());
            }
        }
        worst
    }

    pub(crate) fn from_parts(
        energy: f64,
        regime: Regime,
        k_left: f64,
        k_right: Complex64,
        entries: [Complex64; 4],
    ) -> Self {
        let [s_ll, s_rl, s_rr, s_lr] = entries;
        let mut p = SMatrixPoint {
            energy,
            regime,
            k_left,
            k_right,
            s_ll,
            s_rl: None,
            s_rr: None,
            s_lr: None,
            unitarity_defect: 0.0,
            wronskian_deviation: 0.0,
        };
        if regime == Regime::TwoChannel {
            p.s_rl = Some(s_rl);
            p.s_rr = Some(s_rr);
            p.s_lr = Some(s_lr);
        }
        p.unitarity_defect = p.compute_unitarity_defect();
        p
    }

    fn compute_unitarity_defect(&self) -> f64 {
        match self.matrix() {
            None => (self.s_ll.norm() - 1.0).abs(),
            Some(m) => {
                let mut acc = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        let mut g = Complex64::new(0.0, 0.0);
                        for row in &m {
                            g += row[a].conj() * row[b];
                        }
                        if a == b {
                            g -= 1.0;
                        }
                        acc += g.norm_sqr();
                    }
                }
                acc.sqrt()
            }
        }
    }
}

/// Stationary solver bound to one potential.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    pub potential: &'a Potential,
    pub settings: Settings,
}

impl<'a> Solver<'a> {
    pub fn new(potential: &'a Potential) -> Self {
        Solver {
            potential,
            settings: Settings::for_potential(potential),
        }
    }

    pub fn with_settings(potential: &'a Potential, settings: Settings) -> Self {
        Solver {
            potential,
            settings,
        }
    }

    /// Rejects energies at or below `V_ℓ` and within the exclusion radius of
    /// a threshold.
    pub fn check_energy(&self, energy: f64) -> Result<Regime> {
        let pot = self.potential;
        let radius = self.settings.threshold_radius;
        if !energy.is_finite() || energy <= pot.v_left {
            return Err(Error::Domain(format!(
                "energy {energy} is not above the lower threshold {}",
                pot.v_left
            )));
        }
        for threshold in [pot.v_left, pot.v_right] {
            if (energy - threshold).abs() < radius {
                return Err(Error::Threshold {
                    energy,
                    threshold,
                    radius,
                });
            }
        }
        Ok(if energy > pot.v_right {
            Regime::TwoChannel
        } else {
            Regime::OneChannel
        })
    }

    fn cutoff(&self, k: Complex64) -> f64 {
        let pot = self.potential;
        let (lo, hi) = pot.core_region();
        let core = lo.abs().max(hi.abs()) + 1.0;
        if pot.decay_mu.is_infinite() {
            return core.max(5.0);
        }
        let mu = pot.decay_mu;
        // Half the tolerance, so the check in `check_tail` passes with margin.
        let target = 0.5 * self.settings.volterra_tol * k.norm() * (mu - 1.0);
        let x = if pot.decay_m > 0.0 {
            (pot.decay_m / target).powf(1.0 / (mu - 1.0)) - 1.0
        } else {
            0.0
        };
        x.max(core).max(5.0)
    }

    /// Cutoffs sized so the Volterra tail on each side is within tolerance.
    pub fn grid_for(&self, energy: f64) -> GridSpec {
        let pot = self.potential;
        let k_l = wavenumber(energy, pot.v_left);
        let k_r = wavenumber(energy, pot.v_right);
        GridSpec {
            x_min: -self.cutoff(k_l),
            x_max: self.cutoff(k_r),
            spacing: self.settings.spacing,
        }
    }

    fn check_tail(&self, x: f64, k: Complex64) -> Result<()> {
        let tail = self.potential.tail_integral_bound(x) / k.norm();
        if tail > self.settings.volterra_tol {
            return Err(Error::certificate(
                "volterra-tail",
                tail,
                self.settings.volterra_tol,
            ));
        }
        Ok(())
    }

    fn integrate_nodes(&self, xs: &[f64], energy: f64, start: State, backward: bool) -> Vec<State> {
        let pot = self.potential;
        let q = |x: f64| pot.eval(x) - energy;
        let tol = self.settings.ode_tolerance();
        let n = xs.len();
        let mut out = vec![start; n];
        let mut y = start;
        let mut h = self.settings.spacing * 0.5;
        if backward {
            for i in (0..n - 1).rev() {
                ode::integrate(&q, xs[i + 1], xs[i], &mut y, &mut h, tol);
                out[i] = y;
            }
        } else {
            for i in 1..n {
                ode::integrate(&q, xs[i - 1], xs[i], &mut y, &mut h, tol);
                out[i] = y;
            }
        }
        out
    }

    fn solution(
        &self,
        energy: f64,
        side: Side,
        k: Complex64,
        xs: Vec<f64>,
        states: Vec<State>,
    ) -> JostSolution {
        JostSolution {
            energy,
            side,
            k,
            values: states.iter().map(|s| s.f).collect(),
            derivative: states.iter().map(|s| s.df).collect(),
            x: xs,
        }
    }

    /// Solution with `f ~ e^{i k_r x}` as `x → +∞`, integrated backward from
    /// the right cutoff.
    pub fn jost_right(&self, energy: f64, grid: &GridSpec) -> Result<JostSolution> {
        self.check_energy(energy)?;
        let k = wavenumber(energy, self.potential.v_right);
        self.check_tail(grid.x_max, k)?;
        let xs = grid.nodes(self.potential);
        let x = grid.x_max;
        let e = (I * k * x).exp();
        let start = State {
            f: e,
            df: I * k * e,
        };
        let states = self.integrate_nodes(&xs, energy, start, true);
        Ok(self.solution(energy, Side::Right, k, xs, states))
    }

    /// Solution with `f ~ e^{-i k_ℓ x}` as `x → -∞`, integrated forward from
    /// the left cutoff.
    pub fn jost_left(&self, energy: f64, grid: &GridSpec) -> Result<JostSolution> {
        self.check_energy(energy)?;
        let k = wavenumber(energy, self.potential.v_left);
        self.check_tail(grid.x_min, k)?;
        let xs = grid.nodes(self.potential);
        let x = grid.x_min;
        let e = (-I * k * x).exp();
        let start = State {
            f: e,
            df: -I * k * e,
        };
        let states = self.integrate_nodes(&xs, energy, start, false);
        Ok(self.solution(energy, Side::Left, k, xs, states))
    }

    /// S-matrix at one energy on the automatically sized grid.
    pub fn s_matrix(&self, energy: f64) -> Result<SMatrixPoint> {
        let grid = self.grid_for(energy);
        self.s_matrix_on(energy, &grid)
    }

    pub fn s_matrix_on(&self, energy: f64, grid: &GridSpec) -> Result<SMatrixPoint> {
        let regime = self.check_energy(energy)?;
        let fl = self.jost_left(energy, grid)?;
        let fr = self.jost_right(energy, grid)?;
        let w = wronskian(&fl, &fr)?;
        let k_l = fl.k.re;
        let k_r = fr.k;

        let scale = w.value.norm();
        if scale < 1e-10 * k_l.max(k_r.norm()) {
            return Err(Error::certificate("wronskian-degeneracy", scale, 1e-10));
        }
        let rel_dev = w.max_deviation / scale;
        let tol = self.settings.wronskian_rtol;
        if w.max_deviation > tol * scale + 1e-12 {
            return Err(Error::certificate("wronskian-constancy", rel_dev, tol));
        }

        let fl_bar: Vec<Complex64> = fl.values.iter().map(|z| z.conj()).collect();
        let dfl_bar: Vec<Complex64> = fl.derivative.iter().map(|z| z.conj()).collect();
        let w_bar_l = wronskian_samples(&fl_bar, &dfl_bar, &fr.values, &fr.derivative).value;
        let s_ll = -w_bar_l / w.value;

        let mut entries = [
            s_ll,
            Complex64::default(),
            Complex64::default(),
            Complex64::default(),
        ];
        if regime == Regime::TwoChannel {
            let k_r = k_r.re;
            let fr_bar: Vec<Complex64> = fr.values.iter().map(|z| z.conj()).collect();
            let dfr_bar: Vec<Complex64> = fr.derivative.iter().map(|z| z.conj()).collect();
            let w_bar_r = wronskian_samples(&fl.values, &fl.derivative, &fr_bar, &dfr_bar).value;
            let s_rl = 2.0 * I * (k_l * k_r).sqrt() / w.value;
            let s_rr = -w_bar_r / w.value;
            // Incoming amplitude of f_ℓ at the right cutoff:
            // f_ℓ ≈ c e^{-i k_r x} + d e^{i k_r x}.
            let last = fl.x.len() - 1;
            let xr = fl.x[last];
            let c = (I * k_r * fl.values[last] - fl.derivative[last]) * (I * k_r * xr).exp()
                / (2.0 * I * k_r);
            let s_lr = (k_l / k_r).sqrt() / c;
            entries = [s_ll, s_rl, s_rr, s_lr];
        }
        let mut point = SMatrixPoint::from_parts(energy, regime, k_l, k_r, entries);
        point.wronskian_deviation = rel_dev;

        let st = self.settings.structure_tol;
        let checks = [
            ("unitarity", point.unitarity_defect),
            ("reciprocity", point.reciprocity_defect()),
            ("reflection-symmetry", point.reflection_defect()),
            ("time-reversal", point.time_reversal_defect()),
        ];
        for (name, value) in checks {
            if !(value <= st) {
                return Err(Error::certificate(name, value, st));
            }
        }
        Ok(point)
    }
}

pub fn jost_right(pot: &Potential, energy: f64, grid: &GridSpec) -> Result<JostSolution> {
    Solver::new(pot).jost_right(energy, grid)
}

pub fn jost_left(pot: &Potential, energy: f64, grid: &GridSpec) -> Result<JostSolution> {
    Solver::new(pot).jost_left(energy, grid)
}

pub fn s_matrix_at(pot: &Potential, energy: f64, grid: &GridSpec) -> Result<SMatrixPoint> {
    Solver::new(pot).s_matrix_on(energy, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_pure_step, make_smooth_step};

    #[test]
    fn free_jost_solutions() {
        let pot = make_pure_step(0.0, 0.0).unwrap();
        let solver = Solver::new(&pot);
        let grid = solver.grid_for(1.0);
        let fr = solver.jost_right(1.0, &grid).unwrap();
        let fl = solver.jost_left(1.0, &grid).unwrap();
        for (i, &x) in fr.x.iter().enumerate() {
            assert!((fr.values[i] - (I * x).exp()).norm() < 1e-9);
            assert!((fl.values[i] - (-I * x).exp()).norm() < 1e-9);
        }
        let w = wronskian(&fl, &fr).unwrap();
        assert!((w.value - 2.0 * I).norm() < 1e-9);
        assert!(wronskian(&fl, &fl).unwrap().value.norm() < 1e-12);
        assert!(fr.residual(&pot) < 1e-6);
    }

    #[test]
    fn threshold_and_domain_rejections() {
        let pot = make_pure_step(0.0, 1.0).unwrap();
        let solver = Solver::new(&pot);
        assert!(matches!(
            solver.check_energy(1.01),
            Err(Error::Threshold { .. })
        ));
        assert!(matches!(
            solver.check_energy(0.02),
            Err(Error::Threshold { .. })
        ));
        assert!(matches!(solver.check_energy(-0.5), Err(Error::Domain(_))));
        assert_eq!(solver.check_energy(0.5).unwrap(), Regime::OneChannel);
        assert_eq!(solver.check_energy(2.0).unwrap(), Regime::TwoChannel);
    }

    #[test]
    fn short_grid_is_rejected_for_slow_decay() {
        let pot = make_smooth_step(0.0, 1.0, 1.0).unwrap();
        let solver = Solver::new(&pot);
        let grid = GridSpec {
            x_min: -3.0,
            x_max: 3.0,
            spacing: 0.05,
        };
        let err = solver.jost_right(2.0, &grid).unwrap_err();
        assert!(err.is_certificate(), "{err}");
    }

    #[test]
    fn one_channel_is_unimodular() {
        let pot = make_smooth_step(0.0, 1.0, 1.0).unwrap();
        let p = Solver::new(&pot).s_matrix(0.5).unwrap();
        assert_eq!(p.regime, Regime::OneChannel);
        assert!((p.s_ll.norm() - 1.0).abs() < 1e-9);
        assert!(p.s_rl().is_none() && p.matrix().is_none());
    }

    #[test]
    fn constant_potential_transmits() {
        let pot = make_pure_step(0.3, 0.3).unwrap();
        let p = Solver::new(&pot).s_matrix(1.3).unwrap();
        assert!((p.s_rl().unwrap() - 1.0).norm() < 1e-9);
        assert!((p.s_lr().unwrap() - 1.0).norm() < 1e-9);
        assert!(p.s_ll.norm() < 1e-9 && p.s_rr().unwrap().norm() < 1e-9);
    }
}
