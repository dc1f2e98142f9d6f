//! Energy sweeps of the S-matrix and the Eisenbud-Wigner matrix
//! `𝒯_ab(E) = -i Σ_c conj(S_ca) dS_cb/dE`.

use std::fmt::Write as _;
use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Regime, SMatrixPoint, Settings, Solver};
use crate::error::{Error, Result};
use crate::numerics::{derivative_weights, lagrange, linspace, stencil, upper_index};
use crate::potential::{Potential, PotentialConfig};

/// Ordered energies split into runs. Finite-difference stencils and
/// interpolation never reach across a run boundary, and runs are split at
/// thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    points: Vec<f64>,
    runs: Vec<(usize, usize)>,
}

impl EnergyGrid {
    /// `n` equally spaced energies on `[start, end]`.
    pub fn uniform(start: f64, end: f64, n: usize) -> Self {
        Self::segments(&[(start, end, n)])
    }

    /// One uniform run per `(start, end, n)` triple. Segments must be
    /// ordered and disjoint.
    pub fn segments(segments: &[(f64, f64, usize)]) -> Self {
        let mut points = Vec::new();
        let mut runs = Vec::new();
        for &(a, b, n) in segments {
            let first = points.len();
            points.extend(linspace(a, b, n));
            runs.push((first, points.len()));
        }
        EnergyGrid { points, runs }
    }

    /// Arbitrary increasing energies forming a single run.
    pub fn from_points(points: Vec<f64>) -> Self {
        let runs = vec![(0, points.len())];
        EnergyGrid { points, runs }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn runs(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.runs.iter().map(|&(a, b)| a..b)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("energies must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Splits runs wherever a threshold falls between neighbouring points.
    pub fn split_at(&self, thresholds: &[f64]) -> Self {
        let mut runs = Vec::new();
        for (a, b) in self.runs.iter().copied() {
            let mut start = a;
            for i in a + 1..b {
                let (lo, hi) = (self.points[i - 1], self.points[i]);
                if thresholds.iter().any(|&t| lo <= t && t < hi) {
                    runs.push((start, i));
                    start = i;
                }
            }
            if start < b {
                runs.push((start, b));
            }
        }
        EnergyGrid {
            points: self.points.clone(),
            runs,
        }
    }

    fn run_of(&self, index: usize) -> Range<usize> {
        self.runs()
            .find(|r| r.contains(&index))
            .expect("every index belongs to a run")
    }

    pub fn run_containing(&self, energy: f64) -> Option<Range<usize>> {
        self.runs().find(|r| {
            !r.is_empty() && energy >= self.points[r.start] && energy <= self.points[r.end - 1]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeScheme {
    /// Three-point stencil.
    Central3,
    /// Five-point stencil; on a uniform grid this is one Richardson level
    /// above `Central3`.
    Central5,
}

impl DerivativeScheme {
    fn width(self) -> usize {
        match self {
            DerivativeScheme::Central3 => 3,
            DerivativeScheme::Central5 => 5,
        }
    }

    fn other(self) -> Self {
        match self {
            DerivativeScheme::Central3 => DerivativeScheme::Central5,
            DerivativeScheme::Central5 => DerivativeScheme::Central3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EWMatrixPoint {
    pub energy: f64,
    pub t_ll: Complex64,
    pub t_lr: Option<Complex64>,
    pub t_rl: Option<Complex64>,
    pub t_rr: Option<Complex64>,
    pub scheme: DerivativeScheme,
    /// Largest entrywise disagreement with the other stencil width.
    pub derivative_error: f64,
    /// Largest of `|Im t_ll|`, `|Im t_rr|`, `|t_lr - conj(t_rl)|`.
    pub hermiticity_defect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepTolerances {
    pub stationary: Settings,
    pub scheme: DerivativeScheme,
    /// `|T_5 - T_3| <= derivative_rtol * max(1, |T|)` entrywise.
    pub derivative_rtol: f64,
}

impl SweepTolerances {
    pub fn for_potential(pot: &Potential) -> Self {
        SweepTolerances {
            stationary: Settings::for_potential(pot),
            scheme: DerivativeScheme::Central5,
            derivative_rtol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScatteringData {
    pub potential: PotentialConfig,
    pub v_left: f64,
    pub v_right: f64,
    pub grid: EnergyGrid,
    pub s: Vec<SMatrixPoint>,
    pub t: Vec<EWMatrixPoint>,
    pub tolerances: SweepTolerances,
}

fn entries(p: &SMatrixPoint) -> Vec<Complex64> {
    match p.matrix() {
        Some(m) => vec![m[0][0], m[0][1], m[1][0], m[1][1]],
        None => vec![p.s_ll],
    }
}

// -i M† M' for the 1×1 or 2×2 layout produced by `entries`.
fn ew_from(s: &[Complex64], ds: &[Complex64]) -> Vec<Complex64> {
    let mi = Complex64::new(0.0, -1.0);
    if s.len() == 1 {
        return vec![mi * s[0].conj() * ds[0]];
    }
    let m = |r: usize, c: usize, v: &[Complex64]| v[2 * r + c];
    let mut t = vec![Complex64::default(); 4];
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = Complex64::default();
            for c in 0..2 {
                acc += m(c, a, s).conj() * m(c, b, ds);
            }
            t[2 * a + b] = mi * acc;
        }
    }
    t
}

// Near a threshold S is not smooth in E. The channel momentum k vanishing
// there enters through k, and in the two-channel regime also through the
// flux factor √k. Stencils are taken in w = ±|E - V_thr|^a with a = 1/4
// above V_r and 1/2 below, where both are smooth, and mapped back with
// dw/dE = a|w|^{1 - 1/a}.
fn derivative_at(
    energies: &[f64],
    s: &[SMatrixPoint],
    run: Range<usize>,
    index: usize,
    width: usize,
    thresholds: [f64; 2],
) -> Result<Vec<Complex64>> {
    if run.len() < width {
        return Err(Error::Domain(format!(
            "a {width}-point stencil needs {width} energies in the run, found {}",
            run.len()
        )));
    }
    let e0 = energies[index];
    let thr = if (e0 - thresholds[0]).abs() <= (e0 - thresholds[1]).abs() {
        thresholds[0]
    } else {
        thresholds[1]
    };
    let a = match s[index].regime {
        Regime::TwoChannel => 0.25,
        Regime::OneChannel => 0.5,
    };
    let u = |e: f64| (e - thr).signum() * (e - thr).abs().powf(a);
    // off-centre stencils lose accuracy, so they get two extra nodes
    let half = width / 2;
    let edge = index < run.start + half || index + half >= run.end;
    let width = if edge {
        (width + 2).min(run.len())
    } else {
        width
    };
    let win = stencil(index, width, run);
    let us: Vec<f64> = energies[win.clone()].iter().map(|&e| u(e)).collect();
    let w = derivative_weights(u(e0), &us);
    let jac = a * u(e0).abs().powf(1.0 - 1.0 / a);
    let mut acc = vec![Complex64::default(); entries(&s[index]).len()];
    for (j, wj) in win.zip(&w) {
        for (a, v) in acc.iter_mut().zip(entries(&s[j])) {
            *a += v * (*wj * jac);
        }
    }
    Ok(acc)
}

fn ew_at_index(
    energies: &[f64],
    s: &[SMatrixPoint],
    run: Range<usize>,
    index: usize,
    scheme: DerivativeScheme,
    thresholds: [f64; 2],
) -> Result<EWMatrixPoint> {
    let main = derivative_at(energies, s, run.clone(), index, scheme.width(), thresholds)?;
    let here = entries(&s[index]);
    let t = ew_from(&here, &main);
    let derivative_error =
        match derivative_at(energies, s, run, index, scheme.other().width(), thresholds) {
            Ok(alt) => ew_from(&here, &alt)
                .iter()
                .zip(&t)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max),
            Err(_) => f64::NAN,
        };
    let point = if t.len() == 1 {
        EWMatrixPoint {
            energy: energies[index],
            t_ll: t[0],
            t_lr: None,
            t_rl: None,
            t_rr: None,
            scheme,
            derivative_error,
            hermiticity_defect: t[0].im.abs(),
        }
    } else {
        let herm = t[0]
            .im
            .abs()
            .max(t[3].im.abs())
            .max((t[1] - t[2].conj()).norm());
        EWMatrixPoint {
            energy: energies[index],
            t_ll: t[0],
            t_lr: Some(t[1]),
            t_rl: Some(t[2]),
            t_rr: Some(t[3]),
            scheme,
            derivative_error,
            hermiticity_defect: herm,
        }
    };
    Ok(point)
}

/// Eisenbud-Wigner matrix at a grid energy of `data`, from finite
/// differences of the stored S-matrix within the run containing `energy`.
pub fn ew_matrix(
    data: &ScatteringData,
    energy: f64,
    scheme: DerivativeScheme,
) -> Result<EWMatrixPoint> {
    let pts = data.grid.points();
    let index = pts
        .iter()
        .position(|&e| (e - energy).abs() <= 1e-12 * energy.abs().max(1.0))
        .ok_or_else(|| Error::Domain(format!("energy {energy} is not a node of the sweep")))?;
    ew_at_index(
        pts,
        &data.s,
        data.grid.run_of(index),
        index,
        scheme,
        [data.v_left, data.v_right],
    )
}

/// S-matrix and EW matrix at every energy of `energies`. Per-energy solves
/// run in parallel; results are assembled in grid order and the first
/// failing energy (by index) is reported.
pub fn scattering_sweep(pot: &Potential, energies: &EnergyGrid) -> Result<ScatteringData> {
    ScatteringData::compute(pot, energies, SweepTolerances::for_potential(pot))
}

impl ScatteringData {
    pub fn compute(
        pot: &Potential,
        energies: &EnergyGrid,
        tolerances: SweepTolerances,
    ) -> Result<Self> {
        energies.validate()?;
        let grid = energies.split_at(&[pot.v_left, pot.v_right]);
        let solver = Solver::with_settings(pot, tolerances.stationary);
        let pts = grid.points();
        let solved: Vec<Result<SMatrixPoint>> =
            pts.par_iter().map(|&e| solver.s_matrix(e)).collect();
        let mut s = Vec::with_capacity(pts.len());
        for (index, r) in solved.into_iter().enumerate() {
            s.push(r.map_err(|e| Error::AtEnergy {
                index,
                source: Box::new(e),
            })?);
        }

        let mut t = Vec::with_capacity(pts.len());
        for run in grid.runs() {
            for index in run.clone() {
                let wrap = |e| Error::AtEnergy {
                    index,
                    source: Box::new(e),
                };
                let p = ew_at_index(
                    pts,
                    &s,
                    run.clone(),
                    index,
                    tolerances.scheme,
                    [pot.v_left, pot.v_right],
                )
                .map_err(wrap)?;
                let scale = [Some(p.t_ll), p.t_lr, p.t_rl, p.t_rr]
                    .iter()
                    .flatten()
                    .map(|z| z.norm())
                    .fold(1.0, f64::max);
                let tol = tolerances.derivative_rtol * scale;
                if p.derivative_error > tol {
                    return Err(wrap(Error::certificate(
                        "derivative-scheme",
                        p.derivative_error / scale,
                        tolerances.derivative_rtol,
                    )));
                }
                t.push(p);
            }
        }

        Ok(ScatteringData {
            potential: pot.to_config(),
            v_left: pot.v_left,
            v_right: pot.v_right,
            grid,
            s,
            t,
            tolerances,
        })
    }

    pub fn energies(&self) -> &[f64] {
        self.grid.points()
    }

    fn interpolation_window(&self, energy: f64) -> Result<Range<usize>> {
        let run = self
            .grid
            .run_containing(energy)
            .ok_or_else(|| Error::Domain(format!("energy {energy} lies outside the swept runs")))?;
        let pts = self.grid.points();
        let i = upper_index(pts, run.clone(), energy)
            .saturating_sub(1)
            .max(run.start);
        Ok(stencil(i, 6, run))
    }

    /// S-matrix at an arbitrary energy inside a run, by six-point Lagrange
    /// interpolation of the entries.
    pub fn s_at(&self, energy: f64) -> Result<SMatrixPoint> {
        let win = self.interpolation_window(energy)?;
        let xs = &self.grid.points()[win.clone()];
        let first = &self.s[win.start];
        let width = entries(first).len();
        let mut vals = Vec::with_capacity(width);
        for e in 0..width {
            let ys: Vec<Complex64> = self.s[win.clone()].iter().map(|p| entries(p)[e]).collect();
            vals.push(lagrange(energy, xs, &ys));
        }
        let k_l = (energy - self.v_left).sqrt();
        let k_r = super::wavenumber(energy, self.v_right);
        let parts = if width == 1 {
            [
                vals[0],
                Complex64::default(),
                Complex64::default(),
                Complex64::default(),
            ]
        } else {
            // entries order: rl, rr, ll, lr
            [vals[2], vals[0], vals[1], vals[3]]
        };
        Ok(SMatrixPoint::from_parts(
            energy,
            first.regime,
            k_l,
            k_r,
            parts,
        ))
    }

    /// `𝒯_ℓℓ(E)` at an arbitrary energy inside a run.
    pub fn t_ll_at(&self, energy: f64) -> Result<Complex64> {
        let win = self.interpolation_window(energy)?;
        let xs = &self.grid.points()[win.clone()];
        let ys: Vec<Complex64> = self.t[win].iter().map(|p| p.t_ll).collect();
        Ok(lagrange(energy, xs, &ys))
    }

    pub fn max_unitarity_defect(&self) -> f64 {
        self.s
            .iter()
            .map(|p| p.unitarity_defect)
            .fold(0.0, f64::max)
    }

    /// CSV with one row per energy. Entries absent in the one-channel regime
    /// are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "E,regime,s_ll_re,s_ll_im,s_rl_re,s_rl_im,s_rr_re,s_rr_im,s_lr_re,s_lr_im,\
             t_ll_re,t_ll_im,t_lr_re,t_lr_im,t_rl_re,t_rl_im,t_rr_re,t_rr_im,\
             unitarity_defect,wronskian_deviation\n",
        );
        let cell = |z: Option<Complex64>| match z {
            Some(z) => format!("{},{}", z.re, z.im),
            None => ",".to_string(),
        };
        for (s, t) in self.s.iter().zip(&self.t) {
            let regime = match s.regime {
                Regime::OneChannel => "one-channel",
                Regime::TwoChannel => "two-channel",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                s.energy,
                regime,
                cell(Some(s.s_ll)),
                cell(s.s_rl()),
                cell(s.s_rr()),
                cell(s.s_lr()),
                cell(Some(t.t_ll)),
                cell(t.t_lr),
                cell(t.t_rl),
                cell(t.t_rr),
                s.unitarity_defect,
                s.wronskian_deviation
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scattering data is serializable")
    }
}
