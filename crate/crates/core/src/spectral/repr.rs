use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{SpatialGrid, SpatialState};
use crate::numerics::{lagrange, stencil, trapezoid, upper_index};
use crate::stationary::{EnergyGrid, ScatteringData};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    In,
    Out,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::In => "in",
            Representation::Out => "out",
        }
    }
}

/// A state written as two energy-space components, one per channel.
///
/// `comp_r` vanishes below `V_r`. The spatial grid of the source state is
/// kept so the state can be rebuilt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoChannelSpectral {
    pub e_grid: EnergyGrid,
    pub comp_l: Vec<Complex64>,
    pub comp_r: Vec<Complex64>,
    pub rep: Representation,
    pub v_left: f64,
    pub v_right: f64,
    pub spatial: SpatialGrid,
}

fn check_energies(
    grid: &EnergyGrid,
    v_left: f64,
    v_right: f64,
    spatial: &SpatialGrid,
) -> Result<()> {
    grid.validate()?;
    let nyquist = spatial.nyquist();
    for &e in grid.points() {
        if e - v_left <= 0.0 {
            return Err(Error::Threshold {
                energy: e,
                threshold: v_left,
                radius: 0.0,
            });
        }
        if v_right > v_left && (e - v_right).abs() <= 1e-12 * (1.0 + v_right.abs()) {
            return Err(Error::Threshold {
                energy: e,
                threshold: v_right,
                radius: 0.0,
            });
        }
        if (e - v_left).sqrt() >= nyquist {
            return Err(Error::Domain(format!(
                "energy {e} maps beyond the grid's Nyquist momentum {nyquist}"
            )));
        }
    }
    Ok(())
}

// φ̂ at ±√(E - V) with the flux factor [4(E - V)]^{-1/4}.
fn channel_component(phi: &SpatialState, energies: &[f64], v: f64, sign: f64) -> Vec<Complex64> {
    let ps: Vec<f64> = energies
        .iter()
        .map(|&e| {
            if e > v {
                sign * (e - v).sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    let live: Vec<f64> = ps.iter().copied().filter(|p| !p.is_nan()).collect();
    let hats = phi.hat_at_many(&live);
    let mut it = hats.into_iter();
    ps.iter()
        .zip(energies)
        .map(|(p, &e)| {
            if p.is_nan() {
                Complex64::default()
            } else {
                it.next().unwrap() * (4.0 * (e - v)).powf(-0.25)
            }
        })
        .collect()
}

/// Incoming representation: the left channel carries right-movers measured
/// from `V_ℓ`, the right channel left-movers measured from `V_r`.
pub fn to_in_representation(
    phi: &SpatialState,
    v_left: f64,
    v_right: f64,
    e_grid: &EnergyGrid,
) -> Result<TwoChannelSpectral> {
    check_energies(e_grid, v_left, v_right, phi.grid())?;
    let es = e_grid.points();
    Ok(TwoChannelSpectral {
        e_grid: e_grid.clone(),
        comp_l: channel_component(phi, es, v_left, 1.0),
        comp_r: channel_component(phi, es, v_right, -1.0),
        rep: Representation::In,
        v_left,
        v_right,
        spatial: *phi.grid(),
    })
}

/// Outgoing representation: left-movers in the left channel, right-movers in
/// the right channel.
pub fn to_out_representation(
    phi: &SpatialState,
    v_left: f64,
    v_right: f64,
    e_grid: &EnergyGrid,
) -> Result<TwoChannelSpectral> {
    check_energies(e_grid, v_left, v_right, phi.grid())?;
    let es = e_grid.points();
    Ok(TwoChannelSpectral {
        e_grid: e_grid.clone(),
        comp_l: channel_component(phi, es, v_left, -1.0),
        comp_r: channel_component(phi, es, v_right, 1.0),
        rep: Representation::Out,
        v_left,
        v_right,
        spatial: *phi.grid(),
    })
}

pub fn from_out_representation(spec: &TwoChannelSpectral) -> Result<SpatialState> {
    if spec.rep != Representation::Out {
        return Err(Error::Representation {
            expected: Representation::Out.as_str(),
            found: spec.rep.as_str(),
        });
    }
    spec.to_spatial()
}

/// `(Sφ)^out(E) = S(E) φ^in(E)` energy by energy.
///
/// Energies where both components vanish are skipped, so the grid may extend
/// past the swept range as long as the state has no support there.
pub fn apply_s(phi_in: &TwoChannelSpectral, data: &ScatteringData) -> Result<TwoChannelSpectral> {
    if phi_in.rep != Representation::In {
        return Err(Error::Representation {
            expected: Representation::In.as_str(),
            found: phi_in.rep.as_str(),
        });
    }
    if phi_in.v_left != data.v_left || phi_in.v_right != data.v_right {
        return Err(Error::Config(
            "spectral state and scattering data use different asymptotes".into(),
        ));
    }
    let same_grid = phi_in.e_grid.points() == data.energies();
    let mut out = phi_in.clone();
    out.rep = Representation::Out;
    for (i, &e) in phi_in.e_grid.points().iter().enumerate() {
        let (l, r) = (phi_in.comp_l[i], phi_in.comp_r[i]);
        if l == Complex64::default() && r == Complex64::default() {
            out.comp_l[i] = l;
            out.comp_r[i] = r;
            continue;
        }
        let s = if same_grid { data.s[i] } else { data.s_at(e)? };
        match (s.s_rl(), s.s_rr(), s.s_lr()) {
            (Some(rl), Some(rr), Some(lr)) => {
                out.comp_r[i] = rl * l + rr * r;
                out.comp_l[i] = s.s_ll * l + lr * r;
            }
            _ => {
                out.comp_l[i] = s.s_ll * l;
                out.comp_r[i] = Complex64::default();
            }
        }
    }
    Ok(out)
}

impl TwoChannelSpectral {
    pub fn energies(&self) -> &[f64] {
        self.e_grid.points()
    }

    /// `∫(|comp_l|² + |comp_r|²) dE`, trapezoid on each run.
    pub fn norm_sq(&self) -> f64 {
        self.left_norm_sq() + self.right_norm_sq()
    }

    pub fn left_norm_sq(&self) -> f64 {
        channel_norm_sq(&self.e_grid, &self.comp_l)
    }

    /// The right channel is integrated from the first grid energy above `V_r`.
    pub fn right_norm_sq(&self) -> f64 {
        channel_norm_sq(&self.e_grid.split_at(&[self.v_right]), &self.comp_r)
    }
}

fn channel_norm_sq(grid: &EnergyGrid, comp: &[Complex64]) -> f64 {
    let es = grid.points();
    grid.runs()
        .map(|run| {
            let ys: Vec<f64> = comp[run.clone()].iter().map(|c| c.norm_sqr()).collect();
            trapezoid(&es[run], &ys)
        })
        .sum()
}

impl TwoChannelSpectral {
    /// Copy with the right channel zeroed.
    pub fn left_only(&self) -> Self {
        let mut s = self.clone();
        s.comp_r.iter_mut().for_each(|c| *c = Complex64::default());
        s
    }

    /// Copy with the left channel zeroed.
    pub fn right_only(&self) -> Self {
        let mut s = self.clone();
        s.comp_l.iter_mut().for_each(|c| *c = Complex64::default());
        s
    }

    fn interpolate(grid: &EnergyGrid, comp: &[Complex64], energy: f64) -> Complex64 {
        let Some(run) = grid.run_containing(energy) else {
            return Complex64::default();
        };
        let es = grid.points();
        let i = upper_index(es, run.clone(), energy)
            .saturating_sub(1)
            .max(run.start);
        let win = stencil(i, 6, run);
        lagrange(energy, &es[win.clone()], &comp[win])
    }

    /// Rebuild the spatial state on the stored grid. Momenta whose energy
    /// falls outside the energy grid get zero amplitude.
    pub fn to_spatial(&self) -> Result<SpatialState> {
        let g = self.spatial;
        // comp_r is not smooth across V_r, so its stencils stop there
        let split = self.e_grid.split_at(&[self.v_right]);
        let momentum: Vec<Complex64> = (0..g.n)
            .map(|j| {
                let p = g.momentum(j);
                if p == 0.0 {
                    return Complex64::default();
                }
                // (channel component, threshold) feeding this momentum
                let right = (self.rep == Representation::Out) == (p > 0.0);
                let value = if right {
                    Self::interpolate(&split, &self.comp_r, p * p + self.v_right)
                } else {
                    Self::interpolate(&self.e_grid, &self.comp_l, p * p + self.v_left)
                };
                value * (2.0 * p.abs()).sqrt()
            })
            .collect();
        SpatialState::from_momentum(g, momentum)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("E,comp_l_re,comp_l_im,comp_r_re,comp_r_im\n");
        for (i, e) in self.e_grid.points().iter().enumerate() {
            let (l, r) = (self.comp_l[i], self.comp_r[i]);
            let _ = writeln!(out, "{},{},{},{},{}", e, l.re, l.im, r.re, r.im);
        }
        out
    }
}
