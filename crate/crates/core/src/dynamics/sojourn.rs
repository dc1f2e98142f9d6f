use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{boundary_mass, multiplier, SplitStep};
use crate::numerics::{fit_line, trapezoid};
use crate::potential::Potential;
use crate::spectral::{
    apply_s, from_out_representation, to_in_representation, AdmissiblePacket, FftPair, SpatialGrid,
    SpatialState,
};
use crate::stationary::ScatteringData;
use crate::{Error, Result};

/// Time horizon and tolerances for sojourn integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Quadrature {
    /// Integration starts at `-t_asym`; the full evolution starts there from
    /// the free incoming state.
    pub t_asym: f64,
    pub t_max: f64,
    /// Split-step time step.
    pub dt: f64,
    /// Split-step steps between quadrature samples.
    pub sample_every: usize,
    /// Sample spacing when only channel evolutions run; these are exact at
    /// any time, and the integrands are smooth enough for a coarse trapezoid.
    pub channel_sample_dt: f64,
    pub tail_tol: f64,
    pub moller_tol: f64,
    pub leakage_tol: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            t_asym: 100.0,
            t_max: 180.0,
            dt: 0.004,
            sample_every: 10,
            channel_sample_dt: 0.2,
            tail_tol: 1e-4,
            moller_tol: super::MOLLER_TOL,
            leakage_tol: super::LEAKAGE_TOL,
        }
    }
}

impl Quadrature {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.t_asym,
            self.t_max,
            self.dt,
            self.channel_sample_dt,
            self.tail_tol,
            self.moller_tol,
            self.leakage_tol,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.sample_every == 0 {
            return Err(Error::Config(format!(
                "invalid quadrature settings {self:?}"
            )));
        }
        Ok(())
    }

    pub fn sample_dt(&self) -> f64 {
        self.dt * self.sample_every as f64
    }

    /// Sample times for runs that include the full evolution.
    pub fn samples(&self) -> TimeSamples {
        self.samples_with(self.sample_dt())
    }

    /// Sample times for channel-only runs.
    pub fn channel_samples(&self) -> TimeSamples {
        self.samples_with(self.channel_sample_dt)
    }

    fn samples_with(&self, h: f64) -> TimeSamples {
        let neg = (self.t_asym / h).round() as usize;
        let pos = (self.t_max / h).round() as usize;
        TimeSamples {
            t0: -(neg as f64) * h,
            h,
            count: neg + pos + 1,
            zero_index: neg,
        }
    }
}

/// Uniform sample times `t0 + k h` containing `t = 0` at `zero_index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSamples {
    pub t0: f64,
    pub h: f64,
    pub count: usize,
    pub zero_index: usize,
}

impl TimeSamples {
    pub fn time(&self, k: usize) -> f64 {
        if k == self.zero_index {
            0.0
        } else {
            self.t0 + k as f64 * self.h
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.time(k)).collect()
    }
}

/// Spatial intervals `[a, b]` over which probabilities are accumulated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowSet {
    pub intervals: Vec<(f64, f64)>,
}

impl WindowSet {
    pub fn symmetric(rs: &[f64]) -> Self {
        Self::translated(rs, 0.0)
    }

    pub fn translated(rs: &[f64], x0: f64) -> Self {
        WindowSet {
            intervals: rs.iter().map(|&r| (x0 - r, x0 + r)).collect(),
        }
    }

    pub fn left_halves(rs: &[f64]) -> Self {
        WindowSet {
            intervals: rs.iter().map(|&r| (-r, 0.0)).collect(),
        }
    }

    pub fn right_halves(rs: &[f64]) -> Self {
        WindowSet {
            intervals: rs.iter().map(|&r| (0.0, r)).collect(),
        }
    }

    /// Appends `other`, returning the index of its first interval.
    pub fn extend(&mut self, other: WindowSet) -> usize {
        let start = self.intervals.len();
        self.intervals.extend(other.intervals);
        start
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    /// `e^{-iHt}Ω⁻φ`.
    Full,
    /// `e^{-iH^in t}φ`.
    In,
    /// `e^{-iH^out t}Sφ`.
    Out,
    /// `e^{-iH_ℓ t}S_ℓℓφ`.
    Reflected,
    /// `e^{-iH_r t}S_rℓφ`.
    Transmitted,
}

/// Time integrals of window probabilities for one channel, split at `t = 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelWindows {
    /// `∫_{t0}^{0}` by trapezoid.
    pub neg: Vec<f64>,
    /// `∫_{0}^{t_end}` by trapezoid.
    pub pos: Vec<f64>,
    /// Extrapolated `∫_{-∞}^{t0}`.
    pub tail_neg: Vec<f64>,
    /// Extrapolated `∫_{t_end}^{∞}`.
    pub tail_pos: Vec<f64>,
}

impl ChannelWindows {
    pub fn negative(&self, w: usize) -> f64 {
        self.neg[w] + self.tail_neg[w]
    }

    pub fn positive(&self, w: usize) -> f64 {
        self.pos[w] + self.tail_pos[w]
    }

    pub fn total(&self, w: usize) -> f64 {
        self.negative(w) + self.positive(w)
    }

    pub fn max_tail(&self) -> f64 {
        self.tail_neg
            .iter()
            .chain(&self.tail_pos)
            .fold(0.0, |a, &b| a.max(b))
    }
}

/// Raw output of the sojourn engine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SojournRun {
    pub windows: WindowSet,
    pub samples: TimeSamples,
    pub quadrature: Quadrature,
    pub full: Option<ChannelWindows>,
    pub incoming: Option<ChannelWindows>,
    pub outgoing: Option<ChannelWindows>,
    pub reflected: Option<ChannelWindows>,
    pub transmitted: Option<ChannelWindows>,
    /// `‖Ω(t_asym)φ - Ω(2 t_asym)φ‖`.
    pub moller_defect: Option<f64>,
    /// `|‖ψ(t_end)‖² - ‖ψ(t0)‖²|` for the split-step run.
    pub norm_drift: Option<f64>,
    pub max_boundary_mass: f64,
    pub max_tail: f64,
    /// Wall-clock seconds, for reporting only.
    pub seconds: f64,
}

impl SojournRun {
    pub fn channel(&self, c: Channel) -> Option<&ChannelWindows> {
        match c {
            Channel::Full => self.full.as_ref(),
            Channel::In => self.incoming.as_ref(),
            Channel::Out => self.outgoing.as_ref(),
            Channel::Reflected => self.reflected.as_ref(),
            Channel::Transmitted => self.transmitted.as_ref(),
        }
    }

    pub(crate) fn require(&self, c: Channel) -> Result<&ChannelWindows> {
        self.channel(c)
            .ok_or_else(|| Error::Config(format!("channel {c:?} was not computed")))
    }
}

/// Probability in each window with the density interpolated linearly
/// between grid points.
pub(crate) fn window_masses(
    grid: &SpatialGrid,
    values: &[Complex64],
    windows: &WindowSet,
) -> Vec<f64> {
    let rho: Vec<f64> = values.iter().map(|v| v.norm_sqr()).collect();
    let n = rho.len();
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    cum.push(0.0);
    for m in 1..n {
        acc += 0.5 * grid.dx * (rho[m - 1] + rho[m]);
        cum.push(acc);
    }
    let at = |x: f64| -> f64 {
        let u = (x - grid.x_min) / grid.dx;
        if u <= 0.0 {
            return 0.0;
        }
        if u >= (n - 1) as f64 {
            return cum[n - 1];
        }
        let m = u.floor() as usize;
        let f = u - m as f64;
        cum[m] + grid.dx * (f * rho[m] + 0.5 * f * f * (rho[m + 1] - rho[m]))
    };
    windows
        .intervals
        .iter()
        .map(|&(a, b)| at(b) - at(a))
        .collect()
}

/// Extrapolated integral beyond the last sample of a decaying integrand.
///
/// `times` and `values` are ordered towards the far end. A power law
/// `|t|^{-α}` is fitted to the final tenth of the samples; if the fitted
/// decay is slower than `|t|^{-2}` the bound `|t_end| v_end` is used instead.
pub fn tail_estimate(times: &[f64], values: &[f64]) -> f64 {
    let n = times.len();
    let v_end = *values.last().unwrap_or(&0.0);
    if n < 2 || v_end <= 1e-300 {
        return 0.0;
    }
    let t_end = times[n - 1].abs();
    let k = (n / 10).max(5).min(n);
    let (lx, ly): (Vec<f64>, Vec<f64>) = times[n - k..]
        .iter()
        .zip(&values[n - k..])
        .filter(|(t, v)| **v > 0.0 && t.abs() > 0.0)
        .map(|(t, v)| (t.abs().ln(), v.ln()))
        .unzip();
    if lx.len() < 3 {
        return v_end * t_end;
    }
    let alpha = -fit_line(&lx, &ly).slope;
    if alpha > 2.0 {
        v_end * t_end / (alpha - 1.0)
    } else {
        v_end * t_end
    }
}

fn integrate_series(samples: &TimeSamples, series: &[Vec<f64>], windows: usize) -> ChannelWindows {
    let times = samples.times();
    let z = samples.zero_index;
    let mut out = ChannelWindows::default();
    for w in 0..windows {
        let col: Vec<f64> = series.iter().map(|row| row[w]).collect();
        out.neg.push(trapezoid(&times[..=z], &col[..=z]));
        out.pos.push(trapezoid(&times[z..], &col[z..]));
        let rev_t: Vec<f64> = times[..=z].iter().rev().copied().collect();
        let rev_v: Vec<f64> = col[..=z].iter().rev().copied().collect();
        out.tail_neg.push(tail_estimate(&rev_t, &rev_v));
        out.tail_pos.push(tail_estimate(&times[z..], &col[z..]));
    }
    out
}

// Window probabilities of a freely evolving state at every sample time.
fn free_series(
    fft: &FftPair,
    state: &SpatialState,
    samples: &TimeSamples,
    windows: &WindowSet,
    kappa: impl Fn(f64) -> f64 + Sync,
) -> (Vec<Vec<f64>>, f64) {
    let g = *state.grid();
    let rows: Vec<(Vec<f64>, f64)> = (0..samples.count)
        .into_par_iter()
        .map(|k| {
            let m = multiplier(state, samples.time(k), &kappa);
            let values = fft.to_position(&g, &m);
            (
                window_masses(&g, &values, windows),
                boundary_mass(&g, &values),
            )
        })
        .collect();
    let edge = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    (rows.into_iter().map(|r| r.0).collect(), edge)
}

struct FullSeries {
    rows: Vec<Vec<f64>>,
    edge: f64,
    norm_drift: f64,
}

fn full_series(
    phi: &SpatialState,
    potential: &Potential,
    quad: &Quadrature,
    samples: &TimeSamples,
    windows: &WindowSet,
) -> Result<FullSeries> {
    let g = *phi.grid();
    let prop = SplitStep::new(g, potential, quad.dt)?;
    let start = super::evolve_in_free(phi, potential.v_left, potential.v_right, samples.t0);
    let mut values = start.values().to_vec();
    let norm0: f64 = values.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.dx;
    let mut rows = Vec::with_capacity(samples.count);
    let mut edge: f64 = 0.0;
    for k in 0..samples.count {
        if k > 0 {
            prop.advance(&mut values, quad.sample_every);
        }
        rows.push(window_masses(&g, &values, windows));
        edge = edge.max(boundary_mass(&g, &values));
    }
    let norm1: f64 = values.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.dx;
    Ok(FullSeries {
        rows,
        edge,
        norm_drift: (norm1 - norm0).abs(),
    })
}

// ‖Ω(t_asym)φ - Ω(2 t_asym)φ‖, compared at time -t_asym where the first
// approximant is just the free incoming state.
fn moller_defect(
    phi: &SpatialState,
    potential: &Potential,
    quad: &Quadrature,
    t_asym: f64,
) -> Result<f64> {
    let (vl, vr) = (potential.v_left, potential.v_right);
    let early = super::evolve_in_free(phi, vl, vr, -2.0 * t_asym);
    let late = super::evolve_full(&early, potential, t_asym, quad.dt)?;
    Ok(late.distance(&super::evolve_in_free(phi, vl, vr, -t_asym)))
}

/// Runs the requested channels over a common set of windows and sample times.
///
/// `scattered` holds `(S_ℓℓφ, S_rℓφ)` and is needed for the outgoing,
/// reflected and transmitted channels.
pub fn sojourn_integrals(
    phi: &SpatialState,
    potential: &Potential,
    scattered: Option<(&SpatialState, &SpatialState)>,
    windows: &WindowSet,
    quad: &Quadrature,
    channels: &[Channel],
) -> Result<SojournRun> {
    quad.validate()?;
    let clock = std::time::Instant::now();
    let wants = |c: Channel| channels.contains(&c);
    let samples = if wants(Channel::Full) {
        quad.samples()
    } else {
        quad.channel_samples()
    };
    let g = *phi.grid();
    let (vl, vr) = (potential.v_left, potential.v_right);
    let fft = FftPair::new(g.n);

    let needs_scattered =
        wants(Channel::Out) || wants(Channel::Reflected) || wants(Channel::Transmitted);
    let (refl, trans) = match scattered {
        Some(p) => (Some(p.0), Some(p.1)),
        None if needs_scattered => {
            return Err(Error::Config(
                "outgoing channels need the scattered states".into(),
            ))
        }
        None => (None, None),
    };
    let out_state = match (refl, trans) {
        (Some(a), Some(b)) if wants(Channel::Out) => Some(a.add(b)?),
        _ => None,
    };

    let in_kappa = |p: f64| if p > 0.0 { vl } else { vr };
    let out_kappa = |p: f64| if p > 0.0 { vr } else { vl };

    let (full, free) = rayon::join(
        || -> Result<Option<(ChannelWindows, FullSeries, f64)>> {
            if !wants(Channel::Full) {
                return Ok(None);
            }
            let (fs, defect) = rayon::join(
                || full_series(phi, potential, quad, &samples, windows),
                || moller_defect(phi, potential, quad, -samples.t0),
            );
            let fs = fs?;
            Ok(Some((
                integrate_series(&samples, &fs.rows, windows.len()),
                fs,
                defect?,
            )))
        },
        || {
            let run = |state: Option<&SpatialState>, kappa: &(dyn Fn(f64) -> f64 + Sync)| {
                state.map(|st| {
                    let (rows, edge) = free_series(&fft, st, &samples, windows, kappa);
                    (integrate_series(&samples, &rows, windows.len()), edge)
                })
            };
            let incoming = if wants(Channel::In) {
                run(Some(phi), &in_kappa)
            } else {
                None
            };
            let outgoing = run(out_state.as_ref(), &out_kappa);
            let reflected = if wants(Channel::Reflected) {
                run(refl, &out_kappa)
            } else {
                None
            };
            let transmitted = if wants(Channel::Transmitted) {
                run(trans, &out_kappa)
            } else {
                None
            };
            (incoming, outgoing, reflected, transmitted)
        },
    );
    let full = full?;
    let (incoming, outgoing, reflected, transmitted) = free;

    let mut edge: f64 = 0.0;
    for e in [&incoming, &outgoing, &reflected, &transmitted]
        .into_iter()
        .flatten()
    {
        edge = edge.max(e.1);
    }
    let (full, norm_drift, moller_defect) = match full {
        Some((cw, fs, defect)) => {
            edge = edge.max(fs.edge);
            (Some(cw), Some(fs.norm_drift), Some(defect))
        }
        None => (None, None, None),
    };
    if edge > quad.leakage_tol {
        return Err(Error::certificate("grid-leakage", edge, quad.leakage_tol));
    }
    if let Some(d) = moller_defect.filter(|d| *d > quad.moller_tol) {
        return Err(Error::certificate("moller-defect", d, quad.moller_tol));
    }

    let mut run = SojournRun {
        windows: windows.clone(),
        samples,
        quadrature: *quad,
        full,
        incoming: incoming.map(|x| x.0),
        outgoing: outgoing.map(|x| x.0),
        reflected: reflected.map(|x| x.0),
        transmitted: transmitted.map(|x| x.0),
        moller_defect,
        norm_drift,
        max_boundary_mass: edge,
        max_tail: 0.0,
        seconds: 0.0,
    };
    run.max_tail = [
        &run.full,
        &run.incoming,
        &run.outgoing,
        &run.reflected,
        &run.transmitted,
    ]
    .into_iter()
    .flatten()
    .map(|c| c.max_tail())
    .fold(0.0, f64::max);
    if run.max_tail > quad.tail_tol {
        return Err(Error::certificate(
            "sojourn-tail",
            run.max_tail,
            quad.tail_tol,
        ));
    }
    run.seconds = clock.elapsed().as_secs_f64();
    Ok(run)
}

/// The channel evolutions only: incoming and outgoing.
pub fn sigma_integrals(
    phi: &SpatialState,
    potential: &Potential,
    scattered: (&SpatialState, &SpatialState),
    windows: &WindowSet,
    quad: &Quadrature,
) -> Result<SojournRun> {
    sojourn_integrals(
        phi,
        potential,
        Some(scattered),
        windows,
        quad,
        &[Channel::In, Channel::Out],
    )
}

/// `S_ℓℓφ` and `S_rℓφ` as spatial states, through the in/out representations
/// on the energy grid of `data`.
pub fn scattered_states(
    phi: &SpatialState,
    data: &ScatteringData,
) -> Result<(SpatialState, SpatialState)> {
    let inn = to_in_representation(phi, data.v_left, data.v_right, &data.grid)?;
    let out = apply_s(&inn, data)?;
    Ok((
        from_out_representation(&out.left_only())?,
        from_out_representation(&out.right_only())?,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SojournMeta {
    pub dt: f64,
    pub sample_dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub max_tail: f64,
    pub moller_defect: Option<f64>,
    pub norm_drift: Option<f64>,
    pub max_boundary_mass: f64,
}

/// Sojourn times in `[-R, R]` for the full, incoming and outgoing evolutions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SojournCurve {
    pub r_values: Vec<f64>,
    pub t_full: Vec<f64>,
    pub t_in: Vec<f64>,
    pub t_out: Vec<f64>,
    pub meta: SojournMeta,
}

impl SojournCurve {
    /// Reads the curve off a run whose first `r_values.len()` windows are
    /// `[-R, R]`.
    pub fn from_run(run: &SojournRun, r_values: &[f64]) -> Result<Self> {
        let (full, inc, out) = (
            run.require(Channel::Full)?,
            run.require(Channel::In)?,
            run.require(Channel::Out)?,
        );
        let idx = 0..r_values.len();
        Ok(SojournCurve {
            r_values: r_values.to_vec(),
            t_full: idx.clone().map(|w| full.total(w)).collect(),
            t_in: idx.clone().map(|w| inc.total(w)).collect(),
            t_out: idx.map(|w| out.total(w)).collect(),
            meta: SojournMeta {
                dt: run.quadrature.dt,
                sample_dt: run.samples.h,
                t_start: run.samples.t0,
                t_end: run.samples.time(run.samples.count - 1),
                max_tail: run.max_tail,
                moller_defect: run.moller_defect,
                norm_drift: run.norm_drift,
                max_boundary_mass: run.max_boundary_mass,
            },
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("R,T_full,T_in,T_out\n");
        for i in 0..self.r_values.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.r_values[i], self.t_full[i], self.t_in[i], self.t_out[i]
            );
        }
        out
    }

    pub fn meta_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.meta).expect("plain data serializes")
    }
}

/// Full, incoming and outgoing sojourn times of `packet` in `[-R, R]`.
pub fn sojourn_times(
    packet: &AdmissiblePacket,
    potential: &Potential,
    data: &ScatteringData,
    r_values: &[f64],
    quad: &Quadrature,
) -> Result<SojournCurve> {
    let (refl, trans) = scattered_states(&packet.state, data)?;
    let run = sojourn_integrals(
        &packet.state,
        potential,
        Some((&refl, &trans)),
        &WindowSet::symmetric(r_values),
        quad,
        &[Channel::Full, Channel::In, Channel::Out],
    )?;
    SojournCurve::from_run(&run, r_values)
}
