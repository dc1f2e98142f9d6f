//! Local and global time delays, the Eisenbud-Wigner expectation and the
//! quantities built around them.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    scattered_states, sojourn_integrals, Channel, Quadrature, SojournCurve, SojournMeta,
    SojournRun, WindowSet,
};
use crate::numerics::{fit_line, trapezoid};
use crate::potential::{Potential, PotentialConfig};
use crate::spectral::{
    apply_s, to_in_representation, AdmissiblePacket, PacketSpec, Representation, TwoChannelSpectral,
};
use crate::stationary::ScatteringData;
use crate::{Error, Result};

/// Largest admissible imaginary part of a delay relative to its magnitude.
pub const IMAGINARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalDelays {
    pub r_values: Vec<f64>,
    pub tau_in: Vec<f64>,
    pub tau_out: Vec<f64>,
    pub tau_sym: Vec<f64>,
}

pub fn local_time_delays(curve: &SojournCurve) -> LocalDelays {
    let n = curve.r_values.len();
    let tau_in: Vec<f64> = (0..n).map(|i| curve.t_full[i] - curve.t_in[i]).collect();
    let tau_out: Vec<f64> = (0..n).map(|i| curve.t_full[i] - curve.t_out[i]).collect();
    let tau_sym = tau_in
        .iter()
        .zip(&tau_out)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    LocalDelays {
        r_values: curve.r_values.clone(),
        tau_in,
        tau_out,
        tau_sym,
    }
}

/// A spectral integral with its discarded imaginary part and an error bar
/// from the derivative-scheme disagreement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralValue {
    pub value: f64,
    pub imaginary: f64,
    pub error: f64,
}

fn check_in_state(phi_in: &TwoChannelSpectral, data: &ScatteringData) -> Result<()> {
    if phi_in.rep != Representation::In {
        return Err(Error::Representation {
            expected: Representation::In.as_str(),
            found: phi_in.rep.as_str(),
        });
    }
    if phi_in.energies() != data.energies()
        || phi_in.v_left != data.v_left
        || phi_in.v_right != data.v_right
    {
        return Err(Error::Config(
            "the spectral state must live on the energy grid of the sweep".into(),
        ));
    }
    Ok(())
}

// ∫ f(E) dE by trapezoid on each run, with runs broken at V_r.
fn integrate(data: &ScatteringData, f: impl Fn(usize) -> Complex64) -> Complex64 {
    let grid = data.grid.split_at(&[data.v_right]);
    let es = grid.points();
    grid.runs()
        .map(|run| {
            let ys: Vec<Complex64> = run.clone().map(&f).collect();
            let re: Vec<f64> = ys.iter().map(|y| y.re).collect();
            let im: Vec<f64> = ys.iter().map(|y| y.im).collect();
            Complex64::new(trapezoid(&es[run.clone()], &re), trapezoid(&es[run], &im))
        })
        .sum()
}

/// `⟨φ|𝒯φ⟩` in the incoming representation.
pub fn ew_expectation(phi_in: &TwoChannelSpectral, data: &ScatteringData) -> Result<SpectralValue> {
    check_in_state(phi_in, data)?;
    let z = Complex64::default();
    let total = integrate(data, |i| {
        let (l, r) = (phi_in.comp_l[i], phi_in.comp_r[i]);
        let t = &data.t[i];
        let tl = t.t_ll * l + t.t_lr.unwrap_or(z) * r;
        let tr = t.t_rl.unwrap_or(z) * l + t.t_rr.unwrap_or(z) * r;
        l.conj() * tl + r.conj() * tr
    });
    let error = integrate(data, |i| {
        let w = phi_in.comp_l[i].norm_sqr() + phi_in.comp_r[i].norm_sqr();
        Complex64::new(w * data.t[i].derivative_error, 0.0)
    })
    .re;
    let out = SpectralValue {
        value: total.re,
        imaginary: total.im,
        error,
    };
    if total.im.abs() > IMAGINARY_TOL * total.re.abs().max(1.0) + error {
        return Err(Error::certificate(
            "ew-hermiticity",
            total.im.abs(),
            IMAGINARY_TOL,
        ));
    }
    Ok(out)
}

/// Growth rate `c` of the unsymmetrized delays,
/// `(1/2)∫|(Sφ)^out_r|²[(E - V_r)^{-1/2} - (E - V_ℓ)^{-1/2}] dE`.
pub fn divergence_coefficient(phi_in: &TwoChannelSpectral, data: &ScatteringData) -> Result<f64> {
    check_in_state(phi_in, data)?;
    let out = apply_s(phi_in, data)?;
    let (vl, vr) = (data.v_left, data.v_right);
    Ok(integrate(data, |i| {
        let e = data.energies()[i];
        if e <= vr {
            return Complex64::default();
        }
        let w = out.comp_r[i].norm_sqr();
        Complex64::new(0.5 * w * ((e - vr).powf(-0.5) - (e - vl).powf(-0.5)), 0.0)
    })
    .re)
}

/// `∫|φ̂(p)|²/|p| dp`: time per unit length of a free crossing, used to
/// judge whether a slope is negligible.
pub fn natural_time_scale(phi_in: &TwoChannelSpectral) -> f64 {
    let (vl, vr) = (phi_in.v_left, phi_in.v_right);
    let grid = phi_in.e_grid.split_at(&[vr]);
    let es = grid.points();
    // |φ̂(p)|² dp = |comp|² dE and 1/|p| = (E - V)^{-1/2}
    let f = |i: usize| {
        let e = es[i];
        let mut v = phi_in.comp_l[i].norm_sqr() / (e - vl).sqrt();
        if e > vr {
            v += phi_in.comp_r[i].norm_sqr() / (e - vr).sqrt();
        }
        v
    };
    grid.runs()
        .map(|run| {
            let ys: Vec<f64> = run.clone().map(f).collect();
            trapezoid(&es[run], &ys)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceFit {
    pub slope: f64,
    pub intercept: f64,
    /// Two standard errors of the slope.
    pub ci: f64,
    pub points: usize,
}

/// Least-squares line through `(R, τ(R))` for `R` in `window`.
pub fn fit_divergence(r_values: &[f64], tau: &[f64], window: (f64, f64)) -> Result<DivergenceFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = r_values
        .iter()
        .zip(tau)
        .filter(|(r, _)| **r >= window.0 && **r <= window.1)
        .map(|(r, t)| (*r, *t))
        .unzip();
    if xs.len() < 5 {
        return Err(Error::Config(format!(
            "divergence window [{}, {}] holds {} radii, need at least 5",
            window.0,
            window.1,
            xs.len()
        )));
    }
    let fit = fit_line(&xs, &ys);
    Ok(DivergenceFit {
        slope: fit.slope,
        intercept: fit.intercept,
        ci: 2.0 * fit.slope_stderr,
        points: xs.len(),
    })
}

/// When a curve counts as settled: the trailing samples must stay within
/// `max(rel·|value|, abs)` of each other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateauRule {
    pub rel: f64,
    pub abs: f64,
    pub min_points: usize,
}

impl Default for PlateauRule {
    fn default() -> Self {
        PlateauRule {
            rel: 0.01,
            abs: 1e-3,
            min_points: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    /// Mean over the plateau.
    pub value: f64,
    /// `max - min` over the plateau.
    pub spread: f64,
    /// Smallest radius in the plateau.
    pub r_start: f64,
    pub points: usize,
}

/// Longest trailing run of `values` that satisfies `rule`.
pub fn detect_plateau(r_values: &[f64], values: &[f64], rule: &PlateauRule) -> Result<Plateau> {
    let n = values.len();
    let mut best = None;
    for start in (0..n).rev() {
        let tail = &values[start..];
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        if hi - lo > (rule.rel * mean.abs()).max(rule.abs) {
            break;
        }
        best = Some(Plateau {
            value: mean,
            spread: hi - lo,
            r_start: r_values[start],
            points: tail.len(),
        });
    }
    match best {
        Some(p) if p.points >= rule.min_points => Ok(p),
        _ => Err(Error::Domain(format!(
            "no plateau over the last {} radii; widen the R range or the horizon",
            rule.min_points
        ))),
    }
}

/// `lim τ_sym(R)`, read off as the plateau of the symmetrized delay.
pub fn symmetrized_global_delay(delays: &LocalDelays, rule: &PlateauRule) -> Result<Plateau> {
    detect_plateau(&delays.r_values, &delays.tau_sym, rule)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaCurves {
    pub r_values: Vec<f64>,
    pub sigma_in: Vec<f64>,
    pub sigma_out: Vec<f64>,
    pub seconds: f64,
}

impl SigmaCurves {
    pub fn average(&self) -> Vec<f64> {
        self.sigma_in
            .iter()
            .zip(&self.sigma_out)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// Reads `σ^in`, `σ^out` from the first `r_values.len()` windows of `run`.
    pub fn from_run(run: &SojournRun, r_values: &[f64]) -> Result<Self> {
        let (inc, out) = (run.require(Channel::In)?, run.require(Channel::Out)?);
        let idx = 0..r_values.len();
        Ok(SigmaCurves {
            r_values: r_values.to_vec(),
            sigma_in: idx
                .clone()
                .map(|w| out.positive(w) - inc.positive(w))
                .collect(),
            sigma_out: idx.map(|w| inc.negative(w) - out.negative(w)).collect(),
            seconds: run.seconds,
        })
    }
}

/// `σ^in_R = ∫_0^∞ (P_R(Sφ, t) - P_R(φ, t)) dt` and
/// `σ^out_R = -∫_{-∞}^0 (same)`, from channel evolutions only.
pub fn sigma_surrogates(
    packet: &AdmissiblePacket,
    potential: &Potential,
    data: &ScatteringData,
    r_values: &[f64],
    quad: &Quadrature,
) -> Result<SigmaCurves> {
    let clock = std::time::Instant::now();
    let (refl, trans) = scattered_states(&packet.state, data)?;
    let run = crate::dynamics::sigma_integrals(
        &packet.state,
        potential,
        (&refl, &trans),
        &WindowSet::symmetric(r_values),
        quad,
    )?;
    let mut out = SigmaCurves::from_run(&run, r_values)?;
    out.seconds = clock.elapsed().as_secs_f64();
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrDecomposition {
    pub r_values: Vec<f64>,
    pub tau_l: Vec<f64>,
    pub tau_r: Vec<f64>,
}

impl LrDecomposition {
    pub fn sum(&self) -> Vec<f64> {
        self.tau_l
            .iter()
            .zip(&self.tau_r)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// `left` and `right` index the first window of `[-R, 0]` and `[0, R]`.
    pub fn from_run(run: &SojournRun, r_values: &[f64], left: usize, right: usize) -> Result<Self> {
        let full = run.require(Channel::Full)?;
        let inc = run.require(Channel::In)?;
        let refl = run.require(Channel::Reflected)?;
        let trans = run.require(Channel::Transmitted)?;
        let n = r_values.len();
        Ok(LrDecomposition {
            r_values: r_values.to_vec(),
            tau_l: (0..n)
                .map(|i| {
                    let w = left + i;
                    full.total(w) - inc.total(w) - refl.total(w)
                })
                .collect(),
            tau_r: (0..n)
                .map(|i| {
                    let w = right + i;
                    full.total(w) - trans.total(w)
                })
                .collect(),
        })
    }
}

/// `τ_ℓ(R)` over `(-R, 0)` and `τ_r(R)` over `(0, R)`.
pub fn lr_decomposition(
    packet: &AdmissiblePacket,
    potential: &Potential,
    data: &ScatteringData,
    r_values: &[f64],
    quad: &Quadrature,
) -> Result<LrDecomposition> {
    let (refl, trans) = scattered_states(&packet.state, data)?;
    let mut windows = WindowSet::left_halves(r_values);
    let right = windows.extend(WindowSet::right_halves(r_values));
    let run = sojourn_integrals(
        &packet.state,
        potential,
        Some((&refl, &trans)),
        &windows,
        quad,
        &[
            Channel::Full,
            Channel::In,
            Channel::Reflected,
            Channel::Transmitted,
        ],
    )?;
    LrDecomposition::from_run(&run, r_values, 0, right)
}

/// Global delay for the window `[x₀ - R, x₀ + R]`:
/// `τ + x₀∫|φ^in_ℓ|²[-|S_ℓℓ|²/k_ℓ + |S_rℓ|²(1/(2k_r) - 1/(2k_ℓ))] dE`.
pub fn translated_delay(
    phi_in: &TwoChannelSpectral,
    data: &ScatteringData,
    x0: f64,
) -> Result<SpectralValue> {
    let base = ew_expectation(phi_in, data)?;
    let shift = integrate(data, |i| {
        let s = &data.s[i];
        let w = phi_in.comp_l[i].norm_sqr();
        let kl = s.k_left;
        let mut v = -s.s_ll.norm_sqr() / kl;
        if let Some(rl) = s.s_rl() {
            v += rl.norm_sqr() * (0.5 / s.k_right.re - 0.5 / kl);
        }
        Complex64::new(x0 * w * v, 0.0)
    })
    .re;
    Ok(SpectralValue {
        value: base.value + shift,
        ..base
    })
}

/// Settings of a full delay experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayOptions {
    pub plateau: PlateauRule,
    /// Radius range for the slope fits; when absent, the upper half of the
    /// R schedule but no fewer than its last five radii.
    pub fit_window: Option<(f64, f64)>,
    /// Also compute the delay for windows centred at `x0`.
    pub x0: Option<f64>,
    pub decompose: bool,
}

impl Default for DelayOptions {
    fn default() -> Self {
        DelayOptions {
            plateau: PlateauRule::default(),
            fit_window: None,
            x0: None,
            decompose: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranslatedReport {
    pub x0: f64,
    pub spectral: SpectralValue,
    pub tau_sym: Vec<f64>,
    pub plateau: Option<Plateau>,
}

/// Every contribution that bounds a reported comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub moller_defect: f64,
    pub quadrature_tail: f64,
    pub derivative: f64,
    pub plateau_spread: f64,
}

impl ErrorBudget {
    pub fn total(&self) -> f64 {
        self.moller_defect + self.quadrature_tail + self.derivative + self.plateau_spread
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeDelayReport {
    pub potential: PotentialConfig,
    pub packet: PacketSpec,
    pub delays: LocalDelays,
    pub sigma: SigmaCurves,
    pub decomposition: Option<LrDecomposition>,
    pub tau_ew: SpectralValue,
    pub plateau: Option<Plateau>,
    pub sigma_plateau: Option<Plateau>,
    pub lr_plateau: Option<Plateau>,
    pub divergence_in: Option<DivergenceFit>,
    pub divergence_out: Option<DivergenceFit>,
    pub divergence_predicted: f64,
    pub natural_time_scale: f64,
    pub translated: Option<TranslatedReport>,
    pub budget: ErrorBudget,
    pub sojourn: SojournMeta,
    /// Wall-clock time of the combined full and channel evolution.
    pub sojourn_seconds: f64,
    /// Why a plateau or fit is missing.
    pub notes: Vec<String>,
    pub seconds: f64,
}

/// Runs the full and channel evolutions once over every window the report
/// needs and assembles all delays.
pub fn delay_report(
    packet: &AdmissiblePacket,
    potential: &Potential,
    data: &ScatteringData,
    r_values: &[f64],
    quad: &Quadrature,
    options: &DelayOptions,
) -> Result<TimeDelayReport> {
    if r_values.windows(2).any(|w| !(w[1] > w[0])) || r_values.first().is_none_or(|r| *r <= 0.0) {
        return Err(Error::Config(
            "radii must be positive and increasing".into(),
        ));
    }
    let clock = std::time::Instant::now();
    let phi_in = to_in_representation(&packet.state, data.v_left, data.v_right, &data.grid)?;
    let tau_ew = ew_expectation(&phi_in, data)?;
    let predicted = divergence_coefficient(&phi_in, data)?;
    let (refl, trans) = scattered_states(&packet.state, data)?;

    let mut windows = WindowSet::symmetric(r_values);
    let halves = options.decompose.then(|| {
        let l = windows.extend(WindowSet::left_halves(r_values));
        let r = windows.extend(WindowSet::right_halves(r_values));
        (l, r)
    });
    let shifted = options
        .x0
        .map(|x0| windows.extend(WindowSet::translated(r_values, x0)));
    let mut channels = vec![Channel::Full, Channel::In, Channel::Out];
    if options.decompose {
        channels.extend([Channel::Reflected, Channel::Transmitted]);
    }
    let run = sojourn_integrals(
        &packet.state,
        potential,
        Some((&refl, &trans)),
        &windows,
        quad,
        &channels,
    )?;

    let curve = SojournCurve::from_run(&run, r_values)?;
    let delays = local_time_delays(&curve);
    let sigma = SigmaCurves::from_run(&run, r_values)?;
    let rule = &options.plateau;
    let mut notes = Vec::new();
    let mut settle = |what: &str, r: Result<Plateau>| match r {
        Ok(p) => Some(p),
        Err(e) => {
            notes.push(format!("{what}: {e}"));
            None
        }
    };
    let plateau = settle("tau_sym", symmetrized_global_delay(&delays, rule));
    let sigma_plateau = settle("sigma", detect_plateau(r_values, &sigma.average(), rule));

    let decomposition = match halves {
        Some((l, r)) => Some(LrDecomposition::from_run(&run, r_values, l, r)?),
        None => None,
    };
    let lr_plateau = decomposition
        .as_ref()
        .and_then(|d| settle("tau_l + tau_r", detect_plateau(r_values, &d.sum(), rule)));

    let translated = match (options.x0, shifted) {
        (Some(x0), Some(start)) => {
            let full = run.require(Channel::Full)?;
            let inc = run.require(Channel::In)?;
            let out = run.require(Channel::Out)?;
            let tau_sym: Vec<f64> = (0..r_values.len())
                .map(|i| {
                    let w = start + i;
                    full.total(w) - 0.5 * (inc.total(w) + out.total(w))
                })
                .collect();
            Some(TranslatedReport {
                x0,
                spectral: translated_delay(&phi_in, data, x0)?,
                plateau: settle(
                    "translated tau_sym",
                    detect_plateau(r_values, &tau_sym, rule),
                ),
                tau_sym,
            })
        }
        _ => None,
    };

    let fit_window = options.fit_window.unwrap_or_else(|| {
        let hi = *r_values.last().unwrap();
        let n = r_values.len();
        let lo = r_values[(n / 2).min(n.saturating_sub(5))];
        (lo, hi)
    });
    let divergence_in = fit_divergence(r_values, &delays.tau_in, fit_window);
    let divergence_out = fit_divergence(r_values, &delays.tau_out, fit_window);
    if let Err(e) = &divergence_in {
        notes.push(format!("divergence fit: {e}"));
    }

    let budget = ErrorBudget {
        moller_defect: run.moller_defect.unwrap_or(0.0),
        quadrature_tail: run.max_tail,
        derivative: tau_ew.error,
        plateau_spread: plateau.map(|p| p.spread).unwrap_or(f64::NAN),
    };
    Ok(TimeDelayReport {
        potential: potential.to_config(),
        packet: packet.spec.clone(),
        delays,
        sigma,
        decomposition,
        tau_ew,
        plateau,
        sigma_plateau,
        lr_plateau,
        divergence_in: divergence_in.ok(),
        divergence_out: divergence_out.ok(),
        divergence_predicted: predicted,
        natural_time_scale: natural_time_scale(&phi_in),
        translated,
        budget,
        sojourn: curve.meta,
        sojourn_seconds: run.seconds,
        notes,
        seconds: clock.elapsed().as_secs_f64(),
    })
}

impl TimeDelayReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// One row per radius: local delays, σ surrogates and, when computed,
    /// the ℓ/r parts and the translated delay.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("R,tau_in,tau_out,tau_sym,sigma_in,sigma_out");
        if self.decomposition.is_some() {
            out.push_str(",tau_l,tau_r");
        }
        if self.translated.is_some() {
            out.push_str(",tau_sym_x0");
        }
        out.push('\n');
        let d = &self.delays;
        for i in 0..d.r_values.len() {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                d.r_values[i],
                d.tau_in[i],
                d.tau_out[i],
                d.tau_sym[i],
                self.sigma.sigma_in[i],
                self.sigma.sigma_out[i]
            );
            if let Some(lr) = &self.decomposition {
                let _ = write!(out, ",{},{}", lr.tau_l[i], lr.tau_r[i]);
            }
            if let Some(t) = &self.translated {
                let _ = write!(out, ",{}", t.tau_sym[i]);
            }
            out.push('\n');
        }
        out
    }
}
