//! The acceptance matrix: canonical potentials and packets, and one check per
//! criterion. Shared by the acceptance test target and `stepdelay verify-all`.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    left_tail_decay, scattered_states, sojourn_integrals, weighted_decay, Channel, Quadrature,
    WindowSet,
};
use crate::numerics::{geomspace, linspace};
use crate::potential::{make_pure_step, make_smooth_step, make_step_plus_bump, Potential};
use crate::spectral::{make_admissible_packet, AdmissiblePacket, PacketSpec, SpatialGrid};
use crate::stationary::{scattering_sweep, EnergyGrid, ScatteringData, Solver};
use crate::timedelay::{
    delay_report, detect_plateau, sigma_surrogates, DelayOptions, Plateau, TimeDelayReport,
};
use crate::{Error, Result};

/// Energy samples per packet window in every sweep feeding a delay.
pub const POINTS_PER_WINDOW: usize = 400;

/// Step + bump of criterion 4: `(0, 1)`, width 1, bump 0.3 at 0 of width 1.
pub fn step_plus_bump() -> Potential {
    make_step_plus_bump(0.0, 1.0, 1.0, 0.3, 0.0, 1.0).expect("valid parameters")
}

pub fn tanh_step() -> Potential {
    make_smooth_step(0.0, 1.0, 1.0).expect("valid parameters")
}

pub fn pure_step() -> Potential {
    make_pure_step(0.0, 1.0).expect("valid parameters")
}

/// `(name, potential)` for the three canonical families.
pub fn canonical_potentials() -> Vec<(&'static str, Potential)> {
    vec![
        ("pure-step", pure_step()),
        ("tanh-step", tanh_step()),
        ("step-plus-bump", step_plus_bump()),
    ]
}

fn spec(windows: Vec<[f64; 2]>, center_p: f64, spread: f64) -> PacketSpec {
    PacketSpec {
        center_x: 0.0,
        center_p,
        spread,
        windows,
        theta: 5.0,
        leakage_tol: 0.75,
    }
}

/// Packet above `V_r = 1`, energies in `[1.5, 2.5]`.
pub fn above_packet() -> PacketSpec {
    spec(vec![[1.5, 2.5]], 2f64.sqrt(), 15.0)
}

/// Packet below `V_r = 1`, energies in `[0.3, 0.7]`.
pub fn below_packet() -> PacketSpec {
    spec(vec![[0.3, 0.7]], 0.5f64.sqrt(), 18.0)
}

/// Packet with one window on each side of `V_r = 1`.
pub fn split_packet() -> PacketSpec {
    spec(vec![[0.3, 0.7], [1.5, 2.5]], 1.05, 1.5)
}

pub fn canonical_packets() -> Vec<(&'static str, PacketSpec)> {
    vec![
        ("above", above_packet()),
        ("below", below_packet()),
        ("split", split_packet()),
    ]
}

/// Grid used for every time-dependent run.
pub fn dynamics_grid() -> SpatialGrid {
    SpatialGrid::centered(1 << 14, 0.1)
}

/// Radii of every delay curve.
pub fn canonical_radii() -> Vec<f64> {
    geomspace(10.0, 100.0, 10)
}

/// Radii for the slow `[0.3, 0.7]` packet, whose delay curve settles later.
pub fn slow_radii() -> Vec<f64> {
    geomspace(10.0, 140.0, 12)
}

/// Horizon long enough for the slow packet to clear the largest slow radius.
pub fn slow_quadrature() -> Quadrature {
    Quadrature {
        t_asym: 170.0,
        t_max: 190.0,
        ..Quadrature::default()
    }
}

/// Packet on `grid` together with its sweep.
pub fn prepare(
    spec: &PacketSpec,
    pot: &Potential,
    grid: SpatialGrid,
) -> Result<(AdmissiblePacket, ScatteringData)> {
    let pk = make_admissible_packet(spec, pot.v_left, pot.v_right, grid)?;
    let data = scattering_sweep(pot, &pk.energy_grid(POINTS_PER_WINDOW))?;
    Ok((pk, data))
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    /// `false` when quick mode left the criterion out.
    pub ran: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let tag = match (self.ran, self.passed) {
            (false, _) => "SKIP",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        format!(
            "criterion {:>2} [{tag}] {}: {} ({:.1} s)",
            self.id, self.title, self.detail, self.seconds
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Only the criteria that finish in seconds.
    pub quick: bool,
    /// Multiplies every tolerance.
    pub tol_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            quick: false,
            tol_scale: 1.0,
        }
    }
}

// A check yields (passed, detail); errors become failures with the error text.
type Check = Result<(bool, String)>;

fn record(id: u8, title: &'static str, check: impl FnOnce() -> Check) -> CriterionResult {
    let clock = Instant::now();
    let (passed, detail) = match check() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionResult {
        id,
        title,
        passed,
        ran: true,
        detail,
        seconds: clock.elapsed().as_secs_f64(),
    }
}

fn skipped(id: u8, title: &'static str) -> CriterionResult {
    CriterionResult {
        id,
        title,
        passed: false,
        ran: false,
        detail: "left out in quick mode".into(),
        seconds: 0.0,
    }
}

// |a - b| <= max(rel |b|, abs)
fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= (rel * b.abs()).max(abs)
}

pub fn criterion_1(scale: f64) -> Check {
    let tol = 1e-6 * scale;
    let pot = tanh_step();
    let energies: Vec<f64> = (1..=512).map(|i| 1.05 + 2.95 * i as f64 / 512.0).collect();
    let data = scattering_sweep(&pot, &EnergyGrid::from_points(energies))?;
    let mut worst = [0f64; 3];
    for s in &data.s {
        worst[0] = worst[0].max(s.unitarity_defect);
        worst[1] = worst[1].max(s.reciprocity_defect());
        worst[2] = worst[2].max(s.reflection_defect());
    }
    Ok((
        worst.iter().all(|w| *w <= tol),
        format!(
            "512 energies: unitarity {:.1e}, |s_rl - s_lr| {:.1e}, ||s_ll| - |s_rr|| {:.1e} (tol {tol:.0e})",
            worst[0], worst[1], worst[2]
        ),
    ))
}

pub fn criterion_2(scale: f64) -> Check {
    let tol = 1e-6 * scale;
    let pot = pure_step();
    let mut s_err: f64 = 0.0;
    for e in [1.2f64, 2.0, 3.0] {
        let (kl, kr) = (e.sqrt(), (e - 1.0).sqrt());
        let rl = 2.0 * (kl * kr).sqrt() / (kl + kr);
        let ll = (kl - kr) / (kl + kr);
        let s = Solver::new(&pot).s_matrix(e)?;
        let got_rl = s
            .s_rl()
            .ok_or_else(|| Error::Domain("missing s_rl".into()))?;
        s_err = s_err.max((got_rl - rl).norm()).max((s.s_ll - ll).norm());
    }
    let below = scattering_sweep(&pot, &EnergyGrid::uniform(0.05, 0.95, 19))?;
    let modulus = below
        .s
        .iter()
        .map(|s| (s.s_ll.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    // 𝒯 from five-point stencils of half-width 2·10⁻³ around each energy
    let h = 1e-3;
    let centers = linspace(1.2, 4.0, 15);
    let diag = centers
        .par_iter()
        .map(|&e| -> Result<f64> {
            let data = scattering_sweep(&pot, &EnergyGrid::uniform(e - 2.0 * h, e + 2.0 * h, 5))?;
            let t = &data.t[2];
            Ok(t.t_ll.norm().max(t.t_rr.map_or(0.0, |v| v.norm())))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok((
        s_err <= tol && modulus <= tol && diag <= tol,
        format!(
            "matching formulas {s_err:.1e}, ||s_ll| - 1| below V_r {modulus:.1e}, 𝒯 diagonal above V_r {diag:.1e} (tol {tol:.0e})"
        ),
    ))
}

pub fn criterion_3(scale: f64) -> Check {
    let tol = 1e-3 * scale;
    let pot = make_pure_step(0.0, 0.0)?;
    let spec = spec(vec![[1.2, 2.8]], 2f64.sqrt(), 6.0);
    let pk = make_admissible_packet(&spec, 0.0, 0.0, SpatialGrid::centered(1 << 14, 0.1))?;
    let (x1, x2) = (-5.0, 7.0);
    let quad = Quadrature {
        t_asym: 60.0,
        t_max: 60.0,
        ..Quadrature::default()
    };
    let windows = WindowSet {
        intervals: vec![(x1, x2)],
    };
    let run = sojourn_integrals(&pk.state, &pot, None, &windows, &quad, &[Channel::In])?;
    let dynamic = run.require(Channel::In)?.total(0);
    let exact = 0.5 * (x2 - x1) * pk.state.inverse_momentum_moment();
    let rel = (dynamic - exact).abs() / exact;
    Ok((
        rel <= tol,
        format!(
            "sojourn in [{x1}, {x2}] {dynamic:.6} vs {exact:.6}, rel {rel:.1e} (tol {tol:.0e})"
        ),
    ))
}

/// Everything criteria 4, 5, 6, 8 and 9 read from.
#[derive(Debug, Clone)]
pub struct CentralRun {
    pub report: TimeDelayReport,
    /// σ-only path on the same packet, timed on its own.
    pub sigma_plateau: Option<Plateau>,
    pub sigma_seconds: f64,
    pub full_seconds: f64,
}

pub fn central_run() -> Result<CentralRun> {
    let pot = step_plus_bump();
    let (pk, data) = prepare(&above_packet(), &pot, dynamics_grid())?;
    let rs = canonical_radii();
    let quad = Quadrature::default();
    let options = DelayOptions {
        x0: Some(2.0),
        ..DelayOptions::default()
    };
    let report = delay_report(&pk, &pot, &data, &rs, &quad, &options)?;
    let sigma = sigma_surrogates(&pk, &pot, &data, &rs, &quad)?;
    let sigma_plateau = detect_plateau(&rs, &sigma.average(), &options.plateau).ok();
    Ok(CentralRun {
        full_seconds: report.sojourn_seconds,
        report,
        sigma_plateau,
        sigma_seconds: sigma.seconds,
    })
}

fn plateau_of(p: Option<Plateau>, what: &str) -> Result<Plateau> {
    p.ok_or_else(|| Error::Domain(format!("no plateau for {what}")))
}

fn central_tolerance(reference: f64, scale: f64) -> f64 {
    (0.05 * reference.abs()).max(0.02) * scale
}

pub fn criterion_4(run: &CentralRun, scale: f64) -> Check {
    let r = &run.report;
    let p = plateau_of(r.plateau, "tau_sym")?;
    let tol = central_tolerance(r.tau_ew.value, scale);
    let diff = (p.value - r.tau_ew.value).abs();
    Ok((
        diff <= tol,
        format!(
            "plateau(tau_sym) {:.5} ± {:.1e} vs <phi|T phi> {:.5}, |diff| {diff:.1e} (tol {tol:.1e})",
            p.value, p.spread, r.tau_ew.value
        ),
    ))
}

/// Equal-asymptote companion of criterion 5.
pub fn flat_run() -> Result<TimeDelayReport> {
    let pot = make_step_plus_bump(0.0, 0.0, 1.0, 0.3, 0.0, 1.0)?;
    let (pk, data) = prepare(&above_packet(), &pot, dynamics_grid())?;
    let options = DelayOptions {
        decompose: false,
        ..DelayOptions::default()
    };
    delay_report(
        &pk,
        &pot,
        &data,
        &canonical_radii(),
        &Quadrature::default(),
        &options,
    )
}

pub fn criterion_5(run: &CentralRun, flat: &TimeDelayReport, scale: f64) -> Check {
    let r = &run.report;
    let c = r.divergence_predicted;
    let fit_in = r
        .divergence_in
        .ok_or_else(|| Error::Domain("no slope fit for tau_in".into()))?;
    let fit_out = r
        .divergence_out
        .ok_or_else(|| Error::Domain("no slope fit for tau_out".into()))?;
    let rel = 0.05 * scale;
    let ok_in = close(fit_in.slope, c, rel, 0.0);
    let ok_out = close(fit_out.slope, -c, rel, 0.0);
    let bound = 0.01 * scale * flat.natural_time_scale;
    let flat_in = flat.divergence_in.map_or(f64::INFINITY, |f| f.slope.abs());
    let flat_out = flat.divergence_out.map_or(f64::INFINITY, |f| f.slope.abs());
    Ok((
        ok_in && ok_out && flat_in <= bound && flat_out <= bound,
        format!(
            "c {c:.5}, slope(tau_in) {:.5}, slope(tau_out) {:.5} (tol 5%); V_l = V_r slopes {flat_in:.1e}, {flat_out:.1e} (bound {bound:.1e})",
            fit_in.slope, fit_out.slope
        ),
    ))
}

// Error bar shared by the dynamical comparisons: both plateau spreads plus
// the certified Møller, tail and derivative errors.
fn combined(r: &TimeDelayReport, a: &Plateau, b: &Plateau) -> f64 {
    a.spread + b.spread + r.budget.moller_defect + r.budget.quadrature_tail + r.budget.derivative
}

pub fn criterion_6(run: &CentralRun, scale: f64) -> Check {
    let r = &run.report;
    let tau = plateau_of(r.plateau, "tau_sym")?;
    let sigma = plateau_of(run.sigma_plateau, "(sigma_in + sigma_out)/2")?;
    let bar = combined(r, &tau, &sigma) * scale;
    let diff = (sigma.value - tau.value).abs();
    let speedup = run.full_seconds / run.sigma_seconds;
    Ok((
        diff <= bar && speedup >= 5.0,
        format!(
            "sigma plateau {:.5} vs tau_sym {:.5}, |diff| {diff:.1e} (bar {bar:.1e}); speedup {speedup:.1}x (need 5x)",
            sigma.value, tau.value
        ),
    ))
}

pub fn criterion_7(scale: f64) -> Check {
    let pot = tanh_step();
    let (pk, data) = prepare(&below_packet(), &pot, dynamics_grid())?;
    let (_, trans) = scattered_states(&pk.state, &data)?;
    let trans_norm = trans.norm_sq().sqrt();
    let quad = slow_quadrature();
    let options = DelayOptions {
        decompose: false,
        ..DelayOptions::default()
    };
    let report = delay_report(&pk, &pot, &data, &slow_radii(), &quad, &options)?;
    let d = &report.delays;
    let gap = d
        .tau_in
        .iter()
        .zip(&d.tau_out)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let gap_tol = (quad.tail_tol + report.budget.moller_defect + 1e-6) * scale;
    let p = plateau_of(report.plateau, "tau_sym")?;
    let tol = central_tolerance(report.tau_ew.value, scale);
    let diff = (p.value - report.tau_ew.value).abs();
    Ok((
        trans_norm <= 1e-6 * scale && gap <= gap_tol && diff <= tol,
        format!(
            "||S_rl phi|| {trans_norm:.1e}; max |tau_in - tau_out| {gap:.1e} (tol {gap_tol:.1e}); plateau {:.5} vs EW {:.5} (tol {tol:.1e})",
            p.value, report.tau_ew.value
        ),
    ))
}

pub fn criterion_8(run: &CentralRun, scale: f64) -> Check {
    let r = &run.report;
    let tau = plateau_of(r.plateau, "tau_sym")?;
    let lr = plateau_of(r.lr_plateau, "tau_l + tau_r")?;
    let bar = combined(r, &tau, &lr) * scale;
    let diff = (lr.value - tau.value).abs();
    Ok((
        diff <= bar,
        format!(
            "tau_l + tau_r {:.5} vs tau_sym {:.5}, |diff| {diff:.1e} (bar {bar:.1e})",
            lr.value, tau.value
        ),
    ))
}

pub fn criterion_9(run: &CentralRun, scale: f64) -> Check {
    let t = run
        .report
        .translated
        .as_ref()
        .ok_or_else(|| Error::Domain("translated delay was not computed".into()))?;
    let p = plateau_of(t.plateau, "translated tau_sym")?;
    let tol = 0.05 * scale;
    let rel = (p.value - t.spectral.value).abs() / t.spectral.value.abs();
    Ok((
        rel <= tol,
        format!(
            "x0 = {}: spectral {:.5} vs dynamical {:.5}, rel {rel:.1e} (tol 5%)",
            t.x0, t.spectral.value, p.value
        ),
    ))
}

pub fn criterion_10(scale: f64) -> Check {
    let pk = make_admissible_packet(
        &above_packet(),
        0.0,
        1.0,
        SpatialGrid::centered(1 << 15, 0.1),
    )?;
    let times = geomspace(20.0, 300.0, 16);
    let left = left_tail_decay(&pk.state, 0.0, &times, 1e-16)?;
    let weighted = weighted_decay(&pk.state, 0.0, 2.0, &times, 1e-16)?;
    let (a, b) = (4.0 / scale, 3.9 / scale);
    Ok((
        left.exponent >= a && weighted.exponent >= b,
        format!(
            "left-tail exponent {:.2} ± {:.2} (need {a}), weighted-norm exponent {:.2} ± {:.2} (need {b})",
            left.exponent, left.exponent_stderr, weighted.exponent, weighted.exponent_stderr
        ),
    ))
}

pub fn criterion_11(scale: f64) -> Check {
    let tol = 1e-6 * scale;
    let cells: Vec<(&str, &str, Potential, PacketSpec)> = canonical_potentials()
        .into_iter()
        .flat_map(|(pn, pot)| {
            canonical_packets()
                .into_iter()
                .map(move |(kn, spec)| (pn, kn, pot.clone(), spec))
        })
        .collect();
    let rows = cells
        .par_iter()
        .map(|(pn, kn, pot, spec)| -> Result<(String, f64, f64)> {
            let (pk, data) = prepare(spec, pot, SpatialGrid::centered(1 << 15, 0.1))?;
            let (refl, trans) = scattered_states(&pk.state, &data)?;
            let norm = (refl.norm_sq() + trans.norm_sq() - pk.state.norm_sq()).abs();
            let reversal = data
                .s
                .iter()
                .map(|s| s.time_reversal_defect())
                .fold(0.0, f64::max);
            Ok((format!("{pn}/{kn}"), norm, reversal))
        })
        .collect::<Result<Vec<_>>>()?;
    let norm = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let reversal = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok((
        norm <= tol && reversal <= tol,
        format!(
            "{} cells: norm bookkeeping {norm:.1e}, time reversal {reversal:.1e} (tol {tol:.0e})",
            rows.len()
        ),
    ))
}

pub const TITLES: [&str; 11] = [
    "S-matrix structure",
    "analytic step oracle",
    "free sojourn identity",
    "central identity",
    "divergence structure",
    "sigma-surrogate equivalence",
    "total reflection",
    "decomposition",
    "translated interval",
    "propagation estimates",
    "channel-identity bookkeeping",
];

/// Runs every criterion in order; quick mode leaves out the ones that need
/// long full-Hamiltonian evolutions (4 to 9).
pub fn run_all(
    options: &VerifyOptions,
    mut progress: impl FnMut(&CriterionResult),
) -> Vec<CriterionResult> {
    let s = options.tol_scale;
    let mut out = Vec::new();
    let mut push = |r: CriterionResult| {
        progress(&r);
        out.push(r);
    };
    push(record(1, TITLES[0], || criterion_1(s)));
    push(record(2, TITLES[1], || criterion_2(s)));
    push(record(3, TITLES[2], || criterion_3(s)));
    if options.quick {
        for id in 4..=9u8 {
            push(skipped(id, TITLES[id as usize - 1]));
        }
    } else {
        let clock = Instant::now();
        let central = central_run();
        let shared = clock.elapsed().as_secs_f64();
        let with = |id: u8, f: &dyn Fn(&CentralRun) -> Check| {
            let mut r = record(id, TITLES[id as usize - 1], || match &central {
                Ok(run) => f(run),
                Err(e) => Err(Error::Domain(format!("central run: {e}"))),
            });
            // the shared run is charged to the first criterion reading it
            if id == 4 {
                r.seconds += shared;
            }
            r
        };
        push(with(4, &|run| criterion_4(run, s)));
        let clock = Instant::now();
        let flat = flat_run();
        let mut r5 = with(5, &|run| match &flat {
            Ok(f) => criterion_5(run, f, s),
            Err(e) => Err(Error::Domain(format!("equal-asymptote run: {e}"))),
        });
        r5.seconds += clock.elapsed().as_secs_f64();
        push(r5);
        push(with(6, &|run| criterion_6(run, s)));
        push(record(7, TITLES[6], || criterion_7(s)));
        push(with(8, &|run| criterion_8(run, s)));
        push(with(9, &|run| criterion_9(run, s)));
    }
    push(record(10, TITLES[9], || criterion_10(s)));
    push(record(11, TITLES[10], || criterion_11(s)));
    out
}

/// Sanity check on a report against its own EW expectation, used by the
/// delay experiment of the CLI.
pub fn central_identity_holds(report: &TimeDelayReport) -> Option<bool> {
    report.plateau.map(|p| {
        (p.value - report.tau_ew.value).abs() <= central_tolerance(report.tau_ew.value, 1.0)
    })
}
