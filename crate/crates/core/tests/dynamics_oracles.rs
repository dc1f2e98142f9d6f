use num_complex::Complex64;
use stepdelay::dynamics::{
    evolve_channel, evolve_full, left_tail_decay, moller_minus, scattered_states,
    sojourn_integrals, split_step_order, weighted_decay, Channel, Quadrature, WindowSet,
};
use stepdelay::numerics::geomspace;
use stepdelay::potential::{make_pure_step, make_smooth_step, make_step_plus_bump};
use stepdelay::spectral::{
    make_admissible_packet, AdmissiblePacket, PacketSpec, SpatialGrid, SpatialState,
};
use stepdelay::stationary::scattering_sweep;

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

fn packet(window: [f64; 2], center_p: f64, spread: f64, n: usize) -> AdmissiblePacket {
    let spec = PacketSpec {
        center_x: 0.0,
        center_p,
        spread,
        windows: vec![window],
        theta: 5.0,
        leakage_tol: 0.75,
    };
    make_admissible_packet(&spec, 0.0, 1.0, SpatialGrid::centered(n, 0.1)).unwrap()
}

#[test]
fn free_gaussian_matches_closed_form() {
    // ψ(x, t) = s/√a · exp(i p₀ x - i p₀² t - i κ t - (x - 2 p₀ t)²/(4a)),  a = s² + i t
    let (s, p0, kappa, t) = (2.0, 1.3, 0.4, 6.0);
    let grid = SpatialGrid::centered(4096, 0.05);
    let st = gaussian(grid, 0.0, p0, s);
    let ev = evolve_channel(&st, kappa, t);
    let a = Complex64::new(s * s, t);
    let mut worst: f64 = 0.0;
    for (m, v) in ev.values().iter().enumerate() {
        let x = grid.x(m);
        let y = x - 2.0 * p0 * t;
        let phase = Complex64::new(0.0, p0 * x - (p0 * p0 + kappa) * t);
        let exact = s / a.sqrt() * (phase - y * y / (4.0 * a)).exp();
        worst = worst.max((v - exact).norm());
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn split_step_is_second_order() {
    let pot = make_smooth_step(0.0, 1.0, 1.0).unwrap();
    let st = gaussian(SpatialGrid::centered(2048, 0.05), -8.0, 1.5, 2.0);
    let order = split_step_order(&st, &pot, 4.0, 0.04).unwrap();
    assert!((1.9..2.2).contains(&order), "{order}");
}

#[test]
fn split_step_preserves_norm() {
    let pot = make_step_plus_bump(0.0, 1.0, 1.0, 0.3, 0.0, 1.0).unwrap();
    let st = gaussian(SpatialGrid::centered(4096, 0.05), -10.0, 1.5, 2.0);
    let ev = evolve_full(&st, &pot, 10.0, 0.01).unwrap();
    assert!((ev.norm_sq() - st.norm_sq()).abs() < 1e-6 * st.norm_sq());
}

#[test]
fn moller_is_identity_without_interaction() {
    let pot = make_pure_step(0.3, 0.3).unwrap();
    let spec = PacketSpec {
        center_x: 0.0,
        center_p: 1.3,
        spread: 15.0,
        windows: vec![[1.5, 2.5]],
        theta: 5.0,
        leakage_tol: 0.75,
    };
    let pk = make_admissible_packet(&spec, 0.3, 0.3, SpatialGrid::centered(1 << 13, 0.1)).unwrap();
    let m = moller_minus(&pk.state, &pot, 20.0, 0.01, 1e-3).unwrap();
    assert!(m.defect < 1e-10, "{}", m.defect);
    assert!(m.state.distance(&pk.state) < 1e-10);
}

#[test]
fn moller_defect_decreases_and_bounds_isometry() {
    let pot = make_smooth_step(0.0, 1.0, 1.0).unwrap();
    let pk = packet([1.5, 2.5], 2f64.sqrt(), 15.0, 1 << 14);
    let a = moller_minus(&pk.state, &pot, 40.0, 0.01, 1.0).unwrap();
    let b = moller_minus(&pk.state, &pot, 80.0, 0.01, 1.0).unwrap();
    assert!(b.defect < a.defect, "{} vs {}", b.defect, a.defect);
    assert!(a.norm_defect <= a.defect && b.norm_defect <= b.defect);
}

#[test]
fn free_sojourn_times_coincide() {
    // V ≡ 0: full, incoming and outgoing evolutions are the same
    let pot = make_pure_step(0.0, 0.0).unwrap();
    let spec = PacketSpec {
        center_x: 0.0,
        center_p: 2f64.sqrt(),
        spread: 15.0,
        windows: vec![[1.5, 2.5]],
        theta: 5.0,
        leakage_tol: 0.75,
    };
    let pk = make_admissible_packet(&spec, 0.0, 0.0, SpatialGrid::centered(1 << 14, 0.1)).unwrap();
    let data = scattering_sweep(&pot, &pk.energy_grid(400)).unwrap();
    let (refl, trans) = scattered_states(&pk.state, &data).unwrap();
    let rs = [5.0, 10.0, 20.0, 40.0];
    let quad = Quadrature {
        t_asym: 60.0,
        t_max: 60.0,
        dt: 0.01,
        sample_every: 4,
        ..Quadrature::default()
    };
    let run = sojourn_integrals(
        &pk.state,
        &pot,
        Some((&refl, &trans)),
        &WindowSet::symmetric(&rs),
        &quad,
        &[Channel::Full, Channel::In, Channel::Out],
    )
    .unwrap();
    let (full, inc, out) = (
        run.full.as_ref().unwrap(),
        run.incoming.as_ref().unwrap(),
        run.outgoing.as_ref().unwrap(),
    );
    for (w, r) in rs.iter().enumerate() {
        assert!((full.total(w) - inc.total(w)).abs() < 1e-3, "R = {r}");
        assert!((out.total(w) - inc.total(w)).abs() < 1e-3, "R = {r}");
        // ∫|ψ_t(x)|² dt = ∫|φ̂(p)|²/(2p) dp at every x for a right-moving free packet
        let crossing = r * pk.state.inverse_momentum_moment();
        assert!((inc.total(w) - crossing).abs() < 1e-3, "R = {r}");
    }
    assert!(run.moller_defect.unwrap() < 1e-10);
}

#[test]
fn sojourn_times_grow_with_radius() {
    let pot = make_smooth_step(0.0, 1.0, 1.0).unwrap();
    let spec = PacketSpec {
        center_x: 0.0,
        center_p: 2f64.sqrt(),
        spread: 15.0,
        windows: vec![[1.5, 2.5]],
        theta: 5.0,
        leakage_tol: 0.75,
    };
    let pk = make_admissible_packet(&spec, 0.0, 1.0, SpatialGrid::centered(1 << 14, 0.1)).unwrap();
    let data = scattering_sweep(&pot, &pk.energy_grid(400)).unwrap();
    let (refl, trans) = scattered_states(&pk.state, &data).unwrap();
    let rs = [2.0, 5.0, 10.0, 20.0];
    let quad = Quadrature {
        t_asym: 50.0,
        t_max: 60.0,
        dt: 0.01,
        sample_every: 4,
        ..Quadrature::default()
    };
    let run = sojourn_integrals(
        &pk.state,
        &pot,
        Some((&refl, &trans)),
        &WindowSet::symmetric(&rs),
        &quad,
        &[Channel::Full, Channel::In, Channel::Out],
    )
    .unwrap();
    for c in [Channel::Full, Channel::In, Channel::Out] {
        let cw = run.channel(c).unwrap();
        for w in 1..rs.len() {
            assert!(
                cw.total(w) >= cw.total(w - 1) && cw.total(w - 1) >= 0.0,
                "{c:?}"
            );
        }
    }
    assert!(run.norm_drift.unwrap() < 1e-6);
}

#[test]
fn positive_momentum_left_tail_decays_fast() {
    let pk = packet([1.5, 2.5], 2f64.sqrt(), 15.0, 1 << 15);
    let ts = geomspace(20.0, 300.0, 16);
    let fit = left_tail_decay(&pk.state, 0.0, &ts, 1e-16).unwrap();
    assert!(fit.exponent >= 4.0, "{}", fit.exponent);
    let fit = weighted_decay(&pk.state, 0.0, 2.0, &ts, 1e-16).unwrap();
    assert!(fit.exponent >= 3.9, "{}", fit.exponent);
}
