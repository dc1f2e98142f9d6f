//! Stationary scattering against closed-form plane-wave matching.

use num_complex::Complex64;
use stepdelay::potential::{make_pure_step, make_smooth_step, make_step_plus_bump};
use stepdelay::stationary::{
    ew_matrix, jost_left, jost_right, s_matrix_at, scattering_sweep, wronskian, DerivativeScheme,
    EnergyGrid, GridSpec, Solver,
};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn grid(half: f64) -> GridSpec {
    GridSpec {
        x_min: -half,
        x_max: half,
        spacing: 0.05,
    }
}

// Step (0, 1): match plane waves at x = 0.
fn step_amplitudes(e: f64) -> (f64, f64) {
    let (kl, kr) = (e.sqrt(), (e - 1.0).sqrt());
    (2.0 * (kl * kr).sqrt() / (kl + kr), (kl - kr) / (kl + kr))
}

#[test]
fn pure_step_right_jost_matches_matching_solution() {
    let pot = make_pure_step(0.0, 1.0).unwrap();
    let f = jost_right(&pot, 2.0, &grid(6.0)).unwrap();
    let k = 2f64.sqrt();
    // x < 0: α e^{ikx} + β e^{-ikx} with α + β = 1, ik(α - β) = i.
    let alpha = 0.5 * (1.0 + 1.0 / k);
    let beta = 0.5 * (1.0 - 1.0 / k);
    for (i, &x) in f.x.iter().enumerate() {
        let expect = if x >= 0.0 {
            (I * x).exp()
        } else {
            alpha * (I * k * x).exp() + beta * (-I * k * x).exp()
        };
        assert!((f.values[i] - expect).norm() < 1e-9, "x = {x}");
    }
    let res = f.residual(&pot);
    assert!(res < 1e-5, "{res}");
}

#[test]
fn pure_step_left_jost_below_barrier() {
    let pot = make_pure_step(0.0, 1.0).unwrap();
    let f = jost_left(&pot, 0.5, &grid(6.0)).unwrap();
    let k = 0.5f64.sqrt();
    let kappa = 0.5f64.sqrt();
    let a = 0.5 * (1.0 - I * k / kappa);
    let b = 0.5 * (1.0 + I * k / kappa);
    for (i, &x) in f.x.iter().enumerate() {
        let expect = if x < 0.0 {
            (-I * k * x).exp()
        } else {
            a * (kappa * x).exp() + b * (-kappa * x).exp()
        };
        let scale = expect.norm().max(1.0);
        assert!((f.values[i] - expect).norm() / scale < 1e-9, "x = {x}");
    }
}

#[test]
fn constant_potential_left_jost() {
    let pot = make_pure_step(0.3, 0.3).unwrap();
    let f = jost_left(&pot, 1.3, &grid(5.0)).unwrap();
    for (i, &x) in f.x.iter().enumerate() {
        assert!((f.values[i] - (-I * x).exp()).norm() < 1e-9);
    }
}

#[test]
fn pure_step_wronskian_and_s_matrix() {
    let pot = make_pure_step(0.0, 1.0).unwrap();
    let g = grid(6.0);
    let fl = jost_left(&pot, 2.0, &g).unwrap();
    let fr = jost_right(&pot, 2.0, &g).unwrap();
    let (kl, kr) = (2f64.sqrt(), 1.0);
    let w = wronskian(&fl, &fr).unwrap();
    assert!((w.value - I * (kl + kr)).norm() < 1e-9);
    assert!(w.max_deviation < 1e-8 * w.value.norm());

    let p = s_matrix_at(&pot, 2.0, &g).unwrap();
    let (t, r) = step_amplitudes(2.0);
    assert!((t - 0.98517).abs() < 1e-5 && (r - 0.17157).abs() < 1e-5);
    assert!((p.s_rl().unwrap() - t).norm() < 1e-9);
    assert!((p.s_lr().unwrap() - t).norm() < 1e-9);
    assert!((p.s_ll - r).norm() < 1e-9);
    assert!((p.s_rr().unwrap() + r).norm() < 1e-9);
    assert!((p.s_ll.norm_sqr() + p.s_rl().unwrap().norm_sqr() - 1.0).abs() < 1e-10);
}

#[test]
fn pure_step_total_reflection_phase() {
    let pot = make_pure_step(0.0, 1.0).unwrap();
    for e in [0.2, 0.5, 0.8] {
        let p = s_matrix_at(&pot, e, &grid(6.0)).unwrap();
        let (k, kappa) = (f64::sqrt(e), f64::sqrt(1.0 - e));
        let r = (k - I * kappa) / (k + I * kappa);
        assert!((p.s_ll - r).norm() < 1e-9, "E = {e}");
        assert!((p.s_ll.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn smooth_step_self_convergence() {
    let pot = make_smooth_step(0.0, 1.0, 1.0).unwrap();
    let solver = Solver::new(&pot);
    let coarse = solver.grid_for(2.0);
    let fine = GridSpec {
        spacing: coarse.spacing / 2.0,
        ..coarse
    };
    let a = solver.s_matrix_on(2.0, &coarse).unwrap();
    let mut tight = solver.clone();
    tight.settings.ode_rtol = 1e-13;
    let b = tight.s_matrix_on(2.0, &fine).unwrap();
    assert!((a.s_rl().unwrap() - b.s_rl().unwrap()).norm() < 1e-6);
    assert!((a.s_ll - b.s_ll).norm() < 1e-6);
}

#[test]
fn smooth_step_tends_to_pure_step() {
    // A narrow tanh step approaches the sharp step.
    let sharp = make_pure_step(0.0, 1.0).unwrap();
    let narrow = make_smooth_step(0.0, 1.0, 0.01).unwrap();
    let a = Solver::new(&sharp).s_matrix(2.0).unwrap();
    let b = Solver::new(&narrow).s_matrix(2.0).unwrap();
    assert!((a.s_rl().unwrap() - b.s_rl().unwrap()).norm() < 1e-3);
}

#[test]
fn free_and_constant_sweeps_have_no_delay() {
    for pot in [
        make_pure_step(0.0, 0.0).unwrap(),
        make_pure_step(0.4, 0.4).unwrap(),
    ] {
        let data = scattering_sweep(&pot, &EnergyGrid::uniform(0.6, 3.0, 41)).unwrap();
        for (s, t) in data.s.iter().zip(&data.t) {
            assert!(t.t_ll.norm() < 1e-8);
            assert!(t.t_lr.unwrap().norm() < 1e-8);
            assert!((s.s_rl().unwrap() - 1.0).norm() < 1e-9);
        }
    }
}

#[test]
fn pure_step_ew_diagonal_vanishes_above_barrier() {
    let pot = make_pure_step(0.0, 1.0).unwrap();
    let data = scattering_sweep(&pot, &EnergyGrid::uniform(1.3, 3.0, 69)).unwrap();
    let mut off_diag: f64 = 0.0;
    for t in &data.t {
        // Finite differences in E limit these, worst at the one-sided ends.
        assert!(
            t.t_ll.norm() < 1e-4 && t.t_rr.unwrap().norm() < 1e-4,
            "{t:?}"
        );
        assert!(t.hermiticity_defect < 1e-4);
        off_diag = off_diag.max(t.t_lr.unwrap().norm());
    }
    assert!(off_diag > 1e-2);
    // Off-diagonal entry from d/dE of the closed forms: S real, so
    // t_lr = -i (s_rl s_rr' + s_ll s_lr') with s_rr = -s_ll.
    let e = data.energies()[30];
    let h = 1e-5;
    let d = |f: &dyn Fn(f64) -> f64| (f(e + h) - f(e - h)) / (2.0 * h);
    let t_of = |x: f64| step_amplitudes(x).0;
    let r_of = |x: f64| step_amplitudes(x).1;
    let expect = -I * (t_of(e) * -d(&r_of) + r_of(e) * d(&t_of));
    let got = ew_matrix(&data, e, DerivativeScheme::Central5).unwrap();
    assert!(
        (got.t_lr.unwrap() - expect).norm() < 1e-6,
        "{:?} vs {expect}",
        got.t_lr
    );
}

#[test]
fn bump_sweep_structure() {
    let pot = make_step_plus_bump(0.0, 1.0, 1.0, 0.3, 0.0, 1.0).unwrap();
    let data = scattering_sweep(
        &pot,
        &EnergyGrid::segments(&[(0.2, 0.9, 40), (1.2, 3.0, 121)]),
    )
    .unwrap();
    assert!(data.max_unitarity_defect() < 1e-6);
    for (s, t) in data.s.iter().zip(&data.t) {
        assert!(s.reciprocity_defect() < 1e-6);
        assert!(s.reflection_defect() < 1e-6);
        assert!(s.time_reversal_defect() < 1e-6);
        assert!(t.hermiticity_defect < 10.0 * t.derivative_error.max(1e-8));
    }
}

#[test]
fn derivative_schemes_converge() {
    // Halving the energy step shrinks the 3-point/5-point disagreement.
    let pot = make_step_plus_bump(0.0, 1.0, 1.0, 0.3, 0.0, 1.0).unwrap();
    let coarse = scattering_sweep(&pot, &EnergyGrid::uniform(1.5, 2.5, 21)).unwrap();
    let fine = scattering_sweep(&pot, &EnergyGrid::uniform(1.5, 2.5, 41)).unwrap();
    let e = 2.0;
    let a = ew_matrix(&coarse, e, DerivativeScheme::Central5).unwrap();
    let b = ew_matrix(&fine, e, DerivativeScheme::Central5).unwrap();
    assert!(b.derivative_error < a.derivative_error);
    assert!((a.t_ll - b.t_ll).norm() < 1e-3);
}

#[test]
fn threshold_energies_are_rejected_in_sweeps() {
    let pot = make_pure_step(0.0, 1.0).unwrap();
    let err = scattering_sweep(&pot, &EnergyGrid::uniform(0.9, 1.1, 5)).unwrap_err();
    assert!(
        matches!(err.root(), stepdelay::Error::Threshold { .. }),
        "{err}"
    );
}
