use num_complex::Complex64;
use proptest::prelude::*;
use stepdelay::dynamics::{evolve_channel, tail_estimate};
use stepdelay::numerics::geomspace;
use stepdelay::potential::make_step_plus_bump;
use stepdelay::spectral::{SpatialGrid, SpatialState};
use stepdelay::stationary::Solver;
use stepdelay::timedelay::{detect_plateau, PlateauRule};

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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn s_matrix_is_unitary_and_reciprocal(
        v_right in 0.3f64..2.0,
        width in 0.5f64..2.0,
        height in -0.5f64..0.5,
        center in -1.0f64..1.0,
        above in 0.1f64..3.0,
    ) {
        let pot = make_step_plus_bump(0.0, v_right, width, height, center, 1.0).unwrap();
        let p = Solver::new(&pot).s_matrix(v_right + above).unwrap();
        prop_assert!(p.unitarity_defect < 1e-8, "{}", p.unitarity_defect);
        prop_assert!(p.reciprocity_defect() < 1e-8);
        prop_assert!(p.reflection_defect() < 1e-8);
    }

    #[test]
    fn below_the_upper_threshold_reflection_is_total(
        v_right in 0.5f64..2.0,
        height in -0.5f64..0.5,
        frac in 0.05f64..0.95,
    ) {
        let pot = make_step_plus_bump(0.0, v_right, 1.0, height, 0.0, 1.0).unwrap();
        let p = Solver::new(&pot).s_matrix(frac * v_right).unwrap();
        prop_assert!((p.s_ll.norm() - 1.0).abs() < 1e-8);
        prop_assert!(p.s_rl().is_none());
    }

    #[test]
    fn free_propagation_is_a_unitary_group(
        p0 in -2.0f64..2.0,
        s in 1.0f64..3.0,
        kappa in 0.0f64..1.0,
        t1 in -5.0f64..5.0,
        t2 in -5.0f64..5.0,
    ) {
        let st = gaussian(SpatialGrid::centered(1024, 0.1), 0.0, p0, s);
        let once = evolve_channel(&st, kappa, t1 + t2);
        let twice = evolve_channel(&evolve_channel(&st, kappa, t1), kappa, t2);
        prop_assert!(once.distance(&twice) < 1e-10 * st.norm_sq().sqrt());
        prop_assert!((once.norm_sq() - st.norm_sq()).abs() < 1e-10 * st.norm_sq());
    }

    #[test]
    fn plateau_covers_a_settled_tail(
        head in proptest::collection::vec(-5.0f64..5.0, 0..6),
        level in -3.0f64..3.0,
        noise in proptest::collection::vec(-1.0f64..1.0, 4..10),
    ) {
        let rule = PlateauRule::default();
        let band = 0.4 * rule.abs;
        let mut values = head.clone();
        values.extend(noise.iter().map(|n| level + band * n));
        let rs: Vec<f64> = (1..=values.len()).map(|i| i as f64).collect();
        let p = detect_plateau(&rs, &values, &rule).unwrap();
        prop_assert!(p.points >= noise.len());
        let tail = &values[values.len() - p.points..];
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p.value >= lo && p.value <= hi);
        prop_assert!(p.spread <= (rule.rel * p.value.abs()).max(rule.abs));
        prop_assert_eq!(p.r_start, rs[values.len() - p.points]);
    }

    #[test]
    fn tail_estimate_is_nonnegative_and_scales_linearly(
        alpha in 1.5f64..6.0,
        amp in 1e-6f64..1.0,
        scale in 0.1f64..10.0,
    ) {
        let ts = geomspace(10.0, 100.0, 50);
        let vs: Vec<f64> = ts.iter().map(|t| amp * t.powf(-alpha)).collect();
        let tail = tail_estimate(&ts, &vs);
        prop_assert!(tail >= 0.0);
        let scaled: Vec<f64> = vs.iter().map(|v| v * scale).collect();
        let tail2 = tail_estimate(&ts, &scaled);
        prop_assert!((tail2 - scale * tail).abs() <= 1e-9 * tail2.abs().max(1e-300));
    }

    #[test]
    fn geomspace_hits_endpoints_with_constant_ratio(
        start in 0.1f64..10.0,
        factor in 1.5f64..100.0,
        n in 2usize..30,
    ) {
        let end = start * factor;
        let g = geomspace(start, end, n);
        prop_assert_eq!(g.len(), n);
        prop_assert!((g[0] - start).abs() < 1e-12 * start);
        prop_assert!((g[n - 1] - end).abs() < 1e-12 * end);
        let r = g[1] / g[0];
        for w in g.windows(2) {
            prop_assert!((w[1] / w[0] - r).abs() < 1e-10 * r);
        }
    }
}
