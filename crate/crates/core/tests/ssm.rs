use pathctl_core::model::{ControlProblem, Sivr, SivrParams};
use pathctl_core::simulate::{simulate_coupled, simulate_path};
use pathctl_core::ssm::{
    coupled_potential, log_coupled_potential, log_rn_weights, potential, rn_weights, test_function,
    test_function_from_states, PotentialTable,
};
use pathctl_core::{CustomProblem, DiscretePath, LevelGrid, Lqg, LqgParams, Stream};
use proptest::prelude::*;

fn lqg() -> Lqg {
    Lqg::new(LqgParams::default()).unwrap()
}

fn sivr() -> Sivr {
    Sivr::new(SivrParams::default()).unwrap()
}

#[test]
fn single_level_potential_examples() {
    let grid = LevelGrid::new(4, 2, 1.0).unwrap();
    let bm = CustomProblem::brownian(1, vec![0.0], 1.0);
    assert_eq!(potential(&bm, &grid, 3, &[0.7]), 1.0);
    let v = potential(&lqg(), &grid, 5, &[0.5]);
    assert!((v - (-0.15625f64).exp()).abs() < 1e-15);
    let term = potential(&lqg(), &grid, 16, &[-0.1]);
    assert!((term - (-0.1f64).exp()).abs() < 1e-15);
}

#[test]
fn coupled_potential_examples() {
    let fine = LevelGrid::new(4, 2, 1.0).unwrap();
    let bm = CustomProblem::brownian(1, vec![0.0], 1.0);
    assert_eq!(coupled_potential(&bm, &fine, 3, &[0.2], None).unwrap(), 2.0);

    // running cost chosen so that fine G = 0.8 and coarse G = 0.9
    let h = fine.step_size();
    let shaped = CustomProblem::brownian(1, vec![0.0], 1.0)
        .with_running_cost(move |x| if x[0] > 0.0 { -(0.8f64).ln() / h } else { -(0.9f64).ln() / (2.0 * h) });
    let g = coupled_potential(&shaped, &fine, 4, &[1.0], Some(&[-1.0])).unwrap();
    assert!((g - 0.9).abs() < 1e-15);

    let p = lqg();
    let term_fine = coupled_potential(&p, &fine, 16, &[0.3], Some(&[0.3])).unwrap();
    assert_eq!(term_fine, potential(&p, &fine, 16, &[0.3]));

    assert!(log_coupled_potential(&p, &fine, 4, &[0.3], None).is_err());
    assert!(log_coupled_potential(&p, &fine, 3, &[0.3], Some(&[0.1])).is_err());
}

#[test]
fn zero_cost_rn_weights_are_powers_of_two() {
    let bm = CustomProblem::brownian(1, vec![0.0], 1.0);
    for level in 3..=9u32 {
        let fine = LevelGrid::new(level, 2, 1.0).unwrap();
        let pair = simulate_coupled(&bm, fine, &mut Stream::new(level as u64)).unwrap();
        let (l1, l2) = log_rn_weights(&bm, &pair).unwrap();
        let expected = -((1u64 << (level - 1)) as f64) * std::f64::consts::LN_2;
        assert!((l1 - expected).abs() < 1e-9 * expected.abs());
        assert_eq!(l1, l2);
    }
}

#[test]
fn rn_weights_are_bounded_by_one() {
    let problems: [(&dyn ControlProblem, f64); 2] = [(&lqg(), 1.0), (&sivr(), 3.0)];
    for (problem, horizon) in problems {
        for level in 4..=7u32 {
            let fine = LevelGrid::new(level, 3, horizon).unwrap();
            for i in 0..1000 {
                let pair = simulate_coupled(&problem, fine, &mut Stream::new(5).derive(level as u64).derive(i)).unwrap();
                let (l1, l2) = log_rn_weights(&problem, &pair).unwrap();
                assert!(l1 <= 0.0 && l2 <= 0.0 && l1.is_finite() && l2.is_finite());
            }
        }
    }
}

#[test]
fn even_steps_dominate_both_single_level_potentials() {
    let p = sivr();
    let fine = LevelGrid::new(6, 3, 3.0).unwrap();
    let coarse = fine.coarser().unwrap();
    for i in 0..200 {
        let pair = simulate_coupled(&p, fine, &mut Stream::new(i)).unwrap();
        for k in (2..=fine.steps()).step_by(2) {
            let zf = pair.fine.state(k);
            let zc = pair.coarse.state(k / 2);
            let c = coupled_potential(&p, &fine, k, zf, Some(zc)).unwrap();
            let (gf, gc) = (potential(&p, &fine, k, zf), potential(&p, &coarse, k / 2, zc));
            assert!(c >= gf && c >= gc);
            assert!(c == gf || c == gc);
        }
    }
}

#[test]
fn lqg_test_function_is_truncated_brownian_sum() {
    let p = lqg();
    let grid = LevelGrid::new(7, 4, 1.0).unwrap();
    let path = simulate_path(&p, grid, &mut Stream::new(2)).unwrap();
    let sum: f64 = path.increments()[..grid.window_steps()].iter().sum();
    assert!((test_function(&p, &path)[0] - sum).abs() < 1e-15);

    let still = DiscretePath::from_increments(&p, grid, vec![0.0; grid.steps()]).unwrap();
    assert_eq!(test_function(&p, &still), vec![0.0]);
}

#[test]
fn test_function_forms_agree() {
    let p = sivr();
    let grid = LevelGrid::new(7, 3, 3.0).unwrap();
    for seed in 0..50 {
        let path = simulate_path(&p, grid, &mut Stream::new(seed)).unwrap();
        let a = test_function(&p, &path)[0];
        let b = test_function_from_states(&p, &path)[0];
        assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

#[test]
fn potential_product_stays_in_a_level_independent_band() {
    // Q x^2 with |x| < 3 and F x^2 give G^l in [exp(-(9 + 9) / gamma), 1]
    let p = lqg();
    let floor = -(9.0 + 9.0) / p.gamma();
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    for level in 4..=8u32 {
        let grid = LevelGrid::new(level, 4, 1.0).unwrap();
        let logs: Vec<f64> = (0..10_000)
            .map(|i| {
                let path = simulate_path(&p, grid, &mut Stream::new(8).derive(level as u64).derive(i)).unwrap();
                PotentialTable::new(&p, &path).log_product()
            })
            .collect();
        maxima.push(logs.iter().cloned().fold(f64::MIN, f64::max));
        minima.push(logs.iter().cloned().fold(f64::MAX, f64::min));
    }
    assert!(maxima.iter().all(|&m| m <= 0.0));
    assert!(minima.iter().all(|&m| m >= floor), "{minima:?}");
    let spread = maxima.iter().cloned().fold(f64::MIN, f64::max) - minima.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < -floor);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rn_weights_in_unit_interval(seed in any::<u64>(), level in 3u32..10, use_sivr in any::<bool>()) {
        let (h1, h2) = if use_sivr {
            let fine = LevelGrid::new(level, 2, 3.0).unwrap();
            let pair = simulate_coupled(&sivr(), fine, &mut Stream::new(seed)).unwrap();
            rn_weights(&sivr(), &pair).unwrap()
        } else {
            let fine = LevelGrid::new(level, 2, 1.0).unwrap();
            let pair = simulate_coupled(&lqg(), fine, &mut Stream::new(seed)).unwrap();
            rn_weights(&lqg(), &pair).unwrap()
        };
        prop_assert!(h1 >= 0.0 && h1 <= 1.0);
        prop_assert!(h2 >= 0.0 && h2 <= 1.0);
    }

    #[test]
    fn test_function_is_linear_without_drift(seed in any::<u64>(), alpha in -4.0f64..4.0) {
        let params = LqgParams { a: 0.0, ..LqgParams::default() };
        let p = Lqg::new(params).unwrap();
        let grid = LevelGrid::new(6, 3, 1.0).unwrap();
        let path = simulate_path(&p, grid, &mut Stream::new(seed)).unwrap();
        let scaled: Vec<f64> = path.increments().iter().map(|w| alpha * w).collect();
        let other = DiscretePath::from_increments(&p, grid, scaled).unwrap();
        let (a, b) = (test_function(&p, &other)[0], alpha * test_function(&p, &path)[0]);
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
    }
}
