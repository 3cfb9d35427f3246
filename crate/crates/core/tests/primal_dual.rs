mod common;

use common::{design, forced, l2, l2_diff, random_design, threshold_spec};
use minimax_rd::{
    discretize, solve_minimax, solve_primal, univariate_worst_case_bias, validate_design,
    AssignmentRule, Dataset, DesignSpec, Error, Estimand, NoiseModel, Observation, SolverSettings,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn primal_and_dual_agree_on_random_designs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let settings = SolverSettings::default();
    for _ in 0..12 {
        let n = rng.gen_range(8..=100);
        let sigma_sq = rng.gen_range(0.2f64..2.0).powi(2);
        let bound = rng.gen_range(0.5..10.0);
        let p = random_design(&mut rng, n, bound, sigma_sq);
        let (grid, dirs) = discretize(&p).unwrap();
        let primal = solve_primal(&p, &grid, &dirs, &settings).unwrap();
        let dual = solve_minimax(&p, &settings).unwrap();

        let rel_obj = (primal.objective - dual.worst_case_objective).abs() / dual.worst_case_objective;
        assert!(rel_obj < 1e-4, "objective gap {rel_obj:e}");
        assert!(l2_diff(&primal.gamma, &dual.gamma) <= 1e-3 * l2(&dual.gamma));

        let exact = univariate_worst_case_bias(&dual.gamma, &p).unwrap().value;
        assert_eq!(exact, dual.certificate.oracle_bias);
        assert!(exact >= 0.99 * dual.max_bias && exact <= 1.001 * dual.max_bias);
    }
}

#[test]
fn forced_design_weights_and_mse() {
    let s = solve_minimax(&forced(0.5, 1.0), &SolverSettings::default()).unwrap();
    for (g, want) in s.gamma.iter().zip([1.0, -2.0, 2.0, -1.0]) {
        assert!((g - want).abs() < 1e-6);
    }
    assert!((s.v_hat_sq - 10.0).abs() < 1e-5);
    assert!((s.max_bias - 1.0).abs() < 0.01);
    assert!((s.worst_case_objective - (10.0 + 4.0 * 0.25)).abs() < 0.03);
}

#[test]
fn one_sided_design_names_the_treated_moment() {
    let obs = [-3.0, -2.0, -1.0].iter().map(|&x| Observation::new(vec![x], 0.0)).collect();
    match validate_design(&Dataset::new(obs).unwrap(), &threshold_spec(1.0, 1.0)) {
        Err(Error::Infeasible { constraint }) => assert!(constraint.contains("Σ W γ = 1"), "{constraint}"),
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn symmetric_design_gives_antisymmetric_weights() {
    let half = [0.07, 0.15, 0.33, 0.41, 0.6, 0.77, 0.9];
    let mut xs: Vec<f64> = half.iter().map(|x| -x).collect();
    xs.extend(half);
    let p = design(&xs, &vec![0.0; xs.len()], threshold_spec(2.0, 0.5));
    let s = solve_minimax(&p, &SolverSettings::default()).unwrap();
    let at = |x: f64| {
        let i = (0..p.len()).find(|&i| (p.x(i)[0] - x).abs() < 1e-12).unwrap();
        s.gamma[i]
    };
    for x in half {
        assert!((at(x) + at(-x)).abs() < 1e-5, "x = {x}: {} vs {}", at(x), at(-x));
    }
}

#[test]
fn scaling_noise_and_bound_together_keeps_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = random_design(&mut rng, 40, 2.0, 0.5);
    let kappa: f64 = 3.0;
    let scaled = base
        .with_bound(2.0 * kappa)
        .unwrap()
        .with_noise(NoiseModel::Homoskedastic(0.5 * kappa * kappa))
        .unwrap();
    let settings = SolverSettings::default();
    let a = solve_minimax(&base, &settings).unwrap();
    let b = solve_minimax(&scaled, &settings).unwrap();
    assert!(l2_diff(&a.gamma, &b.gamma) < 1e-5 * l2(&a.gamma));
    assert!((b.worst_case_objective / a.worst_case_objective - kappa * kappa).abs() < 1e-4 * kappa * kappa);
}

#[test]
fn huge_bound_concentrates_on_inner_points() {
    let xs: Vec<f64> = (1..=10).flat_map(|j| [-0.1 * j as f64, 0.1 * j as f64]).collect();
    let p = design(&xs, &vec![0.0; xs.len()], threshold_spec(1e6, 1.0));
    let s = solve_minimax(&p, &SolverSettings::default()).unwrap();
    let total: f64 = s.gamma.iter().map(|g| g.abs()).sum();
    let inner: f64 = (0..p.len())
        .filter(|&i| p.x(i)[0].abs() < 0.25)
        .map(|i| s.gamma[i].abs())
        .sum();
    assert!(inner > 0.99 * total, "inner share {}", inner / total);
}

#[test]
fn grid_refinement_changes_shrink() {
    let xs: Vec<f64> = (0..40).map(|j| -1.0 + (j as f64 + 0.5) / 20.0).collect();
    let p = design(&xs, &vec![0.0; xs.len()], threshold_spec(1.0, 1.0));
    let range = xs[39] - xs[0];
    let mut h = range / 50.0;
    let mut weights = Vec::new();
    for _ in 0..4 {
        let mut q = p.clone();
        q.discretization.spacing = Some(h);
        weights.push(solve_minimax(&q, &SolverSettings::default()).unwrap().gamma);
        h /= 2.0;
    }
    let steps: Vec<f64> = weights.windows(2).map(|w| l2_diff(&w[0], &w[1])).collect();
    assert!(steps[0] > steps[1] && steps[1] > steps[2], "{steps:?}");
}

#[test]
fn bias_grows_with_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = random_design(&mut rng, 30, 1.0, 1.0);
    let mut prev_obj = 0.0;
    for b in [0.5, 1.0, 2.0, 4.0] {
        let s = solve_minimax(&p.with_bound(b).unwrap(), &SolverSettings::default()).unwrap();
        assert!(s.worst_case_objective >= prev_obj);
        prev_obj = s.worst_case_objective;
    }
}

#[test]
fn zero_bound_is_minimum_variance_under_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = random_design(&mut rng, 25, 0.0, 1.0);
    let s = solve_minimax(&p, &SolverSettings::default()).unwrap();
    assert_eq!(s.max_bias, 0.0);
    assert!(s.diagnostics.moment_residual < 1e-6);
    // the same weights are feasible for any bound, so the variance cannot drop
    let curved = solve_minimax(&p.with_bound(1.0).unwrap(), &SolverSettings::default()).unwrap();
    assert!(curved.v_hat_sq >= s.v_hat_sq * (1.0 - 1e-6));
}

#[test]
fn weighted_estimand_with_colocated_pairs_has_no_bias() {
    let xs = [0.0, 0.0, 0.5, 0.5];
    let obs: Vec<Observation> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| Observation::new(vec![x], 0.0).with_treatment(i % 2 == 1))
        .collect();
    let spec = DesignSpec::new(AssignmentRule::Observed, vec![0.0])
        .estimand(Estimand::WeightedCate)
        .bound(1.0)
        .noise(NoiseModel::Homoskedastic(1.0));
    let p = validate_design(&Dataset::new(obs).unwrap(), &spec).unwrap();
    let s = solve_minimax(&p, &SolverSettings::default()).unwrap();
    assert!(s.max_bias.abs() < 1e-6);
    for i in 0..p.len() {
        let pair = (0..p.len())
            .find(|&j| j != i && p.x(j) == p.x(i))
            .unwrap();
        assert!((s.gamma[i] + s.gamma[pair]).abs() < 1e-6);
    }
}
