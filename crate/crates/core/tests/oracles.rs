mod common;

use common::{forced, random_design};
use minimax_rd::{
    build_lattice, direction_set, grid_worst_case_bias, llr_weights, univariate_worst_case_bias,
    DirectionLevel, KernelShape, KernelSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lattice_bias(gamma: &[f64], p: &minimax_rd::DesignProblem, h: f64) -> f64 {
    let grid = build_lattice(p, h).unwrap();
    let dirs = direction_set(1, DirectionLevel::Fine);
    grid_worst_case_bias(gamma, p, &grid, &dirs).unwrap().value
}

#[test]
fn lattice_oracle_converges_to_the_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..8 {
        let n = rng.gen_range(10..=50);
        let bound = rng.gen_range(0.5..5.0);
        let p = random_design(&mut rng, n, bound, 1.0);
        // kernel weights satisfy the moment identities
        let shape = if rng.gen_bool(0.5) { KernelShape::Triangular } else { KernelShape::Rectangular };
        let gamma = llr_weights(&p, &KernelSpec { shape, bandwidth: 2.5 }).unwrap();
        let exact = univariate_worst_case_bias(&gamma, &p).unwrap().value;
        assert!(exact.is_finite() && exact > 0.0);

        let range = p.xs().map(|x| x[0]).fold(f64::NEG_INFINITY, f64::max)
            - p.xs().map(|x| x[0]).fold(f64::INFINITY, f64::min);
        let errs: Vec<f64> = [25.0, 50.0, 100.0, 200.0, 400.0]
            .iter()
            .map(|d| (lattice_bias(&gamma, &p, range / d) - exact).abs() / exact)
            .collect();
        assert!(errs[4] < 0.02, "{errs:?}");
        assert!(errs[4] < errs[0], "{errs:?}");
    }
}

#[test]
fn bias_is_homogeneous_in_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = random_design(&mut rng, 30, 1.0, 1.0);
    let gamma = llr_weights(&p, &KernelSpec { shape: KernelShape::Triangular, bandwidth: 1.5 }).unwrap();
    let p2 = p.with_bound(2.0).unwrap();
    let a = univariate_worst_case_bias(&gamma, &p).unwrap().value;
    let b = univariate_worst_case_bias(&gamma, &p2).unwrap().value;
    assert_eq!(2.0 * a, b);
    let h = 0.01;
    let la = lattice_bias(&gamma, &p, h);
    let lb = lattice_bias(&gamma, &p2, h);
    assert!((2.0 * la - lb).abs() < 1e-6 * lb);
}

#[test]
fn forced_weights_have_bias_two_b_on_both_oracles() {
    let p = forced(0.3, 1.0);
    let gamma = [1.0, -2.0, 2.0, -1.0];
    let exact = univariate_worst_case_bias(&gamma, &p).unwrap().value;
    assert!((exact - 0.6).abs() < 1e-12);
    for h in [0.1, 0.05, 0.01] {
        let lattice = lattice_bias(&gamma, &p, h);
        assert!((lattice - exact).abs() < 0.02 * exact, "h = {h}: {lattice}");
    }
}
