#![allow(dead_code)]

use minimax_rd::{
    validate_design, AssignmentRule, Dataset, DesignProblem, DesignSpec, NoiseModel, Observation,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn design(xs: &[f64], ys: &[f64], spec: DesignSpec) -> DesignProblem {
    let obs = xs.iter().zip(ys).map(|(&x, &y)| Observation::new(vec![x], y)).collect();
    validate_design(&Dataset::new(obs).unwrap(), &spec).unwrap()
}

pub fn threshold_spec(bound: f64, sigma_sq: f64) -> DesignSpec {
    DesignSpec::new(AssignmentRule::threshold(0.0), vec![0.0])
        .bound(bound)
        .noise(NoiseModel::Homoskedastic(sigma_sq))
}

pub fn forced(bound: f64, sigma_sq: f64) -> DesignProblem {
    design(&[-2.0, -1.0, 1.0, 2.0], &[0.0, 0.0, 1.0, 1.0], threshold_spec(bound, sigma_sq))
}

/// Random k=1 design on [-1, 1] with at least three points per side.
pub fn random_design(rng: &mut ChaCha8Rng, n: usize, bound: f64, sigma_sq: f64) -> DesignProblem {
    let mut xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for j in 0..3 {
        xs[2 * j] = -rng.gen_range(0.05..1.0);
        xs[2 * j + 1] = rng.gen_range(0.05..1.0);
    }
    let ys = vec![0.0; n];
    design(&xs, &ys, threshold_spec(bound, sigma_sq))
}

pub fn l2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
