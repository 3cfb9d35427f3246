//! Deterministic designs shared by the benchmarks.

use minimax_rd::{
    validate_design, AssignmentRule, Dataset, DesignProblem, DesignSpec, Estimand, NoiseModel,
    Observation,
};

/// Fractional part of `j·φ`: low-discrepancy points without an RNG.
fn golden(j: usize) -> f64 {
    (j as f64 * 0.618_033_988_749_894_9).fract()
}

/// `n` points spread over [-1, 1] with a cutoff at 0.
pub fn univariate(n: usize, bound: f64) -> DesignProblem {
    let obs = (1..=n)
        .map(|j| {
            let x = 2.0 * golden(j) - 1.0;
            Observation::new(vec![x], x + (x >= 0.0) as u8 as f64)
        })
        .collect();
    let spec = DesignSpec::new(AssignmentRule::threshold(0.0), vec![0.0])
        .bound(bound)
        .noise(NoiseModel::Homoskedastic(1.0));
    validate_design(&Dataset::new(obs).unwrap(), &spec).unwrap()
}

/// `n` points on [-1, 1]², treated when the first coordinate is nonnegative.
pub fn planar(n: usize, bound: f64, estimand: Estimand) -> DesignProblem {
    let obs = (1..=n)
        .map(|j| {
            let x = vec![2.0 * golden(j) - 1.0, 2.0 * golden(7 * j + 3) - 1.0];
            Observation::new(x, 0.0)
        })
        .collect();
    let spec = DesignSpec::new(AssignmentRule::threshold(0.0), vec![0.0, 0.0])
        .estimand(estimand)
        .bound(bound)
        .noise(NoiseModel::Homoskedastic(1.0));
    validate_design(&Dataset::new(obs).unwrap(), &spec).unwrap()
}
