//! Local linear regression weights and their worst-case mean squared error.

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias_oracle::{grid_worst_case_bias, univariate_worst_case_bias};
use crate::error::{Error, Result};
use crate::model::DesignProblem;
use crate::optimizer::discretize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelShape {
    Rectangular,
    Triangular,
}

impl KernelShape {
    pub fn weight(self, t: f64) -> f64 {
        match self {
            KernelShape::Rectangular => {
                if t <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelShape::Triangular => (1.0 - t).max(0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelShape::Rectangular => "rectangular",
            KernelShape::Triangular => "triangular",
        }
    }
}

/// A kernel with one bandwidth shared by both sides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub shape: KernelShape,
    pub bandwidth: f64,
}

/// Representer weights of the coefficient on `W` in the kernel-weighted
/// regression of `Y` on `[1, W, (1 − W)Δ, WΔ]`.
pub fn llr_weights(problem: &DesignProblem, kernel: &KernelSpec) -> Result<Vec<f64>> {
    if problem.k() != 1 {
        return Err(Error::UnsupportedDimension(problem.k()));
    }
    let h = kernel.bandwidth;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Design(format!("bandwidth {h} must be positive")));
    }
    let n = problem.len();
    let mut support = [0usize; 2];
    let mut kw = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let d = problem.offset(i)[0];
        let w = problem.treatment()[i];
        let k = kernel.shape.weight(d.abs() / h) * problem.counts()[i] as f64;
        if k > 0.0 {
            // merged rows have distinct x within an arm
            support[w as usize] += 1;
        }
        let wf = if w { 1.0 } else { 0.0 };
        rows.push(Vector4::new(1.0, wf, (1.0 - wf) * d, wf * d));
        kw.push(k);
    }
    for (side, name) in [(1, "treated"), (0, "control")] {
        if support[side] < 2 {
            return Err(Error::Bandwidth { bandwidth: h, side: name });
        }
    }
    let mut m = Matrix4::zeros();
    for (x, &k) in rows.iter().zip(&kw) {
        if k > 0.0 {
            m += k * x * x.transpose();
        }
    }
    let inv = m
        .try_inverse()
        .ok_or(Error::Bandwidth { bandwidth: h, side: "both" })?;
    let e = inv.row(1).transpose();
    Ok(rows.iter().zip(&kw).map(|(x, &k)| k * e.dot(x)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WorstCaseMse {
    pub variance: f64,
    pub bias: f64,
    pub mse: f64,
}

/// `(Σ γᵢ²σᵢ², I_B(γ), variance + bias²)`; the bias is exact for `k = 1` and
/// the lattice value for `k = 2`.
pub fn worst_case_mse(weights: &[f64], problem: &DesignProblem) -> Result<WorstCaseMse> {
    let sigma_sq = problem.sigma_sq()?;
    let variance: f64 = weights.iter().zip(&sigma_sq).map(|(g, s)| g * g * s).sum();
    let bias = if problem.k() == 1 {
        univariate_worst_case_bias(weights, problem)?.value
    } else {
        let (grid, dirs) = discretize(problem)?;
        grid_worst_case_bias(weights, problem, &grid, &dirs)?.value
    };
    Ok(WorstCaseMse {
        variance,
        bias,
        mse: variance + bias * bias,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandwidthSearch {
    pub shape: KernelShape,
    pub bandwidth: f64,
    pub weights: Vec<f64>,
    pub mse: WorstCaseMse,
    /// `(bandwidth, worst-case MSE)` for every feasible candidate evaluated.
    pub curve: Vec<(f64, f64)>,
}

fn evaluate(problem: &DesignProblem, shape: KernelShape, h: f64) -> Option<(Vec<f64>, WorstCaseMse)> {
    let kernel = KernelSpec { shape, bandwidth: h };
    let gamma = llr_weights(problem, &kernel).ok()?;
    let mse = worst_case_mse(&gamma, problem).ok()?;
    mse.mse.is_finite().then_some((gamma, mse))
}

const LOG_GRID: usize = 200;
const MAX_BREAKPOINTS: usize = 400;

/// Bandwidth minimizing worst-case MSE: a log-spaced sweep plus the support
/// breakpoints, refined by golden-section search around the best candidate.
pub fn optimal_bandwidth_search(problem: &DesignProblem, shape: KernelShape) -> Result<BandwidthSearch> {
    if problem.k() != 1 {
        return Err(Error::UnsupportedDimension(problem.k()));
    }
    let mut dist: Vec<[f64; 2]> = Vec::new();
    let mut per_side: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for i in 0..problem.len() {
        let d = problem.offset(i)[0].abs();
        per_side[problem.treatment()[i] as usize].push(d);
        dist.push([d, 0.0]);
    }
    for side in per_side.iter_mut() {
        side.sort_by(f64::total_cmp);
        side.dedup();
    }
    if per_side.iter().any(|s| s.len() < 2) {
        let side = if per_side[1].len() < 2 { "treated" } else { "control" };
        return Err(Error::Bandwidth { bandwidth: f64::INFINITY, side });
    }
    let lo = per_side[0][1].max(per_side[1][1]);
    let far = per_side[0].last().unwrap().max(*per_side[1].last().unwrap());
    let hi = if problem.window.is_finite() {
        problem.window.max(lo)
    } else {
        2.0 * far
    };

    let mut candidates: Vec<f64> = (0..LOG_GRID)
        .map(|j| lo * (hi / lo).powf(j as f64 / (LOG_GRID - 1) as f64))
        .collect();
    let mut breaks: Vec<f64> = dist.iter().map(|d| d[0]).filter(|&d| d >= lo && d <= hi).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    if breaks.len() <= MAX_BREAKPOINTS {
        for b in breaks {
            candidates.push(b);
            // the triangular kernel only counts points strictly inside
            candidates.push(b * (1.0 + 1e-9));
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let results: Vec<(f64, Option<(Vec<f64>, WorstCaseMse)>)> = candidates
        .par_iter()
        .map(|&h| (h, evaluate(problem, shape, h)))
        .collect();
    let curve: Vec<(f64, f64)> = results
        .iter()
        .filter_map(|(h, r)| r.as_ref().map(|(_, m)| (*h, m.mse)))
        .collect();
    let best = results
        .iter()
        .enumerate()
        .filter_map(|(j, (h, r))| r.as_ref().map(|(g, m)| (j, *h, g.clone(), *m)))
        .min_by(|a, b| a.3.mse.total_cmp(&b.3.mse))
        .ok_or(Error::Bandwidth { bandwidth: lo, side: "both" })?;
    let (j, mut h_best, mut g_best, mut m_best) = best;

    // golden-section refinement between the neighbouring candidates
    let a0 = candidates[j.saturating_sub(1)];
    let b0 = candidates[(j + 1).min(candidates.len() - 1)];
    if b0 > a0 {
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let f = |h: f64| evaluate(problem, shape, h).map_or(f64::INFINITY, |(_, m)| m.mse);
        let (mut a, mut b) = (a0, b0);
        let mut x1 = b - ratio * (b - a);
        let mut x2 = a + ratio * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..60 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - ratio * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + ratio * (b - a);
                f2 = f(x2);
            }
            if b - a <= 1e-10 * b {
                break;
            }
        }
        let h = if f1 <= f2 { x1 } else { x2 };
        if let Some((g, m)) = evaluate(problem, shape, h) {
            if m.mse < m_best.mse {
                h_best = h;
                g_best = g;
                m_best = m;
            }
        }
    }
    Ok(BandwidthSearch {
        shape,
        bandwidth: h_best,
        weights: g_best,
        mse: m_best,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_design, AssignmentRule, Dataset, DesignSpec, NoiseModel, Observation};

    fn problem(xs: &[f64], bound: f64) -> DesignProblem {
        let obs = xs.iter().map(|&x| Observation::new(vec![x], 0.0)).collect();
        let spec = DesignSpec::new(AssignmentRule::threshold(0.0), vec![0.0])
            .bound(bound)
            .noise(NoiseModel::Homoskedastic(1.0));
        validate_design(&Dataset::new(obs).unwrap(), &spec).unwrap()
    }

    #[test]
    fn saturated_fit_gives_forced_weights() {
        let p = problem(&[-2.0, -1.0, 1.0, 2.0], 1.0);
        for shape in [KernelShape::Rectangular, KernelShape::Triangular] {
            let g = llr_weights(&p, &KernelSpec { shape, bandwidth: 10.0 }).unwrap();
            for (a, b) in g.iter().zip([1.0, -2.0, 2.0, -1.0]) {
                assert!((a - b).abs() < 1e-10, "{g:?}");
            }
        }
    }

    #[test]
    fn narrow_bandwidth_fails() {
        let p = problem(&[-2.0, -1.0, 1.0, 2.0], 1.0);
        let err = llr_weights(&p, &KernelSpec { shape: KernelShape::Rectangular, bandwidth: 0.5 });
        assert!(matches!(err, Err(Error::Bandwidth { .. })));
    }

    #[test]
    fn weights_satisfy_moments() {
        let xs: Vec<f64> = (-20..=20).filter(|&i| i != 0).map(|i| i as f64 / 7.0).collect();
        let p = problem(&xs, 1.0);
        let g = llr_weights(&p, &KernelSpec { shape: KernelShape::Triangular, bandwidth: 1.5 }).unwrap();
        let w = p.treatment();
        let t: f64 = g.iter().zip(w).filter(|(_, &w)| w).map(|(g, _)| g).sum();
        let c: f64 = g.iter().zip(w).filter(|(_, &w)| !w).map(|(g, _)| g).sum();
        assert!((t - 1.0).abs() < 1e-10 && (c + 1.0).abs() < 1e-10);
        for side in [true, false] {
            let m: f64 = (0..p.len()).filter(|&i| w[i] == side).map(|i| g[i] * p.x(i)[0]).sum();
            assert!(m.abs() < 1e-10);
        }
    }

    #[test]
    fn forced_design_mse() {
        let p = problem(&[-2.0, -1.0, 1.0, 2.0], 0.5);
        let m = worst_case_mse(&[1.0, -2.0, 2.0, -1.0], &p).unwrap();
        assert!((m.variance - 10.0).abs() < 1e-12);
        assert!((m.bias - 1.0).abs() < 1e-12);
        assert!((m.mse - 11.0).abs() < 1e-12);
    }

    #[test]
    fn representer_depends_on_offsets_only() {
        let xs: Vec<f64> = (-10..=10).filter(|&i| i != 0).map(|i| i as f64 / 3.0).collect();
        let a = problem(&xs, 1.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 5.0).collect();
        let obs = shifted.iter().map(|&x| Observation::new(vec![x], 0.0)).collect();
        let spec = DesignSpec::new(AssignmentRule::threshold(5.0), vec![5.0])
            .noise(NoiseModel::Homoskedastic(1.0));
        let b = validate_design(&Dataset::new(obs).unwrap(), &spec).unwrap();
        let k = KernelSpec { shape: KernelShape::Triangular, bandwidth: 2.0 };
        let ga = llr_weights(&a, &k).unwrap();
        let gb = llr_weights(&b, &k).unwrap();
        for (x, y) in ga.iter().zip(&gb) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
