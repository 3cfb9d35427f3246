//! Noise estimation, point estimates, bias-aware intervals and diagnostics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{DesignProblem, Estimand, NoiseModel};
use crate::optimizer::{solve_minimax, SolverSettings, WeightSolution};

/// Weight-share level above which the normal approximation is flagged.
/// A reporting convention, not a theoretical cutoff.
pub const DOMINANCE_THRESHOLD: f64 = 0.2;

/// Relative variance floor used when residuals vanish.
pub const VARIANCE_FLOOR: f64 = 1e-12;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Fit of the arm-interacted linear regression used for the noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaEstimate {
    /// Per-unit residual variance, after flooring.
    pub sigma_sq: f64,
    /// Variance of each retained row's mean: `σ̂² / countᵢ`.
    pub per_row: Vec<f64>,
    /// Fitted `μ̂_{Wᵢ}(Xᵢ)` per row.
    pub fitted: Vec<f64>,
    /// The variance floor that applies to this dataset.
    pub floor: f64,
    pub floored: bool,
}

/// Count-weighted least squares with column rescaling; fails on rank loss.
pub(crate) fn weighted_least_squares(design: &[Vec<f64>], y: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let n = design.len();
    let p = design.first().map_or(0, Vec::len);
    if n < p || p == 0 {
        return Err(Error::Estimation(format!(
            "{n} support points cannot identify {p} regression coefficients"
        )));
    }
    let mut scale = vec![0.0f64; p];
    for row in design {
        for (s, v) in scale.iter_mut().zip(row) {
            *s = s.max(v.abs());
        }
    }
    let scale: Vec<f64> = scale.iter().map(|&s| if s > 0.0 { s } else { 1.0 }).collect();
    let a = DMatrix::from_fn(n, p, |i, j| weights[i].sqrt() * design[i][j] / scale[j]);
    let b = DVector::from_iterator(n, (0..n).map(|i| weights[i].sqrt() * y[i]));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::Estimation(
            "rank-deficient regression design (too few distinct support points per arm)".into(),
        ));
    }
    let coef = svd.solve(&b, 0.0).map_err(|e| Error::Estimation(e.to_string()))?;
    Ok(coef.iter().zip(&scale).map(|(c, s)| c / s).collect())
}

fn linear_design(problem: &DesignProblem) -> Vec<Vec<f64>> {
    (0..problem.len())
        .map(|i| {
            let d = problem.offset(i);
            let w = if problem.treatment()[i] { 1.0 } else { 0.0 };
            let mut row = vec![1.0];
            row.extend(&d);
            row.push(w);
            row.extend(d.iter().map(|v| w * v));
            row
        })
        .collect()
}

/// Variance of the outcome over the underlying (unmerged) rows.
fn outcome_variance(problem: &DesignProblem) -> f64 {
    let m: Vec<f64> = problem.counts().iter().map(|&c| c as f64).collect();
    let total: f64 = m.iter().sum();
    let y = problem.outcomes();
    let mean = y.iter().zip(&m).map(|(y, m)| y * m).sum::<f64>() / total;
    let ss: f64 = y
        .iter()
        .zip(&m)
        .zip(problem.within_ss())
        .map(|((y, m), w)| w + m * (y - mean).powi(2))
        .sum();
    ss / total
}

fn variance_floor(problem: &DesignProblem) -> f64 {
    let var = outcome_variance(problem);
    if var > 0.0 {
        VARIANCE_FLOOR * var
    } else {
        VARIANCE_FLOOR
    }
}

/// OLS of `Y` on `[1, X − c, W, W·(X − c)]` over the window; `σ̂²` is the
/// mean squared residual, assigned homoskedastically.
pub fn estimate_sigma(problem: &DesignProblem) -> Result<SigmaEstimate> {
    let m: Vec<f64> = problem.counts().iter().map(|&c| c as f64).collect();
    let design = linear_design(problem);
    let coef = weighted_least_squares(&design, problem.outcomes(), &m)?;
    let fitted: Vec<f64> = design
        .iter()
        .map(|row| row.iter().zip(&coef).map(|(a, b)| a * b).sum())
        .collect();
    let rss: f64 = (0..problem.len())
        .map(|i| problem.within_ss()[i] + m[i] * (problem.outcomes()[i] - fitted[i]).powi(2))
        .sum();
    let raw = rss / m.iter().sum::<f64>();
    let floor = variance_floor(problem);
    let sigma_sq = raw.max(floor);
    Ok(SigmaEstimate {
        sigma_sq,
        per_row: m.iter().map(|m| sigma_sq / m).collect(),
        fitted,
        floor,
        floored: raw < floor,
    })
}

/// `τ̂ = Σ γᵢ Yᵢ`.
pub fn point_estimate(weights: &[f64], outcomes: &[f64]) -> f64 {
    weights.iter().zip(outcomes).map(|(g, y)| g * y).sum()
}

/// `ŝ = (Σ γᵢ² rᵢ²)^{1/2}` for unit-level residuals `rᵢ`.
pub fn sampling_error(weights: &[f64], residuals: &[f64]) -> f64 {
    weights
        .iter()
        .zip(residuals)
        .map(|(g, r)| g * g * r * r)
        .sum::<f64>()
        .sqrt()
}

/// Sampling error for merged rows: each row stands for `countᵢ` units with
/// weight `γᵢ/countᵢ` each. Floored at the variance floor.
fn merged_sampling_error(problem: &DesignProblem, gamma: &[f64], fitted: &[f64], floor: f64) -> f64 {
    let mut s2 = 0.0;
    let mut floor_s2 = 0.0;
    for i in 0..problem.len() {
        let m = problem.counts()[i] as f64;
        let u = gamma[i] / m;
        let resid_ss = problem.within_ss()[i] + m * (problem.outcomes()[i] - fitted[i]).powi(2);
        s2 += u * u * resid_ss;
        floor_s2 += u * u * m * floor;
    }
    s2.max(floor_s2).sqrt()
}

/// Root of `Φ(cv − r) − Φ(−cv − r) = 1 − α` in `cv`.
pub fn critical_value(r: f64, alpha: f64) -> f64 {
    let phi = std_normal();
    let r = r.abs();
    let coverage = |cv: f64| phi.cdf(cv - r) - phi.cdf(-cv - r);
    let mut lo = 0.0;
    let mut hi = r + phi.inverse_cdf(1.0 - alpha / 2.0);
    while coverage(hi) < 1.0 - alpha {
        hi *= 2.0;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if coverage(mid) < 1.0 - alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest `l` with `P(|b + sZ| ≤ l) ≥ 1 − α` for every `|b| ≤ t`.
pub fn bias_aware_halfwidth(t: f64, s: f64, alpha: f64) -> f64 {
    if s <= 0.0 {
        return t;
    }
    s * critical_value(t / s, alpha)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EffectiveSampleSize {
    pub control: f64,
    pub treated: f64,
}

/// `1 / Σ_{i: Wᵢ = w} γᵢ²` per arm; an arm without weight reports 0.
pub fn effective_sample_size(weights: &[f64], treatment: &[bool]) -> EffectiveSampleSize {
    let counts = vec![1u64; weights.len()];
    unit_ess(weights, treatment, &counts)
}

fn unit_ess(weights: &[f64], treatment: &[bool], counts: &[u64]) -> EffectiveSampleSize {
    let mut ss = [0.0, 0.0];
    for ((g, &w), &m) in weights.iter().zip(treatment).zip(counts) {
        ss[w as usize] += g * g / m as f64;
    }
    let inv = |s: f64| if s > 0.0 { 1.0 / s } else { 0.0 };
    EffectiveSampleSize {
        control: inv(ss[0]),
        treated: inv(ss[1]),
    }
}

/// `maxᵢ γᵢ² / Σ γᵢ²`.
pub fn weight_dominance(weights: &[f64]) -> f64 {
    let counts = vec![1u64; weights.len()];
    unit_dominance(weights, &counts)
}

fn unit_dominance(weights: &[f64], counts: &[u64]) -> f64 {
    let mut max: f64 = 0.0;
    let mut total = 0.0;
    for (g, &m) in weights.iter().zip(counts) {
        let u = g / m as f64;
        max = max.max(u * u);
        total += g * g / m as f64;
    }
    if total > 0.0 {
        max / total
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InferenceReport {
    pub estimand: Estimand,
    pub bound: f64,
    pub alpha: f64,
    pub ci_length_lambda: f64,
    pub tau_hat: f64,
    /// Worst-case absolute bias behind the interval: the larger of the
    /// solver's certified bound and the oracle recheck.
    pub max_bias: f64,
    pub std_err: f64,
    pub critical_value: f64,
    pub halfwidth: f64,
    pub interval: (f64, f64),
    pub ess_control: f64,
    pub ess_treated: f64,
    /// Largest single-unit share of `Σ γᵢ²`.
    pub max_weight_share: f64,
    /// `Σ γᵢ Wᵢ Xᵢ` for the weighted estimand.
    pub implied_focal_point: Option<Vec<f64>>,
    pub edge_weight_warning: Option<String>,
    /// Estimated per-unit noise variance, when estimated from the data.
    pub sigma_sq_hat: Option<f64>,
    pub n_retained: usize,
    pub n_units: u64,
    pub n_dropped: usize,
    pub warnings: Vec<String>,
}

/// Outer-annulus check: weights within 5% of the window edge must stay
/// below 1% of the largest weight. Only meaningful for a finite window.
fn edge_weight_check(problem: &DesignProblem, gamma: &[f64]) -> Option<String> {
    if !problem.window.is_finite() {
        return None;
    }
    let r = problem.window;
    let mut overall: f64 = 0.0;
    let mut edge: f64 = 0.0;
    for (i, g) in gamma.iter().enumerate() {
        let u = (g / problem.counts()[i] as f64).abs();
        overall = overall.max(u);
        let dist = problem.offset(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if dist >= 0.95 * r {
            edge = edge.max(u);
        }
    }
    (edge > 0.01 * overall).then(|| {
        format!(
            "weights near the window edge reach {:.1}% of the largest weight; \
             rerun with a larger window",
            100.0 * edge / overall
        )
    })
}

/// Full procedure: noise level, optimized weights, estimate, interval and
/// diagnostics.
pub fn run_pipeline(problem: &DesignProblem) -> Result<(InferenceReport, WeightSolution)> {
    run_pipeline_with(problem, &SolverSettings::default())
}

pub fn run_pipeline_with(
    problem: &DesignProblem,
    settings: &SolverSettings,
) -> Result<(InferenceReport, WeightSolution)> {
    let mut warnings = Vec::new();
    let estimated = match problem.noise {
        NoiseModel::EstimateFromData => Some(estimate_sigma(problem)?),
        _ => None,
    };
    let solved_problem = match &estimated {
        Some(est) => {
            if est.floored {
                warnings.push(
                    "residual variance is zero; the variance floor was applied".to_string(),
                );
            }
            problem.with_noise(NoiseModel::PerObservation(est.per_row.clone()))?
        }
        None => problem.clone(),
    };
    let sol = solve_minimax(&solved_problem, settings)?;
    let gamma = &sol.gamma;

    let tau_hat = point_estimate(gamma, problem.outcomes());
    let std_err = match &estimated {
        Some(est) => merged_sampling_error(problem, gamma, &est.fitted, est.floor),
        None => sol.v_hat_sq.sqrt(),
    };
    // the lattice bound can sit a hair below the oracle's recheck
    let max_bias = if sol.certificate.oracle_bias.is_finite() {
        sol.max_bias.max(sol.certificate.oracle_bias)
    } else {
        sol.max_bias
    };
    let cv = if std_err > 0.0 {
        critical_value(max_bias / std_err, problem.alpha)
    } else {
        f64::INFINITY
    };
    let halfwidth = bias_aware_halfwidth(max_bias, std_err, problem.alpha);

    let ess = unit_ess(gamma, problem.treatment(), problem.counts());
    if ess.treated == 0.0 {
        warnings.push("treated arm carries no weight".into());
    }
    if ess.control == 0.0 {
        warnings.push("control arm carries no weight".into());
    }
    let share = unit_dominance(gamma, problem.counts());
    if share > DOMINANCE_THRESHOLD {
        warnings.push(format!(
            "a single unit carries {:.0}% of the squared weight (diagnostic threshold {:.0}%); \
             the normal approximation may be poor",
            100.0 * share,
            100.0 * DOMINANCE_THRESHOLD
        ));
    }
    let implied_focal_point = (!problem.estimand.is_pointwise()).then(|| {
        let mut x = vec![0.0; problem.k()];
        for i in 0..problem.len() {
            if problem.treatment()[i] {
                for (a, v) in x.iter_mut().zip(problem.x(i)) {
                    *a += gamma[i] * v;
                }
            }
        }
        x
    });
    if implied_focal_point.is_some() {
        warnings.push(
            "the estimand is the weighted average effect implied by the weights, \
             centred at the implied focal point"
                .into(),
        );
    }
    if problem.k() == 2 {
        let rel = (sol.certificate.oracle_bias - sol.max_bias).abs() / sol.max_bias.max(f64::MIN_POSITIVE);
        if sol.max_bias > 0.0 && rel > 0.05 {
            warnings.push(format!(
                "lattice bias check differs from the certified bias by {:.1}%",
                100.0 * rel
            ));
        }
    }
    let edge_weight_warning = edge_weight_check(problem, gamma);

    let report = InferenceReport {
        estimand: problem.estimand,
        bound: problem.bound,
        alpha: problem.alpha,
        ci_length_lambda: problem.ci_length_lambda,
        tau_hat,
        max_bias,
        std_err,
        critical_value: cv,
        halfwidth,
        interval: (tau_hat - halfwidth, tau_hat + halfwidth),
        ess_control: ess.control,
        ess_treated: ess.treated,
        max_weight_share: share,
        implied_focal_point,
        edge_weight_warning,
        sigma_sq_hat: estimated.as_ref().map(|e| e.sigma_sq),
        n_retained: problem.len(),
        n_units: problem.total_count(),
        n_dropped: problem.dropped(),
        warnings,
    };
    Ok((report, sol))
}

/// Re-runs the pipeline for each bound, in parallel, preserving order.
/// With `lambdas`, each bound keeps the CI-length multiplier giving the
/// shortest interval.
pub fn sensitivity_over_b(
    problem: &DesignProblem,
    bounds: &[f64],
    lambdas: Option<&[f64]>,
    settings: &SolverSettings,
) -> Vec<Result<(InferenceReport, WeightSolution)>> {
    bounds
        .par_iter()
        .map(|&b| {
            let p = problem.with_bound(b)?;
            match lambdas {
                None => run_pipeline_with(&p, settings),
                Some(ls) => {
                    let mut best: Option<(InferenceReport, WeightSolution)> = None;
                    for &l in ls {
                        let run = run_pipeline_with(&p.with_ci_length_lambda(l)?, settings)?;
                        if best.as_ref().map_or(true, |(r, _)| run.0.halfwidth < r.halfwidth) {
                            best = Some(run);
                        }
                    }
                    best.ok_or_else(|| Error::Design("empty CI-length multiplier grid".into()))
                }
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvatureHeuristic {
    /// `multiplier × max_w ‖∇² μ̂_w‖`.
    pub bound: f64,
    /// Largest fitted Hessian operator norm over arms.
    pub curvature: f64,
    pub multiplier: f64,
    pub warning: Option<String>,
}

/// Fits a global quadratic per arm and scales its largest curvature.
pub fn curvature_bound_heuristic(problem: &DesignProblem, multiplier: f64) -> Result<CurvatureHeuristic> {
    if !(multiplier > 0.0 && multiplier.is_finite()) {
        return Err(Error::Design(format!("heuristic multiplier {multiplier} must be positive")));
    }
    let k = problem.k();
    let mut curvature: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for arm in [false, true] {
        let idx: Vec<usize> = (0..problem.len()).filter(|&i| problem.treatment()[i] == arm).collect();
        let design: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| {
                let d = problem.offset(i);
                if k == 1 {
                    vec![1.0, d[0], d[0] * d[0]]
                } else {
                    vec![1.0, d[0], d[1], d[0] * d[0], d[0] * d[1], d[1] * d[1]]
                }
            })
            .collect();
        let y: Vec<f64> = idx.iter().map(|&i| problem.outcomes()[i]).collect();
        let m: Vec<f64> = idx.iter().map(|&i| problem.counts()[i] as f64).collect();
        let coef = weighted_least_squares(&design, &y, &m).map_err(|_| {
            Error::Estimation(
                "curvature heuristic unavailable: too few support points for a quadratic fit; \
                 supply the bound directly"
                    .into(),
            )
        })?;
        let norm = if k == 1 {
            (2.0 * coef[2]).abs()
        } else {
            let (a, b, c) = (2.0 * coef[3], coef[4], 2.0 * coef[5]);
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c).powi(2) + b * b).sqrt();
            (mid + rad).abs().max((mid - rad).abs())
        };
        curvature = curvature.max(norm);
        let spread = design.iter().map(|r| r[k + 1..].iter().fold(0.0f64, |s, v| s.max(v.abs()))).fold(0.0, f64::max);
        let ymax = y.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if spread > 0.0 {
            scale = scale.max(ymax / spread);
        }
    }
    if curvature <= 1e-9 * scale.max(f64::MIN_POSITIVE) {
        return Ok(CurvatureHeuristic {
            bound: 0.0,
            curvature: 0.0,
            multiplier,
            warning: Some(
                "fitted surfaces are linear; the heuristic suggests no curvature, supply a bound manually"
                    .into(),
            ),
        });
    }
    Ok(CurvatureHeuristic {
        bound: multiplier * curvature,
        curvature,
        multiplier,
        warning: None,
    })
}
