//! Linear moment identities the weights must satisfy, and an incremental
//! consistency check that names the first identity that cannot hold.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::DesignProblem;

#[derive(Clone, Debug, PartialEq)]
pub struct MomentRow {
    pub name: String,
    /// One coefficient per retained observation.
    pub coeffs: Vec<f64>,
    pub target: f64,
}

impl MomentRow {
    pub fn new(name: impl Into<String>, coeffs: Vec<f64>, target: f64) -> Self {
        MomentRow {
            name: name.into(),
            coeffs,
            target,
        }
    }

    /// `|Σ aᵢγᵢ − b|` relative to `Σ|aᵢγᵢ| + |b|`.
    pub fn relative_residual(&self, gamma: &[f64]) -> f64 {
        let mut dot = 0.0;
        let mut scale = self.target.abs();
        for (a, g) in self.coeffs.iter().zip(gamma) {
            dot += a * g;
            scale += (a * g).abs();
        }
        let r = (dot - self.target).abs();
        if r == 0.0 {
            0.0
        } else {
            r / scale.max(f64::MIN_POSITIVE)
        }
    }
}

/// Outcome of testing a new row against the rows already accepted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RowStatus {
    Independent,
    /// Implied by the accepted rows, with a matching target.
    Redundant,
    /// Implied by the accepted rows but with a different target.
    Inconsistent,
}

/// An accepted set of moment rows. Only linearly independent rows are kept
/// in the basis; redundant ones are remembered for residual checks.
#[derive(Clone, Debug, Default)]
pub struct MomentSystem {
    rows: Vec<MomentRow>,
    basis: Vec<usize>,
}

const DEPENDENCE_TOL: f64 = 1e-9;
const CONSISTENCY_TOL: f64 = 1e-8;

impl MomentSystem {
    /// The identities of the estimand: level constraints per arm, first
    /// moments, and (pointwise only) first moments per arm.
    pub fn rows_for(problem: &DesignProblem) -> Vec<MomentRow> {
        let n = problem.len();
        let k = problem.k();
        let w = problem.treatment();
        let axis = |base: &str, j: usize| {
            if k == 1 {
                base.to_string()
            } else {
                format!("{base} on axis {}", j + 1)
            }
        };
        let mut rows = vec![
            MomentRow::new(
                "Σ W γ = 1",
                w.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect(),
                1.0,
            ),
            MomentRow::new(
                "Σ (1 − W) γ = −1",
                w.iter().map(|&t| if t { 0.0 } else { 1.0 }).collect(),
                -1.0,
            ),
        ];
        let offsets: Vec<Vec<f64>> = (0..n).map(|i| problem.offset(i)).collect();
        for j in 0..k {
            rows.push(MomentRow::new(
                axis("Σ γ (X − c) = 0", j),
                offsets.iter().map(|d| d[j]).collect(),
                0.0,
            ));
        }
        if problem.estimand.is_pointwise() {
            for j in 0..k {
                rows.push(MomentRow::new(
                    axis("Σ (2W − 1) γ (X − c) = 0", j),
                    offsets
                        .iter()
                        .zip(w)
                        .map(|(d, &t)| if t { d[j] } else { -d[j] })
                        .collect(),
                    0.0,
                ));
            }
        }
        rows
    }

    /// Builds the system for `problem`, failing with the name of the first
    /// identity that no weight vector can satisfy.
    pub fn for_problem(problem: &DesignProblem) -> Result<Self> {
        let mut sys = MomentSystem::default();
        for row in Self::rows_for(problem) {
            sys.push(row)?;
        }
        Ok(sys)
    }

    /// Accepts `row`; returns whether it enlarged the basis.
    pub fn push(&mut self, row: MomentRow) -> Result<bool> {
        match self.classify(&row) {
            RowStatus::Inconsistent => Err(Error::infeasible(row.name)),
            status => {
                let independent = status == RowStatus::Independent;
                if independent {
                    self.basis.push(self.rows.len());
                }
                self.rows.push(row);
                Ok(independent)
            }
        }
    }

    pub fn rows(&self) -> &[MomentRow] {
        &self.rows
    }

    /// Linearly independent rows, in insertion order.
    pub fn independent_rows(&self) -> impl Iterator<Item = &MomentRow> + '_ {
        self.basis.iter().map(|&i| &self.rows[i])
    }

    pub fn classify(&self, row: &MomentRow) -> RowStatus {
        let (r, b) = normalized(row);
        if self.basis.is_empty() {
            return match r {
                Some(_) => RowStatus::Independent,
                None if b.abs() <= CONSISTENCY_TOL => RowStatus::Redundant,
                None => RowStatus::Inconsistent,
            };
        }
        let Some(r) = r else {
            return if row.target == 0.0 {
                RowStatus::Redundant
            } else {
                RowStatus::Inconsistent
            };
        };
        let m = self.basis.len();
        let n = r.len();
        let mut s = DMatrix::zeros(m, n);
        let mut targets = DVector::zeros(m);
        for (a, &bi) in self.basis.iter().enumerate() {
            let (row_a, t) = normalized(&self.rows[bi]);
            let row_a = row_a.expect("basis rows are nonzero");
            for (j, v) in row_a.iter().enumerate() {
                s[(a, j)] = *v;
            }
            targets[a] = t;
        }
        let rv = DVector::from_vec(r);
        let gram = &s * s.transpose();
        let rhs = &s * &rv;
        let coef = gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .expect("svd computed with both factors");
        let resid = (&rv - s.transpose() * &coef).norm();
        if resid > DEPENDENCE_TOL {
            return RowStatus::Independent;
        }
        let implied = coef.dot(&targets);
        if (implied - b).abs() <= CONSISTENCY_TOL * (1.0 + b.abs().max(implied.abs())) {
            RowStatus::Redundant
        } else {
            RowStatus::Inconsistent
        }
    }

    /// Largest relative residual over all rows, with the row's name.
    pub fn worst_residual(&self, gamma: &[f64]) -> (f64, Option<&str>) {
        worst_residual(&self.rows, gamma)
    }
}

pub fn worst_residual<'a>(rows: &'a [MomentRow], gamma: &[f64]) -> (f64, Option<&'a str>) {
    rows.iter()
        .map(|r| (r.relative_residual(gamma), Some(r.name.as_str())))
        .fold((0.0, None), |acc, x| if x.0 > acc.0 { x } else { acc })
}

fn normalized(row: &MomentRow) -> (Option<Vec<f64>>, f64) {
    let norm = row.coeffs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        (None, row.target)
    } else {
        (
            Some(row.coeffs.iter().map(|v| v / norm).collect()),
            row.target / norm,
        )
    }
}
