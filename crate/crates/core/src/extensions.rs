//! Covariate balance constraints and the fuzzy-design ratio estimator.

use crate::error::{Error, Result};
use crate::model::DesignProblem;
use crate::optimizer::moments::MomentRow;
use crate::optimizer::qp::{LinearRow, ProgramKind, QuadraticProgram};

/// Denominators smaller than this in absolute value are rejected.
pub const WEAK_DENOMINATOR: f64 = 0.05;

/// Covariates `Z` (one row per retained observation) whose weighted sums
/// must vanish: `Σ γᵢ Zᵢⱼ = 0` for every column `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct BalanceSpec {
    pub covariates: Vec<Vec<f64>>,
    pub names: Vec<String>,
}

impl BalanceSpec {
    pub fn new(covariates: Vec<Vec<f64>>) -> Self {
        let p = covariates.first().map_or(0, Vec::len);
        let names = (1..=p).map(|j| format!("covariate {j}")).collect();
        BalanceSpec { covariates, names }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.names = names;
        self
    }

    /// The problem's own covariates, when it asks for balance.
    pub fn from_problem(problem: &DesignProblem) -> Option<Self> {
        if !problem.balance {
            return None;
        }
        problem.covariates().map(|z| BalanceSpec::new(z.to_vec()))
    }

    pub fn num_covariates(&self) -> usize {
        self.names.len()
    }
}

/// Appends the balance identities to a primal or dual program.
///
/// Covariates already implied by the moment identities (for instance the
/// running variable itself) are skipped. A covariate that no weight vector
/// can balance is reported by name.
pub fn add_balance_constraints(mut qp: QuadraticProgram, balance: &BalanceSpec) -> Result<QuadraticProgram> {
    let n = match &qp.kind {
        ProgramKind::Primal => qp.catalog.get("gamma").map_or(0, |b| b.len),
        ProgramKind::Dual { g_rows } => g_rows.len(),
    };
    let p = balance.num_covariates();
    if balance.covariates.len() != n || balance.covariates.iter().any(|z| z.len() != p) {
        return Err(Error::Design(format!(
            "balance covariates must be a {n} × {p} matrix aligned with the retained observations"
        )));
    }
    let mut accepted = Vec::new();
    for (j, name) in balance.names.iter().enumerate() {
        let column: Vec<f64> = balance.covariates.iter().map(|z| z[j]).collect();
        let row = MomentRow::new(format!("Σ γ Z = 0 for {name}"), column, 0.0);
        if qp.moments.push(row)? {
            accepted.push(j);
        }
    }
    if accepted.is_empty() {
        return Ok(qp);
    }
    match qp.kind.clone() {
        ProgramKind::Primal => {
            let gamma = qp.catalog.get("gamma").expect("primal has gamma").start;
            for &j in &accepted {
                let terms = balance
                    .covariates
                    .iter()
                    .enumerate()
                    .filter(|(_, z)| z[j] != 0.0)
                    .map(|(i, z)| (gamma + i, z[j]))
                    .collect();
                qp.eq.push(LinearRow::new(terms, 0.0));
            }
        }
        ProgramKind::Dual { g_rows } => {
            let lz = qp.add_block("lambda_z", accepted.len());
            for (i, r) in g_rows.enumerate() {
                let z = &balance.covariates[i];
                for (slot, &j) in accepted.iter().enumerate() {
                    if z[j] != 0.0 {
                        qp.eq[r].terms.push((lz + slot, -z[j]));
                    }
                }
            }
        }
    }
    Ok(qp)
}

/// `Σ γᵢ Yᵢ / Σ γᵢ Dᵢ` for a fuzzy design, where `D` is the treatment
/// actually received. A point estimate only; no interval is attached.
pub fn fuzzy_late(weights: &[f64], outcomes: &[f64], treatments: &[f64]) -> Result<f64> {
    if weights.len() != outcomes.len() || weights.len() != treatments.len() {
        return Err(Error::Design("weights, outcomes and treatments must align".into()));
    }
    let num: f64 = weights.iter().zip(outcomes).map(|(g, y)| g * y).sum();
    let den: f64 = weights.iter().zip(treatments).map(|(g, d)| g * d).sum();
    if !(den.abs() >= WEAK_DENOMINATOR) {
        return Err(Error::WeakDenominator(den));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sharp_design_ratio_is_the_estimate() {
        let gamma = [1.0, -2.0, 2.0, -1.0];
        let y = [0.0, 0.0, 1.0, 1.0];
        let w = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(fuzzy_late(&gamma, &y, &w).unwrap(), 1.0);
    }

    #[test]
    fn weak_denominator() {
        let gamma = [0.5, 0.5];
        let err = fuzzy_late(&gamma, &[1.0, 1.0], &[0.01, 0.01]).unwrap_err();
        assert!(matches!(err, Error::WeakDenominator(d) if (d - 0.01).abs() < 1e-15));
    }
}
