use super::moments::MomentSystem;
use super::qp::{LinearRow, ProgramKind, QuadraticProgram, VarCatalog};
use super::{arm_of, free_nodes, num_arms, variance_scale};
use crate::discretization::{curvature_constraints, DirectionSet, Grid};
use crate::error::{Error, Result};
use crate::model::DesignProblem;

/// The simplified dual. Unknowns, in catalog order: `f0` (and `f1` for the
/// pointwise estimand) on the non-anchor lattice nodes, `lambda1` (absent
/// when `B = 0`), `lambda2`, `lambda3`, `lambda4`, `lambda5` (pointwise
/// only), and `g`.
///
/// The program minimizes `¼ Σ Gᵢ²/σᵢ² + ¼ λ₁²/(λ B²) + λ₂ − λ₃` where
///
/// ```text
/// Gᵢ = f_{arm(i)}(Xᵢ) + λ₂ Wᵢ + λ₃ (1 − Wᵢ) + λ₄·(Xᵢ − c) + λ₅·(2Wᵢ − 1)(Xᵢ − c)
/// ```
///
/// and each arm satisfies `|Δ²_v f(x)| ≤ λ₁ ‖hv‖²`. Variances and `B²` are
/// divided by the program's `objective_scale` before assembly.
pub fn build_dual(problem: &DesignProblem, grid: &Grid, dirs: &DirectionSet) -> Result<QuadraticProgram> {
    let moments = MomentSystem::for_problem(problem)?;
    let sigma_sq = problem.sigma_sq()?;
    let kappa = variance_scale(problem, &sigma_sq);
    if grid.observation_nodes().len() != problem.len() {
        return Err(Error::Resolution(
            "lattice was not built for this problem's observations".into(),
        ));
    }
    let n = problem.len();
    let k = problem.k();
    let arms = num_arms(problem);
    let pointwise = problem.estimand.is_pointwise();
    let curved = problem.bound > 0.0;
    let (node_var, free) = free_nodes(grid);

    let mut catalog = VarCatalog::default();
    let f_start: Vec<usize> = if curved {
        (0..arms).map(|a| catalog.push(&format!("f{a}"), free)).collect()
    } else {
        Vec::new()
    };
    let l1 = curved.then(|| catalog.push("lambda1", 1));
    let l2 = catalog.push("lambda2", 1);
    let l3 = catalog.push("lambda3", 1);
    let l4 = catalog.push("lambda4", k);
    let l5 = pointwise.then(|| catalog.push("lambda5", k));
    let g = catalog.push("g", n);

    let mut quad = Vec::with_capacity(n + 1);
    let mut linear = vec![0.0; catalog.len()];
    linear[l2] = 1.0;
    linear[l3] = -1.0;
    if let Some(l1) = l1 {
        quad.push((l1, l1, kappa / (2.0 * problem.ci_length_lambda * problem.bound.powi(2))));
    }
    for (i, s2) in sigma_sq.iter().enumerate() {
        quad.push((g + i, g + i, kappa / (2.0 * s2)));
    }

    let w = problem.treatment();
    let mut eq = Vec::with_capacity(n);
    for i in 0..n {
        let mut terms = vec![(g + i, 1.0)];
        if curved {
            for &(node, a) in &grid.observation_stencils()[i] {
                if let Some(v) = node_var[node] {
                    terms.push((f_start[arm_of(problem, i)] + v, -a));
                }
            }
        }
        terms.push(if w[i] { (l2, -1.0) } else { (l3, -1.0) });
        let d = problem.offset(i);
        let sign = if w[i] { 1.0 } else { -1.0 };
        for j in 0..k {
            if d[j] != 0.0 {
                terms.push((l4 + j, -d[j]));
                if let Some(l5) = l5 {
                    terms.push((l5 + j, -sign * d[j]));
                }
            }
        }
        eq.push(LinearRow::new(terms, 0.0));
    }

    let mut ineq = Vec::new();
    if let Some(l1) = l1 {
        let cons = curvature_constraints(grid, dirs);
        for row in cons.rows() {
            let local: Vec<(usize, f64)> = row
                .terms
                .iter()
                .filter_map(|&(node, a)| node_var[node].map(|v| (v, a / row.scale)))
                .collect();
            if local.is_empty() {
                continue;
            }
            for &start in &f_start {
                let mut terms: Vec<(usize, f64)> =
                    local.iter().map(|&(v, a)| (start + v, a)).collect();
                terms.push((l1, -1.0));
                ineq.push(LinearRow::new(terms, 0.0));
            }
        }
        ineq.push(LinearRow::new(vec![(l1, -1.0)], 0.0));
    }

    Ok(QuadraticProgram {
        kind: ProgramKind::Dual { g_rows: 0..n },
        catalog,
        quad,
        linear,
        constant: 0.0,
        objective_scale: kappa,
        eq,
        ineq,
        moments,
    })
}
