use super::moments::MomentSystem;
use super::qp::{LinearRow, ProgramKind, QuadraticProgram, VarCatalog};
use super::{arm_of, free_nodes, num_arms, variance_scale};
use crate::discretization::{curvature_constraints, DirectionSet, Grid};
use crate::error::{Error, Result};
use crate::model::DesignProblem;

/// Largest number of retained observations the primal builder accepts.
pub const PRIMAL_MAX_OBSERVATIONS: usize = 400;

/// The primal program over the weights themselves.
///
/// Unknowns: `gamma`, `t` (unit-curvature bias bound, absent when `B = 0`)
/// and, per arm, multipliers `nu0`/`nu1 ≥ 0` of the lattice adversary's
/// second-difference rows. The inner maximization `max Σ γᵢ f(Xᵢ)` over
/// unit-curvature grid functions is replaced by its LP dual
/// `min Σ ‖hv_r‖² ν_r` subject to `Dᵀν = aggregated γ`, so that sum `≤ t`
/// bounds the bias.
/// The objective is `Σ γᵢ²σᵢ² + λ B² t²`.
pub fn build_primal(problem: &DesignProblem, grid: &Grid, dirs: &DirectionSet) -> Result<QuadraticProgram> {
    if problem.len() > PRIMAL_MAX_OBSERVATIONS {
        return Err(Error::Design(format!(
            "the primal program is limited to {PRIMAL_MAX_OBSERVATIONS} observations ({} retained)",
            problem.len()
        )));
    }
    let moments = MomentSystem::for_problem(problem)?;
    let sigma_sq = problem.sigma_sq()?;
    let kappa = variance_scale(problem, &sigma_sq);
    let n = problem.len();
    let arms = num_arms(problem);
    let curved = problem.bound > 0.0;

    let mut catalog = VarCatalog::default();
    let gamma = catalog.push("gamma", n);
    let mut quad: Vec<(usize, usize, f64)> =
        sigma_sq.iter().enumerate().map(|(i, s2)| (gamma + i, gamma + i, 2.0 * s2 / kappa)).collect();

    let mut eq: Vec<LinearRow> = moments
        .independent_rows()
        .map(|row| {
            let terms = row
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .map(|(i, a)| (gamma + i, *a))
                .collect();
            LinearRow::new(terms, row.target)
        })
        .collect();
    let mut ineq = Vec::new();

    if curved {
        let t = catalog.push("t", 1);
        quad.push((t, t, 2.0 * problem.ci_length_lambda * problem.bound.powi(2) / kappa));

        let (node_var, free) = free_nodes(grid);
        let cons = curvature_constraints(grid, dirs);
        // μ_r = ‖hv‖²·ν_r keeps the per-node rows at integer coefficients
        let rows: Vec<(Vec<(usize, f64)>, f64)> = cons
            .rows()
            .map(|row| {
                let terms = row
                    .terms
                    .iter()
                    .filter_map(|&(node, a)| node_var[node].map(|v| (v, a)))
                    .collect::<Vec<_>>();
                (terms, row.scale)
            })
            .filter(|(terms, _)| !terms.is_empty())
            .collect();

        let mut bias_terms = vec![(t, -1.0)];
        for arm in 0..arms {
            let nu = catalog.push(&format!("nu{arm}"), rows.len());
            // column sums Cᵀν, one row per free node
            let mut per_node: Vec<Vec<(usize, f64)>> = vec![Vec::new(); free];
            for (r, (terms, scale)) in rows.iter().enumerate() {
                for &(v, a) in terms {
                    per_node[v].push((nu + r, a));
                }
                ineq.push(LinearRow::new(vec![(nu + r, -1.0)], 0.0));
                bias_terms.push((nu + r, *scale));
            }
            for (i, stencil) in grid.observation_stencils().iter().enumerate() {
                if arm_of(problem, i) == arm {
                    for &(node, a) in stencil {
                        if let Some(v) = node_var[node] {
                            per_node[v].push((gamma + i, -a));
                        }
                    }
                }
            }
            eq.extend(
                per_node
                    .into_iter()
                    .filter(|terms| !terms.is_empty())
                    .map(|terms| LinearRow::new(terms, 0.0)),
            );
        }
        ineq.push(LinearRow::new(bias_terms, 0.0));
    }

    let linear = vec![0.0; catalog.len()];
    Ok(QuadraticProgram {
        kind: ProgramKind::Primal,
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
