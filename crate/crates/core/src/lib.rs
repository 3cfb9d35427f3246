//! Minimax linear estimation for regression discontinuity designs.
//!
//! Given a sample of running-variable points, outcomes and an assignment
//! rule, the crate computes linear weights `γ` that minimize the worst-case
//! mean squared error of `Σ γᵢ Yᵢ` over response surfaces whose second
//! derivative is bounded by `B`, and turns them into bias-aware confidence
//! intervals. Running variables may be one- or two-dimensional.
//!
//! ```no_run
//! use minimax_rd::{run_pipeline, validate_design, AssignmentRule, Dataset, DesignSpec, Observation};
//!
//! let obs = vec![
//!     Observation::new(vec![-2.0], 0.1),
//!     Observation::new(vec![-1.0], 0.0),
//!     Observation::new(vec![1.0], 1.1),
//!     Observation::new(vec![2.0], 0.9),
//! ];
//! let spec = DesignSpec::new(AssignmentRule::threshold(0.0), vec![0.0]).bound(0.1);
//! let problem = validate_design(&Dataset::new(obs)?, &spec)?;
//! let (report, _weights) = run_pipeline(&problem)?;
//! println!("{:.3} [{:.3}, {:.3}]", report.tau_hat, report.interval.0, report.interval.1);
//! # Ok::<(), minimax_rd::Error>(())
//! ```

pub mod baselines;
pub mod bias_oracle;
pub mod discretization;
pub mod error;
pub mod extensions;
pub mod inference;
pub mod model;
pub mod optimizer;

pub use baselines::{
    llr_weights, optimal_bandwidth_search, worst_case_mse, BandwidthSearch, KernelShape,
    KernelSpec, WorstCaseMse,
};
pub use bias_oracle::{grid_worst_case_bias, univariate_worst_case_bias, BiasEvaluation, Witness};
pub use discretization::{
    alpha_squared, build_lattice, curvature_constraints, direction_set, DirectionLevel,
    DirectionSet, Grid,
};
pub use error::{Error, Result};
pub use extensions::{add_balance_constraints, fuzzy_late, BalanceSpec};
pub use inference::{
    bias_aware_halfwidth, critical_value, curvature_bound_heuristic, effective_sample_size,
    estimate_sigma, point_estimate, run_pipeline, run_pipeline_with, sampling_error,
    sensitivity_over_b, weight_dominance, CurvatureHeuristic, InferenceReport,
};
pub use model::{
    load_dataset, read_dataset, validate_design, AssignmentRule, ColumnSchema, Dataset,
    DesignProblem, DesignSpec, Discretization, Estimand, NoiseModel, Observation,
};
pub use optimizer::{
    build_dual, build_primal, discretize, recover_weights, solve_dual, solve_minimax,
    solve_primal, solve_qp, QpStatus, QuadraticProgram, SolverSettings, WeightSolution,
};
