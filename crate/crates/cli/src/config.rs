use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use minimax_rd::{
    AssignmentRule, ColumnSchema, DesignSpec, DirectionLevel, Discretization, Estimand, NoiseModel,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Estimate,
    Sensitivity,
    CompareLlr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimandArg {
    /// Effect at the focal point
    Cate,
    /// Weighted average effect along the boundary
    Wate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DirsArg {
    Coarse,
    Fine,
}

/// Flags shared by every estimation subcommand.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// CSV file with a header row
    #[arg(long)]
    pub input: PathBuf,

    /// Running-variable column(s), comma separated (one or two)
    #[arg(long, value_delimiter = ',', required = true)]
    pub x_cols: Vec<String>,

    #[arg(long)]
    pub y_col: String,

    /// Treatment indicator column (0/1)
    #[arg(long)]
    pub w_col: Option<String>,

    /// Multiplicity column for pre-aggregated rows
    #[arg(long)]
    pub count_col: Option<String>,

    /// Covariates to balance, comma separated
    #[arg(long, value_delimiter = ',')]
    pub z_cols: Vec<String>,

    /// Treat units with x[axis] >= CUTOFF; without it the --w-col column is the rule
    #[arg(long, allow_negative_numbers = true)]
    pub cutoff: Option<f64>,

    #[arg(long, default_value_t = 0)]
    pub cutoff_axis: usize,

    /// Comma separated; defaults to the cutoff for a single running variable
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub focal_point: Option<Vec<f64>>,

    #[arg(long, value_enum, default_value = "cate")]
    pub estimand: EstimandArg,

    /// Bound on the second derivative of the response surfaces
    #[arg(long, conflicts_with = "bound_heuristic")]
    pub bound: Option<f64>,

    /// Set the bound to MULT times the curvature of a global quadratic fit
    #[arg(long, value_name = "MULT")]
    pub bound_heuristic: Option<f64>,

    /// Known noise standard deviation; estimated from the data otherwise
    #[arg(long)]
    pub sigma: Option<f64>,

    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Keep only units within this distance of the focal point
    #[arg(long)]
    pub window: Option<f64>,

    /// Lattice spacing
    #[arg(long)]
    pub grid_h: Option<f64>,

    #[arg(long, value_enum, default_value = "fine")]
    pub dirs: DirsArg,

    /// Bounds for the sensitivity table, comma separated
    #[arg(long, value_delimiter = ',')]
    pub b_grid: Vec<f64>,

    /// CI-length multiplier(s); several values keep the shortest interval
    #[arg(long, value_delimiter = ',')]
    pub ci_length_lambda: Vec<f64>,

    /// Output directory
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Everything needed to reproduce a run. Written as config-echo.json.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: PathBuf,
    pub columns: ColumnSchema,
    pub cutoff: Option<f64>,
    pub cutoff_axis: usize,
    pub focal_point: Option<Vec<f64>>,
    pub estimand: EstimandArg,
    pub bound: Option<f64>,
    pub bound_heuristic: Option<f64>,
    pub sigma: Option<f64>,
    pub alpha: f64,
    pub window: Option<f64>,
    pub grid_h: Option<f64>,
    pub dirs: DirsArg,
    pub b_grid: Vec<f64>,
    pub ci_length_lambda: Vec<f64>,
    pub out: PathBuf,
}

/// Raised for configuration problems that map to the design exit code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

impl RunConfig {
    pub fn from_args(command: Command, args: RunArgs) -> Self {
        // absolute so the echo can be replayed from anywhere
        let input = std::fs::canonicalize(&args.input).unwrap_or(args.input);
        RunConfig {
            command,
            input,
            columns: ColumnSchema {
                x_cols: args.x_cols,
                y_col: args.y_col,
                w_col: args.w_col,
                count_col: args.count_col,
                z_cols: args.z_cols,
            },
            cutoff: args.cutoff,
            cutoff_axis: args.cutoff_axis,
            focal_point: args.focal_point,
            estimand: args.estimand,
            bound: args.bound,
            bound_heuristic: args.bound_heuristic,
            sigma: args.sigma,
            alpha: args.alpha,
            window: args.window,
            grid_h: args.grid_h,
            dirs: args.dirs,
            b_grid: args.b_grid,
            ci_length_lambda: args.ci_length_lambda,
            out: args.out,
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| minimax_rd::Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Design spec with a placeholder bound; the caller fills in the real one.
    pub fn design_spec(&self) -> anyhow::Result<DesignSpec> {
        let k = self.columns.x_cols.len();
        let rule = match self.cutoff {
            Some(c) => AssignmentRule::Threshold {
                cutoff: c,
                axis: self.cutoff_axis,
            },
            None if self.columns.w_col.is_some() => AssignmentRule::Observed,
            None => bail!(UsageError("either --cutoff or --w-col is required".into())),
        };
        let focal_point = match (&self.focal_point, self.cutoff) {
            (Some(fp), _) => fp.clone(),
            (None, Some(c)) if k == 1 => vec![c],
            _ => bail!(UsageError("--focal-point is required".into())),
        };
        let estimand = match self.estimand {
            EstimandArg::Cate => Estimand::PointwiseCate,
            EstimandArg::Wate => Estimand::WeightedCate,
        };
        let noise = match self.sigma {
            Some(s) => NoiseModel::Homoskedastic(s * s),
            None => NoiseModel::EstimateFromData,
        };
        let level = match self.dirs {
            DirsArg::Coarse => DirectionLevel::Coarse,
            DirsArg::Fine => DirectionLevel::Fine,
        };
        let mut spec = DesignSpec::new(rule, focal_point)
            .estimand(estimand)
            .noise(noise)
            .alpha(self.alpha)
            .balance(!self.columns.z_cols.is_empty());
        spec.discretization = Discretization {
            spacing: self.grid_h,
            level,
            ..Discretization::default()
        };
        if let Some(r) = self.window {
            spec = spec.window(r);
        }
        if let [l] = self.ci_length_lambda[..] {
            spec = spec.ci_length_lambda(l);
        }
        Ok(spec)
    }

    /// Multiplier sweep for the interval, when more than one was given.
    pub fn lambda_sweep(&self) -> Option<&[f64]> {
        (self.ci_length_lambda.len() > 1).then_some(&self.ci_length_lambda[..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> RunConfig {
        RunConfig {
            command: Command::Estimate,
            input: "data.csv".into(),
            columns: ColumnSchema {
                x_cols: vec!["x".into()],
                y_col: "y".into(),
                ..ColumnSchema::default()
            },
            cutoff: Some(0.5),
            cutoff_axis: 0,
            focal_point: None,
            estimand: EstimandArg::Cate,
            bound: Some(1.0),
            bound_heuristic: None,
            sigma: Some(2.0),
            alpha: 0.1,
            window: None,
            grid_h: None,
            dirs: DirsArg::Coarse,
            b_grid: vec![],
            ci_length_lambda: vec![],
            out: "out".into(),
        }
    }

    #[test]
    fn echo_round_trips() {
        let c = config();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        assert!(text.contains("\"command\":\"estimate\""));
    }

    #[test]
    fn spec_defaults_focal_point_to_the_cutoff() {
        let spec = config().design_spec().unwrap();
        assert_eq!(spec.focal_point, vec![0.5]);
        assert_eq!(spec.noise, NoiseModel::Homoskedastic(4.0));
        assert_eq!(spec.discretization.level, DirectionLevel::Coarse);
        assert!(!spec.balance);
    }

    #[test]
    fn rule_needs_a_cutoff_or_treatment_column() {
        let mut c = config();
        c.cutoff = None;
        assert!(c.design_spec().is_err());
        c.columns.w_col = Some("w".into());
        c.focal_point = Some(vec![0.0]);
        assert!(matches!(c.design_spec().unwrap().rule, AssignmentRule::Observed));
    }

    #[test]
    fn several_multipliers_become_a_sweep() {
        let mut c = config();
        c.ci_length_lambda = vec![2.0];
        assert_eq!(c.design_spec().unwrap().ci_length_lambda, 2.0);
        assert!(c.lambda_sweep().is_none());
        c.ci_length_lambda = vec![0.5, 1.0];
        assert_eq!(c.lambda_sweep(), Some(&[0.5, 1.0][..]));
    }
}
