use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use minimax_rd::{
    curvature_bound_heuristic, estimate_sigma, load_dataset, optimal_bandwidth_search,
    sensitivity_over_b, solve_minimax, validate_design, worst_case_mse, CurvatureHeuristic,
    DesignProblem, Error, InferenceReport, KernelShape, NoiseModel, SolverSettings, WeightSolution,
};
use serde_json::json;

use crate::config::{Command, RunConfig, UsageError};

/// Exit codes, stable for scripting.
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_DESIGN: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_SOLVER: i32 = 5;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return error_code(e);
        }
        if cause.is::<UsageError>() {
            return EXIT_DESIGN;
        }
        if cause.is::<serde_json::Error>() {
            return EXIT_PARSE;
        }
    }
    1
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Parse { .. } => EXIT_PARSE,
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::Solver(_) | Error::SolverQuality(_) => EXIT_SOLVER,
        _ => EXIT_DESIGN,
    }
}

/// Runs one configured command and returns the process exit code.
pub fn run(config: &RunConfig) -> anyhow::Result<i32> {
    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;
    write_atomic(&config.out, "config-echo.json", &to_json(config)?)?;

    let dataset = load_dataset(&config.input, &config.columns)?;
    let problem = validate_design(&dataset, &config.design_spec()?)?;
    let settings = SolverSettings::default();
    match config.command {
        Command::Estimate => estimate(config, &problem, &settings),
        Command::Sensitivity => sensitivity(config, &problem, &settings),
        Command::CompareLlr => compare_llr(config, &problem, &settings),
    }
}

fn resolve_bound(
    config: &RunConfig,
    problem: &DesignProblem,
) -> anyhow::Result<(DesignProblem, Option<CurvatureHeuristic>)> {
    match (config.bound, config.bound_heuristic) {
        (Some(b), _) => Ok((problem.with_bound(b)?, None)),
        (None, Some(mult)) => {
            let h = curvature_bound_heuristic(problem, mult)?;
            Ok((problem.with_bound(h.bound)?, Some(h)))
        }
        (None, None) => bail!(UsageError(
            "no curvature bound: pass --bound or --bound-heuristic".into()
        )),
    }
}

fn estimate(config: &RunConfig, problem: &DesignProblem, settings: &SolverSettings) -> anyhow::Result<i32> {
    let (problem, heuristic) = resolve_bound(config, problem)?;
    let run = sensitivity_over_b(&problem, &[problem.bound], config.lambda_sweep(), settings)
        .pop()
        .expect("one bound in, one run out");
    let (mut report, sol) = run?;
    if let Some(w) = heuristic.as_ref().and_then(|h| h.warning.clone()) {
        report.warnings.push(w);
    }
    write_atomic(&config.out, "report.json", &report_json(&report, &sol, heuristic.as_ref())?)?;
    write_atomic(&config.out, "weights.csv", weights_csv(config, &problem, &sol).as_bytes())?;
    Ok(0)
}

fn report_json(
    report: &InferenceReport,
    sol: &WeightSolution,
    heuristic: Option<&CurvatureHeuristic>,
) -> anyhow::Result<Vec<u8>> {
    to_json(&json!({
        "report": report,
        "bound_heuristic": heuristic,
        "grid_spacing": sol.certificate.spacing,
        "alpha_sq": sol.certificate.alpha_sq,
        "grid_points": sol.certificate.grid_points,
        "unit_bias": sol.unit_bias,
        "certificate": sol.certificate,
        "solver": sol.diagnostics,
        "multipliers": sol.multipliers,
    }))
}

fn weights_csv(config: &RunConfig, problem: &DesignProblem, sol: &WeightSolution) -> String {
    let mut out = String::new();
    for c in &config.columns.x_cols {
        out.push_str(&csv_field(c));
        out.push(',');
    }
    out.push_str("w,count,gamma\n");
    for i in 0..problem.len() {
        for v in problem.x(i) {
            write!(out, "{v},").unwrap();
        }
        writeln!(
            out,
            "{},{},{}",
            problem.treatment()[i] as u8,
            problem.counts()[i],
            sol.gamma[i]
        )
        .unwrap();
    }
    out
}

fn sensitivity(config: &RunConfig, problem: &DesignProblem, settings: &SolverSettings) -> anyhow::Result<i32> {
    if config.b_grid.is_empty() {
        bail!(UsageError("sensitivity needs a nonempty --b-grid".into()));
    }
    let runs = sensitivity_over_b(problem, &config.b_grid, config.lambda_sweep(), settings);
    let mut out = String::from("B,tau_hat,lo,hi,max_bias,std_err,ess0,ess1,status\n");
    let mut code = 0;
    for (b, run) in config.b_grid.iter().zip(runs) {
        match run {
            Ok((r, _)) => writeln!(
                out,
                "{b},{},{},{},{},{},{},{},ok",
                r.tau_hat, r.interval.0, r.interval.1, r.max_bias, r.std_err, r.ess_control, r.ess_treated
            )
            .unwrap(),
            Err(e) => {
                if code == 0 {
                    code = error_code(&e);
                }
                writeln!(out, "{b},,,,,,,,{}", csv_field(&e.to_string())).unwrap();
            }
        }
    }
    write_atomic(&config.out, "sensitivity.csv", out.as_bytes())?;
    Ok(code)
}

fn compare_llr(config: &RunConfig, problem: &DesignProblem, settings: &SolverSettings) -> anyhow::Result<i32> {
    let (problem, _) = resolve_bound(config, problem)?;
    let problem = match problem.noise {
        NoiseModel::EstimateFromData => {
            let est = estimate_sigma(&problem)?;
            problem.with_noise(NoiseModel::PerObservation(est.per_row))?
        }
        _ => problem,
    };
    let sol = solve_minimax(&problem, settings)?;
    let opt = worst_case_mse(&sol.gamma, &problem)?;
    let mut out = String::from("method,bandwidth,variance,worst_bias,worst_mse,mse_ratio_vs_optimized\n");
    writeln!(out, "optimized,,{},{},{},1", opt.variance, opt.bias, opt.mse).unwrap();
    for shape in [KernelShape::Triangular, KernelShape::Rectangular] {
        let best = optimal_bandwidth_search(&problem, shape)?;
        let m = best.mse;
        writeln!(
            out,
            "llr_{},{},{},{},{},{}",
            shape.name(),
            best.bandwidth,
            m.variance,
            m.bias,
            m.mse,
            m.mse / opt.mse
        )
        .unwrap();
    }
    write_atomic(&config.out, "compare.csv", out.as_bytes())?;
    Ok(0)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Temp file in the target directory, then rename over the destination.
fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> anyhow::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name))
        .with_context(|| format!("writing {}", dir.join(name).display()))?;
    Ok(())
}
