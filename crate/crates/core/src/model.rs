//! Observations, assignment rules and validated estimation problems.
//!
//! Everything downstream works on a [`DesignProblem`]: the observations that
//! survive the window around the focal point, with duplicate running-variable
//! points merged into a single row carrying a replication count.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::DirectionLevel;
use crate::error::{Error, Result};

/// One row of input data.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
    /// Treatment indicator as recorded in the data, if any.
    pub w: Option<bool>,
    /// Number of units this row stands for; `y` is their mean outcome.
    pub count: u64,
    pub z: Option<Vec<f64>>,
}

impl Observation {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Observation {
            x,
            y,
            w: None,
            count: 1,
            z: None,
        }
    }

    pub fn with_treatment(mut self, w: bool) -> Self {
        self.w = Some(w);
        self
    }

    pub fn with_count(mut self, count: u64) -> Self {
        self.count = count;
        self
    }

    pub fn with_covariates(mut self, z: Vec<f64>) -> Self {
        self.z = Some(z);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    k: usize,
    observations: Vec<Observation>,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let k = observations.first().map(|o| o.x.len()).unwrap_or(1);
        if !(1..=2).contains(&k) {
            return Err(Error::UnsupportedDimension(k));
        }
        let p = observations.first().and_then(|o| o.z.as_ref()).map(Vec::len);
        for (i, obs) in observations.iter().enumerate() {
            let row = i + 1;
            if obs.x.len() != k {
                return Err(Error::Design(format!(
                    "row {row} has {} running variables, expected {k}",
                    obs.x.len()
                )));
            }
            if obs.x.iter().any(|v| !v.is_finite()) || !obs.y.is_finite() {
                return Err(Error::Design(format!("row {row} has a non-finite value")));
            }
            if obs.count == 0 {
                return Err(Error::Design(format!("row {row} has count 0")));
            }
            if obs.z.as_ref().map(Vec::len) != p {
                return Err(Error::Design(format!(
                    "row {row} has an inconsistent number of covariates"
                )));
            }
        }
        Ok(Dataset { k, observations })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Maps CSV column names onto observation fields.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub x_cols: Vec<String>,
    pub y_col: String,
    pub w_col: Option<String>,
    pub count_col: Option<String>,
    #[serde(default)]
    pub z_cols: Vec<String>,
}

pub fn load_dataset(path: &Path, schema: &ColumnSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(file, schema)
}

/// Parses a headed UTF-8 CSV stream.
pub fn read_dataset<R: Read>(reader: R, schema: &ColumnSchema) -> Result<Dataset> {
    let k = schema.x_cols.len();
    if !(1..=2).contains(&k) {
        return Err(Error::UnsupportedDimension(k));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                row: 0,
                column: name.to_string(),
                message: "column not found in header".into(),
            })
    };
    let x_idx = schema
        .x_cols
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let y_idx = column(&schema.y_col)?;
    let w_idx = schema.w_col.as_deref().map(column).transpose()?;
    let count_idx = schema.count_col.as_deref().map(column).transpose()?;
    let z_idx = schema
        .z_cols
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;

    let mut observations = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let cell = |idx: usize| record.get(idx).unwrap_or("");
        let real = |idx: usize| -> Result<f64> {
            let raw = cell(idx);
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row,
                    column: headers[idx].to_string(),
                    message: format!("`{raw}` is not a finite number"),
                }),
            }
        };
        let x = x_idx.iter().map(|&j| real(j)).collect::<Result<Vec<_>>>()?;
        let y = real(y_idx)?;
        let w = match w_idx {
            Some(j) => Some(match cell(j) {
                "1" | "1.0" | "true" | "TRUE" | "True" => true,
                "0" | "0.0" | "false" | "FALSE" | "False" => false,
                raw => {
                    return Err(Error::Parse {
                        row,
                        column: headers[j].to_string(),
                        message: format!("`{raw}` is not a treatment indicator (0/1)"),
                    })
                }
            }),
            None => None,
        };
        let count = match count_idx {
            Some(j) => {
                let raw = cell(j);
                match raw.parse::<u64>() {
                    Ok(c) if c > 0 => c,
                    _ => {
                        return Err(Error::Parse {
                            row,
                            column: headers[j].to_string(),
                            message: format!("`{raw}` is not a positive integer count"),
                        })
                    }
                }
            }
            None => 1,
        };
        let z = if z_idx.is_empty() {
            None
        } else {
            Some(z_idx.iter().map(|&j| real(j)).collect::<Result<Vec<_>>>()?)
        };
        observations.push(Observation { x, y, w, count, z });
    }
    Dataset::new(observations)
}

/// How treatment is assigned as a function of the running variable.
#[derive(Clone)]
pub enum AssignmentRule {
    /// `w = 1{x[axis] >= cutoff}`.
    Threshold { cutoff: f64, axis: usize },
    /// `w = 1{normal · x >= offset}`.
    HalfPlane { normal: Vec<f64>, offset: f64 },
    /// Arbitrary treated region given by its membership function.
    Region(Arc<dyn Fn(&[f64]) -> bool + Send + Sync>),
    /// Take the recorded treatment indicator as the rule.
    Observed,
}

impl AssignmentRule {
    pub fn threshold(cutoff: f64) -> Self {
        AssignmentRule::Threshold { cutoff, axis: 0 }
    }

    pub fn region<F>(f: F) -> Self
    where
        F: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        AssignmentRule::Region(Arc::new(f))
    }

    /// Treatment status at `x`; `None` for [`AssignmentRule::Observed`].
    pub fn treated(&self, x: &[f64]) -> Option<bool> {
        match self {
            AssignmentRule::Threshold { cutoff, axis } => Some(x[*axis] >= *cutoff),
            AssignmentRule::HalfPlane { normal, offset } => {
                Some(normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() >= *offset)
            }
            AssignmentRule::Region(f) => Some(f(x)),
            AssignmentRule::Observed => None,
        }
    }
}

impl fmt::Debug for AssignmentRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssignmentRule::Threshold { cutoff, axis } => f
                .debug_struct("Threshold")
                .field("cutoff", cutoff)
                .field("axis", axis)
                .finish(),
            AssignmentRule::HalfPlane { normal, offset } => f
                .debug_struct("HalfPlane")
                .field("normal", normal)
                .field("offset", offset)
                .finish(),
            AssignmentRule::Region(_) => f.write_str("Region(..)"),
            AssignmentRule::Observed => f.write_str("Observed"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// Treatment effect at the focal point.
    PointwiseCate,
    /// Optimizer-weighted average of effects along the boundary.
    WeightedCate,
}

impl Estimand {
    /// Whether the two arms get separate response surfaces.
    pub fn is_pointwise(self) -> bool {
        matches!(self, Estimand::PointwiseCate)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseModel {
    /// Common per-unit variance; a row with count m gets σ²/m.
    Homoskedastic(f64),
    /// One variance per row.
    PerObservation(Vec<f64>),
    EstimateFromData,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    /// Lattice spacing; `None` picks the default from the data range.
    pub spacing: Option<f64>,
    pub level: DirectionLevel,
    pub max_points: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization {
            spacing: None,
            level: DirectionLevel::Fine,
            max_points: 200_000,
        }
    }
}

/// User-facing description of the estimation task, before validation.
#[derive(Clone, Debug)]
pub struct DesignSpec {
    pub rule: AssignmentRule,
    pub focal_point: Vec<f64>,
    pub estimand: Estimand,
    pub bound: f64,
    pub noise: NoiseModel,
    pub window: f64,
    pub alpha: f64,
    pub ci_length_lambda: f64,
    pub discretization: Discretization,
    /// Impose exact balance on the dataset's covariates.
    pub balance: bool,
}

impl DesignSpec {
    pub fn new(rule: AssignmentRule, focal_point: Vec<f64>) -> Self {
        DesignSpec {
            rule,
            focal_point,
            estimand: Estimand::PointwiseCate,
            bound: 1.0,
            noise: NoiseModel::EstimateFromData,
            window: f64::INFINITY,
            alpha: 0.05,
            ci_length_lambda: 1.0,
            discretization: Discretization::default(),
            balance: false,
        }
    }

    pub fn estimand(mut self, estimand: Estimand) -> Self {
        self.estimand = estimand;
        self
    }

    pub fn bound(mut self, bound: f64) -> Self {
        self.bound = bound;
        self
    }

    pub fn noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn window(mut self, window: f64) -> Self {
        self.window = window;
        self
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn ci_length_lambda(mut self, lambda: f64) -> Self {
        self.ci_length_lambda = lambda;
        self
    }

    pub fn spacing(mut self, h: f64) -> Self {
        self.discretization.spacing = Some(h);
        self
    }

    pub fn directions(mut self, level: DirectionLevel) -> Self {
        self.discretization.level = level;
        self
    }

    pub fn balance(mut self, balance: bool) -> Self {
        self.balance = balance;
        self
    }
}

/// A validated estimation task.
///
/// Rows are the retained observations after windowing and merging of
/// duplicate running-variable points.
#[derive(Clone, Debug)]
pub struct DesignProblem {
    k: usize,
    pub focal_point: Vec<f64>,
    pub estimand: Estimand,
    pub bound: f64,
    pub noise: NoiseModel,
    pub window: f64,
    pub alpha: f64,
    pub ci_length_lambda: f64,
    pub discretization: Discretization,
    pub balance: bool,
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<bool>,
    count: Vec<u64>,
    within_ss: Vec<f64>,
    z: Option<Vec<Vec<f64>>>,
    source_rows: Vec<Vec<usize>>,
    dropped: usize,
}

impl DesignProblem {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    pub fn xs(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.x.chunks(self.k)
    }

    /// Mean outcome of each row.
    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn treatment(&self) -> &[bool] {
        &self.w
    }

    pub fn counts(&self) -> &[u64] {
        &self.count
    }

    /// Within-row sum of squared deviations from the row mean, from merging.
    pub fn within_ss(&self) -> &[f64] {
        &self.within_ss
    }

    pub fn covariates(&self) -> Option<&[Vec<f64>]> {
        self.z.as_deref()
    }

    /// Input row indices (1-based) merged into each retained row.
    pub fn source_rows(&self) -> &[Vec<usize>] {
        &self.source_rows
    }

    /// Number of input rows outside the window.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn total_count(&self) -> u64 {
        self.count.iter().sum()
    }

    /// `X_i - c`.
    pub fn offset(&self, i: usize) -> Vec<f64> {
        self.x(i)
            .iter()
            .zip(&self.focal_point)
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Per-row noise variances, if known.
    pub fn sigma_sq(&self) -> Result<Vec<f64>> {
        match &self.noise {
            NoiseModel::Homoskedastic(s2) => {
                Ok(self.count.iter().map(|&m| s2 / m as f64).collect())
            }
            NoiseModel::PerObservation(v) => Ok(v.clone()),
            NoiseModel::EstimateFromData => Err(Error::Design(
                "noise level has not been estimated for this design".into(),
            )),
        }
    }

    pub fn with_bound(&self, bound: f64) -> Result<Self> {
        check_bound(bound)?;
        let mut p = self.clone();
        p.bound = bound;
        Ok(p)
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        check_noise(&noise, self.len())?;
        let mut p = self.clone();
        p.noise = noise;
        Ok(p)
    }

    pub fn with_ci_length_lambda(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Design(format!("CI-length multiplier {lambda} must be positive")));
        }
        let mut p = self.clone();
        p.ci_length_lambda = lambda;
        Ok(p)
    }

    /// The retained rows as a dataset, e.g. for re-validation.
    pub fn to_dataset(&self) -> Dataset {
        let obs = (0..self.len())
            .map(|i| Observation {
                x: self.x(i).to_vec(),
                y: self.y[i],
                w: Some(self.w[i]),
                count: self.count[i],
                z: self.z.as_ref().map(|z| z[i].clone()),
            })
            .collect();
        Dataset {
            k: self.k,
            observations: obs,
        }
    }
}

fn check_bound(bound: f64) -> Result<()> {
    if bound >= 0.0 && bound.is_finite() {
        Ok(())
    } else {
        Err(Error::Design(format!("curvature bound {bound} must be finite and >= 0")))
    }
}

fn check_noise(noise: &NoiseModel, n: usize) -> Result<()> {
    match noise {
        NoiseModel::Homoskedastic(s2) if !(*s2 > 0.0 && s2.is_finite()) => Err(Error::Design(
            format!("noise variance {s2} must be positive"),
        )),
        NoiseModel::PerObservation(v) if v.len() != n => Err(Error::Design(format!(
            "{} noise variances supplied for {n} rows",
            v.len()
        ))),
        NoiseModel::PerObservation(v) if v.iter().any(|s| !(*s > 0.0 && s.is_finite())) => Err(
            Error::Design("noise variances must be positive".into()),
        ),
        _ => Ok(()),
    }
}

fn point_key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same point.
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

pub fn validate_design(dataset: &Dataset, spec: &DesignSpec) -> Result<DesignProblem> {
    let k = dataset.k();
    if spec.focal_point.len() != k {
        return Err(Error::Design(format!(
            "focal point has {} coordinates, data has {k}",
            spec.focal_point.len()
        )));
    }
    if spec.focal_point.iter().any(|v| !v.is_finite()) {
        return Err(Error::Design("focal point must be finite".into()));
    }
    check_bound(spec.bound)?;
    check_noise(&spec.noise, dataset.len())?;
    if !(spec.window > 0.0) {
        return Err(Error::Design(format!("window radius {} must be positive", spec.window)));
    }
    if !(spec.alpha > 0.0 && spec.alpha < 1.0) {
        return Err(Error::Design(format!("alpha {} must lie in (0, 1)", spec.alpha)));
    }
    if !(spec.ci_length_lambda > 0.0 && spec.ci_length_lambda.is_finite()) {
        return Err(Error::Design("CI-length multiplier must be positive".into()));
    }
    if let Some(h) = spec.discretization.spacing {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Design(format!("grid spacing {h} must be positive")));
        }
    }
    if let AssignmentRule::Threshold { axis, .. } = spec.rule {
        if axis >= k {
            return Err(Error::Design(format!("threshold axis {axis} out of range")));
        }
    }
    if let AssignmentRule::HalfPlane { normal, .. } = &spec.rule {
        if normal.len() != k {
            return Err(Error::Design("half-plane normal has the wrong dimension".into()));
        }
    }

    // Sharpness is checked on every input row, windowed or not.
    let mut treated = Vec::with_capacity(dataset.len());
    let mut offending = Vec::new();
    for (i, obs) in dataset.observations().iter().enumerate() {
        let w = match (spec.rule.treated(&obs.x), obs.w) {
            (Some(rule), Some(recorded)) => {
                if rule != recorded {
                    offending.push(i + 1);
                }
                rule
            }
            (Some(rule), None) => rule,
            (None, Some(recorded)) => recorded,
            (None, None) => {
                return Err(Error::Design(format!(
                    "row {} has no treatment indicator and the rule is taken from the data",
                    i + 1
                )))
            }
        };
        treated.push(w);
    }
    if !offending.is_empty() {
        return Err(Error::Sharpness { rows: offending });
    }

    let per_obs_noise = match &spec.noise {
        NoiseModel::PerObservation(v) => Some(v),
        _ => None,
    };

    struct Group {
        x: Vec<f64>,
        w: bool,
        // count-weighted (or inverse-variance weighted) outcome sum and weight
        y_sum: f64,
        weight: f64,
        y_sq_sum: f64,
        count: u64,
        z_sum: Option<Vec<f64>>,
        rows: Vec<usize>,
    }

    let mut groups: Vec<Group> = Vec::new();
    let mut index: HashMap<(Vec<u64>, bool), usize> = HashMap::new();
    let mut dropped = 0;
    for (i, obs) in dataset.observations().iter().enumerate() {
        let dist = obs
            .x
            .iter()
            .zip(&spec.focal_point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist > spec.window {
            dropped += 1;
            continue;
        }
        let m = obs.count as f64;
        let weight = match per_obs_noise {
            Some(v) => 1.0 / v[i],
            None => m,
        };
        let g = *index.entry((point_key(&obs.x), treated[i])).or_insert_with(|| {
            groups.push(Group {
                x: obs.x.clone(),
                w: treated[i],
                y_sum: 0.0,
                weight: 0.0,
                y_sq_sum: 0.0,
                count: 0,
                z_sum: obs.z.as_ref().map(|z| vec![0.0; z.len()]),
                rows: Vec::new(),
            });
            groups.len() - 1
        });
        let grp = &mut groups[g];
        grp.y_sum += weight * obs.y;
        grp.y_sq_sum += m * obs.y * obs.y;
        grp.weight += weight;
        grp.count += obs.count;
        if let (Some(acc), Some(z)) = (grp.z_sum.as_mut(), obs.z.as_ref()) {
            for (a, v) in acc.iter_mut().zip(z) {
                *a += m * v;
            }
        }
        grp.rows.push(i + 1);
    }

    let n_treated = groups.iter().filter(|g| g.w).count();
    if n_treated == 0 {
        return Err(Error::infeasible("Σ W γ = 1"));
    }
    if n_treated == groups.len() {
        return Err(Error::infeasible("Σ (1 − W) γ = −1"));
    }

    let n = groups.len();
    let mut x = Vec::with_capacity(n * k);
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut count = Vec::with_capacity(n);
    let mut within_ss = Vec::with_capacity(n);
    let mut z = dataset
        .observations()
        .first()
        .and_then(|o| o.z.as_ref())
        .map(|_| Vec::with_capacity(n));
    let mut source_rows = Vec::with_capacity(n);
    let mut noise_rows = Vec::with_capacity(n);
    for g in groups {
        let mean = g.y_sum / g.weight;
        let m = g.count as f64;
        x.extend_from_slice(&g.x);
        y.push(mean);
        w.push(g.w);
        count.push(g.count);
        within_ss.push(if per_obs_noise.is_some() {
            0.0
        } else {
            (g.y_sq_sum - m * mean * mean).max(0.0)
        });
        if let (Some(zs), Some(acc)) = (z.as_mut(), g.z_sum) {
            zs.push(acc.into_iter().map(|v| v / m).collect());
        }
        noise_rows.push(1.0 / g.weight);
        source_rows.push(g.rows);
    }

    let noise = match &spec.noise {
        NoiseModel::PerObservation(_) => NoiseModel::PerObservation(noise_rows),
        other => other.clone(),
    };

    Ok(DesignProblem {
        k,
        focal_point: spec.focal_point.clone(),
        estimand: spec.estimand,
        bound: spec.bound,
        noise,
        window: spec.window,
        alpha: spec.alpha,
        ci_length_lambda: spec.ci_length_lambda,
        discretization: spec.discretization,
        balance: spec.balance,
        x,
        y,
        w,
        count,
        within_ss,
        z,
        source_rows,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_1d() -> ColumnSchema {
        ColumnSchema {
            x_cols: vec!["x".into()],
            y_col: "y".into(),
            w_col: Some("w".into()),
            ..Default::default()
        }
    }

    fn four_points() -> Dataset {
        let obs = [-2.0, -1.0, 1.0, 2.0]
            .iter()
            .map(|&x| Observation::new(vec![x], 0.0))
            .collect();
        Dataset::new(obs).unwrap()
    }

    #[test]
    fn parses_one_dimensional_csv() {
        let csv = "x,y,w\n-2,0,0\n-1,0,0\n1,1,1\n2,1,1\n";
        let d = read_dataset(csv.as_bytes(), &schema_1d()).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.k(), 1);
        assert_eq!(d.observations()[2].w, Some(true));
    }

    #[test]
    fn two_dimensional_with_rule() {
        let csv = "lat,lon,y\n0.1,0.5,1\n-0.2,0.3,2\n";
        let schema = ColumnSchema {
            x_cols: vec!["lat".into(), "lon".into()],
            y_col: "y".into(),
            ..Default::default()
        };
        let d = read_dataset(csv.as_bytes(), &schema).unwrap();
        assert_eq!(d.k(), 2);
        let spec = DesignSpec::new(AssignmentRule::threshold(0.0), vec![0.0, 0.4]);
        let p = validate_design(&d, &spec).unwrap();
        assert_eq!(p.treatment(), &[true, false]);
    }

    #[test]
    fn missing_outcome_names_row() {
        let csv = "x,y,w\n-1,0,0\n1,NA,1\n";
        match read_dataset(csv.as_bytes(), &schema_1d()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn three_running_variables_rejected() {
        let schema = ColumnSchema {
            x_cols: vec!["a".into(), "b".into(), "c".into()],
            y_col: "y".into(),
            ..Default::default()
        };
        assert!(matches!(
            read_dataset("a,b,c,y\n1,2,3,4\n".as_bytes(), &schema),
            Err(Error::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn window_filtering() {
        let spec = DesignSpec::new(AssignmentRule::threshold(0.0), vec![0.0]);
        let p = validate_design(&four_points(), &spec).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.treatment().iter().filter(|w| **w).count(), 2);

        let p = validate_design(&four_points(), &spec.clone().window(1.5)).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.dropped(), 2);
    }

    #[test]
    fn sharpness_violation_lists_rows() {
        let obs = vec![
            Observation::new(vec![-1.0], 0.0).with_treatment(false),
            Observation::new(vec![1.0], 0.0).with_treatment(false),
            Observation::new(vec![2.0], 0.0).with_treatment(true),
        ];
        let d = Dataset::new(obs).unwrap();
        let spec = DesignSpec::new(AssignmentRule::threshold(0.0), vec![0.0]);
        match validate_design(&d, &spec) {
            Err(Error::Sharpness { rows }) => assert_eq!(rows, vec![2]),
            other => panic!("expected sharpness error, got {other:?}"),
        }
    }

    #[test]
    fn one_sided_data_is_infeasible() {
        let obs = [1.0, 2.0, 3.0]
            .iter()
            .map(|&x| Observation::new(vec![x], 0.0))
            .collect();
        let d = Dataset::new(obs).unwrap();
        let spec = DesignSpec::new(AssignmentRule::threshold(0.0), vec![0.0]);
        assert!(matches!(
            validate_design(&d, &spec),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn duplicates_merge_with_counts() {
        let obs = vec![
            Observation::new(vec![-1.0], 1.0),
            Observation::new(vec![-1.0], 3.0).with_count(3),
            Observation::new(vec![1.0], 0.0),
            Observation::new(vec![-0.0], 5.0),
            Observation::new(vec![0.0], 7.0),
        ];
        let d = Dataset::new(obs).unwrap();
        let spec = DesignSpec::new(AssignmentRule::threshold(0.0), vec![0.0])
            .noise(NoiseModel::Homoskedastic(2.0));
        let p = validate_design(&d, &spec).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.counts(), &[4, 1, 2]);
        assert_eq!(p.outcomes()[0], 2.5);
        // 1 + 3·9 - 4·2.5² = 3
        assert!((p.within_ss()[0] - 3.0).abs() < 1e-12);
        assert_eq!(p.sigma_sq().unwrap(), vec![0.5, 2.0, 1.0]);
        assert_eq!(p.total_count(), 7);
    }

    #[test]
    fn per_observation_noise_merges_by_inverse_variance() {
        let obs = vec![
            Observation::new(vec![-1.0], 0.0),
            Observation::new(vec![-1.0], 3.0),
            Observation::new(vec![1.0], 0.0),
        ];
        let d = Dataset::new(obs).unwrap();
        let spec = DesignSpec::new(AssignmentRule::threshold(0.0), vec![0.0])
            .noise(NoiseModel::PerObservation(vec![1.0, 2.0, 1.0]));
        let p = validate_design(&d, &spec).unwrap();
        assert!((p.outcomes()[0] - 1.0).abs() < 1e-12);
        let s = p.sigma_sq().unwrap();
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn observed_rule_requires_indicator() {
        let d = four_points();
        let spec = DesignSpec::new(AssignmentRule::Observed, vec![0.0]);
        assert!(matches!(validate_design(&d, &spec), Err(Error::Design(_))));
    }

    #[test]
    fn rejects_bad_parameters() {
        let base = DesignSpec::new(AssignmentRule::threshold(0.0), vec![0.0]);
        let d = four_points();
        assert!(validate_design(&d, &base.clone().bound(-1.0)).is_err());
        assert!(validate_design(&d, &base.clone().alpha(1.0)).is_err());
        assert!(validate_design(&d, &base.clone().window(0.0)).is_err());
        assert!(validate_design(&d, &base.clone().noise(NoiseModel::Homoskedastic(0.0))).is_err());
    }
}
