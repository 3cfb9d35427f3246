//! Lattices, direction sets and finite-difference curvature constraints.
//!
//! The curvature bound `‖∇²f‖ ≤ B` is imposed on a regular lattice of edge
//! length `h` anchored at the focal point, through second differences along
//! a finite set of integer directions `v`:
//!
//! ```text
//! |f(x + hv) + f(x − hv) − 2 f(x)| ≤ B ‖hv‖²
//! ```
//!
//! Both the weight optimizer and the grid bias oracle consume the same
//! [`CurvatureConstraints`], so they differ only in how they are solved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DesignProblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionLevel {
    Coarse,
    Fine,
}

impl std::str::FromStr for DirectionLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "coarse" => Ok(DirectionLevel::Coarse),
            "fine" => Ok(DirectionLevel::Fine),
            other => Err(format!("unknown direction set `{other}` (coarse|fine)")),
        }
    }
}

/// A regular lattice `c + h·m`, `m ∈ ℤᵏ`, over a padded bounding box.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    k: usize,
    h: f64,
    center: Vec<f64>,
    lo: Vec<i64>,
    dims: Vec<usize>,
    obs_nodes: Vec<usize>,
    obs_stencils: Vec<Vec<(usize, f64)>>,
}

impl Grid {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn center_index(&self) -> usize {
        self.index_of(&vec![0; self.k]).expect("focal point lies on the lattice")
    }

    /// Grid node of each observation the lattice was built for.
    pub fn observation_nodes(&self) -> &[usize] {
        &self.obs_nodes
    }

    /// Multilinear interpolation weights of each observation over the
    /// corners of its lattice cell. A point on a node gets that node alone.
    pub fn observation_stencils(&self) -> &[Vec<(usize, f64)>] {
        &self.obs_stencils
    }

    pub fn stencil(&self, x: &[f64]) -> Option<Vec<(usize, f64)>> {
        let mut base = Vec::with_capacity(self.k);
        let mut frac = Vec::with_capacity(self.k);
        for (v, c) in x.iter().zip(&self.center) {
            let u = (v - c) / self.h;
            let mut m = u.floor();
            let mut t = u - m;
            if t < SNAP {
                t = 0.0;
            } else if t > 1.0 - SNAP {
                t = 0.0;
                m += 1.0;
            }
            base.push(m as i64);
            frac.push(t);
        }
        let mut out = Vec::new();
        for mask in 0..(1usize << self.k) {
            let mut weight = 1.0;
            let mut m = base.clone();
            for j in 0..self.k {
                if mask >> j & 1 == 1 {
                    weight *= frac[j];
                    m[j] += 1;
                } else {
                    weight *= 1.0 - frac[j];
                }
            }
            if weight > 0.0 {
                out.push((self.index_of(&m)?, weight));
            }
        }
        Some(out)
    }

    /// Integer lattice coordinates of a node, relative to the focal point.
    pub fn lattice_coords(&self, idx: usize) -> Vec<i64> {
        let mut rem = idx;
        self.dims
            .iter()
            .zip(&self.lo)
            .map(|(&d, &lo)| {
                let m = (rem % d) as i64 + lo;
                rem /= d;
                m
            })
            .collect()
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        self.lattice_coords(idx)
            .iter()
            .zip(&self.center)
            .map(|(&m, c)| c + self.h * m as f64)
            .collect()
    }

    pub fn index_of(&self, m: &[i64]) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for ((&mj, &lo), &d) in m.iter().zip(&self.lo).zip(&self.dims) {
            let off = mj - lo;
            if off < 0 || off >= d as i64 {
                return None;
            }
            idx += off as usize * stride;
            stride *= d;
        }
        Some(idx)
    }

    /// Nearest lattice node; exact ties go to the smaller coordinate.
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        self.index_of(&nearest_lattice(x, &self.center, self.h))
    }

    /// Nodes where the grid functions are pinned to zero: `c` and `c + h·e_j`.
    pub fn anchors(&self) -> Vec<usize> {
        let mut out = vec![self.center_index()];
        for j in 0..self.k {
            let mut m = vec![0; self.k];
            m[j] = 1;
            out.push(self.index_of(&m).expect("lattice is padded around c"));
        }
        out
    }
}

/// Fractional lattice offsets this close to a node are treated as on it.
const SNAP: f64 = 1e-9;

fn nearest_lattice(x: &[f64], center: &[f64], h: f64) -> Vec<i64> {
    x.iter()
        .zip(center)
        .map(|(v, c)| ((v - c) / h - 0.5).ceil() as i64)
        .collect()
}

/// Default spacing: the data range over 400 (k = 1) or over 40 per axis
/// (k = 2), widened if the lattice would exceed `max_points`.
pub fn default_spacing(problem: &DesignProblem) -> f64 {
    let k = problem.k();
    let mut range: f64 = 0.0;
    for j in 0..k {
        let c = problem.focal_point[j];
        let (lo, hi) = problem
            .xs()
            .map(|x| x[j])
            .fold((c, c), |(lo, hi), v| (lo.min(v), hi.max(v)));
        range = range.max(hi - lo);
    }
    if range <= 0.0 {
        range = 1.0;
    }
    let divisions = if k == 1 { 400.0 } else { 40.0 };
    let mut h = range / divisions;
    // (range/h + 3)^k points at most
    let max_points = problem.discretization.max_points.max(16) as f64;
    let per_axis = max_points.powf(1.0 / k as f64) - 3.0;
    if per_axis > 0.0 && range / h > per_axis {
        h = range / per_axis;
    }
    h
}

pub fn build_lattice(problem: &DesignProblem, h: f64) -> Result<Grid> {
    let points: Vec<&[f64]> = problem.xs().collect();
    build_lattice_for_points(
        &points,
        &problem.focal_point,
        h,
        problem.discretization.max_points,
    )
}

/// Lattice anchored at `center` covering `points` and `center`, padded by one
/// cell on every side.
pub fn build_lattice_for_points(
    points: &[&[f64]],
    center: &[f64],
    h: f64,
    max_points: usize,
) -> Result<Grid> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Resolution(format!("spacing {h} must be positive")));
    }
    let k = center.len();
    let mut lo = vec![0i64; k];
    let mut hi = vec![0i64; k];
    for p in points {
        let m = nearest_lattice(p, center, h);
        for j in 0..k {
            lo[j] = lo[j].min(m[j]);
            hi[j] = hi[j].max(m[j]);
        }
    }
    let mut total: f64 = 1.0;
    let mut dims = Vec::with_capacity(k);
    for j in 0..k {
        lo[j] -= 1;
        hi[j] += 1;
        let d = (hi[j] - lo[j] + 1) as usize;
        total *= d as f64;
        dims.push(d);
    }
    if total > max_points as f64 {
        return Err(Error::Resolution(format!(
            "lattice with spacing {h} needs {total} points (maximum {max_points}); \
             use a larger spacing or a smaller window"
        )));
    }
    let mut grid = Grid {
        k,
        h,
        center: center.to_vec(),
        lo,
        dims,
        obs_nodes: Vec::new(),
        obs_stencils: Vec::new(),
    };
    grid.obs_nodes = points
        .iter()
        .map(|p| grid.nearest(p).expect("bounding box covers every point"))
        .collect();
    grid.obs_stencils = points
        .iter()
        .map(|p| grid.stencil(p).expect("padding covers every cell"))
        .collect();
    Ok(grid)
}

/// Integer directions along which second differences are taken.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectionSet {
    k: usize,
    vectors: Vec<Vec<i64>>,
}

impl DirectionSet {
    /// Builds a set from arbitrary nonzero integer vectors, dropping
    /// parallel duplicates.
    pub fn new(k: usize, vectors: Vec<Vec<i64>>) -> Self {
        let mut kept: Vec<Vec<i64>> = Vec::new();
        for v in vectors {
            assert_eq!(v.len(), k);
            assert!(v.iter().any(|&c| c != 0), "zero direction");
            let parallel = kept.iter().any(|u| match k {
                1 => true,
                _ => u[0] * v[1] - u[1] * v[0] == 0,
            });
            if !parallel {
                kept.push(v);
            }
        }
        DirectionSet { k, vectors: kept }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vectors(&self) -> &[Vec<i64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub fn direction_set(k: usize, level: DirectionLevel) -> DirectionSet {
    let vectors = match (k, level) {
        (1, _) => vec![vec![1]],
        (_, DirectionLevel::Coarse) => vec![vec![1, 0], vec![0, 1], vec![1, 1], vec![1, -1]],
        (_, DirectionLevel::Fine) => vec![
            vec![1, 0],
            vec![0, 1],
            vec![1, 1],
            vec![1, -1],
            vec![5, 2],
            vec![2, 5],
            vec![5, -2],
            vec![2, -5],
        ],
    };
    DirectionSet::new(k, vectors)
}

/// `sup_u inf_v 1 − (u·v)²/‖v‖²` over unit `u`: the squared sine of the
/// worst angle between a direction and its closest element of the set.
pub fn alpha_squared(dirs: &DirectionSet) -> f64 {
    if dirs.k == 1 {
        return 0.0;
    }
    let pi = std::f64::consts::PI;
    let mut angles: Vec<f64> = dirs
        .vectors
        .iter()
        .map(|v| (v[1] as f64).atan2(v[0] as f64).rem_euclid(pi))
        .collect();
    angles.sort_by(f64::total_cmp);
    let mut max_gap = pi - angles[angles.len() - 1] + angles[0];
    for w in angles.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    (max_gap / 2.0).sin().powi(2)
}

/// One second-difference stencil `f(plus) + f(minus) − 2 f(center)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil {
    pub center: usize,
    pub plus: usize,
    pub minus: usize,
    /// `‖hv‖²`, the factor multiplying the curvature bound.
    pub norm_sq: f64,
}

impl Stencil {
    pub fn apply(&self, f: &[f64]) -> f64 {
        f[self.plus] + f[self.minus] - 2.0 * f[self.center]
    }
}

/// A signed linear row `Σ coef·f(node) ≤ bound · scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureRow {
    pub terms: [(usize, f64); 3],
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureConstraints {
    pub stencils: Vec<Stencil>,
    /// Nodes pinned to zero.
    pub anchors: Vec<usize>,
}

impl CurvatureConstraints {
    /// Each stencil yields an upper and a lower row.
    pub fn num_rows(&self) -> usize {
        2 * self.stencils.len()
    }

    pub fn rows(&self) -> impl Iterator<Item = CurvatureRow> + '_ {
        self.stencils.iter().flat_map(|s| {
            [1.0, -1.0].map(|sign| CurvatureRow {
                terms: [(s.plus, sign), (s.minus, sign), (s.center, -2.0 * sign)],
                scale: s.norm_sq,
            })
        })
    }

    /// Largest violation of `|Δ²f| ≤ bound·‖hv‖²` (0 when feasible).
    pub fn max_violation(&self, f: &[f64], bound: f64) -> f64 {
        self.stencils
            .iter()
            .map(|s| (s.apply(f).abs() - bound * s.norm_sq).max(0.0))
            .fold(0.0, f64::max)
    }
}

pub fn curvature_constraints(grid: &Grid, dirs: &DirectionSet) -> CurvatureConstraints {
    assert_eq!(grid.k(), dirs.k(), "grid and direction set dimensions differ");
    let h2 = grid.spacing() * grid.spacing();
    let mut stencils = Vec::new();
    for idx in 0..grid.len() {
        let m = grid.lattice_coords(idx);
        for v in dirs.vectors() {
            let up: Vec<i64> = m.iter().zip(v).map(|(a, b)| a + b).collect();
            let down: Vec<i64> = m.iter().zip(v).map(|(a, b)| a - b).collect();
            if let (Some(plus), Some(minus)) = (grid.index_of(&up), grid.index_of(&down)) {
                let vv: i64 = v.iter().map(|c| c * c).sum();
                stencils.push(Stencil {
                    center: idx,
                    plus,
                    minus,
                    norm_sq: h2 * vv as f64,
                });
            }
        }
    }
    CurvatureConstraints {
        stencils,
        anchors: grid.anchors(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_1d(points: &[f64], h: f64) -> Grid {
        let pts: Vec<Vec<f64>> = points.iter().map(|&p| vec![p]).collect();
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        build_lattice_for_points(&refs, &[0.0], h, 1_000_000).unwrap()
    }

    #[test]
    fn one_dimensional_lattice() {
        let g = grid_1d(&[-2.0, -1.0, 1.0, 2.0], 0.5);
        assert_eq!(g.len(), 11);
        assert_eq!(g.coords(0), vec![-2.5]);
        assert_eq!(g.coords(10), vec![2.5]);
        for (node, x) in g.observation_nodes().iter().zip([-2.0, -1.0, 1.0, 2.0]) {
            assert_eq!(g.coords(*node), vec![x]);
        }
    }

    #[test]
    fn nearest_point_mapping() {
        let g = grid_1d(&[0.26], 0.1);
        let node = g.observation_nodes()[0];
        assert!((g.coords(node)[0] - 0.3).abs() < 1e-12);
        // ties go down
        let g = grid_1d(&[0.25, 0.75], 0.5);
        assert_eq!(g.coords(g.nearest(&[0.25]).unwrap()), vec![0.0]);
        assert_eq!(g.coords(g.nearest(&[0.75]).unwrap()), vec![0.5]);
    }

    #[test]
    fn stencils_interpolate_affine_functions() {
        let g = grid_1d(&[0.26, -1.0], 0.1);
        let s = &g.observation_stencils()[0];
        assert_eq!(s.len(), 2);
        let at: f64 = s.iter().map(|&(node, a)| a * g.coords(node)[0]).sum();
        assert!((at - 0.26).abs() < 1e-12);
        assert_eq!(g.observation_stencils()[1].len(), 1);

        let pts = [vec![0.3, 0.55]];
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let g = build_lattice_for_points(&refs, &[0.0, 0.0], 0.25, 1_000_000).unwrap();
        let s = &g.observation_stencils()[0];
        assert_eq!(s.len(), 4);
        assert!((s.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..2 {
            let at: f64 = s.iter().map(|&(node, a)| a * g.coords(node)[j]).sum();
            assert!((at - pts[0][j]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_dimensional_lattice_counts() {
        let pts = [vec![0.0, 0.0], vec![1.0, 1.0], vec![0.3, 0.9]];
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let g = build_lattice_for_points(&refs, &[0.0, 0.0], 0.25, 1_000_000).unwrap();
        // indices -1..=5 on each axis
        assert_eq!(g.dims(), &[7, 7]);
        assert_eq!(g.len(), 49);
        assert_eq!(g.lattice_coords(g.center_index()), vec![0, 0]);
        assert_eq!(g.anchors().len(), 3);
    }

    #[test]
    fn lattice_size_limit() {
        let pts = [vec![0.0, 0.0], vec![1.0, 1.0]];
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        assert!(matches!(
            build_lattice_for_points(&refs, &[0.0, 0.0], 0.001, 200_000),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn direction_sets() {
        assert_eq!(direction_set(1, DirectionLevel::Coarse).vectors(), &[vec![1]]);
        let coarse = direction_set(2, DirectionLevel::Coarse);
        let fine = direction_set(2, DirectionLevel::Fine);
        assert_eq!(coarse.len(), 4);
        assert_eq!(fine.len(), 8);
        for set in [&coarse, &fine] {
            assert!(set.vectors().contains(&vec![1, 0]));
            assert!(set.vectors().contains(&vec![0, 1]));
        }
        // parallel vectors collapse
        let dup = DirectionSet::new(2, vec![vec![1, 1], vec![-2, -2], vec![1, 0]]);
        assert_eq!(dup.len(), 2);
    }

    /// Brute-force α² by scanning unit vectors.
    fn alpha_squared_scan(dirs: &DirectionSet) -> f64 {
        let steps = 200_000;
        (0..steps)
            .map(|i| {
                let th = std::f64::consts::PI * i as f64 / steps as f64;
                let u = [th.cos(), th.sin()];
                dirs.vectors()
                    .iter()
                    .map(|v| {
                        let dot = u[0] * v[0] as f64 + u[1] * v[1] as f64;
                        let nn = (v[0] * v[0] + v[1] * v[1]) as f64;
                        1.0 - dot * dot / nn
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn alpha_squared_values() {
        assert_eq!(alpha_squared(&direction_set(1, DirectionLevel::Fine)), 0.0);
        let coarse = alpha_squared(&direction_set(2, DirectionLevel::Coarse));
        let expected = (std::f64::consts::PI / 8.0).sin().powi(2);
        assert!((coarse - expected).abs() < 1e-12);
        assert!((coarse - 0.1464).abs() < 1e-4);
        let fine = alpha_squared(&direction_set(2, DirectionLevel::Fine));
        assert!(fine <= 0.05);
        assert!(fine < coarse);
        for set in [
            direction_set(2, DirectionLevel::Coarse),
            direction_set(2, DirectionLevel::Fine),
            DirectionSet::new(2, vec![vec![1, 0], vec![0, 1], vec![2, 1], vec![1, 2]]),
        ] {
            assert!((alpha_squared(&set) - alpha_squared_scan(&set)).abs() < 1e-6);
        }
    }

    #[test]
    fn constraint_counts() {
        let g = grid_1d(&[-2.0, -1.0, 1.0, 2.0], 0.5);
        let cons = curvature_constraints(&g, &direction_set(1, DirectionLevel::Fine));
        assert_eq!(cons.num_rows(), 18);
        assert_eq!(cons.anchors.len(), 2);
        assert_eq!(g.coords(cons.anchors[1]), vec![0.5]);
    }

    #[test]
    fn diagonal_rows_scale_with_norm() {
        let pts = [vec![0.0, 0.0], vec![1.0, 1.0]];
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let g = build_lattice_for_points(&refs, &[0.0, 0.0], 0.25, 10_000).unwrap();
        let dirs = direction_set(2, DirectionLevel::Coarse);
        let cons = curvature_constraints(&g, &dirs);
        let h2 = 0.0625;
        for s in &cons.stencils {
            let d: Vec<i64> = g
                .lattice_coords(s.plus)
                .iter()
                .zip(g.lattice_coords(s.center))
                .map(|(a, b)| a - b)
                .collect();
            if d == vec![1, 1] {
                assert!((s.norm_sq - 2.0 * h2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn quadratic_has_exact_second_differences() {
        let pts: Vec<f64> = (0..11).map(|i| i as f64 - 5.0).collect();
        let g = grid_1d(&pts, 1.0);
        let cons = curvature_constraints(&g, &direction_set(1, DirectionLevel::Fine));
        let f: Vec<f64> = (0..g.len()).map(|i| g.coords(i)[0].powi(2) / 2.0).collect();
        for s in &cons.stencils {
            assert!((s.apply(&f) - 1.0).abs() < 1e-12);
        }
        assert_eq!(cons.max_violation(&f, 1.0), 0.0);
        assert!(cons.max_violation(&f, 0.9) > 0.0);
    }

    proptest! {
        #[test]
        fn bounded_quadratics_satisfy_all_rows(
            a in -1.0f64..1.0, b in -1.0f64..1.0, d in -1.0f64..1.0,
            l0 in -3.0f64..3.0, l1 in -3.0f64..3.0,
            h in 0.05f64..0.5,
            fine in any::<bool>(),
        ) {
            let pts = [vec![-1.0, -1.0], vec![1.0, 1.0]];
            let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
            let g = build_lattice_for_points(&refs, &[0.0, 0.0], h, 1_000_000).unwrap();
            let level = if fine { DirectionLevel::Fine } else { DirectionLevel::Coarse };
            let cons = curvature_constraints(&g, &direction_set(2, level));
            // ‖H‖ for H = [[a, b], [b, d]]
            let tr = a + d;
            let det = a * d - b * b;
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            let norm = (tr / 2.0 + disc).abs().max((tr / 2.0 - disc).abs());
            let f: Vec<f64> = (0..g.len()).map(|i| {
                let x = g.coords(i);
                0.5 * (a * x[0] * x[0] + 2.0 * b * x[0] * x[1] + d * x[1] * x[1])
                    - l0 * x[0] - l1 * x[1]
            }).collect();
            prop_assert!(cons.max_violation(&f, norm * (1.0 + 1e-9)) == 0.0);
        }

        #[test]
        fn nearest_mapping_is_deterministic_and_close(
            xs in proptest::collection::vec(-5.0f64..5.0, 1..30),
            h in 0.01f64..1.0,
        ) {
            let a = grid_1d(&xs, h);
            let b = grid_1d(&xs, h);
            prop_assert_eq!(a.observation_nodes(), b.observation_nodes());
            for (x, node) in xs.iter().zip(a.observation_nodes()) {
                prop_assert!((a.coords(*node)[0] - x).abs() <= h / 2.0 + 1e-9);
            }
        }
    }
}
