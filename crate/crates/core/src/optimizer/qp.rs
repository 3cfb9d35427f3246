use std::ops::Range;

/// Sparse linear row `Σ coef·x[var]` with a right-hand side.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        LinearRow { terms, rhs }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl VarBlock {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// Named contiguous blocks of unknowns.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VarCatalog {
    blocks: Vec<VarBlock>,
}

impl VarCatalog {
    pub fn push(&mut self, name: &str, len: usize) -> usize {
        let start = self.len();
        self.blocks.push(VarBlock {
            name: name.to_string(),
            start,
            len,
        });
        start
    }

    pub fn get(&self, name: &str) -> Option<&VarBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn blocks(&self) -> &[VarBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map(|b| b.start + b.len).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProgramKind {
    /// Unknowns are the weights themselves (block `gamma`).
    Primal,
    /// Weights are recovered from the block `g`; `g_rows` are the equality
    /// rows defining `G_i`, in observation order.
    Dual { g_rows: Range<usize> },
}

/// `minimize ½ xᵀPx + qᵀx + constant` subject to `A_eq x = b_eq` and
/// `A_in x ≤ b_in`.
#[derive(Clone, Debug)]
pub struct QuadraticProgram {
    pub kind: ProgramKind,
    pub catalog: VarCatalog,
    /// Upper-triangular entries `(i, j, value)` of P, `i ≤ j`.
    pub quad: Vec<(usize, usize, f64)>,
    pub linear: Vec<f64>,
    pub constant: f64,
    /// The modelled objective is `objective_scale ×` this program's
    /// objective. Builders divide variances by a common factor so the
    /// solver sees quantities of order one.
    pub objective_scale: f64,
    pub eq: Vec<LinearRow>,
    pub ineq: Vec<LinearRow>,
    /// Moment constraints on the weights, for feasibility diagnostics.
    pub moments: super::moments::MomentSystem,
}

impl QuadraticProgram {
    pub fn num_vars(&self) -> usize {
        self.catalog.len()
    }

    /// Appends a block of unknowns with zero objective.
    pub fn add_block(&mut self, name: &str, len: usize) -> usize {
        let start = self.catalog.push(name, len);
        self.linear.resize(self.catalog.len(), 0.0);
        start
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for &(i, j, p) in &self.quad {
            v += if i == j { 0.5 * p * x[i] * x[i] } else { p * x[i] * x[j] };
        }
        v + self.linear.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn check_dimensions(&self) -> bool {
        let n = self.num_vars();
        self.linear.len() == n
            && self.quad.iter().all(|&(i, j, _)| i <= j && j < n)
            && self
                .eq
                .iter()
                .chain(&self.ineq)
                .all(|r| r.terms.iter().all(|&(j, _)| j < n))
    }
}
