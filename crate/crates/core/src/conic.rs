//! A small conic modeling layer: real variable blocks (scalars, vectors,
//! Hermitian and general complex matrices), affine expressions, and
//! zero / nonnegative / second-order / PSD cones, assembled into standard
//! form `A x + s = b, s in K` and handed to Clarabel.
//!
//! Hermitian PSD constraints are lowered through the real embedding
//! `[[Re X, -Im X], [Im X, Re X]] >= 0`; PSD cone rows are stored as the
//! upper triangle, column by column (Clarabel's `svec` order, with the
//! off-diagonal sqrt(2) scaling applied at assembly).
//!
//! # Text dump
//!
//! [`StandardForm::dump`] writes a line-oriented description:
//!
//! ```text
//! conic v1
//! vars <n>
//! block <name> <kind> <offset> <len>      one per variable block
//! objective <nnz> <constant>
//! <col> <value>                           nnz lines
//! cone <kind> <dim> <rows> <name>         kind: zero|nonneg|soc|psd
//! a <rows> <cols> <nnz>
//! <row> <col> <value>                     column-major
//! b <nnz>
//! <row> <value>
//! ```
//!
//! Indices are zero-based; floats use 17 significant digits. For `psd`
//! cones `dim` is the matrix side and `rows = dim (dim + 1) / 2`.

use std::fmt::{self, Write as _};
use std::sync::Once;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use num_complex::Complex64;

use crate::math::{symmetric_eigenvalues, CMat, RMat};
use crate::{Error, Result};

/// Sparse real affine expression `sum_i a_i x_i + c`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        AffExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        AffExpr {
            terms: vec![(i, 1.0)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, i: usize, a: f64) {
        if a != 0.0 {
            self.terms.push((i, a));
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &AffExpr) {
        if a == 0.0 {
            return;
        }
        self.terms
            .extend(other.terms.iter().map(|&(i, v)| (i, a * v)));
        self.constant += a * other.constant;
    }

    pub fn scaled(&self, a: f64) -> AffExpr {
        let mut out = AffExpr::zero();
        out.axpy(a, self);
        out
    }

    pub fn plus(mut self, other: &AffExpr) -> AffExpr {
        self.axpy(1.0, other);
        self
    }

    pub fn minus(mut self, other: &AffExpr) -> AffExpr {
        self.axpy(-1.0, other);
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>() + self.constant
    }

    /// Sorted by variable, duplicates merged, exact zeros dropped.
    pub fn canonical(&self) -> AffExpr {
        let mut t = self.terms.clone();
        t.sort_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(t.len());
        for (i, a) in t {
            match out.last_mut() {
                Some((j, b)) if *j == i => *b += a,
                _ => out.push((i, a)),
            }
        }
        out.retain(|&(_, a)| a != 0.0);
        AffExpr {
            terms: out,
            constant: self.constant,
        }
    }

    /// `1 + |c| + sum |a_i x_i|`, the magnitude used to judge residuals.
    fn magnitude(&self, x: &[f64]) -> f64 {
        1.0 + self.constant.abs() + self.terms.iter().map(|&(i, a)| (a * x[i]).abs()).sum::<f64>()
    }

    fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(|&(i, _)| i).max()
    }
}

/// Complex affine expression kept as real and imaginary parts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CAff {
    pub re: AffExpr,
    pub im: AffExpr,
}

impl CAff {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(z: Complex64) -> Self {
        CAff {
            re: AffExpr::constant(z.re),
            im: AffExpr::constant(z.im),
        }
    }

    pub fn conj(&self) -> CAff {
        CAff {
            re: self.re.clone(),
            im: self.im.scaled(-1.0),
        }
    }

    /// `self += z * other`.
    pub fn axpy(&mut self, z: Complex64, other: &CAff) {
        self.re.axpy(z.re, &other.re);
        self.re.axpy(-z.im, &other.im);
        self.im.axpy(z.re, &other.im);
        self.im.axpy(z.im, &other.re);
    }

    pub fn add_const(&mut self, z: Complex64) {
        self.re.constant += z.re;
        self.im.constant += z.im;
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        Complex64::new(self.re.eval(x), self.im.eval(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Scalar,
    Vector,
    Hermitian,
    ComplexMatrix,
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::Scalar => "scalar",
            BlockKind::Vector => "vector",
            BlockKind::Hermitian => "hermitian",
            BlockKind::ComplexMatrix => "complex",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    pub offset: usize,
    pub len: usize,
}

/// Hermitian n x n variable: n real diagonal entries followed by
/// (re, im) pairs of the strict upper triangle, column by column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermVar {
    pub n: usize,
    pub offset: usize,
}

impl HermVar {
    pub fn real_len(n: usize) -> usize {
        n * n
    }

    fn upper_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        // strict upper entries before column j: j (j - 1) / 2
        self.offset + self.n + 2 * (j * (j - 1) / 2 + i)
    }

    pub fn entry(&self, i: usize, j: usize) -> CAff {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => CAff {
                re: AffExpr::var(self.offset + i),
                im: AffExpr::zero(),
            },
            Less => {
                let p = self.upper_index(i, j);
                CAff {
                    re: AffExpr::var(p),
                    im: AffExpr::var(p + 1),
                }
            }
            Greater => self.entry(j, i).conj(),
        }
    }

    /// Real trace as an affine expression.
    pub fn trace(&self) -> AffExpr {
        AffExpr {
            terms: (0..self.n).map(|i| (self.offset + i, 1.0)).collect(),
            constant: 0.0,
        }
    }

    /// `Re Tr(C^H X)` for a constant C.
    pub fn inner(&self, c: &CMat) -> AffExpr {
        let mut e = AffExpr::zero();
        for j in 0..self.n {
            for i in 0..self.n {
                // Re(conj(c_ij) x_ij)
                let z = c[(i, j)].conj();
                let x = self.entry(i, j);
                e.axpy(z.re, &x.re);
                e.axpy(-z.im, &x.im);
            }
        }
        e.canonical()
    }

    pub fn value(&self, x: &[f64]) -> CMat {
        CMat::from_fn(self.n, self.n, |i, j| self.entry(i, j).eval(x))
    }

    /// Writes the upper triangle of `m` (assumed Hermitian) into `x`.
    pub fn pack(&self, m: &CMat, x: &mut [f64]) {
        for j in 0..self.n {
            x[self.offset + j] = m[(j, j)].re;
            for i in 0..j {
                let p = self.upper_index(i, j);
                x[p] = m[(i, j)].re;
                x[p + 1] = m[(i, j)].im;
            }
        }
    }
}

/// General complex rows x cols variable, column-major, (re, im) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CMatVar {
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl CMatVar {
    pub fn entry(&self, i: usize, j: usize) -> CAff {
        let p = self.offset + 2 * (j * self.rows + i);
        CAff {
            re: AffExpr::var(p),
            im: AffExpr::var(p + 1),
        }
    }

    /// `Re Tr(C^H X)` for a constant C.
    pub fn inner(&self, c: &CMat) -> AffExpr {
        let mut e = AffExpr::zero();
        for j in 0..self.cols {
            for i in 0..self.rows {
                let z = c[(i, j)];
                let p = self.offset + 2 * (j * self.rows + i);
                e.add_term(p, z.re);
                e.add_term(p + 1, z.im);
            }
        }
        e
    }

    pub fn value(&self, x: &[f64]) -> CMat {
        CMat::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).eval(x))
    }

    pub fn pack(&self, m: &CMat, x: &mut [f64]) {
        for j in 0..self.cols {
            for i in 0..self.rows {
                let p = self.offset + 2 * (j * self.rows + i);
                x[p] = m[(i, j)].re;
                x[p + 1] = m[(i, j)].im;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// `rows == 0`.
    Zero(usize),
    /// `rows >= 0`.
    NonNeg(usize),
    /// `rows[0] >= ||rows[1..]||`.
    Soc(usize),
    /// Real symmetric n x n PSD; rows hold the upper triangle by columns.
    Psd(usize),
}

impl Cone {
    pub fn rows(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::NonNeg(d) | Cone::Soc(d) => d,
            Cone::Psd(n) => n * (n + 1) / 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "zero",
            Cone::NonNeg(_) => "nonneg",
            Cone::Soc(_) => "soc",
            Cone::Psd(_) => "psd",
        }
    }

    fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::NonNeg(d) | Cone::Soc(d) | Cone::Psd(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub cone: Cone,
    pub rows: Vec<AffExpr>,
}

/// Solver-agnostic convex problem: minimize an affine objective subject to
/// affine expressions lying in cones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    pub blocks: Vec<Block>,
    pub n_vars: usize,
    pub objective: AffExpr,
    pub constraints: Vec<Constraint>,
}

/// Upper-triangle column-major positions of an n x n matrix.
fn upper_positions(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(|j| (0..=j).map(move |i| (i, j)))
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_block(&mut self, name: &str, kind: BlockKind, len: usize) -> usize {
        let offset = self.n_vars;
        self.blocks.push(Block {
            name: name.to_string(),
            kind,
            offset,
            len,
        });
        self.n_vars += len;
        offset
    }

    pub fn add_scalar(&mut self, name: &str) -> usize {
        self.push_block(name, BlockKind::Scalar, 1)
    }

    /// Real vector; returns the offset of its first entry.
    pub fn add_vector(&mut self, name: &str, n: usize) -> usize {
        self.push_block(name, BlockKind::Vector, n)
    }

    pub fn add_hermitian(&mut self, name: &str, n: usize) -> HermVar {
        let offset = self.push_block(name, BlockKind::Hermitian, HermVar::real_len(n));
        HermVar { n, offset }
    }

    pub fn add_complex_matrix(&mut self, name: &str, rows: usize, cols: usize) -> CMatVar {
        let offset = self.push_block(name, BlockKind::ComplexMatrix, 2 * rows * cols);
        CMatVar { rows, cols, offset }
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn set_objective(&mut self, obj: AffExpr) {
        self.objective = obj;
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, cone: Cone, rows: Vec<AffExpr>) {
        self.constraints.push(Constraint {
            name: name.into(),
            cone,
            rows,
        });
    }

    pub fn add_zero(&mut self, name: impl Into<String>, rows: Vec<AffExpr>) {
        let d = rows.len();
        self.add_constraint(name, Cone::Zero(d), rows);
    }

    /// `e >= 0`.
    pub fn add_nonneg(&mut self, name: impl Into<String>, e: AffExpr) {
        self.add_constraint(name, Cone::NonNeg(1), vec![e]);
    }

    /// `t >= ||v||`.
    pub fn add_soc(&mut self, name: impl Into<String>, t: AffExpr, v: Vec<AffExpr>) {
        let mut rows = Vec::with_capacity(v.len() + 1);
        rows.push(t);
        rows.extend(v);
        let d = rows.len();
        self.add_constraint(name, Cone::Soc(d), rows);
    }

    /// `||v||^2 <= t` as `||(v, (t - 1) / 2)|| <= (t + 1) / 2`.
    pub fn add_squared_norm_epigraph(&mut self, name: impl Into<String>, v: Vec<AffExpr>, t: &AffExpr) {
        let mut head = t.scaled(0.5);
        head.constant += 0.5;
        let mut tail = t.scaled(0.5);
        tail.constant -= 0.5;
        let mut rows = v;
        rows.push(tail);
        self.add_soc(name, head, rows);
    }

    /// Hermitian `X >= 0` where `entry(i, j)` is queried for `i <= j` only;
    /// the lower triangle follows by conjugate symmetry.
    pub fn add_hermitian_psd<F>(&mut self, name: impl Into<String>, n: usize, entry: F)
    where
        F: Fn(usize, usize) -> CAff,
    {
        let upper: Vec<Vec<CAff>> = (0..n)
            .map(|i| (0..n).map(|j| if i <= j { entry(i, j) } else { CAff::zero() }).collect())
            .collect();
        let x = |i: usize, j: usize| -> CAff {
            if i <= j {
                upper[i][j].clone()
            } else {
                upper[j][i].conj()
            }
        };
        // upper triangle of [[Re X, -Im X], [Im X, Re X]]
        let rows = upper_positions(2 * n)
            .map(|(i, j)| match (i < n, j < n) {
                (true, true) => x(i, j).re,
                (true, false) => x(i, j - n).im.scaled(-1.0),
                (false, false) => x(i - n, j - n).re,
                (false, true) => unreachable!("lower block is never in the upper triangle"),
            })
            .collect();
        let name = name.into();
        // Diagonal entries of a Hermitian expression must be real.
        let diag_imag: Vec<AffExpr> = (0..n)
            .map(|i| upper[i][i].im.canonical())
            .filter(|e| !e.terms.is_empty() || e.constant != 0.0)
            .collect();
        if !diag_imag.is_empty() {
            self.add_constraint(format!("{name}.diag_imag"), Cone::Zero(diag_imag.len()), diag_imag);
        }
        self.add_constraint(name, Cone::Psd(2 * n), rows);
    }

    pub fn cone_counts(&self) -> ConeCounts {
        let mut c = ConeCounts::default();
        for k in &self.constraints {
            match k.cone {
                Cone::Zero(d) => c.zero_rows += d,
                Cone::NonNeg(d) => c.nonneg_rows += d,
                Cone::Soc(d) => {
                    c.soc += 1;
                    c.soc_rows += d;
                }
                Cone::Psd(n) => {
                    c.psd += 1;
                    c.psd_sides.push(n);
                }
            }
        }
        c
    }

    /// Lowers to standard form with deterministic ordering: variables in
    /// block order, cones in insertion order, triplets column-major.
    pub fn assemble(&self) -> Result<StandardForm> {
        let n = self.n_vars;
        let check = |name: &str, e: &AffExpr| -> Result<()> {
            match e.max_var() {
                Some(i) if i >= n => Err(Error::Assembly {
                    constraint: name.to_string(),
                    msg: format!("variable index {i} out of range ({n} variables)"),
                }),
                _ if !e.constant.is_finite() || e.terms.iter().any(|t| !t.1.is_finite()) => {
                    Err(Error::Assembly {
                        constraint: name.to_string(),
                        msg: "non-finite coefficient".into(),
                    })
                }
                _ => Ok(()),
            }
        };
        check("objective", &self.objective)?;
        let obj = self.objective.canonical();
        let mut q = vec![0.0; n];
        for &(i, a) in &obj.terms {
            q[i] = a;
        }

        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            if c.rows.len() != c.cone.rows() {
                return Err(Error::Assembly {
                    constraint: c.name.clone(),
                    msg: format!("cone {:?} needs {} rows, got {}", c.cone, c.cone.rows(), c.rows.len()),
                });
            }
            if let Cone::Soc(0) | Cone::Psd(0) = c.cone {
                return Err(Error::Assembly {
                    constraint: c.name.clone(),
                    msg: "empty cone".into(),
                });
            }
            let scales: Vec<f64> = match c.cone {
                Cone::Psd(side) => upper_positions(side)
                    .map(|(i, j)| if i == j { 1.0 } else { std::f64::consts::SQRT_2 })
                    .collect(),
                _ => vec![1.0; c.rows.len()],
            };
            for (e, s) in c.rows.iter().zip(scales) {
                check(&c.name, e)?;
                let row = b.len();
                let e = e.canonical();
                // a.x + c in K  <=>  -a.x + s = c
                for &(j, a) in &e.terms {
                    triplets.push((row, j, -a * s));
                }
                b.push(e.constant * s);
            }
            cones.push(ConeBlock {
                name: c.name.clone(),
                cone: c.cone,
            });
        }
        triplets.sort_by_key(|x| (x.1, x.0));
        Ok(StandardForm {
            n,
            m: b.len(),
            q,
            objective_constant: obj.constant,
            triplets,
            b,
            cones,
            blocks: self.blocks.clone(),
        })
    }

    /// Solves and independently re-checks every cone at the returned point.
    pub fn solve(&self, settings: &SolverSettings) -> Result<ConicSolution> {
        let sf = self.assemble()?;
        let mut sol = sf.solve(settings);
        if !sol.x.is_empty() {
            let violation = self.max_violation(&sol.x);
            sol.max_violation = violation;
            if sol.status == SolveStatus::Optimal && !(violation <= 10.0 * settings.tol) {
                log::warn!(
                    "solver reported optimal but residual {violation:.3e} exceeds {:.1e}",
                    10.0 * settings.tol
                );
                sol.status = SolveStatus::NumericalLimit;
            }
            sol.objective = self.objective.eval(&sol.x);
        }
        Ok(sol)
    }

    /// Largest scaled cone violation of `x` over all constraints.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| constraint_violation(c, x))
            .fold(0.0, f64::max)
    }
}

/// Cone violation of one constraint, scaled by its magnitude at `x`.
pub fn constraint_violation(c: &Constraint, x: &[f64]) -> f64 {
    let vals: Vec<f64> = c.rows.iter().map(|e| e.eval(x)).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let scale = c
        .rows
        .iter()
        .map(|e| e.magnitude(x))
        .fold(1.0, f64::max);
    let raw = match c.cone {
        Cone::Zero(_) => vals.iter().map(|v| v.abs()).fold(0.0, f64::max),
        Cone::NonNeg(_) => vals.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max),
        Cone::Soc(_) => {
            let tail = vals[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            (tail - vals[0]).max(0.0)
        }
        Cone::Psd(n) => {
            let mut m = RMat::zeros(n, n);
            for ((i, j), v) in upper_positions(n).zip(&vals) {
                m[(i, j)] = *v;
                m[(j, i)] = *v;
            }
            let ev = symmetric_eigenvalues(&m);
            (-ev.last().copied().unwrap_or(0.0)).max(0.0)
        }
    };
    raw / scale
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConeCounts {
    pub zero_rows: usize,
    pub nonneg_rows: usize,
    pub soc: usize,
    pub soc_rows: usize,
    pub psd: usize,
    pub psd_sides: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeBlock {
    pub name: String,
    pub cone: Cone,
}

/// Assembled data: minimize `q.x + objective_constant` subject to
/// `A x + s = b`, `s` in the product of `cones`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardForm {
    pub n: usize,
    pub m: usize,
    pub q: Vec<f64>,
    pub objective_constant: f64,
    /// `(row, col, value)` sorted column-major.
    pub triplets: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<ConeBlock>,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalLimit => "numerical_limit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    /// Cone slacks `s = b - A x` as returned by the solver.
    pub s: Vec<f64>,
    /// Dual variables; recorded but unused by the algorithms here.
    pub z: Vec<f64>,
    pub objective: f64,
    /// Dual objective; bounds the optimal value when the dual is feasible.
    pub dual_objective: f64,
    pub status: SolveStatus,
    /// Raw status string from the solver.
    pub solver_status: String,
    pub iterations: u32,
    pub seconds: f64,
    pub max_violation: f64,
}

impl ConicSolution {
    pub fn hermitian(&self, v: &HermVar) -> CMat {
        v.value(&self.x)
    }

    pub fn complex(&self, v: &CMatVar) -> CMat {
        v.value(&self.x)
    }

    pub fn scalar(&self, i: usize) -> f64 {
        self.x[i]
    }
}

extern "C" {
    fn openblas_set_num_threads(n: std::os::raw::c_int);
}

static BLAS_INIT: Once = Once::new();

/// Parallelism comes from independent drops; keep BLAS single-threaded.
fn init_blas() {
    BLAS_INIT.call_once(|| unsafe { openblas_set_num_threads(1) });
}

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalLimit,
    }
}

impl StandardForm {
    fn csc(&self) -> CscMatrix<f64> {
        let mut colptr = vec![0usize; self.n + 1];
        for &(_, j, _) in &self.triplets {
            colptr[j + 1] += 1;
        }
        for j in 0..self.n {
            colptr[j + 1] += colptr[j];
        }
        let rowval = self.triplets.iter().map(|t| t.0).collect();
        let nzval = self.triplets.iter().map(|t| t.2).collect();
        CscMatrix::new(self.m, self.n, colptr, rowval, nzval)
    }

    fn clarabel_cones(&self) -> Vec<SupportedConeT<f64>> {
        self.cones
            .iter()
            .map(|c| match c.cone {
                Cone::Zero(d) => SupportedConeT::ZeroConeT(d),
                Cone::NonNeg(d) => SupportedConeT::NonnegativeConeT(d),
                Cone::Soc(d) => SupportedConeT::SecondOrderConeT(d),
                Cone::Psd(n) => SupportedConeT::PSDTriangleConeT(n),
            })
            .collect()
    }

    /// Runs the interior-point solver. The status is the solver's own;
    /// [`ConicProblem::solve`] adds the independent residual gate.
    pub fn solve(&self, settings: &SolverSettings) -> ConicSolution {
        init_blas();
        let start = Instant::now();
        let fail = |msg: String| ConicSolution {
            x: Vec::new(),
            s: Vec::new(),
            z: Vec::new(),
            objective: f64::NAN,
            dual_objective: f64::NAN,
            status: SolveStatus::NumericalLimit,
            solver_status: msg,
            iterations: 0,
            seconds: start.elapsed().as_secs_f64(),
            max_violation: f64::INFINITY,
        };
        let cfg = match DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(settings.max_iter)
            .tol_feas(settings.tol)
            .tol_gap_abs(settings.tol)
            .tol_gap_rel(settings.tol)
            .build()
        {
            Ok(c) => c,
            Err(e) => return fail(format!("settings: {e:?}")),
        };
        let p = CscMatrix::<f64>::zeros((self.n, self.n));
        let a = self.csc();
        let cones = self.clarabel_cones();
        let mut solver = match DefaultSolver::new(&p, &self.q, &a, &self.b, &cones, cfg) {
            Ok(s) => s,
            Err(e) => return fail(format!("setup: {e:?}")),
        };
        // The PSD cone's LAPACK calls panic on a failed factorization; treat
        // that as a failed solve rather than taking down the caller.
        if let Err(p) = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| solver.solve())) {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown".into());
            log::warn!("conic solver panicked: {msg}");
            return fail(format!("panic: {msg}"));
        }
        let r = &solver.solution;
        let status = map_status(r.status);
        ConicSolution {
            x: r.x.clone(),
            s: r.s.clone(),
            z: r.z.clone(),
            objective: r.obj_val + self.objective_constant,
            dual_objective: r.obj_val_dual + self.objective_constant,
            status,
            solver_status: format!("{:?}", r.status),
            iterations: r.iterations,
            seconds: start.elapsed().as_secs_f64(),
            max_violation: f64::NAN,
        }
    }

    /// Row range of cone `idx` in `b` / `s`.
    pub fn cone_rows(&self, idx: usize) -> std::ops::Range<usize> {
        let start: usize = self.cones[..idx].iter().map(|c| c.cone.rows()).sum();
        start..start + self.cones[idx].cone.rows()
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        let obj: Vec<(usize, f64)> = self
            .q
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        // writing to a String cannot fail
        let _ = writeln!(out, "conic v1");
        let _ = writeln!(out, "vars {}", self.n);
        for b in &self.blocks {
            let _ = writeln!(out, "block {} {} {} {}", b.name, b.kind, b.offset, b.len);
        }
        let _ = writeln!(out, "objective {} {:.16e}", obj.len(), self.objective_constant);
        for (i, v) in obj {
            let _ = writeln!(out, "{i} {v:.16e}");
        }
        for c in &self.cones {
            let _ = writeln!(
                out,
                "cone {} {} {} {}",
                c.cone.kind(),
                c.cone.dim(),
                c.cone.rows(),
                c.name
            );
        }
        let _ = writeln!(out, "a {} {} {}", self.m, self.n, self.triplets.len());
        for (i, j, v) in &self.triplets {
            let _ = writeln!(out, "{i} {j} {v:.16e}");
        }
        let nz: Vec<(usize, f64)> = self
            .b
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        let _ = writeln!(out, "b {}", nz.len());
        for (i, v) in nz {
            let _ = writeln!(out, "{i} {v:.16e}");
        }
        out
    }
}
