//! Joint beamforming / active-IRS design by bilinear transformation, inner
//! approximation (IA) and semidefinite relaxation.
//!
//! With `W_k = w_k w_k^H`, `Z_r = W_r G^H Psi^H` and auxiliaries `U_r`, `V_r`,
//! each iteration solves a convex restriction of the lifted problem around
//! the current expansion point:
//!
//! * every bilinear reflected-power term `Re Tr(Psi G Z_r H_R,k)` is split as
//!   `+-(1/2)||Psi^H +- G Z_r H_R,k||^2 -+ (1/2)||Psi||^2 -+ (1/2)||G Z_r H_R,k||^2`
//!   (the `+` split bounds interference from above, the `-` split bounds the
//!   desired signal from below) and the concave quadratics are replaced by
//!   first-order minorants;
//! * `Z_r = W_r G^H Psi^H` is imposed by the block LMI over
//!   `(U_r, Z_r, W_r G^H; ., V_r, Psi; ., ., I)` together with a linearized
//!   `Tr(U_r) <= Tr(W_r G^H G W_r)`;
//! * the rank-one constraint on `W_k` is dropped.
//!
//! Subproblems are built in normalized units (see [`Scaling`]) so that the
//! interior-point solver sees O(1) data.
//!
//! Note: the linearized trace constraint together with the block LMI gives
//! `||(W_r - W_r^(j)) G^H||^2 <= 0`, so whenever `G` has full column rank the
//! beamformers cannot move away from the expansion point. The iteration then
//! stops after its first step with the initial objective.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use crate::baselines::{baseline_no_irs, BaselineResult};
use crate::channel::{rng_from_seed, ChannelSet};
use crate::config::SystemConfig;
use crate::conic::{
    AffExpr, CAff, CMatVar, ConicProblem, ConicSolution, HermVar, SolveStatus, SolverSettings,
};
use crate::math::{
    frobenius_inner, frobenius_norm_sq, hermitian_eigenvalues, is_psd, principal_eigenpair, symmetrize,
    CMat, CVec,
};
use crate::problem::{
    c1_residual_lifted, c2_residual_lifted, check_feasibility, lifted_gain,
    Solution,
};
use crate::{Error, Result};

/// Rank ratios above this are reported when extracting beamformers.
pub const RANK_ONE_WARN: f64 = 1e-4;
/// Relative cap on `Tr V` above `||Psi||^2` in [`lemma1_probe`].
pub const LEMMA1_V_CAP: f64 = 1e-8;
/// Relative negative eigenvalue accepted in solver-returned `W_k`.
pub const EXTRACT_PSD_TOL: f64 = 1e-6;
/// Beamformer inflation of the no-IRS warm start.
pub const INIT_MARGIN: f64 = 0.05;
/// Feasibility tolerance for accepting an iterate on the original problem.
pub const ACCEPT_TOL: f64 = 1e-6;
/// Allowed relative objective increase between accepted iterates.
pub const MONOTONE_TOL: f64 = 1e-7;

/// One expansion point of the iteration, in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub w: Vec<CMat>,
    /// Diagonal of `Psi`.
    pub psi: CVec,
    pub z: Vec<CMat>,
    pub u: Vec<CMat>,
    pub v: Vec<CMat>,
    /// `sum_k Tr(W_k)` in watts.
    pub objective: f64,
    pub iteration: usize,
}

fn psi_times_g(psi: &CVec, g: &CMat) -> CMat {
    CMat::from_fn(g.nrows(), g.ncols(), |i, j| psi[i] * g[(i, j)])
}

impl IterateState {
    /// Auxiliaries set so that the bilinear constraints hold with equality.
    pub fn consistent(ch: &ChannelSet, w: Vec<CMat>, psi: CVec, iteration: usize) -> Self {
        let pg = psi_times_g(&psi, &ch.g);
        let z: Vec<CMat> = w.iter().map(|wk| wk * pg.adjoint()).collect();
        let u: Vec<CMat> = w
            .iter()
            .map(|wk| symmetrize(&(wk * ch.g.adjoint() * &ch.g * wk)))
            .collect();
        let vv = CMat::from_diagonal(&psi.map(|p| Complex64::from(p.norm_sqr())));
        let objective = w.iter().map(|wk| wk.trace().re).sum();
        IterateState {
            v: vec![vv; w.len()],
            w,
            psi,
            z,
            u,
            objective,
            iteration,
        }
    }

    pub fn from_solution(ch: &ChannelSet, sol: &Solution, iteration: usize) -> Self {
        let w = sol.w.iter().map(crate::math::outer).collect();
        Self::consistent(ch, w, sol.psi.clone(), iteration)
    }

    /// `max_r ||Z_r - W_r G^H Psi^H||_F`.
    pub fn consistency_error(&self, ch: &ChannelSet) -> f64 {
        let pg = psi_times_g(&self.psi, &ch.g);
        self.w
            .iter()
            .zip(&self.z)
            .map(|(w, z)| (z - w * pg.adjoint()).norm())
            .fold(0.0, f64::max)
    }
}

/// Affine function `X -> Re Tr(coef^H X) + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMinorant {
    pub coef: CMat,
    pub constant: f64,
}

impl LinearMinorant {
    pub fn eval(&self, x: &CMat) -> f64 {
        frobenius_inner(&self.coef, x) + self.constant
    }
}

/// Minorant of `||Psi||_F^2` at `Psi_j`: `2 Re Tr(Psi_j^H Psi) - ||Psi_j||^2`.
pub fn linearize_psi_quadratic(psi_j: &CMat) -> LinearMinorant {
    LinearMinorant {
        coef: psi_j * Complex64::from(2.0),
        constant: -frobenius_norm_sq(psi_j),
    }
}

/// Minorant of `||G Z H||_F^2` at `Z_j`:
/// `2 Re Tr((G^H G Z_j H H^H)^H Z) - ||G Z_j H||^2`.
pub fn linearize_z_quadratic(z_j: &CMat, g: &CMat, h: &CMat) -> LinearMinorant {
    let gzh = g * z_j * h;
    LinearMinorant {
        coef: g.adjoint() * &gzh * h.adjoint() * Complex64::from(2.0),
        constant: -frobenius_norm_sq(&gzh),
    }
}

/// Minorant of `Tr(W G^H G W^H) = ||W G^H||_F^2` at `W_j`:
/// `2 Re Tr((W_j G^H G)^H W) - ||W_j G^H||^2`.
pub fn linearize_w_quadratic(w_j: &CMat, g: &CMat) -> LinearMinorant {
    let wg = w_j * g.adjoint();
    LinearMinorant {
        coef: &wg * g * Complex64::from(2.0),
        constant: -frobenius_norm_sq(&wg),
    }
}

/// Right-hand side of the split
/// `Re Tr(C^H D) = (1/2)||l C + D / l||^2 - (1/2) l^2 ||C||^2 - (1/2)||D||^2 / l^2`
/// for `Tr(Psi G W G^H Psi^H H)`, with `C = Psi^H`, `D = G Z H`,
/// `Z = W G^H Psi^H`, evaluated with exact quadratics. The identity holds
/// for every `l > 0`; `l^2 = ||D|| / ||C||` balances the two norms as the
/// subproblem scaling does, which avoids cancellation when they differ by
/// orders of magnitude.
pub fn dc_reconstruction(psi: &CVec, g: &CMat, w: &CMat, h: &CMat) -> f64 {
    let p = CMat::from_diagonal(psi);
    let c = p.adjoint();
    let d = g * w * g.adjoint() * &c * h;
    let (nc, nd) = (c.norm(), d.norm());
    let l2 = if nc > 0.0 && nd > 0.0 { nd / nc } else { 1.0 };
    let l = l2.sqrt();
    0.5 * frobenius_norm_sq(&(&c * Complex64::from(l) + &d / Complex64::from(l)))
        - 0.5 * l2 * frobenius_norm_sq(&c)
        - 0.5 * frobenius_norm_sq(&d) / l2
}

/// Normalization of one subproblem:
/// `W = p0 W~`, `Psi = a0 Psi~`, `G = g0 G~`, `h_R = r0 h_R~`, `h_D = d0 h_D~`,
/// hence `Z = p0 g0 a0 Z~`, `U = p0^2 g0^2 U~`, `V = a0^2 V~`.
///
/// `g0` and `r0` balance `||G~ Z~||` and `||G~ Z~ H~||` against `||Psi~||`,
/// which fixes the weighting inside each norm split; the split stays exact
/// for any weighting, so the restriction remains tight at the expansion
/// point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub p0: f64,
    pub a0: f64,
    pub g0: f64,
    pub r0: f64,
    pub d0: f64,
}

fn positive_or(x: f64, fallback: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        x
    } else {
        fallback
    }
}

fn max_abs_entries<'a>(it: impl Iterator<Item = &'a Complex64>) -> f64 {
    it.map(|z| z.norm()).fold(0.0, f64::max)
}

impl Scaling {
    pub fn at(ch: &ChannelSet, st: &IterateState) -> Self {
        let k = st.w.len() as f64;
        let m = st.psi.len() as f64;
        let p0 = positive_or(st.objective / k, 1.0);
        let psi_norm = st.psi.norm();
        let a0 = positive_or(psi_norm / m.sqrt(), 1.0);
        let gmax = positive_or(max_abs_entries(ch.g.iter()), 1.0);
        let rmax = positive_or(max_abs_entries(ch.h_r.iter().flat_map(|h| h.iter())), 1.0);
        let d0 = positive_or(max_abs_entries(ch.h_d.iter().flat_map(|h| h.iter())), 1.0);

        // ||G Z|| averaged over users
        let gz = st.z.iter().map(|z| (&ch.g * z).norm()).sum::<f64>() / k;
        let g0 = if gz > 0.0 && psi_norm > 0.0 {
            positive_or((gz / (p0 * psi_norm)).sqrt(), gmax)
        } else {
            gmax
        };
        // geometric mean of ||G Z_r H_k|| over all (r, k)
        let mut log_sum = 0.0;
        let mut count = 0usize;
        for z in &st.z {
            let gz = &ch.g * z;
            for h in &ch.h_r {
                let v = (&gz * h).norm() * h.norm();
                if v > 0.0 {
                    log_sum += v.ln();
                    count += 1;
                }
            }
        }
        let r0 = if count > 0 && psi_norm > 0.0 {
            let gzh = (log_sum / count as f64).exp();
            positive_or((gzh / (p0 * g0 * g0 * psi_norm)).sqrt(), rmax)
        } else {
            rmax
        };
        Scaling { p0, a0, g0, r0, d0 }
    }

    pub fn z(&self) -> f64 {
        self.p0 * self.g0 * self.a0
    }

    pub fn u(&self) -> f64 {
        (self.p0 * self.g0).powi(2)
    }

    pub fn v(&self) -> f64 {
        self.a0 * self.a0
    }
}

/// `weight * ||vector||^2` with `vector` affine in the subproblem variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredTerm {
    pub label: String,
    pub weight: f64,
    pub vector: Vec<CAff>,
}

impl SquaredTerm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.weight * self.vector.iter().map(|e| e.eval(x).norm_sqr()).sum::<f64>()
    }
}

/// Convex constraint `sum_i weight_i ||v_i||^2 + linear <= 0` in normalized
/// units; multiply by `scale` to obtain the physical residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexConstraint {
    pub name: String,
    pub squares: Vec<SquaredTerm>,
    pub linear: AffExpr,
    pub scale: f64,
}

impl ConvexConstraint {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.squares.iter().map(|s| s.eval(x)).sum::<f64>() + self.linear.eval(x)
    }

    pub fn evaluate_physical(&self, x: &[f64]) -> f64 {
        self.evaluate(x) * self.scale
    }

    pub fn is_convex(&self) -> bool {
        self.squares.iter().all(|s| s.weight >= 0.0)
    }

    /// Adds one epigraph scalar per squared term and the linear row.
    fn add_to(&self, prob: &mut ConicProblem) -> Vec<usize> {
        let mut row = self.linear.scaled(-1.0);
        let mut epi = Vec::with_capacity(self.squares.len());
        for s in &self.squares {
            let t = prob.add_scalar(&format!("t[{}:{}]", self.name, s.label));
            let w = s.weight.sqrt();
            let v: Vec<AffExpr> = s
                .vector
                .iter()
                .flat_map(|e| [e.re.scaled(w), e.im.scaled(w)])
                .collect();
            prob.add_squared_norm_epigraph(format!("{}:{}", self.name, s.label), v, &AffExpr::var(t));
            row.add_term(t, -1.0);
            epi.push(t);
        }
        prob.add_nonneg(self.name.clone(), row);
        epi
    }
}

/// Variable handles of one subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemVars {
    pub w: Vec<HermVar>,
    pub psi: CMatVar,
    pub z: Vec<CMatVar>,
    pub u: Vec<HermVar>,
    pub v: Vec<HermVar>,
}

/// Normalized channel data used by the builders.
struct Scaled {
    g: CMat,
    h_d: Vec<CVec>,
    h_r: Vec<CVec>,
}

impl Scaled {
    fn new(ch: &ChannelSet, s: &Scaling) -> Self {
        Scaled {
            g: &ch.g / Complex64::from(s.g0),
            h_d: ch.h_d.iter().map(|h| h / Complex64::from(s.d0)).collect(),
            h_r: ch.h_r.iter().map(|h| h / Complex64::from(s.r0)).collect(),
        }
    }
}

fn cscale(e: &CAff, z: Complex64) -> CAff {
    let mut out = CAff::zero();
    out.axpy(z, e);
    out
}

/// Entries of `G Z h` for a constant `G`, `h`.
fn gzh(g: &CMat, z: &CMatVar, h: &CVec) -> Vec<CAff> {
    let zh: Vec<CAff> = (0..z.rows)
        .map(|n| {
            let mut e = CAff::zero();
            for l in 0..z.cols {
                e.axpy(h[l], &z.entry(n, l));
            }
            e
        })
        .collect();
    (0..g.nrows())
        .map(|m| {
            let mut e = CAff::zero();
            for (n, b) in zh.iter().enumerate() {
                e.axpy(g[(m, n)], b);
            }
            e
        })
        .collect()
}

/// Entries of `Psi^H + sign * G Z h h^H` in compressed form: the diagonal
/// `conj(psi_m) + sign a_m conj(h_m)` followed by the row remainders
/// `a_m sqrt(||h||^2 - |h_m|^2)`, whose squared norms add up to the same
/// Frobenius norm.
fn psi_plus_gzhh(psi: &CMatVar, a: &[CAff], h: &CVec, sign: f64) -> Vec<CAff> {
    let hn = h.norm_squared();
    let mut out = Vec::with_capacity(2 * a.len());
    for (m, am) in a.iter().enumerate() {
        let mut e = psi.entry(m, 0).conj();
        e.axpy(h[m].conj() * sign, am);
        out.push(e);
    }
    for (m, am) in a.iter().enumerate() {
        let rest = (hn - h[m].norm_sqr()).max(0.0).sqrt();
        if rest > 0.0 {
            out.push(cscale(am, Complex64::from(rest)));
        }
    }
    out
}

/// `Re Tr(C^H diag(psi))` as an affine expression.
fn psi_inner(psi: &CMatVar, c: &CVec) -> AffExpr {
    psi.inner(&CMat::from_column_slice(c.len(), 1, c.as_slice()))
}

/// The convex restriction solved in one iteration.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub problem: ConicProblem,
    pub vars: SubproblemVars,
    pub scaling: Scaling,
    pub c1bar: Vec<ConvexConstraint>,
    pub c2bar: ConvexConstraint,
    epigraphs: Vec<(usize, usize, usize)>,
}

fn declare_vars(prob: &mut ConicProblem, k: usize, n_t: usize, m: usize) -> SubproblemVars {
    let w = (0..k).map(|i| prob.add_hermitian(&format!("W{i}"), n_t)).collect();
    let psi = prob.add_complex_matrix("Psi", m, 1);
    let z = (0..k).map(|i| prob.add_complex_matrix(&format!("Z{i}"), n_t, m)).collect();
    let u = (0..k).map(|i| prob.add_hermitian(&format!("U{i}"), n_t)).collect();
    let v = (0..k).map(|i| prob.add_hermitian(&format!("V{i}"), m)).collect();
    SubproblemVars { w, psi, z, u, v }
}

/// Inner approximation of the SINR constraint of user `k`, normalized by
/// the desired-signal power at the expansion point.
pub fn build_c1bar(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    st: &IterateState,
    sc: &Scaling,
    vars: &SubproblemVars,
    k: usize,
) -> ConvexConstraint {
    let d = Scaled::new(ch, sc);
    let gamma = cfg.sinr_req;
    let users = st.w.len();
    // physical coefficients of the normalized building blocks
    let c_d = sc.d0 * sc.d0 * sc.p0;
    let c_x = sc.d0 * sc.r0 * sc.z();
    let c_r = sc.p0 * (sc.g0 * sc.a0 * sc.r0).powi(2);
    let c_n = cfg.noise_dynamic_w * (sc.r0 * sc.a0).powi(2);
    let scale = positive_or(lifted_gain(ch, &st.psi, &st.w[k], k), cfg.noise_user_w * gamma);

    let h = &d.h_r[k];
    let hh = crate::math::outer(h);
    let hd = crate::math::outer(&d.h_d[k]);
    let cross = &d.h_d[k] * h.adjoint();
    let psi_j = &st.psi / Complex64::from(sc.a0);
    let lin_psi = linearize_psi_quadratic(&CMat::from_column_slice(psi_j.len(), 1, psi_j.as_slice()));

    let mut squares = Vec::new();
    let mut linear = AffExpr::zero();
    let mut lin_psi_weight = 0.0;
    for r in 0..users {
        let z_j = &st.z[r] / Complex64::from(sc.z());
        let lin_z = linearize_z_quadratic(&z_j, &d.g, &hh);
        let a = gzh(&d.g, &vars.z[r], h);
        // direct and cross terms: Tr(H_D W_r) + 2 Re(h_D^H Z_r h_R)
        let mut gain = vars.w[r].inner(&hd).scaled(c_d);
        gain.axpy(2.0 * c_x, &vars.z[r].inner(&cross));
        let (sign, weight) = if r == k { (-1.0, 1.0) } else { (1.0, gamma) };
        // interference: + Gamma [ (1/2)||Psi^H + GZH||^2 - (1/2) lin_psi - (1/2) lin_z ]
        // desired:      -      [-(1/2)||Psi^H - GZH||^2 + (1/2) lin_psi + (1/2) lin_z ]
        squares.push(SquaredTerm {
            label: if r == k { "desired".into() } else { format!("interference{r}") },
            weight: 0.5 * weight * c_r / scale,
            vector: psi_plus_gzhh(&vars.psi, &a, h, sign),
        });
        lin_psi_weight += 0.5 * weight * c_r / scale;
        let mut lz = vars.z[r].inner(&lin_z.coef);
        lz.constant += lin_z.constant;
        linear.axpy(-0.5 * weight * c_r / scale, &lz);
        let sgn = if r == k { -1.0 } else { gamma };
        linear.axpy(sgn / scale, &gain);
    }
    let mut lp = psi_inner(&vars.psi, &lin_psi.coef.column(0).into_owned());
    lp.constant += lin_psi.constant;
    linear.axpy(-lin_psi_weight, &lp);

    // amplified IRS noise: Gamma sigma_d^2 ||h_R^H Psi||^2
    squares.push(SquaredTerm {
        label: "irs_noise".into(),
        weight: gamma * c_n / scale,
        vector: (0..h.len())
            .map(|m| cscale(&vars.psi.entry(m, 0), h[m].conj()))
            .collect(),
    });
    linear.constant += gamma * cfg.noise_user_w / scale;
    ConvexConstraint {
        name: format!("C1bar[{k}]"),
        squares,
        linear: linear.canonical(),
        scale,
    }
}

/// Inner approximation of the IRS power budget, normalized by `P_A`.
pub fn build_c2bar(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    st: &IterateState,
    sc: &Scaling,
    vars: &SubproblemVars,
) -> ConvexConstraint {
    let d = Scaled::new(ch, sc);
    let m = st.psi.len();
    let scale = cfg.irs_power_budget_w;
    let c_s = sc.a0 * sc.a0 * sc.g0 * sc.g0 * sc.p0 / scale;
    let c_n = cfg.noise_dynamic_w * sc.a0 * sc.a0 / scale;
    let psi_j = &st.psi / Complex64::from(sc.a0);
    let lin_psi = linearize_psi_quadratic(&CMat::from_column_slice(m, 1, psi_j.as_slice()));
    let eye = CMat::identity(m, m);

    let mut squares = Vec::new();
    let mut linear = AffExpr::constant(-1.0);
    for (k, zv) in vars.z.iter().enumerate() {
        let z_j = &st.z[k] / Complex64::from(sc.z());
        let lin_z = linearize_z_quadratic(&z_j, &d.g, &eye);
        // ||Psi^H + G Z_k||^2, entry by entry
        let mut v = Vec::with_capacity(m * m);
        for col in 0..m {
            for row in 0..m {
                let mut e = CAff::zero();
                for n in 0..zv.rows {
                    e.axpy(d.g[(row, n)], &zv.entry(n, col));
                }
                if row == col {
                    let pc = vars.psi.entry(row, 0).conj();
                    e.re.axpy(1.0, &pc.re);
                    e.im.axpy(1.0, &pc.im);
                }
                v.push(e);
            }
        }
        squares.push(SquaredTerm {
            label: format!("signal{k}"),
            weight: 0.5 * c_s,
            vector: v,
        });
        let mut lz = zv.inner(&lin_z.coef);
        lz.constant += lin_z.constant;
        linear.axpy(-0.5 * c_s, &lz);
    }
    let mut lp = psi_inner(&vars.psi, &lin_psi.coef.column(0).into_owned());
    lp.constant += lin_psi.constant;
    linear.axpy(-0.5 * c_s * vars.z.len() as f64, &lp);
    squares.push(SquaredTerm {
        label: "irs_noise".into(),
        weight: c_n,
        vector: (0..m).map(|i| vars.psi.entry(i, 0)).collect(),
    });
    ConvexConstraint {
        name: "C2bar".into(),
        squares,
        linear: linear.canonical(),
        scale,
    }
}

/// Adds, for user `r`, the block LMI linking `Z_r` to `W_r G^H Psi^H` and
/// the linearized trace constraint on `U_r`.
pub fn build_c5_c6bar(
    prob: &mut ConicProblem,
    ch: &ChannelSet,
    st: &IterateState,
    sc: &Scaling,
    vars: &SubproblemVars,
    r: usize,
) {
    let g = &ch.g / Complex64::from(sc.g0);
    let n_t = ch.n_t();
    let m = ch.m();
    let (w, z, u, v, psi) = (vars.w[r], vars.z[r], vars.u[r], vars.v[r], vars.psi);
    let wgh = |i: usize, col: usize| {
        // (W G^H)_{i, col} = sum_n W_{i n} conj(G_{col n})
        let mut e = CAff::zero();
        for n in 0..n_t {
            e.axpy(g[(col, n)].conj(), &w.entry(i, n));
        }
        e
    };
    prob.add_hermitian_psd(format!("C5[{r}]"), n_t + 2 * m, |i, j| {
        let blk = |x: usize| {
            if x < n_t {
                (0, x)
            } else if x < n_t + m {
                (1, x - n_t)
            } else {
                (2, x - n_t - m)
            }
        };
        match (blk(i), blk(j)) {
            ((0, a), (0, b)) => u.entry(a, b),
            ((0, a), (1, b)) => z.entry(a, b),
            ((0, a), (2, b)) => wgh(a, b),
            ((1, a), (1, b)) => v.entry(a, b),
            ((1, a), (2, b)) => {
                if a == b {
                    psi.entry(a, 0)
                } else {
                    CAff::zero()
                }
            }
            ((2, a), (2, b)) => CAff::constant(if a == b { 1.0.into() } else { 0.0.into() }),
            _ => unreachable!("only the upper triangle is queried"),
        }
    });
    // Tr(U) + ||W_j G^H||^2 - 2 Re Tr((G^H G W_j)^H W) <= 0
    let w_j = &st.w[r] / Complex64::from(sc.p0);
    let lin = linearize_w_quadratic(&w_j, &g);
    let mut row = w.inner(&lin.coef).minus(&u.trace());
    row.constant += lin.constant;
    prob.add_nonneg(format!("C6bar[{r}]"), row);
}

/// Number of real scalars in a subproblem: `K N_T^2` (W) + `2M` (Psi) +
/// `2 K N_T M` (Z) + `K N_T^2` (U) + `K M^2` (V) + `(K + 1)^2` epigraphs.
pub fn subproblem_var_count(n_t: usize, k: usize, m: usize) -> usize {
    2 * k * n_t * n_t + 2 * m + 2 * k * n_t * m + k * m * m + (k + 1) * (k + 1)
}

pub fn build_subproblem(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    st: &IterateState,
) -> Result<Subproblem> {
    let (k, n_t, m) = (ch.k(), ch.n_t(), ch.m());
    if st.w.len() != k
        || st.z.len() != k
        || st.psi.len() != m
        || st.w.iter().any(|w| w.shape() != (n_t, n_t))
        || st.z.iter().any(|z| z.shape() != (n_t, m))
        || cfg.users != k
        || cfg.n_t != n_t
        || cfg.irs_elements != m
    {
        return Err(Error::contract("iterate, channels and config disagree on dimensions"));
    }
    let sc = Scaling::at(ch, st);
    let mut prob = ConicProblem::new();
    let vars = declare_vars(&mut prob, k, n_t, m);
    let mut obj = AffExpr::zero();
    for w in &vars.w {
        obj.axpy(1.0, &w.trace());
    }
    prob.set_objective(obj);

    let c1bar: Vec<ConvexConstraint> = (0..k)
        .map(|u| build_c1bar(ch, cfg, st, &sc, &vars, u))
        .collect();
    let c2bar = build_c2bar(ch, cfg, st, &sc, &vars);
    let mut epigraphs = Vec::new();
    for (ci, c) in c1bar.iter().chain(std::iter::once(&c2bar)).enumerate() {
        for (si, t) in c.add_to(&mut prob).into_iter().enumerate() {
            epigraphs.push((ci, si, t));
        }
    }
    for (i, w) in vars.w.iter().enumerate() {
        prob.add_hermitian_psd(format!("C3[{i}]"), n_t, |a, b| w.entry(a, b));
    }
    for r in 0..k {
        build_c5_c6bar(&mut prob, ch, st, &sc, &vars, r);
    }
    Ok(Subproblem {
        problem: prob,
        vars,
        scaling: sc,
        c1bar,
        c2bar,
        epigraphs,
    })
}

impl Subproblem {
    /// Maps a physical iterate to the normalized variable vector, with each
    /// epigraph scalar set to its squared norm.
    pub fn pack(&self, st: &IterateState) -> Vec<f64> {
        let sc = &self.scaling;
        let mut x = vec![0.0; self.problem.n_vars];
        let div = |m: &CMat, s: f64| m / Complex64::from(s);
        for (i, v) in self.vars.w.iter().enumerate() {
            v.pack(&div(&st.w[i], sc.p0), &mut x);
        }
        let psi = CMat::from_column_slice(st.psi.len(), 1, st.psi.as_slice());
        self.vars.psi.pack(&div(&psi, sc.a0), &mut x);
        for (i, v) in self.vars.z.iter().enumerate() {
            v.pack(&div(&st.z[i], sc.z()), &mut x);
        }
        for (i, v) in self.vars.u.iter().enumerate() {
            v.pack(&div(&st.u[i], sc.u()), &mut x);
        }
        for (i, v) in self.vars.v.iter().enumerate() {
            v.pack(&div(&st.v[i], sc.v()), &mut x);
        }
        let cons: Vec<&ConvexConstraint> =
            self.c1bar.iter().chain(std::iter::once(&self.c2bar)).collect();
        for &(ci, si, t) in &self.epigraphs {
            x[t] = cons[ci].squares[si].eval(&x);
        }
        x
    }

    /// Physical iterate from a normalized variable vector.
    pub fn unpack(&self, x: &[f64], iteration: usize) -> IterateState {
        let sc = &self.scaling;
        let mul = |m: CMat, s: f64| m * Complex64::from(s);
        let w: Vec<CMat> = self
            .vars
            .w
            .iter()
            .map(|v| symmetrize(&mul(v.value(x), sc.p0)))
            .collect();
        let psi: CVec = self.vars.psi.value(x).column(0) * Complex64::from(sc.a0);
        IterateState {
            objective: w.iter().map(|m| m.trace().re).sum(),
            z: self.vars.z.iter().map(|v| mul(v.value(x), sc.z())).collect(),
            u: self.vars.u.iter().map(|v| mul(v.value(x), sc.u())).collect(),
            v: self.vars.v.iter().map(|v| mul(v.value(x), sc.v())).collect(),
            w,
            psi,
            iteration,
        }
    }
}

/// Principal-eigenpair beamformers `w_k = sqrt(lambda_1) u_1` and the rank
/// ratio `lambda_2 / lambda_1` of each `W_k`.
pub fn extract_beamformers(w: &[CMat]) -> Result<(Vec<CVec>, Vec<f64>)> {
    let mut beams = Vec::with_capacity(w.len());
    let mut ratios = Vec::with_capacity(w.len());
    for (k, wk) in w.iter().enumerate() {
        let wk = symmetrize(wk);
        let ev = hermitian_eigenvalues(&wk)?;
        let l1 = ev.first().copied().unwrap_or(0.0);
        let lmin = ev.last().copied().unwrap_or(0.0);
        if lmin < -EXTRACT_PSD_TOL * l1.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::contract(format!(
                "W_{k} is indefinite (lambda_min = {lmin:.3e}, lambda_max = {l1:.3e})"
            )));
        }
        let ratio = if l1 > 0.0 { ev.get(1).copied().unwrap_or(0.0).max(0.0) / l1 } else { 0.0 };
        if ratio > RANK_ONE_WARN {
            log::warn!("W_{k} is not rank one: lambda2/lambda1 = {ratio:.3e}");
        }
        let (l1, v) = principal_eigenpair(&wk)?;
        beams.push(v * Complex64::from(l1.max(0.0).sqrt()));
        ratios.push(ratio);
    }
    Ok((beams, ratios))
}

/// Feasible starting point: the no-IRS beamformers inflated by
/// `1 + INIT_MARGIN`, and `Psi` with random phases and a common amplitude
/// that leaves half of the IRS budget unused, halved until every SINR
/// target still holds.
pub fn initialize(ch: &ChannelSet, cfg: &SystemConfig) -> Result<IterateState> {
    initialize_from(ch, cfg, &baseline_no_irs(ch, cfg)?)
}

/// [`initialize`] with an already computed no-IRS solution.
pub fn initialize_from(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    base: &BaselineResult,
) -> Result<IterateState> {
    if !base.feasible {
        return Err(Error::Initialization(format!(
            "no-IRS warm start is {}",
            base.status
        )));
    }
    let inflate = Complex64::from((1.0 + INIT_MARGIN).sqrt());
    let w: Vec<CVec> = base.solution.w.iter().map(|v| v * inflate).collect();
    let mut rng = rng_from_seed(cfg.seed ^ 0x5EED_1A5A_u64);
    let theta = CVec::from_fn(ch.m(), |_, _| {
        Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * std::f64::consts::PI))
    });
    let unit = Solution {
        w: w.clone(),
        psi: theta.clone(),
    };
    // C2 is quadratic in the common amplitude rho
    let load = crate::problem::irs_output_power(ch, &unit, cfg);
    let mut rho = (0.5 * cfg.irs_power_budget_w / load).sqrt();
    for _ in 0..200 {
        let sol = Solution {
            w: w.clone(),
            psi: &theta * Complex64::from(rho),
        };
        if check_feasibility(ch, &sol, cfg, 0.0).feasible {
            let st = IterateState::from_solution(ch, &sol, 0);
            return Ok(st);
        }
        rho *= 0.5;
    }
    Err(Error::Initialization(
        "no IRS amplitude keeps the SINR targets".into(),
    ))
}

/// Solves one subproblem. Infeasible and unbounded outcomes are errors
/// carrying the status; so is a numerical limit without a finite primal
/// point. A numerical-limit point is returned as is (with its status) for
/// the caller to vet against the original problem: the restriction pins the
/// beamformers, so Slater's condition fails and the solver often stalls on
/// the dual side with an accurate primal iterate.
pub fn solve_iteration(
    sub: &Subproblem,
    settings: &SolverSettings,
    iteration: usize,
) -> Result<(IterateState, ConicSolution)> {
    let sol = sub.problem.solve(settings)?;
    let usable = match sol.status {
        SolveStatus::Optimal => true,
        SolveStatus::NumericalLimit => {
            sol.x.len() == sub.problem.n_vars && sol.x.iter().all(|v| v.is_finite())
        }
        _ => false,
    };
    if !usable {
        return Err(Error::Solver { status: sol.status });
    }
    let st = sub.unpack(&sol.x, iteration);
    Ok((st, sol))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// Objective of the candidate produced in this iteration.
    pub objective_w: f64,
    /// Largest relative violation of the original constraints at the
    /// candidate.
    pub max_violation: f64,
    pub solver_status: String,
    pub seconds: f64,
}

impl TraceRow {
    /// Whether this row's candidate became the next expansion point.
    pub fn accepted(&self) -> bool {
        self.objective_w.is_finite() && !self.solver_status.ends_with("rejected")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    pub const HEADER: [&'static str; 5] = [
        "iteration",
        "objective_W",
        "max_violation",
        "solver_status",
        "seconds",
    ];

    /// Objectives of accepted iterates never increase by more than `rel`.
    pub fn is_monotone(&self, rel: f64) -> bool {
        let acc: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.accepted())
            .map(|r| r.objective_w)
            .collect();
        acc.windows(2).all(|p| p[1] <= p[0] + rel * p[0].abs())
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                format!("{:.9e}", r.objective_w),
                format!("{:.9e}", r.max_violation),
                r.solver_status.clone(),
                format!("{:.6}", r.seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl fmt::Display for ConvergenceTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|_| fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&buf))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// A candidate failed the monotonicity or feasibility check.
    Stalled,
    SolverFailure(SolveStatus),
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::Converged => f.write_str("converged"),
            StopReason::MaxIterations => f.write_str("max_iterations"),
            StopReason::Stalled => f.write_str("stalled"),
            StopReason::SolverFailure(s) => write!(f, "solver_{s}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub solution: Solution,
    pub state: IterateState,
    pub trace: ConvergenceTrace,
    pub stop: StopReason,
    /// Subproblems solved.
    pub iterations: usize,
    /// Rank ratios of the solver's `W_k` in the last accepted iteration.
    pub rank_ratios: Vec<f64>,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

/// Options for [`run_from`]; [`run`] uses the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub solver: SolverSettings,
}

struct Candidate {
    state: IterateState,
    solution: Solution,
    ratios: Vec<f64>,
    violation: f64,
    feasible: bool,
}

fn candidate(ch: &ChannelSet, cfg: &SystemConfig, st: &IterateState) -> Result<Candidate> {
    let (beams, ratios) = extract_beamformers(&st.w)?;
    let solution = Solution {
        w: beams,
        psi: st.psi.clone(),
    };
    let rep = check_feasibility(ch, &solution, cfg, ACCEPT_TOL);
    // the next expansion point is the consistent lift of the physical solution
    let state = IterateState::from_solution(ch, &solution, st.iteration);
    Ok(Candidate {
        violation: rep.max_relative_violation(cfg),
        feasible: rep.feasible,
        state,
        solution,
        ratios,
    })
}

pub fn run(ch: &ChannelSet, cfg: &SystemConfig) -> Result<RunResult> {
    let init = initialize(ch, cfg)?;
    run_from(ch, cfg, &RunOptions::default(), init, |_| {})
}

/// Runs the iteration from a feasible `init`; `on_subproblem` sees every
/// assembled subproblem (e.g. for dumping).
pub fn run_from(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    opts: &RunOptions,
    init: IterateState,
    mut on_subproblem: impl FnMut(&Subproblem),
) -> Result<RunResult> {
    let start = Instant::now();
    let first = candidate(ch, cfg, &init)?;
    let mut trace = ConvergenceTrace::default();
    trace.rows.push(TraceRow {
        iteration: 0,
        objective_w: first.state.objective,
        max_violation: first.violation,
        solver_status: "init".into(),
        seconds: start.elapsed().as_secs_f64(),
    });
    let mut best = first;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    for j in 1..=cfg.max_iter {
        let t0 = Instant::now();
        let sub = build_subproblem(ch, cfg, &best.state)?;
        on_subproblem(&sub);
        iterations = j;
        let (st, sol) = match solve_iteration(&sub, &opts.solver, j) {
            Ok(v) => v,
            Err(Error::Solver { status }) => {
                trace.rows.push(TraceRow {
                    iteration: j,
                    objective_w: f64::NAN,
                    max_violation: f64::NAN,
                    solver_status: status.to_string(),
                    seconds: t0.elapsed().as_secs_f64(),
                });
                stop = StopReason::SolverFailure(status);
                break;
            }
            Err(e) => return Err(e),
        };
        log::debug!(
            "iteration {j}: objective {:.6e} W, solver {} in {} its",
            st.objective,
            sol.solver_status,
            sol.iterations
        );
        let mut cand = candidate(ch, cfg, &st)?;
        let prev = best.state.objective;
        let tol = MONOTONE_TOL * prev.abs();
        let mut status = sol.status.to_string();
        if !cand.feasible && cand.state.objective <= prev + tol {
            // one retry: halfway between the old and new iterates
            let w: Vec<CMat> = best
                .state
                .w
                .iter()
                .zip(&st.w)
                .map(|(a, b)| (a + b) * Complex64::from(0.5))
                .collect();
            let psi = (&best.state.psi + &st.psi) * Complex64::from(0.5);
            let mid = IterateState::consistent(ch, w, psi, j);
            cand = candidate(ch, cfg, &mid)?;
            status.push_str("/halved");
        }
        let accepted = cand.feasible && cand.state.objective <= prev + tol;
        trace.rows.push(TraceRow {
            iteration: j,
            objective_w: cand.state.objective,
            max_violation: cand.violation,
            solver_status: if accepted { status } else { format!("{status}/rejected") },
            seconds: t0.elapsed().as_secs_f64(),
        });
        if !accepted {
            stop = StopReason::Stalled;
            break;
        }
        let decrease = (prev - cand.state.objective) / cand.state.objective;
        best = cand;
        if decrease <= cfg.tolerance {
            stop = StopReason::Converged;
            break;
        }
    }
    if stop == StopReason::MaxIterations {
        log::warn!("iteration cap {} reached before convergence", cfg.max_iter);
    }
    Ok(RunResult {
        solution: best.solution,
        state: best.state,
        trace,
        stop,
        iterations,
        rank_ratios: best.ratios,
    })
}

/// Lemma-1 oracle: with `W`, `Psi` fixed, the block LMI and the trace
/// constraint `Tr(U) <= (1 + trace_slack) Tr(W G^H G W)` admit only
/// `Z = W G^H Psi^H` when `trace_slack = 0`.
///
/// For every real coordinate of `Z` two probing SDPs maximize and minimize
/// it, and the extremes are read from the primal and dual objective values.
/// `V` is free in the lemma; here `Tr V <= (1 + v_cap) ||Psi||^2` keeps the
/// probes bounded. In exact arithmetic the cap does not change the extremes,
/// but the feasible set has no interior: a trace residual `e` lets `Z` move
/// by about `sqrt(e * v_cap ||Psi||^2)`, so a tight cap is what makes the
/// answer resolvable at solver precision. A positive `trace_slack` serves as
/// the control: `Z` then moves by `sqrt(trace_slack * v_cap)` in relative
/// terms.
///
/// Returns `||dev||_2 / ||W G^H Psi^H||_F`, where `dev` holds, per real
/// coordinate, the distance from the product to the farthest extreme.
pub fn lemma1_probe(
    w: &CMat,
    psi: &CVec,
    g: &CMat,
    trace_slack: f64,
    v_cap: f64,
    settings: &SolverSettings,
) -> Result<f64> {
    // The relative deviation is invariant under separate scalings of W,
    // G and Psi; unit norms keep the probe well conditioned.
    let unit = |x: &CMat| x.unscale(x.norm().max(f64::MIN_POSITIVE));
    let (w, g) = (&unit(w), &unit(g));
    let psi = &psi.unscale(psi.norm().max(f64::MIN_POSITIVE));
    let n_t = w.nrows();
    let m = psi.len();
    let z_true = w * g.adjoint() * CMat::from_diagonal(psi).adjoint();
    let u_exact = (w * g.adjoint() * g * w).trace().re;
    let wg = w * g.adjoint();
    let mut dev_sq = 0.0;
    for idx in 0..2 * n_t * m {
        let mut dev: f64 = 0.0;
        for sign in [1.0, -1.0] {
            let mut prob = ConicProblem::new();
            let z = prob.add_complex_matrix("Z", n_t, m);
            let u = prob.add_hermitian("U", n_t);
            let v = prob.add_hermitian("V", m);
            let mut truth = vec![0.0; z.offset + 2 * n_t * m];
            z.pack(&z_true, &mut truth);
            let target = sign * truth[z.offset + idx];
            prob.set_objective(AffExpr {
                terms: vec![(z.offset + idx, -sign)],
                constant: 0.0,
            });
            prob.add_hermitian_psd("C5", n_t + 2 * m, |i, j| {
                let blk = |x: usize| {
                    if x < n_t {
                        (0, x)
                    } else if x < n_t + m {
                        (1, x - n_t)
                    } else {
                        (2, x - n_t - m)
                    }
                };
                match (blk(i), blk(j)) {
                    ((0, a), (0, b)) => u.entry(a, b),
                    ((0, a), (1, b)) => z.entry(a, b),
                    ((0, a), (2, b)) => CAff::constant(wg[(a, b)]),
                    ((1, a), (1, b)) => v.entry(a, b),
                    ((1, a), (2, b)) => {
                        CAff::constant(if a == b { psi[a] } else { 0.0.into() })
                    }
                    ((2, a), (2, b)) => {
                        CAff::constant(if a == b { 1.0.into() } else { 0.0.into() })
                    }
                    _ => unreachable!(),
                }
            });
            prob.add_nonneg("C6", AffExpr::constant(u_exact * (1.0 + trace_slack)).minus(&u.trace()));
            prob.add_nonneg(
                "Vcap",
                AffExpr::constant(psi.norm_squared() * (1.0 + v_cap)).minus(&v.trace()),
            );
            let sol = prob.solve(settings)?;
            if sol.status != SolveStatus::Optimal {
                return Err(Error::Solver { status: sol.status });
            }
            // the probe maximizes sign * Z[idx]
            for obj in [sol.objective, sol.dual_objective] {
                dev = dev.max((-obj - target).abs());
            }
        }
        dev_sq += dev * dev;
    }
    Ok(dev_sq.sqrt() / z_true.norm().max(f64::MIN_POSITIVE))
}

/// The block matrix `(U_r, Z_r, W_r G^H; ., V_r, Psi; ., ., I)` at a point.
pub fn c5_block(st: &IterateState, g: &CMat, r: usize) -> CMat {
    let n_t = st.w[r].nrows();
    let m = st.psi.len();
    let n = n_t + 2 * m;
    let wg = &st.w[r] * g.adjoint();
    let mut b = CMat::zeros(n, n);
    b.view_mut((0, 0), (n_t, n_t)).copy_from(&st.u[r]);
    b.view_mut((0, n_t), (n_t, m)).copy_from(&st.z[r]);
    b.view_mut((0, n_t + m), (n_t, m)).copy_from(&wg);
    b.view_mut((n_t, n_t), (m, m)).copy_from(&st.v[r]);
    b.view_mut((n_t, n_t + m), (m, m))
        .copy_from(&CMat::from_diagonal(&st.psi));
    b.view_mut((n_t + m, n_t + m), (m, m))
        .copy_from(&CMat::identity(m, m));
    // lower blocks by conjugate symmetry
    let upper = b.clone();
    for i in 0..n {
        for j in 0..i {
            b[(i, j)] = upper[(j, i)].conj();
        }
    }
    b
}

/// Whether the block LMI holds at a point (smallest eigenvalue >= -tol).
pub fn c5_holds(st: &IterateState, g: &CMat, r: usize, tol: f64) -> Result<bool> {
    is_psd(&c5_block(st, g, r), tol)
}

/// Residual of the exact trace constraint `Tr(U_r) - Tr(W_r G^H G W_r)`.
pub fn c6_residual(st: &IterateState, g: &CMat, r: usize) -> f64 {
    st.u[r].trace().re - (&st.w[r] * g.adjoint() * g * &st.w[r]).trace().re
}

/// Original-problem residuals at a lifted point: C1 per user, then C2.
pub fn lifted_residuals(ch: &ChannelSet, cfg: &SystemConfig, st: &IterateState) -> Vec<f64> {
    let mut r: Vec<f64> = (0..st.w.len())
        .map(|k| c1_residual_lifted(ch, cfg, &st.w, &st.psi, k))
        .collect();
    r.push(c2_residual_lifted(ch, cfg, &st.w, &st.psi));
    r
}

/// Writes an assembled subproblem in the plain-text conic format.
pub fn dump_subproblem(sub: &Subproblem, path: &Path) -> Result<()> {
    let sf = sub.problem.assemble()?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(sf.dump().as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw;
    use crate::math::testutil::{random_cmat, random_cvec, random_psd};
    use crate::math::{min_eigenvalue, outer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn psi_minorant_scalar() {
        let one = CMat::from_element(1, 1, Complex64::from(1.0));
        let lin = linearize_psi_quadratic(&one);
        let two = CMat::from_element(1, 1, Complex64::from(2.0));
        assert_eq!(lin.eval(&two), 3.0);
        assert!(lin.eval(&two) <= 4.0);
        assert_eq!(lin.eval(&one), 1.0);
    }

    #[test]
    fn minorants_are_tight_and_below() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let psi_j = random_cmat(&mut rng, 4, 1);
            let psi = random_cmat(&mut rng, 4, 1);
            let lin = linearize_psi_quadratic(&psi_j);
            assert!(lin.eval(&psi) <= frobenius_norm_sq(&psi) + 1e-12);
            assert!(rel(lin.eval(&psi_j), frobenius_norm_sq(&psi_j)) < 1e-12);

            let g = random_cmat(&mut rng, 4, 3);
            let h = outer(&random_cvec(&mut rng, 4));
            let z_j = random_cmat(&mut rng, 3, 4);
            let z = random_cmat(&mut rng, 3, 4);
            let f = |z: &CMat| frobenius_norm_sq(&(&g * z * &h));
            let lin = linearize_z_quadratic(&z_j, &g, &h);
            assert!(lin.eval(&z) <= f(&z) * (1.0 + 1e-12) + 1e-12);
            assert!(rel(lin.eval(&z_j), f(&z_j)) < 1e-12);

            let w_j = random_psd(&mut rng, 3);
            let w = random_psd(&mut rng, 3);
            let f = |w: &CMat| (w * g.adjoint() * &g * w.adjoint()).trace().re;
            let lin = linearize_w_quadratic(&w_j, &g);
            assert!(lin.eval(&w) <= f(&w) * (1.0 + 1e-12) + 1e-12);
            assert!(rel(lin.eval(&w_j), f(&w_j)) < 1e-12);
        }
        // zero expansion gives the zero bound
        let g = random_cmat(&mut rng, 4, 3);
        let lin = linearize_z_quadratic(&CMat::zeros(3, 4), &g, &CMat::identity(4, 4));
        assert_eq!(lin.eval(&random_cmat(&mut rng, 3, 4)), 0.0);
        let lin = linearize_w_quadratic(&CMat::zeros(3, 3), &g);
        assert_eq!(lin.eval(&random_psd(&mut rng, 3)), 0.0);
    }

    #[test]
    fn dc_split_reconstructs_reflected_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let psi = random_cvec(&mut rng, 5);
            let g = random_cmat(&mut rng, 5, 3);
            let w = random_psd(&mut rng, 3);
            let h = outer(&random_cvec(&mut rng, 5));
            let p = CMat::from_diagonal(&psi);
            let direct = (&p * &g * &w * g.adjoint() * p.adjoint() * &h).trace().re;
            assert!(rel(dc_reconstruction(&psi, &g, &w, &h), direct) < 1e-9);
        }
    }

    fn small_instance(seed: u64, n_t: usize, k: usize, m: usize) -> (ChannelSet, SystemConfig) {
        let cfg = SystemConfig {
            n_t,
            users: k,
            irs_elements: m,
            seed,
            ..SystemConfig::default()
        };
        let (_, ch) = draw(&cfg, seed);
        (ch, cfg)
    }

    fn random_expansion(rng: &mut ChaCha8Rng, ch: &ChannelSet) -> IterateState {
        let w: Vec<CMat> = (0..ch.k())
            .map(|_| outer(&(random_cvec(rng, ch.n_t()) * Complex64::from(0.1))))
            .collect();
        let psi = random_cvec(rng, ch.m()) * Complex64::from(300.0);
        IterateState::consistent(ch, w, psi, 0)
    }

    #[test]
    fn restrictions_are_tight_at_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let (ch, cfg) = small_instance(seed, 4, 3, 6);
            let st = random_expansion(&mut rng, &ch);
            let sub = build_subproblem(&ch, &cfg, &st).unwrap();
            let x = sub.pack(&st);
            let orig = lifted_residuals(&ch, &cfg, &st);
            for k in 0..3 {
                assert!(sub.c1bar[k].is_convex());
                let got = sub.c1bar[k].evaluate_physical(&x);
                assert!(rel(got, orig[k]) < 1e-9, "C1 {k}: {got} vs {}", orig[k]);
            }
            let got = sub.c2bar.evaluate_physical(&x);
            assert!(rel(got, orig[3]) < 1e-9, "C2: {got} vs {}", orig[3]);
        }
    }

    #[test]
    fn single_user_c1bar_matches_hand_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (ch, cfg) = small_instance(4, 1, 1, 1);
        let st = random_expansion(&mut rng, &ch);
        let sub = build_subproblem(&ch, &cfg, &st).unwrap();
        let (g, hd, hr) = (ch.g[(0, 0)], ch.h_d[0][0], ch.h_r[0][0]);
        let h2 = hr.norm_sqr();
        let (psi_j, z_j) = (st.psi[0], st.z[0][(0, 0)]);
        for _ in 0..20 {
            // a random physical point
            let w = random_psd(&mut rng, 1) * Complex64::from(0.05);
            let psi = random_cvec(&mut rng, 1) * Complex64::from(200.0);
            let z = random_cmat(&mut rng, 1, 1) * Complex64::from(0.5);
            let mut pt = IterateState::consistent(&ch, vec![w.clone()], psi.clone(), 0);
            pt.z = vec![z.clone()];
            let x = sub.pack(&pt);
            // normalized DC weighting used by the builder
            let s = sub.scaling;
            let (p, zz) = (psi[0] / s.a0, z[(0, 0)] / s.z());
            let (pj, zj) = (psi_j / s.a0, z_j / s.z());
            let c_r = s.p0 * (s.g0 * s.a0 * s.r0).powi(2);
            let gt = g / s.g0;
            let ht2 = h2 / (s.r0 * s.r0);
            let dterm = gt * zz * ht2;
            let dterm_j = gt * zj * ht2;
            let t_lb = -0.5 * (p.conj() - dterm).norm_sqr()
                + 0.5 * (2.0 * (pj.conj() * p).re - pj.norm_sqr())
                + 0.5 * (2.0 * (dterm_j.conj() * dterm).re - dterm_j.norm_sqr());
            let want = cfg.sinr_req * (cfg.noise_dynamic_w * h2 * psi[0].norm_sqr() + cfg.noise_user_w)
                - hd.norm_sqr() * w[(0, 0)].re
                - 2.0 * (hd.conj() * z[(0, 0)] * hr).re
                - c_r * t_lb;
            let got = sub.c1bar[0].evaluate_physical(&x);
            assert!(rel(got, want) < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn c2bar_vanishes_without_irs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (ch, cfg) = small_instance(5, 2, 2, 3);
        let mut st = random_expansion(&mut rng, &ch);
        st.psi = CVec::zeros(3);
        st = IterateState::consistent(&ch, st.w.clone(), st.psi.clone(), 0);
        let sub = build_subproblem(&ch, &cfg, &st).unwrap();
        // Psi = 0, Z = 0: 0 <= P_A
        let x = sub.pack(&st);
        assert!((sub.c2bar.evaluate_physical(&x) + cfg.irs_power_budget_w).abs() < 1e-18);
    }

    #[test]
    fn consistent_point_satisfies_lemma_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (ch, _) = small_instance(6, 3, 2, 4);
        let st = random_expansion(&mut rng, &ch);
        for r in 0..2 {
            let lmin = min_eigenvalue(&c5_block(&st, &ch.g, r)).unwrap();
            assert!(lmin >= -1e-9 * c5_block(&st, &ch.g, r).norm(), "{lmin}");
            assert!(c6_residual(&st, &ch.g, r).abs() < 1e-12 * st.u[r].trace().re.abs().max(1e-300));
        }
        // all-zero point: block = diag(0, 0, I)
        let zero = IterateState {
            w: vec![CMat::zeros(3, 3)],
            psi: CVec::zeros(4),
            z: vec![CMat::zeros(3, 4)],
            u: vec![CMat::zeros(3, 3)],
            v: vec![CMat::zeros(4, 4)],
            objective: 0.0,
            iteration: 0,
        };
        assert!(c5_holds(&zero, &ch.g, 0, 0.0).unwrap());
        assert_eq!(c6_residual(&zero, &ch.g, 0), 0.0);
    }

    #[test]
    fn variable_and_cone_audit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (ch, cfg) = small_instance(7, 4, 3, 10);
        let st = random_expansion(&mut rng, &ch);
        let sub = build_subproblem(&ch, &cfg, &st).unwrap();
        assert_eq!(sub.problem.n_vars, subproblem_var_count(4, 3, 10));
        let c = sub.problem.cone_counts();
        // K C1bar + C2bar + K C6bar rows
        assert_eq!(c.nonneg_rows, 3 + 1 + 3);
        assert_eq!(c.soc, 16);
        assert_eq!(c.psd_sides, vec![8, 8, 8, 48, 48, 48]);
        assert_eq!(c.zero_rows, 0);
    }

    #[test]
    fn expansion_point_is_feasible_for_subproblem() {
        let (ch, cfg) = small_instance(8, 4, 3, 10);
        let st = initialize(&ch, &cfg).unwrap();
        let sub = build_subproblem(&ch, &cfg, &st).unwrap();
        let x = sub.pack(&st);
        let viol = sub.problem.max_violation(&x);
        assert!(viol < 1e-9, "{viol}");
    }

    #[test]
    fn initial_point_is_feasible_and_consistent() {
        for seed in 0..5 {
            let (ch, cfg) = small_instance(seed, 4, 3, 10);
            let st = initialize(&ch, &cfg).unwrap();
            let (beams, _) = extract_beamformers(&st.w).unwrap();
            let sol = Solution { w: beams, psi: st.psi.clone() };
            assert!(check_feasibility(&ch, &sol, &cfg, 1e-8).feasible);
            for r in 0..3 {
                assert!(c6_residual(&st, &ch.g, r).abs() <= 1e-12 * st.u[r].trace().re);
                let b = c5_block(&st, &ch.g, r);
                assert!(min_eigenvalue(&b).unwrap() >= -1e-9 * b.norm());
            }
        }
    }

    #[test]
    fn extraction_recovers_rank_one_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = random_cvec(&mut rng, 4);
        let (b, r) = extract_beamformers(&[outer(&v)]).unwrap();
        assert!(r[0] < 1e-12);
        let phase = (b[0].adjoint() * &v)[(0, 0)];
        let aligned = &b[0] * (phase / phase.norm());
        assert!((aligned - &v).norm() < 1e-10 * v.norm());
        assert!(rel(b[0].norm_squared(), outer(&v).trace().re) < 1e-12);
    }

    #[test]
    fn lemma1_pins_z_on_small_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let w = outer(&random_cvec(&mut rng, 2));
        let psi = random_cvec(&mut rng, 2);
        let g = random_cmat(&mut rng, 2, 2);
        let s = SolverSettings::default();
        let dev = lemma1_probe(&w, &psi, &g, 0.0, LEMMA1_V_CAP, &s).unwrap();
        assert!(dev < 1e-5, "{dev}");
        // not vacuous: a loose trace constraint lets Z move
        let loose = lemma1_probe(&w, &psi, &g, 1.0, LEMMA1_V_CAP, &s).unwrap();
        assert!(loose > 1e-4, "{loose}");
    }
}
