//! Physical-layer metrics of the transmit-power minimization problem.

use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::math::{CMat, CVec};

/// Physical decision variables: one beamformer per user and the diagonal of
/// the combined amplification/phase matrix `Psi = A Theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub w: Vec<CVec>,
    pub psi: CVec,
}

impl Solution {
    pub fn zeros(cfg: &SystemConfig) -> Self {
        Solution {
            w: vec![CVec::zeros(cfg.n_t); cfg.users],
            psi: CVec::zeros(cfg.irs_elements),
        }
    }

    /// Amplitude `a_m = |Psi_mm|` of each element.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.psi.iter().map(|z| z.norm()).collect()
    }

    /// Phase shift `arg(Psi_mm)` of each element.
    pub fn phases(&self) -> Vec<f64> {
        self.psi.iter().map(|z| z.arg()).collect()
    }

    pub fn is_finite(&self) -> bool {
        let fin = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        self.psi.iter().all(fin) && self.w.iter().all(|v| v.iter().all(fin))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub sinr: Vec<f64>,
    /// `SINR_k - Gamma_req`.
    pub c1_margin: Vec<f64>,
    /// IRS amplification power in watts.
    pub c2_lhs: f64,
    /// `P_A - c2_lhs`.
    pub c2_margin: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    /// Largest constraint violation relative to its scale; 0 when feasible.
    pub fn max_relative_violation(&self, cfg: &SystemConfig) -> f64 {
        let c1 = self
            .c1_margin
            .iter()
            .map(|m| -m / cfg.sinr_req)
            .fold(0.0, f64::max);
        c1.max(-self.c2_margin / cfg.irs_power_budget_w)
    }
}

/// Energy-efficiency power model; powers in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerModel {
    /// Power-amplifier efficiency in (0, 1].
    pub eta: f64,
    /// Circuit power per BS antenna.
    pub p_t: f64,
    /// Static BS power.
    pub p_c: f64,
    /// Circuit power per IRS element.
    pub p_i: f64,
    /// IRS amplification budget.
    pub p_a: f64,
    /// Conventional passive IRS: the amplification budget is not charged.
    pub passive: bool,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            eta: 0.5,
            p_t: 100e-3,
            p_c: 85e-3,
            p_i: 2e-3,
            p_a: 20e-3,
            passive: false,
        }
    }
}

/// Effective channel `h_D,k^H + h_R,k^H Psi G` as a row vector.
pub fn effective_channel(ch: &ChannelSet, psi: &CVec, k: usize) -> CMat {
    let hr_psi = CMat::from_fn(1, psi.len(), |_, m| ch.h_r[k][m].conj() * psi[m]);
    let hd = CMat::from_fn(1, ch.n_t(), |_, n| ch.h_d[k][n].conj());
    hd + hr_psi * &ch.g
}

pub fn compute_sinr(ch: &ChannelSet, sol: &Solution, cfg: &SystemConfig, k: usize) -> f64 {
    let hbar = effective_channel(ch, &sol.psi, k);
    let gain = |w: &CVec| (&hbar * w)[(0, 0)].norm_sqr();
    let interference: f64 = sol
        .w
        .iter()
        .enumerate()
        .filter(|(r, _)| *r != k)
        .map(|(_, w)| gain(w))
        .sum();
    let irs_noise: f64 = ch.h_r[k]
        .iter()
        .zip(sol.psi.iter())
        .map(|(h, p)| (h.conj() * p).norm_sqr())
        .sum();
    gain(&sol.w[k]) / (interference + cfg.noise_dynamic_w * irs_noise + cfg.noise_user_w)
}

pub fn irs_output_power(ch: &ChannelSet, sol: &Solution, cfg: &SystemConfig) -> f64 {
    let signal: f64 = sol
        .w
        .iter()
        .map(|w| {
            (&ch.g * w)
                .iter()
                .zip(sol.psi.iter())
                .map(|(x, p)| (x * p).norm_sqr())
                .sum::<f64>()
        })
        .sum();
    signal + cfg.noise_dynamic_w * sol.psi.norm_squared()
}

pub fn bs_transmit_power(sol: &Solution) -> f64 {
    sol.w.iter().map(|w| w.norm_squared()).sum()
}

pub fn check_feasibility(
    ch: &ChannelSet,
    sol: &Solution,
    cfg: &SystemConfig,
    tol: f64,
) -> FeasibilityReport {
    let sinr: Vec<f64> = (0..sol.w.len()).map(|k| compute_sinr(ch, sol, cfg, k)).collect();
    let c1_margin: Vec<f64> = sinr.iter().map(|s| s - cfg.sinr_req).collect();
    let c2_lhs = irs_output_power(ch, sol, cfg);
    let c2_margin = cfg.irs_power_budget_w - c2_lhs;
    // Margins are compared relative to their own scale (SINR vs watts).
    let feasible = c1_margin.iter().all(|m| *m >= -tol * cfg.sinr_req)
        && c2_margin >= -tol * cfg.irs_power_budget_w
        && sol.is_finite();
    FeasibilityReport {
        sinr,
        c1_margin,
        c2_lhs,
        c2_margin,
        feasible,
    }
}

/// Sum spectral efficiency over total consumed power, in bits/J/Hz.
pub fn energy_efficiency(
    ch: &ChannelSet,
    sol: &Solution,
    cfg: &SystemConfig,
    pm: &PowerModel,
) -> f64 {
    let rate: f64 = (0..sol.w.len())
        .map(|k| (1.0 + compute_sinr(ch, sol, cfg, k)).log2())
        .sum();
    let p_a = if pm.passive { 0.0 } else { pm.p_a };
    let total = bs_transmit_power(sol) / pm.eta
        + ch.n_t() as f64 * pm.p_t
        + pm.p_c
        + ch.m() as f64 * pm.p_i
        + p_a / pm.eta;
    rate / total
}

/// `|h_bar_k^H w|^2` for a lifted beamformer `W = w w^H`, split into the
/// direct, reflected and cross terms.
pub fn lifted_gain(ch: &ChannelSet, psi: &CVec, w: &CMat, k: usize) -> f64 {
    let hd = &ch.h_d[k];
    // Psi^H h_R,k
    let ph: CVec = CVec::from_fn(psi.len(), |m, _| psi[m].conj() * ch.h_r[k][m]);
    // G^H Psi^H h_R,k
    let q = ch.g.adjoint() * ph;
    let direct = (hd.adjoint() * w * hd)[(0, 0)].re;
    let reflected = (q.adjoint() * w * &q)[(0, 0)].re;
    let cross = 2.0 * (hd.adjoint() * w * &q)[(0, 0)].re;
    direct + reflected + cross
}

/// C1 residual of user k in lifted form:
/// `Gamma (sum_{r!=k} gain_r + sigma_d^2 |h_R^H Psi|^2 + sigma_n^2) - gain_k`.
/// Feasible iff `<= 0`.
pub fn c1_residual_lifted(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    w: &[CMat],
    psi: &CVec,
    k: usize,
) -> f64 {
    let irs_noise: f64 = ch.h_r[k]
        .iter()
        .zip(psi.iter())
        .map(|(h, p)| (h.conj() * p).norm_sqr())
        .sum();
    let interference: f64 = (0..w.len())
        .filter(|r| *r != k)
        .map(|r| lifted_gain(ch, psi, &w[r], k))
        .sum();
    cfg.sinr_req * (interference + cfg.noise_dynamic_w * irs_noise + cfg.noise_user_w)
        - lifted_gain(ch, psi, &w[k], k)
}

/// C2 residual in lifted form:
/// `sum_k Tr(Psi G W_k G^H Psi^H) + sigma_d^2 Tr(Psi Psi^H) - P_A`.
pub fn c2_residual_lifted(ch: &ChannelSet, cfg: &SystemConfig, w: &[CMat], psi: &CVec) -> f64 {
    let pg = CMat::from_fn(ch.m(), ch.n_t(), |i, j| psi[i] * ch.g[(i, j)]);
    let sig: f64 = w
        .iter()
        .map(|wk| (&pg * wk * pg.adjoint()).trace().re)
        .sum();
    sig + cfg.noise_dynamic_w * psi.norm_squared() - cfg.irs_power_budget_w
}
