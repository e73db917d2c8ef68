//! Comparison schemes: SDR beamforming without an IRS, and an IRS with equal
//! amplification, random phases and zero-forcing beamforming.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::conic::{AffExpr, ConicProblem, SolveStatus, SolverSettings};
use crate::ia::extract_beamformers;
use crate::math::{outer, CMat, CVec};
use crate::problem::{bs_transmit_power, check_feasibility, Solution};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub solution: Solution,
    /// `false` marks an outage: the scheme's constraint set is infeasible.
    pub feasible: bool,
    pub bs_power_w: f64,
    pub status: String,
}

impl BaselineResult {
    fn outage(cfg: &SystemConfig, status: impl Into<String>) -> Self {
        BaselineResult {
            solution: Solution::zeros(cfg),
            feasible: false,
            bs_power_w: f64::NAN,
            status: status.into(),
        }
    }
}

/// Powers that meet every SINR target with equality for fixed unit
/// directions, or `None` if no positive solution exists.
fn equalizing_powers(
    h: &[CVec],
    dirs: &[CVec],
    sinr_req: f64,
    noise: &[f64],
) -> Option<Vec<f64>> {
    let k = h.len();
    let gain = |u: usize, r: usize| (h[u].adjoint() * &dirs[r])[(0, 0)].norm_sqr();
    let a = DMatrix::from_fn(k, k, |u, r| {
        if u == r {
            gain(u, u)
        } else {
            -sinr_req * gain(u, r)
        }
    });
    let rhs = nalgebra::DVector::from_fn(k, |u, _| sinr_req * noise[u]);
    let p = a.lu().solve(&rhs)?;
    p.iter()
        .all(|v| v.is_finite() && *v > 0.0)
        .then(|| p.iter().copied().collect())
}

/// Transmit-power minimization with direct links only, via SDR; the
/// extracted beam directions are then given the powers that meet every SINR
/// target with equality.
pub fn baseline_no_irs(ch: &ChannelSet, cfg: &SystemConfig) -> Result<BaselineResult> {
    let k = ch.k();
    let n_t = ch.n_t();
    let d0 = ch
        .h_d
        .iter()
        .flat_map(|h| h.iter().map(|z| z.norm()))
        .fold(0.0, f64::max);
    if !(d0 > 0.0) {
        return Ok(BaselineResult::outage(cfg, "no direct link"));
    }
    // W = p0 W~, h = d0 h~, with p0 chosen so the noise term is 1.
    let p0 = cfg.noise_user_w / (d0 * d0);
    let hd: Vec<CMat> = ch.h_d.iter().map(|h| outer(&(h / Complex64::from(d0)))).collect();

    let mut prob = ConicProblem::new();
    let w: Vec<_> = (0..k).map(|i| prob.add_hermitian(&format!("W{i}"), n_t)).collect();
    let mut obj = AffExpr::zero();
    for wi in &w {
        obj.axpy(1.0, &wi.trace());
        prob.add_hermitian_psd(format!("W{}>=0", wi.offset), n_t, |i, j| wi.entry(i, j));
    }
    prob.set_objective(obj);
    for u in 0..k {
        // |h_u^H w_u|^2 - Gamma (sum_{r != u} |h_u^H w_r|^2 + 1) >= 0
        let mut e = w[u].inner(&hd[u]);
        for (r, wr) in w.iter().enumerate() {
            if r != u {
                e.axpy(-cfg.sinr_req, &wr.inner(&hd[u]));
            }
        }
        e.constant -= cfg.sinr_req;
        prob.add_nonneg(format!("sinr{u}"), e);
    }
    let sol = prob.solve(&SolverSettings::default())?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Ok(BaselineResult::outage(cfg, "infeasible")),
        s => return Ok(BaselineResult::outage(cfg, s.to_string())),
    }
    let ws: Vec<CMat> = w
        .iter()
        .map(|v| sol.hermitian(v) * Complex64::from(p0))
        .collect();
    let (beams, _) = extract_beamformers(&ws)?;
    let dirs: Vec<CVec> = beams.iter().map(|b| b.normalize()).collect();
    let noise = vec![cfg.noise_user_w; k];
    let beams = match equalizing_powers(&ch.h_d, &dirs, cfg.sinr_req, &noise) {
        Some(p) => dirs
            .iter()
            .zip(&p)
            .map(|(d, p)| d * Complex64::from(p.sqrt()))
            .collect(),
        None => beams,
    };
    let solution = Solution {
        w: beams,
        psi: CVec::zeros(ch.m()),
    };
    let report = check_feasibility(ch, &solution, cfg, 1e-6);
    Ok(BaselineResult {
        bs_power_w: bs_transmit_power(&solution),
        feasible: report.feasible,
        solution,
        status: if report.feasible { "optimal" } else { "extraction_infeasible" }.into(),
    })
}

/// Equal amplitudes `sqrt(P_A / M)` with uniform random phases.
pub fn random_phase_irs<R: Rng + ?Sized>(cfg: &SystemConfig, m: usize, rng: &mut R) -> CVec {
    let a = (cfg.irs_power_budget_w / m as f64).sqrt();
    CVec::from_fn(m, |_, _| Complex64::from_polar(a, rng.gen_range(0.0..2.0 * PI)))
}

/// Effective channels `h_D,k + G^H Psi^H h_R,k` (so the received
/// amplitude is `h_bar^H w`).
pub fn effective_channels(ch: &ChannelSet, psi: &CVec) -> Vec<CVec> {
    (0..ch.k())
        .map(|k| {
            let ph = CVec::from_fn(psi.len(), |m, _| psi[m].conj() * ch.h_r[k][m]);
            &ch.h_d[k] + ch.g.adjoint() * ph
        })
        .collect()
}

/// Unit-norm zero-forcing directions: normalized columns of
/// `H (H^H H)^-1`, or `None` when `H^H H` is singular.
pub fn zf_directions(h: &[CVec]) -> Option<Vec<CVec>> {
    let n = h.first()?.len();
    let k = h.len();
    if k > n {
        return None;
    }
    let hm = CMat::from_fn(n, k, |i, j| h[j][i]);
    let gram = hm.adjoint() * &hm;
    let scale = gram.diagonal().iter().map(|v| v.re).fold(0.0, f64::max);
    let inv = gram.clone().try_inverse()?;
    // reject numerically singular Gram matrices
    let cond = inv.iter().map(|v| v.norm()).fold(0.0, f64::max) * scale;
    if !cond.is_finite() || cond > 1e12 {
        return None;
    }
    let f = hm * inv;
    Some(
        (0..k)
            .map(|j| {
                let c: CVec = f.column(j).into_owned();
                let nrm = c.norm();
                c / Complex64::from(nrm)
            })
            .collect(),
    )
}

/// Per-user power lower bounds and IRS load of the ZF power LP.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfPowerLp {
    /// `p_k >= lower[k]` from the SINR targets.
    pub lower: Vec<f64>,
    /// IRS power drawn per unit of `p_k`.
    pub irs_load: Vec<f64>,
    /// IRS power drawn by amplified noise alone.
    pub irs_noise: f64,
    pub budget: f64,
}

impl ZfPowerLp {
    pub fn build(ch: &ChannelSet, cfg: &SystemConfig, psi: &CVec, dirs: &[CVec]) -> Self {
        let hbar = effective_channels(ch, psi);
        let mut lower = Vec::with_capacity(dirs.len());
        let mut irs_load = Vec::with_capacity(dirs.len());
        for (k, d) in dirs.iter().enumerate() {
            let irs_noise: f64 = ch.h_r[k]
                .iter()
                .zip(psi.iter())
                .map(|(h, p)| (h.conj() * p).norm_sqr())
                .sum();
            let gain = (hbar[k].adjoint() * d)[(0, 0)].norm_sqr();
            lower.push(cfg.sinr_req * (cfg.noise_dynamic_w * irs_noise + cfg.noise_user_w) / gain);
            let gd = &ch.g * d;
            irs_load.push(gd.iter().zip(psi.iter()).map(|(x, p)| (x * p).norm_sqr()).sum());
        }
        ZfPowerLp {
            lower,
            irs_load,
            irs_noise: cfg.noise_dynamic_w * psi.norm_squared(),
            budget: cfg.irs_power_budget_w,
        }
    }

    /// The LP optimum: every lower bound is active, provided the IRS budget
    /// admits it; raising any power only tightens the budget.
    pub fn solve(&self) -> Option<Vec<f64>> {
        let load: f64 = self
            .lower
            .iter()
            .zip(&self.irs_load)
            .map(|(p, l)| p * l)
            .sum::<f64>()
            + self.irs_noise;
        (self.lower.iter().all(|p| p.is_finite()) && load <= self.budget)
            .then(|| self.lower.clone())
    }
}

pub fn baseline_zf_random<R: Rng + ?Sized>(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    rng: &mut R,
) -> BaselineResult {
    let psi = random_phase_irs(cfg, ch.m(), rng);
    let hbar = effective_channels(ch, &psi);
    let Some(dirs) = zf_directions(&hbar) else {
        return BaselineResult::outage(cfg, "rank_deficient");
    };
    let lp = ZfPowerLp::build(ch, cfg, &psi, &dirs);
    let Some(p) = lp.solve() else {
        return BaselineResult::outage(cfg, "infeasible");
    };
    let solution = Solution {
        w: dirs
            .iter()
            .zip(&p)
            .map(|(d, p)| d * Complex64::from(p.sqrt()))
            .collect(),
        psi,
    };
    let report = check_feasibility(ch, &solution, cfg, 1e-6);
    BaselineResult {
        bs_power_w: bs_transmit_power(&solution),
        feasible: report.feasible,
        solution,
        status: if report.feasible { "optimal" } else { "numerically_infeasible" }.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw, rng_from_seed};
    use crate::math::testutil::random_cvec;
    use crate::math::{ONE, ZERO};
    use crate::problem::compute_sinr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Minimum total power by the uplink-downlink duality fixed point, an
    /// algorithm independent of the SDP.
    fn duality_min_power(h: &[CVec], sinr_req: f64, noise: f64) -> f64 {
        let n = h[0].len();
        let mut q = vec![0.0; h.len()];
        for _ in 0..5000 {
            let next: Vec<f64> = (0..h.len())
                .map(|k| {
                    let mut s = CMat::identity(n, n) * Complex64::from(noise);
                    for (r, hr) in h.iter().enumerate() {
                        if r != k {
                            s += outer(hr) * Complex64::from(q[r]);
                        }
                    }
                    let inv = s.try_inverse().unwrap();
                    sinr_req / (h[k].adjoint() * inv * &h[k])[(0, 0)].re
                })
                .collect();
            let done = next
                .iter()
                .zip(&q)
                .all(|(a, b)| (a - b).abs() <= 1e-14 * a.abs());
            q = next;
            if done {
                break;
            }
        }
        q.iter().sum()
    }

    fn simple_cfg(n_t: usize, k: usize, m: usize) -> SystemConfig {
        SystemConfig {
            n_t,
            users: k,
            irs_elements: m,
            noise_user_w: 1e-2,
            noise_dynamic_w: 1e-3,
            sinr_req: 2.0,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn single_user_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = simple_cfg(3, 1, 2);
        let h = random_cvec(&mut rng, 3);
        let ch = ChannelSet {
            g: CMat::zeros(2, 3),
            h_d: vec![h.clone()],
            h_r: vec![CVec::zeros(2)],
        };
        let r = baseline_no_irs(&ch, &cfg).unwrap();
        assert!(r.feasible);
        let want = cfg.sinr_req * cfg.noise_user_w / h.norm_squared();
        assert!((r.bs_power_w - want).abs() < 1e-6 * want, "{} vs {want}", r.bs_power_w);
        // aligned with h
        let w = &r.solution.w[0];
        let cos = (h.adjoint() * w)[(0, 0)].norm() / (h.norm() * w.norm());
        assert!((cos - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_users_decouple() {
        let cfg = simple_cfg(3, 3, 1);
        let gains = [0.5, 2.0, 3.0];
        let h_d: Vec<CVec> = (0..3)
            .map(|k| CVec::from_fn(3, |i, _| if i == k { ONE * gains[k] } else { ZERO }))
            .collect();
        let ch = ChannelSet {
            g: CMat::zeros(1, 3),
            h_d,
            h_r: vec![CVec::zeros(1); 3],
        };
        let r = baseline_no_irs(&ch, &cfg).unwrap();
        let want: f64 = gains
            .iter()
            .map(|g| cfg.sinr_req * cfg.noise_user_w / (g * g))
            .sum();
        assert!((r.bs_power_w - want).abs() < 1e-6 * want);
    }

    #[test]
    fn sdr_matches_duality_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let cfg = simple_cfg(4, 3, 1);
            let h: Vec<CVec> = (0..3).map(|_| random_cvec(&mut rng, 4)).collect();
            let ch = ChannelSet {
                g: CMat::zeros(1, 4),
                h_d: h.clone(),
                h_r: vec![CVec::zeros(1); 3],
            };
            let r = baseline_no_irs(&ch, &cfg).unwrap();
            assert!(r.feasible);
            let want = duality_min_power(&h, cfg.sinr_req, cfg.noise_user_w);
            assert!((r.bs_power_w - want).abs() < 1e-6 * want, "{} vs {want}", r.bs_power_w);
            for k in 0..3 {
                let s = compute_sinr(&ch, &r.solution, &cfg, k);
                assert!((s - cfg.sinr_req).abs() < 1e-9 * cfg.sinr_req);
            }
        }
    }

    #[test]
    fn realistic_drop_is_solved() {
        let cfg = SystemConfig::default();
        let (_, ch) = draw(&cfg, 5);
        let r = baseline_no_irs(&ch, &cfg).unwrap();
        assert!(r.feasible, "{}", r.status);
        let want = duality_min_power(&ch.h_d, cfg.sinr_req, cfg.noise_user_w);
        assert!((r.bs_power_w - want).abs() < 1e-5 * want, "{} vs {want}", r.bs_power_w);
    }

    #[test]
    fn zf_nulls_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h: Vec<CVec> = (0..3).map(|_| random_cvec(&mut rng, 4)).collect();
        let d = zf_directions(&h).unwrap();
        for k in 0..3 {
            assert!((d[k].norm() - 1.0).abs() < 1e-12);
            for r in 0..3 {
                if r != k {
                    let leak = (h[k].adjoint() * &d[r])[(0, 0)].norm();
                    assert!(leak <= 1e-10 * h[k].norm(), "{leak}");
                }
            }
        }
        assert!(zf_directions(&[h[0].clone(), h[0].clone()]).is_none());
        let too_many: Vec<CVec> = (0..5).map(|_| random_cvec(&mut rng, 4)).collect();
        assert!(zf_directions(&too_many).is_none());
    }

    #[test]
    fn zf_single_user_is_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = simple_cfg(3, 1, 2);
        let ch = ChannelSet {
            g: crate::math::testutil::random_cmat(&mut rng, 2, 3),
            h_d: vec![random_cvec(&mut rng, 3)],
            h_r: vec![random_cvec(&mut rng, 2)],
        };
        let cfg = SystemConfig {
            irs_power_budget_w: 10.0,
            ..cfg
        };
        let r = baseline_zf_random(&ch, &cfg, &mut rng_from_seed(9));
        assert!(r.feasible);
        let hbar = &effective_channels(&ch, &r.solution.psi)[0];
        let w = &r.solution.w[0];
        let cos = (hbar.adjoint() * w)[(0, 0)].norm() / (hbar.norm() * w.norm());
        assert!((cos - 1.0).abs() < 1e-12);
        let s = compute_sinr(&ch, &r.solution, &cfg, 0);
        assert!((s - cfg.sinr_req).abs() < 1e-9 * cfg.sinr_req);
    }

    #[test]
    fn zf_lp_closed_form_matches_conic_lp() {
        let cfg = SystemConfig::default();
        let mut checked = 0;
        for seed in 0..20 {
            let (_, ch) = draw(&cfg, seed);
            let mut rng = rng_from_seed(seed + 100);
            let psi = random_phase_irs(&cfg, ch.m(), &mut rng);
            let Some(dirs) = zf_directions(&effective_channels(&ch, &psi)) else {
                continue;
            };
            let lp = ZfPowerLp::build(&ch, &cfg, &psi, &dirs);
            // same LP through the conic layer, powers in units of the bounds
            let mut prob = ConicProblem::new();
            let p: Vec<usize> = (0..ch.k()).map(|k| prob.add_scalar(&format!("p{k}"))).collect();
            let mut obj = AffExpr::zero();
            let norm: f64 = lp.lower.iter().sum();
            let mut budget = AffExpr::constant(1.0 - lp.irs_noise / lp.budget);
            for k in 0..ch.k() {
                obj.add_term(p[k], lp.lower[k] / norm);
                prob.add_nonneg(format!("p{k}>=lb"), AffExpr::var(p[k]).minus(&AffExpr::constant(1.0)));
                budget.add_term(p[k], -lp.lower[k] * lp.irs_load[k] / lp.budget);
            }
            prob.set_objective(obj);
            prob.add_nonneg("budget", budget);
            let sol = prob.solve(&SolverSettings::default()).unwrap();
            match lp.solve() {
                Some(pp) => {
                    assert_eq!(sol.status, SolveStatus::Optimal);
                    let total: f64 = pp.iter().sum();
                    assert!((sol.objective * norm - total).abs() < 1e-6 * total);
                    checked += 1;
                }
                None => assert_eq!(sol.status, SolveStatus::Infeasible),
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn zf_result_meets_targets_with_equality() {
        let cfg = SystemConfig::default();
        for seed in 0..10 {
            let (_, ch) = draw(&cfg, seed);
            let r = baseline_zf_random(&ch, &cfg, &mut rng_from_seed(seed));
            if !r.feasible {
                continue;
            }
            let rep = check_feasibility(&ch, &r.solution, &cfg, 1e-6);
            assert!(rep.feasible);
            for s in rep.sinr {
                assert!((s - cfg.sinr_req).abs() < 1e-8 * cfg.sinr_req);
            }
        }
    }

    #[test]
    fn overloaded_irs_is_outage() {
        // a strong BS-IRS link makes the amplified signal exceed the budget
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = simple_cfg(2, 1, 2);
        let ch = ChannelSet {
            g: crate::math::testutil::random_cmat(&mut rng, 2, 2) * Complex64::from(1e3),
            h_d: vec![random_cvec(&mut rng, 2) * Complex64::from(1e-3)],
            h_r: vec![random_cvec(&mut rng, 2) * Complex64::from(1e-3)],
        };
        let r = baseline_zf_random(&ch, &cfg, &mut rng_from_seed(1));
        assert!(!r.feasible);
        assert_eq!(r.status, "infeasible");
        assert!(r.bs_power_w.is_nan());
    }
}
