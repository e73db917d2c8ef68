//! Sector geometry and Rician channel draws.
//!
//! The BS sits at the origin with a half-wavelength ULA along the y-axis,
//! serving a 120 degree sector centred on the +x axis. The IRS (also a
//! y-axis ULA) sits on the sector bisector at distance R.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::config::SystemConfig;
use crate::math::{CMat, CVec};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Half-angle of the served sector.
pub const SECTOR_HALF_ANGLE: f64 = PI / 3.0;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bs: Point,
    pub irs: Point,
    pub users: Vec<Point>,
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS -> IRS, M x N_T.
    pub g: CMat,
    /// BS -> user k, length N_T each.
    pub h_d: Vec<CVec>,
    /// IRS -> user k, length M each.
    pub h_r: Vec<CVec>,
}

impl ChannelSet {
    pub fn n_t(&self) -> usize {
        self.g.ncols()
    }

    pub fn m(&self) -> usize {
        self.g.nrows()
    }

    pub fn k(&self) -> usize {
        self.h_d.len()
    }

    /// Hex SHA-256 over every entry's bit pattern, for paired-draw auditing.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |z: &Complex64| {
            h.update(z.re.to_le_bytes());
            h.update(z.im.to_le_bytes());
        };
        // column-major, as stored
        self.g.iter().for_each(&mut feed);
        self.h_d.iter().flat_map(|v| v.iter()).for_each(&mut feed);
        self.h_r.iter().flat_map(|v| v.iter()).for_each(&mut feed);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn is_finite(&self) -> bool {
        let fin = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        self.g.iter().all(fin)
            && self.h_d.iter().all(|v| v.iter().all(fin))
            && self.h_r.iter().all(|v| v.iter().all(fin))
    }
}

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of drop `drop` at sweep value `value`; independent of worker layout.
pub fn child_seed(seed: u64, value: u64, drop: u64) -> u64 {
    mix64(mix64(mix64(seed) ^ value) ^ drop.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn place_nodes<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Geometry {
    let r = cfg.radius_m;
    let users = (0..cfg.users)
        .map(|_| {
            let rho = r * rng.gen::<f64>().sqrt();
            let phi = rng.gen_range(-SECTOR_HALF_ANGLE..SECTOR_HALF_ANGLE);
            [rho * phi.cos(), rho * phi.sin()]
        })
        .collect();
    Geometry {
        bs: [0.0, 0.0],
        irs: [r, 0.0],
        users,
    }
}

/// Free-space gain at 1 m times `d^-alpha`; distances below 1 m are clamped.
pub fn path_loss(d: f64, alpha: f64, carrier_hz: f64) -> f64 {
    let d = if d < 1.0 {
        log::debug!("distance {d} m clamped to 1 m");
        1.0
    } else {
        d
    };
    let beta0 = (SPEED_OF_LIGHT / (4.0 * PI * carrier_hz)).powi(2);
    beta0 * d.powf(-alpha)
}

fn distance(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

/// Half-wavelength ULA along the y-axis, looking towards `to`.
pub fn steering(n: usize, from: Point, to: Point) -> CVec {
    let d = distance(from, to).max(f64::MIN_POSITIVE);
    let uy = (to[1] - from[1]) / d;
    CVec::from_fn(n, |i, _| Complex64::from_polar(1.0, PI * i as f64 * uy))
}

fn cn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// LOS and NLOS weights for Rician factor `kappa` (infinite means pure LOS).
fn rician_weights(kappa: f64) -> (f64, f64) {
    if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    }
}

fn rician_link<R: Rng + ?Sized>(
    los: &CMat,
    gain: f64,
    kappa: f64,
    rng: &mut R,
) -> CMat {
    let (wl, wn) = rician_weights(kappa);
    let amp = gain.sqrt();
    CMat::from_fn(los.nrows(), los.ncols(), |i, j| {
        let nlos = cn(rng);
        (los[(i, j)] * wl + nlos * wn) * amp
    })
}

pub fn generate_channels<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    geo: &Geometry,
    rng: &mut R,
) -> ChannelSet {
    let lambda = SPEED_OF_LIGHT / cfg.carrier_hz;
    let phase = |d: f64| Complex64::from_polar(1.0, -2.0 * PI * d / lambda);
    let kappa = cfg.rician_factor;

    let d_g = distance(geo.bs, geo.irs);
    let los_g = steering(cfg.irs_elements, geo.irs, geo.bs)
        * steering(cfg.n_t, geo.bs, geo.irs).adjoint()
        * phase(d_g);
    let g = rician_link(
        &los_g,
        path_loss(d_g, cfg.alpha_reflect, cfg.carrier_hz),
        kappa,
        rng,
    );

    let mut h_d = Vec::with_capacity(cfg.users);
    let mut h_r = Vec::with_capacity(cfg.users);
    for &u in &geo.users {
        let dd = distance(geo.bs, u);
        let los = CMat::from_column_slice(
            cfg.n_t,
            1,
            (steering(cfg.n_t, geo.bs, u) * phase(dd)).as_slice(),
        );
        let hd = rician_link(&los, path_loss(dd, cfg.alpha_direct, cfg.carrier_hz), kappa, rng);
        h_d.push(hd.column(0).into_owned());

        let dr = distance(geo.irs, u);
        let los = CMat::from_column_slice(
            cfg.irs_elements,
            1,
            (steering(cfg.irs_elements, geo.irs, u) * phase(dr)).as_slice(),
        );
        let hr = rician_link(&los, path_loss(dr, cfg.alpha_reflect, cfg.carrier_hz), kappa, rng);
        h_r.push(hr.column(0).into_owned());
    }
    ChannelSet { g, h_d, h_r }
}

/// Geometry and channels of one drop, fully determined by `seed`.
pub fn draw(cfg: &SystemConfig, seed: u64) -> (Geometry, ChannelSet) {
    let mut rng = rng_from_seed(seed);
    let geo = place_nodes(cfg, &mut rng);
    let ch = generate_channels(cfg, &geo, &mut rng);
    (geo, ch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SystemConfig {
        SystemConfig::default()
    }

    #[test]
    fn irs_sits_on_sector_edge() {
        let c = cfg();
        let mut rng = rng_from_seed(3);
        let g = place_nodes(&c, &mut rng);
        assert_eq!(distance(g.bs, g.irs), c.radius_m);
        for u in &g.users {
            let d = distance(g.bs, *u);
            assert!(d <= c.radius_m);
            assert!(u[1].atan2(u[0]).abs() <= SECTOR_HALF_ANGLE + 1e-12);
        }
    }

    #[test]
    fn same_seed_same_draw() {
        let c = cfg();
        assert_eq!(draw(&c, 42), draw(&c, 42));
        assert_ne!(draw(&c, 42).1.digest(), draw(&c, 43).1.digest());
    }

    #[test]
    fn mean_user_distance_is_two_thirds_r() {
        let mut c = cfg();
        c.users = 1;
        let mut rng = rng_from_seed(7);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| distance([0.0, 0.0], place_nodes(&c, &mut rng).users[0]))
            .sum::<f64>()
            / n as f64;
        let expect = 2.0 / 3.0 * c.radius_m;
        assert!((mean - expect).abs() / expect < 0.02, "{mean} vs {expect}");
    }

    #[test]
    fn path_loss_values() {
        let b0 = path_loss(1.0, 3.0, 2.4e9);
        // (lambda / 4 pi)^2 with lambda = c / 2.4 GHz ~ 0.125 m
        let lambda = SPEED_OF_LIGHT / 2.4e9;
        assert!((b0 - (lambda / (4.0 * PI)).powi(2)).abs() < 1e-18);
        assert!((b0 - 9.89e-5).abs() / 9.89e-5 < 2e-3, "{b0}");
        assert!((10.0 * b0.log10() + 40.05).abs() < 0.01);
        assert!((path_loss(100.0, 2.0, 2.4e9) / b0 - 1e-4).abs() < 1e-16);
        assert!((path_loss(10.0, 2.3, 2.4e9) / b0 - 10f64.powf(-2.3)).abs() < 1e-15);
        assert_eq!(path_loss(0.2, 2.0, 2.4e9), b0);
    }

    #[test]
    fn rician_los_fraction() {
        let (wl, wn) = rician_weights(10f64.powf(0.3));
        assert!((wl * wl - 0.666).abs() < 1e-3);
        assert!((wl * wl + wn * wn - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pure_los_magnitudes_are_deterministic() {
        let mut c = cfg();
        c.rician_factor = f64::INFINITY;
        let mut r1 = rng_from_seed(1);
        let geo = place_nodes(&c, &mut r1);
        let a = generate_channels(&c, &geo, &mut rng_from_seed(10));
        let b = generate_channels(&c, &geo, &mut rng_from_seed(11));
        let beta = path_loss(c.radius_m, c.alpha_reflect, c.carrier_hz);
        for (x, y) in a.g.iter().zip(b.g.iter()) {
            assert!((x.norm() - y.norm()).abs() < 1e-18);
            assert!((x.norm_sqr() - beta).abs() < 1e-12 * beta);
        }
    }

    #[test]
    fn entry_second_moment_matches_path_loss() {
        let c = cfg();
        let geo = place_nodes(&c, &mut rng_from_seed(5));
        let mut rng = rng_from_seed(6);
        let n = 10_000;
        let mut acc_g = 0.0;
        let mut acc_d = 0.0;
        let mut acc_r = 0.0;
        for _ in 0..n {
            let ch = generate_channels(&c, &geo, &mut rng);
            assert!(ch.is_finite());
            acc_g += ch.g[(2, 1)].norm_sqr();
            acc_d += ch.h_d[0][1].norm_sqr();
            acc_r += ch.h_r[1][3].norm_sqr();
        }
        let u = geo.users.clone();
        let checks = [
            (acc_g, path_loss(c.radius_m, c.alpha_reflect, c.carrier_hz)),
            (acc_d, path_loss(distance(geo.bs, u[0]), c.alpha_direct, c.carrier_hz)),
            (acc_r, path_loss(distance(geo.irs, u[1]), c.alpha_reflect, c.carrier_hz)),
        ];
        for (acc, beta) in checks {
            let m = acc / n as f64;
            assert!((m - beta).abs() / beta < 0.03, "{m} vs {beta}");
        }
    }

    #[test]
    fn dimensions_follow_config() {
        let mut c = cfg();
        c.n_t = 3;
        c.users = 2;
        c.irs_elements = 5;
        let (_, ch) = draw(&c, 0);
        assert_eq!((ch.g.nrows(), ch.g.ncols()), (5, 3));
        assert_eq!((ch.k(), ch.h_d[1].len(), ch.h_r[1].len()), (2, 3, 5));
    }

    #[test]
    fn child_seeds_differ() {
        let a = child_seed(1, 0, 0);
        assert_ne!(a, child_seed(1, 0, 1));
        assert_ne!(a, child_seed(1, 1, 0));
        assert_ne!(a, child_seed(2, 0, 0));
        assert_eq!(a, child_seed(1, 0, 0));
    }
}
