//! Scenario constants and the plain-text `key = value` config format.
//!
//! Config files hold one `key = value` pair per line. `#` starts a comment,
//! blank lines are ignored and unknown keys are rejected. Keys and their
//! units:
//!
//! | key                   | meaning                                  | unit      |
//! |-----------------------|------------------------------------------|-----------|
//! | `n_t`                 | BS antennas                              | count     |
//! | `users`               | single-antenna users K                   | count     |
//! | `irs_elements`        | IRS elements M                           | count     |
//! | `carrier_hz`          | carrier frequency                        | Hz        |
//! | `noise_user_dbm`      | noise power at every user                | dBm       |
//! | `noise_dynamic_dbm`   | IRS dynamic (amplified) noise power      | dBm       |
//! | `noise_static_dbm`    | IRS static noise power (not in the SINR) | dBm       |
//! | `alpha_direct`        | path-loss exponent of BS-user links      | -         |
//! | `alpha_reflect`       | path-loss exponent of BS-IRS, IRS-user   | -         |
//! | `radius_m`            | sector radius                            | m         |
//! | `rician_factor_db`    | Rician factor (`inf` for pure LOS)       | dB        |
//! | `sinr_req`            | per-user SINR target                     | see below |
//! | `sinr_units`          | `db` (default) or `linear`               | -         |
//! | `irs_power_budget_mw` | IRS amplification power budget P_A       | mW        |
//! | `tolerance`           | relative-decrease stopping tolerance     | -         |
//! | `max_iter`            | iteration cap of the joint design        | count     |
//! | `seed`                | 64-bit RNG seed                          | -         |

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1e3).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SinrUnits {
    #[default]
    Db,
    Linear,
}

impl SinrUnits {
    pub fn to_linear(self, v: f64) -> f64 {
        match self {
            SinrUnits::Db => db_to_linear(v),
            SinrUnits::Linear => v,
        }
    }
}

impl FromStr for SinrUnits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "db" => Ok(SinrUnits::Db),
            "linear" => Ok(SinrUnits::Linear),
            other => Err(Error::Config(format!(
                "unknown SINR unit `{other}` (expected `db` or `linear`)"
            ))),
        }
    }
}

impl fmt::Display for SinrUnits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SinrUnits::Db => "db",
            SinrUnits::Linear => "linear",
        })
    }
}

/// All scenario constants. Powers are stored in watts, ratios linear.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n_t: usize,
    pub users: usize,
    pub irs_elements: usize,
    pub carrier_hz: f64,
    pub noise_user_w: f64,
    pub noise_dynamic_w: f64,
    /// Carried for completeness; the SINR ignores static IRS noise.
    pub noise_static_w: f64,
    pub alpha_direct: f64,
    pub alpha_reflect: f64,
    pub radius_m: f64,
    /// Linear Rician factor; `f64::INFINITY` gives pure line-of-sight.
    pub rician_factor: f64,
    pub sinr_req: f64,
    pub irs_power_budget_w: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SystemConfig {
    /// Transmit-power-minimization scenario: N_T = 4, K = 3, M = 10,
    /// 2.4 GHz, -114 dBm user noise, -100 dBm dynamic noise, alpha_d = 3.8,
    /// alpha_r = 2.3, R = 100 m, 3 dB Rician factor, 4 dB SINR target,
    /// P_A = 10 mW, tolerance 1e-3.
    fn default() -> Self {
        SystemConfig {
            n_t: 4,
            users: 3,
            irs_elements: 10,
            carrier_hz: 2.4e9,
            noise_user_w: dbm_to_w(-114.0),
            noise_dynamic_w: dbm_to_w(-100.0),
            noise_static_w: 0.0,
            alpha_direct: 3.8,
            alpha_reflect: 2.3,
            radius_m: 100.0,
            rician_factor: db_to_linear(3.0),
            sinr_req: db_to_linear(4.0),
            irs_power_budget_w: 10e-3,
            tolerance: 1e-3,
            max_iter: 50,
            seed: 1,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_t == 0 || self.users == 0 || self.irs_elements == 0 {
            return bad("n_t, users and irs_elements must all be at least 1");
        }
        if !(self.max_iter >= 1) {
            return bad("max_iter must be at least 1");
        }
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("noise_user", self.noise_user_w),
            ("noise_dynamic", self.noise_dynamic_w),
            ("radius_m", self.radius_m),
            ("sinr_req", self.sinr_req),
            ("irs_power_budget", self.irs_power_budget_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.noise_static_w >= 0.0) {
            return bad("noise_static must be non-negative");
        }
        if !(self.rician_factor >= 0.0) {
            return bad("rician factor must be non-negative");
        }
        if !(self.alpha_direct > 0.0 && self.alpha_reflect > 0.0) {
            return bad("path-loss exponents must be positive");
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return bad("tolerance must lie in (0, 1)");
        }
        Ok(())
    }

    /// Applies every [`SystemConfig`] key found in `kv`, consuming it.
    pub fn apply(&mut self, kv: &mut KeyValues) -> Result<()> {
        if let Some(units) = kv.take_parsed::<SinrUnits>("sinr_units")? {
            kv.sinr_units = units;
        }
        let units = kv.sinr_units;
        macro_rules! set {
            ($key:literal, $field:ident, $ty:ty, $conv:expr) => {
                if let Some(v) = kv.take_parsed::<$ty>($key)? {
                    self.$field = $conv(v);
                }
            };
        }
        set!("n_t", n_t, usize, |v| v);
        set!("users", users, usize, |v| v);
        set!("irs_elements", irs_elements, usize, |v| v);
        set!("carrier_hz", carrier_hz, f64, |v| v);
        set!("noise_user_dbm", noise_user_w, f64, dbm_to_w);
        set!("noise_dynamic_dbm", noise_dynamic_w, f64, dbm_to_w);
        set!("noise_static_dbm", noise_static_w, f64, dbm_to_w);
        set!("alpha_direct", alpha_direct, f64, |v| v);
        set!("alpha_reflect", alpha_reflect, f64, |v| v);
        set!("radius_m", radius_m, f64, |v| v);
        set!("rician_factor_db", rician_factor, f64, db_to_linear);
        set!("sinr_req", sinr_req, f64, |v| units.to_linear(v));
        set!("irs_power_budget_mw", irs_power_budget_w, f64, |v: f64| v * 1e-3);
        set!("tolerance", tolerance, f64, |v| v);
        set!("max_iter", max_iter, usize, |v| v);
        set!("seed", seed, u64, |v| v);
        Ok(())
    }

    /// Parses a file that holds only [`SystemConfig`] keys.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut kv = KeyValues::from_file(path)?;
        let mut cfg = SystemConfig::default();
        cfg.apply(&mut kv)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_str_config(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let mut cfg = SystemConfig::default();
        cfg.apply(&mut kv)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parsed `key = value` lines, consumed key by key; leftovers are errors.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
    /// Unit applied to `sinr_req` and SINR sweep values.
    pub sinr_units: SinrUnits,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigLine {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = k.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(Error::ConfigLine {
                    line: line_no,
                    msg: "empty key".into(),
                });
            }
            if entries
                .insert(key.clone(), (v.trim().to_string(), line_no))
                .is_some()
            {
                return Err(Error::ConfigLine {
                    line: line_no,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(KeyValues {
            entries,
            sinr_units: SinrUnits::Db,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    pub fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| Error::ConfigLine {
                line,
                msg: format!("bad value `{v}` for `{key}`: {e}"),
            }),
        }
    }

    /// Errors on the first unconsumed key.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().min_by_key(|(_, (_, line))| *line) {
            None => Ok(()),
            Some((key, (_, line))) => Err(Error::ConfigLine {
                line,
                msg: format!("unknown key `{key}`"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_table_values() {
        let c = SystemConfig::default();
        assert!((w_to_dbm(c.noise_user_w) + 114.0).abs() < 1e-9);
        assert!((w_to_dbm(c.noise_dynamic_w) + 100.0).abs() < 1e-9);
        assert_eq!(c.tolerance, 1e-3);
        assert!((c.rician_factor - 1.9953).abs() < 1e-4);
        c.validate().unwrap();
    }

    #[test]
    fn parses_documented_keys() {
        let text = "\
# comment
n_t = 2
users=1
irs_elements = 6   # trailing comment
sinr_units = linear
sinr_req = 3
irs_power_budget_mw = 20
rician_factor_db = inf
seed = 99
";
        let c = SystemConfig::from_str_config(text).unwrap();
        assert_eq!((c.n_t, c.users, c.irs_elements, c.seed), (2, 1, 6, 99));
        assert_eq!(c.sinr_req, 3.0);
        assert!((c.irs_power_budget_w - 0.02).abs() < 1e-15);
        assert!(c.rician_factor.is_infinite());
    }

    #[test]
    fn sinr_defaults_to_db() {
        let c = SystemConfig::from_str_config("sinr_req = 10").unwrap();
        assert!((c.sinr_req - 10.0).abs() < 1e-12);
        let c = SystemConfig::from_str_config("sinr_req = 0").unwrap();
        assert!((c.sinr_req - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_key_is_an_error_with_line() {
        let err = SystemConfig::from_str_config("n_t = 4\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::ConfigLine { line: 2, .. }), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(SystemConfig::from_str_config("users = 0").is_err());
        assert!(SystemConfig::from_str_config("tolerance = 1.5").is_err());
        assert!(SystemConfig::from_str_config("n_t = four").is_err());
        assert!(SystemConfig::from_str_config("n_t 4").is_err());
        assert!(SystemConfig::from_str_config("n_t = 4\nn_t = 5").is_err());
    }
}
