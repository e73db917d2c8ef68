//! Monte Carlo sweeps, aggregation and CSV output.
//!
//! Every (value, drop) pair gets one geometry and channel draw from
//! `child_seed(seed, value index, drop index)`; all schemes see the same
//! draw. Rows are keyed by (scheme, value, drop), so the output does not
//! depend on the worker count or completion order.
//!
//! Sweep config keys, on top of the [`SystemConfig`] keys:
//!
//! | key            | meaning                                                     |
//! |----------------|-------------------------------------------------------------|
//! | `scenario`     | free-form name                                              |
//! | `sweep`        | `sinr_req`, `irs_elements` or `irs_power_budget_mw`         |
//! | `values`       | comma-separated values, in the unit of the swept key        |
//! | `drops`        | drops per value                                             |
//! | `schemes`      | comma-separated subset of `proposed,baseline1,baseline2`    |

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::baselines::{baseline_no_irs, baseline_zf_random};
use crate::channel::{child_seed, draw, rng_from_seed};
use crate::config::{w_to_dbm, KeyValues, SinrUnits, SystemConfig};
use crate::ia::{initialize_from, run_from, RunOptions};
use crate::problem::{check_feasibility, energy_efficiency, PowerModel, Solution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Proposed,
    /// No IRS; SDR beamforming.
    Baseline1,
    /// Equal-amplitude random-phase IRS with ZF beamforming.
    Baseline2,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::Baseline1, Scheme::Baseline2];

    /// Whether the scheme operates an active IRS.
    pub fn uses_irs(self) -> bool {
        self != Scheme::Baseline1
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Proposed => "proposed",
            Scheme::Baseline1 => "baseline1",
            Scheme::Baseline2 => "baseline2",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "proposed" => Ok(Scheme::Proposed),
            "baseline1" => Ok(Scheme::Baseline1),
            "baseline2" => Ok(Scheme::Baseline2),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// SINR target, in the config's SINR units.
    SinrReq,
    IrsElements,
    /// IRS power budget in mW.
    IrsBudgetMw,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::SinrReq => "sinr_req",
            SweepParam::IrsElements => "irs_elements",
            SweepParam::IrsBudgetMw => "irs_power_budget_mw",
        })
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "sinr_req" => Ok(SweepParam::SinrReq),
            "irs_elements" => Ok(SweepParam::IrsElements),
            "irs_power_budget_mw" => Ok(SweepParam::IrsBudgetMw),
            other => Err(format!("unknown sweep parameter `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub scenario: String,
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub drops: usize,
    pub schemes: Vec<Scheme>,
    /// Base scenario; its `seed` seeds the whole sweep.
    pub base: SystemConfig,
    pub sinr_units: SinrUnits,
}

fn parse_list<T: FromStr>(kv: &mut KeyValues, key: &str) -> Result<Option<Vec<T>>>
where
    T::Err: fmt::Display,
{
    let Some((raw, line)) = kv.take(key) else {
        return Ok(None);
    };
    raw.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>().map_err(|e| Error::ConfigLine {
                line,
                msg: format!("bad entry `{s}` in `{key}`: {e}"),
            })
        })
        .collect::<Result<Vec<T>>>()
        .map(Some)
}

impl SweepSpec {
    pub fn from_key_values(mut kv: KeyValues) -> Result<Self> {
        let mut base = SystemConfig::default();
        base.apply(&mut kv)?;
        let scenario = kv.take("scenario").map(|(v, _)| v).unwrap_or_else(|| "sweep".into());
        let param = kv
            .take_parsed::<SweepParam>("sweep")?
            .ok_or_else(|| Error::Config("missing key `sweep`".into()))?;
        let values = parse_list::<f64>(&mut kv, "values")?
            .ok_or_else(|| Error::Config("missing key `values`".into()))?;
        let drops = kv.take_parsed::<usize>("drops")?.unwrap_or(100);
        let schemes = parse_list::<Scheme>(&mut kv, "schemes")?.unwrap_or_else(|| Scheme::ALL.to_vec());
        let sinr_units = kv.sinr_units;
        kv.finish()?;
        let spec = SweepSpec {
            scenario,
            param,
            values,
            drops,
            schemes,
            base,
            sinr_units,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(KeyValues::from_file(path)?)
    }

    pub fn from_str_config(text: &str) -> Result<Self> {
        Self::from_key_values(KeyValues::parse(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.drops == 0 {
            return Err(Error::Config("sweep needs at least one drop".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("sweep needs at least one scheme".into()));
        }
        for i in 0..self.values.len() {
            self.config_for(i)?.validate()?;
        }
        Ok(())
    }

    /// Scenario at value `index`, before per-drop seeding.
    pub fn config_for(&self, index: usize) -> Result<SystemConfig> {
        let v = self.values[index];
        let mut cfg = self.base.clone();
        match self.param {
            SweepParam::SinrReq => cfg.sinr_req = self.sinr_units.to_linear(v),
            SweepParam::IrsElements => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::Config(format!("irs_elements value {v} is not a positive integer")));
                }
                cfg.irs_elements = v as usize;
            }
            SweepParam::IrsBudgetMw => cfg.irs_power_budget_w = v * 1e-3,
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    /// Swept value as written in the spec.
    pub value: f64,
    pub drop: usize,
    pub seed: u64,
    /// NaN on outage.
    pub bs_power_w: f64,
    /// BS power plus the IRS budget for schemes with an active IRS.
    pub total_power_w: f64,
    /// Bits/J/Hz; NaN on outage.
    pub ee: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub status: String,
    /// Prefix of the channel digest; equal across schemes of a drop.
    pub channel_hash: String,
    /// Wall-clock seconds; kept out of the main CSV.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// Power model of a scheme in the energy-efficiency metric.
pub fn power_model(scheme: Scheme, cfg: &SystemConfig) -> PowerModel {
    let base = PowerModel {
        p_a: cfg.irs_power_budget_w,
        ..PowerModel::default()
    };
    if scheme.uses_irs() {
        base
    } else {
        PowerModel {
            p_i: 0.0,
            passive: true,
            ..base
        }
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c == ',' || c == '\n' || c == '"' { ';' } else { c })
        .collect()
}

/// Evaluates every scheme of the spec on one drop.
pub fn evaluate_drop(spec: &SweepSpec, value_index: usize, drop: usize) -> Result<Vec<ResultRow>> {
    let seed = child_seed(spec.base.seed, value_index as u64, drop as u64);
    let mut cfg = spec.config_for(value_index)?;
    cfg.seed = seed;
    let (_, ch) = draw(&cfg, seed);
    let hash: String = ch.digest().chars().take(16).collect();
    let row = |scheme: Scheme,
               sol: Option<&Solution>,
               iterations: usize,
               status: String,
               seconds: f64| {
        let feasible = sol.is_some();
        let bs = sol.map_or(f64::NAN, crate::problem::bs_transmit_power);
        let irs = if scheme.uses_irs() { cfg.irs_power_budget_w } else { 0.0 };
        ResultRow {
            scheme,
            value: spec.values[value_index],
            drop,
            seed,
            bs_power_w: bs,
            total_power_w: bs + irs,
            ee: sol.map_or(f64::NAN, |s| {
                energy_efficiency(&ch, s, &cfg, &power_model(scheme, &cfg))
            }),
            feasible,
            iterations,
            status: sanitize(&status),
            channel_hash: hash.clone(),
            seconds,
        }
    };

    // baseline 1 doubles as the warm start of the proposed scheme
    let t0 = Instant::now();
    let b1 = baseline_no_irs(&ch, &cfg);
    let b1_seconds = t0.elapsed().as_secs_f64();
    let mut rows = Vec::with_capacity(spec.schemes.len());
    for &scheme in &spec.schemes {
        let t = Instant::now();
        match scheme {
            Scheme::Baseline1 => rows.push(match &b1 {
                Ok(b) => row(scheme, b.feasible.then_some(&b.solution), 0, b.status.clone(), b1_seconds),
                Err(e) => row(scheme, None, 0, format!("error: {e}"), b1_seconds),
            }),
            Scheme::Baseline2 => {
                let mut rng = rng_from_seed(child_seed(seed, 2, 0));
                let b = baseline_zf_random(&ch, &cfg, &mut rng);
                let secs = t.elapsed().as_secs_f64();
                rows.push(row(scheme, b.feasible.then_some(&b.solution), 0, b.status, secs));
            }
            Scheme::Proposed => {
                let out = b1
                    .as_ref()
                    .map_err(|e| Error::Initialization(e.to_string()))
                    .and_then(|b| initialize_from(&ch, &cfg, b))
                    .and_then(|init| run_from(&ch, &cfg, &RunOptions::default(), init, |_| {}));
                let secs = t.elapsed().as_secs_f64() + b1_seconds;
                rows.push(match out {
                    Ok(r) => {
                        let ok = check_feasibility(&ch, &r.solution, &cfg, crate::ia::ACCEPT_TOL).feasible;
                        row(
                            scheme,
                            ok.then_some(&r.solution),
                            r.iterations,
                            r.stop.to_string(),
                            secs,
                        )
                    }
                    Err(Error::Initialization(_)) => row(scheme, None, 0, "init_infeasible".into(), secs),
                    Err(e) => row(scheme, None, 0, format!("error: {e}"), secs),
                });
            }
        }
    }
    Ok(rows)
}

/// Runs the sweep on `workers` threads (0 = rayon default). Failures of a
/// single scheme on a drop are recorded as outage rows.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<ResultTable> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|v| (0..spec.drops).map(move |d| (v, d)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let chunks: Vec<Result<Vec<ResultRow>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, d)| {
                let rows = evaluate_drop(spec, v, d);
                log::info!("{} value {} drop {d} done", spec.scenario, spec.values[v]);
                rows
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(jobs.len() * spec.schemes.len());
    for c in chunks {
        rows.extend(c?);
    }
    let mut table = ResultTable { rows };
    table.sort();
    Ok(table)
}

/// Fails early if `path` cannot be created.
pub fn check_writable(path: &Path) -> Result<()> {
    std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map(|_| ())
        .map_err(|e| Error::io(path, e))
}

/// Nine significant digits; `NaN` for missing values.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.8e}")
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

impl ResultTable {
    pub const HEADER: [&'static str; 11] = [
        "scheme",
        "value",
        "drop",
        "seed",
        "bs_power_w",
        "total_power_w",
        "ee_bits_per_joule_hz",
        "feasible",
        "iterations",
        "status",
        "channel_hash",
    ];

    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (a.scheme, a.value, a.drop)
                .partial_cmp(&(b.scheme, b.value, b.drop))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.scheme.to_string(),
                fmt_float(r.value),
                r.drop.to_string(),
                r.seed.to_string(),
                fmt_float(r.bs_power_w),
                fmt_float(r.total_power_w),
                fmt_float(r.ee),
                r.feasible.to_string(),
                r.iterations.to_string(),
                r.status.clone(),
                r.channel_hash.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        // writing into memory only fails on broken invariants
        self.write_csv(&mut buf).expect("in-memory CSV write");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(csv_err(path))
    }

    /// Per-row solve times, which vary between runs.
    pub fn save_timing(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
        let err = csv_err(path);
        w.write_record(["scheme", "value", "drop", "seconds"]).map_err(&err)?;
        for r in &self.rows {
            w.write_record([
                r.scheme.to_string(),
                fmt_float(r.value),
                r.drop.to_string(),
                format!("{:.6}", r.seconds),
            ])
            .map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let bad = |msg: String| Error::Config(format!("result table: {msg}"));
        let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().ne(Self::HEADER.iter().copied()) {
            return Err(bad("unexpected header".into()));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let f = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(e.to_string()));
            let u = |i: usize| rec[i].parse::<u64>().map_err(|e| bad(e.to_string()));
            rows.push(ResultRow {
                scheme: rec[0].parse().map_err(bad)?,
                value: f(1)?,
                drop: u(2)? as usize,
                seed: u(3)?,
                bs_power_w: f(4)?,
                total_power_w: f(5)?,
                ee: f(6)?,
                feasible: rec[7].parse().map_err(|e: std::str::ParseBoolError| bad(e.to_string()))?,
                iterations: u(8)? as usize,
                status: rec[9].to_string(),
                channel_hash: rec[10].to_string(),
                seconds: f64::NAN,
            });
        }
        Ok(ResultTable { rows })
    }
}

/// Half-width of the 95% percentile-bootstrap interval of the mean.
pub fn bootstrap_half_width<R: Rng>(x: &[f64], resamples: usize, rng: &mut R) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..x.len()).map(|_| x[rng.gen_range(0..x.len())]).sum::<f64>() / x.len() as f64)
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| means[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    0.5 * (q(0.975) - q(0.025))
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub value: f64,
    pub drops: usize,
    pub feasible: usize,
    pub outage_rate: f64,
    /// Mean over feasible drops, in watts.
    pub mean_bs_power_w: f64,
    pub mean_bs_power_dbm: f64,
    pub bs_power_ci_w: f64,
    pub mean_total_power_w: f64,
    pub mean_total_power_dbm: f64,
    pub mean_ee: f64,
    pub ee_ci: f64,
}

impl SummaryRow {
    /// Cell without a single feasible drop.
    pub fn all_infeasible(&self) -> bool {
        self.feasible == 0
    }
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        f64::NAN
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Per (scheme, value) means over feasible drops. Powers are averaged in
/// watts, then converted to dBm.
pub fn aggregate(table: &ResultTable) -> Vec<SummaryRow> {
    let mut keys: Vec<(Scheme, f64)> = table.rows.iter().map(|r| (r.scheme, r.value)).collect();
    keys.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    keys.dedup();
    keys.iter()
        .enumerate()
        .map(|(i, &(scheme, value))| {
            let cell: Vec<&ResultRow> = table
                .rows
                .iter()
                .filter(|r| r.scheme == scheme && r.value == value)
                .collect();
            let ok: Vec<&&ResultRow> = cell.iter().filter(|r| r.feasible).collect();
            let bs: Vec<f64> = ok.iter().map(|r| r.bs_power_w).collect();
            let total: Vec<f64> = ok.iter().map(|r| r.total_power_w).collect();
            let ee: Vec<f64> = ok.iter().map(|r| r.ee).collect();
            let mut rng = rng_from_seed(child_seed(0xB0075, i as u64, 0));
            let (bs_ci, ee_ci) = if ok.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (
                    bootstrap_half_width(&bs, BOOTSTRAP_RESAMPLES, &mut rng),
                    bootstrap_half_width(&ee, BOOTSTRAP_RESAMPLES, &mut rng),
                )
            };
            let mb = mean(&bs);
            let mt = mean(&total);
            if ok.is_empty() {
                log::warn!("{scheme} at {value}: every drop is an outage");
            }
            SummaryRow {
                scheme,
                value,
                drops: cell.len(),
                feasible: ok.len(),
                outage_rate: 1.0 - ok.len() as f64 / cell.len() as f64,
                mean_bs_power_w: mb,
                mean_bs_power_dbm: w_to_dbm(mb),
                bs_power_ci_w: bs_ci,
                mean_total_power_w: mt,
                mean_total_power_dbm: w_to_dbm(mt),
                mean_ee: mean(&ee),
                ee_ci,
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: [&str; 12] = [
    "scheme",
    "value",
    "drops",
    "feasible",
    "outage_rate",
    "mean_bs_power_w",
    "mean_bs_power_dbm",
    "bs_power_ci95_w",
    "mean_total_power_w",
    "mean_total_power_dbm",
    "mean_ee_bits_per_joule_hz",
    "ee_ci95",
];

pub fn write_summary_csv<W: std::io::Write>(rows: &[SummaryRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.scheme.to_string(),
            fmt_float(r.value),
            r.drops.to_string(),
            r.feasible.to_string(),
            fmt_float(r.outage_rate),
            fmt_float(r.mean_bs_power_w),
            fmt_float(r.mean_bs_power_dbm),
            fmt_float(r.bs_power_ci_w),
            fmt_float(r.mean_total_power_w),
            fmt_float(r.mean_total_power_dbm),
            fmt_float(r.mean_ee),
            fmt_float(r.ee_ci),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_summary_csv(rows, std::io::BufWriter::new(f)).map_err(csv_err(path))
}

/// Sidecar paths next to a main output: `x.csv` -> `x.summary.csv`,
/// `x.timing.csv`.
pub fn sidecar(path: &Path, tag: &str) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}.{tag}.{ext}"))
}
