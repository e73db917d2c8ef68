//! Command-line front end: `sweep`, `single` and `verify`.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure (including a
//! failed verification).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use active_irs::baselines::{baseline_no_irs, baseline_zf_random};
use active_irs::channel::{child_seed, draw, rng_from_seed};
use active_irs::config::{linear_to_db, w_to_dbm, KeyValues, SinrUnits, SystemConfig};
use active_irs::experiments::{
    aggregate, check_writable, run_sweep, save_summary, sidecar, write_summary_csv, SweepSpec,
};
use active_irs::ia::{dump_subproblem, initialize, run_from, RunOptions};
use active_irs::problem::check_feasibility;
use active_irs::verify;
use active_irs::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "active-irs", version, about = "Active-IRS joint beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo sweep from a config file; writes per-drop rows plus
    /// `.summary` and `.timing` sidecars.
    Sweep(SweepArgs),
    /// One drop: feasibility report and convergence trace.
    Single(SingleArgs),
    /// Oracle and invariant suites.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Units {
    Db,
    Linear,
}

impl From<Units> for SinrUnits {
    fn from(u: Units) -> Self {
        match u {
            Units::Db => SinrUnits::Db,
            Units::Linear => SinrUnits::Linear,
        }
    }
}

#[derive(Args, Debug)]
struct Common {
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Unit of SINR values in the config (overrides `sinr_units`).
    #[arg(long, value_enum)]
    sinr_units: Option<Units>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Per-drop CSV; defaults to `<scenario>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    drops: Option<usize>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SingleArgs {
    /// Scenario keys only; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Convergence trace CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plain-text dump of the first conic subproblem.
    #[arg(long)]
    dump_conic: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Drops for the convergence suite.
    #[arg(long, default_value_t = 5)]
    drops: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the check lines here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_kv(path: Option<&Path>, units: Option<Units>) -> Result<KeyValues> {
    let mut kv = match path {
        Some(p) => KeyValues::from_file(p)?,
        None => KeyValues::default(),
    };
    if let Some(u) = units {
        // the flag wins over the file
        let _ = kv.take("sinr_units");
        kv.sinr_units = u.into();
    }
    Ok(kv)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let kv = load_kv(Some(&a.config), a.common.sinr_units)?;
    let mut spec = SweepSpec::from_key_values(kv)?;
    if let Some(s) = a.common.seed {
        spec.base.seed = s;
    }
    if let Some(d) = a.drops {
        spec.drops = d;
    }
    spec.validate()?;
    let out = a.out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", spec.scenario)));
    check_writable(&out)?;
    let table = run_sweep(&spec, a.workers)?;
    table.save(&out)?;
    table.save_timing(&sidecar(&out, "timing"))?;
    let summary = aggregate(&table);
    save_summary(&summary, &sidecar(&out, "summary"))?;
    write_summary_csv(&summary, std::io::stdout().lock()).map_err(|source| Error::Csv {
        path: PathBuf::from("<stdout>"),
        source,
    })?;
    Ok(())
}

fn single(a: SingleArgs) -> Result<()> {
    let mut kv = load_kv(a.config.as_deref(), a.common.sinr_units)?;
    let mut cfg = SystemConfig::default();
    cfg.apply(&mut kv)?;
    kv.finish()?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    if let Some(p) = &a.out {
        check_writable(p)?;
    }
    let (_, ch) = draw(&cfg, cfg.seed);
    println!("channel {}", ch.digest());

    let b1 = baseline_no_irs(&ch, &cfg)?;
    println!(
        "baseline1: {} {:.4} dBm",
        b1.status,
        if b1.feasible { w_to_dbm(b1.bs_power_w) } else { f64::NAN }
    );
    let b2 = baseline_zf_random(&ch, &cfg, &mut rng_from_seed(child_seed(cfg.seed, 2, 0)));
    println!(
        "baseline2: {} {:.4} dBm",
        b2.status,
        if b2.feasible { w_to_dbm(b2.bs_power_w) } else { f64::NAN }
    );

    let init = initialize(&ch, &cfg)?;
    let mut first = true;
    let mut dump_err = None;
    let r = run_from(&ch, &cfg, &RunOptions::default(), init, |sub| {
        if let (true, Some(p)) = (first, &a.dump_conic) {
            dump_err = dump_subproblem(sub, p).err();
        }
        first = false;
    })?;
    if let Some(e) = dump_err {
        return Err(e);
    }
    let rep = check_feasibility(&ch, &r.solution, &cfg, 1e-6);
    println!(
        "proposed: {} after {} iterations, {:.4} dBm",
        r.stop,
        r.iterations,
        w_to_dbm(r.state.objective)
    );
    for (k, s) in rep.sinr.iter().enumerate() {
        println!(
            "  user {k}: sinr {:.4} dB (target {:.4} dB), margin {:.3e}",
            linear_to_db(*s),
            linear_to_db(cfg.sinr_req),
            rep.c1_margin[k]
        );
    }
    println!(
        "  irs power {:.4e} W of {:.4e} W, feasible {}",
        rep.c2_lhs, cfg.irs_power_budget_w, rep.feasible
    );
    println!("  rank ratios {:?}", r.rank_ratios);
    print!("{}", r.trace);
    if let Some(p) = &a.out {
        r.trace.save(p)?;
    }
    Ok(())
}

fn run_verify(a: VerifyArgs) -> Result<bool> {
    let mut checks = vec![
        verify::minorant_suite(1000, a.seed),
        verify::tightness_suite(100, a.seed)?,
        verify::reconstruction_suite(1000, a.seed),
    ];
    checks.extend(verify::lemma1_suite(20, a.seed));
    if a.drops > 0 {
        let cfg = SystemConfig::default();
        let out = verify::run_drops(&cfg, a.drops, a.seed);
        checks.extend(verify::convergence_checks(&out, cfg.max_iter));
    }
    let lines: Vec<String> = checks.iter().map(|c| c.to_string()).collect();
    for l in &lines {
        println!("{l}");
    }
    if let Some(p) = &a.out {
        std::fs::write(p, lines.join("\n") + "\n").map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.command {
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::Single(a) => single(a).map(|_| true),
        Command::Verify(a) => run_verify(a),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            // bad config contents are usage errors
            let code = match e {
                Error::Config(_) | Error::ConfigLine { .. } => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
