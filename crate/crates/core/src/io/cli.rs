//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 on runtime failures, 2 on usage or
//! configuration errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::audit::run_audit;
use super::config::ConfigDocument;
use super::metrics::{write_local_trace, write_metrics};
use super::plot::{plot_curves, Curve, CurveMetric};
use super::summary::{write_json, write_summary};
use crate::engine::{run_experiment, ExperimentConfig, ExperimentOutput};
use crate::error::Error;
use crate::rng::{gaussian_vector, Purpose, StreamKey};
use crate::trial::{fit_loglog_slope, zeta_curve, ZetaPoint};

pub const OUT_ENV: &str = "BYZANT_OUT";

#[derive(Debug, Parser)]
#[command(name = "byzant", version, about = "Byzantine-robust distributed optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single experiment.
    Run(RunArgs),
    /// Run every aggregator against every attack.
    Sweep(SweepArgs),
    /// Measure the trial-gradient discrepancy as a function of trial size.
    Zeta(ZetaArgs),
    /// Audit the modelling assumptions on a configured problem.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to $BYZANT_OUT, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides the configured thread count.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated aggregator kinds.
    #[arg(long, value_delimiter = ',', default_value = "mean,bant,autobant")]
    aggregators: Vec<String>,
    /// Comma-separated attack tokens such as `ipm80`, `alie40`, `signflip60`, `none`.
    #[arg(long, value_delimiter = ',', default_value = "ipm80,alie40,signflip60,random60")]
    attacks: Vec<String>,
}

#[derive(Debug, Args)]
struct ZetaArgs {
    #[command(flatten)]
    common: Common,
    /// Trial sizes.
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,400,800,1600,3200")]
    ns: Vec<usize>,
    /// Independent trial sets per size.
    #[arg(long, default_value_t = 50)]
    reps: usize,
    /// Probe points for the supremum over x.
    #[arg(long, default_value_t = 8)]
    probes: usize,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[command(flatten)]
    common: Common,
    /// Gradient draws per point for the noise audit.
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn out_dir(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_document(common: &Common) -> Result<ConfigDocument, Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let mut doc = ConfigDocument::parse(&text).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = common.seed {
        doc.set("engine", "seed", &seed.to_string())
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(doc)
}

fn build_config(doc: &ConfigDocument) -> Result<ExperimentConfig, Failure> {
    let cfg = doc.build().map_err(|e| Failure::Config(e.to_string()))?;
    let warnings = cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_run(cfg: &ExperimentConfig, out: &ExperimentOutput, dir: &Path, label: &str) -> Result<(), Failure> {
    create_dir(dir)?;
    write_metrics(&out.reports, cfg.workers, &dir.join("metrics.csv"))?;
    write_summary(&out.summary, &dir.join("summary.json"))?;
    if !out.reports.is_empty() {
        plot_curves(
            &[Curve {
                label,
                rows: &out.reports,
            }],
            CurveMetric::Suboptimality,
            &dir.join("curves.svg"),
        )?;
    }
    if cfg.verbose && !out.trace.is_empty() {
        write_local_trace(&out.trace, &dir.join("local_trace.csv"))?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut doc = load_document(&args.common)?;
    if let Some(t) = args.threads {
        doc.set("engine", "threads", &t.to_string())
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let cfg = build_config(&doc)?;
    let out = run_experiment(&cfg)?;
    let dir = out_dir(&args.common);
    write_run(&cfg, &out, &dir, cfg.aggregator.name())?;
    println!(
        "{}: avg ||grad f||^2 = {:.6e}, tail = {:.6e}, final f = {:.6e}",
        cfg.aggregator.name(),
        out.summary.avg_grad_norm_sq,
        out.summary.tail_avg_grad_norm_sq,
        out.summary.final_metrics.global_loss
    );
    Ok(())
}

/// Splits an attack token like `ipm80` into an attack kind and a percentage.
pub fn parse_attack_token(token: &str) -> Result<(&'static str, f64), String> {
    let token = token.trim();
    let split = token.find(|c: char| c.is_ascii_digit()).unwrap_or(token.len());
    let (name, pct) = token.split_at(split);
    let kind = match name.trim_end_matches(['-', '_']) {
        "none" => "none",
        "ipm" => "ipm",
        "alie" => "alie",
        "signflip" | "sign-flip" | "sf" => "sign-flip",
        "random" | "random-gradient" | "rg" => "random-gradient",
        "labelflip" | "label-flip" | "lf" => "label-flip",
        other => return Err(format!("unknown attack `{other}` in token `{token}`")),
    };
    let pct = if pct.is_empty() {
        0.0
    } else {
        pct.parse::<f64>()
            .map_err(|_| format!("bad percentage in attack token `{token}`"))?
    };
    if kind != "none" && pct == 0.0 {
        return Err(format!("attack token `{token}` needs a percentage, e.g. `{kind}50`"));
    }
    Ok((kind, pct))
}

#[derive(Serialize)]
struct SweepEntry {
    aggregator: String,
    attack: String,
    dir: String,
    avg_grad_norm_sq: f64,
    tail_avg_grad_norm_sq: f64,
    final_global_loss: f64,
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let base = load_document(&args.common)?;
    let root = out_dir(&args.common);
    let mut plans = Vec::new();
    for agg in &args.aggregators {
        for tok in &args.attacks {
            let (kind, pct) = parse_attack_token(tok).map_err(Failure::Config)?;
            let mut doc = base.clone();
            let set = |doc: &mut ConfigDocument, s: &str, k: &str, v: &str| {
                doc.set(s, k, v).map_err(|e| Failure::Config(e.to_string()))
            };
            set(&mut doc, "aggregator", "kind", agg.trim())?;
            set(&mut doc, "attack", "kind", kind)?;
            set(&mut doc, "attack", "fraction", &pct.to_string())?;
            let cfg = build_config(&doc)?;
            plans.push((agg.trim().to_string(), tok.trim().to_string(), cfg));
        }
    }
    let mut entries = Vec::new();
    let mut runs = Vec::new();
    for (agg, tok, cfg) in plans {
        let name = format!("{agg}__{tok}");
        let out = run_experiment(&cfg)?;
        write_run(&cfg, &out, &root.join(&name), &name)?;
        println!("{name}: tail avg ||grad f||^2 = {:.6e}", out.summary.tail_avg_grad_norm_sq);
        entries.push(SweepEntry {
            aggregator: agg,
            attack: tok,
            dir: name.clone(),
            avg_grad_norm_sq: out.summary.avg_grad_norm_sq,
            tail_avg_grad_norm_sq: out.summary.tail_avg_grad_norm_sq,
            final_global_loss: out.summary.final_metrics.global_loss,
        });
        runs.push((name, out.reports));
    }
    write_json(&entries, &root.join("sweep.json"))?;
    let curves: Vec<Curve<'_>> = runs
        .iter()
        .filter(|(_, r)| !r.is_empty())
        .map(|(n, r)| Curve { label: n, rows: r })
        .collect();
    if !curves.is_empty() {
        plot_curves(&curves, CurveMetric::GradNormSq, &root.join("curves.svg"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ZetaSummary {
    sizes: Vec<usize>,
    reps: usize,
    probes: usize,
    slope: f64,
    points: Vec<ZetaPoint>,
}

fn cmd_zeta(args: ZetaArgs) -> Result<(), Failure> {
    let doc = load_document(&args.common)?;
    let cfg = build_config(&doc)?;
    let problem = crate::problems::Problem::build(&cfg.problem, cfg.workers, cfg.seed)?;
    let mut rng = StreamKey::new(cfg.seed, Purpose::Zeta, 0, u64::MAX).rng();
    let probes: Vec<Vec<f64>> = (0..args.probes.max(1))
        .map(|_| gaussian_vector(&mut rng, problem.dim(), 1.0))
        .collect();
    let points = zeta_curve(problem.server_shard(), &probes, &args.ns, args.reps, cfg.seed)?;
    let slope = fit_loglog_slope(&points).unwrap_or(f64::NAN);
    let dir = out_dir(&args.common);
    create_dir(&dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_fail = |e: csv::Error| Failure::Runtime(e.to_string());
    w.write_record(["trial_size", "discrepancy"]).map_err(csv_fail)?;
    for p in &points {
        w.write_record([p.trial_size.to_string(), p.discrepancy.to_string()])
            .map_err(csv_fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))?;
    let path = dir.join("zeta.csv");
    fs::write(&path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
    write_json(
        &ZetaSummary {
            sizes: args.ns.clone(),
            reps: args.reps,
            probes: probes.len(),
            slope,
            points,
        },
        &dir.join("summary.json"),
    )?;
    println!("zeta slope = {slope:.4}");
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<(), Failure> {
    let doc = load_document(&args.common)?;
    let cfg = build_config(&doc)?;
    let report = run_audit(&cfg, args.draws)?;
    let dir = out_dir(&args.common);
    create_dir(&dir)?;
    write_json(&report, &dir.join("audit.json"))?;
    println!(
        "delta1 = {:.4e}, delta2 = {:.4e}, finite-difference error = {:.2e}, simplex gap = {:.2e}",
        report.heterogeneity.delta1_measured,
        report.heterogeneity.delta2_measured,
        report.finite_diff_max_rel_error,
        report.simplex_max_gap
    );
    Ok(())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match parsed.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Zeta(a) => cmd_zeta(a),
        Command::Audit(a) => cmd_audit(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attack_tokens() {
        assert_eq!(parse_attack_token("ipm80").unwrap(), ("ipm", 80.0));
        assert_eq!(parse_attack_token("signflip60").unwrap(), ("sign-flip", 60.0));
        assert_eq!(parse_attack_token("none").unwrap(), ("none", 0.0));
        assert!(parse_attack_token("ipm").is_err());
        assert!(parse_attack_token("zzz10").is_err());
    }
}
