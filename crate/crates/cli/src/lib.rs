//! The `shrinker` command line, usable in-process through [`execute`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{parse_bracket, parse_formats, Format, RunConfig};
use shrinker_core::certify::{
    audit_envelopes, audited_context, certified_ledger, jacobi_budget, jacobi_report, sphere_verdicts, verify_all,
    TorusAnalysis, VerifyReport,
};
use shrinker_core::error::Error;
use shrinker_core::gronwall::{replay_paper_ledger, select_stages, ReplayReport, StageId};
use shrinker_core::shooting::{profile_csv, profile_svg, Shooter, TorusCertificate};

/// Exit codes: 0 success, 1 a check did not pass (or was inconclusive),
/// 2 the run itself failed.
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

const PROFILE_SPACING: f64 = 5e-3;

#[derive(Parser, Debug)]
#[command(name = "shrinker", version, about = "Numerical certificates for the self-shrinking torus")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Relative integration tolerance (absolute tolerance is 1/100 of it).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Initial Φ bracket for the top height.
    #[arg(long, global = true, value_name = "LO:HI")]
    bracket: Option<String>,
    /// Slack factor for the ledger replay.
    #[arg(long, global = true)]
    slack: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated output formats: json, csv, svg.
    #[arg(long, global = true)]
    emit: Option<String>,
    /// Torus certificate to use instead of locating the torus again.
    #[arg(long, global = true, value_name = "PATH")]
    certificate: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Locate the torus and write its certificate.
    FindTorus,
    /// m-mode Jacobi fields and the kernel verdicts on S2, S5, S6.
    Jacobi,
    /// Replay the Grönwall constant chains.
    GronwallLedger {
        /// Stage filter: `top_x1/jacobi`, a piece (`top_x1` or `TopX1`).
        #[arg(long)]
        stage: Option<String>,
    },
    /// Legendre verdicts on S1, S3, S4.
    SphereKernel,
    /// All checks; exit 0 iff all six kernels are trivial.
    VerifyAll {
        /// Restrict the ledger replay, as for `gronwall-ledger`.
        #[arg(long)]
        stage: Option<String>,
    },
    /// Summarize a `verify.json` written by `verify-all`.
    Report {
        /// Report to read; defaults to `<out>/verify.json`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

/// Entry point of the binary: parses `std::env::args`, runs, and maps the
/// outcome to the exit code.
pub fn main() -> ExitCode {
    ExitCode::from(exit_code(run(Cli::parse())))
}

/// Runs one command line (including the program name) in-process. `Ok`
/// carries whether every check passed.
pub fn execute<I, T>(args: I) -> Result<bool, Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    run(cli)
}

pub fn exit_code(outcome: Result<bool, Error>) -> u8 {
    match outcome {
        Ok(true) => 0,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn load_config(c: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::parse(&fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?)?,
        None => RunConfig::default(),
    };
    if let Some(t) = c.tol {
        cfg.set_tol(t);
    }
    if let Some(b) = &c.bracket {
        cfg.bracket = parse_bracket(b)?;
    }
    if let Some(s) = c.slack {
        cfg.slack = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(e) = &c.emit {
        cfg.emit = parse_formats(e)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    println!("wrote {}", p.display());
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> Result<(), Error> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    write(dir, name, &s)
}

/// Run metadata lives in its own file so that the reports themselves are
/// byte-identical across runs.
fn write_metadata(cfg: &RunConfig, command: &str) -> Result<(), Error> {
    let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let meta = serde_json::json!({
        "tool": "shrinker",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "unix_time": secs,
    });
    write_json(&cfg.out_dir, "metadata.json", &meta)
}

fn certificate(cfg: &RunConfig, path: Option<&Path>) -> Result<TorusCertificate, Error> {
    match path {
        Some(p) => {
            let s = fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            TorusCertificate::from_json(&s)
        }
        None => Shooter::new(cfg.shooting).find_torus(cfg.bracket.0, cfg.bracket.1),
    }
}

fn stages(filter: Option<&str>) -> Result<Vec<StageId>, Error> {
    filter.map_or(Ok(Vec::new()), select_stages)
}

fn run(cli: Cli) -> Result<bool, Error> {
    let cfg = load_config(&cli.common)?;
    let cert_path = cli.common.certificate.as_deref();
    match cli.command {
        Command::FindTorus => find_torus(&cfg),
        Command::Jacobi => {
            let an = TorusAnalysis::new(&certificate(&cfg, cert_path)?)?;
            let audit = audit_envelopes(&an)?;
            let ledger = certified_ledger(&an, &audited_context(&an, &audit)?)?;
            let report = jacobi_report(&an, jacobi_budget(&an, &ledger)?)?;
            println!("top    u0 = {:+.6}  u0' = {:+.6}", report.top_endpoint.0, report.top_endpoint.1);
            println!("bottom u0 = {:+.6}  u0' = {:+.6}", report.bottom_endpoint.0, report.bottom_endpoint.1);
            println!("det N = {:.6}   modes 0..{} integrated", report.det, report.cutoff.first_trivial_mode());
            for k in &report.kernels {
                println!("{:?}: {:?}", k.piece, k.verdict);
                for m in &k.modes {
                    println!("  m={:<2} quantity {:+.6e}  budget {:.3e}  {:?}", m.m, m.quantity, m.budget, m.verdict);
                }
            }
            write_json(&cfg.out_dir, "jacobi.json", &report)?;
            write_metadata(&cfg, "jacobi")?;
            Ok(report.kernels.iter().all(|k| k.verdict.is_trivial()))
        }
        Command::GronwallLedger { stage } => {
            let only = stages(stage.as_deref())?;
            let an = TorusAnalysis::new(&certificate(&cfg, cert_path)?)?;
            let ctx = audited_context(&an, &audit_envelopes(&an)?)?;
            let report = replay_paper_ledger(&only, &ctx, cfg.slack)?;
            print_replay(&report);
            write_json(&cfg.out_dir, "ledger.json", &report)?;
            write_metadata(&cfg, "gronwall-ledger")?;
            Ok(report.pass)
        }
        Command::SphereKernel => {
            let angle = certificate(&cfg, cert_path)?.sphere.angle;
            let v = sphere_verdicts(angle)?;
            for s in &v {
                println!(
                    "{:?}: {:?}  quantity {:+.6}  budget {:.3e}",
                    s.piece, s.verdict, s.quantity, s.error_budget
                );
            }
            write_json(&cfg.out_dir, "sphere.json", &v)?;
            write_metadata(&cfg, "sphere-kernel")?;
            Ok(v.iter().all(|s| s.verdict.is_trivial()))
        }
        Command::VerifyAll { stage } => {
            let only = stages(stage.as_deref())?;
            let cert = certificate(&cfg, cert_path)?;
            let report = verify_all(&cert, cfg.slack, &only)?;
            print_summary(&report);
            write_json(&cfg.out_dir, "verify.json", &report)?;
            write_metadata(&cfg, "verify-all")?;
            Ok(report.all_trivial)
        }
        Command::Report { input } => {
            let p = input.unwrap_or_else(|| cfg.out_dir.join("verify.json"));
            let s = fs::read_to_string(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            let report: VerifyReport = serde_json::from_str(&s)?;
            print_summary(&report);
            print_replay(&report.replay);
            Ok(report.all_trivial)
        }
    }
}

fn find_torus(cfg: &RunConfig) -> Result<bool, Error> {
    let cert = Shooter::new(cfg.shooting).find_torus(cfg.bracket.0, cfg.bracket.1)?;
    println!("a0 = {:.12}  b0 = {:.12}", cert.a0, cert.b0);
    println!(
        "p+ = ({:.6}, {:.6})  angle = {:.6}",
        cert.sphere.p_plus.0, cert.sphere.p_plus.1, cert.sphere.angle
    );
    for v in &cert.verdicts {
        println!(
            "{:<14} {:.9} in [{:.9}, {:.9}]  {}",
            v.name,
            v.value,
            v.lo,
            v.hi,
            if v.pass { "PASS" } else { "FAIL" }
        );
    }
    if cfg.emits(Format::Json) {
        write(&cfg.out_dir, "certificate.json", &(cert.to_json()? + "\n"))?;
    }
    if cfg.emits(Format::Csv) || cfg.emits(Format::Svg) {
        let profile = cert.reconstruct()?.closed_profile(PROFILE_SPACING);
        if cfg.emits(Format::Csv) {
            write(&cfg.out_dir, "profile.csv", &profile_csv(&profile))?;
        }
        if cfg.emits(Format::Svg) {
            write(&cfg.out_dir, "profile.svg", &profile_svg(&profile))?;
        }
    }
    write_metadata(cfg, "find-torus")?;
    Ok(cert.all_pass())
}

fn print_replay(r: &ReplayReport) {
    println!("ledger replay (slack {:.2})", r.slack);
    println!("{:<24} {:<48} {:<18} {:>12} {:>12}  verdict", "stage", "line", "term", "paper", "ours");
    for l in &r.lines {
        for c in &l.coefficients {
            println!(
                "{:<24} {:<48} {:<18} {:>12.5} {:>12.5}  {}",
                l.stage.to_string(),
                l.label,
                c.term.to_string(),
                c.paper,
                c.ours,
                if c.pass { "ok" } else { "FAIL" }
            );
        }
    }
    let covered: std::collections::BTreeSet<StageId> = r.lines.iter().map(|l| l.stage).collect();
    for s in &r.stages {
        if !covered.contains(&s.stage) {
            println!("{:<24} recompute only: value {} | deriv {}", s.stage.to_string(), s.value, s.deriv);
        }
    }
    for (s, why) in &r.unavailable {
        println!("{:<24} unavailable: {why}", s.to_string());
    }
    let failing = r.failing().count();
    println!("{} of {} lines within slack", r.lines.len() - failing, r.lines.len());
}

fn print_summary(r: &VerifyReport) {
    for k in &r.kernels {
        println!("{:<3} {:<12} quantity {:+.6e}  budget {:.3e}", k.piece, format!("{:?}", k.verdict), k.quantity, k.budget);
    }
    println!("{}/{} kernels trivial", r.trivial_count, r.kernels.len());
}
