//! Command-line front end: load a config, run the experiment or a scripted
//! scenario, and emit reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 trace error, 4 internal
//! check failure (oracle disagreement or ledger inconsistency), 1 anything
//! else.

use clap::Parser;
use fogcert::config::{ConfigError, RunConfig};
use fogcert::metrics::{to_csv, to_json, to_table, AuditRow, RunReport};
use fogcert::runner::{self, RunError};
use fogcert::scenario;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "fogcert",
    about = "Simulate location-certification strategies in fog-based publish/subscribe systems",
    after_help = "Config file keys use dotted names (see README.md); flags override the file.\n\
                  The base config path can also come from the FOGCERT_CONFIG environment variable."
)]
struct Cli {
    /// Base config file (falls back to $FOGCERT_CONFIG)
    #[arg(long)]
    config: Option<PathBuf>,

    /// Architecture: fixed, assigned-cls, assigned-nls or collaborative
    #[arg(long)]
    arch: Option<String>,

    /// Probability that a publication carries a false location claim
    #[arg(long)]
    pf: Option<f64>,

    /// Seeds, e.g. "1..5" or "1,7,42"
    #[arg(long)]
    seeds: Option<String>,

    /// ns-2 movement trace file (default: synthetic random waypoint)
    #[arg(long)]
    trace: Option<PathBuf>,

    /// Simulated duration in seconds
    #[arg(long = "duration-s")]
    duration_s: Option<u64>,

    /// Number of producers
    #[arg(long)]
    producers: Option<usize>,

    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format
    #[arg(long, value_parser = ["csv", "json", "table"], default_value = "table")]
    format: String,

    /// Run a scripted scenario: fig7, lonely-cls, liar-corrected, edge-tie
    #[arg(long)]
    scenario: Option<String>,

    /// Also emit the per-notification audit (line-delimited JSON)
    #[arg(long)]
    audit: bool,

    /// Extra config overrides as key=value
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Suppress the effective-config echo on stderr
    #[arg(long, short)]
    quiet: bool,
}

fn build_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut config = RunConfig::default();
    let base = cli
        .config
        .clone()
        .or_else(|| std::env::var_os("FOGCERT_CONFIG").map(PathBuf::from));
    if let Some(path) = base {
        let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::Invalid {
            key: "config".into(),
            reason: format!("{}: {e}", path.display()),
        })?;
        config.apply_text(&text)?;
    }
    for pair in &cli.set {
        let (k, v) = pair.split_once('=').ok_or_else(|| ConfigError::Invalid {
            key: pair.clone(),
            reason: "expected KEY=VALUE".into(),
        })?;
        config.set(k.trim(), v.trim())?;
    }
    if let Some(arch) = &cli.arch {
        config.set("arch", arch)?;
    }
    if let Some(pf) = cli.pf {
        config.set("pf", &pf.to_string())?;
    }
    if let Some(seeds) = &cli.seeds {
        config.set("seeds", seeds)?;
    }
    if let Some(trace) = &cli.trace {
        config.set("trace.file", &trace.display().to_string())?;
    }
    if let Some(s) = cli.duration_s {
        config.set("duration_ms", &(s * 1000).to_string())?;
    }
    if let Some(p) = cli.producers {
        config.set("producers", &p.to_string())?;
    }
    config.validate()?;
    Ok(config)
}

fn render(format: &str, reports: &[RunReport]) -> String {
    match format {
        "csv" => to_csv(reports),
        "json" => to_json(reports),
        _ => to_table(reports),
    }
}

fn emit(out: &Option<PathBuf>, body: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn emit_audit(audits: &[AuditRow]) {
    for row in audits {
        println!("{}", row.to_line());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(name) = &cli.scenario {
        return match scenario::run_scenario(name) {
            Ok(result) => {
                let body = render(&cli.format, std::slice::from_ref(&result.output.report));
                if emit(&cli.out, &body).is_err() {
                    return ExitCode::from(1);
                }
                if cli.audit {
                    emit_audit(&result.output.audits);
                }
                if result.output.oracle.disagreements > 0 {
                    eprintln!(
                        "oracle disagreement: {}",
                        result.output.oracle.first_disagreement.as_deref().unwrap_or("unknown")
                    );
                    return ExitCode::from(4);
                }
                ExitCode::SUCCESS
            }
            Err(scenario::ScenarioError::Unknown(name)) => {
                eprintln!("unknown scenario '{name}'");
                ExitCode::from(2)
            }
            Err(e) => {
                eprintln!("scenario failed: {e}");
                ExitCode::from(1)
            }
        };
    }

    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if !cli.quiet {
        eprint!("# effective config\n{}", config.to_config_string());
        eprintln!("# seeds: {:?}", config.seeds);
    }
    match runner::run(&config) {
        Ok(outcome) => {
            let mut reports = outcome.per_seed.clone();
            if reports.len() > 1 {
                reports.push(outcome.aggregate.clone());
            }
            let body = render(&cli.format, &reports);
            if emit(&cli.out, &body).is_err() {
                eprintln!("cannot write output");
                return ExitCode::from(1);
            }
            if cli.audit {
                for (_, audits) in &outcome.audits {
                    emit_audit(audits);
                }
            }
            if !outcome.oracle_clean() {
                eprintln!(
                    "oracle disagreement ({} of {} checks): {}",
                    outcome.oracle_disagreements,
                    outcome.oracle_checks,
                    outcome.first_disagreement.as_deref().unwrap_or("unknown")
                );
                return ExitCode::from(4);
            }
            ExitCode::SUCCESS
        }
        Err(RunError::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(RunError::Trace(e)) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
        Err(RunError::Sim(e)) => {
            eprintln!("simulation failed: {e}");
            ExitCode::from(1)
        }
        Err(RunError::Metrics(e)) => {
            eprintln!("internal accounting check failed: {e}");
            ExitCode::from(4)
        }
    }
}
