use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser};

use ripple_cli::{run_subcommand, write_run, ExperimentConfig, Subcommand};

#[derive(Parser)]
#[command(name = "ripple", version, about = "Capillarity-gravity water-wave experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Dirichlet-Neumann operator checks
    DnoTest(Common),
    /// Small-divisor scan and Wilton root search
    ResonanceScan(Common),
    /// Time integration with reversibility check
    Evolve(Common),
    /// Normal-form lifetime comparison
    NfLifetime(Common),
    /// Quantization invariant suite
    SymbolCheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `output`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// `section.key=value`, value parsed as JSON when possible
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (sub, common) = match cli.command {
        Command::DnoTest(c) => (Subcommand::DnoTest, c),
        Command::ResonanceScan(c) => (Subcommand::ResonanceScan, c),
        Command::Evolve(c) => (Subcommand::Evolve, c),
        Command::NfLifetime(c) => (Subcommand::NfLifetime, c),
        Command::SymbolCheck(c) => (Subcommand::SymbolCheck, c),
    };
    ExitCode::from(run(sub, common) as u8)
}

fn run(sub: Subcommand, common: Common) -> i32 {
    let text = match &common.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("usage error: cannot read {}: {e}", p.display());
                return 2;
            }
        },
        None => None,
    };
    let mut cfg = match ExperimentConfig::load(text.as_deref(), &common.overrides, sub) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("usage error: {e}");
            return 2;
        }
    };
    if let Some(o) = common.out {
        cfg.output = Some(o);
    }
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from(format!("ripple-{}", sub.name())));
    let start = Instant::now();
    let out = match run_subcommand(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    if let Err(e) = write_run(&dir, &cfg, &out, start.elapsed()) {
        eprintln!("cannot write to {}: {e}", dir.display());
        return 2;
    }
    if !common.quiet {
        for c in &out.checks {
            let status = if c.passed {
                "ok"
            } else if c.gating {
                "FAIL"
            } else {
                "fail (informational)"
            };
            println!("{:<32} {:<22} {:>12.4e}  {}", c.name, status, c.value, c.detail);
        }
        println!("results in {}", dir.display());
    }
    if let Some(c) = out.first_failure() {
        eprintln!("check failed: {} ({})", c.name, c.detail);
    }
    out.exit_code()
}
