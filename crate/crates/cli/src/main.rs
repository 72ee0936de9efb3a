use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vmgeom_cli::{run_scenario, write_artifacts, Resolution, RunConfig, Scenario};

#[derive(Parser)]
#[command(name = "vmgeom", version, about = "Maxwell-Vlasov geometry scenarios")]
struct Cli {
    #[command(subcommand)]
    scenario: Command,
    /// TOML configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: out/<scenario>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized checks; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid preset (Nx, Nv): low (32, 128), ref (64, 256), high (128, 512).
    #[arg(long, global = true, value_enum)]
    resolution: Option<Resolution>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Landau damping of a Maxwellian plus an unperturbed equilibrium run.
    Landau,
    /// Two-stream instability growth.
    TwoStream,
    /// Randomized bracket algebra and Casimir annihilation under refinement.
    BracketCheck,
    /// Constraint chains of the free particle, an electromagnetic toy and random systems.
    GnhDemo,
    /// Energy-Casimir verdicts for Maxwellian, two-stream and random monotone profiles.
    EcStability,
    /// Marginal-case stabilization, power balance and zero-control reduction.
    ControlledStabilization,
    /// Linear/nonlinear consistency and Goldstone translation modes.
    Convergence,
}

impl Command {
    fn scenario(self) -> Scenario {
        match self {
            Command::Landau => Scenario::Landau,
            Command::TwoStream => Scenario::TwoStream,
            Command::BracketCheck => Scenario::BracketCheck,
            Command::GnhDemo => Scenario::GnhDemo,
            Command::EcStability => Scenario::EcStability,
            Command::ControlledStabilization => Scenario::ControlledStabilization,
            Command::Convergence => Scenario::Convergence,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let scenario = cli.scenario.scenario();
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("cannot read {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            };
            match RunConfig::parse(&text, Some(scenario)) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
        }
        None => RunConfig::defaults(scenario),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.resolution {
        cfg.apply_resolution(r);
    }
    let dir = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out").join(scenario.name()));
    cfg.out = None;
    let violations = cfg.violations();
    if !violations.is_empty() {
        eprintln!("{}", vmgeom_cli::ConfigError::Invalid(violations));
        return ExitCode::from(2);
    }
    let outcome = run_scenario(&cfg);
    if let Err(e) = write_artifacts(&dir, &cfg, &outcome) {
        eprintln!("cannot write artifacts to {}: {e}", dir.display());
        return ExitCode::from(2);
    }
    let report = &outcome.report;
    for c in &report.checks {
        println!("{}", c.line());
    }
    if let Some(e) = &report.error {
        println!("ERROR {e}");
    }
    println!(
        "{} {}: {}/{} checks passed, artifacts in {}",
        if report.passed { "PASS" } else { "FAIL" },
        report.scenario,
        report.checks.iter().filter(|c| c.passed).count(),
        report.checks.len(),
        dir.display()
    );
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
