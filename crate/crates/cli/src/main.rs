//! `scalar-cf`: runs the filter scenarios, the acceptance checks and the θ*
//! solver from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use scalar_cf::config::{bundled, load_file};
use scalar_cf::output::{emit_chart, emit_csv};
use scalar_cf::sim::{config_hash, run_with_manifest, RunManifest};
use scalar_cf::{check, solve_theta_star, Error, ScenarioId, Variant};

#[derive(Parser)]
#[command(
    name = "scalar-cf",
    version,
    about = "Complementary attitude filter driven by scalar measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write one CSV per variant, an SVG chart and a manifest.
    Run {
        #[arg(long, value_parser = parse_scenario)]
        scenario: ScenarioId,
        /// TOML file overriding the scenario's bundled defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated variants; defaults to every variant the scenario supports.
        #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
        variants: Vec<Variant>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the acceptance suite and print one verdict per criterion.
    Check {
        /// Also write the verdicts to `<dir>/manifest.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve cos(θ/2)·cos θ = ε for the basin bound θ*.
    ThetaStar {
        #[arg(long, allow_negative_numbers = true)]
        epsilon: f64,
    },
}

fn parse_scenario(s: &str) -> Result<ScenarioId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// 1 for runs that went wrong numerically, 2 for anything the user can fix in
/// the configuration or arguments.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFiniteState { .. } => 1,
        _ => 2,
    }
}

fn run_scenario(
    scenario: ScenarioId,
    config: Option<&Path>,
    out: &Path,
    variants: Vec<Variant>,
    dt: Option<f64>,
    seed: Option<u64>,
) -> Result<(), Error> {
    let mut cfg = match config {
        Some(path) => load_file(path, Some(scenario))?,
        None => bundled(scenario)?,
    };
    if let Some(dt) = dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::ConfigurationMismatch(format!("--dt must be positive, got {dt}")));
        }
        cfg.dt = dt;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let variants = if variants.is_empty() {
        Variant::defaults_for(scenario, &cfg)
    } else {
        variants
    };

    let (records, manifest) = run_with_manifest(&cfg, &variants)?;
    fs::create_dir_all(out)?;
    for r in &records {
        let path = out.join(format!("{}_{}.csv", r.scenario, r.variant));
        emit_csv(r, &path)?;
        println!(
            "{}: final error {:.4} deg -> {}",
            r.variant,
            r.final_theta_deg(),
            path.display()
        );
    }
    let chart = out.join(format!("{scenario}_theta.svg"));
    emit_chart(&records, &chart)?;
    println!("chart -> {}", chart.display());
    write_manifest(&manifest, out)
}

fn write_manifest(manifest: &RunManifest, out: &Path) -> Result<(), Error> {
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Io(e.into()))?;
    fs::write(out.join("manifest.json"), json + "\n")?;
    Ok(())
}

fn run_check(out: Option<&Path>) -> Result<bool, Error> {
    let start = Instant::now();
    let verdicts = check::run_all()?;
    for v in &verdicts {
        println!("{}", v.line());
    }
    let passed = verdicts.iter().all(|v| v.passed);
    println!(
        "{} of {} criteria passed",
        verdicts.iter().filter(|v| v.passed).count(),
        verdicts.len()
    );
    if let Some(out) = out {
        let cfgs = ScenarioId::CANONICAL
            .iter()
            .map(|&id| bundled(id).map(|c| config_hash(&c)))
            .collect::<Result<Vec<_>, _>>()?;
        let manifest = RunManifest {
            scenario: "acceptance".into(),
            variants: Vec::new(),
            config_hash: cfgs.join(","),
            seed: 0,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            wall_clock_s: start.elapsed().as_secs_f64(),
            verdicts,
        };
        fs::create_dir_all(out)?;
        write_manifest(&manifest, out)?;
    }
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            config,
            out,
            variants,
            dt,
            seed,
        } => run_scenario(scenario, config.as_deref(), &out, variants, dt, seed).map(|()| true),
        Command::Check { out } => run_check(out.as_deref()),
        Command::ThetaStar { epsilon } => solve_theta_star(epsilon).map(|t| {
            println!("{:.4} deg ({t:.10} rad)", t.to_degrees());
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
