use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csl_diffusion::pipeline::{self, RunContext};
use csl_diffusion::{ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "csl-diffusion", version = csl_diffusion::io::VERSION, about = "CSL beable diffusion experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config file (flat TOML). Defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output root (else config `outputs`, then $CSL_DIFFUSION_OUT, then `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct MomentsInput {
    /// Moments CSV of the full dynamics.
    moments: PathBuf,
    /// Baseline moments CSV; fits the excess when given.
    #[arg(long)]
    baseline: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Ensemble moments of the full dynamics.
    Simulate,
    /// Ensemble moments with the localization switched off.
    Baseline,
    /// Power-law fits of a moments table.
    Fit(MomentsInput),
    /// Phase-space Fokker-Planck integration.
    Fpe {
        /// Also histogram a Markovian Monte Carlo ensemble against the density.
        #[arg(long)]
        compare: bool,
    },
    /// Variance growth of the affine noise generator.
    NoiseVerify {
        #[arg(long = "a", value_delimiter = ',', default_values_t = vec![0.5, 1.0, 1.5, 2.0])]
        exponents: Vec<f64>,
    },
    /// Noise exponent and predicted growth laws from (E, df).
    Intermittency {
        #[arg(long, default_value_t = 3.0)]
        e: f64,
        #[arg(long)]
        df: f64,
    },
    /// Every acceptance stage, with a pass/fail report.
    Reproduce,
    /// Log-log columns and fitted overlays for plotting.
    PlotData(MomentsInput),
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::named("default"),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap_or_default()
}

fn run(cli: &Cli) -> Result<bool> {
    let g = &cli.global;
    let cfg = load_config(g)?;
    let root = pipeline::output_root(g.out.as_deref(), &cfg);
    let ctx = RunContext::new(&root, &cfg, g.workers);
    let dir = ctx.run_dir.display();
    match &cli.command {
        Command::Simulate => {
            let m = pipeline::run_simulate(&cfg, &ctx)?;
            say(
                g.quiet,
                format!("wrote {} rows to {dir}/moments.csv", m.rows.len()),
            );
        }
        Command::Baseline => {
            let m = pipeline::run_baseline(&cfg, &ctx)?;
            say(
                g.quiet,
                format!("wrote {} rows to {dir}/baseline_moments.csv", m.rows.len()),
            );
        }
        Command::Fit(input) => {
            let r = pipeline::run_fit(&cfg, &ctx, &input.moments, input.baseline.as_deref())?;
            say(g.quiet, json(&r));
        }
        Command::Fpe { compare } => {
            let s = pipeline::run_fpe(&cfg, &ctx, *compare)?;
            say(g.quiet, json(&s));
        }
        Command::NoiseVerify { exponents } => {
            let verdicts = pipeline::run_noise_verify(&cfg, &ctx, exponents)?;
            for v in &verdicts {
                say(
                    g.quiet,
                    format!(
                        "{} A={} slope={:.4} ± {:.4}",
                        if v.pass { "PASS" } else { "FAIL" },
                        v.a,
                        v.slope,
                        v.slope_se
                    ),
                );
            }
            return Ok(verdicts.iter().all(|v| v.pass));
        }
        Command::Intermittency { e, df } => {
            let r = pipeline::run_intermittency(&ctx, *e, *df)?;
            say(g.quiet, json(&r));
        }
        Command::Reproduce => {
            let r = pipeline::run_reproduce(&cfg, &ctx)?;
            for c in &r.criteria {
                let measured = c.measured.map_or("-".to_string(), |m| format!("{m:.6}"));
                say(
                    g.quiet,
                    format!(
                        "{} [{}] {}: measured {measured}, target {} ± {} {}",
                        if c.pass { "PASS" } else { "FAIL" },
                        c.id,
                        c.name,
                        c.target,
                        c.tolerance,
                        c.detail
                    ),
                );
            }
            for w in &r.warnings {
                say(g.quiet, format!("warning: {w}"));
            }
            say(g.quiet, format!("report: {dir}/report.json"));
            return Ok(r.all_passed);
        }
        Command::PlotData(input) => {
            let n = pipeline::run_plot_data(&cfg, &ctx, &input.moments, input.baseline.as_deref())?;
            say(g.quiet, format!("wrote {n} rows to {dir}/plot_data.csv"));
        }
    }
    Ok(true)
}

/// Exit status when a run completes but a verdict fails.
const VERDICT_FAILED: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(VERDICT_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
