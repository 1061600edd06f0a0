use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lodlab_cli::{diagnose, run, ExperimentConfig};

#[derive(Parser)]
#[command(name = "lodlab", version, about = "LOD multiscale sweeps for high-contrast coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relative energy errors of the localized method over a parameter sweep
    Run(Overrides),
    /// Quasi-monotonicity, Poincaré and QI3 estimates per coarse triangle, and
    /// corrector decay profiles
    Diagnose(Overrides),
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: PathBuf,
    /// blocks, channels or raster
    #[arg(long)]
    experiment: Option<String>,
    /// comma-separated contrasts
    #[arg(long)]
    beta: Option<String>,
    /// comma-separated coarse subdivisions
    #[arg(long = "nH")]
    n_coarse: Option<String>,
    #[arg(long = "nh")]
    n_fine: Option<String>,
    /// fixed list, `tied`, `theory` or `global`
    #[arg(long)]
    k: Option<String>,
    /// comma-separated: clement, pu-clement, aw-clement, proj, aw-proj
    #[arg(long)]
    operator: Option<String>,
    /// half-step, spe-corners or a RASTER file
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    workers: Option<String>,
}

impl Overrides {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        let pairs = [
            ("experiment", &self.experiment),
            ("beta", &self.beta),
            ("n_H", &self.n_coarse),
            ("n_h", &self.n_fine),
            ("k", &self.k),
            ("operator", &self.operator),
            ("source", &self.source),
            ("out", &self.out),
            ("workers", &self.workers),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v).with_context(|| format!("--{key} {v}"))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn decay_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_decay.csv"))
}

fn main_inner(cli: Cli) -> Result<usize> {
    match cli.command {
        Command::Run(o) => {
            let cfg = o.load()?;
            let report = run(&cfg)?;
            report.write_csv(sink(cfg.out.as_deref())?)?;
            eprintln!("{} rows, {} failed", report.rows.len(), report.failed_rows());
            Ok(report.failed_rows())
        }
        Command::Diagnose(o) => {
            let cfg = o.load()?;
            let d = diagnose(&cfg)?;
            match &cfg.out {
                Some(p) => {
                    d.write_triangles(sink(Some(p))?)?;
                    d.write_decay(sink(Some(&decay_path(p)))?)?;
                }
                None => {
                    d.write_triangles(io::stdout().lock())?;
                    println!();
                    d.write_decay(io::stdout().lock())?;
                }
            }
            eprintln!("{} triangle rows, {} decay rows, {} failed", d.triangles.len(), d.decay.len(), d.failed_rows());
            Ok(d.failed_rows())
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
