use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use igadd::config::CaseConfig;
use igadd::runner::run_case;

#[derive(Parser)]
#[command(
    name = "igadd",
    version,
    about = "Additive Schwarz IGA solver on overlapping B-spline patches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in case and write its artifacts.
    Solve {
        /// poisson1d, circle_zoom, two_patch_2d, sector_singularity, cubes_chain or dof_stats
        case: String,
        /// Key = value configuration file; flags override its entries.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        overlap: Option<f64>,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        refine: Option<usize>,
        #[arg(long, value_parser = ["exact", "interp"])]
        trace: Option<String>,
        #[arg(long, value_parser = ["ls", "qi"])]
        lift: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn build_config(command: &Command) -> igadd::Result<CaseConfig> {
    let Command::Solve {
        case,
        config,
        overlap,
        degree,
        refine,
        trace,
        lift,
        workers,
        out,
    } = command;
    let mut cfg = match config {
        Some(path) => {
            let cfg = CaseConfig::parse(&std::fs::read_to_string(path)?)?;
            if &cfg.case != case {
                return Err(igadd::Error::Config(format!(
                    "config file is for `{}`, command line asks for `{case}`",
                    cfg.case
                )));
            }
            cfg
        }
        None => CaseConfig::new(case),
    };
    let overrides = [
        ("overlap", overlap.map(|v| v.to_string())),
        ("degree", degree.map(|v| v.to_string())),
        ("refine", refine.map(|v| v.to_string())),
        ("trace", trace.clone()),
        ("lift", lift.clone()),
        ("workers", workers.map(|v| v.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if let Some(dir) = out {
        cfg.out = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("igadd: {e}");
            return ExitCode::from(2);
        }
    };
    match run_case(&config) {
        Ok(report) => {
            match (report.run.as_ref(), report.final_error) {
                (Some(run), Some(err)) => println!(
                    "{}: {} iterations, final max L2 error {err:.3e} (tolerance {:.1e})",
                    report.case, run.iterations, report.tolerance
                ),
                _ => println!("{}: tables written", report.case),
            }
            if let Some(o) = report.fitted_order {
                println!("fitted order {o:.3}");
            }
            if let Some(e) = report.radial_exponent {
                println!("radial exponent {e:.4}");
            }
            println!("artifacts in {}", config.out.display());
            if report.passed {
                println!("PASS");
                ExitCode::SUCCESS
            } else {
                println!("FAIL");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("igadd: {e}");
            ExitCode::from(1)
        }
    }
}
