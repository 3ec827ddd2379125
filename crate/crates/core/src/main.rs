use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use overcanopy::field::{generate_field, FieldSpec};
use overcanopy::harness::{run_batch, run_scenario, RunOptions, Scenario};
use overcanopy::Exec;

#[derive(Parser)]
#[command(
    name = "overcanopy",
    version,
    about = "Crop-row navigation simulator and benchmark harness"
)]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write metrics, events and a summary.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write the raw point cloud of dumped ticks as ASCII xyz.
        #[arg(long)]
        dump_clouds: bool,
        /// Write tracked centroids and fitted row segments to centroids.csv and segments.csv.
        #[arg(long)]
        dump_centroids: bool,
        #[arg(long, default_value_t = 1)]
        dump_every: u64,
    },
    /// Run every scenario in a directory and write a summary table.
    Batch {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out/batch")]
        out: PathBuf,
    },
    /// Write the plants of a scenario's field as CSV.
    Field {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    match cli.cmd {
        Cmd::Run {
            scenario,
            seed,
            out,
            dump_clouds,
            dump_centroids,
            dump_every,
        } => {
            let opts = RunOptions {
                seed,
                dump_clouds,
                dump_centroids,
                dump_every,
                exec,
            };
            let report =
                run_scenario(&scenario, &opts, &out).with_context(|| format!("running {}", scenario.display()))?;
            let s = &report.summary;
            println!("{}", serde_json::to_string_pretty(s)?);
            if let Some(f) = &s.fault {
                eprintln!("fault: {f}");
            }
            Ok(s.success())
        }
        Cmd::Batch { dir, seed, out } => {
            let opts = RunOptions {
                seed,
                exec,
                ..RunOptions::default()
            };
            let rows = run_batch(&dir, &opts, &out).with_context(|| format!("batch over {}", dir.display()))?;
            let cell = |p: Option<(f64, f64)>| p.map_or("-".to_string(), |(m, s)| format!("{m:.2} ± {s:.2}"));
            println!(
                "{:<28} {:>5} {:>18} {:>18} {:>18}",
                "scenario", "ok", "dist err (cm)", "ang err (deg)", "cross-track (cm)"
            );
            for r in &rows {
                println!(
                    "{:<28} {:>5} {:>18} {:>18} {:>18}",
                    r.scenario,
                    r.success,
                    cell(r.dist_err_cm),
                    cell(r.ang_err_deg),
                    cell(r.cross_track_cm)
                );
            }
            Ok(rows.iter().all(|r| r.success))
        }
        Cmd::Field { scenario, out } => {
            let spec: FieldSpec = Scenario::load(&scenario)?.field;
            let field = generate_field(&spec)?;
            let f = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            field.write_csv(std::io::BufWriter::new(f))?;
            Ok(true)
        }
    }
}
