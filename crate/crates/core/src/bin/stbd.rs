//! Command-line front end: synthesize data, run single tracks, run grids,
//! summarize and export plot data.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::warn;

use subspace_tbd::experiment::{
    export_plotdata, generate_trial, load_results, load_trials, result_stem, run_grid, run_single, summarize,
    write_particles_csv, write_trajectory_csv, ExperimentConfig, Method,
};

#[derive(Parser)]
#[command(name = "stbd", version, about = "Subspace track-before-detect experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one trial's ground truth and observation tensor.
    Synth(Common),
    /// Run the filter(s) on one trial and write results and trajectories.
    Track(Common),
    /// Run the full SNR x particle-count x trial grid.
    Grid(Common),
    /// Print and write the median/range table of an output directory.
    Summarize(OutOnly),
    /// Write trajectory, RMSE-grid and summary CSVs for an output directory.
    Export(OutOnly),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: paper, desk or smoke.
    #[arg(long)]
    preset: Option<String>,
    /// SNR values in dB (comma separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    /// Particle counts (comma separated).
    #[arg(long, value_delimiter = ',')]
    particles: Option<Vec<usize>>,
    /// Trials per (SNR, particle count) cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Methods: subspace, baseline (comma separated).
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Method>>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trial index used by `synth` and `track`.
    #[arg(long, default_value_t = 0)]
    trial: usize,
    /// Write per-frame particle clouds (`track` only).
    #[arg(long)]
    dump_particles: bool,
}

#[derive(Args)]
struct OutOnly {
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => ExperimentConfig::paper(),
        };
        if let Some(v) = &self.snr {
            cfg.snr_db = v.clone();
        }
        if let Some(v) = &self.particles {
            cfg.particles = v.clone();
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = &self.method {
            cfg.methods = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn synth(args: &Common) -> Result<()> {
    let cfg = args.resolve()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for snr_index in 0..cfg.snr_db.len() {
        let data = generate_trial(&cfg, snr_index, args.trial)?;
        let stem = format!("snr{}_t{}", data.snr_db, data.trial);
        data.observations.write_binary(&out.join(format!("{stem}.obs")))?;
        let record = serde_json::to_string_pretty(&data.record())?;
        fs::write(out.join(format!("{stem}.truth.json")), record)?;
        println!(
            "{stem}: {}x{}x{} tensor, sigma_v^2 {:.6e}, fingerprint {}",
            data.observations.mics(),
            data.observations.bins(),
            data.observations.frames(),
            data.noise.noise_variance,
            data.fingerprint
        );
    }
    Ok(())
}

fn track(args: &Common) -> Result<()> {
    let cfg = args.resolve()?;
    let out = &cfg.output_dir;
    for d in ["results", "trajectories", "particles"] {
        fs::create_dir_all(out.join(d))?;
    }
    for snr_index in 0..cfg.snr_db.len() {
        let data = generate_trial(&cfg, snr_index, args.trial)?;
        let record = data.record();
        for &method in &cfg.methods {
            for &np in &cfg.particles {
                let (result, output) = run_single(&cfg, &data, method, np, args.dump_particles)?;
                let stem = result_stem(&result);
                fs::write(
                    out.join("results").join(format!("{stem}.json")),
                    serde_json::to_string_pretty(&result)? + "\n",
                )?;
                write_trajectory_csv(&out.join("trajectories").join(format!("{stem}.csv")), &result, &record)?;
                if let Some(snaps) = &output.particles {
                    write_particles_csv(&out.join("particles").join(format!("{stem}.csv")), snaps)?;
                }
                println!(
                    "{stem}: rmse {:.4} m, {:.1} s, {} degenerate frames",
                    result.rmse,
                    result.wall_clock_seconds.unwrap_or(0.0),
                    result.degenerate_frames
                );
            }
        }
        fs::create_dir_all(out.join("trials"))?;
        fs::write(
            out.join("trials").join(format!("snr{}_t{}.json", data.snr_db, data.trial)),
            serde_json::to_string_pretty(&record)? + "\n",
        )?;
    }
    Ok(())
}

fn grid(args: &Common) -> Result<()> {
    let cfg = args.resolve()?;
    let results = run_grid(&cfg)?;
    let summary = summarize(&results);
    summary.write_csv(&cfg.output_dir.join("summary.csv"))?;
    for &method in &cfg.methods {
        for &snr in &cfg.snr_db {
            for &np in &cfg.particles {
                if summary.cell(method, snr, np).is_none() {
                    warn!("cell {method} {snr} dB {np} particles produced no result");
                }
            }
        }
    }
    print!("{}", summary.text_table());
    Ok(())
}

fn summarize_dir(out: &Path) -> Result<()> {
    let results = load_results(out)?;
    if results.is_empty() {
        bail!("no results under {}", out.join("results").display());
    }
    let summary = summarize(&results);
    summary.write_csv(&out.join("summary.csv"))?;
    print!("{}", summary.text_table());
    Ok(())
}

fn export(out: &Path) -> Result<()> {
    let results = load_results(out)?;
    let trials = load_trials(out)?;
    let files = export_plotdata(&results, &[], &trials, &out.join("plots"))?;
    println!(
        "wrote {} trajectories, {} and {}",
        files.trajectories.len(),
        files.rmse_grid.display(),
        files.summary.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Track(a) => track(a),
        Command::Grid(a) => grid(a),
        Command::Summarize(a) => summarize_dir(&a.out),
        Command::Export(a) => export(&a.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
