use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{run_filter, FilterOutput, TrackEstimate};
use crate::rng::{derive_seed, stream};
use crate::scenario::{generate_truth, ActivitySchedule, MultiTargetState, Point};
use crate::synth::{synthesize, NoiseModel, ObservationTensor};

use super::config::{ExperimentConfig, Method};
use super::metrics::rmse;

const TRUTH_STREAM: u64 = 0;
const SYNTH_STREAM: u64 = 1;

/// Seed of the data shared by every method and particle count in a trial.
pub fn trial_seed(master_seed: u64, snr_index: usize, trial: usize) -> u64 {
    derive_seed(master_seed, &[snr_index as u64, trial as u64])
}

/// Seed of one filter run within a trial.
pub fn run_seed(trial_seed: u64, method: Method, n_particles: usize) -> u64 {
    derive_seed(trial_seed, &[method.code(), n_particles as u64])
}

/// Ground truth and observations of one (SNR, trial) pair.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub snr_index: usize,
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    pub activity: ActivitySchedule,
    pub truth: Vec<MultiTargetState>,
    pub observations: ObservationTensor,
    pub noise: NoiseModel,
    pub fingerprint: String,
}

impl TrialData {
    pub fn record(&self) -> TrialRecord {
        TrialRecord {
            snr_db: self.snr_db,
            trial: self.trial,
            seed: self.seed,
            data_fingerprint: self.fingerprint.clone(),
            noise_variance: self.noise.noise_variance,
            truth: (0..self.activity.frames())
                .map(|t| {
                    (0..self.activity.slots())
                        .map(|n| self.activity.is_active(t, n).then(|| self.truth[t].slots[n].position()))
                        .collect()
                })
                .collect(),
        }
    }
}

/// Persisted summary of a trial: true positions on valid pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    pub data_fingerprint: String,
    pub noise_variance: f64,
    pub truth: Vec<Vec<Option<Point>>>,
}

pub fn generate_trial(config: &ExperimentConfig, snr_index: usize, trial: usize) -> Result<TrialData> {
    let snr_db = *config
        .snr_db
        .get(snr_index)
        .ok_or_else(|| Error::InvalidArgument(format!("SNR index {snr_index} out of range")))?;
    let seed = trial_seed(config.master_seed, snr_index, trial);
    let scene = config.scene()?;
    let activity = config.activity_schedule()?;
    let birth = config.birth_model()?;
    let truth = generate_truth(
        &config.room,
        &activity,
        &config.motion,
        &birth,
        &mut stream(seed, &[TRUTH_STREAM]),
        config.truth.max_attempts,
    )?;
    let (observations, noise) = synthesize(
        &truth,
        &activity,
        &scene.mics,
        &scene.grid,
        config.room.speed_of_sound,
        snr_db,
        config.synth.loading,
        &mut stream(seed, &[SYNTH_STREAM]),
    )?;
    let fingerprint = observations.fingerprint()[..16].to_string();
    Ok(TrialData {
        snr_index,
        snr_db,
        trial,
        seed,
        activity,
        truth,
        observations,
        noise,
        fingerprint,
    })
}

/// Outcome of one filter run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_fingerprint: String,
    pub data_fingerprint: String,
    pub method: Method,
    pub snr_db: f64,
    pub n_particles: usize,
    pub trial: usize,
    pub seed: u64,
    pub rmse: f64,
    pub degenerate_frames: usize,
    pub estimates: TrackEstimate,
    /// Not persisted with the result so that result files are reproducible
    /// byte for byte; see `timing.csv` in the output directory.
    #[serde(skip)]
    pub wall_clock_seconds: Option<f64>,
}

/// File stem identifying a grid cell, e.g. `subspace_snr-10_np2000_t0`.
pub fn result_stem(r: &RunResult) -> String {
    cell_stem(r.method, r.snr_db, r.n_particles, r.trial)
}

fn cell_stem(method: Method, snr_db: f64, n_particles: usize, trial: usize) -> String {
    format!("{method}_snr{snr_db}_np{n_particles}_t{trial}")
}

fn trial_stem(snr_db: f64, trial: usize) -> String {
    format!("snr{snr_db}_t{trial}")
}

pub fn run_single(
    config: &ExperimentConfig,
    data: &TrialData,
    method: Method,
    n_particles: usize,
    dump_particles: bool,
) -> Result<(RunResult, FilterOutput)> {
    let scene = config.scene()?;
    let seed = run_seed(data.seed, method, n_particles);
    let filter = config.filter_config(
        method,
        n_particles,
        scene.grid.len(),
        data.noise.noise_variance,
        seed,
        dump_particles,
    )?;
    let start = Instant::now();
    let output = run_filter(&filter, &data.observations, &data.activity, &scene)?;
    let elapsed = start.elapsed().as_secs_f64();
    let result = RunResult {
        config_fingerprint: config.fingerprint(),
        data_fingerprint: data.fingerprint.clone(),
        method,
        snr_db: data.snr_db,
        n_particles,
        trial: data.trial,
        seed,
        rmse: rmse(&data.truth, &output.estimate, &data.activity)?,
        degenerate_frames: output.degenerate_frames(),
        estimates: output.estimate.clone(),
        wall_clock_seconds: Some(elapsed),
    };
    Ok((result, output))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn append_line(path: &Path, header: &str, line: &str) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh {
        writeln!(f, "{header}").map_err(|e| Error::io(path, e))?;
    }
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

fn load_cached(path: &Path, fingerprint: &str) -> Option<RunResult> {
    let text = fs::read_to_string(path).ok()?;
    let r: RunResult = serde_json::from_str(&text).ok()?;
    (r.config_fingerprint == fingerprint).then_some(r)
}

/// Run every (SNR, trial, method, particle count) cell of `config`.
///
/// Within a trial all methods and particle counts see the same truth and
/// observations. Each result is written to `results/<cell>.json` as soon as
/// it completes and appended to `index.csv`; a rerun skips cells whose
/// result file already exists for the same config fingerprint. Wall-clock
/// times go to `timing.csv`.
pub fn run_grid(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    let out = &config.output_dir;
    let results_dir = out.join("results");
    let trials_dir = out.join("trials");
    for d in [&results_dir, &trials_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    write_json(&out.join("config.json"), config)?;
    let fingerprint = config.fingerprint();
    let index = out.join("index.csv");
    let timing = out.join("timing.csv");

    let mut results = Vec::new();
    for (snr_index, &snr_db) in config.snr_db.iter().enumerate() {
        for trial in 0..config.trials {
            let mut data: Option<TrialData> = None;
            for &method in &config.methods {
                for &n_particles in &config.particles {
                    let stem = cell_stem(method, snr_db, n_particles, trial);
                    let path = results_dir.join(format!("{stem}.json"));
                    if let Some(cached) = load_cached(&path, &fingerprint) {
                        info!("{stem}: cached, rmse {:.4}", cached.rmse);
                        results.push(cached);
                        continue;
                    }
                    if data.is_none() {
                        let d = generate_trial(config, snr_index, trial)?;
                        write_json(&trials_dir.join(format!("{}.json", trial_stem(snr_db, trial))), &d.record())?;
                        data = Some(d);
                    }
                    let d = data.as_ref().unwrap();
                    let (result, _) = run_single(config, d, method, n_particles, false)?;
                    info!(
                        "{stem}: rmse {:.4} m in {:.1} s",
                        result.rmse,
                        result.wall_clock_seconds.unwrap_or(0.0)
                    );
                    write_json(&path, &result)?;
                    append_line(
                        &index,
                        "method,snr_db,n_particles,trial,rmse,degenerate_frames,data_fingerprint,file",
                        &format!(
                            "{},{},{},{},{},{},{},results/{stem}.json",
                            method,
                            snr_db,
                            n_particles,
                            trial,
                            result.rmse,
                            result.degenerate_frames,
                            result.data_fingerprint
                        ),
                    )?;
                    append_line(
                        &timing,
                        "file,wall_clock_seconds",
                        &format!("results/{stem}.json,{:.3}", result.wall_clock_seconds.unwrap_or(0.0)),
                    )?;
                    results.push(result);
                }
            }
        }
    }
    Ok(results)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// All result files under `<out>/results`, sorted by file name.
pub fn load_results(out: &Path) -> Result<Vec<RunResult>> {
    json_files(&out.join("results"))?
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::format(&p, e.to_string()))
        })
        .collect()
}

/// All trial records under `<out>/trials`.
pub fn load_trials(out: &Path) -> Result<Vec<TrialRecord>> {
    json_files(&out.join("trials"))?
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::format(&p, e.to_string()))
        })
        .collect()
}
