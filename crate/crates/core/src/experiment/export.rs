use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::filter::ParticleSnapshot;

use super::config::Method;
use super::grid::{result_stem, RunResult, TrialRecord};
use super::metrics::summarize;

/// Paths written by [`export_plotdata`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotFiles {
    pub trajectories: Vec<PathBuf>,
    pub particles: Vec<PathBuf>,
    pub rmse_grid: PathBuf,
    pub summary: PathBuf,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// `frame,slot,true_x,true_y,est_x,est_y`, one row per valid (frame, slot)
/// ordered by slot then frame.
pub fn write_trajectory_csv(path: &Path, result: &RunResult, trial: &TrialRecord) -> Result<()> {
    if trial.truth.len() != result.estimates.frames.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} has {} frames, its trial record {}",
            result_stem(result),
            result.estimates.frames.len(),
            trial.truth.len()
        )));
    }
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["frame", "slot", "true_x", "true_y", "est_x", "est_y"]).map_err(io)?;
    let slots = trial.truth.first().map_or(0, |r| r.len());
    for n in 0..slots {
        for (t, (truth, est)) in trial.truth.iter().zip(&result.estimates.frames).enumerate() {
            if let (Some(p), Some(e)) = (truth[n], est[n]) {
                w.write_record([
                    t.to_string(),
                    n.to_string(),
                    fmt(p[0]),
                    fmt(p[1]),
                    fmt(e.px),
                    fmt(e.py),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `frame,slot,particle,x,y,weight` for every valid slot of every snapshot.
pub fn write_particles_csv(path: &Path, snapshots: &[ParticleSnapshot]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["frame", "slot", "particle", "x", "y", "weight"]).map_err(io)?;
    for snap in snapshots {
        for (n, cloud) in snap.positions.iter().enumerate() {
            for (k, p) in cloud.iter().enumerate() {
                w.write_record([
                    snap.frame.to_string(),
                    n.to_string(),
                    k.to_string(),
                    fmt(p[0]),
                    fmt(p[1]),
                    fmt(snap.weights[k]),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes plot-ready CSVs into `out_dir`:
///
/// * `trajectories/<cell>.csv` for each result whose trial record is given,
/// * `particles/<cell>.csv` for each particle dump,
/// * `rmse_grid.csv`: one row per (method, SNR, particle count), one RMSE
///   column per trial,
/// * `summary.csv`: median and range per cell.
pub fn export_plotdata(
    results: &[RunResult],
    particle_dumps: &[(String, Vec<ParticleSnapshot>)],
    trials: &[TrialRecord],
    out_dir: &Path,
) -> Result<PlotFiles> {
    let traj_dir = out_dir.join("trajectories");
    let part_dir = out_dir.join("particles");
    for d in [out_dir, &traj_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut files = PlotFiles::default();

    for r in results {
        let trial = trials
            .iter()
            .find(|t| t.data_fingerprint == r.data_fingerprint && t.trial == r.trial && t.snr_db == r.snr_db);
        match trial {
            Some(trial) => {
                let path = traj_dir.join(format!("{}.csv", result_stem(r)));
                write_trajectory_csv(&path, r, trial)?;
                files.trajectories.push(path);
            }
            None => log::warn!("no trial record for {}; trajectory skipped", result_stem(r)),
        }
    }

    if !particle_dumps.is_empty() {
        fs::create_dir_all(&part_dir).map_err(|e| Error::io(&part_dir, e))?;
    }
    for (stem, snaps) in particle_dumps {
        let path = part_dir.join(format!("{stem}.csv"));
        write_particles_csv(&path, snaps)?;
        files.particles.push(path);
    }

    let n_trials = results.iter().map(|r| r.trial + 1).max().unwrap_or(0);
    let mut grid: BTreeMap<(Method, u64, usize), Vec<Option<f64>>> = BTreeMap::new();
    for r in results {
        grid.entry((r.method, r.snr_db.to_bits(), r.n_particles))
            .or_insert_with(|| vec![None; n_trials])[r.trial] = Some(r.rmse);
    }
    let mut sorted: Vec<_> = results
        .iter()
        .map(|r| (r.method, r.snr_db, r.n_particles))
        .collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    sorted.dedup();

    let path = out_dir.join("rmse_grid.csv");
    let mut w = csv_writer(&path)?;
    let io = |e: csv::Error| Error::io(&path, e.into());
    let mut header = vec!["method".to_string(), "snr_db".into(), "n_particles".into()];
    header.extend((0..n_trials).map(|k| format!("trial_{k}")));
    w.write_record(&header).map_err(io)?;
    for (method, snr, np) in sorted {
        let row = &grid[&(method, snr.to_bits(), np)];
        let mut rec = vec![method.to_string(), fmt(snr), np.to_string()];
        rec.extend(row.iter().map(|v| v.map(fmt).unwrap_or_default()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    files.rmse_grid = path;

    let path = out_dir.join("summary.csv");
    summarize(results).write_csv(&path)?;
    files.summary = path;
    Ok(files)
}
