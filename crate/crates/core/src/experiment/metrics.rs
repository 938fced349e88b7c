use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::TrackEstimate;
use crate::scenario::{ActivitySchedule, MultiTargetState};

use super::config::Method;
use super::grid::RunResult;

/// Position RMSE over the valid (frame, slot) pairs.
///
/// `estimate` must be defined on exactly the valid pairs.
pub fn rmse(truth: &[MultiTargetState], estimate: &TrackEstimate, activity: &ActivitySchedule) -> Result<f64> {
    if truth.len() != activity.frames() || estimate.frames.len() != activity.frames() {
        return Err(Error::DimensionMismatch(format!(
            "{} truth frames, {} estimated frames, {} scheduled frames",
            truth.len(),
            estimate.frames.len(),
            activity.frames()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..activity.frames() {
        if estimate.frames[t].len() != activity.slots() {
            return Err(Error::DimensionMismatch(format!("frame {t} has the wrong slot count")));
        }
        for n in 0..activity.slots() {
            match (activity.is_active(t, n), &estimate.frames[t][n]) {
                (true, Some(est)) => {
                    let p = truth[t].slots[n];
                    sum += (est.px - p.px).powi(2) + (est.py - p.py).powi(2);
                    count += 1;
                }
                (false, None) => {}
                (true, None) => {
                    return Err(Error::DimensionMismatch(format!("no estimate for valid pair ({t}, {n})")))
                }
                (false, Some(_)) => {
                    return Err(Error::DimensionMismatch(format!("estimate for invalid pair ({t}, {n})")))
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::UndefinedMetric);
    }
    Ok((sum / count as f64).sqrt())
}

/// Median with the mean-of-middle convention for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub method: Method,
    pub snr_db: f64,
    pub n_particles: usize,
    pub trials: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    /// Sorted by SNR, then particle count, then method.
    pub cells: Vec<CellSummary>,
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    snr: OrdF64,
    n_particles: usize,
    method: Method,
}

struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Per-(method, SNR, particle count) median and range of RMSE over trials.
/// Non-finite RMSEs are dropped with a warning; cells left empty are omitted.
pub fn summarize(results: &[RunResult]) -> Summary {
    let mut cells: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for r in results {
        let key = CellKey {
            snr: OrdF64(r.snr_db),
            n_particles: r.n_particles,
            method: r.method,
        };
        let entry = cells.entry(key).or_default();
        if r.rmse.is_finite() {
            entry.push(r.rmse);
        } else {
            log::warn!("dropping non-finite RMSE of {}", super::grid::result_stem(r));
        }
    }
    let cells = cells
        .into_iter()
        .filter_map(|(k, v)| {
            let Some(med) = median(&v) else {
                log::warn!(
                    "cell {} {} dB {} particles has no results; omitted",
                    k.method,
                    k.snr.0,
                    k.n_particles
                );
                return None;
            };
            Some(CellSummary {
                method: k.method,
                snr_db: k.snr.0,
                n_particles: k.n_particles,
                trials: v.len(),
                median: med,
                min: v.iter().cloned().fold(f64::INFINITY, f64::min),
                max: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect();
    Summary { cells }
}

impl Summary {
    pub fn cell(&self, method: Method, snr_db: f64, n_particles: usize) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.snr_db == snr_db && c.n_particles == n_particles)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        for c in &self.cells {
            w.serialize(c).map_err(|e| Error::io(path, e.into()))?;
        }
        if self.cells.is_empty() {
            w.write_record(["method", "snr_db", "n_particles", "trials", "median", "min", "max"])
                .map_err(|e| Error::io(path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Aligned text table with one row per (SNR, particle count): baseline
    /// median, subspace median and subspace min-max range.
    pub fn text_table(&self) -> String {
        let mut rows: Vec<(f64, usize)> = self.cells.iter().map(|c| (c.snr_db, c.n_particles)).collect();
        rows.dedup();
        let mut out = String::new();
        let _ = writeln!(out, "{:>6} {:>6} {:>8} {:>8} {:>17}", "SNR", "n_p", "Conv.", "Prop.", "Prop. range");
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        for (snr, np) in rows {
            let conv = self.cell(Method::Baseline, snr, np);
            let prop = self.cell(Method::Subspace, snr, np);
            let range = prop.map_or_else(|| "-".to_string(), |p| format!("{:.4}--{:.4}", p.min, p.max));
            let _ = writeln!(
                out,
                "{:>6} {:>6} {:>8} {:>8} {:>17}",
                snr,
                np,
                fmt(conv.map(|c| c.median)),
                fmt(prop.map(|c| c.median)),
                range
            );
        }
        out
    }
}
