//! Auxiliary particle filter over fixed target slots with a given activity
//! schedule.
//!
//! Each step: score a noiseless predictive point per particle, resample
//! ancestors systematically on those first-stage weights, propagate the
//! ancestors through the motion and birth models, then correct with the
//! ratio of full to predictive scores. All weights live in the log domain.
//!
//! Randomness is drawn from per-particle streams keyed by `(seed, frame,
//! particle)`, so results do not depend on the rayon worker count.

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{BoundaryParams, FrameScorer, LikelihoodKind, Scene, StateScore};
use crate::rng::stream;
use crate::scenario::{sample_birth, ActivitySchedule, BirthModel, KinematicState, MotionModel, MultiTargetState, Point};
use crate::synth::ObservationTensor;

const RESAMPLE_STREAM: u64 = 0;
const PROPAGATE_STREAM: u64 = 1;

/// Weighted multi-target hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub states: Vec<MultiTargetState>,
    pub log_weights: Vec<f64>,
}

impl ParticleEnsemble {
    /// Uniformly weighted ensemble over `states`.
    pub fn uniform(states: Vec<MultiTargetState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidArgument("ensemble needs at least one particle".into()));
        }
        let lw = -(states.len() as f64).ln();
        let n = states.len();
        Ok(Self {
            states,
            log_weights: vec![lw; n],
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Linear-domain weights; sums to one after [`normalize_log_weights`].
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights().iter().map(|w| w * w).sum::<f64>()
    }
}

/// Shifts `log_w` in place so that `sum exp(log_w) = 1`. NaN entries count
/// as `-inf`. Returns `false`, leaving uniform weights, when no entry is
/// finite.
pub fn normalize_log_weights(log_w: &mut [f64]) -> bool {
    for w in log_w.iter_mut() {
        if w.is_nan() || *w == f64::INFINITY {
            // +inf cannot be ranked against other particles either
            *w = f64::NEG_INFINITY;
        }
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        let u = -(log_w.len() as f64).ln();
        log_w.iter_mut().for_each(|w| *w = u);
        return false;
    }
    let lse = max + log_w.iter().map(|w| (w - max).exp()).sum::<f64>().ln();
    log_w.iter_mut().for_each(|w| *w -= lse);
    true
}

/// Systematic resampling: `count` ancestor indices, nondecreasing, with
/// particle `k` drawn `floor(count w_k)` or `ceil(count w_k)` times.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Result<Vec<usize>> {
    systematic_resample_with_offset(weights, count, rng.random::<f64>())
}

/// [`systematic_resample`] with an explicit uniform offset `u` in `[0, 1)`.
pub fn systematic_resample_with_offset(weights: &[f64], count: usize, u: f64) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("no weights to resample".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, expected 1")));
    }
    if !(0.0..1.0).contains(&u) {
        return Err(Error::InvalidArgument(format!("offset {u} outside [0, 1)")));
    }
    let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap();
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w / total;
        cumulative.push(if k >= last_positive { 1.0 } else { acc });
    }
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for i in 0..count {
        let pos = (u + i as f64) / count as f64;
        while pos >= cumulative[j] && j < last_positive {
            j += 1;
        }
        out.push(j);
    }
    Ok(out)
}

/// Noiseless predictive point used for first-stage weights: NCV drift for
/// surviving slots, birth mean for newborn slots, unchanged otherwise.
pub fn predictive_point(
    state: &MultiTargetState,
    active_prev: &[bool],
    active_now: &[bool],
    motion: &MotionModel,
    birth: &BirthModel,
) -> MultiTargetState {
    let slots = state
        .slots
        .iter()
        .zip(active_prev.iter().zip(active_now))
        .map(|(s, (&prev, &now))| match (prev, now) {
            (true, true) => motion.predict(s),
            (false, true) => birth.mean(),
            _ => *s,
        })
        .collect();
    MultiTargetState { slots }
}

/// One stochastic transition: NCV for survivors, birth draw for newborns,
/// invalid slots untouched.
pub fn propagate<R: Rng + ?Sized>(
    state: &MultiTargetState,
    active_prev: &[bool],
    active_now: &[bool],
    motion: &MotionModel,
    birth: &BirthModel,
    rng: &mut R,
) -> MultiTargetState {
    let slots = state
        .slots
        .iter()
        .zip(active_prev.iter().zip(active_now))
        .map(|(s, (&prev, &now))| match (prev, now) {
            (true, true) => motion.sample(s, rng),
            (false, true) => sample_birth(birth, rng),
            _ => *s,
        })
        .collect();
    MultiTargetState { slots }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub ancestors: Vec<usize>,
    pub effective_sample_size: f64,
    /// First- or second-stage weights had no finite entry and were reset to
    /// uniform.
    pub degenerate: bool,
}

/// Advance `ensemble` by one frame. `score` must include the boundary factor.
#[allow(clippy::too_many_arguments)]
pub fn apf_step<S: StateScore + ?Sized>(
    ensemble: &mut ParticleEnsemble,
    score: &S,
    active_prev: &[bool],
    active_now: &[bool],
    motion: &MotionModel,
    birth: &BirthModel,
    seed: u64,
    frame: usize,
) -> Result<StepReport> {
    let n = ensemble.len();
    let n_slots = active_now.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    if active_prev.len() != n_slots || ensemble.states.iter().any(|s| s.len() != n_slots) {
        return Err(Error::DimensionMismatch("slot count differs between ensemble and activity".into()));
    }

    let predictive_scores: Vec<f64> = ensemble
        .states
        .par_iter()
        .map(|s| score.log_score(&predictive_point(s, active_prev, active_now, motion, birth)))
        .collect();
    let mut first_stage: Vec<f64> = ensemble
        .log_weights
        .iter()
        .zip(&predictive_scores)
        .map(|(w, l)| w + l)
        .collect();
    let first_ok = normalize_log_weights(&mut first_stage);
    let first_weights: Vec<f64> = first_stage.iter().map(|w| w.exp()).collect();
    let mut resample_rng = stream(seed, &[frame as u64, RESAMPLE_STREAM]);
    let ancestors = systematic_resample(&first_weights, n, &mut resample_rng)?;

    let propagated: Vec<(MultiTargetState, f64)> = ancestors
        .par_iter()
        .enumerate()
        .map(|(k, &a)| {
            let mut rng = stream(seed, &[frame as u64, PROPAGATE_STREAM, k as u64]);
            let x = propagate(&ensemble.states[a], active_prev, active_now, motion, birth, &mut rng);
            let full = score.log_score(&x);
            let correction = if first_ok { predictive_scores[a] } else { 0.0 };
            (x, full - correction)
        })
        .collect();

    let (states, mut log_weights): (Vec<_>, Vec<_>) = propagated.into_iter().unzip();
    let second_ok = normalize_log_weights(&mut log_weights);
    ensemble.states = states;
    ensemble.log_weights = log_weights;
    Ok(StepReport {
        ancestors,
        effective_sample_size: ensemble.effective_sample_size(),
        degenerate: !(first_ok && second_ok),
    })
}

/// Weighted mean of each valid slot; `None` for invalid slots.
pub fn mmse_estimate(ensemble: &ParticleEnsemble, active: &[bool]) -> Vec<Option<KinematicState>> {
    let weights = ensemble.weights();
    let total: f64 = weights.iter().sum();
    active
        .iter()
        .enumerate()
        .map(|(n, &a)| {
            a.then(|| {
                let mut acc = [0.0; 4];
                for (s, w) in ensemble.states.iter().zip(&weights) {
                    for (o, v) in acc.iter_mut().zip(s.slots[n].as_array()) {
                        *o += w * v;
                    }
                }
                KinematicState::from_array(acc.map(|v| v / total))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub n_particles: usize,
    pub likelihood: LikelihoodKind,
    pub motion: MotionModel,
    pub birth: BirthModel,
    pub boundary: BoundaryParams,
    pub seed: u64,
    #[serde(default)]
    pub dump_particles: bool,
}

/// Per-frame, per-slot estimates; `None` exactly on invalid pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackEstimate {
    pub frames: Vec<Vec<Option<KinematicState>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub effective_sample_size: f64,
    pub degenerate: bool,
}

/// Particle positions after the weight update of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSnapshot {
    pub frame: usize,
    /// `positions[slot][particle]`; empty for invalid slots.
    pub positions: Vec<Vec<Point>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub estimate: TrackEstimate,
    pub diagnostics: Vec<FrameDiagnostics>,
    pub particles: Option<Vec<ParticleSnapshot>>,
}

impl FilterOutput {
    pub fn degenerate_frames(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.degenerate).count()
    }
}

/// Run the filter over every frame of `observations`.
///
/// Particles start as placeholders with uniform weights; slots valid at
/// frame 0 are born in the first step and immediately weighted against the
/// first observation.
pub fn run_filter(
    config: &FilterConfig,
    observations: &ObservationTensor,
    activity: &ActivitySchedule,
    scene: &Scene,
) -> Result<FilterOutput> {
    if config.n_particles == 0 {
        return Err(Error::InvalidArgument("n_particles must be at least 1".into()));
    }
    if observations.mics() != scene.mics.len()
        || observations.bins() != scene.grid.len()
        || observations.frames() != activity.frames()
    {
        return Err(Error::InvalidArgument(format!(
            "observations are {}x{}x{}, scene and schedule expect {}x{}x{}",
            observations.mics(),
            observations.bins(),
            observations.frames(),
            scene.mics.len(),
            scene.grid.len(),
            activity.frames()
        )));
    }
    let n_slots = activity.slots();
    let mut ensemble =
        ParticleEnsemble::uniform(vec![MultiTargetState::zeros(n_slots); config.n_particles])?;
    let mut estimate = TrackEstimate::default();
    let mut diagnostics = Vec::with_capacity(activity.frames());
    let mut particles = config.dump_particles.then(Vec::new);

    for t in 0..activity.frames() {
        let prev = activity.previous_row(t);
        let now = activity.row(t);
        let scorer = FrameScorer::new(scene, &config.likelihood, config.boundary, observations.frame(t), now)?;
        let report = apf_step(
            &mut ensemble,
            &scorer,
            &prev,
            now,
            &config.motion,
            &config.birth,
            config.seed,
            t,
        )?;
        if report.degenerate {
            warn!("frame {t}: all particle weights vanished; reset to uniform");
        }
        diagnostics.push(FrameDiagnostics {
            effective_sample_size: report.effective_sample_size,
            degenerate: report.degenerate,
        });
        estimate.frames.push(mmse_estimate(&ensemble, now));
        if let Some(dump) = particles.as_mut() {
            dump.push(ParticleSnapshot {
                frame: t,
                positions: (0..n_slots)
                    .map(|n| {
                        if now[n] {
                            ensemble.states.iter().map(|s| s.slots[n].position()).collect()
                        } else {
                            Vec::new()
                        }
                    })
                    .collect(),
                weights: ensemble.weights(),
            });
        }
    }
    Ok(FilterOutput {
        estimate,
        diagnostics,
        particles,
    })
}
