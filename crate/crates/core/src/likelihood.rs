//! Observation likelihoods and the soft room-boundary factor, all in the log
//! domain.
//!
//! The subspace likelihood is a product over bins of complex Bingham
//! densities with parameter `kappa_f P_f`, where `P_f` projects onto the span
//! of the valid slots' steering vectors. Its normalizing constant depends
//! only on the rank of `P_f`, which is fixed by the activity pattern, so
//! values returned here are log-likelihoods up to an activity-dependent
//! constant. [`FrameScorer`] binds one activity row so that only hypotheses
//! sharing it are ever compared.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{MicArray, MultiTargetState, RoomConfig};
use crate::wavefield::{projection_energy, steering_bank_into, FrequencyGrid, Projector};

/// Norm below which an observation bin is treated as empty.
pub const MIN_BIN_NORM: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinghamParams {
    pub kappa: Vec<f64>,
}

impl BinghamParams {
    pub fn new(kappa: Vec<f64>) -> Result<Self> {
        if kappa.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::InvalidArgument("kappa must be positive".into()));
        }
        Ok(Self { kappa })
    }

    pub fn uniform(bins: usize, kappa: f64) -> Result<Self> {
        Self::new(vec![kappa; bins])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub sigma_v2: f64,
}

impl BaselineParams {
    pub fn new(sigma_v2: f64) -> Result<Self> {
        if !(sigma_v2.is_finite() && sigma_v2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {sigma_v2}"
            )));
        }
        Ok(Self { sigma_v2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParams {
    pub tau: f64,
}

impl BoundaryParams {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { tau })
    }
}

/// Unit-norm observation bins of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFrame {
    mics: usize,
    data: Vec<Complex64>,
    valid: Vec<bool>,
}

impl NormalizedFrame {
    pub fn mics(&self) -> usize {
        self.mics
    }

    pub fn bins(&self) -> usize {
        self.valid.len()
    }

    pub fn column(&self, f: usize) -> &[Complex64] {
        &self.data[f * self.mics..(f + 1) * self.mics]
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }
}

/// Scales each `M`-sample bin of `frame` (bin-major, `F * M` samples) to
/// unit 2-norm. Bins with norm below [`MIN_BIN_NORM`] are flagged invalid and
/// left at zero.
pub fn normalize_frame(frame: &[Complex64], mics: usize) -> NormalizedFrame {
    assert!(mics > 0 && frame.len().is_multiple_of(mics), "frame length is not a multiple of M");
    let mut data = frame.to_vec();
    let valid = data
        .chunks_exact_mut(mics)
        .map(|col| {
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < MIN_BIN_NORM || !norm.is_finite() {
                col.iter_mut().for_each(|z| *z = Complex64::default());
                false
            } else {
                let inv = 1.0 / norm;
                col.iter_mut().for_each(|z| *z *= inv);
                true
            }
        })
        .collect();
    NormalizedFrame { mics, data, valid }
}

/// `sum_f kappa_f ||P_f z_f||^2` over valid bins.
pub fn subspace_loglik(z: &NormalizedFrame, projectors: &[Projector], params: &BinghamParams) -> f64 {
    assert_eq!(projectors.len(), z.bins(), "one projector per bin");
    assert_eq!(params.kappa.len(), z.bins(), "one kappa per bin");
    (0..z.bins())
        .filter(|&f| z.valid[f])
        .map(|f| params.kappa[f] * projectors[f].energy(z.column(f)))
        .sum()
}

/// `-sum_f ||z~_f - predicted_f||^2 / sigma_v^2`, both bin-major `F * M`.
pub fn baseline_loglik(raw: &[Complex64], predicted: &[Complex64], params: &BaselineParams) -> f64 {
    assert_eq!(raw.len(), predicted.len());
    let sse: f64 = raw.iter().zip(predicted).map(|(z, p)| (z - p).norm_sqr()).sum();
    -sse / params.sigma_v2
}

/// `sum over valid slots of -d^2 / tau^2`, `d` the distance outside the room.
pub fn boundary_log_factor(
    state: &MultiTargetState,
    active: &[bool],
    room: &RoomConfig,
    params: &BoundaryParams,
) -> f64 {
    let inv = 1.0 / (params.tau * params.tau);
    state
        .active_positions(active)
        .map(|p| {
            let d = room.distance_outside(p);
            -d * d * inv
        })
        .sum()
}

/// Which observation model the filter scores hypotheses with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum LikelihoodKind {
    Subspace(BinghamParams),
    Baseline(BaselineParams),
}

impl LikelihoodKind {
    pub fn name(&self) -> &'static str {
        match self {
            LikelihoodKind::Subspace(_) => "subspace",
            LikelihoodKind::Baseline(_) => "baseline",
        }
    }
}

/// Full log score of a multi-target hypothesis: log-likelihood plus boundary
/// log factor.
pub trait StateScore: Sync {
    fn log_score(&self, state: &MultiTargetState) -> f64;
}

impl<F: Fn(&MultiTargetState) -> f64 + Sync> StateScore for F {
    fn log_score(&self, state: &MultiTargetState) -> f64 {
        self(state)
    }
}

/// Static description of the sensing geometry.
#[derive(Debug, Clone)]
pub struct Scene {
    pub room: RoomConfig,
    pub mics: MicArray,
    pub grid: FrequencyGrid,
    pub cond_threshold: f64,
}

enum FrameData {
    Subspace { z: NormalizedFrame, kappa: Vec<f64> },
    Baseline { raw: Vec<Complex64>, sigma_v2: f64 },
}

/// Scores hypotheses against one observation frame under a fixed activity row.
///
/// A hypothesis placing a valid slot within the steering near-field guard of
/// a microphone scores `-inf`.
pub struct FrameScorer<'a> {
    scene: &'a Scene,
    active: Vec<bool>,
    boundary: BoundaryParams,
    data: FrameData,
}

impl<'a> FrameScorer<'a> {
    pub fn new(
        scene: &'a Scene,
        kind: &LikelihoodKind,
        boundary: BoundaryParams,
        frame: &[Complex64],
        active: &[bool],
    ) -> Result<Self> {
        let (m, f) = (scene.mics.len(), scene.grid.len());
        if frame.len() != m * f {
            return Err(Error::DimensionMismatch(format!(
                "frame has {} samples, expected {m}x{f}",
                frame.len()
            )));
        }
        let data = match kind {
            LikelihoodKind::Subspace(p) => {
                if p.kappa.len() != f {
                    return Err(Error::DimensionMismatch(format!(
                        "{} kappa values for {f} bins",
                        p.kappa.len()
                    )));
                }
                FrameData::Subspace {
                    z: normalize_frame(frame, m),
                    kappa: p.kappa.clone(),
                }
            }
            LikelihoodKind::Baseline(p) => FrameData::Baseline {
                raw: frame.to_vec(),
                sigma_v2: p.sigma_v2,
            },
        };
        Ok(Self {
            scene,
            active: active.to_vec(),
            boundary,
            data,
        })
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Log-likelihood without the boundary factor.
    pub fn log_likelihood(&self, state: &MultiTargetState) -> f64 {
        let (m, n_bins) = (self.scene.mics.len(), self.scene.grid.len());
        let positions: Vec<_> = state.active_positions(&self.active).collect();
        let k = positions.len();
        let mut bank = vec![Complex64::default(); k * n_bins * m];
        for (p, chunk) in positions.iter().zip(bank.chunks_exact_mut(n_bins * m)) {
            let c = self.scene.room.speed_of_sound;
            if steering_bank_into(&self.scene.mics, *p, &self.scene.grid, c, chunk).is_err() {
                return f64::NEG_INFINITY;
            }
        }
        let column = |slot: usize, f: usize| {
            let start = (slot * n_bins + f) * m;
            &bank[start..start + m]
        };
        match &self.data {
            FrameData::Subspace { z, kappa } => {
                let mut total = 0.0;
                let mut cols: Vec<&[Complex64]> = Vec::with_capacity(k);
                for f in 0..n_bins {
                    if !z.valid[f] {
                        continue;
                    }
                    cols.clear();
                    cols.extend((0..k).map(|s| column(s, f)));
                    total += kappa[f] * projection_energy(&cols, z.column(f), self.scene.cond_threshold);
                }
                total
            }
            FrameData::Baseline { raw, sigma_v2 } => {
                // Residual of the superposition, accumulated slot by slot.
                let mut residual = raw.clone();
                for chunk in bank.chunks_exact(n_bins * m) {
                    for (r, h) in residual.iter_mut().zip(chunk) {
                        *r -= h;
                    }
                }
                -residual.iter().map(|r| r.norm_sqr()).sum::<f64>() / sigma_v2
            }
        }
    }
}

impl StateScore for FrameScorer<'_> {
    fn log_score(&self, state: &MultiTargetState) -> f64 {
        let b = boundary_log_factor(state, &self.active, &self.scene.room, &self.boundary);
        b + self.log_likelihood(state)
    }
}
