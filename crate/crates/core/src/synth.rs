//! STFT-domain observation synthesis.
//!
//! Each (frame, bin) observation is the spherical-wave mixture of unit-variance
//! circular complex Gaussian source coefficients of the valid slots plus
//! diffuse-field sensor noise whose inter-microphone covariance follows
//! `sinc(2 pi f r / c)`. The noise is post-scaled so the realized SNR over the
//! generated tensors equals the requested value exactly.
//!
//! SNR convention: `10 log10(P_sig / P_noise)` where both powers are mean
//! squared magnitudes over every (mic, bin, frame) entry of frames with at
//! least one valid slot.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scenario::{ActivitySchedule, MicArray, MultiTargetState};
use crate::wavefield::{steering, FrequencyGrid};

/// Default diagonal loading, relative to the largest diagonal entry.
pub const DEFAULT_LOADING: f64 = 1e-6;
/// Loading is escalated x10 per failed factorization up to this value.
pub const MAX_LOADING: f64 = 1e-2;

const DUMP_MAGIC: &[u8; 8] = b"STBDOBS1";

/// Complex `M x F x T` sensor data, stored frame-major then bin-major so
/// that each `(t, f)` column of `M` samples is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTensor {
    mics: usize,
    bins: usize,
    frames: usize,
    data: Vec<Complex64>,
}

impl ObservationTensor {
    pub fn zeros(mics: usize, bins: usize, frames: usize) -> Self {
        Self {
            mics,
            bins,
            frames,
            data: vec![Complex64::default(); mics * bins * frames],
        }
    }

    pub fn from_vec(mics: usize, bins: usize, frames: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != mics * bins * frames {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {mics}x{bins}x{frames} tensor",
                data.len()
            )));
        }
        Ok(Self {
            mics,
            bins,
            frames,
            data,
        })
    }

    pub fn mics(&self) -> usize {
        self.mics
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// All bins of frame `t`, `F * M` samples.
    pub fn frame(&self, t: usize) -> &[Complex64] {
        let n = self.mics * self.bins;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn column(&self, t: usize, f: usize) -> &[Complex64] {
        let start = (t * self.bins + f) * self.mics;
        &self.data[start..start + self.mics]
    }

    fn column_mut(&mut self, t: usize, f: usize) -> &mut [Complex64] {
        let start = (t * self.bins + f) * self.mics;
        &mut self.data[start..start + self.mics]
    }

    /// SHA-256 over the little-endian sample bytes and dimensions, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for d in [self.mics, self.bins, self.frames] {
            h.update((d as u64).to_le_bytes());
        }
        for z in &self.data {
            h.update(z.re.to_le_bytes());
            h.update(z.im.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Flat binary dump: 8-byte magic `STBDOBS1`, then `M`, `F`, `T` as
    /// little-endian `u64`, then interleaved little-endian `f64` re/im pairs
    /// in frame, bin, microphone order (microphone fastest).
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        write(DUMP_MAGIC)?;
        for d in [self.mics, self.bins, self.frames] {
            write(&(d as u64).to_le_bytes())?;
        }
        for z in &self.data {
            write(&z.re.to_le_bytes())?;
            write(&z.im.to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != DUMP_MAGIC {
            return Err(Error::format(path, "bad magic"));
        }
        let mut word = [0u8; 8];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut word).map_err(|e| Error::io(path, e))?;
            *d = usize::try_from(u64::from_le_bytes(word))
                .map_err(|_| Error::format(path, "dimension overflow"))?;
        }
        let [mics, bins, frames] = dims;
        let n = mics
            .checked_mul(bins)
            .and_then(|x| x.checked_mul(frames))
            .ok_or_else(|| Error::format(path, "dimension overflow"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() != n * 16 {
            return Err(Error::format(
                path,
                format!("expected {} payload bytes, found {}", n * 16, bytes.len()),
            ));
        }
        let f = |c: &[u8]| f64::from_le_bytes(c.try_into().unwrap());
        let data = bytes
            .chunks_exact(16)
            .map(|c| Complex64::new(f(&c[..8]), f(&c[8..])))
            .collect();
        Self::from_vec(mics, bins, frames, data)
    }
}

/// Sensor-noise description returned by [`synthesize`].
#[derive(Debug, Clone)]
pub struct NoiseModel {
    /// Unloaded sinc covariance per bin.
    pub covariances: Vec<DMatrix<f64>>,
    /// Relative loading actually applied per bin (after any escalation).
    pub loading: Vec<f64>,
    /// Realized per-channel noise power over the SNR support, in observation
    /// units squared. This is the `sigma_v^2` handed to the baseline.
    pub noise_variance: f64,
}

/// Diffuse-field coherence `sinc(2 pi f r_mm' / c)` with `sinc x = sin x / x`.
pub fn sinc_covariance(mics: &MicArray, f: f64, c: f64) -> DMatrix<f64> {
    let p = mics.positions();
    let k = 2.0 * std::f64::consts::PI * f / c;
    DMatrix::from_fn(p.len(), p.len(), |i, j| {
        let r = (p[i][0] - p[j][0]).hypot(p[i][1] - p[j][1]);
        sinc(k * r)
    })
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Cholesky factor of a loaded Hermitian matrix.
#[derive(Debug, Clone)]
pub struct LoadedFactor {
    /// Lower-triangular `L` with `L L^H = cov + loading * maxdiag(cov) * I`.
    pub factor: DMatrix<Complex64>,
    pub loading: f64,
}

/// Adds `loading * maxdiag(cov)` to the diagonal and factors; on failure the
/// loading is raised tenfold, up to [`MAX_LOADING`].
pub fn load_and_factor(cov: &DMatrix<Complex64>, loading: f64) -> Result<LoadedFactor> {
    if !cov.is_square() {
        return Err(Error::DimensionMismatch("covariance must be square".into()));
    }
    let maxdiag = cov.diagonal().iter().map(|d| d.re).fold(f64::NEG_INFINITY, f64::max);
    let mut level = loading;
    loop {
        let mut loaded = cov.clone();
        for i in 0..loaded.nrows() {
            loaded[(i, i)] += Complex64::new(level * maxdiag, 0.0);
        }
        if let Some(factor) = hermitian_cholesky(&loaded) {
            return Ok(LoadedFactor {
                factor,
                loading: level,
            });
        }
        if level >= MAX_LOADING * (1.0 - 1e-12) {
            return Err(Error::NotPsd { loading: level });
        }
        level = (level * 10.0).min(MAX_LOADING);
    }
}

/// Lower Cholesky factor of a Hermitian matrix, `None` unless every pivot is
/// strictly positive. Only the lower triangle of `a` is read.
fn hermitian_cholesky(a: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let n = a.nrows();
    let mut l = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0 && d.is_finite()) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Circular complex normal with unit variance.
pub fn circular_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `L w` for `w` with i.i.d. unit circular complex normal entries.
pub fn draw_noise<R: Rng + ?Sized>(factor: &DMatrix<Complex64>, rng: &mut R, out: &mut [Complex64]) {
    let m = factor.nrows();
    let w: Vec<Complex64> = (0..m).map(|_| circular_normal(rng)).collect();
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..=i).map(|j| factor[(i, j)] * w[j]).sum();
    }
}

/// Clean mixture and scaled noise kept apart.
#[derive(Debug, Clone)]
pub struct SynthParts {
    pub clean: ObservationTensor,
    pub noise: ObservationTensor,
    pub noise_model: NoiseModel,
}

impl SynthParts {
    pub fn observations(&self) -> ObservationTensor {
        let mut out = self.clean.clone();
        for (o, v) in out.data.iter_mut().zip(&self.noise.data) {
            *o += v;
        }
        out
    }
}

/// Mean squared magnitude over the columns of frames where any slot is valid.
pub fn support_power(tensor: &ObservationTensor, activity: &ActivitySchedule) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..tensor.frames() {
        if activity.row(t).iter().any(|&a| a) {
            sum += tensor.frame(t).iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += tensor.mics() * tensor.bins();
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[allow(clippy::too_many_arguments)]
pub fn synthesize_parts<R: Rng + ?Sized>(
    truth: &[MultiTargetState],
    activity: &ActivitySchedule,
    mics: &MicArray,
    grid: &FrequencyGrid,
    c: f64,
    snr_db: f64,
    loading: f64,
    rng: &mut R,
) -> Result<SynthParts> {
    let frames = activity.frames();
    if truth.len() != frames {
        return Err(Error::DimensionMismatch(format!(
            "{} truth frames for an activity schedule of {frames}",
            truth.len()
        )));
    }
    if truth.iter().any(|x| x.len() != activity.slots()) {
        return Err(Error::DimensionMismatch("truth slot count differs from activity".into()));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!("unsupported SNR {snr_db} dB")));
    }
    if !activity.any_active() && snr_db.is_finite() {
        return Err(Error::SnrUndefined);
    }
    let (m, n_bins) = (mics.len(), grid.len());
    let covariances: Vec<DMatrix<f64>> = grid
        .frequencies()
        .iter()
        .map(|&f| sinc_covariance(mics, f, c))
        .collect();
    let factors = covariances
        .iter()
        .map(|cov| load_and_factor(&cov.map(|x| Complex64::new(x, 0.0)), loading))
        .collect::<Result<Vec<_>>>()?;

    let mut clean = ObservationTensor::zeros(m, n_bins, frames);
    let mut noise = ObservationTensor::zeros(m, n_bins, frames);
    for t in 0..frames {
        let active = activity.row(t);
        let sources: Vec<Vec<Complex64>> = truth[t]
            .active_positions(active)
            .map(|p| {
                grid.frequencies()
                    .iter()
                    .map(|&f| steering(mics, p, f, c).map(|h| h.0))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let n_active = sources.len() / n_bins.max(1);
        for f in 0..n_bins {
            let col = clean.column_mut(t, f);
            for k in 0..n_active {
                let s = circular_normal(rng);
                for (z, h) in col.iter_mut().zip(&sources[k * n_bins + f]) {
                    *z += s * h;
                }
            }
            draw_noise(&factors[f].factor, rng, noise.column_mut(t, f));
        }
    }

    let noise_variance = if snr_db == f64::INFINITY {
        noise.data.iter_mut().for_each(|z| *z = Complex64::default());
        0.0
    } else {
        let p_sig = support_power(&clean, activity);
        let p_raw = support_power(&noise, activity);
        let target = p_sig * 10f64.powf(-snr_db / 10.0);
        let scale = (target / p_raw).sqrt();
        noise.data.iter_mut().for_each(|z| *z *= scale);
        support_power(&noise, activity)
    };

    Ok(SynthParts {
        clean,
        noise,
        noise_model: NoiseModel {
            covariances,
            loading: factors.iter().map(|f| f.loading).collect(),
            noise_variance,
        },
    })
}

/// Observation tensor and noise model for a ground-truth trajectory.
#[allow(clippy::too_many_arguments)]
pub fn synthesize<R: Rng + ?Sized>(
    truth: &[MultiTargetState],
    activity: &ActivitySchedule,
    mics: &MicArray,
    grid: &FrequencyGrid,
    c: f64,
    snr_db: f64,
    loading: f64,
    rng: &mut R,
) -> Result<(ObservationTensor, NoiseModel)> {
    let parts = synthesize_parts(truth, activity, mics, grid, c, snr_db, loading, rng)?;
    Ok((parts.observations(), parts.noise_model))
}
