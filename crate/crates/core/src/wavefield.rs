//! Frequency grid, anechoic spherical-wave steering vectors, mixing matrices
//! and orthogonal projectors onto the signal subspace.
//!
//! Steering entries use the free-field Green's-function form
//! `(1 / r) exp(-i 2 pi f r / c)` without the `1 / (4 pi)` constant. The
//! constant rescales every column equally, so projectors are unaffected; the
//! synthesizer and the baseline likelihood use this same convention.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scenario::{MicArray, MultiTargetState, Point};

/// Minimum source-to-microphone distance accepted by [`steering`].
pub const R_MIN: f64 = 1e-6;

/// Default condition-number threshold of `H^H H` beyond which the projector
/// is built from the pseudoinverse.
pub const DEFAULT_COND_THRESHOLD: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    frequencies: Vec<f64>,
    // Set when the bins form an arithmetic progression; enables the phasor
    // recurrence in `steering_bank`.
    step: Option<f64>,
}

impl FrequencyGrid {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidArgument("frequency grid is empty".into()));
        }
        if frequencies.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidArgument(
                "frequencies must be positive and finite".into(),
            ));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "frequencies must be strictly increasing".into(),
            ));
        }
        let step = if frequencies.len() > 1 {
            let d = frequencies[1] - frequencies[0];
            let uniform = frequencies.iter().enumerate().all(|(k, f)| {
                (f - (frequencies[0] + k as f64 * d)).abs() <= 1e-9 * f.abs()
            });
            uniform.then_some(d)
        } else {
            Some(0.0)
        };
        Ok(Self { frequencies, step })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

/// Bins `bin_lo..=bin_hi` of a `dft_size`-point DFT at `sample_rate`.
pub fn stft_grid(sample_rate: f64, dft_size: usize, bin_lo: usize, bin_hi: usize) -> Result<FrequencyGrid> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::InvalidArgument(format!("sample rate {sample_rate} must be positive")));
    }
    if bin_lo == 0 || bin_lo > bin_hi || 2 * bin_hi >= dft_size {
        return Err(Error::InvalidArgument(format!(
            "bins {bin_lo}..={bin_hi} must satisfy 0 < lo <= hi < {}/2",
            dft_size
        )));
    }
    let freqs = (bin_lo..=bin_hi)
        .map(|k| k as f64 * sample_rate / dft_size as f64)
        .collect();
    FrequencyGrid::new(freqs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(pub Vec<Complex64>);

impl SteeringVector {
    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }
}

fn distances(mics: &MicArray, source: Point) -> Result<Vec<f64>> {
    mics.positions()
        .iter()
        .enumerate()
        .map(|(m, p)| {
            let r = (source[0] - p[0]).hypot(source[1] - p[1]);
            if r < R_MIN || !r.is_finite() {
                Err(Error::NearFieldSingularity { mic: m, distance: r })
            } else {
                Ok(r)
            }
        })
        .collect()
}

pub fn steering(mics: &MicArray, source: Point, f: f64, c: f64) -> Result<SteeringVector> {
    let r = distances(mics, source)?;
    let k = -2.0 * std::f64::consts::PI * f / c;
    Ok(SteeringVector(
        r.iter().map(|&r| Complex64::from_polar(1.0 / r, k * r)).collect(),
    ))
}

/// Steering vectors for every bin of `grid`, written bin-major into `out`
/// (`out[f * M + m]`). `out` must hold `grid.len() * mics.len()` entries.
///
/// Uniform grids advance the phase with a per-microphone phasor recurrence;
/// the result matches [`steering`] to within a few ulps per bin.
pub fn steering_bank_into(
    mics: &MicArray,
    source: Point,
    grid: &FrequencyGrid,
    c: f64,
    out: &mut [Complex64],
) -> Result<()> {
    let n_mics = mics.len();
    debug_assert_eq!(out.len(), grid.len() * n_mics);
    let two_pi = 2.0 * std::f64::consts::PI;
    let freqs = grid.frequencies();
    for (m, p) in mics.positions().iter().enumerate() {
        let r = (source[0] - p[0]).hypot(source[1] - p[1]);
        if r < R_MIN || !r.is_finite() {
            return Err(Error::NearFieldSingularity { mic: m, distance: r });
        }
        match grid.step {
            Some(step) => {
                let mut h = Complex64::from_polar(1.0 / r, -two_pi * freqs[0] * r / c);
                let rot = Complex64::from_polar(1.0, -two_pi * step * r / c);
                out[m] = h;
                for fi in 1..freqs.len() {
                    h *= rot;
                    out[fi * n_mics + m] = h;
                }
            }
            None => {
                for (fi, f) in freqs.iter().enumerate() {
                    out[fi * n_mics + m] = Complex64::from_polar(1.0 / r, -two_pi * f * r / c);
                }
            }
        }
    }
    Ok(())
}

/// `M x K` matrix of the valid slots' steering vectors, in slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix(pub DMatrix<Complex64>);

impl MixingMatrix {
    pub fn from_columns(m: usize, columns: &[SteeringVector]) -> Self {
        let mut h = DMatrix::zeros(m, columns.len());
        for (k, col) in columns.iter().enumerate() {
            for (i, v) in col.0.iter().enumerate() {
                h[(i, k)] = *v;
            }
        }
        Self(h)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }
}

pub fn mixing_matrix(
    mics: &MicArray,
    state: &MultiTargetState,
    active: &[bool],
    f: f64,
    c: f64,
) -> Result<MixingMatrix> {
    if active.len() != state.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} activity flags for {} slots",
            active.len(),
            state.len()
        )));
    }
    let cols = state
        .active_positions(active)
        .map(|p| steering(mics, p, f, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(MixingMatrix::from_columns(mics.len(), &cols))
}

/// Orthogonal projector onto the column space of a mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector(pub DMatrix<Complex64>);

impl Projector {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    /// `||P z||^2`.
    pub fn energy(&self, z: &[Complex64]) -> f64 {
        let m = self.0.nrows();
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| self.0[(i, j)] * z[j])
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .sum()
    }
}

/// `H (H^H H)^{-1} H^H`, or the pseudoinverse form `H (H^H H)^+ H^H` when the
/// Gram matrix has condition number above `cond_threshold`. An empty `H`
/// gives the zero matrix.
pub fn projector(h: &MixingMatrix, cond_threshold: f64) -> Projector {
    let m = h.rows();
    let hm = &h.0;
    if h.cols() == 0 {
        return Projector(DMatrix::zeros(m, m));
    }
    let gram = hm.adjoint() * hm;
    let eig = gram.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if lmax <= 0.0 {
        return Projector(DMatrix::zeros(m, m));
    }
    if lmin > 0.0 && lmax / lmin <= cond_threshold {
        if let Some(chol) = gram.cholesky() {
            let x = chol.solve(&hm.adjoint());
            return Projector(hm * x);
        }
    }
    // Pseudoinverse through the eigendecomposition of the Gram matrix.
    let tol = lmax / cond_threshold;
    let mut p = DMatrix::zeros(m, m);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            let u = hm * eig.eigenvectors.column(i);
            p += (&u * u.adjoint()).unscale(lambda);
        }
    }
    Projector(p)
}

/// `||P z||^2` for the projector onto `span(columns)`, computed as
/// `b^H G^+ b` with `b = H^H z` and `G = H^H H`, without forming `P`.
///
/// Agrees with [`projector`]`(H).energy(z)` including the pseudoinverse
/// fallback.
pub fn projection_energy(columns: &[&[Complex64]], z: &[Complex64], cond_threshold: f64) -> f64 {
    match columns {
        [] => 0.0,
        [h] => {
            let (b, g) = dot_and_norm(h, z);
            if g > 0.0 {
                b.norm_sqr() / g
            } else {
                0.0
            }
        }
        [h1, h2] => {
            let mut b1 = Complex64::default();
            let mut b2 = Complex64::default();
            let mut c = Complex64::default();
            let (mut a, mut d) = (0.0, 0.0);
            for ((x1, x2), zz) in h1.iter().zip(h2.iter()).zip(z) {
                b1 += x1.conj() * zz;
                b2 += x2.conj() * zz;
                c += x1.conj() * x2;
                a += x1.norm_sqr();
                d += x2.norm_sqr();
            }
            energy_2x2(a, d, c, b1, b2, cond_threshold)
        }
        _ => {
            let m = z.len();
            let h = DMatrix::from_fn(m, columns.len(), |i, k| columns[k][i]);
            projector(&MixingMatrix(h), cond_threshold).energy(z)
        }
    }
}

fn dot_and_norm(h: &[Complex64], z: &[Complex64]) -> (Complex64, f64) {
    let mut b = Complex64::default();
    let mut g = 0.0;
    for (x, zz) in h.iter().zip(z) {
        b += x.conj() * zz;
        g += x.norm_sqr();
    }
    (b, g)
}

/// `b^H G^+ b` for the Hermitian Gram `G = [[a, c], [conj(c), d]]`.
pub(crate) fn energy_2x2(a: f64, d: f64, c: Complex64, b1: Complex64, b2: Complex64, cond_threshold: f64) -> f64 {
    let half_sum = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + c.norm_sqr()).sqrt();
    let lmax = half_sum + disc;
    if lmax <= 0.0 {
        return 0.0;
    }
    let det = a * d - c.norm_sqr();
    let lmin = det / lmax;
    if lmin > 0.0 && lmax / lmin <= cond_threshold {
        let quad = d * b1.norm_sqr() + a * b2.norm_sqr() - 2.0 * (b1.conj() * c * b2).re;
        return quad / det;
    }
    // Rank-deficient: keep the dominant eigenpair only.
    let (v1, v2) = {
        let p = (c, Complex64::new(lmax - a, 0.0));
        let q = (Complex64::new(lmax - d, 0.0), c.conj());
        if p.0.norm_sqr() + p.1.norm_sqr() >= q.0.norm_sqr() + q.1.norm_sqr() {
            p
        } else {
            q
        }
    };
    let vn = v1.norm_sqr() + v2.norm_sqr();
    if vn == 0.0 {
        // G is a multiple of the identity; c == 0 and a == d.
        return (b1.norm_sqr() + b2.norm_sqr()) / lmax;
    }
    let proj = v1.conj() * b1 + v2.conj() * b2;
    proj.norm_sqr() / (vn * lmax)
}
