//! Python bindings for `subspace_tbd`.
//!
//! Exposes the experiment configuration, trial generation, single filter
//! runs and whole grids, plus the geometric building blocks (steering
//! vectors and subspace projectors) for interactive use.
//!
//!     import subspace_tbd_py as stbd
//!     cfg = stbd.Config.preset("smoke")
//!     trial = stbd.generate_trial(cfg, 0, 0)
//!     run = stbd.run_single(cfg, trial, "subspace", 300)
//!     print(run.rmse)

use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use subspace_tbd::experiment::{self, ExperimentConfig, Method, RunResult, TrialData};
use subspace_tbd::scenario::RoomConfig;
use subspace_tbd::wavefield::{self, MixingMatrix};
use subspace_tbd::Error;

/// `(px, py, vx, vy)`.
type StateTuple = (f64, f64, f64, f64);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse().map_err(|e: Error| PyValueError::new_err(e.to_string()))
}

/// Experiment configuration: scenario, model parameters and grid.
#[pyclass(name = "Config", module = "subspace_tbd_py", skip_from_py_object)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// One of the embedded presets: "paper", "desk" or "smoke".
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        ExperimentConfig::preset(name).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Parse a TOML configuration document.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ExperimentConfig::from_toml_str(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    /// Short hash identifying the experiment (output directory excluded).
    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn master_seed(&self) -> u64 {
        self.inner.master_seed
    }

    #[setter]
    fn set_master_seed(&mut self, seed: u64) {
        self.inner.master_seed = seed;
    }

    #[getter]
    fn snr_db(&self) -> Vec<f64> {
        self.inner.snr_db.clone()
    }

    #[setter]
    fn set_snr_db(&mut self, values: Vec<f64>) {
        self.inner.snr_db = values;
    }

    #[getter]
    fn particles(&self) -> Vec<usize> {
        self.inner.particles.clone()
    }

    #[setter]
    fn set_particles(&mut self, values: Vec<usize>) {
        self.inner.particles = values;
    }

    #[getter]
    fn trials(&self) -> usize {
        self.inner.trials
    }

    #[setter]
    fn set_trials(&mut self, trials: usize) {
        self.inner.trials = trials;
    }

    #[getter]
    fn methods(&self) -> Vec<String> {
        self.inner.methods.iter().map(|m| m.to_string()).collect()
    }

    #[setter]
    fn set_methods(&mut self, names: Vec<String>) -> PyResult<()> {
        self.inner.methods = names.iter().map(|n| parse_method(n)).collect::<PyResult<_>>()?;
        Ok(())
    }

    #[getter]
    fn output_dir(&self) -> String {
        self.inner.output_dir.to_string_lossy().into_owned()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: String) {
        self.inner.output_dir = dir.into();
    }

    /// Microphone positions of the configured array.
    fn mic_positions(&self) -> PyResult<Vec<(f64, f64)>> {
        let scene = self.inner.scene().map_err(to_py)?;
        Ok(scene.mics.positions().iter().map(|p| (p[0], p[1])).collect())
    }

    /// Centre frequencies of the configured bins, in Hz.
    fn frequencies(&self) -> PyResult<Vec<f64>> {
        Ok(self.inner.scene().map_err(to_py)?.grid.frequencies().to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(name={:?}, snr_db={:?}, particles={:?}, trials={})",
            self.inner.name, self.inner.snr_db, self.inner.particles, self.inner.trials
        )
    }
}

/// Ground truth and observations of one (SNR, trial) pair.
#[pyclass(name = "Trial", module = "subspace_tbd_py")]
struct PyTrial {
    inner: TrialData,
}

#[pymethods]
impl PyTrial {
    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db
    }

    #[getter]
    fn trial(&self) -> usize {
        self.inner.trial
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint.clone()
    }

    /// Per-channel noise variance realized by the SNR scaling.
    #[getter]
    fn noise_variance(&self) -> f64 {
        self.inner.noise.noise_variance
    }

    /// `(mics, bins, frames)`.
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let o = &self.inner.observations;
        (o.mics(), o.bins(), o.frames())
    }

    /// True positions per frame and slot; `None` where the slot is invalid.
    fn truth(&self) -> Vec<Vec<Option<(f64, f64)>>> {
        self.inner
            .record()
            .truth
            .into_iter()
            .map(|row| row.into_iter().map(|p| p.map(|p| (p[0], p[1]))).collect())
            .collect()
    }

    /// Sensor samples of one frame and bin.
    fn observation(&self, frame: usize, bin: usize) -> PyResult<Vec<Complex64>> {
        let o = &self.inner.observations;
        if frame >= o.frames() || bin >= o.bins() {
            return Err(PyValueError::new_err(format!(
                "(frame {frame}, bin {bin}) outside {} frames x {} bins",
                o.frames(),
                o.bins()
            )));
        }
        Ok(o.column(frame, bin).to_vec())
    }

    /// Write the observation tensor in the flat binary dump format.
    fn dump(&self, path: &str) -> PyResult<()> {
        self.inner.observations.write_binary(path.as_ref()).map_err(to_py)
    }
}

/// Outcome of one filter run.
#[pyclass(name = "RunResult", module = "subspace_tbd_py", from_py_object)]
#[derive(Clone)]
struct PyRunResult {
    inner: RunResult,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db
    }

    #[getter]
    fn n_particles(&self) -> usize {
        self.inner.n_particles
    }

    #[getter]
    fn trial(&self) -> usize {
        self.inner.trial
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn rmse(&self) -> f64 {
        self.inner.rmse
    }

    #[getter]
    fn degenerate_frames(&self) -> usize {
        self.inner.degenerate_frames
    }

    #[getter]
    fn data_fingerprint(&self) -> String {
        self.inner.data_fingerprint.clone()
    }

    #[getter]
    fn wall_clock_seconds(&self) -> Option<f64> {
        self.inner.wall_clock_seconds
    }

    /// MMSE estimates `(px, py, vx, vy)` per frame and slot; `None` where
    /// the slot is invalid.
    fn estimates(&self) -> Vec<Vec<Option<StateTuple>>> {
        self.inner
            .estimates
            .frames
            .iter()
            .map(|row| row.iter().map(|s| s.map(|s| (s.px, s.py, s.vx, s.vy))).collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(method={}, snr_db={}, n_particles={}, trial={}, rmse={:.4})",
            self.inner.method, self.inner.snr_db, self.inner.n_particles, self.inner.trial, self.inner.rmse
        )
    }
}

/// Truth and observations for SNR index `snr_index` and trial `trial`.
#[pyfunction]
fn generate_trial(config: &PyConfig, snr_index: usize, trial: usize) -> PyResult<PyTrial> {
    experiment::generate_trial(&config.inner, snr_index, trial)
        .map(|inner| PyTrial { inner })
        .map_err(to_py)
}

/// Run one filter on a generated trial.
#[pyfunction]
fn run_single(py: Python<'_>, config: &PyConfig, trial: &PyTrial, method: &str, n_particles: usize) -> PyResult<PyRunResult> {
    let method = parse_method(method)?;
    let (cfg, data) = (&config.inner, &trial.inner);
    py.detach(|| experiment::run_single(cfg, data, method, n_particles, false))
        .map(|(inner, _)| PyRunResult { inner })
        .map_err(to_py)
}

/// Run the whole grid, writing results under the configured output directory.
#[pyfunction]
fn run_grid(py: Python<'_>, config: &PyConfig) -> PyResult<Vec<PyRunResult>> {
    let cfg = &config.inner;
    let results = py.detach(|| experiment::run_grid(cfg)).map_err(to_py)?;
    Ok(results.into_iter().map(|inner| PyRunResult { inner }).collect())
}

/// Aligned text table of per-cell median RMSE and proposed-method range.
#[pyfunction]
fn summary_table(results: Vec<PyRunResult>) -> String {
    let results: Vec<RunResult> = results.into_iter().map(|r| r.inner).collect();
    experiment::summarize(&results).text_table()
}

/// Median with the mean-of-middle convention; `None` for an empty list.
#[pyfunction]
fn median(values: Vec<f64>) -> Option<f64> {
    experiment::median(&values)
}

/// `m` microphones evenly spaced along the perimeter of a `width` x `height` room.
#[pyfunction]
fn build_perimeter_array(width: f64, height: f64, m: usize) -> PyResult<Vec<(f64, f64)>> {
    let room = RoomConfig::new(width, height, 343.0).map_err(to_py)?;
    let mics = subspace_tbd::scenario::build_perimeter_array(&room, m).map_err(to_py)?;
    Ok(mics.positions().iter().map(|p| (p[0], p[1])).collect())
}

/// Centre frequencies of DFT bins `bin_lo..=bin_hi`.
#[pyfunction]
fn stft_grid(sample_rate: f64, dft_size: usize, bin_lo: usize, bin_hi: usize) -> PyResult<Vec<f64>> {
    wavefield::stft_grid(sample_rate, dft_size, bin_lo, bin_hi)
        .map(|g| g.frequencies().to_vec())
        .map_err(to_py)
}

/// Free-field steering vector `(1/r) exp(-i 2 pi f r / c)` for microphones
/// at `mics` and a source at `source`, all in non-negative room coordinates.
#[pyfunction]
#[pyo3(signature = (mics, source, frequency, speed_of_sound=343.0))]
fn steering(mics: Vec<(f64, f64)>, source: (f64, f64), frequency: f64, speed_of_sound: f64) -> PyResult<Vec<Complex64>> {
    let xs: Vec<f64> = mics.iter().flat_map(|p| [p.0, p.1]).collect();
    let width = xs.iter().step_by(2).cloned().fold(0.0, f64::max).max(source.0).max(1e-9);
    let height = xs.iter().skip(1).step_by(2).cloned().fold(0.0, f64::max).max(source.1).max(1e-9);
    let room = RoomConfig::new(width, height, speed_of_sound).map_err(to_py)?;
    let array = subspace_tbd::scenario::MicArray::new(mics.iter().map(|p| [p.0, p.1]).collect(), &room)
        .map_err(to_py)?;
    wavefield::steering(&array, [source.0, source.1], frequency, speed_of_sound)
        .map(|h| h.0)
        .map_err(to_py)
}

fn mixing(columns: &[Vec<Complex64>]) -> PyResult<MixingMatrix> {
    let m = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != m) {
        return Err(PyValueError::new_err("columns must have equal length"));
    }
    Ok(MixingMatrix(DMatrix::from_fn(m, columns.len(), |i, k| columns[k][i])))
}

/// Orthogonal projector onto the span of `columns`, as a list of rows.
#[pyfunction]
#[pyo3(signature = (columns, mics, cond_threshold=wavefield::DEFAULT_COND_THRESHOLD))]
fn projector(columns: Vec<Vec<Complex64>>, mics: usize, cond_threshold: f64) -> PyResult<Vec<Vec<Complex64>>> {
    let h = if columns.is_empty() {
        MixingMatrix(DMatrix::zeros(mics, 0))
    } else {
        mixing(&columns)?
    };
    if h.rows() != mics {
        return Err(PyValueError::new_err(format!("columns have {} entries, expected {mics}", h.rows())));
    }
    let p = wavefield::projector(&h, cond_threshold).0;
    Ok((0..mics).map(|i| (0..mics).map(|j| p[(i, j)]).collect()).collect())
}

/// `||P z||^2` for the projector onto the span of `columns`.
#[pyfunction]
#[pyo3(signature = (columns, z, cond_threshold=wavefield::DEFAULT_COND_THRESHOLD))]
fn projection_energy(columns: Vec<Vec<Complex64>>, z: Vec<Complex64>, cond_threshold: f64) -> PyResult<f64> {
    if columns.iter().any(|c| c.len() != z.len()) {
        return Err(PyValueError::new_err("columns and z must have equal length"));
    }
    let refs: Vec<&[Complex64]> = columns.iter().map(|c| c.as_slice()).collect();
    Ok(wavefield::projection_energy(&refs, &z, cond_threshold))
}

#[pymodule]
fn subspace_tbd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrial>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(generate_trial, m)?)?;
    m.add_function(wrap_pyfunction!(run_single, m)?)?;
    m.add_function(wrap_pyfunction!(run_grid, m)?)?;
    m.add_function(wrap_pyfunction!(summary_table, m)?)?;
    m.add_function(wrap_pyfunction!(median, m)?)?;
    m.add_function(wrap_pyfunction!(build_perimeter_array, m)?)?;
    m.add_function(wrap_pyfunction!(stft_grid, m)?)?;
    m.add_function(wrap_pyfunction!(steering, m)?)?;
    m.add_function(wrap_pyfunction!(projector, m)?)?;
    m.add_function(wrap_pyfunction!(projection_energy, m)?)?;
    Ok(())
}
