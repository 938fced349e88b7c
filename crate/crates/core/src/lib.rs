//! Subspace track-before-detect for passive multi-target acoustic tracking.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`]: room, microphone array, activity schedules and ground-truth
//!   trajectories under a nearly-constant-velocity motion model.
//! * [`wavefield`]: frequency grid, spherical-wave steering vectors, mixing
//!   matrices and orthogonal projectors onto their column space.
//! * [`synth`]: STFT-domain observation synthesis with diffuse sensor noise.
//! * [`likelihood`]: the complex-Bingham subspace likelihood, the
//!   deterministic-contribution baseline and the soft room-boundary factor.
//! * [`filter`]: auxiliary particle filter with systematic resampling.
//! * [`experiment`]: configuration, SNR x particle-count x trial grids, RMSE
//!   summaries and CSV export.

pub mod error;
pub mod experiment;
pub mod filter;
pub mod likelihood;
pub mod rng;
pub mod scenario;
pub mod synth;
pub mod wavefield;

pub use error::{Error, Result};
pub use num_complex::Complex64;
