use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filter::FilterConfig;
use crate::likelihood::{BaselineParams, BinghamParams, BoundaryParams, LikelihoodKind, Scene};
use crate::scenario::{build_perimeter_array, ActivitySchedule, BirthModel, MotionModel, RoomConfig};
use crate::wavefield::{stft_grid, DEFAULT_COND_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Subspace,
    Baseline,
}

impl Method {
    /// Stable label mixed into per-run seeds.
    pub fn code(self) -> u64 {
        match self {
            Method::Subspace => 0,
            Method::Baseline => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Subspace => "subspace",
            Method::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "subspace" | "proposed" => Ok(Method::Subspace),
            "baseline" | "conventional" => Ok(Method::Baseline),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub mics: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StftSpec {
    pub sample_rate: f64,
    pub dft_size: usize,
    pub bin_lo: usize,
    pub bin_hi: usize,
}

/// Half-open validity interval `[start, end)` of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub slot: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySpec {
    pub frames: usize,
    pub slots: usize,
    pub intervals: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthSpec {
    pub velocity_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinghamSpec {
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub max_attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub cond_threshold: f64,
}

/// Everything needed to regenerate a grid of runs bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub trials: usize,
    pub snr_db: Vec<f64>,
    pub particles: Vec<usize>,
    pub methods: Vec<Method>,
    pub room: RoomConfig,
    pub array: ArraySpec,
    pub stft: StftSpec,
    pub activity: ActivitySpec,
    pub motion: MotionModel,
    pub birth: BirthSpec,
    pub boundary: BoundaryParams,
    pub bingham: BinghamSpec,
    pub synth: SynthSpec,
    pub truth: TruthSpec,
    pub filter: FilterSpec,
}

impl ExperimentConfig {
    /// 3 m x 3 m room, 40 perimeter microphones, 200 frames of 128 ms, bins
    /// 13..=73 of a 1024-point DFT at 8 kHz, one target from frame 0 and a
    /// second from frame 100, SNR {-10, 0, 10} dB, {2000, 4000, 8000}
    /// particles, five trials.
    pub fn paper() -> Self {
        Self {
            name: "paper".into(),
            master_seed: 20_240_601,
            output_dir: PathBuf::from("runs/paper"),
            trials: 5,
            snr_db: vec![-10.0, 0.0, 10.0],
            particles: vec![2000, 4000, 8000],
            methods: vec![Method::Subspace, Method::Baseline],
            room: RoomConfig {
                width: 3.0,
                height: 3.0,
                speed_of_sound: 343.0,
            },
            array: ArraySpec { mics: 40 },
            stft: StftSpec {
                sample_rate: 8000.0,
                dft_size: 1024,
                bin_lo: 13,
                bin_hi: 73,
            },
            activity: ActivitySpec {
                frames: 200,
                slots: 2,
                intervals: vec![
                    Interval {
                        slot: 0,
                        start: 0,
                        end: 200,
                    },
                    Interval {
                        slot: 1,
                        start: 100,
                        end: 200,
                    },
                ],
            },
            motion: MotionModel::new(0.128, 0.09),
            birth: BirthSpec { velocity_std: 0.5 },
            boundary: BoundaryParams { tau: 0.05 },
            bingham: BinghamSpec { kappa: 10.0 },
            synth: SynthSpec {
                loading: crate::synth::DEFAULT_LOADING,
            },
            truth: TruthSpec {
                max_attempts: crate::scenario::DEFAULT_MAX_ATTEMPTS,
            },
            filter: FilterSpec {
                cond_threshold: DEFAULT_COND_THRESHOLD,
            },
        }
    }

    /// The paper scenario at desk scale: 2000 particles, three trials.
    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            output_dir: PathBuf::from("runs/desk"),
            trials: 3,
            particles: vec![2000],
            ..Self::paper()
        }
    }

    /// A seconds-scale scenario for smoke tests: 12 microphones, 11 bins,
    /// 30 frames, 300 particles.
    pub fn smoke() -> Self {
        Self {
            name: "smoke".into(),
            output_dir: PathBuf::from("runs/smoke"),
            trials: 2,
            snr_db: vec![0.0],
            particles: vec![300],
            array: ArraySpec { mics: 12 },
            stft: StftSpec {
                sample_rate: 8000.0,
                dft_size: 1024,
                bin_lo: 40,
                bin_hi: 50,
            },
            activity: ActivitySpec {
                frames: 30,
                slots: 2,
                intervals: vec![
                    Interval {
                        slot: 0,
                        start: 0,
                        end: 30,
                    },
                    Interval {
                        slot: 1,
                        start: 15,
                        end: 30,
                    },
                ],
            },
            ..Self::paper()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            "smoke" => Ok(Self::smoke()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected paper, desk or smoke)"
            ))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if self.snr_db.is_empty() || self.particles.is_empty() || self.methods.is_empty() {
            return fail("snr_db, particles and methods must be nonempty");
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return fail("snr_db entries must be numbers");
        }
        if self.particles.contains(&0) {
            return fail("particle counts must be positive");
        }
        if self.activity.slots == 0 {
            return fail("activity needs at least one slot");
        }
        if self.truth.max_attempts == 0 {
            return fail("truth.max_attempts must be at least 1");
        }
        if !(self.motion.dt > 0.0 && self.motion.q >= 0.0) {
            return fail("motion needs dt > 0 and q >= 0");
        }
        if self.filter.cond_threshold.is_nan() || self.filter.cond_threshold <= 1.0 {
            return fail("filter.cond_threshold must exceed 1");
        }
        if self.synth.loading.is_nan() || self.synth.loading < 0.0 {
            return fail("synth.loading must be non-negative");
        }
        self.room.validate()?;
        BoundaryParams::new(self.boundary.tau)?;
        BinghamParams::uniform(1, self.bingham.kappa)?;
        self.birth_model()?;
        self.scene()?;
        self.activity_schedule()?;
        Ok(())
    }

    pub fn scene(&self) -> Result<Scene> {
        Ok(Scene {
            room: self.room,
            mics: build_perimeter_array(&self.room, self.array.mics)?,
            grid: stft_grid(
                self.stft.sample_rate,
                self.stft.dft_size,
                self.stft.bin_lo,
                self.stft.bin_hi,
            )?,
            cond_threshold: self.filter.cond_threshold,
        })
    }

    pub fn activity_schedule(&self) -> Result<ActivitySchedule> {
        let intervals: Vec<_> = self
            .activity
            .intervals
            .iter()
            .map(|i| (i.slot, i.start, i.end))
            .collect();
        ActivitySchedule::from_intervals(self.activity.frames, self.activity.slots, &intervals)
    }

    pub fn birth_model(&self) -> Result<BirthModel> {
        BirthModel::new(self.room, self.birth.velocity_std)
    }

    pub fn likelihood(&self, method: Method, bins: usize, noise_variance: f64) -> Result<LikelihoodKind> {
        Ok(match method {
            Method::Subspace => LikelihoodKind::Subspace(BinghamParams::uniform(bins, self.bingham.kappa)?),
            Method::Baseline => LikelihoodKind::Baseline(BaselineParams::new(noise_variance)?),
        })
    }

    pub fn filter_config(
        &self,
        method: Method,
        n_particles: usize,
        bins: usize,
        noise_variance: f64,
        seed: u64,
        dump_particles: bool,
    ) -> Result<FilterConfig> {
        Ok(FilterConfig {
            n_particles,
            likelihood: self.likelihood(method, bins, noise_variance)?,
            motion: self.motion,
            birth: self.birth_model()?,
            boundary: self.boundary,
            seed,
            dump_particles,
        })
    }

    /// SHA-256 of the config with `output_dir` cleared, hex encoded, first
    /// 16 characters.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config is always serializable");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
