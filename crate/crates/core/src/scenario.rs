//! Room geometry, microphone placement, activity schedules and ground-truth
//! trajectories.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2-D point in meters.
pub type Point = [f64; 2];

/// Rectangular room `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    pub width: f64,
    pub height: f64,
    pub speed_of_sound: f64,
}

impl RoomConfig {
    pub fn new(width: f64, height: f64, speed_of_sound: f64) -> Result<Self> {
        let room = Self {
            width,
            height,
            speed_of_sound,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.width) || !ok(self.height) || !ok(self.speed_of_sound) {
            return Err(Error::InvalidArgument(format!(
                "room dimensions and speed of sound must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.width + self.height)
    }

    pub fn center(&self) -> Point {
        [0.5 * self.width, 0.5 * self.height]
    }

    /// Closed-rectangle membership; points on the wall count as inside.
    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p[0]) && (0.0..=self.height).contains(&p[1])
    }

    /// Euclidean distance from `p` to the room rectangle, zero inside.
    pub fn distance_outside(&self, p: Point) -> f64 {
        let dx = (-p[0]).max(p[0] - self.width).max(0.0);
        let dy = (-p[1]).max(p[1] - self.height).max(0.0);
        dx.hypot(dy)
    }
}

/// Microphone positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicArray {
    positions: Vec<Point>,
}

impl MicArray {
    pub fn new(positions: Vec<Point>, room: &RoomConfig) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument("microphone array is empty".into()));
        }
        for (m, p) in positions.iter().enumerate() {
            if !room.contains(*p) {
                return Err(Error::InvalidArgument(format!(
                    "microphone {m} at {p:?} lies outside the room"
                )));
            }
            if positions[..m].contains(p) {
                return Err(Error::InvalidArgument(format!(
                    "microphone {m} duplicates an earlier position {p:?}"
                )));
            }
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `m` microphones at equal arc-length spacing along the room boundary,
/// starting at corner (0, 0) and walking counter-clockwise.
pub fn build_perimeter_array(room: &RoomConfig, m: usize) -> Result<MicArray> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "perimeter array needs at least one microphone".into(),
        ));
    }
    room.validate()?;
    let (w, h) = (room.width, room.height);
    let perimeter = room.perimeter();
    let positions = (0..m)
        .map(|k| {
            let s = k as f64 * perimeter / m as f64;
            if s <= w {
                [s, 0.0]
            } else if s <= w + h {
                [w, s - w]
            } else if s <= 2.0 * w + h {
                [w - (s - w - h), h]
            } else {
                [0.0, h - (s - 2.0 * w - h)]
            }
        })
        .collect();
    MicArray::new(positions, room)
}

/// Position and velocity of one target slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
}

impl KinematicState {
    pub fn new(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        Self { px, py, vx, vy }
    }

    pub fn position(&self) -> Point {
        [self.px, self.py]
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.px, self.py, self.vx, self.vy]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// Kinematic states of all `N` slots; invalid slots hold a placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTargetState {
    pub slots: Vec<KinematicState>,
}

impl MultiTargetState {
    pub fn zeros(n_slots: usize) -> Self {
        Self {
            slots: vec![KinematicState::default(); n_slots],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Positions of the slots flagged in `active`, in slot order.
    pub fn active_positions<'a>(&'a self, active: &'a [bool]) -> impl Iterator<Item = Point> + 'a {
        self.slots
            .iter()
            .zip(active)
            .filter(|(_, &a)| a)
            .map(|(s, _)| s.position())
    }
}

/// Binary slot validity, one row of `N` flags per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySchedule {
    frames: usize,
    slots: usize,
    table: Vec<bool>,
}

impl ActivitySchedule {
    pub fn new(frames: usize, slots: usize, table: Vec<bool>) -> Result<Self> {
        if table.len() != frames * slots {
            return Err(Error::DimensionMismatch(format!(
                "activity table has {} entries, expected {frames}x{slots}",
                table.len()
            )));
        }
        Ok(Self {
            frames,
            slots,
            table,
        })
    }

    pub fn inactive(frames: usize, slots: usize) -> Self {
        Self {
            frames,
            slots,
            table: vec![false; frames * slots],
        }
    }

    /// Build from half-open `[start, end)` validity intervals per slot.
    pub fn from_intervals(
        frames: usize,
        slots: usize,
        intervals: &[(usize, usize, usize)],
    ) -> Result<Self> {
        let mut schedule = Self::inactive(frames, slots);
        for &(slot, start, end) in intervals {
            if slot >= slots || start > end || end > frames {
                return Err(Error::InvalidArgument(format!(
                    "activity interval (slot {slot}, {start}..{end}) does not fit {frames} frames x {slots} slots"
                )));
            }
            for t in start..end {
                schedule.table[t * slots + slot] = true;
            }
        }
        Ok(schedule)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn is_active(&self, t: usize, n: usize) -> bool {
        self.table[t * self.slots + n]
    }

    pub fn row(&self, t: usize) -> &[bool] {
        &self.table[t * self.slots..(t + 1) * self.slots]
    }

    /// Row for frame `t - 1`, or all-inactive before the first frame.
    pub fn previous_row(&self, t: usize) -> Vec<bool> {
        if t == 0 {
            vec![false; self.slots]
        } else {
            self.row(t - 1).to_vec()
        }
    }

    pub fn any_active(&self) -> bool {
        self.table.iter().any(|&a| a)
    }

    pub fn active_pairs(&self) -> usize {
        self.table.iter().filter(|&&a| a).count()
    }

    /// Maximal runs of consecutive valid frames for `slot`, as `[start, end)`.
    pub fn segments(&self, slot: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = None;
        for t in 0..self.frames {
            match (self.is_active(t, slot), start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    out.push((s, t));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, self.frames));
        }
        out
    }
}

/// Nearly-constant-velocity motion with per-axis acceleration noise of
/// standard deviation `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "MotionParams", into = "MotionParams")]
pub struct MotionModel {
    pub dt: f64,
    pub q: f64,
    transition: [[f64; 4]; 4],
    noise_input: [[f64; 2]; 4],
}

#[derive(Serialize, Deserialize)]
struct MotionParams {
    dt: f64,
    q: f64,
}

impl From<MotionParams> for MotionModel {
    fn from(p: MotionParams) -> Self {
        MotionModel::new(p.dt, p.q)
    }
}

impl From<MotionModel> for MotionParams {
    fn from(m: MotionModel) -> Self {
        MotionParams { dt: m.dt, q: m.q }
    }
}

impl MotionModel {
    pub fn new(dt: f64, q: f64) -> Self {
        let h = 0.5 * dt * dt;
        Self {
            dt,
            q,
            transition: [
                [1.0, 0.0, dt, 0.0],
                [0.0, 1.0, 0.0, dt],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ],
            noise_input: [[h, 0.0], [0.0, h], [dt, 0.0], [0.0, dt]],
        }
    }

    pub fn transition(&self) -> &[[f64; 4]; 4] {
        &self.transition
    }

    pub fn noise_input(&self) -> &[[f64; 2]; 4] {
        &self.noise_input
    }

    /// Noiseless drift `A x`.
    pub fn predict(&self, state: &KinematicState) -> KinematicState {
        ncv_propagate(state, self, [0.0, 0.0])
    }

    /// `A x + B q u` with `u` drawn from the standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, state: &KinematicState, rng: &mut R) -> KinematicState {
        let u = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
        ncv_propagate(state, self, u)
    }
}

/// One NCV step: `A state + B (q noise)` where `noise` is a standard-normal draw.
pub fn ncv_propagate(state: &KinematicState, model: &MotionModel, noise: [f64; 2]) -> KinematicState {
    let x = state.as_array();
    let u = [model.q * noise[0], model.q * noise[1]];
    let a = &model.transition;
    let b = &model.noise_input;
    let mut out = [0.0; 4];
    for (i, o) in out.iter_mut().enumerate() {
        *o = a[i].iter().zip(&x).map(|(aij, xj)| aij * xj).sum::<f64>()
            + b[i][0] * u[0]
            + b[i][1] * u[1];
    }
    KinematicState::from_array(out)
}

/// Uniform position over the room, zero-mean Gaussian velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirthModel {
    pub room: RoomConfig,
    pub velocity_std: f64,
}

impl BirthModel {
    pub fn new(room: RoomConfig, velocity_std: f64) -> Result<Self> {
        if !(velocity_std >= 0.0 && velocity_std.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "birth velocity std must be non-negative, got {velocity_std}"
            )));
        }
        Ok(Self { room, velocity_std })
    }

    /// Mean of the birth density: room center at rest.
    pub fn mean(&self) -> KinematicState {
        let [cx, cy] = self.room.center();
        KinematicState::new(cx, cy, 0.0, 0.0)
    }
}

pub fn sample_birth<R: Rng + ?Sized>(birth: &BirthModel, rng: &mut R) -> KinematicState {
    let px = rng.random::<f64>() * birth.room.width;
    let py = rng.random::<f64>() * birth.room.height;
    let vx: f64 = StandardNormal.sample(rng);
    let vy: f64 = StandardNormal.sample(rng);
    KinematicState::new(px, py, birth.velocity_std * vx, birth.velocity_std * vy)
}

pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

/// Ground-truth trajectories for every frame of `activity`.
///
/// Each maximal valid segment of a slot starts with a birth draw and follows
/// the NCV model; the segment is redrawn as a whole until every position in
/// it lies inside the room. Segments are independent given the schedule, so
/// this samples the same distribution as rejecting the joint trajectory.
pub fn generate_truth<R: Rng + ?Sized>(
    room: &RoomConfig,
    activity: &ActivitySchedule,
    motion: &MotionModel,
    birth: &BirthModel,
    rng: &mut R,
    max_attempts: usize,
) -> Result<Vec<MultiTargetState>> {
    if max_attempts == 0 {
        return Err(Error::InvalidArgument("max_attempts must be at least 1".into()));
    }
    let n_slots = activity.slots();
    let mut truth = vec![MultiTargetState::zeros(n_slots); activity.frames()];
    for slot in 0..n_slots {
        for (start, end) in activity.segments(slot) {
            let segment = sample_segment(room, motion, birth, rng, end - start, max_attempts)
                .ok_or(Error::GenerationFailed {
                    slot,
                    attempts: max_attempts,
                })?;
            for (t, s) in (start..end).zip(segment) {
                truth[t].slots[slot] = s;
            }
        }
        // Placeholder: invalid frames keep the slot's last value.
        for t in 1..activity.frames() {
            if !activity.is_active(t, slot) {
                truth[t].slots[slot] = truth[t - 1].slots[slot];
            }
        }
    }
    Ok(truth)
}

fn sample_segment<R: Rng + ?Sized>(
    room: &RoomConfig,
    motion: &MotionModel,
    birth: &BirthModel,
    rng: &mut R,
    len: usize,
    max_attempts: usize,
) -> Option<Vec<KinematicState>> {
    let mut segment = Vec::with_capacity(len);
    'attempt: for _ in 0..max_attempts {
        segment.clear();
        let mut state = sample_birth(birth, rng);
        for k in 0..len {
            if k > 0 {
                state = motion.sample(&state, rng);
            }
            if !room.contains(state.position()) {
                continue 'attempt;
            }
            segment.push(state);
        }
        return Some(segment);
    }
    None
}
