//! Missing-data scenarios: uniform, agent-wise and ball-following camera masks.
//!
//! Masks are `[agent, frame]` boolean matrices where `true` means observed.
//! The first and last `guard` frames are always observed, so every missing run
//! has an observed anchor on both sides.

use std::collections::HashMap;
use std::io::{Read, Write};

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::TrajectoryWindow;
use crate::error::{MidasError, Result};

pub const DEFAULT_GUARD: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    values: Array2<bool>,
    guard: usize,
}

impl MaskMatrix {
    /// Wraps raw indicators, enforcing the guard invariant.
    pub fn new(values: Array2<bool>, guard: usize) -> Result<Self> {
        let (_, t) = values.dim();
        if t < 2 * guard.max(1) {
            return Err(MidasError::Shape(format!("{t} frames cannot hold guard {guard}")));
        }
        let g = guard.max(1);
        for row in values.rows() {
            if row.iter().take(g).chain(row.iter().skip(t - g)).any(|&o| !o) {
                return Err(MidasError::InvalidWindow(format!("guard frames must be observed (guard {guard})")));
            }
        }
        Ok(Self { values, guard })
    }

    pub fn all_observed(agents: usize, frames: usize, guard: usize) -> Self {
        Self { values: Array2::from_elem((agents, frames), true), guard }
    }

    pub fn values(&self) -> &Array2<bool> {
        &self.values
    }

    pub fn guard(&self) -> usize {
        self.guard
    }

    pub fn agents(&self) -> usize {
        self.values.dim().0
    }

    pub fn frames(&self) -> usize {
        self.values.dim().1
    }

    pub fn observed(&self, agent: usize, frame: usize) -> bool {
        self.values[[agent, frame]]
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|&&o| !o).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_count() as f64 / self.values.len() as f64
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { values: self.values.select(Axis(0), perm), guard: self.guard }
    }
}

/// One maximal missing run for an agent; `t_s` and `t_e` are the observed
/// frames bracketing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MissingSegment {
    pub agent: usize,
    pub t_s: usize,
    pub t_e: usize,
}

impl MissingSegment {
    /// Number of missing frames strictly inside the segment.
    pub fn missing_len(&self) -> usize {
        self.t_e - self.t_s - 1
    }

    pub fn missing_frames(&self) -> std::ops::Range<usize> {
        self.t_s + 1..self.t_e
    }
}

/// Extracts all missing runs, sorted by agent then start.
pub fn segments(mask: &MaskMatrix) -> Vec<MissingSegment> {
    let mut out = Vec::new();
    for (agent, row) in mask.values.rows().into_iter().enumerate() {
        let mut t = 0;
        let n = row.len();
        while t < n {
            if row[t] {
                t += 1;
                continue;
            }
            let start = t;
            while t < n && !row[t] {
                t += 1;
            }
            // The guard invariant keeps runs away from both window edges.
            debug_assert!(start > 0 && t < n);
            out.push(MissingSegment { agent, t_s: start - 1, t_e: t });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Uniform,
    #[serde(rename = "agentwise")]
    AgentWise,
    Camera,
}

impl std::str::FromStr for Scenario {
    type Err = MidasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Scenario::Uniform),
            "agentwise" | "agent-wise" | "agent_wise" => Ok(Scenario::AgentWise),
            "camera" => Ok(Scenario::Camera),
            other => Err(MidasError::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Uniform => "uniform",
            Scenario::AgentWise => "agentwise",
            Scenario::Camera => "camera",
        })
    }
}

/// Virtual broadcast camera: an axis-aligned view following the smoothed ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub width: f64,
    pub height: f64,
    /// Moving-average span applied to the ball path, in seconds.
    pub smoothing_s: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self { width: 50.0, height: 35.0, smoothing_s: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Missing rate for a batch: U[0.1, 0.9] while training, 0.5 at evaluation.
pub fn missing_rate_schedule<R: Rng + ?Sized>(phase: Phase, rng: &mut R) -> f64 {
    match phase {
        Phase::Train => rng.random_range(0.1..=0.9),
        Phase::Eval => 0.5,
    }
}

/// Guard width and number of blocks per agent used by the block scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskParams {
    pub guard: usize,
    pub blocks: usize,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self { guard: DEFAULT_GUARD, blocks: 1 }
    }
}

impl MaskParams {
    fn block_layout<R: Rng + ?Sized>(&self, frames: usize, rate: f64, rng: &mut R) -> Result<Vec<(usize, usize)>> {
        if !(0.0..=1.0).contains(&rate) || !rate.is_finite() {
            return Err(MidasError::InvalidRate { rate, reason: "must lie in [0, 1]".into() });
        }
        let total = (rate * frames as f64).round() as usize;
        if total == 0 {
            return Ok(Vec::new());
        }
        let blocks = self.blocks.max(1).min(total);
        let usable = frames.saturating_sub(2 * self.guard);
        // Blocks are separated by at least one observed frame.
        let needed = total + blocks - 1;
        if needed > usable {
            return Err(MidasError::InvalidRate {
                rate,
                reason: format!("{total} missing frames in {blocks} blocks exceed the {usable} frames between guards"),
            });
        }
        let free = usable - needed;
        let mut cuts: Vec<usize> = (0..blocks).map(|_| rng.random_range(0..=free)).collect();
        cuts.sort_unstable();
        let base = total / blocks;
        let extra = total % blocks;
        let mut layout = Vec::with_capacity(blocks);
        let mut cursor = self.guard;
        let mut prev_cut = 0;
        for (i, cut) in cuts.into_iter().enumerate() {
            cursor += cut - prev_cut;
            prev_cut = cut;
            let len = base + usize::from(i < extra);
            layout.push((cursor, len));
            cursor += len + 1;
        }
        Ok(layout)
    }

    /// One shared missing interval for every agent.
    pub fn uniform<R: Rng + ?Sized>(&self, frames: usize, agents: usize, rate: f64, rng: &mut R) -> Result<MaskMatrix> {
        let layout = self.block_layout(frames, rate, rng)?;
        let mut values = Array2::from_elem((agents, frames), true);
        for (start, len) in layout {
            values.slice_mut(ndarray::s![.., start..start + len]).fill(false);
        }
        MaskMatrix::new(values, self.guard)
    }

    /// Independent missing interval per agent, each at its own rate.
    pub fn agent_wise_rates<R: Rng + ?Sized>(&self, frames: usize, rates: &[f64], rng: &mut R) -> Result<MaskMatrix> {
        let mut values = Array2::from_elem((rates.len(), frames), true);
        for (k, &rate) in rates.iter().enumerate() {
            for (start, len) in self.block_layout(frames, rate, rng)? {
                values.slice_mut(ndarray::s![k, start..start + len]).fill(false);
            }
        }
        MaskMatrix::new(values, self.guard)
    }

    pub fn agent_wise<R: Rng + ?Sized>(&self, frames: usize, agents: usize, rate: f64, rng: &mut R) -> Result<MaskMatrix> {
        self.agent_wise_rates(frames, &vec![rate; agents], rng)
    }

    /// Players are observed only while inside the camera view.
    pub fn camera(&self, window: &TrajectoryWindow, camera: &CameraSpec) -> Result<MaskMatrix> {
        let ball = window.ball.as_ref().ok_or(MidasError::MissingBall)?;
        let frames = window.frames();
        let span = ((camera.smoothing_s / window.dt).round() as usize).max(1);
        let half = span / 2;
        let pitch = window.pitch;
        let clamp_center = |c: f64, extent: f64, view: f64| {
            if view >= extent {
                extent / 2.0
            } else {
                c.clamp(view / 2.0, extent - view / 2.0)
            }
        };
        let mut values = Array2::from_elem((window.agents(), frames), true);
        for t in 0..frames {
            let lo = t.saturating_sub(half);
            let hi = (t + span - half).min(frames);
            let n = (hi - lo) as f64;
            let mut c = [0.0; 2];
            for f in lo..hi {
                c[0] += ball[[f, 0]];
                c[1] += ball[[f, 1]];
            }
            let cx = clamp_center(c[0] / n, pitch.length, camera.width);
            let cy = clamp_center(c[1] / n, pitch.width, camera.height);
            for k in 0..window.agents() {
                let x = window.positions[[k, t, 0]];
                let y = window.positions[[k, t, 1]];
                values[[k, t]] = (x - cx).abs() <= camera.width / 2.0 && (y - cy).abs() <= camera.height / 2.0;
            }
        }
        let g = self.guard.min(frames / 2);
        values.slice_mut(ndarray::s![.., ..g]).fill(true);
        values.slice_mut(ndarray::s![.., frames - g..]).fill(true);
        MaskMatrix::new(values, self.guard)
    }

    /// Dispatches on scenario. `rate` is ignored by the camera scenario.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        scenario: Scenario,
        window: &TrajectoryWindow,
        rate: f64,
        camera: &CameraSpec,
        rng: &mut R,
    ) -> Result<MaskMatrix> {
        match scenario {
            Scenario::Uniform => self.uniform(window.frames(), window.agents(), rate, rng),
            Scenario::AgentWise => self.agent_wise(window.frames(), window.agents(), rate, rng),
            Scenario::Camera => self.camera(window, camera),
        }
    }
}

pub fn uniform_mask<R: Rng + ?Sized>(frames: usize, agents: usize, rate: f64, rng: &mut R) -> Result<MaskMatrix> {
    MaskParams::default().uniform(frames, agents, rate, rng)
}

pub fn agent_wise_mask<R: Rng + ?Sized>(frames: usize, agents: usize, rate: f64, rng: &mut R) -> Result<MaskMatrix> {
    MaskParams::default().agent_wise(frames, agents, rate, rng)
}

pub fn camera_mask(window: &TrajectoryWindow, camera: &CameraSpec) -> Result<MaskMatrix> {
    MaskParams::default().camera(window, camera)
}

/// Writes masks as `sequence_id,frame_idx,agent_id,observed` rows.
pub fn write_mask_csv<W: Write>(writer: W, windows: &[TrajectoryWindow], masks: &[MaskMatrix]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["sequence_id", "frame_idx", "agent_id", "observed"])?;
    for (w, m) in windows.iter().zip(masks) {
        for t in 0..m.frames() {
            for (k, id) in w.agent_ids.iter().enumerate() {
                wtr.write_record([w.sequence_id.as_str(), &t.to_string(), id, if m.observed(k, t) { "1" } else { "0" }])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a mask CSV and aligns it with the given windows' agent order.
pub fn read_mask_csv<R: Read>(reader: R, windows: &[TrajectoryWindow], guard: usize) -> Result<Vec<MaskMatrix>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut table: HashMap<(String, String), Vec<(usize, bool)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let frame: usize = rec[1].parse().map_err(|_| MidasError::Format(format!("bad frame '{}'", &rec[1])))?;
        let observed = match &rec[3] {
            "1" => true,
            "0" => false,
            other => return Err(MidasError::Format(format!("observed must be 0/1, got '{other}'"))),
        };
        table.entry((rec[0].to_string(), rec[2].to_string())).or_default().push((frame, observed));
    }
    windows
        .iter()
        .map(|w| {
            let mut values = Array2::from_elem((w.agents(), w.frames()), true);
            for (k, id) in w.agent_ids.iter().enumerate() {
                let rows = table.get(&(w.sequence_id.clone(), id.clone())).ok_or_else(|| {
                    MidasError::Schema(format!("mask lacks agent {id} of sequence {}", w.sequence_id))
                })?;
                for &(f, o) in rows {
                    if f >= w.frames() {
                        return Err(MidasError::Schema(format!("mask frame {f} beyond window")));
                    }
                    values[[k, f]] = o;
                }
            }
            MaskMatrix::new(values, guard)
        })
        .collect()
}
