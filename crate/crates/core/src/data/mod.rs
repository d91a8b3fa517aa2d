//! Canonical trajectory records and the ingestion path that produces them.
//!
//! Every source format is converted into [`TrajectoryWindow`]s: fixed-length,
//! complete multi-agent segments resampled onto the target frame rate, with
//! velocities and accelerations derived by finite differences.

mod adapters;
mod derivatives;
mod ingest;
mod normalize;
mod resample;
pub mod synthetic;

pub use adapters::{read_metrica_pair, read_nrtsi_npy, read_sportvu_json};
pub use derivatives::compute_derivatives;
pub use ingest::{
    ingest, read_canonical_csv, read_windows_csv, slice_windows, write_canonical_csv, SourceFormat, Track,
    TrackSet,
};
pub use normalize::Normalizer;
pub use resample::nearest_timestamp_indices;

use ndarray::{s, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{MidasError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sport {
    Soccer,
    Basketball,
    AmFootball,
}

impl std::str::FromStr for Sport {
    type Err = MidasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soccer" => Ok(Sport::Soccer),
            "basketball" => Ok(Sport::Basketball),
            "football" | "am_football" => Ok(Sport::AmFootball),
            other => Err(MidasError::Config(format!("unknown sport '{other}'"))),
        }
    }
}

impl std::fmt::Display for Sport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sport::Soccer => "soccer",
            Sport::Basketball => "basketball",
            Sport::AmFootball => "football",
        })
    }
}

/// Playing-area extent in meters. The origin sits at one corner, so valid
/// coordinates span `[0, length] x [0, width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchBounds {
    pub length: f64,
    pub width: f64,
}

impl PitchBounds {
    pub const SOCCER: PitchBounds = PitchBounds { length: 105.0, width: 68.0 };
    /// 94 x 50 ft.
    pub const BASKETBALL: PitchBounds = PitchBounds { length: 28.6512, width: 15.24 };
    /// 120 x 53.3 yd including end zones.
    pub const FOOTBALL: PitchBounds = PitchBounds { length: 109.728, width: 48.768 };

    pub fn center(&self) -> [f64; 2] {
        [self.length / 2.0, self.width / 2.0]
    }

    pub fn contains(&self, p: [f64; 2], margin: f64) -> bool {
        p[0] >= -margin
            && p[0] <= self.length + margin
            && p[1] >= -margin
            && p[1] <= self.width + margin
    }
}

/// Per-sport ingestion parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub sport: Sport,
    pub agents: usize,
    pub native_hz: f64,
    pub target_hz: f64,
    pub window_frames: usize,
    pub pitch: PitchBounds,
    /// Tolerance outside the pitch before a position is considered corrupt.
    pub margin: f64,
}

impl DatasetSpec {
    pub fn soccer() -> Self {
        Self {
            sport: Sport::Soccer,
            agents: 22,
            native_hz: 25.0,
            target_hz: 10.0,
            window_frames: 200,
            pitch: PitchBounds::SOCCER,
            margin: 5.0,
        }
    }

    pub fn basketball() -> Self {
        Self {
            sport: Sport::Basketball,
            agents: 10,
            native_hz: 25.0,
            target_hz: 10.0,
            window_frames: 200,
            pitch: PitchBounds::BASKETBALL,
            margin: 5.0,
        }
    }

    pub fn football() -> Self {
        Self {
            sport: Sport::AmFootball,
            agents: 6,
            native_hz: 10.0,
            target_hz: 10.0,
            window_frames: 50,
            pitch: PitchBounds::FOOTBALL,
            margin: 5.0,
        }
    }

    pub fn for_sport(sport: Sport) -> Self {
        match sport {
            Sport::Soccer => Self::soccer(),
            Sport::Basketball => Self::basketball(),
            Sport::AmFootball => Self::football(),
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.target_hz
    }

    pub fn window_seconds(&self) -> f64 {
        self.window_frames as f64 * self.dt()
    }

    /// Short stable digest stored in checkpoints to detect spec mismatches.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("dataset spec serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// One fixed-length multi-agent segment. Arrays are `[agent, frame, axis]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    pub sequence_id: String,
    pub agent_ids: Vec<String>,
    pub dt: f64,
    pub positions: Array3<f64>,
    pub velocities: Array3<f64>,
    pub accelerations: Array3<f64>,
    pub pitch: PitchBounds,
    pub ball: Option<Array2<f64>>,
}

impl TrajectoryWindow {
    /// Builds a window from positions alone, deriving velocities and accelerations.
    pub fn from_positions(
        sequence_id: impl Into<String>,
        agent_ids: Vec<String>,
        positions: Array3<f64>,
        dt: f64,
        pitch: PitchBounds,
        ball: Option<Array2<f64>>,
    ) -> Result<Self> {
        let (k, t, axes) = positions.dim();
        if axes != 2 {
            return Err(MidasError::Shape(format!("positions must be K x T x 2, got axis {axes}")));
        }
        if agent_ids.len() != k {
            return Err(MidasError::Shape(format!(
                "{} agent ids for {k} agents",
                agent_ids.len()
            )));
        }
        if let Some(b) = &ball {
            if b.dim() != (t, 2) {
                return Err(MidasError::Shape(format!("ball track {:?} for {t} frames", b.dim())));
            }
        }
        let (velocities, accelerations) = compute_derivatives(&positions, dt)?;
        Ok(Self {
            sequence_id: sequence_id.into(),
            agent_ids,
            dt,
            positions,
            velocities,
            accelerations,
            pitch,
            ball,
        })
    }

    pub fn agents(&self) -> usize {
        self.positions.dim().0
    }

    pub fn frames(&self) -> usize {
        self.positions.dim().1
    }

    /// Position, velocity and acceleration stacked as `[K, T, 6]`.
    pub fn features(&self) -> Array3<f64> {
        let (k, t, _) = self.positions.dim();
        let mut out = Array3::zeros((k, t, 6));
        out.slice_mut(s![.., .., 0..2]).assign(&self.positions);
        out.slice_mut(s![.., .., 2..4]).assign(&self.velocities);
        out.slice_mut(s![.., .., 4..6]).assign(&self.accelerations);
        out
    }

    /// Checks length and pitch containment against a dataset spec.
    pub fn validate(&self, spec: &DatasetSpec) -> Result<()> {
        if self.frames() != spec.window_frames {
            return Err(MidasError::InvalidWindow(format!(
                "{} frames, expected {}",
                self.frames(),
                spec.window_frames
            )));
        }
        if self.agents() != spec.agents {
            return Err(MidasError::Schema(format!(
                "{} agents, expected {}",
                self.agents(),
                spec.agents
            )));
        }
        for lane in self.positions.lanes(Axis(2)) {
            if !self.pitch.contains([lane[0], lane[1]], spec.margin) {
                return Err(MidasError::InvalidWindow(format!(
                    "position ({}, {}) outside pitch",
                    lane[0], lane[1]
                )));
            }
        }
        Ok(())
    }

    /// Reorders agents so that output agent `i` is input agent `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let take = |a: &Array3<f64>| a.select(Axis(0), perm);
        Self {
            sequence_id: self.sequence_id.clone(),
            agent_ids: perm.iter().map(|&i| self.agent_ids[i].clone()).collect(),
            dt: self.dt,
            positions: take(&self.positions),
            velocities: take(&self.velocities),
            accelerations: take(&self.accelerations),
            pitch: self.pitch,
            ball: self.ball.clone(),
        }
    }
}
