use ndarray::{Array3, Axis};

use super::{PitchBounds, TrajectoryWindow};
use crate::error::{MidasError, Result};

/// Per-axis affine map from pitch meters onto `[-1, 1]^2`.
///
/// Velocities and accelerations use the same per-axis scale as positions
/// (without the offset), so finite-difference relations survive the mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub scale: [f64; 2],
    pub offset: [f64; 2],
}

impl Normalizer {
    pub fn new(pitch: PitchBounds) -> Result<Self> {
        if !(pitch.length > 0.0 && pitch.width > 0.0) || !pitch.length.is_finite() || !pitch.width.is_finite() {
            return Err(MidasError::DegenerateBounds { length: pitch.length, width: pitch.width });
        }
        Ok(Self {
            scale: [2.0 / pitch.length, 2.0 / pitch.width],
            offset: [-1.0, -1.0],
        })
    }

    pub fn point(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] * self.scale[0] + self.offset[0], p[1] * self.scale[1] + self.offset[1]]
    }

    pub fn inverse_point(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.offset[0]) / self.scale[0], (p[1] - self.offset[1]) / self.scale[1]]
    }

    /// Maps a `[.., .., 2]` position array.
    pub fn positions(&self, p: &Array3<f64>) -> Array3<f64> {
        let mut out = p.clone();
        for mut lane in out.lanes_mut(Axis(2)) {
            let q = self.point([lane[0], lane[1]]);
            lane[0] = q[0];
            lane[1] = q[1];
        }
        out
    }

    pub fn inverse_positions(&self, p: &Array3<f64>) -> Array3<f64> {
        let mut out = p.clone();
        for mut lane in out.lanes_mut(Axis(2)) {
            let q = self.inverse_point([lane[0], lane[1]]);
            lane[0] = q[0];
            lane[1] = q[1];
        }
        out
    }

    /// Scales a derivative array (velocity, acceleration) along its last axis.
    pub fn derivative(&self, d: &Array3<f64>) -> Array3<f64> {
        let mut out = d.clone();
        for mut lane in out.lanes_mut(Axis(2)) {
            lane[0] *= self.scale[0];
            lane[1] *= self.scale[1];
        }
        out
    }

    pub fn inverse_derivative(&self, d: &Array3<f64>) -> Array3<f64> {
        let mut out = d.clone();
        for mut lane in out.lanes_mut(Axis(2)) {
            lane[0] /= self.scale[0];
            lane[1] /= self.scale[1];
        }
        out
    }

    /// Distance in meters to normalized units along each axis.
    pub fn meters_to_units(&self, m: [f64; 2]) -> [f64; 2] {
        [m[0] * self.scale[0], m[1] * self.scale[1]]
    }

    pub fn window(&self, w: &TrajectoryWindow) -> TrajectoryWindow {
        TrajectoryWindow {
            positions: self.positions(&w.positions),
            velocities: self.derivative(&w.velocities),
            accelerations: self.derivative(&w.accelerations),
            ball: w.ball.as_ref().map(|b| {
                let mut b = b.clone();
                for mut row in b.rows_mut() {
                    let q = self.point([row[0], row[1]]);
                    row[0] = q[0];
                    row[1] = q[1];
                }
                b
            }),
            ..w.clone()
        }
    }

    pub fn inverse_window(&self, w: &TrajectoryWindow) -> TrajectoryWindow {
        TrajectoryWindow {
            positions: self.inverse_positions(&w.positions),
            velocities: self.inverse_derivative(&w.velocities),
            accelerations: self.inverse_derivative(&w.accelerations),
            ball: w.ball.as_ref().map(|b| {
                let mut b = b.clone();
                for mut row in b.rows_mut() {
                    let q = self.inverse_point([row[0], row[1]]);
                    row[0] = q[0];
                    row[1] = q[1];
                }
                b
            }),
            ..w.clone()
        }
    }
}
