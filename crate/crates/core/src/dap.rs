//! Derivative-accumulating predictions.
//!
//! Inside each missing segment, positions are rebuilt by integrating the
//! network's predicted velocities and accelerations from an observed endpoint:
//! forward from `t_s`, backward from `t_e`. Under exact backward-difference
//! velocities and forward-difference accelerations both recursions reproduce
//! the true path, so any drift comes only from derivative error.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::error::{MidasError, Result};
use crate::masking::{segments, MaskMatrix, MissingSegment};

/// Which predicted derivatives drive the accumulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DapMode {
    /// `p[t] = p[t-1] + v[t] dt`
    VelOnly,
    /// `p[t] = p[t-1] + (v[t-1] + a[t-1] dt) dt`
    #[default]
    VelAccel,
}

impl std::str::FromStr for DapMode {
    type Err = MidasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vel_only" | "velocity" => Ok(DapMode::VelOnly),
            "vel_accel" => Ok(DapMode::VelAccel),
            other => Err(MidasError::Config(format!("unknown DAP mode '{other}'"))),
        }
    }
}

const V: usize = 2;
const A: usize = 4;

fn check(seg: &MissingSegment, frames: usize) -> Result<()> {
    if seg.t_e >= frames || seg.t_e < seg.t_s + 2 {
        return Err(MidasError::SegmentOutOfRange { t_s: seg.t_s, t_e: seg.t_e, frames });
    }
    Ok(())
}

/// Forward pass for one agent. `ip` is that agent's `[T, 6]` prediction
/// (position, velocity, acceleration). Returns positions for `t_s+1 .. t_e`.
pub fn accumulate_forward(
    seg: &MissingSegment,
    anchor: [f64; 2],
    ip: ArrayView2<f64>,
    dt: f64,
    mode: DapMode,
) -> Result<Vec<[f64; 2]>> {
    check(seg, ip.nrows())?;
    let mut p = anchor;
    let mut out = Vec::with_capacity(seg.missing_len());
    for t in seg.missing_frames() {
        for d in 0..2 {
            p[d] += match mode {
                DapMode::VelAccel => (ip[[t - 1, V + d]] + ip[[t - 1, A + d]] * dt) * dt,
                DapMode::VelOnly => ip[[t, V + d]] * dt,
            };
        }
        out.push(p);
    }
    Ok(out)
}

/// Backward pass for one agent, anchored at `t_e`. Returns positions for
/// `t_s+1 .. t_e` in increasing frame order. When `t + 2` falls past the
/// window the step uses `v[t+1]` alone.
pub fn accumulate_backward(
    seg: &MissingSegment,
    anchor: [f64; 2],
    ip: ArrayView2<f64>,
    dt: f64,
    mode: DapMode,
) -> Result<Vec<[f64; 2]>> {
    let frames = ip.nrows();
    check(seg, frames)?;
    let mut p = anchor;
    let mut out = vec![[0.0; 2]; seg.missing_len()];
    for t in seg.missing_frames().rev() {
        for d in 0..2 {
            p[d] -= match mode {
                DapMode::VelAccel if t + 2 < frames => (ip[[t + 2, V + d]] - ip[[t + 1, A + d]] * dt) * dt,
                _ => ip[[t + 1, V + d]] * dt,
            };
        }
        out[t - seg.t_s - 1] = p;
    }
    Ok(out)
}

/// Adds the vector-Jacobian product of [`accumulate_forward`] into `grad_ip`
/// (`[T, 6]`), given `grad_out` for each output frame.
pub(crate) fn forward_vjp(seg: &MissingSegment, grad_out: &[[f64; 2]], dt: f64, mode: DapMode, mut grad_ip: ArrayViewMut2<f64>) {
    let mut carry = [0.0; 2];
    for t in seg.missing_frames().rev() {
        let g = grad_out[t - seg.t_s - 1];
        for d in 0..2 {
            carry[d] += g[d];
            match mode {
                DapMode::VelAccel => {
                    grad_ip[[t - 1, V + d]] += carry[d] * dt;
                    grad_ip[[t - 1, A + d]] += carry[d] * dt * dt;
                }
                DapMode::VelOnly => grad_ip[[t, V + d]] += carry[d] * dt,
            }
        }
    }
}

/// Vector-Jacobian product of [`accumulate_backward`].
pub(crate) fn backward_vjp(seg: &MissingSegment, grad_out: &[[f64; 2]], dt: f64, mode: DapMode, mut grad_ip: ArrayViewMut2<f64>) {
    let frames = grad_ip.nrows();
    let mut carry = [0.0; 2];
    for t in seg.missing_frames() {
        let g = grad_out[t - seg.t_s - 1];
        for d in 0..2 {
            carry[d] += g[d];
            match mode {
                DapMode::VelAccel if t + 2 < frames => {
                    grad_ip[[t + 2, V + d]] -= carry[d] * dt;
                    grad_ip[[t + 1, A + d]] += carry[d] * dt * dt;
                }
                _ => grad_ip[[t + 1, V + d]] -= carry[d] * dt,
            }
        }
    }
}

/// Forward and backward tracks for a whole window.
///
/// Both arrays hold the observed position on frames that are not missing and
/// the accumulated estimate on missing frames; `defined` marks the latter.
#[derive(Debug, Clone, PartialEq)]
pub struct DapResult {
    pub forward: Array3<f64>,
    pub backward: Array3<f64>,
    pub defined: Array2<bool>,
}

/// Runs both recursions over every missing segment. `positions` is `[K, T, 2]`
/// ground truth (only observed frames are read) and `ip` is `[K, T, 6]`.
pub fn dap(positions: ArrayView3<f64>, mask: &MaskMatrix, ip: ArrayView3<f64>, dt: f64, mode: DapMode) -> Result<DapResult> {
    let (k, t, _) = positions.dim();
    if ip.dim() != (k, t, 6) || mask.agents() != k || mask.frames() != t {
        return Err(MidasError::Shape(format!(
            "positions {:?}, ip {:?}, mask {}x{}",
            positions.dim(),
            ip.dim(),
            mask.agents(),
            mask.frames()
        )));
    }
    let mut forward = positions.to_owned();
    let mut backward = positions.to_owned();
    let defined = mask.values().mapv(|o| !o);
    for seg in segments(mask) {
        let a = seg.agent;
        let agent_ip = ip.index_axis(ndarray::Axis(0), a);
        let start = [positions[[a, seg.t_s, 0]], positions[[a, seg.t_s, 1]]];
        let end = [positions[[a, seg.t_e, 0]], positions[[a, seg.t_e, 1]]];
        let f = accumulate_forward(&seg, start, agent_ip, dt, mode)?;
        let b = accumulate_backward(&seg, end, agent_ip, dt, mode)?;
        for (i, t) in seg.missing_frames().enumerate() {
            for d in 0..2 {
                forward[[a, t, d]] = f[i][d];
                backward[[a, t, d]] = b[i][d];
            }
        }
    }
    Ok(DapResult { forward, backward, defined })
}
