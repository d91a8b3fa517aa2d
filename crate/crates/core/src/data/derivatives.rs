use ndarray::{Array3, Axis};

use crate::error::{MidasError, Result};

/// Backward-difference velocities and forward-difference accelerations.
///
/// `v[t] = (p[t] - p[t-1]) / dt` for `t >= 1` and `a[t] = (v[t+1] - v[t]) / dt`
/// for `t <= T-2`. The undefined boundary values `v[0]` and `a[T-1]` copy their
/// nearest defined neighbour, so `a[0]` is computed from the replicated `v[0]`.
pub fn compute_derivatives(positions: &Array3<f64>, dt: f64) -> Result<(Array3<f64>, Array3<f64>)> {
    let (_, t, _) = positions.dim();
    if t < 3 {
        return Err(MidasError::InvalidWindow(format!("need at least 3 frames, got {t}")));
    }
    if !(dt > 0.0) {
        return Err(MidasError::InvalidWindow(format!("non-positive dt {dt}")));
    }
    let mut vel = Array3::zeros(positions.raw_dim());
    let mut acc = Array3::zeros(positions.raw_dim());
    for (p, mut v) in positions.axis_iter(Axis(0)).zip(vel.axis_iter_mut(Axis(0))) {
        for f in 1..t {
            for d in 0..2 {
                v[[f, d]] = (p[[f, d]] - p[[f - 1, d]]) / dt;
            }
        }
        for d in 0..2 {
            v[[0, d]] = v[[1, d]];
        }
    }
    for (v, mut a) in vel.axis_iter(Axis(0)).zip(acc.axis_iter_mut(Axis(0))) {
        for f in 0..t - 1 {
            for d in 0..2 {
                a[[f, d]] = (v[[f + 1, d]] - v[[f, d]]) / dt;
            }
        }
        for d in 0..2 {
            a[[t - 1, d]] = a[[t - 2, d]];
        }
    }
    Ok((vel, acc))
}
