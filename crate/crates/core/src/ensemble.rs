//! Soft-voting combination of the initial prediction and the two DAP tracks.
//!
//! The learned part (the ensemble recurrence and its softmax head) lives in
//! [`crate::model`]; this module holds the pure pieces it is built from.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};

use crate::error::{MidasError, Result};
use crate::masking::{segments, MaskMatrix};

/// Per agent-frame weights `(λi, λf, λb)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights {
    lambdas: Array3<f64>,
}

impl EnsembleWeights {
    pub const TOLERANCE: f64 = 1e-6;

    /// Checks that every triple is on the probability simplex.
    pub fn new(lambdas: Array3<f64>) -> Result<Self> {
        if lambdas.dim().2 != 3 {
            return Err(MidasError::Shape(format!("ensemble weights {:?}, expected [K, T, 3]", lambdas.dim())));
        }
        for triple in lambdas.lanes(Axis(2)) {
            let sum: f64 = triple.sum();
            if triple.iter().any(|&l| !(l >= 0.0)) || (sum - 1.0).abs() > Self::TOLERANCE {
                return Err(MidasError::Shape(format!("weights {triple} are not on the simplex")));
            }
        }
        Ok(EnsembleWeights { lambdas })
    }

    pub fn lambdas(&self) -> &Array3<f64> {
        &self.lambdas
    }

    pub fn into_inner(self) -> Array3<f64> {
        self.lambdas
    }
}

/// Frame gaps `(t - t_s, t_e - t)` for every missing agent-frame, zero elsewhere.
pub fn gap_deltas(mask: &MaskMatrix) -> Array3<f64> {
    let mut delta = Array3::zeros((mask.agents(), mask.frames(), 2));
    for seg in segments(mask) {
        for t in seg.missing_frames() {
            delta[[seg.agent, t, 0]] = (t - seg.t_s) as f64;
            delta[[seg.agent, t, 1]] = (seg.t_e - t) as f64;
        }
    }
    delta
}

/// `γ = exp(-relu(δ W + b))` for a batch of rows. `delta` is `[n, 2]`,
/// `w` is `[2, g]` and `b` has length `g`.
pub fn temporal_decay(delta: ArrayView2<f64>, w: ArrayView2<f64>, b: &[f64]) -> Result<Array2<f64>> {
    if delta.ncols() != 2 || w.nrows() != 2 || w.ncols() != b.len() {
        return Err(MidasError::Shape(format!("delta {:?}, W {:?}, b {}", delta.dim(), w.dim(), b.len())));
    }
    let mut gamma = delta.dot(&w);
    for mut row in gamma.rows_mut() {
        for (g, bias) in row.iter_mut().zip(b) {
            *g = (-(*g + bias).max(0.0)).exp();
        }
    }
    Ok(gamma)
}

/// `λi pi + λf pf + λb pb` per agent, frame and axis.
pub fn combine(ip_p: ArrayView3<f64>, forward: ArrayView3<f64>, backward: ArrayView3<f64>, weights: &EnsembleWeights) -> Result<Array3<f64>> {
    let dim = ip_p.dim();
    let l = weights.lambdas();
    if forward.dim() != dim || backward.dim() != dim || dim.2 != 2 || l.dim().0 != dim.0 || l.dim().1 != dim.1 {
        return Err(MidasError::Shape(format!(
            "ip {:?}, forward {:?}, backward {:?}, weights {:?}",
            dim,
            forward.dim(),
            backward.dim(),
            l.dim()
        )));
    }
    Ok(Array3::from_shape_fn(dim, |(k, t, d)| {
        l[[k, t, 0]] * ip_p[[k, t, d]] + l[[k, t, 1]] * forward[[k, t, d]] + l[[k, t, 2]] * backward[[k, t, d]]
    }))
}

/// Builds complete `[K, T, 6]` trajectories: observed frames copy `truth`
/// (already in feature layout), missing frames take `final_p` and the
/// velocities and accelerations of `ip`.
pub fn splice(truth: ArrayView3<f64>, mask: &MaskMatrix, final_p: ArrayView3<f64>, ip: ArrayView3<f64>) -> Result<Array3<f64>> {
    let (k, t, f) = truth.dim();
    if f != 6 || ip.dim() != (k, t, 6) || final_p.dim() != (k, t, 2) || mask.agents() != k || mask.frames() != t {
        return Err(MidasError::Shape(format!(
            "truth {:?}, final {:?}, ip {:?}, mask {}x{}",
            truth.dim(),
            final_p.dim(),
            ip.dim(),
            mask.agents(),
            mask.frames()
        )));
    }
    let mut out = truth.to_owned();
    for a in 0..k {
        for frame in 0..t {
            if mask.observed(a, frame) {
                continue;
            }
            out[[a, frame, 0]] = final_p[[a, frame, 0]];
            out[[a, frame, 1]] = final_p[[a, frame, 1]];
            for c in 2..6 {
                out[[a, frame, c]] = ip[[a, frame, c]];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random3(rng: &mut ChaCha8Rng, dim: (usize, usize, usize)) -> Array3<f64> {
        Array3::from_shape_fn(dim, |_| rng.random_range(-10.0..10.0))
    }

    fn random_weights(rng: &mut ChaCha8Rng, k: usize, t: usize) -> EnsembleWeights {
        let mut l = Array3::from_shape_fn((k, t, 3), |_| rng.random_range(0.0..1.0));
        for mut triple in l.lanes_mut(Axis(2)) {
            let s = triple.sum();
            triple /= s;
        }
        EnsembleWeights::new(l).unwrap()
    }

    #[test]
    fn zero_parameters_give_unit_decay() {
        let delta = Array2::from_shape_fn((7, 2), |(i, j)| (i + j) as f64);
        let g = temporal_decay(delta.view(), Array2::zeros((2, 16)).view(), &[0.0; 16]).unwrap();
        assert!(g.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn decay_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let delta = Array2::from_shape_fn((20, 2), |_| rng.random_range(0..100) as f64);
        let w = Array2::from_shape_fn((2, 8), |_| rng.random_range(-0.2..0.2));
        let b: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = temporal_decay(delta.view(), w.view(), &b).unwrap();
        for n in 0..20 {
            for j in 0..8 {
                let a = delta[[n, 0]] * w[[0, j]] + delta[[n, 1]] * w[[1, j]] + b[j];
                let expected = if a > 0.0 { (-a).exp() } else { 1.0 };
                assert!((g[[n, j]] - expected).abs() < 1e-12);
                assert!(g[[n, j]] > 0.0 && g[[n, j]] <= 1.0);
            }
        }
    }

    #[test]
    fn gap_deltas_count_frames_from_each_endpoint() {
        let mut values = Array2::from_elem((1, 20), true);
        values.slice_mut(s![0, 6..10]).fill(false);
        let d = gap_deltas(&MaskMatrix::new(values, 5).unwrap());
        assert_eq!(d.slice(s![0, 6..10, 0]).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.slice(s![0, 6..10, 1]).to_vec(), vec![4.0, 3.0, 2.0, 1.0]);
        assert_eq!(d[[0, 5, 0]], 0.0);
    }

    #[test]
    fn weights_off_the_simplex_are_rejected() {
        assert!(EnsembleWeights::new(Array3::from_elem((1, 1, 3), 0.5)).is_err());
        assert!(EnsembleWeights::new(Array3::from_shape_vec((1, 1, 3), vec![1.2, -0.2, 0.0]).unwrap()).is_err());
        assert!(EnsembleWeights::new(Array3::from_elem((1, 1, 2), 0.5)).is_err());
    }

    #[test]
    fn vertex_and_centroid_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (ip, f, b) = (random3(&mut rng, (3, 5, 2)), random3(&mut rng, (3, 5, 2)), random3(&mut rng, (3, 5, 2)));
        let mut l = Array3::zeros((3, 5, 3));
        l.slice_mut(s![.., .., 0]).fill(1.0);
        let out = combine(ip.view(), f.view(), b.view(), &EnsembleWeights::new(l).unwrap()).unwrap();
        assert_eq!(out, ip);
        let third = EnsembleWeights::new(Array3::from_elem((3, 5, 3), 1.0 / 3.0)).unwrap();
        let out = combine(ip.view(), f.view(), b.view(), &third).unwrap();
        let mean = (&ip + &f + &b) / 3.0;
        assert!(out.iter().zip(mean.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn combination_stays_inside_component_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let (ip, f, b) = (random3(&mut rng, (4, 9, 2)), random3(&mut rng, (4, 9, 2)), random3(&mut rng, (4, 9, 2)));
            let w = random_weights(&mut rng, 4, 9);
            let out = combine(ip.view(), f.view(), b.view(), &w).unwrap();
            for (((o, x), y), z) in out.iter().zip(ip.iter()).zip(f.iter()).zip(b.iter()) {
                let lo = x.min(*y).min(*z);
                let hi = x.max(*y).max(*z);
                assert!(*o >= lo - 1e-12 && *o <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn splice_selects_per_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let truth = random3(&mut rng, (3, 30, 6));
        let ip = random3(&mut rng, (3, 30, 6));
        let fin = random3(&mut rng, (3, 30, 2));
        let values = Array2::from_shape_fn((3, 30), |(_, t)| t < 5 || t >= 25 || rng.random_bool(0.5));
        let mask = MaskMatrix::new(values.clone(), 5).unwrap();
        let out = splice(truth.view(), &mask, fin.view(), ip.view()).unwrap();
        for ((k, t, c), v) in out.indexed_iter() {
            let expected = if values[[k, t]] {
                truth[[k, t, c]]
            } else if c < 2 {
                fin[[k, t, c]]
            } else {
                ip[[k, t, c]]
            };
            assert_eq!(v.to_bits(), expected.to_bits());
        }
        let all = MaskMatrix::all_observed(3, 30, 5);
        assert_eq!(splice(truth.view(), &all, fin.view(), ip.view()).unwrap(), truth);
    }
}
