use super::{Mat, Params};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    pub fn new(params: &Params, lr: f64) -> Self {
        let zeros = |p: &Params| p.iter().map(|(_, v)| Mat::zeros(v.raw_dim())).collect::<Vec<_>>();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: zeros(params), v: zeros(params), t: 0 }
    }

    /// Updates applied so far.
    pub fn steps(&self) -> usize {
        self.t as usize
    }

    pub fn step(&mut self, params: &mut Params, grads: &[Mat]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let step = self.lr * bc2.sqrt() / bc1;
        for ((p, g), (m, v)) in params.values_mut().iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= step * *m / (v.sqrt() + self.eps);
            });
        }
    }
}

/// Rescales gradients in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Mat], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let f = max_norm / norm;
        for g in grads.iter_mut() {
            g.mapv_inplace(|x| x * f);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut params = Params::new();
        let id = params.add("x", array![[3.0, -2.0]]);
        let mut adam = Adam::new(&params, 0.1);
        for _ in 0..500 {
            let g = params.get(id) * 2.0;
            adam.step(&mut params, &[g]);
        }
        assert!(params.get(id).iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut g = vec![array![[3.0]], array![[4.0]]];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0][[0, 0]] - 0.6).abs() < 1e-12 && (g[1][[0, 0]] - 0.8).abs() < 1e-12);
    }
}
