use ndarray::{s, Axis};
use rand_chacha::ChaCha8Rng;

use super::{AttnSpec, Ctx, Mat, ParamId, Params, Var};

/// Affine map `x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(params: &mut Params, name: &str, inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            w: params.add_uniform(format!("{name}.w"), (inputs, outputs), bound, rng),
            b: params.add_uniform(format!("{name}.b"), (1, outputs), bound, rng),
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: Var) -> Var {
        let t = ctx.tape;
        t.add_row(t.matmul(x, ctx.p(self.w)), ctx.p(self.b))
    }
}

/// Single-direction LSTM over row-blocked sequences.
///
/// Input rows are time-major: step `t` occupies rows `t*n .. (t+1)*n`, one row
/// per independent sequence. All sequences share the weights.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(params: &mut Params, name: &str, inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = params.add_uniform(format!("{name}.w_ih"), (inputs, 4 * hidden), bound, rng);
        let w_hh = params.add_uniform(format!("{name}.w_hh"), (hidden, 4 * hidden), bound, rng);
        // Gate order: input, forget, cell, output. Forget bias starts at 1.
        let mut bias = Mat::zeros((1, 4 * hidden));
        bias.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(1.0);
        let b = params.add(format!("{name}.b"), bias);
        Self { w_ih, w_hh, b, hidden }
    }

    /// Runs over `steps` blocks of `n` rows each (row `step * n + i`), in
    /// reverse block order when `reverse` is set. Returns hidden states in the
    /// input row order. The whole sequence is one tape node.
    pub fn run(&self, ctx: &Ctx, x: Var, steps: usize, n: usize, reverse: bool) -> Var {
        let tape = ctx.tape;
        let h = self.hidden;
        let xv = tape.value(x);
        let w_ih = tape.value(ctx.p(self.w_ih));
        let w_hh = tape.value(ctx.p(self.w_hh));
        let bias = tape.value(ctx.p(self.b));
        assert_eq!(xv.nrows(), steps * n, "LSTM input rows");
        let mut gates = xv.dot(&*w_ih);
        gates += &*bias;
        let mut cells = Mat::zeros((steps * n, h));
        let mut tanh_c = Mat::zeros((steps * n, h));
        let mut out = Mat::zeros((steps * n, h));
        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        let mut prev: Option<usize> = None;
        for &step in &order {
            let base = step * n;
            if let Some(p) = prev {
                let (h_prev, mut g) = (out.slice(s![p * n..(p + 1) * n, ..]), gates.slice_mut(s![base..base + n, ..]));
                ndarray::linalg::general_mat_mul(1.0, &h_prev, &*w_hh, 1.0, &mut g);
            }
            let gs = gates.as_slice_mut().expect("contiguous gates");
            let cs = cells.as_slice_mut().expect("contiguous cells");
            let ts = tanh_c.as_slice_mut().expect("contiguous tanh");
            let os = out.as_slice_mut().expect("contiguous output");
            for r in 0..n {
                let row = base + r;
                let g = &mut gs[row * 4 * h..(row + 1) * 4 * h];
                let prev_row = prev.map(|p| (p * n + r) * h);
                for j in 0..h {
                    let i = sigmoid(g[j]);
                    let f = sigmoid(g[h + j]);
                    let gg = tanh(g[2 * h + j]);
                    let o = sigmoid(g[3 * h + j]);
                    g[j] = i;
                    g[h + j] = f;
                    g[2 * h + j] = gg;
                    g[3 * h + j] = o;
                    let c_prev = prev_row.map_or(0.0, |pr| cs[pr + j]);
                    let c = f * c_prev + i * gg;
                    let tc = tanh(c);
                    cs[row * h + j] = c;
                    ts[row * h + j] = tc;
                    os[row * h + j] = o * tc;
                }
            }
            prev = Some(step);
        }
        let saved_out = out.clone();
        let (w_ih, w_hh) = (w_ih.clone(), w_hh.clone());
        tape.custom(
            &[x, ctx.p(self.w_ih), ctx.p(self.w_hh), ctx.p(self.b)],
            out,
            Box::new(move |grad: &Mat| {
                let grad = grad.as_standard_layout();
                let mut d_gates = Mat::zeros((steps * n, 4 * h));
                let mut d_w_hh = Mat::zeros(w_hh.raw_dim());
                let mut dh_next = Mat::zeros((n, h));
                let mut dc_next = Mat::zeros((n, h));
                for (pos, &step) in order.iter().enumerate().rev() {
                    let base = step * n;
                    let prev = if pos > 0 { Some(order[pos - 1]) } else { None };
                    {
                        let gs = gates.as_slice().expect("contiguous gates");
                        let cs = cells.as_slice().expect("contiguous cells");
                        let ts = tanh_c.as_slice().expect("contiguous tanh");
                        let gr = grad.as_slice().expect("contiguous gradient");
                        let dgs = d_gates.as_slice_mut().expect("contiguous gate gradient");
                        let dhn = dh_next.as_slice().expect("contiguous state gradient");
                        let dcn = dc_next.as_slice_mut().expect("contiguous cell gradient");
                        for r in 0..n {
                            let row = base + r;
                            let g = &gs[row * 4 * h..(row + 1) * 4 * h];
                            let dg = &mut dgs[row * 4 * h..(row + 1) * 4 * h];
                            let prev_row = prev.map(|p| (p * n + r) * h);
                            for j in 0..h {
                                let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                                let tc = ts[row * h + j];
                                let dh = gr[row * h + j] + dhn[r * h + j];
                                let dc = dh * o * (1.0 - tc * tc) + dcn[r * h + j];
                                let c_prev = prev_row.map_or(0.0, |pr| cs[pr + j]);
                                dg[j] = dc * gg * i * (1.0 - i);
                                dg[h + j] = dc * c_prev * f * (1.0 - f);
                                dg[2 * h + j] = dc * i * (1.0 - gg * gg);
                                dg[3 * h + j] = dh * tc * o * (1.0 - o);
                                dcn[r * h + j] = dc * f;
                            }
                        }
                    }
                    let dg = d_gates.slice(s![base..base + n, ..]);
                    match prev {
                        Some(p) => {
                            ndarray::linalg::general_mat_mul(1.0, &dg, &w_hh.t(), 0.0, &mut dh_next);
                            let h_prev = saved_out.slice(s![p * n..(p + 1) * n, ..]);
                            ndarray::linalg::general_mat_mul(1.0, &h_prev.t(), &dg, 1.0, &mut d_w_hh);
                        }
                        None => dh_next.fill(0.0),
                    }
                }
                let d_x = d_gates.dot(&w_ih.t());
                let d_w_ih = xv.t().dot(&d_gates);
                let d_b = d_gates.sum_axis(Axis(0)).insert_axis(Axis(0));
                vec![d_x, d_w_ih, d_w_hh, d_b]
            }),
        )
    }

    /// Composite reference built from primitive tape ops.
    #[cfg(test)]
    pub fn run_reference(&self, ctx: &Ctx, x: Var, steps: usize, n: usize, reverse: bool) -> Var {
        let t = ctx.tape;
        let h = self.hidden;
        let xp = t.add_row(t.matmul(x, ctx.p(self.w_ih)), ctx.p(self.b));
        let mut outs: Vec<Option<Var>> = vec![None; steps];
        let mut state: Option<(Var, Var)> = None;
        let order: Box<dyn Iterator<Item = usize>> = if reverse { Box::new((0..steps).rev()) } else { Box::new(0..steps) };
        for step in order {
            let mut gates = t.slice_rows(xp, step * n, (step + 1) * n);
            if let Some((h_prev, _)) = state {
                gates = t.add(gates, t.matmul(h_prev, ctx.p(self.w_hh)));
            }
            let sig = t.sigmoid(gates);
            let i = t.slice_cols(sig, 0, h);
            let f = t.slice_cols(sig, h, 2 * h);
            let o = t.slice_cols(sig, 3 * h, 4 * h);
            let g = t.tanh(t.slice_cols(gates, 2 * h, 3 * h));
            let ig = t.mul(i, g);
            let c = match state {
                Some((_, c_prev)) => t.add(t.mul(f, c_prev), ig),
                None => ig,
            };
            let h_new = t.mul(o, t.tanh(c));
            outs[step] = Some(h_new);
            state = Some((h_new, c));
        }
        let outs: Vec<Var> = outs.into_iter().map(|o| o.expect("every step ran")).collect();
        t.concat_rows(&outs)
    }
}

/// Multihead attention block: `O = Q + Attn(Q, K, V)`, then `O + relu(W_o O)`.
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn tanh(x: f64) -> f64 {
    2.0 / (1.0 + (-2.0 * x).exp()) - 1.0
}

#[derive(Debug, Clone)]
pub struct Mab {
    pub fc_q: Linear,
    pub fc_k: Linear,
    pub fc_v: Linear,
    pub fc_o: Linear,
    pub heads: usize,
}

impl Mab {
    pub fn new(params: &mut Params, name: &str, dim_q: usize, dim_k: usize, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            fc_q: Linear::new(params, &format!("{name}.q"), dim_q, dim, rng),
            fc_k: Linear::new(params, &format!("{name}.k"), dim_k, dim, rng),
            fc_v: Linear::new(params, &format!("{name}.v"), dim_k, dim, rng),
            fc_o: Linear::new(params, &format!("{name}.o"), dim, dim, rng),
            heads,
        }
    }

    fn finish(&self, ctx: &Ctx, q: Var, y: Var, spec: AttnSpec) -> Var {
        let t = ctx.tape;
        let k = self.fc_k.forward(ctx, y);
        let v = self.fc_v.forward(ctx, y);
        let o = t.add(q, t.attention(q, k, v, spec));
        let o = t.add(o, t.relu(self.fc_o.forward(ctx, o)));
        ctx.dropout(o)
    }

    /// `x` holds `groups * nq` rows, `y` holds `groups * nk` rows.
    pub fn forward(&self, ctx: &Ctx, x: Var, y: Var, groups: usize, nq: usize, nk: usize) -> Var {
        let q = self.fc_q.forward(ctx, x);
        self.finish(ctx, q, y, AttnSpec { groups, nq, nk, heads: self.heads })
    }

    /// Queries come from a learned `[nq, dim_q]` matrix shared by every group.
    pub fn forward_seeded(&self, ctx: &Ctx, seeds: ParamId, nq: usize, y: Var, groups: usize, nk: usize) -> Var {
        let q = ctx.tape.tile(self.fc_q.forward(ctx, ctx.p(seeds)), groups);
        self.finish(ctx, q, y, AttnSpec { groups, nq, nk, heads: self.heads })
    }
}

/// Induced set attention: members attend to a small learned set of inducing
/// points that first summarized the members. Equivariant in member order.
#[derive(Debug, Clone)]
pub struct Isab {
    pub inducing: ParamId,
    pub points: usize,
    pub summarize: Mab,
    pub broadcast: Mab,
}

impl Isab {
    #[allow(clippy::too_many_arguments)]
    pub fn new(params: &mut Params, name: &str, dim_in: usize, dim: usize, heads: usize, points: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (points + dim) as f64).sqrt();
        Self {
            inducing: params.add_uniform(format!("{name}.inducing"), (points, dim), bound, rng),
            points,
            summarize: Mab::new(params, &format!("{name}.mab0"), dim, dim_in, dim, heads, rng),
            broadcast: Mab::new(params, &format!("{name}.mab1"), dim_in, dim, dim, heads, rng),
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: Var, groups: usize, members: usize) -> Var {
        let h = self.summarize.forward_seeded(ctx, self.inducing, self.points, x, groups, members);
        self.broadcast.forward(ctx, x, h, groups, members, self.points)
    }
}

/// Pooling by multihead attention onto `seeds` learned query vectors.
#[derive(Debug, Clone)]
pub struct Pma {
    pub seeds: ParamId,
    pub count: usize,
    pub mab: Mab,
}

impl Pma {
    pub fn new(params: &mut Params, name: &str, dim: usize, heads: usize, count: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (count + dim) as f64).sqrt();
        Self {
            seeds: params.add_uniform(format!("{name}.seeds"), (count, dim), bound, rng),
            count,
            mab: Mab::new(params, &format!("{name}.mab"), dim, dim, dim, heads, rng),
        }
    }

    /// Returns `groups * count` pooled rows.
    pub fn forward(&self, ctx: &Ctx, z: Var, groups: usize, members: usize) -> Var {
        self.mab.forward_seeded(ctx, self.seeds, self.count, z, groups, members)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tape;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn isab_and_pma_respect_member_permutation() {
        let mut r = rng();
        let mut params = Params::new();
        let isab = Isab::new(&mut params, "isab", 5, 8, 2, 4, &mut r);
        let pma = Pma::new(&mut params, "pma", 8, 2, 1, &mut r);
        let (groups, k) = (3, 6);
        let x = Array2::from_shape_fn((groups * k, 5), |_| r.random_range(-1.0..1.0));
        let perm = [4, 0, 5, 2, 1, 3];
        let xp = Array2::from_shape_fn((groups * k, 5), |(i, j)| x[[(i / k) * k + perm[i % k], j]]);
        let run = |input: &Mat| {
            let tape = Tape::new();
            let ctx = Ctx::new(&tape, &params, false, 0.0, rng());
            let xi = tape.leaf(input.clone());
            let z = isab.forward(&ctx, xi, groups, k);
            let pooled = pma.forward(&ctx, z, groups, k);
            ((*tape.value(z)).clone(), (*tape.value(pooled)).clone())
        };
        let (z, g) = run(&x);
        let (zp, gp) = run(&xp);
        for i in 0..groups * k {
            let src = (i / k) * k + perm[i % k];
            for j in 0..8 {
                assert!((zp[[i, j]] - z[[src, j]]).abs() < 1e-12);
            }
        }
        assert!(g.iter().zip(gp.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn lstm_forward_state_ignores_future_inputs() {
        let mut r = rng();
        let mut params = Params::new();
        let lstm = Lstm::new(&mut params, "lstm", 3, 4, &mut r);
        let (steps, n) = (10, 2);
        let x = Array2::from_shape_fn((steps * n, 3), |_| r.random_range(-1.0..1.0));
        let mut x2 = x.clone();
        x2.slice_mut(ndarray::s![6 * n.., ..]).fill(0.0);
        let run = |input: &Mat| {
            let tape = Tape::new();
            let ctx = Ctx::new(&tape, &params, false, 0.0, rng());
            let out = lstm.run(&ctx, tape.leaf(input.clone()), steps, n, false);
            (*tape.value(out)).clone()
        };
        let (a, b) = (run(&x), run(&x2));
        assert_eq!(a.slice(ndarray::s![..6 * n, ..]), b.slice(ndarray::s![..6 * n, ..]));
        assert_ne!(a.slice(ndarray::s![6 * n.., ..]), b.slice(ndarray::s![6 * n.., ..]));
    }

    #[test]
    fn lstm_gradient_matches_finite_difference() {
        let mut r = rng();
        let mut params = Params::new();
        let lstm = Lstm::new(&mut params, "lstm", 2, 3, &mut r);
        let x = Array2::from_shape_fn((8, 2), |_| r.random_range(-1.0..1.0));
        let loss = |p: &Params| {
            let tape = Tape::new();
            let ctx = Ctx::new(&tape, p, false, 0.0, rng());
            let out = lstm.run(&ctx, tape.leaf(x.clone()), 4, 2, true);
            let s = tape.sum(tape.mul(out, out));
            (tape.value(s)[[0, 0]], tape.backward(s), ctx.bound().to_vec())
        };
        let (_, grads, bound) = loss(&params);
        for id in [lstm.w_ih, lstm.w_hh, lstm.b] {
            let analytic = grads[bound[id.0].index()].clone().unwrap();
            for idx in 0..analytic.len() {
                let c = analytic.ncols();
                let mut plus = params.clone();
                plus.get_mut(id)[[idx / c, idx % c]] += 1e-6;
                let mut minus = params.clone();
                minus.get_mut(id)[[idx / c, idx % c]] -= 1e-6;
                let numeric = (loss(&plus).0 - loss(&minus).0) / 2e-6;
                assert!((numeric - analytic[[idx / c, idx % c]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn fused_lstm_matches_composite_reference() {
        let mut r = rng();
        let mut params = Params::new();
        let lstm = Lstm::new(&mut params, "lstm", 3, 5, &mut r);
        let x = Array2::from_shape_fn((6 * 4, 3), |_| r.random_range(-1.0..1.0));
        let weights = Array2::from_shape_fn((6 * 4, 5), |_| r.random_range(-1.0..1.0));
        for reverse in [false, true] {
            let run = |fused: bool| {
                let tape = Tape::new();
                let ctx = Ctx::new(&tape, &params, false, 0.0, rng());
                let xv = tape.leaf(x.clone());
                let out = if fused { lstm.run(&ctx, xv, 6, 4, reverse) } else { lstm.run_reference(&ctx, xv, 6, 4, reverse) };
                let s = tape.sum(tape.mul_const(out, std::rc::Rc::new(weights.clone())));
                let grads = tape.backward(s);
                let mut all = vec![(*tape.value(out)).clone(), grads[xv.index()].clone().unwrap()];
                for id in [lstm.w_ih, lstm.w_hh, lstm.b] {
                    all.push(grads[ctx.bound()[id.0].index()].clone().unwrap());
                }
                all
            };
            for (a, b) in run(true).iter().zip(run(false)) {
                assert!((a - &b).iter().all(|d| d.abs() < 1e-12));
            }
        }
    }
}
