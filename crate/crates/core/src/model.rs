//! The imputation network.
//!
//! Each frame's agents pass through a set-attention encoder (two ISABs plus a
//! one-seed PMA for the global context). A bidirectional LSTM shared across
//! agents turns the per-frame inputs and context into the initial prediction
//! (position, velocity, acceleration). DAP tracks are integrated from that
//! prediction, and a second bidirectional LSTM with a softmax head weighs the
//! three position estimates.
//!
//! Rows of every matrix on the tape are laid out time-major: row
//! `(t * B + b) * K + k` holds agent `k` of window `b` at frame `t`.

use std::rc::Rc;

use ndarray::{s, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dap::{self, DapMode};
use crate::data::{Normalizer, TrajectoryWindow};
use crate::ensemble::{gap_deltas, splice, EnsembleWeights};
use crate::error::{MidasError, Result};
use crate::masking::{segments, MaskMatrix, MissingSegment};
use crate::nn::{Ctx, Isab, Linear, Lstm, Mat, ParamId, Params, Pma, Tape, Var};

/// Which kinematic features the network sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Pos,
    PosVel,
    #[default]
    All,
}

impl FeatureMode {
    pub fn width(self) -> usize {
        match self {
            FeatureMode::Pos => 2,
            FeatureMode::PosVel => 4,
            FeatureMode::All => 6,
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = MidasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pos" => Ok(FeatureMode::Pos),
            "pos_vel" => Ok(FeatureMode::PosVel),
            "all" => Ok(FeatureMode::All),
            other => Err(MidasError::Config(format!("unknown feature mode '{other}'"))),
        }
    }
}

/// Architecture and optimisation hyperparameters. Serialized with every
/// checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub inducing_points: usize,
    pub hidden_dim: usize,
    pub ensemble_hidden: usize,
    pub decay_dim: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub feature_mode: FeatureMode,
    pub dap_mode: DapMode,
    /// Append the observation indicator as an extra input channel.
    pub mask_channel: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            heads: 4,
            inducing_points: 16,
            hidden_dim: 128,
            ensemble_hidden: 64,
            decay_dim: 16,
            dropout: 0.1,
            learning_rate: 1e-3,
            batch_size: 8,
            feature_mode: FeatureMode::All,
            dap_mode: DapMode::VelAccel,
            mask_channel: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("inducing_points", self.inducing_points),
            ("hidden_dim", self.hidden_dim),
            ("ensemble_hidden", self.ensemble_hidden),
            ("decay_dim", self.decay_dim),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(MidasError::Config(format!("{name} must be positive")));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(MidasError::Config(format!(
                "embed_dim {} is not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MidasError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MidasError::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }

    /// Width of one agent-frame input row.
    pub fn input_width(&self) -> usize {
        self.feature_mode.width() + usize::from(self.mask_channel)
    }
}

/// Agent-frames per inference batch; larger batches run slower on CPU.
pub const INFERENCE_ROWS: usize = 4096;

/// A stack of equally shaped windows with their masks, normalized and laid
/// out time-major.
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    pub agents: usize,
    pub frames: usize,
    pub dt: f64,
    /// Masked model input, `[T*B*K, input_width]`.
    pub input: Mat,
    /// Normalized ground truth `(p, v, a)`, `[T*B*K, 6]`.
    pub truth: Mat,
    /// 1 on missing agent-frames, `[T*B*K, 1]`.
    pub missing: Mat,
    /// Frame gaps to the segment endpoints, `[T*B*K, 2]`.
    pub delta: Mat,
    /// Missing segments tagged with their window index.
    pub segments: Vec<(usize, MissingSegment)>,
    pub normalizers: Vec<Normalizer>,
}

impl Batch {
    pub fn new(windows: &[&TrajectoryWindow], masks: &[&MaskMatrix], config: &ModelConfig) -> Result<Self> {
        if windows.is_empty() || windows.len() != masks.len() {
            return Err(MidasError::Shape(format!("{} windows with {} masks", windows.len(), masks.len())));
        }
        let (k, t) = (windows[0].agents(), windows[0].frames());
        let dt = windows[0].dt;
        for (w, m) in windows.iter().zip(masks) {
            if w.agents() != k || w.frames() != t || m.agents() != k || m.frames() != t || w.dt != dt {
                return Err(MidasError::Shape(format!(
                    "window {} is {}x{} at dt {}, mask {}x{}; batch expects {k}x{t} at dt {dt}",
                    w.sequence_id,
                    w.agents(),
                    w.frames(),
                    w.dt,
                    m.agents(),
                    m.frames()
                )));
            }
        }
        let b = windows.len();
        let rows = t * b * k;
        let width = config.input_width();
        let fw = config.feature_mode.width();
        let mut input = Mat::zeros((rows, width));
        let mut truth = Mat::zeros((rows, 6));
        let mut missing = Mat::zeros((rows, 1));
        let mut delta = Mat::zeros((rows, 2));
        let mut segs = Vec::new();
        let mut normalizers = Vec::with_capacity(b);
        for (bi, (w, m)) in windows.iter().zip(masks).enumerate() {
            let norm = Normalizer::new(w.pitch)?;
            let feats = norm.window(w).features();
            let gaps = gap_deltas(m);
            for kk in 0..k {
                for tt in 0..t {
                    let row = (tt * b + bi) * k + kk;
                    let observed = m.observed(kk, tt);
                    for c in 0..6 {
                        truth[[row, c]] = feats[[kk, tt, c]];
                    }
                    if observed {
                        for c in 0..fw {
                            input[[row, c]] = feats[[kk, tt, c]];
                        }
                    } else {
                        missing[[row, 0]] = 1.0;
                    }
                    if config.mask_channel {
                        input[[row, fw]] = f64::from(u8::from(observed));
                    }
                    delta[[row, 0]] = gaps[[kk, tt, 0]];
                    delta[[row, 1]] = gaps[[kk, tt, 1]];
                }
            }
            segs.extend(segments(m).into_iter().map(|sg| (bi, sg)));
            normalizers.push(norm);
        }
        Ok(Batch { size: b, agents: k, frames: t, dt, input, truth, missing, delta, segments: segs, normalizers })
    }

    pub fn rows(&self) -> usize {
        self.frames * self.size * self.agents
    }

    pub fn row(&self, t: usize, b: usize, k: usize) -> usize {
        (t * self.size + b) * self.agents + k
    }

    pub fn missing_count(&self) -> usize {
        self.segments.iter().map(|(_, s)| s.missing_len()).sum()
    }

    /// Rearranges a `[T*B*K, c]` matrix into `[K, T, c]` for window `b`.
    pub fn unstack(&self, m: &Mat, b: usize) -> Array3<f64> {
        let c = m.ncols();
        Array3::from_shape_fn((self.agents, self.frames, c), |(k, t, j)| m[[self.row(t, b, k), j]])
    }
}

/// Tape variables produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// Per-agent context `[T*B*K, m]`.
    pub z_agent: Var,
    /// Global context `[T*B, m]`.
    pub z_global: Var,
    /// Initial prediction `[T*B*K, 6]`.
    pub ip: Var,
    /// Forward DAP positions in columns 0..2, backward in 2..4.
    pub dap: Var,
    pub gamma: Var,
    /// Ensemble weights `[T*B*K, 3]`.
    pub lambda: Var,
    /// Ensemble positions `[T*B*K, 2]`.
    pub final_p: Var,
}

/// Component outputs for one window, in meters.
#[derive(Debug, Clone)]
pub struct ImputationResult {
    pub sequence_id: String,
    /// Initial prediction `[K, T, 6]`.
    pub initial: Array3<f64>,
    /// Forward DAP positions `[K, T, 2]`; equal to the observation off the missing frames.
    pub forward: Array3<f64>,
    pub backward: Array3<f64>,
    pub weights: EnsembleWeights,
    /// Completed trajectories `[K, T, 6]`: observed frames copied from the input.
    pub trajectories: Array3<f64>,
    pub mask: MaskMatrix,
}

impl ImputationResult {
    /// Completed positions `[K, T, 2]`.
    pub fn positions(&self) -> Array3<f64> {
        self.trajectories.slice(s![.., .., 0..2]).to_owned()
    }
}

#[derive(Debug, Clone)]
pub struct MidasModel {
    pub config: ModelConfig,
    pub params: Params,
    encoder: Vec<Isab>,
    pool: Pma,
    ip_forward: Lstm,
    ip_backward: Lstm,
    decoder: Linear,
    decay_w: ParamId,
    decay_b: ParamId,
    ens_forward: Lstm,
    ens_backward: Lstm,
    ens_head: Linear,
}

impl MidasModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let (d, m, h) = (config.input_width(), config.embed_dim, config.hidden_dim);
        let encoder = vec![
            Isab::new(&mut params, "encoder.isab0", d, m, config.heads, config.inducing_points, &mut rng),
            Isab::new(&mut params, "encoder.isab1", m, m, config.heads, config.inducing_points, &mut rng),
        ];
        let pool = Pma::new(&mut params, "encoder.pma", m, config.heads, 1, &mut rng);
        let ip_in = d + 2 * m;
        let ip_forward = Lstm::new(&mut params, "ip.lstm_fwd", ip_in, h, &mut rng);
        let ip_backward = Lstm::new(&mut params, "ip.lstm_bwd", ip_in, h, &mut rng);
        let decoder = Linear::new(&mut params, "ip.decoder", 2 * h, 6, &mut rng);
        let g = config.decay_dim;
        let decay_w = params.add_uniform("decay.w", (2, g), 0.1, &mut rng);
        let decay_b = params.add("decay.b", Mat::zeros((1, g)));
        let ens_in = 6 + 4 + 2 * m + g;
        let eh = config.ensemble_hidden;
        let ens_forward = Lstm::new(&mut params, "ensemble.lstm_fwd", ens_in, eh, &mut rng);
        let ens_backward = Lstm::new(&mut params, "ensemble.lstm_bwd", ens_in, eh, &mut rng);
        let ens_head = Linear::new(&mut params, "ensemble.head", 2 * eh, 3, &mut rng);
        Ok(Self {
            config,
            params,
            encoder,
            pool,
            ip_forward,
            ip_backward,
            decoder,
            decay_w,
            decay_b,
            ens_forward,
            ens_backward,
            ens_head,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    /// Per-agent and global context for every frame.
    pub fn encode(&self, ctx: &Ctx, x: Var, groups: usize, agents: usize) -> (Var, Var) {
        let mut z = x;
        for isab in &self.encoder {
            z = isab.forward(ctx, z, groups, agents);
        }
        let global = self.pool.forward(ctx, z, groups, agents);
        (z, global)
    }

    pub fn forward(&self, ctx: &Ctx, batch: &Batch) -> Result<Forward> {
        if batch.input.ncols() != self.config.input_width() {
            return Err(MidasError::Shape(format!(
                "input width {} but the model expects {}",
                batch.input.ncols(),
                self.config.input_width()
            )));
        }
        let tape = ctx.tape;
        let (t, n) = (batch.frames, batch.size * batch.agents);
        let x = tape.leaf(batch.input.clone());
        let (z_agent, z_global) = self.encode(ctx, x, batch.frames * batch.size, batch.agents);
        let z_rep = tape.repeat_each(z_global, batch.agents);

        let ip_in = tape.concat_cols(&[x, z_agent, z_rep]);
        let hf = self.ip_forward.run(ctx, ip_in, t, n, false);
        let hb = self.ip_backward.run(ctx, ip_in, t, n, true);
        let hidden = ctx.dropout(tape.concat_cols(&[hf, hb]));
        let ip = self.decoder.forward(ctx, hidden);

        let dap = dap_op(tape, ip, batch, self.config.dap_mode);

        let delta = tape.leaf(batch.delta.clone());
        let affine = tape.add_row(tape.matmul(delta, ctx.p(self.decay_w)), ctx.p(self.decay_b));
        let gamma = tape.exp(tape.scale(tape.relu(affine), -1.0));

        let ens_in = tape.concat_cols(&[ip, dap, z_agent, z_rep, gamma]);
        let ef = self.ens_forward.run(ctx, ens_in, t, n, false);
        let eb = self.ens_backward.run(ctx, ens_in, t, n, true);
        let ens_hidden = ctx.dropout(tape.concat_cols(&[ef, eb]));
        let lambda = tape.softmax(self.ens_head.forward(ctx, ens_hidden));

        let weighted = [
            tape.mul_col(tape.slice_cols(ip, 0, 2), tape.slice_cols(lambda, 0, 1)),
            tape.mul_col(tape.slice_cols(dap, 0, 2), tape.slice_cols(lambda, 1, 2)),
            tape.mul_col(tape.slice_cols(dap, 2, 4), tape.slice_cols(lambda, 2, 3)),
        ];
        let final_p = tape.add(tape.add(weighted[0], weighted[1]), weighted[2]);
        Ok(Forward { z_agent, z_global, ip, dap, gamma, lambda, final_p })
    }

    /// Runs the network in evaluation mode and returns de-normalized results
    /// per window.
    pub fn impute_batch(&self, windows: &[&TrajectoryWindow], masks: &[&MaskMatrix]) -> Result<Vec<ImputationResult>> {
        let batch = Batch::new(windows, masks, &self.config)?;
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &self.params, false, 0.0, ChaCha8Rng::seed_from_u64(0));
        let out = self.forward(&ctx, &batch)?;
        let ip = tape.value(out.ip);
        let dap = tape.value(out.dap);
        let lambda = tape.value(out.lambda);
        let final_p = tape.value(out.final_p);
        let mut results = Vec::with_capacity(windows.len());
        for (b, (w, m)) in windows.iter().zip(masks).enumerate() {
            let norm = &batch.normalizers[b];
            let ip_b = batch.unstack(&ip, b);
            let mut initial = Array3::zeros(ip_b.dim());
            initial.slice_mut(s![.., .., 0..2]).assign(&norm.inverse_positions(&ip_b.slice(s![.., .., 0..2]).to_owned()));
            initial.slice_mut(s![.., .., 2..4]).assign(&norm.inverse_derivative(&ip_b.slice(s![.., .., 2..4]).to_owned()));
            initial.slice_mut(s![.., .., 4..6]).assign(&norm.inverse_derivative(&ip_b.slice(s![.., .., 4..6]).to_owned()));
            let dap_b = batch.unstack(&dap, b);
            let mut forward = norm.inverse_positions(&dap_b.slice(s![.., .., 0..2]).to_owned());
            let mut backward = norm.inverse_positions(&dap_b.slice(s![.., .., 2..4]).to_owned());
            for kk in 0..w.agents() {
                for tt in 0..w.frames() {
                    if m.observed(kk, tt) {
                        for d in 0..2 {
                            forward[[kk, tt, d]] = w.positions[[kk, tt, d]];
                            backward[[kk, tt, d]] = w.positions[[kk, tt, d]];
                        }
                    }
                }
            }
            let final_m = norm.inverse_positions(&batch.unstack(&final_p, b));
            let weights = EnsembleWeights::new(batch.unstack(&lambda, b))?;
            let trajectories = splice(w.features().view(), m, final_m.view(), initial.view())?;
            results.push(ImputationResult {
                sequence_id: w.sequence_id.clone(),
                initial,
                forward,
                backward,
                weights,
                trajectories,
                mask: (*m).clone(),
            });
        }
        Ok(results)
    }

    pub fn impute(&self, window: &TrajectoryWindow, mask: &MaskMatrix) -> Result<ImputationResult> {
        Ok(self.impute_batch(&[window], &[mask])?.remove(0))
    }

    /// Imputes many windows in batches of at most `batch_size` windows and
    /// roughly [`INFERENCE_ROWS`] agent-frames.
    pub fn impute_all(&self, windows: &[TrajectoryWindow], masks: &[MaskMatrix]) -> Result<Vec<ImputationResult>> {
        if windows.len() != masks.len() {
            return Err(MidasError::Shape(format!("{} windows with {} masks", windows.len(), masks.len())));
        }
        let rows = windows.first().map_or(1, |w| w.agents() * w.frames()).max(1);
        let size = (INFERENCE_ROWS / rows).clamp(1, self.config.batch_size);
        let mut out = Vec::with_capacity(windows.len());
        for (ws, ms) in windows.chunks(size).zip(masks.chunks(size)) {
            let wr: Vec<&TrajectoryWindow> = ws.iter().collect();
            let mr: Vec<&MaskMatrix> = ms.iter().collect();
            out.extend(self.impute_batch(&wr, &mr)?);
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self, dataset_fingerprint: &str) -> Checkpoint {
        Checkpoint {
            version: Checkpoint::VERSION,
            config: self.config.clone(),
            dataset_fingerprint: dataset_fingerprint.to_string(),
            params: self
                .params
                .iter()
                .map(|(name, v)| NamedTensor { name: name.to_string(), shape: [v.nrows(), v.ncols()], data: v.iter().copied().collect() })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.version > Checkpoint::VERSION {
            return Err(MidasError::Checkpoint(format!("checkpoint version {} is newer than {}", ckpt.version, Checkpoint::VERSION)));
        }
        let mut model = MidasModel::new(ckpt.config.clone(), 0)?;
        let named = ckpt
            .params
            .iter()
            .map(|p| {
                Array2::from_shape_vec((p.shape[0], p.shape[1]), p.data.clone())
                    .map(|m| (p.name.clone(), m))
                    .map_err(|e| MidasError::Checkpoint(format!("parameter {}: {e}", p.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        model.params.load(&named).map_err(MidasError::Checkpoint)?;
        Ok(model)
    }
}

/// Forward and backward DAP as one tape node: `[rows, 6]` in, `[rows, 4]` out.
/// Off the missing frames the output holds the observed positions, which do
/// not depend on the input.
fn dap_op(tape: &Tape, ip: Var, batch: &Batch, mode: DapMode) -> Var {
    let ipv = tape.value(ip);
    let (t, dt) = (batch.frames, batch.dt);
    let mut out = Mat::zeros((batch.rows(), 4));
    out.slice_mut(s![.., 0..2]).assign(&batch.truth.slice(s![.., 0..2]));
    out.slice_mut(s![.., 2..4]).assign(&batch.truth.slice(s![.., 0..2]));
    let gather = |m: &Mat, b: usize, k: usize| Array2::from_shape_fn((t, 6), |(tt, c)| m[[batch.row(tt, b, k), c]]);
    for (b, seg) in &batch.segments {
        let agent_ip = gather(&ipv, *b, seg.agent);
        let anchor = |f: usize| [batch.truth[[batch.row(f, *b, seg.agent), 0]], batch.truth[[batch.row(f, *b, seg.agent), 1]]];
        let f = dap::accumulate_forward(seg, anchor(seg.t_s), agent_ip.view(), dt, mode).expect("segments come from a valid mask");
        let bw = dap::accumulate_backward(seg, anchor(seg.t_e), agent_ip.view(), dt, mode).expect("segments come from a valid mask");
        for (i, tt) in seg.missing_frames().enumerate() {
            let row = batch.row(tt, *b, seg.agent);
            out[[row, 0]] = f[i][0];
            out[[row, 1]] = f[i][1];
            out[[row, 2]] = bw[i][0];
            out[[row, 3]] = bw[i][1];
        }
    }
    let segs = Rc::new(batch.segments.clone());
    let (size, agents, rows) = (batch.size, batch.agents, batch.rows());
    let row = move |tt: usize, b: usize, k: usize| (tt * size + b) * agents + k;
    tape.custom(
        &[ip],
        out,
        Box::new(move |grad: &Mat| {
            let mut g_ip = Mat::zeros((rows, 6));
            for (b, seg) in segs.iter() {
                let mut local = Array2::zeros((t, 6));
                let pick = |c: usize| -> Vec<[f64; 2]> {
                    seg.missing_frames().map(|tt| [grad[[row(tt, *b, seg.agent), c]], grad[[row(tt, *b, seg.agent), c + 1]]]).collect()
                };
                dap::forward_vjp(seg, &pick(0), dt, mode, local.view_mut());
                dap::backward_vjp(seg, &pick(2), dt, mode, local.view_mut());
                for tt in 0..t {
                    let r = row(tt, *b, seg.agent);
                    for c in 2..6 {
                        g_ip[[r, c]] += local[[tt, c]];
                    }
                }
            }
            vec![g_ip]
        }),
    )
}

/// One named weight matrix in a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Serialized model: weights, the full config and the fingerprint of the
/// dataset spec it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub dataset_fingerprint: String,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}

/// Stacks `[K, T, c]` arrays for a list of windows along the agent axis.
pub fn concat_agents(parts: &[Array3<f64>]) -> Array3<f64> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("matching frame and channel counts")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate, SyntheticConfig};
    use crate::masking::MaskParams;

    fn small_config() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            heads: 2,
            inducing_points: 4,
            hidden_dim: 8,
            ensemble_hidden: 6,
            decay_dim: 4,
            dropout: 0.0,
            batch_size: 2,
            ..ModelConfig::default()
        }
    }

    fn sample(agents: usize, frames: usize, seed: u64) -> (TrajectoryWindow, MaskMatrix) {
        let cfg = SyntheticConfig { agents, frames, ..SyntheticConfig::default() };
        let w = generate(&cfg, 1, seed).remove(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = MaskParams::default().agent_wise(frames, agents, 0.5, &mut rng).unwrap();
        (w, m)
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig { embed_dim: 10, heads: 4, ..ModelConfig::default() }.validate().is_err());
        assert!(ModelConfig { hidden_dim: 0, ..ModelConfig::default() }.validate().is_err());
        assert!(ModelConfig { dropout: 1.0, ..ModelConfig::default() }.validate().is_err());
    }

    #[test]
    fn output_shapes_hold_for_every_feature_mode() {
        let (w, m) = sample(4, 30, 1);
        for mode in [FeatureMode::Pos, FeatureMode::PosVel, FeatureMode::All] {
            for mask_channel in [false, true] {
                let model = MidasModel::new(ModelConfig { feature_mode: mode, mask_channel, ..small_config() }, 3).unwrap();
                let r = model.impute(&w, &m).unwrap();
                assert_eq!(r.initial.dim(), (4, 30, 6));
                assert_eq!(r.trajectories.dim(), (4, 30, 6));
                assert_eq!(r.weights.lambdas().dim(), (4, 30, 3));
            }
        }
    }

    #[test]
    fn agent_permutation_permutes_every_output() {
        let (w, m) = sample(5, 40, 2);
        let model = MidasModel::new(small_config(), 4).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let a = model.impute(&w, &m).unwrap();
        let b = model.impute(&w.permuted(&perm), &m.permuted(&perm)).unwrap();
        let check = |x: &Array3<f64>, y: &Array3<f64>| {
            for (i, &p) in perm.iter().enumerate() {
                let diff = (&x.index_axis(Axis(0), p) - &y.index_axis(Axis(0), i)).mapv(f64::abs);
                assert!(diff.iter().all(|&d| d < 1e-5));
            }
        };
        check(&a.initial, &b.initial);
        check(&a.trajectories, &b.trajectories);
        check(a.weights.lambdas(), b.weights.lambdas());
    }

    #[test]
    fn global_context_ignores_agent_order() {
        let (w, m) = sample(6, 24, 5);
        let model = MidasModel::new(small_config(), 6).unwrap();
        let perm = [5, 4, 3, 2, 1, 0];
        let global = |w: &TrajectoryWindow, m: &MaskMatrix| {
            let batch = Batch::new(&[w], &[m], &model.config).unwrap();
            let tape = Tape::new();
            let ctx = Ctx::new(&tape, &model.params, false, 0.0, ChaCha8Rng::seed_from_u64(0));
            let out = model.forward(&ctx, &batch).unwrap();
            (*tape.value(out.z_global)).clone()
        };
        let a = global(&w, &m);
        let b = global(&w.permuted(&perm), &m.permuted(&perm));
        assert!((&a - &b).iter().all(|d| d.abs() < 1e-5));
    }

    #[test]
    fn evaluation_is_deterministic_and_keeps_observations() {
        let (w, m) = sample(3, 30, 7);
        let model = MidasModel::new(small_config(), 8).unwrap();
        let a = model.impute(&w, &m).unwrap();
        let b = model.impute(&w, &m).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
        assert_eq!(a.weights, b.weights);
        let feats = w.features();
        for ((k, t, c), v) in a.trajectories.indexed_iter() {
            if m.observed(k, t) {
                assert_eq!(v.to_bits(), feats[[k, t, c]].to_bits());
            }
        }
    }

    #[test]
    fn hidden_truth_does_not_leak_into_predictions() {
        let (w, m) = sample(3, 30, 9);
        let model = MidasModel::new(small_config(), 10).unwrap();
        let mut tampered = w.clone();
        for k in 0..3 {
            for t in 0..30 {
                if !m.observed(k, t) {
                    tampered.positions[[k, t, 0]] += 7.0;
                    tampered.velocities[[k, t, 1]] -= 3.0;
                }
            }
        }
        let a = model.impute(&w, &m).unwrap();
        let b = model.impute(&tampered, &m).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
    }

    #[test]
    fn every_parameter_receives_gradient() {
        let (w1, m1) = sample(4, 30, 11);
        let (w2, m2) = sample(4, 30, 12);
        let model = MidasModel::new(small_config(), 13).unwrap();
        let batch = Batch::new(&[&w1, &w2], &[&m1, &m2], &model.config).unwrap();
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &model.params, true, 0.0, ChaCha8Rng::seed_from_u64(0));
        let out = model.forward(&ctx, &batch).unwrap();
        let target = tape.leaf(Mat::from_shape_fn((batch.rows(), 2), |(i, j)| ((i * 7 + j) % 5) as f64 * 0.1));
        let loss = tape.add(
            tape.sum(tape.abs(tape.sub(out.final_p, target))),
            tape.sum(tape.abs(tape.slice_cols(out.ip, 0, 6))),
        );
        let grads = tape.backward(loss);
        for (i, (name, _)) in model.params.iter().enumerate() {
            let g = grads[ctx.bound()[i].index()].as_ref().unwrap_or_else(|| panic!("{name} has no gradient"));
            assert!(g.iter().any(|&x| x != 0.0), "{name} gradient is zero");
        }
    }

    #[test]
    fn dap_node_matches_finite_differences() {
        let (w, m) = sample(2, 20, 14);
        let config = small_config();
        let batch = Batch::new(&[&w], &[&m], &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let ip0 = Mat::from_shape_fn((batch.rows(), 6), |_| rand::Rng::random_range(&mut rng, -0.5..0.5));
        let weights = Mat::from_shape_fn((batch.rows(), 4), |(i, j)| ((i + 3 * j) % 7) as f64 - 3.0);
        let eval = |ipm: &Mat| {
            let tape = Tape::new();
            let ip = tape.leaf(ipm.clone());
            let out = dap_op(&tape, ip, &batch, DapMode::VelAccel);
            (&*tape.value(out) * &weights).sum()
        };
        let tape = Tape::new();
        let ip = tape.leaf(ip0.clone());
        let out = dap_op(&tape, ip, &batch, DapMode::VelAccel);
        let loss = tape.sum(tape.mul_const(out, Rc::new(weights.clone())));
        let g = tape.backward(loss)[ip.index()].clone().unwrap();
        for r in (0..batch.rows()).step_by(3) {
            for c in 0..6 {
                let mut p = ip0.clone();
                p[[r, c]] += 1e-6;
                let mut q = ip0.clone();
                q[[r, c]] -= 1e-6;
                let num = (eval(&p) - eval(&q)) / 2e-6;
                assert!((num - g[[r, c]]).abs() < 1e-6, "row {r} col {c}: {num} vs {}", g[[r, c]]);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let (w, m) = sample(3, 20, 16);
        let model = MidasModel::new(small_config(), 17).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.to_checkpoint("abc").save(&path).unwrap();
        let loaded = MidasModel::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
        assert_eq!(loaded.params, model.params);
        assert_eq!(loaded.impute(&w, &m).unwrap().trajectories, model.impute(&w, &m).unwrap().trajectories);
    }

    #[test]
    fn default_size() {
        let model = MidasModel::new(ModelConfig::default(), 0).unwrap();
        assert!(model.parameter_count() > 100_000);
    }
}
