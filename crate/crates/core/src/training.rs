//! End-to-end optimisation of the four-term MAE objective.

use std::io::Write;
use std::rc::Rc;

use ndarray::{s, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Sport, TrajectoryWindow};
use crate::error::{MidasError, Result};
use crate::evaluation::{position_error_sum, Mean};
use crate::masking::{missing_rate_schedule, CameraSpec, MaskMatrix, MaskParams, Phase, Scenario, DEFAULT_GUARD};
use crate::model::{Batch, Forward, MidasModel, ModelConfig};
use crate::nn::{clip_global_norm, Adam, Ctx, Mat, Tape, Var};

/// The four MAE terms in normalized units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_i: f64,
    pub l_f: f64,
    pub l_b: f64,
    pub l_h: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn from_terms(l_i: f64, l_f: f64, l_b: f64, l_h: f64) -> Self {
        Self { l_i, l_f, l_b, l_h, total: l_i + l_f + l_b + l_h }
    }
}

/// Reference evaluation of the loss on plain arrays. `truth` is `[n, 6]`,
/// `missing` holds one 0/1 entry per row, `ip` is `[n, 6]`, `dap` is
/// `[n, 4]` (forward then backward positions) and `final_p` is `[n, 2]`.
///
/// `l_i` averages over every row and all six channels; the other terms
/// average over the two position channels of missing rows only.
pub fn loss_breakdown(truth: ArrayView2<f64>, missing: &[f64], ip: ArrayView2<f64>, dap: ArrayView2<f64>, final_p: ArrayView2<f64>) -> LossBreakdown {
    let n = truth.nrows();
    let l_i = (&ip - &truth).mapv(f64::abs).sum() / (6 * n) as f64;
    let count: f64 = missing.iter().sum();
    if count == 0.0 {
        return LossBreakdown::from_terms(l_i, 0.0, 0.0, 0.0);
    }
    let term = |pred: ArrayView2<f64>| {
        let mut sum = 0.0;
        for r in 0..n {
            sum += missing[r] * ((pred[[r, 0]] - truth[[r, 0]]).abs() + (pred[[r, 1]] - truth[[r, 1]]).abs());
        }
        sum / (2.0 * count)
    };
    LossBreakdown::from_terms(l_i, term(dap.slice(s![.., 0..2])), term(dap.slice(s![.., 2..4])), term(final_p))
}

/// The loss as tape nodes: `(total, [l_i, l_f, l_b, l_h])`.
pub fn graph_loss(tape: &Tape, out: &Forward, batch: &Batch) -> (Var, [Var; 4]) {
    let truth = tape.leaf(batch.truth.clone());
    let rows = batch.rows() as f64;
    let l_i = tape.scale(tape.sum(tape.abs(tape.sub(out.ip, truth))), 1.0 / (6.0 * rows));
    let count = batch.missing_count();
    if count == 0 {
        let zero = tape.leaf(Mat::zeros((1, 1)));
        return (l_i, [l_i, zero, zero, zero]);
    }
    let weight = Rc::new(Mat::from_shape_fn((batch.rows(), 2), |(r, _)| batch.missing[[r, 0]] / (2.0 * count as f64)));
    let p = tape.slice_cols(truth, 0, 2);
    let term = |pred: Var| tape.sum(tape.mul_const(tape.abs(tape.sub(pred, p)), weight.clone()));
    let l_f = term(tape.slice_cols(out.dap, 0, 2));
    let l_b = term(tape.slice_cols(out.dap, 2, 4));
    let l_h = term(out.final_p);
    let total = tape.add(tape.add(l_i, l_f), tape.add(l_b, l_h));
    (total, [l_i, l_f, l_b, l_h])
}

/// Training-loop settings that are not part of the architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub grad_clip: f64,
    /// Scenarios drawn uniformly per batch.
    pub scenarios: Vec<Scenario>,
    pub eval_scenario: Scenario,
    pub eval_rate: f64,
    pub guard: usize,
    pub blocks: usize,
    pub camera: CameraSpec,
    /// Cap on batches per epoch; all batches when unset.
    pub max_batches: Option<usize>,
    /// Learning rate at the last epoch as a fraction of the initial one,
    /// reached along a cosine curve. 1 disables the decay.
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            patience: 10,
            grad_clip: 1.0,
            scenarios: vec![Scenario::Uniform, Scenario::AgentWise],
            eval_scenario: Scenario::AgentWise,
            eval_rate: 0.5,
            guard: DEFAULT_GUARD,
            blocks: 1,
            camera: CameraSpec::default(),
            max_batches: None,
            final_lr_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    /// The camera scenario is only used for soccer.
    pub fn for_sport(sport: Sport) -> Self {
        let mut scenarios = vec![Scenario::Uniform, Scenario::AgentWise];
        if sport == Sport::Soccer {
            scenarios.push(Scenario::Camera);
        }
        Self { scenarios, ..Self::default() }
    }

    pub fn mask_params(&self) -> MaskParams {
        MaskParams { guard: self.guard, blocks: self.blocks }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(MidasError::Config("no training scenarios".into()));
        }
        if self.epochs == 0 {
            return Err(MidasError::Config("epochs must be positive".into()));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(MidasError::Config(format!("final_lr_fraction {} outside (0, 1]", self.final_lr_fraction)));
        }
        if !(self.grad_clip > 0.0) {
            return Err(MidasError::Config(format!("gradient clip {} must be positive", self.grad_clip)));
        }
        Ok(())
    }
}

/// Largest block-scenario rate that fits between the guard frames.
pub fn max_feasible_rate(frames: usize, params: &MaskParams) -> f64 {
    let usable = frames.saturating_sub(2 * params.guard + params.blocks.max(1) - 1);
    usable as f64 / frames as f64
}

/// Draws one mask per window for a training batch: one scenario and one rate
/// shared across the batch. Camera masks fall back to agent-wise when a
/// window has no ball track.
pub fn curriculum_masks(windows: &[&TrajectoryWindow], tc: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Vec<MaskMatrix>> {
    let scenario = tc.scenarios[rng.random_range(0..tc.scenarios.len())];
    let params = tc.mask_params();
    let frames = windows.first().map_or(0, |w| w.frames());
    let rate = missing_rate_schedule(Phase::Train, rng).min(max_feasible_rate(frames, &params));
    windows
        .iter()
        .map(|w| {
            let sc = if scenario == Scenario::Camera && w.ball.is_none() { Scenario::AgentWise } else { scenario };
            params.generate(sc, w, rate, &tc.camera, rng)
        })
        .collect()
}

/// Fixed evaluation masks for a set of windows.
pub fn evaluation_masks(windows: &[TrajectoryWindow], scenario: Scenario, rate: f64, tc: &TrainConfig, seed: u64) -> Result<Vec<MaskMatrix>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = tc.mask_params();
    windows
        .iter()
        .map(|w| params.generate(scenario, w, rate.min(max_feasible_rate(w.frames(), &params)), &tc.camera, &mut rng))
        .collect()
}

/// Holds the model, its optimizer and the dropout stream.
pub struct Trainer {
    pub model: MidasModel,
    adam: Adam,
    rng: ChaCha8Rng,
    pub grad_clip: f64,
}

impl Trainer {
    pub fn new(model: MidasModel, grad_clip: f64, seed: u64) -> Self {
        let adam = Adam::new(&model.params, model.config.learning_rate);
        Self { model, adam, rng: ChaCha8Rng::seed_from_u64(seed), grad_clip }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.adam.lr = lr;
    }

    /// One forward/backward pass and Adam update. Returns the loss measured
    /// before the update.
    pub fn step(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let tape = Tape::new();
        let dropout_rng = ChaCha8Rng::seed_from_u64(self.rng.random());
        let ctx = Ctx::new(&tape, &self.model.params, true, self.model.config.dropout, dropout_rng);
        let out = self.model.forward(&ctx, batch)?;
        let (total, terms) = graph_loss(&tape, &out, batch);
        let value = |v: Var| tape.value(v)[[0, 0]];
        let loss = LossBreakdown::from_terms(value(terms[0]), value(terms[1]), value(terms[2]), value(terms[3]));
        if !loss.total.is_finite() {
            return Err(MidasError::Diverged { step: self.adam.steps(), detail: format!("non-finite loss {loss:?}") });
        }
        let grads = tape.backward(total);
        let mut param_grads: Vec<Mat> = ctx
            .bound()
            .iter()
            .zip(self.model.params.iter())
            .map(|(v, (_, p))| grads[v.index()].clone().unwrap_or_else(|| Mat::zeros(p.dim())))
            .collect();
        let norm = clip_global_norm(&mut param_grads, self.grad_clip);
        if !norm.is_finite() {
            return Err(MidasError::Diverged { step: self.adam.steps(), detail: format!("gradient norm {norm}") });
        }
        self.adam.step(&mut self.model.params, &param_grads);
        Ok(loss)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_i: f64,
    pub l_f: f64,
    pub l_b: f64,
    pub l_h: f64,
    pub val_pe: f64,
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation PE.
    pub model: MidasModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_pe: f64,
}

/// Mean PE in meters of `model` over windows with fixed masks.
pub fn validation_pe(model: &MidasModel, windows: &[TrajectoryWindow], masks: &[MaskMatrix]) -> Result<f64> {
    let results = model.impute_all(windows, masks)?;
    let mut pe = Mean::default();
    for ((r, w), m) in results.iter().zip(windows).zip(masks) {
        pe.merge(position_error_sum(w.positions.view(), r.trajectories.view(), m)?);
    }
    Ok(pe.value())
}

/// Trains from scratch. Every random choice (initialisation, shuffling,
/// masks, dropout) derives from `seed`. When `log` is given, one CSV row per
/// epoch is written to it.
pub fn train(
    train_set: &[TrajectoryWindow],
    val_set: &[TrajectoryWindow],
    config: &ModelConfig,
    tc: &TrainConfig,
    seed: u64,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    tc.validate()?;
    if train_set.is_empty() {
        return Err(MidasError::Config("empty training set".into()));
    }
    let model = MidasModel::new(config.clone(), seed)?;
    let mut trainer = Trainer::new(model, tc.grad_clip, seed.wrapping_add(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let val_masks = evaluation_masks(val_set, tc.eval_scenario, tc.eval_rate, tc, seed.wrapping_add(3))?;
    let mut csv = log.as_mut().map(csv::Writer::from_writer);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0, trainer.model.params.clone());
    for epoch in 1..=tc.epochs {
        let progress = if tc.epochs > 1 { (epoch - 1) as f64 / (tc.epochs - 1) as f64 } else { 0.0 };
        let fraction = tc.final_lr_fraction + (1.0 - tc.final_lr_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        trainer.set_learning_rate(config.learning_rate * fraction);
        order.shuffle(&mut rng);
        let mut sums = [Mean::default(); 4];
        for (i, chunk) in order.chunks(config.batch_size).enumerate() {
            if tc.max_batches.is_some_and(|m| i >= m) {
                break;
            }
            let windows: Vec<&TrajectoryWindow> = chunk.iter().map(|&j| &train_set[j]).collect();
            let masks = curriculum_masks(&windows, tc, &mut rng)?;
            let mask_refs: Vec<&MaskMatrix> = masks.iter().collect();
            let batch = Batch::new(&windows, &mask_refs, config)?;
            let loss = trainer.step(&batch)?;
            for (acc, x) in sums.iter_mut().zip([loss.l_i, loss.l_f, loss.l_b, loss.l_h]) {
                acc.push(x);
            }
        }
        let val_pe = if val_set.is_empty() {
            sums.iter().map(Mean::value).sum()
        } else {
            validation_pe(&trainer.model, val_set, &val_masks)?
        };
        let record = EpochRecord { epoch, l_i: sums[0].value(), l_f: sums[1].value(), l_b: sums[2].value(), l_h: sums[3].value(), val_pe };
        if let Some(c) = csv.as_mut() {
            c.serialize(record)?;
            c.flush()?;
        }
        history.push(record);
        if val_pe < best.0 {
            best = (val_pe, epoch, trainer.model.params.clone());
        } else if epoch - best.1 >= tc.patience {
            break;
        }
    }
    let mut model = trainer.model;
    model.params = best.2;
    Ok(TrainOutcome { model, history, best_epoch: best.1, best_val_pe: best.0 })
}

/// Fractions of windows assigned to training, validation and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
}

impl SplitFractions {
    /// Approximate frame shares of the published splits.
    pub fn for_sport(sport: Sport) -> Self {
        match sport {
            Sport::Soccer => Self { train: 0.6, validation: 0.2 },
            Sport::Basketball => Self { train: 0.7, validation: 0.1 },
            Sport::AmFootball => Self { train: 0.9, validation: 0.1 },
        }
    }
}

/// Contiguous split, so neighbouring windows of one match stay together.
pub fn split_dataset(windows: &[TrajectoryWindow], fractions: SplitFractions) -> (Vec<TrajectoryWindow>, Vec<TrajectoryWindow>, Vec<TrajectoryWindow>) {
    let n = windows.len();
    let a = ((n as f64) * fractions.train).round() as usize;
    let b = (a + ((n as f64) * fractions.validation).round() as usize).min(n);
    (windows[..a].to_vec(), windows[a..b].to_vec(), windows[b..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate, SyntheticConfig};
    use crate::data::PitchBounds;
    use ndarray::Array3;

    fn tiny() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            heads: 2,
            inducing_points: 4,
            hidden_dim: 16,
            ensemble_hidden: 8,
            decay_dim: 4,
            dropout: 0.0,
            batch_size: 4,
            learning_rate: 3e-3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn pure_loss_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 40;
        let truth = Mat::from_shape_fn((n, 6), |_| rng.random_range(-1.0..1.0));
        let missing: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i % 3 == 0))).collect();
        let dap = ndarray::concatenate![ndarray::Axis(1), truth.slice(s![.., 0..2]), truth.slice(s![.., 0..2])];
        let exact = loss_breakdown(truth.view(), &missing, truth.view(), dap.view(), truth.slice(s![.., 0..2]));
        assert_eq!(exact.total, 0.0);

        // A (1, 0) m offset on a 105 m pitch is 2/105 units on x and 0 on y.
        let mut shifted = truth.slice(s![.., 0..2]).to_owned();
        shifted.column_mut(0).mapv_inplace(|x| x + 2.0 / 105.0);
        let l = loss_breakdown(truth.view(), &missing, truth.view(), dap.view(), shifted.view());
        assert!((l.l_h - 0.5 * 2.0 / 105.0).abs() < 1e-12);
        assert_eq!((l.l_i, l.l_f, l.l_b), (0.0, 0.0, 0.0));

        let none = loss_breakdown(truth.view(), &vec![0.0; n], truth.view(), dap.view(), shifted.view());
        assert_eq!(none.l_h, 0.0);
    }

    #[test]
    fn pure_loss_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..20 {
            let n = rng.random_range(5..60);
            let mk = |c: usize, rng: &mut ChaCha8Rng| Mat::from_shape_fn((n, c), |_| rng.random_range(-1.0..1.0));
            let (truth, ip, dap, fin) = (mk(6, &mut rng), mk(6, &mut rng), mk(4, &mut rng), mk(2, &mut rng));
            let missing: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
            let l = loss_breakdown(truth.view(), &missing, ip.view(), dap.view(), fin.view());
            let mut li = Vec::new();
            let (mut lf, mut lb, mut lh) = (Vec::new(), Vec::new(), Vec::new());
            for r in 0..n {
                for c in 0..6 {
                    li.push((ip[[r, c]] - truth[[r, c]]).abs());
                }
                if missing[r] == 1.0 {
                    for c in 0..2 {
                        lf.push((dap[[r, c]] - truth[[r, c]]).abs());
                        lb.push((dap[[r, c + 2]] - truth[[r, c]]).abs());
                        lh.push((fin[[r, c]] - truth[[r, c]]).abs());
                    }
                }
            }
            let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
            assert!((l.l_i - mean(&li)).abs() < 1e-12);
            assert!((l.l_f - mean(&lf)).abs() < 1e-12);
            assert!((l.l_b - mean(&lb)).abs() < 1e-12);
            assert!((l.l_h - mean(&lh)).abs() < 1e-12);
            assert!((l.total - (l.l_i + l.l_f + l.l_b + l.l_h)).abs() < 1e-9);
        }
    }

    fn sample_batch(config: &ModelConfig, seed: u64) -> Batch {
        let cfg = SyntheticConfig { agents: 4, frames: 40, ..SyntheticConfig::default() };
        let windows = generate(&cfg, 2, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let masks: Vec<MaskMatrix> = windows.iter().map(|_| MaskParams::default().agent_wise(40, 4, 0.5, &mut rng).unwrap()).collect();
        Batch::new(&windows.iter().collect::<Vec<_>>(), &masks.iter().collect::<Vec<_>>(), config).unwrap()
    }

    #[test]
    fn graph_loss_agrees_with_pure_loss() {
        let config = tiny();
        let model = MidasModel::new(config.clone(), 1).unwrap();
        let batch = sample_batch(&config, 33);
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &model.params, false, 0.0, ChaCha8Rng::seed_from_u64(0));
        let out = model.forward(&ctx, &batch).unwrap();
        let (total, terms) = graph_loss(&tape, &out, &batch);
        let missing: Vec<f64> = batch.missing.column(0).to_vec();
        let pure = loss_breakdown(batch.truth.view(), &missing, tape.value(out.ip).view(), tape.value(out.dap).view(), tape.value(out.final_p).view());
        let got: Vec<f64> = terms.iter().map(|v| tape.value(*v)[[0, 0]]).collect();
        for (a, b) in got.iter().zip([pure.l_i, pure.l_f, pure.l_b, pure.l_h]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((tape.value(total)[[0, 0]] - pure.total).abs() < 1e-12);
    }

    #[test]
    fn overfitting_one_batch_cuts_the_loss() {
        let config = tiny();
        let batch = sample_batch(&config, 34);
        let mut trainer = Trainer::new(MidasModel::new(config, 2).unwrap(), 1.0, 3);
        let first = trainer.step(&batch).unwrap().total;
        let mut last = first;
        for _ in 1..100 {
            last = trainer.step(&batch).unwrap().total;
        }
        assert!(last <= 0.8 * first, "{first} -> {last}");
    }

    #[test]
    fn training_is_reproducible_for_a_seed() {
        let config = ModelConfig { batch_size: 2, ..tiny() };
        let data = generate(&SyntheticConfig { agents: 3, frames: 30, ..SyntheticConfig::default() }, 6, 5);
        let tc = TrainConfig { epochs: 2, ..TrainConfig::default() };
        let a = train(&data[..4], &data[4..], &config, &tc, 9, None).unwrap();
        let b = train(&data[..4], &data[4..], &config, &tc, 9, None).unwrap();
        assert_eq!(a.history, b.history);
        assert!((a.best_val_pe - b.best_val_pe).abs() < 1e-6);
    }

    #[test]
    fn log_has_one_row_per_epoch() {
        let config = ModelConfig { batch_size: 2, ..tiny() };
        let data = generate(&SyntheticConfig { agents: 3, frames: 30, ..SyntheticConfig::default() }, 4, 6);
        let tc = TrainConfig { epochs: 3, patience: 100, ..TrainConfig::default() };
        let mut buf = Vec::new();
        train(&data[..2], &data[2..], &config, &tc, 1, Some(&mut buf)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,l_i,l_f,l_b,l_h,val_pe");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn divergence_is_reported() {
        let config = tiny();
        let mut batch = sample_batch(&config, 35);
        batch.truth[[0, 0]] = f64::NAN;
        let mut trainer = Trainer::new(MidasModel::new(config, 2).unwrap(), 1.0, 3);
        assert!(matches!(trainer.step(&batch), Err(MidasError::Diverged { .. })));
    }

    #[test]
    fn curriculum_respects_rate_bounds() {
        let windows = generate(&SyntheticConfig { agents: 2, frames: 50, ..SyntheticConfig::default() }, 1, 3);
        let refs: Vec<&TrajectoryWindow> = windows.iter().collect();
        let tc = TrainConfig { scenarios: vec![Scenario::Uniform], ..TrainConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let m = curriculum_masks(&refs, &tc, &mut rng).unwrap().remove(0);
            let f = m.missing_fraction();
            assert!((0.09..=0.81).contains(&f), "{f}");
        }
    }

    #[test]
    fn split_is_contiguous() {
        let data = generate(&SyntheticConfig { agents: 2, frames: 20, ..SyntheticConfig::default() }, 10, 1);
        let (a, b, c) = split_dataset(&data, SplitFractions::for_sport(Sport::Soccer));
        assert_eq!((a.len(), b.len(), c.len()), (6, 2, 2));
        assert_eq!(b[0].sequence_id, data[6].sequence_id);
    }

    fn constant_velocity_windows(count: usize, frames: usize, seed: u64) -> Vec<TrajectoryWindow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| {
                let starts: Vec<[f64; 2]> = (0..2).map(|_| [rng.random_range(30.0..75.0), rng.random_range(20.0..48.0)]).collect();
                let vels: Vec<[f64; 2]> = (0..2).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
                let p = Array3::from_shape_fn((2, frames, 2), |(k, t, d)| starts[k][d] + vels[k][d] * 0.1 * t as f64);
                TrajectoryWindow::from_positions(format!("cv_{i}"), vec!["a".into(), "b".into()], p, 0.1, PitchBounds::SOCCER, None).unwrap()
            })
            .collect()
    }

    #[test]
    fn constant_velocity_pairs_are_learned() {
        let config = ModelConfig { batch_size: 8, learning_rate: 5e-3, hidden_dim: 32, ..tiny() };
        let data = constant_velocity_windows(48, 40, 7);
        let tc = TrainConfig { epochs: 200, patience: 200, scenarios: vec![Scenario::AgentWise], ..TrainConfig::default() };
        let out = train(&data[..40], &data[40..], &config, &tc, 11, None).unwrap();
        assert!(out.best_val_pe < 0.05, "PE {} m, history {:?}", out.best_val_pe, out.history.last());
    }
}
