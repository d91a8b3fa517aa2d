//! Metrics, naive baselines and the missing-length tercile report.
//!
//! All quantities are in meters. PE pools every missing agent-frame; SCE is
//! computed per missing segment and averaged over segments.

use std::io::Write;

use ndarray::{s, Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::data::TrajectoryWindow;
use crate::error::{MidasError, Result};
use crate::masking::{segments, MaskMatrix, MissingSegment, Scenario};
use crate::model::ImputationResult;

/// Minimum missing length for a segment to count towards SCE.
pub const SCE_MIN_FRAMES: usize = 3;

fn check_shapes(truth: &ArrayView3<f64>, pred: &ArrayView3<f64>, mask: &MaskMatrix) -> Result<()> {
    let (k, t, _) = truth.dim();
    if pred.dim().0 != k || pred.dim().1 != t || truth.dim().2 < 2 || pred.dim().2 < 2 || mask.agents() != k || mask.frames() != t {
        return Err(MidasError::Shape(format!(
            "truth {:?}, prediction {:?}, mask {}x{}",
            truth.dim(),
            pred.dim(),
            mask.agents(),
            mask.frames()
        )));
    }
    Ok(())
}

/// Running mean for pooling a metric over windows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Mean {
    pub sum: f64,
    pub count: usize,
}

impl Mean {
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.count += 1;
    }

    pub fn merge(&mut self, other: Mean) {
        self.sum += other.sum;
        self.count += other.count;
    }

    /// Zero when nothing was pushed.
    pub fn value(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Euclidean errors over every missing agent-frame. Only the first two
/// channels of `truth` and `pred` are read.
pub fn position_error_sum(truth: ArrayView3<f64>, pred: ArrayView3<f64>, mask: &MaskMatrix) -> Result<Mean> {
    check_shapes(&truth, &pred, mask)?;
    let mut acc = Mean::default();
    for ((k, t), &observed) in mask.values().indexed_iter() {
        if !observed {
            acc.push(((truth[[k, t, 0]] - pred[[k, t, 0]]).powi(2) + (truth[[k, t, 1]] - pred[[k, t, 1]]).powi(2)).sqrt());
        }
    }
    Ok(acc)
}

/// Mean Euclidean distance over missing agent-frames, zero if none.
pub fn position_error(truth: ArrayView3<f64>, pred: ArrayView3<f64>, mask: &MaskMatrix) -> Result<f64> {
    Ok(position_error_sum(truth, pred, mask)?.value())
}

fn step_norms(p: &ArrayView3<f64>, seg: &MissingSegment) -> Vec<f64> {
    (seg.t_s + 1..=seg.t_e)
        .map(|t| {
            let dx = p[[seg.agent, t, 0]] - p[[seg.agent, t - 1, 0]];
            let dy = p[[seg.agent, t, 1]] - p[[seg.agent, t - 1, 1]];
            (dx * dx + dy * dy).sqrt()
        })
        .collect()
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Per-segment `|var(true steps) - var(predicted steps)|`. Steps run from the
/// anchor `t_s` through to `t_e`, and the variance is the population variance.
pub fn step_change_error_sum(truth: ArrayView3<f64>, pred: ArrayView3<f64>, mask: &MaskMatrix) -> Result<Mean> {
    check_shapes(&truth, &pred, mask)?;
    let mut acc = Mean::default();
    for seg in segments(mask) {
        if seg.missing_len() < SCE_MIN_FRAMES {
            continue;
        }
        acc.push((variance(&step_norms(&truth, &seg)) - variance(&step_norms(&pred, &seg))).abs());
    }
    Ok(acc)
}

pub fn step_change_error(truth: ArrayView3<f64>, pred: ArrayView3<f64>, mask: &MaskMatrix) -> Result<f64> {
    Ok(step_change_error_sum(truth, pred, mask)?.value())
}

/// Straight line between the endpoints of every missing segment.
pub fn linear_interp(window: &TrajectoryWindow, mask: &MaskMatrix) -> Result<Array3<f64>> {
    let p = &window.positions;
    check_shapes(&p.view(), &p.view(), mask)?;
    let mut out = p.clone();
    for seg in segments(mask) {
        let span = (seg.t_e - seg.t_s) as f64;
        for t in seg.missing_frames() {
            let u = (t - seg.t_s) as f64 / span;
            for d in 0..2 {
                out[[seg.agent, t, d]] = p[[seg.agent, seg.t_s, d]] + u * (p[[seg.agent, seg.t_e, d]] - p[[seg.agent, seg.t_s, d]]);
            }
        }
    }
    Ok(out)
}

/// Natural cubic spline through `(xs, ys)`, evaluated at `at`. `xs` must be
/// strictly increasing with at least two points.
pub fn natural_spline(xs: &[f64], ys: &[f64], at: &[f64]) -> Vec<f64> {
    let n = xs.len();
    assert!(n >= 2 && ys.len() == n, "spline needs at least two knots");
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    // Second derivatives: M[0] = M[n-1] = 0, tridiagonal system for the interior.
    let mut m = vec![0.0; n];
    if n > 2 {
        let size = n - 2;
        let mut diag = vec![0.0; size];
        let mut upper = vec![0.0; size];
        let mut rhs = vec![0.0; size];
        for i in 0..size {
            let j = i + 1;
            diag[i] = 2.0 * (h[j - 1] + h[j]);
            upper[i] = h[j];
            rhs[i] = 6.0 * ((ys[j + 1] - ys[j]) / h[j] - (ys[j] - ys[j - 1]) / h[j - 1]);
        }
        for i in 1..size {
            let lower = h[i];
            let factor = lower / diag[i - 1];
            diag[i] -= factor * upper[i - 1];
            rhs[i] -= factor * rhs[i - 1];
        }
        m[size] = rhs[size - 1] / diag[size - 1];
        for i in (0..size - 1).rev() {
            m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
        }
    }
    at.iter()
        .map(|&x| {
            let i = match xs.partition_point(|&k| k <= x) {
                0 => 0,
                p if p >= n => n - 2,
                p => p - 1,
            };
            let (x0, x1, hi) = (xs[i], xs[i + 1], h[i]);
            let a = (x1 - x) / hi;
            let b = (x - x0) / hi;
            a * ys[i] + b * ys[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * hi * hi / 6.0
        })
        .collect()
}

/// Natural cubic spline per agent and axis through all observed frames.
pub fn cubic_spline(window: &TrajectoryWindow, mask: &MaskMatrix) -> Result<Array3<f64>> {
    let p = &window.positions;
    check_shapes(&p.view(), &p.view(), mask)?;
    let mut out = p.clone();
    for k in 0..window.agents() {
        let row = mask.values().row(k);
        let knots: Vec<usize> = (0..window.frames()).filter(|&t| row[t]).collect();
        let holes: Vec<usize> = (0..window.frames()).filter(|&t| !row[t]).collect();
        if holes.is_empty() {
            continue;
        }
        let xs: Vec<f64> = knots.iter().map(|&t| t as f64).collect();
        let at: Vec<f64> = holes.iter().map(|&t| t as f64).collect();
        for d in 0..2 {
            let ys: Vec<f64> = knots.iter().map(|&t| p[[k, t, d]]).collect();
            for (&t, v) in holes.iter().zip(natural_spline(&xs, &ys, &at)) {
                out[[k, t, d]] = v;
            }
        }
    }
    Ok(out)
}

/// Missing-length group of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tercile {
    Short,
    Medium,
    Long,
}

impl Tercile {
    pub const ALL: [Tercile; 3] = [Tercile::Short, Tercile::Medium, Tercile::Long];
}

/// Splits lengths at the empirical 1/3 and 2/3 quantiles. A length equal to a
/// boundary value goes to the lower group.
pub fn tercile_assign(lengths: &[usize]) -> Vec<Tercile> {
    if lengths.is_empty() {
        return Vec::new();
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let q1 = sorted[n.div_ceil(3) - 1];
    let q2 = sorted[(2 * n).div_ceil(3) - 1];
    lengths
        .iter()
        .map(|&l| {
            if l <= q1 {
                Tercile::Short
            } else if l <= q2 {
                Tercile::Medium
            } else {
                Tercile::Long
            }
        })
        .collect()
}

/// One row of the tercile table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TercileRow {
    pub group: Tercile,
    pub segments: usize,
    pub frames: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub pe_initial: f64,
    pub pe_forward: f64,
    pub pe_backward: f64,
    pub pe_final: f64,
    /// Mean `(λi, λf, λb)` over the group's missing frames.
    pub lambda: [f64; 3],
}

/// Per-tercile component errors and mean weights over all segments of all
/// windows.
pub fn tercile_report(results: &[ImputationResult], truths: &[TrajectoryWindow]) -> Result<Vec<TercileRow>> {
    if results.len() != truths.len() {
        return Err(MidasError::Shape(format!("{} results for {} windows", results.len(), truths.len())));
    }
    let mut all: Vec<(usize, MissingSegment)> = Vec::new();
    for (i, r) in results.iter().enumerate() {
        all.extend(segments(&r.mask).into_iter().map(|s| (i, s)));
    }
    let groups = tercile_assign(&all.iter().map(|(_, s)| s.missing_len()).collect::<Vec<_>>());
    let mut rows = Vec::new();
    for group in Tercile::ALL {
        let mut pe = [Mean::default(); 4];
        let mut lambda = [Mean::default(); 3];
        let mut count = 0;
        let (mut lo, mut hi) = (usize::MAX, 0);
        for ((i, seg), g) in all.iter().zip(&groups) {
            if *g != group {
                continue;
            }
            count += 1;
            lo = lo.min(seg.missing_len());
            hi = hi.max(seg.missing_len());
            let (r, w) = (&results[*i], &truths[*i]);
            let finals = r.positions();
            let sources = [r.initial.view(), r.forward.view(), r.backward.view(), finals.view()];
            for t in seg.missing_frames() {
                let truth = [w.positions[[seg.agent, t, 0]], w.positions[[seg.agent, t, 1]]];
                for (acc, src) in pe.iter_mut().zip(&sources) {
                    acc.push(((truth[0] - src[[seg.agent, t, 0]]).powi(2) + (truth[1] - src[[seg.agent, t, 1]]).powi(2)).sqrt());
                }
                for (c, acc) in lambda.iter_mut().enumerate() {
                    acc.push(r.weights.lambdas()[[seg.agent, t, c]]);
                }
            }
        }
        if count == 0 {
            continue;
        }
        rows.push(TercileRow {
            group,
            segments: count,
            frames: pe[0].count,
            min_length: lo,
            max_length: hi,
            pe_initial: pe[0].value(),
            pe_forward: pe[1].value(),
            pe_backward: pe[2].value(),
            pe_final: pe[3].value(),
            lambda: [lambda[0].value(), lambda[1].value(), lambda[2].value()],
        });
    }
    Ok(rows)
}

/// PE and SCE for one method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub pe: f64,
    pub sce: f64,
}

/// Scores for every method over a set of windows, plus the tercile table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: Scenario,
    pub rate: f64,
    pub windows: usize,
    pub missing_frames: usize,
    /// Final ensemble output.
    pub midas: MethodScore,
    /// Initial prediction alone.
    pub initial: MethodScore,
    pub linear: MethodScore,
    pub spline: MethodScore,
    pub terciles: Vec<TercileRow>,
}

/// Scores of an arbitrary prediction against ground truth, pooled over windows.
pub fn score(truths: &[TrajectoryWindow], preds: &[ArrayView3<f64>], masks: &[&MaskMatrix]) -> Result<MethodScore> {
    let mut pe = Mean::default();
    let mut sce = Mean::default();
    for ((w, p), m) in truths.iter().zip(preds).zip(masks) {
        pe.merge(position_error_sum(w.positions.view(), p.view(), m)?);
        sce.merge(step_change_error_sum(w.positions.view(), p.view(), m)?);
    }
    Ok(MethodScore { pe: pe.value(), sce: sce.value() })
}

pub fn evaluate(scenario: Scenario, rate: f64, results: &[ImputationResult], truths: &[TrajectoryWindow]) -> Result<EvalReport> {
    if results.len() != truths.len() {
        return Err(MidasError::Shape(format!("{} results for {} windows", results.len(), truths.len())));
    }
    let masks: Vec<&MaskMatrix> = results.iter().map(|r| &r.mask).collect();
    let finals: Vec<Array3<f64>> = results.iter().map(|r| r.positions()).collect();
    let li = truths.iter().zip(&masks).map(|(w, m)| linear_interp(w, m)).collect::<Result<Vec<_>>>()?;
    let cs = truths.iter().zip(&masks).map(|(w, m)| cubic_spline(w, m)).collect::<Result<Vec<_>>>()?;
    fn views(v: &[Array3<f64>]) -> Vec<ArrayView3<'_, f64>> {
        v.iter().map(|a| a.view()).collect()
    }
    let initial: Vec<_> = results.iter().map(|r| r.initial.slice(s![.., .., 0..2])).collect();
    Ok(EvalReport {
        scenario,
        rate,
        windows: results.len(),
        missing_frames: masks.iter().map(|m| m.missing_count()).sum(),
        midas: score(truths, &views(&finals), &masks)?,
        initial: score(truths, &initial, &masks)?,
        linear: score(truths, &views(&li), &masks)?,
        spline: score(truths, &views(&cs), &masks)?,
        terciles: tercile_report(results, truths)?,
    })
}

impl EvalReport {
    /// Method table: `method,pe,sce`.
    pub fn write_methods_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["method", "pe", "sce"])?;
        for (name, s) in [("midas", self.midas), ("initial", self.initial), ("linear", self.linear), ("spline", self.spline)] {
            wtr.write_record([name.to_string(), s.pe.to_string(), s.sce.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_terciles_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "group", "segments", "frames", "min_length", "max_length", "pe_initial", "pe_forward", "pe_backward", "pe_final", "li", "lf", "lb",
        ])?;
        for r in &self.terciles {
            let group = match r.group {
                Tercile::Short => "short",
                Tercile::Medium => "medium",
                Tercile::Long => "long",
            };
            wtr.write_record([
                group.to_string(),
                r.segments.to_string(),
                r.frames.to_string(),
                r.min_length.to_string(),
                r.max_length.to_string(),
                r.pe_initial.to_string(),
                r.pe_forward.to_string(),
                r.pe_backward.to_string(),
                r.pe_final.to_string(),
                r.lambda[0].to_string(),
                r.lambda[1].to_string(),
                r.lambda[2].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PitchBounds;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_with(k: usize, t: usize, holes: &[(usize, std::ops::Range<usize>)]) -> MaskMatrix {
        let mut v = Array2::from_elem((k, t), true);
        for (a, r) in holes {
            v.slice_mut(s![*a, r.clone()]).fill(false);
        }
        MaskMatrix::new(v, 1).unwrap()
    }

    fn window_from(p: Array3<f64>) -> TrajectoryWindow {
        TrajectoryWindow::from_positions("w", (0..p.dim().0).map(|k| k.to_string()).collect(), p, 0.1, PitchBounds::SOCCER, None).unwrap()
    }

    #[test]
    fn pe_of_a_three_four_offset_is_five() {
        let truth = Array3::from_shape_fn((2, 10, 2), |(k, t, d)| (k + t + d) as f64);
        let mask = mask_with(2, 10, &[(0, 2..5), (1, 3..8)]);
        let mut pred = truth.clone();
        for ((k, t), &o) in mask.values().indexed_iter() {
            if !o {
                pred[[k, t, 0]] += 3.0;
                pred[[k, t, 1]] += 4.0;
            }
        }
        assert!((position_error(truth.view(), pred.view(), &mask).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(position_error(truth.view(), truth.view(), &mask).unwrap(), 0.0);
    }

    #[test]
    fn sce_of_alternating_steps() {
        let n = 10;
        let mut truth = Array3::zeros((1, n + 2, 2));
        let mut pred = Array3::zeros((1, n + 2, 2));
        for t in 1..n + 2 {
            truth[[0, t, 0]] = truth[[0, t - 1, 0]] + 0.5;
            pred[[0, t, 0]] = pred[[0, t - 1, 0]] + if t % 2 == 0 { 0.4 } else { 0.6 };
        }
        // Steps t_s+1..=t_e: 10 steps when the segment has 9 missing frames.
        let mask = mask_with(1, n + 2, &[(0, 1..n)]);
        let sce = step_change_error(truth.view(), pred.view(), &mask).unwrap();
        assert!((sce - 0.01).abs() < 1e-12, "{sce}");
        assert_eq!(step_change_error(truth.view(), truth.view(), &mask).unwrap(), 0.0);
    }

    #[test]
    fn short_segments_are_excluded_from_sce() {
        let truth = Array3::from_shape_fn((1, 10, 2), |(_, t, _)| (t * t) as f64);
        let pred = Array3::zeros((1, 10, 2));
        let mask = mask_with(1, 10, &[(0, 3..5)]);
        assert_eq!(step_change_error_sum(truth.view(), pred.view(), &mask).unwrap().count, 0);
    }

    #[test]
    fn metrics_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let (k, t) = (rng.random_range(1..5), rng.random_range(12..40));
            let truth: Array3<f64> = Array3::from_shape_fn((k, t, 2), |_| rng.random_range(-50.0..50.0));
            let pred: Array3<f64> = Array3::from_shape_fn((k, t, 2), |_| rng.random_range(-50.0..50.0));
            let v = Array2::from_shape_fn((k, t), |(_, f)| f == 0 || f == t - 1 || rng.random_bool(0.6));
            let mask = MaskMatrix::new(v.clone(), 1).unwrap();
            let (mut sum, mut n) = (0.0, 0);
            for a in 0..k {
                for f in 0..t {
                    if !v[[a, f]] {
                        sum += ((truth[[a, f, 0]] - pred[[a, f, 0]]).powi(2) + (truth[[a, f, 1]] - pred[[a, f, 1]]).powi(2)).sqrt();
                        n += 1;
                    }
                }
            }
            let expected = if n == 0 { 0.0 } else { sum / n as f64 };
            assert!((position_error(truth.view(), pred.view(), &mask).unwrap() - expected).abs() < 1e-9);
            assert!((position_error(pred.view(), truth.view(), &mask).unwrap() - expected).abs() < 1e-9);

            let (mut total, mut segs) = (0.0, 0);
            for a in 0..k {
                let mut f = 1;
                while f < t {
                    if v[[a, f]] {
                        f += 1;
                        continue;
                    }
                    let start = f - 1;
                    while !v[[a, f]] {
                        f += 1;
                    }
                    if f - start - 1 >= 3 {
                        let var = |p: &Array3<f64>| {
                            let steps: Vec<f64> = (start + 1..=f)
                                .map(|x| ((p[[a, x, 0]] - p[[a, x - 1, 0]]).powi(2) + (p[[a, x, 1]] - p[[a, x - 1, 1]]).powi(2)).sqrt())
                                .collect();
                            let m = steps.iter().sum::<f64>() / steps.len() as f64;
                            steps.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / steps.len() as f64
                        };
                        total += (var(&truth) - var(&pred)).abs();
                        segs += 1;
                    }
                }
            }
            let expected = if segs == 0 { 0.0 } else { total / segs as f64 };
            assert!((step_change_error(truth.view(), pred.view(), &mask).unwrap() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_interp_midpoint_and_chord() {
        let mut p = Array3::zeros((1, 12, 2));
        p[[0, 10, 0]] = 10.0;
        for t in 11..12 {
            p[[0, t, 0]] = 10.0;
        }
        let mask = mask_with(1, 12, &[(0, 1..10)]);
        let out = linear_interp(&window_from(p), &mask).unwrap();
        assert!((out[[0, 5, 0]] - 5.0).abs() < 1e-12);
        assert_eq!(out[[0, 5, 1]], 0.0);
    }

    #[test]
    fn linear_interp_lies_on_the_parametric_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p = Array3::from_shape_fn((3, 40, 2), |_| rng.random_range(0.0..60.0));
        let mask = mask_with(3, 40, &[(0, 4..20), (1, 10..11), (2, 30..39)]);
        let out = linear_interp(&window_from(p.clone()), &mask).unwrap();
        for seg in segments(&mask) {
            let a = [p[[seg.agent, seg.t_s, 0]], p[[seg.agent, seg.t_s, 1]]];
            let b = [p[[seg.agent, seg.t_e, 0]], p[[seg.agent, seg.t_e, 1]]];
            for t in seg.missing_frames() {
                let u = (t - seg.t_s) as f64 / (seg.t_e - seg.t_s) as f64;
                for d in 0..2 {
                    assert!((out[[seg.agent, t, d]] - ((1.0 - u) * a[d] + u * b[d])).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn spline_reproduces_cubics_inside_and_is_linear_with_two_knots() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64 * 1.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let at = [0.3, 4.4, 9.9];
        for (x, y) in at.iter().zip(natural_spline(&xs, &ys, &at)) {
            assert!((y - (2.0 * x - 1.0)).abs() < 1e-12);
        }
        let y2 = natural_spline(&[0.0, 10.0], &[1.0, 6.0], &[4.0]);
        assert!((y2[0] - 3.0).abs() < 1e-12);
    }

    /// Dense reference: solve the full (n x n) natural-spline system with
    /// Gaussian elimination and evaluate the piecewise cubic.
    fn dense_spline(xs: &[f64], ys: &[f64], x: f64) -> f64 {
        let n = xs.len();
        let mut a = vec![vec![0.0; n + 1]; n];
        a[0][0] = 1.0;
        a[n - 1][n - 1] = 1.0;
        for i in 1..n - 1 {
            let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
            a[i][i - 1] = h0;
            a[i][i] = 2.0 * (h0 + h1);
            a[i][i + 1] = h1;
            a[i][n] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
        }
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for j in c..=n {
                        a[r][j] -= f * a[c][j];
                    }
                }
            }
        }
        let m: Vec<f64> = (0..n).map(|i| a[i][n] / a[i][i]).collect();
        let i = (0..n - 1).find(|&i| x <= xs[i + 1]).unwrap_or(n - 2);
        let h = xs[i + 1] - xs[i];
        let t = x - xs[i];
        let b = (ys[i + 1] - ys[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
        ys[i] + b * t + m[i] / 2.0 * t * t + (m[i + 1] - m[i]) / (6.0 * h) * t * t * t
    }

    #[test]
    fn spline_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.random_range(3..30);
            let mut xs: Vec<f64> = vec![0.0];
            for _ in 1..n {
                xs.push(xs.last().unwrap() + rng.random_range(0.5..3.0));
            }
            let ys: Vec<f64> = xs.iter().map(|x| (x * 0.3).sin() * 10.0 + rng.random_range(-1.0..1.0)).collect();
            let at: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..*xs.last().unwrap())).collect();
            for (x, y) in at.iter().zip(natural_spline(&xs, &ys, &at)) {
                assert!((y - dense_spline(&xs, &ys, *x)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn spline_passes_through_observations_and_recovers_cubic_interior() {
        let f = |t: f64| 0.001 * t * t * t - 0.05 * t * t + t;
        let p = Array3::from_shape_fn((1, 60, 2), |(_, t, d)| if d == 0 { f(t as f64) } else { 1.0 });
        let mask = mask_with(1, 60, &[(0, 28..31)]);
        let w = window_from(p.clone());
        let out = cubic_spline(&w, &mask).unwrap();
        for t in 0..60 {
            if mask.observed(0, t) {
                assert_eq!(out[[0, t, 0]], p[[0, t, 0]]);
            }
        }
        for t in 28..31 {
            assert!((out[[0, t, 0]] - f(t as f64)).abs() < 1e-6, "{t}");
        }
    }

    #[test]
    fn terciles_follow_quantiles_with_ties_down() {
        assert!(tercile_assign(&[5; 9]).iter().all(|g| *g == Tercile::Short));
        let lengths: Vec<usize> = [10, 90, 170].iter().flat_map(|&l| std::iter::repeat_n(l, 4)).collect();
        let g = tercile_assign(&lengths);
        assert_eq!(&g[0..4], &[Tercile::Short; 4]);
        assert_eq!(&g[4..8], &[Tercile::Medium; 4]);
        assert_eq!(&g[8..12], &[Tercile::Long; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..50 {
            let n = rng.random_range(3..200);
            let mut lengths: Vec<usize> = (1..=n).collect();
            for i in (1..n).rev() {
                lengths.swap(i, rng.random_range(0..=i));
            }
            let g = tercile_assign(&lengths);
            for group in Tercile::ALL {
                let size = g.iter().filter(|x| **x == group).count() as f64;
                assert!((size - n as f64 / 3.0).abs() <= 1.0, "{n} {group:?} {size}");
            }
        }
    }
}
