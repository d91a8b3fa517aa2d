//! Physical-load statistics and pitch-control maps computed from (imputed) trajectories.

use std::collections::HashMap;
use std::io::Write;

use ndarray::{Array2, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::data::PitchBounds;
use crate::error::{MidasError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedFilter {
    /// Speeds above this (m/s) are treated as tracking outliers.
    pub max_speed: f64,
    /// Acceleration norms above this (m/s^2) are treated as tracking outliers.
    pub max_accel: f64,
    pub window: usize,
    pub order: usize,
}

impl Default for SpeedFilter {
    fn default() -> Self {
        Self { max_speed: 12.0, max_accel: 8.0, window: 11, order: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SprintRule {
    pub threshold: f64,
    pub min_duration: f64,
}

impl Default for SprintRule {
    fn default() -> Self {
        Self { threshold: 6.0, min_duration: 1.0 }
    }
}

impl SprintRule {
    pub fn min_frames(&self, dt: f64) -> usize {
        ((self.min_duration / dt).round() as usize).max(1)
    }
}

/// Marks per-step velocities that break the speed or acceleration limits.
///
/// Acceleration is measured against the most recent accepted step, so a single
/// spike does not condemn the clean step that follows it.
fn outlier_steps(vel: &[[f64; 2]], dt: f64, filter: &SpeedFilter) -> Vec<bool> {
    let mut bad = vec![false; vel.len()];
    let mut last: Option<usize> = None;
    for (i, v) in vel.iter().enumerate() {
        let speed = v[0].hypot(v[1]);
        let mut reject = !speed.is_finite() || speed > filter.max_speed;
        if !reject {
            if let Some(j) = last {
                let gap = (i - j) as f64 * dt;
                let accel = (v[0] - vel[j][0]).hypot(v[1] - vel[j][1]) / gap;
                reject = accel > filter.max_accel;
            }
        }
        bad[i] = reject;
        if !reject {
            last = Some(i);
        }
    }
    bad
}

/// Replaces flagged entries by linear interpolation between the nearest kept neighbours.
fn fill_linear(values: &mut [f64], bad: &[bool]) -> bool {
    let kept: Vec<usize> = (0..values.len()).filter(|&i| !bad[i]).collect();
    let (Some(&first), Some(&last)) = (kept.first(), kept.last()) else {
        return false;
    };
    for i in 0..first {
        values[i] = values[first];
    }
    for i in last + 1..values.len() {
        values[i] = values[last];
    }
    for pair in kept.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for i in a + 1..b {
            let w = (i - a) as f64 / (b - a) as f64;
            values[i] = values[a] * (1.0 - w) + values[b] * w;
        }
    }
    true
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty system");
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Least-squares weights that evaluate a degree-`order` fit over `window`
/// samples at each position inside the window. Row `r` gives the weights for position `r`.
fn savgol_weights(window: usize, order: usize) -> Vec<Vec<f64>> {
    let center = (window - 1) as f64 / 2.0;
    let xs: Vec<f64> = (0..window).map(|j| j as f64 - center).collect();
    let m = order + 1;
    let gram: Vec<Vec<f64>> = (0..m)
        .map(|p| (0..m).map(|q| xs.iter().map(|x| x.powi((p + q) as i32)).sum()).collect())
        .collect();
    (0..window)
        .map(|r| {
            // Solve G c = e(r), then weight_j = sum_p c_p x_j^p.
            let rhs: Vec<f64> = (0..m).map(|p| xs[r].powi(p as i32)).collect();
            let c = solve_dense(gram.clone(), rhs);
            xs.iter().map(|x| (0..m).map(|p| c[p] * x.powi(p as i32)).sum()).collect()
        })
        .collect()
}

/// Savitzky-Golay smoothing. Edge samples use the polynomial fitted to the first or
/// last full window. Short series shrink the window to the largest odd length that fits.
pub fn savitzky_golay(values: &[f64], window: usize, order: usize) -> Vec<f64> {
    let n = values.len();
    let mut w = window.min(n);
    if w.is_multiple_of(2) {
        w = w.saturating_sub(1);
    }
    if w <= order {
        return values.to_vec();
    }
    let weights = savgol_weights(w, order);
    let half = w / 2;
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - w);
            let row = &weights[i - start];
            row.iter().zip(&values[start..start + w]).map(|(a, b)| a * b).sum()
        })
        .collect()
}

/// Speed per step (`T - 1` values for `T` positions) after outlier replacement and smoothing.
pub fn clean_speed(positions: ArrayView2<f64>, dt: f64, filter: &SpeedFilter) -> Result<Vec<f64>> {
    if positions.ncols() != 2 {
        return Err(MidasError::Shape(format!("positions must be T x 2, got {:?}", positions.dim())));
    }
    if !(dt > 0.0) {
        return Err(MidasError::Config(format!("dt must be positive, got {dt}")));
    }
    let t = positions.nrows();
    if t < 2 {
        return Ok(Vec::new());
    }
    let vel: Vec<[f64; 2]> = (1..t)
        .map(|i| {
            [
                (positions[[i, 0]] - positions[[i - 1, 0]]) / dt,
                (positions[[i, 1]] - positions[[i - 1, 1]]) / dt,
            ]
        })
        .collect();
    let mut speed: Vec<f64> = vel.iter().map(|v| v[0].hypot(v[1])).collect();
    let bad = outlier_steps(&vel, dt, filter);
    if !fill_linear(&mut speed, &bad) {
        speed.iter_mut().for_each(|s| *s = 0.0);
    }
    let smooth = savitzky_golay(&speed, filter.window, filter.order);
    Ok(smooth.into_iter().map(|s| s.max(0.0)).collect())
}

pub fn total_distance(speed: &[f64], dt: f64) -> f64 {
    speed.iter().map(|s| s * dt).sum()
}

/// Number of maximal runs above the sprint threshold lasting at least the minimum duration.
pub fn count_sprints(speed: &[f64], dt: f64, rule: &SprintRule) -> usize {
    let min = rule.min_frames(dt);
    let mut count = 0;
    let mut run = 0;
    for &s in speed.iter().chain(std::iter::once(&f64::NEG_INFINITY)) {
        if s > rule.threshold {
            run += 1;
        } else {
            if run >= min {
                count += 1;
            }
            run = 0;
        }
    }
    count
}

/// One player's positions across a whole match, `[T, 2]` in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerTrack {
    pub player_id: String,
    pub positions: Array2<f64>,
}

/// Concatenates consecutive `[K, T, 2]` windows into per-player tracks, ordered by first appearance.
pub fn stitch_tracks<'a>(parts: impl IntoIterator<Item = (&'a [String], ArrayView3<'a, f64>)>) -> Vec<PlayerTrack> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<f64>> = HashMap::new();
    for (ids, positions) in parts {
        for (k, id) in ids.iter().enumerate() {
            let entry = rows.entry(id.clone()).or_insert_with(|| {
                order.push(id.clone());
                Vec::new()
            });
            entry.extend(positions.index_axis(Axis(0), k).iter());
        }
    }
    order
        .into_iter()
        .map(|id| {
            let data = rows.remove(&id).unwrap_or_default();
            let t = data.len() / 2;
            PlayerTrack { player_id: id, positions: Array2::from_shape_vec((t, 2), data).expect("pairs") }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalStats {
    pub player_id: String,
    pub distance: f64,
    pub sprints: usize,
    pub minutes_played: f64,
    pub distance_per90: f64,
    pub sprints_per90: f64,
}

impl PhysicalStats {
    pub fn new(player_id: impl Into<String>, distance: f64, sprints: usize, minutes_played: f64) -> Self {
        let scale = if minutes_played > 0.0 { 90.0 / minutes_played } else { 0.0 };
        Self {
            player_id: player_id.into(),
            distance,
            sprints,
            minutes_played,
            distance_per90: distance * scale,
            sprints_per90: sprints as f64 * scale,
        }
    }
}

pub fn player_stats(track: &PlayerTrack, dt: f64, filter: &SpeedFilter, rule: &SprintRule) -> Result<PhysicalStats> {
    let speed = clean_speed(track.positions.view(), dt, filter)?;
    let minutes = track.positions.nrows() as f64 * dt / 60.0;
    Ok(PhysicalStats::new(
        track.player_id.clone(),
        total_distance(&speed, dt),
        count_sprints(&speed, dt, rule),
        minutes,
    ))
}

pub fn match_stats(tracks: &[PlayerTrack], dt: f64, filter: &SpeedFilter, rule: &SprintRule) -> Result<Vec<PhysicalStats>> {
    tracks.iter().map(|t| player_stats(t, dt, filter, rule)).collect()
}

/// Team-level means over players with at least `min_sprints` sprints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub players: usize,
    pub excluded: usize,
    pub mean_distance_per90: f64,
    pub mean_sprints_per90: f64,
}

pub fn summarize(stats: &[PhysicalStats], min_sprints: usize) -> StatsSummary {
    let kept: Vec<&PhysicalStats> = stats.iter().filter(|s| s.sprints >= min_sprints).collect();
    let n = kept.len();
    let mean = |f: fn(&PhysicalStats) -> f64| {
        if n == 0 {
            f64::NAN
        } else {
            kept.iter().map(|s| f(s)).sum::<f64>() / n as f64
        }
    };
    StatsSummary {
        players: n,
        excluded: stats.len() - n,
        mean_distance_per90: mean(|s| s.distance_per90),
        mean_sprints_per90: mean(|s| s.sprints_per90),
    }
}

/// One method's row of the physical-statistics table: per-90 means and mean absolute
/// percentage errors against ground truth. Players are kept when their ground-truth
/// sprint count reaches `min_sprints`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTableRow {
    pub method: String,
    pub players: usize,
    pub mean_distance_per90: f64,
    pub distance_mape: f64,
    pub mean_sprints_per90: f64,
    pub sprints_mape: f64,
}

pub fn stats_table_row(method: &str, truth: &[PhysicalStats], estimate: &[PhysicalStats], min_sprints: usize) -> Result<StatsTableRow> {
    let by_id: HashMap<&str, &PhysicalStats> = estimate.iter().map(|s| (s.player_id.as_str(), s)).collect();
    let mut n = 0usize;
    let (mut dist, mut sprints, mut dist_ape, mut sprint_ape) = (0.0, 0.0, 0.0, 0.0);
    for gt in truth.iter().filter(|s| s.sprints >= min_sprints) {
        let est = by_id
            .get(gt.player_id.as_str())
            .ok_or_else(|| MidasError::Shape(format!("no estimate for player {}", gt.player_id)))?;
        n += 1;
        dist += est.distance_per90;
        sprints += est.sprints_per90;
        dist_ape += (est.distance_per90 - gt.distance_per90).abs() / gt.distance_per90;
        sprint_ape += (est.sprints_per90 - gt.sprints_per90).abs() / gt.sprints_per90;
    }
    let mean = |x: f64| if n == 0 { f64::NAN } else { x / n as f64 };
    Ok(StatsTableRow {
        method: method.to_string(),
        players: n,
        mean_distance_per90: mean(dist),
        distance_mape: 100.0 * mean(dist_ape),
        mean_sprints_per90: mean(sprints),
        sprints_mape: 100.0 * mean(sprint_ape),
    })
}

pub fn write_stats_csv<W: Write>(writer: W, stats: &[PhysicalStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in stats {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitchControlParams {
    /// Seconds before a player reacts; until then they keep their current velocity.
    pub reaction_time: f64,
    pub max_speed: f64,
    /// Logistic temperature on the arrival-time difference, in seconds.
    pub sigma: f64,
    /// When set, no player can arrive before the ball does.
    pub ball_speed: Option<f64>,
}

impl Default for PitchControlParams {
    fn default() -> Self {
        Self { reaction_time: 0.7, max_speed: 5.0, sigma: 0.45, ball_speed: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub pitch: PitchBounds,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(pitch: PitchBounds, nx: usize, ny: usize) -> Self {
        Self { pitch, nx, ny }
    }

    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        [
            (col as f64 + 0.5) * self.pitch.length / self.nx as f64,
            (row as f64 + 0.5) * self.pitch.width / self.ny as f64,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayerState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

/// A single frame split into the two teams. The map reports control for `left`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameState {
    pub left: Vec<PlayerState>,
    pub right: Vec<PlayerState>,
    pub ball: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlMap {
    pub grid: Array2<f64>,
    pub spec: GridSpec,
}

fn arrival(p: &PlayerState, target: [f64; 2], params: &PitchControlParams) -> f64 {
    let rx = p.position[0] + p.velocity[0] * params.reaction_time;
    let ry = p.position[1] + p.velocity[1] * params.reaction_time;
    params.reaction_time + (target[0] - rx).hypot(target[1] - ry) / params.max_speed
}

fn best_arrival(team: &[PlayerState], target: [f64; 2], params: &PitchControlParams) -> f64 {
    team.iter().map(|p| arrival(p, target, params)).fold(f64::INFINITY, f64::min)
}

pub fn pitch_control(frame: &FrameState, grid: &GridSpec, params: &PitchControlParams) -> Result<ControlMap> {
    if frame.left.is_empty() {
        return Err(MidasError::EmptyTeam("left".into()));
    }
    if frame.right.is_empty() {
        return Err(MidasError::EmptyTeam("right".into()));
    }
    if grid.nx == 0 || grid.ny == 0 {
        return Err(MidasError::Config("control grid must have at least one cell".into()));
    }
    if !(params.sigma > 0.0 && params.max_speed > 0.0) {
        return Err(MidasError::Config("sigma and max_speed must be positive".into()));
    }
    let values = Array2::from_shape_fn((grid.ny, grid.nx), |(r, c)| {
        let target = grid.cell_center(r, c);
        let mut t_left = best_arrival(&frame.left, target, params);
        let mut t_right = best_arrival(&frame.right, target, params);
        if let (Some(ball), Some(speed)) = (frame.ball, params.ball_speed) {
            let t_ball = (target[0] - ball[0]).hypot(target[1] - ball[1]) / speed;
            t_left = t_left.max(t_ball);
            t_right = t_right.max(t_ball);
        }
        1.0 / (1.0 + ((t_left - t_right) / params.sigma).exp())
    });
    Ok(ControlMap { grid: values, spec: *grid })
}

/// Splits agents into two teams by the id prefix before the first `_`.
/// Falls back to first half / second half when the prefixes do not form two groups.
pub fn team_split(ids: &[String]) -> (Vec<usize>, Vec<usize>) {
    let prefix = |s: &String| s.split_once('_').map(|(p, _)| p.to_string());
    let mut tags: Vec<String> = ids.iter().filter_map(prefix).collect();
    tags.sort();
    tags.dedup();
    if tags.len() == 2 && ids.iter().all(|s| prefix(s).is_some()) {
        let first = &tags[0];
        let (left, right): (Vec<usize>, Vec<usize>) =
            (0..ids.len()).partition(|&i| prefix(&ids[i]).as_deref() == Some(first.as_str()));
        return (left, right);
    }
    let half = ids.len().div_ceil(2);
    ((0..half).collect(), (half..ids.len()).collect())
}

pub fn write_control_csv<W: Write>(writer: W, map: &ControlMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "y", "left_control"])?;
    for ((r, c), p) in map.grid.indexed_iter() {
        let [x, y] = map.spec.cell_center(r, c);
        w.write_record([x.to_string(), y.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
