use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context as _, Result};
use log::info;
use midas::analytics::{
    match_stats, pitch_control, stats_table_row, stitch_tracks, team_split, write_control_csv, write_stats_csv, FrameState,
    GridSpec, PhysicalStats, PitchControlParams, PlayerState, SpeedFilter, SprintRule, StatsTableRow,
};
use midas::data::synthetic::{self, SyntheticConfig};
use midas::data::{self, DatasetSpec, Sport, TrajectoryWindow};
use midas::evaluation::{cubic_spline, evaluate as evaluate_report, linear_interp};
use midas::masking::{read_mask_csv, write_mask_csv, MaskMatrix, Scenario, DEFAULT_GUARD};
use midas::model::{Checkpoint, ImputationResult, MidasModel, ModelConfig};
use midas::training::{evaluation_masks, split_dataset, train as train_model, SplitFractions, TrainConfig};
use ndarray::{s, Array2, Array3};
use serde::Serialize;

use crate::io::{manifest_beside, open, resolve_input, write_atomic, write_json, RunManifest};
use crate::{
    config, plot, BenchArgs, ControlArgs, EvaluateArgs, ImputeArgs, MaskArgs, MaskSource, PlotTrajectoriesArgs, PlotWeightsArgs,
    PreprocessArgs, StatsArgs, TrainArgs, UsageError,
};

pub struct Context {
    pub seed: u64,
    pub sport: Sport,
}

impl Context {
    fn spec(&self) -> DatasetSpec {
        DatasetSpec::for_sport(self.sport)
    }

    fn manifest<C: Serialize>(&self, command: &str, args: &C) -> Result<RunManifest> {
        RunManifest::start(command, &serde_json::json!({ "sport": self.sport, "args": args }), self.seed)
    }
}

fn load_windows(path: &Path, spec: &DatasetSpec, manifest: &mut RunManifest) -> Result<Vec<TrajectoryWindow>> {
    let path = resolve_input(path);
    manifest.input(&path)?;
    let windows = data::read_windows_csv(open(&path)?, spec).with_context(|| format!("reading {}", path.display()))?;
    if windows.is_empty() {
        bail!("{} holds no windows", path.display());
    }
    Ok(windows)
}

fn load_model(path: &Path, spec: &DatasetSpec, manifest: &mut RunManifest) -> Result<MidasModel> {
    let path = resolve_input(path);
    manifest.input(&path)?;
    let ckpt = Checkpoint::load(&path).with_context(|| format!("reading {}", path.display()))?;
    if ckpt.dataset_fingerprint != spec.fingerprint() {
        bail!("checkpoint {} was trained for a different dataset spec than --sport {}", path.display(), spec.sport);
    }
    Ok(MidasModel::from_checkpoint(&ckpt)?)
}

fn resolve_masks(
    source: &MaskSource,
    default_scenario: Scenario,
    windows: &[TrajectoryWindow],
    seed: u64,
    manifest: &mut RunManifest,
) -> Result<(Vec<MaskMatrix>, Scenario)> {
    let scenario = source.scenario.unwrap_or(default_scenario);
    match &source.masks {
        Some(p) => {
            let p = resolve_input(p);
            manifest.input(&p)?;
            Ok((read_mask_csv(open(&p)?, windows, DEFAULT_GUARD)?, scenario))
        }
        None => Ok((evaluation_masks(windows, scenario, source.rate, &TrainConfig::default(), seed)?, scenario)),
    }
}

fn with_positions(template: &TrajectoryWindow, positions: Array3<f64>) -> Result<TrajectoryWindow> {
    Ok(TrajectoryWindow::from_positions(
        template.sequence_id.clone(),
        template.agent_ids.clone(),
        positions,
        template.dt,
        template.pitch,
        template.ball.clone(),
    )?)
}

fn write_windows(path: &Path, windows: &[TrajectoryWindow]) -> Result<()> {
    write_atomic(path, |w| Ok(data::write_canonical_csv(w, windows)?))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}{ext}"))
}

fn synthetic_windows(spec: &DatasetSpec, count: usize, seed: u64) -> Vec<TrajectoryWindow> {
    let scale = spec.pitch.length / 105.0;
    let base = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        agents: spec.agents,
        frames: spec.window_frames,
        dt: spec.dt(),
        pitch: spec.pitch,
        team_amplitude: base.team_amplitude * scale,
        agent_amplitude: base.agent_amplitude * scale,
        ..base
    };
    synthetic::generate(&cfg, count, seed)
}

pub fn preprocess(ctx: &Context, args: &PreprocessArgs) -> Result<()> {
    let spec = ctx.spec();
    let mut manifest = ctx.manifest("preprocess", args)?;
    let windows = match (&args.input, args.synthetic) {
        (Some(input), _) => {
            let input = resolve_input(input);
            manifest.input(&input)?;
            data::ingest(&input, &spec, args.source_hz).with_context(|| format!("ingesting {}", input.display()))?
        }
        (None, Some(n)) => synthetic_windows(&spec, n, ctx.seed),
        (None, None) => return Err(UsageError("pass --input or --synthetic".into()).into()),
    };
    info!("{} windows of {} agents x {} frames", windows.len(), spec.agents, spec.window_frames);
    write_windows(&args.out, &windows)?;
    manifest.output(&args.out);
    if args.split {
        let (tr, va, te) = split_dataset(&windows, SplitFractions::for_sport(ctx.sport));
        for (name, part) in [("train", tr), ("val", va), ("test", te)] {
            let path = sibling(&args.out, name);
            info!("{name}: {} windows -> {}", part.len(), path.display());
            write_windows(&path, &part)?;
            manifest.output(&path);
        }
    }
    manifest.finish(&manifest_beside(&args.out))
}

pub fn mask(ctx: &Context, args: &MaskArgs) -> Result<()> {
    let spec = ctx.spec();
    let mut manifest = ctx.manifest("mask", args)?;
    let windows = load_windows(&args.windows, &spec, &mut manifest)?;
    let tc = TrainConfig { guard: args.guard, blocks: args.blocks, ..TrainConfig::default() };
    let masks = evaluation_masks(&windows, args.scenario, args.rate, &tc, ctx.seed)?;
    let missing: usize = masks.iter().map(MaskMatrix::missing_count).sum();
    let total: usize = masks.iter().map(|m| m.agents() * m.frames()).sum();
    info!("{} masks, {:.3} of agent-frames missing", masks.len(), missing as f64 / total as f64);
    write_atomic(&args.out, |w| Ok(write_mask_csv(w, &windows, &masks)?))?;
    manifest.output(&args.out);
    manifest.finish(&manifest_beside(&args.out))
}

/// Buffers the training log and echoes each completed line to the progress log.
struct EchoLog {
    buf: Vec<u8>,
    line_start: usize,
}

impl Write for EchoLog {
    fn write(&mut self, data: &[u8]) -> std::io::Result<usize> {
        self.buf.extend_from_slice(data);
        while let Some(pos) = self.buf[self.line_start..].iter().position(|&b| b == b'\n') {
            let end = self.line_start + pos;
            info!("{}", String::from_utf8_lossy(&self.buf[self.line_start..end]));
            self.line_start = end + 1;
        }
        Ok(data.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

pub fn train(ctx: &Context, args: &TrainArgs) -> Result<()> {
    let spec = ctx.spec();
    let mut manifest = ctx.manifest("train", args)?;
    let config_path = args.config.as_deref().map(resolve_input);
    if let Some(p) = &config_path {
        manifest.input(p)?;
    }
    let (model_cfg, mut tc) = config::load(config_path.as_deref(), ctx.sport)?;
    if let Some(e) = args.epochs {
        tc.epochs = e;
    }
    if args.max_batches.is_some() {
        tc.max_batches = args.max_batches;
    }
    let windows = load_windows(&args.windows, &spec, &mut manifest)?;
    let (train_set, val_set) = match &args.val {
        Some(v) => (windows, load_windows(v, &spec, &mut manifest)?),
        None => {
            let (tr, va, te) = split_dataset(&windows, SplitFractions::for_sport(ctx.sport));
            info!("held out {} test windows", te.len());
            (tr, va)
        }
    };
    info!("training on {} windows, validating on {}", train_set.len(), val_set.len());
    manifest.config["model"] = serde_json::to_value(&model_cfg)?;
    manifest.config["training"] = serde_json::to_value(&tc)?;
    let mut log = EchoLog { buf: Vec::new(), line_start: 0 };
    let outcome = train_model(&train_set, &val_set, &model_cfg, &tc, ctx.seed, Some(&mut log))?;
    info!("best epoch {} with validation PE {:.4} m", outcome.best_epoch, outcome.best_val_pe);
    write_json(&args.out, &outcome.model.to_checkpoint(&spec.fingerprint()))?;
    manifest.output(&args.out);
    let log_path = args.log.clone().unwrap_or_else(|| {
        let mut name = args.out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".log.csv");
        args.out.with_file_name(name)
    });
    write_atomic(&log_path, |w| Ok(w.write_all(&log.buf)?))?;
    manifest.output(&log_path);
    manifest.finish(&manifest_beside(&args.out))
}

fn write_components(w: &mut dyn Write, windows: &[TrajectoryWindow], results: &[ImputationResult]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "sequence_id", "frame_idx", "agent_id", "observed", "ip_x", "ip_y", "ip_vx", "ip_vy", "ip_ax", "ip_ay", "forward_x", "forward_y",
        "backward_x", "backward_y", "final_x", "final_y",
    ])?;
    for (win, r) in windows.iter().zip(results) {
        for t in 0..win.frames() {
            for (k, id) in win.agent_ids.iter().enumerate() {
                let mut rec = vec![r.sequence_id.clone(), t.to_string(), id.clone(), u8::from(r.mask.observed(k, t)).to_string()];
                rec.extend((0..6).map(|c| r.initial[[k, t, c]].to_string()));
                rec.extend((0..2).map(|c| r.forward[[k, t, c]].to_string()));
                rec.extend((0..2).map(|c| r.backward[[k, t, c]].to_string()));
                rec.extend((0..2).map(|c| r.trajectories[[k, t, c]].to_string()));
                wtr.write_record(&rec)?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

fn write_weights(w: &mut dyn Write, windows: &[TrajectoryWindow], results: &[ImputationResult]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["sequence_id", "frame_idx", "agent_id", "li", "lf", "lb"])?;
    for (win, r) in windows.iter().zip(results) {
        let l = r.weights.lambdas();
        for t in 0..win.frames() {
            for (k, id) in win.agent_ids.iter().enumerate() {
                wtr.write_record([
                    r.sequence_id.clone(),
                    t.to_string(),
                    id.clone(),
                    l[[k, t, 0]].to_string(),
                    l[[k, t, 1]].to_string(),
                    l[[k, t, 2]].to_string(),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

fn imputed_windows(windows: &[TrajectoryWindow], results: &[ImputationResult]) -> Result<Vec<TrajectoryWindow>> {
    windows.iter().zip(results).map(|(w, r)| with_positions(w, r.positions())).collect()
}

pub fn impute(ctx: &Context, args: &ImputeArgs) -> Result<()> {
    let spec = ctx.spec();
    let mut manifest = ctx.manifest("impute", args)?;
    let windows = load_windows(&args.windows, &spec, &mut manifest)?;
    let model = load_model(&args.checkpoint, &spec, &mut manifest)?;
    let (masks, _) = resolve_masks(&args.masks, Scenario::AgentWise, &windows, ctx.seed, &mut manifest)?;
    let started = Instant::now();
    let results = model.impute_all(&windows, &masks)?;
    info!("imputed {} windows in {:.2} s", results.len(), started.elapsed().as_secs_f64());
    write_windows(&args.out, &imputed_windows(&windows, &results)?)?;
    manifest.output(&args.out);
    if let Some(p) = &args.dump_components {
        write_atomic(p, |w| write_components(w, &windows, &results))?;
        manifest.output(p);
    }
    if let Some(p) = &args.dump_weights {
        write_atomic(p, |w| write_weights(w, &windows, &results))?;
        manifest.output(p);
    }
    manifest.finish(&manifest_beside(&args.out))
}

/// Replaces each result's final positions with those read from an imputed window file.
fn override_finals(results: &mut [ImputationResult], imputed: &[TrajectoryWindow]) -> Result<()> {
    let by_id: HashMap<&str, &TrajectoryWindow> = imputed.iter().map(|w| (w.sequence_id.as_str(), w)).collect();
    for r in results.iter_mut() {
        let w = by_id.get(r.sequence_id.as_str()).ok_or_else(|| anyhow!("imputed file lacks sequence {}", r.sequence_id))?;
        if w.positions.dim() != (r.trajectories.dim().0, r.trajectories.dim().1, 2) {
            bail!("imputed sequence {} has shape {:?}", r.sequence_id, w.positions.dim());
        }
        r.trajectories.slice_mut(s![.., .., 0..2]).assign(&w.positions);
    }
    Ok(())
}

pub fn evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<()> {
    let spec = ctx.spec();
    let mut manifest = ctx.manifest("evaluate", args)?;
    let windows = load_windows(&args.windows, &spec, &mut manifest)?;
    let model = load_model(&args.checkpoint, &spec, &mut manifest)?;
    let (masks, scenario) = resolve_masks(&args.masks, Scenario::AgentWise, &windows, ctx.seed, &mut manifest)?;
    let mut results = model.impute_all(&windows, &masks)?;
    if let Some(p) = &args.imputed {
        let imputed = load_windows(p, &spec, &mut manifest)?;
        override_finals(&mut results, &imputed)?;
    }
    let report = evaluate_report(scenario, args.masks.rate, &results, &windows)?;
    info!(
        "PE midas {:.4} initial {:.4} linear {:.4} spline {:.4}",
        report.midas.pe, report.initial.pe, report.linear.pe, report.spline.pe
    );
    let dir = &args.out_dir;
    let outputs = [dir.join("report.json"), dir.join("methods.csv"), dir.join("terciles.csv")];
    write_json(&outputs[0], &report)?;
    write_atomic(&outputs[1], |w| Ok(report.write_methods_csv(w)?))?;
    write_atomic(&outputs[2], |w| Ok(report.write_terciles_csv(w)?))?;
    emit(&serde_json::to_string_pretty(&report)?);
    for p in &outputs {
        manifest.output(p);
    }
    manifest.finish(&dir.join("manifest.json"))
}

#[derive(Serialize)]
struct PlayerRow<'a> {
    method: &'a str,
    player_id: &'a str,
    distance: f64,
    sprints: usize,
    minutes_played: f64,
    distance_per90: f64,
    sprints_per90: f64,
}

impl<'a> PlayerRow<'a> {
    fn new(method: &'a str, s: &'a PhysicalStats) -> Self {
        Self {
            method,
            player_id: &s.player_id,
            distance: s.distance,
            sprints: s.sprints,
            minutes_played: s.minutes_played,
            distance_per90: s.distance_per90,
            sprints_per90: s.sprints_per90,
        }
    }
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn tracks_stats(windows: &[TrajectoryWindow], positions: &[Array3<f64>], dt: f64) -> Result<Vec<PhysicalStats>> {
    let tracks = stitch_tracks(windows.iter().zip(positions).map(|(w, p)| (w.agent_ids.as_slice(), p.view())));
    Ok(match_stats(&tracks, dt, &SpeedFilter::default(), &SprintRule::default())?)
}

pub fn stats(ctx: &Context, args: &StatsArgs) -> Result<()> {
    let spec = ctx.spec();
    let mut manifest = ctx.manifest("analyze stats", args)?;
    let windows = load_windows(&args.windows, &spec, &mut manifest)?;
    let truth: Vec<Array3<f64>> = windows.iter().map(|w| w.positions.clone()).collect();
    let mut methods: Vec<(&str, Vec<Array3<f64>>)> = vec![("ground_truth", truth)];
    if args.checkpoint.is_some() || args.masks.masks.is_some() {
        let (masks, _) = resolve_masks(&args.masks, Scenario::Camera, &windows, ctx.seed, &mut manifest)?;
        let li = windows.iter().zip(&masks).map(|(w, m)| linear_interp(w, m)).collect::<midas::Result<Vec<_>>>()?;
        let cs = windows.iter().zip(&masks).map(|(w, m)| cubic_spline(w, m)).collect::<midas::Result<Vec<_>>>()?;
        methods.push(("linear", li));
        methods.push(("spline", cs));
        if let Some(ck) = &args.checkpoint {
            let model = load_model(ck, &spec, &mut manifest)?;
            let results = model.impute_all(&windows, &masks)?;
            methods.push(("midas", results.iter().map(ImputationResult::positions).collect()));
        }
    }
    let mut per_method = Vec::new();
    for (name, positions) in &methods {
        per_method.push((*name, tracks_stats(&windows, positions, spec.dt())?));
    }
    let truth_stats = &per_method[0].1;
    let table: Vec<StatsTableRow> = per_method
        .iter()
        .map(|(name, s)| stats_table_row(name, truth_stats, s, 2))
        .collect::<midas::Result<_>>()?;
    for row in &table {
        info!(
            "{:<12} distance/90 {:>9.1} m ({:.2}%)  sprints/90 {:>6.2} ({:.2}%)",
            row.method, row.mean_distance_per90, row.distance_mape, row.mean_sprints_per90, row.sprints_mape
        );
    }
    let players = args.out_dir.join("players.csv");
    let summary = args.out_dir.join("summary.csv");
    write_atomic(&players, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        for (name, s) in &per_method {
            for stats in s {
                wtr.serialize(PlayerRow::new(name, stats))?;
            }
        }
        wtr.flush()?;
        Ok(())
    })?;
    write_atomic(&summary, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        for row in &table {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    if let Some((_, gt)) = per_method.first() {
        write_atomic(&args.out_dir.join("ground_truth_players.csv"), |w| Ok(write_stats_csv(w, gt)?))?;
        manifest.output(&args.out_dir.join("ground_truth_players.csv"));
    }
    manifest.output(&players);
    manifest.output(&summary);
    manifest.finish(&args.out_dir.join("manifest.json"))
}

pub fn control(ctx: &Context, args: &ControlArgs) -> Result<()> {
    let spec = ctx.spec();
    let mut manifest = ctx.manifest("analyze control", args)?;
    let windows = load_windows(&args.windows, &spec, &mut manifest)?;
    let frames = spec.window_frames;
    let (wi, t) = (args.frame / frames, args.frame % frames);
    let Some(window) = windows.get(wi) else {
        bail!("frame {} is beyond the {} frames available", args.frame, windows.len() * frames);
    };
    let source = match &args.checkpoint {
        Some(ck) => {
            let model = load_model(ck, &spec, &mut manifest)?;
            let one = std::slice::from_ref(window);
            let (masks, _) = resolve_masks(&args.masks, Scenario::Camera, one, ctx.seed, &mut manifest)?;
            with_positions(window, model.impute(window, &masks[0])?.positions())?
        }
        None => window.clone(),
    };
    let (left_idx, right_idx) = team_split(&source.agent_ids);
    let state = |k: usize| PlayerState {
        position: [source.positions[[k, t, 0]], source.positions[[k, t, 1]]],
        velocity: [source.velocities[[k, t, 0]], source.velocities[[k, t, 1]]],
    };
    let ball = source.ball.as_ref().map(|b| [b[[t, 0]], b[[t, 1]]]);
    let frame = FrameState {
        left: left_idx.iter().map(|&k| state(k)).collect(),
        right: right_idx.iter().map(|&k| state(k)).collect(),
        ball,
    };
    let grid = GridSpec::new(
        spec.pitch,
        args.nx.unwrap_or(spec.pitch.length.round() as usize),
        args.ny.unwrap_or(spec.pitch.width.round() as usize),
    );
    let map = pitch_control(&frame, &grid, &PitchControlParams::default())?;
    let csv_path = args.out_dir.join("control.csv");
    let png_path = args.out_dir.join("control.png");
    write_atomic(&csv_path, |w| Ok(write_control_csv(w, &map)?))?;
    let positions = |team: &[PlayerState]| team.iter().map(|p| p.position).collect::<Vec<_>>();
    let image = plot::control_map(&map, &positions(&frame.left), &positions(&frame.right), ball);
    save_png(&png_path, &image)?;
    info!("{} frame {t}: left team controls {:.1}% of the pitch", window.sequence_id, 100.0 * map.grid.mean().unwrap_or(0.0));
    manifest.output(&csv_path);
    manifest.output(&png_path);
    manifest.finish(&args.out_dir.join("manifest.json"))
}

fn save_png(path: &Path, image: &image::RgbImage) -> Result<()> {
    write_atomic(path, |w| {
        let mut buf = std::io::Cursor::new(Vec::new());
        image.write_to(&mut buf, image::ImageFormat::Png)?;
        w.write_all(buf.get_ref())?;
        Ok(())
    })
}

#[derive(Serialize)]
struct Timing {
    windows: usize,
    agents: usize,
    frames: usize,
    parameters: usize,
    match_minutes: f64,
    total_seconds: f64,
    per_window_ms: f64,
}

pub fn bench(ctx: &Context, args: &BenchArgs) -> Result<()> {
    if !args.timing {
        return Err(UsageError("nothing to benchmark; pass --timing".into()).into());
    }
    let spec = ctx.spec();
    let mut manifest = ctx.manifest("bench", args)?;
    let windows = match &args.windows {
        Some(p) => load_windows(p, &spec, &mut manifest)?,
        None => synthetic_windows(&spec, args.count, ctx.seed),
    };
    let model = match &args.checkpoint {
        Some(p) => load_model(p, &spec, &mut manifest)?,
        None => MidasModel::new(ModelConfig::default(), ctx.seed)?,
    };
    let masks = evaluation_masks(&windows, Scenario::AgentWise, 0.5, &TrainConfig::default(), ctx.seed)?;
    let started = Instant::now();
    let results = model.impute_all(&windows, &masks)?;
    let total = started.elapsed().as_secs_f64();
    let timing = Timing {
        windows: results.len(),
        agents: spec.agents,
        frames: spec.window_frames,
        parameters: model.parameter_count(),
        match_minutes: windows.len() as f64 * spec.window_seconds() / 60.0,
        total_seconds: total,
        per_window_ms: 1000.0 * total / windows.len() as f64,
    };
    emit(&serde_json::to_string_pretty(&timing)?);
    if let Some(out) = &args.out {
        write_json(out, &timing)?;
        manifest.output(out);
        manifest.finish(&manifest_beside(out))?;
    }
    Ok(())
}

pub fn plot_trajectories(ctx: &Context, args: &PlotTrajectoriesArgs) -> Result<()> {
    let spec = ctx.spec();
    let mut manifest = ctx.manifest("plot trajectories", args)?;
    let windows = load_windows(&args.windows, &spec, &mut manifest)?;
    let imputed = load_windows(&args.imputed, &spec, &mut manifest)?;
    let masks_path = resolve_input(&args.masks);
    manifest.input(&masks_path)?;
    let masks = read_mask_csv(open(&masks_path)?, &windows, DEFAULT_GUARD)?;
    let idx = windows
        .iter()
        .position(|w| w.sequence_id == args.sequence)
        .ok_or_else(|| anyhow!("no window with sequence id {}", args.sequence))?;
    let pred = imputed
        .iter()
        .find(|w| w.sequence_id == args.sequence)
        .ok_or_else(|| anyhow!("imputed file lacks sequence {}", args.sequence))?;
    let truth = &windows[idx];
    let (left, _) = team_split(&truth.agent_ids);
    let teams: Vec<usize> = (0..truth.agents()).map(|k| usize::from(!left.contains(&k))).collect();
    let image = plot::trajectories(spec.pitch, truth.positions.view(), pred.positions.view(), &masks[idx], &teams);
    save_png(&args.out, &image)?;
    manifest.output(&args.out);
    manifest.finish(&manifest_beside(&args.out))
}

pub fn plot_weights(ctx: &Context, args: &PlotWeightsArgs) -> Result<()> {
    let mut manifest = ctx.manifest("plot weights", args)?;
    let path = resolve_input(&args.weights);
    manifest.input(&path)?;
    let mut rows: Vec<(usize, [f64; 3])> = Vec::new();
    for rec in csv::Reader::from_reader(open(&path)?).records() {
        let rec = rec?;
        if &rec[0] != args.sequence || &rec[2] != args.agent {
            continue;
        }
        let num = |i: usize| rec[i].parse::<f64>().with_context(|| format!("bad number '{}'", &rec[i]));
        rows.push((rec[1].parse()?, [num(3)?, num(4)?, num(5)?]));
    }
    if rows.is_empty() {
        bail!("no weights for sequence {} agent {}", args.sequence, args.agent);
    }
    rows.sort_by_key(|r| r.0);
    let lambdas = Array2::from_shape_fn((rows.len(), 3), |(t, c)| rows[t].1[c]);
    let mut observed = vec![true; rows.len()];
    if let Some(m) = &args.masks {
        let m = resolve_input(m);
        manifest.input(&m)?;
        for rec in csv::Reader::from_reader(open(&m)?).records() {
            let rec = rec?;
            if rec[0] == args.sequence && rec[2] == args.agent {
                let t: usize = rec[1].parse()?;
                if t < observed.len() {
                    observed[t] = &rec[3] == "1";
                }
            }
        }
    }
    save_png(&args.out, &plot::weight_curves(&lambdas, &observed))?;
    manifest.output(&args.out);
    manifest.finish(&manifest_beside(&args.out))
}
