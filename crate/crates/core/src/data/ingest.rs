use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};

use super::resample::{nearest_timestamp_indices, target_grid};
use super::{adapters, DatasetSpec, TrajectoryWindow};
use crate::error::{MidasError, Result};

pub(crate) const BALL_ID: &str = "BALL";

/// One agent's raw samples, aligned with [`TrackSet::timestamps_us`].
#[derive(Debug, Clone)]
pub struct Track {
    pub id: String,
    pub samples: Vec<Option<[f64; 2]>>,
}

/// A contiguous recording in source units (meters) at the source rate.
#[derive(Debug, Clone)]
pub struct TrackSet {
    pub sequence_id: String,
    pub timestamps_us: Vec<i64>,
    pub agents: Vec<Track>,
    pub ball: Option<Vec<Option<[f64; 2]>>>,
    /// Rosters may exceed the window's agent count (substitutions, bench
    /// players). Windows then keep whichever agents are complete and are
    /// dropped unless exactly `K` remain.
    pub roster_changes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Canonical,
    Metrica,
    SportVu,
    Nrtsi,
}

impl SourceFormat {
    /// Guesses the format from extension and, for CSV, the first header line.
    pub fn detect(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        match ext.as_str() {
            "json" => Ok(SourceFormat::SportVu),
            "npy" => Ok(SourceFormat::Nrtsi),
            "csv" => {
                let mut head = String::new();
                std::fs::File::open(path)?.take(256).read_to_string(&mut head)?;
                let first = head.lines().next().unwrap_or("");
                if first.starts_with("sequence_id") {
                    Ok(SourceFormat::Canonical)
                } else if first.starts_with(",,,") || first.starts_with("Period") {
                    Ok(SourceFormat::Metrica)
                } else {
                    Err(MidasError::Format(format!("{}: unrecognized CSV header", path.display())))
                }
            }
            _ => Err(MidasError::Format(format!("{}: unknown extension", path.display()))),
        }
    }
}

/// Reads a source file and slices it into complete windows.
///
/// `source_hz` overrides the frame rate assumed for canonical CSV input, which
/// otherwise sits at the target rate.
pub fn ingest(path: &Path, spec: &DatasetSpec, source_hz: Option<f64>) -> Result<Vec<TrajectoryWindow>> {
    let sets = match SourceFormat::detect(path)? {
        SourceFormat::Canonical => {
            let hz = source_hz.unwrap_or(spec.target_hz);
            read_canonical_csv(std::fs::File::open(path)?, hz)?
        }
        SourceFormat::Metrica => adapters::read_metrica_pair(path)?,
        SourceFormat::SportVu => adapters::read_sportvu_json(path)?,
        SourceFormat::Nrtsi => adapters::read_nrtsi_npy(path, spec.target_hz, adapters::YARD)?,
    };
    let mut out = Vec::new();
    for set in &sets {
        out.extend(slice_windows(set, spec)?);
    }
    Ok(out)
}

/// Parses canonical `sequence_id,frame_idx,agent_id,x,y` rows.
pub fn read_canonical_csv<R: Read>(reader: R, hz: f64) -> Result<Vec<TrackSet>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["sequence_id", "frame_idx", "agent_id", "x", "y"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(MidasError::Format(format!("canonical header mismatch: {headers:?}")));
    }

    struct Builder {
        frames: Vec<i64>,
        rows: Vec<(i64, String, [f64; 2])>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut builders: HashMap<String, Builder> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let seq = rec[0].to_string();
        let frame: i64 = rec[1]
            .parse()
            .map_err(|_| MidasError::Format(format!("bad frame_idx '{}'", &rec[1])))?;
        let x: f64 = rec[3].parse().map_err(|_| MidasError::Format(format!("bad x '{}'", &rec[3])))?;
        let y: f64 = rec[4].parse().map_err(|_| MidasError::Format(format!("bad y '{}'", &rec[4])))?;
        let b = builders.entry(seq.clone()).or_insert_with(|| {
            order.push(seq.clone());
            Builder { frames: Vec::new(), rows: Vec::new() }
        });
        b.frames.push(frame);
        b.rows.push((frame, rec[2].to_string(), [x, y]));
    }

    let mut sets = Vec::with_capacity(order.len());
    for seq in order {
        let mut b = builders.remove(&seq).expect("builder exists");
        b.frames.sort_unstable();
        b.frames.dedup();
        let first = b.frames[0];
        let last = *b.frames.last().expect("non-empty");
        let n = (last - first + 1) as usize;
        let timestamps_us = (first..=last).map(|f| (f as f64 * 1e6 / hz).round() as i64).collect();

        let mut agent_index: HashMap<String, usize> = HashMap::new();
        let mut agents: Vec<Track> = Vec::new();
        let mut ball: Option<Vec<Option<[f64; 2]>>> = None;
        for (frame, id, xy) in b.rows {
            let slot = (frame - first) as usize;
            if !xy[0].is_finite() || !xy[1].is_finite() {
                continue;
            }
            if id == BALL_ID {
                ball.get_or_insert_with(|| vec![None; n])[slot] = Some(xy);
                continue;
            }
            let idx = *agent_index.entry(id.clone()).or_insert_with(|| {
                agents.push(Track { id, samples: vec![None; n] });
                agents.len() - 1
            });
            agents[idx].samples[slot] = Some(xy);
        }
        sets.push(TrackSet { sequence_id: seq, timestamps_us, agents, ball, roster_changes: false });
    }
    Ok(sets)
}

/// Writes windows as canonical CSV (one sequence per window, frames from 0).
pub fn write_canonical_csv<W: Write>(writer: W, windows: &[TrajectoryWindow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["sequence_id", "frame_idx", "agent_id", "x", "y"])?;
    for w in windows {
        for t in 0..w.frames() {
            for (k, id) in w.agent_ids.iter().enumerate() {
                wtr.write_record([
                    w.sequence_id.as_str(),
                    &t.to_string(),
                    id,
                    &w.positions[[k, t, 0]].to_string(),
                    &w.positions[[k, t, 1]].to_string(),
                ])?;
            }
            if let Some(ball) = &w.ball {
                wtr.write_record([
                    w.sequence_id.as_str(),
                    &t.to_string(),
                    BALL_ID,
                    &ball[[t, 0]].to_string(),
                    &ball[[t, 1]].to_string(),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads canonical CSV in which every sequence is already one complete window,
/// as written by [`write_canonical_csv`]. Sequence ids are kept unchanged.
pub fn read_windows_csv<R: Read>(reader: R, spec: &DatasetSpec) -> Result<Vec<TrajectoryWindow>> {
    let sets = read_canonical_csv(reader, spec.target_hz)?;
    let mut out = Vec::with_capacity(sets.len());
    for set in &sets {
        if set.timestamps_us.len() != spec.window_frames {
            return Err(MidasError::InvalidWindow(format!(
                "sequence {} has {} frames, expected {}",
                set.sequence_id,
                set.timestamps_us.len(),
                spec.window_frames
            )));
        }
        if set.agents.len() != spec.agents {
            return Err(MidasError::Schema(format!(
                "sequence {} has {} agents, expected {}",
                set.sequence_id,
                set.agents.len(),
                spec.agents
            )));
        }
        let frames = spec.window_frames;
        let mut positions = Array3::zeros((spec.agents, frames, 2));
        for (k, track) in set.agents.iter().enumerate() {
            for (t, xy) in track.samples.iter().enumerate() {
                let xy = xy.ok_or_else(|| {
                    MidasError::InvalidWindow(format!("sequence {} lacks {} at frame {t}", set.sequence_id, track.id))
                })?;
                positions[[k, t, 0]] = xy[0];
                positions[[k, t, 1]] = xy[1];
            }
        }
        let ball = set.ball.as_ref().and_then(|b| {
            b.iter()
                .copied()
                .collect::<Option<Vec<_>>>()
                .map(|series| Array2::from_shape_fn((frames, 2), |(t, d)| series[t][d]))
        });
        let ids = set.agents.iter().map(|a| a.id.clone()).collect();
        let w = TrajectoryWindow::from_positions(set.sequence_id.clone(), ids, positions, spec.dt(), spec.pitch, ball)?;
        out.push(w);
    }
    Ok(out)
}

/// Resamples a recording to the target rate and cuts non-overlapping windows.
///
/// Windows with any gap in a selected agent's track are dropped. A ball track
/// is attached only when it is complete over the window.
pub fn slice_windows(set: &TrackSet, spec: &DatasetSpec) -> Result<Vec<TrajectoryWindow>> {
    if !set.roster_changes && set.agents.len() != spec.agents {
        return Err(MidasError::Schema(format!(
            "sequence {} has {} agents, {} expects {}",
            set.sequence_id,
            set.agents.len(),
            spec.sport,
            spec.agents
        )));
    }
    if set.timestamps_us.is_empty() {
        return Ok(Vec::new());
    }
    let step = (1e6 / spec.target_hz).round() as i64;
    let grid = target_grid(set.timestamps_us[0], *set.timestamps_us.last().expect("non-empty"), step);
    let picks = nearest_timestamp_indices(&set.timestamps_us, &grid, step / 2);
    let frames = spec.window_frames;
    let dt = spec.dt();

    let sample_at = |samples: &[Option<[f64; 2]>], range: &[Option<usize>]| -> Option<Vec<[f64; 2]>> {
        range.iter().map(|p| p.and_then(|i| samples[i])).collect()
    };

    let mut windows = Vec::new();
    for (w, chunk) in picks.chunks_exact(frames).enumerate() {
        let complete: Vec<(usize, Vec<[f64; 2]>)> = set
            .agents
            .iter()
            .enumerate()
            .filter_map(|(i, a)| sample_at(&a.samples, chunk).map(|s| (i, s)))
            .collect();
        if complete.len() != spec.agents {
            continue;
        }
        let mut positions = Array3::zeros((spec.agents, frames, 2));
        for (k, (_, series)) in complete.iter().enumerate() {
            for (t, xy) in series.iter().enumerate() {
                positions[[k, t, 0]] = xy[0];
                positions[[k, t, 1]] = xy[1];
            }
        }
        let ball = set.ball.as_ref().and_then(|b| sample_at(b, chunk)).map(|series| {
            Array2::from_shape_fn((frames, 2), |(t, d)| series[t][d])
        });
        let ids = complete.iter().map(|(i, _)| set.agents[*i].id.clone()).collect();
        let window = TrajectoryWindow::from_positions(
            format!("{}_{w:04}", set.sequence_id),
            ids,
            positions,
            dt,
            spec.pitch,
            ball,
        )?;
        if window.validate(spec).is_ok() {
            windows.push(window);
        }
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PitchBounds;

    fn canonical_text(agents: usize, frames: usize, with_ball: bool) -> String {
        let mut s = String::from("sequence_id,frame_idx,agent_id,x,y\n");
        for f in 0..frames {
            for k in 0..agents {
                let x = 10.0 + k as f64 + 0.01 * f as f64;
                s.push_str(&format!("m1,{f},p{k},{x},{}\n", 20.0 + 0.5 * k as f64));
            }
            if with_ball {
                s.push_str(&format!("m1,{f},BALL,52.5,34\n"));
            }
        }
        s
    }

    #[test]
    fn four_hundred_frames_make_two_windows() {
        let sets = read_canonical_csv(canonical_text(22, 400, true).as_bytes(), 10.0).unwrap();
        let windows = slice_windows(&sets[0], &DatasetSpec::soccer()).unwrap();
        assert_eq!(windows.len(), 2);
        assert!(windows.iter().all(|w| w.frames() == 200 && w.agents() == 22 && w.ball.is_some()));
        assert_eq!(windows[1].positions[[3, 0, 0]], 10.0 + 3.0 + 0.01 * 200.0);
    }

    #[test]
    fn twenty_five_hz_source_is_downsampled() {
        let sets = read_canonical_csv(canonical_text(22, 500, false).as_bytes(), 25.0).unwrap();
        let windows = slice_windows(&sets[0], &DatasetSpec::soccer()).unwrap();
        assert_eq!(windows.len(), 1);
        // Target frame 3 sits at source position 7.5 and resolves to source frame 7.
        assert!((windows[0].positions[[0, 3, 0]] - (10.0 + 0.07)).abs() < 1e-12);
        assert!((windows[0].positions[[0, 2, 0]] - (10.0 + 0.05)).abs() < 1e-12);
    }

    #[test]
    fn extra_agent_is_a_schema_error() {
        let sets = read_canonical_csv(canonical_text(23, 200, false).as_bytes(), 10.0).unwrap();
        assert!(matches!(slice_windows(&sets[0], &DatasetSpec::soccer()), Err(MidasError::Schema(_))));
    }

    #[test]
    fn windows_with_gaps_are_dropped() {
        let text = canonical_text(22, 400, false)
            .lines()
            .filter(|l| !l.starts_with("m1,250,p4,"))
            .collect::<Vec<_>>()
            .join("\n");
        let sets = read_canonical_csv(text.as_bytes(), 10.0).unwrap();
        let windows = slice_windows(&sets[0], &DatasetSpec::soccer()).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].sequence_id, "m1_0000");
    }

    #[test]
    fn canonical_round_trip_is_exact() {
        let sets = read_canonical_csv(canonical_text(22, 200, true).as_bytes(), 10.0).unwrap();
        let windows = slice_windows(&sets[0], &DatasetSpec::soccer()).unwrap();
        let mut buf = Vec::new();
        write_canonical_csv(&mut buf, &windows).unwrap();
        let again = read_canonical_csv(buf.as_slice(), 10.0).unwrap();
        let windows2 = slice_windows(&again[0], &DatasetSpec::soccer()).unwrap();
        assert_eq!(windows[0].positions, windows2[0].positions);
        assert_eq!(windows[0].ball, windows2[0].ball);
    }

    #[test]
    fn window_files_keep_sequence_ids() {
        let sets = read_canonical_csv(canonical_text(22, 400, true).as_bytes(), 10.0).unwrap();
        let windows = slice_windows(&sets[0], &DatasetSpec::soccer()).unwrap();
        let mut buf = Vec::new();
        write_canonical_csv(&mut buf, &windows).unwrap();
        let again = read_windows_csv(buf.as_slice(), &DatasetSpec::soccer()).unwrap();
        assert_eq!(again, windows);
        let short = canonical_text(22, 150, false);
        assert!(read_windows_csv(short.as_bytes(), &DatasetSpec::soccer()).is_err());
    }

    #[test]
    fn windowing_is_deterministic() {
        let text = canonical_text(22, 600, true);
        let a = slice_windows(&read_canonical_csv(text.as_bytes(), 10.0).unwrap()[0], &DatasetSpec::soccer()).unwrap();
        let b = slice_windows(&read_canonical_csv(text.as_bytes(), 10.0).unwrap()[0], &DatasetSpec::soccer()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].pitch, PitchBounds::SOCCER);
    }

    #[test]
    fn unknown_extension_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tracks.parquet");
        std::fs::write(&path, b"x").unwrap();
        assert!(matches!(SourceFormat::detect(&path), Err(MidasError::Format(_))));
    }
}
