//! Converters from public tracking-data releases into [`TrackSet`]s.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use serde_json::Value;

use super::ingest::{Track, TrackSet};
use super::PitchBounds;
use crate::error::{MidasError, Result};

pub(crate) const FOOT: f64 = 0.3048;
pub(crate) const YARD: f64 = 0.9144;

/// Reads a Metrica Sports home/away raw-tracking pair.
///
/// Either file of the pair may be given; the sibling is found by swapping
/// `Home` and `Away` in the file name. Normalized coordinates are scaled to a
/// 105 x 68 m pitch. Each period becomes its own sequence.
pub fn read_metrica_pair(path: &Path) -> Result<Vec<TrackSet>> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| MidasError::Format(format!("{}: bad file name", path.display())))?;
    let (home, away): (PathBuf, PathBuf) = if name.contains("Home") {
        (path.to_path_buf(), path.with_file_name(name.replace("Home", "Away")))
    } else if name.contains("Away") {
        (path.with_file_name(name.replace("Away", "Home")), path.to_path_buf())
    } else {
        return Err(MidasError::Format(format!(
            "{}: Metrica file name must contain Home or Away",
            path.display()
        )));
    };
    let stem = name.split("_RawTrackingData").next().unwrap_or(name).to_string();
    let home = parse_metrica(&std::fs::read_to_string(home)?, "H")?;
    let away = parse_metrica(&std::fs::read_to_string(away)?, "A")?;

    let mut sets = Vec::new();
    for (period, h) in home {
        let a = away
            .iter()
            .find(|(p, _)| *p == period)
            .map(|(_, a)| a)
            .ok_or_else(|| MidasError::Format(format!("away file lacks period {period}")))?;
        if a.frames != h.frames {
            return Err(MidasError::Format(format!("home/away frame numbers differ in period {period}")));
        }
        let mut agents = h.players;
        agents.extend(a.players.iter().cloned());
        sets.push(TrackSet {
            sequence_id: format!("{stem}_p{period}"),
            timestamps_us: h.timestamps_us,
            agents,
            ball: Some(h.ball),
            roster_changes: true,
        });
    }
    Ok(sets)
}

struct MetricaPeriod {
    frames: Vec<i64>,
    timestamps_us: Vec<i64>,
    players: Vec<Track>,
    ball: Vec<Option<[f64; 2]>>,
}

fn parse_metrica(text: &str, team_tag: &str) -> Result<Vec<(i64, MetricaPeriod)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut records = rdr.records();
    // Team row, jersey row, then the column-name row.
    for _ in 0..2 {
        records.next().ok_or_else(|| MidasError::Format("truncated Metrica header".into()))??;
    }
    let names = records.next().ok_or_else(|| MidasError::Format("truncated Metrica header".into()))??;
    if names.get(0) != Some("Period") {
        return Err(MidasError::Format("Metrica header lacks Period column".into()));
    }
    let mut player_cols = Vec::new();
    let mut ball_col = None;
    for (i, field) in names.iter().enumerate() {
        if field.starts_with("Player") {
            player_cols.push((i, field.to_string()));
        } else if field == "Ball" {
            ball_col = Some(i);
        }
    }
    let ball_col = ball_col.ok_or_else(|| MidasError::Format("Metrica header lacks Ball column".into()))?;
    let pitch = PitchBounds::SOCCER;
    let read_xy = |rec: &csv::StringRecord, col: usize| -> Option<[f64; 2]> {
        let x: f64 = rec.get(col)?.trim().parse().ok()?;
        let y: f64 = rec.get(col + 1)?.trim().parse().ok()?;
        (x.is_finite() && y.is_finite()).then_some([x * pitch.length, y * pitch.width])
    };

    let mut periods: Vec<(i64, MetricaPeriod)> = Vec::new();
    for rec in records {
        let rec = rec?;
        let parse_num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| MidasError::Format(format!("bad Metrica field {i}")))
        };
        let period = parse_num(0)? as i64;
        let frame = parse_num(1)? as i64;
        let time = parse_num(2)?;
        if periods.last().map(|(p, _)| *p) != Some(period) {
            periods.push((
                period,
                MetricaPeriod {
                    frames: Vec::new(),
                    timestamps_us: Vec::new(),
                    players: player_cols
                        .iter()
                        .map(|(_, n)| Track { id: format!("{team_tag}_{n}"), samples: Vec::new() })
                        .collect(),
                    ball: Vec::new(),
                },
            ));
        }
        let p = &mut periods.last_mut().expect("pushed").1;
        p.frames.push(frame);
        p.timestamps_us.push((time * 1e6).round() as i64);
        for (track, (col, _)) in p.players.iter_mut().zip(&player_cols) {
            track.samples.push(read_xy(&rec, *col));
        }
        p.ball.push(read_xy(&rec, ball_col));
    }
    Ok(periods)
}

/// Reads a SportVU NBA event JSON file (feet, 25 Hz) into one track set per
/// event. Moments repeated across consecutive events are kept only once.
pub fn read_sportvu_json(path: &Path) -> Result<Vec<TrackSet>> {
    let root: Value = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
    let game = root
        .get("gameid")
        .and_then(Value::as_str)
        .unwrap_or("game")
        .to_string();
    let events = root
        .get("events")
        .and_then(Value::as_array)
        .ok_or_else(|| MidasError::Format("SportVU file lacks events array".into()))?;

    let mut sets = Vec::new();
    let mut last_ts = i64::MIN;
    for event in events {
        let event_id = match event.get("eventId") {
            Some(Value::String(s)) => s.clone(),
            Some(v) => v.to_string(),
            None => sets.len().to_string(),
        };
        let moments = event
            .get("moments")
            .and_then(Value::as_array)
            .ok_or_else(|| MidasError::Format(format!("event {event_id} lacks moments")))?;

        let mut timestamps_us = Vec::new();
        let mut rows: Vec<(Vec<(String, [f64; 2])>, Option<[f64; 2]>)> = Vec::new();
        for m in moments {
            let m = m.as_array().ok_or_else(|| MidasError::Format("moment is not an array".into()))?;
            let ts = m
                .get(1)
                .and_then(Value::as_i64)
                .ok_or_else(|| MidasError::Format("moment lacks timestamp".into()))?;
            if ts <= last_ts {
                continue;
            }
            last_ts = ts;
            let entities = m
                .get(5)
                .and_then(Value::as_array)
                .ok_or_else(|| MidasError::Format("moment lacks entity list".into()))?;
            let mut players = Vec::new();
            let mut ball = None;
            for e in entities {
                let e = e.as_array().ok_or_else(|| MidasError::Format("entity is not an array".into()))?;
                let num = |i: usize| e.get(i).and_then(Value::as_f64);
                let (Some(team), Some(id), Some(x), Some(y)) = (num(0), num(1), num(2), num(3)) else {
                    return Err(MidasError::Format("malformed SportVU entity".into()));
                };
                let xy = [x * FOOT, y * FOOT];
                if team < 0.0 {
                    ball = Some(xy);
                } else {
                    players.push((format!("{}", id as i64), xy));
                }
            }
            timestamps_us.push(ts * 1000);
            rows.push((players, ball));
        }
        if rows.is_empty() {
            continue;
        }
        let n = rows.len();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut agents: Vec<Track> = Vec::new();
        let mut ball = vec![None; n];
        for (slot, (players, b)) in rows.into_iter().enumerate() {
            ball[slot] = b;
            for (id, xy) in players {
                let i = *index.entry(id.clone()).or_insert_with(|| {
                    agents.push(Track { id, samples: vec![None; n] });
                    agents.len() - 1
                });
                agents[i].samples[slot] = Some(xy);
            }
        }
        sets.push(TrackSet {
            sequence_id: format!("{game}_{event_id}"),
            timestamps_us,
            agents,
            ball: Some(ball),
            roster_changes: true,
        });
    }
    Ok(sets)
}

/// Reads preprocessed football sequences stored as an `.npy` array of shape
/// `(N, T, 2K)` (interleaved x, y per agent) or `(N, T, K, 2)`, sampled at
/// `hz` and expressed in units converted to meters by `unit_scale`.
pub fn read_nrtsi_npy(path: &Path, hz: f64, unit_scale: f64) -> Result<Vec<TrackSet>> {
    let arr: ArrayD<f64> = match ndarray_npy::read_npy::<_, ArrayD<f64>>(path) {
        Ok(a) => a,
        Err(_) => ndarray_npy::read_npy::<_, ArrayD<f32>>(path)
            .map_err(|e| MidasError::Format(format!("{}: {e}", path.display())))?
            .mapv(f64::from),
    };
    let shape = arr.shape().to_vec();
    let (n, t, k) = match shape.as_slice() {
        [n, t, c] if c % 2 == 0 => (*n, *t, c / 2),
        [n, t, k, 2] => (*n, *t, *k),
        _ => return Err(MidasError::Format(format!("unsupported array shape {shape:?}"))),
    };
    let flat = arr
        .into_shape_with_order(IxDyn(&[n, t, k, 2]))
        .map_err(|e| MidasError::Format(e.to_string()))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("football");
    let timestamps_us: Vec<i64> = (0..t).map(|f| (f as f64 * 1e6 / hz).round() as i64).collect();
    Ok((0..n)
        .map(|s| TrackSet {
            sequence_id: format!("{stem}_{s:05}"),
            timestamps_us: timestamps_us.clone(),
            agents: (0..k)
                .map(|a| Track {
                    id: format!("p{a}"),
                    samples: (0..t)
                        .map(|f| {
                            let x = flat[[s, f, a, 0]] * unit_scale;
                            let y = flat[[s, f, a, 1]] * unit_scale;
                            (x.is_finite() && y.is_finite()).then_some([x, y])
                        })
                        .collect(),
                })
                .collect(),
            ball: None,
            roster_changes: false,
        })
        .collect())
}
