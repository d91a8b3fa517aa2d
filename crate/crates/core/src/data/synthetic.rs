//! Smooth multi-agent motion with bounded acceleration, for tests and demos.
//!
//! Each agent follows a shared team drift plus a formation offset and its own
//! low-frequency wander, all built from sinusoids. Peak acceleration is known
//! in closed form (`sum A w^2`) and capped by rescaling the amplitudes.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PitchBounds, TrajectoryWindow};

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub agents: usize,
    pub frames: usize,
    pub dt: f64,
    pub pitch: PitchBounds,
    /// Summed amplitude (m) of the shared drift on each axis.
    pub team_amplitude: f64,
    /// Summed amplitude (m) of each agent's own wander on each axis.
    pub agent_amplitude: f64,
    /// Upper bound on acceleration magnitude per axis (m/s^2).
    pub max_accel: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            agents: 10,
            frames: 200,
            dt: 0.1,
            pitch: PitchBounds::SOCCER,
            team_amplitude: 12.0,
            agent_amplitude: 3.0,
            max_accel: 3.0,
        }
    }
}

struct Wave {
    amp: f64,
    omega: f64,
    phase: f64,
}

fn waves(rng: &mut ChaCha8Rng, n: usize, total_amp: f64, periods: (f64, f64), max_accel: f64) -> Vec<Wave> {
    let mut ws: Vec<Wave> = (0..n)
        .map(|_| Wave {
            amp: rng.random_range(0.5..1.0),
            omega: 2.0 * PI / rng.random_range(periods.0..periods.1),
            phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect();
    let sum: f64 = ws.iter().map(|w| w.amp).sum();
    for w in &mut ws {
        w.amp *= total_amp / sum;
    }
    let peak: f64 = ws.iter().map(|w| w.amp * w.omega * w.omega).sum();
    if peak > max_accel {
        for w in &mut ws {
            w.amp *= max_accel / peak;
        }
    }
    ws
}

fn eval(ws: &[Wave], t: f64) -> f64 {
    ws.iter().map(|w| w.amp * (w.omega * t + w.phase).sin()).sum()
}

/// Generates `count` independent windows from `seed`.
pub fn generate(config: &SyntheticConfig, count: usize, seed: u64) -> Vec<TrajectoryWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = config.pitch.center();
    let spread = [config.pitch.length * 0.22, config.pitch.width * 0.2];
    (0..count)
        .map(|n| {
            // Team drift and agent wander share the acceleration budget.
            let team: Vec<Vec<Wave>> = (0..2)
                .map(|_| waves(&mut rng, 3, config.team_amplitude, (8.0, 30.0), config.max_accel * 0.6))
                .collect();
            let agents: Vec<(Vec<Vec<Wave>>, [f64; 2])> = (0..config.agents)
                .map(|_| {
                    let offset = [rng.random_range(-spread[0]..spread[0]), rng.random_range(-spread[1]..spread[1])];
                    let w = (0..2)
                        .map(|_| waves(&mut rng, 2, config.agent_amplitude, (4.0, 12.0), config.max_accel * 0.4))
                        .collect();
                    (w, offset)
                })
                .collect();
            let positions = Array3::from_shape_fn((config.agents, config.frames, 2), |(k, t, d)| {
                let time = t as f64 * config.dt;
                center[d] + eval(&team[d], time) + agents[k].1[d] + eval(&agents[k].0[d], time)
            });
            let ball_waves: Vec<Vec<Wave>> = (0..2)
                .map(|_| waves(&mut rng, 2, config.team_amplitude * 0.5, (3.0, 10.0), 6.0))
                .collect();
            let ball = Array2::from_shape_fn((config.frames, 2), |(t, d)| {
                let time = t as f64 * config.dt;
                center[d] + eval(&team[d], time) + eval(&ball_waves[d], time)
            });
            let ids = (0..config.agents).map(|k| format!("a{k}")).collect();
            TrajectoryWindow::from_positions(format!("synth_{n:05}"), ids, positions, config.dt, config.pitch, Some(ball))
                .expect("synthetic shapes are consistent")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acceleration_is_bounded_and_positions_stay_on_pitch() {
        let cfg = SyntheticConfig::default();
        let windows = generate(&cfg, 20, 1);
        for w in &windows {
            let spec = crate::data::DatasetSpec { agents: cfg.agents, ..crate::data::DatasetSpec::soccer() };
            w.validate(&spec).unwrap();
            // Interior finite-difference accelerations track the analytic bound.
            for k in 0..w.agents() {
                for t in 1..w.frames() - 1 {
                    for d in 0..2 {
                        assert!(w.accelerations[[k, t, d]].abs() <= cfg.max_accel * 1.01);
                    }
                }
            }
        }
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = SyntheticConfig::default();
        assert_eq!(generate(&cfg, 2, 7), generate(&cfg, 2, 7));
        assert_ne!(generate(&cfg, 1, 7)[0].positions, generate(&cfg, 1, 8)[0].positions);
    }
}
