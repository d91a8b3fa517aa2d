use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_circle_mut, draw_filled_rect_mut, draw_hollow_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;
use midas::analytics::ControlMap;
use midas::data::PitchBounds;
use midas::masking::MaskMatrix;
use ndarray::{Array2, ArrayView3};

const GRASS: Rgb<u8> = Rgb([58, 125, 68]);
const LINE: Rgb<u8> = Rgb([235, 235, 235]);
const TRUTH: Rgb<u8> = Rgb([20, 20, 20]);
const PALETTE: [Rgb<u8>; 3] = [Rgb([31, 119, 180]), Rgb([44, 160, 44]), Rgb([214, 39, 40])];
const TEAMS: [Rgb<u8>; 2] = [Rgb([31, 119, 180]), Rgb([250, 200, 30])];
const MARGIN: f32 = 20.0;
const PITCH_PIXELS: f32 = 1000.0;

struct Canvas {
    image: RgbImage,
    scale: f32,
}

impl Canvas {
    fn pitch(pitch: PitchBounds) -> Self {
        let scale = PITCH_PIXELS / pitch.length as f32;
        let w = (pitch.length as f32 * scale + 2.0 * MARGIN) as u32;
        let h = (pitch.width as f32 * scale + 2.0 * MARGIN) as u32;
        let mut image = RgbImage::from_pixel(w, h, GRASS);
        let outline = Rect::at(MARGIN as i32, MARGIN as i32).of_size((pitch.length as f32 * scale) as u32, (pitch.width as f32 * scale) as u32);
        draw_hollow_rect_mut(&mut image, outline, LINE);
        let mid = MARGIN + pitch.length as f32 * scale / 2.0;
        draw_line_segment_mut(&mut image, (mid, MARGIN), (mid, MARGIN + pitch.width as f32 * scale), LINE);
        Self { image, scale }
    }

    fn at(&self, p: [f64; 2]) -> (f32, f32) {
        (MARGIN + p[0] as f32 * self.scale, MARGIN + p[1] as f32 * self.scale)
    }

    fn segment(&mut self, a: [f64; 2], b: [f64; 2], color: Rgb<u8>, thick: bool) {
        let (pa, pb) = (self.at(a), self.at(b));
        draw_line_segment_mut(&mut self.image, pa, pb, color);
        if thick {
            draw_line_segment_mut(&mut self.image, (pa.0 + 1.0, pa.1), (pb.0 + 1.0, pb.1), color);
            draw_line_segment_mut(&mut self.image, (pa.0, pa.1 + 1.0), (pb.0, pb.1 + 1.0), color);
        }
    }

    fn dot(&mut self, p: [f64; 2], radius: i32, color: Rgb<u8>) {
        let (x, y) = self.at(p);
        draw_filled_circle_mut(&mut self.image, (x as i32, y as i32), radius, color);
    }
}

fn xy(a: &ArrayView3<f64>, k: usize, t: usize) -> [f64; 2] {
    [a[[k, t, 0]], a[[k, t, 1]]]
}

/// Observed paths in the team colour, imputed gaps in red over the true path in black.
pub fn trajectories(pitch: PitchBounds, truth: ArrayView3<f64>, imputed: ArrayView3<f64>, mask: &MaskMatrix, teams: &[usize]) -> RgbImage {
    let mut c = Canvas::pitch(pitch);
    let (agents, frames, _) = truth.dim();
    for k in 0..agents {
        let team = TEAMS[teams.get(k).copied().unwrap_or(0) % 2];
        for t in 1..frames {
            let gap = !mask.observed(k, t) || !mask.observed(k, t - 1);
            if gap {
                c.segment(xy(&truth, k, t - 1), xy(&truth, k, t), TRUTH, false);
                c.segment(xy(&imputed, k, t - 1), xy(&imputed, k, t), PALETTE[2], true);
            } else {
                c.segment(xy(&truth, k, t - 1), xy(&truth, k, t), team, true);
            }
        }
        c.dot(xy(&truth, k, frames - 1), 3, team);
    }
    c.image
}

/// Weight curves for one agent over a window, missing frames shaded.
pub fn weight_curves(lambdas: &Array2<f64>, observed: &[bool]) -> RgbImage {
    let (frames, _) = lambdas.dim();
    let (w, h) = (900u32, 320u32);
    let mut image = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let plot_w = w as f32 - 2.0 * MARGIN;
    let plot_h = h as f32 - 2.0 * MARGIN;
    let x = |t: usize| MARGIN + plot_w * t as f32 / (frames.max(2) - 1) as f32;
    let y = |v: f64| MARGIN + plot_h * (1.0 - v as f32);
    for (t, obs) in observed.iter().enumerate() {
        if !obs {
            let x0 = x(t) as i32;
            let width = (x(t + 1) - x(t)).ceil().max(1.0) as u32;
            draw_filled_rect_mut(&mut image, Rect::at(x0, MARGIN as i32).of_size(width, plot_h as u32), Rgb([228, 228, 228]));
        }
    }
    draw_hollow_rect_mut(&mut image, Rect::at(MARGIN as i32, MARGIN as i32).of_size(plot_w as u32, plot_h as u32), TRUTH);
    for (c, color) in PALETTE.iter().enumerate() {
        for t in 1..frames {
            draw_line_segment_mut(&mut image, (x(t - 1), y(lambdas[[t - 1, c]])), (x(t), y(lambdas[[t, c]])), *color);
        }
    }
    image
}

fn blend(p: f64) -> Rgb<u8> {
    let p = p.clamp(0.0, 1.0);
    let lerp = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * p).round() as u8;
    let (right, left) = (PALETTE[0].0, PALETTE[2].0);
    Rgb([lerp(right[0], left[0]), lerp(right[1], left[1]), lerp(right[2], left[2])])
}

/// Control probability for the left team, red where it dominates and blue where the right team does.
pub fn control_map(map: &ControlMap, left: &[[f64; 2]], right: &[[f64; 2]], ball: Option<[f64; 2]>) -> RgbImage {
    let mut c = Canvas::pitch(map.spec.pitch);
    let scale = c.scale;
    let cell_w = map.spec.pitch.length as f32 * scale / map.spec.nx as f32;
    let cell_h = map.spec.pitch.width as f32 * scale / map.spec.ny as f32;
    for ((r, col), p) in map.grid.indexed_iter() {
        let x0 = MARGIN + col as f32 * cell_w;
        let y0 = MARGIN + r as f32 * cell_h;
        let rect = Rect::at(x0 as i32, y0 as i32).of_size(((x0 + cell_w) as i32 - x0 as i32).max(1) as u32, ((y0 + cell_h) as i32 - y0 as i32).max(1) as u32);
        draw_filled_rect_mut(&mut c.image, rect, blend(*p));
    }
    for p in left {
        c.dot(*p, 5, LINE);
        c.dot(*p, 3, PALETTE[2]);
    }
    for p in right {
        c.dot(*p, 5, LINE);
        c.dot(*p, 3, PALETTE[0]);
    }
    if let Some(b) = ball {
        c.dot(b, 3, TRUTH);
    }
    c.image
}
