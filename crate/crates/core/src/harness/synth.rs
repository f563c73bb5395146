//! Synthetic three-class corpus: a textured square translating over a
//! cluttered background with independently moving distractor patches.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imgproc::{gaussian_blur, Plane};
use crate::media_io::{write_annotations, write_frame, AnnotationBox, Frame};
use crate::rng::SplitMix64;

use super::corpus::write_split;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub videos_per_class: usize,
    pub frames: usize,
    pub size: usize,
    pub square: usize,
    /// Pixels per frame along each moving axis.
    pub speed: i64,
    /// Static distractor patches.
    pub distractors: usize,
    /// Distractor patches that translate at `distractor_speed` pixels per
    /// frame in a random one of eight directions.
    pub moving_distractors: usize,
    pub distractor_speed: i64,
    /// Pixels per frame of a global background pan in a random direction;
    /// the square's image motion is unaffected.
    pub camera_speed: f64,
    /// Standard deviation of per-frame Gaussian sensor noise, gray levels.
    pub noise: f64,
    pub folds: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { videos_per_class: 20, frames: 30, size: 128, square: 24, speed: 2, distractors: 6, moving_distractors: 0, distractor_speed: 1, camera_speed: 0.0, noise: 0.0, folds: 3 }
    }
}

/// Class name and per-frame motion direction.
pub const CLASSES: [(&str, (i64, i64)); 3] = [("right", (1, 0)), ("up", (0, -1)), ("diagonal", (1, 1))];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub id: String,
    pub label: String,
    pub frames: Vec<Frame>,
    pub boxes: Vec<AnnotationBox>,
    /// Per-frame displacement of the square.
    pub motion: (i64, i64),
}

fn clutter(size: usize, rng: &mut SplitMix64) -> Vec<u8> {
    let noise = Plane::from_fn(size, size, |_, _| rng.next_f64() as f32);
    let smooth = gaussian_blur(&noise, 3.0);
    let (lo, hi) = smooth.data.iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    smooth.data.iter().map(|&v| (50.0 + (v - lo) / (hi - lo).max(1e-6) * 90.0).round() as u8).collect()
}

/// High-contrast checker or stripe patch with its own constant motion.
struct Distractor {
    side: usize,
    start: (i64, i64),
    velocity: (i64, i64),
    pixels: Vec<u8>,
}

const DIRECTIONS: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

impl Distractor {
    fn random(p: &SynthParams, canvas: usize, speed: i64, rng: &mut SplitMix64) -> Self {
        let side = 10 + rng.below(13) as usize;
        let cell = 2 + rng.below(3) as usize;
        let (dark, light) = (rng.below(40) as u8, 215 + rng.below(41) as u8);
        let striped = rng.next_f64() < 0.5;
        let pixels = (0..side * side)
            .map(|i| {
                let (x, y) = (i % side, i / side);
                let on = if striped { (x / cell).is_multiple_of(2) } else { (x / cell + y / cell).is_multiple_of(2) };
                if on {
                    light
                } else {
                    dark
                }
            })
            .collect();
        let d = DIRECTIONS[rng.below(8) as usize];
        let velocity = (d.0 * speed, d.1 * speed);
        let travel = speed as usize * (p.frames - 1);
        let start_axis = |v: i64, rng: &mut SplitMix64| {
            let moving = if v != 0 { travel } else { 0 };
            let free = (canvas - side).saturating_sub(moving);
            let offset = rng.below(free as u64 + 1) as i64;
            if v < 0 {
                offset + moving as i64
            } else {
                offset
            }
        };
        let start = (start_axis(velocity.0, rng), start_axis(velocity.1, rng));
        Self { side, start, velocity, pixels }
    }

    fn paint(&self, data: &mut [u8], size: usize, f: usize) {
        let x0 = self.start.0 + self.velocity.0 * f as i64;
        let y0 = self.start.1 + self.velocity.1 * f as i64;
        for y in 0..self.side as i64 {
            for x in 0..self.side as i64 {
                let (px, py) = (x0 + x, y0 + y);
                if (0..size as i64).contains(&px) && (0..size as i64).contains(&py) {
                    data[py as usize * size + px as usize] = self.pixels[(y * self.side as i64 + x) as usize];
                }
            }
        }
    }
}

fn square_texture(side: usize, rng: &mut SplitMix64) -> Vec<u8> {
    let block = 3;
    let n = side.div_ceil(block);
    let cells: Vec<u8> = (0..n * n).map(|_| rng.below(256) as u8).collect();
    (0..side * side).map(|i| cells[(i / side / block) * n + (i % side) / block]).collect()
}

/// Start coordinate so the square stays `margin` pixels inside the frame.
fn start_coord(dir: i64, travel: usize, p: &SynthParams, rng: &mut SplitMix64) -> usize {
    let margin = 4;
    let free = p.size - p.square - 2 * margin;
    let moving = if dir != 0 { travel } else { 0 };
    let offset = rng.below((free - moving + 1) as u64) as usize + margin;
    if dir < 0 {
        offset + moving
    } else {
        offset
    }
}

/// One video of class `class` (index into [`CLASSES`]).
pub fn synth_video(class: usize, index: usize, seed: u64, p: &SynthParams) -> Result<SynthVideo> {
    let (label, dir) = CLASSES[class];
    let travel = (p.speed as usize) * (p.frames - 1);
    if p.square + travel + 8 > p.size {
        return Err(Error::InvalidArgument("square cannot stay in frame for the whole clip".into()));
    }
    let mut rng = SplitMix64::derive(seed, (class * 1000 + index) as u64);
    let pad = (p.camera_speed * (p.frames - 1) as f64).ceil() as usize + 1;
    let canvas = p.size + pad;
    let mut bg = clutter(canvas, &mut rng);
    for _ in 0..p.distractors {
        Distractor::random(p, canvas, 0, &mut rng).paint(&mut bg, canvas, 0);
    }
    let bg = Plane::from_vec(canvas, canvas, bg.iter().map(|&v| v as f32).collect());
    let movers: Vec<Distractor> =
        (0..p.moving_distractors).map(|_| Distractor::random(p, p.size, p.distractor_speed, &mut rng)).collect();
    let angle = rng.next_f64() * std::f64::consts::TAU;
    let pan = (p.camera_speed * angle.cos(), p.camera_speed * angle.sin());
    let span = |v: f64| v.abs() * (p.frames - 1) as f64;
    let origin = |v: f64| if v < 0.0 { span(v) } else { 0.0 };
    let pan_origin = (origin(pan.0), origin(pan.1));
    let tex = square_texture(p.square, &mut rng);
    let x0 = start_coord(dir.0, travel, p, &mut rng) as i64;
    let y0 = start_coord(dir.1, travel, p, &mut rng) as i64;
    let motion = (dir.0 * p.speed, dir.1 * p.speed);
    let mut frames = Vec::with_capacity(p.frames);
    let mut boxes = Vec::with_capacity(p.frames);
    for f in 0..p.frames {
        let sx = x0 + motion.0 * f as i64;
        let sy = y0 + motion.1 * f as i64;
        let (ox, oy) = ((pan_origin.0 + pan.0 * f as f64) as f32, (pan_origin.1 + pan.1 * f as f64) as f32);
        let mut data: Vec<u8> = (0..p.size * p.size)
            .map(|i| bg.bilinear((i % p.size) as f32 + ox, (i / p.size) as f32 + oy).round() as u8)
            .collect();
        for d in &movers {
            d.paint(&mut data, p.size, f);
        }
        for y in 0..p.square {
            let row = (sy as usize + y) * p.size + sx as usize;
            data[row..row + p.square].copy_from_slice(&tex[y * p.square..(y + 1) * p.square]);
        }
        if p.noise > 0.0 {
            for v in data.iter_mut() {
                *v = (*v as f64 + p.noise * rng.normal()).round().clamp(0.0, 255.0) as u8;
            }
        }
        frames.push(Frame::gray(p.size, p.size, data, f)?);
        boxes.push(AnnotationBox { frame_index: f as u32, x: sx as u32, y: sy as u32, w: p.square as u32, h: p.square as u32 });
    }
    Ok(SynthVideo { id: format!("{label}_{index:02}"), label: label.to_string(), frames, boxes, motion })
}

/// Write the corpus under `out_dir`; returns the video ids in class order.
pub fn make_synthetic_corpus(out_dir: &Path, seed: u64, p: &SynthParams) -> Result<Vec<String>> {
    let io = |path: &Path, e| Error::io(path, e);
    for sub in ["videos", "annotations", "splits"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| io(&d, e))?;
    }
    let mut labels = String::from("video,label\n");
    let mut ids = Vec::new();
    let mut folds: Vec<Vec<String>> = vec![Vec::new(); p.folds];
    for class in 0..CLASSES.len() {
        for i in 0..p.videos_per_class {
            let v = synth_video(class, i, seed, p)?;
            let dir = out_dir.join("videos").join(&v.id);
            fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
            for f in &v.frames {
                write_frame(&dir, f)?;
            }
            write_annotations(&out_dir.join("annotations").join(format!("{}.csv", v.id)), &v.boxes)?;
            labels.push_str(&format!("{},{}\n", v.id, v.label));
            folds[i % p.folds].push(v.id.clone());
            ids.push(v.id);
        }
    }
    let path = out_dir.join("labels.csv");
    fs::write(&path, labels).map_err(|e| io(&path, e))?;
    for k in 0..p.folds {
        let test = folds[k].clone();
        let train: Vec<String> = ids.iter().filter(|id| !test.contains(id)).cloned().collect();
        write_split(&out_dir.join("splits").join(format!("split{}_train.txt", k + 1)), &train)?;
        write_split(&out_dir.join("splits").join(format!("split{}_test.txt", k + 1)), &test)?;
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_moves_by_speed() {
        let p = SynthParams::default();
        let v = synth_video(0, 3, 1, &p).unwrap();
        assert_eq!(v.frames.len(), 30);
        assert_eq!(v.motion, (2, 0));
        assert_eq!(v.boxes[1].x, v.boxes[0].x + 2);
        let (b0, b1) = (v.boxes[0], v.boxes[1]);
        for y in 0..24 {
            for x in 0..24 {
                let a = v.frames[0].data[(b0.y + y) as usize * 128 + (b0.x + x) as usize];
                let b = v.frames[1].data[(b1.y + y) as usize * 128 + (b1.x + x) as usize];
                assert_eq!(a, b);
            }
        }
        let last = v.boxes[29];
        assert!(last.x + last.w <= 128 && last.y + last.h <= 128);
    }

    #[test]
    fn deterministic_per_seed() {
        let p = SynthParams::default();
        assert_eq!(synth_video(2, 5, 9, &p).unwrap(), synth_video(2, 5, 9, &p).unwrap());
        assert_ne!(synth_video(2, 5, 9, &p).unwrap().frames, synth_video(2, 5, 10, &p).unwrap().frames);
    }

    #[test]
    fn upward_stays_inside() {
        let p = SynthParams::default();
        for i in 0..20 {
            let v = synth_video(1, i, 4, &p).unwrap();
            assert!(v.boxes.iter().all(|b| b.y + b.h <= 128));
            assert_eq!(v.boxes[29].y + 58, v.boxes[0].y);
        }
    }
}
