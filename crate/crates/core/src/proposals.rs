//! Box proposals scored by enclosed contours of image and motion boundaries.
//!
//! Boundaries are thinned Sobel responses, grouped greedily into
//! orientation-coherent 8-connected contours. A box scores the summed
//! magnitude of the contours it strictly encloses, divided by its perimeter
//! raised to `kappa`. The fused score is `alpha * s_obj + beta * s_motion`,
//! each term normalized by its per-frame maximum first.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::f32::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{sobel, Plane};
use crate::optical_flow::FlowField;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMap {
    pub width: usize,
    pub height: usize,
    /// Edge strength in `[0, 1]`.
    pub magnitude: Vec<f32>,
    /// Edge orientation in `[0, pi)`.
    pub orientation: Vec<f32>,
}

impl BoundaryMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, magnitude: vec![0.0; width * height], orientation: vec![0.0; width * height] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGroup {
    pub members: Vec<(u32, u32)>,
    pub magnitude: f64,
    pub orientation: f32,
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoxRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoxRect {
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn iou(&self, other: &BoxRect) -> f64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let inter = (x1 - x0) as u64 * (y1 - y0) as u64;
        inter as f64 / (self.area() + other.area() - inter) as f64
    }

    /// Pixel strictly inside: not on the box's outermost rows or columns.
    #[inline]
    pub fn strictly_contains(&self, px: u32, py: u32) -> bool {
        px > self.x && py > self.y && px + 1 < self.x + self.w && py + 1 < self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalBox {
    pub rect: BoxRect,
    pub s_obj: f64,
    pub s_motion: f64,
    pub s_fusion: f64,
}

/// The fused objectness `alpha * s_obj + beta * s_motion`.
#[inline]
pub fn fuse(alpha: f64, beta: f64, s_obj: f64, s_motion: f64) -> f64 {
    alpha * s_obj + beta * s_motion
}

impl ProposalBox {
    pub fn new(rect: BoxRect, s_obj: f64, s_motion: f64, alpha: f64, beta: f64) -> Self {
        Self { rect, s_obj, s_motion, s_fusion: fuse(alpha, beta, s_obj, s_motion) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreParams {
    pub alpha: f64,
    pub beta: f64,
    /// Perimeter normalization exponent.
    pub kappa: f64,
    pub max_boxes: usize,
    /// Highest-ranked boxes that vote in the saliency map.
    pub top_n_votes: usize,
    /// Largest orientation spread inside one contour, radians.
    pub theta_group: f32,
    /// Boundary pixels weaker than this are not grouped.
    pub min_magnitude: f32,
    /// Votes weighted by box score instead of one per box.
    pub weighted_votes: bool,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            kappa: 1.5,
            max_boxes: 10_000,
            top_n_votes: 1_000,
            theta_group: PI / 8.0,
            min_magnitude: 0.1,
            weighted_votes: false,
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidArgument("alpha and beta must be non-negative".into()));
        }
        if self.max_boxes < 1 {
            return Err(Error::InvalidArgument("max_boxes must be at least 1".into()));
        }
        Ok(())
    }

    /// Object-boundary-only scoring.
    pub fn edge_box(&self) -> Self {
        Self { alpha: 1.0, beta: 0.0, ..*self }
    }
}

#[inline]
fn edge_orientation(gx: f32, gy: f32) -> f32 {
    let o = (gy.atan2(gx) + PI / 2.0).rem_euclid(PI);
    if o >= PI {
        0.0
    } else {
        o
    }
}

/// Keep pixels that are not smaller than either neighbor along the
/// (quantized) gradient direction, then normalize by the maximum.
fn thin_and_normalize(mag: &[f32], gx: &[f32], gy: &[f32], width: usize, height: usize) -> BoundaryMap {
    let mut out = BoundaryMap::empty(width, height);
    let at = |x: isize, y: isize| -> f32 {
        if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
            0.0
        } else {
            mag[y as usize * width + x as usize]
        }
    };
    let mut max = 0.0f32;
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).rem_euclid(PI);
            let (dx, dy) = match angle {
                a if !(PI / 8.0..7.0 * PI / 8.0).contains(&a) => (1, 0),
                a if a < 3.0 * PI / 8.0 => (1, 1),
                a if a < 5.0 * PI / 8.0 => (0, 1),
                _ => (-1, 1),
            };
            let (xi, yi) = (x as isize, y as isize);
            if m >= at(xi + dx, yi + dy) && m >= at(xi - dx, yi - dy) {
                out.magnitude[i] = m;
                out.orientation[i] = edge_orientation(gx[i], gy[i]);
                max = max.max(m);
            }
        }
    }
    if max > 0.0 {
        out.magnitude.iter_mut().for_each(|m| *m /= max);
    }
    out
}

/// Thinned, max-normalized Sobel edges of a grayscale image.
pub fn image_boundaries(img: &Plane) -> BoundaryMap {
    let (gx, gy) = sobel(img);
    let mag: Vec<f32> = gx.data.iter().zip(&gy.data).map(|(a, b)| a.hypot(*b)).collect();
    thin_and_normalize(&mag, &gx.data, &gy.data, img.width, img.height)
}

/// Thinned, max-normalized gradient magnitude of the flow field; the
/// direction comes from whichever component has the stronger gradient.
pub fn motion_boundaries(flow: &FlowField) -> BoundaryMap {
    let (ux, uy) = sobel(&flow.u_plane());
    let (vx, vy) = sobel(&flow.v_plane());
    let n = flow.width * flow.height;
    let mut mag = Vec::with_capacity(n);
    let mut dx = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b, c, d) = (ux.data[i], uy.data[i], vx.data[i], vy.data[i]);
        mag.push((a * a + b * b + c * c + d * d).sqrt());
        if a * a + b * b >= c * c + d * d {
            dx.push(a);
            dy.push(b);
        } else {
            dx.push(c);
            dy.push(d);
        }
    }
    thin_and_normalize(&mag, &dx, &dy, flow.width, flow.height)
}

#[inline]
fn axial_difference(a: f32, b: f32) -> f32 {
    let d = (a - b).abs().rem_euclid(PI);
    d.min(PI - d)
}

/// Greedy raster-order grouping of boundary pixels into 8-connected,
/// orientation-coherent contours. A pixel joins the contour being grown when
/// its orientation is within `theta_group` of the contour's running mean.
pub fn group_edges(b: &BoundaryMap, theta_group: f32, min_magnitude: f32) -> Vec<EdgeGroup> {
    let (w, h) = (b.width, b.height);
    let mut assigned = vec![false; w * h];
    let mut groups = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if assigned[start] || b.magnitude[start] < min_magnitude || b.magnitude[start] <= 0.0 {
            continue;
        }
        assigned[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        let mut total = 0.0f64;
        // doubled-angle accumulator for the axial mean
        let (mut c, mut s) = (0.0f64, 0.0f64);
        let mut mean = b.orientation[start];
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (u32::MAX, u32::MAX, 0u32, 0u32);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            members.push((x, y));
            total += b.magnitude[i] as f64;
            let o = b.orientation[i] as f64;
            c += (2.0 * o).cos();
            s += (2.0 * o).sin();
            mean = ((s.atan2(c) / 2.0).rem_euclid(std::f64::consts::PI)) as f32;
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if assigned[j] || b.magnitude[j] < min_magnitude || b.magnitude[j] <= 0.0 {
                        continue;
                    }
                    if axial_difference(b.orientation[j], mean) <= theta_group {
                        assigned[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        groups.push(EdgeGroup { members, magnitude: total, orientation: mean, min_x, min_y, max_x, max_y });
    }
    groups
}

pub const MIN_BOX_SIDE: u32 = 16;
pub const BOX_SCALE_STEP: f64 = 1.25;
pub const ASPECT_RATIOS: [f64; 5] = [0.5, 0.75, 1.0, 4.0 / 3.0, 2.0];
pub const BOX_STRIDE_FRACTION: f64 = 0.2;

/// Sliding-window boxes over scales and aspect ratios, coarse scales first,
/// truncated to `max_boxes`. The scale is the shorter box side.
pub fn generate_boxes(width: u32, height: u32, params: &ScoreParams) -> Vec<BoxRect> {
    let mut sides = Vec::new();
    let mut s = MIN_BOX_SIDE as f64;
    while (s.round() as u32) <= width.max(height) {
        sides.push(s.round() as u32);
        s *= BOX_SCALE_STEP;
    }
    let mut boxes = Vec::new();
    for &side in sides.iter().rev() {
        for &ar in &ASPECT_RATIOS {
            let (w, h) = if ar >= 1.0 {
                ((side as f64 * ar).round() as u32, side)
            } else {
                (side, (side as f64 / ar).round() as u32)
            };
            if w > width || h > height {
                continue;
            }
            let sx = ((w as f64 * BOX_STRIDE_FRACTION).round() as u32).max(1);
            let sy = ((h as f64 * BOX_STRIDE_FRACTION).round() as u32).max(1);
            let mut y = 0;
            while y + h <= height {
                let mut x = 0;
                while x + w <= width {
                    if boxes.len() == params.max_boxes {
                        return boxes;
                    }
                    boxes.push(BoxRect { x, y, w, h });
                    x += sx;
                }
                y += sy;
            }
        }
    }
    boxes
}

/// Summed magnitude of groups strictly inside `rect`, over perimeter^kappa.
pub fn score_box(rect: &BoxRect, groups: &[EdgeGroup], kappa: f64) -> f64 {
    let enclosed: f64 = groups
        .iter()
        .filter(|g| rect.strictly_contains(g.min_x, g.min_y) && rect.strictly_contains(g.max_x, g.max_y))
        .map(|g| g.magnitude)
        .sum();
    if enclosed == 0.0 {
        return 0.0;
    }
    enclosed / (2.0 * (rect.w as f64 + rect.h as f64)).powf(kappa)
}

/// Descending by fused score, ties by `(y, x, w, h)` ascending.
pub fn rank_boxes(boxes: &mut [ProposalBox]) {
    boxes.sort_by(|a, b| match b.s_fusion.total_cmp(&a.s_fusion) {
        Ordering::Equal => (a.rect.y, a.rect.x, a.rect.w, a.rect.h).cmp(&(b.rect.y, b.rect.x, b.rect.w, b.rect.h)),
        o => o,
    });
}

/// Same ordering keyed on `s_obj` alone.
pub fn rank_by_objectness(boxes: &mut [ProposalBox]) {
    boxes.sort_by(|a, b| match b.s_obj.total_cmp(&a.s_obj) {
        Ordering::Equal => (a.rect.y, a.rect.x, a.rect.w, a.rect.h).cmp(&(b.rect.y, b.rect.x, b.rect.w, b.rect.h)),
        o => o,
    });
}

/// Raw (unnormalized) objectness and motion scores for every box.
#[derive(Debug, Clone)]
pub struct FrameScores {
    pub boxes: Vec<BoxRect>,
    pub obj: Vec<f64>,
    /// Empty when no flow was supplied.
    pub motion: Vec<f64>,
}

pub fn raw_scores(img: &Plane, flow: Option<&FlowField>, params: &ScoreParams) -> FrameScores {
    let boxes = generate_boxes(img.width as u32, img.height as u32, params);
    let obj_groups = group_edges(&image_boundaries(img), params.theta_group, params.min_magnitude);
    let obj = boxes.iter().map(|b| score_box(b, &obj_groups, params.kappa)).collect();
    let motion = match flow {
        Some(f) => {
            let g = group_edges(&motion_boundaries(f), params.theta_group, params.min_magnitude);
            boxes.iter().map(|b| score_box(b, &g, params.kappa)).collect()
        }
        None => Vec::new(),
    };
    FrameScores { boxes, obj, motion }
}

fn normalized(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        scores.iter().map(|s| s / max).collect()
    } else {
        scores.to_vec()
    }
}

impl FrameScores {
    /// Normalize each score family by its frame maximum, fuse, and rank.
    pub fn fused(&self, alpha: f64, beta: f64) -> Vec<ProposalBox> {
        let obj = normalized(&self.obj);
        let motion = if self.motion.is_empty() { vec![0.0; obj.len()] } else { normalized(&self.motion) };
        let mut out: Vec<ProposalBox> = self
            .boxes
            .iter()
            .zip(obj.iter().zip(&motion))
            .map(|(r, (&o, &m))| ProposalBox::new(*r, o, m, alpha, beta))
            .collect();
        rank_boxes(&mut out);
        out
    }
}

/// Score every generated box of a frame and rank by the fused score.
/// `flow` is required whenever `beta > 0`.
pub fn score_frame(img: &Plane, flow: Option<&FlowField>, params: &ScoreParams) -> Result<Vec<ProposalBox>> {
    params.validate()?;
    if params.beta > 0.0 && flow.is_none() {
        return Err(Error::InvalidArgument("motion scoring needs a flow field".into()));
    }
    if let Some(f) = flow {
        if (f.width, f.height) != (img.width, img.height) {
            return Err(Error::Dimension("flow and frame sizes differ".into()));
        }
    }
    Ok(raw_scores(img, flow, params).fused(params.alpha, params.beta))
}
