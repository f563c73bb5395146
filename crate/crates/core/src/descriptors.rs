//! HOG, HOF and MBH histograms in the 32x32x15 volume around a trajectory.
//!
//! A volume is sampled at the trajectory's pyramid level, one patch per
//! tracked frame, with a one-pixel margin so interior gradients are exact
//! central differences. The patch is split into a 2x2 spatial grid and the
//! frames into 3 temporal cells; every cell contributes one orientation
//! histogram and the concatenation is L2-normalized.

use std::f32::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imgproc::{central_gradient, Plane};
use crate::optical_flow::FlowField;
use crate::trajectories::{shape_descriptor, ScalePyramid, Trajectory, SHAPE_DIM, TRACK_LENGTH};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VolumeConfig {
    pub patch_size: usize,
    pub length: usize,
    pub spatial_cells: usize,
    pub temporal_cells: usize,
    pub hog_bins: usize,
    /// Orientation bins for HOF; one extra bin collects near-zero motion.
    pub hof_bins: usize,
    pub mbh_bins: usize,
    /// Flow vectors shorter than this fall into the HOF zero bin.
    pub zero_flow_threshold: f32,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        Self {
            patch_size: 32,
            length: TRACK_LENGTH,
            spatial_cells: 2,
            temporal_cells: 3,
            hog_bins: 8,
            hof_bins: 8,
            mbh_bins: 8,
            zero_flow_threshold: 0.4,
        }
    }
}

impl VolumeConfig {
    fn cells(&self) -> usize {
        self.spatial_cells * self.spatial_cells * self.temporal_cells
    }

    pub fn hog_dim(&self) -> usize {
        self.cells() * self.hog_bins
    }

    pub fn hof_dim(&self) -> usize {
        self.cells() * (self.hof_bins + 1)
    }

    pub fn mbh_dim(&self) -> usize {
        self.cells() * self.mbh_bins
    }

    /// Side of a sampled patch including the gradient margin.
    pub fn sampled_side(&self) -> usize {
        self.patch_size + 2
    }
}

/// The five descriptor families, in Fisher-vector concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorType {
    Shape,
    Hog,
    Hof,
    Mbhx,
    Mbhy,
}

impl DescriptorType {
    pub const ALL: [DescriptorType; 5] =
        [DescriptorType::Shape, DescriptorType::Hog, DescriptorType::Hof, DescriptorType::Mbhx, DescriptorType::Mbhy];

    pub fn name(self) -> &'static str {
        match self {
            DescriptorType::Shape => "shape",
            DescriptorType::Hog => "hog",
            DescriptorType::Hof => "hof",
            DescriptorType::Mbhx => "mbhx",
            DescriptorType::Mbhy => "mbhy",
        }
    }

    pub fn tag(self) -> u32 {
        self as u32
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn dim(self, cfg: &VolumeConfig) -> usize {
        match self {
            DescriptorType::Shape => SHAPE_DIM,
            DescriptorType::Hog => cfg.hog_dim(),
            DescriptorType::Hof => cfg.hof_dim(),
            DescriptorType::Mbhx | DescriptorType::Mbhy => cfg.mbh_dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub shape: Vec<f32>,
    pub hog: Vec<f32>,
    pub hof: Vec<f32>,
    pub mbhx: Vec<f32>,
    pub mbhy: Vec<f32>,
}

impl DescriptorSet {
    pub fn get(&self, t: DescriptorType) -> &[f32] {
        match t {
            DescriptorType::Shape => &self.shape,
            DescriptorType::Hog => &self.hog,
            DescriptorType::Hof => &self.hof,
            DescriptorType::Mbhx => &self.mbhx,
            DescriptorType::Mbhy => &self.mbhy,
        }
    }
}

/// Scale `v` to unit L2 norm; all-zero input stays zero.
pub fn l2_normalize(v: &mut [f32]) {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x = (*x as f64 / norm) as f32);
    }
}

/// Angle of `(x, y)` in `[0, 2pi)`, via an octant-reduced polynomial
/// arctangent (absolute error below 2e-5 rad).
#[inline]
pub fn full_angle(x: f32, y: f32) -> f32 {
    use std::f32::consts::{FRAC_PI_2, PI};
    let (ax, ay) = (x.abs(), y.abs());
    let (lo, hi) = if ax >= ay { (ay, ax) } else { (ax, ay) };
    if hi == 0.0 {
        return 0.0;
    }
    let z = lo / hi;
    let z2 = z * z;
    let mut a = z
        * (0.999_977_26
            + z2 * (-0.332_623_47 + z2 * (0.193_543_46 + z2 * (-0.116_432_87 + z2 * (0.052_653_32 + z2 * -0.011_721_2)))));
    if ay > ax {
        a = FRAC_PI_2 - a;
    }
    if x < 0.0 {
        a = PI - a;
    }
    if y < 0.0 {
        a = TAU - a;
    }
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Spread `weight` over the two orientation bins adjacent to `angle`.
/// Bin `b` is centred on `b * 360/bins` degrees; a vector exactly on a
/// centre goes entirely to that (lower) bin.
#[inline]
fn vote(hist: &mut [f32], bins: usize, gx: f32, gy: f32, weight: f32) {
    let pos = full_angle(gx, gy) / TAU * bins as f32;
    let lower = pos.floor();
    let frac = pos - lower;
    let b0 = (lower as usize) % bins;
    let b1 = (b0 + 1) % bins;
    hist[b0] += weight * (1.0 - frac);
    hist[b1] += weight * frac;
}

/// Accumulate cell histograms of a vector field volume. Each frame is a
/// pair of `side x side` component planes; only the central `patch_size`
/// square is binned.
fn cell_histograms(
    fields: &[(Plane, Plane)],
    cfg: &VolumeConfig,
    bins: usize,
    zero_threshold: Option<f32>,
) -> Vec<f32> {
    let per_cell = bins + usize::from(zero_threshold.is_some());
    let n = cfg.spatial_cells;
    let mut out = vec![0.0f32; cfg.cells() * per_cell];
    let cell_side = cfg.patch_size / n;
    for (t, (fx, fy)) in fields.iter().enumerate() {
        let tc = (t * cfg.temporal_cells / fields.len().max(1)).min(cfg.temporal_cells - 1);
        for y in 0..cfg.patch_size {
            let cy = (y / cell_side).min(n - 1);
            for x in 0..cfg.patch_size {
                let cx = (x / cell_side).min(n - 1);
                let base = ((tc * n + cy) * n + cx) * per_cell;
                let (gx, gy) = (fx.get(x + 1, y + 1), fy.get(x + 1, y + 1));
                let mag = (gx * gx + gy * gy).sqrt();
                match zero_threshold {
                    Some(eps) if mag < eps => out[base + bins] += 1.0,
                    _ if mag == 0.0 => {}
                    _ => vote(&mut out[base..base + bins], bins, gx, gy, mag),
                }
            }
        }
    }
    out
}

/// Histogram of oriented image gradients over a volume of intensity patches
/// (each `sampled_side` square).
pub fn hog(volume: &[Plane], cfg: &VolumeConfig) -> Vec<f32> {
    let grads: Vec<(Plane, Plane)> = volume.iter().map(central_gradient).collect();
    let mut h = cell_histograms(&grads, cfg, cfg.hog_bins, None);
    l2_normalize(&mut h);
    h
}

/// Histogram of optical flow with a zero-motion bin per cell.
pub fn hof(volume: &[FlowField], cfg: &VolumeConfig) -> Vec<f32> {
    let fields: Vec<(Plane, Plane)> = volume.iter().map(|f| (f.u_plane(), f.v_plane())).collect();
    let mut h = cell_histograms(&fields, cfg, cfg.hof_bins, Some(cfg.zero_flow_threshold));
    l2_normalize(&mut h);
    h
}

/// Motion boundary histograms: HOG over the spatial gradients of the
/// horizontal (`mbhx`) and vertical (`mbhy`) flow components.
pub fn mbh(volume: &[FlowField], cfg: &VolumeConfig) -> (Vec<f32>, Vec<f32>) {
    let gu: Vec<(Plane, Plane)> = volume.iter().map(|f| central_gradient(&f.u_plane())).collect();
    let gv: Vec<(Plane, Plane)> = volume.iter().map(|f| central_gradient(&f.v_plane())).collect();
    let mut x = cell_histograms(&gu, cfg, cfg.mbh_bins, None);
    let mut y = cell_histograms(&gv, cfg, cfg.mbh_bins, None);
    l2_normalize(&mut x);
    l2_normalize(&mut y);
    (x, y)
}

/// Edge-clamped square patch of side `side` centred on `center`
/// (level coordinates, rounded).
pub fn sample_patch(plane: &Plane, center: (f32, f32), side: usize) -> Plane {
    let x0 = center.0.round() as isize - (side / 2) as isize;
    let y0 = center.1.round() as isize - (side / 2) as isize;
    Plane::from_fn(side, side, |i, j| plane.clamped(x0 + i as isize, y0 + j as isize))
}

pub fn sample_flow_patch(flow: &FlowField, center: (f32, f32), side: usize) -> FlowField {
    let x0 = center.0.round() as isize - (side / 2) as isize;
    let y0 = center.1.round() as isize - (side / 2) as isize;
    FlowField::from_fn(side, side, |i, j| {
        let x = (x0 + i as isize).clamp(0, flow.width as isize - 1) as usize;
        let y = (y0 + j as isize).clamp(0, flow.height as isize - 1) as usize;
        flow.at(x, y)
    })
}

/// Frame data needed to describe trajectories: intensity and flow at every
/// pyramid level. `flows[f]` maps frame `f` to `f + 1`.
pub struct VideoLevels<'a> {
    pub pyramid: &'a ScalePyramid,
    /// `planes[frame][level]`
    pub planes: &'a [Vec<Plane>],
    /// `flows[frame][level]`
    pub flows: &'a [Vec<FlowField>],
}

/// All five descriptors for one trajectory.
pub fn describe(t: &Trajectory, video: &VideoLevels<'_>, cfg: &VolumeConfig) -> Result<DescriptorSet> {
    let li = video
        .pyramid
        .levels
        .iter()
        .position(|l| l.index == t.scale_index)
        .ok_or_else(|| crate::error::Error::InvalidArgument(format!("scale {} not in pyramid", t.scale_index)))?;
    let factor = video.pyramid.levels[li].factor;
    let side = cfg.sampled_side();
    let points = t.points();
    let start = t.start_frame as usize;
    let mut intensity = Vec::with_capacity(cfg.length);
    let mut motion = Vec::with_capacity(cfg.length);
    for (k, p) in points.iter().take(cfg.length).enumerate() {
        let f = start + k;
        let center = (p.0 * factor, p.1 * factor);
        intensity.push(sample_patch(&video.planes[f][li], center, side));
        let flow_frame = f.min(video.flows.len() - 1);
        motion.push(sample_flow_patch(&video.flows[flow_frame][li], center, side));
    }
    let (mbhx, mbhy) = mbh(&motion, cfg);
    Ok(DescriptorSet {
        shape: shape_descriptor(t)?.to_vec(),
        hog: hog(&intensity, cfg),
        hof: hof(&motion, cfg),
        mbhx,
        mbhy,
    })
}
