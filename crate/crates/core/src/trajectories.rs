//! Dense grid seeding on a spatial pyramid, flow-driven tracking and the
//! trajectory-shape descriptor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{min_eigenvalue_map, resize_bilinear, Plane};
use crate::optical_flow::FlowField;

/// Number of displacement steps per trajectory.
pub const TRACK_LENGTH: usize = 15;
pub const SHAPE_DIM: usize = 2 * TRACK_LENGTH;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackParams {
    pub num_scales: usize,
    pub scale_step: f64,
    /// Scales whose shorter side falls below this are dropped.
    pub min_scale_side: usize,
    pub grid_spacing: usize,
    /// Seeds need a structure-tensor minimum eigenvalue above this fraction
    /// of the frame maximum. `None` disables the filter.
    pub texture_quality: Option<f32>,
    pub median_radius: usize,
    /// Tracks whose point positions have std below this in both x and y
    /// (at the track's scale) are static.
    pub static_std: f32,
    /// A single step longer than this fraction of the track length is erratic.
    pub max_step_fraction: f32,
    /// Longest allowed track, in pixels at the track's scale.
    pub max_length: f32,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            num_scales: 8,
            scale_step: std::f64::consts::FRAC_1_SQRT_2,
            min_scale_side: 32,
            grid_spacing: 5,
            texture_quality: Some(0.001),
            median_radius: 1,
            static_std: 1.0,
            max_step_fraction: 0.7,
            max_length: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleLevel {
    pub index: u32,
    /// Level resolution relative to the original, `scale_step^index`.
    pub factor: f32,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalePyramid {
    pub width: usize,
    pub height: usize,
    pub levels: Vec<ScaleLevel>,
}

impl ScalePyramid {
    pub fn new(width: usize, height: usize, params: &TrackParams) -> Self {
        let levels = (0..params.num_scales)
            .map(|s| {
                let factor = params.scale_step.powi(s as i32);
                ScaleLevel {
                    index: s as u32,
                    factor: factor as f32,
                    width: (width as f64 * factor).round() as usize,
                    height: (height as f64 * factor).round() as usize,
                }
            })
            .filter(|l| l.width.min(l.height) >= params.min_scale_side)
            .collect();
        Self { width, height, levels }
    }

    pub fn level(&self, scale_index: u32) -> Option<&ScaleLevel> {
        self.levels.iter().find(|l| l.index == scale_index)
    }

    pub fn resize_plane(&self, img: &Plane) -> Vec<Plane> {
        self.levels.iter().map(|l| resize_bilinear(img, l.width, l.height)).collect()
    }

    pub fn resize_flow(&self, flow: &FlowField) -> Vec<FlowField> {
        self.levels.iter().map(|l| flow.rescaled(l.width, l.height, l.factor)).collect()
    }
}

/// A seeded point in original-resolution coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed {
    pub point: (f32, f32),
    pub scale_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_frame: u32,
    /// Original-resolution pixel coordinates.
    pub start_point: (f32, f32),
    pub scale_index: u32,
    /// Per-step motion in original-resolution pixels.
    pub displacements: [(f32, f32); TRACK_LENGTH],
}

impl Trajectory {
    /// The `TRACK_LENGTH + 1` tracked positions in original coordinates.
    pub fn points(&self) -> [(f32, f32); TRACK_LENGTH + 1] {
        let mut pts = [self.start_point; TRACK_LENGTH + 1];
        for (i, &(dx, dy)) in self.displacements.iter().enumerate() {
            pts[i + 1] = (pts[i].0 + dx, pts[i].1 + dy);
        }
        pts
    }

    pub fn total_length(&self) -> f32 {
        self.displacements.iter().map(|&(dx, dy)| dx.hypot(dy)).sum()
    }

    /// Start point rounded to the nearest original-resolution pixel.
    pub fn start_pixel(&self) -> (i64, i64) {
        (self.start_point.0.round() as i64, self.start_point.1.round() as i64)
    }
}

fn grid_cell(point_at_scale: (f32, f32), spacing: usize) -> (i64, i64) {
    (
        (point_at_scale.0 / spacing as f32).floor() as i64,
        (point_at_scale.1 / spacing as f32).floor() as i64,
    )
}

/// Seeds for one pyramid level. `plane` is the frame at that level's
/// resolution; `occupied` holds active track heads at this level
/// (level coordinates).
pub fn seed_level(plane: &Plane, level: &ScaleLevel, occupied: &[(f32, f32)], params: &TrackParams) -> Vec<Seed> {
    let spacing = params.grid_spacing;
    let cols = level.width / spacing;
    let rows = level.height / spacing;
    let mut taken = vec![false; cols * rows];
    for &p in occupied {
        let (cx, cy) = grid_cell(p, spacing);
        if cx >= 0 && cy >= 0 && (cx as usize) < cols && (cy as usize) < rows {
            taken[cy as usize * cols + cx as usize] = true;
        }
    }
    let quality = params.texture_quality.map(|q| {
        let eig = min_eigenvalue_map(plane);
        let threshold = eig.max() * q;
        (eig, threshold)
    });
    let offset = spacing / 2;
    let mut seeds = Vec::new();
    for j in 0..rows {
        for i in 0..cols {
            if taken[j * cols + i] {
                continue;
            }
            let (x, y) = (i * spacing + offset, j * spacing + offset);
            if let Some((eig, threshold)) = &quality {
                if eig.get(x, y) <= *threshold {
                    continue;
                }
            }
            seeds.push(Seed {
                point: (x as f32 / level.factor, y as f32 / level.factor),
                scale_index: level.index,
            });
        }
    }
    seeds
}

/// Grid seeds over every pyramid level, skipping cells that already hold an
/// active track head at the same scale. `existing` heads are in original
/// coordinates.
pub fn seed_points(frame: &Plane, pyramid: &ScalePyramid, existing: &[Seed], params: &TrackParams) -> Vec<Seed> {
    let planes = pyramid.resize_plane(frame);
    pyramid
        .levels
        .iter()
        .zip(&planes)
        .flat_map(|(level, plane)| {
            let heads: Vec<(f32, f32)> = existing
                .iter()
                .filter(|s| s.scale_index == level.index)
                .map(|s| (s.point.0 * level.factor, s.point.1 * level.factor))
                .collect();
            seed_level(plane, level, &heads, params)
        })
        .collect()
}

/// Advance a point at level resolution by the median-filtered flow.
/// Returns `None` when the point leaves the level's frame.
#[inline]
fn advance(p: (f32, f32), flow: &FlowField, radius: usize) -> Option<(f32, f32)> {
    let xi = (p.0.round() as isize).clamp(0, flow.width as isize - 1) as usize;
    let yi = (p.1.round() as isize).clamp(0, flow.height as isize - 1) as usize;
    let (du, dv) = flow.median_at(xi, yi, radius);
    let q = (p.0 + du, p.1 + dv);
    let inside = q.0 >= 0.0 && q.1 >= 0.0 && q.0 <= (flow.width - 1) as f32 && q.1 <= (flow.height - 1) as f32;
    inside.then_some(q)
}

fn finish_track(start_frame: u32, level: &ScaleLevel, pts: &[(f32, f32)]) -> Trajectory {
    let inv = 1.0 / level.factor;
    let mut displacements = [(0.0, 0.0); TRACK_LENGTH];
    for (d, w) in displacements.iter_mut().zip(pts.windows(2)) {
        *d = ((w[1].0 - w[0].0) * inv, (w[1].1 - w[0].1) * inv);
    }
    Trajectory { start_frame, start_point: (pts[0].0 * inv, pts[0].1 * inv), scale_index: level.index, displacements }
}

/// Track seeds through `flows` (full resolution; `flows[i]` maps frame
/// `start_frame + i` to the next). Tracks that leave the frame are dropped;
/// the rest come back in seed order.
pub fn track(
    seeds: &[Seed],
    start_frame: u32,
    flows: &[FlowField],
    pyramid: &ScalePyramid,
    params: &TrackParams,
) -> Result<Vec<Trajectory>> {
    if flows.len() < TRACK_LENGTH {
        return Err(Error::InvalidArgument(format!(
            "tracking needs {TRACK_LENGTH} flow fields, got {}",
            flows.len()
        )));
    }
    let scaled: Vec<Vec<FlowField>> = flows[..TRACK_LENGTH].iter().map(|f| pyramid.resize_flow(f)).collect();
    let mut out = Vec::new();
    'seeds: for seed in seeds {
        let Some(li) = pyramid.levels.iter().position(|l| l.index == seed.scale_index) else {
            return Err(Error::InvalidArgument(format!("scale {} not in pyramid", seed.scale_index)));
        };
        let level = &pyramid.levels[li];
        let mut pts = Vec::with_capacity(TRACK_LENGTH + 1);
        pts.push((seed.point.0 * level.factor, seed.point.1 * level.factor));
        for step in scaled.iter() {
            match advance(*pts.last().unwrap(), &step[li], params.median_radius) {
                Some(q) => pts.push(q),
                None => continue 'seeds,
            }
        }
        out.push(finish_track(start_frame, level, &pts));
    }
    Ok(out)
}

/// Why a trajectory was rejected, if it was.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Static,
    Erratic,
    TooLong,
}

pub fn check_track(t: &Trajectory, factor: f32, params: &TrackParams) -> Option<Rejection> {
    let pts = t.points();
    let n = pts.len() as f32;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (mx / n, my / n);
    let (vx, vy) = pts
        .iter()
        .fold((0.0f32, 0.0f32), |(a, b), p| (a + (p.0 - mx).powi(2), b + (p.1 - my).powi(2)));
    let sx = (vx / n).sqrt() * factor;
    let sy = (vy / n).sqrt() * factor;
    if sx < params.static_std && sy < params.static_std {
        return Some(Rejection::Static);
    }
    let steps: Vec<f32> = t.displacements.iter().map(|&(dx, dy)| dx.hypot(dy) * factor).collect();
    let total: f32 = steps.iter().sum();
    let longest = steps.iter().copied().fold(0.0, f32::max);
    if longest > params.max_step_fraction * total {
        return Some(Rejection::Erratic);
    }
    if total > params.max_length {
        return Some(Rejection::TooLong);
    }
    None
}

/// Drop static, erratic and overlong tracks; order is preserved.
pub fn prune(tracks: &[Trajectory], pyramid: &ScalePyramid, params: &TrackParams) -> Vec<Trajectory> {
    tracks
        .iter()
        .filter(|t| {
            let factor = pyramid
                .level(t.scale_index)
                .map(|l| l.factor)
                .unwrap_or_else(|| params.scale_step.powi(t.scale_index as i32) as f32);
            check_track(t, factor, params).is_none()
        })
        .copied()
        .collect()
}

/// Displacements divided by the summed step lengths, flattened `dx0, dy0, ...`.
pub fn shape_descriptor(t: &Trajectory) -> Result<[f32; SHAPE_DIM]> {
    let total: f64 = t.displacements.iter().map(|&(dx, dy)| (dx as f64).hypot(dy as f64)).sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("trajectory has zero total displacement".into()));
    }
    let mut out = [0.0f32; SHAPE_DIM];
    for (i, &(dx, dy)) in t.displacements.iter().enumerate() {
        out[2 * i] = (dx as f64 / total) as f32;
        out[2 * i + 1] = (dy as f64 / total) as f32;
    }
    Ok(out)
}

/// Streaming tracker: seeds on every frame that can still complete a full
/// track, advances all active tracks, and collects finished ones in seed order.
pub struct DenseTracker {
    pyramid: ScalePyramid,
    params: TrackParams,
    active: Vec<ActiveTrack>,
    finished: Vec<(u64, Trajectory)>,
    next_seq: u64,
}

struct ActiveTrack {
    seq: u64,
    start_frame: u32,
    level: usize,
    points: Vec<(f32, f32)>,
}

impl DenseTracker {
    pub fn new(pyramid: ScalePyramid, params: TrackParams) -> Self {
        Self { pyramid, params, active: Vec::new(), finished: Vec::new(), next_seq: 0 }
    }

    pub fn pyramid(&self) -> &ScalePyramid {
        &self.pyramid
    }

    /// Process frame `frame_index`. `planes` are the frame at each pyramid
    /// level; `flows` the flow to the next frame at each level. Seeds are
    /// only placed when `seed` is set.
    pub fn step(&mut self, frame_index: u32, planes: &[Plane], flows: &[FlowField], seed: bool) {
        if seed {
            for (li, level) in self.pyramid.levels.iter().enumerate() {
                let heads: Vec<(f32, f32)> = self
                    .active
                    .iter()
                    .filter(|t| t.level == li)
                    .map(|t| *t.points.last().unwrap())
                    .collect();
                for s in seed_level(&planes[li], level, &heads, &self.params) {
                    self.active.push(ActiveTrack {
                        seq: self.next_seq,
                        start_frame: frame_index,
                        level: li,
                        points: vec![(s.point.0 * level.factor, s.point.1 * level.factor)],
                    });
                    self.next_seq += 1;
                }
            }
        }
        let radius = self.params.median_radius;
        let mut still_active = Vec::with_capacity(self.active.len());
        for mut t in self.active.drain(..) {
            let Some(q) = advance(*t.points.last().unwrap(), &flows[t.level], radius) else {
                continue;
            };
            t.points.push(q);
            if t.points.len() == TRACK_LENGTH + 1 {
                let level = &self.pyramid.levels[t.level];
                self.finished.push((t.seq, finish_track(t.start_frame, level, &t.points)));
            } else {
                still_active.push(t);
            }
        }
        self.active = still_active;
    }

    /// Raw (unpruned) finished trajectories in seed order.
    pub fn finish(mut self) -> Vec<Trajectory> {
        self.finished.sort_by_key(|(seq, _)| *seq);
        self.finished.into_iter().map(|(_, t)| t).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track_from(displacements: [(f32, f32); TRACK_LENGTH]) -> Trajectory {
        Trajectory { start_frame: 0, start_point: (50.0, 50.0), scale_index: 0, displacements }
    }

    fn no_texture() -> TrackParams {
        TrackParams { texture_quality: None, ..Default::default() }
    }

    #[test]
    fn pyramid_drops_small_scales() {
        let p = ScalePyramid::new(320, 240, &TrackParams::default());
        // 240 * 0.7071^s >= 32 for s <= 5
        assert_eq!(p.levels.len(), 6);
        assert_eq!((p.levels[1].width, p.levels[1].height), (226, 170));
        let small = ScalePyramid::new(128, 128, &TrackParams::default());
        assert_eq!(small.levels.iter().map(|l| l.width).collect::<Vec<_>>(), vec![128, 91, 64, 45, 32]);
    }

    #[test]
    fn grid_seeds_without_texture_filter() {
        let plane = Plane::new(320, 240);
        let level = ScalePyramid::new(320, 240, &no_texture()).levels[0];
        let seeds = seed_level(&plane, &level, &[], &no_texture());
        assert_eq!(seeds.len(), 64 * 48);
        assert_eq!(seeds[0].point, (2.0, 2.0));
        assert_eq!(seeds[1].point, (7.0, 2.0));
        assert_eq!(seeds.last().unwrap().point, (317.0, 237.0));
    }

    #[test]
    fn constant_frame_has_no_seeds() {
        let plane = Plane::from_vec(64, 64, vec![128.0; 64 * 64]);
        let p = ScalePyramid::new(64, 64, &TrackParams::default());
        assert!(seed_points(&plane, &p, &[], &TrackParams::default()).is_empty());
    }

    #[test]
    fn occupied_cell_is_not_reseeded() {
        let plane = Plane::new(40, 40);
        let level = ScalePyramid::new(40, 40, &no_texture()).levels[0];
        let seeds = seed_level(&plane, &level, &[(12.0, 12.0)], &no_texture());
        assert_eq!(seeds.len(), 63);
        assert!(!seeds.iter().any(|s| (10.0..15.0).contains(&s.point.0) && (10.0..15.0).contains(&s.point.1)));
    }

    #[test]
    fn uniform_flow_tracks_translate() {
        let params = no_texture();
        let pyramid = ScalePyramid::new(64, 64, &params);
        let flows = vec![FlowField::constant(64, 64, 1.0, 0.0); TRACK_LENGTH];
        let seeds = vec![Seed { point: (10.0, 20.0), scale_index: 0 }, Seed { point: (10.0, 20.0), scale_index: 2 }];
        let tracks = track(&seeds, 0, &flows, &pyramid, &params).unwrap();
        assert_eq!(tracks.len(), 2);
        for t in &tracks {
            for &(dx, dy) in &t.displacements {
                assert!((dx - 1.0).abs() < 1e-4 && dy.abs() < 1e-4, "{dx} {dy}");
            }
        }
    }

    #[test]
    fn zero_flow_tracks_are_static() {
        let params = no_texture();
        let pyramid = ScalePyramid::new(64, 64, &params);
        let flows = vec![FlowField::zeros(64, 64); TRACK_LENGTH];
        let seeds = vec![Seed { point: (30.0, 30.0), scale_index: 0 }];
        let tracks = track(&seeds, 0, &flows, &pyramid, &params).unwrap();
        assert_eq!(tracks.len(), 1);
        assert!(tracks[0].displacements.iter().all(|&d| d == (0.0, 0.0)));
        assert!(prune(&tracks, &pyramid, &params).is_empty());
    }

    #[test]
    fn track_leaving_frame_is_discarded() {
        let params = no_texture();
        let pyramid = ScalePyramid::new(64, 64, &params);
        let flows = vec![FlowField::constant(64, 64, 1.0, 0.0); TRACK_LENGTH];
        let seeds = vec![Seed { point: (61.0, 30.0), scale_index: 0 }];
        assert!(track(&seeds, 0, &flows, &pyramid, &params).unwrap().is_empty());
    }

    #[test]
    fn too_few_flows_is_error() {
        let params = no_texture();
        let pyramid = ScalePyramid::new(64, 64, &params);
        let flows = vec![FlowField::zeros(64, 64); 3];
        assert!(track(&[], 0, &flows, &pyramid, &params).is_err());
    }

    #[test]
    fn prune_rules() {
        let params = TrackParams::default();
        let pyramid = ScalePyramid::new(128, 128, &params);
        let zero = track_from([(0.0, 0.0); TRACK_LENGTH]);
        let uniform = track_from([(1.0, 0.0); TRACK_LENGTH]);
        let mut jump = [(1.0, 0.0); TRACK_LENGTH];
        jump[7] = (40.0, 0.0);
        let jumpy = track_from(jump);
        // 40 > 0.7 * (40 + 14) = 37.8
        assert_eq!(check_track(&jumpy, 1.0, &params), Some(Rejection::Erratic));
        assert_eq!(check_track(&zero, 1.0, &params), Some(Rejection::Static));
        let kept = prune(&[zero, uniform, jumpy], &pyramid, &params);
        assert_eq!(kept, vec![uniform]);
        let long = track_from([(4.0, 0.0); TRACK_LENGTH]);
        assert_eq!(check_track(&long, 1.0, &params), Some(Rejection::TooLong));
    }

    #[test]
    fn shape_descriptor_examples() {
        let d = shape_descriptor(&track_from([(1.0, 0.0); TRACK_LENGTH])).unwrap();
        for i in 0..TRACK_LENGTH {
            assert!((d[2 * i] - 1.0 / 15.0).abs() < 1e-7);
            assert_eq!(d[2 * i + 1], 0.0);
        }
        let d = shape_descriptor(&track_from([(0.0, 2.0); TRACK_LENGTH])).unwrap();
        assert!((d[1] - 1.0 / 15.0).abs() < 1e-7);

        let mut steps = [(0.0, 0.0); TRACK_LENGTH];
        steps[0] = (3.0, 4.0);
        let d = shape_descriptor(&track_from(steps)).unwrap();
        assert!((d[0] - 0.6).abs() < 1e-7 && (d[1] - 0.8).abs() < 1e-7);
        assert!(d[2..].iter().all(|&v| v == 0.0));

        assert!(shape_descriptor(&track_from([(0.0, 0.0); TRACK_LENGTH])).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_track() -> impl Strategy<Value = Trajectory> {
            proptest::collection::vec((-5.0f32..5.0, -5.0f32..5.0), TRACK_LENGTH).prop_map(|v| {
                let mut d = [(0.0, 0.0); TRACK_LENGTH];
                d.copy_from_slice(&v);
                track_from(d)
            })
        }

        proptest! {
            #[test]
            fn shape_is_scale_invariant_and_normalized(t in arb_track(), k in 0.1f32..10.0) {
                prop_assume!(t.total_length() > 1e-3);
                let mut scaled = t;
                for d in scaled.displacements.iter_mut() {
                    *d = (d.0 * k, d.1 * k);
                }
                let a = shape_descriptor(&t).unwrap();
                let b = shape_descriptor(&scaled).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-5);
                }
                let norm_sum: f32 = a.chunks(2).map(|p| p[0].hypot(p[1])).sum();
                prop_assert!((norm_sum - 1.0).abs() < 1e-5);
            }

            #[test]
            fn prune_is_idempotent(tracks in proptest::collection::vec(arb_track(), 0..20)) {
                let params = TrackParams::default();
                let pyramid = ScalePyramid::new(128, 128, &params);
                let once = prune(&tracks, &pyramid, &params);
                prop_assert_eq!(prune(&once, &pyramid, &params), once);
            }
        }
    }
}
