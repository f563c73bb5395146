//! Per-video extraction: flow, dense tracking, description and the
//! start-frame saliency maps used by the sampling strategies.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptors::{describe, DescriptorType, VideoLevels, VolumeConfig};
use crate::encoding::FeatureSet;
use crate::error::{Error, Result};
use crate::imgproc::Plane;
use crate::media_io::{read_descriptors, read_trajectories, write_descriptors, write_trajectories, Frame};
use crate::optical_flow::{flow_between, FlowField, FlowParams, PreparedFrame};
use crate::proposals::{raw_scores, ScoreParams};
use crate::saliency::{build_saliency, voters, SaliencyMap};
use crate::trajectories::{prune, DenseTracker, ScalePyramid, TrackParams, Trajectory, TRACK_LENGTH};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractParams {
    pub flow: FlowParams,
    pub track: TrackParams,
    pub volume: VolumeConfig,
}

/// Grayscale planes and full-resolution flows of a clip.
pub struct VideoFlow {
    pub planes: Vec<Plane>,
    /// `flows[f]` maps frame `f` to `f + 1`.
    pub flows: Vec<FlowField>,
}

pub fn compute_video_flow(frames: &[Frame], params: &FlowParams) -> Result<VideoFlow> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 frames, got {}", frames.len())));
    }
    let planes: Vec<Plane> = frames.iter().map(Frame::to_plane).collect();
    let prepared: Vec<PreparedFrame> = planes.par_iter().map(|p| PreparedFrame::from_plane(p, params)).collect();
    let flows = prepared
        .par_windows(2)
        .map(|w| flow_between(&w[0], &w[1], params))
        .collect::<Result<Vec<_>>>()?;
    Ok(VideoFlow { planes, flows })
}

#[derive(Debug, Clone)]
pub struct VideoFeatures {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    /// Trajectories before pruning.
    pub raw_count: usize,
    /// Pruned trajectories in seed order.
    pub trajectories: Vec<Trajectory>,
    /// One descriptor row per trajectory.
    pub features: FeatureSet,
}

/// Track every frame that can still complete a full trajectory, prune and
/// describe the survivors.
pub fn extract_features(video: &VideoFlow, params: &ExtractParams) -> Result<VideoFeatures> {
    let first = &video.planes[0];
    let (width, height) = (first.width, first.height);
    let n = video.planes.len();
    let pyramid = ScalePyramid::new(width, height, &params.track);
    if pyramid.levels.is_empty() {
        return Err(Error::Dimension(format!("{width}x{height} is too small for any tracking scale")));
    }
    let planes: Vec<Vec<Plane>> = video.planes.par_iter().map(|p| pyramid.resize_plane(p)).collect();
    let flows: Vec<Vec<FlowField>> = video.flows.par_iter().map(|f| pyramid.resize_flow(f)).collect();
    let mut tracker = DenseTracker::new(pyramid.clone(), params.track);
    for f in 0..n - 1 {
        tracker.step(f as u32, &planes[f], &flows[f], f + TRACK_LENGTH < n);
    }
    let raw = tracker.finish();
    let trajectories = prune(&raw, &pyramid, &params.track);
    let levels = VideoLevels { pyramid: &pyramid, planes: &planes, flows: &flows };
    let sets = trajectories
        .par_iter()
        .map(|t| describe(t, &levels, &params.volume))
        .collect::<Result<Vec<_>>>()?;
    let features = if sets.is_empty() {
        FeatureSet::new(crate::descriptors::DescriptorType::ALL.map(|t| t.dim(&params.volume)))
    } else {
        FeatureSet::from_sets(&sets)
    };
    Ok(VideoFeatures { width, height, frame_count: n, raw_count: raw.len(), trajectories, features })
}

pub const TRAJECTORY_FILE: &str = "trajectories.trj";

/// Path of the cache file for descriptor type `t` inside a feature directory.
pub fn descriptor_path(dir: &Path, t: DescriptorType) -> std::path::PathBuf {
    dir.join(format!("{}.dsc", t.name()))
}

/// Write trajectories and one descriptor file per type into `dir`.
pub fn write_feature_dir(dir: &Path, trajectories: &[Trajectory], features: &FeatureSet) -> Result<()> {
    if trajectories.len() != features.len() {
        return Err(Error::Dimension(format!("{} trajectories but {} descriptor rows", trajectories.len(), features.len())));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_trajectories(&dir.join(TRAJECTORY_FILE), trajectories)?;
    for t in DescriptorType::ALL {
        write_descriptors(&descriptor_path(dir, t), features.get(t))?;
    }
    Ok(())
}

pub fn read_feature_dir(dir: &Path) -> Result<(Vec<Trajectory>, FeatureSet)> {
    let trajectories = read_trajectories(&dir.join(TRAJECTORY_FILE))?;
    let matrices = DescriptorType::ALL
        .iter()
        .map(|&t| read_descriptors(&descriptor_path(dir, t)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(m) = matrices.iter().find(|m| m.len() != trajectories.len()) {
        return Err(Error::Dimension(format!("{} trajectories but {} descriptor rows", trajectories.len(), m.len())));
    }
    Ok((trajectories, FeatureSet { matrices }))
}

/// Object-only and fused saliency maps of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSaliency {
    pub edgebox: SaliencyMap,
    pub fusion: SaliencyMap,
}

/// Both saliency maps for frame `f`, scored once and ranked twice.
pub fn frame_saliency(video: &VideoFlow, f: usize, params: &ScoreParams) -> Result<FrameSaliency> {
    params.validate()?;
    let plane = &video.planes[f];
    let flow = video.flows.get(f).or_else(|| video.flows.last());
    let scores = raw_scores(plane, flow, params);
    let map = |alpha: f64, beta: f64| {
        let ranked = scores.fused(alpha, beta);
        let top = voters(&ranked, params.top_n_votes);
        build_saliency(&top, plane.width, plane.height, f as u32, params.weighted_votes)
    };
    Ok(FrameSaliency { edgebox: map(1.0, 0.0), fusion: map(params.alpha, params.beta) })
}

/// Saliency maps for every distinct start frame of `trajectories`.
pub fn start_frame_saliency(
    video: &VideoFlow,
    trajectories: &[Trajectory],
    params: &ScoreParams,
) -> Result<HashMap<u32, FrameSaliency>> {
    let frames: BTreeSet<u32> = trajectories.iter().map(|t| t.start_frame).collect();
    let frames: Vec<u32> = frames.into_iter().collect();
    let maps = frames
        .par_iter()
        .map(|&f| frame_saliency(video, f as usize, params).map(|m| (f, m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(maps.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moving_square_clip(n: usize) -> Vec<Frame> {
        let mut rng = crate::rng::SplitMix64::new(5);
        let tex: Vec<u8> = (0..20 * 20).map(|_| rng.below(256) as u8).collect();
        (0..n)
            .map(|f| {
                let data = (0..64 * 64)
                    .map(|i| {
                        let (x, y) = (i % 64, i / 64);
                        let (sx, sy) = (x as i64 - 10 - f as i64, y as i64 - 20);
                        if (0..20).contains(&sx) && (0..20).contains(&sy) {
                            tex[sy as usize * 20 + sx as usize]
                        } else {
                            90
                        }
                    })
                    .collect();
                Frame::gray(64, 64, data, f).unwrap()
            })
            .collect()
    }

    #[test]
    fn extraction_yields_moving_tracks() {
        let frames = moving_square_clip(18);
        let video = compute_video_flow(&frames, &FlowParams::default()).unwrap();
        assert_eq!(video.flows.len(), 17);
        let feats = extract_features(&video, &ExtractParams::default()).unwrap();
        assert!(!feats.trajectories.is_empty());
        assert_eq!(feats.features.len(), feats.trajectories.len());
        assert!(feats.trajectories.iter().all(|t| t.start_frame <= 2));
        let mean_dx: f32 = feats.trajectories.iter().map(|t| t.displacements[0].0).sum::<f32>() / feats.trajectories.len() as f32;
        assert!(mean_dx > 0.5, "{mean_dx}");
    }

    #[test]
    fn feature_dir_round_trip() {
        let video = compute_video_flow(&moving_square_clip(17), &FlowParams::default()).unwrap();
        let feats = extract_features(&video, &ExtractParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_feature_dir(dir.path(), &feats.trajectories, &feats.features).unwrap();
        let (t, f) = read_feature_dir(dir.path()).unwrap();
        assert_eq!(t, feats.trajectories);
        assert_eq!(f, feats.features);
    }

    #[test]
    fn too_short_clip() {
        assert!(compute_video_flow(&moving_square_clip(1), &FlowParams::default()).is_err());
    }
}
