//! Pixel-voting saliency maps and the trajectory sampling strategies.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media_io::AnnotationBox;
use crate::proposals::ProposalBox;
use crate::rng::SplitMix64;
use crate::trajectories::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, each in `[0, 1]`.
    pub values: Vec<f32>,
    pub frame_index: u32,
}

impl SaliencyMap {
    pub fn zeros(width: usize, height: usize, frame_index: u32) -> Self {
        Self { width, height, values: vec![0.0; width * height], frame_index }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Value at the nearest pixel to `p`, clamped into the frame.
    pub fn at_point(&self, p: (f32, f32)) -> f32 {
        let x = (p.0.round().max(0.0) as usize).min(self.width - 1);
        let y = (p.1.round().max(0.0) as usize).min(self.height - 1);
        self.get(x, y)
    }
}

/// The highest-ranked `top_n` boxes with a positive score.
pub fn voters(ranked: &[ProposalBox], top_n: usize) -> Vec<ProposalBox> {
    ranked.iter().filter(|b| b.s_fusion > 0.0).take(top_n).copied().collect()
}

/// One vote per box for every covered pixel (or the box's fused score when
/// `weighted`), normalized by the largest count.
pub fn build_saliency(boxes: &[ProposalBox], width: usize, height: usize, frame_index: u32, weighted: bool) -> SaliencyMap {
    // 2D difference array: O(boxes + pixels)
    let (w1, h1) = (width + 1, height + 1);
    let mut diff = vec![0.0f64; w1 * h1];
    for b in boxes {
        let x0 = (b.rect.x as usize).min(width);
        let y0 = (b.rect.y as usize).min(height);
        let x1 = (b.rect.x as usize + b.rect.w as usize).min(width);
        let y1 = (b.rect.y as usize + b.rect.h as usize).min(height);
        if x0 >= x1 || y0 >= y1 {
            continue;
        }
        let v = if weighted { b.s_fusion } else { 1.0 };
        diff[y0 * w1 + x0] += v;
        diff[y0 * w1 + x1] -= v;
        diff[y1 * w1 + x0] -= v;
        diff[y1 * w1 + x1] += v;
    }
    let mut counts = vec![0.0f64; width * height];
    for y in 0..height {
        let mut row = 0.0;
        for x in 0..width {
            row += diff[y * w1 + x];
            let above = if y > 0 { counts[(y - 1) * width + x] } else { 0.0 };
            counts[y * width + x] = row + above;
        }
    }
    let max = counts.iter().copied().fold(0.0, f64::max);
    let values = if max > 0.0 {
        counts.iter().map(|&c| ((c / max) as f32).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; width * height]
    };
    SaliencyMap { width, height, values, frame_index }
}

/// Keep-mask: start pixel saliency at least `sigma`.
pub fn saliency_mask(trajs: &[Trajectory], maps: &HashMap<u32, SaliencyMap>, sigma: f32) -> Result<Vec<bool>> {
    trajs
        .iter()
        .map(|t| {
            let map = maps.get(&t.start_frame).ok_or(Error::MissingSaliency(t.start_frame))?;
            Ok(map.at_point(t.start_point) >= sigma)
        })
        .collect()
}

/// Keep trajectories whose start pixel has saliency at least `sigma`.
pub fn sample_saliency(trajs: &[Trajectory], maps: &HashMap<u32, SaliencyMap>, sigma: f32) -> Result<Vec<Trajectory>> {
    Ok(apply_mask(trajs, &saliency_mask(trajs, maps, sigma)?))
}

fn apply_mask(trajs: &[Trajectory], mask: &[bool]) -> Vec<Trajectory> {
    mask.iter().zip(trajs).filter_map(|(&keep, t)| keep.then_some(*t)).collect()
}

/// Keep-mask for the random strategy: element `i` is drawn from the
/// `i`-th output of the stream `SplitMix64::derive(seed, 0)`. Deriving
/// decorrelates the streams of small consecutive seeds.
pub fn random_mask(n: usize, rate: f64, seed: u64) -> Vec<bool> {
    let mut rng = SplitMix64::derive(seed, 0);
    (0..n).map(|_| rng.next_f64() < rate).collect()
}

pub fn sample_random(trajs: &[Trajectory], rate: f64, seed: u64) -> Vec<Trajectory> {
    apply_mask(trajs, &random_mask(trajs.len(), rate, seed))
}

/// Keep-mask: start pixel inside an annotation box of the start frame.
pub fn gt_mask(trajs: &[Trajectory], annotations: &[AnnotationBox]) -> Vec<bool> {
    trajs
        .iter()
        .map(|t| {
            let (px, py) = t.start_pixel();
            annotations.iter().any(|a| a.frame_index == t.start_frame && a.contains(px, py))
        })
        .collect()
}

pub fn sample_gt(trajs: &[Trajectory], annotations: &[AnnotationBox]) -> Vec<Trajectory> {
    apply_mask(trajs, &gt_mask(trajs, annotations))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Dense,
    Random,
    EdgeBox,
    FusionEdgeBox,
    Gt,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Dense => "dense",
            Strategy::Random => "random",
            Strategy::EdgeBox => "edgebox",
            Strategy::FusionEdgeBox => "fusionedgebox",
            Strategy::Gt => "gt",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dense" => Ok(Strategy::Dense),
            "random" => Ok(Strategy::Random),
            "edgebox" => Ok(Strategy::EdgeBox),
            "fusionedgebox" | "fusion" => Ok(Strategy::FusionEdgeBox),
            "gt" => Ok(Strategy::Gt),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

/// A strategy together with exactly the parameters it uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingDecision {
    Dense,
    Random { rate: f64, seed: u64 },
    EdgeBox { sigma: f32 },
    FusionEdgeBox { sigma: f32 },
    Gt,
}

impl SamplingDecision {
    pub fn new(strategy: Strategy, sigma: Option<f32>, rate: Option<f64>, seed: Option<u64>) -> Result<Self> {
        let check = |v: f64, what: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must be in [0, 1], got {v}")))
            }
        };
        let need_sigma = || sigma.ok_or_else(|| Error::InvalidArgument(format!("{strategy} needs sigma")));
        match strategy {
            Strategy::Dense => Ok(Self::Dense),
            Strategy::Gt => Ok(Self::Gt),
            Strategy::Random => {
                let rate = rate.ok_or_else(|| Error::InvalidArgument("random needs rate".into()))?;
                check(rate, "rate")?;
                Ok(Self::Random { rate, seed: seed.unwrap_or(0) })
            }
            Strategy::EdgeBox => {
                let sigma = need_sigma()?;
                check(sigma as f64, "sigma")?;
                Ok(Self::EdgeBox { sigma })
            }
            Strategy::FusionEdgeBox => {
                let sigma = need_sigma()?;
                check(sigma as f64, "sigma")?;
                Ok(Self::FusionEdgeBox { sigma })
            }
        }
    }

    pub fn strategy(&self) -> Strategy {
        match self {
            Self::Dense => Strategy::Dense,
            Self::Random { .. } => Strategy::Random,
            Self::EdgeBox { .. } => Strategy::EdgeBox,
            Self::FusionEdgeBox { .. } => Strategy::FusionEdgeBox,
            Self::Gt => Strategy::Gt,
        }
    }

    /// The swept parameter (sigma or rate), if any.
    pub fn param(&self) -> Option<f64> {
        match *self {
            Self::Random { rate, .. } => Some(rate),
            Self::EdgeBox { sigma } | Self::FusionEdgeBox { sigma } => Some(sigma as f64),
            _ => None,
        }
    }
}
