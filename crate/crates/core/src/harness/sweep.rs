use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::classifier::{LinearModel, SvmParams};
use crate::descriptors::DescriptorType;
use crate::encoding::{CodebookSet, FeatureSet};
use crate::error::{Error, Result};
use crate::media_io::{load_annotations, load_sequence, AnnotationBox};
use crate::pipeline::{compute_video_flow, extract_features, start_frame_saliency};
use crate::rng::SplitMix64;
use crate::saliency::{gt_mask, SamplingDecision, Strategy};
use crate::trajectories::Trajectory;

use super::config::ExperimentConfig;
use super::corpus::{read_split, Corpus};

/// Descriptor floats plus the trajectory record, in bytes.
pub const RECORD_BYTES: u64 = 426 * 4 + 76;

pub const RESULTS_HEADER: &str = "strategy,param,split,accuracy,retained_fraction,est_memory_bytes";

/// Everything the sampling strategies need from one video.
#[derive(Debug, Clone)]
pub struct CachedVideo {
    pub id: String,
    pub class: u32,
    pub trajectories: Vec<Trajectory>,
    pub features: FeatureSet,
    /// Saliency at each trajectory's start pixel.
    pub edgebox_saliency: Vec<f32>,
    pub fusion_saliency: Vec<f32>,
    pub in_annotation: Vec<bool>,
}

fn stage<T>(r: Result<T>, name: &'static str, video: &str) -> Result<T> {
    r.map_err(|e| e.at_stage(name, video))
}

/// Extract features and start-pixel saliency for one corpus video.
pub fn process_video(corpus: &Corpus, index: usize, config: &ExperimentConfig) -> Result<CachedVideo> {
    let entry = &corpus.videos[index];
    let id = entry.id.as_str();
    let frames = stage(load_sequence(&corpus.video_dir(id)), "load", id)?;
    let video = stage(compute_video_flow(&frames, &config.extract.flow), "flow", id)?;
    let feats = stage(extract_features(&video, &config.extract), "extract", id)?;
    let maps = stage(start_frame_saliency(&video, &feats.trajectories, &config.score_params), "saliency", id)?;
    let ann_path = corpus.annotation_path(id);
    let annotations: Vec<AnnotationBox> = if ann_path.is_file() {
        stage(load_annotations(&ann_path, feats.width as u32, feats.height as u32), "annotations", id)?
    } else {
        Vec::new()
    };
    let (edgebox_saliency, fusion_saliency) = feats
        .trajectories
        .iter()
        .map(|t| {
            let m = &maps[&t.start_frame];
            (m.edgebox.at_point(t.start_point), m.fusion.at_point(t.start_point))
        })
        .unzip();
    let in_annotation = gt_mask(&feats.trajectories, &annotations);
    let class = corpus.class_index(&entry.label).expect("label comes from the corpus");
    Ok(CachedVideo {
        id: id.to_string(),
        class,
        trajectories: feats.trajectories,
        features: feats.features,
        edgebox_saliency,
        fusion_saliency,
        in_annotation,
    })
}

/// A sampling decision plus how it is reported.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub name: String,
    pub param: String,
    pub decision: SamplingDecision,
}

impl Plan {
    pub fn new(decision: SamplingDecision) -> Self {
        let param = match decision {
            SamplingDecision::Random { rate, .. } => format!("{rate}"),
            SamplingDecision::EdgeBox { sigma } | SamplingDecision::FusionEdgeBox { sigma } => format!("{sigma}"),
            _ => String::new(),
        };
        Self { name: decision.strategy().name().to_string(), param, decision }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub strategy: String,
    pub param: String,
    pub split: String,
    pub accuracy: f64,
    pub retained_fraction: f64,
    pub est_memory_bytes: u64,
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{}",
            self.strategy, self.param, self.split, self.accuracy, self.retained_fraction, self.est_memory_bytes
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub accuracy: f64,
    pub retained: usize,
    pub total: usize,
    /// `confusion[true][predicted]` over test videos.
    pub confusion: Vec<Vec<u32>>,
    /// SHA-256 of the features the codebooks were fit on.
    pub fit_hash: String,
}

/// The extracted corpus, ready for any number of sampling plans.
pub struct PreparedCorpus {
    pub corpus: Corpus,
    pub config: ExperimentConfig,
    pub videos: Vec<CachedVideo>,
    /// `(train, test)` video indices per split.
    pub splits: Vec<(Vec<usize>, Vec<usize>)>,
}

fn hash_features(fs: &FeatureSet) -> String {
    let mut h = Sha256::new();
    for m in &fs.matrices {
        h.update((m.dim as u32).to_le_bytes());
        for v in &m.data {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl PreparedCorpus {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let corpus = Corpus::open(&config.corpus_root)?;
        let mut splits = Vec::new();
        for (k, (train, test)) in config.split_paths().iter().enumerate() {
            let resolve = |ids: Vec<String>| -> Result<Vec<usize>> {
                ids.iter()
                    .map(|id| corpus.index_of(id).ok_or_else(|| Error::Config(format!("split {} names unknown video {id}", k + 1))))
                    .collect()
            };
            let tr = resolve(read_split(train)?)?;
            let te = resolve(read_split(test)?)?;
            if let Some(v) = tr.iter().find(|v| te.contains(v)) {
                return Err(Error::Config(format!("video {} is in both train and test of split {}", corpus.videos[*v].id, k + 1)));
            }
            splits.push((tr, te));
        }
        let videos = (0..corpus.videos.len())
            .into_par_iter()
            .map(|i| process_video(&corpus, i, config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { corpus, config: config.clone(), videos, splits })
    }

    /// Keep-mask per video for a decision.
    pub fn masks(&self, decision: &SamplingDecision) -> Vec<Vec<bool>> {
        self.videos
            .iter()
            .enumerate()
            .map(|(i, v)| match *decision {
                SamplingDecision::Dense => vec![true; v.trajectories.len()],
                SamplingDecision::Random { rate, seed } => {
                    let video_seed = SplitMix64::derive(seed, i as u64).next_u64();
                    crate::saliency::random_mask(v.trajectories.len(), rate, video_seed)
                }
                SamplingDecision::EdgeBox { sigma } => v.edgebox_saliency.iter().map(|&s| s >= sigma).collect(),
                SamplingDecision::FusionEdgeBox { sigma } => v.fusion_saliency.iter().map(|&s| s >= sigma).collect(),
                SamplingDecision::Gt => v.in_annotation.clone(),
            })
            .collect()
    }

    /// Kept over total trajectories across the whole corpus.
    pub fn retained_fraction(&self, decision: &SamplingDecision) -> f64 {
        let masks = self.masks(decision);
        let kept: usize = masks.iter().map(|m| m.iter().filter(|&&k| k).count()).sum();
        let total: usize = masks.iter().map(Vec::len).sum();
        if total == 0 {
            0.0
        } else {
            kept as f64 / total as f64
        }
    }

    /// The threshold on a 0.005 grid whose corpus-wide retained fraction is
    /// closest to `target` (lowest threshold on ties).
    pub fn match_sigma(&self, strategy: Strategy, target: f64) -> Result<f32> {
        let mut best = (f64::INFINITY, 0.0f32);
        for step in 0..=200 {
            let sigma = step as f32 * 0.005;
            let d = SamplingDecision::new(strategy, Some(sigma), None, None)?;
            let diff = (self.retained_fraction(&d) - target).abs();
            if diff < best.0 {
                best = (diff, sigma);
            }
        }
        Ok(best.1)
    }

    fn selected(&self, video: usize, mask: &[bool]) -> FeatureSet {
        let idx: Vec<usize> = mask.iter().enumerate().filter_map(|(i, &k)| k.then_some(i)).collect();
        self.videos[video].features.select(&idx)
    }

    pub fn run_split(&self, masks: &[Vec<bool>], split: usize) -> Result<SplitOutcome> {
        let (train, test) = &self.splits[split];
        let dims = DescriptorType::ALL.map(|t| t.dim(&self.config.extract.volume));
        let per_video: HashMap<usize, FeatureSet> =
            train.iter().chain(test).map(|&v| (v, self.selected(v, &masks[v]))).collect();

        let mut fit_set = FeatureSet::new(dims);
        for v in train {
            fit_set.extend(&per_video[v]);
        }
        // leakage guard: the fitting set is rebuilt from train ids alone
        let mut train_only = FeatureSet::new(dims);
        for v in train.iter().filter(|v| !test.contains(v)) {
            train_only.extend(&self.selected(*v, &masks[*v]));
        }
        let fit_hash = hash_features(&fit_set);
        assert_eq!(fit_hash, hash_features(&train_only), "codebook features include test videos");

        let label = format!("split {}", split + 1);
        let fit = CodebookSet::fit(&fit_set, &self.config.encoding).map_err(|e| e.at_stage("codebook", &label))?;
        let encode = |v: &usize| -> Result<Vec<f64>> {
            fit.set.encode(&per_video[v]).map(|fv| fv.values).map_err(|e| e.at_stage("encode", &self.videos[*v].id))
        };
        let x_train = train.par_iter().map(encode).collect::<Result<Vec<_>>>()?;
        let x_test = test.par_iter().map(encode).collect::<Result<Vec<_>>>()?;
        let y_train: Vec<u32> = train.iter().map(|&v| self.videos[v].class).collect();
        let params = SvmParams { c: self.config.c, ..Default::default() };
        let (model, _) = LinearModel::train(&x_train, &y_train, &params).map_err(|e| e.at_stage("train", &label))?;

        let classes = self.corpus.classes.len();
        let mut confusion = vec![vec![0u32; classes]; classes];
        let mut correct = 0;
        for (x, &v) in x_test.iter().zip(test) {
            let pred = model.predict(x)?;
            let truth = self.videos[v].class;
            confusion[truth as usize][pred as usize] += 1;
            correct += usize::from(pred == truth);
        }
        let accuracy = if test.is_empty() { 0.0 } else { correct as f64 / test.len() as f64 };
        let videos: Vec<usize> = train.iter().chain(test).copied().collect();
        let retained = videos.iter().map(|&v| masks[v].iter().filter(|&&k| k).count()).sum();
        let total = videos.iter().map(|&v| masks[v].len()).sum();
        Ok(SplitOutcome { accuracy, retained, total, confusion, fit_hash })
    }

    /// One row per split for `plan`, plus the outcomes.
    pub fn run_plan(&self, plan: &Plan) -> Result<(Vec<ResultRow>, Vec<SplitOutcome>)> {
        let masks = self.masks(&plan.decision);
        let mut rows = Vec::new();
        let mut outcomes = Vec::new();
        for s in 0..self.splits.len() {
            let o = self.run_split(&masks, s)?;
            rows.push(ResultRow {
                strategy: plan.name.clone(),
                param: plan.param.clone(),
                split: (s + 1).to_string(),
                accuracy: o.accuracy,
                retained_fraction: if o.total == 0 { 0.0 } else { o.retained as f64 / o.total as f64 },
                est_memory_bytes: o.retained as u64 * RECORD_BYTES,
            });
            outcomes.push(o);
        }
        Ok((rows, outcomes))
    }

    /// The configured strategy and parameter grid, in config order.
    pub fn standard_plans(&self) -> Result<Vec<Plan>> {
        let cfg = &self.config;
        let mut plans = Vec::new();
        for &s in &cfg.strategies {
            match s {
                Strategy::Dense | Strategy::Gt => plans.push(Plan::new(SamplingDecision::new(s, None, None, None)?)),
                Strategy::Random => {
                    for &r in &cfg.rates {
                        plans.push(Plan::new(SamplingDecision::new(s, None, Some(r), Some(cfg.random_seed))?));
                    }
                }
                Strategy::EdgeBox | Strategy::FusionEdgeBox => {
                    for &sigma in &cfg.sigmas {
                        plans.push(Plan::new(SamplingDecision::new(s, Some(sigma), None, None)?));
                    }
                }
            }
        }
        if let Some(sigma) = cfg.matched_sigma {
            plans.extend(self.matched_plans(sigma)?);
        }
        Ok(plans)
    }

    /// EdgeBox and random runs at the retained fraction of FusionEdgeBox at
    /// `sigma`, and random at the ground-truth strategy's retained fraction.
    pub fn matched_plans(&self, sigma: f32) -> Result<Vec<Plan>> {
        let fusion = SamplingDecision::FusionEdgeBox { sigma };
        let target = self.retained_fraction(&fusion);
        let edge_sigma = self.match_sigma(Strategy::EdgeBox, target)?;
        let gt_rate = self.retained_fraction(&SamplingDecision::Gt);
        let seed = self.config.random_seed;
        let round = |r: f64| (r * 1e4).round() / 1e4;
        Ok(vec![
            Plan::new(fusion).named("fusionedgebox_ref"),
            Plan::new(SamplingDecision::EdgeBox { sigma: edge_sigma }).named("edgebox_matched"),
            Plan::new(SamplingDecision::Random { rate: round(target), seed }).named("random_matched"),
            Plan::new(SamplingDecision::Random { rate: round(gt_rate), seed }).named("random_gt_matched"),
        ])
    }
}

/// Per-split rows followed by one `mean` row per plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResults {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<ResultRow>,
    /// `(plan name, param, split, confusion)`
    pub confusions: Vec<(String, String, usize, Vec<Vec<u32>>)>,
    pub fit_hashes: Vec<String>,
}

fn mean_row(rows: &[ResultRow]) -> ResultRow {
    let n = rows.len() as f64;
    ResultRow {
        strategy: rows[0].strategy.clone(),
        param: rows[0].param.clone(),
        split: "mean".into(),
        accuracy: rows.iter().map(|r| r.accuracy).sum::<f64>() / n,
        retained_fraction: rows.iter().map(|r| r.retained_fraction).sum::<f64>() / n,
        est_memory_bytes: (rows.iter().map(|r| r.est_memory_bytes as f64).sum::<f64>() / n).round() as u64,
    }
}

impl PreparedCorpus {
    pub fn run(&self, plans: &[Plan]) -> Result<SweepResults> {
        let mut out = SweepResults { rows: Vec::new(), summary: Vec::new(), confusions: Vec::new(), fit_hashes: Vec::new() };
        for plan in plans {
            let (rows, outcomes) = self.run_plan(plan)?;
            out.summary.push(mean_row(&rows));
            for (s, o) in outcomes.into_iter().enumerate() {
                out.confusions.push((plan.name.clone(), plan.param.clone(), s + 1, o.confusion));
                out.fit_hashes.push(o.fit_hash);
            }
            out.rows.extend(rows);
        }
        Ok(out)
    }
}

impl SweepResults {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(RESULTS_HEADER);
        s.push('\n');
        for r in self.rows.iter().chain(&self.summary) {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }

    /// `strategy,param,split,true,predicted,count` over non-empty cells.
    pub fn confusion_csv(&self, classes: &[String]) -> String {
        let mut s = String::from("strategy,param,split,true,predicted,count\n");
        for (name, param, split, m) in &self.confusions {
            for (t, row) in m.iter().enumerate() {
                for (p, &c) in row.iter().enumerate() {
                    let _ = writeln!(s, "{name},{param},{split},{},{},{c}", classes[t], classes[p]);
                }
            }
        }
        s
    }

    pub fn find(&self, strategy: &str, param: &str) -> Option<&ResultRow> {
        self.summary.iter().find(|r| r.strategy == strategy && r.param == param)
    }
}

/// Prepare the corpus, run every configured plan and write the results CSV
/// plus a `.confusion.csv` next to it when `out` is given.
pub fn run_sweep(config: &ExperimentConfig, out: Option<&Path>) -> Result<(PreparedCorpus, SweepResults)> {
    let prepared = PreparedCorpus::prepare(config)?;
    let plans = prepared.standard_plans()?;
    let results = prepared.run(&plans)?;
    if let Some(path) = out.or(config.output.as_deref()) {
        fs::write(path, results.to_csv()).map_err(|e| Error::io(path, e))?;
        let conf = path.with_extension("confusion.csv");
        fs::write(&conf, results.confusion_csv(&prepared.corpus.classes)).map_err(|e| Error::io(&conf, e))?;
    }
    Ok((prepared, results))
}
