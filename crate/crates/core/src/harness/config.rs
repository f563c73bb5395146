use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoding::EncodingParams;
use crate::error::{Error, Result};
use crate::pipeline::ExtractParams;
use crate::proposals::ScoreParams;
use crate::saliency::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFiles {
    pub train: PathBuf,
    pub test: PathBuf,
}

/// Sweep description, read from JSON. Relative paths resolve against the
/// config file's directory (or `corpus_root` for split files).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus_root: PathBuf,
    pub splits: Vec<SplitFiles>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f32>,
    #[serde(default = "default_rates")]
    pub rates: Vec<f64>,
    #[serde(default)]
    pub score_params: ScoreParams,
    #[serde(default)]
    pub extract: ExtractParams,
    #[serde(default)]
    pub encoding: EncodingParams,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub random_seed: u64,
    /// Also report EdgeBox and random runs matched to the retained fraction
    /// of FusionEdgeBox at this threshold.
    #[serde(default)]
    pub matched_sigma: Option<f32>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::Dense, Strategy::Random, Strategy::EdgeBox, Strategy::FusionEdgeBox, Strategy::Gt]
}

fn default_sigmas() -> Vec<f32> {
    vec![0.2, 0.4, 0.6]
}

fn default_rates() -> Vec<f64> {
    vec![0.8, 0.6, 0.4, 0.3]
}

fn default_c() -> f64 {
    crate::classifier::DEFAULT_C
}

impl ExperimentConfig {
    /// Defaults for a corpus laid out by [`super::synth::make_synthetic_corpus`].
    pub fn for_corpus(corpus_root: &Path, split_count: usize) -> Self {
        Self {
            corpus_root: corpus_root.to_path_buf(),
            splits: (1..=split_count)
                .map(|i| SplitFiles {
                    train: PathBuf::from(format!("splits/split{i}_train.txt")),
                    test: PathBuf::from(format!("splits/split{i}_test.txt")),
                })
                .collect(),
            strategies: default_strategies(),
            sigmas: default_sigmas(),
            rates: default_rates(),
            score_params: ScoreParams::default(),
            extract: ExtractParams::default(),
            encoding: EncodingParams::default(),
            c: default_c(),
            random_seed: 0,
            matched_sigma: None,
            output: None,
        }
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.corpus_root.is_relative() {
            cfg.corpus_root = base.join(&cfg.corpus_root);
        }
        if let Some(out) = &cfg.output {
            if out.is_relative() {
                cfg.output = Some(base.join(out));
            }
        }
        for s in &mut cfg.splits {
            for p in [&mut s.train, &mut s.test] {
                if p.is_relative() {
                    *p = cfg.corpus_root.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn split_paths(&self) -> Vec<(PathBuf, PathBuf)> {
        self.splits
            .iter()
            .map(|s| {
                let resolve = |p: &PathBuf| if p.is_relative() { self.corpus_root.join(p) } else { p.clone() };
                (resolve(&s.train), resolve(&s.test))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.corpus_root.is_dir() {
            return Err(Error::Config(format!("corpus root {} does not exist", self.corpus_root.display())));
        }
        if self.splits.is_empty() {
            return Err(Error::Config("at least one split is required".into()));
        }
        for (train, test) in self.split_paths() {
            for p in [train, test] {
                if !p.is_file() {
                    return Err(Error::Config(format!("split file {} does not exist", p.display())));
                }
            }
        }
        if let Some(s) = self.sigmas.iter().chain(self.matched_sigma.as_ref()).find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Config(format!("sigma {s} outside [0, 1]")));
        }
        if let Some(r) = self.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Config(format!("rate {r} outside [0, 1]")));
        }
        if self.c <= 0.0 {
            return Err(Error::Config("c must be positive".into()));
        }
        if self.encoding.k == 0 {
            return Err(Error::Config("encoding.k must be at least 1".into()));
        }
        self.score_params.validate().map_err(|e| Error::Config(e.to_string()))
    }
}
