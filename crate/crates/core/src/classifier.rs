//! One-vs-rest linear SVM trained by dual coordinate descent.
//!
//! Each binary problem minimizes `0.5 |w|^2 + C sum max(0, 1 - y w.x)` with
//! the bias folded in as a constant feature of value 1.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::media_io::{put_f32, put_u32, read_bytes, write_bytes, ByteReader};

pub const MODEL_MAGIC: &[u8; 4] = b"SVM1";
pub const DEFAULT_C: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    /// Stop once primal minus dual objective falls below this.
    pub gap_tolerance: f64,
    pub max_epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: DEFAULT_C, gap_tolerance: 1e-3, max_epochs: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Class label of each row of `weights`, ascending.
    pub labels: Vec<u32>,
    pub dim: usize,
    pub c: f64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

/// Convergence trace of one binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryReport {
    /// Primal objective after each epoch.
    pub primal: Vec<f64>,
    pub gap: f64,
    pub epochs: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Binary hinge-loss SVM; `y` in {-1, +1}. Returns `(w, b, report)`.
pub fn train_binary(x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> (Vec<f64>, f64, BinaryReport) {
    let n = x.len();
    let dim = x.first().map_or(0, Vec::len);
    let c = params.c;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut alpha = vec![0.0; n];
    // diagonal of Q including the bias feature
    let qii: Vec<f64> = x.iter().map(|xi| dot(xi, xi) + 1.0).collect();
    let mut report = BinaryReport { primal: Vec::new(), gap: f64::INFINITY, epochs: 0 };
    for epoch in 0..params.max_epochs {
        for i in 0..n {
            let g = y[i] * (dot(&w, &x[i]) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            if pg == 0.0 {
                continue;
            }
            let old = alpha[i];
            alpha[i] = (old - g / qii[i]).clamp(0.0, c);
            let step = (alpha[i] - old) * y[i];
            if step != 0.0 {
                w.iter_mut().zip(&x[i]).for_each(|(wj, xj)| *wj += step * xj);
                b += step;
            }
        }
        let norm_sq = dot(&w, &w) + b * b;
        let hinge: f64 = x.iter().zip(y).map(|(xi, yi)| (1.0 - yi * (dot(&w, xi) + b)).max(0.0)).sum();
        let primal = 0.5 * norm_sq + c * hinge;
        let dual = alpha.iter().sum::<f64>() - 0.5 * norm_sq;
        report.primal.push(primal);
        report.gap = primal - dual;
        report.epochs = epoch + 1;
        if report.gap < params.gap_tolerance {
            break;
        }
    }
    (w, b, report)
}

impl LinearModel {
    /// One binary problem per distinct label, in ascending label order.
    pub fn train(x: &[Vec<f64>], labels: &[u32], params: &SvmParams) -> Result<(Self, Vec<BinaryReport>)> {
        if x.len() != labels.len() {
            return Err(Error::Dimension(format!("{} examples but {} labels", x.len(), labels.len())));
        }
        if params.c <= 0.0 {
            return Err(Error::InvalidArgument("C must be positive".into()));
        }
        let dim = x.first().map_or(0, Vec::len);
        if let Some(bad) = x.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension(format!("example of length {} among length {dim}", bad.len())));
        }
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::InvalidArgument("training needs at least two classes".into()));
        }
        let solved: Vec<_> = classes
            .par_iter()
            .map(|&cls| {
                let y: Vec<f64> = labels.iter().map(|&l| if l == cls { 1.0 } else { -1.0 }).collect();
                train_binary(x, &y, params)
            })
            .collect();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut reports = Vec::new();
        for (w, b, r) in solved {
            weights.push(w);
            biases.push(b);
            reports.push(r);
        }
        Ok((Self { labels: classes, dim, c: params.c, weights, biases }, reports))
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!("model expects {} features, got {}", self.dim, x.len())));
        }
        Ok(self.weights.iter().zip(&self.biases).map(|(w, b)| dot(w, x) + b).collect())
    }

    /// Highest-scoring class; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<u32> {
        let s = self.scores(x)?;
        let mut best = 0;
        for i in 1..s.len() {
            if s[i] > s[best] {
                best = i;
            }
        }
        Ok(self.labels[best])
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.labels.len() * (4 + 4 * (self.dim + 1)));
        out.extend_from_slice(MODEL_MAGIC);
        put_u32(&mut out, self.labels.len() as u32);
        put_u32(&mut out, self.dim as u32);
        put_f32(&mut out, self.c as f32);
        for &l in &self.labels {
            put_u32(&mut out, l);
        }
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for &v in w {
                put_f32(&mut out, v as f32);
            }
            put_f32(&mut out, *b as f32);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, MODEL_MAGIC, "model")?;
        let classes = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let c = r.f32()? as f64;
        let labels = (0..classes).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let mut weights = Vec::with_capacity(classes);
        let mut biases = Vec::with_capacity(classes);
        for _ in 0..classes {
            weights.push(r.f32_vec(dim)?.into_iter().map(f64::from).collect());
            biases.push(r.f32()? as f64);
        }
        r.finish()?;
        Ok(Self { labels, dim, c, weights, biases })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_bytes(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn separable_toy() {
        let x = vec![vec![2.0, 2.0], vec![3.0, 1.5], vec![-2.0, -1.0], vec![-3.0, -2.5]];
        let y = [0, 0, 1, 1];
        let (m, _) = LinearModel::train(&x, &y, &SvmParams::default()).unwrap();
        assert_eq!(m.c, 100.0);
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(m.predict(xi).unwrap(), yi);
        }
    }

    #[test]
    fn direct_argmax_and_ties() {
        let m = LinearModel { labels: vec![0, 1], dim: 2, c: 1.0, weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]], biases: vec![0.0, 0.0] };
        assert_eq!(m.predict(&[2.0, 1.0]).unwrap(), 0);
        assert_eq!(m.predict(&[1.0, 1.0]).unwrap(), 0);
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn single_class_rejected() {
        assert!(LinearModel::train(&[vec![1.0], vec![2.0]], &[3, 3], &SvmParams::default()).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let m = LinearModel { labels: vec![2, 5], dim: 3, c: 100.0, weights: vec![vec![0.5, -1.0, 2.0], vec![0.0, 1.0, 0.25]], biases: vec![1.5, -0.5] };
        let back = LinearModel::decode(&m.encode()).unwrap();
        assert_eq!(back, m);
        assert!(LinearModel::decode(&m.encode()[..20]).is_err());
    }

    #[test]
    fn gap_reached_on_blobs() {
        let mut rng = SplitMix64::new(3);
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![if i < 30 { 3.0 } else { -3.0 } + rng.normal(), rng.normal()]).collect();
        let y: Vec<f64> = (0..60).map(|i| if i < 30 { 1.0 } else { -1.0 }).collect();
        let (_, _, r) = train_binary(&x, &y, &SvmParams::default());
        assert!(r.gap < 1e-3, "gap {}", r.gap);
    }
}
