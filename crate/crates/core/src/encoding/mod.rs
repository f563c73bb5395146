//! Per-descriptor PCA + GMM codebooks and Fisher-vector encoding.

pub mod fisher;
pub mod gmm;
pub mod pca;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptors::{DescriptorSet, DescriptorType};
use crate::error::{Error, Result};
use crate::media_io::{put_f32, put_u32, read_bytes, write_bytes, ByteReader, DescriptorMatrix};
use crate::rng::SplitMix64;

pub use fisher::{fisher_statistics, l2_normalize, power_normalize};
pub use gmm::{FitReport, Gmm, GmmParams, VARIANCE_FLOOR};
pub use pca::Pca;

pub const CODEBOOK_MAGIC: &[u8; 4] = b"CBK1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingParams {
    /// Mixture components per descriptor type.
    pub k: usize,
    /// Upper bound on features used to fit each codebook.
    pub sample_size: usize,
    pub seed: u64,
    /// Signed square root before the L2 normalization.
    pub power_norm: bool,
}

impl Default for EncodingParams {
    fn default() -> Self {
        Self { k: 32, sample_size: 20_000, seed: 0, power_norm: false }
    }
}

/// Descriptors of a set of trajectories, one matrix per type in
/// [`DescriptorType::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub matrices: Vec<DescriptorMatrix>,
}

impl FeatureSet {
    pub fn new(dims: [usize; 5]) -> Self {
        Self { matrices: dims.iter().map(|&d| DescriptorMatrix::new(d)).collect() }
    }

    pub fn from_sets<'a>(sets: impl IntoIterator<Item = &'a DescriptorSet>) -> Self {
        let mut out: Option<FeatureSet> = None;
        for s in sets {
            let fs = out.get_or_insert_with(|| {
                FeatureSet::new(DescriptorType::ALL.map(|t| s.get(t).len()))
            });
            fs.push(s);
        }
        out.unwrap_or_else(|| FeatureSet::new(DescriptorType::ALL.map(|t| t.dim(&Default::default()))))
    }

    pub fn push(&mut self, s: &DescriptorSet) {
        for (m, t) in self.matrices.iter_mut().zip(DescriptorType::ALL) {
            m.push(s.get(t));
        }
    }

    pub fn extend(&mut self, other: &FeatureSet) {
        for (m, o) in self.matrices.iter_mut().zip(&other.matrices) {
            m.data.extend_from_slice(&o.data);
        }
    }

    pub fn get(&self, t: DescriptorType) -> &DescriptorMatrix {
        &self.matrices[t as usize]
    }

    pub fn len(&self) -> usize {
        self.matrices[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureSet {
        FeatureSet {
            matrices: self
                .matrices
                .iter()
                .map(|m| DescriptorMatrix::from_rows(m.dim, indices.iter().map(|&i| m.row(i))))
                .collect(),
        }
    }
}

/// `min(budget, n)` distinct indices drawn without replacement, ascending.
pub fn subsample_indices(n: usize, budget: usize, seed: u64) -> Vec<usize> {
    if budget >= n {
        return (0..n).collect();
    }
    let mut rng = SplitMix64::new(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..budget {
        let j = i + rng.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(budget);
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub descriptor_type: DescriptorType,
    pub pca: Pca,
    pub gmm: Gmm,
}

impl Codebook {
    /// PCA to half the dimension, then a GMM on the projected features.
    pub fn fit(descriptor_type: DescriptorType, features: &DescriptorMatrix, k: usize, seed: u64) -> Result<(Self, FitReport)> {
        let pca = Pca::fit(&features.data, features.dim)?;
        let projected = pca.project_rows(&features.data);
        let (gmm, report) = Gmm::fit(&projected, pca.out_dim, &GmmParams::new(k, seed))?;
        Ok((Self { descriptor_type, pca, gmm }, report))
    }

    /// Length of this type's Fisher vector: `2 * (D/2) * K`.
    pub fn fv_dim(&self) -> usize {
        2 * self.pca.out_dim * self.gmm.k
    }

    /// Average Fisher gradient of the features, before any normalization.
    pub fn raw_fisher(&self, features: &DescriptorMatrix) -> Result<Vec<f64>> {
        if features.dim != self.pca.in_dim {
            return Err(Error::Dimension(format!(
                "{} codebook expects {}-d features, got {}",
                self.descriptor_type.name(),
                self.pca.in_dim,
                features.dim
            )));
        }
        Ok(fisher_statistics(&self.gmm, &self.pca.project_rows(&features.data)))
    }

    /// Normalized Fisher vector; all-zero when `features` is empty.
    pub fn encode(&self, features: &DescriptorMatrix, power_norm: bool) -> Result<Vec<f64>> {
        let mut fv = self.raw_fisher(features)?;
        if power_norm {
            power_normalize(&mut fv);
        }
        l2_normalize(&mut fv);
        Ok(fv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherVector {
    pub values: Vec<f64>,
    /// Per-type block lengths, in concatenation order.
    pub block_dims: Vec<usize>,
    /// Types encoded from zero features.
    pub empty_types: Vec<DescriptorType>,
}

impl FisherVector {
    pub fn block(&self, t: DescriptorType) -> &[f64] {
        let start: usize = self.block_dims[..t as usize].iter().sum();
        &self.values[start..start + self.block_dims[t as usize]]
    }
}

/// Join per-type vectors in the fixed order shape, hog, hof, mbhx, mbhy.
/// Each type must appear exactly once.
pub fn concatenate(blocks: &[(DescriptorType, Vec<f64>)]) -> Result<FisherVector> {
    let mut values = Vec::new();
    let mut block_dims = Vec::with_capacity(5);
    let mut empty_types = Vec::new();
    for t in DescriptorType::ALL {
        let mut found = blocks.iter().filter(|(bt, _)| *bt == t);
        let (_, v) = found.next().ok_or_else(|| Error::InvalidArgument(format!("missing {} block", t.name())))?;
        if found.next().is_some() {
            return Err(Error::InvalidArgument(format!("duplicate {} block", t.name())));
        }
        if v.iter().all(|&x| x == 0.0) {
            empty_types.push(t);
        }
        block_dims.push(v.len());
        values.extend_from_slice(v);
    }
    Ok(FisherVector { values, block_dims, empty_types })
}

/// One codebook per descriptor type.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookSet {
    pub codebooks: Vec<Codebook>,
    pub power_norm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookFit {
    pub set: CodebookSet,
    pub reports: Vec<FitReport>,
    /// Rows of the input used for fitting.
    pub sample: Vec<usize>,
}

impl CodebookSet {
    /// Fit all five codebooks on one shared seeded subsample of `features`.
    pub fn fit(features: &FeatureSet, params: &EncodingParams) -> Result<CodebookFit> {
        let sample = subsample_indices(features.len(), params.sample_size, params.seed);
        let chosen = features.select(&sample);
        let mut codebooks = Vec::with_capacity(5);
        let mut reports = Vec::with_capacity(5);
        for t in DescriptorType::ALL {
            let seed = SplitMix64::derive(params.seed, 1 + t.tag() as u64).next_u64();
            let (cb, report) = Codebook::fit(t, chosen.get(t), params.k, seed)?;
            codebooks.push(cb);
            reports.push(report);
        }
        Ok(CodebookFit { set: CodebookSet { codebooks, power_norm: params.power_norm }, reports, sample })
    }

    pub fn get(&self, t: DescriptorType) -> &Codebook {
        &self.codebooks[t as usize]
    }

    pub fn fv_dim(&self) -> usize {
        self.codebooks.iter().map(Codebook::fv_dim).sum()
    }

    pub fn encode(&self, features: &FeatureSet) -> Result<FisherVector> {
        let blocks = DescriptorType::ALL
            .iter()
            .map(|&t| Ok((t, self.get(t).encode(features.get(t), self.power_norm)?)))
            .collect::<Result<Vec<_>>>()?;
        concatenate(&blocks)
    }
}

pub fn encode_codebook(cb: &Codebook, out: &mut Vec<u8>) {
    out.extend_from_slice(CODEBOOK_MAGIC);
    put_u32(out, cb.descriptor_type.tag());
    put_u32(out, cb.pca.in_dim as u32);
    put_u32(out, cb.pca.out_dim as u32);
    put_u32(out, cb.gmm.k as u32);
    let values = cb.pca.mean.iter().chain(&cb.pca.basis).chain(&cb.gmm.weights).chain(&cb.gmm.means).chain(&cb.gmm.variances);
    for &v in values {
        put_f32(out, v as f32);
    }
}

/// Decode one codebook record from the front of `bytes`; returns it with the
/// number of bytes consumed.
pub fn decode_codebook(bytes: &[u8]) -> Result<(Codebook, usize)> {
    let mut r = ByteReader::new(bytes, CODEBOOK_MAGIC, "codebook")?;
    let tag = r.u32()?;
    let descriptor_type = DescriptorType::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown descriptor tag {tag}")))?;
    let in_dim = r.u32()? as usize;
    let out_dim = r.u32()? as usize;
    let k = r.u32()? as usize;
    let mut read = |n: usize| -> Result<Vec<f64>> { Ok(r.f32_vec(n)?.into_iter().map(f64::from).collect()) };
    let mean = read(in_dim)?;
    let basis = read(in_dim * out_dim)?;
    let weights = read(k)?;
    let means = read(k * out_dim)?;
    let variances = read(k * out_dim)?;
    let pca = Pca { mean, basis, in_dim, out_dim, eigenvalues: Vec::new(), total_variance: 0.0 };
    let gmm = Gmm { k, dim: out_dim, weights, means, variances };
    Ok((Codebook { descriptor_type, pca, gmm }, r.pos))
}

/// A codebook-set file is the concatenation of its five `CBK1` records.
pub fn encode_codebook_set(set: &CodebookSet) -> Vec<u8> {
    let mut out = Vec::new();
    for cb in &set.codebooks {
        encode_codebook(cb, &mut out);
    }
    out
}

pub fn decode_codebook_set(bytes: &[u8], power_norm: bool) -> Result<CodebookSet> {
    let mut pos = 0;
    let mut codebooks = Vec::new();
    while pos < bytes.len() {
        let (cb, used) = decode_codebook(&bytes[pos..])?;
        codebooks.push(cb);
        pos += used;
    }
    for (i, (cb, t)) in codebooks.iter().zip(DescriptorType::ALL).enumerate() {
        if cb.descriptor_type != t {
            return Err(Error::Format(format!("codebook {i} is {}, expected {}", cb.descriptor_type.name(), t.name())));
        }
    }
    if codebooks.len() != 5 {
        return Err(Error::Format(format!("expected 5 codebooks, found {}", codebooks.len())));
    }
    Ok(CodebookSet { codebooks, power_norm })
}

pub fn write_codebook_set(path: &Path, set: &CodebookSet) -> Result<()> {
    write_bytes(path, &encode_codebook_set(set))
}

pub fn read_codebook_set(path: &Path, power_norm: bool) -> Result<CodebookSet> {
    decode_codebook_set(&read_bytes(path)?, power_norm)
}
