//! Python bindings: video loading, extraction, proposals, saliency sampling,
//! Fisher encoding, the linear classifier and the sweep harness.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;

use trajsample_core::classifier::{LinearModel, SvmParams};
use trajsample_core::descriptors::DescriptorType;
use trajsample_core::encoding::{read_codebook_set, write_codebook_set, CodebookSet, EncodingParams, FeatureSet};
use trajsample_core::harness::{self, ExperimentConfig, SynthParams};
use trajsample_core::media_io::{load_annotations, load_sequence};
use trajsample_core::pipeline::{
    compute_video_flow, extract_features, frame_saliency, read_feature_dir, write_feature_dir, ExtractParams, VideoFlow,
};
use trajsample_core::proposals::{self, ScoreParams};
use trajsample_core::saliency::{gt_mask, random_mask, saliency_mask, SamplingDecision, Strategy};
use trajsample_core::trajectories::Trajectory;
use trajsample_core::Error;

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn score_params(alpha: f64, beta: f64, kappa: f64, top_n: usize) -> PyResult<ScoreParams> {
    let p = ScoreParams { alpha, beta, kappa, top_n_votes: top_n, ..ScoreParams::default() };
    p.validate().map_err(py_err)?;
    Ok(p)
}

/// A clip held as grayscale planes plus the flow between consecutive frames.
#[pyclass(name = "Video", module = "trajsample")]
struct PyVideo {
    video: VideoFlow,
}

#[pymethods]
impl PyVideo {
    /// Load `frame_%06d.pgm|ppm` files from a directory and compute flow.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let frames = load_sequence(&dir).map_err(py_err)?;
        Ok(Self { video: compute_video_flow(&frames, &Default::default()).map_err(py_err)? })
    }

    #[getter]
    fn width(&self) -> usize {
        self.video.planes[0].width
    }

    #[getter]
    fn height(&self) -> usize {
        self.video.planes[0].height
    }

    fn __len__(&self) -> usize {
        self.video.planes.len()
    }

    /// Flow from frame `i` to `i + 1` as row-major `(u, v)` lists.
    fn flow(&self, i: usize) -> PyResult<(Vec<f32>, Vec<f32>)> {
        let f = self.video.flows.get(i).ok_or_else(|| PyIndexError::new_err(format!("no flow for frame {i}")))?;
        Ok((f.u_plane().data, f.v_plane().data))
    }

    /// Dense trajectories with their descriptors.
    fn extract(&self) -> PyResult<PyFeatures> {
        let f = extract_features(&self.video, &ExtractParams::default()).map_err(py_err)?;
        Ok(PyFeatures { trajectories: f.trajectories, features: f.features })
    }

    /// Top-ranked boxes of frame `i` as `(x, y, w, h, s_obj, s_motion, s_fusion)`.
    #[pyo3(signature = (i, alpha=1.0, beta=1.0, kappa=1.5, top_n=1000))]
    fn proposals(&self, i: usize, alpha: f64, beta: f64, kappa: f64, top_n: usize) -> PyResult<Vec<(u32, u32, u32, u32, f64, f64, f64)>> {
        let plane = self.video.planes.get(i).ok_or_else(|| PyIndexError::new_err(format!("no frame {i}")))?;
        let flow = self.video.flows.get(i).or_else(|| self.video.flows.last());
        let params = score_params(alpha, beta, kappa, top_n)?;
        let ranked = proposals::score_frame(plane, flow, &params).map_err(py_err)?;
        Ok(ranked
            .iter()
            .take(top_n)
            .map(|b| (b.rect.x, b.rect.y, b.rect.w, b.rect.h, b.s_obj, b.s_motion, b.s_fusion))
            .collect())
    }

    /// Row-major saliency map of frame `i`; `fusion=False` gives the object-only map.
    #[pyo3(signature = (i, fusion=true, alpha=1.0, beta=1.0, top_n=1000))]
    fn saliency(&self, i: usize, fusion: bool, alpha: f64, beta: f64, top_n: usize) -> PyResult<Vec<f32>> {
        if i >= self.video.planes.len() {
            return Err(PyIndexError::new_err(format!("no frame {i}")));
        }
        let params = score_params(alpha, beta, 1.5, top_n)?;
        let maps = frame_saliency(&self.video, i, &params).map_err(py_err)?;
        Ok(if fusion { maps.fusion.values } else { maps.edgebox.values })
    }
}

/// Trajectories and their five descriptor matrices, row-aligned.
#[pyclass(name = "Features", module = "trajsample")]
struct PyFeatures {
    trajectories: Vec<Trajectory>,
    features: FeatureSet,
}

#[pymethods]
impl PyFeatures {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let (trajectories, features) = read_feature_dir(&dir).map_err(py_err)?;
        Ok(Self { trajectories, features })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        write_feature_dir(&dir, &self.trajectories, &self.features).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.trajectories.len()
    }

    /// `(start_frame, x, y, scale_index)` per trajectory.
    fn anchors(&self) -> Vec<(u32, f32, f32, u32)> {
        self.trajectories.iter().map(|t| (t.start_frame, t.start_point.0, t.start_point.1, t.scale_index)).collect()
    }

    /// Per-step `(dx, dy)` of trajectory `i`.
    fn displacements(&self, i: usize) -> PyResult<Vec<(f32, f32)>> {
        let t = self.trajectories.get(i).ok_or_else(|| PyIndexError::new_err(format!("no trajectory {i}")))?;
        Ok(t.displacements.to_vec())
    }

    /// Rows of one descriptor type: shape, hog, hof, mbhx or mbhy.
    fn descriptor(&self, name: &str) -> PyResult<Vec<Vec<f32>>> {
        let t = DescriptorType::from_name(name).ok_or_else(|| PyValueError::new_err(format!("unknown descriptor {name:?}")))?;
        Ok(self.features.get(t).rows().map(<[f32]>::to_vec).collect())
    }

    /// Keep-mask of a sampling strategy. Saliency strategies need `video`;
    /// `gt` needs `annotations` (a CSV path).
    #[pyo3(signature = (strategy, sigma=None, rate=None, seed=None, video=None, annotations=None, top_n=1000))]
    #[allow(clippy::too_many_arguments)]
    fn mask(
        &self,
        strategy: &str,
        sigma: Option<f32>,
        rate: Option<f64>,
        seed: Option<u64>,
        video: Option<PyRef<'_, PyVideo>>,
        annotations: Option<PathBuf>,
        top_n: usize,
    ) -> PyResult<Vec<bool>> {
        let strategy: Strategy = strategy.parse().map_err(py_err)?;
        let trajs = &self.trajectories;
        Ok(match SamplingDecision::new(strategy, sigma, rate, seed).map_err(py_err)? {
            SamplingDecision::Dense => vec![true; trajs.len()],
            SamplingDecision::Random { rate, seed } => random_mask(trajs.len(), rate, seed),
            SamplingDecision::Gt => {
                let path = annotations.ok_or_else(|| PyValueError::new_err("gt needs annotations"))?;
                let (w, h) = video.as_ref().map_or((u32::MAX, u32::MAX), |v| (v.width() as u32, v.height() as u32));
                gt_mask(trajs, &load_annotations(&path, w, h).map_err(py_err)?)
            }
            d @ (SamplingDecision::EdgeBox { sigma } | SamplingDecision::FusionEdgeBox { sigma }) => {
                let video = video.ok_or_else(|| PyValueError::new_err(format!("{strategy} needs a video")))?;
                let params = score_params(1.0, 1.0, 1.5, top_n)?;
                let fused = matches!(d, SamplingDecision::FusionEdgeBox { .. });
                let mut maps = HashMap::new();
                for t in trajs {
                    if let std::collections::hash_map::Entry::Vacant(e) = maps.entry(t.start_frame) {
                        let m = frame_saliency(&video.video, t.start_frame as usize, &params).map_err(py_err)?;
                        e.insert(if fused { m.fusion } else { m.edgebox });
                    }
                }
                saliency_mask(trajs, &maps, sigma).map_err(py_err)?
            }
        })
    }

    /// Rows where `mask` is true.
    fn select(&self, mask: Vec<bool>) -> PyResult<Self> {
        if mask.len() != self.trajectories.len() {
            return Err(PyValueError::new_err(format!("mask has {} entries for {} trajectories", mask.len(), self.trajectories.len())));
        }
        let keep: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        Ok(Self { trajectories: keep.iter().map(|&i| self.trajectories[i]).collect(), features: self.features.select(&keep) })
    }
}

/// PCA plus GMM codebooks for all five descriptor types.
#[pyclass(name = "Codebook", module = "trajsample")]
struct PyCodebook {
    set: CodebookSet,
}

#[pymethods]
impl PyCodebook {
    #[staticmethod]
    #[pyo3(signature = (features, k=32, sample_size=20000, seed=0, power_norm=false))]
    fn fit(features: Vec<PyRef<'_, PyFeatures>>, k: usize, sample_size: usize, seed: u64, power_norm: bool) -> PyResult<Self> {
        let mut all = features.first().ok_or_else(|| PyValueError::new_err("no feature sets given"))?.features.clone();
        for f in &features[1..] {
            all.extend(&f.features);
        }
        let params = EncodingParams { k, sample_size, seed, power_norm };
        Ok(Self { set: CodebookSet::fit(&all, &params).map_err(py_err)?.set })
    }

    #[staticmethod]
    #[pyo3(signature = (path, power_norm=false))]
    fn load(path: PathBuf, power_norm: bool) -> PyResult<Self> {
        Ok(Self { set: read_codebook_set(&path, power_norm).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_codebook_set(&path, &self.set).map_err(py_err)
    }

    #[getter]
    fn fv_dim(&self) -> usize {
        self.set.fv_dim()
    }

    /// Normalized Fisher vector of a feature set.
    fn encode(&self, features: PyRef<'_, PyFeatures>) -> PyResult<Vec<f64>> {
        Ok(self.set.encode(&features.features).map_err(py_err)?.values)
    }
}

/// One-vs-rest linear SVM.
#[pyclass(name = "Model", module = "trajsample")]
struct PyModel {
    model: LinearModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (x, labels, c=100.0))]
    fn train(x: Vec<Vec<f64>>, labels: Vec<u32>, c: f64) -> PyResult<Self> {
        let (model, _) = LinearModel::train(&x, &labels, &SvmParams { c, ..SvmParams::default() }).map_err(py_err)?;
        Ok(Self { model })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { model: LinearModel::read(&path).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.model.write(&path).map_err(py_err)
    }

    #[getter]
    fn labels(&self) -> Vec<u32> {
        self.model.labels.clone()
    }

    fn scores(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.model.scores(&x).map_err(py_err)
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<u32> {
        self.model.predict(&x).map_err(py_err)
    }
}

/// Fused box score `alpha * s_obj + beta * s_motion`.
#[pyfunction]
fn fuse(alpha: f64, beta: f64, s_obj: f64, s_motion: f64) -> f64 {
    proposals::fuse(alpha, beta, s_obj, s_motion)
}

/// Write the synthetic corpus; returns the video ids.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=0, videos_per_class=20, frames=30, camera_speed=0.0))]
fn make_synthetic_corpus(out_dir: PathBuf, seed: u64, videos_per_class: usize, frames: usize, camera_speed: f64) -> PyResult<Vec<String>> {
    let p = SynthParams { videos_per_class, frames, camera_speed, ..SynthParams::default() };
    harness::make_synthetic_corpus(&out_dir, seed, &p).map_err(py_err)
}

/// Run the sweep described by a JSON config; returns the results CSV text.
#[pyfunction]
#[pyo3(signature = (config, out=None))]
fn run_sweep(config: PathBuf, out: Option<PathBuf>) -> PyResult<String> {
    let cfg = ExperimentConfig::load(&config).map_err(py_err)?;
    let (_, results) = harness::run_sweep(&cfg, out.as_deref()).map_err(py_err)?;
    Ok(results.to_csv())
}

#[pymodule]
fn trajsample(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVideo>()?;
    m.add_class::<PyFeatures>()?;
    m.add_class::<PyCodebook>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(make_synthetic_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add("DESCRIPTOR_TYPES", DescriptorType::ALL.map(|t| t.name()).to_vec())?;
    Ok(())
}
