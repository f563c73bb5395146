use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use trajsample_core::classifier::{LinearModel, SvmParams};
use trajsample_core::encoding::{read_codebook_set, write_codebook_set, CodebookSet, EncodingParams, FeatureSet};
use trajsample_core::harness::{make_synthetic_corpus, run_sweep, ExperimentConfig, SynthParams};
use trajsample_core::media_io::{
    load_annotations, load_sequence, read_boxes, read_descriptors, write_boxes, write_descriptors, write_flow,
    write_saliency, DescriptorMatrix, ScoredBox,
};
use trajsample_core::optical_flow::FlowParams;
use trajsample_core::pipeline::{
    compute_video_flow, extract_features, read_feature_dir, start_frame_saliency, write_feature_dir, ExtractParams,
};
use trajsample_core::proposals::{score_frame, BoxRect, ProposalBox, ScoreParams};
use trajsample_core::saliency::{build_saliency, gt_mask, random_mask, saliency_mask, voters, SamplingDecision, Strategy};

#[derive(Parser)]
#[command(name = "trajsample", version, about = "Proposal-guided dense trajectory sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic three-class corpus.
    Synth(SynthArgs),
    /// Dense flow between consecutive frames, one FLO1 file per pair.
    Flow {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track, prune and describe; writes trajectories.trj and one .dsc per type.
    Extract {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ranked proposal boxes of one frame as CSV.
    Proposals {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        score: ScoreArgs,
    },
    /// Saliency map voted by the top boxes of a box CSV.
    Saliency {
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long)]
        frame: u32,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long, default_value_t = 1000)]
        top_n: usize,
        #[arg(long)]
        weighted: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter an extracted feature directory with a sampling strategy.
    Sample(SampleArgs),
    /// Fit PCA and GMM codebooks on the union of feature directories.
    Codebook {
        #[arg(long, required = true, num_args = 1..)]
        features: Vec<PathBuf>,
        #[arg(long, default_value_t = 32)]
        gmm_k: usize,
        #[arg(long, default_value_t = 20_000)]
        sample_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fisher vector of one feature directory, stored as a one-row DSC1 file.
    Encode {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        power_norm: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// One-vs-rest linear SVM from a `path,label` list of Fisher vectors.
    Train {
        #[arg(long)]
        list: PathBuf,
        #[arg(long, default_value_t = 100.0)]
        c: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy and confusion matrix on a `path,label` list.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        list: PathBuf,
    },
    /// Predicted label of each Fisher vector.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        fv: Vec<PathBuf>,
    },
    /// Full strategy sweep over a corpus.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    videos_per_class: usize,
    #[arg(long, default_value_t = 30)]
    frames: usize,
    #[arg(long, default_value_t = 6)]
    distractors: usize,
    #[arg(long, default_value_t = 0)]
    moving_distractors: usize,
    #[arg(long, default_value_t = 0.0)]
    camera_speed: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.5)]
    kappa: f64,
    #[arg(long, default_value_t = 10_000)]
    max_boxes: usize,
    #[arg(long, default_value_t = 1000)]
    top_n: usize,
}

impl ScoreArgs {
    fn params(&self) -> ScoreParams {
        ScoreParams {
            alpha: self.alpha,
            beta: self.beta,
            kappa: self.kappa,
            max_boxes: self.max_boxes,
            top_n_votes: self.top_n,
            ..ScoreParams::default()
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    /// Directory written by `extract`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    strategy: Strategy,
    #[arg(long)]
    sigma: Option<f32>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Annotation CSV for the gt strategy.
    #[arg(long)]
    gt_file: Option<PathBuf>,
    /// Frames of the video, needed by the saliency strategies and gt.
    #[arg(long)]
    frames: Option<PathBuf>,
    #[command(flatten)]
    score: ScoreArgs,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Flow { frames, out } => flow(&frames, &out),
        Command::Extract { frames, out } => extract(&frames, &out),
        Command::Proposals { frames, frame, out, score } => proposals(&frames, frame, &out, &score.params()),
        Command::Saliency { boxes, frame, width, height, top_n, weighted, out } => {
            let ranked: Vec<ProposalBox> = read_boxes(&boxes)?
                .iter()
                .filter(|b| b.frame == frame)
                .map(|b| ProposalBox::new(BoxRect { x: b.x, y: b.y, w: b.w, h: b.h }, b.score, 0.0, 1.0, 0.0))
                .collect();
            let map = build_saliency(&voters(&ranked, top_n), width, height, frame, weighted);
            write_saliency(&out, &map)?;
            println!("{} voting boxes", ranked.len().min(top_n));
            Ok(())
        }
        Command::Sample(a) => sample(a),
        Command::Codebook { features, gmm_k, sample_size, seed, out } => {
            let mut all: Option<FeatureSet> = None;
            for dir in &features {
                let (_, f) = read_feature_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
                match &mut all {
                    Some(a) => a.extend(&f),
                    None => all = Some(f),
                }
            }
            let all = all.expect("clap requires at least one directory");
            let params = EncodingParams { k: gmm_k, sample_size, seed, power_norm: false };
            let fit = CodebookSet::fit(&all, &params)?;
            write_codebook_set(&out, &fit.set)?;
            println!("fit on {} of {} features, fv dim {}", fit.sample.len(), all.len(), fit.set.fv_dim());
            Ok(())
        }
        Command::Encode { codebook, features, power_norm, out } => {
            let set = read_codebook_set(&codebook, power_norm)?;
            let (_, f) = read_feature_dir(&features)?;
            let fv = set.encode(&f)?;
            let row: Vec<f32> = fv.values.iter().map(|&v| v as f32).collect();
            write_descriptors(&out, &DescriptorMatrix::from_rows(row.len(), [row.as_slice()]))?;
            println!("fv dim {} from {} features", row.len(), f.len());
            Ok(())
        }
        Command::Train { list, c, out } => train(&list, c, &out),
        Command::Eval { model, list } => eval(&model, &list),
        Command::Predict { model, fv } => {
            let (model, classes) = read_model(&model)?;
            for path in &fv {
                let label = model.predict(&read_fv(path)?)?;
                println!("{},{}", path.display(), classes[label as usize]);
            }
            Ok(())
        }
        Command::Sweep { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.or_else(|| cfg.output.clone());
            let (_, results) = run_sweep(&cfg, out.as_deref())?;
            if out.is_none() {
                print!("{}", results.to_csv());
            }
            for r in &results.summary {
                eprintln!("{:<16} {:>8} accuracy {:.4} retained {:.4}", r.strategy, r.param, r.accuracy, r.retained_fraction);
            }
            Ok(())
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let p = SynthParams {
        videos_per_class: a.videos_per_class,
        frames: a.frames,
        distractors: a.distractors,
        moving_distractors: a.moving_distractors,
        camera_speed: a.camera_speed,
        noise: a.noise,
        ..SynthParams::default()
    };
    let ids = make_synthetic_corpus(&a.out, a.seed, &p)?;
    println!("{} videos written to {}", ids.len(), a.out.display());
    Ok(())
}

fn flow(frames: &Path, out: &Path) -> Result<()> {
    let video = compute_video_flow(&load_sequence(frames)?, &FlowParams::default())?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (i, f) in video.flows.iter().enumerate() {
        write_flow(&out.join(format!("flow_{i:06}.flo")), f)?;
    }
    println!("{} flow fields", video.flows.len());
    Ok(())
}

fn extract(frames: &Path, out: &Path) -> Result<()> {
    let params = ExtractParams::default();
    let video = compute_video_flow(&load_sequence(frames)?, &params.flow)?;
    let feats = extract_features(&video, &params)?;
    write_feature_dir(out, &feats.trajectories, &feats.features)?;
    println!("{} of {} trajectories kept after pruning", feats.trajectories.len(), feats.raw_count);
    Ok(())
}

fn proposals(frames: &Path, frame: usize, out: &Path, params: &ScoreParams) -> Result<()> {
    let seq = load_sequence(frames)?;
    if frame >= seq.len() {
        bail!("frame {frame} out of range for {} frames", seq.len());
    }
    let plane = seq[frame].to_plane();
    let flow = if params.beta > 0.0 {
        let pair = if frame + 1 < seq.len() { &seq[frame..frame + 2] } else { &seq[frame - 1..frame + 1] };
        Some(compute_video_flow(pair, &FlowParams::default())?.flows.remove(0))
    } else {
        None
    };
    let ranked = score_frame(&plane, flow.as_ref(), params)?;
    let boxes: Vec<ScoredBox> = voters(&ranked, params.top_n_votes)
        .iter()
        .map(|b| ScoredBox { frame: frame as u32, x: b.rect.x, y: b.rect.y, w: b.rect.w, h: b.rect.h, score: b.s_fusion })
        .collect();
    write_boxes(out, &boxes)?;
    println!("{} boxes", boxes.len());
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let decision = SamplingDecision::new(a.strategy, a.sigma, a.rate, a.seed)?;
    let (trajs, features) = read_feature_dir(&a.features)?;
    let load_frames = || -> Result<_> {
        let dir = a.frames.as_ref().context("--frames is required for this strategy")?;
        Ok(load_sequence(dir)?)
    };
    let mask = match decision {
        SamplingDecision::Dense => vec![true; trajs.len()],
        SamplingDecision::Random { rate, seed } => random_mask(trajs.len(), rate, seed),
        SamplingDecision::EdgeBox { sigma } | SamplingDecision::FusionEdgeBox { sigma } => {
            let params = a.score.params();
            let video = compute_video_flow(&load_frames()?, &FlowParams::default())?;
            let maps = start_frame_saliency(&video, &trajs, &params)?;
            let fused = matches!(decision, SamplingDecision::FusionEdgeBox { .. });
            let chosen: HashMap<_, _> =
                maps.into_iter().map(|(f, m)| (f, if fused { m.fusion } else { m.edgebox })).collect();
            saliency_mask(&trajs, &chosen, sigma)?
        }
        SamplingDecision::Gt => {
            let gt = a.gt_file.as_ref().context("--gt-file is required for the gt strategy")?;
            let first = load_frames()?.swap_remove(0);
            gt_mask(&trajs, &load_annotations(gt, first.width as u32, first.height as u32)?)
        }
    };
    let keep: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let kept_trajs: Vec<_> = keep.iter().map(|&i| trajs[i]).collect();
    write_feature_dir(&a.out, &kept_trajs, &features.select(&keep))?;
    println!("kept {} of {} trajectories", keep.len(), trajs.len());
    Ok(())
}

fn read_fv(path: &Path) -> Result<Vec<f64>> {
    let m = read_descriptors(path)?;
    if m.len() != 1 {
        bail!("{} holds {} rows, expected one Fisher vector", path.display(), m.len());
    }
    Ok(m.row(0).iter().map(|&v| v as f64).collect())
}

/// `path,label` rows; relative paths resolve against the list's directory.
fn read_list(path: &Path) -> Result<Vec<(PathBuf, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (p, label) = line.split_once(',').with_context(|| format!("line {}: expected path,label", i + 1))?;
        out.push((base.join(p.trim()), label.trim().to_string()));
    }
    Ok(out)
}

fn classes_path(model: &Path) -> PathBuf {
    model.with_extension("classes")
}

fn read_model(path: &Path) -> Result<(LinearModel, Vec<String>)> {
    let model = LinearModel::read(path)?;
    let names = fs::read_to_string(classes_path(path))
        .map(|t| t.lines().map(str::to_string).collect())
        .unwrap_or_else(|_| model.labels.iter().map(u32::to_string).collect::<Vec<_>>());
    Ok((model, names))
}

fn train(list: &Path, c: f64, out: &Path) -> Result<()> {
    let rows = read_list(list)?;
    let mut classes: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
    classes.sort();
    classes.dedup();
    let x = rows.iter().map(|(p, _)| read_fv(p)).collect::<Result<Vec<_>>>()?;
    let y: Vec<u32> = rows.iter().map(|(_, l)| classes.binary_search(l).expect("label collected above") as u32).collect();
    let (model, reports) = LinearModel::train(&x, &y, &SvmParams { c, ..SvmParams::default() })?;
    model.write(out)?;
    fs::write(classes_path(out), classes.join("\n") + "\n")?;
    for (name, r) in classes.iter().zip(&reports) {
        println!("{name}: {} epochs, duality gap {:.2e}", r.epochs, r.gap);
    }
    Ok(())
}

fn eval(model: &Path, list: &Path) -> Result<()> {
    let (model, classes) = read_model(model)?;
    let rows = read_list(list)?;
    let n = classes.len();
    let mut confusion = vec![vec![0u32; n]; n];
    let mut correct = 0;
    for (p, label) in &rows {
        let truth = classes.iter().position(|c| c == label).with_context(|| format!("unknown label {label}"))?;
        let pred = model.predict(&read_fv(p)?)? as usize;
        confusion[truth][pred] += 1;
        correct += usize::from(truth == pred);
    }
    println!("accuracy {:.6} ({correct}/{})", correct as f64 / rows.len().max(1) as f64, rows.len());
    println!("true\\pred,{}", classes.join(","));
    for (name, row) in classes.iter().zip(&confusion) {
        let cells: Vec<String> = row.iter().map(u32::to_string).collect();
        println!("{name},{}", cells.join(","));
    }
    Ok(())
}
