//! Acceptance criteria 1 to 10, each checked against an independent oracle
//! and reported as one PASS/FAIL line.

use std::fs;
use std::time::{Duration, Instant};

use trajsample_core::descriptors::{hof, hog, mbh, DescriptorType, VolumeConfig};
use trajsample_core::encoding::{Codebook, Gmm, GmmParams};
use trajsample_core::harness::{make_synthetic_corpus, run_sweep, ExperimentConfig, PreparedCorpus, SweepResults, SynthParams};
use trajsample_core::imgproc::{gaussian_blur, Plane};
use trajsample_core::media_io::{DescriptorMatrix, Frame};
use trajsample_core::optical_flow::{compute_flow, FlowField, FlowParams};
use trajsample_core::pipeline::{compute_video_flow, extract_features, ExtractParams};
use trajsample_core::proposals::{
    fuse, generate_boxes, group_edges, raw_scores, rank_by_objectness, score_box, BoundaryMap, BoxRect, ProposalBox,
    ScoreParams,
};
use trajsample_core::rng::SplitMix64;
use trajsample_core::saliency::{build_saliency, sample_random, SamplingDecision};
use trajsample_core::trajectories::{seed_points, track, ScalePyramid, TrackParams, Trajectory, TRACK_LENGTH};

type Outcome = Result<String, String>;

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn check(&mut self, id: &str, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over time budget {budget:?}")),
            Err(d) => (false, d),
        };
        let line = format!(
            "criterion {id:<3} {:<4} {name} [{:.1}s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        println!("{line}");
        self.lines.push((pass, line));
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn textured_plane(w: usize, h: usize, sigma: f64, seed: u64) -> Plane {
    let mut rng = SplitMix64::new(seed);
    let noise = Plane::from_fn(w, h, |_, _| rng.next_f64() as f32);
    let smooth = gaussian_blur(&noise, sigma);
    let (lo, hi) = smooth.data.iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    Plane::from_fn(w, h, |x, y| ((smooth.get(x, y) - lo) / (hi - lo) * 255.0).round())
}

fn to_frame(p: &Plane, index: usize) -> Frame {
    Frame::gray(p.width, p.height, p.data.iter().map(|&v| v.clamp(0.0, 255.0) as u8).collect(), index).unwrap()
}

fn median(mut v: Vec<f32>) -> f32 {
    v.sort_by(f32::total_cmp);
    v[v.len() / 2]
}

// ---------------------------------------------------------------------------

fn criterion1() -> Outcome {
    let mut rng = SplitMix64::new(11);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (a, b) = (rng.next_f64() * 4.0 - 2.0, rng.next_f64() * 4.0 - 2.0);
        let (so, sm) = (rng.next_f64() * 10.0, rng.next_f64() * 10.0);
        let want = a * so + b * sm;
        let rect = BoxRect { x: 0, y: 0, w: 16, h: 16 };
        for got in [fuse(a, b, so, sm), ProposalBox::new(rect, so, sm, a, b).s_fusion] {
            worst = worst.max((got - want).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max fusion error {worst:e}"))?;

    let plane = textured_plane(64, 64, 2.0, 3);
    let flow = FlowField::from_fn(64, 64, |x, y| if (20..40).contains(&x) && (20..40).contains(&y) { (2.0, 0.0) } else { (0.0, 0.0) });
    let scores = raw_scores(&plane, Some(&flow), &ScoreParams::default());
    let fused = scores.fused(1.0, 0.0);
    let mut by_obj = fused.clone();
    by_obj.reverse();
    rank_by_objectness(&mut by_obj);
    let same = fused.iter().zip(&by_obj).all(|(a, b)| a.rect == b.rect);
    ensure(same && fused.len() == by_obj.len(), || "beta = 0 ranking differs from the objectness ranking".into())?;
    Ok(format!("10000 tuples, max error {worst:.1e}; beta=0 ranking identical over {} boxes", fused.len()))
}

/// Random sparse boundary maps: short oriented strokes with jittered angles.
fn random_boundary_map(rng: &mut SplitMix64) -> BoundaryMap {
    let w = 16 + rng.below(49) as usize;
    let h = 16 + rng.below(49) as usize;
    let mut b = BoundaryMap::empty(w, h);
    for _ in 0..(3 + rng.below(12)) {
        let angle = rng.next_f64() * std::f64::consts::PI;
        let (dx, dy) = (angle.cos(), angle.sin());
        let (mut x, mut y) = (rng.below(w as u64) as f64, rng.below(h as u64) as f64);
        for _ in 0..(2 + rng.below(18)) {
            let (px, py) = (x.round() as isize, y.round() as isize);
            if px < 0 || py < 0 || px >= w as isize || py >= h as isize {
                break;
            }
            let i = py as usize * w + px as usize;
            b.magnitude[i] = (0.05 + 0.95 * rng.next_f64()) as f32;
            b.orientation[i] = ((angle + 0.3 * (rng.next_f64() - 0.5)).rem_euclid(std::f64::consts::PI)) as f32;
            x += dx;
            y += dy;
        }
    }
    b
}

fn criterion2() -> Outcome {
    let mut rng = SplitMix64::new(2);
    let params = ScoreParams::default();
    let mut boxes_checked = 0usize;
    let mut nonzero = 0usize;
    for map in 0..50 {
        let b = random_boundary_map(&mut rng);
        let groups = group_edges(&b, params.theta_group, params.min_magnitude);
        // per-pixel group label image
        let mut label = vec![usize::MAX; b.width * b.height];
        for (g, grp) in groups.iter().enumerate() {
            for &(x, y) in &grp.members {
                label[y as usize * b.width + x as usize] = g;
            }
        }
        for rect in generate_boxes(b.width as u32, b.height as u32, &params) {
            let mut inside = vec![0usize; groups.len()];
            for y in 0..b.height {
                for x in 0..b.width {
                    let g = label[y * b.width + x];
                    let (x, y) = (x as u32, y as u32);
                    let strictly = rect.x < x && x + 1 < rect.x + rect.w && rect.y < y && y + 1 < rect.y + rect.h;
                    if g != usize::MAX && strictly {
                        inside[g] += 1;
                    }
                }
            }
            let mut enclosed = 0.0f64;
            for (g, grp) in groups.iter().enumerate() {
                if inside[g] == grp.members.len() {
                    enclosed += grp.magnitude;
                }
            }
            let want = if enclosed == 0.0 { 0.0 } else { enclosed / (2.0 * (rect.w + rect.h) as f64).powf(params.kappa) };
            let got = score_box(&rect, &groups, params.kappa);
            ensure(got == want, || format!("map {map} box {rect:?}: score {got} vs oracle {want}"))?;
            boxes_checked += 1;
            nonzero += usize::from(want > 0.0);
        }
    }
    Ok(format!("50 maps, {boxes_checked} boxes ({nonzero} with enclosed groups) match exactly"))
}

fn criterion3() -> Outcome {
    let pb = |x, y, w, h| ProposalBox::new(BoxRect { x, y, w, h }, 1.0, 0.0, 1.0, 0.0);
    let (w, h) = (20usize, 16usize);
    let covered = |r: &BoxRect, x: usize, y: usize| {
        x >= r.x as usize && x < (r.x + r.w) as usize && y >= r.y as usize && y < (r.y + r.h) as usize
    };

    let one = pb(3, 4, 8, 6);
    let m = build_saliency(&[one], w, h, 0, false);
    for y in 0..h {
        for x in 0..w {
            let want = if covered(&one.rect, x, y) { 1.0 } else { 0.0 };
            ensure(m.get(x, y) == want, || format!("single box: ({x},{y}) = {}", m.get(x, y)))?;
        }
    }

    let (a, b) = (pb(2, 2, 10, 8), pb(7, 5, 10, 9));
    let m = build_saliency(&[a, b], w, h, 0, false);
    for y in 0..h {
        for x in 0..w {
            let votes = u8::from(covered(&a.rect, x, y)) + u8::from(covered(&b.rect, x, y));
            let want = [0.0, 0.5, 1.0][votes as usize];
            ensure(m.get(x, y) == want, || format!("two boxes: ({x},{y}) = {}", m.get(x, y)))?;
        }
    }

    let m = build_saliency(&[], w, h, 0, false);
    ensure(m.values.iter().all(|&v| v == 0.0), || "zero-box map is not all-zero".into())?;

    let mut rng = SplitMix64::new(9);
    for trial in 0..200 {
        let boxes: Vec<ProposalBox> = (0..rng.below(40) + 1)
            .map(|_| {
                let (x, y) = (rng.below(w as u64) as u32, rng.below(h as u64) as u32);
                pb(x, y, 1 + rng.below((w as u64) - x as u64) as u32, 1 + rng.below((h as u64) - y as u64) as u32)
            })
            .collect();
        let m = build_saliency(&boxes, w, h, 0, false);
        let counts: Vec<usize> =
            (0..w * h).map(|i| boxes.iter().filter(|b| covered(&b.rect, i % w, i / w)).count()).collect();
        let max = *counts.iter().max().unwrap() as f32;
        for (i, &c) in counts.iter().enumerate() {
            let v = m.values[i];
            ensure((0.0..=1.0).contains(&v) && (v - c as f32 / max).abs() <= 1e-6, || {
                format!("trial {trial}: pixel {i} = {v}, oracle {}", c as f32 / max)
            })?;
        }
        ensure(m.values.contains(&1.0), || format!("trial {trial}: max is not 1"))?;
    }
    Ok("single-box, two-box and empty examples exact; 200 random box sets match vote counting".into())
}

fn criterion4(prepared: &PreparedCorpus) -> Outcome {
    let mut checked = 0;
    for fused in [false, true] {
        let decide = |sigma: f32| {
            if fused {
                SamplingDecision::FusionEdgeBox { sigma }
            } else {
                SamplingDecision::EdgeBox { sigma }
            }
        };
        let sigmas: Vec<f32> = [0.2, 0.4, 0.6].into_iter().chain((0..=20).map(|i| i as f32 * 0.05)).collect();
        let masks: Vec<Vec<Vec<bool>>> = sigmas.iter().map(|&s| prepared.masks(&decide(s))).collect();
        for (i, lo) in sigmas.iter().enumerate() {
            for (j, hi) in sigmas.iter().enumerate() {
                if hi < lo {
                    continue;
                }
                for (v, (a, b)) in masks[i].iter().zip(&masks[j]).enumerate() {
                    let nested = a.iter().zip(b).all(|(&keep_lo, &keep_hi)| keep_lo || !keep_hi);
                    ensure(nested, || format!("video {v}: S({hi}) not within S({lo}), fused={fused}"))?;
                }
                checked += 1;
            }
        }
    }
    let f = |s| prepared.retained_fraction(&SamplingDecision::FusionEdgeBox { sigma: s });
    Ok(format!("{checked} threshold pairs nested; fusion retained {:.3}/{:.3}/{:.3} at 0.2/0.4/0.6", f(0.2), f(0.4), f(0.6)))
}

fn criterion5() -> Outcome {
    let n = 10_000;
    let trajs: Vec<Trajectory> = (0..n)
        .map(|i| Trajectory {
            start_frame: i as u32,
            start_point: (0.0, 0.0),
            scale_index: 0,
            displacements: [(1.0, 0.0); TRACK_LENGTH],
        })
        .collect();
    let mut summary = Vec::new();
    for rate in [0.8, 0.6, 0.4, 0.3] {
        let sd = (n as f64 * rate * (1.0 - rate)).sqrt();
        let mut total = 0.0;
        for seed in 0..100u64 {
            let kept = sample_random(&trajs, rate, seed);
            let k = kept.len() as f64;
            ensure((k - n as f64 * rate).abs() <= 3.0 * sd, || format!("rate {rate} seed {seed}: kept {k}"))?;
            ensure(kept.windows(2).all(|w| w[0].start_frame < w[1].start_frame), || "order not preserved".into())?;
            ensure(kept == sample_random(&trajs, rate, seed), || format!("seed {seed} not reproducible"))?;
            total += k / n as f64;
        }
        let mean = total / 100.0;
        ensure((mean - rate).abs() <= 0.02, || format!("rate {rate}: mean kept fraction {mean}"))?;
        summary.push(format!("{rate}->{mean:.4}"));
    }
    Ok(format!("all runs within 3 sd; means {}", summary.join(" ")))
}

fn criterion6() -> Outcome {
    let params = FlowParams::default();
    let mut worst_zero = 0.0f32;
    for (i, sigma) in [0.0, 1.0, 4.0].into_iter().enumerate() {
        let p = if sigma == 0.0 {
            let mut rng = SplitMix64::new(40);
            Plane::from_fn(96, 80, |_, _| rng.below(256) as f32)
        } else {
            textured_plane(96, 80, sigma, 41 + i as u64)
        };
        let f = to_frame(&p, 0);
        let flow = compute_flow(&f, &f, &params).map_err(|e| e.to_string())?;
        let m = flow.u.iter().chain(&flow.v).fold(0.0f32, |a, v| a.max(v.abs()));
        worst_zero = worst_zero.max(m);
    }
    ensure(worst_zero <= 1e-3, || format!("identical frames give flow {worst_zero}"))?;

    let base = textured_plane(128, 128, 4.0, 5);
    let mut worst_shift = 0.0f32;
    for (dx, dy) in [(2i64, 0i64), (0, 1), (-3, 2), (1, -3), (3, 3)] {
        let shifted = Plane::from_fn(128, 128, |x, y| {
            base.get((x as i64 - dx).rem_euclid(128) as usize, (y as i64 - dy).rem_euclid(128) as usize)
        });
        let flow = compute_flow(&to_frame(&base, 0), &to_frame(&shifted, 1), &params).map_err(|e| e.to_string())?;
        let (mut us, mut vs) = (Vec::new(), Vec::new());
        for y in 16..112 {
            for x in 16..112 {
                let (u, v) = flow.at(x, y);
                us.push(u);
                vs.push(v);
            }
        }
        let err = (median(us) - dx as f32).abs().max((median(vs) - dy as f32).abs());
        worst_shift = worst_shift.max(err);
    }
    ensure(worst_shift <= 0.25, || format!("shift recovery error {worst_shift}"))?;

    // texture translating by (1, 0) per frame
    let (w, h, n) = (96usize, 96usize, TRACK_LENGTH + 1);
    let tex = textured_plane(w + n, h, 2.0, 77);
    let frames: Vec<Frame> = (0..n).map(|f| to_frame(&Plane::from_fn(w, h, |x, y| tex.get(x + n - f, y)), f)).collect();
    let tp = TrackParams::default();
    let pyramid = ScalePyramid::new(w, h, &tp);
    let flows: Vec<FlowField> = frames.windows(2).map(|p| compute_flow(&p[0], &p[1], &params)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let seeds = seed_points(&frames[0].to_plane(), &pyramid, &[], &tp);
    let trajs = track(&seeds, 0, &flows, &pyramid, &tp).map_err(|e| e.to_string())?;
    let margin = 8.0;
    let interior: Vec<_> = seeds
        .iter()
        .filter(|s| {
            let (x, y) = s.point;
            x >= margin && y >= margin && x + TRACK_LENGTH as f32 + margin <= w as f32 && y + margin <= h as f32
        })
        .collect();
    let good = interior
        .iter()
        .filter(|s| {
            trajs.iter().any(|t| {
                t.scale_index == s.scale_index
                    && (t.start_point.0 - s.point.0).abs() < 1e-3
                    && (t.start_point.1 - s.point.1).abs() < 1e-3
                    && t.displacements.iter().all(|&(dx, dy)| (dx - 1.0).abs() <= 0.25 && dy.abs() <= 0.25)
            })
        })
        .count();
    let frac = good as f64 / interior.len().max(1) as f64;
    ensure(!interior.is_empty() && frac >= 0.9, || format!("{good}/{} interior seeds tracked correctly", interior.len()))?;
    Ok(format!(
        "identity max {worst_zero:.1e}; shift error {worst_shift:.3}; {good}/{} interior seeds ({:.1}%) tracked within 0.25 px",
        interior.len(),
        100.0 * frac
    ))
}

fn criterion7() -> Outcome {
    let cfg = VolumeConfig::default();
    let dims = DescriptorType::ALL.map(|t| t.dim(&cfg));
    ensure(dims == [30, 96, 108, 96, 96], || format!("dims {dims:?}"))?;
    let side = cfg.sampled_side();
    let flows = |f: &dyn Fn(usize, usize) -> (f32, f32)| -> Vec<FlowField> {
        (0..TRACK_LENGTH).map(|_| FlowField::from_fn(side, side, f)).collect()
    };
    let norm = |v: &[f32]| v.iter().map(|x| x * x).sum::<f32>().sqrt();

    for (u, v) in [(0.0, 0.0), (3.0, -2.0), (-0.7, 0.1)] {
        let (mx, my) = mbh(&flows(&|_, _| (u, v)), &cfg);
        ensure(mx.iter().chain(&my).all(|&x| x == 0.0), || format!("MBH of constant flow ({u},{v}) is not zero"))?;
    }

    let zero = hof(&flows(&|_, _| (0.0, 0.0)), &cfg);
    let nz: Vec<usize> = (0..zero.len()).filter(|&i| zero[i] != 0.0).collect();
    let bins = cfg.hof_bins + 1;
    ensure(nz.len() == 12 && nz.iter().all(|&i| i % bins == cfg.hof_bins), || format!("zero-flow HOF nonzero at {nz:?}"))?;
    ensure(nz.iter().all(|&i| zero[i] == zero[nz[0]]), || "zero bins are not equal".into())?;
    ensure(hof(&flows(&|_, _| (0.1, 0.0)), &cfg) == zero, || "sub-threshold flow differs from zero flow".into())?;

    let mut rng = SplitMix64::new(21);
    let mut blocks = 0;
    for _ in 0..20 {
        let planes: Vec<Plane> = (0..TRACK_LENGTH).map(|_| Plane::from_fn(side, side, |_, _| rng.below(256) as f32)).collect();
        let field: Vec<FlowField> = (0..TRACK_LENGTH)
            .map(|_| FlowField::from_fn(side, side, |_, _| ((rng.next_f64() * 6.0 - 3.0) as f32, (rng.next_f64() * 6.0 - 3.0) as f32)))
            .collect();
        let (mx, my) = mbh(&field, &cfg);
        for v in [hog(&planes, &cfg), hof(&field, &cfg), mx, my] {
            ensure((norm(&v) - 1.0).abs() <= 1e-6, || format!("block norm {}", norm(&v)))?;
            blocks += 1;
        }
    }

    // descriptors of real trajectories
    let mut rng = SplitMix64::new(8);
    let tex: Vec<u8> = (0..24 * 24).map(|_| rng.below(256) as u8).collect();
    let frames: Vec<Frame> = (0..18)
        .map(|f| {
            let data = (0..72 * 72)
                .map(|i| {
                    let (sx, sy) = ((i % 72) as i64 - 12 - f as i64, (i / 72) as i64 - 24);
                    if (0..24).contains(&sx) && (0..24).contains(&sy) {
                        tex[sy as usize * 24 + sx as usize]
                    } else {
                        100
                    }
                })
                .collect();
            Frame::gray(72, 72, data, f).unwrap()
        })
        .collect();
    let video = compute_video_flow(&frames, &FlowParams::default()).map_err(|e| e.to_string())?;
    let feats = extract_features(&video, &ExtractParams::default()).map_err(|e| e.to_string())?;
    ensure(!feats.trajectories.is_empty(), || "no trajectories on the moving square".into())?;
    for t in [DescriptorType::Hog, DescriptorType::Hof, DescriptorType::Mbhx, DescriptorType::Mbhy] {
        for row in feats.features.get(t).rows() {
            let n = norm(row);
            ensure(n == 0.0 || (n - 1.0).abs() <= 1e-6, || format!("{} norm {n}", t.name()))?;
            blocks += 1;
        }
    }
    Ok(format!("dims 30/96/108/96/96; constant-flow MBH zero; 12 equal HOF zero bins; {blocks} blocks unit norm"))
}

fn criterion8() -> Outcome {
    let mut rng = SplitMix64::new(31);
    let mut configs = 0;
    for d in [30usize, 96, 108] {
        let n = 800;
        let data: Vec<f32> = (0..n * d).map(|_| rng.normal() as f32).collect();
        let m = DescriptorMatrix::from_rows(d, data.chunks(d));
        for k in [1usize, 2, 4, 8] {
            let (cb, _) = Codebook::fit(DescriptorType::Hog, &m, k, 3).map_err(|e| e.to_string())?;
            let fv = cb.encode(&m, false).map_err(|e| e.to_string())?;
            ensure(fv.len() == 2 * (d / 2) * k && cb.fv_dim() == fv.len(), || format!("D={d} K={k}: fv length {}", fv.len()))?;
            configs += 1;
        }
    }

    let mut worst_drop = 0.0f64;
    for trial in 0..6u64 {
        let dim = 2 + trial as usize;
        let data: Vec<f64> = (0..600 * dim).map(|i| rng.normal() * (1.0 + (i % 3) as f64) + ((i / dim) % 4) as f64 * 3.0).collect();
        let (_, report) = Gmm::fit(&data, dim, &GmmParams::new(3 + trial as usize % 3, trial)).map_err(|e| e.to_string())?;
        for w in report.log_likelihoods.windows(2) {
            let slack = 1e-9 * w[0].abs().max(1.0);
            worst_drop = worst_drop.max(w[0] - w[1]);
            ensure(w[1] >= w[0] - slack, || format!("trial {trial}: log-likelihood fell {} -> {}", w[0], w[1]))?;
        }
    }

    let dim = 4;
    let mut data = Vec::new();
    for i in 0..2000 {
        let c = if i % 2 == 0 { 5.0 } else { -5.0 };
        data.extend((0..dim).map(|_| c + rng.normal()));
    }
    let (g, _) = Gmm::fit(&data, dim, &GmmParams::new(2, 1)).map_err(|e| e.to_string())?;
    let mut worst_mean = 0.0f64;
    for k in 0..2 {
        let mu = &g.means[k * dim..(k + 1) * dim];
        let center = if mu[0] > 0.0 { 5.0 } else { -5.0 };
        worst_mean = mu.iter().fold(worst_mean, |a, &m| a.max((m - center).abs()));
        ensure((g.weights[k] - 0.5).abs() <= 0.05, || format!("weight {}", g.weights[k]))?;
    }
    ensure(worst_mean <= 0.1 && g.means[0].signum() != g.means[dim].signum(), || format!("mean error {worst_mean}"))?;

    let dim = 3;
    let n = 500;
    let data: Vec<f64> = (0..n * dim).map(|i| rng.normal() * (1.0 + i as f64 % 2.0) + 2.0).collect();
    let (g, _) = Gmm::fit(&data, dim, &GmmParams::new(1, 0)).map_err(|e| e.to_string())?;
    let mut worst_k1 = 0.0f64;
    for j in 0..dim {
        let col: Vec<f64> = data.iter().skip(j).step_by(dim).copied().collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        worst_k1 = worst_k1.max((g.means[j] - mean).abs()).max((g.variances[j] - var).abs());
    }
    ensure(g.weights == [1.0] && worst_k1 <= 1e-12, || format!("K=1 deviates from closed form by {worst_k1:e}"))?;
    Ok(format!(
        "{configs} FV configs; EM monotone (largest drop {worst_drop:.1e}); two-cluster mean error {worst_mean:.3}; K=1 error {worst_k1:.1e}"
    ))
}

fn row<'a>(r: &'a SweepResults, strategy: &str, param: &str) -> Result<&'a trajsample_core::harness::ResultRow, String> {
    r.find(strategy, param).ok_or_else(|| format!("no summary row for {strategy} {param}"))
}

fn criterion9(results: &SweepResults, sweep_time: Duration) -> Vec<(&'static str, &'static str, Outcome)> {
    let dense = row(results, "dense", "");
    let fusion = row(results, "fusionedgebox", "0.2");
    let edge_m = results.summary.iter().find(|r| r.strategy == "edgebox_matched").ok_or_else(|| "no edgebox_matched row".to_string());
    let rand_m = results.summary.iter().find(|r| r.strategy == "random_matched").ok_or_else(|| "no random_matched row".to_string());
    let gt = row(results, "gt", "");
    let rand_gt = results.summary.iter().find(|r| r.strategy == "random_gt_matched").ok_or_else(|| "no random_gt_matched row".to_string());

    let a = dense.clone().and_then(|d| {
        let msg = format!("dense accuracy {:.4}", d.accuracy);
        ensure(d.accuracy >= 0.90, || msg.clone()).map(|_| msg.clone())
    });
    let b = dense.clone().and_then(|d| {
        let f = fusion.clone()?;
        let discarded = 1.0 - f.retained_fraction;
        let drop = d.accuracy - f.accuracy;
        let msg = format!("fusion sigma 0.2 discards {:.1}% with accuracy {:.4} (drop {drop:.4})", 100.0 * discarded, f.accuracy);
        ensure(discarded >= 0.20 && drop <= 0.05, || msg.clone()).map(|_| msg.clone())
    });
    let c = fusion.clone().and_then(|f| {
        let (e, r) = (edge_m.clone()?, rand_m.clone()?);
        let msg = format!(
            "retained fusion {:.3} edgebox {:.3} (sigma {}) random {:.3}; accuracy {:.4} >= {:.4} >= {:.4} - 0.02",
            f.retained_fraction, e.retained_fraction, e.param, r.retained_fraction, f.accuracy, e.accuracy, r.accuracy
        );
        let matched = (e.retained_fraction - f.retained_fraction).abs() <= 0.05 && (r.retained_fraction - f.retained_fraction).abs() <= 0.05;
        ensure(matched && f.accuracy >= e.accuracy && e.accuracy >= r.accuracy - 0.02, || msg.clone()).map(|_| msg.clone())
    });
    let d = gt.and_then(|g| {
        let r = rand_gt?;
        let msg = format!(
            "gt accuracy {:.4} (retained {:.3}) vs random {:.4} (rate {})",
            g.accuracy, g.retained_fraction, r.accuracy, r.param
        );
        ensure(g.accuracy >= r.accuracy, || msg.clone()).map(|_| msg.clone())
    });
    let t = if sweep_time <= Duration::from_secs(15 * 60) {
        Ok(format!("sweep took {:.0}s", sweep_time.as_secs_f64()))
    } else {
        Err(format!("sweep took {:.0}s", sweep_time.as_secs_f64()))
    };
    vec![
        ("9a", "dense accuracy >= 0.90", a),
        ("9b", "fusion sigma 0.2 discards >= 20% within 0.05 accuracy", b),
        ("9c", "matched fraction: fusion >= edgebox >= random - 0.02", c),
        ("9d", "gt >= random at the gt-induced fraction", d),
        ("9t", "end-to-end runtime < 15 min", t),
    ]
}

#[test]
fn acceptance_criteria() {
    let mut report = Report { lines: Vec::new() };
    report.check("1", "fusion score exactness and beta=0 ranking", Duration::from_secs(1), criterion1);
    report.check("2", "score_box equals brute-force enclosure oracle", Duration::from_secs(30), criterion2);
    report.check("3", "saliency normalization and voting", Duration::from_secs(1), criterion3);
    report.check("5", "random sampling statistics", Duration::from_secs(10), criterion5);
    report.check("6", "flow identity, shift recovery, uniform tracking", Duration::from_secs(60), criterion6);
    report.check("7", "descriptor contracts", Duration::from_secs(30), criterion7);
    report.check("8", "encoding contracts", Duration::from_secs(60), criterion8);

    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    make_synthetic_corpus(&corpus, 7, &SynthParams::default()).unwrap();
    let mut cfg = ExperimentConfig::for_corpus(&corpus, 3);
    cfg.matched_sigma = Some(0.2);
    let first_csv = dir.path().join("results_a.csv");
    let start = Instant::now();
    let (prepared, results) = run_sweep(&cfg, Some(&first_csv)).unwrap();
    let sweep_time = start.elapsed();
    for r in &results.summary {
        println!("  {:<18} {:>8} accuracy {:.4} retained {:.4}", r.strategy, r.param, r.accuracy, r.retained_fraction);
    }

    report.check("4", "threshold monotonicity on the synthetic corpus", Duration::from_secs(10), || criterion4(&prepared));
    for (id, name, outcome) in criterion9(&results, sweep_time) {
        report.check(id, name, Duration::MAX, || outcome);
    }

    let second_csv = dir.path().join("results_b.csv");
    report.check("10", "sweep rerun reproduces the results CSV byte-for-byte", Duration::MAX, || {
        run_sweep(&cfg, Some(&second_csv)).map_err(|e| e.to_string())?;
        let (a, b) = (fs::read(&first_csv).unwrap(), fs::read(&second_csv).unwrap());
        let conf = |p: &std::path::Path| fs::read(p.with_extension("confusion.csv")).unwrap();
        ensure(a == b && conf(&first_csv) == conf(&second_csv), || "results differ between runs".into())?;
        Ok(format!("{} bytes identical, confusion CSV identical", a.len()))
    });

    let failed: Vec<&String> = report.lines.iter().filter(|(p, _)| !p).map(|(_, l)| l).collect();
    println!("{} of {} criteria passed", report.lines.len() - failed.len(), report.lines.len());
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.iter().map(|l| l.as_str()).collect::<Vec<_>>().join("\n"));
}
