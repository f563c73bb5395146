use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const VARIANCE_FLOOR: f64 = 1e-4;
/// Rows per E-step work unit; partial sums are always reduced in chunk order.
const CHUNK: usize = 512;
const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    pub k: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    /// `k * dim`, row per component.
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmParams {
    pub k: usize,
    pub max_iterations: usize,
    /// Stop once the relative log-likelihood change falls below this.
    pub tolerance: f64,
    pub variance_floor: f64,
    pub seed: u64,
}

impl GmmParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, max_iterations: 100, tolerance: 1e-5, variance_floor: VARIANCE_FLOOR, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Total log-likelihood before each M-step.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

/// Per-component constants for evaluating log densities.
struct Prepared {
    log_norm: Vec<f64>,
    inv_var: Vec<f64>,
}

impl Gmm {
    fn prepare(&self) -> Prepared {
        let mut log_norm = Vec::with_capacity(self.k);
        let mut inv_var = Vec::with_capacity(self.k * self.dim);
        for c in 0..self.k {
            let vars = &self.variances[c * self.dim..(c + 1) * self.dim];
            let log_det: f64 = vars.iter().map(|v| v.ln()).sum();
            log_norm.push(self.weights[c].ln() - 0.5 * (self.dim as f64 * LOG_2PI + log_det));
            inv_var.extend(vars.iter().map(|v| 1.0 / v));
        }
        Prepared { log_norm, inv_var }
    }

    /// Posterior responsibilities of `x` into `out`; returns `log p(x)`.
    fn posterior(&self, p: &Prepared, x: &[f64], out: &mut [f64]) -> f64 {
        let d = self.dim;
        let mut max = f64::NEG_INFINITY;
        for c in 0..self.k {
            let mu = &self.means[c * d..(c + 1) * d];
            let iv = &p.inv_var[c * d..(c + 1) * d];
            let mut q = 0.0;
            for j in 0..d {
                let t = x[j] - mu[j];
                q += t * t * iv[j];
            }
            let l = p.log_norm[c] - 0.5 * q;
            out[c] = l;
            max = max.max(l);
        }
        let mut sum = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
        max + sum.ln()
    }

    /// Responsibilities for every row of `data` (`n * k`), plus the total
    /// log-likelihood.
    pub fn responsibilities(&self, data: &[f64]) -> (Vec<f64>, f64) {
        let p = self.prepare();
        let n = data.len() / self.dim;
        let mut resp = vec![0.0; n * self.k];
        let lls: Vec<f64> = data
            .par_chunks(CHUNK * self.dim)
            .zip(resp.par_chunks_mut(CHUNK * self.k))
            .map(|(xs, rs)| {
                xs.chunks_exact(self.dim)
                    .zip(rs.chunks_exact_mut(self.k))
                    .map(|(x, r)| self.posterior(&p, x, r))
                    .sum::<f64>()
            })
            .collect();
        (resp, lls.iter().sum())
    }

    pub fn log_likelihood(&self, data: &[f64]) -> f64 {
        self.responsibilities(data).1
    }

    /// Fit by EM from a seeded k-means++ initialization.
    pub fn fit(data: &[f64], dim: usize, params: &GmmParams) -> Result<(Self, FitReport)> {
        let k = params.k;
        if k == 0 || dim == 0 {
            return Err(Error::InvalidArgument("GMM needs k >= 1 and dim >= 1".into()));
        }
        let n = data.len() / dim;
        if n < 10 * k {
            return Err(Error::InvalidArgument(format!("GMM with k = {k} needs at least {} samples, got {n}", 10 * k)));
        }
        let mut gmm = init_kmeanspp(data, dim, k, params);
        let mut report = FitReport { log_likelihoods: Vec::new(), converged: false };
        for _ in 0..params.max_iterations {
            let stats = gmm.accumulate(data);
            if let Some(&prev) = report.log_likelihoods.last() {
                let change = (stats.log_likelihood - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
                report.log_likelihoods.push(stats.log_likelihood);
                if change < params.tolerance {
                    report.converged = true;
                    gmm.maximize(&stats, n, params.variance_floor);
                    break;
                }
            } else {
                report.log_likelihoods.push(stats.log_likelihood);
            }
            gmm.maximize(&stats, n, params.variance_floor);
        }
        Ok((gmm, report))
    }

    fn accumulate(&self, data: &[f64]) -> Stats {
        let p = self.prepare();
        let (k, d) = (self.k, self.dim);
        let partials: Vec<Stats> = data
            .par_chunks(CHUNK * d)
            .map(|xs| {
                let mut s = Stats::zeros(k, d);
                let mut r = vec![0.0; k];
                for x in xs.chunks_exact(d) {
                    s.log_likelihood += self.posterior(&p, x, &mut r);
                    for c in 0..k {
                        let g = r[c];
                        if g == 0.0 {
                            continue;
                        }
                        s.s0[c] += g;
                        let s1 = &mut s.s1[c * d..(c + 1) * d];
                        let s2 = &mut s.s2[c * d..(c + 1) * d];
                        for j in 0..d {
                            let gx = g * x[j];
                            s1[j] += gx;
                            s2[j] += gx * x[j];
                        }
                    }
                }
                s
            })
            .collect();
        let mut total = Stats::zeros(k, d);
        for s in &partials {
            total.add(s);
        }
        total
    }

    fn maximize(&mut self, s: &Stats, n: usize, floor: f64) {
        let d = self.dim;
        for c in 0..self.k {
            if s.s0[c] <= 0.0 {
                // component lost all support; keep it with a negligible weight
                self.weights[c] = f64::MIN_POSITIVE;
                continue;
            }
            self.weights[c] = s.s0[c] / n as f64;
            for j in 0..d {
                let mu = s.s1[c * d + j] / s.s0[c];
                let var = s.s2[c * d + j] / s.s0[c] - mu * mu;
                self.means[c * d + j] = mu;
                self.variances[c * d + j] = var.max(floor);
            }
        }
        let total: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= total);
    }
}

struct Stats {
    s0: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    log_likelihood: f64,
}

impl Stats {
    fn zeros(k: usize, d: usize) -> Self {
        Self { s0: vec![0.0; k], s1: vec![0.0; k * d], s2: vec![0.0; k * d], log_likelihood: 0.0 }
    }

    fn add(&mut self, o: &Stats) {
        self.s0.iter_mut().zip(&o.s0).for_each(|(a, b)| *a += b);
        self.s1.iter_mut().zip(&o.s1).for_each(|(a, b)| *a += b);
        self.s2.iter_mut().zip(&o.s2).for_each(|(a, b)| *a += b);
        self.log_likelihood += o.log_likelihood;
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by hard-assignment moments.
fn init_kmeanspp(data: &[f64], d: usize, k: usize, params: &GmmParams) -> Gmm {
    let n = data.len() / d;
    let row = |i: usize| &data[i * d..(i + 1) * d];
    let mut rng = SplitMix64::new(params.seed);
    let mut centers: Vec<usize> = vec![rng.below(n as u64) as usize];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &dist) in nearest.iter().enumerate() {
                acc += dist;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.below(n as u64) as usize
        };
        centers.push(next);
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(sq_dist(row(i), row(next)));
        }
    }

    let mut global_mean = vec![0.0; d];
    for i in 0..n {
        global_mean.iter_mut().zip(row(i)).for_each(|(m, x)| *m += x / n as f64);
    }
    let mut global_var = vec![0.0; d];
    for i in 0..n {
        global_var.iter_mut().zip(row(i).iter().zip(&global_mean)).for_each(|(v, (x, m))| *v += (x - m) * (x - m) / n as f64);
    }

    let mut count = vec![0usize; k];
    let mut sum = vec![0.0; k * d];
    let mut sum_sq = vec![0.0; k * d];
    for i in 0..n {
        let x = row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, &ci) in centers.iter().enumerate() {
            let dist = sq_dist(x, row(ci));
            if dist < best_d {
                best_d = dist;
                best = c;
            }
        }
        count[best] += 1;
        for j in 0..d {
            sum[best * d + j] += x[j];
            sum_sq[best * d + j] += x[j] * x[j];
        }
    }
    let mut weights = vec![0.0; k];
    let mut means = vec![0.0; k * d];
    let mut variances = vec![0.0; k * d];
    for c in 0..k {
        if count[c] == 0 {
            weights[c] = 1.0 / n as f64;
            means[c * d..(c + 1) * d].copy_from_slice(row(centers[c]));
            variances[c * d..(c + 1) * d].copy_from_slice(&global_var);
        } else {
            let m = count[c] as f64;
            weights[c] = m / n as f64;
            for j in 0..d {
                let mu = sum[c * d + j] / m;
                means[c * d + j] = mu;
                variances[c * d + j] = if count[c] > 1 { sum_sq[c * d + j] / m - mu * mu } else { global_var[j] };
            }
        }
    }
    variances.iter_mut().for_each(|v| *v = v.max(params.variance_floor));
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Gmm { k, dim: d, weights, means, variances }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clusters(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = SplitMix64::new(seed);
        (0..n)
            .flat_map(|i| {
                let c = if i % 2 == 0 { 5.0 } else { -5.0 };
                (0..d).map(|_| c + rng.normal()).collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn recovers_two_clusters() {
        let data = two_clusters(2000, 3, 4);
        let (g, _) = Gmm::fit(&data, 3, &GmmParams::new(2, 11)).unwrap();
        let pos = if g.means[0] > 0.0 { 0 } else { 1 };
        for j in 0..3 {
            assert!((g.means[pos * 3 + j] - 5.0).abs() < 0.1);
            assert!((g.means[(1 - pos) * 3 + j] + 5.0).abs() < 0.1);
        }
        assert!(g.weights.iter().all(|w| (w - 0.5).abs() < 0.05));
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_component_is_closed_form() {
        let mut rng = SplitMix64::new(2);
        let data: Vec<f64> = (0..400).map(|i| rng.normal() * (1.0 + (i % 4) as f64) + 3.0).collect();
        let (g, _) = Gmm::fit(&data, 4, &GmmParams::new(1, 0)).unwrap();
        let n = 100.0;
        for j in 0..4 {
            let mean: f64 = data.chunks(4).map(|r| r[j]).sum::<f64>() / n;
            let var: f64 = data.chunks(4).map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            assert!((g.means[j] - mean).abs() < 1e-10);
            assert!((g.variances[j] - var).abs() < 1e-9);
        }
    }

    #[test]
    fn likelihood_never_decreases() {
        let mut rng = SplitMix64::new(8);
        let data: Vec<f64> = (0..3000).map(|_| rng.normal() + if rng.next_f64() < 0.3 { 2.0 } else { 0.0 }).collect();
        let (_, report) = Gmm::fit(&data, 3, &GmmParams::new(6, 3)).unwrap();
        assert!(report.log_likelihoods.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
    }

    #[test]
    fn too_few_samples() {
        assert!(Gmm::fit(&[0.0; 20], 1, &GmmParams::new(4, 0)).is_err());
    }

    #[test]
    fn deterministic() {
        let data = two_clusters(600, 2, 1);
        let a = Gmm::fit(&data, 2, &GmmParams::new(4, 7)).unwrap();
        let b = Gmm::fit(&data, 2, &GmmParams::new(4, 7)).unwrap();
        assert_eq!(a, b);
    }
}
