use super::gmm::Gmm;

/// Improved Fisher vector of already-projected features (`n * gmm.dim`).
///
/// Layout: all first-order blocks (`k * dim`) followed by all second-order
/// blocks. Returns the unnormalized average gradient; an empty input gives
/// the zero vector.
pub fn fisher_statistics(gmm: &Gmm, features: &[f64]) -> Vec<f64> {
    let (k, d) = (gmm.k, gmm.dim);
    let mut fv = vec![0.0f64; 2 * k * d];
    let n = features.len() / d;
    if n == 0 {
        return fv;
    }
    let (resp, _) = gmm.responsibilities(features);
    let sd: Vec<f64> = gmm.variances.iter().map(|v| v.sqrt()).collect();
    let (first, second) = fv.split_at_mut(k * d);
    for (x, r) in features.chunks_exact(d).zip(resp.chunks_exact(k)) {
        for c in 0..k {
            let g = r[c];
            if g == 0.0 {
                continue;
            }
            for j in 0..d {
                let z = (x[j] - gmm.means[c * d + j]) / sd[c * d + j];
                first[c * d + j] += g * z;
                second[c * d + j] += g * (z * z - 1.0);
            }
        }
    }
    for c in 0..k {
        let a = 1.0 / (n as f64 * gmm.weights[c].sqrt());
        let b = 1.0 / (n as f64 * (2.0 * gmm.weights[c]).sqrt());
        first[c * d..(c + 1) * d].iter_mut().for_each(|v| *v *= a);
        second[c * d..(c + 1) * d].iter_mut().for_each(|v| *v *= b);
    }
    fv
}

/// `z -> sign(z) * sqrt(|z|)`
pub fn power_normalize(v: &mut [f64]) {
    v.iter_mut().for_each(|z| *z = z.signum() * z.abs().sqrt());
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separated() -> Gmm {
        Gmm {
            k: 2,
            dim: 2,
            weights: vec![0.5, 0.5],
            means: vec![50.0, 50.0, -50.0, -50.0],
            variances: vec![1.0, 2.0, 1.0, 0.5],
        }
    }

    #[test]
    fn features_at_means_have_zero_first_order() {
        let g = separated();
        let x = [50.0, 50.0, -50.0, -50.0, 50.0, 50.0];
        let fv = fisher_statistics(&g, &x);
        assert_eq!(fv.len(), 8);
        let first: f64 = fv[..4].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(first <= 1e-6);
    }

    #[test]
    fn empty_is_zero() {
        assert!(fisher_statistics(&separated(), &[]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn order_invariant() {
        let g = separated();
        let a = [49.0, 51.5, -48.0, -50.2, 52.0, 47.0];
        let b = [52.0, 47.0, 49.0, 51.5, -48.0, -50.2];
        let (fa, fb) = (fisher_statistics(&g, &a), fisher_statistics(&g, &b));
        for (x, y) in fa.iter().zip(&fb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn power_norm_keeps_sign() {
        let mut v = vec![-4.0, 9.0, 0.0];
        power_normalize(&mut v);
        assert_eq!(v, vec![-2.0, 3.0, 0.0]);
    }
}
