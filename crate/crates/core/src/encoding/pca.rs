use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Mean and top-`D/2` principal directions of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `out_dim` rows of length `in_dim`, orthonormal.
    pub basis: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Eigenvalues of the kept directions, descending.
    pub eigenvalues: Vec<f64>,
    /// Trace of the covariance.
    pub total_variance: f64,
}

impl Pca {
    /// Fit on `n` rows of length `dim` (row-major), keeping half the dimensions.
    pub fn fit(rows: &[f32], dim: usize) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("PCA needs an even input dimension, got {dim}")));
        }
        let n = rows.len() / dim;
        if n < dim {
            return Err(Error::InvalidArgument(format!("PCA needs at least {dim} samples, got {n}")));
        }
        let mut mean = vec![0.0f64; dim];
        for r in rows.chunks_exact(dim) {
            for (m, &x) in mean.iter_mut().zip(r) {
                *m += x as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        let mut centered = vec![0.0f64; dim];
        for r in rows.chunks_exact(dim) {
            for (c, (&x, m)) in centered.iter_mut().zip(r.iter().zip(&mean)) {
                *c = x as f64 - m;
            }
            for i in 0..dim {
                let ci = centered[i];
                if ci == 0.0 {
                    continue;
                }
                for j in i..dim {
                    cov[(i, j)] += ci * centered[j];
                }
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let v = cov[(i, j)] / n as f64;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let total_variance = cov.trace();
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..dim).collect();
        // stable: equal eigenvalues keep the solver's order
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let out_dim = dim / 2;
        let mut basis = Vec::with_capacity(out_dim * dim);
        let mut eigenvalues = Vec::with_capacity(out_dim);
        for &c in &order[..out_dim] {
            let col = eig.eigenvectors.column(c);
            let mut lead = 0;
            for i in 1..dim {
                if col[i].abs() > col[lead].abs() {
                    lead = i;
                }
            }
            let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
            basis.extend(col.iter().map(|v| v * sign));
            eigenvalues.push(eig.eigenvalues[c].max(0.0));
        }
        Ok(Self { mean, basis, in_dim: dim, out_dim, eigenvalues, total_variance })
    }

    pub fn project_into(&self, x: &[f32], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.basis[k * self.in_dim..(k + 1) * self.in_dim];
            *o = row.iter().zip(x.iter().zip(&self.mean)).map(|(b, (&v, m))| b * (v as f64 - m)).sum();
        }
    }

    pub fn project(&self, x: &[f32]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        self.project_into(x, &mut out);
        out
    }

    /// Project every row of a row-major matrix.
    pub fn project_rows(&self, rows: &[f32]) -> Vec<f64> {
        let n = rows.len() / self.in_dim;
        let mut out = vec![0.0; n * self.out_dim];
        for (x, o) in rows.chunks_exact(self.in_dim).zip(out.chunks_exact_mut(self.out_dim)) {
            self.project_into(x, o);
        }
        out
    }

    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (k, &zk) in z.iter().enumerate() {
            let row = &self.basis[k * self.in_dim..(k + 1) * self.in_dim];
            x.iter_mut().zip(row).for_each(|(xi, b)| *xi += zk * b);
        }
        x
    }

    /// Share of the total variance kept by the projection.
    pub fn captured_fraction(&self) -> f64 {
        if self.total_variance <= 0.0 {
            return 1.0;
        }
        self.eigenvalues.iter().sum::<f64>() / self.total_variance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn halves_dimension() {
        let mut rng = SplitMix64::new(1);
        let rows: Vec<f32> = (0..200 * 96).map(|_| rng.normal() as f32).collect();
        let p = Pca::fit(&rows, 96).unwrap();
        assert_eq!(p.out_dim, 48);
        assert_eq!(p.project(&rows[..96]).len(), 48);
    }

    #[test]
    fn too_few_samples() {
        assert!(Pca::fit(&[0.0; 10 * 20], 20).is_err());
        assert!(Pca::fit(&[0.0; 30 * 15], 15).is_err());
    }

    #[test]
    fn orthonormal_basis_and_sign() {
        let mut rng = SplitMix64::new(5);
        let rows: Vec<f32> = (0..500 * 10).map(|i| (rng.normal() * (1.0 + (i % 10) as f64)) as f32).collect();
        let p = Pca::fit(&rows, 10).unwrap();
        for a in 0..5 {
            let ra = &p.basis[a * 10..(a + 1) * 10];
            let lead = ra.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(lead > 0.0);
            for b in 0..5 {
                let rb = &p.basis[b * 10..(b + 1) * 10];
                let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
                assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-6);
            }
        }
        assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn exact_subspace_reconstructs() {
        let mut rng = SplitMix64::new(9);
        let rows: Vec<f32> = (0..300)
            .flat_map(|_| {
                let head: Vec<f32> = (0..4).map(|_| rng.normal() as f32).collect();
                head.into_iter().chain([0.0f32; 4])
            })
            .collect();
        let p = Pca::fit(&rows, 8).unwrap();
        for r in rows.chunks_exact(8).take(20) {
            let back = p.reconstruct(&p.project(r));
            for (a, b) in back.iter().zip(r) {
                assert!((a - *b as f64).abs() < 1e-9);
            }
        }
    }
}
