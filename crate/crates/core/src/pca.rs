//! Two-component principal component analysis.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{leading_eigenpairs, symmetric_eigen};
use crate::matrix::Matrix;
use crate::rng::rng_from;

/// Above this many columns the covariance is never formed explicitly.
const DENSE_COLUMN_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub means: Vec<f64>,
    /// Orthonormal axes; the largest-magnitude entry of each is positive.
    pub axes: [Vec<f64>; 2],
    /// Variance along each axis, descending.
    pub explained_variance: [f64; 2],
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn fit_pca(matrix: &Matrix) -> Result<PcaModel> {
    let (n, d) = (matrix.rows(), matrix.cols());
    if n < 3 {
        return Err(Error::TooFewRows { rows: n, required: 3 });
    }
    if d == 0 {
        return Err(Error::Numerical("matrix has no columns".into()));
    }
    let mut means = vec![0.0; d];
    for row in matrix.iter_rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let denom = (n - 1) as f64;

    let (mut values, mut vectors): (Vec<f64>, Vec<Vec<f64>>) = if d <= DENSE_COLUMN_LIMIT {
        let mut cov = Matrix::zeros(d, d);
        let mut centered = vec![0.0; d];
        for row in matrix.iter_rows() {
            for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&means)) {
                *c = v - m;
            }
            for i in 0..d {
                let ci = centered[i];
                if ci == 0.0 {
                    continue;
                }
                for j in 0..=i {
                    cov.set(i, j, cov.get(i, j) + ci * centered[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..=i {
                let v = cov.get(i, j) / denom;
                cov.set(i, j, v);
                cov.set(j, i, v);
            }
        }
        let eig = symmetric_eigen(&cov)?;
        let take = d.min(2);
        (eig.values[..take].to_vec(), (0..take).map(|k| eig.vector(k)).collect())
    } else {
        // X^T X v / (n - 1) on the centred data, without forming X^T X
        let apply = |x: &[f64], y: &mut [f64]| {
            y.iter_mut().for_each(|v| *v = 0.0);
            for row in matrix.iter_rows() {
                let s: f64 = row.iter().zip(&means).zip(x).map(|((v, m), xi)| (v - m) * xi).sum();
                for ((yj, v), m) in y.iter_mut().zip(row).zip(&means) {
                    *yj += s * (v - m) / denom;
                }
            }
        };
        let mut rng = rng_from(0x9ca);
        let lead = leading_eigenpairs(apply, d, 2, 8, &[], 500, 1e-10, &mut rng)?;
        (lead.values, lead.vectors)
    };
    if values.len() < 2 {
        values.push(0.0);
        vectors.push(vec![0.0; d]);
    }
    if !(values[0] > 0.0) {
        return Err(Error::Numerical("matrix has rank 0 after centring".into()));
    }
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    for v in vectors.iter_mut() {
        fix_sign(v);
    }
    let second = vectors.pop().unwrap_or_default();
    let first = vectors.pop().unwrap_or_default();
    Ok(PcaModel {
        means,
        axes: [first, second],
        explained_variance: [values[0], values[1]],
    })
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (o, axis) in out.iter_mut().zip(&self.axes) {
            *o = row
                .iter()
                .zip(&self.means)
                .zip(axis)
                .map(|((v, m), a)| (v - m) * a)
                .sum();
        }
        out
    }

    pub fn transform(&self, matrix: &Matrix) -> Result<Vec<[f64; 2]>> {
        if matrix.cols() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: matrix.cols(),
            });
        }
        Ok(matrix.iter_rows().map(|r| self.transform_row(r)).collect())
    }
}

pub fn transform_pca(model: &PcaModel, matrix: &Matrix) -> Result<Vec<[f64; 2]>> {
    model.transform(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = rng_from(seed);
        let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(n, d, data).unwrap()
    }

    #[test]
    fn diagonal_line() {
        let rows: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, i as f64]).collect();
        let m = fit_pca(&Matrix::from_rows(&rows).unwrap()).unwrap();
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!((m.axes[0][0] - h).abs() < 1e-12 && (m.axes[0][1] - h).abs() < 1e-12);
        assert!(m.explained_variance[1].abs() < 1e-12);
    }

    #[test]
    fn isotropic_cloud_has_balanced_variances() {
        let mut rng = rng_from(3);
        let data: Vec<f64> = (0..10_000 * 2).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = fit_pca(&Matrix::from_vec(10_000, 2, data).unwrap()).unwrap();
        let [v0, v1] = m.explained_variance;
        assert!((v0 - v1) / v0 < 0.1);
    }

    #[test]
    fn projections_are_uncorrelated_and_ordered() {
        let x = random_matrix(300, 6, 8);
        let m = fit_pca(&x).unwrap();
        let p = m.transform(&x).unwrap();
        let n = p.len() as f64;
        let mean0 = p.iter().map(|q| q[0]).sum::<f64>() / n;
        let mean1 = p.iter().map(|q| q[1]).sum::<f64>() / n;
        let cov = p.iter().map(|q| (q[0] - mean0) * (q[1] - mean1)).sum::<f64>();
        let v0 = p.iter().map(|q| (q[0] - mean0).powi(2)).sum::<f64>();
        let v1 = p.iter().map(|q| (q[1] - mean1).powi(2)).sum::<f64>();
        assert!((cov / (v0 * v1).sqrt()).abs() <= 1e-8);
        assert!(v0 >= v1);
        assert!(mean0.abs() < 1e-12 && mean1.abs() < 1e-12);
        let dot: f64 = m.axes[0].iter().zip(&m.axes[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10);
        for a in &m.axes {
            let nrm: f64 = a.iter().map(|v| v * v).sum();
            assert!((nrm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_row_maps_to_origin_and_transform_is_affine() {
        let x = random_matrix(40, 5, 2);
        let m = fit_pca(&x).unwrap();
        let origin = m.transform_row(&m.means);
        assert!(origin[0].abs() < 1e-12 && origin[1].abs() < 1e-12);
        let a = x.row(3);
        let b = x.row(9);
        let s: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + q).collect();
        let z = vec![0.0; 5];
        let (ta, tb, ts, tz) = (m.transform_row(a), m.transform_row(b), m.transform_row(&s), m.transform_row(&z));
        for k in 0..2 {
            assert!((ts[k] - ta[k] - tb[k] + tz[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_eigen_oracle() {
        let x = random_matrix(50, 8, 5);
        let m = fit_pca(&x).unwrap();
        let mean = x.as_slice().chunks(8).fold(nalgebra::DVector::zeros(8), |acc, r| {
            acc + nalgebra::DVector::from_row_slice(r)
        }) / 50.0;
        let mut centered = nalgebra::DMatrix::from_row_slice(50, 8, x.as_slice());
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / 49.0;
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..8).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        for k in 0..2 {
            let idx = order[k];
            assert!((eig.eigenvalues[idx] - m.explained_variance[k]).abs() < 1e-8);
            let v = eig.eigenvectors.column(idx);
            let sign = if m.axes[k].iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            for (a, b) in m.axes[k].iter().zip(v.iter()) {
                assert!((a - sign * b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn wide_matrix_uses_operator_path() {
        let x = random_matrix(30, 2100, 6);
        let m = fit_pca(&x).unwrap();
        let p = m.transform(&x).unwrap();
        let v0: f64 = p.iter().map(|q| q[0] * q[0]).sum::<f64>() / 29.0;
        assert!((v0 - m.explained_variance[0]).abs() / v0 < 1e-6);
        assert!(m.explained_variance[0] >= m.explained_variance[1]);
    }

    #[test]
    fn rank_zero_and_mismatch() {
        let c = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(fit_pca(&c).is_err());
        let m = fit_pca(&random_matrix(10, 3, 1)).unwrap();
        assert!(matches!(m.transform(&Matrix::zeros(1, 4)), Err(Error::Dimension { .. })));
    }
}
