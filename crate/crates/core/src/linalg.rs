//! Small dense symmetric eigensolver and a block subspace iteration for
//! the leading eigenpairs of large symmetric operators.

use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Eigenvalues in descending order; column `k` of `vectors` belongs to
/// `values[k]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }
}

/// Householder tridiagonalisation followed by implicit QL iterations.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::Dimension {
            expected: n,
            found: a.cols(),
        });
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }
    let mut v = a.as_slice().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    ql_implicit(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&k| d[k]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, dst, v[r * n + src]);
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn ql_implicit(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let at = |r: usize, c: usize| r * n + c;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 100 {
                    return Err(Error::Numerical(
                        "symmetric eigensolver failed to converge".into(),
                    ));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Modified Gram-Schmidt: orthogonalises `vectors` against `fixed` (assumed
/// orthonormal) and among themselves. Returns false when a vector collapses.
pub fn orthonormalize(vectors: &mut [Vec<f64>], fixed: &[Vec<f64>]) -> bool {
    let mut ok = true;
    for i in 0..vectors.len() {
        // two passes keep the basis orthogonal to working precision
        for _ in 0..2 {
            for f in fixed {
                let p = dot(&vectors[i], f);
                for (x, y) in vectors[i].iter_mut().zip(f) {
                    *x -= p * y;
                }
            }
            for j in 0..i {
                let (head, tail) = vectors.split_at_mut(i);
                let p = dot(&tail[0], &head[j]);
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= p * y;
                }
            }
        }
        let nv = norm(&vectors[i]);
        if !(nv > 1e-300) || !nv.is_finite() {
            ok = false;
            continue;
        }
        for x in vectors[i].iter_mut() {
            *x /= nv;
        }
    }
    ok
}

/// Leading eigenpairs of a symmetric positive semi-definite operator.
#[derive(Debug, Clone)]
pub struct LeadingEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

/// Block subspace iteration with Rayleigh-Ritz extraction.
///
/// `apply(x, y)` must write `A x` into `y`. Directions in `deflate` are kept
/// out of the search space. The operator is assumed positive semi-definite
/// so that dominance in magnitude matches dominance in value.
#[allow(clippy::too_many_arguments)]
pub fn leading_eigenpairs<F>(
    apply: F,
    dim: usize,
    count: usize,
    oversample: usize,
    deflate: &[Vec<f64>],
    max_iter: usize,
    tol: f64,
    rng: &mut Rng,
) -> Result<LeadingEigen>
where
    F: Fn(&[f64], &mut [f64]),
{
    let block = (count + oversample).min(dim.saturating_sub(deflate.len()));
    if block < count || count == 0 {
        return Err(Error::Parameter(alloc::format!(
            "cannot extract {count} eigenpairs from a {dim}-dimensional operator"
        )));
    }
    let mut basis: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    if !orthonormalize(&mut basis, deflate) {
        return Err(Error::Numerical("degenerate starting subspace".into()));
    }
    let mut images: Vec<Vec<f64>> = vec![vec![0.0; dim]; block];
    let mut values = vec![0.0; block];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for (x, y) in basis.iter().zip(images.iter_mut()) {
            apply(x, y);
        }
        let check = iterations % 5 == 0 || iterations == max_iter;
        if check {
            // Rayleigh-Ritz on the current basis
            let mut h = Matrix::zeros(block, block);
            for i in 0..block {
                for j in 0..block {
                    h.set(i, j, dot(&basis[i], &images[j]));
                }
            }
            for i in 0..block {
                for j in 0..i {
                    let s = 0.5 * (h.get(i, j) + h.get(j, i));
                    h.set(i, j, s);
                    h.set(j, i, s);
                }
            }
            let eig = symmetric_eigen(&h)?;
            let rotate = |src: &[Vec<f64>]| -> Vec<Vec<f64>> {
                (0..block)
                    .map(|k| {
                        let mut out = vec![0.0; dim];
                        for (j, s) in src.iter().enumerate() {
                            let c = eig.vectors.get(j, k);
                            for (o, v) in out.iter_mut().zip(s) {
                                *o += c * v;
                            }
                        }
                        out
                    })
                    .collect()
            };
            basis = rotate(&basis);
            images = rotate(&images);
            values.copy_from_slice(&eig.values);
            let scale = values[0].abs().max(f64::MIN_POSITIVE);
            converged = (0..count).all(|k| {
                let r: f64 = basis[k]
                    .iter()
                    .zip(&images[k])
                    .map(|(x, ax)| {
                        let d = ax - values[k] * x;
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt();
                r <= tol * scale
            });
            if converged {
                break;
            }
        }
        core::mem::swap(&mut basis, &mut images);
        if !orthonormalize(&mut basis, deflate) {
            return Err(Error::Numerical("subspace iteration collapsed".into()));
        }
    }
    if basis.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvector".into()));
    }
    basis.truncate(count);
    values.truncate(count);
    Ok(LeadingEigen {
        values,
        vectors: basis,
        converged,
        iterations,
    })
}
