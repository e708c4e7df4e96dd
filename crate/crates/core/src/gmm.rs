//! Full-covariance Gaussian mixtures over 2D points, fitted by EM.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, Rng};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LLOYD_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    /// Added to the initial covariance diagonals and used as the lower bound
    /// on covariance eigenvalues after each M-step.
    pub reg_floor: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
}

impl Default for GmmParams {
    fn default() -> Self {
        Self {
            reg_floor: 1e-6,
            tol: 1e-4,
            max_iter: 200,
            restarts: 3,
        }
    }
}

/// Symmetric 2x2 covariance `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let mid = 0.5 * (self.xx + self.yy);
        let half = (0.5 * (self.xx - self.yy)).hypot(self.xy);
        [mid + half, mid - half]
    }

    /// Raises every eigenvalue below `floor` to `floor`, keeping the
    /// eigenvectors. Among covariances with eigenvalues at least `floor` this
    /// is the one closest in likelihood to `self`, so EM stays monotone.
    pub fn with_eigenvalue_floor(self, floor: f64) -> Cov2 {
        let [hi, lo] = self.eigenvalues();
        if lo >= floor {
            return self;
        }
        if hi <= floor {
            return Cov2 { xx: floor, xy: 0.0, yy: floor };
        }
        // unit eigenvector of the small eigenvalue
        let (a, b) = if (self.xx - lo).abs() >= (self.yy - lo).abs() {
            (self.xy, lo - self.xx)
        } else {
            (lo - self.yy, self.xy)
        };
        let norm = a.hypot(b);
        let (vx, vy) = if norm > 0.0 {
            (a / norm, b / norm)
        } else if self.xx <= self.yy {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let lift = floor - lo;
        Cov2 {
            xx: self.xx + lift * vx * vx,
            xy: self.xy + lift * vx * vy,
            yy: self.yy + lift * vy * vy,
        }
    }
}

/// Per-component constants for fast log-density evaluation.
#[derive(Debug, Clone, Copy)]
struct Precomputed {
    mean: [f64; 2],
    // inverse covariance entries
    ixx: f64,
    ixy: f64,
    iyy: f64,
    // log weight - log(2 pi) - 0.5 log det
    offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    pub covariances: Vec<Cov2>,
    pub converged: bool,
    pub iterations: usize,
    /// Mean per-point log-likelihood at the final parameters.
    pub log_likelihood: f64,
    pub seed: u64,
}

/// Hard labels with the declared and realised cluster counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub labels: Vec<u32>,
    pub n_declared: usize,
    pub n_nonnull: usize,
}

impl Partition {
    pub fn new(labels: Vec<u32>, n_declared: usize) -> Self {
        let mut seen = vec![false; n_declared];
        for &l in &labels {
            seen[l as usize] = true;
        }
        let n_nonnull = seen.iter().filter(|&&s| s).count();
        Self {
            labels,
            n_declared,
            n_nonnull,
        }
    }
}

fn check_points(points: &[[f64; 2]]) -> Result<()> {
    if let Some(i) = points.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::Numerical(format!("point {i} is not finite")));
    }
    Ok(())
}

fn precompute(weights: &[f64], means: &[[f64; 2]], covs: &[Cov2]) -> Result<Vec<Precomputed>> {
    weights
        .iter()
        .zip(means)
        .zip(covs)
        .map(|((&w, &mean), c)| {
            let det = c.det();
            if !(det > 0.0 && c.xx > 0.0 && det.is_finite()) {
                return Err(Error::Numerical("covariance is singular after regularisation".into()));
            }
            Ok(Precomputed {
                mean,
                ixx: c.yy / det,
                ixy: -c.xy / det,
                iyy: c.xx / det,
                offset: w.ln() - LN_2PI - 0.5 * det.ln(),
            })
        })
        .collect()
}

#[inline]
fn log_joint(p: &[f64; 2], c: &Precomputed) -> f64 {
    let dx = p[0] - c.mean[0];
    let dy = p[1] - c.mean[1];
    c.offset - 0.5 * (c.ixx * dx * dx + 2.0 * c.ixy * dx * dy + c.iyy * dy * dy)
}

/// Writes log weight + log density into `out`; returns the log-sum-exp.
#[inline]
fn log_row(p: &[f64; 2], comps: &[Precomputed], out: &mut [f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (o, c) in out.iter_mut().zip(comps) {
        *o = log_joint(p, c);
        if *o > max {
            max = *o;
        }
    }
    let s: f64 = out.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

fn data_covariance(points: &[[f64; 2]]) -> ([f64; 2], Cov2) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        xx += dx * dx;
        xy += dx * dy;
        yy += dy * dy;
    }
    ([mx, my], Cov2 { xx: xx / n, xy: xy / n, yy: yy / n })
}

#[inline]
fn d2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])
}

/// k-means++ seeding followed by a few Lloyd iterations.
fn initial_means(points: &[[f64; 2]], n: usize, rng: &mut Rng) -> Vec<[f64; 2]> {
    let mut centers = Vec::with_capacity(n);
    centers.push(points[rng.random_range(0..points.len())]);
    let mut closest: Vec<f64> = points.iter().map(|p| d2(p, &centers[0])).collect();
    while centers.len() < n {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = points.len() - 1;
            for (i, &c) in closest.iter().enumerate() {
                if target < c {
                    pick = i;
                    break;
                }
                target -= c;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        for (d, p) in closest.iter_mut().zip(points) {
            *d = d.min(d2(p, &c));
        }
        centers.push(c);
    }
    let mut sums = vec![[0.0; 3]; n];
    for _ in 0..LLOYD_ITERATIONS {
        sums.iter_mut().for_each(|s| *s = [0.0; 3]);
        for p in points {
            let mut best = 0;
            let mut bd = f64::INFINITY;
            for (k, c) in centers.iter().enumerate() {
                let d = d2(p, c);
                if d < bd {
                    bd = d;
                    best = k;
                }
            }
            sums[best][0] += p[0];
            sums[best][1] += p[1];
            sums[best][2] += 1.0;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[2] > 0.0 {
                *c = [s[0] / s[2], s[1] / s[2]];
            }
        }
    }
    centers
}

/// One EM run from a given initial state; returns the model and the
/// per-iteration mean log-likelihood trace (one entry per E-step).
pub fn em_run(
    points: &[[f64; 2]],
    mut weights: Vec<f64>,
    mut means: Vec<[f64; 2]>,
    mut covs: Vec<Cov2>,
    params: &GmmParams,
) -> Result<(MixtureModel, Vec<f64>)> {
    let n = weights.len();
    let count = points.len() as f64;
    let mut resp = vec![0.0; points.len() * n];
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let tiny = 10.0 * f64::EPSILON;
    loop {
        // E-step at the current parameters
        let comps = precompute(&weights, &means, &covs)?;
        let mut ll = 0.0;
        for (p, r) in points.iter().zip(resp.chunks_mut(n)) {
            let lse = log_row(p, &comps, r);
            for v in r.iter_mut() {
                *v = (*v - lse).exp();
            }
            ll += lse;
        }
        let ll = ll / count;
        if !ll.is_finite() {
            return Err(Error::Numerical("log-likelihood is not finite".into()));
        }
        if let Some(&prev) = trace.last() {
            let gain: f64 = ll - prev;
            if gain.abs() <= params.tol * prev.abs().max(f64::MIN_POSITIVE) {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iterations == params.max_iter {
            break;
        }
        iterations += 1;

        // M-step
        let mut nk = vec![tiny; n];
        let mut sx = vec![[0.0; 2]; n];
        for (p, r) in points.iter().zip(resp.chunks(n)) {
            for k in 0..n {
                nk[k] += r[k];
                sx[k][0] += r[k] * p[0];
                sx[k][1] += r[k] * p[1];
            }
        }
        for k in 0..n {
            means[k] = [sx[k][0] / nk[k], sx[k][1] / nk[k]];
        }
        let mut sc = vec![[0.0; 3]; n];
        for (p, r) in points.iter().zip(resp.chunks(n)) {
            for k in 0..n {
                let dx = p[0] - means[k][0];
                let dy = p[1] - means[k][1];
                sc[k][0] += r[k] * dx * dx;
                sc[k][1] += r[k] * dx * dy;
                sc[k][2] += r[k] * dy * dy;
            }
        }
        for k in 0..n {
            covs[k] = Cov2 {
                xx: sc[k][0] / nk[k],
                xy: sc[k][1] / nk[k],
                yy: sc[k][2] / nk[k],
            }
            .with_eigenvalue_floor(params.reg_floor);
            weights[k] = nk[k] / count;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }
    let model = MixtureModel {
        weights,
        means,
        covariances: covs,
        converged,
        iterations,
        log_likelihood: *trace.last().unwrap_or(&f64::NEG_INFINITY),
        seed: 0,
    };
    Ok((model, trace))
}

/// Initial state of one restart: seeded means, the data covariance for
/// every component, uniform weights.
pub fn initial_state(points: &[[f64; 2]], n: usize, rng: &mut Rng, reg_floor: f64) -> (Vec<f64>, Vec<[f64; 2]>, Vec<Cov2>) {
    let (_, mut cov) = data_covariance(points);
    cov.xx += reg_floor;
    cov.yy += reg_floor;
    (vec![1.0 / n as f64; n], initial_means(points, n, rng), vec![cov; n])
}

pub fn fit_gmm(points: &[[f64; 2]], n: usize, seed: u64) -> Result<MixtureModel> {
    fit_gmm_with(points, n, seed, &GmmParams::default())
}

pub fn fit_gmm_with(points: &[[f64; 2]], n: usize, seed: u64, params: &GmmParams) -> Result<MixtureModel> {
    if n == 0 || n > points.len() {
        return Err(Error::Parameter(format!(
            "cannot fit {n} components to {} points",
            points.len()
        )));
    }
    check_points(points)?;
    if n == 1 {
        let (mean, mut cov) = data_covariance(points);
        cov.xx += params.reg_floor;
        cov.yy += params.reg_floor;
        let (mut model, _) = em_run(points, vec![1.0], vec![mean], vec![cov], &GmmParams { max_iter: 0, ..*params })?;
        model.converged = true;
        model.seed = seed;
        return Ok(model);
    }
    let mut best: Option<MixtureModel> = None;
    let mut last_err = None;
    for r in 0..params.restarts.max(1) {
        let mut rng = rng_from(derive_seed(seed, &[r as u64]));
        let (w, m, c) = initial_state(points, n, &mut rng, params.reg_floor);
        match em_run(points, w, m, c, params) {
            Ok((model, _)) => {
                if best.as_ref().is_none_or(|b| model.log_likelihood > b.log_likelihood) {
                    best = Some(model);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(mut model) => {
            model.seed = seed;
            Ok(model)
        }
        None => Err(last_err.unwrap_or_else(|| Error::Numerical("no restart succeeded".into()))),
    }
}

impl MixtureModel {
    pub fn n(&self) -> usize {
        self.weights.len()
    }

    fn components(&self) -> Result<Vec<Precomputed>> {
        precompute(&self.weights, &self.means, &self.covariances)
    }

    /// Argmax of log weight + log density; ties go to the lower index.
    pub fn predict(&self, points: &[[f64; 2]]) -> Result<Partition> {
        check_points(points)?;
        let comps = self.components()?;
        let labels = points
            .iter()
            .map(|p| {
                let mut best = 0;
                let mut bv = f64::NEG_INFINITY;
                for (k, c) in comps.iter().enumerate() {
                    let v = log_joint(p, c);
                    if v > bv {
                        bv = v;
                        best = k;
                    }
                }
                best as u32
            })
            .collect();
        Ok(Partition::new(labels, self.n()))
    }

    /// Posterior component probabilities, one row per point.
    pub fn responsibilities(&self, points: &[[f64; 2]]) -> Result<Vec<Vec<f64>>> {
        check_points(points)?;
        let comps = self.components()?;
        Ok(points
            .iter()
            .map(|p| {
                let mut r = vec![0.0; comps.len()];
                let lse = log_row(p, &comps, &mut r);
                r.iter_mut().for_each(|v| *v = (*v - lse).exp());
                let s: f64 = r.iter().sum();
                r.iter_mut().for_each(|v| *v /= s);
                r
            })
            .collect())
    }

    /// Mean per-point log-likelihood.
    pub fn score(&self, points: &[[f64; 2]]) -> Result<f64> {
        check_points(points)?;
        let comps = self.components()?;
        let mut buf = vec![0.0; comps.len()];
        Ok(points.iter().map(|p| log_row(p, &comps, &mut buf)).sum::<f64>() / points.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::ari;
    use rand_distr::{Distribution, StandardNormal};

    fn toy() -> Vec<[f64; 2]> {
        vec![[-0.1, 0.0], [0.0, 0.1], [0.1, -0.1], [9.9, 0.0], [10.0, 0.1], [10.1, -0.1]]
    }

    #[test]
    fn separable_toy() {
        let pts = toy();
        let m = fit_gmm(&pts, 2, 1).unwrap();
        let mut means = m.means.clone();
        means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!(means[0][0].hypot(means[0][1]) < 0.2);
        assert!((means[1][0] - 10.0).hypot(means[1][1]) < 0.2);
        for w in &m.weights {
            assert!((w - 0.5).abs() < 1e-6);
        }
        let p = m.predict(&pts).unwrap();
        assert_eq!(ari(&p.labels, &[0, 0, 0, 1, 1, 1]).unwrap(), 1.0);
        assert_eq!(p.n_nonnull, 2);
    }

    #[test]
    fn single_component_closed_form() {
        let pts = toy();
        let m = fit_gmm(&pts, 1, 0).unwrap();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = pts.iter().map(|p| p[1]).sum::<f64>() / n;
        let xx = pts.iter().map(|p| (p[0] - mx).powi(2)).sum::<f64>() / n + 1e-6;
        assert!((m.means[0][0] - mx).abs() < 1e-12 && (m.means[0][1] - my).abs() < 1e-12);
        assert!((m.covariances[0].xx - xx).abs() < 1e-12);
    }

    #[test]
    fn too_many_components() {
        assert!(matches!(fit_gmm(&toy(), 7, 0), Err(Error::Parameter(_))));
        assert!(fit_gmm(&[[f64::NAN, 0.0], [0.0, 0.0]], 1, 0).is_err());
    }

    fn symmetric_pair() -> MixtureModel {
        MixtureModel {
            weights: vec![0.5, 0.5],
            means: vec![[-1.0, 0.0], [1.0, 0.0]],
            covariances: vec![Cov2 { xx: 1.0, xy: 0.0, yy: 1.0 }; 2],
            converged: true,
            iterations: 0,
            log_likelihood: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn ties_and_midpoints() {
        let m = symmetric_pair();
        assert_eq!(m.predict(&[[0.0, 3.0]]).unwrap().labels, [0]);
        let r = m.responsibilities(&[[0.0, 0.0]]).unwrap();
        assert!((r[0][0] - 0.5).abs() < 1e-15 && (r[0][1] - 0.5).abs() < 1e-15);
        let mut tight = symmetric_pair();
        tight.covariances[1] = Cov2 { xx: 1e-4, xy: 0.0, yy: 1e-4 };
        assert_eq!(tight.predict(&[[1.0, 0.0]]).unwrap().labels, [1]);
        assert!(m.predict(&[[f64::INFINITY, 0.0]]).is_err());
    }

    fn clustered(seed: u64, n: usize, k: usize) -> Vec<[f64; 2]> {
        let mut rng = rng_from(seed);
        let centers: Vec<[f64; 2]> = (0..k).map(|_| [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)]).collect();
        (0..n)
            .map(|i| {
                let c = centers[i % k];
                let z0: f64 = StandardNormal.sample(&mut rng);
                let z1: f64 = StandardNormal.sample(&mut rng);
                [c[0] + z0, c[1] + 0.5 * z0 + z1]
            })
            .collect()
    }

    #[test]
    fn em_trace_is_monotone_and_covariances_stay_positive() {
        for seed in 0..10 {
            let pts = clustered(seed, 200, 4);
            let mut rng = rng_from(seed);
            let params = GmmParams::default();
            let (w, m, c) = initial_state(&pts, 5, &mut rng, params.reg_floor);
            let (model, trace) = em_run(&pts, w, m, c, &params).unwrap();
            for pair in trace.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-8 * pair[0].abs(), "{pair:?}");
            }
            for c in &model.covariances {
                assert!(c.eigenvalues()[1] > 0.0);
            }
            let s: f64 = model.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sparse_components_keep_the_trace_monotone() {
        // ten components on a few dozen points collapse onto pairs of points
        for seed in 0..40 {
            let pts = clustered(seed, 60, 3);
            let mut rng = rng_from(seed);
            let params = GmmParams::default();
            let (w, m, c) = initial_state(&pts, 10, &mut rng, params.reg_floor);
            let (model, trace) = em_run(&pts, w, m, c, &params).unwrap();
            for pair in trace.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-8 * pair[0].abs(), "{seed}: {pair:?}");
            }
            for c in &model.covariances {
                assert!(c.eigenvalues()[1] >= params.reg_floor * (1.0 - 1e-6));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn eigenvalue_floor(xx in 1e-9..10.0f64, yy in 1e-9..10.0f64, t in -1.0..1.0f64, floor in 1e-8..1.0f64) {
            let c = Cov2 { xx, xy: t * (xx * yy).sqrt(), yy };
            let [hi, lo] = c.eigenvalues();
            let f = c.with_eigenvalue_floor(floor);
            let [fhi, flo] = f.eigenvalues();
            if lo >= floor {
                proptest::prop_assert_eq!(f, c);
            } else {
                let tol = 1e-9 * hi.max(floor);
                proptest::prop_assert!((flo - floor).abs() <= tol || (fhi - floor).abs() <= tol);
                proptest::prop_assert!((fhi - hi.max(floor)).abs() <= tol, "{} vs {}", fhi, hi);
                proptest::prop_assert!(flo >= floor - tol);
            }
        }
    }

    #[test]
    fn responsibilities_agree_with_predict() {
        let pts = clustered(3, 300, 3);
        let m = fit_gmm(&pts, 3, 5).unwrap();
        let p = m.predict(&pts).unwrap();
        let r = m.responsibilities(&pts).unwrap();
        for (row, &l) in r.iter().zip(&p.labels) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let arg = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b })
                .0;
            assert_eq!(arg as u32, l);
        }
        assert_eq!(fit_gmm(&pts, 3, 5).unwrap(), m);
    }

    #[test]
    fn relabelled_components_permute_labels() {
        let pts = clustered(9, 240, 3);
        let m = fit_gmm(&pts, 3, 2).unwrap();
        let perm = [2usize, 0, 1];
        let mut q = m.clone();
        for (new, &old) in perm.iter().enumerate() {
            q.weights[new] = m.weights[old];
            q.means[new] = m.means[old];
            q.covariances[new] = m.covariances[old];
        }
        let a = m.predict(&pts).unwrap().labels;
        let b = q.predict(&pts).unwrap().labels;
        assert_eq!(ari(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn partition_counts_nonnull() {
        let p = Partition::new(vec![0, 0, 3], 5);
        assert_eq!(p.n_nonnull, 2);
        assert_eq!(p.n_declared, 5);
    }
}
