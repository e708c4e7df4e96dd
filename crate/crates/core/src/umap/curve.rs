use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SAMPLES: usize = 300;
const SPAN: f64 = 3.0;
const MAX_ITER: usize = 500;

/// Fitted low-dimensional similarity curve `1 / (1 + a d^(2b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    pub a: f64,
    pub b: f64,
    /// Root-mean-square residual over the sample grid.
    pub rms: f64,
}

impl CurveParams {
    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        psi(self.a, self.b, d)
    }
}

#[inline]
pub fn psi(a: f64, b: f64, d: f64) -> f64 {
    if d <= 0.0 {
        1.0
    } else {
        1.0 / (1.0 + a * d.powf(2.0 * b))
    }
}

/// Sample grid and target: 1 up to `min_dist`, then `exp(-(d - min_dist))`.
pub fn curve_target(min_dist: f64) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..SAMPLES)
        .map(|i| SPAN * i as f64 / (SAMPLES - 1) as f64)
        .collect();
    let ys = xs
        .iter()
        .map(|&x| if x <= min_dist { 1.0 } else { (-(x - min_dist)).exp() })
        .collect();
    (xs, ys)
}

pub fn sum_squares(a: f64, b: f64, xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(&x, &y)| (psi(a, b, x) - y).powi(2)).sum()
}

/// Levenberg-Marquardt least squares for `(a, b)`.
pub fn fit_curve(min_dist: f64) -> Result<CurveParams> {
    if !(min_dist >= 0.0 && min_dist.is_finite()) {
        return Err(Error::Parameter("min_dist must be finite and >= 0".into()));
    }
    let (xs, ys) = curve_target(min_dist);
    let (mut a, mut b) = (1.0, 1.0);
    let mut sse = sum_squares(a, b, &xs, &ys);
    let mut lambda = 1e-3;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..MAX_ITER {
        // normal equations J^T J and J^T r
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let r = 1.0 / denom - y;
            let da = -p / (denom * denom);
            let db = -2.0 * a * p * x.ln() / (denom * denom);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let grad_norm = ga.hypot(gb);
        if grad_norm < 1e-14 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let (m00, m11) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m00 * m11 - jab * jab;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m11 * ga - jab * gb) / det;
            let step_b = -(m00 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let nsse = sum_squares(na, nb, &xs, &ys);
                if nsse <= sse {
                    let rel = (sse - nsse) / sse.max(f64::MIN_POSITIVE);
                    a = na;
                    b = nb;
                    sse = nsse;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if rel < 1e-15 && step_a.hypot(step_b) < 1e-12 {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        trace.push((sse / SAMPLES as f64).sqrt());
        if !accepted || converged {
            // no downhill step at any damping: a stationary point
            converged = true;
            break;
        }
    }
    if !converged || !a.is_finite() || !b.is_finite() {
        return Err(Error::CurveFit { trace });
    }
    Ok(CurveParams {
        a,
        b,
        rms: (sse / SAMPLES as f64).sqrt(),
    })
}
