//! Paired t-tests and confidence intervals.
//!
//! p-values come from an in-crate regularized incomplete beta routine
//! (Lentz continued fraction with a Lanczos log-gamma); no statistics
//! library is used. Confidence intervals use t quantiles obtained by
//! bisection on the CDF.

use crate::error::{FscError, Result};

/// Result of a two-sided paired t-test.
#[derive(Debug, Clone, Copy)]
pub struct PairedT {
    pub t: f64,
    pub p: f64,
    pub mean_diff: f64,
    pub cohen_d: f64,
    pub dof: usize,
}

/// Lanczos approximation (g = 7, n = 9), |error| < 1e-13 on x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (Numerical Recipes betacf).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `dof` degrees of freedom.
pub fn t_cdf(t: f64, dof: f64) -> f64 {
    let x = dof / (dof + t * t);
    let tail = 0.5 * incomplete_beta(dof / 2.0, 0.5, x);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value for an observed t.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))
}

/// Upper quantile of Student's t: smallest q with CDF(q) >= p, by
/// bisection. p in (0, 1).
pub fn t_quantile(p: f64, dof: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided paired t-test of `a` against `b` (differences a_i − b_i).
///
/// A zero-variance difference vector is degenerate: t is reported as a
/// signed infinity sentinel (0 when the mean difference is also 0), with
/// p = 0 when the mean differs from 0 and p = 1 otherwise.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<PairedT> {
    if a.len() != b.len() {
        return Err(FscError::Dimension(format!(
            "paired_t: {} vs {} values",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(FscError::Parameter("paired_t needs n >= 2".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let dof = n - 1;
    if sd == 0.0 {
        return Ok(PairedT {
            t: if mean == 0.0 {
                0.0
            } else {
                mean.signum() * f64::INFINITY
            },
            p: if mean == 0.0 { 1.0 } else { 0.0 },
            mean_diff: mean,
            cohen_d: if mean == 0.0 { 0.0 } else { f64::INFINITY * mean.signum() },
            dof,
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    Ok(PairedT {
        t,
        p: t_two_sided_p(t, dof as f64),
        mean_diff: mean,
        cohen_d: mean / sd,
        dof,
    })
}

/// Sample mean, sample std (n−1), and a t-distribution confidence
/// interval at the given level (e.g. 0.95).
pub fn mean_std_ci(values: &[f64], confidence: f64) -> Result<(f64, f64, f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(FscError::Parameter("mean_std_ci needs n >= 2".into()));
    }
    if !(0.0..1.0).contains(&confidence) {
        return Err(FscError::Parameter(format!(
            "confidence {confidence} not in (0,1)"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let q = t_quantile(0.5 + confidence / 2.0, (n - 1) as f64);
    let half = q * std / (n as f64).sqrt();
    Ok((mean, std, mean - half, mean + half))
}
