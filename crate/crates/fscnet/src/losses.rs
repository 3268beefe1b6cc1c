//! Classification and distillation losses.
//!
//! Losses are computed on logit values and return the analytic gradient
//! with respect to those logits; callers seed the tape backward pass with
//! that gradient. All reductions are means over the batch so the combined
//! loss mixes commensurate scales.
//!
//! The distillation term is `T² · KL(teacher ∥ student)` with
//! temperature-softened distributions, whose per-class student-logit
//! gradient is `(T/n)(σ(z/T) − σ(s/T))` for student logits `z` and
//! teacher logits `s`.

use crate::error::{FscError, Result};
use crate::tensor::Tensor;

/// Mixing weight and temperature for the combined loss.
#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    /// Weight on the distillation term, in [0, 1].
    pub lambda: f64,
    /// Distillation temperature, > 0.
    pub temperature: f64,
}

impl LossConfig {
    /// Defaults used while a task is being learned.
    pub fn task_training() -> Self {
        LossConfig {
            lambda: 0.3,
            temperature: 2.0,
        }
    }

    /// Defaults for offline consolidation (pure replay).
    pub fn consolidation() -> Self {
        LossConfig {
            lambda: 0.0,
            temperature: 2.0,
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let (n, c) = logits.shape();
    let mut out = Tensor::zeros(n, c);
    for r in 0..n {
        let row = logits.row(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..c {
            let e = (row[j] - m).exp();
            out.data_mut()[r * c + j] = e;
            z += e;
        }
        for j in 0..c {
            out.data_mut()[r * c + j] /= z;
        }
    }
    out
}

/// Row-wise log-softmax (numerically stable).
fn log_softmax_rows(logits: &Tensor) -> Tensor {
    let (n, c) = logits.shape();
    let mut out = Tensor::zeros(n, c);
    for r in 0..n {
        let row = logits.row(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
        for j in 0..c {
            out.data_mut()[r * c + j] = row[j] - lse;
        }
    }
    out
}

/// Mean negative log-likelihood over the batch.
///
/// Returns the scalar loss and `dL/dlogits = (softmax − onehot)/n`.
pub fn cross_entropy(logits: &Tensor, labels: &[u8]) -> Result<(f64, Tensor)> {
    let (n, c) = logits.shape();
    if labels.len() != n {
        return Err(FscError::Dimension(format!(
            "cross_entropy: {n} logit rows vs {} labels",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(FscError::Parameter("cross_entropy: empty batch".into()));
    }
    for &y in labels {
        if y as usize >= c {
            return Err(FscError::Parameter(format!(
                "label {y} out of range for {c} classes"
            )));
        }
    }
    let logp = log_softmax_rows(logits);
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for (r, &y) in labels.iter().enumerate() {
        loss -= logp.at(r, y as usize);
        grad.data_mut()[r * c + y as usize] -= 1.0;
    }
    grad.data_mut().iter_mut().for_each(|g| *g *= inv_n);
    Ok((loss * inv_n, grad))
}

/// Temperature-scaled distillation loss `T² · KL(p_teacher ∥ q_student)`,
/// mean over the batch. Teacher logits are treated as constants; only the
/// student gradient is returned.
pub fn distillation_loss(
    student_logits: &Tensor,
    teacher_logits: &Tensor,
    temperature: f64,
) -> Result<(f64, Tensor)> {
    if temperature <= 0.0 {
        return Err(FscError::Parameter(format!(
            "temperature {temperature} must be > 0"
        )));
    }
    let (n, c) = student_logits.shape();
    if teacher_logits.shape() != (n, c) {
        return Err(FscError::Dimension(format!(
            "distillation: student {:?} vs teacher {:?}",
            student_logits.shape(),
            teacher_logits.shape()
        )));
    }
    let scale = |t: &Tensor| -> Tensor {
        let mut s = t.clone();
        s.data_mut().iter_mut().for_each(|x| *x /= temperature);
        s
    };
    let st = scale(student_logits);
    let tt = scale(teacher_logits);
    let q_log = log_softmax_rows(&st);
    let q = softmax_rows(&st);
    let p = softmax_rows(&tt);
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    for r in 0..n {
        for j in 0..c {
            let pj = p.at(r, j);
            if pj > 0.0 {
                loss += pj * (pj.ln() - q_log.at(r, j));
            }
        }
    }
    loss *= temperature * temperature * inv_n;
    // dL/dz = (T²/n)·(1/T)·(q − p) = (T/n)(q − p)
    let mut grad = Tensor::zeros(n, c);
    let k = temperature * inv_n;
    for j in 0..n * c {
        grad.data_mut()[j] = k * (q.data()[j] - p.data()[j]);
    }
    Ok((loss, grad))
}

/// `(1 − λ)·CE + λ·KD`. With λ = 0 the teacher logits are never consumed
/// (and may be `None`); with λ = 1 the labels only gate validity of CE's
/// range check, matching pure distillation.
pub fn combined_loss(
    logits: &Tensor,
    labels: &[u8],
    teacher_logits: Option<&Tensor>,
    cfg: &LossConfig,
) -> Result<(f64, Tensor)> {
    if !(0.0..=1.0).contains(&cfg.lambda) {
        return Err(FscError::Parameter(format!(
            "lambda {} not in [0,1]",
            cfg.lambda
        )));
    }
    if cfg.lambda == 0.0 {
        return cross_entropy(logits, labels);
    }
    let teacher = teacher_logits.ok_or_else(|| {
        FscError::Parameter("combined_loss: lambda > 0 requires teacher logits".into())
    })?;
    let (kd, kd_grad) = distillation_loss(logits, teacher, cfg.temperature)?;
    if cfg.lambda == 1.0 {
        return Ok((kd, kd_grad));
    }
    let (ce, ce_grad) = cross_entropy(logits, labels)?;
    let loss = (1.0 - cfg.lambda) * ce + cfg.lambda * kd;
    let mut grad = ce_grad;
    for (g, k) in grad.data_mut().iter_mut().zip(kd_grad.data()) {
        *g = (1.0 - cfg.lambda) * *g + cfg.lambda * k;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_logits(rng: &mut Rng, n: usize, c: usize, scale: f64) -> Tensor {
        let data: Vec<f64> = (0..n * c).map(|_| rng.uniform_sym(scale)).collect();
        Tensor::new(n, c, data).unwrap()
    }

    #[test]
    fn ce_uniform_logits_is_ln10() {
        let logits = Tensor::zeros(3, 10);
        let (loss, _) = cross_entropy(&logits, &[0, 5, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_confident_correct_is_near_zero() {
        let mut logits = Tensor::zeros(1, 10);
        logits.data_mut()[3] = 50.0;
        let (loss, _) = cross_entropy(&logits, &[3]).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn ce_label_out_of_range() {
        let logits = Tensor::zeros(1, 10);
        assert!(cross_entropy(&logits, &[10]).is_err());
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let mut rng = Rng::new(11);
        let logits = random_logits(&mut rng, 3, 5, 2.0);
        let labels = [0u8, 2, 4];
        let (_, grad) = cross_entropy(&logits, &labels).unwrap();
        let eps = 1e-6;
        for j in 0..logits.len() {
            let mut lp = logits.clone();
            lp.data_mut()[j] += eps;
            let mut lm = logits.clone();
            lm.data_mut()[j] -= eps;
            let (fp, _) = cross_entropy(&lp, &labels).unwrap();
            let (fm, _) = cross_entropy(&lm, &labels).unwrap();
            let fd = (fp - fm) / (2.0 * eps);
            assert!(
                (fd - grad.data()[j]).abs() / (fd.abs() + grad.data()[j].abs() + 1e-12) < 1e-6,
                "j={j}: fd={fd} analytic={}",
                grad.data()[j]
            );
        }
    }

    #[test]
    fn kd_identical_distributions_is_zero() {
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            let a = random_logits(&mut rng, 4, 10, 3.0);
            for t in [0.5, 1.0, 2.0, 4.0] {
                let (loss, grad) = distillation_loss(&a, &a, t).unwrap();
                assert!(loss.abs() < 1e-12);
                assert!(grad.data().iter().all(|&g| g.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn kd_nonnegative_on_random_logits() {
        let mut rng = Rng::new(6);
        for _ in 0..200 {
            let s = random_logits(&mut rng, 2, 10, 5.0);
            let t = random_logits(&mut rng, 2, 10, 5.0);
            let (loss, _) = distillation_loss(&s, &t, 2.0).unwrap();
            assert!(loss >= 0.0);
        }
    }

    #[test]
    fn kd_gradient_closed_form_on_random_pairs() {
        // per-class student gradient must be T·(σ(z/T) − σ(s/T))/n
        let mut rng = Rng::new(7);
        for _ in 0..1000 {
            let n = 1 + rng.below(3);
            let z = random_logits(&mut rng, n, 10, 6.0);
            let s = random_logits(&mut rng, n, 10, 6.0);
            let t = 0.5 + rng.next_f64() * 3.5;
            let (_, grad) = distillation_loss(&z, &s, t).unwrap();
            let mut zt = z.clone();
            zt.data_mut().iter_mut().for_each(|x| *x /= t);
            let mut st = s.clone();
            st.data_mut().iter_mut().for_each(|x| *x /= t);
            let q = softmax_rows(&zt);
            let p = softmax_rows(&st);
            for j in 0..z.len() {
                let expect = t * (q.data()[j] - p.data()[j]) / n as f64;
                assert!((grad.data()[j] - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn kd_direct_summation_oracle() {
        // teacher (0.75, 0.25), student uniform, T=1:
        // KL = 0.75·ln(0.75/0.5) + 0.25·ln(0.25/0.5)
        let q = 4.0f64 / 3.0;
        let teacher = Tensor::new(1, 2, vec![q.ln(), (q / 3.0).ln()]).unwrap();
        // softmax(teacher) = (0.75, 0.25) by construction
        let p = softmax_rows(&teacher);
        assert!((p.at(0, 0) - 0.75).abs() < 1e-12);
        let student = Tensor::zeros(1, 2);
        let (loss, _) = distillation_loss(&student, &teacher, 1.0).unwrap();
        let expect = 0.75 * (0.75f64 / 0.5).ln() + 0.25 * (0.25f64 / 0.5).ln();
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn kd_rejects_nonpositive_temperature() {
        let a = Tensor::zeros(1, 3);
        assert!(distillation_loss(&a, &a, 0.0).is_err());
        assert!(distillation_loss(&a, &a, -1.0).is_err());
    }

    #[test]
    fn combined_degenerate_lambdas() {
        let mut rng = Rng::new(8);
        let logits = random_logits(&mut rng, 3, 10, 3.0);
        let teacher = random_logits(&mut rng, 3, 10, 3.0);
        let labels = [1u8, 4, 7];
        let cfg0 = LossConfig {
            lambda: 0.0,
            temperature: 2.0,
        };
        let cfg1 = LossConfig {
            lambda: 1.0,
            temperature: 2.0,
        };
        let (l0, g0) = combined_loss(&logits, &labels, None, &cfg0).unwrap();
        let (ce, ceg) = cross_entropy(&logits, &labels).unwrap();
        assert_eq!(l0, ce);
        assert_eq!(g0.data(), ceg.data());
        let (l1, g1) = combined_loss(&logits, &labels, Some(&teacher), &cfg1).unwrap();
        let (kd, kdg) = distillation_loss(&logits, &teacher, 2.0).unwrap();
        assert_eq!(l1, kd);
        assert_eq!(g1.data(), kdg.data());
    }

    #[test]
    fn combined_recomposition_at_lambda_03() {
        let mut rng = Rng::new(9);
        let logits = random_logits(&mut rng, 2, 10, 3.0);
        let teacher = random_logits(&mut rng, 2, 10, 3.0);
        let labels = [0u8, 9];
        let cfg = LossConfig {
            lambda: 0.3,
            temperature: 2.0,
        };
        let (l, _) = combined_loss(&logits, &labels, Some(&teacher), &cfg).unwrap();
        let (ce, _) = cross_entropy(&logits, &labels).unwrap();
        let (kd, _) = distillation_loss(&logits, &teacher, 2.0).unwrap();
        assert!((l - (0.7 * ce + 0.3 * kd)).abs() < 1e-12);
    }

    #[test]
    fn combined_linear_in_lambda() {
        let mut rng = Rng::new(10);
        let logits = random_logits(&mut rng, 2, 10, 3.0);
        let teacher = random_logits(&mut rng, 2, 10, 3.0);
        let labels = [3u8, 6];
        let at = |lam: f64| {
            let cfg = LossConfig {
                lambda: lam,
                temperature: 2.0,
            };
            combined_loss(&logits, &labels, Some(&teacher), &cfg)
                .unwrap()
                .0
        };
        let v0 = at(0.0);
        let v1 = at(1.0);
        for lam in [0.0, 0.25, 0.5, 0.75, 1.0] {
            assert!((at(lam) - ((1.0 - lam) * v0 + lam * v1)).abs() < 1e-12);
        }
    }

    #[test]
    fn combined_lambda_positive_requires_teacher() {
        let logits = Tensor::zeros(1, 10);
        let cfg = LossConfig {
            lambda: 0.5,
            temperature: 2.0,
        };
        assert!(combined_loss(&logits, &[0], None, &cfg).is_err());
    }
}
