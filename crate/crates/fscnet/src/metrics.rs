//! Accuracy, retention, and forgetting.
//!
//! Evaluation is 10-way: a prediction is the global argmax over all
//! classes, with ties broken toward the lowest class index. Retention is
//! the mean final accuracy over tasks; forgetting is the mean peak-minus-
//! final drop over all but the last task.

use crate::error::{FscError, Result};
use crate::tensor::Tensor;

/// acc[i][j]: accuracy (%) on task i's test set measured after training
/// task j, defined for j >= i.
#[derive(Debug, Clone)]
pub struct AccuracyMatrix {
    tasks: usize,
    /// row-major upper triangle, entries[i][j - i]
    entries: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new(tasks: usize) -> Self {
        AccuracyMatrix {
            tasks,
            entries: (0..tasks).map(|i| Vec::with_capacity(tasks - i)).collect(),
        }
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    /// Record acc(task i after training task j); must be filled in
    /// column order j = i, i+1, ..., T-1.
    pub fn record(&mut self, task: usize, after: usize, acc: f64) {
        assert!(after >= task && after == task + self.entries[task].len());
        assert!((0.0..=100.0).contains(&acc), "accuracy {acc} out of range");
        self.entries[task].push(acc);
    }

    pub fn get(&self, task: usize, after: usize) -> Option<f64> {
        if after < task {
            return None;
        }
        self.entries[task].get(after - task).copied()
    }

    /// Final-column accuracies acc[i][T-1] for all tasks.
    pub fn final_row(&self) -> Vec<f64> {
        (0..self.tasks)
            .map(|i| self.get(i, self.tasks - 1).expect("matrix complete"))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        (0..self.tasks).all(|i| self.entries[i].len() == self.tasks - i)
    }
}

/// 10-way argmax match rate, as a percentage. Ties go to the lowest
/// class index.
pub fn accuracy(logits: &Tensor, labels: &[u8]) -> Result<f64> {
    let (n, c) = logits.shape();
    if n == 0 {
        return Err(FscError::Parameter("accuracy on empty set".into()));
    }
    if labels.len() != n {
        return Err(FscError::Dimension(format!(
            "accuracy: {n} rows vs {} labels",
            labels.len()
        )));
    }
    let mut correct = 0usize;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let mut best = 0usize;
        for j in 1..c {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == y as usize {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / n as f64)
}

/// Mean of the final-column accuracies.
pub fn retention(final_row: &[f64]) -> Result<f64> {
    if final_row.is_empty() {
        return Err(FscError::Parameter("retention of zero tasks".into()));
    }
    Ok(final_row.iter().sum::<f64>() / final_row.len() as f64)
}

/// Mean over tasks i in [0, T-2] of (max_j acc[i][j] - acc[i][T-1]).
/// The final task is excluded from the average; the max ranges over all
/// measurements of task i.
pub fn forgetting(m: &AccuracyMatrix) -> Result<f64> {
    let t = m.tasks();
    if t < 2 {
        return Err(FscError::Parameter(
            "forgetting undefined for fewer than 2 tasks".into(),
        ));
    }
    let mut total = 0.0;
    for i in 0..t - 1 {
        let peak = (i..t)
            .map(|j| m.get(i, j).expect("matrix complete"))
            .fold(f64::NEG_INFINITY, f64::max);
        total += peak - m.get(i, t - 1).expect("matrix complete");
    }
    Ok(total / (t - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn matrix_from(vals: &[&[f64]]) -> AccuracyMatrix {
        let t = vals.len();
        let mut m = AccuracyMatrix::new(t);
        for j in 0..t {
            for i in 0..=j {
                m.record(i, j, vals[i][j - i]);
            }
        }
        m
    }

    #[test]
    fn accuracy_all_correct_and_ties() {
        let mut logits = Tensor::zeros(2, 10);
        logits.data_mut()[3] = 1.0; // row 0 -> class 3
        // row 1 all zero: tie -> class 0
        assert_eq!(accuracy(&logits, &[3, 0]).unwrap(), 100.0);
        assert_eq!(accuracy(&logits, &[3, 1]).unwrap(), 50.0);
    }

    #[test]
    fn accuracy_empty_is_error() {
        let logits = Tensor::zeros(0, 10);
        assert!(accuracy(&logits, &[]).is_err());
    }

    #[test]
    fn random_logits_near_ten_percent() {
        let mut rng = Rng::new(42);
        let n = 20_000;
        let data: Vec<f64> = (0..n * 10).map(|_| rng.uniform_sym(1.0)).collect();
        let logits = Tensor::new(n, 10, data).unwrap();
        let labels: Vec<u8> = (0..n).map(|_| rng.below(10) as u8).collect();
        let acc = accuracy(&logits, &labels).unwrap();
        // 5-sigma binomial band around 10%
        let sigma = 100.0 * (0.1f64 * 0.9 / n as f64).sqrt();
        assert!((acc - 10.0).abs() < 5.0 * sigma, "acc={acc}");
    }

    #[test]
    fn retention_is_the_mean() {
        assert_eq!(retention(&[90.0; 5]).unwrap(), 90.0);
        assert_eq!(retention(&[70.0]).unwrap(), 70.0);
        let mut rng = Rng::new(1);
        let mut vals: Vec<f64> = (0..5).map(|_| rng.next_f64() * 100.0).collect();
        let r1 = retention(&vals).unwrap();
        vals.reverse(); // permutation invariance
        assert!((retention(&vals).unwrap() - r1).abs() < 1e-12);
    }

    #[test]
    fn forgetting_constant_matrix_is_zero() {
        let m = matrix_from(&[
            &[80.0, 80.0, 80.0],
            &[80.0, 80.0],
            &[80.0],
        ]);
        assert_eq!(forgetting(&m).unwrap(), 0.0);
    }

    #[test]
    fn forgetting_single_drop() {
        let m = matrix_from(&[&[100.0, 80.0], &[95.0]]);
        assert_eq!(forgetting(&m).unwrap(), 20.0);
    }

    #[test]
    fn forgetting_requires_two_tasks() {
        let m = matrix_from(&[&[90.0]]);
        assert!(forgetting(&m).is_err());
    }

    #[test]
    fn forgetting_matches_brute_force_oracle() {
        let mut rng = Rng::new(9);
        for _ in 0..1000 {
            let t = 5;
            let mut vals: Vec<Vec<f64>> = Vec::new();
            for i in 0..t {
                vals.push((0..t - i).map(|_| rng.next_f64() * 100.0).collect());
            }
            let m = matrix_from(&vals.iter().map(|v| v.as_slice()).collect::<Vec<_>>());
            // oracle: enumerate maxima directly from the raw table
            let mut expect = 0.0;
            for (i, row) in vals.iter().enumerate().take(t - 1) {
                let peak = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let fin = row[t - 1 - i];
                expect += peak - fin;
            }
            expect /= (t - 1) as f64;
            assert_eq!(forgetting(&m).unwrap(), expect);
        }
    }
}
