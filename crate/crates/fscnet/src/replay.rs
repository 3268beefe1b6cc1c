//! Replay buffer with per-task exemplar storage.
//!
//! Exemplars are stored post-preprocessing (standardized), so replayed
//! and fresh samples are homogeneous. Buffer contents depend only on the
//! data and the sampling seed, never on model state.

use crate::data::TaskSplit;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// One stored exemplar.
#[derive(Debug, Clone)]
pub struct Exemplar {
    pub task_id: usize,
    /// Index into the task's train view, kept for auditing.
    pub source_index: usize,
    pub input: Vec<f64>,
    pub label: u8,
}

/// Per-task exemplar store with uniform seeded sampling.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    exemplars: Vec<Exemplar>,
    feature_dim: usize,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    /// Draw `n` samples uniformly without replacement from the task's
    /// train split and store copies. Requests beyond the task size are
    /// clamped with a warning on stderr.
    pub fn add_task_samples(&mut self, task: &TaskSplit, n: usize, rng: &mut Rng) {
        let avail = task.train.len();
        let n = if n > avail {
            eprintln!(
                "warning: requested {n} exemplars from task {} with only {avail} samples; clamping",
                task.task_id
            );
            avail
        } else {
            n
        };
        if n == 0 {
            return;
        }
        self.feature_dim = task.train.feature_dim();
        for pos in rng.sample_without_replacement(avail, n) {
            self.exemplars.push(Exemplar {
                task_id: task.task_id,
                source_index: pos,
                input: task.train.input_row(pos).to_vec(),
                label: task.train.label(pos),
            });
        }
    }

    fn draw_batch(&self, n: usize, rng: &mut Rng) -> (Tensor, Vec<u8>) {
        let picks: Vec<usize> = if self.exemplars.len() >= n {
            rng.sample_without_replacement(self.exemplars.len(), n)
        } else {
            // smaller buffer than batch: draw with replacement
            (0..n).map(|_| rng.below(self.exemplars.len())).collect()
        };
        let mut data = Vec::with_capacity(n * self.feature_dim);
        let mut labels = Vec::with_capacity(n);
        for p in picks {
            data.extend_from_slice(&self.exemplars[p].input);
            labels.push(self.exemplars[p].label);
        }
        (
            Tensor::new(n, self.feature_dim, data).expect("sized data"),
            labels,
        )
    }

    /// With probability `p_replay`, concatenate a same-size replay batch
    /// onto the incoming batch; otherwise (or when empty) pass through.
    pub fn maybe_mix(
        &self,
        batch: (Tensor, Vec<u8>),
        p_replay: f64,
        rng: &mut Rng,
    ) -> (Tensor, Vec<u8>) {
        if self.is_empty() || !rng.bernoulli(p_replay) {
            return batch;
        }
        let (x, mut labels) = batch;
        let n = x.rows();
        let (rx, rl) = self.draw_batch(n, rng);
        let d = x.cols();
        let mut data = Vec::with_capacity(2 * n * d);
        data.extend_from_slice(x.data());
        data.extend_from_slice(rx.data());
        labels.extend_from_slice(&rl);
        (Tensor::new(2 * n, d, data).expect("sized data"), labels)
    }

    /// One consolidation epoch: a seeded shuffle of the full buffer,
    /// emitted in batches with the final partial batch included. Empty
    /// buffer gives an empty stream.
    pub fn consolidation_batches(
        &self,
        batch_size: usize,
        rng: &mut Rng,
    ) -> Vec<(Tensor, Vec<u8>)> {
        if self.is_empty() {
            return Vec::new();
        }
        let mut order: Vec<usize> = (0..self.exemplars.len()).collect();
        rng.shuffle(&mut order);
        order
            .chunks(batch_size)
            .map(|chunk| {
                let mut data = Vec::with_capacity(chunk.len() * self.feature_dim);
                let mut labels = Vec::with_capacity(chunk.len());
                for &p in chunk {
                    data.extend_from_slice(&self.exemplars[p].input);
                    labels.push(self.exemplars[p].label);
                }
                (
                    Tensor::new(chunk.len(), self.feature_dim, data).expect("sized data"),
                    labels,
                )
            })
            .collect()
    }

    /// Audit dump: one CSV line per exemplar.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("index,task,source_index,label\n");
        for (i, e) in self.exemplars.iter().enumerate() {
            out.push_str(&format!("{i},{},{},{}\n", e.task_id, e.source_index, e.label));
        }
        out
    }
}
