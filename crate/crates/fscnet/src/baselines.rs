//! Comparison methods sharing the fast-network backbone: fine-tuning,
//! replay-only, EWC, and SI.
//!
//! All four reuse the exact data pipeline, initialization, rng stream
//! discipline, optimizer, and evaluation code of the main protocol — only
//! the learning rule differs. Evaluation is 10-way, like everywhere else.

use crate::data::{batches, TaskSplit};
use crate::error::{FscError, Result};
use crate::losses::cross_entropy;
use crate::metrics::AccuracyMatrix;
use crate::models::ModelParams;
use crate::protocol::{eval_nn1, FscConfig, Optimizer, TrainState};
use crate::tensor::Tape;

/// Number of examples sampled per task for the Fisher estimate.
pub const EWC_FISHER_SAMPLES: usize = 1000;

/// Quadratic-penalty state shared by EWC and SI: per-parameter importance
/// Ω, anchor θ*, and the strength coefficient c. The penalty gradient is
/// c · Ω_i · (θ_i − θ*_i), i.e. the gradient of (c/2)·Σ Ω_i (θ_i − θ*_i)².
#[derive(Debug, Clone)]
pub struct PenaltyState {
    pub omega: Vec<Vec<f64>>,
    pub anchor: Vec<Vec<f64>>,
    pub strength: f64,
}

impl PenaltyState {
    pub fn new(params: &ModelParams, strength: f64) -> Self {
        PenaltyState {
            omega: params.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            anchor: params.iter().map(|(_, t)| t.data().to_vec()).collect(),
            strength,
        }
    }

    /// Add the penalty gradient into the parameter grad slots. A zero Ω
    /// (first task) adds exactly zero.
    pub fn add_penalty_grads(&self, params: &mut ModelParams) {
        for (i, (_, t)) in params.iter_mut().enumerate() {
            let n = t.len();
            for j in 0..n {
                let g = self.strength * self.omega[i][j] * (t.data()[j] - self.anchor[i][j]);
                t.grad_mut()[j] += g;
            }
        }
    }

    pub fn omega_min(&self) -> f64 {
        self.omega
            .iter()
            .flat_map(|v| v.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Per-step path-integral tracking for SI.
#[derive(Debug, Clone)]
struct SiTracker {
    /// running w_i += −grad_i · Δθ_i
    w: Vec<Vec<f64>>,
    /// θ at the start of the current task
    task_start: Vec<Vec<f64>>,
    damping: f64,
}

impl SiTracker {
    fn new(params: &ModelParams, damping: f64) -> Self {
        SiTracker {
            w: params.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            task_start: params.iter().map(|(_, t)| t.data().to_vec()).collect(),
            damping,
        }
    }

    /// Fold one optimizer step into the path integral, given the total
    /// gradient used for the step and the parameter values before it.
    fn record_step(&mut self, grads: &[Vec<f64>], before: &[Vec<f64>], params: &ModelParams) {
        for (i, (_, t)) in params.iter().enumerate() {
            for j in 0..t.len() {
                let delta = t.data()[j] - before[i][j];
                self.w[i][j] -= grads[i][j] * delta;
            }
        }
    }

    /// Task-boundary consolidation: Ω_i += max(0, w_i)/((Δθ_total)² + ξ),
    /// then reset for the next task. Negative path contributions are
    /// clamped to zero per standard practice, keeping Ω nonnegative.
    fn consolidate_into(&mut self, penalty: &mut PenaltyState, params: &ModelParams) {
        for (i, (_, t)) in params.iter().enumerate() {
            for j in 0..t.len() {
                let total = t.data()[j] - self.task_start[i][j];
                penalty.omega[i][j] += self.w[i][j].max(0.0) / (total * total + self.damping);
                self.w[i][j] = 0.0;
                self.task_start[i][j] = t.data()[j];
            }
        }
        snapshot_into(&mut penalty.anchor, params);
    }
}

fn snapshot(params: &ModelParams) -> Vec<Vec<f64>> {
    params.iter().map(|(_, t)| t.data().to_vec()).collect()
}

fn snapshot_into(dst: &mut [Vec<f64>], params: &ModelParams) {
    for (d, (_, t)) in dst.iter_mut().zip(params.iter()) {
        d.copy_from_slice(t.data());
    }
}

fn snapshot_grads(params: &ModelParams) -> Vec<Vec<f64>> {
    params
        .iter()
        .map(|(_, t)| t.grad().map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect()
}

enum Rule {
    Finetune,
    Replay,
    Ewc(PenaltyState),
    Si(PenaltyState, SiTracker),
}

impl Rule {
    fn uses_replay(&self) -> bool {
        matches!(self, Rule::Replay)
    }
}

/// Fast-network-only training loop shared by all baselines. Returns the
/// final state (for bit-identity checks) and the accuracy matrix.
fn run_nn1_sequence(
    cfg: &FscConfig,
    tasks: &[TaskSplit],
    mut rule: Rule,
) -> Result<(TrainState, AccuracyMatrix)> {
    if tasks.is_empty() {
        return Err(FscError::Parameter("baseline needs >= 1 task".into()));
    }
    let input_dim = tasks[0].train.feature_dim();
    let mut state = TrainState::new(cfg, input_dim)?;
    let t = tasks.len();
    let mut matrix = AccuracyMatrix::new(t);
    for (j, task) in tasks.iter().enumerate() {
        for _epoch in 0..cfg.epochs_per_task {
            for batch in batches(&task.train, cfg.batch_size, &mut state.data_rng) {
                let (x, labels) = if rule.uses_replay() {
                    state
                        .buffer
                        .maybe_mix(batch, cfg.p_replay, &mut state.replay_rng)
                } else {
                    batch
                };
                match &mut rule {
                    Rule::Finetune | Rule::Replay => {
                        state.nn1_step(&x, &labels, cfg)?;
                    }
                    Rule::Ewc(penalty) => {
                        accumulate_ce_grads(&mut state, &x, &labels)?;
                        penalty.add_penalty_grads(&mut state.nn1.params);
                        state.nn1_opt_step(cfg)?;
                    }
                    Rule::Si(penalty, tracker) => {
                        accumulate_ce_grads(&mut state, &x, &labels)?;
                        penalty.add_penalty_grads(&mut state.nn1.params);
                        let grads = snapshot_grads(&state.nn1.params);
                        let before = snapshot(&state.nn1.params);
                        state.nn1_opt_step(cfg)?;
                        tracker.record_step(&grads, &before, &state.nn1.params);
                    }
                }
            }
        }
        if rule.uses_replay() {
            state
                .buffer
                .add_task_samples(task, cfg.buffer_per_task, &mut state.buffer_rng);
        }
        match &mut rule {
            Rule::Ewc(penalty) => {
                let fisher = estimate_fisher(&mut state, task)?;
                for (o, f) in penalty.omega.iter_mut().zip(&fisher) {
                    for (a, &b) in o.iter_mut().zip(f) {
                        *a += b;
                    }
                }
                snapshot_into(&mut penalty.anchor, &state.nn1.params);
            }
            Rule::Si(penalty, tracker) => {
                tracker.consolidate_into(penalty, &state.nn1.params);
            }
            _ => {}
        }
        for (i, seen) in tasks.iter().enumerate().take(j + 1) {
            matrix.record(i, j, eval_nn1(&state.nn1, &seen.test)?);
        }
    }
    Ok((state, matrix))
}

/// Accumulate CE gradients for one batch without stepping.
fn accumulate_ce_grads(
    state: &mut TrainState,
    x: &crate::tensor::Tensor,
    labels: &[u8],
) -> Result<f64> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let fwd = state.nn1.forward(&mut tape, xv)?;
    let (loss, dlogits) = cross_entropy(tape.value(fwd.logits), labels)?;
    tape.backward(fwd.logits, &dlogits)?;
    state.nn1.params.accumulate_grads(&tape, &fwd.binding);
    Ok(loss)
}

/// Diagonal empirical Fisher: mean over sampled task examples of the
/// squared per-example CE gradient. Entries are squares, hence ≥ 0.
fn estimate_fisher(state: &mut TrainState, task: &TaskSplit) -> Result<Vec<Vec<f64>>> {
    let n = task.train.len().min(EWC_FISHER_SAMPLES);
    let picks = state
        .penalty_rng
        .sample_without_replacement(task.train.len(), n);
    let mut fisher: Vec<Vec<f64>> = state
        .nn1
        .params
        .iter()
        .map(|(_, t)| vec![0.0; t.len()])
        .collect();
    for p in picks {
        let (x, labels) = task.train.gather(&[p]);
        state.nn1.params.zero_grads();
        accumulate_ce_grads(state, &x, &labels)?;
        for (f, (_, t)) in fisher.iter_mut().zip(state.nn1.params.iter()) {
            if let Some(g) = t.grad() {
                for (a, b) in f.iter_mut().zip(g) {
                    *a += b * b;
                }
            }
        }
    }
    state.nn1.params.zero_grads();
    let inv = 1.0 / n as f64;
    for f in fisher.iter_mut() {
        f.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(fisher)
}

/// Sequential training without any forgetting mitigation.
pub fn run_finetune(cfg: &FscConfig, tasks: &[TaskSplit]) -> Result<AccuracyMatrix> {
    Ok(run_nn1_sequence(cfg, tasks, Rule::Finetune)?.1)
}

/// Replay buffer mixing without the slow network.
pub fn run_replay_only(cfg: &FscConfig, tasks: &[TaskSplit]) -> Result<AccuracyMatrix> {
    Ok(run_nn1_sequence(cfg, tasks, Rule::Replay)?.1)
}

/// Elastic Weight Consolidation with a diagonal Fisher estimated after
/// each task; importance accumulates across tasks, the anchor tracks the
/// latest task boundary.
///
/// EWC (like SI) always trains with plain SGD regardless of
/// `cfg.optimizer`: adaptive per-parameter scaling renormalizes the
/// penalty gradient by its own second moment, which erases the relative
/// importance weighting the quadratic penalty encodes and leaves the
/// method indistinguishable from fine-tuning at any strength.
pub fn run_ewc(cfg: &FscConfig, tasks: &[TaskSplit], strength: f64) -> Result<AccuracyMatrix> {
    if strength < 0.0 {
        return Err(FscError::Parameter("ewc strength must be >= 0".into()));
    }
    let cfg = sgd_config(cfg);
    let input_dim = tasks
        .first()
        .ok_or_else(|| FscError::Parameter("baseline needs >= 1 task".into()))?
        .train
        .feature_dim();
    let probe = TrainState::new(&cfg, input_dim)?;
    let penalty = PenaltyState::new(&probe.nn1.params, strength);
    Ok(run_nn1_sequence(&cfg, tasks, Rule::Ewc(penalty))?.1)
}

/// Quadratic-penalty baselines run on plain SGD; see [`run_ewc`].
fn sgd_config(cfg: &FscConfig) -> FscConfig {
    let mut cfg = cfg.clone();
    cfg.optimizer = Optimizer::Sgd;
    cfg
}

/// Synaptic Intelligence with online path-integral importance. Trains
/// with plain SGD regardless of `cfg.optimizer`; see [`run_ewc`].
pub fn run_si(
    cfg: &FscConfig,
    tasks: &[TaskSplit],
    strength: f64,
    damping: f64,
) -> Result<AccuracyMatrix> {
    if strength < 0.0 {
        return Err(FscError::Parameter("si strength must be >= 0".into()));
    }
    if damping <= 0.0 {
        return Err(FscError::Parameter("si damping must be > 0".into()));
    }
    let cfg = sgd_config(cfg);
    let input_dim = tasks
        .first()
        .ok_or_else(|| FscError::Parameter("baseline needs >= 1 task".into()))?
        .train
        .feature_dim();
    let probe = TrainState::new(&cfg, input_dim)?;
    let penalty = PenaltyState::new(&probe.nn1.params, strength);
    let tracker = SiTracker::new(&probe.nn1.params, damping);
    Ok(run_nn1_sequence(&cfg, tasks, Rule::Si(penalty, tracker))?.1)
}
