//! The FSC-Net training engine: dual-timescale task learning and offline
//! consolidation.
//!
//! Task learning runs the fast network on every (possibly replay-mixed)
//! batch and updates the slow network every `nn2_update_interval` batches
//! on the same mixed batch, distilling from the fast network's detached
//! logits. After each task, consolidation freezes the fast network and
//! trains the slow network over the replay buffer alone (λ = 0 by
//! default, pure replay).
//!
//! Batch indices count within-epoch from 0, so index 0 triggers a slow-
//! network update at the start of every epoch.

use crate::data::{batches, TaskSplit};
use crate::error::{FscError, Result};
use crate::losses::{combined_loss, cross_entropy, LossConfig};
use crate::metrics::{accuracy, AccuracyMatrix};
use crate::models::{ModelParams, Nn1, Nn1Spec, Nn1Variant, Nn2, Nn2Spec};
use crate::replay::ReplayBuffer;
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor};
use std::fmt::Write as _;

/// Independent stream tags; toggling one consumer (e.g. dropout) must not
/// perturb the others' draws.
mod tag {
    pub const INIT_NN1: u64 = 1;
    pub const INIT_NN2: u64 = 2;
    pub const DATA: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const REPLAY: u64 = 5;
    pub const BUFFER: u64 = 6;
    pub const CONSOL: u64 = 7;
    pub const PENALTY: u64 = 8;
}

/// Gradient update rule. Adam is the default (plain SGD fails to train the
/// slow network at the prescribed learning rates); the choice is part of
/// the canonical config text and therefore of the config hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(FscError::Parameter(format!("unknown optimizer {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        }
    }
}

/// Full hyperparameter configuration. Field defaults are the reference
/// Split-MNIST settings; extra knobs (optimizer, arch, clamp, baseline
/// strengths) exist for the documented ablations and are all captured by
/// the config hash.
#[derive(Debug, Clone)]
pub struct FscConfig {
    pub lr_nn1: f64,
    pub lr_nn2: f64,
    pub batch_size: usize,
    pub epochs_per_task: usize,
    pub consolidation_epochs: usize,
    pub buffer_per_task: usize,
    pub p_replay: f64,
    pub temperature: f64,
    pub lambda_task: f64,
    pub lambda_consol: f64,
    pub grad_clip: f64,
    pub nn2_dropout: f64,
    pub nn2_update_interval: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub arch: Nn1Variant,
    /// Logit clamp on the slow network (ablation switch).
    pub clamp: bool,
    pub ewc_strength: f64,
    pub si_strength: f64,
    pub si_damping: f64,
}

impl Default for FscConfig {
    fn default() -> Self {
        FscConfig {
            lr_nn1: 1e-3,
            lr_nn2: 5e-4,
            batch_size: 64,
            epochs_per_task: 5,
            consolidation_epochs: 2,
            buffer_per_task: 200,
            p_replay: 0.3,
            temperature: 2.0,
            lambda_task: 0.3,
            lambda_consol: 0.0,
            grad_clip: 1.0,
            nn2_dropout: 0.2,
            nn2_update_interval: 10,
            seed: 42,
            optimizer: Optimizer::Adam,
            arch: Nn1Variant::Simple,
            clamp: true,
            ewc_strength: 1e4,
            si_strength: 1e4,
            si_damping: 0.1,
        }
    }
}

impl FscConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("lr_nn1", self.lr_nn1),
            ("lr_nn2", self.lr_nn2),
            ("temperature", self.temperature),
            ("grad_clip", self.grad_clip),
            ("si_damping", self.si_damping),
        ];
        for (name, v) in pos {
            if !(v > 0.0) {
                return Err(FscError::Parameter(format!("{name} must be > 0, got {v}")));
            }
        }
        let unit = [
            ("p_replay", self.p_replay),
            ("lambda_task", self.lambda_task),
            ("lambda_consol", self.lambda_consol),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(FscError::Parameter(format!(
                    "{name} must be in [0,1], got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.nn2_dropout) {
            return Err(FscError::Parameter(format!(
                "nn2_dropout must be in [0,1), got {}",
                self.nn2_dropout
            )));
        }
        if self.batch_size == 0 || self.epochs_per_task == 0 || self.nn2_update_interval == 0 {
            return Err(FscError::Parameter(
                "batch_size, epochs_per_task and nn2_update_interval must be >= 1".into(),
            ));
        }
        if self.ewc_strength < 0.0 || self.si_strength < 0.0 {
            return Err(FscError::Parameter("penalty strengths must be >= 0".into()));
        }
        Ok(())
    }

    /// Apply one `key=value` override. A rejected value leaves the config
    /// untouched.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut next = self.clone();
        next.set_unchecked(key, value)?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    fn set_unchecked(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| FscError::Parameter(format!("bad value {value:?} for {what}"));
        macro_rules! num {
            ($field:ident) => {
                self.$field = value.parse().map_err(|_| bad(key))?
            };
        }
        match key {
            "lr_nn1" => num!(lr_nn1),
            "lr_nn2" => num!(lr_nn2),
            "batch_size" => num!(batch_size),
            "epochs_per_task" => num!(epochs_per_task),
            "consolidation_epochs" => num!(consolidation_epochs),
            "buffer_per_task" => num!(buffer_per_task),
            "p_replay" => num!(p_replay),
            "temperature" => num!(temperature),
            "lambda_task" => num!(lambda_task),
            "lambda_consol" => num!(lambda_consol),
            "grad_clip" => num!(grad_clip),
            "nn2_dropout" => num!(nn2_dropout),
            "nn2_update_interval" => num!(nn2_update_interval),
            "seed" => num!(seed),
            "optimizer" => self.optimizer = Optimizer::parse(value)?,
            "arch" => self.arch = Nn1Variant::parse(value)?,
            "clamp" => {
                self.clamp = match value {
                    "on" | "true" | "1" => true,
                    "off" | "false" | "0" => false,
                    _ => return Err(bad("clamp")),
                }
            }
            "ewc_strength" => num!(ewc_strength),
            "si_strength" => num!(si_strength),
            "si_damping" => num!(si_damping),
            other => {
                return Err(FscError::Parameter(format!(
                    "unknown config key {other:?}"
                )))
            }
        }
        Ok(())
    }

    /// Canonical `key = value` listing, seed excluded (the seed has its
    /// own CSV column; all rows of a sweep share one config hash).
    pub fn canonical(&self, method: &str, dataset: &str) -> String {
        let mut out = String::new();
        writeln!(out, "method = {method}").unwrap();
        writeln!(out, "dataset = {dataset}").unwrap();
        writeln!(out, "lr_nn1 = {}", self.lr_nn1).unwrap();
        writeln!(out, "lr_nn2 = {}", self.lr_nn2).unwrap();
        writeln!(out, "batch_size = {}", self.batch_size).unwrap();
        writeln!(out, "epochs_per_task = {}", self.epochs_per_task).unwrap();
        writeln!(out, "consolidation_epochs = {}", self.consolidation_epochs).unwrap();
        writeln!(out, "buffer_per_task = {}", self.buffer_per_task).unwrap();
        writeln!(out, "p_replay = {}", self.p_replay).unwrap();
        writeln!(out, "temperature = {}", self.temperature).unwrap();
        writeln!(out, "lambda_task = {}", self.lambda_task).unwrap();
        writeln!(out, "lambda_consol = {}", self.lambda_consol).unwrap();
        writeln!(out, "grad_clip = {}", self.grad_clip).unwrap();
        writeln!(out, "nn2_dropout = {}", self.nn2_dropout).unwrap();
        writeln!(out, "nn2_update_interval = {}", self.nn2_update_interval).unwrap();
        writeln!(out, "optimizer = {}", self.optimizer.as_str()).unwrap();
        writeln!(
            out,
            "arch = {}",
            match self.arch {
                Nn1Variant::Simple => "simple",
                Nn1Variant::Deep => "deep",
            }
        )
        .unwrap();
        writeln!(out, "clamp = {}", if self.clamp { "on" } else { "off" }).unwrap();
        writeln!(out, "ewc_strength = {}", self.ewc_strength).unwrap();
        writeln!(out, "si_strength = {}", self.si_strength).unwrap();
        writeln!(out, "si_damping = {}", self.si_damping).unwrap();
        out
    }
}

/// Per-parameter optimizer state (Adam moments; empty for SGD).
#[derive(Debug, Clone)]
pub struct OptState {
    kind: Optimizer,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptState {
    pub fn new(kind: Optimizer, params: &ModelParams) -> Self {
        let (m, v) = match kind {
            Optimizer::Sgd => (Vec::new(), Vec::new()),
            Optimizer::Adam => (
                params.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
                params.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            ),
        };
        OptState { kind, m, v, t: 0 }
    }

    /// Global-norm clip, then one update. Gradients are zeroed after the
    /// step; a non-finite gradient aborts the run.
    pub fn step(&mut self, params: &mut ModelParams, lr: f64, grad_clip: f64) -> Result<()> {
        let scale = clip_scale(params, grad_clip)?;
        match self.kind {
            Optimizer::Sgd => {
                for (_, t) in params.iter_mut() {
                    if t.grad().is_none() {
                        continue;
                    }
                    let n = t.len();
                    for j in 0..n {
                        let g = t.grad().expect("checked")[j] * scale;
                        t.data_mut()[j] -= lr * g;
                    }
                }
            }
            Optimizer::Adam => {
                self.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for (i, (_, t)) in params.iter_mut().enumerate() {
                    if t.grad().is_none() {
                        continue;
                    }
                    let n = t.len();
                    for j in 0..n {
                        let g = t.grad().expect("checked")[j] * scale;
                        let m = &mut self.m[i][j];
                        let v = &mut self.v[i][j];
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        let mhat = *m / bc1;
                        let vhat = *v / bc2;
                        t.data_mut()[j] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        params.zero_grads();
        Ok(())
    }
}

/// Multiplier that brings the global gradient norm down to `grad_clip`
/// (1.0 when already within bounds). Errors on non-finite gradients.
fn clip_scale(params: &ModelParams, grad_clip: f64) -> Result<f64> {
    let mut sq = 0.0;
    for (name, t) in params.iter() {
        if let Some(g) = t.grad() {
            for &x in g.iter() {
                if !x.is_finite() {
                    return Err(FscError::NonFinite(format!("gradient of {name}")));
                }
                sq += x * x;
            }
        }
    }
    let norm = sq.sqrt();
    Ok(if norm > grad_clip { grad_clip / norm } else { 1.0 })
}

/// Vanilla clipped SGD on whatever gradients are populated.
pub fn sgd_step(params: &mut ModelParams, lr: f64, grad_clip: f64) -> Result<()> {
    OptState::new(Optimizer::Sgd, params).step(params, lr, grad_clip)
}

/// Everything one run owns: both networks, the buffer, optimizer state,
/// and the independent rng streams.
pub struct TrainState {
    pub nn1: Nn1,
    pub nn2: Nn2,
    pub buffer: ReplayBuffer,
    pub data_rng: Rng,
    pub dropout_rng: Rng,
    pub replay_rng: Rng,
    pub buffer_rng: Rng,
    pub consol_rng: Rng,
    pub penalty_rng: Rng,
    opt_nn1: OptState,
    opt_nn2: OptState,
    /// Total slow-network updates taken during task learning.
    pub nn2_task_updates: u64,
}

impl TrainState {
    pub fn new(cfg: &FscConfig, input_dim: usize) -> Result<Self> {
        cfg.validate()?;
        let root = Rng::new(cfg.seed);
        let nn1 = Nn1::init(
            Nn1Spec::for_variant(input_dim, cfg.arch),
            &mut root.derive(tag::INIT_NN1),
        );
        let mut nn2_spec = Nn2Spec::standard(input_dim, nn1.spec.summary_dim());
        nn2_spec.dropout = cfg.nn2_dropout;
        if !cfg.clamp {
            nn2_spec.clamp = None;
        }
        let nn2 = Nn2::init(nn2_spec, &mut root.derive(tag::INIT_NN2));
        let opt_nn1 = OptState::new(cfg.optimizer, &nn1.params);
        let opt_nn2 = OptState::new(cfg.optimizer, &nn2.params);
        Ok(TrainState {
            nn1,
            nn2,
            buffer: ReplayBuffer::new(),
            data_rng: root.derive(tag::DATA),
            dropout_rng: root.derive(tag::DROPOUT),
            replay_rng: root.derive(tag::REPLAY),
            buffer_rng: root.derive(tag::BUFFER),
            consol_rng: root.derive(tag::CONSOL),
            penalty_rng: root.derive(tag::PENALTY),
            opt_nn1,
            opt_nn2,
            nn2_task_updates: 0,
        })
    }

    /// One fast-network cross-entropy step on a batch. Returns the loss.
    pub fn nn1_step(&mut self, x: &Tensor, labels: &[u8], cfg: &FscConfig) -> Result<f64> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let fwd = self.nn1.forward(&mut tape, xv)?;
        let (loss, dlogits) = cross_entropy(tape.value(fwd.logits), labels)?;
        tape.backward(fwd.logits, &dlogits)?;
        self.nn1.params.accumulate_grads(&tape, &fwd.binding);
        self.opt_nn1.step(&mut self.nn1.params, cfg.lr_nn1, cfg.grad_clip)?;
        Ok(loss)
    }

    /// Apply the optimizer to whatever fast-network gradients are
    /// accumulated (used by baselines that modify gradients first).
    pub fn nn1_opt_step(&mut self, cfg: &FscConfig) -> Result<()> {
        self.opt_nn1
            .step(&mut self.nn1.params, cfg.lr_nn1, cfg.grad_clip)
    }

    /// One slow-network step on a batch with the given loss mix. The
    /// summary is always detached; teacher logits are only computed when
    /// λ > 0.
    pub fn nn2_step(&mut self, x: &Tensor, labels: &[u8], loss_cfg: &LossConfig, cfg: &FscConfig) -> Result<f64> {
        let (s, teacher) = if loss_cfg.lambda > 0.0 {
            let (s, logits) = self.nn1.eval(x)?;
            (s, Some(logits))
        } else {
            (self.nn1.summary_only(x)?, None)
        };
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let sv = tape.leaf(s);
        let fwd = self
            .nn2
            .forward(&mut tape, xv, sv, true, &mut self.dropout_rng)?;
        let (loss, dlogits) =
            combined_loss(tape.value(fwd.logits), labels, teacher.as_ref(), loss_cfg)?;
        tape.backward(fwd.logits, &dlogits)?;
        self.nn2.params.accumulate_grads(&tape, &fwd.binding);
        self.opt_nn2.step(&mut self.nn2.params, cfg.lr_nn2, cfg.grad_clip)?;
        Ok(loss)
    }
}

/// Algorithm: task learning with replay. Fast-network step every batch;
/// slow-network step at within-epoch batch indices where
/// `index % nn2_update_interval == 0`, on the same mixed batch. Task
/// exemplars enter the buffer after the epochs finish.
pub fn train_task(state: &mut TrainState, task: &TaskSplit, cfg: &FscConfig) -> Result<()> {
    let task_loss = LossConfig {
        lambda: cfg.lambda_task,
        temperature: cfg.temperature,
    };
    for _epoch in 0..cfg.epochs_per_task {
        for (bi, batch) in batches(&task.train, cfg.batch_size, &mut state.data_rng).enumerate() {
            let (x, labels) = state
                .buffer
                .maybe_mix(batch, cfg.p_replay, &mut state.replay_rng);
            state.nn1_step(&x, &labels, cfg)?;
            if bi % cfg.nn2_update_interval == 0 {
                state.nn2_step(&x, &labels, &task_loss, cfg)?;
                state.nn2_task_updates += 1;
            }
        }
    }
    state
        .buffer
        .add_task_samples(task, cfg.buffer_per_task, &mut state.buffer_rng);
    Ok(())
}

/// Algorithm: offline consolidation. The fast network is frozen (bit-
/// identical before and after); the slow network trains over the buffer
/// at λ = lambda_consol (0 ⇒ pure replay, no teacher logits at all).
pub fn consolidate(state: &mut TrainState, cfg: &FscConfig) -> Result<()> {
    if state.buffer.is_empty() || cfg.consolidation_epochs == 0 {
        return Ok(());
    }
    let before = state.nn1.params.checksum();
    let loss_cfg = LossConfig {
        lambda: cfg.lambda_consol,
        temperature: cfg.temperature,
    };
    for _epoch in 0..cfg.consolidation_epochs {
        let batches = state
            .buffer
            .consolidation_batches(cfg.batch_size, &mut state.consol_rng);
        for (x, labels) in batches {
            state.nn2_step(&x, &labels, &loss_cfg, cfg)?;
        }
    }
    debug_assert_eq!(before, state.nn1.params.checksum());
    let _ = before;
    Ok(())
}

const EVAL_CHUNK: usize = 1024;

/// Fast-network accuracy over a full view, evaluated in chunks.
pub fn eval_nn1(nn1: &Nn1, view: &crate::data::DatasetView) -> Result<f64> {
    let n = view.len();
    let mut correct_weighted = 0.0;
    let mut pos = 0;
    while pos < n {
        let end = (pos + EVAL_CHUNK).min(n);
        let idx: Vec<usize> = (pos..end).collect();
        let (x, labels) = view.gather(&idx);
        let (_, logits) = nn1.eval(&x)?;
        correct_weighted += accuracy(&logits, &labels)? * (end - pos) as f64;
        pos = end;
    }
    Ok(correct_weighted / n as f64)
}

/// Slow-network accuracy over a full view (summary from the fast network,
/// dropout off).
pub fn eval_nn2(nn1: &Nn1, nn2: &Nn2, view: &crate::data::DatasetView) -> Result<f64> {
    let n = view.len();
    let mut correct_weighted = 0.0;
    let mut pos = 0;
    while pos < n {
        let end = (pos + EVAL_CHUNK).min(n);
        let idx: Vec<usize> = (pos..end).collect();
        let (x, labels) = view.gather(&idx);
        let s = nn1.summary_only(&x)?;
        let logits = nn2.eval(&x, &s)?;
        correct_weighted += accuracy(&logits, &labels)? * (end - pos) as f64;
        pos = end;
    }
    Ok(correct_weighted / n as f64)
}

/// Full protocol: for each task, task learning then consolidation, then
/// evaluation of both networks on every task seen so far. Returns the
/// final state and the (NN1, NN2) accuracy matrices.
pub fn run_sequence(
    cfg: &FscConfig,
    tasks: &[TaskSplit],
) -> Result<(TrainState, AccuracyMatrix, AccuracyMatrix)> {
    if tasks.is_empty() {
        return Err(FscError::Parameter("run_sequence needs >= 1 task".into()));
    }
    let input_dim = tasks[0].train.feature_dim();
    let mut state = TrainState::new(cfg, input_dim)?;
    let t = tasks.len();
    let mut m1 = AccuracyMatrix::new(t);
    let mut m2 = AccuracyMatrix::new(t);
    for (j, task) in tasks.iter().enumerate() {
        train_task(&mut state, task, cfg)?;
        consolidate(&mut state, cfg)?;
        for (i, seen) in tasks.iter().enumerate().take(j + 1) {
            m1.record(i, j, eval_nn1(&state.nn1, &seen.test)?);
            m2.record(i, j, eval_nn2(&state.nn1, &state.nn2, &seen.test)?);
        }
    }
    Ok((state, m1, m2))
}
