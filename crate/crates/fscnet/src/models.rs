//! The fast network (NN1) and slow consolidation network (NN2).
//!
//! NN1 is a stack of LayerNorm+ReLU blocks whose last block output is the
//! 64-dimensional summary embedding, followed by a linear head. NN2 takes
//! the raw input concatenated with that summary (always detached), runs
//! two Dropout(ReLU(LayerNorm(affine))) blocks, and clamps its logits to
//! [-20, 20] before any softmax consumer.

use crate::error::{FscError, Result};
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};
use std::fmt::Write as _;
use std::path::Path;

/// Logit clamp range applied to NN2 outputs.
pub const LOGIT_CLAMP: (f64, f64) = (-20.0, 20.0);

/// Ordered, uniquely named parameter collection with gradient slots.
#[derive(Debug, Clone)]
pub struct ModelParams {
    entries: Vec<(String, Tensor)>,
}

impl ModelParams {
    pub fn new() -> Self {
        ModelParams {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, t: Tensor) {
        assert!(
            self.entries.iter().all(|(n, _)| n != name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name.to_string(), t));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut (String, Tensor)> {
        self.entries.iter_mut()
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in self.entries.iter_mut() {
            t.zero_grad();
        }
    }

    /// Sum of |grad| over every parameter (0 when no grads allocated).
    pub fn grad_l1(&self) -> f64 {
        self.entries
            .iter()
            .filter_map(|(_, t)| t.grad())
            .flat_map(|g| g.iter())
            .map(|g| g.abs())
            .sum()
    }

    /// FNV-1a over the exact bit patterns of all values, in order.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (name, t) in &self.entries {
            for b in name.as_bytes() {
                h = (h ^ *b as u64).wrapping_mul(0x100_0000_01b3);
            }
            for v in t.data() {
                for b in v.to_bits().to_le_bytes() {
                    h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
                }
            }
        }
        h
    }

    /// Bind every parameter onto a tape as leaves, in order.
    pub fn bind(&self, tape: &mut Tape) -> Binding {
        Binding {
            vars: self
                .entries
                .iter()
                .map(|(_, t)| tape.leaf(t.clone()))
                .collect(),
        }
    }

    /// Pull gradients off the tape into the parameter grad slots
    /// (accumulating).
    pub fn accumulate_grads(&mut self, tape: &Tape, binding: &Binding) {
        for (i, (_, t)) in self.entries.iter_mut().enumerate() {
            let g = tape.grad(binding.vars[i]);
            for (dst, src) in t.grad_mut().iter_mut().zip(g) {
                *dst += src;
            }
        }
    }

    /// Versioned text checkpoint: name, shape, row-major values as exact
    /// f64 bit patterns in hex.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("fscnet-checkpoint v1\n");
        for (name, t) in &self.entries {
            writeln!(out, "{name} {} {}", t.rows(), t.cols()).unwrap();
            let mut line = String::new();
            for v in t.data() {
                write!(line, "{:016x} ", v.to_bits()).unwrap();
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header != "fscnet-checkpoint v1" {
            return Err(FscError::Format {
                file: path.display().to_string(),
                offset: 0,
                detail: format!("unexpected header {header:?}"),
            });
        }
        let mut params = ModelParams::new();
        while let Some(meta) = lines.next() {
            if meta.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = meta.split_whitespace().collect();
            let bad = |d: &str| FscError::Format {
                file: path.display().to_string(),
                offset: 0,
                detail: d.to_string(),
            };
            if parts.len() != 3 {
                return Err(bad(&format!("bad meta line {meta:?}")));
            }
            let rows: usize = parts[1].parse().map_err(|_| bad("bad row count"))?;
            let cols: usize = parts[2].parse().map_err(|_| bad("bad col count"))?;
            let values = lines.next().ok_or_else(|| bad("missing value line"))?;
            let data: Vec<f64> = values
                .split_whitespace()
                .map(|h| u64::from_str_radix(h, 16).map(f64::from_bits))
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad hex value"))?;
            params.push(parts[0], Tensor::new(rows, cols, data)?);
        }
        Ok(params)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::new()
    }
}

/// Tape handles for a bound parameter set, parallel to the params order.
pub struct Binding {
    pub vars: Vec<Var>,
}

/// Kaiming-uniform fan-in init for weights (bound sqrt(6/fan_in)); biases
/// and LayerNorm betas start at 0, LayerNorm gammas at 1.
fn init_weight(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let bound = (6.0 / cols as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform_sym(bound)).collect();
    Tensor::new(rows, cols, data).expect("sized data")
}

fn ones(cols: usize) -> Tensor {
    Tensor::new(1, cols, vec![1.0; cols]).expect("sized data")
}

/// NN1 architecture choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nn1Variant {
    Simple,
    Deep,
}

impl Nn1Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Nn1Variant::Simple),
            "deep" => Ok(Nn1Variant::Deep),
            other => Err(FscError::Parameter(format!("unknown arch {other:?}"))),
        }
    }
}

/// Shape of an NN1 instance: LayerNorm+ReLU blocks over `hidden`, the
/// last block output is the summary embedding.
#[derive(Debug, Clone)]
pub struct Nn1Spec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl Nn1Spec {
    pub fn for_variant(input_dim: usize, variant: Nn1Variant) -> Self {
        let hidden = match variant {
            Nn1Variant::Simple => vec![128, 64, 128, 64],
            // four hidden layers, widths chosen to land near the deep
            // variant's ~165K parameter budget
            Nn1Variant::Deep => vec![168, 128, 96, 64],
        };
        Nn1Spec {
            input_dim,
            hidden,
            classes: 10,
        }
    }

    pub fn summary_dim(&self) -> usize {
        *self.hidden.last().expect("at least one hidden layer")
    }
}

/// Summary embedding and logits from one NN1 forward pass, with the
/// parameter binding so gradients can be read back.
pub struct Nn1Forward {
    pub summary: Var,
    pub logits: Var,
    pub binding: Binding,
}

/// The fast network.
#[derive(Debug, Clone)]
pub struct Nn1 {
    pub spec: Nn1Spec,
    pub params: ModelParams,
}

impl Nn1 {
    pub fn init(spec: Nn1Spec, rng: &mut Rng) -> Self {
        let mut params = ModelParams::new();
        let mut d_in = spec.input_dim;
        for (i, &d_out) in spec.hidden.iter().enumerate() {
            params.push(&format!("w{}", i + 1), init_weight(d_out, d_in, rng));
            params.push(&format!("b{}", i + 1), Tensor::zeros(1, d_out));
            params.push(&format!("ln{}.g", i + 1), ones(d_out));
            params.push(&format!("ln{}.b", i + 1), Tensor::zeros(1, d_out));
            d_in = d_out;
        }
        params.push("head.w", init_weight(spec.classes, d_in, rng));
        params.push("head.b", Tensor::zeros(1, spec.classes));
        Nn1 { spec, params }
    }

    /// Forward through blocks ReLU(LayerNorm(Wx+b)); the fourth (last)
    /// block output is the summary, followed by the linear head.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Nn1Forward> {
        let binding = self.params.bind(tape);
        let mut h = x;
        let per_block = 4; // w, b, gamma, beta
        for i in 0..self.spec.hidden.len() {
            let w = binding.vars[i * per_block];
            let b = binding.vars[i * per_block + 1];
            let g = binding.vars[i * per_block + 2];
            let bt = binding.vars[i * per_block + 3];
            let a = tape.affine(h, w, b)?;
            let n = tape.layer_norm(a, g, bt)?;
            h = tape.relu(n);
        }
        let summary = h;
        let hw = binding.vars[self.spec.hidden.len() * per_block];
        let hb = binding.vars[self.spec.hidden.len() * per_block + 1];
        let logits = tape.affine(summary, hw, hb)?;
        Ok(Nn1Forward {
            summary,
            logits,
            binding,
        })
    }

    /// Summary embedding only, skipping the head entirely (the pure-replay
    /// consolidation path must never compute teacher logits).
    pub fn summary_only(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let mut h = tape.leaf(x.clone());
        let binding = self.params.bind(&mut tape);
        let per_block = 4;
        for i in 0..self.spec.hidden.len() {
            let w = binding.vars[i * per_block];
            let b = binding.vars[i * per_block + 1];
            let g = binding.vars[i * per_block + 2];
            let bt = binding.vars[i * per_block + 3];
            let a = tape.affine(h, w, b)?;
            let n = tape.layer_norm(a, g, bt)?;
            h = tape.relu(n);
        }
        Ok(tape.value(h).clone())
    }

    /// Evaluation helper: (summary, logits) as plain tensors.
    pub fn eval(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let fwd = self.forward(&mut tape, xv)?;
        Ok((
            tape.value(fwd.summary).clone(),
            tape.value(fwd.logits).clone(),
        ))
    }
}

/// Shape of an NN2 instance.
#[derive(Debug, Clone)]
pub struct Nn2Spec {
    pub input_dim: usize,
    pub summary_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub dropout: f64,
    /// Logit clamp; None disables (clamp ablation).
    pub clamp: Option<(f64, f64)>,
}

impl Nn2Spec {
    pub fn standard(input_dim: usize, summary_dim: usize) -> Self {
        Nn2Spec {
            input_dim,
            summary_dim,
            hidden: vec![256, 128],
            classes: 10,
            dropout: 0.2,
            clamp: Some(LOGIT_CLAMP),
        }
    }
}

pub struct Nn2Forward {
    pub logits: Var,
    pub binding: Binding,
}

/// The slow consolidation network.
#[derive(Debug, Clone)]
pub struct Nn2 {
    pub spec: Nn2Spec,
    pub params: ModelParams,
}

impl Nn2 {
    pub fn init(spec: Nn2Spec, rng: &mut Rng) -> Self {
        let mut params = ModelParams::new();
        let mut d_in = spec.input_dim + spec.summary_dim;
        for (i, &d_out) in spec.hidden.iter().enumerate() {
            params.push(&format!("w{}", i + 1), init_weight(d_out, d_in, rng));
            params.push(&format!("b{}", i + 1), Tensor::zeros(1, d_out));
            params.push(&format!("ln{}.g", i + 1), ones(d_out));
            params.push(&format!("ln{}.b", i + 1), Tensor::zeros(1, d_out));
            d_in = d_out;
        }
        params.push("head.w", init_weight(spec.classes, d_in, rng));
        params.push("head.b", Tensor::zeros(1, spec.classes));
        Nn2 { spec, params }
    }

    /// Forward over [x; s]. `s` must already be detached (a plain leaf);
    /// no gradient can flow into NN1 through here by construction.
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        s: Var,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Nn2Forward> {
        let sd = tape.value(s).cols();
        let xd = tape.value(x).cols();
        if sd != self.spec.summary_dim || xd != self.spec.input_dim {
            return Err(FscError::Dimension(format!(
                "nn2: x has {xd} cols (want {}), s has {sd} cols (want {})",
                self.spec.input_dim, self.spec.summary_dim
            )));
        }
        let binding = self.params.bind(tape);
        let mut h = tape.concat_cols(x, s)?;
        let per_block = 4;
        for i in 0..self.spec.hidden.len() {
            let w = binding.vars[i * per_block];
            let b = binding.vars[i * per_block + 1];
            let g = binding.vars[i * per_block + 2];
            let bt = binding.vars[i * per_block + 3];
            let a = tape.affine(h, w, b)?;
            let n = tape.layer_norm(a, g, bt)?;
            let r = tape.relu(n);
            h = tape.dropout(r, self.spec.dropout, training, rng)?;
        }
        let hw = binding.vars[self.spec.hidden.len() * per_block];
        let hb = binding.vars[self.spec.hidden.len() * per_block + 1];
        let raw = tape.affine(h, hw, hb)?;
        let logits = match self.spec.clamp {
            Some((lo, hi)) => tape.clamp(raw, lo, hi)?,
            None => raw,
        };
        Ok(Nn2Forward { logits, binding })
    }

    /// Evaluation helper (dropout off).
    pub fn eval(&self, x: &Tensor, s: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let sv = tape.leaf(s.clone());
        // rng is untouched in eval mode
        let mut dummy = Rng::new(0);
        let fwd = self.forward(&mut tape, xv, sv, false, &mut dummy)?;
        Ok(tape.value(fwd.logits).clone())
    }
}

/// Max relative error between the analytic gradients stored in `params`'
/// grad slots and central finite differences of `f`.
///
/// `f` must be a pure function of the parameter values (re-seed any rng
/// it uses internally on every call).
pub fn grad_check<F>(mut f: F, params: &ModelParams, eps: f64) -> Result<f64>
where
    F: FnMut(&ModelParams) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(FscError::Parameter("grad_check: eps must be > 0".into()));
    }
    let mut work = params.clone();
    let mut max_rel = 0.0f64;
    for i in 0..params.len() {
        let n = params.tensor(i).len();
        for j in 0..n {
            let orig = params.tensor(i).data()[j];
            let analytic = params
                .tensor(i)
                .grad()
                .map(|g| g[j])
                .unwrap_or(0.0);
            work.tensor_mut(i).data_mut()[j] = orig + eps;
            let fp = f(&work)?;
            work.tensor_mut(i).data_mut()[j] = orig - eps;
            let fm = f(&work)?;
            work.tensor_mut(i).data_mut()[j] = orig;
            if !fp.is_finite() || !fm.is_finite() {
                return Err(FscError::NonFinite("grad_check objective".into()));
            }
            let numeric = (fp - fm) / (2.0 * eps);
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
