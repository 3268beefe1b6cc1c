//! Dense 2-D tensors with reverse-mode gradients.
//!
//! This is not a general autodiff engine: it supports exactly the
//! operations the two networks need (affine, ReLU, LayerNorm, dropout,
//! clamp, column concat). Forward passes are recorded on a [`Tape`];
//! gradients flow backwards from a seed injected at any recorded node
//! (the losses compute `dL/dlogits` analytically and seed there).
//!
//! Values are f64 throughout. Any NaN/Inf produced by a forward or
//! backward pass is a hard error.

use crate::error::{FscError, Result};
use crate::rng::Rng;
use ndarray::ArrayView2;

/// Dense row-major 2-D array with an optional gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(FscError::Dimension(format!(
                "data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Tensor {
            rows,
            cols,
            data,
            grad: None,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            grad: None,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(FscError::Dimension("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The gradient accumulator, allocated to zeros on first access.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &self.data).expect("shape checked")
    }
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(FscError::NonFinite(what.to_string()))
    }
}

fn check_finite_slice(s: &[f64], what: &str) -> Result<()> {
    if s.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(FscError::NonFinite(what.to_string()))
    }
}

/// a · b with optional transposes (shapes given are pre-transpose),
/// returned as a flat row-major buffer. Delegates to ndarray's matmul.
fn matmul(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Vec<f64> {
    let av = if ta { a.view().reversed_axes() } else { a.view() };
    let bv = if tb { b.view().reversed_axes() } else { b.view() };
    let prod = av.dot(&bv);
    prod.into_raw_vec_and_offset().0
}

fn acc(out: &mut [f64], inc: &[f64]) {
    debug_assert_eq!(out.len(), inc.len());
    for (o, p) in out.iter_mut().zip(inc) {
        *o += p;
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    /// out = x·Wᵀ + b
    Affine { x: Var, w: Var, b: Var },
    Relu { x: Var },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        /// (x - mu) / sqrt(var + eps), cached for the backward pass
        xhat: Vec<f64>,
        /// per-row 1 / sqrt(var + eps)
        inv_std: Vec<f64>,
    },
    Dropout {
        x: Var,
        /// per-element multiplier: 0 or 1/(1-p)
        mask: Vec<f64>,
    },
    Clamp { x: Var, lo: f64, hi: f64 },
    ConcatCols { a: Var, b: Var },
}

struct Node {
    value: Tensor,
    grad: Vec<f64>,
    op: Op,
}

/// Numerical stabilizer for LayerNorm's variance; the constant-row case
/// maps to exactly zero because of it.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Record of one forward computation; freed wholesale after each step.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node { value, grad, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].grad
    }

    /// out = x·Wᵀ + b, bias broadcast over rows.
    /// x: n×d_in, w: d_out×d_in, b: 1×d_out.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, d_in) = self.value(x).shape();
        let (d_out, wd_in) = self.value(w).shape();
        let (br, bd) = self.value(b).shape();
        if d_in != wd_in || br != 1 || bd != d_out {
            return Err(FscError::Dimension(format!(
                "affine: x {n}x{d_in}, w {d_out}x{wd_in}, b {br}x{bd}"
            )));
        }
        let mut out = Tensor::zeros(n, d_out);
        for r in 0..n {
            out.data[r * d_out..(r + 1) * d_out].copy_from_slice(&self.value(b).data);
        }
        let prod = matmul(self.value(x), false, self.value(w), true);
        acc(&mut out.data, &prod);
        check_finite(&out, "affine forward")?;
        Ok(self.push(out, Op::Affine { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Tensor {
            rows: v.rows,
            cols: v.cols,
            data: v.data.iter().map(|&a| a.max(0.0)).collect(),
            grad: None,
        };
        self.push(out, Op::Relu { x })
    }

    /// Per-row normalization, scaled by gamma and shifted by beta
    /// (both 1×d).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (n, d) = self.value(x).shape();
        if self.value(gamma).shape() != (1, d) || self.value(beta).shape() != (1, d) {
            return Err(FscError::Dimension(format!(
                "layer_norm: x {n}x{d}, gamma {:?}, beta {:?}",
                self.value(gamma).shape(),
                self.value(beta).shape()
            )));
        }
        let mut xhat = vec![0.0; n * d];
        let mut inv_std = vec![0.0; n];
        let mut out = Tensor::zeros(n, d);
        {
            let xv = self.value(x);
            let g = &self.value(gamma).data;
            let bt = &self.value(beta).data;
            for r in 0..n {
                let row = xv.row(r);
                let mu = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|&a| (a - mu) * (a - mu)).sum::<f64>() / d as f64;
                let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                inv_std[r] = is;
                for c in 0..d {
                    let xh = (row[c] - mu) * is;
                    xhat[r * d + c] = xh;
                    out.data[r * d + c] = g[c] * xh + bt[c];
                }
            }
        }
        check_finite(&out, "layer_norm forward")?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability p and survivors are scaled by 1/(1-p); in eval mode
    /// this is the identity.
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(FscError::Parameter(format!("dropout p={p} not in [0,1)")));
        }
        let v = self.value(x);
        if !training || p == 0.0 {
            let out = v.clone();
            let mask = vec![1.0; out.len()];
            return Ok(self.push(out, Op::Dropout { x, mask }));
        }
        let scale = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..v.len())
            .map(|_| if rng.bernoulli(p) { 0.0 } else { scale })
            .collect();
        let out = Tensor {
            rows: v.rows,
            cols: v.cols,
            data: v.data.iter().zip(&mask).map(|(&a, &m)| a * m).collect(),
            grad: None,
        };
        Ok(self.push(out, Op::Dropout { x, mask }))
    }

    /// Elementwise clamp. Gradients pass only strictly inside (lo, hi).
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo >= hi {
            return Err(FscError::Parameter(format!("clamp: lo {lo} >= hi {hi}")));
        }
        let v = self.value(x);
        let out = Tensor {
            rows: v.rows,
            cols: v.cols,
            data: v.data.iter().map(|&a| a.clamp(lo, hi)).collect(),
            grad: None,
        };
        Ok(self.push(out, Op::Clamp { x, lo, hi }))
    }

    /// [a; b] along columns.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, p) = self.value(a).shape();
        let (nb, q) = self.value(b).shape();
        if na != nb {
            return Err(FscError::Dimension(format!(
                "concat_cols: {na} rows vs {nb} rows"
            )));
        }
        let mut out = Tensor::zeros(na, p + q);
        for r in 0..na {
            out.data[r * (p + q)..r * (p + q) + p].copy_from_slice(self.value(a).row(r));
            out.data[r * (p + q) + p..(r + 1) * (p + q)].copy_from_slice(self.value(b).row(r));
        }
        Ok(self.push(out, Op::ConcatCols { a, b }))
    }

    /// Inject `seed` as dL/d(value of `at`) and propagate to all
    /// ancestors. Gradients accumulate, so multiple seeds may be injected
    /// before reading leaves.
    pub fn backward(&mut self, at: Var, seed: &Tensor) -> Result<()> {
        if self.value(at).shape() != seed.shape() {
            return Err(FscError::Dimension(format!(
                "backward seed {:?} vs value {:?}",
                seed.shape(),
                self.value(at).shape()
            )));
        }
        check_finite(seed, "backward seed")?;
        for (g, s) in self.nodes[at.0].grad.iter_mut().zip(&seed.data) {
            *g += s;
        }
        for i in (0..=at.0).rev() {
            // split off the current node so we can borrow parents mutably
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            match &node.op {
                Op::Leaf => {}
                Op::Affine { x, w, b } => {
                    let (n, d_out) = node.value.shape();
                    let dout = Tensor::new(n, d_out, node.grad.clone())?;
                    // dx += dout·W ; dW += doutᵀ·x ; db += colsum(dout)
                    let dx = matmul(&dout, false, &before[w.0].value, false);
                    let dw = matmul(&dout, true, &before[x.0].value, false);
                    acc(&mut before[x.0].grad, &dx);
                    acc(&mut before[w.0].grad, &dw);
                    let gb = &mut before[b.0].grad;
                    for r in 0..n {
                        for c in 0..d_out {
                            gb[c] += dout.data[r * d_out + c];
                        }
                    }
                }
                Op::Relu { x } => {
                    let xv = &before[x.0].value.data;
                    let gx = &mut before[x.0].grad;
                    for (j, &g) in node.grad.iter().enumerate() {
                        if xv[j] > 0.0 {
                            gx[j] += g;
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let (n, d) = node.value.shape();
                    let gval = before[gamma.0].value.data.clone();
                    {
                        let gg = &mut before[gamma.0].grad;
                        for r in 0..n {
                            for c in 0..d {
                                gg[c] += node.grad[r * d + c] * xhat[r * d + c];
                            }
                        }
                    }
                    {
                        let gb = &mut before[beta.0].grad;
                        for r in 0..n {
                            for c in 0..d {
                                gb[c] += node.grad[r * d + c];
                            }
                        }
                    }
                    let gx = &mut before[x.0].grad;
                    for r in 0..n {
                        // dxhat = dy * gamma
                        let mut mean_dxhat = 0.0;
                        let mut mean_dxhat_xhat = 0.0;
                        for c in 0..d {
                            let dxh = node.grad[r * d + c] * gval[c];
                            mean_dxhat += dxh;
                            mean_dxhat_xhat += dxh * xhat[r * d + c];
                        }
                        mean_dxhat /= d as f64;
                        mean_dxhat_xhat /= d as f64;
                        for c in 0..d {
                            let dxh = node.grad[r * d + c] * gval[c];
                            gx[r * d + c] += inv_std[r]
                                * (dxh - mean_dxhat - xhat[r * d + c] * mean_dxhat_xhat);
                        }
                    }
                }
                Op::Dropout { x, mask } => {
                    let gx = &mut before[x.0].grad;
                    for (j, &g) in node.grad.iter().enumerate() {
                        gx[j] += g * mask[j];
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = &before[x.0].value.data;
                    let gx = &mut before[x.0].grad;
                    for (j, &g) in node.grad.iter().enumerate() {
                        if xv[j] > *lo && xv[j] < *hi {
                            gx[j] += g;
                        }
                    }
                }
                Op::ConcatCols { a, b } => {
                    let (n, _) = node.value.shape();
                    let p = before[a.0].value.cols();
                    let q = before[b.0].value.cols();
                    {
                        let ga = &mut before[a.0].grad;
                        for r in 0..n {
                            for c in 0..p {
                                ga[r * p + c] += node.grad[r * (p + q) + c];
                            }
                        }
                    }
                    let gb = &mut before[b.0].grad;
                    for r in 0..n {
                        for c in 0..q {
                            gb[r * q + c] += node.grad[r * (p + q) + p + c];
                        }
                    }
                }
            }
        }
        for node in &self.nodes[..=at.0] {
            check_finite_slice(&node.grad, "backward pass")?;
        }
        Ok(())
    }
}
