//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! Every operation pushes one node holding its output tensor; `backward`
//! walks the tape in reverse and accumulates gradients for nodes that
//! need them. An instrumented tape also counts forward FLOPs under the
//! conventions documented on each operation (multiply-accumulate = 2,
//! aggregation charged per undirected edge, self-loop terms free,
//! elementwise ops charged one FLOP per element, concatenation free).

use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::graph::Graph;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Handle to one node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Outputs of a graph convolution: the neighborhood aggregation before
/// the linear transform, and the transformed layer output.
#[derive(Debug, Clone, Copy)]
pub struct LayerActivation {
    pub pre_message: Var,
    pub post_update: Var,
}

/// Sparse `n_out x n_in` matrix as (row, col, coeff) triples.
struct SparseMatrix<S> {
    n_out: usize,
    n_in: usize,
    entries: Vec<(u32, u32, S)>,
}

enum Op<S> {
    Leaf,
    /// y = x W + bias.
    Linear { x: Var, w: Var, b: Var },
    /// y = P x for the sparse matrix P.
    Aggregate { x: Var, matrix: SparseMatrix<S> },
    /// Column-wise concatenation.
    Concat { parts: Vec<Var> },
    /// y_i = scale_i * max(x_i, 0); scale folds the dropout mask and the
    /// inverted-dropout factor (all ones at evaluation).
    ReluDropout { x: Var, scale: Vec<S> },
    /// Column means of a rank-2 tensor.
    MeanPool { x: Var },
    /// -log softmax(logits)[label]; probs cached for the backward pass.
    SoftmaxCe { logits: Var, probs: Vec<S>, label: usize },
    /// Mean of scalar nodes (batch loss).
    MeanScalars { parts: Vec<Var> },
    /// Sum of all elements.
    SumAll { x: Var },
    /// Identity with the gradient path severed.
    Detach,
}

struct Node<S: Scalar> {
    value: Tensor<S>,
    needs_grad: bool,
    op: Op<S>,
}

/// Append-only computation record. One tape serves one forward/backward
/// pass (typically a batch); tapes are cheap to create and drop.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Tensor<S>>>,
    flops: Option<u64>,
}

impl<S: Scalar> Tape<S> {
    /// A tape without FLOP instrumentation.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            flops: None,
        }
    }

    /// A tape that counts forward FLOPs.
    pub fn instrumented() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            flops: Some(0),
        }
    }

    /// Forward FLOPs so far; `None` when not instrumented.
    pub fn flops(&self) -> Option<u64> {
        self.flops
    }

    fn charge(&mut self, amount: u64) {
        if let Some(c) = &mut self.flops {
            *c += amount;
        }
    }

    fn push(&mut self, value: Tensor<S>, needs_grad: bool, op: Op<S>) -> Var {
        self.nodes.push(Node {
            value,
            needs_grad,
            op,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Gradient of the last `backward` root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads[v.0].as_ref()
    }

    /// Registers an input tensor. `needs_grad` marks trainable leaves.
    pub fn leaf(&mut self, value: Tensor<S>, needs_grad: bool) -> Var {
        self.push(value, needs_grad, Op::Leaf)
    }

    /// y = x W + bias, x: `[n x a]` (rank 1 counts as one row),
    /// W: `[a x b]`, bias: `[b]`. Charges 2nab FLOPs.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, a) = (self.value(x).rows(), self.value(x).cols());
        let (wr, wb) = (self.value(w).rows(), self.value(w).cols());
        if self.value(w).shape().len() != 2 || a != wr {
            return Err(Error::ShapeMismatch(format!(
                "linear: input {:?} incompatible with weight {:?}",
                self.value(x).shape(),
                self.value(w).shape()
            )));
        }
        if self.value(b).len() != wb {
            return Err(Error::ShapeMismatch(format!(
                "linear: bias {:?} incompatible with weight {:?}",
                self.value(b).shape(),
                self.value(w).shape()
            )));
        }
        let mut out = vec![S::zero(); n * wb];
        {
            let xd = self.value(x).data();
            let wd = self.value(w).data();
            let bd = self.value(b).data();
            for v in 0..n {
                for i in 0..a {
                    let xv = xd[v * a + i];
                    let row = &wd[i * wb..(i + 1) * wb];
                    let dst = &mut out[v * wb..(v + 1) * wb];
                    for j in 0..wb {
                        dst[j] = dst[j] + xv * row[j];
                    }
                }
                for j in 0..wb {
                    out[v * wb + j] = out[v * wb + j] + bd[j];
                }
            }
        }
        self.charge(2 * (n * a * wb) as u64);
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(
            Tensor::matrix(n, wb, out)?,
            needs,
            Op::Linear { x, w, b },
        ))
    }

    /// y = P x. `charged_flops` is supplied by the convolution wrappers
    /// (2 |E| a, diagonal terms free).
    fn aggregate(&mut self, x: Var, matrix: SparseMatrix<S>, charged_flops: u64) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != matrix.n_in || xv.shape().len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "aggregate: input {:?} incompatible with {} nodes",
                xv.shape(),
                matrix.n_in
            )));
        }
        let d = xv.cols();
        let mut out = vec![S::zero(); matrix.n_out * d];
        {
            let xd = xv.data();
            for &(r, c, coeff) in &matrix.entries {
                let src = &xd[c as usize * d..(c as usize + 1) * d];
                let dst = &mut out[r as usize * d..(r as usize + 1) * d];
                for k in 0..d {
                    dst[k] = dst[k] + coeff * src[k];
                }
            }
        }
        self.charge(charged_flops);
        let needs = self.needs(x);
        let value = Tensor::matrix(matrix.n_out, d, out)?;
        Ok(self.push(value, needs, Op::Aggregate { x, matrix }))
    }

    /// Graph convolution with symmetric normalization: the propagation
    /// matrix is D^{-1/2} (A+I) D^{-1/2} with degrees taken after the
    /// self-loop insertion; the aggregation is followed by one linear
    /// transform.
    pub fn gcn_conv(&mut self, g: &Graph, h: Var, w: Var, b: Var) -> Result<LayerActivation> {
        let n = g.num_nodes();
        if self.value(h).rows() != n {
            return Err(Error::ShapeMismatch(format!(
                "gcn: input {:?} does not cover {n} nodes",
                self.value(h).shape()
            )));
        }
        let mut entries = Vec::with_capacity(n + 2 * g.num_edges());
        for v in 0..n {
            let dv = S::from_f64(1.0 / (g.degree(v) as f64 + 1.0));
            entries.push((v as u32, v as u32, dv));
        }
        for &(u, v) in g.edges() {
            let du = g.degree(u as usize) as f64 + 1.0;
            let dv = g.degree(v as usize) as f64 + 1.0;
            let coeff = S::from_f64(1.0 / (du * dv).sqrt());
            entries.push((u, v, coeff));
            entries.push((v, u, coeff));
        }
        let width = self.value(h).cols();
        let matrix = SparseMatrix {
            n_out: n,
            n_in: n,
            entries,
        };
        let pre = self.aggregate(h, matrix, 2 * (g.num_edges() * width) as u64)?;
        let post = self.linear(pre, w, b)?;
        Ok(LayerActivation {
            pre_message: pre,
            post_update: post,
        })
    }

    /// Isomorphism-style convolution: y_v = ((1+eps) h_v + sum of
    /// neighbor rows) W + bias. `epsilon` is a fixed hyperparameter.
    pub fn gin_conv(
        &mut self,
        g: &Graph,
        h: Var,
        w: Var,
        b: Var,
        epsilon: f64,
    ) -> Result<LayerActivation> {
        let n = g.num_nodes();
        if self.value(h).rows() != n {
            return Err(Error::ShapeMismatch(format!(
                "gin: input {:?} does not cover {n} nodes",
                self.value(h).shape()
            )));
        }
        let mut entries = Vec::with_capacity(n + 2 * g.num_edges());
        let diag = S::from_f64(1.0 + epsilon);
        for v in 0..n {
            entries.push((v as u32, v as u32, diag));
        }
        for &(u, v) in g.edges() {
            entries.push((u, v, S::one()));
            entries.push((v, u, S::one()));
        }
        let width = self.value(h).cols();
        let matrix = SparseMatrix {
            n_out: n,
            n_in: n,
            entries,
        };
        let pre = self.aggregate(h, matrix, 2 * (g.num_edges() * width) as u64)?;
        let post = self.linear(pre, w, b)?;
        Ok(LayerActivation {
            pre_message: pre,
            post_update: post,
        })
    }

    /// ReLU followed by inverted dropout: at training time each element
    /// keeps with probability 1-p and is scaled by 1/(1-p); at
    /// evaluation the result is a plain max(x, 0). The mask is drawn
    /// from `rng` as f64 so f32 and f64 tapes see identical masks.
    pub fn relu_dropout(
        &mut self,
        x: Var,
        p: f64,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability {p} must lie in [0, 1)"
            )));
        }
        let xv = self.value(x);
        let len = xv.len();
        let scale: Vec<S> = if training && p > 0.0 {
            let keep = S::from_f64(1.0 / (1.0 - p));
            (0..len)
                .map(|_| {
                    if rng.random::<f64>() >= p {
                        keep
                    } else {
                        S::zero()
                    }
                })
                .collect()
        } else {
            vec![S::one(); len]
        };
        let data: Vec<S> = xv
            .data()
            .iter()
            .zip(&scale)
            .map(|(&v, &s)| s * v.max(S::zero()))
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.charge(len as u64);
        let needs = self.needs(x);
        Ok(self.push(value, needs, Op::ReluDropout { x, scale }))
    }

    /// Concatenates rank-2 tensors along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let n = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 2 || t.rows() != n {
                return Err(Error::ShapeMismatch(format!(
                    "concat: {:?} does not align with {n} rows",
                    t.shape()
                )));
            }
            total += t.cols();
        }
        let mut out = vec![S::zero(); n * total];
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            let w = t.cols();
            for v in 0..n {
                out[v * total + offset..v * total + offset + w]
                    .copy_from_slice(&t.data()[v * w..(v + 1) * w]);
            }
            offset += w;
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::matrix(n, total, out)?,
            needs,
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Column means of a non-empty rank-2 tensor; output is rank 1.
    pub fn mean_pool(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 2 || xv.rows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "mean_pool needs a non-empty rank-2 input, got {:?}",
                xv.shape()
            )));
        }
        let (n, d) = (xv.rows(), xv.cols());
        let inv = S::from_f64(1.0 / n as f64);
        let mut out = vec![S::zero(); d];
        for v in 0..n {
            for j in 0..d {
                out[j] = out[j] + xv.data()[v * d + j];
            }
        }
        for o in &mut out {
            *o = *o * inv;
        }
        self.charge((n * d) as u64);
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(vec![d], out)?, needs, Op::MeanPool { x }))
    }

    /// -log softmax(logits)[label] with max-subtraction stabilization.
    /// Logits may be `[C]` or `[1 x C]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "cross-entropy expects one logit row, got {:?}",
                lv.shape()
            )));
        }
        let c = lv.cols();
        if label >= c {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {c} classes"
            )));
        }
        let data = lv.data();
        let max = data.iter().cloned().fold(S::neg_infinity(), S::max);
        let exps: Vec<S> = data.iter().map(|&v| (v - max).exp()).collect();
        let sum: S = exps.iter().fold(S::zero(), |acc, &e| acc + e);
        let probs: Vec<S> = exps.iter().map(|&e| e / sum).collect();
        let loss = sum.ln() - (data[label] - max);
        self.charge(c as u64);
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            needs,
            Op::SoftmaxCe {
                logits,
                probs,
                label,
            },
        ))
    }

    /// Mean of scalar nodes; the batch-loss reducer.
    pub fn mean_scalars(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("mean of zero scalars".into()));
        }
        for &p in parts {
            if self.value(p).len() != 1 {
                return Err(Error::ShapeMismatch(format!(
                    "mean_scalars got a non-scalar {:?}",
                    self.value(p).shape()
                )));
            }
        }
        let inv = S::from_f64(1.0 / parts.len() as f64);
        let sum = parts
            .iter()
            .fold(S::zero(), |acc, &p| acc + self.value(p).item());
        self.charge(parts.len() as u64);
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::scalar(sum * inv),
            needs,
            Op::MeanScalars {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Sum of every element; handy scalar reducer for verification.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let sum = xv.data().iter().fold(S::zero(), |acc, &v| acc + v);
        self.charge(xv.len() as u64);
        let needs = self.needs(x);
        Ok(self.push(Tensor::scalar(sum), needs, Op::SumAll { x }))
    }

    /// Copies a value onto the tape with the gradient path severed.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(value, false, Op::Detach)
    }

    /// Reverse pass from a scalar root; gradients land in [`Tape::grad`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward root must be scalar, got {:?}",
                self.value(root).shape()
            )));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[root.0] = Some(Tensor::scalar(S::one()));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let gout = match &self.grads[i] {
                Some(g) => g.clone(),
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Leaf | Op::Detach => {}
                Op::Linear { x, w, b } => {
                    let (x, w, b) = (*x, *w, *b);
                    let (n, a) = (self.value(x).rows(), self.value(x).cols());
                    let bw = self.value(w).cols();
                    if self.needs(x) {
                        let mut gx = vec![S::zero(); n * a];
                        let wd = self.value(w).data();
                        for v in 0..n {
                            for j in 0..bw {
                                let g = gout.data()[v * bw + j];
                                for i2 in 0..a {
                                    gx[v * a + i2] = gx[v * a + i2] + g * wd[i2 * bw + j];
                                }
                            }
                        }
                        self.accumulate(x, &gx)?;
                    }
                    if self.needs(w) {
                        let mut gw = vec![S::zero(); a * bw];
                        let xd = self.value(x).data();
                        for v in 0..n {
                            for i2 in 0..a {
                                let xv = xd[v * a + i2];
                                for j in 0..bw {
                                    gw[i2 * bw + j] = gw[i2 * bw + j] + xv * gout.data()[v * bw + j];
                                }
                            }
                        }
                        self.accumulate(w, &gw)?;
                    }
                    if self.needs(b) {
                        let mut gb = vec![S::zero(); bw];
                        for v in 0..n {
                            for j in 0..bw {
                                gb[j] = gb[j] + gout.data()[v * bw + j];
                            }
                        }
                        self.accumulate(b, &gb)?;
                    }
                }
                Op::Aggregate { x, matrix } => {
                    let x = *x;
                    if self.needs(x) {
                        let d = self.value(x).cols();
                        let mut gx = vec![S::zero(); matrix.n_in * d];
                        for &(r, c, coeff) in &matrix.entries {
                            let src = &gout.data()[r as usize * d..(r as usize + 1) * d];
                            let dst = &mut gx[c as usize * d..(c as usize + 1) * d];
                            for k in 0..d {
                                dst[k] = dst[k] + coeff * src[k];
                            }
                        }
                        self.accumulate(x, &gx)?;
                    }
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let total = self.value(Var(i)).cols();
                    let n = self.value(Var(i)).rows();
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(p).cols();
                        if self.needs(p) {
                            let mut gp = vec![S::zero(); n * w];
                            for v in 0..n {
                                gp[v * w..(v + 1) * w].copy_from_slice(
                                    &gout.data()[v * total + offset..v * total + offset + w],
                                );
                            }
                            self.accumulate(p, &gp)?;
                        }
                        offset += w;
                    }
                }
                Op::ReluDropout { x, scale } => {
                    let x = *x;
                    if self.needs(x) {
                        let gx: Vec<S> = self
                            .value(x)
                            .data()
                            .iter()
                            .zip(scale)
                            .zip(gout.data())
                            .map(|((&xv, &s), &g)| {
                                if xv > S::zero() {
                                    s * g
                                } else {
                                    S::zero()
                                }
                            })
                            .collect();
                        self.accumulate(x, &gx)?;
                    }
                }
                Op::MeanPool { x } => {
                    let x = *x;
                    if self.needs(x) {
                        let (n, d) = (self.value(x).rows(), self.value(x).cols());
                        let inv = S::from_f64(1.0 / n as f64);
                        let mut gx = vec![S::zero(); n * d];
                        for v in 0..n {
                            for j in 0..d {
                                gx[v * d + j] = gout.data()[j] * inv;
                            }
                        }
                        self.accumulate(x, &gx)?;
                    }
                }
                Op::SoftmaxCe {
                    logits,
                    probs,
                    label,
                } => {
                    let (logits, label) = (*logits, *label);
                    if self.needs(logits) {
                        let g = gout.item();
                        let gl: Vec<S> = probs
                            .iter()
                            .enumerate()
                            .map(|(j, &p)| {
                                let delta = if j == label { S::one() } else { S::zero() };
                                g * (p - delta)
                            })
                            .collect();
                        self.accumulate(logits, &gl)?;
                    }
                }
                Op::MeanScalars { parts } => {
                    let parts = parts.clone();
                    let share = gout.item() * S::from_f64(1.0 / parts.len() as f64);
                    for p in parts {
                        if self.needs(p) {
                            self.accumulate(p, &[share])?;
                        }
                    }
                }
                Op::SumAll { x } => {
                    let x = *x;
                    if self.needs(x) {
                        let g = gout.item();
                        let gx = vec![g; self.value(x).len()];
                        self.accumulate(x, &gx)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: &[S]) -> Result<()> {
        let shape = self.nodes[v.0].value.shape().to_vec();
        let slot = &mut self.grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(&shape));
        }
        let g = slot.as_mut().expect("just filled").data_mut();
        if g.len() != delta.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient of {} elements against tensor of {}",
                delta.len(),
                g.len()
            )));
        }
        for (dst, &d) in g.iter_mut().zip(delta) {
            *dst = *dst + d;
        }
        Ok(())
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}
