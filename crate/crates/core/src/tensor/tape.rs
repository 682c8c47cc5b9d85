use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
///
/// Handles are plain indices; they are only meaningful for the tape that
/// produced them and become stale after [`Tape::reset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Vector-Jacobian product of a user-defined op.
///
/// Receives the operand values, the output value and the incoming gradient
/// and returns one gradient per operand.
pub type BackwardFn = Box<dyn Fn(&[&Tensor], &Tensor, &[f64]) -> Vec<Vec<f64>>>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ConcatLast(Vec<Var>),
    SumAll(Var),
    RowNorm(Var),
    Custom {
        name: &'static str,
        inputs: Vec<Var>,
        backward: BackwardFn,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose2d",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gelu(_) => "gelu",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::ConcatLast(_) => "concat_last_axis",
            Op::SumAll(_) => "sum_all",
            Op::RowNorm(_) => "row_norm",
            Op::Custom { name, .. } => name,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Transpose(a) | Op::Gelu(a) | Op::Scale(a, _) | Op::SumAll(a) | Op::RowNorm(a) => {
                vec![*a]
            }
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::ConcatLast(parts) => parts.clone(),
            Op::Custom { inputs, .. } => inputs.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    label: Option<String>,
}

/// Record of primitive applications for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's operands have
/// smaller indices than the node itself and a reverse sweep over indices is
/// a valid reverse topological order.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Location of the first non-finite value found on a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct NonFinite {
    pub var: Var,
    pub op: &'static str,
    pub label: Option<String>,
    pub shape: Vec<usize>,
}

impl core::fmt::Display for NonFinite {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match &self.label {
            Some(l) => write!(f, "tensor '{l}' (node {}, {}, shape {:?})", self.var.0, self.op, self.shape),
            None => write!(f, "node {} ({}, shape {:?})", self.var.0, self.op, self.shape),
        }
    }
}

fn gelu_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_pdf(x: f64) -> f64 {
    // 1/sqrt(2*pi)
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// `c[m x n] += a[m x k] * b[k x n]`
fn matmul_into(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

fn transpose_data(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node. Outstanding [`Var`]s become invalid.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            label: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, shape: &[usize], data: Vec<f64>, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].value.requires_grad);
        let mut value = Tensor::new(shape, data).expect("op produced inconsistent shape");
        value.requires_grad = requires_grad;
        self.push(value, op)
    }

    /// Records a leaf. Gradients are collected for it iff
    /// `tensor.requires_grad()`.
    pub fn leaf(&mut self, mut tensor: Tensor) -> Var {
        tensor.grad = None;
        self.push(tensor, Op::Leaf)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_grad())
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, mut tensor: Tensor) -> Var {
        tensor.set_requires_grad(false);
        self.leaf(tensor)
    }

    pub fn set_label(&mut self, var: Var, label: impl Into<String>) {
        self.nodes[var.0].label = Some(label.into());
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, var: Var) -> Option<&[f64]> {
        self.nodes[var.0].value.grad()
    }

    pub fn op_name(&self, var: Var) -> &'static str {
        self.nodes[var.0].op.name()
    }

    /// Operands recorded for `var`.
    pub fn inputs(&self, var: Var) -> Vec<Var> {
        self.nodes[var.0].op.inputs()
    }

    /// First node, in recording order, holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<NonFinite> {
        self.nodes.iter().enumerate().find_map(|(i, n)| {
            n.value.data().iter().any(|v| !v.is_finite()).then(|| NonFinite {
                var: Var(i),
                op: n.op.name(),
                label: n.label.clone(),
                shape: n.value.shape().to_vec(),
            })
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.derived(&[m, n], out, Op::MatMul(a, b)))
    }

    pub fn transpose2d(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::Rank {
                op: "transpose2d",
                expected: 2,
                shape: s.to_vec(),
            });
        }
        let (m, n) = (s[0], s[1]);
        let out = transpose_data(self.value(a).data(), m, n);
        Ok(self.derived(&[n, m], out, Op::Transpose(a)))
    }

    /// Normalizes each row over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::Contract("layer_norm: eps must be > 0".into()));
        }
        let xs = self.shape(x).to_vec();
        let d = *xs.last().expect("rank >= 1");
        for p in [gain, bias] {
            if self.shape(p) != [d] {
                return Err(Error::Shape {
                    op: "layer_norm",
                    lhs: xs.clone(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let xv = self.value(x).data();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = xv.len() / d;
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / libm::sqrt(var + eps);
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        Ok(self.derived(
            &xs,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Exact-erf GELU, `x * Phi(x)`.
    pub fn gelu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = v.data().iter().map(|&x| x * gelu_cdf(x)).collect();
        let shape = v.shape().to_vec();
        self.derived(&shape, out, Op::Gelu(x))
    }

    /// `a + b`, where `b`'s shape is a trailing suffix of `a`'s and is
    /// broadcast over the leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::Shape {
                op: "add",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let shape = sa.to_vec();
        let bv = self.value(b).data();
        let inner = bv.len();
        let out = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + bv[i % inner])
            .collect();
        Ok(self.derived(&shape, out, Op::Add(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(self.shape(a).to_vec())
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("sub", a, b)?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.derived(&shape, out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("mul", a, b)?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.derived(&shape, out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a);
        let out = v.data().iter().map(|x| x * factor).collect();
        let shape = v.shape().to_vec();
        self.derived(&shape, out, Op::Scale(a, factor))
    }

    /// Concatenates along the final axis; all leading dimensions must agree.
    pub fn concat_last_axis(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat_last_axis: no operands".into()))?;
        let s0 = self.shape(first).to_vec();
        let lead = &s0[..s0.len() - 1];
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != s0.len() || &s[..s.len() - 1] != lead {
                return Err(Error::Shape {
                    op: "concat_last_axis",
                    lhs: s0.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[s.len() - 1];
        }
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                let v = self.value(p);
                let w = v.last_dim();
                out.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        Ok(self.derived(&shape, out, Op::ConcatLast(parts.to_vec())))
    }

    /// Sum of every element, as a one-element tensor.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.derived(&[1], vec![s], Op::SumAll(a))
    }

    /// Euclidean norm of each row of a rank-2 tensor. The gradient at a
    /// zero row is defined as zero.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::Rank {
                op: "row_norm",
                expected: 2,
                shape: s.to_vec(),
            });
        }
        let (m, n) = (s[0], s[1]);
        let v = self.value(a).data();
        let out = (0..m)
            .map(|i| libm::sqrt(v[i * n..(i + 1) * n].iter().map(|x| x * x).sum::<f64>()))
            .collect();
        Ok(self.derived(&[m], out, Op::RowNorm(a)))
    }

    /// Records a user-defined op with an explicit backward rule.
    pub fn custom(
        &mut self,
        name: &'static str,
        inputs: &[Var],
        output: Tensor,
        backward: BackwardFn,
    ) -> Var {
        let shape = output.shape().to_vec();
        self.derived(
            &shape,
            output.into_data(),
            Op::Custom {
                name,
                inputs: inputs.to_vec(),
                backward,
            },
        )
    }

    /// Propagates `d root / d leaf` into every trainable leaf reachable from
    /// `root`. Gradients accumulate across calls until the tape is reset.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::Contract(alloc::format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=root.0).map(|_| None).collect();
        adj[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !self.nodes[idx].value.requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[idx].op {
                self.nodes[idx].value.accumulate_grad(&g);
                continue;
            }
            let contributions = self.vjp(idx, &g);
            for (var, delta) in contributions {
                if !self.nodes[var.0].value.requires_grad {
                    continue;
                }
                match adj[var.0].as_mut() {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                    None => adj[var.0] = Some(delta),
                }
            }
        }
        Ok(())
    }

    /// Gradients of node `idx`'s operands given its output gradient `g`.
    fn vjp(&self, idx: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].value.requires_grad;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let mut out = Vec::new();
                if wants(*a) {
                    // dA = dC * B^T
                    let bt = transpose_data(bv.data(), k, n);
                    let mut da = vec![0.0; m * k];
                    matmul_into(g, &bt, &mut da, m, n, k);
                    out.push((*a, da));
                }
                if wants(*b) {
                    // dB = A^T * dC
                    let at = transpose_data(av.data(), m, k);
                    let mut db = vec![0.0; k * n];
                    matmul_into(&at, g, &mut db, k, m, n);
                    out.push((*b, db));
                }
                out
            }
            Op::Transpose(a) => {
                let s = node.value.shape();
                vec![(*a, transpose_data(g, s[0], s[1]))]
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gv = val(*gain).data();
                let d = gv.len();
                let rows = g.len() / d;
                let mut dx = vec![0.0; g.len()];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                let mut dxhat = vec![0.0; d];
                for r in 0..rows {
                    let gr = &g[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..d {
                        dgain[j] += gr[j] * hr[j];
                        dbias[j] += gr[j];
                        dxhat[j] = gr[j] * gv[j];
                        sum_dh += dxhat[j];
                        sum_dh_h += dxhat[j] * hr[j];
                    }
                    let scale = inv_std[r] / d as f64;
                    for j in 0..d {
                        dx[r * d + j] =
                            scale * (d as f64 * dxhat[j] - sum_dh - hr[j] * sum_dh_h);
                    }
                }
                vec![(*x, dx), (*gain, dgain), (*bias, dbias)]
            }
            Op::Gelu(a) => {
                let xv = val(*a).data();
                let dx = xv
                    .iter()
                    .zip(g)
                    .map(|(&x, &g)| g * (gelu_cdf(x) + x * gelu_pdf(x)))
                    .collect();
                vec![(*a, dx)]
            }
            Op::Add(a, b) => {
                let inner = val(*b).len();
                let mut db = vec![0.0; inner];
                for (i, gv) in g.iter().enumerate() {
                    db[i % inner] += gv;
                }
                vec![(*a, g.to_vec()), (*b, db)]
            }
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|v| -v).collect())],
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                vec![
                    (*a, g.iter().zip(bv).map(|(g, y)| g * y).collect()),
                    (*b, g.iter().zip(av).map(|(g, x)| g * x).collect()),
                ]
            }
            Op::Scale(a, f) => vec![(*a, g.iter().map(|v| v * f).collect())],
            Op::ConcatLast(parts) => {
                let total = node.value.last_dim();
                let rows = g.len() / total;
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for p in parts {
                    let w = val(*p).last_dim();
                    let mut dp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        dp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    offset += w;
                    out.push((*p, dp));
                }
                out
            }
            Op::SumAll(a) => vec![(*a, vec![g[0]; val(*a).len()])],
            Op::RowNorm(a) => {
                let av = val(*a);
                let n = av.shape()[1];
                let norms = node.value.data();
                let mut da = vec![0.0; av.len()];
                for (i, (&nv, &gv)) in norms.iter().zip(g).enumerate() {
                    if nv > 0.0 {
                        for j in 0..n {
                            da[i * n + j] = gv * av.data()[i * n + j] / nv;
                        }
                    }
                }
                vec![(*a, da)]
            }
            Op::Custom {
                inputs, backward, ..
            } => {
                let operands: Vec<&Tensor> = inputs.iter().map(|v| val(*v)).collect();
                let grads = backward(&operands, &node.value, g);
                inputs.iter().copied().zip(grads).collect()
            }
        }
    }
}
