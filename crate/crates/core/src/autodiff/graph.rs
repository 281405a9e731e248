use std::collections::BTreeMap;

use rustfft::FftDirection;

use super::fft::{
    fft_cols, half_len, irfft_rows, irfft_rows_adjoint, rfft_rows, rfft_rows_adjoint,
};
use super::tensor::{Tensor, C64};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// Primitive applications. Shapes are channel-first with a leading batch
/// axis: `(B, C, N)` in 1D and `(B, C, Ny, Nx)` in 2D.
#[derive(Debug, Clone)]
pub enum Op {
    Input(String),
    Param(String),
    /// `y[b, o, s] = sum_i w[o, i] x[b, i, s] + bias[o]`.
    Linear { x: NodeId, w: NodeId, bias: Option<NodeId> },
    /// Elementwise with size-1 broadcasting; operands share rank.
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `exp(clamp(x, -c, c))` when `clip = Some(c)`.
    Exp { x: NodeId, clip: Option<f64> },
    Gelu(NodeId),
    /// Concatenation along the channel axis.
    Concat(Vec<NodeId>),
    /// Keeps the batch axis and reshapes the rest to `tail`.
    Reshape { x: NodeId, tail: Vec<usize> },
    /// Swaps the last two axes.
    SwapLast2(NodeId),
    Rfft(NodeId),
    Irfft { x: NodeId, n: usize },
    Rfft2(NodeId),
    Irfft2 { x: NodeId, ny: usize, nx: usize },
    /// Keeps the first `m` bins of the last axis.
    Truncate { x: NodeId, m: usize },
    /// Zero-pads the last axis to `k` bins.
    Pad { x: NodeId, k: usize },
    /// Keeps rows `[0, m) ∪ [ny - m, ny)` and columns `[0, m)` of a 2D half spectrum.
    Truncate2 { x: NodeId, m: usize },
    Pad2 { x: NodeId, ny: usize, kx: usize },
    /// `y[b, o, k] = sum_i x[b, i, k] w[k, i, o]` over flattened trailing mode axes.
    ModalMul { x: NodeId, w: NodeId },
    /// Mean over the batch of `||pred_b - target_b|| / ||target_b||`.
    RelL2 { pred: NodeId, target: NodeId },
    /// `sum x * c` for a fixed tensor `c`.
    DotConst { x: NodeId, c: Tensor },
    SumAll(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    label: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, NodeId>,
    inputs: BTreeMap<String, NodeId>,
    values: Vec<Option<Tensor>>,
}

fn shape_err(primitive: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        primitive,
        detail: detail.into(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> NodeId {
        self.nodes.push(Node { op, label: None });
        self.values.clear();
        NodeId(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn set_label(&mut self, id: NodeId, label: impl Into<String>) {
        self.nodes[id.0].label = Some(label.into());
    }

    fn describe(&self, id: NodeId) -> String {
        match &self.nodes[id.0].label {
            Some(l) => format!("{l} (#{})", id.0),
            None => format!("#{}", id.0),
        }
    }

    pub fn input(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.inputs.get(name) {
            return id;
        }
        let id = self.push(Op::Input(name.to_string()));
        self.inputs.insert(name.to_string(), id);
        id
    }

    pub fn param(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(Op::Param(name.to_string()));
        self.params.insert(name.to_string(), id);
        id
    }

    pub fn param_names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, bias: Option<NodeId>) -> NodeId {
        self.push(Op::Linear { x, w, bias })
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }
    pub fn exp(&mut self, x: NodeId, clip: Option<f64>) -> NodeId {
        self.push(Op::Exp { x, clip })
    }
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Gelu(x))
    }
    pub fn concat(&mut self, xs: Vec<NodeId>) -> NodeId {
        self.push(Op::Concat(xs))
    }
    pub fn reshape(&mut self, x: NodeId, tail: Vec<usize>) -> NodeId {
        self.push(Op::Reshape { x, tail })
    }
    pub fn swap_last2(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SwapLast2(x))
    }
    pub fn rfft(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Rfft(x))
    }
    pub fn irfft(&mut self, x: NodeId, n: usize) -> NodeId {
        self.push(Op::Irfft { x, n })
    }
    pub fn rfft2(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Rfft2(x))
    }
    pub fn irfft2(&mut self, x: NodeId, ny: usize, nx: usize) -> NodeId {
        self.push(Op::Irfft2 { x, ny, nx })
    }
    pub fn truncate(&mut self, x: NodeId, m: usize) -> NodeId {
        self.push(Op::Truncate { x, m })
    }
    pub fn pad(&mut self, x: NodeId, k: usize) -> NodeId {
        self.push(Op::Pad { x, k })
    }
    pub fn truncate2(&mut self, x: NodeId, m: usize) -> NodeId {
        self.push(Op::Truncate2 { x, m })
    }
    pub fn pad2(&mut self, x: NodeId, ny: usize, kx: usize) -> NodeId {
        self.push(Op::Pad2 { x, ny, kx })
    }
    pub fn modal_mul(&mut self, x: NodeId, w: NodeId) -> NodeId {
        self.push(Op::ModalMul { x, w })
    }
    pub fn rel_l2(&mut self, pred: NodeId, target: NodeId) -> NodeId {
        self.push(Op::RelL2 { pred, target })
    }
    pub fn dot_const(&mut self, x: NodeId, c: Tensor) -> NodeId {
        self.push(Op::DotConst { x, c })
    }
    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SumAll(x))
    }

    /// Value computed by the last forward pass.
    pub fn value(&self, id: NodeId) -> Result<&Tensor> {
        self.values
            .get(id.0)
            .and_then(|v| v.as_ref())
            .ok_or_else(|| Error::State(format!("node {} has no value; run forward first", self.describe(id))))
    }

    /// Evaluates every node in order.
    pub fn forward(&mut self, params: &BTreeMap<String, Tensor>, inputs: &BTreeMap<String, Tensor>) -> Result<()> {
        match self.nodes.len() {
            0 => Ok(()),
            n => self.forward_to(params, inputs, NodeId(n - 1)),
        }
    }

    /// Evaluates nodes `0..=last` only; later nodes (a loss, say) may lack inputs.
    pub fn forward_to(
        &mut self,
        params: &BTreeMap<String, Tensor>,
        inputs: &BTreeMap<String, Tensor>,
        last: NodeId,
    ) -> Result<()> {
        self.values.clear();
        let mut values: Vec<Option<Tensor>> = Vec::with_capacity(last.0 + 1);
        for (idx, node) in self.nodes[..=last.0].iter().enumerate() {
            let v = |id: &NodeId| values[id.0].as_ref().expect("inputs precede their consumers");
            let out = match &node.op {
                Op::Input(name) => inputs
                    .get(name)
                    .cloned()
                    .ok_or_else(|| invalid(format!("missing graph input `{name}`")))?,
                Op::Param(name) => params
                    .get(name)
                    .cloned()
                    .ok_or_else(|| invalid(format!("missing parameter `{name}`")))?,
                Op::Linear { x, w, bias } => linear_fwd(v(x), v(w), bias.as_ref().map(v))?,
                Op::Add(a, b) => broadcast_fwd(v(a), v(b), "add", |p, q| p + q)?,
                Op::Mul(a, b) => broadcast_fwd(v(a), v(b), "mul", |p, q| p * q)?,
                Op::Exp { x, clip } => {
                    let x = real_of(v(x), "exp")?;
                    let data = x
                        .real()
                        .iter()
                        .map(|&t| match clip {
                            Some(c) => t.clamp(-c, *c).exp(),
                            None => t.exp(),
                        })
                        .collect();
                    Tensor::new(x.shape().to_vec(), data)?
                }
                Op::Gelu(x) => {
                    let x = real_of(v(x), "gelu")?;
                    Tensor::new(x.shape().to_vec(), x.real().iter().map(|&t| gelu(t)).collect())?
                }
                Op::Concat(xs) => concat_fwd(&xs.iter().map(v).collect::<Vec<_>>())?,
                Op::Reshape { x, tail } => {
                    let x = v(x);
                    let mut shape = vec![x.shape()[0]];
                    shape.extend_from_slice(tail);
                    x.clone().reshaped(shape)?
                }
                Op::SwapLast2(x) => swap_last2(v(x))?,
                Op::Rfft(x) => {
                    let x = real_of(v(x), "rfft")?;
                    let n = *x.shape().last().ok_or_else(|| shape_err("rfft", "scalar input"))?;
                    let mut shape = x.shape().to_vec();
                    *shape.last_mut().unwrap() = half_len(n);
                    Tensor::new_complex(shape, rfft_rows(x.real(), n))?
                }
                Op::Irfft { x, n } => {
                    let x = complex_of(v(x), "irfft")?;
                    let k = *x.shape().last().unwrap_or(&0);
                    if k != half_len(*n) {
                        return Err(shape_err("irfft", format!("{k} bins cannot invert to length {n}")));
                    }
                    let mut shape = x.shape().to_vec();
                    *shape.last_mut().unwrap() = *n;
                    Tensor::new(shape, irfft_rows(x.complex(), *n))?
                }
                Op::Rfft2(x) => {
                    let x = real_of(v(x), "rfft2")?;
                    let r = x.shape().len();
                    if r < 2 {
                        return Err(shape_err("rfft2", "needs two spatial axes"));
                    }
                    let (ny, nx) = (x.shape()[r - 2], x.shape()[r - 1]);
                    let kx = half_len(nx);
                    let rows = rfft_rows(x.real(), nx);
                    let data = fft_cols(&rows, ny, kx, FftDirection::Forward);
                    let mut shape = x.shape().to_vec();
                    shape[r - 1] = kx;
                    Tensor::new_complex(shape, data)?
                }
                Op::Irfft2 { x, ny, nx } => {
                    let x = complex_of(v(x), "irfft2")?;
                    let r = x.shape().len();
                    let kx = half_len(*nx);
                    if r < 2 || x.shape()[r - 2] != *ny || x.shape()[r - 1] != kx {
                        return Err(shape_err("irfft2", format!("{:?} vs ({ny}, {kx})", x.shape())));
                    }
                    let mut cols = fft_cols(x.complex(), *ny, kx, FftDirection::Inverse);
                    let s = 1.0 / *ny as f64;
                    cols.iter_mut().for_each(|z| *z *= s);
                    let mut shape = x.shape().to_vec();
                    shape[r - 1] = *nx;
                    Tensor::new(shape, irfft_rows(&cols, *nx))?
                }
                Op::Truncate { x, m } => {
                    let x = complex_of(v(x), "truncate")?;
                    let k = *x.shape().last().unwrap_or(&0);
                    if *m > k {
                        return Err(invalid(format!("{m} modes exceed the {k} available bins")));
                    }
                    let data: Vec<C64> = x.complex().chunks(k).flat_map(|row| row[..*m].iter().copied()).collect();
                    let mut shape = x.shape().to_vec();
                    *shape.last_mut().unwrap() = *m;
                    Tensor::new_complex(shape, data)?
                }
                Op::Pad { x, k } => {
                    let x = complex_of(v(x), "pad")?;
                    let m = *x.shape().last().unwrap_or(&0);
                    if m > *k {
                        return Err(shape_err("pad", format!("{m} bins do not fit in {k}")));
                    }
                    let mut data = Vec::with_capacity(x.numel() / m.max(1) * k);
                    for row in x.complex().chunks(m) {
                        data.extend_from_slice(row);
                        data.extend(std::iter::repeat_n(C64::new(0.0, 0.0), k - m));
                    }
                    let mut shape = x.shape().to_vec();
                    *shape.last_mut().unwrap() = *k;
                    Tensor::new_complex(shape, data)?
                }
                Op::Truncate2 { x, m } => truncate2(complex_of(v(x), "truncate2")?, *m)?,
                Op::Pad2 { x, ny, kx } => pad2(complex_of(v(x), "pad2")?, *ny, *kx)?,
                Op::ModalMul { x, w } => modal_mul_fwd(v(x), v(w))?,
                Op::RelL2 { pred, target } => rel_l2_fwd(v(pred), v(target))?.0,
                Op::DotConst { x, c } => {
                    let x = real_of(v(x), "dot")?;
                    if x.shape() != c.shape() {
                        return Err(shape_err("dot", format!("{:?} vs {:?}", x.shape(), c.shape())));
                    }
                    Tensor::scalar(x.real().iter().zip(c.real()).map(|(a, b)| a * b).sum())
                }
                Op::SumAll(x) => Tensor::scalar(real_of(v(x), "sum")?.real().iter().sum()),
            };
            if !out.all_finite() {
                let primitive = op_name(&node.op);
                return Err(Error::Overflow {
                    node: self.describe(NodeId(idx)),
                    primitive,
                });
            }
            values.push(Some(out));
        }
        self.values = values;
        Ok(())
    }

    /// Reverse-mode sweep from `output`. `seed` defaults to ones; gradients of
    /// complex parameters use the convention `dL/dRe + i dL/dIm`.
    pub fn backward(&self, output: NodeId, seed: Option<&Tensor>) -> Result<BTreeMap<String, Tensor>> {
        if self.values.len() <= output.0 {
            return Err(Error::State("backward called before forward".into()));
        }
        let out_val = self.value(output)?;
        let seed = match seed {
            Some(s) => {
                if s.shape() != out_val.shape() || s.is_complex() != out_val.is_complex() {
                    return Err(shape_err("backward", "seed does not match the output"));
                }
                s.clone()
            }
            None => {
                let mut s = out_val.zeros_like();
                for k in (0..s.real_len()).step_by(if s.is_complex() { 2 } else { 1 }) {
                    s.set_flat(k, 1.0);
                }
                s
            }
        };
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let val = |id: &NodeId| self.values[id.0].as_ref().expect("forward populated");
            match &self.nodes[idx].op {
                Op::Input(_) => {}
                Op::Param(_) => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Linear { x, w, bias } => {
                    let (gx, gw, gb) = linear_bwd(val(x), val(w), &g);
                    acc(*x, gx, &mut grads);
                    acc(*w, gw, &mut grads);
                    if let Some(b) = bias {
                        acc(*b, gb, &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    let (ga, gb) = broadcast_bwd(val(a), val(b), &g, |_, _| (1.0, 1.0));
                    acc(*a, ga, &mut grads);
                    acc(*b, gb, &mut grads);
                }
                Op::Mul(a, b) => {
                    let (ga, gb) = broadcast_bwd(val(a), val(b), &g, |p, q| (q, p));
                    acc(*a, ga, &mut grads);
                    acc(*b, gb, &mut grads);
                }
                Op::Exp { x, clip } => {
                    let y = self.values[idx].as_ref().unwrap();
                    let xv = val(x).real();
                    let data = g
                        .real()
                        .iter()
                        .zip(y.real())
                        .zip(xv)
                        .map(|((gi, yi), xi)| match clip {
                            Some(c) if xi.abs() > *c => 0.0,
                            _ => gi * yi,
                        })
                        .collect();
                    acc(*x, Tensor::new(g.shape().to_vec(), data)?, &mut grads);
                }
                Op::Gelu(x) => {
                    let xv = val(x).real();
                    let data = g.real().iter().zip(xv).map(|(gi, &t)| gi * gelu_prime(t)).collect();
                    acc(*x, Tensor::new(g.shape().to_vec(), data)?, &mut grads);
                }
                Op::Concat(xs) => {
                    let parts = concat_bwd(&g, &xs.iter().map(|i| val(i).shape()[1]).collect::<Vec<_>>())?;
                    for (id, p) in xs.iter().zip(parts) {
                        acc(*id, p, &mut grads);
                    }
                }
                Op::Reshape { x, .. } => {
                    acc(*x, g.reshaped(val(x).shape().to_vec())?, &mut grads);
                }
                Op::SwapLast2(x) => acc(*x, swap_last2(&g)?, &mut grads),
                Op::Rfft(x) => {
                    let n = *val(x).shape().last().unwrap();
                    acc(*x, Tensor::new(val(x).shape().to_vec(), rfft_rows_adjoint(g.complex(), n))?, &mut grads);
                }
                Op::Irfft { x, n } => {
                    acc(*x, Tensor::new_complex(val(x).shape().to_vec(), irfft_rows_adjoint(g.real(), *n))?, &mut grads);
                }
                Op::Rfft2(x) => {
                    let s = val(x).shape();
                    let r = s.len();
                    let (ny, nx) = (s[r - 2], s[r - 1]);
                    // Forward is F_y after R_x; the adjoint of F_y is the unnormalized inverse.
                    let cols = fft_cols(g.complex(), ny, half_len(nx), FftDirection::Inverse);
                    acc(*x, Tensor::new(s.to_vec(), rfft_rows_adjoint(&cols, nx))?, &mut grads);
                }
                Op::Irfft2 { x, ny, nx } => {
                    let rows = irfft_rows_adjoint(g.real(), *nx);
                    let mut cols = fft_cols(&rows, *ny, half_len(*nx), FftDirection::Forward);
                    let s = 1.0 / *ny as f64;
                    cols.iter_mut().for_each(|z| *z *= s);
                    acc(*x, Tensor::new_complex(val(x).shape().to_vec(), cols)?, &mut grads);
                }
                Op::Truncate { x, m } => {
                    let k = *val(x).shape().last().unwrap();
                    let mut data = Vec::with_capacity(val(x).numel());
                    for row in g.complex().chunks(*m) {
                        data.extend_from_slice(row);
                        data.extend(std::iter::repeat_n(C64::new(0.0, 0.0), k - m));
                    }
                    acc(*x, Tensor::new_complex(val(x).shape().to_vec(), data)?, &mut grads);
                }
                Op::Pad { x, k } => {
                    let m = *val(x).shape().last().unwrap();
                    let data = g.complex().chunks(*k).flat_map(|row| row[..m].iter().copied()).collect();
                    acc(*x, Tensor::new_complex(val(x).shape().to_vec(), data)?, &mut grads);
                }
                Op::Truncate2 { x, .. } => {
                    let s = val(x).shape();
                    let r = s.len();
                    acc(*x, pad2(&g, s[r - 2], s[r - 1])?, &mut grads);
                }
                Op::Pad2 { x, .. } => {
                    let m = *val(x).shape().last().unwrap();
                    acc(*x, truncate2(&g, m)?, &mut grads);
                }
                Op::ModalMul { x, w } => {
                    let (gx, gw) = modal_mul_bwd(val(x), val(w), &g);
                    acc(*x, gx, &mut grads);
                    acc(*w, gw, &mut grads);
                }
                Op::RelL2 { pred, target } => {
                    let (_, mut gp) = rel_l2_fwd(val(pred), val(target))?;
                    gp.scale(g.item());
                    acc(*pred, gp, &mut grads);
                }
                Op::DotConst { x, c } => {
                    let mut t = c.clone();
                    t.scale(g.item());
                    acc(*x, t, &mut grads);
                }
                Op::SumAll(x) => {
                    let mut t = val(x).zeros_like();
                    t.real_mut().iter_mut().for_each(|v| *v = g.item());
                    acc(*x, t, &mut grads);
                }
            }
        }
        let mut out = BTreeMap::new();
        for (name, id) in &self.params {
            if id.0 > output.0 {
                continue;
            }
            let g = match grads[id.0].take() {
                Some(g) => g,
                None => self.value(*id)?.zeros_like(),
            };
            out.insert(name.clone(), g);
        }
        Ok(out)
    }
}

fn acc(id: NodeId, t: Tensor, grads: &mut [Option<Tensor>]) {
    match &mut grads[id.0] {
        Some(e) => e.add_assign(&t),
        slot => *slot = Some(t),
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Input(_) => "input",
        Op::Param(_) => "param",
        Op::Linear { .. } => "linear",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::Exp { .. } => "exp",
        Op::Gelu(_) => "gelu",
        Op::Concat(_) => "concat",
        Op::Reshape { .. } => "reshape",
        Op::SwapLast2(_) => "swap",
        Op::Rfft(_) => "rfft",
        Op::Irfft { .. } => "irfft",
        Op::Rfft2(_) => "rfft2",
        Op::Irfft2 { .. } => "irfft2",
        Op::Truncate { .. } => "truncate",
        Op::Pad { .. } => "pad",
        Op::Truncate2 { .. } => "truncate2",
        Op::Pad2 { .. } => "pad2",
        Op::ModalMul { .. } => "modal_mul",
        Op::RelL2 { .. } => "rel_l2",
        Op::DotConst { .. } => "dot",
        Op::SumAll(_) => "sum",
    }
}

fn real_of<'a>(t: &'a Tensor, primitive: &'static str) -> Result<&'a Tensor> {
    if t.is_complex() {
        return Err(shape_err(primitive, "expected a real operand"));
    }
    Ok(t)
}

fn complex_of<'a>(t: &'a Tensor, primitive: &'static str) -> Result<&'a Tensor> {
    if !t.is_complex() {
        return Err(shape_err(primitive, "expected a complex operand"));
    }
    Ok(t)
}

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT2))
}

pub fn gelu_prime(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * INV_SQRT2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn linear_fwd(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let x = real_of(x, "linear")?;
    let w = real_of(w, "linear")?;
    let xs = x.shape();
    let ws = w.shape();
    if xs.len() < 2 || ws.len() != 2 || ws[1] != xs[1] {
        return Err(shape_err("linear", format!("input {xs:?} with weight {ws:?}")));
    }
    let (b, cin, cout) = (xs[0], xs[1], ws[0]);
    let s: usize = xs[2..].iter().product();
    let mut out = vec![0.0; b * cout * s];
    if let Some(bias) = bias {
        if bias.shape() != [cout] {
            return Err(shape_err("linear", format!("bias {:?} for {cout} outputs", bias.shape())));
        }
        for bi in 0..b {
            for (o, &bo) in bias.real().iter().enumerate() {
                out[(bi * cout + o) * s..(bi * cout + o + 1) * s].fill(bo);
            }
        }
    }
    for bi in 0..b {
        // SAFETY: the slices cover exactly m*k, k*n and m*n elements with the strides given.
        unsafe {
            matrixmultiply::dgemm(
                cout,
                cin,
                s,
                1.0,
                w.real().as_ptr(),
                cin as isize,
                1,
                x.real()[bi * cin * s..].as_ptr(),
                s as isize,
                1,
                1.0,
                out[bi * cout * s..].as_mut_ptr(),
                s as isize,
                1,
            );
        }
    }
    let mut shape = xs.to_vec();
    shape[1] = cout;
    Tensor::new(shape, out)
}

fn linear_bwd(x: &Tensor, w: &Tensor, g: &Tensor) -> (Tensor, Tensor, Tensor) {
    let xs = x.shape();
    let (b, cin, cout) = (xs[0], xs[1], w.shape()[0]);
    let s: usize = xs[2..].iter().product();
    let mut gx = vec![0.0; x.numel()];
    let mut gw = vec![0.0; w.numel()];
    let mut gb = vec![0.0; cout];
    let gy = g.real();
    for bi in 0..b {
        let gyb = &gy[bi * cout * s..(bi + 1) * cout * s];
        // SAFETY: as in `linear_fwd`; transposes are expressed through strides.
        unsafe {
            matrixmultiply::dgemm(
                cin,
                cout,
                s,
                1.0,
                w.real().as_ptr(),
                1,
                cin as isize,
                gyb.as_ptr(),
                s as isize,
                1,
                0.0,
                gx[bi * cin * s..].as_mut_ptr(),
                s as isize,
                1,
            );
            matrixmultiply::dgemm(
                cout,
                s,
                cin,
                1.0,
                gyb.as_ptr(),
                s as isize,
                1,
                x.real()[bi * cin * s..].as_ptr(),
                1,
                s as isize,
                1.0,
                gw.as_mut_ptr(),
                cin as isize,
                1,
            );
        }
        for o in 0..cout {
            gb[o] += gyb[o * s..(o + 1) * s].iter().sum::<f64>();
        }
    }
    (
        Tensor::new(xs.to_vec(), gx).unwrap(),
        Tensor::new(w.shape().to_vec(), gw).unwrap(),
        Tensor::new(vec![cout], gb).unwrap(),
    )
}

fn broadcast_shape(a: &[usize], b: &[usize], primitive: &'static str) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(shape_err(primitive, format!("rank mismatch {a:?} vs {b:?}")));
    }
    a.iter()
        .zip(b)
        .map(|(&p, &q)| match (p, q) {
            _ if p == q => Ok(p),
            (1, _) => Ok(q),
            (_, 1) => Ok(p),
            _ => Err(shape_err(primitive, format!("cannot broadcast {a:?} with {b:?}"))),
        })
        .collect()
}

/// Strides of `shape` viewed inside `out`, zero along broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for d in (0..shape.len()).rev() {
        strides[d] = if shape[d] == 1 && out[d] != 1 { 0 } else { acc };
        acc *= shape[d];
    }
    strides
}

/// Calls `f(k, ia, ib)` for every flat output index with matching operand offsets.
fn for_each_broadcast(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let n: usize = out.iter().product();
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for k in 0..n {
        f(k, ia, ib);
        for d in (0..rank).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

fn broadcast_fwd(a: &Tensor, b: &Tensor, primitive: &'static str, op: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let a = real_of(a, primitive)?;
    let b = real_of(b, primitive)?;
    if a.shape() == b.shape() {
        let data = a.real().iter().zip(b.real()).map(|(&p, &q)| op(p, q)).collect();
        return Tensor::new(a.shape().to_vec(), data);
    }
    let out = broadcast_shape(a.shape(), b.shape(), primitive)?;
    let sa = broadcast_strides(a.shape(), &out);
    let sb = broadcast_strides(b.shape(), &out);
    let mut data = vec![0.0; out.iter().product()];
    let (av, bv) = (a.real(), b.real());
    for_each_broadcast(&out, &sa, &sb, |k, ia, ib| data[k] = op(av[ia], bv[ib]));
    Tensor::new(out, data)
}

/// `d(a op b)`: `partials(a, b)` returns `(d/da, d/db)` at one element.
fn broadcast_bwd(a: &Tensor, b: &Tensor, g: &Tensor, partials: impl Fn(f64, f64) -> (f64, f64)) -> (Tensor, Tensor) {
    let out = g.shape();
    let sa = broadcast_strides(a.shape(), out);
    let sb = broadcast_strides(b.shape(), out);
    let mut ga = vec![0.0; a.numel()];
    let mut gb = vec![0.0; b.numel()];
    let (av, bv, gv) = (a.real(), b.real(), g.real());
    for_each_broadcast(out, &sa, &sb, |k, ia, ib| {
        let (pa, pb) = partials(av[ia], bv[ib]);
        ga[ia] += gv[k] * pa;
        gb[ib] += gv[k] * pb;
    });
    (
        Tensor::new(a.shape().to_vec(), ga).unwrap(),
        Tensor::new(b.shape().to_vec(), gb).unwrap(),
    )
}

fn concat_fwd(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs.first().ok_or_else(|| shape_err("concat", "no operands"))?;
    let s0 = first.shape();
    if s0.len() < 2 {
        return Err(shape_err("concat", "operands need a channel axis"));
    }
    let mut channels = 0;
    for x in xs {
        real_of(x, "concat")?;
        let s = x.shape();
        if s.len() != s0.len() || s[0] != s0[0] || s[2..] != s0[2..] {
            return Err(shape_err("concat", format!("{s:?} vs {s0:?}")));
        }
        channels += s[1];
    }
    let b = s0[0];
    let sp: usize = s0[2..].iter().product();
    let mut data = Vec::with_capacity(b * channels * sp);
    for bi in 0..b {
        for x in xs {
            let c = x.shape()[1];
            data.extend_from_slice(&x.real()[bi * c * sp..(bi + 1) * c * sp]);
        }
    }
    let mut shape = s0.to_vec();
    shape[1] = channels;
    Tensor::new(shape, data)
}

fn concat_bwd(g: &Tensor, channels: &[usize]) -> Result<Vec<Tensor>> {
    let s = g.shape();
    let (b, total) = (s[0], s[1]);
    let sp: usize = s[2..].iter().product();
    let mut parts: Vec<Vec<f64>> = channels.iter().map(|c| Vec::with_capacity(b * c * sp)).collect();
    for bi in 0..b {
        let mut off = 0;
        for (p, &c) in parts.iter_mut().zip(channels) {
            let start = (bi * total + off) * sp;
            p.extend_from_slice(&g.real()[start..start + c * sp]);
            off += c;
        }
    }
    parts
        .into_iter()
        .zip(channels)
        .map(|(p, &c)| {
            let mut shape = s.to_vec();
            shape[1] = c;
            Tensor::new(shape, p)
        })
        .collect()
}

fn swap_last2(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    let r = s.len();
    if r < 2 {
        return Err(shape_err("swap", "needs two axes"));
    }
    let (p, q) = (s[r - 2], s[r - 1]);
    let mut shape = s.to_vec();
    shape.swap(r - 2, r - 1);
    match x.is_complex() {
        false => Tensor::new(shape, super::fft::transpose_planes(x.real(), p, q)),
        true => Tensor::new_complex(shape, super::fft::transpose_planes(x.complex(), p, q)),
    }
}

fn truncate2(x: &Tensor, m: usize) -> Result<Tensor> {
    let s = x.shape();
    let r = s.len();
    if r < 2 {
        return Err(shape_err("truncate2", "needs two spatial axes"));
    }
    let (ny, kx) = (s[r - 2], s[r - 1]);
    if 2 * m > ny || m > kx {
        return Err(invalid(format!("{m} modes per axis exceed the ({ny}, {kx}) half spectrum")));
    }
    let planes = x.numel() / (ny * kx);
    let src = x.complex();
    let mut data = Vec::with_capacity(planes * 2 * m * m);
    for p in 0..planes {
        let plane = &src[p * ny * kx..(p + 1) * ny * kx];
        for row in (0..m).chain(ny - m..ny) {
            data.extend_from_slice(&plane[row * kx..row * kx + m]);
        }
    }
    let mut shape = s.to_vec();
    shape[r - 2] = 2 * m;
    shape[r - 1] = m;
    Tensor::new_complex(shape, data)
}

fn pad2(x: &Tensor, ny: usize, kx: usize) -> Result<Tensor> {
    let s = x.shape();
    let r = s.len();
    let (two_m, m) = (s[r - 2], s[r - 1]);
    if two_m != 2 * m || two_m > ny || m > kx {
        return Err(shape_err("pad2", format!("{s:?} into ({ny}, {kx})")));
    }
    let planes = x.numel() / (two_m * m);
    let src = x.complex();
    let mut data = vec![C64::new(0.0, 0.0); planes * ny * kx];
    for p in 0..planes {
        let plane = &src[p * two_m * m..(p + 1) * two_m * m];
        let dst = &mut data[p * ny * kx..(p + 1) * ny * kx];
        for (t, row) in (0..m).chain(ny - m..ny).enumerate() {
            dst[row * kx..row * kx + m].copy_from_slice(&plane[t * m..(t + 1) * m]);
        }
    }
    let mut shape = s.to_vec();
    shape[r - 2] = ny;
    shape[r - 1] = kx;
    Tensor::new_complex(shape, data)
}

fn modal_mul_fwd(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let x = complex_of(x, "modal_mul")?;
    let w = complex_of(w, "modal_mul")?;
    let xs = x.shape();
    let ws = w.shape();
    let k: usize = xs[2..].iter().product();
    if xs.len() < 3 || ws.len() != 3 || ws[0] != k || ws[1] != xs[1] {
        return Err(shape_err("modal_mul", format!("input {xs:?} with weights {ws:?}")));
    }
    let (b, cin, cout) = (xs[0], xs[1], ws[2]);
    let (xv, wv) = (x.complex(), w.complex());
    let mut out = vec![C64::new(0.0, 0.0); b * cout * k];
    let mut acc = vec![C64::new(0.0, 0.0); cout];
    for bi in 0..b {
        for kk in 0..k {
            acc.fill(C64::new(0.0, 0.0));
            for i in 0..cin {
                let xv = xv[(bi * cin + i) * k + kk];
                let row = &wv[(kk * cin + i) * cout..(kk * cin + i + 1) * cout];
                for (a, wv) in acc.iter_mut().zip(row) {
                    *a += xv * wv;
                }
            }
            for (o, a) in acc.iter().enumerate() {
                out[(bi * cout + o) * k + kk] = *a;
            }
        }
    }
    let mut shape = xs.to_vec();
    shape[1] = cout;
    Tensor::new_complex(shape, out)
}

fn modal_mul_bwd(x: &Tensor, w: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let xs = x.shape();
    let k: usize = xs[2..].iter().product();
    let (b, cin, cout) = (xs[0], xs[1], w.shape()[2]);
    let (xv, wv, gv) = (x.complex(), w.complex(), g.complex());
    let mut gx = vec![C64::new(0.0, 0.0); x.numel()];
    let mut gw = vec![C64::new(0.0, 0.0); w.numel()];
    let mut gcol = vec![C64::new(0.0, 0.0); cout];
    for bi in 0..b {
        for kk in 0..k {
            for (o, gc) in gcol.iter_mut().enumerate() {
                *gc = gv[(bi * cout + o) * k + kk];
            }
            for i in 0..cin {
                let xi = xv[(bi * cin + i) * k + kk];
                let base = (kk * cin + i) * cout;
                let mut s = C64::new(0.0, 0.0);
                for o in 0..cout {
                    s += gcol[o] * wv[base + o].conj();
                    gw[base + o] += xi.conj() * gcol[o];
                }
                gx[(bi * cin + i) * k + kk] = s;
            }
        }
    }
    (
        Tensor::new_complex(xs.to_vec(), gx).unwrap(),
        Tensor::new_complex(w.shape().to_vec(), gw).unwrap(),
    )
}

/// Loss value and its gradient with respect to `pred`.
fn rel_l2_fwd(pred: &Tensor, target: &Tensor) -> Result<(Tensor, Tensor)> {
    let pred = real_of(pred, "rel_l2")?;
    let target = real_of(target, "rel_l2")?;
    if pred.shape() != target.shape() || pred.shape().is_empty() {
        return Err(shape_err("rel_l2", format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    let b = pred.shape()[0];
    let per = pred.numel() / b;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.numel()];
    for bi in 0..b {
        let p = &pred.real()[bi * per..(bi + 1) * per];
        let t = &target.real()[bi * per..(bi + 1) * per];
        let tn = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        if tn == 0.0 {
            return Err(Error::DegenerateSample { index: bi });
        }
        let dn = p.iter().zip(t).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
        loss += dn / tn;
        if dn > 0.0 {
            let s = 1.0 / (b as f64 * dn * tn);
            for (j, (a, c)) in p.iter().zip(t).enumerate() {
                grad[bi * per + j] = s * (a - c);
            }
        }
    }
    Ok((Tensor::scalar(loss / b as f64), Tensor::new(pred.shape().to_vec(), grad)?))
}
