//! FNO and ComFNO on top of [`crate::autodiff`].
//!
//! ComFNO adds layer blocks to a base FNO:
//!
//! ```text
//! out = FNO_0(a) + sum_i Dense_i(a) * exp(clip(FNO_i(a ++ a_i(xi))))
//! ```
//!
//! `a` holds the sampled function, the coordinate channel(s) and optionally
//! a constant `eps` channel. `a_i(xi)` holds the function resampled near the
//! layer anchor and the stretched distance `|x0 - x| / eps`, capped; the
//! stretched distance takes the place of the coordinate along the stretched
//! axis. `Dense_i` is a small MLP over all of `a` producing one coefficient
//! per line transverse to the stretched axis (a single scalar in 1D), since
//! the layer amplitude is a functional of the whole input.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{spectral_conv_1d, spectral_conv_2d, Graph, NodeId, ParamMap, Tensor, C64};
use crate::error::{invalid, Error, Result};
use crate::grids::{Grid, GridFunction};

/// Exponent inputs are clipped to `[-EXP_CLIP, EXP_CLIP]`.
pub const EXP_CLIP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spatial {
    D1(usize),
    D2 { ny: usize, nx: usize },
}

impl Spatial {
    pub fn of(grid: &Grid) -> Self {
        match grid {
            Grid::D1(m) => Spatial::D1(m.len()),
            Grid::D2(m) => Spatial::D2 {
                ny: m.my.len(),
                nx: m.mx.len(),
            },
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            Spatial::D1(_) => 1,
            Spatial::D2 { .. } => 2,
        }
    }

    pub fn points(&self) -> usize {
        match *self {
            Spatial::D1(n) => n,
            Spatial::D2 { ny, nx } => ny * nx,
        }
    }

    fn tail(&self, channels: usize) -> Vec<usize> {
        match *self {
            Spatial::D1(n) => vec![channels, n],
            Spatial::D2 { ny, nx } => vec![channels, ny, nx],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnoConfig {
    pub width: usize,
    pub modes: usize,
    pub depth: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub proj_hidden: usize,
}

impl FnoConfig {
    pub fn validate(&self, sp: Spatial) -> Result<()> {
        if [self.width, self.modes, self.depth, self.in_channels, self.out_channels, self.proj_hidden].contains(&0) {
            return Err(invalid(format!("FNO sizes must be positive: {self:?}")));
        }
        let fits = match sp {
            Spatial::D1(n) => self.modes <= n / 2 + 1,
            Spatial::D2 { ny, nx } => 2 * self.modes <= ny && self.modes <= nx / 2 + 1,
        };
        if !fits {
            return Err(invalid(format!("{} modes do not fit resolution {sp:?}", self.modes)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerBlockSpec {
    /// Layer location on the stretched axis.
    pub x0: f64,
    /// 0 stretches x, 1 stretches y.
    pub axis: usize,
    pub extra: FnoConfig,
    pub dense_hidden: Vec<usize>,
    /// Cap on the stretched distance channel.
    pub xi_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComFnoConfig {
    pub base: FnoConfig,
    pub blocks: Vec<LayerBlockSpec>,
    pub eps_as_input: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    Fno { net: FnoConfig, eps_as_input: bool },
    Comfno(ComFnoConfig),
}

impl ModelConfig {
    pub fn eps_as_input(&self) -> bool {
        match self {
            ModelConfig::Fno { eps_as_input, .. } => *eps_as_input,
            ModelConfig::Comfno(c) => c.eps_as_input,
        }
    }

    pub fn base(&self) -> &FnoConfig {
        match self {
            ModelConfig::Fno { net, .. } => net,
            ModelConfig::Comfno(c) => &c.base,
        }
    }

    pub fn blocks(&self) -> &[LayerBlockSpec] {
        match self {
            ModelConfig::Fno { .. } => &[],
            ModelConfig::Comfno(c) => &c.blocks,
        }
    }

    /// Channels of `a`: function, coordinates, optional `eps`.
    pub fn input_channels(&self, sp: Spatial) -> usize {
        1 + sp.dims() + usize::from(self.eps_as_input())
    }

    pub fn validate(&self, sp: Spatial) -> Result<()> {
        let c = self.input_channels(sp);
        let base = self.base();
        base.validate(sp)?;
        if base.in_channels != c {
            return Err(invalid(format!("base network expects {} input channels, data has {c}", base.in_channels)));
        }
        if base.out_channels != 1 {
            return Err(invalid("models predict a single output channel"));
        }
        for (i, b) in self.blocks().iter().enumerate() {
            b.extra.validate(sp)?;
            if b.extra.in_channels != c + 2 {
                return Err(invalid(format!("block {i} expects {} channels, needs {}", b.extra.in_channels, c + 2)));
            }
            if b.extra.out_channels != 1 {
                return Err(invalid(format!("block {i} exponent network must have one output channel")));
            }
            if b.axis >= sp.dims() {
                return Err(invalid(format!("block {i} stretches axis {} of a {}D grid", b.axis, sp.dims())));
            }
            if b.extra.depth > base.depth {
                return Err(invalid(format!("block {i} is deeper than the base network")));
            }
            if !(b.xi_cap > 0.0) || b.dense_hidden.contains(&0) {
                return Err(invalid(format!("block {i} has a nonpositive size")));
            }
        }
        Ok(())
    }
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    complex: bool,
    fan: (usize, usize),
}

fn fno_param_specs(prefix: &str, c: &FnoConfig, sp: Spatial, out: &mut Vec<ParamSpec>) {
    let real = |name: String, shape: Vec<usize>, fan: (usize, usize)| ParamSpec {
        name,
        shape,
        complex: false,
        fan,
    };
    let w = c.width;
    out.push(real(format!("{prefix}.lift.w"), vec![w, c.in_channels], (c.in_channels, w)));
    out.push(real(format!("{prefix}.lift.b"), vec![w], (0, 0)));
    let kmodes = match sp {
        Spatial::D1(_) => c.modes,
        Spatial::D2 { .. } => 2 * c.modes * c.modes,
    };
    for l in 0..c.depth {
        out.push(real(format!("{prefix}.layer{l}.w"), vec![w, w], (w, w)));
        out.push(real(format!("{prefix}.layer{l}.b"), vec![w], (0, 0)));
        out.push(ParamSpec {
            name: format!("{prefix}.layer{l}.r"),
            shape: vec![kmodes, w, w],
            complex: true,
            fan: (w, w),
        });
    }
    out.push(real(format!("{prefix}.proj1.w"), vec![c.proj_hidden, w], (w, c.proj_hidden)));
    out.push(real(format!("{prefix}.proj1.b"), vec![c.proj_hidden], (0, 0)));
    out.push(real(format!("{prefix}.proj2.w"), vec![c.out_channels, c.proj_hidden], (c.proj_hidden, c.out_channels)));
    out.push(real(format!("{prefix}.proj2.b"), vec![c.out_channels], (0, 0)));
}

fn dense_lines(b: &LayerBlockSpec, sp: Spatial) -> usize {
    match (sp, b.axis) {
        (Spatial::D1(_), _) => 1,
        (Spatial::D2 { ny, .. }, 0) => ny,
        (Spatial::D2 { nx, .. }, _) => nx,
    }
}

fn param_specs(cfg: &ModelConfig, sp: Spatial) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    fno_param_specs("fno0", cfg.base(), sp, &mut out);
    let features = cfg.input_channels(sp) * sp.points();
    for (i, b) in cfg.blocks().iter().enumerate() {
        fno_param_specs(&format!("block{i}.fno"), &b.extra, sp, &mut out);
        let mut fan_in = features;
        let widths: Vec<usize> = b.dense_hidden.iter().copied().chain([dense_lines(b, sp)]).collect();
        for (l, &h) in widths.iter().enumerate() {
            // The output layer starts at zero so an untrained model equals FNO_0.
            let fan = if l + 1 == widths.len() { (0, 0) } else { (fan_in, h) };
            out.push(ParamSpec {
                name: format!("block{i}.dense{l}.w"),
                shape: vec![h, fan_in],
                complex: false,
                fan,
            });
            out.push(ParamSpec {
                name: format!("block{i}.dense{l}.b"),
                shape: vec![h],
                complex: false,
                fan: (0, 0),
            });
            fan_in = h;
        }
    }
    out
}

/// Glorot-uniform real weights, zero biases and zero dense output layers, and
/// spectral weights with real and imaginary parts uniform on `[0, 1/(in*out))`.
pub fn init_params(cfg: &ModelConfig, sp: Spatial, seed: u64) -> Result<ParamMap> {
    cfg.validate(sp)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut params = ParamMap::new();
    for p in param_specs(cfg, sp) {
        let n: usize = p.shape.iter().product();
        let t = if p.complex {
            let scale = 1.0 / (p.fan.0 * p.fan.1) as f64;
            let data = (0..n)
                .map(|_| C64::new(scale * rng.random::<f64>(), scale * rng.random::<f64>()))
                .collect();
            Tensor::new_complex(p.shape, data)?
        } else if p.fan == (0, 0) {
            Tensor::zeros(&p.shape)
        } else {
            let bound = (6.0 / (p.fan.0 + p.fan.1) as f64).sqrt();
            Tensor::new(p.shape, (0..n).map(|_| rng.random_range(-bound..bound)).collect())?
        };
        params.insert(p.name, t);
    }
    Ok(params)
}

/// Number of real scalars (complex entries count twice).
pub fn param_count(params: &ParamMap) -> usize {
    params.values().map(|t| t.real_len()).sum()
}

fn fno_into(g: &mut Graph, prefix: &str, c: &FnoConfig, x: NodeId, sp: Spatial) -> Result<NodeId> {
    let lw = g.param(&format!("{prefix}.lift.w"));
    let lb = g.param(&format!("{prefix}.lift.b"));
    let mut h = g.linear(x, lw, Some(lb));
    for l in 0..c.depth {
        let w = g.param(&format!("{prefix}.layer{l}.w"));
        let b = g.param(&format!("{prefix}.layer{l}.b"));
        let r = g.param(&format!("{prefix}.layer{l}.r"));
        let local = g.linear(h, w, Some(b));
        let spectral = match sp {
            Spatial::D1(n) => spectral_conv_1d(g, h, r, n, c.modes)?,
            Spatial::D2 { ny, nx } => spectral_conv_2d(g, h, r, ny, nx, c.modes)?,
        };
        h = g.add(local, spectral);
        if l + 1 < c.depth {
            h = g.gelu(h);
        }
    }
    let p1w = g.param(&format!("{prefix}.proj1.w"));
    let p1b = g.param(&format!("{prefix}.proj1.b"));
    let p2w = g.param(&format!("{prefix}.proj2.w"));
    let p2b = g.param(&format!("{prefix}.proj2.b"));
    let q = g.linear(h, p1w, Some(p1b));
    let q = g.gelu(q);
    Ok(g.linear(q, p2w, Some(p2b)))
}

/// Model inputs, channel-first: `a` is `(B, C, ...)`, each stretched
/// tensor `(B, 2, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub a: Tensor,
    pub stretched: Vec<Tensor>,
}

impl ModelInput {
    pub fn batch(&self) -> usize {
        self.a.shape()[0]
    }

    /// Graph inputs keyed `a`, `s0`, `s1`, ...
    pub fn to_inputs(&self) -> BTreeMap<String, Tensor> {
        let mut m = BTreeMap::from([("a".to_string(), self.a.clone())]);
        for (i, s) in self.stretched.iter().enumerate() {
            m.insert(format!("s{i}"), s.clone());
        }
        m
    }
}

/// A model bound to a resolution, with its graph recorded once.
pub struct Model {
    config: ModelConfig,
    spatial: Spatial,
    graph: Graph,
    out: NodeId,
    loss: NodeId,
}

impl Model {
    pub fn new(config: ModelConfig, spatial: Spatial) -> Result<Self> {
        config.validate(spatial)?;
        let mut g = Graph::new();
        let a = g.input("a");
        let mut out = fno_into(&mut g, "fno0", config.base(), a, spatial)?;
        let features = config.input_channels(spatial) * spatial.points();
        for (i, b) in config.blocks().iter().enumerate() {
            let s = g.input(&format!("s{i}"));
            let joined = g.concat(vec![a, s]);
            let z = fno_into(&mut g, &format!("block{i}.fno"), &b.extra, joined, spatial)?;
            let e = g.exp(z, Some(EXP_CLIP));
            g.set_label(e, format!("block{i}.exp"));
            let mut d = g.reshape(a, vec![features, 1]);
            let layers = b.dense_hidden.len() + 1;
            for l in 0..layers {
                let w = g.param(&format!("block{i}.dense{l}.w"));
                let bb = g.param(&format!("block{i}.dense{l}.b"));
                d = g.linear(d, w, Some(bb));
                if l + 1 < layers {
                    d = g.gelu(d);
                }
            }
            let coef_shape = match (spatial, b.axis) {
                (Spatial::D1(_), _) => vec![1, 1],
                (Spatial::D2 { ny, .. }, 0) => vec![1, ny, 1],
                (Spatial::D2 { nx, .. }, _) => vec![1, 1, nx],
            };
            let d = g.reshape(d, coef_shape);
            let term = g.mul(d, e);
            out = g.add(out, term);
        }
        let target = g.input("target");
        let loss = g.rel_l2(out, target);
        Ok(Self {
            config,
            spatial,
            graph: g,
            out,
            loss,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn spatial(&self) -> Spatial {
        self.spatial
    }

    fn check_input(&self, x: &ModelInput) -> Result<()> {
        let mut want = vec![x.batch()];
        want.extend(self.spatial.tail(self.config.input_channels(self.spatial)));
        if x.a.shape() != want.as_slice() {
            return Err(Error::Shape {
                primitive: "model input",
                detail: format!("expected {want:?}, got {:?}", x.a.shape()),
            });
        }
        if x.stretched.len() != self.config.blocks().len() {
            return Err(invalid(format!(
                "{} stretched inputs for {} blocks",
                x.stretched.len(),
                self.config.blocks().len()
            )));
        }
        Ok(())
    }

    /// Predictions of shape `(B, 1, ...)`.
    pub fn forward(&mut self, params: &ParamMap, x: &ModelInput) -> Result<Tensor> {
        self.check_input(x)?;
        self.graph.forward_to(params, &x.to_inputs(), self.out)?;
        Ok(self.graph.value(self.out)?.clone())
    }

    /// Mean relative L2 loss and its parameter gradients.
    pub fn loss_and_grad(&mut self, params: &ParamMap, x: &ModelInput, target: &Tensor) -> Result<(f64, ParamMap)> {
        self.check_input(x)?;
        let mut inputs = x.to_inputs();
        inputs.insert("target".into(), target.clone());
        self.graph.forward(params, &inputs)?;
        let loss = self.graph.value(self.loss)?.item();
        Ok((loss, self.graph.backward(self.loss, None)?))
    }

    /// Graph and loss node, for gradient checks.
    pub fn graph_mut(&mut self) -> (&mut Graph, NodeId) {
        (&mut self.graph, self.loss)
    }
}

/// Plain FNO evaluation (`a` of shape `(B, C, ...)`).
pub fn fno_forward(params: &ParamMap, net: &FnoConfig, a: &Tensor) -> Result<Tensor> {
    let sp = spatial_of(a)?;
    let cfg = ModelConfig::Fno {
        net: net.clone(),
        eps_as_input: net.in_channels == 2 + sp.dims(),
    };
    Model::new(cfg, sp)?.forward(
        params,
        &ModelInput {
            a: a.clone(),
            stretched: vec![],
        },
    )
}

/// ComFNO evaluation on samples `f` (one per batch entry, on `grid`) with
/// per-sample `eps`.
pub fn comfno_forward(params: &ParamMap, cfg: &ComFnoConfig, grid: &Grid, f: &[Vec<f64>], eps: &[f64]) -> Result<Tensor> {
    let mc = ModelConfig::Comfno(cfg.clone());
    let x = assemble_inputs(&mc, grid, f, eps)?;
    Model::new(mc, Spatial::of(grid))?.forward(params, &x)
}

fn spatial_of(a: &Tensor) -> Result<Spatial> {
    match a.shape() {
        [_, _, n] => Ok(Spatial::D1(*n)),
        [_, _, ny, nx] => Ok(Spatial::D2 { ny: *ny, nx: *nx }),
        s => Err(Error::Shape {
            primitive: "model input",
            detail: format!("unsupported input shape {s:?}"),
        }),
    }
}

/// Physical point where the stretched channel samples `f` for a node at
/// coordinate `s`: `x0 - dir * min(|xi|, L) * eps` with `xi = (x0 - s)/eps`,
/// `L` the domain length and `dir` pointing from the domain into the anchor.
pub fn stretch_point(s: f64, x0: f64, eps: f64, lo: f64, hi: f64) -> f64 {
    let len = hi - lo;
    let dir = if x0 >= 0.5 * (lo + hi) { 1.0 } else { -1.0 };
    let xi = ((x0 - s) / eps).abs();
    (x0 - dir * xi.min(len) * eps).clamp(lo, hi)
}

/// `f` resampled at the stretched points of every node of its grid.
pub fn stretch_coordinates(f: &GridFunction, x0: f64, eps: f64, axis: usize) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    match f.grid() {
        Grid::D1(m) => m
            .nodes()
            .iter()
            .map(|&x| f.eval_1d(stretch_point(x, x0, eps, m.a(), m.b())))
            .collect(),
        Grid::D2(m) => (0..m.len())
            .map(|k| {
                let (x, y) = m.point(k);
                if axis == 0 {
                    f.eval_2d(stretch_point(x, x0, eps, m.mx.a(), m.mx.b()), y)
                } else {
                    f.eval_2d(x, stretch_point(y, x0, eps, m.my.a(), m.my.b()))
                }
            })
            .collect(),
    }
}

/// `min(|x0 - s| / eps, cap)` at every node.
pub fn stretched_distance(grid: &Grid, x0: f64, eps: f64, axis: usize, cap: f64) -> Vec<f64> {
    let xi = |s: f64| ((x0 - s).abs() / eps).min(cap);
    match grid {
        Grid::D1(m) => m.nodes().iter().map(|&x| xi(x)).collect(),
        Grid::D2(m) => (0..m.len())
            .map(|k| {
                let (x, y) = m.point(k);
                xi(if axis == 0 { x } else { y })
            })
            .collect(),
    }
}

/// Builds model inputs from raw samples on `grid`.
pub fn assemble_inputs(cfg: &ModelConfig, grid: &Grid, f: &[Vec<f64>], eps: &[f64]) -> Result<ModelInput> {
    let sp = Spatial::of(grid);
    if f.len() != eps.len() {
        return Err(invalid("one eps per sample required"));
    }
    let n = sp.points();
    let channels = cfg.input_channels(sp);
    let coords: Vec<Vec<f64>> = match grid {
        Grid::D1(m) => vec![m.nodes().to_vec()],
        Grid::D2(m) => {
            let pts: Vec<(f64, f64)> = (0..m.len()).map(|k| m.point(k)).collect();
            vec![pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect()]
        }
    };
    let mut a = Vec::with_capacity(f.len() * channels * n);
    let mut stretched: Vec<Vec<f64>> = vec![Vec::with_capacity(f.len() * 2 * n); cfg.blocks().len()];
    for (fi, &e) in f.iter().zip(eps) {
        if fi.len() != n {
            return Err(invalid(format!("sample has {} values, grid has {n}", fi.len())));
        }
        a.extend_from_slice(fi);
        for c in &coords {
            a.extend_from_slice(c);
        }
        if cfg.eps_as_input() {
            a.extend(std::iter::repeat_n(e, n));
        }
        if !cfg.blocks().is_empty() {
            let gf = GridFunction::new(grid.clone(), fi.clone())?;
            for (b, s) in cfg.blocks().iter().zip(stretched.iter_mut()) {
                s.extend(stretch_coordinates(&gf, b.x0, e, b.axis)?);
                s.extend(stretched_distance(grid, b.x0, e, b.axis, b.xi_cap));
            }
        }
    }
    let mut shape = vec![f.len()];
    shape.extend(sp.tail(channels));
    let mut s_shape = vec![f.len()];
    s_shape.extend(sp.tail(2));
    Ok(ModelInput {
        a: Tensor::new(shape, a)?,
        stretched: stretched
            .into_iter()
            .map(|s| Tensor::new(s_shape.clone(), s))
            .collect::<Result<_>>()?,
    })
}
