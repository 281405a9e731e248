//! Dataset generation, persistence, loss, Adam and the training loop.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Data, ParamMap, Tensor, C64};
use crate::error::{invalid, Error, Result};
use crate::grf::GrfSampler;
use crate::grids::{shishkin_mesh, uniform_mesh, Grid, GridFunction, LayerSide, Mesh1D, Mesh2D, ShishkinParams, TimeGrid};
use crate::neuralop::{assemble_inputs, init_params, Model, ModelConfig, ModelInput, Spatial};
use crate::solvers::{
    solve_steady_1d, EllipticProblem2D, EllipticSolver, ParabolicProblem, ParabolicSolver, ScalarField,
    SteadyProblem1D, FINE_MESH_1D, FINE_MESH_2D, FINE_TIME_STEPS,
};

const DATASET_MAGIC: &[u8; 4] = b"SPDS";
const CHECKPOINT_MAGIC: &[u8; 4] = b"SPCK";
const FORMAT_VERSION: u32 = 1;

/// The four problem families used for operator learning. Every family has
/// homogeneous Dirichlet data; the learned map takes the sampled function
/// to the solution (at the final time for the parabolic family).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equation {
    /// `-eps u'' + (x+1) u' = f` on `(0,1)`.
    Plain1d,
    /// `-eps u'' + x(x+2) u' + u = f` on `(-1,1)`.
    Turning1d,
    /// `u_t - eps u_xx + u_x + x u = 0` on `(0,1) x (0,1]`, `u(x,0) = f`.
    Parabolic,
    /// `-eps Δu + u_x + u_y + u = f` on the unit square.
    Elliptic2d,
}

impl Equation {
    pub fn id(self) -> u32 {
        match self {
            Equation::Plain1d => 1,
            Equation::Turning1d => 2,
            Equation::Parabolic => 3,
            Equation::Elliptic2d => 4,
        }
    }

    pub fn from_id(id: u32) -> Result<Self> {
        Ok(match id {
            1 => Equation::Plain1d,
            2 => Equation::Turning1d,
            3 => Equation::Parabolic,
            4 => Equation::Elliptic2d,
            _ => return Err(Error::Format(format!("unknown equation id {id}"))),
        })
    }

    pub fn domain(self) -> (f64, f64) {
        match self {
            Equation::Turning1d => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    pub fn dims(self) -> usize {
        if self == Equation::Elliptic2d {
            2
        } else {
            1
        }
    }

    /// Layer anchors `(x0, axis)`.
    pub fn layer_anchors(self) -> Vec<(f64, usize)> {
        match self {
            Equation::Plain1d | Equation::Parabolic => vec![(1.0, 0)],
            Equation::Turning1d => vec![(1.0, 0), (-1.0, 0)],
            Equation::Elliptic2d => vec![(1.0, 0), (1.0, 1)],
        }
    }

    /// Uniform grid with `resolution` nodes per axis.
    pub fn target_grid(self, resolution: usize) -> Result<Grid> {
        if resolution < 2 {
            return Err(invalid("resolution must be at least 2"));
        }
        let (a, b) = self.domain();
        let m = uniform_mesh(resolution - 1, a, b)?;
        Ok(match self.dims() {
            1 => m.into(),
            _ => Mesh2D::new(m.clone(), m).into(),
        })
    }
}

/// Fine-mesh ground-truth solver for one `(equation, eps)` pair.
enum Truth {
    Steady { eps: f64, eq: Equation, mesh: Mesh1D },
    Parabolic { solver: ParabolicSolver, mesh: Mesh1D },
    Elliptic(EllipticSolver),
}

impl Truth {
    fn new(eq: Equation, eps: f64, fine: usize) -> Result<Self> {
        let (a, b) = eq.domain();
        Ok(match eq {
            Equation::Plain1d => Truth::Steady {
                eps,
                eq,
                mesh: shishkin_mesh(fine, a, b, ShishkinParams::new(eps, 1.0, LayerSide::Right))?,
            },
            Equation::Turning1d => Truth::Steady {
                eps,
                eq,
                mesh: shishkin_mesh(fine, a, b, ShishkinParams::new(eps, 1.0, LayerSide::Both))?,
            },
            Equation::Parabolic => {
                let mesh = shishkin_mesh(fine, a, b, ShishkinParams::new(eps, 1.0, LayerSide::Right))?;
                let problem = ParabolicProblem {
                    eps,
                    b: 1.0.into(),
                    d: ScalarField::from_fn(|x| x),
                    f: 0.0.into(),
                    s: 0.0.into(),
                    q0: 0.0.into(),
                    q1: 0.0.into(),
                    t_final: 1.0,
                };
                let tg = TimeGrid::new(1.0, FINE_TIME_STEPS)?;
                Truth::Parabolic {
                    solver: ParabolicSolver::new(problem, &mesh, &tg)?,
                    mesh,
                }
            }
            Equation::Elliptic2d => {
                let m = shishkin_mesh(fine, a, b, ShishkinParams::new(eps, 1.0, LayerSide::Right))?;
                let problem = EllipticProblem2D {
                    eps,
                    b1: 1.0.into(),
                    b2: 1.0.into(),
                    c: 1.0.into(),
                    f: 0.0.into(),
                };
                Truth::Elliptic(EllipticSolver::new(&problem, &Mesh2D::new(m.clone(), m))?)
            }
        })
    }

    fn solve(&self, f: &GridFunction, target: &Grid) -> Result<Vec<f64>> {
        let fine = match self {
            Truth::Steady { eps, eq, mesh } => {
                let (b, c) = match eq {
                    Equation::Plain1d => (ScalarField::from_fn(|x| x + 1.0), 0.0),
                    _ => (ScalarField::from_fn(|x| x * (x + 2.0)), 1.0),
                };
                let p = SteadyProblem1D::new(*eps, b, c, ScalarField::Nodal(f.clone()), eq.domain());
                solve_steady_1d(&p, mesh)?
            }
            Truth::Parabolic { solver, mesh } => {
                let s = f.interpolate_to(&mesh.clone().into())?;
                solver.solve_with_initial(s.values())?
            }
            Truth::Elliptic(solver) => solver.solve(&ScalarField::Nodal(f.clone()))?,
        };
        Ok(fine.interpolate_to(target)?.into_values())
    }
}

/// How sampled functions are paired with `eps` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Every function with every `eps` (function-major order).
    Cartesian,
    /// Function `i` with `eps[i % len]`.
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub equation: Equation,
    /// Number of distinct sampled functions.
    pub functions: usize,
    pub resolution: usize,
    pub eps: Vec<f64>,
    pub pairing: Pairing,
    pub seed: u64,
    /// GRF stream index of the first function; keeps train and test disjoint.
    #[serde(default)]
    pub first_index: u64,
    #[serde(default = "default_lengthscale")]
    pub lengthscale: f64,
    /// Fine-mesh interval count; 0 selects the solver default.
    #[serde(default)]
    pub fine_n: usize,
}

fn default_lengthscale() -> f64 {
    1.0
}

impl DatasetSpec {
    pub fn count(&self) -> usize {
        match self.pairing {
            Pairing::Cartesian => self.functions * self.eps.len(),
            Pairing::Cycle => self.functions,
        }
    }

    fn fine(&self) -> usize {
        match (self.fine_n, self.equation.dims()) {
            (0, 1) => FINE_MESH_1D,
            (0, _) => FINE_MESH_2D,
            (n, _) => n,
        }
    }

    /// `(function index, eps index)` of sample `k`.
    fn pair(&self, k: usize) -> (usize, usize) {
        match self.pairing {
            Pairing::Cartesian => (k / self.eps.len(), k % self.eps.len()),
            Pairing::Cycle => (k, k % self.eps.len()),
        }
    }
}

/// Sampled functions and solutions on a uniform target grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub equation: Equation,
    pub grid: Grid,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub eps: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn shared_eps(&self) -> bool {
        self.eps.windows(2).all(|w| w[0].to_bits() == w[1].to_bits())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        if self.targets.len() != self.len() || self.eps.len() != self.len() {
            return Err(invalid("dataset counts disagree"));
        }
        for (k, (f, u)) in self.inputs.iter().zip(&self.targets).enumerate() {
            if f.len() != n || u.len() != n {
                return Err(invalid(format!("sample {k} does not match the grid")));
            }
            if !u.iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("sample {k} has a non-finite target")));
            }
        }
        Ok(())
    }

    /// Targets as a `(count, 1, ...)` tensor.
    pub fn target_tensor(&self) -> Result<Tensor> {
        let mut shape = vec![self.len(), 1];
        shape.extend(self.grid.resolution());
        Tensor::new(shape, self.targets.concat())
    }

    /// Model inputs for every sample.
    pub fn model_input(&self, cfg: &ModelConfig) -> Result<ModelInput> {
        assemble_inputs(cfg, &self.grid, &self.inputs, &self.eps)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(DATASET_MAGIC)?;
        w.write_u32::<LE>(FORMAT_VERSION)?;
        w.write_u32::<LE>(self.equation.id())?;
        w.write_u64::<LE>(self.len() as u64)?;
        let res = self.grid.resolution();
        w.write_u32::<LE>(res.len() as u32)?;
        for r in &res {
            w.write_u64::<LE>(*r as u64)?;
        }
        w.write_u8(u8::from(!self.shared_eps()))?;
        w.write_u32::<LE>(1)?;
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        w.write_u32::<LE>(meta.len() as u32)?;
        w.write_all(meta.as_bytes())?;
        for v in self.eps.iter().chain(self.inputs.iter().flatten()).chain(self.targets.iter().flatten()) {
            w.write_f64::<LE>(*v)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format(format!("{} is not a dataset file", path.display())));
        }
        let version = r.read_u32::<LE>().map_err(truncated)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let equation = Equation::from_id(r.read_u32::<LE>().map_err(truncated)?)?;
        let count = r.read_u64::<LE>().map_err(truncated)? as usize;
        let dims = r.read_u32::<LE>().map_err(truncated)? as usize;
        if dims != equation.dims() {
            return Err(Error::Format(format!("{dims} spatial dims for {equation:?}")));
        }
        let mut res = Vec::with_capacity(dims);
        for _ in 0..dims {
            res.push(r.read_u64::<LE>().map_err(truncated)? as usize);
        }
        if res.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Format("only square grids are supported".into()));
        }
        let _eps_mode = r.read_u8().map_err(truncated)?;
        let channels = r.read_u32::<LE>().map_err(truncated)?;
        if channels != 1 {
            return Err(Error::Format(format!("{channels} input channels stored, expected 1")));
        }
        let meta_len = r.read_u32::<LE>().map_err(truncated)? as usize;
        let mut meta_bytes = vec![0u8; meta_len];
        r.read_exact(&mut meta_bytes).map_err(truncated)?;
        let meta_text = String::from_utf8(meta_bytes).map_err(|_| Error::Corruption("metadata is not UTF-8".into()))?;
        let meta = meta_text
            .lines()
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Corruption(format!("bad metadata line {l:?}")))
            })
            .collect::<Result<_>>()?;
        let grid = equation.target_grid(res[0])?;
        let n = grid.len();
        let mut read_block = |len: usize| -> Result<Vec<f64>> {
            let mut v = vec![0.0; len];
            r.read_f64_into::<LE>(&mut v).map_err(truncated)?;
            Ok(v)
        };
        let eps = read_block(count)?;
        let inputs = read_block(count * n)?;
        let targets = read_block(count * n)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Corruption(format!("{} trailing bytes", rest.len())));
        }
        let split = |v: Vec<f64>| v.chunks(n.max(1)).map(<[f64]>::to_vec).collect::<Vec<_>>();
        let d = Dataset {
            equation,
            grid,
            inputs: split(inputs),
            targets: split(targets),
            eps,
            meta,
        };
        d.validate().map_err(|e| Error::Corruption(e.to_string()))?;
        Ok(d)
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Corruption("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

/// Draws functions, solves each sample on the fine mesh and interpolates
/// back. Sample `k` depends only on `(seed, first_index + function(k), eps(k))`.
pub fn build_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    if spec.eps.is_empty() || spec.eps.iter().any(|e| !(*e > 0.0)) {
        return Err(invalid("eps values must be positive and non-empty"));
    }
    if spec.functions == 0 {
        return Err(invalid("dataset needs at least one function"));
    }
    let grid = spec.equation.target_grid(spec.resolution)?;
    let sampler = GrfSampler::new(&grid, spec.lengthscale)?;
    let fine = spec.fine();
    let mut truths: BTreeMap<usize, Truth> = BTreeMap::new();
    let count = spec.count();
    let (mut inputs, mut targets, mut eps) = (Vec::with_capacity(count), Vec::with_capacity(count), Vec::with_capacity(count));
    let mut cached: Option<(usize, GridFunction)> = None;
    for k in 0..count {
        let (fi, ei) = spec.pair(k);
        let e = spec.eps[ei];
        let gen = |err: Error| Error::Generation {
            index: k,
            source: Box::new(err),
        };
        if cached.as_ref().map(|c| c.0) != Some(fi) {
            let f = sampler.sample_one(spec.seed, spec.first_index + fi as u64);
            cached = Some((fi, GridFunction::new(grid.clone(), f).map_err(gen)?));
        }
        let f = &cached.as_ref().expect("sample cached").1;
        if !truths.contains_key(&ei) {
            // One fine solver per eps value; solvers with factored matrices
            // are reused across functions.
            truths.clear();
            truths.insert(ei, Truth::new(spec.equation, e, fine).map_err(gen)?);
        }
        let u = truths[&ei].solve(f, &grid).map_err(gen)?;
        if !u.iter().all(|v| v.is_finite()) {
            return Err(gen(Error::NumericFailure {
                reason: "non-finite solution".into(),
                row: 0,
            }));
        }
        inputs.push(f.values().to_vec());
        targets.push(u);
        eps.push(e);
        if (k + 1) % 100 == 0 {
            debug!("generated {}/{count} samples", k + 1);
        }
    }
    let meta = BTreeMap::from([
        ("seed".to_string(), spec.seed.to_string()),
        ("first_index".to_string(), spec.first_index.to_string()),
        ("kernel".to_string(), "squared-exponential, unit variance".to_string()),
        ("lengthscale".to_string(), spec.lengthscale.to_string()),
        ("fine_mesh".to_string(), fine.to_string()),
    ]);
    Ok(Dataset {
        equation: spec.equation,
        grid,
        inputs,
        targets,
        eps,
        meta,
    })
}

/// Mean over the leading axis of `||pred_i - truth_i|| / ||truth_i||`.
pub fn l2_relative_loss(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    if pred.shape() != truth.shape() || pred.shape().is_empty() {
        return Err(Error::Shape {
            primitive: "l2_relative_loss",
            detail: format!("{:?} vs {:?}", pred.shape(), truth.shape()),
        });
    }
    let b = pred.shape()[0];
    let m = pred.numel() / b.max(1);
    let mut total = 0.0;
    for i in 0..b {
        let (p, t) = (&pred.real()[i * m..(i + 1) * m], &truth.real()[i * m..(i + 1) * m]);
        let tn = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        if tn == 0.0 {
            return Err(Error::DegenerateSample { index: i });
        }
        total += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / tn;
    }
    Ok(total / b as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: ParamMap,
    pub v: ParamMap,
}

fn flat(t: &mut Tensor) -> Vec<&mut f64> {
    match t.data_mut() {
        Data::Real(v) => v.iter_mut().collect(),
        Data::Complex(v) => v.iter_mut().flat_map(|z: &mut C64| [&mut z.re, &mut z.im]).collect(),
    }
}

/// Bias-corrected Adam; complex entries update their real and imaginary
/// parts independently.
pub fn adam_step(params: &mut ParamMap, grads: &ParamMap, state: &mut AdamState, h: &AdamHyper) -> Result<()> {
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.all_finite()) {
        return Err(Error::Diverged {
            epoch: 0,
            reason: format!("non-finite gradient for {name}"),
            history: vec![],
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let (c1, c2) = (1.0 - h.beta1.powi(t), 1.0 - h.beta2.powi(t));
    for (name, g) in grads {
        let p = params
            .get_mut(name)
            .ok_or_else(|| invalid(format!("gradient for unknown parameter {name}")))?;
        let m = state.m.entry(name.clone()).or_insert_with(|| g.zeros_like());
        let v = state.v.entry(name.clone()).or_insert_with(|| g.zeros_like());
        let mut g = g.clone();
        for (((p, g), m), v) in flat(p).into_iter().zip(flat(&mut g)).zip(flat(m)).zip(flat(v)) {
            *m = h.beta1 * *m + (1.0 - h.beta1) * *g;
            *v = h.beta2 * *v + (1.0 - h.beta2) * *g * *g;
            *p -= h.lr * (*m / c1) / ((*v / c2).sqrt() + h.eps_hat);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps_hat")]
    pub eps_hat: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps_hat() -> f64 {
    1e-8
}

impl TrainConfig {
    pub fn new(lr: f64, epochs: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            lr,
            epochs,
            batch_size,
            seed,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps_hat: default_eps_hat(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("learning rate, epochs and batch size must be positive"));
        }
        Ok(())
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps_hat: self.eps_hat,
        }
    }
}

/// Sample order for `epoch`; depends only on `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, count: usize) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamMap,
    /// Mean training loss of each epoch.
    pub history: Vec<f64>,
}

/// Trains from a fresh initialization seeded by `tc.seed`.
pub fn train_loop(cfg: &ModelConfig, data: &Dataset, tc: &TrainConfig) -> Result<TrainOutcome> {
    let params = init_params(cfg, Spatial::of(&data.grid), tc.seed)?;
    train_from(cfg, params, data, tc)
}

/// Shuffled mini-batch Adam on the mean relative L2 loss.
pub fn train_from(cfg: &ModelConfig, mut params: ParamMap, data: &Dataset, tc: &TrainConfig) -> Result<TrainOutcome> {
    tc.validate()?;
    data.validate()?;
    if data.is_empty() {
        return Err(invalid("empty training set"));
    }
    let mut model = Model::new(cfg.clone(), Spatial::of(&data.grid))?;
    let input = data.model_input(cfg)?;
    let targets = data.target_tensor()?;
    let hyper = tc.hyper();
    let mut state = AdamState::default();
    let mut history = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        let order = epoch_order(tc.seed, epoch, data.len());
        let mut total = 0.0;
        for idx in order.chunks(tc.batch_size) {
            let batch = ModelInput {
                a: input.a.select_rows(idx)?,
                stretched: input.stretched.iter().map(|s| s.select_rows(idx)).collect::<Result<_>>()?,
            };
            let y = targets.select_rows(idx)?;
            let diverged = |reason: String, history: &[f64]| Error::Diverged {
                epoch,
                reason,
                history: history.to_vec(),
            };
            let (loss, grads) = match model.loss_and_grad(&params, &batch, &y) {
                Ok(r) => r,
                Err(e @ Error::Overflow { .. }) => return Err(diverged(e.to_string(), &history)),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(diverged(format!("loss {loss}"), &history));
            }
            adam_step(&mut params, &grads, &mut state, &hyper).map_err(|e| diverged(e.to_string(), &history))?;
            total += loss * idx.len() as f64;
        }
        let mean = total / data.len() as f64;
        history.push(mean);
        if tc.epochs < 10 || (epoch + 1) % (tc.epochs / 10) == 0 {
            info!("epoch {}/{}: loss {mean:.4e}", epoch + 1, tc.epochs);
        }
    }
    Ok(TrainOutcome { params, history })
}

/// Predictions `(count, 1, ...)` for every sample, evaluated in batches.
pub fn predict(cfg: &ModelConfig, params: &ParamMap, data: &Dataset, batch: usize) -> Result<Tensor> {
    let mut model = Model::new(cfg.clone(), Spatial::of(&data.grid))?;
    let input = data.model_input(cfg)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len() * data.grid.len());
    for chunk in idx.chunks(batch.max(1)) {
        let x = ModelInput {
            a: input.a.select_rows(chunk)?,
            stretched: input.stretched.iter().map(|s| s.select_rows(chunk)).collect::<Result<_>>()?,
        };
        out.extend(model.forward(params, &x)?.into_real());
    }
    let mut shape = vec![data.len(), 1];
    shape.extend(data.grid.resolution());
    Tensor::new(shape, out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    model: ModelConfig,
    spatial: Spatial,
    train: TrainConfig,
}

/// Trained parameters with the configuration that produced them. The batch
/// order of epoch `e` is a function of `(train.seed, e)`, so `train` and the
/// history length describe the complete RNG state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub spatial: Spatial,
    pub train: TrainConfig,
    pub params: ParamMap,
    pub history: Vec<f64>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = toml::to_string(&CheckpointHeader {
            model: self.model.clone(),
            spatial: self.spatial,
            train: self.train.clone(),
        })
        .map_err(|e| Error::Format(e.to_string()))?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LE>(FORMAT_VERSION)?;
        w.write_u32::<LE>(header.len() as u32)?;
        w.write_all(header.as_bytes())?;
        w.write_u64::<LE>(self.history.len() as u64)?;
        for h in &self.history {
            w.write_f64::<LE>(*h)?;
        }
        w.write_u32::<LE>(self.params.len() as u32)?;
        for (name, t) in &self.params {
            w.write_u32::<LE>(name.len() as u32)?;
            w.write_all(name.as_bytes())?;
            w.write_u8(u8::from(t.is_complex()))?;
            w.write_u32::<LE>(t.shape().len() as u32)?;
            for d in t.shape() {
                w.write_u64::<LE>(*d as u64)?;
            }
            for k in 0..t.real_len() {
                w.write_f64::<LE>(t.get_flat(k))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("{} is not a checkpoint", path.display())));
        }
        let version = r.read_u32::<LE>().map_err(truncated)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let read_string = |r: &mut BufReader<File>, len: usize| -> Result<String> {
            let mut b = vec![0u8; len];
            r.read_exact(&mut b).map_err(truncated)?;
            String::from_utf8(b).map_err(|_| Error::Corruption("invalid UTF-8".into()))
        };
        let len = r.read_u32::<LE>().map_err(truncated)? as usize;
        let header: CheckpointHeader =
            toml::from_str(&read_string(&mut r, len)?).map_err(|e| Error::Format(e.to_string()))?;
        let hlen = r.read_u64::<LE>().map_err(truncated)? as usize;
        let mut history = vec![0.0; hlen];
        r.read_f64_into::<LE>(&mut history).map_err(truncated)?;
        let count = r.read_u32::<LE>().map_err(truncated)?;
        let mut params = ParamMap::new();
        for _ in 0..count {
            let nlen = r.read_u32::<LE>().map_err(truncated)? as usize;
            let name = read_string(&mut r, nlen)?;
            let complex = r.read_u8().map_err(truncated)? == 1;
            let ndim = r.read_u32::<LE>().map_err(truncated)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.read_u64::<LE>().map_err(truncated)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut v = vec![0.0; if complex { 2 * n } else { n }];
            r.read_f64_into::<LE>(&mut v).map_err(truncated)?;
            let t = if complex {
                Tensor::new_complex(shape, v.chunks(2).map(|c| C64::new(c[0], c[1])).collect())?
            } else {
                Tensor::new(shape, v)?
            };
            params.insert(name, t);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Corruption(format!("{} trailing bytes", rest.len())));
        }
        let expected = init_params(&header.model, header.spatial, 0)?;
        let consistent = expected.len() == params.len()
            && expected.iter().all(|(k, t)| params.get(k).is_some_and(|p| p.shape() == t.shape() && p.is_complex() == t.is_complex()));
        if !consistent {
            return Err(Error::Corruption("parameters do not match the stored configuration".into()));
        }
        Ok(Self {
            model: header.model,
            spatial: header.spatial,
            train: header.train,
            params,
            history,
        })
    }
}
