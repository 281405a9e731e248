//! Declarative experiment configs and the generate / train / evaluate
//! pipeline behind the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{evaluate_model, format_table, write_curves_csv, write_reports_csv, MetricsReport};
use crate::neuralop::{ComFnoConfig, FnoConfig, LayerBlockSpec, ModelConfig, Spatial};
use crate::training::{build_dataset, train_loop, Checkpoint, Dataset, DatasetSpec, Equation, Pairing, TrainConfig};

/// Offset of the first test function in the GRF stream.
pub const TEST_INDEX_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    #[serde(rename = "1d-plain")]
    Plain1d,
    #[serde(rename = "1d-turning")]
    Turning1d,
    Parabolic,
    #[serde(rename = "elliptic-2d")]
    Elliptic2d,
    MultiEps,
    FewShot,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::Plain1d,
        ExperimentId::Turning1d,
        ExperimentId::Parabolic,
        ExperimentId::Elliptic2d,
        ExperimentId::MultiEps,
        ExperimentId::FewShot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Plain1d => "1d-plain",
            ExperimentId::Turning1d => "1d-turning",
            ExperimentId::Parabolic => "parabolic",
            ExperimentId::Elliptic2d => "elliptic-2d",
            ExperimentId::MultiEps => "multi-eps",
            ExperimentId::FewShot => "few-shot",
        }
    }

    pub fn equation(self) -> Equation {
        match self {
            ExperimentId::Turning1d => Equation::Turning1d,
            ExperimentId::Parabolic => Equation::Parabolic,
            ExperimentId::Elliptic2d => Equation::Elliptic2d,
            _ => Equation::Plain1d,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown experiment {s:?}")))
    }
}

/// `count` equally spaced values from `start`; `pick` keeps `pick` of them
/// at indices `round(j (count-1) / (pick-1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
    pub pick: Option<usize>,
}

impl EpsGrid {
    pub fn values(&self) -> Vec<f64> {
        let all: Vec<f64> = (0..self.count).map(|k| self.start + k as f64 * self.step).collect();
        match self.pick {
            Some(p) if p >= 2 && p < self.count => (0..p)
                .map(|j| all[((j * (self.count - 1)) as f64 / (p - 1) as f64).round() as usize])
                .collect(),
            Some(1) => vec![all[0]],
            _ => all,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub resolution: usize,
    pub train_functions: usize,
    pub test_functions: usize,
    /// Single shared `eps`.
    pub eps: Option<f64>,
    /// Grid of `eps` values; training pairs every function with every value.
    pub eps_grid: Option<EpsGrid>,
    pub seed: u64,
    #[serde(default = "one")]
    pub lengthscale: f64,
    /// Fine-mesh interval count; 0 selects the solver default.
    #[serde(default)]
    pub fine_n: usize,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnoSection {
    pub depth: usize,
    pub width: usize,
    pub modes: usize,
    pub proj_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComFnoSection {
    pub block_num: usize,
    pub depth: usize,
    pub width: usize,
    pub modes: usize,
    pub proj_hidden: usize,
    pub extra_depth: usize,
    pub extra_width: usize,
    pub extra_modes: usize,
    pub dense_hidden: Vec<usize>,
    #[serde(default = "xi_cap")]
    pub xi_cap: f64,
}

fn xi_cap() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub fno: TrainConfig,
    pub comfno: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub fno: FnoSection,
    pub comfno: ComFnoSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Train,
    Evaluate,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Fno,
    Comfno,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fno => "fno",
            ModelKind::Comfno => "comfno",
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Validation(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let anchors = self.experiment.equation().layer_anchors().len();
        if self.comfno.block_num != anchors {
            return Err(Error::Validation(format!(
                "{} has {anchors} layer(s) but block_num = {}",
                self.experiment.name(),
                self.comfno.block_num
            )));
        }
        let multi = self.experiment == ExperimentId::MultiEps;
        match (&self.data.eps, &self.data.eps_grid, multi) {
            (Some(e), None, false) if *e > 0.0 => {}
            (None, Some(g), true) if g.start > 0.0 && g.step >= 0.0 && g.count > 0 => {}
            _ => {
                return Err(Error::Validation(
                    "set `eps` for single-eps experiments and `eps_grid` for multi-eps".into(),
                ))
            }
        }
        if self.data.train_functions == 0 || self.data.test_functions == 0 {
            return Err(Error::Validation("dataset sizes must be positive".into()));
        }
        let sp = self.spatial()?;
        for kind in [ModelKind::Fno, ModelKind::Comfno] {
            self.model(kind).validate(sp).map_err(|e| Error::Validation(e.to_string()))?;
        }
        self.train.fno.validate().map_err(|e| Error::Validation(e.to_string()))?;
        self.train.comfno.validate().map_err(|e| Error::Validation(e.to_string()))
    }

    fn spatial(&self) -> Result<Spatial> {
        Ok(Spatial::of(&self.experiment.equation().target_grid(self.data.resolution)?))
    }

    fn eps_values(&self) -> Vec<f64> {
        match (&self.data.eps, &self.data.eps_grid) {
            (Some(e), _) => vec![*e],
            (_, Some(g)) => g.values(),
            _ => vec![],
        }
    }

    pub fn eps_as_input(&self) -> bool {
        self.experiment == ExperimentId::MultiEps
    }

    /// Overrides the data seed and both training seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.data.seed = seed;
        self.train.fno.seed = seed;
        self.train.comfno.seed = seed;
        self
    }

    pub fn model(&self, kind: ModelKind) -> ModelConfig {
        let eq = self.experiment.equation();
        let cin = 1 + eq.dims() + usize::from(self.eps_as_input());
        let net = |depth, width, modes, proj_hidden, in_channels| FnoConfig {
            width,
            modes,
            depth,
            in_channels,
            out_channels: 1,
            proj_hidden,
        };
        match kind {
            ModelKind::Fno => ModelConfig::Fno {
                net: net(self.fno.depth, self.fno.width, self.fno.modes, self.fno.proj_hidden, cin),
                eps_as_input: self.eps_as_input(),
            },
            ModelKind::Comfno => {
                let c = &self.comfno;
                ModelConfig::Comfno(ComFnoConfig {
                    base: net(c.depth, c.width, c.modes, c.proj_hidden, cin),
                    blocks: eq
                        .layer_anchors()
                        .into_iter()
                        .take(c.block_num)
                        .map(|(x0, axis)| LayerBlockSpec {
                            x0,
                            axis,
                            extra: net(c.extra_depth, c.extra_width, c.extra_modes, 2 * c.extra_width, cin + 2),
                            dense_hidden: c.dense_hidden.clone(),
                            xi_cap: c.xi_cap,
                        })
                        .collect(),
                    eps_as_input: self.eps_as_input(),
                })
            }
        }
    }

    pub fn train_config(&self, kind: ModelKind) -> &TrainConfig {
        match kind {
            ModelKind::Fno => &self.train.fno,
            ModelKind::Comfno => &self.train.comfno,
        }
    }

    pub fn dataset_spec(&self, test: bool) -> DatasetSpec {
        let multi = self.eps_values().len() > 1;
        DatasetSpec {
            equation: self.experiment.equation(),
            functions: if test {
                self.data.test_functions
            } else {
                self.data.train_functions
            },
            resolution: self.data.resolution,
            eps: self.eps_values(),
            pairing: if multi && !test { Pairing::Cartesian } else { Pairing::Cycle },
            seed: self.data.seed,
            first_index: if test { TEST_INDEX_OFFSET } else { 0 },
            lengthscale: self.data.lengthscale,
            fine_n: self.data.fine_n,
        }
    }
}

/// Artifact locations inside a run directory.
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
    pub fn train_set(&self) -> PathBuf {
        self.dir.join("train.spds")
    }
    pub fn test_set(&self) -> PathBuf {
        self.dir.join("test.spds")
    }
    pub fn checkpoint(&self, kind: ModelKind) -> PathBuf {
        self.dir.join(format!("{}.spck", kind.name()))
    }
    pub fn curve(&self, kind: ModelKind) -> PathBuf {
        self.dir.join(format!("curve_{}.txt", kind.name()))
    }
    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join("report.txt")
    }
    pub fn curves_csv(&self) -> PathBuf {
        self.dir.join("curves.csv")
    }
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::StageDependency { stage, path })
    }
}

pub fn generate(cfg: &ExperimentConfig, run: &RunPaths) -> Result<()> {
    fs::create_dir_all(&run.dir)?;
    for (test, path) in [(false, run.train_set()), (true, run.test_set())] {
        let spec = cfg.dataset_spec(test);
        info!("{}: generating {} samples -> {}", cfg.experiment.name(), spec.count(), path.display());
        build_dataset(&spec)?.save(&path)?;
    }
    Ok(())
}

pub fn train(cfg: &ExperimentConfig, run: &RunPaths, kind: ModelKind) -> Result<Checkpoint> {
    let data = Dataset::load(&require(run.train_set(), "generate")?)?;
    let model = cfg.model(kind);
    let tc = cfg.train_config(kind).clone();
    info!("{}: training {} for {} epochs", cfg.experiment.name(), kind.name(), tc.epochs);
    let out = train_loop(&model, &data, &tc)?;
    let ck = Checkpoint {
        model,
        spatial: Spatial::of(&data.grid),
        train: tc,
        params: out.params,
        history: out.history,
    };
    ck.save(&run.checkpoint(kind))?;
    Ok(ck)
}

/// Evaluates both checkpoints on the test set; writes `metrics.csv`,
/// `report.txt` and one residual curve per model.
pub fn evaluate(cfg: &ExperimentConfig, run: &RunPaths) -> Result<Vec<MetricsReport>> {
    let test = Dataset::load(&require(run.test_set(), "generate")?)?;
    let mut reports = Vec::new();
    for kind in [ModelKind::Fno, ModelKind::Comfno] {
        let ck = Checkpoint::load(&require(run.checkpoint(kind), "train")?)?;
        let ev = evaluate_model(&ck.model, &ck.params, &test)?;
        let text: String = ev.curve.iter().map(|v| format!("{v:e}\n")).collect();
        fs::write(run.curve(kind), text)?;
        reports.push(ev.report.tagged(cfg.experiment.name(), kind.name()));
    }
    write_reports_csv(&run.metrics(), &reports)?;
    fs::write(run.report(), format_table(&reports))?;
    Ok(reports)
}

fn read_curve(path: PathBuf) -> Result<Vec<f64>> {
    fs::read_to_string(require(path, "evaluate")?)?
        .lines()
        .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Corruption(format!("curve value {l:?}: {e}"))))
        .collect()
}

/// Writes `curves.csv` (or `out`) from an evaluated run directory.
pub fn export_curves(run: &RunPaths, out: Option<&Path>) -> Result<PathBuf> {
    let fno = read_curve(run.curve(ModelKind::Fno))?;
    let comfno = read_curve(run.curve(ModelKind::Comfno))?;
    let test = Dataset::load(&require(run.test_set(), "generate")?)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| run.curves_csv());
    write_curves_csv(&path, &test.grid, &fno, &comfno)?;
    Ok(path)
}

/// Runs `stage` (or every stage) of one experiment in `run`.
pub fn run_experiment(cfg: &ExperimentConfig, run: &RunPaths, stage: Stage) -> Result<Vec<MetricsReport>> {
    if matches!(stage, Stage::Generate | Stage::All) {
        generate(cfg, run)?;
    }
    if matches!(stage, Stage::Train | Stage::All) {
        train(cfg, run, ModelKind::Fno)?;
        train(cfg, run, ModelKind::Comfno)?;
    }
    if matches!(stage, Stage::Evaluate | Stage::All) {
        let reports = evaluate(cfg, run)?;
        export_curves(run, None)?;
        return Ok(reports);
    }
    Ok(vec![])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

const DESK: [(&str, &str); 6] = [
    ("1d-plain", include_str!("../configs/desk/1d-plain.toml")),
    ("1d-turning", include_str!("../configs/desk/1d-turning.toml")),
    ("parabolic", include_str!("../configs/desk/parabolic.toml")),
    ("elliptic-2d", include_str!("../configs/desk/elliptic-2d.toml")),
    ("multi-eps", include_str!("../configs/desk/multi-eps.toml")),
    ("few-shot", include_str!("../configs/desk/few-shot.toml")),
];

const PAPER: [(&str, &str); 6] = [
    ("1d-plain", include_str!("../configs/paper/1d-plain.toml")),
    ("1d-turning", include_str!("../configs/paper/1d-turning.toml")),
    ("parabolic", include_str!("../configs/paper/parabolic.toml")),
    ("elliptic-2d", include_str!("../configs/paper/elliptic-2d.toml")),
    ("multi-eps", include_str!("../configs/paper/multi-eps.toml")),
    ("few-shot", include_str!("../configs/paper/few-shot.toml")),
];

/// The bundled config of `experiment` in `preset`.
pub fn preset_config(preset: Preset, experiment: ExperimentId) -> Result<ExperimentConfig> {
    let table = match preset {
        Preset::Desk => &DESK,
        Preset::Paper => &PAPER,
    };
    let (_, text) = table
        .iter()
        .find(|(name, _)| *name == experiment.name())
        .expect("every experiment has a preset");
    ExperimentConfig::from_toml(text)
}

/// Runs every selected experiment of a preset under `root/<experiment>` and
/// writes a combined `summary.txt` and `summary.csv` in `root`.
pub fn reproduce(preset: Preset, root: &Path, only: &[ExperimentId], seed: Option<u64>) -> Result<Vec<MetricsReport>> {
    fs::create_dir_all(root)?;
    let mut all = Vec::new();
    for id in ExperimentId::ALL {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let mut cfg = preset_config(preset, id)?;
        if let Some(s) = seed {
            cfg = cfg.with_seed(s);
        }
        let run = RunPaths::new(root.join(id.name()));
        all.extend(run_experiment(&cfg, &run, Stage::All)?);
    }
    write_reports_csv(&root.join("summary.csv"), &all)?;
    fs::write(root.join("summary.txt"), format_table(&all))?;
    Ok(all)
}
