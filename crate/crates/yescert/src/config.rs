//! Session configuration: the JSON file shared by `run` and `serve`.
//!
//! Every field has a default, so `{}` is a valid config (the phase-retrieval
//! setup). Unknown fields are rejected so typos surface as errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use yescert_core::monitor::{PlateauRule, StopRule};
use yescert_core::tasks::{NoiseScale, SensingKind, DENOISING_NOISE_SCALE};
use yescert_core::{Activation, CloudRegion, GuidanceRule, OptimizerKind};

use crate::error::{Result, RunError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub task: TaskSpec,
    pub network: NetworkSpec,
    pub optimizer: OptimizerSpec,
    pub batch_size: usize,
    pub max_epochs: u64,
    /// Seeds parameter initialization and minibatch shuffling.
    pub seed: u64,
    pub bounds: BoundSpec,
    pub guidance: GuidanceSpec,
    pub stop: StopSpec,
    pub output: OutputSpec,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            task: TaskSpec::default(),
            network: NetworkSpec::default(),
            optimizer: OptimizerSpec::default(),
            batch_size: 20,
            max_epochs: 2000,
            seed: 0,
            bounds: BoundSpec::default(),
            guidance: GuidanceSpec::default(),
            stop: StopSpec::default(),
            output: OutputSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    PhaseRetrieval {
        #[serde(default = "d20")]
        n: usize,
        #[serde(default = "d1000")]
        d: usize,
        #[serde(default)]
        seed: u64,
    },
    Denoising {
        #[serde(default = "d20")]
        n: usize,
        #[serde(default = "d50")]
        num_signals: usize,
        #[serde(default = "d20")]
        noise_per_signal: usize,
        #[serde(default = "d02")]
        noise: f64,
        #[serde(default = "default_noise_scale")]
        noise_scale: NoiseScale,
        #[serde(default)]
        seed: u64,
    },
    QuadraticImage {
        /// Binary PGM file; the built-in 128x128 test card when absent.
        #[serde(default)]
        image: Option<PathBuf>,
        #[serde(default = "d8")]
        patch_size: usize,
        #[serde(default = "default_sensing")]
        sensing: SensingKind,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        noise_std: f64,
    },
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default = "d5000")]
        count: usize,
    },
    MnistSynthetic {
        #[serde(default = "d100")]
        samples: usize,
        #[serde(default = "d015")]
        jitter: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn d8() -> usize {
    8
}
fn d20() -> usize {
    20
}
fn d50() -> usize {
    50
}
fn d100() -> usize {
    100
}
fn d1000() -> usize {
    1000
}
fn d5000() -> usize {
    5000
}
fn d02() -> f64 {
    0.2
}
fn d015() -> f64 {
    0.15
}
fn default_noise_scale() -> NoiseScale {
    DENOISING_NOISE_SCALE
}
fn default_sensing() -> SensingKind {
    SensingKind::Gaussian
}

pub const TASK_NAMES: [&str; 5] = ["phase_retrieval", "denoising", "quadratic_image", "mnist", "mnist_synthetic"];

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec::PhaseRetrieval { n: 20, d: 1000, seed: 0 }
    }
}

impl TaskSpec {
    /// Default parameters for a task name. `mnist` has no defaults for its
    /// file paths and is rejected here.
    pub fn with_defaults(name: &str) -> Result<Self> {
        let json = match name {
            "phase_retrieval" | "denoising" | "quadratic_image" | "mnist_synthetic" => {
                serde_json::json!({ "kind": name })
            }
            "mnist" => {
                return Err(RunError::config("task", "mnist needs image and label paths; set them in the config file"))
            }
            other => {
                return Err(RunError::config(
                    "task",
                    format!("unknown task `{other}`, expected one of {}", TASK_NAMES.join(", ")),
                ))
            }
        };
        Ok(serde_json::from_value(json).expect("defaults deserialize"))
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::PhaseRetrieval { .. } => "phase_retrieval",
            TaskSpec::Denoising { .. } => "denoising",
            TaskSpec::QuadraticImage { .. } => "quadratic_image",
            TaskSpec::Mnist { .. } => "mnist",
            TaskSpec::MnistSynthetic { .. } => "mnist_synthetic",
        }
    }

    /// Whether the task's network carries bias terms unless overridden.
    /// Phase retrieval is the only one without.
    pub fn default_bias(&self) -> bool {
        !matches!(self, TaskSpec::PhaseRetrieval { .. })
    }

    pub fn set_seed(&mut self, value: u64) {
        match self {
            TaskSpec::PhaseRetrieval { seed, .. }
            | TaskSpec::Denoising { seed, .. }
            | TaskSpec::QuadraticImage { seed, .. }
            | TaskSpec::MnistSynthetic { seed, .. } => *seed = value,
            TaskSpec::Mnist { .. } => {}
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            TaskSpec::QuadraticImage { image: Some(p), .. } => fix(p),
            TaskSpec::Mnist { images, labels, .. } => {
                fix(images);
                fix(labels);
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    /// Layer widths including input and output, e.g. `[20, 20, 20, 20, 20, 20]`
    /// for five layers. Empty means five layers of hidden width 20 between
    /// the task's input and output dimensions.
    pub layers: Vec<usize>,
    /// One per layer. Empty means ReLU hidden layers and an Identity output.
    pub activations: Vec<Activation>,
    /// Defaults to the task's convention.
    pub bias: Option<bool>,
}

impl NetworkSpec {
    /// Resolves defaults against the data dimensions.
    pub fn resolve(
        &self,
        task: &TaskSpec,
        input_dim: usize,
        output_dim: usize,
    ) -> Result<(Vec<usize>, Vec<Activation>, bool)> {
        let dims =
            if self.layers.is_empty() { vec![input_dim, 20, 20, 20, 20, output_dim] } else { self.layers.clone() };
        if dims.len() < 2 {
            return Err(RunError::config("network.layers", "need at least an input and an output width"));
        }
        if let Some(i) = dims.iter().position(|&w| w == 0) {
            return Err(RunError::config(format!("network.layers[{i}]"), "widths must be positive"));
        }
        if dims[0] != input_dim {
            return Err(RunError::config(
                "network.layers[0]",
                format!("input width {} does not match the task's input dimension {input_dim}", dims[0]),
            ));
        }
        let last = dims.len() - 1;
        if dims[last] != output_dim {
            return Err(RunError::config(
                format!("network.layers[{last}]"),
                format!("output width {} does not match the task's output dimension {output_dim}", dims[last]),
            ));
        }
        let depth = dims.len() - 1;
        let acts = if self.activations.is_empty() {
            let mut a = vec![Activation::Relu; depth];
            a[depth - 1] = Activation::Identity;
            a
        } else if self.activations.len() != depth {
            return Err(RunError::config(
                "network.activations",
                format!("{} activations for {depth} layers", self.activations.len()),
            ));
        } else {
            self.activations.clone()
        };
        Ok((dims, acts, self.bias.unwrap_or_else(|| task.default_bias())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    /// Initial learning rate.
    pub lr: f64,
    pub decay_factor: f64,
    pub decay_period: u64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self { kind: OptimizerKind::Adam, lr: 1e-3, decay_factor: 0.9, decay_period: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSpec {
    /// Bounds are computed on epoch 1 and every `cadence` epochs after it.
    pub cadence: u64,
    /// Highest YES-k degree; all degrees up to depth - 1 when absent.
    pub max_degree: Option<usize>,
    /// Report YES-k as a running minimum over degree.
    pub monotone: bool,
    /// Relative singular-value cutoff; `1e-12 * max(rows, cols)` when absent.
    pub rcond: Option<f64>,
}

impl Default for BoundSpec {
    fn default() -> Self {
        Self { cadence: 1, max_degree: None, monotone: true, rcond: None }
    }
}

/// Learning-rate guidance: `lr = base * (1 + gain * min(d / scale, cap))`
/// where `d` is the distance of the loss above the cloud bottom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceSpec {
    pub enabled: bool,
    pub gain: f64,
    pub scale: f64,
    pub cap: f64,
}

impl Default for GuidanceSpec {
    fn default() -> Self {
        let r = GuidanceRule::default();
        Self { enabled: false, gain: r.gain, scale: r.scale, cap: r.cap }
    }
}

impl GuidanceSpec {
    pub fn rule(&self) -> GuidanceRule {
        GuidanceRule { gain: self.gain, scale: self.scale, cap: self.cap }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct StopSpec {
    /// Stop once in `required_region` with little weight movement. Off when absent.
    pub rule: Option<StopRule>,
    pub plateau: PlateauRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory receiving `run.jsonl` and `run.csv`.
    pub dir: Option<PathBuf>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: Some(PathBuf::from("yescert-run")) }
    }
}

impl OutputSpec {
    pub fn jsonl_path(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("run.jsonl"))
    }

    pub fn csv_path(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("run.csv"))
    }
}

/// Command-line overrides; `None` leaves the file value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<u64>,
    pub seed: Option<u64>,
    pub task: Option<String>,
    pub layers: Option<Vec<usize>>,
    pub bound_cadence: Option<u64>,
    pub max_degree: Option<usize>,
    pub guidance: Option<bool>,
    pub out_dir: Option<PathBuf>,
}

impl SessionConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "(root)".to_string() } else { path };
            RunError::config(path, e.into_inner().to_string())
        })
    }

    /// Reads a config file. Relative data paths are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.task.resolve_paths(base);
        Ok(cfg)
    }

    /// Applies flag values on top of the file. A task override resets the
    /// task parameters to that task's defaults.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(name) = &o.task {
            if name != self.task.name() {
                self.task = TaskSpec::with_defaults(name)?;
            }
        }
        if let Some(lr) = o.lr {
            self.optimizer.lr = lr;
        }
        if let Some(b) = o.batch_size {
            self.batch_size = b;
        }
        if let Some(e) = o.epochs {
            self.max_epochs = e;
        }
        if let Some(s) = o.seed {
            self.seed = s;
            self.task.set_seed(s);
        }
        if let Some(layers) = &o.layers {
            self.network.layers = layers.clone();
        }
        if let Some(c) = o.bound_cadence {
            self.bounds.cadence = c;
        }
        if let Some(k) = o.max_degree {
            self.bounds.max_degree = Some(k);
        }
        if let Some(g) = o.guidance {
            self.guidance.enabled = g;
        }
        if let Some(dir) = &o.out_dir {
            self.output.dir = Some(dir.clone());
        }
        Ok(())
    }

    /// Checks that do not need the dataset.
    pub fn validate(&self) -> Result<()> {
        let opt = &self.optimizer;
        if !(opt.lr > 0.0) || !opt.lr.is_finite() {
            return Err(RunError::config("optimizer.lr", format!("must be finite and > 0, got {}", opt.lr)));
        }
        if !(opt.decay_factor > 0.0 && opt.decay_factor <= 1.0) {
            return Err(RunError::config(
                "optimizer.decay_factor",
                format!("must lie in (0, 1], got {}", opt.decay_factor),
            ));
        }
        if opt.decay_period == 0 {
            return Err(RunError::config("optimizer.decay_period", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(RunError::config("batch_size", "must be >= 1"));
        }
        if self.bounds.cadence == 0 {
            return Err(RunError::config("bounds.cadence", "must be >= 1"));
        }
        if let Some(r) = self.bounds.rcond {
            if !(r > 0.0) {
                return Err(RunError::config("bounds.rcond", format!("must be > 0, got {r}")));
            }
        }
        if self.bounds.max_degree == Some(0) {
            return Err(RunError::config("bounds.max_degree", "must be >= 1"));
        }
        let g = &self.guidance;
        if !(g.gain >= 0.0 && g.scale > 0.0 && g.cap >= 0.0) {
            return Err(RunError::config("guidance", "gain and cap must be >= 0 and scale > 0"));
        }
        if let Some(rule) = &self.stop.rule {
            if rule.window == 0 {
                return Err(RunError::config("stop.rule.window", "must be >= 1"));
            }
            if rule.required_region == CloudRegion::Red {
                return Err(RunError::config("stop.rule.required_region", "stopping in red is not a convergence rule"));
            }
        }
        if self.stop.plateau.window < 2 {
            return Err(RunError::config("stop.plateau.window", "must be >= 2"));
        }
        Ok(())
    }
}
