//! Experiment configuration in a line-oriented `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Keys not present
//! keep the preset for the chosen task, so a config file only needs to
//! state what differs. `task` must come first when present because it
//! selects those presets. [`ExperimentConfig::to_text`] writes every key
//! and parses back to an equal value.

use std::fmt::Write as _;
use std::str::FromStr;

use anisocanon::canon::Budget;
use anisocanon::spectral::Gso;

use crate::error::{LabError, LabResult};
use crate::spectra::BandSettings;
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskId {
    /// 40 × 40 torus, 1000 samples.
    GridFull,
    /// 20 × 20 torus, 200 samples.
    GridScaled,
    Shapes,
    BandOrientation,
}

impl TaskId {
    pub fn name(self) -> &'static str {
        match self {
            TaskId::GridFull => "grid-full",
            TaskId::GridScaled => "grid-scaled",
            TaskId::Shapes => "shapes",
            TaskId::BandOrientation => "band-orientation",
        }
    }

    pub fn is_graph(self) -> bool {
        !matches!(self, TaskId::Shapes)
    }
}

impl FromStr for TaskId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [TaskId::GridFull, TaskId::GridScaled, TaskId::Shapes, TaskId::BandOrientation]
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelId {
    Anlsf,
    /// Per-node MLP, mean-pooled over nodes, on the raw graph signal.
    NodeMlp,
    DeepSet,
    PointNet,
    Dgcnn,
}

impl ModelId {
    pub fn name(self) -> &'static str {
        match self {
            ModelId::Anlsf => "anlsf",
            ModelId::NodeMlp => "node-mlp",
            ModelId::DeepSet => "deepset",
            ModelId::PointNet => "pointnet",
            ModelId::Dgcnn => "dgcnn",
        }
    }

    pub fn is_graph_model(self) -> bool {
        matches!(self, ModelId::Anlsf | ModelId::NodeMlp)
    }
}

impl FromStr for ModelId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [ModelId::Anlsf, ModelId::NodeMlp, ModelId::DeepSet, ModelId::PointNet, ModelId::Dgcnn]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown model `{s}`"))
    }
}

/// A search budget written as `K` or `K+R` (R refinement steps).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchStrategy {
    pub candidates: usize,
    pub refine_steps: usize,
}

impl SearchStrategy {
    pub fn budget(&self, step_size: f64) -> Budget {
        Budget {
            candidates: self.candidates,
            refine_steps: self.refine_steps,
            step_size,
            refine_top_only: true,
            include_identity: false,
        }
    }

    pub fn label(&self) -> String {
        if self.refine_steps == 0 {
            format!("K={}", self.candidates)
        } else {
            format!("K={}+refine{}", self.candidates, self.refine_steps)
        }
    }
}

impl FromStr for SearchStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (k, r) = match s.split_once('+') {
            Some((k, r)) => (k, r),
            None => (s, "0"),
        };
        let candidates: usize = k.trim().parse().map_err(|_| format!("bad candidate count in `{s}`"))?;
        let refine_steps: usize = r.trim().parse().map_err(|_| format!("bad refine steps in `{s}`"))?;
        if candidates == 0 {
            return Err("a strategy needs at least one candidate".into());
        }
        Ok(SearchStrategy { candidates, refine_steps })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskId,
    pub model: ModelId,
    /// `false` freezes the transform at the identity (the U = I ablation).
    pub canonicalize: bool,
    pub data_seed: u64,
    /// Per-class sample count for shapes and band orientation.
    pub per_class: usize,
    pub points: usize,
    pub noise_sigma: f64,
    pub orientation_classes: usize,
    pub gso: Gso,
    /// Band decay `r`.
    pub decay: f64,
    /// Band count `S`.
    pub bands: usize,
    pub j_quantile: f64,
    pub band_dim_limit: Option<usize>,
    pub train_budget: Budget,
    pub eval_budget: Budget,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub folds: usize,
    /// Run only the first `run_folds` folds; 0 runs all of them.
    pub run_folds: usize,
    pub seed: u64,
    pub reg_weight: f64,
    pub hidden: usize,
    pub knn: usize,
    pub strategies: Vec<SearchStrategy>,
}

impl ExperimentConfig {
    pub fn preset(task: TaskId) -> Self {
        let base = ExperimentConfig {
            task,
            model: ModelId::Anlsf,
            canonicalize: true,
            data_seed: 1,
            per_class: 100,
            points: 64,
            noise_sigma: 0.1,
            orientation_classes: 4,
            gso: Gso::NormalizedLaplacian,
            decay: 0.5,
            bands: 8,
            j_quantile: 0.9,
            band_dim_limit: Some(64),
            train_budget: Budget::sampling(8),
            eval_budget: Budget { refine_steps: 10, refine_top_only: true, ..Budget::sampling(8) },
            epochs: 30,
            batch_size: 100,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            patience: 100,
            folds: 10,
            run_folds: 0,
            seed: 0,
            reg_weight: 0.0,
            hidden: 128,
            knn: 4,
            strategies: Vec::new(),
        };
        match task {
            TaskId::GridFull | TaskId::GridScaled => base,
            TaskId::Shapes => ExperimentConfig {
                model: ModelId::DeepSet,
                epochs: 40,
                batch_size: 32,
                folds: 5,
                hidden: 32,
                train_budget: Budget::sampling(16),
                eval_budget: Budget { refine_steps: 10, refine_top_only: true, ..Budget::sampling(16) },
                ..base
            },
            TaskId::BandOrientation => {
                let refine = Budget { refine_steps: 6, step_size: 0.2, refine_top_only: true, ..Budget::sampling(8) };
                ExperimentConfig {
                    per_class: 60,
                    bands: 5,
                    band_dim_limit: None,
                    noise_sigma: 0.1,
                    train_budget: refine,
                    eval_budget: refine,
                    epochs: 60,
                    batch_size: 32,
                    folds: 5,
                    hidden: 64,
                    strategies: ["8", "40", "80", "8+6"].iter().map(|s| s.parse().expect("literal")).collect(),
                    ..base
                }
            }
        }
    }

    pub fn parse(text: &str) -> LabResult<Self> {
        let mut cfg: Option<ExperimentConfig> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(LabError::Config { line, message: format!("expected `key = value`, found `{content}`") });
            };
            let (key, value) = (key.trim(), value.trim());
            if key == "task" {
                if cfg.is_some() {
                    return Err(LabError::Config { line, message: "`task` must be the first key".into() });
                }
                cfg = Some(Self::preset(value.parse().map_err(|m| LabError::Config { line, message: m })?));
                continue;
            }
            let c = cfg.get_or_insert_with(|| Self::preset(TaskId::GridScaled));
            c.set(key, value).map_err(|message| LabError::Config { line, message })?;
        }
        let cfg = cfg.unwrap_or_else(|| Self::preset(TaskId::GridScaled));
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("`{key}` cannot be `{v}`"))
        }
        match key {
            "model" => self.model = value.parse()?,
            "canonicalize" => self.canonicalize = num(key, value)?,
            "data_seed" => self.data_seed = num(key, value)?,
            "per_class" => self.per_class = num(key, value)?,
            "points" => self.points = num(key, value)?,
            "noise_sigma" => self.noise_sigma = num(key, value)?,
            "orientation_classes" => self.orientation_classes = num(key, value)?,
            "gso" => self.gso = Gso::from_name(value).ok_or_else(|| format!("unknown gso `{value}`"))?,
            "decay" => self.decay = num(key, value)?,
            "bands" => self.bands = num(key, value)?,
            "j_quantile" => self.j_quantile = num(key, value)?,
            "band_dim_limit" => {
                self.band_dim_limit = if value == "none" { None } else { Some(num(key, value)?) }
            }
            "train_candidates" => self.train_budget.candidates = num(key, value)?,
            "train_refine_steps" => self.train_budget.refine_steps = num(key, value)?,
            "train_step_size" => self.train_budget.step_size = num(key, value)?,
            "train_refine_top_only" => self.train_budget.refine_top_only = num(key, value)?,
            "eval_candidates" => self.eval_budget.candidates = num(key, value)?,
            "eval_refine_steps" => self.eval_budget.refine_steps = num(key, value)?,
            "eval_step_size" => self.eval_budget.step_size = num(key, value)?,
            "eval_refine_top_only" => self.eval_budget.refine_top_only = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "folds" => self.folds = num(key, value)?,
            "run_folds" => self.run_folds = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "reg_weight" => self.reg_weight = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "knn" => self.knn = num(key, value)?,
            "strategies" => {
                self.strategies = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse())
                    .collect::<Result<_, _>>()?
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> LabResult<()> {
        let bad = |m: &str| Err(LabError::Config { line: 0, message: m.into() });
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if self.run_folds > self.folds {
            return bad("run_folds cannot exceed folds");
        }
        if self.task.is_graph() != self.model.is_graph_model() {
            return bad("the model does not accept this task's inputs");
        }
        if self.train_budget.candidates == 0 || self.eval_budget.candidates == 0 {
            return bad("budgets need at least one candidate");
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return bad("decay must lie in (0, 1)");
        }
        if self.bands == 0 || self.hidden == 0 || self.batch_size == 0 {
            return bad("bands, hidden and batch_size must be positive");
        }
        if !(self.j_quantile > 0.0 && self.j_quantile <= 1.0) {
            return bad("j_quantile must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn band_settings(&self) -> BandSettings {
        BandSettings {
            gso: self.gso,
            decay: self.decay,
            bands: self.bands,
            j_quantile: self.j_quantile,
            band_dim_limit: self.band_dim_limit,
        }
    }

    /// Training budget after applying `canonicalize`.
    pub fn effective_train_budget(&self) -> Budget {
        if self.canonicalize && self.model != ModelId::NodeMlp {
            self.train_budget
        } else {
            Budget::identity_only()
        }
    }

    pub fn effective_eval_budget(&self) -> Budget {
        if self.canonicalize && self.model != ModelId::NodeMlp {
            self.eval_budget
        } else {
            Budget::identity_only()
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            patience: self.patience,
            validation_fraction: 0.1,
            budget: self.effective_train_budget(),
            seed,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = &self.train_budget;
        let e = &self.eval_budget;
        let strategies: Vec<String> = self
            .strategies
            .iter()
            .map(|s| if s.refine_steps == 0 { s.candidates.to_string() } else { format!("{}+{}", s.candidates, s.refine_steps) })
            .collect();
        let limit = self.band_dim_limit.map_or("none".to_string(), |l| l.to_string());
        let pairs: Vec<(&str, String)> = vec![
            ("task", self.task.name().into()),
            ("model", self.model.name().into()),
            ("canonicalize", self.canonicalize.to_string()),
            ("data_seed", self.data_seed.to_string()),
            ("per_class", self.per_class.to_string()),
            ("points", self.points.to_string()),
            ("noise_sigma", format!("{:?}", self.noise_sigma)),
            ("orientation_classes", self.orientation_classes.to_string()),
            ("gso", self.gso.name().into()),
            ("decay", format!("{:?}", self.decay)),
            ("bands", self.bands.to_string()),
            ("j_quantile", format!("{:?}", self.j_quantile)),
            ("band_dim_limit", limit),
            ("train_candidates", t.candidates.to_string()),
            ("train_refine_steps", t.refine_steps.to_string()),
            ("train_step_size", format!("{:?}", t.step_size)),
            ("train_refine_top_only", t.refine_top_only.to_string()),
            ("eval_candidates", e.candidates.to_string()),
            ("eval_refine_steps", e.refine_steps.to_string()),
            ("eval_step_size", format!("{:?}", e.step_size)),
            ("eval_refine_top_only", e.refine_top_only.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("weight_decay", format!("{:?}", self.weight_decay)),
            ("patience", self.patience.to_string()),
            ("folds", self.folds.to_string()),
            ("run_folds", self.run_folds.to_string()),
            ("seed", self.seed.to_string()),
            ("reg_weight", format!("{:?}", self.reg_weight)),
            ("hidden", self.hidden.to_string()),
            ("knn", self.knn.to_string()),
            ("strategies", strategies.join(",")),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
