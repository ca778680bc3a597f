//! Experiment configuration: a small TOML schema, parsed with *exhaustive*
//! error reporting — every problem in the file is collected with its key
//! path, not just the first — plus a deterministic resolved-config echo so
//! run directories are self-describing.
//!
//! Schema (defaults in parentheses):
//!
//! ```toml
//! seed = 1234                  # required — runs never default to wall-clock
//! epochs = 30                  # (30)
//! batch = 64                   # (64)
//! out = "runs/demo"            # ("runs")
//!
//! [dataset]
//! name = "gaussians-3"         # gaussians-<k> | spirals-2 | cifar10 | idx
//! train = 480                  # subset sizes; defaults: synthetic 480/120,
//! test = 120                   #   file-backed 5000/1000
//! paths = ["batch_1.bin"]      # cifar10 only (required)
//! images = "imgs.idx"          # idx only (required)
//! labels = "labels.idx"        # idx only (required)
//!
//! [model]
//! preset = "mlp-2"             # mlp-2 | cnn-mini | cnn-mini-res
//! activation = "arelu"         # sigmoid tanh relu lrelu swish prelu
//!                              #   asigmoid atanh arelu
//! freeze_activation = false    # (false)
//!
//! [optimizer]
//! kind = "sgd"                 # ("sgd") sgd momentum adagrad adadelta adam
//! momentum = 0.9               # each hyperparameter defaults as shown
//! rho = 0.95
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//!
//! [schedule]
//! kind = "thirds"              # ("thirds") thirds | constant | stages
//! rate = 1e-3                  # constant only
//! stages = [[10, 1e-3], [20, 1e-4]]  # stages only: [span, rate] pairs
//!
//! [tracking]
//! layers = ["conv0", "dense1"] # (first/middle/last weight layers)
//! k = 4                        # (4) tracked weights per layer
//! ```

use std::path::PathBuf;

use crate::activation::ActivationKind;
use crate::error::{ConfigIssue, Error, Result};
use crate::optim::{LrSchedule, OptimizerConfig, OptimizerKind};

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    Synthetic {
        kind: String,
        train: usize,
        test: usize,
    },
    Cifar10 {
        paths: Vec<PathBuf>,
        train: usize,
        test: usize,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        train: usize,
        test: usize,
    },
}

impl DatasetConfig {
    pub fn train_size(&self) -> usize {
        match self {
            DatasetConfig::Synthetic { train, .. }
            | DatasetConfig::Cifar10 { train, .. }
            | DatasetConfig::Idx { train, .. } => *train,
        }
    }

    pub fn test_size(&self) -> usize {
        match self {
            DatasetConfig::Synthetic { test, .. }
            | DatasetConfig::Cifar10 { test, .. }
            | DatasetConfig::Idx { test, .. } => *test,
        }
    }
}

/// Learning-rate schedule choice, resolved against the epoch count at run
/// time.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleConfig {
    /// 1e-3 / 1e-4 / 1e-5 over three equal spans of the run.
    Thirds,
    Constant(f64),
    Stages(Vec<(usize, f64)>),
}

impl ScheduleConfig {
    pub fn resolve(&self, epochs: usize) -> Result<LrSchedule> {
        match self {
            ScheduleConfig::Thirds => LrSchedule::thirds(epochs.max(1)),
            ScheduleConfig::Constant(rate) => LrSchedule::constant(epochs.max(1), *rate),
            ScheduleConfig::Stages(stages) => LrSchedule::new(stages.clone()),
        }
    }
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    pub out: PathBuf,
    pub dataset: DatasetConfig,
    pub preset: String,
    pub activation: ActivationKind,
    pub freeze_activation: bool,
    pub optimizer: OptimizerConfig,
    pub schedule: ScheduleConfig,
    pub tracked_layers: Option<Vec<String>>,
    pub tracked_k: usize,
}

const PRESETS: [&str; 3] = ["mlp-2", "cnn-mini", "cnn-mini-res"];

/// Collects issues while walking parsed TOML.
struct Walker {
    issues: Vec<ConfigIssue>,
}

impl Walker {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue::new(path, message.into()));
    }

    fn table<'a>(
        &mut self,
        parent: &'a toml::Value,
        path: &str,
        allowed: &[&str],
    ) -> Option<&'a toml::map::Map<String, toml::Value>> {
        match parent.get(path.rsplit('.').next().unwrap()) {
            None => None,
            Some(toml::Value::Table(t)) => {
                for key in t.keys() {
                    if !allowed.contains(&key.as_str()) {
                        self.push(
                            &format!("{path}.{key}"),
                            format!("unknown key (allowed: {})", allowed.join(", ")),
                        );
                    }
                }
                Some(t)
            }
            Some(_) => {
                self.push(path, "expected a table");
                None
            }
        }
    }

    fn u64_at(
        &mut self,
        t: &toml::map::Map<String, toml::Value>,
        path: &str,
        key: &str,
    ) -> Option<u64> {
        match t.get(key) {
            None => None,
            Some(toml::Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(v) => {
                self.push(
                    &join(path, key),
                    format!("expected a non-negative integer, got {v}"),
                );
                None
            }
        }
    }

    fn usize_at(
        &mut self,
        t: &toml::map::Map<String, toml::Value>,
        path: &str,
        key: &str,
    ) -> Option<usize> {
        self.u64_at(t, path, key).map(|v| v as usize)
    }

    fn f64_at(
        &mut self,
        t: &toml::map::Map<String, toml::Value>,
        path: &str,
        key: &str,
    ) -> Option<f64> {
        match t.get(key) {
            None => None,
            Some(toml::Value::Float(f)) => Some(*f),
            Some(toml::Value::Integer(i)) => Some(*i as f64),
            Some(v) => {
                self.push(&join(path, key), format!("expected a number, got {v}"));
                None
            }
        }
    }

    fn str_at(
        &mut self,
        t: &toml::map::Map<String, toml::Value>,
        path: &str,
        key: &str,
    ) -> Option<String> {
        match t.get(key) {
            None => None,
            Some(toml::Value::String(s)) => Some(s.clone()),
            Some(v) => {
                self.push(&join(path, key), format!("expected a string, got {v}"));
                None
            }
        }
    }

    fn bool_at(
        &mut self,
        t: &toml::map::Map<String, toml::Value>,
        path: &str,
        key: &str,
    ) -> Option<bool> {
        match t.get(key) {
            None => None,
            Some(toml::Value::Boolean(b)) => Some(*b),
            Some(v) => {
                self.push(&join(path, key), format!("expected true or false, got {v}"));
                None
            }
        }
    }

    fn str_list_at(
        &mut self,
        t: &toml::map::Map<String, toml::Value>,
        path: &str,
        key: &str,
    ) -> Option<Vec<String>> {
        match t.get(key) {
            None => None,
            Some(toml::Value::Array(items)) => {
                let mut out = Vec::new();
                for (i, item) in items.iter().enumerate() {
                    match item {
                        toml::Value::String(s) => out.push(s.clone()),
                        v => self.push(
                            &format!("{}[{i}]", join(path, key)),
                            format!("expected a string, got {v}"),
                        ),
                    }
                }
                Some(out)
            }
            Some(v) => {
                self.push(
                    &join(path, key),
                    format!("expected an array of strings, got {v}"),
                );
                None
            }
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Parses and validates a config, reporting *every* problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let root: toml::Value = text.parse().map_err(|e: toml::de::Error| {
        Error::Config(vec![ConfigIssue::new("", format!("TOML syntax: {e}"))])
    })?;
    let mut w = Walker { issues: Vec::new() };

    let top = match &root {
        toml::Value::Table(t) => t,
        _ => {
            return Err(Error::Config(vec![ConfigIssue::new(
                "",
                "top level must be a table",
            )]))
        }
    };
    const TOP_KEYS: [&str; 9] = [
        "seed",
        "epochs",
        "batch",
        "out",
        "dataset",
        "model",
        "optimizer",
        "schedule",
        "tracking",
    ];
    for key in top.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            w.push(
                key,
                format!("unknown key (allowed: {})", TOP_KEYS.join(", ")),
            );
        }
    }

    let seed = w.u64_at(top, "", "seed");
    if seed.is_none() && !top.contains_key("seed") {
        w.push(
            "seed",
            "required — runs must be reproducible, there is no wall-clock default",
        );
    }
    let epochs = w.usize_at(top, "", "epochs").unwrap_or(30);
    let batch = w.usize_at(top, "", "batch").unwrap_or(64);
    if top.contains_key("batch") && batch == 0 {
        w.push("batch", "must be at least 1");
    }
    let out = PathBuf::from(w.str_at(top, "", "out").unwrap_or_else(|| "runs".into()));

    // [dataset]
    let dataset = match w.table(
        &root,
        "dataset",
        &["name", "train", "test", "paths", "images", "labels"],
    ) {
        None => {
            w.push("dataset", "required table");
            None
        }
        Some(t) => {
            let name = w.str_at(t, "dataset", "name");
            let train = w.usize_at(t, "dataset", "train");
            let test = w.usize_at(t, "dataset", "test");
            let paths = w.str_list_at(t, "dataset", "paths");
            let images = w.str_at(t, "dataset", "images");
            let labels = w.str_at(t, "dataset", "labels");
            match name.as_deref() {
                None => {
                    if !t.contains_key("name") {
                        w.push("dataset.name", "required");
                    }
                    None
                }
                Some("cifar10") => {
                    let paths: Vec<PathBuf> = paths
                        .unwrap_or_default()
                        .into_iter()
                        .map(PathBuf::from)
                        .collect();
                    if paths.is_empty() {
                        w.push("dataset.paths", "cifar10 needs at least one file");
                        None
                    } else {
                        Some(DatasetConfig::Cifar10 {
                            paths,
                            train: train.unwrap_or(5000),
                            test: test.unwrap_or(1000),
                        })
                    }
                }
                Some("idx") => match (images, labels) {
                    (Some(i), Some(l)) => Some(DatasetConfig::Idx {
                        images: i.into(),
                        labels: l.into(),
                        train: train.unwrap_or(5000),
                        test: test.unwrap_or(1000),
                    }),
                    (i, l) => {
                        if i.is_none() {
                            w.push("dataset.images", "idx needs an image file");
                        }
                        if l.is_none() {
                            w.push("dataset.labels", "idx needs a label file");
                        }
                        None
                    }
                },
                Some(kind) if kind.starts_with("gaussians-") || kind == "spirals-2" => {
                    Some(DatasetConfig::Synthetic {
                        kind: kind.to_string(),
                        train: train.unwrap_or(480),
                        test: test.unwrap_or(120),
                    })
                }
                Some(other) => {
                    w.push(
                        "dataset.name",
                        format!(
                            "unknown dataset \"{other}\" (gaussians-<k>, spirals-2, cifar10, idx)"
                        ),
                    );
                    None
                }
            }
        }
    };
    if let Some(d) = &dataset {
        if d.test_size() == 0 {
            w.push(
                "dataset.test",
                "must be at least 1 (accuracy needs samples)",
            );
        }
        if d.train_size() == 0 {
            w.push("dataset.train", "must be at least 1");
        }
    }

    // [model]
    let mut preset = None;
    let mut activation = None;
    let mut freeze_activation = false;
    match w.table(
        &root,
        "model",
        &["preset", "activation", "freeze_activation"],
    ) {
        None => w.push("model", "required table"),
        Some(t) => {
            match w.str_at(t, "model", "preset") {
                Some(p) if PRESETS.contains(&p.as_str()) => preset = Some(p),
                Some(p) => w.push(
                    "model.preset",
                    format!("unknown preset \"{p}\" (expected {})", PRESETS.join(", ")),
                ),
                None => {
                    if !t.contains_key("preset") {
                        w.push("model.preset", "required");
                    }
                }
            }
            match w.str_at(t, "model", "activation") {
                Some(a) => match ActivationKind::parse(&a) {
                    Ok(kind) => activation = Some(kind),
                    Err(e) => w.push("model.activation", e.to_string()),
                },
                None => {
                    if !t.contains_key("activation") {
                        w.push("model.activation", "required");
                    }
                }
            }
            freeze_activation = w.bool_at(t, "model", "freeze_activation").unwrap_or(false);
        }
    }

    // [optimizer]
    let mut optimizer = OptimizerConfig::new(OptimizerKind::Sgd);
    if let Some(t) = w.table(
        &root,
        "optimizer",
        &["kind", "momentum", "rho", "beta1", "beta2", "eps"],
    ) {
        if let Some(k) = w.str_at(t, "optimizer", "kind") {
            match OptimizerKind::parse(&k) {
                Ok(kind) => optimizer.kind = kind,
                Err(e) => w.push("optimizer.kind", e.to_string()),
            }
        }
        if let Some(v) = w.f64_at(t, "optimizer", "momentum") {
            optimizer.momentum = v;
        }
        if let Some(v) = w.f64_at(t, "optimizer", "rho") {
            optimizer.rho = v;
        }
        if let Some(v) = w.f64_at(t, "optimizer", "beta1") {
            optimizer.beta1 = v;
        }
        if let Some(v) = w.f64_at(t, "optimizer", "beta2") {
            optimizer.beta2 = v;
        }
        if let Some(v) = w.f64_at(t, "optimizer", "eps") {
            optimizer.eps = v;
        }
        if let Err(e) = optimizer.validate() {
            w.push("optimizer", e.to_string());
        }
    }

    // [schedule]
    let mut schedule = ScheduleConfig::Thirds;
    if let Some(t) = w.table(&root, "schedule", &["kind", "rate", "stages"]) {
        let kind = w.str_at(t, "schedule", "kind");
        match kind.as_deref() {
            None | Some("thirds") => {
                if t.contains_key("rate") {
                    w.push("schedule.rate", "only meaningful with kind = \"constant\"");
                }
                if t.contains_key("stages") {
                    w.push("schedule.stages", "only meaningful with kind = \"stages\"");
                }
            }
            Some("constant") => match w.f64_at(t, "schedule", "rate") {
                Some(r) if r > 0.0 && r.is_finite() => schedule = ScheduleConfig::Constant(r),
                Some(r) => w.push(
                    "schedule.rate",
                    format!("must be positive and finite, got {r}"),
                ),
                None => {
                    if !t.contains_key("rate") {
                        w.push("schedule.rate", "required for a constant schedule");
                    }
                }
            },
            Some("stages") => match t.get("stages") {
                Some(toml::Value::Array(items)) if !items.is_empty() => {
                    let mut stages = Vec::new();
                    for (i, item) in items.iter().enumerate() {
                        let path = format!("schedule.stages[{i}]");
                        match item {
                            toml::Value::Array(pair) if pair.len() == 2 => {
                                let span = match &pair[0] {
                                    toml::Value::Integer(s) if *s > 0 => Some(*s as usize),
                                    v => {
                                        w.push(
                                            &path,
                                            format!("span must be a positive integer, got {v}"),
                                        );
                                        None
                                    }
                                };
                                let rate = match &pair[1] {
                                    toml::Value::Float(r) if *r > 0.0 => Some(*r),
                                    toml::Value::Integer(r) if *r > 0 => Some(*r as f64),
                                    v => {
                                        w.push(&path, format!("rate must be positive, got {v}"));
                                        None
                                    }
                                };
                                if let (Some(s), Some(r)) = (span, rate) {
                                    stages.push((s, r));
                                }
                            }
                            v => w.push(&path, format!("expected a [span, rate] pair, got {v}")),
                        }
                    }
                    if !stages.is_empty() {
                        schedule = ScheduleConfig::Stages(stages);
                    }
                }
                Some(_) | None => w.push(
                    "schedule.stages",
                    "required non-empty array of [span, rate] pairs",
                ),
            },
            Some(other) => w.push(
                "schedule.kind",
                format!("unknown schedule \"{other}\" (thirds, constant, stages)"),
            ),
        }
    }

    // [tracking]
    let mut tracked_layers = None;
    let mut tracked_k = 4usize;
    if let Some(t) = w.table(&root, "tracking", &["layers", "k"]) {
        tracked_layers = w.str_list_at(t, "tracking", "layers");
        if let Some(k) = w.usize_at(t, "tracking", "k") {
            if k == 0 {
                w.push("tracking.k", "must be at least 1");
            } else {
                tracked_k = k;
            }
        }
    }

    // Cross-checks that need several fields at once.
    if let (Some(_), ScheduleConfig::Stages(stages)) = (&dataset, &schedule) {
        let total: usize = stages.iter().map(|(s, _)| s).sum();
        if total < epochs {
            w.push(
                "schedule.stages",
                format!("spans cover {total} epochs but the run asks for {epochs}"),
            );
        }
    }

    if !w.issues.is_empty() {
        return Err(Error::Config(w.issues));
    }
    Ok(ExperimentConfig {
        seed: seed.expect("checked above"),
        epochs,
        batch,
        out,
        dataset: dataset.expect("checked above"),
        preset: preset.expect("checked above"),
        activation: activation.expect("checked above"),
        freeze_activation,
        optimizer,
        schedule,
        tracked_layers,
        tracked_k,
    })
}

fn toml_str(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

impl ExperimentConfig {
    /// Renders the fully resolved configuration — every default made
    /// explicit — as TOML that [`parse_config`] accepts back.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("epochs = {}\n", self.epochs));
        s.push_str(&format!("batch = {}\n", self.batch));
        s.push_str(&format!(
            "out = {}\n\n",
            toml_str(&self.out.display().to_string())
        ));

        s.push_str("[dataset]\n");
        match &self.dataset {
            DatasetConfig::Synthetic { kind, train, test } => {
                s.push_str(&format!("name = {}\n", toml_str(kind)));
                s.push_str(&format!("train = {train}\ntest = {test}\n"));
            }
            DatasetConfig::Cifar10 { paths, train, test } => {
                s.push_str("name = \"cifar10\"\n");
                let list: Vec<String> = paths
                    .iter()
                    .map(|p| toml_str(&p.display().to_string()))
                    .collect();
                s.push_str(&format!("paths = [{}]\n", list.join(", ")));
                s.push_str(&format!("train = {train}\ntest = {test}\n"));
            }
            DatasetConfig::Idx {
                images,
                labels,
                train,
                test,
            } => {
                s.push_str("name = \"idx\"\n");
                s.push_str(&format!(
                    "images = {}\n",
                    toml_str(&images.display().to_string())
                ));
                s.push_str(&format!(
                    "labels = {}\n",
                    toml_str(&labels.display().to_string())
                ));
                s.push_str(&format!("train = {train}\ntest = {test}\n"));
            }
        }

        s.push_str("\n[model]\n");
        s.push_str(&format!("preset = {}\n", toml_str(&self.preset)));
        s.push_str(&format!("activation = \"{}\"\n", self.activation.name()));
        s.push_str(&format!("freeze_activation = {}\n", self.freeze_activation));

        s.push_str("\n[optimizer]\n");
        s.push_str(&format!("kind = \"{}\"\n", self.optimizer.kind.name()));
        s.push_str(&format!(
            "momentum = {}\n",
            float_toml(self.optimizer.momentum)
        ));
        s.push_str(&format!("rho = {}\n", float_toml(self.optimizer.rho)));
        s.push_str(&format!("beta1 = {}\n", float_toml(self.optimizer.beta1)));
        s.push_str(&format!("beta2 = {}\n", float_toml(self.optimizer.beta2)));
        s.push_str(&format!("eps = {}\n", float_toml(self.optimizer.eps)));

        s.push_str("\n[schedule]\n");
        match &self.schedule {
            ScheduleConfig::Thirds => s.push_str("kind = \"thirds\"\n"),
            ScheduleConfig::Constant(r) => {
                s.push_str("kind = \"constant\"\n");
                s.push_str(&format!("rate = {}\n", float_toml(*r)));
            }
            ScheduleConfig::Stages(stages) => {
                s.push_str("kind = \"stages\"\n");
                let list: Vec<String> = stages
                    .iter()
                    .map(|(span, rate)| format!("[{span}, {}]", float_toml(*rate)))
                    .collect();
                s.push_str(&format!("stages = [{}]\n", list.join(", ")));
            }
        }

        s.push_str("\n[tracking]\n");
        if let Some(layers) = &self.tracked_layers {
            let list: Vec<String> = layers.iter().map(|l| toml_str(l)).collect();
            s.push_str(&format!("layers = [{}]\n", list.join(", ")));
        }
        s.push_str(&format!("k = {}\n", self.tracked_k));
        s
    }
}

/// Formats an f64 so TOML reads it back as a float (never a bare integer).
fn float_toml(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}
