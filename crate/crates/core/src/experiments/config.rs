use crate::error::{config_err, Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Identity,
    Sort,
    Attention,
    ReinforceIdentity,
}

impl ExperimentKind {
    /// Whether larger eval metrics are better (accuracy) or worse (loss, error).
    pub fn higher_is_better(self) -> bool {
        self == Self::Attention
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Sort => "sort",
            Self::Attention => "attention",
            Self::ReinforceIdentity => "reinforce-identity",
        }
    }
}

/// Every knob of every experiment in one flat table.
///
/// Fields that do not apply to `kind` are carried along but ignored.
/// `None` means "derive from `n`"; [`ExperimentConfig::resolve`] fills
/// those in before a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Problem size: matrix side for identity, list length for sort.
    pub n: usize,
    pub batch: usize,
    pub lr: f64,
    /// Defaults to 10k/20k/40k batches for identity sizes 4/8/16.
    pub iterations: Option<usize>,
    pub eval_every: usize,
    pub eval_size: usize,
    /// Record wall-clock seconds in the metrics. Off by default so that
    /// reruns give byte-identical files.
    pub timing: bool,
    /// End the run early at the first eval that beats this value (below it
    /// for losses and errors, above it for accuracy).
    pub stop_at: Option<f64>,

    pub local: usize,
    pub global: usize,
    /// Local sampling region per index dimension; defaults to `log2 n` for identity.
    pub region: Option<Vec<usize>>,
    pub tau: f64,
    /// Keep sparse values fixed at 1 (identity and reinforce-identity).
    pub unit_values: bool,

    pub use_baseline: bool,
    pub baseline_momentum: f64,

    /// Relaxation samples per half-permutation; defaults to `n`.
    pub samples: Option<usize>,
    pub temperature: f64,
    pub features: usize,
    pub hidden: usize,
    pub noise: f64,

    pub train_size: usize,
    pub image_size: usize,
    pub patch_size: usize,
    pub classes: usize,
    pub glimpses: usize,
    pub glimpse_size: usize,
    pub source_hidden: usize,
    pub classifier_hidden: usize,
}

impl ExperimentConfig {
    /// Built-in defaults for `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            seed: 0,
            n: 8,
            batch: 64,
            lr: 0.005,
            iterations: None,
            eval_every: 1000,
            eval_size: 10_000,
            timing: false,
            stop_at: None,
            local: 2,
            global: 2,
            region: None,
            tau: 0.1,
            unit_values: true,
            use_baseline: true,
            baseline_momentum: 0.9,
            samples: None,
            temperature: 10.0,
            features: 8,
            hidden: 32,
            noise: 0.05,
            train_size: 20_000,
            image_size: 32,
            patch_size: 8,
            classes: 4,
            glimpses: 1,
            glimpse_size: 8,
            source_hidden: 64,
            classifier_hidden: 64,
        };
        match kind {
            ExperimentKind::Identity | ExperimentKind::ReinforceIdentity => base,
            ExperimentKind::Sort => Self {
                n: 4,
                lr: 1e-3,
                iterations: Some(5000),
                eval_every: 500,
                eval_size: 1000,
                ..base
            },
            ExperimentKind::Attention => Self {
                batch: 32,
                lr: 1e-3,
                iterations: Some(10_000),
                eval_every: 500,
                eval_size: 1000,
                region: Some(vec![6, 6]),
                noise: 0.3,
                ..base
            },
        }
    }

    /// Defaults for `kind`, then the TOML file at `path` (if any), then
    /// each `key=value` override in order. Values are parsed as TOML, so
    /// `lr=0.01`, `region=[3,3]` and `timing=true` all work.
    pub fn load(kind: ExperimentKind, path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match toml::Value::try_from(Self::defaults(kind)) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("config serializes to a table"),
        };
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            let file: toml::Table = text
                .parse()
                .map_err(|e: toml::de::Error| config_err(format!("{}: {}", path.display(), e.message())))?;
            for (k, v) in file {
                table.insert(k, v);
            }
        }
        for item in overrides {
            let (key, value) = parse_override(item)?;
            table.insert(key, value);
        }
        // the subcommand decides the kind, whatever the file says
        table.insert("kind".into(), toml::Value::String(kind.name().into()));
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        cfg.resolve()
    }

    /// Fills size-dependent defaults and validates.
    pub fn resolve(mut self) -> Result<Self> {
        let log2 = (self.n.max(2) as f64).log2().round() as usize;
        if self.iterations.is_none() {
            self.iterations = Some(match self.n {
                0..=4 => 10_000,
                5..=8 => 20_000,
                _ => 40_000,
            });
        }
        if self.region.is_none() {
            self.region = Some(vec![log2; 2]);
        }
        if self.samples.is_none() {
            self.samples = Some(self.n);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn iterations(&self) -> usize {
        self.iterations.unwrap_or(0)
    }

    pub fn region(&self) -> Vec<usize> {
        self.region.clone().unwrap_or_default()
    }

    pub fn samples(&self) -> usize {
        self.samples.unwrap_or(self.n)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n", self.n),
            ("batch", self.batch),
            ("iterations", self.iterations()),
            ("eval_every", self.eval_every),
            ("eval_size", self.eval_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(config_err(format!("{name} must be positive")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config_err("lr must be positive"));
        }
        if !(self.tau > 0.0) {
            return Err(config_err("tau must be positive"));
        }
        match self.kind {
            ExperimentKind::Identity | ExperimentKind::ReinforceIdentity => {
                if self.region().len() != 2 || self.region().iter().any(|&l| l == 0 || l > self.n) {
                    return Err(config_err("region must hold two sizes in 1..=n"));
                }
                if !(0.0..1.0).contains(&self.baseline_momentum) {
                    return Err(config_err("baseline_momentum must lie in [0, 1)"));
                }
            }
            ExperimentKind::Sort => {
                if !self.n.is_power_of_two() || self.n < 2 {
                    return Err(config_err("sort needs n to be a power of two >= 2"));
                }
                if self.samples() == 0 || self.features == 0 || self.hidden == 0 {
                    return Err(config_err("samples, features and hidden must be positive"));
                }
                if !(self.temperature > 0.0) {
                    return Err(config_err("temperature must be positive"));
                }
            }
            ExperimentKind::Attention => {
                if self.train_size < self.batch {
                    return Err(config_err("train_size must be at least batch"));
                }
                if self.classes == 0 || self.glimpses == 0 || self.glimpse_size == 0 {
                    return Err(config_err("classes, glimpses and glimpse_size must be positive"));
                }
                if self.patch_size == 0 || self.patch_size > self.image_size {
                    return Err(config_err("patch_size must lie in 1..=image_size"));
                }
                if self.source_hidden == 0 || self.classifier_hidden == 0 {
                    return Err(config_err("hidden sizes must be positive"));
                }
            }
        }
        Ok(())
    }

    /// The resolved config as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// Where the resolved config goes for metrics written to `metrics`.
    pub fn sidecar_path(metrics: &Path) -> PathBuf {
        let mut name = metrics.file_stem().unwrap_or_default().to_os_string();
        name.push(".config.toml");
        metrics.with_file_name(name)
    }
}

fn parse_override(item: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{item}` is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let doc = format!("v = {raw}");
    let value = match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        // bare words such as `kind=sort` are read as strings
        Err(_) => toml::Value::String(raw.to_string()),
    };
    if key.is_empty() {
        return Err(Error::Config(format!("override `{item}` has an empty key")));
    }
    Ok((key, value))
}
