use super::config::{ExperimentConfig, ExperimentKind};
use super::metrics::{MetricFormat, MetricRow, MetricWriter};
use crate::autodiff::{Adam, AdamConfig, ParamStore, Tape};
use crate::error::Result;
use crate::glimpse::{AttentionConfig, AttentionModel, PatchDataset, PatchTaskConfig};
use crate::reinforce::{ReinforceConfig, ReinforceLayer};
use crate::rng::{self, streams, Rng};
use crate::sort::{evaluate_permutation_error, synthetic_sort_task, KeyNet, PermTables, SortConfig, SortInstance};
use crate::sparse::{HyperlayerShape, SamplingConfig, SparseLayer};
use crate::tensor::Tensor;
use rand::Rng as _;
use rand_distr::StandardNormal;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

/// Rows per shuffled half-permutation table in the sort experiment.
pub const PERM_TABLE_ROWS: usize = 50_000;

/// Box-gradient norm below which the attention source counts as stuck.
const STUCK_NORM: f64 = 1e-10;
const STUCK_STEPS: usize = 100;

trait Trainer {
    /// One optimizer step on batch `i`; returns the batch loss before the update.
    fn step(&mut self, i: usize) -> Result<f64>;
    fn eval(&mut self) -> Result<f64>;
}

fn normal_tensor(rng: &mut Rng, shape: Vec<usize>) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_parts(shape, (0..len).map(|_| rng.sample(StandardNormal)).collect())
}

fn mse(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

fn identity_layer(cfg: &ExperimentConfig, store: &mut ParamStore) -> Result<SparseLayer> {
    let shape = HyperlayerShape::square(cfg.n)?;
    let mut init = rng::stream(cfg.seed, streams::INIT);
    if cfg.unit_values {
        SparseLayer::with_unit_values(store, "w", shape, cfg.n, cfg.tau, &mut init)
    } else {
        SparseLayer::new(store, "w", shape, cfg.n, cfg.tau, &mut init)
    }
}

struct IdentityTrainer {
    layer: SparseLayer,
    store: ParamStore,
    adam: Adam,
    sampling: SamplingConfig,
    data: Rng,
    samples: Rng,
    eval_x: Tensor,
    batch: usize,
}

impl IdentityTrainer {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        let layer = identity_layer(cfg, &mut store)?;
        let sampling = SamplingConfig::new(cfg.local, cfg.global, cfg.region());
        sampling.validate(&layer.shape.dims())?;
        Ok(Self {
            layer,
            store,
            adam: Adam::new(AdamConfig::with_lr(cfg.lr)),
            sampling,
            data: rng::stream(cfg.seed, streams::TRAIN_DATA),
            samples: rng::stream(cfg.seed, streams::SAMPLING),
            eval_x: normal_tensor(&mut rng::stream(cfg.seed, streams::EVAL_DATA), vec![cfg.eval_size, cfg.n]),
            batch: cfg.batch,
        })
    }
}

impl Trainer for IdentityTrainer {
    fn step(&mut self, _: usize) -> Result<f64> {
        let x = normal_tensor(&mut self.data, vec![self.batch, self.layer.shape.input_len()]);
        let sample = self.layer.sample(&self.store, &self.sampling, &mut self.samples)?;
        let (loss, grads) = self
            .layer
            .gradients(&self.store, &sample, &x, 1, |tape, y| y.mse_loss(&tape.constant(x.clone())))?;
        self.adam.step(&mut self.store, &grads)?;
        Ok(loss)
    }

    fn eval(&mut self) -> Result<f64> {
        Ok(mse(&self.layer.forward_eval(&self.store, &self.eval_x)?, &self.eval_x))
    }
}

struct ReinforceTrainer {
    layer: ReinforceLayer,
    store: ParamStore,
    adam: Adam,
    data: Rng,
    samples: Rng,
    eval_x: Tensor,
    batch: usize,
}

impl ReinforceTrainer {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        let layer = identity_layer(cfg, &mut store)?;
        let rcfg = ReinforceConfig {
            use_baseline: cfg.use_baseline,
            momentum: cfg.baseline_momentum,
        };
        Ok(Self {
            layer: ReinforceLayer::new(layer, rcfg),
            store,
            adam: Adam::new(AdamConfig::with_lr(cfg.lr)),
            data: rng::stream(cfg.seed, streams::TRAIN_DATA),
            samples: rng::stream(cfg.seed, streams::SAMPLING),
            eval_x: normal_tensor(&mut rng::stream(cfg.seed, streams::EVAL_DATA), vec![cfg.eval_size, cfg.n]),
            batch: cfg.batch,
        })
    }
}

impl Trainer for ReinforceTrainer {
    fn step(&mut self, _: usize) -> Result<f64> {
        let x = normal_tensor(&mut self.data, vec![self.batch, self.layer.layer.shape.input_len()]);
        self.layer.step(&mut self.store, &mut self.adam, &x, &x, &mut self.samples)
    }

    fn eval(&mut self) -> Result<f64> {
        Ok(mse(&self.layer.forward_eval(&self.store, &self.eval_x)?, &self.eval_x))
    }
}

struct SortTrainer {
    net: KeyNet,
    store: ParamStore,
    adam: Adam,
    sort: SortConfig,
    tables: PermTables,
    data: Rng,
    samples: Rng,
    eval_set: Vec<SortInstance>,
    cfg: ExperimentConfig,
}

impl SortTrainer {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = KeyNet::new(&mut store, cfg.features, cfg.hidden, &mut rng::stream(cfg.seed, streams::INIT));
        let mut eval_rng = rng::stream(cfg.seed, streams::EVAL_DATA);
        Ok(Self {
            net,
            store,
            adam: Adam::new(AdamConfig::with_lr(cfg.lr)),
            sort: SortConfig {
                samples: cfg.samples(),
                temperature: cfg.temperature,
            },
            tables: PermTables::new(cfg.seed, PERM_TABLE_ROWS),
            data: rng::stream(cfg.seed, streams::TRAIN_DATA),
            samples: rng::stream(cfg.seed, streams::SAMPLING),
            eval_set: synthetic_sort_task(&mut eval_rng, cfg.eval_size, cfg.n, cfg.features, cfg.noise),
            cfg: cfg.clone(),
        })
    }
}

impl Trainer for SortTrainer {
    fn step(&mut self, _: usize) -> Result<f64> {
        let c = &self.cfg;
        let batch = synthetic_sort_task(&mut self.data, c.batch, c.n, c.features, c.noise);
        let tape = Tape::new();
        let loss = self
            .net
            .batch_loss(&tape, &self.store, &batch, &self.sort, &mut self.tables, &mut self.samples)?;
        let grads = tape.backward(loss)?;
        self.adam.step(&mut self.store, &grads)?;
        Ok(loss.item())
    }

    fn eval(&mut self) -> Result<f64> {
        evaluate_permutation_error(&self.net, &self.store, &self.eval_set)
    }
}

struct AttentionTrainer {
    model: AttentionModel,
    store: ParamStore,
    adam: Adam,
    train: PatchDataset,
    test: PatchDataset,
    samples: Rng,
    batch: usize,
    stuck: usize,
}

impl AttentionTrainer {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let task = PatchTaskConfig {
            image_size: cfg.image_size,
            patch_size: cfg.patch_size,
            classes: cfg.classes,
            noise: cfg.noise,
        };
        let model_cfg = AttentionConfig {
            height: cfg.image_size,
            width: cfg.image_size,
            glimpses: cfg.glimpses,
            glimpse_size: cfg.glimpse_size,
            source_hidden: cfg.source_hidden,
            classifier_hidden: cfg.classifier_hidden,
            classes: cfg.classes,
            sampling: SamplingConfig::new(cfg.local, cfg.global, cfg.region()),
            tau: cfg.tau,
        };
        let mut store = ParamStore::new();
        let model = AttentionModel::new(&mut store, &model_cfg, &mut rng::stream(cfg.seed, streams::INIT))?;
        Ok(Self {
            model,
            store,
            adam: Adam::new(AdamConfig::with_lr(cfg.lr)),
            train: PatchDataset::generate(cfg.seed, streams::TRAIN_DATA, cfg.train_size, task)?,
            test: PatchDataset::generate(cfg.seed, streams::TEST_DATA, cfg.eval_size, task)?,
            samples: rng::stream(cfg.seed, streams::SAMPLING),
            batch: cfg.batch,
            stuck: 0,
        })
    }
}

impl Trainer for AttentionTrainer {
    fn step(&mut self, i: usize) -> Result<f64> {
        let start = (i * self.batch) % (self.train.len() - self.batch + 1);
        let (x, y) = self.train.slice(start, self.batch);
        let tape = Tape::new();
        let out = self.model.forward(&tape, &self.store, &x, &mut self.samples)?;
        let loss = out.logits.cross_entropy(&y)?;
        let grads = tape.backward(loss)?;
        let box_norm = self
            .model
            .source_params()
            .iter()
            .filter_map(|&p| grads.param(p))
            .flat_map(|g| g.data().iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        self.stuck = if box_norm < STUCK_NORM { self.stuck + 1 } else { 0 };
        if self.stuck == STUCK_STEPS {
            log::warn!(
                "box gradient norm below {STUCK_NORM:e} for {STUCK_STEPS} steps at batch {i}; \
                 the glimpse is likely stuck, consider another seed"
            );
        }
        self.adam.step(&mut self.store, &grads)?;
        Ok(loss.item())
    }

    fn eval(&mut self) -> Result<f64> {
        let (_, boxes) = self.model.forward_eval(&self.store, &self.test.slice(0, 1).0)?;
        log::info!("first test box {:?}", boxes.data());
        self.model.accuracy(&self.store, &self.test.images, &self.test.labels)
    }
}

fn train_loop(
    cfg: &ExperimentConfig,
    trainer: &mut dyn Trainer,
    sink: &mut dyn FnMut(&MetricRow) -> Result<()>,
) -> Result<Vec<MetricRow>> {
    let start = Instant::now();
    let seconds = || if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let mut rows = Vec::new();
    let mut emit = |row: MetricRow, rows: &mut Vec<MetricRow>| -> Result<()> {
        log::info!(
            "{} seed {} batch {}: train {:.6} eval {:.6}",
            cfg.kind.name(),
            row.seed,
            row.iteration,
            row.train_loss,
            row.eval_metric
        );
        sink(&row)?;
        rows.push(row);
        Ok(())
    };
    let iterations = cfg.iterations();
    let initial = trainer.eval()?;
    let mut window = Vec::with_capacity(cfg.eval_every);
    for i in 0..iterations {
        let loss = trainer.step(i)?;
        window.push(loss);
        if i == 0 {
            let row = MetricRow { iteration: 0, train_loss: loss, eval_metric: initial, seconds: seconds(), seed: cfg.seed };
            emit(row, &mut rows)?;
        }
        let done = i + 1;
        if done % cfg.eval_every == 0 || done == iterations {
            let train_loss = window.iter().sum::<f64>() / window.len() as f64;
            window.clear();
            let eval_metric = trainer.eval()?;
            let row = MetricRow { iteration: done, train_loss, eval_metric, seconds: seconds(), seed: cfg.seed };
            emit(row, &mut rows)?;
            let reached = cfg.stop_at.is_some_and(|t| {
                if cfg.kind.higher_is_better() { eval_metric > t } else { eval_metric < t }
            });
            if reached {
                break;
            }
        }
    }
    Ok(rows)
}

/// Runs the experiment described by `cfg`, passing every metric row to
/// `sink` as soon as it is taken. Also returns all rows.
///
/// Row 0 holds the loss of the first batch and the eval metric before any
/// update; later rows follow every `eval_every` batches and at the end
/// (or at the first eval that beats `stop_at`).
pub fn run(cfg: &ExperimentConfig, sink: &mut dyn FnMut(&MetricRow) -> Result<()>) -> Result<Vec<MetricRow>> {
    let cfg = cfg.clone().resolve()?;
    match cfg.kind {
        ExperimentKind::Identity => train_loop(&cfg, &mut IdentityTrainer::new(&cfg)?, sink),
        ExperimentKind::ReinforceIdentity => train_loop(&cfg, &mut ReinforceTrainer::new(&cfg)?, sink),
        ExperimentKind::Sort => train_loop(&cfg, &mut SortTrainer::new(&cfg)?, sink),
        ExperimentKind::Attention => train_loop(&cfg, &mut AttentionTrainer::new(&cfg)?, sink),
    }
}

/// [`run`] without a sink.
pub fn run_collect(cfg: &ExperimentConfig) -> Result<Vec<MetricRow>> {
    run(cfg, &mut |_| Ok(()))
}

/// Runs `cfg`, streaming metrics to `path` and writing the resolved config
/// next to it (see [`ExperimentConfig::sidecar_path`]).
pub fn run_to_file(cfg: &ExperimentConfig, path: &Path, format: MetricFormat) -> Result<Vec<MetricRow>> {
    let cfg = cfg.clone().resolve()?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(ExperimentConfig::sidecar_path(path), cfg.to_toml())?;
    let mut writer = MetricWriter::new(BufWriter::new(File::create(path)?), format)?;
    run(&cfg, &mut |row| writer.write(row))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind, extra: &[&str]) -> ExperimentConfig {
        let mut o: Vec<String> = ["iterations=6", "eval_every=2", "eval_size=20", "batch=4"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        o.extend(extra.iter().map(|s| s.to_string()));
        ExperimentConfig::load(kind, None, &o).unwrap()
    }

    #[test]
    fn rows_cover_start_intervals_and_end() {
        let cfg = small(ExperimentKind::Identity, &["n=4", "iterations=5"]);
        let rows = run_collect(&cfg).unwrap();
        let its: Vec<usize> = rows.iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![0, 2, 4, 5]);
        assert!(rows.iter().all(|r| r.seconds == 0.0 && r.seed == 0));
    }

    #[test]
    fn stop_at_ends_the_run_early() {
        let cfg = small(ExperimentKind::Identity, &["n=4", "iterations=100", "stop_at=1e9"]);
        let its: Vec<usize> = run_collect(&cfg).unwrap().iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![0, 2]);
        let cfg = small(ExperimentKind::Attention, &["classes=1", "iterations=100", "stop_at=0.5", "train_size=40", "image_size=16", "patch_size=4", "glimpse_size=4", "region=[3,3]"]);
        assert_eq!(run_collect(&cfg).unwrap().len(), 2);
    }

    #[test]
    fn every_kind_runs_and_repeats_exactly() {
        for (kind, extra) in [
            (ExperimentKind::Identity, vec!["n=4"]),
            (ExperimentKind::ReinforceIdentity, vec!["n=4"]),
            (ExperimentKind::Sort, vec!["n=4"]),
            (ExperimentKind::Attention, vec!["train_size=40", "image_size=16", "patch_size=4", "glimpse_size=4", "region=[3,3]"]),
        ] {
            let cfg = small(kind, &extra);
            let a = run_collect(&cfg).unwrap();
            let b = run_collect(&cfg).unwrap();
            assert_eq!(a.len(), 4, "{kind:?}");
            assert!(a.iter().all(|r| r.train_loss.is_finite() && r.eval_metric.is_finite()));
            assert_eq!(a, b, "{kind:?}");
        }
    }

    #[test]
    fn single_class_attention_is_trivially_accurate() {
        let cfg = small(
            ExperimentKind::Attention,
            &["classes=1", "train_size=40", "image_size=16", "patch_size=4", "glimpse_size=4", "region=[3,3]"],
        );
        let rows = run_collect(&cfg).unwrap();
        assert!(rows.iter().all(|r| r.eval_metric == 1.0));
    }

    #[test]
    fn run_to_file_writes_metrics_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/sort.csv");
        let cfg = small(ExperimentKind::Sort, &[]);
        let rows = run_to_file(&cfg, &path, MetricFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), rows.len() + 1);
        let side = std::fs::read_to_string(dir.path().join("sub/sort.config.toml")).unwrap();
        assert_eq!(toml::from_str::<ExperimentConfig>(&side).unwrap(), cfg);
    }
}
