use super::grid::{bbox_to_grid, box_from_raw};
use super::layer::{glimpse_eval, glimpse_forward, GlimpseSpec};
use crate::autodiff::{Mlp, ParamId, ParamStore, Tape, Var};
use crate::error::Result;
use crate::sparse::SamplingConfig;
use crate::tensor::Tensor;
use rand::Rng;

/// Architecture of the glimpse classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionConfig {
    pub height: usize,
    pub width: usize,
    pub glimpses: usize,
    pub glimpse_size: usize,
    pub source_hidden: usize,
    pub classifier_hidden: usize,
    pub classes: usize,
    pub sampling: SamplingConfig,
    pub tau: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            glimpses: 1,
            glimpse_size: 8,
            source_hidden: 64,
            classifier_hidden: 64,
            classes: 4,
            sampling: SamplingConfig::new(2, 2, vec![6, 6]),
            tau: 0.1,
        }
    }
}

/// Source MLP producing boxes, one spread and one value per glimpse, and
/// an MLP classifier over the concatenated glimpses.
#[derive(Debug, Clone)]
pub struct AttentionModel {
    pub spec: GlimpseSpec,
    pub source: Mlp,
    pub classifier: Mlp,
    pub sigmas: ParamId,
    pub values: ParamId,
}

pub struct AttentionOutput<'t> {
    pub logits: Var<'t>,
    /// `[b g, 4]` boxes as `(row_lo, col_lo, row_hi, col_hi)`.
    pub boxes: Tensor,
}

impl AttentionModel {
    pub fn new(store: &mut ParamStore, cfg: &AttentionConfig, rng: &mut impl Rng) -> Result<Self> {
        let spec = GlimpseSpec {
            count: cfg.glimpses,
            size: cfg.glimpse_size,
            height: cfg.height,
            width: cfg.width,
            sampling: cfg.sampling.clone(),
            tau: cfg.tau,
        };
        spec.validate()?;
        let pixels = cfg.height * cfg.width;
        let source = Mlp::new(store, "source", &[pixels, cfg.source_hidden, 4 * cfg.glimpses], rng);
        // start with boxes covering most of the image
        let last = source.layers.last().expect("two layers");
        let bias: Vec<f64> = (0..cfg.glimpses).flat_map(|_| [-2.0, -2.0, 2.0, 2.0]).collect();
        *store.get_mut(last.bias) = Tensor::vector(bias);
        let features = cfg.glimpses * spec.points();
        let classifier = Mlp::new(store, "classifier", &[features, cfg.classifier_hidden, cfg.classes], rng);
        let sigmas = store.add("glimpse.sigmas", Tensor::zeros(&[cfg.glimpses]));
        let values = store.add("glimpse.values", Tensor::full(&[cfg.glimpses], 1.0));
        Ok(Self { spec, source, classifier, sigmas, values })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p: Vec<ParamId> = self.source.params().chain(self.classifier.params()).collect();
        p.extend([self.sigmas, self.values]);
        p
    }

    /// Parameters that only receive gradient through the box coordinates.
    pub fn source_params(&self) -> Vec<ParamId> {
        self.source.params().collect()
    }

    fn grid<'t>(&self, tape: &'t Tape, store: &ParamStore, x: &Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let raw = self.source.forward(tape, store, x)?;
        let boxes = box_from_raw(&raw, self.spec.count, self.spec.height, self.spec.width)?;
        let means = bbox_to_grid(&boxes, self.spec.size)?;
        Ok((boxes, means))
    }

    /// Sampled forward pass over `[b, h w]` images.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        images: &Tensor,
        rng: &mut impl Rng,
    ) -> Result<AttentionOutput<'t>> {
        let x = tape.constant(images.clone());
        let (boxes, means) = self.grid(tape, store, &x)?;
        let sample = self.spec.sample(&means.value(), rng)?;
        let sigmas = tape.param(store, self.sigmas);
        let values = tape.param(store, self.values);
        let glimpses = glimpse_forward(&self.spec, &means, &sigmas, &values, &x, &sample)?;
        Ok(AttentionOutput {
            logits: self.classifier.forward(tape, store, &glimpses)?,
            boxes: boxes.value(),
        })
    }

    /// Deterministic logits `[b, classes]` with rounded grid points.
    pub fn forward_eval(&self, store: &ParamStore, images: &Tensor) -> Result<(Tensor, Tensor)> {
        let tape = Tape::new();
        let x = tape.constant(images.clone());
        let (boxes, means) = self.grid(&tape, store, &x)?;
        let glimpses = glimpse_eval(&self.spec, &means.value(), store.get(self.values), images)?;
        let logits = self.classifier.forward(&tape, store, &tape.constant(glimpses))?;
        Ok((logits.value(), boxes.value()))
    }

    /// Fraction of rows whose arg-max logit equals the label.
    pub fn accuracy(&self, store: &ParamStore, images: &Tensor, labels: &[usize]) -> Result<f64> {
        let (logits, _) = self.forward_eval(store, images)?;
        let classes = logits.shape()[1];
        let hits = logits
            .data()
            .chunks(classes)
            .zip(labels)
            .filter(|(row, &l)| {
                let best = row
                    .iter()
                    .enumerate()
                    .fold(0, |b, (i, &v)| if v > row[b] { i } else { b });
                best == l
            })
            .count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }
}
