//! Drive a full experiment from code: load the defaults for a kind, apply
//! overrides as the CLI's `--set` would, and stream metrics to a file.

use sparse_hyper::experiments::{run_to_file, ExperimentConfig, ExperimentKind, MetricFormat};
use std::path::Path;

fn main() -> sparse_hyper::Result<()> {
    let overrides: Vec<String> = ["n=4", "iterations=3000", "eval_every=500", "lr=0.01"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let cfg = ExperimentConfig::load(ExperimentKind::Identity, None, &overrides)?;
    let out = Path::new("runs/example-identity.jsonl");
    let rows = run_to_file(&cfg, out, MetricFormat::Jsonl)?;
    for r in &rows {
        println!("{:>5}  train {:.5}  eval {:.6}", r.iteration, r.train_loss, r.eval_metric);
    }
    println!("metrics in {}, resolved config in {}", out.display(), ExperimentConfig::sidecar_path(out).display());
    Ok(())
}
