use crate::error::{config_err, Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

pub const CSV_HEADER: &str = "iteration,train_loss,eval_metric,seconds,seed";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// Batches completed when the row was taken.
    pub iteration: usize,
    /// Mean training loss over the batches since the previous row.
    pub train_loss: f64,
    /// Mse for identity tasks, permutation error for sort, accuracy for attention.
    pub eval_metric: f64,
    pub seconds: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricFormat {
    #[default]
    Csv,
    Jsonl,
}

impl std::str::FromStr for MetricFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(config_err(format!("unknown metric format `{other}` (csv or jsonl)"))),
        }
    }
}

impl MetricFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Jsonl => "jsonl",
        }
    }
}

/// Streams rows to a writer, flushing after each one.
pub struct MetricWriter<W: Write> {
    out: W,
    format: MetricFormat,
    last: Option<usize>,
}

impl<W: Write> MetricWriter<W> {
    /// Writes the CSV header immediately, so an empty run still leaves one.
    pub fn new(mut out: W, format: MetricFormat) -> Result<Self> {
        if format == MetricFormat::Csv {
            writeln!(out, "{CSV_HEADER}")?;
            out.flush()?;
        }
        Ok(Self { out, format, last: None })
    }

    pub fn write(&mut self, row: &MetricRow) -> Result<()> {
        if self.last.is_some_and(|l| row.iteration <= l) {
            return Err(config_err(format!(
                "metric iterations must increase: {} after {}",
                row.iteration,
                self.last.unwrap_or(0)
            )));
        }
        self.last = Some(row.iteration);
        match self.format {
            MetricFormat::Csv => writeln!(
                self.out,
                "{},{},{},{},{}",
                row.iteration, row.train_loss, row.eval_metric, row.seconds, row.seed
            )?,
            MetricFormat::Jsonl => {
                serde_json::to_writer(&mut self.out, row).map_err(std::io::Error::from)?;
                writeln!(self.out)?;
            }
        }
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses a file written by [`MetricWriter`].
pub fn read_metrics(input: impl BufRead, format: MetricFormat) -> Result<Vec<MetricRow>> {
    let bad = |line: usize, what: &str| Error::Format(format!("metrics line {line}: {what}"));
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        match format {
            MetricFormat::Csv => {
                if i == 0 {
                    if line != CSV_HEADER {
                        return Err(bad(1, "unexpected header"));
                    }
                    continue;
                }
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 5 {
                    return Err(bad(i + 1, "expected 5 fields"));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "not a number"));
                rows.push(MetricRow {
                    iteration: f[0].parse().map_err(|_| bad(i + 1, "bad iteration"))?,
                    train_loss: num(f[1])?,
                    eval_metric: num(f[2])?,
                    seconds: num(f[3])?,
                    seed: f[4].parse().map_err(|_| bad(i + 1, "bad seed"))?,
                });
            }
            MetricFormat::Jsonl => {
                rows.push(serde_json::from_str(&line).map_err(|e| bad(i + 1, &e.to_string()))?);
            }
        }
    }
    Ok(rows)
}
