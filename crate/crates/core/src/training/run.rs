use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::radam::{radam_step, OptimizerState};
use super::schedule::{lr_at, ScheduleConfig};
use crate::error::{Error, Result};
use crate::model::{backward, Batch, Mode, ModelParams};
use crate::objectives::{ExampleStream, TrainingExample};
use crate::vocab::SpecialTokens;

/// Batches fill until either limit is reached; token counts include the
/// source, the three-token decoder preamble and the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub max_examples: usize,
    pub max_tokens: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            max_examples: 32,
            max_tokens: 2048,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub schedule: ScheduleConfig,
    pub batch: BatchSpec,
    /// Global gradient-norm clip; off by default.
    pub clip_norm: Option<f64>,
    /// Record wall-clock time in the metrics log (makes logs run-dependent).
    pub record_wall_time: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub task_counts: BTreeMap<String, usize>,
    pub loss: f64,
    pub lr: f64,
    pub tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_secs: Option<f64>,
}

fn example_tokens(ex: &TrainingExample) -> usize {
    ex.src_ids.len() + ex.tgt_ids.len() + 3
}

fn next_batch(stream: &mut dyn ExampleStream, spec: &BatchSpec) -> Result<Vec<TrainingExample>> {
    let mut batch = Vec::with_capacity(spec.max_examples);
    let mut tokens = 0;
    while batch.len() < spec.max_examples.max(1) && (batch.is_empty() || tokens < spec.max_tokens) {
        let ex = stream.next_example()?;
        tokens += example_tokens(&ex);
        batch.push(ex);
    }
    Ok(batch)
}

/// Runs `config.steps` optimizer updates starting from `state.step`.
///
/// Each step draws a batch from `stream`, computes the mean token loss and
/// its gradient with dropout driven by `rng`, and applies one RAdam update
/// at the scheduled learning rate.
pub fn run_training(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    stream: &mut dyn ExampleStream,
    specials: &SpecialTokens,
    config: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<Vec<StepMetrics>> {
    config.schedule.validate()?;
    if state.m.len() != params.len() {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    let started = Instant::now();
    let mut log = Vec::with_capacity(config.steps as usize);
    for _ in 0..config.steps {
        let step = state.step;
        let mut run_step = |params: &mut ModelParams, state: &mut OptimizerState, rng: &mut dyn RngCore| -> Result<StepMetrics> {
            let examples = next_batch(stream, &config.batch)?;
            let mut task_counts = BTreeMap::new();
            for ex in &examples {
                *task_counts.entry(ex.task.name().to_string()).or_insert(0) += 1;
            }
            let batch = Batch::from_examples(&examples, specials)?;
            let (loss, mut grads) = backward(params, &batch, Mode::Train(rng))?;
            if let Some(max) = config.clip_norm {
                let norm = grads.norm();
                if norm > max {
                    let scale = max / norm;
                    grads.values.iter_mut().for_each(|g| *g *= scale);
                }
            }
            let lr = lr_at(&config.schedule, step);
            radam_step(params.values_mut(), &grads.values, state, lr)?;
            Ok(StepMetrics {
                step,
                task_counts,
                loss: loss.mean,
                lr,
                tokens: loss.tokens,
                wall_secs: config.record_wall_time.then(|| started.elapsed().as_secs_f64()),
            })
        };
        let metrics = run_step(params, state, rng).map_err(|e| e.at_step(step))?;
        log::debug!("step {} loss {:.4} lr {:.3e}", metrics.step, metrics.loss, metrics.lr);
        log.push(metrics);
    }
    Ok(log)
}

/// Writes one JSON record per line.
pub fn write_metrics(path: impl AsRef<Path>, metrics: &[StepMetrics]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for m in metrics {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
