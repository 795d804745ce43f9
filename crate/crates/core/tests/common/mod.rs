#![allow(dead_code)]

use std::time::Instant;

use mixsum::model::{backward, forward, init_params, loss, Batch, Mode, ModelConfig, ModelParams};
use mixsum::objectives::{ExampleStream, ObjectiveConfig, SourceItems, SummPair, TaskSource, TrainingExample};
use mixsum::training::{run_training, BatchSpec, OptimizerState, ScheduleConfig, StepMetrics, TrainConfig};
use mixsum::vocab::{SpecialTokens, Task, TokenId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_config(vocab_size: usize, dropout_p: f64) -> ModelConfig {
    ModelConfig {
        num_layers: 1,
        num_heads: 2,
        d_model: 8,
        d_ff: 16,
        dropout_p,
        vocab_size,
        max_positions: 32,
    }
}

/// Two examples of different lengths so padding is exercised.
pub fn toy_batch(specials: &SpecialTokens) -> Batch {
    let lang = specials.lang_id("en").unwrap();
    let examples = vec![
        TrainingExample {
            src_ids: vec![20, 31, 44, 27, 49],
            tgt_ids: vec![33, 21, 40],
            task: Task::Ms,
            tgt_lang: lang,
        },
        TrainingExample {
            src_ids: vec![45, 22, 38],
            tgt_ids: vec![25, 47, 30, 36, 24],
            task: Task::Mt,
            tgt_lang: lang,
        },
    ];
    Batch::from_examples(&examples, specials).unwrap()
}

pub fn eval_loss(params: &ModelParams, batch: &Batch) -> f64 {
    let logits = forward(params, batch, Mode::Eval).unwrap();
    loss(&logits, &batch.labels, batch.pad_id).unwrap().mean
}

/// Loss with dropout masks drawn from a fresh generator seeded with `seed`.
pub fn train_loss(params: &ModelParams, batch: &Batch, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = forward(params, batch, Mode::Train(&mut rng)).unwrap();
    loss(&logits, &batch.labels, batch.pad_id).unwrap().mean
}

pub fn train_grad(params: &ModelParams, batch: &Batch, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    backward(params, batch, Mode::Train(&mut rng)).unwrap().1.values
}

/// Central difference of `f` at coordinate `i`.
pub fn central_diff(params: &mut ModelParams, i: usize, h: f64, f: impl Fn(&ModelParams) -> f64) -> f64 {
    let orig = params.values()[i];
    params.values_mut()[i] = orig + h;
    let up = f(params);
    params.values_mut()[i] = orig - h;
    let down = f(params);
    params.values_mut()[i] = orig;
    (up - down) / (2.0 * h)
}

/// Relative agreement with a tiny absolute floor for near-zero coordinates.
pub fn grad_close(analytic: f64, numeric: f64, rel: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= rel * analytic.abs().max(numeric.abs()) || diff <= 1e-9
}

pub const TOY_TOKENS: [TokenId; 5] = [20, 21, 22, 23, 24];

/// `n` random sequences of `len` tokens whose summary is the sequence itself.
pub fn copy_pairs(specials: &SpecialTokens, n: usize, len: usize, seed: u64) -> Vec<SummPair> {
    let lang = specials.lang_id("en").unwrap();
    let base = specials.reserved_count() as TokenId;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let ids: Vec<TokenId> = (0..len).map(|_| base + rng.random_range(0..20)).collect();
            SummPair {
                doc_lang: lang,
                summ_lang: lang,
                doc_ids: ids.clone(),
                summ_ids: ids,
            }
        })
        .collect()
}

pub struct CopyRun {
    pub log: Vec<StepMetrics>,
    pub eval_loss: f64,
    pub secs: f64,
}

/// Trains the desk model on a 32-example copy task and evaluates it on all
/// 32 examples.
pub fn copy_task_run(steps: u64) -> CopyRun {
    let specials = SpecialTokens::with_default_languages();
    let config = ModelConfig::desk(specials.reserved_count() + 20);
    let pairs = copy_pairs(&specials, 32, 6, 1);
    let mut params = init_params(&config, 2).unwrap();
    let mut state = OptimizerState::new(params.len());
    let mut stream = TaskSource::new(
        Task::Ms,
        SourceItems::Summ(pairs),
        specials.clone(),
        ObjectiveConfig::default(),
        3,
    )
    .unwrap();
    let train = TrainConfig {
        steps,
        schedule: ScheduleConfig {
            init_lr: 1e-4,
            peak_lr: 1e-3,
            warmup_steps: 50,
            decay_rate: 1.0,
        },
        batch: BatchSpec {
            max_examples: 32,
            max_tokens: 4096,
        },
        clip_norm: None,
        record_wall_time: false,
    };
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let log = run_training(&mut params, &mut state, &mut stream, &specials, &train, &mut rng).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let examples: Vec<TrainingExample> = (0..32).map(|_| stream.next_example().unwrap()).collect();
    let batch = Batch::from_examples(&examples, &specials).unwrap();
    CopyRun {
        eval_loss: eval_loss(&params, &batch),
        log,
        secs,
    }
}
