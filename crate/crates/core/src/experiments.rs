//! Pretrain → finetune → decode → score pipelines, the objective ablation
//! and the low-resource curve.
//!
//! A run directory holds `plan.toml`, the metrics logs, `model.ckpt`,
//! `decoded.jsonl`, `scores.json`, `scores.txt` and a `manifest.json`
//! listing every file with its size and CRC-32.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{generate_synthetic, read_bundle, subsample, CorpusRecord, RecordBody, SyntheticBundle, SyntheticSpec};
use crate::decoding::{beam_search, write_generations, BeamConfig, GenerationRecord};
use crate::error::{Error, Result};
use crate::model::checkpoint::{Checkpoint, TrainProgress};
use crate::model::{init_params, ModelConfig, ModelParams};
use crate::objectives::{mix_tasks, single_task, MixWeights, ObjectiveConfig, ParallelPair, SourceItems, SummPair, TaskSource};
use crate::rouge::{corpus_rouge, format_report, RougeTriple, Script};
use crate::training::{run_training, write_metrics, BatchSpec, OptimizerState, ScheduleConfig, StepMetrics, TrainConfig};
use crate::vocab::{train_vocab, LanguageLines, SpecialTokens, Task, TokenId, VocabTrainConfig, Vocabulary, DEFAULT_LANGUAGES};

/// Model hyperparameters other than the vocabulary size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub dropout_p: f64,
    pub max_positions: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        let d = ModelConfig::desk(1);
        Self {
            num_layers: d.num_layers,
            num_heads: d.num_heads,
            d_model: d.d_model,
            d_ff: d.d_ff,
            dropout_p: d.dropout_p,
            max_positions: d.max_positions,
        }
    }
}

impl ModelShape {
    pub fn with_vocab(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            dropout_p: self.dropout_p,
            vocab_size,
            max_positions: self.max_positions,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub steps: u64,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub batch: BatchSpec,
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl StageConfig {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            schedule: self.schedule,
            batch: self.batch,
            clip_norm: self.clip_norm,
            record_wall_time: false,
        }
    }
}

/// One declarative experiment. Every knob has a documented TOML key of the
/// same name; nested tables use dotted keys for overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Enabled pretraining objectives; empty means finetune from scratch.
    pub pretrain_tasks: Vec<Task>,
    /// Relative task weights, restricted to `pretrain_tasks`.
    pub mix: MixWeights,
    pub objectives: ObjectiveConfig,
    pub model: ModelShape,
    pub pretrain: StageConfig,
    pub finetune: StageConfig,
    /// Finetuning subset size; all training pairs when absent.
    pub finetune_size: Option<usize>,
    /// Held-out cross-lingual pairs, taken from the end of the corpus.
    pub test_size: usize,
    pub low_resource_sizes: Vec<usize>,
    pub beam: BeamConfig,
    /// Learned merges on top of the character inventory.
    pub vocab_merges: usize,
    pub vocab_seed: u64,
    pub languages: Vec<String>,
    pub synthetic: SyntheticSpec,
    /// Read a corpus bundle from here instead of generating one.
    pub corpus_dir: Option<PathBuf>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            name: "desk".into(),
            output_dir: PathBuf::from("runs"),
            seeds: vec![0, 1, 2],
            pretrain_tasks: Task::PRETRAINING.to_vec(),
            mix: MixWeights::default(),
            objectives: ObjectiveConfig::default(),
            model: ModelShape::default(),
            pretrain: StageConfig {
                steps: 5000,
                schedule: ScheduleConfig {
                    init_lr: 1e-7,
                    peak_lr: 1e-3,
                    warmup_steps: 500,
                    decay_rate: 0.9999,
                },
                batch: BatchSpec::default(),
                clip_norm: None,
            },
            finetune: StageConfig {
                steps: 2000,
                schedule: ScheduleConfig::full_finetune(),
                batch: BatchSpec::default(),
                clip_norm: None,
            },
            finetune_size: None,
            test_size: 200,
            low_resource_sizes: vec![100, 1000],
            beam: BeamConfig::default(),
            vocab_merges: 20,
            vocab_seed: 0,
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            synthetic: SyntheticSpec::default(),
            corpus_dir: None,
        }
    }
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    /// Loads a plan and applies `key=value` overrides (dotted keys reach into
    /// tables; values are TOML literals, bare words are taken as strings).
    pub fn load_with_overrides(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_table(toml::from_str(&text)?, overrides)
    }

    /// This plan with `key=value` overrides applied.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        Self::from_table(toml::from_str(&self.to_toml()?)?, overrides)
    }

    fn from_table(mut table: toml::Table, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Ok(table.try_into()?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.pretrain_tasks.contains(&Task::Cls) {
            return bad("cls is not a pretraining task".into());
        }
        if self.test_size == 0 {
            return bad("test_size must be positive".into());
        }
        if !self.pretrain_tasks.is_empty() && self.pretrain.steps > 0 {
            self.mix.restricted_to(&self.pretrain_tasks).validate()?;
            self.pretrain.schedule.validate()?;
        }
        self.finetune.schedule.validate()?;
        Ok(())
    }

    pub fn run_dir(&self, label: &str, seed: u64) -> PathBuf {
        self.output_dir.join(&self.name).join(label).join(format!("seed_{seed}"))
    }
}

/// Applies one `dotted.key=value` override to a TOML table.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{spec}` is not key=value")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("override `{key}`: `{part}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the pair.
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_PRETRAIN: u64 = 1;
const STREAM_FINETUNE: u64 = 2;
const STREAM_DROPOUT_PRE: u64 = 3;
const STREAM_DROPOUT_FT: u64 = 4;
const STREAM_SUBSAMPLE: u64 = 5;

/// A held-out cross-lingual example.
#[derive(Clone, Debug, PartialEq)]
pub struct TestItem {
    pub id: String,
    pub src_ids: Vec<TokenId>,
    pub reference: String,
}

/// Tokenized corpora shared by every run of a plan.
pub struct Prepared {
    pub vocab: Vocabulary,
    pub bundle: SyntheticBundle,
    pub mono: Vec<(Vec<TokenId>, TokenId)>,
    pub parallel: Vec<ParallelPair>,
    pub summ: Vec<SummPair>,
    pub cls_train: Vec<SummPair>,
    pub test: Vec<TestItem>,
    pub target_lang: String,
}

fn vocab_lines(bundle: &SyntheticBundle) -> Vec<LanguageLines> {
    let mut by_lang: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in bundle.mono_a.iter().chain(&bundle.mono_b) {
        if let RecordBody::Mono { lang, text } = &r.body {
            by_lang.entry(lang.clone()).or_default().push(text.clone());
        }
    }
    by_lang
        .into_iter()
        .map(|(lang, lines)| LanguageLines { lang, lines })
        .collect()
}

/// Trains a vocabulary whose size is the reserved block, every character
/// seen in the monolingual data and `merges` learned merges.
pub fn build_vocab(bundle: &SyntheticBundle, languages: &[String], merges: usize, seed: u64) -> Result<Vocabulary> {
    let specials = SpecialTokens::new(languages)?;
    let lines = vocab_lines(bundle);
    let chars: std::collections::BTreeSet<char> = lines.iter().flat_map(|l| l.lines.iter().flat_map(|s| s.chars())).collect();
    let mut config = VocabTrainConfig::new(specials.reserved_count() + chars.len() + merges);
    config.seed = seed;
    train_vocab(&lines, specials, &config)
}

impl Prepared {
    pub fn new(plan: &ExperimentPlan) -> Result<Self> {
        let bundle = match &plan.corpus_dir {
            Some(dir) => read_bundle(dir)?,
            None => generate_synthetic(&plan.synthetic)?,
        };
        let vocab = build_vocab(&bundle, &plan.languages, plan.vocab_merges, plan.vocab_seed)?;
        Self::with_vocab(plan, bundle, vocab)
    }

    pub fn with_vocab(plan: &ExperimentPlan, bundle: SyntheticBundle, vocab: Vocabulary) -> Result<Self> {
        let sp = vocab.specials().clone();
        let enc = |text: &str, what: &'static str| -> Result<Vec<TokenId>> {
            let ids = vocab.encode(text);
            if ids.is_empty() {
                return Err(Error::EmptySequence(what));
            }
            Ok(ids)
        };
        let mut mono = Vec::new();
        for r in bundle.mono_a.iter().chain(&bundle.mono_b) {
            if let RecordBody::Mono { lang, text } = &r.body {
                mono.push((enc(text, "mono text")?, sp.lang_id(lang)?));
            }
        }
        let mut parallel = Vec::new();
        for r in &bundle.parallel {
            if let RecordBody::Parallel {
                lang_a,
                lang_b,
                text_a,
                text_b,
            } = &r.body
            {
                parallel.push(ParallelPair {
                    lang_a: sp.lang_id(lang_a)?,
                    lang_b: sp.lang_id(lang_b)?,
                    sent_a: enc(text_a, "parallel text")?,
                    sent_b: enc(text_b, "parallel text")?,
                });
            }
        }
        let summ_pair = |r: &CorpusRecord| -> Result<Option<(SummPair, String, String)>> {
            match &r.body {
                RecordBody::Summ {
                    doc_lang,
                    summ_lang,
                    doc,
                    summary,
                } => Ok(Some((
                    SummPair {
                        doc_lang: sp.lang_id(doc_lang)?,
                        summ_lang: sp.lang_id(summ_lang)?,
                        doc_ids: enc(doc, "document")?,
                        summ_ids: enc(summary, "summary")?,
                    },
                    summ_lang.clone(),
                    summary.clone(),
                ))),
                _ => Ok(None),
            }
        };
        let mut summ = Vec::new();
        for r in &bundle.summ {
            if let Some((p, _, _)) = summ_pair(r)? {
                summ.push(p);
            }
        }
        if plan.test_size >= bundle.cls.len() {
            return Err(Error::InvalidConfig(format!(
                "test_size {} leaves no training pairs out of {}",
                plan.test_size,
                bundle.cls.len()
            )));
        }
        let split = bundle.cls.len() - plan.test_size;
        let mut cls_train = Vec::with_capacity(split);
        let mut test = Vec::with_capacity(plan.test_size);
        let mut target_lang = String::new();
        for (i, r) in bundle.cls.iter().enumerate() {
            let Some((p, lang, summary)) = summ_pair(r)? else {
                continue;
            };
            if i < split {
                cls_train.push(p);
            } else {
                target_lang = lang;
                test.push(TestItem {
                    id: r.id.clone(),
                    src_ids: p.doc_ids,
                    reference: summary,
                });
            }
        }
        Ok(Self {
            vocab,
            bundle,
            mono,
            parallel,
            summ,
            cls_train,
            test,
            target_lang,
        })
    }

    pub fn specials(&self) -> &SpecialTokens {
        self.vocab.specials()
    }

    pub fn model_config(&self, plan: &ExperimentPlan) -> ModelConfig {
        plan.model.with_vocab(self.vocab.size())
    }

    fn items(&self, task: Task) -> SourceItems {
        match task {
            Task::Mlm | Task::Dae => SourceItems::Mono(self.mono.clone()),
            Task::Cmlm | Task::Mt => SourceItems::Parallel(self.parallel.clone()),
            Task::Ms => SourceItems::Summ(self.summ.clone()),
            Task::Cls => SourceItems::Summ(self.cls_train.clone()),
        }
    }
}

/// Runs the pretraining stage in place; returns its metrics (empty when no
/// task is enabled or the step budget is zero).
pub fn pretrain_stage(plan: &ExperimentPlan, prep: &Prepared, seed: u64, params: &mut ModelParams) -> Result<Vec<StepMetrics>> {
    if plan.pretrain_tasks.is_empty() || plan.pretrain.steps == 0 {
        return Ok(Vec::new());
    }
    let stream_seed = derive_seed(seed, STREAM_PRETRAIN);
    let sources = plan
        .pretrain_tasks
        .iter()
        .map(|&t| {
            TaskSource::new(
                t,
                prep.items(t),
                prep.specials().clone(),
                plan.objectives,
                derive_seed(stream_seed, t.index() as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stream = mix_tasks(sources, &plan.mix.restricted_to(&plan.pretrain_tasks), stream_seed)?;
    let mut state = OptimizerState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_DROPOUT_PRE));
    run_training(
        params,
        &mut state,
        &mut stream,
        prep.specials(),
        &plan.pretrain.train_config(),
        &mut rng,
    )
}

/// Finetunes on cross-lingual pairs with a fresh optimizer.
pub fn finetune_stage(
    plan: &ExperimentPlan,
    prep: &Prepared,
    seed: u64,
    params: &mut ModelParams,
    pairs: &[SummPair],
) -> Result<(Vec<StepMetrics>, OptimizerState)> {
    let mut state = OptimizerState::new(params.len());
    if plan.finetune.steps == 0 {
        return Ok((Vec::new(), state));
    }
    let source = TaskSource::new(
        Task::Cls,
        SourceItems::Summ(pairs.to_vec()),
        prep.specials().clone(),
        plan.objectives,
        derive_seed(seed, STREAM_FINETUNE),
    )?;
    let mut stream = single_task(source)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_DROPOUT_FT));
    let log = run_training(
        params,
        &mut state,
        &mut stream,
        prep.specials(),
        &plan.finetune.train_config(),
        &mut rng,
    )?;
    Ok((log, state))
}

/// Beam-decodes every test document.
pub fn decode_test(plan: &ExperimentPlan, prep: &Prepared, params: &ModelParams) -> Result<Vec<GenerationRecord>> {
    let sp = prep.specials();
    let task = sp.task_id(Task::Cls);
    let lang = sp.lang_id(&prep.target_lang)?;
    prep.test
        .iter()
        .map(|item| {
            let hyps = beam_search(params, sp, &item.src_ids, task, lang, &plan.beam)?;
            let best = &hyps[0];
            Ok(GenerationRecord {
                id: item.id.clone(),
                text: prep.vocab.decode(best.output())?,
                score: best.score,
            })
        })
        .collect()
}

pub fn score_generations(prep: &Prepared, decoded: &[GenerationRecord]) -> Result<RougeTriple> {
    let pairs: Vec<(&str, &str)> = decoded
        .iter()
        .zip(&prep.test)
        .map(|(d, t)| (d.text.as_str(), t.reference.as_str()))
        .collect();
    corpus_rouge(&pairs, Script::for_lang(&prep.target_lang))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub seed: u64,
    pub finetune_size: usize,
    pub pretrained: bool,
    pub rouge: RougeTriple,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub bytes: u64,
    pub crc32: u32,
}

pub const MANIFEST: &str = "manifest.json";
pub const REQUIRED_FILES: [&str; 6] = [
    "plan.toml",
    "finetune_metrics.jsonl",
    "model.ckpt",
    "decoded.jsonl",
    "scores.json",
    "scores.txt",
];

fn write_manifest(dir: &Path) -> Result<()> {
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST)
        .collect();
    names.sort();
    let entries = names
        .into_iter()
        .map(|name| {
            let data = std::fs::read(dir.join(&name))?;
            Ok(ManifestEntry {
                bytes: data.len() as u64,
                crc32: crc32fast::hash(&data),
                name,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&entries)?)?;
    Ok(())
}

/// Checks that a run directory is complete and unmodified.
pub fn verify_manifest(dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let dir = dir.as_ref();
    let entries: Vec<ManifestEntry> = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST))?)?;
    for required in REQUIRED_FILES {
        if !entries.iter().any(|e| e.name == required) {
            return Err(Error::Checkpoint(format!("{}: manifest lacks {required}", dir.display())));
        }
    }
    for e in &entries {
        let data = std::fs::read(dir.join(&e.name))?;
        if data.len() as u64 != e.bytes || crc32fast::hash(&data) != e.crc32 {
            return Err(Error::Checkpoint(format!(
                "{}: {} changed since the manifest was written",
                dir.display(),
                e.name
            )));
        }
    }
    Ok(entries)
}

/// Finetunes `params`, decodes, scores and writes a complete run directory.
#[allow(clippy::too_many_arguments)]
fn finish_run(
    plan: &ExperimentPlan,
    prep: &Prepared,
    seed: u64,
    mut params: ModelParams,
    pretrain_log: &[StepMetrics],
    pairs: &[SummPair],
    pretrained: bool,
    dir: &Path,
) -> Result<RunScores> {
    std::fs::create_dir_all(dir)?;
    let mut snapshot = plan.clone();
    snapshot.seeds = vec![seed];
    snapshot.finetune_size = Some(pairs.len());
    if !pretrained {
        snapshot.pretrain_tasks.clear();
    }
    std::fs::write(dir.join("plan.toml"), snapshot.to_toml()?)?;
    if !pretrain_log.is_empty() {
        write_metrics(dir.join("pretrain_metrics.jsonl"), pretrain_log)?;
    }
    let (ft_log, state) = finetune_stage(plan, prep, seed, &mut params, pairs).map_err(|e| e.in_stage("finetune"))?;
    write_metrics(dir.join("finetune_metrics.jsonl"), &ft_log)?;
    let progress = TrainProgress {
        step: state.step,
        examples_consumed: ft_log.iter().map(|m| m.task_counts.values().sum::<usize>() as u64).sum(),
        stream_seed: derive_seed(seed, STREAM_FINETUNE),
    };
    Checkpoint {
        params,
        optimizer: Some(state),
        progress: Some(progress),
    }
    .save(dir.join("model.ckpt"))?;
    let params = Checkpoint::load(dir.join("model.ckpt"))?.params;
    let decoded = decode_test(plan, prep, &params).map_err(|e| e.in_stage("decode"))?;
    write_generations(dir.join("decoded.jsonl"), &decoded)?;
    let rouge = score_generations(prep, &decoded).map_err(|e| e.in_stage("score"))?;
    let scores = RunScores {
        seed,
        finetune_size: pairs.len(),
        pretrained,
        rouge,
    };
    std::fs::write(dir.join("scores.json"), serde_json::to_string_pretty(&scores)?)?;
    std::fs::write(dir.join("scores.txt"), format_report(&rouge))?;
    write_manifest(dir)?;
    log::info!("{}: rouge-1 f1 {:.4}", dir.display(), rouge.rouge1.f1);
    Ok(scores)
}

/// The finetuning set: all training pairs, or a seeded subsample of `size`.
pub fn finetune_pairs(plan: &ExperimentPlan, prep: &Prepared, size: Option<usize>, seed: u64) -> Result<Vec<SummPair>> {
    match size {
        None => Ok(prep.cls_train.clone()),
        Some(n) => subsample(&prep.cls_train, n, derive_seed(seed, STREAM_SUBSAMPLE ^ ((n as u64) << 8))),
    }
    .map_err(|e| e.in_stage("subsample"))
    .and_then(|p| {
        if p.is_empty() {
            Err(Error::InvalidConfig(format!(
                "plan `{}` has an empty finetuning set",
                plan.name
            )))
        } else {
            Ok(p)
        }
    })
}

/// Pretrains (when tasks are enabled), finetunes, decodes and scores one
/// seed, writing the run directory under `label`.
pub fn run_seed(plan: &ExperimentPlan, prep: &Prepared, seed: u64, label: &str) -> Result<RunScores> {
    let config = prep.model_config(plan);
    let mut params = init_params(&config, seed)?;
    let log = pretrain_stage(plan, prep, seed, &mut params).map_err(|e| e.in_stage("pretrain"))?;
    let pairs = finetune_pairs(plan, prep, plan.finetune_size, seed)?;
    let pretrained = !log.is_empty();
    finish_run(plan, prep, seed, params, &log, &pairs, pretrained, &plan.run_dir(label, seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub runs: Vec<RunScores>,
}

impl PipelineResult {
    pub fn mean(&self) -> RougeTriple {
        mean_triple(self.runs.iter().map(|r| &r.rouge))
    }
}

fn mean_triple<'a>(scores: impl Iterator<Item = &'a RougeTriple>) -> RougeTriple {
    let all: Vec<&RougeTriple> = scores.collect();
    let n = all.len().max(1) as f64;
    let avg = |f: &dyn Fn(&RougeTriple) -> crate::rouge::RougeScore| crate::rouge::RougeScore {
        precision: all.iter().map(|t| f(t).precision).sum::<f64>() / n,
        recall: all.iter().map(|t| f(t).recall).sum::<f64>() / n,
        f1: all.iter().map(|t| f(t).f1).sum::<f64>() / n,
    };
    RougeTriple {
        rouge1: avg(&|t| t.rouge1),
        rouge2: avg(&|t| t.rouge2),
        rouge_l: avg(&|t| t.rouge_l),
    }
}

/// Runs every seed of `plan` under the label `pipeline`.
pub fn run_pipeline(plan: &ExperimentPlan) -> Result<PipelineResult> {
    plan.validate()?;
    let prep = Prepared::new(plan).map_err(|e| e.in_stage("prepare"))?;
    run_pipeline_prepared(plan, &prep, "pipeline")
}

pub fn run_pipeline_prepared(plan: &ExperimentPlan, prep: &Prepared, label: &str) -> Result<PipelineResult> {
    let runs = plan
        .seeds
        .iter()
        .map(|&s| run_seed(plan, prep, s, label))
        .collect::<Result<Vec<_>>>()?;
    Ok(PipelineResult { runs })
}

/// The five ablation rows: name and enabled tasks.
pub fn ablation_rows() -> Vec<(&'static str, Vec<Task>)> {
    use Task::*;
    vec![
        ("full", vec![Mlm, Dae, Ms, Cmlm, Mt]),
        ("-ms", vec![Mlm, Dae, Cmlm, Mt]),
        ("-mt", vec![Mlm, Dae, Ms, Cmlm]),
        ("-mlm,dae", vec![Ms, Cmlm, Mt]),
        ("-all", vec![]),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub tasks: Vec<Task>,
    pub runs: Vec<RunScores>,
    pub error: Option<String>,
}

impl AblationRow {
    pub fn mean(&self) -> Option<RougeTriple> {
        (self.error.is_none() && !self.runs.is_empty()).then(|| mean_triple(self.runs.iter().map(|r| &r.rouge)))
    }
}

/// Runs the rows of [`ablation_rows`] whose names are in `only` (all rows
/// when `only` is empty) and writes `ablation.csv` / `ablation_mean.csv`.
pub fn run_ablation(base: &ExperimentPlan, only: &[&str]) -> Result<Vec<AblationRow>> {
    base.validate()?;
    let prep = Prepared::new(base).map_err(|e| e.in_stage("prepare"))?;
    let mut rows = Vec::new();
    for (name, tasks) in ablation_rows() {
        if !only.is_empty() && !only.contains(&name) {
            continue;
        }
        let mut plan = base.clone();
        plan.pretrain_tasks = tasks.clone();
        let label = match name.strip_prefix('-') {
            Some(removed) => format!("ablation/no_{}", removed.replace(',', "_")),
            None => format!("ablation/{name}"),
        };
        let (runs, error) = match run_pipeline_prepared(&plan, &prep, &label) {
            Ok(r) => (r.runs, None),
            Err(e) => {
                log::error!("ablation row {name} failed: {e}");
                (Vec::new(), Some(e.to_string()))
            }
        };
        rows.push(AblationRow {
            name: name.to_string(),
            tasks,
            runs,
            error,
        });
    }
    let dir = base.output_dir.join(&base.name).join("ablation");
    std::fs::create_dir_all(&dir)?;
    let mut raw = String::from("row,seed,rouge1_f1,rouge2_f1,rougeL_f1\n");
    let mut mean = String::from("row,rouge1_f1,rouge2_f1,rougeL_f1\n");
    for r in &rows {
        for s in &r.runs {
            writeln!(
                raw,
                "{},{},{:.6},{:.6},{:.6}",
                r.name, s.seed, s.rouge.rouge1.f1, s.rouge.rouge2.f1, s.rouge.rouge_l.f1
            )
            .expect("string write");
        }
        match r.mean() {
            Some(m) => writeln!(mean, "{},{:.6},{:.6},{:.6}", r.name, m.rouge1.f1, m.rouge2.f1, m.rouge_l.f1),
            None => writeln!(mean, "{},,,", r.name),
        }
        .expect("string write");
    }
    std::fs::write(dir.join("ablation.csv"), raw)?;
    std::fs::write(dir.join("ablation_mean.csv"), mean)?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub pretrained: Vec<RunScores>,
    pub scratch: Vec<RunScores>,
    pub error: Option<String>,
}

impl CurvePoint {
    /// Mean pretrained minus mean scratch ROUGE-1 F1.
    pub fn gap(&self) -> Option<f64> {
        if self.error.is_some() || self.pretrained.is_empty() || self.scratch.is_empty() {
            return None;
        }
        let m = |v: &[RunScores]| v.iter().map(|r| r.rouge.rouge1.f1).sum::<f64>() / v.len() as f64;
        Some(m(&self.pretrained) - m(&self.scratch))
    }
}

/// For each size in `plan.low_resource_sizes` (sizes equal to the training
/// set are the identity subsample), finetunes one pretrained and one
/// scratch model per seed on the same subsample. Pretraining runs once per
/// seed. Writes `curve.csv` and `curve_mean.csv`.
pub fn run_low_resource(plan: &ExperimentPlan) -> Result<Vec<CurvePoint>> {
    plan.validate()?;
    if plan.pretrain_tasks.is_empty() {
        return Err(Error::InvalidConfig("the low-resource curve needs pretraining tasks".into()));
    }
    let prep = Prepared::new(plan).map_err(|e| e.in_stage("prepare"))?;
    let available = prep.cls_train.len();
    if let Some(&n) = plan.low_resource_sizes.iter().find(|&&n| n > available || n == 0) {
        return Err(Error::SubsampleTooLarge { n, len: available });
    }
    let config = prep.model_config(plan);
    let mut points: Vec<CurvePoint> = plan
        .low_resource_sizes
        .iter()
        .map(|&size| CurvePoint {
            size,
            pretrained: Vec::new(),
            scratch: Vec::new(),
            error: None,
        })
        .collect();
    for &seed in &plan.seeds {
        let init = init_params(&config, seed)?;
        let mut pre = init.clone();
        let log = pretrain_stage(plan, &prep, seed, &mut pre).map_err(|e| e.in_stage("pretrain"))?;
        for point in points.iter_mut() {
            if point.error.is_some() {
                continue;
            }
            let cell = || -> Result<(RunScores, RunScores)> {
                let pairs = finetune_pairs(plan, &prep, Some(point.size), seed)?;
                let base = format!("curve/size_{}", point.size);
                let p = finish_run(
                    plan,
                    &prep,
                    seed,
                    pre.clone(),
                    &log,
                    &pairs,
                    true,
                    &plan.run_dir(&format!("{base}/pretrained"), seed),
                )?;
                let s = finish_run(
                    plan,
                    &prep,
                    seed,
                    init.clone(),
                    &[],
                    &pairs,
                    false,
                    &plan.run_dir(&format!("{base}/scratch"), seed),
                )?;
                Ok((p, s))
            };
            match cell() {
                Ok((p, s)) => {
                    point.pretrained.push(p);
                    point.scratch.push(s);
                }
                Err(e) => {
                    log::error!("curve cell size {} failed: {e}", point.size);
                    point.error = Some(e.to_string());
                }
            }
        }
    }
    let dir = plan.output_dir.join(&plan.name).join("curve");
    std::fs::create_dir_all(&dir)?;
    let mut raw = String::from("size,seed,condition,rouge1_f1,rouge2_f1,rougeL_f1\n");
    let mut mean = String::from("size,pretrained_rouge1_f1,scratch_rouge1_f1,gap\n");
    for p in &points {
        for (cond, runs) in [("pretrained", &p.pretrained), ("scratch", &p.scratch)] {
            for s in runs {
                writeln!(
                    raw,
                    "{},{},{cond},{:.6},{:.6},{:.6}",
                    p.size, s.seed, s.rouge.rouge1.f1, s.rouge.rouge2.f1, s.rouge.rouge_l.f1
                )
                .expect("string write");
            }
        }
        let m = |v: &[RunScores]| v.iter().map(|r| r.rouge.rouge1.f1).sum::<f64>() / v.len().max(1) as f64;
        match p.gap() {
            Some(g) => writeln!(mean, "{},{:.6},{:.6},{:.6}", p.size, m(&p.pretrained), m(&p.scratch), g),
            None => writeln!(mean, "{},,,", p.size),
        }
        .expect("string write");
    }
    std::fs::write(dir.join("curve.csv"), raw)?;
    std::fs::write(dir.join("curve_mean.csv"), mean)?;
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_roundtrips_through_toml() {
        let plan = ExperimentPlan::default();
        assert_eq!(ExperimentPlan::from_toml(&plan.to_toml().unwrap()).unwrap(), plan);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let mut t: toml::Table = toml::from_str(&ExperimentPlan::default().to_toml().unwrap()).unwrap();
        apply_override(&mut t, "finetune.steps=7").unwrap();
        apply_override(&mut t, "name=quick").unwrap();
        apply_override(&mut t, "pretrain_tasks=[\"mt\"]").unwrap();
        let plan: ExperimentPlan = t.try_into().unwrap();
        assert_eq!(plan.finetune.steps, 7);
        assert_eq!(plan.name, "quick");
        assert_eq!(plan.pretrain_tasks, vec![Task::Mt]);
        let mut t = toml::Table::new();
        assert!(apply_override(&mut t, "novalue").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentPlan::from_toml("nmae = \"x\"").is_err());
    }

    #[test]
    fn ablation_rows_match_protocol() {
        let rows = ablation_rows();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].1.len(), 5);
        assert_eq!(rows[3].1, vec![Task::Ms, Task::Cmlm, Task::Mt]);
        assert!(rows[4].1.is_empty());
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(1, STREAM_PRETRAIN), derive_seed(1, STREAM_FINETUNE));
        assert_ne!(derive_seed(1, STREAM_PRETRAIN), derive_seed(2, STREAM_PRETRAIN));
    }
}
