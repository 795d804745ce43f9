//! Training-example construction for the five pre-training objectives and
//! the downstream summarization tasks, plus the weighted task mixer.
//!
//! All randomness comes from an explicit generator. Every constructor that
//! draws noise is split into a draw step and a deterministic `*_from_*`
//! application step so fixed selections can be replayed exactly.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{SpecialTokens, Task, TokenId, SENTINEL_COUNT};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub src_ids: Vec<TokenId>,
    /// Decoder target without the control prefix or trailing eos.
    pub tgt_ids: Vec<TokenId>,
    pub task: Task,
    pub tgt_lang: TokenId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelPair {
    pub lang_a: TokenId,
    pub lang_b: TokenId,
    pub sent_a: Vec<TokenId>,
    pub sent_b: Vec<TokenId>,
}

impl ParallelPair {
    pub fn validate(&self) -> Result<()> {
        if self.sent_a.is_empty() || self.sent_b.is_empty() {
            return Err(Error::InvalidPair("parallel sentences must be non-empty".into()));
        }
        if self.lang_a == self.lang_b {
            return Err(Error::InvalidPair("parallel pair languages must differ".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummPair {
    pub doc_lang: TokenId,
    pub summ_lang: TokenId,
    pub doc_ids: Vec<TokenId>,
    pub summ_ids: Vec<TokenId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    AToB,
    BToA,
}

fn check_prob(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}

fn check_plain(specials: &SpecialTokens, tokens: &[TokenId], what: &'static str) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::EmptySequence(what));
    }
    match tokens.iter().position(|&t| specials.is_special(t)) {
        Some(index) => Err(Error::SpecialInInput {
            index,
            id: tokens[index],
        }),
        None => Ok(()),
    }
}

/// Independent per-token selection: one uniform draw per token, selected when
/// the draw falls below `prob`.
pub fn draw_selection<R: Rng + ?Sized>(len: usize, prob: f64, rng: &mut R) -> Vec<bool> {
    (0..len).map(|_| rng.random::<f64>() < prob).collect()
}

/// Replaces maximal runs of selected tokens by ascending sentinels.
/// Returns (corrupted input, sentinel-format target).
pub fn sentinel_spans(specials: &SpecialTokens, tokens: &[TokenId], selected: &[bool]) -> Result<(Vec<TokenId>, Vec<TokenId>)> {
    if selected.len() != tokens.len() {
        return Err(Error::Shape("selection length differs from token count".into()));
    }
    let mut src = Vec::with_capacity(tokens.len());
    let mut tgt = Vec::new();
    let mut spans = 0usize;
    for (i, (&tok, &sel)) in tokens.iter().zip(selected).enumerate() {
        if !sel {
            src.push(tok);
            continue;
        }
        if i == 0 || !selected[i - 1] {
            let sentinel = specials.sentinel(spans).ok_or(Error::TooManySpans {
                spans: selected
                    .iter()
                    .enumerate()
                    .filter(|&(j, &s)| s && (j == 0 || !selected[j - 1]))
                    .count(),
                available: SENTINEL_COUNT,
            })?;
            spans += 1;
            src.push(sentinel);
            tgt.push(sentinel);
        }
        tgt.push(tok);
    }
    Ok((src, tgt))
}

/// Substitutes every sentinel in `src` with its span from `tgt`.
pub fn restore_sentinels(specials: &SpecialTokens, src: &[TokenId], tgt: &[TokenId]) -> Option<Vec<TokenId>> {
    let mut spans: Vec<(TokenId, Vec<TokenId>)> = Vec::new();
    for &t in tgt {
        if specials.is_sentinel(t) {
            spans.push((t, Vec::new()));
        } else {
            spans.last_mut()?.1.push(t);
        }
    }
    let mut next = spans.into_iter();
    let mut out = Vec::with_capacity(src.len() + tgt.len());
    for &t in src {
        if specials.is_sentinel(t) {
            let (s, span) = next.next()?;
            if s != t || span.is_empty() {
                return None;
            }
            out.extend(span);
        } else {
            out.push(t);
        }
    }
    next.next().is_none().then_some(out)
}

pub fn mlm_from_selection(
    specials: &SpecialTokens,
    tokens: &[TokenId],
    lang: TokenId,
    selected: &[bool],
) -> Result<TrainingExample> {
    check_plain(specials, tokens, "mlm input")?;
    let (src_ids, tgt_ids) = sentinel_spans(specials, tokens, selected)?;
    Ok(TrainingExample {
        src_ids,
        tgt_ids,
        task: Task::Mlm,
        tgt_lang: lang,
    })
}

pub fn corrupt_mlm<R: Rng + ?Sized>(
    specials: &SpecialTokens,
    tokens: &[TokenId],
    lang: TokenId,
    mask_prob: f64,
    rng: &mut R,
) -> Result<TrainingExample> {
    check_prob("mask_prob", mask_prob)?;
    check_plain(specials, tokens, "mlm input")?;
    let selected = draw_selection(tokens.len(), mask_prob, rng);
    mlm_from_selection(specials, tokens, lang, &selected)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaeConfig {
    pub drop_prob: f64,
    pub mask_prob: f64,
    pub shuffle_k: usize,
}

impl Default for DaeConfig {
    fn default() -> Self {
        Self {
            drop_prob: 0.1,
            mask_prob: 0.1,
            shuffle_k: 3,
        }
    }
}

/// Concrete noise for one DAE example. `order` indexes the surviving tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DaeNoise {
    pub dropped: Vec<bool>,
    pub masked: Vec<bool>,
    pub order: Vec<usize>,
}

/// Bounded shuffle: position i gets key i + U[0, k+1); a stable sort by key
/// moves no element more than k places.
pub fn bounded_shuffle_order<R: Rng + ?Sized>(len: usize, k: usize, rng: &mut R) -> Vec<usize> {
    if k == 0 {
        return (0..len).collect();
    }
    let keys: Vec<f64> = (0..len).map(|i| i as f64 + rng.random::<f64>() * (k as f64 + 1.0)).collect();
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    order
}

/// Draws drop → mask → shuffle noise for a sentence of `len` tokens.
pub fn draw_dae_noise<R: Rng + ?Sized>(len: usize, config: &DaeConfig, rng: &mut R) -> DaeNoise {
    let mut dropped = draw_selection(len, config.drop_prob, rng);
    if len > 0 && dropped.iter().all(|&d| d) {
        let keep = rng.random_range(0..len);
        dropped[keep] = false;
    }
    let survivors = dropped.iter().filter(|&&d| !d).count();
    let masked = draw_selection(survivors, config.mask_prob, rng);
    let order = bounded_shuffle_order(survivors, config.shuffle_k, rng);
    DaeNoise { dropped, masked, order }
}

pub fn dae_from_noise(specials: &SpecialTokens, tokens: &[TokenId], lang: TokenId, noise: &DaeNoise) -> Result<TrainingExample> {
    check_plain(specials, tokens, "dae input")?;
    if noise.dropped.len() != tokens.len() {
        return Err(Error::Shape("drop mask length differs from token count".into()));
    }
    let survivors: Vec<TokenId> = tokens
        .iter()
        .zip(&noise.dropped)
        .filter(|(_, &d)| !d)
        .map(|(&t, _)| t)
        .collect();
    if survivors.is_empty() {
        return Err(Error::EmptySequence("dae corrupted input"));
    }
    if noise.masked.len() != survivors.len() || noise.order.len() != survivors.len() {
        return Err(Error::Shape("mask/shuffle length differs from surviving token count".into()));
    }
    let masked: Vec<TokenId> = survivors
        .iter()
        .zip(&noise.masked)
        .map(|(&t, &m)| if m { specials.shared_mask_id } else { t })
        .collect();
    let src_ids = noise.order.iter().map(|&i| masked[i]).collect();
    Ok(TrainingExample {
        src_ids,
        tgt_ids: tokens.to_vec(),
        task: Task::Dae,
        tgt_lang: lang,
    })
}

pub fn corrupt_dae<R: Rng + ?Sized>(
    specials: &SpecialTokens,
    tokens: &[TokenId],
    lang: TokenId,
    config: &DaeConfig,
    rng: &mut R,
) -> Result<TrainingExample> {
    check_prob("drop_prob", config.drop_prob)?;
    check_prob("mask_prob", config.mask_prob)?;
    check_plain(specials, tokens, "dae input")?;
    let noise = draw_dae_noise(tokens.len(), config, rng);
    dae_from_noise(specials, tokens, lang, &noise)
}

pub fn cmlm_from_selection(
    specials: &SpecialTokens,
    pair: &ParallelPair,
    side: Side,
    selected: &[bool],
) -> Result<TrainingExample> {
    pair.validate()?;
    check_plain(specials, &pair.sent_a, "cmlm sentence a")?;
    check_plain(specials, &pair.sent_b, "cmlm sentence b")?;
    let (masked_sent, lang) = match side {
        Side::A => (&pair.sent_a, pair.lang_a),
        Side::B => (&pair.sent_b, pair.lang_b),
    };
    let (corrupted, tgt_ids) = sentinel_spans(specials, masked_sent, selected)?;
    let (a, b) = match side {
        Side::A => (&corrupted, &pair.sent_b),
        Side::B => (&pair.sent_a, &corrupted),
    };
    let mut src_ids = Vec::with_capacity(a.len() + b.len() + 1);
    src_ids.extend_from_slice(a);
    src_ids.push(specials.separator_id);
    src_ids.extend_from_slice(b);
    Ok(TrainingExample {
        src_ids,
        tgt_ids,
        task: Task::Cmlm,
        tgt_lang: lang,
    })
}

/// Masks exactly one side of the pair, chosen uniformly.
pub fn make_cmlm<R: Rng + ?Sized>(
    specials: &SpecialTokens,
    pair: &ParallelPair,
    mask_prob: f64,
    rng: &mut R,
) -> Result<TrainingExample> {
    if !(mask_prob > 0.0 && mask_prob <= 1.0) {
        return Err(Error::InvalidProbability {
            name: "mask_prob",
            value: mask_prob,
        });
    }
    pair.validate()?;
    let side = if rng.random_bool(0.5) { Side::B } else { Side::A };
    let len = match side {
        Side::A => pair.sent_a.len(),
        Side::B => pair.sent_b.len(),
    };
    let selected = draw_selection(len, mask_prob, rng);
    cmlm_from_selection(specials, pair, side, &selected)
}

pub fn make_mt(pair: &ParallelPair, direction: Direction) -> Result<TrainingExample> {
    pair.validate()?;
    let (src, tgt, lang) = match direction {
        Direction::AToB => (&pair.sent_a, &pair.sent_b, pair.lang_b),
        Direction::BToA => (&pair.sent_b, &pair.sent_a, pair.lang_a),
    };
    Ok(TrainingExample {
        src_ids: src.clone(),
        tgt_ids: tgt.clone(),
        task: Task::Mt,
        tgt_lang: lang,
    })
}

/// Monolingual pairs become `ms` examples, cross-lingual pairs `cls`.
pub fn make_summ(pair: &SummPair) -> Result<TrainingExample> {
    if pair.doc_ids.is_empty() || pair.summ_ids.is_empty() {
        return Err(Error::InvalidPair("summarization pair must be non-empty".into()));
    }
    let task = if pair.doc_lang == pair.summ_lang {
        Task::Ms
    } else {
        Task::Cls
    };
    Ok(TrainingExample {
        src_ids: pair.doc_ids.clone(),
        tgt_ids: pair.summ_ids.clone(),
        task,
        tgt_lang: pair.summ_lang,
    })
}

pub fn control_prefix(specials: &SpecialTokens, task: TokenId, tgt_lang: TokenId) -> Result<[TokenId; 2]> {
    if specials.task_of(task).is_none() {
        return Err(Error::UnregisteredControl(task));
    }
    if !specials.is_lang(tgt_lang) {
        return Err(Error::UnregisteredControl(tgt_lang));
    }
    Ok([task, tgt_lang])
}

impl TrainingExample {
    pub fn prefix(&self, specials: &SpecialTokens) -> Result<[TokenId; 2]> {
        control_prefix(specials, specials.task_id(self.task), self.tgt_lang)
    }
}

/// Per-task mixing weights over the pre-training objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixWeights {
    pub mlm: f64,
    pub dae: f64,
    pub ms: f64,
    pub cmlm: f64,
    pub mt: f64,
}

impl Default for MixWeights {
    fn default() -> Self {
        Self::uniform(&Task::PRETRAINING)
    }
}

impl MixWeights {
    pub fn zero() -> Self {
        Self {
            mlm: 0.0,
            dae: 0.0,
            ms: 0.0,
            cmlm: 0.0,
            mt: 0.0,
        }
    }

    pub fn uniform(tasks: &[Task]) -> Self {
        let mut w = Self::zero();
        for &t in tasks {
            w.set(t, 1.0);
        }
        w
    }

    pub fn get(&self, task: Task) -> f64 {
        match task {
            Task::Mlm => self.mlm,
            Task::Dae => self.dae,
            Task::Ms => self.ms,
            Task::Cmlm => self.cmlm,
            Task::Mt => self.mt,
            Task::Cls => 0.0,
        }
    }

    pub fn set(&mut self, task: Task, value: f64) {
        match task {
            Task::Mlm => self.mlm = value,
            Task::Dae => self.dae = value,
            Task::Ms => self.ms = value,
            Task::Cmlm => self.cmlm = value,
            Task::Mt => self.mt = value,
            Task::Cls => {}
        }
    }

    /// Keeps only the weights of `tasks`.
    pub fn restricted_to(&self, tasks: &[Task]) -> Self {
        let mut w = Self::zero();
        for &t in tasks {
            w.set(t, self.get(t));
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        let ws = Task::PRETRAINING.map(|t| self.get(t));
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("mix weights must be finite and non-negative".into()));
        }
        if ws.iter().sum::<f64>() <= 0.0 {
            return Err(Error::AllZeroWeights);
        }
        Ok(())
    }
}

pub trait ExampleStream {
    fn next_example(&mut self) -> Result<TrainingExample>;
}

impl<S: ExampleStream + ?Sized> ExampleStream for Box<S> {
    fn next_example(&mut self) -> Result<TrainingExample> {
        (**self).next_example()
    }
}

/// Hyperparameters of the noising objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub mlm_mask_prob: f64,
    pub cmlm_mask_prob: f64,
    pub dae: DaeConfig,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            mlm_mask_prob: 0.15,
            cmlm_mask_prob: 0.15,
            dae: DaeConfig::default(),
        }
    }
}

/// Items a task source draws from.
#[derive(Clone, Debug)]
pub enum SourceItems {
    /// Monolingual sentences with their language id.
    Mono(Vec<(Vec<TokenId>, TokenId)>),
    Parallel(Vec<ParallelPair>),
    Summ(Vec<SummPair>),
}

impl SourceItems {
    pub fn len(&self) -> usize {
        match self {
            SourceItems::Mono(v) => v.len(),
            SourceItems::Parallel(v) => v.len(),
            SourceItems::Summ(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A finite item list replayed in shuffled epochs, building one example of
/// `task` per draw.
pub struct TaskSource {
    task: Task,
    items: SourceItems,
    specials: SpecialTokens,
    config: ObjectiveConfig,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl TaskSource {
    pub fn new(task: Task, items: SourceItems, specials: SpecialTokens, config: ObjectiveConfig, seed: u64) -> Result<Self> {
        let compatible = matches!(
            (task, &items),
            (Task::Mlm | Task::Dae, SourceItems::Mono(_))
                | (Task::Cmlm | Task::Mt, SourceItems::Parallel(_))
                | (Task::Ms | Task::Cls, SourceItems::Summ(_))
        );
        if !compatible {
            return Err(Error::InvalidConfig(format!("task `{task}` cannot draw from these items")));
        }
        let mut src = Self {
            task,
            items,
            specials,
            config,
            seed,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        src.reshuffle();
        Ok(src)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn reshuffle(&mut self) {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        self.order = (0..self.items.len()).collect();
        self.order.shuffle(&mut shuffle_rng);
        self.cursor = 0;
    }
}

impl ExampleStream for TaskSource {
    fn next_example(&mut self) -> Result<TrainingExample> {
        if self.items.is_empty() {
            return Err(Error::EmptySource(self.task));
        }
        if self.cursor == self.order.len() {
            self.epoch += 1;
            self.reshuffle();
        }
        let idx = self.order[self.cursor];
        self.cursor += 1;
        let sp = &self.specials;
        let rng = &mut self.rng;
        match (&self.task, &self.items) {
            (Task::Mlm, SourceItems::Mono(v)) => corrupt_mlm(sp, &v[idx].0, v[idx].1, self.config.mlm_mask_prob, rng),
            (Task::Dae, SourceItems::Mono(v)) => corrupt_dae(sp, &v[idx].0, v[idx].1, &self.config.dae, rng),
            (Task::Cmlm, SourceItems::Parallel(v)) => make_cmlm(sp, &v[idx], self.config.cmlm_mask_prob, rng),
            (Task::Mt, SourceItems::Parallel(v)) => {
                let dir = if rng.random_bool(0.5) {
                    Direction::BToA
                } else {
                    Direction::AToB
                };
                make_mt(&v[idx], dir)
            }
            (Task::Ms | Task::Cls, SourceItems::Summ(v)) => make_summ(&v[idx]),
            _ => unreachable!("checked in TaskSource::new"),
        }
    }
}

/// Interleaves task sources, drawing each example's task i.i.d. in
/// proportion to its weight.
pub struct TaskMixer<S> {
    sources: Vec<S>,
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl<S: ExampleStream> ExampleStream for TaskMixer<S> {
    fn next_example(&mut self) -> Result<TrainingExample> {
        let i = self.dist.sample(&mut self.rng);
        self.sources[i].next_example()
    }
}

/// Builds a mixed stream over `(task, source)` pairs. Sources with zero
/// weight are dropped; positive-weight tasks must have non-empty sources.
pub fn mix_tasks(sources: Vec<TaskSource>, weights: &MixWeights, seed: u64) -> Result<TaskMixer<TaskSource>> {
    weights.validate()?;
    for t in Task::PRETRAINING {
        if weights.get(t) > 0.0 && !sources.iter().any(|s| s.task() == t && !s.is_empty()) {
            return Err(Error::EmptySource(t));
        }
    }
    let mut kept: Vec<TaskSource> = sources.into_iter().filter(|s| weights.get(s.task()) > 0.0).collect();
    kept.sort_by_key(|s| s.task());
    kept.dedup_by_key(|s| s.task());
    let dist = WeightedIndex::new(kept.iter().map(|s| weights.get(s.task()))).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(TaskMixer {
        sources: kept,
        dist,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

/// A single-source stream (finetuning).
pub fn single_task(source: TaskSource) -> Result<TaskSource> {
    if source.is_empty() {
        return Err(Error::EmptySource(source.task()));
    }
    Ok(source)
}
