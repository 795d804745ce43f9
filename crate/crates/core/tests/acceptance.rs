//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Tolerances and time budgets are fixed below.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::*;
use mixsum::decoding::{beam_search_with, greedy_with, BeamConfig, StepScorer};
use mixsum::experiments::{run_ablation, run_low_resource, run_pipeline, verify_manifest, ExperimentPlan};
use mixsum::model::{backward, count_params, init_params, Mode, ModelConfig};
use mixsum::objectives::{
    cmlm_from_selection, corrupt_mlm, dae_from_noise, make_cmlm, make_mt, make_summ, mlm_from_selection, DaeNoise, Direction,
    ParallelPair, Side, SummPair, TrainingExample,
};
use mixsum::rouge::{score_pair, Script};
use mixsum::training::{lr_at, radam_step, OptimizerState, ScheduleConfig};
use mixsum::vocab::{SpecialTokens, Task, TokenId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PARAM_TARGET: f64 = 61e6;
const PARAM_REL_TOL: f64 = 0.02;
const GRAD_H: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
const RADAM_TOL: f64 = 1e-10;
const SCHEDULE_TOL: f64 = 1e-12;
const BEAM_TOL: f64 = 1e-12;
const ROUGE_TOL: f64 = 1e-12;
const OVERFIT_LOSS: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn run(id: u32, name: &str, budget_secs: f64, f: impl FnOnce() -> Outcome) -> bool {
    let started = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let secs = started.elapsed().as_secs_f64();
    let (pass, detail) = match result {
        Ok(o) => (o.pass && secs < budget_secs, o.detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    println!(
        "{} [{id:2}] {name}: {detail} ({secs:.2}s, budget {budget_secs}s)",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn plan_path(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("plans").join(file)
}

fn load_plan(file: &str, out: &Path) -> ExperimentPlan {
    let mut plan = ExperimentPlan::load(plan_path(file)).unwrap();
    plan.output_dir = out.to_path_buf();
    plan
}

// ---- 1 ---------------------------------------------------------------

fn parameter_count() -> Outcome {
    let n = count_params(&ModelConfig::full_size(33_000)) as f64;
    let rel = (n - PARAM_TARGET).abs() / PARAM_TARGET;
    outcome(
        rel <= PARAM_REL_TOL,
        format!("{:.3}M, off by {:.2}% (tol {}%)", n / 1e6, rel * 100.0, PARAM_REL_TOL * 100.0),
    )
}

// ---- 2 ---------------------------------------------------------------

/// Word-level ids for the fixture sentences; `<X>`, `<Y>`, `<M>` and `[SEP]`
/// map to the reserved ids.
struct Lexicon {
    specials: SpecialTokens,
    ids: HashMap<String, TokenId>,
}

impl Lexicon {
    fn new() -> Self {
        Self {
            specials: SpecialTokens::with_default_languages(),
            ids: HashMap::new(),
        }
    }

    fn ids(&mut self, text: &str) -> Vec<TokenId> {
        let sp = &self.specials;
        text.split_whitespace()
            .map(|w| match w {
                "<X>" => sp.sentinel(0).unwrap(),
                "<Y>" => sp.sentinel(1).unwrap(),
                "<M>" => sp.shared_mask_id,
                "[SEP]" => sp.separator_id,
                _ => {
                    let next = (sp.reserved_count() + self.ids.len()) as TokenId;
                    *self.ids.entry(w.to_string()).or_insert(next)
                }
            })
            .collect()
    }

    fn lang(&self, code: &str) -> TokenId {
        self.specials.lang_id(code).unwrap()
    }
}

fn selection(len: usize, picked: &[usize]) -> Vec<bool> {
    (0..len).map(|i| picked.contains(&i)).collect()
}

fn table_fixtures() -> Outcome {
    const EN: &str = "France beats Morocco in an exhibition match .";
    const ZH: &str = "法国 队 在 一场 表演赛 中 击败 摩洛哥 队 。";
    const DOC: &str = "World champion France overcame a stuttering start to beat Morocco 1-0 in a scrappy exhibition match on Wednesday night .";
    let mut lx = Lexicon::new();
    let (en, zh) = (lx.ids(EN), lx.ids(ZH));
    let (l_en, l_zh) = (lx.lang("en"), lx.lang("zh"));
    let sp = lx.specials.clone();
    let pair = ParallelPair {
        lang_a: l_en,
        lang_b: l_zh,
        sent_a: en.clone(),
        sent_b: zh.clone(),
    };
    let expect = |lx: &mut Lexicon, src: &str, tgt: &str, task: Task, lang: TokenId| TrainingExample {
        src_ids: lx.ids(src),
        tgt_ids: lx.ids(tgt),
        task,
        tgt_lang: lang,
    };

    let rows: Vec<(&str, TrainingExample, TrainingExample)> = vec![
        (
            "mlm",
            mlm_from_selection(&sp, &en, l_en, &selection(en.len(), &[1, 4])).unwrap(),
            expect(
                &mut lx,
                "France <X> Morocco in <Y> exhibition match .",
                "<X> beats <Y> an",
                Task::Mlm,
                l_en,
            ),
        ),
        (
            "dae",
            dae_from_noise(
                &sp,
                &en,
                l_en,
                &DaeNoise {
                    dropped: selection(en.len(), &[6]),
                    masked: selection(en.len() - 1, &[2, 4]),
                    order: (0..en.len() - 1).collect(),
                },
            )
            .unwrap(),
            expect(&mut lx, "France beats <M> in <M> exhibition .", EN, Task::Dae, l_en),
        ),
        (
            "ms",
            make_summ(&SummPair {
                doc_lang: l_en,
                summ_lang: l_en,
                doc_ids: lx.ids(DOC),
                summ_ids: en.clone(),
            })
            .unwrap(),
            expect(&mut lx, DOC, EN, Task::Ms, l_en),
        ),
        (
            "cmlm/en",
            cmlm_from_selection(&sp, &pair, Side::A, &selection(en.len(), &[1, 4])).unwrap(),
            expect(
                &mut lx,
                &format!("France <X> Morocco in <Y> exhibition match . [SEP] {ZH}"),
                "<X> beats <Y> an",
                Task::Cmlm,
                l_en,
            ),
        ),
        (
            "cmlm/zh",
            cmlm_from_selection(&sp, &pair, Side::B, &selection(zh.len(), &[0, 6])).unwrap(),
            expect(
                &mut lx,
                &format!("{EN} [SEP] <X> 队 在 一场 表演赛 中 <Y> 摩洛哥 队 。"),
                "<X> 法国 <Y> 击败",
                Task::Cmlm,
                l_zh,
            ),
        ),
        (
            "mt",
            make_mt(&pair, Direction::AToB).unwrap(),
            expect(&mut lx, EN, ZH, Task::Mt, l_zh),
        ),
    ];
    let wrong: Vec<&str> = rows.iter().filter(|(_, got, want)| got != want).map(|(n, _, _)| *n).collect();
    outcome(
        wrong.is_empty(),
        format!(
            "{}/6 rows exact{}",
            6 - wrong.len(),
            if wrong.is_empty() {
                String::new()
            } else {
                format!(", mismatched {wrong:?}")
            }
        ),
    )
}

// ---- 3 ---------------------------------------------------------------

fn gradient_oracle() -> Outcome {
    let specials = SpecialTokens::with_default_languages();
    let mut params = init_params(&tiny_config(50, 0.0), 11).unwrap();
    let batch = toy_batch(&specials);
    let (_, grads) = backward(&params, &batch, Mode::Eval).unwrap();
    let mut failures = 0;
    let (mut worst, mut max_abs) = (0.0f64, 0.0f64);
    for i in 0..params.len() {
        let numeric = central_diff(&mut params, i, GRAD_H, |p| eval_loss(p, &batch));
        let analytic = grads.values[i];
        if !grad_close(analytic, numeric, GRAD_REL_TOL) {
            failures += 1;
        }
        let diff = (analytic - numeric).abs();
        max_abs = max_abs.max(diff);
        if diff > 1e-9 {
            worst = worst.max(diff / analytic.abs().max(numeric.abs()));
        }
    }
    outcome(
        failures == 0,
        format!(
            "{} coordinates, {failures} outside {GRAD_REL_TOL:e} relative, max abs diff {max_abs:.2e}, worst relative above 1e-9 abs {worst:.2e}",
            params.len()
        ),
    )
}

// ---- 4 ---------------------------------------------------------------

/// Reference RAdam written directly from the published update rule, with
/// running β powers instead of exponentiation.
struct ReferenceRadam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    beta1_t: f64,
    beta2_t: f64,
    exp_avg: Vec<f64>,
    exp_avg_sq: Vec<f64>,
}

impl ReferenceRadam {
    fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            beta1_t: 1.0,
            beta2_t: 1.0,
            exp_avg: vec![0.0; n],
            exp_avg_sq: vec![0.0; n],
        }
    }

    /// Returns whether the variance-rectified branch was taken.
    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) -> bool {
        self.t += 1;
        self.beta1_t *= self.beta1;
        self.beta2_t *= self.beta2;
        let rho_inf = 2.0 / (1.0 - self.beta2) - 1.0;
        let rho = rho_inf - 2.0 * self.t as f64 * self.beta2_t / (1.0 - self.beta2_t);
        let rectify = rho > 4.0;
        for k in 0..theta.len() {
            self.exp_avg[k] = self.beta1 * self.exp_avg[k] + (1.0 - self.beta1) * grad[k];
            self.exp_avg_sq[k] = self.beta2 * self.exp_avg_sq[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let m_hat = self.exp_avg[k] / (1.0 - self.beta1_t);
            if rectify {
                let r = (((rho - 4.0) * (rho - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)).sqrt();
                let l = (1.0 - self.beta2_t).sqrt() / (self.exp_avg_sq[k].sqrt() + self.eps);
                theta[k] -= lr * r * m_hat * l;
            } else {
                theta[k] -= lr * m_hat;
            }
        }
        rectify
    }
}

fn radam_oracle() -> Outcome {
    // f(x, y) = 0.5 (3 (x - 1)^2 + 0.2 (y + 2)^2) with seeded gradient noise.
    let curv = [3.0, 0.2];
    let centre = [1.0, -2.0];
    let grad = |p: &[f64], noise: &[f64; 2]| -> Vec<f64> { (0..2).map(|k| curv[k] * (p[k] - centre[k]) + noise[k]).collect() };
    let schedule = ScheduleConfig {
        init_lr: 1e-3,
        peak_lr: 5e-2,
        warmup_steps: 10,
        decay_rate: 0.99,
    };
    let mut ours = vec![0.5, 0.5];
    let mut theirs = ours.clone();
    let mut state = OptimizerState::new(2);
    let mut reference = ReferenceRadam::new(2);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    let mut branch_mismatch = 0;
    let mut first_rectified = None;
    for step in 0..100u64 {
        let noise = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)];
        let lr = lr_at(&schedule, step);
        let (g_ours, g_theirs) = (grad(&ours, &noise), grad(&theirs, &noise));
        let info = radam_step(&mut ours, &g_ours, &mut state, lr).unwrap();
        let rectified = reference.step(&mut theirs, &g_theirs, lr);
        if info.rectified != rectified {
            branch_mismatch += 1;
        }
        if rectified && first_rectified.is_none() {
            first_rectified = Some(info.t);
        }
        for k in 0..2 {
            worst = worst.max((ours[k] - theirs[k]).abs());
        }
    }
    // rho_4 ≈ 3.99 and rho_5 ≈ 4.99 for beta2 = 0.999.
    let pass = worst <= RADAM_TOL && branch_mismatch == 0 && first_rectified == Some(5);
    outcome(
        pass,
        format!("max deviation {worst:.2e} (tol {RADAM_TOL:e}), branch mismatches {branch_mismatch}, first rectified step {first_rectified:?} (expected 5)"),
    )
}

// ---- 5 ---------------------------------------------------------------

fn schedule_anchors() -> Outcome {
    let s = ScheduleConfig::full_pretrain();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let start = rel(lr_at(&s, 0), 1e-9);
    let peak = rel(lr_at(&s, 16_000), 1e-3);
    // Decay branch extrapolated back one step to the boundary.
    let w = s.warmup_steps;
    let jump = (lr_at(&s, w + 1) / s.decay_rate - lr_at(&s, w)).abs();
    let pass = start <= SCHEDULE_TOL && peak <= SCHEDULE_TOL && jump <= SCHEDULE_TOL;
    outcome(
        pass,
        format!("lr(0) rel err {start:.1e}, lr(16000) rel err {peak:.1e}, boundary jump {jump:.1e} (tol {SCHEDULE_TOL:e})"),
    )
}

// ---- 6 ---------------------------------------------------------------

const TOY_VOCAB: usize = 5;
const TOY_EOS: TokenId = 0;
const TOY_PREFIX: [TokenId; 2] = [7, 8];

/// Next-token distribution that is an arbitrary seeded function of the
/// whole generated prefix.
struct RandomScorer {
    seed: u64,
}

impl StepScorer for RandomScorer {
    fn vocab_size(&self) -> usize {
        TOY_VOCAB
    }

    fn log_probs(&self, generated: &[TokenId]) -> mixsum::Result<Vec<f64>> {
        let key = generated.iter().fold(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15), |h, &t| {
            h.wrapping_mul(1_000_003).wrapping_add(t as u64 + 1)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let logits: Vec<f64> = (0..TOY_VOCAB).map(|_| rng.random_range(-3.0..3.0)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(logits.iter().map(|l| l - log_z).collect())
    }
}

/// Best complete output of at most `max_len` tokens by raw log-probability.
fn exhaustive_best(scorer: &RandomScorer, max_len: usize) -> (Vec<TokenId>, f64) {
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let mut frontier = vec![(Vec::<TokenId>::new(), 0.0)];
    for depth in 1..=max_len {
        let mut next = Vec::new();
        for (seq, lp) in &frontier {
            let lps = scorer.log_probs(seq).unwrap();
            for tok in 0..TOY_VOCAB as TokenId {
                let mut s = seq.clone();
                s.push(tok);
                let l = lp + lps[tok as usize];
                if tok == TOY_EOS || depth == max_len {
                    if l > best.1 {
                        best = (s, l);
                    }
                } else {
                    next.push((s, l));
                }
            }
        }
        frontier = next;
    }
    best
}

fn beam_oracle() -> Outcome {
    let allowed = vec![true; TOY_VOCAB];
    let max_len = 3;
    // Wide enough to keep every live prefix of length < max_len.
    let wide = BeamConfig {
        beam_size: (TOY_VOCAB - 1) * TOY_VOCAB,
        max_len,
        length_alpha: 0.0,
    };
    let narrow = BeamConfig { beam_size: 1, ..wide };
    let mut exhaustive_miss = 0;
    let mut greedy_miss = 0;
    for seed in 0..100 {
        let scorer = RandomScorer { seed };
        let (ids, lp) = exhaustive_best(&scorer, max_len);
        let top = &beam_search_with(&scorer, TOY_PREFIX, TOY_EOS, &allowed, &wide).unwrap()[0];
        if top.generated() != ids.as_slice() || (top.logprob - lp).abs() > BEAM_TOL {
            exhaustive_miss += 1;
        }
        let one = &beam_search_with(&scorer, TOY_PREFIX, TOY_EOS, &allowed, &narrow).unwrap()[0];
        let greedy = greedy_with(&scorer, TOY_PREFIX, TOY_EOS, &allowed, max_len, 0.0).unwrap();
        if one.ids != greedy.ids || (one.logprob - greedy.logprob).abs() > BEAM_TOL {
            greedy_miss += 1;
        }
    }
    outcome(
        exhaustive_miss == 0 && greedy_miss == 0,
        format!("100 seeds: {exhaustive_miss} differ from exhaustive argmax, {greedy_miss} beam=1 differ from greedy"),
    )
}

// ---- 7 ---------------------------------------------------------------

fn rouge_fixtures() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= ROUGE_TOL;
    let unigram = score_pair("the cat sat", "the cat", Script::Latin).rouge1;
    let lcs = score_pair("police the gunman", "police killed the gunman", Script::Latin).rouge_l;
    let same = score_pair("france beats morocco", "france beats morocco", Script::Latin);
    let disjoint = score_pair("alpha beta", "gamma delta", Script::Latin);
    let checks = [
        ("unigram P", close(unigram.precision, 2.0 / 3.0)),
        ("unigram R", close(unigram.recall, 1.0)),
        ("unigram F1", close(unigram.f1, 0.8)),
        ("lcs F1", close(lcs.f1, 6.0 / 7.0)),
        (
            "identity",
            [same.rouge1, same.rouge2, same.rouge_l]
                .iter()
                .all(|s| close(s.precision, 1.0) && close(s.recall, 1.0) && close(s.f1, 1.0)),
        ),
        (
            "disjoint",
            [disjoint.rouge1, disjoint.rouge2, disjoint.rouge_l]
                .iter()
                .all(|s| s.precision == 0.0 && s.recall == 0.0 && s.f1 == 0.0),
        ),
    ];
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    outcome(failed.is_empty(), format!("lcs F1 {:.6}; failed {failed:?}", lcs.f1))
}

// ---- 8 ---------------------------------------------------------------

/// Substitutes each sentinel in `src` with the span that follows the same
/// sentinel in `tgt`; `None` when the pair is not well formed.
fn uncorrupt(sp: &SpecialTokens, src: &[TokenId], tgt: &[TokenId]) -> Option<Vec<TokenId>> {
    let mut spans: Vec<(TokenId, Vec<TokenId>)> = Vec::new();
    for &t in tgt {
        if sp.is_sentinel(t) {
            spans.push((t, Vec::new()));
        } else {
            spans.last_mut()?.1.push(t);
        }
    }
    if spans.iter().any(|(_, s)| s.is_empty()) {
        return None;
    }
    let in_src: Vec<TokenId> = src.iter().copied().filter(|&t| sp.is_sentinel(t)).collect();
    let in_tgt: Vec<TokenId> = spans.iter().map(|(s, _)| *s).collect();
    let ascending = in_src.iter().enumerate().all(|(i, &s)| sp.sentinel(i) == Some(s));
    if in_src != in_tgt || !ascending {
        return None;
    }
    let lookup: HashMap<TokenId, Vec<TokenId>> = spans.into_iter().collect();
    Some(
        src.iter()
            .flat_map(|t| lookup.get(t).cloned().unwrap_or_else(|| vec![*t]))
            .collect(),
    )
}

fn random_sentence(rng: &mut ChaCha8Rng, sp: &SpecialTokens) -> Vec<TokenId> {
    let len = rng.random_range(1..=40);
    let base = sp.reserved_count() as TokenId;
    (0..len).map(|_| base + rng.random_range(0..300)).collect()
}

fn corruption_reconstruction() -> Outcome {
    const N: usize = 10_000;
    let sp = SpecialTokens::with_default_languages();
    let (en, zh) = (sp.lang_id("en").unwrap(), sp.lang_id("zh").unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mlm_bad = 0;
    let mut cmlm_bad = 0;
    let mut side_counts = [0usize; 2];
    for i in 0..N {
        let p = if i % 2 == 0 { 0.15 } else { rng.random_range(0.01..0.9) };
        let tokens = random_sentence(&mut rng, &sp);
        let ex = corrupt_mlm(&sp, &tokens, en, p, &mut rng).unwrap();
        if uncorrupt(&sp, &ex.src_ids, &ex.tgt_ids).as_deref() != Some(tokens.as_slice()) || ex.task != Task::Mlm {
            mlm_bad += 1;
        }

        let pair = ParallelPair {
            lang_a: en,
            lang_b: zh,
            sent_a: random_sentence(&mut rng, &sp),
            sent_b: random_sentence(&mut rng, &sp),
        };
        let ex = make_cmlm(&sp, &pair, p, &mut rng).unwrap();
        let sep: Vec<usize> = ex
            .src_ids
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == sp.separator_id)
            .map(|(k, _)| k)
            .collect();
        let ok = sep.len() == 1 && ex.task == Task::Cmlm && {
            let (a, b) = (&ex.src_ids[..sep[0]], &ex.src_ids[sep[0] + 1..]);
            let (masked, masked_orig, intact, intact_orig) = if ex.tgt_lang == en {
                side_counts[0] += 1;
                (a, &pair.sent_a, b, &pair.sent_b)
            } else {
                side_counts[1] += 1;
                (b, &pair.sent_b, a, &pair.sent_a)
            };
            intact == intact_orig.as_slice() && uncorrupt(&sp, masked, &ex.tgt_ids).as_deref() == Some(masked_orig.as_slice())
        };
        if !ok {
            cmlm_bad += 1;
        }
    }
    outcome(
        mlm_bad == 0 && cmlm_bad == 0 && side_counts.iter().all(|&c| c > 0),
        format!(
            "{N} mlm + {N} cmlm: {mlm_bad} + {cmlm_bad} violations; masked side en/zh = {}/{}",
            side_counts[0], side_counts[1]
        ),
    )
}

// ---- 9 ---------------------------------------------------------------

fn overfit() -> Outcome {
    let run = copy_task_run(500);
    let mean = |xs: &[mixsum::training::StepMetrics]| xs.iter().map(|m| m.loss).sum::<f64>() / xs.len() as f64;
    let first50 = mean(&run.log[..50]);
    let all = mean(&run.log);
    outcome(
        run.eval_loss < OVERFIT_LOSS && all < first50,
        format!(
            "eval loss {:.4} (< {OVERFIT_LOSS}) after 500 steps in {:.1}s; mean train loss {all:.3} over 500 vs {first50:.3} over first 50",
            run.eval_loss, run.secs
        ),
    )
}

// ---- 10 --------------------------------------------------------------

fn ablation_ordering(out: &Path) -> Outcome {
    let plan = load_plan("small.toml", out);
    let rows = run_ablation(&plan, &["full", "-all"]).unwrap();
    let r1 = |name: &str| {
        rows.iter()
            .find(|r| r.name == name)
            .and_then(|r| r.mean())
            .map(|m| m.rouge1.f1)
    };
    match (r1("full"), r1("-all")) {
        (Some(full), Some(none)) => outcome(
            full > none && plan.seeds.len() == 3,
            format!(
                "mean ROUGE-1 F1 over {} seeds: full {full:.4} vs no pretraining {none:.4}",
                plan.seeds.len()
            ),
        ),
        _ => outcome(false, "an ablation row failed"),
    }
}

// ---- 11 --------------------------------------------------------------

fn low_resource_ordering(out: &Path) -> Outcome {
    let plan = load_plan("small_curve.toml", out);
    let points = run_low_resource(&plan).unwrap();
    let smallest = points.iter().min_by_key(|p| p.size).unwrap();
    let largest = points.iter().max_by_key(|p| p.size).unwrap();
    match (smallest.gap(), largest.gap()) {
        (Some(gs), Some(gl)) => outcome(
            gs >= gl && plan.seeds.len() == 3 && smallest.size < largest.size,
            format!(
                "ROUGE-1 gap {gs:.4} at {} pairs vs {gl:.4} at {} pairs, {} seeds",
                smallest.size,
                largest.size,
                plan.seeds.len()
            ),
        ),
        _ => outcome(false, "a curve cell failed"),
    }
}

// ---- 12 --------------------------------------------------------------

fn determinism(out: &Path) -> Outcome {
    let mut plan = load_plan("small.toml", &out.join("a"));
    plan.seeds = vec![0];
    run_pipeline(&plan).unwrap();
    let first = plan.run_dir("pipeline", 0);
    plan.output_dir = out.join("b");
    run_pipeline(&plan).unwrap();
    let second = plan.run_dir("pipeline", 0);
    let files = [
        "scores.json",
        "scores.txt",
        "decoded.jsonl",
        "model.ckpt",
        "pretrain_metrics.jsonl",
        "finetune_metrics.jsonl",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(first.join(f)).unwrap() != std::fs::read(second.join(f)).unwrap())
        .collect();
    let manifests = verify_manifest(&first).is_ok() && verify_manifest(&second).is_ok();
    outcome(
        differing.is_empty() && manifests,
        format!(
            "{} files compared, differing {differing:?}, manifests verified {manifests}",
            files.len()
        ),
    )
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let results = [
        run(1, "parameter count", 1.0, parameter_count),
        run(2, "objective fixtures", 1.0, table_fixtures),
        run(3, "gradient oracle", 60.0, gradient_oracle),
        run(4, "radam oracle", 1.0, radam_oracle),
        run(5, "schedule anchors", 1.0, schedule_anchors),
        run(6, "beam oracle", 10.0, beam_oracle),
        run(7, "rouge fixtures", 1.0, rouge_fixtures),
        run(8, "corruption reconstruction", 30.0, corruption_reconstruction),
        run(9, "overfit", 120.0, overfit),
        run(10, "ablation ordering", 1800.0, || {
            ablation_ordering(&scratch.path().join("ablation"))
        }),
        run(11, "low-resource ordering", 2700.0, || {
            low_resource_ordering(&scratch.path().join("curve"))
        }),
        run(12, "determinism", 600.0, || determinism(&scratch.path().join("determinism"))),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
