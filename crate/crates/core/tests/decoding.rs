mod common;

use mixsum::decoding::{
    allowed_tokens, beam_search, beam_search_with, greedy_decode, write_generations, BeamConfig, GenerationRecord, StepScorer,
};
use mixsum::model::init_params;
use mixsum::vocab::{SpecialTokens, Task, TokenId};
use mixsum::Result;

/// Uniform over the non-eos tokens; eos is impossible.
struct NeverEos {
    vocab: usize,
}

impl StepScorer for NeverEos {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn log_probs(&self, _generated: &[TokenId]) -> Result<Vec<f64>> {
        let p = -((self.vocab - 1) as f64).ln();
        let mut lps = vec![p; self.vocab];
        lps[0] = f64::NEG_INFINITY;
        Ok(lps)
    }
}

#[test]
fn never_ending_hypotheses_stop_at_max_len() {
    let scorer = NeverEos { vocab: 4 };
    let cfg = BeamConfig {
        beam_size: 3,
        max_len: 200,
        length_alpha: 1.0,
    };
    let hyps = beam_search_with(&scorer, [7, 8], 0, &[true; 4], &cfg).unwrap();
    assert!(!hyps.is_empty());
    for h in &hyps {
        assert_eq!(h.generated().len(), 200);
        assert!(!h.finished);
        assert_eq!(&h.ids[..2], &[7, 8]);
    }
}

fn setup() -> (SpecialTokens, mixsum::model::ModelParams) {
    let specials = SpecialTokens::with_default_languages();
    let vocab = specials.reserved_count() + 30;
    (specials, init_params(&common::tiny_config(vocab, 0.0), 5).unwrap())
}

#[test]
fn real_model_hypotheses_respect_invariants() {
    let (sp, params) = setup();
    let n = sp.reserved_count() as TokenId;
    let src: Vec<TokenId> = (n..n + 10).collect();
    let (task, zh) = (sp.task_id(Task::Cls), sp.lang_id("zh").unwrap());
    let cfg = BeamConfig {
        beam_size: 4,
        max_len: 12,
        length_alpha: 1.0,
    };
    let allowed = allowed_tokens(&sp, params.config().vocab_size, Task::Cls);
    let hyps = beam_search(&params, &sp, &src, task, zh, &cfg).unwrap();
    assert!(!hyps.is_empty() && hyps.len() <= cfg.beam_size);
    for h in &hyps {
        assert_eq!(&h.ids[..2], &[task, zh]);
        assert!(h.logprob <= 0.0);
        assert!(h.generated().len() <= cfg.max_len);
        assert_eq!(h.finished, h.generated().last() == Some(&sp.eos_id));
        assert!(h.output().iter().all(|&t| allowed[t as usize] && t != sp.eos_id));
        assert!(h.output().iter().all(|&t| !sp.is_sentinel(t)));
    }
    assert!(hyps.windows(2).all(|w| w[0].score >= w[1].score));
    assert_eq!(hyps, beam_search(&params, &sp, &src, task, zh, &cfg).unwrap());
}

#[test]
fn beam_of_one_is_greedy_on_the_model() {
    let (sp, params) = setup();
    let n = sp.reserved_count() as TokenId;
    let src: Vec<TokenId> = (n + 3..n + 9).collect();
    let (task, en) = (sp.task_id(Task::Ms), sp.lang_id("en").unwrap());
    let cfg = BeamConfig {
        beam_size: 1,
        max_len: 10,
        length_alpha: 1.0,
    };
    let beam = beam_search(&params, &sp, &src, task, en, &cfg).unwrap();
    let greedy = greedy_decode(&params, &sp, &src, task, en, 10).unwrap();
    assert_eq!(beam[0].ids, greedy.ids);
    assert!((beam[0].logprob - greedy.logprob).abs() < 1e-12);
}

#[test]
fn unregistered_controls_are_rejected() {
    let (sp, params) = setup();
    let src = vec![sp.reserved_count() as TokenId];
    let zh = sp.lang_id("zh").unwrap();
    let cfg = BeamConfig::default();
    assert!(beam_search(&params, &sp, &src, sp.eos_id, zh, &cfg).is_err());
    assert!(beam_search(&params, &sp, &src, sp.task_id(Task::Cls), sp.task_id(Task::Mt), &cfg).is_err());
}

#[test]
fn generations_are_one_json_object_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.jsonl");
    let records = vec![
        GenerationRecord {
            id: "t0".into(),
            text: "法国队".into(),
            score: -0.5,
        },
        GenerationRecord {
            id: "t1".into(),
            text: String::new(),
            score: -1.25,
        },
    ];
    write_generations(&path, &records).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let back: Vec<GenerationRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, records);
    assert!(text.ends_with('\n'));
}
