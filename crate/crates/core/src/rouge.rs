//! ROUGE-1, ROUGE-2 and ROUGE-L with script-aware unit splitting.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How text is split into evaluation units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Script {
    /// Lowercased alphanumeric runs.
    Latin,
    /// One unit per ideograph; other runs follow the Latin rule.
    Cjk,
}

const CJK_LANGS: &[&str] = &["zh", "ja", "xb"];

impl Script {
    pub fn for_lang(code: &str) -> Self {
        if CJK_LANGS.contains(&code) {
            Script::Cjk
        } else {
            Script::Latin
        }
    }
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FA1F)
}

pub fn normalize(text: &str, script: Script) -> Vec<String> {
    let mut units = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, units: &mut Vec<String>| {
        if !word.is_empty() {
            units.push(std::mem::take(word));
        }
    };
    for c in text.chars() {
        if script == Script::Cjk && is_cjk(c) {
            flush(&mut word, &mut units);
            units.push(c.to_string());
        } else if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else {
            flush(&mut word, &mut units);
        }
    }
    flush(&mut word, &mut units);
    units
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, cand: usize, reference: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(overlap, cand);
        let recall = ratio(overlap, reference);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

fn ngram_counts<T: AsRef<str>>(units: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if units.len() >= n {
        for w in units.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap. `n` must be at least 1.
pub fn rouge_n<T: AsRef<str>>(cand: &[T], reference: &[T], n: usize) -> RougeScore {
    assert!(n >= 1, "rouge_n needs n >= 1");
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let overlap = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    let total = |m: &HashMap<Vec<&str>, usize>| m.values().sum::<usize>();
    RougeScore::from_counts(overlap, total(&c), total(&r))
}

pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: AsRef<str>>(cand: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(lcs_len(cand, reference), cand.len(), reference.len())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeTriple {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
}

pub fn score_pair(cand: &str, reference: &str, script: Script) -> RougeTriple {
    let c = normalize(cand, script);
    let r = normalize(reference, script);
    RougeTriple {
        rouge1: rouge_n(&c, &r, 1),
        rouge2: rouge_n(&c, &r, 2),
        rouge_l: rouge_l(&c, &r),
    }
}

/// Arithmetic mean of per-pair scores for each variant.
pub fn corpus_rouge<C: AsRef<str>, R: AsRef<str>>(pairs: &[(C, R)], script: Script) -> Result<RougeTriple> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("corpus_rouge needs at least one pair".into()));
    }
    let mut sum = [[0.0; 3]; 3];
    for (c, r) in pairs {
        let t = score_pair(c.as_ref(), r.as_ref(), script);
        for (acc, s) in sum.iter_mut().zip([t.rouge1, t.rouge2, t.rouge_l]) {
            acc[0] += s.precision;
            acc[1] += s.recall;
            acc[2] += s.f1;
        }
    }
    let n = pairs.len() as f64;
    let mean = |a: [f64; 3]| RougeScore {
        precision: a[0] / n,
        recall: a[1] / n,
        f1: a[2] / n,
    };
    Ok(RougeTriple {
        rouge1: mean(sum[0]),
        rouge2: mean(sum[1]),
        rouge_l: mean(sum[2]),
    })
}

/// Plain-text report, one variant per line, four decimals.
pub fn format_report(scores: &RougeTriple) -> String {
    let mut out = String::from("variant\tprecision\trecall\tf1\n");
    for (name, s) in [
        ("rouge-1", scores.rouge1),
        ("rouge-2", scores.rouge2),
        ("rouge-l", scores.rouge_l),
    ] {
        writeln!(out, "{name}\t{:.4}\t{:.4}\t{:.4}", s.precision, s.recall, s.f1).expect("string write");
    }
    out
}
