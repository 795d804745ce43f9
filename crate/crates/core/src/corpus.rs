//! Line-delimited corpus records, deterministic subsampling and the
//! synthetic bilingual corpus generator.
//!
//! Every line is one JSON object with a `format_version`, a `kind` and an
//! `id`:
//!
//! ```text
//! {"format_version":1,"id":"m0","kind":"mono","lang":"xa","text":"..."}
//! {"format_version":1,"id":"p0","kind":"parallel","lang_a":"xa","lang_b":"xb","text_a":"...","text_b":"..."}
//! {"format_version":1,"id":"s0","kind":"summ","doc_lang":"xa","summ_lang":"xb","doc":"...","summary":"..."}
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Mono,
    Parallel,
    Summ,
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordKind::Mono => "mono",
            RecordKind::Parallel => "parallel",
            RecordKind::Summ => "summ",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RecordBody {
    Mono {
        lang: String,
        text: String,
    },
    Parallel {
        lang_a: String,
        lang_b: String,
        text_a: String,
        text_b: String,
    },
    Summ {
        doc_lang: String,
        summ_lang: String,
        doc: String,
        summary: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub format_version: u32,
    pub id: String,
    #[serde(flatten)]
    pub body: RecordBody,
}

impl CorpusRecord {
    pub fn new(id: impl Into<String>, body: RecordBody) -> Self {
        Self {
            format_version: CORPUS_FORMAT_VERSION,
            id: id.into(),
            body,
        }
    }

    pub fn kind(&self) -> RecordKind {
        match self.body {
            RecordBody::Mono { .. } => RecordKind::Mono,
            RecordBody::Parallel { .. } => RecordKind::Parallel,
            RecordBody::Summ { .. } => RecordKind::Summ,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.format_version != CORPUS_FORMAT_VERSION {
            return Err(format!(
                "format_version {} (expected {CORPUS_FORMAT_VERSION})",
                self.format_version
            ));
        }
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        let nonempty = |name: &str, s: &str| {
            if s.trim().is_empty() {
                Err(format!("field `{name}` is empty"))
            } else {
                Ok(())
            }
        };
        match &self.body {
            RecordBody::Mono { lang, text } => {
                nonempty("lang", lang)?;
                nonempty("text", text)
            }
            RecordBody::Parallel {
                lang_a,
                lang_b,
                text_a,
                text_b,
            } => {
                nonempty("lang_a", lang_a)?;
                nonempty("lang_b", lang_b)?;
                nonempty("text_a", text_a)?;
                nonempty("text_b", text_b)?;
                if lang_a == lang_b {
                    return Err("parallel languages must differ".into());
                }
                Ok(())
            }
            RecordBody::Summ {
                doc_lang,
                summ_lang,
                doc,
                summary,
            } => {
                nonempty("doc_lang", doc_lang)?;
                nonempty("summ_lang", summ_lang)?;
                nonempty("doc", doc)?;
                nonempty("summary", summary)
            }
        }
    }
}

/// A skipped line in non-strict loading.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

/// Streaming reader over one corpus file. Blank lines are skipped.
pub struct CorpusReader<R> {
    path: PathBuf,
    lines: std::io::Lines<R>,
    line_no: usize,
    expected: Option<RecordKind>,
}

impl CorpusReader<BufReader<std::fs::File>> {
    pub fn open(path: impl AsRef<Path>, expected: Option<RecordKind>) -> Result<Self> {
        let path = path.as_ref();
        Ok(Self::new(BufReader::new(std::fs::File::open(path)?), path, expected))
    }
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R, path: impl Into<PathBuf>, expected: Option<RecordKind>) -> Self {
        Self {
            path: path.into(),
            lines: reader.lines(),
            line_no: 0,
            expected,
        }
    }

    fn parse(&self, line: &str) -> std::result::Result<CorpusRecord, String> {
        let rec: CorpusRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if let Some(k) = self.expected {
            if rec.kind() != k {
                return Err(format!("record kind `{}` where `{k}` was declared", rec.kind()));
            }
        }
        rec.validate()?;
        Ok(rec)
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<CorpusRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&line).map_err(|message| Error::CorpusParse {
                path: self.path.display().to_string(),
                line: self.line_no,
                message,
            }));
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadedCorpus {
    pub records: Vec<CorpusRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Reads a whole file. In strict mode the first bad line is an error;
/// otherwise bad lines are skipped and reported.
pub fn load_corpus(path: impl AsRef<Path>, expected: Option<RecordKind>, strict: bool) -> Result<LoadedCorpus> {
    let mut out = LoadedCorpus::default();
    for item in CorpusReader::open(path, expected)? {
        match item {
            Ok(r) => out.records.push(r),
            Err(Error::CorpusParse { line, message, .. }) if !strict => {
                log::warn!("skipping line {line}: {message}");
                out.diagnostics.push(Diagnostic { line, message });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn write_records(path: impl AsRef<Path>, records: &[CorpusRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Uniform sample of `n` items without replacement, kept in input order.
pub fn subsample<T: Clone>(records: &[T], n: usize, seed: u64) -> Result<Vec<T>> {
    if n > records.len() {
        return Err(Error::SubsampleTooLarge { n, len: records.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, records.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| records[i].clone()).collect())
}

const LATIN_UNITS: &str = "abcdefghijklmnopqrstuvwxyz";
const CJK_BASE: u32 = 0x4E00;

/// Parameters of the synthetic bilingual corpus.
///
/// Language A sentences are space-separated lowercase letters; language B
/// writes the image of each letter under a seeded bijection as one
/// ideograph, without spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub lang_a: String,
    pub lang_b: String,
    /// Number of distinct units per language (at most 26).
    pub alphabet_size: usize,
    pub bijection_seed: u64,
    /// Sentence and document lengths are uniform on `[min_len, max_len]`.
    pub min_len: usize,
    pub max_len: usize,
    pub lead_k: usize,
    pub mono_size: usize,
    pub parallel_size: usize,
    /// Monolingual summarization pairs per language.
    pub summ_size: usize,
    pub cls_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            lang_a: "xa".into(),
            lang_b: "xb".into(),
            alphabet_size: 20,
            bijection_seed: 7,
            min_len: 6,
            max_len: 12,
            lead_k: 3,
            mono_size: 2000,
            parallel_size: 2000,
            summ_size: 1000,
            cls_size: 1200,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synthetic spec: {m}")));
        if self.alphabet_size == 0 || self.alphabet_size > LATIN_UNITS.len() {
            return bad("alphabet_size must be in 1..=26");
        }
        if self.lead_k == 0 || self.min_len == 0 || self.min_len > self.max_len || self.lead_k > self.min_len {
            return bad("need 1 <= lead_k <= min_len <= max_len");
        }
        if [self.mono_size, self.parallel_size, self.summ_size, self.cls_size].contains(&0) {
            return bad("corpus sizes must be at least 1");
        }
        if self.lang_a == self.lang_b {
            return bad("languages must differ");
        }
        Ok(())
    }
}

/// The rules the synthetic corpus was generated with.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    pub lang_a: String,
    pub lang_b: String,
    pub lead_k: usize,
    /// Language-A unit to language-B unit.
    pub bijection: BTreeMap<char, char>,
}

impl SyntheticOracle {
    pub fn units(&self, text: &str, lang: &str) -> Vec<char> {
        if lang == self.lang_a {
            text.split_whitespace().flat_map(str::chars).collect()
        } else {
            text.chars().filter(|c| !c.is_whitespace()).collect()
        }
    }

    pub fn render(&self, units: &[char], lang: &str) -> String {
        if lang == self.lang_a {
            units.iter().map(char::to_string).collect::<Vec<_>>().join(" ")
        } else {
            units.iter().collect()
        }
    }

    /// Maps a language-A sentence to language B; `None` on a foreign unit.
    pub fn translate(&self, text_a: &str) -> Option<String> {
        let units: Option<Vec<char>> = self
            .units(text_a, &self.lang_a)
            .iter()
            .map(|c| self.bijection.get(c).copied())
            .collect();
        Some(self.render(&units?, &self.lang_b))
    }

    pub fn lead(&self, text: &str, lang: &str) -> String {
        let u = self.units(text, lang);
        self.render(&u[..self.lead_k.min(u.len())], lang)
    }

    /// The reference cross-lingual summary of a language-A document.
    pub fn cls_summary(&self, doc_a: &str) -> Option<String> {
        self.translate(&self.lead(doc_a, &self.lang_a))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticBundle {
    pub mono_a: Vec<CorpusRecord>,
    pub mono_b: Vec<CorpusRecord>,
    pub parallel: Vec<CorpusRecord>,
    /// Monolingual summarization in both languages.
    pub summ: Vec<CorpusRecord>,
    /// Language-A documents with language-B summaries.
    pub cls: Vec<CorpusRecord>,
    pub oracle: SyntheticOracle,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticBundle> {
    spec.validate()?;
    let alphabet: Vec<char> = LATIN_UNITS.chars().take(spec.alphabet_size).collect();
    let mut image: Vec<char> = (0..spec.alphabet_size as u32)
        .map(|i| char::from_u32(CJK_BASE + i).expect("CJK block"))
        .collect();
    image.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.bijection_seed));
    let oracle = SyntheticOracle {
        lang_a: spec.lang_a.clone(),
        lang_b: spec.lang_b.clone(),
        lead_k: spec.lead_k,
        bijection: alphabet.iter().copied().zip(image).collect(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sentence = |rng: &mut ChaCha8Rng| -> Vec<char> {
        let len = rng.random_range(spec.min_len..=spec.max_len);
        (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
    };
    let (a, b) = (spec.lang_a.as_str(), spec.lang_b.as_str());
    let to_b = |u: &[char]| -> Vec<char> { u.iter().map(|c| oracle.bijection[c]).collect() };

    let mono = |rng: &mut ChaCha8Rng, sentence: &mut dyn FnMut(&mut ChaCha8Rng) -> Vec<char>, lang: &str, tag: &str| {
        (0..spec.mono_size)
            .map(|i| {
                let u = sentence(rng);
                let u = if lang == a { u } else { to_b(&u) };
                CorpusRecord::new(
                    format!("{tag}{i}"),
                    RecordBody::Mono {
                        lang: lang.into(),
                        text: oracle.render(&u, lang),
                    },
                )
            })
            .collect::<Vec<_>>()
    };
    let mono_a = mono(&mut rng, &mut sentence, a, "ma");
    let mono_b = mono(&mut rng, &mut sentence, b, "mb");

    let parallel = (0..spec.parallel_size)
        .map(|i| {
            let u = sentence(&mut rng);
            CorpusRecord::new(
                format!("p{i}"),
                RecordBody::Parallel {
                    lang_a: a.into(),
                    lang_b: b.into(),
                    text_a: oracle.render(&u, a),
                    text_b: oracle.render(&to_b(&u), b),
                },
            )
        })
        .collect();

    let mut summ = Vec::with_capacity(2 * spec.summ_size);
    for (lang, tag) in [(a, "sa"), (b, "sb")] {
        for i in 0..spec.summ_size {
            let u = sentence(&mut rng);
            let u = if lang == a { u } else { to_b(&u) };
            summ.push(CorpusRecord::new(
                format!("{tag}{i}"),
                RecordBody::Summ {
                    doc_lang: lang.into(),
                    summ_lang: lang.into(),
                    doc: oracle.render(&u, lang),
                    summary: oracle.render(&u[..spec.lead_k], lang),
                },
            ));
        }
    }

    let cls = (0..spec.cls_size)
        .map(|i| {
            let u = sentence(&mut rng);
            CorpusRecord::new(
                format!("c{i}"),
                RecordBody::Summ {
                    doc_lang: a.into(),
                    summ_lang: b.into(),
                    doc: oracle.render(&u, a),
                    summary: oracle.render(&to_b(&u[..spec.lead_k]), b),
                },
            )
        })
        .collect();

    Ok(SyntheticBundle {
        mono_a,
        mono_b,
        parallel,
        summ,
        cls,
        oracle,
    })
}

/// File names used by [`write_bundle`].
pub const BUNDLE_FILES: [&str; 6] = [
    "mono_a.jsonl",
    "mono_b.jsonl",
    "parallel.jsonl",
    "summ.jsonl",
    "cls.jsonl",
    "oracle.json",
];

pub fn write_bundle(dir: impl AsRef<Path>, bundle: &SyntheticBundle) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_records(dir.join(BUNDLE_FILES[0]), &bundle.mono_a)?;
    write_records(dir.join(BUNDLE_FILES[1]), &bundle.mono_b)?;
    write_records(dir.join(BUNDLE_FILES[2]), &bundle.parallel)?;
    write_records(dir.join(BUNDLE_FILES[3]), &bundle.summ)?;
    write_records(dir.join(BUNDLE_FILES[4]), &bundle.cls)?;
    std::fs::write(dir.join(BUNDLE_FILES[5]), serde_json::to_string_pretty(&bundle.oracle)?)?;
    Ok(())
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<SyntheticBundle> {
    let dir = dir.as_ref();
    let load = |name: &str, kind| load_corpus(dir.join(name), Some(kind), true).map(|c| c.records);
    Ok(SyntheticBundle {
        mono_a: load(BUNDLE_FILES[0], RecordKind::Mono)?,
        mono_b: load(BUNDLE_FILES[1], RecordKind::Mono)?,
        parallel: load(BUNDLE_FILES[2], RecordKind::Parallel)?,
        summ: load(BUNDLE_FILES[3], RecordKind::Summ)?,
        cls: load(BUNDLE_FILES[4], RecordKind::Summ)?,
        oracle: serde_json::from_str(&std::fs::read_to_string(dir.join(BUNDLE_FILES[5]))?)?,
    })
}
