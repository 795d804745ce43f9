//! Shared multilingual subword vocabulary and the reserved special-token block.
//!
//! Id layout, lowest first:
//!
//! ```text
//! <pad> <unk> <bos> <eos> <sep> <M>
//! <mlm> <dae> <ms> <cmlm> <mt> <cls>
//! <lang>...                       one per registered language code
//! <extra_0> ... <extra_99>        sentinels
//! <0x00> ... <0xFF>               byte-fallback pieces
//! learned pieces                  characters first, then merged pieces
//! ```
//!
//! Segmentation is a character-level pair-merge (BPE-style) model with byte
//! fallback for characters outside the learned alphabet, so every string
//! round-trips through `encode`/`decode` byte-exactly.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const SENTINEL_COUNT: usize = 100;
pub const BYTE_PIECES: usize = 256;
pub const VOCAB_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_LANGUAGES: [&str; 4] = ["en", "zh", "xa", "xb"];

const FIXED_SPECIALS: [&str; 6] = ["<pad>", "<unk>", "<bos>", "<eos>", "<sep>", "<M>"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mlm,
    Dae,
    Ms,
    Cmlm,
    Mt,
    Cls,
}

impl Task {
    pub const ALL: [Task; 6] = [Task::Mlm, Task::Dae, Task::Ms, Task::Cmlm, Task::Mt, Task::Cls];
    pub const PRETRAINING: [Task; 5] = [Task::Mlm, Task::Dae, Task::Ms, Task::Cmlm, Task::Mt];

    pub fn name(self) -> &'static str {
        match self {
            Task::Mlm => "mlm",
            Task::Dae => "dae",
            Task::Ms => "ms",
            Task::Cmlm => "cmlm",
            Task::Mt => "mt",
            Task::Cls => "cls",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether sentinels are legal in this task's targets.
    pub fn uses_sentinels(self) -> bool {
        matches!(self, Task::Mlm | Task::Cmlm)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown task `{s}`")))
    }
}

/// Registry of reserved ids. Everything below `byte_base` is a special.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecialTokens {
    pub pad_id: TokenId,
    pub unk_id: TokenId,
    pub bos_id: TokenId,
    pub eos_id: TokenId,
    pub separator_id: TokenId,
    pub shared_mask_id: TokenId,
    task_base: TokenId,
    languages: Vec<String>,
    lang_base: TokenId,
    sentinel_base: TokenId,
    byte_base: TokenId,
}

impl SpecialTokens {
    pub fn new<S: AsRef<str>>(languages: &[S]) -> Result<Self> {
        let mut langs: Vec<String> = Vec::with_capacity(languages.len());
        for code in languages {
            let code = code.as_ref();
            if code.is_empty() || code.contains(|c: char| c.is_whitespace() || c == ',') {
                return Err(Error::InvalidConfig(format!("bad language code `{code}`")));
            }
            if langs.iter().any(|l| l == code) {
                return Err(Error::DuplicateLanguage(code.to_string()));
            }
            langs.push(code.to_string());
        }
        let task_base = FIXED_SPECIALS.len() as TokenId;
        let lang_base = task_base + Task::ALL.len() as TokenId;
        let sentinel_base = lang_base + langs.len() as TokenId;
        let byte_base = sentinel_base + SENTINEL_COUNT as TokenId;
        Ok(Self {
            pad_id: 0,
            unk_id: 1,
            bos_id: 2,
            eos_id: 3,
            separator_id: 4,
            shared_mask_id: 5,
            task_base,
            languages: langs,
            lang_base,
            sentinel_base,
            byte_base,
        })
    }

    pub fn with_default_languages() -> Self {
        Self::new(&DEFAULT_LANGUAGES).expect("default language list is valid")
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn task_id(&self, task: Task) -> TokenId {
        self.task_base + task.index() as TokenId
    }

    pub fn task_of(&self, id: TokenId) -> Option<Task> {
        id.checked_sub(self.task_base)
            .and_then(|i| Task::ALL.get(i as usize).copied())
    }

    pub fn lang_id(&self, code: &str) -> Result<TokenId> {
        self.languages
            .iter()
            .position(|l| l == code)
            .map(|i| self.lang_base + i as TokenId)
            .ok_or_else(|| Error::UnknownLanguage(code.to_string()))
    }

    pub fn lang_code(&self, id: TokenId) -> Option<&str> {
        id.checked_sub(self.lang_base)
            .and_then(|i| self.languages.get(i as usize))
            .map(String::as_str)
    }

    pub fn is_lang(&self, id: TokenId) -> bool {
        self.lang_code(id).is_some()
    }

    pub fn sentinel(&self, index: usize) -> Option<TokenId> {
        (index < SENTINEL_COUNT).then(|| self.sentinel_base + index as TokenId)
    }

    pub fn sentinel_ids(&self) -> Vec<TokenId> {
        (0..SENTINEL_COUNT as TokenId).map(|i| self.sentinel_base + i).collect()
    }

    pub fn sentinel_index(&self, id: TokenId) -> Option<usize> {
        (id >= self.sentinel_base && id < self.byte_base).then(|| (id - self.sentinel_base) as usize)
    }

    pub fn is_sentinel(&self, id: TokenId) -> bool {
        self.sentinel_index(id).is_some()
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id < self.byte_base
    }

    /// Number of named special tokens.
    pub fn special_count(&self) -> usize {
        self.byte_base as usize
    }

    /// Specials plus byte-fallback pieces; learned ids start here.
    pub fn reserved_count(&self) -> usize {
        self.byte_base as usize + BYTE_PIECES
    }

    pub fn byte_id(&self, byte: u8) -> TokenId {
        self.byte_base + byte as TokenId
    }

    pub fn byte_of(&self, id: TokenId) -> Option<u8> {
        (id >= self.byte_base && id < self.byte_base + BYTE_PIECES as TokenId).then(|| (id - self.byte_base) as u8)
    }

    /// Bracketed canonical name of a special id.
    pub fn name(&self, id: TokenId) -> Option<String> {
        if (id as usize) < FIXED_SPECIALS.len() {
            return Some(FIXED_SPECIALS[id as usize].to_string());
        }
        if let Some(task) = self.task_of(id) {
            return Some(format!("<{task}>"));
        }
        if let Some(code) = self.lang_code(id) {
            return Some(format!("<{code}>"));
        }
        self.sentinel_index(id).map(|i| format!("<extra_{i}>"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum PieceKind {
    Char,
    Merged,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Piece {
    text: String,
    kind: PieceKind,
}

/// One language's share of the vocabulary training corpus.
#[derive(Clone, Debug)]
pub struct LanguageLines {
    pub lang: String,
    pub lines: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct VocabTrainConfig {
    pub target_size: usize,
    pub seed: u64,
    pub byte_fallback: bool,
}

impl VocabTrainConfig {
    pub fn new(target_size: usize) -> Self {
        Self {
            target_size,
            seed: 0,
            byte_fallback: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    specials: SpecialTokens,
    pieces: Vec<Piece>,
    /// (left, right, result) in rank order.
    merges: Vec<(TokenId, TokenId, TokenId)>,
    byte_fallback: bool,
    char_ids: HashMap<char, TokenId>,
    merge_ranks: HashMap<(TokenId, TokenId), (usize, TokenId)>,
}

#[derive(Serialize, Deserialize)]
struct VocabHeader {
    size: usize,
    reserved: usize,
    languages: Vec<String>,
    sentinels: usize,
    byte_fallback: bool,
    pieces: usize,
    merges: usize,
}

/// Splits text so that each whitespace run starts a new chunk together with
/// the word following it. Concatenating the chunks reproduces the input.
pub(crate) fn chunks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev_ws = true;
    for (i, c) in text.char_indices() {
        let ws = c.is_whitespace();
        if ws && !prev_ws && i > start {
            out.push(&text[start..i]);
            start = i;
        }
        prev_ws = ws;
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

fn apply_merge(word: &[TokenId], left: TokenId, right: TokenId, result: TokenId) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == left && word[i + 1] == right {
            out.push(result);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    out
}

/// Trains a vocabulary over a language-balanced sample of `corpus`.
///
/// Each language contributes the same number of lines (the smallest
/// language's count, sampled without replacement). If the corpus runs out of
/// mergeable pairs before `target_size` is reached, the returned vocabulary is
/// smaller and a warning is logged.
pub fn train_vocab(corpus: &[LanguageLines], specials: SpecialTokens, config: &VocabTrainConfig) -> Result<Vocabulary> {
    let reserved = specials.reserved_count();
    if config.target_size <= reserved {
        return Err(Error::VocabTooSmall {
            target: config.target_size,
            reserved,
        });
    }
    let per_lang = corpus.iter().map(|l| l.lines.len()).min().unwrap_or(0);
    if per_lang == 0 || corpus.iter().all(|l| l.lines.iter().all(String::is_empty)) {
        return Err(Error::EmptyCorpus);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut chunk_counts: HashMap<&str, u64> = HashMap::new();
    for lang in corpus {
        let mut picked = if per_lang == lang.lines.len() {
            (0..per_lang).collect::<Vec<_>>()
        } else {
            rand::seq::index::sample(&mut rng, lang.lines.len(), per_lang).into_vec()
        };
        picked.sort_unstable();
        for i in picked {
            for chunk in chunks(&lang.lines[i]) {
                *chunk_counts.entry(chunk).or_default() += 1;
            }
        }
    }

    let budget = config.target_size - reserved;
    let mut char_counts: HashMap<char, u64> = HashMap::new();
    for (chunk, n) in &chunk_counts {
        for c in chunk.chars() {
            *char_counts.entry(c).or_default() += n;
        }
    }
    let mut alphabet: Vec<(char, u64)> = char_counts.into_iter().collect();
    alphabet.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    alphabet.truncate(budget);

    let mut pieces: Vec<Piece> = Vec::with_capacity(budget);
    let mut char_ids = HashMap::new();
    let mut piece_index: HashMap<String, TokenId> = HashMap::new();
    for (c, _) in &alphabet {
        let id = (reserved + pieces.len()) as TokenId;
        char_ids.insert(*c, id);
        piece_index.insert(c.to_string(), id);
        pieces.push(Piece {
            text: c.to_string(),
            kind: PieceKind::Char,
        });
    }

    // Unique words as symbol sequences, in a deterministic order.
    let mut sorted_chunks: Vec<(&str, u64)> = chunk_counts.into_iter().collect();
    sorted_chunks.sort_unstable();
    let mut words: Vec<Vec<TokenId>> = Vec::with_capacity(sorted_chunks.len());
    let mut counts: Vec<i64> = Vec::with_capacity(sorted_chunks.len());
    for (chunk, n) in &sorted_chunks {
        let mut w = Vec::with_capacity(chunk.len());
        for c in chunk.chars() {
            match char_ids.get(&c) {
                Some(&id) => w.push(id),
                None => {
                    let mut buf = [0u8; 4];
                    w.extend(c.encode_utf8(&mut buf).bytes().map(|b| specials.byte_id(b)));
                }
            }
        }
        words.push(w);
        counts.push(*n as i64);
    }

    let learned = |id: TokenId| id as usize >= reserved;
    let mut pair_counts: HashMap<(TokenId, TokenId), i64> = HashMap::new();
    let mut pair_words: HashMap<(TokenId, TokenId), HashSet<usize>> = HashMap::new();
    for (wi, w) in words.iter().enumerate() {
        for p in w.windows(2) {
            if learned(p[0]) && learned(p[1]) {
                *pair_counts.entry((p[0], p[1])).or_default() += counts[wi];
                pair_words.entry((p[0], p[1])).or_default().insert(wi);
            }
        }
    }
    let mut heap: BinaryHeap<(i64, Reverse<(TokenId, TokenId)>)> = pair_counts.iter().map(|(&p, &n)| (n, Reverse(p))).collect();

    let mut merges = Vec::new();
    while pieces.len() < budget {
        let Some((count, Reverse(pair))) = heap.pop() else {
            break;
        };
        if count <= 0 || pair_counts.get(&pair).copied() != Some(count) {
            continue;
        }
        let text = format!(
            "{}{}",
            pieces[pair.0 as usize - reserved].text,
            pieces[pair.1 as usize - reserved].text
        );
        let result = match piece_index.get(&text) {
            Some(&id) => id,
            None => {
                let id = (reserved + pieces.len()) as TokenId;
                piece_index.insert(text.clone(), id);
                pieces.push(Piece {
                    text,
                    kind: PieceKind::Merged,
                });
                id
            }
        };
        merges.push((pair.0, pair.1, result));

        let affected: Vec<usize> = {
            let mut v: Vec<usize> = pair_words.remove(&pair).unwrap_or_default().into_iter().collect();
            v.sort_unstable();
            v
        };
        let mut touched: HashSet<(TokenId, TokenId)> = HashSet::new();
        for wi in affected {
            let merged = apply_merge(&words[wi], pair.0, pair.1, result);
            if merged.len() == words[wi].len() {
                continue;
            }
            for p in words[wi].windows(2) {
                if learned(p[0]) && learned(p[1]) {
                    *pair_counts.entry((p[0], p[1])).or_default() -= counts[wi];
                    touched.insert((p[0], p[1]));
                }
            }
            for p in merged.windows(2) {
                if learned(p[0]) && learned(p[1]) {
                    *pair_counts.entry((p[0], p[1])).or_default() += counts[wi];
                    pair_words.entry((p[0], p[1])).or_default().insert(wi);
                    touched.insert((p[0], p[1]));
                }
            }
            words[wi] = merged;
        }
        pair_counts.remove(&pair);
        let mut touched: Vec<_> = touched.into_iter().filter(|p| *p != pair).collect();
        touched.sort_unstable();
        for p in touched {
            let n = pair_counts.get(&p).copied().unwrap_or(0);
            if n > 0 {
                heap.push((n, Reverse(p)));
            } else {
                pair_counts.remove(&p);
            }
        }
    }

    if pieces.len() < budget {
        log::warn!(
            "vocabulary training exhausted the corpus at {} of {} requested entries",
            reserved + pieces.len(),
            config.target_size
        );
    }

    Ok(Vocabulary::assemble(specials, pieces, merges, config.byte_fallback))
}

impl Vocabulary {
    fn assemble(
        specials: SpecialTokens,
        pieces: Vec<Piece>,
        merges: Vec<(TokenId, TokenId, TokenId)>,
        byte_fallback: bool,
    ) -> Self {
        let reserved = specials.reserved_count();
        let char_ids = pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| p.kind == PieceKind::Char)
            .filter_map(|(i, p)| p.text.chars().next().map(|c| (c, (reserved + i) as TokenId)))
            .collect();
        let merge_ranks = merges
            .iter()
            .enumerate()
            .map(|(rank, &(l, r, res))| ((l, r), (rank, res)))
            .collect();
        Self {
            specials,
            pieces,
            merges,
            byte_fallback,
            char_ids,
            merge_ranks,
        }
    }

    pub fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    pub fn size(&self) -> usize {
        self.specials.reserved_count() + self.pieces.len()
    }

    pub fn learned_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn merge_count(&self) -> usize {
        self.merges.len()
    }

    pub fn byte_fallback(&self) -> bool {
        self.byte_fallback
    }

    /// Text of a learned piece, if `id` is one.
    pub fn piece(&self, id: TokenId) -> Option<&str> {
        (id as usize)
            .checked_sub(self.specials.reserved_count())
            .and_then(|i| self.pieces.get(i))
            .map(|p| p.text.as_str())
    }

    pub fn piece_id(&self, text: &str) -> Option<TokenId> {
        let reserved = self.specials.reserved_count();
        self.pieces
            .iter()
            .position(|p| p.text == text)
            .map(|i| (reserved + i) as TokenId)
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(text.len());
        for chunk in chunks(text) {
            self.encode_chunk(chunk, &mut out);
        }
        out
    }

    fn encode_chunk(&self, chunk: &str, out: &mut Vec<TokenId>) {
        let mut word: Vec<TokenId> = Vec::with_capacity(chunk.len());
        for c in chunk.chars() {
            if let Some(&id) = self.char_ids.get(&c) {
                word.push(id);
            } else if self.byte_fallback {
                let mut buf = [0u8; 4];
                word.extend(c.encode_utf8(&mut buf).bytes().map(|b| self.specials.byte_id(b)));
            } else {
                word.push(self.specials.unk_id);
            }
        }
        loop {
            let best = word
                .windows(2)
                .filter_map(|p| {
                    self.merge_ranks
                        .get(&(p[0], p[1]))
                        .map(|&(rank, res)| (rank, p[0], p[1], res))
                })
                .min();
            match best {
                Some((_, l, r, res)) => word = apply_merge(&word, l, r, res),
                None => break,
            }
        }
        out.extend(word);
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let size = self.size();
        let mut bytes = Vec::with_capacity(ids.len() * 2);
        for (index, &id) in ids.iter().enumerate() {
            if id as usize >= size {
                return Err(Error::IdOutOfRange { index, id, size });
            }
            if let Some(b) = self.specials.byte_of(id) {
                bytes.push(b);
            } else if let Some(name) = self.specials.name(id) {
                bytes.extend_from_slice(name.as_bytes());
            } else if let Some(p) = self.piece(id) {
                bytes.extend_from_slice(p.as_bytes());
            }
        }
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = VocabHeader {
            size: self.size(),
            reserved: self.specials.reserved_count(),
            languages: self.specials.languages().to_vec(),
            sentinels: SENTINEL_COUNT,
            byte_fallback: self.byte_fallback,
            pieces: self.pieces.len(),
            merges: self.merges.len(),
        };
        writeln!(w, "mixsum-vocab\t{VOCAB_FORMAT_VERSION}\t{}", serde_json::to_string(&header)?)?;
        let reserved = self.specials.reserved_count();
        for (i, p) in self.pieces.iter().enumerate() {
            let kind = match p.kind {
                PieceKind::Char => "char",
                PieceKind::Merged => "merged",
            };
            writeln!(w, "piece\t{}\t{kind}\t{}", reserved + i, serde_json::to_string(&p.text)?)?;
        }
        for (rank, (l, r, res)) in self.merges.iter().enumerate() {
            writeln!(w, "merge\t{rank}\t{l}\t{r}\t{res}")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let bad = |line: usize, message: &str| Error::VocabFormat {
            line,
            message: message.to_string(),
        };
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| bad(1, "missing header"))??;
        let mut parts = first.splitn(3, '\t');
        if parts.next() != Some("mixsum-vocab") {
            return Err(bad(1, "not a mixsum vocabulary file"));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(1, "missing format version"))?;
        if version != VOCAB_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VOCAB_FORMAT_VERSION,
            });
        }
        let header: VocabHeader =
            serde_json::from_str(parts.next().ok_or_else(|| bad(1, "missing header"))?).map_err(|e| bad(1, &e.to_string()))?;
        if header.sentinels != SENTINEL_COUNT {
            return Err(bad(1, "sentinel count mismatch"));
        }
        let specials = SpecialTokens::new(&header.languages)?;
        let reserved = specials.reserved_count();
        if reserved != header.reserved {
            return Err(bad(1, "reserved block does not match the language list"));
        }

        let mut pieces = Vec::with_capacity(header.pieces);
        let mut merges = Vec::with_capacity(header.merges);
        let mut seen = HashSet::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            match fields.first().copied() {
                Some("piece") if fields.len() == 4 => {
                    let id: usize = fields[1].parse().map_err(|_| bad(lineno, "bad piece id"))?;
                    if id != reserved + pieces.len() {
                        return Err(bad(lineno, "piece ids are not contiguous"));
                    }
                    let kind = match fields[2] {
                        "char" => PieceKind::Char,
                        "merged" => PieceKind::Merged,
                        _ => return Err(bad(lineno, "unknown piece kind")),
                    };
                    let text: String = serde_json::from_str(fields[3]).map_err(|e| bad(lineno, &e.to_string()))?;
                    if text.is_empty() || (kind == PieceKind::Char && text.chars().count() != 1) {
                        return Err(bad(lineno, "malformed piece text"));
                    }
                    if !seen.insert(text.clone()) {
                        return Err(bad(lineno, "duplicate piece"));
                    }
                    pieces.push(Piece { text, kind });
                }
                Some("merge") => {
                    let nums: Vec<usize> = line
                        .split('\t')
                        .skip(1)
                        .map(|f| f.parse().map_err(|_| bad(lineno, "bad merge field")))
                        .collect::<Result<_>>()?;
                    if nums.len() != 4 || nums[0] != merges.len() {
                        return Err(bad(lineno, "malformed merge"));
                    }
                    merges.push((nums[1] as TokenId, nums[2] as TokenId, nums[3] as TokenId));
                }
                _ => return Err(bad(lineno, "unrecognized record")),
            }
        }
        let size = reserved + pieces.len();
        if pieces.len() != header.pieces || merges.len() != header.merges || size != header.size {
            return Err(bad(1, "header counts do not match the body"));
        }
        if merges
            .iter()
            .any(|&(l, r, res)| [l, r, res].iter().any(|&id| (id as usize) < reserved || id as usize >= size))
        {
            return Err(bad(1, "merge references an id outside the learned range"));
        }
        Ok(Self::assemble(specials, pieces, merges, header.byte_fallback))
    }
}
