use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ::mixsum as core;
use core::decoding::BeamConfig;
use core::experiments::{ExperimentPlan, RunScores};
use core::model::checkpoint::Checkpoint;
use core::model::{ModelConfig, ModelParams};
use core::rouge::{RougeScore, RougeTriple, Script};
use core::training::ScheduleConfig;
use core::vocab::{LanguageLines, SpecialTokens, Task, TokenId, VocabTrainConfig, Vocabulary};

create_exception!(mixsum, MixsumError, PyException);

fn err(e: core::Error) -> PyErr {
    MixsumError::new_err(e.to_string())
}

fn score_dict<'py>(py: Python<'py>, s: &RougeScore) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("precision", s.precision)?;
    d.set_item("recall", s.recall)?;
    d.set_item("f1", s.f1)?;
    Ok(d)
}

fn triple_dict<'py>(py: Python<'py>, t: &RougeTriple) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rouge1", score_dict(py, &t.rouge1)?)?;
    d.set_item("rouge2", score_dict(py, &t.rouge2)?)?;
    d.set_item("rougeL", score_dict(py, &t.rouge_l)?)?;
    Ok(d)
}

fn run_dict<'py>(py: Python<'py>, r: &RunScores) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("seed", r.seed)?;
    d.set_item("finetune_size", r.finetune_size)?;
    d.set_item("pretrained", r.pretrained)?;
    d.set_item("rouge", triple_dict(py, &r.rouge)?)?;
    Ok(d)
}

fn task(name: &str) -> PyResult<Task> {
    name.parse().map_err(err)
}

/// Shared subword vocabulary with its reserved special ids.
#[pyclass(name = "Vocab", module = "mixsum")]
struct PyVocab {
    inner: Vocabulary,
}

#[pymethods]
impl PyVocab {
    /// Trains on `{lang: [line, ...]}` up to `size` ids.
    #[staticmethod]
    #[pyo3(signature = (corpus, size, seed = 0))]
    fn train(py: Python<'_>, corpus: HashMap<String, Vec<String>>, size: usize, seed: u64) -> PyResult<Self> {
        let mut langs: Vec<String> = corpus.keys().cloned().collect();
        langs.sort();
        let specials = SpecialTokens::new(&langs).map_err(err)?;
        let lines: Vec<LanguageLines> = langs
            .iter()
            .map(|l| LanguageLines {
                lang: l.clone(),
                lines: corpus[l].clone(),
            })
            .collect();
        let mut config = VocabTrainConfig::new(size);
        config.seed = seed;
        let inner = py
            .detach(|| core::vocab::train_vocab(&lines, specials, &config))
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Vocabulary::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn encode(&self, text: &str) -> Vec<TokenId> {
        self.inner.encode(text)
    }

    fn decode(&self, ids: Vec<TokenId>) -> PyResult<String> {
        self.inner.decode(&ids).map_err(err)
    }

    fn piece(&self, id: TokenId) -> Option<String> {
        self.inner.piece(id).map(str::to_string)
    }

    fn lang_id(&self, code: &str) -> PyResult<TokenId> {
        self.inner.specials().lang_id(code).map_err(err)
    }

    fn task_id(&self, name: &str) -> PyResult<TokenId> {
        Ok(self.inner.specials().task_id(task(name)?))
    }

    #[getter]
    fn languages(&self) -> Vec<String> {
        self.inner.specials().languages().to_vec()
    }

    #[getter]
    fn pad_id(&self) -> TokenId {
        self.inner.specials().pad_id
    }

    #[getter]
    fn bos_id(&self) -> TokenId {
        self.inner.specials().bos_id
    }

    #[getter]
    fn eos_id(&self) -> TokenId {
        self.inner.specials().eos_id
    }

    #[getter]
    fn reserved_count(&self) -> usize {
        self.inner.specials().reserved_count()
    }

    /// Masks random spans with sentinels; returns `(src_ids, tgt_ids)`.
    #[pyo3(signature = (ids, lang, mask_prob = 0.15, seed = 0))]
    fn corrupt_mlm(&self, ids: Vec<TokenId>, lang: &str, mask_prob: f64, seed: u64) -> PyResult<(Vec<TokenId>, Vec<TokenId>)> {
        let sp = self.inner.specials();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ex = core::objectives::corrupt_mlm(sp, &ids, sp.lang_id(lang).map_err(err)?, mask_prob, &mut rng).map_err(err)?;
        Ok((ex.src_ids, ex.tgt_ids))
    }

    /// Inverse of `corrupt_mlm`; `None` when the pair is malformed.
    fn restore(&self, src_ids: Vec<TokenId>, tgt_ids: Vec<TokenId>) -> Option<Vec<TokenId>> {
        core::objectives::restore_sentinels(self.inner.specials(), &src_ids, &tgt_ids)
    }

    fn __len__(&self) -> usize {
        self.inner.size()
    }

    fn __repr__(&self) -> String {
        format!(
            "Vocab(size={}, languages={:?})",
            self.inner.size(),
            self.inner.specials().languages()
        )
    }
}

/// Encoder-decoder parameters.
#[pyclass(name = "Model", module = "mixsum")]
struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    /// Freshly initialized model; unspecified sizes take the desk defaults.
    #[new]
    #[pyo3(signature = (vocab_size, num_layers = None, num_heads = None, d_model = None, d_ff = None, dropout = None, max_positions = None, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        vocab_size: usize,
        num_layers: Option<usize>,
        num_heads: Option<usize>,
        d_model: Option<usize>,
        d_ff: Option<usize>,
        dropout: Option<f64>,
        max_positions: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let d = ModelConfig::desk(vocab_size);
        let config = ModelConfig {
            num_layers: num_layers.unwrap_or(d.num_layers),
            num_heads: num_heads.unwrap_or(d.num_heads),
            d_model: d_model.unwrap_or(d.d_model),
            d_ff: d_ff.unwrap_or(d.d_ff),
            dropout_p: dropout.unwrap_or(d.dropout_p),
            vocab_size,
            max_positions: max_positions.unwrap_or(d.max_positions),
        };
        Ok(Self {
            inner: core::model::init_params(&config, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Checkpoint::load(path).map_err(err)?.params,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint {
            params: self.inner.clone(),
            optimizer: None,
            progress: None,
        }
        .save(path)
        .map_err(err)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.inner.config();
        let d = PyDict::new(py);
        d.set_item("num_layers", c.num_layers)?;
        d.set_item("num_heads", c.num_heads)?;
        d.set_item("d_model", c.d_model)?;
        d.set_item("d_ff", c.d_ff)?;
        d.set_item("dropout", c.dropout_p)?;
        d.set_item("vocab_size", c.vocab_size)?;
        d.set_item("max_positions", c.max_positions)?;
        Ok(d)
    }

    /// Beam search under the `(task, lang)` control prefix; returns
    /// `(token ids without eos, score)` pairs, best first.
    #[pyo3(signature = (vocab, src_ids, task = "cls", lang = "xb", beam_size = 6, max_len = 200, length_alpha = 1.0))]
    #[allow(clippy::too_many_arguments)]
    fn beam_search(
        &self,
        py: Python<'_>,
        vocab: &PyVocab,
        src_ids: Vec<TokenId>,
        task: &str,
        lang: &str,
        beam_size: usize,
        max_len: usize,
        length_alpha: f64,
    ) -> PyResult<Vec<(Vec<TokenId>, f64)>> {
        let sp = vocab.inner.specials();
        let task_id = sp.task_id(self::task(task)?);
        let lang_id = sp.lang_id(lang).map_err(err)?;
        let config = BeamConfig {
            beam_size,
            max_len,
            length_alpha,
        };
        let hyps = py
            .detach(|| core::decoding::beam_search(&self.inner, sp, &src_ids, task_id, lang_id, &config))
            .map_err(err)?;
        Ok(hyps.iter().map(|h| (h.output().to_vec(), h.score)).collect())
    }

    fn __repr__(&self) -> String {
        let c = self.inner.config();
        format!(
            "Model(layers={}, d_model={}, vocab={}, params={})",
            c.num_layers,
            c.d_model,
            c.vocab_size,
            self.inner.len()
        )
    }
}

/// Declarative experiment plan.
#[pyclass(name = "Plan", module = "mixsum")]
struct PyPlan {
    inner: ExperimentPlan,
}

#[pymethods]
impl PyPlan {
    /// Loads `path` (the built-in desk plan when `None`) and applies
    /// `key=value` overrides.
    #[new]
    #[pyo3(signature = (path = None, overrides = Vec::new()))]
    fn new(path: Option<PathBuf>, overrides: Vec<String>) -> PyResult<Self> {
        let inner = match path {
            Some(p) => ExperimentPlan::load_with_overrides(p, &overrides),
            None => ExperimentPlan::default().with_overrides(&overrides),
        }
        .map_err(err)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn with_overrides(&self, overrides: Vec<String>) -> PyResult<Self> {
        let inner = self.inner.with_overrides(&overrides).map_err(err)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    /// Run directory of `label` for `seed`.
    fn run_dir(&self, label: &str, seed: u64) -> PathBuf {
        self.inner.run_dir(label, seed)
    }

    /// Writes the synthetic corpus bundle to `out_dir`.
    fn write_corpus(&self, out_dir: PathBuf) -> PyResult<()> {
        let bundle = core::corpus::generate_synthetic(&self.inner.synthetic).map_err(err)?;
        core::corpus::write_bundle(out_dir, &bundle).map_err(err)
    }

    /// Pretrain, finetune, decode and score every seed.
    fn run<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let result = py.detach(|| core::experiments::run_pipeline(&self.inner)).map_err(err)?;
        result.runs.iter().map(|r| run_dict(py, r)).collect()
    }

    /// Objective ablation; returns `{row: mean scores or None}`.
    #[pyo3(signature = (rows = Vec::new()))]
    fn ablate<'py>(&self, py: Python<'py>, rows: Vec<String>) -> PyResult<Bound<'py, PyDict>> {
        let only: Vec<&str> = rows.iter().map(String::as_str).collect();
        let result = py
            .detach(|| core::experiments::run_ablation(&self.inner, &only))
            .map_err(err)?;
        let d = PyDict::new(py);
        for row in result {
            match row.mean() {
                Some(m) => d.set_item(row.name, triple_dict(py, &m)?)?,
                None => d.set_item(row.name, py.None())?,
            }
        }
        Ok(d)
    }

    /// Low-resource curve; returns `{size: pretrained minus scratch ROUGE-1 F1}`.
    fn curve<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let points = py.detach(|| core::experiments::run_low_resource(&self.inner)).map_err(err)?;
        let d = PyDict::new(py);
        for p in points {
            d.set_item(p.size, p.gap())?;
        }
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Plan(name={:?}, seeds={:?})", self.inner.name, self.inner.seeds)
    }
}

/// ROUGE-1/2/L for one candidate against one reference.
#[pyfunction]
#[pyo3(signature = (candidate, reference, lang = "en"))]
fn rouge<'py>(py: Python<'py>, candidate: &str, reference: &str, lang: &str) -> PyResult<Bound<'py, PyDict>> {
    triple_dict(py, &core::rouge::score_pair(candidate, reference, Script::for_lang(lang)))
}

/// Mean of per-pair ROUGE over `(candidate, reference)` pairs.
#[pyfunction]
#[pyo3(signature = (pairs, lang = "en"))]
fn corpus_rouge<'py>(py: Python<'py>, pairs: Vec<(String, String)>, lang: &str) -> PyResult<Bound<'py, PyDict>> {
    triple_dict(py, &core::rouge::corpus_rouge(&pairs, Script::for_lang(lang)).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (vocab_size, num_layers = 6, num_heads = 8, d_model = 512, d_ff = 2048))]
fn count_params(vocab_size: usize, num_layers: usize, num_heads: usize, d_model: usize, d_ff: usize) -> usize {
    core::model::count_params(&ModelConfig {
        num_layers,
        num_heads,
        d_model,
        d_ff,
        dropout_p: 0.0,
        vocab_size,
        max_positions: 0,
    })
}

/// Learning rate at `step`; defaults are the pretraining schedule.
#[pyfunction]
#[pyo3(signature = (step, init_lr = 1e-9, peak_lr = 1e-3, warmup_steps = 16_000, decay_rate = 0.9999))]
fn lr_at(step: u64, init_lr: f64, peak_lr: f64, warmup_steps: u64, decay_rate: f64) -> PyResult<f64> {
    let schedule = ScheduleConfig {
        init_lr,
        peak_lr,
        warmup_steps,
        decay_rate,
    };
    schedule.validate().map_err(err)?;
    Ok(core::training::lr_at(&schedule, step))
}

#[pymodule]
#[pyo3(name = "mixsum")]
fn mixsum_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MixsumError", m.py().get_type::<MixsumError>())?;
    m.add_class::<PyVocab>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPlan>()?;
    m.add_function(wrap_pyfunction!(rouge, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_rouge, m)?)?;
    m.add_function(wrap_pyfunction!(count_params, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    Ok(())
}
