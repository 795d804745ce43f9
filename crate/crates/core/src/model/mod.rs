//! The unified encoder-decoder: parameters, forward pass, exact gradients.

pub mod checkpoint;
pub mod params;
pub mod tensor;
mod transformer;

use rand::RngCore;

pub use params::{count_params, init_params, Init, ModelConfig, ModelParams, ParamLayout, TensorId, TensorSpec};
pub use tensor::{log_softmax, Mat, MatRef};
pub use transformer::{decoder_attention_maps, encoder_attention_maps, EmbeddingSites};

use crate::error::{Error, Result};
use crate::objectives::TrainingExample;
use crate::vocab::{SpecialTokens, TokenId};
use transformer::SiteGrads;

/// A padded, rectangular batch ready for the model.
///
/// Decoder inputs are `[task, lang, bos, t1 .. tn]` and labels
/// `[pad, pad, t1 .. tn, eos]`, so the control prefix never contributes to
/// the loss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub src: Vec<Vec<TokenId>>,
    pub dec_input: Vec<Vec<TokenId>>,
    pub labels: Vec<Vec<TokenId>>,
    pub pad_id: TokenId,
}

impl Batch {
    pub fn from_examples(examples: &[TrainingExample], specials: &SpecialTokens) -> Result<Self> {
        let pad = specials.pad_id;
        let mut src = Vec::with_capacity(examples.len());
        let mut dec_input = Vec::with_capacity(examples.len());
        let mut labels = Vec::with_capacity(examples.len());
        for ex in examples {
            let prefix = ex.prefix(specials)?;
            let mut dec = Vec::with_capacity(ex.tgt_ids.len() + 3);
            dec.extend_from_slice(&prefix);
            dec.push(specials.bos_id);
            dec.extend_from_slice(&ex.tgt_ids);
            let mut lab = Vec::with_capacity(dec.len());
            lab.extend_from_slice(&[pad, pad]);
            lab.extend_from_slice(&ex.tgt_ids);
            lab.push(specials.eos_id);
            src.push(ex.src_ids.clone());
            dec_input.push(dec);
            labels.push(lab);
        }
        let pad_rows = |rows: &mut Vec<Vec<TokenId>>| {
            let width = rows.iter().map(Vec::len).max().unwrap_or(0);
            for r in rows.iter_mut() {
                r.resize(width, pad);
            }
        };
        pad_rows(&mut src);
        pad_rows(&mut dec_input);
        pad_rows(&mut labels);
        Ok(Self {
            src,
            dec_input,
            labels,
            pad_id: pad,
        })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn target_tokens(&self) -> usize {
        self.labels
            .iter()
            .flat_map(|r| r.iter())
            .filter(|&&t| t != self.pad_id)
            .count()
    }

    /// Decoder positions up to and including the last labelled one, per row.
    pub fn decoder_lens(&self) -> Vec<usize> {
        self.labels
            .iter()
            .map(|r| r.iter().rposition(|&t| t != self.pad_id).map_or(0, |i| i + 1))
            .collect()
    }

    /// Checks shapes and ids, returning the unpadded source length per row.
    fn validate(&self, config: &ModelConfig) -> Result<Vec<usize>> {
        let n = self.src.len();
        if self.dec_input.len() != n || self.labels.len() != n {
            return Err(Error::Shape("src, decoder input and labels differ in batch size".into()));
        }
        let mut lens = Vec::with_capacity(n);
        for b in 0..n {
            if self.dec_input[b].len() != self.labels[b].len() {
                return Err(Error::Shape(format!("row {b}: decoder input and labels differ in length")));
            }
            for row in [&self.src[b], &self.dec_input[b]] {
                if row.len() > config.max_positions {
                    return Err(Error::SequenceTooLong {
                        len: row.len(),
                        max: config.max_positions,
                    });
                }
                if let Some(index) = row.iter().position(|&t| t as usize >= config.vocab_size) {
                    return Err(Error::IdOutOfRange {
                        index,
                        id: row[index],
                        size: config.vocab_size,
                    });
                }
            }
            let len = self.src[b]
                .iter()
                .position(|&t| t == self.pad_id)
                .unwrap_or(self.src[b].len());
            if self.src[b][len..].iter().any(|&t| t != self.pad_id) {
                return Err(Error::Shape(format!("row {b}: source padding must be trailing")));
            }
            if len == 0 {
                return Err(Error::EmptySequence("source"));
            }
            lens.push(len);
        }
        Ok(lens)
    }
}

/// Dropout mode for a forward pass.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

impl Mode<'_> {
    fn rng(&mut self) -> Option<&mut (dyn RngCore + '_)> {
        match self {
            Mode::Eval => None,
            Mode::Train(r) => Some(&mut **r),
        }
    }
}

/// batch × len × vocab logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits {
    pub batch: usize,
    pub len: usize,
    pub vocab: usize,
    pub data: Vec<f64>,
}

impl Logits {
    pub fn row(&self, b: usize, t: usize) -> &[f64] {
        let start = (b * self.len + t) * self.vocab;
        &self.data[start..start + self.vocab]
    }
}

/// Logits for every decoder position. Positions after a row's last label
/// are padding; they are not computed and read as zero.
pub fn forward(params: &ModelParams, batch: &Batch, mut mode: Mode<'_>) -> Result<Logits> {
    let sites = EmbeddingSites::tied(params);
    let (packed, dec_lens) = forward_trimmed(params, &sites, batch, mode.rng())?;
    Ok(unpack_logits(batch, params.config().vocab_size, &packed, &dec_lens))
}

fn forward_trimmed(
    params: &ModelParams,
    sites: &EmbeddingSites<'_>,
    batch: &Batch,
    rng: Option<&mut (dyn RngCore + '_)>,
) -> Result<(Mat, Vec<usize>)> {
    let lens = batch.validate(params.config())?;
    let dec_lens = batch.decoder_lens();
    let srcs: Vec<&[TokenId]> = lens.iter().zip(&batch.src).map(|(&n, s)| &s[..n]).collect();
    let decs: Vec<&[TokenId]> = dec_lens.iter().zip(&batch.dec_input).map(|(&n, s)| &s[..n]).collect();
    Ok((transformer::forward_packed(params, sites, &srcs, &decs, rng).0, dec_lens))
}

fn unpack_logits(batch: &Batch, vocab: usize, packed: &Mat, dec_lens: &[usize]) -> Logits {
    let len = batch.dec_input.first().map_or(0, Vec::len);
    let mut data = vec![0.0; batch.len() * len * vocab];
    let mut row = 0;
    for (b, &n) in dec_lens.iter().enumerate() {
        let dst = b * len * vocab;
        data[dst..dst + n * vocab].copy_from_slice(&packed.data[row * vocab..(row + n) * vocab]);
        row += n;
    }
    Logits {
        batch: batch.len(),
        len,
        vocab,
        data,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    /// Mean negative log-likelihood per non-pad target token.
    pub mean: f64,
    pub tokens: usize,
}

pub fn loss(logits: &Logits, labels: &[Vec<TokenId>], pad_id: TokenId) -> Result<LossValue> {
    if labels.len() != logits.batch || labels.iter().any(|r| r.len() != logits.len) {
        return Err(Error::Shape("labels do not match logits".into()));
    }
    let mut total = 0.0;
    let mut tokens = 0;
    for (b, row) in labels.iter().enumerate() {
        for (t, &label) in row.iter().enumerate() {
            if label == pad_id {
                continue;
            }
            if label as usize >= logits.vocab {
                return Err(Error::IdOutOfRange {
                    index: t,
                    id: label,
                    size: logits.vocab,
                });
            }
            total -= log_softmax(logits.row(b, t))[label as usize];
            tokens += 1;
        }
    }
    if tokens == 0 {
        return Err(Error::NoTargetTokens);
    }
    let mean = total / tokens as f64;
    if !mean.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok(LossValue { mean, tokens })
}

/// Flat gradient buffer aligned with [`ModelParams::values`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn tensor<'a>(&'a self, params: &ModelParams, id: TensorId) -> &'a [f64] {
        &self.values[params.layout().range(id)]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn backward_impl(
    params: &ModelParams,
    sites: &EmbeddingSites<'_>,
    batch: &Batch,
    mut mode: Mode<'_>,
    site_grads: &mut SiteGrads<'_>,
) -> Result<(LossValue, Gradients)> {
    let lens = batch.validate(params.config())?;
    let tokens = batch.target_tokens();
    if tokens == 0 {
        return Err(Error::NoTargetTokens);
    }
    let vocab = params.config().vocab_size;
    let dec_lens = batch.decoder_lens();
    let srcs: Vec<&[TokenId]> = lens.iter().zip(&batch.src).map(|(&n, s)| &s[..n]).collect();
    let decs: Vec<&[TokenId]> = dec_lens.iter().zip(&batch.dec_input).map(|(&n, s)| &s[..n]).collect();
    let (logits, cache) = transformer::forward_packed(params, sites, &srcs, &decs, mode.rng());
    let norm = 1.0 / tokens as f64;
    let mut dlogits = Mat::zeros(logits.rows, vocab);
    let mut total = 0.0;
    let mut row = 0;
    for (labels, &n) in batch.labels.iter().zip(&dec_lens) {
        for (t, &label) in labels[..n].iter().enumerate() {
            let r = row + t;
            if label == batch.pad_id {
                continue;
            }
            if label as usize >= vocab {
                return Err(Error::IdOutOfRange {
                    index: t,
                    id: label,
                    size: vocab,
                });
            }
            let lp = log_softmax(logits.row(r));
            total -= lp[label as usize];
            let d = dlogits.row_mut(r);
            for (d, l) in d.iter_mut().zip(&lp) {
                *d = l.exp() * norm;
            }
            d[label as usize] -= norm;
        }
        row += n;
    }
    let mean = total / tokens as f64;
    if !mean.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut values = vec![0.0; params.len()];
    transformer::backward_packed(params, sites, &cache, &dlogits, &mut values, site_grads);
    Ok((LossValue { mean, tokens }, Gradients { values }))
}

/// Mean token loss and its exact gradient for every parameter.
pub fn backward(params: &ModelParams, batch: &Batch, mode: Mode<'_>) -> Result<(LossValue, Gradients)> {
    let sites = EmbeddingSites::tied(params);
    backward_impl(params, &sites, batch, mode, &mut SiteGrads::Tied)
}

/// Evaluates the loss with independent matrices at the three embedding
/// usage sites (encoder input, decoder input, output projection).
pub fn loss_with_sites(params: &ModelParams, sites: &EmbeddingSites<'_>, batch: &Batch) -> Result<LossValue> {
    let (packed, dec_lens) = forward_trimmed(params, sites, batch, None)?;
    let logits = unpack_logits(batch, params.config().vocab_size, &packed, &dec_lens);
    loss(&logits, &batch.labels, batch.pad_id)
}

/// Gradient split by embedding usage site: `[encoder, decoder, output]`.
/// The embedding block of the returned [`Gradients`] is left at zero.
pub fn backward_with_sites(
    params: &ModelParams,
    sites: &EmbeddingSites<'_>,
    batch: &Batch,
) -> Result<(LossValue, Gradients, [Vec<f64>; 3])> {
    let n = params.layout().spec(params.layout().embedding).len();
    let mut sep = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let (loss, grads) = backward_impl(params, sites, batch, Mode::Eval, &mut SiteGrads::Separate(&mut sep))?;
    Ok((loss, grads, sep))
}

/// Encoder states for one unpadded source sequence (eval mode).
pub fn encode_source(params: &ModelParams, src: &[TokenId]) -> Result<Mat> {
    check_ids(params.config(), src)?;
    if src.is_empty() {
        return Err(Error::EmptySequence("source"));
    }
    let sites = EmbeddingSites::tied(params);
    Ok(transformer::encoder_forward(params, &sites, src, &transformer::segments([src.len()]), None).0)
}

/// Logits for the token following `dec_input`, given encoder states.
pub fn next_token_logits(params: &ModelParams, enc: &Mat, dec_input: &[TokenId]) -> Result<Vec<f64>> {
    check_ids(params.config(), dec_input)?;
    if dec_input.is_empty() {
        return Err(Error::EmptySequence("decoder input"));
    }
    let sites = EmbeddingSites::tied(params);
    let (out, _) = transformer::decoder_forward(
        params,
        &sites,
        dec_input,
        &transformer::segments([dec_input.len()]),
        enc,
        &transformer::segments([enc.rows]),
        None,
    );
    let last = MatRef::new(1, out.cols, out.row(out.rows - 1));
    Ok(tensor::matmul_nt(last, sites.output).data)
}

fn check_ids(config: &ModelConfig, ids: &[TokenId]) -> Result<()> {
    if ids.len() > config.max_positions {
        return Err(Error::SequenceTooLong {
            len: ids.len(),
            max: config.max_positions,
        });
    }
    match ids.iter().position(|&t| t as usize >= config.vocab_size) {
        Some(index) => Err(Error::IdOutOfRange {
            index,
            id: ids[index],
            size: config.vocab_size,
        }),
        None => Ok(()),
    }
}
