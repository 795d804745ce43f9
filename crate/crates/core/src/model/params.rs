use std::ops::Range;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::{Mat, MatRef};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Layers per stack (encoder and decoder each).
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub dropout_p: f64,
    pub vocab_size: usize,
    pub max_positions: usize,
}

impl ModelConfig {
    /// 6 layers, 8 heads, 512/2048 widths, dropout 0.1.
    pub fn full_size(vocab_size: usize) -> Self {
        Self {
            num_layers: 6,
            num_heads: 8,
            d_model: 512,
            d_ff: 2048,
            dropout_p: 0.1,
            vocab_size,
            max_positions: 512,
        }
    }

    pub fn desk(vocab_size: usize) -> Self {
        Self {
            num_layers: 2,
            num_heads: 4,
            d_model: 128,
            d_ff: 512,
            dropout_p: 0.1,
            vocab_size,
            max_positions: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_positions", self.max_positions),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model {} is not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidConfig(format!("dropout_p {} not in [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }
}

/// Closed-form parameter count with the embedding shared between encoder
/// input, decoder input and output projection.
pub fn count_params(config: &ModelConfig) -> usize {
    let d = config.d_model;
    let f = config.d_ff;
    let attention = 4 * (d * d + d);
    let ffn = d * f + f + f * d + d;
    let norm = 2 * d;
    let encoder_layer = attention + ffn + 2 * norm;
    let decoder_layer = 2 * attention + ffn + 3 * norm;
    config.vocab_size * d + config.num_layers * (encoder_layer + decoder_layer) + 2 * norm
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    /// N(0, 1/fan_in)
    Scaled {
        fan_in: usize,
    },
    Zeros,
    Ones,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub init: Init,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LinearIds {
    pub weight: TensorId,
    pub bias: TensorId,
}

#[derive(Clone, Copy, Debug)]
pub struct NormIds {
    pub gain: TensorId,
    pub bias: TensorId,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionIds {
    pub q: LinearIds,
    pub k: LinearIds,
    pub v: LinearIds,
    pub o: LinearIds,
}

#[derive(Clone, Copy, Debug)]
pub struct FfnIds {
    pub inner: LinearIds,
    pub outer: LinearIds,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderLayerIds {
    pub self_norm: NormIds,
    pub self_attn: AttentionIds,
    pub ffn_norm: NormIds,
    pub ffn: FfnIds,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderLayerIds {
    pub self_norm: NormIds,
    pub self_attn: AttentionIds,
    pub cross_norm: NormIds,
    pub cross_attn: AttentionIds,
    pub ffn_norm: NormIds,
    pub ffn: FfnIds,
}

/// Named tensor blocks laid out back to back in one flat buffer.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    specs: Vec<TensorSpec>,
    pub embedding: TensorId,
    pub encoder: Vec<EncoderLayerIds>,
    pub encoder_norm: NormIds,
    pub decoder: Vec<DecoderLayerIds>,
    pub decoder_norm: NormIds,
}

struct LayoutBuilder {
    specs: Vec<TensorSpec>,
    offset: usize,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> TensorId {
        let id = TensorId(self.specs.len());
        self.specs.push(TensorSpec {
            name,
            rows,
            cols,
            offset: self.offset,
            init,
        });
        self.offset += rows * cols;
        id
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> LinearIds {
        LinearIds {
            weight: self.add(format!("{prefix}.weight"), fan_in, fan_out, Init::Scaled { fan_in }),
            bias: self.add(format!("{prefix}.bias"), 1, fan_out, Init::Zeros),
        }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> NormIds {
        NormIds {
            gain: self.add(format!("{prefix}.gain"), 1, d, Init::Ones),
            bias: self.add(format!("{prefix}.bias"), 1, d, Init::Zeros),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize) -> AttentionIds {
        AttentionIds {
            q: self.linear(&format!("{prefix}.q"), d, d),
            k: self.linear(&format!("{prefix}.k"), d, d),
            v: self.linear(&format!("{prefix}.v"), d, d),
            o: self.linear(&format!("{prefix}.o"), d, d),
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize) -> FfnIds {
        FfnIds {
            inner: self.linear(&format!("{prefix}.inner"), d, f),
            outer: self.linear(&format!("{prefix}.outer"), f, d),
        }
    }
}

impl ParamLayout {
    pub fn new(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let f = config.d_ff;
        let mut b = LayoutBuilder {
            specs: Vec::new(),
            offset: 0,
        };
        let embedding = b.add("embedding".into(), config.vocab_size, d, Init::Scaled { fan_in: d });
        let encoder = (0..config.num_layers)
            .map(|l| {
                let p = format!("encoder.{l}");
                EncoderLayerIds {
                    self_norm: b.norm(&format!("{p}.self_norm"), d),
                    self_attn: b.attention(&format!("{p}.self_attn"), d),
                    ffn_norm: b.norm(&format!("{p}.ffn_norm"), d),
                    ffn: b.ffn(&format!("{p}.ffn"), d, f),
                }
            })
            .collect();
        let encoder_norm = b.norm("encoder.final_norm", d);
        let decoder = (0..config.num_layers)
            .map(|l| {
                let p = format!("decoder.{l}");
                DecoderLayerIds {
                    self_norm: b.norm(&format!("{p}.self_norm"), d),
                    self_attn: b.attention(&format!("{p}.self_attn"), d),
                    cross_norm: b.norm(&format!("{p}.cross_norm"), d),
                    cross_attn: b.attention(&format!("{p}.cross_attn"), d),
                    ffn_norm: b.norm(&format!("{p}.ffn_norm"), d),
                    ffn: b.ffn(&format!("{p}.ffn"), d, f),
                }
            })
            .collect();
        let decoder_norm = b.norm("decoder.final_norm", d);
        Self {
            specs: b.specs,
            embedding,
            encoder,
            encoder_norm,
            decoder,
            decoder_norm,
        }
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn spec(&self, id: TensorId) -> &TensorSpec {
        &self.specs[id.0]
    }

    pub fn range(&self, id: TensorId) -> Range<usize> {
        self.specs[id.0].range()
    }

    pub fn total(&self) -> usize {
        self.specs.last().map_or(0, |s| s.offset + s.len())
    }
}

fn positional_table(max_positions: usize, d: usize) -> Mat {
    let mut pe = Mat::zeros(max_positions, d);
    for pos in 0..max_positions {
        let row = pe.row_mut(pos);
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            row[2 * i] = angle.sin();
            row[2 * i + 1] = angle.cos();
        }
        if d % 2 == 1 {
            let i = d / 2;
            row[d - 1] = (pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64)).sin();
        }
    }
    pe
}

/// Dense parameters of the encoder-decoder in one flat buffer.
#[derive(Clone, Debug)]
pub struct ModelParams {
    config: ModelConfig,
    layout: Arc<ParamLayout>,
    positional: Arc<Mat>,
    values: Vec<f64>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.values == other.values
    }
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(config);
        let values = vec![0.0; layout.total()];
        Ok(Self {
            config: config.clone(),
            positional: Arc::new(positional_table(config.max_positions, config.d_model)),
            layout: Arc::new(layout),
            values,
        })
    }

    pub fn from_values(config: &ModelConfig, values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if values.len() != p.values.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter values, got {}",
                p.values.len(),
                values.len()
            )));
        }
        p.values = values;
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub(crate) fn shared_layout(&self) -> Arc<ParamLayout> {
        Arc::clone(&self.layout)
    }

    pub fn positional(&self) -> &Mat {
        &self.positional
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, id: TensorId) -> &[f64] {
        &self.values[self.layout.range(id)]
    }

    pub fn slice_mut(&mut self, id: TensorId) -> &mut [f64] {
        let r = self.layout.range(id);
        &mut self.values[r]
    }

    pub fn mat(&self, id: TensorId) -> MatRef<'_> {
        let s = self.layout.spec(id);
        MatRef::new(s.rows, s.cols, &self.values[s.range()])
    }

    pub fn tensor_by_name(&self, name: &str) -> Option<(&TensorSpec, &[f64])> {
        self.layout
            .specs()
            .iter()
            .find(|s| s.name == name)
            .map(|s| (s, &self.values[s.range()]))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Draws matrices from N(0, 1/fan_in); biases start at zero and norm gains at one.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = params.shared_layout();
    for spec in layout.specs() {
        let slice = &mut params.values[spec.range()];
        match spec.init {
            Init::Zeros => slice.fill(0.0),
            Init::Ones => slice.fill(1.0),
            Init::Scaled { fan_in } => {
                let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
                for v in slice.iter_mut() {
                    *v = normal.sample(&mut rng);
                }
            }
        }
    }
    Ok(params)
}
