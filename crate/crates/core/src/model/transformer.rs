//! Pre-norm Transformer encoder-decoder with a hand-derived backward pass.
//!
//! Layer arrangement (per stack):
//!
//! ```text
//! x = E[ids]·√d + PE
//! x = x + Drop(SelfAttn(LN(x)))
//! x = x + Drop(CrossAttn(LN(x), enc))      decoder only
//! x = x + Drop(FFN(LN(x)))                 FFN = W2·gelu(W1·x + b1) + b2
//! out = LN_final(x)
//! logits = out · Eᵀ
//! ```
//!
//! Examples are packed row-wise without padding: position-wise layers run
//! once over the whole stack and attention runs per example segment, which
//! is exactly what key-padding masks compute.

use rand::{Rng, RngCore};

use super::params::{AttentionIds, FfnIds, LinearIds, ModelParams, NormIds};
use super::tensor::{col_sums_acc, matmul, matmul_nt, matmul_tn_acc, softmax_in_place, Mat, MatRef};
use crate::vocab::TokenId;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Which matrices play the embedding role at each usage site. In the model
/// proper all three are the one shared embedding.
#[derive(Clone, Copy)]
pub struct EmbeddingSites<'a> {
    pub encoder: MatRef<'a>,
    pub decoder: MatRef<'a>,
    pub output: MatRef<'a>,
}

impl<'a> EmbeddingSites<'a> {
    /// Independent vocab × d matrices for each site.
    pub fn new(params: &ModelParams, encoder: &'a [f64], decoder: &'a [f64], output: &'a [f64]) -> Self {
        let c = params.config();
        let at = |data: &'a [f64]| {
            assert_eq!(data.len(), c.vocab_size * c.d_model, "embedding site shape");
            MatRef::new(c.vocab_size, c.d_model, data)
        };
        Self {
            encoder: at(encoder),
            decoder: at(decoder),
            output: at(output),
        }
    }

    pub fn tied(params: &'a ModelParams) -> Self {
        let e = params.mat(params.layout().embedding);
        Self {
            encoder: e,
            decoder: e,
            output: e,
        }
    }
}

/// Where embedding-site gradients go during backward.
pub(crate) enum SiteGrads<'g> {
    Tied,
    Separate(&'g mut [Vec<f64>; 3]),
}

pub(crate) struct Grads<'g> {
    pub params: &'g ModelParams,
    pub values: &'g mut [f64],
}

impl Grads<'_> {
    fn slice(&mut self, id: super::params::TensorId) -> &mut [f64] {
        let r = self.params.layout().range(id);
        &mut self.values[r]
    }
}

fn dropout_mask(n: usize, p: f64, rng: &mut dyn RngCore) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()
}

fn apply_dropout(x: &mut Mat, p: f64, rng: Option<&mut (dyn RngCore + '_)>) -> Option<Vec<f64>> {
    let rng = rng?;
    if p == 0.0 {
        return None;
    }
    let mask = dropout_mask(x.data.len(), p, rng);
    for (v, m) in x.data.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

fn undo_dropout(dy: &Mat, mask: &Option<Vec<f64>>) -> Mat {
    match mask {
        None => dy.clone(),
        Some(m) => Mat::from_vec(dy.rows, dy.cols, dy.data.iter().zip(m).map(|(a, b)| a * b).collect()),
    }
}

struct NormCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &Mat, p: &ModelParams, ids: NormIds) -> (Mat, NormCache) {
    let gain = p.slice(ids.gain);
    let bias = p.slice(ids.bias);
    let d = x.cols as f64;
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut out = Mat::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(inv);
        let xr = xhat.row_mut(r);
        for (h, v) in xr.iter_mut().zip(row) {
            *h = (v - mean) * inv;
        }
        let xr = xhat.row(r).to_vec();
        for ((o, h), (g, b)) in out.row_mut(r).iter_mut().zip(&xr).zip(gain.iter().zip(bias)) {
            *o = h * g + b;
        }
    }
    (out, NormCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &Mat, cache: &NormCache, ids: NormIds, g: &mut Grads<'_>) -> Mat {
    let gain = g.params.slice(ids.gain).to_vec();
    {
        let dgain = g.slice(ids.gain);
        for r in 0..dy.rows {
            for ((dg, d), h) in dgain.iter_mut().zip(dy.row(r)).zip(cache.xhat.row(r)) {
                *dg += d * h;
            }
        }
    }
    col_sums_acc(dy, g.slice(ids.bias));
    let n = dy.cols as f64;
    let mut dx = Mat::zeros(dy.rows, dy.cols);
    for r in 0..dy.rows {
        let xh = cache.xhat.row(r);
        let dxhat: Vec<f64> = dy.row(r).iter().zip(&gain).map(|(d, g)| d * g).collect();
        let mean_d = dxhat.iter().sum::<f64>() / n;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
        let inv = cache.inv_std[r];
        for ((o, d), h) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(xh) {
            *o = inv * (d - mean_d - h * mean_dx);
        }
    }
    dx
}

fn linear(x: &Mat, p: &ModelParams, ids: LinearIds) -> Mat {
    let mut y = matmul(x.view(), p.mat(ids.weight));
    y.add_row_vector(p.slice(ids.bias));
    y
}

fn linear_backward(x: &Mat, dy: &Mat, ids: LinearIds, g: &mut Grads<'_>) -> Mat {
    matmul_tn_acc(x.view(), dy.view(), g.slice(ids.weight));
    col_sums_acc(dy, g.slice(ids.bias));
    matmul_nt(dy.view(), g.params.mat(ids.weight))
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

struct FfnCache {
    input: Mat,
    pre: Mat,
    hidden: Mat,
}

fn ffn(x: &Mat, p: &ModelParams, ids: FfnIds) -> (Mat, FfnCache) {
    let pre = linear(x, p, ids.inner);
    let hidden = Mat::from_vec(pre.rows, pre.cols, pre.data.iter().map(|&v| gelu(v)).collect());
    let out = linear(&hidden, p, ids.outer);
    (
        out,
        FfnCache {
            input: x.clone(),
            pre,
            hidden,
        },
    )
}

fn ffn_backward(dy: &Mat, cache: &FfnCache, ids: FfnIds, g: &mut Grads<'_>) -> Mat {
    let dhidden = linear_backward(&cache.hidden, dy, ids.outer, g);
    let dpre = Mat::from_vec(
        dhidden.rows,
        dhidden.cols,
        dhidden
            .data
            .iter()
            .zip(&cache.pre.data)
            .map(|(d, &x)| d * gelu_grad(x))
            .collect(),
    );
    linear_backward(&cache.input, &dpre, ids.inner, g)
}

/// A contiguous run of rows belonging to one sequence in a packed matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Seg {
    pub start: usize,
    pub len: usize,
}

pub(crate) fn segments(lens: impl IntoIterator<Item = usize>) -> Vec<Seg> {
    let mut start = 0;
    lens.into_iter()
        .map(|len| {
            let s = Seg { start, len };
            start += len;
            s
        })
        .collect()
}

struct AttnCache {
    q_in: Mat,
    kv_in: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    q_segs: Vec<Seg>,
    kv_segs: Vec<Seg>,
    /// One matrix per (segment, head), segment-major.
    probs: Vec<Mat>,
    ctx: Mat,
}

/// Multi-head scaled dot-product attention. Query segment `i` attends only
/// to key segment `i`; `causal` hides keys after the query.
fn attention(
    q_in: &Mat,
    q_segs: &[Seg],
    kv_in: &Mat,
    kv_segs: &[Seg],
    causal: bool,
    p: &ModelParams,
    ids: AttentionIds,
) -> (Mat, AttnCache) {
    let heads = p.config().num_heads;
    let dk = p.config().head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    let q = linear(q_in, p, ids.q);
    let k = linear(kv_in, p, ids.k);
    let v = linear(kv_in, p, ids.v);
    let mut ctx = Mat::zeros(q_in.rows, p.config().d_model);
    let mut probs = Vec::with_capacity(heads * q_segs.len());
    for (qs, ks) in q_segs.iter().zip(kv_segs) {
        for h in 0..heads {
            let qh = q.block(qs.start, qs.len, h * dk, dk);
            let kh = k.block(ks.start, ks.len, h * dk, dk);
            let vh = v.block(ks.start, ks.len, h * dk, dk);
            let mut s = matmul_nt(qh.view(), kh.view());
            for i in 0..s.rows {
                let row = s.row_mut(i);
                for (j, x) in row.iter_mut().enumerate() {
                    *x = if causal && j > i { f64::NEG_INFINITY } else { *x * scale };
                }
                softmax_in_place(row);
            }
            let oh = matmul(s.view(), vh.view());
            ctx.set_block(qs.start, h * dk, &oh);
            probs.push(s);
        }
    }
    let out = linear(&ctx, p, ids.o);
    (
        out,
        AttnCache {
            q_in: q_in.clone(),
            kv_in: kv_in.clone(),
            q,
            k,
            v,
            q_segs: q_segs.to_vec(),
            kv_segs: kv_segs.to_vec(),
            probs,
            ctx,
        },
    )
}

/// Returns (d q_in, d kv_in).
fn attention_backward(dout: &Mat, c: &AttnCache, ids: AttentionIds, g: &mut Grads<'_>) -> (Mat, Mat) {
    let d = c.q.cols;
    let heads = c.probs.len() / c.q_segs.len().max(1);
    let dk = d / heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let dctx = linear_backward(&c.ctx, dout, ids.o, g);
    let mut dq = Mat::zeros(c.q.rows, d);
    let mut dkm = Mat::zeros(c.k.rows, d);
    let mut dv = Mat::zeros(c.v.rows, d);
    for (si, (qs, ks)) in c.q_segs.iter().zip(&c.kv_segs).enumerate() {
        for h in 0..heads {
            let probs = &c.probs[si * heads + h];
            let doh = dctx.block(qs.start, qs.len, h * dk, dk);
            let qh = c.q.block(qs.start, qs.len, h * dk, dk);
            let kh = c.k.block(ks.start, ks.len, h * dk, dk);
            let vh = c.v.block(ks.start, ks.len, h * dk, dk);
            let dp = matmul_nt(doh.view(), vh.view());
            let mut dvh = Mat::zeros(vh.rows, dk);
            matmul_tn_acc(probs.view(), doh.view(), &mut dvh.data);
            let mut ds = Mat::zeros(dp.rows, dp.cols);
            for i in 0..dp.rows {
                let pr = probs.row(i);
                let dpr = dp.row(i);
                let dot: f64 = pr.iter().zip(dpr).map(|(a, b)| a * b).sum();
                for ((o, &pv), &dpv) in ds.row_mut(i).iter_mut().zip(pr).zip(dpr) {
                    *o = pv * (dpv - dot) * scale;
                }
            }
            let dqh = matmul(ds.view(), kh.view());
            let mut dkh = Mat::zeros(kh.rows, dk);
            matmul_tn_acc(ds.view(), qh.view(), &mut dkh.data);
            dq.set_block(qs.start, h * dk, &dqh);
            dkm.set_block(ks.start, h * dk, &dkh);
            dv.set_block(ks.start, h * dk, &dvh);
        }
    }
    let dq_in = linear_backward(&c.q_in, &dq, ids.q, g);
    let mut dkv_in = linear_backward(&c.kv_in, &dkm, ids.k, g);
    dkv_in.add_assign(&linear_backward(&c.kv_in, &dv, ids.v, g));
    (dq_in, dkv_in)
}

/// Scaled embeddings plus positions counted from each segment's start.
fn embed(ids: &[TokenId], segs: &[Seg], table: MatRef<'_>, p: &ModelParams) -> Mat {
    let d = table.cols;
    let scale = (d as f64).sqrt();
    let pe = p.positional();
    let mut x = Mat::zeros(ids.len(), d);
    for s in segs {
        for pos in 0..s.len {
            let i = s.start + pos;
            let e = table.row(ids[i] as usize);
            for ((o, v), q) in x.row_mut(i).iter_mut().zip(e).zip(pe.row(pos)) {
                *o = v * scale + q;
            }
        }
    }
    x
}

fn embed_backward(ids: &[TokenId], dx: &Mat, target: &mut [f64]) {
    let d = dx.cols;
    let scale = (d as f64).sqrt();
    for (i, &id) in ids.iter().enumerate() {
        let dst = &mut target[id as usize * d..(id as usize + 1) * d];
        for (t, v) in dst.iter_mut().zip(dx.row(i)) {
            *t += v * scale;
        }
    }
}

struct EncoderLayerCache {
    norm1: NormCache,
    attn: AttnCache,
    drop1: Option<Vec<f64>>,
    norm2: NormCache,
    ffn: FfnCache,
    drop2: Option<Vec<f64>>,
}

pub(crate) struct EncoderCache {
    ids: Vec<TokenId>,
    drop0: Option<Vec<f64>>,
    layers: Vec<EncoderLayerCache>,
    final_norm: NormCache,
}

/// Encodes the packed sources `src` split by `segs`.
pub(crate) fn encoder_forward(
    p: &ModelParams,
    sites: &EmbeddingSites<'_>,
    src: &[TokenId],
    segs: &[Seg],
    mut rng: Option<&mut (dyn RngCore + '_)>,
) -> (Mat, EncoderCache) {
    let dp = p.config().dropout_p;
    let mut x = embed(src, segs, sites.encoder, p);
    let drop0 = apply_dropout(&mut x, dp, rng.as_deref_mut());
    let mut layers = Vec::with_capacity(p.layout().encoder.len());
    for ids in &p.layout().encoder {
        let (h1, norm1) = layer_norm(&x, p, ids.self_norm);
        let (mut a, attn) = attention(&h1, segs, &h1, segs, false, p, ids.self_attn);
        let drop1 = apply_dropout(&mut a, dp, rng.as_deref_mut());
        x.add_assign(&a);
        let (h2, norm2) = layer_norm(&x, p, ids.ffn_norm);
        let (mut f, ffn_cache) = ffn(&h2, p, ids.ffn);
        let drop2 = apply_dropout(&mut f, dp, rng.as_deref_mut());
        x.add_assign(&f);
        layers.push(EncoderLayerCache {
            norm1,
            attn,
            drop1,
            norm2,
            ffn: ffn_cache,
            drop2,
        });
    }
    let (out, final_norm) = layer_norm(&x, p, p.layout().encoder_norm);
    (
        out,
        EncoderCache {
            ids: src.to_vec(),
            drop0,
            layers,
            final_norm,
        },
    )
}

fn encoder_backward(d_out: &Mat, c: &EncoderCache, g: &mut Grads<'_>, emb_target: &mut [f64]) {
    let layout = g.params.layout();
    let final_ids = layout.encoder_norm;
    let layer_ids: Vec<_> = layout.encoder.clone();
    let mut dx = layer_norm_backward(d_out, &c.final_norm, final_ids, g);
    for (ids, lc) in layer_ids.iter().zip(&c.layers).rev() {
        let df = undo_dropout(&dx, &lc.drop2);
        let dh2 = ffn_backward(&df, &lc.ffn, ids.ffn, g);
        dx.add_assign(&layer_norm_backward(&dh2, &lc.norm2, ids.ffn_norm, g));
        let da = undo_dropout(&dx, &lc.drop1);
        let (mut dh1, dkv) = attention_backward(&da, &lc.attn, ids.self_attn, g);
        dh1.add_assign(&dkv);
        dx.add_assign(&layer_norm_backward(&dh1, &lc.norm1, ids.self_norm, g));
    }
    let dx = undo_dropout(&dx, &c.drop0);
    embed_backward(&c.ids, &dx, emb_target);
}

struct DecoderLayerCache {
    norm1: NormCache,
    self_attn: AttnCache,
    drop1: Option<Vec<f64>>,
    norm2: NormCache,
    cross_attn: AttnCache,
    drop2: Option<Vec<f64>>,
    norm3: NormCache,
    ffn: FfnCache,
    drop3: Option<Vec<f64>>,
}

pub(crate) struct DecoderCache {
    ids: Vec<TokenId>,
    drop0: Option<Vec<f64>>,
    layers: Vec<DecoderLayerCache>,
    final_norm: NormCache,
    output: Mat,
}

/// Decodes packed inputs `dec_in` (split by `dec_segs`) against packed
/// encoder states `enc` (split by `enc_segs`), pairing segments in order.
pub(crate) fn decoder_forward(
    p: &ModelParams,
    sites: &EmbeddingSites<'_>,
    dec_in: &[TokenId],
    dec_segs: &[Seg],
    enc: &Mat,
    enc_segs: &[Seg],
    mut rng: Option<&mut (dyn RngCore + '_)>,
) -> (Mat, DecoderCache) {
    let dp = p.config().dropout_p;
    let mut x = embed(dec_in, dec_segs, sites.decoder, p);
    let drop0 = apply_dropout(&mut x, dp, rng.as_deref_mut());
    let mut layers = Vec::with_capacity(p.layout().decoder.len());
    for ids in &p.layout().decoder {
        let (h1, norm1) = layer_norm(&x, p, ids.self_norm);
        let (mut a, self_attn) = attention(&h1, dec_segs, &h1, dec_segs, true, p, ids.self_attn);
        let drop1 = apply_dropout(&mut a, dp, rng.as_deref_mut());
        x.add_assign(&a);
        let (h2, norm2) = layer_norm(&x, p, ids.cross_norm);
        let (mut c, cross_attn) = attention(&h2, dec_segs, enc, enc_segs, false, p, ids.cross_attn);
        let drop2 = apply_dropout(&mut c, dp, rng.as_deref_mut());
        x.add_assign(&c);
        let (h3, norm3) = layer_norm(&x, p, ids.ffn_norm);
        let (mut f, ffn_cache) = ffn(&h3, p, ids.ffn);
        let drop3 = apply_dropout(&mut f, dp, rng.as_deref_mut());
        x.add_assign(&f);
        layers.push(DecoderLayerCache {
            norm1,
            self_attn,
            drop1,
            norm2,
            cross_attn,
            drop2,
            norm3,
            ffn: ffn_cache,
            drop3,
        });
    }
    let (out, final_norm) = layer_norm(&x, p, p.layout().decoder_norm);
    (
        out.clone(),
        DecoderCache {
            ids: dec_in.to_vec(),
            drop0,
            layers,
            final_norm,
            output: out,
        },
    )
}

/// Returns d enc_out.
fn decoder_backward(d_out: &Mat, c: &DecoderCache, enc_rows: usize, g: &mut Grads<'_>, emb_target: &mut [f64]) -> Mat {
    let layout = g.params.layout();
    let final_ids = layout.decoder_norm;
    let layer_ids: Vec<_> = layout.decoder.clone();
    let d = d_out.cols;
    let mut d_enc = Mat::zeros(enc_rows, d);
    let mut dx = layer_norm_backward(d_out, &c.final_norm, final_ids, g);
    for (ids, lc) in layer_ids.iter().zip(&c.layers).rev() {
        let df = undo_dropout(&dx, &lc.drop3);
        let dh3 = ffn_backward(&df, &lc.ffn, ids.ffn, g);
        dx.add_assign(&layer_norm_backward(&dh3, &lc.norm3, ids.ffn_norm, g));

        let dc = undo_dropout(&dx, &lc.drop2);
        let (dh2, dkv) = attention_backward(&dc, &lc.cross_attn, ids.cross_attn, g);
        d_enc.add_assign(&dkv);
        dx.add_assign(&layer_norm_backward(&dh2, &lc.norm2, ids.cross_norm, g));

        let da = undo_dropout(&dx, &lc.drop1);
        let (mut dh1, dkv) = attention_backward(&da, &lc.self_attn, ids.self_attn, g);
        dh1.add_assign(&dkv);
        dx.add_assign(&layer_norm_backward(&dh1, &lc.norm1, ids.self_norm, g));
    }
    let dx = undo_dropout(&dx, &c.drop0);
    embed_backward(&c.ids, &dx, emb_target);
    d_enc
}

pub(crate) struct PackedCache {
    enc_out: Mat,
    enc: EncoderCache,
    dec: DecoderCache,
}

/// Logits for every decoder row of a set of examples, stacked in order
/// (`Σ dec_len × vocab`). Each source must be non-empty.
pub(crate) fn forward_packed(
    p: &ModelParams,
    sites: &EmbeddingSites<'_>,
    srcs: &[&[TokenId]],
    decs: &[&[TokenId]],
    mut rng: Option<&mut (dyn RngCore + '_)>,
) -> (Mat, PackedCache) {
    let enc_segs = segments(srcs.iter().map(|s| s.len()));
    let dec_segs = segments(decs.iter().map(|s| s.len()));
    let src: Vec<TokenId> = srcs.concat();
    let dec: Vec<TokenId> = decs.concat();
    let (enc_out, enc) = encoder_forward(p, sites, &src, &enc_segs, rng.as_deref_mut());
    let (dec_out, dec) = decoder_forward(p, sites, &dec, &dec_segs, &enc_out, &enc_segs, rng);
    let logits = matmul_nt(dec_out.view(), sites.output);
    (logits, PackedCache { enc_out, enc, dec })
}

pub(crate) fn backward_packed(
    p: &ModelParams,
    sites: &EmbeddingSites<'_>,
    cache: &PackedCache,
    dlogits: &Mat,
    values: &mut [f64],
    site_grads: &mut SiteGrads<'_>,
) {
    let emb_range = p.layout().range(p.layout().embedding);
    let d_dec_out = matmul(dlogits.view(), sites.output);
    let mut g = Grads { params: p, values };
    match site_grads {
        SiteGrads::Tied => {
            let mut emb = vec![0.0; emb_range.len()];
            matmul_tn_acc(dlogits.view(), cache.dec.output.view(), &mut emb);
            let d_enc = decoder_backward(&d_dec_out, &cache.dec, cache.enc_out.rows, &mut g, &mut emb);
            encoder_backward(&d_enc, &cache.enc, &mut g, &mut emb);
            for (t, v) in values[emb_range].iter_mut().zip(&emb) {
                *t += v;
            }
        }
        SiteGrads::Separate(sep) => {
            let [enc_site, dec_site, out_site] = &mut **sep;
            matmul_tn_acc(dlogits.view(), cache.dec.output.view(), out_site);
            let d_enc = decoder_backward(&d_dec_out, &cache.dec, cache.enc_out.rows, &mut g, dec_site);
            encoder_backward(&d_enc, &cache.enc, &mut g, enc_site);
        }
    }
}

/// Self-attention maps of every encoder layer for `src`, one per head.
pub fn encoder_attention_maps(p: &ModelParams, src: &[TokenId]) -> Vec<Mat> {
    let sites = EmbeddingSites::tied(p);
    let (_, cache) = encoder_forward(p, &sites, src, &segments([src.len()]), None);
    cache.layers.into_iter().flat_map(|l| l.attn.probs).collect()
}

/// Self- and cross-attention maps of every decoder layer.
pub fn decoder_attention_maps(p: &ModelParams, src: &[TokenId], dec_in: &[TokenId]) -> Vec<Mat> {
    let sites = EmbeddingSites::tied(p);
    let enc_segs = segments([src.len()]);
    let (enc_out, _) = encoder_forward(p, &sites, src, &enc_segs, None);
    let (_, cache) = decoder_forward(p, &sites, dec_in, &segments([dec_in.len()]), &enc_out, &enc_segs, None);
    cache
        .layers
        .into_iter()
        .flat_map(|l| l.self_attn.probs.into_iter().chain(l.cross_attn.probs))
        .collect()
}
