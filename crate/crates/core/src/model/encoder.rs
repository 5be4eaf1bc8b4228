use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

use super::config::EncoderConfig;
use super::params::Params;
use crate::error::{Error, Result};
use crate::seed::{self, Rng};
use crate::window::{ContextWindow, PaddedBatch};

pub const LN_EPS: f64 = 1e-5;

/// Whether dropout is applied. Training draws masks from the given stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

/// Several sequences laid end to end. Attention never crosses a sequence
/// boundary, and keys with `key_mask == false` are never attended to.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub tokens: Vec<u32>,
    pub segments: Vec<u8>,
    pub positions: Vec<u32>,
    pub key_mask: Vec<bool>,
    /// `offsets[i]..offsets[i + 1]` is sequence `i`.
    pub offsets: Vec<usize>,
    /// Packed index of each sequence's focus `[SEP]`.
    pub focus: Vec<usize>,
}

impl Batch {
    pub fn pack<'a>(windows: impl IntoIterator<Item = &'a ContextWindow>) -> Self {
        let mut b = Batch { offsets: vec![0], ..Default::default() };
        for w in windows {
            b.focus.push(b.tokens.len() + w.focus_sep_index);
            b.tokens.extend_from_slice(&w.token_ids);
            b.segments.extend_from_slice(&w.segment_ids);
            b.positions.extend_from_slice(&w.position_ids);
            b.key_mask.extend(std::iter::repeat_n(true, w.len()));
            b.offsets.push(b.tokens.len());
        }
        b
    }

    /// Keeps every padded row at full width, with PAD keys masked out.
    pub fn from_padded(p: &PaddedBatch) -> Self {
        let mut b = Batch { offsets: vec![0], ..Default::default() };
        for r in 0..p.len() {
            b.focus.push(b.tokens.len() + p.focus_sep_index[r]);
            b.tokens.extend_from_slice(&p.token_ids[r]);
            b.segments.extend_from_slice(&p.segment_ids[r]);
            b.positions.extend_from_slice(&p.position_ids[r]);
            b.key_mask.extend_from_slice(&p.attention_mask[r]);
            b.offsets.push(b.tokens.len());
        }
        b
    }

    pub fn n_seqs(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    xhat1: Array2<f64>,
    rstd1: Array1<f64>,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    drop_attn: Option<Array2<f64>>,
    xhat2: Array2<f64>,
    rstd2: Array1<f64>,
    h2: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
    drop_ff: Option<Array2<f64>>,
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    drop_emb: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    xhatf: Array2<f64>,
    rstdf: Array1<f64>,
    /// Final token representations, `n_tokens × d_model`.
    pub hidden: Array2<f64>,
    n_heads: usize,
}

impl EncoderCache {
    /// Attention weights of one layer, sequence and head (`queries × keys`).
    pub fn attention(&self, layer: usize, seq: usize, head: usize) -> &Array2<f64> {
        &self.layers[layer].probs[seq * self.n_heads + head]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub config: EncoderConfig,
    pub params: Params,
}

pub fn gelu(u: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * u * (1.0 + (c * (u + 0.044715 * u * u * u)).tanh())
}

pub fn gelu_grad(u: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let t = (c * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * u * u)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += b;
    y
}

/// `dw += xᵀ dy`, `db += Σ dy`.
pub(crate) fn linear_backward(x: &ArrayView2<f64>, dy: &Array2<f64>, dw: &mut Array2<f64>, db: &mut Array1<f64>) {
    general_mat_mul(1.0, &x.t(), dy, 1.0, dw);
    *db += &dy.sum_axis(Axis(0));
}

pub(crate) fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        *r = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * *r);
    }
    let mut y = &xhat * g;
    y += b;
    (y, xhat, rstd)
}

pub(crate) fn layer_norm_backward(
    dy: &Array2<f64>,
    xhat: &Array2<f64>,
    rstd: &Array1<f64>,
    g: &Array1<f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *db += &dy.sum_axis(Axis(0));
    *dg += &(dy * xhat).sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * g;
    for ((mut row, xh), &r) in dx.rows_mut().into_iter().zip(xhat.rows()).zip(rstd) {
        let m1 = row.sum() / d;
        let m2 = row.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
        row.zip_mut_with(&xh, |v, &x| *v = r * (*v - m1 - x * m2));
    }
    dx
}

fn dropout(a: &mut Array2<f64>, rate: f64, mode: &mut Mode) -> Option<Array2<f64>> {
    match mode {
        Mode::Train(rng) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            let mask = Array2::from_shape_simple_fn(a.dim(), || if rng.gen::<f64>() < rate { 0.0 } else { keep });
            *a *= &mask;
            Some(mask)
        }
        _ => None,
    }
}

fn softmax_masked(row: &mut [f64], mask: &[bool]) {
    let max = row.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (v, &m) in row.iter_mut().zip(mask) {
        *v = if m { (*v - max).exp() } else { 0.0 };
        sum += *v;
    }
    if sum > 0.0 {
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

impl Transformer {
    pub fn new(config: EncoderConfig, root_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::stream(root_seed, seed::INIT);
        let params = Params::init(&config, &mut rng);
        Ok(Transformer { config, params })
    }

    pub fn check_batch(&self, batch: &Batch) -> Result<()> {
        let cfg = &self.config;
        for i in 0..batch.n_seqs() {
            let len = batch.range(i).len();
            if len > cfg.max_len {
                return Err(Error::WindowTooLong { len, max_len: cfg.max_len });
            }
        }
        if let Some(&p) = batch.positions.iter().find(|&&p| p as usize >= cfg.max_len) {
            return Err(Error::WindowTooLong { len: p as usize + 1, max_len: cfg.max_len });
        }
        if let Some(&t) = batch.tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::InvalidConfig(format!("token id {t} outside vocabulary of {}", cfg.vocab_size)));
        }
        if let Some(&s) = batch.segments.iter().find(|&&s| s as usize >= cfg.n_segments) {
            return Err(Error::InvalidConfig(format!("segment id {s} outside {} segments", cfg.n_segments)));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Batch, mut mode: Mode) -> Result<EncoderCache> {
        self.check_batch(batch)?;
        let cfg = &self.config;
        let p = &self.params;
        let mut x = Array2::zeros((batch.n_tokens(), cfg.d_model));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            row += &p.tok_emb.row(batch.tokens[i] as usize);
            row += &p.pos_emb.row(batch.positions[i] as usize);
            row += &p.seg_emb.row(batch.segments[i] as usize);
        }
        let drop_emb = dropout(&mut x, cfg.dropout, &mut mode);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in &p.layers {
            let (h1, xhat1, rstd1) = layer_norm(&x, &l.ln1_g, &l.ln1_b);
            let q = linear(&h1, &l.wq, &l.bq);
            let k = linear(&h1, &l.wk, &l.bk);
            let v = linear(&h1, &l.wv, &l.bv);
            let (ctx, probs) = self.attention(&q, &k, &v, batch);
            let mut a = linear(&ctx, &l.wo, &l.bo);
            let drop_attn = dropout(&mut a, cfg.dropout, &mut mode);
            x += &a;
            let (h2, xhat2, rstd2) = layer_norm(&x, &l.ln2_g, &l.ln2_b);
            let u = linear(&h2, &l.w1, &l.b1);
            let g = u.mapv(gelu);
            let mut f = linear(&g, &l.w2, &l.b2);
            let drop_ff = dropout(&mut f, cfg.dropout, &mut mode);
            x += &f;
            layers.push(LayerCache { xhat1, rstd1, h1, q, k, v, probs, ctx, drop_attn, xhat2, rstd2, h2, u, g, drop_ff });
        }
        let (hidden, xhatf, rstdf) = layer_norm(&x, &p.lnf_g, &p.lnf_b);
        Ok(EncoderCache { drop_emb, layers, xhatf, rstdf, hidden, n_heads: cfg.n_heads })
    }

    /// Final representations in eval mode.
    pub fn encode(&self, batch: &Batch) -> Result<Array2<f64>> {
        Ok(self.forward(batch, Mode::Eval)?.hidden)
    }

    /// Padded output `[batch × width × d_model]`.
    pub fn encode_padded(&self, padded: &PaddedBatch) -> Result<ndarray::Array3<f64>> {
        let hidden = self.encode(&Batch::from_padded(padded))?;
        let shape = (padded.len(), padded.width(), self.config.d_model);
        Ok(hidden.into_shape_with_order(shape).expect("rows are full width"))
    }

    fn attention(&self, q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>, batch: &Batch) -> (Array2<f64>, Vec<Array2<f64>>) {
        let nh = self.config.n_heads;
        let dh = self.config.d_head();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = Array2::zeros(q.dim());
        let mut probs = Vec::with_capacity(batch.n_seqs() * nh);
        for s in 0..batch.n_seqs() {
            let r = batch.range(s);
            let mask = &batch.key_mask[r.clone()];
            for h in 0..nh {
                let c = h * dh..(h + 1) * dh;
                let qs = q.slice(s![r.clone(), c.clone()]);
                let ks = k.slice(s![r.clone(), c.clone()]);
                let vs = v.slice(s![r.clone(), c.clone()]);
                let mut sc = qs.dot(&ks.t());
                sc *= scale;
                for mut row in sc.rows_mut() {
                    softmax_masked(row.as_slice_mut().expect("contiguous"), mask);
                }
                ctx.slice_mut(s![r.clone(), c]).assign(&sc.dot(&vs));
                probs.push(sc);
            }
        }
        (ctx, probs)
    }

    fn attention_backward(
        &self,
        dctx: &Array2<f64>,
        c: &LayerCache,
        batch: &Batch,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let nh = self.config.n_heads;
        let dh = self.config.d_head();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros(dctx.dim());
        let mut dk = Array2::zeros(dctx.dim());
        let mut dv = Array2::zeros(dctx.dim());
        for s in 0..batch.n_seqs() {
            let r = batch.range(s);
            for h in 0..nh {
                let cols = h * dh..(h + 1) * dh;
                let p = &c.probs[s * nh + h];
                let d_out = dctx.slice(s![r.clone(), cols.clone()]);
                let qs = c.q.slice(s![r.clone(), cols.clone()]);
                let ks = c.k.slice(s![r.clone(), cols.clone()]);
                let vs = c.v.slice(s![r.clone(), cols.clone()]);
                let mut ds = d_out.dot(&vs.t());
                dv.slice_mut(s![r.clone(), cols.clone()]).assign(&p.t().dot(&d_out));
                for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                    let dot: f64 = row.iter().zip(prow).map(|(a, b)| a * b).sum();
                    row.zip_mut_with(&prow, |g, &pv| *g = pv * (*g - dot) * scale);
                }
                dq.slice_mut(s![r.clone(), cols.clone()]).assign(&ds.dot(&ks));
                dk.slice_mut(s![r.clone(), cols]).assign(&ds.t().dot(&qs));
            }
        }
        (dq, dk, dv)
    }

    /// Accumulates parameter gradients given `d_hidden = ∂L/∂hidden`.
    pub fn backward(&self, batch: &Batch, cache: &EncoderCache, d_hidden: &Array2<f64>, grads: &mut Params) {
        let p = &self.params;
        let mut dx = layer_norm_backward(d_hidden, &cache.xhatf, &cache.rstdf, &p.lnf_g, &mut grads.lnf_g, &mut grads.lnf_b);
        for (li, c) in cache.layers.iter().enumerate().rev() {
            let l = &p.layers[li];
            let gl = &mut grads.layers[li];

            let mut df = dx.clone();
            if let Some(m) = &c.drop_ff {
                df *= m;
            }
            linear_backward(&c.g.view(), &df, &mut gl.w2, &mut gl.b2);
            let mut du = df.dot(&l.w2.t());
            du.zip_mut_with(&c.u, |d, &u| *d *= gelu_grad(u));
            linear_backward(&c.h2.view(), &du, &mut gl.w1, &mut gl.b1);
            let dh2 = du.dot(&l.w1.t());
            dx += &layer_norm_backward(&dh2, &c.xhat2, &c.rstd2, &l.ln2_g, &mut gl.ln2_g, &mut gl.ln2_b);

            let mut da = dx.clone();
            if let Some(m) = &c.drop_attn {
                da *= m;
            }
            linear_backward(&c.ctx.view(), &da, &mut gl.wo, &mut gl.bo);
            let dctx = da.dot(&l.wo.t());
            let (dq, dk, dv) = self.attention_backward(&dctx, c, batch);
            linear_backward(&c.h1.view(), &dq, &mut gl.wq, &mut gl.bq);
            linear_backward(&c.h1.view(), &dk, &mut gl.wk, &mut gl.bk);
            linear_backward(&c.h1.view(), &dv, &mut gl.wv, &mut gl.bv);
            let mut dh1 = dq.dot(&l.wq.t());
            general_mat_mul(1.0, &dk, &l.wk.t(), 1.0, &mut dh1);
            general_mat_mul(1.0, &dv, &l.wv.t(), 1.0, &mut dh1);
            dx += &layer_norm_backward(&dh1, &c.xhat1, &c.rstd1, &l.ln1_g, &mut gl.ln1_g, &mut gl.ln1_b);
        }
        if let Some(m) = &cache.drop_emb {
            dx *= m;
        }
        for (i, row) in dx.rows().into_iter().enumerate() {
            let mut t = grads.tok_emb.row_mut(batch.tokens[i] as usize);
            t += &row;
            let mut pe = grads.pos_emb.row_mut(batch.positions[i] as usize);
            pe += &row;
            let mut se = grads.seg_emb.row_mut(batch.segments[i] as usize);
            se += &row;
        }
    }
}
