use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::bow::words;
use super::encoder::sigmoid;
use super::heads::{bce, bce_logit_grad};
use super::optim::{AdamW, AdamWConfig};
use super::params::{m1, m2, normal2, t1, t2, uniform2, ParamSet, Tensor, TensorMut};
use crate::corpus::{LabelSet, N_LABELS};
use crate::error::{Error, Result};
use crate::eval::macro_auroc;
use crate::seed;

pub const WORD_PAD: usize = 0;
pub const WORD_UNK: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub emb_dim: usize,
    pub n_filters: usize,
    pub widths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig { emb_dim: 32, n_filters: 32, widths: vec![2, 3, 4], epochs: 10, batch_size: 32, lr: 1e-3, patience: 3, seed: 1 }
    }
}

/// Word index with `PAD = 0` and `UNK = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordVocab {
    pub words: BTreeMap<String, usize>,
}

impl WordVocab {
    pub fn fit(texts: &[&str]) -> Self {
        let mut all: Vec<String> = texts.iter().flat_map(|t| words(t)).collect();
        all.sort();
        all.dedup();
        WordVocab { words: all.into_iter().enumerate().map(|(i, w)| (w, i + 2)).collect() }
    }

    pub fn len(&self) -> usize {
        self.words.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        words(text).iter().map(|w| self.words.get(w).copied().unwrap_or(WORD_UNK)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    /// Row `WORD_PAD` is never read; padding embeds as zeros.
    pub emb: Array2<f64>,
    /// Per width `w`: `(w · emb_dim) × n_filters`.
    pub conv_w: Vec<Array2<f64>>,
    pub conv_b: Vec<Array1<f64>>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

impl ParamSet for CnnParams {
    fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = vec![t2("emb", &self.emb)];
        for (i, (w, b)) in self.conv_w.iter().zip(&self.conv_b).enumerate() {
            out.push(t2(&format!("conv.{i}.w"), w));
            out.push(t1(&format!("conv.{i}.b"), b));
        }
        out.push(t2("out_w", &self.out_w));
        out.push(t1("out_b", &self.out_b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let CnnParams { emb, conv_w, conv_b, out_w, out_b } = self;
        let mut out = vec![m2("emb", emb)];
        for (i, (w, b)) in conv_w.iter_mut().zip(conv_b.iter_mut()).enumerate() {
            out.push(m2(&format!("conv.{i}.w"), w));
            out.push(m1(&format!("conv.{i}.b"), b));
        }
        out.push(m2("out_w", out_w));
        out.push(m1("out_b", out_b));
        out
    }
}

/// Word embeddings, one convolution per width with tanh, global max-pool,
/// then a linear layer with sigmoid outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Cnn {
    pub config: CnnConfig,
    pub vocab: WordVocab,
    pub params: CnnParams,
}

struct Forward {
    x: Array2<f64>,
    unfolded: Vec<Array2<f64>>,
    argmax: Vec<Vec<usize>>,
    pooled: Array1<f64>,
    logits: Array1<f64>,
}

impl Cnn {
    pub fn new(config: CnnConfig, vocab: WordVocab) -> Result<Self> {
        if config.widths.is_empty() || config.widths.contains(&0) || config.emb_dim == 0 || config.n_filters == 0 {
            return Err(Error::InvalidConfig("cnn widths and sizes must be positive".into()));
        }
        let mut rng = seed::stream(config.seed, seed::INIT);
        let e = config.emb_dim;
        let f = config.n_filters;
        let mut emb = normal2(vocab.len(), e, 0.1, &mut rng);
        emb.row_mut(WORD_PAD).fill(0.0);
        let conv_w = config.widths.iter().map(|&w| uniform2(w * e, f, (1.0 / (w * e) as f64).sqrt(), &mut rng)).collect();
        let conv_b = config.widths.iter().map(|_| Array1::zeros(f)).collect();
        let pooled = f * config.widths.len();
        let out_w = uniform2(pooled, N_LABELS, (1.0 / pooled as f64).sqrt(), &mut rng);
        let params = CnnParams { emb, conv_w, conv_b, out_w, out_b: Array1::zeros(N_LABELS) };
        Ok(Cnn { config, vocab, params })
    }

    /// Word ids, right-padded to the widest kernel.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut ids = self.vocab.encode(text);
        let min = self.config.widths.iter().copied().max().unwrap_or(1);
        if ids.len() < min {
            ids.resize(min, WORD_PAD);
        }
        ids
    }

    fn forward(&self, ids: &[usize]) -> Forward {
        let p = &self.params;
        let e = self.config.emb_dim;
        let mut x = p.emb.select(Axis(0), ids);
        for (t, &id) in ids.iter().enumerate() {
            if id == WORD_PAD {
                x.row_mut(t).fill(0.0);
            }
        }
        let flat = x.as_slice().expect("contiguous");
        let mut unfolded = Vec::new();
        let mut argmax = Vec::new();
        let mut pooled = Vec::new();
        for (wi, &w) in self.config.widths.iter().enumerate() {
            let n_pos = ids.len() + 1 - w;
            let u = Array2::from_shape_fn((n_pos, w * e), |(r, c)| flat[r * e + c]);
            let act = (u.dot(&p.conv_w[wi]) + &p.conv_b[wi]).mapv(f64::tanh);
            let mut best = vec![0usize; self.config.n_filters];
            for (f, b) in best.iter_mut().enumerate() {
                let col = act.column(f);
                *b = (0..n_pos).fold(0, |a, r| if col[r] > col[a] { r } else { a });
                pooled.push(col[*b]);
            }
            unfolded.push(u);
            argmax.push(best);
        }
        let pooled = Array1::from(pooled);
        let logits = pooled.dot(&p.out_w) + &p.out_b;
        Forward { x, unfolded, argmax, pooled, logits }
    }

    pub fn score_ids(&self, ids: &[usize]) -> [f64; N_LABELS] {
        let z = self.forward(ids).logits;
        std::array::from_fn(|k| sigmoid(z[k]))
    }

    pub fn score(&self, text: &str) -> [f64; N_LABELS] {
        self.score_ids(&self.encode(text))
    }

    /// Mean BCE over every (sentence, label) pair; accumulates gradients when asked.
    pub fn loss(&self, batch: &[(Vec<usize>, [f64; N_LABELS])], mut grads: Option<&mut CnnParams>) -> f64 {
        let p = &self.params;
        let e = self.config.emb_dim;
        let nf = self.config.n_filters;
        let denom = (batch.len() * N_LABELS) as f64;
        let mut total = 0.0;
        for (ids, y) in batch {
            let fw = self.forward(ids);
            let probs: Vec<f64> = fw.logits.iter().map(|&z| sigmoid(z)).collect();
            total += probs.iter().zip(y).map(|(&q, &t)| bce(q, t, 1.0)).sum::<f64>();
            let Some(g) = grads.as_deref_mut() else { continue };
            let dz = Array1::from_iter(probs.iter().zip(y).map(|(&q, &t)| bce_logit_grad(q, t, 1.0) / denom));
            g.out_b += &dz;
            for (i, &pv) in fw.pooled.iter().enumerate() {
                g.out_w.row_mut(i).scaled_add(pv, &dz);
            }
            let dpooled = p.out_w.dot(&dz);
            let mut dx = Array2::<f64>::zeros(fw.x.dim());
            for (wi, &w) in self.config.widths.iter().enumerate() {
                let u = &fw.unfolded[wi];
                for f in 0..nf {
                    let r = fw.argmax[wi][f];
                    let a = fw.pooled[wi * nf + f];
                    let dpre = dpooled[wi * nf + f] * (1.0 - a * a);
                    g.conv_b[wi][f] += dpre;
                    g.conv_w[wi].column_mut(f).scaled_add(dpre, &u.row(r));
                    let wcol = p.conv_w[wi].column(f);
                    for j in 0..w {
                        let mut dst = dx.row_mut(r + j);
                        dst.scaled_add(dpre, &wcol.slice(ndarray::s![j * e..(j + 1) * e]));
                    }
                }
            }
            for (t, &id) in ids.iter().enumerate() {
                if id != WORD_PAD {
                    let mut dst = g.emb.row_mut(id);
                    dst += &dx.row(t);
                }
            }
        }
        total / denom
    }
}

/// Trains with Adam on shuffled mini-batches. With a validation set the
/// epoch with the best macro AUROC is kept and training stops after
/// `patience` epochs without improvement.
pub fn cnn_train(
    texts: &[&str],
    labels: &[LabelSet],
    val: Option<(&[&str], &[LabelSet])>,
    config: CnnConfig,
) -> Result<Cnn> {
    if texts.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let vocab = WordVocab::fit(texts);
    let mut model = Cnn::new(config.clone(), vocab)?;
    let data: Vec<(Vec<usize>, [f64; N_LABELS])> =
        texts.iter().zip(labels).map(|(t, l)| (model.encode(t), l.to_targets())).collect();
    let val_data: Option<(Vec<Vec<usize>>, &[LabelSet])> =
        val.map(|(vt, vl)| (vt.iter().map(|t| model.encode(t)).collect(), vl));
    let mut opt = AdamW::new(AdamWConfig { lr: config.lr, weight_decay: 0.0, ..AdamWConfig::default() }, &model.params);
    let mut rng = seed::stream(config.seed, seed::SHUFFLING);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut best: Option<(f64, CnnParams)> = None;
    let mut stale = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<_> = chunk.iter().map(|&i| data[i].clone()).collect();
            let mut g = model.params.zeros_like();
            let loss = model.loss(&batch, Some(&mut g));
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            opt.step(&mut model.params, &g);
        }
        let Some((ids, gold)) = &val_data else { continue };
        let scores: Vec<[f64; N_LABELS]> = ids.iter().map(|i| model.score_ids(i)).collect();
        let auc = macro_auroc(&scores, gold).value;
        if best.as_ref().is_none_or(|(b, _)| auc > *b) {
            best = Some((auc, model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    if let Some((_, p)) = best {
        model.params = p;
    }
    Ok(model)
}
