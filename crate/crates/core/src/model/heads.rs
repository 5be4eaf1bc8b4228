use ndarray::{Array1, Array2, Axis};

use super::encoder::{sigmoid, Batch, Mode, Transformer};
use super::params::Params;
use crate::corpus::N_LABELS;
use crate::error::{Error, Result};
use crate::window::{ContextWindow, SEGMENT_CONTEXT};

pub const BCE_EPS: f64 = 1e-7;

/// Binary cross-entropy of one probability, clamped into `[ε, 1-ε]`.
pub fn bce(p: f64, y: f64, pos_weight: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(pos_weight * y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `∂ bce / ∂ logit`, zero where the clamp is active.
pub fn bce_logit_grad(p: f64, y: f64, pos_weight: f64) -> f64 {
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
        return 0.0;
    }
    -(pos_weight * y * (1.0 - p) - (1.0 - y) * p)
}

/// Mean BCE over every (sentence, label) pair.
pub fn multilabel_bce_loss(probs: &Array2<f64>, targets: &Array2<f64>, pos_weight: f64) -> f64 {
    assert_eq!(probs.dim(), targets.dim(), "scores and labels must align");
    if probs.is_empty() {
        return 0.0;
    }
    let sum: f64 = probs.iter().zip(targets).map(|(&p, &y)| bce(p, y, pos_weight)).sum();
    sum / probs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainLoss {
    pub mlm: f64,
    pub switch: f64,
    pub total: f64,
}

fn gather(hidden: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    hidden.select(Axis(0), rows)
}

fn scatter_add(dh: &mut Array2<f64>, rows: &[usize], d: &Array2<f64>) {
    for (&r, src) in rows.iter().zip(d.rows()) {
        let mut dst = dh.row_mut(r);
        dst += &src;
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss)
    }
}

impl Transformer {
    /// `n_seqs × n_labels` logits over each focus `[SEP]`.
    pub fn classify_logits(&self, hidden: &Array2<f64>, batch: &Batch) -> Array2<f64> {
        let mut z = gather(hidden, &batch.focus).dot(&self.params.cls_w);
        z += &self.params.cls_b;
        z
    }

    /// Label probabilities in eval mode.
    pub fn classify(&self, batch: &Batch) -> Result<Array2<f64>> {
        let hidden = self.encode(batch)?;
        Ok(self.classify_logits(&hidden, batch).mapv(sigmoid))
    }

    /// Scores windows in chunks of `batch_size`, preserving order.
    pub fn score_windows(&self, windows: &[ContextWindow], batch_size: usize) -> Result<Vec<[f64; N_LABELS]>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(batch_size.max(1)) {
            let probs = self.classify(&Batch::pack(chunk))?;
            for row in probs.rows() {
                let mut s = [0.0; N_LABELS];
                s.iter_mut().zip(row).for_each(|(d, &v)| *d = v);
                out.push(s);
            }
        }
        Ok(out)
    }

    /// Mean multi-label BCE of a batch; accumulates gradients when asked.
    pub fn classification_loss(
        &self,
        batch: &Batch,
        targets: &Array2<f64>,
        pos_weight: f64,
        mode: Mode,
        grads: Option<&mut Params>,
    ) -> Result<f64> {
        let cache = self.forward(batch, mode)?;
        let logits = self.classify_logits(&cache.hidden, batch);
        let probs = logits.mapv(sigmoid);
        let loss = finite(multilabel_bce_loss(&probs, targets, pos_weight))?;
        if let Some(g) = grads {
            let n = probs.len() as f64;
            let mut dz = probs.clone();
            dz.zip_mut_with(targets, |p, &y| *p = bce_logit_grad(*p, y, pos_weight) / n);
            let rows = gather(&cache.hidden, &batch.focus);
            ndarray::linalg::general_mat_mul(1.0, &rows.t(), &dz, 1.0, &mut g.cls_w);
            g.cls_b += &dz.sum_axis(Axis(0));
            let drows = dz.dot(&self.params.cls_w.t());
            let mut dh = Array2::zeros(cache.hidden.dim());
            scatter_add(&mut dh, &batch.focus, &drows);
            self.backward(batch, &cache, &dh, g);
        }
        Ok(loss)
    }

    /// Mean over sequences of the masked-token loss plus the switch loss.
    ///
    /// `mlm[i]` lists `(position within sequence i, original token)`.
    /// A sequence without masked positions contributes 0 MLM loss.
    pub fn pretrain_loss(
        &self,
        batch: &Batch,
        mlm: &[Vec<(usize, u32)>],
        switched: &[bool],
        mode: Mode,
        grads: Option<&mut Params>,
    ) -> Result<PretrainLoss> {
        let n = batch.n_seqs();
        assert!(mlm.len() == n && switched.len() == n, "one target set per sequence");
        let cache = self.forward(batch, mode)?;
        let p = &self.params;
        let hidden = &cache.hidden;

        let mut rows = Vec::new();
        let mut ids = Vec::new();
        let mut weights = Vec::new();
        for (i, targets) in mlm.iter().enumerate() {
            let off = batch.offsets[i];
            for &(pos, id) in targets {
                rows.push(off + pos);
                ids.push(id as usize);
                weights.push(1.0 / (targets.len() as f64 * n as f64));
            }
        }
        let mut mlm_loss = 0.0;
        let mut dlogits = None;
        if !rows.is_empty() {
            let h = gather(hidden, &rows);
            let mut logits = h.dot(&p.mlm_w);
            logits += &p.mlm_b;
            for (r, mut row) in logits.rows_mut().into_iter().enumerate() {
                let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                mlm_loss += weights[r] * (sum.ln() - row[ids[r]].ln());
                row.mapv_inplace(|v| v / sum);
                row[ids[r]] -= 1.0;
                row.mapv_inplace(|v| v * weights[r]);
            }
            dlogits = Some((h, logits));
        }

        let mut pooled = Array2::zeros((n, self.config.d_model));
        let mut counts = vec![0usize; n];
        for i in 0..n {
            let mut acc = pooled.row_mut(i);
            for t in batch.range(i) {
                if batch.segments[t] == SEGMENT_CONTEXT && batch.key_mask[t] {
                    acc += &hidden.row(t);
                    counts[i] += 1;
                }
            }
            if counts[i] > 0 {
                acc.mapv_inplace(|v| v / counts[i] as f64);
            }
        }
        let z: Array1<f64> = pooled.dot(&p.sw_w) + p.sw_b[0];
        let probs = z.mapv(sigmoid);
        let ys: Vec<f64> = switched.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
        let switch_loss = if n == 0 { 0.0 } else { probs.iter().zip(&ys).map(|(&q, &y)| bce(q, y, 1.0)).sum::<f64>() / n as f64 };

        let loss = PretrainLoss { mlm: finite(mlm_loss)?, switch: finite(switch_loss)?, total: finite(mlm_loss + switch_loss)? };

        if let Some(g) = grads {
            let mut dh = Array2::zeros(hidden.dim());
            if let Some((h, dl)) = dlogits {
                ndarray::linalg::general_mat_mul(1.0, &h.t(), &dl, 1.0, &mut g.mlm_w);
                g.mlm_b += &dl.sum_axis(Axis(0));
                scatter_add(&mut dh, &rows, &dl.dot(&p.mlm_w.t()));
            }
            for i in 0..n {
                let dz = bce_logit_grad(probs[i], ys[i], 1.0) / n as f64;
                g.sw_b[0] += dz;
                g.sw_w.scaled_add(dz, &pooled.row(i));
                if counts[i] > 0 {
                    let scale = dz / counts[i] as f64;
                    for t in batch.range(i) {
                        if batch.segments[t] == SEGMENT_CONTEXT && batch.key_mask[t] {
                            dh.row_mut(t).scaled_add(scale, &p.sw_w);
                        }
                    }
                }
            }
            self.backward(batch, &cache, &dh, g);
        }
        Ok(loss)
    }

    /// Gradient of `classification_loss` in eval mode, as a fresh tensor set.
    pub fn classification_grad(&self, batch: &Batch, targets: &Array2<f64>, pos_weight: f64) -> Result<(f64, Params)> {
        let mut g = super::params::ParamSet::zeros_like(&self.params);
        let loss = self.classification_loss(batch, targets, pos_weight, Mode::Eval, Some(&mut g))?;
        Ok((loss, g))
    }
}
