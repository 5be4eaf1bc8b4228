use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::encoder::sigmoid;
use crate::corpus::{Label, LabelSet, N_LABELS};
use crate::error::{Error, Result};

pub const DEFAULT_L1: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-6;
pub const MAX_ITER: usize = 2000;

/// Lowercased alphanumeric word tokens.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdf {
    pub terms: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
}

impl TfIdf {
    /// Smooth idf `ln((1 + n) / (1 + df)) + 1`.
    pub fn fit(texts: &[&str]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            let mut ws = words(t);
            ws.sort();
            ws.dedup();
            for w in ws {
                *df.entry(w).or_default() += 1;
            }
        }
        let n = texts.len() as f64;
        let idf = df.values().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        let terms = df.into_keys().enumerate().map(|(i, w)| (w, i)).collect();
        TfIdf { terms, idf }
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }

    /// L2-normalized sparse row sorted by term index. Unknown words are dropped.
    pub fn transform(&self, text: &str) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for w in words(text) {
            if let Some(&i) = self.terms.get(&w) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut row: Vec<(usize, f64)> = counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|(_, v)| *v /= norm);
        }
        row
    }
}

/// One-vs-rest L1-penalized logistic regression over TF-IDF features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowLogReg {
    pub tfidf: TfIdf,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub l1: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn logits(x: &[Vec<(usize, f64)>], w: &[f64], b: f64) -> Vec<f64> {
    x.iter().map(|row| b + row.iter().map(|&(i, v)| w[i] * v).sum::<f64>()).collect()
}

fn objective(x: &[Vec<(usize, f64)>], y: &[f64], w: &[f64], b: f64, l1: f64) -> f64 {
    let z = logits(x, w, b);
    let data: f64 = z.iter().zip(y).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / x.len() as f64;
    data + l1 * (w.iter().map(|v| v.abs()).sum::<f64>() + b.abs())
}

/// Accelerated proximal gradient with restart on objective increase. The
/// bias is penalized too, so a large enough `l1` zeroes every coefficient.
fn fista(x: &[Vec<(usize, f64)>], y: &[f64], n_terms: usize, l1: f64) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let max_sq = x.iter().map(|r| r.iter().map(|(_, v)| v * v).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / (0.25 * (max_sq + 1.0));
    let (mut w, mut b) = (vec![0.0; n_terms], 0.0);
    let (mut yw, mut yb) = (w.clone(), b);
    let mut t = 1.0f64;
    let mut f_old = objective(x, y, &w, b, l1);
    for _ in 0..MAX_ITER {
        let z = logits(x, &yw, yb);
        let mut gw = vec![0.0; n_terms];
        let mut gb = 0.0;
        for (row, (&zi, &yi)) in x.iter().zip(z.iter().zip(y)) {
            let r = (sigmoid(zi) - yi) / n;
            gb += r;
            for &(i, v) in row {
                gw[i] += r * v;
            }
        }
        let w_new: Vec<f64> = yw.iter().zip(&gw).map(|(&a, &g)| soft_threshold(a - step * g, step * l1)).collect();
        let b_new = soft_threshold(yb - step * gb, step * l1);
        let f_new = objective(x, y, &w_new, b_new, l1);
        if f_new > f_old {
            t = 1.0;
            yw.clone_from(&w);
            yb = b;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_new;
        yw = w_new.iter().zip(&w).map(|(&a, &o)| a + momentum * (a - o)).collect();
        yb = b_new + momentum * (b_new - b);
        t = t_new;
        let done = (f_old - f_new).abs() < TOLERANCE;
        w = w_new;
        b = b_new;
        f_old = f_new;
        if done {
            break;
        }
    }
    (w, b)
}

pub fn bow_logreg_train(texts: &[&str], labels: &[LabelSet], l1: f64) -> Result<BowLogReg> {
    if texts.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if texts.len() != labels.len() {
        return Err(Error::InvalidConfig("texts and labels differ in length".into()));
    }
    let tfidf = TfIdf::fit(texts);
    let x: Vec<Vec<(usize, f64)>> = texts.iter().map(|t| tfidf.transform(t)).collect();
    let mut weights = Vec::with_capacity(N_LABELS);
    let mut bias = Vec::with_capacity(N_LABELS);
    for l in Label::ALL {
        let y: Vec<f64> = labels.iter().map(|s| if s.contains(l) { 1.0 } else { 0.0 }).collect();
        let (w, b) = fista(&x, &y, tfidf.len(), l1);
        weights.push(w);
        bias.push(b);
    }
    Ok(BowLogReg { tfidf, weights, bias, l1 })
}

impl BowLogReg {
    pub fn score(&self, text: &str) -> [f64; N_LABELS] {
        let row = self.tfidf.transform(text);
        let mut out = [0.0; N_LABELS];
        for (k, o) in out.iter_mut().enumerate() {
            *o = sigmoid(logits(std::slice::from_ref(&row), &self.weights[k], self.bias[k])[0]);
        }
        out
    }

    pub fn n_nonzero(&self) -> usize {
        self.weights.iter().flatten().filter(|&&w| w != 0.0).count() + self.bias.iter().filter(|&&b| b != 0.0).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_terms_contribute_nothing() {
        let tf = TfIdf::fit(&["call the clinic", "take aspirin daily"]);
        let row = tf.transform("call aspirin");
        assert_eq!(row.len(), 2);
        assert!(row.iter().all(|&(i, _)| i == tf.terms["call"] || i == tf.terms["aspirin"]));
        assert!(tf.transform("nothing known here").is_empty());
    }

    #[test]
    fn infinite_penalty_gives_one_half() {
        let texts = ["call the clinic", "take aspirin daily", "rest"];
        let labels = [LabelSet::from_labels([Label::Appointment]), LabelSet::from_labels([Label::Medication]), LabelSet::EMPTY];
        let m = bow_logreg_train(&texts, &labels, 1e6).unwrap();
        assert_eq!(m.n_nonzero(), 0);
        assert_eq!(m.score("call the clinic"), [0.5; N_LABELS]);
        assert!(bow_logreg_train(&[], &[], 1.0).is_err());
    }
}
