use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::config::EncoderConfig;
use crate::seed::Rng;

pub struct Tensor<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

/// A collection of named dense tensors. Gradients use the same type.
pub trait ParamSet: Clone {
    fn tensors(&self) -> Vec<Tensor<'_>>;
    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.data.fill(value);
        }
    }

    fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.data.iter()).map(|v| v * v).sum()
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

pub(crate) fn t1<'a>(name: &str, a: &'a Array1<f64>) -> Tensor<'a> {
    Tensor { name: name.to_string(), shape: vec![a.len()], data: a.as_slice().expect("contiguous") }
}

pub(crate) fn t2<'a>(name: &str, a: &'a Array2<f64>) -> Tensor<'a> {
    Tensor { name: name.to_string(), shape: a.shape().to_vec(), data: a.as_slice().expect("contiguous") }
}

pub(crate) fn m1<'a>(name: &str, a: &'a mut Array1<f64>) -> TensorMut<'a> {
    TensorMut { name: name.to_string(), shape: vec![a.len()], data: a.as_slice_mut().expect("contiguous") }
}

pub(crate) fn m2<'a>(name: &str, a: &'a mut Array2<f64>) -> TensorMut<'a> {
    let shape = a.shape().to_vec();
    TensorMut { name: name.to_string(), shape, data: a.as_slice_mut().expect("contiguous") }
}

pub(crate) fn normal2(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

pub(crate) fn uniform2(rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..bound))
}

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl LayerParams {
    fn init(cfg: &EncoderConfig, rng: &mut Rng) -> Self {
        let (d, f) = (cfg.d_model, cfg.d_ff);
        LayerParams {
            ln1_g: Array1::ones(d),
            ln1_b: Array1::zeros(d),
            wq: normal2(d, d, INIT_STD, rng),
            bq: Array1::zeros(d),
            wk: normal2(d, d, INIT_STD, rng),
            bk: Array1::zeros(d),
            wv: normal2(d, d, INIT_STD, rng),
            bv: Array1::zeros(d),
            wo: normal2(d, d, INIT_STD, rng),
            bo: Array1::zeros(d),
            ln2_g: Array1::ones(d),
            ln2_b: Array1::zeros(d),
            w1: normal2(d, f, INIT_STD, rng),
            b1: Array1::zeros(f),
            w2: normal2(f, d, INIT_STD, rng),
            b2: Array1::zeros(d),
        }
    }
}

/// Encoder weights plus the classification, MLM and switch heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub seg_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Array1<f64>,
    pub lnf_b: Array1<f64>,
    /// `d_model × n_labels`
    pub cls_w: Array2<f64>,
    pub cls_b: Array1<f64>,
    /// `d_model × vocab_size`
    pub mlm_w: Array2<f64>,
    pub mlm_b: Array1<f64>,
    pub sw_w: Array1<f64>,
    pub sw_b: Array1<f64>,
}

impl Params {
    pub fn init(cfg: &EncoderConfig, rng: &mut Rng) -> Self {
        let d = cfg.d_model;
        let tok_emb = normal2(cfg.vocab_size, d, INIT_STD, rng);
        let pos_emb = normal2(cfg.max_len, d, INIT_STD, rng);
        let seg_emb = normal2(cfg.n_segments, d, INIT_STD, rng);
        let layers = (0..cfg.n_layers).map(|_| LayerParams::init(cfg, rng)).collect();
        Params {
            tok_emb,
            pos_emb,
            seg_emb,
            layers,
            lnf_g: Array1::ones(d),
            lnf_b: Array1::zeros(d),
            cls_w: normal2(d, cfg.n_labels, INIT_STD, rng),
            cls_b: Array1::zeros(cfg.n_labels),
            mlm_w: normal2(d, cfg.vocab_size, INIT_STD, rng),
            mlm_b: Array1::zeros(cfg.vocab_size),
            sw_w: normal2(1, d, INIT_STD, rng).row(0).to_owned(),
            sw_b: Array1::zeros(1),
        }
    }

    /// All-zero tensors with the shapes implied by `cfg`.
    pub fn zeros(cfg: &EncoderConfig) -> Self {
        let mut rng = crate::seed::stream(0, crate::seed::INIT);
        let mut p = Self::init(cfg, &mut rng);
        p.fill(0.0);
        p
    }
}

impl ParamSet for Params {
    fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = vec![t2("tok_emb", &self.tok_emb), t2("pos_emb", &self.pos_emb), t2("seg_emb", &self.seg_emb)];
        for (i, l) in self.layers.iter().enumerate() {
            let n = |s: &str| format!("layers.{i}.{s}");
            out.extend([
                t1(&n("ln1_g"), &l.ln1_g),
                t1(&n("ln1_b"), &l.ln1_b),
                t2(&n("wq"), &l.wq),
                t1(&n("bq"), &l.bq),
                t2(&n("wk"), &l.wk),
                t1(&n("bk"), &l.bk),
                t2(&n("wv"), &l.wv),
                t1(&n("bv"), &l.bv),
                t2(&n("wo"), &l.wo),
                t1(&n("bo"), &l.bo),
                t1(&n("ln2_g"), &l.ln2_g),
                t1(&n("ln2_b"), &l.ln2_b),
                t2(&n("w1"), &l.w1),
                t1(&n("b1"), &l.b1),
                t2(&n("w2"), &l.w2),
                t1(&n("b2"), &l.b2),
            ]);
        }
        out.extend([
            t1("lnf_g", &self.lnf_g),
            t1("lnf_b", &self.lnf_b),
            t2("cls_w", &self.cls_w),
            t1("cls_b", &self.cls_b),
            t2("mlm_w", &self.mlm_w),
            t1("mlm_b", &self.mlm_b),
            t1("sw_w", &self.sw_w),
            t1("sw_b", &self.sw_b),
        ]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let Params { tok_emb, pos_emb, seg_emb, layers, lnf_g, lnf_b, cls_w, cls_b, mlm_w, mlm_b, sw_w, sw_b } = self;
        let mut out = vec![m2("tok_emb", tok_emb), m2("pos_emb", pos_emb), m2("seg_emb", seg_emb)];
        for (i, l) in layers.iter_mut().enumerate() {
            let n = |s: &str| format!("layers.{i}.{s}");
            let LayerParams { ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2 } = l;
            out.extend([
                m1(&n("ln1_g"), ln1_g),
                m1(&n("ln1_b"), ln1_b),
                m2(&n("wq"), wq),
                m1(&n("bq"), bq),
                m2(&n("wk"), wk),
                m1(&n("bk"), bk),
                m2(&n("wv"), wv),
                m1(&n("bv"), bv),
                m2(&n("wo"), wo),
                m1(&n("bo"), bo),
                m1(&n("ln2_g"), ln2_g),
                m1(&n("ln2_b"), ln2_b),
                m2(&n("w1"), w1),
                m1(&n("b1"), b1),
                m2(&n("w2"), w2),
                m1(&n("b2"), b2),
            ]);
        }
        out.extend([
            m1("lnf_g", lnf_g),
            m1("lnf_b", lnf_b),
            m2("cls_w", cls_w),
            m1("cls_b", cls_b),
            m2("mlm_w", mlm_w),
            m1("mlm_b", mlm_b),
            m1("sw_w", sw_w),
            m1("sw_b", sw_b),
        ]);
        out
    }
}
