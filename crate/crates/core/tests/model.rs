use carenote_core::corpus::LabelSet;
use carenote_core::model::gradcheck::{grad_check, DEFAULT_EPS};
use carenote_core::model::heads::{bce, multilabel_bce_loss};
use carenote_core::model::{Batch, Cnn, CnnConfig, EncoderConfig, Mode, ParamSet, Params, Transformer};
use carenote_core::model::cnn::WordVocab;
use carenote_core::window::{ContextWindow, EncodedDocument, PaddedBatch};
use carenote_core::{Label, N_LABELS};
use ndarray::Array2;

const VOCAB: usize = 300;

fn fixture_doc() -> EncodedDocument {
    let sentences: Vec<Vec<u32>> =
        vec![vec![10, 11, 12], vec![20, 21, 22, 23], vec![30, 31], vec![40, 41, 42, 43, 44], vec![50]];
    EncodedDocument { doc_id: "f".into(), labels: vec![LabelSet::EMPTY; sentences.len()], sentences }
}

fn fixture_windows() -> Vec<ContextWindow> {
    let d = fixture_doc();
    vec![d.window(0, 2, 512), d.window(2, 2, 512), d.window(4, 1, 512)]
}

/// Larger weights and nonzero biases so every nonlinearity sees non-trivial inputs.
fn perturbed(cfg: EncoderConfig, seed: u64) -> Transformer {
    let mut m = Transformer::new(cfg, seed).unwrap();
    let mut k = 0u64;
    for t in m.params.tensors_mut() {
        let matrix = t.shape.len() == 2;
        for v in t.data.iter_mut() {
            k += 1;
            let wobble = 0.1 * ((k as f64) * 0.7).sin();
            *v = if matrix { *v * 10.0 } else { *v + wobble };
        }
    }
    m
}

mod oracle {
    use super::*;

    fn ln(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let r = 1.0 / (var + 1e-5).sqrt();
        x.iter().enumerate().map(|(i, v)| (v - mean) * r * g[i] + b[i]).collect()
    }

    fn affine(x: &[f64], w: &Array2<f64>, b: &[f64]) -> Vec<f64> {
        (0..w.ncols()).map(|j| b[j] + (0..x.len()).map(|i| x[i] * w[[i, j]]).sum::<f64>()).collect()
    }

    fn gelu(u: f64) -> f64 {
        0.5 * u * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (u + 0.044715 * u.powi(3))).tanh())
    }

    fn v(a: &ndarray::Array1<f64>) -> Vec<f64> {
        a.to_vec()
    }

    /// Straight-line forward pass of one window.
    pub fn hidden(m: &Transformer, w: &ContextWindow) -> Vec<Vec<f64>> {
        let p: &Params = &m.params;
        let d = m.config.d_model;
        let nh = m.config.n_heads;
        let dh = d / nh;
        let n = w.len();
        let mut x: Vec<Vec<f64>> = (0..n)
            .map(|t| {
                (0..d)
                    .map(|j| {
                        p.tok_emb[[w.token_ids[t] as usize, j]]
                            + p.pos_emb[[w.position_ids[t] as usize, j]]
                            + p.seg_emb[[w.segment_ids[t] as usize, j]]
                    })
                    .collect()
            })
            .collect();
        for l in &p.layers {
            let h: Vec<Vec<f64>> = x.iter().map(|r| ln(r, &v(&l.ln1_g), &v(&l.ln1_b))).collect();
            let q: Vec<Vec<f64>> = h.iter().map(|r| affine(r, &l.wq, &v(&l.bq))).collect();
            let k: Vec<Vec<f64>> = h.iter().map(|r| affine(r, &l.wk, &v(&l.bk))).collect();
            let vv: Vec<Vec<f64>> = h.iter().map(|r| affine(r, &l.wv, &v(&l.bv))).collect();
            let mut ctx = vec![vec![0.0; d]; n];
            for head in 0..nh {
                for i in 0..n {
                    let s: Vec<f64> = (0..n)
                        .map(|j| (0..dh).map(|c| q[i][head * dh + c] * k[j][head * dh + c]).sum::<f64>() / (dh as f64).sqrt())
                        .collect();
                    let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = s.iter().map(|z| (z - mx).exp()).collect();
                    let z: f64 = e.iter().sum();
                    for c in 0..dh {
                        ctx[i][head * dh + c] = (0..n).map(|j| e[j] / z * vv[j][head * dh + c]).sum();
                    }
                }
            }
            for i in 0..n {
                let a = affine(&ctx[i], &l.wo, &v(&l.bo));
                for j in 0..d {
                    x[i][j] += a[j];
                }
                let h2 = ln(&x[i], &v(&l.ln2_g), &v(&l.ln2_b));
                let u: Vec<f64> = affine(&h2, &l.w1, &v(&l.b1)).into_iter().map(gelu).collect();
                let f = affine(&u, &l.w2, &v(&l.b2));
                for j in 0..d {
                    x[i][j] += f[j];
                }
            }
        }
        x.iter().map(|r| ln(r, &v(&p.lnf_g), &v(&p.lnf_b))).collect()
    }

    pub fn scores(m: &Transformer, w: &ContextWindow) -> Vec<f64> {
        let h = hidden(m, w);
        affine(&h[w.focus_sep_index], &m.params.cls_w, &v(&m.params.cls_b))
            .into_iter()
            .map(|z| 1.0 / (1.0 + (-z).exp()))
            .collect()
    }
}

#[test]
fn forward_matches_straight_line_oracle() {
    let m = perturbed(EncoderConfig::tiny(VOCAB), 11);
    let windows = fixture_windows();
    let batch = Batch::pack(&windows);
    let hidden = m.encode(&batch).unwrap();
    let probs = m.classify(&batch).unwrap();
    let mut max_err: f64 = 0.0;
    for (s, w) in windows.iter().enumerate() {
        let h = oracle::hidden(&m, w);
        for (t, row) in h.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                max_err = max_err.max((hidden[[batch.offsets[s] + t, j]] - v).abs());
            }
        }
        for (k, &v) in oracle::scores(&m, w).iter().enumerate() {
            max_err = max_err.max((probs[[s, k]] - v).abs());
        }
    }
    assert!(max_err < 1e-10, "max deviation {max_err}");
}

#[test]
fn output_shape_and_zero_head() {
    let mut m = Transformer::new(EncoderConfig::tiny(VOCAB), 1).unwrap();
    let w = fixture_doc().window(1, 2, 512);
    let padded = PaddedBatch::from_windows(std::slice::from_ref(&w));
    let out = m.encode_padded(&padded).unwrap();
    assert_eq!(out.shape(), &[1, w.len(), 16]);
    m.params.cls_w.fill(0.0);
    m.params.cls_b.fill(0.0);
    let probs = m.classify(&Batch::pack(&fixture_windows())).unwrap();
    assert_eq!(probs.dim(), (3, N_LABELS));
    assert!(probs.iter().all(|&p| p == 0.5));
}

#[test]
fn padding_is_never_attended() {
    let m = perturbed(EncoderConfig::tiny(VOCAB), 2);
    let windows = fixture_windows();
    let padded = PaddedBatch::from_windows(&windows);
    let batch = Batch::from_padded(&padded);
    let cache = m.forward(&batch, Mode::Eval).unwrap();
    for (s, w) in windows.iter().enumerate() {
        for layer in 0..2 {
            for head in 0..2 {
                let a = cache.attention(layer, s, head);
                for row in a.rows() {
                    assert!(row.iter().skip(w.len()).all(|&p| p == 0.0));
                }
            }
        }
    }
    let packed = m.encode(&Batch::pack(&windows)).unwrap();
    let full = m.encode_padded(&padded).unwrap();
    let mut off = 0;
    for (s, w) in windows.iter().enumerate() {
        for t in 0..w.len() {
            for j in 0..16 {
                assert!((full[[s, t, j]] - packed[[off + t, j]]).abs() < 1e-12);
            }
        }
        off += w.len();
    }
}

#[test]
fn batch_order_and_determinism() {
    let m = perturbed(EncoderConfig::tiny(VOCAB), 3);
    let w = fixture_windows();
    let a = m.classify(&Batch::pack(&w)).unwrap();
    let rev: Vec<ContextWindow> = w.iter().rev().cloned().collect();
    let b = m.classify(&Batch::pack(&rev)).unwrap();
    for s in 0..3 {
        for k in 0..N_LABELS {
            assert!((a[[s, k]] - b[[2 - s, k]]).abs() < 1e-12);
        }
    }
    let again = m.classify(&Batch::pack(&w)).unwrap();
    assert_eq!(a, again);
}

#[test]
fn context_tokens_change_scores() {
    let m = perturbed(EncoderConfig::tiny(VOCAB), 4);
    let w = fixture_windows();
    let before = m.classify(&Batch::pack(&w)).unwrap();
    let mut z = m.clone();
    for win in &w {
        for (t, &s) in win.token_ids.iter().zip(&win.segment_ids) {
            if s == 1 {
                z.params.tok_emb.row_mut(*t as usize).fill(0.0);
            }
        }
    }
    let after = z.classify(&Batch::pack(&w)).unwrap();
    assert!(before.iter().zip(after.iter()).any(|(a, b)| (a - b).abs() > 1e-6));
}

#[test]
fn overlong_window_is_rejected() {
    let cfg = EncoderConfig { max_len: 8, ..EncoderConfig::tiny(VOCAB) };
    let m = Transformer::new(cfg, 1).unwrap();
    let w = fixture_doc().window(2, 2, 512);
    assert!(matches!(m.encode(&Batch::pack([&w])), Err(carenote_core::Error::WindowTooLong { .. })));
}

fn targets() -> Array2<f64> {
    let sets = [
        LabelSet::from_labels([Label::Appointment]),
        LabelSet::EMPTY,
        LabelSet::from_labels([Label::Medication, Label::Lab]),
    ];
    Array2::from_shape_fn((3, N_LABELS), |(i, k)| sets[i].to_targets()[k])
}

#[test]
fn bce_examples() {
    let y = targets();
    let p = y.clone();
    assert!(multilabel_bce_loss(&p, &y, 1.0) <= 1e-6);
    let half = Array2::from_elem((3, N_LABELS), 0.5);
    assert!((multilabel_bce_loss(&half, &y, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    // 2 × 7 hand computation
    let p = Array2::from_shape_vec((2, 7), vec![0.9, 0.2, 0.3, 0.6, 0.1, 0.5, 0.7, 0.4, 0.8, 0.05, 0.5, 0.3, 0.99, 0.2]).unwrap();
    let y = Array2::from_shape_vec((2, 7), vec![1., 0., 0., 1., 0., 1., 0., 0., 1., 0., 1., 0., 1., 0.]).unwrap();
    let terms = [
        0.9f64.ln(), 0.8f64.ln(), 0.7f64.ln(), 0.6f64.ln(), 0.9f64.ln(), 0.5f64.ln(), 0.3f64.ln(),
        0.6f64.ln(), 0.8f64.ln(), 0.95f64.ln(), 0.5f64.ln(), 0.7f64.ln(), 0.99f64.ln(), 0.8f64.ln(),
    ];
    let hand = -terms.iter().sum::<f64>() / 14.0;
    assert!((multilabel_bce_loss(&p, &y, 1.0) - hand).abs() < 1e-15);
    assert!(bce(0.0, 1.0, 1.0).is_finite());
}

#[test]
fn classification_gradients_match_finite_differences() {
    let m = perturbed(EncoderConfig::tiny(VOCAB), 5);
    let batch = Batch::pack(&fixture_windows());
    let y = targets();
    let (_, g) = m.classification_grad(&batch, &y, 2.0).unwrap();
    let loss = |p: &Params| {
        let mm = Transformer { config: m.config.clone(), params: p.clone() };
        mm.classification_loss(&batch, &y, 2.0, Mode::Eval, None)
    };
    let r = grad_check(&m.params, &g, loss, 300, DEFAULT_EPS, 1).unwrap();
    assert!(r.n_checked >= 200);
    assert!(r.passed(1e-4), "{r:?}");
}

#[test]
fn pretrain_gradients_match_finite_differences() {
    let m = perturbed(EncoderConfig::tiny(VOCAB), 6);
    let mut windows = fixture_windows();
    windows[0].token_ids[0] = 4;
    windows[1].token_ids[1] = 4;
    let batch = Batch::pack(&windows);
    let mlm = vec![vec![(0usize, 20u32)], vec![(1, 10), (7, 40)], vec![]];
    let switched = vec![true, false, true];
    let mut g = m.params.zeros_like();
    m.pretrain_loss(&batch, &mlm, &switched, Mode::Eval, Some(&mut g)).unwrap();
    let loss = |p: &Params| {
        let mm = Transformer { config: m.config.clone(), params: p.clone() };
        Ok(mm.pretrain_loss(&batch, &mlm, &switched, Mode::Eval, None)?.total)
    };
    let r = grad_check(&m.params, &g, loss, 300, DEFAULT_EPS, 2).unwrap();
    assert!(r.passed(1e-4), "{r:?}");
}

#[test]
fn corrupted_encoder_gradient_is_detected() {
    let m = perturbed(EncoderConfig::tiny(VOCAB), 5);
    let batch = Batch::pack(&fixture_windows());
    let y = targets();
    let (_, mut g) = m.classification_grad(&batch, &y, 1.0).unwrap();
    g.layers[0].w1.mapv_inplace(|v| v * 1.01);
    let loss = |p: &Params| {
        let mm = Transformer { config: m.config.clone(), params: p.clone() };
        mm.classification_loss(&batch, &y, 1.0, Mode::Eval, None)
    };
    assert!(!grad_check(&m.params, &g, loss, 200, DEFAULT_EPS, 1).unwrap().passed(1e-4));
}

#[test]
fn uniform_mlm_head_gives_log_vocab() {
    let mut m = Transformer::new(EncoderConfig::tiny(VOCAB), 7).unwrap();
    m.params.mlm_w.fill(0.0);
    m.params.mlm_b.fill(0.0);
    let batch = Batch::pack(&fixture_windows());
    let mlm = vec![vec![(0usize, 20u32)], vec![(1, 10)], vec![(0, 7)]];
    let l = m.pretrain_loss(&batch, &mlm, &[false; 3], Mode::Eval, None).unwrap();
    assert!((l.mlm - (VOCAB as f64).ln()).abs() < 1e-9);
    let none = m.pretrain_loss(&batch, &[vec![], vec![], vec![]], &[false; 3], Mode::Eval, None).unwrap();
    assert_eq!(none.mlm, 0.0);
    assert_eq!(none.total, none.switch);
}

#[test]
fn cnn_gradients_match_finite_differences() {
    let texts = ["call the clinic tomorrow", "take aspirin", "x", "follow up with cardiology in two weeks"];
    let vocab = WordVocab::fit(&texts);
    let cfg = CnnConfig { emb_dim: 6, n_filters: 5, ..CnnConfig::default() };
    let mut cnn = Cnn::new(cfg, vocab).unwrap();
    cnn.params.emb.mapv_inplace(|v| v * 5.0);
    let labels = [
        LabelSet::from_labels([Label::Appointment]),
        LabelSet::from_labels([Label::Medication]),
        LabelSet::EMPTY,
        LabelSet::from_labels([Label::Appointment, Label::Other]),
    ];
    let batch: Vec<_> = texts.iter().zip(&labels).map(|(t, l)| (cnn.encode(t), l.to_targets())).collect();
    assert_eq!(cnn.score("x").len(), N_LABELS);
    let mut g = cnn.params.zeros_like();
    cnn.loss(&batch, Some(&mut g));
    let loss = |p: &carenote_core::model::CnnParams| {
        let mut c = cnn.clone();
        c.params = p.clone();
        Ok(c.loss(&batch, None))
    };
    let r = grad_check(&cnn.params, &g, loss, 200, DEFAULT_EPS, 3).unwrap();
    assert!(r.passed(1e-4), "{r:?}");
}
