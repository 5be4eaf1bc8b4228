//! Multi-label metrics, binary reduction, threshold tuning and agreement.
//!
//! A label is predicted when its score is at least the threshold.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabelSet, PerLabel, N_LABELS};
use crate::error::{Error, Result};

/// Thresholds are kept strictly inside (0, 1) by this margin.
pub const THRESHOLD_MARGIN: f64 = 1e-12;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn add(&mut self, pred: bool, gold: bool) {
        match (pred, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }

    pub fn f1(&self) -> f64 {
        f1(self.tp, self.fp, self.fn_)
    }
}

/// Mann-Whitney AUROC with ties counted ½. `None` without both classes.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Rank sum of positives with average ranks over ties, doubled to stay integral.
    let mut rank_sum2 = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        rank_sum2 += pos_in_group * (i as u64 + 1 + j as u64 + 1);
        i = j + 1;
    }
    let (np, nn) = (n_pos as u64, n_neg as u64);
    let u2 = rank_sum2 - np * (np + 1);
    Some(u2 as f64 / (2 * np * nn) as f64)
}

/// Mean AUROC over labels with both classes present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAuroc {
    pub value: f64,
    pub skipped: Vec<Label>,
}

fn column(scores: &[[f64; N_LABELS]], l: Label) -> Vec<f64> {
    scores.iter().map(|r| r[l.index()]).collect()
}

fn gold_column(labels: &[LabelSet], l: Label) -> Vec<bool> {
    labels.iter().map(|s| s.contains(l)).collect()
}

/// Labels lacking positives or negatives are skipped and listed; with
/// every label skipped the value is 0.5.
pub fn macro_auroc(scores: &[[f64; N_LABELS]], labels: &[LabelSet]) -> MacroAuroc {
    let mut values = Vec::new();
    let mut skipped = Vec::new();
    for l in Label::ALL {
        match auroc(&column(scores, l), &gold_column(labels, l)) {
            Some(v) => values.push(v),
            None => skipped.push(l),
        }
    }
    let value = if values.is_empty() { 0.5 } else { values.iter().sum::<f64>() / values.len() as f64 };
    MacroAuroc { value, skipped }
}

/// AUROC over all pooled (sentence, label) pairs; 0.5 when degenerate.
pub fn micro_auroc(scores: &[[f64; N_LABELS]], labels: &[LabelSet]) -> f64 {
    let flat: Vec<f64> = scores.iter().flatten().copied().collect();
    let gold: Vec<bool> = labels.iter().flat_map(|s| s.to_bools()).collect();
    auroc(&flat, &gold).unwrap_or(0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub per_label: PerLabel<f64>,
    pub micro: f64,
    /// Labels whose threshold fell back to the default for lack of positives.
    #[serde(default)]
    pub flagged: Vec<Label>,
}

impl Thresholds {
    pub fn uniform(t: f64) -> Self {
        Thresholds { per_label: PerLabel([t; N_LABELS]), micro: t, flagged: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.per_label.0.iter().chain(std::iter::once(&self.micro));
        if let Some(t) = all.into_iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::InvalidConfig(format!("threshold {t} outside (0, 1)")));
        }
        Ok(())
    }

    /// Labels whose score meets their own threshold.
    pub fn predict(&self, scores: &[f64; N_LABELS]) -> LabelSet {
        LabelSet::from_labels(Label::ALL.into_iter().filter(|l| scores[l.index()] >= self.per_label[*l]))
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::uniform(DEFAULT_THRESHOLD)
    }
}

fn clamp_threshold(t: f64) -> f64 {
    t.clamp(THRESHOLD_MARGIN, 1.0 - THRESHOLD_MARGIN)
}

/// Distinct observed scores, midpoints between neighbors, and 0.5,
/// clamped into (0, 1), sorted ascending.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = scores.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    let mut c: Vec<f64> = s.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    c.extend_from_slice(&s);
    c.push(DEFAULT_THRESHOLD);
    let mut c: Vec<f64> = c.into_iter().map(clamp_threshold).collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

pub fn f1_at(scores: &[f64], gold: &[bool], t: f64) -> f64 {
    let mut c = Counts::default();
    for (&s, &g) in scores.iter().zip(gold) {
        c.add(s >= t, g);
    }
    c.f1()
}

/// Best-F1 threshold among the candidates; ties go to the higher one.
pub fn tune_threshold(scores: &[f64], gold: &[bool]) -> (f64, f64) {
    let candidates = candidate_thresholds(scores);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let total_pos = gold.iter().filter(|&&g| g).count() as u64;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut k = 0;
    let mut best = (candidates[candidates.len() - 1], -1.0);
    for &t in candidates.iter().rev() {
        while k < order.len() && scores[order[k]] >= t {
            if gold[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let v = f1(tp, fp, total_pos - tp);
        if v > best.1 {
            best = (t, v);
        }
    }
    best
}

/// Per-label thresholds maximizing each label's F1 and a shared threshold
/// maximizing pooled micro F1.
pub fn tune_thresholds(scores: &[[f64; N_LABELS]], labels: &[LabelSet]) -> Result<Thresholds> {
    if scores.is_empty() {
        return Err(Error::Empty("validation split".into()));
    }
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let mut per_label = [DEFAULT_THRESHOLD; N_LABELS];
    let mut flagged = Vec::new();
    for l in Label::ALL {
        let gold = gold_column(labels, l);
        if !gold.iter().any(|&g| g) {
            flagged.push(l);
            continue;
        }
        per_label[l.index()] = tune_threshold(&column(scores, l), &gold).0;
    }
    let flat: Vec<f64> = scores.iter().flatten().copied().collect();
    let gold: Vec<bool> = labels.iter().flat_map(|s| s.to_bools()).collect();
    let micro = tune_threshold(&flat, &gold).0;
    Ok(Thresholds { per_label: PerLabel(per_label), micro, flagged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Summary {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_label_f1: PerLabel<f64>,
    pub per_label_counts: PerLabel<Counts>,
    pub micro_counts: Counts,
}

/// Micro F1 pools every pair at the micro threshold; macro F1 averages
/// per-label F1 at the per-label thresholds.
pub fn micro_macro(scores: &[[f64; N_LABELS]], labels: &[LabelSet], thresholds: &Thresholds) -> F1Summary {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let mut per = [Counts::default(); N_LABELS];
    let mut micro = Counts::default();
    for (row, gold) in scores.iter().zip(labels) {
        for l in Label::ALL {
            let g = gold.contains(l);
            per[l.index()].add(row[l.index()] >= thresholds.per_label[l], g);
            micro.add(row[l.index()] >= thresholds.micro, g);
        }
    }
    let per_f1 = per.map(|c| c.f1());
    F1Summary {
        micro_f1: micro.f1(),
        macro_f1: per_f1.iter().sum::<f64>() / N_LABELS as f64,
        per_label_f1: PerLabel(per_f1),
        per_label_counts: PerLabel(per),
        micro_counts: micro,
    }
}

/// A sentence is flagged when any label meets its per-label threshold.
pub fn binary_reduce_scores(scores: &[[f64; N_LABELS]], thresholds: &Thresholds) -> Vec<bool> {
    scores.iter().map(|r| !thresholds.predict(r).is_empty()).collect()
}

pub fn binary_reduce_labels(labels: &[LabelSet]) -> Vec<bool> {
    labels.iter().map(|s| s.any()).collect()
}

pub fn binary_f1(pred: &[bool], gold: &[bool]) -> f64 {
    assert_eq!(pred.len(), gold.len(), "columns must align");
    let mut c = Counts::default();
    for (&p, &g) in pred.iter().zip(gold) {
        c.add(p, g);
    }
    c.f1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    /// Chance agreement was 1, so the ratio is undefined.
    pub degenerate: bool,
}

pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<Kappa> {
    if a.len() != b.len() {
        return Err(Error::InvalidConfig(format!("annotation columns of length {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Empty("annotation columns".into()));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let po = agree / n;
    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    if pe >= 1.0 {
        return Ok(Kappa { value: if a == b { 1.0 } else { 0.0 }, degenerate: true });
    }
    Ok(Kappa { value: (po - pe) / (1.0 - pe), degenerate: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub micro_f1: f64,
    pub micro_auroc: f64,
    pub macro_f1: f64,
    pub macro_auroc: f64,
    pub binary_f1: f64,
    pub per_label_f1: PerLabel<f64>,
    pub thresholds: Thresholds,
    pub counts: PerLabel<Counts>,
    /// Labels left out of the macro AUROC for lack of positives or negatives.
    pub auroc_skipped: Vec<Label>,
    pub n_sentences: usize,
}

impl MetricsReport {
    pub fn compute(scores: &[[f64; N_LABELS]], labels: &[LabelSet], thresholds: &Thresholds) -> Self {
        let f = micro_macro(scores, labels, thresholds);
        let m = macro_auroc(scores, labels);
        let binary = binary_f1(&binary_reduce_scores(scores, thresholds), &binary_reduce_labels(labels));
        MetricsReport {
            micro_f1: f.micro_f1,
            micro_auroc: micro_auroc(scores, labels),
            macro_f1: f.macro_f1,
            macro_auroc: m.value,
            binary_f1: binary,
            per_label_f1: f.per_label_f1,
            thresholds: thresholds.clone(),
            counts: f.per_label_counts,
            auroc_skipped: m.skipped,
            n_sentences: scores.len(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Headline columns, then one row per label.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let heads = ["Micro F1", "Micro AUC", "Macro F1", "Macro AUC", "Binary F1"];
        let vals = [self.micro_f1, self.micro_auroc, self.macro_f1, self.macro_auroc, self.binary_f1];
        let row: Vec<String> = heads.iter().map(|h| format!("{h:>10}")).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
        let row: Vec<String> = vals.iter().map(|v| format!("{v:>10.4}")).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "{:<22}{:>8}{:>8}{:>8}{:>8}{:>11}", "label", "F1", "TP", "FP", "FN", "threshold").unwrap();
        for l in Label::ALL {
            let c = self.counts[l];
            writeln!(
                out,
                "{:<22}{:>8.4}{:>8}{:>8}{:>8}{:>11.4}",
                l.name(),
                self.per_label_f1[l],
                c.tp,
                c.fp,
                c.fn_,
                self.thresholds.per_label[l]
            )
            .unwrap();
        }
        if !self.auroc_skipped.is_empty() {
            let names: Vec<&str> = self.auroc_skipped.iter().map(|l| l.name()).collect();
            writeln!(out, "\nmacro AUROC skipped (single class): {}", names.join(", ")).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_examples() {
        assert_eq!(f1(10, 0, 0), 1.0);
        assert_eq!(f1(0, 5, 3), 0.0);
        assert!((f1(3, 1, 2) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1(0, 0, 0), 0.0);
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]), Some(1.0));
        assert_eq!(auroc(&[0.3; 6], &[true, false, true, false, false, true]), Some(0.5));
        assert_eq!(auroc(&[0.1, 0.2], &[false, false]), None);
        assert_eq!(auroc(&[0.1, 0.5, 0.5, 0.9], &[false, true, false, true]), Some(0.875));
    }

    #[test]
    fn kappa_from_agreement_table() {
        // a = 40 both yes, b = 10, c = 10, d = 40 both no
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (n, p, q) in [(40, true, true), (10, true, false), (10, false, true), (40, false, false)] {
            x.extend(std::iter::repeat_n(p, n));
            y.extend(std::iter::repeat_n(q, n));
        }
        let k = cohen_kappa(&x, &y).unwrap();
        assert!((k.value - 0.6).abs() < 1e-12);
        assert!(!k.degenerate);
        let c = cohen_kappa(&[true; 5], &[true; 5]).unwrap();
        assert_eq!(c, Kappa { value: 1.0, degenerate: true });
        assert_eq!(cohen_kappa(&[true, false], &[true, false]).unwrap().value, 1.0);
        assert!(cohen_kappa(&[true], &[true, false]).is_err());
    }

    #[test]
    fn thresholds_land_in_the_gap() {
        let scores = [0.1, 0.2, 0.65, 0.75, 0.9, 0.3];
        let gold = [false, false, false, true, true, false];
        let (t, f) = tune_threshold(&scores, &gold);
        assert_eq!(f, 1.0);
        assert!(t > 0.65 && t <= 0.75);
    }

    #[test]
    fn identical_scores_pick_highest_candidate() {
        let (t, _) = tune_threshold(&[0.3; 4], &[true, false, true, false]);
        assert_eq!(t, 0.3);
        let (t, _) = tune_threshold(&[0.7; 4], &[true, false, true, false]);
        assert_eq!(t, 0.7);
    }

    #[test]
    fn label_without_positives_is_flagged() {
        let scores = vec![[0.2; N_LABELS], [0.7; N_LABELS]];
        let labels = vec![LabelSet::from_labels([Label::Lab]), LabelSet::EMPTY];
        let t = tune_thresholds(&scores, &labels).unwrap();
        assert_eq!(t.flagged.len(), 6);
        assert_eq!(t.per_label[Label::Other], DEFAULT_THRESHOLD);
        assert!(tune_thresholds(&[], &[]).is_err());
    }

    #[test]
    fn binary_reduction_ignores_type() {
        let gold = [LabelSet::from_labels([Label::Lab])];
        let mut s = [0.0; N_LABELS];
        s[Label::Appointment.index()] = 0.9;
        let pred = binary_reduce_scores(&[s], &Thresholds::default());
        assert_eq!(binary_f1(&pred, &binary_reduce_labels(&gold)), 1.0);
        assert_eq!(binary_reduce_labels(&[LabelSet::from_labels([Label::Medication, Label::Lab])]), vec![true]);
    }

    #[test]
    fn report_round_trip_and_table() {
        let scores = vec![[0.9, 0.1, 0.2, 0.3, 0.1, 0.1, 0.1], [0.2, 0.8, 0.2, 0.3, 0.1, 0.1, 0.1]];
        let labels = vec![LabelSet::from_labels([Label::PatientInstructions]), LabelSet::from_labels([Label::Appointment])];
        let r = MetricsReport::compute(&scores, &labels, &Thresholds::default());
        let json = r.to_json().unwrap();
        let back = MetricsReport::from_json(&json).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json().unwrap(), json);
        assert!(r.to_table().starts_with("  Micro F1  Micro AUC   Macro F1  Macro AUC  Binary F1"));
        assert_eq!(r.auroc_skipped.len(), 5);
    }
}
