//! Synthetic discharge notes whose label statistics follow a target
//! [`CorpusStats`], with label-specific cue phrases either inside the
//! labeled sentence or only in the sentence before it.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::stats::CorpusStats;
use super::surrogate::fill_surrogates;
use super::{Document, Label, LabelSet, SentenceSpec, Span, N_LABELS};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueMode {
    /// The labeled sentence itself contains the cue phrase.
    InSentence,
    /// The labeled sentence is generic; the cue sits in the preceding
    /// (unlabeled) sentence. Identical generic sentences also appear
    /// unlabeled, away from any cue.
    InContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_documents: usize,
    pub sentences_per_doc: (usize, usize),
    pub targets: CorpusStats,
    pub cue_mode: CueMode,
    pub seed: u64,
    pub id_prefix: String,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_documents: 600,
            sentences_per_doc: (12, 20),
            targets: CorpusStats::reference_targets(),
            cue_mode: CueMode::InSentence,
            seed: 1,
            id_prefix: "note".into(),
        }
    }
}

const HEADERS: [&str; 4] = ["HISTORY OF PRESENT ILLNESS", "BRIEF HOSPITAL COURSE", "DISCHARGE MEDICATIONS", "DISCHARGE PLAN"];
const FULL_LAYOUT_MIN: usize = 12;
/// Highest fraction of prose slots that can hold a cued sentence when cues
/// live in the preceding sentence.
const MAX_CONTEXT_RATE: f64 = 1.0 / 6.0;
const CALIBRATION_DOCS: usize = 400;

const CUES: [&[&str]; N_LABELS] = [
    // patient instructions
    &[
        "No driving until your post-op visit and you are no longer taking pain medications.",
        "Do not lift anything heavier than {n} pounds for {weeks} weeks.",
        "Please keep the incision clean and dry.",
        "Do not take a bath or go swimming for {weeks} weeks.",
        "Please weigh yourself every morning and call if you gain more than 3 pounds.",
        "You should avoid strenuous activity until cleared by your surgeon.",
        "Please call your doctor if you develop a fever or chest pain.",
        "Continue to use your incentive spirometer at home.",
        "Please return to the emergency room if your symptoms worsen.",
    ],
    // appointment
    &[
        "Please follow up with {doctor} in {weeks} weeks.",
        "You have an appointment with {doctor} on {date}.",
        "Follow up with your PCP within {days} days of discharge.",
        "An appointment has been scheduled with {clinic} for {date}.",
        "He will see {doctor} in {clinic} next week.",
        "Please call {clinic} to schedule a follow up visit in {weeks} weeks.",
    ],
    // medication
    &[
        "Hold your {drug} until you see your PCP.",
        "Continue {drug} {dose} for {days} more days.",
        "The patient was instructed to hold {drug} and avoid nsaids for {weeks} weeks.",
        "Restart {drug} once cleared by {doctor}.",
        "Please titrate the {drug} dose based on blood pressure readings.",
        "Take {drug} {dose} until {date} and then stop.",
    ],
    // lab
    &[
        "Please repeat a {lab} in {weeks} weeks to ensure resolution.",
        "The {lab} results are pending at the time of discharge.",
        "Please check a {lab} at the next visit.",
        "We ask that the PCP recheck the {lab} in {days} days.",
        "Please draw a {lab} on {date} and send the results to {doctor}.",
    ],
    // procedure
    &[
        "Please follow up for {proc} with GI.",
        "The patient will need a {proc} as an outpatient.",
        "Please schedule a {proc} within {weeks} weeks.",
        "She should undergo {proc} after the infection resolves.",
    ],
    // imaging
    &[
        "A repeat {imaging} is recommended in {weeks} weeks.",
        "The final read of the {imaging} is pending.",
        "Follow up {imaging} is needed to exclude possible malignancy.",
        "Please obtain a {imaging} to reevaluate the nodule.",
    ],
    // other
    &[
        "Please fax the discharge summary to {doctor} at {clinic}.",
        "We will monitor his nutritional status and trend weights closely.",
        "Please closely observe the patient's diet.",
        "The family should be contacted regarding goals of care.",
    ],
];

const TOPICS: [&[&str]; N_LABELS] = [
    &["The surgeon reviewed the wound care plan with the patient.", "The patient is eager to return to driving and lifting."],
    &["The patient has an established cardiologist, {doctor}.", "Her primary care doctor is {doctor} at {clinic}."],
    &["His {drug} was held during the admission.", "The {drug} dose was changed during this stay."],
    &["His {lab} was abnormal on the day of discharge.", "The {lab} was drawn shortly before discharge."],
    &["GI was consulted regarding a possible {proc}.", "The team discussed whether a {proc} was required."],
    &["The {imaging} showed a small nodule.", "A {imaging} was obtained on the day of discharge."],
    &["The patient has struggled to gain weight this year.", "Her husband asked to receive copies of all records."],
];

const GENERIC: &[&str] = &[
    "This should be addressed within {weeks} weeks.",
    "Please make sure this is followed up after discharge.",
    "The PCP should review this at the next visit.",
    "This will need to be arranged as an outpatient.",
];

const DISTRACTORS: &[&str] = &[
    "The patient was admitted with {condition}.",
    "He was started on {drug} {dose} daily.",
    "Vital signs remained stable throughout the stay.",
    "She tolerated the procedure well.",
    "Blood cultures were negative.",
    "The patient was discharged home in stable condition.",
    "Discharged on {drug} {dose} at bedtime.",
    "His {lab} was within normal limits.",
    "A {imaging} showed no acute process.",
    "Pain was well controlled on oral medications.",
    "He denied chest pain or shortness of breath.",
    "The patient remained afebrile.",
    "Physical therapy evaluated the patient.",
    "Her home medications were continued.",
    "The patient was transferred to the floor on hospital day {n}.",
    "He received {drug} in the emergency department.",
    "Labs on admission were notable for {condition}.",
    "There were no complications.",
    "The patient has a history of {condition}.",
    "Mr. [**Name**] is a {age} year old man with {condition}.",
    "Ms. [**Name**] presented to [**Hospital 1**] with {condition}.",
];

const DRUGS: &[&str] = &[
    "lasix", "metoprolol", "lisinopril", "warfarin", "aspirin", "plavix", "prednisone", "levofloxacin", "vancomycin",
    "amiodarone", "simvastatin", "keppra", "insulin glargine", "spironolactone", "allopurinol",
];
const LABS: &[&str] = &["cbc", "chem 7", "creatinine", "inr", "potassium level", "lft panel", "tsh", "hemoglobin a1c"];
const PROCS: &[&str] = &["egd", "colonoscopy", "bronchoscopy", "cardiac catheterization", "paracentesis", "thoracentesis", "skin biopsy"];
const IMAGING: &[&str] = &["chest ct", "chest xray", "abdominal ultrasound", "mri of the brain", "ct of the abdomen", "renal ultrasound"];
const CONDITIONS: &[&str] = &[
    "pneumonia", "chf exacerbation", "acute kidney injury", "cellulitis", "copd exacerbation", "a gi bleed", "sepsis",
    "atrial fibrillation", "syncope", "a hip fracture",
];
const CLINICS: &[&str] = &["the cardiology clinic", "the liver clinic", "[**Hospital 2**] clinic", "the transplant center", "the renal clinic"];
const DOSES: &[u32] = &[5, 10, 20, 25, 40, 80, 100];

fn render(template: &str, rng: &mut seed::Rng) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("template slots are closed");
        let slot = &rest[open + 1..close];
        let value = match slot {
            "drug" => DRUGS.choose(rng).unwrap().to_string(),
            "dose" => format!("{} mg", DOSES.choose(rng).unwrap()),
            "lab" => LABS.choose(rng).unwrap().to_string(),
            "proc" => PROCS.choose(rng).unwrap().to_string(),
            "imaging" => IMAGING.choose(rng).unwrap().to_string(),
            "condition" => CONDITIONS.choose(rng).unwrap().to_string(),
            "clinic" => CLINICS.choose(rng).unwrap().to_string(),
            "doctor" => "Dr. [**Name**]".to_string(),
            "date" => format!("[**2101-{}-{}**]", rng.gen_range(1..=12), rng.gen_range(1..=28)),
            "n" => rng.gen_range(5..=20).to_string(),
            "weeks" => rng.gen_range(1..=6).to_string(),
            "days" => rng.gen_range(2..=10).to_string(),
            "age" => rng.gen_range(40..=90).to_string(),
            other => panic!("unknown template slot {other}"),
        };
        out.push_str(&value);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

fn join_clauses(first: &str, second: &str) -> String {
    let head = first.strip_suffix('.').unwrap_or(first);
    let mut chars = second.chars();
    let tail: String = match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    };
    format!("{head} and {tail}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Header(usize),
    ListItem(usize),
    Prose,
}

fn layout(n: usize, rng: &mut seed::Rng) -> Vec<Slot> {
    if n < 3 {
        return vec![Slot::Prose; n];
    }
    if n < FULL_LAYOUT_MIN {
        let mut slots = vec![Slot::Header(1)];
        slots.extend(std::iter::repeat_n(Slot::Prose, n - 1));
        return slots;
    }
    let n_items = rng.gen_range(2..=3);
    let prose = n - HEADERS.len() - n_items;
    let hpi = (prose / 4).max(1);
    let plan = (prose / 4).max(1);
    let course = prose - hpi - plan;
    let mut slots = vec![Slot::Header(0)];
    slots.extend(std::iter::repeat_n(Slot::Prose, hpi));
    slots.push(Slot::Header(1));
    slots.extend(std::iter::repeat_n(Slot::Prose, course));
    slots.push(Slot::Header(2));
    slots.extend((1..=n_items).map(Slot::ListItem));
    slots.push(Slot::Header(3));
    slots.extend(std::iter::repeat_n(Slot::Prose, plan));
    slots
}

/// Lengths of maximal runs of consecutive prose slots.
fn prose_segments(slots: &[Slot]) -> Vec<usize> {
    let mut segments = Vec::new();
    let mut run = 0;
    for slot in slots {
        if *slot == Slot::Prose {
            run += 1;
        } else if run > 0 {
            segments.push(run);
            run = 0;
        }
    }
    if run > 0 {
        segments.push(run);
    }
    segments
}

fn n_prose(n: usize) -> usize {
    // worst case over the random list-item count
    if n < 3 {
        n
    } else if n < FULL_LAYOUT_MIN {
        n - 1
    } else {
        n - HEADERS.len() - 3
    }
}

/// Draw distribution over primary labels, corrected so that realized
/// prevalence (primary plus optional secondary) is proportional to the
/// targets.
fn primary_weights(targets: &[f64; N_LABELS], multi: f64) -> [f64; N_LABELS] {
    let total: f64 = targets.iter().sum();
    let goal = targets.map(|p| p / total);
    let mut w = goal;
    for _ in 0..50 {
        let mut realized = [0.0; N_LABELS];
        for l in 0..N_LABELS {
            let secondary: f64 = (0..N_LABELS)
                .filter(|&j| j != l && w[j] < 1.0)
                .map(|j| w[j] * w[l] / (1.0 - w[j]))
                .sum();
            realized[l] = w[l] + multi * secondary;
        }
        let sum: f64 = realized.iter().sum();
        for l in 0..N_LABELS {
            if realized[l] > 0.0 {
                w[l] *= goal[l] / (realized[l] / sum);
            }
        }
        let norm: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= norm);
    }
    w
}

fn draw_label(weights: &[f64; N_LABELS], exclude: Option<usize>, rng: &mut seed::Rng) -> Option<usize> {
    let total: f64 = (0..N_LABELS).filter(|&i| Some(i) != exclude).map(|i| weights[i]).sum();
    if total <= 0.0 {
        return None;
    }
    let mut u = rng.gen::<f64>() * total;
    let mut last = None;
    for i in (0..N_LABELS).filter(|&i| Some(i) != exclude && weights[i] > 0.0) {
        last = Some(i);
        if u < weights[i] {
            return Some(i);
        }
        u -= weights[i];
    }
    last
}

struct Plan {
    rate: f64,
    neighbor: f64,
    continuation: f64,
    multi: f64,
    weights: [f64; N_LABELS],
}

impl Plan {
    fn new(cfg: &GeneratorConfig) -> Result<Self> {
        let t = &cfg.targets;
        let (lo, hi) = cfg.sentences_per_doc;
        if cfg.n_documents == 0 || lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!(
                "need n_documents >= 1 and 1 <= min <= max sentences, got {} docs, {lo}..{hi}",
                cfg.n_documents
            )));
        }
        if !t.fractions_valid() {
            return Err(Error::InvalidConfig("target fractions must lie in [0, 1]".into()));
        }
        let total: f64 = t.per_label_prevalence.0.iter().sum();
        let multi = match cfg.cue_mode {
            CueMode::InSentence => t.multi_label_fraction,
            CueMode::InContext => 0.0,
        };
        let positive = t.per_label_prevalence.0.iter().filter(|&&p| p > 0.0).count();
        let multi = if positive < 2 { 0.0 } else { multi };
        let rate = if total > 0.0 { total / (1.0 + multi) } else { 0.0 };
        let budget = [lo, hi].iter().map(|&n| n_prose(n) as f64 / n as f64).fold(f64::INFINITY, f64::min);
        let capacity = match cfg.cue_mode {
            CueMode::InSentence => budget,
            // each cued sentence also needs a cue sentence and spacing
            CueMode::InContext => budget * MAX_CONTEXT_RATE,
        };
        if rate > capacity + 1e-12 {
            return Err(Error::Infeasible(format!(
                "expected labeled fraction {rate:.4} exceeds the available sentence budget {capacity:.4}"
            )));
        }
        let weights = if total > 0.0 { primary_weights(&t.per_label_prevalence.0, multi) } else { [0.0; N_LABELS] };
        let neighbor = t.neighbor_same_label_fraction.min(0.999);
        let mut plan = Plan { rate, neighbor, continuation: 0.0, multi, weights };
        if cfg.cue_mode == CueMode::InSentence {
            plan.calibrate_continuation(cfg);
        }
        Ok(plan)
    }

    /// Picks the run-continuation probability by bisection so that the
    /// simulated neighbor-share fraction over a fixed sample of layouts
    /// matches the target.
    fn calibrate_continuation(&mut self, cfg: &GeneratorConfig) {
        if self.rate <= 0.0 || self.neighbor <= 0.0 {
            self.continuation = 0.0;
            return;
        }
        let mut rng = seed::stream(cfg.seed, "calibration");
        let (lo, hi) = cfg.sentences_per_doc;
        let layouts: Vec<(usize, Vec<usize>)> = (0..CALIBRATION_DOCS)
            .map(|_| {
                let n = rng.gen_range(lo..=hi);
                (n, prose_segments(&layout(n, &mut rng)))
            })
            .collect();
        let sim_seed = seed::derive(cfg.seed, "calibration-draws");
        let realized = |plan: &Plan, q: f64| -> f64 {
            let mut rng = seed::stream(sim_seed, "sim");
            let (mut labeled, mut sharing) = (0usize, 0usize);
            for (n, segments) in &layouts {
                let sets = plan.in_sentence_labels(*n, segments, q, &mut rng);
                let mut offset = 0;
                for &len in segments {
                    let seg = &sets[offset..offset + len];
                    for i in 0..len {
                        if !seg[i].any() {
                            continue;
                        }
                        labeled += 1;
                        let left = i > 0 && seg[i - 1].intersects(seg[i]);
                        let right = i + 1 < len && seg[i + 1].intersects(seg[i]);
                        sharing += usize::from(left || right);
                    }
                    offset += len;
                }
            }
            if labeled == 0 { 0.0 } else { sharing as f64 / labeled as f64 }
        };
        let (mut lo_q, mut hi_q) = (0.0, 0.95);
        for _ in 0..25 {
            let mid = 0.5 * (lo_q + hi_q);
            if realized(self, mid) < self.neighbor {
                lo_q = mid;
            } else {
                hi_q = mid;
            }
        }
        self.continuation = 0.5 * (lo_q + hi_q);
    }

    /// Label sets for consecutive prose runs (`segments` gives run lengths;
    /// labels never continue across a header or list).
    fn in_sentence_labels(&self, n_total: usize, segments: &[usize], q: f64, rng: &mut seed::Rng) -> Vec<LabelSet> {
        let n_prose: usize = segments.iter().sum();
        let pi = (self.rate * n_total as f64 / n_prose.max(1) as f64).min(1.0);
        let start = if pi >= 1.0 { 1.0 } else { pi * (1.0 - q) / (1.0 - pi * q) };
        let mut out = Vec::with_capacity(n_prose);
        for &len in segments {
            let mut prev = LabelSet::EMPTY;
            for _ in 0..len {
                let primary = if prev.any() && rng.gen::<f64>() < q {
                    let options: Vec<Label> = prev.iter().collect();
                    Some(options.choose(rng).unwrap().index())
                } else if rng.gen::<f64>() < start {
                    draw_label(&self.weights, None, rng)
                } else {
                    None
                };
                let mut set = LabelSet::EMPTY;
                if let Some(p) = primary {
                    set.insert(Label::ALL[p]);
                    if rng.gen::<f64>() < self.multi {
                        if let Some(s) = draw_label(&self.weights, Some(p), rng) {
                            set.insert(Label::ALL[s]);
                        }
                    }
                }
                out.push(set);
                prev = set;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ContextRole {
    Distractor,
    Topic(usize),
    Cued(usize),
    Decoy,
}

fn in_context_roles(plan: &Plan, n_total: usize, n_prose: usize, rng: &mut seed::Rng) -> Vec<ContextRole> {
    let pi = (plan.rate * n_total as f64 / n_prose.max(1) as f64).min(MAX_CONTEXT_RATE);
    let event = if pi > 0.0 { (pi / (1.0 - 4.0 * pi)).min(0.95) } else { 0.0 };
    let decoy = if event < 1.0 { (event / 2.0) / (1.0 - event) } else { 0.0 };
    let mut roles = Vec::with_capacity(n_prose);
    while roles.len() < n_prose {
        let room = n_prose - roles.len();
        if room >= 2 && rng.gen::<f64>() < event {
            if let Some(l) = draw_label(&plan.weights, None, rng) {
                roles.push(ContextRole::Topic(l));
                roles.push(ContextRole::Cued(l));
                for _ in 0..2.min(n_prose - roles.len()) {
                    roles.push(ContextRole::Distractor);
                }
                continue;
            }
        }
        if rng.gen::<f64>() < decoy && roles.last().is_none_or(|r| !matches!(r, ContextRole::Topic(_))) {
            roles.push(ContextRole::Decoy);
            for _ in 0..2.min(n_prose - roles.len()) {
                roles.push(ContextRole::Distractor);
            }
            continue;
        }
        roles.push(ContextRole::Distractor);
    }
    roles
}

fn labeled_text(set: LabelSet, rng: &mut seed::Rng) -> String {
    let mut clauses = set.iter().map(|l| render(CUES[l.index()].choose(rng).unwrap(), rng));
    let first = clauses.next().expect("labeled sentence has a label");
    clauses.fold(first, |acc, c| join_clauses(&acc, &c))
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn generate_document(cfg: &GeneratorConfig, plan: &Plan, index: usize) -> Result<Document> {
    let mut rng = seed::indexed(cfg.seed, seed::CORPUS, index as u64);
    let (lo, hi) = cfg.sentences_per_doc;
    let n = rng.gen_range(lo..=hi);
    let slots = layout(n, &mut rng);
    let prose_count = slots.iter().filter(|s| **s == Slot::Prose).count();

    let mut prose: Vec<(String, LabelSet)> = Vec::with_capacity(prose_count);
    match cfg.cue_mode {
        CueMode::InSentence => {
            let segments = prose_segments(&slots);
            for set in plan.in_sentence_labels(n, &segments, plan.continuation, &mut rng) {
                let text = if set.any() { labeled_text(set, &mut rng) } else { render(DISTRACTORS.choose(&mut rng).unwrap(), &mut rng) };
                prose.push((text, set));
            }
        }
        CueMode::InContext => {
            for role in in_context_roles(plan, n, prose_count, &mut rng) {
                let entry = match role {
                    ContextRole::Distractor => (render(DISTRACTORS.choose(&mut rng).unwrap(), &mut rng), LabelSet::EMPTY),
                    ContextRole::Topic(l) => (render(TOPICS[l].choose(&mut rng).unwrap(), &mut rng), LabelSet::EMPTY),
                    ContextRole::Cued(l) => {
                        (render(GENERIC.choose(&mut rng).unwrap(), &mut rng), LabelSet::from_labels([Label::ALL[l]]))
                    }
                    ContextRole::Decoy => (render(GENERIC.choose(&mut rng).unwrap(), &mut rng), LabelSet::EMPTY),
                };
                prose.push(entry);
            }
        }
    }

    let mut raw = String::new();
    let mut n_chars = 0usize;
    let mut specs = Vec::with_capacity(n);
    let mut section: Option<String> = None;
    let mut prose_iter = prose.into_iter();
    let mut prev_slot: Option<Slot> = None;
    for (si, slot) in slots.iter().enumerate() {
        let sub_seed = seed::mix(seed::derive(cfg.seed, seed::SURROGATE), (index as u64) << 20 | si as u64);
        let (text, labels) = match *slot {
            Slot::Header(h) => (format!("{}:", HEADERS[h]), LabelSet::EMPTY),
            Slot::ListItem(i) => {
                let drug = capitalize(DRUGS.choose(&mut rng).unwrap());
                (format!("{i}. {drug} {} mg PO daily.", DOSES.choose(&mut rng).unwrap()), LabelSet::EMPTY)
            }
            Slot::Prose => prose_iter.next().expect("one prose entry per prose slot"),
        };
        let text = fill_surrogates(&text, sub_seed)?.text;
        let sep = match (prev_slot, slot) {
            (None, _) => "",
            (Some(_), Slot::Header(_)) => "\n\n",
            (Some(Slot::Header(_)), _) | (Some(Slot::ListItem(_)), _) | (_, Slot::ListItem(_)) => "\n",
            _ => " ",
        };
        raw.push_str(sep);
        n_chars += sep.chars().count();
        if let Slot::Header(h) = slot {
            section = Some(HEADERS[*h].to_lowercase());
        }
        let len = text.chars().count();
        specs.push(SentenceSpec { span: Span::new(n_chars, n_chars + len), labels, section: section.clone() });
        raw.push_str(&text);
        n_chars += len;
        prev_slot = Some(*slot);
    }
    Document::new(format!("{}{:05}", cfg.id_prefix, index), raw, specs)
}

/// Generates `cfg.n_documents` notes deterministically from `cfg.seed`.
pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<Vec<Document>> {
    let plan = Plan::new(cfg)?;
    (0..cfg.n_documents).map(|i| generate_document(cfg, &plan, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{compute_stats, to_jsonl, tokenize_sentences};

    fn small(cue_mode: CueMode) -> GeneratorConfig {
        let targets = match cue_mode {
            CueMode::InSentence => CorpusStats::reference_targets(),
            CueMode::InContext => CorpusStats::reference_targets().scaled(0.4),
        };
        GeneratorConfig { n_documents: 40, cue_mode, targets, ..GeneratorConfig::default() }
    }

    #[test]
    fn in_context_requires_room_for_cues() {
        let cfg = GeneratorConfig { cue_mode: CueMode::InContext, ..small(CueMode::InSentence) };
        assert!(matches!(generate_corpus(&cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn deterministic() {
        let a = to_jsonl(&generate_corpus(&small(CueMode::InSentence)).unwrap());
        let b = to_jsonl(&generate_corpus(&small(CueMode::InSentence)).unwrap());
        assert_eq!(a, b);
        let other = to_jsonl(&generate_corpus(&GeneratorConfig { seed: 2, ..small(CueMode::InSentence) }).unwrap());
        assert_ne!(a, other);
    }

    #[test]
    fn zero_targets_give_no_labels() {
        let cfg = GeneratorConfig { targets: CorpusStats::zero_targets(), ..small(CueMode::InSentence) };
        let docs = generate_corpus(&cfg).unwrap();
        assert_eq!(compute_stats(&docs).labeled_fraction, 0.0);
    }

    #[test]
    fn infeasible_targets() {
        let mut targets = CorpusStats::reference_targets();
        targets.per_label_prevalence.0 = [0.9, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0];
        targets.multi_label_fraction = 0.0;
        let cfg = GeneratorConfig { targets, ..small(CueMode::InSentence) };
        assert!(matches!(generate_corpus(&cfg), Err(Error::Infeasible(_))));
        let bad = GeneratorConfig { sentences_per_doc: (10, 5), ..small(CueMode::InSentence) };
        assert!(matches!(generate_corpus(&bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn segmentation_recovers_generated_sentences() {
        for mode in [CueMode::InSentence, CueMode::InContext] {
            for doc in generate_corpus(&small(mode)).unwrap() {
                let segs = tokenize_sentences(&doc.raw_text);
                let spans: Vec<Span> = segs.iter().map(|s| s.span).collect();
                let expected: Vec<Span> = doc.sentences.iter().map(|s| s.span).collect();
                assert_eq!(spans, expected, "{}", doc.raw_text);
                let sections: Vec<_> = segs.iter().map(|s| s.section.clone()).collect();
                let expected: Vec<_> = doc.sentences.iter().map(|s| s.section.clone()).collect();
                assert_eq!(sections, expected);
            }
        }
    }

    #[test]
    fn labeled_sentences_carry_cues() {
        let docs = generate_corpus(&small(CueMode::InSentence)).unwrap();
        assert!(docs.iter().all(|d| !d.raw_text.contains("[**")));
        let generic: Vec<String> = GENERIC.iter().map(|g| g[..12].to_lowercase()).collect();
        for doc in generate_corpus(&small(CueMode::InContext)).unwrap() {
            for (i, s) in doc.sentences.iter().enumerate() {
                if s.labels.any() {
                    assert!(generic.iter().any(|g| s.text.starts_with(g.as_str())), "{}", s.text);
                    assert!(i > 0 && !doc.sentences[i - 1].labels.any());
                }
            }
        }
    }

    #[test]
    fn primary_weights_match_targets() {
        let t = CorpusStats::reference_targets().per_label_prevalence.0;
        let w = primary_weights(&t, 0.286);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[0] > w[1] && w[1] > w[2]);
    }
}
