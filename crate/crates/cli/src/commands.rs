//! One function per subcommand. Each reads its inputs, calls into the
//! core crate and writes its outputs; none of them touches an input file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use carenote_core::corpus::{
    compute_stats, generate_corpus, read_corpus, split_corpus, strip_labels, subsample_documents, write_corpus, CorpusStats,
    CueMode, GeneratorConfig, SplitRatios,
};
use carenote_core::eval::{tune_thresholds, MetricsReport, Thresholds};
use carenote_core::model::checkpoint::Phase;
use carenote_core::model::gradcheck::DEFAULT_EPS;
use carenote_core::model::{
    bow_logreg_train, cnn_train, gradient_fidelity, AdamWConfig, Checkpoint, CnnConfig, EncoderConfig, Transformer,
};
use carenote_core::pretrain::{pretrain_loop, read_dataset, resolve, write_dataset, PretrainConfig, PretrainEpoch};
use carenote_core::subword::{train_vocab, SubwordVocab};
use carenote_core::train::{finetune_checkpoint, predict_document, score_corpus, TrainConfig, TrainEpoch};
use carenote_core::ttp::{
    build_pretrain_dataset, model_fingerprint, score_unlabeled, score_unlabeled_bow, select_random, select_sentences,
    select_top, target_size_for,
};
use carenote_core::window::{encode_corpus, DEFAULT_MAX_LEN, DEFAULT_RADIUS};
use carenote_core::{Document, LabelSet, N_LABELS};
use clap::{Subcommand, ValueEnum};

use crate::Failure;

type Out<T = ()> = Result<T, Failure>;

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic discharge-note corpus (JSONL).
    Gen(GenArgs),
    /// Split a corpus by document into train/val/test files.
    Split(SplitArgs),
    /// Train a subword vocabulary on corpus sentences.
    Vocab(VocabArgs),
    /// Score an unlabeled pool with a seed model and select sentences for pre-training.
    TtpSelect(TtpArgs),
    /// Pre-train an encoder with masked-context and switched-focus objectives.
    Pretrain(PretrainArgs),
    /// Fine-tune an encoder for multi-label sentence classification.
    Finetune(FinetuneArgs),
    /// Tune per-label and micro thresholds on a validation corpus.
    TuneThresholds(TuneArgs),
    /// Evaluate a model (or a baseline) on a test corpus.
    Eval(EvalArgs),
    /// Extract action items from notes, grouped by aspect.
    Extract(ExtractArgs),
    /// Label statistics of a corpus.
    Stats(StatsArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

pub fn run(cmd: Command) -> Out {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::Split(a) => split(a),
        Command::Vocab(a) => vocab(a),
        Command::TtpSelect(a) => ttp_select(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Finetune(a) => finetune(a),
        Command::TuneThresholds(a) => tune(a),
        Command::Eval(a) => eval(a),
        Command::Extract(a) => extract(a),
        Command::Stats(a) => stats(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum CueModeArg {
    InSentence,
    InContext,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    Desk,
    Compact,
    Tiny,
}

impl Arch {
    fn config(self, vocab_size: usize) -> EncoderConfig {
        match self {
            Arch::Desk => EncoderConfig::desk(vocab_size),
            Arch::Compact => EncoderConfig::compact(vocab_size),
            Arch::Tiny => EncoderConfig::tiny(vocab_size),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    Bow,
    Cnn,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

fn existing(path: &Path) -> Out<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Failure::missing(path))
    }
}

fn load_corpus(path: &Path) -> Out<Vec<Document>> {
    Ok(read_corpus(existing(path)?)?)
}

fn load_vocab(path: &Path) -> Out<SubwordVocab> {
    Ok(SubwordVocab::load(existing(path)?)?)
}

fn load_checkpoint(path: &Path, vocab: &SubwordVocab) -> Out<Checkpoint> {
    let ckpt = Checkpoint::load(existing(path)?)?;
    ckpt.ensure_fingerprint(vocab.fingerprint())?;
    Ok(ckpt)
}

fn load_thresholds(path: &Path) -> Out<Thresholds> {
    let text = fs::read_to_string(existing(path)?).map_err(carenote_core::Error::from)?;
    let t: Thresholds = serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    t.validate()?;
    Ok(t)
}

fn write_text(path: &Path, text: &str) -> Out {
    fs::write(path, text).map_err(carenote_core::Error::from)?;
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> Out<String> {
    serde_json::to_string_pretty(v).map_err(|e| Failure { code: 1, kind: "internal", message: e.to_string() })
}

/// Line-delimited JSON to stdout, and to `log` when given.
struct EpochLog {
    file: Option<fs::File>,
}

impl EpochLog {
    fn open(path: Option<&Path>) -> Out<Self> {
        let file = match path {
            Some(p) => Some(fs::File::create(p).map_err(carenote_core::Error::from)?),
            None => None,
        };
        Ok(EpochLog { file })
    }

    fn line<T: serde::Serialize>(&mut self, record: &T) {
        let line = serde_json::to_string(record).unwrap_or_default();
        println!("{line}");
        if let Some(f) = self.file.as_mut() {
            let _ = writeln!(f, "{line}");
        }
    }
}

// ---- gen ----

#[derive(clap::Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 600)]
    pub docs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = CueModeArg::InSentence)]
    pub cue_mode: CueModeArg,
    /// Multiplier on the reference label prevalences (default 1, or 0.4 for in-context cues).
    #[arg(long)]
    pub target_scale: Option<f64>,
    #[arg(long, default_value_t = 12)]
    pub min_sentences: usize,
    #[arg(long, default_value_t = 20)]
    pub max_sentences: usize,
    #[arg(long, default_value = "note")]
    pub id_prefix: String,
    /// Drop all labels and mark documents as unlabeled.
    #[arg(long)]
    pub unlabeled: bool,
}

fn gen(a: GenArgs) -> Out {
    let (cue_mode, default_scale) = match a.cue_mode {
        CueModeArg::InSentence => (CueMode::InSentence, 1.0),
        CueModeArg::InContext => (CueMode::InContext, 0.4),
    };
    let scale = a.target_scale.unwrap_or(default_scale);
    if !(scale > 0.0) {
        return Err(Failure::invalid(format!("target scale must be positive, got {scale}")));
    }
    let cfg = GeneratorConfig {
        n_documents: a.docs,
        sentences_per_doc: (a.min_sentences, a.max_sentences),
        targets: CorpusStats::reference_targets().scaled(scale),
        cue_mode,
        seed: a.seed,
        id_prefix: a.id_prefix,
    };
    let mut docs = generate_corpus(&cfg)?;
    if a.unlabeled {
        strip_labels(&mut docs);
    }
    write_corpus(&a.out, &docs)?;
    Ok(())
}

// ---- split ----

#[derive(clap::Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Directory receiving train.jsonl, val.jsonl and test.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// train,val,test fractions; defaults to the 518/100/100 reference split.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub ratios: Option<Vec<f64>>,
    /// Keep only this fraction of training documents.
    #[arg(long)]
    pub keep_train: Option<f64>,
}

fn split(a: SplitArgs) -> Out {
    let docs = load_corpus(&a.corpus)?;
    let ratios = match a.ratios.as_deref() {
        Some([t, v, s]) => SplitRatios::new(*t, *v, *s)?,
        Some(_) => return Err(Failure::usage("--ratios takes three comma-separated values")),
        None => SplitRatios::reference(),
    };
    let (mut train, val, test) = split_corpus(docs, ratios, a.seed)?;
    if let Some(f) = a.keep_train {
        train = subsample_documents(train, f, a.seed)?;
    }
    fs::create_dir_all(&a.out_dir).map_err(carenote_core::Error::from)?;
    for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
        write_corpus(a.out_dir.join(format!("{name}.jsonl")), part)?;
    }
    Ok(())
}

// ---- vocab ----

#[derive(clap::Args, Debug)]
pub struct VocabArgs {
    /// One or more corpus files.
    #[arg(long, required = true, num_args = 1..)]
    pub corpus: Vec<PathBuf>,
    #[arg(long, default_value_t = 8000)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn vocab(a: VocabArgs) -> Out {
    let mut texts = Vec::new();
    for p in &a.corpus {
        for d in load_corpus(p)? {
            texts.extend(d.sentences.into_iter().map(|s| s.text));
        }
    }
    let vocab = train_vocab(texts.iter(), a.size)?;
    vocab.save(&a.out)?;
    eprintln!("{}", serde_json::json!({"pieces": vocab.len(), "fingerprint": vocab.fingerprint()}));
    Ok(())
}

// ---- ttp-select ----

#[derive(clap::Args, Debug)]
pub struct TtpArgs {
    /// Unlabeled pool to select from.
    #[arg(long)]
    pub pool: PathBuf,
    /// Seed classifier checkpoint, or `bow` for the bag-of-words fallback.
    #[arg(long)]
    pub seed_model: String,
    /// Required with a checkpoint seed model.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Labeled corpus for the `bow` seed model.
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    /// Selection size as a fraction of the pool.
    #[arg(long, conflicts_with = "threshold")]
    pub target_frac: Option<f64>,
    /// Fixed score threshold instead of a target size.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Random selection of the same size (control run).
    #[arg(long)]
    pub random: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Selection manifest (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the pre-training dataset (JSONL references).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

fn ttp_select(a: TtpArgs) -> Out {
    let pool = load_corpus(&a.pool)?;
    let (scores, fingerprint) = if a.seed_model == "bow" {
        let labeled = a.labeled.as_deref().ok_or_else(|| Failure::usage("--seed-model bow needs --labeled"))?;
        let docs = load_corpus(labeled)?;
        let texts: Vec<&str> = docs.iter().flat_map(|d| d.sentences.iter().map(|s| s.text.as_str())).collect();
        let labels: Vec<LabelSet> = docs.iter().flat_map(|d| d.labels()).collect();
        let model = bow_logreg_train(&texts, &labels, carenote_core::model::bow::DEFAULT_L1)?;
        let fp = model_fingerprint(serde_json::to_string(&model).unwrap_or_default().as_bytes());
        (score_unlabeled_bow(&model, &pool)?, fp)
    } else {
        let vocab_path = a.vocab.as_deref().ok_or_else(|| Failure::usage("a checkpoint seed model needs --vocab"))?;
        let vocab = load_vocab(vocab_path)?;
        let path = PathBuf::from(&a.seed_model);
        let bytes = fs::read(existing(&path)?).map_err(carenote_core::Error::from)?;
        let ckpt = Checkpoint::from_bytes(&bytes)?;
        ckpt.ensure_fingerprint(vocab.fingerprint())?;
        (score_unlabeled(&ckpt, &vocab, &pool, a.batch_size)?, model_fingerprint(&bytes))
    };
    let size = match (a.target_frac, a.threshold) {
        (Some(f), _) => Some(target_size_for(f, scores.len())?),
        (None, Some(_)) => None,
        (None, None) => return Err(Failure::usage("one of --target-frac or --threshold is required")),
    };
    let manifest = match (a.random, size, a.threshold) {
        (false, Some(n), _) => select_top(&scores, n, &fingerprint)?,
        (false, None, Some(t)) => select_sentences(&scores, t, &fingerprint),
        (true, Some(n), _) => select_random(&scores, n, a.seed)?,
        (true, None, Some(t)) => {
            let n = select_sentences(&scores, t, &fingerprint).len();
            select_random(&scores, n, a.seed)?
        }
        (_, None, None) => unreachable!(),
    };
    manifest.save(&a.out)?;
    if let Some(path) = &a.dataset {
        let refs = build_pretrain_dataset(&manifest, &pool)?;
        write_dataset(&refs, path)?;
    }
    eprintln!("{}", serde_json::json!({"pool": scores.len(), "selected": manifest.len(), "threshold": manifest.threshold}));
    Ok(())
}

// ---- pretrain ----

#[derive(clap::Args, Debug)]
pub struct PretrainArgs {
    /// Corpus holding the referenced sentences.
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSONL sentence references; every sentence of the corpus when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Continue from this checkpoint instead of a fresh model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Arch::Desk)]
    pub arch: Arch,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

fn pretrain(a: PretrainArgs) -> Out {
    let vocab = load_vocab(&a.vocab)?;
    let docs = load_corpus(&a.corpus)?;
    let encoded = encode_corpus(&docs, &vocab);
    let refs = match &a.dataset {
        Some(p) => resolve(&read_dataset(existing(p)?)?, &encoded)?,
        None => encoded.iter().enumerate().flat_map(|(d, e)| (0..e.len()).map(move |i| (d, i))).collect(),
    };
    let model = match &a.init {
        Some(p) => load_checkpoint(p, &vocab)?.model,
        None => Transformer::new(a.arch.config(vocab.len()), a.seed)?,
    };
    let cfg = PretrainConfig {
        k: a.k,
        max_len: model.config.max_len.min(DEFAULT_MAX_LEN),
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        patience: a.patience,
        optimizer: AdamWConfig { lr: a.lr, ..AdamWConfig::default() },
        grad_clip: a.grad_clip,
        time_budget_s: a.budget,
        seed: a.seed,
        ..PretrainConfig::default()
    };
    let mut log = EpochLog::open(a.log.as_deref())?;
    let mut progress = |r: &PretrainEpoch| log.line(r);
    let out = pretrain_loop(model, &encoded, &refs, &cfg, &mut progress)?;
    Checkpoint::new(out.model, vocab.fingerprint(), Phase::Pretrained, a.k).save(&a.out)?;
    Ok(())
}

// ---- finetune ----

#[derive(clap::Args, Debug)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Start from this (pre-trained) checkpoint instead of a fresh model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Arch::Desk)]
    pub arch: Arch,
    /// Neighbor sentences per side; 0 classifies sentences alone.
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub pos_weight: f64,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

fn finetune(a: FinetuneArgs) -> Out {
    let vocab = load_vocab(&a.vocab)?;
    let train = encode_corpus(&load_corpus(&a.train)?, &vocab);
    let val = encode_corpus(&load_corpus(&a.val)?, &vocab);
    let init = match &a.init {
        Some(p) => load_checkpoint(p, &vocab)?,
        None => Checkpoint::new(Transformer::new(a.arch.config(vocab.len()), a.seed)?, vocab.fingerprint(), Phase::Random, a.k),
    };
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        optimizer: AdamWConfig { lr: a.lr, ..AdamWConfig::default() },
        max_epochs: a.epochs,
        patience: a.patience,
        k: a.k,
        max_len: init.model.config.max_len.min(DEFAULT_MAX_LEN),
        pos_weight: a.pos_weight,
        grad_clip: a.grad_clip,
        time_budget_s: a.budget,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let mut log = EpochLog::open(a.log.as_deref())?;
    let mut progress = |r: &TrainEpoch| log.line(r);
    let (ckpt, _) = finetune_checkpoint(&init, &vocab, &train, &val, &cfg, &mut progress)?;
    ckpt.save(&a.out)?;
    Ok(())
}

// ---- tune-thresholds ----

#[derive(clap::Args, Debug)]
pub struct TuneArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn tune(a: TuneArgs) -> Out {
    let vocab = load_vocab(&a.vocab)?;
    let ckpt = load_checkpoint(&a.model, &vocab)?;
    let val = encode_corpus(&load_corpus(&a.val)?, &vocab);
    let max_len = ckpt.model.config.max_len.min(DEFAULT_MAX_LEN);
    let s = score_corpus(&ckpt.model, &val, ckpt.context_radius, max_len, 64)?;
    let t = tune_thresholds(&s.matrix.scores, &s.labels)?;
    write_text(&a.out, &to_json(&t)?)
}

// ---- eval ----

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, required_unless_present = "baseline")]
    pub model: Option<PathBuf>,
    #[arg(long, required_unless_present = "baseline")]
    pub vocab: Option<PathBuf>,
    /// Tuned thresholds; 0.5 everywhere when absent.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Train and evaluate a baseline instead (needs --train and --val).
    #[arg(long, value_enum, requires_all = ["train", "val"])]
    pub baseline: Option<Baseline>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation corpus for baseline early stopping and threshold tuning.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// MetricsReport JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

type Scored = (Vec<[f64; N_LABELS]>, Vec<LabelSet>);

fn texts_labels(docs: &[Document]) -> (Vec<&str>, Vec<LabelSet>) {
    let texts = docs.iter().flat_map(|d| d.sentences.iter().map(|s| s.text.as_str())).collect();
    (texts, docs.iter().flat_map(|d| d.labels()).collect())
}

fn baseline_scores(kind: Baseline, train: &[Document], val: &[Document], test: &[Document], seed: u64) -> Out<(Scored, Scored)> {
    let (tt, tl) = texts_labels(train);
    let (vt, vl) = texts_labels(val);
    let (st, sl) = texts_labels(test);
    let score = |f: &dyn Fn(&str) -> [f64; N_LABELS], texts: &[&str]| texts.iter().map(|t| f(t)).collect::<Vec<_>>();
    Ok(match kind {
        Baseline::Bow => {
            let m = bow_logreg_train(&tt, &tl, carenote_core::model::bow::DEFAULT_L1)?;
            ((score(&|t| m.score(t), &vt), vl), (score(&|t| m.score(t), &st), sl))
        }
        Baseline::Cnn => {
            let m = cnn_train(&tt, &tl, Some((&vt, &vl)), CnnConfig { seed, ..CnnConfig::default() })?;
            ((score(&|t| m.score(t), &vt), vl), (score(&|t| m.score(t), &st), sl))
        }
    })
}

fn eval(a: EvalArgs) -> Out {
    let test = load_corpus(&a.test)?;
    let (scores, labels, tuned) = match a.baseline {
        Some(kind) => {
            let train = load_corpus(a.train.as_deref().ok_or_else(|| Failure::usage("--baseline needs --train"))?)?;
            let val = load_corpus(a.val.as_deref().ok_or_else(|| Failure::usage("--baseline needs --val"))?)?;
            let ((vs, vl), (ts, tl)) = baseline_scores(kind, &train, &val, &test, a.seed)?;
            (ts, tl, Some(tune_thresholds(&vs, &vl)?))
        }
        None => {
            let vocab = load_vocab(a.vocab.as_deref().ok_or_else(|| Failure::usage("--vocab is required"))?)?;
            let ckpt = load_checkpoint(a.model.as_deref().ok_or_else(|| Failure::usage("--model is required"))?, &vocab)?;
            let max_len = ckpt.model.config.max_len.min(DEFAULT_MAX_LEN);
            let s = score_corpus(&ckpt.model, &encode_corpus(&test, &vocab), ckpt.context_radius, max_len, 64)?;
            (s.matrix.scores, s.labels, None)
        }
    };
    let thresholds = match (&a.thresholds, tuned) {
        (Some(p), _) => load_thresholds(p)?,
        (None, Some(t)) => t,
        (None, None) => Thresholds::default(),
    };
    let report = MetricsReport::compute(&scores, &labels, &thresholds);
    if let Some(p) = &a.out {
        write_text(p, &report.to_json()?)?;
    }
    print!("{}", report.to_table());
    Ok(())
}

// ---- extract ----

#[derive(clap::Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Corpus JSONL of notes.
    #[arg(long, conflicts_with = "text", required_unless_present = "text")]
    pub notes: Option<PathBuf>,
    /// A single raw note as plain text.
    #[arg(long)]
    pub text: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn extract(a: ExtractArgs) -> Out {
    let vocab = load_vocab(&a.vocab)?;
    let ckpt = load_checkpoint(&a.model, &vocab)?;
    let thresholds = match &a.thresholds {
        Some(p) => load_thresholds(p)?,
        None => Thresholds::default(),
    };
    let docs = match (&a.notes, &a.text) {
        (Some(p), _) => load_corpus(p)?,
        (None, Some(p)) => {
            let raw = fs::read_to_string(existing(p)?).map_err(carenote_core::Error::from)?;
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "note".into());
            vec![Document::from_raw(id, raw)?]
        }
        (None, None) => return Err(Failure::usage("one of --notes or --text is required")),
    };
    let max_len = ckpt.model.config.max_len.min(DEFAULT_MAX_LEN);
    let mut out = String::new();
    for d in &docs {
        let report = predict_document(&ckpt.model, d, &vocab, &thresholds, ckpt.context_radius, max_len)?;
        match a.format {
            Format::Json => {
                out.push_str(&serde_json::to_string(&report).map_err(carenote_core::Error::from)?);
                out.push('\n');
            }
            Format::Text => {
                out.push_str(&report.to_text());
                out.push('\n');
            }
        }
    }
    match &a.out {
        Some(p) => write_text(p, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

// ---- stats ----

#[derive(clap::Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
}

fn stats(a: StatsArgs) -> Out {
    let docs = load_corpus(&a.corpus)?;
    println!("{}", to_json(&compute_stats(&docs))?);
    Ok(())
}

// ---- gradcheck ----

#[derive(clap::Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = Arch::Desk)]
    pub arch: Arch,
    #[arg(long, default_value_t = 1000)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn gradcheck(a: GradcheckArgs) -> Out {
    let report = gradient_fidelity(&a.arch.config(a.vocab_size), a.samples, a.eps, a.seed)?;
    println!("{}", to_json(&report)?);
    if report.passed(a.tol) {
        Ok(())
    } else {
        Err(Failure { code: 1, kind: "gradient_mismatch", message: format!("relative error above {}", a.tol) })
    }
}
