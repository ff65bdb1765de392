//! Multi-task training and synthetic corpus generation.
//!
//! The loss interpolates the source-oriented CTC head, the
//! target-oriented CTC head, and the decoder cross-entropy:
//! L = L_src + λ1·L_tgt + λ2·L_xent, with flags to ablate either CTC
//! head. Optimization is Adam with decoupled weight decay under an
//! inverse-square-root schedule. Gradients are accumulated one example
//! at a time (mathematically identical to padded batching at equal
//! per-example weight, with no masking machinery).

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{backward, pick, NumericsError, Tape, Tensor};
use crate::ctc::{ctc_loss, greedy_decode, CtcError, SeqKind, TokenSeq};
use crate::model::{EncodeResult, ForwardCtx, Model, ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    BadConfig(String),
    #[error("invalid task spec: {0}")]
    BadSpec(String),
    #[error("CTC-infeasible pair at head `{head}` (T'={t_prime}, needs ≥ {needed}): check the up/down-sample rate")]
    Infeasible { head: &'static str, t_prime: usize, needed: usize },
    #[error("training diverged at step {step}: non-finite loss")]
    Diverged { step: u64 },
    #[error("corpus parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

// ── synthetic tasks ──────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    /// tgt = src.
    Copy,
    /// tgt_i = π(src_i) for a fixed seeded bijection π (monotonic).
    Map,
    /// each src token c → (2c, 2c+1): outputs longer than inputs.
    Expand,
    /// tgt = mapped src, reversed: maximal non-monotonicity.
    Reverse,
    /// latent transcript tokens repeated with jitter form the source;
    /// target = mapped, block-swapped transcript (compositional).
    Frames,
}

impl TaskName {
    pub fn name(&self) -> &'static str {
        match self {
            TaskName::Copy => "copy",
            TaskName::Map => "map",
            TaskName::Expand => "expand",
            TaskName::Reverse => "reverse",
            TaskName::Frames => "frames",
        }
    }
}

impl std::str::FromStr for TaskName {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<TaskName> {
        [TaskName::Copy, TaskName::Map, TaskName::Expand, TaskName::Reverse, TaskName::Frames]
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| TrainError::BadSpec(format!("unknown task {s:?}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticTaskSpec {
    pub task: TaskName,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Source length range (transcript length for `frames`), inclusive.
    pub min_len: usize,
    pub max_len: usize,
    /// Frame repeat range for `frames`, inclusive.
    pub repeat_min: usize,
    pub repeat_max: usize,
    /// Probability of a jitter token between frame groups.
    pub noise_rate: f64,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        SyntheticTaskSpec {
            task: TaskName::Copy,
            src_vocab: 8,
            tgt_vocab: 8,
            min_len: 3,
            max_len: 8,
            repeat_min: 2,
            repeat_max: 4,
            noise_rate: 0.0,
            n_train: 2000,
            n_valid: 200,
            n_test: 200,
            seed: 0,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TrainError::BadSpec(msg));
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!("bad length range [{}, {}]", self.min_len, self.max_len));
        }
        if self.src_vocab == 0 || self.tgt_vocab == 0 {
            return bad("empty vocabulary".into());
        }
        match self.task {
            TaskName::Copy | TaskName::Map | TaskName::Reverse => {
                if self.tgt_vocab < self.src_vocab {
                    return bad(format!(
                        "{} needs tgt_vocab ≥ src_vocab ({} < {})",
                        self.task.name(),
                        self.tgt_vocab,
                        self.src_vocab
                    ));
                }
            }
            TaskName::Expand => {
                if self.tgt_vocab < 2 * self.src_vocab {
                    return bad(format!(
                        "expand needs tgt_vocab ≥ 2·src_vocab ({} < {})",
                        self.tgt_vocab,
                        2 * self.src_vocab
                    ));
                }
            }
            TaskName::Frames => {
                if self.src_vocab < 4 || self.src_vocab % 2 != 0 {
                    return bad("frames needs an even src_vocab ≥ 4 (latent + jitter halves)".into());
                }
                if self.tgt_vocab < self.src_vocab / 2 {
                    return bad("frames needs tgt_vocab ≥ src_vocab / 2".into());
                }
                if self.repeat_min < 1 || self.repeat_min > self.repeat_max {
                    return bad(format!(
                        "bad repeat range [{}, {}]",
                        self.repeat_min, self.repeat_max
                    ));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} outside [0, 1]", self.noise_rate));
        }
        Ok(())
    }

    /// The fixed token bijection used by map/reverse/frames.
    pub fn mapping(&self) -> Vec<usize> {
        let n = match self.task {
            TaskName::Frames => self.src_vocab / 2,
            _ => self.src_vocab,
        };
        let mut pi: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x6d6170);
        pi.shuffle(&mut rng);
        pi
    }
}

/// One corpus example. `transcript` is empty for plain MT tasks (the
/// source itself supervises the source CTC head).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub src: TokenSeq,
    pub transcript: Option<TokenSeq>,
    pub tgt: TokenSeq,
}

impl Example {
    /// Label sequence for the source-oriented CTC head.
    pub fn src_ctc_labels(&self) -> TokenSeq {
        self.transcript.clone().unwrap_or_else(|| {
            TokenSeq::new(self.src.ids.clone(), SeqKind::Transcript)
        })
    }
}

/// Deterministic synthetic corpus; the three splits are disjoint by
/// construction (unique source sequences, generated from one stream).
pub fn gen_corpus(spec: &SyntheticTaskSpec) -> Result<(Vec<Example>, Vec<Example>, Vec<Example>)> {
    spec.validate()?;
    let total = spec.n_train + spec.n_valid + spec.n_test;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pi = spec.mapping();
    let mut seen = std::collections::HashSet::new();
    let mut examples = Vec::with_capacity(total);
    let mut attempts = 0usize;
    while examples.len() < total {
        attempts += 1;
        if attempts > 200 * total + 1000 {
            return Err(TrainError::BadSpec(
                "task space too small for the requested disjoint corpus".into(),
            ));
        }
        let ex = gen_example(spec, &pi, &mut rng);
        if seen.insert(ex.src.ids.clone()) {
            examples.push(ex);
        }
    }
    let valid = examples.split_off(spec.n_train + spec.n_valid);
    let test = valid; // naming: last chunk is test
    let valid = examples.split_off(spec.n_train);
    Ok((examples, valid, test))
}

fn gen_example(spec: &SyntheticTaskSpec, pi: &[usize], rng: &mut ChaCha8Rng) -> Example {
    let len = rng.gen_range(spec.min_len..=spec.max_len);
    match spec.task {
        TaskName::Copy => {
            let src: Vec<usize> = (0..len).map(|_| rng.gen_range(0..spec.src_vocab)).collect();
            Example {
                tgt: TokenSeq::target(src.clone()),
                src: TokenSeq::new(src, SeqKind::Source),
                transcript: None,
            }
        }
        TaskName::Map => {
            let src: Vec<usize> = (0..len).map(|_| rng.gen_range(0..spec.src_vocab)).collect();
            let tgt: Vec<usize> = src.iter().map(|&c| pi[c]).collect();
            Example {
                src: TokenSeq::new(src, SeqKind::Source),
                transcript: None,
                tgt: TokenSeq::target(tgt),
            }
        }
        TaskName::Expand => {
            let src: Vec<usize> = (0..len).map(|_| rng.gen_range(0..spec.src_vocab)).collect();
            let tgt: Vec<usize> = src.iter().flat_map(|&c| [2 * c, 2 * c + 1]).collect();
            Example {
                src: TokenSeq::new(src, SeqKind::Source),
                transcript: None,
                tgt: TokenSeq::target(tgt),
            }
        }
        TaskName::Reverse => {
            let src: Vec<usize> = (0..len).map(|_| rng.gen_range(0..spec.src_vocab)).collect();
            let mut tgt: Vec<usize> = src.iter().map(|&c| pi[c]).collect();
            tgt.reverse();
            Example {
                src: TokenSeq::new(src, SeqKind::Source),
                transcript: None,
                tgt: TokenSeq::target(tgt),
            }
        }
        TaskName::Frames => {
            let latent_vocab = spec.src_vocab / 2;
            // transcript without adjacent repeats so its CTC minimum
            // frame count stays at its length
            let mut transcript = Vec::with_capacity(len);
            for _ in 0..len {
                loop {
                    let c = rng.gen_range(0..latent_vocab);
                    if transcript.last() != Some(&c) {
                        transcript.push(c);
                        break;
                    }
                }
            }
            let mut src = Vec::new();
            for &c in &transcript {
                let r = rng.gen_range(spec.repeat_min..=spec.repeat_max);
                src.extend(std::iter::repeat(c).take(r));
                if rng.gen::<f64>() < spec.noise_rate {
                    src.push(latent_vocab + rng.gen_range(0..latent_vocab));
                }
            }
            // mapped then block-swapped: second half precedes the first
            let mapped: Vec<usize> = transcript.iter().map(|&c| pi[c]).collect();
            let mid = mapped.len() / 2;
            let mut tgt = mapped[mid..].to_vec();
            tgt.extend_from_slice(&mapped[..mid]);
            Example {
                src: TokenSeq::new(src, SeqKind::Source),
                transcript: Some(TokenSeq::new(transcript, SeqKind::Transcript)),
                tgt: TokenSeq::target(tgt),
            }
        }
    }
}

// ── corpus files ─────────────────────────────────────────────────────
//
// One example per line, three TAB-separated fields (source, transcript,
// target), each a space-separated list of decimal token ids; the
// transcript field is empty for MT tasks.

pub fn write_corpus(path: &Path, examples: &[Example]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for ex in examples {
        let fmt = |ids: &[usize]| {
            ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
        };
        let tr = ex.transcript.as_ref().map(|t| fmt(&t.ids)).unwrap_or_default();
        writeln!(f, "{}\t{}\t{}", fmt(&ex.src.ids), tr, fmt(&ex.tgt.ids))?;
    }
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<Example>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        let parse = |field: &str| -> Result<Vec<usize>> {
            field
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|e| TrainError::Parse { line: i + 1, msg: e.to_string() })
                })
                .collect()
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(TrainError::Parse {
                line: i + 1,
                msg: format!("expected 3 TAB-separated fields, got {}", fields.len()),
            });
        }
        let transcript = if fields[1].trim().is_empty() {
            None
        } else {
            Some(TokenSeq::new(parse(fields[1])?, SeqKind::Transcript))
        };
        out.push(Example {
            src: TokenSeq::new(parse(fields[0])?, SeqKind::Source),
            transcript,
            tgt: TokenSeq::target(parse(fields[2])?),
        });
    }
    Ok(out)
}

// ── loss ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub use_src_ctc: bool,
    pub use_tgt_ctc: bool,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 1.0,
            lambda2: 2.0,
            peak_lr: 2e-3,
            warmup_steps: 200,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-9,
            weight_decay: 1e-4,
            label_smoothing: 0.1,
            epochs: 4,
            batch_size: 8,
            seed: 0,
            use_src_ctc: true,
            use_tgt_ctc: true,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(TrainError::BadConfig("lambdas must be ≥ 0".into()));
        }
        if self.warmup_steps < 1 {
            return Err(TrainError::BadConfig("warmup_steps must be ≥ 1".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::BadConfig("batch_size must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(TrainError::BadConfig("label_smoothing outside [0, 1)".into()));
        }
        Ok(())
    }
}

/// lr = peak · min(step/warmup, sqrt(warmup/step)); the apex sits
/// exactly at step = warmup.
pub fn lr_schedule(step: u64, peak_lr: f64, warmup: u64) -> f64 {
    let s = step.max(1) as f64;
    let w = warmup as f64;
    peak_lr * (s / w).min((w / s).sqrt())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LossBreakdown {
    pub src_ctc: f64,
    pub tgt_ctc: f64,
    pub xent: f64,
    pub total: f64,
}

/// Label-smoothed decoder cross-entropy over target + eos, summed over
/// positions.
fn decoder_xent(
    model: &Model,
    ctx: &ForwardCtx,
    enc: &EncodeResult,
    target: &TokenSeq,
    smoothing: f64,
) -> Result<Tensor> {
    let logp = model.decoder_logprobs(ctx, &enc.h_tgt, &target.ids, None)?;
    let v = logp.shape()[1];
    let mut labels = target.ids.clone();
    labels.push(model.config.eos_id());
    let picked = pick(&logp, &labels)?.sum()?;
    let smooth = logp.sum()?;
    // −[(1−ε)·Σ logp(y_l) + ε/V·Σ_l Σ_v logp(v)]
    Ok(picked
        .scale(1.0 - smoothing)?
        .add(&smooth.scale(smoothing / v as f64)?)?
        .scale(-1.0)?)
}

fn feasibility(head: &'static str, t_prime: usize, labels: &TokenSeq) -> Result<()> {
    let needed = labels.min_frames();
    if needed > t_prime {
        return Err(TrainError::Infeasible { head, t_prime, needed });
    }
    Ok(())
}

/// L = L_src_ctc + λ1·L_tgt_ctc + λ2·L_xent, term-linear in the λ's;
/// the ablation flags zero their CTC terms entirely.
pub fn multitask_loss(
    model: &Model,
    ctx: &ForwardCtx,
    enc: &EncodeResult,
    ex: &Example,
    cfg: &TrainConfig,
) -> Result<(Tensor, LossBreakdown)> {
    let src_blank = model.config.src_vocab;
    let tgt_blank = model.config.tgt_vocab;
    let mut total: Option<Tensor> = None;
    let mut br = LossBreakdown { src_ctc: 0.0, tgt_ctc: 0.0, xent: 0.0, total: 0.0 };
    let push = |acc: &mut Option<Tensor>, term: Tensor| -> Result<()> {
        *acc = Some(match acc.take() {
            Some(t) => t.add(&term)?,
            None => term,
        });
        Ok(())
    };
    if cfg.use_src_ctc {
        let labels = ex.src_ctc_labels();
        feasibility("src-ctc", enc.t_prime, &labels)?;
        let l = ctc_loss(&enc.src_grid_logp, &labels, src_blank)?;
        br.src_ctc = l.item();
        push(&mut total, l)?;
    }
    if cfg.use_tgt_ctc {
        feasibility("tgt-ctc", enc.t_prime, &ex.tgt)?;
        let l = ctc_loss(&enc.tgt_grid_logp, &ex.tgt, tgt_blank)?;
        br.tgt_ctc = l.item();
        push(&mut total, l.scale(cfg.lambda1)?)?;
    }
    let xent = decoder_xent(model, ctx, enc, &ex.tgt, cfg.label_smoothing)?;
    br.xent = xent.item();
    push(&mut total, xent.scale(cfg.lambda2)?)?;
    let total = total.expect("xent term always present");
    br.total = total.item();
    Ok((total, br))
}

// ── optimizer ────────────────────────────────────────────────────────

/// Adam with decoupled weight decay; moments are keyed by parameter
/// path and born lazily.
pub struct Adam {
    m: HashMap<String, Vec<f64>>,
    v: HashMap<String, Vec<f64>>,
    pub step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

impl Adam {
    pub fn new(cfg: &TrainConfig) -> Adam {
        Adam {
            m: HashMap::new(),
            v: HashMap::new(),
            step: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
        }
    }

    pub fn apply(
        &mut self,
        params: &mut ModelParams,
        grads: &HashMap<String, Vec<f64>>,
        lr: f64,
    ) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut names: Vec<&String> = grads.keys().collect();
        names.sort();
        for name in names {
            let g = &grads[name];
            let p = params.get_mut(name)?;
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.eps)
                    + self.weight_decay * p.data[i];
                p.data[i] -= lr * update;
            }
        }
        Ok(())
    }
}

// ── training loop ────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct TrainLogEntry {
    pub step: u64,
    pub lr: f64,
    pub src_ctc: f64,
    pub tgt_ctc: f64,
    pub xent: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidEntry {
    pub step: u64,
    pub loss: f64,
    /// Greedy best-path accuracy of the target CTC head.
    pub ctc_greedy_acc: f64,
    /// Greedy stepwise-argmax accuracy of the attention decoder.
    pub attn_greedy_acc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub log: Vec<TrainLogEntry>,
    pub valid: Vec<ValidEntry>,
    pub best_step: u64,
    pub best_valid_loss: f64,
}

/// Greedy stepwise decode with the attention branch only.
pub fn greedy_attn_decode(model: &Model, ctx: &ForwardCtx, enc: &EncodeResult) -> Result<Vec<usize>> {
    let eos = model.config.eos_id();
    let mut out = Vec::new();
    let cap = 2 * enc.t_prime + 2;
    while out.len() < cap {
        let dist = model.decode_step(ctx, &enc.h_tgt, &out)?;
        let mut best = 0;
        for (i, &p) in dist.iter().enumerate() {
            if p > dist[best] {
                best = i;
            }
        }
        if best == eos {
            break;
        }
        out.push(best);
    }
    Ok(out)
}

/// Teacher-forced validation loss plus greedy accuracies of both
/// branches.
pub fn validate(model: &Model, set: &[Example], cfg: &TrainConfig, step: u64) -> Result<ValidEntry> {
    let ctx = model.eval_ctx();
    let mut loss = 0.0;
    let mut ctc_ok = 0usize;
    let mut attn_ok = 0usize;
    for ex in set {
        let enc = model.encode(&ctx, &ex.src)?;
        let (_, br) = multitask_loss(model, &ctx, &enc, ex, cfg)?;
        loss += br.total;
        let grid = enc.tgt_grid();
        if greedy_decode(&grid).ids == ex.tgt.ids {
            ctc_ok += 1;
        }
        if greedy_attn_decode(model, &ctx, &enc)? == ex.tgt.ids {
            attn_ok += 1;
        }
    }
    let n = set.len().max(1) as f64;
    Ok(ValidEntry {
        step,
        loss: loss / n,
        ctc_greedy_acc: ctc_ok as f64 / n,
        attn_greedy_acc: attn_ok as f64 / n,
    })
}

/// Trains in place; on return the model holds the parameters of the
/// best validation checkpoint.
pub fn train(
    model: &mut Model,
    train_set: &[Example],
    valid_set: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::BadConfig("empty training set".into()));
    }
    let mut adam = Adam::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x747261696e);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut valid_log = Vec::new();
    let mut best: Option<(u64, f64, ModelParams)> = None;
    let mut step: u64 = 0;

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let mut grads: HashMap<String, Vec<f64>> = HashMap::new();
            let mut br_sum = LossBreakdown { src_ctc: 0.0, tgt_ctc: 0.0, xent: 0.0, total: 0.0 };
            for &i in batch {
                let ex = &train_set[i];
                let tape = Tape::new();
                let ctx = model.train_ctx(&tape, cfg.seed ^ step.wrapping_mul(0x9e3779b9) ^ i as u64);
                let enc = model.encode(&ctx, &ex.src)?;
                let (loss, br) = multitask_loss(model, &ctx, &enc, ex, cfg)?;
                if !br.total.is_finite() {
                    return Err(TrainError::Diverged { step });
                }
                backward(&loss)?;
                for (name, g) in ctx.grads() {
                    grads
                        .entry(name)
                        .and_modify(|acc| acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b))
                        .or_insert(g);
                }
                br_sum.src_ctc += br.src_ctc;
                br_sum.tgt_ctc += br.tgt_ctc;
                br_sum.xent += br.xent;
                br_sum.total += br.total;
            }
            let inv = 1.0 / batch.len() as f64;
            for g in grads.values_mut() {
                g.iter_mut().for_each(|v| *v *= inv);
            }
            let lr = lr_schedule(step, cfg.peak_lr, cfg.warmup_steps);
            adam.apply(&mut model.params, &grads, lr)?;
            if step % cfg.log_every == 0 || step == 1 {
                log.push(TrainLogEntry {
                    step,
                    lr,
                    src_ctc: br_sum.src_ctc * inv,
                    tgt_ctc: br_sum.tgt_ctc * inv,
                    xent: br_sum.xent * inv,
                    total: br_sum.total * inv,
                });
            }
        }
        // end-of-epoch validation drives checkpoint selection
        if !valid_set.is_empty() {
            let entry = validate(model, valid_set, cfg, step)?;
            let better = best.as_ref().map_or(true, |(_, l, _)| entry.loss < *l);
            if better {
                best = Some((step, entry.loss, model.params.clone()));
            }
            valid_log.push(entry);
        }
    }

    let (best_step, best_valid_loss) = match best {
        Some((s, l, params)) => {
            model.params = params;
            (s, l)
        }
        None => (step, f64::NAN),
    };
    Ok(TrainReport { log, valid: valid_log, best_step, best_valid_loss })
}
