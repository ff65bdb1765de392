//! Experiment runner: data generation, training, decoding, evaluation,
//! sweeps, and an oracle self-check.
//!
//! Every stage writes its artifacts under a run-stamped directory named
//! by a content hash of the resolved configuration (plus input files),
//! together with a config snapshot; re-running a completed stage with
//! identical inputs is a no-op.

use std::fmt::Write as FmtWrite;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ctc::{collapse, ctc_logprob, viterbi_align, PosteriorGrid, TokenSeq};
use crate::decode::{
    attn_full_logprob, decode_instance, input_sync_search, output_sync_search, DecodeConfig,
    DecodeMode, ModelScorer, StaticScorer,
};
use crate::logmath::{LogAddCounter, LOG_ZERO};
use crate::metrics::{
    corpus_bleu, length_ratio, monotonicity, search_error_rate, sequence_accuracy, EvalReport,
};
use crate::model::{load_checkpoint, save_checkpoint, Model, ModelConfig};
use crate::oracle::{
    brute_ctc, brute_prefix_mass, brute_viterbi, exhaustive_joint_argmax, EnumerationBudget,
};
use crate::prefix::OutSyncPrefixState;
use crate::train::{
    gen_corpus, read_corpus, train, write_corpus, Example, SyntheticTaskSpec, TrainConfig,
};

/// Top-level failure classes, mapped to process exit codes:
/// 1 config error, 2 runtime failure, 3 acceptance/oracle-check failure.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime failure: {m}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

// ── experiment config ────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAxes {
    pub length_penalty: Vec<f64>,
    pub beam: Vec<usize>,
    pub ctc_weight: Vec<f64>,
}

impl Default for SweepAxes {
    fn default() -> Self {
        SweepAxes {
            length_penalty: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            beam: vec![5, 10, 50],
            ctc_weight: vec![0.3],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub task: SyntheticTaskSpec,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub decode: Vec<DecodeConfig>,
    #[serde(default)]
    pub sweep: SweepAxes,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(CliError::Config(m));
        self.task.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.decode.is_empty() {
            return cfg("decode list must be nonempty".into());
        }
        for d in &self.decode {
            d.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.sweep.length_penalty.is_empty()
            || self.sweep.beam.is_empty()
            || self.sweep.ctc_weight.is_empty()
        {
            return cfg("sweep axes must be nonempty".into());
        }
        if self.model.src_vocab != self.task.src_vocab
            || self.model.tgt_vocab != self.task.tgt_vocab
        {
            return cfg(format!(
                "model vocabularies ({}, {}) do not match task ({}, {})",
                self.model.src_vocab, self.model.tgt_vocab, self.task.src_vocab, self.task.tgt_vocab
            ));
        }
        Ok(())
    }
}

pub fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

// ── run-stamped directories ──────────────────────────────────────────

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

/// Content hash over the resolved stage config and any input files.
fn stage_hash(stage: &str, config_repr: &str, inputs: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update(config_repr.as_bytes());
    for p in inputs {
        h.update(p.display().to_string().as_bytes());
        let bytes = fs::read(p)
            .map_err(|e| CliError::Config(format!("missing input {}: {e}", p.display())))?;
        h.update(&bytes);
    }
    Ok(hex(&h.finalize())[..12].to_string())
}

/// Creates (or finds) `<out>/<stage>-<hash>`; returns the directory and
/// whether it was already completed (marker file present).
fn run_dir(out: &Path, stage: &str, hash: &str) -> Result<(PathBuf, bool)> {
    let dir = out.join(format!("{stage}-{hash}"));
    let done = dir.join(".done").exists();
    fs::create_dir_all(&dir).map_err(runtime)?;
    Ok((dir, done))
}

fn mark_done(dir: &Path) -> Result<()> {
    fs::write(dir.join(".done"), b"ok").map_err(runtime)
}

fn snapshot<T: Serialize>(dir: &Path, config: &T) -> Result<()> {
    let text = toml::to_string_pretty(config)
        .map_err(|e| CliError::Runtime(format!("config snapshot: {e}")))?;
    fs::write(dir.join("config.toml"), text).map_err(runtime)
}

// ── command surface ──────────────────────────────────────────────────

#[derive(Parser)]
#[command(name = "ctcattn", about = "joint CTC/attention transduction toolkit", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (train/valid/test TSV files).
    GenData {
        /// TOML file holding a synthetic task spec.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a generated corpus.
    Train {
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Directory holding train.tsv / valid.tsv.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a corpus under every decode config in the experiment.
    Decode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corpus TSV with references.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a results file against references.
    Evaluate {
        /// Line-delimited decode records.
        #[arg(long)]
        results: PathBuf,
        /// Reference corpus TSV.
        #[arg(long)]
        refs: PathBuf,
        /// Optional checkpoint for search-error and monotonicity.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full decode grid (mode × penalty × beam × ctc weight).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker limit for concurrent sweep cells (0 = rayon default).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Verify the dynamic programs against enumeration oracles.
    OracleCheck {
        /// Path-enumeration node budget.
        #[arg(long, default_value_t = 4_000_000)]
        max_nodes: u64,
        /// Seeded instances per check.
        #[arg(long, default_value_t = 40)]
        instances: usize,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { spec, out } => cmd_gen_data(&spec, &out),
        Command::Train { config, data, out } => cmd_train(&config, &data, &out),
        Command::Decode { config, checkpoint, corpus, out } => {
            cmd_decode(&config, &checkpoint, &corpus, &out)
        }
        Command::Evaluate { results, refs, checkpoint, out } => {
            cmd_evaluate(&results, &refs, checkpoint.as_deref(), &out)
        }
        Command::Sweep { config, checkpoint, corpus, out, workers } => {
            cmd_sweep(&config, &checkpoint, &corpus, &out, workers)
        }
        Command::OracleCheck { max_nodes, instances } => cmd_oracle_check(max_nodes, instances),
    }
}

// ── gen-data ─────────────────────────────────────────────────────────

pub fn cmd_gen_data(spec_path: &Path, out: &Path) -> Result<()> {
    let spec: SyntheticTaskSpec = load_toml(spec_path)?;
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let repr = toml::to_string(&spec).map_err(runtime)?;
    let hash = stage_hash("gen-data", &repr, &[])?;
    let (dir, done) = run_dir(out, "data", &hash)?;
    if done {
        println!("{} (up to date)", dir.display());
        return Ok(());
    }
    let (train_set, valid_set, test_set) = gen_corpus(&spec).map_err(runtime)?;
    write_corpus(&dir.join("train.tsv"), &train_set).map_err(runtime)?;
    write_corpus(&dir.join("valid.tsv"), &valid_set).map_err(runtime)?;
    write_corpus(&dir.join("test.tsv"), &test_set).map_err(runtime)?;
    snapshot(&dir, &spec)?;
    mark_done(&dir)?;
    println!("{}", dir.display());
    Ok(())
}

// ── train ────────────────────────────────────────────────────────────

pub fn cmd_train(config_path: &Path, data: &Path, out: &Path) -> Result<()> {
    let exp: ExperimentConfig = load_toml(config_path)?;
    exp.validate()?;
    let train_file = data.join("train.tsv");
    let valid_file = data.join("valid.tsv");
    let repr = toml::to_string(&exp).map_err(runtime)?;
    let hash = stage_hash("train", &repr, &[&train_file, &valid_file])?;
    let (dir, done) = run_dir(out, "train", &hash)?;
    if done {
        println!("{} (up to date)", dir.display());
        return Ok(());
    }
    let train_set = read_corpus(&train_file).map_err(runtime)?;
    let valid_set = read_corpus(&valid_file).map_err(runtime)?;
    let mut model = Model::new(exp.model.clone(), exp.seed).map_err(runtime)?;
    let mut tc = exp.train.clone();
    tc.seed = exp.seed;
    let report = train(&mut model, &train_set, &valid_set, &tc).map_err(runtime)?;
    save_checkpoint(&model, &dir.join("model.ckpt")).map_err(runtime)?;
    let mut log = fs::File::create(dir.join("train_log.jsonl")).map_err(runtime)?;
    for entry in &report.log {
        writeln!(log, "{}", serde_json::to_string(entry).map_err(runtime)?).map_err(runtime)?;
    }
    let mut vlog = fs::File::create(dir.join("valid_log.jsonl")).map_err(runtime)?;
    for entry in &report.valid {
        writeln!(vlog, "{}", serde_json::to_string(entry).map_err(runtime)?).map_err(runtime)?;
    }
    snapshot(&dir, &exp)?;
    mark_done(&dir)?;
    println!("{}", dir.display());
    Ok(())
}

// ── decode ───────────────────────────────────────────────────────────

/// One line of the results file.
#[derive(Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: usize,
    pub mode: String,
    pub tokens: Vec<usize>,
    pub attn_logp: f64,
    pub ctc_logp: f64,
    pub penalty: f64,
    pub joint: f64,
    pub steps: usize,
    pub logadds: u64,
    pub nanos: u128,
}

/// Decodes a corpus under one config; returns per-example records and
/// the summary row. Sentences decode concurrently over the shared
/// read-only model.
pub fn decode_corpus(
    model: &Model,
    examples: &[Example],
    cfg: &DecodeConfig,
) -> Result<(Vec<ResultRecord>, EvalReport)> {
    let cells: Vec<(ResultRecord, (f64, f64))> = examples
        .par_iter()
        .enumerate()
        .map(|(id, ex)| -> Result<(ResultRecord, (f64, f64))> {
            let r = decode_instance(model, &ex.src, cfg).map_err(runtime)?;
            let best = r
                .best()
                .ok_or_else(|| CliError::Runtime(format!("example {id}: empty n-best")))?;
            let record = ResultRecord {
                id,
                mode: cfg.mode.name().to_string(),
                tokens: best.tokens.clone(),
                attn_logp: best.attn_logp,
                ctc_logp: best.ctc_logp,
                penalty: cfg.length_penalty,
                joint: best.joint,
                steps: r.steps,
                logadds: r.log_adds,
                nanos: r.nanos,
            };
            // penalty-free joint likelihoods of hypothesis and reference
            // for search-error accounting
            let w = cfg.effective_ctc_weight();
            let free = |ctc: f64, attn: f64| {
                let c = if w == 0.0 { 0.0 } else { w * ctc };
                let a = if w == 1.0 { 0.0 } else { (1.0 - w) * attn };
                c + a
            };
            let ctx = model.eval_ctx();
            let enc = model.encode(&ctx, &ex.src).map_err(runtime)?;
            let grid = enc.tgt_grid();
            let scorer = ModelScorer::new(model, enc.h_tgt.clone());
            let ref_ctc = ctc_logprob(&grid, &ex.tgt).map_err(runtime)?;
            let ref_attn = attn_full_logprob(&scorer, &ex.tgt.ids).map_err(runtime)?;
            let pair = (free(best.ctc_logp, best.attn_logp), free(ref_ctc, ref_attn));
            Ok((record, pair))
        })
        .collect::<Result<Vec<_>>>()?;

    let hyps: Vec<Vec<usize>> = cells.iter().map(|(r, _)| r.tokens.clone()).collect();
    let refs: Vec<Vec<usize>> = examples.iter().map(|e| e.tgt.ids.clone()).collect();
    let pairs: Vec<(f64, f64)> = cells.iter().map(|(_, p)| *p).collect();
    let total_log_adds: u64 = cells.iter().map(|(r, _)| r.logadds).sum();
    let total_nanos: u128 = cells.iter().map(|(r, _)| r.nanos).sum();
    let input_tokens: usize = examples.iter().map(|e| e.src.len()).sum();
    let report = EvalReport {
        mode: cfg.mode.name().to_string(),
        beam_size: cfg.beam_size,
        length_penalty: cfg.length_penalty,
        bleu: corpus_bleu(&hyps, &refs).map_err(runtime)?,
        seq_accuracy: sequence_accuracy(&hyps, &refs).map_err(runtime)?,
        length_ratio: length_ratio(&hyps, &refs).map_err(runtime)?,
        search_error_rate: search_error_rate(&pairs).map_err(runtime)?,
        mean_monotonicity: None,
        total_log_adds,
        nanos_per_input_token: total_nanos as f64 / input_tokens.max(1) as f64,
    };
    Ok((cells.into_iter().map(|(r, _)| r).collect(), report))
}

fn write_summary(dir: &Path, rows: &[EvalReport]) -> Result<()> {
    let mut f = fs::File::create(dir.join("summary.csv")).map_err(runtime)?;
    writeln!(f, "{}", EvalReport::CSV_HEADER).map_err(runtime)?;
    for r in rows {
        writeln!(f, "{}", r.csv_row()).map_err(runtime)?;
    }
    Ok(())
}

fn write_records(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(runtime)?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r).map_err(runtime)?).map_err(runtime)?;
    }
    Ok(())
}

pub fn cmd_decode(config_path: &Path, checkpoint: &Path, corpus: &Path, out: &Path) -> Result<()> {
    let exp: ExperimentConfig = load_toml(config_path)?;
    exp.validate()?;
    let repr = toml::to_string(&exp).map_err(runtime)?;
    let hash = stage_hash("decode", &repr, &[checkpoint, corpus])?;
    let (dir, done) = run_dir(out, "decode", &hash)?;
    if done {
        println!("{} (up to date)", dir.display());
        return Ok(());
    }
    let model = load_checkpoint(checkpoint).map_err(runtime)?;
    let examples = read_corpus(corpus).map_err(runtime)?;
    let mut rows = Vec::new();
    if examples.is_empty() {
        // empty corpus: empty summary, success
        write_summary(&dir, &rows)?;
        snapshot(&dir, &exp)?;
        mark_done(&dir)?;
        println!("{}", dir.display());
        return Ok(());
    }
    for cfg in &exp.decode {
        let (records, report) = decode_corpus(&model, &examples, cfg)?;
        let name = format!(
            "results-{}-b{}-pen{}.jsonl",
            cfg.mode.name(),
            cfg.beam_size,
            cfg.length_penalty
        );
        write_records(&dir.join(name), &records)?;
        rows.push(report);
    }
    write_summary(&dir, &rows)?;
    snapshot(&dir, &exp)?;
    mark_done(&dir)?;
    println!("{}", dir.display());
    Ok(())
}

// ── evaluate ─────────────────────────────────────────────────────────

pub fn cmd_evaluate(
    results: &Path,
    refs_path: &Path,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let file = fs::File::open(results)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", results.display())))?;
    let mut records: Vec<ResultRecord> = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(runtime)?;
        records.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", results.display(), i + 1)))?,
        );
    }
    let refs = read_corpus(refs_path).map_err(|e| CliError::Config(e.to_string()))?;
    if records.is_empty() {
        return Err(CliError::Config("empty results file".into()));
    }
    let hyps: Vec<Vec<usize>> = records.iter().map(|r| r.tokens.clone()).collect();
    let mut ref_seqs = Vec::with_capacity(records.len());
    for r in &records {
        let ex = refs.get(r.id).ok_or_else(|| {
            CliError::Config(format!("record id {} outside reference corpus", r.id))
        })?;
        ref_seqs.push(ex.tgt.ids.clone());
    }
    let model = checkpoint.map(load_checkpoint).transpose().map_err(runtime)?;

    // search error needs the scoring model; without one it is reported
    // as NaN
    let search_err = match &model {
        Some(model) => {
            let pairs: Vec<(f64, f64)> = records
                .par_iter()
                .map(|r| -> Result<(f64, f64)> {
                    let ex = &refs[r.id];
                    let ctx = model.eval_ctx();
                    let enc = model.encode(&ctx, &ex.src).map_err(runtime)?;
                    let grid = enc.tgt_grid();
                    let scorer = ModelScorer::new(model, enc.h_tgt.clone());
                    let w = 0.3;
                    let score = |ids: &[usize]| -> Result<f64> {
                        let y = TokenSeq::target(ids.to_vec());
                        let ctc = ctc_logprob(&grid, &y).map_err(runtime)?;
                        let attn = attn_full_logprob(&scorer, ids).map_err(runtime)?;
                        Ok(if ctc == LOG_ZERO { LOG_ZERO } else { w * ctc + (1.0 - w) * attn })
                    };
                    Ok((score(&r.tokens)?, score(&ex.tgt.ids)?))
                })
                .collect::<Result<Vec<_>>>()?;
            search_error_rate(&pairs).map_err(runtime)?
        }
        None => f64::NAN,
    };
    let mean_m = match &model {
        Some(model) => {
            let ms: Vec<f64> = records
                .par_iter()
                .map(|r| -> Result<f64> {
                    let ex = &refs[r.id];
                    let ctx = model.eval_ctx();
                    let enc = model.encode(&ctx, &ex.src).map_err(runtime)?;
                    let maps = model
                        .cross_attention_maps(&ctx, &enc.h_tgt, &ex.tgt.ids)
                        .map_err(runtime)?;
                    let last = maps.last().expect("≥1 decoder layer");
                    Ok(last.iter().map(|m| monotonicity(m, false)).sum::<f64>()
                        / last.len() as f64)
                })
                .collect::<Result<Vec<_>>>()?;
            Some(ms.iter().sum::<f64>() / ms.len() as f64)
        }
        None => None,
    };

    let total_nanos: u128 = records.iter().map(|r| r.nanos).sum();
    let input_tokens: usize = records.iter().map(|r| refs[r.id].src.len()).sum();
    let report = EvalReport {
        mode: records[0].mode.clone(),
        beam_size: 0,
        length_penalty: records[0].penalty,
        bleu: corpus_bleu(&hyps, &ref_seqs).map_err(runtime)?,
        seq_accuracy: sequence_accuracy(&hyps, &ref_seqs).map_err(runtime)?,
        length_ratio: length_ratio(&hyps, &ref_seqs).map_err(runtime)?,
        search_error_rate: search_err,
        mean_monotonicity: mean_m,
        total_log_adds: records.iter().map(|r| r.logadds).sum(),
        nanos_per_input_token: total_nanos as f64 / input_tokens.max(1) as f64,
    };
    let mut f = fs::File::create(out).map_err(runtime)?;
    writeln!(f, "{}", EvalReport::CSV_HEADER).map_err(runtime)?;
    writeln!(f, "{}", report.csv_row()).map_err(runtime)?;
    println!("{}", serde_json::to_string(&report).map_err(runtime)?);
    Ok(())
}

// ── sweep ────────────────────────────────────────────────────────────

pub fn cmd_sweep(
    config_path: &Path,
    checkpoint: &Path,
    corpus: &Path,
    out: &Path,
    workers: usize,
) -> Result<()> {
    let exp: ExperimentConfig = load_toml(config_path)?;
    exp.validate()?;
    if workers > 0 {
        // scoped pool keeps the global default untouched
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(runtime)?;
        return pool.install(|| sweep_inner(&exp, checkpoint, corpus, out));
    }
    sweep_inner(&exp, checkpoint, corpus, out)
}

fn sweep_inner(exp: &ExperimentConfig, checkpoint: &Path, corpus: &Path, out: &Path) -> Result<()> {
    let repr = toml::to_string(exp).map_err(runtime)?;
    let hash = stage_hash("sweep", &repr, &[checkpoint, corpus])?;
    let (dir, done) = run_dir(out, "sweep", &hash)?;
    if done {
        println!("{} (up to date)", dir.display());
        return Ok(());
    }
    let model = load_checkpoint(checkpoint).map_err(runtime)?;
    let examples = read_corpus(corpus).map_err(runtime)?;
    let mut cells: Vec<DecodeConfig> = Vec::new();
    for base in &exp.decode {
        for &pen in &exp.sweep.length_penalty {
            for &beam in &exp.sweep.beam {
                for &w in &exp.sweep.ctc_weight {
                    let mut c = base.clone();
                    c.length_penalty = pen;
                    c.beam_size = beam;
                    c.prebeam = None;
                    c.ctc_weight = w;
                    cells.push(c);
                }
            }
        }
    }
    let mut rows: Vec<EvalReport> = cells
        .par_iter()
        .map(|cfg| decode_corpus(&model, &examples, cfg).map(|(_, report)| report))
        .collect::<Result<Vec<_>>>()?;
    // deterministic row order regardless of scheduling
    rows.sort_by(|a, b| {
        a.mode
            .cmp(&b.mode)
            .then(a.beam_size.cmp(&b.beam_size))
            .then(a.length_penalty.total_cmp(&b.length_penalty))
    });
    write_summary(&dir, &rows)?;
    let mut f = fs::File::create(dir.join("sweep.jsonl")).map_err(runtime)?;
    for r in &rows {
        writeln!(f, "{}", serde_json::to_string(r).map_err(runtime)?).map_err(runtime)?;
    }
    snapshot(&dir, exp)?;
    mark_done(&dir)?;
    println!("{}", dir.display());
    Ok(())
}

// ── oracle-check ─────────────────────────────────────────────────────

fn random_grid(rng: &mut ChaCha8Rng, t: usize, vocab: usize) -> PosteriorGrid {
    let mut logp = Vec::with_capacity(t * vocab);
    for _ in 0..t {
        let row: Vec<f64> = (0..vocab).map(|_| rng.gen_range(0.02..1.0)).collect();
        let z: f64 = row.iter().sum();
        logp.extend(row.iter().map(|p| (p / z).ln()));
    }
    PosteriorGrid::new(logp, t, vocab, vocab - 1).unwrap()
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

/// The full oracle suite: every dynamic program against its
/// enumeration-based reference.
pub fn oracle_suite(max_nodes: u64, instances: usize) -> Vec<(String, bool, String)> {
    let budget = EnumerationBudget { max_nodes, ..EnumerationBudget::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0ffee);
    let mut checks: Vec<Check> = Vec::new();
    let mut push = |name: &'static str, passed: bool, detail: String| {
        checks.push(Check { name, passed, detail });
    };

    // forward likelihood vs path enumeration
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for _ in 0..instances {
        let t = rng.gen_range(2..=6);
        let vocab = rng.gen_range(2..=4);
        let grid = random_grid(&mut rng, t, vocab);
        let y: Vec<usize> =
            (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..vocab - 1)).collect();
        let y = TokenSeq::target(y);
        let got = ctc_logprob(&grid, &y).unwrap();
        let want = brute_ctc(&grid, &y, &budget).unwrap();
        let diff = if got == LOG_ZERO && want == LOG_ZERO { 0.0 } else { (got - want).abs() };
        worst = worst.max(diff);
        ok &= diff <= 1e-9;
    }
    push("ctc-forward-vs-enumeration", ok, format!("max |Δ| = {worst:.3e}"));

    // Viterbi vs best-path enumeration
    let mut ok = true;
    for _ in 0..instances {
        let t = rng.gen_range(2..=5);
        let grid = random_grid(&mut rng, t, 3);
        let y = TokenSeq::target(vec![rng.gen_range(0..2)]);
        let got = viterbi_align(&grid, &y);
        let want = brute_viterbi(&grid, &y, &budget).unwrap();
        match got {
            Ok(g) => {
                ok &= (g.logp - want).abs() <= 1e-9;
                ok &= collapse(&g.z, grid.blank()) == y.ids;
            }
            Err(_) => ok &= want == LOG_ZERO,
        }
    }
    push("viterbi-vs-enumeration", ok, String::new());

    // out-sync prefix score and eos score vs enumeration
    let counter = LogAddCounter::new();
    let mut ok = true;
    for _ in 0..instances {
        let t = rng.gen_range(2..=6);
        let grid = random_grid(&mut rng, t, 3);
        let y: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(0..2)).collect();
        let mut st = OutSyncPrefixState::root(&grid);
        for &c in &y {
            st = st.extend(c, &grid, &counter).unwrap();
        }
        let mass = brute_prefix_mass(&grid, &y, &budget).unwrap();
        let like = brute_ctc(&grid, &TokenSeq::target(y.clone()), &budget).unwrap();
        let close = |a: f64, b: f64, tol: f64| {
            (a == LOG_ZERO && b == LOG_ZERO) || (a - b).abs() <= tol
        };
        ok &= close(st.pscore, mass, 1e-9) && close(st.eos_score(&counter), like, 1e-12);
    }
    push("prefix-scores-vs-enumeration", ok, String::new());

    // both beam searches vs exhaustive joint argmax
    let mut ok = true;
    for i in 0..instances.min(12) {
        let t = rng.gen_range(2..=4);
        let grid = random_grid(&mut rng, t, 3);
        let probs: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
        let scorer = StaticScorer::from_probs(&probs);
        let cfg = DecodeConfig {
            mode: DecodeMode::JointOsync,
            beam_size: 1024,
            prebeam: Some(1024),
            ctc_weight: [0.3, 0.5, 0.7][i % 3],
            ..DecodeConfig::default()
        };
        let (want_tokens, want_score) =
            exhaustive_joint_argmax(&grid, &scorer, &cfg, t, &budget).unwrap();
        let o = output_sync_search(&grid, &scorer, &cfg).unwrap();
        let icfg = DecodeConfig { mode: DecodeMode::JointIsync, ..cfg };
        let i_res = input_sync_search(&grid, Some(&scorer), &icfg).unwrap();
        for r in [&o, &i_res] {
            let b = r.best().unwrap();
            ok &= b.tokens == want_tokens && (b.joint - want_score).abs() <= 1e-9;
        }
    }
    push("beam-searches-vs-exhaustive-argmax", ok, String::new());

    checks
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

pub fn cmd_oracle_check(max_nodes: u64, instances: usize) -> Result<()> {
    let results = oracle_suite(max_nodes, instances);
    let mut failures = 0;
    for (name, passed, detail) in &results {
        let tag = if *passed { "PASS" } else { "FAIL" };
        if detail.is_empty() {
            println!("{tag} {name}");
        } else {
            println!("{tag} {name} ({detail})");
        }
        if !passed {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(CliError::CheckFailed(format!("{failures} oracle check(s) failed")));
    }
    Ok(())
}
