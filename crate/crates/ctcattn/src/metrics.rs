//! Evaluation quantities: BLEU, attention monotonicity, length ratio,
//! search-error rate, and decoding cost counters.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("hypothesis and reference lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("zero reference mass")]
    ZeroReferenceMass,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Row-stochastic L × T source-attention pattern for one sentence.
#[derive(Debug, Clone)]
pub struct AttentionMap {
    weights: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl AttentionMap {
    pub fn new(weights: Vec<f64>, rows: usize, cols: usize) -> AttentionMap {
        assert_eq!(weights.len(), rows * cols);
        AttentionMap { weights, rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    /// Argmax of row `r`, ties broken to the smallest column.
    pub fn row_argmax(&self, r: usize) -> usize {
        let row = self.row(r);
        let mut best = 0;
        for (t, &w) in row.iter().enumerate() {
            if w > row[best] {
                best = t;
            }
        }
        best
    }
}

/// Monotonicity of an attention pattern: the fraction of output steps
/// (from the third row on) whose attended input position does not move
/// backwards, divided by the total number of rows L. The `normalized`
/// variant divides by the number of summed indicators (L − 2) instead.
pub fn monotonicity(map: &AttentionMap, normalized: bool) -> f64 {
    let l = map.rows();
    if l < 3 {
        return 0.0;
    }
    let mut hits = 0usize;
    for r in 2..l {
        if map.row_argmax(r) >= map.row_argmax(r - 1) {
            hits += 1;
        }
    }
    let denom = if normalized { l - 2 } else { l };
    hits as f64 / denom as f64
}

fn ngram_counts(seq: &[usize], n: usize) -> std::collections::HashMap<&[usize], usize> {
    let mut counts = std::collections::HashMap::new();
    if seq.len() >= n {
        for i in 0..=seq.len() - n {
            *counts.entry(&seq[i..i + n]).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-4 over token-id sequences: modified n-gram precisions
/// with exponential smoothing for zero counts and brevity penalty
/// exp(1 − r/c) when c < r. Returns a value in [0, 100].
pub fn corpus_bleu(hyps: &[Vec<usize>], refs: &[Vec<usize>]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(MetricsError::LengthMismatch(hyps.len(), refs.len()));
    }
    if hyps.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    for (h, r) in hyps.iter().zip(refs) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=4 {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            for (gram, &c) in &hc {
                total[n - 1] += c;
                matched[n - 1] += c.min(rc.get(gram).copied().unwrap_or(0));
            }
        }
    }
    // exponentially smoothed precision: each zero-match order halves the
    // previous smoothing mass (p_n = 1 / 2^k on the k-th zero order)
    let mut smooth = 1.0f64;
    let mut log_p = 0.0f64;
    for n in 0..4 {
        let p = if total[n] == 0 {
            // hypothesis too short to form the n-gram at all
            smooth /= 2.0;
            smooth
        } else if matched[n] == 0 {
            smooth /= 2.0;
            smooth / total[n] as f64
        } else {
            matched[n] as f64 / total[n] as f64
        };
        log_p += p.ln() / 4.0;
    }
    let bp = if hyp_len == 0 {
        return Ok(0.0);
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * bp * log_p.exp())
}

/// Corpus length ratio Σ|hyp| / Σ|ref|.
pub fn length_ratio(hyps: &[Vec<usize>], refs: &[Vec<usize>]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(MetricsError::LengthMismatch(hyps.len(), refs.len()));
    }
    if hyps.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let r: usize = refs.iter().map(Vec::len).sum();
    if r == 0 {
        return Err(MetricsError::ZeroReferenceMass);
    }
    let h: usize = hyps.iter().map(Vec::len).sum();
    Ok(h as f64 / r as f64)
}

/// Exact sequence accuracy: fraction of hypotheses equal to the
/// reference.
pub fn sequence_accuracy(hyps: &[Vec<usize>], refs: &[Vec<usize>]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(MetricsError::LengthMismatch(hyps.len(), refs.len()));
    }
    if hyps.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let ok = hyps.iter().zip(refs).filter(|(h, r)| h == r).count();
    Ok(ok as f64 / hyps.len() as f64)
}

/// Fraction of examples where the model scores the reference strictly
/// higher than the returned hypothesis (beyond a 1e-12 slack). Inputs
/// are (hypothesis score, reference score) pairs under the same
/// penalty-free joint likelihood; an infeasible reference carries −∞.
pub fn search_error_rate(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let errs = pairs.iter().filter(|(hyp, rf)| *rf > *hyp + 1e-12).count();
    Ok(errs as f64 / pairs.len() as f64)
}

/// Corpus-level evaluation summary.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mode: String,
    pub beam_size: usize,
    pub length_penalty: f64,
    pub bleu: f64,
    pub seq_accuracy: f64,
    pub length_ratio: f64,
    pub search_error_rate: f64,
    /// Mean final-layer monotonicity (literal formula), when measured.
    pub mean_monotonicity: Option<f64>,
    pub total_log_adds: u64,
    /// Wall-clock cost; excluded from the CSV row so summaries are
    /// byte-identical across reruns of one seed.
    pub nanos_per_input_token: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "mode,beam_size,length_penalty,bleu,seq_accuracy,length_ratio,search_error_rate,mean_monotonicity,total_log_adds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{},{}",
            self.mode,
            self.beam_size,
            self.length_penalty,
            self.bleu,
            self.seq_accuracy,
            self.length_ratio,
            self.search_error_rate,
            self.mean_monotonicity.map_or(String::new(), |m| format!("{m:.4}")),
            self.total_log_adds,
        )
    }
}
