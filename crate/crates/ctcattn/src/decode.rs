//! Joint CTC/attention beam searches.
//!
//! Two mirrored searches share one joint-scoring formula and length
//! penalty and differ only in what drives expansion and when hypotheses
//! end: the output-synchronous search is attention-led (one label per
//! step, CTC scored over the full input, ends on eos) and the
//! input-synchronous search is CTC-led (one grid row per step, attention
//! scored per new prefix, ends when the input is exhausted). Single-branch
//! baselines and two-pass rescoring reuse the same pieces.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::{ctc_logprob, CtcError, PosteriorGrid, TokenSeq};
use crate::logmath::{LogAddCounter, LOG_ZERO};
use crate::autodiff::Tensor;
use crate::model::{Model, ModelError};
use crate::prefix::{InSyncBeam, OutSyncPrefixState, PrefixError};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decode config: {0}")]
    BadConfig(String),
    #[error("attention scorer failed: {0}")]
    Scorer(String),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Prefix(#[from] PrefixError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, DecodeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    AttnOnly,
    CtcOnly,
    JointOsync,
    JointIsync,
    AttnThenCtcRescore,
    CtcThenAttnRescore,
}

impl DecodeMode {
    pub const ALL: [DecodeMode; 6] = [
        DecodeMode::AttnOnly,
        DecodeMode::CtcOnly,
        DecodeMode::JointOsync,
        DecodeMode::JointIsync,
        DecodeMode::AttnThenCtcRescore,
        DecodeMode::CtcThenAttnRescore,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DecodeMode::AttnOnly => "attn-only",
            DecodeMode::CtcOnly => "ctc-only",
            DecodeMode::JointOsync => "joint-osync",
            DecodeMode::JointIsync => "joint-isync",
            DecodeMode::AttnThenCtcRescore => "attn-then-ctc-rescore",
            DecodeMode::CtcThenAttnRescore => "ctc-then-attn-rescore",
        }
    }
}

impl std::str::FromStr for DecodeMode {
    type Err = DecodeError;

    fn from_str(s: &str) -> Result<DecodeMode> {
        DecodeMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| DecodeError::BadConfig(format!("unknown decode mode {s:?}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub beam_size: usize,
    /// Pre-beam p; `None` means min(V, ceil(1.5·b)).
    pub prebeam: Option<usize>,
    pub ctc_weight: f64,
    /// Additive per-token reward in log domain.
    pub length_penalty: f64,
    /// Subtracted from log p_t(blank) in the input-synchronous search.
    pub blank_penalty: f64,
    /// Output length cap as a multiple of the adjusted input length.
    pub max_len_ratio: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            mode: DecodeMode::JointOsync,
            beam_size: 5,
            prebeam: None,
            ctc_weight: 0.3,
            length_penalty: 0.0,
            blank_penalty: 0.0,
            max_len_ratio: 1.0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ctc_weight) {
            return Err(DecodeError::BadConfig(format!(
                "ctc_weight {} outside [0, 1]",
                self.ctc_weight
            )));
        }
        if self.beam_size < 1 {
            return Err(DecodeError::BadConfig("beam_size must be ≥ 1".into()));
        }
        if let Some(p) = self.prebeam {
            if p < self.beam_size {
                return Err(DecodeError::BadConfig(format!(
                    "prebeam {p} smaller than beam_size {}",
                    self.beam_size
                )));
            }
        }
        if !(self.max_len_ratio > 0.0) {
            return Err(DecodeError::BadConfig("max_len_ratio must be > 0".into()));
        }
        Ok(())
    }

    /// The CTC mixing weight actually applied: the single-branch modes
    /// force the degenerate weights.
    pub fn effective_ctc_weight(&self) -> f64 {
        match self.mode {
            DecodeMode::AttnOnly => 0.0,
            DecodeMode::CtcOnly => 1.0,
            _ => self.ctc_weight,
        }
    }

    /// Pre-beam width for a candidate distribution of size `vocab`.
    pub fn prebeam_for(&self, vocab: usize) -> usize {
        self.prebeam
            .unwrap_or_else(|| (self.beam_size * 3).div_ceil(2))
            .min(vocab)
            .max(1)
    }

    pub fn max_len(&self, t_prime: usize) -> usize {
        ((self.max_len_ratio * t_prime as f64).ceil() as usize).max(1)
    }
}

/// Zero-weight components do not contribute even when their log-prob is
/// −∞ (0 · −∞ is treated as 0 so degenerate weights stay well-defined).
fn mix(w: f64, ctc_logp: f64, attn_logp: f64, length_penalty: f64, len: usize) -> f64 {
    let c = if w == 0.0 { 0.0 } else { w * ctc_logp };
    let a = if w == 1.0 { 0.0 } else { (1.0 - w) * attn_logp };
    c + a + length_penalty * len as f64
}

/// The shared joint-scoring formula of both searches:
/// λ·ctc + (1−λ)·attn + penalty·|y|.
pub fn joint_score(ctc_logp: f64, attn_logp: f64, len: usize, config: &DecodeConfig) -> f64 {
    mix(config.effective_ctc_weight(), ctc_logp, attn_logp, config.length_penalty, len)
}

/// One finished hypothesis with its score decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub ctc_logp: f64,
    pub attn_logp: f64,
    pub joint: f64,
}

/// N-best list plus search instrumentation.
#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub nbest: Vec<Hypothesis>,
    /// Expansion steps taken (label steps out-sync, rows in-sync).
    pub steps: usize,
    pub log_adds: u64,
    /// Counter value accrued during each individual step.
    pub log_adds_by_step: Vec<u64>,
    pub scorer_calls: u64,
    pub nanos: u128,
}

impl DecodeResult {
    pub fn best(&self) -> Option<&Hypothesis> {
        self.nbest.first()
    }
}

/// Stepwise attention scorer: log-distribution over target vocabulary
/// with eos as the last index, conditioned on a (eos-free) prefix.
pub trait AttnScorer {
    fn step_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>>;
}

/// Scorer returning the same fixed log-distribution at every step.
pub struct StaticScorer {
    log_dist: Vec<f64>,
}

impl StaticScorer {
    pub fn uniform(dec_vocab: usize) -> StaticScorer {
        StaticScorer { log_dist: vec![-(dec_vocab as f64).ln(); dec_vocab] }
    }

    /// Normalizes `probs` and stores its log.
    pub fn from_probs(probs: &[f64]) -> StaticScorer {
        let z: f64 = probs.iter().sum();
        StaticScorer { log_dist: probs.iter().map(|p| (p / z).ln()).collect() }
    }
}

impl AttnScorer for StaticScorer {
    fn step_log_probs(&self, _prefix: &[usize]) -> Result<Vec<f64>> {
        Ok(self.log_dist.clone())
    }
}

/// Closure-backed scorer, mainly for tests and oracles.
pub struct FnScorer<F: Fn(&[usize]) -> Vec<f64>>(pub F);

impl<F: Fn(&[usize]) -> Vec<f64>> AttnScorer for FnScorer<F> {
    fn step_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        Ok((self.0)(prefix))
    }
}

/// Scorer bound to a trained model's decoder over fixed encoder states.
pub struct ModelScorer<'m> {
    model: &'m Model,
    ctx: crate::model::ForwardCtx<'static>,
    h_tgt: Tensor,
    calls: Cell<u64>,
}

impl<'m> ModelScorer<'m> {
    pub fn new(model: &'m Model, h_tgt: Tensor) -> ModelScorer<'m> {
        ModelScorer { model, ctx: model.eval_ctx(), h_tgt, calls: Cell::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.get()
    }
}

impl AttnScorer for ModelScorer<'_> {
    fn step_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.calls.set(self.calls.get() + 1);
        Ok(self.model.decode_step(&self.ctx, &self.h_tgt, prefix)?)
    }
}

/// Deterministic hypothesis order: score descending, then shorter
/// tokens, then lexicographic tokens.
fn better(score_a: f64, tokens_a: &[usize], score_b: f64, tokens_b: &[usize]) -> Ordering {
    score_b
        .total_cmp(&score_a)
        .then_with(|| tokens_a.len().cmp(&tokens_b.len()))
        .then_with(|| tokens_a.cmp(tokens_b))
}

/// Indices of the top-`p` entries of `dist`, ordered by (log-prob
/// descending, index ascending).
fn top_p(dist: &[f64], p: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    idx.truncate(p);
    idx
}

struct OsHyp {
    state: OutSyncPrefixState,
    attn: f64,
}

/// Output-synchronous joint beam search. Each step computes the decoder
/// posterior per active hypothesis, takes the top-p candidate labels,
/// scores every extension with the full-input CTC prefix score, moves
/// eos proposals to the finished set with the exact-eos CTC score, and
/// prunes to beam size.
pub fn output_sync_search(
    grid: &PosteriorGrid,
    scorer: &dyn AttnScorer,
    config: &DecodeConfig,
) -> Result<DecodeResult> {
    config.validate()?;
    let start = Instant::now();
    let counter = LogAddCounter::new();
    let w = config.effective_ctc_weight();
    let pen = config.length_penalty;
    let max_len = config.max_len(grid.t_len());
    let b = config.beam_size;
    let mut scorer_calls: u64 = 0;
    let mut log_adds_by_step = Vec::new();
    let mut active = vec![OsHyp { state: OutSyncPrefixState::root(grid), attn: 0.0 }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 0..=max_len {
        let step_start = counter.get();
        let mut proposals: Vec<OsHyp> = Vec::new();
        for h in &active {
            let dist = scorer.step_log_probs(&h.state.prefix)?;
            scorer_calls += 1;
            let eos = dist.len() - 1;
            // end detection: proposing eos finishes the hypothesis
            let ctc = h.state.eos_score(&counter);
            let attn = h.attn + dist[eos];
            finished.push(Hypothesis {
                tokens: h.state.prefix.clone(),
                ctc_logp: ctc,
                attn_logp: attn,
                joint: mix(w, ctc, attn, pen, h.state.prefix.len()),
            });
            if step == max_len {
                continue;
            }
            let p = config.prebeam_for(eos);
            for c in top_p(&dist[..eos], p) {
                let state = h.state.extend(c, grid, &counter)?;
                proposals.push(OsHyp { state, attn: h.attn + dist[c] });
            }
        }
        proposals.sort_by(|x, y| {
            better(
                mix(w, x.state.pscore, x.attn, pen, x.state.prefix.len()),
                &x.state.prefix,
                mix(w, y.state.pscore, y.attn, pen, y.state.prefix.len()),
                &y.state.prefix,
            )
        });
        proposals.truncate(b);
        active = proposals;
        log_adds_by_step.push(counter.get() - step_start);
        if active.is_empty() {
            break;
        }
        // early stop: prefix mass and attention log-prob only decrease
        // with extension, so an active hypothesis whose optimistic bound
        // trails the kept finished set cannot improve it
        if finished.len() >= b {
            let mut fin: Vec<f64> = finished.iter().map(|h| h.joint).collect();
            fin.sort_by(|a, c| c.total_cmp(a));
            let floor = fin[b - 1];
            let bonus = pen.max(0.0);
            let best_bound = active
                .iter()
                .map(|h| {
                    let len = h.state.prefix.len();
                    mix(w, h.state.pscore, h.attn, pen, len)
                        + bonus * (max_len - len) as f64
                })
                .fold(f64::NEG_INFINITY, f64::max);
            if best_bound <= floor {
                break;
            }
        }
    }

    finished.sort_by(|x, y| better(x.joint, &x.tokens, y.joint, &y.tokens));
    finished.truncate(b);
    Ok(DecodeResult {
        nbest: finished,
        steps: log_adds_by_step.len(),
        log_adds: counter.get(),
        log_adds_by_step,
        scorer_calls,
        nanos: start.elapsed().as_nanos(),
    })
}

/// Input-synchronous joint beam search. Each step consumes one grid row:
/// the top-p row candidates drive the prefix-beam transition, each newly
/// spawned prefix is scored once by the attention decoder (cached by
/// prefix), and the beam is pruned by the joint score of the
/// partial-input CTC mass. At t = T all survivors finish; the eos
/// log-prob joins the attention component so the final score is the same
/// formula the output-synchronous search optimizes. Passing no scorer
/// yields pure CTC prefix-beam search.
pub fn input_sync_search(
    grid: &PosteriorGrid,
    scorer: Option<&dyn AttnScorer>,
    config: &DecodeConfig,
) -> Result<DecodeResult> {
    config.validate()?;
    let start = Instant::now();
    let counter = LogAddCounter::new();
    let w = match scorer {
        Some(_) => config.effective_ctc_weight(),
        None => 1.0,
    };
    let pen = config.length_penalty;
    let b = config.beam_size;
    let blank = grid.blank();
    let t_len = grid.t_len();
    let mut scorer_calls: u64 = 0;
    let mut log_adds_by_step = Vec::new();

    let mut beam = InSyncBeam::new();
    // cumulative attention log-prob per prefix ever seen, and the
    // decoder posterior per prefix (both grow monotonically; desk scale)
    let mut attn_cum: HashMap<Vec<usize>, f64> = HashMap::from([(Vec::new(), 0.0)]);
    let mut dist_cache: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();

    let dist_for = |prefix: &[usize],
                        dist_cache: &mut HashMap<Vec<usize>, Vec<f64>>,
                        scorer_calls: &mut u64|
     -> Result<Vec<f64>> {
        if let Some(d) = dist_cache.get(prefix) {
            return Ok(d.clone());
        }
        let d = scorer.expect("scorer required").step_log_probs(prefix)?;
        *scorer_calls += 1;
        dist_cache.insert(prefix.to_vec(), d.clone());
        Ok(d)
    };

    for t in 0..t_len {
        let step_start = counter.get();
        let row = grid.row(t);
        let p = config.prebeam_for(row.len());
        let mut candidates = top_p(row, p);
        if !candidates.contains(&blank) {
            candidates.push(blank);
        }
        beam.advance(t, grid, &candidates, config.blank_penalty, &counter)?;

        // attach attention scores to prefixes spawned this step
        if scorer.is_some() && w < 1.0 {
            let mut fresh: Vec<Vec<usize>> = beam
                .states()
                .keys()
                .filter(|g| !attn_cum.contains_key(*g))
                .cloned()
                .collect();
            fresh.sort();
            for g in fresh {
                let parent = &g[..g.len() - 1];
                let d = dist_for(parent, &mut dist_cache, &mut scorer_calls)?;
                let cum = attn_cum[parent] + d[*g.last().unwrap()];
                attn_cum.insert(g, cum);
            }
        }

        if beam.states().len() > b {
            let mut ranked: Vec<(Vec<usize>, f64)> = beam
                .states()
                .iter()
                .map(|(g, s)| {
                    let attn = if w < 1.0 && scorer.is_some() { attn_cum[g] } else { 0.0 };
                    (g.clone(), mix(w, s.total(), attn, pen, g.len()))
                })
                .collect();
            ranked.sort_by(|x, y| better(x.1, &x.0, y.1, &y.0));
            ranked.truncate(b);
            let keep: std::collections::HashSet<Vec<usize>> =
                ranked.into_iter().map(|(g, _)| g).collect();
            beam.retain(|g, _| keep.contains(g));
        }
        log_adds_by_step.push(counter.get() - step_start);
    }

    // end detection: the input is exhausted; survivors finish with the
    // decoder's eos log-prob folded into the attention component
    let mut finished = Vec::new();
    for (g, s) in beam.states() {
        let attn = if scorer.is_some() && w < 1.0 {
            let d = dist_for(g, &mut dist_cache, &mut scorer_calls)?;
            attn_cum[g] + d[d.len() - 1]
        } else {
            0.0
        };
        let ctc = s.total();
        finished.push(Hypothesis {
            tokens: g.clone(),
            ctc_logp: ctc,
            attn_logp: attn,
            joint: mix(w, ctc, attn, pen, g.len()),
        });
    }
    finished.sort_by(|x, y| better(x.joint, &x.tokens, y.joint, &y.tokens));
    finished.truncate(b);
    Ok(DecodeResult {
        nbest: finished,
        steps: t_len,
        log_adds: counter.get(),
        log_adds_by_step,
        scorer_calls,
        nanos: start.elapsed().as_nanos(),
    })
}

/// Pure attention beam search (no CTC term; penalty still applies).
pub fn attn_beam_search(
    scorer: &dyn AttnScorer,
    max_len: usize,
    config: &DecodeConfig,
) -> Result<DecodeResult> {
    config.validate()?;
    let start = Instant::now();
    let pen = config.length_penalty;
    let b = config.beam_size;
    let mut scorer_calls: u64 = 0;
    let mut steps = 0usize;
    // (tokens, cumulative attention log-prob)
    let mut active: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 0..=max_len {
        steps = step + 1;
        let mut proposals: Vec<(Vec<usize>, f64)> = Vec::new();
        for (tokens, attn) in &active {
            let dist = scorer.step_log_probs(tokens)?;
            scorer_calls += 1;
            let eos = dist.len() - 1;
            let fin_attn = attn + dist[eos];
            finished.push(Hypothesis {
                tokens: tokens.clone(),
                ctc_logp: LOG_ZERO,
                attn_logp: fin_attn,
                joint: mix(0.0, LOG_ZERO, fin_attn, pen, tokens.len()),
            });
            if step == max_len {
                continue;
            }
            let p = config.prebeam_for(eos);
            for c in top_p(&dist[..eos], p) {
                let mut ext = tokens.clone();
                ext.push(c);
                proposals.push((ext, attn + dist[c]));
            }
        }
        proposals.sort_by(|x, y| {
            better(
                mix(0.0, LOG_ZERO, x.1, pen, x.0.len()),
                &x.0,
                mix(0.0, LOG_ZERO, y.1, pen, y.0.len()),
                &y.0,
            )
        });
        proposals.truncate(b);
        active = proposals;
        if active.is_empty() {
            break;
        }
        if finished.len() >= b {
            let mut fin: Vec<f64> = finished.iter().map(|h| h.joint).collect();
            fin.sort_by(|a, c| c.total_cmp(a));
            let floor = fin[b - 1];
            let bonus = pen.max(0.0);
            let best_bound = active
                .iter()
                .map(|(g, a)| mix(0.0, LOG_ZERO, *a, pen, g.len()) + bonus * (max_len - g.len()) as f64)
                .fold(f64::NEG_INFINITY, f64::max);
            if best_bound <= floor {
                break;
            }
        }
    }

    finished.sort_by(|x, y| better(x.joint, &x.tokens, y.joint, &y.tokens));
    finished.truncate(b);
    Ok(DecodeResult {
        nbest: finished,
        steps,
        log_adds: 0,
        log_adds_by_step: Vec::new(),
        scorer_calls,
        nanos: start.elapsed().as_nanos(),
    })
}

/// Full autoregressive log-probability of `ids` followed by eos.
pub fn attn_full_logprob(scorer: &dyn AttnScorer, ids: &[usize]) -> Result<f64> {
    let mut logp = 0.0;
    for l in 0..=ids.len() {
        let dist = scorer.step_log_probs(&ids[..l])?;
        let next = if l == ids.len() { dist.len() - 1 } else { ids[l] };
        logp += dist[next];
    }
    Ok(logp)
}

/// Rescores an n-best list with full-sequence likelihoods from both
/// branches and re-sorts by the joint score. Missing components are
/// filled in (CTC by exact forward likelihood, attention by a
/// teacher-forced pass); a CTC-infeasible hypothesis keeps −∞ as its
/// CTC component.
pub fn rescore(
    nbest: &[Hypothesis],
    grid: &PosteriorGrid,
    scorer: &dyn AttnScorer,
    config: &DecodeConfig,
) -> Result<Vec<Hypothesis>> {
    if nbest.is_empty() {
        return Err(DecodeError::BadConfig("cannot rescore an empty n-best list".into()));
    }
    let mut out = Vec::with_capacity(nbest.len());
    for h in nbest {
        let y = TokenSeq::target(h.tokens.clone());
        let ctc = ctc_logprob(grid, &y)?;
        let attn = attn_full_logprob(scorer, &h.tokens)?;
        out.push(Hypothesis {
            tokens: h.tokens.clone(),
            ctc_logp: ctc,
            attn_logp: attn,
            joint: joint_score(ctc, attn, h.tokens.len(), config),
        });
    }
    out.sort_by(|x, y| better(x.joint, &x.tokens, y.joint, &y.tokens));
    Ok(out)
}

/// Decodes one source sequence with a trained model under any mode.
pub fn decode_instance(
    model: &Model,
    input: &TokenSeq,
    config: &DecodeConfig,
) -> Result<DecodeResult> {
    config.validate()?;
    let ctx = model.eval_ctx();
    let enc = model.encode(&ctx, input)?;
    let grid = enc.tgt_grid();
    let scorer = ModelScorer::new(model, enc.h_tgt.clone());
    let max_len = config.max_len(grid.t_len());
    let mut result = match config.mode {
        DecodeMode::AttnOnly => {
            let mut r = attn_beam_search(&scorer, max_len, config)?;
            // fill the CTC component for reporting; weight 0 keeps the
            // joint score unchanged
            for h in &mut r.nbest {
                h.ctc_logp = ctc_logprob(&grid, &TokenSeq::target(h.tokens.clone()))?;
            }
            r
        }
        DecodeMode::CtcOnly => input_sync_search(&grid, None, config)?,
        DecodeMode::JointOsync => output_sync_search(&grid, &scorer, config)?,
        DecodeMode::JointIsync => input_sync_search(&grid, Some(&scorer), config)?,
        DecodeMode::AttnThenCtcRescore => {
            let first = attn_beam_search(&scorer, max_len, config)?;
            let mut r = first;
            r.nbest = rescore(&r.nbest, &grid, &scorer, config)?;
            r
        }
        DecodeMode::CtcThenAttnRescore => {
            let mut r = input_sync_search(&grid, None, config)?;
            r.nbest = rescore(&r.nbest, &grid, &scorer, config)?;
            r
        }
    };
    result.scorer_calls = scorer.calls();
    Ok(result)
}
