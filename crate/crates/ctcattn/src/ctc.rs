//! CTC likelihood, gradient, greedy decoding, and Viterbi forced
//! alignment over a posterior grid.
//!
//! All dynamic programs run in the log semiring; infeasible
//! (grid too short for the labels) scores return `LOG_ZERO` in scoring
//! contexts and raise in training contexts.

use thiserror::Error;

use crate::autodiff::{self, Tensor};
use crate::logmath::{lse, lse2, LOG_ZERO};

#[derive(Debug, Error)]
pub enum CtcError {
    #[error("label sequence (needs {needed} frames) is infeasible for {t} frames")]
    Infeasible { t: usize, needed: usize },
    #[error("token id {id} out of vocabulary {vocab}")]
    BadToken { id: usize, vocab: usize },
    #[error("grid row {row} is not a normalized log-distribution (logsumexp = {lse})")]
    Unnormalized { row: usize, lse: f64 },
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    Numerics(#[from] autodiff::NumericsError),
}

pub type Result<T> = std::result::Result<T, CtcError>;

/// What a token sequence denotes in the transduction pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SeqKind {
    Source,
    Transcript,
    Target,
}

/// An integer-token sequence. Body ids never equal the blank or eos id
/// of the vocabulary they are scored against.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    pub ids: Vec<usize>,
    pub kind: SeqKind,
}

impl TokenSeq {
    pub fn new(ids: Vec<usize>, kind: SeqKind) -> Self {
        TokenSeq { ids, kind }
    }

    pub fn target(ids: Vec<usize>) -> Self {
        Self::new(ids, SeqKind::Target)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Frames required by the CTC lattice: length plus one separator
    /// blank per adjacent repeat.
    pub fn min_frames(&self) -> usize {
        let repeats = self.ids.windows(2).filter(|w| w[0] == w[1]).count();
        self.ids.len() + repeats
    }
}

/// Per-timestep log-probability distribution over vocabulary ∪ {blank}.
#[derive(Debug, Clone)]
pub struct PosteriorGrid {
    t_len: usize,
    vocab: usize,
    blank: usize,
    logp: Vec<f64>,
}

impl PosteriorGrid {
    /// Builds a grid from row-major T×V log-probabilities, checking that
    /// every row is normalized to 1e-9.
    pub fn new(logp: Vec<f64>, t_len: usize, vocab: usize, blank: usize) -> Result<Self> {
        if t_len == 0 {
            return Err(CtcError::EmptyGrid);
        }
        assert_eq!(logp.len(), t_len * vocab, "grid buffer length");
        if blank >= vocab {
            return Err(CtcError::BadToken { id: blank, vocab });
        }
        for (row, chunk) in logp.chunks(vocab).enumerate() {
            let z = lse(chunk);
            if z.abs() > 1e-9 {
                return Err(CtcError::Unnormalized { row, lse: z });
            }
        }
        Ok(PosteriorGrid { t_len, vocab, blank, logp })
    }

    /// Normalizes arbitrary row-major scores into a grid via log-softmax.
    pub fn from_scores(scores: &[f64], t_len: usize, vocab: usize, blank: usize) -> Result<Self> {
        let mut logp = scores.to_vec();
        for row in logp.chunks_mut(vocab) {
            let z = lse(row);
            for v in row.iter_mut() {
                *v -= z;
            }
        }
        Self::new(logp, t_len, vocab, blank)
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.logp[t * self.vocab..(t + 1) * self.vocab]
    }

    pub fn logp(&self, t: usize, v: usize) -> f64 {
        self.logp[t * self.vocab + v]
    }

    /// Grid truncated to the first `t` rows.
    pub fn truncated(&self, t: usize) -> PosteriorGrid {
        assert!(t >= 1 && t <= self.t_len);
        PosteriorGrid {
            t_len: t,
            vocab: self.vocab,
            blank: self.blank,
            logp: self.logp[..t * self.vocab].to_vec(),
        }
    }
}

/// A length-T alignment over vocabulary ∪ {blank} and its path
/// log-probability under the grid it was aligned against.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPath {
    pub z: Vec<usize>,
    pub logp: f64,
}

/// Merges adjacent duplicates, then removes blanks.
pub fn collapse(z: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = None;
    for &tok in z {
        if Some(tok) != last && tok != blank {
            out.push(tok);
        }
        last = Some(tok);
    }
    out
}

fn check_labels(grid: &PosteriorGrid, y: &TokenSeq) -> Result<()> {
    for &id in &y.ids {
        if id >= grid.vocab || id == grid.blank {
            return Err(CtcError::BadToken { id, vocab: grid.vocab });
        }
    }
    Ok(())
}

/// Extended label sequence with blanks interleaved: ∅ y1 ∅ y2 … ∅.
fn extended_labels(y: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * y.len() + 1);
    ext.push(blank);
    for &id in y {
        ext.push(id);
        ext.push(blank);
    }
    ext
}

/// log P_CTC(y | grid): forward algorithm over the 2|y|+1-state lattice.
/// Returns LOG_ZERO when no alignment exists.
pub fn ctc_logprob(grid: &PosteriorGrid, y: &TokenSeq) -> Result<f64> {
    check_labels(grid, y)?;
    if y.min_frames() > grid.t_len {
        return Ok(LOG_ZERO);
    }
    let ext = extended_labels(&y.ids, grid.blank);
    let s_len = ext.len();
    let mut alpha = vec![LOG_ZERO; s_len];
    alpha[0] = grid.logp(0, ext[0]);
    if s_len > 1 {
        alpha[1] = grid.logp(0, ext[1]);
    }
    let mut next = vec![LOG_ZERO; s_len];
    for t in 1..grid.t_len {
        for s in 0..s_len {
            let mut acc = alpha[s];
            if s >= 1 {
                acc = lse2(acc, alpha[s - 1]);
            }
            if s >= 2 && ext[s] != grid.blank && ext[s] != ext[s - 2] {
                acc = lse2(acc, alpha[s - 2]);
            }
            next[s] = acc + grid.logp(t, ext[s]);
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    let mut total = alpha[s_len - 1];
    if s_len > 1 {
        total = lse2(total, alpha[s_len - 2]);
    }
    Ok(total)
}

/// Forward-backward state occupancies in token space: `occ[t*V + v]` is
/// the log-probability that an alignment of `y` emits `v` at frame `t`.
/// Second return is the total log-likelihood.
fn occupancy(grid: &PosteriorGrid, y: &[usize]) -> (Vec<f64>, f64) {
    let ext = extended_labels(y, grid.blank);
    let s_len = ext.len();
    let t_len = grid.t_len;
    let mut alpha = vec![LOG_ZERO; t_len * s_len];
    alpha[0] = grid.logp(0, ext[0]);
    if s_len > 1 {
        alpha[1] = grid.logp(0, ext[1]);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut acc = prev[s];
            if s >= 1 {
                acc = lse2(acc, prev[s - 1]);
            }
            if s >= 2 && ext[s] != grid.blank && ext[s] != ext[s - 2] {
                acc = lse2(acc, prev[s - 2]);
            }
            alpha[t * s_len + s] = acc + grid.logp(t, ext[s]);
        }
    }
    // beta includes the emission at t, mirroring alpha
    let mut beta = vec![LOG_ZERO; t_len * s_len];
    beta[(t_len - 1) * s_len + s_len - 1] = grid.logp(t_len - 1, ext[s_len - 1]);
    if s_len > 1 {
        beta[(t_len - 1) * s_len + s_len - 2] = grid.logp(t_len - 1, ext[s_len - 2]);
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let nxt = &beta[(t + 1) * s_len..(t + 2) * s_len];
            let mut acc = nxt[s];
            if s + 1 < s_len {
                acc = lse2(acc, nxt[s + 1]);
            }
            if s + 2 < s_len && ext[s + 2] != grid.blank && ext[s + 2] != ext[s] {
                acc = lse2(acc, nxt[s + 2]);
            }
            beta[t * s_len + s] = acc + grid.logp(t, ext[s]);
        }
    }
    let last = &alpha[(t_len - 1) * s_len..];
    let mut log_z = last[s_len - 1];
    if s_len > 1 {
        log_z = lse2(log_z, last[s_len - 2]);
    }
    let mut occ = vec![LOG_ZERO; t_len * grid.vocab];
    for t in 0..t_len {
        for s in 0..s_len {
            // alpha and beta both include the frame-t emission; remove one copy
            let g = alpha[t * s_len + s] + beta[t * s_len + s] - grid.logp(t, ext[s]) - log_z;
            let slot = &mut occ[t * grid.vocab + ext[s]];
            *slot = lse2(*slot, g);
        }
    }
    (occ, log_z)
}

/// CTC loss as a differentiable operation over raw T×V logits. The
/// gradient w.r.t. the logits is softmax(logits) − γ where γ is the
/// forward-backward occupancy.
pub fn ctc_loss(logits: &Tensor, y: &TokenSeq, blank: usize) -> Result<Tensor> {
    let shape = logits.shape().to_vec();
    assert_eq!(shape.len(), 2, "ctc_loss expects T×V logits");
    let (t_len, vocab) = (shape[0], shape[1]);
    let grid = PosteriorGrid::from_scores(logits.data(), t_len, vocab, blank)?;
    check_labels(&grid, y)?;
    if y.min_frames() > t_len {
        return Err(CtcError::Infeasible { t: t_len, needed: y.min_frames() });
    }
    let (occ, log_z) = occupancy(&grid, &y.ids);
    let probs: Vec<f64> = grid.logp.iter().map(|l| l.exp()).collect();
    let out = autodiff::custom_unary("ctc_loss", logits, vec![-log_z], vec![], move |g| {
        let s = g[0];
        probs
            .iter()
            .zip(&occ)
            .map(|(p, o)| s * (p - o.exp()))
            .collect()
    })?;
    Ok(out)
}

/// Best-path decoding: collapse of the per-row argmax (ties to the
/// smallest id).
pub fn greedy_decode(grid: &PosteriorGrid) -> TokenSeq {
    let z: Vec<usize> = (0..grid.t_len)
        .map(|t| {
            let row = grid.row(t);
            let mut best = 0;
            for (v, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = v;
                }
            }
            best
        })
        .collect();
    TokenSeq::target(collapse(&z, grid.blank))
}

/// Highest-probability single alignment whose collapse equals `y`,
/// max-semiring DP with backpointers. Ties break toward the predecessor
/// emitting blank, then toward the lower token id.
pub fn viterbi_align(grid: &PosteriorGrid, y: &TokenSeq) -> Result<AlignmentPath> {
    check_labels(grid, y)?;
    if y.min_frames() > grid.t_len {
        return Err(CtcError::Infeasible { t: grid.t_len, needed: y.min_frames() });
    }
    let ext = extended_labels(&y.ids, grid.blank);
    let s_len = ext.len();
    let t_len = grid.t_len;
    let mut score = vec![LOG_ZERO; t_len * s_len];
    let mut back = vec![usize::MAX; t_len * s_len];
    score[0] = grid.logp(0, ext[0]);
    if s_len > 1 {
        score[1] = grid.logp(0, ext[1]);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut cands: Vec<usize> = vec![s];
            if s >= 1 {
                cands.push(s - 1);
            }
            if s >= 2 && ext[s] != grid.blank && ext[s] != ext[s - 2] {
                cands.push(s - 2);
            }
            let mut best: Option<(f64, usize)> = None;
            for &p in &cands {
                let sc = score[(t - 1) * s_len + p];
                if sc == LOG_ZERO {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bs, bp)) => {
                        sc > bs || (sc == bs && prefer_pred(&ext, p, bp, grid.blank))
                    }
                };
                if better {
                    best = Some((sc, p));
                }
            }
            if let Some((sc, p)) = best {
                score[t * s_len + s] = sc + grid.logp(t, ext[s]);
                back[t * s_len + s] = p;
            }
        }
    }
    let mut end = s_len - 1;
    if s_len > 1 {
        let a = score[(t_len - 1) * s_len + s_len - 1];
        let b = score[(t_len - 1) * s_len + s_len - 2];
        // final blank preferred on ties
        if b > a {
            end = s_len - 2;
        }
    }
    let final_score = score[(t_len - 1) * s_len + end];
    if final_score == LOG_ZERO {
        return Err(CtcError::Infeasible { t: t_len, needed: y.min_frames() });
    }
    let mut path = vec![0usize; t_len];
    let mut s = end;
    for t in (0..t_len).rev() {
        path[t] = ext[s];
        if t > 0 {
            s = back[t * s_len + s];
        }
    }
    debug_assert_eq!(collapse(&path, grid.blank), y.ids);
    Ok(AlignmentPath { z: path, logp: final_score })
}

/// True when predecessor `a` beats `b` under the deterministic blank-first
/// tie-break.
fn prefer_pred(ext: &[usize], a: usize, b: usize, blank: usize) -> bool {
    let (la, lb) = (ext[a], ext[b]);
    if (la == blank) != (lb == blank) {
        return la == blank;
    }
    if la != lb {
        return la < lb;
    }
    a < b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_grid(rng: &mut ChaCha8Rng, t: usize, v: usize) -> PosteriorGrid {
        let scores: Vec<f64> = (0..t * v).map(|_| rng.gen_range(-2.0..2.0)).collect();
        PosteriorGrid::from_scores(&scores, t, v, v - 1).unwrap()
    }

    fn uniform_grid(t: usize, v: usize) -> PosteriorGrid {
        let p = -(v as f64).ln();
        PosteriorGrid::new(vec![p; t * v], t, v, v - 1).unwrap()
    }

    /// One-hot-ish grid spelling the given alignment (prob ~1 per frame).
    fn peaked_grid(z: &[usize], v: usize) -> PosteriorGrid {
        let mut scores = vec![-40.0; z.len() * v];
        for (t, &tok) in z.iter().enumerate() {
            scores[t * v + tok] = 40.0;
        }
        PosteriorGrid::from_scores(&scores, z.len(), v, v - 1).unwrap()
    }

    #[test]
    fn collapse_paper_rule() {
        // (a, a, ∅, a, b, b) → (a, a, b) with blank = 2 playing ∅
        let blank = 9;
        assert_eq!(collapse(&[0, 0, blank, 0, 1, 1], blank), vec![0, 0, 1]);
        assert_eq!(collapse(&[blank, blank, blank], blank), Vec::<usize>::new());
        assert_eq!(collapse(&[0, blank, 0], blank), vec![0, 0]);
    }

    #[test]
    fn ctc_single_frame() {
        // T=1, y=(a), p(a)=0.6
        let logp = vec![0.6f64.ln(), 0.3f64.ln(), 0.1f64.ln()];
        let grid = PosteriorGrid::new(logp, 1, 3, 2).unwrap();
        let y = TokenSeq::target(vec![0]);
        let lp = ctc_logprob(&grid, &y).unwrap();
        assert!((lp - 0.6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ctc_all_blank_path() {
        // T=2, y=(), p(∅)=0.5 each step → log 0.25
        let logp = vec![0.25f64.ln(), 0.25f64.ln(), 0.5f64.ln()];
        let grid = PosteriorGrid::new([logp.clone(), logp].concat(), 2, 3, 2).unwrap();
        let lp = ctc_logprob(&grid, &TokenSeq::target(vec![])).unwrap();
        assert!((lp - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ctc_uniform_enumeration_case() {
        // T=2 uniform over {a,b,∅}: paths (a,∅),(∅,a),(a,a) → 3/9
        let grid = uniform_grid(2, 3);
        let y = TokenSeq::target(vec![0]);
        let lp = ctc_logprob(&grid, &y).unwrap();
        assert!((lp - (1.0f64 / 3.0).ln()).abs() < 1e-12);
        let oracle_lp = oracle::brute_ctc(&grid, &y, &oracle::EnumerationBudget::default()).unwrap();
        assert!((lp - oracle_lp).abs() < 1e-12);
    }

    #[test]
    fn ctc_infeasible_is_log_zero() {
        let grid = uniform_grid(2, 3);
        let y = TokenSeq::target(vec![0, 0, 1]);
        assert_eq!(ctc_logprob(&grid, &y).unwrap(), LOG_ZERO);
    }

    #[test]
    fn ctc_matches_oracle_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let budget = oracle::EnumerationBudget::default();
        for _ in 0..60 {
            let t = rng.gen_range(1..=6);
            let v = rng.gen_range(2..=4);
            let grid = random_grid(&mut rng, t, v);
            let y_len = rng.gen_range(0..=3.min(t));
            let y = TokenSeq::target((0..y_len).map(|_| rng.gen_range(0..v - 1)).collect());
            let got = ctc_logprob(&grid, &y).unwrap();
            let want = oracle::brute_ctc(&grid, &y, &budget).unwrap();
            if want == LOG_ZERO {
                assert_eq!(got, LOG_ZERO);
            } else {
                assert!((got - want).abs() < 1e-9, "got {} want {}", got, want);
            }
        }
    }

    #[test]
    fn sum_dominates_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let grid = random_grid(&mut rng, 6, 4);
            let y = TokenSeq::target(vec![rng.gen_range(0..3), rng.gen_range(0..3)]);
            let total = ctc_logprob(&grid, &y).unwrap();
            let best = viterbi_align(&grid, &y).unwrap().logp;
            assert!(total >= best - 1e-12);
        }
    }

    #[test]
    fn pure_blank_frame_is_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid = random_grid(&mut rng, 5, 4);
        let y = TokenSeq::target(vec![1, 2]);
        let lp = ctc_logprob(&grid, &y).unwrap();
        // append a frame with p(∅) = 1
        let mut logp = grid.logp.clone();
        logp.extend_from_slice(&[LOG_ZERO, LOG_ZERO, LOG_ZERO, 0.0]);
        let padded = PosteriorGrid { t_len: 6, vocab: 4, blank: 3, logp };
        let lp2 = ctc_logprob(&padded, &y).unwrap();
        assert!((lp - lp2).abs() < 1e-12);
    }

    #[test]
    fn greedy_decode_basics() {
        let g = peaked_grid(&[0, 2, 1], 3); // (a, ∅, b)
        assert_eq!(greedy_decode(&g).ids, vec![0, 1]);
        let g = peaked_grid(&[2, 2, 2], 3);
        assert_eq!(greedy_decode(&g).ids, Vec::<usize>::new());
    }

    #[test]
    fn greedy_matches_row_argmax_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let grid = random_grid(&mut rng, 8, 4);
            let got = greedy_decode(&grid);
            // independent loop-oracle
            let mut path = Vec::new();
            for t in 0..grid.t_len() {
                let row = grid.row(t);
                let mut arg = 0;
                let mut hi = f64::NEG_INFINITY;
                for (v, &p) in row.iter().enumerate() {
                    if p > hi {
                        hi = p;
                        arg = v;
                    }
                }
                path.push(arg);
            }
            assert_eq!(got.ids, collapse(&path, grid.blank()));
        }
    }

    #[test]
    fn viterbi_one_hot_path() {
        let z = [0, 2, 1];
        let g = peaked_grid(&z, 3);
        let y = TokenSeq::target(vec![0, 1]);
        let path = viterbi_align(&g, &y).unwrap();
        assert_eq!(path.z, z.to_vec());
        assert!(path.logp.abs() < 1e-10);
    }

    #[test]
    fn viterbi_forced_shape() {
        // T=3, y=(a,a): the only valid alignment is (a, ∅, a)
        let grid = uniform_grid(3, 3);
        let y = TokenSeq::target(vec![0, 0]);
        let path = viterbi_align(&grid, &y).unwrap();
        assert_eq!(path.z, vec![0, 2, 0]);
    }

    #[test]
    fn viterbi_matches_oracle_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let budget = oracle::EnumerationBudget::default();
        for _ in 0..30 {
            let t = rng.gen_range(2..=6);
            let grid = random_grid(&mut rng, t, 3);
            let y = TokenSeq::target(vec![rng.gen_range(0..2)]);
            let path = viterbi_align(&grid, &y).unwrap();
            let best = oracle::brute_viterbi(&grid, &y, &budget).unwrap();
            assert!((path.logp - best).abs() < 1e-9);
        }
    }

    #[test]
    fn viterbi_infeasible_errors() {
        let grid = uniform_grid(1, 3);
        let y = TokenSeq::target(vec![0, 1]);
        assert!(matches!(
            viterbi_align(&grid, &y),
            Err(CtcError::Infeasible { .. })
        ));
    }

    #[test]
    fn ctc_loss_zero_on_matching_one_hot() {
        let tape = crate::Tape::new();
        let z = [0, 3, 1, 2];
        let v = 4;
        let mut scores = vec![-45.0; z.len() * v];
        for (t, &tok) in z.iter().enumerate() {
            scores[t * v + tok] = 45.0;
        }
        let logits = tape.var(scores, &[z.len(), v]).unwrap();
        let y = TokenSeq::target(collapse(&z, v - 1));
        let loss = ctc_loss(&logits, &y, v - 1).unwrap();
        assert!(loss.item().abs() < 1e-9);
        autodiff::backward(&loss).unwrap();
        for g in logits.grad().unwrap() {
            assert!(g.abs() < 1e-9, "gradient {}", g);
        }
    }

    #[test]
    fn ctc_loss_matches_oracle_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let budget = oracle::EnumerationBudget::default();
        for _ in 0..10 {
            let t = rng.gen_range(2..=6);
            let v = 4;
            let scores: Vec<f64> = (0..t * v).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y = TokenSeq::target(vec![rng.gen_range(0..3), rng.gen_range(0..3)]);
            if y.min_frames() > t {
                continue;
            }
            let tape = crate::Tape::new();
            let logits = tape.var(scores.clone(), &[t, v]).unwrap();
            let loss = ctc_loss(&logits, &y, v - 1).unwrap();
            let grid = PosteriorGrid::from_scores(&scores, t, v, v - 1).unwrap();
            let want = -oracle::brute_ctc(&grid, &y, &budget).unwrap();
            assert!((loss.item() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn ctc_loss_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let t = 5;
        let v = 4;
        let scores: Vec<f64> = (0..t * v).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y = TokenSeq::target(vec![0, 2]);
        let report = autodiff::grad_check(
            move |_, x| {
                ctc_loss(x, &TokenSeq::target(y.ids.clone()), v - 1)
                    .map_err(|e| autodiff::NumericsError::Invalid(e.to_string()))
            },
            &scores,
            &[t, v],
            1e-5,
            1e-5,
        )
        .unwrap();
        assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn ctc_loss_infeasible_errors() {
        let tape = crate::Tape::new();
        let logits = tape.var(vec![0.0; 2 * 3], &[2, 3]).unwrap();
        let y = TokenSeq::target(vec![0, 0, 1]);
        assert!(matches!(
            ctc_loss(&logits, &y, 2),
            Err(CtcError::Infeasible { .. })
        ));
    }
}
