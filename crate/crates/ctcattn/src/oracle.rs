//! Brute-force references used by tests and the acceptance suite.
//!
//! Everything here enumerates: no dynamic programming is shared with the
//! implementations under test, so a bug cannot hide on both sides.

use thiserror::Error;

use crate::ctc::{collapse, PosteriorGrid, TokenSeq};
use crate::decode::{joint_score, AttnScorer, DecodeConfig};
use crate::logmath::{lse2, LOG_ZERO};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("scorer failed: {0}")]
    Scorer(String),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Hard caps on enumeration size; exceeding them is an explicit error,
/// never a silent truncation.
#[derive(Debug, Clone)]
pub struct EnumerationBudget {
    pub max_t: usize,
    pub max_len: usize,
    pub max_vocab: usize,
    pub max_nodes: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget {
            max_t: 8,
            max_len: 5,
            max_vocab: 5,
            max_nodes: 4_000_000,
        }
    }
}

impl EnumerationBudget {
    fn check_paths(&self, t: usize, vocab: usize) -> Result<u64> {
        if t > self.max_t {
            return Err(OracleError::BudgetExceeded(format!("T {} > {}", t, self.max_t)));
        }
        if vocab > self.max_vocab {
            return Err(OracleError::BudgetExceeded(format!(
                "vocab {} > {}",
                vocab, self.max_vocab
            )));
        }
        let count = (vocab as u64).checked_pow(t as u32).ok_or_else(|| {
            OracleError::BudgetExceeded("path count overflow".to_string())
        })?;
        if count > self.max_nodes {
            return Err(OracleError::BudgetExceeded(format!(
                "{} paths > {}",
                count, self.max_nodes
            )));
        }
        Ok(count)
    }
}

fn for_each_path<F: FnMut(&[usize], f64)>(grid: &PosteriorGrid, mut f: F) {
    let t_len = grid.t_len();
    let vocab = grid.vocab();
    let total = (vocab as u64).pow(t_len as u32);
    let mut path = vec![0usize; t_len];
    for mut idx in 0..total {
        let mut logp = 0.0;
        for t in 0..t_len {
            let v = (idx % vocab as u64) as usize;
            idx /= vocab as u64;
            path[t] = v;
            logp += grid.logp(t, v);
        }
        f(&path, logp);
    }
}

/// Literal Σ over all alignments whose collapse equals `y`.
pub fn brute_ctc(grid: &PosteriorGrid, y: &TokenSeq, budget: &EnumerationBudget) -> Result<f64> {
    budget.check_paths(grid.t_len(), grid.vocab())?;
    let mut total = LOG_ZERO;
    for_each_path(grid, |path, logp| {
        if collapse(path, grid.blank()) == y.ids {
            total = lse2(total, logp);
        }
    });
    Ok(total)
}

/// Max over all alignments whose collapse equals `y`.
pub fn brute_viterbi(grid: &PosteriorGrid, y: &TokenSeq, budget: &EnumerationBudget) -> Result<f64> {
    budget.check_paths(grid.t_len(), grid.vocab())?;
    let mut best = LOG_ZERO;
    for_each_path(grid, |path, logp| {
        if collapse(path, grid.blank()) == y.ids && logp > best {
            best = logp;
        }
    });
    Ok(best)
}

/// Log-mass of full-grid alignments whose collapse has `prefix` as a
/// proper-or-equal prefix.
pub fn brute_prefix_mass(
    grid: &PosteriorGrid,
    prefix: &[usize],
    budget: &EnumerationBudget,
) -> Result<f64> {
    budget.check_paths(grid.t_len(), grid.vocab())?;
    let mut total = LOG_ZERO;
    for_each_path(grid, |path, logp| {
        let collapsed = collapse(path, grid.blank());
        if collapsed.len() >= prefix.len() && collapsed[..prefix.len()] == *prefix {
            total = lse2(total, logp);
        }
    });
    Ok(total)
}

/// Global argmax of the joint decoding objective over all output
/// sequences up to `len_cap`, by literal enumeration. The attention
/// component includes the end token; the CTC component is the
/// enumeration-based full-sequence likelihood.
pub fn exhaustive_joint_argmax(
    grid: &PosteriorGrid,
    scorer: &dyn AttnScorer,
    config: &DecodeConfig,
    len_cap: usize,
    budget: &EnumerationBudget,
) -> Result<(Vec<usize>, f64)> {
    let tgt_vocab = grid.vocab() - 1; // grid vocabulary minus blank
    if len_cap > self_cap(budget) {
        return Err(OracleError::BudgetExceeded(format!(
            "length cap {} > {}",
            len_cap, budget.max_len
        )));
    }
    let mut seq_count: u64 = 0;
    for l in 0..=len_cap {
        seq_count = seq_count.saturating_add((tgt_vocab as u64).saturating_pow(l as u32));
    }
    if seq_count > budget.max_nodes {
        return Err(OracleError::BudgetExceeded(format!(
            "{} sequences > {}",
            seq_count, budget.max_nodes
        )));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut seq = Vec::new();
    enumerate_seqs(tgt_vocab, len_cap, &mut seq, &mut |ids: &[usize]| {
        let y = TokenSeq::target(ids.to_vec());
        let ctc = brute_ctc(grid, &y, budget)?;
        let attn = attn_seq_logprob(scorer, ids)?;
        let score = joint_score(ctc, attn, ids.len(), config);
        let better = match &best {
            None => true,
            Some((b_ids, b_score)) => {
                score > *b_score
                    || (score == *b_score
                        && (ids.len() < b_ids.len()
                            || (ids.len() == b_ids.len() && ids < &b_ids[..])))
            }
        };
        if better {
            best = Some((ids.to_vec(), score));
        }
        Ok(())
    })?;
    Ok(best.expect("at least the empty sequence was scored"))
}

fn self_cap(budget: &EnumerationBudget) -> usize {
    budget.max_len
}

/// Full autoregressive log-probability of `ids` followed by eos.
pub fn attn_seq_logprob(scorer: &dyn AttnScorer, ids: &[usize]) -> Result<f64> {
    let mut logp = 0.0;
    for l in 0..=ids.len() {
        let dist = scorer
            .step_log_probs(&ids[..l])
            .map_err(|e| OracleError::Scorer(e.to_string()))?;
        let next = if l == ids.len() { dist.len() - 1 } else { ids[l] };
        logp += dist[next];
    }
    Ok(logp)
}

fn enumerate_seqs(
    vocab: usize,
    cap: usize,
    seq: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    f(seq)?;
    if seq.len() == cap {
        return Ok(());
    }
    for v in 0..vocab {
        seq.push(v);
        enumerate_seqs(vocab, cap, seq, f)?;
        seq.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, t: usize, v: usize) -> PosteriorGrid {
        let scores: Vec<f64> = (0..t * v).map(|_| rng.gen_range(-2.0..2.0)).collect();
        PosteriorGrid::from_scores(&scores, t, v, v - 1).unwrap()
    }

    #[test]
    fn brute_ctc_hand_case() {
        // T=2 uniform over {a,b,∅} → P(collapse = (a)) = 3/9
        let p = -(3f64).ln();
        let grid = PosteriorGrid::new(vec![p; 6], 2, 3, 2).unwrap();
        let lp = brute_ctc(&grid, &TokenSeq::target(vec![0]), &EnumerationBudget::default()).unwrap();
        assert!((lp - (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn brute_ctc_empty_label_is_blank_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = random_grid(&mut rng, 3, 3);
        let lp = brute_ctc(&grid, &TokenSeq::target(vec![]), &EnumerationBudget::default()).unwrap();
        let want: f64 = (0..3).map(|t| grid.logp(t, 2)).sum();
        assert!((lp - want).abs() < 1e-12);
    }

    #[test]
    fn brute_ctc_infeasible_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = random_grid(&mut rng, 2, 3);
        let lp = brute_ctc(
            &grid,
            &TokenSeq::target(vec![0, 1, 0]),
            &EnumerationBudget::default(),
        )
        .unwrap();
        assert_eq!(lp, LOG_ZERO);
    }

    #[test]
    fn prefix_mass_of_empty_prefix_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let grid = random_grid(&mut rng, 4, 3);
        let lp = brute_prefix_mass(&grid, &[], &EnumerationBudget::default()).unwrap();
        assert!(lp.abs() < 1e-9);
    }

    #[test]
    fn budget_exceeded_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let grid = random_grid(&mut rng, 6, 4);
        let tight = EnumerationBudget { max_nodes: 10, ..EnumerationBudget::default() };
        assert!(matches!(
            brute_ctc(&grid, &TokenSeq::target(vec![0]), &tight),
            Err(OracleError::BudgetExceeded(_))
        ));
        let short = EnumerationBudget { max_t: 2, ..EnumerationBudget::default() };
        assert!(matches!(
            brute_ctc(&grid, &TokenSeq::target(vec![0]), &short),
            Err(OracleError::BudgetExceeded(_))
        ));
    }

    #[test]
    fn brute_matches_independent_hand_sums() {
        // T=2, V=3: P((a,b)) has the single path (a, b)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid = random_grid(&mut rng, 2, 3);
        let lp = brute_ctc(&grid, &TokenSeq::target(vec![0, 1]), &EnumerationBudget::default())
            .unwrap();
        let want = grid.logp(0, 0) + grid.logp(1, 1);
        assert!((lp - want).abs() < 1e-12);
    }

    #[test]
    fn prefix_mass_certain_sequence() {
        // one-hot grid spelling (a, ∅, b): prefix (a, b) has mass 1
        let mut scores = vec![-40.0; 9];
        scores[0] = 40.0;
        scores[3 + 2] = 40.0;
        scores[6 + 1] = 40.0;
        let grid = PosteriorGrid::from_scores(&scores, 3, 3, 2).unwrap();
        let lp = brute_prefix_mass(&grid, &[0, 1], &EnumerationBudget::default()).unwrap();
        assert!(lp.abs() < 1e-9);
    }

    #[test]
    fn oracle_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grid = random_grid(&mut rng, 4, 3);
        let y = TokenSeq::target(vec![0, 1]);
        let a = brute_ctc(&grid, &y, &EnumerationBudget::default()).unwrap();
        let b = brute_ctc(&grid, &y, &EnumerationBudget::default()).unwrap();
        assert_eq!(a, b);
        // and agrees with the DP implementation it exists to check
        let dp = ctc::ctc_logprob(&grid, &y).unwrap();
        assert!((a - dp).abs() < 1e-9);
    }
}
