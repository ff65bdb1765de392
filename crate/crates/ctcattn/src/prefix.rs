//! Incremental CTC scoring states for the two beam synchronies.
//!
//! [`OutSyncPrefixState`] scores a growing label prefix against the full
//! input grid (one O(T) recursion per extension). [`InSyncBeam`] carries
//! partial-input prefix-beam masses, consuming one grid row per step
//! with O(prefixes × candidates) log-additions. Both reproduce
//! `ctc_logprob` exactly when nothing is pruned.

use std::collections::HashMap;

use thiserror::Error;

use crate::ctc::PosteriorGrid;
use crate::logmath::{lse2, LogAddCounter, LOG_ZERO};

#[derive(Debug, Error)]
pub enum PrefixError {
    #[error("cannot extend a prefix with the blank token")]
    BlankExtension,
    #[error("grid rows must be consumed in order: expected t={expected}, got t={got}")]
    OutOfOrder { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, PrefixError>;

/// Full-input prefix scoring state: per-timestep log-masses of
/// alignments collapsing exactly to the prefix, split by whether the
/// last emission was blank.
#[derive(Debug, Clone)]
pub struct OutSyncPrefixState {
    pub prefix: Vec<usize>,
    gamma_n: Vec<f64>,
    gamma_b: Vec<f64>,
    /// Cumulative log prefix probability: mass of all full collapses
    /// beginning with `prefix`.
    pub pscore: f64,
}

impl OutSyncPrefixState {
    /// State of the empty prefix: blank-only mass accumulates in
    /// `gamma_b`, and the whole output space is a continuation.
    pub fn root(grid: &PosteriorGrid) -> Self {
        let t_len = grid.t_len();
        let mut gamma_b = vec![LOG_ZERO; t_len];
        let mut acc = 0.0;
        for t in 0..t_len {
            acc += grid.logp(t, grid.blank());
            gamma_b[t] = acc;
        }
        OutSyncPrefixState {
            prefix: Vec::new(),
            gamma_n: vec![LOG_ZERO; t_len],
            gamma_b,
            pscore: 0.0,
        }
    }

    /// Extends the prefix with non-blank token `c`, recomputing the
    /// gamma recursions over all T frames and the new prefix score.
    pub fn extend(
        &self,
        c: usize,
        grid: &PosteriorGrid,
        counter: &LogAddCounter,
    ) -> Result<OutSyncPrefixState> {
        if c == grid.blank() {
            return Err(PrefixError::BlankExtension);
        }
        let t_len = grid.t_len();
        let last = self.prefix.last().copied();
        let mut gamma_n = vec![LOG_ZERO; t_len];
        let mut gamma_b = vec![LOG_ZERO; t_len];
        let mut pscore = LOG_ZERO;
        for t in 0..t_len {
            let (prev_b_g, prev_n_g) = if t == 0 {
                let b = if self.prefix.is_empty() { 0.0 } else { LOG_ZERO };
                (b, LOG_ZERO)
            } else {
                (self.gamma_b[t - 1], self.gamma_n[t - 1])
            };
            // mass of g that can transition into c at frame t; a repeat
            // of last(g) must cross a blank first
            let masked_n = if last == Some(c) { LOG_ZERO } else { prev_n_g };
            let phi = counter.lse2(prev_b_g, masked_n);
            let (prev_n_h, prev_b_h) = if t == 0 {
                (LOG_ZERO, LOG_ZERO)
            } else {
                (gamma_n[t - 1], gamma_b[t - 1])
            };
            gamma_n[t] = counter.lse2(prev_n_h, phi) + grid.logp(t, c);
            gamma_b[t] = counter.lse2(prev_b_h, prev_n_h) + grid.logp(t, grid.blank());
            pscore = counter.lse2(pscore, phi + grid.logp(t, c));
        }
        let mut prefix = self.prefix.clone();
        prefix.push(c);
        Ok(OutSyncPrefixState { prefix, gamma_n, gamma_b, pscore })
    }

    /// Score of closing the hypothesis: the exact full-sequence CTC
    /// log-likelihood of the prefix.
    pub fn eos_score(&self, counter: &LogAddCounter) -> f64 {
        let t = self.gamma_n.len() - 1;
        counter.lse2(self.gamma_n[t], self.gamma_b[t])
    }
}

/// Partial-input log-masses for one prefix at the current timestep.
#[derive(Debug, Clone, Copy)]
pub struct InSyncPrefixState {
    pub p_b: f64,
    pub p_nb: f64,
}

impl InSyncPrefixState {
    fn zero() -> Self {
        InSyncPrefixState { p_b: LOG_ZERO, p_nb: LOG_ZERO }
    }

    pub fn total(&self) -> f64 {
        lse2(self.p_b, self.p_nb)
    }
}

/// Prefix-beam state map, consuming grid rows strictly in order.
/// Prefixes identical after collapse are merged by log-adding masses.
#[derive(Debug, Clone, Default)]
pub struct InSyncBeam {
    next_t: usize,
    states: HashMap<Vec<usize>, InSyncPrefixState>,
}

impl InSyncBeam {
    pub fn new() -> Self {
        let mut states = HashMap::new();
        states.insert(Vec::new(), InSyncPrefixState { p_b: 0.0, p_nb: LOG_ZERO });
        InSyncBeam { next_t: 0, states }
    }

    pub fn consumed(&self) -> usize {
        self.next_t
    }

    pub fn states(&self) -> &HashMap<Vec<usize>, InSyncPrefixState> {
        &self.states
    }

    pub fn mass(&self, prefix: &[usize]) -> Option<f64> {
        self.states.get(prefix).map(|s| s.total())
    }

    /// Keeps only the prefixes accepted by `keep`; lets callers prune by
    /// an external score (e.g. a joint CTC/attention score).
    pub fn retain<F: FnMut(&[usize], &InSyncPrefixState) -> bool>(&mut self, mut keep: F) {
        self.states.retain(|p, s| keep(p, s));
    }

    /// Standard prefix-beam transition over row `t`, restricted to the
    /// given candidate tokens (blank included or not). `blank_penalty`
    /// is subtracted from log p_t(∅).
    pub fn advance(
        &mut self,
        t: usize,
        grid: &PosteriorGrid,
        candidates: &[usize],
        blank_penalty: f64,
        counter: &LogAddCounter,
    ) -> Result<()> {
        if t != self.next_t {
            return Err(PrefixError::OutOfOrder { expected: self.next_t, got: t });
        }
        let blank = grid.blank();
        let mut next: HashMap<Vec<usize>, InSyncPrefixState> = HashMap::new();
        for (prefix, st) in &self.states {
            let total = counter.lse2(st.p_b, st.p_nb);
            for &c in candidates {
                let p_c = grid.logp(t, c);
                if c == blank {
                    let e = next.entry(prefix.clone()).or_insert_with(InSyncPrefixState::zero);
                    e.p_b = counter.lse2(e.p_b, total + p_c - blank_penalty);
                } else if prefix.last() == Some(&c) {
                    // repeat collapses onto the same prefix
                    let e = next.entry(prefix.clone()).or_insert_with(InSyncPrefixState::zero);
                    e.p_nb = counter.lse2(e.p_nb, st.p_nb + p_c);
                    // a repeat after a blank spawns the extended prefix
                    let mut ext = prefix.clone();
                    ext.push(c);
                    let e = next.entry(ext).or_insert_with(InSyncPrefixState::zero);
                    e.p_nb = counter.lse2(e.p_nb, st.p_b + p_c);
                } else {
                    let mut ext = prefix.clone();
                    ext.push(c);
                    let e = next.entry(ext).or_insert_with(InSyncPrefixState::zero);
                    e.p_nb = counter.lse2(e.p_nb, total + p_c);
                }
            }
        }
        next.retain(|_, s| s.p_b != LOG_ZERO || s.p_nb != LOG_ZERO);
        self.states = next;
        self.next_t = t + 1;
        Ok(())
    }

    /// Keeps only the `k` highest-mass prefixes.
    pub fn prune_to(&mut self, k: usize) {
        if self.states.len() <= k {
            return;
        }
        let mut entries: Vec<(Vec<usize>, InSyncPrefixState)> =
            self.states.drain().collect();
        entries.sort_by(|a, b| {
            b.1.total()
                .partial_cmp(&a.1.total())
                .unwrap()
                .then_with(|| a.0.len().cmp(&b.0.len()))
                .then_with(|| a.0.cmp(&b.0))
        });
        entries.truncate(k);
        self.states = entries.into_iter().collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::{ctc_logprob, TokenSeq};
    use crate::oracle::{brute_ctc, brute_prefix_mass, EnumerationBudget};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, t: usize, v: usize) -> PosteriorGrid {
        let scores: Vec<f64> = (0..t * v).map(|_| rng.gen_range(-2.0..2.0)).collect();
        PosteriorGrid::from_scores(&scores, t, v, v - 1).unwrap()
    }

    fn full_candidates(v: usize) -> Vec<usize> {
        (0..v).collect()
    }

    #[test]
    fn eos_score_is_exact_ctc_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let counter = LogAddCounter::new();
        for _ in 0..20 {
            let grid = random_grid(&mut rng, 6, 4);
            let y: Vec<usize> = (0..rng.gen_range(0..=3)).map(|_| rng.gen_range(0..3)).collect();
            let mut state = OutSyncPrefixState::root(&grid);
            for &c in &y {
                state = state.extend(c, &grid, &counter).unwrap();
            }
            let want = ctc_logprob(&grid, &TokenSeq::target(y)).unwrap();
            let got = state.eos_score(&counter);
            if want == LOG_ZERO {
                assert_eq!(got, LOG_ZERO);
            } else {
                assert!((got - want).abs() < 1e-12, "got {} want {}", got, want);
            }
        }
    }

    #[test]
    fn pscore_matches_prefix_mass_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let counter = LogAddCounter::new();
        let budget = EnumerationBudget::default();
        for _ in 0..20 {
            let t = rng.gen_range(2..=6);
            let grid = random_grid(&mut rng, t, 3);
            let y: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(0..2)).collect();
            let mut state = OutSyncPrefixState::root(&grid);
            for &c in &y {
                state = state.extend(c, &grid, &counter).unwrap();
            }
            let want = brute_prefix_mass(&grid, &y, &budget).unwrap();
            if want == LOG_ZERO {
                assert_eq!(state.pscore, LOG_ZERO);
            } else {
                assert!((state.pscore - want).abs() < 1e-9, "got {} want {}", state.pscore, want);
            }
        }
    }

    #[test]
    fn uniform_two_frame_prefix_mass() {
        // T=2 uniform over {a,b,∅}: P(output starts with a) = 4/9
        let p = -(3f64).ln();
        let grid = PosteriorGrid::new(vec![p; 6], 2, 3, 2).unwrap();
        let counter = LogAddCounter::new();
        let state = OutSyncPrefixState::root(&grid).extend(0, &grid, &counter).unwrap();
        let want = brute_prefix_mass(&grid, &[0], &EnumerationBudget::default()).unwrap();
        assert!((state.pscore - want).abs() < 1e-12);
    }

    #[test]
    fn impossible_token_scores_log_zero() {
        // p_t(c) = 0 at every frame
        let mut logp = Vec::new();
        for _ in 0..3 {
            logp.extend_from_slice(&[0.5f64.ln(), LOG_ZERO, 0.5f64.ln()]);
        }
        let grid = PosteriorGrid::new(logp, 3, 3, 2).unwrap();
        let counter = LogAddCounter::new();
        let state = OutSyncPrefixState::root(&grid).extend(1, &grid, &counter).unwrap();
        assert_eq!(state.pscore, LOG_ZERO);
    }

    #[test]
    fn blank_extension_rejected() {
        let p = -(3f64).ln();
        let grid = PosteriorGrid::new(vec![p; 6], 2, 3, 2).unwrap();
        let counter = LogAddCounter::new();
        let root = OutSyncPrefixState::root(&grid);
        assert!(matches!(
            root.extend(grid.blank(), &grid, &counter),
            Err(PrefixError::BlankExtension)
        ));
    }

    #[test]
    fn sub_normalized_masses() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let counter = LogAddCounter::new();
        let grid = random_grid(&mut rng, 5, 4);
        let mut state = OutSyncPrefixState::root(&grid);
        for &c in &[0, 2] {
            state = state.extend(c, &grid, &counter).unwrap();
            for t in 0..grid.t_len() {
                assert!(lse2(state.gamma_n[t], state.gamma_b[t]) <= 1e-9);
            }
        }
    }

    #[test]
    fn insync_first_row() {
        // T=1, candidates={a}: prefix (a) gets p_1(a), () keeps nothing non-blank
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = random_grid(&mut rng, 1, 3);
        let counter = LogAddCounter::new();
        let mut beam = InSyncBeam::new();
        beam.advance(0, &grid, &[0, 2], 0.0, &counter).unwrap();
        let a = beam.states().get(&vec![0]).unwrap();
        assert!((a.p_nb - grid.logp(0, 0)).abs() < 1e-12);
        assert_eq!(a.p_b, LOG_ZERO);
        let empty = beam.states().get(&vec![]).unwrap();
        assert!((empty.p_b - grid.logp(0, 2)).abs() < 1e-12);
    }

    #[test]
    fn insync_exact_without_pruning() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let budget = EnumerationBudget::default();
        for _ in 0..10 {
            let t_len = rng.gen_range(2..=6);
            let grid = random_grid(&mut rng, t_len, 3);
            let counter = LogAddCounter::new();
            let mut beam = InSyncBeam::new();
            for t in 0..t_len {
                beam.advance(t, &grid, &full_candidates(3), 0.0, &counter).unwrap();
            }
            for (prefix, st) in beam.states() {
                let want =
                    brute_ctc(&grid, &TokenSeq::target(prefix.clone()), &budget).unwrap();
                assert!(
                    (st.total() - want).abs() < 1e-9,
                    "prefix {:?}: got {} want {}",
                    prefix,
                    st.total(),
                    want
                );
            }
        }
    }

    #[test]
    fn insync_merges_collapsing_paths() {
        // paths (a,∅,…) and (a,a,…) both contribute to prefix (a) at t=2
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let grid = random_grid(&mut rng, 2, 3);
        let counter = LogAddCounter::new();
        let mut beam = InSyncBeam::new();
        beam.advance(0, &grid, &full_candidates(3), 0.0, &counter).unwrap();
        beam.advance(1, &grid, &full_candidates(3), 0.0, &counter).unwrap();
        let st = beam.states().get(&vec![0]).unwrap();
        // enumerate the contributing two-frame paths by hand
        let want = crate::logmath::lse(&[
            grid.logp(0, 0) + grid.logp(1, 2), // (a, ∅)
            grid.logp(0, 0) + grid.logp(1, 0), // (a, a)
            grid.logp(0, 2) + grid.logp(1, 0), // (∅, a)
        ]);
        assert!((st.total() - want).abs() < 1e-12);
    }

    #[test]
    fn insync_out_of_order_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let grid = random_grid(&mut rng, 3, 3);
        let counter = LogAddCounter::new();
        let mut beam = InSyncBeam::new();
        assert!(matches!(
            beam.advance(1, &grid, &full_candidates(3), 0.0, &counter),
            Err(PrefixError::OutOfOrder { .. })
        ));
    }

    #[test]
    fn pruning_only_underestimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let t_len = rng.gen_range(3..=6);
            let grid = random_grid(&mut rng, t_len, 4);
            let counter = LogAddCounter::new();
            let mut exact = InSyncBeam::new();
            let mut pruned = InSyncBeam::new();
            for t in 0..t_len {
                exact.advance(t, &grid, &full_candidates(4), 0.0, &counter).unwrap();
                pruned.advance(t, &grid, &full_candidates(4), 0.0, &counter).unwrap();
                pruned.prune_to(3);
            }
            for (prefix, st) in pruned.states() {
                if let Some(full) = exact.mass(prefix) {
                    assert!(st.total() <= full + 1e-9);
                }
            }
        }
    }

    #[test]
    fn outsync_logadds_scale_with_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = Vec::new();
        for &t in &[16usize, 32, 64] {
            let grid = random_grid(&mut rng, t, 4);
            let counter = LogAddCounter::new();
            let root = OutSyncPrefixState::root(&grid);
            root.extend(0, &grid, &counter).unwrap();
            counts.push(counter.get() as f64);
        }
        let r1 = counts[1] / counts[0];
        let r2 = counts[2] / counts[1];
        assert!((r1 - 2.0).abs() < 0.2 && (r2 - 2.0).abs() < 0.2, "{:?}", counts);
    }
}
