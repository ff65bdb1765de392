//! Log-domain arithmetic shared by the CTC dynamic programs.

use std::cell::Cell;

/// Additive identity of the log semiring.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// log(exp(a) + exp(b)) with max-shift; exact for -inf operands.
pub fn lse2(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// logsumexp over a slice; LOG_ZERO for an empty slice.
pub fn lse(xs: &[f64]) -> f64 {
    let hi = xs.iter().cloned().fold(LOG_ZERO, f64::max);
    if hi == LOG_ZERO {
        return LOG_ZERO;
    }
    let sum: f64 = xs.iter().map(|&x| (x - hi).exp()).sum();
    hi + sum.ln()
}

/// Counts log-additions performed by a search, used to contrast the
/// per-step cost of the two beam synchronies.
#[derive(Debug, Default)]
pub struct LogAddCounter(Cell<u64>);

impl LogAddCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bump(&self) {
        self.0.set(self.0.get() + 1);
    }

    pub fn get(&self) -> u64 {
        self.0.get()
    }

    pub fn reset(&self) {
        self.0.set(0);
    }

    /// lse2 that increments the counter.
    pub fn lse2(&self, a: f64, b: f64) -> f64 {
        self.bump();
        lse2(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse2_handles_log_zero() {
        assert_eq!(lse2(LOG_ZERO, LOG_ZERO), LOG_ZERO);
        assert_eq!(lse2(LOG_ZERO, -1.5), -1.5);
        assert_eq!(lse2(-1.5, LOG_ZERO), -1.5);
    }

    #[test]
    fn lse_shift_invariance() {
        let xs = [-0.3, -1.2, -2.7, -0.9];
        let shifted: Vec<f64> = xs.iter().map(|x| x + 5.0).collect();
        assert!((lse(&shifted) - lse(&xs) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn lse2_agrees_with_lse() {
        assert!((lse2(-1.0, -2.0) - lse(&[-1.0, -2.0])).abs() < 1e-14);
    }
}
