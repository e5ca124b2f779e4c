//! Mixed-radix indexing shared by every table in the crate.
//!
//! A configuration `(x_0, ..., x_{n-1})` over cardinalities `(c_0, ..., c_{n-1})`
//! maps to `((x_0 * c_1 + x_1) * c_2 + x_2) ...`: the first variable is the most
//! significant digit and the last one varies fastest.

/// Number of joint configurations, or `None` on overflow.
pub fn size(cards: &[usize]) -> Option<usize> {
    cards.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c))
}

pub fn index(config: &[usize], cards: &[usize]) -> usize {
    debug_assert_eq!(config.len(), cards.len());
    config.iter().zip(cards).fold(0, |acc, (&x, &c)| {
        debug_assert!(x < c);
        acc * c + x
    })
}

pub fn decode(mut idx: usize, cards: &[usize]) -> Vec<usize> {
    let mut out = vec![0; cards.len()];
    for (slot, &c) in out.iter_mut().zip(cards).rev() {
        *slot = idx % c;
        idx /= c;
    }
    out
}

/// Advance `config` to the next configuration; returns `false` after the last one.
pub fn increment(config: &mut [usize], cards: &[usize]) -> bool {
    for (x, &c) in config.iter_mut().zip(cards).rev() {
        *x += 1;
        if *x < c {
            return true;
        }
        *x = 0;
    }
    false
}

/// Row-major strides for `cards`.
pub fn strides(cards: &[usize]) -> Vec<usize> {
    let mut out = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * cards[i + 1];
    }
    out
}
