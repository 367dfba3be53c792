//! Brute-force oracles shared by the integration tests. None of these call
//! into the code paths they check.

#![allow(dead_code)]

use framesync::{Channel, SyncPattern};

/// Joint counts by direct enumeration into a dense |X| x |Y| table.
pub fn count_pairs(symbols: &[usize], window: &[usize], inputs: usize, outputs: usize) -> Vec<Vec<u32>> {
    let mut table = vec![vec![0u32; outputs]; inputs];
    for k in 0..symbols.len() {
        table[symbols[k]][window[k]] += 1;
    }
    table
}

/// Hamming distance between `bits` and its circular shift by `shift`.
pub fn circular_distance(bits: &[u8], shift: usize) -> usize {
    let rotated: Vec<u8> = bits.iter().cycle().skip(shift).take(bits.len()).copied().collect();
    bits.iter().zip(&rotated).filter(|(a, b)| a != b).count()
}

/// Distance between the pattern and the explicitly built word
/// (star x shift, s_1, ..., s_{N-shift}).
pub fn delayed_distance(pattern: &SyncPattern, shift: usize) -> usize {
    let s = pattern.symbols();
    let mut word = vec![pattern.star(); shift];
    word.extend_from_slice(&s[..s.len() - shift]);
    s.iter().zip(&word).filter(|(a, b)| a != b).count()
}

/// `P(y | nu = t)` as a plain product of channel probabilities.
pub fn likelihood(pattern: &SyncPattern, channel: &Channel, y: &[usize], t: usize) -> f64 {
    let n = pattern.len();
    y.iter()
        .enumerate()
        .map(|(i, &out)| {
            let time = i + 1;
            let input = if time >= t && time < t + n {
                pattern.symbols()[time - t]
            } else {
                channel.star()
            };
            channel.prob(input, out)
        })
        .product()
}

/// Posterior argmax over `1..=a` under a uniform prior, smallest `t` among
/// values within `rel_tol` of the best.
pub fn posterior_argmax(pattern: &SyncPattern, channel: &Channel, y: &[usize], a: usize, rel_tol: f64) -> usize {
    let post: Vec<f64> = (1..=a).map(|t| likelihood(pattern, channel, y, t)).collect();
    let best = post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    1 + post.iter().position(|&p| p >= best * (1.0 - rel_tol)).unwrap()
}

/// Lowest-index argmax over the listed candidate starts.
pub fn restricted_argmax(pattern: &SyncPattern, channel: &Channel, y: &[usize], candidates: &[usize], rel_tol: f64) -> usize {
    let post: Vec<f64> = candidates.iter().map(|&t| likelihood(pattern, channel, y, t)).collect();
    let best = post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    candidates[post.iter().position(|&p| p >= best * (1.0 - rel_tol)).unwrap()]
}

/// BSC threshold in closed form.
pub fn bsc_threshold(p: f64) -> f64 {
    (1.0 - 2.0 * p) * ((1.0 - p) / p).ln()
}
