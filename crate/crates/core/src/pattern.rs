//! Sync patterns: mostly the maximally divergent symbol, with noise symbols
//! spiked in on a period-K grid according to a maximal-length sequence.

use serde::Serialize;
use thiserror::Error;

use crate::channel::{Channel, Nats};

pub const MIN_DEGREE: u32 = 2;
pub const MAX_DEGREE: u32 = 16;

/// One primitive polynomial per degree, as a mask of the non-leading terms.
///
/// Bit `i` set means the polynomial contains `x^i`; the leading `x^m` term is
/// implicit. Entry `k` is for degree `k + 2`.
const PRIMITIVE_POLYS: [u32; 15] = [
    0b11,                  // x^2 + x + 1
    0b11,                  // x^3 + x + 1
    0b11,                  // x^4 + x + 1
    0b101,                 // x^5 + x^2 + 1
    0b11,                  // x^6 + x + 1
    0b11,                  // x^7 + x + 1
    0b1_1101,              // x^8 + x^4 + x^3 + x^2 + 1
    0b1_0001,              // x^9 + x^4 + 1
    0b1001,                // x^10 + x^3 + 1
    0b101,                 // x^11 + x^2 + 1
    0b101_0011,            // x^12 + x^6 + x^4 + x + 1
    0b1_1011,              // x^13 + x^4 + x^3 + x + 1
    0b100_0100_0011,       // x^14 + x^10 + x^6 + x + 1
    0b11,                  // x^15 + x + 1
    0b1_0000_0000_1011,    // x^16 + x^12 + x^3 + x + 1
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("shift-register degree {0} is outside [{MIN_DEGREE}, {MAX_DEGREE}]")]
    UnsupportedDegree(u32),
    #[error("pattern too short: floor(N/K) = {slots} grid slots, need at least 3 (N >= {min_n} for K = {k})")]
    PatternTooShort { slots: usize, k: usize, min_n: usize },
    #[error("grid period K = {0} must be at least 2")]
    BadPeriod(usize),
    #[error("synchronization threshold is {0}; pattern construction needs a finite positive threshold")]
    DegenerateChannel(Nats),
    #[error("pattern symbol {symbol} is not an input of the channel")]
    ForeignSymbol { symbol: usize },
    #[error("empty pattern")]
    Empty,
}

/// Binary maximal-length shift-register sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MSequence {
    pub bits: Vec<u8>,
    pub degree: u32,
    /// Non-leading terms of the feedback polynomial.
    pub taps: u32,
}

impl MSequence {
    pub fn period(&self) -> usize {
        self.bits.len()
    }
}

/// Runs the Fibonacci register for `x^m + taps(x)` from the all-ones state.
///
/// The recurrence is `a[n+m] = sum_{i : taps bit i} a[n+i] (mod 2)`.
pub fn generate_msequence(degree: u32) -> Result<MSequence, PatternError> {
    if !(MIN_DEGREE..=MAX_DEGREE).contains(&degree) {
        return Err(PatternError::UnsupportedDegree(degree));
    }
    let taps = PRIMITIVE_POLYS[(degree - MIN_DEGREE) as usize];
    let len = (1usize << degree) - 1;
    // Bit i of `state` holds a[n+i].
    let mut state: u32 = (1 << degree) - 1;
    let mut bits = Vec::with_capacity(len);
    for _ in 0..len {
        bits.push((state & 1) as u8);
        let feedback = (state & taps).count_ones() & 1;
        state = (state >> 1) | (feedback << (degree - 1));
    }
    Ok(MSequence { bits, degree, taps })
}

/// How a pattern was built from the grid construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridConstruction {
    /// Grid period K.
    pub period: usize,
    /// Register degree m; the grid carries `2^m - 1` sequence slots.
    pub degree: u32,
}

/// A sync pattern over input indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SyncPattern {
    symbols: Vec<usize>,
    x_bar: usize,
    star: usize,
    construction: Option<GridConstruction>,
}

impl SyncPattern {
    /// Pattern with arbitrary symbols, for decoders and tests.
    pub fn from_symbols(symbols: Vec<usize>, x_bar: usize, star: usize) -> Result<Self, PatternError> {
        if symbols.is_empty() {
            return Err(PatternError::Empty);
        }
        Ok(SyncPattern {
            symbols,
            x_bar,
            star,
            construction: None,
        })
    }

    /// `n` repetitions of `x_bar`.
    pub fn constant(n: usize, x_bar: usize, star: usize) -> Result<Self, PatternError> {
        Self::from_symbols(vec![x_bar; n], x_bar, star)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn x_bar(&self) -> usize {
        self.x_bar
    }

    pub fn star(&self) -> usize {
        self.star
    }

    pub fn construction(&self) -> Option<GridConstruction> {
        self.construction
    }

    pub fn star_count(&self) -> usize {
        self.symbols.iter().filter(|&&s| s == self.star).count()
    }

    /// `X` for the divergent symbol, `.` for noise, `?` for anything else.
    pub fn render(&self) -> String {
        self.symbols
            .iter()
            .map(|&s| match s {
                s if s == self.x_bar => 'X',
                s if s == self.star => '.',
                _ => '?',
            })
            .collect()
    }

    pub fn check_alphabet(&self, channel: &Channel) -> Result<(), PatternError> {
        match self.symbols.iter().find(|&&s| s >= channel.num_inputs()) {
            Some(&symbol) => Err(PatternError::ForeignSymbol { symbol }),
            None => Ok(()),
        }
    }
}

/// Smallest N admitting a pattern for grid period `k`.
pub fn min_pattern_length(k: usize) -> usize {
    3 * k
}

/// Builds the grid pattern of length `n` with period `k`.
///
/// Positions are 1-based: `s_i = x_bar` unless `i = jK` for `j <= l`, where
/// `l = 2^m - 1` is the largest sequence length fitting in `floor(n/k)` grid
/// slots. Slot `j` carries the noise symbol exactly when the sequence bit
/// `m_j` is one. Slots past `l` keep `x_bar`.
///
/// Fails with [`PatternError::DegenerateChannel`] when the threshold is zero
/// or infinite; [`build_grid_pattern`] skips that check.
pub fn build_pattern(channel: &Channel, n: usize, k: usize) -> Result<SyncPattern, PatternError> {
    check_grid(n, k)?;
    let threshold = channel.sync_threshold();
    match threshold.alpha {
        Nats::Finite(a) if a > 0.0 => build_grid_pattern(channel, n, k, threshold.x_bar),
        other => Err(PatternError::DegenerateChannel(other)),
    }
}

fn check_grid(n: usize, k: usize) -> Result<usize, PatternError> {
    if k < 2 {
        return Err(PatternError::BadPeriod(k));
    }
    let slots = n / k;
    if slots < 3 {
        return Err(PatternError::PatternTooShort {
            slots,
            k,
            min_n: min_pattern_length(k),
        });
    }
    Ok(slots)
}

/// Grid construction around an explicit `x_bar`, for any channel.
pub fn build_grid_pattern(channel: &Channel, n: usize, k: usize, x_bar: usize) -> Result<SyncPattern, PatternError> {
    let slots = check_grid(n, k)?;
    if x_bar >= channel.num_inputs() {
        return Err(PatternError::ForeignSymbol { symbol: x_bar });
    }
    let degree = (usize::BITS - (slots + 1).leading_zeros() - 1).min(MAX_DEGREE);
    let mseq = generate_msequence(degree)?;
    let star = channel.star();
    let mut symbols = vec![x_bar; n];
    for (j, &bit) in mseq.bits.iter().enumerate() {
        if bit == 1 {
            // 1-based position (j+1)K lives at 0-based index (j+1)K - 1.
            symbols[(j + 1) * k - 1] = star;
        }
    }
    Ok(SyncPattern {
        symbols,
        x_bar,
        star,
        construction: Some(GridConstruction { period: k, degree }),
    })
}

/// Hamming distance between the pattern and its `shift`-step delay, where
/// the vacated prefix is filled with the noise symbol.
pub fn shift_distance(pattern: &SyncPattern, shift: usize) -> usize {
    let s = pattern.symbols();
    let n = s.len();
    let shift = shift.min(n);
    let prefix = s[..shift].iter().filter(|&&x| x != pattern.star()).count();
    let overlap = s[shift..]
        .iter()
        .zip(&s[..n - shift])
        .filter(|(a, b)| a != b)
        .count();
    prefix + overlap
}

/// Minimum of [`shift_distance`] over shifts `1..=N`, with the smallest
/// minimizing shift. Quadratic in N.
pub fn min_shift_distance(pattern: &SyncPattern) -> (usize, usize) {
    (1..=pattern.len())
        .map(|i| (shift_distance(pattern, i), i))
        .min()
        .expect("patterns are nonempty")
}
