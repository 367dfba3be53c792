//! Sequential typicality decoder and the two maximum-likelihood decoders.
//!
//! Time indices are 1-based throughout: the first channel output is `y_1`,
//! and a pattern declared to start at `t` occupies `y_t ..= y_{t+N-1}`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Channel;
use crate::pattern::SyncPattern;

/// Default typicality tolerance.
pub const DEFAULT_MU: f64 = 0.05;

/// Relative gap below which two window log ratios count as tied.
///
/// Sums of the same terms in a different order round differently, so exact
/// float comparison would break ties arbitrarily.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("output stream ended at time {at} before the horizon {horizon}")]
    StreamExhausted { at: u64, horizon: u64 },
    #[error("sequence has {len} outputs, need A + N - 1 = {needed}")]
    SequenceTooShort { len: usize, needed: u64 },
    #[error("asynchronism level must be at least 1")]
    ZeroAsynchronism,
    #[error("typicality tolerance must be finite and nonnegative, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderId {
    Typicality,
    SlidingMl,
    BlockMl,
}

impl DecoderId {
    pub const ALL: [DecoderId; 3] = [DecoderId::Typicality, DecoderId::SlidingMl, DecoderId::BlockMl];

    pub fn name(self) -> &'static str {
        match self {
            DecoderId::Typicality => "typicality",
            DecoderId::SlidingMl => "sliding-ml",
            DecoderId::BlockMl => "block-ml",
        }
    }

    pub fn is_ml(self) -> bool {
        !matches!(self, DecoderId::Typicality)
    }
}

impl fmt::Display for DecoderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        DecoderId::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown decoder `{s}` (expected typicality, sliding-ml or block-ml)"))
    }
}

/// A decoder's decision. `declared_start = stop_time - N + 1` when present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub decoder: DecoderId,
    pub declared_start: Option<u64>,
    pub stop_time: Option<u64>,
}

impl Verdict {
    fn at_start(decoder: DecoderId, start: u64, n: usize) -> Self {
        Verdict {
            decoder,
            declared_start: Some(start),
            stop_time: Some(start + n as u64 - 1),
        }
    }

    fn no_detection(decoder: DecoderId) -> Self {
        Verdict {
            decoder,
            declared_start: None,
            stop_time: None,
        }
    }
}

/// Co-occurrence counts of (pattern symbol, output symbol) over a window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointType {
    counts: Vec<u32>,
    outputs: usize,
    len: usize,
}

impl JointType {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        JointType {
            counts: vec![0; inputs * outputs],
            outputs,
            len: 0,
        }
    }

    /// Counts `(s_k, window_k)` for `k = 1..N` from scratch.
    pub fn from_window(pattern: &SyncPattern, window: &[usize], inputs: usize, outputs: usize) -> Self {
        assert_eq!(pattern.len(), window.len(), "window must match the pattern length");
        let mut ty = JointType::zeros(inputs, outputs);
        for (&x, &y) in pattern.symbols().iter().zip(window) {
            ty.counts[x * outputs + y] += 1;
        }
        ty.len = window.len();
        ty
    }

    pub fn count(&self, x: usize, y: usize) -> u32 {
        self.counts[x * self.outputs + y]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Window length N.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    fn bump(&mut self, x: usize, y: usize, up: bool) {
        let c = &mut self.counts[x * self.outputs + y];
        if up {
            *c += 1;
        } else {
            *c -= 1;
        }
    }
}

/// 0-based indices `j` in `1..N` where `s[j-1] != s[j]`.
fn pattern_transitions(pattern: &SyncPattern) -> Vec<usize> {
    let s = pattern.symbols();
    (1..s.len()).filter(|&j| s[j - 1] != s[j]).collect()
}

/// Slides `ty` by one step.
///
/// `window(k)` returns the k-th (0-based) output of the window `ty` was
/// computed on; `entering` is the output appended on the right. Only the
/// positions where the pattern changes symbol contribute, so the cost is
/// proportional to the number of such transitions.
fn slide_type(
    ty: &mut JointType,
    pattern: &SyncPattern,
    transitions: &[usize],
    window: impl Fn(usize) -> usize,
    entering: usize,
) {
    let s = pattern.symbols();
    let n = s.len();
    for &j in transitions {
        let y = window(j);
        ty.bump(s[j - 1], y, true);
        ty.bump(s[j], y, false);
    }
    ty.bump(s[0], window(0), false);
    ty.bump(s[n - 1], entering, true);
}

/// Advances a joint type from the window `old_window` to the window shifted
/// one step right with `entering` appended.
pub fn update_type(ty: &mut JointType, pattern: &SyncPattern, old_window: &[usize], entering: usize) {
    let transitions = pattern_transitions(pattern);
    slide_type(ty, pattern, &transitions, |k| old_window[k], entering);
}

/// Joint type of the last N outputs, maintained incrementally.
#[derive(Debug, Clone)]
pub struct SlidingJointType<'a> {
    pattern: &'a SyncPattern,
    transitions: Vec<usize>,
    ring: Vec<usize>,
    head: usize,
    filled: usize,
    ty: JointType,
}

impl<'a> SlidingJointType<'a> {
    pub fn new(pattern: &'a SyncPattern, inputs: usize, outputs: usize) -> Self {
        SlidingJointType {
            pattern,
            transitions: pattern_transitions(pattern),
            ring: vec![0; pattern.len()],
            head: 0,
            filled: 0,
            ty: JointType::zeros(inputs, outputs),
        }
    }

    /// Feeds the next output. Returns the window's joint type once N outputs
    /// have been seen.
    pub fn push(&mut self, y: usize) -> Option<&JointType> {
        let n = self.ring.len();
        if self.filled < n {
            self.ring[self.filled] = y;
            self.filled += 1;
            if self.filled == n {
                self.ty = JointType::from_window(self.pattern, &self.ring, self.ty.counts.len() / self.ty.outputs, self.ty.outputs);
            }
        } else {
            let (ring, head) = (&self.ring, self.head);
            slide_type(&mut self.ty, self.pattern, &self.transitions, |k| ring[(head + k) % n], y);
            self.ring[self.head] = y;
            self.head = (self.head + 1) % n;
        }
        (self.filled == n).then_some(&self.ty)
    }
}

/// Target joint law `P(x,y) = (count of x in pattern / N) * Q(y|x)` and
/// the entrywise tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct TypicalityTarget {
    target: Vec<f64>,
    outputs: usize,
    mu: f64,
}

impl TypicalityTarget {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.target[x * self.outputs + y]
    }

    pub fn entries(&self) -> &[f64] {
        &self.target
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// True when every entry of the empirical joint law is within `mu`.
    pub fn accepts(&self, ty: &JointType) -> bool {
        let n = ty.len() as f64;
        ty.counts
            .iter()
            .zip(&self.target)
            .all(|(&c, &p)| (c as f64 / n - p).abs() <= self.mu)
    }
}

pub fn make_target(pattern: &SyncPattern, channel: &Channel, mu: f64) -> Result<TypicalityTarget, DecodeError> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(DecodeError::InvalidTolerance(mu));
    }
    let (nx, ny) = (channel.num_inputs(), channel.num_outputs());
    let n = pattern.len() as f64;
    let mut freq = vec![0usize; nx];
    for &s in pattern.symbols() {
        freq[s] += 1;
    }
    let target = (0..nx)
        .flat_map(|x| {
            let px = freq[x] as f64 / n;
            channel.row(x).iter().map(move |&q| px * q)
        })
        .collect();
    Ok(TypicalityTarget {
        target,
        outputs: ny,
        mu,
    })
}

/// Source of channel outputs, read strictly in order.
pub trait OutputStream {
    fn next_output(&mut self) -> Option<usize>;
}

/// Reads a materialized sequence as a stream.
#[derive(Debug, Clone)]
pub struct SliceStream<'a, O> {
    outputs: &'a [O],
    pos: usize,
}

impl<'a, O> SliceStream<'a, O> {
    pub fn new(outputs: &'a [O]) -> Self {
        SliceStream { outputs, pos: 0 }
    }
}

impl<O: Copy + Into<usize>> OutputStream for SliceStream<'_, O> {
    fn next_output(&mut self) -> Option<usize> {
        let y = self.outputs.get(self.pos)?;
        self.pos += 1;
        Some((*y).into())
    }
}

/// Stops at the first time `n >= N` whose window is jointly typical with
/// the pattern and declares `n - N + 1`. Reads at most `horizon` outputs.
pub fn typicality_decode<S: OutputStream + ?Sized>(
    pattern: &SyncPattern,
    channel: &Channel,
    target: &TypicalityTarget,
    stream: &mut S,
    horizon: u64,
) -> Result<Verdict, DecodeError> {
    let n = pattern.len();
    let mut window = SlidingJointType::new(pattern, channel.num_inputs(), channel.num_outputs());
    for time in 1..=horizon {
        let y = stream
            .next_output()
            .ok_or(DecodeError::StreamExhausted { at: time, horizon })?;
        if let Some(ty) = window.push(y) {
            if target.accepts(ty) {
                return Ok(Verdict::at_start(DecoderId::Typicality, time + 1 - n as u64, n));
            }
        }
    }
    Ok(Verdict::no_detection(DecoderId::Typicality))
}

/// Log-likelihood ratio of a window against pure noise.
///
/// Terms with `Q(y|star) = 0` make the noise hypothesis impossible and are
/// counted in `certain`; any term with `Q(y|s_k) = 0` makes the alignment
/// impossible. Windows are ordered by possibility, then `certain`, then the
/// finite part of the log ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowScore {
    pub impossible: bool,
    pub certain: u32,
    pub log_ratio: f64,
}

impl WindowScore {
    const ZERO: WindowScore = WindowScore {
        impossible: false,
        certain: 0,
        log_ratio: 0.0,
    };

    fn add(&mut self, term: Term) {
        match term {
            Term::Finite(v) => self.log_ratio += v,
            Term::Certain(v) => {
                self.certain += 1;
                self.log_ratio += v;
            }
            Term::Impossible => self.impossible = true,
        }
    }

    pub fn cmp_rank(&self, other: &Self) -> Ordering {
        (!self.impossible)
            .cmp(&!other.impossible)
            .then(self.certain.cmp(&other.certain))
            .then_with(|| {
                let (a, b) = (self.log_ratio, other.log_ratio);
                if (a - b).abs() <= TIE_TOLERANCE * (1.0 + a.abs().max(b.abs())) {
                    Ordering::Equal
                } else {
                    a.total_cmp(&b)
                }
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Term {
    Finite(f64),
    /// `Q(y|star) = 0 < Q(y|x)`; carries `ln Q(y|x)`.
    Certain(f64),
    Impossible,
}

/// Per-symbol log ratios `ln Q(y|x) / Q(y|star)` for every (x, y).
#[derive(Debug, Clone)]
pub struct LogRatioTable {
    terms: Vec<Term>,
    outputs: usize,
}

impl LogRatioTable {
    pub fn new(channel: &Channel) -> Self {
        let star = channel.star();
        let outputs = channel.num_outputs();
        let terms = (0..channel.num_inputs())
            .flat_map(|x| {
                (0..outputs).map(move |y| {
                    let (p, q) = (channel.prob(x, y), channel.prob(star, y));
                    match (p > 0.0, q > 0.0) {
                        (false, _) => Term::Impossible,
                        (true, false) => Term::Certain(p.ln()),
                        (true, true) => Term::Finite((p / q).ln()),
                    }
                })
            })
            .collect();
        LogRatioTable { terms, outputs }
    }

    /// Adds `offset` to every finite per-symbol term.
    pub fn with_offset(mut self, offset: f64) -> Self {
        for t in &mut self.terms {
            if let Term::Finite(v) = t {
                *v += offset;
            }
        }
        self
    }

    #[inline]
    fn term(&self, x: usize, y: usize) -> Term {
        self.terms[x * self.outputs + y]
    }

    /// Score of the window starting at 1-based time `start`.
    pub fn window_score<O: Copy + Into<usize>>(&self, pattern: &SyncPattern, outputs: &[O], start: u64) -> WindowScore {
        let offset = (start - 1) as usize;
        let mut score = WindowScore::ZERO;
        for (&x, &y) in pattern.symbols().iter().zip(&outputs[offset..offset + pattern.len()]) {
            score.add(self.term(x, y.into()));
        }
        score
    }
}

fn check_sequence<O>(pattern: &SyncPattern, outputs: &[O], a: u64) -> Result<(), DecodeError> {
    if a == 0 {
        return Err(DecodeError::ZeroAsynchronism);
    }
    let needed = a + pattern.len() as u64 - 1;
    if (outputs.len() as u64) < needed {
        return Err(DecodeError::SequenceTooShort {
            len: outputs.len(),
            needed,
        });
    }
    Ok(())
}

/// Best candidate start under `table`, smallest start on ties.
fn argmax_start<O: Copy + Into<usize>>(
    pattern: &SyncPattern,
    table: &LogRatioTable,
    outputs: &[O],
    candidates: impl Iterator<Item = u64>,
) -> Option<u64> {
    let mut best: Option<(u64, WindowScore)> = None;
    for t in candidates {
        let score = table.window_score(pattern, outputs, t);
        match &best {
            Some((_, b)) if score.cmp_rank(b) != Ordering::Greater => {}
            _ => best = Some((t, score)),
        }
    }
    best.map(|(t, _)| t)
}

/// Maximum-likelihood start over all `t` in `1..=A`.
pub fn sliding_ml_decode<O: Copy + Into<usize>>(
    pattern: &SyncPattern,
    channel: &Channel,
    outputs: &[O],
    a: u64,
) -> Result<Verdict, DecodeError> {
    sliding_ml_with_table(pattern, &LogRatioTable::new(channel), outputs, a)
}

pub fn sliding_ml_with_table<O: Copy + Into<usize>>(
    pattern: &SyncPattern,
    table: &LogRatioTable,
    outputs: &[O],
    a: u64,
) -> Result<Verdict, DecodeError> {
    check_sequence(pattern, outputs, a)?;
    let start = argmax_start(pattern, table, outputs, 1..=a).expect("a >= 1");
    Ok(Verdict::at_start(DecoderId::SlidingMl, start, pattern.len()))
}

/// Block starts `t_i = (i-1)N + 1` for `i = 1..=floor((A+N-1)/N)`.
pub fn block_starts(n: usize, a: u64) -> impl Iterator<Item = u64> {
    let n = n as u64;
    let blocks = (a + n - 1) / n;
    (0..blocks).map(move |i| i * n + 1)
}

/// Genie-aided maximum likelihood over disjoint length-N blocks.
pub fn block_ml_decode<O: Copy + Into<usize>>(
    pattern: &SyncPattern,
    channel: &Channel,
    outputs: &[O],
    a: u64,
) -> Result<Verdict, DecodeError> {
    check_sequence(pattern, outputs, a)?;
    let table = LogRatioTable::new(channel);
    let start = argmax_start(pattern, &table, outputs, block_starts(pattern.len(), a)).expect("at least one block");
    Ok(Verdict::at_start(DecoderId::BlockMl, start, pattern.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSpec;
    use crate::pattern::build_pattern;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noiseless() -> Channel {
        Channel::try_from(ChannelSpec {
            input_alphabet: vec!["0".into(), "1".into()],
            output_alphabet: vec!["0".into(), "1".into()],
            star: "0".into(),
            matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        })
        .unwrap()
    }

    /// noise outputs, then the pattern's outputs under an identity channel, then noise.
    fn embed(pattern: &SyncPattern, nu: usize, total: usize, noise: usize) -> Vec<usize> {
        let mut y = vec![noise; total];
        y[nu - 1..nu - 1 + pattern.len()].copy_from_slice(pattern.symbols());
        y
    }

    #[test]
    fn decoder_ids_parse() {
        for d in DecoderId::ALL {
            assert_eq!(d.name().parse::<DecoderId>().unwrap(), d);
        }
        assert!("viterbi".parse::<DecoderId>().is_err());
    }

    #[test]
    fn target_for_constant_pattern() {
        let ch = Channel::bsc(0.1).unwrap();
        let p = SyncPattern::constant(12, 1, 0).unwrap();
        let t = make_target(&p, &ch, 0.05).unwrap();
        assert_eq!(t.entries(), &[0.0, 0.0, 0.1, 0.9]);
    }

    #[test]
    fn target_for_grid_pattern() {
        let ch = Channel::bsc(0.1).unwrap();
        let p = build_pattern(&ch, 21, 3).unwrap();
        let t = make_target(&p, &ch, 0.05).unwrap();
        assert!((t.get(0, 0) - 4.0 / 21.0 * 0.9).abs() < 1e-15);
        assert!((t.entries().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(make_target(&p, &ch, -0.1).is_err());
        assert!(make_target(&p, &ch, f64::NAN).is_err());
    }

    #[test]
    fn single_symbol_window() {
        let p = SyncPattern::from_symbols(vec![1], 1, 0).unwrap();
        let mut w = SlidingJointType::new(&p, 2, 3);
        for y in [2, 0, 1] {
            let ty = w.push(y).unwrap();
            assert_eq!(ty.count(1, y), 1);
            assert_eq!(ty.counts().iter().sum::<u32>(), 1);
        }
    }

    #[test]
    fn constant_pattern_constant_stream() {
        let p = SyncPattern::constant(5, 1, 0).unwrap();
        let mut w = SlidingJointType::new(&p, 2, 2);
        let mut seen = Vec::new();
        for _ in 0..20 {
            if let Some(ty) = w.push(1) {
                seen.push(ty.clone());
            }
        }
        assert_eq!(seen.len(), 16);
        assert!(seen.iter().all(|t| *t == seen[0]));
    }

    #[test]
    fn update_type_matches_recount() {
        let ch = Channel::bsc(0.3).unwrap();
        let p = build_pattern(&ch, 30, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ys: Vec<usize> = (0..200).map(|_| rng.random_range(0..2)).collect();
        let mut ty = JointType::from_window(&p, &ys[..30], 2, 2);
        for end in 30..ys.len() {
            update_type(&mut ty, &p, &ys[end - 30..end], ys[end]);
            assert_eq!(ty, JointType::from_window(&p, &ys[end - 29..=end], 2, 2));
        }
    }

    #[test]
    fn noiseless_typicality_stops_at_alignment() {
        let ch = noiseless();
        let p = build_pattern(&Channel::bsc(0.1).unwrap(), 24, 3).unwrap();
        for mu in [0.0, 0.01, 0.05] {
            let t = make_target(&p, &ch, mu).unwrap();
            for nu in [1, 2, 17, 40] {
                let y = embed(&p, nu, 40 + 24 - 1, 0);
                let v = typicality_decode(&p, &ch, &t, &mut SliceStream::new(&y), y.len() as u64).unwrap();
                assert_eq!(v.declared_start, Some(nu as u64), "mu {mu} nu {nu}");
                assert_eq!(v.stop_time, Some((nu + 23) as u64));
            }
        }
    }

    #[test]
    fn hand_computed_rejection() {
        let ch = Channel::bsc(0.1).unwrap();
        let p = SyncPattern::constant(2, 1, 0).unwrap();
        let t = make_target(&p, &ch, 0.05).unwrap();
        let ty = JointType::from_window(&p, &[0, 1], 2, 2);
        // P-hat(1,0) = 0.5 against P(1,0) = 0.1.
        assert!(!t.accepts(&ty));
        let v = typicality_decode(&p, &ch, &t, &mut SliceStream::new(&[0usize, 1]), 2).unwrap();
        assert_eq!(v.declared_start, None);
    }

    #[test]
    fn loose_tolerance_stops_at_first_window() {
        let ch = Channel::bsc(0.2).unwrap();
        let p = build_pattern(&ch, 12, 3).unwrap();
        let t = make_target(&p, &ch, 1.0).unwrap();
        let y = vec![0usize; 30];
        let v = typicality_decode(&p, &ch, &t, &mut SliceStream::new(&y), 30).unwrap();
        assert_eq!((v.declared_start, v.stop_time), (Some(1), Some(12)));
    }

    #[test]
    fn exhausted_stream_is_distinct_from_no_detection() {
        let ch = Channel::bsc(0.1).unwrap();
        let p = SyncPattern::constant(3, 1, 0).unwrap();
        let t = make_target(&p, &ch, 0.01).unwrap();
        let y = [0usize; 5];
        assert_eq!(
            typicality_decode(&p, &ch, &t, &mut SliceStream::new(&y), 8),
            Err(DecodeError::StreamExhausted { at: 6, horizon: 8 })
        );
        let v = typicality_decode(&p, &ch, &t, &mut SliceStream::new(&y), 5).unwrap();
        assert_eq!(v, Verdict::no_detection(DecoderId::Typicality));
    }

    #[test]
    fn noiseless_ml_finds_the_pattern() {
        let spec = ChannelSpec {
            input_alphabet: vec!["s".into(), "x".into()],
            output_alphabet: vec!["n".into(), "a".into(), "b".into()],
            star: "s".into(),
            matrix: vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5]],
        };
        let ch = Channel::try_from(spec).unwrap();
        let p = SyncPattern::constant(4, 1, 0).unwrap();
        let a = 10u64;
        for nu in 1..=a as usize {
            let mut y = vec![0usize; a as usize + 3];
            for k in 0..4 {
                y[nu - 1 + k] = 1 + (k % 2);
            }
            let v = sliding_ml_decode(&p, &ch, &y, a).unwrap();
            assert_eq!(v.declared_start, Some(nu as u64));
        }
    }

    #[test]
    fn ml_ties_go_to_earliest_start() {
        let ch = Channel::bsc(0.2).unwrap();
        let p = SyncPattern::constant(3, 1, 0).unwrap();
        let y = vec![1usize; 12];
        assert_eq!(sliding_ml_decode(&p, &ch, &y, 10).unwrap().declared_start, Some(1));
        assert_eq!(block_ml_decode(&p, &ch, &y, 10).unwrap().declared_start, Some(1));
    }

    #[test]
    fn single_block_always_starts_at_one() {
        let ch = Channel::bsc(0.2).unwrap();
        let p = SyncPattern::constant(6, 1, 0).unwrap();
        let y = vec![0usize, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1];
        for a in 1..=6 {
            let v = block_ml_decode(&p, &ch, &y, a).unwrap();
            assert_eq!(v.declared_start, Some(1), "A = {a}");
        }
    }

    #[test]
    fn short_sequence_is_rejected() {
        let ch = Channel::bsc(0.2).unwrap();
        let p = SyncPattern::constant(3, 1, 0).unwrap();
        assert_eq!(
            sliding_ml_decode(&p, &ch, &[0usize; 4], 3),
            Err(DecodeError::SequenceTooShort { len: 4, needed: 5 })
        );
        assert_eq!(sliding_ml_decode(&p, &ch, &[0usize; 4], 0), Err(DecodeError::ZeroAsynchronism));
    }

    #[test]
    fn zero_star_outputs_dominate() {
        // Output "e" can only come from x: any window covering it wins.
        let spec = ChannelSpec {
            input_alphabet: vec!["s".into(), "x".into()],
            output_alphabet: vec!["a".into(), "b".into(), "e".into()],
            star: "s".into(),
            matrix: vec![vec![0.5, 0.5, 0.0], vec![0.1, 0.1, 0.8]],
        };
        let ch = Channel::try_from(spec).unwrap();
        let p = SyncPattern::constant(3, 1, 0).unwrap();
        let y = [0usize, 0, 0, 0, 0, 2, 0, 0, 0, 0];
        // Windows starting at 4, 5, 6 cover the erasure-like output.
        assert_eq!(sliding_ml_decode(&p, &ch, &y, 8).unwrap().declared_start, Some(4));
        // Only the window at 4 covers both.
        let y = [2usize, 0, 0, 2, 0, 2, 0, 0, 0, 0];
        assert_eq!(sliding_ml_decode(&p, &ch, &y, 8).unwrap().declared_start, Some(4));
        // Windows 1 and 2 align the noise symbol with "e", which it cannot
        // produce; window 3 is the first possible one covering an "e".
        let p = SyncPattern::from_symbols(vec![1, 0, 1], 1, 0).unwrap();
        let y = [0usize, 2, 2, 0, 0, 0, 0, 0, 0, 0];
        assert_eq!(sliding_ml_decode(&p, &ch, &y, 8).unwrap().declared_start, Some(3));
    }

    #[test]
    fn permuting_a_constant_block_keeps_its_score() {
        let ch = Channel::bsc(0.35).unwrap();
        let p = SyncPattern::constant(8, 1, 0).unwrap();
        let table = LogRatioTable::new(&ch);
        let block = [1usize, 0, 1, 1, 0, 0, 0, 1];
        let mut reversed = block;
        reversed.reverse();
        let mut rotated = block;
        rotated.rotate_left(3);
        let s = table.window_score(&p, &block, 1);
        for other in [reversed, rotated] {
            let o = table.window_score(&p, &other, 1);
            assert_eq!(s.cmp_rank(&o), Ordering::Equal);
            assert!((s.log_ratio - o.log_ratio).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn sliding_type_matches_recount(
            symbols in proptest::collection::vec(0usize..3, 1..24),
            outputs in proptest::collection::vec(0usize..4, 0..120),
        ) {
            let p = SyncPattern::from_symbols(symbols, 1, 0).unwrap();
            let n = p.len();
            let mut w = SlidingJointType::new(&p, 3, 4);
            for (i, &y) in outputs.iter().enumerate() {
                let got = w.push(y).cloned();
                if i + 1 >= n {
                    let naive = JointType::from_window(&p, &outputs[i + 1 - n..=i], 3, 4);
                    prop_assert_eq!(got, Some(naive));
                } else {
                    prop_assert!(got.is_none());
                }
            }
        }

        #[test]
        fn verdict_start_matches_stop(seed in any::<u64>(), mu in 0.0f64..0.4) {
            let ch = Channel::bsc(0.3).unwrap();
            let p = build_pattern(&ch, 15, 3).unwrap();
            let t = make_target(&p, &ch, mu).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<usize> = (0..60).map(|_| rng.random_range(0..2)).collect();
            let v = typicality_decode(&p, &ch, &t, &mut SliceStream::new(&y), 60).unwrap();
            if let (Some(start), Some(stop)) = (v.declared_start, v.stop_time) {
                prop_assert_eq!(start, stop - 15 + 1);
            } else {
                prop_assert_eq!(v.declared_start, v.stop_time);
            }
            let v = sliding_ml_decode(&p, &ch, &y, 46).unwrap();
            prop_assert_eq!(v.declared_start.unwrap() + 14, v.stop_time.unwrap());
        }

        #[test]
        fn stop_ignores_later_outputs(seed in any::<u64>(), mutate in any::<u64>()) {
            let ch = Channel::bsc(0.25).unwrap();
            let p = build_pattern(&ch, 12, 3).unwrap();
            let t = make_target(&p, &ch, 0.15).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<usize> = (0..80).map(|_| rng.random_range(0..2)).collect();
            let v = typicality_decode(&p, &ch, &t, &mut SliceStream::new(&y), 80).unwrap();
            if let Some(stop) = v.stop_time {
                let mut other = y.clone();
                let mut m = ChaCha8Rng::seed_from_u64(mutate);
                for out in &mut other[stop as usize..] {
                    *out = m.random_range(0..2);
                }
                let w = typicality_decode(&p, &ch, &t, &mut SliceStream::new(&other), 80).unwrap();
                prop_assert_eq!(v, w);
            }
        }

        #[test]
        fn looser_tolerance_stops_no_later(seed in any::<u64>(), mu in 0.0f64..0.3, extra in 0.0f64..0.3) {
            let ch = Channel::bsc(0.2).unwrap();
            let p = build_pattern(&ch, 16, 4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<usize> = (0..100).map(|_| rng.random_range(0..2)).collect();
            let tight = make_target(&p, &ch, mu).unwrap();
            let loose = make_target(&p, &ch, mu + extra).unwrap();
            let a = typicality_decode(&p, &ch, &tight, &mut SliceStream::new(&y), 100).unwrap();
            let b = typicality_decode(&p, &ch, &loose, &mut SliceStream::new(&y), 100).unwrap();
            if let Some(stop) = a.stop_time {
                prop_assert!(b.stop_time.unwrap() <= stop);
            }
        }

        #[test]
        fn ml_ignores_constant_offsets(seed in any::<u64>(), offset in -5.0f64..5.0) {
            let ch = Channel::bsc(0.3).unwrap();
            let p = build_pattern(&ch, 12, 3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<usize> = (0..51).map(|_| rng.random_range(0..2)).collect();
            let base = sliding_ml_with_table(&p, &LogRatioTable::new(&ch), &y, 40).unwrap();
            let shifted = sliding_ml_with_table(&p, &LogRatioTable::new(&ch).with_offset(offset), &y, 40).unwrap();
            prop_assert_eq!(base, shifted);
        }

        #[test]
        fn constant_pattern_scores_depend_on_histogram(seed in any::<u64>()) {
            let ch = Channel::bsc(0.15).unwrap();
            let p = SyncPattern::constant(10, 1, 0).unwrap();
            let table = LogRatioTable::new(&ch);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<usize> = (0..60).map(|_| rng.random_range(0..2)).collect();
            let scores: Vec<(usize, WindowScore)> = (1..=51u64)
                .map(|t| {
                    let ones = y[t as usize - 1..t as usize + 9].iter().filter(|&&v| v == 1).count();
                    (ones, table.window_score(&p, &y, t))
                })
                .collect();
            for (ones_a, a) in &scores {
                for (ones_b, b) in &scores {
                    if ones_a == ones_b {
                        prop_assert!((a.log_ratio - b.log_ratio).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
