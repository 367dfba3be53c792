//! Monte Carlo trials and sweeps.
//!
//! A trial draws the start time `nu`, synthesizes `A + N - 1` channel outputs
//! (noise, then the pattern at `nu`, then noise) and runs each requested
//! decoder on the same outputs. A sweep repeats trials over a grid of
//! `(N, alpha)` cells and tallies exact-localization errors.
//!
//! # Seeds
//!
//! Every trial owns a ChaCha8 generator seeded with
//! `trial_seed(master, cell_key(N, alpha), trial_index)`, both built from the
//! SplitMix64 finalizer. The cell key depends on the cell's contents rather
//! than its grid position, so reordering a grid reorders records without
//! changing them, and worker count never affects results.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Channel;
use crate::decoders::{
    block_ml_decode, make_target, sliding_ml_decode, typicality_decode, DecodeError, DecoderId, OutputStream,
    SliceStream, TypicalityTarget, Verdict,
};
use crate::channel::Nats;
use crate::pattern::{build_grid_pattern, build_pattern, PatternError, SyncPattern};

/// Longest output sequence the ML decoders will materialize.
pub const DEFAULT_ML_CAP: u64 = 1 << 26;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("ML decoding needs {len} outputs in memory, above the cap of {cap}")]
    MlSkipped { len: u64, cap: u64 },
    #[error("asynchronism level e^(alpha N) with alpha = {alpha}, N = {n} is not representable")]
    AsynchronismOverflow { alpha: f64, n: usize },
    #[error("asynchronism exponent must be finite and nonnegative, got {0}")]
    BadExponent(f64),
    #[error("ML decoding stores outputs as bytes; channel has {0} outputs")]
    AlphabetTooLarge(usize),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error("cannot write results: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot write JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Law of the pattern start time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuMode {
    /// Uniform on `1..=A`.
    Uniform,
    /// Uniform on the block starts `1, N+1, 2N+1, ...` that lie in `1..=A`.
    BlockAligned,
}

/// `max(1, round(e^(alpha N)))`.
pub fn asynchronism_level(alpha: f64, n: usize) -> Result<u64, SimError> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(SimError::BadExponent(alpha));
    }
    let a = (alpha * n as f64).exp().round();
    // Leaves headroom for A + N - 1 and 1-based arithmetic.
    if a >= 2f64.powi(62) {
        return Err(SimError::AsynchronismOverflow { alpha, n });
    }
    Ok((a as u64).max(1))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies a sweep cell by its contents.
pub fn cell_key(n: usize, alpha: f64) -> u64 {
    splitmix64(splitmix64(n as u64) ^ alpha.to_bits())
}

pub fn trial_seed(master: u64, cell: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(master ^ cell) ^ trial)
}

/// Pattern used for simulation. Unlike [`build_pattern`], a channel with an
/// infinite threshold still gets the grid pattern around its most divergent
/// input; a zero threshold is refused.
pub fn simulation_pattern(channel: &Channel, n: usize, k: usize) -> Result<SyncPattern, PatternError> {
    match build_pattern(channel, n, k) {
        Err(PatternError::DegenerateChannel(Nats::Infinite)) => {
            build_grid_pattern(channel, n, k, channel.sync_threshold().x_bar)
        }
        other => other,
    }
}

/// Scalar parameters of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialConfig {
    pub alpha: f64,
    /// Asynchronism level A.
    pub a: u64,
    pub mu: f64,
    pub seed: u64,
    pub nu_mode: NuMode,
    pub ml_cap: u64,
}

impl TrialConfig {
    pub fn new(alpha: f64, n: usize, mu: f64, seed: u64, nu_mode: NuMode) -> Result<Self, SimError> {
        Ok(TrialConfig {
            alpha,
            a: asynchronism_level(alpha, n)?,
            mu,
            seed,
            nu_mode,
            ml_cap: DEFAULT_ML_CAP,
        })
    }
}

/// Channel, pattern and typicality target shared by every trial of a cell.
#[derive(Debug, Clone)]
pub struct TrialSetup<'a> {
    pub channel: &'a Channel,
    pub pattern: &'a SyncPattern,
    pub target: TypicalityTarget,
}

impl<'a> TrialSetup<'a> {
    pub fn new(channel: &'a Channel, pattern: &'a SyncPattern, mu: f64) -> Result<Self, SimError> {
        pattern.check_alphabet(channel)?;
        Ok(TrialSetup {
            channel,
            pattern,
            target: make_target(pattern, channel, mu)?,
        })
    }
}

/// Outputs of one trial, generated on demand.
///
/// Time `i` carries `Q(.|s_{i-nu+1})` inside the pattern and `Q(.|star)`
/// elsewhere; the stream ends after `A + N - 1` outputs.
#[derive(Debug, Clone)]
pub struct TrialStream<'a> {
    channel: &'a Channel,
    pattern: &'a SyncPattern,
    nu: u64,
    next: u64,
    len: u64,
    rng: ChaCha8Rng,
}

impl OutputStream for TrialStream<'_> {
    #[inline]
    fn next_output(&mut self) -> Option<usize> {
        if self.next > self.len {
            return None;
        }
        let t = self.next;
        self.next += 1;
        let x = if t >= self.nu && t < self.nu + self.pattern.len() as u64 {
            self.pattern.symbols()[(t - self.nu) as usize]
        } else {
            self.channel.star()
        };
        Some(self.channel.sample_output(x, &mut self.rng))
    }
}

impl TrialStream<'_> {
    /// True start time of the pattern.
    pub fn nu(&self) -> u64 {
        self.nu
    }

    /// Appends every remaining output to `out`, as repeated
    /// [`OutputStream::next_output`] calls would.
    pub fn drain_into(&mut self, out: &mut Vec<u8>) {
        let pattern_end = self.nu + self.pattern.len() as u64;
        let star = self.channel.star();
        while self.next <= self.len {
            let t = self.next;
            if t >= self.nu && t < pattern_end {
                let k = (t - self.nu) as usize;
                out.push(self.channel.sample_output(self.pattern.symbols()[k], &mut self.rng) as u8);
                self.next += 1;
            } else {
                // Noise run up to the pattern or the end of the stream.
                let stop = if t < self.nu { self.nu.min(self.len + 1) } else { self.len + 1 };
                let rng = &mut self.rng;
                out.extend((t..stop).map(|_| self.channel.sample_output(star, rng) as u8));
                self.next = stop;
            }
        }
    }
}

/// How a decoder missed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Miss {
    Early,
    Late,
    NoDetection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialOutcome {
    pub nu: u64,
    pub verdicts: Vec<Verdict>,
    pub trial_seed: u64,
}

impl TrialOutcome {
    pub fn miss(&self, verdict: &Verdict) -> Option<Miss> {
        match verdict.declared_start {
            None => Some(Miss::NoDetection),
            Some(t) if t == self.nu => None,
            Some(t) if t < self.nu => Some(Miss::Early),
            Some(_) => Some(Miss::Late),
        }
    }

    pub fn success(&self, verdict: &Verdict) -> bool {
        self.miss(verdict).is_none()
    }
}

fn draw_nu(rng: &mut ChaCha8Rng, mode: NuMode, a: u64, n: usize) -> u64 {
    match mode {
        NuMode::Uniform => rng.random_range(1..=a),
        NuMode::BlockAligned => {
            let blocks = (a - 1) / n as u64 + 1;
            rng.random_range(0..blocks) * n as u64 + 1
        }
    }
}

/// Starts a trial: draws `nu` and returns the lazy output stream.
pub fn trial_stream<'a>(setup: &TrialSetup<'a>, config: &TrialConfig) -> TrialStream<'a> {
    let n = setup.pattern.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let nu = draw_nu(&mut rng, config.nu_mode, config.a, n);
    TrialStream {
        channel: setup.channel,
        pattern: setup.pattern,
        nu,
        next: 1,
        len: config.a + n as u64 - 1,
        rng,
    }
}

/// Runs one trial with every decoder in `decoders` on identical outputs.
///
/// The typicality decoder reads a lazy stream unless an ML decoder forces
/// the outputs to be materialized, in which case it reads the same values
/// from memory.
pub fn run_trial(setup: &TrialSetup<'_>, config: &TrialConfig, decoders: &[DecoderId]) -> Result<TrialOutcome, SimError> {
    let n = setup.pattern.len();
    let mut stream = trial_stream(setup, config);
    let nu = stream.nu;
    let len = stream.len;
    let horizon = len;

    let materialized = if decoders.iter().any(|d| d.is_ml()) {
        if len > config.ml_cap {
            return Err(SimError::MlSkipped { len, cap: config.ml_cap });
        }
        if setup.channel.num_outputs() > 256 {
            return Err(SimError::AlphabetTooLarge(setup.channel.num_outputs()));
        }
        let mut out = Vec::with_capacity(len as usize);
        stream.drain_into(&mut out);
        Some(out)
    } else {
        None
    };

    let verdicts = decoders
        .iter()
        .map(|&d| {
            let v = match (d, &materialized) {
                (DecoderId::Typicality, Some(seq)) => {
                    typicality_decode(setup.pattern, setup.channel, &setup.target, &mut SliceStream::new(seq), horizon)?
                }
                (DecoderId::Typicality, None) => {
                    typicality_decode(setup.pattern, setup.channel, &setup.target, &mut stream, horizon)?
                }
                (DecoderId::SlidingMl, Some(seq)) => sliding_ml_decode(setup.pattern, setup.channel, seq, config.a)?,
                (DecoderId::BlockMl, Some(seq)) => block_ml_decode(setup.pattern, setup.channel, seq, config.a)?,
                (_, None) => unreachable!("ML decoders always materialize"),
            };
            debug_assert!(v.declared_start.map(|s| s + n as u64 - 1) == v.stop_time);
            Ok(v)
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    Ok(TrialOutcome {
        nu,
        verdicts,
        trial_seed: config.seed,
    })
}

/// One `(N, alpha)` grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    /// Grid period of the pattern.
    pub k: usize,
    pub mu: f64,
    pub trials: u64,
    pub seed: u64,
    pub decoders: Vec<DecoderId>,
    pub nu_mode: NuMode,
    pub ml_cap: u64,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
    /// Store wall-clock time per cell. Off keeps output byte-reproducible.
    pub record_timing: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            k: 8,
            mu: crate::decoders::DEFAULT_MU,
            trials: 1000,
            seed: 0,
            decoders: vec![DecoderId::Typicality],
            nu_mode: NuMode::Uniform,
            ml_cap: DEFAULT_ML_CAP,
            workers: 1,
            record_timing: false,
        }
    }
}

/// Aggregated errors of one decoder on one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
    #[serde(rename = "A")]
    pub a: u64,
    pub decoder: DecoderId,
    pub trials: u64,
    pub errors: u64,
    pub no_detections: u64,
    #[serde(skip)]
    pub early: u64,
    #[serde(skip)]
    pub late: u64,
    pub error_rate: f64,
    pub ci95_halfwidth: f64,
    pub wall_time_s: Option<f64>,
    pub seed: u64,
}

impl SweepRecord {
    pub fn success_rate(&self) -> f64 {
        1.0 - self.error_rate
    }
}

/// Normal-approximation 95% half-width for a rate estimated from `trials`.
pub fn ci95_halfwidth(rate: f64, trials: u64) -> f64 {
    1.96 * (rate * (1.0 - rate) / trials as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedCell {
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
    /// Decoders not run on this cell.
    pub decoders: Vec<DecoderId>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    pub skipped: Vec<SkippedCell>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    errors: u64,
    no_detections: u64,
    early: u64,
    late: u64,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            errors: self.errors + o.errors,
            no_detections: self.no_detections + o.no_detections,
            early: self.early + o.early,
            late: self.late + o.late,
        }
    }
}

fn merge_all(a: Vec<Tally>, b: Vec<Tally>) -> Vec<Tally> {
    a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect()
}

/// Runs every cell of `grid`, one record per (cell, decoder), in grid order.
pub fn run_sweep(channel: &Channel, grid: &[SweepCell], cfg: &SweepConfig) -> Result<SweepReport, SimError> {
    if cfg.trials == 0 {
        return Err(SimError::NoTrials);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))?;
    let mut report = SweepReport::default();
    for cell in grid {
        pool.install(|| run_cell(channel, *cell, cfg, &mut report))?;
    }
    Ok(report)
}

fn run_cell(channel: &Channel, cell: SweepCell, cfg: &SweepConfig, report: &mut SweepReport) -> Result<(), SimError> {
    let skip = |decoders: Vec<DecoderId>, reason: String| SkippedCell {
        n: cell.n,
        alpha: cell.alpha,
        decoders,
        reason,
    };
    let pattern = match simulation_pattern(channel, cell.n, cfg.k) {
        Ok(p) => p,
        Err(e) => {
            report.skipped.push(skip(cfg.decoders.clone(), e.to_string()));
            return Ok(());
        }
    };
    let a = match asynchronism_level(cell.alpha, cell.n) {
        Ok(a) => a,
        Err(e) => {
            report.skipped.push(skip(cfg.decoders.clone(), e.to_string()));
            return Ok(());
        }
    };
    let len = a + cell.n as u64 - 1;
    let (decoders, capped): (Vec<DecoderId>, Vec<DecoderId>) =
        cfg.decoders.iter().partition(|d| !d.is_ml() || len <= cfg.ml_cap);
    if !capped.is_empty() {
        let reason = SimError::MlSkipped { len, cap: cfg.ml_cap }.to_string();
        report.skipped.push(skip(capped, reason));
    }
    if decoders.is_empty() {
        return Ok(());
    }

    let setup = TrialSetup::new(channel, &pattern, cfg.mu)?;
    let key = cell_key(cell.n, cell.alpha);
    let started = Instant::now();
    let tallies = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let config = TrialConfig {
                alpha: cell.alpha,
                a,
                mu: cfg.mu,
                seed: trial_seed(cfg.seed, key, t),
                nu_mode: cfg.nu_mode,
                ml_cap: cfg.ml_cap,
            };
            let outcome = run_trial(&setup, &config, &decoders)?;
            Ok::<_, SimError>(outcome
                .verdicts
                .iter()
                .map(|v| match outcome.miss(v) {
                    None => Tally::default(),
                    Some(m) => Tally {
                        errors: 1,
                        no_detections: (m == Miss::NoDetection) as u64,
                        early: (m == Miss::Early) as u64,
                        late: (m == Miss::Late) as u64,
                    },
                })
                .collect::<Vec<_>>())
        })
        .try_reduce(|| vec![Tally::default(); decoders.len()], |a, b| Ok(merge_all(a, b)))?;
    let elapsed = started.elapsed().as_secs_f64();

    for (&decoder, tally) in decoders.iter().zip(tallies) {
        let rate = tally.errors as f64 / cfg.trials as f64;
        report.records.push(SweepRecord {
            n: cell.n,
            alpha: cell.alpha,
            a,
            decoder,
            trials: cfg.trials,
            errors: tally.errors,
            no_detections: tally.no_detections,
            early: tally.early,
            late: tally.late,
            error_rate: rate,
            ci95_halfwidth: ci95_halfwidth(rate, cfg.trials),
            wall_time_s: cfg.record_timing.then_some(elapsed),
            seed: cfg.seed,
        });
    }
    Ok(())
}

pub const CSV_HEADER: [&str; 11] = [
    "N",
    "alpha",
    "A",
    "decoder",
    "trials",
    "errors",
    "no_detections",
    "error_rate",
    "ci95_halfwidth",
    "wall_time_s",
    "seed",
];

/// Writes records as CSV with [`CSV_HEADER`]. Untimed records leave
/// `wall_time_s` empty.
pub fn write_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            r.alpha.to_string(),
            r.a.to_string(),
            r.decoder.to_string(),
            r.trials.to_string(),
            r.errors.to_string(),
            r.no_detections.to_string(),
            r.error_rate.to_string(),
            r.ci95_halfwidth.to_string(),
            r.wall_time_s.map(|t| format!("{t:.3}")).unwrap_or_default(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// JSON array with the CSV fields, one object per record.
pub fn write_json<W: Write>(records: &[SweepRecord], mut out: W) -> Result<(), SimError> {
    serde_json::to_writer_pretty(&mut out, records)?;
    out.write_all(b"\n")?;
    Ok(())
}
