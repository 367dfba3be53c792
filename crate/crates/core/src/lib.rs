//! Frame synchronization over discrete memoryless channels.
//!
//! The receiver watches a channel that outputs pure noise until, at an
//! unknown time, a known sync pattern is sent. [`decoders`] locate the
//! pattern; [`sim`] measures how often they get it exactly right.

pub mod channel;
pub mod cli;
pub mod decoders;
pub mod pattern;
pub mod sim;

pub use channel::{Channel, ChannelSpec, Nats, Threshold};
pub use pattern::{build_pattern, generate_msequence, min_shift_distance, MSequence, SyncPattern};
pub use decoders::{DecoderId, Verdict};
pub use sim::{run_sweep, run_trial, NuMode, SweepCell, SweepConfig, SweepRecord, TrialConfig, TrialOutcome};
