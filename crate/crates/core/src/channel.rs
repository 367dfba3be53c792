//! Discrete memoryless channels with a designated noise symbol.
//!
//! A [`Channel`] is the validated form of a [`ChannelSpec`]. The spec is what
//! lives in a channel file (symbol labels, the noise label and a row-major
//! transition matrix); the channel resolves labels to indices and precomputes
//! what the samplers and decoders need.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on each row sum.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("row {row} (input {input:?}) sums to {sum}, expected 1")]
    RowSumError { row: usize, input: String, sum: f64 },
    #[error("negative or non-finite entry {value} at row {row}, column {col}")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("output {output:?} is unreachable from every input")]
    UnreachableOutput { output: String },
    #[error("noise symbol {star:?} is not an input symbol")]
    BadStarIndex { star: String },
    #[error("matrix has {rows} rows of widths {widths:?}, expected {expected_rows} rows of width {expected_cols}")]
    ShapeMismatch {
        rows: usize,
        widths: Vec<usize>,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("alphabet `{key}` is empty or has duplicate labels")]
    BadAlphabet { key: &'static str },
}

#[derive(Debug, Error)]
pub enum ChannelFileError {
    #[error("cannot read channel file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("channel file is not valid TOML: {0}")]
    Syntax(String),
    #[error("channel file key `{key}`: {reason}")]
    Key { key: String, reason: String },
    #[error("channel file key `{key}`: {source}")]
    Invalid {
        key: &'static str,
        #[source]
        source: ChannelError,
    },
}

/// Raw channel description, as stored in a channel file.
///
/// ```toml
/// input_alphabet = ["0", "1"]
/// output_alphabet = ["0", "1"]
/// star = "0"
/// matrix = [[0.9, 0.1], [0.1, 0.9]]
/// ```
///
/// Row `i` of `matrix` is `Q(.|input_alphabet[i])`, column `j` refers to
/// `output_alphabet[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub input_alphabet: Vec<String>,
    pub output_alphabet: Vec<String>,
    pub star: String,
    pub matrix: Vec<Vec<f64>>,
}

impl ChannelSpec {
    /// Binary symmetric channel with crossover `p` and noise symbol "0".
    pub fn bsc(p: f64) -> Self {
        ChannelSpec {
            input_alphabet: vec!["0".into(), "1".into()],
            output_alphabet: vec!["0".into(), "1".into()],
            star: "0".into(),
            matrix: vec![vec![1.0 - p, p], vec![p, 1.0 - p]],
        }
    }

    /// Checks every channel invariant; returns the first violation found.
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !distinct_nonempty(&self.input_alphabet) {
            return Err(ChannelError::BadAlphabet {
                key: "input_alphabet",
            });
        }
        if !distinct_nonempty(&self.output_alphabet) {
            return Err(ChannelError::BadAlphabet {
                key: "output_alphabet",
            });
        }
        let (nx, ny) = (self.input_alphabet.len(), self.output_alphabet.len());
        if self.matrix.len() != nx || self.matrix.iter().any(|r| r.len() != ny) {
            return Err(ChannelError::ShapeMismatch {
                rows: self.matrix.len(),
                widths: self.matrix.iter().map(Vec::len).collect(),
                expected_rows: nx,
                expected_cols: ny,
            });
        }
        for (row, probs) in self.matrix.iter().enumerate() {
            for (col, &value) in probs.iter().enumerate() {
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(ChannelError::NegativeEntry { row, col, value });
                }
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(ChannelError::RowSumError {
                    row,
                    input: self.input_alphabet[row].clone(),
                    sum,
                });
            }
        }
        for (col, label) in self.output_alphabet.iter().enumerate() {
            if self.matrix.iter().all(|r| r[col] == 0.0) {
                return Err(ChannelError::UnreachableOutput {
                    output: label.clone(),
                });
            }
        }
        if !self.input_alphabet.contains(&self.star) {
            return Err(ChannelError::BadStarIndex {
                star: self.star.clone(),
            });
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ChannelFileError> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| ChannelFileError::Syntax(e.to_string()))?;
        let spec = ChannelSpec {
            input_alphabet: string_list(&table, "input_alphabet")?,
            output_alphabet: string_list(&table, "output_alphabet")?,
            star: match table.get("star") {
                Some(toml::Value::String(s)) => s.clone(),
                Some(other) => return Err(key_err("star", format!("expected a string, found {}", other.type_str()))),
                None => return Err(key_err("star", "missing".into())),
            },
            matrix: matrix(&table)?,
        };
        for key in table.keys() {
            if !["input_alphabet", "output_alphabet", "star", "matrix"].contains(&key.as_str()) {
                return Err(ChannelFileError::Key {
                    key: key.clone(),
                    reason: "unexpected key".into(),
                });
            }
        }
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("channel spec always serializes")
    }
}

fn distinct_nonempty(labels: &[String]) -> bool {
    !labels.is_empty()
        && labels
            .iter()
            .enumerate()
            .all(|(i, a)| labels[..i].iter().all(|b| a != b))
}

fn key_err(key: &'static str, reason: String) -> ChannelFileError {
    ChannelFileError::Key {
        key: key.to_string(),
        reason,
    }
}

fn string_list(table: &toml::Table, key: &'static str) -> Result<Vec<String>, ChannelFileError> {
    let array = match table.get(key) {
        Some(toml::Value::Array(a)) => a,
        Some(other) => return Err(key_err(key, format!("expected a list of strings, found {}", other.type_str()))),
        None => return Err(key_err(key, "missing".into())),
    };
    array
        .iter()
        .map(|v| match v {
            toml::Value::String(s) => Ok(s.clone()),
            other => Err(key_err(key, format!("expected a string entry, found {}", other.type_str()))),
        })
        .collect()
}

fn matrix(table: &toml::Table) -> Result<Vec<Vec<f64>>, ChannelFileError> {
    const KEY: &str = "matrix";
    let rows = match table.get(KEY) {
        Some(toml::Value::Array(a)) => a,
        Some(other) => return Err(key_err(KEY, format!("expected a list of rows, found {}", other.type_str()))),
        None => return Err(key_err(KEY, "missing".into())),
    };
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let toml::Value::Array(row) = row else {
                return Err(key_err(KEY, format!("row {i} is not a list")));
            };
            row.iter()
                .map(|v| match v {
                    toml::Value::Float(f) => Ok(*f),
                    toml::Value::Integer(n) => Ok(*n as f64),
                    other => Err(key_err(KEY, format!("row {i} has a non-numeric entry ({})", other.type_str()))),
                })
                .collect()
        })
        .collect()
}

/// Divergence in nats, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Nats {
    Finite(f64),
    Infinite,
}

impl Nats {
    pub fn finite(self) -> Option<f64> {
        match self {
            Nats::Finite(v) => Some(v),
            Nats::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Nats::Infinite)
    }
}

impl PartialOrd for Nats {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Nats::Infinite, Nats::Infinite) => Some(Ordering::Equal),
            (Nats::Infinite, Nats::Finite(_)) => Some(Ordering::Greater),
            (Nats::Finite(_), Nats::Infinite) => Some(Ordering::Less),
            (Nats::Finite(a), Nats::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for Nats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nats::Finite(v) => write!(f, "{v:.9}"),
            Nats::Infinite => f.write_str("infinite"),
        }
    }
}

/// Synchronization threshold together with a maximally divergent input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub alpha: Nats,
    pub x_bar: usize,
}

/// A validated discrete memoryless channel. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    spec: ChannelSpec,
    star: usize,
    rows: Vec<Vec<f64>>,
    // Inverse-CDF thresholds on u64 draws, one row per input.
    cdf: Vec<Vec<u64>>,
}

impl TryFrom<ChannelSpec> for Channel {
    type Error = ChannelError;

    fn try_from(spec: ChannelSpec) -> Result<Self, ChannelError> {
        spec.validate()?;
        let star = spec
            .input_alphabet
            .iter()
            .position(|s| *s == spec.star)
            .expect("validated");
        let rows = spec.matrix.clone();
        let cdf = rows.iter().map(|r| cdf_thresholds(r)).collect();
        Ok(Channel {
            spec,
            star,
            rows,
            cdf,
        })
    }
}

/// Cumulative thresholds for outputs before the last reachable one.
///
/// The sampled output is the number of thresholds at or below a uniform
/// `u64`; zero-probability outputs repeat the previous threshold and are
/// skipped.
fn cdf_thresholds(row: &[f64]) -> Vec<u64> {
    const SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64
    let last_nonzero = row.iter().rposition(|&p| p > 0.0).expect("row sums to 1");
    let mut acc = 0.0;
    row[..last_nonzero]
        .iter()
        .map(|&p| {
            acc += p;
            // `as` saturates at u64::MAX.
            (acc * SCALE) as u64
        })
        .collect()
}

impl Channel {
    pub fn bsc(p: f64) -> Result<Self, ChannelError> {
        Channel::try_from(ChannelSpec::bsc(p))
    }

    pub fn from_file(path: &Path) -> Result<Self, ChannelFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ChannelFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ChannelFileError> {
        let spec = ChannelSpec::from_toml_str(text)?;
        Channel::try_from(spec).map_err(|source| ChannelFileError::Invalid {
            key: offending_key(&source),
            source,
        })
    }

    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    pub fn num_inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.spec.output_alphabet.len()
    }

    /// Index of the noise symbol.
    pub fn star(&self) -> usize {
        self.star
    }

    pub fn input_label(&self, x: usize) -> &str {
        &self.spec.input_alphabet[x]
    }

    pub fn output_label(&self, y: usize) -> &str {
        &self.spec.output_alphabet[y]
    }

    /// `Q(y|x)`.
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.rows[x][y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    /// Draws one output for `input`; consumes exactly one `u64` from `rng`.
    #[inline]
    pub fn sample_output<R: RngCore + ?Sized>(&self, input: usize, rng: &mut R) -> usize {
        let u = rng.next_u64();
        self.cdf[input].iter().filter(|&&t| t <= u).count()
    }

    /// `D(Q(.|x) || Q(.|star))` in nats.
    pub fn kl_divergence(&self, x: usize) -> Nats {
        if x == self.star {
            return Nats::Finite(0.0);
        }
        let noise = &self.rows[self.star];
        let mut total = 0.0;
        for (&p, &q) in self.rows[x].iter().zip(noise) {
            if p == 0.0 {
                continue;
            }
            if q == 0.0 {
                return Nats::Infinite;
            }
            total += p * (p / q).ln();
        }
        // Rounding can leave a tiny negative value for near-identical rows.
        Nats::Finite(total.max(0.0))
    }

    pub fn divergences(&self) -> Vec<Nats> {
        (0..self.num_inputs()).map(|x| self.kl_divergence(x)).collect()
    }

    /// Maximum divergence over inputs; ties go to the lowest input index.
    pub fn sync_threshold(&self) -> Threshold {
        let mut best = Threshold {
            alpha: self.kl_divergence(0),
            x_bar: 0,
        };
        for x in 1..self.num_inputs() {
            let d = self.kl_divergence(x);
            if d > best.alpha {
                best = Threshold { alpha: d, x_bar: x };
            }
        }
        best
    }
}

fn offending_key(err: &ChannelError) -> &'static str {
    match err {
        ChannelError::BadStarIndex { .. } => "star",
        ChannelError::UnreachableOutput { .. } => "output_alphabet",
        ChannelError::BadAlphabet { key } => key,
        ChannelError::RowSumError { .. }
        | ChannelError::NegativeEntry { .. }
        | ChannelError::ShapeMismatch { .. } => "matrix",
    }
}
