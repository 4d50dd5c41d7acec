//! Index patterns: the short offset buffers that define the footprint of one
//! gather or scatter, plus the textual grammar used on the command line and
//! in JSON configs.
//!
//! Offsets are in elements, where one element is one 8-byte word.
//!
//! Grammar (keywords are case-sensitive, all fields decimal):
//!
//! ```text
//! UNIFORM:<N>:<STRIDE>
//! MS1:<N>:<BREAK>:<GAP>
//! LAPLACIAN:<D>:<L>:<SIZE>
//! RANDOM:<N>:<BOUND>:<SEED>
//! <idx0>,<idx1>,...
//! ```

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("malformed pattern `{0}`")]
    Malformed(String),
    #[error("field `{field}` is not a non-negative integer: `{value}`")]
    NotANumber { field: &'static str, value: String },
    #[error("field `{field}` out of range: {reason}")]
    OutOfRange { field: &'static str, reason: String },
    #[error("pattern has no indices")]
    Empty,
    #[error("arithmetic overflow while generating `{field}`")]
    Overflow { field: &'static str },
}

/// How a pattern was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    UniformStride { n: u64, stride: u64 },
    MostlyStride1 { n: u64, break_pos: u64, gap: u64 },
    Laplacian { dims: u64, branch_len: u64, size: u64 },
    Random { n: u64, bound: u64, seed: u64 },
    Custom,
}

/// An ordered buffer of element offsets. Duplicates are allowed (broadcast
/// patterns rely on them) and order is significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexPattern {
    indices: Vec<u64>,
    kind: PatternKind,
    label: Option<String>,
}

impl IndexPattern {
    /// Builds a custom pattern from explicit offsets.
    pub fn custom(indices: Vec<u64>) -> Result<Self, PatternError> {
        Self::new(indices, PatternKind::Custom)
    }

    fn new(indices: Vec<u64>, kind: PatternKind) -> Result<Self, PatternError> {
        if indices.is_empty() {
            return Err(PatternError::Empty);
        }
        // extent = max + 1 must fit in a u64
        if indices.contains(&u64::MAX) {
            return Err(PatternError::Overflow { field: "index" });
        }
        Ok(Self {
            indices,
            kind,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Number of offsets, i.e. the vector length of one gather/scatter.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Footprint of one iteration: `max(indices) + 1` elements.
    pub fn extent(&self) -> u64 {
        // construction rejects u64::MAX, so this cannot overflow
        self.indices.iter().copied().max().unwrap_or(0) + 1
    }

    /// Grammar form for generated patterns, comma list for custom ones.
    pub fn render(&self) -> String {
        match self.kind {
            PatternKind::UniformStride { n, stride } => format!("UNIFORM:{n}:{stride}"),
            PatternKind::MostlyStride1 { n, break_pos, gap } => {
                format!("MS1:{n}:{break_pos}:{gap}")
            }
            PatternKind::Laplacian {
                dims,
                branch_len,
                size,
            } => format!("LAPLACIAN:{dims}:{branch_len}:{size}"),
            PatternKind::Random { n, bound, seed } => format!("RANDOM:{n}:{bound}:{seed}"),
            PatternKind::Custom => self.render_list(),
        }
    }

    /// The offsets as a comma-separated list, regardless of how they were made.
    pub fn render_list(&self) -> String {
        let mut out = String::with_capacity(self.indices.len() * 4);
        for (k, idx) in self.indices.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&idx.to_string());
        }
        out
    }
}

impl fmt::Display for IndexPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for IndexPattern {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_pattern(s)
    }
}

fn field(value: &str, name: &'static str) -> Result<u64, PatternError> {
    if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
        return Err(PatternError::NotANumber {
            field: name,
            value: value.to_string(),
        });
    }
    value.parse().map_err(|_| PatternError::OutOfRange {
        field: name,
        reason: format!("`{value}` does not fit in 64 bits"),
    })
}

fn positive(value: u64, name: &'static str) -> Result<u64, PatternError> {
    if value == 0 {
        Err(PatternError::OutOfRange {
            field: name,
            reason: "must be at least 1".into(),
        })
    } else {
        Ok(value)
    }
}

fn expect_fields(spec: &str, parts: &[&str], names: &[&str]) -> Result<(), PatternError> {
    if parts.len() != names.len() {
        return Err(PatternError::Malformed(format!(
            "{spec} (expected {} fields after the keyword: {})",
            names.len(),
            names.join(":")
        )));
    }
    Ok(())
}

/// Parses the pattern grammar.
pub fn parse_pattern(spec: &str) -> Result<IndexPattern, PatternError> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(PatternError::Empty);
    }
    let mut parts = spec.split(':');
    let head = parts.next().unwrap_or_default();
    let rest: Vec<&str> = parts.collect();

    match head {
        "UNIFORM" => {
            expect_fields(spec, &rest, &["N", "STRIDE"])?;
            gen_uniform(field(rest[0], "N")?, field(rest[1], "STRIDE")?)
        }
        "MS1" => {
            expect_fields(spec, &rest, &["N", "BREAK", "GAP"])?;
            gen_ms1(
                field(rest[0], "N")?,
                field(rest[1], "BREAK")?,
                field(rest[2], "GAP")?,
            )
        }
        "LAPLACIAN" => {
            expect_fields(spec, &rest, &["D", "L", "SIZE"])?;
            gen_laplacian(
                field(rest[0], "D")?,
                field(rest[1], "L")?,
                field(rest[2], "SIZE")?,
            )
        }
        "RANDOM" => {
            expect_fields(spec, &rest, &["N", "BOUND", "SEED"])?;
            gen_random(
                field(rest[0], "N")?,
                field(rest[1], "BOUND")?,
                field(rest[2], "SEED")?,
            )
        }
        _ if rest.is_empty() => {
            let indices = spec
                .split(',')
                .map(|tok| field(tok.trim(), "index"))
                .collect::<Result<Vec<_>, _>>()?;
            IndexPattern::custom(indices)
        }
        _ => Err(PatternError::Malformed(spec.to_string())),
    }
}

/// `[0, stride, 2*stride, ..., (n-1)*stride]`.
pub fn gen_uniform(n: u64, stride: u64) -> Result<IndexPattern, PatternError> {
    positive(n, "N")?;
    positive(stride, "STRIDE")?;
    (n - 1)
        .checked_mul(stride)
        .filter(|&last| last < u64::MAX)
        .ok_or(PatternError::Overflow { field: "STRIDE" })?;
    let indices = (0..n).map(|j| j * stride).collect();
    IndexPattern::new(indices, PatternKind::UniformStride { n, stride })
}

/// Stride-1 run with a single jump of `gap` at position `break_pos`.
pub fn gen_ms1(n: u64, break_pos: u64, gap: u64) -> Result<IndexPattern, PatternError> {
    positive(n, "N")?;
    positive(gap, "GAP")?;
    if break_pos < 1 || break_pos >= n {
        return Err(PatternError::OutOfRange {
            field: "BREAK",
            reason: format!("must lie in [1, {}], got {break_pos}", n.saturating_sub(1)),
        });
    }
    // last = (n - 1) + (gap - 1)
    (n - 1)
        .checked_add(gap - 1)
        .filter(|&last| last < u64::MAX)
        .ok_or(PatternError::Overflow { field: "GAP" })?;

    let mut indices = Vec::with_capacity(n as usize);
    let mut cur = 0u64;
    indices.push(cur);
    for j in 1..n {
        cur += if j == break_pos { gap } else { 1 };
        indices.push(cur);
    }
    IndexPattern::new(indices, PatternKind::MostlyStride1 { n, break_pos, gap })
}

/// D-dimensional star stencil with arms of length `branch_len` over a
/// problem of edge `size`, flattened to 1-D and shifted so the minimum is 0.
pub fn gen_laplacian(dims: u64, branch_len: u64, size: u64) -> Result<IndexPattern, PatternError> {
    positive(dims, "D")?;
    positive(branch_len, "L")?;
    positive(size, "SIZE")?;
    let overflow = PatternError::Overflow { field: "SIZE" };

    let mut powers = Vec::with_capacity(dims as usize);
    let mut p = 1u64;
    for j in 0..dims {
        if j > 0 {
            p = p.checked_mul(size).ok_or(overflow.clone())?;
        }
        powers.push(p);
    }
    let shift = branch_len
        .checked_mul(*powers.last().unwrap())
        .ok_or(overflow.clone())?;
    // largest index is 2*shift, and extent 2*shift + 1 must fit
    shift
        .checked_mul(2)
        .filter(|&m| m < u64::MAX)
        .ok_or(overflow)?;

    let mut indices = Vec::with_capacity((2 * dims * branch_len + 1) as usize);
    indices.push(shift);
    for &pow in &powers {
        for k in 1..=branch_len {
            indices.push(shift - k * pow);
            indices.push(shift + k * pow);
        }
    }
    indices.sort_unstable();
    IndexPattern::new(
        indices,
        PatternKind::Laplacian {
            dims,
            branch_len,
            size,
        },
    )
}

/// `n` offsets drawn uniformly from `[0, bound)`.
///
/// Uses ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`) with
/// `rand`'s uniform integer range sampling, so the same `(n, bound, seed)`
/// always yields the same buffer.
pub fn gen_random(n: u64, bound: u64, seed: u64) -> Result<IndexPattern, PatternError> {
    positive(n, "N")?;
    positive(bound, "BOUND")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = (0..n).map(|_| rng.random_range(0..bound)).collect();
    IndexPattern::new(indices, PatternKind::Random { n, bound, seed })
}
