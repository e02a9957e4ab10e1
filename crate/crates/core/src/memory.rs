use crate::error::{Error, Result};

/// Environment variable overriding the default allocation budget (bytes, `k`/`M`/`G` suffixes accepted).
pub const MEMORY_LIMIT_ENV: &str = "NPPQ_MEMORY_LIMIT";

const DEFAULT_LIMIT: u64 = 4 << 30;

/// Upper bound on the bytes a single solver call may allocate for its lattices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryLimit(pub u64);

impl Default for MemoryLimit {
    fn default() -> Self {
        Self(DEFAULT_LIMIT)
    }
}

impl MemoryLimit {
    pub fn unlimited() -> Self {
        Self(u64::MAX)
    }

    /// Reads [`MEMORY_LIMIT_ENV`], falling back to the 4 GiB default.
    pub fn from_env() -> Result<Self> {
        match std::env::var(MEMORY_LIMIT_ENV) {
            Ok(raw) => parse_bytes(&raw).map(Self),
            Err(_) => Ok(Self::default()),
        }
    }

    pub fn bytes(self) -> u64 {
        self.0
    }

    /// Fails with [`Error::MemoryLimit`] when `requested` bytes exceed the limit.
    pub fn check(self, requested: u128) -> Result<()> {
        if requested > self.0 as u128 {
            Err(Error::MemoryLimit {
                requested,
                limit: self.0,
            })
        } else {
            Ok(())
        }
    }
}

/// `extent^dims * bytes_per_cell` without overflow.
pub fn lattice_bytes(extent: usize, dims: usize, bytes_per_cell: usize) -> u128 {
    let mut n = bytes_per_cell as u128;
    for _ in 0..dims {
        n = n.saturating_mul(extent as u128);
    }
    n
}

pub fn parse_bytes(raw: &str) -> Result<u64> {
    let raw = raw.trim();
    let (digits, scale) = match raw.chars().last() {
        Some('k' | 'K') => (&raw[..raw.len() - 1], 1u64 << 10),
        Some('m' | 'M') => (&raw[..raw.len() - 1], 1 << 20),
        Some('g' | 'G') => (&raw[..raw.len() - 1], 1 << 30),
        _ => (raw, 1),
    };
    let value: f64 = digits
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("cannot parse memory size {raw:?}")))?;
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "invalid memory size {raw:?}"
        )));
    }
    Ok((value * scale as f64) as u64)
}
