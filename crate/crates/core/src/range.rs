//! Closed id ranges.
//!
//! Every model descriptor and every query is a closed range `[lo, hi]` of
//! record ids. The planner works on range *boundaries* (the position before
//! an id), so `IdRange` also exposes the half-open boundary pair
//! `(lo, hi + 1)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Closed, inclusive range of record ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IdRange {
    pub lo: u64,
    pub hi: u64,
}

impl IdRange {
    pub fn new(lo: u64, hi: u64) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvertedRange { lo, hi });
        }
        Ok(IdRange { lo, hi })
    }

    /// Number of ids in the range.
    pub fn len(&self) -> u64 {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false // closed ranges always hold at least one id
    }

    /// Boundary position after the last id.
    pub fn end_boundary(&self) -> u64 {
        self.hi + 1
    }

    pub fn contains_id(&self, id: u64) -> bool {
        self.lo <= id && id <= self.hi
    }

    pub fn contains(&self, other: &IdRange) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// True when the two ranges share at least one id. Adjacent ranges
    /// ([0,9] and [10,19]) do not overlap.
    pub fn overlaps(&self, other: &IdRange) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn intersect(&self, other: &IdRange) -> Option<IdRange> {
        if self.overlaps(other) {
            Some(IdRange {
                lo: self.lo.max(other.lo),
                hi: self.hi.min(other.hi),
            })
        } else {
            None
        }
    }

    /// Parses the CLI form `lo:hi`.
    pub fn parse(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("bad range {s:?}, expected lo:hi")))?;
        let lo = lo
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::InvalidArgument(format!("bad range bound {lo:?}")))?;
        let hi = hi
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::InvalidArgument(format!("bad range bound {hi:?}")))?;
        IdRange::new(lo, hi)
    }
}

impl fmt::Display for IdRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// Total length of the union of a set of closed ranges.
pub fn union_len(ranges: &[IdRange]) -> u64 {
    let mut sorted: Vec<IdRange> = ranges.to_vec();
    sorted.sort();
    let mut total = 0u64;
    let mut cur: Option<IdRange> = None;
    for r in sorted {
        match cur {
            Some(ref mut c) if r.lo <= c.hi + 1 => c.hi = c.hi.max(r.hi),
            Some(c) => {
                total += c.len();
                cur = Some(r);
            }
            None => cur = Some(r),
        }
    }
    if let Some(c) = cur {
        total += c.len();
    }
    total
}
