//! Ridge linear regression over incremental sufficient statistics.
//!
//! A model over a range of records is represented by the Gram matrix
//! `A = X^T X`, the moment vector `B = X^T y` and the contributing point
//! count. Those are plain sums over rows, so models combine by elementwise
//! signed addition: appending, removing and merging ranges never touches
//! the rows that both sides already account for. `d^2 + d` numbers fully
//! describe a model regardless of how many rows went into it.
//!
//! The weight vector solves `(A + lambda I) w = B`; lambda belongs to the
//! query, not the statistics, so one materialized model serves any lambda.

use crate::datastore::{Record, RowRef};
use crate::error::{Error, Result};
use crate::range::IdRange;
use crate::solve::solve_regularized;
use serde::{Deserialize, Serialize};

/// Direction of a statistics update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Add,
    Remove,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Add => 1.0,
            Sign::Remove => -1.0,
        }
    }

    pub fn count(self) -> i64 {
        match self {
            Sign::Add => 1,
            Sign::Remove => -1,
        }
    }
}

/// `A = X^T X`, `B = X^T y` and the signed point count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    d: usize,
    n_points: i64,
    /// Row-major d x d Gram matrix.
    a: Vec<f64>,
    b: Vec<f64>,
}

impl SufficientStats {
    pub fn zeros(d: usize) -> Self {
        SufficientStats {
            d,
            n_points: 0,
            a: vec![0.0; d * d],
            b: vec![0.0; d],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_points(&self) -> i64 {
        self.n_points
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Accumulates rows into fresh statistics. Only the upper triangle is
    /// computed; the mirror keeps `A` exactly symmetric.
    pub fn from_rows<'a, I>(rows: I, d: usize) -> Result<Self>
    where
        I: IntoIterator<Item = RowRef<'a>>,
    {
        let mut stats = SufficientStats::zeros(d);
        for row in rows {
            let x = row.features;
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            for i in 0..d {
                let xi = x[i];
                for j in i..d {
                    stats.a[i * d + j] += xi * x[j];
                }
                stats.b[i] += xi * row.target;
            }
            stats.n_points += 1;
        }
        for i in 0..d {
            for j in 0..i {
                stats.a[i * d + j] = stats.a[j * d + i];
            }
        }
        Ok(stats)
    }

    pub fn compute(points: &[Record]) -> Result<Self> {
        let d = points.first().map_or(0, |p| p.features.len());
        Self::from_rows(
            points.iter().map(|p| RowRef {
                id: p.id,
                features: &p.features,
                target: p.target,
            }),
            d,
        )
    }

    /// Elementwise signed addition. Errors when the resulting point count
    /// would be negative, which signals a bug in the calling plan.
    pub fn add(&self, delta: &Self, sign: Sign) -> Result<Self> {
        let mut out = self.clone();
        out.accumulate(delta, sign)?;
        if out.n_points < 0 {
            return Err(Error::NegativeCount(format!(
                "linreg n_points {}",
                out.n_points
            )));
        }
        Ok(out)
    }

    /// In-place signed addition without the final count check. Plan
    /// execution composes steps in plan order, where intermediate counts may
    /// legitimately dip below zero; callers validate the final result.
    pub fn accumulate(&mut self, delta: &Self, sign: Sign) -> Result<()> {
        if self.d != delta.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: delta.d,
            });
        }
        let f = sign.factor();
        for (a, da) in self.a.iter_mut().zip(&delta.a) {
            *a += f * da;
        }
        for (b, db) in self.b.iter_mut().zip(&delta.b) {
            *b += f * db;
        }
        self.n_points += sign.count() * delta.n_points;
        Ok(())
    }

    pub fn check_counts(&self) -> Result<()> {
        if self.n_points < 0 {
            return Err(Error::NegativeCount(format!(
                "linreg n_points {}",
                self.n_points
            )));
        }
        Ok(())
    }

    /// Serialized form: descriptor (two u64) + n_points (u64) + d (u32) +
    /// row-major f64 A + f64 B, all little-endian.
    pub fn to_payload(&self, descriptor: IdRange) -> Result<Vec<u8>> {
        if self.n_points < 0 {
            return Err(Error::NegativeCount(
                "cannot materialize statistics with negative count".into(),
            ));
        }
        let mut out = Vec::with_capacity(20 + 8 * (self.a.len() + self.b.len()) + 8);
        out.extend_from_slice(&descriptor.lo.to_le_bytes());
        out.extend_from_slice(&descriptor.hi.to_le_bytes());
        out.extend_from_slice(&(self.n_points as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        for v in self.a.iter().chain(self.b.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_payload(bytes: &[u8]) -> Result<(IdRange, Self)> {
        let bad = || Error::BadCatalogIndex("truncated linreg payload".into());
        if bytes.len() < 28 {
            return Err(bad());
        }
        let lo = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
        let hi = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let n_points = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as i64;
        let d = u32::from_le_bytes(bytes[24..28].try_into().unwrap()) as usize;
        let rest = &bytes[28..];
        if rest.len() != 8 * (d * d + d) {
            return Err(bad());
        }
        let mut vals = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let a: Vec<f64> = vals.by_ref().take(d * d).collect();
        let b: Vec<f64> = vals.collect();
        Ok((
            IdRange::new(lo, hi)?,
            SufficientStats { d, n_points, a, b },
        ))
    }
}

/// Solves `(A + lambda I) w = B`.
///
/// With `lambda = 0` a rank-deficient `A` yields an explicit singularity
/// error rather than garbage output; any `lambda > 0` on statistics built
/// from real data keeps the system positive definite.
pub fn solve_weights(stats: &SufficientStats, lambda: f64) -> Result<Vec<f64>> {
    solve_regularized(&stats.a, stats.d, lambda, &stats.b)
}

/// A solved model together with the statistics it came from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinRegModel {
    pub stats: SufficientStats,
    pub lambda: f64,
    pub weights: Vec<f64>,
    /// Closed id range the statistics were built over.
    pub descriptor: IdRange,
}

pub fn fit(stats: SufficientStats, lambda: f64, descriptor: IdRange) -> Result<LinRegModel> {
    let weights = solve_weights(&stats, lambda)?;
    Ok(LinRegModel {
        stats,
        lambda,
        weights,
        descriptor,
    })
}

/// Combines two models into statistics over the union of their ranges.
///
/// Disjoint descriptors sum directly; overlapping descriptors must supply
/// statistics over the intersection, which are subtracted so the shared
/// points are counted once.
pub fn merge_models(
    m1: &LinRegModel,
    m2: &LinRegModel,
    overlap_stats: Option<&SufficientStats>,
) -> Result<SufficientStats> {
    let overlapping = m1.descriptor.overlaps(&m2.descriptor);
    match (overlapping, overlap_stats) {
        (true, None) => Err(Error::OverlapStatsRequired),
        (false, Some(_)) => Err(Error::OverlapStatsUnexpected),
        (false, None) => m1.stats.add(&m2.stats, Sign::Add),
        (true, Some(overlap)) => m1.stats.add(&m2.stats, Sign::Add)?.add(overlap, Sign::Remove),
    }
}
