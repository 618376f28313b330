//! Gaussian and multinomial naive Bayes over incremental per-class counters.
//!
//! Gaussian models keep, per class, the sample count and per-feature sums
//! and square-sums; multinomial models keep per-class sample counts and
//! per-feature count totals. All of them are plain sums, so models update
//! and merge by elementwise signed addition exactly like the regression
//! statistics.
//!
//! Sample counts are integers and are validated to stay non-negative;
//! feature sums are real-valued and carry no sign constraint (multinomial
//! feature totals are only meaningful on count-valued data).

use crate::datastore::{Record, RowRef};
use crate::error::{Error, Result};
use crate::linreg::Sign;
use serde::{Deserialize, Serialize};

/// Relative scale of the variance floor; see `GaussianClassStats::parameters`.
const VARIANCE_FLOOR_SCALE: f64 = 1e-9;

fn class_label(target: f64, class_count: usize) -> Result<usize> {
    if target.fract() != 0.0 || target < 0.0 || target >= class_count as f64 {
        return Err(Error::LabelOutOfRange {
            label: target as i64,
            class_count,
        });
    }
    Ok(target as usize)
}

/// Per-class counters for Gaussian naive Bayes: `N_c`, `S_jc`, `SS_jc`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianClassStats {
    class_count: usize,
    d: usize,
    counts: Vec<i64>,
    sums: Vec<f64>,
    sq_sums: Vec<f64>,
}

impl GaussianClassStats {
    pub fn zeros(class_count: usize, d: usize) -> Self {
        GaussianClassStats {
            class_count,
            d,
            counts: vec![0; class_count],
            sums: vec![0.0; class_count * d],
            sq_sums: vec![0.0; class_count * d],
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn count(&self, class: usize) -> i64 {
        self.counts[class]
    }

    pub fn sum(&self, class: usize, feature: usize) -> f64 {
        self.sums[class * self.d + feature]
    }

    pub fn sq_sum(&self, class: usize, feature: usize) -> f64 {
        self.sq_sums[class * self.d + feature]
    }

    pub fn total_points(&self) -> i64 {
        self.counts.iter().sum()
    }

    pub fn from_rows<'a, I>(rows: I, class_count: usize, d: usize) -> Result<Self>
    where
        I: IntoIterator<Item = RowRef<'a>>,
    {
        let mut stats = Self::zeros(class_count, d);
        for row in rows {
            if row.features.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.features.len(),
                });
            }
            let c = class_label(row.target, class_count)?;
            stats.counts[c] += 1;
            for (j, &x) in row.features.iter().enumerate() {
                stats.sums[c * d + j] += x;
                stats.sq_sums[c * d + j] += x * x;
            }
        }
        Ok(stats)
    }

    pub fn compute(points: &[Record], class_count: usize) -> Result<Self> {
        let d = points.first().map_or(0, |p| p.features.len());
        Self::from_rows(
            points.iter().map(|p| RowRef {
                id: p.id,
                features: &p.features,
                target: p.target,
            }),
            class_count,
            d,
        )
    }

    pub fn add(&self, delta: &Self, sign: Sign) -> Result<Self> {
        let mut out = self.clone();
        out.accumulate(delta, sign)?;
        out.check_counts()?;
        Ok(out)
    }

    pub fn accumulate(&mut self, delta: &Self, sign: Sign) -> Result<()> {
        if self.class_count != delta.class_count || self.d != delta.d {
            return Err(Error::DimensionMismatch {
                expected: self.class_count * self.d,
                got: delta.class_count * delta.d,
            });
        }
        let f = sign.factor();
        for (c, dc) in self.counts.iter_mut().zip(&delta.counts) {
            *c += sign.count() * dc;
        }
        for (s, ds) in self.sums.iter_mut().zip(&delta.sums) {
            *s += f * ds;
        }
        for (s, ds) in self.sq_sums.iter_mut().zip(&delta.sq_sums) {
            *s += f * ds;
        }
        Ok(())
    }

    pub fn check_counts(&self) -> Result<()> {
        for (c, n) in self.counts.iter().enumerate() {
            if *n < 0 {
                return Err(Error::NegativeCount(format!("class {c} count {n}")));
            }
        }
        Ok(())
    }

    /// Per-feature variance floor derived from the pooled (all-class)
    /// feature variance, so a class-constant feature never yields a zero
    /// variance.
    fn variance_floor(&self) -> Vec<f64> {
        let n = self.total_points() as f64;
        (0..self.d)
            .map(|j| {
                let s: f64 = (0..self.class_count).map(|c| self.sum(c, j)).sum();
                let ss: f64 = (0..self.class_count).map(|c| self.sq_sum(c, j)).sum();
                let var = (ss / n - (s / n) * (s / n)).max(0.0);
                VARIANCE_FLOOR_SCALE * (var + 1.0)
            })
            .collect()
    }

    pub fn parameters(&self) -> Result<NbParameters> {
        let total = self.total_points();
        if total <= 0 {
            return Err(Error::InvalidArgument(
                "cannot extract parameters from empty statistics".into(),
            ));
        }
        self.check_counts()?;
        let floor = self.variance_floor();
        let mut priors = vec![0.0; self.class_count];
        let mut means = vec![0.0; self.class_count * self.d];
        let mut variances = vec![0.0; self.class_count * self.d];
        let mut defined = vec![false; self.class_count];
        for c in 0..self.class_count {
            let n_c = self.counts[c] as f64;
            priors[c] = n_c / total as f64;
            if self.counts[c] == 0 {
                continue; // parameters undefined for empty classes
            }
            defined[c] = true;
            for j in 0..self.d {
                let mu = self.sum(c, j) / n_c;
                let var = self.sq_sum(c, j) / n_c - mu * mu;
                means[c * self.d + j] = mu;
                variances[c * self.d + j] = var.max(floor[j]);
            }
        }
        Ok(NbParameters::Gaussian {
            class_count: self.class_count,
            d: self.d,
            priors,
            means,
            variances,
            defined,
        })
    }

    /// Serialized form: class_count (u32) + d (u32) + kind tag (u8) +
    /// counters as little-endian f64 arrays. Counts are integers well below
    /// 2^53, so the f64 encoding is exact.
    pub fn to_payload(&self) -> Result<Vec<u8>> {
        self.check_counts()?;
        let mut out = payload_header(self.class_count, self.d, 0);
        for &c in &self.counts {
            out.extend_from_slice(&(c as f64).to_le_bytes());
        }
        for v in self.sums.iter().chain(self.sq_sums.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self> {
        let (class_count, d, vals) = parse_payload(bytes, 0, |c, d| c + 2 * c * d)?;
        let counts = vals[..class_count].iter().map(|&v| v as i64).collect();
        let sums = vals[class_count..class_count + class_count * d].to_vec();
        let sq_sums = vals[class_count + class_count * d..].to_vec();
        Ok(GaussianClassStats {
            class_count,
            d,
            counts,
            sums,
            sq_sums,
        })
    }
}

/// Per-class counters for multinomial naive Bayes: sample counts `M_c` for
/// the prior and per-feature count totals `N_ci`. The feature-count total
/// `N_c` is the row sum of `N_ci`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultinomialClassStats {
    class_count: usize,
    d: usize,
    sample_counts: Vec<i64>,
    feature_counts: Vec<f64>,
}

impl MultinomialClassStats {
    pub fn zeros(class_count: usize, d: usize) -> Self {
        MultinomialClassStats {
            class_count,
            d,
            sample_counts: vec![0; class_count],
            feature_counts: vec![0.0; class_count * d],
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sample_count(&self, class: usize) -> i64 {
        self.sample_counts[class]
    }

    pub fn feature_count(&self, class: usize, feature: usize) -> f64 {
        self.feature_counts[class * self.d + feature]
    }

    /// Total feature count for one class.
    pub fn n_c(&self, class: usize) -> f64 {
        self.feature_counts[class * self.d..(class + 1) * self.d]
            .iter()
            .sum()
    }

    pub fn total_points(&self) -> i64 {
        self.sample_counts.iter().sum()
    }

    pub fn from_rows<'a, I>(rows: I, class_count: usize, d: usize) -> Result<Self>
    where
        I: IntoIterator<Item = RowRef<'a>>,
    {
        let mut stats = Self::zeros(class_count, d);
        for row in rows {
            if row.features.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.features.len(),
                });
            }
            let c = class_label(row.target, class_count)?;
            stats.sample_counts[c] += 1;
            for (j, &x) in row.features.iter().enumerate() {
                stats.feature_counts[c * d + j] += x;
            }
        }
        Ok(stats)
    }

    pub fn compute(points: &[Record], class_count: usize) -> Result<Self> {
        let d = points.first().map_or(0, |p| p.features.len());
        Self::from_rows(
            points.iter().map(|p| RowRef {
                id: p.id,
                features: &p.features,
                target: p.target,
            }),
            class_count,
            d,
        )
    }

    pub fn add(&self, delta: &Self, sign: Sign) -> Result<Self> {
        let mut out = self.clone();
        out.accumulate(delta, sign)?;
        out.check_counts()?;
        Ok(out)
    }

    pub fn accumulate(&mut self, delta: &Self, sign: Sign) -> Result<()> {
        if self.class_count != delta.class_count || self.d != delta.d {
            return Err(Error::DimensionMismatch {
                expected: self.class_count * self.d,
                got: delta.class_count * delta.d,
            });
        }
        for (c, dc) in self.sample_counts.iter_mut().zip(&delta.sample_counts) {
            *c += sign.count() * dc;
        }
        let f = sign.factor();
        for (s, ds) in self.feature_counts.iter_mut().zip(&delta.feature_counts) {
            *s += f * ds;
        }
        Ok(())
    }

    pub fn check_counts(&self) -> Result<()> {
        for (c, n) in self.sample_counts.iter().enumerate() {
            if *n < 0 {
                return Err(Error::NegativeCount(format!("class {c} sample count {n}")));
            }
        }
        Ok(())
    }

    pub fn parameters(&self) -> Result<NbParameters> {
        let total = self.total_points();
        if total <= 0 {
            return Err(Error::InvalidArgument(
                "cannot extract parameters from empty statistics".into(),
            ));
        }
        self.check_counts()?;
        let mut priors = vec![0.0; self.class_count];
        let mut theta = vec![0.0; self.class_count * self.d];
        let mut defined = vec![false; self.class_count];
        for c in 0..self.class_count {
            priors[c] = self.sample_counts[c] as f64 / total as f64;
            defined[c] = self.sample_counts[c] > 0;
            let n_c = self.n_c(c);
            for i in 0..self.d {
                // Laplace-smoothed maximum likelihood estimate.
                theta[c * self.d + i] = (self.feature_count(c, i) + 1.0) / (n_c + self.d as f64);
            }
        }
        Ok(NbParameters::Multinomial {
            class_count: self.class_count,
            d: self.d,
            priors,
            theta,
            defined,
        })
    }

    pub fn to_payload(&self) -> Result<Vec<u8>> {
        self.check_counts()?;
        let mut out = payload_header(self.class_count, self.d, 1);
        for &c in &self.sample_counts {
            out.extend_from_slice(&(c as f64).to_le_bytes());
        }
        for v in &self.feature_counts {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self> {
        let (class_count, d, vals) = parse_payload(bytes, 1, |c, d| c + c * d)?;
        let sample_counts = vals[..class_count].iter().map(|&v| v as i64).collect();
        let feature_counts = vals[class_count..].to_vec();
        Ok(MultinomialClassStats {
            class_count,
            d,
            sample_counts,
            feature_counts,
        })
    }
}

fn payload_header(class_count: usize, d: usize, kind_tag: u8) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(class_count as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.push(kind_tag);
    out
}

fn parse_payload(
    bytes: &[u8],
    expect_tag: u8,
    value_count: fn(usize, usize) -> usize,
) -> Result<(usize, usize, Vec<f64>)> {
    let bad = |msg: &str| Error::BadCatalogIndex(format!("naive bayes payload: {msg}"));
    if bytes.len() < 9 {
        return Err(bad("truncated header"));
    }
    let class_count = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes[8] != expect_tag {
        return Err(bad("wrong kind tag"));
    }
    let rest = &bytes[9..];
    if rest.len() != 8 * value_count(class_count, d) {
        return Err(bad("truncated counters"));
    }
    let vals = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((class_count, d, vals))
}

/// Extracted model parameters, ready for prediction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum NbParameters {
    Gaussian {
        class_count: usize,
        d: usize,
        priors: Vec<f64>,
        /// Row-major class x feature means; zero where undefined.
        means: Vec<f64>,
        variances: Vec<f64>,
        defined: Vec<bool>,
    },
    Multinomial {
        class_count: usize,
        d: usize,
        priors: Vec<f64>,
        theta: Vec<f64>,
        defined: Vec<bool>,
    },
}

impl NbParameters {
    pub fn priors(&self) -> &[f64] {
        match self {
            NbParameters::Gaussian { priors, .. } => priors,
            NbParameters::Multinomial { priors, .. } => priors,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            NbParameters::Gaussian { d, .. } => *d,
            NbParameters::Multinomial { d, .. } => *d,
        }
    }
}

/// Log-space class scores and the argmax prediction. Ties break to the
/// smallest class index; classes without data score negative infinity.
pub fn predict(params: &NbParameters, x: &[f64]) -> Result<(usize, Vec<f64>)> {
    if x.len() != params.d() {
        return Err(Error::DimensionMismatch {
            expected: params.d(),
            got: x.len(),
        });
    }
    let scores: Vec<f64> = match params {
        NbParameters::Gaussian {
            class_count,
            d,
            priors,
            means,
            variances,
            defined,
        } => (0..*class_count)
            .map(|c| {
                if !defined[c] {
                    return f64::NEG_INFINITY;
                }
                let mut score = priors[c].ln();
                for j in 0..*d {
                    let mu = means[c * d + j];
                    let var = variances[c * d + j];
                    let diff = x[j] - mu;
                    score += -0.5 * (2.0 * std::f64::consts::PI * var).ln()
                        - diff * diff / (2.0 * var);
                }
                score
            })
            .collect(),
        NbParameters::Multinomial {
            class_count,
            d,
            priors,
            theta,
            defined,
        } => (0..*class_count)
            .map(|c| {
                if !defined[c] {
                    return f64::NEG_INFINITY;
                }
                let mut score = priors[c].ln();
                for i in 0..*d {
                    let t = theta[c * d + i];
                    if t <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    // The x-only multinomial factorial terms are constant in
                    // the class and omitted.
                    score += x[i] * t.ln();
                }
                score
            })
            .collect(),
    };
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    Ok((best, scores))
}
