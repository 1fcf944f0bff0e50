//! Partitions, Laplace–Beltrami eigenvalues and degree conversions on G(k,d).

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonincreasing vector of positive parts; trailing zeros are stripped.
///
/// Partitions are ordered by size, then lexicographically ascending. For two
/// parts this is a linear extension of the dominance order, which makes
/// Gram–Schmidt in this order produce the zonal polynomials.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Partition(Vec<u32>);

impl Partition {
    pub fn new(mut parts: Vec<u32>) -> Result<Self> {
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(format!(
                "partition {parts:?} is not nonincreasing"
            )));
        }
        while parts.last() == Some(&0) {
            parts.pop();
        }
        Ok(Self(parts))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    /// Number of nonzero parts.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn size(&self) -> u32 {
        self.0.iter().sum()
    }

    /// i-th part (0-based), zero past the length.
    pub fn part(&self, i: usize) -> u32 {
        self.0.get(i).copied().unwrap_or(0)
    }

    /// Componentwise `self >= other`.
    pub fn contains(&self, other: &Partition) -> bool {
        (0..self.len().max(other.len())).all(|i| self.part(i) >= other.part(i))
    }
}

impl TryFrom<Vec<u32>> for Partition {
    type Error = Error;
    fn try_from(v: Vec<u32>) -> Result<Self> {
        Partition::new(v)
    }
}

impl From<Partition> for Vec<u32> {
    fn from(p: Partition) -> Self {
        p.0
    }
}

impl Ord for Partition {
    fn cmp(&self, other: &Self) -> Ordering {
        self.size()
            .cmp(&other.size())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Partition {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

/// λ(π) = 2|π|d + 4 Σ_i π_i(π_i − i), exact.
pub fn casimir_eigenvalue(p: &Partition, d: usize, k: usize) -> Result<i64> {
    if p.len() > k {
        return Err(Error::PartitionTooLong {
            partition: p.clone(),
            len: p.len(),
            k,
        });
    }
    Ok(eigenvalue_unchecked(p, d))
}

pub(crate) fn eigenvalue_unchecked(p: &Partition, d: usize) -> i64 {
    let size = p.size() as i64;
    let quad: i64 = p
        .parts()
        .iter()
        .enumerate()
        .map(|(i, &pi)| {
            let pi = pi as i64;
            pi * (pi - (i as i64 + 1))
        })
        .sum();
    2 * size * d as i64 + 4 * quad
}

/// ⌈(4/k)t² + 2t(d−k−1)⌉, the smallest eigenvalue among partitions of size ≥ t
/// when k divides t, and a lower bound otherwise.
pub fn eigenvalue_lower_bound(t: u32, d: usize, k: usize) -> i64 {
    let (t, d, k) = (t as i64, d as i64, k as i64);
    let num = 4 * t * t + 2 * t * (d - k - 1) * k;
    num.div_euclid(k) + i64::from(num.rem_euclid(k) != 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionBound {
    /// |π| ≤ t.
    Size(u32),
    /// λ(π) ≤ max on G(k,d).
    Eigenvalue { d: usize, max: i64 },
}

fn partitions_of(
    size: u32,
    max_part: u32,
    max_len: usize,
    prefix: &mut Vec<u32>,
    out: &mut Vec<Partition>,
) {
    if size == 0 {
        out.push(Partition(prefix.clone()));
        return;
    }
    if max_len == 0 {
        return;
    }
    for first in (1..=max_part.min(size)).rev() {
        prefix.push(first);
        partitions_of(size - first, first, max_len - 1, prefix, out);
        prefix.pop();
    }
}

/// All partitions of exactly `size` with at most `k` parts, in canonical order.
pub fn partitions_of_size(size: u32, k: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    partitions_of(size, size, k, &mut Vec::new(), &mut out);
    out.sort();
    out
}

/// Partitions with at most `k` parts satisfying `bound`, sorted canonically.
pub fn enumerate_partitions(k: usize, bound: PartitionBound) -> Result<Vec<Partition>> {
    if k == 0 {
        return Err(Error::InvalidDimensions {
            d: 0,
            k,
            reason: "k must be positive",
        });
    }
    let mut out = Vec::new();
    match bound {
        PartitionBound::Size(t) => {
            for s in 0..=t {
                out.extend(partitions_of_size(s, k));
            }
        }
        PartitionBound::Eigenvalue { d, max } => {
            if d < k + 1 {
                return Err(Error::InvalidDimensions {
                    d,
                    k,
                    reason: "eigenvalue enumeration needs d > k",
                });
            }
            let mut s = 0;
            // the lower bound is increasing in s for d > k
            while eigenvalue_lower_bound(s, d, k) <= max {
                out.extend(
                    partitions_of_size(s, k)
                        .into_iter()
                        .filter(|p| eigenvalue_unchecked(p, d) <= max),
                );
                s += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralRow {
    pub partition: Partition,
    pub degree: u32,
    pub eigenvalue: i64,
}

/// Partitions of degree ≤ `max_degree` with their eigenvalues, sorted by eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTable {
    pub d: usize,
    pub k: usize,
    pub rows: Vec<SpectralRow>,
}

impl SpectralTable {
    pub fn new(d: usize, k: usize, max_degree: u32) -> Result<Self> {
        let mut rows: Vec<SpectralRow> = enumerate_partitions(k, PartitionBound::Size(max_degree))?
            .into_iter()
            .map(|p| SpectralRow {
                degree: p.size(),
                eigenvalue: eigenvalue_unchecked(&p, d),
                partition: p,
            })
            .collect();
        rows.sort_by(|a, b| {
            a.eigenvalue
                .cmp(&b.eigenvalue)
                .then_with(|| a.partition.cmp(&b.partition))
        });
        Ok(Self { d, k, rows })
    }

    /// CSV with header `partition,size,eigenvalue`; partitions written as `(a;b)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "partition,size,eigenvalue")?;
        for r in &self.rows {
            let parts: Vec<String> = r.partition.parts().iter().map(|p| p.to_string()).collect();
            writeln!(out, "({}),{},{}", parts.join(";"), r.degree, r.eigenvalue)?;
        }
        Ok(())
    }
}

/// n_t = ⌊(t+1)²(1 + t + t²/2)/3⌋, the design sizes used for G(2,4).
pub fn design_point_count(t: u32) -> u64 {
    let t = t as u64;
    (t + 1) * (t + 1) * (2 + 2 * t + t * t) / 6
}

/// dim Pol_t(G(2,4)) = (t+1)²(1 + t + t²/2).
pub fn g24_poly_dimension(t: u32) -> u64 {
    let t = t as u64;
    (t + 1) * (t + 1) * (2 + 2 * t + t * t) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeBoundVariant {
    /// s(t)² = ⌈(4/k)t² + 2t(d−k−1)⌉: Π_{s(t+1)−ε} ⊂ Pol_t for every k.
    General,
    /// s(t)² = 2t² + 2t(d−3) + 2(1 + (−1)^{t+1}), sharper for k = 2.
    K2,
    /// s(t)² = 4t² + 2t(d−2): Pol_t ⊂ Π_{s(t)}.
    Upper,
    /// s(t)² = 2(t² + 3t + 3 + (−1)^t): the approximation scale on G(2,4).
    Experiment,
}

impl DegreeBoundVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::General => "general",
            Self::K2 => "k2",
            Self::Upper => "upper",
            Self::Experiment => "experiment",
        }
    }
}

/// Squared degree bound s(t)², an exact integer.
pub fn diffusion_degree_bound_squared(
    t: u32,
    d: usize,
    k: usize,
    variant: DegreeBoundVariant,
) -> Result<i64> {
    let sign = if t.is_multiple_of(2) { 1 } else { -1 };
    let ti = t as i64;
    let di = d as i64;
    match variant {
        DegreeBoundVariant::General => Ok(eigenvalue_lower_bound(t, d, k)),
        DegreeBoundVariant::Upper => Ok(4 * ti * ti + 2 * ti * (di - 2)),
        DegreeBoundVariant::K2 => {
            if k != 2 {
                return Err(Error::VariantMismatch {
                    variant: variant.name(),
                    d,
                    k,
                });
            }
            Ok(2 * ti * ti + 2 * ti * (di - 3) + 2 * (1 - sign))
        }
        DegreeBoundVariant::Experiment => {
            if k != 2 || d != 4 {
                return Err(Error::VariantMismatch {
                    variant: variant.name(),
                    d,
                    k,
                });
            }
            Ok(2 * (ti * ti + 3 * ti + 3 + sign))
        }
    }
}

pub fn diffusion_degree_bound(
    t: u32,
    d: usize,
    k: usize,
    variant: DegreeBoundVariant,
) -> Result<f64> {
    diffusion_degree_bound_squared(t, d, k, variant).map(|s| (s as f64).sqrt())
}
