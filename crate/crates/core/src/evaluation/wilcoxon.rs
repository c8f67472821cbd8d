use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::metrics::midranks;
use crate::error::{Error, Result};

/// Largest effective sample size handled by the exact null distribution.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    /// The first sample tends to be larger.
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedRankTest {
    /// Sum of ranks of positive differences.
    pub statistic: f64,
    pub n_effective: usize,
    pub p_value: f64,
    pub significant: bool,
    pub exact: bool,
}

/// Null distribution of twice the positive-rank sum, by dynamic
/// programming over sign patterns. Index = doubled statistic.
fn exact_counts(doubled_ranks: &[usize]) -> Vec<f64> {
    let total: usize = doubled_ranks.iter().sum();
    let mut counts = vec![0.0; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled_ranks {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Signed-rank test of `a − b`. Zero differences are dropped and ties get
/// mid-ranks. Exact for up to 25 nonzero differences, otherwise a normal
/// approximation with tie and continuity corrections.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], sided: Sided, level: f64) -> Result<SignedRankTest> {
    if a.len() != b.len() {
        return Err(Error::Schema("paired samples differ in length".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(Error::AllTied);
    }
    let n = diffs.len();
    let ranks = midranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();

    let (p_value, exact) = if n <= EXACT_MAX_N {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = exact_counts(&doubled);
        let total: f64 = counts.iter().sum();
        let w2 = (2.0 * w_plus).round() as usize;
        let upper: f64 = counts[w2..].iter().sum::<f64>() / total;
        let lower: f64 = counts[..=w2].iter().sum::<f64>() / total;
        let p = match sided {
            Sided::Greater => upper,
            Sided::TwoSided => (2.0 * upper.min(lower)).min(1.0),
        };
        (p, true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut tie_term = 0.0;
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
            let t = j as f64;
            tie_term += t * t * t - t;
            i += j;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let normal = Normal::standard();
        let p = if var <= 0.0 {
            1.0
        } else {
            let sd = var.sqrt();
            match sided {
                Sided::Greater => 1.0 - normal.cdf((w_plus - mean - 0.5) / sd),
                Sided::TwoSided => {
                    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / sd;
                    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
                }
            }
        };
        (p, false)
    };
    Ok(SignedRankTest {
        statistic: w_plus,
        n_effective: n,
        p_value,
        significant: p_value <= level,
        exact,
    })
}
