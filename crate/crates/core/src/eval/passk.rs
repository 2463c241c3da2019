use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::policy::{Cdf, RecallPolicy};
use crate::reward::Verifier;
use crate::rng::{purpose, stream};
use crate::world::QueryId;

/// `{1, 2, 4, ..., 256}`.
pub const DEFAULT_KS: [usize; 9] = [1, 2, 4, 8, 16, 32, 64, 128, 256];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PassKEstimator {
    /// `1 − C(n−c, k) / C(n, k)` from all `n` samples.
    #[default]
    Unbiased,
    /// Hit iff one of the first `k` samples is correct.
    Prefix,
}

fn binomial_u128(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(acc)
}

/// Unbiased pass@k for `c` correct out of `n` samples.
///
/// Uses exact integer binomials when they fit in 128 bits and the product
/// form `Π (n−c−i)/(n−i)` otherwise.
pub fn pass_at_k(c: usize, n: usize, k: usize) -> Result<f64> {
    if c > n {
        return Err(Error::arg(alloc::format!("correct count {c} exceeds samples {n}")));
    }
    if k == 0 || k > n {
        return Err(Error::arg(alloc::format!("budget k = {k} outside [1, {n}]")));
    }
    if n - c < k {
        return Ok(1.0);
    }
    if let (Some(miss), Some(all)) = (binomial_u128(n - c, k), binomial_u128(n, k)) {
        return Ok((all - miss) as f64 / all as f64);
    }
    let mut miss = 1.0;
    for i in 0..k {
        miss *= (n - c - i) as f64 / (n - i) as f64;
    }
    Ok(1.0 - miss)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PassKCurve {
    pub n: usize,
    pub estimator: PassKEstimator,
    pub points: Vec<(usize, f64)>,
}

impl PassKCurve {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.points.iter().find(|p| p.0 == k).map(|p| p.1)
    }
}

/// Dataset-level pass@k: draws `n` answers per query and averages the
/// per-query estimate for each budget in `ks`.
#[allow(clippy::too_many_arguments)]
pub fn pass_at_k_curve(
    policy: &RecallPolicy,
    queries: &[QueryId],
    verifier: &Verifier,
    n: usize,
    ks: &[usize],
    temperature: f64,
    seed: u64,
    estimator: PassKEstimator,
) -> Result<PassKCurve> {
    if queries.is_empty() {
        return Err(Error::arg("pass@k over an empty query set"));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::arg(alloc::format!("budget k = {k} outside [1, {n}]")));
    }
    let universe = policy.universe();
    let mut sums = alloc::vec![0.0; ks.len()];
    for &q in queries {
        let fact = universe.fact(q)?;
        let cdf = Cdf::new(&policy.probs(q, temperature)?);
        let mut rng = stream(seed, &[purpose::PASSK, q.0 as u64]);
        let mut c = 0;
        let mut first_hit = None;
        for i in 0..n {
            if verifier.verify(cdf.draw(&mut rng), fact)? > 0.0 {
                c += 1;
                first_hit.get_or_insert(i);
            }
        }
        for (s, &k) in sums.iter_mut().zip(ks) {
            *s += match estimator {
                PassKEstimator::Unbiased => pass_at_k(c, n, k)?,
                PassKEstimator::Prefix => first_hit.map_or(0.0, |i| (i < k) as u8 as f64),
            };
        }
    }
    let m = queries.len() as f64;
    Ok(PassKCurve {
        n,
        estimator,
        points: ks.iter().zip(sums).map(|(&k, s)| (k, s / m)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_counts() {
        for k in [1, 3, 10] {
            assert_eq!(pass_at_k(0, 10, k).unwrap(), 0.0);
            assert_eq!(pass_at_k(10, 10, k).unwrap(), 1.0);
        }
    }

    #[test]
    fn small_combinatorial_value() {
        assert_eq!(pass_at_k(2, 4, 2).unwrap(), 5.0 / 6.0);
    }

    #[test]
    fn argument_errors() {
        assert!(pass_at_k(1, 4, 5).is_err());
        assert!(pass_at_k(1, 4, 0).is_err());
        assert!(pass_at_k(5, 4, 1).is_err());
    }

    #[test]
    fn float_path_agrees_with_exact_path() {
        // n = 256 overflows u128 binomials for mid-range k.
        let exact = pass_at_k(3, 60, 20).unwrap();
        let mut miss = 1.0;
        for i in 0..20 {
            miss *= (57 - i) as f64 / (60 - i) as f64;
        }
        assert!((exact - (1.0 - miss)).abs() < 1e-14);
        let big = pass_at_k(5, 256, 128).unwrap();
        assert!(big > 0.9 && big < 1.0);
    }
}
