use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::policy::RecallPolicy;
use crate::reward::Verifier;
use crate::world::{AccessibilityBin, AccessibilityProfile, QueryId};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RepairBin {
    pub bin: AccessibilityBin,
    /// Initially greedy-wrong queries in this bin.
    pub n_queries: usize,
    pub repaired: usize,
    /// `None` for an empty bin.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RepairReport {
    pub bins: Vec<RepairBin>,
}

impl RepairReport {
    pub fn rates(&self) -> Vec<Option<f64>> {
        self.bins.iter().map(|b| b.rate).collect()
    }

    /// Repair rate pooled over all bins.
    pub fn overall(&self) -> Option<f64> {
        let n: usize = self.bins.iter().map(|b| b.n_queries).sum();
        let r: usize = self.bins.iter().map(|b| b.repaired).sum();
        (n > 0).then(|| r as f64 / n as f64)
    }
}

/// Per-bin fraction of initially greedy-wrong `test` queries that
/// `post_policy` answers correctly under greedy decoding. Bins come from
/// `profile`, which must have been measured on `pre_policy`.
pub fn repair_rate(
    pre_policy: &RecallPolicy,
    post_policy: &RecallPolicy,
    test: &[QueryId],
    verifier: &Verifier,
    profile: &AccessibilityProfile,
) -> Result<RepairReport> {
    let index = profile.by_query();
    let universe = pre_policy.universe();
    let mut n = [0usize; AccessibilityBin::COUNT];
    let mut fixed = [0usize; AccessibilityBin::COUNT];
    for &q in test {
        let entry = index
            .get(&q)
            .ok_or_else(|| Error::arg(alloc::format!("query {} missing from profile", q.0)))?;
        let fact = universe.fact(q)?;
        if verifier.verify(pre_policy.greedy(q)?, fact)? > 0.0 {
            continue;
        }
        let b = entry.bin.index();
        n[b] += 1;
        if verifier.verify(post_policy.greedy(q)?, fact)? > 0.0 {
            fixed[b] += 1;
        }
    }
    Ok(RepairReport {
        bins: AccessibilityBin::all()
            .map(|bin| {
                let i = bin.index();
                RepairBin {
                    bin,
                    n_queries: n[i],
                    repaired: fixed[i],
                    rate: (n[i] > 0).then(|| fixed[i] as f64 / n[i] as f64),
                }
            })
            .collect(),
    })
}

/// Repair counts restricted to initially greedy-wrong `test` queries whose
/// answer is absent from the frozen scores. Returns `(n_queries, repaired)`.
pub fn noise_floor_repair(
    pre_policy: &RecallPolicy,
    post_policy: &RecallPolicy,
    test: &[QueryId],
    verifier: &Verifier,
) -> Result<(usize, usize)> {
    let universe = pre_policy.universe();
    let (mut n, mut fixed) = (0, 0);
    for &q in test {
        let fact = universe.fact(q)?;
        if !universe.is_noise_floor(q) || verifier.verify(pre_policy.greedy(q)?, fact)? > 0.0 {
            continue;
        }
        n += 1;
        if verifier.verify(post_policy.greedy(q)?, fact)? > 0.0 {
            fixed += 1;
        }
    }
    Ok((n, fixed))
}

