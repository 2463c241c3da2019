use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use super::QueryId;
use crate::error::{Error, Result};
use crate::policy::{Cdf, RecallPolicy};
use crate::reward::Verifier;
use crate::rng::{purpose, stream};

/// Default sample budget for accessibility profiles.
pub const ACCESSIBILITY_SAMPLES: usize = 128;

/// Logarithmic accessibility bins over counts out of 128.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct AccessibilityBin(pub u8);

impl AccessibilityBin {
    pub const COUNT: usize = 9;
    const BOUNDS: [(usize, usize); 9] = [
        (0, 0),
        (1, 1),
        (2, 2),
        (3, 4),
        (5, 8),
        (9, 16),
        (17, 32),
        (33, 64),
        (65, 128),
    ];

    pub fn all() -> impl Iterator<Item = AccessibilityBin> {
        (0..Self::COUNT as u8).map(AccessibilityBin)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Inclusive count range covered by the bin.
    pub fn bounds(self) -> (usize, usize) {
        Self::BOUNDS[self.index()]
    }

    pub fn label(self) -> &'static str {
        ["0", "1", "2", "[3,4]", "[5,8]", "[9,16]", "[17,32]", "[33,64]", ">=65"][self.index()]
    }
}

impl fmt::Display for AccessibilityBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bin of a correct-sample count out of 128.
pub fn assign_bins(c: usize) -> Result<AccessibilityBin> {
    AccessibilityBin::BOUNDS
        .iter()
        .position(|&(lo, hi)| lo <= c && c <= hi)
        .map(|i| AccessibilityBin(i as u8))
        .ok_or_else(|| Error::arg(alloc::format!("correct count {c} outside [0, 128]")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QueryAccessibility {
    pub query: QueryId,
    pub correct_count: usize,
    pub bin: AccessibilityBin,
    pub greedy_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccessibilityProfile {
    pub n_samples: usize,
    pub entries: Vec<QueryAccessibility>,
}

impl AccessibilityProfile {
    pub fn get(&self, q: QueryId) -> Option<&QueryAccessibility> {
        self.entries.iter().find(|e| e.query == q)
    }

    pub fn by_query(&self) -> BTreeMap<QueryId, QueryAccessibility> {
        self.entries.iter().map(|e| (e.query, *e)).collect()
    }

    pub fn bin_counts(&self) -> [usize; AccessibilityBin::COUNT] {
        let mut out = [0; AccessibilityBin::COUNT];
        for e in &self.entries {
            out[e.bin.index()] += 1;
        }
        out
    }
}

/// Counts semantically correct answers among `n_samples` draws per query.
///
/// Each query draws from its own stream, so the profile of a query does not
/// depend on which other queries are measured. Bins use counts rescaled to
/// a budget of 128 when `n_samples` differs.
pub fn measure_accessibility(
    policy: &RecallPolicy,
    queries: &[QueryId],
    n_samples: usize,
    temperature: f64,
    seed: u64,
) -> Result<AccessibilityProfile> {
    if n_samples == 0 {
        return Err(Error::arg("n_samples must be positive"));
    }
    let universe = policy.universe();
    let verifier = Verifier::semantic(universe);
    let mut entries = Vec::with_capacity(queries.len());
    for &q in queries {
        let fact = *universe.fact(q)?;
        let probs = policy.probs(q, temperature)?;
        let cdf = Cdf::new(&probs);
        let mut rng = stream(seed, &[purpose::PROFILE, q.0 as u64]);
        let mut c = 0;
        for _ in 0..n_samples {
            c += verifier.verify(cdf.draw(&mut rng), &fact)? as usize;
        }
        let scaled = if n_samples == ACCESSIBILITY_SAMPLES {
            c
        } else {
            ((c * ACCESSIBILITY_SAMPLES) as f64 / n_samples as f64 + 0.5) as usize
        };
        let greedy_correct = verifier.verify(policy.greedy(q)?, &fact)? == 1.0;
        entries.push(QueryAccessibility {
            query: q,
            correct_count: c,
            bin: assign_bins(scaled)?,
            greedy_correct,
        });
    }
    Ok(AccessibilityProfile { n_samples, entries })
}

/// Training-data strata by pre-RL correct count `c` out of 128.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccessibilityPartition {
    /// `c = 0`
    pub inaccessible: Vec<QueryId>,
    /// `1 <= c <= 2`
    pub near_inaccessible: Vec<QueryId>,
    /// `3 <= c <= 64`
    pub partial: Vec<QueryId>,
    /// `c >= 65`
    pub high: Vec<QueryId>,
}

impl AccessibilityPartition {
    pub fn total(&self) -> usize {
        self.inaccessible.len() + self.near_inaccessible.len() + self.partial.len() + self.high.len()
    }
}

pub fn partition_by_accessibility(
    profile: &AccessibilityProfile,
    train: &[QueryId],
) -> Result<AccessibilityPartition> {
    let index = profile.by_query();
    let mut out = AccessibilityPartition::default();
    for &q in train {
        let entry = index
            .get(&q)
            .ok_or_else(|| Error::arg(alloc::format!("query {} missing from profile", q.0)))?;
        let c = entry.correct_count;
        let slot = match c {
            0 => &mut out.inaccessible,
            1..=2 => &mut out.near_inaccessible,
            3..=64 => &mut out.partial,
            _ => &mut out.high,
        };
        slot.push(q);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_examples() {
        assert_eq!(assign_bins(0).unwrap().label(), "0");
        assert_eq!(assign_bins(10).unwrap().label(), "[9,16]");
        assert_eq!(assign_bins(65).unwrap().label(), ">=65");
        assert_eq!(assign_bins(64).unwrap().label(), "[33,64]");
        assert!(assign_bins(129).is_err());
    }

    #[test]
    fn bins_are_total_and_disjoint() {
        for c in 0..=128 {
            let hits = AccessibilityBin::all()
                .filter(|b| {
                    let (lo, hi) = b.bounds();
                    lo <= c && c <= hi
                })
                .count();
            assert_eq!(hits, 1, "count {c}");
            let (lo, hi) = assign_bins(c).unwrap().bounds();
            assert!(lo <= c && c <= hi);
        }
    }

    fn profile(counts: &[usize]) -> AccessibilityProfile {
        AccessibilityProfile {
            n_samples: 128,
            entries: counts
                .iter()
                .enumerate()
                .map(|(i, &c)| QueryAccessibility {
                    query: QueryId(i as u32),
                    correct_count: c,
                    bin: assign_bins(c).unwrap(),
                    greedy_correct: false,
                })
                .collect(),
        }
    }

    #[test]
    fn partition_boundaries() {
        let p = profile(&[0, 2, 40, 100]);
        let ids: Vec<_> = (0..4).map(QueryId).collect();
        let part = partition_by_accessibility(&p, &ids).unwrap();
        assert_eq!(part.inaccessible, [QueryId(0)]);
        assert_eq!(part.near_inaccessible, [QueryId(1)]);
        assert_eq!(part.partial, [QueryId(2)]);
        assert_eq!(part.high, [QueryId(3)]);

        let p = profile(&[0; 6]);
        let ids: Vec<_> = (0..6).map(QueryId).collect();
        let part = partition_by_accessibility(&p, &ids).unwrap();
        assert_eq!(part.inaccessible.len(), 6);
        assert_eq!(part.total(), 6);
    }

    #[test]
    fn bin_counts_sum_to_total() {
        let p = profile(&[0, 1, 2, 3, 5, 9, 17, 33, 65, 128, 0, 7]);
        assert_eq!(p.bin_counts().iter().sum::<usize>(), p.entries.len());
    }
}
