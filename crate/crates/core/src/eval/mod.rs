//! Measurement: greedy accuracy, pass@k, majority voting, repair rates and
//! attribution recovery fractions.

mod passk;
mod repair;
mod stats;

pub use passk::{pass_at_k, pass_at_k_curve, PassKCurve, PassKEstimator, DEFAULT_KS};
pub use repair::{noise_floor_repair, repair_rate, RepairBin, RepairReport};
pub use stats::{recovery_fraction, spearman};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::policy::{Cdf, RecallPolicy};
use crate::reward::Verifier;
use crate::rng::{purpose, stream};
use crate::world::{EntityId, QueryId};

/// Mean verified correctness of greedy answers.
pub fn greedy_accuracy(policy: &RecallPolicy, queries: &[QueryId], verifier: &Verifier) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::arg("greedy_accuracy over an empty query set"));
    }
    let universe = policy.universe();
    let mut hits = 0.0;
    for &q in queries {
        hits += verifier.verify(policy.greedy(q)?, universe.fact(q)?)?;
    }
    Ok(hits / queries.len() as f64)
}

/// Samples `m` answers, normalizes each to its entity, and verifies the
/// modal entity's canonical form. Ties go to the entity seen first.
pub fn majority_vote(
    policy: &RecallPolicy,
    q: QueryId,
    verifier: &Verifier,
    m: usize,
    temperature: f64,
    seed: u64,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::arg("majority vote needs m >= 1"));
    }
    let universe = policy.universe();
    let fact = universe.fact(q)?;
    let cdf = Cdf::new(&policy.probs(q, temperature)?);
    let mut rng = stream(seed, &[purpose::VOTE, q.0 as u64]);
    let mut tally: BTreeMap<EntityId, (usize, usize)> = BTreeMap::new();
    for i in 0..m {
        let e = verifier.entity_of(cdf.draw(&mut rng))?;
        tally.entry(e).or_insert((0, i)).0 += 1;
    }
    let (mode, _) = tally
        .iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(e, v)| (*e, *v))
        .ok_or_else(|| Error::arg("empty vote"))?;
    verifier.verify(universe.canonical_form(mode), fact)
}

pub fn voting_accuracy(
    policy: &RecallPolicy,
    queries: &[QueryId],
    verifier: &Verifier,
    m: usize,
    temperature: f64,
    seed: u64,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::arg("voting_accuracy over an empty query set"));
    }
    let mut hits = 0.0;
    for &q in queries {
        hits += majority_vote(policy, q, verifier, m, temperature, seed)?;
    }
    Ok(hits / queries.len() as f64)
}

/// Everything measured for one policy on one query set.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub greedy_accuracy: f64,
    pub pass_at_k: Vec<(usize, f64)>,
    pub repair: Option<RepairReport>,
    pub voting_accuracy: Option<f64>,
    pub recovery: Vec<(String, f64)>,
    pub seeds: Vec<u64>,
    pub config_hash: u64,
}

impl EvalReport {
    /// Fractions in `[0, 1]` and pass@k non-decreasing in `k`.
    pub fn is_consistent(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        unit(self.greedy_accuracy)
            && self.pass_at_k.iter().all(|&(_, v)| unit(v))
            && self.pass_at_k.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1 + 1e-12)
            && self.voting_accuracy.is_none_or(unit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::sample_index;
    use crate::world::fixtures::small_config;
    use crate::world::generate_universe;
    use alloc::sync::Arc;

    fn perfect_policy() -> (RecallPolicy, Vec<QueryId>) {
        let u = Arc::new(generate_universe(&small_config(), 6).unwrap());
        let qs = u.all_queries();
        let mut p = RecallPolicy::base(u.clone());
        p.ensure_delta_rows(&qs).unwrap();
        for &q in &qs {
            let gold = u.canonical_form(u.facts[q.index()].answer);
            p.delta_row_mut(q).unwrap()[gold.index()] = 100.0;
        }
        (p, qs)
    }

    #[test]
    fn accuracy_extremes() {
        let (p, qs) = perfect_policy();
        let v = Verifier::semantic(p.universe());
        assert_eq!(greedy_accuracy(&p, &qs, &v).unwrap(), 1.0);
        assert_eq!(voting_accuracy(&p, &qs, &v, 32, 1.0, 0).unwrap(), 1.0);

        let mut wrong = p.clone();
        for &q in &qs {
            let gold = p.universe().canonical_form(p.universe().facts[q.index()].answer);
            let row = wrong.delta_row_mut(q).unwrap();
            for (i, x) in row.iter_mut().enumerate() {
                let ent = p.universe().vocab[i].entity;
                *x = if ent == p.universe().facts[q.index()].answer { -100.0 } else { 0.0 };
            }
            let _ = gold;
        }
        assert_eq!(greedy_accuracy(&wrong, &qs, &v).unwrap(), 0.0);
        assert!(greedy_accuracy(&p, &[], &v).is_err());
    }

    #[test]
    fn single_vote_is_a_single_verified_draw() {
        let u = Arc::new(generate_universe(&small_config(), 6).unwrap());
        let p = RecallPolicy::base(u.clone());
        let v = Verifier::semantic(&u);
        for q in u.all_queries().into_iter().take(30) {
            let vote = majority_vote(&p, q, &v, 1, 1.0, 21).unwrap();
            let mut rng = stream(21, &[purpose::VOTE, q.0 as u64]);
            let draw = sample_index(&p.probs(q, 1.0).unwrap(), &mut rng);
            assert_eq!(vote, v.verify(draw, &u.facts[q.index()]).unwrap());
        }
    }
}
