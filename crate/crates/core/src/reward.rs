//! Binary correctness verification.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{derive, mix64, purpose};
use crate::world::{EntityId, Fact, FactUniverse, FormId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum VerifierMode {
    /// Any surface form of the answer entity is correct.
    #[default]
    Semantic,
    /// Only the answer's canonical form is correct.
    Exact,
}

impl FromStr for VerifierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semantic" => Ok(VerifierMode::Semantic),
            "exact" => Ok(VerifierMode::Exact),
            other => Err(Error::config(alloc::format!(
                "unknown verifier mode {other:?} (expected \"semantic\" or \"exact\")"
            ))),
        }
    }
}

impl fmt::Display for VerifierMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerifierMode::Semantic => "semantic",
            VerifierMode::Exact => "exact",
        })
    }
}

/// Equivalence oracle over surface forms. Never accepts a wrong entity.
#[derive(Debug, Clone, PartialEq)]
pub struct Verifier {
    mode: VerifierMode,
    entity_of: Vec<EntityId>,
    canonical: Vec<FormId>,
    false_negative_rate: f64,
    fn_seed: u64,
}

impl Verifier {
    pub fn new(universe: &FactUniverse, mode: VerifierMode) -> Self {
        Verifier {
            mode,
            entity_of: universe.vocab.iter().map(|f| f.entity).collect(),
            canonical: universe.canonical.clone(),
            false_negative_rate: 0.0,
            fn_seed: 0,
        }
    }

    pub fn semantic(universe: &FactUniverse) -> Self {
        Self::new(universe, VerifierMode::Semantic)
    }

    pub fn exact(universe: &FactUniverse) -> Self {
        Self::new(universe, VerifierMode::Exact)
    }

    /// Rejects a fixed pseudo-random subset of otherwise-correct
    /// `(query, form)` pairs. The rejection set is a function of `seed`, so
    /// verification stays pure.
    pub fn with_false_negatives(mut self, rate: f64, seed: u64) -> Self {
        self.false_negative_rate = rate.clamp(0.0, 1.0);
        self.fn_seed = seed;
        self
    }

    pub fn mode(&self) -> VerifierMode {
        self.mode
    }

    /// Entity of a form; the normalization used by majority voting.
    pub fn entity_of(&self, form: FormId) -> Result<EntityId> {
        self.entity_of
            .get(form.index())
            .copied()
            .ok_or_else(|| Error::arg(alloc::format!("unknown form {}", form.0)))
    }

    pub fn verify(&self, form: FormId, fact: &Fact) -> Result<f64> {
        let entity = self.entity_of(form)?;
        let accepted = match self.mode {
            VerifierMode::Semantic => entity == fact.answer,
            VerifierMode::Exact => self.canonical.get(fact.answer.index()) == Some(&form),
        };
        if accepted && self.false_negative_rate > 0.0 {
            let h = mix64(derive(self.fn_seed, &[purpose::REWARD_NOISE, fact.query_id.0 as u64, form.0 as u64]));
            let u = (h >> 11) as f64 / (1u64 << 53) as f64;
            if u < self.false_negative_rate {
                return Ok(0.0);
            }
        }
        Ok(if accepted { 1.0 } else { 0.0 })
    }

    pub fn reward_group(&self, samples: &[FormId], fact: &Fact) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Err(Error::arg("reward_group needs at least one sample"));
        }
        samples.iter().map(|&f| self.verify(f, fact)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::fixtures::small_config;
    use crate::world::generate_universe;

    fn alias_fixture() -> (FactUniverse, Fact, FormId, FormId, FormId) {
        let u = generate_universe(&small_config(), 4).unwrap();
        let (fact, alias) = u
            .facts
            .iter()
            .find_map(|f| {
                u.vocab
                    .iter()
                    .find(|s| s.entity == f.answer && !s.is_canonical)
                    .map(|s| (*f, s.id))
            })
            .expect("fixture world has aliased answers");
        let canon = u.canonical_form(fact.answer);
        let wrong = u.vocab.iter().find(|s| s.entity != fact.answer).unwrap().id;
        (u, fact, canon, alias, wrong)
    }

    #[test]
    fn verify_modes() {
        let (u, fact, canon, alias, wrong) = alias_fixture();
        let sem = Verifier::semantic(&u);
        let ex = Verifier::exact(&u);
        assert_eq!(sem.verify(canon, &fact).unwrap(), 1.0);
        assert_eq!(ex.verify(canon, &fact).unwrap(), 1.0);
        assert_eq!(sem.verify(alias, &fact).unwrap(), 1.0);
        assert_eq!(ex.verify(alias, &fact).unwrap(), 0.0);
        assert_eq!(sem.verify(wrong, &fact).unwrap(), 0.0);
        assert_eq!(ex.verify(wrong, &fact).unwrap(), 0.0);
        assert!(sem.verify(FormId(9999), &fact).is_err());
    }

    #[test]
    fn group_rewards() {
        let (u, fact, canon, alias, wrong) = alias_fixture();
        let sem = Verifier::semantic(&u);
        let ex = Verifier::exact(&u);
        let samples = [wrong, alias, wrong, wrong, wrong];
        assert_eq!(sem.reward_group(&samples, &fact).unwrap(), [0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(ex.reward_group(&samples, &fact).unwrap(), [0.0; 5]);
        assert_eq!(sem.reward_group(&[canon; 5], &fact).unwrap(), [1.0; 5]);
        assert!(sem.reward_group(&[], &fact).is_err());
    }

    #[test]
    fn exact_never_exceeds_semantic() {
        let u = generate_universe(&small_config(), 8).unwrap();
        let sem = Verifier::semantic(&u);
        let ex = Verifier::exact(&u);
        for fact in u.facts.iter().take(20) {
            for s in &u.vocab {
                assert!(ex.verify(s.id, fact).unwrap() <= sem.verify(s.id, fact).unwrap());
            }
        }
    }

    #[test]
    fn false_negatives_are_consistent_and_never_positive() {
        let (u, fact, canon, _, wrong) = alias_fixture();
        let v = Verifier::semantic(&u).with_false_negatives(0.5, 3);
        assert_eq!(v.verify(canon, &fact).unwrap(), v.verify(canon, &fact).unwrap());
        assert_eq!(v.verify(wrong, &fact).unwrap(), 0.0);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("semantic".parse::<VerifierMode>().unwrap(), VerifierMode::Semantic);
        assert_eq!("exact".parse::<VerifierMode>().unwrap(), VerifierMode::Exact);
        assert!("fuzzy".parse::<VerifierMode>().is_err());
    }
}
