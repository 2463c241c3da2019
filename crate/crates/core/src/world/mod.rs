//! Synthetic fact universes, dataset splits, and accessibility measurement.

mod access;
mod generate;
mod splits;

#[cfg(test)]
pub(crate) mod fixtures;

pub use access::{
    assign_bins, measure_accessibility, partition_by_accessibility, AccessibilityBin,
    AccessibilityPartition, AccessibilityProfile, QueryAccessibility, ACCESSIBILITY_SAMPLES,
};
pub use generate::generate_universe;
pub use splits::{deduplicate, deduplicate_across, downsample_balanced, split_dataset, DatasetSplits, SplitSizes};

use alloc::vec::Vec;

use crate::error::{Error, Result};

macro_rules! id_newtype {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        #[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
        #[cfg_attr(feature = "serde", serde(transparent))]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_newtype!(EntityId);
id_newtype!(RelationId);
id_newtype!(
    /// Index into the vocabulary of surface forms.
    FormId
);
id_newtype!(
    /// Index of a fact; doubles as the row of the knowledge matrix.
    QueryId
);

/// One-hop, single-answer fact `(subject, relation) -> answer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Fact {
    pub subject: EntityId,
    pub relation: RelationId,
    pub answer: EntityId,
    pub query_id: QueryId,
}

impl Fact {
    /// Deduplication key. Two queries target the same fact iff their keys match.
    pub fn key(&self) -> (EntityId, RelationId) {
        (self.subject, self.relation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SurfaceForm {
    pub id: FormId,
    pub entity: EntityId,
    pub is_canonical: bool,
}

/// Law of the correct answer's knowledge score for facts above the noise floor.
///
/// With probability `reachable_weight` the score comes from the diffuse
/// reachable component, otherwise from a narrow component just above the
/// distractor ceiling. Both are truncated from below at the ceiling.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccessibilityMixture {
    pub reachable_weight: f64,
    pub reachable_mean: f64,
    pub reachable_std: f64,
    pub ceiling_offset: f64,
    pub ceiling_std: f64,
}

/// Truncated normal law of distractor knowledge scores. Draws never exceed
/// `mean + ceiling_sigmas * std`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DistractorNoise {
    pub mean: f64,
    pub std: f64,
    pub ceiling_sigmas: f64,
}

impl DistractorNoise {
    pub fn ceiling(&self) -> f64 {
        self.mean + self.ceiling_sigmas * self.std
    }
}

/// One plausible wrong answer per query, drawn from the most popular entities.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PopularDistractor {
    pub pool_size: usize,
    pub score_mean: f64,
    pub score_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AliasConfig {
    pub min: usize,
    pub max: usize,
    /// Alias scores are the canonical score plus
    /// `Uniform(-score_gap_max, score_lead_max)`.
    pub score_gap_max: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub score_lead_max: f64,
    /// Alias popularity relative to the entity's canonical form.
    pub popularity_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorldConfig {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_facts: usize,
    /// Total number of surface forms, canonical plus aliases.
    pub vocab_size: usize,
    pub accessibility_mixture: AccessibilityMixture,
    pub distractor_noise: DistractorNoise,
    pub popularity_zipf_exponent: f64,
    /// Popularity weight of the base policy (λ0).
    pub suppression_strength: f64,
    pub aliases_per_entity: AliasConfig,
    pub noise_floor_fraction: f64,
    pub popular_distractor: PopularDistractor,
    /// Answers are drawn with probability proportional to
    /// `popularity^answer_popularity_bias`; 0 means uniform.
    #[cfg_attr(feature = "serde", serde(default))]
    pub answer_popularity_bias: f64,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_entities", self.n_entities),
            ("n_relations", self.n_relations),
            ("n_facts", self.n_facts),
            ("vocab_size", self.vocab_size),
            ("popular_distractor.pool_size", self.popular_distractor.pool_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(alloc::format!("{name} must be positive")));
            }
        }
        if self.n_entities < 2 {
            return Err(Error::config("need at least two entities"));
        }
        if self.n_facts > self.n_entities * self.n_relations {
            return Err(Error::config(alloc::format!(
                "n_facts {} exceeds the {} distinct (subject, relation) keys",
                self.n_facts,
                self.n_entities * self.n_relations
            )));
        }
        let a = &self.aliases_per_entity;
        if a.min > a.max {
            return Err(Error::config("aliases_per_entity.min > max"));
        }
        let lo = self.n_entities * (1 + a.min);
        let hi = self.n_entities * (1 + a.max);
        if self.vocab_size < lo || self.vocab_size > hi {
            return Err(Error::config(alloc::format!(
                "vocab_size {} outside [{lo}, {hi}] implied by aliases_per_entity",
                self.vocab_size
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_floor_fraction) {
            return Err(Error::config("noise_floor_fraction must lie in [0, 1]"));
        }
        let m = &self.accessibility_mixture;
        if !(0.0..=1.0).contains(&m.reachable_weight) {
            return Err(Error::config("accessibility_mixture.reachable_weight must lie in [0, 1]"));
        }
        if m.reachable_std < 0.0 || m.ceiling_std < 0.0 || self.distractor_noise.std <= 0.0 {
            return Err(Error::config("score laws need non-negative spreads"));
        }
        if self.answer_popularity_bias < 0.0 || !self.answer_popularity_bias.is_finite() {
            return Err(Error::config("answer_popularity_bias must be finite and >= 0"));
        }
        if self.suppression_strength < 0.0 {
            return Err(Error::config("suppression_strength must be >= 0"));
        }
        if a.score_gap_max < 0.0 || a.score_lead_max < 0.0 || !(0.0..=1.0).contains(&a.popularity_factor) {
            return Err(Error::config("alias score gap must be >= 0 and popularity factor in [0, 1]"));
        }
        Ok(())
    }
}

/// Frozen synthetic world. Scores never change after generation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FactUniverse {
    pub config: WorldConfig,
    pub seed: u64,
    pub entities: Vec<EntityId>,
    pub relations: Vec<RelationId>,
    pub facts: Vec<Fact>,
    pub vocab: Vec<SurfaceForm>,
    /// Row-major `[n_facts, vocab_size]` knowledge scores.
    pub knowledge: Vec<f64>,
    /// Per-form popularity.
    pub popularity: Vec<f64>,
    /// Hinge knots at the 50th/80th/95th percentiles of `knowledge`.
    pub knots: [f64; 3],
    /// Canonical form of each entity, indexed by entity id.
    pub canonical: Vec<FormId>,
    /// Whether a fact's correct score was drawn at the distractor level.
    pub noise_floor: Vec<bool>,
}

impl FactUniverse {
    pub fn n_facts(&self) -> usize {
        self.facts.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn fact(&self, q: QueryId) -> Result<&Fact> {
        self.facts
            .get(q.index())
            .ok_or_else(|| Error::arg(alloc::format!("unknown query {}", q.0)))
    }

    pub fn knowledge_row(&self, q: QueryId) -> &[f64] {
        let v = self.vocab.len();
        &self.knowledge[q.index() * v..(q.index() + 1) * v]
    }

    pub fn canonical_form(&self, e: EntityId) -> FormId {
        self.canonical[e.index()]
    }

    pub fn entity_of(&self, form: FormId) -> Option<EntityId> {
        self.vocab.get(form.index()).map(|f| f.entity)
    }

    pub fn is_noise_floor(&self, q: QueryId) -> bool {
        self.noise_floor[q.index()]
    }

    pub fn all_queries(&self) -> Vec<QueryId> {
        (0..self.facts.len() as u32).map(QueryId).collect()
    }

    /// 64-bit FNV-1a digest over everything that defines the world's
    /// content. Used to pin checkpoints to a universe and to check that
    /// training never touches the frozen scores.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.u64(self.seed);
        h.u64(self.vocab.len() as u64);
        h.u64(self.facts.len() as u64);
        for f in &self.facts {
            h.u64(((f.subject.0 as u64) << 32) | f.relation.0 as u64);
            h.u64(f.answer.0 as u64);
        }
        for s in &self.vocab {
            h.u64(((s.entity.0 as u64) << 1) | s.is_canonical as u64);
        }
        for &x in self.knowledge.iter().chain(&self.popularity).chain(&self.knots) {
            h.u64(x.to_bits());
        }
        h.finish()
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn u64(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}
