#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use recall_gym_core::world::{
    generate_universe, AccessibilityMixture, AliasConfig, DistractorNoise, PopularDistractor,
};
use recall_gym_core::{FactUniverse, FormId, QueryId, RecallPolicy, WorldConfig};

pub fn small_config() -> WorldConfig {
    WorldConfig {
        n_entities: 30,
        n_relations: 4,
        n_facts: 80,
        vocab_size: 50,
        accessibility_mixture: AccessibilityMixture {
            reachable_weight: 0.6,
            reachable_mean: 5.0,
            reachable_std: 1.2,
            ceiling_offset: 0.0,
            ceiling_std: 0.4,
        },
        distractor_noise: DistractorNoise { mean: 0.0, std: 1.0, ceiling_sigmas: 3.0 },
        popularity_zipf_exponent: 1.0,
        suppression_strength: 4.0,
        aliases_per_entity: AliasConfig { min: 0, max: 2, score_gap_max: 1.0, score_lead_max: 0.0, popularity_factor: 0.4 },
        noise_floor_fraction: 0.2,
        answer_popularity_bias: 0.5,
        popular_distractor: PopularDistractor { pool_size: 5, score_mean: 2.5, score_std: 0.5 },
    }
}

/// A small world with randomized generator parameters.
pub fn random_config<R: Rng>(rng: &mut R) -> WorldConfig {
    let mut c = small_config();
    c.n_entities = rng.gen_range(10..60);
    c.n_relations = rng.gen_range(2..8);
    c.n_facts = rng.gen_range(c.n_entities..=(c.n_entities * c.n_relations).min(200));
    c.vocab_size = c.n_entities + rng.gen_range(0..=c.n_entities);
    c.noise_floor_fraction = rng.gen_range(0.0..1.0);
    c.suppression_strength = rng.gen_range(0.0..8.0);
    c.popular_distractor.pool_size = rng.gen_range(1..c.n_entities);
    c
}

pub fn world(seed: u64) -> Arc<FactUniverse> {
    Arc::new(generate_universe(&small_config(), seed).unwrap())
}

/// Policy whose logits for `q` are exactly `row` (w = 0).
pub fn with_logits(u: &Arc<FactUniverse>, q: QueryId, row: &[f64]) -> RecallPolicy {
    let mut p = RecallPolicy::with_weights(u.clone(), [0.0; 7]);
    p.ensure_delta_rows(&[q]).unwrap();
    p.delta_row_mut(q).unwrap().copy_from_slice(row);
    p
}

/// Logit row with `floor` everywhere except the listed entries.
pub fn row(u: &FactUniverse, floor: f64, entries: &[(FormId, f64)]) -> Vec<f64> {
    let mut r = vec![floor; u.vocab_size()];
    for &(f, x) in entries {
        r[f.index()] = x;
    }
    r
}

/// Canonical correct form and the canonical form of some wrong entity.
pub fn right_and_wrong(u: &FactUniverse, q: QueryId) -> (FormId, FormId) {
    let fact = u.fact(q).unwrap();
    let right = u.canonical_form(fact.answer);
    let wrong = u.canonical.iter().copied().find(|&f| u.entity_of(f) != Some(fact.answer)).unwrap();
    (right, wrong)
}
