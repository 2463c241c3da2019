use super::{AccessibilityMixture, AliasConfig, DistractorNoise, PopularDistractor, WorldConfig};

pub(crate) fn small_config() -> WorldConfig {
    WorldConfig {
        n_entities: 40,
        n_relations: 5,
        n_facts: 100,
        vocab_size: 70,
        accessibility_mixture: AccessibilityMixture {
            reachable_weight: 0.7,
            reachable_mean: 5.0,
            reachable_std: 1.5,
            ceiling_offset: 0.3,
            ceiling_std: 0.3,
        },
        distractor_noise: DistractorNoise {
            mean: 0.0,
            std: 1.0,
            ceiling_sigmas: 3.0,
        },
        popularity_zipf_exponent: 1.0,
        suppression_strength: 3.0,
        aliases_per_entity: AliasConfig {
            min: 0,
            max: 2,
            score_gap_max: 1.0,
            score_lead_max: 0.0,
            popularity_factor: 0.5,
        },
        noise_floor_fraction: 0.0,
        answer_popularity_bias: 0.0,
        popular_distractor: PopularDistractor {
            pool_size: 5,
            score_mean: 3.0,
            score_std: 1.0,
        },
    }
}
