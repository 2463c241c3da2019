use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    EntityId, Fact, FactUniverse, FormId, QueryId, RelationId, SurfaceForm, WorldConfig,
};
use crate::error::{Error, Result};
use crate::math::{ln, standard_normal};
use crate::rng::{purpose, stream, StreamRng};

const MAX_REJECTIONS: usize = 10_000;

/// Builds a universe from `config`. A pure function of `(config, seed)`.
///
/// Form ids `0..n_entities` are the canonical forms (form id == entity id);
/// aliases follow. Entity popularity follows `rank^-s` over a random ranking.
pub fn generate_universe(config: &WorldConfig, seed: u64) -> Result<FactUniverse> {
    config.validate()?;
    let mut rng = stream(seed, &[purpose::WORLD]);
    let n_e = config.n_entities;

    let mut ranks: Vec<usize> = (0..n_e).collect();
    ranks.shuffle(&mut rng);
    let entity_pop: Vec<f64> = ranks
        .iter()
        .map(|&r| libm::pow((r + 1) as f64, -config.popularity_zipf_exponent))
        .collect();
    let mut by_popularity: Vec<usize> = (0..n_e).collect();
    by_popularity.sort_by_key(|&e| ranks[e]);
    let pool: Vec<EntityId> = by_popularity
        .iter()
        .take(config.popular_distractor.pool_size.min(n_e))
        .map(|&e| EntityId(e as u32))
        .collect();

    // Vocabulary.
    let alias_counts = alias_counts(config, &mut rng);
    let mut vocab: Vec<SurfaceForm> = (0..n_e)
        .map(|e| SurfaceForm {
            id: FormId(e as u32),
            entity: EntityId(e as u32),
            is_canonical: true,
        })
        .collect();
    let mut popularity: Vec<f64> = entity_pop.clone();
    let mut aliases_of: Vec<Vec<FormId>> = vec![Vec::new(); n_e];
    for (e, &count) in alias_counts.iter().enumerate() {
        for _ in 0..count {
            let id = FormId(vocab.len() as u32);
            vocab.push(SurfaceForm {
                id,
                entity: EntityId(e as u32),
                is_canonical: false,
            });
            popularity.push(entity_pop[e] * config.aliases_per_entity.popularity_factor);
            aliases_of[e].push(id);
        }
    }
    debug_assert_eq!(vocab.len(), config.vocab_size);
    let v = vocab.len();

    // Facts: distinct (subject, relation) keys, answer != subject.
    let keys = rand::seq::index::sample(&mut rng, n_e * config.n_relations, config.n_facts);
    let answer_law = WeightedIndex::new(
        entity_pop
            .iter()
            .map(|&p| libm::pow(p, config.answer_popularity_bias)),
    )
    .map_err(|e| Error::config(alloc::format!("answer weights: {e}")))?;
    let mut facts = Vec::with_capacity(config.n_facts);
    for (i, key) in keys.iter().enumerate() {
        let subject = key / config.n_relations;
        let relation = key % config.n_relations;
        let mut answer = answer_law.sample(&mut rng);
        while answer == subject {
            answer = answer_law.sample(&mut rng);
        }
        facts.push(Fact {
            subject: EntityId(subject as u32),
            relation: RelationId(relation as u32),
            answer: EntityId(answer as u32),
            query_id: QueryId(i as u32),
        });
    }

    // Knowledge scores.
    let noise = config.distractor_noise;
    let ceiling = noise.ceiling();
    let mix = config.accessibility_mixture;
    let mut knowledge = vec![0.0; facts.len() * v];
    let mut noise_floor = vec![false; facts.len()];
    for (qi, fact) in facts.iter().enumerate() {
        let row = &mut knowledge[qi * v..(qi + 1) * v];
        for x in row.iter_mut() {
            *x = draw_distractor(&mut rng, config);
        }

        if let Some(d) = pick_popular(&mut rng, &pool, fact) {
            let pd = config.popular_distractor;
            row[d.index()] = draw_below(&mut rng, pd.score_mean, pd.score_std, ceiling);
        }

        let is_floor = rng.gen::<f64>() < config.noise_floor_fraction;
        noise_floor[qi] = is_floor;
        let z = if is_floor {
            draw_distractor(&mut rng, config)
        } else {
            let (mean, std) = if rng.gen::<f64>() < mix.reachable_weight {
                (mix.reachable_mean, mix.reachable_std)
            } else {
                (ceiling + mix.ceiling_offset, mix.ceiling_std)
            };
            draw_above(&mut rng, mean, std, ceiling)
        };
        let a = fact.answer.index();
        row[a] = z;
        for alias in &aliases_of[a] {
            let (gap, lead) = (config.aliases_per_entity.score_gap_max, config.aliases_per_entity.score_lead_max);
            row[alias.index()] = z + lead - (gap + lead) * rng.gen::<f64>();
        }
    }

    let knots = percentile_knots(&knowledge);

    Ok(FactUniverse {
        config: config.clone(),
        seed,
        entities: (0..n_e as u32).map(EntityId).collect(),
        relations: (0..config.n_relations as u32).map(RelationId).collect(),
        facts,
        vocab,
        knowledge,
        popularity,
        knots,
        canonical: (0..n_e as u32).map(FormId).collect(),
        noise_floor,
    })
}

fn alias_counts(config: &WorldConfig, rng: &mut StreamRng) -> Vec<usize> {
    let a = &config.aliases_per_entity;
    let n_e = config.n_entities;
    let mut counts = vec![a.min; n_e];
    let mut extra = config.vocab_size - n_e * (1 + a.min);
    let mut open: Vec<usize> = (0..n_e).filter(|&e| counts[e] < a.max).collect();
    while extra > 0 {
        let slot = rng.gen_range(0..open.len());
        let e = open[slot];
        counts[e] += 1;
        extra -= 1;
        if counts[e] == a.max {
            open.swap_remove(slot);
        }
    }
    counts
}

fn pick_popular(rng: &mut StreamRng, pool: &[EntityId], fact: &Fact) -> Option<EntityId> {
    let eligible = pool
        .iter()
        .filter(|&&e| e != fact.answer && e != fact.subject)
        .count();
    if eligible == 0 {
        return None;
    }
    let pick = rng.gen_range(0..eligible);
    pool.iter()
        .copied()
        .filter(|&e| e != fact.answer && e != fact.subject)
        .nth(pick)
}

fn draw_distractor(rng: &mut StreamRng, config: &WorldConfig) -> f64 {
    let n = config.distractor_noise;
    draw_below(rng, n.mean, n.std, n.ceiling())
}

/// Normal draw conditioned on not exceeding `ceiling`.
fn draw_below(rng: &mut StreamRng, mean: f64, std: f64, ceiling: f64) -> f64 {
    for _ in 0..MAX_REJECTIONS {
        let x = mean + std * standard_normal(rng);
        if x <= ceiling {
            return x;
        }
    }
    ceiling
}

/// Normal draw conditioned on exceeding `floor`. Falls back to an
/// exponential tail above the floor when the mass there is negligible.
fn draw_above(rng: &mut StreamRng, mean: f64, std: f64, floor: f64) -> f64 {
    if std > 0.0 {
        for _ in 0..MAX_REJECTIONS {
            let x = mean + std * standard_normal(rng);
            if x > floor {
                return x;
            }
        }
    } else if mean > floor {
        return mean;
    }
    let scale = if std > 0.0 { std } else { 1e-3 };
    floor - scale * ln(1.0 - rng.gen::<f64>()) + f64::EPSILON
}

fn percentile_knots(knowledge: &[f64]) -> [f64; 3] {
    let mut sorted = knowledge.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let at = |p: f64| sorted[((sorted.len() - 1) as f64 * p) as usize];
    let mut knots = [at(0.50), at(0.80), at(0.95)];
    // Keep strict ordering even for degenerate score laws.
    for i in 1..3 {
        if knots[i] <= knots[i - 1] {
            knots[i] = knots[i - 1] + 1e-9 * (1.0 + knots[i - 1].abs());
        }
    }
    knots
}
