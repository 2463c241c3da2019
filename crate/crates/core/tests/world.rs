mod common;

use std::collections::HashSet;

use common::{random_config, small_config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recall_gym_core::reward::Verifier;
use recall_gym_core::world::{deduplicate, generate_universe, split_dataset, SplitSizes};
use recall_gym_core::FormId;

#[test]
fn dedup_leaves_no_shared_fact_keys() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for seed in 0..100 {
        let u = generate_universe(&random_config(&mut rng), seed).unwrap();
        let n = u.n_facts();
        let train = rng.gen_range(1..n);
        let test = rng.gen_range(1..=n - train);
        let s = split_dataset(&u, SplitSizes { train, validation: 0, test }, seed).unwrap();
        // Overlap the splits on purpose so dedup has something to remove.
        let mut tests = s.test.clone();
        tests.extend(s.train.iter().take(5));
        let kept = deduplicate(&s.train, &tests, &u);
        let train_keys: HashSet<_> = s.train.iter().map(|&q| u.fact(q).unwrap().key()).collect();
        assert!(kept.iter().all(|&q| !train_keys.contains(&u.fact(q).unwrap().key())));
        // Nothing else is dropped.
        let dropped = tests.len() - kept.len();
        assert_eq!(dropped, tests.iter().filter(|&&q| train_keys.contains(&u.fact(q).unwrap().key())).count());
    }
}

#[test]
fn splits_partition_and_repeat() {
    let mut c = small_config();
    c.n_facts = 100;
    let u = generate_universe(&c, 2).unwrap();
    let sizes = SplitSizes { train: 80, validation: 10, test: 10 };
    let s = split_dataset(&u, sizes, 7).unwrap();
    let all: HashSet<_> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
    assert_eq!(all.len(), 100);
    assert!(s.is_disjoint());
    assert_eq!(split_dataset(&u, sizes, 7).unwrap(), s);
}

#[test]
fn generation_is_a_pure_function_of_config_and_seed() {
    let c = small_config();
    assert_eq!(generate_universe(&c, 5).unwrap(), generate_universe(&c, 5).unwrap());
    assert_ne!(generate_universe(&c, 5).unwrap().fingerprint(), generate_universe(&c, 6).unwrap().fingerprint());
}

#[test]
fn stored_answers_clear_the_distractor_ceiling() {
    let mut c = small_config();
    c.noise_floor_fraction = 0.0;
    let ceiling = c.distractor_noise.ceiling();
    for seed in 0..10 {
        let u = generate_universe(&c, seed).unwrap();
        for q in u.all_queries() {
            let row = u.knowledge_row(q);
            let gold = u.canonical_form(u.fact(q).unwrap().answer);
            assert!(row[gold.index()] > ceiling);
            let wrong_max = (0..u.vocab_size())
                .filter(|&v| u.entity_of(FormId(v as u32)) != Some(u.fact(q).unwrap().answer))
                .map(|v| row[v])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(wrong_max <= ceiling);
        }
    }
}

#[test]
fn leading_aliases_can_outscore_their_canonical_form() {
    let mut c = small_config();
    c.aliases_per_entity.min = 1;
    c.aliases_per_entity.score_lead_max = 1.0;
    c.vocab_size = c.n_entities * 3;
    let u = generate_universe(&c, 3).unwrap();
    let v = Verifier::semantic(&u);
    let mut above = 0;
    for q in u.all_queries() {
        let fact = u.fact(q).unwrap();
        let gold = u.canonical_form(fact.answer);
        let row = u.knowledge_row(q);
        for f in 0..u.vocab_size() {
            let f = FormId(f as u32);
            if f != gold && v.verify(f, fact).unwrap() == 1.0 {
                let d = row[f.index()] - row[gold.index()];
                assert!((-1.0..=1.0).contains(&d));
                above += (d > 0.0) as usize;
            }
        }
    }
    assert!(above > 0);
}
