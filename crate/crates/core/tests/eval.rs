mod common;

use std::collections::HashSet;

use common::{right_and_wrong, row, with_logits, world};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recall_gym_core::eval::{
    majority_vote, pass_at_k, pass_at_k_curve, repair_rate, PassKEstimator, DEFAULT_KS,
};
use recall_gym_core::world::measure_accessibility;
use recall_gym_core::{QueryId, RecallPolicy, Verifier};

#[test]
fn pass_at_k_matches_a_prefix_simulation() {
    assert_eq!(pass_at_k(2, 4, 2).unwrap(), 5.0 / 6.0);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let trials = 100_000;
    for _ in 0..20 {
        let n = rng.gen_range(1..=30);
        let c = rng.gen_range(0..=n);
        let k = rng.gen_range(1..=n);
        let est = pass_at_k(c, n, k).unwrap();
        let mut pool: Vec<bool> = (0..n).map(|i| i < c).collect();
        let mut hits = 0usize;
        for _ in 0..trials {
            pool.shuffle(&mut rng);
            hits += pool[..k].iter().any(|&b| b) as usize;
        }
        let mc = hits as f64 / trials as f64;
        let sigma = (est * (1.0 - est) / trials as f64).sqrt();
        assert!((mc - est).abs() <= 3.0 * sigma, "(c={c}, n={n}, k={k}): {est} vs {mc}");
    }
}

#[test]
fn pass_at_k_extremes() {
    for k in 1..=8 {
        assert_eq!(pass_at_k(0, 8, k).unwrap(), 0.0);
        assert_eq!(pass_at_k(8, 8, k).unwrap(), 1.0);
    }
}

/// Queries 0..n with logits shaped so the canonical correct form has
/// probability `p_right` and a single wrong form takes the rest.
fn two_form_policy(n: u32, p_right: f64) -> (RecallPolicy, Vec<QueryId>) {
    let u = world(12);
    let queries: Vec<QueryId> = (0..n).map(QueryId).collect();
    let mut policy = RecallPolicy::with_weights(u.clone(), [0.0; 7]);
    policy.ensure_delta_rows(&queries).unwrap();
    for &q in &queries {
        let (right, wrong) = right_and_wrong(&u, q);
        let r = row(&u, -1e4, &[(right, p_right.ln()), (wrong, (1.0 - p_right).ln())]);
        policy.delta_row_mut(q).unwrap().copy_from_slice(&r);
    }
    (policy, queries)
}

#[test]
fn accessibility_counts_follow_the_binomial() {
    let (p, qs) = two_form_policy(40, 0.1);
    let prof = measure_accessibility(&p, &qs, 128, 1.0, 3).unwrap();
    // 99.9% two-sided band of Binomial(128, 0.1).
    let (mean, sd) = (12.8, (128.0f64 * 0.1 * 0.9).sqrt());
    for e in &prof.entries {
        assert!((e.correct_count as f64 - mean).abs() <= 3.29 * sd, "c = {}", e.correct_count);
    }
    let avg = prof.entries.iter().map(|e| e.correct_count as f64).sum::<f64>() / qs.len() as f64;
    assert!((avg - mean).abs() <= 3.0 * sd / (qs.len() as f64).sqrt());

    let (sure, qs) = two_form_policy(5, 1.0 - 1e-300);
    assert!(measure_accessibility(&sure, &qs, 128, 1.0, 3).unwrap().entries.iter().all(|e| e.correct_count == 128));
    let (never, qs) = two_form_policy(5, 1e-300);
    assert!(measure_accessibility(&never, &qs, 128, 1.0, 3).unwrap().entries.iter().all(|e| e.correct_count == 0));
}

#[test]
fn pass_at_k_curve_oracles() {
    let (sure, qs) = two_form_policy(10, 1.0 - 1e-300);
    let v = Verifier::semantic(sure.universe());
    let flat = pass_at_k_curve(&sure, &qs, &v, 256, &DEFAULT_KS, 1.0, 0, PassKEstimator::Unbiased).unwrap();
    assert!(flat.points.iter().all(|&(_, x)| x == 1.0));

    let (half, qs) = two_form_policy(60, 0.5);
    let curve = pass_at_k_curve(&half, &qs, &v, 256, &[1], 1.0, 0, PassKEstimator::Unbiased).unwrap();
    // Each per-query estimate at k = 1 is c/256.
    let sigma = (0.25 / (256.0 * qs.len() as f64)).sqrt();
    assert!((curve.at(1).unwrap() - 0.5).abs() <= 3.0 * sigma);
}

#[test]
fn majority_vote_follows_the_dominant_mode() {
    let u = world(13);
    let q = QueryId(4);
    let (right, wrong) = right_and_wrong(&u, q);
    let v = Verifier::semantic(&u);
    let p = with_logits(&u, q, &row(&u, -1e4, &[(right, 0.3f64.ln()), (wrong, 0.6f64.ln())]));
    let other = u.canonical.iter().copied().find(|&f| f != right && f != wrong && u.entity_of(f) != u.entity_of(right)).unwrap();
    let p = {
        let mut p = p;
        p.delta_row_mut(q).unwrap()[other.index()] = 0.1f64.ln();
        p
    };
    // Multinomial oracle: the correct entity wins when it outnumbers the
    // wrong one; ties go to whichever appeared first.
    let m: u64 = 32;
    let (mut strict, mut tie) = (0.0, 0.0);
    for a in 0..=m {
        for b in 0..=m - a {
            let c = m - a - b;
            let pr = ln_choose(m, a) + ln_choose(m - a, b) + a as f64 * 0.3f64.ln() + b as f64 * 0.6f64.ln() + c as f64 * 0.1f64.ln();
            let pr = pr.exp();
            if a > b && a > c {
                strict += pr;
            } else if a == b && a > c {
                tie += pr;
            }
        }
    }
    let trials = 4000;
    let wins: f64 = (0..trials).map(|s| majority_vote(&p, q, &v, m as usize, 1.0, s).unwrap()).sum();
    let rate = wins / trials as f64;
    let sigma = ((strict + tie) * (1.0 - strict) / trials as f64).sqrt();
    assert!(strict + tie < 0.05);
    assert!(rate >= strict - 3.0 * sigma && rate <= strict + tie + 3.0 * sigma, "{rate} vs [{strict}, {}]", strict + tie);
    let sure = with_logits(&u, q, &row(&u, -1e4, &[(right, 0.0)]));
    assert_eq!(majority_vote(&sure, q, &v, 32, 1.0, 0).unwrap(), 1.0);
}

fn ln_choose(n: u64, k: u64) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

#[test]
fn repair_extremes() {
    let u = world(14);
    let v = Verifier::semantic(&u);
    let test = u.all_queries();
    let pre = RecallPolicy::base(u.clone());
    let profile = measure_accessibility(&pre, &test, 128, 1.0, 0).unwrap();
    let same = repair_rate(&pre, &pre, &test, &v, &profile).unwrap();
    assert!(same.bins.iter().all(|b| b.repaired == 0));

    let mut oracle = RecallPolicy::with_weights(u.clone(), [0.0; 7]);
    oracle.ensure_delta_rows(&test).unwrap();
    for &q in &test {
        let gold = u.canonical_form(u.fact(q).unwrap().answer);
        oracle.delta_row_mut(q).unwrap()[gold.index()] = 10.0;
    }
    let full = repair_rate(&pre, &oracle, &test, &v, &profile).unwrap();
    assert!(full.bins.iter().all(|b| b.rate.is_none_or(|r| r == 1.0)));
    let failed: HashSet<QueryId> = test
        .iter()
        .copied()
        .filter(|&q| v.verify(pre.greedy(q).unwrap(), u.fact(q).unwrap()).unwrap() == 0.0)
        .collect();
    assert_eq!(full.bins.iter().map(|b| b.n_queries).sum::<usize>(), failed.len());
}
