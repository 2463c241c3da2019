use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{mean_kl, shuffled, Gradient, Monitor, ParamUpdater, Recorder, TrainConfig, TrainOutcome};
use crate::error::{Error, Result};
use crate::math::exp;
use crate::policy::{Cdf, RecallPolicy};
use crate::reward::Verifier;
use crate::rng::{purpose, stream};
use crate::world::{FormId, QueryId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PreferencePair {
    pub query: QueryId,
    pub chosen: FormId,
    pub rejected: FormId,
}

/// Gold canonical form versus the modal incorrect answer among
/// `n_candidates` samples (ties to the lowest form id). Queries without any
/// incorrect sample are dropped.
pub fn build_dpo_pairs(
    policy: &RecallPolicy,
    train: &[QueryId],
    n_candidates: usize,
    temperature: f64,
    seed: u64,
) -> Result<Vec<PreferencePair>> {
    let universe = policy.universe();
    let verifier = Verifier::semantic(universe);
    let mut pairs = Vec::new();
    for &q in train {
        let fact = *universe.fact(q)?;
        let cdf = Cdf::new(&policy.probs(q, temperature)?);
        let mut rng = stream(seed, &[purpose::DPO, q.0 as u64]);
        let mut counts: BTreeMap<FormId, usize> = BTreeMap::new();
        for _ in 0..n_candidates {
            let f = cdf.draw(&mut rng);
            if verifier.verify(f, &fact)? == 0.0 {
                *counts.entry(f).or_default() += 1;
            }
        }
        if let Some(rejected) = modal_form(&counts) {
            pairs.push(PreferencePair {
                query: q,
                chosen: universe.canonical_form(fact.answer),
                rejected,
            });
        }
    }
    Ok(pairs)
}

fn modal_form(counts: &BTreeMap<FormId, usize>) -> Option<FormId> {
    // BTreeMap iterates in id order; strict `>` keeps the lowest id on ties.
    let mut best: Option<(FormId, usize)> = None;
    for (&f, &c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((f, c));
        }
    }
    best.map(|(f, _)| f)
}

/// `−ln σ(β · margin)` where `margin` is the chosen-minus-rejected
/// difference of policy-to-reference log ratios.
pub fn dpo_loss(margin: f64, beta: f64) -> f64 {
    let z = beta * margin;
    // −ln σ(z) = ln(1 + e^{−z}), evaluated without overflow.
    if z > 0.0 {
        libm::log1p(exp(-z))
    } else {
        -z + libm::log1p(exp(z))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + exp(-z))
    } else {
        let e = exp(z);
        e / (1.0 + e)
    }
}

/// Direct preference optimization against the initial-policy snapshot.
pub fn train_dpo(
    mut policy: RecallPolicy,
    pairs: &[PreferencePair],
    cfg: &TrainConfig,
    monitor: Option<Monitor<'_>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::arg("no preference pairs"));
    }
    let reference = policy.clone_as_reference();
    let queries: Vec<QueryId> = pairs.iter().map(|p| p.query).collect();
    policy.ensure_delta_rows(&queries)?;
    let mut updater = ParamUpdater::new(cfg);
    let mut recorder = Recorder::start(monitor, cfg.eval_every, &policy)?;
    let order_ids: Vec<QueryId> = (0..pairs.len() as u32).map(QueryId).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let order = shuffled(&order_ids, cfg.seed, epoch);
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let mut grad = Gradient::default();
            let inv = 1.0 / chunk.len() as f64;
            for i in chunk {
                let pair = pairs[i.index()];
                let q = pair.query;
                let margin = (policy.log_prob(q, pair.chosen)? - reference.log_prob(q, pair.chosen)?)
                    - (policy.log_prob(q, pair.rejected)? - reference.log_prob(q, pair.rejected)?);
                // Ascent on −loss: β σ(−β m) (∇ log π(ch) − ∇ log π(rej)).
                let coeff = cfg.dpo_beta * sigmoid(-cfg.dpo_beta * margin);
                let fc = policy.form_features(q, pair.chosen);
                let fr = policy.form_features(q, pair.rejected);
                let mut diff = [0.0; crate::policy::FEATURE_DIM];
                for k in 0..diff.len() {
                    diff[k] = fc[k] - fr[k];
                }
                grad.add_w(coeff * inv, &diff);
                if let Some(row) = policy.delta_row(q) {
                    let mut g = vec![0.0; row.len()];
                    g[pair.chosen.index()] += coeff;
                    g[pair.rejected.index()] -= coeff;
                    grad.rows.push((q, g));
                }
            }
            updater.ascend(&mut policy, &grad, step)?;
            let qs: Vec<QueryId> = chunk.iter().map(|i| pairs[i.index()].query).collect();
            let kl = mean_kl(&policy, &reference, &qs)?;
            recorder.record(step, &policy, None, Some(kl), None, false)?;
        }
    }
    let log = recorder.finish(&policy)?;
    Ok(TrainOutcome { policy, reference, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_margin_loss_is_ln2() {
        assert!((dpo_loss(0.0, 0.1) - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn large_margin_loss_vanishes() {
        assert!(dpo_loss(1e4, 0.1) < 1e-300_f64.max(1e-12));
        assert!(dpo_loss(-1e4, 0.1) > 999.0);
    }

    #[test]
    fn modal_ties_go_to_lowest_id() {
        let mut c = BTreeMap::new();
        c.insert(FormId(9), 5);
        c.insert(FormId(4), 5);
        c.insert(FormId(2), 1);
        assert_eq!(modal_form(&c), Some(FormId(4)));
        assert_eq!(modal_form(&BTreeMap::new()), None);
    }
}
