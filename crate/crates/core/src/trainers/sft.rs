use alloc::vec::Vec;

use rand::Rng;

use super::rl::rollout_group;
use super::{mean_kl, shuffled, Gradient, Monitor, ParamUpdater, Recorder, TrainConfig, TrainOutcome};
use crate::error::{Error, Result};
use crate::eval::greedy_accuracy;
use crate::policy::{RecallPolicy, ReferencePolicy};
use crate::reward::Verifier;
use crate::rng::{purpose, stream};
use crate::world::{FormId, QueryId};

/// One ascent step on the mean log-likelihood of `targets`.
fn likelihood_step(
    policy: &mut RecallPolicy,
    targets: &[(QueryId, FormId)],
    updater: &mut ParamUpdater,
    step: usize,
) -> Result<()> {
    let mut grad = Gradient::default();
    let inv = 1.0 / targets.len() as f64;
    for &(q, form) in targets {
        let view = policy.view(q)?;
        let g = policy.grad_log_prob_from_view(&view, form);
        grad.add_w(inv, &g.w);
        if let Some(row) = g.delta {
            grad.rows.push((q, row));
        }
    }
    // A query may appear twice in one batch; merge its rows.
    grad.rows.sort_by_key(|(q, _)| *q);
    grad.rows.dedup_by(|b, a| {
        if a.0 == b.0 {
            for (x, y) in a.1.iter_mut().zip(&b.1) {
                *x += y;
            }
            true
        } else {
            false
        }
    });
    updater.ascend(policy, &grad, step)
}

#[allow(clippy::too_many_arguments)]
fn likelihood_epoch(
    policy: &mut RecallPolicy,
    reference: &ReferencePolicy,
    targets: &[(QueryId, FormId)],
    cfg: &TrainConfig,
    shuffle_tag: usize,
    updater: &mut ParamUpdater,
    recorder: &mut Recorder<'_>,
    step: &mut usize,
    mean_reward: Option<f64>,
) -> Result<()> {
    let order: Vec<QueryId> = (0..targets.len() as u32).map(QueryId).collect();
    let order = shuffled(&order, cfg.seed, shuffle_tag);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for chunk in order.chunks(cfg.batch_size) {
        *step += 1;
        batch.clear();
        batch.extend(chunk.iter().map(|i| targets[i.index()]));
        likelihood_step(policy, &batch, updater, *step)?;
        let qs: Vec<QueryId> = batch.iter().map(|t| t.0).collect();
        let kl = mean_kl(policy, reference, &qs)?;
        recorder.record(*step, policy, mean_reward, Some(kl), None, false)?;
    }
    Ok(())
}

/// Supervised fine-tuning on the canonical gold form of every train query.
pub fn train_sft(
    mut policy: RecallPolicy,
    train: &[QueryId],
    cfg: &TrainConfig,
    monitor: Option<Monitor<'_>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::arg("empty training set"));
    }
    let universe = policy.universe().clone();
    let targets: Vec<(QueryId, FormId)> = train
        .iter()
        .map(|&q| Ok((q, universe.canonical_form(universe.fact(q)?.answer))))
        .collect::<Result<_>>()?;
    let reference = policy.clone_as_reference();
    policy.ensure_delta_rows(train)?;
    let mut updater = ParamUpdater::new(cfg);
    let mut recorder = Recorder::start(monitor, cfg.eval_every, &policy)?;
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        likelihood_epoch(
            &mut policy,
            &reference,
            &targets,
            cfg,
            epoch,
            &mut updater,
            &mut recorder,
            &mut step,
            None,
        )?;
    }
    let log = recorder.finish(&policy)?;
    Ok(TrainOutcome { policy, reference, log })
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RftSummary {
    pub iterations: usize,
    pub skipped: usize,
    pub stopped_early: bool,
    pub validation: Vec<f64>,
}

/// Iterative rejection-sampling fine-tuning.
///
/// Each iteration samples `rft_candidates` answers per train query from the
/// current policy, keeps one random verified-correct answer per query that
/// has any, and runs one likelihood epoch on those targets. Stops after
/// `rft_iterations` or when validation accuracy has not improved for
/// `rft_patience` consecutive iterations. Skipped iterations (no correct
/// samples at all) count as non-improving.
pub fn train_rft(
    mut policy: RecallPolicy,
    train: &[QueryId],
    validation: &[QueryId],
    verifier: &Verifier,
    cfg: &TrainConfig,
    monitor: Option<Monitor<'_>>,
) -> Result<(TrainOutcome, RftSummary)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::arg("empty training set"));
    }
    if validation.is_empty() {
        return Err(Error::arg("RFT needs a validation split"));
    }
    let reference = policy.clone_as_reference();
    policy.ensure_delta_rows(train)?;
    let mut updater = ParamUpdater::new(cfg);
    let mut recorder = Recorder::start(monitor, cfg.eval_every, &policy)?;
    let mut summary = RftSummary::default();
    let mut best = greedy_accuracy(&policy, validation, verifier)?;
    let mut stale = 0;
    let mut step = 0;

    for iter in 0..cfg.rft_iterations {
        summary.iterations += 1;
        let mut targets = Vec::new();
        let mut hits = 0.0;
        let mut drawn = 0.0;
        for &q in train {
            let mut rng = stream(cfg.seed, &[purpose::RFT, iter as u64, q.0 as u64]);
            let g = rollout_group(
                &policy,
                q,
                verifier,
                cfg.rft_candidates,
                cfg.rollout_temperature,
                &mut rng,
            )?;
            hits += g.rewards.iter().sum::<f64>();
            drawn += g.rewards.len() as f64;
            let correct: Vec<FormId> = g
                .forms
                .iter()
                .zip(&g.rewards)
                .filter(|(_, &r)| r > 0.0)
                .map(|(&f, _)| f)
                .collect();
            if !correct.is_empty() {
                targets.push((q, correct[rng.gen_range(0..correct.len())]));
            }
        }
        if targets.is_empty() {
            log::warn!("RFT iteration {iter}: no correct samples, skipping");
            summary.skipped += 1;
        } else {
            likelihood_epoch(
                &mut policy,
                &reference,
                &targets,
                cfg,
                1_000 + iter,
                &mut updater,
                &mut recorder,
                &mut step,
                Some(hits / drawn),
            )?;
        }
        let acc = greedy_accuracy(&policy, validation, verifier)?;
        summary.validation.push(acc);
        if acc > best {
            best = acc;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.rft_patience {
                summary.stopped_early = iter + 1 < cfg.rft_iterations;
                break;
            }
        }
    }
    let log = recorder.finish(&policy)?;
    Ok((TrainOutcome { policy, reference, log }, summary))
}
