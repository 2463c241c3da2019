use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{
    grpo_advantages, shuffled, Gradient, Monitor, ParamUpdater, Recorder, TrainConfig,
    TrainOutcome, ValueBaseline,
};
use crate::error::{Error, Result};
use crate::math::{exp, log_sum_exp};
use crate::policy::{features, Cdf, Features, RecallPolicy, ReferencePolicy, FEATURE_DIM};
use crate::reward::Verifier;
use crate::rng::{purpose, stream};
use crate::world::{FormId, QueryId};

/// One query's sampled answers with rewards and advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub query_id: QueryId,
    pub forms: Vec<FormId>,
    pub old_log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub mean_reward: f64,
    /// KL to the reference before the update, averaged over the batch.
    pub mean_kl: f64,
    pub clip_frac: f64,
    pub surrogate: f64,
}

/// `min(ρ·A, clip(ρ, 1−ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Samples `n` answers at `temperature`, records behaviour log-probs and
/// rewards. Advantages are left at zero.
pub fn rollout_group<R: Rng + ?Sized>(
    policy: &RecallPolicy,
    q: QueryId,
    verifier: &Verifier,
    n: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<RolloutGroup> {
    let fact = *policy.universe().fact(q)?;
    let logits = policy.logits(q)?;
    let lse = log_sum_exp(&logits);
    let probs = policy.probs(q, temperature)?;
    let cdf = Cdf::new(&probs);
    let forms: Vec<FormId> = (0..n).map(|_| cdf.draw(rng)).collect();
    let old_log_probs = forms.iter().map(|f| logits[f.index()] - lse).collect();
    let rewards = verifier.reward_group(&forms, &fact)?;
    Ok(RolloutGroup {
        query_id: q,
        forms,
        old_log_probs,
        rewards,
        advantages: vec![0.0; n],
    })
}

/// One clipped-surrogate ascent step with an exact KL penalty.
///
/// Objective: mean over samples of `min(ρA, clip(ρ)A)` minus `β` times the
/// batch-mean KL to `reference`.
pub fn grpo_step(
    policy: &mut RecallPolicy,
    reference: &ReferencePolicy,
    groups: &[RolloutGroup],
    cfg: &TrainConfig,
    updater: &mut ParamUpdater,
    step: usize,
) -> Result<StepStats> {
    if groups.is_empty() {
        return Ok(StepStats::default());
    }
    let n_queries = groups.len() as f64;
    let mut grad = Gradient::default();
    let mut stats = StepStats::default();
    let mut n_samples = 0usize;
    let mut n_clipped = 0usize;

    for g in groups {
        if g.forms.len() != g.advantages.len() || g.forms.len() != g.old_log_probs.len() {
            return Err(Error::arg("rollout group fields have unequal lengths"));
        }
        let q = g.query_id;
        let view = policy.view(q)?;
        let lse = log_sum_exp(&view.logits);
        let ref_logits = reference.logits(q)?;
        let ref_lse = log_sum_exp(&ref_logits);

        // Gradient with respect to this query's logits.
        let mut g_logits: Vec<f64> = vec![0.0; view.logits.len()];
        let inv_n = 1.0 / g.forms.len() as f64;
        let mut coeff_sum = 0.0;
        for ((&form, &old), &adv) in g.forms.iter().zip(&g.old_log_probs).zip(&g.advantages) {
            let lp = view.logits[form.index()] - lse;
            let ratio = exp(lp - old);
            stats.surrogate += clipped_surrogate(ratio, adv, cfg.clip_eps);
            n_samples += 1;
            let binding = (adv > 0.0 && ratio > 1.0 + cfg.clip_eps)
                || (adv < 0.0 && ratio < 1.0 - cfg.clip_eps);
            if binding {
                n_clipped += 1;
                continue;
            }
            let c = adv * ratio * inv_n;
            g_logits[form.index()] += c;
            coeff_sum += c;
        }
        // Σ_i c_i (e_{a_i} − π)
        for (gl, &p) in g_logits.iter_mut().zip(&view.probs) {
            *gl -= coeff_sum * p;
        }

        let mut kl = 0.0;
        let log_ratio: Vec<f64> = view
            .logits
            .iter()
            .zip(&ref_logits)
            .map(|(&a, &b)| (a - lse) - (b - ref_lse))
            .collect();
        for (&p, &lr) in view.probs.iter().zip(&log_ratio) {
            if p > 0.0 {
                kl += p * lr;
            }
        }
        stats.mean_kl += kl.max(0.0);
        if cfg.kl_beta > 0.0 {
            for ((gl, &p), &lr) in g_logits.iter_mut().zip(&view.probs).zip(&log_ratio) {
                *gl -= cfg.kl_beta * p * (lr - kl);
            }
        }

        let gw = logit_grad_to_w(policy, q, &g_logits);
        grad.add_w(1.0 / n_queries, &gw);
        if policy.delta_row(q).is_some() {
            grad.rows.push((q, g_logits));
        }
        stats.mean_reward += g.rewards.iter().sum::<f64>();
    }

    stats.mean_reward /= n_samples.max(1) as f64;
    stats.surrogate /= n_samples.max(1) as f64;
    stats.mean_kl /= n_queries;
    stats.clip_frac = n_clipped as f64 / n_samples.max(1) as f64;
    updater.ascend(policy, &grad, step)?;
    Ok(stats)
}

/// Chain rule from a query's logit gradient to the shared weights.
pub(crate) fn logit_grad_to_w(policy: &RecallPolicy, q: QueryId, g_logits: &[f64]) -> Features {
    let u = policy.universe();
    let k_row = u.knowledge_row(q);
    let mut out = [0.0; FEATURE_DIM];
    for ((&g, &k), &p) in g_logits.iter().zip(k_row).zip(&u.popularity) {
        if g == 0.0 {
            continue;
        }
        let f = features(k, p, &u.knots);
        for (o, x) in out.iter_mut().zip(f) {
            *o += g * x;
        }
    }
    out
}

enum AdvantageRule {
    Group,
    Baseline(ValueBaseline),
}

/// GRPO: `epochs` passes over shuffled batches of `train`, `group_size`
/// rollouts per query, group-standardized advantages, one update per batch.
/// The reference is the initial policy.
pub fn train_grpo(
    policy: RecallPolicy,
    train: &[QueryId],
    verifier: &Verifier,
    cfg: &TrainConfig,
    monitor: Option<Monitor<'_>>,
) -> Result<TrainOutcome> {
    train_rl(policy, train, verifier, cfg, monitor, AdvantageRule::Group)
}

/// PPO variant: identical loop, advantages `r − V(q)` against a per-query
/// reward EMA instead of group standardization.
pub fn train_ppo(
    policy: RecallPolicy,
    train: &[QueryId],
    verifier: &Verifier,
    cfg: &TrainConfig,
    monitor: Option<Monitor<'_>>,
) -> Result<TrainOutcome> {
    let rule = AdvantageRule::Baseline(ValueBaseline::new(cfg.ppo_value_decay));
    train_rl(policy, train, verifier, cfg, monitor, rule)
}

fn train_rl(
    mut policy: RecallPolicy,
    train: &[QueryId],
    verifier: &Verifier,
    cfg: &TrainConfig,
    monitor: Option<Monitor<'_>>,
    mut rule: AdvantageRule,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::arg("empty training set"));
    }
    let reference = policy.clone_as_reference();
    policy.ensure_delta_rows(train)?;
    let mut updater = ParamUpdater::new(cfg);
    let mut recorder = Recorder::start(monitor, cfg.eval_every, &policy)?;
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let order = shuffled(train, cfg.seed, epoch);
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let mut groups = Vec::with_capacity(batch.len());
            for &q in batch {
                let mut rng = stream(cfg.seed, &[purpose::ROLLOUT, step as u64, q.0 as u64]);
                let mut g = rollout_group(
                    &policy,
                    q,
                    verifier,
                    cfg.group_size,
                    cfg.rollout_temperature,
                    &mut rng,
                )?;
                g.advantages = match &mut rule {
                    AdvantageRule::Group => grpo_advantages(&g.rewards)?,
                    AdvantageRule::Baseline(v) => {
                        let a = v.advantages(q, &g.rewards);
                        v.observe(q, &g.rewards);
                        a
                    }
                };
                groups.push(g);
            }
            let stats = grpo_step(&mut policy, &reference, &groups, cfg, &mut updater, step)?;
            recorder.record(
                step,
                &policy,
                Some(stats.mean_reward),
                Some(stats.mean_kl),
                Some(stats.clip_frac),
                false,
            )?;
        }
    }
    let log = recorder.finish(&policy)?;
    Ok(TrainOutcome { policy, reference, log })
}

