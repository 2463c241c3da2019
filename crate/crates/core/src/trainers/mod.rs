//! GRPO, PPO, SFT, RFT and DPO over a [`RecallPolicy`].
//!
//! All trainers share one convention for the two parameter groups: the
//! shared transform `w` follows the gradient of the batch-mean objective at
//! `learning_rate`, while each delta row follows the gradient of its own
//! query's objective at `delta_learning_rate`.

mod advantages;
mod dpo;
mod dynamics;
mod optim;
mod rl;
mod sft;

pub use advantages::{grpo_advantages, ValueBaseline};
pub use dpo::{build_dpo_pairs, dpo_loss, train_dpo, PreferencePair};
pub use dynamics::{DynamicsLog, DynamicsRow, Phase};
pub use optim::{Gradient, Optimizer, ParamUpdater};
pub use rl::{
    clipped_surrogate, grpo_step, rollout_group, train_grpo, train_ppo, RolloutGroup, StepStats,
};
pub use sft::{train_rft, train_sft, RftSummary};

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::eval::greedy_accuracy;
use crate::policy::{RecallPolicy, ReferencePolicy};
use crate::reward::Verifier;
use crate::world::QueryId;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Step size for per-query delta rows.
    pub delta_learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub group_size: usize,
    pub kl_beta: f64,
    pub clip_eps: f64,
    pub rollout_temperature: f64,
    pub seed: u64,
    pub eval_every: usize,
    /// Optimizer for `w`.
    pub optimizer: Optimizer,
    /// Optimizer for delta rows.
    pub delta_optimizer: Optimizer,
    pub dpo_beta: f64,
    pub dpo_candidates: usize,
    pub rft_candidates: usize,
    pub rft_iterations: usize,
    pub rft_patience: usize,
    pub ppo_value_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            delta_learning_rate: 1.0,
            batch_size: 128,
            epochs: 8,
            group_size: 5,
            kl_beta: 0.001,
            clip_eps: 0.2,
            rollout_temperature: 1.0,
            seed: 0,
            eval_every: 4,
            optimizer: Optimizer::Sgd,
            delta_optimizer: Optimizer::Sgd,
            dpo_beta: 0.1,
            dpo_candidates: 16,
            rft_candidates: 5,
            rft_iterations: 15,
            rft_patience: 5,
            ppo_value_decay: 0.9,
        }
    }
}

impl TrainConfig {
    /// Hyperparameters as reported for billion-parameter models. Far too
    /// slow for a seven-weight transform; kept for provenance.
    pub fn reported_llm_defaults() -> Self {
        TrainConfig {
            learning_rate: 1e-6,
            delta_learning_rate: 1e-6,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch_size and epochs must be positive"));
        }
        if self.group_size < 2 {
            return Err(Error::config("group_size must be at least 2"));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::config("clip_eps must lie in (0, 1)"));
        }
        if self.kl_beta < 0.0 || self.dpo_beta <= 0.0 {
            return Err(Error::config("kl_beta must be >= 0 and dpo_beta > 0"));
        }
        if !(self.rollout_temperature > 0.0) {
            return Err(Error::config("rollout_temperature must be positive"));
        }
        if self.learning_rate < 0.0 || self.delta_learning_rate < 0.0 {
            return Err(Error::config("learning rates must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.ppo_value_decay) {
            return Err(Error::config("ppo_value_decay must lie in [0, 1)"));
        }
        if self.eval_every == 0 || self.dpo_candidates == 0 || self.rft_candidates == 0 {
            return Err(Error::config("eval_every and candidate counts must be positive"));
        }
        Ok(())
    }
}

/// Queries tracked by the dynamics log. Accuracies use `verifier`, which is
/// independent of the reward verifier a trainer optimizes against.
#[derive(Debug, Clone, Copy)]
pub struct Monitor<'a> {
    pub train: &'a [QueryId],
    pub test: &'a [QueryId],
    pub verifier: &'a Verifier,
}

impl Monitor<'_> {
    fn accuracies(&self, policy: &RecallPolicy) -> Result<(Option<f64>, Option<f64>)> {
        let acc = |qs: &[QueryId]| -> Result<Option<f64>> {
            if qs.is_empty() {
                Ok(None)
            } else {
                greedy_accuracy(policy, qs, self.verifier).map(Some)
            }
        };
        Ok((acc(self.train)?, acc(self.test)?))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: RecallPolicy,
    pub reference: ReferencePolicy,
    pub log: DynamicsLog,
}

pub(crate) fn mean_kl(policy: &RecallPolicy, reference: &ReferencePolicy, qs: &[QueryId]) -> Result<f64> {
    if qs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &q in qs {
        total += policy.kl_to_reference(reference, q)?;
    }
    Ok(total / qs.len() as f64)
}

/// Shared bookkeeping for the epoch/batch trainers.
pub(crate) struct Recorder<'a> {
    pub log: DynamicsLog,
    monitor: Option<Monitor<'a>>,
    eval_every: usize,
}

impl<'a> Recorder<'a> {
    pub fn start(
        monitor: Option<Monitor<'a>>,
        eval_every: usize,
        policy: &RecallPolicy,
    ) -> Result<Self> {
        let mut r = Recorder { log: DynamicsLog::default(), monitor, eval_every };
        let (train_acc, test_acc) = r.eval(policy)?;
        r.log.push(DynamicsRow {
            step: 0,
            phase: Phase::Eval,
            mean_reward: None,
            train_acc,
            test_acc,
            mean_kl: Some(0.0),
            clip_frac: None,
        });
        Ok(r)
    }

    fn eval(&self, policy: &RecallPolicy) -> Result<(Option<f64>, Option<f64>)> {
        match &self.monitor {
            Some(m) => m.accuracies(policy),
            None => Ok((None, None)),
        }
    }

    pub fn record(
        &mut self,
        step: usize,
        policy: &RecallPolicy,
        mean_reward: Option<f64>,
        mean_kl: Option<f64>,
        clip_frac: Option<f64>,
        force_eval: bool,
    ) -> Result<()> {
        let eval_now = force_eval || step.is_multiple_of(self.eval_every);
        let (train_acc, test_acc) = if eval_now && self.monitor.is_some() {
            self.eval(policy)?
        } else {
            (None, None)
        };
        self.log.push(DynamicsRow {
            step,
            phase: if eval_now { Phase::Eval } else { Phase::Train },
            mean_reward,
            train_acc,
            test_acc,
            mean_kl,
            clip_frac,
        });
        Ok(())
    }

    /// Marks the last row as an evaluation row, filling accuracies.
    pub fn finish(mut self, policy: &RecallPolicy) -> Result<DynamicsLog> {
        let (train_acc, test_acc) = self.eval(policy)?;
        if let Some(last) = self.log.rows.last_mut() {
            if last.step > 0 {
                last.phase = Phase::Eval;
                last.train_acc = train_acc;
                last.test_acc = test_acc;
            }
        }
        Ok(self.log)
    }
}

pub(crate) fn shuffled(queries: &[QueryId], seed: u64, epoch: usize) -> Vec<QueryId> {
    use rand::seq::SliceRandom;
    let mut order = queries.to_vec();
    order.shuffle(&mut crate::rng::stream(seed, &[crate::rng::purpose::SHUFFLE, epoch as u64]));
    order
}
