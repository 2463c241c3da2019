//! One seed of an experiment, held in memory: generate → split → dedup →
//! (profile) → train → eval.

use std::collections::BTreeMap;
use std::sync::Arc;

use recall_gym_core::eval::{
    greedy_accuracy, noise_floor_repair, pass_at_k_curve, repair_rate, voting_accuracy, EvalReport,
    DEFAULT_KS,
};
use recall_gym_core::rng::derive;
use recall_gym_core::trainers::{
    build_dpo_pairs, train_dpo, train_grpo, train_ppo, train_rft, train_sft, DynamicsLog, Monitor,
    RftSummary, TrainConfig, TrainOutcome,
};
use recall_gym_core::world::{
    deduplicate, deduplicate_across, downsample_balanced, generate_universe, measure_accessibility,
    partition_by_accessibility, split_dataset, AccessibilityPartition, AccessibilityProfile,
    DatasetSplits, SplitSizes, ACCESSIBILITY_SAMPLES,
};
use recall_gym_core::{FactUniverse, QueryId, RecallPolicy, Verifier, WorldConfig};
use serde::{Deserialize, Serialize};

use crate::config::{EvalPlan, Resolved, TrainSubset, TrainerKind};
use crate::error::{Error, Result};

// Tags for seeds derived from the experiment seed.
const TAG_TRAIN_PROFILE: u64 = 101;
const TAG_TEST_PROFILE: u64 = 102;
const TAG_BALANCE: u64 = 103;
const TAG_PASSK: u64 = 104;
const TAG_VOTE: u64 = 105;
const TAG_DPO: u64 = 106;

/// A generated world with its splits and dedup'd test set.
#[derive(Debug, Clone)]
pub struct SeedWorld {
    pub seed: u64,
    pub universe: Arc<FactUniverse>,
    pub splits: DatasetSplits,
    /// Test split minus queries sharing a `(subject, relation)` with train.
    pub test: Vec<QueryId>,
    /// Semantic verifier used for every reported accuracy.
    pub judge: Verifier,
}

impl SeedWorld {
    pub fn new(world: &WorldConfig, sizes: SplitSizes, seed: u64) -> Result<Self> {
        let universe = Arc::new(generate_universe(world, seed)?);
        let splits = split_dataset(&universe, sizes, seed)?;
        let test = deduplicate(&splits.train, &splits.test, &universe);
        let judge = Verifier::semantic(&universe);
        Ok(SeedWorld { seed, universe, splits, test, judge })
    }

    pub fn base(&self) -> RecallPolicy {
        RecallPolicy::base(self.universe.clone())
    }

    pub fn accuracy(&self, policy: &RecallPolicy, queries: &[QueryId]) -> Result<f64> {
        Ok(greedy_accuracy(policy, queries, &self.judge)?)
    }

    pub fn train_profile(&self) -> Result<AccessibilityProfile> {
        let seed = derive(self.seed, &[TAG_TRAIN_PROFILE]);
        Ok(measure_accessibility(&self.base(), &self.splits.train, ACCESSIBILITY_SAMPLES, 1.0, seed)?)
    }

    pub fn train_partition(&self) -> Result<AccessibilityPartition> {
        Ok(partition_by_accessibility(&self.train_profile()?, &self.splits.train)?)
    }

    /// Training queries for `subset`. With `balance`, primaries are
    /// downsampled to a common size, and so are the pairwise unions.
    pub fn train_queries(&self, subset: TrainSubset, balance: bool) -> Result<Vec<QueryId>> {
        if subset == TrainSubset::All {
            return Ok(self.splits.train.clone());
        }
        let part = self.train_partition()?;
        let union = |a: &[QueryId], b: &[QueryId]| {
            let mut v: Vec<QueryId> = a.iter().chain(b).copied().collect();
            v.sort_unstable();
            v
        };
        let primaries = [part.inaccessible.clone(), part.partial.clone(), part.high.clone()];
        let pairs = [
            union(&part.inaccessible, &part.partial),
            union(&part.inaccessible, &part.high),
            union(&part.partial, &part.high),
        ];
        let seed = derive(self.seed, &[TAG_BALANCE]);
        let pick = |group: &[Vec<QueryId>; 3], i: usize, tag: u64| -> Result<Vec<QueryId>> {
            if balance {
                Ok(downsample_balanced(group, derive(seed, &[tag]))?.swap_remove(i))
            } else {
                Ok(group[i].clone())
            }
        };
        let out = match subset {
            TrainSubset::All => unreachable!(),
            TrainSubset::Ia => pick(&primaries, 0, 0)?,
            TrainSubset::Pa => pick(&primaries, 1, 0)?,
            TrainSubset::Ha => pick(&primaries, 2, 0)?,
            TrainSubset::IaPa => pick(&pairs, 0, 1)?,
            TrainSubset::IaHa => pick(&pairs, 1, 1)?,
            TrainSubset::PaHa => pick(&pairs, 2, 1)?,
        };
        if out.is_empty() {
            return Err(Error::config(format!("train subset {} is empty for seed {}", subset.label(), self.seed)));
        }
        Ok(out)
    }

    /// Runs one trainer from the base policy. `monitor` adds train/test
    /// accuracy rows to the dynamics log.
    pub fn train(
        &self,
        kind: TrainerKind,
        cfg: &TrainConfig,
        reward: &Verifier,
        queries: &[QueryId],
        monitor: bool,
    ) -> Result<(TrainOutcome, Option<RftSummary>)> {
        let base = self.base();
        let monitor = monitor.then_some(Monitor { train: queries, test: &self.test, verifier: &self.judge });
        let out = match kind {
            TrainerKind::None => TrainOutcome {
                reference: base.clone_as_reference(),
                policy: base,
                log: DynamicsLog::default(),
            },
            TrainerKind::Grpo => train_grpo(base, queries, reward, cfg, monitor)?,
            TrainerKind::Ppo => train_ppo(base, queries, reward, cfg, monitor)?,
            TrainerKind::Sft => train_sft(base, queries, cfg, monitor)?,
            TrainerKind::Rft => {
                let (o, s) = train_rft(base, queries, &self.splits.validation, reward, cfg, monitor)?;
                return Ok((o, Some(s)));
            }
            TrainerKind::Dpo => {
                let seed = derive(cfg.seed, &[TAG_DPO]);
                let pairs = build_dpo_pairs(&base, queries, cfg.dpo_candidates, cfg.rollout_temperature, seed)?;
                train_dpo(base, &pairs, cfg, monitor)?
            }
        };
        Ok((out, None))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub target_universe_hash: u64,
    pub source_pre_acc: f64,
    pub source_post_acc: f64,
}

/// Everything measured for one seed. `pre`/`post` are on the evaluation
/// world's dedup'd test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub name: String,
    pub seed: u64,
    pub trainer: TrainerKind,
    pub universe_hash: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub pre: EvalReport,
    pub post: EvalReport,
    pub train_acc_pre: f64,
    pub train_acc_post: f64,
    /// `(n_queries, repaired)` over initially-wrong noise-floor test facts.
    pub noise_floor_repair: (usize, usize),
    pub rft: Option<RftSummary>,
    pub transfer: Option<TransferReport>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub pre: RecallPolicy,
    pub post: RecallPolicy,
    pub log: DynamicsLog,
    pub report: SeedReport,
}

fn eval_policy(
    world: &SeedWorld,
    policy: &RecallPolicy,
    plan: &EvalPlan,
    seed: u64,
    config_hash: u64,
) -> Result<EvalReport> {
    let mut r = EvalReport {
        greedy_accuracy: world.accuracy(policy, &world.test)?,
        seeds: vec![seed],
        config_hash,
        ..EvalReport::default()
    };
    if plan.passk {
        // Budgets larger than the sample count are not estimable.
        let ks: Vec<usize> = DEFAULT_KS.iter().copied().filter(|&k| k <= plan.passk_samples).collect();
        let curve = pass_at_k_curve(
            policy,
            &world.test,
            &world.judge,
            plan.passk_samples,
            &ks,
            plan.temperature,
            derive(seed, &[TAG_PASSK]),
            plan.estimator,
        )?;
        r.pass_at_k = curve.points;
    }
    if plan.voting {
        let v = voting_accuracy(
            policy,
            &world.test,
            &world.judge,
            plan.voting_samples,
            plan.temperature,
            derive(seed, &[TAG_VOTE]),
        )?;
        r.voting_accuracy = Some(v);
    }
    Ok(r)
}

/// Runs one seed of a resolved config.
pub fn run_seed(cfg: &Resolved, seed: u64, config_hash: u64) -> Result<SeedRun> {
    let c = &cfg.config;
    let world = SeedWorld::new(&cfg.world, c.splits, seed)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    let reward = Verifier::new(&world.universe, c.verifier);
    let queries = world.train_queries(c.train_subset, c.balance_subsets)?;
    let (outcome, rft) = world.train(c.trainer, &train_cfg, &reward, &queries, true)?;
    let source_pre = world.base();
    let train_acc_pre = world.accuracy(&source_pre, &queries)?;
    let train_acc_post = world.accuracy(&outcome.policy, &queries)?;

    // Transfer evaluates `w` on a second world; otherwise pre/post live here.
    let (eval_world, pre, post, transfer) = match &cfg.transfer_world {
        None => (world.clone(), source_pre, outcome.policy.clone(), None),
        Some((wc, offset)) => {
            let mut target = SeedWorld::new(wc, c.splits, seed.wrapping_add(*offset))?;
            target.test = deduplicate_across(&world.universe, &queries, &target.universe, &target.test);
            let post = RecallPolicy::with_weights(target.universe.clone(), *outcome.policy.weights());
            let t = TransferReport {
                target_universe_hash: target.universe.fingerprint(),
                source_pre_acc: world.accuracy(&source_pre, &world.test)?,
                source_post_acc: world.accuracy(&outcome.policy, &world.test)?,
            };
            (target.clone(), target.base(), post, Some(t))
        }
    };
    if eval_world.test.is_empty() {
        return Err(Error::config(format!("dedup left no test queries for seed {seed}")));
    }

    let pre_report = eval_policy(&eval_world, &pre, &c.eval, seed, config_hash)?;
    let mut post_report = eval_policy(&eval_world, &post, &c.eval, seed, config_hash)?;
    if c.eval.repair {
        let profile = measure_accessibility(
            &pre,
            &eval_world.test,
            ACCESSIBILITY_SAMPLES,
            c.eval.temperature,
            derive(seed, &[TAG_TEST_PROFILE]),
        )?;
        post_report.repair = Some(repair_rate(&pre, &post, &eval_world.test, &eval_world.judge, &profile)?);
    }
    let noise_floor = noise_floor_repair(&pre, &post, &eval_world.test, &eval_world.judge)?;

    let mut report = SeedReport {
        name: cfg.name.clone(),
        seed,
        trainer: c.trainer,
        universe_hash: world.universe.fingerprint(),
        n_train: queries.len(),
        n_test: eval_world.test.len(),
        pre: pre_report,
        post: post_report,
        train_acc_pre,
        train_acc_post,
        noise_floor_repair: noise_floor,
        rft,
        transfer,
        metrics: BTreeMap::new(),
    };
    report.metrics = metrics(&report, &outcome.log);
    Ok(SeedRun { pre: world.base(), post: outcome.policy, log: outcome.log, report })
}

/// Flat per-seed metrics; the run summary averages these across seeds.
fn metrics(r: &SeedReport, log: &DynamicsLog) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    let pre = r.pre.greedy_accuracy;
    let post = r.post.greedy_accuracy;
    m.insert("pre_acc".into(), pre);
    m.insert("post_acc".into(), post);
    m.insert("gain".into(), post - pre);
    if pre > 0.0 {
        m.insert("relative_gain".into(), (post - pre) / pre);
    }
    m.insert("train_acc_pre".into(), r.train_acc_pre);
    m.insert("train_acc_post".into(), r.train_acc_post);
    m.insert("train_test_gap".into(), r.train_acc_post - post);
    m.insert("n_train".into(), r.n_train as f64);
    m.insert("n_test".into(), r.n_test as f64);
    for (k, v) in &r.pre.pass_at_k {
        m.insert(format!("pre_pass@{k}"), *v);
    }
    for (k, v) in &r.post.pass_at_k {
        m.insert(format!("post_pass@{k}"), *v);
    }
    if let Some(v) = r.pre.voting_accuracy {
        m.insert("pre_voting".into(), v);
    }
    if let Some(v) = r.post.voting_accuracy {
        m.insert("post_voting".into(), v);
    }
    if let Some(rep) = &r.post.repair {
        for b in &rep.bins {
            m.insert(format!("repair_n_{}", b.bin.index()), b.n_queries as f64);
            m.insert(format!("repair_fixed_{}", b.bin.index()), b.repaired as f64);
        }
    }
    m.insert("noise_floor_n".into(), r.noise_floor_repair.0 as f64);
    m.insert("noise_floor_fixed".into(), r.noise_floor_repair.1 as f64);
    if let Some((first, last)) = log.reward_deciles() {
        m.insert("reward_first_decile".into(), first);
        m.insert("reward_last_decile".into(), last);
    }
    if let Some(t) = &r.transfer {
        m.insert("source_pre_acc".into(), t.source_pre_acc);
        m.insert("source_post_acc".into(), t.source_post_acc);
    }
    m
}
