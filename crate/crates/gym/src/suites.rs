//! Named experiment suites. Each runs a fixed set of configs and condenses
//! the seed-averaged results into one Markdown table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use recall_gym_core::eval::recovery_fraction;
use recall_gym_core::VerifierMode;
use serde_json::Map;

use crate::config::{EvalPlan, ExperimentConfig, TrainSubset, TrainerKind, TransferPlan, WorldSpec};
use crate::error::{Error, Result};
use crate::runner::{execute, validate_run, write_attribution, write_passk, write_repair, write_run, RunOutput};

pub const SUITES: [&str; 10] = [
    "main_table",
    "dynamics",
    "voting",
    "rl_algo",
    "transfer",
    "repair",
    "passk",
    "attribution",
    "reward_dynamics",
    "reward_ablation",
];

const TABLE_PRESETS: [&str; 4] = ["nq_like", "trivia_like", "pop_like", "simple_like"];
const TRANSFER_PRESETS: [&str; 3] = ["nq_like", "trivia_like", "pop_like"];

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub seeds: Vec<u64>,
    /// Replaces the suite's default preset list where it has one.
    pub presets: Option<Vec<String>>,
    /// Root for run directories and suite tables. `None` keeps everything
    /// in memory.
    pub out: Option<PathBuf>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { seeds: (0..5).collect(), presets: None, out: None }
    }
}

impl SuiteOptions {
    fn presets(&self, default: &[&str]) -> Vec<String> {
        self.presets.clone().unwrap_or_else(|| default.iter().map(|s| s.to_string()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub markdown: String,
    /// Seed-averaged headline numbers, keyed `"<run>/<metric>"`.
    pub values: BTreeMap<String, f64>,
}

impl SuiteReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

pub fn config(preset: &str, trainer: TrainerKind, seeds: &[u64]) -> ExperimentConfig {
    ExperimentConfig {
        name: Some(format!("{preset}-{}", trainer.name())),
        world: WorldSpec::Preset(preset.to_string()),
        splits: recall_gym_core::world::SplitSizes { train: 2000, validation: 128, test: 500 },
        trainer,
        train: Map::new(),
        train_subset: TrainSubset::All,
        balance_subsets: false,
        verifier: VerifierMode::Semantic,
        eval: EvalPlan::default(),
        transfer: None,
        seeds: seeds.to_vec(),
        output: None,
    }
}

struct Ctx<'a> {
    suite: &'static str,
    opts: &'a SuiteOptions,
    values: BTreeMap<String, f64>,
}

impl Ctx<'_> {
    fn run(&mut self, label: &str, mut cfg: ExperimentConfig) -> Result<RunOutput> {
        cfg.name = Some(label.to_string());
        let resolved = cfg.resolve()?;
        let out = execute(&resolved)?;
        if let Some(root) = &self.opts.out {
            let dir = root.join(self.suite).join(label);
            write_run(&resolved, &out, &dir)?;
            validate_run(&dir)?;
        }
        for (k, v) in &out.summary.mean {
            self.values.insert(format!("{label}/{k}"), *v);
        }
        Ok(out)
    }

    fn put(&mut self, key: String, v: f64) {
        self.values.insert(key, v);
    }

    fn suite_dir(&self) -> Result<Option<PathBuf>> {
        match &self.opts.out {
            None => Ok(None),
            Some(root) => {
                let d = root.join(self.suite);
                fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
                Ok(Some(d))
            }
        }
    }

    fn finish(self, markdown: String) -> Result<SuiteReport> {
        if let Some(d) = self.suite_dir()? {
            let p = d.join("summary.md");
            fs::write(&p, &markdown).map_err(|e| Error::io(&p, e))?;
            crate::document::write_json(&d.join("values.json"), &self.values)?;
        }
        Ok(SuiteReport { name: self.suite.to_string(), markdown, values: self.values })
    }
}

fn table(title: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = format!("### {title}\n\n| {} |\n|", header.join(" | "));
    for _ in header {
        s.push_str("---|");
    }
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}", 100.0 * v))
}

fn num(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Runs suite `name`. Unknown names are a configuration error.
pub fn reproduce(name: &str, opts: &SuiteOptions) -> Result<SuiteReport> {
    if opts.seeds.is_empty() {
        return Err(Error::config("suite needs at least one seed"));
    }
    match name {
        "main_table" => main_table(opts),
        "dynamics" => dynamics(opts),
        "voting" => voting(opts),
        "rl_algo" => rl_algo(opts),
        "transfer" => transfer(opts),
        "repair" => repair(opts),
        "passk" => passk(opts),
        "attribution" => attribution(opts),
        "reward_dynamics" => reward_dynamics(opts),
        "reward_ablation" => reward_ablation(opts),
        other => Err(Error::config(format!("unknown suite {other:?} (known: {})", SUITES.join(", ")))),
    }
}

const METHODS: [TrainerKind; 4] = [TrainerKind::Sft, TrainerKind::Rft, TrainerKind::Dpo, TrainerKind::Grpo];

/// Held-out accuracy of every method on every preset, with voting@32 on the
/// base policy, the SFT train−test gap and noise-floor repair.
pub fn main_table(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut ctx = Ctx { suite: "main_table", opts, values: BTreeMap::new() };
    let presets = opts.presets(&TABLE_PRESETS);
    let mut cols: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    let mut gaps = Vec::new();
    let mut floor = Vec::new();
    for p in &presets {
        let mut base = config(p, TrainerKind::None, &opts.seeds);
        base.eval.voting = true;
        let b = ctx.run(&format!("{p}-base"), base)?;
        cols.entry("base").or_default().push(b.summary.get("pre_acc"));
        cols.entry("voting@32").or_default().push(b.summary.get("pre_voting"));
        let mut floor_row = vec![p.clone()];
        for m in METHODS {
            let r = ctx.run(&format!("{p}-{}", m.name()), config(p, m, &opts.seeds))?;
            cols.entry(m.name()).or_default().push(r.summary.get("post_acc"));
            if m == TrainerKind::Sft {
                gaps.push(vec![
                    p.clone(),
                    pct(r.summary.get("train_acc_post")),
                    pct(r.summary.get("post_acc")),
                    pct(r.summary.get("train_test_gap")),
                ]);
            }
            let nf = r.summary.noise_floor_repair();
            if let Some(v) = nf {
                ctx.put(format!("{p}-{}/noise_floor_repair", m.name()), v);
            }
            floor_row.push(pct(nf));
        }
        floor.push(floor_row);
    }
    let mut header = vec!["method".to_string()];
    header.extend(presets.iter().cloned());
    let order = ["base", "voting@32", "sft", "rft", "dpo", "grpo"];
    let rows: Vec<Vec<String>> = order
        .iter()
        .map(|m| {
            let mut r = vec![m.to_string()];
            r.extend(cols.get(m).map(|v| v.iter().map(|x| pct(*x)).collect::<Vec<_>>()).unwrap_or_default());
            r
        })
        .collect();
    let mut md = table("Held-out greedy accuracy (%)", &header, &rows);
    md.push('\n');
    md += &table("SFT memorization (%)", &strings(&["preset", "train", "test", "gap"]), &gaps);
    md.push('\n');
    let mut fh = vec!["preset".to_string()];
    fh.extend(METHODS.iter().map(|m| m.name().to_string()));
    md += &table("Repair rate on initially-wrong noise-floor facts (%)", &fh, &floor);
    ctx.finish(md)
}

/// Train and test accuracy over training for each method.
pub fn dynamics(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut ctx = Ctx { suite: "dynamics", opts, values: BTreeMap::new() };
    let mut rows = Vec::new();
    for m in METHODS {
        let label = format!("nq_like-{}", m.name());
        let r = ctx.run(&label, config("nq_like", m, &opts.seeds))?;
        let s = &r.summary;
        let steps = r.seeds.iter().map(|x| x.log.rows.last().map_or(0, |r| r.step)).max().unwrap_or(0);
        rows.push(vec![
            m.name().to_string(),
            steps.to_string(),
            pct(s.get("train_acc_pre")),
            pct(s.get("train_acc_post")),
            pct(s.get("pre_acc")),
            pct(s.get("post_acc")),
            pct(s.get("train_test_gap")),
        ]);
    }
    let md = table(
        "Training dynamics on nq_like (%; per-step curves in each run's dynamics.csv)",
        &strings(&["method", "steps", "train start", "train end", "test start", "test end", "train−test gap"]),
        &rows,
    );
    ctx.finish(md)
}

/// Greedy, voting@32 and GRPO accuracy per preset.
pub fn voting(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut ctx = Ctx { suite: "voting", opts, values: BTreeMap::new() };
    let mut rows = Vec::new();
    for p in opts.presets(&TABLE_PRESETS[..3]) {
        let mut cfg = config(&p, TrainerKind::Grpo, &opts.seeds);
        cfg.eval.voting = true;
        let r = ctx.run(&format!("{p}-grpo"), cfg)?;
        let s = &r.summary;
        rows.push(vec![
            p.clone(),
            pct(s.get("pre_acc")),
            pct(s.get("pre_voting")),
            pct(s.get("post_acc")),
            pct(s.get("post_voting")),
        ]);
    }
    let md = table(
        "Majority voting vs GRPO (%)",
        &strings(&["preset", "greedy", "voting@32", "GRPO greedy", "GRPO voting@32"]),
        &rows,
    );
    ctx.finish(md)
}

/// GRPO vs PPO final held-out accuracy.
pub fn rl_algo(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut ctx = Ctx { suite: "rl_algo", opts, values: BTreeMap::new() };
    let presets = opts.presets(&TABLE_PRESETS[..3]);
    let mut rows = Vec::new();
    let mut pre = vec!["base".to_string()];
    for p in &presets {
        let mut row = vec![];
        for m in [TrainerKind::Grpo, TrainerKind::Ppo] {
            let r = ctx.run(&format!("{p}-{}", m.name()), config(p, m, &opts.seeds))?;
            if m == TrainerKind::Grpo {
                pre.push(pct(r.summary.get("pre_acc")));
            }
            row.push(r.summary.get("post_acc"));
        }
        rows.push(row);
    }
    let mut header = vec!["method".to_string()];
    header.extend(presets.iter().cloned());
    let mut body = vec![pre];
    for (i, m) in ["grpo", "ppo"].iter().enumerate() {
        let mut r = vec![m.to_string()];
        r.extend(rows.iter().map(|row| pct(row[i])));
        body.push(r);
    }
    ctx.finish(table("GRPO vs PPO held-out accuracy (%)", &header, &body))
}

/// Gain on world B (rows: training preset A, columns: evaluation preset B).
pub fn transfer(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut ctx = Ctx { suite: "transfer", opts, values: BTreeMap::new() };
    let presets = opts.presets(&TRANSFER_PRESETS);
    let mut body = Vec::new();
    for a in &presets {
        let mut row = vec![a.clone()];
        for b in &presets {
            let mut cfg = config(a, TrainerKind::Grpo, &opts.seeds);
            cfg.transfer = Some(TransferPlan { world: WorldSpec::Preset(b.clone()), seed_offset: 1_000_003 });
            let r = ctx.run(&format!("{a}-to-{b}"), cfg)?;
            row.push(num(r.summary.get("gain").map(|g| 100.0 * g)));
        }
        body.push(row);
    }
    let mut header = vec!["train \\ eval".to_string()];
    header.extend(presets.iter().cloned());
    ctx.finish(table("Held-out gain on a disjoint world (points)", &header, &body))
}

/// Repair rate per pre-training accessibility bin, pooled over seeds.
pub fn repair(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut ctx = Ctx { suite: "repair", opts, values: BTreeMap::new() };
    let mut cfg = config("nq_like", TrainerKind::Grpo, &opts.seeds);
    cfg.eval.repair = true;
    let r = ctx.run("nq_like-grpo", cfg)?;
    let bins = r.summary.pooled_repair();
    let mut rows = Vec::new();
    for (bin, n, rate) in &bins {
        if let Some(v) = rate {
            ctx.put(format!("repair/bin_{}", bin.index()), *v);
        }
        rows.push(vec![bin.label().to_string(), n.to_string(), pct(*rate)]);
    }
    if let Some(d) = ctx.suite_dir()? {
        write_repair(&d.join("repair.csv"), &bins)?;
    }
    let md = table(
        "Repair rate of initially-failed test queries by correct count out of 128",
        &strings(&["bin", "n_queries", "rate (%)"]),
        &rows,
    );
    ctx.finish(md)
}

/// Seed-averaged pass@k before and after GRPO.
pub fn passk(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut ctx = Ctx { suite: "passk", opts, values: BTreeMap::new() };
    let mut cfg = config("nq_like", TrainerKind::Grpo, &opts.seeds);
    cfg.eval.passk = true;
    let r = ctx.run("nq_like-grpo", cfg)?;
    let curve = r.summary.passk();
    if let Some(d) = ctx.suite_dir()? {
        write_passk(&d.join("passk.csv"), &curve)?;
    }
    let rows: Vec<Vec<String>> =
        curve.iter().map(|(k, a, b)| vec![k.to_string(), pct(Some(*a)), pct(Some(*b))]).collect();
    ctx.finish(table("pass@k on nq_like (%)", &strings(&["k", "pre", "post"]), &rows))
}

/// GRPO on size-matched accessibility subsets and their pairwise unions,
/// as a fraction of the full-data gain.
pub fn attribution(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut ctx = Ctx { suite: "attribution", opts, values: BTreeMap::new() };
    let full = ctx.run("full", config("nq_like", TrainerKind::Grpo, &opts.seeds))?;
    let base_acc = full.summary.get("pre_acc").unwrap_or(0.0);
    let full_acc = full.summary.get("post_acc").unwrap_or(0.0);
    let mut rows = vec![("all".to_string(), full_acc, Some(1.0))];
    let mut md_rows = vec![vec!["all".into(), "n/a".into(), pct(Some(full_acc)), num(Some(1.0))]];
    for subset in TrainSubset::PRIMARY.into_iter().chain(TrainSubset::PAIRS) {
        let mut cfg = config("nq_like", TrainerKind::Grpo, &opts.seeds);
        cfg.train_subset = subset;
        cfg.balance_subsets = true;
        let r = ctx.run(subset.label(), cfg)?;
        let acc = r.summary.get("post_acc").unwrap_or(0.0);
        let rec = recovery_fraction(acc, base_acc, full_acc).ok();
        if let Some(v) = rec {
            ctx.put(format!("{}/recovery_fraction", subset.label()), v);
        }
        rows.push((subset.label().to_string(), acc, rec));
        md_rows.push(vec![
            subset.label().to_string(),
            num(r.summary.get("n_train")),
            pct(Some(acc)),
            num(rec),
        ]);
    }
    if let Some(d) = ctx.suite_dir()? {
        write_attribution(&d.join("attribution.csv"), &rows)?;
    }
    let md = table(
        &format!("Attribution on nq_like (base accuracy {})", pct(Some(base_acc))),
        &strings(&["subset", "n_train", "acc (%)", "recovery_fraction"]),
        &md_rows,
    );
    ctx.finish(md)
}

/// Mean train reward over training on inaccessible queries only.
pub fn reward_dynamics(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut ctx = Ctx { suite: "reward_dynamics", opts, values: BTreeMap::new() };
    let mut cfg = config("nq_like", TrainerKind::Grpo, &opts.seeds);
    cfg.train_subset = TrainSubset::Ia;
    let r = ctx.run("IA", cfg)?;
    // Seed-averaged reward per tenth of training.
    let mut tenths = [(0.0, 0usize); 10];
    for s in &r.seeds {
        let rewards = s.log.rewards();
        for (i, x) in rewards.iter().enumerate() {
            let t = (i * 10 / rewards.len().max(1)).min(9);
            tenths[t].0 += x;
            tenths[t].1 += 1;
        }
    }
    let curve: Vec<(usize, f64)> =
        tenths.iter().enumerate().filter(|(_, t)| t.1 > 0).map(|(i, t)| (i, t.0 / t.1 as f64)).collect();
    if let Some(d) = ctx.suite_dir()? {
        let p = d.join("reward_curve.csv");
        let mut text = String::from("decile,mean_reward\n");
        for (i, v) in &curve {
            let _ = writeln!(text, "{i},{v}");
        }
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    let rows: Vec<Vec<String>> = curve.iter().map(|(i, v)| vec![i.to_string(), num(Some(*v))]).collect();
    let md = table(
        &format!(
            "Train reward on IA queries (n_train {}) by tenth of training",
            num(r.summary.get("n_train"))
        ),
        &strings(&["tenth", "mean reward"]),
        &rows,
    );
    ctx.finish(md)
}

/// Semantic vs exact-match reward. Accuracy is always judged semantically.
pub fn reward_ablation(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut ctx = Ctx { suite: "reward_ablation", opts, values: BTreeMap::new() };
    let mut rows = Vec::new();
    for p in opts.presets(&["alias_rich", "nq_like"]) {
        let mut row = vec![p.clone()];
        let mut pre = None;
        let mut gains = Vec::new();
        for mode in [VerifierMode::Semantic, VerifierMode::Exact] {
            let mut cfg = config(&p, TrainerKind::Grpo, &opts.seeds);
            cfg.verifier = mode;
            let r = ctx.run(&format!("{p}-{mode}"), cfg)?;
            pre = r.summary.get("pre_acc");
            gains.push((r.summary.get("post_acc"), r.summary.get("gain")));
        }
        row.push(pct(pre));
        for (acc, gain) in gains {
            row.push(pct(acc));
            row.push(num(gain.map(|g| 100.0 * g)));
        }
        rows.push(row);
    }
    let md = table(
        "Reward verifier ablation (%; gains in points)",
        &strings(&["preset", "base", "semantic acc", "semantic gain", "exact acc", "exact gain"]),
        &rows,
    );
    ctx.finish(md)
}
