//! Run directories: per-seed artifacts, a seed-averaged summary, and the
//! validator that checks a directory is complete.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use recall_gym_core::trainers::DynamicsRow;
use recall_gym_core::world::{generate_universe, AccessibilityBin};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Resolved};
use crate::document::{read_json, write_json, Checkpoint};
use crate::error::{Error, Result};
use crate::pipeline::{run_seed, SeedReport, SeedRun};

/// Delta entries smaller than this are dropped from saved checkpoints.
pub const CHECKPOINT_PRUNE: f64 = 1e-4;

pub const DYNAMICS_HEADER: &str = "step,phase,mean_reward,train_acc,test_acc,mean_kl,clip_frac";
pub const PASSK_HEADER: &str = "k,pre,post";
pub const REPAIR_HEADER: &str = "bin,n_queries,rate";
pub const ATTRIBUTION_HEADER: &str = "subset,acc,recovery_fraction";

const SEED_FILES: [&str; 5] =
    ["config.json", "checkpoint_pre.json", "checkpoint_post.json", "dynamics.csv", "report.json"];

/// Seed-averaged view of a run. Per-seed values are kept alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub seeds: Vec<u64>,
    /// Arithmetic mean over seeds of every metric all seeds report.
    pub mean: BTreeMap<String, f64>,
    pub per_seed: Vec<BTreeMap<String, f64>>,
}

impl RunSummary {
    pub fn from_reports(name: &str, reports: &[SeedReport]) -> Self {
        let mut mean = BTreeMap::new();
        if let Some(first) = reports.first() {
            for key in first.metrics.keys() {
                let vals: Vec<f64> = reports.iter().filter_map(|r| r.metrics.get(key).copied()).collect();
                if vals.len() == reports.len() {
                    mean.insert(key.clone(), vals.iter().sum::<f64>() / vals.len() as f64);
                }
            }
        }
        RunSummary {
            name: name.to_string(),
            seeds: reports.iter().map(|r| r.seed).collect(),
            mean,
            per_seed: reports.iter().map(|r| r.metrics.clone()).collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.mean.get(key).copied()
    }

    /// Per-bin repair rate pooled over seeds: repaired / failed, summed
    /// across seeds. `None` for bins with no failed queries in any seed.
    pub fn pooled_repair(&self) -> Vec<(AccessibilityBin, usize, Option<f64>)> {
        AccessibilityBin::all()
            .map(|bin| {
                let i = bin.index();
                let sum = |key: String| -> f64 { self.per_seed.iter().filter_map(|m| m.get(&key)).sum() };
                let n = sum(format!("repair_n_{i}"));
                let fixed = sum(format!("repair_fixed_{i}"));
                (bin, n as usize, (n > 0.0).then(|| fixed / n))
            })
            .collect()
    }

    /// Pooled repair rate over initially-wrong noise-floor facts.
    pub fn noise_floor_repair(&self) -> Option<f64> {
        let n: f64 = self.per_seed.iter().filter_map(|m| m.get("noise_floor_n")).sum();
        let fixed: f64 = self.per_seed.iter().filter_map(|m| m.get("noise_floor_fixed")).sum();
        (n > 0.0).then(|| fixed / n)
    }

    /// `(k, pre, post)` seed-averaged pass@k.
    pub fn passk(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for (key, &pre) in &self.mean {
            if let Some(k) = key.strip_prefix("pre_pass@").and_then(|k| k.parse::<usize>().ok()) {
                if let Some(post) = self.get(&format!("post_pass@{k}")) {
                    out.push((k, pre, post));
                }
            }
        }
        out.sort_by_key(|x| x.0);
        out
    }
}

/// Results of a finished run, kept in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub seeds: Vec<SeedRun>,
}

/// Worker cap from `RECALL_GYM_THREADS`, else the machine's parallelism.
pub fn thread_cap() -> usize {
    std::env::var("RECALL_GYM_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Order-preserving parallel map over at most [`thread_cap`] workers.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = thread_cap().min(items.len()).max(1);
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every slot is filled"))
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Runs every seed in memory. Nothing is written.
pub fn execute(cfg: &Resolved) -> Result<RunOutput> {
    let seeds = cfg.config.seeds.clone();
    let results = par_map(&seeds, |&seed| {
        let snapshot = serde_json::to_string(&cfg.snapshot(seed)).unwrap_or_default();
        log::info!("{}: seed {seed}", cfg.name);
        run_seed(cfg, seed, fnv1a(snapshot.as_bytes()))
    });
    let seeds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let reports: Vec<SeedReport> = seeds.iter().map(|s| s.report.clone()).collect();
    Ok(RunOutput { summary: RunSummary::from_reports(&cfg.name, &reports), seeds })
}

/// Runs `cfg` and writes the run directory `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput> {
    let resolved = cfg.resolve()?;
    let output = execute(&resolved)?;
    write_run(&resolved, &output, out)?;
    validate_run(out)?;
    Ok(output)
}

/// Loads a config file and runs it. `out` overrides the config's output.
pub fn run_experiment_file(path: &Path, out: Option<&Path>) -> Result<(PathBuf, RunOutput)> {
    let cfg = ExperimentConfig::load(path)?;
    let dir = match (out, &cfg.output) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => o.clone(),
        (None, None) => PathBuf::from("runs").join(cfg.resolve()?.name),
    };
    let output = run_experiment(&cfg, &dir)?;
    Ok((dir, output))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e))
}

fn finish_csv(path: &Path, mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dynamics(path: &Path, rows: &[DynamicsRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    if rows.is_empty() {
        w.write_record(DYNAMICS_HEADER.split(',')).map_err(|e| Error::format(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e))?;
    }
    finish_csv(path, w)
}

pub fn write_passk(path: &Path, rows: &[(usize, f64, f64)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(PASSK_HEADER.split(',')).map_err(|e| Error::format(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e))?;
    }
    finish_csv(path, w)
}

pub fn write_repair(path: &Path, rows: &[(AccessibilityBin, usize, Option<f64>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(REPAIR_HEADER.split(',')).map_err(|e| Error::format(path, e))?;
    for (bin, n, rate) in rows {
        w.serialize((bin.label(), n, rate)).map_err(|e| Error::format(path, e))?;
    }
    finish_csv(path, w)
}

pub fn write_attribution(path: &Path, rows: &[(String, f64, Option<f64>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(ATTRIBUTION_HEADER.split(',')).map_err(|e| Error::format(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e))?;
    }
    finish_csv(path, w)
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

pub fn write_run(cfg: &Resolved, output: &RunOutput, out: &Path) -> Result<()> {
    create_dir(out)?;
    for run in &output.seeds {
        let r = &run.report;
        let dir = seed_dir(out, r.seed);
        create_dir(&dir)?;
        write_json(&dir.join("config.json"), &cfg.snapshot(r.seed))?;
        Checkpoint::from_policy(&run.pre, CHECKPOINT_PRUNE).save(&dir.join("checkpoint_pre.json"))?;
        Checkpoint::from_policy(&run.post, CHECKPOINT_PRUNE).save(&dir.join("checkpoint_post.json"))?;
        write_dynamics(&dir.join("dynamics.csv"), &run.log.rows)?;
        write_json(&dir.join("report.json"), r)?;
        if !r.post.pass_at_k.is_empty() {
            let rows: Vec<_> = r
                .pre
                .pass_at_k
                .iter()
                .zip(&r.post.pass_at_k)
                .map(|(&(k, a), &(_, b))| (k, a, b))
                .collect();
            write_passk(&dir.join("passk.csv"), &rows)?;
        }
        if let Some(rep) = &r.post.repair {
            let rows: Vec<_> = rep.bins.iter().map(|b| (b.bin, b.n_queries, b.rate)).collect();
            write_repair(&dir.join("repair.csv"), &rows)?;
        }
    }
    let s = &output.summary;
    write_json(&out.join("summary.json"), s)?;
    let passk = s.passk();
    if !passk.is_empty() {
        write_passk(&out.join("passk.csv"), &passk)?;
    }
    if cfg.config.eval.repair {
        write_repair(&out.join("repair.csv"), &s.pooled_repair())?;
    }
    Ok(())
}

fn artifact(path: &Path, msg: impl Into<String>) -> Error {
    Error::Artifact { path: path.to_path_buf(), msg: msg.into() }
}

fn check_header(path: &Path, expected: &str) -> Result<csv::Reader<fs::File>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let header = r.headers().map_err(|e| Error::format(path, e))?;
    let got: Vec<&str> = header.iter().collect();
    if got.join(",") != expected {
        return Err(artifact(path, format!("header {:?}, expected {expected:?}", got.join(","))));
    }
    Ok(r)
}

/// Checks that `dir` is a complete run: a summary plus, for every seed it
/// lists, a config snapshot, both checkpoints, dynamics and a report that
/// agree with each other.
pub fn validate_run(dir: &Path) -> Result<RunSummary> {
    let summary: RunSummary = read_json(&dir.join("summary.json"))?;
    if summary.seeds.is_empty() || summary.per_seed.len() != summary.seeds.len() {
        return Err(artifact(dir, "summary lists no seeds or mismatched per-seed values"));
    }
    for &seed in &summary.seeds {
        let sd = seed_dir(dir, seed);
        for f in SEED_FILES {
            if !sd.join(f).is_file() {
                return Err(artifact(&sd, format!("missing {f}")));
            }
        }
        let cfg: ExperimentConfig = read_json(&sd.join("config.json"))?;
        let resolved = cfg.resolve()?;
        if cfg.seeds != [seed] {
            return Err(artifact(&sd, "config snapshot is for a different seed"));
        }
        let report: SeedReport = read_json(&sd.join("report.json"))?;
        if report.seed != seed || !report.pre.is_consistent() || !report.post.is_consistent() {
            return Err(artifact(&sd, "report.json is inconsistent"));
        }
        // The report and both checkpoints must be pinned to the world the
        // config snapshot regenerates.
        let expected = generate_universe(&resolved.world, seed)?.fingerprint();
        let mut pinned = vec![report.universe_hash];
        for ck in ["checkpoint_pre.json", "checkpoint_post.json"] {
            pinned.push(Checkpoint::load(&sd.join(ck))?.universe_hash);
        }
        if let Some(&found) = pinned.iter().find(|&&h| h != expected) {
            return Err(Error::HashMismatch { expected, found });
        }
        let path = sd.join("dynamics.csv");
        let mut r = check_header(&path, DYNAMICS_HEADER)?;
        let mut last: Option<usize> = None;
        for row in r.deserialize::<DynamicsRow>() {
            let row = row.map_err(|e| Error::format(&path, e))?;
            if last.is_some_and(|l| row.step <= l) {
                return Err(artifact(&path, "steps are not strictly increasing"));
            }
            last = Some(row.step);
        }
        if sd.join("passk.csv").exists() {
            check_header(&sd.join("passk.csv"), PASSK_HEADER)?;
        }
        if sd.join("repair.csv").exists() {
            check_header(&sd.join("repair.csv"), REPAIR_HEADER)?;
        }
    }
    Ok(summary)
}
