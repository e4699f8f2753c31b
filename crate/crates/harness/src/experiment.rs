use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use npcache::baselines::minimize_cache;
use npcache::generator::ScenarioConfig;
use npcache::{Policy, TaskSet};

use crate::algorithm::{run_algorithm, Algorithm};
use crate::report::{runtime_report, RuntimeRow};

/// Label of the combined COMP-or-CASE row.
pub const BOTH: &str = "BOTH";

/// One algorithm on one task set. `runtime_ms` is the only
/// non-deterministic column and is kept last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub scenario: String,
    pub policy: Policy,
    pub n_partitions: usize,
    pub u_tar: f64,
    pub set_index: usize,
    pub algorithm: Algorithm,
    pub schedulable: bool,
    pub timed_out: bool,
    pub total_cache_used: Option<usize>,
    pub alloc_calls: Option<usize>,
    pub pruning_bound_ok: Option<bool>,
    pub runtime_ms: f64,
}

/// Cache partitions saved on a set scheduled by both a proposed scheme and
/// a baseline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheSaveRecord {
    pub scenario: String,
    pub set_index: usize,
    pub mu_prop: usize,
    pub mu_base: usize,
    pub mu_save: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub u_tar: f64,
    pub sets: usize,
    /// Percent of sets scheduled, per algorithm (and BOTH).
    pub ratio: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MuSaveStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub min: Option<i64>,
    pub max: Option<i64>,
    pub histogram: BTreeMap<i64, usize>,
}

/// Counts derived from the records; everything here is reproducible from
/// the CSV files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub policy: Policy,
    pub n_cores: usize,
    pub n_partitions: usize,
    pub sets: usize,
    pub algorithms: Vec<Algorithm>,
    /// Schedulable sets per algorithm, plus BOTH when COMP and CASE ran.
    pub totals: BTreeMap<String, usize>,
    pub timeouts: BTreeMap<String, usize>,
    pub ratio_rows: Vec<RatioRow>,
    pub mu_save: MuSaveStats,
}

#[derive(Clone, Debug)]
pub struct ExperimentOptions {
    pub algorithms: Vec<Algorithm>,
    pub timeout: Option<Duration>,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            timeout: Some(Duration::from_secs(300)),
            jobs: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub records: Vec<ExperimentRecord>,
    pub cache_save: Vec<CacheSaveRecord>,
    pub summary: Summary,
    pub runtime: Vec<RuntimeRow>,
}

/// Runs every algorithm on one task set and derives its μ_save record.
pub fn run_set(
    scenario: &str,
    u_tar: f64,
    set_index: usize,
    task_set: &TaskSet,
    policy: Policy,
    options: &ExperimentOptions,
) -> (Vec<ExperimentRecord>, Option<CacheSaveRecord>) {
    let n_partitions = task_set.platform().n_partitions;
    let mut records = Vec::with_capacity(options.algorithms.len());
    let mut mu_prop: Option<usize> = None;
    let mut mu_base: Option<usize> = None;
    for &algorithm in &options.algorithms {
        let run = run_algorithm(task_set, algorithm, policy, options.timeout);
        if let Some(sol) = &run.solution {
            if algorithm.is_proposed() {
                mu_prop = Some(mu_prop.map_or(sol.total_cache_used, |m| m.min(sol.total_cache_used)));
            } else {
                let trimmed = minimize_cache(sol, task_set, &policy).total_cache_used;
                mu_base = Some(mu_base.map_or(trimmed, |m| m.min(trimmed)));
            }
        }
        records.push(ExperimentRecord {
            scenario: scenario.to_string(),
            policy,
            n_partitions,
            u_tar,
            set_index,
            algorithm,
            schedulable: run.solution.is_some(),
            timed_out: run.timed_out,
            total_cache_used: run.solution.as_ref().map(|s| s.total_cache_used),
            alloc_calls: run.alloc_calls,
            pruning_bound_ok: run.pruning_bound_ok,
            runtime_ms: run.runtime.as_secs_f64() * 1e3,
        });
    }
    let save = match (mu_prop, mu_base) {
        (Some(p), Some(b)) => Some(CacheSaveRecord {
            scenario: scenario.to_string(),
            set_index,
            mu_prop: p,
            mu_base: b,
            mu_save: b as i64 - p as i64,
        }),
        _ => None,
    };
    (records, save)
}

/// Generates the scenario and runs every selected algorithm on every set.
/// Sets are processed in parallel; output order follows the scenario stream.
pub fn run_experiment(config: &ScenarioConfig, options: &ExperimentOptions) -> anyhow::Result<ExperimentResult> {
    config.validate()?;
    let label = config.label();
    let cells: Vec<(usize, usize)> = if options.algorithms.is_empty() {
        Vec::new()
    } else {
        (0..config.u_tar_grid.len())
            .flat_map(|p| (0..config.sets_per_point).map(move |r| (p, r)))
            .collect()
    };
    let work = || {
        cells
            .par_iter()
            .map(|&(point, rep)| {
                let set = config.generate_one(point, rep)?;
                let index = set.index(config.sets_per_point);
                Ok(run_set(&label, set.u_tar, index, &set.task_set, config.policy, options))
            })
            .collect::<anyhow::Result<Vec<_>>>()
    };
    let per_set = match options.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .context("building worker pool")?
            .install(work)?,
        None => work()?,
    };
    let mut records = Vec::new();
    let mut cache_save = Vec::new();
    for (r, s) in per_set {
        records.extend(r);
        cache_save.extend(s);
    }
    let summary = summarize(
        &label,
        config.policy,
        config.platform.n_cores,
        config.platform.n_partitions,
        &options.algorithms,
        &records,
        &cache_save,
    );
    let runtime = runtime_report(&records);
    Ok(ExperimentResult {
        records,
        cache_save,
        summary,
        runtime,
    })
}

/// Builds the summary from raw records.
pub fn summarize(
    scenario: &str,
    policy: Policy,
    n_cores: usize,
    n_partitions: usize,
    algorithms: &[Algorithm],
    records: &[ExperimentRecord],
    cache_save: &[CacheSaveRecord],
) -> Summary {
    let both = algorithms.contains(&Algorithm::Comp) && algorithms.contains(&Algorithm::Case);
    let mut totals: BTreeMap<String, usize> = algorithms.iter().map(|a| (a.to_string(), 0)).collect();
    let mut timeouts: BTreeMap<String, usize> = algorithms.iter().map(|a| (a.to_string(), 0)).collect();
    if both {
        totals.insert(BOTH.into(), 0);
    }
    // set index -> (u_tar, per-algorithm verdicts)
    let mut sets: BTreeMap<usize, (f64, BTreeMap<String, bool>)> = BTreeMap::new();
    for r in records {
        let entry = sets.entry(r.set_index).or_insert_with(|| (r.u_tar, BTreeMap::new()));
        entry.1.insert(r.algorithm.to_string(), r.schedulable);
        if r.schedulable {
            *totals.entry(r.algorithm.to_string()).or_default() += 1;
        }
        if r.timed_out {
            *timeouts.entry(r.algorithm.to_string()).or_default() += 1;
        }
    }
    if both {
        let n = sets
            .values()
            .filter(|(_, v)| v.get("COMP") == Some(&true) || v.get("CASE") == Some(&true))
            .count();
        totals.insert(BOTH.into(), n);
    }

    // Group by u_tar in first-appearance order of the set index.
    let mut rows: Vec<RatioRow> = Vec::new();
    let mut counts: Vec<BTreeMap<String, usize>> = Vec::new();
    for (u_tar, verdicts) in sets.values() {
        let k = match rows.iter().position(|r| r.u_tar == *u_tar) {
            Some(k) => k,
            None => {
                rows.push(RatioRow {
                    u_tar: *u_tar,
                    sets: 0,
                    ratio: BTreeMap::new(),
                });
                counts.push(totals.keys().map(|k| (k.clone(), 0)).collect());
                rows.len() - 1
            }
        };
        rows[k].sets += 1;
        for (alg, &ok) in verdicts {
            if ok {
                *counts[k].entry(alg.clone()).or_default() += 1;
            }
        }
        if both && (verdicts.get("COMP") == Some(&true) || verdicts.get("CASE") == Some(&true)) {
            *counts[k].entry(BOTH.into()).or_default() += 1;
        }
    }
    for (row, c) in rows.iter_mut().zip(counts) {
        row.ratio = c
            .into_iter()
            .map(|(alg, n)| (alg, 100.0 * n as f64 / row.sets as f64))
            .collect();
    }

    let mut mu_save = MuSaveStats {
        count: cache_save.len(),
        ..Default::default()
    };
    if !cache_save.is_empty() {
        let total: i64 = cache_save.iter().map(|c| c.mu_save).sum();
        mu_save.mean = Some(total as f64 / cache_save.len() as f64);
        mu_save.min = cache_save.iter().map(|c| c.mu_save).min();
        mu_save.max = cache_save.iter().map(|c| c.mu_save).max();
        for c in cache_save {
            *mu_save.histogram.entry(c.mu_save).or_default() += 1;
        }
    }

    Summary {
        scenario: scenario.to_string(),
        policy,
        n_cores,
        n_partitions,
        sets: sets.len(),
        algorithms: algorithms.to_vec(),
        totals,
        timeouts,
        ratio_rows: rows,
        mu_save,
    }
}

pub const RECORDS_FILE: &str = "records.csv";
pub const CACHE_SAVE_FILE: &str = "cache_save.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RUNTIME_FILE: &str = "runtime.csv";

/// Writes the four result files into `dir`, creating it if needed.
pub fn write_results(result: &ExperimentResult, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_csv(&dir.join(RECORDS_FILE), &result.records)?;
    write_csv(&dir.join(CACHE_SAVE_FILE), &result.cache_save)?;
    write_csv(&dir.join(RUNTIME_FILE), &result.runtime)?;
    let summary = serde_json::to_string_pretty(&result.summary)?;
    fs::write(dir.join(SUMMARY_FILE), summary + "\n")?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> anyhow::Result<Vec<ExperimentRecord>> {
    read_csv(path)
}

pub fn read_cache_save(path: &Path) -> anyhow::Result<Vec<CacheSaveRecord>> {
    read_csv(path)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}
