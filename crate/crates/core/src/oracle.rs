//! Independent checks for the analyses and allocators: brute-force search
//! over every task-to-core mapping and cache split of small instances, and
//! a discrete-event simulator for one non-preemptive core.

use std::collections::HashMap;

use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{priority_cmp, priority_order, CoreAssignment, SchedulabilityTest};
use crate::error::{Error, Result};
use crate::generator::{build_task, gen_utilizations, SlowdownCurve};
use crate::optimizer::Solution;
use crate::taskmodel::{PlatformConfig, TaskSet, Tick};

/// Size limits of [`exhaustive_search`].
pub const MAX_ORACLE_TASKS: usize = 8;
pub const MAX_ORACLE_CORES: usize = 3;
pub const MAX_ORACLE_PARTITIONS: usize = 6;

/// Simulation horizons are capped at this many ticks.
pub const MAX_HORIZON: Tick = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleVerdict {
    pub exists_schedulable: bool,
    pub witness: Option<Solution>,
    /// (mapping, cache split) pairs checked.
    pub explored: u64,
}

/// Decides by enumeration whether any mapping of tasks to cores and any
/// split of the partitions (at least one per non-empty core, none for an
/// empty core) passes `test` on every core.
///
/// Stops at the first passing pair. Per-core verdicts are memoized.
pub fn exhaustive_search<T: SchedulabilityTest + ?Sized>(
    task_set: &TaskSet,
    test: &T,
) -> Result<OracleVerdict> {
    let platform = task_set.platform();
    let (n, m, np) = (task_set.len(), platform.n_cores, platform.n_partitions);
    if n > MAX_ORACLE_TASKS || m > MAX_ORACLE_CORES || np > MAX_ORACLE_PARTITIONS {
        return Err(Error::OracleTooLarge(format!(
            "{n} tasks, {m} cores, {np} partitions (limits {MAX_ORACLE_TASKS}, {MAX_ORACLE_CORES}, {MAX_ORACLE_PARTITIONS})"
        )));
    }
    let mut memo: HashMap<(u32, usize), bool> = HashMap::new();
    let mut core_ok = |mask: u32, mu: usize| -> bool {
        *memo.entry((mask, mu)).or_insert_with(|| {
            let core = CoreAssignment::from_tasks(
                mu,
                (0..n).filter(|k| mask >> k & 1 == 1).map(|k| task_set.task(k)),
            );
            test.is_schedulable(&core)
        })
    };

    let mut explored = 0u64;
    let total = (m as u64).pow(n as u32);
    let mut mapping = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for slot in mapping.iter_mut() {
            *slot = (c % m as u64) as usize;
            c /= m as u64;
        }
        let mut masks = vec![0u32; m];
        for (task, &core) in mapping.iter().enumerate() {
            masks[core] |= 1 << task;
        }
        let mut split = vec![0usize; m];
        if let Some(found) = search_splits(&masks, 0, np, &mut split, &mut core_ok, &mut explored) {
            let task_alloc = masks
                .iter()
                .map(|&mask| (0..n).filter(|k| mask >> k & 1 == 1).collect())
                .collect();
            return Ok(OracleVerdict {
                exists_schedulable: true,
                witness: Some(Solution::new(task_alloc, found, m)),
                explored,
            });
        }
    }
    Ok(OracleVerdict {
        exists_schedulable: false,
        witness: None,
        explored,
    })
}

fn search_splits(
    masks: &[u32],
    core: usize,
    left: usize,
    split: &mut Vec<usize>,
    core_ok: &mut impl FnMut(u32, usize) -> bool,
    explored: &mut u64,
) -> Option<Vec<usize>> {
    if core == masks.len() {
        *explored += 1;
        let all = masks
            .iter()
            .zip(split.iter())
            .all(|(&mask, &mu)| mask == 0 || core_ok(mask, mu));
        return all.then(|| split.clone());
    }
    if masks[core] == 0 {
        split[core] = 0;
        return search_splits(masks, core + 1, left, split, core_ok, explored);
    }
    for mu in 1..=left {
        split[core] = mu;
        if let Some(found) = search_splits(masks, core + 1, left - mu, split, core_ok, explored) {
            return Some(found);
        }
    }
    None
}

/// Job releases for one simulation run.
///
/// Task `k` (index into the core's task list) first releases at
/// `offsets[k]` and then every period. If `lead` is set, that task's job
/// released at time 0 is dispatched before anything else released at 0,
/// which models the other releases arriving an instant later.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReleasePattern {
    pub offsets: Vec<Tick>,
    pub lead: Option<usize>,
}

impl ReleasePattern {
    pub fn synchronous(core: &CoreAssignment) -> Self {
        Self {
            offsets: vec![0; core.len()],
            lead: None,
        }
    }

    /// Maximum-blocking pattern for the task at index `k`: the longest job
    /// of lower priority starts at 0 and everything else arrives just after.
    /// Equal to [`Self::synchronous`] when `k` has the lowest priority.
    pub fn npfp_adversarial(core: &CoreAssignment, k: usize) -> Self {
        let tasks = core.tasks();
        let lead = (0..tasks.len())
            .filter(|&j| priority_cmp(&tasks[j], &tasks[k]).is_gt())
            .max_by(|&a, &b| {
                tasks[a]
                    .exec
                    .cmp(&tasks[b].exec)
                    .then(priority_cmp(&tasks[a], &tasks[b]).reverse())
            });
        Self {
            offsets: vec![0; tasks.len()],
            lead,
        }
    }

    /// Task `k` starts alone at 0; all others release one tick later.
    pub fn npedf_blocking(core: &CoreAssignment, k: usize) -> Self {
        let mut offsets = vec![1; core.len()];
        offsets[k] = 0;
        Self {
            offsets,
            lead: Some(k),
        }
    }
}

/// Dispatch rule of the simulated core.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dispatch {
    /// Rate-monotonic priorities, as in the NP-FP analysis.
    FixedPriority,
    /// Earliest absolute deadline (implicit deadlines); ties by priority.
    EarliestDeadline,
}

/// Observations of one simulation run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimReport {
    /// `(task id, largest observed response time)`, in core order. `None`
    /// when the task completed no job.
    pub max_response: Vec<(usize, Option<Tick>)>,
    /// Some job finished after its implicit deadline.
    pub deadline_miss: bool,
    /// Jobs released before the horizon were still pending when the run was
    /// cut off, so maxima are lower bounds.
    pub truncated: bool,
}

impl SimReport {
    pub fn response_of(&self, id: usize) -> Option<Tick> {
        self.max_response.iter().find(|(i, _)| *i == id).and_then(|(_, r)| *r)
    }
}

/// Twice the hyperperiod, capped at [`MAX_HORIZON`], and never below the
/// longest period plus the largest offset one.
pub fn default_horizon(core: &CoreAssignment) -> Tick {
    let mut h: Tick = 1;
    for t in core.tasks() {
        h = h.lcm(&t.period);
        if h > MAX_HORIZON {
            h = MAX_HORIZON;
            break;
        }
    }
    let longest = core.tasks().iter().map(|t| t.period).max().unwrap_or(1);
    h.saturating_mul(2).min(MAX_HORIZON).max(longest + 1)
}

/// Non-preemptive NP-FP simulation; see [`simulate_core`].
pub fn simulate_npfp_core(core: &CoreAssignment, pattern: &ReleasePattern, horizon: Tick) -> Result<SimReport> {
    simulate_core(core, pattern, horizon, Dispatch::FixedPriority)
}

/// Simulates every job released before `horizon`. Whenever the core is
/// idle the best pending job (by `dispatch`) starts and runs to completion.
/// The run is cut off at `2 * horizon + Σ e` if jobs are still pending.
pub fn simulate_core(
    core: &CoreAssignment,
    pattern: &ReleasePattern,
    horizon: Tick,
    dispatch: Dispatch,
) -> Result<SimReport> {
    let tasks = core.tasks();
    let n = tasks.len();
    if pattern.offsets.len() != n {
        return Err(Error::Precondition(format!(
            "pattern has {} offsets for {n} tasks",
            pattern.offsets.len()
        )));
    }
    if let Some(lead) = pattern.lead {
        if lead >= n || pattern.offsets[lead] != 0 {
            return Err(Error::Precondition("lead task must release at time 0".into()));
        }
    }
    if tasks.iter().any(|t| t.period == 0) {
        return Err(Error::Precondition("zero period".into()));
    }
    let longest = tasks.iter().map(|t| t.period).max().unwrap_or(0);
    if horizon < longest {
        return Err(Error::Precondition(format!(
            "horizon {horizon} shorter than the longest period {longest}"
        )));
    }
    let mut rank = vec![0usize; n];
    for (r, k) in priority_order(core).into_iter().enumerate() {
        rank[k] = r;
    }
    let cutoff = horizon
        .saturating_mul(2)
        .saturating_add(tasks.iter().map(|t| t.exec).sum());

    // Pending jobs per task, oldest first: release times.
    let mut pending: Vec<std::collections::VecDeque<Tick>> = vec![Default::default(); n];
    let mut next_release: Vec<Tick> = pattern.offsets.clone();
    let mut max_response: Vec<Option<Tick>> = vec![None; n];
    let mut deadline_miss = false;
    let mut t: Tick = 0;

    let release_up_to = |now: Tick, pending: &mut Vec<std::collections::VecDeque<Tick>>, next: &mut Vec<Tick>| {
        for k in 0..n {
            while next[k] <= now && next[k] < horizon {
                pending[k].push_back(next[k]);
                next[k] += tasks[k].period;
            }
        }
    };

    let mut first = pattern.lead;
    loop {
        release_up_to(t, &mut pending, &mut next_release);
        let chosen = match first.take() {
            Some(k) => Some(k),
            None => (0..n).filter(|&k| !pending[k].is_empty()).min_by(|&a, &b| match dispatch {
                Dispatch::FixedPriority => rank[a].cmp(&rank[b]),
                Dispatch::EarliestDeadline => (pending[a][0] + tasks[a].period)
                    .cmp(&(pending[b][0] + tasks[b].period))
                    .then(rank[a].cmp(&rank[b])),
            }),
        };
        match chosen {
            Some(k) => {
                let release = pending[k].pop_front().expect("chosen task has a pending job");
                t += tasks[k].exec;
                let response = t - release;
                if response > tasks[k].period {
                    deadline_miss = true;
                }
                max_response[k] = Some(max_response[k].map_or(response, |r| r.max(response)));
            }
            None => {
                let next = next_release.iter().copied().filter(|&r| r < horizon).min();
                match next {
                    Some(r) => t = r,
                    None => break,
                }
            }
        }
        if t > cutoff {
            break;
        }
    }
    let truncated = pending.iter().any(|q| !q.is_empty()) || next_release.iter().any(|&r| r < horizon);
    Ok(SimReport {
        max_response: tasks.iter().map(|t| t.id).zip(max_response).collect(),
        deadline_miss,
        truncated,
    })
}

/// Largest NP-FP response per task over the synchronous pattern and the
/// adversarial pattern of every task.
pub fn npfp_observed_responses(core: &CoreAssignment, horizon: Tick) -> Result<SimReport> {
    let mut patterns = vec![ReleasePattern::synchronous(core)];
    patterns.extend((0..core.len()).map(|k| ReleasePattern::npfp_adversarial(core, k)));
    merge_runs(core, &patterns, horizon, Dispatch::FixedPriority)
}

/// NP-EDF verdict by simulation: the synchronous pattern plus, for every
/// task, the pattern where it starts alone just before everything else.
pub fn npedf_simulated_schedulable(core: &CoreAssignment) -> Result<bool> {
    if core.is_empty() {
        return Ok(true);
    }
    let mut patterns = vec![ReleasePattern::synchronous(core)];
    patterns.extend((0..core.len()).map(|k| ReleasePattern::npedf_blocking(core, k)));
    let report = merge_runs(core, &patterns, default_horizon(core), Dispatch::EarliestDeadline)?;
    Ok(!report.deadline_miss)
}

fn merge_runs(
    core: &CoreAssignment,
    patterns: &[ReleasePattern],
    horizon: Tick,
    dispatch: Dispatch,
) -> Result<SimReport> {
    let mut merged = SimReport {
        max_response: core.tasks().iter().map(|t| (t.id, None)).collect(),
        deadline_miss: false,
        truncated: false,
    };
    for pattern in patterns {
        let run = simulate_core(core, pattern, horizon, dispatch)?;
        merged.deadline_miss |= run.deadline_miss;
        merged.truncated |= run.truncated;
        for (slot, (_, r)) in merged.max_response.iter_mut().zip(run.max_response) {
            slot.1 = slot.1.max(r);
        }
    }
    Ok(merged)
}

/// Shape of the random instances in the soundness suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmallInstanceSpec {
    pub max_tasks: usize,
    pub n_cores: usize,
    pub max_partitions: usize,
}

impl Default for SmallInstanceSpec {
    fn default() -> Self {
        Self {
            max_tasks: 6,
            n_cores: 2,
            max_partitions: 4,
        }
    }
}

const SMALL_PERIODS: [Tick; 8] = [10, 15, 20, 25, 30, 40, 50, 60];

/// A random small instance with short integer periods and exponential
/// slowdown profiles, sized for [`exhaustive_search`].
pub fn small_instance(seed: u64, spec: SmallInstanceSpec) -> Result<TaskSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=spec.max_tasks);
    let np = rng.gen_range(1..=spec.max_partitions);
    let platform = PlatformConfig::new(spec.n_cores, np, 64)?;
    let u_tar = rng.gen_range(0.2..=(spec.n_cores as f64 * 0.9).min(n as f64 * 0.9));
    let utils = gen_utilizations(n, u_tar, Some(0.9), &mut rng)?;
    let mut tasks = Vec::with_capacity(n);
    for (id, u) in utils.into_iter().enumerate() {
        let period = SMALL_PERIODS[rng.gen_range(0..SMALL_PERIODS.len())];
        let alpha = rng.gen_range(0.0..0.35);
        let u = u.max(1.0 / period as f64);
        tasks.push(build_task(id, u, period, &SlowdownCurve::synthetic(alpha), &platform)?);
    }
    TaskSet::new(tasks, platform, 1_000)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{npfp_response_times, Policy, ResponseTime};
    use crate::taskmodel::{ExecProfile, Task};

    fn table(rows: &[(Tick, [Tick; 4])]) -> TaskSet {
        let tasks = rows
            .iter()
            .enumerate()
            .map(|(id, (p, eps))| Task::new(id, *p, ExecProfile::new(eps.to_vec()).unwrap()).unwrap())
            .collect();
        TaskSet::new(tasks, PlatformConfig::new(2, 4, 64).unwrap(), 1_000).unwrap()
    }

    #[test]
    fn worked_instances_have_witnesses() {
        let t1 = table(&[(100, [36, 35, 34, 34]), (100, [75, 55, 45, 27]), (150, [77, 48, 35, 25]), (150, [85, 82, 81, 79])]);
        let t2 = table(&[(200, [35, 33, 31, 26]), (200, [177, 172, 168, 165]), (250, [324, 178, 119, 80]), (250, [65, 63, 62, 60])]);
        for ts in [t1, t2] {
            let v = exhaustive_search(&ts, &Policy::Npfp).unwrap();
            assert!(v.exists_schedulable);
            assert!(v.witness.as_ref().unwrap().verify(&ts, &Policy::Npfp));
            assert!(v.explored >= 1);
        }
    }

    #[test]
    fn overloaded_task_has_no_witness() {
        let ts = TaskSet::new(
            vec![Task::new(0, 10, ExecProfile::new(vec![12, 11]).unwrap()).unwrap()],
            PlatformConfig::new(2, 2, 64).unwrap(),
            1_000,
        )
        .unwrap();
        let v = exhaustive_search(&ts, &Policy::Npfp).unwrap();
        assert!(!v.exists_schedulable && v.witness.is_none());
        // one mapping per core, two splits each
        assert_eq!(v.explored, 4);
    }

    #[test]
    fn size_guard() {
        let ts = small_instance(1, SmallInstanceSpec::default()).unwrap();
        let big = TaskSet::new(ts.tasks().to_vec(), PlatformConfig::new(4, ts.platform().n_partitions, 64).unwrap(), 1_000).unwrap();
        assert!(matches!(exhaustive_search(&big, &Policy::Npfp), Err(Error::OracleTooLarge(_))));
    }

    #[test]
    fn adversarial_patterns_reach_worked_responses() {
        let cases: [(&[(Tick, Tick)], &[Tick]); 3] = [
            (&[(100, 35), (150, 48)], &[83, 83]),
            (&[(200, 31), (200, 168)], &[199, 199]),
            (&[(200, 35), (250, 65)], &[100, 100]),
        ];
        for (params, expected) in cases {
            let core = CoreAssignment::from_params(1, params);
            let observed = npfp_observed_responses(&core, default_horizon(&core)).unwrap();
            assert!(!observed.truncated);
            let analytic = npfp_response_times(&core);
            for (k, &want) in expected.iter().enumerate() {
                assert_eq!(observed.response_of(k), Some(want), "{params:?} task {k}");
                assert_eq!(analytic.response_of(k), Some(ResponseTime::Bounded(want)));
            }
        }
    }

    #[test]
    fn adversarial_first_response_for_highest_priority() {
        let core = CoreAssignment::from_params(1, &[(100, 35), (150, 48)]);
        let pattern = ReleasePattern::npfp_adversarial(&core, 0);
        assert_eq!(pattern.lead, Some(1));
        let run = simulate_npfp_core(&core, &pattern, 300).unwrap();
        assert_eq!(run.response_of(0), Some(83));
    }

    #[test]
    fn single_task_responds_in_exec_time() {
        let core = CoreAssignment::from_params(1, &[(10, 4)]);
        let run = simulate_npfp_core(&core, &ReleasePattern::synchronous(&core), 100).unwrap();
        assert_eq!(run.response_of(0), Some(4));
        assert!(!run.deadline_miss && !run.truncated);
    }

    #[test]
    fn overload_is_flagged() {
        let core = CoreAssignment::from_params(1, &[(10, 6), (10, 6)]);
        let run = simulate_npfp_core(&core, &ReleasePattern::synchronous(&core), 1_000).unwrap();
        assert!(run.deadline_miss);
        assert!(simulate_npfp_core(&core, &ReleasePattern::synchronous(&core), 5).is_err());
    }

    #[test]
    fn npedf_blocking_pattern_finds_miss() {
        // U = 0.95 but the long job blocks the short one past its deadline.
        let core = CoreAssignment::from_params(1, &[(5, 2), (40, 18)]);
        assert!(!crate::analysis::npedf_is_schedulable(&core));
        assert!(!npedf_simulated_schedulable(&core).unwrap());
        let ok = CoreAssignment::from_params(1, &[(5, 2), (40, 3)]);
        assert!(crate::analysis::npedf_is_schedulable(&ok));
        assert!(npedf_simulated_schedulable(&ok).unwrap());
    }

    #[test]
    fn small_instances_respect_limits() {
        for seed in 0..50 {
            let ts = small_instance(seed, SmallInstanceSpec::default()).unwrap();
            assert!(ts.len() <= 6 && ts.platform().n_partitions <= 4);
            assert_eq!(ts.platform().n_cores, 2);
        }
    }
}
