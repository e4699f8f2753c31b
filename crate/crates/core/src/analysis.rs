//! Uniprocessor schedulability tests for one core with a fixed cache grant.
//!
//! * NP-FP: exact response-time analysis over the level-i busy period with
//!   rate-monotonic priorities (ties: longer execution first, then lower id).
//! * NP-EDF: the exact condition for sporadic, implicit-deadline tasks of
//!   Jeffay, Stanat and Martel (RTSS 1991).
//! * P-EDF: the Liu and Layland utilization bound.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::cmp_sum_to_one;
use crate::taskmodel::{Task, Tick};

/// Largest value any recurrence iterate may reach before it is declared
/// divergent, independent of the analytical bound.
const GUARD_CAP: u128 = 1 << 62;

/// A task as seen by a core: its period and its execution time under the
/// core's cache grant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CoreTask {
    pub id: usize,
    pub period: Tick,
    pub exec: Tick,
}

/// The tasks mapped to one core together with the number of partitions the
/// core owns.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoreAssignment {
    mu: usize,
    tasks: Vec<CoreTask>,
}

impl CoreAssignment {
    pub fn new(mu: usize) -> Self {
        Self { mu, tasks: Vec::new() }
    }

    /// Maps `tasks` onto a core with `mu` partitions.
    pub fn from_tasks<'a>(mu: usize, tasks: impl IntoIterator<Item = &'a Task>) -> Self {
        let mut core = Self::new(mu);
        for t in tasks {
            core.push(t);
        }
        core
    }

    /// A core built from raw `(period, exec)` pairs; ids follow input order.
    pub fn from_params(mu: usize, params: &[(Tick, Tick)]) -> Self {
        Self {
            mu,
            tasks: params
                .iter()
                .enumerate()
                .map(|(id, &(period, exec))| CoreTask { id, period, exec })
                .collect(),
        }
    }

    pub fn push(&mut self, task: &Task) {
        self.tasks.push(CoreTask {
            id: task.id,
            period: task.period,
            exec: task.exec(self.mu),
        });
    }

    pub fn push_raw(&mut self, task: CoreTask) {
        self.tasks.push(task);
    }

    /// A copy of this core with `task` added.
    pub fn with(&self, task: &Task) -> Self {
        let mut next = self.clone();
        next.push(task);
        next
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn tasks(&self) -> &[CoreTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    fn utilization_terms(&self) -> impl Iterator<Item = (Tick, Tick)> + Clone + '_ {
        self.tasks.iter().map(|t| (t.exec, t.period))
    }
}

/// Rate-monotonic priority comparison; `Less` means `a` has the higher priority.
pub fn priority_cmp(a: &CoreTask, b: &CoreTask) -> Ordering {
    a.period
        .cmp(&b.period)
        .then(b.exec.cmp(&a.exec))
        .then(a.id.cmp(&b.id))
}

/// Indices into `assignment.tasks()`, highest priority first.
pub fn priority_order(assignment: &CoreAssignment) -> Vec<usize> {
    let mut order: Vec<usize> = (0..assignment.tasks.len()).collect();
    order.sort_by(|&a, &b| priority_cmp(&assignment.tasks[a], &assignment.tasks[b]));
    order
}

/// `lim_{δ→0+} ⌈(w + δ) / p⌉`, i.e. releases at exactly `w` still count.
pub fn strict_ceil_div(w: Tick, p: Tick) -> Result<Tick> {
    if p == 0 {
        return Err(Error::Precondition("strict_ceil_div with a zero period".into()));
    }
    Ok(w / p + 1)
}

/// Worst-case response time of one task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResponseTime {
    Bounded(Tick),
    /// The busy-period or start-time recurrence has no finite fixpoint, or
    /// crossed the divergence guard.
    Divergent,
}

impl ResponseTime {
    pub fn bounded(self) -> Option<Tick> {
        match self {
            ResponseTime::Bounded(r) => Some(r),
            ResponseTime::Divergent => None,
        }
    }
}

/// Outcome of the NP-FP response-time analysis, in assignment order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResponseReport {
    pub responses: Vec<(usize, ResponseTime)>,
    pub schedulable: bool,
}

impl ResponseReport {
    pub fn response_of(&self, id: usize) -> Option<ResponseTime> {
        self.responses.iter().find(|(i, _)| *i == id).map(|(_, r)| *r)
    }
}

/// Busy-period and start-time recurrences for one task.
struct LevelAnalysis<'a> {
    task: CoreTask,
    /// Strictly higher-priority tasks.
    higher: Vec<&'a CoreTask>,
    blocking: Tick,
}

impl LevelAnalysis<'_> {
    /// Upper bound on any legitimate iterate, or `None` when the
    /// recurrences cannot converge.
    fn guard(&self) -> Option<u128> {
        let hep = || {
            self.higher
                .iter()
                .map(|t| (t.exec, t.period))
                .chain(std::iter::once((self.task.exec, self.task.period)))
        };
        match cmp_sum_to_one(hep()) {
            Ordering::Greater => None,
            Ordering::Equal if self.blocking > 0 => None,
            Ordering::Equal => {
                // Full load without blocking: the busy period closes at the
                // hyperperiod of the level-i tasks at the latest.
                let h = hep().try_fold(1u128, |acc, (_, p)| {
                    let l = acc.lcm(&(p as u128));
                    (l <= GUARD_CAP).then_some(l)
                });
                Some(h.unwrap_or(GUARD_CAP))
            }
            Ordering::Less => {
                let u: f64 = hep().map(|(e, p)| e as f64 / p as f64).sum();
                let slack = 1.0 - u;
                if slack <= 1e-6 {
                    return Some(GUARD_CAP);
                }
                let work = self.blocking as f64 + hep().map(|(e, _)| e as f64).sum::<f64>();
                let bound = (work / slack) * (1.0 + 1e-6) + 1.0;
                Some((bound as u128).min(GUARD_CAP))
            }
        }
    }

    /// Returns the worst-case response time, or `Divergent`. When
    /// `deadline_cut` is set, stops as soon as some instance overruns it.
    fn solve(&self, deadline_cut: bool) -> ResponseTime {
        let Some(guard) = self.guard() else {
            return ResponseTime::Divergent;
        };
        let e = self.task.exec as u128;
        let p = self.task.period as u128;
        let b = self.blocking as u128;

        // Level-i busy period, HEP = higher ∪ {self}.
        let mut t = e;
        loop {
            let next = b
                + (t.div_ceil(p)) * e
                + self
                    .higher
                    .iter()
                    .map(|h| t.div_ceil(h.period as u128) * h.exec as u128)
                    .sum::<u128>();
            if next > guard {
                return ResponseTime::Divergent;
            }
            if next == t {
                break;
            }
            t = next;
        }

        let instances = t.div_ceil(p);
        let mut worst: u128 = 0;
        for q in 1..=instances {
            let base = b + (q - 1) * e;
            let mut w = base;
            loop {
                let next = base
                    + self
                        .higher
                        .iter()
                        .map(|h| (w / h.period as u128 + 1) * h.exec as u128)
                        .sum::<u128>();
                if next > guard {
                    return ResponseTime::Divergent;
                }
                if next == w {
                    break;
                }
                w = next;
            }
            let response = (w + e).saturating_sub((q - 1) * p);
            worst = worst.max(response);
            if deadline_cut && worst > p {
                break;
            }
        }
        ResponseTime::Bounded(worst.min(Tick::MAX as u128) as Tick)
    }
}

fn level_analyses(assignment: &CoreAssignment) -> Vec<LevelAnalysis<'_>> {
    let order = priority_order(assignment);
    let tasks = &assignment.tasks;
    order
        .iter()
        .enumerate()
        .map(|(rank, &idx)| LevelAnalysis {
            task: tasks[idx],
            higher: order[..rank].iter().map(|&h| &tasks[h]).collect(),
            blocking: order[rank + 1..]
                .iter()
                .map(|&l| tasks[l].exec)
                .max()
                .unwrap_or(0),
        })
        .collect()
}

/// Exact NP-FP worst-case response times of every task on the core.
///
/// An empty core yields an empty, schedulable report.
pub fn npfp_response_times(assignment: &CoreAssignment) -> ResponseReport {
    let by_priority: Vec<(usize, ResponseTime)> = level_analyses(assignment)
        .iter()
        .map(|level| (level.task.id, level.solve(false)))
        .collect();
    let mut responses = Vec::with_capacity(by_priority.len());
    let mut schedulable = true;
    for t in &assignment.tasks {
        let r = by_priority
            .iter()
            .find(|(id, _)| *id == t.id)
            .map(|(_, r)| *r)
            .expect("every task is analysed");
        match r {
            ResponseTime::Bounded(v) if v <= t.period => {}
            _ => schedulable = false,
        }
        responses.push((t.id, r));
    }
    ResponseReport {
        responses,
        schedulable,
    }
}

/// NP-FP verdict with early exit on the first deadline overrun.
pub fn npfp_is_schedulable(assignment: &CoreAssignment) -> bool {
    if cmp_sum_to_one(assignment.utilization_terms()) == Ordering::Greater {
        return false;
    }
    level_analyses(assignment)
        .iter()
        .all(|level| matches!(level.solve(true), ResponseTime::Bounded(r) if r <= level.task.period))
}

/// Whether `candidate` can join `existing` (at the same cache grant) under NP-FP.
pub fn npfp_is_schedulable_with(existing: &CoreAssignment, candidate: &Task) -> bool {
    npfp_is_schedulable(&existing.with(candidate))
}

/// Exact NP-EDF test for sporadic implicit-deadline tasks in discrete time.
///
/// With tasks sorted by period `p_1 <= ... <= p_n`, the set is schedulable iff
/// `Σ e_i / p_i <= 1` and for every `i > 1` and every integer `L` with
/// `p_1 < L < p_i`: `L >= e_i + Σ_{j<i} ⌊(L - 1) / p_j⌋ e_j`.
/// The right-hand side only steps at `L = k p_j + 1`, so those points (and
/// `p_1 + 1`) are the only ones checked.
pub fn npedf_is_schedulable(assignment: &CoreAssignment) -> bool {
    if assignment.is_empty() {
        return true;
    }
    if cmp_sum_to_one(assignment.utilization_terms()) == Ordering::Greater {
        return false;
    }
    let mut tasks = assignment.tasks.clone();
    tasks.sort_by(|a, b| a.period.cmp(&b.period).then(a.id.cmp(&b.id)));
    let p1 = tasks[0].period;
    let mut points: Vec<Tick> = Vec::new();
    for i in 1..tasks.len() {
        let (pi, ei) = (tasks[i].period, tasks[i].exec);
        if pi <= p1 + 1 {
            continue;
        }
        points.clear();
        points.push(p1 + 1);
        for tj in &tasks[..i] {
            let mut l = tj.period + 1;
            while l < pi {
                if l > p1 {
                    points.push(l);
                }
                l += tj.period;
            }
        }
        let violated = points.iter().any(|&l| {
            let demand: u128 = ei as u128
                + tasks[..i]
                    .iter()
                    .map(|tj| ((l - 1) / tj.period) as u128 * tj.exec as u128)
                    .sum::<u128>();
            demand > l as u128
        });
        if violated {
            return false;
        }
    }
    true
}

/// Preemptive EDF: schedulable iff total utilization is at most one.
pub fn pedf_is_schedulable(assignment: &CoreAssignment) -> bool {
    cmp_sum_to_one(assignment.utilization_terms()) != Ordering::Greater
}

/// A uniprocessor schedulability test pluggable into the allocators.
pub trait SchedulabilityTest: Sync {
    fn is_schedulable(&self, core: &CoreAssignment) -> bool;
}

/// The scheduling policies supported out of the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[serde(alias = "NPFP", alias = "np-fp")]
    Npfp,
    #[serde(alias = "NPEDF", alias = "np-edf")]
    Npedf,
    #[serde(alias = "PEDF", alias = "p-edf")]
    Pedf,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Npfp, Policy::Npedf, Policy::Pedf];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Npfp => "npfp",
            Policy::Npedf => "npedf",
            Policy::Pedf => "pedf",
        }
    }
}

impl SchedulabilityTest for Policy {
    fn is_schedulable(&self, core: &CoreAssignment) -> bool {
        match self {
            Policy::Npfp => npfp_is_schedulable(core),
            Policy::Npedf => npedf_is_schedulable(core),
            Policy::Pedf => pedf_is_schedulable(core),
        }
    }
}

impl<F> SchedulabilityTest for F
where
    F: Fn(&CoreAssignment) -> bool + Sync,
{
    fn is_schedulable(&self, core: &CoreAssignment) -> bool {
        self(core)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "npfp" => Ok(Policy::Npfp),
            "npedf" => Ok(Policy::Npedf),
            "pedf" => Ok(Policy::Pedf),
            other => Err(Error::Precondition(format!("unknown policy '{other}'"))),
        }
    }
}
