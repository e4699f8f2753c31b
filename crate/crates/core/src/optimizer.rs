//! Joint cache partitioning and task allocation.
//!
//! The outer layer walks cores breadth-first. At depth `x` every surviving
//! partial solution is extended by granting core `x` between one partition
//! and everything that is left; for each grant the middle layer greedily
//! packs a task subset in a fixed order (COMP: by period, CASE: by cache
//! sensitivity potential) and the inner layer admits a task only if the core
//! stays schedulable. After each depth, dominated partial solutions are
//! dropped, which keeps at most one node per amount of remaining cache.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{CoreAssignment, SchedulabilityTest};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::taskmodel::{cache_sensitivity_potential, scheduling_demand, Task, TaskSet};

/// Order in which the middle layer offers tasks to a core.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SortCriterion {
    /// Mutual compatibility: non-decreasing period.
    Comp,
    /// Cache sensitivity potential at the candidate grant, non-decreasing.
    Case,
}

impl fmt::Display for SortCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SortCriterion::Comp => "COMP",
            SortCriterion::Case => "CASE",
        })
    }
}

impl FromStr for SortCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "comp" => Ok(SortCriterion::Comp),
            "case" => Ok(SortCriterion::Case),
            other => Err(Error::Precondition(format!("unknown sort criterion '{other}'"))),
        }
    }
}

/// Orders `tasks` for the middle layer. Ties go to the smaller id.
pub fn sort_tasks<'a, S: Scalar>(
    tasks: impl IntoIterator<Item = &'a Task>,
    criterion: SortCriterion,
    mu: usize,
) -> Result<Vec<&'a Task>> {
    let tasks: Vec<&Task> = tasks.into_iter().collect();
    match criterion {
        SortCriterion::Comp => {
            let mut sorted = tasks;
            sorted.sort_by(|a, b| a.period.cmp(&b.period).then(a.id.cmp(&b.id)));
            Ok(sorted)
        }
        SortCriterion::Case => {
            let mut keyed = tasks
                .into_iter()
                .map(|t| Ok((cache_sensitivity_potential::<S>(t, mu)?, t)))
                .collect::<Result<Vec<_>>>()?;
            keyed.sort_by(|(ga, a), (gb, b)| ga.total_cmp(gb).then(a.id.cmp(&b.id)));
            Ok(keyed.into_iter().map(|(_, t)| t).collect())
        }
    }
}

/// First-sort-then-pack: walks the sorted tasks once and keeps each task
/// whose addition leaves the core schedulable with `mu` partitions.
pub fn alloc_task<'a, S, T>(
    tasks_left: impl IntoIterator<Item = &'a Task>,
    mu: usize,
    criterion: SortCriterion,
    test: &T,
) -> Result<Vec<&'a Task>>
where
    S: Scalar,
    T: SchedulabilityTest + ?Sized,
{
    let mut core = CoreAssignment::new(mu);
    let mut chosen = Vec::new();
    for task in sort_tasks::<S>(tasks_left, criterion, mu)? {
        let candidate = core.with(task);
        if test.is_schedulable(&candidate) {
            core = candidate;
            chosen.push(task);
        }
    }
    Ok(chosen)
}

/// A node of the outer search: the first `x` cores are decided.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialSolution<S> {
    /// Task ids per decided core, in packing order.
    pub task_alloc: Vec<Vec<usize>>,
    /// Partitions per decided core.
    pub cache_part: Vec<usize>,
    /// Unallocated task ids, ascending.
    pub tasks_left: Vec<usize>,
    pub cache_left: usize,
    pub rem_sched_demand: S,
}

impl<S: Scalar> PartialSolution<S> {
    /// The root: nothing allocated, the whole cache available.
    pub fn root(task_set: &TaskSet) -> Self {
        Self {
            task_alloc: Vec::new(),
            cache_part: Vec::new(),
            tasks_left: task_set.ids().collect(),
            cache_left: task_set.platform().n_partitions,
            rem_sched_demand: scheduling_demand(task_set.tasks()),
        }
    }

    /// Extends this node with one more core holding `tasks` and `mu` partitions.
    pub fn extend(&self, task_set: &TaskSet, tasks: &[&Task], mu: usize) -> Self {
        debug_assert!(mu <= self.cache_left);
        let mut task_alloc = self.task_alloc.clone();
        task_alloc.push(tasks.iter().map(|t| t.id).collect());
        let mut cache_part = self.cache_part.clone();
        cache_part.push(mu);
        let tasks_left: Vec<usize> = self
            .tasks_left
            .iter()
            .copied()
            .filter(|id| !tasks.iter().any(|t| t.id == *id))
            .collect();
        let rem_sched_demand = scheduling_demand(tasks_left.iter().map(|&id| task_set.task(id)));
        Self {
            task_alloc,
            cache_part,
            tasks_left,
            cache_left: self.cache_left - mu,
            rem_sched_demand,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.tasks_left.is_empty()
    }

    /// Cores decided so far.
    pub fn depth(&self) -> usize {
        self.task_alloc.len()
    }

    /// Whether this node may still grow into a complete solution with `n_cores`.
    pub fn is_prospective(&self, n_cores: usize) -> bool {
        self.is_complete() || (self.depth() < n_cores && self.cache_left > 0)
    }
}

/// `a` dominates `b` when it keeps strictly more cache with no more demand,
/// or the same cache with strictly less demand.
pub fn dominates<S: Scalar>(a: &PartialSolution<S>, b: &PartialSolution<S>) -> bool {
    let demand = a.rem_sched_demand.total_cmp(&b.rem_sched_demand);
    match a.cache_left.cmp(&b.cache_left) {
        Ordering::Greater => demand != Ordering::Greater,
        Ordering::Equal => demand == Ordering::Less,
        Ordering::Less => false,
    }
}

/// Drops dominated nodes. Among nodes with identical cache and demand only
/// the first one (in input order) survives. Input order is otherwise kept.
pub fn remove_dominated<S: Scalar>(nodes: Vec<PartialSolution<S>>) -> Vec<PartialSolution<S>> {
    let keep: Vec<bool> = nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            !nodes.iter().enumerate().any(|(j, other)| {
                dominates(other, node)
                    || (j < i
                        && other.cache_left == node.cache_left
                        && other.rem_sched_demand.same_as(&node.rem_sched_demand))
            })
        })
        .collect();
    nodes
        .into_iter()
        .zip(keep)
        .filter_map(|(n, k)| k.then_some(n))
        .collect()
}

/// A complete allocation. Cores beyond the ones used hold no tasks and no cache.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub task_alloc: Vec<Vec<usize>>,
    pub cache_part: Vec<usize>,
    pub total_cache_used: usize,
}

impl Solution {
    /// Task ids within each core are stored in ascending order.
    pub fn new(mut task_alloc: Vec<Vec<usize>>, mut cache_part: Vec<usize>, n_cores: usize) -> Self {
        task_alloc.iter_mut().for_each(|ids| ids.sort_unstable());
        task_alloc.resize(n_cores.max(task_alloc.len()), Vec::new());
        cache_part.resize(n_cores.max(cache_part.len()), 0);
        let total_cache_used = cache_part.iter().sum();
        Self {
            task_alloc,
            cache_part,
            total_cache_used,
        }
    }

    /// The core assignment of core `j` under its own grant.
    pub fn core(&self, task_set: &TaskSet, j: usize) -> CoreAssignment {
        CoreAssignment::from_tasks(
            self.cache_part[j],
            self.task_alloc[j].iter().map(|&id| task_set.task(id)),
        )
    }

    /// Re-checks every structural constraint and every core with `test`.
    pub fn verify<T: SchedulabilityTest + ?Sized>(&self, task_set: &TaskSet, test: &T) -> bool {
        let platform = task_set.platform();
        if self.task_alloc.len() != platform.n_cores || self.cache_part.len() != platform.n_cores {
            return false;
        }
        if self.cache_part.iter().sum::<usize>() != self.total_cache_used
            || self.total_cache_used > platform.n_partitions
        {
            return false;
        }
        let mut seen = vec![false; task_set.len()];
        for ids in &self.task_alloc {
            for &id in ids {
                if id >= seen.len() || std::mem::replace(&mut seen[id], true) {
                    return false;
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return false;
        }
        (0..platform.n_cores).all(|j| {
            let empty = self.task_alloc[j].is_empty();
            let mu = self.cache_part[j];
            if empty {
                return true;
            }
            mu >= 1 && mu <= platform.n_partitions && test.is_schedulable(&self.core(task_set, j))
        })
    }
}

/// Result of a search. `NotFound` carries the smallest remaining demand any
/// explored node reached, for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome<S> {
    Found(Solution),
    NotFound { best_rem_demand: S },
    TimedOut,
}

impl<S> Outcome<S> {
    pub fn solution(&self) -> Option<&Solution> {
        match self {
            Outcome::Found(s) => Some(s),
            _ => None,
        }
    }

    pub fn into_solution(self) -> Option<Solution> {
        match self {
            Outcome::Found(s) => Some(s),
            _ => None,
        }
    }
}

/// Counters collected during one search.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    /// Middle-layer invocations.
    pub alloc_calls: usize,
    /// Frontier size after pruning, one entry per depth `1..=n_c`.
    pub frontier_sizes: Vec<usize>,
}

impl SearchStats {
    /// Whether every frontier respected `|Ω_x| <= n_p + 2 - x`. Past depth
    /// `n_p + 1` only a carried-forward complete node can survive, so the
    /// bound there is one.
    pub fn within_pruning_bound(&self, n_partitions: usize) -> bool {
        self.frontier_sizes
            .iter()
            .enumerate()
            .all(|(i, &size)| size <= (n_partitions + 1).saturating_sub(i).max(1))
    }
}

/// Knobs for [`Optimizer`].
#[derive(Clone, Copy, Debug, Default)]
pub struct SearchOptions {
    /// Abandon the search once this instant has passed.
    pub deadline: Option<Instant>,
}

/// The outer search over cache grants, parameterized by the sort criterion
/// and the schedulability test.
pub struct Optimizer<'t, T: ?Sized> {
    criterion: SortCriterion,
    test: &'t T,
    options: SearchOptions,
}

impl<'t, T: SchedulabilityTest + ?Sized> Optimizer<'t, T> {
    pub fn new(criterion: SortCriterion, test: &'t T) -> Self {
        Self {
            criterion,
            test,
            options: SearchOptions::default(),
        }
    }

    pub fn with_options(mut self, options: SearchOptions) -> Self {
        self.options = options;
        self
    }

    /// Runs the search and returns the outcome with its counters.
    pub fn run<S: Scalar>(&self, task_set: &TaskSet) -> (Outcome<S>, SearchStats) {
        let platform = task_set.platform();
        let (n_c, n_p) = (platform.n_cores, platform.n_partitions);
        let mut stats = SearchStats::default();
        let root = PartialSolution::<S>::root(task_set);
        let mut best_rem_demand = root.rem_sched_demand.clone();
        let mut frontier = vec![root];

        for _depth in 1..=n_c {
            let mut next = Vec::new();
            for node in &frontier {
                if node.is_complete() {
                    next.push(node.clone());
                    continue;
                }
                for mu in 1..=node.cache_left {
                    if self.options.deadline.is_some_and(|d| Instant::now() >= d) {
                        return (Outcome::TimedOut, stats);
                    }
                    stats.alloc_calls += 1;
                    let left = node.tasks_left.iter().map(|&id| task_set.task(id));
                    let packed = alloc_task::<S, T>(left, mu, self.criterion, self.test)
                        .expect("grants stay within the profile range");
                    if packed.is_empty() {
                        continue;
                    }
                    let child = node.extend(task_set, &packed, mu);
                    if child.rem_sched_demand.total_cmp(&best_rem_demand) == Ordering::Less {
                        best_rem_demand = child.rem_sched_demand.clone();
                    }
                    if child.is_prospective(n_c) {
                        next.push(child);
                    }
                }
            }
            frontier = remove_dominated(next);
            stats.frontier_sizes.push(frontier.len());
            debug_assert!(stats.within_pruning_bound(n_p));
        }
        debug_assert!(stats.alloc_calls <= n_c * n_p * n_p);

        // Every surviving node is complete here; after pruning the one with
        // the most cache left (the first on ties) is the only candidate.
        let best = frontier
            .into_iter()
            .filter(PartialSolution::is_complete)
            .reduce(|best, n| if n.cache_left > best.cache_left { n } else { best });
        let outcome = match best {
            Some(node) => Outcome::Found(Solution::new(node.task_alloc, node.cache_part, n_c)),
            None => Outcome::NotFound { best_rem_demand },
        };
        (outcome, stats)
    }
}

/// Convenience wrapper around [`Optimizer::run`].
pub fn optimize<S, T>(task_set: &TaskSet, criterion: SortCriterion, test: &T) -> Outcome<S>
where
    S: Scalar,
    T: SchedulabilityTest + ?Sized,
{
    Optimizer::new(criterion, test).run(task_set).0
}
