//! Comparison allocators adapted to a pluggable schedulability test, and the
//! cache-trimming pass used when comparing cache consumption.
//!
//! * IA³ (Paolieri et al.): tasks in decreasing cache sensitivity, each put
//!   on the core that needs the fewest extra partitions to stay schedulable.
//! * PDPA (Berna and Puaut): one critical task per core, spread by period;
//!   other tasks follow the critical task with the closest period not below
//!   theirs. The highest-period task is always critical, Δ = 50, and the
//!   final split is rejected if it exceeds the cache.
//! * CaM (Xu et al.): k-means over slowdown profiles, then utilization
//!   first-fit starting at each cluster's home core. Packing ignores
//!   blocking; the test only sets each core's grant and the final verdict.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{priority_cmp, CoreAssignment, CoreTask, SchedulabilityTest};
use crate::error::{Error, Result};
use crate::optimizer::Solution;
use crate::scalar::Scalar;
use crate::taskmodel::{base_utilization, utilization_at, Task, TaskSet};

/// Seed of CaM's k-means initialization.
pub const CAM_SEED: u64 = 0x00c0_ffee;

/// PDPA's critical-task spacing, percent of the per-core period range.
pub const PDPA_DELTA: u64 = 50;

const KMEANS_MAX_ITERS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselineKind {
    #[serde(rename = "IA3")]
    Ia3,
    #[serde(rename = "PDPA")]
    Pdpa,
    #[serde(rename = "CAM")]
    Cam,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Ia3, BaselineKind::Pdpa, BaselineKind::Cam];

    pub fn run<S: Scalar, T: SchedulabilityTest + ?Sized>(self, task_set: &TaskSet, test: &T) -> Option<Solution> {
        match self {
            BaselineKind::Ia3 => run_ia3::<S, T>(task_set, test),
            BaselineKind::Pdpa => run_pdpa::<S, T>(task_set, test),
            BaselineKind::Cam => run_cam::<S, T>(task_set, test),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Ia3 => "IA3",
            BaselineKind::Pdpa => "PDPA",
            BaselineKind::Cam => "CAM",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ia3" | "ia^3" | "ia³" => Ok(BaselineKind::Ia3),
            "pdpa" => Ok(BaselineKind::Pdpa),
            "cam" => Ok(BaselineKind::Cam),
            other => Err(Error::Precondition(format!("unknown baseline '{other}'"))),
        }
    }
}

fn util<S: Scalar>(task: &Task, mu: usize) -> S {
    utilization_at::<S>(task, mu).expect("grant within profile range")
}

fn core_of<'a>(tasks: impl IntoIterator<Item = &'a Task>, mu: usize) -> CoreAssignment {
    CoreAssignment::from_tasks(mu, tasks)
}

/// Smallest grant in `lo..=hi` under which `tasks` pass `test`.
fn min_grant<T: SchedulabilityTest + ?Sized>(tasks: &[&Task], lo: usize, hi: usize, test: &T) -> Option<usize> {
    (lo.max(1)..=hi).find(|&mu| test.is_schedulable(&core_of(tasks.iter().copied(), mu)))
}

/// Gives every non-empty core its smallest passing grant; `None` if some
/// core never passes or the grants exceed the cache.
fn minimal_split<T: SchedulabilityTest + ?Sized>(
    task_set: &TaskSet,
    cores: &[Vec<&Task>],
    test: &T,
) -> Option<Solution> {
    let np = task_set.platform().n_partitions;
    let mut split = Vec::with_capacity(cores.len());
    for tasks in cores {
        split.push(if tasks.is_empty() { 0 } else { min_grant(tasks, 1, np, test)? });
    }
    if split.iter().sum::<usize>() > np {
        return None;
    }
    let alloc = cores.iter().map(|ts| ts.iter().map(|t| t.id).collect()).collect();
    Some(Solution::new(alloc, split, task_set.platform().n_cores))
}

/// IA³ with the injected test.
pub fn run_ia3<S: Scalar, T: SchedulabilityTest + ?Sized>(task_set: &TaskSet, test: &T) -> Option<Solution> {
    let platform = task_set.platform();
    let (m, np) = (platform.n_cores, platform.n_partitions);
    let mut order: Vec<(&Task, S, S)> = task_set
        .tasks()
        .iter()
        .map(|t| {
            let u_hat = base_utilization::<S>(t);
            (t, util::<S>(t, 1) - u_hat.clone(), u_hat)
        })
        .collect();
    order.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(b.2.total_cmp(&a.2))
            .then(a.0.id.cmp(&b.0.id))
    });

    let mut cores: Vec<Vec<&Task>> = vec![Vec::new(); m];
    let mut grant = vec![0usize; m];
    for (task, _, _) in order {
        let free = np - grant.iter().sum::<usize>();
        // (extra partitions, resulting utilization, core, new grant)
        let mut best: Option<(usize, S, usize, usize)> = None;
        for j in 0..m {
            let mut members = cores[j].clone();
            members.push(task);
            let Some(mu) = min_grant(&members, grant[j], grant[j] + free, test) else {
                continue;
            };
            let extra = mu - grant[j];
            let load = members.iter().fold(S::zero(), |acc, t| acc + util::<S>(t, mu));
            let better = match &best {
                None => true,
                Some((e, l, _, _)) => extra < *e || (extra == *e && load.total_cmp(l) == Ordering::Less),
            };
            if better {
                best = Some((extra, load, j, mu));
            }
        }
        let (_, _, j, mu) = best?;
        cores[j].push(task);
        grant[j] = mu;
    }
    let alloc = cores.iter().map(|ts| ts.iter().map(|t| t.id).collect()).collect();
    Some(Solution::new(alloc, grant, m))
}

/// PDPA with the three adaptations described in the module docs.
pub fn run_pdpa<S: Scalar, T: SchedulabilityTest + ?Sized>(task_set: &TaskSet, test: &T) -> Option<Solution> {
    let platform = task_set.platform();
    let (m, np) = (platform.n_cores, platform.n_partitions);
    let tasks = task_set.tasks();
    if tasks.is_empty() {
        return Some(Solution::new(Vec::new(), Vec::new(), m));
    }
    let p_max = tasks.iter().map(|t| t.period).max().expect("non-empty");
    let p_min = tasks.iter().map(|t| t.period).min().expect("non-empty");
    // δ = (P_max - P_min) / M * Δ / 100, kept exact by scaling by 100 M.
    let spread_scaled = (p_max - p_min) as u128 * PDPA_DELTA as u128;
    let far_enough = |a: u64, b: u64| (a.abs_diff(b) as u128) * 100 * m as u128 >= spread_scaled;

    let first = tasks
        .iter()
        .max_by(|a, b| {
            a.period
                .cmp(&b.period)
                .then(base_utilization::<S>(a).total_cmp(&base_utilization::<S>(b)))
                .then(b.id.cmp(&a.id))
        })
        .expect("non-empty");
    let mut critical: Vec<&Task> = vec![first];

    // High utilization, low variability first.
    let mut candidates: Vec<(&Task, S)> = tasks
        .iter()
        .filter(|t| t.id != first.id)
        .map(|t| {
            let variability = S::from_ticks(t.exec(1), t.exec(np));
            (t, base_utilization::<S>(t) / variability)
        })
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.id.cmp(&b.0.id)));
    for (t, _) in &candidates {
        if critical.len() == m {
            break;
        }
        if critical.iter().all(|c| far_enough(c.period, t.period)) {
            critical.push(t);
        }
    }

    let mut cores: Vec<Vec<&Task>> = vec![Vec::new(); m];
    for (j, c) in critical.iter().enumerate() {
        cores[j].push(c);
    }
    let is_critical = |t: &Task| critical.iter().any(|c| c.id == t.id);
    let eligible = |t: &Task, j: usize| j < critical.len() && critical[j].period >= t.period;

    let mut rest: Vec<&Task> = tasks.iter().filter(|t| !is_critical(t)).collect();
    rest.sort_by(|a, b| {
        base_utilization::<S>(b)
            .total_cmp(&base_utilization::<S>(a))
            .then(a.id.cmp(&b.id))
    });
    for t in rest {
        let j = (0..critical.len())
            .filter(|&j| eligible(t, j))
            .min_by_key(|&j| (critical[j].period - t.period, j))
            .expect("the highest-period task is critical");
        cores[j].push(t);
    }

    // Remap only cores that fail even with the whole cache.
    let at_full = |t: &Task| CoreTask {
        id: t.id,
        period: t.period,
        exec: t.exec(np),
    };
    let full_ok = |members: &[&Task]| test.is_schedulable(&core_of(members.iter().copied(), np));
    for j in 0..m {
        while !full_ok(&cores[j]) {
            let victim = cores[j]
                .iter()
                .enumerate()
                .filter(|(_, t)| !is_critical(t))
                .max_by(|(_, a), (_, b)| priority_cmp(&at_full(a), &at_full(b)))
                .map(|(k, _)| k)?;
            let task = cores[j].remove(victim);
            let target = (1..m).map(|d| (j + d) % m).find(|&k| {
                eligible(task, k) && {
                    let mut members = cores[k].clone();
                    members.push(task);
                    full_ok(&members)
                }
            })?;
            cores[target].push(task);
        }
    }
    minimal_split(task_set, &cores, test)
}

/// Deterministic k-means (k-means++ seeding, Lloyd iterations). Returns a
/// cluster index per point; clusters are numbered densely. Fewer than `k`
/// clusters result when there are fewer distinct points.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return vec![0; n];
    }
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![points[rng.gen_range(0..n)].clone()];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = n - 1;
        for (i, &di) in d.iter().enumerate() {
            if di > 0.0 && pick < di {
                chosen = i;
                break;
            }
            pick -= di;
        }
        if d[chosen] <= 0.0 {
            chosen = d.iter().rposition(|&x| x > 0.0).expect("total is positive");
        }
        centers.push(points[chosen].clone());
    }

    let nearest = |p: &[f64], centers: &[Vec<f64>]| {
        let mut best = (0, f64::INFINITY);
        for (c, center) in centers.iter().enumerate() {
            let d = dist2(p, center);
            if d < best.1 {
                best = (c, d);
            }
        }
        best.0
    };
    let mut label: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..KMEANS_MAX_ITERS {
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &l) in points.iter().zip(&label) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            if counts[c] > 0 {
                *center = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == label {
            break;
        }
        label = next;
    }

    // Renumber densely in order of first appearance.
    let mut remap = vec![usize::MAX; centers.len()];
    let mut used = 0;
    for l in label.iter_mut() {
        if remap[*l] == usize::MAX {
            remap[*l] = used;
            used += 1;
        }
        *l = remap[*l];
    }
    label
}

/// Utilization first-fit: each task goes to the first core, cycling from its
/// home core, whose utilization stays at most one when the cache is split
/// evenly among the cores in use.
/// Every non-empty core then gets its smallest grant passing `test`.
fn pack_and_grant<S: Scalar, T: SchedulabilityTest + ?Sized>(
    task_set: &TaskSet,
    ordered: &[(&Task, usize)],
    test: &T,
) -> Option<Solution> {
    let platform = task_set.platform();
    let (m, np) = (platform.n_cores, platform.n_partitions);
    let mut cores: Vec<Vec<&Task>> = vec![Vec::new(); m];
    let fits = |members: &[&Task], in_use: usize| {
        let share = (np / in_use.max(1)).max(1);
        let load = members.iter().fold(S::zero(), |acc, t| acc + util::<S>(t, share));
        load.total_cmp(&S::one()) != Ordering::Greater
    };
    for &(task, home) in ordered {
        let in_use = cores.iter().filter(|c| !c.is_empty()).count();
        let j = (0..m).map(|d| (home + d) % m).find(|&j| {
            let mut members = cores[j].clone();
            members.push(task);
            fits(&members, in_use + usize::from(cores[j].is_empty()))
        })?;
        cores[j].push(task);
    }
    minimal_split(task_set, &cores, test)
}

/// CaM with the default k-means seed.
pub fn run_cam<S: Scalar, T: SchedulabilityTest + ?Sized>(task_set: &TaskSet, test: &T) -> Option<Solution> {
    run_cam_seeded::<S, T>(task_set, test, CAM_SEED)
}

pub fn run_cam_seeded<S: Scalar, T: SchedulabilityTest + ?Sized>(
    task_set: &TaskSet,
    test: &T,
    seed: u64,
) -> Option<Solution> {
    let platform = task_set.platform();
    let np = platform.n_partitions;
    let tasks = task_set.tasks();
    let features: Vec<Vec<f64>> = tasks
        .iter()
        .map(|t| (1..=np).map(|mu| t.exec(mu) as f64 / t.exec(np) as f64).collect())
        .collect();
    let labels = kmeans(&features, platform.n_cores, seed);
    let n_clusters = labels.iter().copied().max().map_or(0, |l| l + 1);

    let mut clusters: Vec<(S, usize, Vec<&Task>)> = (0..n_clusters).map(|c| (S::zero(), c, Vec::new())).collect();
    for (t, &l) in tasks.iter().zip(&labels) {
        clusters[l].0 = clusters[l].0.clone() + base_utilization::<S>(t);
        clusters[l].2.push(t);
    }
    clusters.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut ordered = Vec::with_capacity(tasks.len());
    for (home, (_, _, mut members)) in clusters.into_iter().enumerate() {
        members.sort_by(|a, b| {
            base_utilization::<S>(b)
                .total_cmp(&base_utilization::<S>(a))
                .then(a.id.cmp(&b.id))
        });
        ordered.extend(members.into_iter().map(|t| (t, home % platform.n_cores)));
    }
    pack_and_grant::<S, T>(task_set, &ordered, test)
}

/// Plain first-fit decreasing by base utilization, with CaM's packing rule
/// and grant selection but no clustering.
pub fn first_fit<S: Scalar, T: SchedulabilityTest + ?Sized>(task_set: &TaskSet, test: &T) -> Option<Solution> {
    let mut ordered: Vec<&Task> = task_set.tasks().iter().collect();
    ordered.sort_by(|a, b| {
        base_utilization::<S>(b)
            .total_cmp(&base_utilization::<S>(a))
            .then(a.id.cmp(&b.id))
    });
    let ordered: Vec<(&Task, usize)> = ordered.into_iter().map(|t| (t, 0)).collect();
    pack_and_grant::<S, T>(task_set, &ordered, test)
}

/// Lowers each core's grant, in core order, while the core still passes.
/// Empty cores end with no partitions.
pub fn minimize_cache<T: SchedulabilityTest + ?Sized>(solution: &Solution, task_set: &TaskSet, test: &T) -> Solution {
    let mut split = solution.cache_part.clone();
    for (j, ids) in solution.task_alloc.iter().enumerate() {
        if ids.is_empty() {
            split[j] = 0;
            continue;
        }
        let core_at = |mu: usize| CoreAssignment::from_tasks(mu, ids.iter().map(|&id| task_set.task(id)));
        while split[j] > 1 && test.is_schedulable(&core_at(split[j] - 1)) {
            split[j] -= 1;
        }
    }
    Solution::new(solution.task_alloc.clone(), split, solution.task_alloc.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Policy;
    use crate::optimizer::{optimize, SortCriterion};
    use crate::taskmodel::{ExecProfile, PlatformConfig, Tick};
    use crate::Rational;

    fn set(n_cores: usize, rows: &[(Tick, &[Tick])]) -> TaskSet {
        let np = rows[0].1.len();
        let tasks = rows
            .iter()
            .enumerate()
            .map(|(id, (p, eps))| Task::new(id, *p, ExecProfile::new(eps.to_vec()).unwrap()).unwrap())
            .collect();
        TaskSet::new(tasks, PlatformConfig::new(n_cores, np, 64).unwrap(), 1_000).unwrap()
    }

    fn all(ts: &TaskSet) -> Vec<Option<Solution>> {
        BaselineKind::ALL
            .iter()
            .map(|b| b.run::<Rational, _>(ts, &Policy::Npfp))
            .collect()
    }

    #[test]
    fn single_task_single_core() {
        let ts = set(1, &[(10, &[5, 4, 3])]);
        for sol in all(&ts) {
            let sol = sol.expect("a lone feasible task is always placed");
            assert!(sol.verify(&ts, &Policy::Npfp));
        }
    }

    #[test]
    fn hopeless_task_gives_none() {
        let ts = set(2, &[(10, &[13, 12, 11]), (20, &[1, 1, 1])]);
        assert!(all(&ts).iter().all(Option::is_none));
    }

    #[test]
    fn incompatible_pair_on_one_core() {
        // U = 0.9 but the long job blocks the short one past its period.
        let ts = set(1, &[(10, &[5, 5]), (100, &[40, 40])]);
        assert!(all(&ts).iter().all(Option::is_none));
    }

    #[test]
    fn single_task_cam_iff_some_grant() {
        let ok = set(2, &[(10, &[12, 9, 8])]);
        assert!(run_cam::<Rational, _>(&ok, &Policy::Npfp).is_some());
        let bad = set(2, &[(10, &[12, 11, 11])]);
        assert!(run_cam::<Rational, _>(&bad, &Policy::Npfp).is_none());
    }

    #[test]
    fn kmeans_separates_identical_groups() {
        let a = vec![3.0, 2.0, 1.0];
        let b = vec![1.5, 1.2, 1.0];
        let c = vec![1.0, 1.0, 1.0];
        let points = vec![a.clone(), b.clone(), c.clone(), a.clone(), c.clone(), b, a, c];
        for seed in 0..20 {
            let l = kmeans(&points, 3, seed);
            assert_eq!(l[0], l[3]);
            assert_eq!(l[0], l[6]);
            assert_eq!(l[1], l[5]);
            assert_eq!(l[2], l[4]);
            assert_eq!(l[2], l[7]);
            assert_ne!(l[0], l[1]);
            assert_ne!(l[0], l[2]);
            assert_ne!(l[1], l[2]);
        }
        assert_eq!(kmeans(&points, 3, 5), kmeans(&points, 3, 5));
    }

    #[test]
    fn flat_profiles_match_first_fit() {
        let ts = set(
            2,
            &[(10, &[3, 3]), (20, &[5, 5]), (40, &[9, 9]), (10, &[2, 2]), (80, &[30, 30])],
        );
        assert_eq!(kmeans(&vec![vec![1.0, 1.0]; 5], 2, CAM_SEED), vec![0; 5]);
        let cam = run_cam::<Rational, _>(&ts, &Policy::Npfp);
        let ff = first_fit::<Rational, _>(&ts, &Policy::Npfp);
        assert_eq!(cam, ff);
    }

    #[test]
    fn minimize_flat_core_to_one() {
        let ts = set(1, &[(10, &[3, 3, 3, 3])]);
        let sol = Solution::new(vec![vec![0]], vec![4], 1);
        assert_eq!(minimize_cache(&sol, &ts, &Policy::Npfp).cache_part, vec![1]);
        let one = Solution::new(vec![vec![0]], vec![1], 1);
        assert_eq!(minimize_cache(&one, &ts, &Policy::Npfp), one);
    }

    #[test]
    fn minimize_table_one_comp_solution() {
        let ts = set(
            2,
            &[
                (100, &[36, 35, 34, 34]),
                (100, &[75, 55, 45, 27]),
                (150, &[77, 48, 35, 25]),
                (150, &[85, 82, 81, 79]),
            ],
        );
        let sol = optimize::<Rational, _>(&ts, SortCriterion::Comp, &Policy::Npfp)
            .into_solution()
            .unwrap();
        let min = minimize_cache(&sol, &ts, &Policy::Npfp);
        assert!(min.verify(&ts, &Policy::Npfp));
        assert!(min.total_cache_used <= sol.total_cache_used);
        for (j, ids) in min.task_alloc.iter().enumerate() {
            let passes = |mu: usize| Policy::Npfp.is_schedulable(&CoreAssignment::from_tasks(mu, ids.iter().map(|&id| ts.task(id))));
            assert!(passes(min.cache_part[j]));
            assert!((1..min.cache_part[j]).all(|mu| !passes(mu)));
        }
        assert_eq!(minimize_cache(&min, &ts, &Policy::Npfp), min);
    }

    #[test]
    fn baseline_names() {
        for b in BaselineKind::ALL {
            assert_eq!(b.to_string().parse::<BaselineKind>().unwrap(), b);
        }
    }

    #[test]
    fn pdpa_spreads_critical_tasks() {
        // Periods 10 and 100; the long task is critical on core 0, the short
        // one becomes critical on core 1.
        let ts = set(2, &[(10, &[4, 4]), (100, &[40, 40])]);
        let sol = run_pdpa::<Rational, _>(&ts, &Policy::Npfp).unwrap();
        assert_eq!(sol.task_alloc, vec![vec![1], vec![0]]);
        assert_eq!(sol.cache_part, vec![1, 1]);
    }
}
