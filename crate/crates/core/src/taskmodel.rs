//! Problem instances: tasks with cache-dependent execution times, the
//! platform they run on, and the per-task utilization metrics derived from
//! them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One time unit. All schedulability arithmetic is exact integer arithmetic
/// over ticks.
pub type Tick = u64;

/// Default tick length when periods are specified in milliseconds.
pub const DEFAULT_TICK_NS: u64 = 1_000;

/// Default partition size reported for generated platforms.
pub const DEFAULT_PARTITION_KB: u32 = 64;

/// Execution time as a function of granted cache partitions.
///
/// `eps()[mu - 1]` is the execution time with `mu` partitions. Values never
/// increase with more cache.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExecProfile {
    eps: Vec<Tick>,
}

impl ExecProfile {
    /// Builds a profile, rejecting empty, zero-length or non-monotone input.
    pub fn new(eps: Vec<Tick>) -> Result<Self> {
        Self::check_shape(&eps)?;
        if let Some(k) = eps.windows(2).position(|w| w[0] < w[1]) {
            return Err(Error::InvalidProfile(format!(
                "execution time grows from {} to {} between {} and {} partitions",
                eps[k],
                eps[k + 1],
                k + 1,
                k + 2
            )));
        }
        Ok(Self { eps })
    }

    /// Builds a profile from measured data, raising any entry that is
    /// smaller than its larger-cache neighbour. Returns whether the clamp
    /// changed anything.
    pub fn clamped(mut eps: Vec<Tick>) -> Result<(Self, bool)> {
        Self::check_shape(&eps)?;
        let mut fired = false;
        for k in (0..eps.len() - 1).rev() {
            if eps[k] < eps[k + 1] {
                eps[k] = eps[k + 1];
                fired = true;
            }
        }
        Ok((Self { eps }, fired))
    }

    fn check_shape(eps: &[Tick]) -> Result<()> {
        match eps.last() {
            None => Err(Error::InvalidProfile("profile is empty".into())),
            Some(0) => Err(Error::InvalidProfile(
                "execution time with the full cache must be at least one tick".into(),
            )),
            Some(_) => Ok(()),
        }
    }

    /// Number of partition counts covered (n_p).
    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn eps(&self) -> &[Tick] {
        &self.eps
    }

    /// Execution time with `mu` partitions.
    ///
    /// # Panics
    /// If `mu` is outside `1..=len()`.
    pub fn at(&self, mu: usize) -> Tick {
        assert!(
            (1..=self.eps.len()).contains(&mu),
            "partition count {mu} outside 1..={}",
            self.eps.len()
        );
        self.eps[mu - 1]
    }

    /// Execution time with the whole cache.
    pub fn full_cache(&self) -> Tick {
        *self.eps.last().expect("profiles are non-empty")
    }

    /// Execution time with a single partition.
    pub fn min_cache(&self) -> Tick {
        self.eps[0]
    }
}

/// A sporadic, implicit-deadline, non-preemptive task.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Task {
    pub id: usize,
    pub period: Tick,
    pub profile: ExecProfile,
}

impl Task {
    pub fn new(id: usize, period: Tick, profile: ExecProfile) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidTaskSet(format!("task {id} has a zero period")));
        }
        Ok(Self { id, period, profile })
    }

    /// Execution time with `mu` partitions. Panics when out of range.
    pub fn exec(&self, mu: usize) -> Tick {
        self.profile.at(mu)
    }

    pub fn n_partitions(&self) -> usize {
        self.profile.len()
    }

    fn check_mu(&self, mu: usize) -> Result<()> {
        if (1..=self.n_partitions()).contains(&mu) {
            Ok(())
        } else {
            Err(Error::PartitionOutOfRange {
                mu,
                n_partitions: self.n_partitions(),
            })
        }
    }
}

/// The multicore platform: cores and equally sized shared-cache partitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlatformConfig {
    pub n_cores: usize,
    pub n_partitions: usize,
    pub partition_kb: u32,
}

impl PlatformConfig {
    pub fn new(n_cores: usize, n_partitions: usize, partition_kb: u32) -> Result<Self> {
        if n_cores == 0 || n_partitions == 0 || partition_kb == 0 {
            return Err(Error::InvalidTaskSet(format!(
                "platform needs at least one core, one partition and a positive partition size \
                 (got {n_cores} cores, {n_partitions} partitions, {partition_kb} KB)"
            )));
        }
        Ok(Self {
            n_cores,
            n_partitions,
            partition_kb,
        })
    }

    /// Total shared cache in KB.
    pub fn cache_kb(&self) -> u64 {
        self.n_partitions as u64 * self.partition_kb as u64
    }
}

/// A problem instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskSet {
    tasks: Vec<Task>,
    platform: PlatformConfig,
    tick_ns: u64,
    /// id -> position in `tasks`
    index: Vec<usize>,
    explicit_partition_kb: bool,
}

impl TaskSet {
    pub fn new(tasks: Vec<Task>, platform: PlatformConfig, tick_ns: u64) -> Result<Self> {
        let mut index = vec![usize::MAX; tasks.len()];
        for (pos, task) in tasks.iter().enumerate() {
            if task.id >= tasks.len() {
                return Err(Error::InvalidTaskSet(format!(
                    "task ids must be dense in 0..{}, found {}",
                    tasks.len(),
                    task.id
                )));
            }
            if index[task.id] != usize::MAX {
                return Err(Error::InvalidTaskSet(format!("duplicate task id {}", task.id)));
            }
            if task.n_partitions() != platform.n_partitions {
                return Err(Error::InvalidTaskSet(format!(
                    "task {} has a profile of length {}, platform has {} partitions",
                    task.id,
                    task.n_partitions(),
                    platform.n_partitions
                )));
            }
            index[task.id] = pos;
        }
        if tick_ns == 0 {
            return Err(Error::InvalidTaskSet("tick_ns must be positive".into()));
        }
        Ok(Self {
            tasks,
            platform,
            tick_ns,
            index,
            explicit_partition_kb: true,
        })
    }

    /// Tasks in their stored order.
    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    /// The task with the given id.
    pub fn task(&self, id: usize) -> &Task {
        &self.tasks[self.index[id]]
    }

    pub fn platform(&self) -> PlatformConfig {
        self.platform
    }

    pub fn tick_ns(&self) -> u64 {
        self.tick_ns
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// All task ids in ascending order.
    pub fn ids(&self) -> impl Iterator<Item = usize> {
        0..self.tasks.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TaskSetFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TaskSetFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// On-disk form of a [`TaskSet`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSetFile {
    pub tick_ns: u64,
    pub n_cores: usize,
    pub n_partitions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition_kb: Option<u32>,
    pub tasks: Vec<TaskRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub id: usize,
    pub period: Tick,
    pub eps: Vec<Tick>,
}

impl From<&TaskSet> for TaskSetFile {
    fn from(ts: &TaskSet) -> Self {
        Self {
            tick_ns: ts.tick_ns,
            n_cores: ts.platform.n_cores,
            n_partitions: ts.platform.n_partitions,
            partition_kb: ts.explicit_partition_kb.then_some(ts.platform.partition_kb),
            tasks: ts
                .tasks
                .iter()
                .map(|t| TaskRecord {
                    id: t.id,
                    period: t.period,
                    eps: t.profile.eps().to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<TaskSetFile> for TaskSet {
    type Error = Error;

    fn try_from(file: TaskSetFile) -> Result<Self> {
        let platform = PlatformConfig::new(
            file.n_cores,
            file.n_partitions,
            file.partition_kb.unwrap_or(DEFAULT_PARTITION_KB),
        )?;
        let tasks = file
            .tasks
            .into_iter()
            .map(|r| Task::new(r.id, r.period, ExecProfile::new(r.eps)?))
            .collect::<Result<Vec<_>>>()?;
        let mut ts = TaskSet::new(tasks, platform, file.tick_ns)?;
        ts.explicit_partition_kb = file.partition_kb.is_some();
        Ok(ts)
    }
}

/// Utilization with the whole cache, `eps[n_p - 1] / period`.
pub fn base_utilization<S: Scalar>(task: &Task) -> S {
    S::from_ticks(task.profile.full_cache(), task.period)
}

/// Utilization with `mu` partitions.
pub fn utilization_at<S: Scalar>(task: &Task, mu: usize) -> Result<S> {
    task.check_mu(mu)?;
    Ok(S::from_ticks(task.exec(mu), task.period))
}

/// Utilization a task would give back if it received the whole cache
/// instead of `mu` partitions.
pub fn cache_sensitivity_potential<S: Scalar>(task: &Task, mu: usize) -> Result<S> {
    Ok(utilization_at::<S>(task, mu)? - base_utilization::<S>(task))
}

/// Sum of base utilizations; zero for an empty collection.
pub fn scheduling_demand<'a, S, I>(tasks: I) -> S
where
    S: Scalar,
    I: IntoIterator<Item = &'a Task>,
{
    tasks
        .into_iter()
        .fold(S::zero(), |acc, t| acc + base_utilization::<S>(t))
}
