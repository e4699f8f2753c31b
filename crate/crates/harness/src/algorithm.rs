use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use npcache::baselines::BaselineKind;
use npcache::optimizer::{Optimizer, Outcome, SearchOptions};
use npcache::{Policy, Rational, Real, Scalar, Solution, SortCriterion, TaskSet};

/// Every allocator the harness can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "COMP")]
    Comp,
    #[serde(rename = "CASE")]
    Case,
    #[serde(rename = "IA3")]
    Ia3,
    #[serde(rename = "PDPA")]
    Pdpa,
    #[serde(rename = "CAM")]
    Cam,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Comp,
        Algorithm::Case,
        Algorithm::Ia3,
        Algorithm::Pdpa,
        Algorithm::Cam,
    ];

    pub fn is_proposed(self) -> bool {
        matches!(self, Algorithm::Comp | Algorithm::Case)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Comp => "COMP",
            Algorithm::Case => "CASE",
            Algorithm::Ia3 => "IA3",
            Algorithm::Pdpa => "PDPA",
            Algorithm::Cam => "CAM",
        }
    }

    fn baseline(self) -> Option<BaselineKind> {
        match self {
            Algorithm::Ia3 => Some(BaselineKind::Ia3),
            Algorithm::Pdpa => Some(BaselineKind::Pdpa),
            Algorithm::Cam => Some(BaselineKind::Cam),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| anyhow::anyhow!("unknown algorithm '{s}' (expected comp, case, ia3, pdpa or cam)"))
    }
}

/// Parses a comma-separated algorithm list; `all` selects every algorithm.
pub fn parse_algorithms(list: &str) -> anyhow::Result<Vec<Algorithm>> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(Algorithm::ALL.to_vec());
    }
    let mut out: Vec<Algorithm> = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let a: Algorithm = part.parse()?;
        if !out.contains(&a) {
            out.push(a);
        }
    }
    Ok(out)
}

/// One algorithm run on one task set.
#[derive(Clone, Debug)]
pub struct AlgoRun {
    pub solution: Option<Solution>,
    pub timed_out: bool,
    /// Outer-search counters, for COMP and CASE only.
    pub alloc_calls: Option<usize>,
    pub pruning_bound_ok: Option<bool>,
    pub runtime: Duration,
}

/// Whether exact `Rational` utilizations are safe for `task_set`: the
/// hyperperiod of all periods must stay far below the `i128` range.
pub fn exact_arithmetic_fits(task_set: &TaskSet) -> bool {
    let mut lcm: u128 = 1;
    for t in task_set.tasks() {
        let p = t.period as u128;
        let g = gcd(lcm, p);
        lcm = match (lcm / g).checked_mul(p) {
            Some(v) if v < 1 << 40 => v,
            _ => return false,
        };
    }
    true
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Runs `algorithm` with exact utilizations when they fit, floats otherwise.
/// COMP and CASE give up once `timeout` has elapsed.
pub fn run_algorithm(task_set: &TaskSet, algorithm: Algorithm, policy: Policy, timeout: Option<Duration>) -> AlgoRun {
    if exact_arithmetic_fits(task_set) {
        run_with::<Rational>(task_set, algorithm, policy, timeout)
    } else {
        run_with::<Real>(task_set, algorithm, policy, timeout)
    }
}

fn run_with<S: Scalar>(task_set: &TaskSet, algorithm: Algorithm, policy: Policy, timeout: Option<Duration>) -> AlgoRun {
    let start = Instant::now();
    match algorithm {
        Algorithm::Comp | Algorithm::Case => {
            let criterion = if algorithm == Algorithm::Comp {
                SortCriterion::Comp
            } else {
                SortCriterion::Case
            };
            let options = SearchOptions {
                deadline: timeout.map(|t| start + t),
            };
            let (outcome, stats) = Optimizer::new(criterion, &policy)
                .with_options(options)
                .run::<S>(task_set);
            let timed_out = matches!(outcome, Outcome::TimedOut);
            AlgoRun {
                solution: outcome.into_solution(),
                timed_out,
                alloc_calls: Some(stats.alloc_calls),
                pruning_bound_ok: Some(stats.within_pruning_bound(task_set.platform().n_partitions)),
                runtime: start.elapsed(),
            }
        }
        _ => {
            let kind = algorithm.baseline().expect("non-proposed algorithms are baselines");
            let solution = kind.run::<S, _>(task_set, &policy);
            AlgoRun {
                solution,
                timed_out: false,
                alloc_calls: None,
                pruning_bound_ok: None,
                runtime: start.elapsed(),
            }
        }
    }
}
