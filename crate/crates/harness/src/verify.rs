//! Oracle suites shared by the `verify` subcommand and the acceptance run.

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use npcache::analysis::{npedf_is_schedulable, pedf_is_schedulable};
use npcache::oracle::{exhaustive_search, npedf_simulated_schedulable, small_instance, SmallInstanceSpec};
use npcache::{BigRational, CoreAssignment, Policy, Tick};

use crate::algorithm::{run_algorithm, Algorithm};

/// Every allocator against exhaustive search on random small instances.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SoundnessReport {
    pub instances: usize,
    /// Instances where some allocation exists.
    pub feasible: usize,
    /// Solutions returned by any allocator.
    pub solutions: usize,
    /// Returned solutions that fail re-verification.
    pub invalid: Vec<String>,
    /// Allocators that returned a solution although none exists.
    pub beat_oracle: Vec<String>,
}

impl SoundnessReport {
    pub fn passed(&self) -> bool {
        self.invalid.is_empty() && self.beat_oracle.is_empty()
    }
}

pub fn soundness_suite(instances: usize, seed: u64, policy: Policy) -> anyhow::Result<SoundnessReport> {
    let mut report = SoundnessReport {
        instances,
        ..Default::default()
    };
    for k in 0..instances as u64 {
        let ts = small_instance(seed.wrapping_add(k), SmallInstanceSpec::default())?;
        let verdict = exhaustive_search(&ts, &policy)?;
        if verdict.exists_schedulable {
            report.feasible += 1;
        }
        for algo in Algorithm::ALL {
            let Some(sol) = run_algorithm(&ts, algo, policy, None).solution else {
                continue;
            };
            report.solutions += 1;
            if !sol.verify(&ts, &policy) {
                report.invalid.push(format!("instance {k}: {algo}"));
            }
            if !verdict.exists_schedulable {
                report.beat_oracle.push(format!("instance {k}: {algo}"));
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AgreementReport {
    pub cores: usize,
    pub schedulable: usize,
    pub disagreements: Vec<String>,
}

impl AgreementReport {
    pub fn passed(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// NP-EDF test against hyperperiod simulation on single-core instances.
pub fn npedf_agreement(instances: usize, seed: u64) -> anyhow::Result<AgreementReport> {
    let spec = SmallInstanceSpec {
        n_cores: 1,
        ..Default::default()
    };
    let mut report = AgreementReport {
        cores: instances,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..instances as u64 {
        let ts = small_instance(seed.wrapping_add(k), spec)?;
        let mu = rng.gen_range(1..=ts.platform().n_partitions);
        let core = CoreAssignment::from_tasks(mu, ts.tasks());
        let analytic = npedf_is_schedulable(&core);
        let simulated = npedf_simulated_schedulable(&core)?;
        report.schedulable += analytic as usize;
        if analytic != simulated {
            report.disagreements.push(format!("instance {k} at mu={mu}: test {analytic}, simulation {simulated}"));
        }
    }
    Ok(report)
}

/// P-EDF test against an arbitrary-precision utilization sum. About a third
/// of the cores sum to exactly one.
pub fn pedf_agreement(cores: usize, seed: u64) -> AgreementReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AgreementReport {
        cores,
        ..Default::default()
    };
    for k in 0..cores {
        let n = rng.gen_range(1..=8);
        let params: Vec<(Tick, Tick)> = if rng.gen_bool(1.0 / 3.0) {
            exact_unit_core(n, &mut rng)
        } else {
            let scale = rng.gen_range(0.5..1.5) / n as f64;
            (0..n)
                .map(|_| {
                    let p: Tick = rng.gen_range(1..=1_000_000);
                    let e = ((p as f64 * scale * rng.gen_range(0.5..1.5)).round() as Tick).clamp(1, p);
                    (p, e)
                })
                .collect()
        };
        let core = CoreAssignment::from_params(1, &params);
        let sum = params
            .iter()
            .fold(BigRational::zero(), |acc, &(p, e)| acc + BigRational::new(e.into(), p.into()));
        let exact = sum <= BigRational::one();
        let test = pedf_is_schedulable(&core);
        report.schedulable += test as usize;
        if test != exact {
            report.disagreements.push(format!("core {k} {params:?}: test {test}, exact {exact}"));
        }
    }
    report
}

/// `n` tasks with utilizations summing to exactly one, nudged by one tick
/// on one task half the time.
fn exact_unit_core(n: usize, rng: &mut ChaCha8Rng) -> Vec<(Tick, Tick)> {
    let base: Tick = rng.gen_range(1..=1000) * n as Tick;
    let mut left = base;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let share = if i + 1 == n {
            left
        } else {
            rng.gen_range(1..=left - (n - 1 - i) as Tick)
        };
        left -= share;
        let m: Tick = rng.gen_range(1..=50);
        // share/base written over period base*m
        out.push((base * m, share * m));
    }
    if rng.gen_bool(0.5) {
        let (p, e) = &mut out[0];
        if *e < *p {
            *e += 1;
        } else if *e > 1 {
            *e -= 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cores_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(1..=8);
            let params = exact_unit_core(n, &mut rng);
            assert_eq!(params.len(), n);
            assert!(params.iter().all(|&(p, e)| e >= 1 && e <= p));
        }
    }

    #[test]
    fn small_suites_pass() {
        assert!(pedf_agreement(300, 1).passed());
        assert!(npedf_agreement(20, 1).unwrap().passed());
        let r = soundness_suite(10, 5, Policy::Npfp).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
