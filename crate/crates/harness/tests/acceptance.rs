//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use npcache::analysis::{npfp_response_times, ResponseTime};
use npcache::generator::{synthetic_slowdown, ScenarioConfig, ScenarioId, SYNTHETIC_ALPHAS};
use npcache::oracle::{default_horizon, npfp_observed_responses};
use npcache::taskmodel::cache_sensitivity_potential;
use npcache::{
    CoreAssignment, ExecProfile, Optimizer, Outcome, PlatformConfig, Policy, Rational, Real, SortCriterion, Task,
    TaskSet, Tick,
};
use npcache_harness::experiment::{
    run_experiment, write_results, ExperimentOptions, ExperimentResult, CACHE_SAVE_FILE, RECORDS_FILE, SUMMARY_FILE,
};
use npcache_harness::verify::{npedf_agreement, pedf_agreement, soundness_suite};
use npcache_harness::Algorithm;

const TREND_SEEDS: [u64; 3] = [1, 2, 3];
const SETS_PER_POINT: usize = 20;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn table(rows: &[(Tick, [Tick; 4])]) -> TaskSet {
    let tasks = rows
        .iter()
        .enumerate()
        .map(|(id, (p, eps))| Task::new(id, *p, ExecProfile::new(eps.to_vec()).unwrap()).unwrap())
        .collect();
    TaskSet::new(tasks, PlatformConfig::new(2, 4, 64).unwrap(), 1_000).unwrap()
}

fn table_one() -> TaskSet {
    table(&[
        (100, [36, 35, 34, 34]),
        (100, [75, 55, 45, 27]),
        (150, [77, 48, 35, 25]),
        (150, [85, 82, 81, 79]),
    ])
}

fn table_two() -> TaskSet {
    table(&[
        (200, [35, 33, 31, 26]),
        (200, [177, 172, 168, 165]),
        (250, [324, 178, 119, 80]),
        (250, [65, 63, 62, 60]),
    ])
}

/// Criterion 1. Also returns the pruning-bound verdict of its four searches.
fn worked_examples() -> (Verdict, bool) {
    let start = Instant::now();
    let mut bound_ok = true;
    let mut run = |ts: &TaskSet, c: SortCriterion| {
        let (out, stats) = Optimizer::new(c, &Policy::Npfp).run::<Rational>(ts);
        bound_ok &= stats.within_pruning_bound(ts.platform().n_partitions);
        out
    };
    let (t1, t2) = (table_one(), table_two());
    let comp1 = run(&t1, SortCriterion::Comp);
    let case1 = run(&t1, SortCriterion::Case);
    let case2 = run(&t2, SortCriterion::Case);
    let comp2 = run(&t2, SortCriterion::Comp);
    let elapsed = start.elapsed();

    let comp1_ok = comp1.solution().is_some_and(|s| s.verify(&t1, &Policy::Npfp));
    let case1_ok = matches!(case1, Outcome::NotFound { .. });
    let case2_ok = case2
        .solution()
        .is_some_and(|s| s.cache_part == [3, 1] && s.task_alloc == [vec![0, 2, 3], vec![1]]);
    let comp2_ok = matches!(comp2, Outcome::NotFound { .. });
    let pass = comp1_ok && case1_ok && case2_ok && comp2_ok && elapsed < Duration::from_secs(1);
    (
        verdict(
            pass,
            format!(
                "example 1 COMP found={comp1_ok} CASE none={case1_ok}; example 2 CASE mu=(3,1) {{0,2,3}},{{1}}={case2_ok} COMP none={comp2_ok}; {:.1} ms",
                elapsed.as_secs_f64() * 1e3
            ),
        ),
        bound_ok,
    )
}

fn response_times() -> Verdict {
    let start = Instant::now();
    let cases: [(&[(Tick, Tick)], Tick); 3] = [
        (&[(100, 35), (150, 48)], 83),
        (&[(200, 31), (200, 168)], 199),
        (&[(200, 35), (250, 65)], 100),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (params, want) in cases {
        let core = CoreAssignment::from_params(1, params);
        let report = npfp_response_times(&core);
        let observed = npfp_observed_responses(&core, default_horizon(&core)).unwrap();
        let mut worst = 0;
        for (id, r) in &report.responses {
            let ResponseTime::Bounded(r) = *r else {
                pass = false;
                continue;
            };
            worst = worst.max(r);
            pass &= observed.response_of(*id) == Some(r);
        }
        pass &= worst == want && !observed.truncated;
        parts.push(format!("{worst} (want {want})"));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(1);
    verdict(
        pass,
        format!("R = {}; simulation equal; {:.1} ms", parts.join(", "), elapsed.as_secs_f64() * 1e3),
    )
}

fn metrics() -> Verdict {
    let ts = table_one();
    let g3: Real = cache_sensitivity_potential(ts.task(2), 2).unwrap();
    let g2: Real = cache_sensitivity_potential(ts.task(1), 2).unwrap();
    let pass = (g3 - 0.1533).abs() <= 1e-3 && (g2 - 0.28).abs() <= 1e-9;
    verdict(pass, format!("gamma_3 = {g3:.6}, gamma_2 = {g2:.12}"))
}

fn calibration() -> Verdict {
    let lists: [(usize, [f64; 8]); 2] = [
        (32, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0]),
        (16, [1.0, 1.4, 1.7, 2.0, 2.2, 2.4, 2.7, 3.0]),
    ];
    let mut worst: f64 = 0.0;
    for (np, want) in lists {
        for (alpha, w) in SYNTHETIC_ALPHAS.iter().zip(want) {
            let got = synthetic_slowdown(*alpha, 1, np);
            worst = worst.max((got - w).abs() / w);
        }
    }
    verdict(worst <= 0.03, format!("largest relative error {:.2}%", worst * 100.0))
}

fn soundness() -> Verdict {
    let start = Instant::now();
    let r = soundness_suite(250, 10_000, Policy::Npfp).unwrap();
    let elapsed = start.elapsed();
    // both verdict kinds have to occur for (b) to mean anything
    let exercised = r.feasible > 0 && r.feasible < r.instances;
    let pass = r.passed() && exercised && elapsed < Duration::from_secs(300);
    verdict(
        pass,
        format!(
            "{} instances ({} feasible), {} solutions, {} invalid, {} beyond exhaustive search; {:.1} s",
            r.instances,
            r.feasible,
            r.solutions,
            r.invalid.len(),
            r.beat_oracle.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn trend_scenarios() -> Vec<ScenarioId> {
    let sh_s2: ScenarioId = "AR-II+SH+SD-S2".parse().unwrap();
    ScenarioId::all()
        .into_iter()
        .filter(|id| id.to_string().contains("+WD+") || *id == sh_s2)
        .collect()
}

struct TrendRun {
    seed: u64,
    scenario: ScenarioId,
    result: ExperimentResult,
}

fn trend_runs(out: &Path, tag: &str) -> (Vec<TrendRun>, Duration) {
    let start = Instant::now();
    let options = ExperimentOptions::default();
    let mut runs = Vec::new();
    for seed in TREND_SEEDS {
        for scenario in trend_scenarios() {
            let mut config = ScenarioConfig::preset(scenario, seed);
            config.sets_per_point = SETS_PER_POINT;
            let t = Instant::now();
            let result = run_experiment(&config, &options).unwrap();
            write_results(&result, &out.join(format!("seed{seed}")).join(scenario.to_string().replace('+', "_"))).unwrap();
            eprintln!(
                "  [{tag}] seed {seed} {scenario}: {:?} ({:.1} s)",
                result.summary.totals,
                t.elapsed().as_secs_f64()
            );
            runs.push(TrendRun { seed, scenario, result });
        }
    }
    (runs, start.elapsed())
}

fn total(run: &TrendRun, algo: Algorithm) -> usize {
    run.result.summary.totals[algo.as_str()]
}

fn trends(runs: &[TrendRun], elapsed: Duration) -> Verdict {
    let baselines = [Algorithm::Ia3, Algorithm::Pdpa, Algorithm::Cam];
    let mut held = [0usize; 3];
    for seed in TREND_SEEDS {
        let of_seed: Vec<&TrendRun> = runs.iter().filter(|r| r.seed == seed).collect();
        let wd: Vec<&&TrendRun> = of_seed.iter().filter(|r| r.scenario.to_string().contains("+WD+")).collect();
        let a = wd
            .iter()
            .all(|r| baselines.iter().all(|&b| total(r, Algorithm::Comp) >= total(r, b)));
        let b = of_seed
            .iter()
            .filter(|r| r.scenario.to_string() == "AR-II+SH+SD-S2")
            .all(|r| total(r, Algorithm::Case) > total(r, Algorithm::Comp));
        let c = wd.iter().all(|r| {
            total(r, Algorithm::Cam) <= total(r, Algorithm::Ia3) && total(r, Algorithm::Cam) <= total(r, Algorithm::Pdpa)
        });
        for (k, ok) in [a, b, c].into_iter().enumerate() {
            held[k] += ok as usize;
        }
    }
    let pass = held.iter().all(|&h| h >= 2) && elapsed <= Duration::from_secs(2 * 3600);
    verdict(
        pass,
        format!(
            "seeds holding (a) COMP>=baselines on WD: {}/3, (b) CASE>COMP on AR-II+SH+SD-S2: {}/3, (c) CaM lowest baseline on WD: {}/3; {:.0} s",
            held[0],
            held[1],
            held[2],
            elapsed.as_secs_f64()
        ),
    )
}

fn pruning(c1_ok: bool, runs: &[TrendRun]) -> Verdict {
    let mut checked = 0;
    let mut violations = 0;
    for r in runs {
        for rec in &r.result.records {
            if let Some(ok) = rec.pruning_bound_ok {
                checked += 1;
                violations += !ok as usize;
            }
        }
    }
    verdict(
        c1_ok && violations == 0,
        format!("criterion 1 searches within bound: {c1_ok}; {checked} trend searches, {violations} violations"),
    )
}

fn mu_save(runs: &[TrendRun]) -> Verdict {
    let Some(run) = runs
        .iter()
        .find(|r| r.seed == TREND_SEEDS[0] && r.scenario.to_string() == "AR-I+WD+SD-B")
    else {
        return verdict(false, "no AR-I+WD+SD-B run");
    };
    let s = &run.result.summary.mu_save;
    let mean = s.mean.unwrap_or(f64::NAN);
    let pass = s.count > 0 && mean >= 0.0 && s.max.unwrap_or(0) >= 1 && s.max.unwrap_or(0) <= 15;
    verdict(
        pass,
        format!(
            "{} common sets, mean {:.3}, min {:?}, max {:?}, histogram {:?}",
            s.count, mean, s.min, s.max, s.histogram
        ),
    )
}

fn policy_plugins() -> Verdict {
    let pedf = pedf_agreement(10_000, 7);
    let npedf = npedf_agreement(100, 7).unwrap();
    verdict(
        pedf.passed() && npedf.passed(),
        format!(
            "P-EDF {} cores ({} schedulable), {} disagreements; NP-EDF {} cores ({} schedulable), {} disagreements",
            pedf.cores,
            pedf.schedulable,
            pedf.disagreements.len(),
            npedf.cores,
            npedf.schedulable,
            npedf.disagreements.len()
        ),
    )
}

/// Drops the trailing runtime column of a records CSV.
fn without_timing(text: &str) -> String {
    text.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism(first: &Path, second: &Path, runs: &[TrendRun]) -> Verdict {
    let mut compared = 0;
    let mut differing = Vec::new();
    for r in runs {
        let rel = Path::new(&format!("seed{}", r.seed)).join(r.scenario.to_string().replace('+', "_"));
        for file in [RECORDS_FILE, CACHE_SAVE_FILE, SUMMARY_FILE] {
            let a = fs::read_to_string(first.join(&rel).join(file)).unwrap();
            let b = fs::read_to_string(second.join(&rel).join(file)).unwrap();
            let same = if file == RECORDS_FILE {
                without_timing(&a) == without_timing(&b)
            } else {
                a == b
            };
            compared += 1;
            if !same {
                differing.push(format!("{}/{file}", rel.display()));
            }
        }
    }
    verdict(
        differing.is_empty() && compared > 0,
        format!("{compared} files compared, differing: {differing:?}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, Verdict)> = Vec::new();
    let mut report = |n: usize, v: Verdict| {
        println!("criterion {n}: {} {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, v));
    };

    let (c1, c1_bound) = worked_examples();
    report(1, c1);
    report(2, response_times());
    report(3, metrics());
    report(4, calibration());
    report(5, soundness());

    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));
    let (runs, elapsed) = trend_runs(&first, "first");
    let c7 = trends(&runs, elapsed);
    report(6, pruning(c1_bound, &runs));
    report(7, c7);
    report(8, mu_save(&runs));
    report(9, policy_plugins());
    let _ = trend_runs(&second, "second");
    report(10, determinism(&first, &second, &runs));

    let failed: Vec<usize> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
