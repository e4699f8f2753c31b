use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use npcache::generator::{gen_scenario, ScenarioConfig, ScenarioId};
use npcache::{Policy, Solution, TaskSet};
use npcache_harness::experiment::{run_experiment, write_results, ExperimentOptions};
use npcache_harness::verify::{npedf_agreement, pedf_agreement, soundness_suite};
use npcache_harness::{parse_algorithms, run_algorithm, Algorithm};

#[derive(Parser)]
#[command(name = "npcache", version, about = "Cache partitioning and task allocation for non-preemptive multicore scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the task sets of a scenario as JSON files.
    Generate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one algorithm on one task set and print the solution as JSON.
    Solve {
        #[arg(long)]
        taskset: PathBuf,
        #[arg(long, default_value = "comp")]
        algo: String,
        #[arg(long, default_value = "npfp")]
        policy: String,
        #[arg(long = "timeout-s", default_value_t = 300)]
        timeout_s: u64,
    },
    /// Run a scenario batch and write CSV records and a JSON summary.
    Experiment {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated list, or `all`.
        #[arg(long, default_value = "all")]
        algo: String,
        #[arg(long)]
        out: PathBuf,
        /// Per-instance limit for COMP and CASE; 0 disables it.
        #[arg(long = "timeout-s", default_value_t = 300)]
        timeout_s: u64,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the oracle suites.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Random instances for the exhaustive-search comparison.
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value = "npfp")]
        policy: String,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// A scenario JSON file, a preset name such as AR-I+WD+SD-B, or `all`.
    #[arg(long)]
    scenario: String,
    /// Overrides the scenario's policy.
    #[arg(long)]
    policy: Option<String>,
    /// Overrides the scenario's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "sets-per-point")]
    sets_per_point: Option<usize>,
    /// Comma-separated u_tar values replacing the grid.
    #[arg(long = "u-tar", value_delimiter = ',')]
    u_tar: Option<Vec<f64>>,
}

/// Configuration problems exit with 2, everything else with 1.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

fn config<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Config)
}

impl ScenarioArgs {
    fn resolve(&self) -> anyhow::Result<Vec<ScenarioConfig>> {
        let seed = self.seed.unwrap_or(1);
        let mut configs = if self.scenario.eq_ignore_ascii_case("all") {
            ScenarioId::all().into_iter().map(|id| ScenarioConfig::preset(id, seed)).collect()
        } else if Path::new(&self.scenario).is_file() {
            vec![ScenarioConfig::load(&self.scenario).with_context(|| format!("loading {}", self.scenario))?]
        } else {
            let id: ScenarioId = self
                .scenario
                .parse()
                .with_context(|| format!("{} is neither a file nor a preset", self.scenario))?;
            vec![ScenarioConfig::preset(id, seed)]
        };
        for c in &mut configs {
            if let Some(p) = &self.policy {
                c.policy = p.parse()?;
            }
            if let Some(s) = self.seed {
                c.rng_seed = s;
            }
            if let Some(n) = self.sets_per_point {
                c.sets_per_point = n;
            }
            if let Some(grid) = &self.u_tar {
                c.u_tar_grid = grid.clone();
            }
            c.validate()?;
        }
        Ok(configs)
    }
}

fn out_dir(base: &Path, config: &ScenarioConfig, many: bool) -> PathBuf {
    if many {
        base.join(config.label().replace('+', "_"))
    } else {
        base.to_path_buf()
    }
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    algorithm: Algorithm,
    policy: Policy,
    schedulable: bool,
    timed_out: bool,
    runtime_ms: f64,
    solution: Option<&'a Solution>,
}

fn timeout(secs: u64) -> Option<Duration> {
    (secs > 0).then(|| Duration::from_secs(secs))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate { scenario, out } => {
            let configs = config(scenario.resolve())?;
            let many = configs.len() > 1;
            for c in &configs {
                let dir = out_dir(&out, c, many);
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                std::fs::write(dir.join("scenario.json"), serde_json::to_string_pretty(c).map_err(anyhow::Error::from)?)
                    .context("writing scenario.json")?;
                let mut count = 0;
                for set in gen_scenario(c).map_err(anyhow::Error::from)? {
                    let set = set.map_err(anyhow::Error::from)?;
                    let path = dir.join(format!("set_{:05}.json", set.index(c.sets_per_point)));
                    set.task_set.save(&path).map_err(anyhow::Error::from)?;
                    count += 1;
                }
                eprintln!("{}: {count} task sets in {}", c.label(), dir.display());
            }
        }
        Command::Solve {
            taskset,
            algo,
            policy,
            timeout_s,
        } => {
            let algorithm: Algorithm = config(algo.parse())?;
            let policy: Policy = config(policy.parse().map_err(anyhow::Error::from))?;
            let ts = config(TaskSet::load(&taskset).with_context(|| format!("loading {}", taskset.display())))?;
            let run = run_algorithm(&ts, algorithm, policy, timeout(timeout_s));
            let output = SolveOutput {
                algorithm,
                policy,
                schedulable: run.solution.is_some(),
                timed_out: run.timed_out,
                runtime_ms: run.runtime.as_secs_f64() * 1e3,
                solution: run.solution.as_ref(),
            };
            let text = serde_json::to_string_pretty(&output).map_err(anyhow::Error::from)?;
            // a closed pipe (e.g. `| head`) is not an error
            let _ = writeln!(std::io::stdout(), "{text}");
        }
        Command::Experiment {
            scenario,
            algo,
            out,
            timeout_s,
            jobs,
        } => {
            let configs = config(scenario.resolve())?;
            let options = ExperimentOptions {
                algorithms: config(parse_algorithms(&algo))?,
                timeout: timeout(timeout_s),
                jobs,
            };
            let many = configs.len() > 1;
            for c in &configs {
                let result = run_experiment(c, &options)?;
                let dir = out_dir(&out, c, many);
                write_results(&result, &dir)?;
                let totals: Vec<String> = result.summary.totals.iter().map(|(a, n)| format!("{a}={n}")).collect();
                eprintln!("{} ({} sets): {}", c.label(), result.summary.sets, totals.join(" "));
            }
        }
        Command::Verify {
            seed,
            instances,
            policy,
        } => {
            let policy: Policy = config(policy.parse().map_err(anyhow::Error::from))?;
            let soundness = soundness_suite(instances, seed, policy)?;
            println!(
                "soundness ({policy}): {} instances, {} feasible, {} solutions, {} invalid, {} beyond oracle",
                soundness.instances,
                soundness.feasible,
                soundness.solutions,
                soundness.invalid.len(),
                soundness.beat_oracle.len()
            );
            let npedf = npedf_agreement(100, seed)?;
            println!("np-edf test vs simulation: {} cores, {} disagreements", npedf.cores, npedf.disagreements.len());
            let pedf = pedf_agreement(10_000, seed);
            println!("p-edf test vs exact sum: {} cores, {} disagreements", pedf.cores, pedf.disagreements.len());
            for line in soundness
                .invalid
                .iter()
                .chain(&soundness.beat_oracle)
                .chain(&npedf.disagreements)
                .chain(&pedf.disagreements)
            {
                println!("  {line}");
            }
            if !(soundness.passed() && npedf.passed() && pedf.passed()) {
                return Err(Failure::Run(anyhow::anyhow!("oracle suite failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
