//! Synthetic task-set generation: fixed-sum utilization vectors, period
//! sets, cache slowdown curves and the cycle-level execution time model.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::Policy;
use crate::error::{Error, Result};
use crate::taskmodel::{
    ExecProfile, PlatformConfig, Task, TaskSet, Tick, DEFAULT_PARTITION_KB, DEFAULT_TICK_NS,
};

/// Exponents of the synthetic profiles, ascending.
pub const SYNTHETIC_ALPHAS: [f64; 8] = [0.0, 0.023, 0.036, 0.045, 0.052, 0.058, 0.067, 0.0743];

/// Periods (ms) of the wide-range period set.
pub const WD_PERIODS_MS: [u64; 7] = [5, 10, 20, 40, 60, 80, 100];

/// Periods (ms) of the short-range period set.
pub const SH_PERIODS_MS: [u64; 4] = [10, 15, 20, 25];

/// Per-task base utilization cap used with [`PeriodSet::Sh`].
pub const SH_UTIL_CAP: f64 = 0.2;

/// Resampling attempts before a capped draw is declared infeasible in practice.
pub const MAX_UTIL_RETRIES: usize = 1_000_000;

/// Relative slack absorbed before rounding up an execution time, so that
/// products such as `0.34 * 100` do not land one tick high.
const CEIL_SLACK: f64 = 1e-9;

/// Samples `n` utilizations summing to `u_tar`, uniformly over the simplex
/// intersected with `(0, cap]^n` (`cap` defaults to 1).
///
/// UUniFast draws from the unconstrained simplex; vectors with an entry above
/// the cap are discarded and redrawn.
pub fn gen_utilizations<R: Rng + ?Sized>(
    n: usize,
    u_tar: f64,
    cap: Option<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let cap_value = cap.unwrap_or(1.0);
    if n == 0 || !(u_tar > 0.0) || !(cap_value > 0.0) {
        return Err(Error::Precondition(format!(
            "need n >= 1, u_tar > 0 and a positive cap (n={n}, u_tar={u_tar}, cap={cap_value})"
        )));
    }
    if u_tar > n as f64 * cap_value + 1e-12 {
        return Err(Error::Precondition(format!(
            "u_tar={u_tar} exceeds n * cap = {}",
            n as f64 * cap_value
        )));
    }
    let mut out = vec![0.0; n];
    for _ in 0..MAX_UTIL_RETRIES {
        let mut sum = u_tar;
        for k in 0..n - 1 {
            let next = sum * rng.gen::<f64>().powf(1.0 / (n - 1 - k) as f64);
            out[k] = sum - next;
            sum = next;
        }
        out[n - 1] = sum;
        if out.iter().all(|&u| u > 0.0 && u <= cap_value) {
            return Ok(out);
        }
    }
    Err(Error::Generation(format!(
        "no utilization vector within cap {cap_value} after {MAX_UTIL_RETRIES} draws (n={n}, u_tar={u_tar})"
    )))
}

/// `exp((n_p - mu) * alpha)`: slowdown with `mu` of `n_p` partitions.
pub fn synthetic_slowdown(alpha: f64, mu: usize, n_partitions: usize) -> f64 {
    ((n_partitions as f64 - mu as f64) * alpha).exp()
}

/// `I * cpi + dm * mp + dh * hp` clock cycles.
pub fn exec_time_model(instructions: f64, d_hits: f64, d_misses: f64, cpi: f64, hp: f64, mp: f64) -> f64 {
    instructions * cpi + d_misses * mp + d_hits * hp
}

/// Default timing parameters: cycles per instruction, hit and miss penalty.
pub const DEFAULT_CPI: f64 = 0.5;
pub const DEFAULT_HIT_PENALTY: f64 = 20.0;
pub const DEFAULT_MISS_PENALTY: f64 = 200.0;

/// The four benchmark programs with shipped profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Kmeans,
    Sfm,
    LetterRecog,
    CarPlanning,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [
        Benchmark::Kmeans,
        Benchmark::Sfm,
        Benchmark::LetterRecog,
        Benchmark::CarPlanning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Kmeans => "kmeans",
            Benchmark::Sfm => "sfm",
            Benchmark::LetterRecog => "letter_recog",
            Benchmark::CarPlanning => "car_planning",
        }
    }

    fn fixture(self) -> &'static str {
        match self {
            Benchmark::Kmeans => include_str!("../fixtures/profiles/kmeans.csv"),
            Benchmark::Sfm => include_str!("../fixtures/profiles/sfm.csv"),
            Benchmark::LetterRecog => include_str!("../fixtures/profiles/letter_recog.csv"),
            Benchmark::CarPlanning => include_str!("../fixtures/profiles/car_planning.csv"),
        }
    }

    /// The shipped `(cache_kb, slowdown)` curve.
    pub fn curve(self) -> SlowdownCurve {
        SlowdownCurve::from_csv(self.name(), self.fixture().as_bytes())
            .expect("shipped benchmark fixture is valid")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Synthetic(f64),
    Benchmark(String),
}

/// Execution-time inflation as a function of available cache.
///
/// Synthetic curves are evaluated in closed form per partition count.
/// Sampled curves are interpolated linearly in KB, held constant outside
/// the sampled range, and normalized to the platform's full cache.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowdownCurve {
    pub kind: CurveKind,
    /// `(cache_kb, slowdown)`, ascending in cache, non-increasing in slowdown.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct CurveRow {
    cache_kb: f64,
    slowdown: f64,
}

#[derive(Deserialize)]
struct CacheStatRow {
    cache_kb: f64,
    instructions: f64,
    d_hits: f64,
    d_misses: f64,
}

impl SlowdownCurve {
    pub fn synthetic(alpha: f64) -> Self {
        Self {
            kind: CurveKind::Synthetic(alpha),
            samples: Vec::new(),
        }
    }

    /// A flat curve: execution time independent of cache.
    pub fn flat() -> Self {
        Self::synthetic(0.0)
    }

    /// Builds a sampled curve. Samples are sorted by cache size and any
    /// slowdown lower than a larger-cache sample is raised to it.
    pub fn sampled(name: &str, mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidProfile(format!("curve {name} has no samples")));
        }
        if samples
            .iter()
            .any(|&(kb, s)| !(kb > 0.0) || !kb.is_finite() || !(s > 0.0) || !s.is_finite())
        {
            return Err(Error::InvalidProfile(format!(
                "curve {name} needs positive finite cache sizes and slowdowns"
            )));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidProfile(format!("curve {name} repeats a cache size")));
        }
        for k in (0..samples.len() - 1).rev() {
            samples[k].1 = samples[k].1.max(samples[k + 1].1);
        }
        Ok(Self {
            kind: CurveKind::Benchmark(name.to_string()),
            samples,
        })
    }

    /// Reads `cache_kb,slowdown` rows (header required).
    pub fn from_csv<R: Read>(name: &str, reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let samples = rdr
            .deserialize::<CurveRow>()
            .map(|row| row.map(|r| (r.cache_kb, r.slowdown)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::sampled(name, samples)
    }

    /// Builds a curve from `cache_kb,instructions,d_hits,d_misses` rows by
    /// evaluating the cycle model at each cache size. Slowdowns are relative
    /// to the largest measured cache.
    pub fn from_cache_stats<R: Read>(name: &str, reader: R, cpi: f64, hp: f64, mp: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let rows = rdr
            .deserialize::<CacheStatRow>()
            .collect::<Result<Vec<_>, _>>()?;
        if rows
            .iter()
            .any(|r| r.instructions < 0.0 || r.d_hits < 0.0 || r.d_misses < 0.0)
        {
            return Err(Error::InvalidProfile(format!("curve {name} has negative counts")));
        }
        let cycles: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.cache_kb, exec_time_model(r.instructions, r.d_hits, r.d_misses, cpi, hp, mp)))
            .collect();
        let reference = cycles
            .iter()
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|&(_, c)| c)
            .ok_or_else(|| Error::InvalidProfile(format!("curve {name} has no samples")))?;
        if !(reference > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "curve {name} has zero cycles at its largest cache size"
            )));
        }
        Self::sampled(name, cycles.into_iter().map(|(kb, c)| (kb, c / reference)).collect())
    }

    /// Raw curve value at `cache_kb`.
    fn value_at(&self, cache_kb: f64) -> f64 {
        let s = &self.samples;
        if cache_kb <= s[0].0 {
            return s[0].1;
        }
        if cache_kb >= s[s.len() - 1].0 {
            return s[s.len() - 1].1;
        }
        let k = s.partition_point(|&(kb, _)| kb <= cache_kb);
        let (x0, y0) = s[k - 1];
        let (x1, y1) = s[k];
        y0 + (y1 - y0) * (cache_kb - x0) / (x1 - x0)
    }

    /// Slowdown with `mu` partitions relative to the full cache of `platform`.
    pub fn slowdown(&self, mu: usize, platform: &PlatformConfig) -> f64 {
        match self.kind {
            CurveKind::Synthetic(alpha) => synthetic_slowdown(alpha, mu, platform.n_partitions),
            CurveKind::Benchmark(_) => {
                let kb = platform.partition_kb as f64;
                self.value_at(mu as f64 * kb) / self.value_at(platform.n_partitions as f64 * kb)
            }
        }
    }

    /// Largest slowdown on `platform` (at one partition).
    pub fn max_slowdown(&self, platform: &PlatformConfig) -> f64 {
        self.slowdown(1, platform)
    }
}

fn ceil_ticks(x: f64) -> Tick {
    (x - CEIL_SLACK * x.max(1.0)).ceil().max(0.0) as Tick
}

/// Builds a task whose full-cache execution time is `ceil(u_base * period)`
/// and whose other entries scale it by the curve.
pub fn build_task(
    id: usize,
    u_base: f64,
    period: Tick,
    curve: &SlowdownCurve,
    platform: &PlatformConfig,
) -> Result<Task> {
    let full = ceil_ticks(u_base * period as f64);
    if full == 0 {
        return Err(Error::Precondition(format!(
            "task {id}: u_base={u_base} with period {period} gives a zero-tick execution time"
        )));
    }
    let eps = (1..=platform.n_partitions)
        .map(|mu| ceil_ticks(full as f64 * curve.slowdown(mu, platform)).max(full))
        .collect();
    let (profile, _) = ExecProfile::clamped(eps)?;
    Task::new(id, period, profile)
}

/// Cache configuration presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "AR-I")]
    Ar1,
    #[serde(rename = "AR-II")]
    Ar2,
}

impl Arch {
    pub const ALL: [Arch; 2] = [Arch::Ar1, Arch::Ar2];

    pub fn platform(self) -> PlatformConfig {
        let n_partitions = match self {
            Arch::Ar1 => 16,
            Arch::Ar2 => 32,
        };
        PlatformConfig {
            n_cores: 4,
            n_partitions,
            partition_kb: DEFAULT_PARTITION_KB,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Ar1 => "AR-I",
            Arch::Ar2 => "AR-II",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeriodSet {
    #[serde(rename = "WD")]
    Wd,
    #[serde(rename = "SH")]
    Sh,
}

impl PeriodSet {
    pub const ALL: [PeriodSet; 2] = [PeriodSet::Wd, PeriodSet::Sh];

    pub fn periods_ms(self) -> &'static [u64] {
        match self {
            PeriodSet::Wd => &WD_PERIODS_MS,
            PeriodSet::Sh => &SH_PERIODS_MS,
        }
    }

    pub fn util_cap(self) -> Option<f64> {
        match self {
            PeriodSet::Wd => None,
            PeriodSet::Sh => Some(SH_UTIL_CAP),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PeriodSet::Wd => "WD",
            PeriodSet::Sh => "SH",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProfileSet {
    #[serde(rename = "SD-B")]
    SdB,
    #[serde(rename = "SD-S1")]
    SdS1,
    #[serde(rename = "SD-S2")]
    SdS2,
}

impl ProfileSet {
    pub const ALL: [ProfileSet; 3] = [ProfileSet::SdB, ProfileSet::SdS1, ProfileSet::SdS2];

    /// The curves a task draws from.
    pub fn curves(self) -> Vec<SlowdownCurve> {
        let synthetic = |indices: &[usize]| {
            indices
                .iter()
                .map(|&k| SlowdownCurve::synthetic(SYNTHETIC_ALPHAS[k - 1]))
                .collect()
        };
        match self {
            ProfileSet::SdB => Benchmark::ALL.iter().map(|b| b.curve()).collect(),
            ProfileSet::SdS1 => synthetic(&[1, 2, 3, 4, 5, 6]),
            ProfileSet::SdS2 => synthetic(&[1, 2, 4, 6, 7, 8]),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileSet::SdB => "SD-B",
            ProfileSet::SdS1 => "SD-S1",
            ProfileSet::SdS2 => "SD-S2",
        }
    }
}

/// The full grid 1.0, 1.1, ..., 4.0.
pub fn default_u_tar_grid() -> Vec<f64> {
    (10..=40).map(|k| k as f64 / 10.0).collect()
}

fn default_n_tasks() -> usize {
    40
}

fn default_tick_ns() -> u64 {
    DEFAULT_TICK_NS
}

/// One experiment scenario: platform, period and profile selections, and
/// the sampling grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub platform: PlatformConfig,
    pub period_set: PeriodSet,
    pub profile_set: ProfileSet,
    pub u_tar_grid: Vec<f64>,
    pub sets_per_point: usize,
    pub rng_seed: u64,
    pub policy: Policy,
    #[serde(default = "default_n_tasks")]
    pub n_tasks: usize,
    #[serde(default = "default_tick_ns")]
    pub tick_ns: u64,
}

/// A preset scenario name such as `AR-I+WD+SD-B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScenarioId {
    pub arch: Arch,
    pub periods: PeriodSet,
    pub profiles: ProfileSet,
}

impl ScenarioId {
    /// All twelve combinations, AR-I first, SH before WD.
    pub fn all() -> Vec<ScenarioId> {
        let mut out = Vec::new();
        for arch in Arch::ALL {
            for periods in [PeriodSet::Sh, PeriodSet::Wd] {
                for profiles in ProfileSet::ALL {
                    out.push(ScenarioId {
                        arch,
                        periods,
                        profiles,
                    });
                }
            }
        }
        out
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}+{}+{}",
            self.arch.as_str(),
            self.periods.as_str(),
            self.profiles.as_str()
        )
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = |x: &str| x.trim().to_ascii_uppercase().replace('_', "-");
        let parts: Vec<String> = s.split('+').map(norm).collect();
        let bad = || Error::Precondition(format!("unknown scenario {s:?}; expected e.g. AR-I+WD+SD-B"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let arch = match parts[0].as_str() {
            "AR-I" | "AR1" | "AR-1" => Arch::Ar1,
            "AR-II" | "AR2" | "AR-2" => Arch::Ar2,
            _ => return Err(bad()),
        };
        let periods = match parts[1].as_str() {
            "WD" => PeriodSet::Wd,
            "SH" => PeriodSet::Sh,
            _ => return Err(bad()),
        };
        let profiles = match parts[2].as_str() {
            "SD-B" | "B" => ProfileSet::SdB,
            "SD-S1" | "S1" => ProfileSet::SdS1,
            "SD-S2" | "S2" => ProfileSet::SdS2,
            _ => return Err(bad()),
        };
        Ok(ScenarioId {
            arch,
            periods,
            profiles,
        })
    }
}

impl ScenarioConfig {
    /// Desk-scale defaults for a preset: full grid, 20 sets per point, NP-FP.
    pub fn preset(id: ScenarioId, rng_seed: u64) -> Self {
        Self {
            name: Some(id.to_string()),
            platform: id.arch.platform(),
            period_set: id.periods,
            profile_set: id.profiles,
            u_tar_grid: default_u_tar_grid(),
            sets_per_point: 20,
            rng_seed,
            policy: Policy::Npfp,
            n_tasks: default_n_tasks(),
            tick_ns: default_tick_ns(),
        }
    }

    /// The scenario label used in reports.
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            format!(
                "np{}+{}+{}",
                self.platform.n_partitions,
                self.period_set.as_str(),
                self.profile_set.as_str()
            )
        })
    }

    pub fn validate(&self) -> Result<()> {
        PlatformConfig::new(
            self.platform.n_cores,
            self.platform.n_partitions,
            self.platform.partition_kb,
        )?;
        if self.sets_per_point == 0 {
            return Err(Error::Precondition("sets_per_point must be at least 1".into()));
        }
        if self.n_tasks == 0 {
            return Err(Error::Precondition("n_tasks must be at least 1".into()));
        }
        if self.tick_ns == 0 || 1_000_000 % self.tick_ns != 0 {
            return Err(Error::Precondition(format!(
                "tick_ns={} must divide one millisecond",
                self.tick_ns
            )));
        }
        let cap = self.period_set.util_cap().unwrap_or(1.0) * self.n_tasks as f64;
        for &u in &self.u_tar_grid {
            if !(u > 0.0) || u > self.platform.n_cores as f64 || u > cap {
                return Err(Error::Precondition(format!(
                    "u_tar {u} outside (0, {}] or above the per-task cap total {cap}",
                    self.platform.n_cores
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let config: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    /// Number of task sets the scenario yields.
    pub fn total_sets(&self) -> usize {
        self.u_tar_grid.len() * self.sets_per_point
    }

    /// Seed of the set at grid point `point`, repetition `rep`.
    pub fn set_seed(&self, point: usize, rep: usize) -> u64 {
        let mut x = splitmix64(self.rng_seed);
        x = splitmix64(x ^ point as u64);
        splitmix64(x ^ ((rep as u64) << 32 | 0x5eed))
    }

    /// Generates the set at grid point `point`, repetition `rep`. Each set
    /// has its own RNG stream, so sets can be produced in any order.
    pub fn generate_one(&self, point: usize, rep: usize) -> Result<GeneratedSet> {
        let u_tar = *self.u_tar_grid.get(point).ok_or_else(|| {
            Error::Precondition(format!("grid point {point} out of range"))
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.set_seed(point, rep));
        let utils = gen_utilizations(self.n_tasks, u_tar, self.period_set.util_cap(), &mut rng)?;
        let ticks_per_ms = 1_000_000 / self.tick_ns;
        let periods = self.period_set.periods_ms();
        let curves = self.profile_set.curves();
        let mut tasks = Vec::with_capacity(self.n_tasks);
        for (id, &u) in utils.iter().enumerate() {
            let period = periods.choose(&mut rng).expect("period set is non-empty") * ticks_per_ms;
            let curve = curves.choose(&mut rng).expect("profile set is non-empty");
            tasks.push(build_task(id, u, period, curve, &self.platform)?);
        }
        Ok(GeneratedSet {
            point,
            rep,
            u_tar,
            task_set: TaskSet::new(tasks, self.platform, self.tick_ns)?,
        })
    }
}

/// One generated instance with its grid coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSet {
    pub point: usize,
    pub rep: usize,
    pub u_tar: f64,
    pub task_set: TaskSet,
}

impl GeneratedSet {
    /// Position in the scenario stream.
    pub fn index(&self, sets_per_point: usize) -> usize {
        self.point * sets_per_point + self.rep
    }
}

/// Every task set of a scenario, grid point by grid point.
pub fn gen_scenario(config: &ScenarioConfig) -> Result<impl Iterator<Item = Result<GeneratedSet>> + '_> {
    config.validate()?;
    Ok((0..config.u_tar_grid.len())
        .flat_map(move |point| (0..config.sets_per_point).map(move |rep| (point, rep)))
        .map(move |(point, rep)| config.generate_one(point, rep)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskmodel::base_utilization;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_utilization_is_forced() {
        assert_eq!(gen_utilizations(1, 0.7, None, &mut rng(1)).unwrap(), vec![0.7]);
    }

    #[test]
    fn utilizations_sum_to_target() {
        for seed in 0..1000 {
            let u = gen_utilizations(40, 2.5, None, &mut rng(seed)).unwrap();
            assert_eq!(u.len(), 40);
            assert!((u.iter().sum::<f64>() - 2.5).abs() < 1e-9);
            assert!(u.iter().all(|&x| x > 0.0 && x <= 1.0));
        }
    }

    #[test]
    fn capped_utilizations() {
        for seed in 0..20 {
            let u = gen_utilizations(40, 4.0, Some(0.2), &mut rng(seed)).unwrap();
            assert!(u.iter().all(|&x| x > 0.0 && x <= 0.2));
            assert!((u.iter().sum::<f64>() - 4.0).abs() < 1e-9);
        }
        assert!(matches!(
            gen_utilizations(10, 2.5, Some(0.2), &mut rng(0)),
            Err(Error::Precondition(_))
        ));
        assert!(gen_utilizations(0, 1.0, None, &mut rng(0)).is_err());
    }

    #[test]
    fn synthetic_slowdown_values() {
        assert_eq!(synthetic_slowdown(0.0, 1, 32), 1.0);
        assert!((synthetic_slowdown(0.023, 1, 32) - 2.04).abs() / 2.0 < 0.03);
        assert!((synthetic_slowdown(0.0743, 1, 16) - 3.05).abs() < 0.01);
        assert_eq!(synthetic_slowdown(0.05, 16, 16), 1.0);
    }

    #[test]
    fn build_task_examples() {
        let p16 = Arch::Ar1.platform();
        let t = build_task(0, 0.34, 100, &SlowdownCurve::flat(), &p16).unwrap();
        assert!(t.profile.eps().iter().all(|&e| e == 34));

        let p32 = Arch::Ar2.platform();
        let t = build_task(0, 0.1, 1000, &SlowdownCurve::synthetic(0.023), &p32).unwrap();
        assert_eq!(t.exec(32), 100);
        // exp(0.713) = 2.040102..., so one partition needs 205 ticks.
        let expected = (100.0 * (31.0f64 * 0.023).exp()).ceil() as Tick;
        assert_eq!(expected, 205);
        assert_eq!(t.exec(1), 205);

        assert!(matches!(
            build_task(0, 0.0, 100, &SlowdownCurve::flat(), &p16),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn kmeans_doubles_below_256kb() {
        let curve = Benchmark::Kmeans.curve();
        let p16 = Arch::Ar1.platform();
        // 4 partitions = 256 KB, 16 partitions = 1024 KB.
        let s = curve.slowdown(4, &p16);
        assert!(s >= 1.9 && s <= 2.0, "{s}");
        let t = build_task(0, 0.1, 10_000, &curve, &p16).unwrap();
        assert!(t.exec(4) as f64 / t.exec(16) as f64 >= 1.9);
    }

    #[test]
    fn curves_are_normalized_and_monotone() {
        for arch in Arch::ALL {
            let platform = arch.platform();
            for set in ProfileSet::ALL {
                for curve in set.curves() {
                    assert!((curve.slowdown(platform.n_partitions, &platform) - 1.0).abs() < 1e-12);
                    for mu in 1..platform.n_partitions {
                        assert!(curve.slowdown(mu, &platform) >= curve.slowdown(mu + 1, &platform));
                    }
                }
            }
        }
    }

    #[test]
    fn sampled_curve_clamps_and_interpolates() {
        let c = SlowdownCurve::sampled("x", vec![(128.0, 1.0), (64.0, 2.0), (256.0, 1.2), (512.0, 1.0)]).unwrap();
        assert_eq!(c.samples, vec![(64.0, 2.0), (128.0, 1.2), (256.0, 1.2), (512.0, 1.0)]);
        assert!((c.value_at(96.0) - 1.6).abs() < 1e-12);
        assert_eq!(c.value_at(10.0), 2.0);
        assert_eq!(c.value_at(4096.0), 1.0);
        assert!(SlowdownCurve::sampled("x", vec![]).is_err());
    }

    #[test]
    fn exec_model_examples() {
        assert_eq!(exec_time_model(1000.0, 100.0, 10.0, 0.5, 20.0, 200.0), 4500.0);
        assert_eq!(exec_time_model(0.0, 0.0, 0.0, 0.5, 20.0, 200.0), 0.0);
    }

    #[test]
    fn cache_stats_ingestion() {
        let csv = "cache_kb,instructions,d_hits,d_misses\n\
                   64,1000,100,50\n128,1000,130,20\n256,1000,140,10\n";
        let c = SlowdownCurve::from_cache_stats("s", csv.as_bytes(), 0.5, 20.0, 200.0).unwrap();
        let reference = exec_time_model(1000.0, 140.0, 10.0, 0.5, 20.0, 200.0);
        assert!((c.samples[0].1 - exec_time_model(1000.0, 100.0, 50.0, 0.5, 20.0, 200.0) / reference).abs() < 1e-12);
        assert_eq!(c.samples[2].1, 1.0);
        assert!(c.samples.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn curve_csv_requires_header() {
        assert!(SlowdownCurve::from_csv("x", "64,1.5\n128,1.0\n".as_bytes()).is_err());
    }

    #[test]
    fn scenario_example() {
        let mut config = ScenarioConfig::preset("AR-I+SH+SD-B".parse().unwrap(), 42);
        config.u_tar_grid = vec![1.0];
        config.sets_per_point = 1;
        let sets: Vec<_> = gen_scenario(&config).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(sets.len(), 1);
        let ts = &sets[0].task_set;
        assert_eq!(ts.len(), 40);
        for t in ts.tasks() {
            assert!([10_000, 15_000, 20_000, 25_000].contains(&t.period));
            // ceil rounding adds at most one tick per task
            assert!(base_utilization::<f64>(t) <= 0.2 + 1.0 / t.period as f64);
        }
        let total: f64 = ts.tasks().iter().map(base_utilization::<f64>).sum();
        assert!((total - 1.0).abs() <= 40.0 / 10_000.0);

        config.sets_per_point = 0;
        assert!(gen_scenario(&config).is_err());
    }

    #[test]
    fn wd_scenario_periods() {
        let mut config = ScenarioConfig::preset("AR-II+WD+SD-S2".parse().unwrap(), 7);
        config.u_tar_grid = vec![3.5];
        config.sets_per_point = 3;
        for set in gen_scenario(&config).unwrap() {
            let set = set.unwrap();
            for t in set.task_set.tasks() {
                assert!(WD_PERIODS_MS.iter().any(|&p| p * 1000 == t.period));
            }
        }
    }

    #[test]
    fn scenario_is_deterministic() {
        let mut config = ScenarioConfig::preset("AR-I+WD+SD-S1".parse().unwrap(), 3);
        config.u_tar_grid = vec![1.0, 2.5];
        config.sets_per_point = 2;
        let a: Vec<String> = gen_scenario(&config)
            .unwrap()
            .map(|s| s.unwrap().task_set.to_json().unwrap())
            .collect();
        let b: Vec<String> = gen_scenario(&config)
            .unwrap()
            .map(|s| s.unwrap().task_set.to_json().unwrap())
            .collect();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn profile_set_memberships() {
        let alphas = |set: ProfileSet| -> Vec<f64> {
            set.curves()
                .into_iter()
                .map(|c| match c.kind {
                    CurveKind::Synthetic(a) => a,
                    CurveKind::Benchmark(_) => f64::NAN,
                })
                .collect()
        };
        assert_eq!(alphas(ProfileSet::SdS1), vec![0.0, 0.023, 0.036, 0.045, 0.052, 0.058]);
        assert_eq!(alphas(ProfileSet::SdS2), vec![0.0, 0.023, 0.045, 0.058, 0.067, 0.0743]);
        assert_eq!(ProfileSet::SdB.curves().len(), 4);
    }

    #[test]
    fn scenario_names_round_trip() {
        let all = ScenarioId::all();
        assert_eq!(all.len(), 12);
        for id in all {
            assert_eq!(id.to_string().parse::<ScenarioId>().unwrap(), id);
        }
        assert!("AR-III+WD+SD-B".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn scenario_config_json_round_trip() {
        let config = ScenarioConfig::preset("AR-II+SH+SD-S1".parse().unwrap(), 9);
        let text = serde_json::to_string(&config).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
        assert!(text.contains("\"SH\"") && text.contains("\"SD-S1\""));
    }
}
