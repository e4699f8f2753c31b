use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use npcache::Policy;

use crate::algorithm::Algorithm;
use crate::experiment::ExperimentRecord;

/// Wall-clock statistics of one (algorithm, policy, n_p) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub algorithm: Algorithm,
    pub policy: Policy,
    pub n_partitions: usize,
    pub runs: usize,
    pub avg_ms: f64,
    pub max_ms: f64,
}

pub fn runtime_report<'a>(records: impl IntoIterator<Item = &'a ExperimentRecord>) -> Vec<RuntimeRow> {
    let mut groups: BTreeMap<(Algorithm, Policy, usize), (usize, f64, f64)> = BTreeMap::new();
    for r in records {
        let g = groups
            .entry((r.algorithm, r.policy, r.n_partitions))
            .or_insert((0, 0.0, 0.0));
        g.0 += 1;
        g.1 += r.runtime_ms;
        g.2 = g.2.max(r.runtime_ms);
    }
    groups
        .into_iter()
        .map(|((algorithm, policy, n_partitions), (runs, sum, max))| RuntimeRow {
            algorithm,
            policy,
            n_partitions,
            runs,
            avg_ms: sum / runs as f64,
            max_ms: max,
        })
        .collect()
}
