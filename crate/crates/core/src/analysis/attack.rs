use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::compiler::{ObfId, ObfuscatedProgram, ProvenanceMap};
use crate::eval::ExecutionTrace;

use super::formulas::{baseline_pair_prob, ratio_f64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlator {
    /// Statements touching the same physical address between shuffles of its page.
    CoAccess,
    /// Statements whose ids share a residue under the best-fitting modulus.
    Residue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub accuracy: f64,
    pub baseline: f64,
    pub advantage: f64,
    pub correlator: Correlator,
    pub trials: u64,
    /// Statements for which the correlator found any evidence.
    pub linked_statements: usize,
    pub statements: usize,
    /// Modulus recovered by the residue correlator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<u64>,
}

impl AttackReport {
    /// Mean of several reports of the same correlator.
    pub fn average(reports: &[AttackReport]) -> Option<AttackReport> {
        let first = reports.first()?;
        let k = reports.len() as f64;
        let mean = |f: fn(&AttackReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
        Some(AttackReport {
            accuracy: mean(|r| r.accuracy),
            baseline: mean(|r| r.baseline),
            advantage: mean(|r| r.advantage),
            correlator: first.correlator,
            trials: reports.iter().map(|r| r.trials).sum(),
            linked_statements: reports.iter().map(|r| r.linked_statements).sum::<usize>() / reports.len(),
            statements: first.statements,
            modulus: None,
        })
    }
}

/// Pairwise evidence between statements.
type Scores = HashMap<usize, HashMap<usize, f64>>;

fn add_group(scores: &mut Scores, group: &BTreeSet<usize>) {
    if group.len() < 2 {
        return;
    }
    let w = 1.0 / (group.len() - 1) as f64;
    for &a in group {
        for &b in group {
            if a != b {
                *scores.entry(a).or_default().entry(b).or_default() += w;
            }
        }
    }
}

fn co_access_scores(trace: &ExecutionTrace, page_bits: u32) -> Scores {
    let mut epoch: HashMap<u32, u64> = HashMap::new();
    let mut groups: HashMap<(u32, u64), BTreeSet<usize>> = HashMap::new();
    for step in &trace.steps {
        for a in &step.accesses {
            for &p in &a.shuffled {
                *epoch.entry(p).or_default() += 1;
            }
            // the first byte stands for the whole item
            if let Some(&addr) = a.phys.first() {
                let e = epoch.get(&(addr >> page_bits)).copied().unwrap_or(0);
                groups.entry((addr, e)).or_default().insert(step.index);
            }
        }
    }
    let mut scores = Scores::new();
    for g in groups.values() {
        add_group(&mut scores, g);
    }
    scores
}

/// Modulus in `[2, max_id]` minimizing `(largest residue + 1) / m`; a key
/// larger than the data section packs every residue near zero.
pub fn best_modulus(ids: &[ObfId]) -> Option<u64> {
    let max = *ids.iter().max()?;
    if max < 2 {
        return None;
    }
    let mut best = (f64::INFINITY, 0u64);
    for m in 2..=max {
        let limit = best.0 * m as f64;
        let mut worst = 0u64;
        let mut pruned = false;
        for &r in ids {
            let res = r % m;
            if res > worst {
                worst = res;
                if (worst + 1) as f64 >= limit {
                    pruned = true;
                    break;
                }
            }
        }
        if !pruned {
            best = ((worst + 1) as f64 / m as f64, m);
        }
    }
    Some(best.1)
}

fn residue_scores(program: &ObfuscatedProgram) -> (Scores, Option<u64>) {
    let ids: Vec<ObfId> = program.statements.iter().flat_map(|s| s.ids()).collect();
    let Some(m) = best_modulus(&ids) else {
        return (Scores::new(), None);
    };
    let mut groups: HashMap<u64, BTreeSet<usize>> = HashMap::new();
    for (i, s) in program.statements.iter().enumerate() {
        for id in s.ids() {
            groups.entry(id % m).or_default().insert(i);
        }
    }
    let mut scores = Scores::new();
    for g in groups.values() {
        add_group(&mut scores, g);
    }
    (scores, Some(m))
}

/// Partner-guess accuracy: each statement names the statement it is most
/// strongly linked to. Without evidence the guess is uniform, worth
/// `(|P_i| − 1)/(N − 1)` in expectation; ties are credited fractionally.
fn accuracy(scores: &Scores, truth: &ProvenanceMap) -> (f64, usize) {
    let group: Vec<usize> = truth.statements.iter().map(|o| o.program).collect();
    let sizes = truth.sizes();
    let n = group.len();
    let mut total = 0.0;
    let mut linked = 0;
    for (i, &gi) in group.iter().enumerate() {
        let row = scores.get(&i).filter(|r| !r.is_empty());
        let Some(row) = row else {
            total += (sizes[gi] - 1) as f64 / (n - 1) as f64;
            continue;
        };
        linked += 1;
        let best = row.values().copied().fold(f64::MIN, f64::max);
        let tied: Vec<usize> = row
            .iter()
            .filter(|(_, &s)| (s - best).abs() <= 1e-9 * best.abs().max(1.0))
            .map(|(&j, _)| j)
            .collect();
        let right = tied.iter().filter(|&&j| group[j] == gi).count();
        total += right as f64 / tied.len() as f64;
    }
    (total / n as f64, linked)
}

/// Guesses which statements share a program from what the untrusted side
/// sees, and scores the guesses against the ground truth.
pub fn trace_attack(
    trace: &ExecutionTrace,
    program: &ObfuscatedProgram,
    truth: &ProvenanceMap,
    correlator: Correlator,
) -> AttackReport {
    let sizes: Vec<u64> = truth.sizes().into_iter().filter(|&s| s > 0).map(|s| s as u64).collect();
    let n = truth.statements.len();
    let baseline = baseline_pair_prob(&sizes).map(|r| ratio_f64(&r)).unwrap_or(1.0);
    if n < 2 || (trace.steps.is_empty() && correlator == Correlator::CoAccess) {
        return AttackReport {
            accuracy: baseline,
            baseline,
            advantage: 0.0,
            correlator,
            trials: 1,
            linked_statements: 0,
            statements: n,
            modulus: None,
        };
    }
    let (scores, modulus) = match correlator {
        Correlator::CoAccess => (co_access_scores(trace, program.page_bits), None),
        Correlator::Residue => residue_scores(program),
    };
    let (acc, linked) = accuracy(&scores, truth);
    AttackReport {
        accuracy: acc,
        baseline,
        advantage: acc - baseline,
        correlator,
        trials: 1,
        linked_statements: linked,
        statements: n,
        modulus,
    }
}
