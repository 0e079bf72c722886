//! Overhead benchmark: solo runs of each program versus one merged run.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::compiler::{compile, CompileConfig, CompileError, Compiled, ShuffleSetting};
use crate::eval::{run, RunError, RunOptions};
use crate::lang::{parse_program, OutputRecord, Program};
use crate::samples;
use crate::tee::TrustedRuntime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub average_len: u32,
    pub dot_len: u32,
    pub repetitions: usize,
    pub uniformize: bool,
    pub seed: u64,
    /// Shuffle period for both solo and merged runs.
    pub shuffle: ShuffleSetting,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            average_len: 4000,
            dot_len: 10_000,
            repetitions: 10,
            uniformize: true,
            seed: 0,
            shuffle: ShuffleSetting::Every(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub programs: Vec<String>,
    pub solo_seconds: Vec<f64>,
    pub solo_sum_seconds: f64,
    pub merged_seconds: f64,
    /// `merged / sum − 1`, in percent.
    pub overhead_percent: f64,
    pub repetitions: usize,
    pub solo_steps: Vec<u64>,
    pub merged_steps: u64,
    pub outputs_match: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("repetitions must be at least 1")]
    NoRepetitions,
}

pub fn bench_programs(average_len: u32, dot_len: u32) -> Vec<Program> {
    vec![
        parse_program("average", &samples::average_source(average_len)).expect("bundled program parses"),
        parse_program("dot", &samples::dot_product_source(dot_len)).expect("bundled program parses"),
    ]
}

/// Median of the means of consecutive groups of `group` samples.
pub fn median_of_means(samples: &[f64], group: usize) -> f64 {
    let mut means: Vec<f64> = samples
        .chunks(group.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let k = means.len();
    if k % 2 == 1 {
        means[k / 2]
    } else {
        (means[k / 2 - 1] + means[k / 2]) / 2.0
    }
}

fn run_once(c: &Compiled) -> Result<(f64, u64, Vec<OutputRecord>), BenchError> {
    let start = Instant::now();
    let mut rt = TrustedRuntime::new(&c.key, &c.layout).map_err(RunError::from)?;
    let r = run(&c.program, &mut rt, RunOptions::default())?;
    Ok((start.elapsed().as_secs_f64(), r.steps, r.outputs))
}

/// Times each program compiled alone and the merged compilation, with the
/// same runtime settings, and reports the relative overhead. Solo and merged
/// runs alternate so machine drift hits both alike.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    if cfg.repetitions == 0 {
        return Err(BenchError::NoRepetitions);
    }
    let programs = bench_programs(cfg.average_len, cfg.dot_len);
    let compile_cfg = CompileConfig {
        uniformize: cfg.uniformize,
        shuffle: cfg.shuffle,
        ..CompileConfig::with_seed(cfg.seed)
    };
    let solos = programs
        .iter()
        .map(|p| compile(std::slice::from_ref(p), &compile_cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let merged = compile(&programs, &compile_cfg)?;

    let mut solo_samples = vec![Vec::new(); solos.len()];
    let mut merged_samples = Vec::new();
    let mut solo_steps = vec![0; solos.len()];
    let mut merged_steps = 0;
    let mut solo_outputs = Vec::new();
    let mut merged_outputs = Vec::new();
    for _ in 0..cfg.repetitions {
        solo_outputs.clear();
        for (i, c) in solos.iter().enumerate() {
            let (secs, steps, out) = run_once(c)?;
            solo_samples[i].push(secs);
            solo_steps[i] = steps;
            solo_outputs.extend(out);
        }
        let (secs, steps, out) = run_once(&merged)?;
        merged_samples.push(secs);
        merged_steps = steps;
        merged_outputs = out;
    }

    let key = |o: &OutputRecord| (o.format.clone(), o.value);
    solo_outputs.sort_by_key(key);
    merged_outputs.sort_by_key(key);
    let solo_seconds: Vec<f64> = solo_samples.iter().map(|s| median_of_means(s, 2)).collect();
    let solo_sum_seconds: f64 = solo_seconds.iter().sum();
    let merged_seconds = median_of_means(&merged_samples, 2);
    Ok(BenchReport {
        programs: programs.iter().map(|p| p.name.clone()).collect(),
        solo_seconds,
        solo_sum_seconds,
        merged_seconds,
        overhead_percent: (merged_seconds / solo_sum_seconds - 1.0) * 100.0,
        repetitions: cfg.repetitions,
        solo_steps,
        merged_steps,
        outputs_match: solo_outputs == merged_outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_means_cases() {
        assert_eq!(median_of_means(&[1.0, 3.0, 10.0, 10.0, 2.0, 2.0], 2), 2.0);
        assert_eq!(median_of_means(&[4.0], 2), 4.0);
        assert_eq!(median_of_means(&[1.0, 2.0, 3.0, 4.0], 1), 2.5);
    }

    #[test]
    fn tiny_bench_is_well_formed() {
        let r = run_bench(&BenchConfig {
            average_len: 10,
            dot_len: 10,
            repetitions: 2,
            ..Default::default()
        })
        .unwrap();
        assert!(r.outputs_match);
        assert!(r.overhead_percent.is_finite());
        assert_eq!(r.solo_seconds.len(), 2);
    }
}
