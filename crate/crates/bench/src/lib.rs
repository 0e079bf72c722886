//! Fixtures shared by the benchmarks.

use decorr::compiler::{compile, CompileConfig, Compiled, ShuffleSetting};
use decorr::harness::bench_programs;

/// The benchmark pair compiled together, or `only` of them compiled alone.
pub fn compiled_pair(average_len: u32, dot_len: u32, uniformize: bool, only: Option<usize>) -> Compiled {
    let mut programs = bench_programs(average_len, dot_len);
    if let Some(i) = only {
        programs = vec![programs.swap_remove(i)];
    }
    let cfg = CompileConfig {
        uniformize,
        shuffle: ShuffleSetting::Every(2),
        ..CompileConfig::with_seed(1)
    };
    compile(&programs, &cfg).expect("benchmark programs compile")
}
