use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use decorr::analysis::{
    baseline_pair_prob, educated_guess_win, ratio_f64, reconstruct_bound, reconstruct_log_prob, trace_attack,
    big_ratio_f64, AttackReport, Correlator,
};
use decorr::compiler::{compile as compile_programs, CompileConfig, KeyMaterial, ObfuscatedProgram, ProvenanceMap, ShuffleSetting};
use decorr::eval::{run as run_program, ExecutionTrace, RunError, RunOptions};
use decorr::harness::{run_bench, BenchConfig};
use decorr::ir::Opcode;
use decorr::layout::FlatLayout;
use decorr::lang::parse_program;
use decorr::semantics::ReexecGuard;
use decorr::tee::TrustedRuntime;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{AnalyzeArgs, BenchArgs, CompileArgs, Guard, RunArgs, ShuffleArgs};

pub const LISTING: &str = "program.obf";
pub const KEY: &str = "key.json";
pub const LAYOUT: &str = "layout.json";
pub const PROVENANCE: &str = "provenance.json";
pub const TRACE: &str = "trace.jsonl";

/// 3 for runtime faults, 4 for fuel exhaustion, 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<RunError>()) {
        Some(RunError::FuelExhausted(_)) => 4,
        Some(_) => 3,
        None => 1,
    }
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{}", text());
    }
    Ok(())
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Reads a file that only the trusted side holds.
fn read_trusted(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| anyhow!("trusted material unavailable: {}: {e}", path.display()))
}

fn shuffle_setting(a: ShuffleArgs) -> ShuffleSetting {
    match (a.no_shuffle, a.shuffle_period) {
        (true, _) => ShuffleSetting::Never,
        (false, Some(n)) => ShuffleSetting::Every(n),
        (false, None) => ShuffleSetting::PerProgramCount,
    }
}

#[derive(Serialize)]
struct CompileReport {
    programs: Vec<String>,
    statements: usize,
    data_bytes: u32,
    artifacts: BTreeMap<&'static str, PathBuf>,
}

pub fn compile(a: CompileArgs) -> Result<()> {
    let mut programs = Vec::new();
    for path in &a.inputs {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("p{}", programs.len()));
        let src = read(path)?;
        let p = parse_program(&name, &src).map_err(|e| anyhow!("{}:\n{e}", path.display()))?;
        programs.push(p);
    }
    let base = CompileConfig::with_seed(a.seed);
    let config = CompileConfig {
        compile_seed: a.compile_seed.unwrap_or(base.compile_seed),
        junk_seed: a.junk_seed.unwrap_or(base.junk_seed),
        perm_seed: a.perm_seed.unwrap_or(base.perm_seed),
        alpha: a.alpha,
        beta: a.beta,
        id_bound: a.id_bound,
        page_bits: a.page_bits,
        counter_bits: a.counter_bits,
        shuffle: shuffle_setting(a.shuffle),
        uniformize: !a.no_uniformize,
        junk_ratio: a.junk_ratio,
        junk_programs: a.junk_programs,
        ..base
    };
    let c = compile_programs(&programs, &config)?;

    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let mut artifacts = BTreeMap::new();
    let files = [
        ("listing", LISTING, c.program.to_text()),
        ("key", KEY, serde_json::to_string_pretty(&c.key)? + "\n"),
        ("layout", LAYOUT, c.layout.to_json() + "\n"),
        ("provenance", PROVENANCE, serde_json::to_string_pretty(&c.provenance)? + "\n"),
    ];
    for (what, file, contents) in files {
        let path = a.out.join(file);
        write(&path, &contents)?;
        artifacts.insert(what, path);
    }
    let report = CompileReport {
        programs: programs.iter().map(|p| p.name.clone()).collect(),
        statements: c.program.statements.len(),
        data_bytes: c.layout.total_size(),
        artifacts,
    };
    emit(a.json, &report, || {
        format!(
            "compiled {} programs into {} statements ({} data bytes)\nlisting: {}\ntrusted: {}, {}, {}\n",
            report.programs.len(),
            report.statements,
            report.data_bytes,
            report.artifacts["listing"].display(),
            report.artifacts["key"].display(),
            report.artifacts["layout"].display(),
            report.artifacts["provenance"].display(),
        )
    })
}

#[derive(Serialize)]
struct OutputLine {
    format: String,
    value: i32,
}

#[derive(Serialize)]
struct RunReport {
    outputs: Vec<OutputLine>,
    steps: u64,
    accesses: u64,
    shuffles: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace_sha256: Option<String>,
}

pub fn run(a: RunArgs) -> Result<()> {
    let listing = ObfuscatedProgram::parse(&read(&a.dir.join(LISTING))?)?;
    let key_path = a.key.clone().unwrap_or_else(|| a.dir.join(KEY));
    let mut key: KeyMaterial = serde_json::from_str(&read_trusted(&key_path)?)
        .with_context(|| format!("malformed key file {}", key_path.display()))?;
    let layout: FlatLayout = serde_json::from_str(&read_trusted(&a.dir.join(LAYOUT))?).context("malformed layout file")?;
    if a.shuffle.no_shuffle {
        key.shuffle_period = None;
    } else if let Some(n) = a.shuffle.shuffle_period {
        if n == 0 {
            bail!("shuffle period must be positive");
        }
        key.shuffle_period = Some(n);
    }
    let mut rt = TrustedRuntime::new(&key, &layout).map_err(RunError::from)?;
    let opts = RunOptions {
        fuel: a.fuel,
        trace: !a.no_trace,
        guard: match a.guard {
            Guard::Strict => ReexecGuard::Strict,
            Guard::Inclusive => ReexecGuard::Inclusive,
        },
    };
    let result = run_program(&listing, &mut rt, opts)?;

    let (trace, trace_sha256) = match &result.trace {
        Some(t) => {
            let path = a.trace.clone().unwrap_or_else(|| a.dir.join(TRACE));
            let text = t.to_jsonl();
            write(&path, &text)?;
            let digest: String = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
            (Some(path), Some(digest))
        }
        None => (None, None),
    };
    let report = RunReport {
        outputs: result
            .outputs
            .iter()
            .map(|o| OutputLine {
                format: o.format.clone(),
                value: o.value,
            })
            .collect(),
        steps: result.steps,
        accesses: result.stats.total_accesses,
        shuffles: result.stats.shuffles,
        trace,
        trace_sha256,
    };
    emit(a.json, &report, || {
        let mut s: String = result.outputs.iter().map(|o| format!("{o}\n")).collect();
        s += &format!("# {} steps, {} accesses, {} shuffles\n", report.steps, report.accesses, report.shuffles);
        s
    })
}

pub fn bench(a: BenchArgs) -> Result<()> {
    if a.shuffle_period == 0 {
        bail!("shuffle period must be positive");
    }
    let report = run_bench(&BenchConfig {
        average_len: a.average_len,
        dot_len: a.dot_len,
        repetitions: a.repetitions,
        uniformize: !a.no_uniformize,
        seed: a.seed,
        shuffle: ShuffleSetting::Every(a.shuffle_period),
    })?;
    emit(a.json, &report, || {
        let mut s = String::from("program        seconds\n");
        for (name, secs) in report.programs.iter().zip(&report.solo_seconds) {
            s += &format!("{name:<14} {secs:.4}\n");
        }
        s += &format!("{:<14} {:.4}\n", "sum", report.solo_sum_seconds);
        s += &format!("{:<14} {:.4}\n", "merged", report.merged_seconds);
        s += &format!("overhead       {:+.2}%  ({} repetitions)\n", report.overhead_percent, report.repetitions);
        if !report.outputs_match {
            s += "warning: merged outputs differ from solo outputs\n";
        }
        s
    })
}

#[derive(Serialize)]
struct ProgramRow {
    name: String,
    statements: usize,
    junk_only: bool,
    /// log10 of the chance of ordering this program correctly.
    reconstruct_log10: Option<f64>,
}

#[derive(Serialize)]
struct OpcodeRow {
    opcode: String,
    best_guess: String,
    win: f64,
    advantage: f64,
}

#[derive(Serialize)]
struct AnalyzeReport {
    programs: Vec<ProgramRow>,
    statements: usize,
    baseline: f64,
    /// log10 of the bound for equally sized programs.
    #[serde(skip_serializing_if = "Option::is_none")]
    reconstruct_bound_log10: Option<f64>,
    opcodes: Vec<OpcodeRow>,
    attacks: Vec<AttackReport>,
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

fn opcode_rows(listing: &ObfuscatedProgram, prov: &ProvenanceMap, sizes: &[u64]) -> Vec<OpcodeRow> {
    let mut counts: BTreeMap<Opcode, Vec<u64>> = BTreeMap::new();
    for (s, o) in listing.statements.iter().zip(&prov.statements) {
        counts.entry(s.op.opcode()).or_insert_with(|| vec![0; sizes.len()])[o.program] += 1;
    }
    counts
        .into_iter()
        .filter_map(|(op, c)| {
            let emit: Vec<f64> = c.iter().zip(sizes).map(|(&k, &n)| k as f64 / n as f64).collect();
            let g = educated_guess_win(sizes, &emit).ok()?;
            Some(OpcodeRow {
                opcode: op.to_string(),
                best_guess: prov.programs[g.target].name.clone(),
                win: g.win,
                advantage: g.advantage,
            })
        })
        .collect()
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let listing = ObfuscatedProgram::parse(&read(&a.dir.join(LISTING))?)?;
    let prov: ProvenanceMap =
        serde_json::from_str(&read_trusted(&a.dir.join(PROVENANCE))?).context("malformed provenance file")?;
    if prov.statements.len() != listing.statements.len() {
        bail!("provenance does not describe this listing");
    }
    let trace_path = a.trace.clone().unwrap_or_else(|| a.dir.join(TRACE));
    let trace = ExecutionTrace::from_jsonl(&read(&trace_path)?)
        .with_context(|| format!("malformed trace {}", trace_path.display()))?;

    let present: Vec<usize> = prov.sizes().into_iter().filter(|&s| s > 0).collect();
    let sizes: Vec<u64> = prov.sizes().into_iter().map(|s| s as u64).collect();
    let programs = prov
        .programs
        .iter()
        .enumerate()
        .map(|(i, p)| ProgramRow {
            name: p.name.clone(),
            statements: sizes[i] as usize,
            junk_only: p.junk_only,
            reconstruct_log10: reconstruct_log_prob(&sizes, i).ok().map(|l| l / std::f64::consts::LN_10),
        })
        .collect();

    let degenerate = present.len() < 2;
    let baseline = if degenerate {
        1.0
    } else {
        baseline_pair_prob(&sizes).map(|r| ratio_f64(&r)).unwrap_or(1.0)
    };
    let equal = present.windows(2).all(|w| w[0] == w[1]) && present.len() >= 2;
    let reconstruct_bound_log10 = equal.then(|| {
        let b = reconstruct_bound(present.len() as u64, present[0] as u64);
        let v = big_ratio_f64(&b);
        if v > 0.0 {
            v.log10()
        } else {
            -(present[0] as f64) * (((present.len() - 1) * present[0]) as f64).log10()
        }
    });

    let mut attacks = Vec::new();
    let mut note = None;
    if degenerate {
        note = Some("a single program: every pair shares a program, nothing to decorrelate".to_string());
    } else {
        attacks.push(trace_attack(&trace, &listing, &prov, Correlator::CoAccess));
        if a.residue {
            attacks.push(trace_attack(&trace, &listing, &prov, Correlator::Residue));
        }
    }
    let insecure = attacks.iter().any(|r| r.accuracy > r.baseline + a.tolerance);
    let report = AnalyzeReport {
        programs,
        statements: listing.statements.len(),
        baseline,
        reconstruct_bound_log10,
        opcodes: if degenerate { vec![] } else { opcode_rows(&listing, &prov, &sizes) },
        attacks,
        verdict: if insecure { "INSECURE" } else { "ok" },
        note,
    };
    emit(a.json, &report, || analyze_text(&report))
}

fn analyze_text(r: &AnalyzeReport) -> String {
    let mut s = format!("{} statements, baseline pair probability {:.4}\n\n", r.statements, r.baseline);
    s += "program              size  log10 P(reconstruct)\n";
    for p in &r.programs {
        let rec = p.reconstruct_log10.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
        let tag = if p.junk_only { " (junk)" } else { "" };
        s += &format!("{:<20} {:>4}  {rec}{tag}\n", p.name, p.statements);
    }
    if let Some(b) = r.reconstruct_bound_log10 {
        s += &format!("bound for equal sizes: {b:.2}\n");
    }
    if !r.opcodes.is_empty() {
        s += "\nopcode  guess                 win     advantage\n";
        for o in &r.opcodes {
            s += &format!("{:<7} {:<20} {:>6.3}  {:+.3}\n", o.opcode, o.best_guess, o.win, o.advantage);
        }
    }
    if !r.attacks.is_empty() {
        s += "\nattack     accuracy  baseline  advantage  linked\n";
        for a in &r.attacks {
            let name = match a.correlator {
                Correlator::CoAccess => "co-access",
                Correlator::Residue => "residue",
            };
            s += &format!(
                "{name:<10} {:>8.3}  {:>8.3}  {:>+9.3}  {}/{}\n",
                a.accuracy, a.baseline, a.advantage, a.linked_statements, a.statements
            );
        }
    }
    if let Some(n) = &r.note {
        s += &format!("\nnote: {n}\n");
    }
    s += &format!("\nverdict: {}\n", r.verdict);
    s
}
