use std::collections::BTreeSet;

use decorr::compiler::{compile, g, interleave, CompileConfig, IdMinter, ObfuscatedProgram, OpcodeHistogram};
use decorr::eval::{run_compiled, RunOptions};
use decorr::lang::{parse_program, run_source, Program};
use decorr::semantics::ReexecGuard;
use decorr::tee::{DataMemory, PagePermuter};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Straight-line program over three ints, printing each at the end.
fn straight_line() -> impl Strategy<Value = String> {
    let var = prop::sample::select(vec!["a", "b", "c"]);
    let operand = prop_oneof![var.clone().prop_map(String::from), (0u32..200).prop_map(|v| v.to_string())];
    let op = prop::sample::select(vec!["+", "-", "*"]);
    let stmt = (var, operand.clone(), op, operand).prop_map(|(d, x, o, y)| format!("true : {d} = {x} {o} {y}\n"));
    prop::collection::vec(stmt, 1..12).prop_map(|body| {
        let mut s = String::from("int a\nint b\nint c\ntrue : a = 5\ntrue : b = 11\n");
        s.extend(body);
        s += "true : print(\"a\", a)\ntrue : print(\"b\", b)\ntrue : print(\"c\", c)\n";
        s
    })
}

fn outputs_per_program(programs: &[Program], cfg: &CompileConfig) -> Vec<Vec<(String, i32)>> {
    let c = compile(programs, cfg).unwrap();
    let r = run_compiled(&c, RunOptions::default()).unwrap();
    let mut out = vec![Vec::new(); c.provenance.programs.len()];
    for (o, &site) in r.outputs.iter().zip(&r.output_sites) {
        out[c.provenance.statements[site].program].push((o.format.clone(), o.value));
    }
    out
}

fn reference(p: &Program) -> Vec<(String, i32)> {
    run_source(p, 1_000_000, ReexecGuard::default())
        .unwrap()
        .outputs
        .into_iter()
        .map(|o| (o.format, o.value))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merged_programs_keep_their_outputs(
        a in straight_line(),
        b in straight_line(),
        n in 1u32..25,
        seed in any::<u64>(),
        uniformize in any::<bool>(),
    ) {
        let ps = vec![
            parse_program("a", &a).unwrap(),
            parse_program("b", &b).unwrap(),
            parse_program("avg", &decorr::samples::average_source(n)).unwrap(),
        ];
        let cfg = CompileConfig { uniformize, ..CompileConfig::with_seed(seed) };
        let got = outputs_per_program(&ps, &cfg);
        for (i, p) in ps.iter().enumerate() {
            prop_assert_eq!(&got[i], &reference(p));
        }
    }

    #[test]
    fn interleaving_preserves_program_order(sizes in prop::collection::vec(0usize..8, 1..5), seed in any::<u64>()) {
        let progs: Vec<Vec<(usize, usize)>> =
            sizes.iter().enumerate().map(|(p, &n)| (0..n).map(|k| (p, k)).collect()).collect();
        let (merged, order) = interleave(progs, seed);
        prop_assert_eq!(merged.len(), sizes.iter().sum::<usize>());
        for (p, &n) in sizes.iter().enumerate() {
            let ks: Vec<usize> = merged.iter().filter(|s| s.0 == p).map(|s| s.1).collect();
            prop_assert_eq!(ks, (0..n).collect::<Vec<_>>());
        }
        prop_assert_eq!(merged.iter().map(|s| s.0).collect::<Vec<_>>(), order);
    }

    #[test]
    fn minted_ids_are_congruent_and_fresh(t in 1u64..2000, pick in 0.0f64..1.0, seed in any::<u64>()) {
        let sk = 2 * t + ((3 * t) as f64 * pick) as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut minter = IdMinter::new(sk, 1_000_000);
        let mut seen = BTreeSet::new();
        for k in 0..50 {
            let x = (k * 7919) % t;
            let r = minter.mint(x, &mut rng).unwrap();
            prop_assert_eq!(g(sk, r), x);
            prop_assert_eq!(r % sk, x);
            prop_assert!(r > sk);
            prop_assert!(seen.insert(r), "id {} issued twice", r);
        }
    }

    #[test]
    fn compiled_ids_never_repeat(seed in any::<u64>()) {
        let ps = vec![
            parse_program("p", decorr::samples::SUM_TO_TEN).unwrap(),
            parse_program("q", decorr::samples::POWERS_OF_TWO).unwrap(),
        ];
        let c = compile(&ps, &CompileConfig::with_seed(seed)).unwrap();
        let ids: Vec<u64> = c.program.statements.iter().flat_map(|s| s.ids()).collect();
        let unique: BTreeSet<u64> = ids.iter().copied().collect();
        prop_assert_eq!(unique.len(), ids.len());
        for id in ids {
            prop_assert_eq!(id % c.key.sk, c.provenance.clear_ids[&id] as u64);
        }
    }

    #[test]
    fn padded_programs_are_uniform(a in straight_line(), b in straight_line(), seed in any::<u64>()) {
        let ps = vec![parse_program("a", &a).unwrap(), parse_program("b", &b).unwrap()];
        let c = compile(&ps, &CompileConfig::with_seed(seed)).unwrap();
        let alphabet = decorr::compiler::used_alphabet(&c.merged_inputs);
        let len = c.merged_inputs[0].ops.len();
        for p in &c.merged_inputs {
            prop_assert!(OpcodeHistogram::of(p).is_uniform_over(&alphabet));
            prop_assert_eq!(p.ops.len(), len);
        }
    }

    #[test]
    fn permutation_is_a_bijection(key in any::<u64>(), page_bits in 1u32..10, counter in any::<u32>(), page in 0u32..64) {
        let p = PagePermuter::Keyed(key).permutation(page_bits, counter, page);
        let set: BTreeSet<u16> = p.iter().copied().collect();
        prop_assert_eq!(set.len(), 1 << page_bits);
        prop_assert!(set.iter().all(|&v| (v as u32) < 1 << page_bits));
    }

    #[test]
    fn memory_round_trips_through_shuffles(
        image in prop::collection::vec(any::<u8>(), 1..600),
        ops in prop::collection::vec((0usize..600, any::<u8>(), any::<bool>()), 0..200),
        key in any::<u64>(),
    ) {
        let mut shadow = image.clone();
        let mut m = DataMemory::new(&image, 6, 4, PagePermuter::Keyed(key));
        for (at, v, shuffle) in ops {
            let at = at % shadow.len();
            if shuffle {
                m.reshuffle(at >> 6);
            } else {
                m.write_phys(m.phys(at as u32), v);
                shadow[at] = v;
            }
            prop_assert_eq!(m.read_phys(m.phys(at as u32)), shadow[at]);
        }
        prop_assert_eq!(&m.clear_image()[..shadow.len()], &shadow[..]);
    }

    #[test]
    fn listing_text_round_trips(seed in any::<u64>(), n in 1u32..10) {
        let ps = vec![
            parse_program("avg", &decorr::samples::average_source(n)).unwrap(),
            parse_program("dot", &decorr::samples::dot_product_source(n)).unwrap(),
        ];
        let c = compile(&ps, &CompileConfig::with_seed(seed)).unwrap();
        let back = ObfuscatedProgram::parse(&c.program.to_text()).unwrap();
        prop_assert_eq!(back, c.program);
    }
}
