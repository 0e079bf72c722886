use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::compiler::interleave_order;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormulaError {
    #[error("at least one program is required")]
    NoPrograms,
    #[error("programs must have at least one statement")]
    EmptyProgram,
    #[error("at least two statements are required in total")]
    TooFewStatements,
    #[error("target program {0} does not exist")]
    BadTarget(usize),
    #[error("no program emits the opcode")]
    OpcodeNeverEmitted,
}

fn check(sizes: &[u64]) -> Result<(), FormulaError> {
    if sizes.is_empty() {
        return Err(FormulaError::NoPrograms);
    }
    if sizes.contains(&0) {
        return Err(FormulaError::EmptyProgram);
    }
    Ok(())
}

/// Probability that two distinct statements drawn from the merge come from
/// the same program: `(Σ|P|² − Σ|P|) / ((Σ|P|)² − Σ|P|)`.
pub fn baseline_pair_prob(sizes: &[u64]) -> Result<Ratio<u128>, FormulaError> {
    check(sizes)?;
    let total: u128 = sizes.iter().map(|&s| s as u128).sum();
    if total < 2 {
        return Err(FormulaError::TooFewStatements);
    }
    let squares: u128 = sizes.iter().map(|&s| (s as u128) * (s as u128)).sum();
    Ok(Ratio::new(squares - total, total * total - total))
}

/// Probability of placing the target program's statements correctly:
/// `(N − |P_t|)! / N!`, evaluated as a falling factorial.
pub fn reconstruct_prob(sizes: &[u64], target: usize) -> Result<BigRational, FormulaError> {
    check(sizes)?;
    let t = *sizes.get(target).ok_or(FormulaError::BadTarget(target))?;
    let n: u64 = sizes.iter().sum();
    let mut denom = BigInt::one();
    for i in 0..t {
        denom *= BigInt::from(n - i);
    }
    Ok(BigRational::new(BigInt::one(), denom))
}

/// Natural log of [`reconstruct_prob`], for sizes too large to hold exactly.
pub fn reconstruct_log_prob(sizes: &[u64], target: usize) -> Result<f64, FormulaError> {
    check(sizes)?;
    let t = *sizes.get(target).ok_or(FormulaError::BadTarget(target))?;
    let n: u64 = sizes.iter().sum();
    Ok(-(0..t).map(|i| ((n - i) as f64).ln()).sum::<f64>())
}

/// `(1 / ((n − 1) l))^l`, the upper bound for `n` programs of length `l`.
pub fn reconstruct_bound(n: u64, l: u64) -> BigRational {
    assert!(n >= 2 && l >= 1);
    let base = BigInt::from((n - 1) * l);
    BigRational::new(BigInt::one(), num_traits::pow(base, l as usize))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuessOutcome {
    /// The program the adversary names.
    pub target: usize,
    pub win: f64,
    /// `win − 1/n`.
    pub advantage: f64,
}

/// Best guess of an instruction's program from its opcode alone, where
/// `emit[i]` is the frequency of the opcode in program `i`.
pub fn educated_guess_win(sizes: &[u64], emit: &[f64]) -> Result<GuessOutcome, FormulaError> {
    check(sizes)?;
    assert_eq!(sizes.len(), emit.len(), "one frequency per program");
    let weights: Vec<f64> = sizes.iter().zip(emit).map(|(&s, &d)| s as f64 * d).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(FormulaError::OpcodeNeverEmitted);
    }
    let (target, best) = weights
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, w)| if w > acc.1 { (i, w) } else { acc });
    let win = best / total;
    Ok(GuessOutcome {
        target,
        win,
        advantage: win - 1.0 / sizes.len() as f64,
    })
}

/// `(n − 1) / n²`, the advantage floor claimed for opcode-only guessing.
/// Only holds when a single program emits the opcode.
pub fn single_emitter_advantage_floor(n: u64) -> f64 {
    (n - 1) as f64 / (n * n) as f64
}

pub fn ratio_f64(r: &Ratio<u128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn big_ratio_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    r.to_f64().unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub std_err: f64,
    pub trials: u64,
}

impl Estimate {
    fn from_hits(hits: u64, trials: u64) -> Self {
        let p = hits as f64 / trials as f64;
        Estimate {
            mean: p,
            std_err: (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
        }
    }

    pub fn within_sigma(&self, expected: f64, k: f64) -> bool {
        let sigma = (expected * (1.0 - expected) / self.trials as f64).sqrt();
        (self.mean - expected).abs() <= k * sigma + 1e-12
    }
}

/// Draws two distinct positions of a randomly interleaved merge and checks
/// whether they came from the same program.
pub fn monte_carlo_pair_prob(sizes: &[u64], trials: u64, seed: u64) -> Estimate {
    let sizes: Vec<usize> = sizes.iter().map(|&s| s as usize).collect();
    let total: usize = sizes.iter().sum();
    assert!(total >= 2 && trials >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = interleave_order(&sizes, &mut rng);
    let mut hits = 0;
    for trial in 0..trials {
        if trial % 64 == 0 {
            order = interleave_order(&sizes, &mut rng);
        }
        let a = rng.gen_range(0..total);
        let mut b = rng.gen_range(0..total - 1);
        if b >= a {
            b += 1;
        }
        hits += (order[a] == order[b]) as u64;
    }
    Estimate::from_hits(hits, trials)
}

/// Samples merges whose statements carry opcode `s` with the given
/// per-program frequency, picks a random statement showing `s`, and checks
/// whether it belongs to the program an adversary would name.
pub fn monte_carlo_educated_guess(sizes: &[u64], emit: &[f64], trials: u64, seed: u64) -> Result<Estimate, FormulaError> {
    let guess = educated_guess_win(sizes, emit)?.target;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    let mut done = 0;
    let mut showing = Vec::new();
    while done < trials {
        showing.clear();
        for (i, (&size, &d)) in sizes.iter().zip(emit).enumerate() {
            for _ in 0..size {
                if rng.gen_bool(d.clamp(0.0, 1.0)) {
                    showing.push(i);
                }
            }
        }
        if showing.is_empty() {
            continue;
        }
        hits += (showing[rng.gen_range(0..showing.len())] == guess) as u64;
        done += 1;
    }
    Ok(Estimate::from_hits(hits, trials))
}

/// True when every choice of `n + 1` positions of `order` contains two
/// statements of the same program.
pub fn pigeonhole_holds(order: &[usize], n: usize) -> bool {
    fn rec(order: &[usize], start: usize, left: usize, seen: &mut Vec<usize>) -> bool {
        if left == 0 {
            let mut s = seen.clone();
            s.sort_unstable();
            return s.windows(2).any(|w| w[0] == w[1]);
        }
        (start..order.len()).all(|i| {
            seen.push(order[i]);
            let ok = rec(order, i + 1, left - 1, seen);
            seen.pop();
            ok
        })
    }
    order.len() <= n || rec(order, 0, n + 1, &mut Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_cases() {
        assert_eq!(baseline_pair_prob(&[2, 2]).unwrap(), Ratio::new(1, 3));
        assert_eq!(baseline_pair_prob(&[7]).unwrap(), Ratio::from_integer(1));
        assert_eq!(baseline_pair_prob(&[10, 10]).unwrap(), Ratio::new(9, 19));
        assert_eq!(baseline_pair_prob(&[1]), Err(FormulaError::TooFewStatements));
        let n = 4u64;
        let big = ratio_f64(&baseline_pair_prob(&vec![1_000_000; n as usize]).unwrap());
        assert!((big - 1.0 / n as f64).abs() < 1e-5);
    }

    #[test]
    fn reconstruct_cases() {
        let r = |s: &[u64], t| reconstruct_prob(s, t).unwrap();
        assert_eq!(r(&[1, 1], 1), BigRational::new(1.into(), 2.into()));
        assert_eq!(r(&[3, 3], 1), BigRational::new(1.into(), 120.into()));
        assert!(r(&[3, 3], 1) <= reconstruct_bound(2, 3));
        assert_eq!(reconstruct_bound(2, 3), BigRational::new(1.into(), 27.into()));
        let lp = reconstruct_log_prob(&[3, 3], 1).unwrap();
        assert!((lp.exp() - 1.0 / 120.0).abs() < 1e-12);
        assert!(reconstruct_log_prob(&[5000, 5000], 0).unwrap().is_finite());
        assert_eq!(reconstruct_prob(&[3], 2), Err(FormulaError::BadTarget(2)));
    }

    #[test]
    fn educated_guess_cases() {
        let g = educated_guess_win(&[5, 5], &[1.0, 0.0]).unwrap();
        assert_eq!((g.target, g.win, g.advantage), (0, 1.0, 0.5));
        let g = educated_guess_win(&[5, 5], &[0.3, 0.3]).unwrap();
        assert_eq!((g.win, g.advantage), (0.5, 0.0));
        assert_eq!(educated_guess_win(&[4], &[0.2]).unwrap().win, 1.0);
        assert_eq!(educated_guess_win(&[4, 4], &[0.0, 0.0]), Err(FormulaError::OpcodeNeverEmitted));
        assert!(g.advantage < single_emitter_advantage_floor(2));
    }

    #[test]
    fn monte_carlo_pairs() {
        let e = monte_carlo_pair_prob(&[2, 2], 100_000, 1);
        assert!((e.mean - 1.0 / 3.0).abs() < 0.01);
        let e = monte_carlo_pair_prob(&[10, 10], 100_000, 2);
        assert!(e.within_sigma(9.0 / 19.0, 3.0));
        assert_eq!(monte_carlo_pair_prob(&[6], 1000, 3).mean, 1.0);
    }

    #[test]
    fn monte_carlo_guess() {
        let emit = [0.6, 0.2];
        let want = educated_guess_win(&[4, 6], &emit).unwrap().win;
        let e = monte_carlo_educated_guess(&[4, 6], &emit, 50_000, 4).unwrap();
        // sampled statements come from finite merges, so allow a small bias band
        assert!((e.mean - want).abs() < 0.03, "{} vs {want}", e.mean);
    }

    #[test]
    fn pigeonhole() {
        assert!(pigeonhole_holds(&[0, 1, 0, 1, 1], 2));
        assert!(pigeonhole_holds(&[0, 1, 2], 3));
        assert!(!pigeonhole_holds(&[0, 1, 2], 2));
    }
}
