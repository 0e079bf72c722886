use std::collections::{HashMap, HashSet};

use rand::Rng;

/// Residue of an obfuscated id: the clear id it stands for.
pub fn g(sk: u64, r: u64) -> u64 {
    r % sk
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdError {
    #[error("clear id {x} is not below the key")]
    ClearIdTooLarge { x: u64 },
    #[error("congruence class of {x} is exhausted below {bound}")]
    ClassExhausted { x: u64, bound: u64 },
}

/// Issues fresh obfuscated ids `r = x + k*sk` with `k >= 1` and `r < id_bound`,
/// never repeating one. `r = sk` itself is never issued.
#[derive(Debug, Clone)]
pub struct IdMinter {
    sk: u64,
    id_bound: u64,
    used: HashSet<u64>,
    per_class: HashMap<u64, u64>,
}

impl IdMinter {
    pub fn new(sk: u64, id_bound: u64) -> Self {
        assert!(sk > 0, "key must be positive");
        IdMinter {
            sk,
            id_bound,
            used: HashSet::new(),
            per_class: HashMap::new(),
        }
    }

    /// Number of ids available for clear id `x`.
    pub fn class_size(&self, x: u64) -> u64 {
        let (lo, hi) = self.k_range(x);
        (hi + 1).saturating_sub(lo)
    }

    fn k_range(&self, x: u64) -> (u64, u64) {
        let lo = if x == 0 { 2 } else { 1 };
        let hi = self.id_bound.saturating_sub(1).saturating_sub(x) / self.sk;
        (lo, hi)
    }

    pub fn issued(&self) -> usize {
        self.used.len()
    }

    /// Mines an unused member of the class of `x`, uniformly.
    pub fn mint(&mut self, x: u64, rng: &mut impl Rng) -> Result<u64, IdError> {
        if x >= self.sk {
            return Err(IdError::ClearIdTooLarge { x });
        }
        let size = self.class_size(x);
        let taken = self.per_class.get(&x).copied().unwrap_or(0);
        if taken >= size {
            return Err(IdError::ClassExhausted {
                x,
                bound: self.id_bound,
            });
        }
        let (lo, hi) = self.k_range(x);
        let r = if taken * 2 < size {
            loop {
                let r = x + rng.gen_range(lo..=hi) * self.sk;
                if !self.used.contains(&r) {
                    break r;
                }
            }
        } else {
            let free: Vec<u64> = (lo..=hi)
                .map(|k| x + k * self.sk)
                .filter(|r| !self.used.contains(r))
                .collect();
            free[rng.gen_range(0..free.len())]
        };
        self.used.insert(r);
        *self.per_class.entry(x).or_default() += 1;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example_residues() {
        assert_eq!(g(109, 278083), 24);
        assert_eq!(g(109, 133), 24);
        assert_eq!(g(109, 24), 24);
        let mut m = IdMinter::new(109, 1_000_000);
        let r = m.mint(24, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r % 109, 24);
    }

    #[test]
    fn fresh_ids_per_occurrence() {
        let mut m = IdMinter::new(38, 1_000_000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ids: Vec<u64> = (0..50).map(|_| m.mint(5, &mut rng).unwrap()).collect();
        let set: HashSet<u64> = ids.iter().copied().collect();
        assert_eq!(set.len(), ids.len());
        assert!(ids.iter().all(|r| r % 38 == 5 && *r != 5));
    }

    #[test]
    fn key_itself_never_issued() {
        let mut m = IdMinter::new(10, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ids: Vec<u64> = (0..2).map(|_| m.mint(0, &mut rng).unwrap()).collect();
        assert!(!ids.contains(&10));
        assert!(m.mint(0, &mut rng).is_err());
    }

    #[test]
    fn pigeonhole_exhaustion() {
        let mut m = IdMinter::new(10, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(m.class_size(3), 9);
        for _ in 0..9 {
            m.mint(3, &mut rng).unwrap();
        }
        assert_eq!(
            m.mint(3, &mut rng),
            Err(IdError::ClassExhausted { x: 3, bound: 100 })
        );
        assert!(matches!(m.mint(10, &mut rng), Err(IdError::ClearIdTooLarge { .. })));
    }
}
