use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Picks a program index with probability proportional to its remaining size.
pub fn draw_program(remaining: &[usize], rng: &mut impl Rng) -> usize {
    let total: usize = remaining.iter().sum();
    assert!(total > 0, "nothing left to draw");
    let mut r = rng.gen_range(0..total);
    for (i, &size) in remaining.iter().enumerate() {
        if r < size {
            return i;
        }
        r -= size;
    }
    unreachable!("draw exceeds total")
}

/// The sequence of program indices produced by random interleaving of
/// programs with the given sizes.
pub fn interleave_order(sizes: &[usize], rng: &mut impl Rng) -> Vec<usize> {
    let mut remaining = sizes.to_vec();
    let total: usize = sizes.iter().sum();
    (0..total)
        .map(|_| {
            let i = draw_program(&remaining, rng);
            remaining[i] -= 1;
            i
        })
        .collect()
}

/// Merges the programs, always taking the front of the chosen program.
/// Returns the merged items with the program index of each.
pub fn interleave<T>(programs: Vec<Vec<T>>, seed: u64) -> (Vec<T>, Vec<usize>) {
    let sizes: Vec<usize> = programs.iter().map(Vec::len).collect();
    let order = interleave_order(&sizes, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut queues: Vec<std::vec::IntoIter<T>> = programs.into_iter().map(Vec::into_iter).collect();
    let merged = order.iter().map(|&i| queues[i].next().expect("queue non-empty")).collect();
    (merged, order)
}
