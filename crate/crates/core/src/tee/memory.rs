use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Source of the counter-indexed page permutations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PagePermuter {
    Keyed(u64),
    /// Physical offset equals clear offset. For tests.
    Identity,
}

impl PagePermuter {
    /// The permutation of page `page` at counter value `counter`, as a map
    /// from clear page offset to physical page offset.
    pub fn permutation(&self, page_bits: u32, counter: u32, page: u32) -> Vec<u16> {
        let mut p: Vec<u16> = (0..1u32 << page_bits).map(|x| x as u16).collect();
        if let PagePermuter::Keyed(key) = *self {
            let mut rng = ChaCha8Rng::seed_from_u64(key);
            rng.set_stream(((counter as u64) << 32) | page as u64);
            p.shuffle(&mut rng);
        }
        p
    }

    pub fn h(&self, page_bits: u32, counter: u32, page: u32, offset: u16) -> u16 {
        self.permutation(page_bits, counter, page)[offset as usize]
    }
}

/// Moves every byte from its position under `old` to its position under `new`.
pub fn shuffle_page(bytes: &[u8], old: &[u16], new: &[u16]) -> Vec<u8> {
    let mut out = vec![0u8; bytes.len()];
    for (o, n) in old.iter().zip(new) {
        out[*n as usize] = bytes[*o as usize];
    }
    out
}

#[derive(Debug, Clone)]
struct Page {
    bytes: Vec<u8>,
    counter: u32,
    perm: Vec<u16>,
}

/// Paged physical memory. Each page stores its bytes permuted by the
/// permutation of its current counter.
#[derive(Debug, Clone)]
pub struct DataMemory {
    page_bits: u32,
    counter_mask: u32,
    permuter: PagePermuter,
    pages: Vec<Page>,
}

impl DataMemory {
    pub fn new(image: &[u8], page_bits: u32, counter_bits: u32, permuter: PagePermuter) -> Self {
        let page_size = 1usize << page_bits;
        let count = image.len().div_ceil(page_size).max(1);
        let pages = (0..count)
            .map(|pi| {
                let perm = permuter.permutation(page_bits, 0, pi as u32);
                let mut bytes = vec![0u8; page_size];
                for (x, &phys) in perm.iter().enumerate() {
                    bytes[phys as usize] = image.get(pi * page_size + x).copied().unwrap_or(0);
                }
                Page {
                    bytes,
                    counter: 0,
                    perm,
                }
            })
            .collect();
        DataMemory {
            page_bits,
            counter_mask: if counter_bits >= 32 {
                u32::MAX
            } else {
                (1 << counter_bits) - 1
            },
            permuter,
            pages,
        }
    }

    pub fn page_bits(&self) -> u32 {
        self.page_bits
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn counter(&self, page: usize) -> u32 {
        self.pages[page].counter
    }

    /// Physical address of clear byte `clear`.
    pub fn phys(&self, clear: u32) -> u32 {
        let page = clear >> self.page_bits;
        let offset = clear & ((1 << self.page_bits) - 1);
        (page << self.page_bits) | self.pages[page as usize].perm[offset as usize] as u32
    }

    pub fn read_phys(&self, addr: u32) -> u8 {
        self.pages[(addr >> self.page_bits) as usize].bytes[(addr & ((1 << self.page_bits) - 1)) as usize]
    }

    pub fn write_phys(&mut self, addr: u32, v: u8) {
        let mask = (1 << self.page_bits) - 1;
        self.pages[(addr >> self.page_bits) as usize].bytes[(addr & mask) as usize] = v;
    }

    /// Advances the page's counter and rearranges its bytes accordingly.
    pub fn reshuffle(&mut self, page: usize) {
        let next = self.pages[page].counter.wrapping_add(1) & self.counter_mask;
        let new = self.permuter.permutation(self.page_bits, next, page as u32);
        let p = &mut self.pages[page];
        p.bytes = shuffle_page(&p.bytes, &p.perm, &new);
        p.perm = new;
        p.counter = next;
    }

    /// What an observer of memory sees.
    pub fn physical_image(&self) -> Vec<u8> {
        self.pages.iter().flat_map(|p| p.bytes.iter().copied()).collect()
    }

    /// Contents in clear order.
    pub fn clear_image(&self) -> Vec<u8> {
        let size = self.pages.len() << self.page_bits;
        (0..size as u32).map(|c| self.read_phys(self.phys(c))).collect()
    }
}
