use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compiler::{KeyMaterial, ObfId};
use crate::layout::FlatLayout;
use crate::semantics::narrow;

use super::memory::{DataMemory, PagePermuter};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TeeError {
    #[error("id {0} does not name a data item")]
    ForeignId(ObfId),
    #[error("id {id} names a {actual}-byte item, not {requested} bytes")]
    WidthMismatch { id: ObfId, requested: u32, actual: u32 },
    #[error("id {0} is not a predicate")]
    NotAPredicate(ObfId),
    #[error("key material rejected: {0}")]
    BadKey(String),
}

/// Pages rearranged before an access.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleEvent {
    pub pages: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AccessStats {
    pub accesses_since_shuffle: u64,
    pub total_accesses: u64,
    pub shuffles: u64,
}

/// Decides when to shuffle: after a jittered number of accesses drawn
/// uniformly from `[1, 2n - 1]`, so the mean gap is `n`.
#[derive(Debug, Clone)]
pub struct ShufflePolicy {
    period: Option<u64>,
    rng: ChaCha8Rng,
    threshold: u64,
}

impl ShufflePolicy {
    pub fn new(period: Option<u64>, seed: u64) -> Self {
        let mut p = ShufflePolicy {
            period,
            rng: ChaCha8Rng::seed_from_u64(seed),
            threshold: u64::MAX,
        };
        p.rearm();
        p
    }

    pub fn period(&self) -> Option<u64> {
        self.period
    }

    pub fn due(&self, stats: &AccessStats) -> bool {
        self.period.is_some() && stats.accesses_since_shuffle >= self.threshold
    }

    pub fn rearm(&mut self) {
        self.threshold = match self.period {
            Some(n) => self.rng.gen_range(1..=(2 * n).max(2) - 1),
            None => u64::MAX,
        };
    }
}

/// Physical byte addresses of one resolved access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolved {
    addrs: [u32; 4],
    len: u8,
}

impl Resolved {
    pub fn addrs(&self) -> &[u32] {
        &self.addrs[..self.len as usize]
    }
}

/// The trusted side: owns the key, translates obfuscated ids to physical
/// addresses and shuffles pages. Nothing it returns reveals clear ids.
#[derive(Debug, Clone)]
pub struct TrustedRuntime {
    sk: u64,
    total: u32,
    /// Width of the item starting at each clear id, 0 inside or between items.
    widths: Vec<u8>,
    /// Predicate-state slot for each predicate value slot.
    state_of: Vec<u32>,
    memory: DataMemory,
    policy: ShufflePolicy,
    stats: AccessStats,
    touched: Vec<u32>,
    touched_flag: Vec<bool>,
    record_events: bool,
    events: Vec<ShuffleEvent>,
}

impl TrustedRuntime {
    pub fn new(key: &KeyMaterial, layout: &FlatLayout) -> Result<Self, TeeError> {
        Self::with_permuter(key, layout, PagePermuter::Keyed(key.perm_seed))
    }

    pub fn with_permuter(key: &KeyMaterial, layout: &FlatLayout, permuter: PagePermuter) -> Result<Self, TeeError> {
        let total = layout.total_size();
        if key.sk <= total as u64 {
            return Err(TeeError::BadKey("key does not exceed the data section size".into()));
        }
        if key.page_bits == 0 || key.page_bits > 16 {
            return Err(TeeError::BadKey("page_bits must be in 1..=16".into()));
        }
        let mut widths = vec![0u8; total as usize];
        for e in layout.entries() {
            widths[e.clear_id as usize] = e.width as u8;
        }
        let mut state_of = vec![NONE; total as usize];
        for (value, state) in layout.predicate_states() {
            state_of[value as usize] = state;
        }
        let memory = DataMemory::new(&layout.initial_image(), key.page_bits, key.counter_bits, permuter);
        let pages = memory.page_count();
        let jitter_seed = ChaCha8Rng::seed_from_u64(key.perm_seed).gen();
        Ok(TrustedRuntime {
            sk: key.sk,
            total,
            widths,
            state_of,
            memory,
            policy: ShufflePolicy::new(key.shuffle_period, jitter_seed),
            stats: AccessStats::default(),
            touched: Vec::new(),
            touched_flag: vec![false; pages],
            record_events: true,
            events: Vec::new(),
        })
    }

    /// Whether shuffle events are kept for [`Self::take_events`].
    pub fn record_events(&mut self, on: bool) {
        self.record_events = on;
    }

    pub fn stats(&self) -> AccessStats {
        self.stats
    }

    pub fn take_events(&mut self) -> Vec<ShuffleEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn has_events(&self) -> bool {
        !self.events.is_empty()
    }

    fn clear_of(&self, r: ObfId) -> Result<u32, TeeError> {
        let x = r % self.sk;
        if x >= self.total as u64 || self.widths[x as usize] == 0 {
            return Err(TeeError::ForeignId(r));
        }
        Ok(x as u32)
    }

    pub fn width_of(&self, r: ObfId) -> Result<u32, TeeError> {
        Ok(self.widths[self.clear_of(r)? as usize] as u32)
    }

    fn shuffle_touched(&mut self) {
        let mut pages = std::mem::take(&mut self.touched);
        pages.sort_unstable();
        for &p in &pages {
            self.memory.reshuffle(p as usize);
            self.touched_flag[p as usize] = false;
        }
        self.stats.accesses_since_shuffle = 0;
        self.stats.shuffles += 1;
        self.policy.rearm();
        if self.record_events {
            self.events.push(ShuffleEvent { pages: pages.clone() });
        }
        pages.clear();
        self.touched = pages;
    }

    /// Shuffles first if due, so an access never straddles a shuffle.
    fn access(&mut self, clear: u32, width: u32) -> Resolved {
        if self.policy.due(&self.stats) {
            self.shuffle_touched();
        }
        let mut out = Resolved {
            addrs: [0; 4],
            len: width as u8,
        };
        for j in 0..width {
            let phys = self.memory.phys(clear + j);
            out.addrs[j as usize] = phys;
            let page = phys >> self.memory.page_bits();
            if !self.touched_flag[page as usize] {
                self.touched_flag[page as usize] = true;
                self.touched.push(page);
            }
        }
        self.stats.accesses_since_shuffle += 1;
        self.stats.total_accesses += 1;
        out
    }

    /// Physical addresses of the `width` bytes named by `r`.
    pub fn resolve(&mut self, r: ObfId, width: u32) -> Result<Resolved, TeeError> {
        let clear = self.clear_of(r)?;
        let actual = self.widths[clear as usize] as u32;
        if width != actual {
            return Err(TeeError::WidthMismatch {
                id: r,
                requested: width,
                actual,
            });
        }
        Ok(self.access(clear, width))
    }

    fn read(&self, res: &Resolved) -> i32 {
        let mut bytes = [0u8; 4];
        for (b, &a) in bytes.iter_mut().zip(res.addrs()) {
            *b = self.memory.read_phys(a);
        }
        i32::from_le_bytes(bytes)
    }

    fn write(&mut self, res: &Resolved, v: i32) {
        let v = narrow(v, res.len as u32).to_le_bytes();
        for (j, &a) in res.addrs().iter().enumerate() {
            self.memory.write_phys(a, v[j]);
        }
    }

    pub fn load(&mut self, r: ObfId) -> Result<(i32, Resolved), TeeError> {
        let clear = self.clear_of(r)?;
        let res = self.access(clear, self.widths[clear as usize] as u32);
        Ok((self.read(&res), res))
    }

    pub fn store(&mut self, r: ObfId, v: i32) -> Result<Resolved, TeeError> {
        let clear = self.clear_of(r)?;
        let res = self.access(clear, self.widths[clear as usize] as u32);
        self.write(&res, v);
        Ok(res)
    }

    fn state_slot(&self, pred: ObfId) -> Result<u32, TeeError> {
        let clear = self.clear_of(pred)?;
        match self.state_of[clear as usize] {
            NONE => Err(TeeError::NotAPredicate(pred)),
            s => Ok(s),
        }
    }

    /// Last executed line of the predicate named by `pred`.
    pub fn load_last_line(&mut self, pred: ObfId) -> Result<(i32, Resolved), TeeError> {
        let slot = self.state_slot(pred)?;
        let res = self.access(slot, 4);
        Ok((self.read(&res), res))
    }

    pub fn store_last_line(&mut self, pred: ObfId, line: i32) -> Result<Resolved, TeeError> {
        let slot = self.state_slot(pred)?;
        let res = self.access(slot, 4);
        self.write(&res, line);
        Ok(res)
    }

    /// What an observer of memory sees.
    pub fn physical_image(&self) -> Vec<u8> {
        self.memory.physical_image()
    }

    /// Data section in clear order. Trusted-side debugging only.
    pub fn clear_image(&self) -> Vec<u8> {
        self.memory.clear_image()[..self.total as usize].to_vec()
    }

    pub fn page_counter(&self, page: usize) -> u32 {
        self.memory.counter(page)
    }

    /// Physical address of clear byte `clear`. Trusted-side only.
    pub fn phys_of_clear(&self, clear: u32) -> u32 {
        self.memory.phys(clear)
    }
}
