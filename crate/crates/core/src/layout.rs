//! Flat data section: every variable, constant and predicate-state word of
//! every program gets a byte interval in one address space.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ir::{LinearProgram, Operand};
use crate::lang::{Literal, Predicate, Type};

/// Width of a predicate's last-line word.
pub const PRED_STATE_WIDTH: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataLabel {
    Var { program: u32, name: String },
    /// Per-program boolean constant used as a predicate.
    PredConst { program: u32, value: bool },
    /// Constant shared by all programs.
    Const { value: i32, bool: bool },
    /// Last executed line of a predicate.
    PredState { program: u32, predicate: Predicate },
}

impl DataLabel {
    pub fn var(program: u32, name: &str) -> Self {
        DataLabel::Var {
            program,
            name: name.to_string(),
        }
    }

    pub fn constant(lit: Literal) -> Self {
        match lit {
            Literal::Int(v) => DataLabel::Const { value: v, bool: false },
            Literal::Bool(b) => DataLabel::Const {
                value: b as i32,
                bool: true,
            },
        }
    }

    /// The slot holding a predicate's boolean value.
    pub fn predicate_value(program: u32, p: &Predicate) -> Self {
        match p {
            Predicate::Const(value) => DataLabel::PredConst {
                program,
                value: *value,
            },
            Predicate::Var(v) => DataLabel::var(program, v),
        }
    }

    pub fn predicate_state(program: u32, p: &Predicate) -> Self {
        DataLabel::PredState {
            program,
            predicate: p.clone(),
        }
    }

    pub fn program(&self) -> Option<u32> {
        match self {
            DataLabel::Var { program, .. }
            | DataLabel::PredConst { program, .. }
            | DataLabel::PredState { program, .. } => Some(*program),
            DataLabel::Const { .. } => None,
        }
    }
}

impl fmt::Display for DataLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataLabel::Var { program, name } => write!(f, "p{program}:{name}"),
            DataLabel::PredConst { program, value } => write!(f, "p{program}:${value}"),
            DataLabel::Const { value, bool: true } => write!(f, "#{}", *value != 0),
            DataLabel::Const { value, .. } => write!(f, "#{value}"),
            DataLabel::PredState { program, predicate } => write!(f, "p{program}:{predicate}@last"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Var,
    Const,
    PredicateState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub label: DataLabel,
    pub clear_id: u32,
    pub width: u32,
    pub kind: SlotKind,
    /// Initial contents, little-endian over `width` bytes.
    pub init: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LayoutError {
    #[error("data section needs {needed} bytes but the bound is {bound}")]
    AddressSpaceExceeded { needed: u64, bound: u64 },
    #[error("unknown data label `{0}`")]
    UnknownLabel(String),
    #[error("variable `{name}` of program {program} is not declared")]
    Undeclared { program: u32, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "LayoutRepr", into = "LayoutRepr")]
pub struct FlatLayout {
    entries: Vec<LayoutEntry>,
    total: u32,
    index: HashMap<DataLabel, usize>,
}

#[derive(Serialize, Deserialize)]
struct LayoutRepr {
    total: u32,
    entries: Vec<LayoutEntry>,
}

impl From<LayoutRepr> for FlatLayout {
    fn from(r: LayoutRepr) -> Self {
        FlatLayout::from_entries(r.entries, r.total)
    }
}

impl From<FlatLayout> for LayoutRepr {
    fn from(l: FlatLayout) -> Self {
        LayoutRepr {
            total: l.total,
            entries: l.entries,
        }
    }
}

impl FlatLayout {
    /// Builds a layout from placed entries. Entries must not overlap and must
    /// fit below `total`.
    pub fn from_entries(entries: Vec<LayoutEntry>, total: u32) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.label.clone(), i))
            .collect();
        FlatLayout {
            entries,
            total,
            index,
        }
    }

    /// Entries in address order.
    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    /// Total size `t` in bytes.
    pub fn total_size(&self) -> u32 {
        self.total
    }

    pub fn entry(&self, label: &DataLabel) -> Option<&LayoutEntry> {
        self.index.get(label).map(|&i| &self.entries[i])
    }

    pub fn clear_id_of(&self, label: &DataLabel) -> Result<u32, LayoutError> {
        self.entry(label)
            .map(|e| e.clear_id)
            .ok_or_else(|| LayoutError::UnknownLabel(label.to_string()))
    }

    /// Pairs of (predicate value slot, predicate state slot) by clear id.
    pub fn predicate_states(&self) -> Vec<(u32, u32)> {
        self.entries
            .iter()
            .filter_map(|e| match &e.label {
                DataLabel::PredState { program, predicate } => {
                    let value = self.entry(&DataLabel::predicate_value(*program, predicate))?;
                    Some((value.clear_id, e.clear_id))
                }
                _ => None,
            })
            .collect()
    }

    /// Initial byte image of the data section.
    pub fn initial_image(&self) -> Vec<u8> {
        let mut image = vec![0u8; self.total as usize];
        for e in &self.entries {
            let bytes = e.init.to_le_bytes();
            let start = e.clear_id as usize;
            image[start..start + e.width as usize].copy_from_slice(&bytes[..e.width as usize]);
        }
        image
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }
}

struct Collector {
    items: Vec<(DataLabel, u32, SlotKind, i32)>,
    seen: BTreeSet<DataLabel>,
}

impl Collector {
    fn add(&mut self, label: DataLabel, width: u32, kind: SlotKind, init: i32) {
        if self.seen.insert(label.clone()) {
            self.items.push((label, width, kind, init));
        }
    }

    fn literal(&mut self, lit: Literal) {
        let width = lit.ty().width();
        self.add(DataLabel::constant(lit), width, SlotKind::Const, lit.as_i32());
    }

    fn predicate(&mut self, program: u32, p: &Predicate) {
        if let Predicate::Const(v) = p {
            self.add(
                DataLabel::predicate_value(program, p),
                Type::Bool.width(),
                SlotKind::Const,
                *v as i32,
            );
        }
        self.add(
            DataLabel::predicate_state(program, p),
            PRED_STATE_WIDTH,
            SlotKind::PredicateState,
            -1,
        );
    }
}

/// Places every data item of `programs` into one flat section. Placement
/// order is a seeded shuffle, so offsets carry no program grouping.
pub fn layout(programs: &[LinearProgram], seed: u64, bound: u64) -> Result<FlatLayout, LayoutError> {
    let mut c = Collector {
        items: Vec::new(),
        seen: BTreeSet::new(),
    };
    for (pi, p) in programs.iter().enumerate() {
        let pi = pi as u32;
        for d in &p.declarations {
            let init = d.init.map(|l| l.as_i32()).unwrap_or(0);
            c.add(DataLabel::var(pi, &d.name), d.ty.width(), SlotKind::Var, init);
        }
        for op in &p.ops {
            c.predicate(pi, &op.predicate);
            for r in op.kind.resets() {
                c.predicate(pi, r);
            }
            let vars = op
                .kind
                .sources()
                .into_iter()
                .filter_map(|o| match o {
                    Operand::Var(v) => Some(v.as_str()),
                    Operand::Lit(l) => {
                        c.literal(*l);
                        None
                    }
                })
                .chain(op.kind.dst())
                .chain(match &op.predicate {
                    Predicate::Var(v) => Some(v.as_str()),
                    _ => None,
                })
                .collect::<Vec<_>>();
            for v in vars {
                if !c.seen.contains(&DataLabel::var(pi, v)) {
                    return Err(LayoutError::Undeclared {
                        program: pi,
                        name: v.to_string(),
                    });
                }
            }
        }
    }

    let needed: u64 = c.items.iter().map(|i| i.1 as u64).sum();
    if needed > bound || needed > u32::MAX as u64 {
        return Err(LayoutError::AddressSpaceExceeded { needed, bound });
    }

    let mut items = c.items;
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut offset = 0u32;
    let entries = items
        .into_iter()
        .map(|(label, width, kind, init)| {
            let e = LayoutEntry {
                label,
                clear_id: offset,
                width,
                kind,
                init,
            };
            offset += width;
            e
        })
        .collect();
    Ok(FlatLayout::from_entries(entries, offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::lower_program;
    use crate::lang::parse_program;
    use crate::samples;

    fn lowered(name: &str, src: &str) -> LinearProgram {
        lower_program(&parse_program(name, src).unwrap()).unwrap()
    }

    #[test]
    fn sum_of_widths() {
        let p = lowered("a", "int i\nbool c\ntrue : i = 1\nc : i = 2\n");
        let l = layout(&[p], 1, u64::MAX).unwrap();
        // oracle: i(4) + c(1) + $true(1) + states of true and c (4 each) + literals 1 and 2 (4 each)
        assert_eq!(l.total_size(), 4 + 1 + 1 + 4 + 4 + 4 + 4);
        let widths: u32 = l.entries().iter().map(|e| e.width).sum();
        assert_eq!(widths, l.total_size());
    }

    #[test]
    fn two_programs_disjoint() {
        let a = lowered("a", "int x\ntrue : print(\"x\", x)\n");
        let b = lowered("b", "int x\ntrue : print(\"x\", x)\n");
        let l = layout(&[a, b], 3, u64::MAX).unwrap();
        let xa = l.entry(&DataLabel::var(0, "x")).unwrap();
        let xb = l.entry(&DataLabel::var(1, "x")).unwrap();
        assert_eq!((xa.width, xb.width), (4, 4));
        assert!(xa.clear_id + 4 <= xb.clear_id || xb.clear_id + 4 <= xa.clear_id);
    }

    #[test]
    fn coverage_without_gaps() {
        let ps = [
            lowered("p1", samples::SUM_TO_TEN),
            lowered("p2", samples::POWERS_OF_TWO),
        ];
        for seed in 0..20 {
            let l = layout(&ps, seed, u64::MAX).unwrap();
            let mut next = 0;
            for e in l.entries() {
                assert_eq!(e.clear_id, next);
                next += e.width;
            }
            assert_eq!(next, l.total_size());
        }
    }

    #[test]
    fn shared_constants_and_private_true() {
        let ps = [
            lowered("p1", samples::SUM_TO_TEN),
            lowered("p2", samples::POWERS_OF_TWO),
        ];
        let l = layout(&ps, 0, u64::MAX).unwrap();
        let consts_10 = l
            .entries()
            .iter()
            .filter(|e| e.label == DataLabel::constant(Literal::Int(10)))
            .count();
        assert_eq!(consts_10, 1);
        assert!(l.entry(&DataLabel::PredConst { program: 0, value: true }).is_some());
        assert!(l.entry(&DataLabel::PredConst { program: 1, value: true }).is_some());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ps = [lowered("p1", samples::SUM_TO_TEN), lowered("p2", samples::POWERS_OF_TWO)];
        assert_eq!(layout(&ps, 9, u64::MAX).unwrap(), layout(&ps, 9, u64::MAX).unwrap());
        assert_ne!(layout(&ps, 9, u64::MAX).unwrap(), layout(&ps, 10, u64::MAX).unwrap());
    }

    #[test]
    fn clear_id_lookup() {
        let p = lowered("a", "int x\nint y\ntrue : x = y\n");
        let l = layout(&[p], 0, u64::MAX).unwrap();
        let first = &l.entries()[0];
        assert_eq!(l.clear_id_of(&first.label).unwrap(), 0);
        let second = &l.entries()[1];
        assert_eq!(l.clear_id_of(&second.label).unwrap(), first.width);
        assert!(matches!(
            l.clear_id_of(&DataLabel::var(0, "nope")),
            Err(LayoutError::UnknownLabel(_))
        ));
    }

    #[test]
    fn bound_enforced() {
        let p = lowered("a", "int x\ntrue : x = 1\n");
        assert!(matches!(layout(&[p], 0, 8), Err(LayoutError::AddressSpaceExceeded { .. })));
    }

    #[test]
    fn json_round_trip_and_initial_image() {
        let p = lowered("a", "int x = -2\nbool b = true\ntrue : x = 1\n");
        let l = layout(&[p], 5, u64::MAX).unwrap();
        let back: FlatLayout = serde_json::from_str(&l.to_json()).unwrap();
        assert_eq!(back, l);
        let img = l.initial_image();
        let x = l.entry(&DataLabel::var(0, "x")).unwrap().clear_id as usize;
        assert_eq!(i32::from_le_bytes(img[x..x + 4].try_into().unwrap()), -2);
        let s = l.entry(&DataLabel::predicate_state(0, &Predicate::Const(true))).unwrap();
        let s = s.clear_id as usize;
        assert_eq!(i32::from_le_bytes(img[s..s + 4].try_into().unwrap()), -1);
    }
}
