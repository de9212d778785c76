//! Randomized parallel-prefix adders.
//!
//! A prefix tree describes how the group (generate, propagate) pair of each
//! range `[i:0]` is assembled from smaller ranges. Trees are grown by
//! recursively splitting ranges; the split rule is drawn per range from a
//! per-tree mixture of three strategies (power-of-two aligned, serial,
//! uniform random), which spans ripple-like to Sklansky-like structures.
//! Ranges are memoized, so sub-ranges shared between columns are built once.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{CellFunction, CellKind, Drive};
use crate::netlist::{Cell, CellId, Net, NetId, Netlist, PinRef};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Child {
    Bit(u32),
    Node(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixNode {
    pub msb: u32,
    pub lsb: u32,
    pub level: u32,
    pub hi: Child,
    pub lo: Child,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixTree {
    pub width: u32,
    /// Children always precede their parents.
    pub nodes: Vec<PrefixNode>,
    /// `columns[i]` computes range `[i:0]`.
    pub columns: Vec<Child>,
}

#[derive(Clone, Copy, Debug)]
struct SplitMix {
    aligned: f64,
    serial: f64,
}

impl PrefixTree {
    fn range(&self, c: Child) -> (u32, u32) {
        match c {
            Child::Bit(b) => (b, b),
            Child::Node(i) => {
                let n = &self.nodes[i as usize];
                (n.msb, n.lsb)
            }
        }
    }

    fn level_of(&self, c: Child) -> u32 {
        match c {
            Child::Bit(_) => 0,
            Child::Node(i) => self.nodes[i as usize].level,
        }
    }

    pub fn depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Structural(m));
        for (i, n) in self.nodes.iter().enumerate() {
            for c in [n.hi, n.lo] {
                if let Child::Node(j) = c {
                    if j as usize >= i {
                        return bad(format!("prefix node {i} uses later node {j}"));
                    }
                }
            }
            let (hm, hl) = self.range(n.hi);
            let (lm, ll) = self.range(n.lo);
            if hm != n.msb || ll != n.lsb || hl != lm + 1 {
                return bad(format!("prefix node {i} [{}:{}] has non-contiguous children", n.msb, n.lsb));
            }
            if n.level != 1 + self.level_of(n.hi).max(self.level_of(n.lo)) {
                return bad(format!("prefix node {i} has an inconsistent level"));
            }
        }
        if self.columns.len() != self.width as usize {
            return bad("column count differs from width".into());
        }
        for (i, &c) in self.columns.iter().enumerate() {
            if self.range(c) != (i as u32, 0) {
                return bad(format!("column {i} does not compute [{i}:0]"));
            }
        }
        Ok(())
    }

    fn build(
        &mut self,
        msb: u32,
        lsb: u32,
        memo: &mut BTreeMap<(u32, u32), u32>,
        mix: SplitMix,
        rng: &mut ChaCha8Rng,
    ) -> Child {
        if msb == lsb {
            return Child::Bit(msb);
        }
        if let Some(&i) = memo.get(&(msb, lsb)) {
            return Child::Node(i);
        }
        let u: f64 = rng.random();
        let split = if u < mix.aligned {
            lsb + (1u32 << (31 - (msb - lsb).leading_zeros()))
        } else if u < mix.aligned + mix.serial {
            msb
        } else {
            rng.random_range(lsb + 1..=msb)
        };
        let lo = self.build(split - 1, lsb, memo, mix, rng);
        let hi = self.build(msb, split, memo, mix, rng);
        let level = 1 + self.level_of(hi).max(self.level_of(lo));
        let idx = self.nodes.len() as u32;
        self.nodes.push(PrefixNode { msb, lsb, level, hi, lo });
        memo.insert((msb, lsb), idx);
        Child::Node(idx)
    }

    /// Serial (ripple-carry) prefix structure.
    pub fn ripple(width: u32) -> Result<Self> {
        Self::with_mix(width, SplitMix { aligned: 0.0, serial: 1.0 }, &mut ChaCha8Rng::seed_from_u64(0))
    }

    /// Sklansky (divide-and-conquer, minimum depth) structure.
    pub fn sklansky(width: u32) -> Result<Self> {
        Self::with_mix(width, SplitMix { aligned: 1.0, serial: 0.0 }, &mut ChaCha8Rng::seed_from_u64(0))
    }

    fn with_mix(width: u32, mix: SplitMix, rng: &mut ChaCha8Rng) -> Result<Self> {
        if width < 2 {
            return Err(Error::Domain(format!("adder width must be at least 2, got {width}")));
        }
        let mut tree = PrefixTree { width, nodes: Vec::new(), columns: vec![Child::Bit(0)] };
        let mut memo = BTreeMap::new();
        for i in 1..width {
            let c = tree.build(i, 0, &mut memo, mix, rng);
            tree.columns.push(c);
        }
        Ok(tree)
    }
}

pub fn random_prefix_tree(width: u32, seed: u64) -> Result<PrefixTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aligned: f64 = rng.random();
    let serial_share: f64 = rng.random();
    let mix = SplitMix { aligned, serial: (1.0 - aligned) * serial_share };
    PrefixTree::with_mix(width, mix, &mut rng)
}

/// Number of cells `tree_to_netlist` emits: per bit one AND2 (generate) and
/// one XOR2 (propagate); per prefix node an AND2 + OR2 for the group
/// generate, plus an AND2 for the group propagate unless the range reaches
/// bit 0 (carry-in is 0, so those propagates are never consumed); one XOR2
/// per sum bit except bit 0, whose sum is the bit-0 propagate itself.
pub fn expected_cell_count(tree: &PrefixTree) -> usize {
    let w = tree.width as usize;
    let prefix: usize = tree.nodes.iter().map(|n| if n.lsb == 0 { 2 } else { 3 }).sum();
    2 * w + prefix + (w - 1)
}

struct Builder {
    cells: Vec<Cell>,
    drivers: Vec<PinRef>,
    sinks: BTreeMap<PinRef, Vec<PinRef>>,
}

impl Builder {
    fn cell(&mut self, function: CellFunction, inputs: &[PinRef]) -> PinRef {
        let id = CellId(self.cells.len() as u32);
        self.cells.push(Cell { id, kind: CellKind::new(function, Drive::X1) });
        for (pin, &src) in inputs.iter().enumerate() {
            self.sinks.entry(src).or_default().push(PinRef::CellInput { cell: id, pin: pin as u8 });
        }
        let out = PinRef::CellOutput(id);
        self.drivers.push(out);
        out
    }
}

/// Maps a prefix tree to an X1 netlist. Ports: inputs `a[0..w]` then
/// `b[0..w]`; outputs `s[0..w]` then carry-out. Carry-in is tied to 0.
pub fn tree_to_netlist(tree: &PrefixTree) -> Result<Netlist> {
    tree.validate()?;
    let w = tree.width;
    let mut b = Builder {
        cells: Vec::new(),
        drivers: (0..2 * w).map(PinRef::InputPort).collect(),
        sinks: BTreeMap::new(),
    };
    let mut g_bit = Vec::new();
    let mut p_bit = Vec::new();
    for i in 0..w {
        let (a, bb) = (PinRef::InputPort(i), PinRef::InputPort(w + i));
        g_bit.push(b.cell(CellFunction::And2, &[a, bb]));
        p_bit.push(b.cell(CellFunction::Xor2, &[a, bb]));
    }
    let mut g_node: Vec<PinRef> = Vec::new();
    let mut p_node: Vec<Option<PinRef>> = Vec::new();
    let g_of = |c: Child, g_node: &[PinRef]| match c {
        Child::Bit(i) => g_bit[i as usize],
        Child::Node(i) => g_node[i as usize],
    };
    let p_of = |c: Child, p_node: &[Option<PinRef>]| match c {
        Child::Bit(i) => p_bit[i as usize],
        Child::Node(i) => p_node[i as usize].expect("propagate of a range reaching bit 0 is never needed"),
    };
    for n in &tree.nodes {
        let p_hi = p_of(n.hi, &p_node);
        let t = b.cell(CellFunction::And2, &[p_hi, g_of(n.lo, &g_node)]);
        let p = (n.lsb != 0).then(|| b.cell(CellFunction::And2, &[p_hi, p_of(n.lo, &p_node)]));
        let g = b.cell(CellFunction::Or2, &[g_of(n.hi, &g_node), t]);
        g_node.push(g);
        p_node.push(p);
    }
    let mut outputs = vec![p_bit[0]];
    for i in 1..w {
        let carry = g_of(tree.columns[i as usize - 1], &g_node);
        outputs.push(b.cell(CellFunction::Xor2, &[p_bit[i as usize], carry]));
    }
    outputs.push(g_of(tree.columns[w as usize - 1], &g_node));
    for (j, &o) in outputs.iter().enumerate() {
        b.sinks.entry(o).or_default().push(PinRef::OutputPort(j as u32));
    }

    let mut nets = Vec::with_capacity(b.drivers.len());
    let mut net_of = BTreeMap::new();
    for (i, d) in b.drivers.iter().enumerate() {
        let id = NetId(i as u32);
        net_of.insert(*d, id);
        let sinks = b.sinks.remove(d).unwrap_or_default();
        nets.push(Net { id, driver: *d, sinks });
    }
    let netlist = Netlist {
        cells: b.cells,
        nets,
        primary_inputs: (0..2 * w).map(|i| net_of[&PinRef::InputPort(i)]).collect(),
        primary_outputs: outputs.iter().map(|o| net_of[o]).collect(),
    };
    netlist.validate()?;
    Ok(netlist)
}

/// Simulates `a + b` on the netlist and returns the (width + 1)-bit result.
pub fn simulate_add(netlist: &Netlist, width: u32, a: u64, b: u64) -> Result<u64> {
    let mut inputs = Vec::with_capacity(2 * width as usize);
    inputs.extend((0..width).map(|i| (a >> i) & 1 == 1));
    inputs.extend((0..width).map(|i| (b >> i) & 1 == 1));
    let out = netlist.simulate(&inputs)?;
    Ok(out.iter().enumerate().fold(0u64, |acc, (i, &bit)| acc | ((bit as u64) << i)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::netlist_to_graph;
    use std::collections::BTreeSet;

    #[test]
    fn width_two_is_forced() {
        for seed in 0..10 {
            let t = random_prefix_tree(2, seed).unwrap();
            assert_eq!(t.nodes.len(), 1);
            assert_eq!(t.nodes[0], PrefixNode { msb: 1, lsb: 0, level: 1, hi: Child::Bit(1), lo: Child::Bit(0) });
        }
        assert!(matches!(random_prefix_tree(1, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn width_two_adds_exhaustively() {
        let nl = tree_to_netlist(&random_prefix_tree(2, 0).unwrap()).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(simulate_add(&nl, 2, a, b).unwrap(), a + b);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(random_prefix_tree(8, 0).unwrap(), random_prefix_tree(8, 0).unwrap());
        let n1 = tree_to_netlist(&random_prefix_tree(16, 5).unwrap()).unwrap();
        let n2 = tree_to_netlist(&random_prefix_tree(16, 5).unwrap()).unwrap();
        assert_eq!(netlist_to_graph(&n1).unwrap(), netlist_to_graph(&n2).unwrap());
    }

    #[test]
    fn ripple_and_sklansky_extremes() {
        let r = PrefixTree::ripple(4).unwrap();
        assert_eq!(r.nodes.len(), 3);
        assert_eq!(PrefixTree::ripple(16).unwrap().depth(), 15);
        let s = PrefixTree::sklansky(16).unwrap();
        assert_eq!(s.depth(), 4);
        assert_eq!(s.nodes.len(), 32);
    }

    #[test]
    fn cell_count_formula() {
        for seed in 0..20 {
            let t = random_prefix_tree(16, seed).unwrap();
            let nl = tree_to_netlist(&t).unwrap();
            assert_eq!(nl.cells.len(), expected_cell_count(&t));
            assert!(nl.cells.iter().all(|c| c.kind.drive == Drive::X1));
        }
    }

    #[test]
    fn structural_diversity_at_width_16() {
        let mut depths = BTreeSet::new();
        let mut counts = BTreeSet::new();
        for seed in 0..1000 {
            let t = random_prefix_tree(16, seed).unwrap();
            t.validate().unwrap();
            depths.insert(t.depth());
            counts.insert(t.nodes.len());
        }
        assert!(depths.len() >= 3, "depths {depths:?}");
        assert!(counts.len() >= 10, "node counts {counts:?}");
    }

    #[test]
    fn exhaustive_small_widths() {
        for width in 2..=6u32 {
            for seed in 0..4 {
                let nl = tree_to_netlist(&random_prefix_tree(width, seed).unwrap()).unwrap();
                netlist_to_graph(&nl).unwrap();
                for a in 0..(1u64 << width) {
                    for b in 0..(1u64 << width) {
                        assert_eq!(simulate_add(&nl, width, a, b).unwrap(), a + b);
                    }
                }
            }
        }
    }
}
