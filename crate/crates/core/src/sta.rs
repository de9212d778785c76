//! Static timing analysis over the pin graph.
//!
//! Net edges are zero-delay, so all delay lives on internal arcs. Every arc
//! of a cell is evaluated at the cell's worst (largest) input slew, which
//! gives all arcs of one cell the same delay. Arrival at an output pin is
//! therefore `max(fanin arrivals) + arc_delay`, and the per-node stage delay
//! telescopes exactly along any max-arrival path.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CircuitGraph, NodeId};
use crate::library::{arc_delay, arc_slew, CellLibrary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub arrival: Vec<f64>,
    pub slew: Vec<f64>,
    /// Driven capacitance of driver pins (cell outputs and input ports), 0 elsewhere.
    pub load: Vec<f64>,
    /// Arc delay of the owning cell on output pins, 0 elsewhere.
    pub arc_delay: Vec<f64>,
    pub worst_delay: f64,
    pub worst_path: Vec<NodeId>,
    pub total_area: f64,
}

/// Capacitance seen by a driver pin.
pub fn driver_load(g: &CircuitGraph, lib: &CellLibrary, driver: NodeId) -> Result<f64> {
    let mut load = 0.0;
    for &s in g.fanout(driver) {
        let sink = g.node(s);
        if sink.is_output_port() {
            load += lib.default_output_load;
        } else if let Some(kind) = sink.kind {
            load += lib.spec(kind)?.input_cap;
        }
        load += lib.wire_cap_per_fanout;
    }
    Ok(load)
}

pub fn analyze(g: &CircuitGraph, lib: &CellLibrary) -> Result<TimingReport> {
    let n = g.len();
    let mut arrival = vec![0.0; n];
    let mut slew = vec![0.0; n];
    let mut load = vec![0.0; n];
    let mut arc = vec![0.0; n];

    for &v in g.order() {
        let node = g.node(v);
        if node.is_driver() {
            load[v.idx()] = driver_load(g, lib, v)?;
        }
        if node.is_input_port() {
            slew[v.idx()] = lib.default_input_slew;
        } else if node.is_cell_output() {
            let spec = lib.spec(node.kind.unwrap())?;
            let fanin = g.fanin(v);
            let worst_slew = fanin.iter().map(|u| slew[u.idx()]).fold(0.0, f64::max);
            let latest = fanin.iter().map(|u| arrival[u.idx()]).fold(f64::NEG_INFINITY, f64::max);
            let d = arc_delay(spec, worst_slew, load[v.idx()])?;
            arc[v.idx()] = d;
            arrival[v.idx()] = latest + d;
            slew[v.idx()] = arc_slew(spec, load[v.idx()])?;
        } else {
            let driver = g.fanin(v)[0];
            arrival[v.idx()] = arrival[driver.idx()];
            slew[v.idx()] = slew[driver.idx()];
        }
    }

    let mut total_area = 0.0;
    for pins in g.cells().values() {
        total_area += lib.spec(pins.kind)?.area;
    }

    let mut critical: Option<NodeId> = None;
    for &p in g.output_ports() {
        if critical.is_none_or(|c| arrival[p.idx()] > arrival[c.idx()]) {
            critical = Some(p);
        }
    }
    let worst_delay = critical.map_or(0.0, |c| arrival[c.idx()]);
    let worst_path = critical.map_or_else(Vec::new, |c| backtrace(g, &arrival, c));

    Ok(TimingReport {
        arrival,
        slew,
        load,
        arc_delay: arc,
        worst_delay,
        worst_path,
        total_area,
    })
}

/// Follows the latest-arriving predecessor back to an input port; ties go to
/// the smallest node id.
fn backtrace(g: &CircuitGraph, arrival: &[f64], end: NodeId) -> Vec<NodeId> {
    let mut path = vec![end];
    let mut v = end;
    while let Some(&first) = g.fanin(v).first() {
        let mut best = first;
        for &u in g.fanin(v) {
            let (a, b) = (arrival[u.idx()], arrival[best.idx()]);
            if a > b || (a == b && u < best) {
                best = u;
            }
        }
        path.push(best);
        v = best;
    }
    path.reverse();
    path
}

/// Delay contribution of a node: its arrival minus the latest predecessor
/// arrival. Input ports contribute 0.
pub fn stage_delay(report: &TimingReport, g: &CircuitGraph, v: NodeId) -> f64 {
    let fanin = g.fanin(v);
    if fanin.is_empty() {
        return 0.0;
    }
    let latest = fanin
        .iter()
        .map(|u| report.arrival[u.idx()])
        .fold(f64::NEG_INFINITY, f64::max);
    report.arrival[v.idx()] - latest
}

/// Sum of arc delays along a port-to-port path, accumulated from the source.
pub fn path_delay(report: &TimingReport, path: &[NodeId]) -> f64 {
    path.iter().fold(0.0, |acc, v| acc + report.arc_delay[v.idx()])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedPath {
    pub nodes: Vec<NodeId>,
    pub delay: f64,
}

struct Partial {
    bound: f64,
    /// Path suffix from the endpoint backwards.
    rev: Vec<NodeId>,
    suffix_delay: f64,
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Partial {}

impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| Reverse(&self.rev).cmp(&Reverse(&other.rev)))
    }
}

/// The `k` slowest port-to-port paths, slowest first.
///
/// Best-first search backwards from the output ports. A partial path is
/// ranked by `arrival(head) + suffix delay`, which is exact, so complete
/// paths emerge in non-increasing delay order. Equal delays are ordered by
/// the node-id sequence read from the endpoint backwards, the same rule the
/// worst-path back-trace uses, so the first entry is always the analyzed
/// worst path.
pub fn enumerate_paths(g: &CircuitGraph, report: &TimingReport, k: usize) -> Vec<TimedPath> {
    enumerate_paths_by(g, &report.arrival, &report.arc_delay, k)
}

/// [`enumerate_paths`] over any consistent pair of arrival and per-node
/// stage delays, where `arrival(v) = max(fanin arrivals) + stage(v)`.
pub fn enumerate_paths_by(g: &CircuitGraph, arrival: &[f64], stage: &[f64], k: usize) -> Vec<TimedPath> {
    let k = k.max(1);
    let mut heap: BinaryHeap<Partial> = g
        .output_ports()
        .iter()
        .map(|&p| Partial {
            bound: arrival[p.idx()],
            rev: vec![p],
            suffix_delay: 0.0,
        })
        .collect();
    let mut done: Vec<TimedPath> = Vec::new();
    let slack = |d: f64| 1e-9 * (1.0 + d.abs());
    while let Some(top) = heap.pop() {
        if done.len() >= k {
            let kth = done[k - 1].delay;
            if top.bound < kth - slack(kth) {
                break;
            }
        }
        let head = *top.rev.last().unwrap();
        let fanin = g.fanin(head);
        if fanin.is_empty() {
            let mut nodes = top.rev;
            nodes.reverse();
            let delay = nodes.iter().fold(0.0, |acc, v| acc + stage[v.idx()]);
            let pos = done.partition_point(|p| path_before(p, delay, &nodes));
            done.insert(pos, TimedPath { nodes, delay });
            continue;
        }
        let suffix_delay = top.suffix_delay + stage[head.idx()];
        for &u in fanin {
            let mut rev = top.rev.clone();
            rev.push(u);
            heap.push(Partial {
                bound: arrival[u.idx()] + suffix_delay,
                rev,
                suffix_delay,
            });
        }
    }
    done.truncate(k);
    done
}

fn path_before(p: &TimedPath, delay: f64, nodes: &[NodeId]) -> bool {
    match p.delay.total_cmp(&delay) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => p.nodes.iter().rev().lt(nodes.iter().rev()),
    }
}

/// Number of distinct port-to-port paths (saturating).
pub fn count_paths(g: &CircuitGraph) -> u64 {
    let mut count = vec![0u64; g.len()];
    for &v in g.order() {
        count[v.idx()] = if g.fanin(v).is_empty() {
            1
        } else {
            g.fanin(v).iter().fold(0u64, |acc, u| acc.saturating_add(count[u.idx()]))
        };
    }
    g.output_ports().iter().fold(0u64, |acc, p| acc.saturating_add(count[p.idx()]))
}

impl TimingReport {
    /// Checks that this report describes `g`.
    pub fn check_matches(&self, g: &CircuitGraph) -> Result<()> {
        let n = g.len();
        if self.arrival.len() != n || self.slew.len() != n || self.load.len() != n || self.arc_delay.len() != n {
            return Err(Error::Consistency(format!(
                "timing report covers {} nodes, graph has {n}",
                self.arrival.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::netlist_to_graph;
    use crate::graph::tests::{fanout_tree, single_inv};
    use crate::library::{CellFunction, CellKind, CellSpec, Drive};
    use crate::netlist::{Cell, CellId, Net, NetId, Netlist, PinRef};
    use crate::testkit::{flat_library, random_netlist};
    use std::collections::BTreeMap;

    fn chain(k: u32) -> Netlist {
        let inv = CellKind::new(CellFunction::Inv, Drive::X1);
        let mut cells = Vec::new();
        let mut nets = vec![Net {
            id: NetId(0),
            driver: PinRef::InputPort(0),
            sinks: vec![PinRef::CellInput { cell: CellId(0), pin: 0 }],
        }];
        for i in 0..k {
            cells.push(Cell { id: CellId(i), kind: inv });
            let sink = if i + 1 == k {
                PinRef::OutputPort(0)
            } else {
                PinRef::CellInput { cell: CellId(i + 1), pin: 0 }
            };
            nets.push(Net { id: NetId(i + 1), driver: PinRef::CellOutput(CellId(i)), sinks: vec![sink] });
        }
        Netlist { cells, nets, primary_inputs: vec![NetId(0)], primary_outputs: vec![NetId(k)] }
    }

    #[test]
    fn single_buffer_intrinsic_only() {
        let mut lib = flat_library(0.0, 0.0, 0.0);
        let buf = CellKind::new(CellFunction::Buf, Drive::X1);
        lib.cells.get_mut(&buf).unwrap().d_intrinsic = 1.0;
        lib.default_output_load = 0.0;
        let mut nl = single_inv();
        nl.cells[0].kind = buf;
        let g = netlist_to_graph(&nl).unwrap();
        let r = analyze(&g, &lib).unwrap();
        assert_eq!(r.worst_delay, 1.0);
        assert_eq!(r.worst_path, vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)]);
    }

    #[test]
    fn inverter_chain_hand_composed() {
        let lib = crate::library::default_library(0);
        let inv = *lib.spec(CellKind::new(CellFunction::Inv, Drive::X1)).unwrap();
        for k in 1..6u32 {
            let g = netlist_to_graph(&chain(k)).unwrap();
            let r = analyze(&g, &lib).unwrap();
            // inner stages drive one INV input, the last drives the port
            let inner_load = inv.input_cap + lib.wire_cap_per_fanout;
            let last_load = lib.default_output_load + lib.wire_cap_per_fanout;
            let inner_slew = inv.s_intrinsic + inv.r_slew * inner_load;
            let mut expect = 0.0;
            for i in 0..k {
                let load = if i + 1 == k { last_load } else { inner_load };
                let slew_in = if i == 0 { lib.default_input_slew } else { inner_slew };
                expect += inv.d_intrinsic + inv.r_drive * load + inv.k_slew * slew_in;
            }
            assert!((r.worst_delay - expect).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn stage_delay_examples() {
        let lib = crate::library::default_library(0);
        let g = netlist_to_graph(&fanout_tree(3)).unwrap();
        let r = analyze(&g, &lib).unwrap();
        let inv_in = g.cell_pins(CellId(1)).unwrap().inputs[0];
        assert_eq!(stage_delay(&r, &g, inv_in), 0.0);
        let inv_out = g.cell_pins(CellId(1)).unwrap().output;
        assert!((stage_delay(&r, &g, inv_out) - r.arc_delay[inv_out.idx()]).abs() < 1e-12);
        assert_eq!(stage_delay(&r, &g, NodeId(0)), 0.0);
    }

    #[test]
    fn stage_delay_two_arrivals() {
        // hand-built report: inputs arrive at 2 and 5, arc delay 1
        let g = netlist_to_graph(&fanout_tree(1)).unwrap();
        let pins = g.cell_pins(CellId(0)).unwrap().clone();
        let mut r = analyze(&g, &crate::library::default_library(0)).unwrap();
        r.arrival[pins.inputs[0].idx()] = 2.0;
        r.arrival[pins.inputs[1].idx()] = 5.0;
        r.arrival[pins.output.idx()] = f64::max(2.0 + 1.0, 5.0 + 1.0);
        assert_eq!(r.arrival[pins.output.idx()], 6.0);
        assert_eq!(stage_delay(&r, &g, pins.output), 1.0);
    }

    #[test]
    fn diamond_paths() {
        // The input fans out into two arms that reconverge in an OR2:
        // BUF (3) on one arm, INV (2) + BUF (3) on the other, OR2 adds 0.5.
        let k = |f| CellKind::new(f, Drive::X1);
        let nl = Netlist {
            cells: vec![
                Cell { id: CellId(0), kind: k(CellFunction::Buf) },
                Cell { id: CellId(1), kind: k(CellFunction::Inv) },
                Cell { id: CellId(2), kind: k(CellFunction::Buf) },
                Cell { id: CellId(3), kind: k(CellFunction::Or2) },
            ],
            nets: vec![
                Net { id: NetId(0), driver: PinRef::InputPort(0), sinks: vec![PinRef::CellInput { cell: CellId(0), pin: 0 }, PinRef::CellInput { cell: CellId(1), pin: 0 }] },
                Net { id: NetId(1), driver: PinRef::CellOutput(CellId(0)), sinks: vec![PinRef::CellInput { cell: CellId(3), pin: 0 }] },
                Net { id: NetId(2), driver: PinRef::CellOutput(CellId(1)), sinks: vec![PinRef::CellInput { cell: CellId(2), pin: 0 }] },
                Net { id: NetId(3), driver: PinRef::CellOutput(CellId(2)), sinks: vec![PinRef::CellInput { cell: CellId(3), pin: 1 }] },
                Net { id: NetId(4), driver: PinRef::CellOutput(CellId(3)), sinks: vec![PinRef::OutputPort(0)] },
            ],
            primary_inputs: vec![NetId(0)],
            primary_outputs: vec![NetId(4)],
        };
        let mut lib = flat_library(0.0, 0.0, 0.0);
        for (f, d) in [(CellFunction::Buf, 3.0), (CellFunction::Inv, 2.0), (CellFunction::Or2, 0.5)] {
            lib.cells.get_mut(&k(f)).unwrap().d_intrinsic = d;
        }
        let g = netlist_to_graph(&nl).unwrap();
        let r = analyze(&g, &lib).unwrap();
        let paths = enumerate_paths(&g, &r, 2);
        assert_eq!(paths.len(), 2);
        assert!((paths[0].delay - 5.5).abs() < 1e-12);
        assert!((paths[1].delay - 3.5).abs() < 1e-12);
        assert_eq!(paths[0].nodes, r.worst_path);
        assert_eq!(enumerate_paths(&g, &r, 10).len(), 2);
    }

    #[test]
    fn single_path_any_k() {
        let g = netlist_to_graph(&chain(3)).unwrap();
        let r = analyze(&g, &crate::library::default_library(0)).unwrap();
        for k in [1, 2, 50] {
            let p = enumerate_paths(&g, &r, k);
            assert_eq!(p.len(), 1);
            assert_eq!(p[0].nodes, r.worst_path);
            assert_eq!(p[0].delay, r.worst_delay);
        }
    }

    #[test]
    fn missing_cell_is_a_library_error() {
        let mut lib = crate::library::default_library(0);
        lib.cells.remove(&CellKind::new(CellFunction::Inv, Drive::X1));
        let g = netlist_to_graph(&single_inv()).unwrap();
        assert!(matches!(analyze(&g, &lib), Err(Error::Library(_))));
    }

    /// Independent oracle: per-cell delays from first principles, then the
    /// maximum over every enumerated port-to-port path.
    pub(crate) fn brute_force_worst(g: &CircuitGraph, lib: &CellLibrary) -> f64 {
        let mut slew_out: BTreeMap<NodeId, f64> = BTreeMap::new();
        let mut cell_delay: BTreeMap<NodeId, f64> = BTreeMap::new();
        let load_of = |d: NodeId| -> f64 {
            g.fanout(d)
                .iter()
                .map(|&s| {
                    let n = g.node(s);
                    let c = match n.kind {
                        Some(k) => lib.cells[&k].input_cap,
                        None => lib.default_output_load,
                    };
                    c + lib.wire_cap_per_fanout
                })
                .sum()
        };
        for node in g.nodes() {
            if node.is_cell_output() {
                let spec: &CellSpec = &lib.cells[&node.kind.unwrap()];
                slew_out.insert(node.id, spec.s_intrinsic + spec.r_slew * load_of(node.id));
            }
        }
        let driver_of_input = |v: NodeId| g.fanin(v)[0];
        for node in g.nodes() {
            if node.is_cell_output() {
                let spec: &CellSpec = &lib.cells[&node.kind.unwrap()];
                let s = g
                    .fanin(node.id)
                    .iter()
                    .map(|&i| {
                        let d = driver_of_input(i);
                        *slew_out.get(&d).unwrap_or(&lib.default_input_slew)
                    })
                    .fold(0.0, f64::max);
                cell_delay.insert(node.id, spec.d_intrinsic + spec.r_drive * load_of(node.id) + spec.k_slew * s);
            }
        }
        fn walk(g: &CircuitGraph, v: NodeId, acc: f64, delay: &BTreeMap<NodeId, f64>, best: &mut f64) {
            let acc = acc + delay.get(&v).copied().unwrap_or(0.0);
            if g.node(v).is_output_port() {
                *best = best.max(acc);
            }
            for &w in g.fanout(v) {
                walk(g, w, acc, delay, best);
            }
        }
        let mut best = 0.0;
        for &p in g.input_ports() {
            walk(g, p, 0.0, &cell_delay, &mut best);
        }
        best
    }

    proptest::proptest! {
        #[test]
        fn analyze_matches_brute_force(seed in 0u64..10_000) {
            let lib = crate::library::default_library(seed % 3);
            let g = netlist_to_graph(&random_netlist(seed, 40)).unwrap();
            let r = analyze(&g, &lib).unwrap();
            let oracle = brute_force_worst(&g, &lib);
            proptest::prop_assert!((r.worst_delay - oracle).abs() <= 1e-9);
            // telescoping along the worst path
            let sum: f64 = r.worst_path.iter().map(|&v| stage_delay(&r, &g, v)).sum();
            proptest::prop_assert!((sum - r.worst_delay).abs() <= 1e-9);
            // arrival monotone along every edge
            for &(a, b) in g.edges() {
                proptest::prop_assert!(r.arrival[b.idx()] >= r.arrival[a.idx()]);
            }
            let first = &enumerate_paths(&g, &r, 1)[0];
            proptest::prop_assert_eq!(&first.nodes, &r.worst_path);
            proptest::prop_assert_eq!(first.delay, r.worst_delay);
        }

        #[test]
        fn enumerate_is_sorted_and_exhaustive(seed in 0u64..10_000) {
            let lib = crate::library::default_library(0);
            let g = netlist_to_graph(&random_netlist(seed, 30)).unwrap();
            let r = analyze(&g, &lib).unwrap();
            let total = count_paths(&g) as usize;
            let all = enumerate_paths(&g, &r, total + 5);
            proptest::prop_assert_eq!(all.len(), total);
            for w in all.windows(2) {
                proptest::prop_assert!(w[0].delay >= w[1].delay);
            }
            let k = (total / 2).max(1);
            let some = enumerate_paths(&g, &r, k);
            proptest::prop_assert_eq!(&some[..], &all[..k]);
        }

        #[test]
        fn upsizing_never_slows_with_flat_caps(seed in 0u64..10_000, pick in 0usize..64) {
            // equal input caps across drives and no slew coupling
            let lib = crate::testkit::equal_cap_library();
            let g = netlist_to_graph(&random_netlist(seed, 40)).unwrap();
            let before = analyze(&g, &lib).unwrap().worst_delay;
            let cells: Vec<_> = g.cells().iter().map(|(c, p)| (*c, p.kind)).collect();
            if let Some(&(cell, kind)) = cells.get(pick % cells.len().max(1)) {
                if let Some(up) = kind.upsized() {
                    let g2 = g.resize_cell(cell, up).unwrap();
                    let after = analyze(&g2, &lib).unwrap().worst_delay;
                    proptest::prop_assert!(after <= before + 1e-12);
                }
            }
        }

        #[test]
        fn analyze_is_deterministic(seed in 0u64..1000) {
            let lib = crate::library::default_library(0);
            let g = netlist_to_graph(&random_netlist(seed, 40)).unwrap();
            proptest::prop_assert_eq!(analyze(&g, &lib).unwrap(), analyze(&g, &lib).unwrap());
        }
    }
}
