//! Design-level metrics from per-node predictions, and compositional
//! sweeping of predicted optimizations across delay targets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, LabelPair};
use crate::graph::{CircuitGraph, NodeId};
use crate::sta::enumerate_paths_by;

pub const DEFAULT_K_PATHS: usize = 256;

/// A pre-synthesis graph paired with denormalized per-node predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct InferredGraph {
    base: CircuitGraph,
    predicted: Vec<LabelPair>,
}

impl InferredGraph {
    pub fn new(base: CircuitGraph, predicted: Vec<LabelPair>) -> Result<Self> {
        if base.features().is_none() {
            return Err(Error::Consistency("inferred graph base carries no features".into()));
        }
        if predicted.len() != base.len() {
            return Err(Error::Consistency(format!(
                "{} predictions for {} nodes; node n{} has no prediction",
                predicted.len(),
                base.len(),
                predicted.len().min(base.len())
            )));
        }
        for (node, p) in base.nodes().iter().zip(&predicted) {
            if !p.delay_delta.is_finite() || !p.area_delta.is_finite() {
                return Err(Error::Numeric(format!("non-finite prediction at {}", node.id)));
            }
            if p.area_delta != 0.0 && !node.is_cell_output() {
                return Err(Error::Consistency(format!("area prediction on non-output node {}", node.id)));
            }
        }
        Ok(InferredGraph { base, predicted })
    }

    /// Zeroes area predictions off output pins before validating, as needed
    /// for raw model outputs.
    pub fn from_raw(base: CircuitGraph, mut predicted: Vec<LabelPair>) -> Result<Self> {
        for (node, p) in base.nodes().iter().zip(predicted.iter_mut()) {
            if !node.is_cell_output() {
                p.area_delta = 0.0;
            }
        }
        Self::new(base, predicted)
    }

    pub fn base(&self) -> &CircuitGraph {
        &self.base
    }

    pub fn predicted(&self) -> &[LabelPair] {
        &self.predicted
    }

    fn features(&self) -> &[FeatureVector] {
        self.base.features().unwrap()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub delay: f64,
    pub area: f64,
    pub arrival: Vec<f64>,
}

fn effective_stage(f: &FeatureVector, p: &LabelPair, swapped: bool) -> f64 {
    if swapped {
        (f.stage_delay + p.delay_delta).max(0.0)
    } else {
        f.stage_delay
    }
}

fn propagate(g: &CircuitGraph, stage: &[f64]) -> Vec<f64> {
    let mut arrival = vec![0.0; g.len()];
    for &v in g.order() {
        let fanin = g.fanin(v);
        if !fanin.is_empty() {
            let latest = fanin.iter().map(|u| arrival[u.idx()]).fold(f64::NEG_INFINITY, f64::max);
            arrival[v.idx()] = latest + stage[v.idx()];
        }
    }
    arrival
}

fn merged_metrics(ig: &InferredGraph, swapped: &[bool]) -> Metrics {
    let g = &ig.base;
    let feats = ig.features();
    let stage: Vec<f64> = (0..g.len())
        .map(|i| effective_stage(&feats[i], &ig.predicted[i], swapped[i]))
        .collect();
    let arrival = propagate(g, &stage);
    let delay = g
        .output_ports()
        .iter()
        .map(|p| arrival[p.idx()])
        .fold(0.0, f64::max);
    let area = g
        .nodes()
        .iter()
        .filter(|n| n.is_cell_output())
        .map(|n| {
            let i = n.id.idx();
            feats[i].cell_area + if swapped[i] { ig.predicted[i].area_delta } else { 0.0 }
        })
        .sum();
    Metrics { delay, area, arrival }
}

/// Adds predicted deltas to the pre-synthesis stage delays (clamped at 0),
/// re-propagates arrivals and sums predicted cell areas.
pub fn reconstruct_metrics(ig: &InferredGraph) -> Metrics {
    merged_metrics(ig, &vec![true; ig.base.len()])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub target: f64,
    pub delay: f64,
    pub area: f64,
    /// Swapped nodes in ascending id order.
    pub swapped: Vec<NodeId>,
}

/// Replaces pre-synthesis node metrics with predicted ones, slowest paths
/// first, until each visited path meets `target`.
///
/// Paths are the `k_paths` slowest of the pre graph. A path is skipped when
/// its delay under the current assignment already meets the target, and the
/// walk ends at the first path whose pre delay does. Along a path, each
/// output node is swapped together with its cell's input pins; the running
/// excess is reduced by the stage changes of swapped nodes on that path.
/// Reported metrics come from a full reconstruction of the final assignment.
pub fn sweep(ig: &InferredGraph, target: f64, k_paths: usize) -> Result<SweepOutcome> {
    if !(target > 0.0) {
        return Err(Error::Domain(format!("sweep target must be positive, got {target}")));
    }
    let g = &ig.base;
    let feats = ig.features();
    let pred = &ig.predicted;
    let stage_pre: Vec<f64> = feats.iter().map(|f| f.stage_delay).collect();
    let arrival_pre = propagate(g, &stage_pre);
    let mut swapped = vec![false; g.len()];
    let eff = |v: NodeId, swapped: &[bool]| effective_stage(&feats[v.idx()], &pred[v.idx()], swapped[v.idx()]);

    for path in enumerate_paths_by(g, &arrival_pre, &stage_pre, k_paths) {
        if path.delay <= target {
            break;
        }
        let mut diff = path.nodes.iter().map(|&v| eff(v, &swapped)).sum::<f64>() - target;
        if diff <= 0.0 {
            continue;
        }
        for (i, &v) in path.nodes.iter().enumerate() {
            let node = g.node(v);
            if !(node.is_cell_output() || node.is_output_port()) {
                continue;
            }
            let on_path_input = if node.is_cell_output() { Some(path.nodes[i - 1]) } else { None };
            let mut group = vec![v];
            if node.is_cell_output() {
                group.extend_from_slice(g.fanin(v));
            }
            for u in group {
                if swapped[u.idx()] {
                    continue;
                }
                let before = eff(u, &swapped);
                swapped[u.idx()] = true;
                if u == v || Some(u) == on_path_input {
                    diff -= before - eff(u, &swapped);
                }
            }
            if diff <= 0.0 {
                break;
            }
        }
    }

    let m = merged_metrics(ig, &swapped);
    Ok(SweepOutcome {
        target,
        delay: m.delay,
        area: m.area,
        swapped: (0..g.len()).filter(|&i| swapped[i]).map(|i| NodeId(i as u32)).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub target: f64,
    pub delay: f64,
    pub area: f64,
    pub swapped_node_count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
}

/// One independent sweep per target, each from the unswapped graph.
pub fn sweep_curve(ig: &InferredGraph, targets: &[f64], k_paths: usize) -> Result<SweepCurve> {
    let points = targets
        .par_iter()
        .map(|&t| {
            sweep(ig, t, k_paths).map(|s| SweepPoint {
                target: t,
                delay: s.delay,
                area: s.area,
                swapped_node_count: s.swapped.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepCurve { points })
}

impl SweepCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,delay,area,swapped_node_count\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.target, p.delay, p.area, p.swapped_node_count));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("curve line {}: malformed row {line:?}", i + 1));
            if cols.len() != 4 {
                return Err(bad());
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
            points.push(SweepPoint {
                target: num(cols[0])?,
                delay: num(cols[1])?,
                area: num(cols[2])?,
                swapped_node_count: cols[3].trim().parse().map_err(|_| bad())?,
            });
        }
        Ok(SweepCurve { points })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adder::{random_prefix_tree, tree_to_netlist};
    use crate::features::{annotate_features, build_labels};
    use crate::graph::netlist_to_graph;
    use crate::library::{default_library, CellFunction, CellKind, CellLibrary, Drive};
    use crate::netlist::{Cell, CellId, Net, NetId, Netlist, PinRef};
    use crate::physopt::{aggressive_target, synthesize, SynthConfig};
    use crate::sta::{analyze, count_paths};
    use crate::testkit::{flat_library, random_netlist};
    use proptest::prelude::*;

    fn annotated(netlist: &Netlist, lib: &CellLibrary) -> CircuitGraph {
        let g = netlist_to_graph(netlist).unwrap();
        let r = analyze(&g, lib).unwrap();
        annotate_features(&g, &r, lib).unwrap()
    }

    fn chain3() -> Netlist {
        let inv = CellKind::new(CellFunction::Inv, Drive::X1);
        let cells = (0..3).map(|i| Cell { id: CellId(i), kind: inv }).collect();
        let mut nets = vec![Net { id: NetId(0), driver: PinRef::InputPort(0), sinks: vec![PinRef::CellInput { cell: CellId(0), pin: 0 }] }];
        for i in 0..3u32 {
            let sink = if i < 2 { PinRef::CellInput { cell: CellId(i + 1), pin: 0 } } else { PinRef::OutputPort(0) };
            nets.push(Net { id: NetId(i + 1), driver: PinRef::CellOutput(CellId(i)), sinks: vec![sink] });
        }
        Netlist { cells, nets, primary_inputs: vec![NetId(0)], primary_outputs: vec![NetId(3)] }
    }

    /// PI -> {BUF, INV} -> OR2 -> PO
    fn diamond() -> (CircuitGraph, CellLibrary) {
        let mut lib = flat_library(0.0, 0.0, 0.0);
        for (f, d) in [(CellFunction::Buf, 3.0), (CellFunction::Inv, 2.0), (CellFunction::Or2, 0.5)] {
            lib.cells.get_mut(&CellKind::new(f, Drive::X1)).unwrap().d_intrinsic = d;
        }
        let k = |f| CellKind::new(f, Drive::X1);
        let netlist = Netlist {
            cells: vec![
                Cell { id: CellId(0), kind: k(CellFunction::Buf) },
                Cell { id: CellId(1), kind: k(CellFunction::Inv) },
                Cell { id: CellId(2), kind: k(CellFunction::Or2) },
            ],
            nets: vec![
                Net {
                    id: NetId(0),
                    driver: PinRef::InputPort(0),
                    sinks: vec![PinRef::CellInput { cell: CellId(0), pin: 0 }, PinRef::CellInput { cell: CellId(1), pin: 0 }],
                },
                Net { id: NetId(1), driver: PinRef::CellOutput(CellId(0)), sinks: vec![PinRef::CellInput { cell: CellId(2), pin: 0 }] },
                Net { id: NetId(2), driver: PinRef::CellOutput(CellId(1)), sinks: vec![PinRef::CellInput { cell: CellId(2), pin: 1 }] },
                Net { id: NetId(3), driver: PinRef::CellOutput(CellId(2)), sinks: vec![PinRef::OutputPort(0)] },
            ],
            primary_inputs: vec![NetId(0)],
            primary_outputs: vec![NetId(3)],
        };
        (annotated(&netlist, &lib), lib)
    }

    fn synthesized_adder(width: u32, seed: u64) -> (CircuitGraph, InferredGraph, f64, f64) {
        let lib = default_library(0);
        let g = netlist_to_graph(&tree_to_netlist(&random_prefix_tree(width, seed).unwrap()).unwrap()).unwrap();
        let cfg = SynthConfig::new(aggressive_target(&g, &lib, 0.6).unwrap());
        let post = synthesize(&g, &lib, &cfg).unwrap().graph;
        let (rp, rq) = (analyze(&g, &lib).unwrap(), analyze(&post, &lib).unwrap());
        let labels = build_labels(&g, &post, &rp, &rq, &lib).unwrap();
        let pre = annotate_features(&g, &rp, &lib).unwrap();
        (pre.clone(), InferredGraph::new(pre, labels).unwrap(), rq.worst_delay, rq.total_area)
    }

    #[test]
    fn zero_predictions_give_pre_metrics() {
        let lib = default_library(0);
        let g = annotated(&tree_to_netlist(&random_prefix_tree(8, 3).unwrap()).unwrap(), &lib);
        let r = analyze(&g, &lib).unwrap();
        let ig = InferredGraph::new(g.clone(), vec![LabelPair::default(); g.len()]).unwrap();
        let m = reconstruct_metrics(&ig);
        assert_eq!(m.delay, r.worst_delay);
        assert!((m.area - r.total_area).abs() < 1e-9);
    }

    #[test]
    fn three_stage_chain_arithmetic() {
        let lib = default_library(0);
        let g = annotated(&chain3(), &lib);
        let pre = analyze(&g, &lib).unwrap().worst_delay;
        let mut p = vec![LabelPair::default(); g.len()];
        for (cell, d) in [(0, -0.1), (1, 0.0), (2, 0.05)] {
            p[g.cell_pins(CellId(cell)).unwrap().output.idx()].delay_delta = d;
        }
        let m = reconstruct_metrics(&InferredGraph::new(g, p).unwrap());
        assert!((m.delay - (pre - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn ground_truth_round_trip_on_adders() {
        for seed in 0..4 {
            let (_, ig, post_delay, post_area) = synthesized_adder(16, seed);
            let m = reconstruct_metrics(&ig);
            assert!((m.delay - post_delay).abs() <= 1e-6 * post_delay);
            assert!((m.area - post_area).abs() <= 1e-6 * post_area);
        }
    }

    #[test]
    fn missing_or_misplaced_predictions_are_rejected() {
        let (g, _) = diamond();
        assert!(matches!(InferredGraph::new(g.clone(), vec![LabelPair::default(); g.len() - 1]), Err(Error::Consistency(_))));
        let mut p = vec![LabelPair::default(); g.len()];
        p[0].area_delta = 1.0;
        assert!(InferredGraph::new(g.clone(), p.clone()).is_err());
        assert!(InferredGraph::from_raw(g.clone(), p).is_ok());
        let bare = g.without_annotations();
        assert!(InferredGraph::new(bare.clone(), vec![LabelPair::default(); bare.len()]).is_err());
    }

    #[test]
    fn diamond_swaps_only_the_worse_arm() {
        let (g, _) = diamond();
        let buf = g.cell_pins(CellId(0)).unwrap().clone();
        let inv = g.cell_pins(CellId(1)).unwrap().clone();
        let mut p = vec![LabelPair::default(); g.len()];
        p[buf.output.idx()] = LabelPair { delay_delta: -1.5, area_delta: 0.4 };
        p[inv.output.idx()] = LabelPair { delay_delta: -1.9, area_delta: 0.3 };
        let ig = InferredGraph::new(g.clone(), p).unwrap();
        let pre_area: f64 = g.features().unwrap().iter().map(|f| f.cell_area).sum();
        let s = sweep(&ig, 3.0, DEFAULT_K_PATHS).unwrap();
        let mut expect = vec![buf.inputs[0], buf.output];
        expect.sort();
        assert_eq!(s.swapped, expect);
        assert!((s.delay - 2.5).abs() < 1e-12);
        assert!((s.area - (pre_area + 0.4)).abs() < 1e-12);
        // fully relaxed and fully tight endpoints
        let id = sweep(&ig, 3.5, DEFAULT_K_PATHS).unwrap();
        assert!(id.swapped.is_empty() && id.delay == 3.5);
        let full = sweep(&ig, 0.1, DEFAULT_K_PATHS).unwrap();
        let m = reconstruct_metrics(&ig);
        assert!((full.delay - m.delay).abs() < 1e-12 && (full.area - m.area).abs() < 1e-12);
        assert!(sweep(&ig, 0.0, 4).is_err());
    }

    #[test]
    fn sweep_endpoints_on_adders() {
        for seed in 0..3 {
            let (pre, ig, ..) = synthesized_adder(8, seed);
            let lib = default_library(0);
            let r = analyze(&pre, &lib).unwrap();
            let id = sweep(&ig, r.worst_delay, DEFAULT_K_PATHS).unwrap();
            assert!(id.swapped.is_empty());
            assert_eq!(id.delay, r.worst_delay);
            let k = count_paths(&pre) as usize;
            let full = sweep(&ig, 1e-3, k).unwrap();
            let m = reconstruct_metrics(&ig);
            assert!((full.delay - m.delay).abs() <= 1e-6 * m.delay);
            assert!((full.area - m.area).abs() <= 1e-6 * m.area);
        }
    }

    #[test]
    fn curve_csv_round_trip() {
        let (_, ig, ..) = synthesized_adder(8, 1);
        let pre = ig.base().features().unwrap().iter().map(|f| f.cell_area).sum::<f64>();
        let c = sweep_curve(&ig, &[1e6], 16).unwrap();
        assert_eq!(c.points.len(), 1);
        assert!((c.points[0].area - pre).abs() < 1e-9);
        assert_eq!(SweepCurve::from_csv(&c.to_csv()).unwrap(), c);
        assert!(SweepCurve::from_csv("h\n1,2\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn sweep_properties(seed in 0u64..10_000, deltas in prop::collection::vec((-3.0f64..1.0, 0.0f64..2.0), 40)) {
            let lib = default_library(0);
            let g = annotated(&random_netlist(seed, 40), &lib);
            let p: Vec<LabelPair> = g.nodes().iter().enumerate().map(|(i, n)| {
                let (d, a) = deltas[i % deltas.len()];
                LabelPair { delay_delta: d, area_delta: if n.is_cell_output() { a } else { 0.0 } }
            }).collect();
            let ig = InferredGraph::new(g.clone(), p).unwrap();
            let pre = analyze(&g, &lib).unwrap();
            let k = count_paths(&g) as usize;
            let inf = sweep(&ig, f64::INFINITY, k).unwrap();
            prop_assert!(inf.swapped.is_empty());
            prop_assert!((inf.delay - pre.worst_delay).abs() < 1e-9);
            let full = sweep(&ig, 1e-9, k).unwrap();
            let m = reconstruct_metrics(&ig);
            prop_assert!((full.delay - m.delay).abs() < 1e-9);
            prop_assert!((full.area - m.area).abs() < 1e-9);
            prop_assert!(m.arrival.iter().all(|a| a.is_finite() && *a >= 0.0));
        }
    }
}
