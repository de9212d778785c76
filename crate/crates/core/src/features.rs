//! Node features, delta labels and z-score normalization.
//!
//! Delay labels are signed `post - pre` differences of each node's stage
//! delay, where the post-synthesis stage is measured against the node's
//! drivers in the *pre-synthesis* graph. Any buffers inserted between a node
//! and its original drivers are thereby absorbed into the node's label, and
//! adding labels back to features reconstructs post-synthesis arrivals
//! exactly.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{map_counterparts, CircuitGraph, NodeId, Origin};
use crate::library::{CellKind, CellLibrary};
use crate::netlist::CellId;
use crate::sta::{stage_delay, TimingReport};

/// One-hot categories: every (function, drive) pair, then the two port kinds.
pub const CATEGORY_INPUT_PORT: usize = CellKind::COUNT;
pub const CATEGORY_OUTPUT_PORT: usize = CellKind::COUNT + 1;
pub const CATEGORY_COUNT: usize = CellKind::COUNT + 2;
pub const NUMERIC_FEATURES: usize = 7;
pub const FEATURE_DIM: usize = NUMERIC_FEATURES + CATEGORY_COUNT;
pub const LABEL_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// 0 for inputs, 1 for outputs.
    pub direction: f64,
    pub stage_delay: f64,
    pub slew: f64,
    pub input_cap: f64,
    /// Owning cell's area on output pins, 0 elsewhere.
    pub cell_area: f64,
    pub driven_cap: f64,
    pub fanout: f64,
    /// Index of the single hot bit of the cell-type encoding.
    pub category: usize,
}

impl FeatureVector {
    pub fn to_row(&self) -> [f64; FEATURE_DIM] {
        let mut row = [0.0; FEATURE_DIM];
        row[..NUMERIC_FEATURES].copy_from_slice(&[
            self.direction,
            self.stage_delay,
            self.slew,
            self.input_cap,
            self.cell_area,
            self.driven_cap,
            self.fanout,
        ]);
        row[NUMERIC_FEATURES + self.category] = 1.0;
        row
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelPair {
    pub delay_delta: f64,
    pub area_delta: f64,
}

impl LabelPair {
    pub fn to_row(&self) -> [f64; LABEL_DIM] {
        [self.delay_delta, self.area_delta]
    }
}

pub fn annotate_features(g: &CircuitGraph, report: &TimingReport, lib: &CellLibrary) -> Result<CircuitGraph> {
    report.check_matches(g)?;
    let mut features = Vec::with_capacity(g.len());
    for node in g.nodes() {
        let v = node.id;
        let slew = report.slew[v.idx()];
        let fv = if node.is_input_port() {
            FeatureVector {
                direction: 0.0,
                stage_delay: 0.0,
                slew,
                input_cap: 0.0,
                cell_area: 0.0,
                driven_cap: 0.0,
                fanout: 0.0,
                category: CATEGORY_INPUT_PORT,
            }
        } else if node.is_output_port() {
            FeatureVector {
                direction: 1.0,
                stage_delay: stage_delay(report, g, v),
                slew,
                input_cap: 0.0,
                cell_area: 0.0,
                driven_cap: 0.0,
                fanout: 0.0,
                category: CATEGORY_OUTPUT_PORT,
            }
        } else {
            let kind = node.kind.unwrap();
            let spec = lib.spec(kind)?;
            let output = node.is_cell_output();
            FeatureVector {
                direction: if output { 1.0 } else { 0.0 },
                stage_delay: stage_delay(report, g, v),
                slew,
                input_cap: if output { 0.0 } else { spec.input_cap },
                cell_area: if output { spec.area } else { 0.0 },
                driven_cap: if output { report.load[v.idx()] } else { 0.0 },
                fanout: if output { g.fanout(v).len() as f64 } else { 0.0 },
                category: kind.index(),
            }
        };
        features.push(fv);
    }
    g.clone().with_features(features)
}

/// Per-node delta labels for a pre/post synthesis pair.
pub fn build_labels(
    pre: &CircuitGraph,
    post: &CircuitGraph,
    rpt_pre: &TimingReport,
    rpt_post: &TimingReport,
    lib: &CellLibrary,
) -> Result<Vec<LabelPair>> {
    rpt_pre.check_matches(pre)?;
    rpt_post.check_matches(post)?;
    map_counterparts(pre, post)?;

    // Area of inserted cells, attributed to the original driver at the root
    // of their buffer chain.
    let mut absorbed_area: BTreeMap<NodeId, f64> = BTreeMap::new();
    for (&cell, pins) in post.cells() {
        if post.node(pins.output).origin != Origin::Inserted {
            continue;
        }
        let root = chain_root(post, cell)?;
        *absorbed_area.entry(root).or_default() += lib.spec(pins.kind)?.area;
    }

    let mut labels = Vec::with_capacity(pre.len());
    for node in pre.nodes() {
        let v = node.id;
        let preds = pre.fanin(v);
        let absorbed_stage = if preds.is_empty() {
            0.0
        } else {
            let latest = preds
                .iter()
                .map(|u| rpt_post.arrival[u.idx()])
                .fold(f64::NEG_INFINITY, f64::max);
            rpt_post.arrival[v.idx()] - latest
        };
        let delay_delta = absorbed_stage - stage_delay(rpt_pre, pre, v);
        let area_delta = if node.is_cell_output() {
            let cell = node.cell().unwrap();
            let pre_area = lib.spec(pre.cell_pins(cell).unwrap().kind)?.area;
            let post_area = lib.spec(post.cell_pins(cell).unwrap().kind)?.area;
            post_area + absorbed_area.get(&v).copied().unwrap_or(0.0) - pre_area
        } else {
            0.0
        };
        labels.push(LabelPair { delay_delta, area_delta });
    }
    Ok(labels)
}

fn chain_root(post: &CircuitGraph, cell: CellId) -> Result<NodeId> {
    let mut cell = cell;
    loop {
        let pins = post.cell_pins(cell).unwrap();
        let driver = post.fanin(pins.inputs[0])[0];
        let d = post.node(driver);
        if d.origin == Origin::Inserted {
            cell = d.cell().unwrap();
        } else if d.is_cell_output() {
            return Ok(driver);
        } else {
            return Err(Error::Consistency(format!(
                "inserted cell {} is driven by port {}, which has no output pin to absorb its area",
                cell.0, driver
            )));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns with zero variance; their std is pinned to 1.
    pub constant: Vec<bool>,
}

impl ColumnStats {
    fn fit<const D: usize>(rows: &[[f64; D]]) -> Self {
        let n = rows.len() as f64;
        let mut mean = vec![0.0; D];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; D];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let mut std = Vec::with_capacity(D);
        let mut constant = Vec::with_capacity(D);
        for v in var {
            let s = (v / n).sqrt();
            let flat = !(s > 1e-12 * (1.0 + s.abs()));
            constant.push(flat);
            std.push(if flat { 1.0 } else { s });
        }
        ColumnStats { mean, std, constant }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((z, m), s)| z * s + m)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub schema: u32,
    pub features: ColumnStats,
    pub labels: ColumnStats,
}

pub const NORM_SCHEMA: u32 = 1;

impl NormStats {
    pub fn fingerprint(&self) -> String {
        crate::library::fingerprint_bytes(&serde_json::to_vec(self).expect("serializable"))
    }

    pub fn normalize_features(&self, features: &[FeatureVector]) -> Array2<f64> {
        let mut out = Array2::zeros((features.len(), FEATURE_DIM));
        for (i, f) in features.iter().enumerate() {
            for (j, z) in self.features.apply(&f.to_row()).into_iter().enumerate() {
                out[[i, j]] = z;
            }
        }
        out
    }

    pub fn normalize_labels(&self, labels: &[LabelPair]) -> Array2<f64> {
        let mut out = Array2::zeros((labels.len(), LABEL_DIM));
        for (i, l) in labels.iter().enumerate() {
            for (j, z) in self.labels.apply(&l.to_row()).into_iter().enumerate() {
                out[[i, j]] = z;
            }
        }
        out
    }

    pub fn denormalize_labels(&self, z: &Array2<f64>) -> Vec<LabelPair> {
        z.rows()
            .into_iter()
            .map(|row| {
                let x = self.labels.invert(&[row[0], row[1]]);
                LabelPair { delay_delta: x[0], area_delta: x[1] }
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stats: NormStats = serde_json::from_str(&text)?;
        if stats.schema != NORM_SCHEMA {
            return Err(Error::Parse(format!("unsupported normalization schema {}", stats.schema)));
        }
        Ok(stats)
    }
}

/// Fits feature and label statistics over every node of the training graphs.
pub fn fit_normalization<'a>(graphs: impl IntoIterator<Item = &'a CircuitGraph>) -> Result<NormStats> {
    let mut frows = Vec::new();
    let mut lrows = Vec::new();
    for g in graphs {
        let f = g
            .features()
            .ok_or_else(|| Error::Consistency("training graph has no features".into()))?;
        let l = g
            .labels()
            .ok_or_else(|| Error::Consistency("training graph has no labels".into()))?;
        frows.extend(f.iter().map(FeatureVector::to_row));
        lrows.extend(l.iter().map(LabelPair::to_row));
    }
    if frows.is_empty() {
        return Err(Error::Domain("cannot fit normalization on an empty split".into()));
    }
    Ok(NormStats {
        schema: NORM_SCHEMA,
        features: ColumnStats::fit(&frows),
        labels: ColumnStats::fit(&lrows),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::netlist_to_graph;
    use crate::graph::tests::fanout_tree;
    use crate::library::{default_library, CellFunction, Drive};
    use crate::sta::analyze;

    fn annotated(nl: &crate::netlist::Netlist) -> (CircuitGraph, TimingReport) {
        let lib = default_library(0);
        let g = netlist_to_graph(nl).unwrap();
        let r = analyze(&g, &lib).unwrap();
        (annotate_features(&g, &r, &lib).unwrap(), r)
    }

    #[test]
    fn port_and_pin_features() {
        let lib = default_library(0);
        let (g, _) = annotated(&fanout_tree(3));
        let f = g.features().unwrap();
        let pi = f[0];
        assert_eq!(pi.category, CATEGORY_INPUT_PORT);
        assert_eq!(pi.slew, lib.default_input_slew);
        assert_eq!(
            [pi.direction, pi.stage_delay, pi.input_cap, pi.cell_area, pi.driven_cap, pi.fanout],
            [0.0; 6]
        );
        let and_out = g.cell_pins(CellId(0)).unwrap().output;
        let fo = f[and_out.idx()];
        assert_eq!(fo.fanout, 3.0);
        let inv_cap = lib.cells[&CellKind::new(CellFunction::Inv, Drive::X1)].input_cap;
        assert!((fo.driven_cap - (3.0 * inv_cap + 3.0 * lib.wire_cap_per_fanout)).abs() < 1e-12);
        for fv in f {
            assert_eq!(fv.to_row()[NUMERIC_FEATURES..].iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn input_pin_of_inv_x2() {
        let lib = default_library(0);
        let g = netlist_to_graph(&fanout_tree(2)).unwrap();
        let g = g.resize_cell(CellId(1), CellKind::new(CellFunction::Inv, Drive::X2)).unwrap();
        let r = analyze(&g, &lib).unwrap();
        let g = annotate_features(&g, &r, &lib).unwrap();
        let pin = g.cell_pins(CellId(1)).unwrap().inputs[0];
        let want = lib.cells[&CellKind::new(CellFunction::Inv, Drive::X2)].input_cap;
        assert_eq!(g.features().unwrap()[pin.idx()].input_cap, want);
        assert!(g.features().unwrap()[pin.idx()].input_cap > 0.0);
    }

    #[test]
    fn report_mismatch_is_rejected() {
        let lib = default_library(0);
        let small = netlist_to_graph(&fanout_tree(2)).unwrap();
        let big = netlist_to_graph(&fanout_tree(4)).unwrap();
        let r = analyze(&small, &lib).unwrap();
        assert!(matches!(annotate_features(&big, &r, &lib), Err(Error::Consistency(_))));
    }

    #[test]
    fn noop_synthesis_gives_zero_labels() {
        let lib = default_library(0);
        let g = netlist_to_graph(&fanout_tree(3)).unwrap();
        let r = analyze(&g, &lib).unwrap();
        let labels = build_labels(&g, &g, &r, &r, &lib).unwrap();
        assert!(labels.iter().all(|l| *l == LabelPair::default()));
    }

    #[test]
    fn resize_area_delta_from_fixture_library() {
        let mut lib = crate::testkit::flat_library(1.0, 0.5, 0.0);
        let and_x1 = CellKind::new(CellFunction::And2, Drive::X1);
        let and_x4 = CellKind::new(CellFunction::And2, Drive::X4);
        lib.cells.get_mut(&and_x1).unwrap().area = 1.0;
        lib.cells.get_mut(&and_x4).unwrap().area = 2.25;
        let pre = netlist_to_graph(&fanout_tree(3)).unwrap();
        let post = pre.resize_cell(CellId(0), and_x4).unwrap();
        let (rp, rq) = (analyze(&pre, &lib).unwrap(), analyze(&post, &lib).unwrap());
        let labels = build_labels(&pre, &post, &rp, &rq, &lib).unwrap();
        let out = pre.cell_pins(CellId(0)).unwrap().output;
        assert!((labels[out.idx()].area_delta - 1.25).abs() < 1e-12);
        let others: f64 = labels.iter().map(|l| l.area_delta.abs()).sum::<f64>() - 1.25;
        assert!(others.abs() < 1e-12);
    }

    #[test]
    fn buffer_area_is_absorbed_by_driver() {
        let lib = default_library(0);
        let buf = CellKind::new(CellFunction::Buf, Drive::X1);
        let pre = netlist_to_graph(&fanout_tree(4)).unwrap();
        let driver = pre.cell_pins(CellId(0)).unwrap().output;
        let keep = pre.fanout(driver)[0];
        let (post, _, y) = pre.insert_buffer(driver, keep, buf).unwrap();
        // nested: split the buffer's own net again
        let (post, _, _) = post.insert_buffer(y, post.fanout(y)[0], buf).unwrap();
        let (rp, rq) = (analyze(&pre, &lib).unwrap(), analyze(&post, &lib).unwrap());
        let labels = build_labels(&pre, &post, &rp, &rq, &lib).unwrap();
        let area = lib.cells[&buf].area;
        assert!((labels[driver.idx()].area_delta - 2.0 * area).abs() < 1e-12);
        let sum: f64 = pre
            .nodes()
            .iter()
            .filter(|n| n.is_cell_output())
            .map(|n| lib.cells[&pre.cell_pins(n.cell().unwrap()).unwrap().kind].area + labels[n.id.idx()].area_delta)
            .sum();
        assert!((sum - rq.total_area).abs() < 1e-9);
    }

    #[test]
    fn delay_delta_sign_convention() {
        // pre stage 1.2, post stage 1.0 -> delta -0.2
        let lib = crate::testkit::flat_library(1.2, 0.0, 0.0);
        let pre = netlist_to_graph(&crate::graph::tests::single_inv()).unwrap();
        let mut fast = lib.clone();
        let inv_x2 = CellKind::new(CellFunction::Inv, Drive::X2);
        fast.cells.get_mut(&inv_x2).unwrap().d_intrinsic = 1.0;
        let post = pre.resize_cell(CellId(0), inv_x2).unwrap();
        let rp = analyze(&pre, &lib).unwrap();
        let rq = analyze(&post, &fast).unwrap();
        let labels = build_labels(&pre, &post, &rp, &rq, &fast).unwrap();
        assert!((labels[2].delay_delta + 0.2).abs() < 1e-12);
    }

    #[test]
    fn normalization_round_trip_and_moments() {
        let (g, r) = annotated(&fanout_tree(5));
        let lib = default_library(0);
        let labels = build_labels(&g, &g, &r, &r, &lib).unwrap();
        let g = g.with_labels(labels).unwrap();
        let stats = fit_normalization([&g]).unwrap();
        let z = stats.normalize_features(g.features().unwrap());
        for j in 0..FEATURE_DIM {
            let col = z.column(j);
            let mean = col.sum() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-6);
            if stats.features.constant[j] {
                assert!(col.iter().all(|&x| x == 0.0));
            } else {
                assert!((var.sqrt() - 1.0).abs() < 1e-6);
            }
        }
        // all-zero labels: both columns constant
        assert_eq!(stats.labels.constant, vec![true, true]);
        for f in g.features().unwrap() {
            let row = f.to_row();
            let back = stats.features.invert(&stats.features.apply(&row));
            for (a, b) in row.iter().zip(back) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_split_is_a_domain_error() {
        let none: Vec<CircuitGraph> = Vec::new();
        assert!(matches!(fit_normalization(&none), Err(Error::Domain(_))));
    }

    proptest::proptest! {
        #[test]
        fn label_invert_apply_round_trip(d in -100.0..100.0f64, a in -5.0..5.0f64,
                                         m0 in -3.0..3.0f64, s0 in 0.01..10.0f64) {
            let stats = ColumnStats { mean: vec![m0, -m0], std: vec![s0, 2.0 * s0], constant: vec![false; 2] };
            let back = stats.invert(&stats.apply(&[d, a]));
            proptest::prop_assert!((back[0] - d).abs() < 1e-9 && (back[1] - a).abs() < 1e-9);
        }
    }
}
