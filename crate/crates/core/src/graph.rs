//! Pin-level circuit DAG.
//!
//! Every pin is a node: primary input/output ports, cell input pins and cell
//! output pins. Net edges run from a driver pin to each of its sinks; internal
//! arcs run from every input pin of a cell to that cell's output pin. Node ids
//! are dense (`nodes[i].id == i`) and stable across synthesis: transforms only
//! append fresh ids for inserted pins.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, LabelPair};
use crate::library::CellKind;
use crate::netlist::{Cell, CellId, Net, NetId, Netlist, PinRef};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Inserted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Cell(CellId),
    InputPort(u32),
    OutputPort(u32),
}

/// One pin. Primary input ports have direction `Input` and primary output
/// ports `Output`, matching the design's own view of its ports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinNode {
    pub id: NodeId,
    pub owner: Owner,
    pub direction: Direction,
    /// Input pin index for cell input pins, 0 otherwise.
    #[serde(default)]
    pub pin: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<CellKind>,
    pub origin: Origin,
    /// Net driven by this pin (drivers only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<NetId>,
}

impl PinNode {
    pub fn is_port(&self) -> bool {
        !matches!(self.owner, Owner::Cell(_))
    }

    pub fn is_input_port(&self) -> bool {
        matches!(self.owner, Owner::InputPort(_))
    }

    pub fn is_output_port(&self) -> bool {
        matches!(self.owner, Owner::OutputPort(_))
    }

    pub fn is_cell_output(&self) -> bool {
        matches!(self.owner, Owner::Cell(_)) && self.direction == Direction::Output
    }

    pub fn is_cell_input(&self) -> bool {
        matches!(self.owner, Owner::Cell(_)) && self.direction == Direction::Input
    }

    /// Drives a net: a cell output pin or a primary input port.
    pub fn is_driver(&self) -> bool {
        self.is_cell_output() || self.is_input_port()
    }

    pub fn cell(&self) -> Option<CellId> {
        match self.owner {
            Owner::Cell(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Net,
    InternalArc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellPins {
    pub kind: CellKind,
    pub inputs: Vec<NodeId>,
    pub output: NodeId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircuitGraph {
    nodes: Vec<PinNode>,
    edges: Vec<(NodeId, NodeId)>,
    fanout: Vec<Vec<NodeId>>,
    fanin: Vec<Vec<NodeId>>,
    order: Vec<NodeId>,
    cells: BTreeMap<CellId, CellPins>,
    input_ports: Vec<NodeId>,
    output_ports: Vec<NodeId>,
    features: Option<Vec<FeatureVector>>,
    labels: Option<Vec<LabelPair>>,
}

impl CircuitGraph {
    /// Builds and validates a graph: dense ids, well-formed edge kinds,
    /// consistent cell pins and acyclicity.
    pub fn from_parts(nodes: Vec<PinNode>, edges: Vec<(NodeId, NodeId)>) -> Result<Self> {
        let n = nodes.len();
        for (i, node) in nodes.iter().enumerate() {
            if node.id.idx() != i {
                return Err(Error::Structural(format!("node at position {i} has id {}", node.id)));
            }
        }
        let mut fanout = vec![Vec::new(); n];
        let mut fanin = vec![Vec::new(); n];
        for &(a, b) in &edges {
            if a.idx() >= n || b.idx() >= n {
                return Err(Error::Structural(format!("edge {a} -> {b} out of range")));
            }
            fanout[a.idx()].push(b);
            fanin[b.idx()].push(a);
        }

        type Pins = (Option<CellKind>, Vec<(u8, NodeId)>, Option<NodeId>);
        let mut cells: BTreeMap<CellId, Pins> = BTreeMap::new();
        let mut input_ports = BTreeMap::new();
        let mut output_ports = BTreeMap::new();
        for node in &nodes {
            match node.owner {
                Owner::Cell(c) => {
                    let Some(kind) = node.kind else {
                        return Err(Error::Structural(format!("cell pin {} lacks a kind", node.id)));
                    };
                    let entry = cells.entry(c).or_insert((Some(kind), Vec::new(), None));
                    if entry.0 != Some(kind) {
                        return Err(Error::Structural(format!("pins of cell {} disagree on kind", c.0)));
                    }
                    match node.direction {
                        Direction::Input => entry.1.push((node.pin, node.id)),
                        Direction::Output => {
                            if entry.2.replace(node.id).is_some() {
                                return Err(Error::Structural(format!("cell {} has two outputs", c.0)));
                            }
                        }
                    }
                }
                Owner::InputPort(p) => {
                    if input_ports.insert(p, node.id).is_some() {
                        return Err(Error::Structural(format!("duplicate input port {p}")));
                    }
                }
                Owner::OutputPort(p) => {
                    if output_ports.insert(p, node.id).is_some() {
                        return Err(Error::Structural(format!("duplicate output port {p}")));
                    }
                }
            }
        }
        let mut cell_pins = BTreeMap::new();
        for (id, (kind, mut inputs, output)) in cells {
            let kind = kind.unwrap();
            inputs.sort();
            let expected: Vec<u8> = (0..kind.function.input_count() as u8).collect();
            if inputs.iter().map(|p| p.0).collect::<Vec<_>>() != expected {
                return Err(Error::Structural(format!("cell {} has malformed input pins", id.0)));
            }
            let Some(output) = output else {
                return Err(Error::Structural(format!("cell {} has no output pin", id.0)));
            };
            cell_pins.insert(
                id,
                CellPins {
                    kind,
                    inputs: inputs.into_iter().map(|p| p.1).collect(),
                    output,
                },
            );
        }

        let graph = CircuitGraph {
            order: Vec::new(),
            nodes,
            edges,
            fanout,
            fanin,
            cells: cell_pins,
            input_ports: input_ports.into_values().collect(),
            output_ports: output_ports.into_values().collect(),
            features: None,
            labels: None,
        };
        for &(a, b) in &graph.edges {
            graph.classify_edge(a, b)?;
        }
        for node in &graph.nodes {
            let fi = graph.fanin[node.id.idx()].len();
            let ok = if node.is_input_port() {
                fi == 0
            } else if node.is_cell_output() {
                fi == node.kind.unwrap().function.input_count()
            } else {
                fi == 1
            };
            if !ok {
                return Err(Error::Structural(format!("node {} has fan-in {fi}", node.id)));
            }
        }
        let order = topological_sort(graph.nodes.len(), &graph.edges)?;
        Ok(CircuitGraph { order, ..graph })
    }

    fn classify_edge(&self, a: NodeId, b: NodeId) -> Result<EdgeKind> {
        let (na, nb) = (&self.nodes[a.idx()], &self.nodes[b.idx()]);
        if na.is_driver() && (nb.is_cell_input() || nb.is_output_port()) {
            Ok(EdgeKind::Net)
        } else if na.is_cell_input() && nb.is_cell_output() && na.cell() == nb.cell() {
            Ok(EdgeKind::InternalArc)
        } else {
            Err(Error::Structural(format!("edge {a} -> {b} is neither a net edge nor an internal arc")))
        }
    }

    pub fn edge_kind(&self, from: NodeId, to: NodeId) -> EdgeKind {
        self.classify_edge(from, to).expect("edges are validated on construction")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[PinNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &PinNode {
        &self.nodes[id.idx()]
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn fanout(&self, id: NodeId) -> &[NodeId] {
        &self.fanout[id.idx()]
    }

    pub fn fanin(&self, id: NodeId) -> &[NodeId] {
        &self.fanin[id.idx()]
    }

    /// Deterministic topological order (ties by ascending node id).
    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn cells(&self) -> &BTreeMap<CellId, CellPins> {
        &self.cells
    }

    pub fn cell_pins(&self, cell: CellId) -> Option<&CellPins> {
        self.cells.get(&cell)
    }

    pub fn input_ports(&self) -> &[NodeId] {
        &self.input_ports
    }

    pub fn output_ports(&self) -> &[NodeId] {
        &self.output_ports
    }

    pub fn features(&self) -> Option<&[FeatureVector]> {
        self.features.as_deref()
    }

    pub fn labels(&self) -> Option<&[LabelPair]> {
        self.labels.as_deref()
    }

    pub fn with_features(mut self, features: Vec<FeatureVector>) -> Result<Self> {
        if features.len() != self.nodes.len() {
            return Err(Error::Consistency(format!(
                "{} feature vectors for {} nodes",
                features.len(),
                self.nodes.len()
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<LabelPair>) -> Result<Self> {
        if labels.len() != self.nodes.len() {
            return Err(Error::Consistency(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.nodes.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn without_annotations(mut self) -> Self {
        self.features = None;
        self.labels = None;
        self
    }

    pub fn inserted_nodes(&self) -> impl Iterator<Item = &PinNode> {
        self.nodes.iter().filter(|n| n.origin == Origin::Inserted)
    }

    fn next_cell_id(&self) -> CellId {
        CellId(self.cells.keys().next_back().map_or(0, |c| c.0 + 1))
    }

    fn next_net_id(&self) -> NetId {
        NetId(self.nodes.iter().filter_map(|n| n.net).map(|n| n.0 + 1).max().unwrap_or(0))
    }

    /// Replaces the kind of every pin of `cell`; node ids are untouched.
    pub fn resize_cell(&self, cell: CellId, kind: CellKind) -> Result<Self> {
        let pins = self
            .cells
            .get(&cell)
            .ok_or_else(|| Error::Structural(format!("no cell {}", cell.0)))?;
        if pins.kind.function != kind.function {
            return Err(Error::Structural(format!(
                "cannot resize {} into a different function {kind}",
                pins.kind
            )));
        }
        let mut nodes = self.nodes.clone();
        for &p in pins.inputs.iter().chain(std::iter::once(&pins.output)) {
            nodes[p.idx()].kind = Some(kind);
        }
        let mut cells = self.cells.clone();
        cells.get_mut(&cell).unwrap().kind = kind;
        Ok(CircuitGraph {
            nodes,
            cells,
            features: None,
            labels: None,
            ..self.clone()
        })
    }

    /// Inserts a buffer on the net driven by `driver`: `keep` stays directly
    /// connected, every other sink moves behind the new buffer. Returns the
    /// new graph and the buffer's (input, output) node ids.
    pub fn insert_buffer(
        &self,
        driver: NodeId,
        keep: NodeId,
        buffer: CellKind,
    ) -> Result<(Self, NodeId, NodeId)> {
        if buffer.function.input_count() != 1 {
            return Err(Error::Structural(format!("{buffer} is not a single-input cell")));
        }
        let d = self.node(driver);
        if !d.is_driver() {
            return Err(Error::Structural(format!("{driver} does not drive a net")));
        }
        let sinks = self.fanout(driver);
        if !sinks.contains(&keep) || sinks.len() < 2 {
            return Err(Error::Structural(format!(
                "cannot isolate {keep} on the net of {driver}"
            )));
        }
        let cell = self.next_cell_id();
        let net = self.next_net_id();
        let a = NodeId(self.nodes.len() as u32);
        let y = NodeId(a.0 + 1);
        let mut nodes = self.nodes.clone();
        nodes.push(PinNode {
            id: a,
            owner: Owner::Cell(cell),
            direction: Direction::Input,
            pin: 0,
            kind: Some(buffer),
            origin: Origin::Inserted,
            net: None,
        });
        nodes.push(PinNode {
            id: y,
            owner: Owner::Cell(cell),
            direction: Direction::Output,
            pin: 0,
            kind: Some(buffer),
            origin: Origin::Inserted,
            net: Some(net),
        });
        let moved: BTreeSet<NodeId> = sinks.iter().copied().filter(|&s| s != keep).collect();
        let mut edges: Vec<(NodeId, NodeId)> = Vec::with_capacity(self.edges.len() + 2);
        let mut buffer_edges = Vec::new();
        for &(from, to) in &self.edges {
            if from == driver && moved.contains(&to) {
                buffer_edges.push((y, to));
            } else {
                edges.push((from, to));
                if from == driver && to == keep {
                    edges.push((driver, a));
                }
            }
        }
        edges.push((a, y));
        edges.extend(buffer_edges);
        let g = CircuitGraph::from_parts(nodes, edges)?;
        Ok((g, a, y))
    }
}

/// Kahn's algorithm with a min-heap so ties resolve to the smallest node id.
/// On a cycle, reports one back-edge found by DFS over the unsorted remainder.
pub fn topological_sort(node_count: usize, edges: &[(NodeId, NodeId)]) -> Result<Vec<NodeId>> {
    let mut indeg = vec![0usize; node_count];
    let mut succ = vec![Vec::new(); node_count];
    for &(a, b) in edges {
        indeg[b.idx()] += 1;
        succ[a.idx()].push(b);
    }
    let mut heap: BinaryHeap<Reverse<NodeId>> = (0..node_count)
        .filter(|&i| indeg[i] == 0)
        .map(|i| Reverse(NodeId(i as u32)))
        .collect();
    let mut order = Vec::with_capacity(node_count);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for &w in &succ[v.idx()] {
            indeg[w.idx()] -= 1;
            if indeg[w.idx()] == 0 {
                heap.push(Reverse(w));
            }
        }
    }
    if order.len() == node_count {
        return Ok(order);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; node_count];
    for start in 0..node_count {
        if indeg[start] == 0 || state[start] != 0 {
            continue;
        }
        let mut stack = vec![(NodeId(start as u32), 0usize)];
        state[start] = 1;
        while let Some((v, i)) = stack.pop() {
            if let Some(&w) = succ[v.idx()].get(i) {
                stack.push((v, i + 1));
                match state[w.idx()] {
                    0 => {
                        state[w.idx()] = 1;
                        stack.push((w, 0));
                    }
                    1 => return Err(Error::Cycle { from: v, to: w }),
                    _ => {}
                }
            } else {
                state[v.idx()] = 2;
            }
        }
    }
    unreachable!("a graph without a topological order has a cycle")
}

/// Topological order of the graph's nodes, recomputed from its edges.
pub fn topo_order(g: &CircuitGraph) -> Result<Vec<NodeId>> {
    topological_sort(g.len(), g.edges())
}

/// Builds the pin graph. Node numbering: input ports, then for each cell its
/// input pins followed by its output pin, then output ports.
pub fn netlist_to_graph(netlist: &Netlist) -> Result<CircuitGraph> {
    netlist.validate()?;
    let mut nodes = Vec::new();
    let mut pin_node: BTreeMap<PinRef, NodeId> = BTreeMap::new();
    let mut driven_net: BTreeMap<PinRef, NetId> = BTreeMap::new();
    for net in &netlist.nets {
        driven_net.insert(net.driver, net.id);
    }
    let mut push = |nodes: &mut Vec<PinNode>, pin: PinRef, owner, direction, idx: u8, kind| {
        let id = NodeId(nodes.len() as u32);
        nodes.push(PinNode {
            id,
            owner,
            direction,
            pin: idx,
            kind,
            origin: Origin::Original,
            net: driven_net.get(&pin).copied(),
        });
        pin_node.insert(pin, id);
    };
    for i in 0..netlist.primary_inputs.len() as u32 {
        push(&mut nodes, PinRef::InputPort(i), Owner::InputPort(i), Direction::Input, 0, None);
    }
    for cell in &netlist.cells {
        for pin in 0..cell.kind.function.input_count() as u8 {
            push(
                &mut nodes,
                PinRef::CellInput { cell: cell.id, pin },
                Owner::Cell(cell.id),
                Direction::Input,
                pin,
                Some(cell.kind),
            );
        }
        push(
            &mut nodes,
            PinRef::CellOutput(cell.id),
            Owner::Cell(cell.id),
            Direction::Output,
            0,
            Some(cell.kind),
        );
    }
    for j in 0..netlist.primary_outputs.len() as u32 {
        push(&mut nodes, PinRef::OutputPort(j), Owner::OutputPort(j), Direction::Output, 0, None);
    }

    let mut edges = Vec::new();
    for net in &netlist.nets {
        let d = pin_node[&net.driver];
        for s in &net.sinks {
            edges.push((d, pin_node[s]));
        }
    }
    for cell in &netlist.cells {
        let out = pin_node[&PinRef::CellOutput(cell.id)];
        for pin in 0..cell.kind.function.input_count() as u8 {
            edges.push((pin_node[&PinRef::CellInput { cell: cell.id, pin }], out));
        }
    }
    CircuitGraph::from_parts(nodes, edges)
}

/// Inverse of [`netlist_to_graph`]: cells and nets come back ordered by id,
/// net sinks in edge order.
pub fn graph_to_netlist(g: &CircuitGraph) -> Result<Netlist> {
    let pin_ref = |id: NodeId| -> PinRef {
        let n = g.node(id);
        match (n.owner, n.direction) {
            (Owner::InputPort(p), _) => PinRef::InputPort(p),
            (Owner::OutputPort(p), _) => PinRef::OutputPort(p),
            (Owner::Cell(c), Direction::Input) => PinRef::CellInput { cell: c, pin: n.pin },
            (Owner::Cell(c), Direction::Output) => PinRef::CellOutput(c),
        }
    };
    let cells = g
        .cells()
        .iter()
        .map(|(&id, pins)| Cell { id, kind: pins.kind })
        .collect();
    let mut nets = Vec::new();
    for node in g.nodes().iter().filter(|n| n.is_driver()) {
        let id = node
            .net
            .ok_or_else(|| Error::Structural(format!("driver {} carries no net id", node.id)))?;
        nets.push(Net {
            id,
            driver: pin_ref(node.id),
            sinks: g.fanout(node.id).iter().map(|&s| pin_ref(s)).collect(),
        });
    }
    nets.sort_by_key(|n| n.id);
    let primary_inputs = g
        .input_ports()
        .iter()
        .map(|&p| g.node(p).net.unwrap())
        .collect();
    let primary_outputs = g
        .output_ports()
        .iter()
        .map(|&p| g.node(g.fanin(p)[0]).net.unwrap())
        .collect();
    Ok(Netlist {
        cells,
        nets,
        primary_inputs,
        primary_outputs,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Counterparts {
    /// Post node id for every pre node (identity by construction).
    pub mapping: BTreeMap<NodeId, NodeId>,
    pub inserted: BTreeSet<NodeId>,
}

/// Matches post-synthesis nodes to their pre-synthesis counterparts.
pub fn map_counterparts(pre: &CircuitGraph, post: &CircuitGraph) -> Result<Counterparts> {
    let mut out = Counterparts::default();
    for node in post.nodes() {
        match node.origin {
            Origin::Inserted => {
                out.inserted.insert(node.id);
            }
            Origin::Original => {
                let Some(p) = pre.nodes().get(node.id.idx()) else {
                    return Err(Error::Consistency(format!(
                        "original post node {} has no pre-synthesis counterpart",
                        node.id
                    )));
                };
                let kind_ok = match (p.kind, node.kind) {
                    (Some(a), Some(b)) => a.function == b.function,
                    (None, None) => true,
                    _ => false,
                };
                if p.owner != node.owner || p.direction != node.direction || p.pin != node.pin || !kind_ok {
                    return Err(Error::Consistency(format!(
                        "node {} changed identity across synthesis",
                        node.id
                    )));
                }
                out.mapping.insert(p.id, node.id);
            }
        }
    }
    if out.mapping.len() != pre.len() {
        return Err(Error::Consistency(format!(
            "{} of {} pre-synthesis nodes are missing after synthesis",
            pre.len() - out.mapping.len(),
            pre.len()
        )));
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::library::{CellFunction, Drive};

    pub(crate) fn kind(f: CellFunction) -> CellKind {
        CellKind::new(f, Drive::X1)
    }

    pub(crate) fn single_inv() -> Netlist {
        Netlist {
            cells: vec![Cell { id: CellId(0), kind: kind(CellFunction::Inv) }],
            nets: vec![
                Net { id: NetId(0), driver: PinRef::InputPort(0), sinks: vec![PinRef::CellInput { cell: CellId(0), pin: 0 }] },
                Net { id: NetId(1), driver: PinRef::CellOutput(CellId(0)), sinks: vec![PinRef::OutputPort(0)] },
            ],
            primary_inputs: vec![NetId(0)],
            primary_outputs: vec![NetId(1)],
        }
    }

    /// Driver AND2 fanning out to `fanout` INVs, each to its own output.
    pub(crate) fn fanout_tree(fanout: u32) -> Netlist {
        let mut cells = vec![Cell { id: CellId(0), kind: kind(CellFunction::And2) }];
        let mut nets = vec![
            Net { id: NetId(0), driver: PinRef::InputPort(0), sinks: vec![PinRef::CellInput { cell: CellId(0), pin: 0 }] },
            Net { id: NetId(1), driver: PinRef::InputPort(1), sinks: vec![PinRef::CellInput { cell: CellId(0), pin: 1 }] },
        ];
        let mut hub = Vec::new();
        let mut outs = Vec::new();
        for i in 0..fanout {
            let c = CellId(i + 1);
            cells.push(Cell { id: c, kind: kind(CellFunction::Inv) });
            hub.push(PinRef::CellInput { cell: c, pin: 0 });
            nets.push(Net { id: NetId(3 + i), driver: PinRef::CellOutput(c), sinks: vec![PinRef::OutputPort(i)] });
            outs.push(NetId(3 + i));
        }
        nets.push(Net { id: NetId(2), driver: PinRef::CellOutput(CellId(0)), sinks: hub });
        nets.sort_by_key(|n| n.id);
        Netlist { cells, nets, primary_inputs: vec![NetId(0), NetId(1)], primary_outputs: outs }
    }

    #[test]
    fn single_inverter_graph() {
        let g = netlist_to_graph(&single_inv()).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.edges().len(), 3);
        assert_eq!(g.order(), &[NodeId(0), NodeId(1), NodeId(2), NodeId(3)]);
    }

    #[test]
    fn feed_through_graph() {
        let n = Netlist {
            cells: vec![],
            nets: vec![Net { id: NetId(0), driver: PinRef::InputPort(0), sinks: vec![PinRef::OutputPort(0)] }],
            primary_inputs: vec![NetId(0)],
            primary_outputs: vec![NetId(0)],
        };
        let g = netlist_to_graph(&n).unwrap();
        assert_eq!((g.len(), g.edges().len()), (2, 1));
        assert_eq!(graph_to_netlist(&g).unwrap(), n);
    }

    #[test]
    fn and2_has_two_internal_arcs() {
        let g = netlist_to_graph(&fanout_tree(3)).unwrap();
        let and_out = g.cell_pins(CellId(0)).unwrap().output;
        let arcs = g
            .edges()
            .iter()
            .filter(|&&(a, b)| b == and_out && g.edge_kind(a, b) == EdgeKind::InternalArc)
            .count();
        assert_eq!(arcs, 2);
    }

    #[test]
    fn node_and_edge_counts() {
        let nl = fanout_tree(5);
        let g = netlist_to_graph(&nl).unwrap();
        let pins: usize = nl.cells.iter().map(|c| c.kind.function.input_count() + 1).sum();
        assert_eq!(g.len(), pins + nl.primary_inputs.len() + nl.primary_outputs.len());
        let sinks: usize = nl.nets.iter().map(|n| n.sinks.len()).sum();
        let arcs: usize = nl.cells.iter().map(|c| c.kind.function.input_count()).sum();
        assert_eq!(g.edges().len(), sinks + arcs);
        assert_eq!(graph_to_netlist(&g).unwrap(), nl);
    }

    #[test]
    fn multiply_driven_pin_is_rejected() {
        let mut nl = single_inv();
        nl.nets[1].sinks.push(PinRef::CellInput { cell: CellId(0), pin: 0 });
        assert!(matches!(netlist_to_graph(&nl), Err(Error::Structural(_))));
    }

    #[test]
    fn cyclic_netlist_is_rejected() {
        // Two inverters in a loop, the second also drives the output.
        let inv = kind(CellFunction::Inv);
        let nl = Netlist {
            cells: vec![Cell { id: CellId(0), kind: kind(CellFunction::And2) }, Cell { id: CellId(1), kind: inv }],
            nets: vec![
                Net { id: NetId(0), driver: PinRef::InputPort(0), sinks: vec![PinRef::CellInput { cell: CellId(0), pin: 0 }] },
                Net { id: NetId(1), driver: PinRef::CellOutput(CellId(0)), sinks: vec![PinRef::CellInput { cell: CellId(1), pin: 0 }] },
                Net {
                    id: NetId(2),
                    driver: PinRef::CellOutput(CellId(1)),
                    sinks: vec![PinRef::CellInput { cell: CellId(0), pin: 1 }, PinRef::OutputPort(0)],
                },
            ],
            primary_inputs: vec![NetId(0)],
            primary_outputs: vec![NetId(2)],
        };
        assert!(matches!(netlist_to_graph(&nl), Err(Error::Cycle { .. })));
    }

    #[test]
    fn topo_order_examples() {
        let chain = [(NodeId(0), NodeId(1)), (NodeId(1), NodeId(2))];
        assert_eq!(topological_sort(3, &chain).unwrap(), vec![NodeId(0), NodeId(1), NodeId(2)]);
        // chains 0->2 and 1->3
        let two = [(NodeId(0), NodeId(2)), (NodeId(1), NodeId(3))];
        assert_eq!(
            topological_sort(4, &two).unwrap(),
            vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)]
        );
        let cyc = [(NodeId(0), NodeId(1)), (NodeId(1), NodeId(2)), (NodeId(2), NodeId(1))];
        match topological_sort(3, &cyc) {
            Err(Error::Cycle { from, to }) => {
                assert!((from, to) == (NodeId(2), NodeId(1)) || (from, to) == (NodeId(1), NodeId(2)))
            }
            other => panic!("expected a cycle, got {other:?}"),
        }
    }

    #[test]
    fn counterparts_identity_and_buffer() {
        let g = netlist_to_graph(&fanout_tree(3)).unwrap();
        let cp = map_counterparts(&g, &g).unwrap();
        assert!(cp.inserted.is_empty());
        assert!(cp.mapping.iter().all(|(a, b)| a == b));

        let driver = g.cell_pins(CellId(0)).unwrap().output;
        let keep = g.fanout(driver)[1];
        let buf = CellKind::new(CellFunction::Buf, Drive::X1);
        let (post, a, y) = g.insert_buffer(driver, keep, buf).unwrap();
        let cp = map_counterparts(&g, &post).unwrap();
        assert_eq!(cp.inserted, BTreeSet::from([a, y]));
        assert_eq!(cp.mapping.len(), g.len());
        assert_eq!(post.fanout(driver), &[keep, a]);
        assert_eq!(post.fanout(y).len(), 2);

        let resized = g
            .resize_cell(CellId(0), CellKind::new(CellFunction::And2, Drive::X4))
            .unwrap();
        let cp = map_counterparts(&g, &resized).unwrap();
        assert!(cp.inserted.is_empty());
    }

    #[test]
    fn missing_counterpart_is_an_error() {
        let small = netlist_to_graph(&single_inv()).unwrap();
        let big = netlist_to_graph(&fanout_tree(2)).unwrap();
        assert!(matches!(map_counterparts(&small, &big), Err(Error::Consistency(_))));
    }
}
