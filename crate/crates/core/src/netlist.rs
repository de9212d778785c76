//! Flat gate-level netlists.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::CellKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NetId(pub u32);

/// A pin reference inside a netlist. Port indices refer to positions in
/// `Netlist::primary_inputs` / `Netlist::primary_outputs`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PinRef {
    InputPort(u32),
    OutputPort(u32),
    CellInput { cell: CellId, pin: u8 },
    CellOutput(CellId),
}

impl PinRef {
    pub fn is_driver(self) -> bool {
        matches!(self, PinRef::InputPort(_) | PinRef::CellOutput(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub kind: CellKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Net {
    pub id: NetId,
    pub driver: PinRef,
    pub sinks: Vec<PinRef>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Netlist {
    pub cells: Vec<Cell>,
    pub nets: Vec<Net>,
    pub primary_inputs: Vec<NetId>,
    pub primary_outputs: Vec<NetId>,
}

impl Netlist {
    /// Checks the single-driver / single-connection rules. Acyclicity is
    /// checked when the pin graph is built.
    pub fn validate(&self) -> Result<()> {
        let structural = |m: String| Err(Error::Structural(m));
        let mut cells = BTreeMap::new();
        for c in &self.cells {
            if cells.insert(c.id, c.kind).is_some() {
                return structural(format!("duplicate cell id {}", c.id.0));
            }
        }
        let mut net_ids = BTreeMap::new();
        let mut driven_by: BTreeMap<PinRef, NetId> = BTreeMap::new();
        let mut sunk_by: BTreeMap<PinRef, NetId> = BTreeMap::new();
        for (idx, net) in self.nets.iter().enumerate() {
            if net_ids.insert(net.id, idx).is_some() {
                return structural(format!("duplicate net id {}", net.id.0));
            }
            self.check_pin(&cells, net.driver)?;
            if !net.driver.is_driver() {
                return structural(format!("net {} is driven by sink pin {:?}", net.id.0, net.driver));
            }
            if let Some(other) = driven_by.insert(net.driver, net.id) {
                return structural(format!(
                    "pin {:?} drives both net {} and net {}",
                    net.driver, other.0, net.id.0
                ));
            }
            if net.sinks.is_empty() {
                return structural(format!("net {} has no sinks", net.id.0));
            }
            for &sink in &net.sinks {
                self.check_pin(&cells, sink)?;
                if sink.is_driver() {
                    return structural(format!("net {} lists driver pin {sink:?} as a sink", net.id.0));
                }
                if let Some(other) = sunk_by.insert(sink, net.id) {
                    return structural(format!(
                        "multiply-driven pin {sink:?}: nets {} and {}",
                        other.0, net.id.0
                    ));
                }
            }
        }
        for (&id, &kind) in &cells {
            for pin in 0..kind.function.input_count() as u8 {
                let p = PinRef::CellInput { cell: id, pin };
                if !sunk_by.contains_key(&p) {
                    return structural(format!("input {pin} of cell {} is undriven", id.0));
                }
            }
            if !driven_by.contains_key(&PinRef::CellOutput(id)) {
                return structural(format!("output of cell {} is unconnected", id.0));
            }
        }
        for (i, net) in self.primary_inputs.iter().enumerate() {
            if driven_by.get(&PinRef::InputPort(i as u32)) != Some(net) {
                return structural(format!("primary input {i} does not drive net {}", net.0));
            }
        }
        for (j, net) in self.primary_outputs.iter().enumerate() {
            if sunk_by.get(&PinRef::OutputPort(j as u32)) != Some(net) {
                return structural(format!("primary output {j} is not a sink of net {}", net.0));
            }
        }
        if driven_by.len() != self.cells.len() + self.primary_inputs.len() {
            return structural("a net is driven by an unknown port".into());
        }
        Ok(())
    }

    fn check_pin(&self, cells: &BTreeMap<CellId, CellKind>, pin: PinRef) -> Result<()> {
        let ok = match pin {
            PinRef::InputPort(i) => (i as usize) < self.primary_inputs.len(),
            PinRef::OutputPort(j) => (j as usize) < self.primary_outputs.len(),
            PinRef::CellOutput(c) => cells.contains_key(&c),
            PinRef::CellInput { cell, pin } => cells
                .get(&cell)
                .is_some_and(|k| (pin as usize) < k.function.input_count()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Structural(format!("dangling pin reference {pin:?}")))
        }
    }

    /// Logic simulation: returns primary output values for the given primary
    /// input values.
    pub fn simulate(&self, inputs: &[bool]) -> Result<Vec<bool>> {
        if inputs.len() != self.primary_inputs.len() {
            return Err(Error::Domain(format!(
                "expected {} input values, got {}",
                self.primary_inputs.len(),
                inputs.len()
            )));
        }
        let mut net_value: BTreeMap<NetId, bool> = BTreeMap::new();
        let mut input_net: BTreeMap<PinRef, NetId> = BTreeMap::new();
        let mut output_net: BTreeMap<CellId, NetId> = BTreeMap::new();
        for net in &self.nets {
            for &s in &net.sinks {
                input_net.insert(s, net.id);
            }
            if let PinRef::CellOutput(c) = net.driver {
                output_net.insert(c, net.id);
            }
        }
        for (i, net) in self.primary_inputs.iter().enumerate() {
            net_value.insert(*net, inputs[i]);
        }
        let mut pending: Vec<&Cell> = self.cells.iter().collect();
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|cell| {
                let n = cell.kind.function.input_count();
                let vals: Option<Vec<bool>> = (0..n as u8)
                    .map(|pin| {
                        input_net
                            .get(&PinRef::CellInput { cell: cell.id, pin })
                            .and_then(|net| net_value.get(net).copied())
                    })
                    .collect();
                match vals {
                    Some(v) => {
                        if let Some(out) = output_net.get(&cell.id) {
                            net_value.insert(*out, cell.kind.function.eval(&v));
                        }
                        false
                    }
                    None => true,
                }
            });
            if pending.len() == before {
                return Err(Error::Structural("combinational loop during simulation".into()));
            }
        }
        self.primary_outputs
            .iter()
            .map(|net| {
                net_value
                    .get(net)
                    .copied()
                    .ok_or_else(|| Error::Structural(format!("net {} never evaluated", net.0)))
            })
            .collect()
    }
}
