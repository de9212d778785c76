//! Small deterministic fixtures shared by unit, property and acceptance tests.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::library::{default_library, CellFunction, CellKind, CellLibrary, CellSpec, Drive};
use crate::netlist::{Cell, CellId, Net, NetId, Netlist, PinRef};

/// Random combinational netlist whose pin graph has at most `max_nodes`
/// nodes. Every cell output either feeds a later cell or a primary output,
/// so every node lies on a port-to-port path.
pub fn random_netlist(seed: u64, max_nodes: usize) -> Netlist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_da65);
    let n_in = rng.random_range(1..=3u32);
    let budget = max_nodes.max(6);
    let mut drivers: Vec<PinRef> = (0..n_in).map(PinRef::InputPort).collect();
    let mut sinks: BTreeMap<PinRef, Vec<PinRef>> = BTreeMap::new();
    let mut cells = Vec::new();
    // pins used so far: input ports + cell pins; each unused driver later
    // needs one output port
    let mut used = n_in as usize;
    loop {
        let function = CellFunction::ALL[rng.random_range(0..CellFunction::ALL.len())];
        let pins = function.input_count() + 1;
        let unused_after = drivers.iter().filter(|d| !sinks.contains_key(d)).count() + 1;
        if used + pins + unused_after > budget {
            break;
        }
        let id = CellId(cells.len() as u32);
        let drive = Drive::ALL[rng.random_range(0..3)];
        cells.push(Cell { id, kind: CellKind::new(function, drive) });
        for pin in 0..function.input_count() as u8 {
            // bias towards recent drivers to get deeper graphs
            let lo = drivers.len().saturating_sub(4);
            let pick = if rng.random_bool(0.7) {
                rng.random_range(lo..drivers.len())
            } else {
                rng.random_range(0..drivers.len())
            };
            sinks.entry(drivers[pick]).or_default().push(PinRef::CellInput { cell: id, pin });
        }
        drivers.push(PinRef::CellOutput(id));
        used += pins;
    }
    let mut primary_outputs = Vec::new();
    let mut next_po = 0u32;
    let mut nets = Vec::new();
    let mut primary_inputs = vec![NetId(0); n_in as usize];
    for (i, d) in drivers.iter().enumerate() {
        let net = NetId(i as u32);
        let mut s = sinks.remove(d).unwrap_or_default();
        let is_last = i + 1 == drivers.len();
        if s.is_empty() || (is_last && primary_outputs.is_empty()) {
            s.push(PinRef::OutputPort(next_po));
            next_po += 1;
            primary_outputs.push(net);
        }
        if let PinRef::InputPort(p) = d {
            primary_inputs[*p as usize] = net;
        }
        nets.push(Net { id: net, driver: *d, sinks: s });
    }
    Netlist { cells, nets, primary_inputs, primary_outputs }
}

/// Library where every cell has the same delay coefficients and no slew or
/// load terms beyond those given. Not a valid shipped library (drive
/// strengths are indistinguishable); meant for hand-computable fixtures.
pub fn flat_library(d_intrinsic: f64, r_drive: f64, k_slew: f64) -> CellLibrary {
    let mut cells = BTreeMap::new();
    for function in CellFunction::ALL {
        for (i, drive) in Drive::ALL.into_iter().enumerate() {
            let kind = CellKind::new(function, drive);
            cells.insert(
                kind,
                CellSpec {
                    kind,
                    area: (1 << i) as f64,
                    input_cap: 1.0,
                    d_intrinsic,
                    r_drive,
                    k_slew,
                    s_intrinsic: 0.0,
                    r_slew: 0.0,
                },
            );
        }
    }
    CellLibrary {
        version: "flat-fixture".into(),
        cells,
        wire_cap_per_fanout: 0.0,
        default_input_slew: 0.0,
        default_output_load: 0.0,
    }
}

/// Canonical library with input capacitance equal across drives and no
/// slew coupling, under which upsizing can never slow any path.
pub fn equal_cap_library() -> CellLibrary {
    let mut lib = default_library(0);
    for function in CellFunction::ALL {
        let cap = lib.cells[&CellKind::new(function, Drive::X1)].input_cap;
        for drive in Drive::ALL {
            let spec = lib.cells.get_mut(&CellKind::new(function, drive)).unwrap();
            spec.input_cap = cap;
            spec.k_slew = 0.0;
        }
    }
    lib.version = "equal-cap-fixture".into();
    lib
}
