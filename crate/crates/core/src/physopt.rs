//! Reference physical-synthesis optimizer: greedy timing-driven gate sizing
//! and buffer insertion.
//!
//! Each pass re-runs full STA, collects every candidate move on the current
//! worst path, trial-applies each one and keeps the move with the largest
//! worst-delay reduction. Ties prefer upsizing over buffering, then the
//! smallest node id. The loop stops when the target is met, no move improves
//! the worst delay, or the pass budget runs out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CircuitGraph, NodeId};
use crate::library::{CellFunction, CellKind, CellLibrary, Drive};
use crate::netlist::CellId;
use crate::sta::analyze;

pub const DEFAULT_TARGET_ALPHA: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub target_delay: f64,
    /// Nets with more sinks than this are buffering candidates.
    pub max_fanout: usize,
    pub max_passes: usize,
    pub buffer_kind: CellKind,
}

impl SynthConfig {
    pub fn new(target_delay: f64) -> Self {
        SynthConfig {
            target_delay,
            max_fanout: 2,
            max_passes: 1000,
            buffer_kind: CellKind::new(CellFunction::Buf, Drive::X1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_delay > 0.0) {
            return Err(Error::Domain(format!("target delay must be positive, got {}", self.target_delay)));
        }
        if self.max_fanout < 2 {
            return Err(Error::Domain(format!("max_fanout must be at least 2, got {}", self.max_fanout)));
        }
        if self.buffer_kind.function.input_count() != 1 {
            return Err(Error::Domain(format!("{} cannot be used as a buffer", self.buffer_kind)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    Upsize { cell: CellId, to: CellKind },
    /// Isolate `keep` on the net of `driver`; other sinks go behind a buffer.
    Buffer { driver: NodeId, keep: NodeId },
}

impl Move {
    fn rank(&self) -> u8 {
        match self {
            Move::Upsize { .. } => 0,
            Move::Buffer { .. } => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutcome {
    pub graph: CircuitGraph,
    pub target: f64,
    pub met: bool,
    pub passes: usize,
    pub initial_delay: f64,
    pub final_delay: f64,
    pub moves: Vec<Move>,
}

/// `alpha * worst_delay(g)`.
pub fn aggressive_target(g: &CircuitGraph, lib: &CellLibrary, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("target alpha must be positive, got {alpha}")));
    }
    Ok(alpha * analyze(g, lib)?.worst_delay)
}

fn apply(g: &CircuitGraph, mv: Move, cfg: &SynthConfig) -> Result<CircuitGraph> {
    match mv {
        Move::Upsize { cell, to } => g.resize_cell(cell, to),
        Move::Buffer { driver, keep } => Ok(g.insert_buffer(driver, keep, cfg.buffer_kind)?.0),
    }
}

pub fn synthesize(g: &CircuitGraph, lib: &CellLibrary, cfg: &SynthConfig) -> Result<SynthOutcome> {
    cfg.validate()?;
    let mut graph = g.clone().without_annotations();
    let mut report = analyze(&graph, lib)?;
    let initial_delay = report.worst_delay;
    let mut moves = Vec::new();
    let mut passes = 0;
    while passes < cfg.max_passes && report.worst_delay > cfg.target_delay {
        passes += 1;
        let path = &report.worst_path;
        let mut candidates = Vec::new();
        for (i, &v) in path.iter().enumerate() {
            let node = graph.node(v);
            if !node.is_cell_output() {
                continue;
            }
            let cell = node.cell().unwrap();
            if let Some(to) = node.kind.unwrap().upsized() {
                candidates.push((v, Move::Upsize { cell, to }));
            }
            if graph.fanout(v).len() > cfg.max_fanout {
                if let Some(&keep) = path.get(i + 1) {
                    candidates.push((v, Move::Buffer { driver: v, keep }));
                }
            }
        }
        let mut best: Option<(f64, u8, NodeId, Move, CircuitGraph, crate::sta::TimingReport)> = None;
        for (v, mv) in candidates {
            let trial = apply(&graph, mv, cfg)?;
            let r = analyze(&trial, lib)?;
            let gain = report.worst_delay - r.worst_delay;
            let better = match &best {
                None => true,
                Some((bg, brank, bv, ..)) => {
                    gain > *bg || (gain == *bg && (mv.rank(), v) < (*brank, *bv))
                }
            };
            if better {
                best = Some((gain, mv.rank(), v, mv, trial, r));
            }
        }
        let threshold = 1e-9 * (1.0 + report.worst_delay.abs());
        match best {
            Some((gain, _, _, mv, trial, r)) if gain > threshold => {
                moves.push(mv);
                graph = trial;
                report = r;
            }
            _ => break,
        }
    }
    let met = report.worst_delay <= cfg.target_delay;
    Ok(SynthOutcome {
        graph,
        target: cfg.target_delay,
        met,
        passes,
        initial_delay,
        final_delay: report.worst_delay,
        moves,
    })
}
