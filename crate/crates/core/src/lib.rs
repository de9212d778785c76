//! Post-synthesis delay and area prediction for gate-level netlists.
//!
//! The crate covers the whole flow: a synthetic cell library, pin-level
//! circuit graphs, static timing analysis, a reference gate-sizing and
//! buffer-insertion optimizer that produces ground truth, per-node delta
//! labels, a GATv2 node regressor trained with ADAM, design-level metric
//! reconstruction and compositional delay-target sweeping.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adder;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod io;
pub mod library;
pub mod netlist;
pub mod nn;
pub mod physopt;
pub mod pipeline;
pub mod reconstruct;
pub mod sta;
pub mod testkit;

pub use error::{Error, Result};
