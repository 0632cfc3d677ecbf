//! Decision procedures on Grushko trees of torsion-free free products
//! `G = A_1 * ... * A_k * F_N`: labeled Whitehead graphs, Whitehead
//! reduction, simplicity and quadraticity verdicts, cut-pair search on
//! finite models of the decomposition space, and machine-checkable
//! certificates for distance bounds in the Z-factor graph.
//!
//! Start with [`words::Presentation`] and [`tree::GrushkoTree::standard_rose`],
//! then drive the decision procedures in [`classify`]. The `examples/`
//! directory of the crate contains one runnable example per capability; the
//! thin `gw` binary exposes the same operations on files.

pub mod error;
pub mod words;
pub mod tree;
pub mod whitehead;
pub mod classify;
pub mod io;
pub mod harness;

pub use error::{Error, Result};
