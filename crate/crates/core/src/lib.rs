//! Enumeration of all perfect matchings of a bipartite graph in constant
//! amortized time per matching.
//!
//! The pipeline trims the graph, splits it recursively along edge sets whose
//! removal partitions the matchings and raises a potential function, and
//! finally lists the matchings encoded at each leaf of the recursion from a
//! union-product circuit.

pub mod circuit;
pub mod enumerator;
pub mod error;
pub mod graph;
pub mod io;
pub mod oracle;
pub mod splitter;
pub mod trimmer;

pub use error::{Error, Result};
