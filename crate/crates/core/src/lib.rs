pub mod absorb;
pub mod embed;
pub mod error;
pub mod expander;
pub mod graph;
pub mod harness;
pub mod io;
pub mod rng;
pub mod spanning;
pub mod tree;

pub use error::{Error, Failure, Result};
pub use graph::{ColouredGraph, Colour, Edge, Vertex};
pub use rng::RandomSource;
pub use tree::Tree;
