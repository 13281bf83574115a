//! Minimal dense-array engine with reverse-mode differentiation.
//!
//! 64-bit floats throughout, row-major storage, and a dynamic tape recorded
//! per forward pass. No broadcasting beyond the explicit row-bias add.

mod array;
mod tape;

pub use array::Array;
pub use tape::{Gradients, NodeId, Tape};
