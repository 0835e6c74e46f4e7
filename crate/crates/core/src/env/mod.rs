//! Simulated benchmark worlds.

mod builtin;
mod grid;
mod hidden;

pub use builtin::{builtin, Builtin, Domain};
pub use grid::{compile, load_grid, Binding, Cell, Effect, GridSpec, MOVES};
pub use hidden::{Environment, HiddenEnvironment};
