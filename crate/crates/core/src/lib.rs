pub mod cli;
pub mod expr;
pub mod grid;
pub mod kernel;
pub mod oscillation;
pub mod problem;
pub mod quad;
pub mod solver;
