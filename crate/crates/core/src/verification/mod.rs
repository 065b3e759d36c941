//! Independent oracles for everything the pricing and hedging modules ship.

pub mod acceptance;
pub mod c6_source;
pub mod grid;
pub mod operators;
pub mod oracle;
pub mod pde;

pub use grid::{log_grid, uniform_grid, GridFunction1D, GridFunction2D, ResidualReport};
pub use operators::{apply_1d, apply_2d, residual_1d, residual_2d, Operator};
pub use pde::{solve_bs_with_source, start_slice, Boundary, PdeGrid};
pub use c6_source::{numeric_source_c6, C6SourceCheck, U9_SOLVABILITY_TOL};
