//! Erdos-Kahane engines: the real-line model over the expansion factor
//! and the complex-diagonal model over one rotation eigenvalue.

pub mod complex;
pub mod real;
pub mod solver;
