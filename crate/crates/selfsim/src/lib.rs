//! Numerical toolkit for homogeneous self-similar measures in `R^d`.
//!
//! A homogeneous self-similar iterated function system (IFS) is a family
//! `f_j(x) = (1/theta) * O * x + a_j` sharing one contracting similarity:
//! `theta > 1` is the expansion factor, `O` is orthogonal and the `a_j`
//! are "vector digits" with weights `p_j`. The stationary measure of such
//! a system factors into an infinite convolution product, which makes its
//! Fourier transform, decay exponents, and the Erdos-Kahane analysis of
//! decay-exceptional parameters all computable.
//!
//! Modules:
//! - [`ifs`]: IFS construction, validation, normal forms, atoms, sampling.
//! - [`fourier`]: truncated transform evaluation, the product upper bound,
//!   empirical decay-exponent fits.
//! - [`ek`]: Erdos-Kahane engines (real-line and complex-diagonal models):
//!   nearest-integer traces, predictors, bad-set witnesses, disk covers.
//! - [`algebraic`]: Pisot / Salem / Garsia classification of integer
//!   polynomials and contraction ratios.
//! - [`dims`]: exponential separation, similarity dimensions, convolution
//!   splitting, voxel density experiments.
//! - [`io`]: the on-disk IFS definition format.

pub mod algebraic;
pub mod dims;
pub mod ek;
pub mod fourier;
pub mod ifs;
pub mod io;
pub mod linalg;
pub mod sample;

pub use ifs::{AtomCloud, HomogeneousIfs, RotationSpec, ValidationReport};

