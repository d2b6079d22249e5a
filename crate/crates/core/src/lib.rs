//! Critical points of the Allen-Cahn energy under Neumann boundary conditions,
//! together with the geometric diagnostics used to study their sharp-interface
//! limit: energy density ratios, monotonicity, Pohozaev identities and the
//! associated discrete varifold.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod geometry;
pub mod io;
pub mod linalg;
pub(crate) mod par;
pub mod potential;
pub mod solver;
pub mod varifold;

pub use geometry::{build_domain, BallRestriction, Domain, GeometryError, Point, Shape, SignedDistance};
pub use potential::{DoubleWell, EnergyConstant, PotentialError, PotentialKind};
pub use solver::{Field, FlowOptions, InitRecipe, NewtonOptions, Solution, SolverError, SweepOptions};
pub use varifold::{build_varifold, DiscreteVarifold, InterfaceCurve, VarifoldError};
