//! Affine L^p energy on discretized functions over the unit square.
//!
//! The crate is organised bottom-up:
//!
//! - [`basis`]: Gauss–Legendre quadrature on (0,1)², the nested tensor-sine
//!   Galerkin basis `W_m`, coefficient vectors and sampled gradient fields.
//! - [`sphere`]: periodic trapezoid quadrature on the unit circle.
//! - [`energy`]: the affine energy `E_p(u)`, directional norms, the `H_u`
//!   gauge and the coefficient-space gradient of `E_p(u)^p / p`.
//! - [`geometry`]: the floor gauge `⌊ζ⌋_m`, affine-ball membership, the
//!   homeomorphism maps `T`/`G` onto the unit norm ball, and witness searches
//!   showing the gauge is neither subadditive nor has convex sublevel sets.
//! - [`solver`]: zero finding for vector fields that point outward on a gauge
//!   sphere, with a sampled boundary-condition check.
//! - [`galerkin`]: the functional `Φ_m`, its gradient system, Poincaré-type
//!   constant estimates, the existence radius and a certified critical-point
//!   solve.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod energy;
pub mod galerkin;
pub mod geometry;
pub mod solver;
pub mod sphere;

mod error;
mod numeric;

pub use basis::{build_basis, expand, grad_lp_norm, lq_norm, w1pm_norm};
pub use basis::{BasisSpec, CoefVec, DomainSpec, GradField, Quadrature};
pub use energy::{affine_energy, energy_grad, gamma_np, signed_pow, unit_ball_volume};
pub use energy::{EnergyBreakdown, EnergyParams};
pub use error::{Error, Result};
pub use geometry::{GaugeContext, Witness, WitnessKind};
pub use sphere::{build_circle_rule, integrate_sphere, SphereRule};
pub use galerkin::{solve_critical_point, GalerkinProblem, ProblemSpec, SolveResult, SourceTerm};
pub use solver::{find_zero, VectorField};
