//! Finite-element simulation of the convective bulk-surface Cahn-Hilliard system with dynamic
//! boundary conditions, coupling parameters `K, L ∈ [0, ∞]` and Yosida-regularized logarithmic potentials.
//!
//! The core is generic over the scalar type through [`numeric::Real`]; the `*64` aliases fix `f64`.

// `!(a < b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod diagnostics;
pub mod elliptic;
pub mod initial;
pub mod linalg;
pub mod mesh;
pub mod numeric;
pub mod output;
pub mod potentials;
pub mod stepper;
pub mod velocity;

pub type Mesh64 = mesh::Mesh<f64>;
pub type Operators64 = assembly::FemOperators<f64>;
pub type Pair64 = assembly::BulkSurfacePair<f64>;
pub type CouplingParams64 = assembly::CouplingParams<f64>;
pub type PotentialSpec64 = potentials::PotentialSpec<f64>;
pub type StepperConfig64 = stepper::StepperConfig<f64>;
pub type State64 = stepper::State<f64>;
pub type Trajectory64 = stepper::Trajectory<f64>;
pub type VelocityField64 = velocity::VelocityField<f64>;
