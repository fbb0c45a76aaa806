//! Shared discretization types, quadrature, finite-difference stencils and
//! Hermitian-matrix utilities used by every other module.
//!
//! Two sampling conventions coexist and are converted explicitly:
//!
//! * the *node* grid `t_j = j h`, `j = 0..=N`, used by the wave solvers on
//!   `[0, X_max] x [0, T]` and by the defect-frame computations;
//! * the *midpoint* grid `t_j = (j - 1/2) h`, `j = 1..=N`, which carries the
//!   discretized `L_2([0,T]; C^n)` on which every operator acts. Midpoints
//!   are closed under the reflection `t -> T - t`, so reflections, cutoffs
//!   and nest projections are exact permutations and 0/1 matrices there.

pub mod control;
pub mod grid;
pub mod io;
pub mod operator;
pub mod potential;
pub mod quadrature;
pub mod stencil;
pub mod wavefield;

pub use control::BoundaryControl;
pub use grid::Grid;
pub use operator::{DiscreteOperator, NestPartition, Role};
pub use potential::HermitianPotential;
pub use quadrature::{inner_product, l2_norm, simpson_quadrature, simpson_weights};
pub use stencil::second_difference;
pub use wavefield::WaveField;
