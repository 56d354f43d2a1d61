//! Numerical laboratory for gradient blow-up (GBU) in the diffusive
//! Hamilton-Jacobi equation u_t - Δu = |∇u|^p + h(x) with homogeneous
//! Dirichlet boundary conditions.
//!
//! The crate simulates solutions on boundary-graded meshes, measures
//! blow-up rates and sharp gradient-profile constants, and certifies the
//! closed-form inequality algebra behind the rate arguments.

pub mod certifier;
pub mod estimates;
pub mod geometry;
pub mod minimal;
pub mod rates;
pub mod solver;
