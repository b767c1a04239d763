//! Optimal experimental designs for ordinary least squares estimation when the
//! observations are correlated.
//!
//! For the linear model `y(x) = θ₁f₁(x) + … + θ_m f_m(x) + ε(x)` with
//! `E ε(u)ε(v) = K(u,v)`, the asymptotic covariance of the ordinary LSE under a
//! design measure ξ is
//!
//! ```text
//!   D(ξ) = M⁻¹(ξ) B(ξ,ξ) M⁻¹(ξ),
//!   M(ξ) = ∫ f f ᵀ dξ,      B(ξ,ν) = ∬ K(u,v) f(u) f ᵀ(v) ξ(du) ν(dv).
//! ```
//!
//! The crate provides:
//!
//! * covariance kernels, including families with a singularity on the diagonal
//!   and their smoothed approximants ([`kernels`]),
//! * regression bases ([`basis`]) and design measures, discrete and
//!   density-based ([`designs`]),
//! * the moment matrices above with configurable handling of singular
//!   diagonals ([`moments`]),
//! * the sensitivity calculus φ, b, d, ψ, g, r and the optimality checks built
//!   on it, including the universal-optimality certificate `g ≡ 0`
//!   ([`optimality`]),
//! * verification of kernel/eigenfunction pairs of the associated integral
//!   operator ([`spectral`]),
//! * a multiplicative weight-update solver on a fixed grid and design
//!   efficiencies ([`solver`]),
//! * Monte Carlo and brute-force validation oracles ([`oracle`]).

pub mod basis;
pub mod designs;
pub mod error;
pub mod kernels;
pub mod moments;
pub mod optimality;
pub mod oracle;
pub mod quad;
pub mod solver;
pub mod special;
pub mod spectral;
pub mod tables;

pub use basis::RegressionBasis;
pub use designs::{Design, DensityDesign};
pub use error::{Error, Result};
pub use kernels::{CovarianceKernel, SingularPolicy};
pub use moments::MomentSet;
pub use optimality::{Criterion, OptimalityReport, UniversalVerdict};
pub use solver::{BetaRule, SolveOutcome, SolverConfig};
