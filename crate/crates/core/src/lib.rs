//! Conformal Laplacian spectra on round spheres.
//!
//! For a conformal metric `g~ = mu^{4/(n-2)} g` on the round `S^n` this crate
//!
//! * computes the spectrum of `-Delta_{g~} + c_n R_{g~}` with a block
//!   Galerkin solver ([`spectrum`]),
//! * certifies upper bounds on `lambda_k(g~)` from disjointly supported
//!   conformal test functions on annuli ([`cover`], [`testfn`],
//!   [`functionals::certify_upper_bound`]),
//! * evaluates the normalised functional `lambda_k(g~) int mu^{4/(n-2)} dnu`
//!   over families of conformal factors ([`functionals`], [`families`]).
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod cli;
pub mod conformal;
pub mod cover;
pub mod error;
pub mod families;
pub mod functionals;
pub mod output;
pub mod quadrature;
pub mod spectrum;
pub mod sphere;
pub mod testfn;

pub use conformal::{ConformalFactor, CurvatureConstants, Profile, ZonalFunction};
pub use error::{Error, Result};
pub use sphere::SpherePoint;
