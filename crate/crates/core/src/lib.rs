//! Discrete exterior calculus for vector-bundle-valued cochains on flat tori.
//!
//! The crate evaluates the quadratic functional `F(γ) = ⟨⟨d∇[k]γ, γ⟩⟩` on
//! graded bundle-valued cochains, its gradient `(d∇[k] + δ∇[k])γ`, the
//! per-degree critical residuals, and integrates the gradient flow. The
//! `structures` module supplies the constraint sets for symplectic forms,
//! Kähler and special complex structures.

pub mod bundle;
pub mod calculus;
pub mod error;
pub mod io;
pub mod mesh;
pub mod structures;
pub mod variational;

pub use bundle::{BundleData, ConnectionSpec, Mat, MorphismReport, Step};
pub use calculus::{Cochain, GradedCochain};
pub use error::{Error, Result};
pub use mesh::{Cell, TorusGrid};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
