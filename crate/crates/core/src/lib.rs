//! Chart-local symbolic and numeric engine for normal-form constructions in
//! differential geometry: deformation-to-the-normal-cone charts, Euler-like
//! vector fields and the tubular embeddings they generate, and splitting
//! procedures for foliations, anchored bundles, Courant algebroids and
//! Poisson structures around a transversal.
//!
//! Symbolic data is exact: scalar fields are (Laurent) polynomials with
//! rational coefficients, and every identity that the theory asserts exactly
//! is checked exactly. Floating point appears only in deliberate numeric
//! cross-checks (ODE flows, sampled residuals), never as a substitute for an
//! exact computation.

pub mod anchored;
pub mod bialgebroid;
pub mod chart;
pub mod courant;
pub mod defspace;
pub mod error;
pub mod euler;
pub mod fit;
pub mod flow;
pub mod foliation;
pub mod jet;
pub mod linalg;
pub mod numeric;
pub mod poly;
pub mod scalar;
pub mod tensor;

pub use chart::Chart;
pub use error::Error;
pub use scalar::{rat, rat_int, Rat, Scalar};

/// Exact scalar fields used by the geometric pipelines.
pub type ScalarField = poly::Poly<Rat>;
/// Float-coefficient scalar fields for numeric cross-checks.
pub type NumField = poly::Poly<f64>;
pub type VectorField = tensor::VectorField<Rat>;
pub type DiffForm = tensor::DiffForm<Rat>;
pub type MultiVector = tensor::MultiVector<Rat>;
pub type PolyMap = tensor::PolyMap<Rat>;
