//! Strict deformation quantization for compactly supported R^d-actions on vector bundles.

pub mod action;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod norms;
pub mod poisson;
pub mod spacetime;
pub mod starproduct;
pub mod verify;

pub use action::{AdmissibleAction, Compactum, FlowAction, TranslationAction};
pub use error::{Error, Result};
pub use geometry::{eval_chi, eval_psi, psi_inverse, CutoffProfile, RadialDiffeo, RadialProfile};
pub use poisson::{as_admissible_action, build_shrunken_fields, build_theta, AdmissibleStructure, BundleSpec, DualBasisSpec, FiberFields, FiberMetric};
pub use starproduct::engine::{EngineConfig, ProductEngine, WarpedElement};
pub use starproduct::function::{BoxGrid, FieldFn, GriddedFunction, Provenance};
pub use starproduct::spectral::{moyal_twisted_convolution, ModeArray};
