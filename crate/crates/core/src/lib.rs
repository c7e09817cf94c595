//! Numerical toolkit for metric connections with skew-symmetric torsion.
//!
//! A metric connection that shares its geodesics with the Levi-Civita
//! connection differs from it by a difference tensor `D` that lowers to an
//! algebraic 3-form. This crate implements the desk-scale algebra and
//! geometry around that fact:
//!
//! - [`algebra`]: skew endomorphisms, sparse alternating 3-forms on `R^n`,
//!   contractions, matrix exponentials, and rank decisions;
//! - [`closure`]: Lie subalgebras generated from 3-form contractions,
//!   optionally pulled back by parallel transports;
//! - [`structure`]: classification predicates for skew-torsion holonomy
//!   systems (irreducibility, transitivity, symmetry, simplicity, ...);
//! - [`group`]: compact matrix Lie groups with bi-invariant metrics, the
//!   one-parameter family of canonical connections, parallel transport and
//!   curvature of the rescaled connections `nabla - f D`;
//! - [`holonomy`]: Ambrose-Singer style holonomy generation, flatness
//!   scans over constant rescalings, and independence witnesses;
//! - [`catalog`]: built-in example forms and groups with tagged expected
//!   values.
//!
//! All operations are pure functions of their inputs; randomness always
//! enters through an explicit seed.

pub mod algebra;
pub mod catalog;
pub mod closure;
pub mod error;
pub mod group;
pub mod holonomy;
pub mod sampling;
pub mod structure;

pub use algebra::{
    bracket, contract, expm, rank_of_span, three_form_from_bracket, SkewEndo, ThreeForm,
    Tolerances,
};
pub use catalog::{catalog_keys, get as catalog_get, CatalogEntry, CatalogObject};
pub use closure::{
    derived_algebra, lie_closure, pulled_back_closure, sampled_h_p, span_contractions,
    LieSubalgebra,
};
pub use error::{Error, Result};
pub use group::{
    curvature_f, difference_tensor, geodesic, levi_civita, loop_curvature_estimate, make_group,
    nabla_lambda, transport_closed_form_lambda, transport_closed_form_lc, transport_ode,
    ConnectionSpec, Curve, GroupModel, ScalarField, TransportResult,
};
pub use holonomy::{
    ambrose_singer_closure, flat_scan, h_p_estimate, holonomy_report, independence_witness,
    HolonomyReport, IndependenceWitness,
};
pub use structure::{
    invariant_threeform_dim, is_irreducible, is_symmetric_system, is_transitive_sphere,
    jacobi_defect, lie_rank_and_simplicity, normalizer_in_so, verify_stht, HolonomySystem,
    StructureReport,
};
