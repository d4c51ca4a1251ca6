//! Numerical toolkit for almost-commuting matrices.
//!
//! Given a Hermitian `h` and a unitary `u` with `‖[u, h]‖ < δ`, the crate
//! constructs an explicit path from `u` to the identity whose commutator
//! with `h` stays below `(6 + 96‖h‖^{3/2})·δ^{1/4}`, together with a
//! numeric certificate of every envelope the construction promises. On top
//! of that it diagonalizes grid-sampled Hermitian operator fields over an
//! interval or circle into ordered block eigenvalue curves with quantified
//! jumps, and generates seeded test instances of both kinds.

pub mod error;
pub mod field;
pub mod homotopy;
pub mod instances;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod partition;

pub use error::{Error, Result};
pub use field::{
    approx_finite_spectrum, glue_breakpoint, group_eigenvalues, match_breakpoint, refine_field,
    stitch_field, BaseKind, BaseSpace, EigenvalueField, OperatorField, RefinementOutcome,
    RefinementSchedule, StitchResult,
};
pub use homotopy::{
    build_homotopy, lemma_nn_bound, three_diagonal_truncate, triangularize_pair,
    verify_certificate, HomotopyCertificate, HomotopyOutcome, OperatorPath, PathSample,
    VerificationReport,
};
pub use instances::{
    gen_almost_commuting_pair, gen_field, FieldShape, GeneratorSpec, PairInstance, SpectrumSpec,
};
pub use linalg::{
    commutator_norm, dist_to_unitary, hermitian_eigen, operator_norm, polar_unitary,
    unitary_geodesic,
};
pub use matrix::{ComplexMatrix, HermitianOperator, UnitaryOperator};
pub use partition::{build_partition, SpectralPartition};
