//! JSON and CSV serialization for matrices, paths, certificates, fields
//! and stitched curves.
//!
//! Matrices travel as `{"rows", "cols", "entries": [[re, im], …]}` in
//! row-major order; the other file shapes are thin wrappers around that.
//! Readers reject malformed JSON with the offending path and position, and
//! non-finite numbers never pass the matrix constructor.

use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    BaseSpace, DensityViolation, EigenvalueField, OperatorField, RefinementOutcome, StitchResult,
};
use crate::homotopy::{
    HomotopyCertificate, OperatorPath, PathSample, VerificationReport,
};
use crate::linalg::{commutator_norm, dist_to_unitary};
use crate::matrix::{ComplexMatrix, HermitianOperator, UnitaryOperator, UNITARY_TOL};

/// Row-major complex matrix as it appears on disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixDto {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixDto {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            entries: m.entries().iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let entries: Vec<Complex64> = self
            .entries
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        ComplexMatrix::new(self.rows, self.cols, entries)
    }

    pub fn to_hermitian(&self) -> Result<HermitianOperator> {
        HermitianOperator::new(self.to_matrix()?)
    }

    pub fn to_unitary(&self) -> Result<UnitaryOperator> {
        UnitaryOperator::new(self.to_matrix()?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathSampleDto {
    pub t: f64,
    pub matrix: MatrixDto,
}

/// On-disk shape of a sampled homotopy path.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathFile {
    pub delta: f64,
    pub stage_marks: Vec<f64>,
    pub samples: Vec<PathSampleDto>,
}

impl PathFile {
    pub fn from_path(path: &OperatorPath, delta: f64) -> Self {
        Self {
            delta,
            stage_marks: path.stage_marks().to_vec(),
            samples: path
                .samples()
                .iter()
                .map(|s| PathSampleDto {
                    t: s.t,
                    matrix: MatrixDto::from_matrix(&s.matrix),
                })
                .collect(),
        }
    }

    /// Rebuilds the path; the retraction flag is re-measured from the
    /// samples rather than trusted from the file.
    pub fn to_path(&self) -> Result<(OperatorPath, f64)> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(PathSample {
                    t: s.t,
                    matrix: s.matrix.to_matrix()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let retracted = samples
            .iter()
            .all(|s| s.matrix.unitary_defect() <= UNITARY_TOL);
        let path = OperatorPath::new(samples, self.stage_marks.clone(), retracted)?;
        Ok((path, self.delta))
    }
}

/// Certificate file: the measured envelopes plus, once verification ran,
/// the re-measured report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateFile {
    pub certificate: HomotopyCertificate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationReport>,
}

/// On-disk shape of an operator field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldFile {
    pub base: BaseSpace,
    pub p: usize,
    pub n: usize,
    pub grid: Vec<f64>,
    pub values: Vec<MatrixDto>,
}

impl FieldFile {
    pub fn from_field(field: &OperatorField) -> Self {
        Self {
            base: *field.base(),
            p: field.fiber_dim(),
            n: field.module_rank(),
            grid: field.grid().to_vec(),
            values: field
                .values()
                .iter()
                .map(|v| MatrixDto::from_matrix(v.matrix()))
                .collect(),
        }
    }

    pub fn to_field(&self) -> Result<OperatorField> {
        let values = self
            .values
            .iter()
            .map(|m| m.to_hermitian())
            .collect::<Result<Vec<_>>>()?;
        OperatorField::new(self.base, self.grid.clone(), self.p, self.n, values)
    }
}

/// Stitched curves: one matrix per curve per node.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvesFile {
    pub p: usize,
    pub n: usize,
    pub grid: Vec<f64>,
    pub curves: Vec<Vec<MatrixDto>>,
    pub breakpoints: Vec<usize>,
    pub jump_report: Vec<f64>,
    pub ordering_ok: bool,
}

impl CurvesFile {
    pub fn from_curves(field: &OperatorField, curves: &EigenvalueField) -> Self {
        Self {
            p: field.fiber_dim(),
            n: field.module_rank(),
            grid: field.grid().to_vec(),
            curves: curves
                .curves()
                .iter()
                .map(|c| c.iter().map(|b| MatrixDto::from_matrix(b.matrix())).collect())
                .collect(),
            breakpoints: curves.breakpoints().to_vec(),
            jump_report: curves.jump_report().to_vec(),
            ordering_ok: curves.ordering_ok(),
        }
    }
}

/// Per-breakpoint alignment summary in the jump report file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BreakpointSummary {
    pub node: usize,
    pub max_gap: f64,
    pub commutator_in: f64,
    pub glue_sup_commutator: f64,
    pub glue_commutator_threshold: f64,
    pub glue_bounds_guaranteed: bool,
}

/// Jump report file for one stitching pass.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JumpsFile {
    pub epsilon: f64,
    pub max_snap_error: f64,
    pub jump_report: Vec<f64>,
    pub breakpoints: Vec<usize>,
    pub ordering_ok: bool,
    pub density_violations: Vec<DensityViolation>,
    pub breakpoint_summaries: Vec<BreakpointSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seam: Option<BreakpointSummary>,
}

impl JumpsFile {
    pub fn from_stitch(result: &StitchResult) -> Self {
        let summary = |r: &crate::field::BreakpointRecord| BreakpointSummary {
            node: r.node,
            max_gap: r.max_gap,
            commutator_in: r.commutator_in,
            glue_sup_commutator: r.glue.sup_commutator,
            glue_commutator_threshold: r.glue.thresholds.commutator,
            glue_bounds_guaranteed: r.glue.bounds_guaranteed,
        };
        Self {
            epsilon: result.epsilon,
            max_snap_error: result.max_snap_error,
            jump_report: result.eigenvalues.jump_report().to_vec(),
            breakpoints: result.eigenvalues.breakpoints().to_vec(),
            ordering_ok: result.eigenvalues.ordering_ok(),
            density_violations: result.density_violations.clone(),
            breakpoint_summaries: result.breakpoint_records.iter().map(summary).collect(),
            seam: result.seam.as_ref().map(summary),
        }
    }
}

/// Per-iteration Cauchy increments of a refinement run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CauchyFile {
    pub epsilons: Vec<f64>,
    pub cauchy_deltas: Vec<f64>,
    pub cauchy_bounds: Vec<f64>,
    pub within_bounds: bool,
}

impl CauchyFile {
    pub fn from_refinement(outcome: &RefinementOutcome, epsilons: Vec<f64>) -> Self {
        Self {
            epsilons,
            cauchy_deltas: outcome.cauchy_deltas.clone(),
            cauchy_bounds: outcome.cauchy_bounds.clone(),
            within_bounds: outcome.within_bounds,
        }
    }
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path_str(path),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Parse {
        path: path_str(path),
        source,
    })?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })
}

/// CSV of the measured envelopes along a path:
/// `t, commutator_norm, unitary_distance`.
pub fn envelope_csv(path: &OperatorPath, h: &HermitianOperator) -> Result<String> {
    let mut out = String::from("t,commutator_norm,unitary_distance\n");
    for s in path.samples() {
        let comm = commutator_norm(&s.matrix, h.matrix());
        let dist = dist_to_unitary(&s.matrix)?;
        out.push_str(&format!("{t},{comm},{dist}\n", t = s.t));
    }
    Ok(out)
}

/// CSV of the scalar staircase curves: per node, `x` followed by the `p`
/// diagonal entries of every block, top block first.
pub fn curves_csv(field: &OperatorField, curves: &EigenvalueField) -> String {
    let p = field.fiber_dim();
    let mut out = String::from("x");
    for i in 0..curves.module_rank() {
        for l in 0..p {
            out.push_str(&format!(",lambda_{}_{}", i + 1, l + 1));
        }
    }
    out.push('\n');
    for (j, &x) in field.grid().iter().enumerate() {
        out.push_str(&format!("{x}"));
        for curve in curves.curves() {
            let block = curve[j].matrix();
            for l in 0..p {
                out.push_str(&format!(",{}", block.get(l, l).re));
            }
        }
        out.push('\n');
    }
    out
}
