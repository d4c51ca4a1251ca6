//! The four-stage path connecting an almost-commuting unitary to the
//! identity: three-diagonal truncation, sequential block triangularization,
//! collapse to the block diagonal, and per-block polar snap followed by a
//! geodesic, then a polar retraction of every sample back into the unitary
//! group. Each run is instrumented with measured envelopes against the
//! explicit thresholds `4‖h‖^{1/2}δ^{1/4}`, `24‖h‖^{1/2}δ^{1/4}`,
//! `48‖h‖^{1/2}δ^{1/4}` and `(6 + 96‖h‖^{3/2})δ^{1/4}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    commutator_norm, dist_to_unitary, hermitian_function, operator_norm, polar_unitary_auto,
    svd_square, UnitaryGeodesic,
};
use crate::matrix::{ComplexMatrix, HermitianOperator, UnitaryOperator, UNITARY_TOL};
use crate::partition::{build_partition, SpectralPartition};

/// Fraction of the working δ used as the sub-diagonal zeroing tolerance in
/// the rotation stage; small enough to vanish inside every certified bound.
const STAGE_EPSILON_FACTOR: f64 = 1e-3;

/// Tolerance on the identity endpoint of a retracted path.
pub const ENDPOINT_TOL: f64 = 1e-10;

/// One sample `(t, M(t))` of a parametrized matrix family.
#[derive(Clone, Debug)]
pub struct PathSample {
    pub t: f64,
    pub matrix: ComplexMatrix,
}

/// A sampled path `t ↦ M(t)` over `[0, 1]`.
#[derive(Clone, Debug)]
pub struct OperatorPath {
    samples: Vec<PathSample>,
    stage_marks: Vec<f64>,
    is_retracted: bool,
}

impl OperatorPath {
    /// `samples` must carry square matrices of one dimension with `t`
    /// strictly increasing from 0 to 1, and `stage_marks` must be an
    /// increasing refinement of `[0, 1]`. `is_retracted` is the builder's
    /// claim that every sample is unitary; `verify_certificate` re-measures
    /// it instead of trusting the flag.
    pub fn new(
        samples: Vec<PathSample>,
        stage_marks: Vec<f64>,
        is_retracted: bool,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput {
                context: "a path needs at least one sample".into(),
            });
        }
        let dim = samples[0].matrix.rows();
        for s in &samples {
            if !s.t.is_finite() {
                return Err(Error::NonFinite {
                    context: "path parameter t".into(),
                });
            }
            s.matrix.check_finite()?;
            if !s.matrix.is_square() || s.matrix.rows() != dim {
                return Err(Error::DimensionMismatch {
                    context: format!(
                        "path samples must all be {dim}x{dim}, found {}x{}",
                        s.matrix.rows(),
                        s.matrix.cols()
                    ),
                });
            }
        }
        if samples[0].t != 0.0 || samples[samples.len() - 1].t != 1.0 {
            return Err(Error::InvalidInput {
                context: "path must start at t = 0 and end at t = 1".into(),
            });
        }
        if samples.windows(2).any(|w| w[0].t >= w[1].t) {
            return Err(Error::InvalidInput {
                context: "path parameters must increase strictly".into(),
            });
        }
        if stage_marks.len() < 2
            || stage_marks[0] != 0.0
            || stage_marks[stage_marks.len() - 1] != 1.0
            || stage_marks.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidInput {
                context: "stage marks must increase strictly from 0 to 1".into(),
            });
        }
        Ok(Self {
            samples,
            stage_marks,
            is_retracted,
        })
    }

    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    /// Boundaries of the construction stages on the `t` axis.
    pub fn stage_marks(&self) -> &[f64] {
        &self.stage_marks
    }

    pub fn is_retracted(&self) -> bool {
        self.is_retracted
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].matrix.rows()
    }

    /// Sample whose parameter is closest to `t` (ties go to the earlier one).
    pub fn nearest(&self, t: f64) -> &PathSample {
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("paths are nonempty")
    }

    /// 1-based stage interval containing `t`.
    pub fn stage_of(&self, t: f64) -> usize {
        stage_of_marks(&self.stage_marks, t)
    }
}

fn stage_of_marks(marks: &[f64], t: f64) -> usize {
    for (i, w) in marks.windows(2).enumerate() {
        if t < w[1] {
            return i + 1;
        }
    }
    marks.len() - 1
}

/// Bound levels promised for a given `(‖h‖, δ)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateThresholds {
    /// `4‖h‖^{1/2}δ^{1/4}`: cap on `‖u − d(u)‖`, hence on the distance to
    /// the unitary group through the truncation and rotation stages.
    pub truncation: f64,
    /// `24‖h‖^{1/2}δ^{1/4}`: cap on the distance to the unitary group
    /// along the whole pre-retraction path.
    pub stage3_distance: f64,
    /// `48‖h‖^{1/2}δ^{1/4}`: cap on the gap between the raw and the
    /// retracted path.
    pub retraction_gap: f64,
    /// `(6 + 96‖h‖^{3/2})δ^{1/4}`: commutator envelope of the retracted
    /// path.
    pub commutator: f64,
}

/// Measured envelopes of one constructed path, next to the thresholds the
/// construction promises for its `(‖h‖, δ)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomotopyCertificate {
    /// The δ the thresholds are computed from.
    pub delta: f64,
    /// True when the input δ was smaller than the measured `‖[u, h]‖` and
    /// the measured value was used instead.
    pub delta_substituted: bool,
    pub h_norm: f64,
    /// `6 + 96‖h‖^{3/2}`.
    pub c_constant: f64,
    /// `max_t ‖[u(t), h]‖` over the retracted samples.
    pub sup_commutator: f64,
    /// `max_t dist(u'(t), U)` over the pre-retraction samples.
    pub sup_unitary_distance: f64,
    /// `max_t ‖u(t) − u'(t)‖`.
    pub retraction_gap: f64,
    /// `‖u(0) − u_input‖`.
    pub endpoint_error_start: f64,
    /// `‖u(1) − 1‖`.
    pub endpoint_error_end: f64,
    /// Measured `‖u − d(u)‖`; zero when the single-segment branch ran.
    pub truncation_error: f64,
    pub samples_per_stage: usize,
    pub thresholds: CertificateThresholds,
    /// False when `24‖h‖^{1/2}δ^{1/4} ≥ 1`: the retraction then has no
    /// smallness guarantee and the run is best effort.
    pub bounds_guaranteed: bool,
}

fn thresholds_for(h_norm: f64, delta: f64) -> (CertificateThresholds, f64, bool) {
    let quarter = delta.sqrt().sqrt();
    let root_h = h_norm.sqrt();
    let c_constant = 6.0 + 96.0 * h_norm.powf(1.5);
    let thresholds = CertificateThresholds {
        truncation: 4.0 * root_h * quarter,
        stage3_distance: 24.0 * root_h * quarter,
        retraction_gap: 48.0 * root_h * quarter,
        commutator: c_constant * quarter,
    };
    let guaranteed = 24.0 * root_h * quarter < 1.0;
    (thresholds, c_constant, guaranteed)
}

/// Keeps the matrix entries whose coarse segments are the same or adjacent
/// without a spectral lacuna between them; zeroes the rest. Returns the
/// result in the original basis.
pub fn three_diagonal_truncate(
    u: &UnitaryOperator,
    partition: &SpectralPartition,
) -> Result<ComplexMatrix> {
    if u.dim() != partition.dim() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "operator is {}x{} but the partition was built at dimension {}",
                u.dim(),
                u.dim(),
                partition.dim()
            ),
        });
    }
    let frame = partition.ascending_frame();
    let in_frame = u.matrix().into_frame(&frame);
    Ok(truncate_in_frame(&in_frame, partition).from_frame(&frame))
}

fn truncate_in_frame(in_frame: &ComplexMatrix, partition: &SpectralPartition) -> ComplexMatrix {
    let segs = partition.coarse_segments();
    let flags = partition.separated_flags();
    let mut out = in_frame.clone();
    for (i, si) in segs.iter().enumerate() {
        for (j, sj) in segs.iter().enumerate() {
            let keep = match i.abs_diff(j) {
                0 => true,
                1 => !flags[i.min(j)],
                _ => false,
            };
            if !keep {
                out.set_block(
                    si.range.start,
                    sj.range.start,
                    &ComplexMatrix::zeros(si.range.len(), sj.range.len()),
                );
            }
        }
    }
    out
}

/// The rotation family flattening the lower-left block of a 2×2 block
/// matrix: with `α = a_21 ā_11^{-1}`,
///
/// ```text
/// v(t) = [ (1+t²α*α)^{-1/2}        (1+t²α*α)^{-1/2} tα* ]
///        [ -(1+t²αα*)^{-1/2} tα    (1+t²αα*)^{-1/2}     ]
/// ```
///
/// is unitary for every `t` and `v(0) = 1`.
#[derive(Clone, Debug)]
pub struct BlockRotation {
    alpha: ComplexMatrix,
    top: usize,
    bottom: usize,
}

impl BlockRotation {
    pub fn dim(&self) -> usize {
        self.top + self.bottom
    }

    pub fn at(&self, t: f64) -> UnitaryOperator {
        let n = self.dim();
        if self.alpha.max_abs_entry() == 0.0 || t == 0.0 {
            return UnitaryOperator::identity(n);
        }
        let gram_right = self.alpha.adjoint().mul(&self.alpha); // α*α, top×top
        let gram_left = self.alpha.mul(&self.alpha.adjoint()); // αα*, bottom×bottom
        let p = inv_sqrt_one_plus(&gram_right, t);
        let q = inv_sqrt_one_plus(&gram_left, t);
        let upper_right = p.mul(&self.alpha.adjoint()).scale_re(t);
        let lower_left = q.mul(&self.alpha).scale_re(-t);
        let mut v = ComplexMatrix::zeros(n, n);
        v.set_block(0, 0, &p);
        v.set_block(0, self.top, &upper_right);
        v.set_block(self.top, 0, &lower_left);
        v.set_block(self.top, self.top, &q);
        UnitaryOperator::new_unchecked(v)
    }
}

/// `(1 + t²·g)^{-1/2}` for a positive semidefinite `g`.
fn inv_sqrt_one_plus(gram: &ComplexMatrix, t: f64) -> ComplexMatrix {
    let n = gram.rows();
    let shifted = ComplexMatrix::identity(n).add(&gram.scale_re(t * t));
    let herm = HermitianOperator::with_tolerance(shifted.hermitian_part(), 1.0)
        .expect("square by construction");
    hermitian_function(&herm, |x| 1.0 / x.max(f64::MIN_POSITIVE).sqrt())
}

/// `α = a_21 ā_11^{-1}`, where `ā_11` is `a_11` with its singular values
/// lifted to at least `floor`, so `‖ā_11 − a_11‖ ≤ floor` and the inverse
/// always exists.
fn rotation_alpha(a11: &ComplexMatrix, a21: &ComplexMatrix, floor: f64) -> Result<ComplexMatrix> {
    if a21.max_abs_entry() == 0.0 {
        return Ok(ComplexMatrix::zeros(a21.rows(), a21.cols()));
    }
    let (u, sigma, v) = svd_square(a11)?;
    let lifted_inv: Vec<f64> = sigma.iter().map(|&s| 1.0 / s.max(floor)).collect();
    let inv = v
        .mul(&ComplexMatrix::diag_real(&lifted_inv))
        .mul(&u.adjoint());
    Ok(a21.mul(&inv))
}

/// Rotation produced for one block pair, with its endpoint and the measured
/// size of the block it was built to flatten.
#[derive(Clone, Debug)]
pub struct BlockTriangularization {
    pub rotation: BlockRotation,
    /// `v(1)`.
    pub endpoint: UnitaryOperator,
    /// `‖(v(1)·a)_21‖`.
    pub residual: f64,
}

/// Builds the rotation flattening the lower-left block of `a`, split after
/// `top_rows` rows, to below `epsilon`.
pub fn triangularize_pair(
    a: &ComplexMatrix,
    top_rows: usize,
    epsilon: f64,
) -> Result<BlockTriangularization> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    if top_rows == 0 || top_rows >= n {
        return Err(Error::InvalidInput {
            context: format!("block split {top_rows} must be inside 1..{n}"),
        });
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::NonPositiveParameter {
            name: "epsilon",
            value: epsilon,
        });
    }
    let a11 = a.submatrix(0..top_rows, 0..top_rows);
    let a21 = a.submatrix(top_rows..n, 0..top_rows);
    let alpha = rotation_alpha(&a11, &a21, epsilon / 2.0)?;
    let rotation = BlockRotation {
        alpha,
        top: top_rows,
        bottom: n - top_rows,
    };
    let endpoint = rotation.at(1.0);
    let rotated = endpoint.matrix().mul(a);
    let residual = operator_norm(&rotated.submatrix(top_rows..n, 0..top_rows));
    Ok(BlockTriangularization {
        rotation,
        endpoint,
        residual,
    })
}

/// Everything one construction run produces.
#[derive(Clone, Debug)]
pub struct HomotopyOutcome {
    /// The raw path; its samples drift from the unitary group by at most
    /// the certified distance.
    pub pre_path: OperatorPath,
    /// Polar retraction of every raw sample.
    pub retracted: OperatorPath,
    pub certificate: HomotopyCertificate,
    pub partition: SpectralPartition,
}

/// Constructs the path from `u` to the identity controlled by `h`.
///
/// When every eigenvalue of `h` fits in one coarse cell the geodesic is
/// used directly; otherwise the four-stage construction runs in the
/// partition frame. If the measured `‖[u, h]‖` exceeds `delta`, the
/// measured value replaces it and the certificate records the
/// substitution.
pub fn build_homotopy(
    h: &HermitianOperator,
    u: &UnitaryOperator,
    delta: f64,
    samples_per_stage: usize,
) -> Result<HomotopyOutcome> {
    if h.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "h is {0}x{0} but u is {1}x{1}",
                h.dim(),
                u.dim()
            ),
        });
    }
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::NonPositiveParameter {
            name: "delta",
            value: delta,
        });
    }
    if samples_per_stage == 0 {
        return Err(Error::InvalidInput {
            context: "samples_per_stage must be at least 1".into(),
        });
    }

    let measured_input = commutator_norm(u.matrix(), h.matrix());
    let (delta_used, delta_substituted) = if measured_input > delta {
        (measured_input, true)
    } else {
        (delta, false)
    };
    let partition = build_partition(h, delta_used)?;
    let h_norm = partition.h_norm();
    let m = partition.coarse_segments().len();
    let n = h.dim();
    let s = samples_per_stage;

    let mut pre: Vec<PathSample> = Vec::new();
    let marks: Vec<f64>;
    let mut truncation_error = 0.0;

    if m == 1 {
        // The whole spectrum fits in one cell: any unitary path keeps the
        // commutator below δ^{1/4}, so connect u to 1 by the geodesic.
        marks = vec![0.0, 1.0];
        let geo = UnitaryGeodesic::new(u);
        let total = 4 * s;
        for j in 0..=total {
            let (t, matrix) = if j == 0 {
                (0.0, u.matrix().clone())
            } else if j == total {
                (1.0, ComplexMatrix::identity(n))
            } else {
                let t = j as f64 / total as f64;
                (t, geo.at(1.0 - t).matrix().clone())
            };
            pre.push(PathSample { t, matrix });
        }
    } else {
        marks = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let frame = partition.ascending_frame();
        let u_f = u.matrix().into_frame(&frame);
        let d_f = truncate_in_frame(&u_f, &partition);
        // Conjugation by the frame preserves the norm, so this is ‖u − d(u)‖.
        truncation_error = operator_norm(&u_f.sub(&d_f));

        // Stage 1: linear from u to d(u).
        pre.push(PathSample {
            t: 0.0,
            matrix: u.matrix().clone(),
        });
        for j in 1..=s {
            let lt = j as f64 / s as f64;
            let t = if j == s { 0.25 } else { 0.25 * lt };
            pre.push(PathSample {
                t,
                matrix: u_f.lerp(&d_f, lt).from_frame(&frame),
            });
        }

        // Stage 2: walk the sub-diagonal, rotating away each block that has
        // no lacuna protecting it, then writing an exact zero over the
        // ε-sized residue.
        let stage_epsilon = delta_used * STAGE_EPSILON_FACTOR;
        let mut current = d_f;
        let rotations = m - 1;
        for r in 0..rotations {
            let t0 = 0.25 + 0.25 * r as f64 / rotations as f64;
            let t1 = if r + 1 == rotations {
                0.5
            } else {
                0.25 + 0.25 * (r + 1) as f64 / rotations as f64
            };
            let lo = partition.coarse_segments()[r].range.clone();
            let hi = partition.coarse_segments()[r + 1].range.clone();
            if partition.separated_flags()[r] {
                // Lacuna between the blocks: the sub-diagonal is already
                // zero and the path rests here.
                for j in 1..=s {
                    let t = if j == s {
                        t1
                    } else {
                        t0 + (t1 - t0) * j as f64 / s as f64
                    };
                    pre.push(PathSample {
                        t,
                        matrix: current.from_frame(&frame),
                    });
                }
                continue;
            }
            let a11 = current.submatrix(lo.clone(), lo.clone());
            let a21 = current.submatrix(hi.clone(), lo.clone());
            let alpha = rotation_alpha(&a11, &a21, stage_epsilon / 2.0)?;
            let rotation = BlockRotation {
                alpha,
                top: lo.len(),
                bottom: hi.len(),
            };
            let mut endpoint_state = None;
            for j in 1..=s {
                let lt = j as f64 / s as f64;
                let t = if j == s { t1 } else { t0 + (t1 - t0) * lt };
                let v = rotation.at(lt);
                let applied = apply_rows(&v, lo.start, &current);
                if j == s {
                    endpoint_state = Some(applied.clone());
                }
                pre.push(PathSample {
                    t,
                    matrix: applied.from_frame(&frame),
                });
            }
            current = endpoint_state.expect("rotation leg has samples");
            current.set_block(
                hi.start,
                lo.start,
                &ComplexMatrix::zeros(hi.len(), lo.len()),
            );
        }

        // Stage 3: linear from the triangular matrix to its block diagonal.
        let mut d0 = ComplexMatrix::zeros(n, n);
        for seg in partition.coarse_segments() {
            d0.set_block(
                seg.range.start,
                seg.range.start,
                &current.submatrix(seg.range.clone(), seg.range.clone()),
            );
        }
        for j in 1..=s {
            let lt = j as f64 / s as f64;
            let t = if j == s { 0.75 } else { 0.5 + 0.25 * lt };
            pre.push(PathSample {
                t,
                matrix: current.lerp(&d0, lt).from_frame(&frame),
            });
        }

        // Stage 4: snap each diagonal block to its nearest unitary, then
        // ride the geodesic from that block-diagonal unitary to 1.
        let mut diag_w = ComplexMatrix::zeros(n, n);
        for seg in partition.coarse_segments() {
            let block = d0.submatrix(seg.range.clone(), seg.range.clone());
            let w = polar_unitary_auto(&block).map_err(|e| Error::RetractionFailed {
                stage: 4,
                t: 0.75,
                reason: e.to_string(),
            })?;
            diag_w.set_block(seg.range.start, seg.range.start, w.matrix());
        }
        for j in 1..=s {
            let lt = j as f64 / s as f64;
            let t = if j == s { 0.875 } else { 0.75 + 0.125 * lt };
            pre.push(PathSample {
                t,
                matrix: d0.lerp(&diag_w, lt).from_frame(&frame),
            });
        }
        let geo = UnitaryGeodesic::new(&UnitaryOperator::new_unchecked(diag_w));
        for j in 1..=s {
            let lt = j as f64 / s as f64;
            let (t, matrix) = if j == s {
                (1.0, ComplexMatrix::identity(n))
            } else {
                (0.875 + 0.125 * lt, geo.at(1.0 - lt).matrix().from_frame(&frame))
            };
            pre.push(PathSample { t, matrix });
        }
    }

    // Retraction: nearest unitary, sample by sample.
    let mut post: Vec<PathSample> = Vec::with_capacity(pre.len());
    for sample in &pre {
        let w = polar_unitary_auto(&sample.matrix).map_err(|e| match e {
            Error::SingularMatrix { .. } => Error::RetractionFailed {
                stage: stage_of_marks(&marks, sample.t),
                t: sample.t,
                reason: e.to_string(),
            },
            other => other,
        })?;
        post.push(PathSample {
            t: sample.t,
            matrix: w.matrix().clone(),
        });
    }

    let mut sup_commutator = 0.0f64;
    let mut sup_unitary_distance = 0.0f64;
    let mut retraction_gap = 0.0f64;
    for (raw, fixed) in pre.iter().zip(&post) {
        sup_unitary_distance = sup_unitary_distance.max(dist_to_unitary(&raw.matrix)?);
        sup_commutator = sup_commutator.max(commutator_norm(&fixed.matrix, h.matrix()));
        retraction_gap = retraction_gap.max(operator_norm(&raw.matrix.sub(&fixed.matrix)));
    }
    let endpoint_error_start = operator_norm(&post[0].matrix.sub(u.matrix()));
    let endpoint_error_end =
        operator_norm(&post[post.len() - 1].matrix.sub(&ComplexMatrix::identity(n)));

    let (thresholds, c_constant, bounds_guaranteed) = thresholds_for(h_norm, delta_used);
    let certificate = HomotopyCertificate {
        delta: delta_used,
        delta_substituted,
        h_norm,
        c_constant,
        sup_commutator,
        sup_unitary_distance,
        retraction_gap,
        endpoint_error_start,
        endpoint_error_end,
        truncation_error,
        samples_per_stage: s,
        thresholds,
        bounds_guaranteed,
    };
    let pre_is_unitary = m == 1;
    Ok(HomotopyOutcome {
        pre_path: OperatorPath::new(pre, marks.clone(), pre_is_unitary)?,
        retracted: OperatorPath::new(post, marks, true)?,
        certificate,
        partition,
    })
}

/// Left-multiplies rows `offset..offset + v.dim()` of `m` by `v`, leaving
/// the other rows untouched.
fn apply_rows(v: &UnitaryOperator, offset: usize, m: &ComplexMatrix) -> ComplexMatrix {
    let vd = v.dim();
    let window = m.submatrix(offset..offset + vd, 0..m.cols());
    let rotated = v.matrix().mul(&window);
    let mut out = m.clone();
    out.set_block(offset, 0, &rotated);
    out
}

/// One re-measured quantity with the limit it is held against. Checks with
/// `enforced` false are informational: they appear in the report but do not
/// decide `passed`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationCheck {
    pub name: String,
    pub measured: f64,
    pub limit: f64,
    pub enforced: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<VerificationCheck>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&VerificationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Re-measures a retracted path from scratch against its certificate:
/// unitarity of every sample, the identity endpoint, the commutator
/// envelope (enforced only when the certificate guarantees bounds), and
/// agreement of the recorded envelope with the recomputed one.
pub fn verify_certificate(
    path: &OperatorPath,
    h: &HermitianOperator,
    cert: &HomotopyCertificate,
) -> Result<VerificationReport> {
    if path.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "path samples are {}x{} but h is {}x{}",
                path.dim(),
                path.dim(),
                h.dim(),
                h.dim()
            ),
        });
    }
    let mut max_defect = 0.0f64;
    let mut sup_commutator = 0.0f64;
    for sample in path.samples() {
        max_defect = max_defect.max(sample.matrix.unitary_defect());
        sup_commutator = sup_commutator.max(commutator_norm(&sample.matrix, h.matrix()));
    }
    let n = path.dim();
    let endpoint = operator_norm(
        &path.samples()[path.len() - 1]
            .matrix
            .sub(&ComplexMatrix::identity(n)),
    );

    let mut checks = Vec::new();
    let mut push = |name: &str, measured: f64, limit: f64, enforced: bool| {
        checks.push(VerificationCheck {
            name: name.to_string(),
            measured,
            limit,
            enforced,
            passed: !enforced || measured <= limit,
        });
    };
    push("unitarity", max_defect, UNITARY_TOL, true);
    push("endpoint_identity", endpoint, ENDPOINT_TOL, true);
    push(
        "commutator_envelope",
        sup_commutator,
        cert.thresholds.commutator,
        cert.bounds_guaranteed,
    );
    push(
        "certificate_consistency",
        (sup_commutator - cert.sup_commutator).abs(),
        1e-12 + 1e-9 * cert.sup_commutator.abs(),
        true,
    );
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerificationReport { checks, passed })
}

/// Row-mass norm estimate for a block matrix: if every block row satisfies
/// `‖Σ_j a_ij a*_ij‖ < ε²`, then `‖a‖ < ε√N` over `N` block rows.
#[derive(Clone, Debug)]
pub struct LemmaNnReport {
    /// Number of block rows.
    pub blocks: usize,
    /// Whether every block row came in under `ε²`.
    pub precondition_met: bool,
    /// `max_i ‖Σ_j a_ij a*_ij‖`.
    pub max_row_mass: f64,
    pub measured_norm: f64,
    /// `ε√N`.
    pub bound: f64,
    pub bound_holds: bool,
}

/// Measures `a` split into square blocks of the given sizes against the
/// row-mass bound at level `epsilon`.
pub fn lemma_nn_bound(
    a: &ComplexMatrix,
    block_sizes: &[usize],
    epsilon: f64,
) -> Result<LemmaNnReport> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::NonPositiveParameter {
            name: "epsilon",
            value: epsilon,
        });
    }
    if block_sizes.is_empty() || block_sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidInput {
            context: "block sizes must be nonempty and positive".into(),
        });
    }
    let total: usize = block_sizes.iter().sum();
    if total != a.rows() {
        return Err(Error::MismatchedInputs {
            context: format!(
                "block sizes sum to {total} but the matrix has {} rows",
                a.rows()
            ),
        });
    }
    let mut ranges = Vec::with_capacity(block_sizes.len());
    let mut off = 0;
    for &sz in block_sizes {
        ranges.push(off..off + sz);
        off += sz;
    }
    let mut max_row_mass = 0.0f64;
    for ri in &ranges {
        let mut mass = ComplexMatrix::zeros(ri.len(), ri.len());
        for rj in &ranges {
            let block = a.submatrix(ri.clone(), rj.clone());
            mass = mass.add(&block.mul(&block.adjoint()));
        }
        max_row_mass = max_row_mass.max(operator_norm(&mass));
    }
    let measured_norm = operator_norm(a);
    let bound = epsilon * (block_sizes.len() as f64).sqrt();
    Ok(LemmaNnReport {
        blocks: block_sizes.len(),
        precondition_met: max_row_mass < epsilon * epsilon,
        max_row_mass,
        measured_norm,
        bound,
        bound_holds: measured_norm < bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::SplitMix64;
    use crate::linalg::exp_i_hermitian;
    use num_complex::Complex64;

    fn diag_h(values: &[f64]) -> HermitianOperator {
        HermitianOperator::new(ComplexMatrix::diag_real(values)).unwrap()
    }

    fn planar_rotation(theta: f64) -> UnitaryOperator {
        let (s, c) = theta.sin_cos();
        UnitaryOperator::new(
            ComplexMatrix::from_rows(&[
                vec![c.into(), (-s).into()],
                vec![s.into(), c.into()],
            ])
            .unwrap(),
        )
        .unwrap()
    }

    fn random_unitary(seed: u64, n: usize) -> UnitaryOperator {
        let mut rng = SplitMix64::new(seed);
        let g = ComplexMatrix::from_fn(n, n, |_, _| rng.complex_symmetric());
        exp_i_hermitian(&HermitianOperator::new(g.hermitian_part()).unwrap(), 1.0)
    }

    #[test]
    fn scalar_triangularization_matches_hand_rotation() {
        let a = ComplexMatrix::from_rows(&[
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)],
        ])
        .unwrap();
        let tri = triangularize_pair(&a, 1, 0.5).unwrap();
        // α = 1, so v(1) = (1/√2) [[1, 1], [-1, 1]].
        let r = 0.5f64.sqrt();
        let want = [[r, r], [-r, r]];
        for i in 0..2 {
            for j in 0..2 {
                let got = tri.endpoint.matrix().get(i, j);
                assert!((got.re - want[i][j]).abs() <= 1e-14, "entry {i}{j}: {got}");
                assert!(got.im.abs() <= 1e-14);
            }
        }
        assert!(tri.residual <= 1e-14);
        // v(0) = 1 exactly and v stays unitary along the way.
        let at0 = tri.rotation.at(0.0);
        assert_eq!(at0.matrix().entries(), ComplexMatrix::identity(2).entries());
        for k in 0..=20 {
            let v = tri.rotation.at(k as f64 / 20.0);
            assert!(v.matrix().unitary_defect() <= 1e-13);
        }
    }

    #[test]
    fn zero_subdiagonal_keeps_identity_rotation() {
        let a = ComplexMatrix::from_rows(&[
            vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.5)],
            vec![Complex64::new(0.0, 0.0), Complex64::new(3.0, 0.0)],
        ])
        .unwrap();
        let tri = triangularize_pair(&a, 1, 1e-8).unwrap();
        assert_eq!(tri.residual, 0.0);
        let v = tri.rotation.at(0.37);
        assert_eq!(v.matrix().entries(), ComplexMatrix::identity(2).entries());
    }

    #[test]
    fn triangularization_flattens_random_blocks() {
        let mut rng = SplitMix64::new(2024);
        for _ in 0..10 {
            let a = ComplexMatrix::from_fn(5, 5, |_, _| rng.complex_symmetric());
            let tri = triangularize_pair(&a, 3, 1e-8).unwrap();
            assert!(tri.residual < 1e-8, "residual {}", tri.residual);
            for k in 0..=50 {
                let v = tri.rotation.at(k as f64 / 50.0);
                assert!(v.matrix().unitary_defect() <= 1e-12);
            }
        }
    }

    #[test]
    fn triangularization_validates_inputs() {
        let a = ComplexMatrix::identity(3);
        assert!(matches!(
            triangularize_pair(&a, 0, 1e-8),
            Err(Error::InvalidInput { .. })
        ));
        assert!(matches!(
            triangularize_pair(&a, 3, 1e-8),
            Err(Error::InvalidInput { .. })
        ));
        assert!(matches!(
            triangularize_pair(&a, 1, 0.0),
            Err(Error::NonPositiveParameter { .. })
        ));
    }

    #[test]
    fn truncation_zeroes_separated_blocks_only() {
        // Eigenvalues {0, 0.05} share a cell; {1} sits far away.
        let h = diag_h(&[1.0, 0.05, 0.0]);
        let partition = build_partition(&h, 1e-4).unwrap();
        assert_eq!(partition.separated_flags(), &[true]);
        let u = random_unitary(7, 3);
        let d = three_diagonal_truncate(&u, &partition).unwrap();
        // For diagonal h the frame is a permutation, so d acts entrywise:
        // couplings between eigenvalue 1.0 (index 0) and the low cluster
        // (indices 1, 2) are erased, everything else survives.
        for (i, j) in [(0usize, 1usize), (0, 2), (1, 0), (2, 0)] {
            assert_eq!(d.get(i, j), Complex64::new(0.0, 0.0), "entry {i}{j}");
        }
        for (i, j) in [(0usize, 0usize), (1, 1), (1, 2), (2, 1), (2, 2)] {
            let gap = (d.get(i, j) - u.matrix().get(i, j)).norm();
            assert!(gap <= 1e-13, "entry {i}{j} changed by {gap}");
        }
    }

    #[test]
    fn truncation_bound_holds_on_generated_pair() {
        let spec = crate::instances::GeneratorSpec::pair(
            31,
            8,
            crate::instances::SpectrumSpec::Uniform { lo: -1.0, hi: 1.0 },
            1e-6,
        );
        let pair = crate::instances::gen_almost_commuting_pair(&spec).unwrap();
        let partition = build_partition(&pair.h, pair.measured_delta).unwrap();
        let d = three_diagonal_truncate(&pair.u, &partition).unwrap();
        let gap = operator_norm(&pair.u.matrix().sub(&d));
        let limit =
            4.0 * partition.h_norm().sqrt() * pair.measured_delta.sqrt().sqrt();
        assert!(gap < limit, "‖u - d(u)‖ = {gap} vs {limit}");
    }

    #[test]
    fn rotation_walkthrough_two_by_two() {
        let theta = 1e-6f64;
        let h = diag_h(&[1.0, -1.0]);
        let u = planar_rotation(theta);
        let delta = 2.0 * theta.sin();
        let outcome = build_homotopy(&h, &u, delta * 1.001, 16).unwrap();

        assert_eq!(outcome.partition.coarse_segments().len(), 2);
        assert_eq!(outcome.partition.separated_flags(), &[true]);
        assert_eq!(outcome.retracted.stage_marks(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(outcome.retracted.is_retracted());

        let cert = &outcome.certificate;
        assert!(!cert.delta_substituted);
        // ‖u - d(u)‖ = sin θ: only the off-diagonal survives truncation.
        assert!((cert.truncation_error - theta.sin()).abs() <= 1e-12);
        // The commutator peaks at the start, where the path equals u.
        assert!(cert.sup_commutator <= delta + 1e-12);
        assert!(cert.sup_commutator >= delta - 1e-9);
        assert!(cert.endpoint_error_start <= 1e-12);
        assert!(cert.endpoint_error_end <= 1e-12);
        assert!(cert.bounds_guaranteed);
        assert!(cert.sup_commutator <= cert.thresholds.commutator);
        assert!(cert.sup_unitary_distance <= cert.thresholds.stage3_distance);
        assert!(cert.retraction_gap <= cert.thresholds.retraction_gap);

        let report = verify_certificate(&outcome.retracted, &h, cert).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn single_cell_spectrum_takes_geodesic_branch() {
        // Spectral diameter 5e-4 is far below the 0.1 cell width.
        let h = diag_h(&[0.5005, 0.5]);
        let u = random_unitary(11, 2);
        let delta = 1e-4;
        let outcome = build_homotopy(&h, &u, delta, 8).unwrap();
        assert_eq!(outcome.retracted.stage_marks(), &[0.0, 1.0]);
        assert!(outcome.pre_path.is_retracted());
        assert_eq!(outcome.certificate.truncation_error, 0.0);
        let quarter = outcome.certificate.delta.sqrt().sqrt();
        assert!(
            outcome.certificate.sup_commutator <= quarter + 1e-12,
            "sup {} vs {}",
            outcome.certificate.sup_commutator,
            quarter
        );
    }

    #[test]
    fn commuting_diagonal_pair_stays_commuting() {
        let h = diag_h(&[1.0, -1.0]);
        let u = UnitaryOperator::new(ComplexMatrix::diag_complex(&[
            Complex64::from_polar(1.0, 0.4),
            Complex64::from_polar(1.0, -1.1),
        ]))
        .unwrap();
        let outcome = build_homotopy(&h, &u, 1e-8, 8).unwrap();
        let cert = &outcome.certificate;
        assert!(!cert.delta_substituted);
        assert!(cert.truncation_error <= 1e-15);
        assert!(cert.sup_commutator <= 1e-12, "sup {}", cert.sup_commutator);
        assert!(cert.endpoint_error_start <= 1e-12);
        assert!(cert.endpoint_error_end <= 1e-12);
    }

    #[test]
    fn generated_instance_meets_certificate() {
        let spec = crate::instances::GeneratorSpec::pair(
            17,
            5,
            crate::instances::SpectrumSpec::Uniform { lo: -1.0, hi: 1.0 },
            1e-6,
        );
        let pair = crate::instances::gen_almost_commuting_pair(&spec).unwrap();
        let outcome = build_homotopy(&pair.h, &pair.u, pair.measured_delta, 8).unwrap();
        let cert = &outcome.certificate;
        assert!(cert.bounds_guaranteed);
        assert!(cert.sup_commutator <= cert.thresholds.commutator);
        assert!(cert.sup_unitary_distance <= cert.thresholds.stage3_distance);
        assert!(cert.retraction_gap <= cert.thresholds.retraction_gap);
        assert!(cert.truncation_error <= cert.thresholds.truncation);
        let report = verify_certificate(&outcome.retracted, &pair.h, cert).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn verify_flags_tampered_samples() {
        let h = diag_h(&[1.0, -1.0]);
        let u = planar_rotation(1e-5);
        let outcome = build_homotopy(&h, &u, 2.1e-5, 8).unwrap();
        let marks = outcome.retracted.stage_marks().to_vec();

        // De-unitarize one interior sample.
        let mut samples: Vec<PathSample> = outcome.retracted.samples().to_vec();
        let k = samples.len() / 2;
        samples[k].matrix = samples[k].matrix.scale_re(1.0 + 1e-3);
        let tampered = OperatorPath::new(samples, marks.clone(), true).unwrap();
        let report =
            verify_certificate(&tampered, &h, &outcome.certificate).unwrap();
        assert!(!report.passed);
        let unit = report.check("unitarity").unwrap();
        assert!(!unit.passed);
        assert!(unit.measured > 1e-3, "defect {}", unit.measured);

        // Push the final sample off the identity.
        let mut samples: Vec<PathSample> = outcome.retracted.samples().to_vec();
        let last = samples.len() - 1;
        samples[last].matrix = samples[last].matrix.scale_re(1.0 + 1e-4);
        let tampered = OperatorPath::new(samples, marks.clone(), true).unwrap();
        let report =
            verify_certificate(&tampered, &h, &outcome.certificate).unwrap();
        assert!(!report.check("endpoint_identity").unwrap().passed);

        // Tamper with the recorded envelope instead of the path.
        let mut cert = outcome.certificate.clone();
        cert.sup_commutator += 1e-3;
        let report = verify_certificate(&outcome.retracted, &h, &cert).unwrap();
        assert!(!report.check("certificate_consistency").unwrap().passed);
    }

    #[test]
    fn path_constructor_validates_grid() {
        let sample = |t: f64| PathSample {
            t,
            matrix: ComplexMatrix::identity(2),
        };
        assert!(OperatorPath::new(vec![], vec![0.0, 1.0], false).is_err());
        assert!(
            OperatorPath::new(vec![sample(0.1), sample(1.0)], vec![0.0, 1.0], false).is_err()
        );
        assert!(
            OperatorPath::new(vec![sample(0.0), sample(0.5)], vec![0.0, 1.0], false).is_err()
        );
        let ok = OperatorPath::new(
            vec![sample(0.0), sample(0.5), sample(1.0)],
            vec![0.0, 1.0],
            true,
        )
        .unwrap();
        assert_eq!(ok.len(), 3);
        assert_eq!(ok.stage_of(0.2), 1);
        assert_eq!(ok.nearest(0.45).t, 0.5);
    }

    #[test]
    fn homotopy_validates_inputs() {
        let h = diag_h(&[1.0, -1.0]);
        let u = planar_rotation(1e-6);
        assert!(matches!(
            build_homotopy(&h, &u, 0.0, 8),
            Err(Error::NonPositiveParameter { .. })
        ));
        assert!(matches!(
            build_homotopy(&h, &u, 1e-6, 0),
            Err(Error::InvalidInput { .. })
        ));
        let h3 = diag_h(&[1.0, 0.0, -1.0]);
        assert!(matches!(
            build_homotopy(&h3, &u, 1e-6, 8),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn delta_substitution_is_recorded() {
        let h = diag_h(&[1.0, -1.0]);
        let u = planar_rotation(1e-3);
        // Measured commutator 2 sin(1e-3) ≈ 2e-3 exceeds the promised 1e-8.
        let outcome = build_homotopy(&h, &u, 1e-8, 4).unwrap();
        assert!(outcome.certificate.delta_substituted);
        assert!(outcome.certificate.delta >= 1.9e-3);
    }

    #[test]
    fn lemma_nn_extremal_case_is_tight() {
        let n_blocks = 4;
        let eps = 0.3;
        let c = eps / (n_blocks as f64).sqrt();
        let a = ComplexMatrix::from_fn(n_blocks, n_blocks, |_, _| Complex64::new(c, 0.0));
        let report = lemma_nn_bound(&a, &vec![1; n_blocks], eps).unwrap();
        // Rank one with every entry ε/√N: the norm meets ε√N exactly.
        assert!((report.measured_norm - report.bound).abs() <= 1e-12);
        assert!((report.max_row_mass - eps * eps).abs() <= 1e-12);
    }

    #[test]
    fn lemma_nn_single_row_within_bound() {
        let n_blocks = 3;
        let eps = 0.5;
        let c = 0.9 * eps / (n_blocks as f64).sqrt();
        let a = ComplexMatrix::from_fn(n_blocks, n_blocks, |i, _| {
            if i == 0 {
                Complex64::new(c, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let report = lemma_nn_bound(&a, &vec![1; n_blocks], eps).unwrap();
        assert!(report.precondition_met);
        assert!((report.measured_norm - 0.9 * eps).abs() <= 1e-12);
        assert!(report.bound_holds);
    }

    #[test]
    fn lemma_nn_validates_partition() {
        let a = ComplexMatrix::identity(4);
        assert!(matches!(
            lemma_nn_bound(&a, &[1, 2], 0.5),
            Err(Error::MismatchedInputs { .. })
        ));
        assert!(matches!(
            lemma_nn_bound(&a, &[2, 2], 0.0),
            Err(Error::NonPositiveParameter { .. })
        ));
        assert!(matches!(
            lemma_nn_bound(&a, &[], 0.5),
            Err(Error::InvalidInput { .. })
        ));
    }

    #[test]
    fn lemma_nn_random_blocks_hold() {
        let mut rng = SplitMix64::new(99);
        for &n_blocks in &[2usize, 4] {
            let sizes = vec![2usize; n_blocks];
            let dim = 2 * n_blocks;
            let eps = 0.25;
            let raw = ComplexMatrix::from_fn(dim, dim, |_, _| rng.complex_symmetric());
            // Rescale each block row so its mass sits safely under ε².
            let mut a = ComplexMatrix::zeros(dim, dim);
            for bi in 0..n_blocks {
                let rows = 2 * bi..2 * bi + 2;
                let row = raw.submatrix(rows.clone(), 0..dim);
                let mass = operator_norm(&row.mul(&row.adjoint()));
                let scale = (0.8 * eps * eps / mass).sqrt();
                a.set_block(rows.start, 0, &row.scale_re(scale));
            }
            let report = lemma_nn_bound(&a, &sizes, eps).unwrap();
            assert!(report.precondition_met, "mass {}", report.max_row_mass);
            assert!(report.bound_holds, "norm {} vs {}", report.measured_norm, report.bound);
        }
    }
}
