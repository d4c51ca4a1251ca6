//! Grid-sampled Hermitian operator families over an interval or circle,
//! diagonalized into ordered matrix-block eigenvalue curves. Each fiber is
//! snapped to a finite spectrum on the lattice `εZ`, consecutive groups of
//! `p` scalar eigenvalues form the blocks, and nodes where the occupied
//! lattice pattern changes become breakpoints whose frame mismatch is
//! damped by a certified homotopy. An iterated run at shrinking tolerances
//! gives curves that are Cauchy at rate `2C(ε_{m-1} + ε_m)^{1/4}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homotopy::{build_homotopy, HomotopyCertificate, OperatorPath};
use crate::linalg::{commutator_norm, hermitian_eigen, operator_norm};
use crate::matrix::{ComplexMatrix, HermitianOperator, UnitaryOperator};

/// Relative slack allowed between the grid endpoints and the base
/// endpoints.
const ENDPOINT_TOL: f64 = 1e-9;

/// Relative ordering tolerance between consecutive blocks.
const ORDERING_TOL: f64 = 1e-9;

/// Path resolution used for the damping homotopy at a breakpoint.
const GLUE_SAMPLES_PER_STAGE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Interval,
    /// Endpoints identified: the last grid node is glued back to the first.
    Circle,
}

/// The base the field lives over: `[a, b]`, optionally with `b ~ a`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BaseSpace {
    pub kind: BaseKind,
    pub a: f64,
    pub b: f64,
}

impl BaseSpace {
    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::NonFinite {
                context: "base endpoints".into(),
            });
        }
        if self.a >= self.b {
            return Err(Error::InvalidInput {
                context: format!("base needs a < b, got [{}, {}]", self.a, self.b),
            });
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.b - self.a
    }
}

/// A Hermitian operator per grid node, each of dimension
/// `module_rank · fiber_dim`.
#[derive(Clone, Debug)]
pub struct OperatorField {
    base: BaseSpace,
    grid: Vec<f64>,
    fiber_dim: usize,
    module_rank: usize,
    values: Vec<HermitianOperator>,
    /// `‖K(x_0) − K(x_M)‖` for circle bases; recorded, not enforced.
    seam_gap: Option<f64>,
}

impl OperatorField {
    pub fn new(
        base: BaseSpace,
        grid: Vec<f64>,
        fiber_dim: usize,
        module_rank: usize,
        values: Vec<HermitianOperator>,
    ) -> Result<Self> {
        base.validate()?;
        if fiber_dim == 0 || module_rank == 0 {
            return Err(Error::InvalidInput {
                context: "fiber_dim and module_rank must be positive".into(),
            });
        }
        if grid.len() < 2 {
            return Err(Error::InvalidInput {
                context: "a field needs at least two grid nodes".into(),
            });
        }
        if grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "grid nodes".into(),
            });
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput {
                context: "grid must increase strictly".into(),
            });
        }
        let slack = ENDPOINT_TOL * base.span();
        if (grid[0] - base.a).abs() > slack || (grid[grid.len() - 1] - base.b).abs() > slack {
            return Err(Error::InvalidInput {
                context: format!(
                    "grid [{}, {}] does not meet the base endpoints [{}, {}]",
                    grid[0],
                    grid[grid.len() - 1],
                    base.a,
                    base.b
                ),
            });
        }
        if values.len() != grid.len() {
            return Err(Error::MismatchedInputs {
                context: format!(
                    "{} grid nodes but {} operator values",
                    grid.len(),
                    values.len()
                ),
            });
        }
        let dim = fiber_dim * module_rank;
        for v in &values {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: format!(
                        "field values must be {dim}x{dim}, found {0}x{0}",
                        v.dim()
                    ),
                });
            }
        }
        let seam_gap = match base.kind {
            BaseKind::Circle => Some(operator_norm(
                &values[0].matrix().sub(values[values.len() - 1].matrix()),
            )),
            BaseKind::Interval => None,
        };
        Ok(Self {
            base,
            grid,
            fiber_dim,
            module_rank,
            values,
            seam_gap,
        })
    }

    pub fn base(&self) -> &BaseSpace {
        &self.base
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[HermitianOperator] {
        &self.values
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn module_rank(&self) -> usize {
        self.module_rank
    }

    pub fn dim(&self) -> usize {
        self.fiber_dim * self.module_rank
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    /// Recorded seam mismatch of a circle field.
    pub fn seam_gap(&self) -> Option<f64> {
        self.seam_gap
    }

    /// Largest fiber norm over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| operator_norm(v.matrix()))
            .fold(0.0, f64::max)
    }

    /// The same field conjugated node-wise by a fixed unitary.
    pub fn conjugated(&self, u: &UnitaryOperator) -> Result<Self> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "conjugating unitary is {0}x{0} but fibers are {1}x{1}",
                    u.dim(),
                    self.dim()
                ),
            });
        }
        let values = self
            .values
            .iter()
            .map(|v| {
                HermitianOperator::new(v.matrix().into_frame(u.matrix()).hermitian_part())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.base, self.grid.clone(), self.fiber_dim, self.module_rank, values)
    }
}

/// Ordered block eigenvalue curves of a stitched field. Curve `i` holds one
/// `p×p` Hermitian block per grid node, emitted in its own eigenbasis
/// (diagonal, entries descending), and consecutive curves interlace:
/// `min spec λ_i ≥ max spec λ_{i+1}`.
#[derive(Clone, Debug)]
pub struct EigenvalueField {
    curves: Vec<Vec<HermitianOperator>>,
    breakpoints: Vec<usize>,
    jump_report: Vec<f64>,
    ordering_ok: bool,
}

impl EigenvalueField {
    /// One entry per curve, each with one block per node.
    pub fn curves(&self) -> &[Vec<HermitianOperator>] {
        &self.curves
    }

    /// Node indices `j` where the lattice pattern changes between `j` and
    /// `j + 1`; for circle bases the last node marks the seam back to node 0.
    pub fn breakpoints(&self) -> &[usize] {
        &self.breakpoints
    }

    /// Per curve, the largest block jump across any breakpoint.
    pub fn jump_report(&self) -> &[f64] {
        &self.jump_report
    }

    pub fn ordering_ok(&self) -> bool {
        self.ordering_ok
    }

    pub fn module_rank(&self) -> usize {
        self.curves.len()
    }

    pub fn nodes(&self) -> usize {
        self.curves.first().map_or(0, Vec::len)
    }
}

/// One adjacent pair whose distance exceeds the stitching tolerance; the
/// run still completes, but the interpolation between these nodes carries
/// no guarantee.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityViolation {
    /// Left node of the offending pair.
    pub node: usize,
    pub gap: f64,
    pub limit: f64,
}

/// Frame alignment and damping record for one breakpoint.
#[derive(Clone, Debug)]
pub struct BreakpointRecord {
    /// Left node of the pattern change (`nodes − 1` for a circle seam).
    pub node: usize,
    /// Largest scalar eigenvalue gap across the breakpoint.
    pub max_gap: f64,
    /// Measured `‖[W, h]‖` fed to the damping homotopy.
    pub commutator_in: f64,
    /// Certificate of the homotopy pulling the frame rotation back to 1.
    pub glue: HomotopyCertificate,
}

/// Output of one stitching pass.
#[derive(Clone, Debug)]
pub struct StitchResult {
    pub eigenvalues: EigenvalueField,
    pub epsilon: f64,
    /// Largest `‖K' − K‖` over the nodes; at most `ε/2`.
    pub max_snap_error: f64,
    pub density_violations: Vec<DensityViolation>,
    pub breakpoint_records: Vec<BreakpointRecord>,
    /// Circle bases: alignment record for the seam, present even when the
    /// pattern there does not change.
    pub seam: Option<BreakpointRecord>,
}

/// Geometric tolerance schedule `ε_m = ε_0 · ratio^m`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RefinementSchedule {
    pub eps0: f64,
    pub ratio: f64,
    pub iterations: usize,
}

impl RefinementSchedule {
    pub fn validate(&self) -> Result<()> {
        if !self.eps0.is_finite() || self.eps0 <= 0.0 {
            return Err(Error::NonPositiveParameter {
                name: "eps0",
                value: self.eps0,
            });
        }
        if !self.ratio.is_finite() || self.ratio <= 0.0 || self.ratio >= 1.0 {
            return Err(Error::InvalidInput {
                context: format!("ratio must lie in (0, 1), got {}", self.ratio),
            });
        }
        if self.iterations == 0 {
            return Err(Error::InvalidInput {
                context: "schedule needs at least one iteration".into(),
            });
        }
        Ok(())
    }

    pub fn epsilon(&self, m: usize) -> f64 {
        self.eps0 * self.ratio.powi(m as i32)
    }
}

/// Stitching passes at every schedule tolerance, with the measured Cauchy
/// increments between consecutive passes held against
/// `2C(ε_{m-1} + ε_m)^{1/4}`.
#[derive(Clone, Debug)]
pub struct RefinementOutcome {
    /// The last pass.
    pub final_result: StitchResult,
    /// `max_{i,j} ‖λ_{i,m}(x_j) − λ_{i,m-1}(x_j)‖` for `m = 1..`.
    pub cauchy_deltas: Vec<f64>,
    /// `2C(ε_{m-1} + ε_m)^{1/4}` with `C = 6 + 96·sup‖K‖^{3/2}`.
    pub cauchy_bounds: Vec<f64>,
    pub within_bounds: bool,
    /// Density report of the first pass: the grid has to resolve the field
    /// at `ε_0`; later passes tighten the spectral approximation, not the
    /// grid, so their density reports are informational.
    pub initial_density_violations: Vec<DensityViolation>,
}

/// Eigendata of one node after snapping to the lattice `εZ`.
struct SnappedNode {
    /// Lattice indices, descending.
    cells: Vec<i64>,
    /// `cells[l] · ε`, descending.
    values: Vec<f64>,
    frame: ComplexMatrix,
    snap_error: f64,
}

fn snap_node(k: &HermitianOperator, epsilon: f64) -> SnappedNode {
    let eig = hermitian_eigen(k);
    let mut cells = Vec::with_capacity(eig.values().len());
    let mut values = Vec::with_capacity(eig.values().len());
    let mut snap_error = 0.0f64;
    for &v in eig.values() {
        let cell = (v / epsilon).round();
        let snapped = cell * epsilon;
        snap_error = snap_error.max((snapped - v).abs());
        cells.push(cell as i64);
        values.push(snapped);
    }
    SnappedNode {
        cells,
        values,
        frame: eig.frame().matrix().clone(),
        snap_error,
    }
}

/// Moves every eigenvalue of `K` to the nearest lattice point `j·ε`,
/// keeping the eigenvectors. The error `‖K' − K‖` is at most `ε/2`.
pub fn approx_finite_spectrum(
    k: &HermitianOperator,
    epsilon: f64,
) -> Result<(HermitianOperator, f64)> {
    check_epsilon(epsilon)?;
    let node = snap_node(k, epsilon);
    let matrix = ComplexMatrix::diag_real(&node.values)
        .from_frame(&node.frame)
        .hermitian_part();
    Ok((HermitianOperator::new(matrix)?, node.snap_error))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::NonPositiveParameter {
            name: "epsilon",
            value: epsilon,
        });
    }
    Ok(())
}

/// Splits a sorted spectrum into `dim/p` consecutive blocks of `p`, each a
/// diagonal `p×p` operator with descending entries. Consecutive blocks
/// interlace by construction.
pub fn group_eigenvalues(
    eig: &crate::matrix::EigenDecomposition,
    p: usize,
) -> Result<Vec<HermitianOperator>> {
    group_values(eig.values(), p)
}

fn group_values(values: &[f64], p: usize) -> Result<Vec<HermitianOperator>> {
    if p == 0 {
        return Err(Error::InvalidInput {
            context: "fiber dimension must be positive".into(),
        });
    }
    if values.len() % p != 0 {
        return Err(Error::DimensionMismatch {
            context: format!(
                "dimension {} is not divisible by fiber dimension {p}",
                values.len()
            ),
        });
    }
    Ok(values
        .chunks(p)
        .map(HermitianOperator::from_diag)
        .collect())
}

/// Frame alignment across one breakpoint: scalar eigenvalues paired by
/// position, blocks paired with them, and the unitary rotating the right
/// frame onto the left one.
#[derive(Clone, Debug)]
pub struct BreakpointMatch {
    /// `(i, i)` block pairs, kept explicit for the report.
    pub pairs: Vec<(usize, usize)>,
    /// `|α_l − β_l|` per scalar position; each is at most
    /// `‖K_left − K_right‖`.
    pub scalar_gaps: Vec<f64>,
    pub max_gap: f64,
    /// `frame_left* · frame_right`.
    pub w: UnitaryOperator,
}

/// Pairs the spectra of two nearby operators positionally and returns the
/// frame rotation between their eigenbases. Eigenvector phases are fixed
/// deterministically, so equal inputs give `W = 1`.
pub fn match_breakpoint(
    k_left: &HermitianOperator,
    k_right: &HermitianOperator,
    p: usize,
) -> Result<BreakpointMatch> {
    if k_left.dim() != k_right.dim() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "matching operators of dimensions {} and {}",
                k_left.dim(),
                k_right.dim()
            ),
        });
    }
    let left = hermitian_eigen(k_left);
    let right = hermitian_eigen(k_right);
    match_frames(left.values(), left.frame().matrix(), right.values(), right.frame().matrix(), p)
}

fn match_frames(
    left_values: &[f64],
    left_frame: &ComplexMatrix,
    right_values: &[f64],
    right_frame: &ComplexMatrix,
    p: usize,
) -> Result<BreakpointMatch> {
    if p == 0 || left_values.len() % p != 0 {
        return Err(Error::DimensionMismatch {
            context: format!(
                "dimension {} is not divisible by fiber dimension {p}",
                left_values.len()
            ),
        });
    }
    let scalar_gaps: Vec<f64> = left_values
        .iter()
        .zip(right_values)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let max_gap = scalar_gaps.iter().fold(0.0f64, |m, &g| m.max(g));
    let blocks = left_values.len() / p;
    let pairs = (0..blocks).map(|i| (i, i)).collect();
    let w = UnitaryOperator::new_unchecked(left_frame.adjoint().mul(right_frame));
    Ok(BreakpointMatch {
        pairs,
        scalar_gaps,
        max_gap,
        w,
    })
}

/// A damping unitary field on a window `[x_k, x_{k+1}]`: equals `W` at the
/// left edge, the identity at and beyond the right edge, and follows the
/// certified homotopy in between.
#[derive(Clone, Debug)]
pub struct GluedWindow {
    x_start: f64,
    x_end: f64,
    commutator_in: f64,
    path: OperatorPath,
    certificate: HomotopyCertificate,
}

impl GluedWindow {
    pub fn window(&self) -> (f64, f64) {
        (self.x_start, self.x_end)
    }

    /// Measured `‖[W, h]‖` at construction.
    pub fn commutator_in(&self) -> f64 {
        self.commutator_in
    }

    pub fn certificate(&self) -> &HomotopyCertificate {
        &self.certificate
    }

    pub fn path(&self) -> &OperatorPath {
        &self.path
    }

    /// Sample at `x`: the retracted path at `t = (x − x_k)/(x_{k+1} − x_k)`,
    /// clamped to the window.
    pub fn at(&self, x: f64) -> UnitaryOperator {
        let t = ((x - self.x_start) / (self.x_end - self.x_start)).clamp(0.0, 1.0);
        UnitaryOperator::new_unchecked(self.path.nearest(t).matrix.clone())
    }
}

/// Damps the frame rotation `w` to the identity across the window, using
/// the homotopy controlled by `h_local` at budget `delta`.
pub fn glue_breakpoint(
    w: &UnitaryOperator,
    h_local: &HermitianOperator,
    window: (f64, f64),
    delta: f64,
) -> Result<GluedWindow> {
    if !window.0.is_finite() || !window.1.is_finite() || window.0 >= window.1 {
        return Err(Error::InvalidInput {
            context: format!("glue window [{}, {}] is empty", window.0, window.1),
        });
    }
    let commutator_in = commutator_norm(w.matrix(), h_local.matrix());
    let outcome = build_homotopy(h_local, w, delta, GLUE_SAMPLES_PER_STAGE)?;
    Ok(GluedWindow {
        x_start: window.0,
        x_end: window.1,
        commutator_in,
        path: outcome.retracted,
        certificate: outcome.certificate,
    })
}

fn align_nodes(
    field: &OperatorField,
    left: &SnappedNode,
    right: &SnappedNode,
    node: usize,
    window: (f64, f64),
    raw_gap: f64,
    epsilon: f64,
) -> Result<BreakpointRecord> {
    let matched = match_frames(
        &left.values,
        &left.frame,
        &right.values,
        &right.frame,
        field.fiber_dim(),
    )?;
    let h_local = HermitianOperator::from_diag(&left.values);
    // Two snaps plus the raw drift over the cell: the budget the damping
    // homotopy is entitled to.
    let budget = 2.0 * epsilon + raw_gap;
    let glued = glue_breakpoint(&matched.w, &h_local, window, budget)?;
    Ok(BreakpointRecord {
        node,
        max_gap: matched.max_gap,
        commutator_in: glued.commutator_in,
        glue: glued.certificate,
    })
}

/// Snaps every node to the lattice `εZ`, groups the spectra into ordered
/// blocks, and aligns the eigenframes across every node where the occupied
/// lattice pattern changes. Adjacent nodes further than `ε` apart are
/// reported as density violations; the result is then best effort.
pub fn stitch_field(field: &OperatorField, epsilon: f64) -> Result<StitchResult> {
    check_epsilon(epsilon)?;
    let nodes = field.nodes();
    let n = field.module_rank();
    let p = field.fiber_dim();

    let snapped: Vec<SnappedNode> = field
        .values()
        .iter()
        .map(|k| snap_node(k, epsilon))
        .collect();
    let max_snap_error = snapped.iter().map(|s| s.snap_error).fold(0.0, f64::max);

    let mut density_violations = Vec::new();
    let mut adjacent_gaps = Vec::with_capacity(nodes - 1);
    for j in 0..nodes - 1 {
        let gap = operator_norm(&field.values()[j + 1].matrix().sub(field.values()[j].matrix()));
        if gap >= epsilon {
            density_violations.push(DensityViolation {
                node: j,
                gap,
                limit: epsilon,
            });
        }
        adjacent_gaps.push(gap);
    }

    // Curves: per node, consecutive groups of p snapped eigenvalues. The
    // lattice pattern is constant between breakpoints, so each curve is a
    // staircase whose steps happen exactly at the breakpoints.
    let mut curves: Vec<Vec<HermitianOperator>> = vec![Vec::with_capacity(nodes); n];
    for s in &snapped {
        for (i, block) in group_values(&s.values, p)?.into_iter().enumerate() {
            curves[i].push(block);
        }
    }

    let mut breakpoints = Vec::new();
    let mut breakpoint_records = Vec::new();
    let mut jump_report = vec![0.0f64; n];
    for j in 0..nodes - 1 {
        if snapped[j].cells == snapped[j + 1].cells {
            continue;
        }
        breakpoints.push(j);
        record_jumps(&snapped[j], &snapped[j + 1], p, &mut jump_report);
        breakpoint_records.push(align_nodes(
            field,
            &snapped[j],
            &snapped[j + 1],
            j,
            (field.grid()[j], field.grid()[j + 1]),
            adjacent_gaps[j],
            epsilon,
        )?);
    }

    // Circle bases: the seam is one more junction. Its alignment is always
    // recorded; whatever mismatch the damping cannot null shows up in the
    // record, not silently in the curves.
    let seam = if field.base().kind == BaseKind::Circle {
        let last = nodes - 1;
        if snapped[last].cells != snapped[0].cells {
            breakpoints.push(last);
            record_jumps(&snapped[last], &snapped[0], p, &mut jump_report);
        }
        let seam_gap = field.seam_gap().unwrap_or(0.0);
        Some(align_nodes(
            field,
            &snapped[last],
            &snapped[0],
            last,
            (field.grid()[last - 1], field.grid()[last]),
            seam_gap,
            epsilon,
        )?)
    } else {
        None
    };

    let ordering_ok = ordering_holds(&snapped, p, epsilon);
    Ok(StitchResult {
        eigenvalues: EigenvalueField {
            curves,
            breakpoints,
            jump_report,
            ordering_ok,
        },
        epsilon,
        max_snap_error,
        density_violations,
        breakpoint_records,
        seam,
    })
}

fn record_jumps(left: &SnappedNode, right: &SnappedNode, p: usize, report: &mut [f64]) {
    for (i, slot) in report.iter_mut().enumerate() {
        let jump = (i * p..(i + 1) * p)
            .map(|l| (left.values[l] - right.values[l]).abs())
            .fold(0.0f64, f64::max);
        *slot = slot.max(jump);
    }
}

fn ordering_holds(snapped: &[SnappedNode], p: usize, epsilon: f64) -> bool {
    let scale = snapped
        .iter()
        .flat_map(|s| s.values.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(epsilon);
    let tol = ORDERING_TOL * scale;
    snapped.iter().all(|s| {
        s.values
            .chunks(p)
            .zip(s.values.chunks(p).skip(1))
            .all(|(hi, lo)| hi[p - 1] >= lo[0] - tol)
    })
}

/// Runs `stitch_field` at every tolerance of the schedule and measures how
/// much the curves move between consecutive passes. Every increment is
/// checked against `2C(ε_{m-1} + ε_m)^{1/4}`.
pub fn refine_field(
    field: &OperatorField,
    schedule: &RefinementSchedule,
) -> Result<RefinementOutcome> {
    schedule.validate()?;
    let c_constant = 6.0 + 96.0 * field.sup_norm().powf(1.5);
    let mut previous: Option<StitchResult> = None;
    let mut cauchy_deltas = Vec::new();
    let mut cauchy_bounds = Vec::new();
    let mut initial_density_violations = Vec::new();
    for m in 0..schedule.iterations {
        let current = stitch_field(field, schedule.epsilon(m))?;
        if m == 0 {
            initial_density_violations = current.density_violations.clone();
        }
        if let Some(prev) = &previous {
            let mut delta = 0.0f64;
            for (curve_now, curve_before) in current
                .eigenvalues
                .curves()
                .iter()
                .zip(prev.eigenvalues.curves())
            {
                for (a, b) in curve_now.iter().zip(curve_before) {
                    delta = delta.max(operator_norm(&a.matrix().sub(b.matrix())));
                }
            }
            cauchy_deltas.push(delta);
            let eps_sum = schedule.epsilon(m - 1) + schedule.epsilon(m);
            cauchy_bounds.push(2.0 * c_constant * eps_sum.sqrt().sqrt());
        }
        previous = Some(current);
    }
    let within_bounds = cauchy_deltas
        .iter()
        .zip(&cauchy_bounds)
        .all(|(d, b)| d <= b);
    Ok(RefinementOutcome {
        final_result: previous.expect("schedule has at least one iteration"),
        cauchy_deltas,
        cauchy_bounds,
        within_bounds,
        initial_density_violations,
    })
}
