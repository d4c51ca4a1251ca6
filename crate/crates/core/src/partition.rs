//! Spectral partitions: grouping the eigenvalues of a Hermitian operator
//! into coarse cells of width `δ^{1/4}` and snapping them onto a fine grid
//! of pitch `δ`, with the spectral projections realized as explicit frames.

use crate::error::{Error, Result};
use crate::linalg::hermitian_eigen;
use crate::matrix::{ComplexMatrix, EigenDecomposition, HermitianOperator};

/// One coarse cell with the eigenvalues that landed in it.
///
/// Segments are reported in ascending spectral order: `interval.0` of
/// segment `k+1` is at least `interval.1` of segment `k`.
#[derive(Clone, Debug)]
pub struct CoarseSegment {
    /// Half-open cell `[lo, hi)`; the top eigenvalue folds into the last
    /// cell, which is treated as closed.
    pub interval: (f64, f64),
    /// Cell midpoint `μ_k`.
    pub midpoint: f64,
    /// Member eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Column range in the ascending partition frame.
    pub range: std::ops::Range<usize>,
    /// Position of this cell in the raw subdivision, before empty cells
    /// are dropped.
    pub cell_index: usize,
}

impl CoarseSegment {
    pub fn multiplicity(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// One fine cell: a grid interval of length `δ` with its midpoint.
#[derive(Clone, Debug)]
pub struct FineSegment {
    pub interval: (f64, f64),
    pub midpoint: f64,
    pub multiplicity: usize,
}

/// Column ranges of a block-diagonal structure in some fixed frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockMap {
    pub ranges: Vec<std::ops::Range<usize>>,
}

impl BlockMap {
    pub fn total(&self) -> usize {
        self.ranges.iter().map(|r| r.len()).sum()
    }
}

/// Snap of a Hermitian operator onto the fine grid: same frame, each
/// eigenvalue replaced by the midpoint of the nearest occupied fine cell.
#[derive(Clone, Debug)]
pub struct SnappedOperator {
    pub operator: HermitianOperator,
    /// Snapped eigenvalue per original eigenvalue, descending order.
    pub snapped_values: Vec<f64>,
    /// The largest snap distance, an upper bound on `‖h - h̄‖`.
    pub shift: f64,
}

/// Coarse and fine partition of the spectrum of one Hermitian operator.
#[derive(Clone, Debug)]
pub struct SpectralPartition {
    delta: f64,
    coarse_width: f64,
    eigen: EigenDecomposition,
    coarse: Vec<CoarseSegment>,
    fine: Vec<FineSegment>,
    separated: Vec<bool>,
}

fn cell_of(x: f64, anchor: f64, width: f64, cells: usize) -> usize {
    let raw = ((x - anchor) / width).floor();
    let idx = if raw < 0.0 { 0 } else { raw as usize };
    idx.min(cells - 1)
}

fn cell_count(span: f64, width: f64) -> usize {
    let k = (span / width).ceil();
    if k < 1.0 {
        1
    } else {
        k as usize
    }
}

/// Builds the partition for `h` at commutator scale `delta`.
///
/// Coarse cells have width `delta^{1/4}` and start at the bottom
/// eigenvalue; an eigenvalue on a cell boundary joins the upper cell and
/// the top eigenvalue folds into the final cell. Fine cells have width
/// `delta` and are shifted down half a pitch, so the bottom eigenvalue
/// sits at a cell midpoint and every snap stays within `delta / 2`.
pub fn build_partition(h: &HermitianOperator, delta: f64) -> Result<SpectralPartition> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::NonPositiveParameter {
            name: "delta",
            value: delta,
        });
    }
    let eigen = hermitian_eigen(h);
    let mut ascending: Vec<f64> = eigen.values().to_vec();
    ascending.reverse();
    let lo = ascending[0];
    let hi = *ascending.last().unwrap();
    let width = delta.sqrt().sqrt();

    // Eigen columns are stored descending; walk them ascending so the
    // segment ranges index ascending blocks of the reordered frame. The
    // cell map is monotone over sorted values, so occupied cells arrive as
    // contiguous runs; empty cells between them need no storage (the fine
    // grid has ~span/δ cells, far too many to materialize).
    let coarse_cells = cell_count(hi - lo, width);
    let mut coarse: Vec<CoarseSegment> = Vec::new();
    for (pos, &x) in ascending.iter().enumerate() {
        let j = cell_of(x, lo, width, coarse_cells);
        if let Some(last) = coarse.last_mut() {
            if last.cell_index == j {
                last.eigenvalues.push(x);
                last.range.end = pos + 1;
                continue;
            }
        }
        let a = lo + j as f64 * width;
        coarse.push(CoarseSegment {
            interval: (a, a + width),
            midpoint: a + width / 2.0,
            eigenvalues: vec![x],
            range: pos..pos + 1,
            cell_index: j,
        });
    }

    // μ_{k+1} - μ_k > width holds exactly when at least one raw cell
    // between the two kept cells is empty; the integer form is immune to
    // rounding in the midpoints.
    let separated = coarse
        .windows(2)
        .map(|w| w[1].cell_index - w[0].cell_index >= 2)
        .collect();

    let fine_anchor = lo - delta / 2.0;
    let fine_cells = cell_count(hi - fine_anchor, delta);
    let mut fine: Vec<FineSegment> = Vec::new();
    let mut last_cell = None;
    for &x in &ascending {
        let j = cell_of(x, fine_anchor, delta, fine_cells);
        if last_cell == Some(j) {
            fine.last_mut().unwrap().multiplicity += 1;
        } else {
            let a = fine_anchor + j as f64 * delta;
            fine.push(FineSegment {
                interval: (a, a + delta),
                midpoint: a + delta / 2.0,
                multiplicity: 1,
            });
            last_cell = Some(j);
        }
    }

    Ok(SpectralPartition {
        delta,
        coarse_width: width,
        eigen,
        coarse,
        fine,
        separated,
    })
}

impl SpectralPartition {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Coarse cell width `delta^{1/4}`.
    pub fn coarse_width(&self) -> f64 {
        self.coarse_width
    }

    pub fn dim(&self) -> usize {
        self.eigen.dim()
    }

    /// Largest eigenvalue magnitude of the source operator.
    pub fn h_norm(&self) -> f64 {
        self.eigen
            .values()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn coarse_segments(&self) -> &[CoarseSegment] {
        &self.coarse
    }

    pub fn fine_segments(&self) -> &[FineSegment] {
        &self.fine
    }

    /// `separated_flags()[k]`: the midpoint gap between coarse segments
    /// `k` and `k+1` exceeds one cell width, so the spectrum has a lacuna
    /// there and no rotation is needed between the two blocks.
    pub fn separated_flags(&self) -> &[bool] {
        &self.separated
    }

    /// Source eigendecomposition (values descending).
    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eigen
    }

    /// Frame whose column blocks list the coarse segments in ascending
    /// spectral order; columns within a block ascend too.
    pub fn ascending_frame(&self) -> ComplexMatrix {
        let f = self.eigen.frame().matrix();
        let n = self.dim();
        // Eigen frame is descending; reversing columns makes it ascending.
        let cols: Vec<_> = (0..n).map(|j| f.column(n - 1 - j)).collect();
        ComplexMatrix::from_columns(n, &cols)
    }

    /// Spectral projection onto coarse segment `k`.
    pub fn projection(&self, k: usize) -> ComplexMatrix {
        let frame = self.ascending_frame();
        let n = self.dim();
        let range = self.coarse[k].range.clone();
        let block = frame.submatrix(0..n, range);
        block.mul(&block.adjoint())
    }

    /// Column ranges of the coarse blocks in the ascending frame.
    pub fn block_structure(&self) -> BlockMap {
        BlockMap {
            ranges: self.coarse.iter().map(|s| s.range.clone()).collect(),
        }
    }

    /// Replaces every eigenvalue by the midpoint of its fine cell,
    /// keeping the eigenframe. The result commutes with every spectral
    /// projection of `h` and moves the operator by at most `delta / 2`.
    pub fn snap_to_fine(&self) -> Result<SnappedOperator> {
        let mut snapped = Vec::with_capacity(self.dim());
        let mut shift = 0.0f64;
        for &v in self.eigen.values() {
            let mut best = f64::NAN;
            let mut best_d = f64::INFINITY;
            for seg in &self.fine {
                let d = (v - seg.midpoint).abs();
                if d < best_d {
                    best_d = d;
                    best = seg.midpoint;
                }
            }
            shift = shift.max(best_d);
            snapped.push(best);
        }
        let matrix = self.eigen.reconstruct_with(&snapped);
        Ok(SnappedOperator {
            operator: HermitianOperator::new(matrix.hermitian_part())?,
            snapped_values: snapped,
            shift,
        })
    }
}
