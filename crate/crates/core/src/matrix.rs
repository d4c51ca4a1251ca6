//! Dense complex matrices and the validated operator wrappers used
//! throughout the toolkit.
//!
//! Storage is row-major `Vec<Complex64>`. Dimensions stay small (a few
//! hundred at most), so all kernels are straightforward dense loops.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance for accepting a matrix as unitary, measured on `U*U - I`.
pub const UNITARY_TOL: f64 = 1e-10;

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting wrong entry
    /// counts and non-finite values.
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix);
        }
        if entries.len() != rows * cols {
            return Err(Error::EntryCount {
                rows,
                cols,
                expected: rows * cols,
                got: entries.len(),
            });
        }
        let m = Self {
            rows,
            cols,
            entries,
        };
        m.check_finite()?;
        Ok(m)
    }

    pub(crate) fn raw(rows: usize, cols: usize, entries: Vec<Complex64>) -> Self {
        debug_assert_eq!(entries.len(), rows * cols);
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::raw(rows, cols, vec![Complex64::new(0.0, 0.0); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self::raw(rows, cols, entries)
    }

    /// Convenience constructor for tests and examples.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let cols = rows[0].len();
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "ragged row lengths".into(),
                });
            }
            entries.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, entries)
    }

    pub fn diag_complex(values: &[Complex64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let vals: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self::diag_complex(&vals)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Side length of a square matrix.
    pub fn dim(&self) -> usize {
        debug_assert!(self.is_square());
        self.rows
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn check_finite(&self) -> Result<()> {
        for (k, e) in self.entries.iter().enumerate() {
            if !e.re.is_finite() || !e.im.is_finite() {
                return Err(Error::NonFinite {
                    context: format!(
                        "entry ({}, {}) is {}",
                        k / self.cols,
                        k % self.cols,
                        e
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "matrix product dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    let v = out.get(i, j) + aik * rhs.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let entries = self
            .entries
            .iter()
            .zip(&rhs.entries)
            .map(|(a, b)| a + b)
            .collect();
        Self::raw(self.rows, self.cols, entries)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let entries = self
            .entries
            .iter()
            .zip(&rhs.entries)
            .map(|(a, b)| a - b)
            .collect();
        Self::raw(self.rows, self.cols, entries)
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        let entries = self.entries.iter().map(|a| a * factor).collect();
        Self::raw(self.rows, self.cols, entries)
    }

    pub fn scale_re(&self, factor: f64) -> Self {
        self.scale(Complex64::new(factor, 0.0))
    }

    /// `self + s * (rhs - self)`, exact at `s = 0`.
    pub fn lerp(&self, rhs: &Self, s: f64) -> Self {
        self.add(&rhs.sub(self).scale_re(s))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().map(|e| e.norm()).fold(0.0, f64::max)
    }

    /// `(M + M*) / 2`.
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square());
        self.add(&self.adjoint()).scale_re(0.5)
    }

    /// `(M - M*) / (2i)`, the Hermitian imaginary part.
    pub fn skew_part(&self) -> Self {
        assert!(self.is_square());
        self.sub(&self.adjoint())
            .scale(Complex64::new(0.0, -0.5))
    }

    /// Frobenius distance `‖M - M*‖_F`, the Hermitian defect.
    pub fn hermitian_defect(&self) -> f64 {
        self.sub(&self.adjoint()).frobenius_norm()
    }

    /// Frobenius norm of `M*M - I`.
    pub fn unitary_defect(&self) -> f64 {
        let n = self.dim();
        self.adjoint()
            .mul(self)
            .sub(&Self::identity(n))
            .frobenius_norm()
    }

    pub fn submatrix(
        &self,
        row_range: std::ops::Range<usize>,
        col_range: std::ops::Range<usize>,
    ) -> Self {
        assert!(row_range.end <= self.rows && col_range.end <= self.cols);
        let r0 = row_range.start;
        let c0 = col_range.start;
        Self::from_fn(row_range.len(), col_range.len(), |i, j| {
            self.get(r0 + i, c0 + j)
        })
    }

    pub fn set_block(&mut self, row0: usize, col0: usize, block: &Self) {
        assert!(row0 + block.rows <= self.rows && col0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.set(row0 + i, col0 + j, block.get(i, j));
            }
        }
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn from_columns(rows: usize, columns: &[Vec<Complex64>]) -> Self {
        let cols = columns.len();
        Self::from_fn(rows, cols, |i, j| columns[j][i])
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &Self) -> Self {
        Self::from_fn(self.rows * rhs.rows, self.cols * rhs.cols, |i, j| {
            self.get(i / rhs.rows, j / rhs.cols) * rhs.get(i % rhs.rows, j % rhs.cols)
        })
    }

    /// `F* M F`: expresses `M` in the frame given by the columns of `F`.
    pub fn into_frame(&self, frame: &Self) -> Self {
        frame.adjoint().mul(self).mul(frame)
    }

    /// `F M F*`: maps an in-frame matrix back to the original basis.
    pub fn from_frame(&self, frame: &Self) -> Self {
        frame.mul(self).mul(&frame.adjoint())
    }
}

impl std::fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        let shown = self.rows.min(8);
        for i in 0..shown {
            write!(f, "  ")?;
            for j in 0..self.cols.min(8) {
                let e = self.get(i, j);
                write!(f, "{:+.4e}{:+.4e}i  ", e.re, e.im)?;
            }
            writeln!(f)?;
        }
        if shown < self.rows {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

/// Square matrix validated to be Hermitian within a relative tolerance.
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    matrix: ComplexMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, HERMITIAN_TOL)
    }

    pub fn with_tolerance(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotSquare {
                rows: matrix.rows(),
                cols: matrix.cols(),
            });
        }
        let scale = matrix.frobenius_norm();
        let defect = matrix.hermitian_defect();
        if defect > tol * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotHermitian {
                defect,
                tol: tol * scale,
            });
        }
        Ok(Self { matrix })
    }

    pub fn from_diag(values: &[f64]) -> Self {
        Self {
            matrix: ComplexMatrix::diag_real(values),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Shifts by a real multiple of the identity.
    pub fn shift(&self, c: f64) -> Self {
        let n = self.dim();
        Self {
            matrix: self
                .matrix
                .add(&ComplexMatrix::identity(n).scale_re(c)),
        }
    }
}

/// Square matrix validated to be unitary within `UNITARY_TOL`.
#[derive(Clone, Debug)]
pub struct UnitaryOperator {
    matrix: ComplexMatrix,
}

impl UnitaryOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, UNITARY_TOL)
    }

    pub fn with_tolerance(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotSquare {
                rows: matrix.rows(),
                cols: matrix.cols(),
            });
        }
        let defect = matrix.unitary_defect();
        if defect > tol {
            return Err(Error::NotUnitary { defect, tol });
        }
        Ok(Self { matrix })
    }

    pub(crate) fn new_unchecked(matrix: ComplexMatrix) -> Self {
        debug_assert!(matrix.unitary_defect() <= 1e-8);
        Self { matrix }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(n),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
        }
    }
}

/// Eigenvalues sorted non-increasing, with the matching orthonormal frame.
///
/// Column `k` of `frame` is the eigenvector for `values[k]`; each column is
/// phase-normalized so its first coordinate of modulus above `1e-12` is real
/// and positive.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    values: Vec<f64>,
    frame: UnitaryOperator,
}

impl EigenDecomposition {
    pub(crate) fn new(values: Vec<f64>, frame: UnitaryOperator) -> Self {
        debug_assert_eq!(values.len(), frame.dim());
        debug_assert!(values.windows(2).all(|w| w[0] >= w[1]));
        Self { values, frame }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self) -> &UnitaryOperator {
        &self.frame
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Rebuilds `V diag(values) V*`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        ComplexMatrix::diag_real(&self.values).from_frame(self.frame.matrix())
    }

    /// Rebuilds with substituted eigenvalues, keeping the frame.
    pub fn reconstruct_with(&self, values: &[f64]) -> ComplexMatrix {
        assert_eq!(values.len(), self.values.len());
        ComplexMatrix::diag_real(values).from_frame(self.frame.matrix())
    }
}
