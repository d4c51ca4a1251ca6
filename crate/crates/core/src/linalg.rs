//! Deterministic dense kernels: Hermitian eigendecomposition, singular
//! values, the unitary polar factor, and geodesics on the unitary group.
//!
//! Everything here is plain cyclic elimination with fixed sweep order and
//! fixed tie-breaking, so identical inputs always produce identical output
//! bits. No randomized pivoting, no workspace-dependent branching.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, EigenDecomposition, HermitianOperator, UnitaryOperator};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Off-diagonal mass threshold, relative to the Frobenius norm of the input.
const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Columns with modulus below this never anchor a phase normalization.
const PHASE_FLOOR: f64 = 1e-12;

/// Eigendecomposition of a Hermitian operator by cyclic Jacobi rotations.
///
/// Eigenvalues come back sorted non-increasing. Ties are broken by
/// lexicographic order on the phase-normalized eigenvectors, so the result
/// is a deterministic function of the input entries.
pub fn hermitian_eigen(h: &HermitianOperator) -> EigenDecomposition {
    // Work on the exact Hermitian part; the wrapper allows a tiny defect.
    let (values, vectors) = jacobi(&h.matrix().hermitian_part());
    sort_eigenpairs(values, vectors)
}

/// Largest singular value of `a` (any shape).
pub fn operator_norm(a: &ComplexMatrix) -> f64 {
    let gram = a.adjoint().mul(a);
    let herm = HermitianOperator::with_tolerance(gram.hermitian_part(), 1.0)
        .expect("gram matrix is square");
    let eig = hermitian_eigen(&herm);
    eig.values().first().map_or(0.0, |&l| l.max(0.0).sqrt())
}

/// Singular values of a square matrix, sorted non-increasing.
pub fn singular_values(a: &ComplexMatrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let gram = a.adjoint().mul(a).hermitian_part();
    let herm = HermitianOperator::with_tolerance(gram, 1.0).expect("gram matrix is square");
    let eig = hermitian_eigen(&herm);
    Ok(eig.values().iter().map(|&l| l.max(0.0).sqrt()).collect())
}

/// Distance from a square matrix to the unitary group, `max_i |σ_i - 1|`.
pub fn dist_to_unitary(a: &ComplexMatrix) -> Result<f64> {
    let sv = singular_values(a)?;
    Ok(sv.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max))
}

/// Commutator `ab - ba`.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.mul(b).sub(&b.mul(a))
}

/// `‖[a, b]‖` in operator norm.
pub fn commutator_norm(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    operator_norm(&commutator(a, b))
}

/// Full singular value decomposition `a = U diag(σ) V*` of a square matrix.
///
/// Left vectors for numerically vanishing singular values are completed
/// deterministically by orthonormalizing standard basis vectors.
pub(crate) fn svd_square(a: &ComplexMatrix) -> Result<(ComplexMatrix, Vec<f64>, ComplexMatrix)> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.dim();
    let gram = a.adjoint().mul(a).hermitian_part();
    let herm = HermitianOperator::with_tolerance(gram, 1.0).expect("gram matrix is square");
    let eig = hermitian_eigen(&herm);
    let sigma: Vec<f64> = eig.values().iter().map(|&l| l.max(0.0).sqrt()).collect();
    let v = eig.frame().matrix().clone();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let floor = smax * 1e-13;

    // Candidate left vectors A v_i / σ_i; deficient directions are left for
    // the completion pass.
    let mut candidates: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let av = a.mul(&v);
    for (i, &s) in sigma.iter().enumerate() {
        if s > floor && s > 0.0 {
            let col = av.column(i).iter().map(|e| e / s).collect();
            candidates.push(col);
        } else {
            candidates.push(vec![ZERO; n]);
        }
    }
    let u = orthonormalize_with_completion(n, candidates);
    Ok((u, sigma, v))
}

/// Modified Gram-Schmidt with deterministic completion: a candidate whose
/// residual drops below 1/2 is replaced by the first standard basis vector
/// that keeps a residual of at least 1/2.
fn orthonormalize_with_completion(n: usize, candidates: Vec<Vec<Complex64>>) -> ComplexMatrix {
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for cand in candidates {
        let mut w = cand;
        project_out(&basis, &mut w);
        project_out(&basis, &mut w);
        let norm = vec_norm(&w);
        if norm >= 0.5 {
            basis.push(vec_scaled(&w, 1.0 / norm));
            continue;
        }
        let mut replaced = false;
        for k in 0..n {
            let mut e: Vec<Complex64> = vec![ZERO; n];
            e[k] = ONE;
            project_out(&basis, &mut e);
            project_out(&basis, &mut e);
            let en = vec_norm(&e);
            if en >= 0.5 {
                basis.push(vec_scaled(&e, 1.0 / en));
                replaced = true;
                break;
            }
        }
        debug_assert!(replaced, "completion always succeeds below dimension");
    }
    ComplexMatrix::from_columns(n, &basis)
}

fn project_out(basis: &[Vec<Complex64>], w: &mut [Complex64]) {
    for b in basis {
        let coeff: Complex64 = b
            .iter()
            .zip(w.iter())
            .map(|(bi, wi)| bi.conj() * wi)
            .sum();
        for (wi, bi) in w.iter_mut().zip(b.iter()) {
            *wi -= coeff * bi;
        }
    }
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|e| e.norm_sqr()).sum::<f64>().sqrt()
}

fn vec_scaled(v: &[Complex64], s: f64) -> Vec<Complex64> {
    v.iter().map(|e| e * s).collect()
}

/// Unitary factor of the polar decomposition.
///
/// Singular values below `regularization` are lifted to it before the
/// factor is extracted; the factor itself is unchanged whenever `a` is
/// invertible, so the lift only decides behavior near singularity. A
/// numerically singular `a` with zero regularization is an error naming the
/// offending singular value.
pub fn polar_unitary(a: &ComplexMatrix, regularization: f64) -> Result<UnitaryOperator> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if regularization < 0.0 {
        return Err(Error::NegativeParameter {
            name: "regularization",
            value: regularization,
        });
    }
    let n = a.dim();
    let gram = a.adjoint().mul(a).hermitian_part();
    let herm = HermitianOperator::with_tolerance(gram, 1.0).expect("gram matrix is square");
    let eig = hermitian_eigen(&herm);
    let sigma: Vec<f64> = eig.values().iter().map(|&l| l.max(0.0).sqrt()).collect();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let floor = smax * 1e-13;

    let mut lifted = Vec::with_capacity(n);
    for (i, &s) in sigma.iter().enumerate() {
        let l = s.max(regularization);
        if l <= 0.0 {
            return Err(Error::SingularMatrix { index: i, value: s });
        }
        lifted.push(l);
    }

    let deficient = sigma.iter().any(|&s| s <= floor);
    if deficient && regularization == 0.0 {
        let (index, &value) = sigma
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        return Err(Error::SingularMatrix { index, value });
    }

    let v = eig.frame().matrix();
    let w0 = if deficient {
        // Rank-deficient: build explicit left vectors with completion.
        let av = a.mul(v);
        let mut candidates = Vec::with_capacity(n);
        for (i, (&s, &l)) in sigma.iter().zip(&lifted).enumerate() {
            if s > floor {
                candidates.push(av.column(i).iter().map(|e| e / l).collect());
            } else {
                // Dead direction: seed with its right singular vector, so
                // the factor acts as the identity there (polar(0) = 1).
                candidates.push(v.column(i));
            }
        }
        let u = orthonormalize_with_completion(n, candidates);
        u.mul(&v.adjoint())
    } else {
        // W = A (A*A)^{-1/2}, with the inverse square root through the
        // lifted singular values.
        let inv: Vec<f64> = lifted.iter().map(|&l| 1.0 / l).collect();
        let m = ComplexMatrix::diag_real(&inv).from_frame(v);
        a.mul(&m)
    };
    let polished = newton_schulz_polish(w0);
    Ok(UnitaryOperator::new_unchecked(polished))
}

/// Unitary factor with the default regularization `1e-12 * ‖a‖`.
pub fn polar_unitary_auto(a: &ComplexMatrix) -> Result<UnitaryOperator> {
    let reg = 1e-12 * operator_norm(a);
    polar_unitary(a, reg)
}

/// Newton-Schulz iteration `X <- X (3I - X*X) / 2`, contracting all
/// singular values to 1. Converges for any starting point with singular
/// values in (0, sqrt(3)).
fn newton_schulz_polish(mut x: ComplexMatrix) -> ComplexMatrix {
    let n = x.dim();
    let id = ComplexMatrix::identity(n);
    for _ in 0..60 {
        let gram = x.adjoint().mul(&x);
        let err = gram.sub(&id).frobenius_norm();
        if err <= 1e-14 {
            break;
        }
        let corr = id.scale_re(3.0).sub(&gram);
        x = x.mul(&corr).scale_re(0.5);
    }
    x
}

/// Applies a real function to a Hermitian matrix through its
/// eigendecomposition.
pub fn hermitian_function(h: &HermitianOperator, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let eig = hermitian_eigen(h);
    let mapped: Vec<f64> = eig.values().iter().map(|&l| f(l)).collect();
    eig.reconstruct_with(&mapped)
}

/// `exp(i t H)` for Hermitian `H`.
pub fn exp_i_hermitian(h: &HermitianOperator, t: f64) -> UnitaryOperator {
    let eig = hermitian_eigen(h);
    let phases: Vec<Complex64> = eig
        .values()
        .iter()
        .map(|&l| Complex64::from_polar(1.0, t * l))
        .collect();
    let m = ComplexMatrix::diag_complex(&phases).from_frame(eig.frame().matrix());
    UnitaryOperator::new_unchecked(m)
}

/// Eigenphases in `(-π, π]` and the diagonalizing frame of a unitary,
/// precomputed once so the geodesic can be sampled cheaply.
///
/// The eigenbasis is found by diagonalizing the Hermitian real part
/// `(U + U*)/2` and splitting any cosine clusters with the imaginary part
/// `(U - U*)/(2i)`; phases come from Rayleigh quotients, with the branch at
/// exactly π assigned +π.
#[derive(Clone, Debug)]
pub struct UnitaryGeodesic {
    phases: Vec<f64>,
    frame: ComplexMatrix,
}

/// Cosine gap below which two eigenvalue groups of the real part are
/// co-diagonalized through the imaginary part.
const PHASE_CLUSTER_TOL: f64 = 1e-8;

impl UnitaryGeodesic {
    pub fn new(u: &UnitaryOperator) -> Self {
        let m = u.matrix();
        let n = m.dim();
        let h1 = m.hermitian_part();
        let h2 = m.skew_part();
        let h1_op =
            HermitianOperator::with_tolerance(h1.clone(), 1.0).expect("real part is Hermitian");
        let eig1 = hermitian_eigen(&h1_op);

        // Columns of the common eigenframe, cluster by cluster.
        let mut columns: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        let vals = eig1.values();
        let frame1 = eig1.frame().matrix();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && vals[end - 1] - vals[end] < PHASE_CLUSTER_TOL {
                end += 1;
            }
            if end - start == 1 {
                columns.push(frame1.column(start));
            } else {
                let q = frame1.submatrix(0..n, start..end);
                let compressed = h2.into_frame(&q).hermitian_part();
                let sub = HermitianOperator::with_tolerance(compressed, 1.0)
                    .expect("compression is Hermitian");
                let sub_eig = hermitian_eigen(&sub);
                let mixed = q.mul(sub_eig.frame().matrix());
                for j in 0..(end - start) {
                    columns.push(mixed.column(j));
                }
            }
            start = end;
        }

        // Rayleigh quotients give the phases; they are quadratically
        // insensitive to residual mixing in the vectors.
        let mut pairs: Vec<(f64, Vec<Complex64>)> = columns
            .into_iter()
            .map(|col| {
                let c = rayleigh(&h1, &col);
                let s = rayleigh(&h2, &col);
                let mut theta = s.atan2(c);
                if theta == -std::f64::consts::PI {
                    theta = std::f64::consts::PI;
                }
                (theta, col)
            })
            .collect();
        pairs.sort_by(|a, b| match b.0.total_cmp(&a.0) {
            std::cmp::Ordering::Equal => lex_cmp(&a.1, &b.1),
            other => other,
        });
        let phases: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let cols: Vec<Vec<Complex64>> = pairs.into_iter().map(|p| p.1).collect();
        let frame = ComplexMatrix::from_columns(n, &cols);
        Self { phases, frame }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// `exp(t log U)`: identity at `t = 0`, the original unitary at `t = 1`.
    pub fn at(&self, t: f64) -> UnitaryOperator {
        let diag: Vec<Complex64> = self
            .phases
            .iter()
            .map(|&p| Complex64::from_polar(1.0, t * p))
            .collect();
        let m = ComplexMatrix::diag_complex(&diag).from_frame(&self.frame);
        UnitaryOperator::new_unchecked(m)
    }
}

/// Point on the geodesic `exp(t log U)` from the identity to `U`.
pub fn unitary_geodesic(u: &UnitaryOperator, t: f64) -> UnitaryOperator {
    UnitaryGeodesic::new(u).at(t)
}

fn rayleigh(h: &ComplexMatrix, v: &[Complex64]) -> f64 {
    let n = h.dim();
    let mut acc = ZERO;
    for i in 0..n {
        let mut hv = ZERO;
        for j in 0..n {
            hv += h.get(i, j) * v[j];
        }
        acc += v[i].conj() * hv;
    }
    acc.re
}

fn lex_cmp(a: &[Complex64], b: &[Complex64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.re.total_cmp(&y.re) {
            std::cmp::Ordering::Equal => {}
            other => return other,
        }
        match x.im.total_cmp(&y.im) {
            std::cmp::Ordering::Equal => {}
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Cyclic Jacobi sweeps on a Hermitian matrix. Returns the raw diagonal
/// and the accumulated rotation frame, unsorted.
fn jacobi(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = h.dim();
    let mut a = h.clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm();
    if scale == 0.0 || n == 1 {
        let diag = (0..n).map(|i| a.get(i, i).re).collect();
        return (diag, v);
    }
    let target = JACOBI_TOL * scale;

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_mass(&a) <= target {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a.get(p, q);
                let rho = apq.norm();
                if rho <= f64::MIN_POSITIVE {
                    a.set(p, q, ZERO);
                    a.set(q, p, ZERO);
                    continue;
                }
                // Phase that makes the pivot real, then a real rotation
                // zeroing it (closest-to-identity branch).
                let ephi = apq / rho;
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                let tau = (aqq - app) / (2.0 * rho);
                let t = if tau.abs() > 1e150 {
                    1.0 / (2.0 * tau)
                } else {
                    let sign = if tau >= 0.0 { 1.0 } else { -1.0 };
                    sign / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                apply_rotation(&mut a, &mut v, p, q, c, s, ephi);
            }
        }
    }

    let diag = (0..n).map(|i| a.get(i, i).re).collect();
    (diag, v)
}

/// Applies the congruence `A <- J* A J` and accumulates `V <- V J`, where
/// `J` differs from the identity only at rows/columns `p`, `q`:
/// `J[p][p] = c`, `J[p][q] = s`, `J[q][p] = -s e^{-iφ}`, `J[q][q] = c e^{-iφ}`.
fn apply_rotation(
    a: &mut ComplexMatrix,
    v: &mut ComplexMatrix,
    p: usize,
    q: usize,
    c: f64,
    s: f64,
    ephi: Complex64,
) {
    let n = a.dim();
    let ephi_conj = ephi.conj();

    // Right multiplication acting on columns p, q.
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, akp * c - akq * (s * ephi_conj));
        a.set(k, q, akp * s + akq * (c * ephi_conj));
    }
    // Left multiplication by J* acting on rows p, q.
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, apk * c - aqk * (s * ephi));
        a.set(q, k, apk * s + aqk * (c * ephi));
    }
    // Clean up the pivot pair and keep the diagonal exactly real.
    a.set(p, q, ZERO);
    a.set(q, p, ZERO);
    let dp = a.get(p, p);
    let dq = a.get(q, q);
    a.set(p, p, Complex64::new(dp.re, 0.0));
    a.set(q, q, Complex64::new(dq.re, 0.0));

    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, vkp * c - vkq * (s * ephi_conj));
        v.set(k, q, vkp * s + vkq * (c * ephi_conj));
    }
}

fn off_diagonal_mass(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a.get(i, j).norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Sorts eigenpairs non-increasing by value, phase-normalizes each vector,
/// and breaks exact value ties lexicographically on the vectors.
fn sort_eigenpairs(values: Vec<f64>, vectors: ComplexMatrix) -> EigenDecomposition {
    let n = values.len();
    let mut cols: Vec<(f64, Vec<Complex64>)> = (0..n)
        .map(|j| {
            let mut col = vectors.column(j);
            phase_normalize(&mut col);
            (values[j], col)
        })
        .collect();
    cols.sort_by(|a, b| match b.0.total_cmp(&a.0) {
        std::cmp::Ordering::Equal => lex_cmp(&a.1, &b.1),
        other => other,
    });
    let sorted_values: Vec<f64> = cols.iter().map(|c| c.0).collect();
    let columns: Vec<Vec<Complex64>> = cols.into_iter().map(|c| c.1).collect();
    let frame = ComplexMatrix::from_columns(n, &columns);
    EigenDecomposition::new(sorted_values, UnitaryOperator::new_unchecked(frame))
}

fn phase_normalize(col: &mut [Complex64]) {
    for e in col.iter() {
        let r = e.norm();
        if r > PHASE_FLOOR {
            let phase = e.conj() / r;
            for x in col.iter_mut() {
                *x *= phase;
            }
            return;
        }
    }
}
