//! Dense complex linear algebra for small joint quantum systems.
//!
//! Everything targets joint dimensions of at most a few hundred: dense
//! row-major storage, double precision, and a deterministic cyclic Jacobi
//! eigensolver so repeated runs give identical results. No sparsity, no
//! GPU, no arbitrary precision.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hermiticity tolerance for matrices that claim to be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Input rejection threshold for the eigensolver.
const EIG_REJECT_TOL: f64 = 1e-8;
/// Norm tolerance for pure states.
const STATE_NORM_TOL: f64 = 1e-12;
/// Trace tolerance for density matrices.
const DENSITY_TRACE_TOL: f64 = 1e-10;
/// Eigenvalue floor for positive semidefiniteness checks.
const PSD_TOL: f64 = 1e-10;

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl std::fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self.get(i, j);
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// 2x2 matrix from row-major entries, a convenience for qubit operators.
    pub fn two_by_two(entries: [Complex64; 4]) -> Self {
        Self {
            rows: 2,
            cols: 2,
            data: entries.to_vec(),
        }
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.get(k, j);
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
        out
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        for a in &mut out.data {
            *a *= factor;
        }
        out
    }

    pub fn scaled_re(&self, factor: f64) -> Self {
        self.scaled(Complex64::new(factor, 0.0))
    }

    /// In-place `self += factor * rhs`, the hot path when assembling
    /// operator sums.
    pub fn add_scaled_in_place(&mut self, rhs: &Self, factor: f64) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b * factor;
        }
    }

    pub fn trace(&self) -> Complex64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    /// Re(Tr(self * rhs)) without forming the product.
    pub fn trace_product_re(&self, rhs: &Self) -> f64 {
        assert_eq!(self.cols, rhs.rows);
        assert_eq!(self.rows, rhs.cols);
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                let b = rhs.get(j, i);
                acc += a.re * b.re - a.im * b.im;
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise deviation from `self = self†`.
    pub fn hermiticity_residual(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                let d = (self.get(i, j) - self.get(j, i).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.hermiticity_residual() <= tol
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn kron(&self, rhs: &Self) -> Self {
        kron(self, rhs)
    }
}

/// Kronecker product; output dimensions are the entrywise products.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(a.rows * b.rows, a.cols * b.cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let f = a.get(i, j);
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out.set(i * b.rows + k, j * b.cols + l, f * b.get(k, l));
                }
            }
        }
    }
    out
}

/// Kronecker product of a sequence of factors, left to right.
pub fn kron_all(factors: &[&ComplexMatrix]) -> ComplexMatrix {
    assert!(!factors.is_empty());
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc = kron(&acc, f);
    }
    acc
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues descending,
/// orthonormal eigenvectors as matching columns.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEig {
    /// Projector onto the span of the top `t` eigenvectors.
    pub fn top_projector(&self, t: usize) -> ComplexMatrix {
        let n = self.vectors.rows();
        let mut p = ComplexMatrix::zeros(n, n);
        for k in 0..t.min(self.values.len()) {
            for i in 0..n {
                let vi = self.vectors.get(i, k);
                for j in 0..n {
                    let vj = self.vectors.get(j, k).conj();
                    let cur = p.get(i, j);
                    p.set(i, j, cur + vi * vj);
                }
            }
        }
        p
    }

    pub fn eigenvector(&self, k: usize) -> Vec<Complex64> {
        (0..self.vectors.rows()).map(|i| self.vectors.get(i, k)).collect()
    }
}

/// Eigendecompose a Hermitian matrix with a cyclic complex Jacobi sweep.
///
/// The sweep order is fixed (row-major over the upper triangle), so the
/// result is reproducible. Rejects inputs whose Hermiticity residual
/// exceeds 1e-8. The ordering of eigenvectors inside a degenerate block
/// is unspecified; callers must not rely on it.
pub fn hermitian_eig(m: &ComplexMatrix) -> Result<HermitianEig> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let residual = m.hermiticity_residual();
    if residual > EIG_REJECT_TOL {
        return Err(Error::NotHermitian { residual });
    }

    let n = m.rows();
    // Work on the exactly-Hermitian part so rounding in the input cannot
    // leak into the rotations.
    let mut a = ComplexMatrix::from_fn(n, n, |i, j| {
        (m.get(i, j) + m.get(j, i).conj()) * 0.5
    });
    let mut v = ComplexMatrix::identity(n);

    let scale = a.frobenius_norm().max(1.0);
    let off_tol = 1e-12 * scale;
    const MAX_SWEEPS: usize = 100;

    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * a.get(p, q).norm_sqr();
            }
        }
        if off.sqrt() <= off_tol {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                let r = apq.norm();
                if r <= f64::MIN_POSITIVE {
                    continue;
                }
                let phase = apq / r; // e^{i theta}
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Unitary U: U[p][p]=c, U[p][q]=s, U[q][p]=-s*conj(phase),
                // U[q][q]=c*conj(phase). Apply A <- U† A U, V <- V U.
                let upp = Complex64::new(c, 0.0);
                let upq = Complex64::new(s, 0.0);
                let uqp = -phase.conj() * s;
                let uqq = phase.conj() * c;

                // Columns p,q of A.
                for i in 0..n {
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set(i, p, aip * upp + aiq * uqp);
                    a.set(i, q, aip * upq + aiq * uqq);
                }
                // Rows p,q of A (multiply by U† on the left).
                for j in 0..n {
                    let apj = a.get(p, j);
                    let aqj = a.get(q, j);
                    a.set(p, j, apj * upp.conj() + aqj * uqp.conj());
                    a.set(q, j, apj * upq.conj() + aqj * uqq.conj());
                }
                // Accumulate eigenvectors.
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, vip * upp + viq * uqp);
                    v.set(i, q, vip * upq + viq * uqq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i).re).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());

    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, k| v.get(i, order[k]));
    Ok(HermitianEig { values, vectors })
}

/// Partial trace over every subsystem except `keep`.
///
/// `m` acts on the tensor product of `dims`; the result acts on subsystem
/// `keep` alone and satisfies Tr(K * out) = Tr((... ⊗ K ⊗ ...) * m) for
/// operators K embedded at that slot with identities elsewhere.
pub fn partial_trace_keeping(m: &ComplexMatrix, dims: &[usize], keep: usize) -> ComplexMatrix {
    let total: usize = dims.iter().product();
    assert_eq!(m.rows(), total, "partial trace dimension mismatch");
    assert!(keep < dims.len());
    let d = dims[keep];
    let stride_after: usize = dims[keep + 1..].iter().product();
    let pre_count: usize = dims[..keep].iter().product();

    let mut out = ComplexMatrix::zeros(d, d);
    for pre in 0..pre_count {
        for post in 0..stride_after {
            for t in 0..d {
                let row = (pre * d + t) * stride_after + post;
                for s in 0..d {
                    let col = (pre * d + s) * stride_after + post;
                    let cur = out.get(t, s);
                    out.set(t, s, cur + m.get(row, col));
                }
            }
        }
    }
    out
}

/// Normalised pure state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: Vec<Complex64>,
}

impl PureState {
    /// Requires the l2 norm to be 1 within 1e-12.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidState("empty amplitude vector".into()));
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > STATE_NORM_TOL {
            return Err(Error::InvalidState(format!(
                "norm {norm} deviates from 1 by more than {STATE_NORM_TOL:.0e}"
            )));
        }
        Ok(Self { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, i: usize) -> Complex64 {
        self.amplitudes[i]
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Complex64 {
        assert_eq!(self.dim(), other.dim());
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Rank-1 projector |self⟩⟨self|.
    pub fn outer(&self) -> ComplexMatrix {
        let n = self.dim();
        ComplexMatrix::from_fn(n, n, |i, j| {
            self.amplitudes[i] * self.amplitudes[j].conj()
        })
    }
}

/// n-qubit GHZ-type state (|0...0⟩ + e^{i phase}|1...1⟩)/√2.
pub fn ghz_state(n: usize, phase: f64) -> Result<PureState> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "GHZ state needs at least 2 parties, got {n}"
        )));
    }
    let dim = 1usize << n;
    let mut amps = vec![Complex64::new(0.0, 0.0); dim];
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    amps[0] = Complex64::new(inv_sqrt2, 0.0);
    amps[dim - 1] = Complex64::from_polar(inv_sqrt2, phase);
    PureState::new(amps)
}

/// Density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidDensity("matrix is not square".into()));
        }
        let herm = matrix.hermiticity_residual();
        if herm > DENSITY_TRACE_TOL {
            return Err(Error::InvalidDensity(format!(
                "Hermiticity residual {herm:.3e} exceeds {DENSITY_TRACE_TOL:.0e}"
            )));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > DENSITY_TRACE_TOL || tr.im.abs() > DENSITY_TRACE_TOL {
            return Err(Error::InvalidDensity(format!(
                "trace {tr} deviates from 1 by more than {DENSITY_TRACE_TOL:.0e}"
            )));
        }
        let eig = hermitian_eig(&matrix)?;
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -PSD_TOL {
            return Err(Error::InvalidDensity(format!(
                "negative eigenvalue {min:.3e} below -{PSD_TOL:.0e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn from_pure(state: &PureState) -> Self {
        Self {
            matrix: state.outer(),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scaled_re(1.0 / dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// Tr(rho^2).
    pub fn purity(&self) -> f64 {
        self.matrix.trace_product_re(&self.matrix)
    }
}

/// Spectral decomposition of a density matrix: weights descending, summing
/// to the trace; near-zero weights (< 1e-12) are dropped.
pub fn spectral_decompose(rho: &DensityMatrix) -> Vec<(f64, PureState)> {
    let eig = hermitian_eig(rho.matrix()).expect("density matrix is Hermitian by construction");
    let mut out = Vec::new();
    for (k, &w) in eig.values.iter().enumerate() {
        if w <= 1e-12 {
            continue;
        }
        let state = PureState::new(eig.eigenvector(k))
            .expect("Jacobi eigenvectors are unit vectors");
        out.push((w, state));
    }
    out
}

/// Local dimensions (d1, ..., dn) of the joint system; the only trusted
/// assumption in the pipeline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DimensionVector {
    dims: Vec<usize>,
}

impl DimensionVector {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "dimension vector needs at least 2 parties".into(),
            ));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidArgument(
                "every local dimension must be at least 2".into(),
            ));
        }
        Ok(Self { dims })
    }

    pub fn qubits(n: usize) -> Result<Self> {
        Self::new(vec![2; n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn parties(&self) -> usize {
        self.dims.len()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }
}
