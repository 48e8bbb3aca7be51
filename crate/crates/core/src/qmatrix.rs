//! Dense complex matrices with tensor-factor bookkeeping.
//!
//! Storage is row-major. Heavy kernels (products, eigendecompositions and
//! singular value decompositions) go through `nalgebra`; everything built on
//! top of them (ordering, phase conventions, null-space completion) is
//! canonicalised here so results do not depend on the backend's choices for
//! degenerate subspaces.
//!
//! Basis labels of a composite system follow the usual convention: the first
//! factor in `dims` is the most significant digit of the flat index.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{Complex, DMatrix};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Relative threshold below which eigenvalues count as zero for
/// pseudo-inverses and support projectors.
pub const DEFAULT_PINV_REL: f64 = 1e-10;

/// Entrywise tolerance for values flagged Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Relative tolerance accepted on input to the eigensolver; products such as
/// `A A^dag` of large matrices pick up rounding above `HERMITIAN_TOL`.
const HERMITIAN_CHECK_REL: f64 = 1e-9;

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
    dims: Option<Vec<usize>>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} dims={:?}", self.rows, self.cols, self.dims)?;
        if self.rows * self.cols <= 64 {
            for i in 0..self.rows {
                let row: Vec<String> = (0..self.cols)
                    .map(|j| {
                        let z = self[(i, j)];
                        format!("{:+.4}{:+.4}i", z.re, z.im)
                    })
                    .collect();
                writeln!(f, "  [{}]", row.join(", "))?;
            }
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries supplied for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data, dims: None })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols], dims: None }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diagonal(&d)
    }

    /// Column vector.
    pub fn ket(amplitudes: Vec<C64>) -> Self {
        let n = amplitudes.len();
        Self { rows: n, cols: 1, data: amplitudes, dims: None }
    }

    /// Computational basis vector `|index>` in dimension `dim`.
    pub fn basis_ket(dim: usize, index: usize) -> Self {
        let mut v = vec![ZERO; dim];
        v[index] = ONE;
        Self::ket(v)
    }

    /// Builds a matrix from its columns.
    pub fn from_columns(rows: usize, columns: &[Vec<C64>]) -> Self {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows);
            for i in 0..rows {
                m[(i, j)] = c[i];
            }
        }
        m
    }

    pub fn with_dims(mut self, dims: Vec<usize>) -> Result<Self> {
        let prod: usize = dims.iter().product();
        if prod != self.rows || (self.cols != 1 && prod != self.cols) {
            return Err(Error::Dimension(format!(
                "dims {:?} (product {}) inconsistent with {}x{} matrix",
                dims, prod, self.rows, self.cols
            )));
        }
        self.dims = Some(dims);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> Option<&[usize]> {
        self.dims.as_deref()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out.dims = self.dims.clone();
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out.dims = self.dims.clone();
        out
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
            dims: self.dims.clone(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
            dims: self.dims.clone(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Spectral norm (largest singular value).
    pub fn operator_norm(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        singular_values(self).first().copied().unwrap_or(0.0)
    }

    pub fn hermiticity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let prod = to_na(self) * to_na(other);
        Ok(from_na(&prod))
    }

    /// `self * other`, panicking on a shape mismatch. For internal use where
    /// shapes are established by construction.
    pub fn dot(&self, other: &Self) -> Self {
        self.matmul(other).expect("matrix product shape mismatch")
    }

    /// `|v><v|` for a column vector.
    pub fn outer_self(&self) -> Self {
        let v = &self.data;
        let n = v.len();
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            if v[i] == ZERO {
                continue;
            }
            for j in 0..n {
                out[(i, j)] = v[i] * v[j].conj();
            }
        }
        out.dims = self.dims.clone();
        out
    }

    /// Inner product `<self|other>` of two column vectors.
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn vector_norm(&self) -> f64 {
        self.frobenius_norm()
    }

    /// Embeds `self` as the top-left block of a `rows x cols` zero matrix.
    pub fn padded(&self, rows: usize, cols: usize) -> Result<Self> {
        if rows < self.rows || cols < self.cols {
            return Err(Error::Dimension(format!(
                "cannot pad {}x{} into {}x{}",
                self.rows, self.cols, rows, cols
            )));
        }
        let mut out = Self::zeros(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
        }
        Ok(out)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
            dims: self.dims.clone(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
            dims: self.dims.clone(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.dot(rhs)
    }
}

pub(crate) fn to_na(m: &ComplexMatrix) -> DMatrix<C64> {
    DMatrix::from_row_slice(m.rows, m.cols, &m.data)
}

pub(crate) fn from_na(m: &DMatrix<C64>) -> ComplexMatrix {
    let (r, c) = m.shape();
    let mut out = ComplexMatrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

/// Tensor product. Factor lists are concatenated; an operand without a
/// factor list counts as a single factor.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut data = vec![ZERO; rows * cols];
    for ia in 0..a.rows {
        for ja in 0..a.cols {
            let x = a[(ia, ja)];
            if x == ZERO {
                continue;
            }
            for ib in 0..b.rows {
                let row = ia * b.rows + ib;
                let base = row * cols + ja * b.cols;
                for jb in 0..b.cols {
                    data[base + jb] = x * b[(ib, jb)];
                }
            }
        }
    }
    let da = a.dims.clone().unwrap_or_else(|| vec![a.rows]);
    let db = b.dims.clone().unwrap_or_else(|| vec![b.rows]);
    let both_kets = a.cols == 1 && b.cols == 1;
    let both_square = a.is_square() && b.is_square();
    let dims = if both_kets || both_square {
        Some(da.into_iter().chain(db).collect())
    } else {
        None
    };
    ComplexMatrix { rows, cols, data, dims }
}

/// Tensor product of a list of matrices.
pub fn kron_all<'a>(items: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    let mut it = items.into_iter();
    let first = it.next().cloned().unwrap_or_else(|| ComplexMatrix::identity(1));
    it.fold(first, |acc, m| kron(&acc, m))
}

fn check_dims(n: usize, dims: &[usize]) -> Result<()> {
    let prod: usize = dims.iter().product();
    if prod != n || dims.contains(&0) {
        return Err(Error::Dimension(format!(
            "dims {:?} (product {}) do not match dimension {}",
            dims, prod, n
        )));
    }
    Ok(())
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// For every flat index, the flat index within the kept factors and within
/// the traced factors.
fn split_indices(dims: &[usize], keep: &[usize]) -> (Vec<usize>, Vec<usize>, usize, usize) {
    let total: usize = dims.iter().product();
    let kept_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let ks = strides(&kept_dims);
    let ts = strides(&traced_dims);
    let fs = strides(dims);
    let mut kidx = vec![0; total];
    let mut tidx = vec![0; total];
    for flat in 0..total {
        let mut k = 0;
        for (pos, &f) in keep.iter().enumerate() {
            k += ((flat / fs[f]) % dims[f]) * ks[pos];
        }
        let mut t = 0;
        for (pos, &f) in traced.iter().enumerate() {
            t += ((flat / fs[f]) % dims[f]) * ts[pos];
        }
        kidx[flat] = k;
        tidx[flat] = t;
    }
    (kidx, tidx, kept_dims.iter().product(), traced_dims.iter().product())
}

fn validate_keep(dims: &[usize], keep: &[usize]) -> Result<Vec<usize>> {
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::Dimension(format!(
            "keep set {:?} out of range for {} factors",
            keep,
            dims.len()
        )));
    }
    Ok(keep)
}

/// Marginal of a square operator on the factors listed in `keep` (kept in
/// ascending factor order).
pub fn partial_trace(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("partial trace of non-square {}x{}", m.rows, m.cols)));
    }
    check_dims(m.rows, dims)?;
    let keep = validate_keep(dims, keep)?;
    let (kidx, tidx, dk, dt) = split_indices(dims, &keep);
    // full index for (kept, traced) pair
    let mut full = vec![0usize; dk * dt];
    for flat in 0..m.rows {
        full[kidx[flat] * dt + tidx[flat]] = flat;
    }
    let mut out = ComplexMatrix::zeros(dk, dk);
    for a in 0..dk {
        for b in 0..dk {
            let mut acc = ZERO;
            for t in 0..dt {
                acc += m[(full[a * dt + t], full[b * dt + t])];
            }
            out[(a, b)] = acc;
        }
    }
    let kept_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    out.dims = Some(kept_dims);
    Ok(out)
}

/// Reshapes a pure state into the matrix `M[kept, traced]` so that
/// `psi = sum M[a,t] |a>|t>` (kept factors first, both in ascending order).
pub fn bipartite_matrix(psi: &[C64], dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    check_dims(psi.len(), dims)?;
    let keep = validate_keep(dims, keep)?;
    let (kidx, tidx, dk, dt) = split_indices(dims, &keep);
    let mut out = ComplexMatrix::zeros(dk, dt);
    for (flat, &amp) in psi.iter().enumerate() {
        out[(kidx[flat], tidx[flat])] = amp;
    }
    Ok(out)
}

/// Marginal of the pure state `psi` on the factors in `keep`.
pub fn reduced_density(psi: &[C64], dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    let keep = validate_keep(dims, keep)?;
    let m = bipartite_matrix(psi, dims, &keep)?;
    let mut rho = m.dot(&m.adjoint());
    rho.dims = Some(keep.iter().map(|&k| dims[k]).collect());
    Ok(rho)
}

/// Reorders tensor factors of a vector: output factor `i` is input factor
/// `perm[i]`.
pub fn permute_vector(psi: &[C64], dims: &[usize], perm: &[usize]) -> Result<Vec<C64>> {
    check_dims(psi.len(), dims)?;
    let mut seen = vec![false; dims.len()];
    if perm.len() != dims.len() || perm.iter().any(|&p| p >= dims.len() || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::Dimension(format!("{:?} is not a permutation of {} factors", perm, dims.len())));
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let in_strides = strides(dims);
    let out_strides = strides(&new_dims);
    let mut out = vec![ZERO; psi.len()];
    for (flat, &amp) in psi.iter().enumerate() {
        let mut o = 0;
        for (i, &p) in perm.iter().enumerate() {
            o += ((flat / in_strides[p]) % dims[p]) * out_strides[i];
        }
        out[o] = amp;
    }
    Ok(out)
}

/// Spectral decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = ComplexMatrix::from_real_diagonal(&self.values);
        self.vectors.dot(&d).dot(&self.vectors.adjoint())
    }
}

/// Hermitian eigendecomposition with descending eigenvalues.
///
/// Within each cluster of (numerically) degenerate eigenvalues the basis is
/// rebuilt by projecting standard basis vectors into the eigenspace and
/// orthonormalising them in index order. For a simple eigenvalue this means
/// the first non-negligible component is real and positive.
pub fn eig_hermitian(m: &ComplexMatrix) -> Result<HermitianEigen> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("eigendecomposition of non-square {}x{}", m.rows, m.cols)));
    }
    let herm_err = m.hermiticity_error();
    if herm_err > HERMITIAN_CHECK_REL * m.max_abs().max(1.0) {
        return Err(Error::Validation(format!("matrix is not Hermitian (max |M - M^dag| = {herm_err:e})")));
    }
    if m.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Domain("eigendecomposition of a matrix with non-finite entries".into()));
    }
    let n = m.rows;
    if n == 0 {
        return Ok(HermitianEigen { values: vec![], vectors: ComplexMatrix::zeros(0, 0) });
    }
    // symmetrise and rescale to unit max entry
    let scale = m.max_abs();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let h = (&to_na(m) + to_na(m).adjoint()) * C64::new(0.5 / scale, 0.0);
    // the backend's QR iteration occasionally breaks down (NaN) on sparse
    // matrices with repeated entries; a diagonal shift avoids the bad path
    let mut found = None;
    for shift in [0.0, 0.5, -0.37, 1.3] {
        let shifted = &h + nalgebra::DMatrix::<C64>::identity(n, n) * C64::new(shift, 0.0);
        let mut eig = nalgebra::SymmetricEigen::new(shifted.clone());
        let finite = eig.eigenvalues.iter().all(|l| l.is_finite());
        if finite && eigen_residual(&shifted, &eig) < 1e-9 {
            eig.eigenvalues.iter_mut().for_each(|l| *l -= shift);
            found = Some(eig);
            break;
        }
    }
    let eig = found.ok_or_else(|| Error::Domain("eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i] * scale).collect();
    let raw: Vec<Vec<C64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();

    let cluster_tol = 1e-9 * values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut columns: Vec<Vec<C64>> = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[end - 1] - values[end] <= cluster_tol {
            end += 1;
        }
        columns.extend(canonical_subspace_basis(&raw[start..end], n));
        start = end;
    }
    Ok(HermitianEigen { values, vectors: ComplexMatrix::from_columns(n, &columns) })
}

fn eigen_residual(h: &nalgebra::DMatrix<C64>, eig: &nalgebra::SymmetricEigen<C64, nalgebra::Dyn>) -> f64 {
    let v = &eig.eigenvectors;
    let lam = nalgebra::DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(l, 0.0)));
    (h * v - v * lam).iter().fold(0.0, |a, z| a.max(z.norm()))
}

fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn orthogonalize(v: &mut [C64], against: &[Vec<C64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for u in against {
            let c = dotc(u, v);
            if c != ZERO {
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= c * y;
                }
            }
        }
    }
}

/// Canonical orthonormal basis of span(`basis`) (assumed orthonormal).
fn canonical_subspace_basis(basis: &[Vec<C64>], n: usize) -> Vec<Vec<C64>> {
    let k = basis.len();
    let mut out: Vec<Vec<C64>> = Vec::with_capacity(k);
    for &threshold in &[0.1, 1e-3, 1e-8] {
        for j in 0..n {
            if out.len() == k {
                return out;
            }
            // P e_j = sum_b b * conj(b_j)
            let mut v = vec![ZERO; n];
            for b in basis {
                let c = b[j].conj();
                for (x, y) in v.iter_mut().zip(b) {
                    *x += c * y;
                }
            }
            orthogonalize(&mut v, &out);
            let nv = norm(&v);
            if nv > threshold {
                v.iter_mut().for_each(|x| *x /= nv);
                out.push(v);
            }
        }
    }
    if out.len() < k {
        // numerically hopeless cluster; keep the backend vectors
        return basis.to_vec();
    }
    out
}

/// Extends the orthonormal set `existing` to a basis of C^n by
/// orthonormalising standard basis vectors in index order.
pub(crate) fn complete_orthonormal(existing: &[Vec<C64>], n: usize) -> Vec<Vec<C64>> {
    // Householder QR of the existing columns; the trailing columns of the
    // full Q span the complement
    let r = existing.len();
    let mut cols: Vec<Vec<C64>> = existing.to_vec();
    let mut reflectors: Vec<Option<Vec<C64>>> = Vec::with_capacity(r);
    for k in 0..r {
        let x = &cols[k];
        let xnorm = norm(&x[k..]);
        if xnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let phase = if x[k].norm() > 0.0 { x[k] / x[k].norm() } else { ONE };
        let mut v = vec![ZERO; n];
        v[k..].copy_from_slice(&x[k..]);
        v[k] += phase * xnorm;
        let vn = norm(&v);
        v.iter_mut().for_each(|z| *z /= vn);
        for col in cols.iter_mut().skip(k) {
            reflect(col, &v, k);
        }
        reflectors.push(Some(v));
    }
    (r..n)
        .map(|j| {
            let mut e = vec![ZERO; n];
            e[j] = ONE;
            for (k, v) in reflectors.iter().enumerate().rev() {
                if let Some(v) = v {
                    reflect(&mut e, v, k);
                }
            }
            // phase convention: largest entry (first on ties) real positive
            let (mut best, mut idx) = (0.0, 0);
            for (i, z) in e.iter().enumerate() {
                if z.norm() > best + 1e-12 {
                    best = z.norm();
                    idx = i;
                }
            }
            let ph = e[idx].conj() / e[idx].norm();
            e.iter_mut().for_each(|z| *z *= ph);
            e
        })
        .collect()
}

/// `x -> (I - 2 v v^dag) x` for a unit `v` supported on indices `>= from`.
fn reflect(x: &mut [C64], v: &[C64], from: usize) {
    let c: C64 = v[from..].iter().zip(&x[from..]).map(|(a, b)| a.conj() * b).sum::<C64>() * 2.0;
    if c != ZERO {
        for (xi, vi) in x[from..].iter_mut().zip(&v[from..]) {
            *xi -= vi * c;
        }
    }
}

/// Default zero threshold for a PSD matrix with largest eigenvalue `lmax`.
pub fn default_pinv_threshold(lmax: f64) -> f64 {
    DEFAULT_PINV_REL * lmax.abs().max(f64::MIN_POSITIVE)
}

/// Applies `f` to the spectrum of a Hermitian matrix.
///
/// When `pinv_threshold` is given, eigenvalues at or below it are mapped to
/// zero instead of being passed to `f` (pseudo-inverse behaviour). Pass
/// `None` for functions that are well defined everywhere.
pub fn func_hermitian(
    m: &ComplexMatrix,
    f: impl Fn(f64) -> f64,
    pinv_threshold: Option<f64>,
) -> Result<ComplexMatrix> {
    let eig = eig_hermitian(m)?;
    Ok(apply_spectral(&eig, |l| match pinv_threshold {
        Some(t) if l <= t => 0.0,
        _ => f(l),
    }))
}

pub(crate) fn apply_spectral(eig: &HermitianEigen, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let n = eig.values.len();
    let mut out = ComplexMatrix::zeros(n, n);
    for (k, &l) in eig.values.iter().enumerate() {
        let fl = f(l);
        if fl == 0.0 {
            continue;
        }
        let v = eig.vectors.column(k);
        for i in 0..n {
            let a = v[i] * fl;
            for j in 0..n {
                out[(i, j)] += a * v[j].conj();
            }
        }
    }
    out
}

fn check_psd(eig: &HermitianEigen) -> Result<f64> {
    let lmax = eig.values.first().copied().unwrap_or(0.0);
    let lmin = eig.values.last().copied().unwrap_or(0.0);
    let tol = 1e-9 * lmax.abs().max(1.0);
    if lmin < -tol {
        return Err(Error::Domain(format!("matrix has negative eigenvalue {lmin:e}")));
    }
    Ok(lmax)
}

/// Eigenvalues below this fraction of the largest are treated as rounding
/// noise by `sqrt_psd`; otherwise noise of order 1e-16 would surface as
/// entries of order 1e-8.
pub const SQRT_ZERO_REL: f64 = 1e-12;

/// Principal square root of a PSD matrix.
pub fn sqrt_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = eig_hermitian(m)?;
    let lmax = check_psd(&eig)?;
    let t = SQRT_ZERO_REL * lmax;
    Ok(apply_spectral(&eig, |l| if l > t { l.sqrt() } else { 0.0 }))
}

/// Square root of the pseudo-inverse of a PSD matrix, with the default
/// relative zero threshold.
pub fn pinv_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = eig_hermitian(m)?;
    let lmax = check_psd(&eig)?;
    let t = default_pinv_threshold(lmax);
    Ok(apply_spectral(&eig, |l| if l > t { 1.0 / l.sqrt() } else { 0.0 }))
}

/// `(pinv_sqrt(m), support_projector(m))` from one eigendecomposition.
pub(crate) fn pinv_sqrt_with_support(m: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let eig = eig_hermitian(m)?;
    let lmax = check_psd(&eig)?;
    let t = default_pinv_threshold(lmax);
    Ok((
        apply_spectral(&eig, |l| if l > t { 1.0 / l.sqrt() } else { 0.0 }),
        apply_spectral(&eig, |l| if l > t { 1.0 } else { 0.0 }),
    ))
}

/// Pseudo-inverse of a PSD matrix.
pub fn pinv_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = eig_hermitian(m)?;
    let lmax = check_psd(&eig)?;
    let t = default_pinv_threshold(lmax);
    Ok(apply_spectral(&eig, |l| if l > t { 1.0 / l } else { 0.0 }))
}

/// Projector onto the support of a PSD matrix.
pub fn support_projector(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = eig_hermitian(m)?;
    let lmax = check_psd(&eig)?;
    let t = default_pinv_threshold(lmax);
    Ok(apply_spectral(&eig, |l| if l > t { 1.0 } else { 0.0 }))
}

/// Singular value decomposition `m = U diag(s) V^dag` with descending
/// singular values. `U` is `rows x k`, `V` is `cols x k`, `k = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub singular_values: Vec<f64>,
    pub v: ComplexMatrix,
}

pub fn svd(m: &ComplexMatrix) -> Svd {
    let (r, c) = (m.rows, m.cols);
    let k = r.min(c);
    if k == 0 {
        return Svd { u: ComplexMatrix::zeros(r, 0), singular_values: vec![], v: ComplexMatrix::zeros(c, 0) };
    }
    if r < c {
        let t = svd(&m.adjoint());
        return Svd { u: t.v, singular_values: t.singular_values, v: t.u };
    }
    if r > c {
        // tall: m = Q R with Q an isometry, then decompose the small R
        let qr = nalgebra::QR::new(to_na(m));
        let q = from_na(&qr.q());
        let inner = svd_square(&from_na(&qr.r()));
        return Svd { u: q.dot(&inner.u), singular_values: inner.singular_values, v: inner.v };
    }
    svd_square(m)
}

fn svd_square(m: &ComplexMatrix) -> Svd {
    let (r, c) = (m.rows, m.cols);
    let k = r;
    // Hermitian dilation [[0, m], [m^dag, 0]]: eigenvalue +s has eigenvector
    // (u; v)/sqrt(2). The backend's own SVD silently returns wrong factors
    // for some sparse rank-deficient inputs.
    let eig = match eig_hermitian(&dilation(m)) {
        Ok(e) => e,
        Err(_) => {
            return Svd {
                u: ComplexMatrix::zeros(r, k),
                singular_values: vec![f64::NAN; k],
                v: ComplexMatrix::zeros(c, k),
            }
        }
    };
    let smax = eig.values[0].max(0.0);
    let tol = 1e-13 * smax.max(f64::MIN_POSITIVE);
    let mut s = Vec::with_capacity(k);
    let mut ucols: Vec<Vec<C64>> = Vec::with_capacity(k);
    let mut vcols: Vec<Vec<C64>> = Vec::with_capacity(k);
    for (j, &l) in eig.values.iter().enumerate().take(k) {
        if l <= tol {
            break;
        }
        let col = eig.vectors.column(j);
        let mut u: Vec<C64> = col[..r].to_vec();
        let mut v: Vec<C64> = col[r..].to_vec();
        let (nu, nv) = (norm(&u), norm(&v));
        u.iter_mut().for_each(|z| *z /= nu);
        v.iter_mut().for_each(|z| *z /= nv);
        s.push(l);
        ucols.push(u);
        vcols.push(v);
    }
    let rank = s.len();
    let mut ufill = complete_orthonormal(&ucols, r);
    let mut vfill = complete_orthonormal(&vcols, c);
    ufill.truncate(k - rank);
    vfill.truncate(k - rank);
    ucols.extend(ufill);
    vcols.extend(vfill);
    s.resize(k, 0.0);
    Svd { u: ComplexMatrix::from_columns(r, &ucols), singular_values: s, v: ComplexMatrix::from_columns(c, &vcols) }
}

fn dilation(m: &ComplexMatrix) -> ComplexMatrix {
    let (r, c) = (m.rows, m.cols);
    let mut d = ComplexMatrix::zeros(r + c, r + c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            d[(i, r + j)] = z;
            d[(r + j, i)] = z.conj();
        }
    }
    d
}

/// Singular values in descending order.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    let k = m.rows.min(m.cols);
    if k == 0 {
        return vec![];
    }
    let from_eig = |values: Vec<f64>| {
        let mut s: Vec<f64> = values.into_iter().map(f64::abs).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s.truncate(k);
        s
    };
    if m.is_square() && m.hermiticity_error() <= 1e-14 * m.max_abs() {
        return eig_hermitian(m).map_or(vec![f64::NAN; k], |e| from_eig(e.values));
    }
    // the top k eigenvalues of the dilation are the singular values
    eig_hermitian(&dilation(m)).map_or(vec![f64::NAN; k], |e| e.values[..k].iter().map(|l| l.max(0.0)).collect())
}

/// Unitary factor `V` of the polar decomposition `y = sqrt(y y^dag) V`.
///
/// On the range of `y` the factor is `W X^dag` from the SVD `y = W S X^dag`.
/// Directions belonging to zero singular values are filled on both sides by
/// `complete_orthonormal` (Householder complement of the range) and paired
/// in the order it returns them.
pub fn polar_unitary(y: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !y.is_square() {
        return Err(Error::Dimension(format!("polar decomposition of non-square {}x{}", y.rows, y.cols)));
    }
    polar_unitary_embedded(y, y.rows)
}

/// Polar unitary of the `n x n` matrix obtained by padding `y` (`n x c`,
/// `c <= n`) with zero columns. Equivalent to `polar_unitary` on the padded
/// matrix without forming it.
pub fn polar_unitary_embedded(y: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
    if y.rows != n || y.cols > n {
        return Err(Error::Dimension(format!("cannot embed {}x{} into a square of size {}", y.rows, y.cols, n)));
    }
    let dec = svd(y);
    let smax = dec.singular_values.first().copied().unwrap_or(0.0);
    let tol = 1e-10 * smax;
    let rank = dec.singular_values.iter().filter(|&&s| smax > 0.0 && s > tol).count();
    let left: Vec<Vec<C64>> = (0..rank).map(|k| dec.u.column(k)).collect();
    let right: Vec<Vec<C64>> = (0..rank)
        .map(|k| {
            let mut v = dec.v.column(k);
            v.resize(n, ZERO);
            v
        })
        .collect();
    let left_c = complete_orthonormal(&left, n);
    let right_c = complete_orthonormal(&right, n);
    let lmat = ComplexMatrix::from_columns(n, &[left, left_c].concat());
    let rmat = ComplexMatrix::from_columns(n, &[right, right_c].concat());
    Ok(lmat.dot(&rmat.adjoint()))
}

/// `max |U U^dag - I|` entrywise.
pub fn unitarity_error(u: &ComplexMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    u.dot(&u.adjoint()).max_abs_diff(&ComplexMatrix::identity(u.rows))
}

/// Unitary `exp(-i t H)` for Hermitian `H`.
pub fn unitary_exp(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let eig = eig_hermitian(h)?;
    let n = h.rows;
    let mut out = ComplexMatrix::zeros(n, n);
    for (k, &l) in eig.values.iter().enumerate() {
        let phase = C64::from_polar(1.0, -t * l);
        let v = eig.vectors.column(k);
        for i in 0..n {
            let a = v[i] * phase;
            for j in 0..n {
                out[(i, j)] += a * v[j].conj();
            }
        }
    }
    Ok(out)
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
}

pub fn hadamard() -> ComplexMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_real(2, 2, &[h, h, h, -h]).unwrap()
}

#[derive(Serialize, Deserialize)]
struct MatrixRecord {
    rows: usize,
    cols: usize,
    #[serde(default)]
    dims: Vec<usize>,
    data: Vec<[f64; 2]>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRecord {
            rows: self.rows,
            cols: self.cols,
            dims: self.dims.clone().unwrap_or_default(),
            data: self.data.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = MatrixRecord::deserialize(d)?;
        let data = rec.data.iter().map(|&[re, im]| C64::new(re, im)).collect();
        let m = ComplexMatrix::new(rec.rows, rec.cols, data).map_err(D::Error::custom)?;
        if rec.dims.is_empty() {
            Ok(m)
        } else {
            m.with_dims(rec.dims).map_err(D::Error::custom)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density, random_hermitian, random_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn kron_identities_and_dims() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2).max_abs_diff(&ComplexMatrix::identity(4)), 0.0);

        let xx = kron(&pauli_x(), &pauli_x());
        let ket00 = ComplexMatrix::basis_ket(4, 0);
        assert_eq!(xx.dot(&ket00).max_abs_diff(&ComplexMatrix::basis_ket(4, 3)), 0.0);

        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(4, 5);
        let ab = kron(&a, &b);
        assert_eq!((ab.rows(), ab.cols()), (8, 15));

        let a = ComplexMatrix::identity(2).with_dims(vec![2]).unwrap();
        let b = ComplexMatrix::identity(6).with_dims(vec![2, 3]).unwrap();
        assert_eq!(kron(&a, &b).dims(), Some(&[2, 2, 3][..]));
    }

    #[test]
    fn kron_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(2, 3, &mut rng);
        let b = random_matrix(3, 2, &mut rng);
        let c = random_matrix(2, 2, &mut rng);
        let l = kron(&kron(&a, &b), &c);
        let r = kron(&a, &kron(&b, &c));
        assert!(l.max_abs_diff(&r) <= 1e-12);
    }

    #[test]
    fn partial_trace_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let phi = ComplexMatrix::ket(vec![c(h), ZERO, ZERO, c(h)]).outer_self();
        let ra = partial_trace(&phi, &[2, 2], &[0]).unwrap();
        assert!(ra.max_abs_diff(&ComplexMatrix::identity(2).scale_real(0.5)) <= 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density(2, &mut rng);
        let sigma = random_matrix(3, 3, &mut rng);
        let prod = kron(&rho, &sigma);
        let got = partial_trace(&prod, &[2, 3], &[0]).unwrap();
        assert!(got.max_abs_diff(&rho.scale(sigma.trace())) <= 1e-12);
        let all = partial_trace(&prod, &[2, 3], &[]).unwrap();
        assert!((all[(0, 0)] - prod.trace()).norm() <= 1e-12);
    }

    #[test]
    fn partial_trace_preserves_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let m = random_matrix(12, 12, &mut rng);
            let t = partial_trace(&m, &[2, 3, 2], &[0, 2]).unwrap();
            assert!((t.trace() - m.trace()).norm() <= 1e-10);
        }
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let m = ComplexMatrix::identity(4);
        assert!(matches!(partial_trace(&m, &[2, 3], &[0]), Err(Error::Dimension(_))));
        assert!(matches!(partial_trace(&m, &[2, 2], &[5]), Err(Error::Dimension(_))));
    }

    #[test]
    fn reduced_density_matches_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = crate::random::random_pure(24, &mut rng);
        let dims = [2, 3, 4];
        let direct = reduced_density(psi.data(), &dims, &[2, 0]).unwrap();
        let via = partial_trace(&psi.outer_self(), &dims, &[0, 2]).unwrap();
        assert!(direct.max_abs_diff(&via) <= 1e-14);
    }

    #[test]
    fn permute_vector_moves_factors() {
        // |0>_2 |1>_3 -> |1>_3 |0>_2
        let mut v = vec![ZERO; 6];
        v[1] = ONE;
        let p = permute_vector(&v, &[2, 3], &[1, 0]).unwrap();
        assert_eq!(p[2], ONE);
    }

    #[test]
    fn eig_known_spectra() {
        let d = ComplexMatrix::from_real_diagonal(&[3.0, 1.0]);
        let e = eig_hermitian(&d).unwrap();
        assert_eq!(e.values.len(), 2);
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        assert!(e.vectors.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-14);

        let e = eig_hermitian(&pauli_x()).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] + 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = ComplexMatrix::from_real(2, 1, &[h, h]).unwrap();
        let minus = ComplexMatrix::from_real(2, 1, &[h, -h]).unwrap();
        assert!(ComplexMatrix::ket(e.vectors.column(0)).max_abs_diff(&plus) < 1e-14);
        assert!(ComplexMatrix::ket(e.vectors.column(1)).max_abs_diff(&minus) < 1e-14);
    }

    #[test]
    fn eig_degenerate_basis_is_canonical() {
        // identity: any basis is an eigenbasis; canonical choice is the standard one
        let e = eig_hermitian(&ComplexMatrix::identity(4)).unwrap();
        assert!(e.vectors.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-14);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(eig_hermitian(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 2, 5, 16] {
            let h = random_hermitian(n, &mut rng);
            let e = eig_hermitian(&h).unwrap();
            assert!((&e.reconstruct() - &h).operator_norm() <= 1e-10);
            assert!(unitarity_error(&e.vectors) <= 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn matrix_functions() {
        assert!(sqrt_psd(&ComplexMatrix::identity(3)).unwrap().max_abs_diff(&ComplexMatrix::identity(3)) < 1e-14);
        let ps = pinv_sqrt(&ComplexMatrix::from_real_diagonal(&[4.0, 0.0])).unwrap();
        assert!(ps.max_abs_diff(&ComplexMatrix::from_real_diagonal(&[0.5, 0.0])) < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let a = random_matrix(5, 5, &mut rng);
            let psd = a.dot(&a.adjoint());
            let r = sqrt_psd(&psd).unwrap();
            assert!(r.dot(&r).max_abs_diff(&psd) <= 1e-9);
        }
        let neg = ComplexMatrix::from_real_diagonal(&[1.0, -0.5]);
        assert!(matches!(sqrt_psd(&neg), Err(Error::Domain(_))));
    }

    #[test]
    fn func_hermitian_threshold() {
        let m = ComplexMatrix::from_real_diagonal(&[2.0, 1e-14]);
        let inv = func_hermitian(&m, |l| 1.0 / l, Some(1e-10)).unwrap();
        assert!(inv.max_abs_diff(&ComplexMatrix::from_real_diagonal(&[0.5, 0.0])) < 1e-14);
    }

    #[test]
    fn polar_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = crate::random::haar_unitary(3, &mut rng);
        assert!(polar_unitary(&u).unwrap().max_abs_diff(&u) < 1e-12);

        let d = ComplexMatrix::from_real_diagonal(&[2.0, 3.0]);
        assert!(polar_unitary(&d).unwrap().max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);

        for _ in 0..20 {
            let y = random_matrix(4, 4, &mut rng);
            let v = polar_unitary(&y).unwrap();
            assert!(unitarity_error(&v) <= 1e-9);
            let p = sqrt_psd(&y.dot(&y.adjoint())).unwrap();
            assert!(p.dot(&v).max_abs_diff(&y) <= 1e-9);
        }
        assert!(matches!(polar_unitary(&ComplexMatrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn polar_rank_deficient_completion() {
        // |1><0| completes to the bit flip
        let y = ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        let v = polar_unitary(&y).unwrap();
        assert!(v.max_abs_diff(&pauli_x()) < 1e-14);
        // diag(1, 0) completes to the identity
        let y = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]);
        assert!(polar_unitary(&y).unwrap().max_abs_diff(&ComplexMatrix::identity(2)) < 1e-14);
        // zero matrix
        assert!(polar_unitary(&ComplexMatrix::zeros(3, 3)).unwrap().max_abs_diff(&ComplexMatrix::identity(3)) < 1e-14);
    }

    #[test]
    fn svd_sparse_rank_one() {
        // two equal rows in a 16x8 block of zeros
        let mut y = ComplexMatrix::zeros(16, 8);
        let w = [0.6, 0.8];
        for c in 0..8 {
            let v = w[c >> 2] * w[(c >> 1) & 1] * w[c & 1] / 2.0;
            y[(1, c)] = C64::new(v, 0.0);
            y[(11, c)] = C64::new(v, 0.0);
        }
        let dec = svd(&y);
        let rec = dec.u.dot(&ComplexMatrix::from_real_diagonal(&dec.singular_values)).dot(&dec.v.adjoint());
        assert!(rec.max_abs_diff(&y) < 1e-14);
        assert!((dec.singular_values[0] - 0.5f64.sqrt()).abs() < 1e-14);
        assert!(dec.singular_values[1..].iter().all(|&s| s == 0.0));
        let v = polar_unitary_embedded(&y, 16).unwrap();
        let p = v.adjoint().dot(&y.padded(16, 16).unwrap());
        assert!(p.hermiticity_error() < 1e-14);
        assert!(eig_hermitian(&p).unwrap().values.iter().all(|&l| l > -1e-14));
    }

    #[test]
    fn polar_embedded_matches_padded() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = random_matrix(6, 2, &mut rng);
        let padded = y.padded(6, 6).unwrap();
        let a = polar_unitary(&padded).unwrap();
        let b = polar_unitary_embedded(&y, 6).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
        let p = sqrt_psd(&padded.dot(&padded.adjoint())).unwrap();
        assert!(p.dot(&b).max_abs_diff(&padded) < 1e-10);
    }

    #[test]
    fn json_layout() {
        let m = ComplexMatrix::new(1, 2, vec![C64::new(1.0, 2.0), C64::new(3.0, -4.0)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"rows":1,"cols":2,"dims":[],"data":[[1.0,2.0],[3.0,-4.0]]}"#);
        let back: ComplexMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"rows":2,"cols":2,"dims":[],"data":[[1.0,0.0]]}"#;
        assert!(serde_json::from_str::<ComplexMatrix>(bad).is_err());
    }
}
