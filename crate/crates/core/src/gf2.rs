//! Linear algebra over GF(2), random linear hashing, CSS-type Pauli powers
//! and the virtual-qubit basis change.
//!
//! A row of `n` bits is stored in a `u64` whose integer value is the basis
//! label of the bit string: column 0 is the most significant of the `n` bits.
//! So `row & x` followed by a parity gives `u . x` directly on labels.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::qmatrix::{ComplexMatrix, C64, ONE, ZERO};
use crate::states::{Label, MultipartiteState};

/// Widest bit string a row can hold.
pub const MAX_COLS: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

pub fn mask(cols: usize) -> u64 {
    if cols == 64 {
        u64::MAX
    } else {
        (1u64 << cols) - 1
    }
}

/// Parity of `a & b`, i.e. the GF(2) inner product of two labels.
pub fn dot(a: u64, b: u64) -> u8 {
    ((a & b).count_ones() & 1) as u8
}

/// Bits of `x` as a 0/1 vector of length `n`, most significant first.
pub fn to_bits(x: u64, n: usize) -> Vec<u8> {
    (0..n).map(|j| ((x >> (n - 1 - j)) & 1) as u8).collect()
}

/// Inverse of `to_bits`.
pub fn from_bits(bits: &[u8]) -> u64 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as u64)
}

impl BinaryMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<u64>) -> Result<Self> {
        if cols > MAX_COLS {
            return Err(Error::Dimension(format!("at most {MAX_COLS} columns supported")));
        }
        if data.len() != rows {
            return Err(Error::Dimension(format!("{} row words for {} rows", data.len(), rows)));
        }
        if data.iter().any(|&r| r & !mask(cols) != 0) {
            return Err(Error::Validation("row has bits beyond the column count".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows] }
    }

    pub fn identity(n: usize) -> Self {
        Self { rows: n, cols: n, data: (0..n).map(|i| 1u64 << (n - 1 - i)).collect() }
    }

    /// Parses rows such as `["1011", "0110"]`.
    pub fn from_bitstrings<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len());
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols || !r.chars().all(|c| c == '0' || c == '1') {
                return Err(Error::Validation(format!("bad bit string {r:?}")));
            }
            data.push(if cols == 0 { 0 } else { u64::from_str_radix(r, 2).expect("checked digits") });
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn to_bitstrings(&self) -> Vec<String> {
        self.data.iter().map(|&r| format!("{:0width$b}", r, width = self.cols)).collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row `i` as a label.
    pub fn row(&self, i: usize) -> u64 {
        self.data[i]
    }

    pub fn row_words(&self) -> &[u64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        ((self.data[i] >> (self.cols - 1 - j)) & 1) as u8
    }

    pub fn set(&mut self, i: usize, j: usize, bit: u8) {
        let b = 1u64 << (self.cols - 1 - j);
        if bit & 1 == 1 {
            self.data[i] |= b;
        } else {
            self.data[i] &= !b;
        }
    }

    /// `M x` for an input label `x`; output row 0 is the most significant bit.
    pub fn apply(&self, x: u64) -> u64 {
        self.data.iter().fold(0, |acc, &r| (acc << 1) | dot(r, x) as u64)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.get(i, j) == 1 {
                    t.set(j, i, 1);
                }
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let t = other.transpose();
        let data = self.data.iter().map(|&r| t.apply(r)).collect();
        Self::new(self.rows, other.cols, data)
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::Dimension("column counts differ".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::new(self.rows + other.rows, self.cols, data)
    }

    /// Reduced row echelon form and its pivot columns. Pivots are taken from
    /// the first remaining row with a one in the current column.
    pub fn rref(&self) -> (Self, Vec<usize>) {
        let mut m = self.data.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            let bit = 1u64 << (self.cols - 1 - c);
            let Some(p) = (r..self.rows).find(|&i| m[i] & bit != 0) else { continue };
            m.swap(r, p);
            for i in 0..self.rows {
                if i != r && m[i] & bit != 0 {
                    m[i] ^= m[r];
                }
            }
            pivots.push(c);
            r += 1;
            if r == self.rows {
                break;
            }
        }
        (Self { rows: self.rows, cols: self.cols, data: m }, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    pub fn is_invertible(&self) -> bool {
        self.rows == self.cols && self.rank() == self.rows
    }

    /// Determinant over GF(2): 1 for invertible square matrices, else 0.
    pub fn determinant(&self) -> Result<u8> {
        if self.rows != self.cols {
            return Err(Error::Dimension("determinant of a non-square matrix".into()));
        }
        Ok(self.is_invertible() as u8)
    }

    pub fn inverse(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::Dimension("inverse of a non-square matrix".into()));
        }
        let n = self.rows;
        if n == 0 {
            return Ok(self.clone());
        }
        if 2 * n > MAX_COLS {
            return Err(Error::Dimension("matrix too large to invert".into()));
        }
        // augment [M | I] in a 2n-column matrix
        let aug: Vec<u64> = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &r)| (r << n) | (1u64 << (n - 1 - i)))
            .collect();
        let (red, pivots) = Self { rows: n, cols: 2 * n, data: aug }.rref();
        if pivots.len() < n || pivots[n - 1] >= n {
            return Err(Error::Rank { rank: self.rank(), expected: n });
        }
        Self::new(n, n, red.data.iter().map(|&r| r & mask(n)).collect())
    }
}

impl fmt::Debug for BinaryMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryMatrix{:?}", self.to_bitstrings())
    }
}

impl Serialize for BinaryMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_bitstrings().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinaryMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<String>::deserialize(d)?;
        Self::from_bitstrings(&rows).map_err(serde::de::Error::custom)
    }
}

/// Uniformly random `m x n` binary matrix (the 2-universal linear family).
pub fn random_linear_hash(m: usize, n: usize, rng: &mut impl Rng) -> BinaryMatrix {
    let data = (0..m).map(|_| rng.random::<u64>() & mask(n)).collect();
    BinaryMatrix::new(m, n, data).expect("masked rows")
}

/// Uniformly random full-rank `m x n` matrix, by rejection.
pub fn random_full_rank_hash(m: usize, n: usize, rng: &mut impl Rng) -> Result<BinaryMatrix> {
    if m > n {
        return Err(Error::Rank { rank: n, expected: m });
    }
    loop {
        let u = random_linear_hash(m, n, rng);
        if u.rank() == m {
            return Ok(u);
        }
    }
}

/// Basis of `{x : U x = 0}`, one vector per free column of the RREF in
/// increasing column order. Vector `f` has a one at its free column and
/// zeros at every other free column.
pub fn null_space(u: &BinaryMatrix) -> BinaryMatrix {
    let n = u.cols;
    let (red, pivots) = u.rref();
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let mut out = BinaryMatrix::zeros(free.len(), n);
    for (i, &f) in free.iter().enumerate() {
        out.set(i, f, 1);
        for (r, &p) in pivots.iter().enumerate() {
            if red.get(r, f) == 1 {
                out.set(i, p, 1);
            }
        }
    }
    out
}

/// Invertible `G = [D; U]` whose first `n - m` rows pick out the free
/// columns of `U`'s RREF. Then `D V^T = 1` for `V = null_space(U)`, so the
/// first `n - m` rows of `G^{-T}` are exactly the null-space vectors.
pub fn complete_basis(u: &BinaryMatrix) -> Result<BinaryMatrix> {
    let rank = u.rank();
    if rank != u.rows {
        return Err(Error::Rank { rank, expected: u.rows });
    }
    let n = u.cols;
    let (_, pivots) = u.rref();
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let mut d = BinaryMatrix::zeros(free.len(), n);
    for (i, &f) in free.iter().enumerate() {
        d.set(i, f, 1);
    }
    d.vstack(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PauliKind {
    X,
    Z,
}

/// `X^v` or `Z^v` on `n` qubits, `v` given as a label.
pub fn pauli_power(kind: PauliKind, v: u64, n: usize) -> ComplexMatrix {
    let d = 1usize << n;
    let mut m = ComplexMatrix::zeros(d, d);
    for x in 0..d as u64 {
        match kind {
            PauliKind::X => m[((x ^ v) as usize, x as usize)] = ONE,
            PauliKind::Z => m[(x as usize, x as usize)] = if dot(v, x) == 1 { -ONE } else { ONE },
        }
    }
    m
}

/// Relabels the qubits of every factor carrying `which` so that x-basis
/// labels map as `x' -> G x'`. On computational labels this is the
/// permutation `z -> G^{-T} z`. Afterwards the x-basis outcome of virtual
/// qubit `i` equals `g_i . x'` for the original x-basis outcome `x'`, and the
/// z-basis outcome of virtual qubit `j` equals `(G^{-T})_j . z`.
pub fn basis_change(g: &BinaryMatrix, state: &MultipartiteState, which: Label) -> Result<MultipartiteState> {
    let factors = state.factors_of(&[which]);
    let n = factors.len();
    let dims = state.dims();
    if g.rows != n || g.cols != n || factors.iter().any(|&f| dims[f] != 2) {
        return Err(Error::Dimension(format!(
            "basis change of size {} on {} factors labelled {which}",
            g.cols, n
        )));
    }
    let git = g.inverse()?.transpose();
    // bring the register to the front, permute, move it back
    let rest: Vec<usize> = (0..dims.len()).filter(|i| !factors.contains(i)).collect();
    let front: Vec<usize> = factors.iter().chain(&rest).copied().collect();
    let moved = state.permuted(&front)?;
    let block = 1usize << n;
    let inner = moved.dim() / block;
    let target: Vec<usize> = (0..block as u64).map(|z| git.apply(z) as usize).collect();
    let m = if moved.is_pure() {
        let src = moved.matrix().data();
        let mut out = vec![ZERO; src.len()];
        for z in 0..block {
            out[target[z] * inner..(target[z] + 1) * inner].copy_from_slice(&src[z * inner..(z + 1) * inner]);
        }
        ComplexMatrix::ket(out)
    } else {
        let p = permutation_matrix(&target, inner);
        p.dot(moved.matrix()).dot(&p.adjoint())
    };
    let changed = MultipartiteState::from_parts(m, moved.subsystems().to_vec());
    let mut back = vec![0; dims.len()];
    for (pos, &orig) in front.iter().enumerate() {
        back[orig] = pos;
    }
    changed.permuted(&back)
}

fn permutation_matrix(target: &[usize], inner: usize) -> ComplexMatrix {
    let d = target.len() * inner;
    let mut p = ComplexMatrix::zeros(d, d);
    for (z, &t) in target.iter().enumerate() {
        for i in 0..inner {
            p[(t * inner + i, z * inner + i)] = C64::new(1.0, 0.0);
        }
    }
    p
}
