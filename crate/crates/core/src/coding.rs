//! Classical-quantum source coding with hashed side information.
//!
//! A source emits `x` in `{0,1}^n` i.i.d. from `p` together with the quantum
//! signal `rho_x = rho_{x_1} (x) ... (x) rho_{x_n}`. The decoder is also given
//! `f(x)` for a random linear hash `f` with `|Y|` outputs and must recover `x`
//! with a pretty good measurement restricted to the coset `f^{-1}(f(x))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distill::pgm_from_operators;
use crate::error::{Error, Result};
use crate::gf2::{random_linear_hash, BinaryMatrix};
use crate::infotheory::{holevo_chi, in_typical_window, shannon_entropy, von_neumann_entropy, Ensemble};
use crate::qmatrix::{eig_hermitian, kron, pinv_sqrt, support_projector, ComplexMatrix, HermitianEigen, C64};

/// Largest joint signal dimension handled exactly.
pub const CODING_DIM_CAP: usize = 1 << 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodingInstance {
    pub ensemble: Ensemble,
    pub n: usize,
    /// `log2 |Y|`.
    pub output_bits: usize,
    pub delta: f64,
    pub epsilon: f64,
}

impl CodingInstance {
    pub fn new(ensemble: Ensemble, n: usize, output_bits: usize, delta: f64, epsilon: f64) -> Result<Self> {
        if ensemble.len() != 2 {
            return Err(Error::Validation("only two-letter sources are supported".into()));
        }
        if n == 0 || output_bits > 63 {
            return Err(Error::Validation(format!("bad block length {n} or output size 2^{output_bits}")));
        }
        if delta <= 0.0 || !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Validation(format!("need delta > 0 and 0 < epsilon < 1, got {delta}, {epsilon}")));
        }
        Ok(Self { ensemble, n, output_bits, delta, epsilon })
    }

    pub fn output_size(&self) -> u64 {
        1 << self.output_bits
    }
}

/// How the decoder builds its measurement operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    /// `Pi Pi_x Pi` for strongly typical `x`, zero otherwise.
    #[default]
    Rejecting,
    /// Support projectors of `rho_x`, no rejection.
    Plain,
}

/// Projector onto eigenvectors of `rho_1 (x) ... (x) rho_n` whose eigenvalue
/// lies in `[2^-(S+n delta), 2^-(S-n delta)]` with `S = sum_i S(rho_i)`.
/// Only the single-factor spectra are diagonalised.
fn product_typical_projector(eigs: &[&HermitianEigen], entropy: f64, delta: f64) -> ComplexMatrix {
    let n = eigs.len();
    let dims: Vec<usize> = eigs.iter().map(|e| e.values.len()).collect();
    let total: usize = dims.iter().product();
    let mut cols = Vec::new();
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        let lambda: f64 = idx.iter().zip(eigs).map(|(&i, e)| e.values[i]).product();
        if in_typical_window(lambda, entropy, n, delta) {
            let mut v = vec![crate::qmatrix::ONE];
            for (&i, e) in idx.iter().zip(eigs) {
                let col = e.vectors.column(i);
                v = v.iter().flat_map(|&a| col.iter().map(move |&b| a * b)).collect();
            }
            cols.push(v);
        }
        for k in (0..n).rev() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    let mut out = ComplexMatrix::zeros(total, total);
    for v in &cols {
        for i in 0..total {
            if v[i] == crate::qmatrix::ZERO {
                continue;
            }
            for j in 0..total {
                out[(i, j)] += v[i] * v[j].conj();
            }
        }
    }
    out
}

/// Typical projector of `rho^{(x) n}`.
pub fn typical_projector(rho: &ComplexMatrix, n: usize, delta: f64) -> Result<ComplexMatrix> {
    let d = rho.rows();
    if d.checked_pow(n as u32).is_none_or(|t| t > CODING_DIM_CAP) {
        return Err(Error::ResourceCap { dim: d.saturating_pow(n as u32), cap: CODING_DIM_CAP });
    }
    let eig = eig_hermitian(rho)?;
    let s = shannon_entropy(&eig.values);
    Ok(product_typical_projector(&vec![&eig; n], n as f64 * s, delta))
}

/// Strong typicality: every letter frequency is within `delta` of its
/// probability.
pub fn is_strongly_typical(x: u64, n: usize, p: &[f64], delta: f64) -> bool {
    let ones = (x & crate::gf2::mask(n)).count_ones() as f64;
    let freq = [(n as f64 - ones) / n as f64, ones / n as f64];
    freq.iter().zip(p).all(|(f, q)| (f - q).abs() <= delta + 1e-12)
}

/// Smallest eigenvalue of `[2(I - S) + 4T] - [I - (S+T)^{-1/2} S (S+T)^{-1/2}]`.
pub fn hn_lemma_check(s: &ComplexMatrix, t: &ComplexMatrix) -> Result<f64> {
    let d = s.rows();
    if !s.is_square() || t.rows() != d || !t.is_square() {
        return Err(Error::Dimension("S and T must be square and equal in size".into()));
    }
    let tol = 1e-10;
    let es = eig_hermitian(s)?;
    if es.values.first().is_some_and(|&l| l > 1.0 + tol) || es.values.last().is_some_and(|&l| l < -tol) {
        return Err(Error::Validation("S must satisfy 0 <= S <= I".into()));
    }
    if eig_hermitian(t)?.values.last().is_some_and(|&l| l < -tol) {
        return Err(Error::Validation("T must be positive semidefinite".into()));
    }
    let id = ComplexMatrix::identity(d);
    let r = pinv_sqrt(&(s + t))?;
    let lhs = &id - &r.dot(s).dot(&r);
    let rhs = &(&id - s).scale_real(2.0) + &t.scale_real(4.0);
    Ok(eig_hermitian(&(&rhs - &lhs))?.values.last().copied().unwrap_or(0.0))
}

/// `|Y| = 2^ceil(n (H - chi + 4 delta))`, returned as the exponent.
pub fn choose_output_bits(h_p: f64, chi: f64, delta: f64, n: usize) -> Result<usize> {
    if chi > h_p + 1e-12 {
        return Err(Error::Validation(format!("Holevo quantity {chi} exceeds source entropy {h_p}")));
    }
    let x = n as f64 * (h_p - chi + 4.0 * delta);
    // absorb rounding so that exact integers are not bumped up
    Ok((x - 1e-9).ceil().max(0.0) as usize)
}

pub fn choose_output_size(h_p: f64, chi: f64, delta: f64, n: usize) -> Result<u64> {
    let bits = choose_output_bits(h_p, chi, delta, n)?;
    if bits > 63 {
        return Err(Error::Validation(format!("output size 2^{bits} is too large")));
    }
    Ok(1 << bits)
}

/// `8 eps + 4 * 2^{n (H - chi + 3 delta)} / |Y|`.
pub fn coding_error_bound(inst: &CodingInstance) -> Result<f64> {
    let h = shannon_entropy(&inst.ensemble.probabilities());
    let chi = holevo_chi(&inst.ensemble)?;
    let n = inst.n as f64;
    Ok(8.0 * inst.epsilon + 4.0 * (n * (h - chi + 3.0 * inst.delta) - inst.output_bits as f64).exp2())
}

/// Per-string data shared by all hashes.
struct Signals {
    probs: Vec<f64>,
    states: Vec<ComplexMatrix>,
    lambdas: Vec<ComplexMatrix>,
}

fn signals(inst: &CodingInstance, decoder: Decoder) -> Result<Signals> {
    let n = inst.n;
    let items = inst.ensemble.items();
    let d = inst.ensemble.dim();
    if d.checked_pow(n as u32).is_none_or(|t| t > CODING_DIM_CAP) {
        return Err(Error::ResourceCap { dim: d.saturating_pow(n as u32), cap: CODING_DIM_CAP });
    }
    let p = inst.ensemble.probabilities();
    let letter_eigs: Vec<HermitianEigen> = items.iter().map(|(_, r)| eig_hermitian(r)).collect::<Result<_>>()?;
    let letter_s: Vec<f64> = items.iter().map(|(_, r)| von_neumann_entropy(r)).collect::<Result<_>>()?;
    let pi = match decoder {
        Decoder::Rejecting => Some(typical_projector(&inst.ensemble.average(), n, inst.delta)?),
        Decoder::Plain => None,
    };
    let mut out = Signals { probs: vec![], states: vec![], lambdas: vec![] };
    for x in 0..(1u64 << n) {
        let bits = crate::gf2::to_bits(x, n);
        out.probs.push(bits.iter().map(|&b| p[b as usize]).product());
        let rho = bits.iter().fold(ComplexMatrix::identity(1), |acc, &b| kron(&acc, &items[b as usize].1));
        let lambda = match &pi {
            None => support_projector(&rho)?,
            Some(pi) if is_strongly_typical(x, n, &p, inst.delta) => {
                let eigs: Vec<&HermitianEigen> = bits.iter().map(|&b| &letter_eigs[b as usize]).collect();
                let s: f64 = bits.iter().map(|&b| letter_s[b as usize]).sum();
                let pix = product_typical_projector(&eigs, s, inst.delta);
                pi.dot(&pix).dot(pi)
            }
            Some(_) => ComplexMatrix::zeros(rho.rows(), rho.rows()),
        };
        out.states.push(rho);
        out.lambdas.push(lambda);
    }
    Ok(out)
}

fn error_for_hash(sig: &Signals, f: &BinaryMatrix) -> Result<f64> {
    let mut cosets: Vec<Vec<usize>> = vec![Vec::new(); 1 << f.rows()];
    for x in 0..sig.probs.len() {
        cosets[f.apply(x as u64) as usize].push(x);
    }
    let mut success = 0.0;
    for coset in cosets.iter().filter(|c| !c.is_empty()) {
        let lambdas: Vec<ComplexMatrix> = coset.iter().map(|&x| sig.lambdas[x].clone()).collect();
        let povm = match pgm_from_operators(&lambdas) {
            Ok(p) => p,
            // every string in the coset was rejected
            Err(Error::DegenerateFamily(_)) => continue,
            Err(e) => return Err(e),
        };
        for (&x, e) in coset.iter().zip(&povm.elements) {
            success += sig.probs[x] * sig.states[x].dot(e).trace().re;
        }
    }
    Ok((1.0 - success).max(0.0))
}

/// Exact average decoding error `sum_x p_x (1 - Tr rho_x E_x)` for hash `f`.
pub fn coding_error_exact(inst: &CodingInstance, f: &BinaryMatrix, decoder: Decoder) -> Result<f64> {
    if f.cols() != inst.n || f.rows() != inst.output_bits {
        return Err(Error::Dimension(format!(
            "hash is {}x{}, expected {}x{}",
            f.rows(),
            f.cols(),
            inst.output_bits,
            inst.n
        )));
    }
    error_for_hash(&signals(inst, decoder)?, f)
}

/// Exact errors for `trials` uniformly random linear hashes.
pub fn sampled_errors(
    inst: &CodingInstance,
    trials: usize,
    decoder: Decoder,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let sig = signals(inst, decoder)?;
    (0..trials)
        .map(|_| error_for_hash(&sig, &random_linear_hash(inst.output_bits, inst.n, rng)))
        .collect()
}

/// Error averaged over every linear hash (needs `output_bits * n <= 16`).
pub fn family_average_error(inst: &CodingInstance, decoder: Decoder) -> Result<f64> {
    let (m, n) = (inst.output_bits, inst.n);
    if m * n > 16 {
        return Err(Error::ResourceCap { dim: 1 << (m * n).min(63), cap: 1 << 16 });
    }
    let sig = signals(inst, decoder)?;
    let count = 1u64 << (m * n);
    let mut total = 0.0;
    for code in 0..count {
        let rows = (0..m).map(|i| (code >> (i * n)) & crate::gf2::mask(n)).collect();
        total += error_for_hash(&sig, &BinaryMatrix::new(m, n, rows)?)?;
    }
    Ok(total / count as f64)
}

/// Bits learned from the source minus bits announced, and `n chi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationAccounting {
    pub source_bits: f64,
    pub announced_bits: f64,
    pub holevo_bits: f64,
}

impl InformationAccounting {
    pub fn gap(&self) -> f64 {
        (self.source_bits - self.announced_bits - self.holevo_bits).abs()
    }
}

pub fn information_accounting(inst: &CodingInstance) -> Result<InformationAccounting> {
    let n = inst.n as f64;
    Ok(InformationAccounting {
        source_bits: n * shannon_entropy(&inst.ensemble.probabilities()),
        announced_bits: inst.output_bits as f64,
        holevo_bits: n * holevo_chi(&inst.ensemble)?,
    })
}

/// `{1/2 |0>, 1/2 (cos t |0> + sin t |1>)}`.
pub fn two_state_ensemble(theta: f64) -> Ensemble {
    let ket = |a: f64, b: f64| ComplexMatrix::ket(vec![C64::new(a, 0.0), C64::new(b, 0.0)]);
    let zero = ket(1.0, 0.0).outer_self();
    let tilt = ket(theta.cos(), theta.sin()).outer_self();
    Ensemble::uniform(vec![zero, tilt]).expect("valid qubit states")
}
