//! Private-state distillation from n copies of a purified attack state, and
//! the classical privacy-amplification path it is equivalent to.
//!
//! Pipeline: `n_copies` -> `announce_hash` (virtual split by the hash, Alice
//! announces the x-basis values of the hash bits, Bob corrects with `Z^h`)
//! -> `ybar_operators` -> `untwisting` -> `success_probability`.
//!
//! After the announcement the state has the form
//! `sum_l |l>_A1 |l>_B1 |phi^l>_{B2 S E}`. Each `phi^l` is handled as the
//! (B2S x E) matrix `M^l`; stacking them gives `W = sum_l |l> (x) M^l`, and
//! Bob's state given Alice's x-basis outcome `y` is `Z^y W W^dag Z^y`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::{basis_change, complete_basis, dot, null_space, random_full_rank_hash, BinaryMatrix};
use crate::infotheory::{fidelity_pure, fvg_bound, in_typical_window, shannon_entropy, trace_distance};
use crate::privstate::epsilon_from_measurement;
use crate::qmatrix::{
    apply_spectral, bipartite_matrix, eig_hermitian, kron, pinv_sqrt, pinv_sqrt_with_support, polar_unitary_embedded,
    support_projector,
    ComplexMatrix, C64, ONE, ZERO,
};
use crate::states::{
    self, cq_components, hadamard_rows, measure_key, n_copies, purify_with_shield, KeyMeasurement, Label,
    MultipartiteState, Subsystem, DEFAULT_DIM_CAP,
};

/// Which operators the pretty good measurement is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Typicality {
    /// The weighted states `p_y rho^y` themselves (the usual square-root
    /// measurement).
    #[default]
    Weighted,
    /// Support projectors of the states. When all `rho^y` share a support,
    /// as they do for the two-state attacks, this measurement is blind.
    Off,
    /// Eigenvalues within `2^-(S +- copies*delta)` of each state's entropy `S`.
    On { delta: f64, copies: usize },
}

/// A POVM on the support of its defining operators. `elements[y]` belongs to
/// outcome `y`.
#[derive(Debug, Clone)]
pub struct Povm {
    pub elements: Vec<ComplexMatrix>,
    /// `||sum_y E^y - P||_F` where `P` projects onto the support of `T`.
    pub completeness_deviation: f64,
}

/// Splits Alice's and Bob's qubits into key (A1/B1) and hash (A2/B2) virtual
/// qubits using the completed basis `G = [D; u]`.
pub fn virtual_split(psi: &MultipartiteState, u: &BinaryMatrix) -> Result<MultipartiteState> {
    let psi = psi.canonical()?;
    let n = psi.factors_of(&[Label::A]).len();
    if n == 0 || psi.factors_of(&[Label::B]).len() != n {
        return Err(Error::Validation("expected n qubit key registers on each side".into()));
    }
    if u.cols() != n {
        return Err(Error::Dimension(format!("hash acts on {} bits but there are {} copies", u.cols(), n)));
    }
    let g = complete_basis(u)?;
    let changed = basis_change(&g, &basis_change(&g, &psi, Label::A)?, Label::B)?;
    let key_bits = n - u.rows();
    let mut seen_a = 0;
    let mut seen_b = 0;
    let subs = changed
        .subsystems()
        .iter()
        .map(|s| match s.0 {
            Label::A => {
                seen_a += 1;
                Subsystem(if seen_a <= key_bits { Label::A1 } else { Label::A2 }, s.1)
            }
            Label::B => {
                seen_b += 1;
                Subsystem(if seen_b <= key_bits { Label::B1 } else { Label::B2 }, s.1)
            }
            _ => *s,
        })
        .collect();
    changed.relabeled(subs)?.canonical()
}

/// Probabilities of Alice's announcement `h` (x-basis outcomes of A2).
pub fn announcement_distribution(split: &MultipartiteState) -> Result<Vec<f64>> {
    let a2 = split.factors_of(&[Label::A2]);
    let m = bipartite_matrix(split.matrix().data(), &split.dims(), &a2)?;
    let mx = hadamard_rows(&m, a2.len());
    Ok((0..mx.rows())
        .map(|h| (0..mx.cols()).map(|c| mx[(h, c)].norm_sqr()).sum())
        .collect())
}

/// `Psi'` for a given announcement: A2 projected onto `|h~>`, `Z^h` on B2,
/// renormalised. Factors are A1, B1, B2, S.., E.., with B2 now part of the
/// shield.
pub fn post_announcement(split: &MultipartiteState, h: u64) -> Result<MultipartiteState> {
    let split = split.canonical()?;
    let a2 = split.factors_of(&[Label::A2]);
    let bits = a2.len();
    let dims = split.dims();
    let m = bipartite_matrix(split.matrix().data(), &dims, &a2)?;
    let mx = hadamard_rows(&m, bits);
    let h = h as usize;
    if h >= mx.rows() {
        return Err(Error::Validation(format!("announcement {h} out of range")));
    }
    let subs: Vec<Subsystem> = split.subsystems().iter().copied().filter(|s| s.0 != Label::A2).collect();
    let b2_start = subs.iter().position(|s| s.0 == Label::B2).unwrap_or(subs.len());
    let before: usize = subs[..b2_start].iter().map(|s| s.1).product();
    let b2_dim: usize = 1 << bits;
    let after: usize = subs[b2_start + bits..].iter().map(|s| s.1).product();
    let mut amp: Vec<C64> = (0..mx.cols()).map(|c| mx[(h, c)]).collect();
    for outer in 0..before {
        for b2 in 0..b2_dim {
            if dot(h as u64, b2 as u64) == 1 {
                let base = (outer * b2_dim + b2) * after;
                amp[base..base + after].iter_mut().for_each(|z| *z = -*z);
            }
        }
    }
    MultipartiteState::pure_normalized(ComplexMatrix::ket(amp), subs)
}

/// Samples Alice's announcement by the Born rule and returns `(Psi', h)`
/// with `h` as a bit vector (first hash row first).
pub fn announce_hash(
    psi: &MultipartiteState,
    u: &BinaryMatrix,
    rng: &mut impl Rng,
) -> Result<(MultipartiteState, Vec<u8>)> {
    let split = virtual_split(psi, u)?;
    let dist = announcement_distribution(&split)?;
    let h = sample(&dist, rng);
    let post = post_announcement(&split, h as u64)?;
    Ok((post, crate::gf2::to_bits(h as u64, u.rows())))
}

fn sample(dist: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = dist.iter().sum();
    let r: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if r < acc {
            return i;
        }
    }
    last
}

/// Shape of a post-announcement state.
#[derive(Debug, Clone, Copy)]
struct Layout {
    key_bits: usize,
    /// dim B2 * dim S
    shield: usize,
    eve: usize,
}

fn layout(psi_prime: &MultipartiteState) -> Result<Layout> {
    let labels: Vec<Label> = psi_prime.subsystems().iter().map(|s| s.0).collect();
    let mut sorted = labels.clone();
    sorted.sort();
    if labels != sorted || labels.iter().any(|l| matches!(l, Label::A | Label::A2 | Label::B)) {
        return Err(Error::Validation(format!("not a post-announcement state: {labels:?}")));
    }
    let key_bits = psi_prime.factors_of(&[Label::A1]).len();
    if psi_prime.factors_of(&[Label::B1]).len() != key_bits {
        return Err(Error::Validation("A1 and B1 differ in size".into()));
    }
    Ok(Layout {
        key_bits,
        shield: psi_prime.dim_of(&[Label::B2, Label::S]),
        eve: psi_prime.dim_of(&[Label::E]),
    })
}

/// The (B2S x E) matrices `M^l` of `Psi' = sum_l |ll>_{A1B1} |phi^l>`.
/// Fails if A1 and B1 are not perfectly correlated in the z basis.
pub fn phi_hat(psi_prime: &MultipartiteState) -> Result<Vec<ComplexMatrix>> {
    let lay = layout(psi_prime)?;
    let amp = psi_prime
        .amplitudes()
        .ok_or_else(|| Error::Validation("post-announcement state must be pure".into()))?;
    let k = 1usize << lay.key_bits;
    let block = lay.shield * lay.eve;
    let mut out = Vec::with_capacity(k);
    for a in 0..k {
        for b in 0..k {
            let chunk = &amp[(a * k + b) * block..(a * k + b + 1) * block];
            if a == b {
                out.push(ComplexMatrix::new(lay.shield, lay.eve, chunk.to_vec())?);
            } else if chunk.iter().any(|z| z.norm() > 1e-10) {
                return Err(Error::Validation("A1 and B1 are not perfectly correlated".into()));
            }
        }
    }
    Ok(out)
}

/// Bob and shield's states `(prior, rho^y)` on B1, B2, S given Alice's
/// x-basis outcome `y` on A1.
pub fn conditional_family(psi_prime: &MultipartiteState) -> Result<Vec<(f64, ComplexMatrix)>> {
    layout(psi_prime)?;
    Ok(states::conditional_bs_states(psi_prime)?
        .into_iter()
        .map(|b| {
            let d = psi_prime.dim_of(&[Label::B1, Label::B2, Label::S]);
            (b.probability, b.state.unwrap_or_else(|| ComplexMatrix::zeros(d, d)))
        })
        .collect())
}

/// Projector onto the typical eigenvectors of a density operator, or onto
/// its support when typicality is off.
fn state_projector(rho: &ComplexMatrix, typ: Typicality) -> Result<ComplexMatrix> {
    match typ {
        Typicality::Off | Typicality::Weighted => support_projector(rho),
        Typicality::On { delta, copies } => {
            let eig = eig_hermitian(rho)?;
            let s = shannon_entropy(&eig.values);
            Ok(apply_spectral(&eig, |l| in_typical_window(l, s, copies, delta) as u8 as f64))
        }
    }
}

/// PGM `E^y = T^{-1/2} L^y T^{-1/2}` with `T = sum_y L^y`, pseudo-inverse on
/// the support of `T`.
pub fn pgm_from_operators(lambdas: &[ComplexMatrix]) -> Result<Povm> {
    let d = lambdas.first().map_or(0, ComplexMatrix::rows);
    let t = lambdas.iter().fold(ComplexMatrix::zeros(d, d), |acc, l| &acc + l);
    if t.max_abs() == 0.0 {
        return Err(Error::DegenerateFamily("all measurement operators vanish".into()));
    }
    let (t_inv, support) = pinv_sqrt_with_support(&t)?;
    let elements: Vec<ComplexMatrix> = lambdas.iter().map(|l| t_inv.dot(l).dot(&t_inv)).collect();
    let sum = elements.iter().fold(ComplexMatrix::zeros(d, d), |acc, e| &acc + e);
    let completeness_deviation = (&sum - &support).frobenius_norm();
    Ok(Povm { elements, completeness_deviation })
}

/// Pretty good measurement for the family `(prior, rho^y)`. Typicality on
/// or off uses the projectors `P P^y P`, where `P^y` belongs to `rho^y` and
/// `P` to the average state (identity when off); the weighted form uses
/// `p_y rho^y`. Outcomes with zero prior get the zero element.
pub fn pgm(family: &[(f64, ComplexMatrix)], typ: Typicality) -> Result<Povm> {
    if family.is_empty() {
        return Err(Error::DegenerateFamily("empty family".into()));
    }
    let d = family[0].1.rows();
    let total: f64 = family.iter().map(|(p, _)| p).sum();
    let avg = family
        .iter()
        .fold(ComplexMatrix::zeros(d, d), |acc, (p, r)| &acc + &r.scale_real(p / total));
    let outer = match typ {
        Typicality::Off | Typicality::Weighted => None,
        Typicality::On { .. } => Some(state_projector(&avg, typ)?),
    };
    let lambdas = family
        .iter()
        .map(|(p, rho)| {
            if *p <= 0.0 {
                return Ok(ComplexMatrix::zeros(d, d));
            }
            if typ == Typicality::Weighted {
                return Ok(rho.scale_real(*p));
            }
            let py = state_projector(rho, typ)?;
            Ok(match &outer {
                Some(pi) => pi.dot(&py).dot(pi),
                None => py,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    pgm_from_operators(&lambdas)
}

/// Operators `Ybar^l` (B2S x E) with
/// `L^y = Z^y (sum_{l l'} |l><l'| (x) Ybar^l Ybar^l'^dag) Z^y`, where `L^y` is
/// the operator `pgm` builds for outcome `y`. Everything is computed in Eve's
/// space from `W^dag W = sum_l M^l^dag M^l`.
pub fn ybar_operators(psi_prime: &MultipartiteState, typ: Typicality) -> Result<Vec<ComplexMatrix>> {
    let m = phi_hat(psi_prime)?;
    let de = m[0].cols();
    let gram = m.iter().fold(ComplexMatrix::zeros(de, de), |acc, mk| &acc + &mk.adjoint().dot(mk));
    match typ {
        Typicality::Weighted => {
            // p_y rho^y = 2^-k Z^y W W^dag Z^y
            let scale = (m.len() as f64).powf(-0.5);
            Ok(m.iter().map(|mk| mk.scale_real(scale)).collect())
        }
        Typicality::Off => {
            let g = pinv_sqrt(&gram)?;
            Ok(m.iter().map(|mk| mk.dot(&g)).collect())
        }
        Typicality::On { delta, copies } => {
            // the spectrum of W^dag W is that of rho^0
            let eig = eig_hermitian(&gram)?;
            let s = shannon_entropy(&eig.values);
            let g_half =
                apply_spectral(&eig, |l| if in_typical_window(l, s, copies, delta) { 1.0 / l.sqrt() } else { 0.0 });
            // the average state is block diagonal with blocks M^l M^l^dag
            let blocks: Vec<_> = m.iter().map(|mk| eig_hermitian(&mk.adjoint().dot(mk))).collect::<Result<_>>()?;
            let s_avg = shannon_entropy(&blocks.iter().flat_map(|b| b.values.iter().copied()).collect::<Vec<_>>());
            m.iter()
                .zip(&blocks)
                .map(|(mk, b)| {
                    let f = apply_spectral(b, |l| if in_typical_window(l, s_avg, copies, delta) { 1.0 / l } else { 0.0 });
                    let pi_l = mk.dot(&f).dot(&mk.adjoint());
                    Ok(pi_l.dot(mk).dot(&g_half))
                })
                .collect()
        }
    }
}

/// Polar unitaries `Vbar^l` of the `Ybar^l` padded with zero columns to
/// square (needs dim E <= dim B2S).
pub fn untwisting_blocks(ybars: &[ComplexMatrix]) -> Result<Vec<ComplexMatrix>> {
    ybars
        .iter()
        .map(|y| {
            if y.cols() > y.rows() {
                return Err(Error::Dimension(format!(
                    "Eve's space ({}) is larger than Bob's shield ({})",
                    y.cols(),
                    y.rows()
                )));
            }
            polar_unitary_embedded(y, y.rows())
        })
        .collect()
}

/// `Ubar = sum_l P^l_B1 (x) Vbar^l_{B2S}` as one block-diagonal matrix.
pub fn untwisting(ybars: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    Ok(block_diagonal(&untwisting_blocks(ybars)?))
}

fn block_diagonal(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let d = blocks.first().map_or(0, ComplexMatrix::rows);
    let n = d * blocks.len();
    let mut out = ComplexMatrix::zeros(n, n);
    for (l, b) in blocks.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                out[(l * d + i, l * d + j)] = b[(i, j)];
            }
        }
    }
    out
}

/// Untwisted measurement `E^y = Ubar (|y~><y~| (x) 1) Ubar^dag`.
pub fn untwisted_povm(ubar: &ComplexMatrix, key_bits: usize) -> Vec<ComplexMatrix> {
    let k = 1usize << key_bits;
    let rest = ubar.rows() / k;
    let norm = 1.0 / k as f64;
    (0..k)
        .map(|y| {
            let signs: Vec<C64> = (0..k)
                .map(|l| if dot(y as u64, l as u64) == 1 { -ONE } else { ONE } * norm.sqrt())
                .collect();
            let proj = ComplexMatrix::ket(signs).outer_self();
            let p = kron(&proj, &ComplexMatrix::identity(rest));
            ubar.dot(&p).dot(&ubar.adjoint())
        })
        .collect()
}

/// Largest operator-norm gap between the pretty good measurement of
/// `psi_prime`'s conditional family and the untwisted x-basis measurement,
/// compared on the support of `T = sum_y Lambda^y`.
pub fn untwisted_form_deviation(psi_prime: &MultipartiteState, typ: Typicality) -> Result<f64> {
    let direct = pgm(&conditional_family(psi_prime)?, typ)?;
    let ubar = untwisting(&ybar_operators(psi_prime, typ)?)?;
    let untwisted = untwisted_povm(&ubar, psi_prime.factors_of(&[Label::A1]).len());
    let d = ubar.rows();
    let t = direct.elements.iter().fold(ComplexMatrix::zeros(d, d), |a, e| &a + e);
    let pt = support_projector(&t)?;
    let mut dev: f64 = 0.0;
    for (a, b) in direct.elements.iter().zip(&untwisted) {
        dev = dev.max((a - &pt.dot(b).dot(&pt)).operator_norm());
    }
    Ok(dev)
}

/// Three independent evaluations of the success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    /// `2^-(n-m) || sum_l Vbar^l^dag phi^l ||^2`.
    pub formula: f64,
    /// `<Phi|Psi''_A1B1|Phi>` for the maximally entangled key state.
    pub fidelity_squared: f64,
    /// Born-rule probability that Alice's and Bob's x-basis outcomes agree
    /// after Bob applies `Ubar^dag`.
    pub agreement: f64,
}

/// `Psi''`: Bob's untwisting `Ubar^dag` applied to `Psi'`.
pub fn untwisted_state(psi_prime: &MultipartiteState, vbars: &[ComplexMatrix]) -> Result<MultipartiteState> {
    let lay = layout(psi_prime)?;
    let amp = psi_prime.amplitudes().ok_or_else(|| Error::Validation("state must be pure".into()))?;
    let k = 1usize << lay.key_bits;
    if vbars.len() != k || vbars.iter().any(|v| v.rows() != lay.shield) {
        return Err(Error::Dimension("untwisting does not match the state".into()));
    }
    let block = lay.shield * lay.eve;
    let mut out = vec![ZERO; amp.len()];
    for a in 0..k {
        for (b, vb) in vbars.iter().enumerate() {
            let off = (a * k + b) * block;
            let mtx = ComplexMatrix::new(lay.shield, lay.eve, amp[off..off + block].to_vec())?;
            let turned = vb.adjoint().dot(&mtx);
            out[off..off + block].copy_from_slice(turned.data());
        }
    }
    MultipartiteState::pure(ComplexMatrix::ket(out), psi_prime.subsystems().to_vec())
}

/// `|Phi>^{(x) k}` on A1 (all bits) then B1 (all bits).
pub fn max_entangled(key_bits: usize) -> ComplexMatrix {
    let k = 1usize << key_bits;
    let mut v = vec![ZERO; k * k];
    let a = C64::new((k as f64).powf(-0.5), 0.0);
    for l in 0..k {
        v[l * k + l] = a;
    }
    ComplexMatrix::ket(v)
}

/// In-place Walsh-Hadamard transform along the middle axis of an
/// `outer x dim x inner` array.
fn hadamard_axis(data: &mut [C64], outer: usize, dim: usize, inner: usize) {
    let scale = (dim as f64).powf(-0.5);
    for o in 0..outer {
        let base = o * dim * inner;
        let mut h = 1;
        while h < dim {
            for start in (0..dim).step_by(2 * h) {
                for r in start..start + h {
                    for c in 0..inner {
                        let i = base + r * inner + c;
                        let j = base + (r + h) * inner + c;
                        let (x, y) = (data[i], data[j]);
                        data[i] = x + y;
                        data[j] = x - y;
                    }
                }
            }
            h *= 2;
        }
        for z in &mut data[base..base + dim * inner] {
            *z *= scale;
        }
    }
}

pub fn success_probability(psi_prime: &MultipartiteState, vbars: &[ComplexMatrix]) -> Result<SuccessReport> {
    let lay = layout(psi_prime)?;
    let k = 1usize << lay.key_bits;
    let m = phi_hat(psi_prime)?;
    let mut acc = ComplexMatrix::zeros(lay.shield, lay.eve);
    for (v, mk) in vbars.iter().zip(&m) {
        acc = &acc + &v.adjoint().dot(mk);
    }
    let formula = acc.frobenius_norm().powi(2) / k as f64;

    let post = untwisted_state(psi_prime, vbars)?;
    let keys = post.factors_where(|l| matches!(l, Label::A1 | Label::B1));
    let rho = post.marginal_factors(&keys)?;
    let f = fidelity_pure(&max_entangled(lay.key_bits), rho.matrix())?;

    let mut amp = post.matrix().data().to_vec();
    let rest = lay.shield * lay.eve;
    hadamard_axis(&mut amp, 1, k, k * rest);
    hadamard_axis(&mut amp, k, k, rest);
    let agreement = (0..k)
        .map(|y| amp[(y * k + y) * rest..(y * k + y + 1) * rest].iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum();
    Ok(SuccessReport { formula, fidelity_squared: f * f, agreement })
}

/// Options for `distill`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillOptions {
    pub typicality: Typicality,
    pub dim_cap: usize,
    /// Also compute the trace distance of the key state to `Phi` (costly for
    /// long keys).
    pub trace_distance: bool,
}

impl Default for DistillOptions {
    fn default() -> Self {
        Self { typicality: Typicality::Weighted, dim_cap: DEFAULT_DIM_CAP, trace_distance: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillationOutcome {
    pub n: usize,
    pub m: usize,
    pub hash: BinaryMatrix,
    pub announced_bits: Vec<u8>,
    /// `Psi''` reduced to A1, B1.
    pub post_state: MultipartiteState,
    pub success_probability: f64,
    pub success: SuccessReport,
    /// `sqrt(1 - P_s)`.
    pub privacy_epsilon: f64,
    /// `||Psi''_A1B1 - Phi||_1`, when computed.
    pub trace_distance: Option<f64>,
    /// `2 sqrt(1 - P_s)`.
    pub trace_distance_bound: f64,
    pub rate_used: f64,
}

/// Accepts a purified single-copy state on A, B, S, E or a cq state on
/// A, B, E (which is purified first).
pub fn purified(psi: &MultipartiteState) -> Result<MultipartiteState> {
    if psi.is_pure() {
        psi.canonical()
    } else {
        purify_with_shield(psi)
    }
}

/// Full distillation run with a fresh random full-rank hash of `m` rows.
pub fn distill(
    psi: &MultipartiteState,
    n: usize,
    m: usize,
    rng: &mut impl Rng,
    opts: DistillOptions,
) -> Result<DistillationOutcome> {
    if m > n {
        return Err(Error::Validation(format!("cannot announce {m} of {n} bits")));
    }
    let u = random_full_rank_hash(m, n, rng)?;
    distill_with_hash(psi, &u, rng, opts)
}

pub fn distill_with_hash(
    psi: &MultipartiteState,
    u: &BinaryMatrix,
    rng: &mut impl Rng,
    opts: DistillOptions,
) -> Result<DistillationOutcome> {
    let (n, m) = (u.cols(), u.rows());
    let single = purified(psi)?;
    let big = n_copies(&single, n, opts.dim_cap)?;
    let (psi_prime, h) = announce_hash(&big, u, rng)?;
    let ybars = ybar_operators(&psi_prime, opts.typicality)?;
    let vbars = untwisting_blocks(&ybars)?;
    let success = success_probability(&psi_prime, &vbars)?;
    let post = untwisted_state(&psi_prime, &vbars)?;
    let keys = post.factors_where(|l| matches!(l, Label::A1 | Label::B1));
    let post_state = post.marginal_factors(&keys)?;
    let ps = success.formula.clamp(0.0, 1.0);
    let trace_distance = if opts.trace_distance {
        Some(trace_distance(post_state.matrix(), &max_entangled(n - m).outer_self())?)
    } else {
        None
    };
    Ok(DistillationOutcome {
        n,
        m,
        hash: u.clone(),
        announced_bits: h,
        post_state,
        success_probability: ps,
        success,
        privacy_epsilon: (1.0 - ps).max(0.0).sqrt(),
        trace_distance,
        trace_distance_bound: fvg_bound(ps.sqrt()),
        rate_used: (n - m) as f64 / n as f64,
    })
}

/// Outcome of hashing measured key strings with `v`.
#[derive(Debug, Clone)]
pub struct ClassicalPaOutcome {
    /// Probability of each hashed key value.
    pub key_distribution: Vec<f64>,
    /// Eve's state given each key value (`None` at zero probability).
    pub eve_conditionals: Vec<Option<ComplexMatrix>>,
    /// Distance of the hashed cq state from a perfect key.
    pub epsilon: f64,
}

/// Measures all `n` copies in the z basis and keeps `v z` as the key.
pub fn classical_pa(psi: &MultipartiteState, n: usize, v: &BinaryMatrix) -> Result<ClassicalPaOutcome> {
    if v.cols() != n {
        return Err(Error::Dimension(format!("key map acts on {} bits, expected {n}", v.cols())));
    }
    let abe = if psi.is_pure() {
        psi.marginal(&[Label::A, Label::B, Label::E])?
    } else {
        psi.clone()
    };
    let comps = cq_components(&abe)?;
    if comps.len() != 2 {
        return Err(Error::Validation("key registers must be qubits".into()));
    }
    let de1 = abe.dim_of(&[Label::E]);
    let de = de1.checked_pow(n as u32).filter(|&d| d <= 1 << 12).ok_or(Error::ResourceCap {
        dim: usize::MAX,
        cap: 1 << 12,
    })?;
    let keys = 1usize << v.rows();
    let mut weights = vec![0.0; keys];
    let mut eve = vec![ComplexMatrix::zeros(de, de); keys];
    for z in 0..(1u64 << n) {
        let bits = crate::gf2::to_bits(z, n);
        let mut p = 1.0;
        let mut rho = ComplexMatrix::identity(1);
        for &b in &bits {
            let (pb, r) = &comps[b as usize];
            p *= pb;
            match r {
                Some(r) => rho = kron(&rho, r),
                None => break,
            }
        }
        if p <= 0.0 {
            continue;
        }
        let key = v.apply(z) as usize;
        weights[key] += p;
        eve[key] = &eve[key] + &rho.scale_real(p);
    }
    let eve_conditionals: Vec<Option<ComplexMatrix>> = eve
        .into_iter()
        .zip(&weights)
        .map(|(e, &w)| (w > 0.0).then(|| e.scale_real(1.0 / w)))
        .collect();
    let meas = KeyMeasurement {
        joint: (0..keys)
            .map(|j| (0..keys).map(|k| if j == k { weights[j] } else { 0.0 }).collect())
            .collect(),
        eve: (0..keys)
            .map(|j| (0..keys).map(|k| if j == k { eve_conditionals[j].clone() } else { None }).collect())
            .collect(),
    };
    let epsilon = epsilon_from_measurement(&meas)?;
    Ok(ClassicalPaOutcome { key_distribution: weights, eve_conditionals, epsilon })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub n: usize,
    pub m: usize,
    pub hash: BinaryMatrix,
    pub key_map: BinaryMatrix,
    pub announced_bits: Vec<u8>,
    /// Largest difference between key probabilities of the two paths,
    /// including any weight on disagreeing A1/B1 outcomes.
    pub max_key_deviation: f64,
    /// Largest entrywise difference between Eve's conditional states.
    pub max_eve_deviation: f64,
    pub max_deviation: f64,
    pub passed: bool,
}

fn compare(classical: &ClassicalPaOutcome, meas: &KeyMeasurement) -> (f64, f64) {
    let mut key_dev: f64 = 0.0;
    let mut eve_dev: f64 = 0.0;
    for (j, row) in meas.joint.iter().enumerate() {
        for (k, &p) in row.iter().enumerate() {
            let target = if j == k { classical.key_distribution[j] } else { 0.0 };
            key_dev = key_dev.max((p - target).abs());
        }
        if let (Some(a), Some(b)) = (&meas.eve[j][j], &classical.eve_conditionals[j]) {
            eve_dev = eve_dev.max(a.max_abs_diff(b));
        } else if meas.eve[j][j].is_some() != classical.eve_conditionals[j].is_some() {
            let pj = meas.joint[j][j].max(classical.key_distribution[j]);
            if pj > 1e-12 {
                eve_dev = eve_dev.max(1.0);
            }
        }
    }
    (key_dev, eve_dev)
}

/// Runs classical privacy amplification with the null space of `u` and the
/// virtual distillation path with hash `u`, and compares the key statistics
/// and Eve's views. The virtual path is checked both on the split state
/// before the announcement and on `Psi'` after it.
pub fn equivalence_check(
    psi: &MultipartiteState,
    n: usize,
    u: &BinaryMatrix,
    rng: &mut impl Rng,
) -> Result<EquivalenceReport> {
    let v = null_space(u);
    let classical = classical_pa(psi, n, &v)?;
    let single = purified(psi)?;
    let big = n_copies(&single, n, DEFAULT_DIM_CAP)?;
    let split = virtual_split(&big, u)?;
    let before = measure_key(&split)?;
    let dist = announcement_distribution(&split)?;
    let h = sample(&dist, rng);
    let after = measure_key(&post_announcement(&split, h as u64)?)?;
    let (k1, e1) = compare(&classical, &before);
    let (k2, e2) = compare(&classical, &after);
    let max_key_deviation = k1.max(k2);
    let max_eve_deviation = e1.max(e2);
    let max_deviation = max_key_deviation.max(max_eve_deviation);
    Ok(EquivalenceReport {
        n,
        m: u.rows(),
        hash: u.clone(),
        key_map: v,
        announced_bits: crate::gf2::to_bits(h as u64, u.rows()),
        max_key_deviation,
        max_eve_deviation,
        max_deviation,
        passed: max_deviation <= 1e-9,
    })
}

/// Announced bits for `n` copies at key rate `rate` plus `margin`:
/// `ceil(n (1 - rate) + margin)`, capped at `n`.
pub fn announced_bits_for_rate(n: usize, rate: f64, margin: f64) -> usize {
    ((n as f64 * (1.0 - rate) + margin).ceil().max(0.0) as usize).min(n)
}

/// Helper for tests and reports: the trace distance of the key state to the
/// maximally entangled state and its bound from `P_s`.
pub fn privacy_bound_holds(outcome: &DistillationOutcome, slack: f64) -> Option<bool> {
    outcome.trace_distance.map(|t| t <= outcome.trace_distance_bound + slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::{hadamard, unitarity_error};
    use crate::random::random_pure;
    use crate::states::{attack_state, perfect_key, theta_attack};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ket(v: &[f64]) -> ComplexMatrix {
        ComplexMatrix::ket(v.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    fn attack(theta: f64) -> MultipartiteState {
        purified(&theta_attack(theta).unwrap()).unwrap()
    }

    fn random_attack(rng: &mut ChaCha8Rng) -> MultipartiteState {
        purified(&attack_state(&random_pure(2, rng), &random_pure(2, rng)).unwrap()).unwrap()
    }

    fn all_hashes(m: usize, n: usize) -> Vec<BinaryMatrix> {
        let mut out = Vec::new();
        for code in 0..(1u64 << (m * n)) {
            let rows = (0..m).map(|i| (code >> (i * n)) & ((1 << n) - 1)).collect();
            let u = BinaryMatrix::new(m, n, rows).unwrap();
            if u.rank() == m {
                out.push(u);
            }
        }
        out
    }

    #[test]
    fn no_announcement_keeps_state() {
        let psi = attack(0.7);
        let big = n_copies(&psi, 2, DEFAULT_DIM_CAP).unwrap();
        let u = BinaryMatrix::zeros(0, 2);
        let (post, h) = announce_hash(&big, &u, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(h.is_empty());
        assert!(post.matrix().max_abs_diff(big.matrix()) < 1e-15);
        let labels: Vec<Label> = post.subsystems().iter().map(|s| s.0).collect();
        assert_eq!(labels[..4], [Label::A1, Label::A1, Label::B1, Label::B1]);
    }

    #[test]
    fn full_disclosure_leaves_no_key() {
        let psi = attack(0.7);
        let big = n_copies(&psi, 2, DEFAULT_DIM_CAP).unwrap();
        let u = BinaryMatrix::identity(2);
        let (post, h) = announce_hash(&big, &u, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(h.len(), 2);
        assert!(post.factors_of(&[Label::A1, Label::B1]).is_empty());
        let ybars = ybar_operators(&post, Typicality::Off).unwrap();
        let vbars = untwisting_blocks(&ybars).unwrap();
        let s = success_probability(&post, &vbars).unwrap();
        assert!((s.formula - 1.0).abs() < 1e-12);
    }

    /// Rebuilds `Psi'` at n = 2, m = 1 from single-copy amplitudes, using the
    /// relabelled components `phi^{G^T (l, m)}` and the announcement's sign
    /// pattern, without any basis-change machinery.
    #[test]
    fn post_announcement_matches_component_form() {
        let psi = attack(0.9);
        let single = psi.matrix().data().to_vec(); // A, B, S, E with dims 2, 2, 2, 2
        let phi = |k: usize| -> Vec<C64> { single[(k * 2 + k) * 4..(k * 2 + k + 1) * 4].to_vec() };
        let big = n_copies(&psi, 2, DEFAULT_DIM_CAP).unwrap();
        for u in all_hashes(1, 2) {
            let g = complete_basis(&u).unwrap();
            let git = g.inverse().unwrap().transpose();
            let split = virtual_split(&big, &u).unwrap();
            let dist = announcement_distribution(&split).unwrap();
            for h in 0..2u64 {
                if dist[h as usize] < 1e-12 {
                    continue;
                }
                let post = post_announcement(&split, h).unwrap();
                // amplitude of |l>_A1 |l>_B1 |b2>_B2 |s1 s2>_S |e1 e2>_E
                let mut expect = vec![ZERO; post.dim()];
                for z in 0..4u64 {
                    let w = git.apply(z); // virtual label (l, b2)
                    let (l, b2) = ((w >> 1) as usize, (w & 1) as usize);
                    let (z1, z2) = ((z >> 1) as usize, (z & 1) as usize);
                    let sign = if dot(h, w & 1) == 1 { -1.0 } else { 1.0 };
                    let sign = sign * if dot(h, b2 as u64) == 1 { -1.0 } else { 1.0 };
                    let (p1, p2) = (phi(z1), phi(z2));
                    for s1 in 0..2 {
                        for s2 in 0..2 {
                            for e1 in 0..2 {
                                for e2 in 0..2 {
                                    let a = p1[s1 * 2 + e1] * p2[s2 * 2 + e2] * sign;
                                    let idx = ((((l * 2 + l) * 2 + b2) * 4 + s1 * 2 + s2) * 4) + e1 * 2 + e2;
                                    expect[idx] += a;
                                }
                            }
                        }
                    }
                }
                let nrm = expect.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let expect = ComplexMatrix::ket(expect).scale_real(1.0 / nrm);
                assert!(post.matrix().max_abs_diff(&expect) < 1e-12, "u={u:?} h={h}");
            }
        }
    }

    #[test]
    fn post_announcement_is_independent_of_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_attack(&mut rng);
        let big = n_copies(&psi, 3, DEFAULT_DIM_CAP).unwrap();
        let u = random_full_rank_hash(2, 3, &mut rng).unwrap();
        let split = virtual_split(&big, &u).unwrap();
        let dist = announcement_distribution(&split).unwrap();
        assert!(dist.iter().all(|&p| (p - 0.25).abs() < 1e-12));
        let first = post_announcement(&split, 0).unwrap();
        for h in 1..4 {
            let other = post_announcement(&split, h).unwrap();
            assert!(other.matrix().max_abs_diff(first.matrix()) < 1e-12);
        }
    }

    #[test]
    fn z_correction_commutes_with_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = random_attack(&mut rng);
        let big = n_copies(&psi, 2, DEFAULT_DIM_CAP).unwrap();
        let u = BinaryMatrix::from_bitstrings(&["11"]).unwrap();
        let split = virtual_split(&big, &u).unwrap();
        let h = 1u64;
        // apply Z^h on B2 of the split state first, then project A2 without
        // correcting
        let b2 = split.factors_of(&[Label::B2])[0];
        let dims = split.dims();
        let inner: usize = dims[b2 + 1..].iter().product();
        let mut amp = split.matrix().data().to_vec();
        for (i, z) in amp.iter_mut().enumerate() {
            if (i / inner) % 2 == 1 {
                *z = -*z;
            }
        }
        let pre = MultipartiteState::pure(ComplexMatrix::ket(amp), split.subsystems().to_vec()).unwrap();
        let a2 = pre.factors_of(&[Label::A2]);
        let m = bipartite_matrix(pre.matrix().data(), &dims, &a2).unwrap();
        let mx = hadamard_rows(&m, 1);
        let row: Vec<C64> = (0..mx.cols()).map(|c| mx[(h as usize, c)]).collect();
        let subs: Vec<Subsystem> = pre.subsystems().iter().copied().filter(|s| s.0 != Label::A2).collect();
        let early = MultipartiteState::pure_normalized(ComplexMatrix::ket(row), subs).unwrap();
        let late = post_announcement(&split, h).unwrap();
        assert!(early.matrix().max_abs_diff(late.matrix()) < 1e-12);
    }

    #[test]
    fn conditional_family_examples() {
        // n = 1, m = 0, Eve and shield trivial: |+>, |->
        let bell = states::bell_state();
        let psi = states::tensor(
            &bell,
            &states::zero_state(vec![Subsystem(Label::S, 1), Subsystem(Label::E, 1)]),
        )
        .unwrap();
        let split = virtual_split(&psi, &BinaryMatrix::zeros(0, 1)).unwrap();
        let post = post_announcement(&split, 0).unwrap();
        let fam = conditional_family(&post).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(fam[0].1.max_abs_diff(&ket(&[h, h]).outer_self()) < 1e-12);
        assert!(fam[1].1.max_abs_diff(&ket(&[h, -h]).outer_self()) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let big = n_copies(&random_attack(&mut rng), 3, DEFAULT_DIM_CAP).unwrap();
        let u = random_full_rank_hash(1, 3, &mut rng).unwrap();
        let (post, _) = announce_hash(&big, &u, &mut rng).unwrap();
        let fam = conditional_family(&post).unwrap();
        let rest = post.dim_of(&[Label::B2, Label::S]);
        for (y, (p, rho)) in fam.iter().enumerate() {
            assert!((p - 0.25).abs() < 1e-12);
            let z = kron(&crate::gf2::pauli_power(crate::gf2::PauliKind::Z, y as u64, 2), &ComplexMatrix::identity(rest));
            assert!(z.dot(&fam[0].1).dot(&z).max_abs_diff(rho) < 1e-12);
        }
    }

    #[test]
    fn pgm_examples() {
        let z = ket(&[1.0, 0.0]).outer_self();
        let o = ket(&[0.0, 1.0]).outer_self();
        let povm = pgm(&[(0.5, z.clone()), (0.5, o.clone())], Typicality::Off).unwrap();
        assert!(povm.elements[0].max_abs_diff(&z) < 1e-12);
        assert!(povm.elements[1].max_abs_diff(&o) < 1e-12);
        let mixed = ComplexMatrix::from_real_diagonal(&[0.3, 0.7, 0.0]);
        let povm = pgm(&[(1.0, mixed)], Typicality::Off).unwrap();
        assert!(povm.elements[0].max_abs_diff(&ComplexMatrix::from_real_diagonal(&[1.0, 1.0, 0.0])) < 1e-12);
        assert!(matches!(
            pgm_from_operators(&[ComplexMatrix::zeros(2, 2)]),
            Err(Error::DegenerateFamily(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let fam: Vec<_> =
                (0..3).map(|_| (1.0 / 3.0, crate::random::random_density_rank(4, 2, &mut rng))).collect();
            assert!(pgm(&fam, Typicality::Off).unwrap().completeness_deviation < 1e-9);
        }
    }

    #[test]
    fn trivial_shield_reduces_to_x_measurement() {
        let psi = states::tensor(
            &states::bell_state(),
            &states::zero_state(vec![Subsystem(Label::S, 1), Subsystem(Label::E, 1)]),
        )
        .unwrap();
        let split = virtual_split(&psi, &BinaryMatrix::zeros(0, 1)).unwrap();
        let post = post_announcement(&split, 0).unwrap();
        let ybars = ybar_operators(&post, Typicality::Off).unwrap();
        assert!(ybars.iter().all(|y| y.rows() == 1 && y.cols() == 1));
        let ubar = untwisting(&ybars).unwrap();
        let e6 = untwisted_povm(&ubar, 1);
        let hd = hadamard();
        for y in 0..2 {
            let v = ComplexMatrix::ket(hd.column(y));
            assert!(e6[y].max_abs_diff(&v.outer_self()) < 1e-12);
        }
    }

    fn check_forms(post: &MultipartiteState, typ: Typicality) -> (f64, f64) {
        let fam = conditional_family(post).unwrap();
        let ybars = ybar_operators(post, typ).unwrap();
        assert!(unitarity_error(&untwisting(&ybars).unwrap()) < 1e-9);
        let dev = untwisted_form_deviation(post, typ).unwrap();
        // Gram identity: P P^y P = Z^y (sum |l><l'| Ybar Ybar'^dag) Z^y
        let k = ybars.len();
        let rest = ybars[0].rows();
        let mut gram = ComplexMatrix::zeros(k * rest, k * rest);
        for l in 0..k {
            for l2 in 0..k {
                let blk = ybars[l].dot(&ybars[l2].adjoint());
                for i in 0..rest {
                    for j in 0..rest {
                        gram[(l * rest + i, l2 * rest + j)] = blk[(i, j)];
                    }
                }
            }
        }
        let lambda0 = match typ {
            Typicality::Weighted => fam[0].1.scale_real(fam[0].0),
            Typicality::Off => support_projector(&fam[0].1).unwrap(),
            Typicality::On { .. } => {
                let d = fam[0].1.rows();
                let avg = fam.iter().fold(ComplexMatrix::zeros(d, d), |a, (p, r)| &a + &r.scale_real(*p));
                let pi = state_projector(&avg, typ).unwrap();
                pi.dot(&state_projector(&fam[0].1, typ).unwrap()).dot(&pi)
            }
        };
        (dev, gram.max_abs_diff(&lambda0))
    }

    #[test]
    fn untwisted_form_equals_pgm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=3 {
            for m in 0..=n.min(2) {
                let big = n_copies(&random_attack(&mut rng), n, DEFAULT_DIM_CAP).unwrap();
                let u = random_full_rank_hash(m, n, &mut rng).unwrap();
                let (post, _) = announce_hash(&big, &u, &mut rng).unwrap();
                for typ in [Typicality::Off, Typicality::Weighted] {
                    let (dev, gram) = check_forms(&post, typ);
                    assert!(dev < 1e-9, "n={n} m={m} {typ:?} dev={dev}");
                    assert!(gram < 1e-9, "n={n} m={m} {typ:?} gram={gram}");
                }
            }
        }
    }

    #[test]
    fn untwisted_form_equals_pgm_with_typicality() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (n, m) in [(2, 1), (3, 1), (3, 2)] {
            let big = n_copies(&random_attack(&mut rng), n, DEFAULT_DIM_CAP).unwrap();
            let u = random_full_rank_hash(m, n, &mut rng).unwrap();
            let (post, _) = announce_hash(&big, &u, &mut rng).unwrap();
            let typ = Typicality::On { delta: 0.3, copies: n };
            let (dev, gram) = check_forms(&post, typ);
            assert!(dev < 1e-9, "n={n} m={m} dev={dev}");
            assert!(gram < 1e-9, "n={n} m={m} gram={gram}");
        }
    }

    #[test]
    fn success_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..=3 {
            for m in 0..=n {
                let big = n_copies(&random_attack(&mut rng), n, DEFAULT_DIM_CAP).unwrap();
                let u = random_full_rank_hash(m, n, &mut rng).unwrap();
                let (post, _) = announce_hash(&big, &u, &mut rng).unwrap();
                for typ in [Typicality::Off, Typicality::Weighted] {
                    let vbars = untwisting_blocks(&ybar_operators(&post, typ).unwrap()).unwrap();
                    let s = success_probability(&post, &vbars).unwrap();
                    assert!((s.formula - s.fidelity_squared).abs() < 1e-9);
                    assert!((s.formula - s.agreement).abs() < 1e-9);
                    assert!(s.formula <= 1.0 + 1e-12 && s.formula >= 0.0);
                    // Born rule with the measurement itself
                    let fam = conditional_family(&post).unwrap();
                    let povm = pgm(&fam, typ).unwrap();
                    let direct: f64 =
                        fam.iter().zip(&povm.elements).map(|((q, r), e)| q * r.dot(e).trace().re).sum();
                    assert!((direct - s.formula).abs() < 1e-9, "{typ:?} {direct} {}", s.formula);
                }
            }
        }
    }

    #[test]
    fn secret_input_distills_perfectly() {
        let kappa = perfect_key(&ket(&[0.6, 0.8]).outer_self()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for m in 0..=3 {
            let out = distill(&kappa, 3, m, &mut rng, DistillOptions::default()).unwrap();
            assert!((out.success_probability - 1.0).abs() < 1e-10, "m={m} {:?}", out.success);
            assert!(out.privacy_epsilon < 1e-5);
            assert!(out.trace_distance.unwrap() < 1e-8, "m={m} {:?}", out.trace_distance);
        }
    }

    #[test]
    fn nonprivate_input_without_announcement_fails_sometimes() {
        let out = distill(&theta_attack(0.8).unwrap(), 2, 0, &mut ChaCha8Rng::seed_from_u64(11), DistillOptions::default())
            .unwrap();
        assert!(out.success_probability < 1.0 - 1e-3);
        assert_eq!(privacy_bound_holds(&out, 1e-9), Some(true));
        assert_eq!(out.rate_used, 1.0);
    }

    #[test]
    fn eve_larger_than_shield_is_rejected() {
        let psi = states::tensor(
            &states::bell_state(),
            &MultipartiteState::pure(
                random_pure(4, &mut ChaCha8Rng::seed_from_u64(12)),
                vec![Subsystem(Label::S, 1), Subsystem(Label::E, 4)],
            )
            .unwrap(),
        )
        .unwrap();
        let split = virtual_split(&psi, &BinaryMatrix::zeros(0, 1)).unwrap();
        let post = post_announcement(&split, 0).unwrap();
        let ybars = ybar_operators(&post, Typicality::Off).unwrap();
        assert!(matches!(untwisting(&ybars), Err(Error::Dimension(_))));
    }

    #[test]
    fn classical_pa_examples() {
        let broken = attack_state(&ket(&[1.0, 0.0]), &ket(&[0.0, 1.0])).unwrap();
        let out = classical_pa(&broken, 1, &BinaryMatrix::identity(1)).unwrap();
        assert!((out.epsilon - 0.5).abs() < 1e-12);
        let out = classical_pa(&broken, 3, &BinaryMatrix::zeros(0, 3)).unwrap();
        assert!(out.epsilon.abs() < 1e-12);
        assert_eq!(out.key_distribution.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let psi = random_attack(&mut rng);
        let v = null_space(&random_full_rank_hash(1, 3, &mut rng).unwrap());
        let out = classical_pa(&psi, 3, &v).unwrap();
        for p in out.key_distribution {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn classical_and_virtual_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for n in 2..=3 {
            for _ in 0..5 {
                let psi = random_attack(&mut rng);
                let m = rng.random_range(0..=n);
                let u = random_full_rank_hash(m, n, &mut rng).unwrap();
                let rep = equivalence_check(&psi, n, &u, &mut rng).unwrap();
                assert!(rep.passed, "{rep:?}");
            }
        }
        let kappa = perfect_key(&ket(&[1.0, 0.0]).outer_self()).unwrap();
        let u = BinaryMatrix::from_bitstrings(&["11"]).unwrap();
        let rep = equivalence_check(&kappa, 2, &u, &mut rng).unwrap();
        assert!(rep.passed);
        assert!(classical_pa(&kappa, 2, &null_space(&u)).unwrap().epsilon < 1e-12);
    }

    #[test]
    fn success_nondecreasing_in_m_on_average() {
        // exact averages over all full-rank hashes at n = 3
        let psi = attack(std::f64::consts::FRAC_PI_4);
        let big = n_copies(&psi, 3, DEFAULT_DIM_CAP).unwrap();
        let mut prev = 0.0;
        for m in 0..=3 {
            let hashes = all_hashes(m, 3);
            let mut total = 0.0;
            for u in &hashes {
                let split = virtual_split(&big, u).unwrap();
                let post = post_announcement(&split, 0).unwrap();
                let vbars = untwisting_blocks(&ybar_operators(&post, Typicality::Weighted).unwrap()).unwrap();
                total += success_probability(&post, &vbars).unwrap().formula;
            }
            let avg = total / hashes.len() as f64;
            assert!(avg >= prev - 1e-9, "m={m}: {avg} < {prev}");
            prev = avg;
        }
    }

    #[test]
    fn announced_bits_rule() {
        assert_eq!(announced_bits_for_rate(4, 1.0 - 0.6009, 0.0), 3);
        assert_eq!(announced_bits_for_rate(2, 0.0, 0.5), 2);
    }
}
