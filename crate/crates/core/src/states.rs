//! Labelled multipartite states and the canonical constructors: perfect keys,
//! private states built from twisting data, collective-attack states, their
//! shield purifications and n-fold products.
//!
//! Factors are kept in the canonical order A, B, S, E. Virtual splits sort as
//! A1, A2 before A and B1, B2 before B, so a post-announcement state reads
//! A1, B1, B2, S.., E...

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmatrix::{
    bipartite_matrix, eig_hermitian, kron, partial_trace, permute_vector, reduced_density, ComplexMatrix, C64,
    ONE, ZERO,
};

/// Default cap on the dimension of any constructed state.
pub const DEFAULT_DIM_CAP: usize = 1 << 22;

/// Tolerance for normalisation and positivity checks on states.
pub const STATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    A1,
    A2,
    A,
    B1,
    B2,
    B,
    S,
    E,
}

impl Label {
    pub fn is_alice_key(self) -> bool {
        matches!(self, Label::A | Label::A1)
    }

    pub fn is_bob_key(self) -> bool {
        matches!(self, Label::B | Label::B1)
    }

    pub fn is_alice(self) -> bool {
        matches!(self, Label::A | Label::A1 | Label::A2)
    }

    pub fn is_bob(self) -> bool {
        matches!(self, Label::B | Label::B1 | Label::B2)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One tensor factor: its role and dimension. Serialises as `["A", 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsystem(pub Label, pub usize);

impl Subsystem {
    pub fn label(&self) -> Label {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.1
    }
}

/// A pure state (column vector) or density operator over labelled factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipartiteState {
    #[serde(flatten)]
    matrix: ComplexMatrix,
    subsystems: Vec<Subsystem>,
}

fn total_dim(subsystems: &[Subsystem]) -> usize {
    subsystems.iter().map(|s| s.1).product()
}

fn check_subsystems(n: usize, subsystems: &[Subsystem]) -> Result<()> {
    if subsystems.iter().any(|s| s.1 == 0) || total_dim(subsystems) != n {
        return Err(Error::Dimension(format!(
            "subsystems {:?} do not match dimension {}",
            subsystems, n
        )));
    }
    Ok(())
}

/// Checks that `rho` is a density operator within `STATE_TOL`.
pub fn validate_density(rho: &ComplexMatrix) -> Result<()> {
    if !rho.is_square() {
        return Err(Error::Validation("density operator must be square".into()));
    }
    let herm = rho.hermiticity_error();
    if herm > STATE_TOL {
        return Err(Error::Validation(format!("density operator not Hermitian ({herm:e})")));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
        return Err(Error::Validation(format!("density operator has trace {tr}")));
    }
    let lmin = eig_hermitian(rho)?.values.last().copied().unwrap_or(0.0);
    if lmin < -STATE_TOL {
        return Err(Error::Validation(format!("density operator has negative eigenvalue {lmin:e}")));
    }
    Ok(())
}

fn validate_unit(v: &ComplexMatrix) -> Result<()> {
    if v.cols() != 1 {
        return Err(Error::Validation("pure state must be a column vector".into()));
    }
    let n = v.vector_norm();
    if (n - 1.0).abs() > STATE_TOL {
        return Err(Error::Validation(format!("pure state has norm {n}")));
    }
    Ok(())
}

impl MultipartiteState {
    /// Pure state; the vector must have unit norm.
    pub fn pure(vector: ComplexMatrix, subsystems: Vec<Subsystem>) -> Result<Self> {
        validate_unit(&vector)?;
        check_subsystems(vector.rows(), &subsystems)?;
        Ok(Self::from_parts(vector, subsystems))
    }

    /// Density operator; must be PSD with unit trace.
    pub fn mixed(rho: ComplexMatrix, subsystems: Vec<Subsystem>) -> Result<Self> {
        validate_density(&rho)?;
        check_subsystems(rho.rows(), &subsystems)?;
        Ok(Self::from_parts(rho, subsystems))
    }

    /// Pure state from a vector of any nonzero norm.
    pub fn pure_normalized(vector: ComplexMatrix, subsystems: Vec<Subsystem>) -> Result<Self> {
        let n = vector.vector_norm();
        if n == 0.0 {
            return Err(Error::Validation("cannot normalise the zero vector".into()));
        }
        Self::pure(vector.scale_real(1.0 / n), subsystems)
    }

    pub(crate) fn from_parts(matrix: ComplexMatrix, subsystems: Vec<Subsystem>) -> Self {
        let dims: Vec<usize> = subsystems.iter().map(|s| s.1).collect();
        let matrix = matrix.with_dims(dims).expect("subsystems checked");
        Self { matrix, subsystems }
    }

    pub fn is_pure(&self) -> bool {
        self.matrix.cols() == 1
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn amplitudes(&self) -> Option<&[C64]> {
        self.is_pure().then(|| self.matrix.data())
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.1).collect()
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Density operator (computed for pure states).
    pub fn density(&self) -> ComplexMatrix {
        if self.is_pure() {
            self.matrix.outer_self()
        } else {
            self.matrix.clone()
        }
    }

    /// Indices of the factors whose labels satisfy `pred`.
    pub fn factors_where(&self, pred: impl Fn(Label) -> bool) -> Vec<usize> {
        self.subsystems
            .iter()
            .enumerate()
            .filter(|(_, s)| pred(s.0))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn factors_of(&self, labels: &[Label]) -> Vec<usize> {
        self.factors_where(|l| labels.contains(&l))
    }

    pub fn dim_of(&self, labels: &[Label]) -> usize {
        self.factors_of(labels).iter().map(|&i| self.subsystems[i].1).product()
    }

    /// Reduced density operator on the factors carrying any of `labels`.
    pub fn marginal(&self, labels: &[Label]) -> Result<MultipartiteState> {
        let keep = self.factors_of(labels);
        self.marginal_factors(&keep)
    }

    pub fn marginal_factors(&self, keep: &[usize]) -> Result<MultipartiteState> {
        let dims = self.dims();
        let rho = if self.is_pure() {
            reduced_density(self.matrix.data(), &dims, keep)?
        } else {
            partial_trace(&self.matrix, &dims, keep)?
        };
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        let subs = keep.iter().map(|&k| self.subsystems[k]).collect();
        Ok(Self::from_parts(rho, subs))
    }

    /// Reorders factors into the canonical label order (stable within a label).
    pub fn canonical(&self) -> Result<MultipartiteState> {
        let mut perm: Vec<usize> = (0..self.subsystems.len()).collect();
        perm.sort_by_key(|&i| self.subsystems[i].0);
        self.permuted(&perm)
    }

    /// Output factor `i` is input factor `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<MultipartiteState> {
        let dims = self.dims();
        let subs: Vec<Subsystem> = perm.iter().map(|&p| self.subsystems[p]).collect();
        let m = if self.is_pure() {
            ComplexMatrix::ket(permute_vector(self.matrix.data(), &dims, perm)?)
        } else {
            permute_operator(&self.matrix, &dims, perm)?
        };
        Ok(Self::from_parts(m, subs))
    }

    /// Same data, new labels (dimensions must agree factor by factor).
    pub fn relabeled(&self, subsystems: Vec<Subsystem>) -> Result<MultipartiteState> {
        if subsystems.len() != self.subsystems.len()
            || subsystems.iter().zip(&self.subsystems).any(|(a, b)| a.1 != b.1)
        {
            return Err(Error::Dimension(format!(
                "cannot relabel {:?} as {:?}",
                self.subsystems, subsystems
            )));
        }
        Ok(Self { matrix: self.matrix.clone(), subsystems })
    }
}

/// Reorders tensor factors of a square operator.
pub fn permute_operator(m: &ComplexMatrix, dims: &[usize], perm: &[usize]) -> Result<ComplexMatrix> {
    let n = m.rows();
    let idx: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 0.0)).collect();
    // image of every basis index under the permutation
    let moved = permute_vector(&idx, dims, perm)?;
    let mut target = vec![0usize; n];
    for (new, v) in moved.iter().enumerate() {
        target[v.re as usize] = new;
    }
    let mut out = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(target[i], target[j])] = m[(i, j)];
        }
    }
    Ok(out)
}

/// Perfect secret bit `1/2 sum_k |kk><kk| (x) rho_E` on A, B, E.
pub fn perfect_key(rho_e: &ComplexMatrix) -> Result<MultipartiteState> {
    perfect_key_with_dim(2, rho_e)
}

/// Perfect key over a `key_dim`-valued register.
pub fn perfect_key_with_dim(key_dim: usize, rho_e: &ComplexMatrix) -> Result<MultipartiteState> {
    validate_density(rho_e)?;
    let mut corr = ComplexMatrix::zeros(key_dim * key_dim, key_dim * key_dim);
    for k in 0..key_dim {
        let i = k * key_dim + k;
        corr[(i, i)] = C64::new(1.0 / key_dim as f64, 0.0);
    }
    let rho = kron(&corr, rho_e);
    let de = rho_e.rows();
    Ok(MultipartiteState::from_parts(
        rho,
        vec![Subsystem(Label::A, key_dim), Subsystem(Label::B, key_dim), Subsystem(Label::E, de)],
    ))
}

/// Twisting data: one unitary per key value acting on the shield, and the
/// shield/Eve state they act on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwistingData {
    pub vks: Vec<ComplexMatrix>,
    pub xi: MultipartiteState,
}

impl TwistingData {
    pub fn new(vks: Vec<ComplexMatrix>, xi: MultipartiteState) -> Result<Self> {
        let t = Self { vks, xi };
        t.validate()?;
        Ok(t)
    }

    pub fn shield_dim(&self) -> usize {
        self.xi.dim_of(&[Label::S])
    }

    pub fn eve_dim(&self) -> usize {
        self.xi.dim_of(&[Label::E])
    }

    fn validate(&self) -> Result<()> {
        if self.vks.len() != 2 {
            return Err(Error::Validation(format!("expected 2 twisting unitaries, got {}", self.vks.len())));
        }
        if !self.xi.is_pure() {
            return Err(Error::Validation("xi must be a pure state".into()));
        }
        if self.xi.subsystems().iter().any(|s| !matches!(s.0, Label::S | Label::E)) {
            return Err(Error::Validation("xi must live on S and E factors only".into()));
        }
        let ds = self.shield_dim();
        for v in &self.vks {
            if v.rows() != ds || v.cols() != ds {
                return Err(Error::Dimension(format!(
                    "twisting unitary is {}x{} but the shield has dimension {}",
                    v.rows(),
                    v.cols(),
                    ds
                )));
            }
            let err = crate::qmatrix::unitarity_error(v);
            if err > STATE_TOL {
                return Err(Error::Validation(format!("twisting operator not unitary ({err:e})")));
            }
        }
        Ok(())
    }
}

/// `1/sqrt2 sum_k |kk>_AB (V^k_S (x) 1_E)|xi>_SE` on A, B, S, E.
pub fn private_state(t: &TwistingData) -> Result<MultipartiteState> {
    t.validate()?;
    let xi = t.xi.canonical()?;
    let ds = t.shield_dim();
    let de = t.eve_dim();
    let xi_mat = bipartite_matrix(xi.matrix().data(), &xi.dims(), &xi.factors_of(&[Label::S]))?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut amp = vec![ZERO; 4 * ds * de];
    for (k, v) in t.vks.iter().enumerate() {
        let twisted = v.dot(&xi_mat);
        let base = (k * 2 + k) * ds * de;
        for s in 0..ds {
            for e in 0..de {
                amp[base + s * de + e] = twisted[(s, e)] * h;
            }
        }
    }
    let mut subs = vec![Subsystem(Label::A, 2), Subsystem(Label::B, 2)];
    subs.extend_from_slice(xi.subsystems());
    MultipartiteState::pure(ComplexMatrix::ket(amp), subs)
}

/// Collective-attack state `1/2 sum_k |kk><kk| (x) |phi^k><phi^k|` on A, B, E.
pub fn attack_state(phi0: &ComplexMatrix, phi1: &ComplexMatrix) -> Result<MultipartiteState> {
    validate_unit(phi0)?;
    validate_unit(phi1)?;
    if phi0.rows() != phi1.rows() {
        return Err(Error::Dimension("Eve states have different dimensions".into()));
    }
    let de = phi0.rows();
    let mut rho = ComplexMatrix::zeros(4 * de, 4 * de);
    for (k, phi) in [phi0, phi1].into_iter().enumerate() {
        let block = phi.outer_self();
        let off = (k * 2 + k) * de;
        for i in 0..de {
            for j in 0..de {
                rho[(off + i, off + j)] = block[(i, j)] * 0.5;
            }
        }
    }
    Ok(MultipartiteState::from_parts(
        rho,
        vec![Subsystem(Label::A, 2), Subsystem(Label::B, 2), Subsystem(Label::E, de)],
    ))
}

/// Eve state `cos(theta)|0> + sin(theta)|1>`.
pub fn eve_qubit(theta: f64) -> ComplexMatrix {
    ComplexMatrix::ket(vec![C64::new(theta.cos(), 0.0), C64::new(theta.sin(), 0.0)])
}

/// Attack where Eve holds `|0>` or `cos(theta)|0> + sin(theta)|1>`.
pub fn theta_attack(theta: f64) -> Result<MultipartiteState> {
    attack_state(&eve_qubit(0.0), &eve_qubit(theta))
}

/// Classical key distribution and Eve's conditional states of a cq state on
/// A, B, E: entry `k` holds `(p_k, rho_E^k)`.
pub(crate) fn cq_components(psi_abe: &MultipartiteState) -> Result<Vec<(f64, Option<ComplexMatrix>)>> {
    let psi = psi_abe.canonical()?;
    let labels: Vec<Label> = psi.subsystems().iter().map(|s| s.0).collect();
    if labels != [Label::A, Label::B, Label::E] {
        return Err(Error::Validation(format!("expected a state on A, B, E, got {labels:?}")));
    }
    let dims = psi.dims();
    let (da, db, de) = (dims[0], dims[1], dims[2]);
    if da != db {
        return Err(Error::Validation("key registers differ in dimension".into()));
    }
    let rho = psi.density();
    // every block |jk><j'k'| other than j=k=j'=k' must vanish
    let scale = rho.max_abs().max(1.0);
    for r in 0..da * db {
        for c in 0..da * db {
            let (j, k) = (r / db, r % db);
            let (j2, k2) = (c / db, c % db);
            if j == k && j2 == k2 && r == c {
                continue;
            }
            for i in 0..de {
                for l in 0..de {
                    if rho[(r * de + i, c * de + l)].norm() > STATE_TOL * scale {
                        return Err(Error::Validation(
                            "state is not classical-quantum with perfectly correlated keys".into(),
                        ));
                    }
                }
            }
        }
    }
    let mut out = Vec::with_capacity(da);
    for k in 0..da {
        let r = k * db + k;
        let mut block = ComplexMatrix::zeros(de, de);
        for i in 0..de {
            for l in 0..de {
                block[(i, l)] = rho[(r * de + i, r * de + l)];
            }
        }
        let p = block.trace().re;
        if p > 1e-14 {
            out.push((p, Some(block.scale_real(1.0 / p))));
        } else {
            out.push((0.0, None));
        }
    }
    Ok(out)
}

/// Purifies a cq attack state with a shield that records the key value and
/// the eigenbasis label of Eve's conditional state:
/// `sum_k sqrt(p_k) |kk> sum_e sqrt(l^k_e) |s(k,e)>_S |e^k>_E`.
/// The shield dimension is the total number of nonzero eigenvalues.
pub fn purify_with_shield(psi_abe: &MultipartiteState) -> Result<MultipartiteState> {
    let comps = cq_components(psi_abe)?;
    let dk = comps.len();
    let de = psi_abe.dim_of(&[Label::E]);
    let mut terms: Vec<(usize, f64, Vec<C64>)> = Vec::new();
    for (k, (p, rho)) in comps.iter().enumerate() {
        let Some(rho) = rho else { continue };
        let eig = eig_hermitian(rho)?;
        for (idx, &l) in eig.values.iter().enumerate() {
            if l > 1e-12 {
                terms.push((k, (p * l).sqrt(), eig.vectors.column(idx)));
            }
        }
    }
    let ds = terms.len();
    let mut amp = vec![ZERO; dk * dk * ds * de];
    for (s, (k, w, vec)) in terms.iter().enumerate() {
        let base = ((k * dk + k) * ds + s) * de;
        for (e, &z) in vec.iter().enumerate() {
            amp[base + e] = z * *w;
        }
    }
    MultipartiteState::pure_normalized(
        ComplexMatrix::ket(amp),
        vec![
            Subsystem(Label::A, dk),
            Subsystem(Label::B, dk),
            Subsystem(Label::S, ds),
            Subsystem(Label::E, de),
        ],
    )
}

/// `psi^{(x) n}` with factors regrouped by label (all A first, then B, ...).
pub fn n_copies(psi: &MultipartiteState, n: usize, dim_cap: usize) -> Result<MultipartiteState> {
    if n == 0 {
        return Err(Error::Validation("need at least one copy".into()));
    }
    let d = psi.dim();
    let total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(d)).unwrap_or(usize::MAX);
    if total > dim_cap {
        return Err(Error::ResourceCap { dim: total, cap: dim_cap });
    }
    let mut m = psi.matrix().clone();
    let mut subs = psi.subsystems().to_vec();
    for _ in 1..n {
        m = kron(&m, psi.matrix());
        subs.extend_from_slice(psi.subsystems());
    }
    let state = MultipartiteState::from_parts(m, subs);
    // stable sort: copy order is preserved within each label
    let per = psi.subsystems().len();
    let mut perm: Vec<usize> = (0..per * n).collect();
    perm.sort_by_key(|&i| (psi.subsystems()[i % per].0, i % per, i / per));
    state.permuted(&perm)
}

/// Outcome of a hypothetical x-basis measurement of Alice's key register.
#[derive(Debug, Clone)]
pub struct ConditionalBranch {
    /// Outcome label (bit string, first A factor most significant).
    pub outcome: usize,
    pub probability: f64,
    /// Normalised conditional state on Bob's and shield factors; `None` for
    /// zero-probability outcomes.
    pub state: Option<ComplexMatrix>,
}

/// Branches with probability below this are reported without a state.
pub const ZERO_BRANCH: f64 = 1e-14;

/// `(-1)^{popcount(x & a)} 2^{-bits/2}`: the amplitude `<x~|a>`.
pub(crate) fn hadamard_rows(m: &ComplexMatrix, bits: usize) -> ComplexMatrix {
    let d = 1usize << bits;
    assert_eq!(m.rows(), d);
    let mut out = m.clone();
    // fast Walsh-Hadamard transform over rows
    let mut h = 1;
    while h < d {
        for start in (0..d).step_by(2 * h) {
            for r in start..start + h {
                for c in 0..m.cols() {
                    let a = out[(r, c)];
                    let b = out[(r + h, c)];
                    out[(r, c)] = a + b;
                    out[(r + h, c)] = a - b;
                }
            }
        }
        h *= 2;
    }
    out.scale_real((d as f64).powf(-0.5))
}

/// Conditional states of Bob's and the shield's factors (labels B*, S) given
/// each x-basis outcome of Alice's key factors (A or A1, all qubits).
pub fn conditional_bs_states(gamma: &MultipartiteState) -> Result<Vec<ConditionalBranch>> {
    if !gamma.is_pure() {
        return Err(Error::Validation("conditional states need a pure input".into()));
    }
    let a_factors = gamma.factors_where(Label::is_alice_key);
    if a_factors.iter().any(|&i| gamma.subsystems()[i].1 != 2) {
        return Err(Error::Validation("Alice's key register must consist of qubits".into()));
    }
    let bits = a_factors.len();
    let dims = gamma.dims();
    let rest: Vec<usize> = (0..dims.len()).filter(|i| !a_factors.contains(i)).collect();
    let rest_dims: Vec<usize> = rest.iter().map(|&i| dims[i]).collect();
    let bs_keep: Vec<usize> = rest
        .iter()
        .enumerate()
        .filter(|(_, &i)| {
            let l = gamma.subsystems()[i].0;
            l.is_bob() || l == Label::S
        })
        .map(|(pos, _)| pos)
        .collect();
    let m = bipartite_matrix(gamma.matrix().data(), &dims, &a_factors)?;
    let mx = hadamard_rows(&m, bits);
    let mut out = Vec::with_capacity(1 << bits);
    for x in 0..(1usize << bits) {
        let row: Vec<C64> = (0..mx.cols()).map(|c| mx[(x, c)]).collect();
        let sigma = reduced_density(&row, &rest_dims, &bs_keep)?;
        let p = sigma.trace().re;
        let state = (p > ZERO_BRANCH).then(|| sigma.scale_real(1.0 / p));
        out.push(ConditionalBranch { outcome: x, probability: p, state });
    }
    Ok(out)
}

/// Born-rule statistics of the z-basis key measurement.
#[derive(Debug, Clone)]
pub struct KeyMeasurement {
    /// `joint[j][k]` = probability Alice reads `j` and Bob reads `k`.
    pub joint: Vec<Vec<f64>>,
    /// Eve's normalised conditional state for each outcome pair with nonzero
    /// probability, indexed like `joint`.
    pub eve: Vec<Vec<Option<ComplexMatrix>>>,
}

impl KeyMeasurement {
    /// Eve's conditional state given both parties read `k`.
    pub fn eve_given_key(&self, k: usize) -> Option<&ComplexMatrix> {
        self.eve.get(k).and_then(|row| row.get(k)).and_then(|o| o.as_ref())
    }

    /// The classical-quantum state `sum p_jk |jk><jk| (x) rho_E^jk` on A, B, E
    /// left behind by the measurement.
    pub fn cq_state(&self) -> MultipartiteState {
        let da = self.joint.len();
        let db = self.joint.first().map_or(0, Vec::len);
        let de = self.eve.iter().flatten().flatten().next().map_or(1, ComplexMatrix::rows);
        let d = da * db * de;
        let mut rho = ComplexMatrix::zeros(d, d);
        for j in 0..da {
            for k in 0..db {
                let Some(e) = &self.eve[j][k] else { continue };
                let off = (j * db + k) * de;
                for x in 0..de {
                    for y in 0..de {
                        rho[(off + x, off + y)] = e[(x, y)] * self.joint[j][k];
                    }
                }
            }
        }
        MultipartiteState::from_parts(
            rho,
            vec![Subsystem(Label::A, da), Subsystem(Label::B, db), Subsystem(Label::E, de)],
        )
    }
}

/// Measures the key registers (A or A1 on Alice's side, B or B1 on Bob's) in
/// the computational basis.
pub fn measure_key(state: &MultipartiteState) -> Result<KeyMeasurement> {
    let ka = state.factors_where(Label::is_alice_key);
    let kb = state.factors_where(Label::is_bob_key);
    let ke = state.factors_of(&[Label::E]);
    let dims = state.dims();
    let da: usize = ka.iter().map(|&i| dims[i]).product();
    let db: usize = kb.iter().map(|&i| dims[i]).product();
    let de: usize = ke.iter().map(|&i| dims[i]).product();
    let others: Vec<usize> = (0..dims.len())
        .filter(|i| !ka.contains(i) && !kb.contains(i) && !ke.contains(i))
        .collect();
    let perm: Vec<usize> = ka.iter().chain(&kb).chain(&ke).chain(&others).copied().collect();
    let ordered = state.permuted(&perm)?;
    let dr: usize = others.iter().map(|&i| dims[i]).product();
    let mut joint = vec![vec![0.0; db]; da];
    let mut eve = vec![vec![None; db]; da];
    for j in 0..da {
        for k in 0..db {
            let key = j * db + k;
            let mut rho_e = ComplexMatrix::zeros(de, de);
            if ordered.is_pure() {
                let amp = ordered.matrix().data();
                for e1 in 0..de {
                    for e2 in 0..de {
                        let mut acc = ZERO;
                        for r in 0..dr {
                            acc += amp[(key * de + e1) * dr + r] * amp[(key * de + e2) * dr + r].conj();
                        }
                        rho_e[(e1, e2)] = acc;
                    }
                }
            } else {
                let m = ordered.matrix();
                for e1 in 0..de {
                    for e2 in 0..de {
                        let mut acc = ZERO;
                        for r in 0..dr {
                            acc += m[((key * de + e1) * dr + r, (key * de + e2) * dr + r)];
                        }
                        rho_e[(e1, e2)] = acc;
                    }
                }
            }
            let p = rho_e.trace().re;
            joint[j][k] = p.max(0.0);
            if p > ZERO_BRANCH {
                eve[j][k] = Some(rho_e.scale_real(1.0 / p));
            }
        }
    }
    Ok(KeyMeasurement { joint, eve })
}

/// `|Phi> = (|00> + |11>)/sqrt2` on A, B.
pub fn bell_state() -> MultipartiteState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let v = ComplexMatrix::ket(vec![C64::new(h, 0.0), ZERO, ZERO, C64::new(h, 0.0)]);
    MultipartiteState::from_parts(v, vec![Subsystem(Label::A, 2), Subsystem(Label::B, 2)])
}

/// Product pure state `|0...0>` on the given factors.
pub fn zero_state(subsystems: Vec<Subsystem>) -> MultipartiteState {
    let d = total_dim(&subsystems);
    let mut v = vec![ZERO; d];
    v[0] = ONE;
    MultipartiteState::from_parts(ComplexMatrix::ket(v), subsystems)
}

/// Tensor product of two states, labels concatenated then canonicalised.
pub fn tensor(a: &MultipartiteState, b: &MultipartiteState) -> Result<MultipartiteState> {
    let m = if a.is_pure() == b.is_pure() {
        kron(a.matrix(), b.matrix())
    } else {
        kron(&a.density(), &b.density())
    };
    let mut subs = a.subsystems().to_vec();
    subs.extend_from_slice(b.subsystems());
    MultipartiteState::from_parts(m, subs).canonical()
}
