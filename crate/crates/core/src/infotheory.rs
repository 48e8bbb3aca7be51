//! Entropies (in bits), Holevo quantity, distances and the two key rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmatrix::{eig_hermitian, singular_values, sqrt_psd, ComplexMatrix};
use crate::states::{self, cq_components, validate_density, MultipartiteState, STATE_TOL};

/// Eigenvalues in `[-EIG_CLAMP, 0)` are treated as zero before taking logs.
pub const EIG_CLAMP: f64 = 1e-12;

/// Finite ensemble of density operators with prior probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    items: Vec<(f64, ComplexMatrix)>,
}

impl Ensemble {
    pub fn new(items: Vec<(f64, ComplexMatrix)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Validation("empty ensemble".into()));
        }
        let d = items[0].1.rows();
        let mut total = 0.0;
        for (p, rho) in &items {
            if *p < 0.0 || !p.is_finite() {
                return Err(Error::Validation(format!("invalid probability {p}")));
            }
            if rho.rows() != d {
                return Err(Error::Dimension("ensemble states differ in dimension".into()));
            }
            validate_density(rho)?;
            total += p;
        }
        if (total - 1.0).abs() > STATE_TOL {
            return Err(Error::Validation(format!("probabilities sum to {total}")));
        }
        Ok(Self { items })
    }

    /// Uniform ensemble over the given states.
    pub fn uniform(states: Vec<ComplexMatrix>) -> Result<Self> {
        let p = 1.0 / states.len().max(1) as f64;
        Self::new(states.into_iter().map(|s| (p, s)).collect())
    }

    pub fn items(&self) -> &[(f64, ComplexMatrix)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.items[0].1.rows()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.items.iter().map(|(p, _)| *p).collect()
    }

    pub fn average(&self) -> ComplexMatrix {
        let d = self.dim();
        self.items
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, (p, r)| &acc + &r.scale_real(*p))
    }
}

fn entropy_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values
        .into_iter()
        .map(|l| if (-EIG_CLAMP..0.0).contains(&l) { 0.0 } else { l })
        .filter(|&l| l > 0.0)
        .map(|l| -l * l.log2())
        .sum()
}

/// Shannon entropy of a probability vector.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    entropy_of(p.iter().copied())
}

/// `h(p) = -p log p - (1-p) log(1-p)`.
pub fn binary_entropy(p: f64) -> f64 {
    shannon_entropy(&[p, 1.0 - p])
}

pub fn von_neumann_entropy(rho: &ComplexMatrix) -> Result<f64> {
    Ok(entropy_of(eig_hermitian(rho)?.values))
}

/// `S(sum p rho) - sum p S(rho)`.
pub fn holevo_chi(e: &Ensemble) -> Result<f64> {
    let mut chi = von_neumann_entropy(&e.average())?;
    for (p, rho) in e.items() {
        if *p > 0.0 {
            chi -= p * von_neumann_entropy(rho)?;
        }
    }
    Ok(chi)
}

/// `H(X|Q) = H(p) - chi` for a classical variable with quantum side
/// information given as the ensemble of conditional states.
pub fn conditional_entropy_cq(e: &Ensemble) -> Result<f64> {
    Ok(shannon_entropy(&e.probabilities()) - holevo_chi(e)?)
}

/// Eve's ensemble `{p_k, rho_E^k}` of a classical-quantum state on A, B, E.
pub fn eve_ensemble(psi_abe: &MultipartiteState) -> Result<Ensemble> {
    let comps = cq_components(psi_abe)?;
    let de = psi_abe.dim_of(&[states::Label::E]);
    let items = comps
        .into_iter()
        .map(|(p, r)| (p, r.unwrap_or_else(|| ComplexMatrix::identity(de).scale_real(1.0 / de as f64))))
        .collect();
    Ensemble::new(items)
}

/// `I(K:E)` of a cq attack state, i.e. the Holevo quantity of Eve's
/// conditional states.
pub fn mutual_info_ke(psi_abe: &MultipartiteState) -> Result<f64> {
    holevo_chi(&eve_ensemble(psi_abe)?)
}

/// Key rates of the two distillation routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRates {
    /// `1 - I(K:E)`: classical privacy amplification.
    pub rate_pa: f64,
    /// Holevo quantity of Bob and shield's states conditioned on Alice's
    /// x-basis outcome: private-state distillation.
    pub rate_psd: f64,
}

/// Both rates of a purified attack state on A, B, S, E.
pub fn key_rates(psi_abse: &MultipartiteState) -> Result<KeyRates> {
    let abe = psi_abse.marginal(&[states::Label::A, states::Label::B, states::Label::E])?;
    let rate_pa = 1.0 - mutual_info_ke(&abe)?;
    let branches = states::conditional_bs_states(psi_abse)?;
    let items = branches
        .into_iter()
        .filter_map(|b| b.state.map(|s| (b.probability, s)))
        .collect::<Vec<_>>();
    let total: f64 = items.iter().map(|(p, _)| p).sum();
    let items = items.into_iter().map(|(p, s)| (p / total, s)).collect();
    let rate_psd = holevo_chi(&Ensemble::new(items)?)?;
    Ok(KeyRates { rate_pa, rate_psd })
}

/// Unnormalised trace distance `||a - b||_1`.
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Dimension("trace distance of differently shaped operators".into()));
    }
    let d = a - b;
    if d.hermiticity_error() <= 1e-12 * d.max_abs().max(1.0) {
        Ok(eig_hermitian(&d)?.values.iter().map(|l| l.abs()).sum())
    } else {
        Ok(singular_values(&d).iter().sum())
    }
}

/// Uhlmann fidelity `||sqrt(a) sqrt(b)||_1` (not squared).
pub fn fidelity(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.rows() != b.rows() {
        return Err(Error::Dimension("fidelity of differently sized states".into()));
    }
    let prod = sqrt_psd(a)?.dot(&sqrt_psd(b)?);
    Ok(singular_values(&prod).iter().sum::<f64>().min(1.0))
}

/// `sqrt(<psi|rho|psi>)` for a unit vector `psi`.
pub fn fidelity_pure(psi: &ComplexMatrix, rho: &ComplexMatrix) -> Result<f64> {
    if psi.cols() != 1 || psi.rows() != rho.rows() {
        return Err(Error::Dimension("fidelity_pure needs a ket matching the state".into()));
    }
    let v = rho.dot(psi);
    Ok(psi.inner(&v).re.max(0.0).sqrt().min(1.0))
}

/// Trace-distance bound `2 sqrt(1 - f^2)` implied by fidelity `f`.
pub fn fvg_bound(f: f64) -> f64 {
    2.0 * (1.0 - f * f).max(0.0).sqrt()
}

/// Slack on the typical-window edges, in bits.
const WINDOW_SLACK: f64 = 1e-9;

/// Whether an eigenvalue of a state with total entropy `entropy` lies in the
/// typical window `[2^-(entropy + n delta), 2^-(entropy - n delta)]`.
pub fn in_typical_window(lambda: f64, entropy: f64, n: usize, delta: f64) -> bool {
    lambda > EIG_CLAMP && (-lambda.log2() - entropy).abs() <= n as f64 * delta + WINDOW_SLACK
}

/// Sum of the Shannon entropies of the z- and x-basis outcome distributions
/// of a single-qubit state.
pub fn xz_entropy_sum(rho: &ComplexMatrix) -> Result<f64> {
    if rho.rows() != 2 || rho.cols() != 2 {
        return Err(Error::Dimension("expected a single-qubit state".into()));
    }
    let pz = [rho[(0, 0)].re, rho[(1, 1)].re];
    let coh = rho[(0, 1)].re;
    let px = [0.5 + coh, 0.5 - coh];
    Ok(shannon_entropy(&pz) + shannon_entropy(&px))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::C64;
    use crate::random::{random_density, random_pure};
    use crate::states::{attack_state, perfect_key, purify_with_shield, theta_attack};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ket(v: &[f64]) -> ComplexMatrix {
        ComplexMatrix::ket(v.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Entropy of `1/2(|0><0| + |a><a|)` for a real unit vector at angle `t`,
    /// from the closed-form eigenvalues `(1 +- |cos t|)/2`.
    fn two_state_entropy(t: f64) -> f64 {
        let c = t.cos().abs();
        let l = [(1.0 + c) / 2.0, (1.0 - c) / 2.0];
        l.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum()
    }

    #[test]
    fn entropy_examples() {
        assert!(von_neumann_entropy(&ket(&[0.6, 0.8]).outer_self()).unwrap().abs() < 1e-12);
        let mixed = ComplexMatrix::identity(2).scale_real(0.5);
        assert!((von_neumann_entropy(&mixed).unwrap() - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let avg = (&ket(&[1.0, 0.0]).outer_self() + &ket(&[h, h]).outer_self()).scale_real(0.5);
        let s = von_neumann_entropy(&avg).unwrap();
        assert!((s - two_state_entropy(std::f64::consts::FRAC_PI_4)).abs() < 1e-12);
        assert!((s - 0.6009).abs() < 1e-4);
    }

    #[test]
    fn holevo_examples() {
        let z = ket(&[1.0, 0.0]).outer_self();
        let o = ket(&[0.0, 1.0]).outer_self();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let p = ket(&[h, h]).outer_self();
        assert!(holevo_chi(&Ensemble::uniform(vec![z.clone(), z.clone()]).unwrap()).unwrap().abs() < 1e-12);
        assert!((holevo_chi(&Ensemble::uniform(vec![z.clone(), o]).unwrap()).unwrap() - 1.0).abs() < 1e-12);
        let chi = holevo_chi(&Ensemble::uniform(vec![z, p]).unwrap()).unwrap();
        assert!((chi - two_state_entropy(std::f64::consts::FRAC_PI_4)).abs() < 1e-12);
        assert!(Ensemble::new(vec![(0.7, ComplexMatrix::identity(2).scale_real(0.5))]).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        let same = attack_state(&ket(&[1.0, 0.0]), &ket(&[1.0, 0.0])).unwrap();
        assert!(mutual_info_ke(&same).unwrap().abs() < 1e-12);
        let orth = attack_state(&ket(&[1.0, 0.0]), &ket(&[0.0, 1.0])).unwrap();
        assert!((mutual_info_ke(&orth).unwrap() - 1.0).abs() < 1e-12);
        let t = std::f64::consts::FRAC_PI_4;
        let i = mutual_info_ke(&theta_attack(t).unwrap()).unwrap();
        assert!((i - two_state_entropy(t)).abs() < 1e-12);
        let bell = states::tensor(&states::bell_state(), &states::zero_state(vec![states::Subsystem(states::Label::E, 2)]))
            .unwrap();
        let rho = MultipartiteState::mixed(bell.density(), bell.subsystems().to_vec()).unwrap();
        assert!(matches!(mutual_info_ke(&rho), Err(Error::Validation(_))));
    }

    #[test]
    fn key_rate_examples() {
        let secret = purify_with_shield(&perfect_key(&ket(&[1.0, 0.0]).outer_self()).unwrap()).unwrap();
        let r = key_rates(&secret).unwrap();
        assert!((r.rate_pa - 1.0).abs() < 1e-12 && (r.rate_psd - 1.0).abs() < 1e-12);
        let broken = purify_with_shield(&attack_state(&ket(&[1.0, 0.0]), &ket(&[0.0, 1.0])).unwrap()).unwrap();
        let r = key_rates(&broken).unwrap();
        assert!(r.rate_pa.abs() < 1e-12 && r.rate_psd.abs() < 1e-12);
        let t = std::f64::consts::FRAC_PI_4;
        let r = key_rates(&purify_with_shield(&theta_attack(t).unwrap()).unwrap()).unwrap();
        let expect = 1.0 - two_state_entropy(t);
        assert!((r.rate_pa - expect).abs() < 1e-10);
        assert!((r.rate_psd - expect).abs() < 1e-10);
        assert!((expect - 0.3991).abs() < 1e-4);
    }

    #[test]
    fn trace_distance_examples() {
        let z = ket(&[1.0, 0.0]).outer_self();
        let o = ket(&[0.0, 1.0]).outer_self();
        assert_eq!(trace_distance(&z, &z).unwrap(), 0.0);
        assert!((trace_distance(&z, &o).unwrap() - 2.0).abs() < 1e-12);
        let orth = attack_state(&ket(&[1.0, 0.0]), &ket(&[0.0, 1.0])).unwrap();
        let kappa = perfect_key(&ComplexMatrix::identity(2).scale_real(0.5)).unwrap();
        assert!((trace_distance(orth.matrix(), kappa.matrix()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        assert_eq!(fvg_bound(1.0), 0.0);
        assert_eq!(fvg_bound(0.0), 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let psi = random_pure(3, &mut rng);
            let rho = random_density(3, &mut rng);
            let a = fidelity(&psi.outer_self(), &rho).unwrap();
            let b = fidelity_pure(&psi, &rho).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn entropic_uncertainty_qubits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let rho = random_density(2, &mut rng);
            assert!(xz_entropy_sum(&rho).unwrap() >= 1.0 - 1e-9);
        }
        let z = ket(&[1.0, 0.0]).outer_self();
        assert!((xz_entropy_sum(&z).unwrap() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn holevo_between_zero_and_shannon(seed in any::<u64>(), k in 2usize..5, d in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let states: Vec<_> = (0..k).map(|_| random_density(d, &mut rng)).collect();
            let e = Ensemble::uniform(states).unwrap();
            let chi = holevo_chi(&e).unwrap();
            prop_assert!(chi >= -1e-10);
            prop_assert!(chi <= shannon_entropy(&e.probabilities()) + 1e-10);
        }

        #[test]
        fn trace_distance_triangle(seed in any::<u64>(), d in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_density(d, &mut rng);
            let b = random_density(d, &mut rng);
            let c = random_density(d, &mut rng);
            let ab = trace_distance(&a, &b).unwrap();
            let bc = trace_distance(&b, &c).unwrap();
            let ac = trace_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn fuchs_van_de_graaf(seed in any::<u64>(), d in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_density(d, &mut rng);
            let b = random_density(d, &mut rng);
            let t = trace_distance(&a, &b).unwrap();
            prop_assert!(t <= fvg_bound(fidelity(&a, &b).unwrap()) + 1e-9);
        }
    }
}
