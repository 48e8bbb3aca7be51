//! Checks whether a pure state on A, B, S, E is a private state, recovers its
//! twisting data, and measures how far a cq state is from a perfect key.
//!
//! Two characterisations are implemented independently. Both require the
//! key statistics `p_jk = delta_jk / 2`. The first then asks that Eve's
//! conditional states for the two key values coincide; the second asks that
//! Bob and the shield, conditioned on Alice's x-basis outcome, hold mutually
//! orthogonal states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infotheory::{conditional_entropy_cq, trace_distance, Ensemble};
use crate::qmatrix::{bipartite_matrix, eig_hermitian, polar_unitary_embedded, ComplexMatrix, C64};
use crate::states::{
    conditional_bs_states, measure_key, perfect_key_with_dim, KeyMeasurement, Label, MultipartiteState,
    Subsystem, TwistingData,
};

/// Tolerance used by `extract_twisting` to accept its input.
pub const EXTRACTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyDiagnostics {
    /// `max |p_jk - delta_jk/2|`.
    pub condition_a_deviation: f64,
    /// Trace distance between Eve's states conditioned on the two key
    /// values (2 when one of them has zero probability).
    pub condition_b_deviation: Option<f64>,
    /// `max ||sigma^j sigma^k||` over distinct x-basis outcomes.
    pub condition_bprime_deviation: Option<f64>,
    pub thm1_verdict: Option<bool>,
    pub thm2_verdict: Option<bool>,
    pub tol: f64,
}

fn require_pure_qubit_keys(gamma: &MultipartiteState) -> Result<()> {
    if !gamma.is_pure() {
        return Err(Error::Validation("privacy checks need a pure state".into()));
    }
    let a = gamma.factors_where(Label::is_alice_key);
    let b = gamma.factors_where(Label::is_bob_key);
    let dims = gamma.dims();
    if a.len() != 1 || b.len() != 1 || dims[a[0]] != 2 || dims[b[0]] != 2 {
        return Err(Error::Validation("expected one qubit key register each for Alice and Bob".into()));
    }
    Ok(())
}

fn condition_a(meas: &KeyMeasurement) -> f64 {
    let mut dev: f64 = 0.0;
    for (j, row) in meas.joint.iter().enumerate() {
        for (k, &p) in row.iter().enumerate() {
            let target = if j == k { 0.5 } else { 0.0 };
            dev = dev.max((p - target).abs());
        }
    }
    dev
}

fn condition_b(meas: &KeyMeasurement) -> Result<f64> {
    match (meas.eve_given_key(0), meas.eve_given_key(1)) {
        (Some(a), Some(b)) => trace_distance(a, b),
        _ => Ok(2.0),
    }
}

fn condition_bprime(gamma: &MultipartiteState) -> Result<f64> {
    let branches = conditional_bs_states(gamma)?;
    let mut dev: f64 = 0.0;
    for (i, bi) in branches.iter().enumerate() {
        for bj in &branches[i + 1..] {
            if let (Some(s), Some(t)) = (&bi.state, &bj.state) {
                dev = dev.max(s.dot(t).operator_norm());
            }
        }
    }
    Ok(dev)
}

/// Key statistics plus equality of Eve's conditional states.
pub fn check_thm1(gamma: &MultipartiteState, tol: f64) -> Result<PrivacyDiagnostics> {
    require_pure_qubit_keys(gamma)?;
    let meas = measure_key(gamma)?;
    let a = condition_a(&meas);
    let b = condition_b(&meas)?;
    Ok(PrivacyDiagnostics {
        condition_a_deviation: a,
        condition_b_deviation: Some(b),
        condition_bprime_deviation: None,
        thm1_verdict: Some(a <= tol && b <= tol),
        thm2_verdict: None,
        tol,
    })
}

/// Key statistics plus orthogonality of Bob and shield's conditional states.
pub fn check_thm2(gamma: &MultipartiteState, tol: f64) -> Result<PrivacyDiagnostics> {
    require_pure_qubit_keys(gamma)?;
    let meas = measure_key(gamma)?;
    let a = condition_a(&meas);
    let bp = condition_bprime(gamma)?;
    Ok(PrivacyDiagnostics {
        condition_a_deviation: a,
        condition_b_deviation: None,
        condition_bprime_deviation: Some(bp),
        thm1_verdict: None,
        thm2_verdict: Some(a <= tol && bp <= tol),
        tol,
    })
}

/// Both characterisations at once.
pub fn diagnose(gamma: &MultipartiteState, tol: f64) -> Result<PrivacyDiagnostics> {
    let d1 = check_thm1(gamma, tol)?;
    let d2 = check_thm2(gamma, tol)?;
    Ok(PrivacyDiagnostics {
        condition_bprime_deviation: d2.condition_bprime_deviation,
        thm2_verdict: d2.thm2_verdict,
        ..d1
    })
}

/// Recovers twisting data from a private state.
///
/// With `M^k` the S x E matrix of `sqrt2 (<kk| (x) 1)|gamma>`, every `M^k`
/// equals `V^k Xi` for a common `Xi`. The returned data fixes the gauge
/// `V^0 = 1`, `xi = M^0` and takes `V^1 = W^1 (W^0)^dag` where `W^k` is the
/// polar unitary of `M^k` (compressed onto a shield-sized slice of Eve's
/// space when Eve is larger than the shield).
pub fn extract_twisting(gamma: &MultipartiteState) -> Result<TwistingData> {
    let diag = check_thm1(gamma, EXTRACTION_TOL)?;
    if diag.thm1_verdict != Some(true) {
        return Err(Error::Extraction { diagnostics: Box::new(diag) });
    }
    let g = gamma.canonical()?;
    let labels: Vec<Label> = g.subsystems().iter().map(|s| s.0).collect();
    if labels.iter().any(|l| !matches!(l, Label::A | Label::B | Label::S | Label::E)) {
        return Err(Error::Validation(format!("expected factors A, B, S, E, got {labels:?}")));
    }
    let s_subs: Vec<Subsystem> = g.subsystems().iter().copied().filter(|s| s.0 == Label::S).collect();
    let e_subs: Vec<Subsystem> = g.subsystems().iter().copied().filter(|s| s.0 == Label::E).collect();
    let ds: usize = s_subs.iter().map(|s| s.1).product();
    let de: usize = e_subs.iter().map(|s| s.1).product();
    let dims = g.dims();
    let key = bipartite_matrix(g.matrix().data(), &dims, &[0, 1])?;
    let sqrt2 = std::f64::consts::SQRT_2;
    let m: Vec<ComplexMatrix> = (0..2)
        .map(|k| {
            let row = key.data()[(k * 2 + k) * ds * de..(k * 2 + k + 1) * ds * de].to_vec();
            ComplexMatrix::new(ds, de, row).expect("shape").scale_real(sqrt2)
        })
        .collect();
    // K maps Eve's space onto at most ds columns without losing the common
    // row space of the M^k
    let k = if de <= ds {
        ComplexMatrix::identity(de)
    } else {
        let rho_e = m[0].transpose().dot(&m[0].conj());
        let eig = eig_hermitian(&rho_e)?;
        let cols: Vec<Vec<C64>> = (0..ds).map(|c| eig.vectors.column(c)).collect();
        ComplexMatrix::from_columns(de, &cols)
    };
    let kc = k.conj();
    let w: Vec<ComplexMatrix> = m
        .iter()
        .map(|mk| polar_unitary_embedded(&mk.dot(&kc), ds))
        .collect::<Result<_>>()?;
    let v1 = w[1].dot(&w[0].adjoint());
    let norm = m[0].frobenius_norm();
    let mut xi_subs = s_subs;
    xi_subs.extend(e_subs);
    let xi = MultipartiteState::pure(ComplexMatrix::ket(m[0].scale_real(1.0 / norm).into_data()), xi_subs)?;
    TwistingData::new(vec![ComplexMatrix::identity(ds), v1], xi)
}

/// Half the trace distance between a state on key registers and E and the
/// perfect key built on its own Eve marginal. Other factors are traced out.
pub fn epsilon_privacy(rho_abe: &MultipartiteState) -> Result<f64> {
    let keep = rho_abe.factors_where(|l| l.is_alice_key() || l.is_bob_key() || l == Label::E);
    let r = rho_abe.marginal_factors(&keep)?;
    let dims = r.dims();
    let subs = r.subsystems();
    let da: usize = subs.iter().filter(|s| s.0.is_alice_key()).map(|s| s.1).product();
    let db: usize = subs.iter().filter(|s| s.0.is_bob_key()).map(|s| s.1).product();
    if da != db {
        return Err(Error::Validation("key registers differ in dimension".into()));
    }
    // group into A, B, E
    let perm: Vec<usize> = r
        .factors_where(Label::is_alice_key)
        .into_iter()
        .chain(r.factors_where(Label::is_bob_key))
        .chain(r.factors_of(&[Label::E]))
        .collect();
    let r = r.permuted(&perm)?;
    let de = dims.iter().product::<usize>() / (da * db);
    let rho_e = crate::qmatrix::partial_trace(r.matrix(), &[da, db, de], &[2])?;
    let kappa = perfect_key_with_dim(da, &rho_e)?;
    Ok(0.5 * trace_distance(r.matrix(), kappa.matrix())?)
}

/// `epsilon_privacy` of the cq state left by a key measurement, computed
/// block by block without forming the full operator.
pub fn epsilon_from_measurement(meas: &KeyMeasurement) -> Result<f64> {
    let da = meas.joint.len();
    let db = meas.joint.first().map_or(0, Vec::len);
    if da != db {
        return Err(Error::Validation("key registers differ in dimension".into()));
    }
    let Some(de) = meas.eve.iter().flatten().flatten().next().map(ComplexMatrix::rows) else {
        return Err(Error::Validation("measurement has no outcome with nonzero probability".into()));
    };
    let mut rho_e = ComplexMatrix::zeros(de, de);
    for (row, eve_row) in meas.joint.iter().zip(&meas.eve) {
        for (&p, e) in row.iter().zip(eve_row) {
            if let Some(e) = e {
                rho_e = &rho_e + &e.scale_real(p);
            }
        }
    }
    let target = rho_e.scale_real(1.0 / da as f64);
    let zero = ComplexMatrix::zeros(de, de);
    let mut total = 0.0;
    for j in 0..da {
        for k in 0..db {
            let block = meas.eve[j][k].as_ref().map_or_else(|| zero.clone(), |e| e.scale_real(meas.joint[j][k]));
            let reference = if j == k { &target } else { &zero };
            total += trace_distance(&block, reference)?;
        }
    }
    Ok(0.5 * total)
}

/// Conditional entropies `(H(Z_A|E), H(X_A|BS))` of Alice's key outcome in
/// the two conjugate bases.
pub fn uncertainty_check(gamma: &MultipartiteState) -> Result<(f64, f64)> {
    if !gamma.is_pure() {
        return Err(Error::Validation("uncertainty check needs a pure state".into()));
    }
    let meas = measure_key(gamma)?;
    let de = gamma.dim_of(&[Label::E]);
    let mut items = Vec::new();
    for (j, row) in meas.joint.iter().enumerate() {
        let pj: f64 = row.iter().sum();
        if pj <= 0.0 {
            continue;
        }
        let mut rho = ComplexMatrix::zeros(de, de);
        for (k, &p) in row.iter().enumerate() {
            if let Some(s) = &meas.eve[j][k] {
                rho = &rho + &s.scale_real(p / pj);
            }
        }
        items.push((pj, rho));
    }
    let hz = conditional_entropy_cq(&normalized(items)?)?;
    let branches = conditional_bs_states(gamma)?;
    let items = branches
        .into_iter()
        .filter_map(|b| b.state.map(|s| (b.probability, s)))
        .collect();
    let hx = conditional_entropy_cq(&normalized(items)?)?;
    Ok((hz, hx))
}

fn normalized(items: Vec<(f64, ComplexMatrix)>) -> Result<Ensemble> {
    let total: f64 = items.iter().map(|(p, _)| p).sum();
    Ensemble::new(items.into_iter().map(|(p, s)| (p / total, s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infotheory::fidelity_pure;
    use crate::qmatrix::{kron, pauli_x};
    use crate::random::{haar_unitary, near_identity_unitary, random_pure};
    use crate::states::{
        attack_state, bell_state, perfect_key, private_state, purify_with_shield, tensor, theta_attack, zero_state,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ket(v: &[f64]) -> ComplexMatrix {
        ComplexMatrix::ket(v.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    fn xi00() -> MultipartiteState {
        zero_state(vec![Subsystem(Label::S, 2), Subsystem(Label::E, 2)])
    }

    fn random_twisting(ds: usize, de: usize, rng: &mut ChaCha8Rng) -> TwistingData {
        let xi = MultipartiteState::pure(
            random_pure(ds * de, rng),
            vec![Subsystem(Label::S, ds), Subsystem(Label::E, de)],
        )
        .unwrap();
        TwistingData::new(vec![haar_unitary(ds, rng), haar_unitary(ds, rng)], xi).unwrap()
    }

    fn ghz() -> MultipartiteState {
        private_state(&TwistingData::new(vec![ComplexMatrix::identity(2), pauli_x()], xi00()).unwrap()).unwrap()
    }

    #[test]
    fn private_states_pass_both() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (ds, de) in [(1, 1), (2, 2), (3, 2), (2, 4), (4, 3)] {
            let g = private_state(&random_twisting(ds, de, &mut rng)).unwrap();
            let d = diagnose(&g, 1e-8).unwrap();
            assert_eq!(d.thm1_verdict, Some(true));
            assert_eq!(d.thm2_verdict, Some(true));
            assert!(d.condition_a_deviation <= 1e-10);
            assert!(d.condition_b_deviation.unwrap() <= 1e-10);
            assert!(d.condition_bprime_deviation.unwrap() <= 1e-10);
        }
    }

    #[test]
    fn checker_examples() {
        let phi_xi = tensor(&bell_state(), &xi00()).unwrap();
        assert_eq!(check_thm1(&phi_xi, 1e-8).unwrap().thm1_verdict, Some(true));
        assert_eq!(check_thm2(&ghz(), 1e-8).unwrap().thm2_verdict, Some(true));

        let broken = purify_with_shield(&attack_state(&ket(&[1.0, 0.0]), &ket(&[0.0, 1.0])).unwrap()).unwrap();
        let d = check_thm1(&broken, 1e-8).unwrap();
        assert_eq!(d.thm1_verdict, Some(false));
        assert!((d.condition_b_deviation.unwrap() - 2.0).abs() < 1e-12);

        let plus = purify_with_shield(&theta_attack(std::f64::consts::FRAC_PI_4).unwrap()).unwrap();
        let d = check_thm2(&plus, 1e-8).unwrap();
        assert_eq!(d.thm2_verdict, Some(false));
        assert!(d.condition_bprime_deviation.unwrap() > 0.1);

        let mixed = MultipartiteState::mixed(phi_xi.density(), phi_xi.subsystems().to_vec()).unwrap();
        assert!(matches!(check_thm1(&mixed, 1e-8), Err(Error::Validation(_))));
    }

    #[test]
    fn condition_a_failure_rejected_by_both() {
        // |00>_AB |00>_SE: Eve knows nothing but the key is not uniform
        let s = zero_state(vec![
            Subsystem(Label::A, 2),
            Subsystem(Label::B, 2),
            Subsystem(Label::S, 2),
            Subsystem(Label::E, 2),
        ]);
        let d = diagnose(&s, 1e-8).unwrap();
        assert_eq!(d.thm1_verdict, Some(false));
        assert_eq!(d.thm2_verdict, Some(false));
        assert!((d.condition_a_deviation - 0.5).abs() < 1e-12);
    }

    #[test]
    fn extraction_examples() {
        let t = extract_twisting(&tensor(&bell_state(), &xi00()).unwrap()).unwrap();
        for v in &t.vks {
            assert!(v.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
        }
        let t = extract_twisting(&ghz()).unwrap();
        assert!(t.vks[0].max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
        assert!(t.vks[1].max_abs_diff(&pauli_x()) < 1e-12);

        let broken = purify_with_shield(&theta_attack(0.3).unwrap()).unwrap();
        match extract_twisting(&broken) {
            Err(Error::Extraction { diagnostics }) => assert_eq!(diagnostics.thm1_verdict, Some(false)),
            other => panic!("expected extraction failure, got {other:?}"),
        }
    }

    #[test]
    fn extraction_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for (ds, de) in [(2, 2), (3, 2), (2, 3), (4, 4), (1, 3), (3, 1)] {
            for _ in 0..5 {
                let g = private_state(&random_twisting(ds, de, &mut rng)).unwrap();
                let back = private_state(&extract_twisting(&g).unwrap()).unwrap();
                let f = fidelity_pure(g.matrix(), &back.density()).unwrap();
                assert!(f * f >= 1.0 - 1e-9, "fidelity {f} for ds={ds} de={de}");
            }
        }
    }

    #[test]
    fn epsilon_examples() {
        let kappa = perfect_key(&ket(&[0.6, 0.8]).outer_self()).unwrap();
        assert!(epsilon_privacy(&kappa).unwrap() < 1e-12);
        let orth = attack_state(&ket(&[1.0, 0.0]), &ket(&[0.0, 1.0])).unwrap();
        assert!((epsilon_privacy(&orth).unwrap() - 0.5).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = private_state(&random_twisting(2, 3, &mut rng)).unwrap();
        assert!(epsilon_privacy(&measure_key(&g).unwrap().cq_state()).unwrap() < 1e-10);
    }

    #[test]
    fn blockwise_epsilon_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for _ in 0..10 {
            let s = MultipartiteState::pure(
                random_pure(2 * 2 * 2 * 3, &mut rng),
                vec![
                    Subsystem(Label::A, 2),
                    Subsystem(Label::B, 2),
                    Subsystem(Label::S, 2),
                    Subsystem(Label::E, 3),
                ],
            )
            .unwrap();
            let meas = measure_key(&s).unwrap();
            let dense = epsilon_privacy(&meas.cq_state()).unwrap();
            assert!((epsilon_from_measurement(&meas).unwrap() - dense).abs() < 1e-12);
        }
    }

    #[test]
    fn epsilon_monotone_under_discarding_eve() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..10 {
            // Eve holds two qubits; drop the second one
            let phi0 = random_pure(4, &mut rng);
            let phi1 = random_pure(4, &mut rng);
            let full = attack_state(&phi0, &phi1).unwrap();
            let rho = full.matrix().clone();
            let reduced = crate::qmatrix::partial_trace(&rho, &[2, 2, 2, 2], &[0, 1, 2]).unwrap();
            let small = MultipartiteState::mixed(
                reduced,
                vec![Subsystem(Label::A, 2), Subsystem(Label::B, 2), Subsystem(Label::E, 2)],
            )
            .unwrap();
            assert!(epsilon_privacy(&small).unwrap() <= epsilon_privacy(&full).unwrap() + 1e-12);
        }
    }

    #[test]
    fn uncertainty_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let g = private_state(&random_twisting(2, 2, &mut rng)).unwrap();
        let (hz, hx) = uncertainty_check(&g).unwrap();
        assert!((hz - 1.0).abs() < 1e-9 && hx.abs() < 1e-9);
        let broken = purify_with_shield(&attack_state(&ket(&[1.0, 0.0]), &ket(&[0.0, 1.0])).unwrap()).unwrap();
        assert!(uncertainty_check(&broken).unwrap().0.abs() < 1e-9);
        for _ in 0..50 {
            let s = MultipartiteState::pure(
                random_pure(2 * 2 * 2 * 2, &mut rng),
                vec![
                    Subsystem(Label::A, 2),
                    Subsystem(Label::B, 2),
                    Subsystem(Label::S, 2),
                    Subsystem(Label::E, 2),
                ],
            )
            .unwrap();
            let (hz, hx) = uncertainty_check(&s).unwrap();
            assert!(hz + hx >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn perturbed_private_states_fail_both() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for _ in 0..10 {
            let g = private_state(&random_twisting(2, 2, &mut rng)).unwrap();
            // unitary on A (x) E, identity on B and S
            let u = near_identity_unitary(4, 0.1, &mut rng);
            let perm = [0, 3, 1, 2];
            let reordered = g.permuted(&perm).unwrap();
            let full = kron(&u, &ComplexMatrix::identity(4));
            let moved = MultipartiteState::pure(full.dot(reordered.matrix()), reordered.subsystems().to_vec())
                .unwrap()
                .canonical()
                .unwrap();
            let d = diagnose(&moved, 1e-8).unwrap();
            assert_eq!(d.thm1_verdict, d.thm2_verdict);
        }
    }
}
