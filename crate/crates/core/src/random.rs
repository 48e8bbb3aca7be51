//! Seeded random generators for states, operators and test instances.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::qmatrix::{eig_hermitian, unitary_exp, ComplexMatrix, C64};

fn gaussian(rng: &mut impl Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Matrix with i.i.d. complex Gaussian entries.
pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let data = (0..rows * cols).map(|_| gaussian(rng)).collect();
    ComplexMatrix::new(rows, cols, data).expect("shape")
}

/// Haar-random unit vector.
pub fn random_pure(dim: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let v: Vec<C64> = (0..dim).map(|_| gaussian(rng)).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    ComplexMatrix::ket(v.into_iter().map(|z| z / n).collect())
}

/// Density operator from the Hilbert-Schmidt (Ginibre) ensemble.
pub fn random_density(dim: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = random_matrix(dim, dim, rng);
    let rho = g.dot(&g.adjoint());
    let t = rho.trace().re;
    rho.scale_real(1.0 / t)
}

/// Density operator of the given rank.
pub fn random_density_rank(dim: usize, rank: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = random_matrix(dim, rank.max(1), rng);
    let rho = g.dot(&g.adjoint());
    let t = rho.trace().re;
    rho.scale_real(1.0 / t)
}

pub fn random_hermitian(dim: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = random_matrix(dim, dim, rng);
    (&g + &g.adjoint()).scale_real(0.5)
}

/// Haar-random unitary via the eigenvectors of a GUE matrix.
pub fn haar_unitary(dim: usize, rng: &mut impl Rng) -> ComplexMatrix {
    // QR of a Ginibre matrix with phase fix
    let g = random_matrix(dim, dim, rng);
    let qr = nalgebra::QR::new(crate::qmatrix::to_na(&g));
    let q = qr.q();
    let r = qr.r();
    let mut u = crate::qmatrix::from_na(&q);
    for j in 0..dim {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..dim {
            u[(i, j)] *= ph;
        }
    }
    u
}

/// `exp(-i strength H)` for a random Hermitian `H` normalised to unit
/// spectral norm.
pub fn near_identity_unitary(dim: usize, strength: f64, rng: &mut impl Rng) -> ComplexMatrix {
    let h = random_hermitian(dim, rng);
    let e = eig_hermitian(&h).expect("hermitian");
    let scale = e.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    unitary_exp(&h.scale_real(1.0 / scale), strength).expect("hermitian")
}

/// Random PSD matrix `G G^dag` scaled so its largest eigenvalue is at most one.
pub fn random_contraction_psd(dim: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = random_matrix(dim, rng.random_range(1..=dim), rng);
    let p = g.dot(&g.adjoint());
    let lmax = eig_hermitian(&p).expect("psd").values[0];
    let s: f64 = rng.random_range(0.0..1.0);
    p.scale_real(s / lmax.max(1e-300))
}

/// Random PSD matrix of random rank with random overall scale in `(0, 4)`.
pub fn random_psd(dim: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = random_matrix(dim, rng.random_range(1..=dim), rng);
    let p = g.dot(&g.adjoint());
    let t = p.trace().re.max(1e-300);
    let s: f64 = rng.random_range(0.0..4.0);
    p.scale_real(s / t)
}
