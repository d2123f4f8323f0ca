//! Seeded random operators and states used by the samplers and the test suite.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::operators::{CMatrix, CVector, DenseOperator, Pauli, PauliString, SiteLayout};

fn gauss(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Ginibre matrix: i.i.d. complex Gaussian entries.
pub fn random_matrix(dim: usize, rng: &mut impl Rng) -> CMatrix {
    DMatrix::from_fn(dim, dim, |_, _| Complex64::new(gauss(rng), gauss(rng)))
}

/// Random Hermitian operator with operator norm roughly `scale`.
pub fn random_hermitian(dim: usize, scale: f64, rng: &mut impl Rng) -> DenseOperator {
    let g = random_matrix(dim, rng);
    let h = (&g + g.adjoint()) * Complex64::new(scale / (2.0 * (dim as f64).sqrt()), 0.0);
    DenseOperator::hermitian(h).expect("symmetrized matrix is Hermitian")
}

/// Haar-ish random unitary from the QR factorization of a Ginibre matrix.
pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> DenseOperator {
    let g = random_matrix(dim, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix column phases so the distribution does not depend on the QR convention.
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    DenseOperator::from_matrix(q)
}

/// Normalized random pure state.
pub fn random_pure_state(dim: usize, rng: &mut impl Rng) -> CVector {
    let mut v = CVector::from_fn(dim, |_, _| Complex64::new(gauss(rng), gauss(rng)));
    let n = v.norm();
    v /= Complex64::new(n, 0.0);
    v
}

/// Random full-rank density operator (normalized Wishart).
pub fn random_density(dim: usize, rng: &mut impl Rng) -> DenseOperator {
    let g = random_matrix(dim, rng);
    let w = &g * g.adjoint();
    let tr = w.trace().re;
    DenseOperator::hermitian(w / Complex64::new(tr, 0.0)).expect("Wishart is Hermitian")
}

/// Rank-`rank` projector with Haar-random range.
pub fn random_projector(dim: usize, rank: usize, rng: &mut impl Rng) -> DenseOperator {
    assert!(rank <= dim);
    let u = random_unitary(dim, rng);
    let mut p = CMatrix::zeros(dim, dim);
    for k in 0..rank {
        let col = u.mat().column(k);
        p += col * col.adjoint();
    }
    DenseOperator::from_matrix(p)
}

/// Random Pauli string on qubit sites of `layout` with coefficient uniform in
/// `[0, j_max]`; each site draws a uniform letter from {I, X, Y, Z}.
pub fn random_pauli_string(layout: &SiteLayout, j_max: f64, rng: &mut impl Rng) -> PauliString {
    let n = layout.n_sites();
    let letters = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    loop {
        let factors: Vec<(usize, Pauli)> = (0..n)
            .filter(|&s| layout.dims()[s] == 2)
            .map(|s| (s, letters[rng.random_range(0..4)]))
            .collect();
        let coeff = j_max * rng.random::<f64>();
        let p = PauliString::new(coeff, n, &factors).expect("sites in range");
        if !p.support().is_empty() {
            return p;
        }
    }
}
