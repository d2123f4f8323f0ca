//! Direct rotation between projectors and the spectral-perturbation lemma
//! suite: Davis-Kahan sin(theta) bound, the projector-commutator identity,
//! and remainder bounds for the ad_S expansion of e^S H e^{-S}.

use num_complex::Complex64;

use crate::error::{GadgetError, Result};
use crate::hamiltonians::LocalHamiltonian;
use crate::operators::{
    herm_eig, op_norm, op_norm_mat, projector_rank, projector_residual, CMatrix, DenseOperator,
};

/// Residual below which an operator is accepted as a projector.
pub const PROJECTOR_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Direct rotation
// ---------------------------------------------------------------------------

/// The minimal unitary taking projector `P` to projector `Q`, with its
/// anti-Hermitian generator `S = log W` (block off-diagonal in both).
#[derive(Debug, Clone)]
pub struct DirectRotation {
    pub w: DenseOperator,
    pub generator: DenseOperator,
    pub source: DenseOperator,
    pub target: DenseOperator,
}

impl DirectRotation {
    pub fn w_minus_identity_norm(&self) -> f64 {
        let dim = self.w.dim();
        op_norm_mat(&(self.w.mat() - CMatrix::identity(dim, dim)))
    }
}

fn check_projector(p: &DenseOperator, _what: &'static str) -> Result<()> {
    let r = projector_residual(p);
    if r > PROJECTOR_TOL {
        return Err(GadgetError::NotAProjector { residual: r });
    }
    Ok(())
}

/// Unitary polar factor `G (G^dag G)^{-1/2}` via the Hermitian eigensolve.
fn polar_unitary_factor(g: &CMatrix) -> Result<CMatrix> {
    let gram = DenseOperator::from_matrix(g.adjoint() * g);
    let eig = herm_eig(&gram)?;
    if eig.values[0] <= 1e-14 {
        return Err(GadgetError::RotationUndefined {
            distance: 1.0 - eig.values[0].max(0.0),
        });
    }
    let inv_sqrt = eig.map_spectrum(|x| Complex64::new(1.0 / x.sqrt(), 0.0));
    Ok(g * inv_sqrt)
}

/// Direct rotation `W = sqrt(R_Q R_P)` computed as the polar factor of
/// `QP + (I-Q)(I-P)`, with generator recovered through the functional
/// calculus of `W` (eigenphases lie in `(-pi/2, pi/2)` when `||P-Q|| < 1`).
pub fn direct_rotation(p: &DenseOperator, q: &DenseOperator) -> Result<DirectRotation> {
    check_projector(p, "source")?;
    check_projector(q, "target")?;
    if p.dim() != q.dim() {
        return Err(GadgetError::DimensionMismatch {
            context: "direct_rotation",
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let (rp, rq) = (projector_rank(p), projector_rank(q));
    if rp != rq {
        return Err(GadgetError::RankMismatch {
            context: "direct_rotation",
            left: rp,
            right: rq,
        });
    }
    let dist = op_norm(&p.sub(q));
    if dist >= 1.0 - 1e-8 {
        return Err(GadgetError::RotationUndefined { distance: dist });
    }
    let dim = p.dim();
    let id = CMatrix::identity(dim, dim);
    let g = q.mat() * p.mat() + (&id - q.mat()) * (&id - p.mat());
    let w = polar_unitary_factor(&g)?;

    // S = log W. With eigenphases theta in (-pi/2, pi/2), tan(theta) is the
    // Hermitian operator -i (W - W^dag)/2 * ((W + W^dag)/2)^{-1}; arctan of
    // its spectrum recovers S = i * arctan(M).
    let c = (&w + w.adjoint()) * Complex64::new(0.5, 0.0);
    let k = (&w - w.adjoint()) * Complex64::new(0.5, 0.0);
    let c_eig = herm_eig(&DenseOperator::from_matrix(c))?;
    let c_inv = c_eig.map_spectrum(|x| Complex64::new(1.0 / x, 0.0));
    let m_raw = k * c_inv * Complex64::new(0.0, -1.0);
    // Hermitian in exact arithmetic; C^-1 amplifies roundoff near ||P-Q|| = 1,
    // so symmetrize before the eigensolve.
    let m = DenseOperator::from_matrix((&m_raw + m_raw.adjoint()) * Complex64::new(0.5, 0.0));
    let m_eig = herm_eig(&m)?;
    let s = m_eig.map_spectrum(|x| Complex64::new(0.0, x.atan()));

    Ok(DirectRotation {
        w: DenseOperator::from_matrix(w),
        generator: DenseOperator::from_matrix(s),
        source: p.clone(),
        target: q.clone(),
    })
}

/// `exp(S)` for anti-Hermitian `S`, through the Hermitian eigensolve of `-iS`.
pub fn exp_antihermitian(s: &DenseOperator) -> Result<DenseOperator> {
    let h = DenseOperator::from_matrix(s.mat() * Complex64::new(0.0, -1.0));
    crate::operators::expm_ih(&h, -1.0)
}

// ---------------------------------------------------------------------------
// Davis-Kahan
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct DavisKahanCheck {
    /// `||W - I||` for the direct rotation from `P_A` to `P_B`.
    pub lhs: f64,
    /// `sqrt(2)/lambda_gap * ||(B - A) P_A||`.
    pub rhs: f64,
    pub holds: bool,
    pub slack: f64,
}

/// Eigenvalues of `A` restricted to the range of projector `P`.
fn restricted_eigenvalues(a: &DenseOperator, p: &DenseOperator) -> Result<Vec<f64>> {
    let rank = projector_rank(p);
    let eig = herm_eig(p)?;
    let dim = p.dim();
    let mut basis = CMatrix::zeros(dim, rank);
    // eigenvalues ascend, so the range eigenvectors are the last `rank` columns
    for k in 0..rank {
        basis.set_column(k, &eig.vectors.column(dim - rank + k));
    }
    let small = DenseOperator::from_matrix(basis.adjoint() * a.mat() * &basis);
    Ok(herm_eig(&small)?.values)
}

fn complement(p: &DenseOperator) -> DenseOperator {
    DenseOperator::identity(p.dim()).sub(p)
}

/// Check the Davis-Kahan sin(theta) bound for a concrete instance. The
/// spectral-window hypotheses are verified numerically; violations are
/// reported instead of silently passing.
pub fn davis_kahan_check(
    a: &DenseOperator,
    b: &DenseOperator,
    p_a: &DenseOperator,
    p_b: &DenseOperator,
    alpha: f64,
    beta: f64,
    lambda_gap: f64,
) -> Result<DavisKahanCheck> {
    check_projector(p_a, "P_A")?;
    check_projector(p_b, "P_B")?;
    if lambda_gap <= 0.0 {
        return Err(GadgetError::InvalidParameter {
            reason: "lambda_gap must be positive".into(),
        });
    }
    let tol = 1e-9;
    for (name, op, proj) in [("A/P_A", a, p_a), ("B/P_B", b, p_b)] {
        let off = proj.mat() * op.mat() * complement(proj).mat();
        let scale = 1.0 + op_norm(op);
        if op_norm_mat(&off) > tol * scale {
            return Err(GadgetError::HypothesisViolation {
                reason: format!("{name}: projector does not block-diagonalize the operator"),
            });
        }
    }
    if projector_rank(p_a) != projector_rank(p_b) {
        return Err(GadgetError::HypothesisViolation {
            reason: "P_A and P_B have different ranks".into(),
        });
    }
    for lam in restricted_eigenvalues(a, p_a)? {
        if lam < alpha - tol || lam > beta + tol {
            return Err(GadgetError::HypothesisViolation {
                reason: format!("spec(A|P_A) leaves [{alpha}, {beta}]: found {lam}"),
            });
        }
    }
    for mu in restricted_eigenvalues(b, &complement(p_b))? {
        if mu > alpha - lambda_gap + tol && mu < beta + lambda_gap - tol {
            return Err(GadgetError::HypothesisViolation {
                reason: format!("spec(B|P_B^perp) enters the forbidden window: found {mu}"),
            });
        }
    }
    let rot = direct_rotation(p_a, p_b)?;
    let lhs = rot.w_minus_identity_norm();
    let diff = DenseOperator::from_matrix((b.mat() - a.mat()) * p_a.mat());
    let rhs = std::f64::consts::SQRT_2 / lambda_gap * op_norm(&diff);
    Ok(DavisKahanCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
        slack: rhs - lhs,
    })
}

// ---------------------------------------------------------------------------
// Projector commutator identity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct ProjectorCommutatorCheck {
    /// `||[P, Q]||`.
    pub commutator_norm: f64,
    /// `f(P,Q) = min over projectors of ||PQP - P~||`, by eigenvalue rounding.
    pub f_value: f64,
    /// `| ||[P,Q]|| - sqrt(f - f^2) |`.
    pub identity_residual: f64,
}

pub fn projector_commutator_check(
    p: &DenseOperator,
    q: &DenseOperator,
) -> Result<ProjectorCommutatorCheck> {
    check_projector(p, "P")?;
    check_projector(q, "Q")?;
    let comm = p.mat() * q.mat() - q.mat() * p.mat();
    let commutator_norm = op_norm_mat(&comm);
    let pqp = DenseOperator::from_matrix(p.mat() * q.mat() * p.mat());
    let eig = herm_eig(&pqp)?;
    // Rounding each eigenvalue of PQP to the nearer of {0, 1} realizes the
    // minimizing projector.
    let f_value = eig
        .values
        .iter()
        .map(|&lam| lam.abs().min((1.0 - lam).abs()))
        .fold(0.0, f64::max);
    let identity_residual = (commutator_norm - (f_value - f_value * f_value).max(0.0).sqrt()).abs();
    Ok(ProjectorCommutatorCheck {
        commutator_norm,
        f_value,
        identity_residual,
    })
}

// ---------------------------------------------------------------------------
// ad_S expansion remainders
// ---------------------------------------------------------------------------

fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Remainder `r_k` of the ad_S series for `e^S H e^{-S}`, together with the
/// bound `||ad_S^k(H)|| / k!`.
pub fn ad_remainder(s: &DenseOperator, h: &DenseOperator, k: usize) -> Result<(f64, f64)> {
    if k > 6 {
        return Err(GadgetError::InvalidParameter {
            reason: format!("remainder order {k} > 6"),
        });
    }
    let anti_dev = (s.mat() + s.mat().adjoint()).norm() / s.mat().norm().max(1e-300);
    if s.mat().norm() > 0.0 && anti_dev > 1e-10 {
        return Err(GadgetError::InvalidParameter {
            reason: format!("S is not anti-Hermitian (deviation {anti_dev:.3e})"),
        });
    }
    let es = exp_antihermitian(s)?;
    let conj = es.mat() * h.mat() * es.adjoint().mat();

    let mut partial = CMatrix::zeros(h.dim(), h.dim());
    let mut ad_p = h.mat().clone();
    let mut factorial = 1.0f64;
    for p in 0..=k {
        if p < k {
            partial += &ad_p * Complex64::new(1.0 / factorial, 0.0);
        }
        if p == k {
            break;
        }
        ad_p = commutator(s.mat(), &ad_p);
        factorial *= (p + 1) as f64;
    }
    let r_k = if k == 0 {
        op_norm_mat(&conj)
    } else {
        op_norm_mat(&(conj - partial))
    };
    let bound = op_norm_mat(&ad_p) / factorial;
    Ok((r_k, bound))
}

#[derive(Debug, Clone, Copy)]
pub struct LocalAdBound {
    /// `||ad_S^k(H)||` evaluated densely.
    pub value: f64,
    /// `n * J_S^k * J_H`.
    pub reference: f64,
    pub ratio: f64,
}

/// Dense evaluation of `||ad_S^k(H)||` against the locality reference
/// `n J_S^k J_H`; sweeps over n confirm the ratio stays O(1).
pub fn local_ad_bound_check(s: &LocalHamiltonian, h: &LocalHamiltonian, k: usize) -> Result<LocalAdBound> {
    if s.layout() != h.layout() {
        return Err(GadgetError::DimensionMismatch {
            context: "local_ad_bound_check layouts",
            expected: h.layout().total_dim(),
            got: s.layout().total_dim(),
        });
    }
    let sm = s.assemble()?;
    let hm = h.assemble()?;
    let mut ad = hm.mat().clone();
    for _ in 0..k {
        ad = commutator(sm.mat(), &ad);
    }
    let value = op_norm_mat(&ad);
    let n = s.layout().n_sites() as f64;
    let js = s.stats().max_term_norm;
    let jh = h.stats().max_term_norm;
    let reference = n * js.powi(k as i32) * jh;
    let ratio = if reference > 0.0 { value / reference } else { 0.0 };
    Ok(LocalAdBound {
        value,
        reference,
        ratio,
    })
}
