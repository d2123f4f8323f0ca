//! Measurement-based (quantum Zeno) gadgets: the gadget Hamiltonian on the
//! system plus one ancilla qubit, its effective Hamiltonian, the
//! evolve-then-dephase channel composition, per-step amplitude measurements,
//! Trotter-error and conjugation-drift utilities, and the noisy-simulation
//! error budget.

use num_complex::Complex64;

use crate::error::{GadgetError, Result};
use crate::hamiltonians::{LocalHamiltonian, LocalTerm};
use crate::operators::{
    embed_on_support, expm_ih, herm_eig, op_norm, op_norm_mat, trace_norm, CMatrix, CVector,
    DenseOperator, Pauli, PauliString, SiteLayout,
};

// ---------------------------------------------------------------------------
// Gadget spec
// ---------------------------------------------------------------------------

/// The triple (H_I, H_X, H_P1) generating the measurement-gadget dynamics,
/// with the measurement frequency locked to the step: omega = 2 pi / delta_t.
#[derive(Debug, Clone)]
pub struct ZenoGadgetSpec {
    pub h_i: LocalHamiltonian,
    pub h_x: LocalHamiltonian,
    pub h_p1: LocalHamiltonian,
    pub delta_t: f64,
    pub omega: f64,
}

/// Dimensionless norm record: (||H_I||, ||H_X||/omega^(1/2), ||H_P1||/omega).
#[derive(Debug, Clone, Copy)]
pub struct ZenoNormRatios {
    pub h_i_norm: f64,
    pub h_x_over_sqrt_omega: f64,
    pub h_p1_over_omega: f64,
}

impl ZenoGadgetSpec {
    /// Build and validate: layouts must agree and `H_P1^2 = omega^2 I` must
    /// hold to relative 1e-8.
    pub fn new(
        h_i: LocalHamiltonian,
        h_x: LocalHamiltonian,
        h_p1: LocalHamiltonian,
        delta_t: f64,
    ) -> Result<Self> {
        if delta_t <= 0.0 {
            return Err(GadgetError::InvalidParameter {
                reason: "delta_t must be positive".into(),
            });
        }
        let omega = 2.0 * std::f64::consts::PI / delta_t;
        for other in [&h_x, &h_p1] {
            if other.layout() != h_i.layout() {
                return Err(GadgetError::DimensionMismatch {
                    context: "zeno spec layouts",
                    expected: h_i.layout().total_dim(),
                    got: other.layout().total_dim(),
                });
            }
        }
        let p1 = h_p1.assemble()?;
        let sq = p1.matmul(&p1);
        let dim = sq.dim();
        let dev = op_norm_mat(
            &(sq.mat() - CMatrix::identity(dim, dim) * Complex64::new(omega * omega, 0.0)),
        );
        if dev > 1e-8 * omega * omega {
            return Err(GadgetError::InvalidParameter {
                reason: format!("H_P1^2 - omega^2 I has norm {dev:.3e}"),
            });
        }
        Ok(Self {
            h_i,
            h_x,
            h_p1,
            delta_t,
            omega,
        })
    }

    pub fn layout(&self) -> &SiteLayout {
        self.h_i.layout()
    }

    pub fn norm_ratios(&self) -> Result<ZenoNormRatios> {
        Ok(ZenoNormRatios {
            h_i_norm: op_norm(&self.h_i.assemble()?),
            h_x_over_sqrt_omega: op_norm(&self.h_x.assemble()?) / self.omega.sqrt(),
            h_p1_over_omega: op_norm(&self.h_p1.assemble()?) / self.omega,
        })
    }
}

/// Gadget Hamiltonian `H' = H_I (x) I + H_X (x) X + H_P1 (x) |1><1|` as a
/// local Hamiltonian on the ancilla-extended layout.
pub fn zeno_local_hamiltonian(spec: &ZenoGadgetSpec) -> Result<LocalHamiltonian> {
    let ext = spec.layout().extended(&[2])?;
    let anc = ext.n_sites() - 1;
    let x = DenseOperator::from_matrix(Pauli::X.matrix());
    let p1 = DenseOperator::diagonal(&[0.0, 1.0]);
    let mut h = LocalHamiltonian::new(ext);
    for t in spec.h_i.terms() {
        h.push_term(t.clone())?;
    }
    for t in spec.h_x.terms() {
        let mut support = t.support.clone();
        support.push(anc);
        h.push_term(LocalTerm::new(
            t.operator.kron(&x),
            support,
            format!("{}*X", t.label),
        )?)?;
    }
    for t in spec.h_p1.terms() {
        let mut support = t.support.clone();
        support.push(anc);
        h.push_term(LocalTerm::new(
            t.operator.kron(&p1),
            support,
            format!("{}*P1", t.label),
        )?)?;
    }
    Ok(h)
}

/// Assembled gadget Hamiltonian on `H (x) C^2`.
pub fn zeno_hamiltonian(spec: &ZenoGadgetSpec) -> Result<DenseOperator> {
    zeno_local_hamiltonian(spec)?.assemble()
}

/// Effective Hamiltonian `H = H_I - omega^{-2} H_X H_P1 H_X`.
pub fn effective_hamiltonian(spec: &ZenoGadgetSpec) -> Result<DenseOperator> {
    let hi = spec.h_i.assemble()?;
    let hx = spec.h_x.assemble()?;
    let hp1 = spec.h_p1.assemble()?;
    let correction = hx
        .matmul(&hp1)
        .matmul(&hx)
        .scale(1.0 / (spec.omega * spec.omega));
    DenseOperator::hermitian(hi.sub(&correction).into_matrix())
}

/// The Pauli-string construction: `H_I = -A`, `H_X = sqrt(omega/2) (B + C)`,
/// `H_P1 = -omega A` for pairwise commuting strings with coefficients +-1;
/// the effective Hamiltonian is the product A B C.
pub fn pauli_zeno_spec(
    a: &PauliString,
    b: &PauliString,
    c: &PauliString,
    layout: &SiteLayout,
    delta_t: f64,
) -> Result<ZenoGadgetSpec> {
    for (p, name) in [(a, "A"), (b, "B"), (c, "C")] {
        if (p.coefficient.abs() - 1.0).abs() > 1e-12 {
            return Err(GadgetError::InvalidParameter {
                reason: format!("{name} must have coefficient +-1"),
            });
        }
        if p.n_sites() != layout.n_sites() {
            return Err(GadgetError::DimensionMismatch {
                context: "pauli_zeno_spec sites",
                expected: layout.n_sites(),
                got: p.n_sites(),
            });
        }
    }
    if !a.commutes_with(b) || !b.commutes_with(c) || !a.commutes_with(c) {
        return Err(GadgetError::NonCommuting {
            context: "pauli_zeno_spec requires pairwise commuting strings",
        });
    }
    let omega = 2.0 * std::f64::consts::PI / delta_t;
    let mut neg_a = a.clone();
    neg_a.coefficient = -a.coefficient;
    let mut h_i = LocalHamiltonian::new(layout.clone());
    h_i.add_pauli(&neg_a, "-A")?;

    let coupling = (omega / 2.0).sqrt();
    let mut h_x = LocalHamiltonian::new(layout.clone());
    let mut b_scaled = b.clone();
    b_scaled.coefficient *= coupling;
    let mut c_scaled = c.clone();
    c_scaled.coefficient *= coupling;
    h_x.add_pauli(&b_scaled, "B")?;
    h_x.add_pauli(&c_scaled, "C")?;

    let mut a_omega = a.clone();
    a_omega.coefficient *= -omega;
    let mut h_p1 = LocalHamiltonian::new(layout.clone());
    h_p1.add_pauli(&a_omega, "-omega*A")?;

    ZenoGadgetSpec::new(h_i, h_x, h_p1, delta_t)
}

// ---------------------------------------------------------------------------
// Channels
// ---------------------------------------------------------------------------

/// Quantum channels used by the simulator: unitary conjugation, dephasing of
/// the ancilla (the unrecorded measurement M), and composition.
#[derive(Debug, Clone)]
pub enum Channel {
    UnitaryConjugation(DenseOperator),
    /// Removes coherences between ancilla basis states; the ancilla is the
    /// last tensor factor with the given dimension.
    AncillaDephasing { sys_dim: usize, anc_dim: usize },
    Composition(Vec<Channel>),
}

impl Channel {
    pub fn apply(&self, rho: &DenseOperator) -> DenseOperator {
        match self {
            Channel::UnitaryConjugation(u) => {
                DenseOperator::from_matrix(u.mat() * rho.mat() * u.adjoint().mat())
            }
            Channel::AncillaDephasing { sys_dim, anc_dim } => {
                let dim = sys_dim * anc_dim;
                assert_eq!(rho.dim(), dim, "state dim mismatch");
                let mut out = CMatrix::zeros(dim, dim);
                for a in 0..*anc_dim {
                    for i in 0..*sys_dim {
                        for j in 0..*sys_dim {
                            let (r, c) = (i * anc_dim + a, j * anc_dim + a);
                            out[(r, c)] = rho.mat()[(r, c)];
                        }
                    }
                }
                DenseOperator::from_matrix(out)
            }
            Channel::Composition(steps) => {
                let mut state = rho.clone();
                for ch in steps {
                    state = ch.apply(&state);
                }
                state
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Step amplitudes and trajectories
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct StepAmplitudes {
    pub delta_t: f64,
    /// Norm of the 0-block error against `exp(-i dt (H + H_else)) psi`.
    pub err0: f64,
    /// Norm of the 1-block component.
    pub amp1: f64,
}

/// One evolution step from `psi (x) |0>`: how far the 0-block is from the
/// effective evolution, and how much amplitude leaks into the 1 branch.
pub fn step_amplitudes(
    spec: &ZenoGadgetSpec,
    psi: &CVector,
    h_else: Option<&LocalHamiltonian>,
) -> Result<StepAmplitudes> {
    let sys_dim = spec.layout().total_dim();
    if psi.len() != sys_dim {
        return Err(GadgetError::DimensionMismatch {
            context: "step_amplitudes state",
            expected: sys_dim,
            got: psi.len(),
        });
    }
    if (psi.norm() - 1.0).abs() > 1e-9 {
        return Err(GadgetError::InvalidState {
            reason: format!("state norm {}", psi.norm()),
        });
    }
    let mut joint = zeno_hamiltonian(spec)?;
    let mut target = effective_hamiltonian(spec)?;
    if let Some(he) = h_else {
        let he_op = he.assemble()?;
        joint =
            DenseOperator::hermitian(joint.mat() + he_op.kron(&DenseOperator::identity(2)).mat())?;
        target = DenseOperator::hermitian(target.mat() + he_op.mat())?;
    }
    let u = expm_ih(&joint, spec.delta_t)?;
    // psi (x) |0>: ancilla is the least significant factor
    let mut joint_psi = CVector::zeros(2 * sys_dim);
    for i in 0..sys_dim {
        joint_psi[2 * i] = psi[i];
    }
    let evolved = u.apply(&joint_psi);
    let mut block0 = CVector::zeros(sys_dim);
    let mut block1 = CVector::zeros(sys_dim);
    for i in 0..sys_dim {
        block0[i] = evolved[2 * i];
        block1[i] = evolved[2 * i + 1];
    }
    let reference = expm_ih(&target, spec.delta_t)?.apply(psi);
    Ok(StepAmplitudes {
        delta_t: spec.delta_t,
        err0: (block0 - reference).norm(),
        amp1: block1.norm(),
    })
}

/// States to simulate and normalized observables to read out.
#[derive(Debug, Clone)]
pub struct SimulationTask {
    pub state_set: Vec<DenseOperator>,
    pub observables: Vec<(String, DenseOperator)>,
    pub t_max: f64,
    pub target_eps: f64,
}

impl SimulationTask {
    pub fn new(
        state_set: Vec<DenseOperator>,
        observables: Vec<(String, DenseOperator)>,
        t_max: f64,
        target_eps: f64,
    ) -> Result<Self> {
        for (label, o) in &observables {
            let n = op_norm(o);
            if (n - 1.0).abs() > 1e-9 {
                return Err(GadgetError::InvalidParameter {
                    reason: format!("observable {label} has norm {n}, expected 1"),
                });
            }
        }
        if t_max <= 0.0 {
            return Err(GadgetError::InvalidParameter {
                reason: "t_max must be positive".into(),
            });
        }
        Ok(Self {
            state_set,
            observables,
            t_max,
            target_eps,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    pub t: f64,
    /// Expectation of each task observable under the simulator state.
    pub expectations: Vec<f64>,
    /// Absolute error against the exact target evolution.
    pub errors: Vec<f64>,
    /// Cumulative weight on the |1><1| ancilla branch.
    pub leak_prob: f64,
}

fn check_density(rho: &DenseOperator) -> Result<()> {
    if !rho.is_hermitian() {
        return Err(GadgetError::InvalidState {
            reason: "density operator not Hermitian".into(),
        });
    }
    if (rho.trace().re - 1.0).abs() > 1e-9 {
        return Err(GadgetError::InvalidState {
            reason: format!("trace {}", rho.trace().re),
        });
    }
    let eig = herm_eig(rho)?;
    if eig.values[0] < -1e-9 {
        return Err(GadgetError::InvalidState {
            reason: format!("negative eigenvalue {}", eig.values[0]),
        });
    }
    Ok(())
}

pub fn density_from_pure(psi: &CVector) -> DenseOperator {
    DenseOperator::projector_onto(psi)
}

/// Run the evolve-then-dephase trajectory `(M o E_dt)^k` for
/// `k = floor(t_max / delta_t)` steps, reporting per-observable expectations,
/// their error against the exact effective evolution, and the leak
/// probability after every step.
pub fn simulate_zeno(
    spec: &ZenoGadgetSpec,
    h_else: Option<&LocalHamiltonian>,
    rho0: &DenseOperator,
    task: &SimulationTask,
) -> Result<Vec<TrajectoryPoint>> {
    let sys_dim = spec.layout().total_dim();
    if rho0.dim() != sys_dim {
        return Err(GadgetError::DimensionMismatch {
            context: "simulate_zeno state",
            expected: sys_dim,
            got: rho0.dim(),
        });
    }
    check_density(rho0)?;
    let steps = (task.t_max / spec.delta_t).floor() as usize;
    if steps == 0 {
        return Err(GadgetError::InvalidParameter {
            reason: "t_max shorter than one step".into(),
        });
    }
    let mut joint = zeno_hamiltonian(spec)?;
    let mut target = effective_hamiltonian(spec)?;
    if let Some(he) = h_else {
        let he_op = he.assemble()?;
        joint =
            DenseOperator::hermitian(joint.mat() + he_op.kron(&DenseOperator::identity(2)).mat())?;
        target = DenseOperator::hermitian(target.mat() + he_op.mat())?;
    }
    let evolve = Channel::UnitaryConjugation(expm_ih(&joint, spec.delta_t)?);
    let measure = Channel::AncillaDephasing {
        sys_dim,
        anc_dim: 2,
    };
    let step = Channel::Composition(vec![evolve, measure]);
    let target_eig = herm_eig(&target)?;

    let ket0 = DenseOperator::diagonal(&[1.0, 0.0]);
    let mut state = rho0.kron(&ket0);
    let mut trajectory = Vec::with_capacity(steps);
    for k in 1..=steps {
        state = step.apply(&state);
        let t = k as f64 * spec.delta_t;
        let u_t = target_eig.map_spectrum(|lam| Complex64::new(0.0, -t * lam).exp());
        let exact = &u_t * rho0.mat() * u_t.adjoint();
        let mut expectations = Vec::with_capacity(task.observables.len());
        let mut errors = Vec::with_capacity(task.observables.len());
        for (_, o) in &task.observables {
            let sim = (o.kron(&DenseOperator::identity(2)).mat() * state.mat())
                .trace()
                .re;
            let reference = (o.mat() * &exact).trace().re;
            expectations.push(sim);
            errors.push((sim - reference).abs());
        }
        let leak = {
            let p1 = DenseOperator::identity(sys_dim).kron(&DenseOperator::diagonal(&[0.0, 1.0]));
            (p1.mat() * state.mat()).trace().re
        };
        trajectory.push(TrajectoryPoint {
            t,
            expectations,
            errors,
            leak_prob: leak,
        });
    }
    Ok(trajectory)
}

// ---------------------------------------------------------------------------
// Trotter error and conjugation drift
// ---------------------------------------------------------------------------

/// `|| e^{-it A} e^{-it B} - e^{-it (A+B)} ||` for Hermitian `A`, `B`.
pub fn trotter_error(a: &DenseOperator, b: &DenseOperator, t: f64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(GadgetError::DimensionMismatch {
            context: "trotter_error",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let ua = expm_ih(a, t)?;
    let ub = expm_ih(b, t)?;
    let sum = DenseOperator::hermitian(a.mat() + b.mat())?;
    let u_sum = expm_ih(&sum, t)?;
    Ok(op_norm_mat(&(ua.mat() * ub.mat() - u_sum.mat())))
}

#[derive(Debug, Clone, Copy)]
pub struct ConjugationDrift {
    pub drift: f64,
    /// `drift / (||A|| t)`; stays O(1) across system sizes for local
    /// observables under bounded-degree Hamiltonians.
    pub c_ratio: f64,
}

/// `|| e^{itH} A e^{-itH} - A ||` for an observable on the given support.
pub fn conjugation_drift(
    h: &LocalHamiltonian,
    a: &DenseOperator,
    support: &[usize],
    t: f64,
) -> Result<ConjugationDrift> {
    let embedded = embed_on_support(a, support, h.layout())?;
    let hm = h.assemble()?;
    let u = expm_ih(&hm, -t)?; // e^{+itH}
    let conj = u.mat() * embedded.mat() * u.adjoint().mat();
    let drift = op_norm_mat(&(conj - embedded.mat()));
    let scale = op_norm(a) * t.abs();
    let c_ratio = if scale > 0.0 { drift / scale } else { 0.0 };
    Ok(ConjugationDrift { drift, c_ratio })
}

// ---------------------------------------------------------------------------
// Noisy error budget
// ---------------------------------------------------------------------------

/// `eps' = eps + d_state + d_evo + d_obs` per the noisy-simulator bound.
pub fn noisy_error_budget(eps: f64, d_state: f64, d_evo: f64, d_obs: f64) -> Result<f64> {
    for (v, name) in [
        (eps, "eps"),
        (d_state, "d_state"),
        (d_evo, "d_evo"),
        (d_obs, "d_obs"),
    ] {
        if v < 0.0 {
            return Err(GadgetError::InvalidParameter {
                reason: format!("{name} must be non-negative, got {v}"),
            });
        }
    }
    Ok(eps + d_state + d_evo + d_obs)
}

/// Lower-bound `||Lambda1 - Lambda2||_{1->1}` by maximizing the trace-norm
/// difference over sampled pure states.
pub fn one_to_one_distance_estimate<F, G>(
    lambda1: F,
    lambda2: G,
    dim: usize,
    samples: usize,
    rng: &mut impl rand::Rng,
) -> f64
where
    F: Fn(&DenseOperator) -> DenseOperator,
    G: Fn(&DenseOperator) -> DenseOperator,
{
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let psi = crate::sampling::random_pure_state(dim, rng);
        let rho = DenseOperator::projector_onto(&psi);
        let diff = lambda1(&rho).sub(&lambda2(&rho));
        best = best.max(trace_norm(&diff));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::pauli_chain;
    use crate::operators::{ancilla_block, partial_trace, pauli_embed};
    use crate::rotations::exp_antihermitian;
    use crate::sampling;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn z_string(layout: &SiteLayout, sites: &[usize]) -> PauliString {
        let factors: Vec<(usize, Pauli)> = sites.iter().map(|&s| (s, Pauli::Z)).collect();
        PauliString::new(1.0, layout.n_sites(), &factors).unwrap()
    }

    fn canonical_z_spec(delta_t: f64) -> ZenoGadgetSpec {
        let layout = SiteLayout::qubits(3).unwrap();
        let a = z_string(&layout, &[0]);
        let b = z_string(&layout, &[1]);
        let c = z_string(&layout, &[2]);
        pauli_zeno_spec(&a, &b, &c, &layout, delta_t).unwrap()
    }

    fn plus_state(n: usize) -> CVector {
        let dim = 1 << n;
        let amp = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        CVector::from_element(dim, amp)
    }

    #[test]
    fn decoupled_spec_effective_is_h_i() {
        let layout = SiteLayout::qubits(2).unwrap();
        let mut h_i = LocalHamiltonian::new(layout.clone());
        h_i.add_pauli(&z_string(&layout, &[0]), "z0").unwrap();
        let h_x = LocalHamiltonian::new(layout.clone());
        let delta_t = 0.1;
        let omega = 2.0 * std::f64::consts::PI / delta_t;
        let mut h_p1 = LocalHamiltonian::new(layout.clone());
        let mut zs = z_string(&layout, &[0]);
        zs.coefficient = omega;
        h_p1.add_pauli(&zs, "wz0").unwrap();
        let spec = ZenoGadgetSpec::new(h_i.clone(), h_x, h_p1, delta_t).unwrap();
        let eff = effective_hamiltonian(&spec).unwrap();
        let direct = h_i.assemble().unwrap();
        assert!(op_norm_mat(&(eff.mat() - direct.mat())) < 1e-12);
        // and the gadget is H_I (x) I plus the (decoupled) P1 term
        let joint = zeno_hamiltonian(&spec).unwrap();
        let b01 = ancilla_block(joint.mat(), 0, 1);
        assert!(op_norm_mat(&b01) < 1e-14);
    }

    #[test]
    fn spec_rejects_bad_p1_square() {
        let layout = SiteLayout::qubits(2).unwrap();
        let mut h_i = LocalHamiltonian::new(layout.clone());
        h_i.add_pauli(&z_string(&layout, &[0]), "z0").unwrap();
        let mut h_p1 = LocalHamiltonian::new(layout.clone());
        // wrong scale: squares to (omega/2)^2, not omega^2
        let delta_t = 0.1;
        let omega = 2.0 * std::f64::consts::PI / delta_t;
        let mut zs = z_string(&layout, &[0]);
        zs.coefficient = omega / 2.0;
        h_p1.add_pauli(&zs, "wz0").unwrap();
        assert!(
            ZenoGadgetSpec::new(h_i, LocalHamiltonian::new(layout.clone()), h_p1, delta_t)
                .is_err()
        );
    }

    #[test]
    fn z_spec_effective_is_zzz() {
        let spec = canonical_z_spec(0.05);
        let eff = effective_hamiltonian(&spec).unwrap();
        let layout = SiteLayout::qubits(3).unwrap();
        let zzz = pauli_embed(&z_string(&layout, &[0, 1, 2]), &layout).unwrap();
        assert!(op_norm_mat(&(eff.mat() - zzz.mat())) <= 1e-10);
    }

    #[test]
    fn z_spec_gadget_is_two_local() {
        let spec = canonical_z_spec(0.05);
        let h = zeno_local_hamiltonian(&spec).unwrap();
        assert_eq!(h.stats().locality, 2);
    }

    #[test]
    fn gadget_blocks_round_trip() {
        let spec = canonical_z_spec(0.07);
        let joint = zeno_hamiltonian(&spec).unwrap();
        let hi = spec.h_i.assemble().unwrap();
        let hx = spec.h_x.assemble().unwrap();
        let hp1 = spec.h_p1.assemble().unwrap();
        let b00 = ancilla_block(joint.mat(), 0, 0);
        let b01 = ancilla_block(joint.mat(), 0, 1);
        let b11 = ancilla_block(joint.mat(), 1, 1);
        assert!(op_norm_mat(&(b00 - hi.mat())) <= 1e-12);
        assert!(op_norm_mat(&(b01 - hx.mat())) <= 1e-12);
        assert!(op_norm_mat(&(b11 - (hi.mat() + hp1.mat()))) <= 1e-12);
    }

    #[test]
    fn norm_ratios_recorded() {
        let spec = canonical_z_spec(0.02);
        let r = spec.norm_ratios().unwrap();
        assert!((r.h_i_norm - 1.0).abs() < 1e-12);
        // ||H_X|| = sqrt(omega/2) * 2 for two unit Z strings
        assert!((r.h_x_over_sqrt_omega - std::f64::consts::SQRT_2).abs() < 1e-9);
        assert!((r.h_p1_over_omega - 1.0).abs() < 1e-12);
    }

    #[test]
    fn x_strings_give_xxx() {
        let layout = SiteLayout::qubits(3).unwrap();
        let mk = |s: usize| PauliString::single(1.0, 3, s, Pauli::X).unwrap();
        let spec = pauli_zeno_spec(&mk(0), &mk(1), &mk(2), &layout, 0.04).unwrap();
        let eff = effective_hamiltonian(&spec).unwrap();
        let xxx = pauli_embed(
            &PauliString::new(1.0, 3, &[(0, Pauli::X), (1, Pauli::X), (2, Pauli::X)]).unwrap(),
            &layout,
        )
        .unwrap();
        assert!(op_norm_mat(&(eff.mat() - xxx.mat())) <= 1e-10);
    }

    #[test]
    fn six_local_target_from_three_zz_pairs() {
        // (Z0 Z1, Z2 Z3, Z4 Z5): a 6-local product out of 3-local gadget terms
        let layout = SiteLayout::qubits(6).unwrap();
        let a = z_string(&layout, &[0, 1]);
        let b = z_string(&layout, &[2, 3]);
        let c = z_string(&layout, &[4, 5]);
        let spec = pauli_zeno_spec(&a, &b, &c, &layout, 0.05).unwrap();
        let gadget = zeno_local_hamiltonian(&spec).unwrap();
        assert_eq!(gadget.stats().locality, 3);
        let eff = effective_hamiltonian(&spec).unwrap();
        let product = z_string(&layout, &[0, 1, 2, 3, 4, 5]);
        let direct = pauli_embed(&product, &layout).unwrap();
        assert!(op_norm_mat(&(eff.mat() - direct.mat())) <= 1e-9);
    }

    #[test]
    fn non_commuting_strings_rejected() {
        let layout = SiteLayout::qubits(3).unwrap();
        let a = z_string(&layout, &[0]);
        let b = PauliString::single(1.0, 3, 0, Pauli::X).unwrap();
        let c = z_string(&layout, &[2]);
        assert!(matches!(
            pauli_zeno_spec(&a, &b, &c, &layout, 0.05),
            Err(GadgetError::NonCommuting { .. })
        ));
    }

    #[test]
    fn non_unit_coefficient_rejected() {
        let layout = SiteLayout::qubits(3).unwrap();
        let mut a = z_string(&layout, &[0]);
        a.coefficient = 2.0;
        let b = z_string(&layout, &[1]);
        let c = z_string(&layout, &[2]);
        assert!(pauli_zeno_spec(&a, &b, &c, &layout, 0.05).is_err());
    }

    #[test]
    fn effective_matches_block_generator_oracle() {
        // finite-difference generator from the 00-block of exp(-i dt H'):
        // block00 = I - i dt H_eff + O(dt^2), so (block00 - I) * (i/dt)
        // approaches H_eff at rate O(dt)
        let mut errs = Vec::new();
        for &dt in &[0.02, 0.01, 0.005] {
            let spec = canonical_z_spec(dt);
            let eff = effective_hamiltonian(&spec).unwrap();
            let u = expm_ih(&zeno_hamiltonian(&spec).unwrap(), dt).unwrap();
            let b00 = ancilla_block(u.mat(), 0, 0);
            let g = (b00 - CMatrix::identity(8, 8)) * (Complex64::new(0.0, 1.0) / dt);
            errs.push(op_norm_mat(&(g - eff.mat())));
        }
        let r1 = errs[0] / errs[1];
        let r2 = errs[1] / errs[2];
        assert!(r1 > 1.4 && r1 < 2.8, "ratio {r1}, errs {errs:?}");
        assert!(r2 > 1.4 && r2 < 2.8, "ratio {r2}, errs {errs:?}");
    }

    #[test]
    fn effective_oracle_random_commuting_spec() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let layout = SiteLayout::qubits(4).unwrap();
        for _ in 0..3 {
            // random Z-type strings commute pairwise
            let pick = |rng: &mut ChaCha8Rng| {
                let mut sites: Vec<usize> = (0..4).filter(|_| rng.random::<f64>() < 0.6).collect();
                if sites.is_empty() {
                    sites.push(rng.random_range(0..4));
                }
                let factors: Vec<(usize, Pauli)> = sites.iter().map(|&s| (s, Pauli::Z)).collect();
                let mut p = PauliString::new(1.0, 4, &factors).unwrap();
                if rng.random::<bool>() {
                    p.coefficient = -1.0;
                }
                p
            };
            let (a, b, c) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
            let mut errs = Vec::new();
            for &dt in &[0.02, 0.01] {
                let spec = pauli_zeno_spec(&a, &b, &c, &layout, dt).unwrap();
                let eff = effective_hamiltonian(&spec).unwrap();
                let u = expm_ih(&zeno_hamiltonian(&spec).unwrap(), dt).unwrap();
                let b00 = ancilla_block(u.mat(), 0, 0);
                let g = (b00 - CMatrix::identity(16, 16)) * (Complex64::new(0.0, 1.0) / dt);
                errs.push(op_norm_mat(&(g - eff.mat())));
            }
            let ratio = errs[0] / errs[1];
            assert!(ratio > 1.3 && ratio < 2.9, "ratio {ratio}");
        }
    }

    #[test]
    fn step_amplitudes_vanish_with_dt() {
        let psi = plus_state(3);
        let big = step_amplitudes(&canonical_z_spec(0.02), &psi, None).unwrap();
        let small = step_amplitudes(&canonical_z_spec(0.002), &psi, None).unwrap();
        assert!(small.err0 < big.err0 / 10.0);
        assert!(small.amp1 < big.amp1 / 5.0);
        assert!(small.err0 < 1e-4 && small.amp1 < 1e-3);
    }

    #[test]
    fn step_amplitude_slopes_near_theory() {
        // quick two-point slope check; the full 5-octave fit lives in the
        // acceptance suite
        let psi = plus_state(3);
        let (dt1, dt2) = (0.02, 0.005);
        let s1 = step_amplitudes(&canonical_z_spec(dt1), &psi, None).unwrap();
        let s2 = step_amplitudes(&canonical_z_spec(dt2), &psi, None).unwrap();
        let err0_slope = (s1.err0 / s2.err0).ln() / (dt1 / dt2).ln();
        let amp1_slope = (s1.amp1 / s2.amp1).ln() / (dt1 / dt2).ln();
        assert!((err0_slope - 2.0).abs() < 0.3, "err0 slope {err0_slope}");
        assert!((amp1_slope - 1.5).abs() < 0.3, "amp1 slope {amp1_slope}");
    }

    #[test]
    fn simulate_decoupled_ancilla_exact() {
        // H_X = 0 decouples the ancilla: expectations match exactly, no leak
        let layout = SiteLayout::qubits(2).unwrap();
        let mut h_i = LocalHamiltonian::new(layout.clone());
        h_i.add_pauli(&z_string(&layout, &[0, 1]), "zz").unwrap();
        h_i.add_pauli(&PauliString::single(0.7, 2, 0, Pauli::X).unwrap(), "x0")
            .unwrap();
        let delta_t = 0.05;
        let omega = 2.0 * std::f64::consts::PI / delta_t;
        let mut h_p1 = LocalHamiltonian::new(layout.clone());
        let mut zs = z_string(&layout, &[0]);
        zs.coefficient = omega;
        h_p1.add_pauli(&zs, "wz0").unwrap();
        let spec =
            ZenoGadgetSpec::new(h_i, LocalHamiltonian::new(layout.clone()), h_p1, delta_t)
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let rho0 = sampling::random_density(4, &mut rng);
        let obs =
            pauli_embed(&PauliString::single(1.0, 2, 1, Pauli::X).unwrap(), &layout).unwrap();
        let task =
            SimulationTask::new(vec![rho0.clone()], vec![("x1".into(), obs)], 0.5, 0.1).unwrap();
        let traj = simulate_zeno(&spec, None, &rho0, &task).unwrap();
        for pt in &traj {
            assert!(pt.errors[0] <= 1e-10, "error {} at t={}", pt.errors[0], pt.t);
            assert!(pt.leak_prob <= 1e-12);
        }
    }

    #[test]
    fn simulate_error_scales_linearly_in_dt() {
        let layout = SiteLayout::qubits(3).unwrap();
        let obs =
            pauli_embed(&PauliString::single(1.0, 3, 0, Pauli::X).unwrap(), &layout).unwrap();
        let psi = plus_state(3);
        let rho0 = density_from_pure(&psi);
        let t_max = 1.0;
        let mut final_errors = Vec::new();
        for &dt in &[1.0 / 64.0, 1.0 / 128.0] {
            let spec = canonical_z_spec(dt);
            let task = SimulationTask::new(
                vec![rho0.clone()],
                vec![("x0".into(), obs.clone())],
                t_max,
                0.1,
            )
            .unwrap();
            let traj = simulate_zeno(&spec, None, &rho0, &task).unwrap();
            final_errors.push(traj.last().unwrap().errors[0]);
        }
        let ratio = final_errors[0] / final_errors[1];
        assert!(
            ratio > 1.6 && ratio < 2.6,
            "halving dt gave error ratio {ratio} ({final_errors:?})"
        );
    }

    #[test]
    fn rejects_invalid_density() {
        let spec = canonical_z_spec(0.05);
        let layout = SiteLayout::qubits(3).unwrap();
        let obs =
            pauli_embed(&PauliString::single(1.0, 3, 0, Pauli::X).unwrap(), &layout).unwrap();
        let task = SimulationTask::new(vec![], vec![("x0".into(), obs)], 1.0, 0.1).unwrap();
        let not_a_state = DenseOperator::diagonal(&[2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            simulate_zeno(&spec, None, &not_a_state, &task),
            Err(GadgetError::InvalidState { .. })
        ));
    }

    #[test]
    fn task_rejects_unnormalized_observable() {
        let o = DenseOperator::diagonal(&[2.0, 0.0]);
        assert!(SimulationTask::new(vec![], vec![("bad".into(), o)], 1.0, 0.1).is_err());
    }

    #[test]
    fn dephasing_channel_is_idempotent_tp_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let m = Channel::AncillaDephasing {
            sys_dim: 4,
            anc_dim: 2,
        };
        for _ in 0..20 {
            let rho = sampling::random_density(8, &mut rng);
            let once = m.apply(&rho);
            let twice = m.apply(&once);
            assert!(op_norm_mat(&(once.mat() - twice.mat())) <= 1e-10);
            assert!((once.trace().re - 1.0).abs() <= 1e-9);
            let eig = herm_eig(&once).unwrap();
            assert!(eig.values[0] >= -1e-9);
        }
    }

    #[test]
    fn unitary_channel_preserves_trace_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let u = sampling::random_unitary(6, &mut rng);
        let ch = Channel::UnitaryConjugation(u);
        let rho = sampling::random_density(6, &mut rng);
        let out = ch.apply(&rho);
        assert!((out.trace().re - 1.0).abs() <= 1e-9);
        assert!(herm_eig(&out).unwrap().values[0] >= -1e-9);
    }

    #[test]
    fn dephasing_matches_projector_sum_form() {
        // M(rho) = tr_A[rho (I (x) |0><0|)] (x) |0><0| + same for |1><1|
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let rho = sampling::random_density(8, &mut rng);
        let m = Channel::AncillaDephasing {
            sys_dim: 4,
            anc_dim: 2,
        };
        let out = m.apply(&rho);
        let layout = SiteLayout::new(vec![4, 2]).unwrap();
        let mut expect = CMatrix::zeros(8, 8);
        for a in 0..2 {
            let mut proj = CMatrix::zeros(2, 2);
            proj[(a, a)] = Complex64::new(1.0, 0.0);
            let proj_op = DenseOperator::from_matrix(proj.clone());
            let masked = DenseOperator::from_matrix(
                rho.mat() * DenseOperator::identity(4).kron(&proj_op).mat(),
            );
            let reduced = partial_trace(&masked, &layout, &[0]).unwrap();
            expect += reduced.kron(&proj_op).mat();
        }
        assert!(op_norm_mat(&(out.mat() - expect)) <= 1e-12);
    }

    #[test]
    fn trotter_error_commuting_is_zero() {
        let a = DenseOperator::diagonal(&[1.0, -1.0, 0.5, 2.0]);
        let b = DenseOperator::diagonal(&[0.3, 0.9, -0.2, 0.0]);
        assert!(trotter_error(&a, &b, 0.7).unwrap() <= 1e-12);
    }

    #[test]
    fn trotter_error_matches_integral_oracle() {
        // variation-of-parameters form, integrated with Simpson's rule
        let x = DenseOperator::from_matrix(Pauli::X.matrix());
        let z = DenseOperator::from_matrix(Pauli::Z.matrix());
        let t = 0.1;
        let direct = trotter_error(&x, &z, t).unwrap();

        let to_anti =
            |h: &DenseOperator| DenseOperator::from_matrix(h.mat() * Complex64::new(0.0, -1.0));
        let (a, b) = (to_anti(&x), to_anti(&z));
        let ab = DenseOperator::from_matrix(a.mat() + b.mat());
        let scaled = |m: &DenseOperator, s: f64| {
            DenseOperator::from_matrix(m.mat() * Complex64::new(s, 0.0))
        };
        let integrand = |tau: f64| -> CMatrix {
            let e1 = exp_antihermitian(&scaled(&ab, t - tau)).unwrap();
            let ea = exp_antihermitian(&scaled(&a, tau)).unwrap();
            let ea_inv = exp_antihermitian(&scaled(&a, -tau)).unwrap();
            let eb = exp_antihermitian(&scaled(&b, tau)).unwrap();
            let bracket = b.mat() - ea_inv.mat() * b.mat() * ea.mat();
            e1.mat() * ea.mat() * bracket * eb.mat()
        };
        let n = 200;
        let h = t / n as f64;
        let mut acc = CMatrix::zeros(2, 2);
        for k in 0..=n {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += integrand(k as f64 * h) * Complex64::new(w, 0.0);
        }
        acc *= Complex64::new(h / 3.0, 0.0);
        let oracle = op_norm_mat(&acc);
        assert!(
            (direct - oracle).abs() <= 1e-6,
            "direct {direct} vs oracle {oracle}"
        );
    }

    #[test]
    fn trotter_error_slope_two_in_t() {
        let chain = pauli_chain(4, 1.0, 0.5, false).unwrap();
        let h_else = chain.assemble().unwrap();
        let layout = chain.layout().clone();
        let local = pauli_embed(&z_string(&layout, &[1, 2]), &layout).unwrap();
        let mut errs = Vec::new();
        let ts = [0.2, 0.1, 0.05];
        for &t in &ts {
            errs.push(trotter_error(&h_else, &local, t).unwrap());
        }
        let s1 = (errs[0] / errs[1]).ln() / 2f64.ln();
        let s2 = (errs[1] / errs[2]).ln() / 2f64.ln();
        assert!((s1 - 2.0).abs() < 0.3, "slope {s1}");
        assert!((s2 - 2.0).abs() < 0.3, "slope {s2}");
    }

    #[test]
    fn drift_zero_for_commuting_observable() {
        let chain = pauli_chain(4, 1.0, 0.0, false).unwrap();
        let z = DenseOperator::from_matrix(Pauli::Z.matrix());
        let d = conjugation_drift(&chain, &z, &[1], 0.7).unwrap();
        assert!(d.drift <= 1e-12);
    }

    #[test]
    fn drift_bounded_by_two_norms() {
        let chain = pauli_chain(5, 1.0, 0.8, false).unwrap();
        let x = DenseOperator::from_matrix(Pauli::X.matrix());
        for t in [0.1, 1.0, 10.0] {
            let d = conjugation_drift(&chain, &x, &[2], t).unwrap();
            assert!(d.drift <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn drift_ratio_stable_across_sizes() {
        let x = DenseOperator::from_matrix(Pauli::X.matrix());
        let t = 0.1;
        let mut ratios = Vec::new();
        for n in [4usize, 6, 8] {
            let chain = pauli_chain(n, 1.0, 0.6, false).unwrap();
            let d = conjugation_drift(&chain, &x, &[n / 2], t).unwrap();
            ratios.push(d.c_ratio);
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 2.0, "ratios {ratios:?}");
    }

    #[test]
    fn budget_sums_and_validates() {
        assert_eq!(noisy_error_budget(0.1, 0.0, 0.0, 0.0).unwrap(), 0.1);
        let a = noisy_error_budget(0.1, 0.01, 0.02, 0.03).unwrap();
        let b = noisy_error_budget(0.1, 0.01, 0.03, 0.03).unwrap();
        assert!(b > a);
        assert!(noisy_error_budget(-0.1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn depolarizing_distance_estimate_brackets_strength() {
        // Lambda = unitary conjugation; Lambda~ mixes in the maximally mixed
        // state with weight p. For pure single-qubit inputs the trace
        // distance is exactly p.
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let u = expm_ih(&DenseOperator::from_matrix(Pauli::X.matrix()), 0.3).unwrap();
        let p = 0.05;
        let clean = |rho: &DenseOperator| {
            DenseOperator::from_matrix(u.mat() * rho.mat() * u.adjoint().mat())
        };
        let noisy = |rho: &DenseOperator| {
            let out = u.mat() * rho.mat() * u.adjoint().mat();
            let mixed = CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0);
            DenseOperator::from_matrix(
                out * Complex64::new(1.0 - p, 0.0) + mixed * Complex64::new(p, 0.0),
            )
        };
        let est = one_to_one_distance_estimate(clean, noisy, 2, 50, &mut rng);
        assert!(est >= p / 2.0 && est <= 2.0 * p, "estimate {est}");
    }
}
