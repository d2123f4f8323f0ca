//! Gadget constructions and their verification.
//!
//! Constructors build first/second/third-order perturbative gadgets, the
//! subdivision and 3-to-2 gadgets, and the "exact" swap-based 3-to-2 gadget.
//! Verifiers measure the (eta, eps) parameters of a gadget instance, either
//! against an explicit joint projector or against the low-energy subspace of
//! the gadget Hamiltonian, and parallel combination sums gadgets over a
//! shared target with tensored ancillas.

pub mod boolfun;

pub use boolfun::{
    bool_klocal_check, bool_proof_function, bool_reduce_r, bool_separation_bound, BoolFun,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GadgetError, Result};
use crate::hamiltonians::{HamiltonianJson, LocalHamiltonian, LocalTerm};
use crate::operators::{
    embed_on_support, herm_eig, low_energy_projector, op_norm, op_norm_mat, projector_rank,
    sorted_eigenvalue_distance, CMatrix, DenseOperator, SiteLayout,
};
use crate::rotations::{direct_rotation, exp_antihermitian};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Certificate that a gadget instance meets the (eta, eps) definition (with
/// `delta` set when the subspace is the low-energy subspace at that cut).
#[derive(Debug, Clone)]
pub struct GadgetWitness {
    /// Projector on the ancilla space.
    pub p_anc: DenseOperator,
    /// Unitary on the joint space with `P' = U (I (x) P) U^dag`.
    pub u: DenseOperator,
    /// Anti-Hermitian generator when `U` is a direct rotation (needed for
    /// parallel combination); absent when the caller supplied `U` directly.
    pub generator: Option<DenseOperator>,
    pub eta: f64,
    pub eps: f64,
    pub delta: Option<f64>,
}

/// A target Hamiltonian, its gadget on the ancilla-extended layout, and an
/// optional verification witness.
#[derive(Debug, Clone)]
pub struct GadgetInstance {
    pub target: LocalHamiltonian,
    pub gadget: LocalHamiltonian,
    pub ancilla_sites: Vec<usize>,
    /// Energy scale used by the construction, if any.
    pub delta: Option<f64>,
    pub witness: Option<GadgetWitness>,
}

impl GadgetInstance {
    pub fn n_target_sites(&self) -> usize {
        self.target.layout().n_sites()
    }

    pub fn target_dim(&self) -> usize {
        self.target.layout().total_dim()
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_sites
            .iter()
            .map(|&s| self.gadget.layout().dims()[s])
            .product()
    }

    /// Default ancilla projector: |0><0| on every ancilla site.
    pub fn default_ancilla_projector(&self) -> DenseOperator {
        let mut p = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        for &s in &self.ancilla_sites {
            let d = self.gadget.layout().dims()[s];
            let mut local = CMatrix::zeros(d, d);
            local[(0, 0)] = Complex64::new(1.0, 0.0);
            p = p.kronecker(&local);
        }
        DenseOperator::from_matrix(p)
    }
}

fn ancilla_qubit_layout(target: &SiteLayout) -> Result<(SiteLayout, usize)> {
    let ext = target.extended(&[2])?;
    let anc = ext.n_sites() - 1;
    Ok((ext, anc))
}

fn proj1() -> DenseOperator {
    DenseOperator::diagonal(&[0.0, 1.0])
}

fn pauli_x() -> DenseOperator {
    DenseOperator::from_matrix(crate::operators::Pauli::X.matrix())
}

use crate::operators::ancilla_block;

fn block_norm(v: &DenseOperator, a: usize, b: usize) -> f64 {
    op_norm_mat(&ancilla_block(v.mat(), a, b))
}

// ---------------------------------------------------------------------------
// Generic perturbative constructors
// ---------------------------------------------------------------------------

fn coarse_instance(
    target_layout: &SiteLayout,
    h: &DenseOperator,
    pieces: Vec<(DenseOperator, &'static str)>,
    delta: f64,
) -> Result<GadgetInstance> {
    let (ext, anc) = ancilla_qubit_layout(target_layout)?;
    let n = target_layout.n_sites();
    let all_target: Vec<usize> = (0..n).collect();
    let all_joint: Vec<usize> = (0..=n).collect();

    let target = LocalHamiltonian::from_terms(
        target_layout.clone(),
        vec![LocalTerm::new(h.clone(), all_target, "target")?],
    )?;

    let mut gadget = LocalHamiltonian::new(ext);
    gadget.push_term(LocalTerm::new(proj1().scale(delta), vec![anc], "delta*h0")?)?;
    for (op, label) in pieces {
        gadget.push_term(LocalTerm::new(op, all_joint.clone(), label)?)?;
    }
    Ok(GadgetInstance {
        target,
        gadget,
        ancilla_sites: vec![anc],
        delta: Some(delta),
        witness: None,
    })
}

fn require_zero_block(v: &DenseOperator, a: usize, b: usize, name: &'static str) -> Result<()> {
    let r = block_norm(v, a, b);
    let scale = 1.0 + op_norm(v);
    if r > 1e-10 * scale {
        return Err(GadgetError::BlockCondition { name, residual: r });
    }
    Ok(())
}

/// First-order gadget `H' = Delta * I (x) |1><1| + V`.
///
/// Returns the instance together with `||H - V_00||`, which the caller
/// compares against their eps/2 budget.
pub fn first_order_gadget(
    target_layout: &SiteLayout,
    h: &DenseOperator,
    v: &DenseOperator,
    delta: f64,
) -> Result<(GadgetInstance, f64)> {
    let inst = coarse_instance(target_layout, h, vec![(v.clone(), "v")], delta)?;
    let v00 = ancilla_block(v.mat(), 0, 0);
    let residual = op_norm_mat(&(h.mat() - v00));
    Ok((inst, residual))
}

/// Second-order gadget `H' = Delta H_0 + sqrt(Delta) V1 + V0`, requiring
/// `V0_10 = V0_01 = V1_00 = 0`. Returns `||H - V0_00 + V1_01 V1_10||`.
pub fn second_order_gadget(
    target_layout: &SiteLayout,
    h: &DenseOperator,
    v0: &DenseOperator,
    v1: &DenseOperator,
    delta: f64,
) -> Result<(GadgetInstance, f64)> {
    require_zero_block(v0, 1, 0, "V0_10")?;
    require_zero_block(v0, 0, 1, "V0_01")?;
    require_zero_block(v1, 0, 0, "V1_00")?;
    let inst = coarse_instance(
        target_layout,
        h,
        vec![(v1.scale(delta.sqrt()), "sqrt(delta)*v1"), (v0.clone(), "v0")],
        delta,
    )?;
    let v000 = ancilla_block(v0.mat(), 0, 0);
    let v101 = ancilla_block(v1.mat(), 0, 1);
    let v110 = ancilla_block(v1.mat(), 1, 0);
    let residual = op_norm_mat(&(h.mat() - v000 + v101 * v110));
    Ok((inst, residual))
}

/// Third-order gadget `H' = Delta H_0 + Delta^(2/3) V2 + Delta^(1/3) V1 + V0`
/// with the block and consistency conditions checked individually.
/// Returns `||H - V0_00 - V2_01 V2_11 V2_10||`.
pub fn third_order_gadget(
    target_layout: &SiteLayout,
    h: &DenseOperator,
    v0: &DenseOperator,
    v1: &DenseOperator,
    v2: &DenseOperator,
    delta: f64,
) -> Result<(GadgetInstance, f64)> {
    require_zero_block(v1, 1, 0, "V1_10")?;
    require_zero_block(v1, 0, 1, "V1_01")?;
    require_zero_block(v0, 1, 0, "V0_10")?;
    require_zero_block(v0, 0, 1, "V0_01")?;
    require_zero_block(v2, 0, 0, "V2_00")?;
    let v101_consistency = {
        let v100 = ancilla_block(v1.mat(), 0, 0);
        let v201 = ancilla_block(v2.mat(), 0, 1);
        let v210 = ancilla_block(v2.mat(), 1, 0);
        op_norm_mat(&(v100 - v201 * v210))
    };
    if v101_consistency > 1e-10 * (1.0 + op_norm(v1)) {
        return Err(GadgetError::BlockCondition {
            name: "V1_00 = V2_01 V2_10",
            residual: v101_consistency,
        });
    }
    let inst = coarse_instance(
        target_layout,
        h,
        vec![
            (v2.scale(delta.powf(2.0 / 3.0)), "delta^(2/3)*v2"),
            (v1.scale(delta.powf(1.0 / 3.0)), "delta^(1/3)*v1"),
            (v0.clone(), "v0"),
        ],
        delta,
    )?;
    let v000 = ancilla_block(v0.mat(), 0, 0);
    let v201 = ancilla_block(v2.mat(), 0, 1);
    let v211 = ancilla_block(v2.mat(), 1, 1);
    let v210 = ancilla_block(v2.mat(), 1, 0);
    let residual = op_norm_mat(&(h.mat() - v000 - v201 * v211 * v210));
    Ok((inst, residual))
}

// ---------------------------------------------------------------------------
// Subdivision and 3-to-2 gadgets (term-by-term, 2-local)
// ---------------------------------------------------------------------------

fn require_qubit_site(layout: &SiteLayout, site: usize) -> Result<()> {
    let d = layout.dim_of(site)?;
    if d != 2 {
        return Err(GadgetError::NonQubitSite { site, dim: d });
    }
    Ok(())
}

/// Subdivision gadget for `H = A (x) B` acting on `site_a`, `site_b` of the
/// given target layout; the ancilla qubit is appended to the layout. Every
/// term of the gadget is at most 2-local, and the A-B edge is subdivided
/// through the ancilla.
pub fn subdivision_gadget(
    target_layout: &SiteLayout,
    site_a: usize,
    site_b: usize,
    a: &DenseOperator,
    b: &DenseOperator,
    delta: f64,
) -> Result<GadgetInstance> {
    if site_a == site_b {
        return Err(GadgetError::InvalidParameter {
            reason: "subdivision needs two distinct sites".into(),
        });
    }
    require_qubit_site(target_layout, site_a)?;
    require_qubit_site(target_layout, site_b)?;
    for (op, name) in [(a, "A"), (b, "B")] {
        if op.dim() != 2 || !op.is_hermitian() {
            return Err(GadgetError::InvalidParameter {
                reason: format!("{name} must be a single-qubit Hermitian operator"),
            });
        }
    }
    let (ext, anc) = ancilla_qubit_layout(target_layout)?;

    // target term A (x) B with the support sorted ascending
    let (s0, s1) = (site_a.min(site_b), site_a.max(site_b));
    let (op0, op1) = if site_a < site_b { (a, b) } else { (b, a) };
    let target = LocalHamiltonian::from_terms(
        target_layout.clone(),
        vec![LocalTerm::new(op0.kron(op1), vec![s0, s1], "A*B")?],
    )?;

    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut gadget = LocalHamiltonian::new(ext);
    gadget.push_term(LocalTerm::new(proj1().scale(delta), vec![anc], "delta*h0")?)?;
    gadget.push_term(LocalTerm::new(
        a.scale(-delta.sqrt() * inv_sqrt2).kron(&pauli_x()),
        vec![site_a, anc],
        "-A*X",
    )?)?;
    gadget.push_term(LocalTerm::new(
        b.scale(delta.sqrt() * inv_sqrt2).kron(&pauli_x()),
        vec![site_b, anc],
        "B*X",
    )?)?;
    gadget.push_term(LocalTerm::new(a.matmul(a).scale(0.5), vec![site_a], "A^2/2")?)?;
    gadget.push_term(LocalTerm::new(b.matmul(b).scale(0.5), vec![site_b], "B^2/2")?)?;
    Ok(GadgetInstance {
        target,
        gadget,
        ancilla_sites: vec![anc],
        delta: Some(delta),
        witness: None,
    })
}

/// 3-to-2 gadget for `H = A (x) B (x) C` on three qubit sites; all gadget
/// terms are 2-local.
pub fn three_to_two_gadget(
    target_layout: &SiteLayout,
    sites: [usize; 3],
    a: &DenseOperator,
    b: &DenseOperator,
    c: &DenseOperator,
    delta: f64,
) -> Result<GadgetInstance> {
    let [sa, sb, sc] = sites;
    if sa == sb || sb == sc || sa == sc {
        return Err(GadgetError::InvalidParameter {
            reason: "3-to-2 gadget needs three distinct sites".into(),
        });
    }
    for &s in &sites {
        require_qubit_site(target_layout, s)?;
    }
    for (op, name) in [(a, "A"), (b, "B"), (c, "C")] {
        if op.dim() != 2 || !op.is_hermitian() {
            return Err(GadgetError::InvalidParameter {
                reason: format!("{name} must be a single-qubit Hermitian operator"),
            });
        }
    }
    let (ext, anc) = ancilla_qubit_layout(target_layout)?;

    // target term with support sorted ascending
    let mut order: Vec<(usize, &DenseOperator)> = vec![(sa, a), (sb, b), (sc, c)];
    order.sort_by_key(|&(s, _)| s);
    let target_op = order[0].1.kron(order[1].1).kron(order[2].1);
    let target = LocalHamiltonian::from_terms(
        target_layout.clone(),
        vec![LocalTerm::new(
            target_op,
            order.iter().map(|&(s, _)| s).collect(),
            "A*B*C",
        )?],
    )?;

    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let d23 = delta.powf(2.0 / 3.0);
    let d13 = delta.powf(1.0 / 3.0);
    let mut gadget = LocalHamiltonian::new(ext);
    gadget.push_term(LocalTerm::new(proj1().scale(delta), vec![anc], "delta*h0")?)?;
    // Delta^(2/3) V2
    gadget.push_term(LocalTerm::new(
        a.scale(-d23 * inv_sqrt2).kron(&pauli_x()),
        vec![sa, anc],
        "-A*X",
    )?)?;
    gadget.push_term(LocalTerm::new(
        b.scale(d23 * inv_sqrt2).kron(&pauli_x()),
        vec![sb, anc],
        "B*X",
    )?)?;
    gadget.push_term(LocalTerm::new(
        c.scale(-d23).kron(&proj1()),
        vec![sc, anc],
        "-C*P1",
    )?)?;
    // Delta^(1/3) V1 = Delta^(1/3)/2 (A^2 (x) I - 2 A (x) B + I (x) B^2)
    let (sx, sy) = (sa.min(sb), sa.max(sb));
    let (ox, oy) = if sa < sb { (a, b) } else { (b, a) };
    let id2 = DenseOperator::identity(2);
    let v1_op = ox
        .matmul(ox)
        .kron(&id2)
        .add(&id2.kron(&oy.matmul(oy)))
        .sub(&ox.kron(oy).scale(2.0))
        .scale(0.5 * d13);
    gadget.push_term(LocalTerm::new(v1_op, vec![sx, sy], "(B-A)^2/2")?)?;
    // V0 = 1/2 (A^2 (x) C + B^2 (x) C)
    for (s, op) in [(sa, a), (sb, b)] {
        let (u, vsite) = (s.min(sc), s.max(sc));
        let sq = op.matmul(op).scale(0.5);
        let term_op = if s < sc { sq.kron(c) } else { c.kron(&sq) };
        gadget.push_term(LocalTerm::new(term_op, vec![u, vsite], "sq*C/2")?)?;
    }
    Ok(GadgetInstance {
        target,
        gadget,
        ancilla_sites: vec![anc],
        delta: Some(delta),
        witness: None,
    })
}

// ---------------------------------------------------------------------------
// Exact 3-to-2 gadget
// ---------------------------------------------------------------------------

/// The swap-based 3-to-2 gadget that reproduces the spectrum of
/// `A (x) B (x) C` exactly (eps = 0) at the price of eta = 2.
///
/// Gadget sites: 0 and 3 share the split A qubit (3 is the fresh ancilla,
/// expressed in the eigenbasis of A), 1 carries B, 2 carries C.
#[derive(Debug, Clone)]
pub struct ExactThreeToTwo {
    pub instance: GadgetInstance,
    /// Explicit joint projector whose range carries the exact spectrum.
    pub p_prime: DenseOperator,
    /// Ancilla projector used in the gadget definition.
    pub p_anc: DenseOperator,
    /// The swap-based unitary with `P' = U (I (x) P) U^dag` and `||U-I|| = 2`.
    pub u: DenseOperator,
    a_eigvecs: CMatrix,
    b_proj: [DenseOperator; 2],
}

pub fn exact_three_to_two(
    a: &DenseOperator,
    b: &DenseOperator,
    c: &DenseOperator,
) -> Result<ExactThreeToTwo> {
    for (op, name) in [(a, "A"), (b, "B"), (c, "C")] {
        if op.dim() != 2 || !op.is_hermitian() {
            return Err(GadgetError::InvalidParameter {
                reason: format!("{name} must be a single-qubit Hermitian operator"),
            });
        }
    }
    let target_layout = SiteLayout::qubits(3)?;
    let (ext, anc) = ancilla_qubit_layout(&target_layout)?;

    let ea = herm_eig(a)?;
    let eb = herm_eig(b)?;
    let (la0, la1) = (ea.values[0], ea.values[1]);
    let (lb0, lb1) = (eb.values[0], eb.values[1]);
    let b_proj0 = {
        let v = eb.vectors.column(0);
        DenseOperator::from_matrix(v * v.adjoint())
    };
    let b_proj1 = {
        let v = eb.vectors.column(1);
        DenseOperator::from_matrix(v * v.adjoint())
    };
    // (A - lambda_0 I) expressed on the fresh ancilla qubit (A's eigenbasis).
    let shifted_on_anc = DenseOperator::diagonal(&[0.0, la1 - la0]);
    let shifted_a = a.sub(&DenseOperator::identity(2).scale(la0));

    let target = LocalHamiltonian::from_terms(
        target_layout.clone(),
        vec![LocalTerm::new(a.kron(b).kron(c), vec![0, 1, 2], "A*B*C")?],
    )?;

    let mut gadget = LocalHamiltonian::new(ext.clone());
    gadget.push_term(LocalTerm::new(
        c.kron(&shifted_on_anc).scale(lb0),
        vec![2, anc],
        "lb0*C*(A-la0)",
    )?)?;
    gadget.push_term(LocalTerm::new(
        shifted_a.kron(c).scale(lb1),
        vec![0, 2],
        "lb1*(A-la0)*C",
    )?)?;
    gadget.push_term(LocalTerm::new(b.kron(c).scale(la0), vec![1, 2], "la0*B*C")?)?;

    // P' = Q0^A (x) Q0^B (x) I (x) I + I (x) Q1^B (x) I (x) |0><0|
    let a_proj0 = {
        let v = ea.vectors.column(0);
        DenseOperator::from_matrix(v * v.adjoint())
    };
    let id2 = DenseOperator::identity(2);
    let ket0 = DenseOperator::diagonal(&[1.0, 0.0]);
    let p_prime = a_proj0
        .kron(&b_proj0)
        .kron(&id2)
        .kron(&id2)
        .add(&id2.kron(&b_proj1).kron(&id2).kron(&ket0));

    // The natural witness unitary: swap the A content of site 0 and the
    // ancilla (in A's eigenbasis) when B is in its lambda_0 eigenstate, do
    // nothing otherwise.
    let mut swap_eig = CMatrix::zeros(16, 16);
    {
        let dim = 16;
        let mut f = CMatrix::zeros(dim, dim);
        for i in 0..2 {
            for j in 0..2 {
                let vi = ea.vectors.column(i);
                let vj = ea.vectors.column(j);
                let outer_site0 = vi * vj.adjoint();
                let mut outer_anc = CMatrix::zeros(2, 2);
                outer_anc[(j, i)] = Complex64::new(1.0, 0.0);
                let piece = DenseOperator::from_matrix(outer_site0)
                    .kron(&b_proj0)
                    .kron(&id2)
                    .kron(&DenseOperator::from_matrix(outer_anc));
                f += piece.mat();
            }
        }
        let rest = id2.kron(&b_proj1).kron(&id2).kron(&id2);
        swap_eig.copy_from(&(f + rest.mat()));
    }
    let u = DenseOperator::from_matrix(swap_eig);
    let p_anc = ket0.clone();

    Ok(ExactThreeToTwo {
        instance: GadgetInstance {
            target,
            gadget,
            ancilla_sites: vec![anc],
            delta: None,
            witness: None,
        },
        p_prime,
        p_anc,
        u,
        a_eigvecs: ea.vectors,
        b_proj: [b_proj0, b_proj1],
    })
}

impl ExactThreeToTwo {
    /// Eigenvalues of the gadget restricted to the range of `P'`.
    pub fn restricted_spectrum(&self) -> Result<Vec<f64>> {
        let h = self.instance.gadget.assemble()?;
        restricted_eigs(&h, &self.p_prime)
    }

    /// Sorted-spectrum distance between the restriction and the target.
    pub fn restricted_spectrum_distance(&self) -> Result<f64> {
        let target_eigs = herm_eig(&self.instance.target.assemble()?)?.values;
        sorted_eigenvalue_distance(self.restricted_spectrum()?, target_eigs)
    }

    /// Split a coupling `M` on the logical A qubit into gadget terms: `M`
    /// lands on the ancilla copy when B sits in its lambda_0 eigenspace and
    /// on site 0 otherwise. Each emitted term picks up the B site, so any
    /// interaction touching A grows by one site under this gadget.
    pub fn split_a_coupling(&self, m: &DenseOperator) -> Result<Vec<LocalTerm>> {
        if m.dim() != 2 {
            return Err(GadgetError::DimensionMismatch {
                context: "split_a_coupling",
                expected: 2,
                got: m.dim(),
            });
        }
        let m_eig = DenseOperator::from_matrix(
            self.a_eigvecs.adjoint() * m.mat() * &self.a_eigvecs,
        );
        Ok(vec![
            LocalTerm::new(self.b_proj[0].kron(&m_eig), vec![1, 3], "Q0B*M_anc")?,
            LocalTerm::new(m.kron(&self.b_proj[1]), vec![0, 1], "M*Q1B")?,
        ])
    }
}

/// Eigenvalues of `H` restricted to the range of projector `P`.
pub fn restricted_eigs(h: &DenseOperator, p: &DenseOperator) -> Result<Vec<f64>> {
    let rank = projector_rank(p);
    let eig = herm_eig(p)?;
    let dim = p.dim();
    let mut basis = CMatrix::zeros(dim, rank);
    for k in 0..rank {
        basis.set_column(k, &eig.vectors.column(dim - rank + k));
    }
    let small = DenseOperator::from_matrix(basis.adjoint() * h.mat() * &basis);
    Ok(herm_eig(&small)?.values)
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

fn identity_tensor_p(instance: &GadgetInstance, p_anc: &DenseOperator) -> Result<DenseOperator> {
    let anc_dim = instance.ancilla_dim();
    if p_anc.dim() != anc_dim {
        return Err(GadgetError::DimensionMismatch {
            context: "ancilla projector",
            expected: anc_dim,
            got: p_anc.dim(),
        });
    }
    Ok(DenseOperator::identity(instance.target_dim()).kron(p_anc))
}

fn measure_witness(
    instance: &GadgetInstance,
    p_anc: &DenseOperator,
    p_prime: &DenseOperator,
    u: &DenseOperator,
    generator: Option<DenseOperator>,
    delta: Option<f64>,
) -> Result<GadgetWitness> {
    let h_prime = instance.gadget.assemble()?;
    let h_target = instance.target.assemble()?;
    let dim = h_prime.dim();
    let eta = op_norm_mat(&(u.mat() - CMatrix::identity(dim, dim)));
    let h_tensor_p = h_target.kron(p_anc);
    let lhs = p_prime.mat() * h_prime.mat() * p_prime.mat();
    let rhs = u.mat() * h_tensor_p.mat() * u.adjoint().mat();
    let eps = op_norm_mat(&(lhs - rhs));
    Ok(GadgetWitness {
        p_anc: p_anc.clone(),
        u: u.clone(),
        generator,
        eta,
        eps,
        delta,
    })
}

/// Measure (eta, eps) for an explicit joint projector `P'`, with `U` the
/// direct rotation from `I (x) P` to `P'`.
pub fn verify_eta_eps(
    instance: &GadgetInstance,
    p_anc: Option<&DenseOperator>,
    p_prime: &DenseOperator,
) -> Result<GadgetWitness> {
    let default = instance.default_ancilla_projector();
    let p_anc = p_anc.unwrap_or(&default);
    let ip = identity_tensor_p(instance, p_anc)?;
    let (r_ip, r_pp) = (projector_rank(&ip), projector_rank(p_prime));
    if r_ip != r_pp {
        return Err(GadgetError::RankMismatch {
            context: "verify_eta_eps",
            left: r_ip,
            right: r_pp,
        });
    }
    let rot = direct_rotation(&ip, p_prime)?;
    measure_witness(
        instance,
        p_anc,
        p_prime,
        &rot.w,
        Some(rot.generator),
        None,
    )
}

/// Measure (eta, eps) for a caller-supplied unitary `U`; the joint projector
/// is `P' = U (I (x) P) U^dag`. This covers gadgets (like the exact 3-to-2)
/// whose natural `U` is far from the identity, where no direct rotation from
/// `I (x) P` exists.
pub fn verify_with_unitary(
    instance: &GadgetInstance,
    p_anc: Option<&DenseOperator>,
    u: &DenseOperator,
) -> Result<GadgetWitness> {
    let default = instance.default_ancilla_projector();
    let p_anc = p_anc.unwrap_or(&default);
    let ip = identity_tensor_p(instance, p_anc)?;
    let dim = ip.dim();
    if u.dim() != dim {
        return Err(GadgetError::DimensionMismatch {
            context: "verify_with_unitary",
            expected: dim,
            got: u.dim(),
        });
    }
    let unit_dev = op_norm_mat(&(u.mat().adjoint() * u.mat() - CMatrix::identity(dim, dim)));
    if unit_dev > 1e-8 {
        return Err(GadgetError::InvalidParameter {
            reason: format!("U is not unitary (deviation {unit_dev:.3e})"),
        });
    }
    let p_prime = DenseOperator::from_matrix(u.mat() * ip.mat() * u.adjoint().mat());
    measure_witness(instance, p_anc, &p_prime, u, None, None)
}

/// Measure (Delta, eta, eps) against the low-energy subspace of the gadget
/// at cut `delta_check`. A rank mismatch means the construction fails the
/// low-energy gadget definition at this cut.
pub fn verify_low_energy(
    instance: &GadgetInstance,
    delta_check: f64,
    p_anc: Option<&DenseOperator>,
) -> Result<GadgetWitness> {
    let default = instance.default_ancilla_projector();
    let p_anc = p_anc.unwrap_or(&default);
    let ip = identity_tensor_p(instance, p_anc)?;
    let h_prime = instance.gadget.assemble()?;
    let (p_le, rank) = low_energy_projector(&h_prime, delta_check)?;
    let expected = projector_rank(&ip);
    if rank != expected {
        return Err(GadgetError::RankMismatch {
            context: "verify_low_energy",
            left: expected,
            right: rank,
        });
    }
    let rot = direct_rotation(&ip, &p_le)?;
    measure_witness(
        instance,
        p_anc,
        &p_le,
        &rot.w,
        Some(rot.generator),
        Some(delta_check),
    )
}

// ---------------------------------------------------------------------------
// Gadget-property sampling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GadgetPropertySample {
    pub h_else_norm: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GadgetPropertyFit {
    pub samples: Vec<GadgetPropertySample>,
    /// Least-squares slope of residual against ||H_else||.
    pub zeta_hat: f64,
    /// Least-squares intercept.
    pub eps_hat: f64,
}

/// Sample the gadget property: for each bystander `H_else` on the target
/// space, compare the spectrum of `P'(H' + H_else (x) I)P'` on the range of
/// `P'` against the spectrum of `(H + H_else) (x) P`. The existential
/// unitary in the definition is eliminated by sorted-spectrum alignment, so
/// each residual is a lower bound on the defining norm.
pub fn sample_gadget_property(
    instance: &GadgetInstance,
    witness: &GadgetWitness,
    h_else_list: &[DenseOperator],
) -> Result<GadgetPropertyFit> {
    let h_prime = instance.gadget.assemble()?;
    let h_target = instance.target.assemble()?;
    let ip = identity_tensor_p(instance, &witness.p_anc)?;
    let p_prime = DenseOperator::from_matrix(
        witness.u.mat() * ip.mat() * witness.u.adjoint().mat(),
    );
    let p_rank = projector_rank(&witness.p_anc);
    let anc_dim = instance.ancilla_dim();

    let mut samples = Vec::with_capacity(h_else_list.len());
    for h_else in h_else_list {
        if h_else.dim() != instance.target_dim() {
            return Err(GadgetError::DimensionMismatch {
                context: "H_else dimension",
                expected: instance.target_dim(),
                got: h_else.dim(),
            });
        }
        let joint = DenseOperator::from_matrix(
            h_prime.mat() + h_else.kron(&DenseOperator::identity(anc_dim)).mat(),
        );
        let restricted = restricted_eigs(&joint, &p_prime)?;
        let sum = h_target.add(h_else);
        let base = herm_eig(&sum)?.values;
        let mut reference = Vec::with_capacity(base.len() * p_rank);
        for lam in base {
            for _ in 0..p_rank {
                reference.push(lam);
            }
        }
        let residual = sorted_eigenvalue_distance(restricted, reference)?;
        samples.push(GadgetPropertySample {
            h_else_norm: op_norm(h_else),
            residual,
        });
    }
    let (zeta_hat, eps_hat) = linear_fit(&samples);
    Ok(GadgetPropertyFit {
        samples,
        zeta_hat,
        eps_hat,
    })
}

fn linear_fit(samples: &[GadgetPropertySample]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return (0.0, samples.first().map(|s| s.residual).unwrap_or(0.0));
    }
    let sx: f64 = samples.iter().map(|s| s.h_else_norm).sum();
    let sy: f64 = samples.iter().map(|s| s.residual).sum();
    let sxx: f64 = samples.iter().map(|s| s.h_else_norm * s.h_else_norm).sum();
    let sxy: f64 = samples.iter().map(|s| s.h_else_norm * s.residual).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (0.0, sy / n);
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Bystander Hamiltonians for property sampling: seeded random Pauli strings
/// with strengths up to `j_max`, plus adversarial single-site terms on
/// `adversarial_site` at a ladder of strengths.
pub fn sample_h_else_set(
    layout: &SiteLayout,
    count: usize,
    j_max: f64,
    adversarial_site: Option<usize>,
    seed: u64,
) -> Result<Vec<DenseOperator>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut list = vec![DenseOperator::zeros(layout.total_dim())];
    for _ in 0..count {
        let p = crate::sampling::random_pauli_string(layout, j_max, &mut rng);
        list.push(crate::operators::pauli_embed(&p, layout)?);
    }
    if let Some(site) = adversarial_site {
        for pauli in [crate::operators::Pauli::X, crate::operators::Pauli::Z] {
            for frac in [0.25, 0.5, 1.0] {
                let p = crate::operators::PauliString::single(
                    j_max * frac,
                    layout.n_sites(),
                    site,
                    pauli,
                )?;
                list.push(crate::operators::pauli_embed(&p, layout)?);
            }
        }
    }
    Ok(list)
}

// ---------------------------------------------------------------------------
// Parallel combination
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CombinedStats {
    pub n_sites: usize,
    pub n_instances: usize,
    /// Max target term norm.
    pub j: f64,
    /// Max gadget norm over instances.
    pub j_prime: f64,
    /// Max off-diagonal block norm `||(I (x) P_i) H_i' (I (x) P_i^perp)||`.
    pub j_prime_off: f64,
    pub eta_max: f64,
    pub eps_max: f64,
    pub eta_sum: f64,
    /// `sum_i (eps_i + eta_i J)`.
    pub first_order_reference: f64,
    /// `n (eps + eta J + eta^3 J'_O + eta^4 J')` with constant 1.
    pub reference_eps: f64,
}

#[derive(Debug, Clone)]
pub struct CombinedGadget {
    pub target: LocalHamiltonian,
    pub gadget: LocalHamiltonian,
    pub ancilla_sites: Vec<usize>,
    pub p_anc: DenseOperator,
    pub generator: DenseOperator,
    pub u: DenseOperator,
    pub eta_prime: f64,
    pub eps_prime: f64,
    pub stats: CombinedStats,
}

/// Combine gadget instances over a shared target layout with disjoint
/// ancillas: `H' = sum_i H_i'`, `P = (x)_i P_i`, `S = sum_i S_i`, `U = e^S`.
/// Measures `eps' = ||(I (x) P) e^{-S} H' e^{S} (I (x) P) - H (x) P||` and
/// `eta' = ||e^S - I||`.
pub fn combine_parallel(instances: &[&GadgetInstance]) -> Result<CombinedGadget> {
    if instances.is_empty() {
        return Err(GadgetError::InvalidParameter {
            reason: "need at least one instance".into(),
        });
    }
    let target_layout = instances[0].target.layout().clone();
    let n = target_layout.n_sites();
    for inst in instances {
        if inst.target.layout() != &target_layout {
            return Err(GadgetError::DimensionMismatch {
                context: "combine_parallel target layouts",
                expected: target_layout.total_dim(),
                got: inst.target.layout().total_dim(),
            });
        }
        if inst.witness.is_none() {
            return Err(GadgetError::InvalidParameter {
                reason: "every instance must carry a witness".into(),
            });
        }
        // ancillas must be the appended tail of each instance's layout
        for (k, &s) in inst.ancilla_sites.iter().enumerate() {
            if s != n + k {
                return Err(GadgetError::InvalidParameter {
                    reason: "instance ancillas must be appended after the target sites".into(),
                });
            }
        }
    }

    // joint layout: target sites then each instance's ancillas in order
    let mut anc_dims = Vec::new();
    for inst in instances {
        for &s in &inst.ancilla_sites {
            anc_dims.push(inst.gadget.layout().dims()[s]);
        }
    }
    let joint_layout = target_layout.extended(&anc_dims)?;
    let joint_anc_sites: Vec<usize> = (n..n + anc_dims.len()).collect();

    let mut offsets = Vec::with_capacity(instances.len());
    let mut acc = 0usize;
    for inst in instances {
        offsets.push(acc);
        acc += inst.ancilla_sites.len();
    }

    // total target and relabeled gadget terms
    let mut target = LocalHamiltonian::new(target_layout.clone());
    let mut gadget = LocalHamiltonian::new(joint_layout.clone());
    for (inst, &off) in instances.iter().zip(&offsets) {
        for t in inst.target.terms() {
            target.push_term(t.clone())?;
        }
        let relabeled = inst.gadget.relabeled(joint_layout.clone(), |s| {
            if s < n {
                s
            } else {
                n + off + (s - n)
            }
        })?;
        for t in relabeled.terms() {
            gadget.push_term(t.clone())?;
        }
    }

    // P = tensor of instance ancilla projectors; S = sum of embedded generators
    let mut p_anc = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    let joint_dim = joint_layout.total_dim();
    let mut s_total = CMatrix::zeros(joint_dim, joint_dim);
    let mut eta_sum = 0.0;
    let mut eta_max: f64 = 0.0;
    let mut eps_max: f64 = 0.0;
    let mut j_prime: f64 = 0.0;
    let mut j_prime_off: f64 = 0.0;
    for (inst, &off) in instances.iter().zip(&offsets) {
        let w = inst.witness.as_ref().unwrap();
        let generator = w.generator.as_ref().ok_or_else(|| GadgetError::InvalidParameter {
            reason: "combination requires direct-rotation witnesses (no generator stored)".into(),
        })?;
        p_anc = p_anc.kronecker(w.p_anc.mat());
        let mut support: Vec<usize> = (0..n).collect();
        support.extend(inst.ancilla_sites.iter().map(|&s| n + off + (s - n)));
        let embedded = embed_on_support(generator, &support, &joint_layout)?;
        s_total += embedded.mat();
        eta_sum += w.eta;
        eta_max = eta_max.max(w.eta);
        eps_max = eps_max.max(w.eps);

        let h_i = inst.gadget.assemble()?;
        j_prime = j_prime.max(op_norm(&h_i));
        let ip_i = identity_tensor_p(inst, &w.p_anc)?;
        let ip_perp = DenseOperator::identity(ip_i.dim()).sub(&ip_i);
        j_prime_off = j_prime_off.max(op_norm_mat(&(ip_i.mat() * h_i.mat() * ip_perp.mat())));
    }
    let p_anc = DenseOperator::from_matrix(p_anc);
    let generator = DenseOperator::from_matrix(s_total);
    let u = exp_antihermitian(&generator)?;

    let h_prime = gadget.assemble()?;
    let h_target = target.assemble()?;
    let ip = DenseOperator::identity(target_layout.total_dim()).kron(&p_anc);
    let conj = u.adjoint().mat() * h_prime.mat() * u.mat();
    let projected = ip.mat() * conj * ip.mat();
    let eps_prime = op_norm_mat(&(projected - h_target.kron(&p_anc).mat()));
    let eta_prime = op_norm_mat(&(u.mat() - CMatrix::identity(joint_dim, joint_dim)));

    let j = target.stats().max_term_norm;
    let first_order_reference: f64 = instances
        .iter()
        .map(|inst| {
            let w = inst.witness.as_ref().unwrap();
            w.eps + w.eta * j
        })
        .sum();
    let nf = n as f64;
    let reference_eps = nf
        * (eps_max + eta_max * j + eta_max.powi(3) * j_prime_off + eta_max.powi(4) * j_prime);

    Ok(CombinedGadget {
        target,
        gadget,
        ancilla_sites: joint_anc_sites,
        p_anc,
        generator,
        u,
        eta_prime,
        eps_prime,
        stats: CombinedStats {
            n_sites: n,
            n_instances: instances.len(),
            j,
            j_prime,
            j_prime_off,
            eta_max,
            eps_max,
            eta_sum,
            first_order_reference,
            reference_eps,
        },
    })
}

/// Outcome of checking the combined gadget against its low-energy subspace.
#[derive(Debug, Clone)]
pub enum LowEnergyCombineCheck {
    /// The Delta lower-bound condition fails; the check is skipped.
    ConditionViolated { required: f64, delta: f64 },
    /// The low-energy subspace has the wrong dimension at this cut.
    RankMismatch { expected: usize, got: usize },
    Verified {
        delta_check: f64,
        eta_prime: f64,
        eps_prime: f64,
    },
}

/// Check that the combined gadget is a low-energy gadget at `delta_check`
/// (conventionally `Delta / 2`), provided the combination condition
/// `Delta >= (||H|| + J + N(eps + 2 J eta)) / (1/4 - 2 eta)` holds.
pub fn combine_low_energy_check(
    combined: &CombinedGadget,
    delta: f64,
    delta_check: f64,
) -> Result<LowEnergyCombineCheck> {
    let h_target = combined.target.assemble()?;
    let h_norm = op_norm(&h_target);
    let j = combined.stats.j;
    let eta = combined.stats.eta_max;
    let eps = combined.stats.eps_max;
    let n_terms = combined.stats.n_instances as f64;
    let denom = 0.25 - 2.0 * eta;
    if denom <= 0.0 {
        return Ok(LowEnergyCombineCheck::ConditionViolated {
            required: f64::INFINITY,
            delta,
        });
    }
    let required = (h_norm + j + n_terms * (eps + 2.0 * j * eta)) / denom;
    if delta < required {
        return Ok(LowEnergyCombineCheck::ConditionViolated { required, delta });
    }

    let h_prime = combined.gadget.assemble()?;
    let (p_le, rank) = low_energy_projector(&h_prime, delta_check)?;
    let ip = DenseOperator::identity(combined.target.layout().total_dim()).kron(&combined.p_anc);
    let expected = projector_rank(&ip);
    if rank != expected {
        return Ok(LowEnergyCombineCheck::RankMismatch {
            expected,
            got: rank,
        });
    }
    let rot = direct_rotation(&ip, &p_le)?;
    let eta_prime = rot.w_minus_identity_norm();
    let h_tensor_p = combined.target.assemble()?.kron(&combined.p_anc);
    let lhs = p_le.mat() * h_prime.mat() * p_le.mat();
    let rhs = rot.w.mat() * h_tensor_p.mat() * rot.w.adjoint().mat();
    let eps_prime = op_norm_mat(&(lhs - rhs));
    Ok(LowEnergyCombineCheck::Verified {
        delta_check,
        eta_prime,
        eps_prime,
    })
}

/// `|lambda_0(H) - lambda_0(H')|` via dense diagonalization.
pub fn gse_compare(h: &LocalHamiltonian, h_prime: &LocalHamiltonian) -> Result<f64> {
    Ok((h.ground_energy()? - h_prime.ground_energy()?).abs())
}

// ---------------------------------------------------------------------------
// Energy-bound check (gadget energy scaling)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBoundCheck {
    pub h_prime_norm: f64,
    /// `(2^{-k'} J - eps) / (2 eta)` -- the factor the proof establishes.
    pub rhs_proof: f64,
    /// `(2^{-k'} J - eps) / eta` -- the tighter factor without the 2.
    pub rhs_statement: f64,
    pub holds_proof: bool,
    pub holds_statement: bool,
}

/// Check the locality-reduction energy bound on a measured witness: any
/// k'-local gadget for a strength-J k-fold Pauli product with eps below
/// `2^{-k'} J` must satisfy `||H'|| >= (2^{-k'} J - eps) / (2 eta)`.
pub fn energy_bound_check(
    h_prime_norm: f64,
    j: f64,
    k_prime: u32,
    eta: f64,
    eps: f64,
) -> Result<EnergyBoundCheck> {
    let threshold = j * 0.5f64.powi(k_prime as i32);
    if eps >= threshold {
        return Err(GadgetError::Inapplicable {
            reason: format!("eps = {eps} >= 2^-k' J = {threshold}"),
        });
    }
    if eta <= 0.0 {
        return Err(GadgetError::Inapplicable {
            reason: "eta must be positive".into(),
        });
    }
    let rhs_proof = (threshold - eps) / (2.0 * eta);
    let rhs_statement = (threshold - eps) / eta;
    Ok(EnergyBoundCheck {
        h_prime_norm,
        rhs_proof,
        rhs_statement,
        holds_proof: h_prime_norm >= rhs_proof,
        holds_statement: h_prime_norm >= rhs_statement,
    })
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessJson {
    pub eta: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GadgetJson {
    pub dims: Vec<usize>,
    pub terms: Vec<crate::hamiltonians::TermJson>,
    pub ancilla_sites: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessJson>,
}

impl GadgetInstance {
    /// Export: the gadget Hamiltonian in the shared JSON schema plus the
    /// ancilla bookkeeping and measured witness values.
    pub fn to_json(&self) -> GadgetJson {
        let ham: HamiltonianJson = self.gadget.to_json();
        GadgetJson {
            dims: ham.dims,
            terms: ham.terms,
            ancilla_sites: self.ancilla_sites.clone(),
            delta: self.delta,
            witness: self.witness.as_ref().map(|w| WitnessJson {
                eta: w.eta,
                eps: w.eps,
            }),
        }
    }
}

/// Parse the gadget-Hamiltonian part of a serialized instance.
pub fn gadget_hamiltonian_from_json(json: &GadgetJson) -> Result<LocalHamiltonian> {
    let ham = HamiltonianJson {
        dims: json.dims.clone(),
        terms: json.terms.clone(),
    };
    LocalHamiltonian::from_json(&ham)
}
