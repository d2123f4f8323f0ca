//! Dense complex operator algebra on small multi-site Hilbert spaces.
//!
//! Operators are dense `dim x dim` complex matrices. Every matrix exponential
//! we need has the form `exp(-i t H)` with `H` Hermitian, so exponentials go
//! through the Hermitian eigendecomposition; there is no Pade or
//! scaling-and-squaring code here. A global dimension cap (default 2^13,
//! override with `GADGETLAB_DIM_CAP`) keeps dense eigensolves tractable.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{GadgetError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Default cap on total Hilbert-space dimension.
pub const DEFAULT_DIM_CAP: usize = 1 << 13;

/// Relative tolerance for treating a matrix as Hermitian.
pub const HERMITICITY_RTOL: f64 = 1e-12;

/// Absolute tolerance around a spectral cut below which the split is ambiguous.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Current dimension cap; `GADGETLAB_DIM_CAP` overrides the default.
pub fn dim_cap() -> usize {
    std::env::var("GADGETLAB_DIM_CAP")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(DEFAULT_DIM_CAP)
}

pub(crate) fn check_dim_cap(dim: usize) -> Result<()> {
    let cap = dim_cap();
    if dim > cap {
        Err(GadgetError::DimensionCap { dim, cap })
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Site layouts
// ---------------------------------------------------------------------------

/// Per-site local dimensions of a tensor-product space (qubits = 2, qutrits = 3).
///
/// Site 0 is the most significant tensor factor: basis index
/// `i = x_0 * d_1 * d_2 * ... + x_1 * d_2 * ... + ... + x_{n-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteLayout {
    dims: Vec<usize>,
}

impl SiteLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(GadgetError::InvalidParameter {
                reason: "all site dimensions must be >= 2".into(),
            });
        }
        let total: usize = dims.iter().product();
        check_dim_cap(total)?;
        Ok(Self { dims })
    }

    pub fn qubits(n: usize) -> Result<Self> {
        Self::new(vec![2; n])
    }

    pub fn qutrits(n: usize) -> Result<Self> {
        Self::new(vec![3; n])
    }

    pub fn n_sites(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim_of(&self, site: usize) -> Result<usize> {
        self.dims
            .get(site)
            .copied()
            .ok_or(GadgetError::SiteOutOfRange {
                site,
                n_sites: self.dims.len(),
            })
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Layout with extra sites appended.
    pub fn extended(&self, extra: &[usize]) -> Result<Self> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(extra);
        Self::new(dims)
    }

    /// Stride of each site in the flattened basis index (site 0 most significant).
    pub fn strides(&self) -> Vec<usize> {
        let n = self.dims.len();
        let mut s = vec![1usize; n];
        for j in (0..n.saturating_sub(1)).rev() {
            s[j] = s[j + 1] * self.dims[j + 1];
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Dense operators
// ---------------------------------------------------------------------------

fn hermitian_deviation(m: &CMatrix) -> f64 {
    let diff = m - m.adjoint();
    let scale = m.norm().max(1e-300);
    diff.norm() / scale
}

/// A dense complex matrix with a Hermiticity hint.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    mat: CMatrix,
    hermitian: bool,
}

impl DenseOperator {
    /// Wrap a matrix; the Hermiticity hint is detected automatically.
    pub fn from_matrix(mat: CMatrix) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "operator must be square");
        let hermitian = hermitian_deviation(&mat) <= HERMITICITY_RTOL;
        Self { mat, hermitian }
    }

    /// Wrap a matrix that must be Hermitian.
    pub fn hermitian(mat: CMatrix) -> Result<Self> {
        let dev = hermitian_deviation(&mat);
        if dev > HERMITICITY_RTOL {
            return Err(GadgetError::NonHermitian { deviation: dev });
        }
        Ok(Self {
            mat,
            hermitian: true,
        })
    }

    /// Real diagonal matrix.
    pub fn diagonal(entries: &[f64]) -> Self {
        let v = DVector::from_iterator(entries.len(), entries.iter().map(|&x| Complex64::new(x, 0.0)));
        Self {
            mat: CMatrix::from_diagonal(&v),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: CMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: CMatrix::zeros(dim, dim),
            hermitian: true,
        }
    }

    /// Rank-one projector |psi><psi| for a normalized vector.
    pub fn projector_onto(psi: &CVector) -> Self {
        let m = psi * psi.adjoint();
        Self {
            mat: m,
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn adjoint(&self) -> Self {
        Self {
            mat: self.mat.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            mat: &self.mat * Complex64::new(c, 0.0),
            hermitian: self.hermitian,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            mat: &self.mat + &other.mat,
            hermitian: self.hermitian && other.hermitian,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            mat: &self.mat - &other.mat,
            hermitian: self.hermitian && other.hermitian,
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        Self::from_matrix(&self.mat * &other.mat)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self {
            mat: self.mat.kronecker(&other.mat),
            hermitian: self.hermitian && other.hermitian,
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    /// Apply to a column vector.
    pub fn apply(&self, v: &CVector) -> CVector {
        &self.mat * v
    }
}

// ---------------------------------------------------------------------------
// Pauli strings
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMatrix {
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            Pauli::I => CMatrix::from_row_slice(2, 2, &[one, z, z, one]),
            Pauli::X => CMatrix::from_row_slice(2, 2, &[z, one, one, z]),
            Pauli::Y => CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
            Pauli::Z => CMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Real-weighted tensor product of single-site Paulis with explicit support.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    pub coefficient: f64,
    factors: BTreeMap<usize, Pauli>,
    n_sites: usize,
}

impl PauliString {
    pub fn new(coefficient: f64, n_sites: usize, factors: &[(usize, Pauli)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &(site, p) in factors {
            if site >= n_sites {
                return Err(GadgetError::SiteOutOfRange { site, n_sites });
            }
            if p != Pauli::I {
                map.insert(site, p);
            }
        }
        Ok(Self {
            coefficient,
            factors: map,
            n_sites,
        })
    }

    /// Identity string.
    pub fn identity(n_sites: usize) -> Self {
        Self {
            coefficient: 1.0,
            factors: BTreeMap::new(),
            n_sites,
        }
    }

    /// Single-site Pauli.
    pub fn single(coefficient: f64, n_sites: usize, site: usize, p: Pauli) -> Result<Self> {
        Self::new(coefficient, n_sites, &[(site, p)])
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn factor(&self, site: usize) -> Pauli {
        self.factors.get(&site).copied().unwrap_or(Pauli::I)
    }

    /// Sites carrying a non-identity factor, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.factors.keys().copied().collect()
    }

    /// Two Pauli strings commute iff they anticommute on an even number of sites.
    pub fn commutes_with(&self, other: &Self) -> bool {
        let mut anti = 0usize;
        for (&site, &p) in &self.factors {
            let q = other.factor(site);
            if q != Pauli::I && q != p {
                anti += 1;
            }
        }
        anti.is_multiple_of(2)
    }

    /// Product of two strings with disjoint supports (no phase bookkeeping needed).
    pub fn disjoint_product(&self, other: &Self) -> Result<Self> {
        if self.n_sites != other.n_sites {
            return Err(GadgetError::DimensionMismatch {
                context: "pauli product",
                expected: self.n_sites,
                got: other.n_sites,
            });
        }
        let mut factors = self.factors.clone();
        for (&site, &p) in &other.factors {
            if factors.insert(site, p).is_some() {
                return Err(GadgetError::InvalidParameter {
                    reason: format!("supports overlap at site {site}"),
                });
            }
        }
        Ok(Self {
            coefficient: self.coefficient * other.coefficient,
            factors,
            n_sites: self.n_sites,
        })
    }

    pub fn letters(&self) -> String {
        self.support()
            .iter()
            .map(|&s| self.factor(s).to_char())
            .collect()
    }
}

/// Embed a Pauli string into the full space of a layout.
///
/// Supported sites must be qubits; identity acts on everything else.
pub fn pauli_embed(p: &PauliString, layout: &SiteLayout) -> Result<DenseOperator> {
    if p.n_sites() != layout.n_sites() {
        return Err(GadgetError::DimensionMismatch {
            context: "pauli_embed sites",
            expected: layout.n_sites(),
            got: p.n_sites(),
        });
    }
    for site in p.support() {
        let d = layout.dim_of(site)?;
        if d != 2 {
            return Err(GadgetError::NonQubitSite { site, dim: d });
        }
    }
    check_dim_cap(layout.total_dim())?;
    let mut acc = CMatrix::from_element(1, 1, Complex64::new(p.coefficient, 0.0));
    for site in 0..layout.n_sites() {
        let f = p.factor(site);
        let local = if f == Pauli::I {
            CMatrix::identity(layout.dim_of(site)?, layout.dim_of(site)?)
        } else {
            f.matrix()
        };
        acc = acc.kronecker(&local);
    }
    Ok(DenseOperator::from_matrix(acc))
}

// ---------------------------------------------------------------------------
// Eigendecomposition and functions of Hermitian matrices
// ---------------------------------------------------------------------------

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
pub struct HermEig {
    pub values: Vec<f64>,
    /// Unitary matrix of eigenvectors (column k belongs to `values[k]`).
    pub vectors: CMatrix,
}

impl HermEig {
    /// Apply a real function to the spectrum: `V f(diag) V^dag`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let d = DVector::from_iterator(self.values.len(), self.values.iter().map(|&x| f(x)));
        let diag = CMatrix::from_diagonal(&d);
        &self.vectors * diag * self.vectors.adjoint()
    }
}

/// Diagonalize a Hermitian operator.
pub fn herm_eig(a: &DenseOperator) -> Result<HermEig> {
    let dev = hermitian_deviation(a.mat());
    if dev > 1e-10 {
        return Err(GadgetError::NonHermitian { deviation: dev });
    }
    // Symmetrize so roundoff in the input cannot leak into the solver.
    let sym = (a.mat() + a.mat().adjoint()) * Complex64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok(HermEig { values, vectors })
}

/// Unitary `exp(-i t H)` for Hermitian `H`, via the eigendecomposition.
pub fn expm_ih(h: &DenseOperator, t: f64) -> Result<DenseOperator> {
    let eig = herm_eig(h)?;
    let m = eig.map_spectrum(|lam| (Complex64::new(0.0, -t * lam)).exp());
    Ok(DenseOperator::from_matrix(m))
}

/// Largest singular value.
pub fn op_norm(a: &DenseOperator) -> f64 {
    if a.is_hermitian() {
        match herm_eig(a) {
            Ok(eig) => eig.values.iter().fold(0.0, |m, &x| m.max(x.abs())),
            Err(_) => singular_values(a).into_iter().fold(0.0, f64::max),
        }
    } else {
        singular_values(a).into_iter().fold(0.0, f64::max)
    }
}

/// Sum of singular values.
pub fn trace_norm(a: &DenseOperator) -> f64 {
    if a.is_hermitian() {
        if let Ok(eig) = herm_eig(a) {
            return eig.values.iter().map(|x| x.abs()).sum();
        }
    }
    singular_values(a).into_iter().sum()
}

/// Singular values via the Hermitian eigendecomposition of `A^dag A`.
fn singular_values(a: &DenseOperator) -> Vec<f64> {
    let gram = a.mat().adjoint() * a.mat();
    let gram = DenseOperator::from_matrix(gram);
    let eig = herm_eig(&gram).expect("gram matrix is Hermitian");
    eig.values.iter().map(|&x| x.max(0.0).sqrt()).collect()
}

/// Convenience: operator norm of a raw matrix.
pub fn op_norm_mat(m: &CMatrix) -> f64 {
    op_norm(&DenseOperator::from_matrix(m.clone()))
}

/// Projector onto the span of eigenvectors of `H` with eigenvalue <= `delta`,
/// together with its rank.
///
/// Errors if any eigenvalue sits within `DEGENERACY_TOL` of the cut: the
/// caller must move `delta` rather than rely on a silent tie-break.
pub fn low_energy_projector(h: &DenseOperator, delta: f64) -> Result<(DenseOperator, usize)> {
    let eig = herm_eig(h)?;
    for &lam in &eig.values {
        if (lam - delta).abs() <= DEGENERACY_TOL {
            return Err(GadgetError::AmbiguousCut {
                cut: delta,
                eigenvalue: lam,
                tol: DEGENERACY_TOL,
            });
        }
    }
    let rank = eig.values.iter().filter(|&&lam| lam <= delta).count();
    let n = eig.values.len();
    let mut p = CMatrix::zeros(n, n);
    for k in 0..rank {
        let v = eig.vectors.column(k);
        p += v * v.adjoint();
    }
    let mut op = DenseOperator::from_matrix(p);
    op.hermitian = true;
    Ok((op, rank))
}

/// Rank of a projector, read off the trace.
pub fn projector_rank(p: &DenseOperator) -> usize {
    p.trace().re.round() as usize
}

/// Check `P^2 = P = P^dag` within `tol`; returns the worst residual.
pub fn projector_residual(p: &DenseOperator) -> f64 {
    let idem = (p.mat() * p.mat()) - p.mat();
    let herm = p.mat() - p.mat().adjoint();
    idem.norm().max(herm.norm())
}

/// Max over sorted eigenvalue pairs of `|lambda_j - mu_j|` (Weyl distance).
pub fn spectral_distance(a: &DenseOperator, b: &DenseOperator) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(GadgetError::DimensionMismatch {
            context: "spectral_distance",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let ea = herm_eig(a)?;
    let eb = herm_eig(b)?;
    Ok(ea
        .values
        .iter()
        .zip(eb.values.iter())
        .fold(0.0, |m, (&x, &y)| m.max((x - y).abs())))
}

/// Max over sorted eigenvalue lists of two Hermitian matrices given directly.
pub fn sorted_eigenvalue_distance(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GadgetError::DimensionMismatch {
            context: "sorted_eigenvalue_distance",
            expected: a.len(),
            got: b.len(),
        });
    }
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(a.iter()
        .zip(b.iter())
        .fold(0.0, |m, (&x, &y)| m.max((x - y).abs())))
}

// ---------------------------------------------------------------------------
// Partial trace
// ---------------------------------------------------------------------------

/// Partial trace keeping the sites in `keep` (ascending site order in the output).
pub fn partial_trace(a: &DenseOperator, layout: &SiteLayout, keep: &[usize]) -> Result<DenseOperator> {
    if a.dim() != layout.total_dim() {
        return Err(GadgetError::DimensionMismatch {
            context: "partial_trace layout",
            expected: layout.total_dim(),
            got: a.dim(),
        });
    }
    let n = layout.n_sites();
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.len() != keep.len() {
        return Err(GadgetError::InvalidParameter {
            reason: "duplicate sites in keep set".into(),
        });
    }
    for &s in &keep_sorted {
        if s >= n {
            return Err(GadgetError::SiteOutOfRange { site: s, n_sites: n });
        }
    }
    let traced: Vec<usize> = (0..n).filter(|s| !keep_sorted.contains(s)).collect();
    let strides = layout.strides();
    let keep_dims: Vec<usize> = keep_sorted.iter().map(|&s| layout.dims()[s]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&s| layout.dims()[s]).collect();
    let out_dim: usize = keep_dims.iter().product();
    let env_dim: usize = traced_dims.iter().product();

    // Offset of a configuration of the kept (resp. traced) sites in the full index.
    let config_offset = |sites: &[usize], dims: &[usize], mut idx: usize| -> usize {
        let mut off = 0usize;
        for (pos, &site) in sites.iter().enumerate().rev() {
            let d = dims[pos];
            off += (idx % d) * strides[site];
            idx /= d;
        }
        off
    };

    let mut out = CMatrix::zeros(out_dim, out_dim);
    for ia in 0..out_dim {
        let oa = config_offset(&keep_sorted, &keep_dims, ia);
        for ib in 0..out_dim {
            let ob = config_offset(&keep_sorted, &keep_dims, ib);
            let mut acc = Complex64::new(0.0, 0.0);
            for e in 0..env_dim {
                let oe = config_offset(&traced, &traced_dims, e);
                acc += a.mat()[(oa + oe, ob + oe)];
            }
            out[(ia, ib)] = acc;
        }
    }
    Ok(DenseOperator::from_matrix(out))
}

/// `(I (x) <a|) V (I (x) |b>)` for a single ancilla qubit appended as the
/// least-significant tensor factor.
pub fn ancilla_block(v: &CMatrix, a: usize, b: usize) -> CMatrix {
    let half = v.nrows() / 2;
    CMatrix::from_fn(half, half, |i, j| v[(2 * i + a, 2 * j + b)])
}

/// Embed an operator acting on `support` (ascending) into the full layout space.
pub fn embed_on_support(
    op: &DenseOperator,
    support: &[usize],
    layout: &SiteLayout,
) -> Result<DenseOperator> {
    let n = layout.n_sites();
    for w in support.windows(2) {
        if w[0] >= w[1] {
            return Err(GadgetError::InvalidParameter {
                reason: "support must be strictly ascending".into(),
            });
        }
    }
    for &s in support {
        if s >= n {
            return Err(GadgetError::SiteOutOfRange { site: s, n_sites: n });
        }
    }
    let sup_dims: Vec<usize> = support.iter().map(|&s| layout.dims()[s]).collect();
    let sup_dim: usize = sup_dims.iter().product();
    if op.dim() != sup_dim {
        return Err(GadgetError::DimensionMismatch {
            context: "embed_on_support",
            expected: sup_dim,
            got: op.dim(),
        });
    }
    let full_dim = layout.total_dim();
    check_dim_cap(full_dim)?;
    let rest: Vec<usize> = (0..n).filter(|s| !support.contains(s)).collect();
    let rest_dims: Vec<usize> = rest.iter().map(|&s| layout.dims()[s]).collect();
    let rest_dim: usize = rest_dims.iter().product();
    let strides = layout.strides();

    let config_offset = |sites: &[usize], dims: &[usize], mut idx: usize| -> usize {
        let mut off = 0usize;
        for (pos, &site) in sites.iter().enumerate().rev() {
            let d = dims[pos];
            off += (idx % d) * strides[site];
            idx /= d;
        }
        off
    };

    let mut out = CMatrix::zeros(full_dim, full_dim);
    for i in 0..sup_dim {
        let oi = config_offset(support, &sup_dims, i);
        for j in 0..sup_dim {
            let v = op.mat()[(i, j)];
            if v == Complex64::new(0.0, 0.0) {
                continue;
            }
            let oj = config_offset(support, &sup_dims, j);
            for e in 0..rest_dim {
                let oe = config_offset(&rest, &rest_dims, e);
                out[(oi + oe, oj + oe)] += v;
            }
        }
    }
    let mut res = DenseOperator::from_matrix(out);
    res.hermitian = op.hermitian;
    Ok(res)
}
