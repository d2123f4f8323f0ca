//! Local Hamiltonians as lists of terms with explicit supports, plus the
//! interaction hypergraph, model builders and the qutrit-to-qubit encoding
//! example.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GadgetError, Result};
use crate::operators::{
    check_dim_cap, embed_on_support, herm_eig, op_norm, CMatrix, DenseOperator, Pauli, PauliString,
    SiteLayout, HERMITICITY_RTOL,
};

// ---------------------------------------------------------------------------
// Terms
// ---------------------------------------------------------------------------

/// One interaction: a Hermitian operator on an ordered set of sites.
#[derive(Debug, Clone)]
pub struct LocalTerm {
    pub operator: DenseOperator,
    pub support: Vec<usize>,
    pub label: String,
    /// Pauli letters over the support plus coefficient, when the term was
    /// built from a Pauli string (kept so JSON export round-trips).
    pauli: Option<(String, f64)>,
}

impl LocalTerm {
    pub fn new(operator: DenseOperator, support: Vec<usize>, label: impl Into<String>) -> Result<Self> {
        for w in support.windows(2) {
            if w[0] >= w[1] {
                return Err(GadgetError::InvalidParameter {
                    reason: "term support must be strictly ascending".into(),
                });
            }
        }
        if !operator.is_hermitian() {
            return Err(GadgetError::NonHermitian { deviation: f64::NAN });
        }
        Ok(Self {
            operator,
            support,
            label: label.into(),
            pauli: None,
        })
    }

    /// Term from a Pauli string; the operator lives on the string's support.
    pub fn from_pauli(p: &PauliString, label: impl Into<String>) -> Result<Self> {
        let support = p.support();
        if support.is_empty() {
            return Err(GadgetError::InvalidParameter {
                reason: "Pauli term needs non-empty support".into(),
            });
        }
        let mut acc = CMatrix::from_element(1, 1, Complex64::new(p.coefficient, 0.0));
        for &s in &support {
            acc = acc.kronecker(&p.factor(s).matrix());
        }
        Ok(Self {
            operator: DenseOperator::from_matrix(acc),
            support,
            label: label.into(),
            pauli: Some((p.letters(), p.coefficient)),
        })
    }

    pub fn pauli_repr(&self) -> Option<(&str, f64)> {
        self.pauli.as_ref().map(|(s, c)| (s.as_str(), *c))
    }

    fn is_zero(&self) -> bool {
        self.operator.mat().iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }
}

/// Hypergraph summary: locality, max degree, max term norm, term count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypergraphStats {
    pub locality: usize,
    pub max_degree: usize,
    pub max_term_norm: f64,
    pub n_terms: usize,
}

/// Vertices are sites, hyperedges are term supports.
#[derive(Debug, Clone)]
pub struct InteractionHypergraph {
    pub n_vertices: usize,
    pub hyperedges: Vec<Vec<usize>>,
}

impl InteractionHypergraph {
    pub fn degree(&self, v: usize) -> usize {
        self.hyperedges.iter().filter(|e| e.contains(&v)).count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n_vertices).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn locality(&self) -> usize {
        self.hyperedges.iter().map(|e| e.len()).max().unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// Local Hamiltonians
// ---------------------------------------------------------------------------

/// A sum of local terms over a site layout.
///
/// Degree, locality and the max term norm are tracked incrementally as terms
/// are pushed; `recompute_stats` rebuilds them from scratch.
#[derive(Debug, Clone)]
pub struct LocalHamiltonian {
    layout: SiteLayout,
    terms: Vec<LocalTerm>,
    degrees: Vec<usize>,
    locality: usize,
    max_term_norm: f64,
}

impl LocalHamiltonian {
    pub fn new(layout: SiteLayout) -> Self {
        let n = layout.n_sites();
        Self {
            layout,
            terms: Vec::new(),
            degrees: vec![0; n],
            locality: 0,
            max_term_norm: 0.0,
        }
    }

    pub fn from_terms(layout: SiteLayout, terms: Vec<LocalTerm>) -> Result<Self> {
        let mut h = Self::new(layout);
        for t in terms {
            h.push_term(t)?;
        }
        Ok(h)
    }

    /// Add a term; zero terms are dropped so hypergraph stats stay meaningful.
    pub fn push_term(&mut self, term: LocalTerm) -> Result<()> {
        let mut dim = 1usize;
        for &s in &term.support {
            dim *= self.layout.dim_of(s)?;
        }
        if term.operator.dim() != dim {
            return Err(GadgetError::DimensionMismatch {
                context: "term operator vs support",
                expected: dim,
                got: term.operator.dim(),
            });
        }
        if term.is_zero() {
            return Ok(());
        }
        for &s in &term.support {
            self.degrees[s] += 1;
        }
        self.locality = self.locality.max(term.support.len());
        self.max_term_norm = self.max_term_norm.max(op_norm(&term.operator));
        self.terms.push(term);
        Ok(())
    }

    pub fn add_pauli(&mut self, p: &PauliString, label: impl Into<String>) -> Result<()> {
        if p.coefficient == 0.0 || p.support().is_empty() {
            return Ok(());
        }
        self.push_term(LocalTerm::from_pauli(p, label)?)
    }

    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    pub fn n_sites(&self) -> usize {
        self.layout.n_sites()
    }

    /// Sum of embedded terms as a dense operator.
    pub fn assemble(&self) -> Result<DenseOperator> {
        let dim = self.layout.total_dim();
        check_dim_cap(dim)?;
        let mut acc = CMatrix::zeros(dim, dim);
        for t in &self.terms {
            let emb = embed_on_support(&t.operator, &t.support, &self.layout)?;
            acc += emb.mat();
        }
        DenseOperator::hermitian(acc)
    }

    pub fn hypergraph(&self) -> InteractionHypergraph {
        InteractionHypergraph {
            n_vertices: self.layout.n_sites(),
            hyperedges: self.terms.iter().map(|t| t.support.clone()).collect(),
        }
    }

    /// Incrementally-tracked stats.
    pub fn stats(&self) -> HypergraphStats {
        HypergraphStats {
            locality: self.locality,
            max_degree: self.degrees.iter().copied().max().unwrap_or(0),
            max_term_norm: self.max_term_norm,
            n_terms: self.terms.len(),
        }
    }

    /// Stats rebuilt from the term list, ignoring the incremental bookkeeping.
    pub fn recompute_stats(&self) -> HypergraphStats {
        let hg = self.hypergraph();
        HypergraphStats {
            locality: hg.locality(),
            max_degree: hg.max_degree(),
            max_term_norm: self
                .terms
                .iter()
                .map(|t| op_norm(&t.operator))
                .fold(0.0, f64::max),
            n_terms: self.terms.len(),
        }
    }

    /// Ground-state energy via dense diagonalization.
    pub fn ground_energy(&self) -> Result<f64> {
        let h = self.assemble()?;
        let eig = herm_eig(&h)?;
        Ok(eig.values[0])
    }

    /// Same Hamiltonian with all supports relabeled through `map`.
    pub fn relabeled(&self, new_layout: SiteLayout, map: impl Fn(usize) -> usize) -> Result<Self> {
        let mut out = Self::new(new_layout);
        for t in &self.terms {
            let mut term = t.clone();
            term.support = t.support.iter().map(|&s| map(s)).collect();
            out.push_term(term)?;
        }
        Ok(out)
    }
}

/// Hypergraph summary of a Hamiltonian: (locality k, max degree d, max
/// term norm J, term count N).
pub fn hypergraph_stats(h: &LocalHamiltonian) -> HypergraphStats {
    h.stats()
}

// ---------------------------------------------------------------------------
// Model builders
// ---------------------------------------------------------------------------

/// Nearest-neighbour chain `sum_x zz * Z_x Z_{x+1} + x_field * X_x`.
///
/// Zero-coupling terms are omitted.
pub fn pauli_chain(m: usize, zz: f64, x_field: f64, periodic: bool) -> Result<LocalHamiltonian> {
    if m < 2 {
        return Err(GadgetError::InvalidParameter {
            reason: format!("chain needs at least 2 sites, got {m}"),
        });
    }
    let layout = SiteLayout::qubits(m)?;
    let mut h = LocalHamiltonian::new(layout);
    let bonds = if periodic { m } else { m - 1 };
    for i in 0..bonds {
        let j = (i + 1) % m;
        let (a, b) = (i.min(j), i.max(j));
        let p = PauliString::new(zz, m, &[(a, Pauli::Z), (b, Pauli::Z)])?;
        h.add_pauli(&p, format!("zz({a},{b})"))?;
    }
    for i in 0..m {
        let p = PauliString::single(x_field, m, i, Pauli::X)?;
        h.add_pauli(&p, format!("x({i})"))?;
    }
    Ok(h)
}

/// Diagonal qutrit number Hamiltonian: on-site energies (0, 1, 1) in the
/// basis (down, 0, up); the spectrum is {0, 1, ..., n} and the all-down
/// ground state is unique.
pub fn qutrit_number_hamiltonian(n: usize) -> Result<LocalHamiltonian> {
    if n == 0 {
        return Err(GadgetError::InvalidParameter {
            reason: "need at least one qutrit".into(),
        });
    }
    let layout = SiteLayout::qutrits(n)?;
    let mut h = LocalHamiltonian::new(layout);
    let onsite = DenseOperator::diagonal(&[0.0, 1.0, 1.0]);
    for j in 0..n {
        h.push_term(LocalTerm::new(onsite.clone(), vec![j], format!("n({j})"))?)?;
    }
    Ok(h)
}

// ---------------------------------------------------------------------------
// Qutrit-to-qubit encoding
// ---------------------------------------------------------------------------

/// Isometric encoding of `n` qutrits into `2n` qubits via a caller-supplied
/// `V : C^3 -> C^2 (x) C^2` applied site-by-site.
#[derive(Debug, Clone)]
pub struct QutritEncoding {
    v: CMatrix,
    n: usize,
}

impl QutritEncoding {
    /// Computational-basis default: (down, 0, up) -> (|00>, |01>, |10>).
    pub fn default_isometry() -> CMatrix {
        let mut v = CMatrix::zeros(4, 3);
        v[(0, 0)] = Complex64::new(1.0, 0.0);
        v[(1, 1)] = Complex64::new(1.0, 0.0);
        v[(2, 2)] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn new(n: usize, v: CMatrix) -> Result<Self> {
        if v.nrows() != 4 || v.ncols() != 3 {
            return Err(GadgetError::DimensionMismatch {
                context: "qutrit isometry shape",
                expected: 4,
                got: v.nrows().max(v.ncols()),
            });
        }
        let dev = (v.adjoint() * &v - CMatrix::identity(3, 3)).norm();
        if dev > 1e-12 {
            return Err(GadgetError::NonIsometry { residual: dev });
        }
        Ok(Self { v, n })
    }

    pub fn n_qutrits(&self) -> usize {
        self.n
    }

    /// `V^(x)n` as a dense `4^n x 3^n` matrix.
    pub fn isometry_power(&self) -> CMatrix {
        let mut acc = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        for _ in 0..self.n {
            acc = acc.kronecker(&self.v);
        }
        acc
    }

    /// State encoding `rho -> V^(x)n rho V^(x)n^dag`.
    pub fn encode_state(&self, rho: &DenseOperator) -> Result<DenseOperator> {
        self.conjugate(rho, "encode_state")
    }

    /// Observable encoding, same conjugation.
    pub fn encode_obs(&self, obs: &DenseOperator) -> Result<DenseOperator> {
        self.conjugate(obs, "encode_obs")
    }

    fn conjugate(&self, a: &DenseOperator, context: &'static str) -> Result<DenseOperator> {
        let expected = 3usize.pow(self.n as u32);
        if a.dim() != expected {
            return Err(GadgetError::DimensionMismatch {
                context: match context {
                    "encode_state" => "encode_state input",
                    _ => "encode_obs input",
                },
                expected,
                got: a.dim(),
            });
        }
        let vp = self.isometry_power();
        Ok(DenseOperator::from_matrix(&vp * a.mat() * vp.adjoint()))
    }
}

/// Build the qutrit-number simulator: the encoding maps plus the encoded
/// Hamiltonian expressed as 2-local terms on qubit pairs `(2j, 2j+1)`.
pub fn qutrit_to_qubit_simulator(
    n: usize,
    v: CMatrix,
) -> Result<(QutritEncoding, LocalHamiltonian)> {
    let enc = QutritEncoding::new(n, v)?;
    check_dim_cap(4usize.pow(n as u32))?;
    let layout = SiteLayout::qubits(2 * n)?;
    let onsite = DenseOperator::diagonal(&[0.0, 1.0, 1.0]);
    let encoded_onsite =
        DenseOperator::from_matrix(&enc.v * onsite.mat() * enc.v.adjoint());
    let mut h = LocalHamiltonian::new(layout);
    for j in 0..n {
        h.push_term(LocalTerm::new(
            encoded_onsite.clone(),
            vec![2 * j, 2 * j + 1],
            format!("enc_n({j})"),
        )?)?;
    }
    Ok((enc, h))
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

fn default_coeff() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermJson {
    pub support: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pauli: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_coeff")]
    pub coeff: f64,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianJson {
    pub dims: Vec<usize>,
    pub terms: Vec<TermJson>,
}

impl LocalHamiltonian {
    pub fn to_json(&self) -> HamiltonianJson {
        let terms = self
            .terms
            .iter()
            .map(|t| match t.pauli_repr() {
                Some((letters, coeff)) => TermJson {
                    support: t.support.clone(),
                    pauli: Some(letters.to_string()),
                    matrix: None,
                    coeff,
                    label: t.label.clone(),
                },
                None => TermJson {
                    support: t.support.clone(),
                    pauli: None,
                    matrix: Some(
                        t.operator
                            .mat()
                            .row_iter()
                            .flat_map(|row| row.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
                            .collect(),
                    ),
                    coeff: 1.0,
                    label: t.label.clone(),
                },
            })
            .collect();
        HamiltonianJson {
            dims: self.layout.dims().to_vec(),
            terms,
        }
    }

    pub fn from_json(json: &HamiltonianJson) -> Result<Self> {
        let layout = SiteLayout::new(json.dims.clone()).map_err(|e| GadgetError::Schema {
            reason: format!("bad dims: {e}"),
        })?;
        let mut h = LocalHamiltonian::new(layout.clone());
        for (idx, tj) in json.terms.iter().enumerate() {
            let term = term_from_json(tj, &layout)
                .map_err(|e| GadgetError::Schema {
                    reason: format!("term {idx}: {e}"),
                })?;
            if tj.coeff == 0.0 {
                continue;
            }
            h.push_term(term)?;
        }
        Ok(h)
    }
}

fn term_from_json(tj: &TermJson, layout: &SiteLayout) -> Result<LocalTerm> {
    match (&tj.pauli, &tj.matrix) {
        (Some(_), Some(_)) => Err(GadgetError::Schema {
            reason: "term carries both pauli and matrix; ambiguous".into(),
        }),
        (None, None) => Err(GadgetError::Schema {
            reason: "term carries neither pauli nor matrix".into(),
        }),
        (Some(letters), None) => {
            if letters.len() != tj.support.len() {
                return Err(GadgetError::Schema {
                    reason: format!(
                        "pauli string length {} does not match support length {}",
                        letters.len(),
                        tj.support.len()
                    ),
                });
            }
            let n = layout.n_sites();
            let mut factors = Vec::new();
            for (c, &site) in letters.chars().zip(tj.support.iter()) {
                if layout.dim_of(site)? != 2 {
                    return Err(GadgetError::NonQubitSite {
                        site,
                        dim: layout.dim_of(site)?,
                    });
                }
                let p = Pauli::from_char(c).ok_or_else(|| GadgetError::Schema {
                    reason: format!("unknown Pauli letter {c:?}"),
                })?;
                factors.push((site, p));
            }
            let ps = PauliString::new(tj.coeff, n, &factors)?;
            LocalTerm::from_pauli(&ps, tj.label.clone())
        }
        (None, Some(flat)) => {
            let mut dim = 1usize;
            for &s in &tj.support {
                dim *= layout.dim_of(s)?;
            }
            if flat.len() != dim * dim {
                return Err(GadgetError::Schema {
                    reason: format!(
                        "matrix has {} entries, expected {} for dim {}",
                        flat.len(),
                        dim * dim,
                        dim
                    ),
                });
            }
            let mat = DMatrix::from_fn(dim, dim, |i, j| {
                let [re, im] = flat[i * dim + j];
                Complex64::new(re * tj.coeff, im * tj.coeff)
            });
            let dev = (&mat - mat.adjoint()).norm() / mat.norm().max(1e-300);
            if dev > HERMITICITY_RTOL {
                return Err(GadgetError::NonHermitian { deviation: dev });
            }
            LocalTerm::new(DenseOperator::from_matrix(mat), tj.support.clone(), tj.label.clone())
        }
    }
}
