//! Batch experiment runner: JSON configs in, deterministic CSV tables and
//! JSON slope summaries out.
//!
//! Every run writes a `#`-commented provenance header (tool version, kind,
//! seed, config hash) followed by comma-separated rows, plus a summary JSON
//! with measured slopes, their standard errors, and pass/fail against the
//! declared tolerances. The same config and seed always produce
//! byte-identical CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{GadgetError, Result};
use crate::gadgets::{
    self, bool_klocal_check, bool_proof_function, bool_reduce_r, bool_separation_bound,
    combine_low_energy_check, combine_parallel, energy_bound_check, exact_three_to_two,
    gse_compare, subdivision_gadget, three_to_two_gadget, verify_low_energy, verify_with_unitary,
    GadgetInstance, LowEnergyCombineCheck,
};
use crate::hamiltonians::pauli_chain;
use crate::lightcone::{log_error_tail_fit, window_sweep, ChainParams, WindowExperiment};
use crate::operators::{
    op_norm, pauli_embed, CVector, DenseOperator, Pauli, PauliString, SiteLayout,
};
use crate::zeno::{
    density_from_pure, pauli_zeno_spec, simulate_zeno, step_amplitudes, SimulationTask,
};
use num_complex::Complex64;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// Slope fitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub n_points: usize,
}

/// Ordinary least squares on `(log x, log y)`. Non-positive points are
/// filtered; fewer than 3 surviving points is an error.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(GadgetError::InvalidParameter {
            reason: "fit_slope needs equal-length inputs".into(),
        });
    }
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys.iter())
        .filter(|(&x, &y)| x > 0.0 && y > 1e-12)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(GadgetError::InvalidParameter {
            reason: format!("fit_slope needs >= 3 positive points, has {}", pts.len()),
        });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let var_x = sxx - sx * sx / n;
    let stderr = if pts.len() > 2 && var_x > 0.0 {
        (ss_res / (n - 2.0) / var_x).sqrt()
    } else {
        0.0
    };
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        n_points: pts.len(),
    })
}

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: String,
    #[serde(default)]
    pub parameters: serde_json::Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_path: Option<String>,
}

fn schema_err(e: impl std::fmt::Display) -> GadgetError {
    GadgetError::Schema {
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    start: f64,
    factor: f64,
    count: usize,
}

impl GridSpec {
    fn points(&self) -> Vec<f64> {
        (0..self.count)
            .map(|k| self.start * self.factor.powi(k as i32))
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainSpec {
    #[serde(default)]
    zz: f64,
    #[serde(default)]
    x: f64,
    #[serde(default)]
    periodic: bool,
}

/// Single-qubit Hermitian operator as a Pauli combination.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpSpec {
    #[serde(default)]
    z: f64,
    #[serde(default)]
    x: f64,
    #[serde(default)]
    y: f64,
    #[serde(default)]
    id: f64,
}

impl OpSpec {
    fn build(&self) -> DenseOperator {
        let m = Pauli::Z.matrix() * Complex64::new(self.z, 0.0)
            + Pauli::X.matrix() * Complex64::new(self.x, 0.0)
            + Pauli::Y.matrix() * Complex64::new(self.y, 0.0)
            + Pauli::I.matrix() * Complex64::new(self.id, 0.0);
        DenseOperator::from_matrix(m)
    }

    fn pauli_z() -> Self {
        OpSpec {
            z: 1.0,
            x: 0.0,
            y: 0.0,
            id: 0.0,
        }
    }
}

fn band_default_err0() -> [f64; 2] {
    [1.85, 2.15]
}
fn band_default_amp1() -> [f64; 2] {
    [1.35, 1.65]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZenoSweepParams {
    #[serde(default = "default_three")]
    n_sites: usize,
    /// Supports of the three commuting Z strings (single-site Z_0, Z_1, Z_2
    /// by default).
    #[serde(default)]
    a_sites: Option<Vec<usize>>,
    #[serde(default)]
    b_sites: Option<Vec<usize>>,
    #[serde(default)]
    c_sites: Option<Vec<usize>>,
    dt_grid: GridSpec,
    #[serde(default)]
    h_else: Option<ChainSpec>,
    #[serde(default = "band_default_err0")]
    err0_band: [f64; 2],
    #[serde(default = "band_default_amp1")]
    amp1_band: [f64; 2],
}

fn default_three() -> usize {
    3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZenoSimulateParams {
    #[serde(default = "default_three")]
    n_sites: usize,
    #[serde(default)]
    a_sites: Option<Vec<usize>>,
    #[serde(default)]
    b_sites: Option<Vec<usize>>,
    #[serde(default)]
    c_sites: Option<Vec<usize>>,
    delta_ts: Vec<f64>,
    t_max: f64,
    /// Site and Pauli letter of the (normalized) observable.
    obs_site: usize,
    #[serde(default = "default_x_letter")]
    obs_pauli: String,
    #[serde(default)]
    h_else: Option<ChainSpec>,
}

fn default_x_letter() -> String {
    "X".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GadgetSweepParams {
    gadget: String,
    #[serde(default = "OpSpec::pauli_z")]
    a: OpSpec,
    #[serde(default = "OpSpec::pauli_z")]
    b: OpSpec,
    #[serde(default = "OpSpec::pauli_z")]
    c: OpSpec,
    delta_grid: GridSpec,
    #[serde(default = "default_half")]
    check_fraction: f64,
    #[serde(default)]
    eps_band: Option<[f64; 2]>,
    #[serde(default)]
    eta_band: Option<[f64; 2]>,
}

fn default_half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GadgetVerifyParams {
    gadget: String,
    #[serde(default = "OpSpec::pauli_z")]
    a: OpSpec,
    #[serde(default = "OpSpec::pauli_z")]
    b: OpSpec,
    #[serde(default = "OpSpec::pauli_z")]
    c: OpSpec,
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default = "default_half")]
    check_fraction: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GadgetCombineParams {
    #[serde(default = "default_three")]
    n_sites: usize,
    /// Bonds carrying a Z (x) Z target term, one subdivision gadget each.
    bonds: Vec<[usize; 2]>,
    delta: f64,
    #[serde(default = "default_half")]
    check_fraction: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LightconeParams {
    n_full: usize,
    m_list: Vec<usize>,
    #[serde(default = "default_one")]
    zz: f64,
    g: f64,
    t: f64,
    #[serde(default)]
    obs_site: Option<usize>,
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoolFunParams {
    n: usize,
    k: usize,
    k_prime: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergyBoundParams {
    gadget: String,
    #[serde(default = "OpSpec::pauli_z")]
    a: OpSpec,
    #[serde(default = "OpSpec::pauli_z")]
    b: OpSpec,
    #[serde(default = "OpSpec::pauli_z")]
    c: OpSpec,
    delta_grid: GridSpec,
    k_prime: u32,
    #[serde(default = "default_one")]
    j: f64,
    #[serde(default = "default_half")]
    check_fraction: f64,
}

// ---------------------------------------------------------------------------
// Run artifacts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub csv: String,
    pub summary: serde_json::Value,
}

fn config_hash(config: &ExperimentConfig) -> String {
    // hash the effective kind/parameters/seed (out_path may differ per run)
    let canonical = json!({
        "kind": config.kind,
        "parameters": config.parameters,
        "seed": config.seed,
    });
    let mut hasher = Sha256::new();
    hasher.update(canonical.to_string().as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct CsvBuilder {
    text: String,
}

impl CsvBuilder {
    fn new(config: &ExperimentConfig, columns: &[&str]) -> Self {
        let mut text = String::new();
        text.push_str(&format!("# gadgetlab v{TOOL_VERSION}\n"));
        text.push_str(&format!("# kind = {}\n", config.kind));
        text.push_str(&format!("# seed = {}\n", config.seed));
        text.push_str(&format!("# config_sha256 = {}\n", config_hash(config)));
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    fn finish(self) -> String {
        self.text
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn in_band(x: f64, band: [f64; 2]) -> bool {
    x >= band[0] && x <= band[1]
}

// ---------------------------------------------------------------------------
// Experiment implementations
// ---------------------------------------------------------------------------

fn z_string_on(layout: &SiteLayout, sites: &[usize]) -> Result<PauliString> {
    let factors: Vec<(usize, Pauli)> = sites.iter().map(|&s| (s, Pauli::Z)).collect();
    PauliString::new(1.0, layout.n_sites(), &factors)
}

fn plus_state(dim: usize) -> CVector {
    CVector::from_element(dim, Complex64::new(1.0 / (dim as f64).sqrt(), 0.0))
}

fn zeno_strings(
    layout: &SiteLayout,
    a: &Option<Vec<usize>>,
    b: &Option<Vec<usize>>,
    c: &Option<Vec<usize>>,
) -> Result<(PauliString, PauliString, PauliString)> {
    let a = z_string_on(layout, a.as_deref().unwrap_or(&[0]))?;
    let b = z_string_on(layout, b.as_deref().unwrap_or(&[1]))?;
    let c = z_string_on(layout, c.as_deref().unwrap_or(&[2]))?;
    Ok((a, b, c))
}

fn run_zeno_sweep(config: &ExperimentConfig, jobs: usize) -> Result<RunArtifacts> {
    let p: ZenoSweepParams =
        serde_json::from_value(config.parameters.clone()).map_err(schema_err)?;
    let layout = SiteLayout::qubits(p.n_sites)?;
    let (a, b, c) = zeno_strings(&layout, &p.a_sites, &p.b_sites, &p.c_sites)?;
    let h_else = match &p.h_else {
        Some(spec) => Some(pauli_chain(p.n_sites, spec.zz, spec.x, spec.periodic)?),
        None => None,
    };
    let psi = plus_state(layout.total_dim());
    let dts = p.dt_grid.points();

    let compute = |dt: &f64| -> Result<crate::zeno::StepAmplitudes> {
        let spec = pauli_zeno_spec(&a, &b, &c, &layout, *dt)?;
        step_amplitudes(&spec, &psi, h_else.as_ref())
    };
    let results: Vec<crate::zeno::StepAmplitudes> = run_points(&dts, jobs, compute)?;

    let mut csv = CsvBuilder::new(
        config,
        &[
            "delta_t", "t", "err0", "amp1", "leak_prob", "obs_label", "obs_error", "n_sites",
            "seed",
        ],
    );
    for s in &results {
        csv.row(&[
            fmt(s.delta_t),
            fmt(s.delta_t),
            fmt(s.err0),
            fmt(s.amp1),
            String::new(),
            String::new(),
            String::new(),
            p.n_sites.to_string(),
            config.seed.to_string(),
        ]);
    }
    let err0: Vec<f64> = results.iter().map(|s| s.err0).collect();
    let amp1: Vec<f64> = results.iter().map(|s| s.amp1).collect();
    let err0_fit = fit_slope(&dts, &err0)?;
    let amp1_fit = fit_slope(&dts, &amp1)?;
    let summary = json!({
        "kind": "zeno-sweep",
        "err0_slope": err0_fit.slope,
        "err0_stderr": err0_fit.stderr,
        "err0_band": p.err0_band,
        "err0_pass": in_band(err0_fit.slope, p.err0_band),
        "amp1_slope": amp1_fit.slope,
        "amp1_stderr": amp1_fit.stderr,
        "amp1_band": p.amp1_band,
        "amp1_pass": in_band(amp1_fit.slope, p.amp1_band),
        "octaves": (dts[0] / dts[dts.len() - 1]).log2(),
    });
    Ok(RunArtifacts {
        csv: csv.finish(),
        summary,
    })
}

fn run_zeno_simulate(config: &ExperimentConfig, _jobs: usize) -> Result<RunArtifacts> {
    let p: ZenoSimulateParams =
        serde_json::from_value(config.parameters.clone()).map_err(schema_err)?;
    let layout = SiteLayout::qubits(p.n_sites)?;
    let (a, b, c) = zeno_strings(&layout, &p.a_sites, &p.b_sites, &p.c_sites)?;
    let h_else = match &p.h_else {
        Some(spec) => Some(pauli_chain(p.n_sites, spec.zz, spec.x, spec.periodic)?),
        None => None,
    };
    let letter = Pauli::from_char(p.obs_pauli.chars().next().unwrap_or('X')).ok_or_else(|| {
        GadgetError::Schema {
            reason: format!("unknown observable Pauli {:?}", p.obs_pauli),
        }
    })?;
    let obs = pauli_embed(
        &PauliString::single(1.0, p.n_sites, p.obs_site, letter)?,
        &layout,
    )?;
    let obs_label = format!("{}{}", p.obs_pauli.to_uppercase(), p.obs_site);
    let rho0 = density_from_pure(&plus_state(layout.total_dim()));
    let task = SimulationTask::new(
        vec![rho0.clone()],
        vec![(obs_label.clone(), obs)],
        p.t_max,
        0.0,
    )?;

    let mut csv = CsvBuilder::new(
        config,
        &[
            "delta_t", "t", "err0", "amp1", "leak_prob", "obs_label", "obs_error", "n_sites",
            "seed",
        ],
    );
    let mut final_errors = Vec::new();
    let mut final_leaks = Vec::new();
    for &dt in &p.delta_ts {
        let spec = pauli_zeno_spec(&a, &b, &c, &layout, dt)?;
        let traj = simulate_zeno(&spec, h_else.as_ref(), &rho0, &task)?;
        for pt in &traj {
            csv.row(&[
                fmt(dt),
                fmt(pt.t),
                String::new(),
                String::new(),
                fmt(pt.leak_prob),
                obs_label.clone(),
                fmt(pt.errors[0]),
                p.n_sites.to_string(),
                config.seed.to_string(),
            ]);
        }
        let last = traj.last().unwrap();
        final_errors.push(last.errors[0]);
        final_leaks.push(last.leak_prob);
    }
    let ratios: Vec<f64> = final_errors
        .windows(2)
        .map(|w| if w[1] > 0.0 { w[0] / w[1] } else { f64::NAN })
        .collect();
    let leak_fit = fit_slope(&p.delta_ts, &final_leaks).ok();
    let summary = json!({
        "kind": "zeno-simulate",
        "delta_ts": p.delta_ts,
        "final_obs_errors": final_errors,
        "halving_ratios": ratios,
        "final_leaks": final_leaks,
        "leak_slope": leak_fit.as_ref().map(|f| f.slope),
        "leak_stderr": leak_fit.as_ref().map(|f| f.stderr),
    });
    Ok(RunArtifacts {
        csv: csv.finish(),
        summary,
    })
}

fn build_gadget(
    name: &str,
    a: &DenseOperator,
    b: &DenseOperator,
    c: &DenseOperator,
    delta: f64,
) -> Result<GadgetInstance> {
    match name {
        "subdivision" => {
            let layout = SiteLayout::qubits(2)?;
            subdivision_gadget(&layout, 0, 1, a, b, delta)
        }
        "three-to-two" => {
            let layout = SiteLayout::qubits(3)?;
            three_to_two_gadget(&layout, [0, 1, 2], a, b, c, delta)
        }
        other => Err(GadgetError::Schema {
            reason: format!("unknown gadget kind {other:?}"),
        }),
    }
}

struct SweepPoint {
    delta: f64,
    eta: f64,
    eps: f64,
    h_prime_norm: f64,
}

fn sweep_point(p: &GadgetSweepParams, delta: f64) -> Result<SweepPoint> {
    let inst = build_gadget(&p.gadget, &p.a.build(), &p.b.build(), &p.c.build(), delta)?;
    let w = verify_low_energy(&inst, delta * p.check_fraction, None)?;
    Ok(SweepPoint {
        delta,
        eta: w.eta,
        eps: w.eps,
        h_prime_norm: op_norm(&inst.gadget.assemble()?),
    })
}

fn run_gadget_sweep(config: &ExperimentConfig, jobs: usize) -> Result<RunArtifacts> {
    let p: GadgetSweepParams =
        serde_json::from_value(config.parameters.clone()).map_err(schema_err)?;
    let deltas = p.delta_grid.points();
    let points: Vec<SweepPoint> = run_points(&deltas, jobs, |d| sweep_point(&p, *d))?;

    let mut csv = CsvBuilder::new(config, &["delta", "eta", "eps", "h_prime_norm", "seed"]);
    for pt in &points {
        csv.row(&[
            fmt(pt.delta),
            fmt(pt.eta),
            fmt(pt.eps),
            fmt(pt.h_prime_norm),
            config.seed.to_string(),
        ]);
    }
    let etas: Vec<f64> = points.iter().map(|p| p.eta).collect();
    let epss: Vec<f64> = points.iter().map(|p| p.eps).collect();
    let eta_fit = fit_slope(&deltas, &etas)?;
    let eps_fit = fit_slope(&deltas, &epss)?;
    let mut summary = json!({
        "kind": "gadget-sweep",
        "gadget": p.gadget,
        "eps_slope": eps_fit.slope,
        "eps_stderr": eps_fit.stderr,
        "eta_slope": eta_fit.slope,
        "eta_stderr": eta_fit.stderr,
    });
    if let Some(band) = p.eps_band {
        summary["eps_band"] = json!(band);
        summary["eps_pass"] = json!(in_band(eps_fit.slope, band));
    }
    if let Some(band) = p.eta_band {
        summary["eta_band"] = json!(band);
        summary["eta_pass"] = json!(in_band(eta_fit.slope, band));
    }
    Ok(RunArtifacts {
        csv: csv.finish(),
        summary,
    })
}

fn run_gadget_verify(config: &ExperimentConfig, _jobs: usize) -> Result<RunArtifacts> {
    let p: GadgetVerifyParams =
        serde_json::from_value(config.parameters.clone()).map_err(schema_err)?;
    let (a, b, c) = (p.a.build(), p.b.build(), p.c.build());
    let (inst, witness) = if p.gadget == "exact-three-to-two" {
        let ex = exact_three_to_two(&a, &b, &c)?;
        let w = verify_with_unitary(&ex.instance, Some(&ex.p_anc), &ex.u)?;
        let mut inst = ex.instance;
        inst.witness = Some(w.clone());
        (inst, w)
    } else {
        let delta = p.delta.ok_or_else(|| GadgetError::Schema {
            reason: "perturbative gadgets need a delta".into(),
        })?;
        let mut inst = build_gadget(&p.gadget, &a, &b, &c, delta)?;
        let w = verify_low_energy(&inst, delta * p.check_fraction, None)?;
        inst.witness = Some(w.clone());
        (inst, w)
    };
    let h_prime_norm = op_norm(&inst.gadget.assemble()?);
    let mut csv = CsvBuilder::new(config, &["delta", "eta", "eps", "h_prime_norm", "seed"]);
    csv.row(&[
        inst.delta.map(fmt).unwrap_or_default(),
        fmt(witness.eta),
        fmt(witness.eps),
        fmt(h_prime_norm),
        config.seed.to_string(),
    ]);
    let summary = serde_json::to_value(inst.to_json())?;
    Ok(RunArtifacts {
        csv: csv.finish(),
        summary,
    })
}

fn run_gadget_combine(config: &ExperimentConfig, _jobs: usize) -> Result<RunArtifacts> {
    let p: GadgetCombineParams =
        serde_json::from_value(config.parameters.clone()).map_err(schema_err)?;
    let layout = SiteLayout::qubits(p.n_sites)?;
    let z = DenseOperator::from_matrix(Pauli::Z.matrix());
    let mut instances = Vec::new();
    for bond in &p.bonds {
        let mut inst = subdivision_gadget(&layout, bond[0], bond[1], &z, &z, p.delta)?;
        let w = verify_low_energy(&inst, p.delta * p.check_fraction, None)?;
        inst.witness = Some(w);
        instances.push(inst);
    }
    let refs: Vec<&GadgetInstance> = instances.iter().collect();
    let combined = combine_parallel(&refs)?;
    let le = combine_low_energy_check(&combined, p.delta, p.delta * p.check_fraction)?;
    let gse = gse_compare(&combined.target, &combined.gadget)?;

    let mut csv = CsvBuilder::new(
        config,
        &[
            "delta",
            "eta_prime",
            "eps_prime",
            "eta_sum",
            "first_order_reference",
            "gse_diff",
            "gse_reference",
            "seed",
        ],
    );
    csv.row(&[
        fmt(p.delta),
        fmt(combined.eta_prime),
        fmt(combined.eps_prime),
        fmt(combined.stats.eta_sum),
        fmt(combined.stats.first_order_reference),
        fmt(gse),
        fmt(combined.stats.reference_eps),
        config.seed.to_string(),
    ]);
    let le_json = match le {
        LowEnergyCombineCheck::ConditionViolated { required, delta } => json!({
            "status": "condition_violated", "required": required, "delta": delta,
        }),
        LowEnergyCombineCheck::RankMismatch { expected, got } => json!({
            "status": "rank_mismatch", "expected": expected, "got": got,
        }),
        LowEnergyCombineCheck::Verified {
            delta_check,
            eta_prime,
            eps_prime,
        } => json!({
            "status": "verified", "delta_check": delta_check,
            "eta_prime": eta_prime, "eps_prime": eps_prime, "rank_match": true,
        }),
    };
    let summary = json!({
        "kind": "gadget-combine",
        "eta_prime": combined.eta_prime,
        "eps_prime": combined.eps_prime,
        "eps_budget_4x": 4.0 * combined.stats.first_order_reference,
        "eps_pass": combined.eps_prime <= 4.0 * combined.stats.first_order_reference,
        "eta_sum": combined.stats.eta_sum,
        "eta_pass": combined.eta_prime <= combined.stats.eta_sum + 1e-9,
        "gse_diff": gse,
        "gse_budget_5x": 5.0 * combined.stats.reference_eps,
        "gse_pass": gse <= 5.0 * combined.stats.reference_eps,
        "low_energy": le_json,
    });
    Ok(RunArtifacts {
        csv: csv.finish(),
        summary,
    })
}

fn run_lightcone(config: &ExperimentConfig, jobs: usize) -> Result<RunArtifacts> {
    let p: LightconeParams =
        serde_json::from_value(config.parameters.clone()).map_err(schema_err)?;
    let exp = WindowExperiment {
        chain: ChainParams { zz: p.zz, g: p.g },
        n_full: p.n_full,
        m_list: p.m_list.clone(),
        observable: DenseOperator::from_matrix(Pauli::Z.matrix()),
        obs_site: p.obs_site.unwrap_or(p.n_full / 2),
        t: p.t,
    };
    // the reference solve dominates; window points could parallelize but the
    // jobs knob matters little here
    let _ = jobs;
    let sweep = window_sweep(&exp)?;
    let mut csv = CsvBuilder::new(
        config,
        &["m", "value", "reference", "abs_error", "t", "g", "seed"],
    );
    for pt in &sweep.points {
        csv.row(&[
            pt.m.to_string(),
            fmt(pt.value),
            fmt(pt.reference),
            fmt(pt.abs_error),
            fmt(p.t),
            fmt(p.g),
            config.seed.to_string(),
        ]);
    }
    let first = sweep.points.first().map(|pt| pt.abs_error).unwrap_or(0.0);
    let last = sweep.points.last().map(|pt| pt.abs_error).unwrap_or(0.0);
    let tail_n = sweep.points.len().min(4);
    let tail = &sweep.points[sweep.points.len() - tail_n..];
    let fit = log_error_tail_fit(tail);
    let summary = json!({
        "kind": "lightcone-sweep",
        "reference": sweep.reference,
        "reference_drift": sweep.reference_drift,
        "decay_factor": if last > 0.0 { first / last } else { f64::INFINITY },
        "tail_slope": fit.as_ref().ok().map(|f| f.0),
        "tail_r_squared": fit.as_ref().ok().map(|f| f.2),
        "tail_pass": fit.as_ref().ok().map(|f| f.0 < 0.0 && f.2 >= 0.9),
    });
    Ok(RunArtifacts {
        csv: csv.finish(),
        summary,
    })
}

fn run_boolfun(config: &ExperimentConfig, _jobs: usize) -> Result<RunArtifacts> {
    let p: BoolFunParams =
        serde_json::from_value(config.parameters.clone()).map_err(schema_err)?;
    let f = bool_proof_function(p.n, p.k, p.k_prime)?;
    let bound = bool_separation_bound(&f, p.k_prime)?;
    let k_local = bool_klocal_check(&f, p.k)?;
    let mut degrees = vec![f.walsh_degree()];
    let mut g = f.clone();
    for _ in 0..p.k_prime {
        g = bool_reduce_r(&g)?;
        degrees.push(g.walsh_degree());
    }
    let mut csv = CsvBuilder::new(config, &["x", "f", "seed"]);
    for (x, v) in f.table().iter().enumerate() {
        csv.row(&[
            format!("{x:0width$b}", width = p.n),
            fmt(*v),
            config.seed.to_string(),
        ]);
    }
    let summary = json!({
        "kind": "boolfun",
        "n": p.n, "k": p.k, "k_prime": p.k_prime,
        "separation_bound": bound,
        "expected_bound": 0.5f64.powi(p.k_prime as i32),
        "k_local": k_local,
        "walsh_degrees_under_reduction": degrees,
    });
    Ok(RunArtifacts {
        csv: csv.finish(),
        summary,
    })
}

fn run_energy_bound(config: &ExperimentConfig, jobs: usize) -> Result<RunArtifacts> {
    let p: EnergyBoundParams =
        serde_json::from_value(config.parameters.clone()).map_err(schema_err)?;
    let deltas = p.delta_grid.points();
    struct Row {
        delta: f64,
        h_prime_norm: f64,
        eta: f64,
        eps: f64,
        chk: gadgets::EnergyBoundCheck,
    }
    let rows: Vec<Row> = run_points(&deltas, jobs, |&delta| {
        let inst = build_gadget(&p.gadget, &p.a.build(), &p.b.build(), &p.c.build(), delta)?;
        let w = verify_low_energy(&inst, delta * p.check_fraction, None)?;
        let h_prime_norm = op_norm(&inst.gadget.assemble()?);
        let chk = energy_bound_check(h_prime_norm, p.j, p.k_prime, w.eta, w.eps)?;
        Ok(Row {
            delta,
            h_prime_norm,
            eta: w.eta,
            eps: w.eps,
            chk,
        })
    })?;
    let mut csv = CsvBuilder::new(
        config,
        &[
            "delta",
            "h_prime_norm",
            "eta",
            "eps",
            "rhs_proof",
            "rhs_statement",
            "holds_proof",
            "holds_statement",
            "seed",
        ],
    );
    for r in &rows {
        csv.row(&[
            fmt(r.delta),
            fmt(r.h_prime_norm),
            fmt(r.eta),
            fmt(r.eps),
            fmt(r.chk.rhs_proof),
            fmt(r.chk.rhs_statement),
            r.chk.holds_proof.to_string(),
            r.chk.holds_statement.to_string(),
            config.seed.to_string(),
        ]);
    }
    let violations = rows.iter().filter(|r| !r.chk.holds_proof).count();
    let summary = json!({
        "kind": "energy-bound",
        "gadget": p.gadget,
        "k_prime": p.k_prime,
        "j": p.j,
        "points": rows.len(),
        "proof_form_violations": violations,
        "zero_violations": violations == 0,
    });
    Ok(RunArtifacts {
        csv: csv.finish(),
        summary,
    })
}

/// Evaluate independent sweep points, optionally on a rayon pool; results
/// keep the input order regardless of completion order.
fn run_points<T: Send, X: Sync>(
    points: &[X],
    jobs: usize,
    f: impl Fn(&X) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if jobs <= 1 {
        points.iter().map(&f).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| GadgetError::InvalidParameter {
                reason: format!("thread pool: {e}"),
            })?;
        pool.install(|| points.par_iter().map(&f).collect())
    }
}

// ---------------------------------------------------------------------------
// Dispatch and file handling
// ---------------------------------------------------------------------------

pub const KINDS: &[&str] = &[
    "gadget-verify",
    "gadget-sweep",
    "gadget-combine",
    "zeno-sweep",
    "zeno-simulate",
    "lightcone-sweep",
    "boolfun",
    "energy-bound",
];

/// Run an experiment from a parsed config; pure in-memory artifacts.
pub fn run(config: &ExperimentConfig, jobs: usize) -> Result<RunArtifacts> {
    match config.kind.as_str() {
        "zeno-sweep" => run_zeno_sweep(config, jobs),
        "zeno-simulate" => run_zeno_simulate(config, jobs),
        "gadget-sweep" => run_gadget_sweep(config, jobs),
        "gadget-verify" => run_gadget_verify(config, jobs),
        "gadget-combine" => run_gadget_combine(config, jobs),
        "lightcone-sweep" => run_lightcone(config, jobs),
        "boolfun" => run_boolfun(config, jobs),
        "energy-bound" => run_energy_bound(config, jobs),
        other => Err(GadgetError::Schema {
            reason: format!("unknown kind {other:?}; expected one of {KINDS:?}"),
        }),
    }
}

/// Parse a config file, apply flag overrides, and check the verb matches.
pub fn load_config(
    verb: &str,
    text: &str,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<ExperimentConfig> {
    let mut config: ExperimentConfig = serde_json::from_str(text).map_err(schema_err)?;
    if config.kind != verb {
        return Err(GadgetError::Schema {
            reason: format!(
                "config kind {:?} does not match command {verb:?}",
                config.kind
            ),
        });
    }
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if let Some(out) = out_override {
        config.out_path = Some(out.to_string_lossy().into_owned());
    }
    Ok(config)
}

fn summary_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    name.push_str(".summary.json");
    csv_path.with_file_name(name)
}

/// Write artifacts to `out_path` (CSV) and the summary JSON alongside it.
pub fn write_artifacts(artifacts: &RunArtifacts, csv_path: &Path) -> Result<()> {
    if let Some(parent) = csv_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::fs::File::create(csv_path)?;
    f.write_all(artifacts.csv.as_bytes())?;
    let mut s = std::fs::File::create(summary_path(csv_path))?;
    s.write_all(serde_json::to_string_pretty(&artifacts.summary)?.as_bytes())?;
    s.write_all(b"\n")?;
    Ok(())
}

#[derive(Parser, Debug)]
#[command(
    name = "gadgetlab",
    version,
    about = "Hamiltonian gadget experiments: seeded sweeps with CSV/JSON output"
)]
struct Cli {
    /// Experiment kind (gadget-verify | gadget-sweep | gadget-combine |
    /// zeno-sweep | zeno-simulate | lightcone-sweep | boolfun | energy-bound)
    kind: String,
    /// JSON config file
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path (overrides the config's out_path)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel workers for independent sweep points
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Seed override
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code_for(err: &GadgetError) -> i32 {
    match err {
        GadgetError::Schema { .. } | GadgetError::Json(_) => 2,
        GadgetError::DimensionCap { .. } => 3,
        GadgetError::AmbiguousCut { .. } => 4,
        _ => 1,
    }
}

fn emit_error(err: &GadgetError) -> i32 {
    let code = exit_code_for(err);
    let kind = match code {
        2 => "schema",
        3 => "dimension",
        4 => "ambiguity",
        _ => "other",
    };
    let payload = json!({
        "error": err.to_string(),
        "kind": kind,
        "exit": code,
    });
    eprintln!("{payload}");
    code
}

/// Entry point for the `gadgetlab` binary; returns the process exit code.
pub fn run_main() -> i32 {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return emit_error(&GadgetError::Io(e)),
    };
    let config = match load_config(&cli.kind, &text, cli.seed, cli.out.as_deref()) {
        Ok(c) => c,
        Err(e) => return emit_error(&e),
    };
    let artifacts = match run(&config, cli.jobs.max(1)) {
        Ok(a) => a,
        Err(e) => return emit_error(&e),
    };
    let out = config
        .out_path
        .clone()
        .unwrap_or_else(|| format!("{}.csv", config.kind));
    if let Err(e) = write_artifacts(&artifacts, Path::new(&out)) {
        return emit_error(&e);
    }
    println!("wrote {out}");
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_slope_exact_square_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let fit = fit_slope(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!(fit.stderr < 1e-12);
    }

    #[test]
    fn fit_slope_scaled_power_law() {
        let xs = [1.0f64, 3.0, 9.0, 27.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(1.5)).collect();
        let fit = fit_slope(&xs, &ys).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-12);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fit_slope_noisy_within_two_stderr() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..12).map(|k| 2.0f64.powi(k)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x.powf(1.3) * (1.0 + 0.05 * (rng.random::<f64>() - 0.5)))
            .collect();
        let fit = fit_slope(&xs, &ys).unwrap();
        assert!(
            (fit.slope - 1.3).abs() <= 2.0 * fit.stderr + 0.02,
            "slope {} stderr {}",
            fit.slope,
            fit.stderr
        );
    }

    #[test]
    fn fit_slope_filters_and_errors() {
        let xs = [1.0, 2.0, 4.0];
        let ys = [1.0, 0.0, -3.0];
        assert!(fit_slope(&xs, &ys).is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let text = r#"{"kind":"boolfun","parameters":{},"seed":1,"bogus":2}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }

    #[test]
    fn config_kind_mismatch_is_schema_error() {
        let text = r#"{"kind":"boolfun","parameters":{"n":3,"k":3,"k_prime":2}}"#;
        assert!(matches!(
            load_config("zeno-sweep", text, None, None),
            Err(GadgetError::Schema { .. })
        ));
    }

    #[test]
    fn boolfun_run_summary() {
        let config = ExperimentConfig {
            kind: "boolfun".into(),
            parameters: serde_json::json!({"n": 3, "k": 3, "k_prime": 2}),
            seed: 7,
            out_path: None,
        };
        let art = run(&config, 1).unwrap();
        assert_eq!(art.summary["separation_bound"], 0.25);
        assert_eq!(art.summary["k_local"], true);
        assert!(art.csv.contains("# seed = 7"));
        assert!(art.csv.lines().count() > 8);
    }

    #[test]
    fn unknown_parameter_rejected_per_kind() {
        let config = ExperimentConfig {
            kind: "boolfun".into(),
            parameters: serde_json::json!({"n": 3, "k": 3, "k_prime": 2, "zzz": 1}),
            seed: 0,
            out_path: None,
        };
        assert!(matches!(run(&config, 1), Err(GadgetError::Schema { .. })));
    }

    #[test]
    fn gadget_sweep_deterministic_and_parallel_identical() {
        let config = ExperimentConfig {
            kind: "gadget-sweep".into(),
            parameters: serde_json::json!({
                "gadget": "subdivision",
                "delta_grid": {"start": 100.0, "factor": 10.0, "count": 4},
            }),
            seed: 3,
            out_path: None,
        };
        let a = run(&config, 1).unwrap();
        let b = run(&config, 1).unwrap();
        assert_eq!(a.csv, b.csv);
        let c = run(&config, 3).unwrap();
        assert_eq!(a.csv, c.csv, "jobs must not change output bytes");
    }

    #[test]
    fn zeno_sweep_summary_slopes() {
        let config = ExperimentConfig {
            kind: "zeno-sweep".into(),
            parameters: serde_json::json!({
                "dt_grid": {"start": 0.0625, "factor": 0.5, "count": 5},
            }),
            seed: 1,
            out_path: None,
        };
        let art = run(&config, 1).unwrap();
        assert_eq!(art.summary["err0_pass"], true);
        assert_eq!(art.summary["amp1_pass"], true);
    }
}
