//! JSON run configuration (schema version 1).
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "nodes": [{
//!     "label": "q1", "dims": [2],
//!     "hamiltonian": [{"coeff": 0.5, "ops": [{"op": "sigma_z", "site": 0}]}],
//!     "coupling": [{"ops": [{"op": "sigma_minus"}]}],
//!     "kernel": {"type": "lorentzian", "g": 0.01, "gamma": 0.1, "omega_c": 0.0}
//!   }],
//!   "initial_state": "ground",
//!   "solver": {"method": "nonmarkovian", "dt": 0.05, "t_end": 40.0},
//!   "observables": ["concurrence", {"population": {"site": 0, "level": 1}}],
//!   "output": {"csv": "out.csv"}
//! }
//! ```
//!
//! Operators are sums of terms `coeff · op_1 · op_2 ⋯`, with sites local to
//! the node. Complex numbers are `x` or `[re, im]`; matrices are nested
//! arrays of complex numbers.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use ndarray::Array2;
use num_complex::Complex64;
use serde::Deserialize;

use nmqnet::kernels::CouplingKernel;
use nmqnet::network::{CascadeNetwork, NetworkNode};
use nmqnet::operators::{self as ops, HilbertSpace};
use nmqnet::solver::{HistoryPolicy, Observable, SolveConfig};
use nmqnet::{models, Operator, StateMatrix};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Complex {
    Real(f64),
    Pair([f64; 2]),
}

impl Complex {
    pub fn value(self) -> Complex64 {
        match self {
            Self::Real(x) => Complex64::new(x, 0.0),
            Self::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

impl Default for Complex {
    fn default() -> Self {
        Self::Real(1.0)
    }
}

pub type MatrixLiteral = Vec<Vec<Complex>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub nodes: Vec<NodeSpec>,
    pub initial_state: StateSpec,
    pub solver: SolverSpec,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub label: String,
    pub dims: Vec<usize>,
    #[serde(default)]
    pub hamiltonian: Vec<TermSpec>,
    pub coupling: Vec<TermSpec>,
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    #[serde(default)]
    pub coeff: Complex,
    pub ops: Vec<FactorSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub op: String,
    /// Site within the node; a matrix literal without a site spans the node.
    pub site: Option<usize>,
    pub matrix: Option<MatrixLiteral>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Flat { gamma: f64 },
    Lorentzian { g: f64, gamma: f64, omega_c: f64 },
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Ground,
    Excited,
    BellTriplet,
    BellSinglet,
    MaximallyMixed,
    /// Level per site.
    Product(Vec<usize>),
    Fock { site: usize, n: usize },
    Ket(Vec<Complex>),
    Matrix(MatrixLiteral),
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lindblad,
    Nonmarkovian,
    FirstMarkov,
}

#[derive(Debug, Clone, Copy, Deserialize, Default, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum HistorySpec {
    Full,
    #[default]
    Truncate,
}

fn default_stride() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub method: Method,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub history: HistorySpec,
    pub memory_horizon: Option<f64>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_true")]
    pub check_invariants: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteLevel {
    pub site: usize,
    pub level: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Element {
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectationSpec {
    pub name: String,
    /// Terms on the joint space; sites are global.
    pub terms: Vec<TermSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    Concurrence,
    MinEigenvalue,
    Purity,
    Population(SiteLevel),
    Coherence(Element),
    Expectation(ExpectationSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub csv: Option<PathBuf>,
    /// Binary state dump.
    pub states: Option<PathBuf>,
    #[serde(default = "default_time_scale")]
    pub time_scale: f64,
}

fn default_time_scale() -> f64 {
    1.0
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { csv: None, states: None, time_scale: 1.0 }
    }
}

/// Parses and version-checks a configuration document.
pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
    let value: serde_json::Value = serde_json::from_str(text).context("config is not valid JSON")?;
    if value.get("schema_version").is_none() {
        bail!("missing schema_version (expected {SCHEMA_VERSION})");
    }
    let cfg: RunConfig = serde_json::from_value(value).context("invalid config")?;
    if cfg.schema_version != SCHEMA_VERSION {
        bail!("unsupported schema_version {} (expected {SCHEMA_VERSION})", cfg.schema_version);
    }
    Ok(cfg)
}

pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text)
}

pub fn matrix(lit: &MatrixLiteral) -> anyhow::Result<Array2<Complex64>> {
    let n = lit.len();
    if n == 0 || lit.iter().any(|row| row.len() != n) {
        bail!("matrix literal must be square and non-empty");
    }
    Ok(Array2::from_shape_fn((n, n), |(i, j)| lit[i][j].value()))
}

fn named(op: &str, dim: usize) -> anyhow::Result<Operator> {
    let qubit_only = |o: Operator| {
        if dim == 2 {
            Ok(o)
        } else {
            Err(anyhow!("operator '{op}' needs a two-level site, got dimension {dim}"))
        }
    };
    Ok(match op {
        "sigma_x" => qubit_only(ops::pauli_x())?,
        "sigma_y" => qubit_only(ops::pauli_y())?,
        "sigma_z" => qubit_only(ops::pauli_z())?,
        "sigma_minus" => qubit_only(ops::sigma_minus())?,
        "sigma_plus" => qubit_only(ops::sigma_plus())?,
        "annihilation" => ops::annihilation(dim)?,
        "creation" => ops::creation(dim)?,
        "number" => ops::number(dim)?,
        "identity" => Operator::identity(&HilbertSpace::new(vec![dim])?),
        other => bail!("unknown operator '{other}'"),
    })
}

fn factor(f: &FactorSpec, space: &HilbertSpace) -> anyhow::Result<Operator> {
    match (&f.matrix, f.op.as_str()) {
        (Some(lit), "matrix") => {
            let m = matrix(lit)?;
            match f.site {
                None => Ok(Operator::new(space.clone(), m)?),
                Some(site) => {
                    let dim = *space.dims().get(site).ok_or_else(|| anyhow!("site {site} out of range"))?;
                    Ok(ops::embed(&Operator::new(HilbertSpace::new(vec![dim])?, m)?, site, space)?)
                }
            }
        }
        (Some(_), other) => bail!("a matrix literal needs op \"matrix\", got '{other}'"),
        (None, "matrix") => bail!("op \"matrix\" needs a matrix field"),
        (None, name) => {
            let site = f.site.unwrap_or(0);
            let dim = *space.dims().get(site).ok_or_else(|| anyhow!("site {site} out of range for dims {:?}", space.dims()))?;
            Ok(ops::embed(&named(name, dim)?, site, space)?)
        }
    }
}

pub fn operator(terms: &[TermSpec], space: &HilbertSpace) -> anyhow::Result<Operator> {
    let mut total = Operator::zero(space);
    for t in terms {
        let mut p = Operator::identity(space);
        for f in &t.ops {
            p = &p * &factor(f, space)?;
        }
        total = &total + &p.scale(t.coeff.value());
    }
    Ok(total)
}

pub fn kernel(spec: &KernelSpec, base: &Path) -> anyhow::Result<CouplingKernel> {
    Ok(match spec {
        KernelSpec::Flat { gamma } => CouplingKernel::flat(*gamma)?,
        KernelSpec::Lorentzian { g, gamma, omega_c } => CouplingKernel::lorentzian(*g, *gamma, *omega_c)?,
        KernelSpec::Tabulated { path } => {
            let p = if path.is_absolute() { path.clone() } else { base.join(path) };
            CouplingKernel::from_csv_path(&p).with_context(|| format!("loading kernel {}", p.display()))?
        }
    })
}

/// Builds the nodes, checking dimensions and Hermiticity.
pub fn nodes(cfg: &RunConfig, base: &Path) -> anyhow::Result<Vec<NetworkNode>> {
    if cfg.nodes.is_empty() {
        bail!("config has no nodes");
    }
    cfg.nodes
        .iter()
        .map(|n| {
            let space = HilbertSpace::new(n.dims.clone()).with_context(|| format!("node '{}'", n.label))?;
            let h = operator(&n.hamiltonian, &space).with_context(|| format!("Hamiltonian of node '{}'", n.label))?;
            let l = operator(&n.coupling, &space).with_context(|| format!("coupling of node '{}'", n.label))?;
            let k = kernel(&n.kernel, base).with_context(|| format!("kernel of node '{}'", n.label))?;
            Ok(NetworkNode::new(n.label.clone(), h, l, k)?)
        })
        .collect()
}

pub fn network(cfg: &RunConfig, base: &Path) -> anyhow::Result<CascadeNetwork> {
    Ok(CascadeNetwork::cascade(nodes(cfg, base)?)?)
}

pub fn initial_state(spec: &StateSpec, space: &HilbertSpace) -> anyhow::Result<StateMatrix> {
    let two_qubits = || -> anyhow::Result<()> {
        if space.dims() != [2, 2] {
            bail!("Bell states need two qubits, got dims {:?}", space.dims());
        }
        Ok(())
    };
    Ok(match spec {
        StateSpec::Ground => StateMatrix::ground(space.clone()),
        StateSpec::Excited => StateMatrix::top(space.clone()),
        StateSpec::MaximallyMixed => StateMatrix::maximally_mixed(space.clone()),
        StateSpec::BellTriplet => {
            two_qubits()?;
            models::bell_triplet()
        }
        StateSpec::BellSinglet => {
            two_qubits()?;
            models::bell_singlet()
        }
        StateSpec::Product(levels) => StateMatrix::basis(space.clone(), basis_index(space, levels)?)?,
        StateSpec::Fock { site, n } => {
            let mut levels = vec![0; space.len()];
            *levels.get_mut(*site).ok_or_else(|| anyhow!("site {site} out of range"))? = *n;
            StateMatrix::basis(space.clone(), basis_index(space, &levels)?)?
        }
        StateSpec::Ket(amps) => {
            let ket: Vec<Complex64> = amps.iter().map(|c| c.value()).collect();
            StateMatrix::pure(space.clone(), &ket)?
        }
        StateSpec::Matrix(lit) => StateMatrix::new(space.clone(), matrix(lit)?)?,
    })
}

fn basis_index(space: &HilbertSpace, levels: &[usize]) -> anyhow::Result<usize> {
    if levels.len() != space.len() {
        bail!("expected {} levels, got {}", space.len(), levels.len());
    }
    let mut index = 0;
    for (site, (&l, &d)) in levels.iter().zip(space.dims()).enumerate() {
        if l >= d {
            bail!("level {l} out of range on site {site} (dimension {d})");
        }
        index = index * d + l;
    }
    Ok(index)
}

pub fn observables(specs: &[ObservableSpec], space: &HilbertSpace) -> anyhow::Result<Vec<Observable>> {
    specs
        .iter()
        .map(|o| {
            Ok(match o {
                ObservableSpec::Concurrence => Observable::Concurrence,
                ObservableSpec::MinEigenvalue => Observable::MinEigenvalue,
                ObservableSpec::Purity => Observable::Purity,
                ObservableSpec::Population(p) => Observable::Population { site: p.site, level: p.level },
                ObservableSpec::Coherence(e) => Observable::Coherence { i: e.i, j: e.j },
                ObservableSpec::Expectation(e) => {
                    Observable::Expectation { name: e.name.clone(), op: operator(&e.terms, space)? }
                }
            })
        })
        .collect()
}

pub fn solve_config(spec: &SolverSpec, obs: Vec<Observable>) -> SolveConfig {
    let mut cfg = SolveConfig::new(spec.t_end, spec.dt)
        .with_observables(obs)
        .with_stride(spec.stride.max(1))
        .with_history(match spec.history {
            HistorySpec::Full => HistoryPolicy::Full,
            HistorySpec::Truncate => HistoryPolicy::Truncate,
        });
    cfg.memory_horizon = spec.memory_horizon;
    cfg.check_invariants = spec.check_invariants;
    cfg
}
