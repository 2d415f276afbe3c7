//! Fixed-step integrators: Lindblad reference, the full time-nonlocal network
//! equation and its first-Markov (time-local) reduction.
//!
//! All three use Heun's predictor-corrector. The memory integral is a
//! trapezoid sum over the stored history on the same grid, so the scheme is
//! second order overall.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::linalg::{self, CMat};
use crate::models;
use crate::network::{CascadeNetwork, History, MemoryPlan};
use crate::operators::{HilbertSpace, Operator, StateMatrix};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest number of steps a run may take.
pub const MAX_STEPS: f64 = 1e7;
/// Trace drift beyond which a run is flagged as failed.
pub const TRACE_TOL: f64 = 1e-6;
/// Hermiticity deviation beyond which a run is flagged as failed.
pub const HERMITICITY_TOL: f64 = 1e-8;
/// Largest admitted `dt·‖H‖`.
pub const MAX_PHASE_PER_STEP: f64 = 0.5;
/// Relative correlation magnitude defining the default memory horizon.
pub const HORIZON_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoryPolicy {
    /// Keep every state and integrate the memory over all of `[0, t]`.
    Full,
    /// Keep only states within the memory horizon.
    #[default]
    Truncate,
}

/// Scalar quantities recorded at every grid point.
#[derive(Debug, Clone)]
pub enum Observable {
    /// Probability of `level` on subsystem `site`.
    Population { site: usize, level: usize },
    /// `⟨op⟩`, complex.
    Expectation { name: String, op: Operator },
    /// Matrix element `ρ_ij`, complex.
    Coherence { i: usize, j: usize },
    /// Two-qubit concurrence.
    Concurrence,
    /// Smallest eigenvalue of `ρ`.
    MinEigenvalue,
    Purity,
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Self::Population { site, level } => format!("pop_{site}_{level}"),
            Self::Expectation { name, .. } => name.clone(),
            Self::Coherence { i, j } => format!("coh_{i}_{j}"),
            Self::Concurrence => "concurrence".into(),
            Self::MinEigenvalue => "min_eig".into(),
            Self::Purity => "purity".into(),
        }
    }

    fn is_complex(&self) -> bool {
        matches!(self, Self::Expectation { .. } | Self::Coherence { .. })
    }

    fn validate(&self, space: &HilbertSpace) -> Result<()> {
        match self {
            Self::Population { site, level } => {
                let dims = space.dims();
                if *site >= dims.len() {
                    return Err(Error::SiteOutOfRange { site: *site, len: dims.len() });
                }
                if *level >= dims[*site] {
                    return Err(Error::InvalidConfig(format!("level {level} out of range on site {site}")));
                }
            }
            Self::Expectation { op, .. } if op.space() != space => {
                return Err(Error::SpaceMismatch { left: space.dims().to_vec(), right: op.space().dims().to_vec() });
            }
            Self::Coherence { i, j } if *i >= space.dim() || *j >= space.dim() => {
                return Err(Error::InvalidConfig(format!("coherence ({i}, {j}) outside dimension {}", space.dim())));
            }
            Self::Concurrence if space.dims() != [2, 2] => {
                return Err(Error::InvalidConfig("concurrence needs a two-qubit space".into()));
            }
            _ => {}
        }
        Ok(())
    }

    fn eval(&self, state: &StateMatrix) -> Complex64 {
        let rho = state.matrix();
        match self {
            Self::Population { site, level } => Complex64::new(state.population(*site, *level).unwrap_or(f64::NAN), 0.0),
            Self::Expectation { op, .. } => linalg::trace(&rho.dot(op.matrix())),
            Self::Coherence { i, j } => rho[[*i, *j]],
            Self::Concurrence => Complex64::new(models::concurrence(state).unwrap_or(f64::NAN), 0.0),
            Self::MinEigenvalue => Complex64::new(state.min_eigenvalue(), 0.0),
            Self::Purity => Complex64::new(state.purity(), 0.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub t_end: f64,
    pub dt: f64,
    pub history_policy: HistoryPolicy,
    /// `None` uses the lag at which every correlation falls below
    /// [`HORIZON_REL`] of its peak.
    pub memory_horizon: Option<f64>,
    /// Store every `stride`-th state; observables are always dense.
    pub stride: usize,
    pub observables: Vec<Observable>,
    /// Check state invariants and abort on violation.
    pub check_invariants: bool,
}

impl SolveConfig {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self {
            t_end,
            dt,
            history_policy: HistoryPolicy::default(),
            memory_horizon: None,
            stride: 1,
            observables: Vec::new(),
            check_invariants: true,
        }
    }

    pub fn with_observables(mut self, obs: Vec<Observable>) -> Self {
        self.observables = obs;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn with_history(mut self, policy: HistoryPolicy) -> Self {
        self.history_policy = policy;
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate_basic(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidConfig(format!("t_end = {} must be positive", self.t_end)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if self.t_end / self.dt > MAX_STEPS {
            return Err(Error::InvalidConfig(format!("t_end / dt = {:.3e} exceeds {MAX_STEPS:e} steps", self.t_end / self.dt)));
        }
        Ok(())
    }

    /// Largest step that resolves the network's memory and oscillations.
    pub fn max_dt(network: &CascadeNetwork) -> Option<f64> {
        let mut scale = f64::INFINITY;
        let rate = network.max_decay_rate();
        if rate > 0.0 {
            scale = scale.min(1.0 / rate);
        }
        let w = network.max_frequency();
        if w > 0.0 {
            scale = scale.min(2.0 * std::f64::consts::PI / w);
        }
        scale.is_finite().then_some(scale / 20.0)
    }

    /// Rejects steps with `dt·‖H‖ > 0.5` for the largest system
    /// Hamiltonian norm on `[0, t_end]`.
    pub fn check_step(&self, hamiltonian_norm: f64) -> Result<()> {
        if self.dt * hamiltonian_norm > MAX_PHASE_PER_STEP {
            return Err(Error::InvalidConfig(format!(
                "dt·max|H| = {:.3e} exceeds {MAX_PHASE_PER_STEP}; use dt <= {:.4e}",
                self.dt * hamiltonian_norm,
                MAX_PHASE_PER_STEP / hamiltonian_norm
            )));
        }
        Ok(())
    }

    pub fn validate_for(&self, network: &CascadeNetwork) -> Result<()> {
        self.validate_basic()?;
        let norm = [0.0, self.t_end]
            .iter()
            .map(|&t| network.system_hamiltonian(t).spectral_norm())
            .fold(0.0, f64::max);
        let resolve = Self::max_dt(network).unwrap_or(f64::INFINITY);
        let suggested = resolve.min(MAX_PHASE_PER_STEP / norm);
        if self.dt * norm > MAX_PHASE_PER_STEP {
            return Err(Error::InvalidConfig(format!(
                "dt·max|H| = {:.3e} exceeds {MAX_PHASE_PER_STEP}; use dt <= {suggested:.4e}",
                self.dt * norm
            )));
        }
        if self.dt > resolve * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "dt = {} does not resolve the network time scales; use dt <= {suggested:.4e}",
                self.dt
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum SeriesData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub data: SeriesData,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    space: HilbertSpace,
    times: Vec<f64>,
    states: Vec<(f64, StateMatrix)>,
    series: Vec<Series>,
    max_trace_error: f64,
    max_hermiticity_error: f64,
    min_eigenvalue: f64,
    failure: Option<(f64, String)>,
}

impl Trajectory {
    fn new(space: HilbertSpace, observables: &[Observable]) -> Self {
        let series = observables
            .iter()
            .map(|o| Series {
                name: o.name(),
                data: if o.is_complex() { SeriesData::Complex(vec![]) } else { SeriesData::Real(vec![]) },
            })
            .collect();
        Self {
            space,
            times: vec![],
            states: vec![],
            series,
            max_trace_error: 0.0,
            max_hermiticity_error: 0.0,
            min_eigenvalue: f64::INFINITY,
            failure: None,
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    /// Every grid point reached.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Stored (possibly strided) states; the last grid point is always kept.
    pub fn states(&self) -> &[(f64, StateMatrix)] {
        &self.states
    }

    pub fn final_state(&self) -> &StateMatrix {
        &self.states.last().expect("a trajectory holds at least its initial state").1
    }

    pub fn series(&self) -> &[Series] {
        &self.series
    }

    pub fn real(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|s| s.name == name).and_then(|s| match &s.data {
            SeriesData::Real(v) => Some(v.as_slice()),
            SeriesData::Complex(_) => None,
        })
    }

    pub fn complex(&self, name: &str) -> Option<&[Complex64]> {
        self.series.iter().find(|s| s.name == name).and_then(|s| match &s.data {
            SeriesData::Complex(v) => Some(v.as_slice()),
            SeriesData::Real(_) => None,
        })
    }

    pub fn max_trace_error(&self) -> f64 {
        self.max_trace_error
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        self.max_hermiticity_error
    }

    /// Smallest eigenvalue seen at any monitored grid point.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn failure(&self) -> Option<(f64, &str)> {
        self.failure.as_ref().map(|(t, s)| (*t, s.as_str()))
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }

    /// Converts a failed run into an error.
    pub fn ensure_ok(&self) -> Result<&Self> {
        match &self.failure {
            None => Ok(self),
            Some((t, what)) => Err(Error::InvariantViolation { t: *t, what: what.clone() }),
        }
    }

    fn record(&mut self, t: f64, rho: &CMat, observables: &[Observable], store: bool, check: bool, eig: bool) {
        let trace_err = (linalg::trace(rho) - 1.0).norm();
        let herm_err = linalg::hermiticity_deviation(rho);
        self.max_trace_error = self.max_trace_error.max(trace_err);
        self.max_hermiticity_error = self.max_hermiticity_error.max(herm_err);
        let state = StateMatrix::from_raw(self.space.clone(), rho.clone());
        if eig || store {
            self.min_eigenvalue = self.min_eigenvalue.min(state.min_eigenvalue());
        }
        self.times.push(t);
        for (o, s) in observables.iter().zip(self.series.iter_mut()) {
            let v = o.eval(&state);
            match &mut s.data {
                SeriesData::Real(xs) => xs.push(v.re),
                SeriesData::Complex(zs) => zs.push(v),
            }
        }
        if store {
            self.states.push((t, state));
        }
        if check && self.failure.is_none() {
            if !trace_err.is_finite() || trace_err > TRACE_TOL {
                self.failure = Some((t, format!("trace drifted by {trace_err:.3e}")));
            } else if herm_err > HERMITICITY_TOL {
                self.failure = Some((t, format!("Hermiticity deviation {herm_err:.3e}")));
            }
        }
    }

    /// CSV with a `t` column (scaled by `time_scale`) followed by one column
    /// per real series and `_re`/`_im` columns per complex series.
    pub fn write_csv<W: Write>(&self, mut w: W, time_scale: f64) -> Result<()> {
        let mut header = vec!["t".to_string()];
        for s in &self.series {
            match s.data {
                SeriesData::Real(_) => header.push(s.name.clone()),
                SeriesData::Complex(_) => {
                    header.push(format!("{}_re", s.name));
                    header.push(format!("{}_im", s.name));
                }
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_num(t * time_scale)];
            for s in &self.series {
                match &s.data {
                    SeriesData::Real(v) => row.push(fmt_num(v[k])),
                    SeriesData::Complex(v) => {
                        row.push(fmt_num(v[k].re));
                        row.push(fmt_num(v[k].im));
                    }
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Binary dump of the stored states: `u64` dimension, `u64` record count,
    /// then per record an `f64` time followed by the row-major matrix as
    /// `(re, im)` `f64` pairs, all little-endian.
    pub fn write_states_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.space.dim() as u64;
        w.write_all(&d.to_le_bytes())?;
        w.write_all(&(self.states.len() as u64).to_le_bytes())?;
        for (t, s) in &self.states {
            w.write_all(&t.to_le_bytes())?;
            for z in s.matrix().iter() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Reads a dump written by [`Trajectory::write_states_binary`].
pub fn read_states_binary(bytes: &[u8]) -> Result<Vec<(f64, CMat)>> {
    let mut pos = 0usize;
    let mut next = || -> Result<[u8; 8]> {
        let chunk = bytes.get(pos..pos + 8).ok_or_else(|| Error::Parse("truncated state dump".into()))?;
        pos += 8;
        Ok(chunk.try_into().expect("eight bytes"))
    };
    let d = u64::from_le_bytes(next()?) as usize;
    let count = u64::from_le_bytes(next()?) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let t = f64::from_le_bytes(next()?);
        let mut m = linalg::zeros::<f64>(d);
        for z in m.iter_mut() {
            let re = f64::from_le_bytes(next()?);
            let im = f64::from_le_bytes(next()?);
            *z = Complex64::new(re, im);
        }
        out.push((t, m));
    }
    Ok(out)
}

fn check_observables(space: &HilbertSpace, cfg: &SolveConfig) -> Result<()> {
    cfg.observables.iter().try_for_each(|o| o.validate(space))
}

/// Shared stepping loop. `step(n, ρ_n)` returns `ρ_{n+1}`.
fn run(space: &HilbertSpace, rho0: &CMat, cfg: &SolveConfig, mut step: impl FnMut(usize, &CMat) -> CMat) -> Trajectory {
    let steps = cfg.steps();
    let eig_every_step = space.dim() <= 16;
    let mut traj = Trajectory::new(space.clone(), &cfg.observables);
    traj.record(0.0, rho0, &cfg.observables, true, cfg.check_invariants, true);
    let mut rho = rho0.clone();
    for n in 0..steps {
        if traj.failure.is_some() {
            break;
        }
        rho = step(n, &rho);
        let t = (n + 1) as f64 * cfg.dt;
        let store = (n + 1) % cfg.stride == 0 || n + 1 == steps;
        traj.record(t, &rho, &cfg.observables, store, cfg.check_invariants, eig_every_step);
    }
    if traj.states.last().map(|(t, _)| *t) != traj.times.last().copied() {
        let t = *traj.times.last().expect("initial time recorded");
        traj.states.push((t, StateMatrix::from_raw(space.clone(), rho)));
    }
    traj
}

/// Heun step for a time-local generator.
fn heun(f: &impl Fn(f64, &CMat) -> CMat, t: f64, dt: f64, rho: &CMat) -> CMat {
    let k1 = f(t, rho);
    let pred = rho + &k1.mapv(|z| z * dt);
    let k2 = f(t + dt, &pred);
    rho + &(k1 + k2).mapv(|z| z * (0.5 * dt))
}

/// Integrates `ρ̇ = f(t, ρ)` with Heun's method on the configured grid.
pub fn integrate_time_local(
    space: &HilbertSpace,
    rho0: &StateMatrix,
    cfg: &SolveConfig,
    f: impl Fn(f64, &CMat) -> CMat,
) -> Result<Trajectory> {
    cfg.validate_basic()?;
    if rho0.space() != space {
        return Err(Error::SpaceMismatch { left: space.dims().to_vec(), right: rho0.space().dims().to_vec() });
    }
    check_observables(space, cfg)?;
    Ok(run(space, rho0.matrix(), cfg, |n, rho| heun(&f, n as f64 * cfg.dt, cfg.dt, rho)))
}

/// `−i[H, ρ] + Σ_k γ_k D[L_k]ρ`.
pub fn lindblad_rhs(h: &CMat, dissipators: &[(CMat, f64)], rho: &CMat) -> CMat {
    let mut out = (h.dot(rho) - rho.dot(h)).mapv(|z| -I * z);
    for (l, rate) in dissipators {
        if *rate == 0.0 {
            continue;
        }
        let ld = linalg::dagger(l);
        let ldl = ld.dot(l);
        let d = l.dot(rho).dot(&ld) - (ldl.dot(rho) + rho.dot(&ldl)).mapv(|z| z * 0.5);
        out = out + d.mapv(|z| z * *rate);
    }
    out
}

pub fn solve_lindblad(h: &Operator, dissipators: &[(Operator, f64)], rho0: &StateMatrix, cfg: &SolveConfig) -> Result<Trajectory> {
    let dev = h.hermiticity_deviation();
    if dev > 1e-10 {
        return Err(Error::NotHermitian { deviation: dev, context: Some("Hamiltonian".into()) });
    }
    cfg.check_step(h.spectral_norm())?;
    let mut ds = Vec::with_capacity(dissipators.len());
    for (l, rate) in dissipators {
        if *rate < 0.0 {
            return Err(Error::NegativeRate(*rate));
        }
        if l.space() != h.space() {
            return Err(Error::SpaceMismatch { left: h.space().dims().to_vec(), right: l.space().dims().to_vec() });
        }
        ds.push((l.matrix().clone(), *rate));
    }
    let hm = h.matrix().clone();
    integrate_time_local(h.space(), rho0, cfg, |_, rho| lindblad_rhs(&hm, &ds, rho))
}

fn check_network_state(network: &CascadeNetwork, rho0: &StateMatrix) -> Result<()> {
    if rho0.space() != network.space() {
        return Err(Error::SpaceMismatch { left: network.space().dims().to_vec(), right: rho0.space().dims().to_vec() });
    }
    Ok(())
}

/// Lags kept by the memory sum under the configured policy.
pub fn memory_lags(network: &CascadeNetwork, cfg: &SolveConfig) -> usize {
    let steps = cfg.steps();
    match cfg.history_policy {
        HistoryPolicy::Full => steps,
        HistoryPolicy::Truncate => {
            let horizon = cfg.memory_horizon.unwrap_or_else(|| network.memory_horizon(HORIZON_REL));
            if horizon.is_finite() {
                ((horizon / cfg.dt).ceil() as usize).min(steps)
            } else {
                steps
            }
        }
    }
}

/// Integrates the time-nonlocal network master equation.
pub fn solve_nonmarkovian(network: &CascadeNetwork, rho0: &StateMatrix, cfg: &SolveConfig) -> Result<Trajectory> {
    cfg.validate_for(network)?;
    check_network_state(network, rho0)?;
    check_observables(network.space(), cfg)?;
    let lags = if network.has_memory() { memory_lags(network, cfg) } else { 0 };
    let plan = MemoryPlan::new(network, cfg.dt, lags);
    let mut history = History::new(cfg.dt, Some(lags + 1))?;
    history.push(rho0.matrix().clone());
    let dt = cfg.dt;
    let mut error = None;
    let traj = run(network.space(), rho0.matrix(), cfg, |n, rho| {
        let t = n as f64 * dt;
        let k1 = match network.generator_with_plan(t, &history, &plan) {
            Ok(k) => k,
            Err(e) => {
                error.get_or_insert(e);
                return rho.clone();
            }
        };
        let pred = rho + &k1.mapv(|z| z * dt);
        history.push(pred);
        let k2 = match network.generator_with_plan(t + dt, &history, &plan) {
            Ok(k) => k,
            Err(e) => {
                error.get_or_insert(e);
                return rho.clone();
            }
        };
        let next = rho + &(k1 + k2).mapv(|z| z * (0.5 * dt));
        history.replace_latest(next.clone());
        next
    });
    match error {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

/// Integrates the network equation with `ρ(τ) → ρ(t)` in the memory term.
pub fn solve_first_markov(network: &CascadeNetwork, rho0: &StateMatrix, cfg: &SolveConfig) -> Result<Trajectory> {
    cfg.validate_for(network)?;
    check_network_state(network, rho0)?;
    integrate_time_local(network.space(), rho0, cfg, |t, rho| network.first_markov_generator(t, rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::CouplingKernel;
    use crate::network::NetworkNode;
    use crate::operators::{embed, pauli_x, pauli_z, sigma_minus};
    use crate::scalar::cplx;

    fn qubit() -> HilbertSpace {
        HilbertSpace::qubits(1).unwrap()
    }

    #[test]
    fn lindblad_decay_is_exponential() {
        let gamma = 0.8;
        let cfg = SolveConfig::new(1.0 / gamma, 1e-3).with_observables(vec![Observable::Population { site: 0, level: 1 }]);
        let rho0 = StateMatrix::top(qubit());
        let tr = solve_lindblad(&Operator::zero(&qubit()), &[(sigma_minus(), gamma)], &rho0, &cfg).unwrap();
        let p = tr.real("pop_0_1").unwrap();
        assert!((p.last().unwrap() - (-1.0f64).exp()).abs() < 1e-6);
        assert!(tr.is_ok());
    }

    #[test]
    fn lindblad_rotation_preserves_norm() {
        let w = 2.0;
        let h = pauli_z::<f64>().scale(cplx(w / 2.0, 0.0));
        let plus = StateMatrix::pure(qubit(), &[cplx(1.0, 0.0), cplx(1.0, 0.0)]).unwrap();
        let cfg = SolveConfig::new(3.0, 1e-3).with_observables(vec![Observable::Expectation { name: "sx".into(), op: pauli_x() }]);
        let tr = solve_lindblad(&h, &[], &plus, &cfg).unwrap();
        let sx = tr.complex("sx").unwrap();
        for (t, v) in tr.times().iter().zip(sx) {
            assert!((v.re - (w * t).cos()).abs() < 1e-5);
        }
        assert!((tr.final_state().purity() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn flat_network_matches_lindblad_solver() {
        let (g1, g2) = (0.6, 0.9);
        let node = |w: f64, g: f64| {
            NetworkNode::new("q", pauli_z().scale(cplx(w / 2.0, 0.0)), sigma_minus(), CouplingKernel::flat(g).unwrap()).unwrap()
        };
        let net = CascadeNetwork::cascade(vec![node(0.3, g1), node(0.7, g2)]).unwrap();
        let space = net.space().clone();
        let l1 = embed(&sigma_minus(), 0, &space).unwrap();
        let l2 = embed(&sigma_minus(), 1, &space).unwrap();
        let hc = (&(&l1.dagger() * &l2) - &(&l1 * &l2.dagger())).scale(cplx(0.0, (g1 * g2).sqrt() / 2.0));
        let h = &net.free_hamiltonian() + &hc;
        let l = &l1.scale(cplx(g1.sqrt(), 0.0)) + &l2.scale(cplx(g2.sqrt(), 0.0));
        let rho0 = StateMatrix::basis(space, 2).unwrap();
        let cfg = SolveConfig::new(4.0, 0.01);
        let a = solve_lindblad(&h, &[(l, 1.0)], &rho0, &cfg).unwrap();
        let b = solve_nonmarkovian(&net, &rho0, &cfg).unwrap();
        for ((_, x), (_, y)) in a.states().iter().zip(b.states()) {
            assert!(x.trace_distance(y).unwrap() < 1e-6);
        }
    }

    #[test]
    fn zero_kernels_keep_the_state() {
        let node = NetworkNode::new("q", Operator::zero(&qubit()), sigma_minus(), CouplingKernel::zero()).unwrap();
        let net = CascadeNetwork::cascade(vec![node]).unwrap();
        let rho0 = StateMatrix::pure(qubit(), &[cplx(0.6, 0.0), cplx(0.0, 0.8)]).unwrap();
        let tr = solve_nonmarkovian(&net, &rho0, &SolveConfig::new(2.0, 0.1)).unwrap();
        assert_eq!(tr.final_state().matrix(), rho0.matrix());
    }

    #[test]
    fn weak_coupling_full_solution_approaches_first_markov() {
        let k = CouplingKernel::lorentzian(0.05, 1.0, 0.0).unwrap();
        let node = NetworkNode::new("q", Operator::zero(&qubit()), sigma_minus(), k).unwrap();
        let net = CascadeNetwork::cascade(vec![node]).unwrap();
        let rho0 = StateMatrix::top(qubit());
        let cfg = SolveConfig::new(10.0, 0.02);
        let full = solve_nonmarkovian(&net, &rho0, &cfg).unwrap();
        let fm = solve_first_markov(&net, &rho0, &cfg).unwrap();
        for ((_, x), (_, y)) in full.states().iter().zip(fm.states()) {
            assert!(x.trace_distance(y).unwrap() < 1e-3);
        }
    }

    #[test]
    fn truncated_and_full_history_agree() {
        let k = CouplingKernel::lorentzian(0.3, 2.0, 0.0).unwrap();
        let node = NetworkNode::new("q", Operator::zero(&qubit()), sigma_minus(), k).unwrap();
        let net = CascadeNetwork::cascade(vec![node]).unwrap();
        let rho0 = StateMatrix::top(qubit());
        let cfg = SolveConfig::new(20.0, 0.01);
        let a = solve_nonmarkovian(&net, &rho0, &cfg).unwrap();
        let b = solve_nonmarkovian(&net, &rho0, &cfg.clone().with_history(HistoryPolicy::Full)).unwrap();
        assert!(memory_lags(&net, &cfg) < cfg.steps());
        assert!(a.final_state().trace_distance(b.final_state()).unwrap() < 1e-6);
    }

    #[test]
    fn config_validation() {
        let k = CouplingKernel::lorentzian(0.3, 2.0, 0.0).unwrap();
        let node = NetworkNode::new("q", Operator::zero(&qubit()), sigma_minus(), k).unwrap();
        let net = CascadeNetwork::cascade(vec![node]).unwrap();
        let rho0 = StateMatrix::top(qubit());
        assert!(matches!(solve_nonmarkovian(&net, &rho0, &SolveConfig::new(1.0, 0.5)), Err(Error::InvalidConfig(_))));
        assert!(matches!(solve_nonmarkovian(&net, &rho0, &SolveConfig::new(1e8, 1e-2)), Err(Error::InvalidConfig(_))));
        assert!(matches!(solve_nonmarkovian(&net, &rho0, &SolveConfig::new(-1.0, 1e-2)), Err(Error::InvalidConfig(_))));
        let bad = solve_lindblad(&Operator::zero(&qubit()), &[(sigma_minus(), -1.0)], &rho0, &SolveConfig::new(1.0, 0.1));
        assert!(matches!(bad, Err(Error::NegativeRate(_))));
    }

    #[test]
    fn invariant_violation_is_reported() {
        // a non-trace-preserving generator drifts the trace
        let rho0 = StateMatrix::top(qubit());
        let cfg = SolveConfig::new(1.0, 0.01);
        let tr = integrate_time_local(&qubit(), &rho0, &cfg, |_, rho| rho.mapv(|z| -z)).unwrap();
        let (t, what) = tr.failure().unwrap();
        assert!(t < 0.1 && what.contains("trace"));
        assert!(matches!(tr.ensure_ok(), Err(Error::InvariantViolation { .. })));
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let cfg = SolveConfig::new(0.3, 0.1)
            .with_observables(vec![Observable::Population { site: 0, level: 1 }, Observable::Coherence { i: 0, j: 1 }]);
        let rho0 = StateMatrix::top(qubit());
        let tr = solve_lindblad(&Operator::zero(&qubit()), &[(sigma_minus(), 1.0)], &rho0, &cfg).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, 1.0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,pop_0_1,coh_0_1_re,coh_0_1_im");
        assert_eq!(text.lines().count(), 5);
        assert!(!text.contains('\r'));
        let mut bin = Vec::new();
        tr.write_states_binary(&mut bin).unwrap();
        let back = read_states_binary(&bin).unwrap();
        assert_eq!(back.len(), tr.states().len());
        assert_eq!(&back[3].1, tr.states()[3].1.matrix());
        assert!((back[3].0 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn coarse_step_is_rejected_with_a_suggestion() {
        let h = pauli_z::<f64>().scale(Complex64::new(10.0, 0.0));
        let rho0 = StateMatrix::ground(qubit());
        let err = solve_lindblad(&h, &[], &rho0, &SolveConfig::new(1.0, 0.1)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("use dt <= 5.0000e-2"), "{msg}");
        assert!(solve_lindblad(&h, &[], &rho0, &SolveConfig::new(1.0, 0.05)).is_ok());
    }
}
