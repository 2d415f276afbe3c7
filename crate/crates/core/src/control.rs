//! Coherent feedforward and feedback control of a cavity plant by a driven
//! qubit controller that radiates through a damped cavity `b`.
//!
//! The plant is `H_s = ω_a a†a`, `L_s = a`. The controller is a qubit with
//! `H_c = (Δ_q/2)σ_z + μ_d*σ₋ + μ_d σ₊` coupled to a cavity mode `b` by
//! `g_qb(bσ₊ + b†σ₋)`; `b` leaks at rate `γ_b` into the line that drives
//! the plant. When `γ_b ≫ g_qb` the controller can be eliminated:
//!
//! * feedforward: `H_1 = ω_a a†a + u_c*(t) a + u_c(t) a†` with
//!   `u_c(t) = −√(γ_a γ_b) g_qb ∫_0^t e^{−(iω_b + γ_b/2)(t−τ)} ⟨σ₋⟩(τ) dτ`;
//! * feedback: `H_2 = ω_a a†a + f(t) a†a` with
//!   `f(t) = 2 Re ∫_0^t γ*(s) e^{iω_a s} ds` for the loop correlation `γ`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{correlation, Branch, CorrelationKernel, CouplingKernel};
use crate::linalg::CMat;
use crate::network::{CascadeNetwork, NetworkNode};
use crate::operators::{annihilation, embed, embed_block, number, pauli_z, sigma_minus, sigma_plus, HilbertSpace};
use crate::solver::{self, Observable, SolveConfig};
use crate::{Operator, StateMatrix};

const I: Complex64 = Complex64::new(0.0, 1.0);
const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Minimum `γ_b / g_qb` for the eliminated-controller models.
pub const FAST_CONTROLLER_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Feedforward,
    Feedback,
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feedforward" => Ok(Self::Feedforward),
            "feedback" => Ok(Self::Feedback),
            other => Err(Error::InvalidConfig(format!("unknown topology '{other}' (expected feedforward or feedback)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerQubit {
    pub delta_q: f64,
    pub mu_d: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSetup {
    pub topology: Topology,
    pub omega_a: f64,
    pub gamma_a: f64,
    pub qubit: ControllerQubit,
    pub g_qb: f64,
    pub gamma_b: f64,
    pub omega_b: f64,
}

impl ControlSetup {
    pub fn new(
        topology: Topology,
        omega_a: f64,
        gamma_a: f64,
        qubit: ControllerQubit,
        g_qb: f64,
        gamma_b: f64,
        omega_b: f64,
    ) -> Result<Self> {
        let finite = [omega_a, gamma_a, qubit.delta_q, qubit.mu_d.re, qubit.mu_d.im, g_qb, gamma_b, omega_b];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("control parameters must be finite".into()));
        }
        for (name, v) in [("gamma_a", gamma_a), ("gamma_b", gamma_b)] {
            if v < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(Self { topology, omega_a, gamma_a, qubit, g_qb, gamma_b, omega_b })
    }

    /// Errors unless `γ_b ≥ 10·|g_qb|`.
    pub fn check_regime(&self) -> Result<()> {
        if self.gamma_b < FAST_CONTROLLER_RATIO * self.g_qb.abs() {
            return Err(Error::Regime(format!(
                "controller elimination needs gamma_b >= {FAST_CONTROLLER_RATIO}*g_qb; got gamma_b = {}, g_qb = {} (ratio {:.3})",
                self.gamma_b,
                self.g_qb,
                self.gamma_b / self.g_qb.abs()
            )));
        }
        Ok(())
    }

    /// `iω_b + γ_b/2`.
    pub fn controller_pole(&self) -> Complex64 {
        Complex64::new(self.gamma_b / 2.0, self.omega_b)
    }

    fn drive_prefactor(&self) -> f64 {
        -(self.gamma_a * self.gamma_b).sqrt() * self.g_qb
    }

    pub fn qubit_hamiltonian(&self) -> Operator {
        let q = &self.qubit;
        &pauli_z::<f64>().scale(Complex64::new(q.delta_q / 2.0, 0.0))
            + &(&sigma_minus::<f64>().scale(q.mu_d.conj()) + &sigma_plus::<f64>().scale(q.mu_d))
    }

    /// Controller Hamiltonian on `qubit ⊗ b`.
    pub fn controller_hamiltonian(&self, fock_b: usize) -> Result<Operator> {
        let space = HilbertSpace::new(vec![2, fock_b])?;
        let hq = embed(&self.qubit_hamiltonian(), 0, &space)?;
        let b = embed(&annihilation(fock_b)?, 1, &space)?;
        let nb = embed(&number(fock_b)?, 1, &space)?;
        let sm = embed(&sigma_minus(), 0, &space)?;
        let jc = &(&b * &sm.dagger()) + &(&b.dagger() * &sm);
        Ok(&(&hq + &nb.scale(Complex64::new(self.omega_b, 0.0))) + &jc.scale(Complex64::new(self.g_qb, 0.0)))
    }

    pub fn controller_node(&self, fock_b: usize) -> Result<NetworkNode> {
        let h = self.controller_hamiltonian(fock_b)?;
        let space = h.space().clone();
        let b = embed(&annihilation(fock_b)?, 1, &space)?;
        NetworkNode::new("controller", h, b, CouplingKernel::flat(self.gamma_b)?)
    }

    pub fn plant_node(&self, fock_a: usize) -> Result<NetworkNode> {
        let h = number(fock_a)?.scale(Complex64::new(self.omega_a, 0.0));
        NetworkNode::new("plant", h, annihilation(fock_a)?, CouplingKernel::flat(self.gamma_a)?)
    }

    /// Coupling kernel of the loop through the controller cavity: the
    /// plant sees `γ*(s) = γ_a γ_b e^{−(iω_b + γ_b/2)s}`.
    pub fn loop_kernel(&self) -> Result<CouplingKernel> {
        CouplingKernel::lorentzian((self.gamma_a * self.gamma_b).sqrt(), self.gamma_b, self.omega_b)
    }
}

/// `u_c(t)` for a mean qubit coherence `⟨σ₋⟩(τ)`, by adaptive quadrature.
pub fn control_signal(setup: &ControlSetup, sigma_minus_mean: impl Fn(f64) -> Complex64, t: f64) -> Complex64 {
    if t <= 0.0 {
        return C0;
    }
    let z = setup.controller_pole();
    let integrand = |tau: f64| (-z * (t - tau)).exp() * sigma_minus_mean(tau);
    crate::quad::integrate(integrand, 0.0, t, 1e-13) * setup.drive_prefactor()
}

/// Weights `(w_0, w_1)` with `∫_0^h e^{−λ(h−s)} x(s) ds = w_0 x(0) + w_1 x(h)`
/// for `x` linear on `[0, h]`.
fn linear_weights(lambda: Complex64, h: f64) -> (Complex64, Complex64) {
    let x = lambda * h;
    if x.norm() < 1e-6 {
        let w1 = h * (0.5 - x / 6.0 + x * x / 24.0);
        let w0 = h * (0.5 - x / 3.0 + x * x / 8.0);
        return (w0, w1);
    }
    let phi = (1.0 - (-x).exp()) / lambda;
    let w1 = (1.0 - phi / h) / lambda;
    (phi - w1, w1)
}

/// Solves `ẏ = −λ y + x(t)` on a uniform grid with `x` linear between
/// samples.
fn exponential_filter(lambda: Complex64, h: f64, y0: Complex64, x: &[Complex64]) -> Vec<Complex64> {
    let decay = (-lambda * h).exp();
    let (w0, w1) = linear_weights(lambda, h);
    let mut y = Vec::with_capacity(x.len());
    if x.is_empty() {
        return y;
    }
    y.push(y0);
    for n in 1..x.len() {
        let next = decay * y[n - 1] + w0 * x[n - 1] + w1 * x[n];
        y.push(next);
    }
    y
}

/// `u_c` on the grid `t_n = n·dt` from sampled coherences, exact for
/// piecewise-linear `⟨σ₋⟩`.
pub fn control_signal_on_grid(setup: &ControlSetup, dt: f64, sigma_minus_mean: &[Complex64]) -> Vec<Complex64> {
    let k = setup.drive_prefactor();
    exponential_filter(setup.controller_pole(), dt, C0, sigma_minus_mean).into_iter().map(|u| u * k).collect()
}

/// Linear interpolation of samples on `t_n = n·dt`, constant beyond the ends.
pub fn interpolate(dt: f64, samples: &[Complex64]) -> impl Fn(f64) -> Complex64 + '_ {
    move |t: f64| {
        if samples.is_empty() {
            return C0;
        }
        let x = (t / dt).max(0.0);
        let n = x.floor() as usize;
        if n + 1 >= samples.len() {
            return samples[samples.len() - 1];
        }
        let f = x - n as f64;
        samples[n] * (1.0 - f) + samples[n + 1] * f
    }
}

/// `⟨σ₋⟩(t)` of the free-running controller qubit, started in `|g⟩`.
pub fn qubit_coherence(setup: &ControlSetup, cfg: &SolveConfig) -> Result<Vec<Complex64>> {
    let space = HilbertSpace::qubits(1)?;
    let obs = Observable::Expectation { name: "sm".into(), op: sigma_minus() };
    let cfg = cfg.clone().with_observables(vec![obs]);
    let traj = solver::solve_lindblad(&setup.qubit_hamiltonian(), &[], &StateMatrix::ground(space), &cfg)?;
    traj.ensure_ok()?;
    Ok(traj.complex("sm").expect("observable requested").to_vec())
}

/// `⟨a⟩` of the plant under `ȧ = −(γ_a/2 + iω_a) a − i u(t)`.
pub fn plant_response(omega_a: f64, gamma_a: f64, dt: f64, drive: &[Complex64], a0: Complex64) -> Vec<Complex64> {
    let forcing: Vec<Complex64> = drive.iter().map(|u| -I * u).collect();
    exponential_filter(Complex64::new(gamma_a / 2.0, omega_a), dt, a0, &forcing)
}

/// Normal-ordered monomial `c · (a†)^m a^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub coeff: Complex64,
    pub creation: u32,
    pub annihilation: u32,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.creation + self.annihilation
    }
}

#[derive(Debug, Clone)]
enum ControlTerm {
    /// `u_c` on the grid `n·dt`.
    Drive { dt: f64, u: Vec<Complex64> },
    /// Loop correlation entering `f(t)`.
    Memory(CorrelationKernel),
}

/// Effective plant Hamiltonian `ω_a a†a + H_ctrl(t)` with plant decay
/// `γ_a D[a]`.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    pub omega_a: f64,
    pub gamma_a: f64,
    term: ControlTerm,
}

impl EffectiveHamiltonian {
    /// Feedforward Hamiltonian for a given drive sampled on `n·dt`.
    pub fn with_drive(omega_a: f64, gamma_a: f64, dt: f64, u: Vec<Complex64>) -> Self {
        Self { omega_a, gamma_a, term: ControlTerm::Drive { dt, u } }
    }

    /// Feedback Hamiltonian for a given loop correlation.
    pub fn with_memory(omega_a: f64, gamma_a: f64, corr: CorrelationKernel) -> Self {
        Self { omega_a, gamma_a, term: ControlTerm::Memory(corr) }
    }

    pub fn topology(&self) -> Topology {
        match self.term {
            ControlTerm::Drive { .. } => Topology::Feedforward,
            ControlTerm::Memory(_) => Topology::Feedback,
        }
    }

    /// `u_c(t)`, linearly interpolated; zero for feedback.
    pub fn drive(&self, t: f64) -> Complex64 {
        match &self.term {
            ControlTerm::Drive { dt, u } => interpolate(*dt, u)(t),
            ControlTerm::Memory(_) => C0,
        }
    }

    /// `f(t)`; zero for feedforward.
    pub fn frequency_shift(&self, t: f64) -> f64 {
        match &self.term {
            ControlTerm::Drive { .. } => 0.0,
            ControlTerm::Memory(corr) => 2.0 * corr.phase_integral(Branch::Negative, t, -self.omega_a).re,
        }
    }

    /// Control part of the Hamiltonian at `t`, as normal-ordered monomials.
    pub fn control_terms(&self, t: f64) -> Vec<Monomial> {
        match &self.term {
            ControlTerm::Drive { .. } => {
                let u = self.drive(t);
                vec![
                    Monomial { coeff: u.conj(), creation: 0, annihilation: 1 },
                    Monomial { coeff: u, creation: 1, annihilation: 0 },
                ]
            }
            ControlTerm::Memory(_) => {
                vec![Monomial { coeff: Complex64::new(self.frequency_shift(t), 0.0), creation: 1, annihilation: 1 }]
            }
        }
    }

    /// All monomials at `t`, free part first.
    pub fn terms(&self, t: f64) -> Vec<Monomial> {
        let mut out = vec![Monomial { coeff: Complex64::new(self.omega_a, 0.0), creation: 1, annihilation: 1 }];
        out.extend(self.control_terms(t));
        out
    }

    /// Polynomial degree of the control part in `a, a†`.
    pub fn control_degree(&self) -> u32 {
        self.control_terms(0.0).iter().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Truncated-Fock matrix of the full Hamiltonian at `t`.
    pub fn operator(&self, t: f64, fock: usize) -> Result<Operator> {
        let a = annihilation::<f64>(fock)?;
        let ad = a.dagger();
        let mut h = Operator::zero(a.space());
        for m in self.terms(t) {
            let mut p = Operator::identity(a.space());
            for _ in 0..m.creation {
                p = &p * &ad;
            }
            for _ in 0..m.annihilation {
                p = &p * &a;
            }
            h = &h + &p.scale(m.coeff);
        }
        Ok(h)
    }

    /// `−i[H(t), ρ] + γ_a D[a]ρ` on a Fock space of dimension `fock`.
    pub fn generator(&self, t: f64, rho: &CMat, fock: usize) -> Result<CMat> {
        let h = self.operator(t, fock)?;
        let a = annihilation::<f64>(fock)?;
        Ok(solver::lindblad_rhs(h.matrix(), &[(a.into_matrix(), self.gamma_a)], rho))
    }

    /// `⟨a⟩(t_n)` on `n·dt` from an initial amplitude `a0`.
    pub fn plant_mean(&self, dt: f64, steps: usize, a0: Complex64) -> Vec<Complex64> {
        let drive: Vec<Complex64> = (0..=steps).map(|n| self.drive(n as f64 * dt)).collect();
        match &self.term {
            ControlTerm::Drive { .. } => plant_response(self.omega_a, self.gamma_a, dt, &drive, a0),
            ControlTerm::Memory(_) => {
                // ȧ = −(γ_a/2 + i(ω_a + f(t))) a, integrated exactly in the phase
                let f: Vec<Complex64> = (0..=steps).map(|n| Complex64::new(self.frequency_shift(n as f64 * dt), 0.0)).collect();
                let phase = crate::quad::cumulative_trapezoid(&f, dt);
                (0..=steps)
                    .map(|n| {
                        let t = n as f64 * dt;
                        a0 * Complex64::new(-self.gamma_a / 2.0 * t, -self.omega_a * t).exp() * (-I * phase[n]).exp()
                    })
                    .collect()
            }
        }
    }
}

/// Eliminated-controller feedforward model on the grid of `cfg`.
pub fn effective_feedforward(setup: &ControlSetup, cfg: &SolveConfig) -> Result<EffectiveHamiltonian> {
    setup.check_regime()?;
    let sigma = qubit_coherence(setup, cfg)?;
    let u = control_signal_on_grid(setup, cfg.dt, &sigma);
    Ok(EffectiveHamiltonian::with_drive(setup.omega_a, setup.gamma_a, cfg.dt, u))
}

/// Eliminated-controller feedback model with the loop kernel of `setup`.
pub fn effective_feedback(setup: &ControlSetup) -> Result<EffectiveHamiltonian> {
    setup.check_regime()?;
    let k = setup.loop_kernel()?;
    Ok(EffectiveHamiltonian::with_memory(setup.omega_a, setup.gamma_a, correlation(&k, &k)?))
}

/// Controller (`qubit ⊗ b`) → plant (`a`) cascade on `[2, fock_b, fock_a]`.
pub fn feedforward_network(setup: &ControlSetup, fock_b: usize, fock_a: usize) -> Result<CascadeNetwork> {
    CascadeNetwork::cascade(vec![setup.controller_node(fock_b)?, setup.plant_node(fock_a)?])
}

/// Plant → controller → plant loop on `[2, fock_b, fock_a]`; the plant
/// operators appear in the first and last node, the Hamiltonian once.
pub fn feedback_network(setup: &ControlSetup, fock_b: usize, fock_a: usize) -> Result<CascadeNetwork> {
    let space = HilbertSpace::new(vec![2, fock_b, fock_a])?;
    let plant = setup.plant_node(fock_a)?;
    let ctrl = setup.controller_node(fock_b)?;
    let ha = embed(&plant.hamiltonian, 2, &space)?;
    let a = embed(&plant.coupling, 2, &space)?;
    let hc = embed_block(&ctrl.hamiltonian, 0, &space)?;
    let b = embed_block(&ctrl.coupling, 0, &space)?;
    let kernel = plant.kernel.clone();
    CascadeNetwork::from_embedded(
        space.clone(),
        vec![
            NetworkNode::new("plant", ha, a.clone(), kernel.clone())?,
            NetworkNode::new("controller", hc, b, ctrl.kernel)?,
            NetworkNode::new("plant_return", Operator::zero(&space), a, kernel)?,
        ],
    )
}

/// Full and eliminated-controller plant amplitudes on a common grid.
#[derive(Debug, Clone)]
pub struct ControlComparison {
    pub topology: Topology,
    pub times: Vec<f64>,
    pub full: Vec<Complex64>,
    pub effective: Vec<Complex64>,
}

impl ControlComparison {
    /// `‖full − effective‖₂ / ‖full‖₂` over the grid.
    pub fn relative_l2_error(&self) -> f64 {
        let num: f64 = self.full.iter().zip(&self.effective).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = self.full.iter().map(|x| x.norm_sqr()).sum();
        if den == 0.0 {
            if num == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (num / den).sqrt()
        }
    }
}

fn coherent_ket(fock: usize, alpha: Complex64) -> Vec<Complex64> {
    let mut ket = Vec::with_capacity(fock);
    let mut c = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..fock {
        if n > 0 {
            c = c * alpha / (n as f64).sqrt();
        }
        ket.push(c);
    }
    let norm: f64 = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    ket.into_iter().map(|z| z / norm).collect()
}

/// Runs the full three-mode model for `setup.topology` and the matching
/// eliminated-controller model. The qubit starts in `|g⟩`, `b` in vacuum
/// and the plant in the (truncated) coherent state `|a0⟩`.
pub fn compare(setup: &ControlSetup, cfg: &SolveConfig, fock_b: usize, fock_a: usize, a0: Complex64) -> Result<ControlComparison> {
    let network = match setup.topology {
        Topology::Feedforward => feedforward_network(setup, fock_b, fock_a)?,
        Topology::Feedback => feedback_network(setup, fock_b, fock_a)?,
    };
    let space = network.space().clone();
    let a = embed(&annihilation(fock_a)?, 2, &space)?;
    let mut ket = vec![C0; 2 * fock_b];
    ket[0] = Complex64::new(1.0, 0.0);
    let plant = coherent_ket(fock_a, a0);
    let joint: Vec<Complex64> = ket.iter().flat_map(|x| plant.iter().map(move |y| x * y)).collect();
    let rho0 = StateMatrix::pure(space, &joint)?;
    let full_cfg = cfg.clone().with_observables(vec![Observable::Expectation { name: "a".into(), op: a }]);
    let traj = solver::solve_nonmarkovian(&network, &rho0, &full_cfg)?;
    traj.ensure_ok()?;
    let full = traj.complex("a").expect("observable requested").to_vec();
    let eff = match setup.topology {
        Topology::Feedforward => effective_feedforward(setup, cfg)?,
        Topology::Feedback => effective_feedback(setup)?,
    };
    let steps = full.len() - 1;
    let a_init = rho0_mean(&plant);
    let effective = eff.plant_mean(cfg.dt, steps, a_init);
    let times = (0..=steps).map(|n| n as f64 * cfg.dt).collect();
    Ok(ControlComparison { topology: setup.topology, times, full, effective })
}

fn rho0_mean(ket: &[Complex64]) -> Complex64 {
    (1..ket.len()).map(|n| ket[n - 1].conj() * ket[n] * (n as f64).sqrt()).sum()
}
