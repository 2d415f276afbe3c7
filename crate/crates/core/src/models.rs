//! Two qubits cascaded through Lorentzian (cavity-filtered) noise, and the
//! concurrence used to track their entanglement.
//!
//! Each qubit is a node `H = (Δ_q/2)σ_z`, `L = σ₋` with the Lorentzian kernel
//! `{g, γ, ω_c = 0}` in the frame rotating at the filter frequency. The
//! network coefficients map onto the closed forms
//!
//! ```text
//! α(t) = i g² (e^{iΔ_q t} − e^{−γt/2}) / (γ/2 + iΔ_q) = i e^{iΔ_q t} h_12(t)
//! β(s) = g² e^{−γs/2 + iΔ_q s}                         = m_12(s)*
//! Γ(t) = (2g²/γ)(1 − e^{−γt/2})                        (Δ_q = 0)
//! ```
//!
//! At `Δ_q = 0` the first-Markov generator is
//! `−i[H', ρ] + 2Γ(t) D[J₋]ρ` with `H' = −Γ(t)(iσ₋⁽¹⁾σ₊⁽²⁾ + h.c.)`, i.e.
//! `2Γ(t)` times the Markovian cascade generator at unit rate. The state
//! therefore depends on time only through `x(t) = 2∫_0^t Γ`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::CouplingKernel;
use crate::linalg::{self, CMat};
use crate::network::{CascadeNetwork, NetworkNode};
use crate::operators::{pauli_y, pauli_z, sigma_minus, HilbertSpace, Operator, StateMatrix};
use crate::scalar::cplx;
use crate::solver::{self, Observable, SolveConfig, Trajectory};

/// Default time unit, in nanoseconds.
pub const TAU_NS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitLorentzModel {
    pub delta_q: f64,
    pub g: f64,
    pub gamma: f64,
    /// Length of one time unit in nanoseconds (output only).
    pub tau_unit: f64,
}

impl TwoQubitLorentzModel {
    pub fn new(delta_q: f64, g: f64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidKernel(format!("bandwidth γ = {gamma} must be positive")));
        }
        if !(g >= 0.0) {
            return Err(Error::InvalidKernel(format!("coupling g = {g} must be non-negative")));
        }
        if !delta_q.is_finite() {
            return Err(Error::InvalidKernel("detuning must be finite".into()));
        }
        Ok(Self { delta_q, g, gamma, tau_unit: TAU_NS })
    }

    pub fn with_tau(mut self, tau_ns: f64) -> Self {
        self.tau_unit = tau_ns;
        self
    }

    pub fn kernel(&self) -> CouplingKernel {
        CouplingKernel::Lorentzian { g: self.g, gamma: self.gamma, omega_c: 0.0 }
    }
}

/// Closed-form coefficient functions of the two-qubit model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSet {
    delta_q: f64,
    g: f64,
    gamma: f64,
}

impl CoefficientSet {
    pub fn alpha(&self, t: f64) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        let den = Complex64::new(self.gamma / 2.0, self.delta_q);
        let g2 = self.g * self.g;
        i * g2 * (Complex64::new(0.0, self.delta_q * t).exp() - (-self.gamma * t / 2.0).exp()) / den
    }

    pub fn beta(&self, t: f64) -> Complex64 {
        self.g * self.g * Complex64::new(-self.gamma * t / 2.0, self.delta_q * t).exp()
    }

    /// `Γ(t)`, the resonant (`Δ_q = 0`) rate.
    pub fn gamma_big(&self, t: f64) -> f64 {
        2.0 * self.g * self.g / self.gamma * (1.0 - (-self.gamma * t / 2.0).exp())
    }

    /// `x(t) = 2∫_0^t Γ(s) ds`.
    pub fn gamma_big_integral(&self, t: f64) -> f64 {
        let g = self.gamma;
        4.0 * self.g * self.g / g * (t - 2.0 / g * (1.0 - (-g * t / 2.0).exp()))
    }
}

pub fn coefficients(model: &TwoQubitLorentzModel) -> CoefficientSet {
    CoefficientSet { delta_q: model.delta_q, g: model.g, gamma: model.gamma }
}

pub fn build_network(model: &TwoQubitLorentzModel) -> Result<CascadeNetwork> {
    let h = pauli_z::<f64>().scale(cplx(model.delta_q / 2.0, 0.0));
    let node = |label: &str| NetworkNode::new(label, h.clone(), sigma_minus(), model.kernel());
    CascadeNetwork::cascade(vec![node("qubit1")?, node("qubit2")?])
}

/// `α(t)` read off the network's coupling coefficient `h_12(t)`.
pub fn alpha_from_network(network: &CascadeNetwork, delta_q: f64, t: f64) -> Option<Complex64> {
    network.coupling_coefficient(0, 1, t).map(|h| Complex64::new(0.0, 1.0) * Complex64::new(0.0, delta_q * t).exp() * h)
}

/// `β(s)` read off the network's memory kernel `m_12(s)`.
pub fn beta_from_network(network: &CascadeNetwork, s: f64) -> Option<Complex64> {
    network.memory_kernel(0, 1, s).map(|m| m.conj())
}

/// `(|ge⟩ + |eg⟩)/√2`.
pub fn bell_triplet() -> StateMatrix {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    StateMatrix::pure(HilbertSpace::qubits(2).unwrap(), &[cplx(0.0, 0.0), cplx(r, 0.0), cplx(r, 0.0), cplx(0.0, 0.0)])
        .expect("normalized")
}

/// `(|ge⟩ − |eg⟩)/√2`.
pub fn bell_singlet() -> StateMatrix {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    StateMatrix::pure(HilbertSpace::qubits(2).unwrap(), &[cplx(0.0, 0.0), cplx(r, 0.0), cplx(-r, 0.0), cplx(0.0, 0.0)])
        .expect("normalized")
}

/// Wootters concurrence `max(0, λ₁ − λ₂ − λ₃ − λ₄)`, with `λ_i` the
/// decreasing square roots of the eigenvalues of `ρ ρ̃`,
/// `ρ̃ = (σ_y ⊗ σ_y) ρ* (σ_y ⊗ σ_y)`.
pub fn concurrence(state: &StateMatrix) -> Result<f64> {
    if state.space().dims() != [2, 2] {
        return Err(Error::DimensionMismatch { expected: 4, found: state.space().dim() });
    }
    Ok(concurrence_matrix(state.matrix()))
}

pub fn concurrence_matrix(rho: &CMat) -> f64 {
    let sy = pauli_y::<f64>().into_matrix();
    let yy = linalg::kron(&sy, &sy);
    let tilde = yy.dot(&rho.mapv(|z| z.conj())).dot(&yy);
    // eigenvalues of ρρ̃ equal those of √ρ ρ̃ √ρ, which is Hermitian PSD
    let s = linalg::sqrt_psd(rho);
    let m = s.dot(&tilde).dot(&s);
    let mut lam: Vec<f64> = linalg::hermitian_eigenvalues(&m).into_iter().map(|x| x.max(0.0).sqrt()).collect();
    lam.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (lam[0] - lam[1] - lam[2] - lam[3]).clamp(0.0, 1.0)
}

/// First time a sampled curve falls to `level`, linearly interpolated.
pub fn crossing_time(times: &[f64], values: &[f64], level: f64) -> Option<f64> {
    if values.first().is_some_and(|v| *v <= level) {
        return times.first().copied();
    }
    values.windows(2).zip(times.windows(2)).find_map(|(v, t)| {
        (v[0] > level && v[1] <= level).then(|| t[0] + (t[1] - t[0]) * (v[0] - level) / (v[0] - v[1]))
    })
}

/// Absolute accuracy of [`concurrence`] near pure states, where the square
/// roots of near-zero eigenvalues amplify rounding to `√ε`.
pub const CONCURRENCE_RESOLUTION: f64 = 1.5e-8;

/// No increase beyond [`CONCURRENCE_RESOLUTION`] from the second sample on.
pub fn non_increasing_after_first(values: &[f64]) -> bool {
    values.get(1..).is_none_or(|v| v.windows(2).all(|w| w[1] <= w[0] + CONCURRENCE_RESOLUTION))
}

#[derive(Debug, Clone)]
pub struct Figure4Curve {
    pub gamma: f64,
    pub g: f64,
    /// First-Markov trajectory with `concurrence` and `min_eig` observables.
    pub first_markov: Trajectory,
    /// Full time-nonlocal trajectory with the same observables.
    pub full: Option<Trajectory>,
}

impl Figure4Curve {
    pub fn concurrence(&self) -> &[f64] {
        self.first_markov.real("concurrence").expect("recorded observable")
    }

    /// Time (in units of τ) at which the concurrence first reaches ½.
    pub fn half_time(&self) -> Option<f64> {
        crossing_time(self.first_markov.times(), self.concurrence(), 0.5)
    }

    pub fn is_monotone(&self) -> bool {
        non_increasing_after_first(self.concurrence())
    }

    pub fn full_half_time(&self) -> Option<f64> {
        let full = self.full.as_ref()?;
        crossing_time(full.times(), full.real("concurrence")?, 0.5)
    }
}

/// Initial state of the entanglement runs.
pub fn figure4_initial_state() -> StateMatrix {
    bell_singlet()
}

/// One curve per `(γ, g)` pair at `Δ_q = 0`, in parallel. Rates are in units
/// of `1/τ` and times in units of `τ`.
pub fn figure4_run(gammas: &[f64], gs: &[f64], cfg: &SolveConfig, with_full: bool) -> Result<Vec<Figure4Curve>> {
    let cfg = cfg.clone().with_observables(vec![Observable::Concurrence, Observable::MinEigenvalue]);
    let params: Vec<(f64, f64)> = gammas.iter().flat_map(|&gm| gs.iter().map(move |&g| (gm, g))).collect();
    params
        .par_iter()
        .map(|&(gamma, g)| {
            let model = TwoQubitLorentzModel::new(0.0, g, gamma)?;
            let net = build_network(&model)?;
            let rho0 = figure4_initial_state();
            let first_markov = solver::solve_first_markov(&net, &rho0, &cfg)?;
            let full = if with_full { Some(solver::solve_nonmarkovian(&net, &rho0, &cfg)?) } else { None };
            Ok(Figure4Curve { gamma, g, first_markov, full })
        })
        .collect()
}

/// Outcome of one ordering assertion: half-times along `varied` with the
/// other parameter held at `fixed`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCheck {
    pub varied: &'static str,
    pub fixed: f64,
    pub values: Vec<f64>,
    pub half_times: Vec<Option<f64>>,
    pub strictly_decreasing: bool,
}

/// Checks that the half-concurrence time strictly decreases with `γ` (each
/// fixed `g`) and with `g` (each fixed `γ`).
pub fn figure4_orderings(curves: &[Figure4Curve]) -> Vec<OrderingCheck> {
    let mut gammas: Vec<f64> = curves.iter().map(|c| c.gamma).collect();
    let mut gs: Vec<f64> = curves.iter().map(|c| c.g).collect();
    for v in [&mut gammas, &mut gs] {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
    }
    let find = |gamma: f64, g: f64| curves.iter().find(|c| c.gamma == gamma && c.g == g).and_then(|c| c.half_time());
    let decreasing = |ts: &[Option<f64>]| ts.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a));
    let mut out = Vec::new();
    for &g in &gs {
        let half_times: Vec<Option<f64>> = gammas.iter().map(|&gm| find(gm, g)).collect();
        let strictly_decreasing = decreasing(&half_times);
        out.push(OrderingCheck { varied: "gamma", fixed: g, values: gammas.clone(), half_times, strictly_decreasing });
    }
    for &gm in &gammas {
        let half_times: Vec<Option<f64>> = gs.iter().map(|&g| find(gm, g)).collect();
        let strictly_decreasing = decreasing(&half_times);
        out.push(OrderingCheck { varied: "g", fixed: gm, values: gs.clone(), half_times, strictly_decreasing });
    }
    out
}

/// `J₋ = σ₋⁽¹⁾ + σ₋⁽²⁾` on the two-qubit space.
pub fn collective_lowering() -> Operator {
    let space = HilbertSpace::qubits(2).unwrap();
    let a = crate::operators::embed(&sigma_minus(), 0, &space).unwrap();
    let b = crate::operators::embed(&sigma_minus(), 1, &space).unwrap();
    &a + &b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{dissipator, embed};
    use crate::scalar::cplx;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn werner(p: f64) -> StateMatrix {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let phi = StateMatrix::pure(HilbertSpace::qubits(2).unwrap(), &[cplx(r, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(r, 0.0)])
            .unwrap();
        let m = phi.matrix().mapv(|z| z * p) + linalg::identity::<f64>(4).mapv(|z| z * ((1.0 - p) / 4.0));
        StateMatrix::new(HilbertSpace::qubits(2).unwrap(), m).unwrap()
    }

    #[test]
    fn closed_form_coefficients() {
        let c = coefficients(&TwoQubitLorentzModel::new(0.3, 0.2, 0.5).unwrap());
        assert!(c.alpha(0.0).norm() < 1e-16);
        assert!((c.beta(0.0) - Complex64::new(0.04, 0.0)).norm() < 1e-16);
        let t = 1.0 / 0.5;
        let want = 0.04 * (-0.5f64).exp() * Complex64::new(0.0, 0.3 / 0.5).exp();
        assert!((c.beta(t) - want).norm() < 1e-15);
        let r = coefficients(&TwoQubitLorentzModel::new(0.0, 0.2, 0.5).unwrap());
        for t in [0.0, 0.7, 3.0, 50.0] {
            assert!((r.alpha(t) - Complex64::new(0.0, r.gamma_big(t))).norm() < 1e-15);
        }
        assert!((r.gamma_big(1e4) - 2.0 * 0.04 / 0.5).abs() < 1e-15);
    }

    #[test]
    fn network_reproduces_alpha_and_beta() {
        for (dq, g, gamma) in [(0.0, 0.1, 0.2), (0.4, 0.3, 1.0), (-0.7, 0.2, 0.5)] {
            let model = TwoQubitLorentzModel::new(dq, g, gamma).unwrap();
            let net = build_network(&model).unwrap();
            let c = coefficients(&model);
            for k in 0..=40 {
                let t = k as f64 * 0.5 / gamma;
                assert!((alpha_from_network(&net, dq, t).unwrap() - c.alpha(t)).norm() < 1e-12);
                assert!((beta_from_network(&net, t).unwrap() - c.beta(t)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn first_markov_generator_closed_form() {
        let model = TwoQubitLorentzModel::new(0.0, 0.2, 0.5).unwrap();
        let net = build_network(&model).unwrap();
        let c = coefficients(&model);
        let space = HilbertSpace::qubits(2).unwrap();
        let s1 = embed(&sigma_minus(), 0, &space).unwrap();
        let s2 = embed(&sigma_minus(), 1, &space).unwrap();
        let jm = collective_lowering();
        let mut rng = rand::rngs::StdRng::seed_from_u64(8);
        for t in [0.3, 2.0, 9.0] {
            let a = c.alpha(t);
            // H' = −(α σ₋⁽¹⁾σ₊⁽²⁾ + h.c.)
            let x = (&s1 * &s2.dagger()).scale(a);
            let hp = -&(&x + &x.dagger());
            let raw = CMat::from_shape_fn((4, 4), |_| cplx::<f64>(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let p = raw.dot(&linalg::dagger(&raw));
            let tr = linalg::trace(&p);
            let rho = StateMatrix::new(space.clone(), p.mapv(|z| z / tr)).unwrap();
            let h = hp.matrix();
            let want = (h.dot(rho.matrix()) - rho.matrix().dot(h)).mapv(|z| z * Complex64::new(0.0, -1.0))
                + dissipator(&jm, &rho, 2.0 * c.gamma_big(t)).unwrap();
            let got = net.first_markov_generator(t, rho.matrix());
            assert!(linalg::max_abs(&(&got - &want)) < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn singlet_decays_monotonically_as_a_function_of_x() {
        // concurrence e^{−x}(1 + x) for the singlet, e^{−x}|1 − x| for the triplet
        let model = TwoQubitLorentzModel::new(0.0, 0.3, 1.0).unwrap();
        let net = build_network(&model).unwrap();
        let c = coefficients(&model);
        let cfg = SolveConfig::new(30.0, 0.01).with_observables(vec![Observable::Concurrence]);
        for (rho0, f) in [
            (bell_singlet(), (|x: f64| (-x).exp() * (1.0 + x)) as fn(f64) -> f64),
            (bell_triplet(), |x: f64| (-x).exp() * (1.0 - x).abs()),
        ] {
            let tr = solver::solve_first_markov(&net, &rho0, &cfg).unwrap();
            let conc = tr.real("concurrence").unwrap();
            for (t, v) in tr.times().iter().zip(conc).step_by(50) {
                assert!((v - f(c.gamma_big_integral(*t))).abs() < 1e-5, "t = {t}");
            }
        }
    }

    #[test]
    fn zero_coupling_keeps_entanglement() {
        let model = TwoQubitLorentzModel::new(0.0, 0.0, 1.0).unwrap();
        let net = build_network(&model).unwrap();
        let cfg = SolveConfig::new(5.0, 0.05).with_observables(vec![Observable::Concurrence]);
        let tr = solver::solve_first_markov(&net, &bell_singlet(), &cfg).unwrap();
        assert!(tr.real("concurrence").unwrap().iter().all(|c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn concurrence_reference_values() {
        assert!((concurrence(&bell_triplet()).unwrap() - 1.0).abs() < 1e-12);
        assert!((concurrence(&bell_singlet()).unwrap() - 1.0).abs() < 1e-12);
        assert!(concurrence(&StateMatrix::ground(HilbertSpace::qubits(2).unwrap())).unwrap().abs() < 1e-12);
        assert!((concurrence(&werner(0.5)).unwrap() - 0.25).abs() < 1e-12);
        for k in 0..=20 {
            let p = k as f64 / 20.0;
            let want = ((3.0 * p - 1.0) / 2.0).max(0.0);
            assert!((concurrence(&werner(p)).unwrap() - want).abs() < 1e-10);
        }
        let bad = StateMatrix::ground(HilbertSpace::qubits(3).unwrap());
        assert!(concurrence(&bad).is_err());
    }

    fn random_unitary(rng: &mut impl Rng) -> CMat {
        let h = CMat::from_shape_fn((2, 2), |_| cplx::<f64>(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)));
        linalg::unitary_propagator(&(&h + &linalg::dagger(&h)), 1.0)
    }

    #[test]
    fn concurrence_is_local_unitary_invariant() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(21);
        for _ in 0..20 {
            let raw = CMat::from_shape_fn((4, 4), |_| cplx::<f64>(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let mut p = raw.dot(&linalg::dagger(&raw));
            // bias toward entangled states
            let bell = bell_triplet().into_matrix().mapv(|z| z * 6.0);
            p = p + bell;
            let tr = linalg::trace(&p);
            let rho = StateMatrix::new(HilbertSpace::qubits(2).unwrap(), p.mapv(|z| z / tr)).unwrap();
            let u = linalg::kron(&random_unitary(&mut rng), &random_unitary(&mut rng));
            let a = concurrence(&rho).unwrap();
            let b = concurrence(&rho.transformed(&u)).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn crossing_time_interpolates() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let v = [1.0, 0.8, 0.4, 0.1];
        assert!((crossing_time(&t, &v, 0.5).unwrap() - 1.75).abs() < 1e-15);
        assert!(crossing_time(&t, &v, 0.05).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn werner_concurrence_monotone_in_p(p in 0.0f64..1.0, dp in 0.0f64..0.5) {
            let q = (p + dp).min(1.0);
            prop_assert!(concurrence(&werner(q)).unwrap() + 1e-12 >= concurrence(&werner(p)).unwrap());
        }
    }

    #[test]
    fn monotonicity_skips_the_first_sample() {
        assert!(non_increasing_after_first(&[0.5, 1.0, 0.9, 0.9 + 1e-9, 0.1]));
        assert!(!non_increasing_after_first(&[1.0, 0.9, 0.95]));
        assert!(non_increasing_after_first(&[]));
    }
}
