//! Randomized invariants of the kernel, network, linear and entanglement
//! layers, checked against independent reference computations.

use num_complex::Complex64;
use proptest::prelude::*;

use nmqnet::kernels::{correlation, theta_correlation, CouplingKernel};
use nmqnet::linalg::{self, CMat};
use nmqnet::linear::{cavity_transfer, LinearCavityModel};
use nmqnet::models;
use nmqnet::network::{CascadeNetwork, History, NetworkNode};
use nmqnet::operators::{pauli_z, sigma_minus, HilbertSpace, StateMatrix};
use nmqnet::solver::{self, SolveConfig};

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> Complex64, a: f64, b: f64, n: usize) -> Complex64 {
    let h = (b - a) / n as f64;
    let inner: Complex64 = (1..n).map(|k| f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * (h / 3.0)
}

fn lorentzian() -> impl Strategy<Value = CouplingKernel> {
    (0.05f64..1.0, 0.3f64..3.0, -2.0f64..2.0).prop_map(|(g, gamma, wc)| CouplingKernel::lorentzian(g, gamma, wc).unwrap())
}

fn state(n: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n).prop_map(move |v| {
        let raw = CMat::from_shape_fn((n, n), |(i, j)| Complex64::new(v[i * n + j].0, v[i * n + j].1));
        let p = raw.dot(&linalg::dagger(&raw));
        let tr = linalg::trace(&p);
        p.mapv(|z| z / tr)
    })
}

fn qubit_node(label: &str, w: f64, kernel: CouplingKernel) -> NetworkNode {
    NetworkNode::new(label, pauli_z::<f64>().scale(Complex64::new(w / 2.0, 0.0)), sigma_minus(), kernel).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlation_is_hermitian_symmetric(l in lorentzian(), r in lorentzian(), d in -6.0f64..6.0) {
        let lr = correlation(&l, &r).unwrap();
        let rl = correlation(&r, &l).unwrap();
        prop_assert!((lr.eval(d) - rl.eval(-d).conj()).norm() < 1e-12);
        let recon = theta_correlation(&l, &r).unwrap().eval(d) + theta_correlation(&r, &l).unwrap().eval(-d).conj();
        prop_assert!((recon - lr.eval(d)).norm() < 1e-8);
    }

    #[test]
    fn self_correlation_at_zero_is_the_kernel_norm(k in lorentzian()) {
        let c = correlation(&k, &k).unwrap().eval(0.0);
        let (_, hi) = k.support().unwrap();
        let norm = simpson(|t| Complex64::new(k.eval(t).norm_sqr(), 0.0), 0.0, hi, 20_000);
        prop_assert!(c.im.abs() < 1e-14);
        prop_assert!((c.re - norm.re).abs() < 1e-8 * norm.re.max(1.0));
    }

    #[test]
    fn laplace_on_the_imaginary_axis_is_the_causal_transform(k in lorentzian(), w in -4.0f64..4.0) {
        let (_, hi) = k.support().unwrap();
        let want = simpson(|t| k.eval(t) * Complex64::new(0.0, -w * t).exp(), 0.0, hi, 40_000);
        let got = k.laplace(Complex64::new(0.0, w)).unwrap();
        prop_assert!((got - want).norm() < 1e-8);
        let unitary = k.fourier(-w) * (2.0 * std::f64::consts::PI).sqrt();
        prop_assert!((unitary - got).norm() < 1e-8);
    }

    #[test]
    fn generator_is_traceless_and_hermiticity_preserving(
        k1 in lorentzian(),
        k2 in lorentzian(),
        w in -1.0f64..1.0,
        rhos in prop::collection::vec(state(4), 6),
    ) {
        let net = CascadeNetwork::cascade(vec![qubit_node("a", w, k1), qubit_node("b", -w, k2)]).unwrap();
        let mut hist = History::new(0.02, None).unwrap();
        for r in rhos {
            hist.push(r);
        }
        let g = net.effective_generator(hist.time(), &hist).unwrap();
        prop_assert!(linalg::trace(&g).norm() < 1e-12);
        prop_assert!(linalg::hermiticity_deviation(&g) < 1e-12);
    }

    #[test]
    fn coupling_hamiltonian_is_hermitian(k1 in lorentzian(), k2 in lorentzian(), t in 0.0f64..30.0) {
        let net = CascadeNetwork::cascade(vec![qubit_node("a", 0.3, k1), qubit_node("b", 0.3, k2)]).unwrap();
        prop_assert!(net.coupling_hamiltonian(t).hermiticity_deviation() < 1e-10);
    }

    #[test]
    fn markovian_cavity_is_all_pass(w0 in -5.0f64..5.0, gamma in 0.0f64..5.0, w in -20.0f64..20.0) {
        let tf = cavity_transfer(&LinearCavityModel::new(w0, CouplingKernel::flat(gamma).unwrap()).unwrap()).unwrap();
        prop_assert!((tf.at_frequency(w).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn concurrence_is_bounded(rho in state(4)) {
        let c = models::concurrence(&StateMatrix::new(HilbertSpace::qubits(2).unwrap(), rho).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
    }
}

/// Largest deviation of node 1's reduced state, with node 2 starting in
/// `|g⟩`, from the lone node-1 trajectory.
fn upstream_backaction(k1: CouplingKernel, k2: CouplingKernel, cfg: &SolveConfig) -> f64 {
    let q = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
    let zero = Complex64::new(0.0, 0.0);
    let lone_net = CascadeNetwork::cascade(vec![qubit_node("a", 0.2, k1.clone())]).unwrap();
    let lone = solver::solve_nonmarkovian(&lone_net, &StateMatrix::pure(HilbertSpace::qubits(1).unwrap(), &q).unwrap(), cfg).unwrap();
    let pair_net = CascadeNetwork::cascade(vec![qubit_node("a", 0.2, k1), qubit_node("b", 0.7, k2)]).unwrap();
    let joint = StateMatrix::pure(HilbertSpace::qubits(2).unwrap(), &[q[0], zero, q[1], zero]).unwrap();
    let pair = solver::solve_nonmarkovian(&pair_net, &joint, cfg).unwrap();
    assert!(linalg::max_abs(&(lone.final_state().matrix() - lone.states()[0].1.matrix())) > 1e-2);
    lone.states()
        .iter()
        .zip(pair.states())
        .map(|((_, a), (_, b))| linalg::max_abs(&(a.matrix() - b.reduced(&[0]).unwrap().matrix())))
        .fold(0.0, f64::max)
}

#[test]
fn flat_cascade_is_unidirectional() {
    let k1 = CouplingKernel::flat(0.6).unwrap();
    let k2 = CouplingKernel::flat(1.4).unwrap();
    let worst = upstream_backaction(k1, k2, &SolveConfig::new(8.0, 0.02));
    assert!(worst < 1e-12, "upstream node changed by {worst:.3e}");
}

#[test]
fn lorentzian_backaction_vanishes_in_the_markov_limit() {
    // fixed long-time rate 4g²/γ = 0.2 while the memory time 2/γ shrinks
    let backaction: Vec<f64> = [2.0_f64, 8.0, 32.0]
        .iter()
        .map(|&gamma| {
            let k = CouplingKernel::lorentzian((0.05 * gamma).sqrt(), gamma, 0.0).unwrap();
            upstream_backaction(k.clone(), k, &SolveConfig::new(8.0, 0.1 / gamma))
        })
        .collect();
    assert!(backaction.windows(2).all(|w| w[1] < w[0] / 3.0), "{backaction:?}");
    assert!(backaction[2] < 5e-3, "{backaction:?}");
}
