//! Cascaded networks of open systems.
//!
//! Node `l` is a triple `(H_l, L_l, κ_l)`; the field leaves node `l` and
//! enters node `l + 1`. Composition yields
//!
//! ```text
//! H_S(t) = Σ H_l + Σ_{l<r} H_lr(t),
//! H_lr(t) = i ∫_0^t [γ^θ_lr(τ − t) L_r L̃_l†(τ − t) − h.c.] dτ,
//! ρ̇ = −i[H_S, ρ] + Σ_{l,r} ∫_0^t {γ_lr(t − τ)[L_r ρ(τ), L̃_l†(τ − t)] + h.c.} dτ,
//! ```
//!
//! where `L̃(x) = e^{iH_0 x} L e^{−iH_0 x}` is the free evolution under
//! `H_0 = Σ H_l`. When `L_l` is an eigenoperator of `H_0`
//! (`[H_0, L_l] = −ω_l L_l`) the free evolution is the phase `e^{−iω_l x}` and
//! every memory integral collapses to a scalar coefficient; otherwise it is
//! evaluated in the eigenbasis of `H_0`.

use std::collections::VecDeque;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{self, Branch, CorrelationKernel, CouplingKernel};
use crate::linalg::{self, CMat};
use crate::operators::{embed_block, HilbertSpace, Operator};
use crate::quad;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Hermiticity tolerance for node Hamiltonians.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct NetworkNode {
    pub label: String,
    pub hamiltonian: Operator,
    pub coupling: Operator,
    pub kernel: CouplingKernel,
}

impl NetworkNode {
    pub fn new(label: impl Into<String>, hamiltonian: Operator, coupling: Operator, kernel: CouplingKernel) -> Result<Self> {
        let label = label.into();
        let dev = hamiltonian.hermiticity_deviation();
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: dev, context: Some(format!("Hamiltonian of node '{label}'")) });
        }
        if hamiltonian.space() != coupling.space() {
            return Err(Error::SpaceMismatch {
                left: hamiltonian.space().dims().to_vec(),
                right: coupling.space().dims().to_vec(),
            });
        }
        Ok(Self { label, hamiltonian, coupling, kernel })
    }

    pub fn space(&self) -> &HilbertSpace {
        self.hamiltonian.space()
    }
}

/// How `L_l†` evolves freely under `H_0`.
#[derive(Debug, Clone)]
enum FreeEvolution {
    /// `L̃_l†(x) = e^{iωx} L_l†`.
    Phase(f64),
    /// `L_l†` in the eigenbasis of `H_0`: `L̃†(x)_{ij} = e^{i(λ_i − λ_j)x} B_ij`.
    Eigenbasis(CMat),
}

#[derive(Debug, Clone)]
struct Pair {
    l: usize,
    r: usize,
    corr: CorrelationKernel,
}

#[derive(Debug, Clone)]
pub struct CascadeNetwork {
    labels: Vec<String>,
    kernels: Vec<CouplingKernel>,
    space: HilbertSpace,
    hamiltonians: Vec<CMat>,
    couplings: Vec<CMat>,
    h0: CMat,
    eigvals: Vec<f64>,
    eigvecs: CMat,
    free: Vec<FreeEvolution>,
    correlations: Vec<Vec<CorrelationKernel>>,
    thetas: Vec<Vec<CorrelationKernel>>,
    pairs: Vec<Pair>,
}

/// Relative residual below which `L` counts as an eigenoperator of `H_0`.
const EIGENOPERATOR_TOL: f64 = 1e-10;

impl CascadeNetwork {
    /// Composes nodes in series; node `l` occupies its own factor block of
    /// the joint space, in order.
    pub fn cascade(nodes: Vec<NetworkNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidSpace("a network needs at least one node".into()));
        }
        let dims: Vec<usize> = nodes.iter().flat_map(|n| n.space().dims().to_vec()).collect();
        let space = HilbertSpace::new(dims)?;
        let mut embedded = Vec::with_capacity(nodes.len());
        let mut site = 0;
        for n in nodes {
            let h = embed_block(&n.hamiltonian, site, &space)?;
            let l = embed_block(&n.coupling, site, &space)?;
            site += n.space().len();
            embedded.push(NetworkNode { label: n.label, hamiltonian: h, coupling: l, kernel: n.kernel });
        }
        Self::build(space, embedded)
    }

    /// Composes nodes whose operators are already given on a shared joint
    /// space. Several nodes may act on the same subsystem, which is how a
    /// plant → controller → plant loop is expressed.
    pub fn from_embedded(space: HilbertSpace, nodes: Vec<NetworkNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidSpace("a network needs at least one node".into()));
        }
        for n in &nodes {
            if n.space() != &space {
                return Err(Error::SpaceMismatch { left: space.dims().to_vec(), right: n.space().dims().to_vec() });
            }
        }
        Self::build(space, nodes)
    }

    fn build(space: HilbertSpace, nodes: Vec<NetworkNode>) -> Result<Self> {
        let d = space.dim();
        let n = nodes.len();
        let mut h0 = linalg::zeros::<f64>(d);
        for node in &nodes {
            h0 += node.hamiltonian.matrix();
        }
        let (eigvals, eigvecs) = linalg::hermitian_eigen(&h0);
        let vdag = linalg::dagger(&eigvecs);
        let free = nodes
            .iter()
            .map(|node| match eigenfrequency(&h0, node.coupling.matrix()) {
                Some(w) => FreeEvolution::Phase(w),
                None => FreeEvolution::Eigenbasis(vdag.dot(&linalg::dagger(node.coupling.matrix())).dot(&eigvecs)),
            })
            .collect();
        let mut correlations = Vec::with_capacity(n);
        let mut thetas = Vec::with_capacity(n);
        let mut pairs = Vec::new();
        for l in 0..n {
            let mut row = Vec::with_capacity(n);
            let mut trow = Vec::with_capacity(n);
            for r in 0..n {
                let c = kernels::correlation(&nodes[l].kernel, &nodes[r].kernel)?;
                trow.push(kernels::theta_correlation(&nodes[l].kernel, &nodes[r].kernel)?);
                if !c.is_zero() && !nodes[l].coupling.is_zero() && !nodes[r].coupling.is_zero() {
                    pairs.push(Pair { l, r, corr: c.clone() });
                }
                row.push(c);
            }
            correlations.push(row);
            thetas.push(trow);
        }
        Ok(Self {
            labels: nodes.iter().map(|n| n.label.clone()).collect(),
            kernels: nodes.iter().map(|n| n.kernel.clone()).collect(),
            hamiltonians: nodes.iter().map(|n| n.hamiltonian.matrix().clone()).collect(),
            couplings: nodes.into_iter().map(|n| n.coupling.into_matrix()).collect(),
            space,
            h0,
            eigvals,
            eigvecs,
            free,
            correlations,
            thetas,
            pairs,
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn kernel(&self, l: usize) -> &CouplingKernel {
        &self.kernels[l]
    }

    /// `H_l` on the joint space.
    pub fn node_hamiltonian(&self, l: usize) -> Operator {
        Operator::new(self.space.clone(), self.hamiltonians[l].clone()).expect("validated at construction")
    }

    /// `L_l` on the joint space.
    pub fn node_coupling(&self, l: usize) -> Operator {
        Operator::new(self.space.clone(), self.couplings[l].clone()).expect("validated at construction")
    }

    /// `H_0 = Σ H_l`.
    pub fn free_hamiltonian(&self) -> Operator {
        Operator::new(self.space.clone(), self.h0.clone()).expect("validated at construction")
    }

    pub fn correlation(&self, l: usize, r: usize) -> &CorrelationKernel {
        &self.correlations[l][r]
    }

    pub fn theta_correlation(&self, l: usize, r: usize) -> &CorrelationKernel {
        &self.thetas[l][r]
    }

    /// `ω_l` with `[H_0, L_l] = −ω_l L_l`, if `L_l` is an eigenoperator.
    pub fn eigenfrequency(&self, l: usize) -> Option<f64> {
        match self.free[l] {
            FreeEvolution::Phase(w) => Some(w),
            FreeEvolution::Eigenbasis(_) => None,
        }
    }

    /// Scalar `h_lr(t) = ∫_0^t γ^θ_lr(−s) e^{−iω_l s} ds` (plus half of any
    /// delta weight), so that `H_lr = i[h_lr L_r L_l† − h.c.]`.
    pub fn coupling_coefficient(&self, l: usize, r: usize, t: f64) -> Option<Complex64> {
        let w = self.eigenfrequency(l)?;
        Some(self.thetas[l][r].phase_integral(Branch::Negative, t, w))
    }

    /// Scalar memory kernel `m_lr(s) = γ_lr(s) e^{−iω_l s}` for `s > 0`.
    pub fn memory_kernel(&self, l: usize, r: usize, s: f64) -> Option<Complex64> {
        let w = self.eigenfrequency(l)?;
        Some(self.correlations[l][r].branch(Branch::Positive, s) * Complex64::new(0.0, -w * s).exp())
    }

    /// `∫_0^t m_lr(s) ds` plus half the delta weight: the rate coefficient
    /// once `ρ(τ)` is replaced by `ρ(t)`.
    pub fn first_markov_coefficient(&self, l: usize, r: usize, t: f64) -> Option<Complex64> {
        let w = self.eigenfrequency(l)?;
        Some(self.correlations[l][r].phase_integral(Branch::Positive, t, w))
    }

    /// [`coupling_coefficient`](Self::coupling_coefficient) computed by nested
    /// adaptive quadrature straight from the coupling kernels, without the
    /// closed-form correlation.
    pub fn coupling_coefficient_quadrature(&self, l: usize, r: usize, t: f64, tol: f64) -> Option<Complex64> {
        let w = self.eigenfrequency(l)?;
        let delta = 0.5 * self.thetas[l][r].delta_weight();
        let (kl, kr) = (&self.kernels[l], &self.kernels[r]);
        let upper = kr.support().map_or(0.0, |(_, hi)| hi);
        // γ_lr(−s) = ∫ κ_r*(u) κ_l(u + s) du
        let gamma_neg = |s: f64| quad::integrate(|u| kr.eval(u).conj() * kl.eval(u + s), 0.0, upper, tol * 1e-3);
        let outer = quad::integrate(|s| gamma_neg(s) * Complex64::new(0.0, -w * s).exp(), 0.0, t, tol * 0.1);
        Some(delta + outer)
    }

    /// [`memory_kernel`](Self::memory_kernel) by direct quadrature of the
    /// overlap integral.
    pub fn memory_kernel_quadrature(&self, l: usize, r: usize, s: f64, tol: f64) -> Option<Complex64> {
        let w = self.eigenfrequency(l)?;
        let (kl, kr) = (&self.kernels[l], &self.kernels[r]);
        let upper = s + kr.support().map_or(0.0, |(_, hi)| hi);
        let g = quad::integrate(|u| kr.eval(u).conj() * kl.eval(u - s), s, upper, tol);
        Some(g * Complex64::new(0.0, -w * s).exp())
    }

    /// `∫_0^t k(±s) L̃_l†(−s) ds`; in the eigenbasis of `H_0` entry `ij`
    /// picks up `∫_0^t k(±s) e^{−i(λ_i − λ_j)s} ds`.
    fn integrated_dagger(&self, l: usize, corr: &CorrelationKernel, side: Branch, t: f64) -> CMat {
        match &self.free[l] {
            FreeEvolution::Phase(w) => linalg::dagger(&self.couplings[l]).mapv(|z| z * corr.phase_integral(side, t, *w)),
            FreeEvolution::Eigenbasis(b) => {
                let d = self.dim();
                let p = Array2::from_shape_fn((d, d), |(i, j)| {
                    if b[[i, j]].norm() == 0.0 {
                        C0
                    } else {
                        b[[i, j]] * corr.phase_integral(side, t, self.eigvals[i] - self.eigvals[j])
                    }
                });
                self.eigvecs.dot(&p).dot(&linalg::dagger(&self.eigvecs))
            }
        }
    }

    /// `Σ_{l<r} H_lr(t)`.
    pub fn coupling_hamiltonian(&self, t: f64) -> Operator {
        let mut h = linalg::zeros::<f64>(self.dim());
        if t < 0.0 {
            return Operator::new(self.space.clone(), h).expect("dimension fixed by construction");
        }
        for l in 0..self.len() {
            for r in (l + 1)..self.len() {
                let theta = &self.thetas[l][r];
                if theta.is_zero() {
                    continue;
                }
                let k = self.couplings[r].dot(&self.integrated_dagger(l, theta, Branch::Negative, t));
                h = h + (&k - &linalg::dagger(&k)).mapv(|z| z * I);
            }
        }
        Operator::new(self.space.clone(), h).expect("dimension fixed by construction")
    }

    /// `H_S(t) = H_0 + Σ_{l<r} H_lr(t)`.
    pub fn system_hamiltonian(&self, t: f64) -> Operator {
        let hc = self.coupling_hamiltonian(t);
        Operator::new(self.space.clone(), &self.h0 + hc.matrix()).expect("dimension fixed by construction")
    }

    /// Instantaneous part: `−i[H_S(t), ρ]` plus the Lindblad terms carried by
    /// delta components of the correlations.
    fn local_part(&self, t: f64, rho: &CMat) -> CMat {
        let h = self.system_hamiltonian(t);
        let hm = h.matrix();
        let mut out = (hm.dot(rho) - rho.dot(hm)).mapv(|z| -I * z);
        for p in &self.pairs {
            let w = p.corr.delta_weight() * 0.5;
            if w == C0 {
                continue;
            }
            let (ll, lr) = (&self.couplings[p.l], &self.couplings[p.r]);
            let lld = linalg::dagger(ll);
            let lrd = linalg::dagger(lr);
            // ½w [L_r ρ, L_l†] + ½w* [L_l, ρ L_r†]
            let a = lr.dot(rho);
            let x = a.dot(&lld) - lld.dot(&a);
            let b = rho.dot(&lrd);
            let y = ll.dot(&b) - b.dot(ll);
            out = out + x.mapv(|z| z * w) + y.mapv(|z| z * w.conj());
        }
        out
    }

    /// Right-hand side of the network master equation at `t`, given the
    /// state history on a uniform grid ending at `ρ(t)`.
    pub fn effective_generator(&self, t: f64, history: &History) -> Result<CMat> {
        let plan = MemoryPlan::new(self, history.dt(), history.total_len().saturating_sub(1));
        self.generator_with_plan(t, history, &plan)
    }

    /// [`effective_generator`](Self::effective_generator) with a reusable
    /// precomputed memory plan.
    pub fn generator_with_plan(&self, t: f64, history: &History, plan: &MemoryPlan) -> Result<CMat> {
        let rho = history.latest().ok_or_else(|| Error::HistoryMismatch("empty history".into()))?;
        if rho.nrows() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: rho.nrows() });
        }
        let expected = history.time();
        if (t - expected).abs() > 1e-9 * (1.0 + t.abs()) {
            return Err(Error::HistoryMismatch(format!("history ends at t = {expected}, generator requested at {t}")));
        }
        if (plan.dt - history.dt()).abs() > 1e-12 * plan.dt {
            return Err(Error::HistoryMismatch(format!("plan spacing {} vs history spacing {}", plan.dt, history.dt())));
        }
        Ok(self.local_part(t, rho) + plan.memory(self, history))
    }

    /// Time-local generator with `ρ(τ) → ρ(t)` inside the memory integral.
    pub fn first_markov_generator(&self, t: f64, rho: &CMat) -> CMat {
        let mut out = self.local_part(t, rho);
        if t <= 0.0 {
            return out;
        }
        for p in &self.pairs {
            if matches!(&p.corr, CorrelationKernel::Analytic(e) if e.positive.is_empty()) {
                continue;
            }
            let (ll, lr) = (&self.couplings[p.l], &self.couplings[p.r]);
            let mut c = self.integrated_dagger(p.l, &p.corr, Branch::Positive, t);
            // the delta already sits in `local_part`
            let half_delta = p.corr.delta_weight() * 0.5;
            if half_delta != C0 {
                c = c - linalg::dagger(ll).mapv(|z| z * half_delta);
            }
            let cd = linalg::dagger(&c);
            let lrd = linalg::dagger(lr);
            // [L_r ρ, C] + [C†, ρ L_r†]
            let a = lr.dot(rho);
            let b = rho.dot(&lrd);
            out = out + a.dot(&c) - c.dot(&a) + cd.dot(&b) - b.dot(&cd);
        }
        out
    }

    /// Lag beyond which every correlation has fallen below `rel` of its peak.
    pub fn memory_horizon(&self, rel: f64) -> f64 {
        self.pairs.iter().fold(0.0, |h, p| h.max(p.corr.horizon(rel)))
    }

    /// Whether any correlation has a continuous (memory-carrying) part.
    pub fn has_memory(&self) -> bool {
        self.pairs.iter().any(|p| match &p.corr {
            CorrelationKernel::Analytic(e) => !e.positive.is_empty(),
            CorrelationKernel::Numeric(_) => true,
        })
    }

    /// Largest frequency the integrator must resolve: kernel oscillations
    /// and the spectral width of `H_0`.
    pub fn max_frequency(&self) -> f64 {
        let kernel = self.pairs.iter().fold(0.0f64, |m, p| m.max(p.corr.max_frequency()));
        let spread = match (self.eigvals.first(), self.eigvals.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        };
        kernel.max(spread)
    }

    /// Largest correlation decay rate (inverse of the shortest memory time).
    pub fn max_decay_rate(&self) -> f64 {
        self.pairs.iter().fold(0.0, |m, p| m.max(p.corr.max_decay_rate()))
    }

    /// Largest delta weight, the Markovian rate scale.
    pub fn max_markov_rate(&self) -> f64 {
        self.pairs.iter().fold(0.0, |m, p| m.max(p.corr.delta_weight().norm()))
    }
}

/// `ω` with `[H, L] = −ω L`, if one exists.
fn eigenfrequency(h: &CMat, l: &CMat) -> Option<f64> {
    let norm = linalg::frobenius(l);
    if norm == 0.0 {
        return Some(0.0);
    }
    let comm = h.dot(l) - l.dot(h);
    let overlap = l.iter().zip(comm.iter()).fold(C0, |acc, (a, b)| acc + a.conj() * b);
    let w = -overlap / (norm * norm);
    let resid = linalg::frobenius(&(&comm + &l.mapv(|z| z * w)));
    let scale = norm * (1.0 + linalg::frobenius(h));
    (resid <= EIGENOPERATOR_TOL * scale && w.im.abs() <= EIGENOPERATOR_TOL * (1.0 + w.re.abs())).then_some(w.re)
}

/// Uniformly spaced state history `ρ(0), ρ(dt), …`, optionally keeping only
/// the most recent `capacity` states.
#[derive(Debug, Clone)]
pub struct History {
    dt: f64,
    dropped: usize,
    capacity: Option<usize>,
    states: VecDeque<CMat>,
}

impl History {
    pub fn new(dt: f64, capacity: Option<usize>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("history spacing {dt} must be positive")));
        }
        Ok(Self { dt, dropped: 0, capacity: capacity.map(|c| c.max(1)), states: VecDeque::new() })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn push(&mut self, rho: CMat) {
        self.states.push_back(rho);
        if let Some(cap) = self.capacity {
            while self.states.len() > cap {
                self.states.pop_front();
                self.dropped += 1;
            }
        }
    }

    pub fn replace_latest(&mut self, rho: CMat) {
        if let Some(last) = self.states.back_mut() {
            *last = rho;
        }
    }

    /// States pushed so far, including any dropped from the front.
    pub fn total_len(&self) -> usize {
        self.dropped + self.states.len()
    }

    /// Time of the most recent state.
    pub fn time(&self) -> f64 {
        self.total_len().saturating_sub(1) as f64 * self.dt
    }

    pub fn latest(&self) -> Option<&CMat> {
        self.states.back()
    }

    /// `ρ(t − k·dt)`, if still stored.
    pub fn lag(&self, k: usize) -> Option<&CMat> {
        let n = self.states.len();
        (k < n).then(|| &self.states[n - 1 - k])
    }

    /// Number of lags available: `min(stored − 1, total − 1)`.
    pub fn available_lags(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone)]
enum PlanTerm {
    /// Pairs sharing one scalar kernel `m_k`, with `M = Σ w_k m_k ρ_{n−k}`.
    Scalar { m: Vec<Complex64>, pairs: Vec<(usize, usize)> },
    /// Per-lag `γ(s_k) L̃_l†(−s_k)` for one pair.
    Matrix { r: usize, a: Vec<CMat> },
}

/// Memory-kernel samples on a fixed lag grid, reused across steps.
#[derive(Debug, Clone)]
pub struct MemoryPlan {
    dt: f64,
    lags: usize,
    terms: Vec<PlanTerm>,
}

impl MemoryPlan {
    /// Samples lags `0..=lags` at spacing `dt`.
    pub fn new(network: &CascadeNetwork, dt: f64, lags: usize) -> Self {
        let mut terms: Vec<PlanTerm> = Vec::new();
        let mut scalar_keys: Vec<(CorrelationKernel, u64, usize)> = Vec::new();
        for p in &network.pairs {
            let continuous = match &p.corr {
                CorrelationKernel::Analytic(e) => !e.positive.is_empty(),
                CorrelationKernel::Numeric(_) => true,
            };
            if !continuous {
                continue;
            }
            match &network.free[p.l] {
                FreeEvolution::Phase(w) => {
                    let key = w.to_bits();
                    if let Some(&(_, _, idx)) = scalar_keys.iter().find(|(c, k, _)| *k == key && *c == p.corr) {
                        if let PlanTerm::Scalar { pairs, .. } = &mut terms[idx] {
                            pairs.push((p.l, p.r));
                        }
                        continue;
                    }
                    let m = (0..=lags)
                        .map(|k| {
                            let s = k as f64 * dt;
                            p.corr.branch(Branch::Positive, s) * Complex64::new(0.0, -w * s).exp()
                        })
                        .collect();
                    scalar_keys.push((p.corr.clone(), key, terms.len()));
                    terms.push(PlanTerm::Scalar { m, pairs: vec![(p.l, p.r)] });
                }
                FreeEvolution::Eigenbasis(b) => {
                    let d = network.dim();
                    let v = &network.eigvecs;
                    let vd = linalg::dagger(v);
                    let a = (0..=lags)
                        .map(|k| {
                            let s = k as f64 * dt;
                            let g = p.corr.branch(Branch::Positive, s);
                            // L̃†(−s)_{ij} = e^{−i(λ_i − λ_j)s} B_ij
                            let rot = Array2::from_shape_fn((d, d), |(i, j)| {
                                b[[i, j]] * Complex64::new(0.0, -(network.eigvals[i] - network.eigvals[j]) * s).exp() * g
                            });
                            v.dot(&rot).dot(&vd)
                        })
                        .collect();
                    terms.push(PlanTerm::Matrix { r: p.r, a });
                }
            }
        }
        Self { dt, lags, terms }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn lags(&self) -> usize {
        self.lags
    }

    /// Trapezoid weights over lags `0..=n`.
    fn weight(k: usize, n: usize) -> f64 {
        if k == 0 || k == n {
            0.5
        } else {
            1.0
        }
    }

    /// Continuous memory contribution at the history's latest time.
    pub fn memory(&self, network: &CascadeNetwork, history: &History) -> CMat {
        let d = network.dim();
        let mut out = linalg::zeros::<f64>(d);
        let n = self.lags.min(history.available_lags());
        if n == 0 {
            return out;
        }
        for term in &self.terms {
            match term {
                PlanTerm::Scalar { m, pairs } => {
                    let mut acc = linalg::zeros::<f64>(d);
                    let mut acc_c = linalg::zeros::<f64>(d);
                    for k in 0..=n {
                        let rho = history.lag(k).expect("lag within stored range");
                        let w = Self::weight(k, n) * self.dt;
                        let mk = m[k] * w;
                        acc.zip_mut_with(rho, |a, r| *a += mk * r);
                        let mkc = mk.conj();
                        acc_c.zip_mut_with(rho, |a, r| *a += mkc * r);
                    }
                    for &(l, r) in pairs {
                        let (ll, lr) = (&network.couplings[l], &network.couplings[r]);
                        let lld = linalg::dagger(ll);
                        let lrd = linalg::dagger(lr);
                        // [L_r M, L_l†] + [L_l, M̄ L_r†]
                        let x = lr.dot(&acc);
                        let y = acc_c.dot(&lrd);
                        out = out + x.dot(&lld) - lld.dot(&x) + ll.dot(&y) - y.dot(ll);
                    }
                }
                PlanTerm::Matrix { r, a } => {
                    let lr = &network.couplings[*r];
                    let lrd = linalg::dagger(lr);
                    for k in 0..=n {
                        let rho = history.lag(k).expect("lag within stored range");
                        let w = Self::weight(k, n) * self.dt;
                        let ak = &a[k];
                        let akd = linalg::dagger(ak);
                        let x = lr.dot(rho);
                        let y = rho.dot(&lrd);
                        let term = x.dot(ak) - ak.dot(&x) + akd.dot(&y) - y.dot(&akd);
                        out.zip_mut_with(&term, |o, t| *o += t * w);
                    }
                }
            }
        }
        out
    }
}
