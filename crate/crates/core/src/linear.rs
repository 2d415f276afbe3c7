//! Single-mode cavity `H = ω₀ a†a`, `L = a` driven through a coupling
//! kernel: exact transfer function and first-moment time evolution.
//!
//! The mean field obeys
//!
//! ```text
//! ⟨ȧ⟩ = −iω₀⟨a⟩ − ∫_0^t γ*(t − τ)⟨a⟩(τ) dτ − ∫_0^t κ(t − τ) β_in(τ) dτ
//! ⟨b_out⟩ = β_in + ∫_0^t κ(t − τ)⟨a⟩(τ) dτ
//! ```
//!
//! and in the Laplace domain `b_out(s) = T(s) β_in(s)` with
//!
//! ```text
//! T(s) = (d(s) + iω₀ − κ(s)²) / (d(s) + iω₀),   d(s) = s + γ(s)/2.
//! ```
//!
//! `κ(s)²` is the square of the transform, not its modulus; for a complex
//! (Lorentzian) kernel the two differ. With a Lorentzian kernel near
//! resonance `|T(iω)|` then exceeds one, and the time-domain equations above
//! reproduce that gain.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{correlation, Branch, CorrelationKernel, CouplingKernel};
use crate::scalar::{ci, Real, C};
use crate::solver::SolveConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCavityModel<R: Real = f64> {
    pub omega0: R,
    pub kernel: CouplingKernel<R>,
}

impl<R: Real> LinearCavityModel<R> {
    pub fn new(omega0: R, kernel: CouplingKernel<R>) -> Result<Self> {
        if !omega0.is_finite() {
            return Err(Error::InvalidKernel("cavity frequency must be finite".into()));
        }
        Ok(Self { omega0, kernel })
    }
}

/// `s ↦ T(s)` for a linear cavity.
#[derive(Debug, Clone)]
pub struct TransferFunction<R: Real = f64> {
    omega0: R,
    kernel: CouplingKernel<R>,
    corr: CorrelationKernel<R>,
}

impl<R: Real> TransferFunction<R> {
    pub fn omega0(&self) -> R {
        self.omega0
    }

    pub fn kernel(&self) -> &CouplingKernel<R> {
        &self.kernel
    }

    /// `d(s) = s + γ(s)/2`.
    pub fn d(&self, s: C<R>) -> Result<C<R>> {
        Ok(s + self.corr.laplace_memory(s)?)
    }

    pub fn eval(&self, s: C<R>) -> Result<C<R>> {
        let k = self.kernel.laplace(s)?;
        if k == C::new(R::zero(), R::zero()) {
            return Ok(C::new(R::one(), R::zero()));
        }
        let den = self.d(s)? + ci::<R>() * self.omega0;
        Ok(C::new(R::one(), R::zero()) - k * k / den)
    }

    /// `T(iω)`, the steady-state response to an input `∝ e^{iωt}`.
    pub fn at_frequency(&self, omega: R) -> Result<C<R>> {
        self.eval(ci::<R>() * omega)
    }
}

pub fn cavity_transfer<R: Real>(model: &LinearCavityModel<R>) -> Result<TransferFunction<R>> {
    let corr = correlation(&model.kernel, &model.kernel)?;
    Ok(TransferFunction { omega0: model.omega0, kernel: model.kernel.clone(), corr })
}

/// First moments sampled on the solver grid.
#[derive(Debug, Clone)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub a: Vec<Complex64>,
    pub b_out: Vec<Complex64>,
    pub input: Vec<Complex64>,
}

impl MomentTrajectory {
    /// `⟨q⟩ = √2 Re⟨a⟩`.
    pub fn q(&self) -> Vec<f64> {
        self.a.iter().map(|z| std::f64::consts::SQRT_2 * z.re).collect()
    }

    /// `⟨p⟩ = √2 Im⟨a⟩`.
    pub fn p(&self) -> Vec<f64> {
        self.a.iter().map(|z| std::f64::consts::SQRT_2 * z.im).collect()
    }
}

fn weight(k: usize, n: usize) -> f64 {
    if k == 0 || k == n {
        0.5
    } else {
        1.0
    }
}

/// Integrates the mean-field equations for a coherent input `β_in(t)` and
/// initial amplitude `a0` with Heun steps and trapezoidal convolutions.
pub fn moment_dynamics(
    model: &LinearCavityModel<f64>,
    input: impl Fn(f64) -> Complex64,
    a0: Complex64,
    cfg: &SolveConfig,
) -> Result<MomentTrajectory> {
    if !(cfg.dt > 0.0) || !(cfg.t_end > 0.0) {
        return Err(Error::InvalidConfig("dt and t_end must be positive".into()));
    }
    if let Some(res) = model.kernel.resolution() {
        if cfg.dt > res * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!("dt = {} does not resolve the kernel; use dt <= {res:.4e}", cfg.dt)));
        }
    }
    let steps = cfg.steps();
    let dt = cfg.dt;
    let corr = correlation(&model.kernel, &model.kernel)?;
    let horizon = match cfg.memory_horizon {
        Some(h) => h,
        None => corr.horizon(crate::solver::HORIZON_REL).max(model.kernel.support().map_or(0.0, |(_, hi)| hi)),
    };
    let lags = ((horizon / dt).ceil() as usize).min(steps);
    // γ*(s) for s ≥ 0 is the Δ ≤ 0 branch of a self-correlation
    let mem: Vec<Complex64> = (0..=lags).map(|k| corr.branch(Branch::Negative, k as f64 * dt)).collect();
    let kap: Vec<Complex64> = (0..=lags).map(|k| model.kernel.eval(k as f64 * dt)).collect();
    let mem_delta = corr.delta_weight() * 0.5;
    let kap_delta = model.kernel.delta_weight();
    let w0 = Complex64::new(0.0, -model.omega0);

    let times: Vec<f64> = (0..=steps).map(|n| n as f64 * dt).collect();
    let beta: Vec<Complex64> = times.iter().map(|&t| input(t)).collect();
    let conv = |f: &[Complex64], xs: &[Complex64], n: usize| -> Complex64 {
        let m = lags.min(n);
        (0..=m).fold(Complex64::new(0.0, 0.0), |acc, k| acc + f[k] * xs[n - k] * weight(k, m)) * dt
    };
    let b_in: Vec<Complex64> = (0..=steps).map(|n| conv(&kap, &beta, n) + beta[n] * kap_delta).collect();

    let mut a = Vec::with_capacity(steps + 1);
    a.push(a0);
    let rhs = |a: &[Complex64], n: usize| w0 * a[n] - conv(&mem, a, n) - mem_delta * a[n] - b_in[n];
    for n in 0..steps {
        let k1 = rhs(&a, n);
        a.push(a[n] + k1 * dt);
        let k2 = rhs(&a, n + 1);
        a[n + 1] = a[n] + (k1 + k2) * (0.5 * dt);
    }
    let b_out = (0..=steps).map(|n| beta[n] + conv(&kap, &a, n) + a[n] * kap_delta).collect();
    Ok(MomentTrajectory { times, a, b_out, input: beta })
}
