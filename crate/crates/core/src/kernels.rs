//! Coupling kernels `κ(t)` and the correlation kernels built from them.
//!
//! A coupling kernel describes how strongly each bath frequency talks to a
//! node. Its self- and cross-overlaps
//!
//! ```text
//! γ_lr(Δ) = ∫ κ_r*(u) κ_l(u − Δ) du,         Δ = t − t̃
//! ```
//!
//! are the memory functions of the network master equation. The causal
//! ("θ-truncated") part `γ^θ_lr` keeps only `Δ < 0`, the lag at which an
//! upstream node's past feeds a downstream node, and generates the
//! field-mediated coupling Hamiltonian.
//!
//! Delta components are carried as an explicit weight. Whenever a delta sits
//! at the endpoint of a one-sided integral it contributes half its weight;
//! a delta in `κ` itself (the output relation) contributes fully.
//!
//! Conventions: `κ(ω) = (2π)^{-1/2} ∫ e^{iωt} κ(t) dt` and
//! `κ(s) = ∫_0^∞ e^{-st} κ(t) dt`. The Lorentzian correlation in the lab frame
//! is `g² exp(iω_c Δ − γ|Δ|/2)`.

use std::io::Read;
use std::path::Path;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::scalar::{ci, cone, czero, Real, C};

/// Samples further apart than this fraction of the grid spacing count as
/// different grids.
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingKernel<R: Real = f64> {
    /// `κ(t) = √γ δ(t)`.
    FlatMarkovian { gamma: R },
    /// `κ(t) = i g √γ exp[−(iω_c + γ/2) t]` for `t ≥ 0`, zero before.
    Lorentzian { g: R, gamma: R, omega_c: R },
    /// Samples `κ(t0 + k·dt)`, zero outside the grid, linear in between.
    Tabulated { t0: R, dt: R, values: Vec<C<R>> },
}

impl<R: Real> CouplingKernel<R> {
    pub fn flat(gamma: R) -> Result<Self> {
        if !(gamma >= R::zero()) {
            return Err(Error::InvalidKernel(format!("flat kernel rate {gamma} must be non-negative")));
        }
        Ok(Self::FlatMarkovian { gamma })
    }

    pub fn lorentzian(g: R, gamma: R, omega_c: R) -> Result<Self> {
        if !(gamma > R::zero()) {
            return Err(Error::InvalidKernel(format!("Lorentzian bandwidth {gamma} must be positive")));
        }
        if !g.is_finite() || !omega_c.is_finite() {
            return Err(Error::InvalidKernel("non-finite Lorentzian parameter".into()));
        }
        Ok(Self::Lorentzian { g, gamma, omega_c })
    }

    pub fn tabulated(t0: R, dt: R, values: Vec<C<R>>) -> Result<Self> {
        if !(dt > R::zero()) {
            return Err(Error::InvalidKernel("tabulated spacing must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::InvalidKernel("tabulated kernel has no samples".into()));
        }
        Ok(Self::Tabulated { t0, dt, values })
    }

    /// A kernel that couples nothing.
    pub fn zero() -> Self {
        Self::FlatMarkovian { gamma: R::zero() }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::FlatMarkovian { gamma } => gamma.is_zero(),
            Self::Lorentzian { g, .. } => g.is_zero(),
            Self::Tabulated { values, .. } => values.iter().all(|v| v.is_zero()),
        }
    }

    /// Weight of the `δ(t)` component.
    pub fn delta_weight(&self) -> R {
        match self {
            Self::FlatMarkovian { gamma } => gamma.sqrt(),
            _ => R::zero(),
        }
    }

    /// Continuous part of `κ(t)`.
    pub fn eval(&self, t: R) -> C<R> {
        match self {
            Self::FlatMarkovian { .. } => czero(),
            Self::Lorentzian { .. } if t < R::zero() => czero(),
            Self::Lorentzian { .. } => {
                let (c, z) = self.lorentz_parts();
                c * (-z * t).exp()
            }
            Self::Tabulated { t0, dt, values } => interpolate(*t0, *dt, values, t),
        }
    }

    /// `(i g √γ, iω_c + γ/2)` for a Lorentzian.
    fn lorentz_parts(&self) -> (C<R>, C<R>) {
        match *self {
            Self::Lorentzian { g, gamma, omega_c } => {
                let c = ci::<R>() * g * gamma.sqrt();
                let z = C::new(gamma * R::lit(0.5), omega_c);
                (c, z)
            }
            _ => unreachable!("not a Lorentzian kernel"),
        }
    }

    /// `κ(ω)` with the unitary `(2π)^{-1/2}` normalization.
    pub fn fourier(&self, omega: R) -> C<R> {
        let norm = R::one() / (R::lit(2.0) * R::PI()).sqrt();
        match self {
            Self::FlatMarkovian { gamma } => C::new(gamma.sqrt() * norm, R::zero()),
            Self::Lorentzian { .. } => {
                let (c, z) = self.lorentz_parts();
                c / (z - ci::<R>() * omega) * norm
            }
            Self::Tabulated { t0, dt, values } => {
                let samples: Vec<C<R>> = values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let t = *t0 + *dt * R::from_usize(k).unwrap();
                        *v * (ci::<R>() * omega * t).exp()
                    })
                    .collect();
                trapezoid(&samples, *dt) * norm
            }
        }
    }

    /// One-sided Laplace transform `κ(s)`; a delta at `t = 0` counts fully.
    pub fn laplace(&self, s: C<R>) -> Result<C<R>> {
        match self {
            Self::FlatMarkovian { gamma } => Ok(C::new(gamma.sqrt(), R::zero())),
            Self::Lorentzian { gamma, .. } => {
                if s.re <= -*gamma * R::lit(0.5) {
                    return Err(outside(s));
                }
                let (c, z) = self.lorentz_parts();
                Ok(c / (s + z))
            }
            Self::Tabulated { t0, dt, values } => {
                if !s.re.is_finite() || !s.im.is_finite() {
                    return Err(outside(s));
                }
                let samples: Vec<C<R>> = values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let t = *t0 + *dt * R::from_usize(k).unwrap();
                        if t < R::zero() {
                            czero()
                        } else {
                            *v * (-s * t).exp()
                        }
                    })
                    .collect();
                Ok(trapezoid(&samples, *dt))
            }
        }
    }

    /// Characteristic memory time (zero for a flat kernel).
    pub fn memory_time(&self) -> R {
        match self {
            Self::FlatMarkovian { .. } => R::zero(),
            Self::Lorentzian { gamma, .. } => R::lit(2.0) / *gamma,
            Self::Tabulated { dt, values, .. } => *dt * R::from_usize(values.len()).unwrap(),
        }
    }

    /// Largest oscillation frequency carried by the kernel.
    pub fn max_frequency(&self) -> R {
        match self {
            Self::Lorentzian { omega_c, .. } => omega_c.abs(),
            _ => R::zero(),
        }
    }

    /// Grid spacing fine enough to resolve this kernel with second-order
    /// quadrature: `(1/20) min(memory time, 2π / max frequency)`.
    pub fn resolution(&self) -> Option<R> {
        let mut scale = R::infinity();
        let mt = self.memory_time();
        if mt > R::zero() {
            scale = scale.min(mt);
        }
        let w = self.max_frequency();
        if w > R::zero() {
            scale = scale.min(R::lit(2.0) * R::PI() / w);
        }
        if let Self::Tabulated { dt, .. } = self {
            scale = scale.min(*dt * R::lit(20.0));
        }
        scale.is_finite().then(|| scale / R::lit(20.0))
    }

    /// Interval outside which the continuous part is negligible (or zero).
    pub fn support(&self) -> Option<(R, R)> {
        match self {
            Self::FlatMarkovian { .. } => None,
            Self::Lorentzian { gamma, .. } => Some((R::zero(), R::lit(80.0) / *gamma)),
            Self::Tabulated { t0, dt, values } => {
                Some((*t0, *t0 + *dt * R::from_usize(values.len() - 1).unwrap()))
            }
        }
    }

    /// Loads a tabulated kernel from CSV with a header row and columns
    /// `t, Re κ[, Im κ]` on a uniform time grid.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_csv_reader(f)
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let ncols = rdr.headers()?.len();
        if !(2..=3).contains(&ncols) {
            return Err(Error::Parse(format!("kernel CSV needs 2 or 3 columns, found {ncols}")));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != ncols {
                return Err(Error::Parse(format!("row {}: expected {ncols} fields", row + 2)));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", row + 2)))
            };
            times.push(num(0)?);
            let im = if ncols == 3 { num(2)? } else { 0.0 };
            values.push(C::new(R::lit(num(1)?), R::lit(im)));
        }
        if times.len() < 2 {
            return Err(Error::Parse("kernel CSV needs at least two samples".into()));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::Parse("kernel time grid must be increasing".into()));
        }
        for (k, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > GRID_TOL.max(1e-9 * dt) * (1.0 + dt) {
                return Err(Error::Parse(format!("non-uniform time grid at row {}", k + 3)));
            }
        }
        Self::tabulated(R::lit(times[0]), R::lit(dt), values)
    }
}

fn outside<R: Real>(s: C<R>) -> Error {
    Error::OutsideConvergence { re: s.re.to_f64().unwrap_or(f64::NAN), im: s.im.to_f64().unwrap_or(f64::NAN) }
}

fn interpolate<R: Real>(t0: R, dt: R, values: &[C<R>], t: R) -> C<R> {
    let x = (t - t0) / dt;
    if !(x >= R::zero()) {
        return czero();
    }
    let last = R::from_usize(values.len() - 1).unwrap();
    if x > last {
        return czero();
    }
    let k = x.floor().to_usize().unwrap().min(values.len() - 1);
    if k + 1 >= values.len() {
        return values[k];
    }
    let frac = x - R::from_usize(k).unwrap();
    values[k] * (R::one() - frac) + values[k + 1] * frac
}

fn trapezoid<R: Real>(samples: &[C<R>], h: R) -> C<R> {
    let n = samples.len();
    if n < 2 {
        return czero();
    }
    let inner = samples[1..n - 1].iter().fold(czero::<R>(), |a, z| a + *z);
    (inner + (samples[0] + samples[n - 1]) * R::lit(0.5)) * h
}

/// `amp · exp(rate · |Δ|)` on one side of the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm<R: Real = f64> {
    pub amp: C<R>,
    /// Must have negative real part (decaying away from the origin).
    pub rate: C<R>,
}

impl<R: Real> ExpTerm<R> {
    fn at(&self, x: R) -> C<R> {
        self.amp * (self.rate * x).exp()
    }

    /// `∫_0^t amp e^{rate s} e^{-iωs} ds`.
    fn integral(&self, t: R, omega: R) -> C<R> {
        let z = self.rate - ci::<R>() * omega;
        if z.norm() < R::epsilon() * R::lit(16.0) {
            return self.amp * t;
        }
        self.amp * ((z * t).exp() - cone::<R>()) / z
    }

    /// `∫_0^∞ amp e^{rate s} e^{-ps} ds`.
    fn laplace(&self, p: C<R>) -> Option<C<R>> {
        let z = p - self.rate;
        (z.re > R::zero()).then(|| self.amp / z)
    }
}

/// Sum of one-sided exponentials plus a delta at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpCorrelation<R: Real = f64> {
    pub delta: C<R>,
    /// Terms for `Δ > 0`, in the variable `Δ`.
    pub positive: Vec<ExpTerm<R>>,
    /// Terms for `Δ < 0`, in the variable `|Δ|`.
    pub negative: Vec<ExpTerm<R>>,
}

/// Correlation sampled on the symmetric grid `Δ = j·h`, `|j| ≤ half_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCorrelation<R: Real = f64> {
    pub h: R,
    pub values: Vec<C<R>>,
}

impl<R: Real> SampledCorrelation<R> {
    fn half_len(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    fn at(&self, delta: R) -> C<R> {
        let half = R::from_usize(self.half_len()).unwrap();
        interpolate(-half * self.h, self.h, &self.values, delta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationKernel<R: Real = f64> {
    Analytic(ExpCorrelation<R>),
    Numeric(SampledCorrelation<R>),
}

/// Which side of the origin a one-sided integral runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `Δ = s ≥ 0`
    Positive,
    /// `Δ = −s ≤ 0`
    Negative,
}

impl<R: Real> CorrelationKernel<R> {
    pub fn zero() -> Self {
        Self::Analytic(ExpCorrelation { delta: czero(), positive: vec![], negative: vec![] })
    }

    pub fn delta_weight(&self) -> C<R> {
        match self {
            Self::Analytic(e) => e.delta,
            Self::Numeric(_) => czero(),
        }
    }

    /// Continuous part at `Δ`; at `Δ = 0` the mean of both one-sided limits.
    pub fn eval(&self, delta: R) -> C<R> {
        if delta > R::zero() {
            self.branch(Branch::Positive, delta)
        } else if delta < R::zero() {
            self.branch(Branch::Negative, -delta)
        } else {
            (self.branch(Branch::Positive, R::zero()) + self.branch(Branch::Negative, R::zero())) * R::lit(0.5)
        }
    }

    /// One-sided value at lag `s ≥ 0` on the chosen side (limit at `s = 0`).
    pub fn branch(&self, side: Branch, s: R) -> C<R> {
        match self {
            Self::Analytic(e) => {
                let terms = match side {
                    Branch::Positive => &e.positive,
                    Branch::Negative => &e.negative,
                };
                terms.iter().fold(czero(), |acc, t| acc + t.at(s))
            }
            Self::Numeric(n) => match side {
                Branch::Positive => n.at(s),
                Branch::Negative => n.at(-s),
            },
        }
    }

    /// `∫_0^t γ(±s) e^{-iωs} ds`, with half of any delta weight.
    pub fn phase_integral(&self, side: Branch, t: R, omega: R) -> C<R> {
        if t < R::zero() {
            return czero();
        }
        match self {
            Self::Analytic(e) => {
                let terms = match side {
                    Branch::Positive => &e.positive,
                    Branch::Negative => &e.negative,
                };
                terms.iter().fold(e.delta * R::lit(0.5), |acc, term| acc + term.integral(t, omega))
            }
            Self::Numeric(n) => {
                let steps = (t / n.h * R::lit(4.0)).ceil().to_usize().unwrap().max(2);
                let h = t / R::from_usize(steps).unwrap();
                let samples: Vec<C<R>> = (0..=steps)
                    .map(|k| {
                        let s = h * R::from_usize(k).unwrap();
                        self.branch(side, s) * C::new(R::zero(), -omega * s).exp()
                    })
                    .collect();
                trapezoid(&samples, h)
            }
        }
    }

    /// `∫_0^∞ e^{-pt} γ(−t) dt + ½·delta`: the memory-kernel transform entering
    /// a linear node's damping, `d(s) = s + (this)`.
    pub fn laplace_memory(&self, p: C<R>) -> Result<C<R>> {
        match self {
            Self::Analytic(e) => e.negative.iter().try_fold(e.delta * R::lit(0.5), |acc, term| {
                term.laplace(p).map(|v| acc + v).ok_or_else(|| outside(p))
            }),
            Self::Numeric(n) => {
                let half = n.half_len();
                let samples: Vec<C<R>> = (0..=half)
                    .map(|k| {
                        let t = n.h * R::from_usize(k).unwrap();
                        n.values[half - k] * (-p * t).exp()
                    })
                    .collect();
                Ok(trapezoid(&samples, n.h))
            }
        }
    }

    /// `γ(s)` in the convention where a flat kernel gives `γ(s) = γ`
    /// (twice [`laplace_memory`](Self::laplace_memory)).
    pub fn laplace(&self, p: C<R>) -> Result<C<R>> {
        Ok(self.laplace_memory(p)? * R::lit(2.0))
    }

    /// Lag beyond which every continuous component is below `rel` of its
    /// peak magnitude. Zero for a pure delta.
    pub fn horizon(&self, rel: R) -> R {
        match self {
            Self::Analytic(e) => {
                let peak = e
                    .positive
                    .iter()
                    .chain(&e.negative)
                    .fold(R::zero(), |m, t| m.max(t.amp.norm()));
                if peak.is_zero() {
                    return R::zero();
                }
                e.positive.iter().chain(&e.negative).fold(R::zero(), |h, t| {
                    let decay = -t.rate.re;
                    if t.amp.norm() <= rel * peak {
                        h
                    } else if decay <= R::zero() {
                        R::infinity()
                    } else {
                        h.max((t.amp.norm() / (rel * peak)).ln() / decay)
                    }
                })
            }
            Self::Numeric(n) => {
                let peak = n.values.iter().fold(R::zero(), |m, v| m.max(v.norm()));
                if peak.is_zero() {
                    return R::zero();
                }
                let half = n.half_len();
                let last = (0..=half)
                    .filter(|&k| n.values[half + k].norm() >= rel * peak || n.values[half - k].norm() >= rel * peak)
                    .max()
                    .unwrap_or(0);
                n.h * R::from_usize(last + 1).unwrap()
            }
        }
    }

    /// Largest oscillation frequency in the continuous part.
    pub fn max_frequency(&self) -> R {
        match self {
            Self::Analytic(e) => e.positive.iter().chain(&e.negative).fold(R::zero(), |m, t| m.max(t.rate.im.abs())),
            Self::Numeric(_) => R::zero(),
        }
    }

    /// Largest decay rate in the continuous part (inverse memory time).
    pub fn max_decay_rate(&self) -> R {
        match self {
            Self::Analytic(e) => e.positive.iter().chain(&e.negative).fold(R::zero(), |m, t| m.max(-t.rate.re)),
            Self::Numeric(n) => R::one() / (n.h * R::lit(20.0)),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Analytic(e) => e.delta.is_zero() && e.positive.iter().chain(&e.negative).all(|t| t.amp.is_zero()),
            Self::Numeric(n) => n.values.iter().all(|v| v.is_zero()),
        }
    }
}

/// `γ_lr(Δ) = ∫ κ_r*(u) κ_l(u − Δ) du`.
pub fn correlation<R: Real>(left: &CouplingKernel<R>, right: &CouplingKernel<R>) -> Result<CorrelationKernel<R>> {
    use CouplingKernel::*;
    if left.is_zero() || right.is_zero() {
        return Ok(CorrelationKernel::zero());
    }
    let exp = |delta: C<R>, positive: Vec<ExpTerm<R>>, negative: Vec<ExpTerm<R>>| {
        Ok(CorrelationKernel::Analytic(ExpCorrelation { delta, positive, negative }))
    };
    match (left, right) {
        (FlatMarkovian { gamma: a }, FlatMarkovian { gamma: b }) => {
            exp(C::new((*a * *b).sqrt(), R::zero()), vec![], vec![])
        }
        (Lorentzian { .. }, Lorentzian { .. }) => {
            let (cl, zl) = left.lorentz_parts();
            let (cr, zr) = right.lorentz_parts();
            let amp = cr.conj() * cl / (zr.conj() + zl);
            exp(czero(), vec![ExpTerm { amp, rate: -zr.conj() }], vec![ExpTerm { amp, rate: -zl }])
        }
        // √a κ_r*(Δ), supported on Δ ≥ 0
        (FlatMarkovian { gamma: a }, Lorentzian { .. }) => {
            let (cr, zr) = right.lorentz_parts();
            exp(czero(), vec![ExpTerm { amp: cr.conj() * a.sqrt(), rate: -zr.conj() }], vec![])
        }
        // √b κ_l(−Δ), supported on Δ ≤ 0
        (Lorentzian { .. }, FlatMarkovian { gamma: b }) => {
            let (cl, zl) = left.lorentz_parts();
            exp(czero(), vec![], vec![ExpTerm { amp: cl * b.sqrt(), rate: -zl }])
        }
        _ => sampled_correlation(left, right),
    }
}

fn sampled_correlation<R: Real>(left: &CouplingKernel<R>, right: &CouplingKernel<R>) -> Result<CorrelationKernel<R>> {
    use CouplingKernel::*;
    let h = match (left, right) {
        (Tabulated { dt: a, .. }, Tabulated { dt: b, .. }) => {
            if (*a - *b).abs() > R::lit(GRID_TOL) * *a {
                return Err(Error::IncompatibleGrids { left: a.to_f64().unwrap(), right: b.to_f64().unwrap() });
            }
            *a
        }
        (Tabulated { dt, .. }, _) | (_, Tabulated { dt, .. }) => *dt,
        _ => unreachable!("analytic pairs handled by the caller"),
    };
    // flat partner: γ = √a κ_r*(Δ) or √b κ_l(−Δ), no overlap integral needed
    if let FlatMarkovian { gamma } = left {
        let (lo, hi) = right.support().unwrap();
        let half = lattice_half(lo, hi, h);
        let values = (0..=2 * half)
            .map(|j| {
                let d = h * (R::from_usize(j).unwrap() - R::from_usize(half).unwrap());
                right.eval(d).conj() * gamma.sqrt()
            })
            .collect();
        return Ok(CorrelationKernel::Numeric(SampledCorrelation { h, values }));
    }
    if let FlatMarkovian { gamma } = right {
        let (lo, hi) = left.support().unwrap();
        let half = lattice_half(lo, hi, h);
        let values = (0..=2 * half)
            .map(|j| {
                let d = h * (R::from_usize(j).unwrap() - R::from_usize(half).unwrap());
                left.eval(-d) * gamma.sqrt()
            })
            .collect();
        return Ok(CorrelationKernel::Numeric(SampledCorrelation { h, values }));
    }
    let (llo, lhi) = left.support().unwrap();
    let (rlo, rhi) = right.support().unwrap();
    let lo = llo.min(rlo);
    let hi = lhi.max(rhi);
    let start = (lo / h).floor();
    let count = ((hi / h).ceil() - start).to_usize().unwrap() + 1;
    let at = |k: usize| h * (start + R::from_usize(k).unwrap());
    let kl: Vec<C<R>> = (0..count).map(|k| left.eval(at(k))).collect();
    let kr: Vec<C<R>> = (0..count).map(|k| right.eval(at(k)).conj()).collect();
    let index_range = |lo: R, hi: R| {
        let first = ((lo / h).round() - start).max(R::zero()).to_isize().unwrap();
        let last = ((hi / h).round() - start).to_isize().unwrap().min(count as isize - 1);
        (first, last)
    };
    let (lfirst, llast) = index_range(llo, lhi);
    let (rfirst, rlast) = index_range(rlo, rhi);
    let half = count;
    let mut values = Vec::with_capacity(2 * half + 1);
    for j in 0..=2 * half {
        let shift = j as isize - half as isize;
        // trapezoid over the overlap of both supports, u_k − Δ_j on the lattice
        let first = rfirst.max(lfirst + shift);
        let last = rlast.min(llast + shift);
        let mut acc = czero::<R>();
        if first <= last {
            for k in first..=last {
                let term = kr[k as usize] * kl[(k - shift) as usize];
                acc += if k == first || k == last { term * R::lit(0.5) } else { term };
            }
        }
        values.push(acc * h);
    }
    Ok(CorrelationKernel::Numeric(SampledCorrelation { h, values }))
}

fn lattice_half<R: Real>(lo: R, hi: R, h: R) -> usize {
    (lo.abs().max(hi.abs()) / h).ceil().to_usize().unwrap() + 1
}

/// Causal part `γ^θ_lr`: `γ_lr(Δ)` for `Δ < 0`, zero for `Δ > 0`, with the
/// delta weight kept (it enters one-sided integrals at half weight).
pub fn theta_correlation<R: Real>(left: &CouplingKernel<R>, right: &CouplingKernel<R>) -> Result<CorrelationKernel<R>> {
    Ok(match correlation(left, right)? {
        CorrelationKernel::Analytic(mut e) => {
            e.positive.clear();
            CorrelationKernel::Analytic(e)
        }
        CorrelationKernel::Numeric(mut n) => {
            let half = n.half_len();
            for v in n.values.iter_mut().skip(half + 1) {
                *v = czero();
            }
            // the Δ = 0 sample is shared with the mirrored half
            n.values[half] *= R::lit(0.5);
            CorrelationKernel::Numeric(n)
        }
    })
}

pub fn laplace<R: Real>(kernel: &CouplingKernel<R>, s: C<R>) -> Result<C<R>> {
    kernel.laplace(s)
}

pub fn laplace_correlation<R: Real>(gamma: &CorrelationKernel<R>, s: C<R>) -> Result<C<R>> {
    gamma.laplace(s)
}

pub fn fourier<R: Real>(kernel: &CouplingKernel<R>, omega: R) -> C<R> {
    kernel.fourier(omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use num_complex::Complex64;

    fn lor(g: f64, gamma: f64, wc: f64) -> CouplingKernel {
        CouplingKernel::lorentzian(g, gamma, wc).unwrap()
    }

    /// Brute-force `∫ κ_r*(t − τ) κ_l(t̃ − τ) dτ` with `Δ = t − t̃`, integrating
    /// over τ directly from the kernel samples.
    fn brute_correlation(l: &CouplingKernel, r: &CouplingKernel, delta: f64) -> Complex64 {
        let t = delta.max(0.0);
        let tt = t - delta;
        let upper = t.min(tt);
        let lower = upper - 80.0;
        quad::integrate(|tau| r.eval(t - tau).conj() * l.eval(tt - tau), lower, upper, 1e-13)
    }

    #[test]
    fn flat_pair_is_pure_delta() {
        let c = correlation(&CouplingKernel::flat(0.3).unwrap(), &CouplingKernel::flat(1.2).unwrap()).unwrap();
        assert!((c.delta_weight().re - (0.3f64 * 1.2).sqrt()).abs() < 1e-15);
        assert!(c.eval(0.5).norm() == 0.0 && c.eval(-0.5).norm() == 0.0);
        let th = theta_correlation(&CouplingKernel::flat(0.3).unwrap(), &CouplingKernel::flat(1.2).unwrap()).unwrap();
        assert_eq!(th.delta_weight(), c.delta_weight());
    }

    #[test]
    fn lorentzian_self_correlation_envelope() {
        let (g, gamma, wc) = (0.7, 1.3, 2.0);
        let c = correlation(&lor(g, gamma, wc), &lor(g, gamma, wc)).unwrap();
        for d in [-3.0, -0.4, 0.0, 0.2, 1.7, 5.0] {
            let want = g * g * f64::exp(-gamma * f64::abs(d) / 2.0);
            assert!((c.eval(d).norm() - want).abs() < 1e-13, "Δ = {d}");
            let phase = Complex64::new(0.0, wc * d).exp() * want;
            assert!((c.eval(d) - phase).norm() < 1e-13);
        }
        // γ(0) real, ≥ 0 and equal to ∫|κ|²
        let norm = quad::integrate(|t| Complex64::new(lor(g, gamma, wc).eval(t).norm_sqr(), 0.0), 0.0, 80.0, 1e-13);
        assert!(c.eval(0.0).im.abs() < 1e-15);
        assert!((c.eval(0.0).re - norm.re).abs() < 1e-8);
    }

    #[test]
    fn lorentzian_correlation_matches_brute_force() {
        let pairs = [(lor(0.5, 1.0, 0.3), lor(0.8, 2.0, -0.7)), (lor(0.3, 0.4, 0.0), lor(0.3, 0.4, 0.0))];
        for (l, r) in &pairs {
            let c = correlation(l, r).unwrap();
            let th = theta_correlation(l, r).unwrap();
            for k in -20..=20 {
                let d = k as f64 * 0.37 + 0.01;
                let brute = brute_correlation(l, r, d);
                assert!((c.eval(d) - brute).norm() < 1e-8, "Δ = {d}");
                let brute_theta = if d < 0.0 { brute } else { Complex64::new(0.0, 0.0) };
                assert!((th.eval(d) - brute_theta).norm() < 1e-8, "θ, Δ = {d}");
            }
        }
    }

    #[test]
    fn mixed_flat_lorentzian_matches_brute_force() {
        let l = lor(0.5, 1.0, 0.3);
        let f = CouplingKernel::flat(0.8).unwrap();
        let fl = correlation(&f, &l).unwrap();
        let lf = correlation(&l, &f).unwrap();
        for d in [-2.0, -0.5, 0.5, 2.0] {
            // closed forms from the δ: √a κ_r*(Δ) and √b κ_l(−Δ)
            assert!((fl.eval(d) - l.eval(d).conj() * 0.8f64.sqrt()).norm() < 1e-14);
            assert!((lf.eval(d) - l.eval(-d) * 0.8f64.sqrt()).norm() < 1e-14);
        }
    }

    #[test]
    fn hermitian_symmetry_and_theta_decomposition() {
        let l = lor(0.5, 1.0, 0.3);
        let r = lor(0.8, 2.0, -0.7);
        let lr = correlation(&l, &r).unwrap();
        let rl = correlation(&r, &l).unwrap();
        let th_lr = theta_correlation(&l, &r).unwrap();
        let th_rl = theta_correlation(&r, &l).unwrap();
        for k in -40..=40 {
            let d = k as f64 * 0.11 + 0.003;
            assert!((lr.eval(d) - rl.eval(-d).conj()).norm() < 1e-14);
            let recon = th_lr.eval(d) + th_rl.eval(-d).conj();
            assert!((recon - lr.eval(d)).norm() < 1e-8);
        }
    }

    #[test]
    fn lorentzian_envelope_monotone() {
        let c = correlation(&lor(1.0, 0.6, 3.0), &lor(1.0, 0.6, 3.0)).unwrap();
        let mags: Vec<f64> = (0..200).map(|k| c.eval(k as f64 * 0.05).norm()).collect();
        assert!(mags.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn zero_kernels_give_zero_correlation() {
        let z = lor(0.0, 1.0, 0.0);
        assert!(correlation(&z, &lor(1.0, 1.0, 0.0)).unwrap().is_zero());
        assert!(theta_correlation(&lor(1.0, 1.0, 0.0), &z).unwrap().is_zero());
        assert!(z.fourier(0.3).norm() == 0.0);
    }

    #[test]
    fn laplace_closed_forms() {
        let f = CouplingKernel::flat(0.9).unwrap();
        let s = Complex64::new(0.4, 1.1);
        assert!((f.laplace(s).unwrap() - Complex64::new(0.9f64.sqrt(), 0.0)).norm() < 1e-15);
        let ff = correlation(&f, &f).unwrap();
        assert!((ff.laplace(s).unwrap() - Complex64::new(0.9, 0.0)).norm() < 1e-15);

        let (g, gamma, wc) = (0.5, 1.2, 0.8);
        let k = lor(g, gamma, wc);
        let closed = Complex64::new(0.0, g * gamma.sqrt()) / (s + Complex64::new(gamma / 2.0, wc));
        assert!((k.laplace(s).unwrap() - closed).norm() < 1e-15);
        let numeric = quad::integrate(|t| (-s * t).exp() * k.eval(t), 0.0, 80.0, 1e-13);
        assert!((numeric - closed).norm() < 1e-10);
        assert!(matches!(k.laplace(Complex64::new(-1.0, 0.0)), Err(Error::OutsideConvergence { .. })));
        // large Re(s): → κ(0⁺)/Re(s) → 0
        let big = Complex64::new(1e8, 0.0);
        assert!((k.laplace(big).unwrap() * 1e8 - k.eval(0.0)).norm() < 1e-6);
    }

    #[test]
    fn fourier_conventions() {
        let f = CouplingKernel::flat(0.9).unwrap();
        for w in [-3.0, 0.0, 2.5] {
            assert!((f.fourier(w).norm_sqr() - 0.9 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        }
        let (g, gamma, wc) = (0.5, 1.2, 0.8);
        let k = lor(g, gamma, wc);
        let two_pi = 2.0 * std::f64::consts::PI;
        // 2π|κ(ω)|² = g²γ / (γ²/4 + (ω − ω_c)²); at the centre 4g²/γ
        assert!((two_pi * k.fourier(wc).norm_sqr() - 4.0 * g * g / gamma).abs() < 1e-13);
        for w in [-2.0, 0.1, 3.0] {
            let want = g * g * gamma / (gamma * gamma / 4.0 + (w - wc) * (w - wc));
            assert!((two_pi * k.fourier(w).norm_sqr() - want).abs() < 1e-13);
            // Laplace on the imaginary axis is the causal transform: κ(s = −iω) = √(2π) κ(ω)
            let lap = k.laplace(Complex64::new(0.0, -w)).unwrap();
            assert!((lap - k.fourier(w) * two_pi.sqrt()).norm() < 1e-8);
        }
    }

    #[test]
    fn tabulated_matches_lorentzian() {
        let (g, gamma, wc) = (0.6, 1.0, 0.5);
        let l = lor(g, gamma, wc);
        let h = 0.01;
        let values: Vec<Complex64> = (0..6000).map(|k| l.eval(k as f64 * h)).collect();
        let t = CouplingKernel::tabulated(0.0, h, values).unwrap();
        let ct = correlation(&t, &t).unwrap();
        let cl = correlation(&l, &l).unwrap();
        for d in [-1.0, -0.3, 0.3, 1.0] {
            assert!((ct.eval(d) - cl.eval(d)).norm() < 2e-4, "Δ = {d}");
        }
        let mixed = correlation(&t, &l).unwrap();
        assert!((mixed.eval(0.5) - cl.eval(0.5)).norm() < 2e-4);
        let other = CouplingKernel::tabulated(0.0, 0.02, vec![Complex64::new(1.0, 0.0); 4]).unwrap();
        assert!(matches!(correlation(&t, &other), Err(Error::IncompatibleGrids { .. })));
    }

    #[test]
    fn phase_integral_closed_form_vs_quadrature() {
        let c = correlation(&lor(0.4, 0.9, 0.6), &lor(0.7, 1.4, -0.2)).unwrap();
        for side in [Branch::Positive, Branch::Negative] {
            let closed = c.phase_integral(side, 3.0, 0.35);
            let q = quad::integrate(|s| c.branch(side, s) * Complex64::new(0.0, -0.35 * s).exp(), 0.0, 3.0, 1e-13);
            assert!((closed - q).norm() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let text = "t,re,im\n0.0,1.0,0.5\n0.1,0.5,0.25\n0.2,0.25,0.0\n";
        let k = CouplingKernel::<f64>::from_csv_reader(text.as_bytes()).unwrap();
        match &k {
            CouplingKernel::Tabulated { dt, values, .. } => {
                assert!((dt - 0.1).abs() < 1e-15);
                assert_eq!(values.len(), 3);
            }
            _ => panic!("expected tabulated"),
        }
        assert!((k.eval(0.05) - Complex64::new(0.75, 0.375)).norm() < 1e-12);
        let two = "t,re\n0,1\n1,2\n";
        assert!(CouplingKernel::<f64>::from_csv_reader(two.as_bytes()).is_ok());
        let uneven = "t,re\n0,1\n1,2\n3,2\n";
        assert!(CouplingKernel::<f64>::from_csv_reader(uneven.as_bytes()).is_err());
        let headerless_short = "t\n0\n";
        assert!(CouplingKernel::<f64>::from_csv_reader(headerless_short.as_bytes()).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(CouplingKernel::<f64>::lorentzian(1.0, 0.0, 0.0).is_err());
        assert!(CouplingKernel::<f64>::flat(-1.0).is_err());
        assert!(CouplingKernel::<f64>::tabulated(0.0, 0.0, vec![Complex64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn single_precision_kernels() {
        let k = CouplingKernel::<f32>::lorentzian(0.5, 1.0, 0.0).unwrap();
        let c = correlation(&k, &k).unwrap();
        assert!((c.eval(0.0).re - 0.25).abs() < 1e-6);
    }
}
