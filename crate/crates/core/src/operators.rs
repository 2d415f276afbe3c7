//! Operators and density matrices on small tensor-product Hilbert spaces.
//!
//! Two-level systems use the basis `|g⟩ = 0`, `|e⟩ = 1`, so the ground state of
//! any register (qubits or truncated oscillators) is the all-zeros basis
//! vector. With that ordering `σ₋ = |g⟩⟨e|` coincides with the `N = 2`
//! truncated annihilation operator and `σ_z = |e⟩⟨e| − |g⟩⟨g|`.

use std::ops::{Add, Mul, Neg, Sub};

use ndarray::Array1;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::scalar::{ci, cone, cplx, czero, Real, C};

pub const DEFAULT_DIMENSION_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    dims: Vec<usize>,
}

impl HilbertSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        Self::with_cap(dims, DEFAULT_DIMENSION_CAP)
    }

    pub fn with_cap(dims: Vec<usize>, cap: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSpace("no subsystems".into()));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidSpace(format!("subsystem dimension {d} < 2")));
        }
        let dim = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .unwrap_or(usize::MAX);
        if dim > cap {
            return Err(Error::DimensionCap { dim, cap });
        }
        Ok(Self { dims })
    }

    pub fn qubits(n: usize) -> Result<Self> {
        Self::new(vec![2; n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Joint space `self ⊗ other`.
    pub fn tensor(&self, other: &HilbertSpace) -> Result<Self> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self::new(dims)
    }

    /// Decomposes a flat basis index into per-subsystem levels.
    pub fn levels(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator<R: Real = f64> {
    space: HilbertSpace,
    matrix: CMat<R>,
}

impl<R: Real> Operator<R> {
    pub fn new(space: HilbertSpace, matrix: CMat<R>) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: matrix.nrows().max(matrix.ncols()) });
        }
        Ok(Self { space, matrix })
    }

    /// Operator on a single subsystem whose dimension is the matrix size.
    pub fn single(matrix: CMat<R>) -> Result<Self> {
        let space = HilbertSpace::new(vec![matrix.nrows()])?;
        Self::new(space, matrix)
    }

    pub fn zero(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self { space: space.clone(), matrix: linalg::zeros(d) }
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self { space: space.clone(), matrix: linalg::identity(d) }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMat<R> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat<R> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn dagger(&self) -> Self {
        Self { space: self.space.clone(), matrix: linalg::dagger(&self.matrix) }
    }

    pub fn scale(&self, c: C<R>) -> Self {
        Self { space: self.space.clone(), matrix: self.matrix.mapv(|z| z * c) }
    }

    pub fn hermiticity_deviation(&self) -> R {
        linalg::hermiticity_deviation(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: R) -> bool {
        self.hermiticity_deviation() <= tol
    }

    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        same_space(&self.space, &rhs.space)?;
        Ok(Self { space: self.space.clone(), matrix: self.matrix.dot(&rhs.matrix) })
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self> {
        same_space(&self.space, &rhs.space)?;
        Ok(Self { space: self.space.clone(), matrix: &self.matrix + &rhs.matrix })
    }

    pub fn spectral_norm(&self) -> R {
        linalg::spectral_norm(&self.matrix)
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|z| z.is_zero())
    }
}

impl<R: Real> Add for &Operator<R> {
    type Output = Operator<R>;
    /// Panics on mismatched spaces; use [`Operator::try_add`] for a checked sum.
    fn add(self, rhs: Self) -> Operator<R> {
        self.try_add(rhs).expect("operator spaces differ")
    }
}

impl<R: Real> Sub for &Operator<R> {
    type Output = Operator<R>;
    fn sub(self, rhs: Self) -> Operator<R> {
        same_space(&self.space, &rhs.space).expect("operator spaces differ");
        Operator { space: self.space.clone(), matrix: &self.matrix - &rhs.matrix }
    }
}

impl<R: Real> Mul for &Operator<R> {
    type Output = Operator<R>;
    fn mul(self, rhs: Self) -> Operator<R> {
        self.compose(rhs).expect("operator spaces differ")
    }
}

impl<R: Real> Neg for &Operator<R> {
    type Output = Operator<R>;
    fn neg(self) -> Operator<R> {
        self.scale(-cone::<R>())
    }
}

fn same_space(a: &HilbertSpace, b: &HilbertSpace) -> Result<()> {
    if a != b {
        return Err(Error::SpaceMismatch { left: a.dims().to_vec(), right: b.dims().to_vec() });
    }
    Ok(())
}

/// Density matrix with unit trace and Hermiticity checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix<R: Real = f64> {
    space: HilbertSpace,
    rho: CMat<R>,
}

impl<R: Real> StateMatrix<R> {
    pub fn new(space: HilbertSpace, rho: CMat<R>) -> Result<Self> {
        let d = space.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: rho.nrows() });
        }
        let tol = R::structural_tol();
        let tr = linalg::trace(&rho);
        if (tr - cone::<R>()).norm() > tol {
            return Err(Error::InvalidState(format!("trace {} != 1", tr)));
        }
        let dev = linalg::hermiticity_deviation(&rho);
        if dev > tol {
            return Err(Error::NotHermitian { deviation: dev.to_f64().unwrap_or(f64::NAN), context: Some("density matrix".into()) });
        }
        Ok(Self { space, rho })
    }

    /// Wraps an integrator output without re-validating it; callers track
    /// the invariants themselves.
    pub(crate) fn from_raw(space: HilbertSpace, rho: CMat<R>) -> Self {
        Self { space, rho }
    }

    pub fn pure(space: HilbertSpace, ket: &[C<R>]) -> Result<Self> {
        if ket.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: ket.len() });
        }
        let norm = ket.iter().fold(R::zero(), |a, z| a + z.norm_sqr()).sqrt();
        if norm <= R::zero() {
            return Err(Error::InvalidState("zero vector".into()));
        }
        let v: Array1<C<R>> = ket.iter().map(|z| *z / norm).collect();
        let d = v.len();
        let rho = CMat::from_shape_fn((d, d), |(i, j)| v[i] * v[j].conj());
        Self::new(space, rho)
    }

    pub fn basis(space: HilbertSpace, index: usize) -> Result<Self> {
        let d = space.dim();
        if index >= d {
            return Err(Error::InvalidState(format!("basis index {index} >= dimension {d}")));
        }
        let mut ket = vec![czero::<R>(); d];
        ket[index] = cone();
        Self::pure(space, &ket)
    }

    /// All subsystems in their lowest level.
    pub fn ground(space: HilbertSpace) -> Self {
        Self::basis(space, 0).expect("index 0 always valid")
    }

    /// All subsystems in their highest level.
    pub fn top(space: HilbertSpace) -> Self {
        let d = space.dim();
        Self::basis(space, d - 1).expect("last index valid")
    }

    pub fn maximally_mixed(space: HilbertSpace) -> Self {
        let d = space.dim();
        let rho = linalg::identity::<R>(d).mapv(|z| z / R::from_usize(d).unwrap());
        Self { space, rho }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMat<R> {
        &self.rho
    }

    pub fn into_matrix(self) -> CMat<R> {
        self.rho
    }

    pub fn trace(&self) -> C<R> {
        linalg::trace(&self.rho)
    }

    pub fn expectation(&self, op: &Operator<R>) -> Result<C<R>> {
        same_space(&self.space, op.space())?;
        Ok(linalg::trace(&self.rho.dot(op.matrix())))
    }

    pub fn eigenvalues(&self) -> Vec<R> {
        linalg::hermitian_eigenvalues(&self.rho)
    }

    pub fn min_eigenvalue(&self) -> R {
        self.eigenvalues()[0]
    }

    pub fn purity(&self) -> R {
        linalg::trace(&self.rho.dot(&self.rho)).re
    }

    /// Probability that subsystem `site` is in `level`.
    pub fn population(&self, site: usize, level: usize) -> Result<R> {
        let dims = self.space.dims();
        if site >= dims.len() {
            return Err(Error::SiteOutOfRange { site, len: dims.len() });
        }
        if level >= dims[site] {
            return Err(Error::InvalidState(format!("level {level} >= dimension {}", dims[site])));
        }
        let mut p = R::zero();
        for i in 0..self.space.dim() {
            if self.space.levels(i)[site] == level {
                p += self.rho[[i, i]].re;
            }
        }
        Ok(p)
    }

    pub fn trace_distance(&self, other: &Self) -> Result<R> {
        same_space(&self.space, &other.space)?;
        Ok(linalg::trace_distance(&self.rho, &other.rho))
    }

    /// Partial trace keeping `sites` (in ascending order).
    pub fn reduced(&self, sites: &[usize]) -> Result<Self> {
        let dims = self.space.dims();
        for (k, &s) in sites.iter().enumerate() {
            if s >= dims.len() {
                return Err(Error::SiteOutOfRange { site: s, len: dims.len() });
            }
            if k > 0 && s <= sites[k - 1] {
                return Err(Error::InvalidSpace("kept sites must be strictly ascending".into()));
            }
        }
        let space = HilbertSpace::new(sites.iter().map(|&s| dims[s]).collect())?;
        let d = self.space.dim();
        let traced: Vec<usize> = (0..dims.len()).filter(|s| !sites.contains(s)).collect();
        let index = |levels: &[usize]| sites.iter().fold(0, |acc, &s| acc * dims[s] + levels[s]);
        let levels: Vec<Vec<usize>> = (0..d).map(|i| self.space.levels(i)).collect();
        let mut out = linalg::zeros::<R>(space.dim());
        for i in 0..d {
            for j in 0..d {
                if traced.iter().all(|&s| levels[i][s] == levels[j][s]) {
                    out[[index(&levels[i]), index(&levels[j])]] += self.rho[[i, j]];
                }
            }
        }
        Ok(Self { space, rho: out })
    }

    /// Conjugates by a unitary: `U ρ U†`.
    pub fn transformed(&self, u: &CMat<R>) -> Self {
        Self { space: self.space.clone(), rho: u.dot(&self.rho).dot(&linalg::dagger(u)) }
    }
}

/// `identity ⊗ … ⊗ op ⊗ … ⊗ identity` with `op` at `site`.
pub fn embed<R: Real>(op: &Operator<R>, site: usize, space: &HilbertSpace) -> Result<Operator<R>> {
    let dims = space.dims();
    if site >= dims.len() {
        return Err(Error::SiteOutOfRange { site, len: dims.len() });
    }
    if op.dim() != dims[site] {
        return Err(Error::DimensionMismatch { expected: dims[site], found: op.dim() });
    }
    let mut m = linalg::identity::<R>(1);
    for (k, &d) in dims.iter().enumerate() {
        let factor = if k == site { op.matrix().clone() } else { linalg::identity(d) };
        m = linalg::kron(&m, &factor);
    }
    Operator::new(space.clone(), m)
}

/// Embeds an operator acting on the consecutive block of subsystems starting
/// at `first_site` (used for nodes whose local space spans several factors).
pub fn embed_block<R: Real>(op: &Operator<R>, first_site: usize, space: &HilbertSpace) -> Result<Operator<R>> {
    let dims = space.dims();
    let block = op.space().dims();
    if first_site + block.len() > dims.len() {
        return Err(Error::SiteOutOfRange { site: first_site + block.len() - 1, len: dims.len() });
    }
    if &dims[first_site..first_site + block.len()] != block {
        return Err(Error::DimensionMismatch { expected: dims[first_site..first_site + block.len()].iter().product(), found: op.dim() });
    }
    let left: usize = dims[..first_site].iter().product();
    let right: usize = dims[first_site + block.len()..].iter().product();
    let m = linalg::kron(&linalg::kron(&linalg::identity(left), op.matrix()), &linalg::identity(right));
    Operator::new(space.clone(), m)
}

pub fn commutator<R: Real>(a: &Operator<R>, b: &Operator<R>) -> Result<Operator<R>> {
    same_space(a.space(), b.space())?;
    let m = a.matrix().dot(b.matrix()) - b.matrix().dot(a.matrix());
    Operator::new(a.space().clone(), m)
}

/// `rate · (l ρ l† − ½ l†l ρ − ½ ρ l†l)`.
pub fn dissipator<R: Real>(l: &Operator<R>, rho: &StateMatrix<R>, rate: R) -> Result<CMat<R>> {
    same_space(l.space(), rho.space())?;
    if rate < R::zero() {
        return Err(Error::NegativeRate(rate.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(dissipator_raw(l.matrix(), rho.matrix(), rate))
}

pub(crate) fn dissipator_raw<R: Real>(l: &CMat<R>, rho: &CMat<R>, rate: R) -> CMat<R> {
    let ld = linalg::dagger(l);
    let ldl = ld.dot(l);
    let half = R::lit(0.5);
    let jump = l.dot(rho).dot(&ld);
    let anti = ldl.dot(rho) + rho.dot(&ldl);
    (jump - anti.mapv(|z| z * half)).mapv(|z| z * rate)
}

pub fn pauli_x<R: Real>() -> Operator<R> {
    Operator::single(ndarray::array![[czero(), cone()], [cone(), czero()]]).unwrap()
}

pub fn pauli_y<R: Real>() -> Operator<R> {
    // σ_y = −i σ₊ + i σ₋ in the (g, e) ordering
    Operator::single(ndarray::array![[czero(), ci()], [-ci::<R>(), czero()]]).unwrap()
}

pub fn pauli_z<R: Real>() -> Operator<R> {
    Operator::single(ndarray::array![[-cone::<R>(), czero()], [czero(), cone()]]).unwrap()
}

pub fn sigma_minus<R: Real>() -> Operator<R> {
    Operator::single(ndarray::array![[czero(), cone()], [czero(), czero()]]).unwrap()
}

pub fn sigma_plus<R: Real>() -> Operator<R> {
    sigma_minus::<R>().dagger()
}

/// Truncated annihilation operator on an `n`-level Fock space.
pub fn annihilation<R: Real>(n: usize) -> Result<Operator<R>> {
    let mut m = linalg::zeros::<R>(n);
    for k in 1..n {
        m[[k - 1, k]] = cplx(f64::sqrt(k as f64), 0.0);
    }
    Operator::single(m)
}

pub fn creation<R: Real>(n: usize) -> Result<Operator<R>> {
    Ok(annihilation::<R>(n)?.dagger())
}

pub fn number<R: Real>(n: usize) -> Result<Operator<R>> {
    let mut m = linalg::zeros::<R>(n);
    for k in 0..n {
        m[[k, k]] = cplx(k as f64, 0.0);
    }
    Operator::single(m)
}
