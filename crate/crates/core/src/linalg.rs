//! Dense complex matrix helpers: Hermitian eigensolver, functions of
//! Hermitian matrices, norms.

use ndarray::{Array1, Array2};
use num_traits::{One, Zero};

use crate::scalar::{czero, Real, C};

pub type CMat<R = f64> = Array2<C<R>>;

pub fn identity<R: Real>(n: usize) -> CMat<R> {
    Array2::from_diag_elem(n, C::<R>::one())
}

pub fn zeros<R: Real>(n: usize) -> CMat<R> {
    Array2::from_elem((n, n), C::<R>::zero())
}

pub fn dagger<R: Real>(m: &CMat<R>) -> CMat<R> {
    m.t().mapv(|z| z.conj())
}

pub fn kron<R: Real>(a: &CMat<R>, b: &CMat<R>) -> CMat<R> {
    ndarray::linalg::kron(a, b)
}

pub fn trace<R: Real>(m: &CMat<R>) -> C<R> {
    m.diag().iter().fold(czero(), |acc, z| acc + *z)
}

pub fn max_abs<R: Real>(m: &CMat<R>) -> R {
    m.iter().fold(R::zero(), |acc, z| acc.max(z.norm()))
}

/// max |m - m^\dagger| element-wise.
pub fn hermiticity_deviation<R: Real>(m: &CMat<R>) -> R {
    let n = m.nrows();
    let mut dev = R::zero();
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    dev
}

pub fn frobenius<R: Real>(m: &CMat<R>) -> R {
    m.iter().fold(R::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Returns ascending eigenvalues and the unitary whose columns are
/// the matching eigenvectors.
pub fn hermitian_eigen<R: Real>(m: &CMat<R>) -> (Vec<R>, CMat<R>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "square matrix required");
    // symmetrize so tiny anti-Hermitian noise cannot stall the sweeps
    let half = R::lit(0.5);
    let mut a = m.clone();
    for i in 0..n {
        for j in 0..n {
            a[[i, j]] = (m[[i, j]] + m[[j, i]].conj()) * half;
        }
    }
    let mut v = identity::<R>(n);
    let scale = frobenius(&a).max(R::min_positive_value());
    let eps = R::epsilon() * scale;

    for _sweep in 0..100 {
        let mut off = R::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]].norm_sqr();
            }
        }
        if off.sqrt() <= eps {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let mag = apq.norm();
                if mag <= eps * R::lit(1e-3) {
                    continue;
                }
                let e = apq / mag;
                let theta = (a[[q, q]].re - a[[p, p]].re) / (R::lit(2.0) * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + R::one()).sqrt());
                let c = R::one() / (t * t + R::one()).sqrt();
                let s = t * c;
                let se = e * s;
                let sec = e.conj() * s;
                // A <- A J
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = akp * c - akq * sec;
                    a[[k, q]] = akp * se + akq * c;
                }
                // A <- J^\dagger A
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = apk * c - aqk * se;
                    a[[q, k]] = apk * sec + aqk * c;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = vkp * c - vkq * sec;
                    v[[k, q]] = vkp * se + vkq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].re.partial_cmp(&a[[j, j]].re).unwrap());
    let values = order.iter().map(|&i| a[[i, i]].re).collect();
    let mut vecs = zeros::<R>(n);
    for (col, &i) in order.iter().enumerate() {
        for k in 0..n {
            vecs[[k, col]] = v[[k, i]];
        }
    }
    (values, vecs)
}

pub fn hermitian_eigenvalues<R: Real>(m: &CMat<R>) -> Vec<R> {
    hermitian_eigen(m).0
}

/// Applies `f` to the spectrum of a Hermitian matrix: `V f(Λ) V†`.
pub fn hermitian_map<R: Real>(m: &CMat<R>, f: impl Fn(R) -> C<R>) -> CMat<R> {
    let (vals, vecs) = hermitian_eigen(m);
    let fd: Array1<C<R>> = vals.into_iter().map(f).collect();
    let scaled = &vecs * &fd.insert_axis(ndarray::Axis(0));
    scaled.dot(&dagger(&vecs))
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn unitary_propagator<R: Real>(h: &CMat<R>, t: R) -> CMat<R> {
    hermitian_map(h, |lam| C::new(R::zero(), -lam * t).exp())
}

/// Principal square root of a positive semidefinite matrix; negative
/// eigenvalues from roundoff are clipped to zero.
pub fn sqrt_psd<R: Real>(m: &CMat<R>) -> CMat<R> {
    hermitian_map(m, |lam| C::new(lam.max(R::zero()).sqrt(), R::zero()))
}

/// Trace distance `½ ‖a − b‖₁` between two Hermitian matrices.
pub fn trace_distance<R: Real>(a: &CMat<R>, b: &CMat<R>) -> R {
    let diff = a - b;
    let half = R::lit(0.5);
    hermitian_eigenvalues(&diff)
        .into_iter()
        .fold(R::zero(), |acc, l| acc + l.abs())
        * half
}

/// Largest singular value.
pub fn spectral_norm<R: Real>(m: &CMat<R>) -> R {
    let gram = dagger(m).dot(m);
    hermitian_eigenvalues(&gram)
        .last()
        .copied()
        .unwrap_or_else(R::zero)
        .max(R::zero())
        .sqrt()
}
