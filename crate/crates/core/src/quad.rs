//! Quadrature: adaptive Gauss–Kronrod for smooth complex integrands, and
//! uniform-grid trapezoid helpers.

use num_complex::Complex64;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    (kron * h, ((kron - gauss) * h).norm())
}

/// Adaptive Gauss–Kronrod (7/15) integration of a complex integrand over
/// `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, tol: f64) -> Complex64 {
    if a == b {
        return Complex64::new(0.0, 0.0);
    }
    let mut stack = vec![(a, b, tol, 0u32)];
    let mut total = Complex64::new(0.0, 0.0);
    while let Some((lo, hi, tol, depth)) = stack.pop() {
        let (val, err) = gk15(&f, lo, hi);
        if err <= tol || depth >= 48 || (hi - lo).abs() < 1e-14 * (1.0 + lo.abs()) {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * tol, depth + 1));
            stack.push((mid, hi, 0.5 * tol, depth + 1));
        }
    }
    total
}

/// Trapezoid rule over uniformly spaced samples.
pub fn trapezoid(samples: &[Complex64], h: f64) -> Complex64 {
    match samples.len() {
        0 | 1 => Complex64::new(0.0, 0.0),
        n => {
            let inner: Complex64 = samples[1..n - 1].iter().sum();
            (inner + 0.5 * (samples[0] + samples[n - 1])) * h
        }
    }
}

/// Running trapezoid integral: `out[k] = ∫_0^{k h}`.
pub fn cumulative_trapezoid(samples: &[Complex64], h: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, s) in samples.iter().enumerate() {
        if k > 0 {
            acc += 0.5 * h * (samples[k - 1] + s);
        }
        out.push(acc);
    }
    out
}
