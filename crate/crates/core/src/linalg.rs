//! Dense complex matrix helpers on top of `faer`.
//!
//! Every kernel here runs sequentially so that results are bitwise stable
//! regardless of how many realizations are processed in parallel.

use faer::linalg::matmul::matmul as faer_matmul;
use faer::linalg::solvers::Solve;
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};

use crate::error::{Error, Result};

pub use faer::c64;

/// Dense complex matrix.
pub type CMat = Mat<c64>;

pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn to_complex(m: MatRef<'_, f64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

/// `a * b`.
pub fn matmul(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    faer_matmul(out.as_mut(), Accum::Replace, a, b, ONE, Par::Seq);
    out
}

/// `a * b * a†`, the conjugation used by every propagation step.
pub fn conjugate(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    let ab = matmul(a, b);
    let mut out = Mat::zeros(a.nrows(), a.nrows());
    faer_matmul(out.as_mut(), Accum::Replace, ab.as_ref(), a.adjoint(), ONE, Par::Seq);
    out
}

/// `dst = a * b` without allocating.
pub fn matmul_into(dst: MatMut<'_, c64>, a: MatRef<'_, c64>, b: MatRef<'_, c64>) {
    faer_matmul(dst, Accum::Replace, a, b, ONE, Par::Seq);
}

/// `a * b†`.
pub fn matmul_adj(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    let mut out = Mat::zeros(a.nrows(), b.nrows());
    faer_matmul(out.as_mut(), Accum::Replace, a, b.adjoint(), ONE, Par::Seq);
    out
}

pub fn adjoint(a: MatRef<'_, c64>) -> CMat {
    a.adjoint().to_owned()
}

/// `a ← s a` for real `s`.
pub fn rescale(a: &mut CMat, s: f64) {
    a.as_mut().col_iter_mut().for_each(|c| c.iter_mut().for_each(|z| *z *= s));
}

pub fn scale(a: MatRef<'_, c64>, s: c64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn add(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}

pub fn sub(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

pub fn trace(a: MatRef<'_, c64>) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Maximum absolute column sum.
pub fn norm_1(a: MatRef<'_, c64>) -> f64 {
    (0..a.ncols()).map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn frobenius(a: MatRef<'_, c64>) -> f64 {
    a.norm_l2()
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

pub fn is_finite(a: MatRef<'_, c64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

/// `(a + a†) / 2`.
pub fn hermitize(a: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

pub fn kron(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * br, a.ncols() * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Eigenvalues of a Hermitian matrix in nondecreasing order. Only the lower
/// triangle is read.
pub fn hermitian_eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Eigenpairs of a Hermitian matrix; eigenvectors are the columns of the
/// returned matrix.
pub fn hermitian_eigen(a: MatRef<'_, c64>) -> Result<(Vec<f64>, CMat)> {
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let values = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    a.partial_piv_lu().solve(b)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] =
    [17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0, 2162160.0, 110880.0, 3960.0, 90.0, 1.0];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
// Backward-error thresholds on the 1-norm for each Padé degree (Higham 2005).
const THETA: [(usize, f64); 4] =
    [(3, 1.495585217958292e-2), (5, 2.539_398_330_063_23e-1), (7, 9.504178996162932e-1), (9, 2.097847961257068)];
const THETA13: f64 = 5.371920351148152;

/// `exp(m * t)` by scaling and squaring with Padé approximants.
///
/// Valid for non-normal input; the only failure modes are non-finite entries
/// and overflow of the result, both reported with the offending norm.
pub fn expm(m: MatRef<'_, c64>, t: c64) -> Result<CMat> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch { expected: n, found: m.ncols() });
    }
    if !is_finite(m) || !t.re.is_finite() || !t.im.is_finite() {
        return Err(Error::NonFinite { what: "matrix exponential argument" });
    }
    let a = scale(m, t);
    let norm = norm_1(a.as_ref());
    if norm > 1e300 {
        return Err(Error::ExpOverflow { norm });
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }

    for &(deg, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match deg {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return finish(pade_low(a.as_ref(), coeffs), 0, norm);
        }
    }

    let s = if norm > THETA13 { (norm / THETA13).log2().ceil().max(0.0) as i32 } else { 0 };
    let scaled = scale(a.as_ref(), c64::new(2f64.powi(-s), 0.0));
    finish(pade13(scaled.as_ref()), s, norm)
}

fn finish(mut r: CMat, squarings: i32, norm: f64) -> Result<CMat> {
    for _ in 0..squarings {
        r = matmul(r.as_ref(), r.as_ref());
    }
    if is_finite(r.as_ref()) {
        Ok(r)
    } else {
        Err(Error::ExpOverflow { norm })
    }
}

fn axpy_into(acc: &mut CMat, x: MatRef<'_, c64>, alpha: f64) {
    for j in 0..acc.ncols() {
        for i in 0..acc.nrows() {
            acc[(i, j)] += x[(i, j)] * alpha;
        }
    }
}

fn add_identity(acc: &mut CMat, alpha: f64) {
    for i in 0..acc.nrows() {
        acc[(i, i)] += c64::new(alpha, 0.0);
    }
}

/// Solves `(V - U) X = (V + U)`.
fn pade_quotient(u: &CMat, v: &CMat) -> CMat {
    let p = add(v.as_ref(), u.as_ref());
    let q = sub(v.as_ref(), u.as_ref());
    solve(q.as_ref(), p.as_ref())
}

fn pade_low(a: MatRef<'_, c64>, b: &[f64]) -> CMat {
    let n = a.nrows();
    let a2 = matmul(a, a);
    let mut powers = vec![identity(n), a2.clone()];
    while powers.len() < b.len() / 2 {
        let next = matmul(powers.last().unwrap().as_ref(), a2.as_ref());
        powers.push(next);
    }
    let mut odd = Mat::zeros(n, n);
    let mut even = Mat::zeros(n, n);
    for (k, p) in powers.iter().enumerate() {
        axpy_into(&mut even, p.as_ref(), b[2 * k]);
        axpy_into(&mut odd, p.as_ref(), b[2 * k + 1]);
    }
    let u = matmul(a, odd.as_ref());
    pade_quotient(&u, &even)
}

fn pade13(a: MatRef<'_, c64>) -> CMat {
    let b = &PADE13;
    let a2 = matmul(a, a);
    let a4 = matmul(a2.as_ref(), a2.as_ref());
    let a6 = matmul(a4.as_ref(), a2.as_ref());
    let n = a.nrows();

    let mut inner_u = Mat::zeros(n, n);
    axpy_into(&mut inner_u, a6.as_ref(), b[13]);
    axpy_into(&mut inner_u, a4.as_ref(), b[11]);
    axpy_into(&mut inner_u, a2.as_ref(), b[9]);
    let mut u = matmul(a6.as_ref(), inner_u.as_ref());
    axpy_into(&mut u, a6.as_ref(), b[7]);
    axpy_into(&mut u, a4.as_ref(), b[5]);
    axpy_into(&mut u, a2.as_ref(), b[3]);
    add_identity(&mut u, b[1]);
    let u = matmul(a, u.as_ref());

    let mut inner_v = Mat::zeros(n, n);
    axpy_into(&mut inner_v, a6.as_ref(), b[12]);
    axpy_into(&mut inner_v, a4.as_ref(), b[10]);
    axpy_into(&mut inner_v, a2.as_ref(), b[8]);
    let mut v = matmul(a6.as_ref(), inner_v.as_ref());
    axpy_into(&mut v, a6.as_ref(), b[6]);
    axpy_into(&mut v, a4.as_ref(), b[4]);
    axpy_into(&mut v, a2.as_ref(), b[2]);
    add_identity(&mut v, b[0]);

    pade_quotient(&u, &v)
}
