//! Dense complex linear algebra helpers shared by every module.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`. Products of large
//! matrices are routed through four real GEMMs, which is several times faster
//! than nalgebra's generic complex kernel.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Below this many scalar multiply-adds the generic kernel wins.
const SPLIT_GEMM_THRESHOLD: usize = 24 * 24 * 24;

pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    if a.nrows() * a.ncols() * b.ncols() < SPLIT_GEMM_THRESHOLD {
        return a * b;
    }
    let ar = a.map(|z| z.re);
    let ai = a.map(|z| z.im);
    let br = b.map(|z| z.re);
    let bi = b.map(|z| z.im);
    let mut re = &ar * &br;
    re.gemm(-1.0, &ai, &bi, 1.0);
    let mut im = &ar * &bi;
    im.gemm(1.0, &ai, &br, 1.0);
    CMatrix::from_fn(a.nrows(), b.ncols(), |i, j| c(re[(i, j)], im[(i, j)]))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().sum()
}

/// Maximum absolute column sum.
pub fn norm1(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest entrywise deviation from Hermiticity, `max |a_ij - conj(a_ji)|`.
pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut dev: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Frobenius inner product `tr(a^dagger b)`.
pub fn inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let eig = nalgebra::SymmetricEigen::new(hermitize(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

pub fn eigvalsh(a: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(hermitize(a))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Eigenvalues of a general complex matrix from its Schur form.
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<C64>> {
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 100 * a.nrows().max(10))
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok(t.diagonal().iter().copied().collect())
}

/// Complex Schur decomposition `a = q t q^dagger`.
pub fn schur(a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 100 * a.nrows().max(10))
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    Ok(schur.unpack())
}

/// Sum of singular values.
pub fn trace_norm(a: &CMatrix) -> f64 {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return f64::NAN;
    }
    a.clone().singular_values().iter().sum()
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
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

/// Backward-error bounds of the diagonal Padé approximants (degrees 3, 5, 7, 9, 13).
const THETA: [f64; 5] = [
    1.495585217958292e-2,
    2.539398330063230e-1,
    9.504178996162932e-1,
    2.097847961257068,
    5.371920351148152,
];

/// Matrix exponential by scaling and squaring with a variable-degree Padé
/// approximant.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return CMatrix::zeros(0, 0);
    }
    // Shifting by the mean diagonal keeps the scaled norm small for
    // strongly damped generators; large decays are left in the matrix so the
    // unshifted exponential cannot overflow.
    let mut mu = trace(a) / n as f64;
    if mu.re.abs() > 30.0 {
        mu.re = 0.0;
    }
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= mu;
    }
    let norm = norm1(&shifted);
    let mut result = None;
    for (k, coeffs) in [&PADE3[..], &PADE5[..], &PADE7[..], &PADE9[..]]
        .iter()
        .enumerate()
    {
        if norm <= THETA[k] {
            result = Some(pade_low(&shifted, coeffs));
            break;
        }
    }
    let mut x = match result {
        Some(x) => x,
        None => {
            let s = if norm > THETA[4] {
                (norm / THETA[4]).log2().ceil() as i32
            } else {
                0
            };
            let scaled = shifted.scale(0.5f64.powi(s));
            let mut x = pade13(&scaled);
            for _ in 0..s {
                x = matmul(&x, &x);
            }
            x
        }
    };
    x *= mu.exp();
    x
}

fn pade_solve(u: CMatrix, v: CMatrix) -> CMatrix {
    let p = &v + &u;
    let q = &v - &u;
    q.lu().solve(&p).expect("Padé denominator is singular")
}

fn pade_low(a: &CMatrix, b: &[f64]) -> CMatrix {
    let n = a.nrows();
    let id = identity(n);
    let a2 = matmul(a, a);
    let mut u_inner = id.scale(b[1]);
    let mut v = id.scale(b[0]);
    let mut power = id;
    for k in 1..b.len() / 2 {
        power = matmul(&power, &a2);
        u_inner += power.scale(b[2 * k + 1]);
        v += power.scale(b[2 * k]);
    }
    let u = matmul(a, &u_inner);
    pade_solve(u, v)
}

fn pade13(a: &CMatrix) -> CMatrix {
    let b = &PADE13;
    let n = a.nrows();
    let id = identity(n);
    let a2 = matmul(a, a);
    let a4 = matmul(&a2, &a2);
    let a6 = matmul(&a4, &a2);
    let u1 = a6.scale(b[13]) + a4.scale(b[11]) + a2.scale(b[9]);
    let u2 = a6.scale(b[7]) + a4.scale(b[5]) + a2.scale(b[3]) + id.scale(b[1]);
    let u = matmul(a, &(matmul(&a6, &u1) + u2));
    let v1 = a6.scale(b[12]) + a4.scale(b[10]) + a2.scale(b[8]);
    let v2 = a6.scale(b[6]) + a4.scale(b[4]) + a2.scale(b[2]) + id.scale(b[0]);
    let v = matmul(&a6, &v1) + v2;
    pade_solve(u, v)
}

/// Column-stacked vectorization `vec(a)`.
pub fn vec(a: &CMatrix) -> CVector {
    CVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`] for an `n x n` matrix.
pub fn unvec(v: &[C64], n: usize) -> CMatrix {
    assert_eq!(v.len(), n * n, "unvec length mismatch");
    CMatrix::from_column_slice(n, n, v)
}
