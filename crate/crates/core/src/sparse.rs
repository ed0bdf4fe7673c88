//! Compressed-row complex matrices and the action of their exponential on a
//! vector (truncated Taylor series with scaling, parameters chosen from the
//! 1-norm as in Al-Mohy & Higham's `expmv`).

use crate::linalg::{CMatrix, C64, ZERO};

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    /// Keeps every entry that is not exactly zero.
    pub fn from_dense(a: &CMatrix) -> Self {
        let pattern = CsrPattern::from_dense(&[a]);
        let values = pattern.gather(a);
        pattern.with_values(values)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (row, out) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut counts = vec![0usize; n + 1];
        for &col in &self.col_idx {
            counts[col + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![ZERO; self.nnz()];
        for row in 0..n {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                let col = self.col_idx[k];
                let dst = next[col];
                next[col] += 1;
                col_idx[dst] = row;
                values[dst] = self.values[k].conj();
            }
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn trace(&self) -> C64 {
        let mut t = ZERO;
        for row in 0..self.n {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                if self.col_idx[k] == row {
                    t += self.values[k];
                }
            }
        }
        t
    }

    /// 1-norm of `self - shift * I`.
    pub fn shifted_norm1(&self, shift: C64) -> f64 {
        let mut cols = vec![0.0; self.n];
        let mut has_diag = vec![false; self.n];
        for row in 0..self.n {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                let col = self.col_idx[k];
                let v = if col == row {
                    has_diag[row] = true;
                    self.values[k] - shift
                } else {
                    self.values[k]
                };
                cols[col] += v.norm();
            }
        }
        for (col, seen) in has_diag.iter().enumerate() {
            if !seen {
                cols[col] += shift.norm();
            }
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut a = CMatrix::zeros(self.n, self.n);
        for row in 0..self.n {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                a[(row, self.col_idx[k])] += self.values[k];
            }
        }
        a
    }
}

/// Shared sparsity structure, so that linear combinations of matrices on the
/// same pattern cost one pass over the values.
#[derive(Debug, Clone)]
pub struct CsrPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl CsrPattern {
    /// Union of the nonzero patterns of all `mats`.
    pub fn from_dense(mats: &[&CMatrix]) -> Self {
        let n = mats[0].nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in 0..n {
            for col in 0..n {
                if mats.iter().any(|m| m[(row, col)] != ZERO) {
                    col_idx.push(col);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrPattern {
            n,
            row_ptr,
            col_idx,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn gather(&self, a: &CMatrix) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.nnz());
        for row in 0..self.n {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                out.push(a[(row, self.col_idx[k])]);
            }
        }
        out
    }

    pub fn with_values(&self, values: Vec<C64>) -> CsrMatrix {
        assert_eq!(values.len(), self.nnz());
        CsrMatrix {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        }
    }
}

/// Truncation degree bounds for double precision, indexed by degree.
const THETA_TAYLOR: [(usize, f64); 35] = [
    (1, 2.29e-16),
    (2, 2.58e-8),
    (3, 1.39e-5),
    (4, 3.40e-4),
    (5, 2.40e-3),
    (6, 9.07e-3),
    (7, 2.38e-2),
    (8, 5.00e-2),
    (9, 8.96e-2),
    (10, 1.44e-1),
    (11, 2.14e-1),
    (12, 3.00e-1),
    (13, 4.00e-1),
    (14, 5.14e-1),
    (15, 6.41e-1),
    (16, 7.81e-1),
    (17, 9.31e-1),
    (18, 1.09),
    (19, 1.26),
    (20, 1.44),
    (21, 1.62),
    (22, 1.82),
    (23, 2.01),
    (24, 2.22),
    (25, 2.43),
    (26, 2.64),
    (27, 2.86),
    (28, 3.08),
    (29, 3.31),
    (30, 3.54),
    (35, 4.7),
    (40, 6.0),
    (45, 7.2),
    (50, 8.5),
    (55, 9.9),
];

/// Degree and number of scaling steps for `exp(t A) b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpmvPlan {
    pub degree: usize,
    pub steps: usize,
    pub shift: C64,
}

impl ExpmvPlan {
    pub fn new(a: &CsrMatrix, t: f64) -> Self {
        let shift = a.trace() / a.dim() as f64;
        let norm = t.abs() * a.shifted_norm1(shift);
        if norm == 0.0 {
            return ExpmvPlan {
                degree: 0,
                steps: 1,
                shift,
            };
        }
        let (mut best_m, mut best_s, mut best_cost) = (0, 0, usize::MAX);
        for &(m, theta) in THETA_TAYLOR.iter() {
            let s = ((norm / theta).ceil() as usize).max(1);
            if m * s < best_cost {
                best_cost = m * s;
                best_m = m;
                best_s = s;
            }
        }
        ExpmvPlan {
            degree: best_m,
            steps: best_s,
            shift,
        }
    }

    pub fn matvecs(&self) -> usize {
        self.degree * self.steps
    }
}

fn inf_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `exp(t A) b`.
pub fn expmv(a: &CsrMatrix, t: f64, b: &[C64]) -> Vec<C64> {
    let plan = ExpmvPlan::new(a, t);
    expmv_with_plan(a, t, b, &plan)
}

/// `exp(t A) b` with a fixed plan; reusing one plan for nearby generators keeps
/// finite differences smooth.
pub fn expmv_with_plan(a: &CsrMatrix, t: f64, b: &[C64], plan: &ExpmvPlan) -> Vec<C64> {
    const TOL: f64 = 1.1e-16;
    let n = a.dim();
    assert_eq!(b.len(), n);
    let mut f = b.to_vec();
    let mut term = b.to_vec();
    let mut next = vec![ZERO; n];
    let eta = (plan.shift * (t / plan.steps as f64)).exp();
    for _ in 0..plan.steps {
        let mut c1 = inf_norm(&term);
        for j in 1..=plan.degree {
            a.matvec_into(&term, &mut next);
            let coef = t / (plan.steps * j) as f64;
            for (nx, tm) in next.iter_mut().zip(term.iter()) {
                *nx = (*nx - plan.shift * tm) * coef;
            }
            std::mem::swap(&mut term, &mut next);
            let c2 = inf_norm(&term);
            for (fi, ti) in f.iter_mut().zip(term.iter()) {
                *fi += ti;
            }
            if c1 + c2 <= TOL * inf_norm(&f) {
                break;
            }
            c1 = c2;
        }
        for fi in f.iter_mut() {
            *fi *= eta;
        }
        term.copy_from_slice(&f);
    }
    f
}

/// Rectangle in the complex plane that contains the spectrum of a generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBox {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl SpectralBox {
    /// Box of the adjoint generator.
    pub fn conj(&self) -> Self {
        SpectralBox {
            im_min: -self.im_max,
            im_max: -self.im_min,
            ..*self
        }
    }
}

/// Bessel functions `J_0(x) ..= J_n(x)` by downward recurrence, normalized
/// with `J_0 + 2 Σ J_2k = 1`.
pub fn bessel_j_sequence(x: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if x.abs() < 1e-300 {
        out[0] = 1.0;
        return out;
    }
    let start = n.max(x.abs().ceil() as usize) + 40 + (6.0 * x.abs().cbrt()) as usize;
    let start = start + start % 2;
    let mut next = 0.0;
    let mut cur = 1e-300;
    let mut norm = 0.0;
    let mut tmp = vec![0.0; start + 1];
    tmp[start] = cur;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        tmp[k - 1] = cur;
        if cur.abs() > 1e250 {
            for v in tmp[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
            next *= 1e-250;
            cur *= 1e-250;
        }
    }
    for (k, v) in tmp.iter().enumerate() {
        if k == 0 {
            norm += v;
        } else if k % 2 == 0 {
            norm += 2.0 * v;
        }
    }
    for k in 0..=n {
        out[k] = tmp[k] / norm;
    }
    out
}

/// Chebyshev expansion of `exp(t A)` around the center of a spectral box,
/// `exp(tA) = e^{tc} Σ a_k T_k((A - c)/(iR))` with `a_k = 2 i^k J_k(tR)`.
#[derive(Debug, Clone)]
pub struct ChebyshevPlan {
    pub center: C64,
    pub radius: f64,
    coeffs: Vec<C64>,
}

impl ChebyshevPlan {
    /// `None` when the box is too wide in the real direction for the
    /// expansion to pay off.
    pub fn new(spectrum: &SpectralBox, t: f64) -> Option<Self> {
        let center = C64::new(
            0.5 * (spectrum.re_min + spectrum.re_max),
            0.5 * (spectrum.im_min + spectrum.im_max),
        );
        let radius = (0.5 * (spectrum.im_max - spectrum.im_min)).max(1e-12);
        let b = 0.5 * (spectrum.re_max - spectrum.re_min) / radius;
        if b > 0.5 {
            return None;
        }
        let rho = b + (1.0 + b * b).sqrt();
        let theta = t * radius;
        let kmax = (theta + 60.0 + 8.0 * theta.cbrt()).ceil() as usize;
        let j = bessel_j_sequence(theta, kmax);
        let scale = (center * t).exp();
        let mut coeffs = Vec::with_capacity(kmax + 1);
        let mut small = 0;
        let mut ik = C64::new(1.0, 0.0);
        for (k, jk) in j.iter().enumerate() {
            let a = if k == 0 { *jk } else { 2.0 * jk };
            coeffs.push(ik * a * scale);
            ik *= C64::new(0.0, 1.0);
            if k as f64 > theta && (a * rho.powi(k as i32)).abs() < 1e-17 {
                small += 1;
                if small == 2 {
                    break;
                }
            } else {
                small = 0;
            }
        }
        Some(ChebyshevPlan {
            center,
            radius,
            coeffs,
        })
    }

    pub fn matvecs(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Plan for the adjoint generator over the same time.
    pub fn adjoint(&self) -> Self {
        // T_k is real, so conjugating c and every coefficient gives exp(t A^dagger)
        // with the mapped variable (A^dagger - conj c)/(iR) = -(W)^dagger; the
        // sign flip is absorbed by (-1)^k.
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| if k % 2 == 0 { a.conj() } else { -a.conj() })
            .collect();
        ChebyshevPlan {
            center: self.center.conj(),
            radius: self.radius,
            coeffs,
        }
    }

    pub fn apply(&self, a: &CsrMatrix, b: &[C64]) -> Vec<C64> {
        let n = a.dim();
        assert_eq!(b.len(), n);
        let w = C64::new(0.0, -1.0 / self.radius);
        let c = self.center;
        let mut out: Vec<C64> = b.iter().map(|x| x * self.coeffs[0]).collect();
        if self.coeffs.len() == 1 {
            return out;
        }
        let mut prev = b.to_vec();
        let mut cur = vec![ZERO; n];
        let mut next = vec![ZERO; n];
        a.matvec_into(&prev, &mut cur);
        for (y, x) in cur.iter_mut().zip(&prev) {
            *y = (*y - c * x) * w;
        }
        for (o, y) in out.iter_mut().zip(&cur) {
            *o += self.coeffs[1] * y;
        }
        let two_w = w * 2.0;
        for coef in &self.coeffs[2..] {
            a.matvec_into(&cur, &mut next);
            for ((y, x), p) in next.iter_mut().zip(&cur).zip(&prev) {
                *y = (*y - c * x) * two_w - p;
            }
            for (o, y) in out.iter_mut().zip(&next) {
                *o += coef * y;
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        out
    }

    /// `p(A) b` together with the directional derivatives `D p(A)[E_j] b` of
    /// the same polynomial, for each direction `E_j`.
    pub fn apply_with_derivatives(&self, a: &CsrMatrix, dirs: &[&CsrMatrix], b: &[C64]) -> (Vec<C64>, Vec<Vec<C64>>) {
        let n = a.dim();
        assert_eq!(b.len(), n);
        let m = dirs.len();
        let w = C64::new(0.0, -1.0 / self.radius);
        let c = self.center;
        let mut out: Vec<C64> = b.iter().map(|x| x * self.coeffs[0]).collect();
        let mut dout = vec![vec![ZERO; n]; m];
        if self.coeffs.len() == 1 {
            return (out, dout);
        }
        // b_k = T_k(W) b and t_k = D T_k(W)[E/(iR)] b, with
        // t_{k+1} = 2 W t_k + 2 dW b_k - t_{k-1}
        let mut prev = b.to_vec();
        let mut cur = vec![ZERO; n];
        let mut next = vec![ZERO; n];
        let mut scratch = vec![ZERO; n];
        a.matvec_into(&prev, &mut cur);
        for (y, x) in cur.iter_mut().zip(&prev) {
            *y = (*y - c * x) * w;
        }
        let mut tprev = vec![vec![ZERO; n]; m];
        let mut tcur: Vec<Vec<C64>> = dirs
            .iter()
            .map(|e| e.matvec(&prev).into_iter().map(|x| x * w).collect())
            .collect();
        let mut tnext = vec![vec![ZERO; n]; m];
        for (o, y) in out.iter_mut().zip(&cur) {
            *o += self.coeffs[1] * y;
        }
        for (d, t) in dout.iter_mut().zip(&tcur) {
            for (o, y) in d.iter_mut().zip(t) {
                *o += self.coeffs[1] * y;
            }
        }
        let two_w = w * 2.0;
        for coef in &self.coeffs[2..] {
            for j in 0..m {
                a.matvec_into(&tcur[j], &mut tnext[j]);
                dirs[j].matvec_into(&cur, &mut scratch);
                for (((y, x), p), e) in tnext[j].iter_mut().zip(&tcur[j]).zip(&tprev[j]).zip(&scratch) {
                    *y = (*y - c * x + e) * two_w - p;
                }
                for (o, y) in dout[j].iter_mut().zip(&tnext[j]) {
                    *o += coef * y;
                }
            }
            a.matvec_into(&cur, &mut next);
            for ((y, x), p) in next.iter_mut().zip(&cur).zip(&prev) {
                *y = (*y - c * x) * two_w - p;
            }
            for (o, y) in out.iter_mut().zip(&next) {
                *o += coef * y;
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
            std::mem::swap(&mut tprev, &mut tcur);
            std::mem::swap(&mut tcur, &mut tnext);
        }
        (out, dout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, expm};

    fn sample(n: usize, scale: f64) -> CMatrix {
        CMatrix::from_fn(n, n, |i, j| {
            if (i + 2 * j) % 3 == 0 || i == j {
                c(((i * 5 + j) % 7) as f64 - 3.0, (i as f64 - j as f64) * 2.0) * scale
            } else {
                c(0.0, 0.0)
            }
        })
    }

    #[test]
    fn chebyshev_derivative_matches_block_exponential() {
        let n = 6;
        let h = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                c(25.0 * i as f64, 0.0)
            } else if i + 1 == j || j + 1 == i {
                c(2.0, 0.0)
            } else {
                ZERO
            }
        });
        let damp = CMatrix::from_fn(n, n, |i, j| if i == j { c(-0.2 * (i % 2) as f64, 0.0) } else { ZERO });
        let a = h.map(|z| z * c(0.0, -1.0)) + damp;
        let e = CMatrix::from_fn(n, n, |i, j| if i + 1 == j { c(0.0, -1.5) } else if j + 1 == i { c(0.0, -1.5) } else { ZERO });
        let t = 0.07;
        let spectrum = SpectralBox {
            re_min: -0.5,
            re_max: 0.0,
            im_min: -140.0,
            im_max: 140.0,
        };
        let plan = ChebyshevPlan::new(&spectrum, t).unwrap();
        let b: Vec<C64> = (0..n).map(|i| c(1.0 / (1.0 + i as f64), 0.3 * i as f64)).collect();
        let (_, d) = plan.apply_with_derivatives(&CsrMatrix::from_dense(&a), &[&CsrMatrix::from_dense(&e)], &b);
        let mut block = CMatrix::zeros(2 * n, 2 * n);
        block.view_mut((0, 0), (n, n)).copy_from(&a);
        block.view_mut((n, n), (n, n)).copy_from(&a);
        block.view_mut((0, n), (n, n)).copy_from(&e);
        let f = expm(&block.scale(t));
        for i in 0..n {
            let want: C64 = (0..n).map(|k| f[(i, n + k)] * b[k]).sum();
            assert!((d[0][i] - want).norm() < 1e-11, "{i}: {} vs {want}", d[0][i]);
        }
    }

    #[test]
    fn bessel_values() {
        // reference values of J_0, J_1, J_5 at 1, 10 and 100
        let j = bessel_j_sequence(1.0, 5);
        assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((j[5] - 2.497_577_302_112_344e-4).abs() < 1e-17);
        let j = bessel_j_sequence(10.0, 5);
        assert!((j[0] + 0.245_935_764_451_348_3).abs() < 1e-14);
        assert!((j[1] - 0.043_472_746_168_861_44).abs() < 1e-14);
        let j = bessel_j_sequence(100.0, 1);
        assert!((j[0] - 0.019_985_850_304_223_12).abs() < 1e-13);
    }

    #[test]
    fn chebyshev_matches_dense_for_skew_dominated_generator() {
        let n = 10;
        let h = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                c(40.0 * i as f64, 0.0)
            } else if i + 1 == j || j + 1 == i {
                c(3.0, 0.0)
            } else {
                ZERO
            }
        });
        let damp = CMatrix::from_fn(n, n, |i, j| if i == j { c(-0.3 * (i % 3) as f64, 0.0) } else if i + 2 == j { c(0.2, 0.0) } else { ZERO });
        let a = h.map(|z| z * c(0.0, -1.0)) + damp;
        let s = CsrMatrix::from_dense(&a);
        let spectrum = SpectralBox {
            re_min: -1.5,
            re_max: 0.5,
            im_min: -400.0,
            im_max: 20.0,
        };
        let b: Vec<C64> = (0..n).map(|k| c(1.0, 0.1 * k as f64)).collect();
        let t = 0.3;
        let plan = ChebyshevPlan::new(&spectrum, t).unwrap();
        let got = plan.apply(&s, &b);
        let want = expm(&a.scale(t)) * crate::linalg::CVector::from_column_slice(&b);
        let err = got.iter().zip(want.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-11, "{err:e}");

        let adj = plan.adjoint().apply(&s.adjoint(), &b);
        let want = expm(&a.adjoint().scale(t)) * crate::linalg::CVector::from_column_slice(&b);
        let err = adj.iter().zip(want.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-11, "{err:e}");
    }

    #[test]
    fn matvec_and_adjoint_match_dense() {
        let a = sample(9, 1.0);
        let s = CsrMatrix::from_dense(&a);
        assert_eq!(s.to_dense(), a);
        assert_eq!(s.adjoint().to_dense(), a.adjoint());
        let x: Vec<C64> = (0..9).map(|k| c(k as f64, -(k as f64) * 0.5)).collect();
        let y = s.matvec(&x);
        let yd = &a * crate::linalg::CVector::from_column_slice(&x);
        for (u, v) in y.iter().zip(yd.iter()) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn expmv_matches_dense_exponential() {
        for &scale in &[0.01, 1.0, 20.0] {
            let a = sample(12, scale);
            let s = CsrMatrix::from_dense(&a);
            let b: Vec<C64> = (0..12).map(|k| c(1.0 / (1.0 + k as f64), 0.3)).collect();
            let got = expmv(&s, 0.37, &b);
            let want = expm(&a.scale(0.37)) * crate::linalg::CVector::from_column_slice(&b);
            let err = got
                .iter()
                .zip(want.iter())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            let size = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err <= 1e-10 * size, "scale {scale}: {err:e} vs {size:e}");
        }
    }
}
