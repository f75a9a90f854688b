//! Thin wrapper over the dense linear-algebra backend. Every matrix here is a
//! column-major slice with explicit row and column counts.

use crate::error::{Result, TnError};
use crate::C64;
use faer::linalg::matmul::matmul;
use faer::{Accum, MatRef, Par, Side};

/// `C = op(A) * op(B)` where `op` optionally transposes. `a` is stored as an
/// `ar x ac` matrix and `b` as `br x bc`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    a: &[C64],
    ar: usize,
    ac: usize,
    trans_a: bool,
    b: &[C64],
    br: usize,
    bc: usize,
    trans_b: bool,
) -> Vec<C64> {
    let (m, ka) = if trans_a { (ac, ar) } else { (ar, ac) };
    let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
    assert_eq!(ka, kb, "inner dimensions disagree");
    let mut out = vec![C64::new(0.0, 0.0); m * n];
    if m == 0 || n == 0 {
        return out;
    }
    if ka == 0 {
        return out;
    }
    let am = MatRef::from_column_major_slice(a, ar, ac);
    let bm = MatRef::from_column_major_slice(b, br, bc);
    let am = if trans_a { am.transpose() } else { am };
    let bm = if trans_b { bm.transpose() } else { bm };
    let mut cm = faer::MatMut::from_column_major_slice_mut(&mut out, m, n);
    matmul(
        cm.as_mut(),
        Accum::Replace,
        am,
        bm,
        C64::new(1.0, 0.0),
        Par::Seq,
    );
    out
}

fn to_vec(m: MatRef<'_, C64>) -> Vec<C64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Thin QR of an `m x n` matrix. Returns `(Q, R, k)` with `Q` of shape `m x k`,
/// `R` of shape `k x n`, `k = min(m, n)`, and the diagonal of `R` real and
/// non-negative.
pub fn qr(a: &[C64], m: usize, n: usize) -> (Vec<C64>, Vec<C64>, usize) {
    let k = m.min(n);
    if k == 0 {
        return (vec![], vec![], 0);
    }
    let am = MatRef::from_column_major_slice(a, m, n);
    let f = am.qr();
    let mut q = to_vec(f.compute_thin_Q().as_ref());
    let mut r = to_vec(f.thin_R());
    debug_assert_eq!(r.len(), k * n);
    for j in 0..k {
        let d = r[j + j * k];
        let mag = d.norm();
        let phase = if mag > 0.0 { d / mag } else { C64::new(1.0, 0.0) };
        if phase != C64::new(1.0, 0.0) {
            for i in 0..m {
                q[i + j * m] *= phase;
            }
            let pc = phase.conj();
            for c in 0..n {
                r[j + c * k] *= pc;
            }
        }
    }
    (q, r, k)
}

/// Thin SVD of an `m x n` matrix: `(U, s, Vh)` with `U` `m x k`, `Vh` `k x n`,
/// singular values descending.
pub fn svd(a: &[C64], m: usize, n: usize) -> Result<(Vec<C64>, Vec<f64>, Vec<C64>)> {
    let k = m.min(n);
    if k == 0 {
        return Ok((vec![], vec![], vec![]));
    }
    let am = MatRef::from_column_major_slice(a, m, n);
    let f = am
        .thin_svd()
        .map_err(|e| TnError::Kernel(format!("svd: {e:?}")))?;
    let u = to_vec(f.U());
    let s: Vec<f64> = (0..k).map(|i| f.S()[i].re).collect();
    let v = f.V();
    let mut vh = Vec::with_capacity(k * n);
    for j in 0..n {
        for i in 0..k {
            vh.push(v[(j, i)].conj());
        }
    }
    Ok((u, s, vh))
}

/// Eigen-decomposition of a hermitian `n x n` matrix (lower triangle used).
/// Eigenvalues ascending; eigenvectors as columns.
pub fn eigh(a: &[C64], n: usize) -> Result<(Vec<f64>, Vec<C64>)> {
    if n == 0 {
        return Ok((vec![], vec![]));
    }
    let am = MatRef::from_column_major_slice(a, n, n);
    let f = am
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| TnError::Kernel(format!("eigh: {e:?}")))?;
    let vals = (0..n).map(|i| f.S()[i].re).collect();
    Ok((vals, to_vec(f.U())))
}

/// Dense matrix exponential by scaling and squaring with a fixed order-13
/// Taylor polynomial. The squaring count comes from the 1-norm.
pub fn expm(a: &[C64], n: usize) -> Vec<C64> {
    let mut norm1 = 0.0f64;
    for j in 0..n {
        let col: f64 = (0..n).map(|i| a[i + j * n].norm()).sum();
        norm1 = norm1.max(col);
    }
    let s = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = 0.5f64.powi(s);
    let x: Vec<C64> = a.iter().map(|v| v * scale).collect();
    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..=13 {
        term = gemm(&term, n, n, false, &x, n, n, false);
        let inv = 1.0 / k as f64;
        for v in term.iter_mut() {
            *v *= inv;
        }
        for (r, t) in result.iter_mut().zip(&term) {
            *r += t;
        }
    }
    for _ in 0..s {
        result = gemm(&result, n, n, false, &result, n, n, false);
    }
    result
}

pub fn identity(n: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i + i * n] = C64::new(1.0, 0.0);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]] column-major
        let a = vec![c(1.0), c(3.0), c(2.0), c(4.0)];
        let p = gemm(&a, 2, 2, true, &a, 2, 2, false);
        // a^T a = [[10,14],[14,20]]
        assert_eq!(p, vec![c(10.0), c(14.0), c(14.0), c(20.0)]);
    }

    #[test]
    fn qr_phase_convention() {
        let a = vec![c(-1.0), c(0.0), c(0.0), c(-2.0), c(1.0), c(3.0)];
        let (q, r, k) = qr(&a, 2, 3);
        assert_eq!(k, 2);
        for j in 0..k {
            assert!(r[j + j * k].re >= 0.0 && r[j + j * k].im.abs() < 1e-15);
        }
        let back = gemm(&q, 2, k, false, &r, k, 3, false);
        for (x, y) in back.iter().zip(&a) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn expm_of_diagonal() {
        let a = vec![c(1.0), c(0.0), c(0.0), c(-3.0)];
        let e = expm(&a, 2);
        assert!((e[0].re - 1f64.exp()).abs() < 1e-13);
        assert!((e[3].re - (-3f64).exp()).abs() < 1e-14);
        assert!(e[1].norm() < 1e-15);
    }

    #[test]
    fn eigh_two_by_two() {
        let a = vec![c(2.0), c(1.0), c(1.0), c(2.0)];
        let (vals, _) = eigh(&a, 2).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
    }
}
