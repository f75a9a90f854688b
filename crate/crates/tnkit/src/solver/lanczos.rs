//! Restarted Lanczos with full reorthogonalization for the lowest eigenpairs
//! of a hermitian linear map given only by its action.

use crate::error::{Result, TnError};
use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct LanczosOptions {
    pub krylov_dim: usize,
    /// Cap on operator applications over all restarts.
    pub max_applications: usize,
    /// Residual target relative to `max(1, |θ|)`.
    pub tol: f64,
    /// Number of lowest eigenpairs.
    pub k: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            krylov_dim: 16,
            max_applications: 2000,
            tol: 1e-10,
            k: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<C64>>,
    pub residuals: Vec<f64>,
    pub applications: usize,
    /// False when a pair missed the tolerance within the budget; the best
    /// pairs found are still returned.
    pub converged: bool,
}

pub(crate) fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn vnorm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn vaxpy(y: &mut [C64], c: C64, x: &[C64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += c * b;
    }
}

fn vscale(y: &mut [C64], c: f64) {
    for a in y.iter_mut() {
        *a *= c;
    }
}

/// Removes the components along `basis` (orthonormal), twice for stability.
pub(crate) fn orthogonalize(v: &mut [C64], basis: &[Vec<C64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = vdot(b, v);
            vaxpy(v, -c, b);
        }
    }
}

/// Lowest `opts.k` eigenpairs of `apply`, warm-started from `guess`.
/// Each pair is found by a restarted Lanczos run deflated against the
/// pairs already converged.
pub fn lanczos_lowest(
    mut apply: impl FnMut(&[C64]) -> Result<Vec<C64>>,
    guess: &[C64],
    opts: &LanczosOptions,
) -> Result<Eigenpairs> {
    let n = guess.len();
    if n == 0 {
        return Err(TnError::InvalidRange("empty eigenproblem".into()));
    }
    if opts.krylov_dim < 2 {
        return Err(TnError::InvalidRange("Krylov dimension below 2".into()));
    }
    let k = opts.k.min(n);
    let mut out = Eigenpairs {
        values: vec![],
        vectors: vec![],
        residuals: vec![],
        applications: 0,
        converged: true,
    };
    for j in 0..k {
        let mut start = guess.to_vec();
        orthogonalize(&mut start, &out.vectors);
        if vnorm(&start) < 1e-8 * vnorm(guess).max(f64::MIN_POSITIVE) {
            // the guess lies in the deflated space: start from a fixed
            // vector instead
            start = (0..n).map(|i| C64::new(1.0 + (i as f64 * 0.618).sin(), (i as f64).cos())).collect();
            orthogonalize(&mut start, &out.vectors);
        }
        let budget = opts.max_applications.saturating_sub(out.applications).max(1);
        let (theta, v, res, napp, ok) = single_pair(&mut apply, start, &out.vectors, opts, budget)?;
        out.applications += napp;
        out.converged &= ok;
        out.values.push(theta);
        out.vectors.push(v);
        out.residuals.push(res);
        if j + 1 < k && out.vectors.len() == n {
            break;
        }
    }
    Ok(out)
}

fn single_pair(
    apply: &mut impl FnMut(&[C64]) -> Result<Vec<C64>>,
    mut v0: Vec<C64>,
    deflate: &[Vec<C64>],
    opts: &LanczosOptions,
    budget: usize,
) -> Result<(f64, Vec<C64>, f64, usize, bool)> {
    let n = v0.len();
    let m = opts.krylov_dim.min(n - deflate.len()).max(1);
    let nrm = vnorm(&v0);
    if nrm == 0.0 {
        return Err(TnError::InvalidRange("zero start vector".into()));
    }
    vscale(&mut v0, 1.0 / nrm);
    let mut napp = 0;
    let mut best: Option<(f64, Vec<C64>, f64)> = None;
    loop {
        let mut basis: Vec<Vec<C64>> = vec![v0.clone()];
        let mut alpha: Vec<f64> = vec![];
        let mut last_beta = 0.0;
        let mut exhausted = false;
        let mut beta: Vec<f64> = vec![];
        loop {
            let v = basis.last().unwrap();
            let mut w = apply(v)?;
            napp += 1;
            let a = vdot(v, &w).re;
            alpha.push(a);
            // full reorthogonalization against the whole basis
            orthogonalize(&mut w, &basis);
            orthogonalize(&mut w, deflate);
            let b = vnorm(&w);
            let scale = alpha.iter().fold(1.0f64, |s, x| s.max(x.abs()));
            if b <= 1e-13 * scale {
                exhausted = true;
                break;
            }
            if basis.len() == m || napp >= budget {
                last_beta = b;
                break;
            }
            vscale(&mut w, 1.0 / b);
            beta.push(b);
            basis.push(w);
        }
        let p = basis.len();
        let mut t = vec![C64::new(0.0, 0.0); p * p];
        for i in 0..p {
            t[i + p * i] = C64::new(alpha[i], 0.0);
            if i + 1 < p {
                t[i + 1 + p * i] = C64::new(beta[i], 0.0);
                t[i + p * (i + 1)] = C64::new(beta[i], 0.0);
            }
        }
        let (vals, vecs) = crate::kernel::eigh(&t, p)?;
        let theta = vals[0];
        let y = &vecs[..p];
        let mut x = vec![C64::new(0.0, 0.0); n];
        for i in 0..p {
            vaxpy(&mut x, y[i], &basis[i]);
        }
        drop(basis);
        let xn = vnorm(&x);
        vscale(&mut x, 1.0 / xn);
        // ‖A x − θ x‖ = β_p |y_p| for a Lanczos basis
        let res = last_beta * y[p - 1].norm();
        let target = opts.tol * theta.abs().max(1.0);
        if best.as_ref().is_none_or(|b| res < b.2) {
            best = Some((theta, x.clone(), res));
        }
        if res <= target || exhausted {
            return Ok((theta, x, res, napp, true));
        }
        if napp >= budget {
            let (th, v, rs) = best.unwrap();
            return Ok((th, v, rs, napp, false));
        }
        v0 = x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_apply(a: &[C64], n: usize) -> impl FnMut(&[C64]) -> Result<Vec<C64>> + '_ {
        move |v: &[C64]| {
            let mut w = vec![C64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    w[i] += a[i + n * j] * v[j];
                }
            }
            Ok(w)
        }
    }

    fn random_hermitian(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..=i {
                let z = C64::new(rng.random_range(-1.0..1.0), if i == j { 0.0 } else { rng.random_range(-1.0..1.0) });
                a[i + n * j] = z;
                a[j + n * i] = z.conj();
            }
        }
        a
    }

    #[test]
    fn diagonal_map() {
        let n = 10;
        let mut a = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            a[i + n * i] = C64::new(i as f64, 0.0);
        }
        let guess = vec![C64::new(1.0, 0.0); n];
        let r = lanczos_lowest(dense_apply(&a, n), &guess, &LanczosOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.values[0].abs() < 1e-12);
        assert!((r.vectors[0][0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_hermitian_matches_dense() {
        let n = 64;
        let a = random_hermitian(n, 3);
        let (w, _) = crate::kernel::eigh(&a, n).unwrap();
        let guess: Vec<C64> = (0..n).map(|i| C64::new(1.0, 0.1 * i as f64)).collect();
        let opts = LanczosOptions { k: 3, ..Default::default() };
        let r = lanczos_lowest(dense_apply(&a, n), &guess, &opts).unwrap();
        assert!(r.converged);
        for i in 0..3 {
            assert!((r.values[i] - w[i]).abs() < 1e-10, "{i}: {} vs {}", r.values[i], w[i]);
            assert!(r.residuals[i] <= 1e-10 * w[i].abs().max(1.0));
        }
    }

    #[test]
    fn exact_guess_converges_immediately() {
        let n = 32;
        let a = random_hermitian(n, 4);
        let (_, v) = crate::kernel::eigh(&a, n).unwrap();
        let guess = v[..n].to_vec();
        let r = lanczos_lowest(dense_apply(&a, n), &guess, &LanczosOptions::default()).unwrap();
        assert!(r.applications <= 2);
    }

    #[test]
    fn small_space_is_solved_exactly() {
        let n = 3;
        let a = random_hermitian(n, 5);
        let (w, _) = crate::kernel::eigh(&a, n).unwrap();
        let guess = vec![C64::new(1.0, 0.0), C64::new(0.5, 0.0), C64::new(0.0, 1.0)];
        let r = lanczos_lowest(dense_apply(&a, n), &guess, &LanczosOptions::default()).unwrap();
        assert!((r.values[0] - w[0]).abs() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let n = 200;
        let a = random_hermitian(n, 6);
        let guess = vec![C64::new(1.0, 0.0); n];
        let opts = LanczosOptions {
            max_applications: 5,
            ..Default::default()
        };
        let r = lanczos_lowest(dense_apply(&a, n), &guess, &opts).unwrap();
        assert!(!r.converged);
        assert!(r.applications <= 5);
    }
}
