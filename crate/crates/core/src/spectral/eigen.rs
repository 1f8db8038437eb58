//! Generalized symmetric eigensolver for `K v = lambda M v` via shift-invert
//! subspace iteration: factor `A = K - sigma M` once (sigma below the
//! spectrum keeps it positive definite), then iterate `X <- A^{-1} M X`
//! with Rayleigh-Ritz extraction until the leading pairs converge.

use super::sparse::{rcm_order, Csr, ProfileChol};

#[derive(Debug, Clone, Copy)]
pub struct EigenOpts {
    /// Number of converged pairs to return, smallest eigenvalues first.
    pub count: usize,
    /// Spectral shift; must stay strictly below the smallest eigenvalue.
    pub shift: f64,
    /// Relative residual target `|Kv - lambda Mv| / (|Kv| + |lambda| |Mv|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOpts {
    fn default() -> EigenOpts {
        EigenOpts {
            count: 4,
            shift: -0.5,
            tol: 1e-9,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    /// Full-length eigenvector (zeros at constrained nodes), M-normalized.
    pub vec: Vec<f64>,
    /// Relative residual actually achieved.
    pub residual: f64,
}

/// Solve `K v = lambda M v` with the rows/columns in `constrained`
/// eliminated (homogeneous Dirichlet). Returns `opts.count` pairs sorted by
/// eigenvalue; vectors are M-normalized and sign-fixed so the entry of
/// largest magnitude is positive.
pub fn solve_generalized(
    k: &Csr,
    m: &Csr,
    constrained: &[bool],
    opts: &EigenOpts,
) -> Vec<EigenPair> {
    let keep: Vec<bool> = constrained.iter().map(|&c| !c).collect();
    let (kf, old_id) = k.restrict(&keep);
    let (mf, _) = m.restrict(&keep);
    let n = kf.n;
    assert!(n > 0, "no free degrees of freedom");

    let a = kf.shifted(&mf, opts.shift);
    let perm = rcm_order(&a);
    let chol = ProfileChol::factor(&a, &perm);
    // matrix scales for the residual test; the norm-scaled form stays
    // meaningful for the zero mode, where |Kv| itself is rounding noise
    let k_norm = inf_norm(&kf);
    let m_norm = inf_norm(&mf);

    let p = (opts.count + 4).min(n);
    let mut x: Vec<Vec<f64>> = (0..p).map(|j| seed_vector(n, j as u64)).collect();
    m_orthonormalize(&mf, &mut x);

    let mut ritz = vec![0.0f64; p];
    let mut tmp = vec![0.0f64; n];
    let mut converged = false;
    for _iter in 0..opts.max_iter {
        // power step through the shift-inverted operator
        for xi in x.iter_mut() {
            mf.matvec(xi, &mut tmp);
            chol.solve(&tmp, &perm, xi);
        }
        m_orthonormalize(&mf, &mut x);

        // Rayleigh-Ritz: diagonalize the projected stiffness
        let mut h = vec![0.0f64; p * p];
        let mut kx: Vec<Vec<f64>> = Vec::with_capacity(p);
        for xi in &x {
            let mut y = vec![0.0f64; n];
            kf.matvec(xi, &mut y);
            kx.push(y);
        }
        for i in 0..p {
            for j in i..p {
                let v = dot(&x[i], &kx[j]);
                h[i * p + j] = v;
                h[j * p + i] = v;
            }
        }
        let (theta, q) = jacobi_eigen(&h, p);
        let mut xs: Vec<Vec<f64>> = Vec::with_capacity(p);
        for (new_j, _) in theta.iter().enumerate() {
            let mut v = vec![0.0f64; n];
            for old_i in 0..p {
                let c = q[old_i * p + new_j];
                for (vk, xk) in v.iter_mut().zip(&x[old_i]) {
                    *vk += c * xk;
                }
            }
            xs.push(v);
        }
        x = xs;
        ritz.copy_from_slice(&theta);

        converged = (0..opts.count.min(p)).all(|j| {
            relative_residual(&kf, &mf, k_norm, m_norm, ritz[j], &x[j]) <= opts.tol
        });
        if converged {
            break;
        }
    }
    assert!(
        converged,
        "eigensolver did not reach tol {} in {} iterations",
        opts.tol, opts.max_iter
    );

    let full_n = constrained.len();
    (0..opts.count.min(p))
        .map(|j| {
            let mut v = x[j].clone();
            // M-normalize and fix the sign deterministically
            mf.matvec(&v, &mut tmp);
            let norm = dot(&v, &tmp).sqrt();
            let mut flip = 1.0;
            let mut big = 0.0f64;
            for &c in &v {
                if c.abs() > big {
                    big = c.abs();
                    flip = if c < 0.0 { -1.0 } else { 1.0 };
                }
            }
            for c in v.iter_mut() {
                *c *= flip / norm;
            }
            let residual = relative_residual(&kf, &mf, k_norm, m_norm, ritz[j], &v);
            let mut full = vec![0.0f64; full_n];
            for (i, &vi) in v.iter().enumerate() {
                full[old_id[i]] = vi;
            }
            EigenPair {
                lambda: ritz[j],
                vec: full,
                residual,
            }
        })
        .collect()
}

fn relative_residual(k: &Csr, m: &Csr, k_norm: f64, m_norm: f64, lambda: f64, v: &[f64]) -> f64 {
    let n = v.len();
    let mut kv = vec![0.0f64; n];
    let mut mv = vec![0.0f64; n];
    k.matvec(v, &mut kv);
    m.matvec(v, &mut mv);
    let mut num = 0.0f64;
    let mut nv = 0.0f64;
    for i in 0..n {
        num += (kv[i] - lambda * mv[i]).powi(2);
        nv += v[i] * v[i];
    }
    num.sqrt() / ((k_norm + lambda.abs() * m_norm) * nv.sqrt()).max(1e-300)
}

/// Row-sum (infinity) norm.
fn inf_norm(a: &Csr) -> f64 {
    (0..a.n)
        .map(|r| {
            a.val[a.row_ptr[r]..a.row_ptr[r + 1]]
                .iter()
                .map(|v| v.abs())
                .sum::<f64>()
        })
        .fold(0.0f64, f64::max)
}

/// Deterministic pseudo-random start vector (splitmix64 stream per column).
fn seed_vector(n: usize, col: u64) -> Vec<f64> {
    let mut state = 0x9e3779b97f4a7c15u64.wrapping_mul(col + 1);
    (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// Modified Gram-Schmidt in the M inner product, two passes per vector.
fn m_orthonormalize(m: &Csr, x: &mut [Vec<f64>]) {
    let n = m.n;
    let mut mv = vec![0.0f64; n];
    for i in 0..x.len() {
        for _pass in 0..2 {
            for j in 0..i {
                m.matvec(&x[j], &mut mv);
                let c = dot(&x[i], &mv);
                let (head, tail) = x.split_at_mut(i);
                for (v, w) in tail[0].iter_mut().zip(&head[j]) {
                    *v -= c * w;
                }
            }
        }
        m.matvec(&x[i], &mut mv);
        let norm = dot(&x[i], &mv).sqrt();
        assert!(norm > 1e-150, "degenerate subspace vector");
        for v in x[i].iter_mut() {
            *v /= norm;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cyclic Jacobi diagonalization of a dense symmetric matrix, returning
/// eigenvalues ascending and the rotation matrix by columns.
fn jacobi_eigen(h: &[f64], p: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = h.to_vec();
    let mut q = vec![0.0f64; p * p];
    for i in 0..p {
        q[i * p + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for r in 0..p {
            for c in (r + 1)..p {
                off += a[r * p + c] * a[r * p + c];
            }
        }
        if off.sqrt() <= 1e-14 * (1.0 + frob(&a, p)) {
            break;
        }
        for r in 0..p {
            for c in (r + 1)..p {
                let arc = a[r * p + c];
                if arc.abs() <= 1e-300 {
                    continue;
                }
                let diff = a[c * p + c] - a[r * p + r];
                let t = if diff.abs() < 1e-300 {
                    1.0f64.copysign(arc)
                } else {
                    let theta = diff / (2.0 * arc);
                    1.0f64.copysign(theta) / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let cth = 1.0 / (1.0 + t * t).sqrt();
                let sth = t * cth;
                for k in 0..p {
                    let akr = a[k * p + r];
                    let akc = a[k * p + c];
                    a[k * p + r] = cth * akr - sth * akc;
                    a[k * p + c] = sth * akr + cth * akc;
                }
                for k in 0..p {
                    let ark = a[r * p + k];
                    let ack = a[c * p + k];
                    a[r * p + k] = cth * ark - sth * ack;
                    a[c * p + k] = sth * ark + cth * ack;
                }
                for k in 0..p {
                    let qkr = q[k * p + r];
                    let qkc = q[k * p + c];
                    q[k * p + r] = cth * qkr - sth * qkc;
                    q[k * p + c] = sth * qkr + cth * qkc;
                }
            }
        }
    }
    // sort ascending, permuting eigenvector columns alongside
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| a[i * p + i].total_cmp(&a[j * p + j]));
    let theta: Vec<f64> = order.iter().map(|&i| a[i * p + i]).collect();
    let mut qs = vec![0.0f64; p * p];
    for (new_j, &old_j) in order.iter().enumerate() {
        for k in 0..p {
            qs[k * p + new_j] = q[k * p + old_j];
        }
    }
    (theta, qs)
}

fn frob(a: &[f64], p: usize) -> f64 {
    a.iter().take(p * p).map(|x| x * x).sum::<f64>().sqrt()
}
