//! Symmetric eigensolvers: Householder tridiagonalization followed by
//! implicit QL for small operators, restarted Lanczos for large ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectral::laplacian::Laplacian;

/// Eigenpairs with eigenvalues ascending; `vectors[k]` is the k-th
/// eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

const QL_MAX_ITER: usize = 60;

/// Full eigendecomposition of a dense symmetric row-major `n×n` matrix.
pub fn dense_symmetric_eigen(a: &[f64], n: usize) -> Result<EigenPairs> {
    assert_eq!(a.len(), n * n, "matrix must be n×n");
    if n == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    let mut v = a.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e, n);
    // Rows of `z` hold eigenvectors so the QL rotations touch contiguous memory.
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            z[j * n + i] = v[i * n + j];
        }
    }
    tql2(&mut d, &mut e, &mut z, n)?;
    Ok(sorted_pairs(d, &z, n))
}

/// Eigendecomposition of the symmetric tridiagonal matrix with diagonal
/// `diag` and off-diagonal `off` (`off[i]` couples `i` and `i+1`).
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<EigenPairs> {
    let n = diag.len();
    let mut d = diag.to_vec();
    // tql2 expects e[i] to couple (i-1, i).
    let mut e = vec![0.0; n];
    e[1..n].copy_from_slice(&off[..n.saturating_sub(1)]);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    tql2(&mut d, &mut e, &mut z, n)?;
    Ok(sorted_pairs(d, &z, n))
}

fn sorted_pairs(d: Vec<f64>, z: &[f64], n: usize) -> EigenPairs {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    EigenPairs {
        values: order.iter().map(|&i| d[i]).collect(),
        vectors: order.iter().map(|&i| z[i * n..(i + 1) * n].to_vec()).collect(),
    }
}

/// Householder reduction to tridiagonal form. On exit `v` holds the
/// orthogonal transform (columns), `d` the diagonal and `e[1..]` the
/// sub-diagonal.
fn tred2(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on a symmetric tridiagonal matrix, accumulating rotations
/// into the rows of `z`.
fn tql2(d: &mut [f64], e: &mut [f64], z: &mut [f64], n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITER {
                    return Err(Error::NoConvergence {
                        requested: n,
                        converged: l,
                        residual: e[l].abs(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = z.split_at_mut((i + 1) * n);
                    let zi = &mut lo[i * n..];
                    let zi1 = &mut hi[..n];
                    for k in 0..n {
                        let h = zi1[k];
                        zi1[k] = s * zi[k] + c * h;
                        zi[k] = c * zi[k] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Removes components along every vector in `basis` (two passes).
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(w, q);
            axpy(-c, q, w);
        }
    }
}

/// Normalizes `w` and makes it orthogonal to both bases, repeating the
/// projection while it removes most of the vector (a tiny remainder would
/// otherwise amplify rounding error in the removed directions). Returns
/// false when nothing independent is left.
fn project_out(w: &mut [f64], locked: &[Vec<f64>], basis: &[Vec<f64>]) -> bool {
    for _ in 0..4 {
        let before = norm(w);
        if before == 0.0 || !before.is_finite() {
            return false;
        }
        w.iter_mut().for_each(|x| *x /= before);
        orthogonalize(w, locked);
        orthogonalize(w, basis);
        let after = norm(w);
        if after < 1e-12 {
            return false;
        }
        if after > 0.5 {
            w.iter_mut().for_each(|x| *x /= after);
            return true;
        }
    }
    let nw = norm(w);
    w.iter_mut().for_each(|x| *x /= nw);
    true
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Subspace size per cycle, as a multiple of the pairs still needed
    /// (at least `need + 30`).
    pub basis_factor: usize,
    pub max_restarts: usize,
    /// Residual `‖L y − θ y‖` below which a Ritz pair is locked.
    pub tol: f64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            basis_factor: 3,
            max_restarts: 500,
            tol: 1e-10,
        }
    }
}

/// The `k` algebraically smallest eigenpairs of `op` by thick-restart
/// Lanczos with full reorthogonalization and locking.
///
/// Each cycle extends the retained Ritz vectors by a Krylov sequence
/// started from their common residual direction, then solves the projected
/// problem exactly. Converged pairs are locked in ascending order and
/// deflated from later cycles, so repeated eigenvalues surface one copy at
/// a time.
pub fn lanczos_smallest(
    op: &Laplacian,
    k: usize,
    seed: u64,
    opts: LanczosOptions,
) -> Result<EigenPairs> {
    let n = op.dim();
    assert!(k <= n, "requested more eigenpairs than the dimension");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
    };
    let mut locked_vals: Vec<f64> = Vec::new();
    let mut locked: Vec<Vec<f64>> = Vec::new();
    // Retained Ritz vectors and their images under `op`.
    let mut keep: Vec<Vec<f64>> = Vec::new();
    let mut keep_img: Vec<Vec<f64>> = Vec::new();
    let mut next = random_vec(&mut rng);
    let mut worst_res = f64::INFINITY;

    for _cycle in 0..opts.max_restarts {
        if locked.len() >= k {
            break;
        }
        let need = k - locked.len();
        let free = n - locked.len();
        let m_cap = (opts.basis_factor * need).max(need + 30).min(free);

        let mut v = std::mem::take(&mut keep);
        let mut av = std::mem::take(&mut keep_img);
        while v.len() < m_cap {
            let mut w = next;
            let mut tries = 0;
            let ok = loop {
                if project_out(&mut w, &locked, &v) {
                    break true;
                }
                // Invariant subspace reached; continue from a fresh direction.
                tries += 1;
                if tries > 5 {
                    break false;
                }
                w = random_vec(&mut rng);
            };
            if !ok {
                break;
            }
            let mut img = vec![0.0; n];
            op.apply(&w, &mut img);
            next = img.clone();
            v.push(w);
            av.push(img);
        }
        let m = v.len();
        if m == 0 {
            break;
        }
        let mut h = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let x = 0.5 * (dot(&v[i], &av[j]) + dot(&v[j], &av[i]));
                h[i * m + j] = x;
                h[j * m + i] = x;
            }
        }
        let ritz = dense_symmetric_eigen(&h, m)?;
        let combine = |basis: &[Vec<f64>], s: &[f64]| {
            let mut y = vec![0.0; n];
            for (b, &c) in basis.iter().zip(s) {
                axpy(c, b, &mut y);
            }
            y
        };

        let mut i = 0;
        let mut first_res: Option<Vec<f64>> = None;
        while i < m && locked.len() < k {
            let y = combine(&v, &ritz.vectors[i]);
            let ay = combine(&av, &ritz.vectors[i]);
            let theta = ritz.values[i];
            let r: Vec<f64> = ay.iter().zip(&y).map(|(a, b)| a - theta * b).collect();
            let res = norm(&r);
            if res > opts.tol {
                worst_res = res;
                first_res = Some(r);
                break;
            }
            locked_vals.push(theta);
            locked.push(y);
            i += 1;
        }
        if locked.len() >= k {
            break;
        }
        let still = k - locked.len();
        let retain = (still + still / 2 + 2).min(m - i).min(m_cap.saturating_sub(1));
        for j in i..i + retain {
            keep.push(combine(&v, &ritz.vectors[j]));
            keep_img.push(combine(&av, &ritz.vectors[j]));
        }
        next = match first_res {
            Some(r) => r,
            None => random_vec(&mut rng),
        };
    }
    if locked.len() < k {
        return Err(Error::NoConvergence {
            requested: k,
            converged: locked.len(),
            residual: worst_res,
        });
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| locked_vals[a].total_cmp(&locked_vals[b]).then(a.cmp(&b)));
    Ok(EigenPairs {
        values: order.iter().map(|&i| locked_vals[i]).collect(),
        vectors: order.iter().map(|&i| locked[i].clone()).collect(),
    })
}
