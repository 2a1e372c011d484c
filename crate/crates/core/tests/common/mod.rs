//! Reference computations shared by the integration tests. Nothing here
//! calls into the crate's linear algebra; matrices are plain row-major
//! `Vec<Vec<f64>>`.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Box-Muller normal draw.
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random::<f64>().max(1e-300);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

pub fn zeros(n: usize, m: usize) -> Mat {
    vec![vec![0.0; m]; n]
}

pub fn identity(n: usize) -> Mat {
    let mut a = zeros(n, n);
    for i in 0..n {
        a[i][i] = 1.0;
    }
    a
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = zeros(n, m);
    for i in 0..n {
        for t in 0..k {
            let x = a[i][t];
            for j in 0..m {
                c[i][j] += x * b[t][j];
            }
        }
    }
    c
}

pub fn transpose(a: &Mat) -> Mat {
    let (n, m) = (a.len(), a[0].len());
    (0..m).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Quadratic form `u^T A v`.
pub fn form(a: &Mat, u: &[f64], v: &[f64]) -> f64 {
    dot(u, &matvec(a, v))
}

/// `G G^T + shift I` for a random Gaussian `G`.
pub fn random_spd(d: usize, shift: f64, rng: &mut impl Rng) -> Mat {
    let g: Mat = (0..d).map(|_| (0..d).map(|_| normal(rng)).collect()).collect();
    let mut a = matmul(&g, &transpose(&g));
    for i in 0..d {
        a[i][i] += shift;
    }
    a
}

/// Cyclic Jacobi rotations. Returns eigenvalues (ascending) and the
/// matching eigenvectors as columns.
pub fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut a = a.clone();
    let mut v = identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&i| v[r][i]).collect()).collect();
    (values, vectors)
}

/// `A^(-1/2)` of a symmetric positive definite matrix via its spectrum.
pub fn inv_sqrt(a: &Mat) -> Mat {
    let (vals, vecs) = jacobi_eigen(a);
    let n = a.len();
    let mut out = zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        let w = 1.0 / lam.sqrt();
        for i in 0..n {
            for j in 0..n {
                out[i][j] += w * vecs[i][k] * vecs[j][k];
            }
        }
    }
    out
}

/// Eigenvalues of `N^-1 S`, descending, through the symmetric similarity
/// `N^(-1/2) S N^(-1/2)`.
pub fn generalized_eigenvalues(s: &Mat, n: &Mat) -> Vec<f64> {
    let r = inv_sqrt(n);
    let m = matmul(&matmul(&r, s), &r);
    let sym: Mat = (0..m.len()).map(|i| (0..m.len()).map(|j| 0.5 * (m[i][j] + m[j][i])).collect()).collect();
    let mut vals = jacobi_eigen(&sym).0;
    vals.reverse();
    vals
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(a: &Mat) -> f64 {
    jacobi_eigen(a).0.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `(1 / n_c) sum x x^T` over rows of class `c`, by direct summation.
pub fn class_second_moment(rows: &[Vec<f64>], labels: &[usize], c: usize) -> Mat {
    let d = rows[0].len();
    let mut m = zeros(d, d);
    let mut n = 0usize;
    for (x, &y) in rows.iter().zip(labels) {
        if y != c {
            continue;
        }
        n += 1;
        for i in 0..d {
            for j in 0..d {
                m[i][j] += x[i] * x[j];
            }
        }
    }
    for r in &mut m {
        r.iter_mut().for_each(|v| *v /= n as f64);
    }
    m
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// `sum_m KL(q || p_m)`.
pub fn total_kl(q: &[f64], members: &[Vec<f64>]) -> f64 {
    members
        .iter()
        .map(|p| q.iter().zip(p).filter(|(qi, _)| **qi > 0.0).map(|(qi, pi)| qi * (qi / pi).ln()).sum::<f64>())
        .sum()
}

/// Minimizer of [`total_kl`] over the 3-simplex by a coarse grid followed
/// by successively finer local grids.
pub fn kl_grid_minimizer(members: &[Vec<f64>]) -> Vec<f64> {
    let mut best = vec![1.0 / 3.0; 3];
    let mut best_val = total_kl(&best, members);
    let steps = 200;
    for a in 0..=steps {
        for b in 0..=steps - a {
            let q = [a as f64 / steps as f64, b as f64 / steps as f64, (steps - a - b) as f64 / steps as f64];
            let v = total_kl(&q, members);
            if v < best_val {
                best_val = v;
                best = q.to_vec();
            }
        }
    }
    let mut h = 1.0 / steps as f64;
    for _ in 0..4 {
        let center = best.clone();
        let fine = h / 10.0;
        for da in -20..=20 {
            for db in -20..=20 {
                let q0 = center[0] + da as f64 * fine;
                let q1 = center[1] + db as f64 * fine;
                let q2 = 1.0 - q0 - q1;
                if q0 < 0.0 || q1 < 0.0 || q2 < 0.0 {
                    continue;
                }
                let q = [q0, q1, q2];
                let v = total_kl(&q, members);
                if v < best_val {
                    best_val = v;
                    best = q.to_vec();
                }
            }
        }
        h = fine;
    }
    best
}

/// Probability vector on the 3-simplex with entries bounded away from 0.
pub fn random_prob(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Closed-form generalized eigenvectors of a diagonal pair: the
/// coordinate axes ordered by descending ratio `s_i / n_i`.
pub fn diagonal_pair_directions(s: &[f64], n: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let d = s.len();
    let mut out: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            (s[i] / n[i], e)
        })
        .collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    out
}

/// Log-density of `N(mean, diag(var))` up to the shared constant.
pub fn diag_gauss_logpdf(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter().zip(mean).zip(var).map(|((xi, m), v)| -0.5 * (xi - m) * (xi - m) / v - 0.5 * v.ln()).sum()
}

/// Monte Carlo Bayes error of two equiprobable diagonal Gaussians.
pub fn bayes_error_diag(classes: &[(Vec<f64>, Vec<f64>); 2], samples: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut errors = 0usize;
    for i in 0..samples {
        let y = i % 2;
        let (m, v) = &classes[y];
        let x: Vec<f64> = m.iter().zip(v).map(|(mi, vi)| mi + vi.sqrt() * normal(&mut r)).collect();
        let l0 = diag_gauss_logpdf(&x, &classes[0].0, &classes[0].1);
        let l1 = diag_gauss_logpdf(&x, &classes[1].0, &classes[1].1);
        let pred = if l1 > l0 { 1 } else { 0 };
        if pred != y {
            errors += 1;
        }
    }
    errors as f64 / samples as f64
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}
