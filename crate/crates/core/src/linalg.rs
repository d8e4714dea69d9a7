//! Dense kernels and power iteration for the largest eigenvalue of a symmetric
//! positive semidefinite operator given as a closure.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self { tolerance: 1e-12, max_iterations: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    /// Largest eigenvalue estimate (Rayleigh quotient of the last iterate).
    pub eigenvalue: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative change of the Rayleigh quotient at the last step.
    pub residual: f64,
    #[serde(skip)]
    pub vector: Vec<f64>,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Eigenvalues and eigenvectors (columns of `vecs`, row-major `n×n`) of a
/// small dense symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut vecs = vec![0.0; n * n];
    for i in 0..n {
        vecs[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        let scale: f64 = m.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (vecs[k * n + p], vecs[k * n + q]);
                    vecs[k * n + p] = c * vkp - s * vkq;
                    vecs[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i * n + i]).collect(), vecs)
}

/// Largest eigenvalue of the symmetric tridiagonal matrix with diagonal `a`
/// and off-diagonal `b`, by Sturm-sequence bisection.
fn tridiagonal_top(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { b[i - 1].abs() } else { 0.0 } + if i + 1 < n { b[i].abs() } else { 0.0 };
        lo = lo.min(a[i] - r);
        hi = hi.max(a[i] + r);
    }
    // number of eigenvalues below x
    let below = |x: f64| {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..n {
            let off = if i > 0 { b[i - 1] * b[i - 1] } else { 0.0 };
            d = a[i] - x - if i > 0 { off / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (x.abs() + f64::MIN_POSITIVE);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) >= n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const KRYLOV_DIM: usize = 240;

/// One run of the iteration from `start`. The power sequence `v, Av, A²v, …`
/// is accumulated in an orthonormal Krylov basis (Lanczos with full
/// reorthogonalization) and the top Ritz value is tracked; the run stops when
/// its relative change drops below the tolerance, and restarts from the top
/// Ritz vector when the basis is full. Operator applications are capped.
fn run(
    start: Vec<f64>,
    apply: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    cfg: &PowerConfig,
) -> PowerResult {
    let n = start.len();
    let mut v = start;
    normalize(&mut v);
    let mut applications = 0usize;
    let mut previous = 0.0_f64;
    let mut residual = f64::INFINITY;
    let dim = n.min(KRYLOV_DIM);
    loop {
        let mut basis: Vec<Vec<f64>> = vec![v.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut done = false;
        let mut converged = false;
        for j in 0..dim {
            let mut w = apply(&basis[j]);
            applications += 1;
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&w, q);
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let theta = tridiagonal_top(&alpha, &beta);
            residual = if theta > 0.0 { (theta - previous).abs() / theta } else { 0.0 };
            previous = theta;
            let invariant = b <= 1e-14 * theta.abs().max(f64::MIN_POSITIVE) || theta <= 0.0;
            if (j > 0 && residual <= cfg.tolerance) || invariant {
                converged = true;
                done = true;
                break;
            }
            if applications >= cfg.max_iterations {
                done = true;
                break;
            }
            if j + 1 < dim {
                beta.push(b);
                basis.push(w.into_iter().map(|x| x / b).collect());
            }
        }
        // top Ritz vector of the current basis
        let k = alpha.len();
        let mut t = vec![0.0; k * k];
        for i in 0..k {
            t[i * k + i] = alpha[i];
            if i + 1 < k {
                t[i * k + i + 1] = beta[i];
                t[(i + 1) * k + i] = beta[i];
            }
        }
        let (vals, vecs) = jacobi_eigen(&t, k);
        let top = (0..k).max_by(|a, b| vals[*a].total_cmp(&vals[*b])).unwrap_or(0);
        let mut x = vec![0.0; n];
        for (i, q) in basis.iter().enumerate().take(k) {
            let c = vecs[i * k + top];
            x.iter_mut().zip(q).for_each(|(s, y)| *s += c * y);
        }
        normalize(&mut x);
        if done {
            let ax = apply(&x);
            let eigenvalue = dot(&ax, &x).max(0.0);
            return PowerResult {
                eigenvalue,
                iterations: applications + 1,
                converged,
                residual,
                vector: x,
            };
        }
        v = x;
    }
}

/// Largest eigenvalue of a symmetric PSD operator of dimension `n`.
///
/// The first run starts from the normalized all-ones vector. A second run
/// starts from a fixed pseudo-random vector orthogonalized against the first
/// result, which catches the case where the all-ones start has no component
/// along the top eigenvector; the larger of the two is returned.
pub fn largest_eigenvalue(
    n: usize,
    apply: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    cfg: &PowerConfig,
) -> PowerResult {
    if n == 0 {
        return PowerResult { eigenvalue: 0.0, iterations: 0, converged: true, residual: 0.0, vector: vec![] };
    }
    let first = run(vec![1.0; n], apply, cfg);
    if n == 1 {
        return first;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dot: f64 = start.iter().zip(&first.vector).map(|(a, b)| a * b).sum();
    start.iter_mut().zip(&first.vector).for_each(|(s, v)| *s -= dot * v);
    if normalize(&mut start) == 0.0 {
        return first;
    }
    let second = run(start, apply, cfg);
    let iterations = first.iterations + second.iterations;
    let mut best = if second.eigenvalue > first.eigenvalue * (1.0 + 1e-12) { second } else { first };
    best.iterations = iterations;
    best
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

const PAR_THRESHOLD: usize = 64 * 64;

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let dot = |r: usize| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        if self.rows * self.cols >= PAR_THRESHOLD {
            (0..self.rows).into_par_iter().map(dot).collect()
        } else {
            (0..self.rows).map(dot).collect()
        }
    }

    /// `Aᵀ y`, reduced column by column in a fixed order.
    pub fn mul_t_vec(&self, y: &[f64]) -> Vec<f64> {
        let col = |c: usize| (0..self.rows).map(|r| self.get(r, c) * y[r]).sum::<f64>();
        if self.rows * self.cols >= PAR_THRESHOLD {
            (0..self.cols).into_par_iter().map(col).collect()
        } else {
            (0..self.cols).map(col).collect()
        }
    }

    pub fn transpose(&self) -> Dense {
        let mut t = Dense::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }
}

/// Largest singular value of `A` through power iteration on `AᵀA`.
pub fn spectral_norm(a: &Dense, cfg: &PowerConfig) -> PowerResult {
    if a.rows == 0 || a.cols == 0 {
        return PowerResult { eigenvalue: 0.0, iterations: 0, converged: true, residual: 0.0, vector: vec![] };
    }
    let at = a.transpose();
    let apply = |x: &[f64]| at.mul_vec(&a.mul_vec(x));
    let mut r = largest_eigenvalue(a.cols, &apply, cfg);
    r.eigenvalue = r.eigenvalue.max(0.0).sqrt();
    r
}

/// Largest singular value of a dense complex matrix (row-major), through
/// power iteration on `AᴴA` realized as a real symmetric operator of twice
/// the dimension.
pub fn complex_spectral_norm(
    rows: usize,
    cols: usize,
    data: &[Complex64],
    cfg: &PowerConfig,
) -> PowerResult {
    if rows == 0 || cols == 0 {
        return PowerResult { eigenvalue: 0.0, iterations: 0, converged: true, residual: 0.0, vector: vec![] };
    }
    let apply = |x: &[f64]| {
        let z: Vec<Complex64> = (0..cols).map(|c| Complex64::new(x[c], x[cols + c])).collect();
        let y: Vec<Complex64> = (0..rows)
            .map(|r| data[r * cols..(r + 1) * cols].iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect();
        let back: Vec<Complex64> = (0..cols)
            .map(|c| (0..rows).map(|r| data[r * cols + c].conj() * y[r]).sum())
            .collect();
        back.iter().map(|v| v.re).chain(back.iter().map(|v| v.im)).collect()
    };
    let mut r = largest_eigenvalue(2 * cols, &apply, cfg);
    r.eigenvalue = r.eigenvalue.max(0.0).sqrt();
    r
}
