// Shared fixtures for the integration suites. Each test binary uses a subset.
#![allow(dead_code)]

use corona_lab::measure::{Atom, DiscreteMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Disjointly supported pair with `n_mu`, `n_nu` atoms in `[lo, hi)` and
/// weights in `[0.1, 2)`.
pub fn random_pair(rng: &mut ChaCha8Rng, n_mu: usize, n_nu: usize, lo: f64, hi: f64) -> (DiscreteMeasure, DiscreteMeasure) {
    let mut pos: Vec<f64> = Vec::new();
    while pos.len() < n_mu + n_nu {
        let x = rng.gen_range(lo..hi);
        if !pos.contains(&x) {
            pos.push(x);
        }
    }
    let mut mu = Vec::new();
    let mut nu = Vec::new();
    for (k, x) in pos.into_iter().enumerate() {
        let a = Atom::new(x, rng.gen_range(0.1..2.0));
        if k < n_mu {
            mu.push(a);
        } else {
            nu.push(a);
        }
    }
    (DiscreteMeasure::new("mu", mu).unwrap(), DiscreteMeasure::new("nu", nu).unwrap())
}

/// Pair with atom counts drawn from `sizes`.
pub fn random_sized_pair(rng: &mut ChaCha8Rng, sizes: std::ops::RangeInclusive<usize>) -> (DiscreteMeasure, DiscreteMeasure) {
    let a = rng.gen_range(sizes.clone());
    let b = rng.gen_range(sizes);
    random_pair(rng, a, b, 0.0, 1.0)
}

pub fn measure(pairs: &[(f64, f64)]) -> DiscreteMeasure {
    DiscreteMeasure::from_pairs("t", pairs).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

/// `(1/π) Σ y w / ((x − t)² + y²)`, written out independently of the library.
pub fn poisson(atoms: &[(f64, f64)], x: f64, y: f64) -> f64 {
    atoms.iter().map(|&(t, w)| y * w / ((x - t) * (x - t) + y * y)).sum::<f64>() / std::f64::consts::PI
}

pub fn pairs_of(m: &DiscreteMeasure) -> Vec<(f64, f64)> {
    m.atoms().iter().map(|a| (a.position, a.weight)).collect()
}

/// Dense symmetric eigen-decomposition oracle: largest eigenvalue by cyclic
/// Jacobi sweeps, independent of the library's solver.
pub fn dense_top_eigenvalue(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i * n + j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).fold(f64::NEG_INFINITY, f64::max)
}

/// One measure with `n` atoms in `[lo, hi)`.
pub fn random_measure(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DiscreteMeasure {
    let mut atoms: Vec<Atom> = Vec::new();
    while atoms.len() < n {
        let x = rng.gen_range(lo..hi);
        if !atoms.iter().any(|a| a.position == x) {
            atoms.push(Atom::new(x, rng.gen_range(0.1..2.0)));
        }
    }
    DiscreteMeasure::new("m", atoms).unwrap()
}
