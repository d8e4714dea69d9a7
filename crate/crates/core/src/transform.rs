//! The discrete Hilbert kernel, Poisson extensions, the maximal function and
//! the circle objects (Cauchy kernel, Blaschke factors, disc Poisson integral).

use std::f64::consts::{FRAC_1_PI, PI};
use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Dense, PowerConfig, PowerResult};
use crate::measure::{common_atom, Atom, DiscreteMeasure, WeightedFunction};

/// `(1/π)·d/(d² + δ²)`, zero at `d = δ = 0`. Odd in `d` bit for bit.
#[inline]
pub fn hilbert_kernel(d: f64, delta: f64) -> f64 {
    let den = d * d + delta * delta;
    if den == 0.0 {
        0.0
    } else {
        FRAC_1_PI * d / den
    }
}

/// Rows are target atoms, columns source atoms.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub source: Arc<DiscreteMeasure>,
    pub target: Arc<DiscreteMeasure>,
    pub delta: f64,
    pub entries: Dense,
    /// Set when `δ = 0` and the measures share an atom (entry set to 0).
    pub coincident: bool,
}

pub fn hilbert_matrix(
    mu: &Arc<DiscreteMeasure>,
    nu: &Arc<DiscreteMeasure>,
    delta: f64,
) -> KernelMatrix {
    let (rows, cols) = (nu.len(), mu.len());
    let mut entries = Dense::zeros(rows, cols);
    for (j, y) in nu.atoms().iter().enumerate() {
        for (i, x) in mu.atoms().iter().enumerate() {
            entries.data[j * cols + i] = hilbert_kernel(y.position - x.position, delta);
        }
    }
    KernelMatrix {
        source: Arc::clone(mu),
        target: Arc::clone(nu),
        delta,
        entries,
        coincident: delta == 0.0 && common_atom(mu, nu).is_some(),
    }
}

impl KernelMatrix {
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries.get(row, col)
    }

    /// `A[j][i] = √v_j · K[j][i] · √w_i`, the matrix of `H_μ : L²(μ) → L²(ν)`
    /// in orthonormal coordinates.
    pub fn weighted(&self) -> Dense {
        let sw: Vec<f64> = self.source.atoms().iter().map(|a| a.weight.sqrt()).collect();
        let sv: Vec<f64> = self.target.atoms().iter().map(|a| a.weight.sqrt()).collect();
        let mut out = self.entries.clone();
        for (j, v) in sv.iter().enumerate() {
            for (i, w) in sw.iter().enumerate() {
                out.data[j * out.cols + i] *= v * w;
            }
        }
        out
    }

    pub fn operator_norm(&self, cfg: &PowerConfig) -> PowerResult {
        linalg::spectral_norm(&self.weighted(), cfg)
    }
}

pub fn apply_hilbert(k: &KernelMatrix, f: &WeightedFunction) -> Result<WeightedFunction> {
    if !f.same_base(&k.source) {
        return Err(Error::BaseMismatch);
    }
    let fw: Vec<f64> = f
        .values()
        .iter()
        .zip(k.source.atoms())
        .map(|(v, a)| v * a.weight)
        .collect();
    WeightedFunction::new(Arc::clone(&k.target), k.entries.mul_vec(&fw))
}

/// `H_μ(f·χ)` at every atom of `nu`, where only the source atoms in `range`
/// participate; `values = None` means `f ≡ 1`.
pub fn hilbert_on_range(
    mu: &DiscreteMeasure,
    range: Range<usize>,
    values: Option<&[f64]>,
    nu: &DiscreteMeasure,
) -> Vec<f64> {
    let src = &mu.atoms()[range.clone()];
    let eval = |y: &Atom| {
        src.iter()
            .enumerate()
            .map(|(i, a)| {
                let f = values.map_or(1.0, |v| v[range.start + i]);
                hilbert_kernel(y.position - a.position, 0.0) * f * a.weight
            })
            .sum::<f64>()
    };
    if src.len() * nu.len() >= 1 << 14 {
        nu.atoms().par_iter().map(eval).collect()
    } else {
        nu.atoms().iter().map(eval).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlanePoint {
    pub x: f64,
    pub y: f64,
}

impl HalfPlanePoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(y > 0.0 && y.is_finite() && x.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!("half-plane point needs y > 0, got {y}")));
        }
        Ok(Self { x, y })
    }
}

/// `(1/π) Σ y/((x − t)² + y²)·w` over the given atoms.
#[inline]
pub fn poisson_atoms(atoms: &[Atom], x: f64, y: f64) -> f64 {
    FRAC_1_PI
        * atoms
            .iter()
            .map(|a| {
                let d = x - a.position;
                y / (d * d + y * y) * a.weight
            })
            .sum::<f64>()
}

pub fn poisson_point(sigma: &DiscreteMeasure, z: HalfPlanePoint) -> f64 {
    poisson_atoms(sigma.atoms(), z.x, z.y)
}

/// Poisson integral at the point over the centre of `[a, b]` at height
/// `b − a`.
pub fn poisson_interval(sigma: &DiscreteMeasure, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Err(Error::DegenerateInterval(a));
    }
    Ok(poisson_point(sigma, HalfPlanePoint::new(0.5 * (a + b), b - a)?))
}

/// `sup_{I ∋ x} (1/|I|) ∫_I |f| dμ`; `+∞` when `x` is an atom where `f ≠ 0`.
pub fn maximal_value(f: &WeightedFunction, x: f64) -> f64 {
    let atoms = f.base().atoms();
    let g: Vec<(f64, f64)> = atoms
        .iter()
        .zip(f.values())
        .filter(|(_, v)| **v != 0.0)
        .map(|(a, v)| (a.position, v.abs() * a.weight))
        .collect();
    if g.iter().any(|(p, _)| *p == x) {
        return f64::INFINITY;
    }
    let split = g.partition_point(|(p, _)| *p < x);
    // left candidates: x itself, then atoms moving outward
    let mut lefts = vec![(x, 0.0)];
    let mut acc = 0.0;
    for (p, m) in g[..split].iter().rev() {
        acc += m;
        lefts.push((*p, acc));
    }
    let mut rights = vec![(x, 0.0)];
    acc = 0.0;
    for (p, m) in &g[split..] {
        acc += m;
        rights.push((*p, acc));
    }
    let mut best = 0.0_f64;
    for (a, ma) in &lefts {
        for (b, mb) in &rights {
            if b > a {
                best = best.max((ma + mb) / (b - a));
            }
        }
    }
    best
}

/// Unit complex number at angle `θ`.
pub fn unit(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

/// Measure on the circle given by atom angles, reduced to `[0, 2π)`.
pub fn circle_measure(label: &str, pairs: &[(f64, f64)]) -> Result<DiscreteMeasure> {
    let reduced: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&(t, w)| (t.rem_euclid(2.0 * PI), w))
        .collect();
    DiscreteMeasure::from_pairs(label, &reduced)
}

fn check_disc(a: Complex64) -> Result<()> {
    if a.norm() < 1.0 {
        Ok(())
    } else {
        Err(Error::OutsideDisc)
    }
}

/// Blaschke factor `(z − a)/(1 − āz)`.
pub fn blaschke(a: Complex64, z: Complex64) -> Complex64 {
    (z - a) / (Complex64::new(1.0, 0.0) - a.conj() * z)
}

pub fn blaschke_identity_residual(a: Complex64, zeta: Complex64, z: Complex64) -> Result<f64> {
    check_disc(a)?;
    let one = Complex64::new(1.0, 0.0);
    let lhs = (one - blaschke(a, zeta).conj() * blaschke(a, z)) / (one - zeta.conj() * z);
    let rhs = (one - a.norm_sqr()) / ((one - a * zeta.conj()) * (one - a.conj() * z));
    Ok((lhs - rhs).norm())
}

/// Disc Poisson integral `(1/2π) Σ (1 − |a|²)/|1 − āζ|²·w` of an
/// angle-parameterized measure.
pub fn poisson_disc(sigma: &DiscreteMeasure, a: Complex64) -> Result<f64> {
    check_disc(a)?;
    let s: f64 = sigma
        .atoms()
        .iter()
        .map(|t| (1.0 - a.norm_sqr()) / (Complex64::new(1.0, 0.0) - a.conj() * unit(t.position)).norm_sqr() * t.weight)
        .sum();
    Ok(s / (2.0 * PI))
}

/// `(1/2π)/(1 − ζ̄_i z_j)`, rows over target atoms `z_j`, columns over source
/// atoms `ζ_i`.
#[derive(Debug, Clone)]
pub struct CircleKernel {
    pub source: Arc<DiscreteMeasure>,
    pub target: Arc<DiscreteMeasure>,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Complex64>,
}

pub fn cauchy_matrix_circle(
    mu: &Arc<DiscreteMeasure>,
    nu: &Arc<DiscreteMeasure>,
) -> Result<CircleKernel> {
    if let Some(p) = common_atom(mu, nu) {
        return Err(Error::CommonAtom(p));
    }
    let one = Complex64::new(1.0, 0.0);
    let (rows, cols) = (nu.len(), mu.len());
    let mut entries = Vec::with_capacity(rows * cols);
    for z in nu.atoms() {
        let z = unit(z.position);
        for zeta in mu.atoms() {
            entries.push(one / (one - unit(zeta.position).conj() * z) / (2.0 * PI));
        }
    }
    Ok(CircleKernel { source: Arc::clone(mu), target: Arc::clone(nu), rows, cols, entries })
}

impl CircleKernel {
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.cols + col]
    }

    /// Norm of the operator `L²(μ) → L²(ν)`.
    pub fn operator_norm(&self, cfg: &PowerConfig) -> PowerResult {
        let mut data = self.entries.clone();
        for (j, z) in self.target.atoms().iter().enumerate() {
            for (i, x) in self.source.atoms().iter().enumerate() {
                data[j * self.cols + i] *= (z.weight * x.weight).sqrt();
            }
        }
        linalg::complex_spectral_norm(self.rows, self.cols, &data, cfg)
    }
}
