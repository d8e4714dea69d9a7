//! Bad and essentially bad intervals, the good/bad split of Haar expansions
//! and Monte-Carlo estimates of how rare badness is over random lattice pairs.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{
    derive_seed, sample_shift_pair, scale_window, special_points, DyadicInterval, ShiftedLattice,
    MAX_SCALE, MIN_SCALE,
};
use crate::error::{Error, Result};
use crate::haar::{decompose, HaarCoefficients};
use crate::measure::{normalize_pair, WeightedFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoodBadConfig {
    pub r: u32,
    /// Ratios `|J|/|I| = 2^k` are examined for `0 ≤ k < scale_cap`.
    pub scale_cap: u32,
}

impl GoodBadConfig {
    pub fn new(r: u32, scale_cap: u32) -> Result<Self> {
        if r == 0 || scale_cap < r {
            return Err(Error::ParameterOutOfRange(format!("r = {r}, scale_cap = {scale_cap}")));
        }
        Ok(Self { r, scale_cap })
    }
}

impl Default for GoodBadConfig {
    fn default() -> Self {
        Self { r: 4, scale_cap: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BadnessVerdict {
    pub bad: bool,
    pub essentially_bad: bool,
    pub witness: Option<DyadicInterval>,
}

fn distance_to_closed(x: f64, lo: f64, hi: f64) -> f64 {
    (lo - x).max(x - hi).max(0.0)
}

fn unbounded(lattice: &ShiftedLattice) -> ShiftedLattice {
    ShiftedLattice { k_min: MIN_SCALE, k_max: MAX_SCALE, ..*lattice }
}

/// Intervals `J` of `other` with `|J| = 2^k |I|`, `k ∈ [0, scale_cap)`, and
/// `dist(e(J), I) < |J|^{3/4}|I|^{1/4}`, in order of increasing `k`.
fn bad_witnesses(i: &DyadicInterval, other: &ShiftedLattice, scale_cap: u32) -> impl Iterator<Item = (u32, DyadicInterval)> {
    let other = unbounded(other);
    let (lo, hi, len) = (i.left(), i.right(), i.length());
    let i = *i;
    (0..scale_cap).take_while(move |k| i.scale + *k as i32 <= MAX_SCALE).flat_map(move |k| {
        let s = i.scale + k as i32;
        let j0 = other.locate(lo, s).expect("scale inside the unbounded range");
        let threshold = (s as f64 * 0.75).exp2() * len.powf(0.25);
        // J two steps right can still be close when |J| ≤ 2|I|
        (-1..=2).filter_map(move |d| {
            let j = DyadicInterval { index: j0.index + d, ..j0 };
            let dist = special_points(&j)
                .iter()
                .map(|p| distance_to_closed(*p, lo, hi))
                .fold(f64::INFINITY, f64::min);
            (dist < threshold).then_some((k, j))
        })
    })
}

/// Verdict for `I ∈ D^μ` against the other lattice. The witness is the first
/// essentially bad `J` when there is one, otherwise the first bad `J`.
pub fn classify(i: &DyadicInterval, other: &ShiftedLattice, cfg: &GoodBadConfig) -> BadnessVerdict {
    let mut first_bad = None;
    for (k, j) in bad_witnesses(i, other, cfg.scale_cap) {
        if first_bad.is_none() {
            first_bad = Some(j);
        }
        if k >= cfg.r {
            return BadnessVerdict { bad: true, essentially_bad: true, witness: Some(j) };
        }
    }
    BadnessVerdict { bad: first_bad.is_some(), essentially_bad: false, witness: first_bad }
}

/// Largest `k < scale_cap` at which a bad `J` exists: `I` is essentially bad
/// for exactly the `r ≤` this value.
pub fn badness_depth(i: &DyadicInterval, other: &ShiftedLattice, scale_cap: u32) -> Option<u32> {
    bad_witnesses(i, other, scale_cap).map(|(k, _)| k).last()
}

/// `dist(J, ∂I) ≥ |I|^{3/4}|J|^{1/4}` for every `I` of `other` with
/// `scale(J) + r ≤ scale(I) ≤ top_scale`.
pub fn good_strong(j: &DyadicInterval, other: &ShiftedLattice, r: u32, top_scale: i32) -> bool {
    let other = unbounded(other);
    let (lo, hi, len) = (j.left(), j.right(), j.length());
    let first = j.scale.saturating_add(r as i32);
    (first..=top_scale.min(MAX_SCALE)).all(|s| {
        let i0 = other.locate(lo, s).expect("scale inside the unbounded range");
        let threshold = (s as f64 * 0.75).exp2() * len.powf(0.25);
        (-1..=2).all(|d| {
            let i = DyadicInterval { index: i0.index + d, ..i0 };
            distance_to_closed(i.left(), lo, hi) >= threshold
        })
    })
}

/// Which intervals count as good in paraproduct families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "filter", rename_all = "lowercase")]
pub enum GoodFilter {
    All,
    Strong { r: u32 },
}

impl GoodFilter {
    pub fn accepts(&self, j: &DyadicInterval, other: &ShiftedLattice, top_scale: i32) -> bool {
        match self {
            GoodFilter::All => true,
            GoodFilter::Strong { r } => good_strong(j, other, *r, top_scale),
        }
    }
}

/// `(good, bad)`: the bad part holds the coefficients on essentially bad
/// intervals, the good part the rest together with the top term.
pub fn split_good_bad(
    coeffs: &HaarCoefficients,
    other: &ShiftedLattice,
    cfg: &GoodBadConfig,
) -> Result<(HaarCoefficients, HaarCoefficients)> {
    if coeffs.lattice.shift.to_bits() == other.shift.to_bits() && coeffs.lattice.bits == other.bits {
        return Err(Error::LatticeMismatch);
    }
    let bad_set: Vec<bool> =
        coeffs.entries.keys().map(|i| classify(i, other, cfg).essentially_bad).collect();
    let mut it = bad_set.iter();
    let bad = coeffs.restrict(|_| *it.next().expect("one flag per entry"));
    let mut it = bad_set.iter();
    let mut good = coeffs.restrict(|_| !*it.next().expect("one flag per entry"));
    good.top = coeffs.top;
    Ok((good, bad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub r: u32,
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

fn sample_count(samples: usize) -> Result<()> {
    if samples < 100 {
        return Err(Error::ParameterOutOfRange(format!("{samples} samples, at least 100 needed")));
    }
    Ok(())
}

/// Badness depth of the scale-0 interval of `D^μ` containing `[1/4, 3/4]`
/// for the `index`-th shift pair of the run.
fn root_depth(seed: u64, index: u64, scale_cap: u32) -> Option<u32> {
    let pair = sample_shift_pair(derive_seed(seed, index));
    let (l1, l2) = pair.lattices(0, 0).expect("sampled shifts are admissible");
    badness_depth(&l1.root(), &l2, scale_cap)
}

fn frequency(count: usize, n: usize) -> (f64, f64) {
    let p = count as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Frequency of essential badness of the root interval over `samples` random
/// lattice pairs, with its binomial standard error.
pub fn estimate_bad_probability(cfg: &GoodBadConfig, samples: usize, seed: u64) -> Result<Estimate> {
    Ok(bad_probability_sweep(&[cfg.r], cfg.scale_cap, samples, seed)?.remove(0))
}

/// The same estimate for several `r` on one shared set of lattice pairs.
pub fn bad_probability_sweep(rs: &[u32], scale_cap: u32, samples: usize, seed: u64) -> Result<Vec<Estimate>> {
    sample_count(samples)?;
    let depths: Vec<Option<u32>> =
        (0..samples as u64).into_par_iter().map(|i| root_depth(seed, i, scale_cap)).collect();
    Ok(rs
        .iter()
        .map(|&r| {
            let count = depths.iter().filter(|d| d.is_some_and(|k| k >= r)).count();
            let (estimate, stderr) = frequency(count, samples);
            Estimate { r, estimate, stderr, samples, seed }
        })
        .collect())
}

/// Ratios `‖f_bad‖/‖f‖` for each `r`, on one lattice pair. Both norms are
/// taken from the same Haar coefficients, so every ratio is at most 1.
fn bad_ratios(f: &WeightedFunction, rs: &[u32], scale_cap: u32, seed: u64, index: u64) -> Result<Vec<f64>> {
    let mu = f.base();
    let (k_min, k_max) = scale_window(&mu.positions());
    let pair = sample_shift_pair(derive_seed(seed, index));
    let (l1, l2) = pair.lattices(k_min, k_max)?;
    let coeffs = decompose(f, &l1, &l1.root())?;
    let depths: Vec<(f64, Option<u32>)> =
        coeffs.entries.iter().map(|(i, c)| (c * c, badness_depth(i, &l2, scale_cap))).collect();
    let total: f64 = depths.iter().map(|(e, _)| e).sum();
    if total <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(rs
        .iter()
        .map(|&r| {
            let bad: f64 = depths.iter().filter(|(_, d)| d.is_some_and(|k| k >= r)).map(|(e, _)| e).sum();
            (bad / total).sqrt()
        })
        .collect())
}

/// `f` moved onto the normalized copy of its base measure with its mean removed.
fn prepare(f: &WeightedFunction) -> Result<WeightedFunction> {
    let mu = f.base();
    let norm = normalize_pair(mu, mu)?;
    let total = mu.total_mass();
    let mean = f.integral() / total;
    let values: Vec<f64> = f.values().iter().map(|v| v - mean).collect();
    let g = WeightedFunction::new(Arc::clone(&norm.mu), values)?;
    // normalization rescales weights, so the norm is taken after the move
    let n = g.norm();
    if !(n > 0.0) || n <= 1e-14 * f.sup_norm() * norm.mu.total_mass().sqrt() {
        return Err(Error::ZeroNorm);
    }
    Ok(g)
}

/// Monte-Carlo mean of `‖f_bad‖_μ / ‖f‖_μ` over random lattice pairs, after
/// removing the mean of `f` and normalizing the support into `[1/4, 3/4]`.
pub fn estimate_epsilon_r(f: &WeightedFunction, cfg: &GoodBadConfig, samples: usize, seed: u64) -> Result<Estimate> {
    Ok(epsilon_sweep(f, &[cfg.r], cfg.scale_cap, samples, seed)?.remove(0))
}

pub fn epsilon_sweep(
    f: &WeightedFunction,
    rs: &[u32],
    scale_cap: u32,
    samples: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    sample_count(samples)?;
    let g = prepare(f)?;
    let per_sample: Vec<Vec<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| bad_ratios(&g, rs, scale_cap, seed, i))
        .collect::<Result<_>>()?;
    Ok(rs
        .iter()
        .enumerate()
        .map(|(c, &r)| {
            let n = samples as f64;
            let mean = per_sample.iter().map(|v| v[c]).sum::<f64>() / n;
            let var = per_sample.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Estimate { r, estimate: mean, stderr: (var / n).sqrt(), samples, seed }
        })
        .collect())
}

/// CSV with columns `r,estimate,stderr,N,seed`.
pub fn sweep_csv(rows: &[Estimate]) -> String {
    let mut out = String::from("r,estimate,stderr,N,seed\n");
    for e in rows {
        out.push_str(&format!("{},{},{},{},{}\n", e.r, e.estimate, e.stderr, e.samples, e.seed));
    }
    out
}

/// Least-squares slope of `-ln(estimate)` against `r` over the rows with a
/// positive estimate; `None` with fewer than two such rows.
pub fn decay_rate(rows: &[Estimate]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|e| e.estimate > 0.0).map(|e| (e.r as f64, e.estimate.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(-sxy / sxx)
}
