//! Weighted Haar functions and the martingale-difference expansion of a
//! function on the atoms of a measure.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicInterval, ShiftedLattice};
use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, WeightedFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaarFunction {
    pub interval: DyadicInterval,
    pub value_minus: f64,
    pub value_plus: f64,
    pub degenerate: bool,
}

/// Atom ranges of `I`, its left half and its right half.
pub fn split_ranges(mu: &DiscreteMeasure, i: &DyadicInterval) -> (Range<usize>, Range<usize>) {
    let [a, b] = i.children();
    let left = mu.half_open_range(a.left(), a.right());
    let right = mu.half_open_range(b.left(), b.right());
    (left, right)
}

pub(crate) fn haar_values(m_minus: f64, m_plus: f64) -> Option<(f64, f64)> {
    if m_minus > 0.0 && m_plus > 0.0 {
        let m = m_minus + m_plus;
        let s = m.sqrt();
        Some(((m_plus / m_minus).sqrt() / s, -(m_minus / m_plus).sqrt() / s))
    } else {
        None
    }
}

pub fn haar_function(mu: &DiscreteMeasure, i: &DyadicInterval) -> Result<HaarFunction> {
    let (l, r) = split_ranges(mu, i);
    let (ml, mr) = (mu.mass_of_range(l), mu.mass_of_range(r));
    if ml + mr <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(match haar_values(ml, mr) {
        Some((minus, plus)) => HaarFunction {
            interval: *i,
            value_minus: minus,
            value_plus: plus,
            degenerate: false,
        },
        None => HaarFunction { interval: *i, value_minus: 0.0, value_plus: 0.0, degenerate: true },
    })
}

impl HaarFunction {
    pub fn eval(&self, x: f64) -> f64 {
        let [a, b] = self.interval.children();
        if a.contains(x) {
            self.value_minus
        } else if b.contains(x) {
            self.value_plus
        } else {
            0.0
        }
    }

    pub fn to_function(&self, base: Arc<DiscreteMeasure>) -> WeightedFunction {
        let values = base.atoms().iter().map(|a| self.eval(a.position)).collect();
        WeightedFunction::new(base, values).expect("haar values are finite")
    }
}

/// Expansion of a function over `{Λ, h_I}` of one lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarCoefficients {
    pub lattice: ShiftedLattice,
    pub root: DyadicInterval,
    /// `∫ f dμ`; the constant part of `f` on the root is `top / μ(root)`.
    pub top: f64,
    pub entries: BTreeMap<DyadicInterval, f64>,
    base: Arc<DiscreteMeasure>,
}

impl HaarCoefficients {
    pub fn base(&self) -> &Arc<DiscreteMeasure> {
        &self.base
    }

    pub fn get(&self, i: &DyadicInterval) -> f64 {
        self.entries.get(i).copied().unwrap_or(0.0)
    }

    /// `Σ c_I²`, the squared norm of `f − Λf`.
    pub fn detail_norm_sq(&self) -> f64 {
        self.entries.values().map(|c| c * c).sum()
    }

    /// `‖Λf‖² = top² / μ(root)`.
    pub fn top_norm_sq(&self) -> f64 {
        let m = self.base.total_mass();
        if m > 0.0 {
            self.top * self.top / m
        } else {
            0.0
        }
    }

    /// Keeps the entries accepted by `keep` and drops the top term.
    pub fn restrict(&self, mut keep: impl FnMut(&DyadicInterval) -> bool) -> HaarCoefficients {
        HaarCoefficients {
            lattice: self.lattice,
            root: self.root,
            top: 0.0,
            entries: self
                .entries
                .iter()
                .filter(|(i, _)| keep(i))
                .map(|(i, c)| (*i, *c))
                .collect(),
            base: Arc::clone(&self.base),
        }
    }

    pub fn zero_like(&self) -> HaarCoefficients {
        self.restrict(|_| false)
    }
}

/// Walks the nonempty part of the tree below `root`, handing each visited
/// interval and its atom range to `visit`. Stops at single-atom intervals and
/// at the lattice's lowest scale.
pub fn walk_tree(
    mu: &DiscreteMeasure,
    lattice: &ShiftedLattice,
    root: &DyadicInterval,
    mut visit: impl FnMut(&DyadicInterval, Range<usize>, Range<usize>, Range<usize>),
) {
    let mut stack = vec![(*root, mu.half_open_range(root.left(), root.right()))];
    while let Some((i, range)) = stack.pop() {
        if range.len() < 2 || i.scale <= lattice.k_min {
            continue;
        }
        let [a, b] = i.children();
        let mid = range.start + mu.atoms()[range.clone()].partition_point(|x| x.position < b.left());
        let (l, r) = (range.start..mid, mid..range.end);
        visit(&i, range, l.clone(), r.clone());
        if !r.is_empty() {
            stack.push((b, r));
        }
        if !l.is_empty() {
            stack.push((a, l));
        }
    }
}

fn check_root(mu: &DiscreteMeasure, lattice: &ShiftedLattice, root: &DyadicInterval) -> Result<()> {
    if root.scale < lattice.k_min || root.scale > lattice.k_max {
        return Err(Error::ScaleOutOfRange {
            scale: root.scale,
            min: lattice.k_min,
            max: lattice.k_max,
        });
    }
    if let Some((lo, hi)) = mu.hull() {
        if !(root.contains(lo) && root.contains(hi)) {
            return Err(Error::SupportEscapesRoot);
        }
    }
    Ok(())
}

pub fn decompose(
    f: &WeightedFunction,
    lattice: &ShiftedLattice,
    root: &DyadicInterval,
) -> Result<HaarCoefficients> {
    let mu = f.base();
    check_root(mu, lattice, root)?;
    let atoms = mu.atoms();
    let vals = f.values();
    let mut entries = BTreeMap::new();
    walk_tree(mu, lattice, root, |i, _, l, r| {
        let ml: f64 = atoms[l.clone()].iter().map(|a| a.weight).sum();
        let mr: f64 = atoms[r.clone()].iter().map(|a| a.weight).sum();
        if let Some((minus, plus)) = haar_values(ml, mr) {
            let sl: f64 = atoms[l.clone()].iter().zip(&vals[l]).map(|(a, v)| a.weight * v).sum();
            let sr: f64 = atoms[r.clone()].iter().zip(&vals[r]).map(|(a, v)| a.weight * v).sum();
            entries.insert(*i, minus * sl + plus * sr);
        }
    });
    Ok(HaarCoefficients {
        lattice: *lattice,
        root: *root,
        top: f.integral(),
        entries,
        base: Arc::clone(mu),
    })
}

fn synthesize(coeffs: &HaarCoefficients, min_scale_exclusive: Option<i32>) -> Vec<f64> {
    let mu = &coeffs.base;
    let atoms = mu.atoms();
    let total = mu.total_mass();
    let constant = if total > 0.0 { coeffs.top / total } else { 0.0 };
    let mut values = vec![0.0; atoms.len()];
    let root_range = mu.half_open_range(coeffs.root.left(), coeffs.root.right());
    for v in &mut values[root_range] {
        *v = constant;
    }
    for (i, c) in &coeffs.entries {
        if min_scale_exclusive.is_some_and(|k| i.scale <= k) {
            continue;
        }
        let (l, r) = split_ranges(mu, i);
        let ml = mu.mass_of_range(l.clone());
        let mr = mu.mass_of_range(r.clone());
        if let Some((minus, plus)) = haar_values(ml, mr) {
            for v in &mut values[l] {
                *v += c * minus;
            }
            for v in &mut values[r] {
                *v += c * plus;
            }
        }
    }
    values
}

/// Synthesis of the expansion on the atoms of `mu`, which must be the measure
/// the coefficients were computed over.
pub fn reconstruct(coeffs: &HaarCoefficients, mu: &Arc<DiscreteMeasure>) -> Result<WeightedFunction> {
    if !(Arc::ptr_eq(&coeffs.base, mu) || *coeffs.base == **mu) {
        return Err(Error::BaseMismatch);
    }
    WeightedFunction::new(Arc::clone(mu), synthesize(coeffs, None))
}

/// Synthesis using only the top term and the intervals of scale `> k`; on each
/// atom this is the μ-average of `f` over the scale-`k` interval holding it.
pub fn partial_synthesis(coeffs: &HaarCoefficients, k: i32) -> Vec<f64> {
    synthesize(coeffs, Some(k))
}
