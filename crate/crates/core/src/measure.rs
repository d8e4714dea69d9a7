//! Finite positive atomic measures on the line and functions living on their atoms.
//!
//! Every measure keeps its atoms sorted by strictly increasing position; atoms
//! loaded or generated at identical positions are merged by summing weights.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(rename = "x")]
    pub position: f64,
    #[serde(rename = "w")]
    pub weight: f64,
}

impl Atom {
    pub fn new(position: f64, weight: f64) -> Self {
        Self { position, weight }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub label: String,
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    /// Builds a measure from atoms in any order. Atoms sharing a position are
    /// merged. Fails on an empty list, non-finite data or nonpositive weights.
    pub fn new(label: impl Into<String>, atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Validation("a measure needs at least one atom".into()));
        }
        Self::build(label.into(), atoms)
    }

    /// The zero measure. Only a few operations (circle kernels, empty sides of a
    /// split) accept it; most constants reject it.
    pub fn empty(label: impl Into<String>) -> Self {
        Self { label: label.into(), atoms: Vec::new() }
    }

    pub fn from_pairs(label: impl Into<String>, pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(label, pairs.iter().map(|&(x, w)| Atom::new(x, w)).collect())
    }

    fn build(label: String, mut atoms: Vec<Atom>) -> Result<Self> {
        for (i, a) in atoms.iter().enumerate() {
            if !a.position.is_finite() {
                return Err(Error::Validation(format!("atom {i}: position must be finite")));
            }
            if !(a.weight.is_finite() && a.weight > 0.0) {
                return Err(Error::Validation(format!(
                    "atom {i}: weight must be finite and > 0, got {}",
                    a.weight
                )));
            }
        }
        atoms.sort_by(|a, b| a.position.total_cmp(&b.position));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.position == a.position => last.weight += a.weight,
                _ => merged.push(a),
            }
        }
        Ok(Self { label, atoms: merged })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.position).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Indices of the atoms lying in `interval`.
    pub fn index_range(&self, interval: &Interval) -> Range<usize> {
        if interval.is_empty() {
            return 0..0;
        }
        let lo = if interval.left_closed {
            self.atoms.partition_point(|a| a.position < interval.left)
        } else {
            self.atoms.partition_point(|a| a.position <= interval.left)
        };
        let hi = if interval.right_closed {
            self.atoms.partition_point(|a| a.position <= interval.right)
        } else {
            self.atoms.partition_point(|a| a.position < interval.right)
        };
        lo..hi.max(lo)
    }

    /// Indices of atoms in the half-open interval `[left, right)`.
    pub fn half_open_range(&self, left: f64, right: f64) -> Range<usize> {
        let lo = self.atoms.partition_point(|a| a.position < left);
        let hi = self.atoms.partition_point(|a| a.position < right);
        lo..hi.max(lo)
    }

    pub fn mass_of_range(&self, range: Range<usize>) -> f64 {
        self.atoms[range].iter().map(|a| a.weight).sum()
    }

    pub fn mass(&self, interval: &Interval) -> f64 {
        self.mass_of_range(self.index_range(interval))
    }

    /// Smallest closed interval containing every atom.
    pub fn hull(&self) -> Option<(f64, f64)> {
        Some((self.atoms.first()?.position, self.atoms.last()?.position))
    }

    pub fn contains_position(&self, x: f64) -> bool {
        self.atoms
            .binary_search_by(|a| a.position.total_cmp(&x))
            .is_ok()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Multiplies every weight by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            label: self.label.clone(),
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom::new(a.position, a.weight * factor))
                .collect(),
        }
    }

    pub fn restricted(&self, range: Range<usize>) -> Self {
        Self { label: self.label.clone(), atoms: self.atoms[range].to_vec() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MeasureFile {
            label: self.label.clone(),
            atoms: self.atoms.clone(),
        })?)
    }
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    #[serde(default)]
    label: String,
    atoms: Vec<Atom>,
}

/// Parses the measure file format `{"label": ..., "atoms": [{"x":..,"w":..}]}`.
pub fn parse_measure(text: &str) -> Result<DiscreteMeasure> {
    let file: MeasureFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    DiscreteMeasure::new(file.label, file.atoms)
}

pub fn load_measure(path: impl AsRef<Path>) -> Result<DiscreteMeasure> {
    let text = std::fs::read_to_string(path)?;
    parse_measure(&text)
}

pub fn save_measure(measure: &DiscreteMeasure, path: impl AsRef<Path>) -> Result<()> {
    let mut text = measure.to_json()?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// A real interval with explicit endpoint conventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub left: f64,
    pub right: f64,
    pub left_closed: bool,
    pub right_closed: bool,
}

impl Interval {
    pub fn closed(left: f64, right: f64) -> Self {
        Self { left, right, left_closed: true, right_closed: true }
    }

    pub fn open(left: f64, right: f64) -> Self {
        Self { left, right, left_closed: false, right_closed: false }
    }

    pub fn half_open(left: f64, right: f64) -> Self {
        Self { left, right, left_closed: true, right_closed: false }
    }

    pub fn length(&self) -> f64 {
        self.right - self.left
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.left + self.right)
    }

    pub fn is_empty(&self) -> bool {
        self.left > self.right
            || (self.left == self.right && !(self.left_closed && self.right_closed))
    }

    pub fn contains(&self, x: f64) -> bool {
        let lo = if self.left_closed { x >= self.left } else { x > self.left };
        let hi = if self.right_closed { x <= self.right } else { x < self.right };
        lo && hi
    }
}

/// Real-valued function on the atoms of a measure.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFunction {
    base: Arc<DiscreteMeasure>,
    values: Vec<f64>,
}

impl WeightedFunction {
    pub fn new(base: Arc<DiscreteMeasure>, values: Vec<f64>) -> Result<Self> {
        if values.len() != base.len() {
            return Err(Error::Validation(format!(
                "function has {} values for {} atoms",
                values.len(),
                base.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("function values must be finite".into()));
        }
        Ok(Self { base, values })
    }

    pub fn zero(base: Arc<DiscreteMeasure>) -> Self {
        let n = base.len();
        Self { base, values: vec![0.0; n] }
    }

    pub fn constant(base: Arc<DiscreteMeasure>, c: f64) -> Self {
        let n = base.len();
        Self { base, values: vec![c; n] }
    }

    /// Indicator of the atoms inside `interval`.
    pub fn indicator(base: Arc<DiscreteMeasure>, interval: &Interval) -> Self {
        let range = base.index_range(interval);
        let mut values = vec![0.0; base.len()];
        for v in &mut values[range] {
            *v = 1.0;
        }
        Self { base, values }
    }

    pub fn base(&self) -> &Arc<DiscreteMeasure> {
        &self.base
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// True when both functions live on the same measure.
    pub fn same_base(&self, other: &DiscreteMeasure) -> bool {
        std::ptr::eq(Arc::as_ptr(&self.base), other) || *self.base == *other
    }

    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .zip(self.base.atoms())
            .map(|(v, a)| v * a.weight)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values
            .iter()
            .zip(self.base.atoms())
            .map(|(v, a)| v * v * a.weight)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn inner(&self, other: &WeightedFunction) -> Result<f64> {
        if !other.same_base(&self.base) {
            return Err(Error::BaseMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.base.atoms())
            .map(|((a, b), atom)| a * b * atom.weight)
            .sum())
    }

    /// Average of the function over the atoms in `range` (0 when the range is
    /// massless).
    pub fn average_over(&self, range: Range<usize>) -> f64 {
        let atoms = &self.base.atoms()[range.clone()];
        let mass: f64 = atoms.iter().map(|a| a.weight).sum();
        if mass == 0.0 {
            return 0.0;
        }
        let s: f64 = self.values[range]
            .iter()
            .zip(atoms)
            .map(|(v, a)| v * a.weight)
            .sum();
        s / mass
    }
}

/// Test-ensemble generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    UniformRandom { n: i64, lo: f64, hi: f64 },
    Lacunary { n: i64 },
    Cantor { depth: i64 },
    SingleAtom { x: f64, w: f64 },
    AdversarialClustered { clusters: i64, per_cluster: i64, spread: f64 },
}

impl GeneratorSpec {
    /// Builds a spec from a generator id and named numeric parameters. Missing
    /// parameters take defaults.
    pub fn from_id(id: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
        Ok(match id {
            "uniform-random" => Self::UniformRandom {
                n: get("n", 16.0) as i64,
                lo: get("lo", 0.0),
                hi: get("hi", 1.0),
            },
            "lacunary" => Self::Lacunary { n: get("n", 8.0) as i64 },
            "cantor" => Self::Cantor { depth: get("depth", 4.0) as i64 },
            "single-atom" => Self::SingleAtom { x: get("x", 0.0), w: get("w", 1.0) },
            "adversarial-clustered" => Self::AdversarialClustered {
                clusters: get("clusters", 3.0) as i64,
                per_cluster: get("per_cluster", 4.0) as i64,
                spread: get("spread", 1e-3),
            },
            other => return Err(Error::UnknownGenerator(other.to_string())),
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::UniformRandom { .. } => "uniform-random",
            Self::Lacunary { .. } => "lacunary",
            Self::Cantor { .. } => "cantor",
            Self::SingleAtom { .. } => "single-atom",
            Self::AdversarialClustered { .. } => "adversarial-clustered",
        }
    }
}

const MAX_CANTOR_DEPTH: i64 = 24;
const MAX_GENERATED_ATOMS: i64 = 1 << 22;

/// Deterministic measure generation: identical `(spec, seed)` give identical
/// atom lists bit for bit.
pub fn generate_measure(spec: &GeneratorSpec, seed: u64) -> Result<DiscreteMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label = format!("{}#{seed}", spec.id());
    match *spec {
        GeneratorSpec::UniformRandom { n, lo, hi } => {
            if !(1..=MAX_GENERATED_ATOMS).contains(&n) {
                return Err(Error::ParameterOutOfRange(format!("n = {n}")));
            }
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::ParameterOutOfRange(format!("[{lo}, {hi})")));
            }
            let atoms = (0..n)
                .map(|_| {
                    let x = rng.gen_range(lo..hi);
                    let w = rng.gen_range(0.1..1.0);
                    Atom::new(x, w)
                })
                .collect();
            DiscreteMeasure::new(label, atoms)
        }
        GeneratorSpec::Lacunary { n } => {
            if !(1..=1000).contains(&n) {
                return Err(Error::ParameterOutOfRange(format!("n = {n}")));
            }
            let atoms = (1..=n).map(|k| Atom::new((-k as f64).exp2(), 1.0)).collect();
            DiscreteMeasure::new(label, atoms)
        }
        GeneratorSpec::Cantor { depth } => {
            if !(0..=MAX_CANTOR_DEPTH).contains(&depth) {
                return Err(Error::ParameterOutOfRange(format!("depth = {depth}")));
            }
            let d = depth as u32;
            let denom = 3u64.pow(d) as f64;
            let w = (-(depth as f64)).exp2();
            let atoms = (0u64..(1u64 << d))
                .map(|bits| {
                    // digit i (from the top) selects the right third at level i
                    let numer: u64 = (0..d)
                        .filter(|i| bits >> (d - 1 - i) & 1 == 1)
                        .map(|i| 2 * 3u64.pow(d - 1 - i))
                        .sum();
                    Atom::new(numer as f64 / denom, w)
                })
                .collect();
            DiscreteMeasure::new(label, atoms)
        }
        GeneratorSpec::SingleAtom { x, w } => DiscreteMeasure::new(label, vec![Atom::new(x, w)]),
        GeneratorSpec::AdversarialClustered { clusters, per_cluster, spread } => {
            if clusters < 1 || per_cluster < 1 || clusters * per_cluster > MAX_GENERATED_ATOMS {
                return Err(Error::ParameterOutOfRange(format!(
                    "clusters = {clusters}, per_cluster = {per_cluster}"
                )));
            }
            if !(spread.is_finite() && spread > 0.0 && spread < 1.0) {
                return Err(Error::ParameterOutOfRange(format!("spread = {spread}")));
            }
            let mut atoms = Vec::with_capacity((clusters * per_cluster) as usize);
            for _ in 0..clusters {
                let center: f64 = rng.gen_range(0.0..1.0);
                for _ in 0..per_cluster {
                    let offset = spread * rng.gen_range(-1.0..1.0);
                    // weights spread over three decades
                    let w = 10f64.powf(rng.gen_range(-3.0..0.0));
                    atoms.push(Atom::new(center + offset, w));
                }
            }
            DiscreteMeasure::new(label, atoms)
        }
    }
}

/// Sorted distinct positions of `μ ∪ ν`.
pub fn combined_positions(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Vec<f64> {
    let mut out: Vec<f64> = mu
        .atoms()
        .iter()
        .chain(nu.atoms())
        .map(|a| a.position)
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// First position carrying an atom of both measures.
pub fn common_atom(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Option<f64> {
    let (mut i, mut j) = (0, 0);
    let (a, b) = (mu.atoms(), nu.atoms());
    while i < a.len() && j < b.len() {
        match a[i].position.total_cmp(&b[j].position) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return Some(a[i].position),
        }
    }
    None
}

/// Smallest positive gap between consecutive distinct positions.
pub fn min_gap(positions: &[f64]) -> Option<f64> {
    positions
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|g| *g > 0.0)
        .min_by(f64::total_cmp)
}

/// Finite interval families realizing suprema over all real intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalIntervals {
    pub positions: Vec<f64>,
    /// One closed interval per contiguous run of combined atoms, delimited at
    /// gap midpoints.
    pub subset: Vec<Interval>,
    /// Closed `[u_i, u_j]`, `i < j`, over combined positions.
    pub tight: Vec<Interval>,
}

pub fn canonical_intervals(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<CanonicalIntervals> {
    let positions = combined_positions(mu, nu);
    let m = positions.len();
    if m == 0 {
        return Err(Error::EmptySupport);
    }
    let pad = min_gap(&positions).map_or(0.5, |g| 0.5 * g);
    let mut cuts = Vec::with_capacity(m + 1);
    cuts.push(positions[0] - pad);
    cuts.extend(positions.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    cuts.push(positions[m - 1] + pad);

    let mut subset = Vec::with_capacity(m * (m + 1) / 2);
    for a in 0..=m {
        for b in a + 1..=m {
            subset.push(Interval::closed(cuts[a], cuts[b]));
        }
    }
    let mut tight = Vec::with_capacity(m * (m.saturating_sub(1)) / 2);
    for i in 0..m {
        for j in i + 1..m {
            tight.push(Interval::closed(positions[i], positions[j]));
        }
    }
    Ok(CanonicalIntervals { positions, subset, tight })
}

/// Orientation-preserving affine change of variables `x ↦ scale·x + offset`.
/// Weights are multiplied by `scale`, so every dimensionless constant of a
/// pair of measures is left unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub offset: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap { scale: 1.0, offset: 0.0 };

    pub fn new(scale: f64, offset: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0 && offset.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!(
                "affine map needs scale > 0, got {scale}"
            )));
        }
        Ok(Self { scale, offset })
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.offset
    }

    pub fn apply_measure(&self, m: &DiscreteMeasure) -> DiscreteMeasure {
        let atoms = m
            .atoms()
            .iter()
            .map(|a| Atom::new(self.apply(a.position), a.weight * self.scale))
            .collect();
        DiscreteMeasure::build(m.label.clone(), atoms)
            .expect("affine image of a valid measure is valid")
    }

    pub fn inverse(&self) -> AffineMap {
        AffineMap { scale: 1.0 / self.scale, offset: -self.offset / self.scale }
    }
}

/// The affine map placing the combined hull of `μ ∪ ν` onto `[1/4, 3/4]`
/// (a lone position goes to `1/2`).
pub fn normalizing_map(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<AffineMap> {
    let positions = combined_positions(mu, nu);
    let (lo, hi) = match (positions.first(), positions.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::EmptySupport),
    };
    if hi > lo {
        let scale = 0.5 / (hi - lo);
        AffineMap::new(scale, 0.25 - scale * lo)
    } else {
        AffineMap::new(1.0, 0.5 - lo)
    }
}

/// Pair of measures moved into `[1/4, 3/4]` together with the map used.
#[derive(Debug, Clone)]
pub struct NormalizedPair {
    pub mu: Arc<DiscreteMeasure>,
    pub nu: Arc<DiscreteMeasure>,
    pub map: AffineMap,
}

pub fn normalize_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<NormalizedPair> {
    let map = normalizing_map(mu, nu)?;
    let positions = combined_positions(mu, nu);
    let (lo, hi) = (positions[0], positions[positions.len() - 1]);
    // Positions as 1/4 + (x − lo)/(2(hi − lo)) rather than through `map`: the
    // hull endpoints then land on 1/4 and 3/4 exactly. Both are lattice
    // points, so a rounding error there would move atoms across a boundary.
    let place = |m: &DiscreteMeasure| {
        let atoms = m
            .atoms()
            .iter()
            .map(|a| {
                let x = if hi > lo { 0.25 + 0.5 * ((a.position - lo) / (hi - lo)) } else { 0.5 };
                Atom::new(x, a.weight * map.scale)
            })
            .collect();
        DiscreteMeasure::build(m.label.clone(), atoms).expect("affine image of a valid measure is valid")
    };
    Ok(NormalizedPair { mu: Arc::new(place(mu)), nu: Arc::new(place(nu)), map })
}
