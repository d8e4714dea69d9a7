//! Carleson sequences, embedding constants and the paraproducts built on the
//! corona decomposition.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corona::{CoronaInstance, Side};
use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::goodbad::GoodFilter;
use crate::haar::{decompose, reconstruct, HaarCoefficients};
use crate::linalg::{largest_eigenvalue, spectral_norm, Dense, PowerConfig, PowerResult};
use crate::measure::{DiscreteMeasure, WeightedFunction};
use crate::transform::hilbert_on_range;

#[derive(Debug, Clone, PartialEq)]
pub struct CarlesonSequence {
    pub base: Arc<DiscreteMeasure>,
    /// Largest interval considered by [`carleson_constant`].
    pub root: DyadicInterval,
    pub weights: BTreeMap<DyadicInterval, f64>,
}

impl CarlesonSequence {
    pub fn new(base: Arc<DiscreteMeasure>, root: DyadicInterval) -> Self {
        Self { base, root, weights: BTreeMap::new() }
    }

    pub fn add(&mut self, interval: DyadicInterval, weight: f64) -> Result<()> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::Validation(format!("Carleson weight {weight}")));
        }
        *self.weights.entry(interval).or_insert(0.0) += weight;
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    /// `scale,index,left,right,weight` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale,index,left,right,weight\n");
        for (i, w) in &self.weights {
            out.push_str(&format!("{},{},{},{},{}\n", i.scale, i.index, i.left(), i.right(), w));
        }
        out
    }
}

/// `sup_I Σ_{ℓ ⊆ I} a_ℓ / μ(I)` over intervals of positive mass between the
/// weighted intervals and the root; the supremum is attained among the
/// ancestors of weighted intervals.
pub fn carleson_constant(seq: &CarlesonSequence) -> f64 {
    let mut sums: HashMap<DyadicInterval, f64> = HashMap::new();
    for (l, w) in &seq.weights {
        if *w == 0.0 {
            continue;
        }
        let mut i = *l;
        loop {
            *sums.entry(i).or_insert(0.0) += w;
            if i.scale >= seq.root.scale {
                break;
            }
            i = i.parent();
        }
    }
    let mut keys: Vec<&DyadicInterval> = sums.keys().collect();
    keys.sort();
    keys.into_iter()
        .filter_map(|i| {
            let m = seq.base.mass(&i.as_interval());
            (m > 0.0).then(|| sums[i] / m)
        })
        .fold(0.0, f64::max)
}

/// Largest eigenvalue of the form `φ ↦ Σ a_I ⟨φ⟩²_{μ,I}` relative to
/// `‖φ‖²_μ`.
pub fn embedding_constant(seq: &CarlesonSequence, cfg: &PowerConfig) -> PowerResult {
    let mu = &seq.base;
    let sqrt_w: Vec<f64> = mu.atoms().iter().map(|a| a.weight.sqrt()).collect();
    let terms: Vec<(Range<usize>, f64)> = seq
        .weights
        .iter()
        .filter(|(_, w)| **w > 0.0)
        .filter_map(|(i, w)| {
            let r = mu.half_open_range(i.left(), i.right());
            let m = mu.mass_of_range(r.clone());
            (m > 0.0).then(|| (r, w / (m * m)))
        })
        .collect();
    let apply = |v: &[f64]| {
        let mut out = vec![0.0; v.len()];
        for (r, c) in &terms {
            let dot: f64 = r.clone().map(|x| sqrt_w[x] * v[x]).sum();
            for x in r.clone() {
                out[x] += c * dot * sqrt_w[x];
            }
        }
        out
    };
    largest_eigenvalue(mu.len(), &apply, cfg)
}

/// Default power-iteration setting for embedding constants.
pub fn embedding_config() -> PowerConfig {
    PowerConfig { tolerance: 1e-10, ..PowerConfig::default() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParaproductConfig {
    /// Scale gap of the first paraproduct: `|J| = 2^{1-r}|I|`.
    pub r: u32,
    pub filter: GoodFilter,
    pub j_max: u32,
}

impl Default for ParaproductConfig {
    fn default() -> Self {
        Self { r: 2, filter: GoodFilter::All, j_max: 6 }
    }
}

/// Haar coefficients over `D^ν` of `H_μ` applied to the μ-atoms in `ranges`.
fn nu_coefficients(inst: &CoronaInstance, ranges: &[Range<usize>]) -> Result<HaarCoefficients> {
    let (mu, nu) = (inst.mu(), inst.nu());
    let mut values = vec![0.0; nu.len()];
    for r in ranges.iter().filter(|r| !r.is_empty()) {
        for (v, h) in values.iter_mut().zip(hilbert_on_range(mu, r.clone(), None, nu)) {
            *v += h;
        }
    }
    let f = WeightedFunction::new(Arc::clone(nu), values)?;
    decompose(&f, &inst.nu_lattice, &inst.nu_lattice.root())
}

fn mu_range(mu: &DiscreteMeasure, i: &DyadicInterval) -> Range<usize> {
    mu.half_open_range(i.left(), i.right())
}

/// Owning stopping node of every good ν-interval of the families.
fn nu_owners(inst: &CoronaInstance, filter: &GoodFilter) -> HashMap<DyadicInterval, usize> {
    let top = inst.tree.root.scale;
    inst.families
        .members
        .iter()
        .filter(|m| m.side == Side::Nu && filter.accepts(&m.interval, &inst.mu_lattice, top))
        .map(|m| (m.interval, m.node))
        .collect()
}

fn sum_sq<'a>(it: impl Iterator<Item = &'a f64>) -> f64 {
    it.map(|c| c * c).sum()
}

fn dot(a: &BTreeMap<DyadicInterval, f64>, b: &BTreeMap<DyadicInterval, f64>) -> f64 {
    let (small, big) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().map(|(j, c)| c * big.get(j).copied().unwrap_or(0.0)).sum()
}

/// The operator `π_{H_μχ_S}` of one stopping node.
#[derive(Debug, Clone)]
pub struct FirstParaproduct {
    pub node: usize,
    /// `(I, μ-atoms of I, Φ(I))` for each `I ∈ O_S ∩ D^μ`.
    pub terms: Vec<(DyadicInterval, Range<usize>, Vec<DyadicInterval>)>,
    pub coefficients: HaarCoefficients,
    mu: Arc<DiscreteMeasure>,
}

pub fn first_paraproduct(inst: &CoronaInstance, node: usize, cfg: &ParaproductConfig) -> Result<FirstParaproduct> {
    if node >= inst.tree.len() {
        return Err(Error::NotANode);
    }
    let mu = inst.mu();
    let s = inst.tree.nodes[node].interval;
    let coefficients = nu_coefficients(inst, &[mu_range(mu, &s)])?;
    let top = inst.tree.root.scale;
    let gap = cfg.r as i32 - 1;
    let nu_in_o: Vec<DyadicInterval> = inst
        .families
        .o_family(node, Side::Nu)
        .map(|m| m.interval)
        .filter(|j| cfg.filter.accepts(j, &inst.mu_lattice, top))
        .collect();
    let terms = inst
        .families
        .o_family(node, Side::Mu)
        .map(|m| {
            let i = m.interval;
            let phi: Vec<DyadicInterval> = nu_in_o
                .iter()
                .filter(|j| j.scale == i.scale - gap && i.contains_interval(j))
                .filter(|j| match cfg.filter {
                    GoodFilter::All => true,
                    GoodFilter::Strong { .. } => {
                        let threshold = i.length().powf(0.75) * j.length().powf(0.25);
                        let d = (j.left() - i.left()).min(i.right() - j.right());
                        d >= threshold
                    }
                })
                .copied()
                .collect();
            (i, mu_range(mu, &i), phi)
        })
        .collect();
    Ok(FirstParaproduct { node, terms, coefficients, mu: Arc::clone(mu) })
}

impl FirstParaproduct {
    /// `π φ` on the atoms of ν.
    pub fn apply(&self, phi: &WeightedFunction) -> Result<WeightedFunction> {
        if !phi.same_base(&self.mu) {
            return Err(Error::BaseMismatch);
        }
        let mut out = self.coefficients.zero_like();
        for (_, range, js) in &self.terms {
            let avg = phi.average_over(range.clone());
            for j in js {
                *out.entries.entry(*j).or_insert(0.0) += avg * self.coefficients.get(j);
            }
        }
        reconstruct(&out, self.coefficients.base())
    }

    /// `a_I = Σ_{J ∈ Φ(I)} ‖Δ_J^ν H_μ χ_S‖²_ν`.
    pub fn a_sequence(&self, root: DyadicInterval) -> CarlesonSequence {
        let mut seq = CarlesonSequence::new(Arc::clone(&self.mu), root);
        for (i, _, js) in &self.terms {
            let a = sum_sq(js.iter().map(|j| self.coefficients.entries.get(j).unwrap_or(&0.0)));
            seq.weights.insert(*i, a);
        }
        seq
    }

    /// Operator norm `L²(μ) → L²(ν)` from the matrix of the map.
    pub fn operator_norm(&self, cfg: &PowerConfig) -> Result<PowerResult> {
        let mu = &self.mu;
        let nu = self.coefficients.base();
        let mut a = Dense::zeros(nu.len(), mu.len());
        for (x, atom) in mu.atoms().iter().enumerate() {
            let mut e = vec![0.0; mu.len()];
            e[x] = 1.0 / atom.weight.sqrt();
            let col = self.apply(&WeightedFunction::new(Arc::clone(mu), e)?)?;
            for (y, (v, t)) in col.values().iter().zip(nu.atoms()).enumerate() {
                a.data[y * mu.len() + x] = v * t.weight.sqrt();
            }
        }
        Ok(spectral_norm(&a, cfg))
    }
}

/// Per-node projections of the two corona paraproducts.
#[derive(Debug, Clone)]
pub struct Paraproducts {
    pub config: ParaproductConfig,
    /// `P_{ν,O_S}(H_μ χ_S)`, per stopping node.
    pub o_proj: Vec<BTreeMap<DyadicInterval, f64>>,
    /// `P_{ν,Q_S}(H_μ χ_{Ŝ∖S})`, empty for the root.
    pub q_proj: Vec<BTreeMap<DyadicInterval, f64>>,
    /// Coefficient of `H_μ χ_{Ŝ∖S}` on each good interval of `Q_S`, with its
    /// owning node.
    q_full: Vec<Vec<(usize, f64)>>,
    pub b: CarlesonSequence,
    /// `b_S` per stopping node, in tree order.
    pub b_nodes: Vec<f64>,
    /// `a^j` for `j = 0..=j_max`; `a^0` is `a_S`.
    pub a: Vec<CarlesonSequence>,
    template: HaarCoefficients,
    mu: Arc<DiscreteMeasure>,
    parents: Vec<Range<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QSplit {
    pub norm_sq: f64,
    pub dp: f64,
    /// Off-diagonal part with the cross terms of the square counted twice.
    pub odp: f64,
    /// Off-diagonal part summed once over ordered pairs `S' ⊊ S`.
    pub odp_literal: f64,
}

impl Paraproducts {
    pub fn build(inst: &CoronaInstance, cfg: &ParaproductConfig) -> Result<Self> {
        let mu = inst.mu();
        let tree = &inst.tree;
        let owners = nu_owners(inst, &cfg.filter);
        let root = tree.root;
        let per_node: Vec<Result<_>> = (0..tree.len())
            .into_par_iter()
            .map(|s| {
                let node = &tree.nodes[s];
                let own = mu_range(mu, &node.interval);
                let h = nu_coefficients(inst, std::slice::from_ref(&own))?;
                let o: BTreeMap<_, _> =
                    h.entries.iter().filter(|(j, _)| owners.get(j) == Some(&s)).map(|(j, c)| (*j, *c)).collect();
                let (q, full) = match node.parent {
                    None => (BTreeMap::new(), Vec::new()),
                    Some(p) => {
                        let outer = mu_range(mu, &tree.nodes[p].interval);
                        let g = nu_coefficients(inst, &[outer.start..own.start, own.end..outer.end])?;
                        let sub = tree.subtree(s);
                        let mut q = BTreeMap::new();
                        let mut full = Vec::new();
                        for (j, c) in &g.entries {
                            if let Some(&o) = owners.get(j) {
                                if sub.contains(&o) {
                                    q.insert(*j, *c);
                                    full.push((o, *c));
                                }
                            }
                        }
                        (q, full)
                    }
                };
                Ok((o, q, full, h.zero_like()))
            })
            .collect();
        let mut o_proj = Vec::new();
        let mut q_proj = Vec::new();
        let mut q_full = Vec::new();
        let mut template = None;
        for r in per_node {
            let (o, q, full, t) = r?;
            o_proj.push(o);
            q_proj.push(q);
            q_full.push(full);
            template.get_or_insert(t);
        }
        let b_nodes: Vec<f64> = o_proj.iter().map(|o| sum_sq(o.values())).collect();
        let mut b = CarlesonSequence::new(Arc::clone(mu), root);
        for (s, v) in b_nodes.iter().enumerate() {
            b.weights.insert(tree.nodes[s].interval, *v);
        }
        let mut a: Vec<CarlesonSequence> =
            (0..=cfg.j_max).map(|_| CarlesonSequence::new(Arc::clone(mu), root)).collect();
        for s in 1..tree.len() {
            let g0 = tree.nodes[s].generation;
            for j in 0..=cfg.j_max {
                let v: f64 = q_full[s]
                    .iter()
                    .filter(|(o, _)| tree.nodes[*o].generation >= g0 + j)
                    .map(|(_, c)| c * c)
                    .sum();
                a[j as usize].weights.insert(tree.nodes[s].interval, v);
            }
        }
        let parents = tree.nodes.iter().map(|n| mu_range(mu, &n.interval.parent())).collect();
        Ok(Self {
            config: *cfg,
            o_proj,
            q_proj,
            q_full,
            b,
            b_nodes,
            a,
            template: template.ok_or(Error::ZeroMass)?,
            mu: Arc::clone(mu),
            parents,
        })
    }

    fn check(&self, f: &WeightedFunction) -> Result<()> {
        if !f.same_base(&self.mu) {
            return Err(Error::BaseMismatch);
        }
        Ok(())
    }

    fn synthesize(&self, weighted: impl Iterator<Item = (f64, usize)>, proj: &[BTreeMap<DyadicInterval, f64>]) -> Result<WeightedFunction> {
        let mut out = self.template.clone();
        for (avg, s) in weighted {
            for (j, c) in &proj[s] {
                *out.entries.entry(*j).or_insert(0.0) += avg * c;
            }
        }
        reconstruct(&out, self.template.base())
    }

    /// `⟨f⟩_{μ,S}` per stopping node.
    pub fn node_averages(&self, inst: &CoronaInstance, f: &WeightedFunction) -> Vec<f64> {
        inst.tree.nodes.iter().map(|n| f.average_over(mu_range(&self.mu, &n.interval))).collect()
    }

    /// `⟨f⟩_{μ,F(S)}` per stopping node, `F(S)` the dyadic father.
    pub fn father_averages(&self, f: &WeightedFunction) -> Vec<f64> {
        self.parents.iter().map(|r| f.average_over(r.clone())).collect()
    }

    /// `π^O f = Σ_S ⟨f⟩_{μ,S} P_{ν,O_S}(H_μ χ_S)`.
    pub fn pi_o(&self, inst: &CoronaInstance, f: &WeightedFunction) -> Result<WeightedFunction> {
        self.check(f)?;
        let avg = self.node_averages(inst, f);
        self.synthesize(avg.into_iter().enumerate().map(|(s, a)| (a, s)), &self.o_proj)
    }

    /// `π^Q f = Σ_{S ≠ root} ⟨f⟩_{μ,F(S)} P_{ν,Q_S}(H_μ χ_{Ŝ∖S})`.
    pub fn pi_q(&self, f: &WeightedFunction) -> Result<WeightedFunction> {
        self.check(f)?;
        let avg = self.father_averages(f);
        self.synthesize(avg.into_iter().enumerate().skip(1).map(|(s, a)| (a, s)), &self.q_proj)
    }

    /// `Σ_S ⟨f⟩²_{μ,S} b_S`.
    pub fn pi_o_form(&self, inst: &CoronaInstance, f: &WeightedFunction) -> f64 {
        let avg = self.node_averages(inst, f);
        avg.iter().zip(&self.b_nodes).map(|(a, b)| a * a * b).sum()
    }

    /// `‖π^Q f‖²_ν` with its diagonal and off-diagonal parts.
    pub fn pi_q_split(&self, inst: &CoronaInstance, f: &WeightedFunction) -> Result<QSplit> {
        let norm_sq = self.pi_q(f)?.norm_sq();
        let avg = self.father_averages(f);
        let tree = &inst.tree;
        let mut dp = 0.0;
        let mut odp_literal = 0.0;
        for s in 1..tree.len() {
            dp += avg[s] * avg[s] * sum_sq(self.q_proj[s].values());
            for t in tree.subtree(s).skip(1) {
                odp_literal += (avg[s] * avg[t]).abs() * dot(&self.q_proj[s], &self.q_proj[t]).abs();
            }
        }
        Ok(QSplit { norm_sq, dp, odp: 2.0 * odp_literal, odp_literal })
    }

    /// Number of good ν-intervals of `Q_S` that carry a coefficient.
    pub fn q_support(&self, node: usize) -> usize {
        self.q_full[node].len()
    }
}
