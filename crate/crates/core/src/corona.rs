//! Stopping intervals, the stopping tree and its corona families.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::{instance_lattices, pivotal_constant, stopping_poisson};
use crate::dyadic::{DyadicInterval, ShiftPair, ShiftedLattice};
use crate::error::{Error, Result};
use crate::measure::{normalize_pair, DiscreteMeasure, NormalizedPair};
use crate::tree::LatticeTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingNode {
    pub interval: DyadicInterval,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub generation: u32,
    /// One past the last preorder index of the subtree.
    pub end: usize,
    pub mu_mass: f64,
    pub nu_mass: f64,
    /// `[P_S(χ_{Ŝ∖S} dμ)]² ν(S)`; zero for the root.
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingTree {
    pub root: DyadicInterval,
    pub threshold: f64,
    pub depth_cap: u32,
    /// Preorder; index 0 is the root.
    pub nodes: Vec<StoppingNode>,
}

/// Stopping tree below `root`: the children of a node `Ŝ` are the maximal
/// intervals `S ⊊ Ŝ` within `depth_cap` generations of `root` with
/// `[P_S(χ_{Ŝ∖S} dμ)]² ν(S) ≥ K μ(S)` (for `μ(S) = 0`, with a positive left
/// side), and the construction repeats inside every child.
pub fn build_stopping_tree(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    root: &DyadicInterval,
    k: f64,
    depth_cap: u32,
) -> Result<StoppingTree> {
    if !(k > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("stopping threshold {k}")));
    }
    let lattice = LatticeTree::build(mu, nu, root, depth_cap, false);
    if lattice.is_empty() || mu.mass_of_range(lattice.nodes[0].mu.clone()) <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let mut nodes = Vec::new();
    grow(mu, nu, &lattice, 0, None, 0, 0.0, k, &mut nodes);
    Ok(StoppingTree { root: *root, threshold: k, depth_cap, nodes })
}

#[allow(clippy::too_many_arguments)]
fn grow(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    lattice: &LatticeTree,
    at: usize,
    parent: Option<usize>,
    generation: u32,
    criterion: f64,
    k: f64,
    nodes: &mut Vec<StoppingNode>,
) {
    let t = &lattice.nodes[at];
    let idx = nodes.len();
    nodes.push(StoppingNode {
        interval: t.interval,
        parent,
        children: Vec::new(),
        generation,
        end: idx + 1,
        mu_mass: mu.mass_of_range(t.mu.clone()),
        nu_mass: nu.mass_of_range(t.nu.clone()),
        criterion,
    });
    for (child, value) in select_children(mu, nu, lattice, at, k) {
        let next = nodes.len();
        nodes[idx].children.push(next);
        grow(mu, nu, lattice, child, Some(idx), generation + 1, value, k, nodes);
    }
    nodes[idx].end = nodes.len();
}

/// Maximal descendants of lattice node `at` meeting the criterion, left to
/// right, with their criterion values.
fn select_children(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    lattice: &LatticeTree,
    at: usize,
    k: f64,
) -> Vec<(usize, f64)> {
    let outer = lattice.nodes[at].mu.clone();
    let mut found = Vec::new();
    let mut stack: Vec<usize> = lattice.nodes[at].children.iter().rev().copied().collect();
    while let Some(j) = stack.pop() {
        let node = &lattice.nodes[j];
        if node.nu.is_empty() {
            continue;
        }
        let value = stopping_value(mu, nu, outer.clone(), node);
        let mass = mu.mass_of_range(node.mu.clone());
        // an infinite K selects nothing, including intervals with μ(S) = 0
        let selected = if mass > 0.0 { value >= k * mass } else { value > 0.0 && k.is_finite() };
        if selected {
            found.push((j, value));
        } else {
            stack.extend(node.children.iter().rev());
        }
    }
    found
}

fn stopping_value(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    outer: std::ops::Range<usize>,
    node: &crate::tree::TreeNode,
) -> f64 {
    let p = stopping_poisson(mu, outer, node);
    p * p * nu.mass_of_range(node.nu.clone())
}

impl StoppingTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn subtree(&self, idx: usize) -> std::ops::Range<usize> {
        idx..self.nodes[idx].end
    }

    pub fn find(&self, interval: &DyadicInterval) -> Option<usize> {
        self.nodes.iter().position(|n| n.interval == *interval)
    }

    /// Total μ-mass of each generation, starting with the root.
    pub fn generation_masses(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for n in &self.nodes {
            let g = n.generation as usize;
            if out.len() <= g {
                out.resize(g + 1, 0.0);
            }
            out[g] += n.mu_mass;
        }
        out
    }
}

/// `max_Ŝ Σ_{children S} μ(S) / μ(Ŝ)` over nodes of positive mass.
pub fn packing_ratio(tree: &StoppingTree) -> f64 {
    tree.nodes
        .iter()
        .filter(|n| n.mu_mass > 0.0)
        .map(|n| n.children.iter().map(|&c| tree.nodes[c].mu_mass).sum::<f64>() / n.mu_mass)
        .fold(0.0, f64::max)
}

/// Generation gap between stopping nodes `small ⊆ big`.
pub fn stopping_distance(tree: &StoppingTree, small: usize, big: usize) -> Result<u32> {
    if small >= tree.len() || big >= tree.len() {
        return Err(Error::NotANode);
    }
    let mut at = small;
    let mut gap = 0;
    while at != big {
        at = tree.nodes[at].parent.ok_or(Error::Incomparable)?;
        gap += 1;
    }
    Ok(gap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Mu,
    Nu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub interval: DyadicInterval,
    pub side: Side,
    /// Stopping node whose corona holds the interval.
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoronaFamilies {
    pub members: Vec<FamilyMember>,
    /// Member indices of `O_S`, per stopping node.
    pub by_node: Vec<Vec<usize>>,
}

/// Smallest stopping node containing `interval`.
fn owner(tree: &StoppingTree, interval: &DyadicInterval) -> usize {
    let mut at = 0;
    'descend: loop {
        for &c in &tree.nodes[at].children {
            if tree.nodes[c].interval.contains_interval(interval) {
                at = c;
                continue 'descend;
            }
        }
        return at;
    }
}

/// Assigns every interval of either lattice that lies inside the root, is at
/// most `depth_cap` generations below it and holds an atom of `μ` or `ν` to
/// the smallest stopping node containing it.
pub fn corona_families(
    tree: &StoppingTree,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    nu_lattice: &ShiftedLattice,
) -> CoronaFamilies {
    let root = tree.root;
    let lowest = root.scale - tree.depth_cap as i32;
    let mu_side = LatticeTree::build(mu, nu, &root, tree.depth_cap, false);
    let nu_root = nu_lattice.root();
    let nu_depth = (nu_root.scale - lowest).max(0) as u32;
    let nu_side = LatticeTree::build(mu, nu, &nu_root, nu_depth, false);
    let mut members = Vec::new();
    let mut by_node = vec![Vec::new(); tree.len()];
    let candidates = mu_side
        .nodes
        .iter()
        .map(|n| (n.interval, Side::Mu))
        .chain(
            nu_side
                .nodes
                .iter()
                .filter(|n| root.contains_interval(&n.interval))
                .map(|n| (n.interval, Side::Nu)),
        );
    for (interval, side) in candidates {
        let node = owner(tree, &interval);
        by_node[node].push(members.len());
        members.push(FamilyMember { interval, side, node });
    }
    CoronaFamilies { members, by_node }
}

impl CoronaFamilies {
    /// Members of `O_S` on one side.
    pub fn o_family(&self, node: usize, side: Side) -> impl Iterator<Item = &FamilyMember> + '_ {
        self.by_node[node].iter().map(|&m| &self.members[m]).filter(move |m| m.side == side)
    }

    /// Members of `Q_S`, the union of `O_{S'}` over the stopping subtree of `S`.
    pub fn q_family<'a>(
        &'a self,
        tree: &StoppingTree,
        node: usize,
        side: Side,
    ) -> impl Iterator<Item = &'a FamilyMember> + 'a {
        tree.subtree(node).flat_map(move |s| self.o_family(s, side))
    }
}

/// How the stopping threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum KPolicy {
    Fixed { k: f64 },
    /// `K = factor · P` with `P` the pivotal constant at the tree depth; `K = 1`
    /// when `P = 0`.
    PivotalMultiple { factor: f64 },
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::PivotalMultiple { factor: 4.0 }
    }
}

/// A normalized instance with its lattices, pivotal constant, stopping tree
/// and corona families.
#[derive(Debug, Clone)]
pub struct CoronaInstance {
    pub pair: NormalizedPair,
    pub mu_lattice: ShiftedLattice,
    pub nu_lattice: ShiftedLattice,
    pub pivotal: f64,
    pub tree: StoppingTree,
    pub families: CoronaFamilies,
}

impl CoronaInstance {
    pub fn build(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        shifts: &ShiftPair,
        depth: u32,
        policy: KPolicy,
    ) -> Result<Self> {
        let pair = normalize_pair(mu, nu)?;
        let (mu_lattice, nu_lattice) = instance_lattices(&pair.mu, &pair.nu, shifts, depth)?;
        let root = mu_lattice.root();
        let pivotal = pivotal_constant(&pair.mu, &pair.nu, &root, depth)?.p;
        let k = match policy {
            KPolicy::Fixed { k } => k,
            KPolicy::PivotalMultiple { factor } if pivotal > 0.0 => factor * pivotal,
            KPolicy::PivotalMultiple { .. } => 1.0,
        };
        let tree = build_stopping_tree(&pair.mu, &pair.nu, &root, k, depth)?;
        let families = corona_families(&tree, &pair.mu, &pair.nu, &nu_lattice);
        Ok(Self { pair, mu_lattice, nu_lattice, pivotal, tree, families })
    }

    pub fn mu(&self) -> &Arc<DiscreteMeasure> {
        &self.pair.mu
    }

    pub fn nu(&self) -> &Arc<DiscreteMeasure> {
        &self.pair.nu
    }
}

/// Summary written to reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoronaSummary {
    pub threshold: f64,
    pub pivotal: f64,
    pub depth: u32,
    pub packing_ratio: f64,
    pub generation_masses: Vec<f64>,
    pub family_sizes: Vec<usize>,
    pub tree: StoppingTree,
}

impl CoronaInstance {
    pub fn summary(&self) -> CoronaSummary {
        CoronaSummary {
            threshold: self.tree.threshold,
            pivotal: self.pivotal,
            depth: self.tree.depth_cap,
            packing_ratio: packing_ratio(&self.tree),
            generation_masses: self.tree.generation_masses(),
            family_sizes: self.families.by_node.iter().map(Vec::len).collect(),
            tree: self.tree.clone(),
        }
    }
}
