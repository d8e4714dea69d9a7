//! The constants governing two-weight boundedness: operator norm, Sawyer test
//! constants for the Hilbert and maximal operators, the A2 constant Q, the
//! Poisson A2 constant PQ and the pivotal constant P.

use std::f64::consts::FRAC_1_PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{scale_window, DyadicInterval, ShiftPair, ShiftedLattice};
use crate::error::{Error, Result};
use crate::linalg::{PowerConfig, PowerResult};
use crate::measure::{combined_positions, common_atom, min_gap, normalize_pair, DiscreteMeasure};
use crate::transform::{hilbert_kernel, hilbert_matrix, poisson_atoms, KernelMatrix};
use crate::tree::{LatticeTree, TreeNode};

pub fn operator_norm(k: &KernelMatrix, cfg: &PowerConfig) -> PowerResult {
    k.operator_norm(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// `(source, target)` for this direction.
    pub fn orient<'a>(
        self,
        mu: &'a DiscreteMeasure,
        nu: &'a DiscreteMeasure,
    ) -> (&'a DiscreteMeasure, &'a DiscreteMeasure) {
        match self {
            Direction::Forward => (mu, nu),
            Direction::Backward => (nu, mu),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SawyerHilbert {
    /// `sup ‖H χ_I‖²_{L²(target)} / source(I)`.
    pub global: f64,
    /// Same with the target norm restricted to `I`.
    pub local: f64,
}

/// Hilbert test constant. Runs of consecutive source atoms realize every
/// interval: the global ratio depends only on which source atoms `I` holds,
/// and the local one is largest when `I` extends up to the neighbouring
/// source atoms.
pub fn sawyer_hilbert_constant(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    direction: Direction,
    delta: f64,
) -> Result<SawyerHilbert> {
    let (src, tgt) = direction.orient(mu, nu);
    if src.is_empty() {
        return Err(Error::NoPositiveInterval);
    }
    if tgt.is_empty() {
        return Err(Error::Validation("target measure is empty".into()));
    }
    let sa = src.atoms();
    let ta = tgt.atoms();
    let n = sa.len();
    let per_start = |a: usize| {
        let mut h = vec![0.0; ta.len()];
        let mut mass = 0.0;
        let mut best = (0.0_f64, 0.0_f64);
        for b in a..n {
            mass += sa[b].weight;
            for (j, t) in ta.iter().enumerate() {
                h[j] += hilbert_kernel(t.position - sa[b].position, delta) * sa[b].weight;
            }
            let lo = if a > 0 { sa[a - 1].position } else { f64::NEG_INFINITY };
            let hi = if b + 1 < n { sa[b + 1].position } else { f64::INFINITY };
            let mut global = 0.0;
            let mut local = 0.0;
            for (j, t) in ta.iter().enumerate() {
                let e = h[j] * h[j] * t.weight;
                global += e;
                if t.position > lo && t.position < hi {
                    local += e;
                }
            }
            best.0 = best.0.max(global / mass);
            best.1 = best.1.max(local / mass);
        }
        best
    };
    let results: Vec<(f64, f64)> = if n * n * ta.len() > 1 << 16 {
        (0..n).into_par_iter().map(per_start).collect()
    } else {
        (0..n).map(per_start).collect()
    };
    let (global, local) = results
        .iter()
        .fold((0.0_f64, 0.0_f64), |acc, r| (acc.0.max(r.0), acc.1.max(r.1)));
    Ok(SawyerHilbert { global, local })
}

/// Maximal-function test constant `sup ‖M χ_I‖²_{L²(target)} / source(I)`;
/// `+∞` when the measures share an atom.
pub fn sawyer_maximal_constant(mu: &DiscreteMeasure, nu: &DiscreteMeasure, direction: Direction) -> f64 {
    let (src, tgt) = direction.orient(mu, nu);
    if common_atom(src, tgt).is_some() {
        return f64::INFINITY;
    }
    let sa = src.atoms();
    let ta = tgt.atoms();
    let n = sa.len();
    let per_start = |a: usize| {
        let mut m = vec![0.0_f64; ta.len()];
        let mut mass = 0.0;
        let mut best = 0.0_f64;
        for b in a..n {
            mass += sa[b].weight;
            // new candidate intervals have x_b as the last source atom inside
            for (j, t) in ta.iter().enumerate() {
                let right = sa[b].position.max(t.position);
                let mut acc = 0.0;
                for p in (a..=b).rev() {
                    acc += sa[p].weight;
                    let len = right - sa[p].position.min(t.position);
                    m[j] = m[j].max(acc / len);
                }
            }
            let norm: f64 = m.iter().zip(ta).map(|(v, t)| v * v * t.weight).sum();
            best = best.max(norm / mass);
        }
        best
    };
    let results: Vec<f64> = if n * n * n * ta.len() > 1 << 16 {
        (0..n).into_par_iter().map(per_start).collect()
    } else {
        (0..n).map(per_start).collect()
    };
    results.into_iter().fold(0.0, f64::max)
}

/// Combined positions with the μ and ν mass sitting at each.
fn combined_masses(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let pos = combined_positions(mu, nu);
    let mut wm = vec![0.0; pos.len()];
    let mut wn = vec![0.0; pos.len()];
    for a in mu.atoms() {
        let i = pos.partition_point(|p| *p < a.position);
        wm[i] += a.weight;
    }
    for a in nu.atoms() {
        let i = pos.partition_point(|p| *p < a.position);
        wn[i] += a.weight;
    }
    (pos, wm, wn)
}

/// `sup_I (μ(I)/|I|)(ν(I)/|I|)` over closed intervals between combined atoms;
/// `+∞` when the measures share an atom.
pub fn a2_constant(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    if common_atom(mu, nu).is_some() {
        return f64::INFINITY;
    }
    let (pos, wm, wn) = combined_masses(mu, nu);
    let m = pos.len();
    let mut best = 0.0_f64;
    for i in 0..m {
        let (mut sm, mut sn) = (wm[i], wn[i]);
        for j in i + 1..m {
            sm += wm[j];
            sn += wn[j];
            let len = pos[j] - pos[i];
            best = best.max(sm * sn / (len * len));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PqGrid {
    pub iterations: u32,
}

impl Default for PqGrid {
    fn default() -> Self {
        Self { iterations: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonA2 {
    #[serde(with = "crate::extended")]
    pub value: f64,
    pub x: f64,
    pub y: f64,
    pub candidates: usize,
}

fn pq_at(mu: &DiscreteMeasure, nu: &DiscreteMeasure, x: f64, y: f64) -> f64 {
    poisson_atoms(mu.atoms(), x, y) * poisson_atoms(nu.atoms(), x, y)
}

/// Lower bound for `sup_z P_μ(z) P_ν(z)` over a candidate set holding the
/// point `(centre(I), |I|)` of every closed interval between combined atoms,
/// a dyadic ladder of heights over atoms and gap midpoints, and a few rounds
/// of local refinement around the best point.
pub fn poisson_a2(mu: &DiscreteMeasure, nu: &DiscreteMeasure, grid: &PqGrid) -> Result<PoissonA2> {
    let pos = combined_positions(mu, nu);
    if pos.is_empty() {
        return Err(Error::EmptySupport);
    }
    if let Some(p) = common_atom(mu, nu) {
        return Ok(PoissonA2 { value: f64::INFINITY, x: p, y: 0.0, candidates: 0 });
    }
    let mut points: Vec<(f64, f64)> = Vec::new();
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            points.push((0.5 * (pos[i] + pos[j]), pos[j] - pos[i]));
        }
    }
    let gap = min_gap(&pos);
    let diam = pos[pos.len() - 1] - pos[0];
    let (k_lo, k_hi) = match gap {
        Some(g) => (g.log2().floor() as i32 - 2, diam.log2().ceil() as i32 + 3),
        None => (-4, 2),
    };
    let mut xs = pos.clone();
    xs.extend(pos.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    for x in &xs {
        for k in k_lo..=k_hi {
            points.push((*x, (k as f64).exp2()));
        }
    }
    let candidates = points.len();
    let values: Vec<f64> = if candidates * (mu.len() + nu.len()) > 1 << 16 {
        points.par_iter().map(|(x, y)| pq_at(mu, nu, *x, *y)).collect()
    } else {
        points.iter().map(|(x, y)| pq_at(mu, nu, *x, *y)).collect()
    };
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let (mut bx, mut by) = points[best];
    let mut bv = values[best];
    let mut step = 0.5;
    for _ in 0..grid.iterations {
        let trial = [
            (bx - step * by, by),
            (bx + step * by, by),
            (bx, by * (step * std::f64::consts::LN_2).exp()),
            (bx, by * (-step * std::f64::consts::LN_2).exp()),
        ];
        let mut moved = false;
        for (x, y) in trial {
            let v = pq_at(mu, nu, x, y);
            if v > bv {
                (bx, by, bv) = (x, y, v);
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok(PoissonA2 { value: bv, x: bx, y: by, candidates })
}

/// `P_J(χ_{I∖J} dμ)` for a node `J` of the tree below `I`, where `outer` is
/// the μ-range of `I`.
pub fn stopping_poisson(mu: &DiscreteMeasure, outer: std::ops::Range<usize>, node: &TreeNode) -> f64 {
    poisson_difference(mu, outer, node.mu.clone(), node.interval.center(), node.interval.length())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pivotal {
    /// Form with `χ_{I∖I_α}`.
    pub p: f64,
    /// Form with `χ_I`.
    pub p1: f64,
    pub argmax: Option<DyadicInterval>,
}

/// Poisson integral over `I_α` of the source atoms in `outer` minus those in
/// `inner` (an empty `inner` gives the whole of `outer`).
pub(crate) fn poisson_difference(
    src: &DiscreteMeasure,
    outer: std::ops::Range<usize>,
    inner: std::ops::Range<usize>,
    center: f64,
    len: f64,
) -> f64 {
    let a = src.atoms();
    if inner.is_empty() {
        return poisson_atoms(&a[outer], center, len);
    }
    poisson_atoms(&a[outer.start..inner.start], center, len) + poisson_atoms(&a[inner.end..outer.end], center, len)
}

/// `sup_I max_{antichains {I_α} in I} Σ [P_{I_α}(χ_{I∖I_α} dμ)]² ν(I_α) / μ(I)`
/// over intervals within `depth` generations of `root`, the inner maximum by
/// dynamic programming over the subtree. Both the `χ_{I∖I_α}` and the `χ_I`
/// forms are computed.
pub fn pivotal_constant(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    root: &DyadicInterval,
    depth: u32,
) -> Result<Pivotal> {
    if mu.mass(&root.as_interval()) <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let all = LatticeTree::build(mu, nu, root, depth, false);
    let nodes = &all.nodes;
    let per_outer = |i: usize| -> (f64, f64) {
        let outer = &nodes[i];
        let mass = mu.mass_of_range(outer.mu.clone());
        if mass <= 0.0 || outer.nu.is_empty() {
            return (0.0, 0.0);
        }
        let range = all.subtree(i);
        let mut v = vec![0.0_f64; range.len()];
        let mut v1 = vec![0.0_f64; range.len()];
        for j in range.clone().rev() {
            let node = &nodes[j];
            let nu_mass = nu.mass_of_range(node.nu.clone());
            if nu_mass <= 0.0 {
                continue;
            }
            let p = stopping_poisson(mu, outer.mu.clone(), node);
            let (c, len) = (node.interval.center(), node.interval.length());
            let p1 = poisson_atoms(&mu.atoms()[outer.mu.clone()], c, len);
            let (mut sum, mut sum1) = (0.0, 0.0);
            for &ch in &node.children {
                sum += v[ch - i];
                sum1 += v1[ch - i];
            }
            v[j - i] = (p * p * nu_mass).max(sum);
            v1[j - i] = (p1 * p1 * nu_mass).max(sum1);
        }
        (v[0] / mass, v1[0] / mass)
    };
    let results: Vec<(f64, f64)> = if nodes.len() > 64 {
        (0..nodes.len()).into_par_iter().map(per_outer).collect()
    } else {
        (0..nodes.len()).map(per_outer).collect()
    };
    let mut out = Pivotal { p: 0.0, p1: 0.0, argmax: None };
    for (i, (p, p1)) in results.into_iter().enumerate() {
        if p > out.p {
            out.p = p;
            out.argmax = Some(nodes[i].interval);
        }
        out.p1 = out.p1.max(p1);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsConfig {
    pub depth: u32,
    pub delta: f64,
    pub pq_grid: PqGrid,
    pub shifts: ShiftPair,
    #[serde(skip, default)]
    pub power: PowerConfigSerde,
}

/// Wrapper so the config derives `Default` and serde cleanly.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerConfigSerde(pub PowerConfig);

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            depth: 8,
            delta: 0.0,
            pq_grid: PqGrid::default(),
            shifts: ShiftPair::rigid(0.0, 0.0),
            power: PowerConfigSerde::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub opnorm: f64,
    pub opnorm_converged: bool,
    pub opnorm_iterations: usize,
    pub cchi_forward: f64,
    pub cchi_backward: f64,
    pub cchi_forward_local: f64,
    pub cchi_backward_local: f64,
    #[serde(with = "crate::extended")]
    pub cm_forward: f64,
    #[serde(with = "crate::extended")]
    pub cm_backward: f64,
    #[serde(with = "crate::extended")]
    pub q: f64,
    pub pq: PoissonA2,
    pub pivotal_forward: f64,
    pub pivotal_backward: f64,
    pub pivotal1_forward: f64,
    pub pivotal1_backward: f64,
    pub depth: u32,
    pub shifts: ShiftPair,
    pub coincident_atoms: bool,
}

/// Lattices of a shift pair over the window of a normalized instance.
pub fn instance_lattices(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    shifts: &ShiftPair,
    depth: u32,
) -> Result<(ShiftedLattice, ShiftedLattice)> {
    let pos = combined_positions(mu, nu);
    let (k_min, k_max) = scale_window(&pos);
    let k_min = k_min.min(-(depth as i32));
    shifts.lattices(k_min, k_max.max(0))
}

/// Every constant of the instance. Lattice-dependent quantities are computed on
/// the copy of the pair normalized into `[1/4, 3/4]`.
pub fn full_constants(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &ConstantsConfig,
) -> Result<ConstantsReport> {
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::EmptySupport);
    }
    let norm = normalize_pair(mu, nu)?;
    let (m, n) = (&norm.mu, &norm.nu);
    let k = hilbert_matrix(m, n, cfg.delta);
    let op = operator_norm(&k, &cfg.power.0);
    let fw = sawyer_hilbert_constant(m, n, Direction::Forward, cfg.delta)?;
    let bw = sawyer_hilbert_constant(m, n, Direction::Backward, cfg.delta)?;
    let (lm, ln) = instance_lattices(m, n, &cfg.shifts, cfg.depth)?;
    let piv_f = pivotal_constant(m, n, &lm.root(), cfg.depth)?;
    let piv_b = pivotal_constant(n, m, &ln.root(), cfg.depth)?;
    Ok(ConstantsReport {
        opnorm: op.eigenvalue,
        opnorm_converged: op.converged,
        opnorm_iterations: op.iterations,
        cchi_forward: fw.global,
        cchi_backward: bw.global,
        cchi_forward_local: fw.local,
        cchi_backward_local: bw.local,
        cm_forward: sawyer_maximal_constant(m, n, Direction::Forward),
        cm_backward: sawyer_maximal_constant(m, n, Direction::Backward),
        q: a2_constant(m, n),
        pq: poisson_a2(m, n, &cfg.pq_grid)?,
        pivotal_forward: piv_f.p,
        pivotal_backward: piv_b.p,
        pivotal1_forward: piv_f.p1,
        pivotal1_backward: piv_b.p1,
        depth: cfg.depth,
        shifts: cfg.shifts,
        coincident_atoms: k.coincident,
    })
}

/// At `z_I = (centre(I), |I|)` the Poisson kernel is at least `(4/(5π))/|I|`
/// on `I`, so `Q ≤ (5π/4)² PQ`.
pub const Q_OVER_PQ: f64 = (5.0 * std::f64::consts::PI / 4.0) * (5.0 * std::f64::consts::PI / 4.0);

/// Poisson kernel lower bound on an interval, used in tests and checks.
pub fn poisson_floor(len: f64) -> f64 {
    0.8 * FRAC_1_PI / len
}
