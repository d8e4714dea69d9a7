//! Evolutionary search over disjointly supported pairs for instances where the
//! pivotal constant is large compared with every constant known to be
//! necessary for boundedness. The output is evidence, never a proof.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{full_constants, ConstantsConfig, ConstantsReport};
use crate::dyadic::derive_seed;
use crate::harness::canonical_pair;
use crate::measure::{common_atom, save_measure, Atom, DiscreteMeasure};
use crate::{Error, Result};

/// Label attached to every exported artifact.
pub const EVIDENCE_LABEL: &str = "explorer-evidence";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    /// Seed of the stream that produced the candidate.
    pub seed: u64,
    /// Mutations applied since the initial population, oldest first.
    pub mutations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    pub score: f64,
    pub constants: ConstantsReport,
    pub lineage: Lineage,
}

/// `max(P_fwd, P_bwd) / (1 + ‖H‖² + PQ + C_χ,fwd + C_χ,bwd)`, or 0 when a
/// denominator term is not finite.
pub fn score_of(c: &ConstantsReport) -> f64 {
    let terms = [c.opnorm * c.opnorm, c.pq.value, c.cchi_forward, c.cchi_backward];
    if terms.iter().any(|t| !t.is_finite()) {
        return 0.0;
    }
    let pivotal = c.pivotal_forward.max(c.pivotal_backward);
    if !pivotal.is_finite() {
        return 0.0;
    }
    pivotal / (1.0 + terms.iter().sum::<f64>())
}

/// Scores a pair. Requires disjoint supports.
pub fn score(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &ConstantsConfig) -> Result<Candidate> {
    if let Some(x) = common_atom(mu, nu) {
        return Err(Error::CommonAtom(x));
    }
    let constants = full_constants(mu, nu, cfg)?;
    Ok(Candidate {
        mu: mu.clone(),
        nu: nu.clone(),
        score: score_of(&constants),
        constants,
        lineage: Lineage { seed: 0, mutations: Vec::new() },
    })
}

/// Relative weights of the mutation kinds. Zero disables a kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationRates {
    pub jitter: f64,
    pub rescale: f64,
    pub split: f64,
    pub merge: f64,
    pub cantor: f64,
}

impl Default for MutationRates {
    fn default() -> Self {
        Self { jitter: 0.35, rescale: 0.25, split: 0.15, merge: 0.1, cantor: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub population: usize,
    pub generations: usize,
    /// Survivors copied unchanged into the next generation.
    pub elite: usize,
    pub top_k: usize,
    /// Cap on the atom count of each measure.
    pub max_atoms: usize,
    /// Cap on the pivotal depth.
    pub max_depth: u32,
    /// Mutations applied per offspring are drawn from `1..=max_mutations`.
    pub max_mutations: usize,
    pub rates: MutationRates,
    pub constants: ConstantsConfig,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            population: 16,
            generations: 8,
            elite: 4,
            top_k: 5,
            max_atoms: 48,
            max_depth: 8,
            max_mutations: 3,
            rates: MutationRates::default(),
            constants: ConstantsConfig { depth: 6, ..ConstantsConfig::default() },
            seed: 1,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ParameterOutOfRange(m.to_string()));
        if self.population == 0 {
            return bad("population must be positive");
        }
        if self.elite == 0 || self.elite > self.population {
            return bad("elite must lie in 1..=population");
        }
        if self.max_atoms == 0 {
            return bad("max_atoms must be positive");
        }
        if self.constants.depth > self.max_depth {
            return bad("constants depth exceeds max_depth");
        }
        let r = &self.rates;
        let rates = [r.jitter, r.rescale, r.split, r.merge, r.cantor];
        if rates.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || rates.iter().sum::<f64>() <= 0.0 {
            return bad("mutation rates must be nonnegative with positive sum");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub label: String,
    pub config: SearchConfig,
    /// Best score after each generation, starting with the initial population.
    pub best_history: Vec<f64>,
    /// Top candidates, best first.
    pub candidates: Vec<Candidate>,
}

fn capped(m: &DiscreteMeasure, cap: usize) -> Result<DiscreteMeasure> {
    if m.len() <= cap {
        return Ok(m.clone());
    }
    DiscreteMeasure::new(m.label.clone(), m.atoms()[..cap].to_vec())
}

fn initial(cfg: &SearchConfig, i: usize) -> Result<Candidate> {
    let s = derive_seed(cfg.seed, i as u64);
    let (mu, nu) = canonical_pair(s)?;
    let (mu, nu) = (capped(&mu, cfg.max_atoms)?, capped(&nu, cfg.max_atoms)?);
    let mut c = score(&mu, &nu, &cfg.constants)?;
    c.lineage = Lineage { seed: s, mutations: vec![format!("init({s})")] };
    Ok(c)
}

#[derive(Clone, Copy)]
enum Side {
    Mu,
    Nu,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::Mu => "mu",
            Side::Nu => "nu",
        }
    }
}

/// Distance from `x` to the nearest other position of the combined support.
fn local_gap(all: &[f64], x: f64) -> f64 {
    let g = all
        .iter()
        .filter(|&&y| y != x)
        .map(|y| (y - x).abs())
        .fold(f64::INFINITY, f64::min);
    if g.is_finite() {
        g
    } else {
        1.0
    }
}

fn mutate_once(
    rng: &mut ChaCha8Rng,
    mu: &mut Vec<Atom>,
    nu: &mut Vec<Atom>,
    cfg: &SearchConfig,
) -> Option<String> {
    let r = &cfg.rates;
    let weights = [r.jitter, r.rescale, r.split, r.merge, r.cantor];
    let mut t = rng.gen_range(0.0..weights.iter().sum::<f64>());
    let mut kind = weights.len() - 1;
    for (k, w) in weights.iter().enumerate() {
        if t < *w {
            kind = k;
            break;
        }
        t -= w;
    }
    let side = if rng.gen_bool(0.5) { Side::Mu } else { Side::Nu };
    let all: Vec<f64> = mu.iter().chain(nu.iter()).map(|a| a.position).collect();
    let atoms = match side {
        Side::Mu => mu,
        Side::Nu => nu,
    };
    if atoms.is_empty() {
        return None;
    }
    let i = rng.gen_range(0..atoms.len());
    let a = atoms[i];
    let g = local_gap(&all, a.position);
    let tag = side.name();
    match kind {
        0 => {
            let step = g * rng.gen_range(-6.0f64..0.0).exp2();
            let step = if rng.gen_bool(0.5) { step } else { -step };
            atoms[i].position += step;
            Some(format!("jitter({tag},{i})"))
        }
        1 => {
            atoms[i].weight *= rng.gen_range(-4.0f64..4.0).exp2();
            Some(format!("rescale({tag},{i})"))
        }
        2 => {
            if atoms.len() + 1 > cfg.max_atoms {
                return None;
            }
            let h = g * rng.gen_range(-8.0f64..-2.0).exp2();
            atoms[i] = Atom::new(a.position - h, a.weight / 2.0);
            atoms.push(Atom::new(a.position + h, a.weight / 2.0));
            Some(format!("split({tag},{i})"))
        }
        3 => {
            if atoms.len() < 2 {
                return None;
            }
            atoms.sort_by(|p, q| p.position.total_cmp(&q.position));
            let j = i.min(atoms.len() - 2);
            let (p, q) = (atoms[j], atoms[j + 1]);
            let w = p.weight + q.weight;
            atoms[j] = Atom::new((p.position * p.weight + q.position * q.weight) / w, w);
            atoms.remove(j + 1);
            Some(format!("merge({tag},{j})"))
        }
        _ => {
            let depth = rng.gen_range(2..=3u32);
            let n = 1usize << depth;
            if atoms.len() - 1 + n > cfg.max_atoms {
                return None;
            }
            let len = g * rng.gen_range(-6.0f64..-1.0).exp2();
            let left = a.position - len / 2.0;
            let denom = 3f64.powi(depth as i32);
            atoms.swap_remove(i);
            for bits in 0..n {
                let numer: f64 = (0..depth)
                    .filter(|k| bits >> (depth - 1 - k) & 1 == 1)
                    .map(|k| 2.0 * 3f64.powi((depth - 1 - k) as i32))
                    .sum();
                atoms.push(Atom::new(left + len * numer / denom, a.weight / n as f64));
            }
            Some(format!("cantor({tag},{i},{depth})"))
        }
    }
}

const MUTATION_ATTEMPTS: usize = 8;

/// Offspring of `parent` drawn from the stream `seed`. Falls back to a copy of
/// the parent when every attempt collides with the other measure.
fn offspring(parent: &Candidate, seed: u64, cfg: &SearchConfig) -> Result<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MUTATION_ATTEMPTS {
        let mut mu = parent.mu.atoms().to_vec();
        let mut nu = parent.nu.atoms().to_vec();
        let count = rng.gen_range(1..=cfg.max_mutations.max(1));
        let log: Vec<String> = (0..count).filter_map(|_| mutate_once(&mut rng, &mut mu, &mut nu, cfg)).collect();
        if log.is_empty() {
            continue;
        }
        let (Ok(m), Ok(n)) = (
            DiscreteMeasure::new(parent.mu.label.clone(), mu),
            DiscreteMeasure::new(parent.nu.label.clone(), nu),
        ) else {
            continue;
        };
        if m.len() > cfg.max_atoms || n.len() > cfg.max_atoms || common_atom(&m, &n).is_some() {
            continue;
        }
        let mut c = score(&m, &n, &cfg.constants)?;
        let mut mutations = parent.lineage.mutations.clone();
        mutations.extend(log);
        c.lineage = Lineage { seed, mutations };
        return Ok(c);
    }
    Ok(parent.clone())
}

fn rank(pop: &mut [Candidate]) {
    // stable: ties keep their previous order
    pop.sort_by(|a, b| b.score.total_cmp(&a.score));
}

/// Elitist evolutionary search. Deterministic per seed under any worker count.
pub fn search(cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.validate()?;
    let mut pop: Vec<Candidate> = (0..cfg.population)
        .into_par_iter()
        .map(|i| initial(cfg, i))
        .collect::<Result<_>>()?;
    rank(&mut pop);
    let mut best_history = vec![pop[0].score];
    for gen in 0..cfg.generations {
        let gseed = derive_seed(cfg.seed ^ 0x5eed_0000_0000_0000, gen as u64);
        let parents: Vec<usize> = {
            let mut rng = ChaCha8Rng::seed_from_u64(gseed);
            (cfg.elite..cfg.population)
                .map(|_| {
                    // binary tournament on rank
                    let a = rng.gen_range(0..pop.len());
                    let b = rng.gen_range(0..pop.len());
                    a.min(b)
                })
                .collect()
        };
        let children: Vec<Candidate> = parents
            .par_iter()
            .enumerate()
            .map(|(j, &p)| offspring(&pop[p], derive_seed(gseed, j as u64 + 1), cfg))
            .collect::<Result<_>>()?;
        pop.truncate(cfg.elite);
        pop.extend(children);
        rank(&mut pop);
        best_history.push(pop[0].score);
    }
    pop.truncate(cfg.top_k.min(pop.len()));
    Ok(SearchResult { label: EVIDENCE_LABEL.into(), config: cfg.clone(), best_history, candidates: pop })
}

/// Summary CSV: one row per ranked candidate.
pub fn summary_csv(result: &SearchResult) -> String {
    let mut s = String::from(
        "rank,score,pivotal_forward,pivotal_backward,opnorm,pq,cchi_forward,cchi_backward,mu_atoms,nu_atoms,seed,mutations\n",
    );
    for (r, c) in result.candidates.iter().enumerate() {
        let k = &c.constants;
        let _ = writeln!(
            s,
            "{r},{},{},{},{},{},{},{},{},{},{},{}",
            c.score,
            k.pivotal_forward,
            k.pivotal_backward,
            k.opnorm,
            k.pq.value,
            k.cchi_forward,
            k.cchi_backward,
            c.mu.len(),
            c.nu.len(),
            c.lineage.seed,
            c.lineage.mutations.join(" ")
        );
    }
    s
}

/// Writes `rank<r>_mu.json`, `rank<r>_nu.json` and `summary.csv` into `dir`.
pub fn export(result: &SearchResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (r, c) in result.candidates.iter().enumerate() {
        let tag = format!("{EVIDENCE_LABEL}-rank{r}");
        save_measure(&c.mu.clone().with_label(format!("{tag}-mu")), dir.join(format!("rank{r}_mu.json")))?;
        save_measure(&c.nu.clone().with_label(format!("{tag}-nu")), dir.join(format!("rank{r}_nu.json")))?;
    }
    std::fs::write(dir.join("summary.csv"), summary_csv(result))?;
    Ok(())
}
