mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use corona_lab::corona::{CoronaInstance, KPolicy, Side};
use corona_lab::dyadic::{sample_shift_pair, DyadicInterval};
use corona_lab::goodbad::GoodFilter;
use corona_lab::haar::haar_function;
use corona_lab::linalg::PowerConfig;
use corona_lab::measure::{DiscreteMeasure, WeightedFunction};
use corona_lab::paraproduct::{
    carleson_constant, embedding_config, embedding_constant, first_paraproduct, CarlesonSequence, ParaproductConfig,
    Paraproducts,
};
use corona_lab::Error;
use proptest::prelude::*;
use rand::Rng;

fn instance(seed: u64, n: usize, m: usize, depth: u32) -> CoronaInstance {
    let mut g = common::rng(seed);
    let (mu, nu) = common::random_pair(&mut g, n, m, 0.0, 1.0);
    CoronaInstance::build(&mu, &nu, &sample_shift_pair(seed), depth, KPolicy::PivotalMultiple { factor: 0.5 }).unwrap()
}

fn random_f(seed: u64, mu: &Arc<DiscreteMeasure>) -> WeightedFunction {
    let mut g = common::rng(seed);
    WeightedFunction::new(Arc::clone(mu), (0..mu.len()).map(|_| g.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// `H_μ(χ_E μ)` at the ν-atoms, E given by a predicate on μ-positions.
fn hilbert_of(mu: &DiscreteMeasure, nu: &DiscreteMeasure, keep: impl Fn(f64) -> bool) -> Vec<f64> {
    nu.atoms()
        .iter()
        .map(|t| mu.atoms().iter().filter(|a| keep(a.position)).map(|a| a.weight / (PI * (t.position - a.position))).sum())
        .collect()
}

fn haar_coefficient(nu: &DiscreteMeasure, values: &[f64], j: &DyadicInterval) -> f64 {
    let h = haar_function(nu, j).unwrap();
    nu.atoms().iter().zip(values).map(|(t, v)| t.weight * v * h.eval(t.position)).sum()
}

/// Brute Carleson constant: every dyadic ancestor of a weighted interval up to the root.
fn brute_carleson(seq: &CarlesonSequence) -> f64 {
    let mut best = 0.0_f64;
    for l in seq.weights.keys() {
        let mut i = *l;
        loop {
            let m = seq.base.mass(&i.as_interval());
            if m > 0.0 {
                let s: f64 = seq.weights.iter().filter(|(k, _)| i.contains_interval(k)).map(|(_, w)| w).sum();
                best = best.max(s / m);
            }
            if i.scale >= seq.root.scale {
                break;
            }
            i = i.parent();
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn o_projections_are_haar_coefficients(seed in any::<u64>(), n in 1usize..12, m in 1usize..12, depth in 2u32..7) {
        let inst = instance(seed, n, m, depth);
        let p = Paraproducts::build(&inst, &ParaproductConfig::default()).unwrap();
        let (mu, nu) = (inst.mu(), inst.nu());
        for (s, node) in inst.tree.nodes.iter().enumerate() {
            let g = hilbert_of(mu, nu, |x| node.interval.contains(x));
            let owned: Vec<DyadicInterval> = inst.families.o_family(s, Side::Nu).map(|f| f.interval).collect();
            let scale = g.iter().fold(0.0_f64, |a, v| a.max(v.abs())) * nu.total_mass().sqrt();
            for (j, c) in &p.o_proj[s] {
                prop_assert!(owned.contains(j));
                prop_assert!((c - haar_coefficient(nu, &g, j)).abs() <= 1e-10 * (1.0 + scale));
            }
            let b: f64 = p.o_proj[s].values().map(|c| c * c).sum();
            prop_assert!(common::rel(b, p.b_nodes[s]) <= 1e-12);
            if let Some(parent) = node.parent {
                let outer = inst.tree.nodes[parent].interval;
                let g = hilbert_of(mu, nu, |x| outer.contains(x) && !node.interval.contains(x));
                let scale = g.iter().fold(0.0_f64, |a, v| a.max(v.abs())) * nu.total_mass().sqrt();
                for (j, c) in &p.q_proj[s] {
                    prop_assert!((c - haar_coefficient(nu, &g, j)).abs() <= 1e-10 * (1.0 + scale));
                }
            } else {
                prop_assert!(p.q_proj[s].is_empty());
            }
        }
    }

    #[test]
    fn pi_o_is_bounded_by_the_carleson_embedding(seed in any::<u64>(), n in 1usize..14, m in 1usize..14, depth in 2u32..7) {
        let inst = instance(seed, n, m, depth);
        let p = Paraproducts::build(&inst, &ParaproductConfig::default()).unwrap();
        let f = random_f(seed ^ 7, inst.mu());
        let out = p.pi_o(&inst, &f).unwrap();
        // the O_S are disjoint, so the pieces are orthogonal
        let form = p.pi_o_form(&inst, &f);
        prop_assert!((out.norm_sq() - form).abs() <= 1e-10 * form.max(1e-12));
        let c = carleson_constant(&p.b);
        prop_assert!(common::rel(c, brute_carleson(&p.b)) <= 1e-12);
        let e = embedding_constant(&p.b, &embedding_config());
        prop_assert!(form <= e.eigenvalue * f.norm_sq() * (1.0 + 1e-8));
        prop_assert!(e.eigenvalue <= 4.0 * c * (1.0 + 1e-9));
        prop_assert!(e.eigenvalue >= c * (1.0 - 1e-9));
        for s in 0..inst.tree.len() {
            prop_assert!(p.b_nodes[s] <= p.b.weights[&inst.tree.nodes[s].interval] * (1.0 + 1e-15));
        }
    }

    #[test]
    fn pi_q_splits_into_diagonal_and_off_diagonal(seed in any::<u64>(), n in 1usize..14, m in 1usize..14, depth in 2u32..7) {
        let inst = instance(seed, n, m, depth);
        let p = Paraproducts::build(&inst, &ParaproductConfig::default()).unwrap();
        let f = random_f(seed ^ 3, inst.mu());
        let q = p.pi_q_split(&inst, &f).unwrap();
        prop_assert!(q.norm_sq <= (q.dp + q.odp) * (1.0 + 1e-10) + 1e-300);
        prop_assert!(q.odp == 2.0 * q.odp_literal);
        // the a^j sequences decrease in j and a^0 dominates the node energy
        for j in 1..p.a.len() {
            for (i, w) in &p.a[j].weights {
                prop_assert!(*w <= p.a[j - 1].weights[i] * (1.0 + 1e-15));
            }
        }
        for s in 1..inst.tree.len() {
            let e: f64 = p.q_proj[s].values().map(|c| c * c).sum();
            prop_assert!(common::rel(e, p.a[0].weights[&inst.tree.nodes[s].interval]) <= 1e-12);
        }
    }

    #[test]
    fn doubling_nu_doubles_the_sequences(seed in any::<u64>(), n in 1usize..10, m in 1usize..10) {
        let mut g = common::rng(seed);
        let (mu, nu) = common::random_pair(&mut g, n, m, 0.0, 1.0);
        let shifts = sample_shift_pair(seed);
        let a = CoronaInstance::build(&mu, &nu, &shifts, 5, KPolicy::default()).unwrap();
        let b = CoronaInstance::build(&mu, &nu.scaled(2.0), &shifts, 5, KPolicy::default()).unwrap();
        prop_assert_eq!(&a.tree.nodes.iter().map(|n| n.interval).collect::<Vec<_>>(), &b.tree.nodes.iter().map(|n| n.interval).collect::<Vec<_>>());
        let pa = Paraproducts::build(&a, &ParaproductConfig::default()).unwrap();
        let pb = Paraproducts::build(&b, &ParaproductConfig::default()).unwrap();
        for (x, y) in pa.b_nodes.iter().zip(&pb.b_nodes) {
            prop_assert!((2.0 * x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
        for (sa, sb) in pa.a.iter().zip(&pb.a) {
            for (i, w) in &sa.weights {
                prop_assert!((2.0 * w - sb.weights[i]).abs() <= 1e-10 * (1.0 + w.abs()));
            }
        }
    }

    #[test]
    fn first_paraproduct_is_bounded_by_its_sequence(seed in any::<u64>(), n in 1usize..10, m in 1usize..10, r in 1u32..4, strong in any::<bool>()) {
        let inst = instance(seed, n, m, 6);
        let filter = if strong { GoodFilter::Strong { r: 4 } } else { GoodFilter::All };
        let cfg = ParaproductConfig { r, filter, j_max: 3 };
        for s in 0..inst.tree.len() {
            let fp = first_paraproduct(&inst, s, &cfg).unwrap();
            let a = fp.a_sequence(inst.tree.root);
            let norm = fp.operator_norm(&PowerConfig::default()).unwrap().eigenvalue;
            let c = carleson_constant(&a);
            prop_assert!(norm * norm <= 4.0 * c * (1.0 + 1e-8) + 1e-20, "{} vs {}", norm * norm, 4.0 * c);
            // the map is linear
            let f = random_f(seed ^ s as u64, inst.mu());
            let g = random_f(seed ^ 99, inst.mu());
            let sum = WeightedFunction::new(Arc::clone(inst.mu()), f.values().iter().zip(g.values()).map(|(x, y)| x + 2.0 * y).collect()).unwrap();
            let (pf, pg, ps) = (fp.apply(&f).unwrap(), fp.apply(&g).unwrap(), fp.apply(&sum).unwrap());
            for k in 0..ps.values().len() {
                let want = pf.values()[k] + 2.0 * pg.values()[k];
                prop_assert!((ps.values()[k] - want).abs() <= 1e-10 * (1.0 + want.abs()));
            }
            prop_assert!(fp.apply(&WeightedFunction::zero(Arc::clone(inst.mu()))).unwrap().values().iter().all(|v| *v == 0.0));
        }
    }
}

#[test]
fn foreign_functions_are_rejected() {
    let inst = instance(4, 6, 6, 4);
    let p = Paraproducts::build(&inst, &ParaproductConfig::default()).unwrap();
    let f = WeightedFunction::constant(Arc::clone(inst.nu()), 1.0);
    assert!(matches!(p.pi_q(&f), Err(Error::BaseMismatch)));
    assert!(matches!(p.pi_o(&inst, &f), Err(Error::BaseMismatch)));
    assert!(matches!(first_paraproduct(&inst, inst.tree.len(), &ParaproductConfig::default()), Err(Error::NotANode)));
}

#[test]
fn constant_function_sees_every_node() {
    // ⟨1⟩ = 1 on every node, so the form is Σ b_S
    let inst = instance(11, 8, 8, 5);
    let p = Paraproducts::build(&inst, &ParaproductConfig::default()).unwrap();
    let one = WeightedFunction::constant(Arc::clone(inst.mu()), 1.0);
    let form = p.pi_o_form(&inst, &one);
    assert!(common::rel(form, p.b_nodes.iter().sum::<f64>()) <= 1e-12);
}
