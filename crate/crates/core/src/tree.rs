//! The part of a lattice below a root interval that carries atoms of μ or ν,
//! down to a fixed depth. Nodes are stored in preorder, so every subtree is a
//! contiguous slice.

use std::ops::Range;

use crate::dyadic::DyadicInterval;
use crate::measure::DiscreteMeasure;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub interval: DyadicInterval,
    pub mu: Range<usize>,
    pub nu: Range<usize>,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    pub depth: u32,
    /// One past the last preorder index of the subtree.
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeTree {
    pub nodes: Vec<TreeNode>,
    pub max_depth: u32,
}

impl LatticeTree {
    /// Every interval `I ⊆ root` with `depth(I) ≤ max_depth` holding at least
    /// one atom of `mu` or `nu`. With `require_nu`, only intervals holding a
    /// ν atom are kept.
    pub fn build(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        root: &DyadicInterval,
        max_depth: u32,
        require_nu: bool,
    ) -> LatticeTree {
        let mut nodes = Vec::new();
        let mu_r = mu.half_open_range(root.left(), root.right());
        let nu_r = nu.half_open_range(root.left(), root.right());
        let keep = |m: &Range<usize>, n: &Range<usize>| {
            if require_nu {
                !n.is_empty()
            } else {
                !(m.is_empty() && n.is_empty())
            }
        };
        if keep(&mu_r, &nu_r) {
            Self::grow(mu, nu, *root, mu_r, nu_r, None, 0, max_depth, &keep, &mut nodes);
        }
        LatticeTree { nodes, max_depth }
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        interval: DyadicInterval,
        mu_r: Range<usize>,
        nu_r: Range<usize>,
        parent: Option<usize>,
        depth: u32,
        max_depth: u32,
        keep: &dyn Fn(&Range<usize>, &Range<usize>) -> bool,
        nodes: &mut Vec<TreeNode>,
    ) -> usize {
        let idx = nodes.len();
        nodes.push(TreeNode {
            interval,
            mu: mu_r.clone(),
            nu: nu_r.clone(),
            children: Vec::new(),
            parent,
            depth,
            end: idx + 1,
        });
        if depth < max_depth {
            let [a, b] = interval.children();
            let split = b.left();
            let mm = mu_r.start + mu.atoms()[mu_r.clone()].partition_point(|x| x.position < split);
            let nm = nu_r.start + nu.atoms()[nu_r.clone()].partition_point(|x| x.position < split);
            for (child, m, n) in [(a, mu_r.start..mm, nu_r.start..nm), (b, mm..mu_r.end, nm..nu_r.end)] {
                if keep(&m, &n) {
                    let c = Self::grow(mu, nu, child, m, n, Some(idx), depth + 1, max_depth, keep, nodes);
                    nodes[idx].children.push(c);
                }
            }
        }
        nodes[idx].end = nodes.len();
        idx
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn subtree(&self, idx: usize) -> Range<usize> {
        idx..self.nodes[idx].end
    }

    pub fn find(&self, interval: &DyadicInterval) -> Option<usize> {
        self.nodes.iter().position(|n| n.interval == *interval)
    }
}
