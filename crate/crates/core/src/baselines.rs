//! Comparison schemes: flooding, multipoint relays, the GB-BTC
//! parent-selection tree, and an exhaustive minimum-cost tree for small
//! graphs.
//!
//! Link success probabilities are passed as a dense matrix
//! `success[from][to]`; entries for non-links are ignored.

use crate::channel::expected_retransmissions;
use crate::regret::Action;
use crate::topology::Topology;
use thiserror::Error;

/// Largest graph the exhaustive tree search accepts.
pub const ORACLE_MAX_NODES: usize = 8;
/// Best-response rounds allowed before GB-BTC construction gives up.
pub const GBBTC_ROUND_BUDGET: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("two-hop node {two_hop} of {sender} has no one-hop coverer")]
    TopologyInconsistency { sender: usize, two_hop: usize },
    #[error("node {0} has no usable parent closer to the source")]
    NoParent(usize),
    #[error("best response did not settle within {0} rounds")]
    NoConvergence(usize),
    #[error("exhaustive search is limited to {ORACLE_MAX_NODES} nodes, got {0}")]
    SizeLimit(usize),
    #[error("no spanning tree with positive link success probabilities exists")]
    NoSpanningTree,
    #[error("node index {0} out of range")]
    NodeOutOfRange(usize),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// Flooding forwards everything it handles.
pub fn flooding_policy() -> Action {
    Action::Forward
}

/// Greedy multipoint-relay selection for `sender`.
///
/// Neighbors that are the only route to some two-hop node are taken first;
/// then the neighbor covering the most still-uncovered two-hop nodes is added
/// until none remain, ties going to the lowest index. Returned sorted.
pub fn mpr_select(topology: &Topology, sender: usize) -> Result<Vec<usize>> {
    if sender >= topology.len() {
        return Err(BaselineError::NodeOutOfRange(sender));
    }
    let one_hop = topology.neighbors(sender);
    let two_hop = topology.two_hop(sender);
    let covers = |j: usize, t: usize| topology.are_neighbors(j, t);

    let mut selected: Vec<usize> = Vec::new();
    for &t in two_hop {
        let coverers: Vec<usize> = one_hop.iter().copied().filter(|&j| covers(j, t)).collect();
        match coverers.as_slice() {
            [] => return Err(BaselineError::TopologyInconsistency { sender, two_hop: t }),
            [only] => {
                if !selected.contains(only) {
                    selected.push(*only);
                }
            }
            _ => {}
        }
    }
    let mut uncovered: Vec<usize> = two_hop
        .iter()
        .copied()
        .filter(|&t| !selected.iter().any(|&j| covers(j, t)))
        .collect();
    while !uncovered.is_empty() {
        let best = one_hop
            .iter()
            .copied()
            .filter(|j| !selected.contains(j))
            .map(|j| (uncovered.iter().filter(|&&t| covers(j, t)).count(), j))
            // max count, then lowest index
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
            .filter(|&(count, _)| count > 0);
        let Some((_, j)) = best else {
            return Err(BaselineError::TopologyInconsistency {
                sender,
                two_hop: uncovered[0],
            });
        };
        selected.push(j);
        uncovered.retain(|&t| !covers(j, t));
    }
    selected.sort_unstable();
    Ok(selected)
}

/// Spanning broadcast tree rooted at `source`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastTree {
    source: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

impl BroadcastTree {
    /// Builds a tree from parent pointers, checking that every non-source
    /// node reaches the source through one-hop links.
    pub fn from_parents(topology: &Topology, source: usize, parent: Vec<Option<usize>>) -> Option<Self> {
        let n = topology.len();
        if parent.len() != n || source >= n || parent[source].is_some() {
            return None;
        }
        for v in 0..n {
            if v == source {
                continue;
            }
            let p = parent[v]?;
            if !topology.are_neighbors(v, p) {
                return None;
            }
            // walk to the root; more than n steps means a cycle
            let (mut at, mut steps) = (v, 0);
            while at != source {
                at = parent[at]?;
                steps += 1;
                if steps > n {
                    return None;
                }
            }
        }
        let mut children = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(v);
            }
        }
        Some(Self { source, parent, children })
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn is_internal(&self, v: usize) -> bool {
        !self.children[v].is_empty()
    }

    /// Nodes with at least one child, ascending.
    pub fn internal(&self) -> Vec<usize> {
        (0..self.parent.len()).filter(|&v| self.is_internal(v)).collect()
    }

    /// Sum over internal nodes of the expected transmissions to reach their
    /// children.
    pub fn expected_total(&self, success: &[Vec<f64>]) -> f64 {
        self.internal()
            .into_iter()
            .map(|p| {
                let probs: Vec<f64> = self.children[p].iter().map(|&c| success[p][c]).collect();
                expected_retransmissions(&probs).unwrap_or(f64::INFINITY)
            })
            .sum()
    }

    /// `node,parent,internal_flag` rows; the source's parent column is empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,parent,internal_flag\n");
        for v in 0..self.parent.len() {
            let parent = self.parent[v].map(|p| p.to_string()).unwrap_or_default();
            out.push_str(&format!("{v},{parent},{}\n", u8::from(self.is_internal(v))));
        }
        out
    }
}

/// Cost a node pays for attaching to `parent` when `sharers` nodes
/// (itself included) attach there: an even share of the parent's first
/// transmission plus its own link's expected retransmissions.
pub fn gbbtc_cost(success: f64, sharers: usize) -> f64 {
    1.0 / sharers as f64 + (1.0 - success) / success
}

fn gbbtc_candidates(topology: &Topology, hops: &[Option<usize>], success: &[Vec<f64>], v: usize) -> Vec<usize> {
    let Some(h) = hops[v] else {
        return Vec::new();
    };
    topology
        .neighbors(v)
        .iter()
        .copied()
        .filter(|&p| hops[p].is_some_and(|hp| hp < h) && success[p][v] > 0.0)
        .collect()
}

/// Round-robin best response on the parent-selection game until no node
/// wants to switch. Parents are restricted to strictly smaller hop counts.
pub fn gbbtc_construct(topology: &Topology, source: usize, success: &[Vec<f64>]) -> Result<BroadcastTree> {
    let n = topology.len();
    if source >= n {
        return Err(BaselineError::NodeOutOfRange(source));
    }
    let hops = topology.hop_counts(source);
    let candidates: Vec<Vec<usize>> = (0..n).map(|v| gbbtc_candidates(topology, &hops, success, v)).collect();
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut count = vec![0usize; n];
    for v in (0..n).filter(|&v| v != source) {
        // start on the cheapest own link
        let best = candidates[v]
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let (ca, cb) = ((1.0 - success[a][v]) / success[a][v], (1.0 - success[b][v]) / success[b][v]);
                ca.total_cmp(&cb).then(a.cmp(&b))
            })
            .ok_or(BaselineError::NoParent(v))?;
        parent[v] = Some(best);
        count[best] += 1;
    }

    for _ in 0..GBBTC_ROUND_BUDGET {
        let mut changed = false;
        for v in (0..n).filter(|&v| v != source) {
            let current = parent[v].expect("assigned above");
            let current_cost = gbbtc_cost(success[current][v], count[current]);
            let (best, best_cost) = best_response(&candidates[v], &count, current, |p| success[p][v]);
            if best != current && best_cost < current_cost - 1e-12 {
                count[current] -= 1;
                count[best] += 1;
                parent[v] = Some(best);
                changed = true;
            }
        }
        if !changed {
            return BroadcastTree::from_parents(topology, source, parent).ok_or(BaselineError::NoSpanningTree);
        }
    }
    Err(BaselineError::NoConvergence(GBBTC_ROUND_BUDGET))
}

fn best_response(candidates: &[usize], count: &[usize], current: usize, success: impl Fn(usize) -> f64) -> (usize, f64) {
    let mut best = (current, f64::INFINITY);
    for &p in candidates {
        let sharers = count[p] + usize::from(p != current);
        let cost = gbbtc_cost(success(p), sharers);
        if cost < best.1 {
            best = (p, cost);
        }
    }
    best
}

/// True when no node can lower its own cost by switching to another
/// admissible parent.
pub fn gbbtc_is_stable(topology: &Topology, tree: &BroadcastTree, success: &[Vec<f64>]) -> bool {
    let hops = topology.hop_counts(tree.source());
    let n = topology.len();
    let count: Vec<usize> = (0..n).map(|v| tree.children(v).len()).collect();
    (0..n).filter(|&v| v != tree.source()).all(|v| {
        let current = tree.parent(v).expect("non-source nodes have parents");
        let current_cost = gbbtc_cost(success[current][v], count[current]);
        gbbtc_candidates(topology, &hops, success, v)
            .into_iter()
            .filter(|&p| p != current)
            .all(|p| gbbtc_cost(success[p][v], count[p] + 1) >= current_cost - 1e-12)
    })
}

/// Exhaustive minimum over all spanning trees rooted at `source` of
/// [`BroadcastTree::expected_total`]. Returns the cost and one minimizer
/// (first in lexicographic parent order on ties).
pub fn optimal_tree_oracle(topology: &Topology, source: usize, success: &[Vec<f64>]) -> Result<(f64, BroadcastTree)> {
    let n = topology.len();
    if n > ORACLE_MAX_NODES {
        return Err(BaselineError::SizeLimit(n));
    }
    if source >= n {
        return Err(BaselineError::NodeOutOfRange(source));
    }
    let others: Vec<usize> = (0..n).filter(|&v| v != source).collect();
    let options: Vec<Vec<usize>> = others
        .iter()
        .map(|&v| topology.neighbors(v).iter().copied().filter(|&p| success[p][v] > 0.0).collect())
        .collect();
    if options.iter().any(Vec::is_empty) {
        return Err(BaselineError::NoSpanningTree);
    }

    let mut choice = vec![0usize; others.len()];
    let mut best: Option<(f64, BroadcastTree)> = None;
    loop {
        let mut parent = vec![None; n];
        for (slot, &v) in others.iter().enumerate() {
            parent[v] = Some(options[slot][choice[slot]]);
        }
        if let Some(tree) = BroadcastTree::from_parents(topology, source, parent) {
            let cost = tree.expected_total(success);
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, tree));
            }
        }
        // odometer increment
        let mut digit = 0;
        loop {
            if digit == choice.len() {
                return best.ok_or(BaselineError::NoSpanningTree);
            }
            choice[digit] += 1;
            if choice[digit] < options[digit].len() {
                break;
            }
            choice[digit] = 0;
            digit += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize, p: f64) -> Vec<Vec<f64>> {
        vec![vec![p; n]; n]
    }

    #[test]
    fn flooding_always_forwards() {
        assert_eq!(flooding_policy(), Action::Forward);
    }

    #[test]
    fn mpr_examples() {
        let star = Topology::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert!(mpr_select(&star, 0).unwrap().is_empty());
        let path = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(mpr_select(&path, 0).unwrap(), vec![1]);
        // s=0, x=1, y=2, u=3, v=4, w=5
        let t = Topology::from_edges(6, &[(0, 1), (0, 2), (1, 3), (1, 4), (2, 4), (2, 5)]).unwrap();
        assert_eq!(mpr_select(&t, 0).unwrap(), vec![1, 2]);
    }

    #[test]
    fn mpr_greedy_prefers_larger_cover() {
        // s=0 with neighbors 1,2,3; two-hop 4,5 reachable from all three but
        // 1 covers both, 2 and 3 one each.
        let t = Topology::from_edges(6, &[(0, 1), (0, 2), (0, 3), (1, 4), (1, 5), (2, 4), (3, 5)]).unwrap();
        assert_eq!(mpr_select(&t, 0).unwrap(), vec![1]);
    }

    #[test]
    fn gbbtc_path() {
        let path = Topology::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let tree = gbbtc_construct(&path, 0, &uniform(4, 0.8)).unwrap();
        assert_eq!(tree.parent(3), Some(2));
        assert_eq!(tree.internal(), vec![0, 1, 2]);
    }

    #[test]
    fn gbbtc_prefers_shared_parent() {
        // source 0 -> {1, 2}; node 3 may hang off 1 or 2 (equal links);
        // node 4 can only use 2, so 2 already has a child.
        let t = Topology::from_edges(5, &[(0, 1), (0, 2), (1, 3), (2, 3), (2, 4)]).unwrap();
        let tree = gbbtc_construct(&t, 0, &uniform(5, 0.9)).unwrap();
        assert_eq!(tree.parent(3), Some(2));
        assert!(gbbtc_cost(0.9, 2) < gbbtc_cost(0.9, 1));
        assert!(gbbtc_is_stable(&t, &tree, &uniform(5, 0.9)));
    }

    #[test]
    fn oracle_examples() {
        let pair = Topology::from_edges(2, &[(0, 1)]).unwrap();
        let (cost, _) = optimal_tree_oracle(&pair, 0, &uniform(2, 0.5)).unwrap();
        assert_eq!(cost, 2.0);

        let tri = Topology::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        let (cost, tree) = optimal_tree_oracle(&tri, 0, &uniform(3, 1.0)).unwrap();
        assert_eq!(cost, 1.0);
        assert_eq!(tree.internal(), vec![0]);

        let star = Topology::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let (_, tree) = optimal_tree_oracle(&star, 0, &uniform(4, 0.7)).unwrap();
        assert_eq!((1..4).map(|v| tree.parent(v)).collect::<Vec<_>>(), vec![Some(0); 3]);

        let big = Topology::from_edges(9, &[(0, 1)]).unwrap();
        assert_eq!(optimal_tree_oracle(&big, 0, &uniform(9, 1.0)).unwrap_err(), BaselineError::SizeLimit(9));
    }

    #[test]
    fn tree_csv() {
        let path = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let tree = gbbtc_construct(&path, 0, &uniform(3, 1.0)).unwrap();
        assert_eq!(tree.to_csv(), "node,parent,internal_flag\n0,,1\n1,0,1\n2,1,0\n");
    }

    #[test]
    fn from_parents_rejects_cycles() {
        let tri = Topology::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        assert!(BroadcastTree::from_parents(&tri, 0, vec![None, Some(2), Some(1)]).is_none());
        assert!(BroadcastTree::from_parents(&tri, 0, vec![None, Some(0), Some(1)]).is_some());
    }
}
