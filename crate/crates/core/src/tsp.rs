//! Giant tour construction: Prim's minimum spanning tree rooted at the depot
//! followed by a preorder walk (the classic metric TSP 2-approximation).

use crate::instance::Instance;
use crate::num::Scalar;
use serde::{Deserialize, Serialize};

/// A spanning tree over a subset of nodes, rooted at `root`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree<T> {
    pub root: usize,
    /// Parent of each tree node, indexed by node id; `None` for the root and
    /// for nodes outside the tree.
    pub parent: Vec<Option<usize>>,
    /// Children of each node sorted by ascending node id.
    pub children: Vec<Vec<usize>>,
    pub weight: T,
}

impl<T: Scalar> SpanningTree<T> {
    /// Undirected edges `(min, max)` of the tree, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .parent
            .iter()
            .enumerate()
            .filter_map(|(v, p)| p.map(|p| (p.min(v), p.max(v))))
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Nodes in order of first visit by a depth-first walk from the root.
    pub fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.children.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(self.children[v].iter().rev());
        }
        order
    }
}

/// Prim's algorithm on the complete graph over `nodes` (which must contain
/// `root`). `weight(u, v)` is the cost of attaching `v` below `u`; for
/// symmetric costs this is the ordinary MST. Weights may be negative.
///
/// Ties are broken towards the lexicographically smaller edge `(min, max)`.
pub fn prim<T, F>(num_nodes: usize, nodes: &[usize], root: usize, weight: F) -> SpanningTree<T>
where
    T: Scalar,
    F: Fn(usize, usize) -> T,
{
    let mut parent = vec![None; num_nodes];
    let mut children = vec![Vec::new(); num_nodes];
    let mut in_tree = vec![false; num_nodes];
    let mut key = vec![T::infinity(); num_nodes];
    let mut best_from = vec![usize::MAX; num_nodes];
    let edge = |a: usize, b: usize| (a.min(b), a.max(b));
    let better = |w: T, from: usize, v: usize, cur_w: T, cur_from: usize| {
        w < cur_w || (w == cur_w && (cur_from == usize::MAX || edge(from, v) < edge(cur_from, v)))
    };

    in_tree[root] = true;
    let mut total = T::zero();
    let mut last = root;
    for _ in 1..nodes.len() {
        for &v in nodes {
            if !in_tree[v] {
                let w = weight(last, v);
                if better(w, last, v, key[v], best_from[v]) {
                    key[v] = w;
                    best_from[v] = last;
                }
            }
        }
        let mut next = usize::MAX;
        for &v in nodes {
            if in_tree[v] {
                continue;
            }
            if next == usize::MAX
                || key[v] < key[next]
                || (key[v] == key[next] && edge(best_from[v], v) < edge(best_from[next], next))
            {
                next = v;
            }
        }
        let p = best_from[next];
        in_tree[next] = true;
        parent[next] = Some(p);
        children[p].push(next);
        total += key[next];
        last = next;
    }
    for c in &mut children {
        c.sort_unstable();
    }
    SpanningTree {
        root,
        parent,
        children,
        weight: total,
    }
}

/// MST over the depot and all customers with edge costs `ct * t_ij`.
pub fn minimum_spanning_tree<T: Scalar>(instance: &Instance<T>) -> SpanningTree<T> {
    let nodes: Vec<usize> = (0..=instance.n).collect();
    let ct = instance.costs.ct;
    prim(instance.n + 1, &nodes, 0, |i, j| ct * instance.travel(i, j))
}

/// Hamiltonian cycle over `0..=n`, starting at the depot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GiantTour<T> {
    pub order: Vec<usize>,
    pub tour_cost: T,
}

impl<T: Scalar> GiantTour<T> {
    /// Customer sequence without the leading depot.
    pub fn customers(&self) -> &[usize] {
        &self.order[1..]
    }
}

/// Travel cost `ct * t` of the closed cycle through `order`.
pub fn cycle_cost<T: Scalar>(instance: &Instance<T>, order: &[usize]) -> T {
    let ct = instance.costs.ct;
    let closing = match (order.first(), order.last()) {
        (Some(&a), Some(&b)) => instance.travel(b, a),
        _ => T::zero(),
    };
    ct * (order.windows(2).map(|w| instance.travel(w[0], w[1])).sum::<T>() + closing)
}

pub fn approx_tsp_tour<T: Scalar>(instance: &Instance<T>) -> GiantTour<T> {
    let tree = minimum_spanning_tree(instance);
    let order = tree.preorder();
    let tour_cost = cycle_cost(instance, &order);
    GiantTour { order, tour_cost }
}
