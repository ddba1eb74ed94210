//! Pricing: search for routes with negative reduced cost under the master
//! duals.
//!
//! Arc weights are `r_0j = cf + ct t_0j` out of the depot and
//! `r_ij = ct t_ij - pi_i` out of customer `i`; durations use
//! `t~_0j = t_0j` and `t~_ij = t_ij + s_i`. The reduced cost of a route is
//! the sum of its arc weights plus `co` times its overtime.
//!
//! In this module the depot appears twice: node `0` as the source and node
//! `n + 1` as the sink. Travel into the sink reads column `0`.

use crate::instance::Instance;
use crate::milp::{solve_ip, IpOptions, IpStatus, LinearProgram, LpError, Sense};
use crate::num::{total_cmp, Scalar};
use crate::split::{route_cost_unchecked, split_sequence, Route};
use crate::tsp::prim;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("dual vector has length {found}, expected {expected}")]
    DualLength { expected: usize, found: usize },
    #[error("pricing model: {0}")]
    Lp(#[from] LpError),
    #[error("pricing integer program not solved to optimality ({status:?}, {nodes} nodes)")]
    Unproven { status: IpStatus, nodes: usize },
    #[error("no elementary path after {rounds} cut rounds ({cuts} cuts, last subtours {last_subtours:?})")]
    RoundLimit {
        rounds: usize,
        cuts: usize,
        last_subtours: Vec<Vec<usize>>,
    },
}

/// Reduced-cost arc weights and modified durations for one dual vector.
#[derive(Debug, Clone, Copy)]
pub struct ReducedCostGraph<'a, T> {
    pub instance: &'a Instance<T>,
    /// `duals[i - 1]` is the covering dual of customer `i`.
    pub duals: &'a [T],
}

impl<'a, T: Scalar> ReducedCostGraph<'a, T> {
    pub fn new(instance: &'a Instance<T>, duals: &'a [T]) -> Result<Self, PricingError> {
        if duals.len() != instance.n {
            return Err(PricingError::DualLength {
                expected: instance.n,
                found: duals.len(),
            });
        }
        Ok(Self { instance, duals })
    }

    #[inline]
    pub fn sink(&self) -> usize {
        self.instance.n + 1
    }

    #[inline]
    fn physical(&self, j: usize) -> usize {
        if j == self.sink() {
            0
        } else {
            j
        }
    }

    /// `r_ij`.
    pub fn weight(&self, i: usize, j: usize) -> T {
        let c = &self.instance.costs;
        let t = self.instance.travel(i, self.physical(j));
        if i == 0 {
            c.cf + c.ct * t
        } else {
            c.ct * t - self.duals[i - 1]
        }
    }

    /// `t~_ij`.
    pub fn modified_time(&self, i: usize, j: usize) -> T {
        let t = self.instance.travel(i, self.physical(j));
        if i == 0 {
            t
        } else {
            t + self.instance.service(i)
        }
    }

    /// Reduced cost of a customer sequence computed from arc weights.
    pub fn path_reduced_cost(&self, customers: &[usize]) -> T {
        let nodes: Vec<usize> = std::iter::once(0)
            .chain(customers.iter().copied())
            .chain(std::iter::once(self.sink()))
            .collect();
        let mut weight = T::zero();
        let mut time = T::zero();
        for w in nodes.windows(2) {
            weight += self.weight(w[0], w[1]);
            time += self.modified_time(w[0], w[1]);
        }
        weight + self.instance.costs.co * (time - self.instance.horizon).max(T::zero())
    }
}

/// A route together with its reduced cost under the duals that priced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PricedPath<T> {
    pub route: Route<T>,
    pub reduced_cost: T,
}

impl<T: Scalar> PricedPath<T> {
    fn new(instance: &Instance<T>, duals: &[T], customers: &[usize]) -> Self {
        let route = route_cost_unchecked(instance, customers);
        let reduced_cost = route.reduced_cost(duals);
        Self {
            route,
            reduced_cost,
        }
    }
}

/// One generalized cutset row: arcs inside `subtour` are bounded by the
/// out-degree of `subtour \ {excluded}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutsetCut {
    pub subtour: Vec<usize>,
    pub excluded: usize,
}

impl CutsetCut {
    /// Evaluates the row on a set of arcs (sink as `n + 1`).
    pub fn is_satisfied_by(&self, arcs: &[(usize, usize)]) -> bool {
        let inside = |v: usize| self.subtour.contains(&v);
        let lhs = arcs.iter().filter(|&&(i, j)| inside(i) && inside(j)).count();
        let rhs = arcs
            .iter()
            .filter(|&&(i, _)| i != self.excluded && inside(i))
            .count();
        lhs <= rhs
    }
}

#[derive(Debug, Clone)]
pub struct ExactPricingOptions {
    /// Return as soon as an intermediate solution carries an elementary
    /// depot path with negative reduced cost.
    pub early_exit: bool,
    pub max_rounds: usize,
    pub ip: IpOptions,
}

impl Default for ExactPricingOptions {
    fn default() -> Self {
        Self {
            early_exit: false,
            max_rounds: 200,
            ip: IpOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExactPricingOutcome<T> {
    /// Negative reduced-cost path, if one was found.
    pub path: Option<PricedPath<T>>,
    /// Reduced cost of the last elementary path extracted from the IP.
    /// Without early exit this is the minimum over all elementary paths.
    pub best_reduced_cost: T,
    pub cuts: Vec<CutsetCut>,
    pub rounds: usize,
    pub ip_nodes: usize,
}

/// Exact pricing: returns the minimum reduced-cost elementary path if it is
/// strictly negative.
pub fn exact_price<T: Scalar>(
    instance: &Instance<T>,
    duals: &[T],
) -> Result<Option<PricedPath<T>>, PricingError> {
    Ok(exact_price_with(instance, duals, &ExactPricingOptions::default())?.path)
}

/// Integer program over arc variables `b_ij` and overtime `delta`, solved
/// repeatedly with generalized cutset rows added for every subtour found.
pub fn exact_price_with<T: Scalar>(
    instance: &Instance<T>,
    duals: &[T],
    options: &ExactPricingOptions,
) -> Result<ExactPricingOutcome<T>, PricingError> {
    let graph = ReducedCostGraph::new(instance, duals)?;
    let n = instance.n;
    let sink = graph.sink();

    let mut arcs = Vec::new();
    for j in 1..=n {
        arcs.push((0, j));
    }
    for i in 1..=n {
        for j in 1..=n {
            if i != j {
                arcs.push((i, j));
            }
        }
        arcs.push((i, sink));
    }

    let mut lp = LinearProgram::new();
    let arc_vars: Vec<usize> = arcs
        .iter()
        .map(|&(i, j)| lp.add_var(graph.weight(i, j), T::zero(), T::one()))
        .collect();
    let delta = lp.add_var(instance.costs.co, T::zero(), T::infinity());

    let mut out_arcs = vec![Vec::new(); n + 2];
    let mut in_arcs = vec![Vec::new(); n + 2];
    for (k, &(i, j)) in arcs.iter().enumerate() {
        out_arcs[i].push(k);
        in_arcs[j].push(k);
    }
    // Flow balance.
    for v in 0..=sink {
        let mut coeffs: Vec<(usize, T)> = out_arcs[v].iter().map(|&k| (arc_vars[k], T::one())).collect();
        coeffs.extend(in_arcs[v].iter().map(|&k| (arc_vars[k], -T::one())));
        let rhs = if v == 0 {
            T::one()
        } else if v == sink {
            -T::one()
        } else {
            T::zero()
        };
        lp.add_row(coeffs, Sense::Eq, rhs);
    }
    // Out-degree at most one (the depot's is fixed by its balance row).
    for v in 1..=n {
        let coeffs = out_arcs[v].iter().map(|&k| (arc_vars[k], T::one())).collect();
        lp.add_row(coeffs, Sense::Le, T::one());
    }
    // Soft shift length.
    let mut time_row: Vec<(usize, T)> = arcs
        .iter()
        .zip(&arc_vars)
        .map(|(&(i, j), &var)| (var, graph.modified_time(i, j)))
        .collect();
    time_row.push((delta, -T::one()));
    lp.add_row(time_row, Sense::Le, instance.horizon);

    let tol = T::REDUCED_COST_TOL;
    let mut cuts = Vec::new();
    let mut ip_nodes = 0;
    let mut last_subtours = Vec::new();
    for round in 1..=options.max_rounds {
        let ip = solve_ip(&lp, &arc_vars, &options.ip)?;
        ip_nodes += ip.nodes;
        if ip.status != IpStatus::Optimal {
            return Err(PricingError::Unproven {
                status: ip.status,
                nodes: ip.nodes,
            });
        }
        let half = T::of(0.5);
        let mut next = vec![usize::MAX; n + 2];
        for (k, &(i, j)) in arcs.iter().enumerate() {
            if ip.x[arc_vars[k]] > half {
                next[i] = j;
            }
        }
        let mut on_path = vec![false; n + 2];
        let mut path = Vec::new();
        let mut v = next[0];
        while v != sink && v != usize::MAX {
            on_path[v] = true;
            path.push(v);
            v = next[v];
        }
        let mut subtours = Vec::new();
        let mut visited = on_path.clone();
        for start in 1..=n {
            if visited[start] || next[start] == usize::MAX {
                continue;
            }
            let mut cycle = Vec::new();
            let mut u = start;
            while !visited[u] && u != usize::MAX && u != sink {
                visited[u] = true;
                cycle.push(u);
                u = next[u];
            }
            cycle.sort_unstable();
            subtours.push(cycle);
        }

        let path_rc = graph.path_reduced_cost(&path);
        let found = (!path.is_empty() && path_rc < -tol).then(|| PricedPath::new(instance, duals, &path));
        if subtours.is_empty() || (options.early_exit && found.is_some()) {
            return Ok(ExactPricingOutcome {
                path: found,
                best_reduced_cost: path_rc,
                cuts,
                rounds: round,
                ip_nodes,
            });
        }

        for s in &subtours {
            for &u in s {
                let mut coeffs = Vec::new();
                for &i in s {
                    for &k in &out_arcs[i] {
                        let (_, j) = arcs[k];
                        let inside = s.binary_search(&j).is_ok();
                        let mut coef = if inside { T::one() } else { T::zero() };
                        if i != u {
                            coef -= T::one();
                        }
                        if coef != T::zero() {
                            coeffs.push((arc_vars[k], coef));
                        }
                    }
                }
                lp.add_row(coeffs, Sense::Le, T::zero());
                cuts.push(CutsetCut {
                    subtour: s.clone(),
                    excluded: u,
                });
            }
        }
        log::debug!("pricing round {round}: {} subtours, {} cuts", subtours.len(), cuts.len());
        last_subtours = subtours;
    }
    Err(PricingError::RoundLimit {
        rounds: options.max_rounds,
        cuts: cuts.len(),
        last_subtours,
    })
}

/// Split-based pricing over the customers with positive dual: a giant tour
/// from Prim's tree on the reduced-cost weights, split with reduced-cost
/// arc weights. Returns the negative routes of the split, most negative first.
pub fn heuristic_price<T: Scalar>(
    instance: &Instance<T>,
    duals: &[T],
) -> Result<Vec<PricedPath<T>>, PricingError> {
    let graph = ReducedCostGraph::new(instance, duals)?;
    let mut nodes = vec![0];
    nodes.extend(instance.customers().filter(|&i| duals[i - 1] > T::zero()));
    if nodes.len() == 1 {
        return Ok(Vec::new());
    }
    let tree = prim(instance.n + 1, &nodes, 0, |u, v| graph.weight(u, v));
    let order = tree.preorder();
    let outcome = split_sequence(instance, &order[1..], |c| duals[c - 1]);
    let tol = T::REDUCED_COST_TOL;
    let mut paths: Vec<PricedPath<T>> = outcome
        .routes
        .into_iter()
        .map(|route| {
            let reduced_cost = route.reduced_cost(duals);
            PricedPath {
                route,
                reduced_cost,
            }
        })
        .filter(|p| p.reduced_cost < -tol)
        .collect();
    paths.sort_by(|a, b| total_cmp(&a.reduced_cost, &b.reduced_cost));
    Ok(paths)
}

/// All elementary routes with reduced cost at most `max_reduced_cost`,
/// keeping the cheapest order per customer set. Returns `None` when more than
/// `limit` customer sets qualify.
///
/// The search extends paths from the depot and stops extending once
/// `partial + sum_u min(0, ct min_in(u) - pi_u)` over unvisited `u` exceeds
/// the threshold, where `min_in(u)` is the shortest arc into `u`.
pub fn routes_within<T: Scalar>(
    instance: &Instance<T>,
    duals: &[T],
    max_reduced_cost: T,
    limit: usize,
) -> Result<Option<Vec<PricedPath<T>>>, PricingError> {
    ReducedCostGraph::new(instance, duals)?;
    let n = instance.n;
    let ct = instance.costs.ct;
    let gain: Vec<T> = (1..=n)
        .map(|u| {
            let min_in = (0..=n)
                .filter(|&w| w != u)
                .map(|w| instance.travel(w, u))
                .fold(T::infinity(), T::min);
            (ct * min_in - duals[u - 1]).min(T::zero())
        })
        .collect();

    struct Search<'a, T> {
        instance: &'a Instance<T>,
        duals: &'a [T],
        gain: Vec<T>,
        threshold: T,
        limit: usize,
        found: std::collections::HashMap<Vec<usize>, PricedPath<T>>,
        overflow: bool,
    }

    impl<T: Scalar> Search<'_, T> {
        fn visit(&mut self, path: &mut Vec<usize>, used: &mut [bool], travel: T, duration: T, prize: T, spare_gain: T) {
            if self.overflow {
                return;
            }
            let inst = self.instance;
            let c = &inst.costs;
            let last = *path.last().expect("non-empty path");
            let back = inst.travel(last, 0);
            let overtime = (duration + back - inst.horizon).max(T::zero());
            let rc = c.cf + c.ct * (travel + back) + c.co * overtime - prize;
            if rc <= self.threshold {
                let mut key = path.clone();
                key.sort_unstable();
                let better = self.found.get(&key).is_none_or(|p| rc < p.reduced_cost);
                if better {
                    let candidate = PricedPath::new(inst, self.duals, path);
                    self.found.insert(key, candidate);
                    if self.found.len() > self.limit {
                        self.overflow = true;
                        return;
                    }
                }
            }
            let partial = c.cf + c.ct * travel - prize + c.co * (duration - inst.horizon).max(T::zero());
            if partial + spare_gain > self.threshold {
                return;
            }
            for next in 1..=inst.n {
                if used[next] {
                    continue;
                }
                used[next] = true;
                path.push(next);
                let leg = inst.travel(last, next);
                self.visit(
                    path,
                    used,
                    travel + leg,
                    duration + leg + inst.service(next),
                    prize + self.duals[next - 1],
                    spare_gain - self.gain[next - 1],
                );
                path.pop();
                used[next] = false;
            }
        }
    }

    let total_gain: T = gain.iter().copied().sum();
    let mut search = Search {
        instance,
        duals,
        gain,
        threshold: max_reduced_cost,
        limit,
        found: Default::default(),
        overflow: false,
    };
    let mut used = vec![false; n + 1];
    let mut path = Vec::with_capacity(n);
    for first in 1..=n {
        used[first] = true;
        path.push(first);
        let leg = instance.travel(0, first);
        search.visit(
            &mut path,
            &mut used,
            leg,
            leg + instance.service(first),
            duals[first - 1],
            total_gain - search.gain[first - 1],
        );
        path.pop();
        used[first] = false;
    }
    if search.overflow {
        return Ok(None);
    }
    let mut paths: Vec<PricedPath<T>> = search.found.into_values().collect();
    paths.sort_by(|a, b| total_cmp(&a.reduced_cost, &b.reduced_cost).then_with(|| a.route.customers.cmp(&b.route.customers)));
    Ok(Some(paths))
}
