//! Routes and the route-first cluster-second split of a giant tour.
//!
//! A split partitions a customer sequence into consecutive segments, each
//! served by its own team. Segment costs form a DAG over tour positions
//! (the trip graph) whose shortest path from position `0` to position `m`
//! is the optimal partition for that order.

use crate::instance::Instance;
use crate::num::Scalar;
use crate::tsp::GiantTour;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RouteError {
    #[error("route has no customers")]
    Empty,
    #[error("customer {0} visited more than once")]
    Repeated(usize),
    #[error("node {0} is not a customer")]
    NotACustomer(usize),
}

/// A depot-to-depot route with its expected hiring, travel and overtime cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Route<T> {
    pub customers: Vec<usize>,
    pub cost: T,
    /// Expected travel minutes including the legs from and to the depot.
    pub travel_time: T,
    /// Expected minutes beyond the shift length.
    pub overtime: T,
}

impl<T: Scalar> Route<T> {
    pub fn covers(&self, customer: usize) -> bool {
        self.customers.contains(&customer)
    }

    /// Directed arcs in physical node ids, depot as `0` on both ends.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let first = self.customers.first().map(|&c| (0, c));
        let last = self.customers.last().map(|&c| (c, 0));
        first
            .into_iter()
            .chain(self.customers.windows(2).map(|w| (w[0], w[1])))
            .chain(last)
    }

    /// Expected travel plus service minutes.
    pub fn duration(&self, instance: &Instance<T>) -> T {
        self.travel_time + self.customers.iter().map(|&c| instance.service(c)).sum::<T>()
    }

    /// `cost - sum of duals over covered customers`; `duals[i - 1]` belongs to customer `i`.
    pub fn reduced_cost(&self, duals: &[T]) -> T {
        self.cost - self.customers.iter().map(|&c| duals[c - 1]).sum::<T>()
    }
}

/// Costs a customer sequence: `cf + ct * travel + co * max(0, duration - L)`.
pub fn route_cost<T: Scalar>(
    instance: &Instance<T>,
    customers: &[usize],
) -> Result<Route<T>, RouteError> {
    if customers.is_empty() {
        return Err(RouteError::Empty);
    }
    let mut seen = vec![false; instance.n + 1];
    for &c in customers {
        if c == 0 || c > instance.n {
            return Err(RouteError::NotACustomer(c));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(RouteError::Repeated(c));
        }
    }
    Ok(route_cost_unchecked(instance, customers))
}

pub(crate) fn route_cost_unchecked<T: Scalar>(instance: &Instance<T>, customers: &[usize]) -> Route<T> {
    let mut prev = 0;
    let mut travel = T::zero();
    let mut service = T::zero();
    for &c in customers {
        travel += instance.travel(prev, c);
        service += instance.service(c);
        prev = c;
    }
    travel += instance.travel(prev, 0);
    let overtime = (travel + service - instance.horizon).max(T::zero());
    let costs = &instance.costs;
    Route {
        customers: customers.to_vec(),
        cost: costs.cf + costs.ct * travel + costs.co * overtime,
        travel_time: travel,
        overtime,
    }
}

/// Incremental cost of the trip serving `seq[start..end]`, updated as `end` grows.
struct TripAccumulator<T> {
    first: usize,
    last: usize,
    travel: T,
    service: T,
    prize: T,
}

impl<T: Scalar> TripAccumulator<T> {
    fn start(instance: &Instance<T>, c: usize, prize: T) -> Self {
        Self {
            first: c,
            last: c,
            travel: instance.travel(0, c),
            service: instance.service(c),
            prize,
        }
    }

    fn extend(&mut self, instance: &Instance<T>, c: usize, prize: T) {
        self.travel += instance.travel(self.last, c);
        self.service += instance.service(c);
        self.prize += prize;
        self.last = c;
    }

    /// Route cost minus collected prizes.
    fn weight(&self, instance: &Instance<T>) -> T {
        debug_assert!(self.first != 0);
        let travel = self.travel + instance.travel(self.last, 0);
        let overtime = (travel + self.service - instance.horizon).max(T::zero());
        let c = &instance.costs;
        c.cf + c.ct * travel + c.co * overtime - self.prize
    }
}

/// Explicit trip graph over positions `0..=m` of a customer sequence. Arc
/// `(i, j)` serves positions `i + 1..=j` (1-based), i.e. `seq[i..j]`.
#[derive(Debug, Clone)]
pub struct TripGraph<T> {
    pub sequence: Vec<usize>,
    /// `weights[i][j - i - 1]` is the weight of arc `(i, j)`.
    weights: Vec<Vec<T>>,
}

impl<T: Scalar> TripGraph<T> {
    /// Builds every arc with weight `route cost - sum of prizes`.
    pub fn build(instance: &Instance<T>, sequence: &[usize], prize: impl Fn(usize) -> T) -> Self {
        let m = sequence.len();
        let weights = (0..m)
            .map(|i| {
                let mut acc = TripAccumulator::start(instance, sequence[i], prize(sequence[i]));
                let mut row = vec![acc.weight(instance)];
                for &c in &sequence[i + 1..] {
                    acc.extend(instance, c, prize(c));
                    row.push(acc.weight(instance));
                }
                row
            })
            .collect();
        Self {
            sequence: sequence.to_vec(),
            weights,
        }
    }

    pub fn num_positions(&self) -> usize {
        self.sequence.len() + 1
    }

    pub fn arc_weight(&self, i: usize, j: usize) -> T {
        assert!(i < j && j <= self.sequence.len());
        self.weights[i][j - i - 1]
    }

    /// Generic Bellman-Ford over the arc list; returns the distance to the last position.
    pub fn bellman_ford(&self) -> T {
        let p = self.num_positions();
        let mut dist = vec![T::infinity(); p];
        dist[0] = T::zero();
        for _ in 0..p {
            let mut changed = false;
            for i in 0..p - 1 {
                if dist[i].is_infinite() {
                    continue;
                }
                for j in i + 1..p {
                    let cand = dist[i] + self.arc_weight(i, j);
                    if cand < dist[j] {
                        dist[j] = cand;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        dist[p - 1]
    }
}

/// Result of a split: routes in tour order and the path length in the trip graph.
#[derive(Debug, Clone)]
pub struct SplitOutcome<T> {
    pub routes: Vec<Route<T>>,
    /// Sum of arc weights on the shortest path (total cost minus prizes).
    pub total_weight: T,
}

/// Shortest path through the trip graph by one forward pass in position
/// order, with arc weights `route cost - sum of prize(c)` over its customers.
pub fn split_sequence<T: Scalar>(
    instance: &Instance<T>,
    sequence: &[usize],
    prize: impl Fn(usize) -> T,
) -> SplitOutcome<T> {
    let m = sequence.len();
    if m == 0 {
        return SplitOutcome {
            routes: Vec::new(),
            total_weight: T::zero(),
        };
    }
    let mut dist = vec![T::infinity(); m + 1];
    let mut pred = vec![0usize; m + 1];
    dist[0] = T::zero();
    for i in 0..m {
        let base = dist[i];
        let mut acc = TripAccumulator::start(instance, sequence[i], prize(sequence[i]));
        for j in i + 1..=m {
            if j > i + 1 {
                let c = sequence[j - 1];
                acc.extend(instance, c, prize(c));
            }
            let cand = base + acc.weight(instance);
            if cand < dist[j] {
                dist[j] = cand;
                pred[j] = i;
            }
        }
    }
    let mut routes = Vec::new();
    let mut j = m;
    while j > 0 {
        let i = pred[j];
        routes.push(route_cost_unchecked(instance, &sequence[i..j]));
        j = i;
    }
    routes.reverse();
    SplitOutcome {
        routes,
        total_weight: dist[m],
    }
}

/// Optimal contiguous partition of the giant tour into routes.
pub fn split<T: Scalar>(instance: &Instance<T>, tour: &GiantTour<T>) -> Vec<Route<T>> {
    split_sequence(instance, tour.customers(), |_| T::zero()).routes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, CostParams, GeneratorParams};
    use crate::tsp::approx_tsp_tour;

    fn one_customer(t: f64, s: f64, horizon: f64) -> Instance<f64> {
        Instance::from_coords(
            vec![[0.0, 0.0], [t, 0.0]],
            vec![s],
            vec![0.0],
            horizon,
            CostParams {
                cf: 100.0,
                ct: 1.0,
                co: 2.0,
                ce: 0.0,
                cd: 0.0,
            },
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn single_customer_cost() {
        let r = route_cost(&one_customer(10.0, 30.0, 250.0), &[1]).unwrap();
        assert_eq!(r.travel_time, 20.0);
        assert_eq!(r.overtime, 0.0);
        assert_eq!(r.cost, 120.0);
    }

    #[test]
    fn single_customer_overtime() {
        let r = route_cost(&one_customer(10.0, 30.0, 40.0), &[1]).unwrap();
        assert_eq!(r.overtime, 10.0);
        assert_eq!(r.cost, 140.0);
    }

    #[test]
    fn route_errors() {
        let inst = generate_instance(3, 0, &GeneratorParams::<f64>::default()).unwrap();
        assert_eq!(route_cost(&inst, &[]), Err(RouteError::Empty));
        assert_eq!(route_cost(&inst, &[1, 2, 1]), Err(RouteError::Repeated(1)));
        assert_eq!(route_cost(&inst, &[4]), Err(RouteError::NotACustomer(4)));
    }

    #[test]
    fn route_cost_matches_naive_recomputation() {
        let inst = generate_instance(9, 21, &GeneratorParams::<f64>::default()).unwrap();
        let seq = [4, 9, 1, 7, 3];
        let r = route_cost(&inst, &seq).unwrap();
        let nodes: Vec<usize> = std::iter::once(0).chain(seq).chain(std::iter::once(0)).collect();
        let mut travel = 0.0;
        for k in 0..nodes.len() - 1 {
            travel += inst.travel_mean[nodes[k]][nodes[k + 1]];
        }
        let service: f64 = seq.iter().map(|&c| inst.service_mean[c - 1]).sum();
        let overtime = f64::max(0.0, travel + service - inst.horizon);
        let expected = inst.costs.cf + inst.costs.ct * travel + inst.costs.co * overtime;
        assert!((r.cost - expected).abs() < 1e-9);
        assert_eq!(r.arcs().count(), 6);
        assert!((r.duration(&inst) - (travel + service)).abs() < 1e-9);
    }

    #[test]
    fn collinear_split_keeps_one_route() {
        let coords = vec![[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [30.0, 0.0]];
        let inst = Instance::from_coords(
            coords,
            vec![0.0; 3],
            vec![0.0; 3],
            250.0,
            CostParams {
                cf: 100.0,
                ct: 1.0,
                co: 2.0,
                ce: 0.0,
                cd: 0.0,
            },
            1.0,
        )
        .unwrap();
        let tour = approx_tsp_tour(&inst);
        let routes = split(&inst, &tour);
        assert_eq!(routes.len(), 1);
        assert_eq!(routes[0].customers, vec![1, 2, 3]);
        assert_eq!(routes[0].cost, 160.0);
    }

    #[test]
    fn single_customer_split() {
        let inst = one_customer(5.0, 10.0, 250.0);
        let routes = split(&inst, &approx_tsp_tour(&inst));
        assert_eq!(routes.len(), 1);
        assert_eq!(routes[0].customers, vec![1]);
    }

    #[test]
    fn dag_pass_matches_bellman_ford() {
        for seed in 0..20 {
            let inst = generate_instance(15, seed, &GeneratorParams::<f64>::default()).unwrap();
            let tour = approx_tsp_tour(&inst);
            let out = split_sequence(&inst, tour.customers(), |_| 0.0);
            let graph = TripGraph::build(&inst, tour.customers(), |_| 0.0);
            assert!((out.total_weight - graph.bellman_ford()).abs() < 1e-9);
            let total: f64 = out.routes.iter().map(|r| r.cost).sum();
            assert!((total - out.total_weight).abs() < 1e-9);
        }
    }

    #[test]
    fn prizes_reduce_arc_weights() {
        let inst = one_customer(10.0, 30.0, 250.0);
        let out = split_sequence(&inst, &[1], |_| 150.0);
        assert!((out.total_weight - (120.0 - 150.0)).abs() < 1e-12);
    }
}
