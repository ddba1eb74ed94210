//! Restricted master set-covering problem and the column-generation loop.

use crate::instance::Instance;
use crate::milp::{solve_ip, solve_lp, IpOptions, IpStatus, LinearProgram, LpError, LpStatus, Sense};
use crate::num::Scalar;
use crate::pricing::{exact_price_with, heuristic_price, routes_within, ExactPricingOptions, PricingError};
use crate::split::{route_cost_unchecked, split, Route};
use crate::tsp::approx_tsp_tour;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ColGenError {
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error("master problem: {0}")]
    Lp(#[from] LpError),
    #[error("master relaxation ended with status {0:?}")]
    Master(LpStatus),
    #[error("final covering problem ended with status {0:?}")]
    Integer(IpStatus),
    #[error("t_max must be non-negative, got {0}")]
    BadTimeLimit(f64),
    #[error("exhaustive search supports at most {max} customers, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("reference value must be positive, got {0}")]
    BadReference(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Giant tour and split only.
    #[serde(rename = "IS")]
    InitialSplit,
    /// Split-based pricing.
    #[serde(rename = "HM")]
    Heuristic,
    /// Integer-programming pricing.
    #[serde(rename = "EM")]
    Exact,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::InitialSplit, Method::Heuristic, Method::Exact];

    pub fn code(self) -> &'static str {
        match self {
            Method::InitialSplit => "IS",
            Method::Heuristic => "HM",
            Method::Exact => "EM",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "IS" => Ok(Method::InitialSplit),
            "HM" => Ok(Method::Heuristic),
            "EM" => Ok(Method::Exact),
            _ => Err(format!("unknown method {s:?} (expected IS, HM or EM)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ColGenConfig {
    pub method: Method,
    /// Time budget in seconds; `None` is unlimited.
    pub t_max: Option<f64>,
    /// Add every negative route of a heuristic split instead of the best one.
    pub pool: bool,
    /// Stop exact pricing at the first negative elementary path.
    pub early_exit: bool,
    pub pricing_node_limit: usize,
    pub master_node_limit: usize,
    /// After a converged exact run, add every route whose reduced cost is
    /// within the integrality gap and re-solve the covering problem.
    pub close_gap: bool,
    /// Skip gap closing when more customer sets than this qualify.
    pub gap_column_limit: usize,
}

impl Default for ColGenConfig {
    fn default() -> Self {
        Self {
            method: Method::Heuristic,
            t_max: None,
            pool: true,
            early_exit: true,
            pricing_node_limit: IpOptions::default().node_limit,
            master_node_limit: IpOptions::default().node_limit,
            close_gap: true,
            gap_column_limit: 50_000,
        }
    }
}

impl ColGenConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn with_t_max(mut self, seconds: f64) -> Self {
        self.t_max = (seconds.is_finite()).then_some(seconds);
        self
    }

    pub fn validate(&self) -> Result<(), ColGenError> {
        match self.t_max {
            Some(t) if !(t >= 0.0) => Err(ColGenError::BadTimeLimit(t)),
            _ => Ok(()),
        }
    }

    fn budget(&self) -> Option<Duration> {
        self.t_max.map(Duration::from_secs_f64)
    }
}

/// Restricted master problem over the columns generated so far.
#[derive(Debug, Clone)]
pub struct RmpState<T> {
    pub columns: Vec<Route<T>>,
    /// Latest relaxation value, `NaN` before the first solve.
    pub lp_value: T,
    /// Covering duals, `duals[i - 1]` for customer `i`.
    pub duals: Vec<T>,
    pub iterations: usize,
    pub elapsed: Duration,
    n: usize,
    seen: HashSet<Vec<usize>>,
}

impl<T: Scalar> RmpState<T> {
    pub fn new(n: usize) -> Self {
        Self {
            columns: Vec::new(),
            lp_value: T::nan(),
            duals: vec![T::zero(); n],
            iterations: 0,
            elapsed: Duration::ZERO,
            n,
            seen: HashSet::new(),
        }
    }

    /// Adds a column unless an identical customer sequence is already stored.
    pub fn add_column(&mut self, route: Route<T>) -> bool {
        debug_assert!(!route.customers.is_empty());
        if !self.seen.insert(route.customers.clone()) {
            return false;
        }
        self.columns.push(route);
        true
    }

    fn model(&self) -> LinearProgram<T> {
        let mut lp = LinearProgram::new();
        let mut rows = vec![Vec::new(); self.n];
        for r in &self.columns {
            let var = lp.add_var(r.cost, T::zero(), T::infinity());
            for &c in &r.customers {
                rows[c - 1].push((var, T::one()));
            }
        }
        for coeffs in rows {
            lp.add_row(coeffs, Sense::Ge, T::one());
        }
        lp
    }

    /// Solves the relaxation and stores its value and duals.
    pub fn solve_relaxation(&mut self) -> Result<T, ColGenError> {
        let sol = solve_lp(&self.model())?;
        if sol.status != LpStatus::Optimal {
            return Err(ColGenError::Master(sol.status));
        }
        self.lp_value = sol.objective;
        self.duals = sol.duals.iter().map(|&y| y.max(T::zero())).collect();
        Ok(sol.objective)
    }

    /// Binary covering problem over the stored columns; returns the chosen columns.
    pub fn solve_integer(&self, options: &IpOptions) -> Result<Vec<Route<T>>, ColGenError> {
        let mut lp = self.model();
        for u in lp.upper.iter_mut() {
            *u = T::one();
        }
        let vars: Vec<usize> = (0..lp.num_vars()).collect();
        let ip = solve_ip(&lp, &vars, options)?;
        if !ip.has_solution() {
            return Err(ColGenError::Integer(ip.status));
        }
        if !ip.proven {
            log::warn!("covering problem stopped after {} nodes; using incumbent", ip.nodes);
        }
        Ok(self
            .columns
            .iter()
            .zip(&ip.x)
            .filter(|(_, &y)| y > T::of(0.5))
            .map(|(r, _)| r.clone())
            .collect())
    }
}

/// Progress counters of one run; not part of the solution document.
#[derive(Debug, Clone, Default)]
pub struct ColGenStats<T> {
    pub iterations: usize,
    pub columns: usize,
    /// Master relaxation value after each solve.
    pub lp_history: Vec<T>,
    /// Reduced cost of each added column under the duals that produced it.
    pub added_reduced_costs: Vec<T>,
    /// Pricing found no improving column before the time budget ran out.
    pub converged: bool,
    /// Columns added while closing the integrality gap.
    pub gap_columns: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SarSolution<T> {
    pub routes: Vec<Route<T>>,
    pub objective: T,
    /// Master relaxation value of a converged exact run.
    pub lower_bound: Option<T>,
    /// Gap of `objective` to `lower_bound`, in percent.
    pub gap_percent: Option<T>,
    pub method: Method,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub stats: ColGenStats<T>,
}

impl<T: Scalar> SarSolution<T> {
    fn from_routes(routes: Vec<Route<T>>, method: Method, started: Instant) -> Self {
        let objective = routes.iter().map(|r| r.cost).sum();
        Self {
            routes,
            objective,
            lower_bound: None,
            gap_percent: None,
            method,
            wall_time_s: started.elapsed().as_secs_f64(),
            stats: ColGenStats::default(),
        }
    }

    /// True when every customer appears in exactly one route.
    pub fn is_partition(&self, n: usize) -> bool {
        let mut count = vec![0usize; n + 1];
        for r in &self.routes {
            for &c in &r.customers {
                if c == 0 || c > n {
                    return false;
                }
                count[c] += 1;
            }
        }
        count[1..].iter().all(|&k| k == 1)
    }
}

/// `100 (z - z_ref) / z_ref`.
pub fn gap<T: Scalar>(z: T, z_ref: T) -> Result<T, ColGenError> {
    if !(z_ref > T::zero()) {
        return Err(ColGenError::BadReference(z_ref.as_f64()));
    }
    Ok(T::of(100.0) * (z - z_ref) / z_ref)
}

/// Giant tour split into routes; always covers every customer.
pub fn initial_columns<T: Scalar>(instance: &Instance<T>) -> Vec<Route<T>> {
    split(instance, &approx_tsp_tour(instance))
}

pub fn run_colgen<T: Scalar>(
    instance: &Instance<T>,
    config: &ColGenConfig,
) -> Result<SarSolution<T>, ColGenError> {
    config.validate()?;
    let started = Instant::now();
    let initial = initial_columns(instance);
    if config.method == Method::InitialSplit {
        let mut sol = SarSolution::from_routes(initial, Method::InitialSplit, started);
        sol.stats.columns = sol.routes.len();
        return Ok(sol);
    }

    let budget = config.budget();
    let out_of_time = || budget.is_some_and(|b| started.elapsed() >= b);
    let exact_options = ExactPricingOptions {
        early_exit: config.early_exit,
        ip: IpOptions {
            node_limit: config.pricing_node_limit,
        },
        ..ExactPricingOptions::default()
    };

    let mut rmp = RmpState::new(instance.n);
    for r in initial {
        rmp.add_column(r);
    }
    let mut stats = ColGenStats::default();
    loop {
        let value = rmp.solve_relaxation()?;
        stats.lp_history.push(value);
        if out_of_time() {
            break;
        }
        let candidates = match config.method {
            Method::Heuristic => {
                let mut paths = heuristic_price(instance, &rmp.duals)?;
                if !config.pool {
                    paths.truncate(1);
                }
                paths
            }
            Method::Exact => exact_price_with(instance, &rmp.duals, &exact_options)?
                .path
                .into_iter()
                .collect(),
            Method::InitialSplit => unreachable!(),
        };
        let mut added = 0;
        for p in candidates {
            if rmp.add_column(p.route) {
                stats.added_reduced_costs.push(p.reduced_cost);
                added += 1;
            }
        }
        if added == 0 {
            stats.converged = true;
            break;
        }
        rmp.iterations += 1;
        log::debug!(
            "{} iteration {}: lp {:.4}, {} columns",
            config.method,
            rmp.iterations,
            value.as_f64(),
            rmp.columns.len()
        );
    }
    rmp.elapsed = started.elapsed();

    let master_options = IpOptions {
        node_limit: config.master_node_limit,
    };
    let mut routes = remove_over_coverage(instance, rmp.solve_integer(&master_options)?);
    if config.method == Method::Exact && stats.converged && config.close_gap {
        let upper: T = routes.iter().map(|r| r.cost).sum();
        let slack = T::REDUCED_COST_TOL * T::of_usize(instance.n + 1);
        let threshold = upper - rmp.lp_value + slack;
        if threshold > slack + slack {
            match routes_within(instance, &rmp.duals, threshold, config.gap_column_limit)? {
                Some(extra) => {
                    let before = rmp.columns.len();
                    for p in extra {
                        rmp.add_column(p.route);
                    }
                    stats.gap_columns = rmp.columns.len() - before;
                    if stats.gap_columns > 0 {
                        let closed = remove_over_coverage(instance, rmp.solve_integer(&master_options)?);
                        if closed.iter().map(|r| r.cost).sum::<T>() < upper {
                            routes = closed;
                        }
                    }
                }
                None => log::info!("integrality gap not closed: too many candidate routes"),
            }
        }
    }
    let mut sol = SarSolution::from_routes(routes, config.method, started);
    if config.method == Method::Exact && stats.converged {
        sol.lower_bound = Some(rmp.lp_value);
        sol.gap_percent = gap(sol.objective, rmp.lp_value).ok();
    }
    stats.iterations = rmp.iterations;
    stats.columns = rmp.columns.len();
    sol.stats = stats;
    Ok(sol)
}

/// Keeps each over-covered customer only in the route whose cost drops least
/// when the customer is removed, and re-costs the others.
pub fn remove_over_coverage<T: Scalar>(instance: &Instance<T>, mut routes: Vec<Route<T>>) -> Vec<Route<T>> {
    for c in instance.customers() {
        let holders: Vec<usize> = (0..routes.len()).filter(|&k| routes[k].covers(c)).collect();
        if holders.len() <= 1 {
            continue;
        }
        let saving = |r: &Route<T>| {
            let rest: Vec<usize> = r.customers.iter().copied().filter(|&x| x != c).collect();
            let after = if rest.is_empty() {
                T::zero()
            } else {
                route_cost_unchecked(instance, &rest).cost
            };
            r.cost - after
        };
        let keep = *holders
            .iter()
            .min_by(|&&a, &&b| crate::num::total_cmp(&saving(&routes[a]), &saving(&routes[b])))
            .expect("at least two holders");
        for &k in &holders {
            if k != keep {
                let rest: Vec<usize> = routes[k].customers.iter().copied().filter(|&x| x != c).collect();
                routes[k] = route_cost_unchecked(instance, &rest);
            }
        }
    }
    routes.retain(|r| !r.customers.is_empty());
    routes
}

pub const ORACLE_MAX_CUSTOMERS: usize = 8;

/// Exhaustive optimum of the deterministic sizing, assignment and routing
/// problem. Each subset's best order comes from a Held-Karp pass (route cost
/// is non-decreasing in travel time), and subsets are combined into a
/// partition by a second pass over bitmasks.
pub fn sar_oracle<T: Scalar>(instance: &Instance<T>) -> Result<SarSolution<T>, ColGenError> {
    let n = instance.n;
    if n > ORACLE_MAX_CUSTOMERS {
        return Err(ColGenError::TooLarge {
            n,
            max: ORACLE_MAX_CUSTOMERS,
        });
    }
    let started = Instant::now();
    let full = (1usize << n) - 1;
    // path[mask][last]: shortest depot -> ... -> last covering mask.
    let mut path = vec![vec![T::infinity(); n]; full + 1];
    let mut prev = vec![vec![usize::MAX; n]; full + 1];
    for k in 0..n {
        path[1 << k][k] = instance.travel(0, k + 1);
    }
    for mask in 1..=full {
        for last in 0..n {
            let d = path[mask][last];
            if mask & (1 << last) == 0 || !d.is_finite() {
                continue;
            }
            for next in 0..n {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let m2 = mask | (1 << next);
                let cand = d + instance.travel(last + 1, next + 1);
                if cand < path[m2][next] {
                    path[m2][next] = cand;
                    prev[m2][next] = last;
                }
            }
        }
    }
    let mut best_route: Vec<Option<Route<T>>> = vec![None; full + 1];
    for mask in 1..=full {
        let mut best_last = 0;
        let mut best_len = T::infinity();
        for last in 0..n {
            if mask & (1 << last) != 0 {
                let len = path[mask][last] + instance.travel(last + 1, 0);
                if len < best_len {
                    best_len = len;
                    best_last = last;
                }
            }
        }
        let mut order = Vec::new();
        let (mut m, mut v) = (mask, best_last);
        loop {
            order.push(v + 1);
            let p = prev[m][v];
            m &= !(1 << v);
            if p == usize::MAX {
                break;
            }
            v = p;
        }
        order.reverse();
        best_route[mask] = Some(route_cost_unchecked(instance, &order));
    }

    // Partition pass: the route holding the lowest uncovered customer is
    // chosen among subsets containing it.
    let mut cost = vec![T::infinity(); full + 1];
    let mut choice = vec![0usize; full + 1];
    cost[0] = T::zero();
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let s = sub | low;
            let c = best_route[s].as_ref().expect("route for subset").cost + cost[mask ^ s];
            if c < cost[mask] {
                cost[mask] = c;
                choice[mask] = s;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    let mut routes = Vec::new();
    let mut mask = full;
    while mask != 0 {
        let s = choice[mask];
        routes.push(best_route[s].clone().expect("route for subset"));
        mask ^= s;
    }
    let mut sol = SarSolution::from_routes(routes, Method::Exact, started);
    sol.objective = cost[full];
    Ok(sol)
}
