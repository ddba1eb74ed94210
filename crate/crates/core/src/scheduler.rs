//! Monte-Carlo appointment scheduling and stochastic cost evaluation.
//!
//! Replicas simulate a route from the depot: cancellation flags are drawn
//! first, then travel and service in visiting order. A cancelled customer is
//! skipped and the team drives straight to the next one. Appointments are
//! fixed customer by customer at the nearest-rank `alpha`-percentile of the
//! simulated arrivals, given the appointments already fixed upstream.

use crate::colgen::SarSolution;
use crate::instance::Instance;
use crate::num::{total_cmp, Scalar};
use crate::split::Route;
use crate::stochastics::StochasticModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("alpha must lie in [0, 1], got {0}")]
    BadAlpha(f64),
    #[error("replica count must be positive")]
    NoReplicas,
    #[error("route {0} is empty")]
    EmptyRoute(usize),
    #[error("customer {0} is not covered by the stochastic model")]
    UnknownCustomer(usize),
    #[error("customer {0} appears twice in route")]
    Repeated(usize),
    #[error("{schedules} schedules for {routes} routes")]
    Mismatch { routes: usize, schedules: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    /// Target probability of arriving no later than the appointment.
    pub alpha: f64,
    pub replicas: usize,
    /// Fresh replicas used to measure on-time rates and costs; defaults to `replicas`.
    pub eval_replicas: Option<usize>,
    pub seed: u64,
    /// Teams learn of a cancellation only on reaching the customer.
    pub discover_on_arrival: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            replicas: 100,
            eval_replicas: None,
            seed: 0,
            discover_on_arrival: false,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SchedulerError::BadAlpha(self.alpha));
        }
        if self.replicas == 0 || self.eval_replicas == Some(0) {
            return Err(SchedulerError::NoReplicas);
        }
        Ok(())
    }

    fn evaluation_replicas(&self) -> usize {
        self.eval_replicas.unwrap_or(self.replicas)
    }
}

/// Expected cost components; simulated where randomness enters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CostBreakdown<T> {
    pub hiring: T,
    pub travel: T,
    pub overtime: T,
    pub earliness: T,
    pub delay: T,
    pub total: T,
}

impl<T: Scalar> CostBreakdown<T> {
    fn new(hiring: T, travel: T, overtime: T, earliness: T, delay: T) -> Self {
        Self {
            hiring,
            travel,
            overtime,
            earliness,
            delay,
            total: hiring + travel + overtime + earliness + delay,
        }
    }

    fn add(self, o: Self) -> Self {
        Self::new(
            self.hiring + o.hiring,
            self.travel + o.travel,
            self.overtime + o.overtime,
            self.earliness + o.earliness,
            self.delay + o.delay,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Appointment<T> {
    pub customer: usize,
    /// Minutes after the shift start.
    pub w: T,
    /// Fraction of fresh replicas serving this customer that arrive by `w`.
    pub on_time_rate: T,
    /// Every scheduling replica cancelled this customer; `w` comes from
    /// travel-only arrivals.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub all_cancelled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RouteSchedule<T> {
    pub route_id: usize,
    /// One entry per customer, in visiting order.
    pub appointments: Vec<Appointment<T>>,
    /// Fraction of all served visits in the fresh replicas that were on time.
    pub on_time_rate: T,
    pub cost_breakdown: CostBreakdown<T>,
    /// Sorted arrival samples per customer from the scheduling replicas.
    #[serde(skip)]
    pub empirical: Vec<Vec<T>>,
}

impl<T: Scalar> RouteSchedule<T> {
    pub fn customers(&self) -> Vec<usize> {
        self.appointments.iter().map(|a| a.customer).collect()
    }

    pub fn appointment_times(&self) -> Vec<T> {
        self.appointments.iter().map(|a| a.w).collect()
    }
}

/// Nearest-rank percentile of sorted samples: element `ceil(alpha R)`,
/// clamped to `1..=R`.
pub fn percentile<T: Copy>(sorted: &[T], alpha: f64) -> T {
    assert!(!sorted.is_empty(), "percentile of no samples");
    let r = sorted.len();
    let rank = ((alpha * r as f64).ceil() as usize).clamp(1, r);
    sorted[rank - 1]
}

/// Stream id of a route, independent of where the route sits in a solution.
fn route_stream(customers: &[usize]) -> u64 {
    customers
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, &c| (h ^ c as u64).wrapping_mul(0x0100_0000_01b3))
        >> 1
}

const EVALUATION_STREAM: u64 = 1 << 63;

/// Replica `k` draws from seed `seed + k` on the route's stream.
fn replica_rng(seed: u64, k: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
    rng.set_stream(stream);
    rng
}

struct Replica<T> {
    rng: ChaCha8Rng,
    cancelled: Vec<bool>,
    location: usize,
    clock: T,
    earliness: T,
    delay: T,
}

/// Per-route outcome of a batch of replicas.
#[derive(Debug, Clone)]
pub struct SimulationTrace<T> {
    pub appointments: Vec<T>,
    /// Sorted arrivals of the replicas that served each customer.
    pub arrivals: Vec<Vec<T>>,
    pub on_time: Vec<usize>,
    pub served: Vec<usize>,
    pub all_cancelled: Vec<bool>,
    /// Depot return time per replica.
    pub returns: Vec<T>,
    pub earliness: Vec<T>,
    pub delay: Vec<T>,
    /// Arcs driven per replica, physical node ids; filled on request.
    pub paths: Vec<Vec<(usize, usize)>>,
}

struct SimulationSpec<'a> {
    customers: &'a [usize],
    replicas: usize,
    seed: u64,
    stream: u64,
    discover_on_arrival: bool,
    record_paths: bool,
}

fn simulate<T: Scalar, M: StochasticModel<T> + ?Sized>(
    model: &M,
    spec: &SimulationSpec<'_>,
    mut fix: impl FnMut(usize, &[T], bool) -> T,
) -> SimulationTrace<T> {
    let m = spec.customers.len();
    let mut replicas: Vec<Replica<T>> = (0..spec.replicas)
        .map(|k| {
            let mut rng = replica_rng(spec.seed, k, spec.stream);
            let cancelled = spec.customers.iter().map(|&c| model.cancels(c, &mut rng)).collect();
            Replica {
                rng,
                cancelled,
                location: 0,
                clock: T::zero(),
                earliness: T::zero(),
                delay: T::zero(),
            }
        })
        .collect();
    let mut paths = vec![Vec::new(); if spec.record_paths { spec.replicas } else { 0 }];
    let mut trace = SimulationTrace {
        appointments: Vec::with_capacity(m),
        arrivals: Vec::with_capacity(m),
        on_time: Vec::with_capacity(m),
        served: Vec::with_capacity(m),
        all_cancelled: Vec::with_capacity(m),
        returns: Vec::new(),
        earliness: Vec::new(),
        delay: Vec::new(),
        paths: Vec::new(),
    };

    for (p, &c) in spec.customers.iter().enumerate() {
        let mut arrival = vec![None; spec.replicas];
        for (k, r) in replicas.iter_mut().enumerate() {
            if r.cancelled[p] && !spec.discover_on_arrival {
                continue;
            }
            let t = r.clock + model.travel(r.location, c, &mut r.rng);
            if spec.record_paths {
                paths[k].push((r.location, c));
            }
            if r.cancelled[p] {
                r.clock = t;
                r.location = c;
            } else {
                arrival[k] = Some(t);
            }
        }
        let mut served: Vec<T> = arrival.iter().flatten().copied().collect();
        served.sort_by(total_cmp);
        let none_served = served.is_empty();
        let w = if none_served {
            let mut hypothetical: Vec<T> = replicas
                .iter_mut()
                .map(|r| r.clock + model.travel(r.location, c, &mut r.rng))
                .collect();
            hypothetical.sort_by(total_cmp);
            fix(p, &hypothetical, true)
        } else {
            fix(p, &served, false)
        };
        let mut on_time = 0;
        for (r, a) in replicas.iter_mut().zip(&arrival) {
            let Some(a) = *a else { continue };
            if a <= w {
                on_time += 1;
            }
            r.earliness += (w - a).max(T::zero());
            r.delay += (a - w).max(T::zero());
            r.clock = a.max(w) + model.service(c, &mut r.rng);
            r.location = c;
        }
        trace.appointments.push(w);
        trace.served.push(served.len());
        trace.arrivals.push(served);
        trace.on_time.push(on_time);
        trace.all_cancelled.push(none_served);
    }
    for (k, r) in replicas.iter_mut().enumerate() {
        let back = model.travel(r.location, 0, &mut r.rng);
        if spec.record_paths {
            paths[k].push((r.location, 0));
        }
        trace.returns.push(r.clock + back);
        trace.earliness.push(r.earliness);
        trace.delay.push(r.delay);
    }
    trace.paths = paths;
    trace
}

fn check_route<T: Scalar, M: StochasticModel<T> + ?Sized>(
    model: &M,
    route_id: usize,
    customers: &[usize],
) -> Result<(), SchedulerError> {
    if customers.is_empty() {
        return Err(SchedulerError::EmptyRoute(route_id));
    }
    let mut seen = vec![false; model.customers() + 1];
    for &c in customers {
        if c == 0 || c > model.customers() {
            return Err(SchedulerError::UnknownCustomer(c));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(SchedulerError::Repeated(c));
        }
    }
    Ok(())
}

/// Simulates a route under fixed appointments with fresh replicas.
pub fn simulate_fixed<T: Scalar, M: StochasticModel<T> + ?Sized>(
    model: &M,
    customers: &[usize],
    appointments: &[T],
    replicas: usize,
    seed: u64,
    discover_on_arrival: bool,
    record_paths: bool,
) -> SimulationTrace<T> {
    let spec = SimulationSpec {
        customers,
        replicas,
        seed,
        stream: route_stream(customers) | EVALUATION_STREAM,
        discover_on_arrival,
        record_paths,
    };
    simulate(model, &spec, |p, _, _| appointments[p])
}

fn route_costs<T: Scalar>(instance: &Instance<T>, route: &Route<T>, trace: &SimulationTrace<T>) -> CostBreakdown<T> {
    let c = &instance.costs;
    let r = T::of_usize(trace.returns.len());
    let overtime: T = trace
        .returns
        .iter()
        .map(|&t| (t - instance.horizon).max(T::zero()))
        .sum::<T>()
        / r;
    let earliness = trace.earliness.iter().copied().sum::<T>() / r;
    let delay = trace.delay.iter().copied().sum::<T>() / r;
    CostBreakdown::new(
        c.cf,
        c.ct * route.travel_time,
        c.co * overtime,
        c.ce * earliness,
        c.cd * delay,
    )
}

pub fn schedule_route<T: Scalar, M: StochasticModel<T> + ?Sized>(
    instance: &Instance<T>,
    model: &M,
    route: &Route<T>,
    route_id: usize,
    config: &ScheduleConfig,
) -> Result<RouteSchedule<T>, SchedulerError> {
    config.validate()?;
    check_route(model, route_id, &route.customers)?;
    let spec = SimulationSpec {
        customers: &route.customers,
        replicas: config.replicas,
        seed: config.seed,
        stream: route_stream(&route.customers),
        discover_on_arrival: config.discover_on_arrival,
        record_paths: false,
    };
    let mut latest = T::neg_infinity();
    let fixed = simulate(model, &spec, |_, samples, _| {
        latest = latest.max(percentile(samples, config.alpha));
        latest
    });

    let fresh = simulate_fixed(
        model,
        &route.customers,
        &fixed.appointments,
        config.evaluation_replicas(),
        config.seed,
        config.discover_on_arrival,
        false,
    );
    let rate = |on: usize, of: usize| {
        if of == 0 {
            T::one()
        } else {
            T::of_usize(on) / T::of_usize(of)
        }
    };
    let appointments = route
        .customers
        .iter()
        .enumerate()
        .map(|(p, &customer)| Appointment {
            customer,
            w: fixed.appointments[p],
            on_time_rate: rate(fresh.on_time[p], fresh.served[p]),
            all_cancelled: fixed.all_cancelled[p],
        })
        .collect();
    let on_time_rate = rate(fresh.on_time.iter().sum(), fresh.served.iter().sum());
    Ok(RouteSchedule {
        route_id,
        appointments,
        on_time_rate,
        cost_breakdown: route_costs(instance, route, &fresh),
        empirical: fixed.arrivals,
    })
}

/// Schedules every route of a solution; `route_id` is the route's index.
pub fn schedule_solution<T: Scalar, M: StochasticModel<T> + ?Sized>(
    instance: &Instance<T>,
    model: &M,
    solution: &SarSolution<T>,
    config: &ScheduleConfig,
) -> Result<Vec<RouteSchedule<T>>, SchedulerError> {
    solution
        .routes
        .iter()
        .enumerate()
        .map(|(id, r)| schedule_route(instance, model, r, id, config))
        .collect()
}

/// Hiring and expected travel from the routes; overtime, earliness and delay
/// as means over `eval_replicas` fresh replicas per route.
pub fn evaluate_costs<T: Scalar, M: StochasticModel<T> + ?Sized>(
    instance: &Instance<T>,
    model: &M,
    solution: &SarSolution<T>,
    schedules: &[RouteSchedule<T>],
    eval_replicas: usize,
    seed: u64,
) -> Result<CostBreakdown<T>, SchedulerError> {
    if schedules.len() != solution.routes.len() {
        return Err(SchedulerError::Mismatch {
            routes: solution.routes.len(),
            schedules: schedules.len(),
        });
    }
    if eval_replicas == 0 {
        return Err(SchedulerError::NoReplicas);
    }
    let mut total = CostBreakdown::default();
    for (route, schedule) in solution.routes.iter().zip(schedules) {
        check_route(model, schedule.route_id, &route.customers)?;
        if schedule.customers() != route.customers {
            return Err(SchedulerError::Mismatch {
                routes: solution.routes.len(),
                schedules: schedules.len(),
            });
        }
        let trace = simulate_fixed(
            model,
            &route.customers,
            &schedule.appointment_times(),
            eval_replicas,
            seed,
            false,
            false,
        );
        total = total.add(route_costs(instance, route, &trace));
    }
    Ok(total)
}

/// Latest appointment plus that customer's mean service and the mean drive
/// back to the depot.
pub fn scheduled_return_time<T: Scalar>(instance: &Instance<T>, schedule: &RouteSchedule<T>) -> T {
    match schedule.appointments.last() {
        Some(a) => a.w + instance.service(a.customer) + instance.travel(a.customer, 0),
        None => T::zero(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, CostParams, GeneratorParams};
    use crate::split::route_cost;
    use crate::stochastics::calibrate_instance;
    use rand::RngCore;

    /// Point masses at the instance means, with fixed cancellation flags.
    struct Fixed<'a> {
        inst: &'a Instance<f64>,
        cancel: Vec<bool>,
    }

    impl StochasticModel<f64> for Fixed<'_> {
        fn customers(&self) -> usize {
            self.inst.n
        }
        fn travel(&self, i: usize, j: usize, _: &mut dyn RngCore) -> f64 {
            self.inst.travel(i, j)
        }
        fn service(&self, c: usize, _: &mut dyn RngCore) -> f64 {
            self.inst.service(c)
        }
        fn cancels(&self, c: usize, _: &mut dyn RngCore) -> bool {
            self.cancel[c - 1]
        }
    }

    fn line() -> Instance<f64> {
        Instance::from_coords(
            vec![[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [30.0, 0.0]],
            vec![5.0, 5.0, 5.0],
            vec![0.0; 3],
            40.0,
            CostParams {
                cf: 100.0,
                ct: 1.0,
                co: 2.0,
                ce: 1.0,
                cd: 1.0,
            },
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn nearest_rank() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&s, 0.5), 5.0);
        assert_eq!(percentile(&s, 0.0), 1.0);
        assert_eq!(percentile(&s, 1.0), 10.0);
        assert_eq!(percentile(&s, 0.91), 10.0);
        assert_eq!(percentile(&s, 0.05), 1.0);
    }

    #[test]
    fn deterministic_model_fixes_exact_arrivals() {
        let inst = line();
        let model = Fixed {
            inst: &inst,
            cancel: vec![false; 3],
        };
        let route = route_cost(&inst, &[1, 2, 3]).unwrap();
        for alpha in [0.05, 0.5, 0.95] {
            let cfg = ScheduleConfig {
                alpha,
                replicas: 20,
                ..Default::default()
            };
            let s = schedule_route(&inst, &model, &route, 0, &cfg).unwrap();
            assert_eq!(s.appointment_times(), vec![10.0, 25.0, 40.0]);
            assert_eq!(s.on_time_rate, 1.0);
            let cb = s.cost_breakdown;
            // Return at 75, horizon 40.
            assert_eq!(cb.overtime, 70.0);
            assert_eq!(cb.earliness + cb.delay, 0.0);
            assert_eq!(cb.total, 100.0 + 60.0 + 70.0);
            assert_eq!(scheduled_return_time(&inst, &s), 75.0);
        }
    }

    #[test]
    fn cancelled_customer_is_skipped() {
        let inst = line();
        let model = Fixed {
            inst: &inst,
            cancel: vec![false, true, false],
        };
        let route = route_cost(&inst, &[1, 2, 3]).unwrap();
        let cfg = ScheduleConfig {
            replicas: 10,
            ..Default::default()
        };
        let s = schedule_route(&inst, &model, &route, 0, &cfg).unwrap();
        assert_eq!(s.customers(), vec![1, 2, 3]);
        assert!(s.appointments[1].all_cancelled);
        // 1 served at 10..15, then straight to 3 (20 km).
        assert_eq!(s.appointments[2].w, 35.0);
        assert_eq!(s.appointments[1].w, 25.0);
        let trace = simulate_fixed(&model, &[1, 2, 3], &s.appointment_times(), 5, 1, false, true);
        for path in &trace.paths {
            assert_eq!(path, &vec![(0, 1), (1, 3), (3, 0)]);
        }
        assert_eq!(trace.served, vec![5, 0, 5]);
        let discover = simulate_fixed(&model, &[1, 2, 3], &s.appointment_times(), 2, 1, true, true);
        assert_eq!(discover.paths[0], vec![(0, 1), (1, 2), (2, 3), (3, 0)]);
    }

    #[test]
    fn appointments_monotone_in_alpha_and_order() {
        let inst = generate_instance(6, 8, &GeneratorParams::<f64>::default()).unwrap();
        let model = calibrate_instance(&inst).unwrap().model;
        let route = route_cost(&inst, &[3, 1, 5, 2]).unwrap();
        let mut prev: Option<Vec<f64>> = None;
        for alpha in [0.05, 0.25, 0.5, 0.75, 0.95] {
            let cfg = ScheduleConfig {
                alpha,
                replicas: 300,
                seed: 4,
                ..Default::default()
            };
            let s = schedule_route(&inst, &model, &route, 0, &cfg).unwrap();
            let w = s.appointment_times();
            assert!(w.windows(2).all(|x| x[0] <= x[1]));
            if let Some(p) = prev {
                assert!(p.iter().zip(&w).all(|(a, b)| a <= b), "{p:?} {w:?}");
            }
            prev = Some(w);
        }
    }

    #[test]
    fn route_order_does_not_matter() {
        let inst = generate_instance(6, 3, &GeneratorParams::<f64>::default()).unwrap();
        let model = calibrate_instance(&inst).unwrap().model;
        let a = route_cost(&inst, &[1, 2, 3]).unwrap();
        let b = route_cost(&inst, &[6, 5, 4]).unwrap();
        let cfg = ScheduleConfig::default();
        let x = schedule_route(&inst, &model, &a, 0, &cfg).unwrap();
        let y = schedule_route(&inst, &model, &b, 0, &cfg).unwrap();
        let y2 = schedule_route(&inst, &model, &b, 1, &cfg).unwrap();
        let x2 = schedule_route(&inst, &model, &a, 1, &cfg).unwrap();
        assert_eq!(x.appointments, x2.appointments);
        assert_eq!(y.appointments, y2.appointments);
    }

    #[test]
    fn earliness_and_delay_exclusive_per_customer() {
        let inst = generate_instance(5, 12, &GeneratorParams::<f64>::default()).unwrap();
        let model = calibrate_instance(&inst).unwrap().model;
        let w = [20.0, 60.0, 110.0];
        let trace = simulate_fixed(&model, &[2, 4, 1], &w, 200, 9, false, false);
        for (e, d) in trace.earliness.iter().zip(&trace.delay) {
            assert!(*e >= 0.0 && *d >= 0.0);
        }
        assert_eq!(trace.returns.len(), 200);
    }

    #[test]
    fn evaluation_covers_solution() {
        let inst = generate_instance(6, 5, &GeneratorParams::<f64>::default()).unwrap();
        let model = calibrate_instance(&inst).unwrap().model;
        let sol = crate::colgen::run_colgen(&inst, &crate::colgen::ColGenConfig::default()).unwrap();
        let cfg = ScheduleConfig::default();
        let schedules = schedule_solution(&inst, &model, &sol, &cfg).unwrap();
        let cb = evaluate_costs(&inst, &model, &sol, &schedules, 500, 77).unwrap();
        assert!((cb.hiring - 100.0 * sol.routes.len() as f64).abs() < 1e-9);
        let travel: f64 = sol.routes.iter().map(|r| r.travel_time).sum();
        assert!((cb.travel - travel).abs() < 1e-9);
        let parts = cb.hiring + cb.travel + cb.overtime + cb.earliness + cb.delay;
        assert!((cb.total - parts).abs() < 1e-9);
        assert!(cb.overtime >= 0.0 && cb.earliness >= 0.0 && cb.delay >= 0.0);
        assert_eq!(
            evaluate_costs(&inst, &model, &sol, &schedules[..0], 10, 1).unwrap_err(),
            SchedulerError::Mismatch {
                routes: sol.routes.len(),
                schedules: 0
            }
        );
        let json = serde_json::to_value(&schedules[0]).unwrap();
        for key in ["route_id", "appointments", "on_time_rate", "cost_breakdown"] {
            assert!(json.get(key).is_some());
        }
        assert!(json["appointments"][0].get("w").is_some());
    }

    #[test]
    fn bad_config_rejected() {
        let inst = line();
        let model = calibrate_instance(&inst).unwrap().model;
        let route = route_cost(&inst, &[1]).unwrap();
        let bad = ScheduleConfig {
            alpha: 1.2,
            ..Default::default()
        };
        assert_eq!(
            schedule_route(&inst, &model, &route, 0, &bad).unwrap_err(),
            SchedulerError::BadAlpha(1.2)
        );
        let none = ScheduleConfig {
            replicas: 0,
            ..Default::default()
        };
        assert_eq!(schedule_route(&inst, &model, &route, 0, &none).unwrap_err(), SchedulerError::NoReplicas);
    }
}
