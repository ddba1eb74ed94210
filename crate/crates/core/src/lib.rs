//! Solver engine for home-service fleet sizing, routing and appointment
//! scheduling.
//!
//! The deterministic stage chooses routes by column generation over a
//! set-covering master problem ([`colgen`]), seeded by a giant tour
//! ([`tsp`]) split into routes ([`split`]) and extended by exact or
//! split-based pricing ([`pricing`]). The stochastic stage calibrates
//! travel, service and cancellation distributions ([`stochastics`]) and
//! fixes appointment times by simulation ([`scheduler`]).
//!
//! Every numerical type is generic over [`num::Scalar`] (`f32` or `f64`);
//! the aliases below fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod colgen;
pub mod instance;
pub mod milp;
pub mod num;
pub mod pricing;
pub mod scheduler;
pub mod split;
pub mod stochastics;
pub mod tsp;

pub use colgen::{gap, run_colgen, sar_oracle, ColGenConfig, Method};
pub use num::Scalar;
pub use scheduler::ScheduleConfig;

pub type Instance = instance::Instance<f64>;
pub type CostParams = instance::CostParams<f64>;
pub type GeneratorParams = instance::GeneratorParams<f64>;
pub type Route = split::Route<f64>;
pub type GiantTour = tsp::GiantTour<f64>;
pub type SarSolution = colgen::SarSolution<f64>;
pub type CalibratedModel = stochastics::CalibratedModel<f64>;
pub type RouteSchedule = scheduler::RouteSchedule<f64>;
pub type CostBreakdown = scheduler::CostBreakdown<f64>;
pub type LinearProgram = milp::LinearProgram<f64>;
pub type LpSolution = milp::LpSolution<f64>;
pub type IpSolution = milp::IpSolution<f64>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Instance(#[from] instance::InstanceError),
    #[error(transparent)]
    Route(#[from] split::RouteError),
    #[error(transparent)]
    Lp(#[from] milp::LpError),
    #[error(transparent)]
    Pricing(#[from] pricing::PricingError),
    #[error(transparent)]
    ColGen(#[from] colgen::ColGenError),
    #[error(transparent)]
    Stochastics(#[from] stochastics::StochasticsError),
    #[error(transparent)]
    Scheduler(#[from] scheduler::SchedulerError),
}
