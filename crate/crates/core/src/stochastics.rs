//! Moment-based calibration of travel, service and cancellation
//! distributions, and samplers for the simulation stage.
//!
//! Travel times are lognormal per arc, service times exponential with one
//! pooled rate, cancellations Bernoulli per customer. Each family is fitted
//! through [`MethodOfMoments`], which maps `[mean, variance]` to parameters.

use crate::instance::Instance;
use crate::num::Scalar;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Intercept and slope of the standard deviation of travel time as a
/// linear function of its mean.
pub const STDDEV_INTERCEPT: f64 = -0.4736;
pub const STDDEV_SLOPE: f64 = 0.9936;

#[derive(Debug, Error, PartialEq)]
pub enum StochasticsError {
    #[error("mean must be positive, got {0}")]
    NonPositiveMean(f64),
    #[error("variance must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("probability must lie in [0, 1], got {0}")]
    BadProbability(f64),
    #[error("expected {expected} moments, got {found}")]
    MomentCount { expected: usize, found: usize },
    #[error("travel mean of arc ({0}, {1}) must be positive")]
    ZeroArc(usize, usize),
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
}

/// Standard deviation predicted from a mean, clamped at zero for small means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate<T> {
    pub variance: T,
    /// The linear relation gave a negative standard deviation.
    pub clamped: bool,
}

pub fn variance_from_mean<T: Scalar>(t_hat: T) -> VarianceEstimate<T> {
    let sd = T::of(STDDEV_INTERCEPT) + T::of(STDDEV_SLOPE) * t_hat;
    if sd < T::zero() {
        VarianceEstimate {
            variance: T::zero(),
            clamped: true,
        }
    } else {
        VarianceEstimate {
            variance: sd * sd,
            clamped: false,
        }
    }
}

/// A distribution family fitted by matching its first moments.
pub trait MethodOfMoments<T: Scalar>: Sized {
    /// Number of moments consumed by [`fit`](Self::fit).
    const MOMENTS: usize;

    /// Parameters from sample moments `[mean, variance, ...]`.
    fn fit(moments: &[T]) -> Result<Self, StochasticsError>;

    /// Analytic moments of the fitted distribution, same layout as `fit`.
    fn moments(&self) -> Vec<T>;
}

fn expect_moments<T>(moments: &[T], expected: usize) -> Result<(), StochasticsError> {
    if moments.len() == expected {
        Ok(())
    } else {
        Err(StochasticsError::MomentCount {
            expected,
            found: moments.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LogNormalParams<T> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Scalar> MethodOfMoments<T> for LogNormalParams<T> {
    const MOMENTS: usize = 2;

    fn fit(moments: &[T]) -> Result<Self, StochasticsError> {
        expect_moments(moments, 2)?;
        let (mean, var) = (moments[0], moments[1]);
        if !(mean > T::zero()) {
            return Err(StochasticsError::NonPositiveMean(mean.as_f64()));
        }
        if !(var >= T::zero()) {
            return Err(StochasticsError::NegativeVariance(var.as_f64()));
        }
        let m2 = mean * mean;
        Ok(Self {
            mu: (m2 / (var + m2).sqrt()).ln(),
            sigma: (var / m2).ln_1p().sqrt(),
        })
    }

    fn moments(&self) -> Vec<T> {
        let s2 = self.sigma * self.sigma;
        let mean = (self.mu + s2 / T::of(2.0)).exp();
        vec![mean, s2.exp_m1() * mean * mean]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ExponentialParams<T> {
    pub lambda: T,
}

impl<T: Scalar> MethodOfMoments<T> for ExponentialParams<T> {
    const MOMENTS: usize = 1;

    fn fit(moments: &[T]) -> Result<Self, StochasticsError> {
        expect_moments(moments, 1)?;
        if !(moments[0] > T::zero()) {
            return Err(StochasticsError::NonPositiveMean(moments[0].as_f64()));
        }
        Ok(Self {
            lambda: moments[0].recip(),
        })
    }

    fn moments(&self) -> Vec<T> {
        vec![self.lambda.recip()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BernoulliParams<T> {
    pub gamma: T,
}

impl<T: Scalar> MethodOfMoments<T> for BernoulliParams<T> {
    const MOMENTS: usize = 1;

    fn fit(moments: &[T]) -> Result<Self, StochasticsError> {
        expect_moments(moments, 1)?;
        let p = moments[0];
        if !(p >= T::zero() && p <= T::one()) {
            return Err(StochasticsError::BadProbability(p.as_f64()));
        }
        Ok(Self { gamma: p })
    }

    fn moments(&self) -> Vec<T> {
        vec![self.gamma]
    }
}

/// `(mu, sigma)` of the lognormal with mean `t_hat` and variance `v_hat`.
pub fn lognormal_from_moments<T: Scalar>(t_hat: T, v_hat: T) -> Result<(T, T), StochasticsError> {
    let p = LogNormalParams::fit(&[t_hat, v_hat])?;
    Ok((p.mu, p.sigma))
}

pub fn exponential_from_mean<T: Scalar>(s_hat: T) -> Result<T, StochasticsError> {
    Ok(ExponentialParams::fit(&[s_hat])?.lambda)
}

pub fn bernoulli_from_estimate<T: Scalar>(p_hat: T) -> Result<T, StochasticsError> {
    Ok(BernoulliParams::fit(&[p_hat])?.gamma)
}

/// Sample moments the calibration starts from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MomentEstimates<T> {
    /// Mean travel minutes per arc over nodes `0..=n`.
    pub t_hat: Vec<Vec<T>>,
    /// Travel variance per arc; derived from `t_hat` when absent.
    pub v_hat: Option<Vec<Vec<T>>>,
    /// Mean service minutes, pooled over customers.
    pub s_hat: T,
    /// Cancellation probability per customer.
    pub p_hat: Vec<T>,
}

impl<T: Scalar> MomentEstimates<T> {
    pub fn from_instance(instance: &Instance<T>) -> Self {
        let s_hat = instance.service_mean.iter().copied().sum::<T>() / T::of_usize(instance.n);
        Self {
            t_hat: instance.travel_mean.clone(),
            v_hat: None,
            s_hat,
            p_hat: instance.cancel_prob.clone(),
        }
    }
}

/// Fitted parameters. Diagonal entries of `mu` and `sigma` are `0` and unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CalibratedModel<T> {
    pub mu: Vec<Vec<T>>,
    pub sigma: Vec<Vec<T>>,
    pub lambda: T,
    pub gamma: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Calibration<T> {
    pub model: CalibratedModel<T>,
    /// Arcs whose predicted standard deviation was negative and set to zero.
    pub clamped_arcs: Vec<(usize, usize)>,
}

pub fn calibrate<T: Scalar>(estimates: &MomentEstimates<T>) -> Result<Calibration<T>, StochasticsError> {
    let size = estimates.t_hat.len();
    if size < 2 || estimates.t_hat.iter().any(|r| r.len() != size) {
        return Err(StochasticsError::Dimension("travel means must be a square matrix over depot and customers"));
    }
    if estimates.p_hat.len() != size - 1 {
        return Err(StochasticsError::Dimension("one cancellation estimate per customer"));
    }
    if let Some(v) = &estimates.v_hat {
        if v.len() != size || v.iter().any(|r| r.len() != size) {
            return Err(StochasticsError::Dimension("travel variances must match travel means"));
        }
    }
    let mut mu = vec![vec![T::zero(); size]; size];
    let mut sigma = vec![vec![T::zero(); size]; size];
    let mut clamped_arcs = Vec::new();
    for i in 0..size {
        for j in 0..size {
            if i == j {
                continue;
            }
            let t = estimates.t_hat[i][j];
            if !(t > T::zero()) {
                return Err(StochasticsError::ZeroArc(i, j));
            }
            let v = match &estimates.v_hat {
                Some(v) => v[i][j],
                None => {
                    let est = variance_from_mean(t);
                    if est.clamped {
                        clamped_arcs.push((i, j));
                    }
                    est.variance
                }
            };
            let p = LogNormalParams::fit(&[t, v])?;
            mu[i][j] = p.mu;
            sigma[i][j] = p.sigma;
        }
    }
    let lambda = exponential_from_mean(estimates.s_hat)?;
    let gamma = estimates
        .p_hat
        .iter()
        .map(|&p| bernoulli_from_estimate(p))
        .collect::<Result<_, _>>()?;
    Ok(Calibration {
        model: CalibratedModel {
            mu,
            sigma,
            lambda,
            gamma,
        },
        clamped_arcs,
    })
}

pub fn calibrate_instance<T: Scalar>(instance: &Instance<T>) -> Result<Calibration<T>, StochasticsError> {
    calibrate(&MomentEstimates::from_instance(instance))
}

/// Random travel, service and cancellation outcomes for the simulation.
pub trait StochasticModel<T: Scalar> {
    /// Number of customers.
    fn customers(&self) -> usize;
    /// Travel minutes from node `i` to node `j` (`0` is the depot).
    fn travel(&self, i: usize, j: usize, rng: &mut dyn RngCore) -> T;
    fn service(&self, customer: usize, rng: &mut dyn RngCore) -> T;
    fn cancels(&self, customer: usize, rng: &mut dyn RngCore) -> bool;
}

impl<T: Scalar> StochasticModel<T> for CalibratedModel<T> {
    fn customers(&self) -> usize {
        self.gamma.len()
    }

    fn travel(&self, i: usize, j: usize, rng: &mut dyn RngCore) -> T {
        if i == j {
            return T::zero();
        }
        let (mu, sigma) = (self.mu[i][j].as_f64(), self.sigma[i][j].as_f64());
        if sigma == 0.0 {
            return T::of(mu.exp());
        }
        let d = LogNormal::new(mu, sigma).expect("calibrated lognormal parameters");
        T::of(d.sample(rng))
    }

    fn service(&self, _customer: usize, rng: &mut dyn RngCore) -> T {
        let d = Exp::new(self.lambda.as_f64()).expect("positive service rate");
        T::of(d.sample(rng))
    }

    fn cancels(&self, customer: usize, rng: &mut dyn RngCore) -> bool {
        let d = Bernoulli::new(self.gamma[customer - 1].as_f64()).expect("probability in [0, 1]");
        d.sample(rng)
    }
}

/// One joint draw of every random quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization<T> {
    pub travel: Vec<Vec<T>>,
    /// Service minutes, customer `i` at index `i - 1`.
    pub service: Vec<T>,
    pub cancelled: Vec<bool>,
}

pub fn sample<T: Scalar, M: StochasticModel<T> + ?Sized>(model: &M, seed: u64) -> Realization<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.customers();
    let travel = (0..=n)
        .map(|i| (0..=n).map(|j| model.travel(i, j, &mut rng)).collect())
        .collect();
    let service = (1..=n).map(|c| model.service(c, &mut rng)).collect();
    let cancelled = (1..=n).map(|c| model.cancels(c, &mut rng)).collect();
    Realization {
        travel,
        service,
        cancelled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, GeneratorParams};

    #[test]
    fn variance_relation() {
        let v = variance_from_mean(10.0_f64);
        assert!((v.variance - 89.537).abs() < 1e-3);
        assert!(!v.clamped);
        assert!((variance_from_mean(1.0_f64).variance - 0.2704).abs() < 1e-12);
        assert!(variance_from_mean(0.4767_f64).variance < 1e-8);
        let low = variance_from_mean(0.1_f64);
        assert!(low.clamped);
        assert_eq!(low.variance, 0.0);
    }

    #[test]
    fn lognormal_closed_form() {
        let (mu, sigma) = lognormal_from_moments(10.0_f64, 4.0).unwrap();
        assert!((mu - 2.28297).abs() < 1e-5);
        assert!((sigma - 0.19804).abs() < 1e-5);
        let (mu, sigma) = lognormal_from_moments(1.0_f64, 1.0).unwrap();
        let ln2 = 2.0_f64.ln();
        assert!((sigma - ln2.sqrt()).abs() < 1e-12);
        assert!((mu + 0.5 * ln2).abs() < 1e-12);
        let (mu, sigma) = lognormal_from_moments(7.0_f64, 0.0).unwrap();
        assert_eq!(sigma, 0.0);
        assert!((mu - 7.0_f64.ln()).abs() < 1e-15);
        assert!(lognormal_from_moments(0.0_f64, 1.0).is_err());
        assert!(lognormal_from_moments(1.0_f64, -1.0).is_err());
    }

    #[test]
    fn moment_round_trip() {
        for &(t, v) in &[(10.0, 4.0), (1.0, 1.0), (55.3, 2900.0), (0.7, 0.01)] {
            let p = LogNormalParams::<f64>::fit(&[t, v]).unwrap();
            let m = p.moments();
            assert!((m[0] - t).abs() / t < 1e-9);
            assert!((m[1] - v).abs() / v < 1e-9);
        }
    }

    #[test]
    fn simple_families() {
        assert!((exponential_from_mean(45.0_f64).unwrap() - 1.0 / 45.0).abs() < 1e-18);
        assert_eq!(exponential_from_mean(1.0_f64).unwrap(), 1.0);
        assert!(exponential_from_mean(0.0_f64).is_err());
        assert_eq!(bernoulli_from_estimate(0.1_f64).unwrap(), 0.1);
        assert_eq!(bernoulli_from_estimate(0.0_f64).unwrap(), 0.0);
        assert_eq!(bernoulli_from_estimate(1.0_f64).unwrap(), 1.0);
        assert!(bernoulli_from_estimate(1.5_f64).is_err());
        assert_eq!(
            ExponentialParams::<f64>::fit(&[1.0, 2.0]),
            Err(StochasticsError::MomentCount { expected: 1, found: 2 })
        );
    }

    #[test]
    fn calibrate_generated_instance() {
        let inst = generate_instance(6, 2, &GeneratorParams::<f64>::default()).unwrap();
        let cal = calibrate_instance(&inst).unwrap();
        let m = &cal.model;
        let s_hat = inst.service_mean.iter().sum::<f64>() / 6.0;
        assert!((m.lambda - 1.0 / s_hat).abs() < 1e-15);
        assert_eq!(m.gamma, inst.cancel_prob);
        for i in 0..=6 {
            for j in 0..=6 {
                if i != j {
                    let t = inst.travel(i, j);
                    let back = LogNormalParams {
                        mu: m.mu[i][j],
                        sigma: m.sigma[i][j],
                    }
                    .moments();
                    assert!((back[0] - t).abs() / t < 1e-9);
                    assert!((back[1] - variance_from_mean(t).variance).abs() < 1e-6);
                }
            }
        }
        let json = serde_json::to_value(m).unwrap();
        for key in ["mu", "sigma", "lambda", "gamma"] {
            assert!(json.get(key).is_some());
        }
    }

    #[test]
    fn explicit_variances_are_used() {
        let est: MomentEstimates<f64> = MomentEstimates {
            t_hat: vec![vec![0.0, 10.0], vec![10.0, 0.0]],
            v_hat: Some(vec![vec![0.0, 4.0], vec![4.0, 0.0]]),
            s_hat: 45.0,
            p_hat: vec![0.2],
        };
        let m = calibrate(&est).unwrap().model;
        assert!((m.sigma[0][1] - 0.19804).abs() < 1e-5);
    }

    #[test]
    fn zero_off_diagonal_rejected() {
        let est: MomentEstimates<f64> = MomentEstimates {
            t_hat: vec![vec![0.0, 0.0], vec![10.0, 0.0]],
            v_hat: None,
            s_hat: 45.0,
            p_hat: vec![0.2],
        };
        assert_eq!(calibrate(&est).unwrap_err(), StochasticsError::ZeroArc(0, 1));
    }

    #[test]
    fn sampling_is_seeded_and_degenerate_cases_hold() {
        let model = CalibratedModel {
            mu: vec![vec![0.0, 3.0_f64.ln()], vec![3.0_f64.ln(), 0.0]],
            sigma: vec![vec![0.0; 2]; 2],
            lambda: 1.0 / 45.0,
            gamma: vec![1.0],
        };
        let a: Realization<f64> = sample(&model, 5);
        assert_eq!(a, sample(&model, 5));
        assert!((a.travel[0][1] - 3.0).abs() < 1e-12);
        assert_eq!(a.travel[1][1], 0.0);
        assert!(a.cancelled[0]);
        assert_ne!(sample(&model, 6).service, a.service);
    }

    #[test]
    fn service_sample_mean() {
        let model = CalibratedModel {
            mu: vec![vec![0.0; 2]; 2],
            sigma: vec![vec![0.0; 2]; 2],
            lambda: 1.0 / 45.0,
            gamma: vec![0.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = 100_000;
        let mean: f64 = (0..k).map(|_| model.service(1, &mut rng)).sum::<f64>() / k as f64;
        assert!((mean - 45.0).abs() / 45.0 < 0.02, "{mean}");
    }

    #[test]
    fn f32_calibration() {
        let (mu, sigma) = lognormal_from_moments(10.0_f32, 4.0).unwrap();
        assert!((mu - 2.28297).abs() < 1e-4);
        assert!((sigma - 0.19804).abs() < 1e-4);
    }
}
