//! Problem data: depot, customers, expected travel and service times,
//! cancellation probabilities, shift length and cost coefficients.
//!
//! Node `0` is the depot. Customers are `1..=n`. The depot is not duplicated
//! as a sink node; arcs back to the depot read column `0` of the travel
//! matrix.

use crate::num::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("instance must contain at least one customer")]
    NoCustomers,
    #[error("{what}: expected length {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("travel time t[{i}][{j}] = {value} is negative or not finite")]
    BadTravel { i: usize, j: usize, value: f64 },
    #[error("travel time t[{i}][{i}] = {value} must be zero")]
    NonZeroDiagonal { i: usize, value: f64 },
    #[error("triangle inequality violated: t[{i}][{k}] > t[{i}][{j}] + t[{j}][{k}]")]
    Triangle { i: usize, j: usize, k: usize },
    #[error("service time of customer {customer} is {value}, must be non-negative")]
    BadService { customer: usize, value: f64 },
    #[error("cancellation probability of customer {customer} is {value}, must lie in [0, 1]")]
    BadCancelProb { customer: usize, value: f64 },
    #[error("shift length L = {0} must be positive")]
    BadHorizon(f64),
    #[error("cost coefficient {name} = {value} must be non-negative")]
    BadCost { name: &'static str, value: f64 },
    #[error("customer {0} is not part of the instance")]
    UnknownCustomer(usize),
    #[error("customer {0} listed twice")]
    DuplicateCustomer(usize),
    #[error("invalid generator parameters: {0}")]
    Generator(&'static str),
    #[error("instance file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("travel matrix csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Cost coefficients, all per team or per minute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CostParams<T> {
    /// Fixed hiring cost per team.
    pub cf: T,
    /// Travel cost per minute.
    pub ct: T,
    /// Overtime cost per minute beyond the shift length.
    pub co: T,
    /// Earliness cost per minute (team waits for the appointment).
    pub ce: T,
    /// Delay cost per minute (customer waits for the team).
    pub cd: T,
}

impl<T: Scalar> Default for CostParams<T> {
    fn default() -> Self {
        Self {
            cf: T::of(100.0),
            ct: T::one(),
            co: T::of(2.0),
            ce: T::one(),
            cd: T::one(),
        }
    }
}

impl<T: Scalar> CostParams<T> {
    pub fn validate(&self) -> Result<(), InstanceError> {
        for (name, value) in [
            ("cf", self.cf),
            ("ct", self.ct),
            ("co", self.co),
            ("ce", self.ce),
            ("cd", self.cd),
        ] {
            if !(value >= T::zero()) || !value.is_finite() {
                return Err(InstanceError::BadCost {
                    name,
                    value: value.as_f64(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Instance<T> {
    pub n: usize,
    /// Planar coordinates in km, index 0 is the depot.
    pub coords: Vec<[T; 2]>,
    /// Expected travel minutes between nodes `0..=n`.
    pub travel_mean: Vec<Vec<T>>,
    /// Expected service minutes, one entry per customer (customer `i` at index `i - 1`).
    pub service_mean: Vec<T>,
    /// Cancellation probability, one entry per customer.
    pub cancel_prob: Vec<T>,
    #[serde(rename = "L")]
    pub horizon: T,
    pub costs: CostParams<T>,
}

impl<T: Scalar> Instance<T> {
    /// Builds an instance from planar coordinates; travel minutes are
    /// Euclidean distance divided by `speed` (km per minute).
    pub fn from_coords(
        coords: Vec<[T; 2]>,
        service_mean: Vec<T>,
        cancel_prob: Vec<T>,
        horizon: T,
        costs: CostParams<T>,
        speed: T,
    ) -> Result<Self, InstanceError> {
        if coords.len() < 2 {
            return Err(InstanceError::NoCustomers);
        }
        if !(speed > T::zero()) {
            return Err(InstanceError::Generator("speed must be positive"));
        }
        let n = coords.len() - 1;
        let travel_mean = (0..=n)
            .map(|i| {
                (0..=n)
                    .map(|j| {
                        if i == j {
                            T::zero()
                        } else {
                            let dx = coords[i][0] - coords[j][0];
                            let dy = coords[i][1] - coords[j][1];
                            dx.hypot(dy) / speed
                        }
                    })
                    .collect()
            })
            .collect();
        let instance = Self {
            n,
            coords,
            travel_mean,
            service_mean,
            cancel_prob,
            horizon,
            costs,
        };
        instance.validate_basic()?;
        Ok(instance)
    }

    #[inline]
    pub fn customers(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.n
    }

    /// Expected travel minutes between physical nodes `0..=n`.
    #[inline]
    pub fn travel(&self, i: usize, j: usize) -> T {
        self.travel_mean[i][j]
    }

    /// Expected service minutes of customer `i` (`1..=n`).
    #[inline]
    pub fn service(&self, i: usize) -> T {
        self.service_mean[i - 1]
    }

    #[inline]
    pub fn cancel(&self, i: usize) -> T {
        self.cancel_prob[i - 1]
    }

    /// Checks every invariant, including the triangle inequality (cubic in `n`).
    pub fn validate(&self) -> Result<(), InstanceError> {
        self.validate_basic()?;
        self.check_triangle_inequality()
    }

    fn validate_basic(&self) -> Result<(), InstanceError> {
        let n = self.n;
        if n == 0 {
            return Err(InstanceError::NoCustomers);
        }
        let dim = |what, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(InstanceError::Dimension {
                    what,
                    expected,
                    found,
                })
            }
        };
        dim("coords", n + 1, self.coords.len())?;
        dim("travel_mean rows", n + 1, self.travel_mean.len())?;
        dim("service_mean", n, self.service_mean.len())?;
        dim("cancel_prob", n, self.cancel_prob.len())?;
        for (i, row) in self.travel_mean.iter().enumerate() {
            dim("travel_mean row", n + 1, row.len())?;
            for (j, &t) in row.iter().enumerate() {
                if !(t >= T::zero()) || !t.is_finite() {
                    return Err(InstanceError::BadTravel {
                        i,
                        j,
                        value: t.as_f64(),
                    });
                }
                if i == j && t != T::zero() {
                    return Err(InstanceError::NonZeroDiagonal {
                        i,
                        value: t.as_f64(),
                    });
                }
            }
        }
        for (k, &s) in self.service_mean.iter().enumerate() {
            if !(s >= T::zero()) || !s.is_finite() {
                return Err(InstanceError::BadService {
                    customer: k + 1,
                    value: s.as_f64(),
                });
            }
        }
        for (k, &p) in self.cancel_prob.iter().enumerate() {
            if !(p >= T::zero() && p <= T::one()) {
                return Err(InstanceError::BadCancelProb {
                    customer: k + 1,
                    value: p.as_f64(),
                });
            }
        }
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(InstanceError::BadHorizon(self.horizon.as_f64()));
        }
        self.costs.validate()
    }

    pub fn check_triangle_inequality(&self) -> Result<(), InstanceError> {
        let slack = T::epsilon() * T::of(16.0);
        let m = self.n + 1;
        for i in 0..m {
            for j in 0..m {
                let tij = self.travel_mean[i][j];
                for k in 0..m {
                    let via = tij + self.travel_mean[j][k];
                    if self.travel_mean[i][k] > via + slack * (via + T::one()) {
                        return Err(InstanceError::Triangle { i, j, k });
                    }
                }
            }
        }
        Ok(())
    }

    /// Copy of the instance with only the listed customers, renumbered
    /// `1..=len` in the given order.
    pub fn restrict(&self, customers: &[usize]) -> Result<Self, InstanceError> {
        if customers.is_empty() {
            return Err(InstanceError::NoCustomers);
        }
        let mut seen = vec![false; self.n + 1];
        for &c in customers {
            if c == 0 || c > self.n {
                return Err(InstanceError::UnknownCustomer(c));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(InstanceError::DuplicateCustomer(c));
            }
        }
        let nodes: Vec<usize> = std::iter::once(0).chain(customers.iter().copied()).collect();
        Ok(Self {
            n: customers.len(),
            coords: nodes.iter().map(|&v| self.coords[v]).collect(),
            travel_mean: nodes
                .iter()
                .map(|&a| nodes.iter().map(|&b| self.travel_mean[a][b]).collect())
                .collect(),
            service_mean: customers.iter().map(|&c| self.service(c)).collect(),
            cancel_prob: customers.iter().map(|&c| self.cancel(c)).collect(),
            horizon: self.horizon,
            costs: self.costs,
        })
    }

    /// Replaces the travel matrix, e.g. with one imported from CSV.
    pub fn with_travel_matrix(mut self, travel_mean: Vec<Vec<T>>) -> Result<Self, InstanceError> {
        self.travel_mean = travel_mean;
        self.validate()?;
        Ok(self)
    }
}

/// Parameters of the random instance generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", default)]
pub struct GeneratorParams<T> {
    /// Edge of the square (km) centred on the depot.
    pub square_edge: T,
    /// Travel speed in km per minute.
    pub speed: T,
    pub service_min: T,
    pub service_max: T,
    pub horizon: T,
    pub cancel_prob: T,
    pub costs: CostParams<T>,
}

impl<T: Scalar> Default for GeneratorParams<T> {
    fn default() -> Self {
        Self {
            square_edge: T::of(50.0),
            speed: T::one(),
            service_min: T::of(30.0),
            service_max: T::of(60.0),
            horizon: T::of(250.0),
            cancel_prob: T::of(0.1),
            costs: CostParams::default(),
        }
    }
}

/// Uniform customers in a square centred on the depot at the origin.
/// Deterministic for a given seed.
pub fn generate_instance<T: Scalar>(
    n: usize,
    seed: u64,
    params: &GeneratorParams<T>,
) -> Result<Instance<T>, InstanceError> {
    if n == 0 {
        return Err(InstanceError::NoCustomers);
    }
    let half = params.square_edge.as_f64() / 2.0;
    let (smin, smax) = (params.service_min.as_f64(), params.service_max.as_f64());
    if !(half > 0.0) {
        return Err(InstanceError::Generator("square edge must be positive"));
    }
    if !(smin >= 0.0 && smax >= smin) {
        return Err(InstanceError::Generator("service range must satisfy 0 <= min <= max"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(n + 1);
    coords.push([T::zero(), T::zero()]);
    for _ in 0..n {
        let x = rng.random_range(-half..=half);
        let y = rng.random_range(-half..=half);
        coords.push([T::of(x), T::of(y)]);
    }
    let service_mean = (0..n)
        .map(|_| T::of(if smax > smin { rng.random_range(smin..=smax) } else { smin }))
        .collect();
    Instance::from_coords(
        coords,
        service_mean,
        vec![params.cancel_prob; n],
        params.horizon,
        params.costs,
        params.speed,
    )
}

pub fn read_instance<T: Scalar>(path: impl AsRef<Path>) -> Result<Instance<T>, InstanceError> {
    let reader = BufReader::new(File::open(path)?);
    let instance: Instance<T> = serde_json::from_reader(reader)?;
    instance.validate()?;
    Ok(instance)
}

pub fn write_instance<T: Scalar>(
    instance: &Instance<T>,
    path: impl AsRef<Path>,
) -> Result<(), InstanceError> {
    let writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(writer, instance)?;
    Ok(())
}

/// Reads a header-free, row-major CSV travel matrix.
pub fn read_travel_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<Vec<T>>, InstanceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize::<Vec<f64>>() {
        rows.push(record?.into_iter().map(T::of).collect());
    }
    Ok(rows)
}
