//! Documents exchanged over HTTP and persisted on disk.

use hsara_core::{CostBreakdown, GeneratorParams, Instance, Method, RouteSchedule, SarSolution};
use serde::{Deserialize, Deserializer, Serialize};
use uuid::Uuid;

pub const SCHEMA_VERSION: u32 = 1;

/// Declared in this order so that `Ord` follows the only legal direction
/// of travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }

    pub fn can_become(self, next: JobStatus) -> bool {
        !self.is_terminal() && next > self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub schema_version: u32,
    pub id: Uuid,
    /// Instance this one was cut from by a what-if request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<Uuid>,
    /// Customer numbers in `parent` for customers `1..=n` here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_customers: Option<Vec<usize>>,
    /// Generator call that produced the instance, when it was generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated: Option<GenerateSpec>,
    pub instance: Instance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub params: GeneratorParams,
}

/// Body of `POST /instances`: either `{"generate": {...}}` or a full instance.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum InstanceBody {
    Generate { generate: GenerateSpec },
    Explicit(Box<Instance>),
}

fn method_from_str<'de, D: Deserializer<'de>>(d: D) -> Result<Method, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn default_method() -> Method {
    Method::Heuristic
}

fn default_alpha() -> f64 {
    0.5
}

fn default_replicas() -> usize {
    100
}

/// Solver and scheduler settings of one job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    #[serde(default = "default_method", deserialize_with = "method_from_str")]
    pub method: Method,
    /// Seconds; `null` or absent is unlimited.
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            method: default_method(),
            t_max: None,
            alpha: default_alpha(),
            replicas: default_replicas(),
            seed: 0,
        }
    }
}

impl SolveParams {
    pub fn validate(&self) -> Result<(), String> {
        if let Some(t) = self.t_max {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(format!("t_max must be a non-negative number of seconds, got {t}"));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.replicas == 0 {
            return Err("replicas must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    pub instance_id: Uuid,
    #[serde(default = "default_method", deserialize_with = "method_from_str")]
    pub method: Method,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SolveRequest {
    pub fn params(&self) -> SolveParams {
        SolveParams {
            method: self.method,
            t_max: self.t_max,
            alpha: self.alpha,
            replicas: self.replicas,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub co: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Customers of the base instance to keep, in the order given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub customer_subset: Option<Vec<usize>>,
}

impl WhatIfOverrides {
    pub fn touches_instance(&self) -> bool {
        self.cf.is_some() || self.ct.is_some() || self.co.is_some() || self.customer_subset.is_some()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub base_job_id: Uuid,
    #[serde(default)]
    pub overrides: WhatIfOverrides,
}

/// One state of a job. The on-disk log holds every state in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub schema_version: u32,
    pub id: Uuid,
    pub instance_id: Uuid,
    pub params: SolveParams,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_job_id: Option<Uuid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides: Option<WhatIfOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobResult {
    pub schema_version: u32,
    pub job_id: Uuid,
    pub solution: SarSolution,
    pub schedules: Vec<RouteSchedule>,
    pub cost_breakdown: CostBreakdown,
    /// Arcs whose travel variance was clamped to zero during calibration.
    pub clamped_arcs: usize,
}

/// Response of `GET /jobs/{id}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct JobView {
    pub schema_version: u32,
    pub job: JobRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<JobResult>,
}
