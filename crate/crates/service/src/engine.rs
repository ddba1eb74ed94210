//! Job execution: one solve pipeline, and a bounded worker pool fed by a
//! FIFO queue.

use crate::model::{JobResult, JobStatus, SolveParams, SCHEMA_VERSION};
use crate::store::Store;
use hsara_core::scheduler::{evaluate_costs, schedule_solution};
use hsara_core::stochastics::calibrate_instance;
use hsara_core::{run_colgen, ColGenConfig, Instance, ScheduleConfig};
use std::sync::Arc;
use std::time::Duration;
use tokio::sync::{mpsc, Mutex};
use uuid::Uuid;

/// Routes, schedules and expected costs for one instance.
pub fn run_job(job_id: Uuid, instance: &Instance, params: &SolveParams) -> Result<JobResult, hsara_core::Error> {
    let colgen = ColGenConfig {
        t_max: params.t_max,
        ..ColGenConfig::new(params.method)
    };
    let solution = run_colgen(instance, &colgen)?;
    let calibration = calibrate_instance(instance)?;
    let schedule = ScheduleConfig {
        alpha: params.alpha,
        replicas: params.replicas,
        seed: params.seed,
        ..ScheduleConfig::default()
    };
    let schedules = schedule_solution(instance, &calibration.model, &solution, &schedule)?;
    let cost_breakdown = evaluate_costs(
        instance,
        &calibration.model,
        &solution,
        &schedules,
        params.replicas,
        params.seed,
    )?;
    Ok(JobResult {
        schema_version: SCHEMA_VERSION,
        job_id,
        solution,
        schedules,
        cost_breakdown,
        clamped_arcs: calibration.clamped_arcs.len(),
    })
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub workers: usize,
    /// Lower bound on the hard wall-clock limit, which is otherwise `2 * t_max`.
    pub min_hard_limit: Duration,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            workers: 2,
            min_hard_limit: Duration::from_secs(10),
        }
    }
}

impl EngineConfig {
    pub fn hard_limit(&self, t_max: Option<f64>) -> Option<Duration> {
        t_max.map(|t| Duration::from_secs_f64(2.0 * t).max(self.min_hard_limit))
    }
}

/// Handle for submitting queued jobs to the workers.
#[derive(Clone)]
pub struct Engine {
    store: Arc<Store>,
    queue: mpsc::UnboundedSender<Uuid>,
}

impl Engine {
    /// Spawns the workers on the current tokio runtime. Jobs left `running`
    /// by a previous process are failed; jobs left `queued` are resubmitted.
    pub fn start(store: Arc<Store>, config: EngineConfig) -> Self {
        let (tx, rx) = mpsc::unbounded_channel::<Uuid>();
        let rx = Arc::new(Mutex::new(rx));
        for worker in 0..config.workers.max(1) {
            let (store, rx, config) = (store.clone(), rx.clone(), config.clone());
            tokio::spawn(async move {
                loop {
                    let next = rx.lock().await.recv().await;
                    match next {
                        Some(id) => process(&store, &config, id).await,
                        None => break,
                    }
                }
                log::debug!("worker {worker} stopped");
            });
        }
        for job in store.jobs_with_status(JobStatus::Running) {
            if let Err(e) = store.advance(&job.id, JobStatus::Failed, Some("interrupted by restart".into())) {
                log::error!("{e}");
            }
        }
        let engine = Self { store, queue: tx };
        for job in engine.store.jobs_with_status(JobStatus::Queued) {
            engine.submit(job.id);
        }
        engine
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn submit(&self, id: Uuid) {
        if self.queue.send(id).is_err() {
            log::error!("worker pool is gone; job {id} stays queued");
        }
    }
}

async fn process(store: &Arc<Store>, config: &EngineConfig, id: Uuid) {
    let Some(job) = store.job(&id) else {
        log::error!("queued job {id} is unknown");
        return;
    };
    if job.status != JobStatus::Queued {
        return;
    }
    let fail = |msg: String| {
        log::warn!("job {id} failed: {msg}");
        if let Err(e) = store.advance(&id, JobStatus::Failed, Some(msg)) {
            log::error!("{e}");
        }
    };
    let Some(instance) = store.instance(&job.instance_id) else {
        return fail(format!("instance {} is missing", job.instance_id));
    };
    if let Err(e) = store.advance(&id, JobStatus::Running, None) {
        log::error!("{e}");
        return;
    }
    let params = job.params.clone();
    let task = tokio::task::spawn_blocking(move || run_job(id, &instance.instance, &params));
    let outcome = match config.hard_limit(job.params.t_max) {
        Some(limit) => match tokio::time::timeout(limit, task).await {
            Ok(joined) => joined,
            Err(_) => return fail(format!("exceeded hard limit of {:.1} s", limit.as_secs_f64())),
        },
        None => task.await,
    };
    match outcome {
        Ok(Ok(result)) => {
            if let Err(e) = store.finish(result) {
                fail(e.to_string());
            }
        }
        Ok(Err(e)) => fail(e.to_string()),
        Err(e) => fail(format!("solver task aborted: {e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hsara_core::instance::generate_instance;
    use hsara_core::{GeneratorParams, Method};

    #[test]
    fn hard_limit_is_twice_the_budget_with_a_floor() {
        let cfg = EngineConfig {
            workers: 2,
            min_hard_limit: Duration::from_secs(1),
        };
        assert_eq!(cfg.hard_limit(None), None);
        assert_eq!(cfg.hard_limit(Some(0.0)), Some(Duration::from_secs(1)));
        assert_eq!(cfg.hard_limit(Some(30.0)), Some(Duration::from_secs(60)));
    }

    #[test]
    fn pipeline_produces_schedules_for_every_route() {
        let inst = generate_instance(6, 3, &GeneratorParams::default()).unwrap();
        let params = SolveParams {
            method: Method::Heuristic,
            replicas: 50,
            ..SolveParams::default()
        };
        let res = run_job(Uuid::nil(), &inst, &params).unwrap();
        assert!(res.solution.is_partition(6));
        assert_eq!(res.schedules.len(), res.solution.routes.len());
        for (s, r) in res.schedules.iter().zip(&res.solution.routes) {
            assert_eq!(s.customers(), r.customers);
        }
        let c = res.cost_breakdown;
        assert!((c.hiring + c.travel + c.overtime + c.earliness + c.delay - c.total).abs() < 1e-9);
    }
}
