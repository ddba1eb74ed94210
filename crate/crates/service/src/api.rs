//! HTTP routes.

use crate::engine::Engine;
use crate::model::{
    GenerateSpec, InstanceBody, InstanceRecord, JobRecord, JobStatus, JobView, SolveParams, SolveRequest,
    WhatIfOverrides, WhatIfRequest, SCHEMA_VERSION,
};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hsara_core::instance::generate_instance;
use hsara_core::Instance;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use uuid::Uuid;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} {id}"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "schema_version": SCHEMA_VERSION, "error": self.message });
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(r.status(), r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Decodes a request body after checking and removing an optional
/// `schema_version`.
fn decode<T: DeserializeOwned>(body: Result<Json<Value>, JsonRejection>) -> ApiResult<T> {
    let Json(mut value) = body?;
    if let Some(obj) = value.as_object_mut() {
        if let Some(v) = obj.remove("schema_version") {
            if v.as_u64() != Some(SCHEMA_VERSION as u64) {
                return Err(ApiError::invalid(format!(
                    "unsupported schema_version {v}, expected {SCHEMA_VERSION}"
                )));
            }
        }
    }
    serde_json::from_value(value).map_err(|e| ApiError::invalid(e.to_string()))
}

fn parse_id(what: &str, raw: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(raw).map_err(|_| ApiError::not_found(what, raw))
}

pub fn router(engine: Engine) -> Router {
    Router::new()
        .route("/instances", post(create_instance))
        .route("/instances/{id}", get(get_instance))
        .route("/solve", post(solve))
        .route("/jobs/{id}", get(get_job))
        .route("/whatif", post(whatif))
        .with_state(engine)
}

async fn create_instance(
    State(engine): State<Engine>,
    body: Result<Json<Value>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let (instance, generated) = match decode::<InstanceBody>(body)? {
        InstanceBody::Generate { generate } => {
            let GenerateSpec { n, seed, ref params } = generate;
            let inst = generate_instance(n, seed, params).map_err(|e| ApiError::invalid(e.to_string()))?;
            (inst, Some(generate))
        }
        InstanceBody::Explicit(inst) => {
            inst.validate().map_err(|e| ApiError::invalid(e.to_string()))?;
            (*inst, None)
        }
    };
    let record = InstanceRecord {
        schema_version: SCHEMA_VERSION,
        id: Uuid::now_v7(),
        parent: None,
        parent_customers: None,
        generated,
        instance,
    };
    let n = record.instance.n;
    let record = engine.store().put_instance(record).map_err(ApiError::internal)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "schema_version": SCHEMA_VERSION, "id": record.id, "n": n })),
    ))
}

async fn get_instance(State(engine): State<Engine>, Path(raw): Path<String>) -> ApiResult<Json<InstanceRecord>> {
    let id = parse_id("instance", &raw)?;
    let record = engine
        .store()
        .instance(&id)
        .ok_or_else(|| ApiError::not_found("instance", &raw))?;
    Ok(Json((*record).clone()))
}

fn enqueue(
    engine: &Engine,
    instance_id: Uuid,
    params: SolveParams,
    base_job_id: Option<Uuid>,
    overrides: Option<WhatIfOverrides>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let job = JobRecord {
        schema_version: SCHEMA_VERSION,
        id: Uuid::now_v7(),
        instance_id,
        params,
        status: JobStatus::Queued,
        base_job_id,
        overrides,
        error: None,
    };
    let id = job.id;
    engine.store().create_job(job).map_err(ApiError::internal)?;
    engine.submit(id);
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({
            "schema_version": SCHEMA_VERSION,
            "job_id": id,
            "instance_id": instance_id,
            "status": JobStatus::Queued,
        })),
    ))
}

async fn solve(
    State(engine): State<Engine>,
    body: Result<Json<Value>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: SolveRequest = decode(body)?;
    if engine.store().instance(&req.instance_id).is_none() {
        return Err(ApiError::not_found("instance", &req.instance_id.to_string()));
    }
    let params = req.params();
    params.validate().map_err(ApiError::invalid)?;
    enqueue(&engine, req.instance_id, params, None, None)
}

async fn get_job(State(engine): State<Engine>, Path(raw): Path<String>) -> ApiResult<Json<JobView>> {
    let id = parse_id("job", &raw)?;
    let store = engine.store();
    let job = store.job(&id).ok_or_else(|| ApiError::not_found("job", &raw))?;
    let result = match job.status {
        JobStatus::Done => Some((*store.result(&id).ok_or_else(|| ApiError::internal("result missing"))?).clone()),
        _ => None,
    };
    Ok(Json(JobView {
        schema_version: SCHEMA_VERSION,
        job,
        result,
    }))
}

/// The base instance with cost and customer overrides applied.
fn apply_overrides(base: &Instance, o: &WhatIfOverrides) -> ApiResult<Instance> {
    let mut inst = match &o.customer_subset {
        Some(subset) => base.restrict(subset).map_err(|e| ApiError::invalid(e.to_string()))?,
        None => base.clone(),
    };
    for (value, slot) in [
        (o.cf, &mut inst.costs.cf),
        (o.ct, &mut inst.costs.ct),
        (o.co, &mut inst.costs.co),
    ] {
        if let Some(v) = value {
            *slot = v;
        }
    }
    inst.costs.validate().map_err(|e| ApiError::invalid(e.to_string()))?;
    Ok(inst)
}

async fn whatif(
    State(engine): State<Engine>,
    body: Result<Json<Value>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: WhatIfRequest = decode(body)?;
    let store = engine.store();
    let base = store
        .job(&req.base_job_id)
        .ok_or_else(|| ApiError::not_found("job", &req.base_job_id.to_string()))?;
    let base_instance = store
        .instance(&base.instance_id)
        .ok_or_else(|| ApiError::internal("base instance missing"))?;
    let o = req.overrides;
    let params = SolveParams {
        alpha: o.alpha.unwrap_or(base.params.alpha),
        t_max: o.t_max.or(base.params.t_max),
        ..base.params.clone()
    };
    params.validate().map_err(ApiError::invalid)?;
    let instance = apply_overrides(&base_instance.instance, &o)?;
    if base.status != JobStatus::Done {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("base job {} is {:?}, not done", base.id, base.status),
        ));
    }
    let instance_id = if o.touches_instance() {
        let record = InstanceRecord {
            schema_version: SCHEMA_VERSION,
            id: Uuid::now_v7(),
            parent: Some(base_instance.id),
            parent_customers: o.customer_subset.clone(),
            generated: None,
            instance,
        };
        store.put_instance(record).map_err(ApiError::internal)?.id
    } else {
        base_instance.id
    };
    enqueue(&engine, instance_id, params, Some(base.id), Some(o))
}
