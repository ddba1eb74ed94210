use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use hsara_service::{router, Engine, EngineConfig, Store};
use serde_json::{json, Value};
use std::sync::Arc;
use std::time::Duration;
use tempfile::TempDir;
use tower::ServiceExt;

struct Harness {
    app: Router,
    _dir: TempDir,
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open(dir.path()).unwrap());
        let engine = Engine::start(store, EngineConfig::default());
        Self {
            app: router(engine),
            _dir: dir,
        }
    }

    async fn raw(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let builder = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => builder
                .header("content-type", "application/json")
                .body(Body::from(b.to_string()))
                .unwrap(),
            None => builder.body(Body::empty()).unwrap(),
        };
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(method, uri, body).await;
        let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        (status, value)
    }

    async fn instance(&self, n: usize, seed: u64) -> String {
        let (s, v) = self
            .call("POST", "/instances", Some(json!({ "generate": { "n": n, "seed": seed } })))
            .await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_owned()
    }

    async fn solve(&self, body: Value) -> String {
        let (s, v) = self.call("POST", "/solve", Some(body)).await;
        assert_eq!(s, StatusCode::ACCEPTED, "{v}");
        v["job_id"].as_str().unwrap().to_owned()
    }

    async fn wait(&self, job: &str) -> Value {
        for _ in 0..2400 {
            let (s, v) = self.call("GET", &format!("/jobs/{job}"), None).await;
            assert_eq!(s, StatusCode::OK);
            match v["job"]["status"].as_str().unwrap() {
                "done" | "failed" => return v,
                _ => tokio::time::sleep(Duration::from_millis(25)).await,
            }
        }
        panic!("job {job} did not finish");
    }
}

fn objective(view: &Value) -> f64 {
    view["result"]["solution"]["objective"].as_f64().unwrap()
}

fn route_count(view: &Value) -> usize {
    view["result"]["solution"]["routes"].as_array().unwrap().len()
}

#[tokio::test]
async fn solve_reports_solution_schedules_and_costs() {
    let h = Harness::new();
    let inst = h.instance(8, 11).await;
    let job = h
        .solve(json!({ "instance_id": inst, "method": "hm", "replicas": 50, "seed": 3 }))
        .await;
    let view = h.wait(&job).await;
    assert_eq!(view["schema_version"], 1);
    assert_eq!(view["job"]["status"], "done", "{view}");
    let result = &view["result"];
    assert_eq!(result["schema_version"], 1);
    assert_eq!(result["solution"]["method"], "HM");
    assert_eq!(result["schedules"].as_array().unwrap().len(), route_count(&view));
    let c = &result["cost_breakdown"];
    let parts: f64 = ["hiring", "travel", "overtime", "earliness", "delay"]
        .iter()
        .map(|k| c[k].as_f64().unwrap())
        .sum();
    assert!((parts - c["total"].as_f64().unwrap()).abs() < 1e-9);
}

#[tokio::test]
async fn repeated_gets_are_byte_identical() {
    let h = Harness::new();
    let inst = h.instance(5, 2).await;
    let job = h.solve(json!({ "instance_id": inst, "method": "IS", "t_max": 0 })).await;
    h.wait(&job).await;
    let (s1, a) = h.raw("GET", &format!("/jobs/{job}"), None).await;
    let (s2, b) = h.raw("GET", &format!("/jobs/{job}"), None).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
}

#[tokio::test]
async fn whatif_without_overrides_reproduces_the_objective() {
    let h = Harness::new();
    let inst = h.instance(10, 5).await;
    let base = h.solve(json!({ "instance_id": inst, "method": "hm", "seed": 7 })).await;
    let base_view = h.wait(&base).await;
    let (s, v) = h.call("POST", "/whatif", Some(json!({ "base_job_id": base }))).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    assert_eq!(v["instance_id"].as_str().unwrap(), inst);
    let view = h.wait(v["job_id"].as_str().unwrap()).await;
    assert_eq!(view["job"]["base_job_id"].as_str().unwrap(), base);
    assert_eq!(objective(&view), objective(&base_view));
}

#[tokio::test]
async fn tenfold_hiring_cost_never_adds_routes() {
    let h = Harness::new();
    let inst = h.instance(12, 9).await;
    let base = h.solve(json!({ "instance_id": inst, "method": "hm", "seed": 1 })).await;
    let base_view = h.wait(&base).await;
    let (s, v) = h
        .call("POST", "/whatif", Some(json!({ "base_job_id": base, "overrides": { "cf": 1000.0 } })))
        .await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let derived = v["instance_id"].as_str().unwrap().to_owned();
    assert_ne!(derived, inst);
    let view = h.wait(v["job_id"].as_str().unwrap()).await;
    assert!(route_count(&view) <= route_count(&base_view));
    let (s, rec) = h.call("GET", &format!("/instances/{derived}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(rec["instance"]["costs"]["cf"], 1000.0);
    assert_eq!(rec["parent"].as_str().unwrap(), inst);
}

#[tokio::test]
async fn customer_subset_restricts_the_instance() {
    let h = Harness::new();
    let inst = h.instance(8, 4).await;
    let base = h.solve(json!({ "instance_id": inst, "method": "is", "t_max": 0 })).await;
    h.wait(&base).await;
    let (s, v) = h
        .call(
            "POST",
            "/whatif",
            Some(json!({ "base_job_id": base, "overrides": { "customer_subset": [7, 2, 5], "alpha": 0.9 } })),
        )
        .await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let view = h.wait(v["job_id"].as_str().unwrap()).await;
    assert_eq!(view["job"]["params"]["alpha"], 0.9);
    let mut served: Vec<u64> = view["result"]["solution"]["routes"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r["customers"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()))
        .collect();
    served.sort_unstable();
    assert_eq!(served, vec![1, 2, 3]);
    let (_, rec) = h.call("GET", &format!("/instances/{}", v["instance_id"].as_str().unwrap()), None).await;
    assert_eq!(rec["parent_customers"], json!([7, 2, 5]));
    assert_eq!(rec["instance"]["n"], 3);
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let h = Harness::new();
    let missing = "0190f0c8-0000-7000-8000-000000000000";
    for uri in [format!("/jobs/{missing}"), format!("/instances/{missing}"), "/jobs/not-a-uuid".into()] {
        let (s, v) = h.call("GET", &uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(v["schema_version"], 1);
        assert!(v["error"].is_string());
    }
    let (s, _) = h.call("POST", "/solve", Some(json!({ "instance_id": missing }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h.call("POST", "/whatif", Some(json!({ "base_job_id": missing }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_overrides_and_bodies_are_unprocessable() {
    let h = Harness::new();
    let inst = h.instance(6, 1).await;
    let base = h.solve(json!({ "instance_id": inst, "method": "is", "t_max": 0 })).await;
    h.wait(&base).await;
    for overrides in [
        json!({ "cf": -1.0 }),
        json!({ "alpha": 1.5 }),
        json!({ "t_max": -3.0 }),
        json!({ "customer_subset": [] }),
        json!({ "customer_subset": [1, 1] }),
        json!({ "customer_subset": [9] }),
        json!({ "speed": 2.0 }),
    ] {
        let (s, v) = h
            .call("POST", "/whatif", Some(json!({ "base_job_id": base, "overrides": overrides })))
            .await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{overrides} -> {v}");
    }
    for body in [
        json!({ "instance_id": inst, "alpha": 2.0 }),
        json!({ "instance_id": inst, "replicas": 0 }),
        json!({ "instance_id": inst, "method": "xyz" }),
        json!({ "instance_id": inst, "schema_version": 99 }),
    ] {
        let (s, _) = h.call("POST", "/solve", Some(body.clone())).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    }
    let (s, _) = h.call("POST", "/instances", Some(json!({ "generate": { "n": 0, "seed": 1 } }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn whatif_on_unfinished_job_conflicts() {
    let h = Harness::new();
    // Occupy both workers so the third job is still queued.
    let big = h.instance(40, 6).await;
    for _ in 0..2 {
        h.solve(json!({ "instance_id": big, "method": "hm", "replicas": 2000 })).await;
    }
    let inst = h.instance(5, 1).await;
    let pending = h.solve(json!({ "instance_id": inst, "method": "is", "t_max": 0 })).await;
    let (s, v) = h.call("POST", "/whatif", Some(json!({ "base_job_id": pending }))).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    let (_, view) = h.call("GET", &format!("/jobs/{pending}"), None).await;
    assert_ne!(view["job"]["status"], "done");
    assert!(view.get("result").is_none());
}

#[tokio::test]
async fn explicit_instances_are_accepted_and_validated() {
    let h = Harness::new();
    let inst = hsara_core::instance::generate_instance(4, 8, &hsara_core::GeneratorParams::default()).unwrap();
    let mut body = serde_json::to_value(&inst).unwrap();
    let (s, v) = h.call("POST", "/instances", Some(body.clone())).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["n"], 4);
    body["L"] = json!(-5.0);
    let (s, _) = h.call("POST", "/instances", Some(body)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn documents_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, job) = {
        let store = Arc::new(Store::open(dir.path()).unwrap());
        let h = Harness {
            app: router(Engine::start(store, EngineConfig::default())),
            _dir: tempfile::tempdir().unwrap(),
        };
        let inst = h.instance(5, 3).await;
        let job = h.solve(json!({ "instance_id": inst, "method": "is", "t_max": 0 })).await;
        h.wait(&job).await;
        (inst, job)
    };
    let store = Arc::new(Store::open(dir.path()).unwrap());
    let app = router(Engine::start(store, EngineConfig::default()));
    let h = Harness {
        app,
        _dir: tempfile::tempdir().unwrap(),
    };
    let (s, view) = h.call("GET", &format!("/jobs/{job}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(view["job"]["status"], "done");
    assert_eq!(view["job"]["instance_id"].as_str().unwrap(), inst);
    assert!(view["result"]["solution"]["objective"].is_number());
}
