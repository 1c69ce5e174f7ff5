use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use dosecomb_cli::api::{router, AppState};
use dosecomb_cli::store::Store;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const EXAMPLE_DLTS: [usize; 8] = [0, 1, 0, 0, 2, 1, 2, 2];

fn app() -> Router {
    router(AppState::new(Store::in_memory(), None))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn example_request() -> Value {
    json!({
        "rows": 3,
        "cols": 3,
        "sample_size": 30,
        "cohort_size": 3,
        "design": { "kind": "boin", "phi": 0.3 },
        "completion": { "variant": "drp", "tau": 0.4 },
        "seed": 2
    })
}

async fn create(app: &Router) -> String {
    let (status, body) = call(app, Method::POST, "/trials", Some(example_request())).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["schema_version"], 1);
    assert_eq!(body["revision"], 0);
    body["id"].as_str().unwrap().to_string()
}

async fn run_example(app: &Router, id: &str) -> Value {
    let mut last = Value::Null;
    for (i, dlt) in EXAMPLE_DLTS.iter().enumerate() {
        let (status, body) = call(
            app,
            Method::POST,
            &format!("/trials/{id}/cohorts"),
            Some(json!({ "dlt_count": dlt, "revision": i })),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{body}");
        assert_eq!(body["revision"], i as u64 + 1);
        last = body;
    }
    last
}

#[tokio::test]
async fn example_trial_completes_early() {
    let app = app();
    let id = create(&app).await;
    let last = run_example(&app, &id).await;
    let report = &last["report"];
    assert_eq!(last["schema_version"], 1);
    assert_eq!(report["status"], "completed_early");
    assert!(report["early_completion"].as_bool().unwrap());
    assert!((report["drp"].as_f64().unwrap() - 0.493).abs() <= 1e-3);
    assert_eq!(report["dose"], json!({ "j": 1, "k": 1 }));
    assert_eq!(last["state"]["enrolled"], 24);

    let (status, mtd) = call(&app, Method::GET, &format!("/trials/{id}/mtd"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(mtd["label"], "d(2,2)");
    assert!((mtd["adjusted_rate"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-6);
    assert_eq!(mtd["adjusted_rates"][0][1], Value::Null);

    let (status, view) = call(&app, Method::GET, &format!("/trials/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["revision"], 8);
    assert_eq!(view["state"], last["state"]);
}

#[tokio::test]
async fn cohort_on_completed_trial_is_rejected() {
    let app = app();
    let id = create(&app).await;
    run_example(&app, &id).await;
    let (status, body) = call(&app, Method::POST, &format!("/trials/{id}/cohorts"), Some(json!({ "dlt_count": 0 }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["kind"], "invalid_state");
    assert_eq!(body["schema_version"], 1);
}

#[tokio::test]
async fn stale_revision_conflicts() {
    let app = app();
    let id = create(&app).await;
    let uri = format!("/trials/{id}/cohorts");
    let (status, _) = call(&app, Method::POST, &uri, Some(json!({ "dlt_count": 0, "revision": 0 }))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&app, Method::POST, &uri, Some(json!({ "dlt_count": 0, "revision": 0 }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["kind"], "revision_conflict");
    assert_eq!(body["error"]["current_revision"], 1);
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let app = app();
    for uri in ["/trials/nope", "/trials/nope/mtd", "/jobs/nope", "/no/such/route"] {
        let (status, body) = call(&app, Method::GET, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"]["kind"], "not_found");
    }
    let (status, _) = call(&app, Method::POST, "/trials/nope/cohorts", Some(json!({ "dlt_count": 0 }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn validation_errors_name_the_field() {
    let app = app();
    let mut bad = example_request();
    bad["design"]["phi"] = json!(0.9);
    let (status, body) = call(&app, Method::POST, "/trials", Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "design.phi");

    let mut bad = example_request();
    bad["completion"]["variant"] = json!("sometimes");
    let (status, body) = call(&app, Method::POST, "/trials", Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "completion.variant");

    let mut bad = example_request();
    bad["sample_size"] = json!(31);
    let (status, body) = call(&app, Method::POST, "/trials", Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "sample_size");

    let id = create(&app).await;
    let uri = format!("/trials/{id}/cohorts");
    let (status, body) = call(&app, Method::POST, &uri, Some(json!({ "dlt_count": 4 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "dlt_count");
    let (status, body) = call(&app, Method::POST, &uri, Some(json!({ "dlt_count": "two" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "dlt_count");

    let (status, body) = call(&app, Method::GET, "/drp?n=nine&m=3&l=6", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "n");
}

#[tokio::test]
async fn early_completion_table() {
    let app = app();
    let (status, body) = call(&app, Method::GET, "/tables/early-completion?N=36&design=boin&tau=0.4", None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["schema_version"], 1);
    let row9 = body["summary"].as_array().unwrap().iter().find(|r| r["n"] == 9).unwrap();
    assert_eq!(row9["m_min"], 3);
    assert_eq!(row9["max_remaining"], 12);
    let (_, cohort) = call(&app, Method::GET, "/tables/early-completion?N=36&step=cohort&n=9", None).await;
    assert_eq!(cohort["summary"][0]["max_remaining"], 12);
}

#[tokio::test]
async fn retainment_table_and_drp() {
    let app = app();
    let (status, body) = call(&app, Method::GET, "/tables/retainment?design=boin&phi=0.3", None).await;
    assert_eq!(status, StatusCode::OK);
    let shown: Vec<&str> = body["rows"].as_array().unwrap().iter().map(|r| r["display"].as_str().unwrap()).collect();
    assert_eq!(shown, ["1", "2", "3", "3-4", "4-5", "5-6"]);

    let (status, body) = call(&app, Method::GET, "/drp?design=boin&n=9&m=3&l=6&isotonic_rate=0.335", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!((body["drp"].as_f64().unwrap() - 0.493).abs() <= 1e-3);
    assert!((body["drp_i"].as_f64().unwrap() - 0.491).abs() <= 5e-3);
    assert_eq!(body["retainment_set"], json!([4, 5]));

    let (_, max) = call(&app, Method::GET, "/drp?n=3&m=1&l=3&boundary=max", None).await;
    assert!((max["drp"].as_f64().unwrap() - 0.314_285_714).abs() < 1e-8);
}

#[tokio::test]
async fn what_if_previews_next_cohort() {
    let app = app();
    let id = create(&app).await;
    for (i, dlt) in EXAMPLE_DLTS[..7].iter().enumerate() {
        let (s, _) = call(&app, Method::POST, &format!("/trials/{id}/cohorts"), Some(json!({ "dlt_count": dlt, "revision": i }))).await;
        assert_eq!(s, StatusCode::OK);
    }
    let (status, body) = call(&app, Method::GET, &format!("/trials/{id}/what-if"), None).await;
    assert_eq!(status, StatusCode::OK);
    let outcomes = body["outcomes"].as_array().unwrap();
    assert_eq!(outcomes.len(), 4);
    assert_eq!(outcomes[2]["status"], "completed_early");
    assert!((outcomes[2]["drp"].as_f64().unwrap() - 0.493).abs() < 1e-3);
    // nothing was recorded
    let (_, view) = call(&app, Method::GET, &format!("/trials/{id}"), None).await;
    assert_eq!(view["revision"], 7);
}

#[tokio::test]
async fn simulation_job_runs_to_completion() {
    let app = app();
    let req = json!({
        "scenarios": [{ "name": "flat", "matrix": [[0.1, 0.2], [0.3, 0.5]] }],
        "designs": ["BOIN", "boin-ec"],
        "sample_size": 12,
        "replications": 20,
        "base_seed": 3
    });
    let (status, body) = call(&app, Method::POST, "/simulate", Some(req)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    let id = body["id"].as_str().unwrap().to_string();
    let mut job = Value::Null;
    for _ in 0..200 {
        let (_, b) = call(&app, Method::GET, &format!("/jobs/{id}"), None).await;
        if b["status"] == "done" || b["status"] == "failed" {
            job = b;
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(job["status"], "done", "{job}");
    assert_eq!(job["metrics"].as_array().unwrap().len(), 2);
    assert!(job["csv"].as_str().unwrap().starts_with("scenario,design"));

    let (status, body) = call(&app, Method::POST, "/simulate", Some(json!({ "designs": ["nope"] }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "designs[0]");
}

#[tokio::test]
async fn shared_token_is_enforced() {
    let app = router(AppState::new(Store::in_memory(), Some("s3cret".into())));
    let (status, _) = call(&app, Method::GET, "/tables/retainment", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let req = Request::get("/tables/retainment")
        .header(header::AUTHORIZATION, "Bearer s3cret")
        .body(Body::empty())
        .unwrap();
    assert_eq!(app.oneshot(req).await.unwrap().status(), StatusCode::OK);
}

#[tokio::test]
async fn non_json_body_is_rejected() {
    let req = Request::post("/trials")
        .header(header::CONTENT_TYPE, "text/plain")
        .body(Body::from("rows=3"))
        .unwrap();
    let resp = app().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);
}

#[tokio::test]
async fn event_log_reconstructs_trials() {
    let dir = tempfile::tempdir().unwrap();
    let (id, before) = {
        let app = router(AppState::new(Store::open(dir.path()).unwrap(), None));
        let id = create(&app).await;
        let last = run_example(&app, &id).await;
        (id, last["state"].clone())
    };
    let trial_dir = dir.path().join("trials").join(&id);
    let log = std::fs::read_to_string(trial_dir.join("events.jsonl")).unwrap();
    let lines: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[0]["kind"], "created");
    assert_eq!(lines[8]["kind"], "cohort");
    assert_eq!(lines[8]["status"], "completed_early");
    assert!(trial_dir.join("snapshot.json").exists());

    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.len(), 1);
    let app = router(AppState::new(store, None));
    let (status, view) = call(&app, Method::GET, &format!("/trials/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["revision"], 8);
    assert_eq!(view["state"], before);
}

#[tokio::test]
async fn tampered_log_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = router(AppState::new(Store::open(dir.path()).unwrap(), None));
        let id = create(&app).await;
        run_example(&app, &id).await;
        id
    };
    let path = dir.path().join("trials").join(&id).join("events.jsonl");
    let log = std::fs::read_to_string(&path).unwrap();
    // flip the last cohort from 2 DLTs to 0
    let mut lines: Vec<String> = log.lines().map(String::from).collect();
    let last = lines.last_mut().unwrap();
    *last = last.replace("\"dlt_count\":2", "\"dlt_count\":0");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert!(Store::open(dir.path()).is_err());
}
