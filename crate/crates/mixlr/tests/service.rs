use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use mixlr::casework::{evaluate_case, what_if, ModelStore};
use mixlr::fixtures;
use mixlr::profiles::BodyFluid;
use mixlr_app::service::{evaluate, router, AppState, EvaluateRequest};

fn store() -> ModelStore {
    let s = ModelStore::new();
    s.insert(fixtures::reference_system());
    s.insert(fixtures::reference_penile_system());
    s
}

fn app(store: ModelStore) -> axum::Router {
    router(Arc::new(AppState::new(store)))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn case_json(n: usize) -> Value {
    serde_json::to_value(fixtures::worked_case(n)).unwrap()
}

fn request(n: usize) -> Value {
    json!({"interest": ["vaginal_mucosa", "menstrual_secretion"], "case": case_json(n)})
}

#[tokio::test]
async fn case_three_default_backgrounds() {
    let (status, body) = call(&app(store()), "POST", "/api/v1/evaluate", Some(request(3))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let l = body["report"]["log10_lr"].as_f64().unwrap();
    assert!((l - 1.5).abs() <= 0.05, "{l}");
    assert_eq!(body["variant"]["id"], fixtures::reference_system().variant_id());
    assert!(body["server_version"].is_string());
}

#[tokio::test]
async fn penile_override_selects_other_variant() {
    let mut req = request(3);
    req["background"] = json!({"skin_penile": 1.0});
    let (status, body) = call(&app(store()), "POST", "/api/v1/evaluate", Some(req)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let l = body["report"]["log10_lr"].as_f64().unwrap();
    assert!((l - 0.8).abs() <= 0.05, "{l}");
}

#[tokio::test]
async fn response_matches_library_bit_for_bit() {
    let s = store();
    let (_, body) = call(&app(store()), "POST", "/api/v1/evaluate", Some(request(2))).await;
    let sys = fixtures::reference_system();
    let direct = evaluate_case(&sys, &fixtures::worked_case(2), &sys.hypothesis).unwrap();
    assert_eq!(body["report"]["log10_lr"].as_f64().unwrap().to_bits(), direct.log10_lr.to_bits());
    assert_eq!(body["report"], serde_json::to_value(&direct).unwrap());

    let bg = mixlr::augmentation::BackgroundLevels::default().with(BodyFluid::SkinPenile, 1.0);
    let wi = what_if(&s, &fixtures::worked_case(3), &sys.hypothesis, &bg).unwrap();
    let mut req = request(3);
    req["background"] = json!({"skin_penile": 1.0});
    let (_, body) = call(&app(store()), "POST", "/api/v1/evaluate", Some(req)).await;
    assert_eq!(body["report"], serde_json::to_value(&wi).unwrap());
}

#[tokio::test]
async fn unknown_marker_is_400_naming_it() {
    let mut req = request(3);
    let m = req["case"]["markers"].as_object_mut().unwrap();
    let hbb = m.remove("HBB").unwrap();
    m.insert("HBB2".into(), hbb);
    let (status, body) = call(&app(store()), "POST", "/api/v1/evaluate", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "unknown_marker");
    assert!(body["message"].as_str().unwrap().contains("HBB2"));
}

#[tokio::test]
async fn other_client_errors() {
    let a = app(store());
    let (status, body) = call(&a, "POST", "/api/v1/evaluate", Some(json!({"interest": 3}))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("malformed_body")));

    let mut req = request(3);
    req["interest"] = json!(["plasma"]);
    let (status, body) = call(&a, "POST", "/api/v1/evaluate", Some(req)).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("unknown_fluid")));

    let mut req = request(3);
    req["case"]["markers"]["HBB"] = json!({"detected": 5, "total": 4});
    let (status, _) = call(&a, "POST", "/api/v1/evaluate", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let mut req = request(3);
    req["variant_id"] = json!("000000000000");
    let (status, body) = call(&a, "POST", "/api/v1/evaluate", Some(req)).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_variant")));

    let mut req = request(3);
    req["background"] = json!({"blood": 0.9});
    let (status, body) = call(&a, "POST", "/api/v1/evaluate", Some(req)).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::CONFLICT, Some("no_model")));
    assert!(body["message"].as_str().unwrap().contains("training disabled"));

    let (status, body) = call(&a, "GET", "/api/v1/nothing", None).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
}

#[tokio::test]
async fn on_demand_training_fills_missing_variant() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let s = ModelStore::new().with_trainer(Box::new(move |q| {
        c.fetch_add(1, Ordering::SeqCst);
        let mut sys = fixtures::reference_system();
        sys.background = q.background;
        Ok(sys)
    }));
    let a = app(s);
    let mut req = request(3);
    req["background"] = json!({"blood": 0.9});
    for _ in 0..2 {
        let (status, body) = call(&a, "POST", "/api/v1/evaluate", Some(req.clone())).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    assert_eq!(calls.load(Ordering::SeqCst), 1);
    let (_, models) = call(&a, "GET", "/api/v1/models", None).await;
    assert_eq!(models.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn identical_requests_identical_responses() {
    let a = app(store());
    let (_, first) = call(&a, "POST", "/api/v1/evaluate", Some(request(1))).await;
    let mut handles = Vec::new();
    for _ in 0..8 {
        let a = a.clone();
        handles.push(tokio::spawn(async move { call(&a, "POST", "/api/v1/evaluate", Some(request(1))).await.1 }));
    }
    for h in handles {
        assert_eq!(h.await.unwrap(), first);
    }
}

#[tokio::test]
async fn models_listing() {
    let (status, body) = call(&app(ModelStore::new()), "GET", "/api/v1/models", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));

    let dir = tempfile::tempdir().unwrap();
    fixtures::reference_system().save(dir.path().join("a.json")).unwrap();
    fixtures::reference_penile_system().save(dir.path().join("b.json")).unwrap();
    let (_, body) = call(&app(ModelStore::load_dir(dir.path()).unwrap()), "GET", "/api/v1/models", None).await;
    let list = body.as_array().unwrap();
    assert_eq!(list.len(), 2);
    let ids: Vec<&str> = list.iter().map(|v| v["id"].as_str().unwrap()).collect();
    assert!(ids[0] < ids[1]);

    for v in list {
        let path = if v["id"] == fixtures::reference_system().variant_id() { "a.json" } else { "b.json" };
        let disk: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(path)).unwrap()).unwrap();
        let coefs = disk["classifier"]["coefficients"].as_array().unwrap();
        let markers = disk["markers"].as_array().unwrap();
        for (m, b) in markers.iter().zip(coefs) {
            assert_eq!(v["coefficients"][m.as_str().unwrap()], *b);
        }
        assert_eq!(v["intercept"], disk["classifier"]["intercept"]);
    }
}

#[tokio::test]
async fn panel_reflection() {
    let (status, body) = call(&app(store()), "GET", "/api/v1/panel", None).await;
    assert_eq!(status, StatusCode::OK);
    let markers: Vec<&str> = body["markers"].as_array().unwrap().iter().map(|m| m.as_str().unwrap()).collect();
    assert_eq!(markers.len(), 15);
    assert_eq!(markers[0], "HBB");
    assert_eq!(markers[14], "PRM1");
    assert!(!markers.contains(&"HK1"));
    assert_eq!(body["fluids"].as_array().unwrap().len(), 9);
    assert_eq!(body["housekeeping"].as_array().unwrap().len(), 2);
}

#[test]
fn direct_call_round_trips_request_json() {
    let req: EvaluateRequest = serde_json::from_value(request(3)).unwrap();
    let state = AppState::new(store());
    let a = evaluate(&state, &req).unwrap();
    let b = evaluate(&state, &req).unwrap();
    assert_eq!(a, b);
    let back: EvaluateRequest = serde_json::from_value(serde_json::to_value(&req).unwrap()).unwrap();
    assert_eq!(back, req);
}
