use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use groupsense::{router, Store};
use groupsense_core::chart::generate_random_chart;
use groupsense_core::{
    default_model, diagnose, redesign, save_model, DiagnoseConfig, Group, SearchConfig,
};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Harness {
    _dir: tempfile::TempDir,
    app: Router,
}

fn harness() -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    Harness {
        app: router(store),
        _dir: dir,
    }
}

impl Harness {
    async fn raw(
        &self,
        method: Method,
        uri: &str,
        body: Option<String>,
        accept: Option<&str>,
    ) -> (StatusCode, String) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(a) = accept {
            req = req.header(header::ACCEPT, a);
        }
        let req = match body {
            Some(b) => req
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(b)),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8(bytes.to_vec()).unwrap())
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, text) = self
            .raw(method, uri, body.map(|b| b.to_string()), None)
            .await;
        let value = if text.is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).unwrap()
        };
        (status, value)
    }
}

fn chart_json(n: usize, seed: u64) -> Value {
    serde_json::to_value(generate_random_chart(n, seed).unwrap()).unwrap()
}

#[tokio::test]
async fn health_reports_ok() {
    let h = harness();
    let (status, body) = h.call(Method::GET, "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
}

#[tokio::test]
async fn diagnose_matches_library_and_is_byte_identical() {
    let h = harness();
    let body =
        json!({"chart": chart_json(6, 4), "desired": [["A", "B"], ["C", "D", "E"]]}).to_string();
    let (s1, first) = h
        .raw(Method::POST, "/api/diagnose", Some(body.clone()), None)
        .await;
    let (s2, second) = h.raw(Method::POST, "/api/diagnose", Some(body), None).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first, second);

    let chart = generate_random_chart(6, 4).unwrap();
    let desired = vec![Group::new(["A", "B"]), Group::new(["C", "D", "E"])];
    let expected = diagnose(
        &chart,
        &desired,
        default_model(),
        &DiagnoseConfig::default(),
    )
    .unwrap();
    assert_eq!(first, serde_json::to_string(&expected).unwrap());
}

#[tokio::test]
async fn duplicate_label_is_422_with_field_path() {
    let h = harness();
    let chart = json!({"points": [
        {"label": "A", "value": 10.0},
        {"label": "B", "value": 20.0},
        {"label": "A", "value": 30.0}
    ]});
    for uri in ["/api/diagnose", "/api/sessions"] {
        let (status, body) = h
            .call(Method::POST, uri, Some(json!({"chart": chart})))
            .await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{uri}");
        assert_eq!(body["error"]["field"], "chart.points[2].label", "{uri}");
    }
    let (status, body) = h.call(Method::POST, "/api/charts", Some(chart)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "chart.points[2].label");
}

#[tokio::test]
async fn invalid_desired_group_and_threshold_name_their_field() {
    let h = harness();
    let (status, body) = h
        .call(
            Method::POST,
            "/api/diagnose",
            Some(json!({"chart": chart_json(5, 1), "desired": [["A", "B"], ["A", "Z"]]})),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "desired[1]");
    let (status, body) = h
        .call(
            Method::POST,
            "/api/diagnose",
            Some(json!({"chart": chart_json(5, 1), "threshold": 1.5})),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "threshold");
    let (status, body) = h
        .call(
            Method::POST,
            "/api/redesign",
            Some(json!({"chart": chart_json(5, 1), "alpha": -0.1})),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "alpha");
}

#[tokio::test]
async fn malformed_json_is_400() {
    let h = harness();
    let (status, text) = h
        .raw(
            Method::POST,
            "/api/diagnose",
            Some("{not json".into()),
            None,
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let body: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(body["error"]["code"], "bad_request");
}

#[tokio::test]
async fn unknown_model_is_404() {
    let h = harness();
    let (status, body) = h
        .call(
            Method::POST,
            "/api/diagnose",
            Some(json!({"chart": chart_json(5, 1), "model_id": "nope"})),
        )
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "not_found");
    let (status, _) = h.call(Method::GET, "/api/models/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn oversized_search_is_413() {
    let h = harness();
    let req = json!({"chart": chart_json(11, 3)});
    let (status, body) = h
        .call(Method::POST, "/api/redesign", Some(req.clone()))
        .await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(body["error"]["code"], "too_many_permutations");
    let (status, _) = h
        .raw(
            Method::POST,
            "/api/redesign",
            Some(req.to_string()),
            Some("text/event-stream"),
        )
        .await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn redesign_examines_every_order_and_matches_library() {
    let h = harness();
    let req =
        json!({"chart": chart_json(6, 9), "desired": [["A", "B", "C"]], "alpha": 0.6, "k": 4});
    let (status, body) = h.call(Method::POST, "/api/redesign", Some(req)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["examined"], 720);

    let chart = generate_random_chart(6, 9).unwrap();
    let config = SearchConfig {
        alpha: 0.6,
        k: 4,
        ..Default::default()
    };
    let expected = redesign(
        &chart,
        &[Group::new(["A", "B", "C"])],
        default_model(),
        &config,
    )
    .unwrap();
    assert_eq!(body["results"], serde_json::to_value(&expected).unwrap());
}

#[tokio::test]
async fn redesign_streams_progress_then_result() {
    let h = harness();
    let req = json!({"chart": chart_json(6, 2), "desired": [["A", "B"]]}).to_string();
    let (status, text) = h
        .raw(
            Method::POST,
            "/api/redesign",
            Some(req),
            Some("text/event-stream"),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let progress: Vec<Value> = text
        .split("\n\n")
        .filter(|e| e.contains("event: progress"))
        .map(|e| {
            serde_json::from_str(e.lines().find_map(|l| l.strip_prefix("data: ")).unwrap()).unwrap()
        })
        .collect();
    assert!(!progress.is_empty());
    assert_eq!(
        progress.last().unwrap(),
        &json!({"examined": 720, "total": 720})
    );
    let result = text
        .split("\n\n")
        .find(|e| e.contains("event: result"))
        .expect("result event");
    let data: Value = serde_json::from_str(
        result
            .lines()
            .find_map(|l| l.strip_prefix("data: "))
            .unwrap(),
    )
    .unwrap();
    assert_eq!(data["examined"], 720);
    assert!(text.find("event: progress").unwrap() < text.find("event: result").unwrap());
}

#[tokio::test]
async fn chart_create_get_list_delete() {
    let h = harness();
    let mut ids = Vec::new();
    for seed in 0..3 {
        let (status, body) = h
            .call(Method::POST, "/api/charts", Some(chart_json(5, seed)))
            .await;
        assert_eq!(status, StatusCode::CREATED);
        ids.push(body["id"].as_str().unwrap().to_string());
    }
    let (_, again) = h
        .call(Method::POST, "/api/charts", Some(chart_json(5, 0)))
        .await;
    assert_eq!(again["id"], ids[0].as_str());

    let (status, got) = h
        .call(Method::GET, &format!("/api/charts/{}", ids[1]), None)
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(got["chart"], chart_json(5, 1));

    let (_, list) = h.call(Method::GET, "/api/charts", None).await;
    assert_eq!(list.as_array().unwrap().len(), 3);

    let (status, _) = h
        .call(Method::DELETE, &format!("/api/charts/{}", ids[2]), None)
        .await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = h
        .call(Method::GET, &format!("/api/charts/{}", ids[2]), None)
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn stored_chart_can_be_diagnosed_by_id() {
    let h = harness();
    let (status, created) = h
        .call(Method::POST, "/api/charts/random?n=5&seed=7", None)
        .await;
    assert_eq!(status, StatusCode::CREATED);
    let id = created["id"].as_str().unwrap();
    let (status, report) = h
        .call(Method::POST, "/api/diagnose", Some(json!({"chart_id": id})))
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["chart_id"], id);
    let (status, _) = h.call(Method::POST, "/api/charts/random?n=abc", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn models_and_referential_integrity() {
    let h = harness();
    let (_, list) = h.call(Method::GET, "/api/models", None).await;
    assert_eq!(list[0]["id"], "default-v1");
    assert_eq!(list[0]["builtin"], true);

    let mut copy = default_model().clone();
    copy.metadata.name = "copy".into();
    let (status, text) = h
        .raw(Method::POST, "/api/models", Some(save_model(&copy)), None)
        .await;
    assert_eq!(status, StatusCode::CREATED, "{text}");
    let created: Value = serde_json::from_str(&text).unwrap();
    let model_id = created["id"].as_str().unwrap().to_string();

    let (status, _) = h
        .call(
            Method::POST,
            "/api/sessions",
            Some(json!({"chart": chart_json(5, 1), "model_id": model_id})),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED);

    let (status, body) = h
        .call(Method::DELETE, &format!("/api/models/{model_id}"), None)
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "conflict");
    let (status, _) = h.call(Method::DELETE, "/api/models/default-v1", None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let mut unused = default_model().clone();
    unused.metadata.name = "unused".into();
    let (_, text) = h
        .raw(Method::POST, "/api/models", Some(save_model(&unused)), None)
        .await;
    let unused_id = serde_json::from_str::<Value>(&text).unwrap()["id"]
        .as_str()
        .unwrap()
        .to_string();
    let (status, _) = h
        .call(Method::DELETE, &format!("/api/models/{unused_id}"), None)
        .await;
    assert_eq!(status, StatusCode::NO_CONTENT);

    let (status, _) = h
        .raw(
            Method::POST,
            "/api/models",
            Some(r#"{"version": 99}"#.into()),
            None,
        )
        .await;
    assert!(status.is_client_error());
}

#[tokio::test]
async fn sessions_round_trip_and_drive_landscape() {
    let h = harness();
    let req = json!({"chart": chart_json(6, 5), "desired": [["A", "B"]], "alpha": 0.3});
    let (status, created) = h
        .call(Method::POST, "/api/sessions", Some(req.clone()))
        .await;
    assert_eq!(status, StatusCode::CREATED);
    let id = created["id"].as_str().unwrap();
    let (_, again) = h.call(Method::POST, "/api/sessions", Some(req)).await;
    assert_eq!(again, created);

    let (status, got) = h
        .call(Method::GET, &format!("/api/sessions/{id}"), None)
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(got, created);
    assert_eq!(got["model_id"], "default-v1");

    let (status, matrix) = h
        .call(
            Method::GET,
            &format!("/api/redesign/landscape?session_id={id}"),
            None,
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(matrix["total"], 720);
    let counted: u64 = matrix["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["count"].as_u64().unwrap())
        .sum();
    assert_eq!(counted, 720);

    let (status, _) = h
        .call(
            Method::GET,
            "/api/redesign/landscape?session_id=missing",
            None,
        )
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = h.call(Method::GET, "/api/redesign/landscape", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (_, list) = h.call(Method::GET, "/api/sessions", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
}
