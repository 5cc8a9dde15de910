mod common;

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use gkm_cli::pipeline::build_from_corpus;
use gkm_cli::service::{router, ServiceState};
use gkm_core::corpus::{vectorize_corpus, IngestConfig};
use gkm_core::gkm::{KnowledgeMap, NeighborQuery};
use serde_json::Value;
use tower::ServiceExt;

fn map() -> &'static KnowledgeMap {
    static MAP: OnceLock<KnowledgeMap> = OnceLock::new();
    MAP.get_or_init(|| {
        let corpus = vectorize_corpus(common::small_corpus(), &IngestConfig::default()).unwrap();
        build_from_corpus(&corpus, &common::small_config()).unwrap().map
    })
}

fn app() -> Router {
    router(Arc::new(ServiceState::new(map().clone()).unwrap()))
}

async fn call(app: Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_owned())))
        .unwrap();
    let res = app.oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

async fn get_json(uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(app(), Method::GET, uri, None).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn first_id() -> String {
    map().entries()[0].doc_id.clone()
}

#[tokio::test]
async fn meta_echoes_the_map() {
    let (s, v) = get_json("/api/map/meta").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["dim"], map().dim());
    assert_eq!(v["entry_count"], map().len());
    assert_eq!(v["version"], "1");
    assert_eq!(v["provenance_hash"].as_str().unwrap().len(), 64);
}

#[tokio::test]
async fn docs_and_unknown_ids() {
    let id = first_id();
    let (s, v) = get_json(&format!("/api/docs/{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["coords"], serde_json::to_value(map().coords(&id).unwrap()).unwrap());
    let (s, v) = get_json("/api/docs/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_id");
    common::assert_valid("error", &v);
}

#[tokio::test]
async fn neighbors_pass_through_library() {
    let id = first_id();
    let (s, v) = get_json(&format!("/api/neighbors?id={id}&k=5")).await;
    assert_eq!(s, StatusCode::OK);
    let lib = map().neighbors(NeighborQuery::Id(&id), 5).unwrap();
    assert_eq!(v, serde_json::to_value(&lib).unwrap());
    common::assert_valid("neighbors", &v);

    let c = map().coords(&id).unwrap();
    let q: Vec<String> = c.iter().map(f64::to_string).collect();
    let (s, v) = get_json(&format!("/api/neighbors?coords={}&k=3", q.join(","))).await;
    assert_eq!(s, StatusCode::OK);
    let lib = map().neighbors(NeighborQuery::Coords(c), 3).unwrap();
    assert_eq!(v, serde_json::to_value(&lib).unwrap());
}

#[tokio::test]
async fn malformed_requests_are_400() {
    for uri in [
        "/api/neighbors",
        "/api/neighbors?id=a&coords=1",
        "/api/neighbors?coords=1,x",
        "/api/neighbors?coords=1,2,3,4,5,6,7",
        "/api/neighbors?id=a&k=-1",
        "/api/relevance?a=x",
        "/api/view?dim=4",
        "/api/view?dim=two",
    ] {
        let (s, v) = get_json(uri).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{uri}");
        common::assert_valid("error", &v);
    }
    let (s, _) = call(app(), Method::POST, "/api/locate", Some("{not json")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(app(), Method::POST, "/api/locate", Some("{\"txt\": \"a\"}")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn relevance_and_unknown_ids() {
    let id = first_id();
    let (s, v) = get_json(&format!("/api/relevance?a={id}&b={id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["distance"], 0.0);
    let (s, _) = get_json(&format!("/api/relevance?a={id}&b=nope")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn locate_maps_text_or_422() {
    let id = first_id();
    let text = common::small_corpus().into_iter().find(|d| d.id == id).unwrap().text;
    let body = serde_json::json!({ "text": text }).to_string();
    let (s, b) = call(app(), Method::POST, "/api/locate", Some(&body)).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["coords"], serde_json::to_value(map().coords(&id).unwrap()).unwrap());

    let (s, b) = call(app(), Method::POST, "/api/locate", Some("{\"text\": \"qqqq zzzz\"}")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["error"]["code"], "unmappable");
}

#[tokio::test]
async fn view_and_stability() {
    for dim in [2, 3] {
        let (s, v) = get_json(&format!("/api/view?dim={dim}")).await;
        assert_eq!(s, StatusCode::OK);
        common::assert_valid("view", &v);
        assert_eq!(v, serde_json::to_value(map().project_to_view(dim).unwrap()).unwrap());
    }
    let (s, v) = get_json("/api/stability").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, serde_json::to_value(&map().provenance().stability_reports).unwrap());
}

#[tokio::test]
async fn index_and_unknown_routes() {
    let (s, b) = call(app(), Method::GET, "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(b).unwrap().contains("/api/map/meta"));
    let (s, _) = get_json("/api/nothing").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn responses_replay_identically() {
    let id = first_id();
    let requests = [
        (Method::GET, "/api/map/meta".to_owned(), None),
        (Method::GET, format!("/api/neighbors?id={id}&k=7"), None),
        (Method::GET, "/api/view?dim=3".to_owned(), None),
        (Method::POST, "/api/locate".to_owned(), Some("{\"text\": \"bad ba\"}")),
        (Method::GET, "/api/docs/zzz".to_owned(), None),
    ];
    let mut first = Vec::new();
    for (m, u, b) in &requests {
        first.push(call(app(), m.clone(), u, *b).await);
    }
    // Concurrent replay against one shared router.
    let shared = app();
    let handles: Vec<_> = requests
        .iter()
        .cloned()
        .map(|(m, u, b)| {
            let app = shared.clone();
            let b = b.map(str::to_owned);
            tokio::spawn(async move { call(app, m, &u, b.as_deref()).await })
        })
        .collect();
    for (h, expected) in handles.into_iter().zip(first) {
        assert_eq!(h.await.unwrap(), expected);
    }
}
