#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rptte_core::oracle::instances;
use rptte_core::synth::{generate, GroundTruth, SynthConfig};
use rptte_core::{Dataset, Date, Manifest};
use rptte_service::{router, AppState, ServiceConfig, OPENAPI_JSON};
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn planted(seed: u64) -> (Dataset, GroundTruth) {
    let cfg = SynthConfig {
        n_taxpayers: 200,
        n_investors: 60,
        n_invoices: 3_000,
        date_from: Date::from_ymd_opt(2014, 1, 1).unwrap(),
        date_to: Date::from_ymd_opt(2014, 12, 31).unwrap(),
        n_planted_groups: 4,
        planted_depth: 2,
        seed,
        ..SynthConfig::default()
    };
    generate(&cfg).unwrap()
}

/// One owner, two taxpayers, one invoice of 100.00 from `a` to `b` on
/// 2014-03-28, plus an unrelated pair that pruning removes.
pub fn tiny() -> Dataset {
    let d = |m, day| Date::from_ymd_opt(2014, m, day).unwrap();
    Dataset {
        manifest: Manifest::new(d(1, 1), d(12, 31)).unwrap(),
        taxpayers: ["a", "b", "lonely"].map(instances::taxpayer).to_vec(),
        investors: ["o", "weak"].map(instances::investor).to_vec(),
        investments: vec![
            instances::edge("o", "a", 0.6),
            instances::edge("o", "b", 0.4),
            instances::edge("weak", "lonely", 0.05),
        ],
        invoices: vec![instances::invoice("v1", d(3, 28), "a", "b", 10_000)],
        audits: vec![instances::audit("b")],
    }
}

pub fn state(ds: Dataset, capacity: usize) -> Arc<AppState> {
    let cfg = ServiceConfig {
        cache_capacity: capacity,
        ..ServiceConfig::default()
    };
    Arc::new(AppState::new(ds, cfg))
}

pub struct Api {
    pub state: Arc<AppState>,
    app: Router,
    doc: Value,
}

pub struct Reply {
    pub status: StatusCode,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).expect("JSON body")
    }
}

impl Api {
    pub fn new(state: Arc<AppState>) -> Self {
        Api {
            app: router(state.clone()),
            state,
            doc: serde_json::from_str(OPENAPI_JSON).unwrap(),
        }
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> Reply {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(serde_json::to_vec(&b).unwrap())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, bytes }
    }

    /// Calls the endpoint and validates the reply against the response
    /// schema declared for its path template, method and status.
    pub async fn checked(&self, method: Method, uri: &str, body: Option<Value>) -> Reply {
        let reply = self.call(method.clone(), uri, body).await;
        if let Err(e) = self.conforms(&method, uri, &reply) {
            panic!("{method} {uri} -> {}: {e}\n{}", reply.status, String::from_utf8_lossy(&reply.bytes));
        }
        reply
    }

    pub fn conforms(&self, method: &Method, uri: &str, reply: &Reply) -> Result<(), String> {
        let path = uri.split('?').next().unwrap();
        let (template, op) = self
            .doc["paths"]
            .as_object()
            .unwrap()
            .iter()
            .find(|(t, _)| template_matches(t, path))
            .ok_or_else(|| format!("no path template for {path}"))?;
        let op = op
            .get(method.as_str().to_ascii_lowercase())
            .ok_or_else(|| format!("{method} not declared for {template}"))?;
        let schema = op["responses"]
            .get(reply.status.as_str())
            .ok_or_else(|| format!("status {} not declared for {method} {template}", reply.status))?
            ["content"]["application/json"]["schema"]
            .clone();
        let wrapper = json!({
            "$schema": "https://json-schema.org/draft/2020-12/schema",
            "components": self.doc["components"],
            "allOf": [schema],
        });
        let validator = jsonschema::validator_for(&wrapper).map_err(|e| e.to_string())?;
        let body: Value = serde_json::from_slice(&reply.bytes).map_err(|e| e.to_string())?;
        let errors: Vec<String> = validator.iter_errors(&body).map(|e| format!("{} at {}", e, e.instance_path)).collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors.join("; "))
        }
    }

    pub async fn post_run(&self, params: Value) -> Value {
        let r = self.checked(Method::POST, "/api/v1/runs", Some(json!({ "params": params }))).await;
        assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.bytes));
        r.json()
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.checked(Method::GET, uri, None).await
    }
}

fn template_matches(template: &str, path: &str) -> bool {
    let t: Vec<&str> = template.split('/').collect();
    let p: Vec<&str> = path.split('/').collect();
    t.len() == p.len()
        && t.iter()
            .zip(&p)
            .all(|(a, b)| (a.starts_with('{') && !b.is_empty()) || a == b)
}

pub fn full_year(max_txn: u32, max_ctrl: u32) -> Value {
    json!({
        "period_start": "2014-01-01",
        "period_end": "2014-12-31",
        "max_txn_chain": max_txn,
        "max_ctrl_chain": max_ctrl,
    })
}
