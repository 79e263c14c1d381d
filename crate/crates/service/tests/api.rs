mod common;

use std::collections::{BTreeMap, BTreeSet};

use axum::http::{Method, StatusCode};
use common::{full_year, planted, state, tiny, Api};
use rptte_core::oracle;
use rptte_core::{Date, Period, RankCriterion};
use serde_json::{json, Value};

#[tokio::test]
async fn identical_runs_share_an_id_and_bytes() {
    let api = Api::new(state(tiny(), 4));
    let a = api.checked(Method::POST, "/api/v1/runs", Some(json!({"params": full_year(4, 2)}))).await;
    let b = api.checked(Method::POST, "/api/v1/runs", Some(json!({"params": full_year(4, 2)}))).await;
    assert_eq!(a.status, StatusCode::OK);
    assert_eq!(a.bytes, b.bytes);
    assert_eq!(api.state.computations(), 1);
    let h = a.json();
    assert_eq!(h["status"], "done");
    assert_eq!(h["n_groups"], 1);
    let again = api.get(&format!("/api/v1/runs/{}", h["run_id"].as_str().unwrap())).await;
    assert_eq!(again.bytes, a.bytes);

    let other = api.post_run(full_year(3, 2)).await;
    assert_ne!(other["run_id"], h["run_id"]);
}

#[tokio::test]
async fn invalid_params_list_every_field() {
    let api = Api::new(state(tiny(), 4));
    let r = api
        .checked(
            Method::POST,
            "/api/v1/runs",
            Some(json!({"params": {
                "period_start": "2014-05-01",
                "period_end": "2015-02-01",
                "max_txn_chain": 0,
                "max_ctrl_chain": 0,
                "min_ratio": 1.5,
            }})),
        )
        .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let body = r.json();
    assert_eq!(body["code"], "invalid_params");
    let fields: BTreeSet<&str> = body["field_errors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["field"].as_str().unwrap())
        .collect();
    assert_eq!(
        fields,
        BTreeSet::from(["max_txn_chain", "max_ctrl_chain", "min_ratio", "period_end"])
    );

    let r = api.checked(Method::POST, "/api/v1/runs", Some(json!({"nonsense": 1}))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["code"], "bad_request");
    assert_eq!(api.state.computations(), 0);
}

#[tokio::test]
async fn empty_period_gives_zero_groups() {
    let api = Api::new(state(tiny(), 4));
    let h = api
        .post_run(json!({
            "period_start": "2014-06-01",
            "period_end": "2014-06-30",
            "max_txn_chain": 4,
            "max_ctrl_chain": 2,
        }))
        .await;
    assert_eq!(h["status"], "done");
    assert_eq!(h["n_groups"], 0);
    let list = api.get(&format!("/api/v1/runs/{}/groups", h["run_id"].as_str().unwrap())).await.json();
    assert_eq!(list["total"], 0);
}

#[tokio::test]
async fn groups_follow_ranking_and_glyph_sums() {
    let (ds, truth) = planted(7);
    let api = Api::new(state(ds.clone(), 4));
    let params = truth.recommended_params(&ds.manifest);
    let h = api.post_run(serde_json::to_value(params).unwrap()).await;
    let run_id = h["run_id"].as_str().unwrap().to_string();
    let run = api.state.result(&run_id).await.unwrap();

    for criterion in RankCriterion::ALL {
        for desc in [true, false] {
            let uri = format!("/api/v1/runs/{run_id}/groups?sort={}&desc={desc}", criterion.as_str());
            let list = api.get(&uri).await.json();
            let got: Vec<&str> = list["groups"].as_array().unwrap().iter().map(|g| g["group_id"].as_str().unwrap()).collect();
            assert_eq!(got, oracle::rank_by_selection(&run.groups, criterion, desc));
        }
    }
    let default = api.get(&format!("/api/v1/runs/{run_id}/groups")).await.json();
    assert_eq!(default["sort"], "effective_rpts");
    assert_eq!(default["desc"], true);

    let limited = api.get(&format!("/api/v1/runs/{run_id}/groups?limit=0")).await.json();
    assert_eq!(limited["groups"].as_array().unwrap().len(), 0);
    assert_eq!(limited["total"], run.groups.len());

    // Arc weights are the summed rpt amounts per directed pair.
    for g in default["groups"].as_array().unwrap() {
        let group = run.group(g["group_id"].as_str().unwrap()).unwrap();
        let mut sums: BTreeMap<(String, String), i64> = BTreeMap::new();
        for r in &group.rpts {
            *sums.entry((r.invoice.seller_id.clone(), r.invoice.buyer_id.clone())).or_default() += r.invoice.amount.cents();
        }
        let arcs = g["arcs"].as_array().unwrap();
        assert_eq!(arcs.len(), sums.len());
        for a in arcs {
            let key = (a["seller_id"].as_str().unwrap().to_string(), a["buyer_id"].as_str().unwrap().to_string());
            assert_eq!((a["amount"].as_f64().unwrap() * 100.0).round() as i64, sums[&key]);
        }
    }

    // Every planted group appears with exact membership.
    for plant in &truth.groups {
        let found = run.groups.iter().any(|g| g.node_ids().map(str::to_string).collect::<Vec<_>>() == plant.members);
        assert!(found, "{}", plant.label);
    }

    let bad = api.get(&format!("/api/v1/runs/{run_id}/groups?sort=loudest")).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    let bad = api.get(&format!("/api/v1/runs/{run_id}/groups?limit=-1")).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    let missing = api.get("/api/v1/runs/r00000000000000000000000000000000/groups").await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
}

/// Longest simple path (in edges) ending at each node, by enumeration.
fn layer_oracle(nodes: &[String], edges: &[(String, String)]) -> BTreeMap<String, usize> {
    fn walk(u: &str, edges: &[(String, String)], seen: &mut Vec<String>, depth: usize, best: &mut BTreeMap<String, usize>) {
        let e = best.entry(u.to_string()).or_insert(0);
        *e = (*e).max(depth);
        for (a, b) in edges.iter().filter(|(a, _)| a == u) {
            let _ = a;
            if seen.contains(b) {
                continue;
            }
            seen.push(b.clone());
            walk(b, edges, seen, depth + 1, best);
            seen.pop();
        }
    }
    let mut best = BTreeMap::new();
    for n in nodes {
        walk(n, edges, &mut vec![n.clone()], 0, &mut best);
    }
    best
}

#[tokio::test]
async fn graph_layers_and_flags() {
    let (ds, truth) = planted(8);
    let api = Api::new(state(ds.clone(), 4));
    let h = api.post_run(serde_json::to_value(truth.recommended_params(&ds.manifest)).unwrap()).await;
    let run_id = h["run_id"].as_str().unwrap().to_string();
    let run = api.state.result(&run_id).await.unwrap();
    let flagged: BTreeSet<&str> = ds.audits.iter().map(|a| a.taxpayer_id.as_str()).collect();
    for g in &run.groups {
        let body = api.get(&format!("/api/v1/runs/{run_id}/groups/{}/graph", g.group_id)).await.json();
        let layer: BTreeMap<String, usize> = body["nodes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|n| (n["id"].as_str().unwrap().to_string(), n["layer"].as_u64().unwrap() as usize))
            .collect();
        for n in body["nodes"].as_array().unwrap() {
            let id = n["id"].as_str().unwrap();
            assert_eq!(n["evasion"].as_bool().unwrap(), flagged.contains(id));
            assert_eq!(n["profit_status"].is_null(), n["kind"] == "investor");
        }
        let inv: Vec<(String, String)> = body["edges"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|e| e["type"] == "investment")
            .map(|e| (e["src"].as_str().unwrap().to_string(), e["dst"].as_str().unwrap().to_string()))
            .collect();
        assert_eq!(inv.len(), g.investment_edges.len());
        // The synthetic ownership is acyclic, so layering is exact longest path.
        let nodes: Vec<String> = layer.keys().cloned().collect();
        let sources: Vec<String> = nodes.iter().filter(|n| !inv.iter().any(|(_, b)| b == *n)).cloned().collect();
        let expect = layer_oracle(&sources, &inv);
        for (id, l) in &layer {
            assert_eq!(*l, expect.get(id).copied().unwrap_or(0), "{id}");
        }
        for (a, b) in &inv {
            assert!(layer[a] < layer[b]);
        }
        let rpt_total: usize = body["edges"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|e| e["type"] == "rpt")
            .map(|e| e["rpt_ids"].as_array().unwrap().len())
            .sum();
        assert_eq!(rpt_total, g.rpts.len());
    }
    let missing = api.get(&format!("/api/v1/runs/{run_id}/groups/gnothing/graph")).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn minimal_group_has_two_layers() {
    let api = Api::new(state(tiny(), 4));
    let h = api.post_run(full_year(4, 2)).await;
    let run_id = h["run_id"].as_str().unwrap();
    let groups = api.get(&format!("/api/v1/runs/{run_id}/groups")).await.json();
    let gid = groups["groups"][0]["group_id"].as_str().unwrap().to_string();
    let graph = api.get(&format!("/api/v1/runs/{run_id}/groups/{gid}/graph")).await.json();
    let layers: BTreeMap<&str, u64> = graph["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| (n["id"].as_str().unwrap(), n["layer"].as_u64().unwrap()))
        .collect();
    assert_eq!(layers, BTreeMap::from([("o", 0), ("a", 1), ("b", 1)]));
}

#[tokio::test]
async fn detail_series_match_rescan() {
    let (ds, truth) = planted(9);
    let api = Api::new(state(ds.clone(), 4));
    let h = api.post_run(serde_json::to_value(truth.recommended_params(&ds.manifest)).unwrap()).await;
    let run_id = h["run_id"].as_str().unwrap().to_string();
    let run = api.state.result(&run_id).await.unwrap();
    let g = &run.groups[0];
    for r in g.rpts.iter().take(5) {
        for gran in ["quarter", "year"] {
            let uri = format!(
                "/api/v1/runs/{run_id}/groups/{}/rpts/{}/detail?granularity={gran}",
                g.group_id, r.invoice.invoice_id
            );
            let body = api.get(&uri).await.json();
            let statement = if gran == "year" { Period::year_of(r.invoice.date) } else { Period::quarter_of(r.invoice.date) };
            let buyer = body["buyer"]["values"].as_array().unwrap();
            assert_eq!(buyer.len(), statement.days());
            for (side, who) in [("buyer", &r.invoice.buyer_id), ("seller", &r.invoice.seller_id)] {
                let events: Vec<(Date, i64)> = run
                    .trade
                    .touching(who)
                    .map(|v| (v.date, if &v.seller_id == who { v.amount.cents() } else { -v.amount.cents() }))
                    .collect();
                let expected = oracle::profit_by_rescan(&events, statement);
                let got: Vec<i64> = body[side]["values"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|x| (x.as_f64().unwrap() * 100.0).round() as i64)
                    .collect();
                assert_eq!(got, expected);
            }
            let dots = body["dots"].as_array().unwrap();
            assert!(dots.iter().any(|d| d["invoice_id"] == r.invoice.invoice_id.as_str() && d["direction"] == "forward"));
            assert_eq!(body["owners"].as_array().unwrap().len(), r.common_owners.len());
            for o in body["owners"].as_array().unwrap() {
                let chain = o["to_buyer"].as_array().unwrap();
                assert_eq!(chain.last().unwrap()["investee_id"], r.invoice.buyer_id.as_str());
                assert_eq!(chain[0]["investor_id"], o["owner_id"]);
            }
        }
    }
    let r = &g.rpts[0];
    let base = format!("/api/v1/runs/{run_id}/groups/{}/rpts", g.group_id);
    let bad = api.get(&format!("{base}/{}/detail?granularity=week", r.invoice.invoice_id)).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    let missing = api.get(&format!("{base}/nope/detail")).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn taxpayer_lookup() {
    let (ds, truth) = planted(10);
    let api = Api::new(state(ds.clone(), 4));
    let h = api.post_run(serde_json::to_value(truth.recommended_params(&ds.manifest)).unwrap()).await;
    let run_id = h["run_id"].as_str().unwrap().to_string();
    let run = api.state.result(&run_id).await.unwrap();
    for plant in &truth.groups {
        let expected = run.groups.iter().find(|g| g.contains(&plant.members[0])).unwrap();
        for m in &plant.members {
            let body = api.get(&format!("/api/v1/taxpayers/{m}?run_id={run_id}")).await.json();
            assert_eq!(body["found"], true);
            assert_eq!(body["group_id"], expected.group_id.as_str());
        }
    }
    let missing = api.get("/api/v1/taxpayers/NOBODY").await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    assert_eq!(missing.json()["code"], "not_found");

    let tiny_api = Api::new(state(tiny(), 4));
    let lonely = tiny_api.get("/api/v1/taxpayers/lonely").await.json();
    assert_eq!(lonely["found"], false);
    assert_eq!(lonely["prune_reason"], "single_taxpayer_component");
    let weak = tiny_api.get("/api/v1/taxpayers/weak").await.json();
    assert_eq!(weak["prune_reason"], "low_investment_ratio");
    let b = tiny_api.get("/api/v1/taxpayers/b").await.json();
    assert_eq!(b["evasion"], true);
    assert_eq!(b["audits"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn daily_summary_ranges() {
    let api = Api::new(state(tiny(), 4));
    let body = api.get("/api/v1/summary/daily-rpt").await.json();
    let days = body["days"].as_array().unwrap();
    assert_eq!(days.len(), 365);
    let nonzero: Vec<&Value> = days.iter().filter(|d| d["amount"].as_f64().unwrap() != 0.0).collect();
    assert_eq!(nonzero.len(), 1);
    assert_eq!(nonzero[0]["date"], "2014-03-28");
    assert_eq!(nonzero[0]["amount"], 100.0);

    let march = api.get("/api/v1/summary/daily-rpt?from=2014-03-01&to=2014-03-31").await.json();
    assert_eq!(march["days"].as_array().unwrap().len(), 31);
    let outside = api.get("/api/v1/summary/daily-rpt?from=2016-01-01&to=2016-02-01").await.json();
    assert!(outside["days"].as_array().unwrap().is_empty());
    let reversed = api.get("/api/v1/summary/daily-rpt?from=2014-03-31&to=2014-03-01").await;
    assert_eq!(reversed.status, StatusCode::BAD_REQUEST);
    let garbage = api.get("/api/v1/summary/daily-rpt?from=yesterday").await;
    assert_eq!(garbage.status, StatusCode::BAD_REQUEST);
    let unknown = api.get("/api/v1/summary/daily-rpt?run_id=rmissing").await;
    assert_eq!(unknown.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn eviction_then_recompute_is_byte_identical() {
    let (ds, _) = planted(11);
    let api = Api::new(state(ds, 1));
    let a = api.post_run(full_year(3, 2)).await;
    let a_id = a["run_id"].as_str().unwrap().to_string();
    let uris = |id: &str| {
        vec![
            format!("/api/v1/runs/{id}/groups"),
            format!("/api/v1/runs/{id}/groups?sort=rpt_amount&desc=false"),
            format!("/api/v1/summary/daily-rpt?run_id={id}"),
        ]
    };
    let mut before = Vec::new();
    for u in uris(&a_id) {
        before.push(api.get(&u).await.bytes);
    }
    let _b = api.post_run(full_year(2, 1)).await;
    assert_eq!(api.state.computations(), 2);
    let mut after = Vec::new();
    for u in uris(&a_id) {
        after.push(api.get(&u).await.bytes);
    }
    assert_eq!(api.state.computations(), 3, "evicted run was recomputed once");
    assert_eq!(before, after);
    assert_eq!(api.state.cached_runs(), 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_duplicates_coalesce() {
    let (ds, _) = planted(12);
    let st = state(ds, 4);
    let mut tasks = Vec::new();
    for _ in 0..8 {
        let api = Api::new(st.clone());
        tasks.push(tokio::spawn(async move { api.post_run(full_year(3, 2)).await }));
    }
    let mut ids = BTreeSet::new();
    for t in tasks {
        ids.insert(t.await.unwrap()["run_id"].as_str().unwrap().to_string());
    }
    assert_eq!(ids.len(), 1);
    assert_eq!(st.computations(), 1);
}

#[tokio::test]
async fn unknown_route_and_description() {
    let api = Api::new(state(tiny(), 2));
    let r = api.call(Method::GET, "/api/v1/nowhere", None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.json()["code"], "not_found");
    let doc = api.get("/api/v1/openapi.json").await.json();
    assert_eq!(doc["openapi"], "3.1.0");
}

#[tokio::test]
async fn contract_check_catches_drift() {
    let api = Api::new(state(tiny(), 2));
    let good = api.get("/api/v1/summary/daily-rpt?from=2014-03-27&to=2014-03-28").await;
    assert!(api.conforms(&Method::GET, "/api/v1/summary/daily-rpt", &good).is_ok());
    let mut body = good.json();
    body.as_object_mut().unwrap().insert("extra".into(), json!(1));
    let drifted = common::Reply { status: good.status, bytes: serde_json::to_vec(&body).unwrap() };
    assert!(api.conforms(&Method::GET, "/api/v1/summary/daily-rpt", &drifted).is_err());
    body.as_object_mut().unwrap().remove("extra");
    body["days"][0]["amount"] = json!(-1.0);
    let negative = common::Reply { status: good.status, bytes: serde_json::to_vec(&body).unwrap() };
    assert!(api.conforms(&Method::GET, "/api/v1/summary/daily-rpt", &negative).is_err());
    let undeclared = common::Reply { status: StatusCode::IM_A_TEAPOT, bytes: good.bytes.clone() };
    assert!(api.conforms(&Method::GET, "/api/v1/summary/daily-rpt", &undeclared).is_err());
}
