//! HTTP handlers under `/api/v1`.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use rptte_core::features::{cumulative_daily_profit, daily_rpt_amount, rank_groups, ProfitStatus};
use rptte_core::fusion::ownership_chain;
use rptte_core::ingest::{AuditRecord, InvestmentEdge, InvestorProfile, TaxpayerProfile};
use rptte_core::{
    Amount, Date, FusionParams, GroupFeatures, NodeKind, Period, ProfitSeries, PruneReason,
    RankCriterion, RptteGroup,
};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::layout::longest_path_layers;
use crate::state::{AppState, RunHandle, RunResult};

pub const OPENAPI_JSON: &str = include_str!("../openapi.json");

type Shared = Arc<AppState>;
type ApiResult = Result<Response, ApiError>;
type Params = Result<Query<HashMap<String, String>>, QueryRejection>;

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/summary/daily-rpt", get(daily_summary))
        .route("/runs", post(create_run))
        .route("/runs/{run_id}", get(get_run))
        .route("/runs/{run_id}/groups", get(list_groups))
        .route("/runs/{run_id}/groups/{group_id}/graph", get(group_graph))
        .route(
            "/runs/{run_id}/groups/{group_id}/rpts/{rpt_id}/detail",
            get(rpt_detail),
        )
        .route("/taxpayers/{id}", get(locate_taxpayer))
        .route("/openapi.json", get(openapi))
        .fallback(no_route);
    Router::new().nest("/api/v1", api).with_state(state)
}

/// Serializes `body` with a JSON content type. Field order is fixed by the
/// types and maps are ordered, so equal values give equal bytes.
pub fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let bytes = serde_json::to_vec(body).expect("response serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn ok<T: Serialize>(body: &T) -> ApiResult {
    Ok(json_response(StatusCode::OK, body))
}

async fn no_route() -> ApiError {
    ApiError::not_found("no such endpoint")
}

async fn openapi() -> Response {
    (
        [(header::CONTENT_TYPE, "application/json")],
        OPENAPI_JSON,
    )
        .into_response()
}

fn query(q: Params) -> Result<HashMap<String, String>, ApiError> {
    q.map(|Query(m)| m)
        .map_err(|e| ApiError::bad_request(format!("malformed query: {e}")))
}

fn parse_date(field: &str, raw: &str) -> Result<Date, ApiError> {
    Date::parse_from_str(raw, "%Y-%m-%d").map_err(|_| {
        ApiError::invalid_params(vec![(field.into(), format!("`{raw}` is not YYYY-MM-DD"))])
    })
}

fn parse_bool(field: &str, raw: &str) -> Result<bool, ApiError> {
    match raw {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(ApiError::invalid_params(vec![(
            field.into(),
            format!("`{raw}` is not true|false"),
        )])),
    }
}

async fn run_or_baseline(state: &Shared, run_id: Option<&String>) -> Result<Arc<RunResult>, ApiError> {
    match run_id {
        Some(id) => state.result(id).await,
        None => {
            let handle = state.submit(state.baseline_params()).await?;
            state.result(&handle.run_id).await
        }
    }
}

#[derive(Serialize)]
struct DayTotal {
    date: Date,
    amount: Amount,
}

#[derive(Serialize)]
struct DailySummaryBody {
    run_id: String,
    from: Date,
    to: Date,
    days: Vec<DayTotal>,
}

async fn daily_summary(State(state): State<Shared>, q: Params) -> ApiResult {
    let q = query(q)?;
    let range = state.range();
    let from = q.get("from").map(|v| parse_date("from", v)).transpose()?.unwrap_or(range.start);
    let to = q.get("to").map(|v| parse_date("to", v)).transpose()?.unwrap_or(range.end);
    if from > to {
        return Err(ApiError::invalid_params(vec![(
            "to".into(),
            format!("{to} precedes {from}"),
        )]));
    }
    let run = run_or_baseline(&state, q.get("run_id")).await?;
    let (lo, hi) = (from.max(range.start), to.min(range.end));
    let days = if lo > hi {
        Vec::new()
    } else {
        daily_rpt_amount(&run.groups, Period { start: lo, end: hi })
            .days()
            .map(|(date, amount)| DayTotal { date, amount })
            .collect()
    };
    ok(&DailySummaryBody {
        run_id: state.run_id(&run.params),
        from,
        to,
        days,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRun {
    params: FusionParams,
}

async fn create_run(State(state): State<Shared>, body: Bytes) -> ApiResult {
    let req: CreateRun = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))?;
    let handle = state.submit(req.params).await?;
    ok(&handle)
}

async fn get_run(State(state): State<Shared>, Path(run_id): Path<String>) -> ApiResult {
    let handle: RunHandle = state
        .handle(&run_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown run `{run_id}`")))?;
    ok(&handle)
}

#[derive(Serialize)]
struct GlyphArc {
    seller_id: String,
    buyer_id: String,
    amount: Amount,
    n_rpts: usize,
}

#[derive(Serialize)]
struct GroupSummary {
    rank: usize,
    group_id: String,
    n_nodes: usize,
    features: GroupFeatures,
    traders: Vec<String>,
    arcs: Vec<GlyphArc>,
}

#[derive(Serialize)]
struct GroupList {
    run_id: String,
    sort: RankCriterion,
    desc: bool,
    total: usize,
    groups: Vec<GroupSummary>,
}

fn glyph_arcs(g: &RptteGroup) -> Vec<GlyphArc> {
    let mut pairs: BTreeMap<(&str, &str), (Amount, usize)> = BTreeMap::new();
    for r in &g.rpts {
        let e = pairs
            .entry((&r.invoice.seller_id, &r.invoice.buyer_id))
            .or_insert((Amount::ZERO, 0));
        e.0 += r.invoice.amount;
        e.1 += 1;
    }
    pairs
        .into_iter()
        .map(|((s, b), (amount, n))| GlyphArc {
            seller_id: s.to_string(),
            buyer_id: b.to_string(),
            amount,
            n_rpts: n,
        })
        .collect()
}

async fn list_groups(
    State(state): State<Shared>,
    Path(run_id): Path<String>,
    q: Params,
) -> ApiResult {
    let q = query(q)?;
    let sort = match q.get("sort") {
        Some(s) => RankCriterion::from_str(s)?,
        None => RankCriterion::default(),
    };
    let desc = q.get("desc").map(|v| parse_bool("desc", v)).transpose()?.unwrap_or(true);
    let limit = q
        .get("limit")
        .map(|v| {
            v.parse::<usize>().map_err(|_| {
                ApiError::invalid_params(vec![("limit".into(), format!("`{v}` is not a count"))])
            })
        })
        .transpose()?;
    let run = state.result(&run_id).await?;
    let ranked = rank_groups(&run.groups, sort, desc);
    let groups = ranked
        .iter()
        .take(limit.unwrap_or(usize::MAX))
        .enumerate()
        .map(|(i, g)| GroupSummary {
            rank: i + 1,
            group_id: g.group_id.clone(),
            n_nodes: g.nodes.len(),
            features: g.features.unwrap_or_default(),
            traders: g.traders().into_iter().map(str::to_string).collect(),
            arcs: glyph_arcs(g),
        })
        .collect();
    ok(&GroupList {
        run_id,
        sort,
        desc,
        total: ranked.len(),
        groups,
    })
}

fn group<'a>(run: &'a RunResult, group_id: &str) -> Result<&'a RptteGroup, ApiError> {
    run.group(group_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown group `{group_id}`")))
}

#[derive(Serialize)]
struct GraphNode {
    id: String,
    kind: NodeKind,
    evasion: bool,
    profit_status: Option<ProfitStatus>,
    layer: usize,
}

#[derive(Serialize)]
struct GraphEdge {
    src: String,
    dst: String,
    #[serde(rename = "type")]
    kind: &'static str,
    /// Share ratio for investments, summed amount for rpts.
    weight: f64,
    rpt_ids: Vec<String>,
    common_owners: Vec<String>,
}

#[derive(Serialize)]
struct GraphPayload {
    run_id: String,
    group_id: String,
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
}

async fn group_graph(
    State(state): State<Shared>,
    Path((run_id, group_id)): Path<(String, String)>,
) -> ApiResult {
    let run = state.result(&run_id).await?;
    let g = group(&run, &group_id)?;
    let layers = longest_path_layers(
        g.nodes.iter().map(|n| n.id.as_str()),
        g.investment_edges
            .iter()
            .map(|e| (e.investor_id.as_str(), e.investee_id.as_str())),
    );
    let period = run.params.period();
    let cfg = state.features();
    let mut nodes = Vec::with_capacity(g.nodes.len());
    for n in &g.nodes {
        let profit_status = if n.is_taxpayer() {
            let s = cumulative_daily_profit(&run.net, &run.trade, &n.id, period, &cfg)?;
            Some(ProfitStatus::of(s.final_value()))
        } else {
            None
        };
        nodes.push(GraphNode {
            id: n.id.clone(),
            kind: n.kind,
            evasion: n.has_evasion_record,
            profit_status,
            layer: layers[&n.id],
        });
    }
    let mut edges: Vec<GraphEdge> = g
        .investment_edges
        .iter()
        .map(|e| GraphEdge {
            src: e.investor_id.clone(),
            dst: e.investee_id.clone(),
            kind: "investment",
            weight: e.share_ratio,
            rpt_ids: Vec::new(),
            common_owners: Vec::new(),
        })
        .collect();
    type PairEdge = (Amount, Vec<String>, std::collections::BTreeSet<String>);
    let mut pairs: BTreeMap<(&str, &str), PairEdge> = BTreeMap::new();
    for r in &g.rpts {
        let e = pairs
            .entry((&r.invoice.seller_id, &r.invoice.buyer_id))
            .or_default();
        e.0 += r.invoice.amount;
        e.1.push(r.invoice.invoice_id.clone());
        e.2.extend(r.common_owners.iter().cloned());
    }
    for ((s, b), (amount, mut ids, owners)) in pairs {
        ids.sort();
        edges.push(GraphEdge {
            src: s.to_string(),
            dst: b.to_string(),
            kind: "rpt",
            weight: amount.as_units(),
            rpt_ids: ids,
            common_owners: owners.into_iter().collect(),
        });
    }
    ok(&GraphPayload {
        run_id,
        group_id,
        nodes,
        edges,
    })
}

#[derive(Serialize)]
struct RptInfo {
    invoice_id: String,
    date: Date,
    seller_id: String,
    buyer_id: String,
    amount: Amount,
    vat_amount: Amount,
    chain_length: u32,
    effective: bool,
    common_owners: Vec<String>,
}

#[derive(Serialize)]
struct Dot {
    invoice_id: String,
    date: Date,
    amount: Amount,
    seller_id: String,
    buyer_id: String,
    /// `forward` when it runs the same way as the selected transaction.
    direction: &'static str,
    /// What the transaction does to the selected buyer's and seller's profit.
    buyer_side: &'static str,
    seller_side: &'static str,
    effective: bool,
}

#[derive(Serialize)]
struct OwnerChains {
    owner_id: String,
    ratio_to_buyer: f64,
    ratio_to_seller: f64,
    to_buyer: Vec<InvestmentEdge>,
    to_seller: Vec<InvestmentEdge>,
}

#[derive(Serialize)]
struct RptDetail {
    run_id: String,
    group_id: String,
    granularity: &'static str,
    from: Date,
    to: Date,
    rpt: RptInfo,
    buyer: ProfitSeries,
    seller: ProfitSeries,
    dots: Vec<Dot>,
    owners: Vec<OwnerChains>,
}

async fn rpt_detail(
    State(state): State<Shared>,
    Path((run_id, group_id, rpt_id)): Path<(String, String, String)>,
    q: Params,
) -> ApiResult {
    let q = query(q)?;
    let granularity = match q.get("granularity").map(String::as_str) {
        None | Some("quarter") => "quarter",
        Some("year") => "year",
        Some(other) => {
            return Err(ApiError::invalid_params(vec![(
                "granularity".into(),
                format!("`{other}` is not quarter|year"),
            )]))
        }
    };
    let run = state.result(&run_id).await?;
    let g = group(&run, &group_id)?;
    let r = g
        .rpt(&rpt_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown rpt `{rpt_id}` in `{group_id}`")))?;
    let v = &r.invoice;
    let statement = if granularity == "year" {
        Period::year_of(v.date)
    } else {
        Period::quarter_of(v.date)
    };
    let range = state.range();
    let period = Period {
        start: statement.start.max(range.start),
        end: statement.end.min(range.end),
    };
    let cfg = state.features();
    let buyer = cumulative_daily_profit(&run.net, &run.trade, &v.buyer_id, period, &cfg)?;
    let seller = cumulative_daily_profit(&run.net, &run.trade, &v.seller_id, period, &cfg)?;

    let mut dots: Vec<Dot> = g
        .rpts
        .iter()
        .filter(|o| period.contains(o.invoice.date))
        .filter_map(|o| {
            let w = &o.invoice;
            let forward = w.seller_id == v.seller_id && w.buyer_id == v.buyer_id;
            let reverse = w.seller_id == v.buyer_id && w.buyer_id == v.seller_id;
            (forward || reverse).then(|| Dot {
                invoice_id: w.invoice_id.clone(),
                date: w.date,
                amount: w.amount,
                seller_id: w.seller_id.clone(),
                buyer_id: w.buyer_id.clone(),
                direction: if forward { "forward" } else { "reverse" },
                buyer_side: if forward { "loss" } else { "profit" },
                seller_side: if forward { "profit" } else { "loss" },
                effective: o.effective,
            })
        })
        .collect();
    dots.sort_by(|a, b| (a.date, &a.invoice_id).cmp(&(b.date, &b.invoice_id)));

    let mut owners = Vec::new();
    for o in &r.common_owners {
        owners.push(OwnerChains {
            owner_id: o.clone(),
            ratio_to_buyer: run.net.final_investment_ratio(o, &v.buyer_id)?,
            ratio_to_seller: run.net.final_investment_ratio(o, &v.seller_id)?,
            to_buyer: ownership_chain(&run.net, o, &v.buyer_id)?,
            to_seller: ownership_chain(&run.net, o, &v.seller_id)?,
        });
    }
    ok(&RptDetail {
        run_id,
        group_id,
        granularity,
        from: period.start,
        to: period.end,
        rpt: RptInfo {
            invoice_id: v.invoice_id.clone(),
            date: v.date,
            seller_id: v.seller_id.clone(),
            buyer_id: v.buyer_id.clone(),
            amount: v.amount,
            vat_amount: v.vat_amount,
            chain_length: r.chain_length,
            effective: r.effective,
            common_owners: r.common_owners.clone(),
        },
        buyer,
        seller,
        dots,
        owners,
    })
}

#[derive(Serialize)]
struct TaxpayerRecord {
    id: String,
    run_id: Option<String>,
    /// Present in the pruned network used for the lookup.
    found: bool,
    kind: NodeKind,
    evasion: bool,
    prune_reason: Option<PruneReason>,
    group_id: Option<String>,
    profile: Option<TaxpayerProfile>,
    investor: Option<InvestorProfile>,
    audits: Vec<AuditRecord>,
}

async fn locate_taxpayer(
    State(state): State<Shared>,
    Path(id): Path<String>,
    q: Params,
) -> ApiResult {
    let q = query(q)?;
    let node = state
        .raw_net
        .node(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown entity `{id}`")))?;
    let run = match q.get("run_id") {
        Some(r) => Some(state.result(r).await?),
        None => None,
    };
    let net = run.as_ref().map_or_else(|| state.default_net(), |r| &r.net);
    let mut audits: Vec<AuditRecord> = state
        .dataset
        .audits
        .iter()
        .filter(|a| a.taxpayer_id == id)
        .cloned()
        .collect();
    audits.sort_by(|a, b| (a.audit_date, &a.violation_type).cmp(&(b.audit_date, &b.violation_type)));
    ok(&TaxpayerRecord {
        run_id: run.as_ref().map(|r| state.run_id(&r.params)),
        found: net.contains(&id),
        kind: node.kind,
        evasion: node.has_evasion_record,
        prune_reason: net.pruned().get(&id).copied(),
        group_id: run
            .as_ref()
            .and_then(|r| r.group_of(&id))
            .map(|g| g.group_id.clone()),
        profile: node.taxpayer,
        investor: node.investor,
        audits,
        id,
    })
}
