//! Brute-force reference implementations.
//!
//! Everything here works from the raw node and edge lists by exhaustive
//! enumeration, sharing no code path with the engine. Used by tests and by
//! the synthetic generator to verify planted structures. Exponential in the
//! worst case; intended for small components.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::features::{FeatureConfig, RankCriterion};
use crate::fusion::{FusionParams, GroupSignature, RptteGroup};
use crate::ingest::Invoice;
use crate::network::{TaxpayerNetwork, TradeNetwork};
use crate::{Date, Period};

/// Plain adjacency built from the raw edge list.
struct Graph<'a> {
    ids: Vec<&'a str>,
    /// (target, ratio) per source, in edge-list order.
    out: Vec<Vec<(usize, f64)>>,
    undirected: Vec<BTreeSet<usize>>,
    taxpayer: Vec<bool>,
}

impl<'a> Graph<'a> {
    fn new(net: &'a TaxpayerNetwork) -> Self {
        let ids: Vec<&str> = net.nodes().iter().map(|n| n.id.as_str()).collect();
        let pos = |id: &str| ids.iter().position(|x| *x == id).expect("edge endpoint is a node");
        let mut out = vec![Vec::new(); ids.len()];
        let mut undirected = vec![BTreeSet::new(); ids.len()];
        for e in net.edges() {
            let (s, t) = (pos(&e.investor_id), pos(&e.investee_id));
            out[s].push((t, e.share_ratio));
            undirected[s].insert(t);
            undirected[t].insert(s);
        }
        Graph {
            taxpayer: net.nodes().iter().map(|n| n.is_taxpayer()).collect(),
            ids,
            out,
            undirected,
        }
    }

    fn pos(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| *x == id)
    }

    /// Every simple path `s → t`, each as its left-to-right ratio product
    /// together with its node sequence.
    fn simple_paths(&self, s: usize, t: usize) -> Vec<(f64, Vec<usize>)> {
        fn walk(
            g: &Graph<'_>,
            u: usize,
            t: usize,
            product: f64,
            path: &mut Vec<usize>,
            out: &mut Vec<(f64, Vec<usize>)>,
        ) {
            if u == t && path.len() > 1 {
                out.push((product, path.clone()));
                return;
            }
            for &(v, r) in &g.out[u] {
                if path.contains(&v) {
                    continue;
                }
                path.push(v);
                walk(g, v, t, product * r, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        if s != t {
            walk(self, s, t, 1.0, &mut vec![s], &mut out);
        }
        out
    }

    fn max_product(&self, s: usize, t: usize) -> f64 {
        self.simple_paths(s, t)
            .into_iter()
            .map(|(p, _)| p)
            .fold(0.0, f64::max)
    }

    fn bfs(&self, s: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.ids.len()];
        dist[s] = Some(0);
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &self.undirected[u] {
                if dist[v].is_none() {
                    dist[v] = Some(dist[u].unwrap() + 1);
                    q.push_back(v);
                }
            }
        }
        dist
    }

    fn common_owners(&self, b: usize, s: usize, min_ratio: f64) -> BTreeSet<usize> {
        let reach = self.bfs(b);
        (0..self.ids.len())
            .filter(|&v| v != b && v != s && reach[v].is_some())
            .filter(|&v| self.max_product(v, b) >= min_ratio && self.max_product(v, s) >= min_ratio)
            .collect()
    }
}

/// Maximum simple-path ratio product by exhaustive enumeration.
pub fn final_investment_ratio(net: &TaxpayerNetwork, investor: &str, taxpayer: &str) -> Option<f64> {
    let g = Graph::new(net);
    Some(g.max_product(g.pos(investor)?, g.pos(taxpayer)?))
}

/// Every simple ownership path as `(product, node ids)`.
pub fn ownership_paths(net: &TaxpayerNetwork, owner: &str, taxpayer: &str) -> Vec<(f64, Vec<String>)> {
    let g = Graph::new(net);
    let (Some(s), Some(t)) = (g.pos(owner), g.pos(taxpayer)) else {
        return Vec::new();
    };
    g.simple_paths(s, t)
        .into_iter()
        .map(|(p, path)| (p, path.into_iter().map(|i| g.ids[i].to_string()).collect()))
        .collect()
}

/// Undirected hop distance by breadth-first search.
pub fn undirected_distance(net: &TaxpayerNetwork, a: &str, b: &str) -> Option<u32> {
    let g = Graph::new(net);
    g.bfs(g.pos(a)?)[g.pos(b)?]
}

pub fn common_beneficial_owners(
    net: &TaxpayerNetwork,
    buyer: &str,
    seller: &str,
    min_ratio: f64,
) -> BTreeSet<String> {
    let g = Graph::new(net);
    let (Some(b), Some(s)) = (g.pos(buyer), g.pos(seller)) else {
        return BTreeSet::new();
    };
    g.common_owners(b, s, min_ratio)
        .into_iter()
        .map(|v| g.ids[v].to_string())
        .collect()
}

/// Ids kept by the pruning rules, evaluated from scratch.
pub fn prune_survivors(net: &TaxpayerNetwork, min_ratio: f64) -> BTreeSet<String> {
    let g = Graph::new(net);
    let n = g.ids.len();
    let investor: Vec<bool> = net
        .nodes()
        .iter()
        .map(|x| x.kind == crate::NodeKind::Investor)
        .collect();
    let qualifies: Vec<bool> = (0..n)
        .map(|v| !investor[v] || (0..n).any(|t| g.taxpayer[t] && g.max_product(v, t) >= min_ratio))
        .collect();
    // Components over the surviving nodes only.
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if !qualifies[s] || comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &g.undirected[u] {
                if qualifies[v] && comp[v] == usize::MAX {
                    comp[v] = next;
                    q.push_back(v);
                }
            }
        }
        next += 1;
    }
    let mut taxpayers = vec![0; next];
    for v in (0..n).filter(|&v| qualifies[v] && g.taxpayer[v]) {
        taxpayers[comp[v]] += 1;
    }
    (0..n)
        .filter(|&v| qualifies[v] && taxpayers[comp[v]] >= 2)
        .map(|v| g.ids[v].to_string())
        .collect()
}

/// Whether a single invoice passes the fusion predicate.
pub fn fuses(
    net: &TaxpayerNetwork,
    seller: &str,
    buyer: &str,
    max_txn_chain: u32,
    min_ratio: f64,
) -> Option<(u32, BTreeSet<String>)> {
    let g = Graph::new(net);
    let (s, b) = (g.pos(seller)?, g.pos(buyer)?);
    if !g.taxpayer[s] || !g.taxpayer[b] {
        return None;
    }
    let d = g.bfs(s)[b]?;
    if d > max_txn_chain {
        return None;
    }
    let owners = g.common_owners(b, s, min_ratio);
    if owners.is_empty() {
        return None;
    }
    Some((d, owners.into_iter().map(|v| g.ids[v].to_string()).collect()))
}

/// Group detection by exhaustive per-invoice checks.
pub fn detect_groups(
    net: &TaxpayerNetwork,
    trade: &TradeNetwork,
    params: &FusionParams,
) -> Vec<GroupSignature> {
    let g = Graph::new(net);
    let n = g.ids.len();
    let mut fused: Vec<(usize, usize, String, u32, BTreeSet<String>)> = Vec::new();
    for v in trade.invoices() {
        if v.date < params.period_start || v.date > params.period_end {
            continue;
        }
        let (Some(s), Some(b)) = (g.pos(&v.seller_id), g.pos(&v.buyer_id)) else {
            continue;
        };
        let Some(d) = g.bfs(s)[b] else { continue };
        if d > params.max_txn_chain {
            continue;
        }
        let owners = g.common_owners(b, s, params.min_ratio);
        if owners.is_empty() {
            continue;
        }
        let owners = owners.into_iter().map(|o| g.ids[o].to_string()).collect();
        fused.push((s, b, v.invoice_id.clone(), d, owners));
    }

    let traders: BTreeSet<usize> = fused.iter().flat_map(|f| [f.0, f.1]).collect();
    let trader_dists: Vec<Vec<Option<u32>>> = traders.iter().map(|&t| g.bfs(t)).collect();
    let kept: Vec<bool> = (0..n)
        .map(|v| {
            trader_dists
                .iter()
                .filter_map(|d| d[v])
                .any(|d| d <= params.max_ctrl_chain)
        })
        .collect();

    // Connectivity over kept nodes via investment edges and fused invoices.
    let mut adj = vec![BTreeSet::new(); n];
    for u in 0..n {
        for &(v, _) in &g.out[u] {
            if kept[u] && kept[v] {
                adj[u].insert(v);
                adj[v].insert(u);
            }
        }
    }
    for f in &fused {
        adj[f.0].insert(f.1);
        adj[f.1].insert(f.0);
    }
    let mut comp = vec![usize::MAX; n];
    let mut groups: BTreeMap<usize, GroupSignature> = BTreeMap::new();
    let mut next = 0;
    for s in (0..n).filter(|&v| kept[v]) {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        let mut q = VecDeque::from([s]);
        let mut nodes = BTreeSet::new();
        while let Some(u) = q.pop_front() {
            nodes.insert(g.ids[u].to_string());
            for &v in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = next;
                    q.push_back(v);
                }
            }
        }
        groups.insert(
            next,
            GroupSignature {
                nodes,
                rpts: BTreeMap::new(),
            },
        );
        next += 1;
    }
    for (s, _, id, d, owners) in fused {
        groups
            .get_mut(&comp[s])
            .expect("trader is kept")
            .rpts
            .insert(id, (d, owners));
    }
    let mut out: Vec<GroupSignature> = groups.into_values().filter(|g| !g.rpts.is_empty()).collect();
    out.sort();
    out
}

/// Cumulative profit per day by summing every earlier-or-same-day event
/// afresh for each day. Events are `(date, signed cents)`.
pub fn profit_by_rescan(events: &[(Date, i64)], period: Period) -> Vec<i64> {
    period
        .dates()
        .map(|d| {
            events
                .iter()
                .filter(|(e, _)| *e >= period.start && *e <= d)
                .map(|(_, c)| c)
                .sum()
        })
        .collect()
}

/// Signed cash flow of `taxpayer` in one invoice.
fn flow(v: &Invoice, taxpayer: &str, cfg: &FeatureConfig) -> i64 {
    let a = v.amount.cents() + if cfg.include_vat { v.vat_amount.cents() } else { 0 };
    if v.seller_id == taxpayer {
        a
    } else if v.buyer_id == taxpayer {
        -a
    } else {
        0
    }
}

/// Whether an rpt is effective, replaying every invoice of the trade network
/// dated strictly before it within `period`.
pub fn effective_by_replay(
    invoice: &Invoice,
    trade: &TradeNetwork,
    period: Period,
    cfg: &FeatureConfig,
) -> bool {
    let before = |who: &str| -> i64 {
        trade
            .invoices()
            .iter()
            .filter(|v| v.date >= period.start && v.date < invoice.date)
            .map(|v| flow(v, who, cfg))
            .sum()
    };
    let buyer = before(&invoice.buyer_id);
    let seller = before(&invoice.seller_id);
    (buyer > 0 && seller < 0) || (cfg.count_reverse && buyer < 0 && seller > 0)
}

/// Group ids ordered by selection sort on `(key, group_id)`.
pub fn rank_by_selection(
    groups: &[RptteGroup],
    criterion: RankCriterion,
    descending: bool,
) -> Vec<String> {
    let mut rest: Vec<(i64, String)> = groups
        .iter()
        .map(|g| (criterion.key(&g.features.unwrap_or_default()), g.group_id.clone()))
        .collect();
    let mut out = Vec::new();
    while !rest.is_empty() {
        let mut pick = 0;
        for i in 1..rest.len() {
            let (k, id) = &rest[i];
            let (bk, bid) = &rest[pick];
            let key_first = if descending { k > bk } else { k < bk };
            if key_first || (k == bk && id < bid) {
                pick = i;
            }
        }
        out.push(rest.remove(pick).1);
    }
    out
}

/// Seeded random instances for oracle comparisons.
pub mod instances {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::fusion::FusionParams;
    use crate::ingest::{
        AuditRecord, EntityKind, InvestmentEdge, InvestorProfile, Invoice, TaxpayerProfile,
    };
    use crate::network::{TaxpayerNetwork, TradeNetwork, DEFAULT_MIN_RATIO};
    use crate::{Amount, Date, Period};

    pub fn taxpayer(id: &str) -> TaxpayerProfile {
        TaxpayerProfile {
            id: id.to_string(),
            industry: "C13".into(),
            ownership_type: "private".into(),
            region: "R1".into(),
            merchandise: "goods".into(),
        }
    }

    pub fn investor(id: &str) -> InvestorProfile {
        InvestorProfile {
            id: id.to_string(),
            entity_kind: EntityKind::Person,
        }
    }

    pub fn edge(from: &str, to: &str, ratio: f64) -> InvestmentEdge {
        InvestmentEdge {
            investor_id: from.to_string(),
            investee_id: to.to_string(),
            amount: Amount::from_cents(100_000),
            share_ratio: ratio,
        }
    }

    pub fn invoice(id: &str, date: Date, seller: &str, buyer: &str, cents: i64) -> Invoice {
        Invoice {
            invoice_id: id.to_string(),
            date,
            seller_id: seller.to_string(),
            buyer_id: buyer.to_string(),
            amount: Amount::from_cents(cents),
            vat_amount: Amount::from_cents(cents / 10),
        }
    }

    pub fn audit(id: &str) -> AuditRecord {
        AuditRecord {
            taxpayer_id: id.to_string(),
            audit_date: Date::from_ymd_opt(2013, 6, 1).expect("valid date"),
            violation_type: "underreporting".into(),
            description: String::new(),
            action_taken: String::new(),
            tax_payable: Amount::from_cents(1_000),
        }
    }

    /// Ratios drawn from a coarse grid so ties and threshold hits occur.
    fn ratio(rng: &mut ChaCha8Rng) -> f64 {
        if rng.random_bool(0.5) {
            rng.random_range(1..=20) as f64 * 0.05
        } else {
            rng.random_range(0.001..=1.0)
        }
    }

    /// Random ownership graph on at most `max_nodes` nodes. Node `n{i}` is a
    /// taxpayer, investor or both; cycles and parallel edges may occur.
    pub fn ownership(seed: u64, max_nodes: usize) -> TaxpayerNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=max_nodes.max(2));
        let mut taxpayers = Vec::new();
        let mut investors = Vec::new();
        let mut audits = Vec::new();
        for i in 0..n {
            let id = format!("n{i:02}");
            match rng.random_range(0..3) {
                0 => taxpayers.push(taxpayer(&id)),
                1 => investors.push(investor(&id)),
                _ => {
                    taxpayers.push(taxpayer(&id));
                    investors.push(investor(&id));
                }
            }
            if rng.random_bool(0.2) {
                audits.push(audit(&id));
            }
        }
        let n_edges = rng.random_range(0..=2 * n);
        let mut edges = Vec::new();
        for _ in 0..n_edges {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                edges.push(edge(&format!("n{a:02}"), &format!("n{b:02}"), ratio(&mut rng)));
            }
        }
        TaxpayerNetwork::build(&taxpayers, &investors, &edges, &audits)
    }

    /// A pruned ownership network with up to `max_nodes` nodes, up to
    /// `max_invoices` invoices among its taxpayers and random fusion
    /// parameters over a one-year window.
    pub fn fusion(
        seed: u64,
        max_nodes: usize,
        max_invoices: usize,
    ) -> (TaxpayerNetwork, TradeNetwork, FusionParams) {
        let raw = ownership(seed, max_nodes);
        let net = raw.prune(DEFAULT_MIN_RATIO);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let payers: Vec<&str> = raw
            .nodes()
            .iter()
            .filter(|n| n.is_taxpayer())
            .map(|n| n.id.as_str())
            .collect();
        let start = Date::from_ymd_opt(2014, 1, 1).expect("valid date");
        let mut invoices = Vec::new();
        if payers.len() >= 2 {
            for k in 0..rng.random_range(0..=max_invoices) {
                let s = payers[rng.random_range(0..payers.len())];
                let b = payers[rng.random_range(0..payers.len())];
                if s == b {
                    continue;
                }
                let date = start + chrono::Days::new(rng.random_range(0..365));
                let cents = rng.random_range(1..200_000);
                invoices.push(invoice(&format!("v{k:03}"), date, s, b, cents));
            }
        }
        let trade = TradeNetwork::build(&invoices, &net);
        let from = start + chrono::Days::new(rng.random_range(0..120));
        let to = from + chrono::Days::new(rng.random_range(60..245));
        let period = Period::new(from, to).expect("ordered period");
        let params = FusionParams::new(period, rng.random_range(1..=5), rng.random_range(1..=4));
        (net, trade, params)
    }
}
