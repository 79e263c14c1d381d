//! Fusion of the trade network into the ownership network.
//!
//! An invoice becomes a related-party transaction when buyer and seller sit
//! in the same weak component, lie within `max_txn_chain` undirected hops of
//! each other, and share at least one common beneficial owner holding
//! `min_ratio` or more of each. Groups are then trimmed to entities within
//! `max_ctrl_chain` hops of a transacting taxpayer.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::features::GroupFeatures;
use crate::ingest::{InvestmentEdge, Invoice};
use crate::network::{EntityNode, TaxpayerNetwork, TradeNetwork, DEFAULT_MIN_RATIO};
use crate::{Date, Error, Period, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub period_start: Date,
    pub period_end: Date,
    pub max_txn_chain: u32,
    pub max_ctrl_chain: u32,
    #[serde(default = "default_min_ratio")]
    pub min_ratio: f64,
}

fn default_min_ratio() -> f64 {
    DEFAULT_MIN_RATIO
}

impl FusionParams {
    pub fn new(period: Period, max_txn_chain: u32, max_ctrl_chain: u32) -> Self {
        FusionParams {
            period_start: period.start,
            period_end: period.end,
            max_txn_chain,
            max_ctrl_chain,
            min_ratio: DEFAULT_MIN_RATIO,
        }
    }

    pub fn period(&self) -> Period {
        Period {
            start: self.period_start,
            end: self.period_end,
        }
    }

    /// Every violated field, in declaration order.
    pub fn field_errors(&self) -> Vec<(&'static str, String)> {
        let mut errs = Vec::new();
        if self.period_start > self.period_end {
            errs.push((
                "period_end",
                format!(
                    "period_end {} precedes period_start {}",
                    self.period_end, self.period_start
                ),
            ));
        }
        if self.max_txn_chain < 1 {
            errs.push(("max_txn_chain", "must be >= 1".to_string()));
        }
        if self.max_ctrl_chain < 1 {
            errs.push(("max_ctrl_chain", "must be >= 1".to_string()));
        }
        if !(self.min_ratio > 0.0 && self.min_ratio <= 1.0) {
            errs.push(("min_ratio", format!("{} outside (0, 1]", self.min_ratio)));
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        match self.field_errors().into_iter().next() {
            None => Ok(()),
            Some((field, message)) => Err(Error::InvalidParam { field, message }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedPartyTransaction {
    pub invoice: Invoice,
    /// Undirected hops between buyer and seller in the ownership network.
    pub chain_length: u32,
    /// Common beneficial owners, sorted by id.
    pub common_owners: Vec<String>,
    /// Seller in loss and buyer in profit before the invoice date; filled
    /// in by feature extraction.
    pub effective: bool,
}

impl RelatedPartyTransaction {
    pub fn id(&self) -> &str {
        &self.invoice.invoice_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RptteGroup {
    pub group_id: String,
    /// Members sorted by id.
    pub nodes: Vec<EntityNode>,
    pub investment_edges: Vec<InvestmentEdge>,
    /// Sorted by `(date, invoice_id)`.
    pub rpts: Vec<RelatedPartyTransaction>,
    #[serde(default)]
    pub features: Option<GroupFeatures>,
}

/// Canonical, comparable view of a group used by equivalence checks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupSignature {
    pub nodes: BTreeSet<String>,
    /// invoice id → (chain length, common owners)
    pub rpts: BTreeMap<String, (u32, BTreeSet<String>)>,
}

impl RptteGroup {
    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.id.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes
            .binary_search_by(|n| n.id.as_str().cmp(id))
            .is_ok()
    }

    pub fn rpt(&self, invoice_id: &str) -> Option<&RelatedPartyTransaction> {
        self.rpts.iter().find(|r| r.invoice.invoice_id == invoice_id)
    }

    /// Taxpayers that appear as buyer or seller of an rpt, sorted.
    pub fn traders(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .rpts
            .iter()
            .flat_map(|r| [r.invoice.seller_id.as_str(), r.invoice.buyer_id.as_str()])
            .collect();
        set.into_iter().collect()
    }

    pub fn signature(&self) -> GroupSignature {
        GroupSignature {
            nodes: self.node_ids().map(str::to_string).collect(),
            rpts: self
                .rpts
                .iter()
                .map(|r| {
                    (
                        r.invoice.invoice_id.clone(),
                        (r.chain_length, r.common_owners.iter().cloned().collect()),
                    )
                })
                .collect(),
        }
    }
}

/// Content hash of a sorted node-id set.
pub fn group_id_for<'a>(sorted_ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for id in sorted_ids {
        h.update(id.as_bytes());
        h.update([0u8]);
    }
    format!("g{}", hex::encode(&h.finalize()[..8]))
}

/// Owners of each taxpayer at or above a ratio threshold.
///
/// Maps taxpayer index → (owner index → final investment ratio).
pub(crate) fn qualifying_owners(
    net: &TaxpayerNetwork,
    min_ratio: f64,
) -> HashMap<usize, BTreeMap<usize, f64>> {
    let mut owners: HashMap<usize, BTreeMap<usize, f64>> = HashMap::new();
    for v in 0..net.len() {
        if net.out_edges(v).is_empty() {
            continue;
        }
        for (t, r) in net.ratios_from(v) {
            if r >= min_ratio && net.node_at(t).is_taxpayer() {
                owners.entry(t).or_default().insert(v, r);
            }
        }
    }
    owners
}

/// Investors holding at least `min_ratio` of both `buyer_id` and `seller_id`.
pub fn common_beneficial_owners(
    net: &TaxpayerNetwork,
    buyer_id: &str,
    seller_id: &str,
    min_ratio: f64,
) -> Result<BTreeSet<String>> {
    let b = net.index_of(buyer_id)?;
    let s = net.index_of(seller_id)?;
    let mut out = BTreeSet::new();
    for v in 0..net.len() {
        if v == b || v == s || net.out_edges(v).is_empty() {
            continue;
        }
        let ratios = net.ratios_from(v);
        let to_b = ratios.get(&b).copied().unwrap_or(0.0);
        let to_s = ratios.get(&s).copied().unwrap_or(0.0);
        if to_b >= min_ratio && to_s >= min_ratio {
            out.insert(net.node_at(v).id.clone());
        }
    }
    Ok(out)
}

/// The ownership path realizing the final investment ratio from `owner_id`
/// to `taxpayer_id`. Ties go to fewer hops, then to the lexicographically
/// smallest node-id sequence.
pub fn ownership_chain(
    net: &TaxpayerNetwork,
    owner_id: &str,
    taxpayer_id: &str,
) -> Result<Vec<InvestmentEdge>> {
    let no_path = || Error::NoPath {
        owner: owner_id.to_string(),
        taxpayer: taxpayer_id.to_string(),
    };
    let s = net.index_of(owner_id)?;
    let t = net.index_of(taxpayer_id)?;
    if s == t {
        return Err(no_path());
    }
    let target = *net.ratios_from(s).get(&t).ok_or_else(no_path)?;

    // Only prefixes whose product is still >= the optimum can finish on it,
    // since products never increase along a path.
    struct Search<'a> {
        net: &'a TaxpayerNetwork,
        target_node: usize,
        target_product: f64,
        on_path: Vec<bool>,
        nodes: Vec<usize>,
        edges: Vec<usize>,
        best: Option<(Vec<String>, Vec<usize>)>,
    }
    impl Search<'_> {
        fn visit(&mut self, u: usize, product: f64) {
            if u == self.target_node {
                if product == self.target_product {
                    let ids: Vec<String> = self
                        .nodes
                        .iter()
                        .map(|&i| self.net.node_at(i).id.clone())
                        .collect();
                    let better = match &self.best {
                        None => true,
                        Some((best_ids, _)) => {
                            (ids.len(), &ids) < (best_ids.len(), best_ids)
                        }
                    };
                    if better {
                        self.best = Some((ids, self.edges.clone()));
                    }
                }
                return;
            }
            for &e in self.net.out_edges(u) {
                let v = self.net.edge_ends(e).1;
                if self.on_path[v] {
                    continue;
                }
                let p = product * self.net.edge_at(e).share_ratio;
                if p < self.target_product {
                    continue;
                }
                self.on_path[v] = true;
                self.nodes.push(v);
                self.edges.push(e);
                self.visit(v, p);
                self.edges.pop();
                self.nodes.pop();
                self.on_path[v] = false;
            }
        }
    }

    let mut search = Search {
        net,
        target_node: t,
        target_product: target,
        on_path: vec![false; net.len()],
        nodes: vec![s],
        edges: Vec::new(),
        best: None,
    };
    search.on_path[s] = true;
    search.visit(s, 1.0);
    let (_, edges) = search.best.ok_or_else(no_path)?;
    Ok(edges.into_iter().map(|e| net.edge_at(e).clone()).collect())
}

/// Detects suspicious groups. `net` must already be pruned and `trade`
/// filtered against it.
pub fn detect_groups(
    net: &TaxpayerNetwork,
    trade: &TradeNetwork,
    params: &FusionParams,
) -> Result<Vec<RptteGroup>> {
    params.validate()?;
    let period = params.period();
    let owners = qualifying_owners(net, params.min_ratio);
    let mut distances: HashMap<usize, HashMap<usize, u32>> = HashMap::new();

    let mut rpts: Vec<(usize, usize, RelatedPartyTransaction)> = Vec::new();
    for invoice in trade.invoices().iter().filter(|v| period.contains(v.date)) {
        let (Ok(s), Ok(b)) = (net.index_of(&invoice.seller_id), net.index_of(&invoice.buyer_id))
        else {
            continue;
        };
        if net.component_at(s) != net.component_at(b) {
            continue;
        }
        let dist = distances
            .entry(s)
            .or_insert_with(|| net.distances_within(s, params.max_txn_chain));
        let Some(&hops) = dist.get(&b) else {
            continue;
        };
        let (Some(os), Some(ob)) = (owners.get(&s), owners.get(&b)) else {
            continue;
        };
        let common: Vec<String> = os
            .keys()
            .filter(|v| ob.contains_key(v))
            .map(|&v| net.node_at(v).id.clone())
            .collect();
        if common.is_empty() {
            continue;
        }
        let mut common = common;
        common.sort();
        rpts.push((
            s,
            b,
            RelatedPartyTransaction {
                invoice: invoice.clone(),
                chain_length: hops,
                common_owners: common,
                effective: false,
            },
        ));
    }
    if rpts.is_empty() {
        return Ok(Vec::new());
    }

    // Keep entities within max_ctrl_chain hops of a transacting taxpayer.
    let mut ctrl: HashMap<usize, u32> = HashMap::new();
    let mut queue = VecDeque::new();
    for (s, b, _) in &rpts {
        for &x in [s, b] {
            if ctrl.insert(x, 0).is_none() {
                queue.push_back(x);
            }
        }
    }
    while let Some(u) = queue.pop_front() {
        let d = ctrl[&u];
        if d == params.max_ctrl_chain {
            continue;
        }
        for &v in net.neighbors(u) {
            if let std::collections::hash_map::Entry::Vacant(slot) = ctrl.entry(v) {
                slot.insert(d + 1);
                queue.push_back(v);
            }
        }
    }

    // Weak components of the fused graph restricted to kept entities.
    let kept: Vec<usize> = {
        let mut k: Vec<usize> = ctrl.keys().copied().collect();
        k.sort_unstable();
        k
    };
    let slot: HashMap<usize, usize> = kept.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut uf = UnionFind::new(kept.len());
    for &u in &kept {
        for &e in net.out_edges(u) {
            let v = net.edge_ends(e).1;
            if let Some(&j) = slot.get(&v) {
                uf.union(slot[&u], j);
            }
        }
    }
    for (s, b, _) in &rpts {
        uf.union(slot[s], slot[b]);
    }

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &n) in kept.iter().enumerate() {
        members.entry(uf.find(i)).or_default().push(n);
    }
    let mut group_rpts: HashMap<usize, Vec<RelatedPartyTransaction>> = HashMap::new();
    for (s, _, rpt) in rpts {
        group_rpts.entry(uf.find(slot[&s])).or_default().push(rpt);
    }

    let mut groups = Vec::new();
    for (root, nodes) in members {
        let Some(mut rpts) = group_rpts.remove(&root) else {
            continue;
        };
        rpts.sort_by(|a, b| {
            (a.invoice.date, &a.invoice.invoice_id).cmp(&(b.invoice.date, &b.invoice.invoice_id))
        });
        let node_set: BTreeSet<usize> = nodes.iter().copied().collect();
        let investment_edges = nodes
            .iter()
            .flat_map(|&u| net.out_edges(u).iter().copied())
            .filter(|&e| node_set.contains(&net.edge_ends(e).1))
            .map(|e| net.edge_at(e).clone())
            .collect();
        let nodes: Vec<EntityNode> = nodes.iter().map(|&i| net.node_at(i).clone()).collect();
        groups.push(RptteGroup {
            group_id: group_id_for(nodes.iter().map(|n| n.id.as_str())),
            nodes,
            investment_edges,
            rpts,
            features: None,
        });
    }
    groups.sort_by(|a, b| a.group_id.cmp(&b.group_id));
    Ok(groups)
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}
