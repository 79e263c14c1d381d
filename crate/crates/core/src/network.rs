//! Ownership (taxpayer) network and trade network.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ingest::{
    AuditRecord, Dataset, InvestmentEdge, InvestorProfile, Invoice, TaxpayerProfile,
};
use crate::{Error, Result};

/// Share of voting rights a common shareholder must hold for two taxpayers
/// to count as related parties.
pub const DEFAULT_MIN_RATIO: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Taxpayer,
    Investor,
    Both,
}

impl NodeKind {
    pub fn is_taxpayer(self) -> bool {
        matches!(self, NodeKind::Taxpayer | NodeKind::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Taxpayer => "taxpayer",
            NodeKind::Investor => "investor",
            NodeKind::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityNode {
    pub id: String,
    pub kind: NodeKind,
    pub has_evasion_record: bool,
    /// Materialized from investment rows only; no profile exists.
    pub synthetic: bool,
    pub taxpayer: Option<TaxpayerProfile>,
    pub investor: Option<InvestorProfile>,
}

impl EntityNode {
    pub fn is_taxpayer(&self) -> bool {
        self.kind.is_taxpayer()
    }
}

/// Why an entity was dropped from the network during pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneReason {
    /// Investor whose final investment ratio is below the threshold over
    /// every reachable taxpayer.
    LowInvestmentRatio,
    /// Member of a weak component with at most one taxpayer.
    SingleTaxpayerComponent,
}

/// Max-heap entry ordered by product.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    product: f64,
    node: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.product
            .total_cmp(&other.product)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Directed ownership graph over taxpayers and investors.
///
/// Immutable once built; pruning produces a new network.
#[derive(Debug, Clone)]
pub struct TaxpayerNetwork {
    nodes: Vec<EntityNode>,
    index: HashMap<String, usize>,
    edges: Vec<InvestmentEdge>,
    ends: Vec<(usize, usize)>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    component: Vec<usize>,
    n_components: usize,
    pruned: BTreeMap<String, PruneReason>,
    warnings: Vec<String>,
}

impl TaxpayerNetwork {
    /// One node per distinct entity id, one edge per investment row.
    pub fn build(
        taxpayers: &[TaxpayerProfile],
        investors: &[InvestorProfile],
        investments: &[InvestmentEdge],
        audits: &[AuditRecord],
    ) -> Self {
        let mut warnings = Vec::new();
        let mut nodes: BTreeMap<String, EntityNode> = BTreeMap::new();
        for t in taxpayers {
            nodes.insert(
                t.id.clone(),
                EntityNode {
                    id: t.id.clone(),
                    kind: NodeKind::Taxpayer,
                    has_evasion_record: false,
                    synthetic: false,
                    taxpayer: Some(t.clone()),
                    investor: None,
                },
            );
        }
        for i in investors {
            let node = nodes.entry(i.id.clone()).or_insert_with(|| EntityNode {
                id: i.id.clone(),
                kind: NodeKind::Investor,
                has_evasion_record: false,
                synthetic: false,
                taxpayer: None,
                investor: None,
            });
            if node.taxpayer.is_some() {
                node.kind = NodeKind::Both;
            }
            node.investor = Some(i.clone());
        }

        // Entities seen only in investment rows: infer kind from direction.
        let mut invests = BTreeSet::new();
        let mut invested = BTreeSet::new();
        for e in investments {
            invests.insert(e.investor_id.as_str());
            invested.insert(e.investee_id.as_str());
        }
        for id in invests.union(&invested) {
            if nodes.contains_key(*id) {
                continue;
            }
            let kind = match (invests.contains(id), invested.contains(id)) {
                (true, true) => NodeKind::Both,
                (true, false) => NodeKind::Investor,
                _ => NodeKind::Taxpayer,
            };
            warnings.push(format!(
                "`{id}` appears only in investments; materialized as {}",
                kind.as_str()
            ));
            nodes.insert(
                id.to_string(),
                EntityNode {
                    id: id.to_string(),
                    kind,
                    has_evasion_record: false,
                    synthetic: true,
                    taxpayer: None,
                    investor: None,
                },
            );
        }

        for a in audits.iter().filter(|a| a.is_violation()) {
            match nodes.get_mut(&a.taxpayer_id) {
                Some(n) => n.has_evasion_record = true,
                None => warnings.push(format!(
                    "audit record for unknown entity `{}` ignored",
                    a.taxpayer_id
                )),
            }
        }

        let mut net = Self::assemble(nodes.into_values().collect(), investments.to_vec());
        net.warnings = warnings;
        net
    }

    pub fn from_dataset(ds: &Dataset) -> Self {
        Self::build(&ds.taxpayers, &ds.investors, &ds.investments, &ds.audits)
    }

    /// `nodes` must be sorted by id and cover every edge endpoint.
    fn assemble(nodes: Vec<EntityNode>, mut edges: Vec<InvestmentEdge>) -> Self {
        edges.sort_by(|a, b| {
            (&a.investor_id, &a.investee_id)
                .cmp(&(&b.investor_id, &b.investee_id))
                .then(a.share_ratio.total_cmp(&b.share_ratio))
        });
        let index: HashMap<String, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        let n = nodes.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        let mut neighbors = vec![Vec::new(); n];
        let mut ends = Vec::with_capacity(edges.len());
        for (ei, e) in edges.iter().enumerate() {
            let s = index[&e.investor_id];
            let t = index[&e.investee_id];
            ends.push((s, t));
            out_edges[s].push(ei);
            in_edges[t].push(ei);
            neighbors[s].push(t);
            neighbors[t].push(s);
        }
        for adj in &mut neighbors {
            adj.sort_unstable();
            adj.dedup();
        }

        let mut component = vec![usize::MAX; n];
        let mut n_components = 0;
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            component[start] = n_components;
            while let Some(u) = queue.pop_front() {
                for &v in &neighbors[u] {
                    if component[v] == usize::MAX {
                        component[v] = n_components;
                        queue.push_back(v);
                    }
                }
            }
            n_components += 1;
        }

        TaxpayerNetwork {
            nodes,
            index,
            edges,
            ends,
            out_edges,
            in_edges,
            neighbors,
            component,
            n_components,
            pruned: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn nodes(&self) -> &[EntityNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[InvestmentEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Ids removed by pruning, with the rule that removed them.
    pub fn pruned(&self) -> &BTreeMap<String, PruneReason> {
        &self.pruned
    }

    pub fn node(&self, id: &str) -> Option<&EntityNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownEntity(id.to_string()))
    }

    pub fn node_at(&self, idx: usize) -> &EntityNode {
        &self.nodes[idx]
    }

    pub fn edge_at(&self, edge: usize) -> &InvestmentEdge {
        &self.edges[edge]
    }

    /// `(investor, investee)` node indices of an edge.
    pub fn edge_ends(&self, edge: usize) -> (usize, usize) {
        self.ends[edge]
    }

    pub fn out_edges(&self, idx: usize) -> &[usize] {
        &self.out_edges[idx]
    }

    pub fn in_edges(&self, idx: usize) -> &[usize] {
        &self.in_edges[idx]
    }

    /// Undirected neighbours, sorted and deduplicated.
    pub fn neighbors(&self, idx: usize) -> &[usize] {
        &self.neighbors[idx]
    }

    pub fn component_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).map(|&i| self.component[i])
    }

    pub fn component_at(&self, idx: usize) -> usize {
        self.component[idx]
    }

    pub fn component_count(&self) -> usize {
        self.n_components
    }

    /// Node ids grouped by weak component, each component sorted by id.
    pub fn components(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.n_components];
        for (i, n) in self.nodes.iter().enumerate() {
            out[self.component[i]].push(n.id.as_str());
        }
        out
    }

    /// Best ownership product from `source` to every node it reaches,
    /// `source` itself excluded.
    ///
    /// Max-product label setting: every ratio is at most 1, so extending a
    /// path never raises its product and the first settled label is optimal.
    /// Cycles cannot beat the simple path they contain, so the result equals
    /// the maximum over simple paths.
    pub fn ratios_from(&self, source: usize) -> HashMap<usize, f64> {
        let mut best: HashMap<usize, f64> = HashMap::new();
        let mut settled: HashMap<usize, f64> = HashMap::new();
        let mut heap = BinaryHeap::new();
        heap.push(Candidate {
            product: 1.0,
            node: source,
        });
        best.insert(source, 1.0);
        while let Some(Candidate { product, node }) = heap.pop() {
            if settled.contains_key(&node) {
                continue;
            }
            settled.insert(node, product);
            for &e in &self.out_edges[node] {
                let next = self.ends[e].1;
                if settled.contains_key(&next) {
                    continue;
                }
                let p = product * self.edges[e].share_ratio;
                if best.get(&next).is_none_or(|&b| p > b) {
                    best.insert(next, p);
                    heap.push(Candidate {
                        product: p,
                        node: next,
                    });
                }
            }
        }
        settled.remove(&source);
        settled
    }

    /// Maximum over simple directed paths `investor → taxpayer` of the product
    /// of share ratios; 0 when no path exists.
    pub fn final_investment_ratio(&self, investor_id: &str, taxpayer_id: &str) -> Result<f64> {
        let s = self.index_of(investor_id)?;
        let t = self.index_of(taxpayer_id)?;
        if s == t {
            return Err(Error::invalid(
                "taxpayer_id",
                "investor and taxpayer must differ",
            ));
        }
        Ok(self.ratios_from(s).get(&t).copied().unwrap_or(0.0))
    }

    /// Undirected hop distances from `source`, up to and including `max_hops`.
    pub fn distances_within(&self, source: usize, max_hops: u32) -> HashMap<usize, u32> {
        let mut dist = HashMap::from([(source, 0u32)]);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            if d == max_hops {
                continue;
            }
            for &v in &self.neighbors[u] {
                if let std::collections::hash_map::Entry::Vacant(slot) = dist.entry(v) {
                    slot.insert(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Applies the pruning rules:
    ///
    /// 1. drop every investor whose final investment ratio is below
    ///    `min_ratio` over all reachable taxpayers, repeated to a fixpoint;
    /// 2. drop weak components holding at most one taxpayer.
    pub fn prune(&self, min_ratio: f64) -> TaxpayerNetwork {
        let mut pruned = self.pruned.clone();
        let mut current = self.clone();
        loop {
            let doomed: BTreeSet<usize> = (0..current.len())
                .filter(|&i| current.nodes[i].kind == NodeKind::Investor)
                .filter(|&i| {
                    !current
                        .ratios_from(i)
                        .iter()
                        .any(|(&t, &r)| current.nodes[t].is_taxpayer() && r >= min_ratio)
                })
                .collect();
            if doomed.is_empty() {
                break;
            }
            for &i in &doomed {
                pruned.insert(current.nodes[i].id.clone(), PruneReason::LowInvestmentRatio);
            }
            current = current.without(&doomed);
        }

        let mut taxpayers_per_component = vec![0usize; current.n_components];
        for (i, n) in current.nodes.iter().enumerate() {
            if n.is_taxpayer() {
                taxpayers_per_component[current.component[i]] += 1;
            }
        }
        let doomed: BTreeSet<usize> = (0..current.len())
            .filter(|&i| taxpayers_per_component[current.component[i]] <= 1)
            .collect();
        for &i in &doomed {
            pruned.insert(
                current.nodes[i].id.clone(),
                PruneReason::SingleTaxpayerComponent,
            );
        }
        let mut out = current.without(&doomed);
        out.pruned = pruned;
        out.warnings = self.warnings.clone();
        out
    }

    fn without(&self, removed: &BTreeSet<usize>) -> TaxpayerNetwork {
        let nodes: Vec<EntityNode> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| !removed.contains(i))
            .map(|(_, n)| n.clone())
            .collect();
        let edges: Vec<InvestmentEdge> = self
            .edges
            .iter()
            .zip(&self.ends)
            .filter(|(_, (s, t))| !removed.contains(s) && !removed.contains(t))
            .map(|(e, _)| e.clone())
            .collect();
        let mut net = Self::assemble(nodes, edges);
        net.pruned = self.pruned.clone();
        net.warnings = self.warnings.clone();
        net
    }

    /// Structural equality: same nodes and edges.
    pub fn same_structure(&self, other: &TaxpayerNetwork) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }

    /// Debug export: `id,kind,evasion` lines.
    pub fn export_nodes(&self) -> String {
        let mut out = String::from("id,kind,evasion\n");
        for n in &self.nodes {
            let _ = writeln!(out, "{},{},{}", n.id, n.kind.as_str(), n.has_evasion_record);
        }
        out
    }

    /// Debug export: `src,dst,ratio` lines.
    pub fn export_edges(&self) -> String {
        let mut out = String::from("src,dst,ratio\n");
        for e in &self.edges {
            let _ = writeln!(out, "{},{},{}", e.investor_id, e.investee_id, e.share_ratio);
        }
        out
    }
}

/// Invoices between taxpayers of a (pruned) ownership network.
#[derive(Debug, Clone, Default)]
pub struct TradeNetwork {
    invoices: Vec<Invoice>,
    pairs: BTreeMap<(String, String), Vec<usize>>,
    by_taxpayer: HashMap<String, Vec<usize>>,
    by_id: HashMap<String, usize>,
}

impl TradeNetwork {
    /// Keeps invoices whose seller and buyer are both taxpayer nodes of `net`.
    pub fn build(invoices: &[Invoice], net: &TaxpayerNetwork) -> Self {
        let is_taxpayer = |id: &str| net.node(id).is_some_and(EntityNode::is_taxpayer);
        let mut kept: Vec<Invoice> = invoices
            .iter()
            .filter(|v| is_taxpayer(&v.seller_id) && is_taxpayer(&v.buyer_id))
            .cloned()
            .collect();
        kept.sort_by(|a, b| (a.date, &a.invoice_id).cmp(&(b.date, &b.invoice_id)));
        Self::from_sorted(kept)
    }

    /// Trade network over every invoice, unfiltered.
    pub fn unfiltered(invoices: &[Invoice]) -> Self {
        let mut all = invoices.to_vec();
        all.sort_by(|a, b| (a.date, &a.invoice_id).cmp(&(b.date, &b.invoice_id)));
        Self::from_sorted(all)
    }

    fn from_sorted(invoices: Vec<Invoice>) -> Self {
        let mut pairs: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        let mut by_taxpayer: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_id = HashMap::with_capacity(invoices.len());
        for (i, v) in invoices.iter().enumerate() {
            pairs
                .entry((v.seller_id.clone(), v.buyer_id.clone()))
                .or_default()
                .push(i);
            by_taxpayer.entry(v.seller_id.clone()).or_default().push(i);
            by_taxpayer.entry(v.buyer_id.clone()).or_default().push(i);
            by_id.insert(v.invoice_id.clone(), i);
        }
        TradeNetwork {
            invoices,
            pairs,
            by_taxpayer,
            by_id,
        }
    }

    /// All retained invoices, sorted by `(date, invoice_id)`.
    pub fn invoices(&self) -> &[Invoice] {
        &self.invoices
    }

    pub fn len(&self) -> usize {
        self.invoices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.invoices.is_empty()
    }

    pub fn invoice(&self, invoice_id: &str) -> Option<&Invoice> {
        self.by_id.get(invoice_id).map(|&i| &self.invoices[i])
    }

    /// Invoices from `seller` to `buyer`, date-sorted with ties by id.
    pub fn pair(&self, seller: &str, buyer: &str) -> impl Iterator<Item = &Invoice> {
        self.pairs
            .get(&(seller.to_string(), buyer.to_string()))
            .into_iter()
            .flatten()
            .map(|&i| &self.invoices[i])
    }

    /// Every `(seller, buyer)` pair with its invoices.
    pub fn pairs(&self) -> impl Iterator<Item = ((&str, &str), Vec<&Invoice>)> {
        self.pairs.iter().map(|((s, b), idx)| {
            (
                (s.as_str(), b.as_str()),
                idx.iter().map(|&i| &self.invoices[i]).collect(),
            )
        })
    }

    /// Invoices touching `taxpayer` as seller or buyer, date-sorted.
    pub fn touching(&self, taxpayer: &str) -> impl Iterator<Item = &Invoice> {
        self.by_taxpayer
            .get(taxpayer)
            .into_iter()
            .flatten()
            .map(|&i| &self.invoices[i])
    }

    pub fn has_taxpayer(&self, taxpayer: &str) -> bool {
        self.by_taxpayer.contains_key(taxpayer)
    }

    /// Debug export: `src,dst,invoices,amount` lines.
    pub fn export_edges(&self) -> String {
        let mut out = String::from("src,dst,invoices,amount\n");
        for ((s, b), idx) in &self.pairs {
            let total: crate::Amount = idx.iter().map(|&i| self.invoices[i].amount).sum();
            let _ = writeln!(out, "{s},{b},{},{total}", idx.len());
        }
        out
    }
}
