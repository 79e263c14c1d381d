//! Synthetic tax ecosystems with planted related-party groups.
//!
//! Two planted shapes are produced:
//!
//! * `star`: one investor directly owning two or three taxpayers, all with
//!   evasion records, trading one way from the loss-making seller to the
//!   profitable buyer.
//! * `tangled`: an owner controlling five taxpayers, three of them through a
//!   holding chain of `planted_depth` hops, plus a second investor with a
//!   small stake in one of them and a large stake in a flagged company.
//!
//! Before any planted transaction, buyers are driven into profit and sellers
//! into loss by large trades with background taxpayers, so every planted
//! transaction is effective over the dataset range. Each plant is checked
//! with the brute-force [`oracle`](crate::oracle) before it is emitted.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use chrono::Datelike;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureConfig;
use crate::fusion::FusionParams;
use crate::ingest::{
    AuditRecord, Dataset, EntityKind, InvestmentEdge, InvestorProfile, Invoice, Manifest,
    TaxpayerProfile,
};
use crate::network::{TaxpayerNetwork, TradeNetwork, DEFAULT_MIN_RATIO};
use crate::period::is_month_end;
use crate::{oracle, Amount, Date, Error, Period, Result};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";

const HOLDING_RATIO: f64 = 0.8;
const LEAF_RATIO: f64 = 0.6;
const MAX_RPT_UNITS: i64 = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeMix {
    #[default]
    Alternate,
    Star,
    Tangled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantShape {
    Star,
    Tangled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_taxpayers: usize,
    pub n_investors: usize,
    pub n_invoices: usize,
    pub date_from: Date,
    pub date_to: Date,
    pub n_planted_groups: usize,
    /// Hops of the holding chain in `tangled` plants.
    pub planted_depth: u32,
    /// Share of invoice dates that fall in the last five days of a month.
    pub month_end_bias: f64,
    pub seed: u64,
    #[serde(default = "default_rpts_per_group")]
    pub rpts_per_group: usize,
    #[serde(default)]
    pub shapes: ShapeMix,
}

fn default_rpts_per_group() -> usize {
    8
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_taxpayers: 1_000,
            n_investors: 300,
            n_invoices: 20_000,
            date_from: Date::from_ymd_opt(2014, 1, 1).expect("valid date"),
            date_to: Date::from_ymd_opt(2015, 12, 31).expect("valid date"),
            n_planted_groups: 10,
            planted_depth: 2,
            month_end_bias: 0.6,
            seed: 0,
            rpts_per_group: default_rpts_per_group(),
            shapes: ShapeMix::Alternate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedGroup {
    pub label: String,
    pub shape: PlantShape,
    /// Every entity of the plant, sorted.
    pub members: Vec<String>,
    pub rpt_ids: Vec<String>,
    pub effective_rpt_ids: Vec<String>,
    /// Smallest chain lengths under which the plant is detected whole.
    pub max_txn_chain: u32,
    pub max_ctrl_chain: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub groups: Vec<PlantedGroup>,
}

impl GroundTruth {
    /// Parameters under which every plant is recovered: the dataset range
    /// and the largest chain lengths any plant needs.
    pub fn recommended_params(&self, manifest: &Manifest) -> FusionParams {
        let txn = self.groups.iter().map(|g| g.max_txn_chain).max().unwrap_or(2);
        let ctrl = self.groups.iter().map(|g| g.max_ctrl_chain).max().unwrap_or(2);
        FusionParams::new(
            Period {
                start: manifest.date_from,
                end: manifest.date_to,
            },
            txn,
            ctrl,
        )
    }

    pub fn to_jsonl(&self) -> String {
        self.groups
            .iter()
            .map(|g| serde_json::to_string(g).expect("ground truth serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let groups = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Config(format!("ground truth: {e}"))))
            .collect::<Result<_>>()?;
        Ok(GroundTruth { groups })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(GROUND_TRUTH_FILE);
        fs::write(&path, self.to_jsonl()).map_err(|source| Error::Io { path, source })
    }
}

/// Picks invoice dates with a configurable month-end share.
struct DateSampler {
    month_end: Vec<Date>,
    other: Vec<Date>,
    bias: f64,
}

impl DateSampler {
    fn new(period: Period, bias: f64) -> Self {
        let (month_end, other) = period.dates().partition(|d| is_month_end(*d));
        DateSampler {
            month_end,
            other,
            bias,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Date {
        let pick_end = if self.other.is_empty() {
            true
        } else if self.month_end.is_empty() {
            false
        } else {
            rng.random_bool(self.bias)
        };
        let pool = if pick_end { &self.month_end } else { &self.other };
        *pool.choose(rng).expect("non-empty date pool")
    }
}

struct Builder {
    rng: ChaCha8Rng,
    taxpayers: Vec<TaxpayerProfile>,
    investors: Vec<InvestorProfile>,
    investments: Vec<InvestmentEdge>,
    invoices: Vec<Invoice>,
    audits: Vec<AuditRecord>,
    /// Invoice slot index → planted label, filled when ids are assigned.
    planted_invoices: Vec<(usize, usize, bool)>,
}

const INDUSTRIES: &[&str] = &["C13", "C26", "C30", "C33", "F47", "G51", "K70"];
const OWNERSHIP: &[&str] = &["private", "state", "collective", "foreign", "joint"];
const REGIONS: &[&str] = &["R610100", "R610200", "R610300", "R610400", "R610500"];
const GOODS: &[&str] = &["steel", "coal", "cement", "machinery", "chemicals", "textiles"];
const VIOLATIONS: &[&str] = &["underreporting", "false_invoice", "transfer_pricing"];

impl Builder {
    fn profile(&mut self, id: &str) -> TaxpayerProfile {
        TaxpayerProfile {
            id: id.to_string(),
            industry: INDUSTRIES.choose(&mut self.rng).unwrap().to_string(),
            ownership_type: OWNERSHIP.choose(&mut self.rng).unwrap().to_string(),
            region: REGIONS.choose(&mut self.rng).unwrap().to_string(),
            merchandise: GOODS.choose(&mut self.rng).unwrap().to_string(),
        }
    }

    fn invest(&mut self, from: &str, to: &str, ratio: f64) {
        let amount = Amount::from_cents(self.rng.random_range(10_000..5_000_000) * 100);
        self.investments.push(InvestmentEdge {
            investor_id: from.to_string(),
            investee_id: to.to_string(),
            amount,
            share_ratio: ratio,
        });
    }

    fn flag(&mut self, id: &str, date: Date) {
        let violation = VIOLATIONS.choose(&mut self.rng).unwrap().to_string();
        let payable = Amount::from_cents(self.rng.random_range(1_000..500_000) * 100);
        self.audits.push(AuditRecord {
            taxpayer_id: id.to_string(),
            audit_date: date,
            violation_type: violation,
            description: "synthetic audit finding".to_string(),
            action_taken: "back taxes and fine".to_string(),
            tax_payable: payable,
        });
    }

    fn invoice(&mut self, date: Date, seller: &str, buyer: &str, cents: i64) -> usize {
        let vat = cents * 17 / 100;
        self.invoices.push(Invoice {
            invoice_id: String::new(),
            date,
            seller_id: seller.to_string(),
            buyer_id: buyer.to_string(),
            amount: Amount::from_cents(cents),
            vat_amount: Amount::from_cents(vat),
        });
        self.invoices.len() - 1
    }
}

/// Structure of one plant before invoices are attached.
struct Plant {
    shape: PlantShape,
    members: Vec<String>,
    /// (seller in loss, buyer in profit)
    pairs: Vec<(String, String)>,
    profit_side: Vec<String>,
    loss_side: Vec<String>,
    max_txn_chain: u32,
    max_ctrl_chain: u32,
}

fn validate(cfg: &SynthConfig) -> Result<Vec<PlantShape>> {
    if cfg.date_from >= cfg.date_to {
        return Err(Error::Config("date range needs at least two days".into()));
    }
    if !(0.0..=1.0).contains(&cfg.month_end_bias) {
        return Err(Error::Config(format!(
            "month_end_bias {} outside [0, 1]",
            cfg.month_end_bias
        )));
    }
    let shapes: Vec<PlantShape> = (0..cfg.n_planted_groups)
        .map(|i| match cfg.shapes {
            ShapeMix::Star => PlantShape::Star,
            ShapeMix::Tangled => PlantShape::Tangled,
            ShapeMix::Alternate if i % 2 == 0 => PlantShape::Star,
            ShapeMix::Alternate => PlantShape::Tangled,
        })
        .collect();
    if shapes.is_empty() {
        return Ok(shapes);
    }
    if cfg.n_investors < cfg.n_planted_groups {
        return Err(Error::Config(format!(
            "{} planted groups need at least as many investors, got {}",
            cfg.n_planted_groups, cfg.n_investors
        )));
    }
    if cfg.rpts_per_group == 0 {
        return Err(Error::Config("rpts_per_group must be >= 1".into()));
    }
    let depth = cfg.planted_depth.max(1);
    let tangled = shapes.iter().filter(|s| **s == PlantShape::Tangled).count();
    if tangled > 0 {
        let product = HOLDING_RATIO.powi(depth as i32 - 1) * LEAF_RATIO;
        if product < DEFAULT_MIN_RATIO {
            return Err(Error::Config(format!(
                "planted_depth {depth} dilutes the owner's stake to {product:.3} < {DEFAULT_MIN_RATIO}"
            )));
        }
    }
    let star = shapes.len() - tangled;
    let investors_needed = star + 2 * tangled;
    // Tangled: five leaves, the flagged side company and depth-1 holdings.
    let taxpayers_needed = 3 * star + tangled * (6 + depth as usize - 1) + 2;
    if investors_needed > cfg.n_investors {
        return Err(Error::Config(format!(
            "plants need {investors_needed} investors, only {} configured",
            cfg.n_investors
        )));
    }
    if taxpayers_needed > cfg.n_taxpayers {
        return Err(Error::Config(format!(
            "plants need {taxpayers_needed} taxpayers (including two background counterparties), only {} configured",
            cfg.n_taxpayers
        )));
    }
    let planted_invoices = shapes.len() * cfg.rpts_per_group + 5 * shapes.len();
    if planted_invoices > cfg.n_invoices {
        return Err(Error::Config(format!(
            "plants need {planted_invoices} invoices, only {} configured",
            cfg.n_invoices
        )));
    }
    Ok(shapes)
}

/// Generates a dataset and its ground truth. Deterministic under `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    let shapes = validate(cfg)?;
    let range = Period::new(cfg.date_from, cfg.date_to)?;
    let manifest = Manifest::new(cfg.date_from, cfg.date_to)?;
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        taxpayers: Vec::new(),
        investors: Vec::new(),
        investments: Vec::new(),
        invoices: Vec::new(),
        audits: Vec::new(),
        planted_invoices: Vec::new(),
    };

    let mut taxpayer_ids: Vec<String> = (0..cfg.n_taxpayers).map(|i| format!("T{i:06}")).collect();
    let mut investor_ids: Vec<String> = (0..cfg.n_investors).map(|i| format!("P{i:05}")).collect();
    taxpayer_ids.shuffle(&mut b.rng);
    investor_ids.shuffle(&mut b.rng);
    for id in &taxpayer_ids {
        let p = b.profile(id);
        b.taxpayers.push(p);
    }
    for id in &investor_ids {
        let kind = if b.rng.random_bool(0.6) {
            EntityKind::Person
        } else {
            EntityKind::Organization
        };
        b.investors.push(InvestorProfile {
            id: id.clone(),
            entity_kind: kind,
        });
    }
    let mut free_taxpayers = taxpayer_ids.clone().into_iter();
    let mut free_investors = investor_ids.clone().into_iter();
    let audit_day = cfg.date_from - chrono::Days::new(180);

    let depth = cfg.planted_depth.max(1);
    let mut plants = Vec::new();
    for shape in &shapes {
        let plant = match shape {
            PlantShape::Star => {
                let owner = free_investors.next().expect("validated budget");
                let k = if b.rng.random_bool(0.5) { 3 } else { 2 };
                let leaves: Vec<String> = (0..k)
                    .map(|_| free_taxpayers.next().expect("validated budget"))
                    .collect();
                for leaf in &leaves {
                    let r = b.rng.random_range(5..=9) as f64 / 10.0;
                    b.invest(&owner, leaf, r);
                    b.flag(leaf, audit_day);
                }
                let mut pairs = vec![(leaves[1].clone(), leaves[0].clone())];
                let mut profit = vec![leaves[0].clone()];
                if k == 3 {
                    pairs.push((leaves[1].clone(), leaves[2].clone()));
                    profit.push(leaves[2].clone());
                }
                let mut members = leaves.clone();
                members.push(owner);
                Plant {
                    shape: *shape,
                    members,
                    pairs,
                    profit_side: profit,
                    loss_side: vec![leaves[1].clone()],
                    max_txn_chain: 2,
                    max_ctrl_chain: 1,
                }
            }
            PlantShape::Tangled => {
                let owner = free_investors.next().expect("validated budget");
                let side_investor = free_investors.next().expect("validated budget");
                let t: Vec<String> = (0..5)
                    .map(|_| free_taxpayers.next().expect("validated budget"))
                    .collect();
                let side_company = free_taxpayers.next().expect("validated budget");
                let holdings: Vec<String> = (1..depth)
                    .map(|_| free_taxpayers.next().expect("validated budget"))
                    .collect();
                for h in &holdings {
                    b.investors.push(InvestorProfile {
                        id: h.clone(),
                        entity_kind: EntityKind::Organization,
                    });
                }
                b.invest(&owner, &t[0], LEAF_RATIO);
                b.invest(&owner, &t[1], LEAF_RATIO);
                let mut parent = owner.clone();
                for h in &holdings {
                    b.invest(&parent, h, HOLDING_RATIO);
                    parent = h.clone();
                }
                for leaf in &t[2..] {
                    b.invest(&parent, leaf, LEAF_RATIO);
                }
                b.invest(&side_investor, &t[3], 0.05);
                b.invest(&side_investor, &side_company, 0.3);
                b.flag(&side_company, audit_day);
                b.flag(&t[3], audit_day);

                // t2 and t4 sell at a loss; t1, t3, t5 buy in profit.
                let pairs = vec![
                    (t[3].clone(), t[2].clone()),
                    (t[3].clone(), t[4].clone()),
                    (t[1].clone(), t[0].clone()),
                    (t[3].clone(), t[0].clone()),
                ];
                let mut members = t.clone();
                members.extend([owner, side_investor, side_company]);
                members.extend(holdings);
                Plant {
                    shape: *shape,
                    members,
                    pairs,
                    profit_side: vec![t[0].clone(), t[2].clone(), t[4].clone()],
                    loss_side: vec![t[1].clone(), t[3].clone()],
                    max_txn_chain: depth + 1,
                    max_ctrl_chain: 2.max(depth.div_ceil(2)),
                }
            }
        };
        plants.push(plant);
    }

    let background_taxpayers: Vec<String> = free_taxpayers.collect();
    let background_investors: Vec<String> = free_investors.collect();

    // Background ownership: random stakes, some above and some below the
    // qualifying threshold, plus a few taxpayer-to-taxpayer holdings.
    for inv in &background_investors {
        let stakes = b.rng.random_range(1..=4);
        for _ in 0..stakes {
            let target = background_taxpayers.choose(&mut b.rng).unwrap().clone();
            let r = (b.rng.random_range(1..=60) as f64) / 100.0;
            b.invest(inv, &target, r);
        }
    }
    let holding_links = background_taxpayers.len() / 20;
    for _ in 0..holding_links {
        let pair: Vec<&String> = background_taxpayers.choose_multiple(&mut b.rng, 2).collect();
        if pair.len() == 2 {
            let r = (b.rng.random_range(5..=80) as f64) / 100.0;
            let (from, to) = (pair[0].clone(), pair[1].clone());
            b.invest(&from, &to, r);
        }
    }
    for id in &background_taxpayers {
        if b.rng.random_bool(0.05) {
            b.flag(id, audit_day);
        }
    }

    // Setup counterparties must survive pruning, or their invoices would
    // drop out of the trade network.
    let survivors = TaxpayerNetwork::build(&b.taxpayers, &b.investors, &b.investments, &[])
        .prune(DEFAULT_MIN_RATIO);
    let counterparties: Vec<String> = background_taxpayers
        .iter()
        .filter(|id| survivors.node(id).is_some_and(|n| n.is_taxpayer()))
        .cloned()
        .collect();
    if counterparties.is_empty() && !plants.is_empty() {
        return Err(Error::Config(
            "background ownership too sparse to host setup counterparties".into(),
        ));
    }

    // Planted invoices: setup trades on the first day, then rpts.
    let sampler = DateSampler::new(range, cfg.month_end_bias);
    let rpt_sampler = DateSampler::new(
        Period::new(cfg.date_from + chrono::Days::new(1), cfg.date_to)?,
        cfg.month_end_bias,
    );
    let setup_cents = (cfg.rpts_per_group as i64 * MAX_RPT_UNITS + 1_000_000) * 100;
    for (gi, plant) in plants.iter().enumerate() {
        for p in &plant.profit_side {
            let cp = counterparties.choose(&mut b.rng).unwrap().clone();
            b.invoice(cfg.date_from, p, &cp, setup_cents);
        }
        for l in &plant.loss_side {
            let cp = counterparties.choose(&mut b.rng).unwrap().clone();
            b.invoice(cfg.date_from, &cp, l, setup_cents);
        }
        for k in 0..cfg.rpts_per_group {
            let (seller, buyer) = plant.pairs[k % plant.pairs.len()].clone();
            let date = rpt_sampler.sample(&mut b.rng);
            let cents = b.rng.random_range(1_000..=MAX_RPT_UNITS) * 100;
            let slot = b.invoice(date, &seller, &buyer, cents);
            b.planted_invoices.push((slot, gi, true));
        }
    }

    let planted_count = b.invoices.len();
    let noise = cfg.n_invoices.saturating_sub(planted_count);
    if background_taxpayers.len() >= 2 {
        for _ in 0..noise {
            let pair: Vec<String> = background_taxpayers
                .choose_multiple(&mut b.rng, 2)
                .cloned()
                .collect();
            let date = sampler.sample(&mut b.rng);
            let units = (10f64.powf(b.rng.random_range(2.0..5.0))) as i64;
            let cents = units * 100 + b.rng.random_range(0..100);
            b.invoice(date, &pair[0], &pair[1], cents);
        }
    }

    // Invoice ids follow a shuffled order so position carries no signal.
    let mut order: Vec<usize> = (0..b.invoices.len()).collect();
    order.shuffle(&mut b.rng);
    for (seq, &slot) in order.iter().enumerate() {
        b.invoices[slot].invoice_id = format!("V{seq:07}");
    }

    let mut truth = GroundTruth::default();
    for (gi, plant) in plants.iter().enumerate() {
        let mut rpt_ids: Vec<String> = b
            .planted_invoices
            .iter()
            .filter(|(_, g, _)| *g == gi)
            .map(|(slot, _, _)| b.invoices[*slot].invoice_id.clone())
            .collect();
        rpt_ids.sort();
        let mut members = plant.members.clone();
        members.sort();
        truth.groups.push(PlantedGroup {
            label: format!("plant-{gi:03}"),
            shape: plant.shape,
            members,
            effective_rpt_ids: rpt_ids.clone(),
            rpt_ids,
            max_txn_chain: plant.max_txn_chain,
            max_ctrl_chain: plant.max_ctrl_chain,
        });
    }

    b.invoices.sort_by(|x, y| (x.date, &x.invoice_id).cmp(&(y.date, &y.invoice_id)));
    let dataset = Dataset {
        manifest,
        taxpayers: b.taxpayers,
        investors: b.investors,
        investments: b.investments,
        invoices: b.invoices,
        audits: b.audits,
    };
    for (gi, plant) in truth.groups.iter().enumerate() {
        verify_plant(&dataset, plant, &plants[gi].pairs)?;
    }
    if !truth.groups.is_empty() {
        verify_effective(&dataset, &truth)?;
    }
    Ok((dataset, truth))
}

/// Rebuilds the plant's component in isolation and checks it with the
/// brute-force oracle: every planted invoice fuses and the oracle's group
/// membership equals the planted membership.
fn verify_plant(dataset: &Dataset, plant: &PlantedGroup, pairs: &[(String, String)]) -> Result<()> {
    let members: BTreeSet<&str> = plant.members.iter().map(String::as_str).collect();
    let edges: Vec<InvestmentEdge> = dataset
        .investments
        .iter()
        .filter(|e| members.contains(e.investor_id.as_str()) || members.contains(e.investee_id.as_str()))
        .cloned()
        .collect();
    let leaks = edges
        .iter()
        .any(|e| !members.contains(e.investor_id.as_str()) || !members.contains(e.investee_id.as_str()));
    if leaks {
        return Err(Error::Config(format!("{}: ownership leaks outside the plant", plant.label)));
    }
    let taxpayers: Vec<TaxpayerProfile> = dataset
        .taxpayers
        .iter()
        .filter(|t| members.contains(t.id.as_str()))
        .cloned()
        .collect();
    let investors: Vec<InvestorProfile> = dataset
        .investors
        .iter()
        .filter(|i| members.contains(i.id.as_str()))
        .cloned()
        .collect();
    let net = TaxpayerNetwork::build(&taxpayers, &investors, &edges, &[]).prune(DEFAULT_MIN_RATIO);
    let ids: BTreeSet<&str> = plant.rpt_ids.iter().map(String::as_str).collect();
    let invoices: Vec<Invoice> = dataset
        .invoices
        .iter()
        .filter(|v| ids.contains(v.invoice_id.as_str()))
        .cloned()
        .collect();
    for (seller, buyer) in pairs {
        if oracle::fuses(&net, seller, buyer, plant.max_txn_chain, DEFAULT_MIN_RATIO).is_none() {
            return Err(Error::Config(format!(
                "{}: planted pair {seller}->{buyer} does not fuse",
                plant.label
            )));
        }
    }
    let trade = TradeNetwork::build(&invoices, &net);
    let params = FusionParams::new(
        Period {
            start: dataset.manifest.date_from,
            end: dataset.manifest.date_to,
        },
        plant.max_txn_chain,
        plant.max_ctrl_chain,
    );
    let groups = oracle::detect_groups(&net, &trade, &params);
    let expected: BTreeSet<String> = plant.members.iter().cloned().collect();
    match groups.as_slice() {
        [g] if g.nodes == expected && g.rpts.len() == plant.rpt_ids.len() => Ok(()),
        _ => Err(Error::Config(format!(
            "{}: oracle does not recover the plant",
            plant.label
        ))),
    }
}

/// Replays the full trade network to confirm every planted transaction is
/// effective over the dataset range.
fn verify_effective(dataset: &Dataset, truth: &GroundTruth) -> Result<()> {
    let net = TaxpayerNetwork::from_dataset(dataset).prune(DEFAULT_MIN_RATIO);
    let trade = TradeNetwork::build(&dataset.invoices, &net);
    let period = Period {
        start: dataset.manifest.date_from,
        end: dataset.manifest.date_to,
    };
    for plant in &truth.groups {
        for id in &plant.effective_rpt_ids {
            let v = trade.invoice(id).ok_or_else(|| {
                Error::Config(format!("{}: planted invoice {id} left the trade network", plant.label))
            })?;
            if !oracle::effective_by_replay(v, &trade, period, &FeatureConfig::default()) {
                return Err(Error::Config(format!(
                    "{}: planted invoice {id} is not effective",
                    plant.label
                )));
            }
        }
    }
    Ok(())
}

/// Fraction of dates that fall in the last five days of their month.
pub fn month_end_share(dates: impl IntoIterator<Item = Date>) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for d in dates {
        total += 1;
        hits += usize::from(is_month_end(d));
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Number of distinct calendar months touched by `period`.
pub fn months_in(period: Period) -> usize {
    let (s, e) = (period.start, period.end);
    ((e.year() - s.year()) * 12 + e.month() as i32 - s.month() as i32 + 1) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_taxpayers: 120,
            n_investors: 40,
            n_invoices: 1_500,
            date_from: Date::from_ymd_opt(2014, 1, 1).unwrap(),
            date_to: Date::from_ymd_opt(2014, 12, 31).unwrap(),
            n_planted_groups: 4,
            planted_depth: 3,
            month_end_bias: 0.6,
            seed,
            rpts_per_group: 6,
            shapes: ShapeMix::Alternate,
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (a, ta) = generate(&small(5)).unwrap();
        let (b, tb) = generate(&small(5)).unwrap();
        assert_eq!(a.render(), b.render());
        assert_eq!(ta, tb);
        let (c, _) = generate(&small(6)).unwrap();
        assert_ne!(a.render(), c.render());
    }

    #[test]
    fn star_only_counts() {
        let mut cfg = small(1);
        cfg.n_planted_groups = 3;
        cfg.shapes = ShapeMix::Star;
        let (_, truth) = generate(&cfg).unwrap();
        assert_eq!(truth.groups.len(), 3);
        assert!(truth.groups.iter().all(|g| g.shape == PlantShape::Star));
    }

    #[test]
    fn planted_ids_exist() {
        let (ds, truth) = generate(&small(2)).unwrap();
        assert_eq!(ds.invoices.len(), 1_500);
        let ids: BTreeSet<&str> = ds.invoices.iter().map(|v| v.invoice_id.as_str()).collect();
        for g in &truth.groups {
            assert!(g.rpt_ids.iter().all(|id| ids.contains(id.as_str())));
            assert!(g.effective_rpt_ids.iter().all(|id| g.rpt_ids.contains(id)));
        }
    }

    #[test]
    fn infeasible_configs() {
        let mut cfg = small(0);
        cfg.planted_depth = 12;
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        let mut cfg = small(0);
        cfg.n_investors = 3;
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        let mut cfg = small(0);
        cfg.n_taxpayers = 10;
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn no_plants_is_valid() {
        let mut cfg = small(3);
        cfg.n_planted_groups = 0;
        let (ds, truth) = generate(&cfg).unwrap();
        assert!(truth.groups.is_empty());
        assert_eq!(ds.invoices.len(), cfg.n_invoices);
    }

    #[test]
    fn ground_truth_jsonl_roundtrip() {
        let (_, truth) = generate(&small(4)).unwrap();
        assert_eq!(GroundTruth::from_jsonl(&truth.to_jsonl()).unwrap(), truth);
    }

    #[test]
    fn months_counted() {
        let p = Period::new(
            Date::from_ymd_opt(2014, 1, 1).unwrap(),
            Date::from_ymd_opt(2015, 12, 31).unwrap(),
        )
        .unwrap();
        assert_eq!(months_in(p), 24);
    }
}
