//! Profit series, transaction effectiveness, group features and ranking.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fusion::{RelatedPartyTransaction, RptteGroup};
use crate::ingest::Invoice;
use crate::network::{TaxpayerNetwork, TradeNetwork};
use crate::{Amount, Date, Error, Period, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Count VAT as part of the cash flow. Off by default: VAT is collected
    /// on behalf of the state.
    #[serde(default)]
    pub include_vat: bool,
    /// Also treat seller-in-profit / buyer-in-loss transactions as effective.
    #[serde(default)]
    pub count_reverse: bool,
}

impl FeatureConfig {
    fn flow(&self, invoice: &Invoice) -> Amount {
        if self.include_vat {
            invoice.amount + invoice.vat_amount
        } else {
            invoice.amount
        }
    }
}

/// Cumulative trade profit of one taxpayer, one value per day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfitSeries {
    pub taxpayer_id: String,
    pub period_start: Date,
    pub period_end: Date,
    pub values: Vec<Amount>,
}

impl ProfitSeries {
    pub fn period(&self) -> Period {
        Period {
            start: self.period_start,
            end: self.period_end,
        }
    }

    fn index(&self, date: Date) -> Result<usize> {
        self.period().index_of(date).ok_or(Error::DateOutOfRange {
            date,
            start: self.period_start,
            end: self.period_end,
        })
    }

    /// Cumulative profit at the end of `date`.
    pub fn value_on(&self, date: Date) -> Result<Amount> {
        Ok(self.values[self.index(date)?])
    }

    /// Cumulative profit at the end of the day before `date`; zero on the
    /// first day of the period.
    pub fn value_before(&self, date: Date) -> Result<Amount> {
        let i = self.index(date)?;
        Ok(if i == 0 { Amount::ZERO } else { self.values[i - 1] })
    }

    pub fn final_value(&self) -> Amount {
        self.values.last().copied().unwrap_or(Amount::ZERO)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfitStatus {
    Profit,
    Loss,
    Neutral,
}

impl ProfitStatus {
    pub fn of(value: Amount) -> Self {
        match value.cents().cmp(&0) {
            Ordering::Greater => ProfitStatus::Profit,
            Ordering::Less => ProfitStatus::Loss,
            Ordering::Equal => ProfitStatus::Neutral,
        }
    }
}

/// Running sum of trade cash flows for `taxpayer_id` over `period`: sales
/// count positive, purchases negative. Every invoice in the trade network
/// touching the taxpayer counts, related-party or not.
pub fn cumulative_daily_profit(
    net: &TaxpayerNetwork,
    trade: &TradeNetwork,
    taxpayer_id: &str,
    period: Period,
    cfg: &FeatureConfig,
) -> Result<ProfitSeries> {
    if !net.contains(taxpayer_id) && !trade.has_taxpayer(taxpayer_id) {
        return Err(Error::UnknownEntity(taxpayer_id.to_string()));
    }
    Ok(profit_series(trade, taxpayer_id, period, cfg))
}

fn profit_series(
    trade: &TradeNetwork,
    taxpayer_id: &str,
    period: Period,
    cfg: &FeatureConfig,
) -> ProfitSeries {
    let mut daily = vec![Amount::ZERO; period.days()];
    for v in trade.touching(taxpayer_id) {
        let Some(i) = period.index_of(v.date) else {
            continue;
        };
        let flow = cfg.flow(v);
        if v.seller_id == taxpayer_id {
            daily[i] += flow;
        } else {
            daily[i] -= flow;
        }
    }
    let mut acc = Amount::ZERO;
    for d in &mut daily {
        acc += *d;
        *d = acc;
    }
    ProfitSeries {
        taxpayer_id: taxpayer_id.to_string(),
        period_start: period.start,
        period_end: period.end,
        values: daily,
    }
}

/// Sign of the final cumulative profit.
pub fn period_end_profit_status(
    net: &TaxpayerNetwork,
    trade: &TradeNetwork,
    taxpayer_id: &str,
    period: Period,
    cfg: &FeatureConfig,
) -> Result<ProfitStatus> {
    let series = cumulative_daily_profit(net, trade, taxpayer_id, period, cfg)?;
    Ok(ProfitStatus::of(series.final_value()))
}

/// Buyer in profit and seller in loss at the end of the day before the
/// transaction. Zero is neutral and never qualifies.
pub fn is_effective_rpt(
    rpt: &RelatedPartyTransaction,
    buyer_series: &ProfitSeries,
    seller_series: &ProfitSeries,
    cfg: &FeatureConfig,
) -> Result<bool> {
    let date = rpt.invoice.date;
    let buyer = ProfitStatus::of(buyer_series.value_before(date)?);
    let seller = ProfitStatus::of(seller_series.value_before(date)?);
    Ok(match (buyer, seller) {
        (ProfitStatus::Profit, ProfitStatus::Loss) => true,
        (ProfitStatus::Loss, ProfitStatus::Profit) => cfg.count_reverse,
        _ => false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupFeatures {
    pub n_taxpayers: usize,
    pub n_evasion_taxpayers: usize,
    pub total_rpt_amount: Amount,
    pub n_rpts: usize,
    pub n_effective_rpts: usize,
}

/// Caches profit series per taxpayer for one period.
pub struct ProfitBook<'a> {
    trade: &'a TradeNetwork,
    period: Period,
    cfg: FeatureConfig,
    cache: HashMap<String, ProfitSeries>,
}

impl<'a> ProfitBook<'a> {
    pub fn new(trade: &'a TradeNetwork, period: Period, cfg: FeatureConfig) -> Self {
        ProfitBook {
            trade,
            period,
            cfg,
            cache: HashMap::new(),
        }
    }

    pub fn series(&mut self, taxpayer_id: &str) -> &ProfitSeries {
        if !self.cache.contains_key(taxpayer_id) {
            let s = profit_series(self.trade, taxpayer_id, self.period, &self.cfg);
            self.cache.insert(taxpayer_id.to_string(), s);
        }
        &self.cache[taxpayer_id]
    }

    pub fn status(&mut self, taxpayer_id: &str) -> ProfitStatus {
        ProfitStatus::of(self.series(taxpayer_id).final_value())
    }
}

/// Computes features for `group`, marking each rpt's `effective` flag.
pub fn group_features(
    group: &mut RptteGroup,
    book: &mut ProfitBook<'_>,
) -> Result<GroupFeatures> {
    let cfg = book.cfg;
    let mut n_effective = 0;
    for rpt in &mut group.rpts {
        let buyer = book.series(&rpt.invoice.buyer_id).clone();
        let seller = book.series(&rpt.invoice.seller_id);
        rpt.effective = is_effective_rpt(rpt, &buyer, seller, &cfg)?;
        n_effective += usize::from(rpt.effective);
    }
    let features = GroupFeatures {
        n_taxpayers: group.nodes.iter().filter(|n| n.is_taxpayer()).count(),
        n_evasion_taxpayers: group
            .nodes
            .iter()
            .filter(|n| n.is_taxpayer() && n.has_evasion_record)
            .count(),
        total_rpt_amount: group.rpts.iter().map(|r| r.invoice.amount).sum(),
        n_rpts: group.rpts.len(),
        n_effective_rpts: n_effective,
    };
    group.features = Some(features);
    Ok(features)
}

/// Fills features for every group over the same period.
pub fn annotate_groups(
    groups: &mut [RptteGroup],
    trade: &TradeNetwork,
    period: Period,
    cfg: FeatureConfig,
) -> Result<()> {
    let mut book = ProfitBook::new(trade, period, cfg);
    for g in groups {
        group_features(g, &mut book)?;
    }
    Ok(())
}

/// Per-day related-party transaction totals over a range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyRptSummary {
    pub from: Date,
    pub to: Date,
    pub totals: Vec<Amount>,
}

impl DailyRptSummary {
    pub fn days(&self) -> impl Iterator<Item = (Date, Amount)> + '_ {
        self.from.iter_days().zip(self.totals.iter().copied())
    }
}

/// Sums rpt amounts per day across `groups`; days without rpts are zero.
pub fn daily_rpt_amount(groups: &[RptteGroup], range: Period) -> DailyRptSummary {
    let mut totals = vec![Amount::ZERO; range.days()];
    for r in groups.iter().flat_map(|g| &g.rpts) {
        if let Some(i) = range.index_of(r.invoice.date) {
            totals[i] += r.invoice.amount;
        }
    }
    DailyRptSummary {
        from: range.start,
        to: range.end,
        totals,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankCriterion {
    #[default]
    EffectiveRpts,
    RptAmount,
    EvasionTaxpayers,
}

impl RankCriterion {
    pub const ALL: [RankCriterion; 3] = [
        RankCriterion::EffectiveRpts,
        RankCriterion::RptAmount,
        RankCriterion::EvasionTaxpayers,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RankCriterion::EffectiveRpts => "effective_rpts",
            RankCriterion::RptAmount => "rpt_amount",
            RankCriterion::EvasionTaxpayers => "evasion_taxpayers",
        }
    }

    /// The ranked value, widened to a common integer type.
    pub fn key(self, f: &GroupFeatures) -> i64 {
        match self {
            RankCriterion::EffectiveRpts => f.n_effective_rpts as i64,
            RankCriterion::RptAmount => f.total_rpt_amount.cents(),
            RankCriterion::EvasionTaxpayers => f.n_evasion_taxpayers as i64,
        }
    }
}

impl FromStr for RankCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RankCriterion::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "sort",
                    format!("`{s}` is not one of effective_rpts|rpt_amount|evasion_taxpayers"),
                )
            })
    }
}

/// Orders groups by `criterion`; ties always go to ascending `group_id`.
pub fn rank_groups(
    groups: &[RptteGroup],
    criterion: RankCriterion,
    descending: bool,
) -> Vec<&RptteGroup> {
    let mut out: Vec<&RptteGroup> = groups.iter().collect();
    out.sort_by(|a, b| {
        let ka = criterion.key(&a.features.unwrap_or_default());
        let kb = criterion.key(&b.features.unwrap_or_default());
        let primary = if descending { kb.cmp(&ka) } else { ka.cmp(&kb) };
        primary.then_with(|| a.group_id.cmp(&b.group_id))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{TaxpayerProfile, InvestorProfile, InvestmentEdge, EntityKind};

    fn d(day: u32) -> Date {
        Date::from_ymd_opt(2014, 1, day).unwrap()
    }

    fn invoice(id: &str, day: u32, s: &str, b: &str, units: i64) -> Invoice {
        Invoice {
            invoice_id: id.into(),
            date: d(day),
            seller_id: s.into(),
            buyer_id: b.into(),
            amount: Amount::from_cents(units * 100),
            vat_amount: Amount::from_cents(units * 17),
        }
    }

    fn setup(invoices: &[Invoice]) -> (TaxpayerNetwork, TradeNetwork) {
        let ids = ["a", "b", "c"];
        let tps: Vec<_> = ids
            .iter()
            .map(|id| TaxpayerProfile {
                id: id.to_string(),
                industry: String::new(),
                ownership_type: String::new(),
                region: String::new(),
                merchandise: String::new(),
            })
            .collect();
        let investors = [InvestorProfile { id: "o".into(), entity_kind: EntityKind::Person }];
        let edges: Vec<_> = ids
            .iter()
            .map(|id| InvestmentEdge {
                investor_id: "o".into(),
                investee_id: id.to_string(),
                amount: Amount::ZERO,
                share_ratio: 0.5,
            })
            .collect();
        let net = TaxpayerNetwork::build(&tps, &investors, &edges, &[]);
        let trade = TradeNetwork::build(invoices, &net);
        (net, trade)
    }

    fn units(s: &ProfitSeries) -> Vec<i64> {
        s.values.iter().map(|a| a.cents() / 100).collect()
    }

    #[test]
    fn profit_series_examples() {
        let five = Period::new(d(1), d(5)).unwrap();
        let cfg = FeatureConfig::default();
        let (net, trade) = setup(&[]);
        let s = cumulative_daily_profit(&net, &trade, "a", five, &cfg).unwrap();
        assert_eq!(units(&s), [0, 0, 0, 0, 0]);

        let (net, trade) = setup(&[invoice("1", 3, "a", "b", 100)]);
        let s = cumulative_daily_profit(&net, &trade, "a", five, &cfg).unwrap();
        assert_eq!(units(&s), [0, 0, 100, 100, 100]);

        let (net, trade) = setup(&[invoice("1", 2, "a", "b", 100), invoice("2", 4, "c", "a", 150)]);
        let s = cumulative_daily_profit(&net, &trade, "a", five, &cfg).unwrap();
        assert_eq!(units(&s), [0, 100, 100, -50, -50]);

        assert!(cumulative_daily_profit(&net, &trade, "zz", five, &cfg).is_err());
    }

    #[test]
    fn vat_toggle() {
        let five = Period::new(d(1), d(5)).unwrap();
        let (net, trade) = setup(&[invoice("1", 1, "a", "b", 100)]);
        let cfg = FeatureConfig { include_vat: true, count_reverse: false };
        let s = cumulative_daily_profit(&net, &trade, "a", five, &cfg).unwrap();
        assert_eq!(s.final_value().cents(), 11_700);
    }

    fn rpt(day: u32) -> RelatedPartyTransaction {
        RelatedPartyTransaction {
            invoice: invoice("x", day, "s", "b", 10),
            chain_length: 2,
            common_owners: vec!["o".into()],
            effective: false,
        }
    }

    fn series(id: &str, values: &[i64]) -> ProfitSeries {
        ProfitSeries {
            taxpayer_id: id.into(),
            period_start: d(1),
            period_end: d(values.len() as u32),
            values: values.iter().map(|v| Amount::from_cents(v * 100)).collect(),
        }
    }

    #[test]
    fn effectiveness_examples() {
        let cfg = FeatureConfig::default();
        let r = rpt(2);
        assert!(is_effective_rpt(&r, &series("b", &[500, 0]), &series("s", &[-200, 0]), &cfg).unwrap());
        assert!(!is_effective_rpt(&r, &series("b", &[500, 0]), &series("s", &[100, 0]), &cfg).unwrap());
        assert!(!is_effective_rpt(&r, &series("b", &[0, 0]), &series("s", &[-100, 0]), &cfg).unwrap());
        // First day of the period: both neutral.
        assert!(!is_effective_rpt(&rpt(1), &series("b", &[500, 0]), &series("s", &[-200, 0]), &cfg).unwrap());
        // Reverse direction only behind the flag.
        let rev = FeatureConfig { include_vat: false, count_reverse: true };
        assert!(!is_effective_rpt(&r, &series("b", &[-5, 0]), &series("s", &[5, 0]), &cfg).unwrap());
        assert!(is_effective_rpt(&r, &series("b", &[-5, 0]), &series("s", &[5, 0]), &rev).unwrap());
        assert!(is_effective_rpt(&rpt(3), &series("b", &[1, 1]), &series("s", &[-1, -1]), &cfg).is_err());
    }

    #[test]
    fn status_signs() {
        assert_eq!(ProfitStatus::of(Amount::from_cents(1)), ProfitStatus::Profit);
        assert_eq!(ProfitStatus::of(Amount::ZERO), ProfitStatus::Neutral);
        assert_eq!(ProfitStatus::of(Amount::from_cents(-1)), ProfitStatus::Loss);
        let (net, trade) = setup(&[invoice("1", 2, "b", "a", 100)]);
        let p = Period::new(d(1), d(5)).unwrap();
        let cfg = FeatureConfig::default();
        assert_eq!(period_end_profit_status(&net, &trade, "a", p, &cfg).unwrap(), ProfitStatus::Loss);
        assert_eq!(period_end_profit_status(&net, &trade, "c", p, &cfg).unwrap(), ProfitStatus::Neutral);
    }

    fn bare_group(id: &str, effective: usize, amount: i64, evasion: usize) -> RptteGroup {
        RptteGroup {
            group_id: id.into(),
            nodes: Vec::new(),
            investment_edges: Vec::new(),
            rpts: Vec::new(),
            features: Some(GroupFeatures {
                n_taxpayers: 4,
                n_evasion_taxpayers: evasion,
                total_rpt_amount: Amount::from_cents(amount),
                n_rpts: 5,
                n_effective_rpts: effective,
            }),
        }
    }

    #[test]
    fn ranking_examples() {
        let groups = vec![bare_group("g1", 3, 0, 0), bare_group("g2", 1, 0, 0), bare_group("g3", 2, 0, 0)];
        let order: Vec<_> = rank_groups(&groups, RankCriterion::EffectiveRpts, true)
            .iter()
            .map(|g| g.features.unwrap().n_effective_rpts)
            .collect();
        assert_eq!(order, [3, 2, 1]);

        let tied = vec![bare_group("gb", 1, 0, 0), bare_group("ga", 1, 0, 0)];
        for desc in [true, false] {
            let ids: Vec<_> = rank_groups(&tied, RankCriterion::EffectiveRpts, desc)
                .iter()
                .map(|g| g.group_id.as_str())
                .collect();
            assert_eq!(ids, ["ga", "gb"]);
        }
        assert_eq!("rpt_amount".parse::<RankCriterion>().unwrap(), RankCriterion::RptAmount);
        assert!("bogus".parse::<RankCriterion>().is_err());
    }

    #[test]
    fn daily_summary() {
        let p = Period::new(d(1), d(5)).unwrap();
        assert!(daily_rpt_amount(&[], p).totals.iter().all(|a| a.is_zero()));
        let mut g = bare_group("g", 0, 0, 0);
        for (id, amt) in [("1", 100), ("2", 40)] {
            let mut r = rpt(3);
            r.invoice.invoice_id = id.into();
            r.invoice.amount = Amount::from_cents(amt * 100);
            g.rpts.push(r);
        }
        let s = daily_rpt_amount(&[g], p);
        assert_eq!(s.totals[2].cents(), 14_000);
        assert_eq!(s.totals.iter().filter(|a| !a.is_zero()).count(), 1);
        assert_eq!(s.days().count(), 5);
    }
}
