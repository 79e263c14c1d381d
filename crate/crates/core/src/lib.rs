//! Screening of related-party-transaction tax evasion (RPTTE) groups.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`ingest`] parses taxpayer, investor, investment, invoice and audit
//!    tables, quarantining bad rows, and optionally masks the dataset.
//! 2. [`network`] builds the ownership network, prunes it with the
//!    final-investment-ratio rule, and filters invoices into a trade network.
//! 3. [`fusion`] fuses trade edges into the ownership network under a set of
//!    [`fusion::FusionParams`] and emits suspicious groups.
//! 4. [`features`] derives cumulative profit series, transaction
//!    effectiveness, group features and rankings.
//!
//! [`synth`] produces synthetic datasets with planted groups, and [`oracle`]
//! holds brute-force reference implementations used to check the engine.

pub mod amount;
pub mod error;
pub mod features;
pub mod fusion;
pub mod ingest;
pub mod network;
pub mod oracle;
pub mod period;
pub mod synth;

pub use amount::Amount;
pub use error::{Error, Result};
pub use features::{
    DailyRptSummary, FeatureConfig, GroupFeatures, ProfitSeries, ProfitStatus, RankCriterion,
};
pub use fusion::{FusionParams, RelatedPartyTransaction, RptteGroup};
pub use ingest::{
    AuditRecord, Dataset, EntityKind, IngestReport, InvestmentEdge, InvestorProfile, Invoice,
    Manifest, Rejection, TaxpayerProfile,
};
pub use period::Period;
pub use network::{
    EntityNode, NodeKind, PruneReason, TaxpayerNetwork, TradeNetwork, DEFAULT_MIN_RATIO,
};

/// Calendar day used throughout the crate.
pub type Date = chrono::NaiveDate;
