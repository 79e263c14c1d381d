//! `rptte` command line: detect, mask, generate and serve.
//!
//! Every parameter can come from a flag or from the TOML file given with
//! `--config`; flags win. Keys in the file are the flag names with `_`
//! instead of `-`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rptte_core::features::{annotate_groups, rank_groups};
use rptte_core::fusion::detect_groups;
use rptte_core::ingest::{mask_dataset, DatasetPaths, InvestmentEdge, IngestReport};
use rptte_core::synth::{generate, ShapeMix, SynthConfig};
use rptte_core::{
    Amount, Dataset, Date, FeatureConfig, FusionParams, GroupFeatures, NodeKind, Period,
    RankCriterion, RptteGroup, TaxpayerNetwork, TradeNetwork, DEFAULT_MIN_RATIO,
};
use serde::{Deserialize, Serialize};

pub const GROUPS_FILE: &str = "groups.jsonl";
pub const FEATURES_FILE: &str = "features.csv";
pub const REJECTIONS_FILE: &str = "rejections.jsonl";

pub const DEFAULT_MAX_TXN_CHAIN: u32 = 4;
pub const DEFAULT_MAX_CTRL_CHAIN: u32 = 2;
pub const DEFAULT_VARIANCE_PCT: f64 = 0.1;

#[derive(Debug, Parser)]
#[command(name = "rptte", version, about = "Screen tax data for related-party transactions")]
pub struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect suspicious groups and write groups.jsonl, features.csv, rejections.jsonl.
    Detect(DetectArgs),
    /// Pseudonymize ids and vary amounts, writing a masked copy of the dataset.
    Mask(MaskArgs),
    /// Write a synthetic dataset with planted groups and its ground truth.
    Generate(GenerateArgs),
    /// Serve the HTTP API over a dataset directory.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Default)]
pub struct InputArgs {
    /// Directory holding all input files under their default names.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub taxpayers: Option<PathBuf>,
    #[arg(long)]
    pub investors: Option<PathBuf>,
    #[arg(long)]
    pub investments: Option<PathBuf>,
    #[arg(long)]
    pub invoices: Option<PathBuf>,
    #[arg(long)]
    pub audits: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// First day of the detection period (default: dataset start).
    #[arg(long)]
    pub from: Option<String>,
    /// Last day of the detection period (default: dataset end).
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub max_txn_chain: Option<u32>,
    #[arg(long)]
    pub max_ctrl_chain: Option<u32>,
    #[arg(long)]
    pub min_ratio: Option<f64>,
    /// effective_rpts | rpt_amount | evasion_taxpayers
    #[arg(long)]
    pub sort: Option<String>,
    /// Rank in ascending order instead.
    #[arg(long)]
    pub ascending: bool,
    /// Keep only the first N ranked groups in the reports.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Count VAT as part of the cash flow.
    #[arg(long)]
    pub include_vat: bool,
    /// Also count seller-in-profit / buyer-in-loss transactions as effective.
    #[arg(long)]
    pub count_reverse: bool,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Half-width of the amount factor band, in (0, 0.5].
    #[arg(long)]
    pub variance_pct: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub n_taxpayers: Option<usize>,
    #[arg(long)]
    pub n_investors: Option<usize>,
    #[arg(long)]
    pub n_invoices: Option<usize>,
    #[arg(long)]
    pub n_planted_groups: Option<usize>,
    #[arg(long)]
    pub planted_depth: Option<u32>,
    #[arg(long)]
    pub month_end_bias: Option<f64>,
    #[arg(long)]
    pub rpts_per_group: Option<usize>,
    /// alternate | star | tangled
    #[arg(long)]
    pub shapes: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub cache_capacity: Option<usize>,
    /// Directory of a built UI bundle to serve at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub include_vat: bool,
    #[arg(long)]
    pub count_reverse: bool,
}

/// Values read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub taxpayers: Option<PathBuf>,
    pub investors: Option<PathBuf>,
    pub investments: Option<PathBuf>,
    pub invoices: Option<PathBuf>,
    pub audits: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub max_txn_chain: Option<u32>,
    pub max_ctrl_chain: Option<u32>,
    pub min_ratio: Option<f64>,
    pub sort: Option<String>,
    pub ascending: Option<bool>,
    pub top: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub include_vat: Option<bool>,
    pub count_reverse: Option<bool>,
    pub seed: Option<u64>,
    pub variance_pct: Option<f64>,
    pub n_taxpayers: Option<usize>,
    pub n_investors: Option<usize>,
    pub n_invoices: Option<usize>,
    pub n_planted_groups: Option<usize>,
    pub planted_depth: Option<u32>,
    pub month_end_bias: Option<f64>,
    pub rpts_per_group: Option<usize>,
    pub shapes: Option<String>,
    pub listen: Option<String>,
    pub cache_capacity: Option<usize>,
    pub static_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; nothing was written.
    Usage(String),
    /// Failure while reading inputs or writing outputs.
    Run(rptte_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<rptte_core::Error> for CliError {
    fn from(e: rptte_core::Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_date(flag: &str, raw: &str) -> CliResult<Date> {
    Date::parse_from_str(raw, "%Y-%m-%d")
        .map_err(|_| usage(format!("--{flag}: `{raw}` is not a YYYY-MM-DD date")))
}

fn resolve_inputs(flags: &InputArgs, file: &FileConfig) -> CliResult<DatasetPaths> {
    let dir = flags.data_dir.clone().or_else(|| file.data_dir.clone());
    let defaults = dir.as_ref().map(DatasetPaths::in_dir);
    let pick = |flag: &Option<PathBuf>,
                from_file: &Option<PathBuf>,
                default: Option<&PathBuf>,
                name: &str|
     -> CliResult<PathBuf> {
        flag.clone()
            .or_else(|| from_file.clone())
            .or_else(|| default.cloned())
            .ok_or_else(|| usage(format!("--{name} is required (or give --data-dir)")))
    };
    Ok(DatasetPaths {
        taxpayers: pick(&flags.taxpayers, &file.taxpayers, defaults.as_ref().map(|d| &d.taxpayers), "taxpayers")?,
        investors: pick(&flags.investors, &file.investors, defaults.as_ref().map(|d| &d.investors), "investors")?,
        investments: pick(&flags.investments, &file.investments, defaults.as_ref().map(|d| &d.investments), "investments")?,
        invoices: pick(&flags.invoices, &file.invoices, defaults.as_ref().map(|d| &d.invoices), "invoices")?,
        audits: pick(&flags.audits, &file.audits, defaults.as_ref().map(|d| &d.audits), "audits")?,
        manifest: pick(&flags.manifest, &file.manifest, defaults.as_ref().map(|d| &d.manifest), "manifest")?,
    })
}

fn check_out_dir(dir: &Path) -> CliResult<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(usage(format!("--out-dir {} exists and is not a directory", dir.display())));
    }
    Ok(())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| {
        CliError::Run(rptte_core::Error::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}

fn write(path: PathBuf, text: String) -> CliResult<()> {
    fs::write(&path, text).map_err(|source| CliError::Run(rptte_core::Error::Io { path, source }))
}

/// Fully validated `detect` invocation.
#[derive(Debug, Clone)]
pub struct DetectPlan {
    pub inputs: DatasetPaths,
    pub from: Option<Date>,
    pub to: Option<Date>,
    pub max_txn_chain: u32,
    pub max_ctrl_chain: u32,
    pub min_ratio: f64,
    pub sort: RankCriterion,
    pub descending: bool,
    pub top: Option<usize>,
    pub out_dir: PathBuf,
    pub features: FeatureConfig,
}

impl DetectPlan {
    pub fn resolve(a: &DetectArgs, f: &FileConfig) -> CliResult<Self> {
        let inputs = resolve_inputs(&a.input, f)?;
        let from = a.from.clone().or_else(|| f.from.clone()).map(|s| parse_date("from", &s)).transpose()?;
        let to = a.to.clone().or_else(|| f.to.clone()).map(|s| parse_date("to", &s)).transpose()?;
        if let (Some(x), Some(y)) = (from, to) {
            if x > y {
                return Err(usage(format!("--from {x} is after --to {y}")));
            }
        }
        let max_txn_chain = a.max_txn_chain.or(f.max_txn_chain).unwrap_or(DEFAULT_MAX_TXN_CHAIN);
        let max_ctrl_chain = a.max_ctrl_chain.or(f.max_ctrl_chain).unwrap_or(DEFAULT_MAX_CTRL_CHAIN);
        if max_txn_chain < 1 || max_ctrl_chain < 1 {
            return Err(usage("--max-txn-chain and --max-ctrl-chain must be >= 1"));
        }
        let min_ratio = a.min_ratio.or(f.min_ratio).unwrap_or(DEFAULT_MIN_RATIO);
        if !(min_ratio > 0.0 && min_ratio <= 1.0) {
            return Err(usage(format!("--min-ratio {min_ratio} outside (0, 1]")));
        }
        let sort = match a.sort.clone().or_else(|| f.sort.clone()) {
            Some(s) => RankCriterion::from_str(&s).map_err(|e| usage(format!("--sort: {e}")))?,
            None => RankCriterion::default(),
        };
        let out_dir = a
            .out_dir
            .clone()
            .or_else(|| f.out_dir.clone())
            .ok_or_else(|| usage("--out-dir is required"))?;
        check_out_dir(&out_dir)?;
        Ok(DetectPlan {
            inputs,
            from,
            to,
            max_txn_chain,
            max_ctrl_chain,
            min_ratio,
            sort,
            descending: !(a.ascending || f.ascending.unwrap_or(false)),
            top: a.top.or(f.top),
            out_dir,
            features: FeatureConfig {
                include_vat: a.include_vat || f.include_vat.unwrap_or(false),
                count_reverse: a.count_reverse || f.count_reverse.unwrap_or(false),
            },
        })
    }
}

#[derive(Debug, Serialize)]
struct NodeRecord<'a> {
    id: &'a str,
    kind: NodeKind,
    evasion: bool,
}

#[derive(Debug, Serialize)]
struct RptRecord<'a> {
    invoice_id: &'a str,
    date: Date,
    seller_id: &'a str,
    buyer_id: &'a str,
    amount: Amount,
    vat_amount: Amount,
    chain_length: u32,
    common_owners: &'a [String],
    effective: bool,
}

/// One line of `groups.jsonl`.
#[derive(Debug, Serialize)]
struct GroupRecord<'a> {
    rank: usize,
    group_id: &'a str,
    features: GroupFeatures,
    nodes: Vec<NodeRecord<'a>>,
    investment_edges: &'a [InvestmentEdge],
    rpts: Vec<RptRecord<'a>>,
}

fn group_record(rank: usize, g: &RptteGroup) -> GroupRecord<'_> {
    GroupRecord {
        rank,
        group_id: &g.group_id,
        features: g.features.unwrap_or_default(),
        nodes: g
            .nodes
            .iter()
            .map(|n| NodeRecord {
                id: &n.id,
                kind: n.kind,
                evasion: n.has_evasion_record,
            })
            .collect(),
        investment_edges: &g.investment_edges,
        rpts: g
            .rpts
            .iter()
            .map(|r| RptRecord {
                invoice_id: &r.invoice.invoice_id,
                date: r.invoice.date,
                seller_id: &r.invoice.seller_id,
                buyer_id: &r.invoice.buyer_id,
                amount: r.invoice.amount,
                vat_amount: r.invoice.vat_amount,
                chain_length: r.chain_length,
                common_owners: &r.common_owners,
                effective: r.effective,
            })
            .collect(),
    }
}

/// What `detect` produced.
#[derive(Debug)]
pub struct DetectOutcome {
    pub groups: Vec<RptteGroup>,
    pub ranked_ids: Vec<String>,
    pub report: IngestReport,
}

pub fn run_detect(plan: &DetectPlan) -> CliResult<DetectOutcome> {
    let (ds, report) = Dataset::load(&plan.inputs)?;
    let range = Period {
        start: ds.manifest.date_from,
        end: ds.manifest.date_to,
    };
    let period = Period::new(plan.from.unwrap_or(range.start), plan.to.unwrap_or(range.end))
        .map_err(|e| usage(e.to_string()))?;
    if !range.contains(period.start) || !range.contains(period.end) {
        return Err(usage(format!(
            "period {} .. {} leaves the dataset range {} .. {}",
            period.start, period.end, range.start, range.end
        )));
    }
    let params = FusionParams {
        min_ratio: plan.min_ratio,
        ..FusionParams::new(period, plan.max_txn_chain, plan.max_ctrl_chain)
    };
    let net = TaxpayerNetwork::from_dataset(&ds).prune(params.min_ratio);
    let trade = TradeNetwork::build(&ds.invoices, &net);
    let mut groups = detect_groups(&net, &trade, &params)?;
    annotate_groups(&mut groups, &trade, period, plan.features)?;

    let ranked: Vec<&RptteGroup> = rank_groups(&groups, plan.sort, plan.descending)
        .into_iter()
        .take(plan.top.unwrap_or(usize::MAX))
        .collect();
    let mut jsonl = String::new();
    let mut table = csv::Writer::from_writer(Vec::new());
    table
        .write_record([
            "rank",
            "group_id",
            "n_nodes",
            "n_taxpayers",
            "n_evasion_taxpayers",
            "total_rpt_amount",
            "n_rpts",
            "n_effective_rpts",
        ])
        .expect("in-memory write");
    for (i, g) in ranked.iter().enumerate() {
        jsonl.push_str(&serde_json::to_string(&group_record(i + 1, g)).expect("record serializes"));
        jsonl.push('\n');
        let f = g.features.unwrap_or_default();
        table
            .write_record([
                (i + 1).to_string(),
                g.group_id.clone(),
                g.nodes.len().to_string(),
                f.n_taxpayers.to_string(),
                f.n_evasion_taxpayers.to_string(),
                f.total_rpt_amount.to_string(),
                f.n_rpts.to_string(),
                f.n_effective_rpts.to_string(),
            ])
            .expect("in-memory write");
    }
    let table = String::from_utf8(table.into_inner().expect("flush")).expect("utf-8");
    let ranked_ids = ranked.iter().map(|g| g.group_id.clone()).collect();

    create_dir(&plan.out_dir)?;
    write(plan.out_dir.join(GROUPS_FILE), jsonl)?;
    write(plan.out_dir.join(FEATURES_FILE), table)?;
    report.write_jsonl(&plan.out_dir.join(REJECTIONS_FILE))?;
    Ok(DetectOutcome {
        groups,
        ranked_ids,
        report,
    })
}

pub fn run_mask(a: &MaskArgs, f: &FileConfig) -> CliResult<usize> {
    let inputs = resolve_inputs(&a.input, f)?;
    let out_dir = a
        .out_dir
        .clone()
        .or_else(|| f.out_dir.clone())
        .ok_or_else(|| usage("--out-dir is required"))?;
    check_out_dir(&out_dir)?;
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let variance = a.variance_pct.or(f.variance_pct).unwrap_or(DEFAULT_VARIANCE_PCT);
    if !(variance > 0.0 && variance <= 0.5) {
        return Err(usage(format!("--variance-pct {variance} outside (0, 0.5]")));
    }
    let (ds, report) = Dataset::load(&inputs)?;
    let masked = mask_dataset(&ds, seed, variance)?;
    create_dir(&out_dir)?;
    masked.write_dir(&out_dir)?;
    report.write_jsonl(&out_dir.join(REJECTIONS_FILE))?;
    Ok(masked.invoices.len())
}

pub fn generate_config(a: &GenerateArgs, f: &FileConfig) -> CliResult<(SynthConfig, PathBuf)> {
    let d = SynthConfig::default();
    let out_dir = a
        .out_dir
        .clone()
        .or_else(|| f.out_dir.clone())
        .ok_or_else(|| usage("--out-dir is required"))?;
    check_out_dir(&out_dir)?;
    let date = |flag: &Option<String>, file: &Option<String>, name: &str, default: Date| {
        flag.clone()
            .or_else(|| file.clone())
            .map(|s| parse_date(name, &s))
            .transpose()
            .map(|v| v.unwrap_or(default))
    };
    let shapes = match a.shapes.clone().or_else(|| f.shapes.clone()).as_deref() {
        None | Some("alternate") => ShapeMix::Alternate,
        Some("star") => ShapeMix::Star,
        Some("tangled") => ShapeMix::Tangled,
        Some(other) => return Err(usage(format!("--shapes: `{other}` is not alternate|star|tangled"))),
    };
    let cfg = SynthConfig {
        n_taxpayers: a.n_taxpayers.or(f.n_taxpayers).unwrap_or(d.n_taxpayers),
        n_investors: a.n_investors.or(f.n_investors).unwrap_or(d.n_investors),
        n_invoices: a.n_invoices.or(f.n_invoices).unwrap_or(d.n_invoices),
        date_from: date(&a.from, &f.from, "from", d.date_from)?,
        date_to: date(&a.to, &f.to, "to", d.date_to)?,
        n_planted_groups: a.n_planted_groups.or(f.n_planted_groups).unwrap_or(d.n_planted_groups),
        planted_depth: a.planted_depth.or(f.planted_depth).unwrap_or(d.planted_depth),
        month_end_bias: a.month_end_bias.or(f.month_end_bias).unwrap_or(d.month_end_bias),
        seed: a.seed.or(f.seed).unwrap_or(d.seed),
        rpts_per_group: a.rpts_per_group.or(f.rpts_per_group).unwrap_or(d.rpts_per_group),
        shapes,
    };
    Ok((cfg, out_dir))
}

pub fn run_generate(a: &GenerateArgs, f: &FileConfig) -> CliResult<usize> {
    let (cfg, out_dir) = generate_config(a, f)?;
    let (ds, truth) = generate(&cfg).map_err(|e| match e {
        rptte_core::Error::Config(m) => usage(m),
        other => CliError::Run(other),
    })?;
    create_dir(&out_dir)?;
    ds.write_dir(&out_dir)?;
    truth.write(&out_dir)?;
    Ok(truth.groups.len())
}

pub fn serve_config(a: &ServeArgs, f: &FileConfig) -> CliResult<rptte_service::ServiceConfig> {
    let mut cfg = rptte_service::ServiceConfig::from_env().map_err(|e| usage(e.to_string()))?;
    if let Some(d) = a.data_dir.clone().or_else(|| f.data_dir.clone()) {
        cfg.dataset_dir = d;
    }
    if let Some(l) = a.listen.clone().or_else(|| f.listen.clone()) {
        cfg.listen = l;
    }
    if let Some(c) = a.cache_capacity.or(f.cache_capacity) {
        cfg.cache_capacity = c;
    }
    if let Some(s) = a.static_dir.clone().or_else(|| f.static_dir.clone()) {
        cfg.static_dir = Some(s);
    }
    cfg.include_vat |= a.include_vat || f.include_vat.unwrap_or(false);
    cfg.count_reverse |= a.count_reverse || f.count_reverse.unwrap_or(false);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

/// Runs one parsed invocation, printing a one-line summary on success.
pub fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Detect(a) => {
            let plan = DetectPlan::resolve(&a, &file)?;
            let out = run_detect(&plan)?;
            println!(
                "{} groups ({} written), {} rejected rows -> {}",
                out.groups.len(),
                out.ranked_ids.len(),
                out.report.rejections.len(),
                plan.out_dir.display()
            );
        }
        Command::Mask(a) => {
            let n = run_mask(&a, &file)?;
            println!("masked {n} invoices");
        }
        Command::Generate(a) => {
            let n = run_generate(&a, &file)?;
            println!("generated dataset with {n} planted groups");
        }
        Command::Serve(a) => {
            let cfg = serve_config(&a, &file)?;
            let rt = tokio::runtime::Runtime::new().map_err(|source| {
                CliError::Run(rptte_core::Error::Io {
                    path: PathBuf::from("<runtime>"),
                    source,
                })
            })?;
            rt.block_on(rptte_service::serve(cfg))?;
        }
    }
    Ok(())
}
