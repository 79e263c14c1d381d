//! Parsing of the raw tax tables into validated records.
//!
//! Every input row ends up either as a record or as a [`Rejection`] with a
//! machine-readable reason; only header problems abort a parse.

mod mask;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Amount, Date, Error, Result};

pub use mask::{mask_dataset, Masker};

pub const TAXPAYERS_FILE: &str = "taxpayers.csv";
pub const INVESTORS_FILE: &str = "investors.csv";
pub const INVESTMENTS_FILE: &str = "investments.csv";
pub const INVOICES_FILE: &str = "invoices.csv";
pub const AUDITS_FILE: &str = "audits.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

const TAXPAYER_COLUMNS: &[&str] = &["id", "industry", "ownership_type", "region", "merchandise"];
const INVESTOR_COLUMNS: &[&str] = &["id", "entity_kind"];
const INVESTMENT_COLUMNS: &[&str] = &["investor_id", "investee_id", "amount", "share_ratio"];
const INVOICE_COLUMNS: &[&str] = &[
    "invoice_id",
    "date",
    "seller_id",
    "buyer_id",
    "amount",
    "vat_amount",
];
const AUDIT_COLUMNS: &[&str] = &[
    "taxpayer_id",
    "audit_date",
    "violation_type",
    "description",
    "action_taken",
    "tax_payable",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxpayerProfile {
    pub id: String,
    pub industry: String,
    pub ownership_type: String,
    pub region: String,
    pub merchandise: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Person,
    Organization,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Person => "person",
            EntityKind::Organization => "organization",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvestorProfile {
    pub id: String,
    pub entity_kind: EntityKind,
}

/// Directed ownership stake, investor → investee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestmentEdge {
    pub investor_id: String,
    pub investee_id: String,
    pub amount: Amount,
    pub share_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invoice {
    pub invoice_id: String,
    pub date: Date,
    pub seller_id: String,
    pub buyer_id: String,
    pub amount: Amount,
    pub vat_amount: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub taxpayer_id: String,
    pub audit_date: Date,
    pub violation_type: String,
    pub description: String,
    pub action_taken: String,
    pub tax_payable: Amount,
}

impl AuditRecord {
    /// An audit counts as a violation unless its type is blank or `none`.
    pub fn is_violation(&self) -> bool {
        let v = self.violation_type.trim();
        !v.is_empty() && !v.eq_ignore_ascii_case("none")
    }
}

/// Declared date range of the dataset, read from `manifest.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub date_from: Date,
    pub date_to: Date,
}

impl Manifest {
    pub fn new(date_from: Date, date_to: Date) -> Result<Self> {
        if date_from > date_to {
            return Err(Error::Manifest(format!(
                "date_from {date_from} is after date_to {date_to}"
            )));
        }
        Ok(Manifest { date_from, date_to })
    }

    pub fn parse<R: Read>(source: R) -> Result<Self> {
        let m: Manifest =
            serde_json::from_reader(source).map_err(|e| Error::Manifest(e.to_string()))?;
        Manifest::new(m.date_from, m.date_to)
    }

    pub fn contains(&self, date: Date) -> bool {
        self.date_from <= date && date <= self.date_to
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    FieldCount,
    Encoding,
    EmptyId,
    DuplicateId,
    SelfLoop,
    BadNumber,
    BadDate,
    BadEnum,
    NonPositiveAmount,
    NegativeAmount,
    RatioOutOfRange,
    DateOutOfRange,
}

/// One quarantined input row. Serialized as a line of `rejections.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub file: String,
    pub line: u64,
    pub reason: RejectReason,
    pub detail: String,
}

/// Records parsed from one table together with its quarantined rows.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejections: Vec<Rejection>,
    pub warnings: Vec<String>,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed {
            records: Vec::new(),
            rejections: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

impl<T> Parsed<T> {
    /// Number of data rows seen.
    pub fn rows(&self) -> usize {
        self.records.len() + self.rejections.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub rejections: Vec<Rejection>,
    pub warnings: Vec<String>,
}

impl IngestReport {
    fn absorb<T>(&mut self, parsed: Parsed<T>) -> Vec<T> {
        self.rejections.extend(parsed.rejections);
        self.warnings.extend(parsed.warnings);
        parsed.records
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for r in &self.rejections {
            out.push_str(&serde_json::to_string(r).expect("rejection serializes"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

struct Row {
    line: u64,
    fields: Vec<String>,
}

struct RowError(RejectReason, String);

type RowResult<T> = std::result::Result<T, RowError>;

impl Row {
    fn get(&self, idx: usize) -> &str {
        self.fields[idx].as_str()
    }

    fn id(&self, idx: usize, name: &str) -> RowResult<String> {
        let v = self.get(idx).trim();
        if v.is_empty() {
            Err(RowError(RejectReason::EmptyId, format!("{name} is empty")))
        } else {
            Ok(v.to_string())
        }
    }

    fn date(&self, idx: usize, name: &str) -> RowResult<Date> {
        let v = self.get(idx).trim();
        Date::parse_from_str(v, "%Y-%m-%d")
            .map_err(|_| RowError(RejectReason::BadDate, format!("{name} `{v}` is not YYYY-MM-DD")))
    }

    fn amount(&self, idx: usize, name: &str) -> RowResult<Amount> {
        let v = self.get(idx).trim();
        v.parse::<Amount>()
            .map_err(|_| RowError(RejectReason::BadNumber, format!("{name} `{v}` is not a decimal")))
    }
}

/// Reads a comma-delimited table, validating the header against `columns`
/// and returning each row reordered into `columns` order.
fn read_table<R: Read>(
    file: &'static str,
    columns: &[&str],
    source: R,
    rejections: &mut Vec<Rejection>,
) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Format {
            file: file.to_string(),
            detail: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let mut order = Vec::with_capacity(columns.len());
    for col in columns {
        match names.iter().position(|h| h == col) {
            Some(i) => order.push(i),
            None => {
                return Err(Error::Format {
                    file: file.to_string(),
                    detail: format!("missing column `{col}`"),
                })
            }
        }
    }
    if names.len() != columns.len() {
        return Err(Error::Format {
            file: file.to_string(),
            detail: format!(
                "expected columns {:?}, found {:?}",
                columns,
                names.iter().collect::<Vec<_>>()
            ),
        });
    }

    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                if record.len() != columns.len() {
                    rejections.push(Rejection {
                        file: file.to_string(),
                        line,
                        reason: RejectReason::FieldCount,
                        detail: format!("expected {} fields, found {}", columns.len(), record.len()),
                    });
                    continue;
                }
                let fields = order.iter().map(|&i| record[i].to_string()).collect();
                rows.push(Row { line, fields });
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                match e.kind() {
                    csv::ErrorKind::Utf8 { .. } => rejections.push(Rejection {
                        file: file.to_string(),
                        line,
                        reason: RejectReason::Encoding,
                        detail: "row is not valid UTF-8".to_string(),
                    }),
                    _ => {
                        return Err(Error::Csv {
                            file: file.to_string(),
                            source: e,
                        })
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn parse_rows<R: Read, T>(
    file: &'static str,
    columns: &[&str],
    source: R,
    mut convert: impl FnMut(&Row) -> RowResult<T>,
) -> Result<Parsed<T>> {
    let mut parsed = Parsed::default();
    for row in read_table(file, columns, source, &mut parsed.rejections)? {
        match convert(&row) {
            Ok(rec) => parsed.records.push(rec),
            Err(RowError(reason, detail)) => parsed.rejections.push(Rejection {
                file: file.to_string(),
                line: row.line,
                reason,
                detail,
            }),
        }
    }
    parsed.rejections.sort_by_key(|r| r.line);
    Ok(parsed)
}

fn first_wins(seen: &mut HashSet<String>, id: &str) -> RowResult<()> {
    if seen.insert(id.to_string()) {
        Ok(())
    } else {
        Err(RowError(
            RejectReason::DuplicateId,
            format!("id `{id}` already defined on an earlier row"),
        ))
    }
}

pub fn parse_taxpayers<R: Read>(source: R) -> Result<Parsed<TaxpayerProfile>> {
    let mut seen = HashSet::new();
    parse_rows(TAXPAYERS_FILE, TAXPAYER_COLUMNS, source, |row| {
        let id = row.id(0, "id")?;
        first_wins(&mut seen, &id)?;
        Ok(TaxpayerProfile {
            id,
            industry: row.get(1).trim().to_string(),
            ownership_type: row.get(2).trim().to_string(),
            region: row.get(3).trim().to_string(),
            merchandise: row.get(4).trim().to_string(),
        })
    })
}

pub fn parse_investors<R: Read>(source: R) -> Result<Parsed<InvestorProfile>> {
    let mut seen = HashSet::new();
    parse_rows(INVESTORS_FILE, INVESTOR_COLUMNS, source, |row| {
        let id = row.id(0, "id")?;
        let kind = match row.get(1).trim().to_ascii_lowercase().as_str() {
            "person" => EntityKind::Person,
            "organization" => EntityKind::Organization,
            other => {
                return Err(RowError(
                    RejectReason::BadEnum,
                    format!("entity_kind `{other}` is not person|organization"),
                ))
            }
        };
        first_wins(&mut seen, &id)?;
        Ok(InvestorProfile {
            id,
            entity_kind: kind,
        })
    })
}

pub fn parse_investments<R: Read>(source: R) -> Result<Parsed<InvestmentEdge>> {
    let mut parsed = parse_rows(INVESTMENTS_FILE, INVESTMENT_COLUMNS, source, |row| {
        let investor_id = row.id(0, "investor_id")?;
        let investee_id = row.id(1, "investee_id")?;
        if investor_id == investee_id {
            return Err(RowError(
                RejectReason::SelfLoop,
                format!("`{investor_id}` invests in itself"),
            ));
        }
        let amount = row.amount(2, "amount")?;
        if amount.is_negative() {
            return Err(RowError(RejectReason::NegativeAmount, format!("amount {amount} < 0")));
        }
        let raw = row.get(3).trim();
        let share_ratio: f64 = raw.parse().map_err(|_| {
            RowError(RejectReason::BadNumber, format!("share_ratio `{raw}` is not a number"))
        })?;
        if !(share_ratio > 0.0 && share_ratio <= 1.0) {
            return Err(RowError(
                RejectReason::RatioOutOfRange,
                format!("share_ratio {raw} outside (0, 1]"),
            ));
        }
        Ok(InvestmentEdge {
            investor_id,
            investee_id,
            amount,
            share_ratio,
        })
    })?;

    let mut inbound: BTreeMap<&str, f64> = BTreeMap::new();
    for e in &parsed.records {
        *inbound.entry(e.investee_id.as_str()).or_default() += e.share_ratio;
    }
    let warnings: Vec<String> = inbound
        .into_iter()
        .filter(|(_, total)| *total > 1.0 + 1e-9)
        .map(|(id, total)| format!("{INVESTMENTS_FILE}: inbound share ratios of `{id}` sum to {total:.4} > 1"))
        .collect();
    parsed.warnings.extend(warnings);
    Ok(parsed)
}

/// Parses invoices, rejecting rows dated outside the manifest's range.
pub fn parse_invoices<R: Read>(source: R, manifest: &Manifest) -> Result<Parsed<Invoice>> {
    let mut seen = HashSet::new();
    parse_rows(INVOICES_FILE, INVOICE_COLUMNS, source, |row| {
        let invoice_id = row.id(0, "invoice_id")?;
        let date = row.date(1, "date")?;
        let seller_id = row.id(2, "seller_id")?;
        let buyer_id = row.id(3, "buyer_id")?;
        if seller_id == buyer_id {
            return Err(RowError(
                RejectReason::SelfLoop,
                format!("seller and buyer are both `{seller_id}`"),
            ));
        }
        let amount = row.amount(4, "amount")?;
        if !amount.is_positive() {
            return Err(RowError(
                RejectReason::NonPositiveAmount,
                format!("amount {amount} must be > 0"),
            ));
        }
        let vat_amount = row.amount(5, "vat_amount")?;
        if vat_amount.is_negative() {
            return Err(RowError(
                RejectReason::NegativeAmount,
                format!("vat_amount {vat_amount} < 0"),
            ));
        }
        if !manifest.contains(date) {
            return Err(RowError(
                RejectReason::DateOutOfRange,
                format!(
                    "date {date} outside {}..={}",
                    manifest.date_from, manifest.date_to
                ),
            ));
        }
        first_wins(&mut seen, &invoice_id)?;
        Ok(Invoice {
            invoice_id,
            date,
            seller_id,
            buyer_id,
            amount,
            vat_amount,
        })
    })
}

pub fn parse_audits<R: Read>(source: R) -> Result<Parsed<AuditRecord>> {
    parse_rows(AUDITS_FILE, AUDIT_COLUMNS, source, |row| {
        let taxpayer_id = row.id(0, "taxpayer_id")?;
        let audit_date = row.date(1, "audit_date")?;
        let tax_payable = row.amount(5, "tax_payable")?;
        if tax_payable.is_negative() {
            return Err(RowError(
                RejectReason::NegativeAmount,
                format!("tax_payable {tax_payable} < 0"),
            ));
        }
        Ok(AuditRecord {
            taxpayer_id,
            audit_date,
            violation_type: row.get(2).trim().to_string(),
            description: row.get(3).to_string(),
            action_taken: row.get(4).to_string(),
            tax_payable,
        })
    })
}

/// Locations of the five tables plus the manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub taxpayers: PathBuf,
    pub investors: PathBuf,
    pub investments: PathBuf,
    pub invoices: PathBuf,
    pub audits: PathBuf,
    pub manifest: PathBuf,
}

impl DatasetPaths {
    /// Standard file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            taxpayers: dir.join(TAXPAYERS_FILE),
            investors: dir.join(INVESTORS_FILE),
            investments: dir.join(INVESTMENTS_FILE),
            invoices: dir.join(INVOICES_FILE),
            audits: dir.join(AUDITS_FILE),
            manifest: dir.join(MANIFEST_FILE),
        }
    }

    pub fn all(&self) -> [&Path; 6] {
        [
            &self.taxpayers,
            &self.investors,
            &self.investments,
            &self.invoices,
            &self.audits,
            &self.manifest,
        ]
    }
}

/// All validated input records of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub taxpayers: Vec<TaxpayerProfile>,
    pub investors: Vec<InvestorProfile>,
    pub investments: Vec<InvestmentEdge>,
    pub invoices: Vec<Invoice>,
    pub audits: Vec<AuditRecord>,
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Dataset {
    pub fn load(paths: &DatasetPaths) -> Result<(Dataset, IngestReport)> {
        for p in paths.all() {
            if !p.exists() {
                return Err(Error::Io {
                    path: p.to_path_buf(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                });
            }
        }
        let manifest = Manifest::parse(open(&paths.manifest)?)?;
        let mut report = IngestReport::default();
        let taxpayers = report.absorb(parse_taxpayers(open(&paths.taxpayers)?)?);
        let investors = report.absorb(parse_investors(open(&paths.investors)?)?);
        let investments = report.absorb(parse_investments(open(&paths.investments)?)?);
        let invoices = report.absorb(parse_invoices(open(&paths.invoices)?, &manifest)?);
        let audits = report.absorb(parse_audits(open(&paths.audits)?)?);
        Ok((
            Dataset {
                manifest,
                taxpayers,
                investors,
                investments,
                invoices,
                audits,
            },
            report,
        ))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<(Dataset, IngestReport)> {
        Dataset::load(&DatasetPaths::in_dir(dir))
    }

    /// Renders each table in the on-disk format, keyed by file name.
    pub fn render(&self) -> Vec<(&'static str, String)> {
        fn table(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
            let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
            w.write_record(header).expect("in-memory write");
            for r in rows {
                w.write_record(&r).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
        }
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        vec![
            (
                TAXPAYERS_FILE,
                table(
                    TAXPAYER_COLUMNS,
                    self.taxpayers.iter().map(|t| {
                        vec![
                            t.id.clone(),
                            t.industry.clone(),
                            t.ownership_type.clone(),
                            t.region.clone(),
                            t.merchandise.clone(),
                        ]
                    }),
                ),
            ),
            (
                INVESTORS_FILE,
                table(
                    INVESTOR_COLUMNS,
                    self.investors
                        .iter()
                        .map(|i| vec![i.id.clone(), i.entity_kind.as_str().to_string()]),
                ),
            ),
            (
                INVESTMENTS_FILE,
                table(
                    INVESTMENT_COLUMNS,
                    self.investments.iter().map(|e| {
                        vec![
                            e.investor_id.clone(),
                            e.investee_id.clone(),
                            e.amount.to_string(),
                            e.share_ratio.to_string(),
                        ]
                    }),
                ),
            ),
            (
                INVOICES_FILE,
                table(
                    INVOICE_COLUMNS,
                    self.invoices.iter().map(|v| {
                        vec![
                            v.invoice_id.clone(),
                            v.date.format("%Y-%m-%d").to_string(),
                            v.seller_id.clone(),
                            v.buyer_id.clone(),
                            v.amount.to_string(),
                            v.vat_amount.to_string(),
                        ]
                    }),
                ),
            ),
            (
                AUDITS_FILE,
                table(
                    AUDIT_COLUMNS,
                    self.audits.iter().map(|a| {
                        vec![
                            a.taxpayer_id.clone(),
                            a.audit_date.format("%Y-%m-%d").to_string(),
                            a.violation_type.clone(),
                            a.description.clone(),
                            a.action_taken.clone(),
                            a.tax_payable.to_string(),
                        ]
                    }),
                ),
            ),
            (MANIFEST_FILE, manifest + "\n"),
        ]
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for (name, body) in self.render() {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|source| Error::Io { path, source })?;
        }
        Ok(())
    }

    /// Content hash of the canonical rendering of every table.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (name, body) in self.render() {
            h.update(name.as_bytes());
            h.update([0u8]);
            h.update((body.len() as u64).to_le_bytes());
            h.update(body.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> Manifest {
        Manifest::new(
            Date::from_ymd_opt(2014, 1, 1).unwrap(),
            Date::from_ymd_opt(2014, 12, 31).unwrap(),
        )
        .unwrap()
    }

    const TP_HEADER: &str = "id,industry,ownership_type,region,merchandise\n";

    #[test]
    fn taxpayers_valid_rows() {
        let src = format!("{TP_HEADER}a,C1,private,R1,steel\nb,C2,state,R1,coal\nc,C1,private,R2,\n");
        let p = parse_taxpayers(src.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 3);
        assert!(p.rejections.is_empty());
        assert_eq!(p.records[2].merchandise, "");
    }

    #[test]
    fn taxpayer_empty_id_rejected() {
        let src = format!("{TP_HEADER},C1,private,R1,steel\n");
        let p = parse_taxpayers(src.as_bytes()).unwrap();
        assert!(p.records.is_empty());
        assert_eq!(p.rejections.len(), 1);
        assert_eq!(p.rejections[0].reason, RejectReason::EmptyId);
        assert_eq!(p.rejections[0].line, 2);
    }

    #[test]
    fn duplicate_id_first_wins() {
        let rows = [
            "a,C1,private,R1,first",
            "b,C1,private,R1,x",
            "c,C1,private,R1,x",
            "d,C1,private,R1,x",
            "a,C9,state,R9,second",
        ];
        let src = format!("{TP_HEADER}{}\n", rows.join("\n"));
        let p = parse_taxpayers(src.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 4);
        assert_eq!(p.records[0].merchandise, "first");
        assert_eq!(p.rejections.len(), 1);
        assert_eq!(p.rejections[0].reason, RejectReason::DuplicateId);
        assert_eq!(p.rejections[0].line, 6);

        // Swapping the two duplicate rows flips which one survives.
        let mut swapped = rows;
        swapped.swap(0, 4);
        let src = format!("{TP_HEADER}{}\n", swapped.join("\n"));
        let p = parse_taxpayers(src.as_bytes()).unwrap();
        let a = p.records.iter().find(|t| t.id == "a").unwrap();
        assert_eq!(a.merchandise, "second");
        assert_eq!(p.rejections[0].line, 6);
    }

    #[test]
    fn malformed_header_is_fatal() {
        let err = parse_taxpayers("id,industry\na,b\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        let err = parse_taxpayers("identifier,industry,ownership_type,region,merchandise\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn header_columns_may_be_reordered() {
        let src = "merchandise,region,ownership_type,industry,id\nsteel,R1,private,C1,a\n";
        let p = parse_taxpayers(src.as_bytes()).unwrap();
        assert_eq!(p.records[0].id, "a");
        assert_eq!(p.records[0].merchandise, "steel");
    }

    #[test]
    fn short_row_is_rejected_not_fatal() {
        let src = format!("{TP_HEADER}a,C1\nb,C1,private,R1,x\n");
        let p = parse_taxpayers(src.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.rejections[0].reason, RejectReason::FieldCount);
        assert_eq!(p.rows(), 2);
    }

    #[test]
    fn investors_parse_kind() {
        let src = "id,entity_kind\np1,person\no1,Organization\nx,robot\n";
        let p = parse_investors(src.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[1].entity_kind, EntityKind::Organization);
        assert_eq!(p.rejections[0].reason, RejectReason::BadEnum);
    }

    #[test]
    fn investment_ratio_bounds() {
        let src = "investor_id,investee_id,amount,share_ratio\n\
                   i,a,100.00,1.0\n\
                   i,b,100.00,0\n\
                   i,c,100.00,1.2\n\
                   i,i,100.00,0.5\n\
                   j,a,-1.00,0.5\n";
        let p = parse_investments(src.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].share_ratio, 1.0);
        let reasons: Vec<_> = p.rejections.iter().map(|r| r.reason).collect();
        assert_eq!(
            reasons,
            vec![
                RejectReason::RatioOutOfRange,
                RejectReason::RatioOutOfRange,
                RejectReason::SelfLoop,
                RejectReason::NegativeAmount
            ]
        );
    }

    #[test]
    fn inbound_ratio_overflow_warns_but_accepts() {
        let src = "investor_id,investee_id,amount,share_ratio\ni,a,1.00,0.7\nj,a,1.00,0.6\n";
        let p = parse_investments(src.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn invoice_rules() {
        let src = "invoice_id,date,seller_id,buyer_id,amount,vat_amount\n\
                   v1,2014-03-31,a,b,100.00,17.00\n\
                   v2,2014-03-31,a,b,0.00,0.00\n\
                   v3,2014-03-31,a,a,10.00,0.00\n\
                   v4,2015-01-01,a,b,10.00,0.00\n\
                   v5,2014-13-01,a,b,10.00,0.00\n\
                   v1,2014-04-01,a,b,5.00,0.00\n\
                   v6,2014-04-01,a,b,5.00,-1.00\n";
        let p = parse_invoices(src.as_bytes(), &manifest()).unwrap();
        assert_eq!(p.records.len(), 1);
        let reasons: Vec<_> = p.rejections.iter().map(|r| r.reason).collect();
        assert_eq!(
            reasons,
            vec![
                RejectReason::NonPositiveAmount,
                RejectReason::SelfLoop,
                RejectReason::DateOutOfRange,
                RejectReason::BadDate,
                RejectReason::DuplicateId,
                RejectReason::NegativeAmount,
            ]
        );
        assert_eq!(p.rows(), 7);
    }

    #[test]
    fn audits_violation_flag() {
        let src = "taxpayer_id,audit_date,violation_type,description,action_taken,tax_payable\n\
                   a,2013-05-01,underreporting,\"sold, unreported\",fine,1200.00\n\
                   b,2013-05-01,none,clean,none,0\n\
                   c,2013-05-01,x,y,z,-3\n";
        let p = parse_audits(src.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 2);
        assert!(p.records[0].is_violation());
        assert!(!p.records[1].is_violation());
        assert_eq!(p.records[0].description, "sold, unreported");
        assert_eq!(p.rejections[0].reason, RejectReason::NegativeAmount);
    }

    #[test]
    fn manifest_parse() {
        let m = Manifest::parse(r#"{"date_from":"2014-01-01","date_to":"2014-12-31"}"#.as_bytes())
            .unwrap();
        assert_eq!(m, manifest());
        assert!(Manifest::parse(r#"{"date_from":"2015-01-01","date_to":"2014-12-31"}"#.as_bytes())
            .is_err());
    }
}
