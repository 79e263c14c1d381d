//! Privacy masking: keyed pseudonyms for identifiers and per-invoice numeric
//! variance for amounts. Dates are left untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::Dataset;
use crate::{Amount, Error, Result};

const ENTITY_DOMAIN: &[u8] = b"entity";
const INVOICE_DOMAIN: &[u8] = b"invoice";
const FACTOR_DOMAIN: &[u8] = b"factor";

/// Deterministic masking under a seed.
#[derive(Debug, Clone, Copy)]
pub struct Masker {
    seed: u64,
    variance_pct: f64,
}

impl Masker {
    pub fn new(seed: u64, variance_pct: f64) -> Result<Self> {
        if !(variance_pct > 0.0 && variance_pct <= 0.5) {
            return Err(Error::invalid(
                "variance_pct",
                format!("{variance_pct} outside (0, 0.5]"),
            ));
        }
        Ok(Masker { seed, variance_pct })
    }

    fn keyed(&self, domain: &[u8], value: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"rptte-mask\0");
        h.update(self.seed.to_le_bytes());
        h.update(domain);
        h.update([0u8]);
        h.update(value.as_bytes());
        h.finalize().into()
    }

    /// Pseudonym for an entity id (taxpayer or investor; they share one namespace).
    pub fn entity(&self, id: &str) -> String {
        format!("E{}", hex::encode(&self.keyed(ENTITY_DOMAIN, id)[..12]))
    }

    pub fn invoice(&self, id: &str) -> String {
        format!("V{}", hex::encode(&self.keyed(INVOICE_DOMAIN, id)[..12]))
    }

    /// Multiplicative factor in `[1 - v, 1 + v]` for one invoice.
    pub fn factor(&self, invoice_id: &str) -> f64 {
        let mut rng = ChaCha8Rng::from_seed(self.keyed(FACTOR_DOMAIN, invoice_id));
        rng.random_range(1.0 - self.variance_pct..=1.0 + self.variance_pct)
    }

    /// Applies `factor` to `amount`, rounding to cents while staying inside
    /// the variance band and keeping zero/non-zero status.
    pub fn vary(&self, amount: Amount, factor: f64) -> Amount {
        let c = amount.cents();
        if c == 0 {
            return amount;
        }
        let (lo_f, hi_f) = (1.0 - self.variance_pct, 1.0 + self.variance_pct);
        let (a, b) = (c as f64 * lo_f, c as f64 * hi_f);
        let eps = 1e-9 * (c as f64).abs();
        let lo = (a.min(b) - eps).ceil() as i64;
        let hi = (a.max(b) + eps).floor() as i64;
        let mut v = ((c as f64) * factor).round() as i64;
        v = v.clamp(lo, hi);
        if v == 0 {
            v = c.signum();
        }
        Amount::from_cents(v)
    }
}

/// Masks a dataset: ids become keyed pseudonyms, invoice amounts (and VAT,
/// with the same factor) are scaled by a per-invoice factor.
pub fn mask_dataset(dataset: &Dataset, seed: u64, variance_pct: f64) -> Result<Dataset> {
    let m = Masker::new(seed, variance_pct)?;
    let mut out = dataset.clone();
    for t in &mut out.taxpayers {
        t.id = m.entity(&t.id);
    }
    for i in &mut out.investors {
        i.id = m.entity(&i.id);
    }
    for e in &mut out.investments {
        e.investor_id = m.entity(&e.investor_id);
        e.investee_id = m.entity(&e.investee_id);
    }
    for v in &mut out.invoices {
        let f = m.factor(&v.invoice_id);
        v.amount = m.vary(v.amount, f);
        v.vat_amount = m.vary(v.vat_amount, f);
        v.invoice_id = m.invoice(&v.invoice_id);
        v.seller_id = m.entity(&v.seller_id);
        v.buyer_id = m.entity(&v.buyer_id);
    }
    for a in &mut out.audits {
        a.taxpayer_id = m.entity(&a.taxpayer_id);
    }
    Ok(out)
}
