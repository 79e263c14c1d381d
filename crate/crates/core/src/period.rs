//! Inclusive calendar-day ranges.

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::{Date, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Period {
    pub start: Date,
    pub end: Date,
}

impl Period {
    pub fn new(start: Date, end: Date) -> Result<Self> {
        if start > end {
            return Err(Error::invalid(
                "period",
                format!("start {start} is after end {end}"),
            ));
        }
        Ok(Period { start, end })
    }

    /// Number of days, both ends included.
    pub fn days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn contains(&self, date: Date) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn index_of(&self, date: Date) -> Option<usize> {
        self.contains(date)
            .then(|| (date - self.start).num_days() as usize)
    }

    pub fn dates(&self) -> impl Iterator<Item = Date> {
        self.start.iter_days().take(self.days())
    }

    /// Calendar quarter containing `date`.
    pub fn quarter_of(date: Date) -> Period {
        let q0 = (date.month0() / 3) * 3 + 1;
        let start = Date::from_ymd_opt(date.year(), q0, 1).expect("valid quarter start");
        let end = if q0 == 10 {
            Date::from_ymd_opt(date.year(), 12, 31).expect("valid year end")
        } else {
            Date::from_ymd_opt(date.year(), q0 + 3, 1).expect("valid month") - chrono::Days::new(1)
        };
        Period { start, end }
    }

    /// Calendar year containing `date`.
    pub fn year_of(date: Date) -> Period {
        Period {
            start: Date::from_ymd_opt(date.year(), 1, 1).expect("valid year start"),
            end: Date::from_ymd_opt(date.year(), 12, 31).expect("valid year end"),
        }
    }
}

/// True when `date` is one of the last five days of its month.
pub fn is_month_end(date: Date) -> bool {
    let next_month = if date.month() == 12 {
        Date::from_ymd_opt(date.year() + 1, 1, 1)
    } else {
        Date::from_ymd_opt(date.year(), date.month() + 1, 1)
    }
    .expect("valid month start");
    let last = (next_month - chrono::Days::new(1)).day();
    date.day() + 5 > last
}
