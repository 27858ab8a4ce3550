//! Wall-clock handling. Every timestamp is carried as a UTC epoch plus the
//! UTC offset in force at that instant, so local fields are pure functions
//! of the pair and DST switches stay visible in the data.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

pub const MINUTES_PER_DAY: i64 = 1440;
const SECONDS_PER_DAY: i64 = 86_400;

pub const MIN_OFFSET_MINUTES: i32 = -720;
pub const MAX_OFFSET_MINUTES: i32 = 840;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocalStamp {
    pub utc_epoch_seconds: i64,
    pub local_offset_minutes: i32,
}

impl LocalStamp {
    pub fn new(utc_epoch_seconds: i64, local_offset_minutes: i32) -> Option<Self> {
        (MIN_OFFSET_MINUTES..=MAX_OFFSET_MINUTES)
            .contains(&local_offset_minutes)
            .then_some(LocalStamp {
                utc_epoch_seconds,
                local_offset_minutes,
            })
    }

    /// Builds a stamp from local wall-clock seconds since the epoch.
    pub fn from_local_seconds(local_seconds: i64, local_offset_minutes: i32) -> Self {
        LocalStamp {
            utc_epoch_seconds: local_seconds - i64::from(local_offset_minutes) * 60,
            local_offset_minutes,
        }
    }

    pub fn local_seconds(&self) -> i64 {
        self.utc_epoch_seconds + i64::from(self.local_offset_minutes) * 60
    }

    /// Local minutes since 1970-01-01 00:00 local.
    pub fn local_minute(&self) -> i64 {
        self.local_seconds().div_euclid(60)
    }

    pub fn local_date(&self) -> NaiveDate {
        date_from_day_index(self.local_seconds().div_euclid(SECONDS_PER_DAY))
    }

    pub fn minute_of_day(&self) -> u32 {
        (self.local_seconds().rem_euclid(SECONDS_PER_DAY) / 60) as u32
    }

    /// Local time of day in minutes, with sub-minute resolution.
    pub fn clock_minutes(&self) -> f64 {
        self.local_seconds().rem_euclid(SECONDS_PER_DAY) as f64 / 60.0
    }

    /// RFC 3339 rendering in local time, e.g. `2019-05-15T10:00:00+01:00`.
    pub fn to_iso(&self) -> String {
        let offset = chrono::FixedOffset::east_opt(self.local_offset_minutes * 60).expect("offset in range");
        chrono::DateTime::from_timestamp(self.utc_epoch_seconds, 0)
            .expect("timestamp in range")
            .with_timezone(&offset)
            .format("%Y-%m-%dT%H:%M:%S%:z")
            .to_string()
    }

    pub fn parse_iso(s: &str) -> Option<Self> {
        let dt = chrono::DateTime::parse_from_rfc3339(s.trim()).ok()?;
        LocalStamp::new(dt.timestamp(), dt.offset().local_minus_utc() / 60)
    }

    pub fn plus_seconds(&self, seconds: i64) -> Self {
        LocalStamp {
            utc_epoch_seconds: self.utc_epoch_seconds + seconds,
            local_offset_minutes: self.local_offset_minutes,
        }
    }
}

fn epoch_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

/// Days since 1970-01-01.
pub fn day_index(date: NaiveDate) -> i64 {
    (date - epoch_date()).num_days()
}

pub fn date_from_day_index(day: i64) -> NaiveDate {
    epoch_date() + chrono::Duration::days(day)
}

/// Local minute index of local midnight starting `date`.
pub fn midnight_minute(date: NaiveDate) -> i64 {
    day_index(date) * MINUTES_PER_DAY
}

pub fn month_of(date: NaiveDate) -> u32 {
    date.month()
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}
