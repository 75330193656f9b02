use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;

/// A UTC calendar day, stored as days since 1970-01-01.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Day(pub i64);

impl Day {
    pub fn from_timestamp(secs: i64) -> Day {
        Day(secs.div_euclid(SECONDS_PER_DAY))
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Day> {
        NaiveDate::from_ymd_opt(year, month, day).map(Day::from_naive)
    }

    fn from_naive(d: NaiveDate) -> Day {
        Day(i64::from(d.num_days_from_ce()) - i64::from(epoch().num_days_from_ce()))
    }

    pub fn to_naive(self) -> NaiveDate {
        epoch() + chrono::Duration::days(self.0)
    }

    pub fn next(self) -> Day {
        Day(self.0 + 1)
    }

    /// 0 = Monday .. 6 = Sunday.
    pub fn weekday(self) -> u32 {
        self.to_naive().weekday().num_days_from_monday()
    }

    /// Inclusive range of days.
    pub fn range_inclusive(first: Day, last: Day) -> impl Iterator<Item = Day> {
        (first.0..=last.0).map(Day)
    }
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_naive().format("%Y-%m-%d"))
    }
}

impl FromStr for Day {
    type Err = Error;

    fn from_str(s: &str) -> Result<Day> {
        let trimmed = s.trim();
        // Accept full timestamps by keeping the date part only.
        let date_part = trimmed.get(..10).unwrap_or(trimmed);
        NaiveDate::parse_from_str(date_part, "%Y-%m-%d")
            .map(Day::from_naive)
            .map_err(|e| Error::InvalidArgument(format!("bad date `{s}`: {e}")))
    }
}

impl Serialize for Day {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Day {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Day, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
