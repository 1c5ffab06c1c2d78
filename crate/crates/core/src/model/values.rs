//! Scalar value types whose precision can be reduced by anonymisation.
//!
//! A [`Measure`] is either an exact number or a half-open bin, and an
//! [`Instant`] is either a UTC second or a calendar period. Both serialize
//! exact values as JSON numbers and generalised values as labels, so a bundle
//! at any pipeline stage uses the same record schema.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, Weekday};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

/// A numeric field value, exact or generalised to `[lo,hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    Exact(f64),
    Bin { lo: f64, hi: f64 },
}

impl Measure {
    /// The value used when a numeric is needed: the number itself or the bin midpoint.
    pub fn representative(&self) -> f64 {
        match *self {
            Measure::Exact(v) => v,
            Measure::Bin { lo, hi } => (lo + hi) / 2.0,
        }
    }

    pub fn exact(&self) -> Option<f64> {
        match *self {
            Measure::Exact(v) => Some(v),
            Measure::Bin { .. } => None,
        }
    }

    /// Lower bound of the possible underlying value.
    pub fn lower(&self) -> f64 {
        match *self {
            Measure::Exact(v) => v,
            Measure::Bin { lo, .. } => lo,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Measure::Exact(v) => format_number(v),
            Measure::Bin { lo, hi } => format!("[{},{})", format_number(lo), format_number(hi)),
        }
    }
}

fn format_number(v: f64) -> String {
    // f64 Display already drops a trailing ".0"
    format!("{v}")
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed bin label {0:?}")]
pub struct BinLabelError(pub String);

impl FromStr for Measure {
    type Err = BinLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || BinLabelError(s.to_string());
        let inner = s
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(err)?;
        let (lo, hi) = inner.split_once(',').ok_or_else(err)?;
        let lo: f64 = lo.trim().parse().map_err(|_| err())?;
        let hi: f64 = hi.trim().parse().map_err(|_| err())?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(err());
        }
        Ok(Measure::Bin { lo, hi })
    }
}

impl Serialize for Measure {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match *self {
            Measure::Exact(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => {
                serializer.serialize_i64(v as i64)
            }
            Measure::Exact(v) => serializer.serialize_f64(v),
            Measure::Bin { .. } => serializer.serialize_str(&self.label()),
        }
    }
}

impl<'de> Deserialize<'de> for Measure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MeasureVisitor;

        impl Visitor<'_> for MeasureVisitor {
            type Value = Measure;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a \"[lo,hi)\" bin label")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Measure, E> {
                Ok(Measure::Exact(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Measure, E> {
                Ok(Measure::Exact(v as f64))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Measure, E> {
                Ok(Measure::Exact(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Measure, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(MeasureVisitor)
    }
}

/// Calendar granularity used when generalising timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Day,
    Week,
}

/// A point in time: exact UTC seconds, or the UTC day / ISO week containing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instant {
    Seconds(i64),
    Day(NaiveDate),
    Week { year: i32, week: u32 },
}

impl Instant {
    /// UTC seconds of the start of the period this instant denotes.
    pub fn start_seconds(&self) -> i64 {
        match *self {
            Instant::Seconds(s) => s,
            Instant::Day(d) => day_start(d),
            Instant::Week { year, week } => day_start(week_monday(year, week)),
        }
    }

    /// The UTC date of the instant; for week values, the Monday of that week.
    pub fn date(&self) -> NaiveDate {
        match *self {
            Instant::Seconds(s) => seconds_to_date(s),
            Instant::Day(d) => d,
            Instant::Week { year, week } => week_monday(year, week),
        }
    }

    /// Coarsen to `granularity`. Already-coarser values are returned unchanged.
    pub fn generalize(&self, granularity: Granularity) -> Instant {
        match (granularity, *self) {
            (_, w @ Instant::Week { .. }) => w,
            (Granularity::Day, Instant::Seconds(s)) => Instant::Day(seconds_to_date(s)),
            (Granularity::Day, d @ Instant::Day(_)) => d,
            (Granularity::Week, other) => {
                let iso = other.date().iso_week();
                Instant::Week { year: iso.year(), week: iso.week() }
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Instant::Seconds(s) => s.to_string(),
            Instant::Day(d) => d.format("%Y-%m-%d").to_string(),
            Instant::Week { year, week } => format!("{year}-W{week:02}"),
        }
    }
}

impl PartialOrd for Instant {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Instant {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.start_seconds()
            .cmp(&other.start_seconds())
            .then_with(|| self.label().cmp(&other.label()))
    }
}

fn day_start(d: NaiveDate) -> i64 {
    d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp()
}

pub fn seconds_to_date(s: i64) -> NaiveDate {
    DateTime::from_timestamp(s, 0)
        .map(|dt| dt.date_naive())
        .unwrap_or(NaiveDate::MIN)
}

fn week_monday(year: i32, week: u32) -> NaiveDate {
    NaiveDate::from_isoywd_opt(year, week, Weekday::Mon).unwrap_or(NaiveDate::MIN)
}

/// Label of the period containing `date` at `granularity`.
pub fn period_label(date: NaiveDate, granularity: Granularity) -> String {
    match granularity {
        Granularity::Day => Instant::Day(date).label(),
        Granularity::Week => Instant::Day(date).generalize(Granularity::Week).label(),
    }
}

/// First day of the period after the one containing `date`.
pub fn next_period(date: NaiveDate, granularity: Granularity) -> NaiveDate {
    match granularity {
        Granularity::Day => date + Duration::days(1),
        Granularity::Week => {
            let monday = date - Duration::days(date.weekday().num_days_from_monday() as i64);
            monday + Duration::days(7)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed time label {0:?}")]
pub struct TimeLabelError(pub String);

impl FromStr for Instant {
    type Err = TimeLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TimeLabelError(s.to_string());
        if let Some((year, week)) = s.split_once("-W") {
            let year: i32 = year.parse().map_err(|_| err())?;
            let week: u32 = week.parse().map_err(|_| err())?;
            NaiveDate::from_isoywd_opt(year, week, Weekday::Mon).ok_or_else(err)?;
            return Ok(Instant::Week { year, week });
        }
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Ok(Instant::Day(d));
        }
        s.parse::<i64>().map(Instant::Seconds).map_err(|_| err())
    }
}

impl Serialize for Instant {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match *self {
            Instant::Seconds(s) => serializer.serialize_i64(s),
            _ => serializer.serialize_str(&self.label()),
        }
    }
}

impl<'de> Deserialize<'de> for Instant {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct InstantVisitor;

        impl Visitor<'_> for InstantVisitor {
            type Value = Instant;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("UTC seconds or a day/week label")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Instant, E> {
                Ok(Instant::Seconds(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Instant, E> {
                i64::try_from(v).map(Instant::Seconds).map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Instant, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(InstantVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_labels_round_trip() {
        let m: Measure = "[60,70)".parse().unwrap();
        assert_eq!(m, Measure::Bin { lo: 60.0, hi: 70.0 });
        assert_eq!(m.label(), "[60,70)");
        assert_eq!(m.representative(), 65.0);
        assert!("[70,60)".parse::<Measure>().is_err());
        assert!("60".parse::<Measure>().is_err());
    }

    #[test]
    fn integral_measures_serialize_as_integers() {
        assert_eq!(serde_json::to_string(&Measure::Exact(67.0)).unwrap(), "67");
        assert_eq!(serde_json::to_string(&Measure::Exact(67.5)).unwrap(), "67.5");
        let back: Measure = serde_json::from_str("67").unwrap();
        assert_eq!(back, Measure::Exact(67.0));
    }

    #[test]
    fn day_truncation() {
        // 2023-10-05T14:33:21Z
        let t = Instant::Seconds(1_696_516_401);
        assert_eq!(t.generalize(Granularity::Day).label(), "2023-10-05");
        assert_eq!(t.generalize(Granularity::Week).label(), "2023-W40");
    }

    #[test]
    fn instant_labels_parse() {
        for label in ["2023-10-05", "2023-W40", "1696516401"] {
            let i: Instant = label.parse().unwrap();
            assert_eq!(i.label(), label);
        }
    }

    #[test]
    fn week_period_steps_to_next_monday() {
        let thu = NaiveDate::from_ymd_opt(2023, 10, 5).unwrap();
        assert_eq!(next_period(thu, Granularity::Week), NaiveDate::from_ymd_opt(2023, 10, 9).unwrap());
    }
}
