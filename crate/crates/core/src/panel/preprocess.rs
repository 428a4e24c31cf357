//! Ridership preprocessing: raw per-ticket-type entry counts to a normalized
//! log-scale panel.
//!
//! Stages, in order:
//! 1. censored counts (`<5`) become a fixed value (3 by default);
//! 2. counts are summed over ticket types per (station, day);
//! 3. stations with too many missing days or too few mean entries are dropped;
//! 4. days below a fraction of a centered moving average (over observed days) are masked;
//! 5. each station is divided by its mean over a reference period, excluded days removed;
//! 6. values are mapped to `log10`.
//!
//! Days with no record stay missing.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DateRange, PanelDataset};
use crate::error::{Error, Result};

/// Entry count for one (station, day, ticket type).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryCount {
    Exact(u64),
    /// Published as "less than five" for anonymity.
    LessThanFive,
}

impl std::str::FromStr for EntryCount {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s == "<5" {
            return Ok(EntryCount::LessThanFive);
        }
        s.parse::<u64>()
            .map(EntryCount::Exact)
            .map_err(|_| format!("entries must be a nonnegative integer or `<5`, got `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRidershipRecord {
    pub station_id: String,
    pub date: NaiveDate,
    pub ticket_type: String,
    pub entries: EntryCount,
}

#[derive(Deserialize)]
struct CsvRow {
    station_id: String,
    date: String,
    ticket_type: String,
    entries: String,
}

/// Reads long-format CSV: `station_id,date,ticket_type,entries`.
pub fn read_ridership_csv<R: Read>(reader: R, label: &str) -> Result<Vec<RawRidershipRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(|e| Error::Parse {
            path: label.into(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        // header is line 1
        let line = out.len() as u64 + 2;
        let date = row.date.trim().parse::<NaiveDate>().map_err(|e| Error::Parse {
            path: label.into(),
            line,
            message: format!("bad date `{}`: {e}", row.date),
        })?;
        let entries = row.entries.parse::<EntryCount>().map_err(|message| Error::Parse {
            path: label.into(),
            line,
            message,
        })?;
        out.push(RawRidershipRecord {
            station_id: row.station_id,
            date,
            ticket_type: row.ticket_type,
            entries,
        });
    }
    Ok(out)
}

fn default_censored_value() -> f64 {
    3.0
}
fn default_max_missing_fraction() -> f64 {
    0.6
}
fn default_min_mean_entries() -> f64 {
    500.0
}
fn default_moving_average_days() -> usize {
    14
}
fn default_outlier_ratio() -> f64 {
    0.1
}

/// Thresholds and calendars for [`preprocess_ridership`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Value substituted for censored counts.
    #[serde(default = "default_censored_value")]
    pub censored_value: f64,
    /// Stations with a larger fraction of missing days are dropped.
    #[serde(default = "default_max_missing_fraction")]
    pub max_missing_fraction: f64,
    /// Stations whose mean daily entries (over observed days) fall below this are dropped.
    #[serde(default = "default_min_mean_entries")]
    pub min_mean_entries: f64,
    #[serde(default = "default_moving_average_days")]
    pub moving_average_days: usize,
    /// Days below `outlier_ratio` times their moving average are masked.
    #[serde(default = "default_outlier_ratio")]
    pub outlier_ratio: f64,
    /// Normalization reference period.
    pub reference: DateRange,
    /// Days left out of the reference mean (strikes and the like).
    #[serde(default)]
    pub exclusions: Vec<DateRange>,
}

impl PreprocessConfig {
    pub fn new(reference: DateRange) -> Self {
        PreprocessConfig {
            censored_value: default_censored_value(),
            max_missing_fraction: default_max_missing_fraction(),
            min_mean_entries: default_min_mean_entries(),
            moving_average_days: default_moving_average_days(),
            outlier_ratio: default_outlier_ratio(),
            reference,
            exclusions: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        self.reference.validate()?;
        self.exclusions.iter().try_for_each(DateRange::validate)?;
        if self.moving_average_days == 0 {
            return Err(Error::Config("moving_average_days must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedStation {
    pub station_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct PreprocessOutput {
    /// `D = 1`, `L = 0`; covariates are attached separately.
    pub dataset: PanelDataset,
    pub dropped: Vec<DroppedStation>,
    /// Masked fraction over the surviving stations after aggregation, after
    /// outlier removal, and at the end.
    pub stage_masked_fraction: [f64; 3],
}

/// Centered moving average over observed days, window offsets `[-w/2, w - w/2 - 1]`,
/// truncated at the series edges.
fn moving_average(series: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    let back = window / 2;
    let fwd = window - back - 1;
    let n = series.len();
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(back);
            let hi = (t + fwd).min(n - 1);
            let (s, c) = series[lo..=hi]
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            (c > 0).then(|| s / c as f64)
        })
        .collect()
}

/// Runs the full preprocessing pipeline.
pub fn preprocess_ridership(records: &[RawRidershipRecord], config: &PreprocessConfig) -> Result<PreprocessOutput> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::InvalidInput("no ridership records".into()));
    }
    let first = records.iter().map(|r| r.date).min().unwrap();
    let last = records.iter().map(|r| r.date).max().unwrap();
    let dates: Vec<NaiveDate> = first.iter_days().take_while(|d| *d <= last).collect();
    let n_t = dates.len();

    // (1) + (2)
    let mut totals: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for r in records {
        let v = match r.entries {
            EntryCount::Exact(n) => n as f64,
            EntryCount::LessThanFive => config.censored_value,
        };
        let t = (r.date - first).num_days() as usize;
        let series = totals.entry(r.station_id.as_str()).or_insert_with(|| vec![None; n_t]);
        *series[t].get_or_insert(0.0) += v;
    }

    let mut dropped = Vec::new();
    let mut kept: Vec<(String, Vec<Option<f64>>, Vec<Option<f64>>)> = Vec::new();
    for (station, series) in totals {
        // (3)
        let observed: Vec<f64> = series.iter().flatten().copied().collect();
        let missing = 1.0 - observed.len() as f64 / n_t as f64;
        if missing > config.max_missing_fraction {
            dropped.push(DroppedStation {
                station_id: station.into(),
                reason: format!("{:.1}% missing days", 100.0 * missing),
            });
            continue;
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        if mean < config.min_mean_entries {
            dropped.push(DroppedStation {
                station_id: station.into(),
                reason: format!("mean daily entries {mean:.1} below {}", config.min_mean_entries),
            });
            continue;
        }
        // (4)
        let avg = moving_average(&series, config.moving_average_days);
        let cleaned: Vec<Option<f64>> = series
            .iter()
            .zip(&avg)
            .map(|(v, a)| match (v, a) {
                (Some(v), Some(a)) if *v < config.outlier_ratio * a => None,
                (v, _) => *v,
            })
            .collect();
        // (5)
        let ref_values: Vec<f64> = dates
            .iter()
            .zip(&cleaned)
            .filter(|(d, _)| config.reference.contains(**d) && !config.exclusions.iter().any(|r| r.contains(**d)))
            .filter_map(|(_, v)| *v)
            .collect();
        if ref_values.is_empty() {
            log::warn!("station {station} has no observed day in the reference period; dropped");
            dropped.push(DroppedStation {
                station_id: station.into(),
                reason: "no observed day in the reference period".into(),
            });
            continue;
        }
        let ref_mean = ref_values.iter().sum::<f64>() / ref_values.len() as f64;
        // (6)
        let normalized = cleaned.iter().map(|v| v.map(|v| (v / ref_mean).log10())).collect();
        kept.push((station.to_string(), series, normalized));
    }

    if kept.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let cells = (kept.len() * n_t) as f64;
    let missing_after = |f: &dyn Fn(&(String, Vec<Option<f64>>, Vec<Option<f64>>)) -> usize| {
        kept.iter().map(f).sum::<usize>() as f64 / cells
    };
    let stage_masked_fraction = [
        missing_after(&|k| k.1.iter().filter(|v| v.is_none()).count()),
        missing_after(&|k| k.2.iter().filter(|v| v.is_none()).count()),
        missing_after(&|k| k.2.iter().filter(|v| v.is_none()).count()),
    ];

    let mut ids = Vec::with_capacity(kept.len());
    let mut y = Vec::with_capacity(kept.len() * n_t);
    let mut mask = Vec::with_capacity(kept.len() * n_t);
    for (station, _, values) in kept {
        ids.push(station);
        for v in values {
            y.push(v.unwrap_or(0.0));
            mask.push(v.is_some());
        }
    }
    let dataset = PanelDataset::new(ids, dates, 1, y, Vec::new(), mask, Vec::new())?;
    Ok(PreprocessOutput {
        dataset,
        dropped,
        stage_masked_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn rec(station: &str, day: NaiveDate, ticket: &str, entries: EntryCount) -> RawRidershipRecord {
        RawRidershipRecord {
            station_id: station.into(),
            date: day,
            ticket_type: ticket.into(),
            entries,
        }
    }

    fn config(first: &str, last: &str) -> PreprocessConfig {
        PreprocessConfig::new(DateRange::new(date(first), date(last)).unwrap())
    }

    /// `n_days` of daily records starting 2020-01-01, present where `observed(t)`.
    fn station(name: &str, n_days: usize, value: u64, observed: impl Fn(usize) -> bool) -> Vec<RawRidershipRecord> {
        date("2020-01-01")
            .iter_days()
            .take(n_days)
            .enumerate()
            .filter(|(t, _)| observed(*t))
            .map(|(_, d)| rec(name, d, "pass", EntryCount::Exact(value)))
            .collect()
    }

    #[test]
    fn parses_counts_and_censoring_marker() {
        assert_eq!("<5".parse::<EntryCount>().unwrap(), EntryCount::LessThanFive);
        assert_eq!(" 12 ".parse::<EntryCount>().unwrap(), EntryCount::Exact(12));
        assert!("-3".parse::<EntryCount>().is_err());
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let csv = "station_id,date,ticket_type,entries\nA,2020-01-01,pass,10\nA,2020-01-02,pass,abc\n";
        let err = read_ridership_csv(csv.as_bytes(), "raw.csv").unwrap_err();
        match err {
            Error::Parse { path, line, .. } => {
                assert_eq!(path, "raw.csv");
                assert_eq!(line, 3);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn censored_marker_contributes_three() {
        let d = date("2020-01-01");
        let mut records = station("A", 10, 1000, |_| true);
        records.push(rec("A", d, "ticket", EntryCount::LessThanFive));
        let cfg = config("2020-01-02", "2020-01-10");
        let out = preprocess_ridership(&records, &cfg).unwrap();
        // day 0 total is 1003, reference mean is 1000
        assert!((out.dataset.y(0, 0)[0] - (1003.0f64 / 1000.0).log10()).abs() < 1e-15);
    }

    #[test]
    fn retention_thresholds() {
        // 61% of 100 days observed (39% missing): kept; 39% observed: dropped;
        // 65% missing: dropped; mean 400: dropped
        let mut records = station("keep", 100, 600, |t| t < 61);
        records.extend(station("sparse", 100, 600, |t| t < 39));
        records.extend(station("sparse65", 100, 600, |t| t < 35));
        records.extend(station("quiet", 100, 400, |_| true));
        let out = preprocess_ridership(&records, &config("2020-01-01", "2020-12-31")).unwrap();
        assert_eq!(out.dataset.individual_ids(), &["keep".to_string()]);
        let dropped: Vec<&str> = out.dropped.iter().map(|d| d.station_id.as_str()).collect();
        assert_eq!(dropped, vec!["quiet", "sparse", "sparse65"]);
    }

    #[test]
    fn constant_series_normalizes_to_zero() {
        let records = station("A", 30, 100, |_| true);
        let mut cfg = config("2020-01-01", "2020-01-30");
        cfg.min_mean_entries = 50.0;
        let out = preprocess_ridership(&records, &cfg).unwrap();
        for t in 0..30 {
            assert_eq!(out.dataset.y(0, t)[0], 0.0);
        }
    }

    #[test]
    fn outliers_below_a_tenth_of_the_moving_average_are_masked() {
        let mut records = station("A", 30, 1000, |t| t != 10);
        records.push(rec("A", date("2020-01-11"), "pass", EntryCount::Exact(50)));
        let out = preprocess_ridership(&records, &config("2020-01-01", "2020-12-31")).unwrap();
        assert!(!out.dataset.observed(0, 10));
        assert_eq!(out.dataset.total_observed(), 29);
        let [a, b, c] = out.stage_masked_fraction;
        assert!(a <= b && b <= c);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn moving_average_window_is_centered_and_truncated() {
        let s: Vec<Option<f64>> = (0..20).map(|t| Some(t as f64)).collect();
        let a = moving_average(&s, 14);
        // t = 10 averages 3..=16
        assert_eq!(a[10], Some((3..=16).sum::<i32>() as f64 / 14.0));
        // t = 0 averages 0..=6
        assert_eq!(a[0], Some(3.0));
        let gaps = vec![Some(1.0), None, Some(3.0)];
        assert_eq!(moving_average(&gaps, 14)[1], Some(2.0));
    }

    #[test]
    fn station_without_reference_days_is_dropped() {
        let mut records = station("A", 30, 1000, |t| t >= 5);
        records.extend(station("B", 30, 1000, |_| true));
        let out = preprocess_ridership(&records, &config("2020-01-01", "2020-01-05")).unwrap();
        assert_eq!(out.dataset.individual_ids(), &["B".to_string()]);
        assert_eq!(out.dropped[0].station_id, "A");
    }

    #[test]
    fn everything_filtered_is_an_error() {
        let records = station("A", 30, 10, |_| true);
        let err = preprocess_ridership(&records, &config("2020-01-01", "2020-01-05")).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
    }

    #[test]
    fn renormalizing_with_unit_reference_is_identity() {
        let records = station("A", 30, 1000, |_| true);
        let out = preprocess_ridership(&records, &config("2020-01-01", "2020-01-30")).unwrap();
        for t in 0..30 {
            let v = 10f64.powf(out.dataset.y(0, t)[0]);
            assert_eq!((v / 1.0).log10(), out.dataset.y(0, t)[0]);
        }
    }
}
