//! Covariate builders: calendar dummies, periodic splines, time trend and
//! per-individual attributes.

use std::collections::HashMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::spline::periodic_bspline_basis;
use super::{normalized_times, DateRange};
use crate::error::{Error, Result};

fn default_true() -> bool {
    true
}

const WEEKDAYS: [&str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];

/// One block of covariate columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateGroup {
    /// Seven 0/1 columns, Monday first. With `sum_zero` (the default) the
    /// coefficients are constrained to sum to zero, since the columns add up to
    /// the intercept.
    DayOfWeek {
        #[serde(default = "default_true")]
        sum_zero: bool,
    },
    /// A single 0/1 column set on every date inside any of the ranges.
    CalendarDummy { name: String, ranges: Vec<DateRange> },
    /// 1 on weekdays outside the holiday ranges.
    WorkingDay {
        #[serde(default)]
        holidays: Vec<DateRange>,
    },
    /// `count` periodic B-splines of `degree` over a period of `period_days`.
    /// Phase zero is at `origin` (defaults to the first date of the grid).
    PeriodicSpline {
        count: usize,
        degree: usize,
        period_days: f64,
        #[serde(default)]
        origin: Option<NaiveDate>,
        #[serde(default = "default_true")]
        sum_zero: bool,
    },
    /// The normalized timestamp.
    LinearTime,
    /// Per-individual constants taken from the attribute table.
    Attribute { columns: Vec<String> },
}

impl CovariateGroup {
    fn kind_name(&self) -> &'static str {
        match self {
            CovariateGroup::DayOfWeek { .. } => "day_of_week",
            CovariateGroup::CalendarDummy { .. } => "calendar_dummy",
            CovariateGroup::WorkingDay { .. } => "working_day",
            CovariateGroup::PeriodicSpline { .. } => "periodic_spline",
            CovariateGroup::LinearTime => "linear_time",
            CovariateGroup::Attribute { .. } => "attribute",
        }
    }

    pub fn width(&self) -> usize {
        match self {
            CovariateGroup::DayOfWeek { .. } => 7,
            CovariateGroup::CalendarDummy { .. } => 1,
            CovariateGroup::WorkingDay { .. } => 1,
            CovariateGroup::PeriodicSpline { count, .. } => *count,
            CovariateGroup::LinearTime => 1,
            CovariateGroup::Attribute { columns } => columns.len(),
        }
    }

    fn sum_zero(&self) -> bool {
        match self {
            CovariateGroup::DayOfWeek { sum_zero } => *sum_zero,
            CovariateGroup::PeriodicSpline { sum_zero, .. } => *sum_zero,
            _ => false,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            CovariateGroup::CalendarDummy { ranges, .. } => ranges.iter().try_for_each(DateRange::validate),
            CovariateGroup::WorkingDay { holidays } => holidays.iter().try_for_each(DateRange::validate),
            CovariateGroup::PeriodicSpline {
                count,
                degree,
                period_days,
                ..
            } => {
                if !(*period_days > 0.0) {
                    return Err(Error::Config(format!("spline period must be positive, got {period_days}")));
                }
                if count <= degree {
                    return Err(Error::Config(format!(
                        "periodic spline needs count > degree (count {count}, degree {degree})"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Ordered list of covariate groups.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    #[serde(default)]
    pub groups: Vec<CovariateGroup>,
}

#[derive(Deserialize)]
struct RawSpec {
    #[serde(default)]
    groups: Vec<toml::Table>,
}

impl CovariateSpec {
    /// Parses `[[groups]]` tables, each with a `kind` key.
    pub fn from_toml_table(table: &toml::Table) -> Result<Self> {
        let raw: RawSpec = toml::Value::Table(table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut groups = Vec::with_capacity(raw.groups.len());
        for g in raw.groups {
            let kind = g
                .get("kind")
                .and_then(|k| k.as_str())
                .ok_or_else(|| Error::Config("covariate group without a `kind`".into()))?
                .to_string();
            const KNOWN: [&str; 6] = [
                "day_of_week",
                "calendar_dummy",
                "working_day",
                "periodic_spline",
                "linear_time",
                "attribute",
            ];
            if !KNOWN.contains(&kind.as_str()) {
                return Err(Error::UnknownGroupKind(kind));
            }
            let group: CovariateGroup = toml::Value::Table(g)
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("group `{kind}`: {e}")))?;
            groups.push(group);
        }
        let spec = CovariateSpec { groups };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let table: toml::Table = s.parse()?;
        Self::from_toml_table(&table)
    }

    pub fn validate(&self) -> Result<()> {
        self.groups.iter().try_for_each(CovariateGroup::validate)
    }

    /// Expanded column count.
    pub fn width(&self) -> usize {
        self.groups.iter().map(CovariateGroup::width).sum()
    }

    pub fn needs_attributes(&self) -> bool {
        self.groups.iter().any(|g| matches!(g, CovariateGroup::Attribute { .. }))
    }
}

/// Per-individual constants keyed by individual id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributeTable {
    pub columns: Vec<String>,
    pub rows: HashMap<String, Vec<f64>>,
}

impl AttributeTable {
    /// Reads a CSV whose first column is the individual id and the remaining
    /// columns are numeric attributes.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, &path.display().to_string())
    }

    pub fn from_reader<R: std::io::Read>(reader: R, label: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() {
            return Err(Error::Parse {
                path: label.into(),
                line: 1,
                message: "attribute table has no header".into(),
            });
        }
        let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut rows = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let id = rec.get(0).unwrap_or_default().to_string();
            let values = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| Error::Parse {
                        path: label.into(),
                        line,
                        message: format!("non-numeric attribute value `{v}`"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != columns.len() {
                return Err(Error::Parse {
                    path: label.into(),
                    line,
                    message: format!("expected {} attribute values, got {}", columns.len(), values.len()),
                });
            }
            rows.insert(id, values);
        }
        Ok(AttributeTable { columns, rows })
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("attribute table has no column `{name}`")))
    }
}

/// An expanded covariate tensor (`I x T x L`, row-major) with column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    pub values: Vec<f64>,
    pub names: Vec<String>,
    pub sum_zero_groups: Vec<Vec<usize>>,
}

/// Expands `spec` over the date grid for the given individuals.
pub fn build_covariates(
    spec: &CovariateSpec,
    dates: &[NaiveDate],
    individual_ids: &[String],
    attrs: Option<&AttributeTable>,
) -> Result<Covariates> {
    spec.validate()?;
    let times = normalized_times(dates)?;
    let n_t = dates.len();
    let n_ind = individual_ids.len();

    // columns that depend only on the date, then columns that depend only on the individual
    let mut names = Vec::new();
    let mut sum_zero_groups = Vec::new();
    // per column: either a T-vector or an I-vector
    enum Column {
        ByTime(Vec<f64>),
        ByIndividual(Vec<f64>),
    }
    let mut columns: Vec<Column> = Vec::new();

    for group in &spec.groups {
        let first = names.len();
        match group {
            CovariateGroup::DayOfWeek { .. } => {
                for (d, label) in WEEKDAYS.iter().enumerate() {
                    names.push(format!("dow_{label}"));
                    columns.push(Column::ByTime(
                        dates
                            .iter()
                            .map(|x| (x.weekday().num_days_from_monday() as usize == d) as u8 as f64)
                            .collect(),
                    ));
                }
            }
            CovariateGroup::CalendarDummy { name, ranges } => {
                let col: Vec<f64> = dates
                    .iter()
                    .map(|d| ranges.iter().any(|r| r.contains(*d)) as u8 as f64)
                    .collect();
                if !ranges.is_empty() && col.iter().all(|&v| v == 0.0) {
                    log::warn!("calendar dummy `{name}` does not overlap the date grid");
                }
                names.push(name.clone());
                columns.push(Column::ByTime(col));
            }
            CovariateGroup::WorkingDay { holidays } => {
                names.push("working_day".into());
                columns.push(Column::ByTime(
                    dates
                        .iter()
                        .map(|d| {
                            let weekday = d.weekday().num_days_from_monday() < 5;
                            (weekday && !holidays.iter().any(|r| r.contains(*d))) as u8 as f64
                        })
                        .collect(),
                ));
            }
            CovariateGroup::PeriodicSpline {
                count,
                degree,
                period_days,
                origin,
                ..
            } => {
                let origin = origin.unwrap_or(dates[0]);
                let basis: Vec<Vec<f64>> = dates
                    .iter()
                    .map(|d| {
                        let days = (*d - origin).num_days() as f64;
                        periodic_bspline_basis(days / period_days, *count, *degree)
                    })
                    .collect();
                for j in 0..*count {
                    names.push(format!("spline_{j}"));
                    columns.push(Column::ByTime(basis.iter().map(|b| b[j]).collect()));
                }
            }
            CovariateGroup::LinearTime => {
                names.push("time".into());
                columns.push(Column::ByTime(times.clone()));
            }
            CovariateGroup::Attribute { columns: attr_cols } => {
                let table = attrs.ok_or_else(|| {
                    Error::Config("covariate spec uses attributes but no attribute table was given".into())
                })?;
                for name in attr_cols {
                    let idx = table.column_index(name)?;
                    let col = individual_ids
                        .iter()
                        .map(|id| {
                            table
                                .rows
                                .get(id)
                                .map(|row| row[idx])
                                .ok_or_else(|| Error::MissingAttribute(id.clone()))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    names.push(name.clone());
                    columns.push(Column::ByIndividual(col));
                }
            }
        }
        if group.sum_zero() {
            sum_zero_groups.push((first..names.len()).collect());
        }
        debug_assert_eq!(names.len() - first, group.width(), "{}", group.kind_name());
    }

    let n_cov = names.len();
    let mut values = vec![0.0; n_ind * n_t * n_cov];
    for (l, col) in columns.iter().enumerate() {
        for i in 0..n_ind {
            for t in 0..n_t {
                values[(i * n_t + t) * n_cov + l] = match col {
                    Column::ByTime(v) => v[t],
                    Column::ByIndividual(v) => v[i],
                };
            }
        }
    }
    Ok(Covariates {
        values,
        names,
        sum_zero_groups,
    })
}
