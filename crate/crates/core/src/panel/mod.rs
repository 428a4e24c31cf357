//! Observation panels: `I` individuals observed on a shared grid of `T` days,
//! with `D`-dimensional targets, `L` covariates and a missing-data mask.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub mod covariates;
pub mod io;
pub mod preprocess;
pub mod spline;

pub use covariates::{build_covariates, AttributeTable, CovariateGroup, CovariateSpec, Covariates};
pub use preprocess::{preprocess_ridership, read_ridership_csv, DroppedStation, EntryCount, PreprocessConfig, PreprocessOutput, RawRidershipRecord};
pub use io::{read_dataset, write_dataset};

/// Inclusive range of calendar dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        let r = DateRange { start, end };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.start > self.end {
            return Err(Error::Config(format!(
                "date range starts after it ends ({} > {})",
                self.start, self.end
            )));
        }
        Ok(())
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

/// Maps calendar dates to normalized times in `[0, 1]`.
pub fn normalized_times(dates: &[NaiveDate]) -> Result<Vec<f64>> {
    if dates.len() < 2 {
        return Err(Error::InvalidInput("time grid needs at least two dates".into()));
    }
    if dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("time grid dates must be strictly increasing".into()));
    }
    let first = dates[0];
    let span = (dates[dates.len() - 1] - first).num_days() as f64;
    Ok(dates
        .iter()
        .map(|d| (*d - first).num_days() as f64 / span)
        .collect())
}

/// Consecutive daily dates starting at `start`.
pub fn daily_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start.iter_days().take(n).collect()
}

/// A panel of time series with covariates.
///
/// Immutable once built. Values at masked-out cells are stored (as zero) but
/// never read by the estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    individual_ids: Vec<String>,
    dates: Vec<NaiveDate>,
    time: Vec<f64>,
    n_dims: usize,
    y: Vec<f64>,
    x: Vec<f64>,
    mask: Vec<bool>,
    covariate_names: Vec<String>,
    sum_zero_groups: Vec<Vec<usize>>,
}

impl PanelDataset {
    /// Builds a dataset. `y` is `I x T x D`, `x` is `I x T x L`, `mask` is `I x T`,
    /// all row-major. The time grid is derived from `dates`.
    pub fn new(
        individual_ids: Vec<String>,
        dates: Vec<NaiveDate>,
        n_dims: usize,
        y: Vec<f64>,
        x: Vec<f64>,
        mask: Vec<bool>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let time = normalized_times(&dates)?;
        let n_ind = individual_ids.len();
        let n_t = dates.len();
        let n_cov = covariate_names.len();
        if n_ind == 0 {
            return Err(Error::InvalidInput("dataset needs at least one individual".into()));
        }
        if n_dims == 0 {
            return Err(Error::InvalidInput("observation dimension must be at least 1".into()));
        }
        if y.len() != n_ind * n_t * n_dims {
            return Err(Error::Dimension(format!(
                "y has {} values, expected I*T*D = {}*{}*{}",
                y.len(),
                n_ind,
                n_t,
                n_dims
            )));
        }
        if x.len() != n_ind * n_t * n_cov {
            return Err(Error::Dimension(format!(
                "x has {} values, expected I*T*L = {}*{}*{} (covariates: {})",
                x.len(),
                n_ind,
                n_t,
                n_cov,
                covariate_names.join(", ")
            )));
        }
        if mask.len() != n_ind * n_t {
            return Err(Error::Dimension(format!(
                "mask has {} values, expected I*T = {}",
                mask.len(),
                n_ind * n_t
            )));
        }
        let mut ds = PanelDataset {
            individual_ids,
            dates,
            time,
            n_dims,
            y,
            x,
            mask,
            covariate_names,
            sum_zero_groups: Vec::new(),
        };
        // masked cells are never read; store a canonical value so equality and
        // fingerprints do not depend on garbage
        for c in 0..n_ind * n_t {
            if !ds.mask[c] {
                ds.y[c * n_dims..(c + 1) * n_dims].fill(0.0);
            }
        }
        Ok(ds)
    }

    /// Declares groups of dummy columns whose rows sum to one (e.g. day of week).
    /// Their regression coefficients are reported centered, with the group mean
    /// folded into the intercept.
    pub fn with_sum_zero_groups(mut self, groups: Vec<Vec<usize>>) -> Result<Self> {
        for g in &groups {
            if g.iter().any(|&l| l >= self.n_covariates()) {
                return Err(Error::Dimension(format!(
                    "sum-zero group {:?} refers to a column beyond L = {}",
                    g,
                    self.n_covariates()
                )));
            }
        }
        self.sum_zero_groups = groups;
        Ok(self)
    }

    pub fn n_individuals(&self) -> usize {
        self.individual_ids.len()
    }

    pub fn n_times(&self) -> usize {
        self.dates.len()
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn individual_ids(&self) -> &[String] {
        &self.individual_ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Normalized time grid in `[0, 1]`.
    pub fn time(&self) -> &[f64] {
        &self.time
    }

    /// Number of calendar days covered by the grid (first to last, inclusive).
    pub fn span_days(&self) -> f64 {
        ((self.dates[self.dates.len() - 1] - self.dates[0]).num_days() + 1) as f64
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn sum_zero_groups(&self) -> &[Vec<usize>] {
        &self.sum_zero_groups
    }

    #[inline]
    pub fn observed(&self, i: usize, t: usize) -> bool {
        self.mask[i * self.n_times() + t]
    }

    #[inline]
    pub fn y(&self, i: usize, t: usize) -> &[f64] {
        let c = i * self.n_times() + t;
        &self.y[c * self.n_dims..(c + 1) * self.n_dims]
    }

    #[inline]
    pub fn x(&self, i: usize, t: usize) -> &[f64] {
        let l = self.n_covariates();
        let c = i * self.n_times() + t;
        &self.x[c * l..(c + 1) * l]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn y_raw(&self) -> &[f64] {
        &self.y
    }

    pub fn x_raw(&self) -> &[f64] {
        &self.x
    }

    pub fn n_observed(&self, i: usize) -> usize {
        (0..self.n_times()).filter(|&t| self.observed(i, t)).count()
    }

    pub fn total_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Fraction of masked-out cells.
    pub fn masked_fraction(&self) -> f64 {
        1.0 - self.total_observed() as f64 / self.mask.len() as f64
    }

    /// Keeps the listed individuals, in the given order.
    pub fn subset(&self, individuals: &[usize]) -> PanelDataset {
        let (n_t, d, l) = (self.n_times(), self.n_dims, self.n_covariates());
        let mut y = Vec::with_capacity(individuals.len() * n_t * d);
        let mut x = Vec::with_capacity(individuals.len() * n_t * l);
        let mut mask = Vec::with_capacity(individuals.len() * n_t);
        for &i in individuals {
            y.extend_from_slice(&self.y[i * n_t * d..(i + 1) * n_t * d]);
            x.extend_from_slice(&self.x[i * n_t * l..(i + 1) * n_t * l]);
            mask.extend_from_slice(&self.mask[i * n_t..(i + 1) * n_t]);
        }
        PanelDataset {
            individual_ids: individuals.iter().map(|&i| self.individual_ids[i].clone()).collect(),
            dates: self.dates.clone(),
            time: self.time.clone(),
            n_dims: d,
            y,
            x,
            mask,
            covariate_names: self.covariate_names.clone(),
            sum_zero_groups: self.sum_zero_groups.clone(),
        }
    }

    /// Same observations with every covariate dropped (`L = 0`).
    pub fn without_covariates(&self) -> PanelDataset {
        PanelDataset {
            x: Vec::new(),
            covariate_names: Vec::new(),
            sum_zero_groups: Vec::new(),
            ..self.clone()
        }
    }

    /// Same grid, mask and covariates with new targets (`I x T x D`).
    pub fn with_targets(&self, y: Vec<f64>) -> Result<PanelDataset> {
        if y.len() != self.y.len() {
            return Err(Error::Dimension(format!(
                "replacement targets have {} values, expected {}",
                y.len(),
                self.y.len()
            )));
        }
        Ok(PanelDataset { y, ..self.clone() })
    }

    /// Same observations with a new covariate tensor.
    pub fn with_covariates(&self, covs: Covariates) -> Result<PanelDataset> {
        let expected = self.n_individuals() * self.n_times() * covs.names.len();
        if covs.values.len() != expected {
            return Err(Error::Dimension(format!(
                "covariate tensor has {} values, expected I*T*L = {}",
                covs.values.len(),
                expected
            )));
        }
        PanelDataset {
            x: covs.values,
            covariate_names: covs.names,
            sum_zero_groups: Vec::new(),
            ..self.clone()
        }
        .with_sum_zero_groups(covs.sum_zero_groups)
    }

    /// SHA-256 over everything an estimator can read.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for id in &self.individual_ids {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        for t in &self.time {
            h.update(t.to_le_bytes());
        }
        h.update((self.n_dims as u64).to_le_bytes());
        for (c, &m) in self.mask.iter().enumerate() {
            h.update([m as u8]);
            if m {
                for v in &self.y[c * self.n_dims..(c + 1) * self.n_dims] {
                    h.update(v.to_le_bytes());
                }
            }
        }
        for v in &self.x {
            h.update(v.to_le_bytes());
        }
        for n in &self.covariate_names {
            h.update(n.as_bytes());
            h.update([0u8]);
        }
        crate::util::hex(&h.finalize())
    }
}
