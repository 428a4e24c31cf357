//! On-disk panel format.
//!
//! A dataset directory holds:
//! - `covariates.csv`: `individual,date,<covariate names...>`, one row per grid cell
//!   (defines the individuals, in first-appearance order, and the date grid);
//! - `observations.csv`: `individual,date,y_0,...,y_{D-1}`, one row per observed cell;
//! - `groups.json` (optional): `{"sum_zero_groups": [[column indices...], ...]}`.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::PanelDataset;
use crate::error::{Error, Result};

pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const COVARIATES_FILE: &str = "covariates.csv";
pub const GROUPS_FILE: &str = "groups.json";

#[derive(Serialize, Deserialize)]
struct Groups {
    sum_zero_groups: Vec<Vec<usize>>,
}

/// Writes the dataset into `dir` (created if needed).
pub fn write_dataset(ds: &PanelDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (n_t, d) = (ds.n_times(), ds.n_dims());

    let mut obs = csv::Writer::from_path(dir.join(OBSERVATIONS_FILE))?;
    let mut header = vec!["individual".to_string(), "date".to_string()];
    header.extend((0..d).map(|j| format!("y_{j}")));
    obs.write_record(&header)?;
    for (i, id) in ds.individual_ids().iter().enumerate() {
        for t in 0..n_t {
            if !ds.observed(i, t) {
                continue;
            }
            let mut row = vec![id.clone(), ds.dates()[t].to_string()];
            row.extend(ds.y(i, t).iter().map(|v| v.to_string()));
            obs.write_record(&row)?;
        }
    }
    obs.flush()?;

    let mut cov = csv::Writer::from_path(dir.join(COVARIATES_FILE))?;
    let mut header = vec!["individual".to_string(), "date".to_string()];
    header.extend(ds.covariate_names().iter().cloned());
    cov.write_record(&header)?;
    for (i, id) in ds.individual_ids().iter().enumerate() {
        for t in 0..n_t {
            let mut row = vec![id.clone(), ds.dates()[t].to_string()];
            row.extend(ds.x(i, t).iter().map(|v| v.to_string()));
            cov.write_record(&row)?;
        }
    }
    cov.flush()?;

    if !ds.sum_zero_groups().is_empty() {
        let mut f = File::create(dir.join(GROUPS_FILE))?;
        serde_json::to_writer(
            &mut f,
            &Groups {
                sum_zero_groups: ds.sum_zero_groups().to_vec(),
            },
        )?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_date(path: &Path, line: u64, s: &str) -> Result<NaiveDate> {
    s.trim()
        .parse()
        .map_err(|e| parse_err(path, line, format!("bad date `{s}`: {e}")))
}

fn parse_f64(path: &Path, line: u64, column: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("column `{column}`: not a number: `{s}`")))
}

/// Reads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<PanelDataset> {
    let cov_path = dir.join(COVARIATES_FILE);
    let obs_path = dir.join(OBSERVATIONS_FILE);

    let mut rdr = csv::Reader::from_path(&cov_path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "individual" || &headers[1] != "date" {
        return Err(parse_err(&cov_path, 1, "header must start with `individual,date`"));
    }
    let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let n_cov = names.len();

    let mut ids: Vec<String> = Vec::new();
    let mut id_index: HashMap<String, usize> = HashMap::new();
    let mut cells: Vec<(usize, NaiveDate, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != n_cov + 2 {
            return Err(parse_err(
                &cov_path,
                line,
                format!("expected {} fields, got {}", n_cov + 2, rec.len()),
            ));
        }
        let id = rec[0].to_string();
        let i = *id_index.entry(id.clone()).or_insert_with(|| {
            ids.push(id);
            ids.len() - 1
        });
        let date = parse_date(&cov_path, line, &rec[1])?;
        let values = (0..n_cov)
            .map(|l| parse_f64(&cov_path, line, &names[l], &rec[l + 2]))
            .collect::<Result<Vec<f64>>>()?;
        cells.push((i, date, values));
    }
    let mut dates: Vec<NaiveDate> = cells.iter().map(|c| c.1).collect();
    dates.sort();
    dates.dedup();
    let date_index: HashMap<NaiveDate, usize> = dates.iter().enumerate().map(|(t, d)| (*d, t)).collect();
    let (n_ind, n_t) = (ids.len(), dates.len());
    if cells.len() != n_ind * n_t {
        return Err(parse_err(
            &cov_path,
            0,
            format!(
                "covariates must cover the full grid: {} rows for {} individuals x {} dates",
                cells.len(),
                n_ind,
                n_t
            ),
        ));
    }
    let mut x = vec![0.0; n_ind * n_t * n_cov];
    let mut seen = vec![false; n_ind * n_t];
    for (i, date, values) in cells {
        let c = i * n_t + date_index[&date];
        if seen[c] {
            return Err(parse_err(&cov_path, 0, format!("duplicate row for ({}, {date})", ids[i])));
        }
        seen[c] = true;
        x[c * n_cov..(c + 1) * n_cov].copy_from_slice(&values);
    }

    let mut rdr = csv::Reader::from_path(&obs_path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "individual" || &headers[1] != "date" {
        return Err(parse_err(&obs_path, 1, "header must be `individual,date,y_0,...`"));
    }
    let n_dims = headers.len() - 2;
    let mut y = vec![0.0; n_ind * n_t * n_dims];
    let mut mask = vec![false; n_ind * n_t];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let i = *id_index
            .get(&rec[0])
            .ok_or_else(|| parse_err(&obs_path, line, format!("unknown individual `{}`", &rec[0])))?;
        let date = parse_date(&obs_path, line, &rec[1])?;
        let t = *date_index
            .get(&date)
            .ok_or_else(|| parse_err(&obs_path, line, format!("date {date} is not on the covariate grid")))?;
        let c = i * n_t + t;
        if mask[c] {
            return Err(parse_err(&obs_path, line, "duplicate observation"));
        }
        mask[c] = true;
        for j in 0..n_dims {
            y[c * n_dims + j] = parse_f64(&obs_path, line, &headers[j + 2], &rec[j + 2])?;
        }
    }

    let groups_path = dir.join(GROUPS_FILE);
    let groups = if groups_path.exists() {
        let g: Groups = serde_json::from_reader(File::open(&groups_path)?)?;
        g.sum_zero_groups
    } else {
        Vec::new()
    };
    PanelDataset::new(ids, dates, n_dims, y, x, mask, names)?.with_sum_zero_groups(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::daily_dates;

    #[test]
    fn round_trip_with_mask_and_groups() {
        let dates = daily_dates("2020-01-01".parse().unwrap(), 3);
        let ds = PanelDataset::new(
            vec!["a".into(), "b".into()],
            dates,
            2,
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 1.0 / 3.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
            vec![true, false, true, true, true, true],
            vec!["u".into(), "v".into()],
        )
        .unwrap()
        .with_sum_zero_groups(vec![vec![0, 1]])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn off_grid_observation_is_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join(COVARIATES_FILE),
            "individual,date\na,2020-01-01\na,2020-01-02\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join(OBSERVATIONS_FILE),
            "individual,date,y_0\na,2020-01-01,1\na,2020-01-05,2\n",
        )
        .unwrap();
        let err = read_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }
}
