use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::util::{mean, std_dev};

/// Repeated measurements of one metric for one method.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub label: String,
    /// One value per successful repetition.
    pub values: Vec<f64>,
    pub wall_times: Vec<f64>,
    /// `(repetition, error message)` for repetitions that failed.
    pub failures: Vec<(usize, String)>,
    pub config_fingerprint: String,
}

impl ExperimentResult {
    pub fn new(label: impl Into<String>, config_fingerprint: impl Into<String>) -> Self {
        ExperimentResult {
            label: label.into(),
            config_fingerprint: config_fingerprint.into(),
            ..Default::default()
        }
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        std_dev(&self.values)
    }

    pub fn mean_wall_time(&self) -> f64 {
        mean(&self.wall_times)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Unpaired t-test without the equal-variance assumption.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput("each sample needs at least two values".into()));
    }
    let var = |xs: &[f64]| {
        let m = mean(xs);
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (var(a) / na, var(b) / nb);
    let se2 = va + vb;
    let diff = mean(a) - mean(b);
    if se2 == 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        return Ok(WelchTest {
            t: if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY },
            df: na + nb - 2.0,
            p_value: p,
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidInput(format!("t distribution: {e}")))?;
    let p_value = 2.0 * dist.cdf(-t.abs());
    Ok(WelchTest { t, df, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welch_reference_values() {
        // computed by hand: means 3 and 6, variances 2.5 and 2.5, n = 5
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [4.0, 5.0, 6.0, 7.0, 8.0];
        let r = welch_t_test(&a, &b).unwrap();
        assert!((r.t + 3.0).abs() < 1e-12);
        assert!((r.df - 8.0).abs() < 1e-12);
        // two-sided p for t = 3 with 8 df
        assert!((r.p_value - 0.017_071_681).abs() < 1e-8);
        let same = welch_t_test(&a, &a).unwrap();
        assert!((same.p_value - 1.0).abs() < 1e-12);
        assert!(welch_t_test(&a[..1], &b).is_err());
    }

    #[test]
    fn statistics_are_recomputable() {
        let mut r = ExperimentResult::new("x", "abc");
        r.values = vec![1.0, 3.0];
        assert_eq!(r.mean(), 2.0);
        assert_eq!(r.std(), 1.0);
    }
}
