//! Synthetic panels with known clusters and segments.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::em::slopes_crossing_at;
use crate::error::{Error, Result};
use crate::model::{compute_lambda, segment_prior_probs, ModelParams};
use crate::panel::{daily_dates, write_dataset, PanelDataset};

/// Names of the three generated covariates.
pub const COVARIATE_NAMES: [&str; 3] = ["x_individual", "x_time", "x_iid"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_clusters: usize,
    pub n_segments: usize,
    pub n_individuals: usize,
    pub n_times: usize,
    pub n_dims: usize,
    /// Standard deviation of the regression coefficients; 0 turns the covariates off.
    pub sigma_alpha: f64,
    pub noise_variance: f64,
    pub dirichlet_concentration: f64,
    /// Share of `[0, 1]` over which a transition goes from 10% to 90%.
    pub transition_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_clusters: 4,
            n_segments: 4,
            n_individuals: 100,
            n_times: 100,
            n_dims: 1,
            sigma_alpha: 1.0,
            noise_variance: 1.0,
            dirichlet_concentration: 2.0,
            transition_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_clusters", self.n_clusters as f64),
            ("n_segments", self.n_segments as f64),
            ("n_individuals", self.n_individuals as f64),
            ("n_dims", self.n_dims as f64),
            ("noise_variance", self.noise_variance),
            ("dirichlet_concentration", self.dirichlet_concentration),
            ("transition_fraction", self.transition_fraction),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_times < 2 {
            return Err(Error::Config(format!("n_times must be at least 2, got {}", self.n_times)));
        }
        if !(self.sigma_alpha >= 0.0 && self.sigma_alpha.is_finite()) {
            return Err(Error::Config(format!("sigma_alpha must be non-negative, got {}", self.sigma_alpha)));
        }
        Ok(())
    }

    /// Gap between consecutive slopes: a two-segment prior goes from 10% to 90%
    /// over `transition_fraction` of the unit interval.
    pub fn slope_gap(&self) -> f64 {
        2.0 * 9f64.ln() / self.transition_fraction
    }
}

/// Generated panel along with the parameters and latent labels behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub params: ModelParams,
    pub clusters: Vec<usize>,
    /// `I x T`, row-major.
    pub segments: Vec<usize>,
    /// Change points of each cluster (`K x (S-1)`).
    pub change_points: Vec<Vec<f64>>,
    pub dataset: PanelDataset,
}

impl GroundTruth {
    pub fn segment(&self, i: usize, t: usize) -> usize {
        self.segments[i * self.dataset.n_times() + t]
    }

    /// `(cluster, segment)` per cell.
    pub fn joint_labels(&self) -> Vec<Option<(usize, usize)>> {
        let n_t = self.dataset.n_times();
        self.segments
            .iter()
            .enumerate()
            .map(|(c, &s)| Some((self.clusters[c / n_t], s)))
            .collect()
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, n: usize, alpha: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    // rand_distr's Dirichlet is sized at compile time; normalized gammas are equivalent
    let gamma = Gamma::new(alpha, 1.0).expect("valid concentration");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|g| g / total).collect()
}

fn categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probs.len() - 1
}

/// Draws parameters, latent labels and observations.
pub fn generate(config: &SynthConfig) -> Result<GroundTruth> {
    config.validate()?;
    let (k_n, s_n, d_n, n_ind, n_t) = (config.n_clusters, config.n_segments, config.n_dims, config.n_individuals, config.n_times);
    let l_n = COVARIATE_NAMES.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dates = daily_dates("2017-01-01".parse().expect("valid date"), n_t);
    let lambda = compute_lambda(n_t as f64, 90.0)?;
    let mut params = ModelParams::zeros(k_n, s_n, d_n, l_n, lambda);

    params.pi = dirichlet(&mut rng, k_n, config.dirichlet_concentration);
    let gap = config.slope_gap();
    let mut change_points = Vec::with_capacity(k_n);
    for k in 0..k_n {
        let props = dirichlet(&mut rng, s_n, config.dirichlet_concentration);
        let cps: Vec<f64> = props
            .iter()
            .take(s_n - 1)
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        if s_n > 1 {
            let (u, v) = slopes_crossing_at(gap, &cps);
            params.u[k * s_n..(k + 1) * s_n].copy_from_slice(&u);
            params.v[k * s_n..(k + 1) * s_n].copy_from_slice(&v);
        }
        change_points.push(cps);
    }
    for m in params.m.iter_mut() {
        *m = rng.sample(StandardNormal);
    }
    if config.sigma_alpha > 0.0 {
        let normal = Normal::new(0.0, config.sigma_alpha).expect("valid scale");
        for a in params.alpha.iter_mut() {
            *a = normal.sample(&mut rng);
        }
    }
    params.sigma.fill(config.noise_variance);

    let per_individual: Vec<f64> = (0..n_ind).map(|_| rng.sample(StandardNormal)).collect();
    let per_time: Vec<f64> = (0..n_t).map(|_| rng.sample(StandardNormal)).collect();
    let mut x = vec![0.0; n_ind * n_t * l_n];
    for i in 0..n_ind {
        for t in 0..n_t {
            let c = (i * n_t + t) * l_n;
            x[c] = per_individual[i];
            x[c + 1] = per_time[t];
            x[c + 2] = rng.sample(StandardNormal);
        }
    }

    let times: Vec<f64> = (0..n_t).map(|t| t as f64 / (n_t - 1) as f64).collect();
    let priors: Vec<Vec<f64>> = times.iter().map(|&t| segment_prior_probs(&params, t)).collect();
    let noise = Normal::new(0.0, config.noise_variance.sqrt()).expect("valid variance");
    let clusters: Vec<usize> = (0..n_ind).map(|_| categorical(&mut rng, &params.pi)).collect();
    let mut segments = vec![0; n_ind * n_t];
    let mut y = vec![0.0; n_ind * n_t * d_n];
    for i in 0..n_ind {
        let k = clusters[i];
        for t in 0..n_t {
            let s = categorical(&mut rng, &priors[t][k * s_n..(k + 1) * s_n]);
            segments[i * n_t + t] = s;
            let mu = crate::model::mean_field(&params, &x[(i * n_t + t) * l_n..(i * n_t + t + 1) * l_n], k, s);
            for d in 0..d_n {
                y[(i * n_t + t) * d_n + d] = mu[d] + noise.sample(&mut rng);
            }
        }
    }

    let dataset = PanelDataset::new(
        (0..n_ind).map(|i| format!("ind{i:04}")).collect(),
        dates,
        d_n,
        y,
        x,
        vec![true; n_ind * n_t],
        COVARIATE_NAMES.iter().map(|s| s.to_string()).collect(),
    )?;
    Ok(GroundTruth {
        params,
        clusters,
        segments,
        change_points,
        dataset,
    })
}

/// Writes the panel, `labels.csv` and `truth.json` into `dir`.
pub fn dump(truth: &GroundTruth, dir: &Path) -> Result<()> {
    write_dataset(&truth.dataset, dir)?;
    let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
    w.write_record(["individual", "date", "cluster", "segment"])?;
    let ds = &truth.dataset;
    for i in 0..ds.n_individuals() {
        for t in 0..ds.n_times() {
            w.write_record([
                ds.individual_ids()[i].clone(),
                ds.dates()[t].to_string(),
                truth.clusters[i].to_string(),
                truth.segment(i, t).to_string(),
            ])?;
        }
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Truth<'a> {
        params: &'a ModelParams,
        change_points: &'a [Vec<f64>],
    }
    let f = std::fs::File::create(dir.join("truth.json"))?;
    serde_json::to_writer_pretty(
        f,
        &Truth {
            params: &truth.params,
            change_points: &truth.change_points,
        },
    )?;
    Ok(())
}
