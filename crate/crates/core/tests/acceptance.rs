//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p clustseg --test acceptance`.

use std::path::PathBuf;
use std::time::Instant;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use clustseg::em::{e_step, fit, map_partition};
use clustseg::eval::{cross_validate, joint_ari, run_synthetic_benchmark, welch_t_test, BenchmarkSpec};
use clustseg::model::{count_params, log_likelihood, mean_field, segment_prior_probs, compute_lambda};
use clustseg::panel::{build_covariates, daily_dates, preprocess_ridership, read_ridership_csv, AttributeTable, CovariateSpec, PreprocessConfig};
use clustseg::pipelines::{run_pipeline, PipelineKind};
use clustseg::segopt::SegmentObjective;
use clustseg::synth::{generate, SynthConfig};
use clustseg::wls::{solve_weighted_regression, WeightedRegressionProblem};
use clustseg::{CovarianceKind, FitConfig, ModelParams, PanelDataset};

type Outcome = Result<String, String>;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1 and 2

fn benchmark_means(sigma_alpha: f64, kinds: Vec<PipelineKind>) -> Result<Vec<(PipelineKind, f64, f64, usize)>, String> {
    let spec = BenchmarkSpec {
        synth: SynthConfig {
            sigma_alpha,
            ..SynthConfig::default()
        },
        fit: FitConfig::new(4, 4),
        kinds,
        repetitions: 10,
    };
    let (_, summary) = run_synthetic_benchmark(&spec).map_err(|e| e.to_string())?;
    Ok(summary
        .into_iter()
        .map(|(k, r)| (k, r.mean(), r.std(), r.failures.len()))
        .collect())
}

fn table_regime() -> Outcome {
    let start = Instant::now();
    let s = benchmark_means(1.0, vec![PipelineKind::ClustSeg, PipelineKind::RegThenClustSeg, PipelineKind::Proposed])?;
    let (cs, rcs, prop) = (s[0].1, s[1].1, s[2].1);
    let failures: usize = s.iter().map(|x| x.3).sum();
    let detail = format!(
        "proposed {prop:.3} +- {:.3}, clust_seg {cs:.3} +- {:.3}, reg_then_clust_seg {rcs:.3} +- {:.3}, {failures} failed runs, {:.0}s",
        s[2].2,
        s[0].2,
        s[1].2,
        start.elapsed().as_secs_f64()
    );
    check(
        failures == 0 && (0.65..=0.90).contains(&prop) && prop - cs >= 0.15 && prop - rcs >= 0.15,
        detail,
    )
}

fn no_overfit() -> Outcome {
    let s = benchmark_means(0.0, vec![PipelineKind::ClustSeg, PipelineKind::Proposed])?;
    let (cs, prop) = (s[0].1, s[1].1);
    check(
        s.iter().all(|x| x.3 == 0) && (prop - cs).abs() <= 0.10,
        format!("proposed {prop:.3}, clust_seg {cs:.3}, gap {:.3}", (prop - cs).abs()),
    )
}

// ---------------------------------------------------------------- 3

fn ridership_like_panel() -> Result<PanelDataset, String> {
    let spec_text = std::fs::read_to_string(manifest_dir().join("../../configs/idfm_covariates.toml")).map_err(|e| e.to_string())?;
    let spec = CovariateSpec::from_toml_str(&spec_text).map_err(|e| e.to_string())?;
    let n_ind = 12;
    let ids: Vec<String> = (0..n_ind).map(|i| format!("st{i:02}")).collect();
    let dates = daily_dates(NaiveDate::from_ymd_opt(2019, 11, 1).unwrap(), 578);
    let mut attrs = String::from("station,metro,rer,transilien,train\n");
    for (i, id) in ids.iter().enumerate() {
        attrs.push_str(&format!("{id},{},{},{},{}\n", (i % 2), (i % 3 == 0) as u8, (i % 4 == 1) as u8, (i == 5) as u8));
    }
    let table = AttributeTable::from_reader(attrs.as_bytes(), "attributes").map_err(|e| e.to_string())?;
    let covs = build_covariates(&spec, &dates, &ids, Some(&table)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y: Vec<f64> = (0..n_ind * dates.len()).map(|c| (c / dates.len()) as f64 * 0.1 + rng.random::<f64>()).collect();
    let ds = PanelDataset::new(ids, dates.clone(), 1, y, vec![], vec![true; n_ind * 578], vec![]).map_err(|e| e.to_string())?;
    ds.with_covariates(covs).map_err(|e| e.to_string())
}

fn parameter_counts() -> Outcome {
    let expected = [73, 424, 34, 73, 424, 424];
    let structural = [
        count_params(5, 2, 1, 0, CovarianceKind::Diagonal) + 39,
        count_params(5, 2, 1, 39, CovarianceKind::Diagonal),
        count_params(5, 2, 1, 0, CovarianceKind::Diagonal),
        count_params(5, 2, 1, 0, CovarianceKind::Diagonal) + 39,
        count_params(5, 2, 1, 39, CovarianceKind::Diagonal),
        count_params(5, 2, 1, 39, CovarianceKind::Diagonal),
    ];
    let ds = ridership_like_panel()?;
    if ds.n_covariates() != 39 {
        return Err(format!("covariate config yields {} columns, expected 39", ds.n_covariates()));
    }
    let cfg = FitConfig {
        max_iterations: 15,
        ..FitConfig::new(5, 2)
    };
    let reported: Vec<usize> = PipelineKind::ALL
        .par_iter()
        .map(|&k| run_pipeline(k, &ds, &cfg).map(|o| o.n_params).map_err(|e| format!("{k}: {e}")))
        .collect::<Result<_, _>>()?;
    check(
        structural == expected && reported == expected,
        format!("formula {structural:?}, fitted pipelines {reported:?}, reference {expected:?}"),
    )
}

// ---------------------------------------------------------------- 4

fn em_monotonicity() -> Outcome {
    let sizes = [(50, 50), (100, 50), (500, 50), (1000, 50), (50, 100), (100, 100), (500, 100), (50, 500), (100, 500), (50, 1000)];
    let sigmas = [0.0, 0.5, 1.0, 1.5, 1.0];
    let jobs: Vec<(usize, usize, f64, u64)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(a, &(i, t))| sigmas.iter().enumerate().map(move |(b, &s)| (i, t, s, (a * 5 + b) as u64)))
        .collect();
    let worst: Vec<(f64, usize, bool)> = jobs
        .par_iter()
        .map(|&(n_ind, n_t, sigma_alpha, seed)| {
            let gt = generate(&SynthConfig {
                n_individuals: n_ind,
                n_times: n_t,
                sigma_alpha,
                seed: 1000 + seed,
                ..Default::default()
            })
            .map_err(|e| e.to_string())?;
            let f = fit(&gt.dataset, &FitConfig::new(4, 4).with_seed(seed)).map_err(|e| e.to_string())?;
            let trace = &f.report.loglik_trace;
            let reseeded: Vec<usize> = f.report.reseeded_clusters.iter().map(|r| r.0).collect();
            let worst = (1..trace.len())
                .filter(|j| !reseeded.contains(j))
                .map(|j| (trace[j - 1] - trace[j]) / trace[j - 1].abs())
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((worst, f.report.iterations, f.report.non_monotone_steps.is_empty()))
        })
        .collect::<Result<_, String>>()?;
    let max_drop = worst.iter().map(|w| w.0).fold(f64::NEG_INFINITY, f64::max);
    let flagged = worst.iter().filter(|w| !w.2).count();
    check(
        worst.len() == 50 && max_drop <= 1e-6 && flagged == 0,
        format!("{} fits, largest relative decrease {max_drop:.2e}, {flagged} flagged", worst.len()),
    )
}

// ---------------------------------------------------------------- 5

fn random_params(rng: &mut ChaCha8Rng, k_n: usize, s_n: usize, d_n: usize, l_n: usize) -> ModelParams {
    let mut p = ModelParams::zeros(k_n, s_n, d_n, l_n, 1.0);
    let raw: Vec<f64> = (0..k_n).map(|_| rng.random_range(0.2..1.0)).collect();
    let tot: f64 = raw.iter().sum();
    p.pi = raw.iter().map(|r| r / tot).collect();
    for k in 0..k_n {
        let mut acc = 0.0;
        for s in 0..s_n {
            p.u[k * s_n + s] = acc;
            acc += rng.random_range(1.5..6.0);
            p.v[k * s_n + s] = rng.random_range(-2.0..2.0);
        }
        let mu: f64 = p.u[k * s_n..(k + 1) * s_n].iter().sum::<f64>() / s_n as f64;
        let mv: f64 = p.v[k * s_n..(k + 1) * s_n].iter().sum::<f64>() / s_n as f64;
        for s in 0..s_n {
            p.u[k * s_n + s] -= mu;
            p.v[k * s_n + s] -= mv;
        }
    }
    p.m.iter_mut().for_each(|m| *m = rng.random_range(-2.0..2.0));
    p.alpha.iter_mut().for_each(|a| *a = rng.random_range(-1.0..1.0));
    p.sigma.iter_mut().for_each(|s| *s = rng.random_range(0.3..2.0));
    p
}

/// Sums the complete-data likelihood over every assignment of clusters and segments.
fn enumerate(p: &ModelParams, ds: &PanelDataset) -> (f64, Vec<f64>, Vec<f64>) {
    let (k_n, s_n, n_t, d_n) = (p.n_clusters, p.n_segments, ds.n_times(), p.n_dims);
    let mut ll = 0.0;
    let mut rho = Vec::new();
    let mut r = vec![0.0; ds.n_individuals() * n_t * k_n * s_n];
    for i in 0..ds.n_individuals() {
        let obs: Vec<usize> = (0..n_t).filter(|&t| ds.observed(i, t)).collect();
        let n_assign = s_n.pow(obs.len() as u32);
        let mut total = 0.0;
        let mut by_k = vec![0.0; k_n];
        let mut by_cell = vec![0.0; n_t * k_n * s_n];
        for k in 0..k_n {
            for code in 0..n_assign {
                let mut prob = p.pi[k];
                let mut c = code;
                let mut segs = Vec::new();
                for &t in &obs {
                    let s = c % s_n;
                    c /= s_n;
                    segs.push((t, s));
                    let kappa = segment_prior_probs(p, ds.time()[t])[k * s_n + s];
                    let mu = mean_field(p, ds.x(i, t), k, s);
                    let mut dens = 1.0;
                    for d in 0..d_n {
                        let var = p.sigma(k, s)[d];
                        let e = ds.y(i, t)[d] - mu[d];
                        dens *= (-0.5 * e * e / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                    }
                    prob *= kappa * dens;
                }
                total += prob;
                by_k[k] += prob;
                for (t, s) in segs {
                    by_cell[(t * k_n + k) * s_n + s] += prob;
                }
            }
        }
        ll += total.ln();
        rho.extend(by_k.iter().map(|b| b / total));
        for t in 0..n_t {
            if ds.observed(i, t) {
                for j in 0..k_n * s_n {
                    r[(i * n_t + t) * k_n * s_n + j] = by_cell[t * k_n * s_n + j] / total;
                }
            }
        }
    }
    (ll, rho, r)
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_ll = 0.0f64;
    let mut worst_resp = 0.0f64;
    let mut instances = 0;
    for n_ind in 1..=3 {
        // a single date has no time span to normalize
        for n_t in 2..=3 {
            for k_n in 1..=2 {
                for s_n in 1..=2 {
                    for d_n in 1..=2 {
                        let l_n = 1;
                        let p = random_params(&mut rng, k_n, s_n, d_n, l_n);
                        let cells = n_ind * n_t;
                        let y: Vec<f64> = (0..cells * d_n).map(|_| rng.random_range(-3.0..3.0)).collect();
                        let x: Vec<f64> = (0..cells * l_n).map(|_| rng.random_range(-1.0..1.0)).collect();
                        let mut mask: Vec<bool> = (0..cells).map(|_| rng.random_bool(0.8)).collect();
                        mask[0] = true;
                        let dates = daily_dates(NaiveDate::from_ymd_opt(2021, 3, 1).unwrap(), n_t);
                        let ds = PanelDataset::new((0..n_ind).map(|i| i.to_string()).collect(), dates, d_n, y, x, mask, vec!["x".into()])
                            .map_err(|e| e.to_string())?;
                        let (ll, rho, r) = enumerate(&p, &ds);
                        let resp = e_step(&p, &ds).map_err(|e| e.to_string())?;
                        let ll2 = log_likelihood(&p, &ds).map_err(|e| e.to_string())?;
                        worst_ll = worst_ll.max((ll - resp.log_likelihood).abs() / ll.abs().max(1.0)).max((ll - ll2).abs() / ll.abs().max(1.0));
                        for (a, b) in rho.iter().zip(&resp.rho).chain(r.iter().zip(&resp.r)) {
                            worst_resp = worst_resp.max((a - b).abs());
                        }
                        instances += 1;
                    }
                }
            }
        }
    }

    // weighted regression against duplicated rows
    let mut worst_wls = 0.0f64;
    for trial in 0..20 {
        let (n, l_n, d_n) = (25, 3, 2);
        let x: Vec<f64> = (0..n * l_n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n * d_n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let groups = if trial % 2 == 0 { vec![] } else { vec![vec![0, 1]] };
        let weights: Vec<f64> = w.iter().map(|&c| c as f64).collect();
        let (mut dx, mut dy) = (Vec::new(), Vec::new());
        for (j, &c) in w.iter().enumerate() {
            for _ in 0..c {
                dx.extend_from_slice(&x[j * l_n..(j + 1) * l_n]);
                dy.extend_from_slice(&y[j * d_n..(j + 1) * d_n]);
            }
        }
        let ones = vec![1.0; dx.len() / l_n];
        let solve = |x: &[f64], y: &[f64], w: &[f64]| {
            solve_weighted_regression(&WeightedRegressionProblem {
                x,
                y,
                weights: w,
                n_covariates: l_n,
                n_dims: d_n,
                sum_zero_groups: &groups,
                variance_floor: 1e-8,
            })
        };
        let a = solve(&x, &y, &weights).map_err(|e| e.to_string())?;
        let b = solve(&dx, &dy, &ones).map_err(|e| e.to_string())?;
        for (p, q) in a.m.iter().chain(&a.alpha).chain(&a.sigma).zip(b.m.iter().chain(&b.alpha).chain(&b.sigma)) {
            worst_wls = worst_wls.max((p - q).abs());
        }
    }
    check(
        worst_ll <= 1e-10 && worst_resp <= 1e-10 && worst_wls <= 1e-10,
        format!("{instances} enumerated instances: log-likelihood {worst_ll:.1e}, responsibilities {worst_resp:.1e}; regression vs duplication {worst_wls:.1e}"),
    )
}

// ---------------------------------------------------------------- 6

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let lambda = compute_lambda(365.0, 90.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let s_n = rng.random_range(2..=5);
        let n_t = 60;
        let t_grid: Vec<f64> = (0..n_t).map(|t| t as f64 / (n_t - 1) as f64).collect();
        let weights: Vec<f64> = (0..n_t * s_n).map(|_| rng.random_range(0.0..3.0)).collect();
        let obj = SegmentObjective::new(weights, t_grid, lambda);
        let mut u = vec![0.0; s_n];
        for s in 1..s_n {
            u[s] = u[s - 1] + lambda + rng.random_range(0.01..30.0);
        }
        let mut v: Vec<f64> = (0..s_n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let (mu, mv) = (u.iter().sum::<f64>() / s_n as f64, v.iter().sum::<f64>() / s_n as f64);
        u.iter_mut().for_each(|x| *x -= mu);
        v.iter_mut().for_each(|x| *x -= mv);
        let (gu, gv) = obj.gradient(&u, &v);
        for (which, grad) in [(0, &gu), (1, &gv)] {
            for j in 0..s_n {
                let (mut up, mut vp, mut um, mut vm) = (u.clone(), v.clone(), u.clone(), v.clone());
                let base = if which == 0 { u[j] } else { v[j] };
                let h = 1e-5 * base.abs().max(1.0);
                if which == 0 {
                    up[j] += h;
                    um[j] -= h;
                } else {
                    vp[j] += h;
                    vm[j] -= h;
                }
                let fd = (obj.value(&up, &vp) - obj.value(&um, &vm)) / (2.0 * h);
                let a = grad[j];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    check(worst < 1e-6, format!("20 feasible points, max relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- 7

fn held_out_ordering() -> Outcome {
    let start = Instant::now();
    let gt = generate(&SynthConfig {
        n_individuals: 200,
        n_times: 200,
        sigma_alpha: 1.0,
        seed: 0,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let kinds = [PipelineKind::ClustSeg, PipelineKind::ClustSegThenReg, PipelineKind::Proposed];
    let cv = cross_validate(&gt.dataset, &FitConfig::new(4, 4), &kinds, 5).map_err(|e| e.to_string())?;
    let res = |k| cv.result(k).unwrap();
    let (cs, csr, prop) = (res(PipelineKind::ClustSeg), res(PipelineKind::ClustSegThenReg), res(PipelineKind::Proposed));
    let failures = cs.failures.len() + csr.failures.len() + prop.failures.len();
    let test = welch_t_test(&prop.values, &cs.values).map_err(|e| e.to_string())?;
    check(
        failures == 0 && prop.mean() >= csr.mean() && csr.mean() > cs.mean() && prop.mean() > cs.mean() && test.p_value < 0.05,
        format!(
            "validation LL proposed {:.1}, clust_seg_then_reg {:.1}, clust_seg {:.1}; Welch p = {:.2e}; {:.0}s",
            prop.mean(),
            csr.mean(),
            cs.mean(),
            test.p_value,
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 8

fn best_cluster_map(pred: &[usize], truth: &[usize], k_n: usize) -> Vec<usize> {
    // exhaustive search over relabelings (K is small)
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }
    perms(k_n)
        .into_iter()
        .max_by_key(|perm| pred.iter().zip(truth).filter(|(p, t)| perm[**p] == **t).count())
        .unwrap()
}

fn contiguity() -> Outcome {
    let mut correct = 0;
    let mut monotone = 0;
    let mut truth_monotone = 0;
    let mut n_total = 0;
    let mut aris = Vec::new();
    for seed in 0..3u64 {
        let gt = generate(&SynthConfig {
            n_individuals: 100,
            n_times: 500,
            sigma_alpha: 1.0,
            seed,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let f = fit(&gt.dataset, &FitConfig::new(4, 4).with_seed(seed)).map_err(|e| e.to_string())?;
        let part = map_partition(&f.responsibilities);
        aris.push(joint_ari(&part.joint_labels(), &gt.joint_labels()).map_err(|e| e.to_string())?);
        let map = best_cluster_map(&part.cluster, &gt.clusters, 4);
        for i in 0..100 {
            n_total += 1;
            if (1..500).all(|t| gt.segment(i, t) >= gt.segment(i, t - 1)) {
                truth_monotone += 1;
            }
            if map[part.cluster[i]] != gt.clusters[i] {
                continue;
            }
            correct += 1;
            if (1..500).all(|t| part.segment(i, t) >= part.segment(i, t - 1)) {
                monotone += 1;
            }
        }
    }
    let share = monotone as f64 / correct.max(1) as f64;
    check(
        share >= 0.99,
        format!(
            "{monotone}/{correct} correctly clustered individuals have non-decreasing MAP segments ({:.1}%); \
             generating labels non-decreasing for {truth_monotone}/{n_total}; joint ARI {:.3?}",
            100.0 * share,
            aris
        ),
    )
}

// ---------------------------------------------------------------- 9

fn preprocessing() -> Outcome {
    let dir = manifest_dir().join("tests/fixtures/ridership");
    let text = std::fs::read_to_string(dir.join("config.toml")).map_err(|e| e.to_string())?;
    let config: PreprocessConfig = toml::from_str(&text).map_err(|e| e.to_string())?;
    let file = std::fs::File::open(dir.join("records.csv")).map_err(|e| e.to_string())?;
    let records = read_ridership_csv(file, "records.csv").map_err(|e| e.to_string())?;
    let out = preprocess_ridership(&records, &config).map_err(|e| e.to_string())?;
    let ds = &out.dataset;

    let mut expected = vec![None; 3 * 20];
    let ids = ["A", "C", "E"];
    let mut rdr = csv::Reader::from_path(dir.join("expected.csv")).map_err(|e| e.to_string())?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let i = ids.iter().position(|s| *s == &rec[0]).ok_or("unknown station in expected.csv")?;
        let date: NaiveDate = rec[1].parse().map_err(|e: chrono::ParseError| e.to_string())?;
        let t = (date - NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()).num_days() as usize;
        let num: f64 = rec[2].parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
        let den: f64 = rec[3].parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
        expected[i * 20 + t] = Some((num / den).log10());
    }
    let mut mismatches = Vec::new();
    if ds.individual_ids() != ids {
        mismatches.push(format!("stations {:?}", ds.individual_ids()));
    }
    if ds.n_times() != 20 {
        mismatches.push(format!("{} days", ds.n_times()));
    } else if ds.n_individuals() == 3 {
        for i in 0..3 {
            for t in 0..20 {
                let got = ds.observed(i, t).then(|| ds.y(i, t)[0]);
                if got != expected[i * 20 + t] {
                    mismatches.push(format!("{} day {}: {got:?} vs {:?}", ids[i], t + 1, expected[i * 20 + t]));
                }
            }
        }
    }
    let dropped: Vec<&str> = out.dropped.iter().map(|d| d.station_id.as_str()).collect();
    if dropped != ["B", "D"] {
        mismatches.push(format!("dropped {dropped:?}"));
    }
    check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{} observed values match exactly; dropped {dropped:?}", ds.total_observed())
        } else {
            mismatches.join("; ")
        },
    )
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (3, "parameter counts", parameter_counts),
        (5, "oracle equivalence", oracle_equivalence),
        (6, "segment objective gradient", gradient_check),
        (9, "preprocessing fixture", preprocessing),
        (4, "EM monotonicity", em_monotonicity),
        (1, "synthetic benchmark regime", table_regime),
        (2, "no overfit with inert covariates", no_overfit),
        (7, "held-out likelihood ordering", held_out_ordering),
        (8, "segment contiguity", contiguity),
    ];
    // ACCEPTANCE_CRITERIA=5,9 runs a subset; everything runs by default
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|c| c.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (n, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n} ({name}): PASS - {d} [{secs:.1}s]"),
            Err(d) => {
                println!("criterion {n} ({name}): FAIL - {d} [{secs:.1}s]");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
