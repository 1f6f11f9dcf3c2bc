//! Regime evaluation against a known generator, and bootstrap SEs.

use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::dgp::{draw_trajectory, Assignment, Simulator};
use super::rng::{purpose, stream_rng};
use crate::data::Dataset;
use crate::error::{DtrError, Result};
use crate::regime::Regime;

#[derive(Debug, Clone, Serialize)]
pub struct McValueReport {
    pub value: f64,
    pub draws: usize,
    pub se: f64,
    pub regime: String,
}

/// Mean outcome of `b` trajectories simulated with actions forced to
/// `regime`.
pub fn mc_value(sim: &dyn Simulator, regime: &Regime, b: usize, seed: u64) -> Result<McValueReport> {
    mc_value_stream(sim, regime, b, seed, 0)
}

/// [`mc_value`] on replicate stream `stream`.
pub fn mc_value_stream(sim: &dyn Simulator, regime: &Regime, b: usize, seed: u64, stream: u64) -> Result<McValueReport> {
    if b == 0 {
        return Err(DtrError::Config("Monte Carlo size must be at least 1".into()));
    }
    let k = sim.schema().stage_count();
    if regime.stage_count() != k {
        return Err(DtrError::Shape(format!(
            "stage mismatch: regime has {} rules, generator has {k} stages",
            regime.stage_count()
        )));
    }
    let mut rng = stream_rng(seed, purpose::MC, stream);
    let mut ys = Vec::with_capacity(b);
    for _ in 0..b {
        ys.push(draw_trajectory(sim, Assignment::Regime(regime), &mut rng)?.outcome());
    }
    let (mean, sd) = mean_sd(&ys);
    Ok(McValueReport {
        value: mean,
        draws: b,
        se: sd / (b as f64).sqrt(),
        regime: regime
            .rules()
            .iter()
            .map(|r| r.describe())
            .collect::<Vec<_>>()
            .join("; "),
    })
}

/// Sample mean and SD (denominator `n − 1`; zero for a single value).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
    (m, (ss / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct AccuracyReport {
    /// Share of test rows reaching stage `j` whose fitted action matches.
    pub per_stage: Vec<f64>,
    /// Share of rows matching at every stage they reach.
    pub overall: f64,
    pub test_size: usize,
}

pub fn decision_accuracy(fitted: &Regime, oracle: &Regime, test: &Dataset) -> Result<AccuracyReport> {
    let k = test.stage_count();
    for (what, r) in [("fitted", fitted), ("oracle", oracle)] {
        if r.stage_count() != k {
            return Err(DtrError::Shape(format!(
                "stage mismatch: {what} regime has {} rules, data has {k} stages",
                r.stage_count()
            )));
        }
    }
    let mut hits = vec![0usize; k];
    let mut reach = vec![0usize; k];
    let mut all = 0usize;
    for t in test.trajectories() {
        let mut every = true;
        for j in 1..=t.stage_count() {
            let h = t.history(j)?;
            reach[j - 1] += 1;
            if fitted.rule(j).action(&h) == oracle.rule(j).action(&h) {
                hits[j - 1] += 1;
            } else {
                every = false;
            }
        }
        all += usize::from(every);
    }
    Ok(AccuracyReport {
        per_stage: hits
            .iter()
            .zip(&reach)
            .map(|(h, r)| if *r == 0 { 0.0 } else { *h as f64 / *r as f64 })
            .collect(),
        overall: all as f64 / test.len() as f64,
        test_size: test.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapReport {
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub replicates: usize,
    pub failures: usize,
    /// Whether normalized-linear segments were sign-aligned.
    pub sign_aligned: bool,
}

/// Nonparametric bootstrap over trajectories. Each segment in `align` is a
/// normalized coefficient block whose replicate is flipped when it points
/// away from the full-sample estimate.
pub fn bootstrap_se<F>(estimator: F, data: &Dataset, b: usize, seed: u64, align: &[Range<usize>]) -> Result<BootstrapReport>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    if b < 2 {
        return Err(DtrError::Config("bootstrap needs at least 2 replicates".into()));
    }
    let estimate = estimator(data)?;
    let p = estimate.len();
    let n = data.len();
    let results: Vec<Result<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, purpose::BOOTSTRAP, r as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut est = estimator(&data.select(&rows)?)?;
            if est.len() != p {
                return Err(DtrError::Shape("bootstrap estimate changed length".into()));
            }
            for seg in align {
                let dot: f64 = est[seg.clone()].iter().zip(&estimate[seg.clone()]).map(|(a, b)| a * b).sum();
                if dot < 0.0 {
                    est[seg.clone()].iter_mut().for_each(|v| *v = -*v);
                }
            }
            Ok(est)
        })
        .collect();
    let mut ok = Vec::with_capacity(b);
    let mut last = String::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => last = e.to_string(),
        }
    }
    let failures = b - ok.len();
    if failures * 5 > b || ok.len() < 2 {
        return Err(DtrError::TooManyFailures {
            failed: failures,
            total: b,
            last,
        });
    }
    let se = (0..p)
        .map(|c| mean_sd(&ok.iter().map(|v| v[c]).collect::<Vec<_>>()).1)
        .collect();
    Ok(BootstrapReport {
        estimate,
        se,
        replicates: ok.len(),
        failures,
        sign_aligned: !align.is_empty(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Schema, StageRecord, Trajectory};
    use crate::simlab::cases::{Case1, Case2};
    use rand_distr::StandardNormal;

    fn normals(n: usize) -> Dataset {
        let mut rng = stream_rng(1, 99, 0);
        let schema = Schema::new(vec![vec!["X".into()]]).unwrap();
        let trajs = (0..n)
            .map(|_| {
                let y: f64 = rng.sample(StandardNormal);
                Trajectory::new(vec![StageRecord::new(vec![0.0], 0)], y).unwrap()
            })
            .collect();
        Dataset::new(schema, trajs).unwrap()
    }

    #[test]
    fn constant_estimator_has_zero_se() {
        let d = normals(30);
        let r = bootstrap_se(|_| Ok(vec![1.0]), &d, 50, 2, &[]).unwrap();
        assert_eq!(r.se, vec![0.0]);
    }

    #[test]
    fn sample_mean_se() {
        let d = normals(100);
        let mean = |d: &Dataset| Ok(vec![d.outcomes().iter().sum::<f64>() / d.len() as f64]);
        let r = bootstrap_se(mean, &d, 500, 3, &[]).unwrap();
        assert!((r.se[0] - 0.1).abs() < 0.025, "{}", r.se[0]);
    }

    #[test]
    fn failing_estimator_is_reported() {
        let d = normals(10);
        let first = d.get(0).outcome();
        let r = bootstrap_se(
            |b: &Dataset| {
                if b.get(0).outcome() != first {
                    Err(DtrError::Degenerate("x".into()))
                } else {
                    Ok(vec![0.0])
                }
            },
            &d,
            40,
            1,
            &[],
        );
        assert!(matches!(r, Err(DtrError::TooManyFailures { .. })));
    }

    #[test]
    fn oracle_accuracy_is_one_and_inversion_is_zero() {
        let sim = Case1::default();
        let test = crate::simlab::dgp::generate_seeded(&sim, 200, 4, 0).unwrap();
        let o = sim.oracle().unwrap();
        let r = decision_accuracy(&o, &o, &test).unwrap();
        assert_eq!(r.overall, 1.0);
        let s = sim.schema();
        let inverted = Regime::new(vec![
            crate::regime::Rule::threshold(s, 1, "L1", 250.0, crate::regime::Direction::Above).unwrap(),
            o.rule(2).clone(),
        ])
        .unwrap();
        let r = decision_accuracy(&inverted, &o, &test).unwrap();
        assert_eq!(r.per_stage[0], 0.0);
        assert_eq!(r.per_stage[1], 1.0);
        assert_eq!(r.overall, 0.0);
    }

    #[test]
    fn stage_mismatch_is_an_error() {
        let test = crate::simlab::dgp::generate_seeded(&Case1::default(), 10, 4, 0).unwrap();
        let o2 = Case2::default().oracle().unwrap();
        assert!(matches!(
            mc_value(&Case1::default(), &o2, 10, 1),
            Err(DtrError::Shape(_))
        ));
        assert!(decision_accuracy(&o2, &o2, &test).is_err());
    }
}
