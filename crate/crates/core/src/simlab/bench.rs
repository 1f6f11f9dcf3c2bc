//! Replicated benchmark runs on the two built-in cases.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cases::{Case1, Case2, CASE1_PSI};
use super::dgp::{generate, generate_seeded, Assignment, Simulator};
use super::eval::{decision_accuracy, mc_value_stream, mean_sd, AccuracyReport};
use super::rng::{derive_seed, purpose, stream_rng};
use crate::error::{DtrError, Result};
use crate::fit::MethodTag;
use crate::pipeline::{fit_method, FitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Case1,
    Case2,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Case1 => "case1",
            Suite::Case2 => "case2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "case1" => Some(Suite::Case1),
            "case2" => Some(Suite::Case2),
            _ => None,
        }
    }

    pub fn simulator(self) -> Box<dyn Simulator> {
        match self {
            Suite::Case1 => Box::new(Case1::default()),
            Suite::Case2 => Box::new(Case2::default()),
        }
    }

    pub fn fit_config(self) -> FitConfig {
        match self {
            Suite::Case1 => FitConfig::case1(),
            Suite::Case2 => FitConfig::case2(),
        }
    }

    /// True values of a method's parameters where they are known.
    pub fn truth(self, method: MethodTag) -> Option<Vec<f64>> {
        match (self, method) {
            (Suite::Case1, MethodTag::Q | MethodTag::A1 | MethodTag::A2 | MethodTag::A3 | MethodTag::A4 | MethodTag::Dwols) => {
                Some(CASE1_PSI.to_vec())
            }
            (Suite::Case1, MethodTag::Ipwe | MethodTag::Aipwe) => Some(vec![250.0, 360.0]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchConfig {
    pub suite: Suite,
    pub replications: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub methods: Vec<MethodTag>,
    pub seed: u64,
    /// Monte Carlo draws per fitted regime; 0 skips value estimation.
    pub mc_draws: usize,
    /// Worker threads. Left out of reports so output does not depend on it.
    #[serde(skip)]
    pub jobs: usize,
    #[serde(skip)]
    pub fit: Option<FitConfig>,
}

impl BenchConfig {
    pub fn new(suite: Suite, replications: usize, n_train: usize, methods: Vec<MethodTag>, seed: u64) -> Self {
        Self {
            suite,
            replications,
            n_train,
            n_test: 1000,
            methods,
            seed,
            mc_draws: 0,
            jobs: 1,
            fit: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub method: MethodTag,
    pub error: Option<String>,
    pub parameters: Vec<f64>,
    pub accuracy: Option<AccuracyReport>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: MethodTag,
    pub successes: usize,
    pub failures: usize,
    pub parameter_labels: Vec<String>,
    pub truth: Option<Vec<f64>>,
    pub parameter_mean: Vec<f64>,
    /// `None` with fewer than two successful replicates.
    pub parameter_sd: Option<Vec<f64>>,
    /// Per-stage accuracies followed by the overall accuracy.
    pub accuracy_mean: Vec<f64>,
    pub accuracy_sd: Option<Vec<f64>>,
    pub value_mean: Option<f64>,
    pub value_sd: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub config: BenchConfig,
    pub summaries: Vec<MethodSummary>,
    pub rows: Vec<ReplicateRow>,
}

/// One method's row of a replicate plus the fit warnings it produced.
type RowWithWarnings = (ReplicateRow, Vec<String>);

fn run_replicate(cfg: &BenchConfig, fit_cfg: &FitConfig, sim: &dyn Simulator, r: usize) -> Result<Vec<RowWithWarnings>> {
    let train = generate_seeded(sim, cfg.n_train, cfg.seed, r as u64)?;
    let test = generate(
        sim,
        cfg.n_test,
        Assignment::Observational,
        &mut stream_rng(cfg.seed, purpose::TEST, r as u64),
    )?;
    let oracle = sim.oracle()?;
    let mut local = fit_cfg.clone();
    local.seed = derive_seed(cfg.seed, purpose::FIT).wrapping_add(r as u64);
    let mut out = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let row = match fit_method(m, &train, &local) {
            Ok(fit) => {
                let accuracy = decision_accuracy(&fit.regime, &oracle, &test)?;
                let value = if cfg.mc_draws > 0 {
                    Some(mc_value_stream(sim, &fit.regime, cfg.mc_draws, cfg.seed, r as u64)?.value)
                } else {
                    None
                };
                (
                    ReplicateRow {
                        replicate: r,
                        method: m,
                        error: None,
                        parameters: fit.parameters,
                        accuracy: Some(accuracy),
                        value,
                    },
                    fit.parameter_labels,
                )
            }
            Err(e) => (
                ReplicateRow {
                    replicate: r,
                    method: m,
                    error: Some(e.to_string()),
                    parameters: Vec::new(),
                    accuracy: None,
                    value: None,
                },
                Vec::new(),
            ),
        };
        out.push(row);
    }
    Ok(out)
}

fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Option<Vec<f64>>) {
    let p = rows.first().map_or(0, Vec::len);
    let cols: Vec<Vec<f64>> = (0..p).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
    let mean = cols.iter().map(|c| mean_sd(c).0).collect();
    let sd = (rows.len() >= 2).then(|| cols.iter().map(|c| mean_sd(c).1).collect());
    (mean, sd)
}

/// Runs every replicate on a pool of `jobs` workers. Aggregation happens
/// afterwards in replicate order, so results do not depend on `jobs`.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchmarkReport> {
    if cfg.replications == 0 || cfg.n_train == 0 || cfg.n_test == 0 {
        return Err(DtrError::Config("replications and sample sizes must be positive".into()));
    }
    if cfg.methods.is_empty() {
        return Err(DtrError::Config("no methods requested".into()));
    }
    let sim = cfg.suite.simulator();
    let fit_cfg = cfg.fit.clone().unwrap_or_else(|| cfg.suite.fit_config());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| DtrError::Config(format!("cannot start worker pool: {e}")))?;
    let per_rep: Vec<Result<Vec<RowWithWarnings>>> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_replicate(cfg, &fit_cfg, sim.as_ref(), r))
            .collect()
    });
    let mut rows = Vec::new();
    let mut labels: Vec<Vec<String>> = vec![Vec::new(); cfg.methods.len()];
    for rep in per_rep {
        for (k, (row, l)) in rep?.into_iter().enumerate() {
            if labels[k].is_empty() && !l.is_empty() {
                labels[k] = l;
            }
            rows.push(row);
        }
    }
    let mut summaries = Vec::with_capacity(cfg.methods.len());
    for (k, &m) in cfg.methods.iter().enumerate() {
        let mine: Vec<&ReplicateRow> = rows.iter().filter(|r| r.method == m).collect();
        let ok: Vec<&ReplicateRow> = mine.iter().copied().filter(|r| r.error.is_none()).collect();
        let failures = mine.len() - ok.len();
        if failures * 5 > cfg.replications {
            let last = mine
                .iter()
                .rev()
                .find_map(|r| r.error.clone())
                .unwrap_or_default();
            return Err(DtrError::TooManyFailures {
                failed: failures,
                total: cfg.replications,
                last: format!("{m}: {last}"),
            });
        }
        let params: Vec<Vec<f64>> = ok
            .iter()
            .map(|r| r.parameters.clone())
            .filter(|p| p.len() == labels[k].len())
            .collect();
        let (parameter_mean, parameter_sd) = column_stats(&params);
        let acc: Vec<Vec<f64>> = ok
            .iter()
            .filter_map(|r| r.accuracy.as_ref())
            .map(|a| {
                let mut v = a.per_stage.clone();
                v.push(a.overall);
                v
            })
            .collect();
        let (accuracy_mean, accuracy_sd) = column_stats(&acc);
        let values: Vec<f64> = ok.iter().filter_map(|r| r.value).collect();
        let (value_mean, value_sd) = if values.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_sd(&values);
            (Some(m), (values.len() >= 2).then_some(s))
        };
        let truth = cfg.suite.truth(m).filter(|t| t.len() == labels[k].len());
        summaries.push(MethodSummary {
            method: m,
            successes: ok.len(),
            failures,
            parameter_labels: labels[k].clone(),
            truth,
            parameter_mean,
            parameter_sd,
            accuracy_mean,
            accuracy_sd,
            value_mean,
            value_sd,
        });
    }
    Ok(BenchmarkReport {
        config: cfg.clone(),
        summaries,
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl BenchmarkReport {
    /// `method,parameter,truth,mean,sd,successes,failures`.
    pub fn parameters_csv(&self) -> String {
        let mut s = String::from("method,parameter,truth,mean,sd,successes,failures\n");
        for m in &self.summaries {
            for (c, label) in m.parameter_labels.iter().enumerate() {
                let truth = m.truth.as_ref().map(|t| t[c]);
                let sd = m.parameter_sd.as_ref().map(|v| v[c]);
                let mean = m.parameter_mean.get(c).copied();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    m.method,
                    label,
                    opt(truth),
                    opt(mean),
                    opt(sd),
                    m.successes,
                    m.failures
                );
            }
        }
        s
    }

    /// `method,measure,mean,sd` with `accu1..accuK`, `accu` and `value`.
    pub fn accuracy_csv(&self) -> String {
        let mut s = String::from("method,measure,mean,sd\n");
        for m in &self.summaries {
            let k = m.accuracy_mean.len().saturating_sub(1);
            for (c, mean) in m.accuracy_mean.iter().enumerate() {
                let name = if c == k { "accu".to_string() } else { format!("accu{}", c + 1) };
                let sd = m.accuracy_sd.as_ref().map(|v| v[c]);
                let _ = writeln!(s, "{},{name},{mean},{}", m.method, opt(sd));
            }
            if m.value_mean.is_some() {
                let _ = writeln!(s, "{},value,{},{}", m.method, opt(m.value_mean), opt(m.value_sd));
            }
        }
        s
    }

    /// One line per replicate and method, for plotting.
    pub fn replicates_csv(&self) -> String {
        let mut s = String::from("replicate,method,status,accu,value,parameters\n");
        for r in &self.rows {
            let params: Vec<String> = r.parameters.iter().map(f64::to_string).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.replicate,
                r.method,
                if r.error.is_some() { "failed" } else { "ok" },
                opt(r.accuracy.as_ref().map(|a| a.overall)),
                opt(r.value),
                params.join(";")
            );
        }
        s
    }

    pub fn render_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "suite {}  replications {}  n_train {}  n_test {}  seed {}",
            c.suite.name(),
            c.replications,
            c.n_train,
            c.n_test,
            c.seed
        );
        let _ = writeln!(s, "\nEstimates (mean, SD across replications)");
        let _ = writeln!(s, "{:<8}{:<16}{:>12}{:>14}{:>12}", "method", "parameter", "truth", "mean", "sd");
        for m in &self.summaries {
            for (k, label) in m.parameter_labels.iter().enumerate() {
                let truth = m.truth.as_ref().map_or("-".to_string(), |t| format!("{:.4}", t[k]));
                let mean = m.parameter_mean.get(k).map_or("NA".to_string(), |v| format!("{v:.4}"));
                let sd = m.parameter_sd.as_ref().map_or("NA".to_string(), |v| format!("{:.4}", v[k]));
                let _ = writeln!(s, "{:<8}{:<16}{:>12}{:>14}{:>12}", m.method.name(), label, truth, mean, sd);
            }
        }
        let _ = writeln!(s, "\nDecision accuracy [%] (SD)");
        for m in &self.summaries {
            let k = m.accuracy_mean.len().saturating_sub(1);
            let cells: Vec<String> = m
                .accuracy_mean
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let name = if i == k { "accu".to_string() } else { format!("accu{}", i + 1) };
                    let sd = m.accuracy_sd.as_ref().map_or("NA".to_string(), |s| format!("{:.2}", 100.0 * s[i]));
                    format!("{name} {:.2} ({sd})", 100.0 * v)
                })
                .collect();
            let _ = writeln!(s, "{:<8}{}", m.method.name(), cells.join("  "));
        }
        if self.summaries.iter().any(|m| m.value_mean.is_some()) {
            let _ = writeln!(s, "\nMonte Carlo value ({} draws per regime)", c.mc_draws);
            for m in &self.summaries {
                let _ = writeln!(
                    s,
                    "{:<8}{:>12}{:>12}",
                    m.method.name(),
                    m.value_mean.map_or("NA".to_string(), |v| format!("{v:.2}")),
                    m.value_sd.map_or("NA".to_string(), |v| format!("{v:.2}"))
                );
            }
        }
        let failed: usize = self.summaries.iter().map(|m| m.failures).sum();
        if failed > 0 {
            let _ = writeln!(s, "\n{failed} method fits failed; see replicates.csv");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_replicate_reports_na() {
        let cfg = BenchConfig::new(Suite::Case1, 1, 200, vec![MethodTag::Q], 4);
        let rep = run_benchmark(&cfg).unwrap();
        assert!(rep.summaries[0].parameter_sd.is_none());
        assert!(rep.parameters_csv().lines().nth(1).unwrap().contains(",NA,"));
    }

    #[test]
    fn jobs_do_not_change_results() {
        let mut cfg = BenchConfig::new(Suite::Case1, 4, 200, vec![MethodTag::A3, MethodTag::Ctree], 9);
        let one = run_benchmark(&cfg).unwrap();
        cfg.jobs = 3;
        let three = run_benchmark(&cfg).unwrap();
        assert_eq!(one.parameters_csv(), three.parameters_csv());
        assert_eq!(one.accuracy_csv(), three.accuracy_csv());
        assert_eq!(one.replicates_csv(), three.replicates_csv());
    }
}
