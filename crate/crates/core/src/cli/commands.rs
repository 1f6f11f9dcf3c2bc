use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{CaseArg, Command, GeneratorArgs};
use crate::data::Dataset;
use crate::direct::SearchResult;
use crate::error::{DtrError, Result};
use crate::fit::{MethodTag, StageFit};
use crate::io::{load_dataset, read_text, write_text, write_wide};
use crate::pipeline::{alignment_segments, fit_method, FitConfig};
use crate::regime::RegimeSpec;
use crate::simlab::dgp::{generate, regret_audit, DgpSpec, Simulator};
use crate::simlab::eval::{bootstrap_se, decision_accuracy, mc_value, AccuracyReport, McValueReport};
use crate::simlab::rng::{purpose, stream_rng, RNG_NAME};
use crate::simlab::{generate_seeded, run_benchmark, Assignment, BenchConfig, Case1, Case2, Suite};

/// Hex SHA-256 of the given parts, separated by newlines.
pub fn config_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn io_err(e: std::io::Error) -> DtrError {
    DtrError::io("<stdout>", e)
}

/// Generator plus the text that identifies it in config hashes.
fn simulator(g: &GeneratorArgs) -> Result<(Box<dyn Simulator>, String)> {
    match (&g.case, &g.spec) {
        (Some(CaseArg::Case1), _) => Ok((Box::new(Case1::default()), "case1".into())),
        (Some(CaseArg::Case2), _) => Ok((Box::new(Case2::default()), "case2".into())),
        (None, Some(path)) => {
            let text = read_text(path)?;
            let spec = DgpSpec::from_toml(&text)?;
            Ok((Box::new(spec.compile()?), text))
        }
        (None, None) => Err(DtrError::Config("give --case or --spec".into())),
    }
}

fn load_regime(path: &Path, sim: &dyn Simulator) -> Result<(crate::regime::Regime, String)> {
    let text = read_text(path)?;
    let spec = RegimeSpec::from_json(&text)?;
    Ok((spec.resolve(sim.schema())?, text))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

pub fn run(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Simulate { generator, n, seed, out } => simulate(&generator, n, seed.seed, out.as_deref(), stdout),
        Command::Fit {
            method,
            data,
            long,
            config,
            case,
            bootstrap,
            seed,
            out,
            regime_out,
            json,
        } => {
            let opts = FitOptions {
                method,
                data: &data,
                long,
                config: config.as_deref(),
                case,
                bootstrap,
                seed: seed.seed,
            };
            let report = fit(&opts)?;
            let text = to_json(&report)?;
            if let Some(p) = out {
                write_text(p, &text)?;
            }
            if let Some(p) = regime_out {
                write_text(p, &(report.regime.to_json()? + "\n"))?;
            }
            let shown = if json { text } else { report.render() };
            stdout.write_all(shown.as_bytes()).map_err(io_err)
        }
        Command::Evaluate {
            regime,
            generator,
            draws,
            seed,
            out,
            json,
        } => {
            let (sim, sim_text) = simulator(&generator)?;
            let (reg, reg_text) = load_regime(&regime, sim.as_ref())?;
            let value = mc_value(sim.as_ref(), &reg, draws, seed.seed)?;
            let report = EvaluateReport {
                command: "evaluate",
                generator: sim.name().to_string(),
                seed: seed.seed,
                rng: RNG_NAME,
                config_hash: config_hash(&[&sim_text, &reg_text, &draws.to_string()]),
                report: value,
            };
            let text = to_json(&report)?;
            if let Some(p) = out {
                write_text(p, &text)?;
            }
            let shown = if json {
                text
            } else {
                format!(
                    "generator {}  seed {}  config {}\nregime: {}\nvalue {:.4} (MC s.e. {:.4}, {} draws)\n",
                    report.generator,
                    report.seed,
                    &report.config_hash[..12],
                    report.report.regime,
                    report.report.value,
                    report.report.se,
                    report.report.draws
                )
            };
            stdout.write_all(shown.as_bytes()).map_err(io_err)
        }
        Command::Accuracy {
            regime,
            generator,
            n_test,
            seed,
            out,
            json,
        } => {
            let (sim, sim_text) = simulator(&generator)?;
            let (reg, reg_text) = load_regime(&regime, sim.as_ref())?;
            if n_test == 0 {
                return Err(DtrError::Config("--n-test must be positive".into()));
            }
            let test = generate(
                sim.as_ref(),
                n_test,
                Assignment::Observational,
                &mut stream_rng(seed.seed, purpose::TEST, 0),
            )?;
            let acc = decision_accuracy(&reg, &sim.oracle()?, &test)?;
            let report = AccuracyCmdReport {
                command: "accuracy",
                generator: sim.name().to_string(),
                seed: seed.seed,
                rng: RNG_NAME,
                config_hash: config_hash(&[&sim_text, &reg_text, &n_test.to_string()]),
                report: acc,
            };
            let text = to_json(&report)?;
            if let Some(p) = out {
                write_text(p, &text)?;
            }
            let shown = if json {
                text
            } else {
                let mut s = format!(
                    "generator {}  seed {}  config {}  n_test {}\n",
                    report.generator,
                    report.seed,
                    &report.config_hash[..12],
                    n_test
                );
                for (j, a) in report.report.per_stage.iter().enumerate() {
                    let _ = write!(s, "accu{} {:.2}%  ", j + 1, 100.0 * a);
                }
                let _ = writeln!(s, "accu {:.2}%", 100.0 * report.report.overall);
                s
            };
            stdout.write_all(shown.as_bytes()).map_err(io_err)
        }
        Command::Benchmark {
            suite,
            replications,
            n_train,
            n_test,
            methods,
            mc_draws,
            config,
            seed,
            jobs,
            out,
        } => {
            let suite = match suite {
                CaseArg::Case1 => Suite::Case1,
                CaseArg::Case2 => Suite::Case2,
            };
            let methods = if methods.is_empty() { default_methods(suite) } else { methods };
            let mut cfg = BenchConfig::new(suite, replications, n_train, methods, seed.seed);
            cfg.n_test = n_test;
            cfg.mc_draws = mc_draws;
            cfg.jobs = jobs;
            let fit_text = match &config {
                Some(p) => {
                    let text = read_text(p)?;
                    cfg.fit = Some(FitConfig::from_toml(&text)?);
                    text
                }
                None => toml::to_string(&suite.fit_config()).map_err(|e| DtrError::Config(e.to_string()))?,
            };
            let report = run_benchmark(&cfg)?;
            std::fs::create_dir_all(&out).map_err(|e| DtrError::io(&out, e))?;
            let hash = config_hash(&[&serde_json::to_string(&cfg)?, &fit_text]);
            let text = report.render_text();
            write_text(out.join("parameters.csv"), &report.parameters_csv())?;
            write_text(out.join("accuracy.csv"), &report.accuracy_csv())?;
            write_text(out.join("replicates.csv"), &report.replicates_csv())?;
            write_text(out.join("report.txt"), &text)?;
            write_text(
                out.join("report.json"),
                &to_json(&BenchCmdReport {
                    command: "benchmark",
                    seed: cfg.seed,
                    rng: RNG_NAME,
                    config_hash: hash.clone(),
                    config: &cfg,
                    summaries: &report.summaries,
                })?,
            )?;
            let shown = format!("{text}config {}\ntables written to {}\n", &hash[..12], out.display());
            stdout.write_all(shown.as_bytes()).map_err(io_err)
        }
    }
}

fn default_methods(suite: Suite) -> Vec<MethodTag> {
    use MethodTag::*;
    match suite {
        Suite::Case1 => vec![Q, A1, A2, A3, A4, Dwols, Ipwe, Aipwe, Ctree],
        Suite::Case2 => vec![Q, A3, Ctree, Bowl],
    }
}

fn simulate(g: &GeneratorArgs, n: usize, seed: u64, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    if n == 0 {
        return Err(DtrError::Config("-n must be positive".into()));
    }
    let (sim, _) = simulator(g)?;
    let data = generate_seeded(sim.as_ref(), n, seed, 0)?;
    if g.spec.is_some() {
        regret_audit(sim.as_ref(), &data)?;
    }
    let text = write_wide(&data)?;
    match out {
        Some(p) => write_text(p, &text),
        None => stdout.write_all(text.as_bytes()).map_err(io_err),
    }
}

#[derive(Serialize)]
struct EvaluateReport {
    command: &'static str,
    generator: String,
    seed: u64,
    rng: &'static str,
    config_hash: String,
    report: McValueReport,
}

#[derive(Serialize)]
struct AccuracyCmdReport {
    command: &'static str,
    generator: String,
    seed: u64,
    rng: &'static str,
    config_hash: String,
    report: AccuracyReport,
}

#[derive(Serialize)]
struct BenchCmdReport<'a> {
    command: &'static str,
    seed: u64,
    rng: &'static str,
    config_hash: String,
    config: &'a BenchConfig,
    summaries: &'a [crate::simlab::MethodSummary],
}

struct FitOptions<'a> {
    method: MethodTag,
    data: &'a Path,
    long: bool,
    config: Option<&'a Path>,
    case: Option<CaseArg>,
    bootstrap: Option<usize>,
    seed: u64,
}

#[derive(Debug, Serialize)]
pub struct ParameterRow {
    pub label: String,
    pub estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct BootstrapSummary {
    pub replicates: usize,
    pub failures: usize,
    pub sign_aligned: bool,
    pub note: &'static str,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub command: &'static str,
    pub method: MethodTag,
    pub data: String,
    pub rows: usize,
    pub seed: u64,
    pub rng: &'static str,
    pub config_hash: String,
    pub clipped_propensities: usize,
    pub parameters: Vec<ParameterRow>,
    pub rules: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub value_means: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSummary>,
    pub warnings: Vec<String>,
    pub regime: RegimeSpec,
}

fn fit(o: &FitOptions<'_>) -> Result<FitReport> {
    let (mut cfg, cfg_text) = match (o.config, o.case) {
        (Some(p), _) => {
            let text = read_text(p)?;
            (FitConfig::from_toml(&text)?, text)
        }
        (None, Some(CaseArg::Case1)) => (FitConfig::case1(), "case1".to_string()),
        (None, Some(CaseArg::Case2)) => (FitConfig::case2(), "case2".to_string()),
        (None, None) => {
            return Err(DtrError::Config(
                "fit needs a model specification: --config FILE or --case case1|case2".into(),
            ))
        }
    };
    cfg.seed = o.seed;
    let data: Dataset = load_dataset(o.data, o.long)?;
    let out = fit_method(o.method, &data, &cfg)?;
    let boot = match o.bootstrap {
        None => None,
        Some(b) => {
            let segs = alignment_segments(&out);
            let report = bootstrap_se(
                |d: &Dataset| fit_method(o.method, d, &cfg).map(|r| r.parameters),
                &data,
                b,
                o.seed,
                &segs,
            )?;
            Some(report)
        }
    };
    let parameters = out
        .parameter_labels
        .iter()
        .enumerate()
        .map(|(i, l)| ParameterRow {
            label: l.clone(),
            estimate: out.parameters[i],
            se: boot.as_ref().map(|b| b.se[i]),
        })
        .collect();
    let toml_cfg = toml::to_string(&cfg).map_err(|e| DtrError::Config(e.to_string()))?;
    let fit = out.fit.as_ref();
    Ok(FitReport {
        command: "fit",
        method: o.method,
        data: o.data.display().to_string(),
        rows: data.len(),
        seed: o.seed,
        rng: RNG_NAME,
        config_hash: config_hash(&[o.method.name(), &cfg_text, &toml_cfg, &o.seed.to_string()]),
        clipped_propensities: out.clipped_propensities(),
        parameters,
        rules: out.regime.rules().iter().map(|r| r.describe()).collect(),
        value_means: fit.map(|f| f.value_means.clone()).unwrap_or_default(),
        stages: fit.map(|f| f.stages.clone()).unwrap_or_default(),
        search: out.search.clone(),
        bootstrap: boot.map(|b| BootstrapSummary {
            replicates: b.replicates,
            failures: b.failures,
            sign_aligned: b.sign_aligned,
            note: "standard errors from the nonparametric bootstrap over trajectories",
        }),
        warnings: fit.map(|f| f.warnings.clone()).unwrap_or_default(),
        regime: out.regime.to_spec(data.schema()),
    })
}

impl FitReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "method {}  data {} ({} rows)  seed {}  config {}",
            self.method,
            self.data,
            self.rows,
            self.seed,
            &self.config_hash[..12]
        );
        let _ = writeln!(s, "propensities clipped: {}", self.clipped_propensities);
        if !self.parameters.is_empty() {
            let _ = writeln!(s, "\n{:<24}{:>14}{:>12}", "parameter", "estimate", "se");
            for p in &self.parameters {
                let se = p.se.map_or("-".to_string(), |v| format!("{v:.4}"));
                let _ = writeln!(s, "{:<24}{:>14.4}{:>12}", p.label, p.estimate, se);
            }
        }
        let _ = writeln!(s, "\nrules");
        for (j, r) in self.rules.iter().enumerate() {
            let _ = writeln!(s, "  stage {}: {r}", j + 1);
        }
        if let Some(sr) = &self.search {
            let _ = writeln!(s, "\nestimated value {:.4} ({} evaluations)", sr.value.value, sr.evaluations);
        }
        if !self.value_means.is_empty() {
            let cols: Vec<String> = self
                .value_means
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    if j + 1 == self.value_means.len() {
                        format!("Y {v:.2}")
                    } else {
                        format!("V{} {v:.2}", j + 1)
                    }
                })
                .collect();
            let _ = writeln!(s, "\nvalue column means: {}", cols.join("  "));
        }
        if let Some(b) = &self.bootstrap {
            let _ = writeln!(
                s,
                "\nbootstrap: {} replicates, {} failed{}",
                b.replicates,
                b.failures,
                if b.sign_aligned { ", signs aligned" } else { "" }
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}
