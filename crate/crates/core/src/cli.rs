//! Run configuration and the `inspect`, `run` and `synth` commands.
//!
//! Configs are TOML. Exports are comma-separated with a header row: one
//! file per (algorithm, metric) carrying `t,mean,std,ci_lo,ci_hi`, plus a
//! summary table mirrored as JSON.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{filter_cohort, parse_csv, CohortSummary, ColumnSchema, DatasetError, EncodedPatient, FeatureSet};
use crate::environment::SyntheticSpec;
use crate::harness::{
    aggregate, checkpoints, final_summary, run_replay, run_synthetic, CheckpointRow, EpisodeTrace, HarnessError,
    Metric, MetricSeries, SummaryRow, Window, DEFAULT_BASE_SEED, DEFAULT_RUNS, DEFAULT_WINDOW,
};
use crate::policies::{Algorithm, PolicyConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("cannot parse config {path}: {message}")]
    ConfigParse { path: String, message: String },

    #[error(transparent)]
    Data(#[from] DatasetError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("export failed: {0}")]
    Export(String),

    #[error(transparent)]
    Runtime(#[from] HarnessError),
}

impl CliError {
    /// 1 for config and data problems, 2 for numerical failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub const DEFAULT_CHECKPOINTS: [usize; 5] = [500, 1000, 2000, 3000, 4000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Relative paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    #[serde(default)]
    pub feature_set: FeatureSet,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Step counts at which checkpoint rows are reported.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<usize>,
    #[serde(default)]
    pub schema: ColumnSchema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub algorithms: Vec<PolicyConfig>,
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_seed() -> u64 {
    DEFAULT_BASE_SEED
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_checkpoints() -> Vec<usize> {
    DEFAULT_CHECKPOINTS.to_vec()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_path: None,
            feature_set: FeatureSet::Wcda9,
            n_runs: DEFAULT_RUNS,
            window: DEFAULT_WINDOW,
            base_seed: DEFAULT_BASE_SEED,
            output_dir: default_output(),
            checkpoints: default_checkpoints(),
            schema: ColumnSchema::default(),
            synthetic: None,
            algorithms: Vec::new(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Inspect,
    Run,
    Synth,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| CliError::ConfigParse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if let (Some(data), Some(dir)) = (&cfg.data_path, path.parent()) {
            if data.is_relative() {
                cfg.data_path = Some(dir.join(data));
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.output {
            self.output_dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.base_seed = seed;
        }
        if let Some(runs) = o.runs {
            self.n_runs = runs;
        }
    }

    /// Every problem relevant to `cmd`, reported together.
    pub fn problems(&self, cmd: Command) -> Vec<String> {
        let mut out = Vec::new();
        if cmd != Command::Synth && self.data_path.is_none() {
            out.push("data_path is required".to_string());
        }
        if cmd == Command::Inspect {
            return out;
        }
        if self.algorithms.is_empty() {
            out.push("at least one algorithm is required".to_string());
        }
        if self.n_runs == 0 {
            out.push("n_runs must be at least 1".to_string());
        }
        if self.window == 0 {
            out.push("window must be at least 1".to_string());
        }
        let mut labels = BTreeSet::new();
        for alg in &self.algorithms {
            out.extend(alg.problems());
            if !labels.insert(alg.label()) {
                out.push(format!("duplicate algorithm label `{}`; set `name` to disambiguate", alg.label()));
            }
            if alg.label().is_empty() || alg.label().contains(['/', '\\']) {
                out.push(format!("algorithm label `{}` is not a valid file stem", alg.label()));
            }
        }
        if cmd == Command::Synth {
            match &self.synthetic {
                None => out.push("the [synthetic] block is required for synth".to_string()),
                Some(spec) => {
                    out.extend(spec.problems());
                    for alg in &self.algorithms {
                        if alg.algorithm == Algorithm::Wcda {
                            out.push(format!("{}: wcda is not available on synthetic environments", alg.label()));
                        }
                        if alg.algorithm == Algorithm::FixedDose && spec.k < 2 {
                            out.push(format!("{}: fixed_dose needs k >= 2", alg.label()));
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self, cmd: Command) -> Result<(), CliError> {
        let problems = self.problems(cmd);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems))
        }
    }

    fn data_path(&self) -> Result<&Path, CliError> {
        self.data_path
            .as_deref()
            .ok_or_else(|| CliError::Config(vec!["data_path is required".into()]))
    }
}

pub fn cmd_inspect(cfg: &RunConfig) -> Result<CohortSummary, CliError> {
    cfg.validate(Command::Inspect)?;
    let records = parse_csv(cfg.data_path()?, &cfg.schema)?;
    let cohort = filter_cohort(&records, cfg.feature_set);
    Ok(CohortSummary::build(&records, &cohort))
}

/// What a run produced: the summary table and every file written.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: Vec<SummaryRow>,
    pub checkpoints: Vec<CheckpointRow>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_run(cfg: &RunConfig) -> Result<RunReport, CliError> {
    cfg.validate(Command::Run)?;
    let records = parse_csv(cfg.data_path()?, &cfg.schema)?;
    let mut cohorts: HashMap<FeatureSet, Vec<EncodedPatient>> = HashMap::new();
    let mut results = Vec::new();
    for alg in &cfg.algorithms {
        let set = alg.feature_set.unwrap_or(cfg.feature_set);
        let cohort = cohorts.entry(set).or_insert_with(|| filter_cohort(&records, set));
        let traces = run_replay(alg, cohort, cfg.n_runs, cfg.base_seed)?;
        results.push((alg.label(), traces));
    }
    let metrics = [
        (Metric::Accuracy, Window::All),
        (Metric::Accuracy, Window::Last(cfg.window)),
        (Metric::Regret, Window::All),
        (Metric::Regret, Window::Last(cfg.window)),
        (Metric::CumulativeRegret, Window::All),
    ];
    export(cfg, &results, &metrics, "")
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<RunReport, CliError> {
    cfg.validate(Command::Synth)?;
    let spec = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Config(vec!["the [synthetic] block is required for synth".into()]))?;
    let mut results = Vec::new();
    for alg in &cfg.algorithms {
        let traces = run_synthetic(alg, spec, cfg.n_runs, cfg.base_seed)?;
        results.push((alg.label(), traces));
    }
    let metrics = [
        (Metric::CumulativeRegret, Window::All),
        (Metric::Accuracy, Window::All),
        (Metric::Accuracy, Window::Last(cfg.window)),
    ];
    export(cfg, &results, &metrics, "synthetic_")
}

#[derive(Serialize)]
struct SeriesRow {
    t: usize,
    mean: f64,
    std: f64,
    ci_lo: f64,
    ci_hi: f64,
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    n_runs: usize,
    base_seed: u64,
    window: usize,
    summary: &'a [SummaryRow],
    checkpoints: &'a [CheckpointRow],
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Export(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Export(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_series(path: &Path, series: &MetricSeries) -> Result<(), CliError> {
    write_csv(
        path,
        (0..series.len()).map(|i| SeriesRow {
            t: series.t[i],
            mean: series.mean[i],
            std: series.std[i],
            ci_lo: series.ci_lo[i],
            ci_hi: series.ci_hi[i],
        }),
    )
}

fn export(
    cfg: &RunConfig,
    results: &[(String, Vec<EpisodeTrace>)],
    metrics: &[(Metric, Window)],
    prefix: &str,
) -> Result<RunReport, CliError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();
    let mut checkpoint_rows = Vec::new();
    for (label, traces) in results {
        for &(metric, window) in metrics {
            let series = aggregate(traces, metric, window)?;
            let path = dir.join(format!("{prefix}{label}_{}.csv", series.name));
            write_series(&path, &series)?;
            files.push(path);
        }
        checkpoint_rows.extend(checkpoints(label, traces, &cfg.checkpoints)?);
    }
    let summary = final_summary(results)?;

    let summary_csv = dir.join(format!("{prefix}summary.csv"));
    write_csv(&summary_csv, &summary)?;
    let checkpoint_csv = dir.join(format!("{prefix}checkpoints.csv"));
    write_csv(&checkpoint_csv, &checkpoint_rows)?;
    let summary_json = dir.join(format!("{prefix}summary.json"));
    let doc = SummaryDoc {
        n_runs: cfg.n_runs,
        base_seed: cfg.base_seed,
        window: cfg.window,
        summary: &summary,
        checkpoints: &checkpoint_rows,
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Export(e.to_string()))?;
    fs::write(&summary_json, json + "\n").map_err(io_err(&summary_json))?;
    files.extend([summary_csv, checkpoint_csv, summary_json]);

    Ok(RunReport {
        summary,
        checkpoints: checkpoint_rows,
        files,
    })
}

/// Fixed-width rendering of the summary for the terminal.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<16}{:>12}{:>10}{:>12}{:>14}{:>8}\n",
        "algorithm", "accuracy", "±95%", "regret", "total regret", "runs"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<16}{:>11.2}%{:>9.2}%{:>12.4}{:>14.1}{:>8}\n",
            r.algorithm,
            100.0 * r.final_accuracy_mean,
            100.0 * r.final_accuracy_ci,
            r.final_regret_mean,
            r.cumulative_regret_t,
            r.n_runs
        ));
    }
    out
}
