//! Episode runner and the evaluation metrics: running accuracy and regret
//! (windowed or over the whole history), cumulative regret, and
//! across-run mean/std/95% CI aggregation.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{shuffle, EncodedPatient};
use crate::environment::{EnvError, Environment, ReplayEnvironment, SyntheticEnvironment, SyntheticSpec};
use crate::policies::{make_policy, PolicyConfig, PolicyError};

pub const DEFAULT_RUNS: usize = 100;
pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_BASE_SEED: u64 = 42;
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Policy(#[from] PolicyError),

    #[error(transparent)]
    Env(#[from] EnvError),

    #[error("cannot aggregate heterogeneous traces: {0}")]
    Heterogeneous(String),

    #[error("no traces to aggregate")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    pub context_id: usize,
    pub arm: usize,
    pub optimal_arm: usize,
    pub reward: f64,
    pub per_step_regret: f64,
}

impl TraceStep {
    pub fn correct(&self) -> bool {
        self.per_step_regret == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub fingerprint: String,
    pub seed: u64,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub fn fingerprint(cfg: &PolicyConfig) -> String {
    serde_json::to_string(cfg).unwrap_or_else(|_| cfg.label())
}

/// One pass over `env` with a fresh policy; nothing carries over between
/// calls.
pub fn run_episode(cfg: &PolicyConfig, env: &dyn Environment, seed: u64) -> Result<EpisodeTrace, HarnessError> {
    let mut policy = make_policy(cfg, env.dim().max(1), env.num_arms(), seed)?;
    let rs = policy.reward_structure();
    let mut steps = Vec::with_capacity(env.horizon());
    for t in 0..env.horizon() {
        let x = env.context(t)?;
        let sel = policy.select(x)?;
        let fb = env.feedback(t, sel.arm, rs)?;
        policy.observe(x, sel.arm, fb.reward)?;
        steps.push(TraceStep {
            context_id: env.context_id(t)?,
            arm: sel.arm,
            optimal_arm: fb.optimal_arm,
            reward: fb.reward,
            per_step_regret: fb.per_step_regret,
        });
    }
    Ok(EpisodeTrace {
        steps,
        fingerprint: fingerprint(cfg),
        seed,
    })
}

/// Seed used for run `i`.
pub fn run_seed(base_seed: u64, i: usize) -> u64 {
    base_seed.wrapping_add(i as u64)
}

/// `n_runs` independently shuffled replays; run `i` shuffles and runs with
/// `base_seed + i`. Output order is run order regardless of scheduling.
pub fn run_replay(
    cfg: &PolicyConfig,
    cohort: &[EncodedPatient],
    n_runs: usize,
    base_seed: u64,
) -> Result<Vec<EpisodeTrace>, HarnessError> {
    (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let seed = run_seed(base_seed, i);
            let env = ReplayEnvironment::new(shuffle(cohort, seed))?;
            run_episode(cfg, &env, seed)
        })
        .collect()
}

/// `n_runs` synthetic episodes sharing the arm coefficients; contexts and
/// noise are drawn from `base_seed + i`.
pub fn run_synthetic(
    cfg: &PolicyConfig,
    spec: &SyntheticSpec,
    n_runs: usize,
    base_seed: u64,
) -> Result<Vec<EpisodeTrace>, HarnessError> {
    (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let seed = run_seed(base_seed, i);
            let env = SyntheticEnvironment::new(spec, seed)?;
            run_episode(cfg, &env, seed)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    All,
    Last(usize),
}

impl Window {
    pub fn suffix(self) -> String {
        match self {
            Window::All => "all".to_string(),
            Window::Last(n) => format!("w{n}"),
        }
    }
}

/// Mean over `[max(0, t−w+1), t]` (or `[0, t]`) at every `t`.
///
/// Uses prefix sums, so integer-valued inputs give exactly `sum / n`.
pub fn running_mean(values: &[f64], window: Window) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v;
        prefix.push(acc);
    }
    (0..values.len())
        .map(|t| {
            let lo = match window {
                Window::All => 0,
                Window::Last(w) => (t + 1).saturating_sub(w.max(1)),
            };
            (prefix[t + 1] - prefix[lo]) / (t + 1 - lo) as f64
        })
        .collect()
}

pub fn running_accuracy(trace: &EpisodeTrace, window: Window) -> Vec<f64> {
    let hits: Vec<f64> = trace.steps.iter().map(|s| if s.correct() { 1.0 } else { 0.0 }).collect();
    running_mean(&hits, window)
}

pub fn running_regret(trace: &EpisodeTrace, window: Window) -> Vec<f64> {
    let regrets: Vec<f64> = trace.steps.iter().map(|s| s.per_step_regret).collect();
    running_mean(&regrets, window)
}

/// Prefix sums of per-step regret.
pub fn cumulative_regret(trace: &EpisodeTrace) -> Vec<f64> {
    trace
        .steps
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.per_step_regret;
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    Regret,
    CumulativeRegret,
}

impl Metric {
    pub fn series(self, trace: &EpisodeTrace, window: Window) -> Vec<f64> {
        match self {
            Metric::Accuracy => running_accuracy(trace, window),
            Metric::Regret => running_regret(trace, window),
            Metric::CumulativeRegret => cumulative_regret(trace),
        }
    }

    pub fn name(self, window: Window) -> String {
        match self {
            Metric::Accuracy => format!("accuracy_{}", window.suffix()),
            Metric::Regret => format!("regret_{}", window.suffix()),
            Metric::CumulativeRegret => "cumulative_regret".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries {
    pub name: String,
    pub t: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub n_runs: usize,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(f64::NAN)
    }

    pub fn half_width(&self, i: usize) -> f64 {
        (self.ci_hi[i] - self.ci_lo[i]) / 2.0
    }
}

/// Mean and sample standard deviation. Values are summed in sorted order,
/// so the result does not depend on how runs were ordered.
pub fn mean_std(column: &mut [f64]) -> (f64, f64) {
    column.sort_by(f64::total_cmp);
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    if column.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = column.iter().map(|v| (v - mean) * (v - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

/// Pointwise across-run statistics with `mean ± 1.96·std/√N` bands.
/// Accuracy bands are clipped to `[0, 1]`.
pub fn aggregate(traces: &[EpisodeTrace], metric: Metric, window: Window) -> Result<MetricSeries, HarnessError> {
    let first = traces.first().ok_or(HarnessError::Empty)?;
    for tr in traces {
        if tr.len() != first.len() {
            return Err(HarnessError::Heterogeneous(format!(
                "horizon {} vs {}",
                tr.len(),
                first.len()
            )));
        }
        if tr.fingerprint != first.fingerprint {
            return Err(HarnessError::Heterogeneous("policy configs differ".into()));
        }
    }
    let per_run: Vec<Vec<f64>> = traces.iter().map(|tr| metric.series(tr, window)).collect();
    let n = traces.len();
    let horizon = first.len();
    let mut out = MetricSeries {
        name: metric.name(window),
        t: (0..horizon).collect(),
        mean: Vec::with_capacity(horizon),
        std: Vec::with_capacity(horizon),
        ci_lo: Vec::with_capacity(horizon),
        ci_hi: Vec::with_capacity(horizon),
        n_runs: n,
    };
    let mut column = vec![0.0; n];
    for t in 0..horizon {
        for (c, run) in column.iter_mut().zip(&per_run) {
            *c = run[t];
        }
        let (mean, std) = mean_std(&mut column);
        let half = Z_95 * std / (n as f64).sqrt();
        let (mut lo, mut hi) = (mean - half, mean + half);
        if metric == Metric::Accuracy {
            lo = lo.max(0.0);
            hi = hi.min(1.0);
        }
        out.mean.push(mean);
        out.std.push(std);
        out.ci_lo.push(lo.min(mean));
        out.ci_hi.push(hi.max(mean));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub final_accuracy_mean: f64,
    /// Half-width of the 95% band.
    pub final_accuracy_ci: f64,
    pub final_regret_mean: f64,
    pub cumulative_regret_t: f64,
    pub n_runs: usize,
}

/// End-of-horizon comparison across algorithms.
pub fn final_summary(results: &[(String, Vec<EpisodeTrace>)]) -> Result<Vec<SummaryRow>, HarnessError> {
    results
        .iter()
        .map(|(label, traces)| {
            let acc = aggregate(traces, Metric::Accuracy, Window::All)?;
            let reg = aggregate(traces, Metric::Regret, Window::All)?;
            let cum = aggregate(traces, Metric::CumulativeRegret, Window::All)?;
            let last = acc.len().saturating_sub(1);
            Ok(SummaryRow {
                algorithm: label.clone(),
                final_accuracy_mean: acc.last_mean(),
                final_accuracy_ci: if acc.is_empty() { 0.0 } else { Z_95 * acc.std[last] / (acc.n_runs as f64).sqrt() },
                final_regret_mean: reg.last_mean(),
                cumulative_regret_t: cum.last_mean(),
                n_runs: traces.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointRow {
    pub algorithm: String,
    /// Number of steps taken.
    pub t: usize,
    pub accuracy_mean: f64,
    pub accuracy_ci: f64,
    pub regret_mean: f64,
    pub regret_ci: f64,
    pub cumulative_regret_mean: f64,
    pub cumulative_regret_ci: f64,
}

/// Whole-history accuracy, regret and total regret after `t` steps, for
/// each `t` within the horizon.
pub fn checkpoints(label: &str, traces: &[EpisodeTrace], at: &[usize]) -> Result<Vec<CheckpointRow>, HarnessError> {
    let acc = aggregate(traces, Metric::Accuracy, Window::All)?;
    let reg = aggregate(traces, Metric::Regret, Window::All)?;
    let cum = aggregate(traces, Metric::CumulativeRegret, Window::All)?;
    Ok(at
        .iter()
        .filter(|&&t| t >= 1 && t <= acc.len())
        .map(|&t| {
            let i = t - 1;
            CheckpointRow {
                algorithm: label.to_string(),
                t,
                accuracy_mean: acc.mean[i],
                accuracy_ci: Z_95 * acc.std[i] / (acc.n_runs as f64).sqrt(),
                regret_mean: reg.mean[i],
                regret_ci: reg.half_width(i),
                cumulative_regret_mean: cum.mean[i],
                cumulative_regret_ci: cum.half_width(i),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DoseLevel;
    use crate::policies::{linucb_select, linucb_update, LinUcbArm, RewardStructure, TieBreaker};
    use proptest::prelude::*;

    fn cohort(levels: &[u8]) -> Vec<EncodedPatient> {
        levels
            .iter()
            .enumerate()
            .map(|(i, &l)| EncodedPatient {
                row: i,
                id: format!("p{i}"),
                features: vec![1.0],
                true_dose_mg_week: 35.0,
                true_level: DoseLevel::new(l).unwrap(),
            })
            .collect()
    }

    fn trace_from_regrets(regrets: &[f64]) -> EpisodeTrace {
        EpisodeTrace {
            steps: regrets
                .iter()
                .enumerate()
                .map(|(i, &r)| TraceStep {
                    context_id: i,
                    arm: 0,
                    optimal_arm: 0,
                    reward: -r,
                    per_step_regret: r,
                })
                .collect(),
            fingerprint: "x".into(),
            seed: 0,
        }
    }

    #[test]
    fn fixed_dose_episode() {
        let env = ReplayEnvironment::new(cohort(&[1, 0, 1])).unwrap();
        let tr = run_episode(&PolicyConfig::fixed_dose(), &env, 0).unwrap();
        let rewards: Vec<f64> = tr.steps.iter().map(|s| s.reward).collect();
        assert_eq!(rewards, vec![0.0, -1.0, 0.0]);
        let again = run_episode(&PolicyConfig::fixed_dose(), &env, 0).unwrap();
        assert_eq!(tr, again);
    }

    #[test]
    fn linucb_two_step_trace_matches_hand_computation() {
        // d = 1 contexts x = (1); truths (1, 0) under binary rewards
        let env = ReplayEnvironment::new(cohort(&[1, 0])).unwrap();
        let tr = run_episode(&PolicyConfig::linucb(RewardStructure::Binary), &env, 0).unwrap();
        // step 0: all scores equal → arm 0, wrong (truth 1) → r = −1
        // step 1: p₀ = −0.5 + √0.5 ≈ 0.207 < p₁ = p₂ = 1 → arm 1, wrong (truth 0)
        assert_eq!(tr.steps.iter().map(|s| s.arm).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(tr.steps.iter().map(|s| s.reward).collect::<Vec<_>>(), vec![-1.0, -1.0]);

        let mut arms = vec![LinUcbArm::new(1).unwrap(); 3];
        let mut tie = TieBreaker::Lowest;
        let first = linucb_select(&arms, &[1.0], 1.0, &mut tie).unwrap();
        linucb_update(&mut arms, first.arm, &[1.0], -1.0).unwrap();
        assert_eq!(linucb_select(&arms, &[1.0], 1.0, &mut tie).unwrap().arm, tr.steps[1].arm);
    }

    #[test]
    fn running_metric_cases() {
        let tr = trace_from_regrets(&[0.0, 1.0, 0.0]);
        let acc = running_accuracy(&tr, Window::All);
        assert_eq!(acc, vec![1.0, 0.5, 2.0 / 3.0]);
        assert_eq!(running_accuracy(&tr, Window::Last(1)), vec![1.0, 0.0, 1.0]);
        assert_eq!(running_accuracy(&trace_from_regrets(&[0.0; 5]), Window::Last(2)), vec![1.0; 5]);
        assert_eq!(running_accuracy(&tr, Window::Last(2)), vec![1.0, 0.5, 0.5]);

        let tri = trace_from_regrets(&[0.0, 2.0, 0.0]);
        assert_eq!(running_regret(&tri, Window::All), vec![0.0, 1.0, 2.0 / 3.0]);

        assert_eq!(cumulative_regret(&trace_from_regrets(&[1.0, 0.0, 1.0])), vec![1.0, 1.0, 2.0]);
        assert_eq!(cumulative_regret(&trace_from_regrets(&[0.0; 4])), vec![0.0; 4]);
    }

    #[test]
    fn aggregate_cases() {
        let one = aggregate(&[trace_from_regrets(&[0.0, 1.0])], Metric::Accuracy, Window::All).unwrap();
        assert_eq!(one.ci_lo, one.mean);
        assert_eq!(one.ci_hi, one.mean);
        assert_eq!(one.std, vec![0.0, 0.0]);

        // constant series 0.6 and 0.8 via running regret
        let a = trace_from_regrets(&[0.6; 4]);
        let b = trace_from_regrets(&[0.8; 4]);
        let s = aggregate(&[a.clone(), b.clone()], Metric::Regret, Window::All).unwrap();
        let expected_std = ((0.1f64.powi(2) * 2.0) / 1.0).sqrt();
        for t in 0..4 {
            assert!((s.mean[t] - 0.7).abs() < 1e-12);
            assert!((s.std[t] - expected_std).abs() < 1e-12);
            let half = 1.96 * expected_std / 2f64.sqrt();
            assert!((s.ci_hi[t] - 0.7 - half).abs() < 1e-12);
        }

        let short = trace_from_regrets(&[0.0]);
        assert!(matches!(aggregate(&[a.clone(), short], Metric::Regret, Window::All), Err(HarnessError::Heterogeneous(_))));
        let mut other = b;
        other.fingerprint = "y".into();
        assert!(aggregate(&[a, other], Metric::Regret, Window::All).is_err());
        assert!(matches!(aggregate(&[], Metric::Regret, Window::All), Err(HarnessError::Empty)));
    }

    #[test]
    fn replay_runs_are_reproducible() {
        let c = cohort(&[0, 1, 2, 1, 1, 0, 2, 2, 1, 0]);
        let cfg = PolicyConfig::linucb(RewardStructure::Trinary);
        let a = run_replay(&cfg, &c, 8, 42).unwrap();
        let b = run_replay(&cfg, &c, 8, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[3].seed, 45);
        for tr in &a {
            let mut ids: Vec<usize> = tr.steps.iter().map(|s| s.context_id).collect();
            ids.sort_unstable();
            assert_eq!(ids, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn fixed_dose_summary_is_medium_fraction() {
        let c = cohort(&[0, 1, 2, 1, 1]);
        let traces = run_replay(&PolicyConfig::fixed_dose(), &c, 3, 0).unwrap();
        let rows = final_summary(&[("fixed_dose".into(), traces)]).unwrap();
        assert_eq!(rows[0].final_accuracy_mean, 0.6);
        assert_eq!(rows[0].final_accuracy_ci, 0.0);
        assert_eq!(rows[0].cumulative_regret_t, 2.0);
    }

    #[test]
    fn checkpoint_rows() {
        let traces = vec![trace_from_regrets(&[0.0, 1.0, 1.0, 0.0])];
        let rows = checkpoints("a", &traces, &[2, 4, 500]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].accuracy_mean, 0.5);
        assert_eq!(rows[1].cumulative_regret_mean, 2.0);
    }

    fn binary_trace() -> impl Strategy<Value = EpisodeTrace> {
        proptest::collection::vec(any::<bool>(), 1..300)
            .prop_map(|hits| trace_from_regrets(&hits.iter().map(|&h| if h { 0.0 } else { 1.0 }).collect::<Vec<_>>()))
    }

    proptest! {
        #[test]
        fn binary_duality_exact(tr in binary_trace(), w in 1usize..150) {
            for window in [Window::All, Window::Last(w)] {
                let acc = running_accuracy(&tr, window);
                let reg = running_regret(&tr, window);
                for (a, r) in acc.iter().zip(&reg) {
                    prop_assert_eq!(a + r, 1.0);
                }
            }
        }

        #[test]
        fn aggregate_permutation_invariant(
            runs in proptest::collection::vec(proptest::collection::vec(0.0f64..2.0, 20), 2..8),
            rot in 0usize..8,
        ) {
            let traces: Vec<EpisodeTrace> = runs.iter().map(|r| trace_from_regrets(r)).collect();
            let mut rotated = traces.clone();
            rotated.rotate_left(rot % traces.len());
            for metric in [Metric::Accuracy, Metric::Regret, Metric::CumulativeRegret] {
                let a = aggregate(&traces, metric, Window::Last(5)).unwrap();
                let b = aggregate(&rotated, metric, Window::Last(5)).unwrap();
                prop_assert_eq!(&a, &b);
                for t in 0..a.len() {
                    prop_assert!(a.ci_lo[t] <= a.mean[t] && a.mean[t] <= a.ci_hi[t]);
                }
            }
        }
    }
}
