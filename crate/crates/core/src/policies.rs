//! Decision policies: fixed-dose, the WCDA clinical formula, disjoint
//! LinUCB and pseudo-reward LinUCB (LinPRUCB), each usable with binary or
//! trinary rewards.
//!
//! LinUCB keeps one ridge model per arm:
//! ```text
//!   A_a = I + Σ x xᵀ      b_a = Σ r x      θ_a = A_a⁻¹ b_a
//!   p_a(x) = θ_aᵀ x + α √(xᵀ A_a⁻¹ x)
//! ```
//! LinPRUCB additionally feeds every non-chosen arm a clamped optimistic
//! pseudo-reward through a decaying accumulator:
//! ```text
//!   p   = clamp(W_aᵀ x + β √(xᵀ Q̂_a⁻¹ x), r_min, 0)
//!   V̂_a ← η V̂_a + x xᵀ      Ẑ_a ← η Ẑ_a + p x
//!   Q̂_a = I + V_a + V̂_a     W_a = Q̂_a⁻¹ (Z_a + Ẑ_a)
//! ```

use std::fmt;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{bucketize_dose, wcda_covariates, DatasetError, DoseLevel, FeatureSet, PatientRecord};
use crate::linalg::{dot, LinalgError, SpdMatrix, Vector};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error("invalid policy config: {0}")]
    Config(String),

    #[error("arm {arm} out of range for {num_arms} arms")]
    InvalidArm { arm: usize, num_arms: usize },

    #[error("record is missing required WCDA field `{0}`")]
    MissingField(&'static str),

    #[error("predicted dose cannot be bucketized: {0}")]
    Dose(#[from] DatasetError),

    #[error("non-finite score for arm {0}")]
    NonFiniteScore(usize),
}

/// Intercept, age (decades), height (cm), weight (kg), Asian, Black or
/// African American, missing or mixed race, enzyme inducer, amiodarone.
/// The weekly dose is the square of the linear form.
pub const DEFAULT_WCDA_COEFFICIENTS: [f64; 9] =
    [4.0376, -0.2546, 0.0118, 0.0134, -0.6752, 0.4060, 0.0443, 1.2799, -0.5695];

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_ETA: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardStructure {
    /// 0 when correct, −1 otherwise.
    #[default]
    Binary,
    /// −|pred − truth| in levels.
    Trinary,
}

impl RewardStructure {
    pub fn r_min(self) -> f64 {
        match self {
            RewardStructure::Binary => -1.0,
            RewardStructure::Trinary => -2.0,
        }
    }

    pub fn reward(self, pred: DoseLevel, truth: DoseLevel) -> f64 {
        self.reward_for_arm(pred.index(), truth.index())
    }

    pub fn reward_for_arm(self, pred: usize, truth: usize) -> f64 {
        if pred == truth {
            return 0.0;
        }
        match self {
            RewardStructure::Binary => -1.0,
            RewardStructure::Trinary => -(pred.abs_diff(truth) as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    FixedDose,
    Wcda,
    Linucb,
    Linprucb,
    /// Uniformly random arm; reference point for regret slopes.
    Random,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::FixedDose => "fixed_dose",
            Algorithm::Wcda => "wcda",
            Algorithm::Linucb => "linucb",
            Algorithm::Linprucb => "linprucb",
            Algorithm::Random => "random",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    Lowest,
    /// Uniform among exactly tied arms, seeded per episode.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Label used in exports; derived from the algorithm when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub reward: RewardStructure,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Falls back to the run-level feature set when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_set: Option<FeatureSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wcda_coefficients: Option<Vec<f64>>,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// Online zero-mean/unit-variance scaling of bandit inputs.
    #[serde(default)]
    pub standardize: bool,
    /// LinPRUCB only. `false` keeps V̂ and Ẑ empty.
    #[serde(default = "default_true")]
    pub pseudo_rewards: bool,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_true() -> bool {
    true
}

impl PolicyConfig {
    pub fn new(algorithm: Algorithm, reward: RewardStructure) -> Self {
        let linprucb = algorithm == Algorithm::Linprucb;
        Self {
            name: None,
            algorithm,
            reward,
            alpha: DEFAULT_ALPHA,
            beta: linprucb.then_some(DEFAULT_BETA),
            eta: linprucb.then_some(DEFAULT_ETA),
            feature_set: None,
            wcda_coefficients: None,
            tie_break: TieBreak::Lowest,
            standardize: false,
            pseudo_rewards: true,
        }
    }

    pub fn fixed_dose() -> Self {
        Self::new(Algorithm::FixedDose, RewardStructure::Binary)
    }

    pub fn wcda() -> Self {
        Self::new(Algorithm::Wcda, RewardStructure::Binary)
    }

    pub fn linucb(reward: RewardStructure) -> Self {
        Self::new(Algorithm::Linucb, reward)
    }

    pub fn linprucb(reward: RewardStructure) -> Self {
        Self::new(Algorithm::Linprucb, reward)
    }

    pub fn with_feature_set(mut self, set: FeatureSet) -> Self {
        self.feature_set = Some(set);
        self
    }

    /// `linucbt`, `linprucbt-11` and so on.
    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        let mut label = self.algorithm.to_string();
        if matches!(self.algorithm, Algorithm::Linucb | Algorithm::Linprucb)
            && self.reward == RewardStructure::Trinary
        {
            label.push('t');
        }
        if self.feature_set == Some(FeatureSet::Wcda11) {
            label.push_str("-11");
        }
        label
    }

    pub fn beta_or_default(&self) -> f64 {
        self.beta.unwrap_or(DEFAULT_BETA)
    }

    pub fn eta_or_default(&self) -> f64 {
        self.eta.unwrap_or(DEFAULT_ETA)
    }

    pub fn coefficients(&self) -> &[f64] {
        self.wcda_coefficients.as_deref().unwrap_or(&DEFAULT_WCDA_COEFFICIENTS)
    }

    /// Every consistency problem, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let label = self.label();
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            out.push(format!("{label}: alpha must be a nonnegative number"));
        }
        let linprucb = self.algorithm == Algorithm::Linprucb;
        if let Some(beta) = self.beta {
            if !linprucb {
                out.push(format!("{label}: beta only applies to linprucb"));
            } else if !(beta >= 0.0 && beta.is_finite()) {
                out.push(format!("{label}: beta must be a nonnegative number"));
            }
        }
        if let Some(eta) = self.eta {
            if !linprucb {
                out.push(format!("{label}: eta only applies to linprucb"));
            } else if !(0.0..1.0).contains(&eta) {
                out.push(format!("{label}: eta must lie in [0, 1)"));
            }
        }
        if let Some(coeffs) = &self.wcda_coefficients {
            if self.algorithm != Algorithm::Wcda {
                out.push(format!("{label}: wcda_coefficients only apply to wcda"));
            } else if coeffs.len() != DEFAULT_WCDA_COEFFICIENTS.len() {
                out.push(format!(
                    "{label}: wcda needs {} coefficients including the intercept, got {}",
                    DEFAULT_WCDA_COEFFICIENTS.len(),
                    coeffs.len()
                ));
            }
        }
        out
    }
}

/// Outcome of one selection; `scores` is empty for non-scoring policies.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub arm: usize,
    pub scores: Vec<f64>,
}

pub trait Policy: Send {
    fn select(&mut self, x: &[f64]) -> Result<Selection, PolicyError>;

    fn observe(&mut self, x: &[f64], arm: usize, reward: f64) -> Result<(), PolicyError>;

    fn reward_structure(&self) -> RewardStructure;

    fn num_arms(&self) -> usize;
}

pub enum TieBreaker {
    Lowest,
    Random(ChaCha8Rng),
}

impl TieBreaker {
    pub fn new(mode: TieBreak, seed: u64) -> Self {
        match mode {
            TieBreak::Lowest => TieBreaker::Lowest,
            TieBreak::Random => TieBreaker::Random(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    /// Index of the maximum score. Exact ties resolve per the mode.
    pub fn argmax(&mut self, scores: &[f64]) -> Result<usize, PolicyError> {
        if let Some(i) = scores.iter().position(|s| s.is_nan()) {
            return Err(PolicyError::NonFiniteScore(i));
        }
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        match self {
            TieBreaker::Lowest => Ok(best),
            TieBreaker::Random(rng) => {
                let tied: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == scores[best]).collect();
                Ok(*tied.choose(rng).unwrap_or(&best))
            }
        }
    }
}

impl fmt::Debug for TieBreaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TieBreaker::Lowest => f.write_str("Lowest"),
            TieBreaker::Random(_) => f.write_str("Random"),
        }
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<(), PolicyError> {
    if expected != actual {
        return Err(LinalgError::DimensionMismatch { expected, actual }.into());
    }
    Ok(())
}

fn check_arm(arm: usize, num_arms: usize) -> Result<(), PolicyError> {
    if arm >= num_arms {
        return Err(PolicyError::InvalidArm { arm, num_arms });
    }
    Ok(())
}

// ── Baselines ───────────────────────────────────────────────────────────

/// Always the medium level (35 mg/week).
pub fn fixed_dose_select(_x: &[f64]) -> DoseLevel {
    DoseLevel::MEDIUM
}

#[derive(Debug)]
pub struct FixedDose {
    reward: RewardStructure,
    num_arms: usize,
}

impl Policy for FixedDose {
    fn select(&mut self, x: &[f64]) -> Result<Selection, PolicyError> {
        Ok(Selection {
            arm: fixed_dose_select(x).index(),
            scores: Vec::new(),
        })
    }

    fn observe(&mut self, _x: &[f64], arm: usize, _reward: f64) -> Result<(), PolicyError> {
        check_arm(arm, self.num_arms)
    }

    fn reward_structure(&self) -> RewardStructure {
        self.reward
    }

    fn num_arms(&self) -> usize {
        self.num_arms
    }
}

/// `coeffs · covariates`; the square of this is the weekly dose.
pub fn wcda_linear_form(covariates: &[f64], coeffs: &[f64]) -> f64 {
    dot(&covariates[..coeffs.len()], coeffs)
}

/// Weekly dose in mg predicted by the clinical formula.
pub fn wcda_predict(rec: &PatientRecord, coeffs: &[f64]) -> Result<f64, PolicyError> {
    if rec.age_decade.is_none() {
        return Err(PolicyError::MissingField("age"));
    }
    if rec.height_cm.is_none() {
        return Err(PolicyError::MissingField("height"));
    }
    if rec.weight_kg.is_none() {
        return Err(PolicyError::MissingField("weight"));
    }
    let cov = wcda_covariates(rec).ok_or(PolicyError::MissingField("covariates"))?;
    Ok(wcda_linear_form(&cov, coeffs).powi(2))
}

#[derive(Debug)]
pub struct Wcda {
    coeffs: Vec<f64>,
    reward: RewardStructure,
}

impl Wcda {
    pub fn predict_dose(&self, x: &[f64]) -> Result<f64, PolicyError> {
        if x.len() < self.coeffs.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.coeffs.len(),
                actual: x.len(),
            }
            .into());
        }
        Ok(wcda_linear_form(x, &self.coeffs).powi(2))
    }
}

impl Policy for Wcda {
    fn select(&mut self, x: &[f64]) -> Result<Selection, PolicyError> {
        let dose = self.predict_dose(x)?;
        Ok(Selection {
            arm: bucketize_dose(dose)?.index(),
            scores: Vec::new(),
        })
    }

    fn observe(&mut self, _x: &[f64], arm: usize, _reward: f64) -> Result<(), PolicyError> {
        check_arm(arm, 3)
    }

    fn reward_structure(&self) -> RewardStructure {
        self.reward
    }

    fn num_arms(&self) -> usize {
        3
    }
}

pub struct UniformRandom {
    rng: ChaCha8Rng,
    num_arms: usize,
    reward: RewardStructure,
}

impl Policy for UniformRandom {
    fn select(&mut self, _x: &[f64]) -> Result<Selection, PolicyError> {
        Ok(Selection {
            arm: self.rng.random_range(0..self.num_arms),
            scores: Vec::new(),
        })
    }

    fn observe(&mut self, _x: &[f64], arm: usize, _reward: f64) -> Result<(), PolicyError> {
        check_arm(arm, self.num_arms)
    }

    fn reward_structure(&self) -> RewardStructure {
        self.reward
    }

    fn num_arms(&self) -> usize {
        self.num_arms
    }
}

// ── LinUCB ──────────────────────────────────────────────────────────────

/// Per-arm ridge statistics for disjoint LinUCB.
#[derive(Debug, Clone, PartialEq)]
pub struct LinUcbArm {
    /// `I + Σ x xᵀ` over this arm's pulls.
    pub a: SpdMatrix,
    /// `Σ r x` over this arm's pulls.
    pub b: Vector,
}

impl LinUcbArm {
    pub fn new(dim: usize) -> Result<Self, LinalgError> {
        Ok(Self {
            a: SpdMatrix::identity(dim)?,
            b: vec![0.0; dim],
        })
    }

    pub fn theta(&self) -> Result<Vector, LinalgError> {
        self.a.solve(&self.b)
    }

    /// `(θᵀx, xᵀA⁻¹x)` from a single factorization.
    pub fn estimate(&self, x: &[f64]) -> Result<(f64, f64), LinalgError> {
        let chol = self.a.cholesky()?;
        let theta = chol.solve(&self.b)?;
        Ok((dot(&theta, x), chol.quad_form_inv(x)?))
    }
}

pub fn linucb_select(
    arms: &[LinUcbArm],
    x: &[f64],
    alpha: f64,
    tie: &mut TieBreaker,
) -> Result<Selection, PolicyError> {
    let scores = arms
        .iter()
        .map(|arm| {
            check_dim(arm.b.len(), x.len())?;
            let (mean, width) = arm.estimate(x)?;
            Ok(mean + alpha * width.sqrt())
        })
        .collect::<Result<Vec<f64>, PolicyError>>()?;
    let arm = tie.argmax(&scores)?;
    Ok(Selection { arm, scores })
}

/// Only the pulled arm changes.
pub fn linucb_update(arms: &mut [LinUcbArm], arm: usize, x: &[f64], reward: f64) -> Result<(), PolicyError> {
    check_arm(arm, arms.len())?;
    let state = &mut arms[arm];
    check_dim(state.b.len(), x.len())?;
    state.a.rank_one_update_in_place(x, 1.0)?;
    for (b, xi) in state.b.iter_mut().zip(x) {
        *b += reward * xi;
    }
    Ok(())
}

#[derive(Debug)]
pub struct LinUcb {
    pub arms: Vec<LinUcbArm>,
    alpha: f64,
    reward: RewardStructure,
    tie: TieBreaker,
}

impl LinUcb {
    pub fn new(dim: usize, num_arms: usize, alpha: f64, reward: RewardStructure, tie: TieBreaker) -> Result<Self, PolicyError> {
        let arms = (0..num_arms).map(|_| LinUcbArm::new(dim)).collect::<Result<_, _>>()?;
        Ok(Self { arms, alpha, reward, tie })
    }
}

impl Policy for LinUcb {
    fn select(&mut self, x: &[f64]) -> Result<Selection, PolicyError> {
        linucb_select(&self.arms, x, self.alpha, &mut self.tie)
    }

    fn observe(&mut self, x: &[f64], arm: usize, reward: f64) -> Result<(), PolicyError> {
        linucb_update(&mut self.arms, arm, x, reward)
    }

    fn reward_structure(&self) -> RewardStructure {
        self.reward
    }

    fn num_arms(&self) -> usize {
        self.arms.len()
    }
}

// ── LinPRUCB ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct LinPrUcbArm {
    /// Real-reward design accumulator `Σ x xᵀ`.
    pub v: SpdMatrix,
    /// Decaying pseudo-reward design accumulator.
    pub v_hat: SpdMatrix,
    pub z: Vector,
    pub z_hat: Vector,
    pub w: Vector,
    /// `I + V + V̂`, refreshed after every update.
    pub q_hat: SpdMatrix,
}

impl LinPrUcbArm {
    pub fn new(dim: usize) -> Result<Self, LinalgError> {
        Ok(Self {
            v: SpdMatrix::zeros(dim)?,
            v_hat: SpdMatrix::zeros(dim)?,
            z: vec![0.0; dim],
            z_hat: vec![0.0; dim],
            w: vec![0.0; dim],
            q_hat: SpdMatrix::identity(dim)?,
        })
    }

    /// `(Wᵀx, xᵀQ̂⁻¹x)` under the current statistics.
    pub fn estimate(&self, x: &[f64]) -> Result<(f64, f64), LinalgError> {
        Ok((dot(&self.w, x), self.q_hat.quad_form_inv(x)?))
    }

    fn refresh(&mut self) -> Result<(), LinalgError> {
        self.q_hat = SpdMatrix::identity_plus(&[&self.v, &self.v_hat])?;
        let rhs: Vector = self.z.iter().zip(&self.z_hat).map(|(a, b)| a + b).collect();
        self.w = self.q_hat.solve(&rhs)?;
        Ok(())
    }
}

/// Pseudo-reward knobs for the non-chosen arms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoRewardParams {
    pub beta: f64,
    pub eta: f64,
    /// Lower clamp bound; the upper bound is 0.
    pub r_min: f64,
    pub enabled: bool,
}

impl PseudoRewardParams {
    pub fn from_config(cfg: &PolicyConfig) -> Self {
        Self {
            beta: cfg.beta_or_default(),
            eta: cfg.eta_or_default(),
            r_min: cfg.reward.r_min(),
            enabled: cfg.pseudo_rewards,
        }
    }
}

pub fn linprucb_select(
    arms: &[LinPrUcbArm],
    x: &[f64],
    alpha: f64,
    tie: &mut TieBreaker,
) -> Result<Selection, PolicyError> {
    let scores = arms
        .iter()
        .map(|arm| {
            check_dim(arm.w.len(), x.len())?;
            let (mean, width) = arm.estimate(x)?;
            Ok(mean + alpha * width.sqrt())
        })
        .collect::<Result<Vec<f64>, PolicyError>>()?;
    let arm = tie.argmax(&scores)?;
    Ok(Selection { arm, scores })
}

/// Applies one step of real and pseudo feedback. Returns the pseudo-reward
/// fed to each arm (`None` for the chosen arm, or when disabled).
///
/// Pseudo-rewards use the arm's `W` and `Q̂` from before this step.
pub fn linprucb_update(
    arms: &mut [LinPrUcbArm],
    chosen: usize,
    x: &[f64],
    reward: f64,
    params: &PseudoRewardParams,
) -> Result<Vec<Option<f64>>, PolicyError> {
    check_arm(chosen, arms.len())?;
    let mut pseudo = vec![None; arms.len()];
    for (a, arm) in arms.iter_mut().enumerate() {
        check_dim(arm.w.len(), x.len())?;
        if a == chosen {
            arm.v.rank_one_update_in_place(x, 1.0)?;
            for (z, xi) in arm.z.iter_mut().zip(x) {
                *z += reward * xi;
            }
        } else if params.enabled {
            let (mean, width) = arm.estimate(x)?;
            let optimistic = mean + params.beta * width.sqrt();
            if optimistic.is_nan() {
                return Err(PolicyError::NonFiniteScore(a));
            }
            let p = optimistic.min(0.0).max(params.r_min);
            arm.v_hat.rank_one_update_in_place(x, params.eta)?;
            for (z, xi) in arm.z_hat.iter_mut().zip(x) {
                *z = params.eta * *z + p * xi;
            }
            pseudo[a] = Some(p);
        }
        arm.refresh()?;
    }
    Ok(pseudo)
}

#[derive(Debug)]
pub struct LinPrUcb {
    pub arms: Vec<LinPrUcbArm>,
    alpha: f64,
    params: PseudoRewardParams,
    reward: RewardStructure,
    tie: TieBreaker,
}

impl LinPrUcb {
    pub fn new(
        dim: usize,
        num_arms: usize,
        alpha: f64,
        params: PseudoRewardParams,
        reward: RewardStructure,
        tie: TieBreaker,
    ) -> Result<Self, PolicyError> {
        let arms = (0..num_arms).map(|_| LinPrUcbArm::new(dim)).collect::<Result<_, _>>()?;
        Ok(Self {
            arms,
            alpha,
            params,
            reward,
            tie,
        })
    }
}

impl Policy for LinPrUcb {
    fn select(&mut self, x: &[f64]) -> Result<Selection, PolicyError> {
        linprucb_select(&self.arms, x, self.alpha, &mut self.tie)
    }

    fn observe(&mut self, x: &[f64], arm: usize, reward: f64) -> Result<(), PolicyError> {
        linprucb_update(&mut self.arms, arm, x, reward, &self.params).map(|_| ())
    }

    fn reward_structure(&self) -> RewardStructure {
        self.reward
    }

    fn num_arms(&self) -> usize {
        self.arms.len()
    }
}

// ── Input scaling ───────────────────────────────────────────────────────

/// Welford running moments per feature.
#[derive(Debug, Clone)]
pub struct RunningScaler {
    count: u64,
    mean: Vector,
    m2: Vector,
}

impl RunningScaler {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn update(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    /// Features with zero observed variance (the intercept, or anything
    /// before the second sample) pass through unchanged.
    pub fn transform(&self, x: &[f64]) -> Vector {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                if self.count < 2 {
                    return v;
                }
                let var = self.m2[i] / (self.count - 1) as f64;
                if var > 0.0 {
                    (v - self.mean[i]) / var.sqrt()
                } else {
                    v
                }
            })
            .collect()
    }
}

/// Standardizes contexts before handing them to the wrapped policy. Moments
/// absorb each context at selection time, so `observe` sees the same scaled
/// vector that `select` scored.
pub struct Standardized {
    inner: Box<dyn Policy>,
    scaler: RunningScaler,
}

impl Policy for Standardized {
    fn select(&mut self, x: &[f64]) -> Result<Selection, PolicyError> {
        self.scaler.update(x);
        self.inner.select(&self.scaler.transform(x))
    }

    fn observe(&mut self, x: &[f64], arm: usize, reward: f64) -> Result<(), PolicyError> {
        self.inner.observe(&self.scaler.transform(x), arm, reward)
    }

    fn reward_structure(&self) -> RewardStructure {
        self.inner.reward_structure()
    }

    fn num_arms(&self) -> usize {
        self.inner.num_arms()
    }
}

/// Builds a fresh policy instance. `seed` drives random tie-breaking and
/// the uniform-random policy only.
pub fn make_policy(cfg: &PolicyConfig, dim: usize, num_arms: usize, seed: u64) -> Result<Box<dyn Policy>, PolicyError> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(PolicyError::Config(problems.join("; ")));
    }
    if dim == 0 {
        return Err(LinalgError::InvalidDimension.into());
    }
    if num_arms == 0 {
        return Err(PolicyError::Config("at least one arm is required".into()));
    }
    let tie = TieBreaker::new(cfg.tie_break, seed);
    let policy: Box<dyn Policy> = match cfg.algorithm {
        Algorithm::FixedDose => {
            if num_arms <= DoseLevel::MEDIUM.index() {
                return Err(PolicyError::Config("fixed_dose needs at least 2 arms".into()));
            }
            Box::new(FixedDose { reward: cfg.reward, num_arms })
        }
        Algorithm::Wcda => {
            let coeffs = cfg.coefficients().to_vec();
            if num_arms != 3 || dim < coeffs.len() {
                return Err(PolicyError::Config(format!(
                    "wcda needs 3 arms and at least {} features",
                    coeffs.len()
                )));
            }
            Box::new(Wcda { coeffs, reward: cfg.reward })
        }
        Algorithm::Random => Box::new(UniformRandom {
            rng: ChaCha8Rng::seed_from_u64(seed),
            num_arms,
            reward: cfg.reward,
        }),
        Algorithm::Linucb => Box::new(LinUcb::new(dim, num_arms, cfg.alpha, cfg.reward, tie)?),
        Algorithm::Linprucb => Box::new(LinPrUcb::new(
            dim,
            num_arms,
            cfg.alpha,
            PseudoRewardParams::from_config(cfg),
            cfg.reward,
            tie,
        )?),
    };
    let bandit = matches!(cfg.algorithm, Algorithm::Linucb | Algorithm::Linprucb);
    Ok(if cfg.standardize && bandit {
        Box::new(Standardized {
            inner: policy,
            scaler: RunningScaler::new(dim),
        })
    } else {
        policy
    })
}
