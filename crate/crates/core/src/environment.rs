//! Bandit environments: replay over a labeled cohort, and a seeded
//! synthetic linear-payoff generator with known optimal arms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::EncodedPatient;
use crate::linalg::{dot, norm, Vector};
use crate::policies::RewardStructure;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step {t} out of range for horizon {horizon}")]
    StepOutOfRange { t: usize, horizon: usize },

    #[error("arm {arm} out of range for {num_arms} arms")]
    InvalidArm { arm: usize, num_arms: usize },

    #[error("invalid environment: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFeedback {
    pub reward: f64,
    /// True dose level for replay, `a*` for synthetic.
    pub optimal_arm: usize,
    pub per_step_regret: f64,
}

pub trait Environment: Sync {
    fn horizon(&self) -> usize;

    fn dim(&self) -> usize;

    fn num_arms(&self) -> usize;

    fn context(&self, t: usize) -> Result<&[f64], EnvError>;

    /// Stable identifier of the context served at step `t`.
    fn context_id(&self, t: usize) -> Result<usize, EnvError>;

    fn feedback(&self, t: usize, arm: usize, rs: RewardStructure) -> Result<StepFeedback, EnvError>;
}

fn check_step(t: usize, horizon: usize) -> Result<(), EnvError> {
    if t >= horizon {
        return Err(EnvError::StepOutOfRange { t, horizon });
    }
    Ok(())
}

fn check_arm(arm: usize, num_arms: usize) -> Result<(), EnvError> {
    if arm >= num_arms {
        return Err(EnvError::InvalidArm { arm, num_arms });
    }
    Ok(())
}

/// One pass over an (already shuffled) cohort; step `t` serves patient `t`.
#[derive(Debug, Clone)]
pub struct ReplayEnvironment {
    cohort: Vec<EncodedPatient>,
    dim: usize,
}

impl ReplayEnvironment {
    pub fn new(cohort: Vec<EncodedPatient>) -> Result<Self, EnvError> {
        let dim = cohort.first().map(|p| p.features.len()).unwrap_or(0);
        if cohort.iter().any(|p| p.features.len() != dim) {
            return Err(EnvError::Invalid("cohort mixes feature dimensions".into()));
        }
        Ok(Self { cohort, dim })
    }

    pub fn patient(&self, t: usize) -> Result<&EncodedPatient, EnvError> {
        check_step(t, self.cohort.len())?;
        Ok(&self.cohort[t])
    }
}

impl Environment for ReplayEnvironment {
    fn horizon(&self) -> usize {
        self.cohort.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn num_arms(&self) -> usize {
        3
    }

    fn context(&self, t: usize) -> Result<&[f64], EnvError> {
        Ok(&self.patient(t)?.features)
    }

    fn context_id(&self, t: usize) -> Result<usize, EnvError> {
        Ok(self.patient(t)?.row)
    }

    /// The true level earns 0, so regret is `−reward`.
    fn feedback(&self, t: usize, arm: usize, rs: RewardStructure) -> Result<StepFeedback, EnvError> {
        check_arm(arm, 3)?;
        let truth = self.patient(t)?.true_level.index();
        let reward = rs.reward_for_arm(arm, truth);
        Ok(StepFeedback {
            reward,
            optimal_arm: truth,
            per_step_regret: -reward,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub k: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    pub horizon: usize,
    /// Seed for drawing arm coefficients when `betas` is absent.
    #[serde(default)]
    pub beta_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<Vec<f64>>>,
}

impl SyntheticSpec {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.d == 0 {
            out.push("synthetic.d must be at least 1".to_string());
        }
        if self.k == 0 {
            out.push("synthetic.k must be at least 1".to_string());
        }
        if self.horizon == 0 {
            out.push("synthetic.horizon must be at least 1".to_string());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            out.push("synthetic.noise_sigma must be a nonnegative number".to_string());
        }
        if let Some(betas) = &self.betas {
            if betas.len() != self.k || betas.iter().any(|b| b.len() != self.d) {
                out.push(format!("synthetic.betas must be {} vectors of length {}", self.k, self.d));
            }
        }
        out
    }

    /// Explicit coefficients, or `k` unit-sphere draws from `beta_seed`.
    pub fn resolve_betas(&self) -> Vec<Vector> {
        if let Some(b) = &self.betas {
            return b.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.beta_seed);
        (0..self.k).map(|_| unit_sphere(&mut rng, self.d)).collect()
    }
}

/// Uniform draw on the unit sphere in `d` dimensions.
pub fn unit_sphere<R: rand::Rng>(rng: &mut R, d: usize) -> Vector {
    loop {
        let v: Vector = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `r = xᵀβ_a + ε`, contexts i.i.d. on the unit sphere. Contexts and noise
/// are drawn up front, so every step is a pure function of `(seed, t, arm)`.
#[derive(Debug, Clone)]
pub struct SyntheticEnvironment {
    betas: Vec<Vector>,
    contexts: Vec<Vector>,
    noise: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
}

impl SyntheticEnvironment {
    pub fn new(spec: &SyntheticSpec, seed: u64) -> Result<Self, EnvError> {
        let problems = spec.problems();
        if !problems.is_empty() {
            return Err(EnvError::Invalid(problems.join("; ")));
        }
        Self::with_betas(spec.resolve_betas(), spec.noise_sigma, spec.horizon, seed)
    }

    pub fn with_betas(betas: Vec<Vector>, noise_sigma: f64, horizon: usize, seed: u64) -> Result<Self, EnvError> {
        let d = betas.first().map(Vec::len).unwrap_or(0);
        if d == 0 || betas.iter().any(|b| b.len() != d) {
            return Err(EnvError::Invalid("betas must be non-empty with equal lengths".into()));
        }
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| EnvError::Invalid(e.to_string()))?;
        let mut ctx_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let contexts: Vec<Vector> = (0..horizon).map(|_| unit_sphere(&mut ctx_rng, d)).collect();
        let noise = (0..horizon)
            .map(|_| betas.iter().map(|_| normal.sample(&mut noise_rng)).collect())
            .collect();
        let means = contexts
            .iter()
            .map(|x| betas.iter().map(|b| dot(x, b)).collect())
            .collect();
        Ok(Self {
            betas,
            contexts,
            noise,
            means,
        })
    }

    pub fn betas(&self) -> &[Vector] {
        &self.betas
    }

    /// Noise-free payoff of every arm at step `t`.
    pub fn mean_rewards(&self, t: usize) -> Result<&[f64], EnvError> {
        check_step(t, self.contexts.len())?;
        Ok(&self.means[t])
    }

    pub fn optimal_arm(&self, t: usize) -> Result<usize, EnvError> {
        let means = self.mean_rewards(t)?;
        let mut best = 0;
        for (i, &m) in means.iter().enumerate().skip(1) {
            if m > means[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn synth_step(&self, t: usize, arm: usize) -> Result<StepFeedback, EnvError> {
        check_arm(arm, self.betas.len())?;
        let means = self.mean_rewards(t)?;
        let best = self.optimal_arm(t)?;
        Ok(StepFeedback {
            reward: means[arm] + self.noise[t][arm],
            optimal_arm: best,
            per_step_regret: means[best] - means[arm],
        })
    }
}

impl Environment for SyntheticEnvironment {
    fn horizon(&self) -> usize {
        self.contexts.len()
    }

    fn dim(&self) -> usize {
        self.betas[0].len()
    }

    fn num_arms(&self) -> usize {
        self.betas.len()
    }

    fn context(&self, t: usize) -> Result<&[f64], EnvError> {
        check_step(t, self.contexts.len())?;
        Ok(&self.contexts[t])
    }

    fn context_id(&self, t: usize) -> Result<usize, EnvError> {
        check_step(t, self.contexts.len())?;
        Ok(t)
    }

    fn feedback(&self, t: usize, arm: usize, _rs: RewardStructure) -> Result<StepFeedback, EnvError> {
        self.synth_step(t, arm)
    }
}
