//! Monte Carlo estimators behind the empirical side of each bound, and the
//! per-sample unit of a cost-of-privacy sweep.

use alloc::vec::Vec;

use crate::bounds::{bottom_indices, top_indices, Selection};
use crate::error::Result;
use crate::mechanism::{noise_rng, perturb_with, sample_seed, sigma_input, NoiseScale, PrivacyParams};
use crate::model::{JointModel, RewardVector};
use crate::solver::{iteration_count, Planner, Policy};
use crate::synthesis::{cost_of_policies, privatize, EvaluationBasis, Mode};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    /// Mean and standard error (sample standard deviation over `sqrt(len)`).
    pub fn from_samples(values: &[f64]) -> Self {
        let len = values.len();
        if len == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                samples: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / len as f64;
        let std_error = if len > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (len - 1) as f64;
            libm::sqrt(var / len as f64)
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            samples: len,
        }
    }
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Fraction of perturbed copies of `reward` whose top-`p` and bottom-`q`
/// index sets equal the original ones (as sets; order inside a set is
/// ignored). Sample `i` uses seed `sample_seed(seed, i)`.
pub fn mc_order_preservation(
    reward: &RewardVector,
    sel: Selection,
    scale: NoiseScale,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    let values = reward.as_slice();
    sel.check(values.len())?;
    let top = sorted(top_indices(values, sel.p));
    let bottom = sorted(bottom_indices(values, sel.q));
    let hits: Vec<f64> = (0..samples as u64)
        .map(|i| {
            let mut rng = noise_rng(sample_seed(seed, i));
            let noisy = perturb_with(values, scale, &mut rng);
            let kept = sorted(top_indices(&noisy, sel.p)) == top && sorted(bottom_indices(&noisy, sel.q)) == bottom;
            if kept {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(Estimate::from_samples(&hits))
}

/// [`mc_order_preservation`] with the input-perturbation scale of `params`.
pub fn mc_order_preservation_for(
    reward: &RewardVector,
    sel: Selection,
    params: &PrivacyParams,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    mc_order_preservation(reward, sel, sigma_input(params)?, samples, seed)
}

/// Mean over samples of `max |r~(s, a) - r(s, a)|` for the joint reward
/// produced by input perturbation.
pub fn mc_max_abs_error(model: &JointModel, params: &PrivacyParams, samples: usize, seed: u64) -> Result<Estimate> {
    let errors = (0..samples as u64)
        .map(|i| {
            let (private, _) = privatize(model, params, Mode::Input, sample_seed(seed, i))?;
            private.joint_reward().max_abs_diff(model.joint_reward())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(&errors))
}

/// Realized sweep counts for one input-perturbed reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationSample {
    pub seed: u64,
    pub k_sensitive: u64,
    pub k_private: u64,
}

impl IterationSample {
    /// `nm (K_private - K_sensitive)`.
    pub fn increase(&self, nm: usize) -> f64 {
        nm as f64 * (self.k_private as f64 - self.k_sensitive as f64)
    }
}

/// Sweep counts `K` for the sensitive reward and for input-perturbed copies
/// of it. Only the largest absolute reward enters `K`, so no model is needed.
pub fn mc_iteration_counts(
    reward: &RewardVector,
    params: &PrivacyParams,
    eta: f64,
    gamma: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<IterationSample>> {
    let scale = sigma_input(params)?;
    let k_sensitive = iteration_count(reward.max_abs(), eta, gamma)?;
    (0..samples as u64)
        .map(|i| {
            let seed = sample_seed(seed, i);
            let mut rng = noise_rng(seed);
            let noisy = RewardVector::new(perturb_with(reward.as_slice(), scale, &mut rng))?;
            Ok(IterationSample {
                seed,
                k_sensitive,
                k_private: iteration_count(noisy.max_abs(), eta, gamma)?,
            })
        })
        .collect()
}

/// One row of a cost-of-privacy sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub epsilon: f64,
    pub sample: u64,
    pub seed: u64,
    pub mode: Mode,
    /// `None` when the sensitive value at the initial state is 0.
    pub cost_percent: Option<f64>,
    /// `max |r~ - r|` over the joint reward.
    pub max_abs_error: f64,
    /// Whether the largest joint reward entry kept its position.
    pub goal_preserved: bool,
    pub k1: u64,
    pub k2: u64,
    pub computations: u128,
}

/// Everything a sweep sample needs that does not depend on the noise draw.
#[derive(Debug, Clone)]
pub struct SweepContext {
    pub model: JointModel,
    pub planner: Planner,
    pub policy: Policy,
    pub start: usize,
    pub eta: f64,
    pub basis: EvaluationBasis,
}

impl SweepContext {
    /// Build the kernel and the sensitive optimal policy once.
    pub fn new(model: JointModel, start: usize, eta: f64, basis: EvaluationBasis) -> Result<Self> {
        let planner = Planner::new(&model)?;
        let policy = planner.value_iteration(model.joint_reward(), eta)?.policy;
        Ok(Self {
            model,
            planner,
            policy,
            start,
            eta,
            basis,
        })
    }

    /// Privatize with `sample_seed(base_seed, sample)`, plan, and score.
    pub fn run(&self, params: &PrivacyParams, mode: Mode, sample: u64, base_seed: u64) -> Result<SweepRecord> {
        let seed = sample_seed(base_seed, sample);
        let (private, _) = privatize(&self.model, params, mode, seed)?;
        let private_policy = self
            .planner
            .value_iteration(private.joint_reward(), self.eta)?
            .policy;
        let cost = cost_of_policies(
            &self.planner,
            self.model.joint_reward(),
            &self.policy,
            private.joint_reward(),
            &private_policy,
            self.start,
            self.eta,
            self.basis,
        )?;
        let sensitive = self.model.joint_reward().as_slice();
        let noisy = private.joint_reward().as_slice();
        Ok(SweepRecord {
            epsilon: params.epsilon(),
            sample,
            seed,
            mode,
            cost_percent: cost.percent,
            max_abs_error: private.joint_reward().max_abs_diff(self.model.joint_reward())?,
            goal_preserved: top_indices(sensitive, 1) == top_indices(noisy, 1),
            k1: cost.k1,
            k2: cost.k2,
            computations: cost.computations,
        })
    }
}
