//! Private policy synthesis by input or output perturbation, and the cost of
//! privacy.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mechanism::{noise_rng, perturb_with, sigma_input, sigma_output, NoiseScale, PrivacyParams};
use crate::model::{JointModel, RewardVector};
use crate::solver::{iteration_count, Planner, Policy, SynthesisReport};

/// Where the Gaussian mechanism is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Each agent privatizes its own reward before the rewards are composed.
    Input,
    /// The aggregator composes sensitive rewards and privatizes the joint reward.
    Output,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Input => "input",
            Mode::Output => "output",
        }
    }
}

/// Noise scale each mode uses for this model.
pub fn noise_scale(model: &JointModel, params: &PrivacyParams, mode: Mode) -> Result<NoiseScale> {
    match mode {
        Mode::Input => sigma_input(params),
        Mode::Output => sigma_output(params, model.action_radices()),
    }
}

/// The model with privatized rewards. Noise is drawn from one generator
/// seeded with `seed`: agent by agent for input perturbation, once over the
/// joint reward for output perturbation.
pub fn privatize(model: &JointModel, params: &PrivacyParams, mode: Mode, seed: u64) -> Result<(JointModel, NoiseScale)> {
    let scale = noise_scale(model, params, mode)?;
    let mut rng = noise_rng(seed);
    let private = match mode {
        Mode::Input => {
            let rewards = model
                .agents()
                .iter()
                .map(|agent| RewardVector::new(perturb_with(agent.reward().as_slice(), scale, &mut rng)))
                .collect::<Result<Vec<_>>>()?;
            model.with_agent_rewards(rewards)?
        }
        Mode::Output => {
            let reward = perturb_with(model.joint_reward().as_slice(), scale, &mut rng);
            model.with_joint_reward(RewardVector::new(reward)?)?
        }
    };
    Ok((private, scale))
}

/// Result of a private synthesis run.
#[derive(Debug, Clone)]
pub struct PrivateSynthesis {
    pub private_model: JointModel,
    pub scale: NoiseScale,
    pub report: SynthesisReport,
    /// Local action of each agent in every joint state, indexed `[agent][state]`.
    pub agent_policies: Vec<Vec<usize>>,
}

/// Privatize, then plan on the private model. Everything after the noise
/// draw is deterministic post-processing.
pub fn synthesize(
    planner: &Planner,
    model: &JointModel,
    params: &PrivacyParams,
    mode: Mode,
    seed: u64,
    eta: f64,
) -> Result<PrivateSynthesis> {
    let (private_model, scale) = privatize(model, params, mode, seed)?;
    let report = planner.value_iteration(private_model.joint_reward(), eta)?;
    let agent_policies = agent_policies(&report.policy, model.action_radices())?;
    Ok(PrivateSynthesis {
        private_model,
        scale,
        report,
        agent_policies,
    })
}

/// Input perturbation followed by value iteration.
pub fn synthesize_input_perturbation(
    model: &JointModel,
    params: &PrivacyParams,
    seed: u64,
    eta: f64,
) -> Result<PrivateSynthesis> {
    synthesize(&Planner::new(model)?, model, params, Mode::Input, seed, eta)
}

/// Output perturbation followed by value iteration.
pub fn synthesize_output_perturbation(
    model: &JointModel,
    params: &PrivacyParams,
    seed: u64,
    eta: f64,
) -> Result<PrivateSynthesis> {
    synthesize(&Planner::new(model)?, model, params, Mode::Output, seed, eta)
}

/// Per-agent slices of a joint policy.
pub fn agent_policies(policy: &Policy, action_radices: &[usize]) -> Result<Vec<Vec<usize>>> {
    (0..action_radices.len())
        .map(|i| policy.agent_slice(action_radices, i))
        .collect()
}

/// Reward the private policy is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EvaluationBasis {
    /// Score the private policy on the privatized reward it was planned on.
    /// The iteration count for this evaluation grows with the privatized
    /// `R_max`, as in the cost-of-privacy operation count.
    #[default]
    Private,
    /// Score the private policy on the sensitive reward.
    Sensitive,
}

impl EvaluationBasis {
    pub fn name(self) -> &'static str {
        match self {
            EvaluationBasis::Private => "private",
            EvaluationBasis::Sensitive => "sensitive",
        }
    }
}

/// `|v_private(s0) - v(s0)|` and its bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostOfPrivacy {
    pub value: f64,
    pub private_value: f64,
    pub cost: f64,
    /// `100 * cost / |value|`; `None` when `value == 0`.
    pub percent: Option<f64>,
    pub k1: u64,
    pub k2: u64,
    /// `n m (K_1 + K_2)`.
    pub computations: u128,
}

/// Cost of privacy for two given policies.
///
/// The sensitive policy is evaluated on `reward` with `K_1` sweeps. The
/// private policy gets `K_2` sweeps on `private_reward`, or on `reward` under
/// [`EvaluationBasis::Sensitive`], where `max(K_1, K_2)` sweeps keep it within
/// `eta / 2` even when the privatized rewards are smaller than the sensitive
/// ones.
#[allow(clippy::too_many_arguments)]
pub fn cost_of_policies(
    planner: &Planner,
    reward: &RewardVector,
    policy: &Policy,
    private_reward: &RewardVector,
    private_policy: &Policy,
    s0: usize,
    eta: f64,
    basis: EvaluationBasis,
) -> Result<CostOfPrivacy> {
    let n = planner.state_count();
    if s0 >= n {
        return Err(Error::Index(format!("initial state {s0} out of range 0..{n}")));
    }
    let gamma = planner.gamma();
    let k1 = iteration_count(reward.max_abs(), eta, gamma)?;
    let k2 = iteration_count(private_reward.max_abs(), eta, gamma)?;
    let value = planner.evaluate(reward, policy, k1)?.get(s0);
    let private_value = match basis {
        EvaluationBasis::Private => planner.evaluate(private_reward, private_policy, k2)?,
        EvaluationBasis::Sensitive => planner.evaluate(reward, private_policy, k1.max(k2))?,
    }
    .get(s0);
    let cost = (private_value - value).abs();
    let percent = (value != 0.0).then(|| 100.0 * cost / value.abs());
    let nm = (n as u128) * (planner.action_count() as u128);
    Ok(CostOfPrivacy {
        value,
        private_value,
        cost,
        percent,
        k1,
        k2,
        computations: nm * (k1 as u128 + k2 as u128),
    })
}

/// Cost of privacy of planning on `private_model` instead of `model`, both
/// policies found by value iteration to accuracy `eta`.
pub fn cost_of_privacy(
    model: &JointModel,
    private_model: &JointModel,
    s0: usize,
    eta: f64,
    basis: EvaluationBasis,
) -> Result<CostOfPrivacy> {
    if model.state_count() != private_model.state_count()
        || model.action_count() != private_model.action_count()
    {
        return Err(Error::Shape {
            expected: model.state_count() * model.action_count(),
            found: private_model.state_count() * private_model.action_count(),
        });
    }
    if model.gamma() != private_model.gamma() {
        return Err(Error::Model("models disagree on the discount factor".into()));
    }
    let planner = Planner::new(model)?;
    let policy = planner.value_iteration(model.joint_reward(), eta)?.policy;
    let private_policy = planner.value_iteration(private_model.joint_reward(), eta)?.policy;
    cost_of_policies(
        &planner,
        model.joint_reward(),
        &policy,
        private_model.joint_reward(),
        &private_policy,
        s0,
        eta,
        basis,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_chain, ChainSpec};
    use crate::solver::value_iteration;

    fn chain(agents: usize) -> JointModel {
        build_chain(&ChainSpec {
            agents,
            ..Default::default()
        })
        .unwrap()
        .model
    }

    #[test]
    fn vanishing_noise_recovers_optimal_policy() {
        let model = chain(2);
        let params = PrivacyParams::new(1e12, 0.1, 2.0).unwrap();
        let base = value_iteration(&model, 1e-8).unwrap();
        for mode in [Mode::Input, Mode::Output] {
            let private = synthesize(&Planner::new(&model).unwrap(), &model, &params, mode, 4, 1e-8).unwrap();
            assert_eq!(private.report.policy, base.policy);
        }
    }

    #[test]
    fn pipelines_are_deterministic() {
        let model = chain(2);
        let params = PrivacyParams::new(1.0, 0.1, 2.0).unwrap();
        let a = synthesize_input_perturbation(&model, &params, 11, 1e-6).unwrap();
        let b = synthesize_input_perturbation(&model, &params, 11, 1e-6).unwrap();
        assert_eq!(a.private_model, b.private_model);
        assert_eq!(a.report, b.report);
        assert_eq!(a.agent_policies.len(), 2);
        // planning again on the same private reward gives the same policy
        let again = value_iteration(&a.private_model, 1e-6).unwrap();
        assert_eq!(again.policy, a.report.policy);
    }

    #[test]
    fn single_agent_modes_coincide() {
        let model = chain(1);
        let params = PrivacyParams::new(0.7, 0.05, 1.0).unwrap();
        let (input, si) = privatize(&model, &params, Mode::Input, 99).unwrap();
        let (output, so) = privatize(&model, &params, Mode::Output, 99).unwrap();
        assert_eq!(si, so);
        assert_eq!(input.joint_reward(), output.joint_reward());
    }

    #[test]
    fn output_noise_scales_with_agents() {
        let params = PrivacyParams::new(1.0, 0.1, 2.0).unwrap();
        let two = noise_scale(&chain(2), &params, Mode::Output).unwrap().sigma();
        let three = noise_scale(&chain(3), &params, Mode::Output).unwrap().sigma();
        // mu = 2^(N-1), so sigma_out grows like 2^(N-1) / N
        assert!((three / two - (4.0 / 3.0) / (2.0 / 2.0)).abs() < 1e-12);
        assert_eq!(
            noise_scale(&chain(4), &params, Mode::Input).unwrap(),
            noise_scale(&chain(2), &params, Mode::Input).unwrap()
        );
    }

    #[test]
    fn identical_models_cost_nothing() {
        let model = chain(2);
        for basis in [EvaluationBasis::Private, EvaluationBasis::Sensitive] {
            let c = cost_of_privacy(&model, &model, 0, 1e-8, basis).unwrap();
            assert!(c.cost <= 1e-8);
            assert_eq!(c.k1, c.k2);
            assert_eq!(c.computations, 16 * 2 * c.k1 as u128);
        }
    }

    #[test]
    fn cost_matches_linear_solve() {
        let model = chain(2);
        let params = PrivacyParams::new(0.5, 0.1, 2.0).unwrap();
        let eta = 1e-6;
        let planner = Planner::new(&model).unwrap();
        for seed in 0..5 {
            let (private, _) = privatize(&model, &params, Mode::Input, seed).unwrap();
            let pi = planner.value_iteration(model.joint_reward(), eta).unwrap().policy;
            let pit = planner.value_iteration(private.joint_reward(), eta).unwrap().policy;
            let v = planner.exact_value(model.joint_reward(), &pi).unwrap().get(0);
            let private_exact = planner.exact_value(private.joint_reward(), &pit).unwrap().get(0);
            let sensitive_exact = planner.exact_value(model.joint_reward(), &pit).unwrap().get(0);
            let c = cost_of_privacy(&model, &private, 0, eta, EvaluationBasis::Private).unwrap();
            assert!((c.cost - (private_exact - v).abs()).abs() <= eta);
            let c = cost_of_privacy(&model, &private, 0, eta, EvaluationBasis::Sensitive).unwrap();
            assert!((c.cost - (sensitive_exact - v).abs()).abs() <= eta);
        }
    }

    #[test]
    fn zero_value_has_no_percent() {
        // playing `a` everywhere earns exactly 0, so the optimal value is 0
        let model = chain(1);
        let zero = model
            .with_joint_reward(RewardVector::new(alloc::vec![0.0, -1.0, 0.0, -1.0]).unwrap())
            .unwrap();
        let c = cost_of_privacy(&zero, &model, 0, 1e-6, EvaluationBasis::Private).unwrap();
        assert_eq!(c.value, 0.0);
        assert_eq!(c.percent, None);
    }
}
