//! Agent and joint (multi-agent) MDP models.
//!
//! Rewards are stored as flat vectors in state-major, action-minor order:
//! entry `state * action_count + action`. Agent rewards are defined over
//! joint states and local actions, so an agent's reward vector has length
//! `n * m_i` where `n` is the joint state count.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use crate::error::{Error, Result};
use crate::index::{decode_into, digit_of, radix_product};

/// Tolerance on transition row sums.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// Largest dense `n * m * n` transition tensor [`JointModel::materialize`] will build.
pub const MATERIALIZE_LIMIT: u128 = 10_000_000;

/// Largest number of nonzero successor entries a [`Kernel`] will hold.
pub const KERNEL_LIMIT: u128 = 50_000_000;

/// Flat reward table in state-major, action-minor order.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector(Vec<f64>);

impl RewardVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Model(format!("reward entry {pos} is not finite")));
        }
        Ok(Self(values))
    }

    /// A constant reward table.
    pub fn filled(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    /// Flat position of `(state, action)` for a table with `action_count` actions.
    #[inline]
    pub fn position(state: usize, action: usize, action_count: usize) -> usize {
        state * action_count + action
    }

    /// Inverse of [`RewardVector::position`].
    #[inline]
    pub fn state_action(position: usize, action_count: usize) -> (usize, usize) {
        (position / action_count, position % action_count)
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize, action_count: usize) -> f64 {
        self.0[Self::position(state, action, action_count)]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `max |r|` over all entries.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `max |self - other|`; the vectors must have equal length.
    pub fn max_abs_diff(&self, other: &RewardVector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::Shape {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs())))
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Index<usize> for RewardVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One agent's local MDP: local transitions plus a reward over (joint state, local action).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    states: usize,
    actions: usize,
    /// Indexed `[local state][local action][next local state]`, flattened.
    transition: Vec<f64>,
    reward: RewardVector,
}

impl AgentModel {
    /// Build an agent, validating the transition tensor. The reward length is
    /// checked against the joint state count when the agents are composed.
    pub fn new(
        states: usize,
        actions: usize,
        transition: Vec<f64>,
        reward: RewardVector,
    ) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::Model(format!(
                "agent needs at least one state and one action, got {states}x{actions}"
            )));
        }
        let expected = states * actions * states;
        if transition.len() != expected {
            return Err(Error::Model(format!(
                "transition tensor has {} entries, expected {expected}",
                transition.len()
            )));
        }
        for s in 0..states {
            for a in 0..actions {
                let row = &transition[(s * actions + a) * states..][..states];
                if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(Error::Model(format!(
                        "transition ({s}, {a}) has entry {p} outside [0, 1]"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_TOLERANCE {
                    return Err(Error::Model(format!(
                        "transition row ({s}, {a}) sums to {sum}"
                    )));
                }
            }
        }
        Ok(Self {
            states,
            actions,
            transition,
            reward,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn reward(&self) -> &RewardVector {
        &self.reward
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    /// Probability of moving from local `state` to local `next` under local `action`.
    #[inline]
    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transition[(state * self.actions + action) * self.states + next]
    }

    /// Transition row for `(state, action)`.
    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        &self.transition[(state * self.actions + action) * self.states..][..self.states]
    }

    /// The same dynamics with a different reward table.
    pub fn with_reward(&self, reward: RewardVector) -> Self {
        Self {
            reward,
            ..self.clone()
        }
    }
}

/// A composed MMDP.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    agents: Vec<AgentModel>,
    state_radices: Vec<usize>,
    action_radices: Vec<usize>,
    n: usize,
    m: usize,
    gamma: f64,
    joint_reward: RewardVector,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Model(format!(
            "discount factor must satisfy 0 < gamma < 1, got {gamma}"
        )));
    }
    Ok(())
}

impl JointModel {
    /// Compose agents into an MMDP. The joint reward is the agent average
    /// `r(s, a) = (1/N) sum_i r^i(s, a^i)`.
    pub fn compose(agents: Vec<AgentModel>, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if agents.is_empty() {
            return Err(Error::Model("at least one agent is required".into()));
        }
        let state_radices: Vec<usize> = agents.iter().map(|a| a.states).collect();
        let action_radices: Vec<usize> = agents.iter().map(|a| a.actions).collect();
        let n = radix_product(&state_radices)
            .ok_or_else(|| Error::Model("joint state count overflows".into()))?;
        let m = radix_product(&action_radices)
            .ok_or_else(|| Error::Model("joint action count overflows".into()))?;
        for (i, agent) in agents.iter().enumerate() {
            let expected = n * agent.actions;
            if agent.reward.len() != expected {
                return Err(Error::Model(format!(
                    "agent {i} reward has {} entries, expected n*m_i = {expected}",
                    agent.reward.len()
                )));
            }
        }
        let joint_reward = compose_reward(&agents, &action_radices, n, m);
        Ok(Self {
            agents,
            state_radices,
            action_radices,
            n,
            m,
            gamma,
            joint_reward,
        })
    }

    /// The same dynamics and agents with the joint reward replaced.
    ///
    /// Used for output perturbation, where the privatized joint reward is not
    /// an agent average.
    pub fn with_joint_reward(&self, joint_reward: RewardVector) -> Result<Self> {
        if joint_reward.len() != self.n * self.m {
            return Err(Error::Shape {
                expected: self.n * self.m,
                found: joint_reward.len(),
            });
        }
        Ok(Self {
            joint_reward,
            ..self.clone()
        })
    }

    /// Recompose with new per-agent reward tables (same dynamics).
    pub fn with_agent_rewards(&self, rewards: Vec<RewardVector>) -> Result<Self> {
        if rewards.len() != self.agents.len() {
            return Err(Error::Shape {
                expected: self.agents.len(),
                found: rewards.len(),
            });
        }
        let agents = self
            .agents
            .iter()
            .zip(rewards)
            .map(|(a, r)| a.with_reward(r))
            .collect();
        Self::compose(agents, self.gamma)
    }

    pub fn agents(&self) -> &[AgentModel] {
        &self.agents
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn state_count(&self) -> usize {
        self.n
    }

    pub fn action_count(&self) -> usize {
        self.m
    }

    pub fn state_radices(&self) -> &[usize] {
        &self.state_radices
    }

    pub fn action_radices(&self) -> &[usize] {
        &self.action_radices
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn joint_reward(&self) -> &RewardVector {
        &self.joint_reward
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.joint_reward.get(state, action, self.m)
    }

    /// `R_max = max |r(s, a)|`.
    pub fn r_max(&self) -> f64 {
        self.joint_reward.max_abs()
    }

    /// Agent `agent`'s local action inside joint action `action`.
    pub fn local_action(&self, action: usize, agent: usize) -> usize {
        digit_of(action, &self.action_radices, agent)
    }

    /// `T(s, a, y) = prod_i T^i(s^i, a^i, y^i)`, computed on demand.
    pub fn joint_transition(&self, state: usize, action: usize, next: usize) -> Result<f64> {
        self.check_state(state)?;
        self.check_state(next)?;
        self.check_action(action)?;
        let mut p = 1.0;
        for (i, agent) in self.agents.iter().enumerate() {
            p *= agent.prob(
                digit_of(state, &self.state_radices, i),
                digit_of(action, &self.action_radices, i),
                digit_of(next, &self.state_radices, i),
            );
            if p == 0.0 {
                break;
            }
        }
        Ok(p)
    }

    /// Dense `[s][a][y]` joint transition tensor. Refused above [`MATERIALIZE_LIMIT`] entries.
    pub fn materialize(&self) -> Result<Vec<f64>> {
        let needed = (self.n as u128) * (self.n as u128) * (self.m as u128);
        if needed > MATERIALIZE_LIMIT {
            return Err(Error::Capacity {
                what: "dense joint transition",
                needed,
                limit: MATERIALIZE_LIMIT,
            });
        }
        let kernel = self.kernel()?;
        let mut dense = vec![0.0; needed as usize];
        for s in 0..self.n {
            for a in 0..self.m {
                let base = (s * self.m + a) * self.n;
                for (y, p) in kernel.successors(s * self.m + a) {
                    dense[base + y] += p;
                }
            }
        }
        Ok(dense)
    }

    /// Sparse successor lists for every joint `(s, a)`.
    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::build(self)
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n {
            return Err(Error::Index(format!("joint state {s} out of range 0..{}", self.n)));
        }
        Ok(())
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.m {
            return Err(Error::Index(format!("joint action {a} out of range 0..{}", self.m)));
        }
        Ok(())
    }
}

/// `J`: average agent rewards into the joint reward table.
fn compose_reward(agents: &[AgentModel], action_radices: &[usize], n: usize, m: usize) -> RewardVector {
    let count = agents.len() as f64;
    let mut digits = vec![0usize; agents.len()];
    let mut out = vec![0.0; n * m];
    for a in 0..m {
        decode_into(a, action_radices, &mut digits);
        for s in 0..n {
            let sum: f64 = agents
                .iter()
                .zip(&digits)
                .map(|(agent, &ai)| agent.reward.get(s, ai, agent.actions))
                .sum();
            out[s * m + a] = sum / count;
        }
    }
    RewardVector::from_raw(out)
}

/// Nonzero joint successors `(y, T(s, a, y))` for every `(s, a)`, in CSR layout.
#[derive(Debug, Clone)]
pub struct Kernel {
    offsets: Vec<usize>,
    next: Vec<usize>,
    prob: Vec<f64>,
}

impl Kernel {
    pub fn build(model: &JointModel) -> Result<Self> {
        // Per agent, per (local s, local a): nonzero (y, p) pairs.
        let local: Vec<Vec<Vec<(usize, f64)>>> = model
            .agents
            .iter()
            .map(|agent| {
                (0..agent.states * agent.actions)
                    .map(|sa| {
                        agent.transition[sa * agent.states..][..agent.states]
                            .iter()
                            .enumerate()
                            .filter(|(_, &p)| p > 0.0)
                            .map(|(y, &p)| (y, p))
                            .collect()
                    })
                    .collect()
            })
            .collect();

        // Exact entry count before allocating.
        let mut needed: u128 = 0;
        let mut sd = vec![0usize; model.agent_count()];
        let mut ad = vec![0usize; model.agent_count()];
        for s in 0..model.n {
            decode_into(s, &model.state_radices, &mut sd);
            for a in 0..model.m {
                decode_into(a, &model.action_radices, &mut ad);
                let mut count: u128 = 1;
                for (i, agent) in model.agents.iter().enumerate() {
                    count *= local[i][sd[i] * agent.actions + ad[i]].len() as u128;
                }
                needed += count;
            }
            if needed > KERNEL_LIMIT {
                return Err(Error::Capacity {
                    what: "joint successor table",
                    needed,
                    limit: KERNEL_LIMIT,
                });
            }
        }

        let pairs = model.n * model.m;
        let mut offsets = Vec::with_capacity(pairs + 1);
        let mut next = Vec::with_capacity(needed as usize);
        let mut prob = Vec::with_capacity(needed as usize);
        offsets.push(0);
        let agents = model.agent_count();
        let mut cursor = vec![0usize; agents];
        let mut rows: Vec<&[(usize, f64)]> = Vec::with_capacity(agents);
        for s in 0..model.n {
            decode_into(s, &model.state_radices, &mut sd);
            for a in 0..model.m {
                decode_into(a, &model.action_radices, &mut ad);
                rows.clear();
                for (i, agent) in model.agents.iter().enumerate() {
                    rows.push(&local[i][sd[i] * agent.actions + ad[i]]);
                }
                // Odometer over the cartesian product of local supports.
                cursor.iter_mut().for_each(|c| *c = 0);
                'product: loop {
                    let mut y = 0usize;
                    let mut p = 1.0;
                    for i in 0..agents {
                        let (yi, pi) = rows[i][cursor[i]];
                        y = y * model.state_radices[i] + yi;
                        p *= pi;
                    }
                    next.push(y);
                    prob.push(p);
                    let mut k = agents;
                    while k > 0 {
                        k -= 1;
                        cursor[k] += 1;
                        if cursor[k] < rows[k].len() {
                            continue 'product;
                        }
                        cursor[k] = 0;
                    }
                    break;
                }
                offsets.push(next.len());
            }
        }
        Ok(Self {
            offsets,
            next,
            prob,
        })
    }

    /// Successors of the flat pair index `s * m + a`.
    #[inline]
    pub fn successors(&self, pair: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[pair]..self.offsets[pair + 1];
        self.next[range.clone()]
            .iter()
            .copied()
            .zip(self.prob[range].iter().copied())
    }

    /// `sum_y T(s, a, y) v[y]` for the flat pair index.
    #[inline]
    pub fn expect(&self, pair: usize, values: &[f64]) -> f64 {
        let range = self.offsets[pair]..self.offsets[pair + 1];
        self.next[range.clone()]
            .iter()
            .zip(&self.prob[range])
            .map(|(&y, &p)| p * values[y])
            .sum()
    }

    pub fn nonzeros(&self) -> usize {
        self.next.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_agent(n_joint: usize, stay: f64, reward: f64) -> AgentModel {
        // action 0 stays w.p. `stay`, action 1 switches w.p. `stay`
        let t = vec![
            stay, 1.0 - stay, 1.0 - stay, stay, // s=0: a=0, a=1
            1.0 - stay, stay, stay, 1.0 - stay, // s=1
        ];
        AgentModel::new(2, 2, t, RewardVector::filled(n_joint * 2, reward)).unwrap()
    }

    #[test]
    fn single_agent_is_identity() {
        let agent = two_state_agent(2, 0.9, 0.0)
            .with_reward(RewardVector::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let model = JointModel::compose(vec![agent.clone()], 0.9).unwrap();
        assert_eq!(model.joint_reward(), agent.reward());
        for s in 0..2 {
            for a in 0..2 {
                for y in 0..2 {
                    assert_eq!(model.joint_transition(s, a, y).unwrap(), agent.prob(s, a, y));
                }
            }
        }
    }

    #[test]
    fn two_agent_reward_average() {
        // r^i((1,1), a) = 5, everything else -1. Joint state (1,1) is index 3.
        let mut r = vec![-1.0; 8];
        r[RewardVector::position(3, 0, 2)] = 5.0;
        let r = RewardVector::new(r).unwrap();
        let a1 = two_state_agent(4, 0.9, 0.0).with_reward(r.clone());
        let a2 = two_state_agent(4, 0.9, 0.0).with_reward(r);
        let model = JointModel::compose(vec![a1, a2], 0.95).unwrap();
        assert_eq!(model.reward(3, 0), 5.0); // (a, a)
        assert_eq!(model.reward(3, 1), 2.0); // (a, b)
        assert_eq!(model.reward(0, 0), -1.0);
        // both in state 0 taking (a, a): both remain w.p. 0.81
        assert!((model.joint_transition(0, 0, 0).unwrap() - 0.81).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rows_and_lengths() {
        let bad = AgentModel::new(1, 1, vec![0.5], RewardVector::filled(1, 0.0));
        assert!(matches!(bad, Err(Error::Model(_))));
        let neg = AgentModel::new(2, 1, vec![1.5, -0.5, 0.0, 1.0], RewardVector::filled(2, 0.0));
        assert!(matches!(neg, Err(Error::Model(_))));
        let agent = two_state_agent(3, 0.9, 0.0);
        assert!(matches!(JointModel::compose(vec![agent], 0.9), Err(Error::Model(_))));
        assert!(RewardVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn gamma_bounds() {
        let agent = two_state_agent(2, 1.0, 0.0);
        assert!(JointModel::compose(vec![agent.clone()], 1.0).is_err());
        assert!(JointModel::compose(vec![agent.clone()], 0.0).is_err());
        assert!(JointModel::compose(vec![agent], 0.5).is_ok());
    }

    #[test]
    fn deterministic_products_are_binary() {
        let a = two_state_agent(4, 1.0, 0.0);
        let model = JointModel::compose(vec![a.clone(), a], 0.5).unwrap();
        for s in 0..4 {
            for act in 0..4 {
                for y in 0..4 {
                    let p = model.joint_transition(s, act, y).unwrap();
                    assert!(p == 0.0 || p == 1.0);
                }
            }
        }
    }

    #[test]
    fn materialize_refuses_large() {
        let a = two_state_agent(1 << 8, 0.9, 0.0);
        let agents = vec![a; 8]; // n = m = 256 -> n^2 m = 16.7M
        let model = JointModel::compose(agents, 0.9).unwrap();
        assert!(matches!(model.materialize(), Err(Error::Capacity { .. })));
    }
}
