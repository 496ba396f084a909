//! Value iteration, policy evaluation and an exact linear-solve oracle.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::index::decode_joint;
use crate::model::{JointModel, Kernel, RewardVector};

/// Largest state count [`Planner::exact_value`] will solve densely.
pub const EXACT_STATE_LIMIT: usize = 1000;

/// Deterministic joint policy: one joint action per joint state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>, action_count: usize) -> Result<Self> {
        if let Some((s, &a)) = actions.iter().enumerate().find(|(_, &a)| a >= action_count) {
            return Err(Error::Index(format!(
                "policy picks action {a} in state {s}, but only {action_count} actions exist"
            )));
        }
        Ok(Self(actions))
    }

    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Agent `agent`'s slice: its local action in every joint state.
    pub fn agent_slice(&self, action_radices: &[usize], agent: usize) -> Result<Vec<usize>> {
        self.0
            .iter()
            .map(|&a| decode_joint(a, action_radices).map(|d| d[agent]))
            .collect()
    }
}

/// Value per joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector(Vec<f64>);

impl ValueVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn get(&self, state: usize) -> f64 {
        self.0[state]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs_diff(&self, other: &ValueVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// Outcome of value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisReport {
    pub policy: Policy,
    pub values: ValueVector,
    /// Bellman sweeps performed, not counting the final greedy extraction.
    pub iterations: u64,
    /// `||V_k - V_{k-1}||_inf` at termination.
    pub residual: f64,
}

/// Dynamics of a joint model prepared for repeated solves with different rewards.
///
/// Building the sparse kernel is the expensive step; a planner is built once
/// per model and reused for every privatized reward.
#[derive(Debug, Clone)]
pub struct Planner {
    kernel: Kernel,
    n: usize,
    m: usize,
    gamma: f64,
}

impl Planner {
    pub fn new(model: &JointModel) -> Result<Self> {
        Ok(Self {
            kernel: model.kernel()?,
            n: model.state_count(),
            m: model.action_count(),
            gamma: model.gamma(),
        })
    }

    pub fn state_count(&self) -> usize {
        self.n
    }

    pub fn action_count(&self) -> usize {
        self.m
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn check_reward(&self, reward: &RewardVector) -> Result<()> {
        if reward.len() != self.n * self.m {
            return Err(Error::Shape {
                expected: self.n * self.m,
                found: reward.len(),
            });
        }
        if reward.as_slice().iter().any(|r| !r.is_finite()) {
            return Err(Error::Model("reward contains non-finite entries".into()));
        }
        Ok(())
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.len() != self.n {
            return Err(Error::Shape {
                expected: self.n,
                found: policy.len(),
            });
        }
        if policy.0.iter().any(|&a| a >= self.m) {
            return Err(Error::Index("policy action out of range".into()));
        }
        Ok(())
    }

    /// One Bellman optimality sweep. Writes the new values and returns the
    /// sup-norm change.
    fn sweep(&self, reward: &[f64], values: &[f64], out: &mut [f64]) -> f64 {
        let mut change: f64 = 0.0;
        for (s, slot) in out.iter_mut().enumerate() {
            let base = s * self.m;
            let mut best = f64::NEG_INFINITY;
            for a in 0..self.m {
                let q = reward[base + a] + self.gamma * self.kernel.expect(base + a, values);
                if q > best {
                    best = q;
                }
            }
            change = change.max((best - values[s]).abs());
            *slot = best;
        }
        change
    }

    /// Value iteration from `V_0 = 0`, stopped once
    /// `||V_{k+1} - V_k||_inf <= eta (1 - gamma) / (2 gamma)`, which puts the
    /// returned values within `eta / 2` of optimal and makes the greedy
    /// policy `eta`-optimal.
    pub fn value_iteration(&self, reward: &RewardVector, eta: f64) -> Result<SynthesisReport> {
        self.check_reward(reward)?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Domain(format!("eta must be positive, got {eta}")));
        }
        let gamma = self.gamma;
        let threshold = eta * (1.0 - gamma) / (2.0 * gamma);
        // Contraction guarantees the stopping rule fires by this sweep count;
        // running past it means floating point cannot resolve the threshold.
        let r_max = reward.max_abs().max(f64::MIN_POSITIVE);
        let ratio = r_max / ((1.0 - gamma) * threshold);
        if !ratio.is_finite() || !(r_max / (1.0 - gamma)).is_finite() {
            return Err(Error::Numeric(format!(
                "reward scale {r_max} is out of floating point range for gamma {gamma} and eta {eta}"
            )));
        }
        let cap = 2 + 2 * (libm::log(ratio.max(1.0)) / libm::log(1.0 / gamma)) as u64;

        let r = reward.as_slice();
        let mut values = vec![0.0; self.n];
        let mut next = vec![0.0; self.n];
        let mut iterations = 0u64;
        let residual = loop {
            let change = self.sweep(r, &values, &mut next);
            core::mem::swap(&mut values, &mut next);
            iterations += 1;
            if change <= threshold {
                break change;
            }
            if iterations > cap || !change.is_finite() {
                return Err(Error::Numeric(format!(
                    "value iteration stalled at residual {change} after {iterations} sweeps \
                     (threshold {threshold})"
                )));
            }
        };
        let policy = self.greedy(reward, &values);
        Ok(SynthesisReport {
            policy,
            values: ValueVector(values),
            iterations,
            residual,
        })
    }

    /// Greedy policy for `values`; ties go to the lowest action index.
    pub fn greedy(&self, reward: &RewardVector, values: &[f64]) -> Policy {
        let r = reward.as_slice();
        let actions = (0..self.n)
            .map(|s| {
                let base = s * self.m;
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for a in 0..self.m {
                    let q = r[base + a] + self.gamma * self.kernel.expect(base + a, values);
                    if q > best {
                        best = q;
                        arg = a;
                    }
                }
                arg
            })
            .collect();
        Policy(actions)
    }

    /// `L^k V_0` with `V_0 = 0` for the Bellman operator of a fixed policy.
    pub fn evaluate(&self, reward: &RewardVector, policy: &Policy, iterations: u64) -> Result<ValueVector> {
        self.check_reward(reward)?;
        self.check_policy(policy)?;
        let r = reward.as_slice();
        let mut values = vec![0.0; self.n];
        let mut next = vec![0.0; self.n];
        for _ in 0..iterations {
            for (s, slot) in next.iter_mut().enumerate() {
                let pair = s * self.m + policy.0[s];
                *slot = r[pair] + self.gamma * self.kernel.expect(pair, &values);
            }
            core::mem::swap(&mut values, &mut next);
        }
        Ok(ValueVector(values))
    }

    /// Solve `(I - gamma P_pi) V = r_pi` by dense LU with partial pivoting.
    pub fn exact_value(&self, reward: &RewardVector, policy: &Policy) -> Result<ValueVector> {
        self.check_reward(reward)?;
        self.check_policy(policy)?;
        let n = self.n;
        if n > EXACT_STATE_LIMIT {
            return Err(Error::Capacity {
                what: "dense policy evaluation",
                needed: n as u128,
                limit: EXACT_STATE_LIMIT as u128,
            });
        }
        let mut a = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for s in 0..n {
            let pair = s * self.m + policy.0[s];
            a[s * n + s] = 1.0;
            for (y, p) in self.kernel.successors(pair) {
                a[s * n + y] -= self.gamma * p;
            }
            rhs[s] = reward[pair];
        }
        solve_dense(&mut a, &mut rhs, n)?;
        Ok(ValueVector(rhs))
    }
}

/// Gaussian elimination with partial pivoting; the solution overwrites `rhs`.
fn solve_dense(a: &mut [f64], rhs: &mut [f64], n: usize) -> Result<()> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap_or(col);
        if a[pivot * n + col] == 0.0 {
            return Err(Error::Numeric("singular policy evaluation system".into()));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            rhs.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row * n + k] * rhs[k]).sum();
        rhs[row] = (rhs[row] - tail) / a[row * n + row];
    }
    Ok(())
}

/// Value iteration on the model's own joint reward.
pub fn value_iteration(model: &JointModel, eta: f64) -> Result<SynthesisReport> {
    Planner::new(model)?.value_iteration(model.joint_reward(), eta)
}

/// `k` sweeps of fixed-policy evaluation from `V_0 = 0`.
pub fn policy_evaluation(model: &JointModel, policy: &Policy, iterations: u64) -> Result<ValueVector> {
    Planner::new(model)?.evaluate(model.joint_reward(), policy, iterations)
}

/// Exact value of a policy via a dense linear solve.
pub fn exact_policy_value(model: &JointModel, policy: &Policy) -> Result<ValueVector> {
    Planner::new(model)?.exact_value(model.joint_reward(), policy)
}

/// Sweeps of policy evaluation that put a value within `eta / 2` of exact for
/// rewards bounded by `r_max`:
/// `ceil(log(4 r_max / (eta (1 - gamma)^2)) / log(1 / gamma))`, floored at 0.
pub fn iteration_count(r_max: f64, eta: f64, gamma: f64) -> Result<u64> {
    if r_max == 0.0 {
        return Err(Error::Degenerate(
            "R_max = 0: every policy has value 0 and the iteration count takes log(0)".into(),
        ));
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::Domain(format!("R_max must be positive, got {r_max}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let raw = libm::log(4.0 * r_max / (eta * (1.0 - gamma) * (1.0 - gamma))) / libm::log(1.0 / gamma);
    Ok(libm::ceil(raw).max(0.0) as u64)
}

/// `(K_1, K_2)` for the sensitive and privatized reward bounds.
pub fn iteration_counts(r_max: f64, r_tilde_max: f64, eta: f64, gamma: f64) -> Result<(u64, u64)> {
    Ok((
        iteration_count(r_max, eta, gamma)?,
        iteration_count(r_tilde_max, eta, gamma)?,
    ))
}
