//! JSON file formats: models, solved policies and privatized releases.
//!
//! All indices are 0-based. Reward arrays use the position `s * m_i + a` over
//! (joint state, local action), joint states in mixed radix with agent 0 as
//! the most significant digit. Transitions are nested `[state][action][next]`.

use dpmmdp_core::model::{AgentModel, JointModel, RewardVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One agent in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub states: usize,
    pub actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<f64>,
}

/// Model file: `{gamma, agents: [...]}` plus an optional initial joint state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub gamma: f64,
    pub agents: Vec<AgentFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
}

fn finite(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Invalid(format!("{what}[{i}] is not finite"))),
        None => Ok(()),
    }
}

impl AgentFile {
    pub fn from_agent(agent: &AgentModel) -> Self {
        let (n, m) = (agent.states(), agent.actions());
        let transition = (0..n)
            .map(|s| (0..m).map(|a| agent.row(s, a).to_vec()).collect())
            .collect();
        Self {
            states: n,
            actions: m,
            transition,
            reward: agent.reward().as_slice().to_vec(),
        }
    }

    pub fn to_agent(&self, index: usize) -> Result<AgentModel> {
        let (n, m) = (self.states, self.actions);
        let bad = |what: String| Error::Invalid(format!("agent {index}: {what}"));
        if self.transition.len() != n {
            return Err(bad(format!("transition has {} states, expected {n}", self.transition.len())));
        }
        let mut flat = Vec::with_capacity(n * m * n);
        for (s, by_action) in self.transition.iter().enumerate() {
            if by_action.len() != m {
                return Err(bad(format!("transition[{s}] has {} actions, expected {m}", by_action.len())));
            }
            for (a, row) in by_action.iter().enumerate() {
                if row.len() != n {
                    return Err(bad(format!("transition[{s}][{a}] has {} entries, expected {n}", row.len())));
                }
                finite(&format!("agent {index} transition[{s}][{a}]"), row)?;
                flat.extend_from_slice(row);
            }
        }
        finite(&format!("agent {index} reward"), &self.reward)?;
        let reward = RewardVector::new(self.reward.clone())?;
        Ok(AgentModel::new(n, m, flat, reward)?)
    }
}

impl ModelFile {
    pub fn from_model(model: &JointModel, start: Option<usize>) -> Self {
        Self {
            gamma: model.gamma(),
            agents: model.agents().iter().map(AgentFile::from_agent).collect(),
            start,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// Validate and compose. `gamma` overrides the file's discount.
    pub fn to_model(&self, gamma: Option<f64>) -> Result<JointModel> {
        let gamma = gamma.unwrap_or(self.gamma);
        if !gamma.is_finite() {
            return Err(Error::Invalid(format!("gamma must be finite, got {gamma}")));
        }
        let agents = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| a.to_agent(i))
            .collect::<Result<Vec<_>>>()?;
        let model = JointModel::compose(agents, gamma)?;
        if let Some(s) = self.start {
            if s >= model.state_count() {
                return Err(Error::Invalid(format!(
                    "start state {s} out of range for {} joint states",
                    model.state_count()
                )));
            }
        }
        Ok(model)
    }
}

/// Output of `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub states: usize,
    pub actions: usize,
    pub start: usize,
    pub value_at_start: f64,
    pub iterations: u64,
    pub residual: f64,
    /// Joint action index per joint state.
    pub joint_policy: Vec<usize>,
    /// Local action per joint state, indexed `[agent][state]`.
    pub agent_policies: Vec<Vec<usize>>,
    pub values: Vec<f64>,
}

/// Parameters that produced a privatized release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub epsilon: f64,
    pub delta: f64,
    pub b: f64,
    pub sigma: f64,
    pub seed: u64,
    pub mode: String,
}

/// Output of `privatize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateRelease {
    pub provenance: Provenance,
    /// Privatized joint reward.
    pub reward: Vec<f64>,
    /// Privatized per-agent rewards; present only for input perturbation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_rewards: Option<Vec<Vec<f64>>>,
    pub iterations: u64,
    pub joint_policy: Vec<usize>,
    pub agent_policies: Vec<Vec<usize>>,
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_STATE: &str = r#"{"gamma": 0.9, "agents": [{"states": 1, "actions": 2,
        "transition": [[[1.0], [1.0]]], "reward": [0.0, 1.0]}]}"#;

    #[test]
    fn parses_and_composes() {
        let file = ModelFile::parse(ONE_STATE).unwrap();
        let model = file.to_model(None).unwrap();
        assert_eq!((model.state_count(), model.action_count()), (1, 2));
        assert_eq!(model.joint_reward().as_slice(), &[0.0, 1.0]);
        assert_eq!(file.start, None);
    }

    #[test]
    fn round_trip() {
        let file = ModelFile::parse(ONE_STATE).unwrap();
        let again = ModelFile::from_model(&file.to_model(None).unwrap(), None);
        assert_eq!(file, again);
        assert_eq!(ModelFile::parse(&again.to_json().unwrap()).unwrap(), file);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ModelFile::parse(&ONE_STATE.replace("1.0]]]", "NaN]]]")).is_err());
        assert!(ModelFile::parse(&ONE_STATE.replace("1.0]]]", "1e400]]]")).is_err());
        assert!(ModelFile::parse(&ONE_STATE.replace("\"gamma\"", "\"extra\": 1, \"gamma\"")).is_err());
        let short = ModelFile::parse(&ONE_STATE.replace("[0.0, 1.0]", "[0.0]")).unwrap();
        assert!(short.to_model(None).is_err());
        let ragged = ModelFile::parse(&ONE_STATE.replace("[[[1.0], [1.0]]]", "[[[1.0]]]")).unwrap();
        assert!(matches!(ragged.to_model(None), Err(Error::Invalid(_))));
        let file = ModelFile::parse(ONE_STATE).unwrap();
        assert!(file.to_model(Some(1.0)).is_err());
        assert!(file.to_model(Some(f64::NAN)).is_err());
    }
}
