//! Built-in environments selectable by name.

use dpmmdp_core::envs::{build_chain, build_gridworld, build_waypoint, ChainSpec, Environment, GridworldSpec, WaypointSpec};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExampleKind {
    /// Two-state chain agents.
    Chain,
    /// Multi-agent gridworld.
    Gridworld,
    /// Single-agent waypoint grid.
    Waypoint,
}

/// Overrides on top of each environment's defaults. Fields that do not apply
/// to the chosen environment are ignored.
#[derive(Debug, Clone, Default, PartialEq, clap::Args)]
pub struct ExampleOptions {
    /// Number of agents (chain, gridworld).
    #[arg(long = "agents")]
    pub agents: Option<usize>,
    /// Probability that chain action `a` stays put.
    #[arg(long = "chain-p")]
    pub chain_p: Option<f64>,
    /// Reward for reaching the goal.
    #[arg(long = "r-goal")]
    pub r_goal: Option<f64>,
    /// Slip probability (gridworld, waypoint).
    #[arg(long)]
    pub slip: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Goal cell (gridworld) or target cell (waypoint).
    #[arg(long)]
    pub goal: Option<usize>,
    /// Per-agent start cells (gridworld) or the first waypoint (waypoint).
    #[arg(long = "starts", value_delimiter = ',')]
    pub starts: Option<Vec<usize>>,
}

/// Build a named environment. `gamma` overrides the default discount.
pub fn build(kind: ExampleKind, opts: &ExampleOptions, gamma: Option<f64>) -> Result<Environment> {
    let env = match kind {
        ExampleKind::Chain => {
            let d = ChainSpec::default();
            build_chain(&ChainSpec {
                agents: opts.agents.unwrap_or(d.agents),
                p: opts.chain_p.unwrap_or(d.p),
                r_goal: opts.r_goal.unwrap_or(d.r_goal),
                gamma: gamma.unwrap_or(d.gamma),
            })?
        }
        ExampleKind::Gridworld => {
            let d = GridworldSpec::default();
            build_gridworld(&GridworldSpec {
                width: opts.width.unwrap_or(d.width),
                height: opts.height.unwrap_or(d.height),
                goal: opts.goal.unwrap_or(d.goal),
                slip: opts.slip.unwrap_or(d.slip),
                agents: opts.agents.unwrap_or(d.agents),
                r_goal: opts.r_goal.unwrap_or(d.r_goal),
                gamma: gamma.unwrap_or(d.gamma),
                starts: opts.starts.clone().or(d.starts),
            })?
        }
        ExampleKind::Waypoint => {
            let d = WaypointSpec::default();
            let start = match opts.starts.as_deref() {
                Some([s]) => *s,
                Some(other) => {
                    return Err(crate::Error::Invalid(format!(
                        "waypoint takes a single start cell, got {}",
                        other.len()
                    )))
                }
                None => d.start,
            };
            build_waypoint(&WaypointSpec {
                width: opts.width.unwrap_or(d.width),
                height: opts.height.unwrap_or(d.height),
                target: opts.goal.unwrap_or(d.target),
                start,
                slip: opts.slip.unwrap_or(d.slip),
                r_goal: opts.r_goal.unwrap_or(d.r_goal),
                gamma: gamma.unwrap_or(d.gamma),
            })?
        }
    };
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let grid = build(ExampleKind::Gridworld, &ExampleOptions::default(), None).unwrap();
        assert_eq!((grid.model.state_count(), grid.model.action_count()), (256, 25));
        let chain = ExampleOptions {
            agents: Some(3),
            ..Default::default()
        };
        let env = build(ExampleKind::Chain, &chain, Some(0.9)).unwrap();
        assert_eq!(env.model.state_count(), 8);
        assert_eq!(env.model.gamma(), 0.9);
        let way = build(ExampleKind::Waypoint, &ExampleOptions::default(), None).unwrap();
        assert_eq!(way.model.joint_reward().len(), 2000);
        let two_starts = ExampleOptions {
            starts: Some(vec![0, 1]),
            ..Default::default()
        };
        assert!(build(ExampleKind::Waypoint, &two_starts, None).is_err());
    }
}
