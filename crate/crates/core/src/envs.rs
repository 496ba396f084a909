//! The experimental environments: a two-state chain per agent, a shared
//! gridworld, and a single-agent waypoint grid.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::index::{encode_joint, radix_product};
use crate::model::{AgentModel, JointModel, RewardVector};
use crate::solver::Policy;

/// Reward of every state-action pair other than the goal pair.
pub const DEFAULT_REWARD: f64 = -1.0;

/// A composed model together with its designated initial joint state.
#[derive(Debug, Clone)]
pub struct Environment {
    pub model: JointModel,
    pub start: usize,
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn check_reward(r: f64) -> Result<()> {
    if !r.is_finite() {
        return Err(Error::Domain(format!("goal reward must be finite, got {r}")));
    }
    Ok(())
}

/// Two-state chain agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSpec {
    pub agents: usize,
    /// Probability that `a` keeps the agent in place (and that `b` switches).
    pub p: f64,
    pub r_goal: f64,
    pub gamma: f64,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            agents: 2,
            p: 0.9,
            r_goal: 5.0,
            gamma: 0.95,
        }
    }
}

/// Local action `a` of the chain.
pub const CHAIN_A: usize = 0;
/// Local action `b` of the chain.
pub const CHAIN_B: usize = 1;

/// Every agent has states {0, 1} and actions {a, b}. `a` stays with
/// probability `p`, `b` switches with probability `p`. Each agent earns
/// `r_goal` for playing `a` while all agents are in state 1 and -1 otherwise.
/// The run starts with every agent in state 0.
pub fn build_chain(spec: &ChainSpec) -> Result<Environment> {
    if spec.agents == 0 {
        return Err(Error::Domain("chain needs at least one agent".into()));
    }
    check_probability("p", spec.p)?;
    check_reward(spec.r_goal)?;
    let p = spec.p;
    let q = 1.0 - p;
    #[rustfmt::skip]
    let transition = vec![
        p, q, q, p, // state 0: a, b
        q, p, p, q, // state 1: a, b
    ];
    let n = radix_product(&vec![2; spec.agents])
        .ok_or_else(|| Error::Domain("too many chain agents".into()))?;
    let mut reward = vec![DEFAULT_REWARD; n * 2];
    reward[RewardVector::position(n - 1, CHAIN_A, 2)] = spec.r_goal;
    let agent = AgentModel::new(2, 2, transition, RewardVector::new(reward)?)?;
    let model = JointModel::compose(vec![agent; spec.agents], spec.gamma)?;
    Ok(Environment { model, start: 0 })
}

/// Compass moves shared by the grid environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Left,
    Right,
    Up,
    Down,
    Stay,
}

impl Move {
    const COMPASS: [Move; 4] = [Move::Left, Move::Right, Move::Up, Move::Down];

    /// Moves an agent slips into instead of this one.
    fn slips(self) -> &'static [Move] {
        match self {
            Move::Left | Move::Right => &[Move::Up, Move::Down],
            Move::Up | Move::Down => &[Move::Left, Move::Right],
            Move::Stay => &Self::COMPASS,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Grid {
    width: usize,
    height: usize,
}

impl Grid {
    fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!("grid must be non-empty, got {width}x{height}")));
        }
        Ok(Self { width, height })
    }

    fn cells(&self) -> usize {
        self.width * self.height
    }

    fn check_cell(&self, name: &str, cell: usize) -> Result<()> {
        if cell >= self.cells() {
            return Err(Error::Domain(format!(
                "{name} cell {cell} is outside the {}x{} grid",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Cells are numbered row-major from the top-left corner. Moves off the
    /// grid leave the agent in place.
    fn step(&self, cell: usize, mv: Move) -> usize {
        let (row, col) = (cell / self.width, cell % self.width);
        match mv {
            Move::Left if col > 0 => cell - 1,
            Move::Right if col + 1 < self.width => cell + 1,
            Move::Up if row > 0 => cell - self.width,
            Move::Down if row + 1 < self.height => cell + self.width,
            _ => cell,
        }
    }

    /// Row of a transition tensor: the commanded move succeeds with
    /// probability `1 - slip`, the rest is spread evenly over `slips`.
    fn row(&self, cell: usize, target: usize, slips: &[Move], slip: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|p| *p = 0.0);
        out[target] += 1.0 - slip;
        let share = slip / slips.len() as f64;
        for &mv in slips {
            out[self.step(cell, mv)] += share;
        }
    }
}

/// Multi-agent gridworld.
#[derive(Debug, Clone, PartialEq)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub goal: usize,
    pub slip: f64,
    pub agents: usize,
    pub r_goal: f64,
    pub gamma: f64,
    /// Starting cell per agent; `None` places agents in the corners, starting
    /// bottom-left, then bottom-right, top-right and top-left.
    pub starts: Option<Vec<usize>>,
}

impl Default for GridworldSpec {
    fn default() -> Self {
        Self {
            width: 4,
            height: 4,
            goal: 0,
            slip: 0.1,
            agents: 2,
            r_goal: 5.0,
            gamma: 0.99,
            starts: None,
        }
    }
}

/// Gridworld actions in local index order.
pub const GRID_ACTIONS: [&str; 5] = ["left", "right", "up", "down", "stay"];
const GRID_MOVES: [Move; 5] = [Move::Left, Move::Right, Move::Up, Move::Down, Move::Stay];
/// Local index of `stay`.
pub const GRID_STAY: usize = 4;

/// Every agent moves on the same grid with actions left, right, up, down and
/// stay. The commanded move succeeds with probability `1 - slip`; otherwise
/// the agent slips to one of the orthogonal moves, or to any compass move
/// when it commanded `stay`. Moves off the grid keep the agent in place.
/// Each agent earns `r_goal` for `stay` while all agents sit on the goal cell
/// and -1 otherwise.
pub fn build_gridworld(spec: &GridworldSpec) -> Result<Environment> {
    let grid = Grid::new(spec.width, spec.height)?;
    grid.check_cell("goal", spec.goal)?;
    check_probability("slip", spec.slip)?;
    check_reward(spec.r_goal)?;
    if spec.agents == 0 {
        return Err(Error::Domain("gridworld needs at least one agent".into()));
    }
    let cells = grid.cells();
    let starts = match &spec.starts {
        Some(s) if s.len() != spec.agents => {
            return Err(Error::Shape {
                expected: spec.agents,
                found: s.len(),
            })
        }
        Some(s) => s.clone(),
        None => {
            let corners = [cells - spec.width, cells - 1, spec.width - 1, 0];
            (0..spec.agents).map(|i| corners[i % 4]).collect()
        }
    };
    for &s in &starts {
        grid.check_cell("start", s)?;
    }

    let actions = GRID_MOVES.len();
    let mut transition = vec![0.0; cells * actions * cells];
    for cell in 0..cells {
        for (a, &mv) in GRID_MOVES.iter().enumerate() {
            let out = &mut transition[(cell * actions + a) * cells..][..cells];
            grid.row(cell, grid.step(cell, mv), mv.slips(), spec.slip, out);
        }
    }

    let radices = vec![cells; spec.agents];
    let n = radix_product(&radices).ok_or_else(|| Error::Domain("joint grid too large".into()))?;
    let goal_state = encode_joint(&vec![spec.goal; spec.agents], &radices)?;
    let mut reward = vec![DEFAULT_REWARD; n * actions];
    reward[RewardVector::position(goal_state, GRID_STAY, actions)] = spec.r_goal;
    let agent = AgentModel::new(cells, actions, transition, RewardVector::new(reward)?)?;
    let model = JointModel::compose(vec![agent; spec.agents], spec.gamma)?;
    let start = encode_joint(&starts, &radices)?;
    Ok(Environment { model, start })
}

/// Single-agent waypoint grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointSpec {
    pub width: usize,
    pub height: usize,
    pub target: usize,
    /// First waypoint, which is also the initial state.
    pub start: usize,
    pub slip: f64,
    pub r_goal: f64,
    pub gamma: f64,
}

impl Default for WaypointSpec {
    fn default() -> Self {
        Self {
            width: 20,
            height: 20,
            target: 20 * 15 + 15,
            start: 0,
            slip: 0.0,
            r_goal: 5.0,
            gamma: 0.95,
        }
    }
}

/// Waypoint actions in local index order.
pub const WAYPOINT_ACTIONS: [&str; 5] = ["north", "south", "east", "west", "to target"];
const WAYPOINT_MOVES: [Move; 4] = [Move::Up, Move::Down, Move::Right, Move::Left];
/// Local index of `to target`.
pub const WAYPOINT_TO_TARGET: usize = 4;

impl Grid {
    /// One cell toward `target`, closing the row distance first.
    fn toward(&self, cell: usize, target: usize) -> usize {
        let (row, col) = (cell / self.width, cell % self.width);
        let (tr, tc) = (target / self.width, target % self.width);
        if row < tr {
            cell + self.width
        } else if row > tr {
            cell - self.width
        } else if col < tc {
            cell + 1
        } else if col > tc {
            cell - 1
        } else {
            cell
        }
    }
}

/// One agent on a waypoint grid with compass moves and `to target`. The
/// agent earns `r_goal` for `to target` at the target and -1 otherwise.
pub fn build_waypoint(spec: &WaypointSpec) -> Result<Environment> {
    let grid = Grid::new(spec.width, spec.height)?;
    grid.check_cell("target", spec.target)?;
    grid.check_cell("start", spec.start)?;
    check_probability("slip", spec.slip)?;
    check_reward(spec.r_goal)?;
    let cells = grid.cells();
    let actions = WAYPOINT_ACTIONS.len();
    let mut transition = vec![0.0; cells * actions * cells];
    for cell in 0..cells {
        for (a, &mv) in WAYPOINT_MOVES.iter().enumerate() {
            let out = &mut transition[(cell * actions + a) * cells..][..cells];
            grid.row(cell, grid.step(cell, mv), mv.slips(), spec.slip, out);
        }
        let out = &mut transition[(cell * actions + WAYPOINT_TO_TARGET) * cells..][..cells];
        grid.row(cell, grid.toward(cell, spec.target), &Move::COMPASS, spec.slip, out);
    }
    let mut reward = vec![DEFAULT_REWARD; cells * actions];
    reward[RewardVector::position(spec.target, WAYPOINT_TO_TARGET, actions)] = spec.r_goal;
    let agent = AgentModel::new(cells, actions, transition, RewardVector::new(reward)?)?;
    let model = JointModel::compose(vec![agent], spec.gamma)?;
    Ok(Environment {
        model,
        start: spec.start,
    })
}

/// Waypoints visited by following `policy` from `start` along the most likely
/// successor of each step. Stops at the first repeated cell, which includes
/// reaching an absorbing target, or after every cell has been visited.
pub fn waypoint_sequence(env: &Environment, policy: &Policy) -> Result<Vec<usize>> {
    let model = &env.model;
    let n = model.state_count();
    if policy.len() != n {
        return Err(Error::Shape {
            expected: n,
            found: policy.len(),
        });
    }
    let kernel = model.kernel()?;
    let mut seen = vec![false; n];
    let mut path = vec![env.start];
    let mut cell = env.start;
    seen[cell] = true;
    loop {
        let pair = cell * model.action_count() + policy.action(cell);
        // Most likely successor; ties go to the lowest cell.
        let next = kernel
            .successors(pair)
            .fold((cell, f64::NEG_INFINITY), |best, (y, p)| {
                if p > best.1 || (p == best.1 && y < best.0) {
                    (y, p)
                } else {
                    best
                }
            })
            .0;
        if seen[next] {
            return Ok(path);
        }
        seen[next] = true;
        path.push(next);
        cell = next;
    }
}
