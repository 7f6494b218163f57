//! Multi-agent gridworld substrate shared by all three environments.
//!
//! Deterministic given `(config, seed)`: all stochastic dynamics draw from a
//! single ChaCha stream owned by the world, and simultaneous-move conflicts
//! are resolved by a uniformly random per-step agent priority drawn from the
//! same stream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Position {
    pub row: usize,
    pub col: usize,
}

impl Position {
    pub fn new(row: usize, col: usize) -> Self {
        Position { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    North,
    East,
    South,
    West,
}

impl Orientation {
    pub fn left(self) -> Self {
        match self {
            Orientation::North => Orientation::West,
            Orientation::West => Orientation::South,
            Orientation::South => Orientation::East,
            Orientation::East => Orientation::North,
        }
    }

    pub fn right(self) -> Self {
        self.left().left().left()
    }

    /// (d_row, d_col) unit step in the facing direction.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Orientation::North => (-1, 0),
            Orientation::East => (0, 1),
            Orientation::South => (1, 0),
            Orientation::West => (0, -1),
        }
    }

    /// Rotates a window-frame offset (up = facing direction) into the world frame.
    pub fn rotate_offset(self, d_row: i64, d_col: i64) -> (i64, i64) {
        match self {
            Orientation::North => (d_row, d_col),
            Orientation::East => (d_col, -d_row),
            Orientation::South => (-d_row, -d_col),
            Orientation::West => (-d_col, d_row),
        }
    }
}

/// The full action vocabulary. Each environment exposes a subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    MoveNorth,
    MoveEast,
    MoveSouth,
    MoveWest,
    RotateLeft,
    RotateRight,
    CleanBeam,
    FineBeam,
    Noop,
}

impl Action {
    pub fn move_delta(self) -> Option<(i64, i64)> {
        match self {
            Action::MoveNorth => Some((-1, 0)),
            Action::MoveEast => Some((0, 1)),
            Action::MoveSouth => Some((1, 0)),
            Action::MoveWest => Some((0, -1)),
            _ => None,
        }
    }
}

/// 5-action set used by the fully-observed coin game.
pub const COINS_ACTIONS: [Action; 5] = [
    Action::MoveNorth,
    Action::MoveEast,
    Action::MoveSouth,
    Action::MoveWest,
    Action::Noop,
];

/// 9-action set used by the partially-observed games.
pub const FULL_ACTIONS: [Action; 9] = [
    Action::MoveNorth,
    Action::MoveEast,
    Action::MoveSouth,
    Action::MoveWest,
    Action::RotateLeft,
    Action::RotateRight,
    Action::CleanBeam,
    Action::FineBeam,
    Action::Noop,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentPose {
    pub pos: Position,
    pub orientation: Orientation,
}

/// Environment-agnostic world state: geometry, agents, clock, rng.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldCore {
    pub width: usize,
    pub height: usize,
    pub walls: Vec<bool>,
    pub agents: Vec<AgentPose>,
    pub step_index: usize,
    pub episode_length: usize,
    pub rng: ChaCha8Rng,
}

impl WorldCore {
    pub fn cell_index(&self, pos: Position) -> usize {
        pos.row * self.width + pos.col
    }

    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    pub fn is_wall(&self, pos: Position) -> bool {
        self.walls[self.cell_index(pos)]
    }

    pub fn agent_at(&self, pos: Position) -> Option<usize> {
        self.agents.iter().position(|a| a.pos == pos)
    }

    pub fn done(&self) -> bool {
        self.step_index >= self.episode_length
    }

    /// Uniformly random agent priority for this step.
    pub fn draw_priority(&mut self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.agents.len()).collect();
        for i in (1..order.len()).rev() {
            let j = self.rng.gen_range(0..=i);
            order.swap(i, j);
        }
        order
    }

    /// Applies movement and rotation for all agents in priority order.
    ///
    /// A move succeeds when the target cell is in bounds, not a wall, and not
    /// occupied at the moment the agent is processed. Returns, per agent, the
    /// position it newly entered this step (if any).
    pub fn resolve_movement(&mut self, actions: &[Action], priority: &[usize]) -> Vec<Option<Position>> {
        let mut entered: Vec<Option<Position>> = vec![None; self.agents.len()];
        for &i in priority {
            match actions[i] {
                Action::RotateLeft => {
                    self.agents[i].orientation = self.agents[i].orientation.left();
                }
                Action::RotateRight => {
                    self.agents[i].orientation = self.agents[i].orientation.right();
                }
                a => {
                    if let Some((dr, dc)) = a.move_delta() {
                        let pos = self.agents[i].pos;
                        let (nr, nc) = (pos.row as i64 + dr, pos.col as i64 + dc);
                        if self.in_bounds(nr, nc) {
                            let target = Position::new(nr as usize, nc as usize);
                            if !self.is_wall(target) && self.agent_at(target).is_none() {
                                self.agents[i].pos = target;
                                entered[i] = Some(target);
                            }
                        }
                    }
                }
            }
        }
        entered
    }

    /// Cells covered by a straight beam from the agent's facing cell outward.
    /// Walls terminate the beam.
    pub fn beam_cells(&self, agent: usize, length: usize) -> Vec<Position> {
        let pose = self.agents[agent];
        let (dr, dc) = pose.orientation.delta();
        let mut cells = Vec::with_capacity(length);
        for k in 1..=length as i64 {
            let (r, c) = (pose.pos.row as i64 + dr * k, pose.pos.col as i64 + dc * k);
            if !self.in_bounds(r, c) {
                break;
            }
            let p = Position::new(r as usize, c as usize);
            if self.is_wall(p) {
                break;
            }
            cells.push(p);
        }
        cells
    }

    /// Base ASCII rendering: walls, floor, agent indices.
    pub fn render(&self, overlay: impl Fn(Position) -> Option<char>) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for row in 0..self.height {
            for col in 0..self.width {
                let pos = Position::new(row, col);
                let ch = if let Some(i) = self.agent_at(pos) {
                    char::from_digit((i % 10) as u32, 10).unwrap()
                } else if self.is_wall(pos) {
                    '#'
                } else {
                    overlay(pos).unwrap_or('.')
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    pub fn step_fraction(&self) -> f64 {
        self.step_index as f64 / self.episode_length as f64
    }
}

/// Per-agent events produced by one step, consumed by metrics and probes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AgentEvents {
    /// Picked up a coin of the agent's own color.
    pub own_pickup: bool,
    /// Picked up a coin owned by the other player.
    pub wrong_pickup: bool,
    /// Waste cells removed by a cleaning beam this step (0 or 1).
    pub cleaned: u32,
    /// Sustainability value of an apple eaten this step, if any.
    pub eaten_sus: Option<u32>,
    /// Apple eaten (any environment with apples).
    pub ate_apple: bool,
    /// Hit by a fining beam.
    pub fined: bool,
}

/// Result of one simultaneous step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    /// Hand-coded niceness increment per agent (environment metric).
    pub niceness_increments: Vec<f64>,
    /// True where a niceness-relevant event occurred (used by the
    /// per-event trace-decay variant).
    pub niceness_events: Vec<bool>,
    pub events: Vec<AgentEvents>,
    pub done: bool,
}

impl StepOutcome {
    pub fn empty(n: usize) -> Self {
        StepOutcome {
            rewards: vec![0.0; n],
            niceness_increments: vec![0.0; n],
            niceness_events: vec![false; n],
            events: vec![AgentEvents::default(); n],
            done: false,
        }
    }
}

/// Spawn placement for episode reset.
pub fn place_agents(
    core_rng: &mut ChaCha8Rng,
    width: usize,
    height: usize,
    walls: &[bool],
    fixed: Option<&[Position]>,
    n_agents: usize,
) -> Result<Vec<AgentPose>> {
    let mut poses = Vec::with_capacity(n_agents);
    match fixed {
        Some(points) => {
            if points.len() < n_agents {
                return Err(Error::Config(format!(
                    "{} spawn points for {} agents",
                    points.len(),
                    n_agents
                )));
            }
            for &pos in points.iter().take(n_agents) {
                poses.push(AgentPose { pos, orientation: Orientation::North });
            }
        }
        None => {
            let floor: Vec<Position> = (0..height * width)
                .filter(|&i| !walls[i])
                .map(|i| Position::new(i / width, i % width))
                .collect();
            if floor.len() < n_agents {
                return Err(Error::Config("not enough floor cells for agents".into()));
            }
            let mut chosen: Vec<usize> = Vec::with_capacity(n_agents);
            while chosen.len() < n_agents {
                let k = core_rng.gen_range(0..floor.len());
                if !chosen.contains(&k) {
                    chosen.push(k);
                }
            }
            for k in chosen {
                poses.push(AgentPose { pos: floor[k], orientation: Orientation::North });
            }
        }
    }
    // No two agents may share a cell.
    for i in 0..poses.len() {
        for j in i + 1..poses.len() {
            if poses[i].pos == poses[j].pos {
                return Err(Error::Config("overlapping spawn points".into()));
            }
        }
    }
    Ok(poses)
}
