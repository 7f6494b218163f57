//! Two-player coin game on a small fully-observed grid.
//!
//! Coins of two colors appear at random; picking up any coin pays +1, and
//! picking up the other player's color costs them 2. Defection is therefore
//! individually tempting but collectively wasteful.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Position, StepOutcome, WorldCore};

use super::Observation;

/// Planes: self, other agent, color-A coins, color-B coins.
pub const OBS_PLANES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoinColor {
    A,
    B,
}

/// Agent 0 owns color A, agent 1 owns color B.
pub fn owner(color: CoinColor) -> usize {
    match color {
        CoinColor::A => 0,
        CoinColor::B => 1,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CoinsConfig {
    pub width: usize,
    pub height: usize,
    /// Per-unoccupied-cell per-step spawn probability.
    pub spawn_prob: f64,
    pub pickup_reward: f64,
    /// Reward to the owner when the other player takes their coin.
    pub penalty_to_owner: f64,
    pub episode_length: usize,
    /// Swap coin-color planes in agent 0's observation so both players see
    /// their own coins in the same plane.
    pub symmetrize: bool,
    /// Fixed spawn cells `(row, col)`; omitted means uniform random placement.
    pub spawn_points: Option<Vec<(usize, usize)>>,
}

impl Default for CoinsConfig {
    fn default() -> Self {
        CoinsConfig {
            width: 5,
            height: 5,
            spawn_prob: 0.005,
            pickup_reward: 1.0,
            penalty_to_owner: -2.0,
            episode_length: 500,
            symmetrize: true,
            spawn_points: None,
        }
    }
}

impl CoinsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("coins grid dimensions must be positive".into()));
        }
        if self.episode_length == 0 {
            return Err(Error::Config("episode length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.spawn_prob) {
            return Err(Error::Config(format!("spawn_prob {} outside [0,1]", self.spawn_prob)));
        }
        if let Some(points) = &self.spawn_points {
            for &(r, c) in points {
                if r >= self.height || c >= self.width {
                    return Err(Error::Config(format!("spawn point ({r},{c}) out of bounds")));
                }
            }
        }
        Ok(())
    }

    pub fn spawn_positions(&self) -> Option<Vec<Position>> {
        self.spawn_points
            .as_ref()
            .map(|v| v.iter().map(|&(r, c)| Position::new(r, c)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoinsState {
    /// One slot per cell.
    coins: Vec<Option<CoinColor>>,
    count: usize,
}

impl CoinsState {
    pub fn new(cells: usize) -> Self {
        CoinsState { coins: vec![None; cells], count: 0 }
    }

    pub fn coin_at(&self, cell: usize) -> Option<CoinColor> {
        self.coins[cell]
    }

    pub fn coin_count(&self) -> usize {
        self.count
    }

    pub fn place(&mut self, cell: usize, color: CoinColor) {
        debug_assert!(self.coins[cell].is_none());
        self.coins[cell] = Some(color);
        self.count += 1;
    }

    fn take(&mut self, cell: usize) -> Option<CoinColor> {
        let c = self.coins[cell].take();
        if c.is_some() {
            self.count -= 1;
        }
        c
    }

    pub(super) fn glyph(&self, cell: usize) -> Option<char> {
        self.coins[cell].map(|c| match c {
            CoinColor::A => 'a',
            CoinColor::B => 'b',
        })
    }
}

/// Resolves coin pickups for agents standing on coin cells. Since coins never
/// spawn under an agent, standing on a coin means the agent just entered.
pub fn resolve_pickups(
    core: &WorldCore,
    st: &mut CoinsState,
    cfg: &CoinsConfig,
    outcome: &mut StepOutcome,
) {
    for (i, pose) in core.agents.iter().enumerate() {
        let cell = core.cell_index(pose.pos);
        if let Some(color) = st.take(cell) {
            outcome.rewards[i] += cfg.pickup_reward;
            let owner_id = owner(color);
            if owner_id != i {
                outcome.rewards[owner_id] += cfg.penalty_to_owner;
                outcome.events[i].wrong_pickup = true;
            } else {
                outcome.events[i].own_pickup = true;
            }
            outcome.niceness_increments[i] += niceness_increment(outcome.events[i].wrong_pickup);
            outcome.niceness_events[i] = true;
        }
    }
}

/// -1 for a pickup that penalizes the other player, 0 otherwise.
pub fn niceness_increment(wrong_pickup: bool) -> f64 {
    if wrong_pickup {
        -1.0
    } else {
        0.0
    }
}

/// Each unoccupied, coin-free cell independently gains a coin with
/// probability `spawn_prob`; the color is uniform.
pub fn spawn_coins(core: &mut WorldCore, st: &mut CoinsState, cfg: &CoinsConfig) {
    if cfg.spawn_prob <= 0.0 {
        return;
    }
    for cell in 0..core.width * core.height {
        if core.walls[cell] || st.coins[cell].is_some() {
            continue;
        }
        let pos = Position::new(cell / core.width, cell % core.width);
        if core.agent_at(pos).is_some() {
            continue;
        }
        if core.rng.gen::<f64>() < cfg.spawn_prob {
            let color = if core.rng.gen::<bool>() { CoinColor::A } else { CoinColor::B };
            st.place(cell, color);
        }
    }
}

/// Full-grid observation: planes [self, other, coins-A, coins-B] plus the
/// step fraction.
pub fn observe(core: &WorldCore, st: &CoinsState, cfg: &CoinsConfig, agent_id: usize) -> Observation {
    let cells = cfg.width * cfg.height;
    let mut features = vec![0.0; OBS_PLANES * cells + 1];
    for (i, pose) in core.agents.iter().enumerate() {
        let cell = core.cell_index(pose.pos);
        let plane = if i == agent_id { 0 } else { 1 };
        features[plane * cells + cell] = 1.0;
    }
    for (cell, coin) in st.coins.iter().enumerate() {
        match coin {
            Some(CoinColor::A) => features[2 * cells + cell] = 1.0,
            Some(CoinColor::B) => features[3 * cells + cell] = 1.0,
            None => {}
        }
    }
    features[OBS_PLANES * cells] = core.step_fraction();
    Observation { features }
}

/// Exchanges the color-A and color-B planes for agent 0. Identity for the
/// other seat. Applying it twice restores the original observation.
pub fn symmetrize_observation(mut obs: Observation, agent_id: usize, cells: usize) -> Observation {
    if agent_id == 0 {
        for k in 0..cells {
            obs.features.swap(2 * cells + k, 3 * cells + k);
        }
    }
    obs
}
