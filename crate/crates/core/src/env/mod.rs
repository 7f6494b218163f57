//! The three social-dilemma environments behind one stepping interface.

pub mod cleanup;
pub mod coins;
pub mod harvest;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    place_agents, Action, Position, StepOutcome, WorldCore, COINS_ACTIONS, FULL_ACTIONS,
};
use crate::rng;

pub use cleanup::{CleanupConfig, CleanupState};
pub use coins::{CoinColor, CoinsConfig, CoinsState};
pub use harvest::{HarvestConfig, HarvestState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Coins,
    Cleanup,
    Harvest,
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvKind::Coins => write!(f, "coins"),
            EnvKind::Cleanup => write!(f, "cleanup"),
            EnvKind::Harvest => write!(f, "harvest"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvConfig {
    Coins(CoinsConfig),
    Cleanup(CleanupConfig),
    Harvest(HarvestConfig),
}

impl EnvConfig {
    pub fn kind(&self) -> EnvKind {
        match self {
            EnvConfig::Coins(_) => EnvKind::Coins,
            EnvConfig::Cleanup(_) => EnvKind::Cleanup,
            EnvConfig::Harvest(_) => EnvKind::Harvest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::Coins(c) => c.validate(),
            EnvConfig::Cleanup(c) => c.validate(),
            EnvConfig::Harvest(c) => c.validate(),
        }
    }

    pub fn n_agents(&self) -> usize {
        match self {
            EnvConfig::Coins(_) => 2,
            EnvConfig::Cleanup(c) => c.players,
            EnvConfig::Harvest(c) => c.players,
        }
    }

    pub fn episode_length(&self) -> usize {
        match self {
            EnvConfig::Coins(c) => c.episode_length,
            EnvConfig::Cleanup(c) => c.episode_length,
            EnvConfig::Harvest(c) => c.episode_length,
        }
    }

    pub fn action_set(&self) -> &'static [Action] {
        match self {
            EnvConfig::Coins(_) => &COINS_ACTIONS,
            _ => &FULL_ACTIONS,
        }
    }

    pub fn obs_len(&self) -> usize {
        match self {
            EnvConfig::Coins(c) => coins::OBS_PLANES * c.width * c.height + 1,
            EnvConfig::Cleanup(c) => cleanup::OBS_PLANES * c.window * c.window + 1,
            EnvConfig::Harvest(c) => harvest::OBS_PLANES * c.window * c.window + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvState {
    Coins(CoinsState),
    Cleanup(CleanupState),
    Harvest(HarvestState),
}

/// One-hot feature planes plus a trailing step-fraction scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
}

/// A parsed text map. Characters: `#` wall, `.`/space floor, `R` river,
/// `O` orchard, `A` apple site, `P` spawn point.
#[derive(Debug, Clone)]
pub struct ParsedMap {
    pub width: usize,
    pub height: usize,
    pub walls: Vec<bool>,
    pub river: Vec<bool>,
    pub orchard: Vec<bool>,
    pub sites: Vec<bool>,
    pub spawns: Vec<Position>,
}

pub fn parse_map(text: &str) -> Result<ParsedMap> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.is_empty() {
        return Err(Error::Config("empty map".into()));
    }
    let width = rows[0].chars().count();
    let height = rows.len();
    if width == 0 {
        return Err(Error::Config("zero-width map".into()));
    }
    let mut map = ParsedMap {
        width,
        height,
        walls: vec![false; width * height],
        river: vec![false; width * height],
        orchard: vec![false; width * height],
        sites: vec![false; width * height],
        spawns: Vec::new(),
    };
    for (r, row) in rows.iter().enumerate() {
        let chars: Vec<char> = row.chars().collect();
        if chars.len() != width {
            return Err(Error::Config(format!("ragged map row {r}")));
        }
        for (c, ch) in chars.iter().enumerate() {
            let i = r * width + c;
            match ch {
                '#' => map.walls[i] = true,
                '.' | ' ' => {}
                'R' => map.river[i] = true,
                'O' => map.orchard[i] = true,
                'A' => map.sites[i] = true,
                'P' => map.spawns.push(Position::new(r, c)),
                other => return Err(Error::Config(format!("unknown map character '{other}'"))),
            }
        }
    }
    Ok(map)
}

/// The live environment: core grid plus environment-specific state. The
/// config is cloned in at reset so stepping needs no outside context.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub core: WorldCore,
    pub state: EnvState,
    cfg_kind: EnvKind,
    cfg: EnvConfig,
}

impl World {
    /// Builds the initial state for an episode. Two calls with equal
    /// `(config, seed)` produce identical worlds.
    pub fn reset(cfg: &EnvConfig, seed: u64) -> Result<World> {
        cfg.validate()?;
        let mut core_rng = rng::substream(seed, rng::stream::ENV);
        match cfg {
            EnvConfig::Coins(c) => {
                let walls = vec![false; c.width * c.height];
                let fixed = c.spawn_positions();
                let agents =
                    place_agents(&mut core_rng, c.width, c.height, &walls, fixed.as_deref(), 2)?;
                let core = WorldCore {
                    width: c.width,
                    height: c.height,
                    walls,
                    agents,
                    step_index: 0,
                    episode_length: c.episode_length,
                    rng: core_rng,
                };
                let state = EnvState::Coins(CoinsState::new(c.width * c.height));
                Ok(World { core, state, cfg_kind: EnvKind::Coins, cfg: cfg.clone() })
            }
            EnvConfig::Cleanup(c) => {
                let map = parse_map(c.map_text())?;
                let spawns = if map.spawns.is_empty() { None } else { Some(map.spawns.as_slice()) };
                let agents = place_agents(
                    &mut core_rng,
                    map.width,
                    map.height,
                    &map.walls,
                    spawns,
                    c.players,
                )?;
                let mut core = WorldCore {
                    width: map.width,
                    height: map.height,
                    walls: map.walls.clone(),
                    agents,
                    step_index: 0,
                    episode_length: c.episode_length,
                    rng: core_rng,
                };
                let state = EnvState::Cleanup(CleanupState::init(&map, c, &mut core.rng)?);
                Ok(World { core, state, cfg_kind: EnvKind::Cleanup, cfg: cfg.clone() })
            }
            EnvConfig::Harvest(c) => {
                let map = parse_map(c.map_text())?;
                let spawns = if map.spawns.is_empty() { None } else { Some(map.spawns.as_slice()) };
                let agents = place_agents(
                    &mut core_rng,
                    map.width,
                    map.height,
                    &map.walls,
                    spawns,
                    c.players,
                )?;
                let core = WorldCore {
                    width: map.width,
                    height: map.height,
                    walls: map.walls.clone(),
                    agents,
                    step_index: 0,
                    episode_length: c.episode_length,
                    rng: core_rng,
                };
                let state = EnvState::Harvest(HarvestState::init(&map)?);
                Ok(World { core, state, cfg_kind: EnvKind::Harvest, cfg: cfg.clone() })
            }
        }
    }

    pub fn n_agents(&self) -> usize {
        self.core.agents.len()
    }

    pub fn action_set(&self) -> &'static [Action] {
        self.cfg.action_set()
    }

    pub fn obs_len(&self) -> usize {
        self.cfg.obs_len()
    }

    pub fn kind(&self) -> EnvKind {
        self.cfg_kind
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn done(&self) -> bool {
        self.core.done()
    }

    /// Applies one simultaneous joint action.
    pub fn step(&mut self, action_indices: &[usize]) -> Result<StepOutcome> {
        if self.core.done() {
            return Err(Error::Lifecycle("step called on a finished episode".into()));
        }
        if action_indices.len() != self.core.agents.len() {
            return Err(Error::Arity { expected: self.core.agents.len(), got: action_indices.len() });
        }
        let set = self.cfg.action_set();
        let mut actions = Vec::with_capacity(action_indices.len());
        for &idx in action_indices {
            let a = *set
                .get(idx)
                .ok_or_else(|| Error::Index(format!("action index {idx} out of range")))?;
            actions.push(a);
        }

        let priority = self.core.draw_priority();
        self.core.resolve_movement(&actions, &priority);

        let mut outcome = StepOutcome::empty(self.core.agents.len());
        match (&mut self.state, &self.cfg) {
            (EnvState::Coins(st), EnvConfig::Coins(c)) => {
                coins::resolve_pickups(&self.core, st, c, &mut outcome);
                coins::spawn_coins(&mut self.core, st, c);
            }
            (EnvState::Cleanup(st), EnvConfig::Cleanup(c)) => {
                cleanup::apply_beams(&mut self.core, st, c, &actions, &priority, &mut outcome);
                cleanup::eat_apples(&self.core, st, c, &mut outcome);
                cleanup::tick_dynamics(&mut self.core, st, c);
            }
            (EnvState::Harvest(st), EnvConfig::Harvest(c)) => {
                harvest::apply_beams(&mut self.core, st, c, &actions, &priority, &mut outcome);
                harvest::eat_apples(&self.core, st, c, &mut outcome);
                harvest::regrow(&mut self.core, st, c);
            }
            _ => unreachable!("state/config kind mismatch"),
        }

        self.core.step_index += 1;
        outcome.done = self.core.done();
        Ok(outcome)
    }

    /// Raw observation for `agent_id` (no color symmetrization).
    pub fn observe(&self, agent_id: usize) -> Result<Observation> {
        if agent_id >= self.core.agents.len() {
            return Err(Error::Index(format!("agent {agent_id} out of range")));
        }
        Ok(match (&self.state, &self.cfg) {
            (EnvState::Coins(st), EnvConfig::Coins(c)) => coins::observe(&self.core, st, c, agent_id),
            (EnvState::Cleanup(st), EnvConfig::Cleanup(c)) => {
                cleanup::observe(&self.core, st, c, agent_id)
            }
            (EnvState::Harvest(st), EnvConfig::Harvest(c)) => {
                harvest::observe(&self.core, st, c, agent_id)
            }
            _ => unreachable!(),
        })
    }

    /// Observation as fed to policies and niceness networks: the raw view,
    /// with coin colors swapped for agent 0 when symmetrization is on, so
    /// that both players see "own coins" in the same plane.
    pub fn policy_observation(&self, agent_id: usize) -> Result<Observation> {
        let obs = self.observe(agent_id)?;
        Ok(match (&self.cfg, &self.state) {
            (EnvConfig::Coins(c), _) if c.symmetrize => {
                coins::symmetrize_observation(obs, agent_id, c.width * c.height)
            }
            _ => obs,
        })
    }

    pub fn render_ascii(&self) -> String {
        match (&self.state, &self.cfg) {
            (EnvState::Coins(st), _) => self.core.render(|p| st.glyph(self.core.cell_index(p))),
            (EnvState::Cleanup(st), _) => self.core.render(|p| st.glyph(self.core.cell_index(p))),
            (EnvState::Harvest(st), _) => self.core.render(|p| st.glyph(self.core.cell_index(p))),
        }
    }
}

/// Maps window coordinates to world cell indices for an egocentric,
/// orientation-aligned square window centered on the agent. Out-of-bounds
/// window cells map to `None` (zero padding).
pub(crate) fn window_cells(core: &WorldCore, agent_id: usize, window: usize) -> Vec<Option<usize>> {
    let pose = core.agents[agent_id];
    let half = (window / 2) as i64;
    let mut cells = Vec::with_capacity(window * window);
    for wr in 0..window as i64 {
        for wc in 0..window as i64 {
            let (dr, dc) = (wr - half, wc - half);
            let (vr, vc) = pose.orientation.rotate_offset(dr, dc);
            let (r, c) = (pose.pos.row as i64 + vr, pose.pos.col as i64 + vc);
            if core.in_bounds(r, c) {
                cells.push(Some(r as usize * core.width + c as usize));
            } else {
                cells.push(None);
            }
        }
    }
    cells
}

/// Writes one boolean layer into `features[plane]` for a window mapping.
pub(crate) fn fill_plane(
    features: &mut [f64],
    plane: usize,
    window_cells: &[Option<usize>],
    layer: impl Fn(usize) -> bool,
) {
    let n = window_cells.len();
    let out = &mut features[plane * n..(plane + 1) * n];
    for (slot, cell) in out.iter_mut().zip(window_cells.iter()) {
        *slot = match cell {
            Some(i) if layer(*i) => 1.0,
            _ => 0.0,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_map_roundtrip() {
        let m = parse_map("###\n#P#\n###").unwrap();
        assert_eq!((m.width, m.height), (3, 3));
        assert_eq!(m.spawns, vec![Position::new(1, 1)]);
        assert!(m.walls[0] && !m.walls[4]);
    }

    #[test]
    fn parse_map_rejects_ragged() {
        assert!(parse_map("##\n###").is_err());
    }

    #[test]
    fn parse_map_rejects_unknown_char() {
        assert!(parse_map("#X#").is_err());
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = EnvConfig::Coins(CoinsConfig::default());
        let a = World::reset(&cfg, 7).unwrap();
        let b = World::reset(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = World::reset(&cfg, 8).unwrap();
        assert!(a.core.agents != c.core.agents || a.core.rng != c.core.rng);
    }

    #[test]
    fn coins_reset_shape() {
        let cfg = EnvConfig::Coins(CoinsConfig::default());
        let w = World::reset(&cfg, 7).unwrap();
        assert_eq!((w.core.width, w.core.height), (5, 5));
        assert_eq!(w.n_agents(), 2);
        match &w.state {
            EnvState::Coins(st) => assert_eq!(st.coin_count(), 0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn step_after_done_is_lifecycle_error() {
        let mut cfg = CoinsConfig::default();
        cfg.episode_length = 2;
        let mut w = World::reset(&EnvConfig::Coins(cfg), 1).unwrap();
        let noop = vec![4usize, 4];
        assert!(!w.step(&noop).unwrap().done);
        assert!(w.step(&noop).unwrap().done);
        assert!(matches!(w.step(&noop), Err(Error::Lifecycle(_))));
    }

    #[test]
    fn wrong_action_count_is_arity_error() {
        let mut w = World::reset(&EnvConfig::Coins(CoinsConfig::default()), 1).unwrap();
        assert!(matches!(w.step(&[0]), Err(Error::Arity { expected: 2, got: 1 })));
    }

    #[test]
    fn observe_invalid_agent_is_index_error() {
        let w = World::reset(&EnvConfig::Coins(CoinsConfig::default()), 1).unwrap();
        assert!(matches!(w.observe(5), Err(Error::Index(_))));
    }

    #[test]
    fn identical_seeds_identical_trajectories() {
        let cfg = EnvConfig::Coins(CoinsConfig::default());
        let mut a = World::reset(&cfg, 42).unwrap();
        let mut b = World::reset(&cfg, 42).unwrap();
        for t in 0..50 {
            let acts = vec![t % 5, (t * 3 + 1) % 5];
            let oa = a.step(&acts).unwrap();
            let ob = b.step(&acts).unwrap();
            assert_eq!(oa, ob);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn done_exactly_at_horizon() {
        let cfg = EnvConfig::Coins(CoinsConfig::default());
        let mut w = World::reset(&cfg, 3).unwrap();
        let noop = vec![4usize, 4];
        for t in 0..500 {
            let out = w.step(&noop).unwrap();
            assert_eq!(out.done, t == 499, "step {t}");
        }
    }

    #[test]
    fn agents_never_overlap() {
        let cfg = EnvConfig::Coins(CoinsConfig::default());
        for seed in 0..20 {
            let mut w = World::reset(&cfg, seed).unwrap();
            let mut rng_actions = crate::rng::substream(seed, 99);
            use rand::Rng;
            for _ in 0..200 {
                let acts: Vec<usize> = (0..2).map(|_| rng_actions.gen_range(0..5)).collect();
                w.step(&acts).unwrap();
                assert_ne!(w.core.agents[0].pos, w.core.agents[1].pos);
            }
        }
    }
}
