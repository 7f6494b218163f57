//! Common-pool resource game: apples regrow at a rate set by nearby apples
//! and never regrow once a patch is wiped out.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Action, Position, StepOutcome, WorldCore};

use super::{fill_plane, window_cells, Observation, ParsedMap};

/// Planes: wall, other agents, apple, apple site.
pub const OBS_PLANES: usize = 4;

/// 16 x 38 layout with apple clusters (width x height given as cols x rows).
pub const DEFAULT_MAP: &str = "\
######################################
#P...................................#
#....AAA.......AAA........AAA........#
#...AAAAA.....AAAAA......AAAAA.......#
#....AAA.......AAA........AAA........#
#P...................................#
#.........AAA........AAA.............#
#........AAAAA......AAAAA............#
#.........AAA........AAA.............#
#P...................................#
#....AAA.......AAA........AAA........#
#...AAAAA.....AAAAA......AAAAA.......#
#....AAA.......AAA........AAA........#
#P...................................#
#P...................................#
######################################";

/// 10 x 15 desk-scale layout.
pub const DESK_MAP: &str = "\
##########
#P.......#
#..AAA...#
#.AAAAA..#
#..AAA...#
#P.......#
#........#
#..AAA...#
#.AAAAA..#
#..AAA...#
#P.......#
#........#
#P.......#
#P.......#
##########";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct HarvestConfig {
    pub map: Option<String>,
    /// "default" or "desk".
    pub map_name: String,
    pub players: usize,
    pub episode_length: usize,
    pub apple_reward: f64,
    /// Regrowth probability for 1-2 apple neighbors.
    pub regrow_prob_sparse: f64,
    /// Regrowth probability for 3-4 apple neighbors.
    pub regrow_prob_medium: f64,
    /// Regrowth probability for 5+ apple neighbors.
    pub regrow_prob_dense: f64,
    /// Cap applied to the sustainability value of an eaten apple.
    pub sus_cap: u32,
    /// Decay the niceness trace only on eating events instead of every step.
    pub per_event_niceness_decay: bool,
    pub fine_beam_length: usize,
    pub fine_penalty: f64,
    pub fine_cost: f64,
    pub fine_enabled: bool,
    pub window: usize,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        HarvestConfig {
            map: None,
            map_name: "default".into(),
            players: 5,
            episode_length: 1000,
            apple_reward: 1.0,
            regrow_prob_sparse: 0.01,
            regrow_prob_medium: 0.05,
            regrow_prob_dense: 0.1,
            sus_cap: 3,
            per_event_niceness_decay: false,
            fine_beam_length: 5,
            fine_penalty: -50.0,
            fine_cost: -1.0,
            fine_enabled: true,
            window: 15,
        }
    }
}

impl HarvestConfig {
    pub fn map_text(&self) -> &str {
        match &self.map {
            Some(m) => m,
            None => match self.map_name.as_str() {
                "desk" => DESK_MAP,
                _ => DEFAULT_MAP,
            },
        }
    }

    /// Regrowth probability as a function of the apple-neighbor count.
    /// Zero neighbors never regrow.
    pub fn regrow_probability(&self, neighbors: u32) -> f64 {
        match neighbors {
            0 => 0.0,
            1 | 2 => self.regrow_prob_sparse,
            3 | 4 => self.regrow_prob_medium,
            _ => self.regrow_prob_dense,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.players == 0 {
            return Err(Error::Config("players must be positive".into()));
        }
        if self.episode_length == 0 {
            return Err(Error::Config("episode length must be positive".into()));
        }
        for (name, p) in [
            ("regrow_prob_sparse", self.regrow_prob_sparse),
            ("regrow_prob_medium", self.regrow_prob_medium),
            ("regrow_prob_dense", self.regrow_prob_dense),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0,1]")));
            }
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::Config("window must be odd and >= 3".into()));
        }
        if self.fine_beam_length == 0 {
            return Err(Error::Config("fine beam length must be positive".into()));
        }
        if self.map_name != "default" && self.map_name != "desk" {
            return Err(Error::Config(format!("unknown map_name '{}'", self.map_name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarvestState {
    /// Cells where apples may ever exist (the initial layout).
    pub sites: Vec<bool>,
    site_cells: Vec<usize>,
    apples: Vec<bool>,
    apple_count: usize,
}

impl HarvestState {
    pub fn init(map: &ParsedMap) -> Result<Self> {
        let site_cells: Vec<usize> = (0..map.sites.len()).filter(|&i| map.sites[i]).collect();
        if site_cells.is_empty() {
            return Err(Error::Config("harvest map needs apple sites".into()));
        }
        Ok(HarvestState {
            sites: map.sites.clone(),
            apples: map.sites.clone(), // all sites start with apples
            apple_count: site_cells.len(),
            site_cells,
        })
    }

    pub fn apple_count(&self) -> usize {
        self.apple_count
    }

    pub fn has_apple(&self, cell: usize) -> bool {
        self.apples[cell]
    }

    pub fn remove_apple(&mut self, cell: usize) {
        debug_assert!(self.apples[cell]);
        self.apples[cell] = false;
        self.apple_count -= 1;
    }

    pub fn place_apple(&mut self, cell: usize) {
        debug_assert!(self.sites[cell] && !self.apples[cell]);
        self.apples[cell] = true;
        self.apple_count += 1;
    }

    pub fn apples(&self) -> &[bool] {
        &self.apples
    }

    pub(super) fn glyph(&self, cell: usize) -> Option<char> {
        if self.apples[cell] {
            Some('o')
        } else if self.sites[cell] {
            Some(',')
        } else {
            None
        }
    }
}

/// Number of apple-occupied cells within l1 distance 2 of `pos`, excluding
/// `pos` itself.
pub fn neighbor_count(pos: Position, apples: &[bool], width: usize, height: usize) -> u32 {
    let mut count = 0;
    for dr in -2i64..=2 {
        for dc in -2i64..=2 {
            if dr == 0 && dc == 0 {
                continue;
            }
            if dr.abs() + dc.abs() > 2 {
                continue;
            }
            let (r, c) = (pos.row as i64 + dr, pos.col as i64 + dc);
            if r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width {
                if apples[r as usize * width + c as usize] {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Sustainability of eating the apple at `pos`: its neighbor count on the
/// pre-pickup apple set, capped.
pub fn sus(pos: Position, apples_before: &[bool], width: usize, height: usize, cap: u32) -> u32 {
    neighbor_count(pos, apples_before, width, height).min(cap)
}

/// Fining beams only; the cleaning action is a no-op here.
pub fn apply_beams(
    core: &mut WorldCore,
    _st: &mut HarvestState,
    cfg: &HarvestConfig,
    actions: &[Action],
    priority: &[usize],
    outcome: &mut StepOutcome,
) {
    for &i in priority {
        if actions[i] == Action::FineBeam && cfg.fine_enabled {
            super::cleanup::fire_fine_beam(
                core,
                i,
                cfg.fine_beam_length,
                cfg.fine_penalty,
                cfg.fine_cost,
                outcome,
            );
        }
    }
}

/// Agents standing on apples eat them. Sustainability values are computed
/// against the apple set as it stood before any removal this step, so an
/// eaten apple never counts itself and simultaneous pickups are symmetric.
pub fn eat_apples(core: &WorldCore, st: &mut HarvestState, cfg: &HarvestConfig, outcome: &mut StepOutcome) {
    let any = core
        .agents
        .iter()
        .any(|pose| st.apples[core.cell_index(pose.pos)]);
    if !any {
        return;
    }
    let before = st.apples.clone();
    for (i, pose) in core.agents.iter().enumerate() {
        let cell = core.cell_index(pose.pos);
        if st.apples[cell] {
            st.remove_apple(cell);
            let s = sus(pose.pos, &before, core.width, core.height, cfg.sus_cap);
            outcome.rewards[i] += cfg.apple_reward;
            outcome.events[i].eaten_sus = Some(s);
            outcome.events[i].ate_apple = true;
            outcome.niceness_increments[i] += s as f64;
            outcome.niceness_events[i] = true;
        }
    }
}

/// Each empty apple site independently regrows with the probability for its
/// current neighbor count. Counts are taken against a snapshot so regrowth
/// within a step is simultaneous. Sites under agents stay empty.
pub fn regrow(core: &mut WorldCore, st: &mut HarvestState, cfg: &HarvestConfig) {
    if st.apple_count == 0 {
        return; // extinction is absorbing: no neighbors anywhere
    }
    let snapshot = st.apples.clone();
    for idx in 0..st.site_cells.len() {
        let cell = st.site_cells[idx];
        if snapshot[cell] {
            continue;
        }
        let pos = Position::new(cell / core.width, cell % core.width);
        if core.agent_at(pos).is_some() {
            continue;
        }
        let n = neighbor_count(pos, &snapshot, core.width, core.height);
        let p = cfg.regrow_probability(n);
        if p > 0.0 && core.rng.gen::<f64>() < p {
            st.place_apple(cell);
        }
    }
}

/// Egocentric windowed observation plus the step fraction.
pub fn observe(core: &WorldCore, st: &HarvestState, cfg: &HarvestConfig, agent_id: usize) -> Observation {
    let win = window_cells(core, agent_id, cfg.window);
    let n = win.len();
    let mut features = vec![0.0; OBS_PLANES * n + 1];
    let mut occupied = vec![false; core.width * core.height];
    for (i, pose) in core.agents.iter().enumerate() {
        if i != agent_id {
            occupied[core.cell_index(pose.pos)] = true;
        }
    }
    fill_plane(&mut features, 0, &win, |c| core.walls[c]);
    fill_plane(&mut features, 1, &win, |c| occupied[c]);
    fill_plane(&mut features, 2, &win, |c| st.apples[c]);
    fill_plane(&mut features, 3, &win, |c| st.sites[c]);
    features[OBS_PLANES * n] = core.step_fraction();
    Observation { features }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, EnvState, World};
    use crate::grid::{AgentPose, Orientation};

    fn desk_config() -> HarvestConfig {
        HarvestConfig { map_name: "desk".into(), ..HarvestConfig::default() }
    }

    fn world_with(seed: u64, cfg: HarvestConfig) -> World {
        World::reset(&EnvConfig::Harvest(cfg), seed).unwrap()
    }

    fn state(w: &mut World) -> &mut HarvestState {
        match &mut w.state {
            EnvState::Harvest(st) => st,
            _ => unreachable!(),
        }
    }

    fn grid_apples(width: usize, height: usize, at: &[(usize, usize)]) -> Vec<bool> {
        let mut apples = vec![false; width * height];
        for &(r, c) in at {
            apples[r * width + c] = true;
        }
        apples
    }

    #[test]
    fn neighbor_count_isolated() {
        let apples = grid_apples(9, 9, &[(4, 4)]);
        assert_eq!(neighbor_count(Position::new(4, 4), &apples, 9, 9), 0);
    }

    #[test]
    fn neighbor_count_radius_boundary() {
        // Apples at distances 1, 2 and 3 from the center cell.
        let apples = grid_apples(9, 9, &[(4, 4), (4, 5), (4, 6), (4, 7)]);
        assert_eq!(neighbor_count(Position::new(4, 4), &apples, 9, 9), 2);
    }

    #[test]
    fn neighbor_count_full_ball() {
        // Enumerate the full l1 ball of radius 2: 13 cells including center.
        let mut at = Vec::new();
        for dr in -2i64..=2 {
            for dc in -2i64..=2 {
                if dr.abs() + dc.abs() <= 2 {
                    at.push(((4 + dr) as usize, (4 + dc) as usize));
                }
            }
        }
        assert_eq!(at.len(), 13);
        let apples = grid_apples(9, 9, &at);
        assert_eq!(neighbor_count(Position::new(4, 4), &apples, 9, 9), 12);
    }

    #[test]
    fn sus_caps_at_config_value() {
        let mut at = vec![(4usize, 4usize)];
        // 7 neighbors within radius 2.
        at.extend([(3, 4), (5, 4), (4, 3), (4, 5), (3, 3), (5, 5), (2, 4)]);
        let apples = grid_apples(9, 9, &at);
        assert_eq!(neighbor_count(Position::new(4, 4), &apples, 9, 9), 7);
        assert_eq!(sus(Position::new(4, 4), &apples, 9, 9, 3), 3);

        let two = grid_apples(9, 9, &[(4, 4), (3, 4), (4, 5)]);
        assert_eq!(sus(Position::new(4, 4), &two, 9, 9, 3), 2);

        let alone = grid_apples(9, 9, &[(4, 4)]);
        assert_eq!(sus(Position::new(4, 4), &alone, 9, 9, 3), 0);
    }

    #[test]
    fn extinction_is_absorbing() {
        let mut w = world_with(1, desk_config());
        {
            let st = state(&mut w);
            let cells: Vec<usize> = st.site_cells.clone();
            for c in cells {
                if st.apples[c] {
                    st.remove_apple(c);
                }
            }
        }
        let noop = vec![8usize; 5];
        for _ in 0..500 {
            w.step(&noop).unwrap();
            assert_eq!(state(&mut w).apple_count(), 0);
        }
    }

    #[test]
    fn isolated_cluster_never_returns() {
        // Empty one whole cluster; its sites have zero apple neighbors only if
        // the cluster is isolated from others by more than distance 2, which
        // holds for the desk map's two clusters.
        let mut w = world_with(2, desk_config());
        let (width, height) = (w.core.width, w.core.height);
        {
            let st = state(&mut w);
            let cells: Vec<usize> = st.site_cells.clone();
            for c in cells {
                // Cluster 1 occupies rows 2-4.
                if c / width <= 4 && st.apples[c] {
                    st.remove_apple(c);
                }
            }
            // Verify isolation: every emptied site has zero apple neighbors.
            for &c in st.site_cells.iter() {
                if c / width <= 4 {
                    let pos = Position::new(c / width, c % width);
                    assert_eq!(neighbor_count(pos, &st.apples, width, height), 0);
                }
            }
        }
        let noop = vec![8usize; 5];
        for _ in 0..300 {
            w.step(&noop).unwrap();
        }
        let st = state(&mut w);
        for &c in st.site_cells.clone().iter() {
            if c / width <= 4 {
                assert!(!st.apples[c], "cluster regrew at cell {c}");
            }
        }
    }

    #[test]
    fn regrow_table_monotone() {
        let cfg = HarvestConfig::default();
        let mut prev = 0.0;
        for n in 0..8 {
            let p = cfg.regrow_probability(n);
            assert!(p >= prev);
            prev = p;
        }
        assert_eq!(cfg.regrow_probability(0), 0.0);
    }

    #[test]
    fn eating_uses_pre_pickup_set() {
        // A tight plus-shaped cluster of 5 apples; eating the center sees 4
        // neighbors -> sus capped to 3.
        let mut w = world_with(3, desk_config());
        {
            let st = state(&mut w);
            let cells: Vec<usize> = st.site_cells.clone();
            for c in cells {
                if st.apples[c] {
                    st.remove_apple(c);
                }
            }
        }
        let width = w.core.width;
        let center = (3, 3);
        {
            let st = state(&mut w);
            // Desk map cluster 1 occupies rows 2-4. Tight cluster around (3,3).
            for (r, c) in [(3, 3), (2, 3), (4, 3), (3, 2), (3, 4), (2, 4), (4, 4)] {
                let cell = r * width + c;
                assert!(st.sites[cell], "({r},{c}) is not a site");
                st.place_apple(cell);
            }
        }
        // Park the other agents away, walk agent 0 onto the center.
        w.core.agents[0] =
            AgentPose { pos: Position::new(center.0 + 1, center.1), orientation: Orientation::North };
        for (i, pose) in w.core.agents.iter_mut().enumerate().skip(1) {
            pose.pos = Position::new(12, 1 + i);
        }
        // Agent 0 starts on the apple at (4,3); clear it so only the center
        // pickup happens, leaving 5 pre-pickup neighbors around (3,3).
        {
            let st = state(&mut w);
            st.remove_apple((center.0 + 1) * width + center.1);
        }
        let mut acts = vec![8usize; 5];
        acts[0] = 0; // north
        let out = w.step(&acts).unwrap();
        assert_eq!(out.events[0].eaten_sus, Some(3)); // 5 neighbors capped at 3
        assert_eq!(out.niceness_increments[0], 3.0);
    }

    /// Regrowth frequency for a dense (5-neighbor) site over many trials.
    #[test]
    fn regrow_frequency_dense_class() {
        let cfg = desk_config();
        let mut w = world_with(7, cfg.clone());
        let width = w.core.width;
        // Park agents away from the clusters.
        for (i, pose) in w.core.agents.iter_mut().enumerate() {
            pose.pos = Position::new(12, 1 + i);
        }
        let trials = 10_000;
        let mut hits = 0usize;
        let target = 3 * width + 3; // center of cluster 1
        let World { core, state: env_state, .. } = &mut w;
        let st = match env_state {
            EnvState::Harvest(st) => st,
            _ => unreachable!(),
        };
        for _ in 0..trials {
            // Reset: all cluster-1 apples present except the center.
            let cells: Vec<usize> = st.site_cells.clone();
            for c in cells {
                if !st.apples[c] {
                    st.place_apple(c);
                }
            }
            st.remove_apple(target);
            let n = neighbor_count(Position::new(3, 3), st.apples(), width, core.height);
            assert!(n >= 5);
            regrow(core, st, &cfg);
            if st.apples[target] {
                hits += 1;
            }
        }
        let p = cfg.regrow_prob_dense;
        let freq = hits as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "freq {freq} vs {p}");
    }
}
