//! Public-goods game: waste accumulates in a river and suppresses apple
//! spawning in a separate orchard. Cleaning is unrewarded but necessary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Action, Position, StepOutcome, WorldCore};

use super::{fill_plane, window_cells, Observation, ParsedMap};

/// Planes: wall, other agents, waste, apple, river region, orchard region.
pub const OBS_PLANES: usize = 6;

/// 18 x 25 layout: river strip on the left, orchard on the right.
pub const DEFAULT_MAP: &str = "\
##################
#RR............OO#
#RR............OO#
#RR..P.....P...OO#
#RR............OO#
#RR............OO#
#RR............OO#
#RR....P.......OO#
#RR............OO#
#RR............OO#
#RR............OO#
#RR............OO#
#RR............OO#
#RR............OO#
#RR............OO#
#RR............OO#
#RR............OO#
#RR..P.....P...OO#
#RR............OO#
#RR............OO#
#RR............OO#
#RR............OO#
#RR............OO#
#RR............OO#
##################";

/// 10 x 15 desk-scale layout used for fast experiments.
pub const DESK_MAP: &str = "\
##########
#RR....OO#
#RR....OO#
#RR.P..OO#
#RR....OO#
#RR.P..OO#
#RR....OO#
#RR.P..OO#
#RR....OO#
#RR.P..OO#
#RR....OO#
#RR.P..OO#
#RR....OO#
#RR....OO#
##########";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CleanupConfig {
    /// Text map; `map_name` selects a built-in when `map` is omitted.
    pub map: Option<String>,
    /// "default" or "desk".
    pub map_name: String,
    pub players: usize,
    pub episode_length: usize,
    pub apple_reward: f64,
    /// Per-step probability that one waste unit appears in the river.
    pub waste_spawn_prob: f64,
    /// Per-empty-orchard-cell per-step apple probability at zero waste.
    pub apple_spawn_rate_max: f64,
    /// Fraction of river capacity at which apple spawning reaches zero.
    pub critical_waste_fraction: f64,
    /// Initial waste as a fraction of capacity; defaults to
    /// 1.05 x critical_waste_fraction (clamped to capacity).
    pub initial_waste_fraction: Option<f64>,
    pub clean_beam_length: usize,
    pub fine_beam_length: usize,
    pub fine_penalty: f64,
    pub fine_cost: f64,
    pub fine_enabled: bool,
    /// Egocentric observation window (odd).
    pub window: usize,
}

impl Default for CleanupConfig {
    fn default() -> Self {
        CleanupConfig {
            map: None,
            map_name: "default".into(),
            players: 5,
            episode_length: 1000,
            apple_reward: 1.0,
            waste_spawn_prob: 0.5,
            apple_spawn_rate_max: 0.05,
            critical_waste_fraction: 0.4,
            initial_waste_fraction: None,
            clean_beam_length: 3,
            fine_beam_length: 5,
            fine_penalty: -50.0,
            fine_cost: -1.0,
            fine_enabled: true,
            window: 15,
        }
    }
}

impl CleanupConfig {
    pub fn map_text(&self) -> &str {
        match &self.map {
            Some(m) => m,
            None => match self.map_name.as_str() {
                "desk" => DESK_MAP,
                _ => DEFAULT_MAP,
            },
        }
    }

    pub fn initial_fraction(&self) -> f64 {
        self.initial_waste_fraction
            .unwrap_or(1.05 * self.critical_waste_fraction)
            .min(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.players == 0 {
            return Err(Error::Config("players must be positive".into()));
        }
        if self.episode_length == 0 {
            return Err(Error::Config("episode length must be positive".into()));
        }
        if !(self.critical_waste_fraction > 0.0 && self.critical_waste_fraction <= 1.0) {
            return Err(Error::Config("critical_waste_fraction must be in (0,1]".into()));
        }
        if self.initial_fraction() <= self.critical_waste_fraction {
            return Err(Error::Config(
                "initial waste must start above the apple-spawn cutoff".into(),
            ));
        }
        for (name, p) in [
            ("waste_spawn_prob", self.waste_spawn_prob),
            ("apple_spawn_rate_max", self.apple_spawn_rate_max),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0,1]")));
            }
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::Config("window must be odd and >= 3".into()));
        }
        if self.clean_beam_length == 0 || self.fine_beam_length == 0 {
            return Err(Error::Config("beam lengths must be positive".into()));
        }
        if self.map_name != "default" && self.map_name != "desk" {
            return Err(Error::Config(format!("unknown map_name '{}'", self.map_name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanupState {
    pub river: Vec<bool>,
    pub orchard: Vec<bool>,
    /// Cell indices of the river/orchard, in row-major order.
    river_cells: Vec<usize>,
    orchard_cells: Vec<usize>,
    waste: Vec<bool>,
    waste_count: usize,
    apples: Vec<bool>,
}

impl CleanupState {
    pub fn init(map: &ParsedMap, cfg: &CleanupConfig, rng: &mut impl Rng) -> Result<Self> {
        let river_cells: Vec<usize> = (0..map.river.len()).filter(|&i| map.river[i]).collect();
        let orchard_cells: Vec<usize> = (0..map.orchard.len()).filter(|&i| map.orchard[i]).collect();
        if river_cells.is_empty() || orchard_cells.is_empty() {
            return Err(Error::Config("cleanup map needs river and orchard cells".into()));
        }
        let capacity = river_cells.len();
        let target = ((cfg.initial_fraction() * capacity as f64).ceil() as usize).min(capacity);
        let mut st = CleanupState {
            river: map.river.clone(),
            orchard: map.orchard.clone(),
            river_cells,
            orchard_cells,
            waste: vec![false; map.river.len()],
            waste_count: 0,
            apples: vec![false; map.orchard.len()],
        };
        // Random subset of river cells receives the initial waste.
        let mut pool = st.river_cells.clone();
        for _ in 0..target {
            let k = rng.gen_range(0..pool.len());
            let cell = pool.swap_remove(k);
            st.waste[cell] = true;
            st.waste_count += 1;
        }
        debug_assert!(st.waste_count as f64 > cfg.critical_waste_fraction * capacity as f64);
        Ok(st)
    }

    pub fn capacity(&self) -> usize {
        self.river_cells.len()
    }

    pub fn waste_count(&self) -> usize {
        self.waste_count
    }

    pub fn apple_count(&self) -> usize {
        self.apples.iter().filter(|&&a| a).count()
    }

    pub fn has_apple(&self, cell: usize) -> bool {
        self.apples[cell]
    }

    pub fn has_waste(&self, cell: usize) -> bool {
        self.waste[cell]
    }

    pub fn add_waste(&mut self, cell: usize) {
        debug_assert!(self.river[cell] && !self.waste[cell]);
        self.waste[cell] = true;
        self.waste_count += 1;
    }

    pub(super) fn glyph(&self, cell: usize) -> Option<char> {
        if self.waste[cell] {
            Some('w')
        } else if self.apples[cell] {
            Some('o')
        } else if self.river[cell] {
            Some('r')
        } else if self.orchard[cell] {
            Some(',')
        } else {
            None
        }
    }
}

/// Apple spawn probability under the current waste level: r_max scaled
/// linearly down to exactly zero at the critical waste level.
pub fn apple_spawn_prob(waste_count: usize, cfg: &CleanupConfig, capacity: usize) -> f64 {
    let critical = cfg.critical_waste_fraction * capacity as f64;
    cfg.apple_spawn_rate_max * (1.0 - waste_count as f64 / critical).max(0.0)
}

/// Fires the cleaning beam for `agent`: the first waste cell within range is
/// emptied. Returns the number of cells cleaned (0 or 1).
pub fn fire_clean_beam(core: &WorldCore, st: &mut CleanupState, cfg: &CleanupConfig, agent: usize) -> u32 {
    for pos in core.beam_cells(agent, cfg.clean_beam_length) {
        let cell = core.cell_index(pos);
        if st.waste[cell] {
            st.waste[cell] = false;
            st.waste_count -= 1;
            return 1;
        }
    }
    0
}

/// Fires the fining beam: the first agent hit pays `fine_penalty`, the firer
/// pays `fine_cost`.
pub fn fire_fine_beam(
    core: &WorldCore,
    firer: usize,
    length: usize,
    penalty: f64,
    cost: f64,
    outcome: &mut StepOutcome,
) {
    for pos in core.beam_cells(firer, length) {
        if let Some(hit) = core.agent_at(pos) {
            outcome.rewards[hit] += penalty;
            outcome.rewards[firer] += cost;
            outcome.events[hit].fined = true;
            return;
        }
    }
}

/// Resolves cleaning and fining actions in priority order.
pub fn apply_beams(
    core: &mut WorldCore,
    st: &mut CleanupState,
    cfg: &CleanupConfig,
    actions: &[Action],
    priority: &[usize],
    outcome: &mut StepOutcome,
) {
    for &i in priority {
        match actions[i] {
            Action::CleanBeam => {
                let cleaned = fire_clean_beam(core, st, cfg, i);
                outcome.events[i].cleaned += cleaned;
                outcome.niceness_increments[i] += niceness_increment(cleaned);
                if cleaned > 0 {
                    outcome.niceness_events[i] = true;
                }
            }
            Action::FineBeam if cfg.fine_enabled => {
                fire_fine_beam(core, i, cfg.fine_beam_length, cfg.fine_penalty, cfg.fine_cost, outcome);
            }
            _ => {}
        }
    }
}

/// 1 per waste unit removed, 0 otherwise.
pub fn niceness_increment(cleaned: u32) -> f64 {
    cleaned as f64
}

/// Agents standing on apples eat them.
pub fn eat_apples(core: &WorldCore, st: &mut CleanupState, cfg: &CleanupConfig, outcome: &mut StepOutcome) {
    for (i, pose) in core.agents.iter().enumerate() {
        let cell = core.cell_index(pose.pos);
        if st.apples[cell] {
            st.apples[cell] = false;
            outcome.rewards[i] += cfg.apple_reward;
            outcome.events[i].ate_apple = true;
        }
    }
}

/// Waste spawn (at most one unit per step) followed by apple spawning at the
/// waste-dependent rate. Apples do not spawn under agents.
pub fn tick_dynamics(core: &mut WorldCore, st: &mut CleanupState, cfg: &CleanupConfig) {
    if cfg.waste_spawn_prob > 0.0 && core.rng.gen::<f64>() < cfg.waste_spawn_prob {
        let empties: Vec<usize> =
            st.river_cells.iter().copied().filter(|&c| !st.waste[c]).collect();
        if !empties.is_empty() {
            let k = core.rng.gen_range(0..empties.len());
            st.add_waste(empties[k]);
        }
    }
    let p = apple_spawn_prob(st.waste_count, cfg, st.capacity());
    if p > 0.0 {
        for idx in 0..st.orchard_cells.len() {
            let cell = st.orchard_cells[idx];
            if st.apples[cell] {
                continue;
            }
            let pos = Position::new(cell / core.width, cell % core.width);
            if core.agent_at(pos).is_some() {
                continue;
            }
            if core.rng.gen::<f64>() < p {
                st.apples[cell] = true;
            }
        }
    }
}

/// Egocentric windowed observation plus the step fraction.
pub fn observe(core: &WorldCore, st: &CleanupState, cfg: &CleanupConfig, agent_id: usize) -> Observation {
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
    fill_plane(&mut features, 2, &win, |c| st.waste[c]);
    fill_plane(&mut features, 3, &win, |c| st.apples[c]);
    fill_plane(&mut features, 4, &win, |c| st.river[c]);
    fill_plane(&mut features, 5, &win, |c| st.orchard[c]);
    features[OBS_PLANES * n] = core.step_fraction();
    Observation { features }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, EnvState, World};
    use crate::grid::{AgentPose, Orientation};

    fn desk_config() -> CleanupConfig {
        CleanupConfig { map_name: "desk".into(), ..CleanupConfig::default() }
    }

    fn world_with(seed: u64, cfg: CleanupConfig) -> World {
        World::reset(&EnvConfig::Cleanup(cfg), seed).unwrap()
    }

    fn state(w: &mut World) -> &mut CleanupState {
        match &mut w.state {
            EnvState::Cleanup(st) => st,
            _ => unreachable!(),
        }
    }

    #[test]
    fn spawn_rate_endpoints_and_linearity() {
        let cfg = CleanupConfig::default();
        let capacity = 100;
        assert_eq!(apple_spawn_prob(0, &cfg, capacity), cfg.apple_spawn_rate_max);
        // At the critical level (0.4 * 100 = 40) the rate is exactly zero.
        assert_eq!(apple_spawn_prob(40, &cfg, capacity), 0.0);
        assert_eq!(apple_spawn_prob(60, &cfg, capacity), 0.0);
        // Halfway to critical: half rate.
        let half = apple_spawn_prob(20, &cfg, capacity);
        assert!((half - cfg.apple_spawn_rate_max / 2.0).abs() < 1e-12);
    }

    #[test]
    fn initial_waste_above_cutoff() {
        let mut w = world_with(3, desk_config());
        let cfg = desk_config();
        let st = state(&mut w);
        let critical = cfg.critical_waste_fraction * st.capacity() as f64;
        assert!(st.waste_count() as f64 > critical);
    }

    #[test]
    fn idle_agents_earn_nothing() {
        let mut cfg = desk_config();
        cfg.fine_enabled = false;
        let mut w = world_with(5, cfg);
        let noop = vec![8usize; 5];
        let mut total = 0.0;
        for _ in 0..1000 {
            let out = w.step(&noop).unwrap();
            total += out.rewards.iter().sum::<f64>();
        }
        assert_eq!(total, 0.0);
        assert_eq!(state(&mut w).apple_count(), 0);
    }

    #[test]
    fn clean_beam_geometry() {
        let cfg = desk_config();
        let mut w = world_with(2, cfg.clone());
        // Re-stage: agent 0 at (1,4) facing west toward the river columns 1-2.
        w.core.agents[0] = AgentPose { pos: Position::new(1, 4), orientation: Orientation::West };
        let World { core, state: env_state, .. } = &mut w;
        let st = match env_state {
            EnvState::Cleanup(st) => st,
            _ => unreachable!(),
        };
        st.waste.iter_mut().for_each(|v| *v = false);
        st.waste_count = 0;
        let waste_cell = 12; // (1, 2)

        // Distance 2 is within the length-3 beam.
        st.add_waste(waste_cell);
        assert_eq!(fire_clean_beam(core, st, &cfg, 0), 1);
        assert_eq!(st.waste_count(), 0);

        // Facing away: no hit.
        st.add_waste(waste_cell);
        core.agents[0].orientation = Orientation::East;
        assert_eq!(fire_clean_beam(core, st, &cfg, 0), 0);

        // Distance 4 exceeds beam length 3.
        core.agents[0] = AgentPose { pos: Position::new(1, 6), orientation: Orientation::West };
        assert_eq!(fire_clean_beam(core, st, &cfg, 0), 0);
        assert_eq!(st.waste_count(), 1);
    }

    #[test]
    fn niceness_increment_is_cleaned_count() {
        assert_eq!(niceness_increment(0), 0.0);
        assert_eq!(niceness_increment(1), 1.0);
    }

    #[test]
    fn river_capacity_respected() {
        let mut cfg = desk_config();
        cfg.waste_spawn_prob = 1.0;
        let mut w = world_with(9, cfg);
        let noop = vec![8usize; 5];
        let capacity = state(&mut w).capacity();
        for _ in 0..capacity + 10 {
            w.step(&noop).unwrap();
            assert!(state(&mut w).waste_count() <= capacity);
        }
        assert_eq!(state(&mut w).waste_count(), capacity);
    }

    #[test]
    fn apple_rate_monotone_in_waste() {
        let cfg = CleanupConfig::default();
        let mut prev = f64::INFINITY;
        for waste in 0..=50 {
            let p = apple_spawn_prob(waste, &cfg, 50);
            assert!(p <= prev);
            prev = p;
        }
    }

    /// Spawn statistics: with waste fixed below critical and no agents near
    /// the orchard, per-cell apple appearance matches the analytic rate.
    #[test]
    fn apple_spawn_statistics() {
        let mut cfg = desk_config();
        cfg.waste_spawn_prob = 0.0;
        let trials = 3000;
        let mut w = world_with(13, cfg.clone());
        // Force waste to half the critical level.
        {
            let st = state(&mut w);
            st.waste.iter_mut().for_each(|v| *v = false);
            st.waste_count = 0;
            let critical = cfg.critical_waste_fraction * st.capacity() as f64;
            let target = (critical / 2.0).floor() as usize;
            let cells = st.river_cells.clone();
            for &c in cells.iter().take(target) {
                st.add_waste(c);
            }
        }
        let p_expected = apple_spawn_prob(state(&mut w).waste_count(), &cfg, state(&mut w).capacity());
        // Watch one orchard cell over many ticks, clearing it each time.
        let watch = state(&mut w).orchard_cells[0];
        let mut hits = 0usize;
        let World { core, state: env_state, .. } = &mut w;
        let st = match env_state {
            EnvState::Cleanup(st) => st,
            _ => unreachable!(),
        };
        for _ in 0..trials {
            st.apples[watch] = false;
            tick_dynamics(core, st, &cfg);
            if st.apples[watch] {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        let se = (p_expected * (1.0 - p_expected) / trials as f64).sqrt();
        assert!(
            (freq - p_expected).abs() < 3.0 * se,
            "freq {freq} vs p {p_expected} (se {se})"
        );
    }
}
