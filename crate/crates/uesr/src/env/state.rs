//! Warehouse simulator state and transition rules.
//!
//! The step function resolves all agents' actions simultaneously against the
//! pre-step state, with deterministic tie-breaking through the state's own
//! RNG. Every random choice draws in a documented order (see `step`), so an
//! independent interpreter of the same rules reproduces trajectories
//! bit-exactly from the same seed.

use thiserror::Error;

use super::layout::{GridLayout, LayoutVariant, Tile};
use crate::rng::Rng;

/// Episode length in steps.
pub const EPISODE_LEN: u32 = 50;
/// Number of impassable obstacles, repositioned every `OBSTACLE_PERIOD`
/// global steps.
pub const OBSTACLE_COUNT: usize = 3;
pub const OBSTACLE_PERIOD: u64 = 1000;
/// Number of simultaneously requested shelves (when enough are eligible).
pub const REQUEST_TARGET: usize = 4;
/// Reward to the agent that completes a delivery or return.
pub const REWARD_CARRIER: f64 = 0.5;
/// Reward to every other agent when someone delivers or returns.
pub const REWARD_OTHER: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Facing {
    Up,
    Down,
    Left,
    Right,
}

impl Facing {
    pub fn delta(self) -> (i32, i32) {
        match self {
            Facing::Up => (0, -1),
            Facing::Down => (0, 1),
            Facing::Left => (-1, 0),
            Facing::Right => (1, 0),
        }
    }

    /// Counterclockwise in grid coordinates: Up -> Left -> Down -> Right.
    pub fn rotated_left(self) -> Self {
        match self {
            Facing::Up => Facing::Left,
            Facing::Left => Facing::Down,
            Facing::Down => Facing::Right,
            Facing::Right => Facing::Up,
        }
    }

    pub fn rotated_right(self) -> Self {
        match self {
            Facing::Up => Facing::Right,
            Facing::Right => Facing::Down,
            Facing::Down => Facing::Left,
            Facing::Left => Facing::Up,
        }
    }

    /// Index into one-hot encodings: Up, Down, Left, Right.
    pub fn index(self) -> usize {
        match self {
            Facing::Up => 0,
            Facing::Down => 1,
            Facing::Left => 2,
            Facing::Right => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    MoveForward,
    RotateLeft,
    RotateRight,
    PickupPutdown,
    NoOp,
}

impl Action {
    pub const COUNT: usize = 5;

    pub fn from_index(i: usize) -> Action {
        match i {
            0 => Action::MoveForward,
            1 => Action::RotateLeft,
            2 => Action::RotateRight,
            3 => Action::PickupPutdown,
            4 => Action::NoOp,
            _ => panic!("action index {i} out of range"),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Action::MoveForward => 0,
            Action::RotateLeft => 1,
            Action::RotateRight => 2,
            Action::PickupPutdown => 3,
            Action::NoOp => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentState {
    pub position: Tile,
    pub facing: Facing,
    /// Shelf id currently carried, if any.
    pub carrying: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShelfState {
    pub shelf_id: usize,
    pub home_tile: Tile,
    /// Tile the shelf rests on; `None` while carried.
    pub current_tile: Option<Tile>,
    pub requested: bool,
    /// Delivered to a goal but not yet returned to its home tile.
    pub pending_return: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub episode_done: bool,
    pub deliveries_this_step: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("episode already done; reset before stepping")]
    EpisodeDone,
    #[error("expected {expected} actions, got {got}")]
    WrongActionCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarehouseState {
    pub layout: GridLayout,
    pub agents: Vec<AgentState>,
    pub shelves: Vec<ShelfState>,
    pub obstacles: Vec<Tile>,
    /// Counts every step since creation; persists across episodes and
    /// drives obstacle repositioning.
    pub global_step: u64,
    pub episode_step: u32,
    pub rng: Rng,
    /// Deliveries in the current episode.
    pub delivered_count: u32,
}

/// Builds a warehouse with two agents.
pub fn create_env(variant: LayoutVariant, seed: u64) -> WarehouseState {
    create_env_with_agents(variant, seed, 2)
}

/// Builds a warehouse: shelves at their homes, `n_agents` agents on random
/// highway tiles, `REQUEST_TARGET` random requested shelves, and
/// `OBSTACLE_COUNT` obstacles on free non-goal highway tiles.
///
/// Draw order: agent positions (index order), then requested shelves, then
/// obstacles.
pub fn create_env_with_agents(variant: LayoutVariant, seed: u64, n_agents: usize) -> WarehouseState {
    assert!(n_agents >= 1, "need at least one agent");
    let layout = GridLayout::variant(variant);
    let shelves: Vec<ShelfState> = layout
        .shelf_home_tiles
        .iter()
        .enumerate()
        .map(|(i, &home)| ShelfState {
            shelf_id: i,
            home_tile: home,
            current_tile: Some(home),
            requested: false,
            pending_return: false,
        })
        .collect();

    let mut state = WarehouseState {
        layout,
        agents: vec![
            AgentState {
                position: (0, 0),
                facing: Facing::Up,
                carrying: None,
            };
            n_agents
        ],
        shelves,
        obstacles: Vec::new(),
        global_step: 0,
        episode_step: 0,
        rng: Rng::derive(seed, "warehouse"),
        delivered_count: 0,
    };

    state.resample_agent_positions();

    // Initial requests: distinct shelf ids, ascending-id candidate list.
    let ids: Vec<usize> = (0..state.shelves.len()).collect();
    let k = REQUEST_TARGET.min(ids.len());
    let mut rng = state.rng.clone();
    for id in rng.sample_distinct(&ids, k) {
        state.shelves[id].requested = true;
    }
    state.rng = rng;

    state.resample_obstacles();
    state
}

impl WarehouseState {
    /// Resamples agent positions onto distinct free highway tiles (in agent
    /// index order, each draw excluding obstacles and already-placed
    /// agents), clears the episode clock and the per-episode delivery
    /// counter. Only positions are re-randomized: facing, carried shelves,
    /// resting shelves, requests and obstacles all persist across episodes.
    pub fn reset_episode(&mut self) {
        self.resample_agent_positions();
        self.episode_step = 0;
        self.delivered_count = 0;
    }

    fn resample_agent_positions(&mut self) {
        let mut placed: Vec<Tile> = Vec::with_capacity(self.agents.len());
        let mut rng = self.rng.clone();
        for _ in 0..self.agents.len() {
            let candidates: Vec<Tile> = self
                .layout
                .highway_tiles()
                .into_iter()
                .filter(|t| !self.obstacles.contains(t) && !placed.contains(t))
                .collect();
            assert!(!candidates.is_empty(), "no free highway tile for an agent");
            placed.push(candidates[rng.range(candidates.len())]);
        }
        self.rng = rng;
        for (agent, position) in self.agents.iter_mut().zip(placed) {
            agent.position = position;
        }
    }

    pub fn shelf_resting_at(&self, tile: Tile) -> Option<usize> {
        self.shelves
            .iter()
            .find(|s| s.current_tile == Some(tile))
            .map(|s| s.shelf_id)
    }

    pub fn agent_at(&self, tile: Tile) -> Option<usize> {
        self.agents.iter().position(|a| a.position == tile)
    }

    pub fn is_obstacle(&self, tile: Tile) -> bool {
        self.obstacles.contains(&tile)
    }

    pub fn episode_done(&self) -> bool {
        self.episode_step >= EPISODE_LEN
    }

    pub fn requested_count(&self) -> usize {
        self.shelves.iter().filter(|s| s.requested).count()
    }

    /// Shelves that are neither requested nor pending return, ascending id.
    fn eligible_for_request(&self) -> Vec<usize> {
        self.shelves
            .iter()
            .filter(|s| !s.requested && !s.pending_return)
            .map(|s| s.shelf_id)
            .collect()
    }

    /// Advances the simulation by one joint step.
    ///
    /// Resolution order (and RNG draw order):
    /// 1. rotations update facing;
    /// 2. movement intents from pre-step positions, dropped if the target
    ///    is out of bounds, an obstacle, or (for a carrying agent) holds a
    ///    resting shelf;
    /// 3. contested targets, in (y, x) tile order: one winner drawn among
    ///    the contenders (ascending agent index);
    /// 4. head-on swaps cancel both movers; a mover whose target holds a
    ///    non-moving agent is demoted to stay, repeated to fixpoint;
    /// 5. pickup/putdown in agent index order (putdown only on a free
    ///    shelf-home tile; putting a pending-return shelf on its own home
    ///    scores a return);
    /// 6. delivery checks in agent index order (carried requested shelf on
    ///    a goal tile);
    /// 7. request top-up: uniform draws from the ascending-id eligible list
    ///    until `REQUEST_TARGET` shelves are requested or none are eligible;
    /// 8. global step increments; on multiples of `OBSTACLE_PERIOD` the
    ///    obstacles are redrawn (three draws without replacement from the
    ///    free non-goal highway tiles in (y, x) order);
    /// 9. episode clock increments; the episode ends at `EPISODE_LEN`.
    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome, EnvError> {
        if self.episode_done() {
            return Err(EnvError::EpisodeDone);
        }
        let n = self.agents.len();
        if actions.len() != n {
            return Err(EnvError::WrongActionCount {
                expected: n,
                got: actions.len(),
            });
        }

        let mut rewards = vec![0.0; n];
        let mut deliveries: u32 = 0;

        // 1. Rotations.
        for (agent, &action) in self.agents.iter_mut().zip(actions) {
            match action {
                Action::RotateLeft => agent.facing = agent.facing.rotated_left(),
                Action::RotateRight => agent.facing = agent.facing.rotated_right(),
                _ => {}
            }
        }

        // 2. Movement intents with static checks.
        let mut targets: Vec<Option<Tile>> = vec![None; n];
        for i in 0..n {
            if actions[i] != Action::MoveForward {
                continue;
            }
            let a = &self.agents[i];
            let d = a.facing.delta();
            let t = (a.position.0 + d.0, a.position.1 + d.1);
            let blocked = !self.layout.in_bounds(t)
                || self.is_obstacle(t)
                || (a.carrying.is_some() && self.shelf_resting_at(t).is_some());
            if !blocked {
                targets[i] = Some(t);
            }
        }

        // 3. Contested targets: one winner per tile.
        let mut contested: Vec<Tile> = Vec::new();
        for i in 0..n {
            if let Some(t) = targets[i] {
                let contenders = targets.iter().filter(|&&x| x == Some(t)).count();
                if contenders > 1 && !contested.contains(&t) {
                    contested.push(t);
                }
            }
        }
        contested.sort_by_key(|&(x, y)| (y, x));
        for t in contested {
            let contenders: Vec<usize> = (0..n).filter(|&i| targets[i] == Some(t)).collect();
            let winner = contenders[self.rng.range(contenders.len())];
            for i in contenders {
                if i != winner {
                    targets[i] = None;
                }
            }
        }

        // 4a. Swaps cancel both movers.
        for i in 0..n {
            for j in (i + 1)..n {
                if targets[i] == Some(self.agents[j].position)
                    && targets[j] == Some(self.agents[i].position)
                {
                    targets[i] = None;
                    targets[j] = None;
                }
            }
        }

        // 4b. Demote movers aimed at agents that are staying, to fixpoint.
        loop {
            let mut changed = false;
            for i in 0..n {
                let Some(t) = targets[i] else { continue };
                if let Some(j) = self.agent_at(t) {
                    if j != i && targets[j].is_none() {
                        targets[i] = None;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        // Apply movement.
        for i in 0..n {
            if let Some(t) = targets[i] {
                self.agents[i].position = t;
            }
        }

        // 5. Pickup / putdown.
        for i in 0..n {
            if actions[i] != Action::PickupPutdown {
                continue;
            }
            let pos = self.agents[i].position;
            match self.agents[i].carrying {
                None => {
                    if let Some(sid) = self.shelf_resting_at(pos) {
                        self.shelves[sid].current_tile = None;
                        self.agents[i].carrying = Some(sid);
                    }
                }
                Some(sid) => {
                    if self.layout.is_shelf_home(pos) && self.shelf_resting_at(pos).is_none() {
                        self.shelves[sid].current_tile = Some(pos);
                        self.agents[i].carrying = None;
                        if self.shelves[sid].pending_return && self.shelves[sid].home_tile == pos {
                            self.shelves[sid].pending_return = false;
                            for (k, r) in rewards.iter_mut().enumerate() {
                                *r += if k == i { REWARD_CARRIER } else { REWARD_OTHER };
                            }
                        }
                    }
                }
            }
        }

        // 6. Deliveries.
        for i in 0..n {
            let pos = self.agents[i].position;
            if let Some(sid) = self.agents[i].carrying {
                if self.shelves[sid].requested && self.layout.is_goal(pos) {
                    self.shelves[sid].requested = false;
                    self.shelves[sid].pending_return = true;
                    deliveries += 1;
                    self.delivered_count += 1;
                    for (k, r) in rewards.iter_mut().enumerate() {
                        *r += if k == i { REWARD_CARRIER } else { REWARD_OTHER };
                    }
                }
            }
        }

        // 7. Request top-up.
        while self.requested_count() < REQUEST_TARGET {
            let eligible = self.eligible_for_request();
            if eligible.is_empty() {
                break;
            }
            let pick = eligible[self.rng.range(eligible.len())];
            self.shelves[pick].requested = true;
        }

        // 8. Clock and obstacle schedule.
        self.global_step += 1;
        if self.global_step % OBSTACLE_PERIOD == 0 {
            self.resample_obstacles();
        }

        // 9. Episode clock.
        self.episode_step += 1;

        Ok(StepOutcome {
            rewards,
            episode_done: self.episode_done(),
            deliveries_this_step: deliveries,
        })
    }

    /// Draws `OBSTACLE_COUNT` distinct tiles from the free non-goal highway
    /// tiles (no agent, no resting shelf), candidates in (y, x) order.
    fn resample_obstacles(&mut self) {
        let candidates: Vec<Tile> = {
            let mut tiles: Vec<Tile> = self
                .layout
                .highway_tiles()
                .into_iter()
                .filter(|&t| {
                    !self.layout.is_goal(t)
                        && self.agent_at(t).is_none()
                        && self.shelf_resting_at(t).is_none()
                })
                .collect();
            tiles.sort_by_key(|&(x, y)| (y, x));
            tiles
        };
        assert!(
            candidates.len() >= OBSTACLE_COUNT,
            "layout too crowded to place {OBSTACLE_COUNT} obstacles"
        );
        let mut rng = self.rng.clone();
        self.obstacles = rng.sample_distinct(&candidates, OBSTACLE_COUNT);
        self.rng = rng;
    }
}
