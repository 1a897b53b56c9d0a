//! Fixed 80-element observation encoding.
//!
//! For each of the 9 tiles of the 3x3 window centered on the agent (reading
//! order: dy then dx), 8 features:
//!
//! ```text
//! [agent_present, dir_up, dir_down, dir_left, dir_right,
//!  shelf_present, shelf_requested, obstacle_present]
//! ```
//!
//! Out-of-bounds tiles encode `obstacle_present = 1` and everything else 0;
//! walls and obstacles are behaviorally identical. Carried shelves occupy no
//! tile and are invisible here. After the 72 tile features come 8
//! self-features:
//!
//! ```text
//! [x/width, y/height, facing_up, facing_down, facing_left, facing_right,
//!  carrying, on_highway]
//! ```

use super::state::WarehouseState;

pub const TILE_FEATURES: usize = 8;
pub const WINDOW_TILES: usize = 9;
pub const SELF_FEATURES: usize = 8;
pub const OBS_LEN: usize = WINDOW_TILES * TILE_FEATURES + SELF_FEATURES;

/// Flat numeric encoding of one agent's local view; all elements in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationVector(pub Vec<f64>);

impl ObservationVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Pure function of the state; see the module docs for the layout.
pub fn observe(state: &WarehouseState, agent_index: usize) -> ObservationVector {
    let agent = &state.agents[agent_index];
    let (ax, ay) = agent.position;
    let mut v = Vec::with_capacity(OBS_LEN);

    for dy in -1..=1 {
        for dx in -1..=1 {
            let tile = (ax + dx, ay + dy);
            let mut features = [0.0f64; TILE_FEATURES];
            if !state.layout.in_bounds(tile) {
                features[7] = 1.0;
            } else {
                if let Some(i) = state.agent_at(tile) {
                    features[0] = 1.0;
                    features[1 + state.agents[i].facing.index()] = 1.0;
                }
                if let Some(sid) = state.shelf_resting_at(tile) {
                    features[5] = 1.0;
                    if state.shelves[sid].requested {
                        features[6] = 1.0;
                    }
                }
                if state.is_obstacle(tile) {
                    features[7] = 1.0;
                }
            }
            v.extend_from_slice(&features);
        }
    }

    v.push(ax as f64 / state.layout.width as f64);
    v.push(ay as f64 / state.layout.height as f64);
    let mut facing = [0.0f64; 4];
    facing[agent.facing.index()] = 1.0;
    v.extend_from_slice(&facing);
    v.push(if agent.carrying.is_some() { 1.0 } else { 0.0 });
    v.push(if state.layout.is_highway((ax, ay)) { 1.0 } else { 0.0 });

    debug_assert_eq!(v.len(), OBS_LEN);
    ObservationVector(v)
}
