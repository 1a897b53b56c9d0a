//! ASCII rendering for debugging transitions.
//!
//! One glyph per tile, highest-priority occupant wins:
//!
//! ```text
//! 0..9  agent (its index)        #  obstacle
//! R     requested shelf          P  shelf awaiting return home
//! S     shelf (idle)             G  goal tile
//! s     empty shelf-home tile    .  highway
//! ```
//!
//! A legend below the grid lists agent facing/carrying and shelf flags, so
//! a rendered pair of states pins down a transition completely.

use super::state::WarehouseState;

pub fn render_ascii(state: &WarehouseState) -> String {
    let mut out = String::new();
    for y in 0..state.layout.height {
        for x in 0..state.layout.width {
            let tile = (x, y);
            let glyph = if let Some(i) = state.agent_at(tile) {
                char::from_digit((i % 10) as u32, 10).unwrap()
            } else if state.is_obstacle(tile) {
                '#'
            } else if let Some(sid) = state.shelf_resting_at(tile) {
                let s = &state.shelves[sid];
                if s.requested {
                    'R'
                } else if s.pending_return {
                    'P'
                } else {
                    'S'
                }
            } else if state.layout.is_goal(tile) {
                'G'
            } else if state.layout.is_shelf_home(tile) {
                's'
            } else {
                '.'
            };
            out.push(glyph);
        }
        out.push('\n');
    }

    out.push('\n');
    for (i, a) in state.agents.iter().enumerate() {
        let carry = match a.carrying {
            Some(sid) => format!("shelf {sid}"),
            None => "nothing".to_string(),
        };
        out.push_str(&format!(
            "agent {i}: at ({}, {}) facing {:?}, carrying {carry}\n",
            a.position.0, a.position.1, a.facing
        ));
    }
    let requested: Vec<usize> = state
        .shelves
        .iter()
        .filter(|s| s.requested)
        .map(|s| s.shelf_id)
        .collect();
    let pending: Vec<usize> = state
        .shelves
        .iter()
        .filter(|s| s.pending_return)
        .map(|s| s.shelf_id)
        .collect();
    out.push_str(&format!(
        "requested {requested:?} pending-return {pending:?}\n"
    ));
    out.push_str(&format!(
        "episode step {} / global step {} / delivered {}\n",
        state.episode_step, state.global_step, state.delivered_count
    ));
    out
}
