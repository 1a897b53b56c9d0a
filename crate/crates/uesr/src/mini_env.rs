//! Tiny single-agent goal-reaching grid used by training sanity checks: the
//! optimal policy is known in closed form, so learning progress can be
//! scored exactly.

use crate::rng::Rng;

/// 3x3 grid, agent walks to a fixed goal. Actions: up, down, left, right,
/// stay (clipped at the walls). Reaching the goal pays 1 and ends the
/// episode; otherwise the episode ends after `max_steps`.
#[derive(Debug, Clone)]
pub struct GoalGrid {
    pub size: i32,
    pub agent: (i32, i32),
    pub goal: (i32, i32),
    steps: u32,
    max_steps: u32,
    done: bool,
    rng: Rng,
}

pub const GOAL_GRID_OBS_LEN: usize = 9;

impl GoalGrid {
    pub fn new(seed: u64) -> Self {
        let mut g = GoalGrid {
            size: 3,
            agent: (0, 0),
            goal: (2, 2),
            steps: 0,
            max_steps: 8,
            done: false,
            rng: Rng::derive(seed, "goal-grid"),
        };
        g.reset();
        g
    }

    pub fn reset(&mut self) {
        loop {
            let cell = self.rng.range(9) as i32;
            let pos = (cell % self.size, cell / self.size);
            if pos != self.goal {
                self.agent = pos;
                break;
            }
        }
        self.steps = 0;
        self.done = false;
    }

    pub fn done(&self) -> bool {
        self.done
    }

    /// One-hot of the agent cell.
    pub fn observe(&self) -> Vec<f64> {
        let mut v = vec![0.0; GOAL_GRID_OBS_LEN];
        v[(self.agent.1 * self.size + self.agent.0) as usize] = 1.0;
        v
    }

    pub fn step(&mut self, action: usize) -> (f64, bool) {
        assert!(!self.done, "stepping a finished episode");
        let (dx, dy) = match action {
            0 => (0, -1),
            1 => (0, 1),
            2 => (-1, 0),
            3 => (1, 0),
            4 => (0, 0),
            _ => panic!("action index {action} out of range"),
        };
        let nx = (self.agent.0 + dx).clamp(0, self.size - 1);
        let ny = (self.agent.1 + dy).clamp(0, self.size - 1);
        self.agent = (nx, ny);
        self.steps += 1;
        if self.agent == self.goal {
            self.done = true;
            (1.0, true)
        } else if self.steps >= self.max_steps {
            self.done = true;
            (0.0, true)
        } else {
            (0.0, false)
        }
    }

    /// The actions that strictly reduce the distance to the goal from
    /// `cell`; the brute-force optimal policy.
    pub fn optimal_actions(&self, cell: (i32, i32)) -> Vec<usize> {
        let mut out = Vec::new();
        if self.goal.1 < cell.1 {
            out.push(0);
        }
        if self.goal.1 > cell.1 {
            out.push(1);
        }
        if self.goal.0 < cell.0 {
            out.push(2);
        }
        if self.goal.0 > cell.0 {
            out.push(3);
        }
        out
    }

    pub fn cells_without_goal(&self) -> Vec<(i32, i32)> {
        let mut out = Vec::new();
        for y in 0..self.size {
            for x in 0..self.size {
                if (x, y) != self.goal {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn observe_cell(&self, cell: (i32, i32)) -> Vec<f64> {
        let mut v = vec![0.0; GOAL_GRID_OBS_LEN];
        v[(cell.1 * self.size + cell.0) as usize] = 1.0;
        v
    }
}
