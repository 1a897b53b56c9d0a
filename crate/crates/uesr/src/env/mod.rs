//! Grid-warehouse simulator: a deterministic, seedable two-agent pickup-and
//! -delivery world with shifted layout variants for transfer experiments.

pub mod layout;
pub mod obs;
pub mod render;
pub mod state;

pub use layout::{GridLayout, LayoutVariant, Tile};
pub use obs::{observe, ObservationVector, OBS_LEN};
pub use render::render_ascii;
pub use state::{
    create_env, create_env_with_agents, Action, AgentState, EnvError, Facing, ShelfState,
    StepOutcome, WarehouseState, EPISODE_LEN, OBSTACLE_COUNT, OBSTACLE_PERIOD, REQUEST_TARGET,
    REWARD_CARRIER, REWARD_OTHER,
};
