//! Seeded procedural grid games.
//!
//! `coin_seek` is a side-scrolling reach-the-coin level viewed through a window
//! centred on the agent; `dodge_fight` is a fixed arena with a moving boss that
//! fires lasers. Everything after generation is a pure function of the level
//! seed and the action sequence.

mod level;
mod render;
mod seeds;
mod sim;

pub use level::{
    generate_level, ArenaLayout, Cell, GameId, GridLayout, Layout, LevelSpec, Patrol, Pos, AGENT_ZONE_TOP, BOSS_ROWS,
    BOSS_WIDTH, COIN_LEVEL_WIDTH, LEVEL_HEIGHT, MAX_GEN_ATTEMPTS, OBS_SIZE,
};
pub use render::{render, Observation, Rgb, AGENT, COIN, HAZARD, LASER, MONSTER, WALL};
pub use seeds::{SeedSplit, TestSampler, SEED_SPACE};
pub use sim::{
    CoinAction, Entity, EntityKind, EnvState, FightAction, StepResult, COIN_REWARD, DEFAULT_MAX_EPISODE_LEN,
    FIRE_COOLDOWN,
};
