use std::sync::Arc;

use super::level::{ArenaLayout, Cell, GameId, LevelSpec, Pos, AGENT_ZONE_TOP, BOSS_ROWS, BOSS_WIDTH, OBS_SIZE};
use super::render::{render, Observation};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_EPISODE_LEN: u32 = 256;
pub const COIN_REWARD: f64 = 10.0;
/// Ticks between two agent shots in `dodge_fight`.
pub const FIRE_COOLDOWN: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoinAction {
    Left = 0,
    Right = 1,
    Jump = 2,
    Noop = 3,
    Down = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FightAction {
    Left = 0,
    Right = 1,
    Up = 2,
    Down = 3,
    Fire = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Monster,
    Boss,
    Laser,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Entity {
    pub kind: EntityKind,
    pub pos: Pos,
    pub vel: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub level: Arc<LevelSpec>,
    pub agent_pos: Pos,
    pub tick: u32,
    pub max_episode_len: u32,
    pub entities: Vec<Entity>,
    pub boss_health: u8,
    pub fire_cooldown: u8,
    pub episode_return: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub task_reward: f64,
    pub done: bool,
}

impl EnvState {
    /// Place the agent at spawn and render the first frame.
    pub fn reset(level: Arc<LevelSpec>, max_episode_len: u32) -> (Self, Observation) {
        let (agent_pos, boss_health) = match (level.grid(), level.arena()) {
            (Some(g), _) => (g.spawn, 0),
            (_, Some(a)) => (a.agent_spawn, a.boss_health),
            _ => unreachable!("level has exactly one layout"),
        };
        let mut state = EnvState {
            level,
            agent_pos,
            tick: 0,
            max_episode_len,
            entities: Vec::new(),
            boss_health,
            fire_cooldown: 0,
            episode_return: 0.0,
            done: false,
        };
        state.entities = state.enemies_at(0);
        let obs = render(&state);
        (state, obs)
    }

    pub fn game(&self) -> GameId {
        self.level.game
    }

    /// Monster or boss entities at `tick`. Lasers are carried separately in `entities`.
    fn enemies_at(&self, tick: u32) -> Vec<Entity> {
        match (self.level.grid(), self.level.arena()) {
            (Some(g), _) => g
                .patrols
                .iter()
                .map(|p| {
                    let (col, dir) = p.at(tick);
                    Entity {
                        kind: EntityKind::Monster,
                        pos: Pos::new(p.row, col),
                        vel: Pos::new(0, dir),
                    }
                })
                .collect(),
            (_, Some(a)) => vec![Entity {
                kind: EntityKind::Boss,
                pos: Pos::new(0, a.boss_col(tick)),
                vel: Pos::new(0, 0),
            }],
            _ => unreachable!(),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        let n = self.game().num_actions();
        if action >= n {
            return Err(Error::Contract(format!("action {action} out of range 0..{n}")));
        }
        let reward = match self.game() {
            GameId::CoinSeek => self.step_coin(action),
            GameId::DodgeFight => self.step_fight(action),
        };
        if self.tick >= self.max_episode_len {
            self.done = true;
        }
        self.episode_return += reward;
        Ok(StepResult {
            obs: render(self),
            task_reward: reward,
            done: self.done,
        })
    }

    fn step_coin(&mut self, action: usize) -> f64 {
        let level = Arc::clone(&self.level);
        let grid = level.grid().expect("coin_seek level");
        let (dr, dc) = match action {
            0 => (0, -1),
            1 => (0, 1),
            2 => (-1, 0),
            4 => (1, 0),
            _ => (0, 0),
        };
        let old = self.agent_pos;
        let target = old.offset(dr, dc);
        if grid.get(target) != Cell::Wall {
            self.agent_pos = target;
        }
        let before = std::mem::take(&mut self.entities);
        self.tick += 1;
        self.entities = self.enemies_at(self.tick);

        let me = self.agent_pos;
        let caught = before
            .iter()
            .zip(&self.entities)
            .any(|(b, a)| a.pos == me || (b.pos == me && a.pos == old));
        match grid.get(me) {
            Cell::Coin => {
                self.done = true;
                COIN_REWARD
            }
            Cell::Gap | Cell::Hazard => {
                self.done = true;
                0.0
            }
            _ => {
                if caught {
                    self.done = true;
                }
                0.0
            }
        }
    }

    fn step_fight(&mut self, action: usize) -> f64 {
        let level = Arc::clone(&self.level);
        let arena = level.arena().expect("dodge_fight level");
        let old = self.agent_pos;
        let max = OBS_SIZE as i32 - 1;
        let mut reward = 0.0;

        self.fire_cooldown = self.fire_cooldown.saturating_sub(1);
        match action {
            0 => self.agent_pos.col = (old.col - 1).max(0),
            1 => self.agent_pos.col = (old.col + 1).min(max),
            2 => self.agent_pos.row = (old.row - 1).max(AGENT_ZONE_TOP),
            3 => self.agent_pos.row = (old.row + 1).min(max),
            _ => {
                if self.fire_cooldown == 0 {
                    self.fire_cooldown = FIRE_COOLDOWN;
                    let boss = arena.boss_col(self.tick);
                    if (boss..boss + BOSS_WIDTH).contains(&old.col) {
                        // +1 per hit; the killing blow pays the defeat bonus instead
                        self.boss_health -= 1;
                        reward = 1.0;
                        if self.boss_health == 0 {
                            self.done = true;
                        }
                    }
                }
            }
        }

        self.tick += 1;
        let me = self.agent_pos;
        let mut hit = false;
        let mut lasers: Vec<Entity> = Vec::new();
        for e in self.entities.iter().filter(|e| e.kind == EntityKind::Laser) {
            let next = e.pos.offset(e.vel.row, e.vel.col);
            if next == me || (e.pos == me && next == old) {
                hit = true;
            }
            if (0..=max).contains(&next.row) && (0..=max).contains(&next.col) {
                lasers.push(Entity { pos: next, ..*e });
            }
        }
        if !self.done && self.tick.is_multiple_of(arena.laser_period) {
            lasers.extend(spawn_lasers(arena, self.tick));
        }
        let mut entities = self.enemies_at(self.tick);
        entities.extend(lasers);
        self.entities = entities;
        if hit {
            self.done = true;
        }
        reward
    }
}

fn spawn_lasers(arena: &ArenaLayout, tick: u32) -> Vec<Entity> {
    let boss = arena.boss_col(tick);
    let row = BOSS_ROWS;
    let center = boss + BOSS_WIDTH / 2;
    let laser = |col: i32, dcol: i32| Entity {
        kind: EntityKind::Laser,
        pos: Pos::new(row, col),
        vel: Pos::new(1, dcol),
    };
    let volley = tick / arena.laser_period;
    match arena.laser_pattern {
        0 => vec![laser(center, 0)],
        1 => vec![laser(boss, 0), laser(boss + BOSS_WIDTH - 1, 0)],
        _ => {
            if volley.is_multiple_of(2) {
                vec![laser(center, 0)]
            } else {
                vec![laser(center, -1), laser(center, 1)]
            }
        }
    }
}
