use std::collections::VecDeque;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of every rendered observation, in cells (one cell per pixel).
pub const OBS_SIZE: usize = 16;
/// Width of a `coin_seek` level. The view is a 16-wide window centred on the agent.
pub const COIN_LEVEL_WIDTH: usize = 16;
pub const LEVEL_HEIGHT: usize = 16;
pub const MAX_GEN_ATTEMPTS: usize = 100;
pub const PALETTE_COUNT: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameId {
    CoinSeek,
    DodgeFight,
}

impl GameId {
    pub fn name(self) -> &'static str {
        match self {
            GameId::CoinSeek => "coin_seek",
            GameId::DodgeFight => "dodge_fight",
        }
    }

    pub fn num_actions(self) -> usize {
        5
    }

    /// Upper bound of an episode return.
    pub fn max_return(self) -> f64 {
        match self {
            GameId::CoinSeek => 10.0,
            GameId::DodgeFight => 12.0,
        }
    }
}

impl fmt::Display for GameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GameId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coin_seek" | "coinrun" => Ok(GameId::CoinSeek),
            "dodge_fight" | "bossfight" => Ok(GameId::DodgeFight),
            other => Err(Error::Config(format!("unknown game `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pos {
    pub row: i32,
    pub col: i32,
}

impl Pos {
    pub const fn new(row: i32, col: i32) -> Self {
        Pos { row, col }
    }

    pub fn offset(self, drow: i32, dcol: i32) -> Self {
        Pos::new(self.row + drow, self.col + dcol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Empty,
    Wall,
    /// A pit. Entering it ends the episode.
    Gap,
    Hazard,
    Coin,
    Spawn,
}

impl Cell {
    pub fn tag(self) -> char {
        match self {
            Cell::Empty => '.',
            Cell::Wall => '#',
            Cell::Gap => 'v',
            Cell::Hazard => 'x',
            Cell::Coin => '$',
            Cell::Spawn => 'S',
        }
    }

    /// Cells the agent can stand on without the episode ending badly.
    pub fn is_safe(self) -> bool {
        matches!(self, Cell::Empty | Cell::Spawn | Cell::Coin)
    }
}

/// A monster pacing back and forth along one row, one cell every `period` ticks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Patrol {
    pub row: i32,
    pub col_min: i32,
    pub col_max: i32,
    /// Phase offset into the bounce cycle at tick 0.
    pub phase: u32,
    pub period: u32,
}

impl Patrol {
    /// Column and direction (+1/-1/0) of the monster at `tick`.
    pub fn at(&self, tick: u32) -> (i32, i32) {
        let span = (self.col_max - self.col_min) as u32;
        if span == 0 {
            return (self.col_min, 0);
        }
        let k = (tick / self.period + self.phase) % (2 * span);
        if k < span {
            (self.col_min + k as i32, 1)
        } else {
            (self.col_min + (2 * span - k) as i32, -1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    pub spawn: Pos,
    pub coin: Pos,
    pub patrols: Vec<Patrol>,
}

impl GridLayout {
    pub fn get(&self, p: Pos) -> Cell {
        if p.row < 0 || p.col < 0 || p.row as usize >= self.height || p.col as usize >= self.width {
            Cell::Wall
        } else {
            self.cells[p.row as usize * self.width + p.col as usize]
        }
    }

    fn set(&mut self, p: Pos, cell: Cell) {
        self.cells[p.row as usize * self.width + p.col as usize] = cell;
    }

    /// Breadth-first search over safe cells from spawn. Monsters are ignored
    /// since they move and can always be waited out.
    pub fn coin_reachable(&self) -> bool {
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([self.spawn]);
        seen[self.spawn.row as usize * self.width + self.spawn.col as usize] = true;
        while let Some(p) = queue.pop_front() {
            if p == self.coin {
                return true;
            }
            for (dr, dc) in [(0, 1), (0, -1), (1, 0), (-1, 0)] {
                let q = p.offset(dr, dc);
                if !self.get(q).is_safe() {
                    continue;
                }
                let idx = q.row as usize * self.width + q.col as usize;
                if !seen[idx] {
                    seen[idx] = true;
                    queue.push_back(q);
                }
            }
        }
        false
    }
}

/// Boss arena parameters. All enemy behaviour is a function of these and the tick.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArenaLayout {
    pub boss_start_col: i32,
    pub boss_health: u8,
    /// Boss moves one column every `boss_period` ticks.
    pub boss_period: u32,
    pub laser_pattern: u8,
    pub laser_period: u32,
    pub texture_id: u8,
    pub stars: Vec<Pos>,
    pub agent_spawn: Pos,
}

pub const BOSS_WIDTH: i32 = 3;
pub const BOSS_ROWS: i32 = 2;
/// Topmost row the agent may enter in the arena.
pub const AGENT_ZONE_TOP: i32 = 9;
pub const LASER_PATTERNS: u8 = 3;

impl ArenaLayout {
    /// Leftmost boss column at `tick`; the boss bounces between the arena walls.
    pub fn boss_col(&self, tick: u32) -> i32 {
        let span = (OBS_SIZE as i32 - BOSS_WIDTH) as u32;
        let k = (tick / self.boss_period + self.boss_start_col as u32) % (2 * span);
        if k < span {
            k as i32
        } else {
            (2 * span - k) as i32
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Layout {
    Grid(GridLayout),
    Arena(ArenaLayout),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LevelSpec {
    pub game: GameId,
    pub seed: u64,
    pub layout: Layout,
    pub palette_id: u8,
}

impl LevelSpec {
    pub fn grid(&self) -> Option<&GridLayout> {
        match &self.layout {
            Layout::Grid(g) => Some(g),
            Layout::Arena(_) => None,
        }
    }

    pub fn arena(&self) -> Option<&ArenaLayout> {
        match &self.layout {
            Layout::Arena(a) => Some(a),
            Layout::Grid(_) => None,
        }
    }

    /// Canonical text dump: a header line followed by one line per grid row.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        match &self.layout {
            Layout::Grid(g) => {
                let _ = writeln!(
                    out,
                    "{} seed={} palette={} patrols={}",
                    self.game,
                    self.seed,
                    self.palette_id,
                    g.patrols.len()
                );
                for r in 0..g.height {
                    for c in 0..g.width {
                        let p = Pos::new(r as i32, c as i32);
                        let on_patrol = g.patrols.iter().any(|m| m.row == p.row && m.at(0).0 == p.col);
                        out.push(if on_patrol { 'm' } else { g.get(p).tag() });
                    }
                    out.push('\n');
                }
            }
            Layout::Arena(a) => {
                let _ = writeln!(
                    out,
                    "{} seed={} palette={} health={} boss_period={} laser_pattern={} laser_period={} texture={}",
                    self.game,
                    self.seed,
                    self.palette_id,
                    a.boss_health,
                    a.boss_period,
                    a.laser_pattern,
                    a.laser_period,
                    a.texture_id
                );
                let boss = a.boss_col(0);
                for r in 0..OBS_SIZE as i32 {
                    for c in 0..OBS_SIZE as i32 {
                        let p = Pos::new(r, c);
                        let ch = if r < BOSS_ROWS && (boss..boss + BOSS_WIDTH).contains(&c) {
                            'B'
                        } else if p == a.agent_spawn {
                            'A'
                        } else if a.stars.contains(&p) {
                            '*'
                        } else {
                            '.'
                        };
                        out.push(ch);
                    }
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// Deterministically generate the level for `(game, seed)`.
pub fn generate_level(game: GameId, seed: u64) -> Result<LevelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match game {
        GameId::CoinSeek => 101,
        GameId::DodgeFight => 202,
    });
    match game {
        GameId::CoinSeek => {
            for _ in 0..MAX_GEN_ATTEMPTS {
                let palette_id = rng.gen_range(0..PALETTE_COUNT);
                let grid = draw_grid(&mut rng);
                if grid.coin_reachable() {
                    return Ok(LevelSpec {
                        game,
                        seed,
                        layout: Layout::Grid(grid),
                        palette_id,
                    });
                }
            }
            Err(Error::GeneratorExhausted {
                seed,
                attempts: MAX_GEN_ATTEMPTS,
            })
        }
        GameId::DodgeFight => {
            let palette_id = rng.gen_range(0..PALETTE_COUNT);
            Ok(LevelSpec {
                game,
                seed,
                layout: Layout::Arena(draw_arena(&mut rng)),
                palette_id,
            })
        }
    }
}

fn draw_grid(rng: &mut ChaCha8Rng) -> GridLayout {
    let width = COIN_LEVEL_WIDTH;
    let height = LEVEL_HEIGHT;
    let w = width as i32;
    let mut g = GridLayout {
        width,
        height,
        cells: vec![Cell::Wall; width * height],
        spawn: Pos::new(0, 0),
        coin: Pos::new(0, 0),
        patrols: Vec::new(),
    };

    // a corridor whose floor is the bottom row, walked left to right
    let bottom = rng.gen_range(9..=11);
    let top = bottom - rng.gen_range(3..=5);
    for r in top..=bottom {
        for c in 1..w - 1 {
            g.set(Pos::new(r, c), Cell::Empty);
        }
    }
    let band = |rng: &mut ChaCha8Rng| rng.gen_range(top..=bottom);

    g.spawn = Pos::new(bottom, 1);
    g.coin = Pos::new(band(rng), w - 2 - rng.gen_range(0..3));

    // obstacles rising from the floor, always lower than the corridor
    for _ in 0..rng.gen_range(1..=3) {
        let col = rng.gen_range(3..=w - 5);
        let len = rng.gen_range(1..=bottom - top);
        for r in bottom - len + 1..=bottom {
            g.set(Pos::new(r, col), Cell::Wall);
        }
    }
    for (cell, count) in [(Cell::Gap, rng.gen_range(0..=2)), (Cell::Hazard, rng.gen_range(0..=2))] {
        for _ in 0..count {
            let p = Pos::new(bottom, rng.gen_range(3..=w - 4));
            if g.get(p) == Cell::Empty {
                g.set(p, cell);
            }
        }
    }
    g.set(g.spawn, Cell::Spawn);
    g.set(g.coin, Cell::Coin);

    for _ in 0..rng.gen_range(0..=2) {
        let row = if rng.gen_bool(0.5) { bottom } else { band(rng) };
        let col = rng.gen_range(4..=w - 5);
        let period = rng.gen_range(1..=2);
        let phase = rng.gen_range(0..8);
        if g.get(Pos::new(row, col)) != Cell::Empty {
            continue;
        }
        let mut lo = col;
        while lo > col - 3 && g.get(Pos::new(row, lo - 1)) == Cell::Empty && lo > 3 {
            lo -= 1;
        }
        let mut hi = col;
        while hi < col + 3 && g.get(Pos::new(row, hi + 1)) == Cell::Empty {
            hi += 1;
        }
        if hi > lo {
            g.patrols.push(Patrol {
                row,
                col_min: lo,
                col_max: hi,
                phase,
                period,
            });
        }
    }
    g
}

fn draw_arena(rng: &mut ChaCha8Rng) -> ArenaLayout {
    let texture_id = rng.gen_range(0..4u8);
    let n_stars = 6 + 3 * texture_id as usize;
    let mut stars = Vec::with_capacity(n_stars);
    while stars.len() < n_stars {
        let p = Pos::new(
            rng.gen_range(BOSS_ROWS..OBS_SIZE as i32),
            rng.gen_range(0..OBS_SIZE as i32),
        );
        if !stars.contains(&p) {
            stars.push(p);
        }
    }
    let agent_spawn = Pos::new(OBS_SIZE as i32 - 2, rng.gen_range(2..=13));
    stars.retain(|&p| p != agent_spawn);
    ArenaLayout {
        boss_start_col: rng.gen_range(0..=OBS_SIZE as i32 - BOSS_WIDTH),
        boss_health: rng.gen_range(6..=12),
        boss_period: rng.gen_range(1..=3),
        laser_pattern: rng.gen_range(0..LASER_PATTERNS),
        laser_period: rng.gen_range(3..=6),
        texture_id,
        stars,
        agent_spawn,
    }
}
