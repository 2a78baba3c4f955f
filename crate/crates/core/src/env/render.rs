use super::level::{Cell, Layout, Pos, BOSS_ROWS, BOSS_WIDTH, OBS_SIZE};
use super::sim::{EntityKind, EnvState};

pub type Rgb = [u8; 3];

pub const AGENT: Rgb = [255, 255, 255];
pub const COIN: Rgb = [255, 215, 0];
pub const HAZARD: Rgb = [255, 80, 0];
pub const MONSTER: Rgb = [255, 0, 255];
pub const GAP: Rgb = [0, 0, 0];
pub const WALL: Rgb = [150, 150, 150];
pub const BOSS: Rgb = [170, 60, 220];
pub const LASER: Rgb = [240, 30, 30];
pub const STAR: Rgb = [150, 150, 180];

const BACKGROUNDS: [Rgb; 8] = [
    [30, 60, 120],
    [40, 110, 60],
    [110, 40, 90],
    [120, 90, 30],
    [50, 50, 50],
    [20, 100, 110],
    [90, 30, 30],
    [70, 70, 140],
];

fn shade(c: Rgb) -> Rgb {
    c.map(|v| (v as u16 * 3 / 4) as u8)
}

/// Row-major `height × width × 3` RGB frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl Observation {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), height * width * 3, "pixel buffer size");
        Observation { height, width, pixels }
    }

    fn filled(height: usize, width: usize, color: Rgb) -> Self {
        let pixels = color.iter().copied().cycle().take(height * width * 3).collect();
        Observation::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn put(&mut self, p: Pos, color: Rgb) {
        if p.row >= 0 && p.col >= 0 && (p.row as usize) < self.height && (p.col as usize) < self.width {
            let i = (p.row as usize * self.width + p.col as usize) * 3;
            self.pixels[i..i + 3].copy_from_slice(&color);
        }
    }

    /// Number of pixels whose colour is exactly `color`.
    pub fn count(&self, color: Rgb) -> usize {
        self.pixels.chunks_exact(3).filter(|p| *p == color).count()
    }
}

pub fn render(state: &EnvState) -> Observation {
    let level = &state.level;
    let bg = BACKGROUNDS[level.palette_id as usize % BACKGROUNDS.len()];
    match &level.layout {
        Layout::Grid(g) => {
            // side-scrolling view: the agent is always in column OBS_SIZE/2
            let left = state.agent_pos.col - OBS_SIZE as i32 / 2;
            let mut obs = Observation::filled(OBS_SIZE, OBS_SIZE, WALL);
            for r in 0..OBS_SIZE as i32 {
                for vc in 0..OBS_SIZE as i32 {
                    let lc = left + vc;
                    let color = match g.get(Pos::new(r, lc)) {
                        Cell::Empty | Cell::Spawn => {
                            if (lc + level.palette_id as i32 + r / 4) % 3 == 0 {
                                shade(bg)
                            } else {
                                bg
                            }
                        }
                        Cell::Wall => WALL,
                        Cell::Gap => GAP,
                        Cell::Hazard => HAZARD,
                        Cell::Coin => COIN,
                    };
                    obs.put(Pos::new(r, vc), color);
                }
            }
            for e in &state.entities {
                obs.put(e.pos.offset(0, -left), MONSTER);
            }
            obs.put(Pos::new(state.agent_pos.row, OBS_SIZE as i32 / 2), AGENT);
            obs
        }
        Layout::Arena(a) => {
            let mut obs = Observation::filled(OBS_SIZE, OBS_SIZE, shade(shade(bg)));
            for &s in &a.stars {
                obs.put(s, STAR);
            }
            for e in &state.entities {
                match e.kind {
                    EntityKind::Boss => {
                        for r in 0..BOSS_ROWS {
                            for c in 0..BOSS_WIDTH {
                                obs.put(e.pos.offset(r, c), BOSS);
                            }
                        }
                    }
                    EntityKind::Laser => obs.put(e.pos, LASER),
                    EntityKind::Monster => obs.put(e.pos, MONSTER),
                }
            }
            obs.put(state.agent_pos, AGENT);
            obs
        }
    }
}
