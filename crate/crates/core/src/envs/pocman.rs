//! Partially observable Pac-Man on a 17x19 maze with four ghosts.
//!
//! PocMan sees a 10-bit local observation: a ghost in line of sight in each
//! direction, a wall next to it in each direction, a ghost within hearing
//! range, and food in a neighboring cell.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::pomcp::{PomdpEnv, PomdpStep};
use crate::SimRng;

pub const MAZE: [&str; 17] = [
    "###################",
    "#o.......#.......o#",
    "#.##.###.#.###.##.#",
    "#.................#",
    "#.##.#.#####.#.##.#",
    "#....#...#...#....#",
    "####.###.#.###.####",
    "####.#.......#.####",
    "####.#.##G##.#.####",
    "####...#GGG#...####",
    "####.#.#####.#.####",
    "####.#.......#.####",
    "####.#.#####.#.####",
    "#........#........#",
    "#.##.###.#.###.##.#",
    "#o..#.........#..o#",
    "###################",
];

const HEIGHT: usize = 17;
const WIDTH: usize = 19;
const CELLS: usize = HEIGHT * WIDTH;
const FOOD_WORDS: usize = CELLS.div_ceil(64);

pub const N_GHOSTS: usize = 4;

pub const NORTH: usize = 0;
pub const EAST: usize = 1;
pub const SOUTH: usize = 2;
pub const WEST: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct PocmanRewards {
    pub step: f64,
    pub food: f64,
    pub ghost: f64,
    pub death: f64,
}

impl Default for PocmanRewards {
    fn default() -> Self {
        PocmanRewards {
            step: -1.0,
            food: 10.0,
            ghost: 25.0,
            death: -100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PocmanEnv {
    walls: Vec<bool>,
    food_cells: Vec<usize>,
    power_cells: Vec<usize>,
    ghost_home: [usize; N_GHOSTS],
    start: usize,
    pub rewards: PocmanRewards,
    pub food_prob: f64,
    pub chase_prob: f64,
    pub chase_distance: usize,
    pub power_duration: u8,
    pub hearing_range: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PocmanState {
    pub pocman: usize,
    pub ghosts: [usize; N_GHOSTS],
    /// Last move of each ghost, used to avoid reversing.
    pub ghost_dirs: [Option<usize>; N_GHOSTS],
    pub food: [u64; FOOD_WORDS],
    pub power: u8,
}

impl PocmanState {
    pub fn has_food(&self, cell: usize) -> bool {
        self.food[cell / 64] >> (cell % 64) & 1 == 1
    }

    pub fn set_food(&mut self, cell: usize, present: bool) {
        if present {
            self.food[cell / 64] |= 1 << (cell % 64);
        } else {
            self.food[cell / 64] &= !(1 << (cell % 64));
        }
    }

    pub fn food_left(&self) -> u32 {
        self.food.iter().map(|w| w.count_ones()).sum()
    }
}

pub fn cell(row: usize, col: usize) -> usize {
    row * WIDTH + col
}

fn row_col(c: usize) -> (usize, usize) {
    (c / WIDTH, c % WIDTH)
}

fn manhattan(a: usize, b: usize) -> usize {
    let (ar, ac) = row_col(a);
    let (br, bc) = row_col(b);
    ar.abs_diff(br) + ac.abs_diff(bc)
}

impl Default for PocmanEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl PocmanEnv {
    pub fn new() -> Self {
        let mut walls = vec![false; CELLS];
        let mut food_cells = Vec::new();
        let mut power_cells = Vec::new();
        for (r, row) in MAZE.iter().enumerate() {
            for (c, ch) in row.bytes().enumerate() {
                match ch {
                    b'#' => walls[cell(r, c)] = true,
                    b'.' => food_cells.push(cell(r, c)),
                    b'o' => power_cells.push(cell(r, c)),
                    _ => {}
                }
            }
        }
        let start = cell(11, 9);
        food_cells.retain(|&c| c != start);
        PocmanEnv {
            walls,
            food_cells,
            power_cells,
            ghost_home: [cell(9, 8), cell(9, 9), cell(9, 10), cell(8, 9)],
            start,
            rewards: PocmanRewards::default(),
            food_prob: 0.5,
            chase_prob: 0.75,
            chase_distance: 5,
            power_duration: 15,
            hearing_range: 2,
        }
    }

    pub fn is_wall(&self, c: usize) -> bool {
        self.walls[c]
    }

    pub fn start_cell(&self) -> usize {
        self.start
    }

    pub fn ghost_home(&self) -> [usize; N_GHOSTS] {
        self.ghost_home
    }

    /// Neighbor of `c` in `dir`, or `None` through a wall.
    pub fn neighbor(&self, c: usize, dir: usize) -> Option<usize> {
        let (r, col) = row_col(c);
        let next = match dir {
            NORTH if r > 0 => cell(r - 1, col),
            EAST if col + 1 < WIDTH => cell(r, col + 1),
            SOUTH if r + 1 < HEIGHT => cell(r + 1, col),
            WEST if col > 0 => cell(r, col - 1),
            _ => return None,
        };
        (!self.walls[next]).then_some(next)
    }

    /// Start state with no food, for scripted scenarios.
    pub fn empty_state(&self) -> PocmanState {
        PocmanState {
            pocman: self.start,
            ghosts: self.ghost_home,
            ghost_dirs: [None; N_GHOSTS],
            food: [0; FOOD_WORDS],
            power: 0,
        }
    }

    pub fn observe(&self, s: &PocmanState) -> u16 {
        let mut obs = 0u16;
        for dir in 0..4 {
            let mut c = s.pocman;
            while let Some(next) = self.neighbor(c, dir) {
                if s.ghosts.contains(&next) {
                    obs |= 1 << dir;
                    break;
                }
                c = next;
            }
            if self.neighbor(s.pocman, dir).is_none() {
                obs |= 1 << (4 + dir);
            }
        }
        if s.ghosts.iter().any(|&g| manhattan(g, s.pocman) <= self.hearing_range) {
            obs |= 1 << 8;
        }
        if (0..4).filter_map(|d| self.neighbor(s.pocman, d)).any(|c| s.has_food(c)) {
            obs |= 1 << 9;
        }
        obs
    }

    fn move_ghost(&self, s: &mut PocmanState, g: usize, rng: &mut SimRng) {
        let pos = s.ghosts[g];
        let moves: Vec<usize> = (0..4).filter(|&d| self.neighbor(pos, d).is_some()).collect();
        if moves.is_empty() {
            return;
        }
        let dir = if manhattan(pos, s.pocman) <= self.chase_distance && rng.gen::<f64>() < self.chase_prob {
            let flee = s.power > 0;
            let score = |d: &usize| {
                let dist = manhattan(self.neighbor(pos, *d).unwrap(), s.pocman) as i64;
                if flee {
                    -dist
                } else {
                    dist
                }
            };
            *moves.iter().min_by_key(|d| score(d)).unwrap()
        } else {
            let forward: Vec<usize> = moves
                .iter()
                .copied()
                .filter(|&d| s.ghost_dirs[g] != Some((d + 2) % 4))
                .collect();
            let pool = if forward.is_empty() { &moves } else { &forward };
            *pool.choose(rng).unwrap()
        };
        s.ghosts[g] = self.neighbor(pos, dir).unwrap();
        s.ghost_dirs[g] = Some(dir);
    }

    /// Resolves contact between PocMan and ghosts; returns true on death.
    fn collide(&self, s: &mut PocmanState, reward: &mut f64) -> bool {
        for g in 0..N_GHOSTS {
            if s.ghosts[g] != s.pocman {
                continue;
            }
            if s.power > 0 {
                *reward += self.rewards.ghost;
                s.ghosts[g] = self.ghost_home[g];
                s.ghost_dirs[g] = None;
            } else {
                *reward += self.rewards.death;
                return true;
            }
        }
        false
    }
}

impl PomdpEnv for PocmanEnv {
    type State = PocmanState;
    type Obs = u16;

    fn num_actions(&self) -> usize {
        4
    }

    fn step(&self, s: &PocmanState, action: usize, rng: &mut SimRng) -> Result<PomdpStep<PocmanState, u16>> {
        if action >= 4 {
            return Err(Error::Environment(format!("illegal pocman action {action}")));
        }
        let mut next = s.clone();
        let mut reward = self.rewards.step;
        if let Some(c) = self.neighbor(s.pocman, action) {
            next.pocman = c;
        }
        next.power = next.power.saturating_sub(1);
        let mut dead = self.collide(&mut next, &mut reward);
        if !dead {
            for g in 0..N_GHOSTS {
                self.move_ghost(&mut next, g, rng);
            }
            dead = self.collide(&mut next, &mut reward);
        }
        let mut cleared = false;
        if !dead && next.has_food(next.pocman) {
            next.set_food(next.pocman, false);
            reward += self.rewards.food;
            if self.power_cells.contains(&next.pocman) {
                next.power = self.power_duration;
            }
            cleared = next.food_left() == 0;
        }
        Ok(PomdpStep {
            obs: self.observe(&next),
            state: next,
            reward,
            done: dead || cleared,
        })
    }

    /// Food in each corridor cell with probability `food_prob`, power pills
    /// in the four corners, ghosts at home.
    fn sample_initial(&self, rng: &mut SimRng) -> PocmanState {
        let mut s = self.empty_state();
        for &c in &self.food_cells {
            if rng.gen::<f64>() < self.food_prob {
                s.set_food(c, true);
            }
        }
        for &c in &self.power_cells {
            s.set_food(c, true);
        }
        s
    }

    fn reward_range(&self) -> (f64, f64) {
        let r = &self.rewards;
        (
            r.step + r.death.min(0.0),
            r.step + r.food.max(0.0) + N_GHOSTS as f64 * r.ghost.max(0.0),
        )
    }
}
