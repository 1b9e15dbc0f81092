//! Slippery 8x8 grid lake.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mcts::{Environment, Transition};
use crate::SimRng;

pub const LAKE_MAP: [&str; 8] = [
    "SFFFFFFF", "FFFFFFFF", "FFFHFFFF", "FFFFFHFF", "FFFHFFFF", "FHHFFFHF", "FHFFHFHF", "FFFHFFFG",
];

pub const STEP_LIMIT: u32 = 200;

pub const LEFT: usize = 0;
pub const DOWN: usize = 1;
pub const RIGHT: usize = 2;
pub const UP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Start,
    Frozen,
    Hole,
    Goal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLakeEnv {
    cells: Vec<Cell>,
    size: usize,
    start: usize,
    step_limit: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LakeState {
    pub pos: usize,
    pub t: u32,
}

impl Default for GridLakeEnv {
    fn default() -> Self {
        Self::from_map(&LAKE_MAP, STEP_LIMIT).expect("built-in map is valid")
    }
}

impl GridLakeEnv {
    pub fn new() -> Self {
        Self::default()
    }

    /// Square map with one `S`, at least one `G`, and `F`/`H` elsewhere.
    pub fn from_map(rows: &[&str], step_limit: u32) -> Result<Self> {
        let size = rows.len();
        let mut cells = Vec::with_capacity(size * size);
        for row in rows {
            if row.len() != size {
                return Err(Error::domain("lake map must be square"));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    'S' => Cell::Start,
                    'F' => Cell::Frozen,
                    'H' => Cell::Hole,
                    'G' => Cell::Goal,
                    other => return Err(Error::domain(format!("unknown map cell {other:?}"))),
                });
            }
        }
        let starts: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] == Cell::Start).collect();
        if starts.len() != 1 || !cells.contains(&Cell::Goal) {
            return Err(Error::domain("lake map needs exactly one start and a goal"));
        }
        Ok(GridLakeEnv {
            cells,
            size,
            start: starts[0],
            step_limit,
        })
    }

    pub fn initial_state(&self) -> LakeState {
        LakeState { pos: self.start, t: 0 }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_goal(&self, pos: usize) -> bool {
        self.cells[pos] == Cell::Goal
    }

    pub fn is_hole(&self, pos: usize) -> bool {
        self.cells[pos] == Cell::Hole
    }

    /// Cell reached by moving one step in `direction`; walls clamp.
    pub fn neighbor(&self, pos: usize, direction: usize) -> usize {
        let (r, c) = (pos / self.size, pos % self.size);
        let last = self.size - 1;
        let (r, c) = match direction {
            LEFT => (r, c.saturating_sub(1)),
            DOWN => ((r + 1).min(last), c),
            RIGHT => (r, (c + 1).min(last)),
            _ => (r.saturating_sub(1), c),
        };
        r * self.size + c
    }

    /// Direction actually taken: the intended one or either perpendicular
    /// one, each with probability 1/3.
    pub fn slip(&self, action: usize, rng: &mut SimRng) -> usize {
        (action + 3 + rng.gen_range(0..3)) % 4
    }
}

impl Environment for GridLakeEnv {
    type State = LakeState;

    fn num_actions(&self, _: &LakeState) -> usize {
        4
    }

    fn step(&self, state: &LakeState, action: usize, rng: &mut SimRng) -> Result<Transition<LakeState>> {
        if action >= 4 {
            return Err(Error::Environment(format!("illegal lake action {action}")));
        }
        let pos = self.neighbor(state.pos, self.slip(action, rng));
        let t = state.t + 1;
        let goal = self.is_goal(pos);
        Ok(Transition {
            state: LakeState { pos, t },
            reward: if goal { 1.0 } else { 0.0 },
            done: goal || self.is_hole(pos) || t >= self.step_limit,
        })
    }

    fn reward_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}
