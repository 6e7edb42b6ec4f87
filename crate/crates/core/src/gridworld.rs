//! Procedurally generated navigation grid worlds.
//!
//! Two map families are supported:
//!
//! * [`Variant::Full`]: the whole grid is visible, inner cells are traps with a
//!   fixed probability, the goal is anywhere inside and the agent starts in a
//!   triangle on the left side of the map.
//! * [`Variant::Partial`]: walls split the map into four rooms joined by one
//!   random passage per wall segment, the goal sits in an inner corner and the
//!   agent only sees a small window around itself.
//!
//! Every map has a ring of traps on its border. Moves are teleports: only the
//! landing cell matters, so knight-like pieces jump over traps and walls.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cell code of the goal in an [`Observation`] view.
pub const CODE_GOAL: i8 = 3;
/// Cell code of the agent.
pub const CODE_AGENT: i8 = 2;
/// Cell code of traps, walls and out-of-map cells.
pub const CODE_TRAP: i8 = -1;
/// Cell code of a free cell.
pub const CODE_EMPTY: i8 = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("map side {0} is too small (minimum 7)")]
    SideTooSmall(usize),
    #[error("partial maps need an odd side, got {0}")]
    EvenSide(usize),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("action index {index} out of range for {style} ({count} actions)")]
    BadAction {
        index: usize,
        style: MoveStyle,
        count: usize,
    },
    #[error("expected a {expected:?} config, got {got:?}")]
    WrongVariant { expected: Variant, got: Variant },
}

/// A position on the grid. Row 0 is the top row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Applies an offset, returning `None` when the result leaves a `side`×`side` grid.
    pub fn offset(self, (dr, dc): (i32, i32), side: usize) -> Option<Cell> {
        let r = self.row as i64 + dr as i64;
        let c = self.col as i64 + dc as i64;
        if r < 0 || c < 0 || r >= side as i64 || c >= side as i64 {
            None
        } else {
            Some(Cell::new(r as usize, c as usize))
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

const FOUR_WAY: [(i32, i32); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const KING: [(i32, i32); 8] = [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)];
const KNIGHT: [(i32, i32); 8] = [(-2, -1), (-2, 1), (-1, -2), (-1, 2), (1, -2), (1, 2), (2, -1), (2, 1)];
const SIXTEEN_WAY: [(i32, i32); 16] = [
    (-2, -1),
    (-2, 1),
    (-1, -2),
    (-1, 2),
    (1, -2),
    (1, 2),
    (2, -1),
    (2, 1),
    (-2, -2),
    (-2, 0),
    (-2, 2),
    (0, -2),
    (0, 2),
    (2, -2),
    (2, 0),
    (2, 2),
];

/// The displacement set of an agent, i.e. its action space.
///
/// Offsets are ordered so that the smaller set of each subset pair forms a
/// prefix of the larger one (four-way of king, knight of sixteen-way).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MoveStyle {
    #[serde(rename = "4-way")]
    FourWay,
    #[serde(rename = "king")]
    King,
    #[serde(rename = "knight")]
    Knight,
    #[serde(rename = "16-way")]
    SixteenWay,
}

impl MoveStyle {
    pub const ALL: [MoveStyle; 4] = [
        MoveStyle::FourWay,
        MoveStyle::King,
        MoveStyle::Knight,
        MoveStyle::SixteenWay,
    ];

    pub fn displacements(self) -> &'static [(i32, i32)] {
        match self {
            MoveStyle::FourWay => &FOUR_WAY,
            MoveStyle::King => &KING,
            MoveStyle::Knight => &KNIGHT,
            MoveStyle::SixteenWay => &SIXTEEN_WAY,
        }
    }

    pub fn action_count(self) -> usize {
        self.displacements().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            MoveStyle::FourWay => "4-way",
            MoveStyle::King => "king",
            MoveStyle::Knight => "knight",
            MoveStyle::SixteenWay => "16-way",
        }
    }

    /// Index of `offset` in this style's displacement list.
    pub fn action_for(self, offset: (i32, i32)) -> Option<usize> {
        self.displacements().iter().position(|&d| d == offset)
    }
}

impl fmt::Display for MoveStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MoveStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "4-way" | "fourway" | "four-way" | "4way" => Ok(MoveStyle::FourWay),
            "king" => Ok(MoveStyle::King),
            "knight" => Ok(MoveStyle::Knight),
            "16-way" | "sixteenway" | "sixteen-way" | "16way" => Ok(MoveStyle::SixteenWay),
            other => Err(format!("unknown move style `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Partial,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::Partial => "partial",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "f" => Ok(Variant::Full),
            "partial" | "p" => Ok(Variant::Partial),
            other => Err(format!("unknown map variant `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Empty,
    Trap,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridMap {
    side: usize,
    cells: Vec<CellKind>,
    goal: Cell,
}

impl GridMap {
    /// Builds a map from raw cells, checking the border ring and the goal.
    pub fn from_cells(side: usize, cells: Vec<CellKind>, goal: Cell) -> Result<Self, EnvError> {
        if cells.len() != side * side {
            return Err(EnvError::InvalidConfig(format!(
                "{} cells for side {side}",
                cells.len()
            )));
        }
        let map = GridMap { side, cells, goal };
        for i in 0..side {
            for cell in [
                Cell::new(0, i),
                Cell::new(side - 1, i),
                Cell::new(i, 0),
                Cell::new(i, side - 1),
            ] {
                if !map.is_trap(cell) {
                    return Err(EnvError::InvalidConfig(format!("border cell {cell} is not a trap")));
                }
            }
        }
        if !map.is_inner(goal) || map.is_trap(goal) {
            return Err(EnvError::InvalidConfig(format!("goal {goal} is not a free inner cell")));
        }
        Ok(map)
    }

    /// An empty map (border ring only) with the given goal.
    pub fn open(side: usize, goal: Cell) -> Self {
        let mut cells = vec![CellKind::Empty; side * side];
        for i in 0..side {
            cells[i] = CellKind::Trap;
            cells[(side - 1) * side + i] = CellKind::Trap;
            cells[i * side] = CellKind::Trap;
            cells[i * side + side - 1] = CellKind::Trap;
        }
        GridMap { side, cells, goal }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn cells(&self) -> &[CellKind] {
        &self.cells
    }

    pub fn get(&self, cell: Cell) -> CellKind {
        self.cells[cell.row * self.side + cell.col]
    }

    pub fn set(&mut self, cell: Cell, kind: CellKind) {
        self.cells[cell.row * self.side + cell.col] = kind;
    }

    pub fn is_trap(&self, cell: Cell) -> bool {
        self.get(cell) == CellKind::Trap
    }

    pub fn is_inner(&self, cell: Cell) -> bool {
        cell.row >= 1 && cell.col >= 1 && cell.row + 1 < self.side && cell.col + 1 < self.side
    }

    /// Where a move lands, or `None` for an off-map landing.
    pub fn land(&self, from: Cell, offset: (i32, i32)) -> Option<Cell> {
        from.offset(offset, self.side)
    }

    pub fn inner_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let side = self.side;
        (1..side - 1).flat_map(move |r| (1..side - 1).map(move |c| Cell::new(r, c)))
    }

    /// Fraction of inner cells that are traps.
    pub fn inner_trap_fraction(&self) -> f64 {
        let inner = (self.side - 2) * (self.side - 2);
        let traps = self.inner_cells().filter(|&c| self.is_trap(c)).count();
        traps as f64 / inner as f64
    }

    /// Text rendering, one char per cell: `#` trap, `.` free, `G` goal, `A` agent.
    pub fn render(&self, agent: Option<Cell>) -> String {
        let mut out = String::with_capacity(self.side * (self.side + 1));
        for r in 0..self.side {
            for c in 0..self.side {
                let cell = Cell::new(r, c);
                let ch = if Some(cell) == agent {
                    'A'
                } else if cell == self.goal {
                    'G'
                } else if self.is_trap(cell) {
                    '#'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

/// Environment parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub variant: Variant,
    pub side: usize,
    /// Trap probability of each free inner cell (full maps only).
    pub trap_prob: f64,
    pub max_steps: usize,
    /// Window side of partial observations.
    pub view: usize,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::full(13)
    }
}

impl EnvConfig {
    pub fn full(side: usize) -> Self {
        EnvConfig {
            variant: Variant::Full,
            side,
            trap_prob: 0.15,
            max_steps: 26,
            view: 5,
            seed: 0,
        }
    }

    pub fn partial(side: usize) -> Self {
        EnvConfig {
            variant: Variant::Partial,
            side,
            trap_prob: 0.15,
            max_steps: 51,
            view: 5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.side < 7 {
            return Err(EnvError::SideTooSmall(self.side));
        }
        if self.variant == Variant::Partial && self.side.is_multiple_of(2) {
            return Err(EnvError::EvenSide(self.side));
        }
        if !(0.0..1.0).contains(&self.trap_prob) {
            return Err(EnvError::InvalidConfig(format!(
                "trap_prob {} outside [0, 1)",
                self.trap_prob
            )));
        }
        if self.max_steps == 0 {
            return Err(EnvError::InvalidConfig("max_steps must be at least 1".into()));
        }
        if self.view.is_multiple_of(2) || self.view > self.side {
            return Err(EnvError::InvalidConfig(format!(
                "view {} must be odd and at most the side {}",
                self.view, self.side
            )));
        }
        Ok(())
    }

    /// Side of the observed view matrix.
    pub fn view_side(&self) -> usize {
        match self.variant {
            Variant::Full => self.side,
            Variant::Partial => self.view,
        }
    }

    /// Draws a fresh map and start cell for this config.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(GridMap, Cell), EnvError> {
        match self.variant {
            Variant::Full => generate_full_map(self, rng),
            Variant::Partial => generate_partial_map(self, rng),
        }
    }
}

/// Start cells of full maps: the lattice triangle hugging the left edge of the
/// inner area, spanned by its top-left and bottom-left corners and pointing to
/// the centre. In inner coordinates `(i, j)` with inner size `n` this is
/// `j < i` and `i + j < n`, which yields 30 cells for a 13×13 map.
pub fn full_start_region(side: usize) -> Vec<Cell> {
    let n = side - 2;
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if j < i && i + j < n {
                out.push(Cell::new(i + 1, j + 1));
            }
        }
    }
    out
}

pub fn generate_full_map<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Result<(GridMap, Cell), EnvError> {
    if cfg.variant != Variant::Full {
        return Err(EnvError::WrongVariant {
            expected: Variant::Full,
            got: cfg.variant,
        });
    }
    if cfg.side < 7 {
        return Err(EnvError::SideTooSmall(cfg.side));
    }
    let side = cfg.side;
    let n = side - 2;
    let starts = full_start_region(side);
    let (goal, start) = loop {
        let goal = Cell::new(1 + rng.gen_range(0..n), 1 + rng.gen_range(0..n));
        let start = starts[rng.gen_range(0..starts.len())];
        if start != goal {
            break (goal, start);
        }
    };
    let mut map = GridMap::open(side, goal);
    for r in 1..side - 1 {
        for c in 1..side - 1 {
            let cell = Cell::new(r, c);
            if cell == goal || cell == start {
                continue;
            }
            if rng.gen::<f64>() < cfg.trap_prob {
                map.set(cell, CellKind::Trap);
            }
        }
    }
    Ok((map, start))
}

/// Room index (0 = top-left, 1 = top-right, 2 = bottom-left, 3 = bottom-right)
/// of an inner cell of a partial map, `None` on the dividing lines.
pub fn room_of(cell: Cell, side: usize) -> Option<usize> {
    let mid = side / 2;
    if cell.row == mid || cell.col == mid {
        return None;
    }
    Some(usize::from(cell.row > mid) * 2 + usize::from(cell.col > mid))
}

/// The four wall segments of a partial map (left, right, top, bottom arms of the cross).
pub fn wall_segments(side: usize) -> [Vec<Cell>; 4] {
    let mid = side / 2;
    [
        (1..mid).map(|c| Cell::new(mid, c)).collect(),
        (mid + 1..side - 1).map(|c| Cell::new(mid, c)).collect(),
        (1..mid).map(|r| Cell::new(r, mid)).collect(),
        (mid + 1..side - 1).map(|r| Cell::new(r, mid)).collect(),
    ]
}

pub fn inner_corners(side: usize) -> [Cell; 4] {
    [
        Cell::new(1, 1),
        Cell::new(1, side - 2),
        Cell::new(side - 2, 1),
        Cell::new(side - 2, side - 2),
    ]
}

pub fn generate_partial_map<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Result<(GridMap, Cell), EnvError> {
    if cfg.variant != Variant::Partial {
        return Err(EnvError::WrongVariant {
            expected: Variant::Partial,
            got: cfg.variant,
        });
    }
    let side = cfg.side;
    if side.is_multiple_of(2) {
        return Err(EnvError::EvenSide(side));
    }
    if side < 7 {
        return Err(EnvError::SideTooSmall(side));
    }
    let mid = side / 2;
    let goal = inner_corners(side)[rng.gen_range(0..4)];
    let mut map = GridMap::open(side, goal);
    map.set(Cell::new(mid, mid), CellKind::Trap);
    for segment in wall_segments(side) {
        let passage = rng.gen_range(0..segment.len());
        for (i, &cell) in segment.iter().enumerate() {
            if i != passage {
                map.set(cell, CellKind::Trap);
            }
        }
    }
    let goal_room = room_of(goal, side);
    let candidates: Vec<Cell> = map
        .inner_cells()
        .filter(|&c| room_of(c, side).is_some() && room_of(c, side) != goal_room)
        .collect();
    let start = candidates[rng.gen_range(0..candidates.len())];
    Ok((map, start))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Ongoing,
    Success,
    TrapDeath,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
}

/// A running episode: the map, where the agent is, and termination bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeState {
    pub map: GridMap,
    pub agent: Cell,
    pub steps: usize,
    pub max_steps: usize,
    pub done: bool,
    pub outcome: Outcome,
}

impl EpisodeState {
    pub fn new(map: GridMap, start: Cell, max_steps: usize) -> Self {
        EpisodeState {
            map,
            agent: start,
            steps: 0,
            max_steps,
            done: false,
            outcome: Outcome::Ongoing,
        }
    }

    /// Generates a fresh episode for `cfg`.
    pub fn reset<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Result<Self, EnvError> {
        let (map, start) = cfg.generate(rng)?;
        Ok(Self::new(map, start, cfg.max_steps))
    }

    /// Applies one action. Off-map landings leave the agent in place.
    pub fn step(&mut self, action_index: usize, style: MoveStyle) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let offsets = style.displacements();
        let Some(&offset) = offsets.get(action_index) else {
            return Err(EnvError::BadAction {
                index: action_index,
                style,
                count: offsets.len(),
            });
        };
        self.steps += 1;
        let mut reward = 0.0;
        if let Some(next) = self.map.land(self.agent, offset) {
            self.agent = next;
            if next == self.map.goal() {
                reward = 1.0;
                self.finish(Outcome::Success);
            } else if self.map.is_trap(next) {
                reward = -1.0;
                self.finish(Outcome::TrapDeath);
            }
        }
        if !self.done && self.steps >= self.max_steps {
            self.finish(Outcome::Timeout);
        }
        Ok(StepResult {
            reward,
            done: self.done,
        })
    }

    fn finish(&mut self, outcome: Outcome) {
        self.done = true;
        self.outcome = outcome;
    }

    /// The coded view of this state. See [`Observation`].
    pub fn observe(&self, cfg: &EnvConfig, tau_bit: u8) -> Observation {
        let side = self.map.side();
        let (view_side, top, left) = match cfg.variant {
            Variant::Full => (side, 0i64, 0i64),
            Variant::Partial => {
                let half = (cfg.view / 2) as i64;
                (cfg.view, self.agent.row as i64 - half, self.agent.col as i64 - half)
            }
        };
        let mut view = Vec::with_capacity(view_side * view_side);
        for dr in 0..view_side as i64 {
            for dc in 0..view_side as i64 {
                let (r, c) = (top + dr, left + dc);
                let code = if r < 0 || c < 0 || r >= side as i64 || c >= side as i64 {
                    CODE_TRAP
                } else {
                    let cell = Cell::new(r as usize, c as usize);
                    if cell == self.agent {
                        CODE_AGENT
                    } else if cell == self.map.goal() {
                        CODE_GOAL
                    } else if self.map.is_trap(cell) {
                        CODE_TRAP
                    } else {
                        CODE_EMPTY
                    }
                };
                view.push(code);
            }
        }
        Observation {
            view,
            view_side,
            pos: normalized_pos(self.agent, side),
            tau_bit,
        }
    }
}

/// Position features `(x, y)` strictly inside the unit square.
pub fn normalized_pos(cell: Cell, side: usize) -> (f64, f64) {
    let denom = (side + 1) as f64;
    ((cell.col + 1) as f64 / denom, (cell.row + 1) as f64 / denom)
}

/// What an agent sees: a coded view matrix, its position and the
/// self-exploration bit.
///
/// The agent code overrides whatever lies underneath it, so a state standing
/// on the goal shows no goal cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Row-major `view_side`×`view_side` codes.
    pub view: Vec<i8>,
    pub view_side: usize,
    pub pos: (f64, f64),
    pub tau_bit: u8,
}

impl Observation {
    /// The all-zeros observation used as the second slot of single-state
    /// discrimination.
    pub fn zeros(view_side: usize) -> Self {
        Observation {
            view: vec![0; view_side * view_side],
            view_side,
            pos: (0.0, 0.0),
            tau_bit: 0,
        }
    }

    pub fn code(&self, row: usize, col: usize) -> i8 {
        self.view[row * self.view_side + col]
    }
}
