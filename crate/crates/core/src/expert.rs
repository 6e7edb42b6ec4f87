//! Expert demonstrations: shortest-path planning, dense-reward expert
//! training and the on-disk observation dataset.
//!
//! # Dataset format
//!
//! A UTF-8 text file. The first line is the header
//!
//! ```text
//! rilo-dataset <version> <variant> <side> <style> <generator> <count>
//! ```
//!
//! e.g. `rilo-dataset 1 full 9 4-way planner 2000`. Every following line is
//! one trajectory made of three bracketed groups separated by `;`:
//!
//! ```text
//! [c_0,c_1,...,c_{side²−1}];[goal_row,goal_col];[r_0,c_0,r_1,c_1,...]
//! ```
//!
//! The first group holds the map cells in row-major order (`0` empty, `1`
//! trap), the second the goal cell and the third the agent positions from
//! start to goal. Only states are stored, never actions.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{
    Cell, CellKind, EnvConfig, EnvError, EpisodeState, GridMap, MoveStyle, Observation, Outcome, Variant,
};
use crate::numnet::AdamState;
use crate::policy::{a2c_update, play, A2CConfig, ActMode, NetSpec, PolicyNet};

pub const DATASET_VERSION: u32 = 1;
const MAGIC: &str = "rilo-dataset";

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error("goal unreachable from {0}")]
    Unreachable(Cell),
    #[error("generator produced {got} of {wanted} trajectories within {attempts} attempts")]
    Budget { wanted: usize, got: usize, attempts: usize },
    #[error("dataset needs at least one trajectory")]
    Empty,
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported dataset version {0}")]
    Version(u32),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Invariant { line: usize, msg: String },
}

/// Shortest step counts to `target`; `None` where the target is unreachable.
///
/// Moves may jump over traps but never land on one; off-map moves are
/// no-ops and never shorten a path.
pub fn bfs_distance(map: &GridMap, style: MoveStyle, target: Cell) -> Vec<Option<usize>> {
    let side = map.side();
    let mut dist = vec![None; side * side];
    if map.is_trap(target) {
        return dist;
    }
    dist[target.row * side + target.col] = Some(0);
    let mut queue = VecDeque::from([target]);
    while let Some(cur) = queue.pop_front() {
        let d = dist[cur.row * side + cur.col].unwrap();
        for &(dr, dc) in style.displacements() {
            // predecessor p with p + (dr, dc) = cur
            let Some(prev) = cur.offset((-dr, -dc), side) else {
                continue;
            };
            let slot = &mut dist[prev.row * side + prev.col];
            if slot.is_none() && !map.is_trap(prev) {
                *slot = Some(d + 1);
                queue.push_back(prev);
            }
        }
    }
    dist
}

/// A shortest action sequence from `start` to the goal, preferring the
/// lowest action index among equally short continuations.
pub fn plan(map: &GridMap, style: MoveStyle, start: Cell) -> Result<Vec<usize>, ExpertError> {
    let side = map.side();
    let dist = bfs_distance(map, style, map.goal());
    let at = |c: Cell| dist[c.row * side + c.col];
    let mut d = at(start).ok_or(ExpertError::Unreachable(start))?;
    let mut cur = start;
    let mut actions = Vec::with_capacity(d);
    while d > 0 {
        let (a, next) = style
            .displacements()
            .iter()
            .enumerate()
            .find_map(|(a, &off)| {
                map.land(cur, off)
                    .filter(|&n| !map.is_trap(n) && at(n) == Some(d - 1))
                    .map(|n| (a, n))
            })
            .expect("distance field is consistent");
        actions.push(a);
        cur = next;
        d -= 1;
    }
    Ok(actions)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Planner,
    Policy,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Planner => "planner",
            Generator::Policy => "policy",
        }
    }
}

impl std::str::FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "planner" => Ok(Generator::Planner),
            "policy" => Ok(Generator::Policy),
            _ => Err(format!("unknown generator `{s}`")),
        }
    }
}

/// Where expert trajectories come from.
pub enum ExpertSource<'a> {
    Planner,
    /// Greedy rollouts of a trained policy; failures are discarded.
    TrainedPolicy(&'a PolicyNet),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u32,
    pub variant: Variant,
    pub side: usize,
    pub style: MoveStyle,
    pub generator: Generator,
    pub count: usize,
}

/// One successful demonstration: the map and the visited cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpertTrajectory {
    pub map: GridMap,
    pub positions: Vec<Cell>,
}

impl ExpertTrajectory {
    /// The observations `s_0 .. s_m` as the learner would see them, with the
    /// self-exploration bit cleared.
    pub fn observations(&self, cfg: &EnvConfig) -> Vec<Observation> {
        let max = self.positions.len();
        self.positions
            .iter()
            .map(|&p| EpisodeState::new(self.map.clone(), p, max).observe(cfg, 0))
            .collect()
    }

    fn check(&self, style: MoveStyle) -> Result<(), String> {
        let Some(&last) = self.positions.last() else {
            return Err("empty trajectory".into());
        };
        if last != self.map.goal() {
            return Err(format!("trajectory ends at {last}, goal is {}", self.map.goal()));
        }
        if self.positions.len() < 2 {
            return Err("trajectory starts on the goal".into());
        }
        if let Some(p) = self.positions.iter().find(|&&p| self.map.is_trap(p)) {
            return Err(format!("trajectory visits trap {p}"));
        }
        if let Some(p) = self.positions[..self.positions.len() - 1]
            .iter()
            .find(|&&p| p == self.map.goal())
        {
            return Err(format!("trajectory passes the goal {p} before its end"));
        }
        for w in self.positions.windows(2) {
            let off = (w[1].row as i32 - w[0].row as i32, w[1].col as i32 - w[0].col as i32);
            if style.action_for(off).is_none() {
                return Err(format!(
                    "displacement mismatch: {} -> {} is not a {} move",
                    w[0], w[1], style
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpertDataset {
    pub header: DatasetHeader,
    pub trajectories: Vec<ExpertTrajectory>,
}

/// Draws `n` successful expert trajectories on fresh maps.
pub fn generate_dataset<R: Rng + ?Sized>(
    n: usize,
    cfg: &EnvConfig,
    style: MoveStyle,
    source: ExpertSource<'_>,
    rng: &mut R,
) -> Result<ExpertDataset, ExpertError> {
    if n == 0 {
        return Err(ExpertError::Empty);
    }
    cfg.validate()?;
    let budget = 100 * n;
    let mut trajectories = Vec::with_capacity(n);
    let mut attempts = 0;
    while trajectories.len() < n {
        if attempts == budget {
            return Err(ExpertError::Budget {
                wanted: n,
                got: trajectories.len(),
                attempts,
            });
        }
        attempts += 1;
        let (map, start) = cfg.generate(rng)?;
        let positions = match &source {
            ExpertSource::Planner => match plan(&map, style, start) {
                Ok(actions) => {
                    let mut cur = start;
                    let mut positions = vec![start];
                    for a in actions {
                        cur = map.land(cur, style.displacements()[a]).unwrap();
                        positions.push(cur);
                    }
                    positions
                }
                Err(_) => continue,
            },
            ExpertSource::TrainedPolicy(net) => {
                let state = EpisodeState::new(map.clone(), start, cfg.max_steps);
                let r = play(net, cfg, state, 0, ActMode::Greedy, rng)?;
                if r.outcome != Outcome::Success {
                    continue;
                }
                r.positions
            }
        };
        trajectories.push(ExpertTrajectory { map, positions });
    }
    Ok(ExpertDataset {
        header: DatasetHeader {
            version: DATASET_VERSION,
            variant: cfg.variant,
            side: cfg.side,
            style,
            generator: match source {
                ExpertSource::Planner => Generator::Planner,
                ExpertSource::TrainedPolicy(_) => Generator::Policy,
            },
            count: n,
        },
        trajectories,
    })
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Full => "full",
        Variant::Partial => "partial",
    }
}

impl ExpertDataset {
    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut out = format!(
            "{MAGIC} {} {} {} {} {} {}\n",
            h.version,
            variant_name(h.variant),
            h.side,
            h.style.name(),
            h.generator.name(),
            self.trajectories.len()
        );
        for t in &self.trajectories {
            let join = |xs: &mut dyn Iterator<Item = usize>| xs.map(|x| x.to_string()).collect::<Vec<_>>().join(",");
            let cells = join(&mut t.map.cells().iter().map(|&c| usize::from(c == CellKind::Trap)));
            let goal = t.map.goal();
            let pos = join(&mut t.positions.iter().flat_map(|p| [p.row, p.col]));
            let _ = writeln!(out, "[{cells}];[{},{}];[{pos}]", goal.row, goal.col);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DatasetError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, first) = lines.next().ok_or(DatasetError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = parse_header(first)?;
        let mut trajectories = Vec::with_capacity(header.count);
        for (line, text) in lines {
            if text.trim().is_empty() {
                continue;
            }
            let t = parse_trajectory(text, header.side).map_err(|msg| DatasetError::Parse { line, msg })?;
            t.check(header.style)
                .map_err(|msg| DatasetError::Invariant { line, msg })?;
            trajectories.push(t);
        }
        if trajectories.len() != header.count {
            return Err(DatasetError::Parse {
                line: text.lines().count() + 1,
                msg: format!(
                    "header announces {} trajectories, found {}",
                    header.count,
                    trajectories.len()
                ),
            });
        }
        Ok(ExpertDataset { header, trajectories })
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn parse_header(line: &str) -> Result<DatasetHeader, DatasetError> {
    let err = |msg: String| DatasetError::Parse { line: 1, msg };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 7 || fields[0] != MAGIC {
        return Err(err(format!("bad header `{line}`")));
    }
    let version: u32 = fields[1]
        .parse()
        .map_err(|_| err(format!("bad version `{}`", fields[1])))?;
    if version != DATASET_VERSION {
        return Err(DatasetError::Version(version));
    }
    Ok(DatasetHeader {
        version,
        variant: fields[2].parse().map_err(err)?,
        side: fields[3]
            .parse()
            .map_err(|_| err(format!("bad side `{}`", fields[3])))?,
        style: fields[4].parse().map_err(err)?,
        generator: fields[5].parse().map_err(err)?,
        count: fields[6]
            .parse()
            .map_err(|_| err(format!("bad count `{}`", fields[6])))?,
    })
}

fn parse_group(group: &str) -> Result<Vec<usize>, String> {
    let inner = group
        .trim()
        .strip_prefix('[')
        .and_then(|g| g.strip_suffix(']'))
        .ok_or_else(|| format!("group `{group}` is not bracketed"))?;
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| format!("bad integer `{v}`")))
        .collect()
}

fn parse_trajectory(line: &str, side: usize) -> Result<ExpertTrajectory, String> {
    let groups: Vec<&str> = line.split(';').collect();
    let [cells, goal, pos] = groups[..] else {
        return Err(format!("expected 3 groups, found {}", groups.len()));
    };
    let cells = parse_group(cells)?;
    if cells.len() != side * side {
        return Err(format!("expected {} cells, found {}", side * side, cells.len()));
    }
    let cells = cells
        .into_iter()
        .map(|c| match c {
            0 => Ok(CellKind::Empty),
            1 => Ok(CellKind::Trap),
            other => Err(format!("bad cell code {other}")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let goal = match parse_group(goal)?[..] {
        [r, c] => Cell::new(r, c),
        _ => return Err("goal group needs 2 integers".into()),
    };
    let pos = parse_group(pos)?;
    if pos.len() % 2 != 0 || pos.is_empty() {
        return Err("position group needs a non-empty even count".into());
    }
    if pos.iter().any(|&v| v >= side) {
        return Err("position outside the map".into());
    }
    let positions = pos.chunks(2).map(|p| Cell::new(p[0], p[1])).collect();
    let map = GridMap::from_cells(side, cells, goal).map_err(|e| e.to_string())?;
    Ok(ExpertTrajectory { map, positions })
}

/// Potential-based shaping on the shortest-path distance to the goal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenseRewardSpec {
    /// `false` zeroes the potential, leaving the sparse reward.
    pub shaping: bool,
}

impl Default for DenseRewardSpec {
    fn default() -> Self {
        DenseRewardSpec { shaping: true }
    }
}

/// Potential `Φ(s) = −d(s)/D_max` per cell, where `D_max` is the largest
/// finite distance on the map. Unreachable cells get `−1`.
pub fn potential(map: &GridMap, style: MoveStyle) -> Vec<f64> {
    let dist = bfs_distance(map, style, map.goal());
    let d_max = dist.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    dist.iter().map(|d| d.map_or(-1.0, |d| -(d as f64) / d_max)).collect()
}

/// Shaped rewards `r_t + γΦ(s_{t+1}) − Φ(s_t)` with `Φ = 0` on the terminal
/// state of an episode that ended on the goal or a trap.
pub fn shaped_rewards(
    phi: &[f64],
    side: usize,
    positions: &[Cell],
    env_rewards: &[f64],
    terminal: bool,
    gamma: f64,
) -> Vec<f64> {
    let at = |c: Cell| phi[c.row * side + c.col];
    let m = env_rewards.len();
    (0..m)
        .map(|t| {
            let next = if terminal && t + 1 == m {
                0.0
            } else {
                at(positions[t + 1])
            };
            env_rewards[t] + gamma * next - at(positions[t])
        })
        .collect()
}

/// A trained expert and its greedy success rate.
pub struct TrainedExpert {
    pub net: PolicyNet,
    pub success: f64,
}

/// Greedy success rate of `net` over `episodes` fresh maps.
pub fn greedy_success<R: Rng + ?Sized>(
    net: &PolicyNet,
    cfg: &EnvConfig,
    episodes: usize,
    rng: &mut R,
) -> Result<f64, EnvError> {
    let mut wins = 0;
    for _ in 0..episodes {
        let state = EpisodeState::reset(cfg, rng)?;
        wins += usize::from(play(net, cfg, state, 0, ActMode::Greedy, rng)?.success());
    }
    Ok(wins as f64 / episodes.max(1) as f64)
}

/// Trains a policy with shaped rewards and no imitation for `episodes`
/// episodes, then measures its greedy success on 1000 fresh maps.
#[allow(clippy::too_many_arguments)]
pub fn train_dense_expert<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    style: MoveStyle,
    spec: &DenseRewardSpec,
    net_spec: &NetSpec,
    a2c: &A2CConfig,
    episodes: usize,
    rng: &mut R,
) -> Result<TrainedExpert, EnvError> {
    cfg.validate()?;
    let mut net = PolicyNet::new(net_spec, cfg, style, rng);
    let mut opt = AdamState::new(&net.params, a2c.lr);
    let mut batch = Vec::with_capacity(a2c.episodes_per_update);
    for _ in 0..episodes {
        let state = EpisodeState::reset(cfg, rng)?;
        let phi = if spec.shaping {
            potential(&state.map, style)
        } else {
            vec![0.0; cfg.side * cfg.side]
        };
        let mut r = play(&net, cfg, state, 0, ActMode::Sample { epsilon: a2c.epsilon }, rng)?;
        let terminal = r.outcome != Outcome::Timeout;
        r.final_rewards = shaped_rewards(&phi, cfg.side, &r.positions, &r.env_rewards(), terminal, a2c.gamma);
        batch.push(r);
        if batch.len() == a2c.episodes_per_update {
            a2c_update(&mut net, &batch, a2c, &mut opt);
            batch.clear();
        }
    }
    let success = greedy_success(&net, cfg, 1000, rng)?;
    Ok(TrainedExpert { net, success })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::Variant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    /// Forward search over an explicit adjacency list, built without the
    /// reverse-edge trick used by [`bfs_distance`].
    fn brute_distance(map: &GridMap, style: MoveStyle, start: Cell) -> Option<usize> {
        let side = map.side();
        let mut adj: HashMap<Cell, Vec<Cell>> = HashMap::new();
        for r in 0..side {
            for c in 0..side {
                let from = Cell::new(r, c);
                if map.is_trap(from) {
                    continue;
                }
                let mut next = Vec::new();
                for &(dr, dc) in style.displacements() {
                    let (nr, nc) = (r as i64 + dr as i64, c as i64 + dc as i64);
                    if nr < 0 || nc < 0 || nr >= side as i64 || nc >= side as i64 {
                        continue;
                    }
                    let to = Cell::new(nr as usize, nc as usize);
                    if !map.is_trap(to) {
                        next.push(to);
                    }
                }
                adj.insert(from, next);
            }
        }
        if map.is_trap(start) {
            return None;
        }
        let mut seen = HashMap::from([(start, 0usize)]);
        let mut frontier = vec![start];
        let mut depth = 0;
        while !frontier.is_empty() {
            if frontier.contains(&map.goal()) {
                return Some(depth);
            }
            depth += 1;
            let mut next = Vec::new();
            for cell in frontier {
                for &n in &adj[&cell] {
                    if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(n) {
                        e.insert(depth);
                        next.push(n);
                    }
                }
            }
            frontier = next;
        }
        None
    }

    #[test]
    fn open_map_distances_are_manhattan() {
        let map = GridMap::open(9, Cell::new(7, 7));
        let dist = bfs_distance(&map, MoveStyle::FourWay, map.goal());
        assert_eq!(dist[7 * 9 + 7], Some(0));
        assert_eq!(dist[9 + 1], Some(12));
        assert_eq!(dist[0], None);
    }

    #[test]
    fn planner_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for variant in [Variant::Full, Variant::Partial] {
            let cfg = match variant {
                Variant::Full => EnvConfig::full(7),
                Variant::Partial => EnvConfig::partial(7),
            };
            for _ in 0..50 {
                let (map, start) = cfg.generate(&mut rng).unwrap();
                for style in MoveStyle::ALL {
                    let dist = bfs_distance(&map, style, map.goal());
                    for cell in map.inner_cells() {
                        assert_eq!(dist[cell.row * 7 + cell.col], brute_distance(&map, style, cell));
                    }
                    match plan(&map, style, start) {
                        Ok(actions) => {
                            assert_eq!(Some(actions.len()), dist[start.row * 7 + start.col]);
                            let mut s = EpisodeState::new(map.clone(), start, 100);
                            for a in actions {
                                s.step(a, style).unwrap();
                            }
                            assert_eq!(s.outcome, Outcome::Success);
                        }
                        Err(ExpertError::Unreachable(c)) => assert_eq!(c, start),
                        Err(e) => panic!("{e}"),
                    }
                }
            }
        }
    }

    #[test]
    fn hand_plans() {
        let map = GridMap::open(9, Cell::new(4, 4));
        assert_eq!(plan(&map, MoveStyle::FourWay, Cell::new(4, 3)).unwrap().len(), 1);
        // (2,4) -> (3,6) -> (4,4)
        let actions = plan(&map, MoveStyle::Knight, Cell::new(2, 4)).unwrap();
        assert_eq!(actions.len(), 2);
    }

    #[test]
    fn dataset_round_trip_is_byte_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = EnvConfig::full(7);
        let ds = generate_dataset(20, &cfg, MoveStyle::King, ExpertSource::Planner, &mut rng).unwrap();
        assert!(ds
            .trajectories
            .iter()
            .all(|t| t.positions.last() == Some(&t.map.goal())));
        let text = ds.to_text();
        let back = ExpertDataset::from_text(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn dataset_errors_carry_line_numbers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = EnvConfig::full(7);
        let ds = generate_dataset(3, &cfg, MoveStyle::FourWay, ExpertSource::Planner, &mut rng).unwrap();
        let text = ds.to_text();
        let cut = &text[..text.len() - 10];
        match ExpertDataset::from_text(cut) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let bumped = text.replacen("rilo-dataset 1", "rilo-dataset 9", 1);
        assert!(matches!(
            ExpertDataset::from_text(&bumped),
            Err(DatasetError::Version(9))
        ));
        // a king trajectory under a 4-way header
        let king = generate_dataset(40, &cfg, MoveStyle::King, ExpertSource::Planner, &mut rng).unwrap();
        let diagonal = king
            .trajectories
            .iter()
            .find(|t| {
                t.positions
                    .windows(2)
                    .any(|w| w[0].row != w[1].row && w[0].col != w[1].col)
            })
            .unwrap()
            .clone();
        let mut mixed = ds.clone();
        mixed.trajectories[1] = diagonal;
        match ExpertDataset::from_text(&mixed.to_text()) {
            Err(DatasetError::Invariant { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("displacement mismatch"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shaping_telescopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = EnvConfig::full(9);
        let gamma = 0.9;
        for _ in 0..50 {
            let (map, start) = cfg.generate(&mut rng).unwrap();
            let phi = potential(&map, MoveStyle::FourWay);
            let mut s = EpisodeState::new(map, start, cfg.max_steps);
            let mut positions = vec![start];
            let mut env = Vec::new();
            while !s.done {
                env.push(s.step(rng.gen_range(0..4), MoveStyle::FourWay).unwrap().reward);
                positions.push(s.agent);
            }
            let terminal = s.outcome != Outcome::Timeout;
            let shaped = shaped_rewards(&phi, 9, &positions, &env, terminal, gamma);
            let m = env.len();
            let disc = |xs: &[f64]| {
                xs.iter()
                    .enumerate()
                    .map(|(t, r)| gamma.powi(t as i32) * r)
                    .sum::<f64>()
            };
            let at = |c: Cell| phi[c.row * 9 + c.col];
            let end = if terminal { 0.0 } else { at(positions[m]) };
            let expected = disc(&env) + gamma.powi(m as i32) * end - at(start);
            assert!((disc(&shaped) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn policy_generator_keeps_only_successes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = EnvConfig::full(7);
        let net = PolicyNet::new(&NetSpec::default(), &cfg, MoveStyle::FourWay, &mut rng);
        match generate_dataset(2, &cfg, MoveStyle::FourWay, ExpertSource::TrainedPolicy(&net), &mut rng) {
            Ok(ds) => assert!(ds.trajectories.iter().all(|t| t.check(MoveStyle::FourWay).is_ok())),
            Err(ExpertError::Budget { attempts, .. }) => assert_eq!(attempts, 200),
            Err(e) => panic!("{e}"),
        }
    }
}
