//! A stochastic grid world with walls and holes, its maps, and its
//! description in the action language.
//!
//! Coordinates put `(0,0)` at the bottom-left; `y` grows upward. Map files
//! list the top row first.

mod map;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::action_lang::{self, ActionDescription, State, Value};
use crate::mdp::{ActionModel, ExplicitMdp, Outcome, ReducedMdp};
use crate::rl::{Environment, Terminal, Transition};

pub use map::GridMap;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("line {line}: row has {found} cells, expected {expected}")]
    NonRectangular {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("map needs exactly one start and one goal")]
    MissingStartOrGoal,
    #[error("map has more than one '{0}'")]
    DuplicateStartOrGoal(char),
    #[error("line {line}, column {col}: invalid character '{ch}'")]
    InvalidChar { line: usize, col: usize, ch: char },
    #[error("cell {0} is used twice")]
    Overlap(Cell),
    #[error("cell {0} is outside the grid")]
    OutOfBounds(Cell),
    #[error("agent cannot be in {0}")]
    InvalidState(Cell),
    #[error("unknown action '{0}'")]
    InvalidAction(String),
    #[error("maps differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(i32, i32, i32, i32),
    #[error("slip probabilities must be non-negative and sum to 1")]
    BadSlip,
    #[error("state {0} is not a grid cell")]
    NotACell(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn shifted(self, m: Move) -> Cell {
        let (dx, dy) = m.delta();
        Cell::new(self.x + dx, self.y + dy)
    }

    pub fn to_state(self) -> State {
        State(vec![Value::Tuple(vec![self.x.into(), self.y.into()])])
    }

    pub fn from_state(state: &State) -> Result<Cell, GridError> {
        match state.0.as_slice() {
            [Value::Tuple(xy)] if xy.len() == 2 => Ok(Cell::new(xy[0] as i32, xy[1] as i32)),
            _ => Err(GridError::NotACell(state.to_string())),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

impl FromStr for Cell {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GridError::NotACell(s.to_string());
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(bad)?;
        let (x, y) = inner.split_once(',').ok_or_else(bad)?;
        Ok(Cell::new(
            x.trim().parse().map_err(|_| bad())?,
            y.trim().parse().map_err(|_| bad())?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn name(self) -> &'static str {
        match self {
            Move::Up => "up",
            Move::Down => "down",
            Move::Left => "left",
            Move::Right => "right",
        }
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Move::Up => (0, 1),
            Move::Down => (0, -1),
            Move::Left => (-1, 0),
            Move::Right => (1, 0),
        }
    }

    /// The two directions a slip can take the agent in.
    pub fn orthogonal(self) -> [Move; 2] {
        match self {
            Move::Up | Move::Down => [Move::Left, Move::Right],
            Move::Left | Move::Right => [Move::Up, Move::Down],
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Move {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Move::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| GridError::InvalidAction(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipModel {
    pub p_intended: f64,
    pub p_orthogonal_each: f64,
}

impl Default for SlipModel {
    fn default() -> Self {
        SlipModel {
            p_intended: 0.8,
            p_orthogonal_each: 0.1,
        }
    }
}

impl SlipModel {
    pub fn new(p_intended: f64, p_orthogonal_each: f64) -> Result<Self, GridError> {
        let ok = p_intended >= 0.0
            && p_orthogonal_each >= 0.0
            && (p_intended + 2.0 * p_orthogonal_each - 1.0).abs() < 1e-12;
        if ok {
            Ok(SlipModel {
                p_intended,
                p_orthogonal_each,
            })
        } else {
            Err(GridError::BadSlip)
        }
    }

    pub fn deterministic() -> Self {
        SlipModel {
            p_intended: 1.0,
            p_orthogonal_each: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cause {
    Goal,
    Hole,
    Move,
    WallBump,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: Cell,
    pub reward: f64,
    pub terminal: bool,
    pub cause: Cause,
}

pub const GOAL_REWARD: f64 = 100.0;
pub const HOLE_REWARD: f64 = -100.0;
pub const STEP_REWARD: f64 = -1.0;

/// Where moving in direction `dir` from `s` leads, ignoring slip.
pub fn resolve(map: &GridMap, s: Cell, dir: Move) -> StepOutcome {
    let target = s.shifted(dir);
    if !map.in_bounds(target) || map.walls.contains(&target) {
        StepOutcome {
            next: s,
            reward: STEP_REWARD,
            terminal: false,
            cause: Cause::WallBump,
        }
    } else if map.holes.contains(&target) {
        StepOutcome {
            next: target,
            reward: HOLE_REWARD,
            terminal: true,
            cause: Cause::Hole,
        }
    } else if target == map.goal {
        StepOutcome {
            next: target,
            reward: GOAL_REWARD,
            terminal: true,
            cause: Cause::Goal,
        }
    } else {
        StepOutcome {
            next: target,
            reward: STEP_REWARD,
            terminal: false,
            cause: Cause::Move,
        }
    }
}

fn check_state(map: &GridMap, s: Cell) -> Result<(), GridError> {
    if !map.in_bounds(s) || map.walls.contains(&s) || map.holes.contains(&s) {
        Err(GridError::InvalidState(s))
    } else {
        Ok(())
    }
}

/// Samples the actual direction and applies it.
pub fn step<R: Rng + ?Sized>(
    map: &GridMap,
    slip: &SlipModel,
    s: Cell,
    a: Move,
    rng: &mut R,
) -> Result<StepOutcome, GridError> {
    check_state(map, s)?;
    let u: f64 = rng.gen();
    let [o1, o2] = a.orthogonal();
    let dir = if u < slip.p_intended {
        a
    } else if u < slip.p_intended + slip.p_orthogonal_each {
        o1
    } else {
        o2
    };
    Ok(resolve(map, s, dir))
}

/// Exact outcome distribution of `step`, with coinciding outcomes merged.
pub fn outcome_distribution(
    map: &GridMap,
    slip: &SlipModel,
    s: Cell,
    a: Move,
) -> Result<Vec<(StepOutcome, f64)>, GridError> {
    check_state(map, s)?;
    let [o1, o2] = a.orthogonal();
    let mut out: Vec<(StepOutcome, f64)> = Vec::new();
    for (dir, p) in [
        (a, slip.p_intended),
        (o1, slip.p_orthogonal_each),
        (o2, slip.p_orthogonal_each),
    ] {
        if p == 0.0 {
            continue;
        }
        let o = resolve(map, s, dir);
        match out
            .iter_mut()
            .find(|(x, _)| x.next == o.next && x.cause == o.cause)
        {
            Some((_, q)) => *q += p,
            None => out.push((o, p)),
        }
    }
    Ok(out)
}

/// Action-language text for the grid's expected (slip-free) dynamics,
/// knowing only the given obstacles.
pub fn domain_text(map: &GridMap, known_walls: &BTreeSet<Cell>, known_holes: &BTreeSet<Cell>) -> String {
    let mut out = format!(
        "fluent at : cell(0..{}, 0..{}).\naction up, down, left, right.\n",
        map.width - 1,
        map.height - 1
    );
    for y in 0..map.height {
        for x in 0..map.width {
            let c = Cell::new(x, y);
            // No laws leave the goal or obstacles, so a trajectory cannot
            // pass through them.
            if known_walls.contains(&c) || known_holes.contains(&c) || c == map.goal {
                continue;
            }
            for m in Move::ALL {
                let t = c.shifted(m);
                let t = if map.in_bounds(t) && !known_walls.contains(&t) { t } else { c };
                out.push_str(&format!("{m} causes at={t} if at={c}.\n"));
            }
        }
    }
    for h in known_holes {
        out.push_str(&format!("never at={h}.\n"));
    }
    out.push_str(&format!("initially at={}.\ngoal at={}.\n", map.start, map.goal));
    out
}

pub fn as_action_description(
    map: &GridMap,
    known_walls: &BTreeSet<Cell>,
    known_holes: &BTreeSet<Cell>,
) -> ActionDescription {
    action_lang::parse(&domain_text(map, known_walls, known_holes))
        .expect("generated grid domain parses")
}

/// The description with every obstacle of `map` known.
pub fn full_description(map: &GridMap) -> ActionDescription {
    as_action_description(map, &map.walls, &map.holes)
}

/// Converts a reduced model over action-language states into grid terms.
pub fn to_grid_mdp(mdp: &ReducedMdp<State, String>) -> Result<ReducedMdp<Cell, Move>, GridError> {
    for s in &mdp.states {
        Cell::from_state(s)?;
    }
    for a in &mdp.actions {
        a.parse::<Move>()?;
    }
    Ok(mdp.map(
        |s| Cell::from_state(s).expect("checked above"),
        |a| a.parse().expect("checked above"),
    ))
}

/// Cells the agent can occupy and act in: in bounds, not an obstacle, not
/// the goal.
pub fn open_cells(map: &GridMap) -> Vec<Cell> {
    let mut out = Vec::new();
    for y in 0..map.height {
        for x in 0..map.width {
            let c = Cell::new(x, y);
            if !map.walls.contains(&c) && !map.holes.contains(&c) && c != map.goal {
                out.push(c);
            }
        }
    }
    out
}

/// The unrestricted model: every open cell with all four moves and their
/// expected successors.
pub fn full_support(map: &GridMap) -> ReducedMdp<Cell, Move> {
    let mut mdp = ReducedMdp::empty();
    for c in open_cells(map) {
        for m in Move::ALL {
            mdp.add_transition(c, m, resolve(map, c, m).next);
        }
    }
    mdp.initial_states.insert(map.start);
    mdp.goal_states.insert(map.goal);
    mdp
}

/// An explicit MDP over the open cells with the slip model's probabilities.
/// With `support`, cells it covers offer only its allowed moves; every other
/// cell offers all four.
pub struct GridMdp {
    pub mdp: ExplicitMdp<Move>,
    pub cells: Vec<Cell>,
    pub index: HashMap<Cell, usize>,
}

impl GridMdp {
    pub fn new(map: &GridMap, slip: &SlipModel, support: Option<&ReducedMdp<Cell, Move>>) -> Self {
        let cells = open_cells(map);
        let index: HashMap<Cell, usize> = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let actions = cells
            .iter()
            .map(|&c| {
                let moves = support
                    .and_then(|s| s.available(&c))
                    .unwrap_or_else(|| Move::ALL.to_vec());
                moves
                    .into_iter()
                    .map(|m| ActionModel {
                        action: m,
                        outcomes: outcome_distribution(map, slip, c, m)
                            .expect("open cell")
                            .into_iter()
                            .map(|(o, p)| Outcome {
                                next: if o.terminal { None } else { Some(index[&o.next]) },
                                probability: p,
                                reward: o.reward,
                            })
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        GridMdp {
            mdp: ExplicitMdp { actions },
            cells,
            index,
        }
    }
}

/// Breadth-first distances over the expected transitions, avoiding holes,
/// from `from` to every reachable cell. The goal is absorbing.
pub fn distances(map: &GridMap, from: Cell, reverse: bool) -> HashMap<Cell, usize> {
    let mut dist = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(from, 0);
    queue.push_back(from);
    let open = |c: Cell| map.in_bounds(c) && !map.walls.contains(&c) && !map.holes.contains(&c);
    while let Some(c) = queue.pop_front() {
        let d = dist[&c];
        let neighbours: Vec<Cell> = if reverse {
            // Predecessors: cells p with some move landing on c.
            let mut ps: Vec<Cell> = Move::ALL
                .iter()
                .map(|&m| c.shifted(m))
                .filter(|&p| open(p) && p != map.goal)
                .filter(|&p| Move::ALL.iter().any(|&m| resolve(map, p, m).next == c))
                .collect();
            if c != map.goal && Move::ALL.iter().any(|&m| resolve(map, c, m).next == c) {
                ps.push(c);
            }
            ps
        } else if c == map.goal {
            Vec::new()
        } else {
            Move::ALL
                .iter()
                .map(|&m| resolve(map, c, m))
                .filter(|o| o.cause != Cause::Hole)
                .map(|o| o.next)
                .collect()
        };
        for n in neighbours {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(n) {
                e.insert(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Slack that makes the enumeration include every (cell, move) pair whose
/// expected successor still leads to the goal: the longest detour through
/// such a pair beyond the shortest path. `None` when the goal is unreachable.
pub fn sufficient_slack(map: &GridMap) -> Option<usize> {
    let from_start = distances(map, map.start, false);
    let to_goal = distances(map, map.goal, true);
    let shortest = *from_start.get(&map.goal)?;
    let mut slack = 0;
    for (&c, &ds) in &from_start {
        if c == map.goal {
            continue;
        }
        for m in Move::ALL {
            let o = resolve(map, c, m);
            if o.cause == Cause::Hole {
                continue;
            }
            if let Some(&dg) = to_goal.get(&o.next) {
                slack = slack.max(ds + 1 + dg - shortest);
            }
        }
    }
    Some(slack)
}

/// The environment the agent interacts with; owns the slip generator.
#[derive(Debug, Clone)]
pub struct GridEnv {
    map: GridMap,
    slip: SlipModel,
    rng: ChaCha8Rng,
    pos: Cell,
    in_episode: bool,
}

impl GridEnv {
    pub fn new(map: GridMap, slip: SlipModel, seed: u64) -> Self {
        let pos = map.start;
        GridEnv {
            map,
            slip,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pos,
            in_episode: false,
        }
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn position(&self) -> Cell {
        self.pos
    }

    /// Whether an episode was started and has not ended.
    pub fn in_episode(&self) -> bool {
        self.in_episode
    }

    /// Replaces the map. An in-flight episode is abandoned; the next one
    /// starts on the new map.
    pub fn switch_map(&mut self, new_map: GridMap) -> Result<(), GridError> {
        if (new_map.width, new_map.height) != (self.map.width, self.map.height) {
            return Err(GridError::DimensionMismatch(
                self.map.width,
                self.map.height,
                new_map.width,
                new_map.height,
            ));
        }
        self.map = new_map;
        self.in_episode = false;
        self.pos = self.map.start;
        Ok(())
    }
}

impl Environment for GridEnv {
    type State = Cell;
    type Action = Move;

    fn reset(&mut self) -> Cell {
        self.pos = self.map.start;
        self.in_episode = true;
        self.pos
    }

    fn step(&mut self, action: &Move) -> Transition<Cell> {
        let o = step(&self.map, &self.slip, self.pos, *action, &mut self.rng)
            .expect("the agent only occupies open cells");
        self.pos = o.next;
        let terminal = match o.cause {
            Cause::Goal => Some(Terminal::Goal),
            Cause::Hole => Some(Terminal::Hole),
            _ => None,
        };
        if terminal.is_some() {
            self.in_episode = false;
        }
        Transition {
            next: o.next,
            reward: o.reward,
            terminal,
        }
    }

    fn actions(&self) -> Vec<Move> {
        Move::ALL.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_reduced, enumerate_trajectories, value_iteration};

    fn tiny() -> GridMap {
        GridMap::load(".G\nS.\n").unwrap()
    }

    #[test]
    fn resolve_causes() {
        let m = GridMap::load("..H\n.W.\nS.G\n").unwrap();
        assert_eq!(resolve(&m, Cell::new(0, 0), Move::Left).cause, Cause::WallBump);
        assert_eq!(resolve(&m, Cell::new(1, 0), Move::Up).cause, Cause::WallBump);
        assert_eq!(resolve(&m, Cell::new(1, 0), Move::Right).cause, Cause::Goal);
        assert_eq!(resolve(&m, Cell::new(2, 1), Move::Up).cause, Cause::Hole);
        let o = resolve(&m, Cell::new(0, 0), Move::Up);
        assert_eq!((o.next, o.cause, o.reward), (Cell::new(0, 1), Cause::Move, -1.0));
    }

    #[test]
    fn corner_distribution() {
        let m = GridMap::load(&format!("{}G\n{}S{}\n", ".".repeat(3), "", ".".repeat(3))).unwrap();
        let dist = outcome_distribution(&m, &SlipModel::default(), m.start, Move::Up).unwrap();
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let p_of = |c: Cell| dist.iter().filter(|(o, _)| o.next == c).map(|(_, p)| p).sum::<f64>();
        assert!((p_of(Cell::new(0, 1)) - 0.8).abs() < 1e-12);
        assert!((p_of(Cell::new(1, 0)) - 0.1).abs() < 1e-12);
        assert!((p_of(Cell::new(0, 0)) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn step_rejects_obstacles() {
        assert_eq!(GridMap::load("H.G\n"), Err(GridError::MissingStartOrGoal));
        let m = GridMap::load("HG\nS.\n").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            step(&m, &SlipModel::default(), Cell::new(0, 1), Move::Up, &mut rng),
            Err(GridError::InvalidState(Cell::new(0, 1)))
        );
    }

    #[test]
    fn tiny_domain_has_two_paths() {
        let map = tiny();
        let d = full_description(&map);
        let h = enumerate_trajectories(&d, 10, 0, 100).unwrap();
        assert_eq!((h.shortest, h.len()), (2, 2));
        let mdp = to_grid_mdp(&build_reduced(&h).unwrap()).unwrap();
        assert_eq!(mdp.actions, [Move::Up, Move::Right].into());
    }

    #[test]
    fn known_hole_is_avoided() {
        let map = GridMap::load("...G\n....\n....\nS...\n").unwrap();
        let holes: BTreeSet<Cell> = [Cell::new(1, 1)].into();
        let d = as_action_description(&map, &BTreeSet::new(), &holes);
        let h = enumerate_trajectories(&d, 20, 0, 10_000).unwrap();
        assert_eq!(h.shortest, 6);
        let bad = Cell::new(1, 1).to_state();
        assert!(h.triples().all(|(s, _, n)| *s != bad && *n != bad));
    }

    #[test]
    fn deterministic_two_by_two_value() {
        let map = tiny();
        let g = GridMdp::new(&map, &SlipModel::deterministic(), None);
        let sol = value_iteration(&g.mdp, 0.9, 1e-12).unwrap();
        let v = sol.values[g.index[&map.start]];
        assert!((v - (-1.0 + 0.9 * 100.0)).abs() < 1e-9, "{v}");
    }

    #[test]
    fn switch_requires_same_size() {
        let mut env = GridEnv::new(tiny(), SlipModel::default(), 0);
        assert!(env.switch_map(tiny()).is_ok());
        let other = GridMap::load("..G\nS..\n").unwrap();
        assert_eq!(
            env.switch_map(other),
            Err(GridError::DimensionMismatch(2, 2, 3, 2))
        );
    }

    #[test]
    fn slack_of_open_square() {
        let map = GridMap::load("..G\n...\nS..\n").unwrap();
        // Stepping away from the goal costs the step and the step back.
        assert_eq!(sufficient_slack(&map), Some(2));
    }

    #[test]
    fn cell_text_round_trip() {
        let c: Cell = "(3,-1)".parse().unwrap();
        assert_eq!(c, Cell::new(3, -1));
        assert_eq!(c.to_string(), "(3,-1)");
        assert_eq!(Cell::from_state(&c.to_state()).unwrap(), c);
        assert!("3,1".parse::<Cell>().is_err());
    }
}
