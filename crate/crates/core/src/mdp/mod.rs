//! From answer sets to a reduced MDP: trajectory enumeration, the reduced
//! state/action/transition sets, Q-table transfer between models, and an
//! exact solver for checking the reduction.

mod qtable;
mod vi;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

use crate::action_lang::{
    extract_indices, translate, ActionDescription, DomainError, State, Trajectory, Triple,
};
use crate::asp::{solve, AspError};

pub use qtable::{QInit, QTable};
pub use vi::{evaluate_policy, value_iteration, ActionModel, ExplicitMdp, Outcome, Solution};

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("no feasible policy within horizon {max_horizon}")]
    NoFeasiblePolicy { max_horizon: usize },
    #[error("empty trajectory set")]
    EmptyTrajectorySet,
    #[error("probabilities of action {action} in state {state} sum to {sum}")]
    BadDistribution { state: usize, action: usize, sum: f64 },
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Asp(#[from] AspError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Trajectories stored with states and actions interned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectorySet {
    states: Vec<State>,
    actions: Vec<String>,
    paths: Vec<Vec<[u32; 3]>>,
    /// Shortest horizon with a trajectory.
    pub shortest: usize,
    /// Longest horizon that was enumerated.
    pub horizon_used: usize,
    /// The model cap cut the enumeration short.
    pub capped: bool,
}

impl TrajectorySet {
    pub fn from_trajectories(trajectories: &[Trajectory]) -> Self {
        let mut set = TrajectorySet {
            states: Vec::new(),
            actions: Vec::new(),
            paths: Vec::new(),
            shortest: trajectories.iter().map(Trajectory::len).min().unwrap_or(0),
            horizon_used: trajectories.iter().map(Trajectory::len).max().unwrap_or(0),
            capped: false,
        };
        let mut state_ids: HashMap<State, u32> = HashMap::new();
        let mut action_ids: HashMap<String, u32> = HashMap::new();
        for t in trajectories {
            let mut path = Vec::with_capacity(t.len());
            for tr in &t.triples {
                let mut sid = |s: &State| {
                    *state_ids.entry(s.clone()).or_insert_with(|| {
                        set.states.push(s.clone());
                        (set.states.len() - 1) as u32
                    })
                };
                let (s, n) = (sid(&tr.state), sid(&tr.next));
                let a = *action_ids.entry(tr.action.clone()).or_insert_with(|| {
                    set.actions.push(tr.action.clone());
                    (set.actions.len() - 1) as u32
                });
                path.push([s, a, n]);
            }
            set.paths.push(path);
        }
        set
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn trajectory(&self, i: usize) -> Trajectory {
        Trajectory {
            triples: self.paths[i]
                .iter()
                .map(|&[s, a, n]| Triple {
                    state: self.states[s as usize].clone(),
                    action: self.actions[a as usize].clone(),
                    next: self.states[n as usize].clone(),
                })
                .collect(),
        }
    }

    pub fn trajectories(&self) -> impl Iterator<Item = Trajectory> + '_ {
        (0..self.len()).map(|i| self.trajectory(i))
    }

    /// Every triple of every trajectory, by reference.
    pub fn triples(&self) -> impl Iterator<Item = (&State, &str, &State)> + '_ {
        self.paths.iter().flatten().map(|&[s, a, n]| {
            (
                &self.states[s as usize],
                self.actions[a as usize].as_str(),
                &self.states[n as usize],
            )
        })
    }

    pub fn path_len(&self, i: usize) -> usize {
        self.paths[i].len()
    }
}

/// Searches horizons upward from 1 for the shortest one with an answer set,
/// then collects the trajectories of horizons `m*..=min(m* + slack,
/// max_horizon)`, at most `max_models` in total.
pub fn enumerate_trajectories(
    d: &ActionDescription,
    max_horizon: usize,
    slack: usize,
    max_models: usize,
) -> Result<TrajectorySet, MdpError> {
    let shortest = shortest_horizon(d, max_horizon)?;
    enumerate_horizons(d, shortest, (shortest + slack).min(max_horizon), max_models)
}

/// The least horizon in `1..=max_horizon` whose program has an answer set.
pub fn shortest_horizon(d: &ActionDescription, max_horizon: usize) -> Result<usize, MdpError> {
    if max_horizon < 1 {
        return Err(DomainError::HorizonInvalid(max_horizon).into());
    }
    for m in 1..=max_horizon {
        if !solve(&translate(d, m)?, Some(1))?.is_empty() {
            return Ok(m);
        }
    }
    Err(MdpError::NoFeasiblePolicy { max_horizon })
}

/// Trajectories of horizons `shortest..=last`, at most `max_models`.
pub fn enumerate_horizons(
    d: &ActionDescription,
    shortest: usize,
    last: usize,
    max_models: usize,
) -> Result<TrajectorySet, MdpError> {
    let mut set = TrajectorySet {
        states: Vec::new(),
        actions: d.actions.iter().map(|a| a.name.clone()).collect(),
        paths: Vec::new(),
        shortest,
        horizon_used: shortest,
        capped: false,
    };
    let mut ids: HashMap<Vec<usize>, u32> = HashMap::new();
    for m in shortest..=last {
        let remaining = max_models.saturating_sub(set.paths.len());
        if remaining == 0 {
            set.capped = true;
            break;
        }
        let models = solve(&translate(d, m)?, Some(remaining))?;
        // Hitting the cap exactly is reported as capped.
        if models.len() == remaining {
            set.capped = true;
        }
        for model in &models {
            let (vals, acts) = extract_indices(model, d, m)?;
            let sids: Vec<u32> = vals
                .into_iter()
                .map(|v| {
                    let next = ids.len() as u32;
                    *ids.entry(v).or_insert_with_key(|v| {
                        set.states.push(d.state_of(v));
                        next
                    })
                })
                .collect();
            set.paths.push(
                (0..m)
                    .map(|i| [sids[i], acts[i] as u32, sids[i + 1]])
                    .collect(),
            );
        }
        set.horizon_used = m;
    }
    Ok(set)
}

/// `S̃`, `Ã` and the allowed transitions `T̃` with the successor sets each
/// allowed pair was seen with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedMdp<S: Ord, A: Ord> {
    pub states: BTreeSet<S>,
    pub actions: BTreeSet<A>,
    pub allowed: BTreeMap<S, BTreeMap<A, BTreeSet<S>>>,
    pub initial_states: BTreeSet<S>,
    pub goal_states: BTreeSet<S>,
}

impl<S: Ord + Clone, A: Ord + Clone> ReducedMdp<S, A> {
    pub fn empty() -> Self {
        ReducedMdp {
            states: BTreeSet::new(),
            actions: BTreeSet::new(),
            allowed: BTreeMap::new(),
            initial_states: BTreeSet::new(),
            goal_states: BTreeSet::new(),
        }
    }

    pub fn add_transition(&mut self, s: S, a: A, next: S) {
        self.states.insert(s.clone());
        self.states.insert(next.clone());
        self.actions.insert(a.clone());
        self.allowed
            .entry(s)
            .or_default()
            .entry(a)
            .or_default()
            .insert(next);
    }

    /// Allowed actions at `s`, or `None` when `s` is outside `S̃`'s allowed
    /// domain.
    pub fn available(&self, s: &S) -> Option<Vec<A>> {
        self.allowed
            .get(s)
            .filter(|m| !m.is_empty())
            .map(|m| m.keys().cloned().collect())
    }

    pub fn is_allowed(&self, s: &S, a: &A) -> bool {
        self.allowed.get(s).is_some_and(|m| m.contains_key(a))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&S, &A)> + '_ {
        self.allowed
            .iter()
            .flat_map(|(s, m)| m.keys().map(move |a| (s, a)))
    }

    pub fn num_pairs(&self) -> usize {
        self.allowed.values().map(BTreeMap::len).sum()
    }

    pub fn triples(&self) -> impl Iterator<Item = (&S, &A, &S)> + '_ {
        self.allowed.iter().flat_map(|(s, m)| {
            m.iter()
                .flat_map(move |(a, ns)| ns.iter().map(move |n| (s, a, n)))
        })
    }

    pub fn map<S2: Ord + Clone, A2: Ord + Clone>(
        &self,
        fs: impl Fn(&S) -> S2,
        fa: impl Fn(&A) -> A2,
    ) -> ReducedMdp<S2, A2> {
        let mut out = ReducedMdp::empty();
        out.states = self.states.iter().map(&fs).collect();
        out.actions = self.actions.iter().map(&fa).collect();
        for (s, a, n) in self.triples() {
            out.add_transition(fs(s), fa(a), fs(n));
        }
        out.initial_states = self.initial_states.iter().map(&fs).collect();
        out.goal_states = self.goal_states.iter().map(&fs).collect();
        out
    }
}

const TEXT_HEADER: &str = "reduced-mdp 1";

impl<S, A> ReducedMdp<S, A>
where
    S: Ord + Clone + Display + FromStr,
    A: Ord + Clone + Display + FromStr,
{
    /// Line-oriented dump with sorted sections; fields are tab-separated.
    pub fn to_text(&self) -> String {
        let mut out = format!("{TEXT_HEADER}\n");
        let mut section = |name: &str, items: Vec<String>| {
            out.push_str(&format!("{name} {}\n", items.len()));
            for item in items {
                out.push_str(&item);
                out.push('\n');
            }
        };
        section("states", self.states.iter().map(|s| s.to_string()).collect());
        section("actions", self.actions.iter().map(|a| a.to_string()).collect());
        section(
            "initial",
            self.initial_states.iter().map(|s| s.to_string()).collect(),
        );
        section("goal", self.goal_states.iter().map(|s| s.to_string()).collect());
        section(
            "allowed",
            self.triples()
                .map(|(s, a, n)| format!("{s}\t{a}\t{n}"))
                .collect(),
        );
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MdpError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let bad = |line: usize, msg: &str| MdpError::Format {
            line,
            msg: msg.to_string(),
        };
        match lines.next() {
            Some((_, TEXT_HEADER)) => {}
            _ => return Err(bad(1, "missing header")),
        }
        let mut section = |name: &str| -> Result<Vec<(usize, String)>, MdpError> {
            let (line, head) = lines.next().ok_or_else(|| bad(0, "truncated"))?;
            let count: usize = head
                .strip_prefix(name)
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| bad(line, &format!("expected '{name} <count>'")))?;
            (0..count)
                .map(|_| {
                    lines
                        .next()
                        .map(|(l, s)| (l, s.to_string()))
                        .ok_or_else(|| bad(line, "truncated section"))
                })
                .collect()
        };
        let parse_s = |(line, s): &(usize, String)| {
            s.parse::<S>().map_err(|_| bad(*line, "bad state"))
        };
        let mut mdp = ReducedMdp::empty();
        mdp.states = section("states")?
            .iter()
            .map(parse_s)
            .collect::<Result<_, _>>()?;
        mdp.actions = section("actions")?
            .iter()
            .map(|(line, a)| a.parse::<A>().map_err(|_| bad(*line, "bad action")))
            .collect::<Result<_, _>>()?;
        mdp.initial_states = section("initial")?
            .iter()
            .map(parse_s)
            .collect::<Result<_, _>>()?;
        mdp.goal_states = section("goal")?
            .iter()
            .map(parse_s)
            .collect::<Result<_, _>>()?;
        for (line, row) in section("allowed")? {
            let parts: Vec<&str> = row.split('\t').collect();
            let [s, a, n] = parts[..] else {
                return Err(bad(line, "expected three tab-separated fields"));
            };
            let s = s.parse::<S>().map_err(|_| bad(line, "bad state"))?;
            let a = a.parse::<A>().map_err(|_| bad(line, "bad action"))?;
            let n = n.parse::<S>().map_err(|_| bad(line, "bad state"))?;
            mdp.add_transition(s, a, n);
        }
        Ok(mdp)
    }
}

/// The union of the trajectories' states, actions and triples.
pub fn build_reduced(h: &TrajectorySet) -> Result<ReducedMdp<State, String>, MdpError> {
    if h.is_empty() {
        return Err(MdpError::EmptyTrajectorySet);
    }
    let mut mdp = ReducedMdp::empty();
    for (s, a, n) in h.triples() {
        mdp.add_transition(s.clone(), a.to_string(), n.clone());
    }
    for path in &h.paths {
        if let (Some(first), Some(last)) = (path.first(), path.last()) {
            mdp.initial_states.insert(h.states[first[0] as usize].clone());
            mdp.goal_states.insert(h.states[last[2] as usize].clone());
        }
    }
    Ok(mdp)
}

/// The same model obtained by removal: start from every state, action and
/// successor of the unrestricted description and drop forbidden states,
/// forbidden actions, impossible transitions, and pairs no trajectory uses.
pub fn build_reduced_subtractive(
    h: &TrajectorySet,
    d: &ActionDescription,
) -> Result<ReducedMdp<State, String>, MdpError> {
    if h.is_empty() {
        return Err(MdpError::EmptyTrajectorySet);
    }
    let all_states = d.states();
    let all_actions: Vec<String> = d.actions.iter().map(|a| a.name.clone()).collect();
    let used_states: BTreeSet<&State> = h.triples().flat_map(|(s, _, n)| [s, n]).collect();
    let used_actions: BTreeSet<&str> = h.triples().map(|(_, a, _)| a).collect();
    let used_pairs: BTreeSet<(&State, &str)> = h.triples().map(|(s, a, _)| (s, a)).collect();
    let forbidden_states: BTreeSet<&State> =
        all_states.iter().filter(|s| !used_states.contains(s)).collect();
    let forbidden_actions: BTreeSet<&str> = all_actions
        .iter()
        .map(String::as_str)
        .filter(|a| !used_actions.contains(a))
        .collect();

    let mut mdp = ReducedMdp::empty();
    for s in &all_states {
        for a in &all_actions {
            let successors = d.successors(s, a);
            for n in &all_states {
                let excluded = forbidden_states.contains(s)
                    || forbidden_actions.contains(a.as_str())
                    || forbidden_states.contains(n)
                    || !successors.contains(n)
                    || !used_pairs.contains(&(s, a.as_str()));
                if !excluded {
                    mdp.add_transition(s.clone(), a.clone(), n.clone());
                }
            }
        }
    }
    mdp.initial_states = all_states
        .iter()
        .filter(|s| !forbidden_states.contains(s) && d.satisfies(s, &d.initial))
        .cloned()
        .collect();
    mdp.goal_states = all_states
        .iter()
        .filter(|s| !forbidden_states.contains(s) && d.satisfies(s, &d.goal))
        .cloned()
        .collect();
    Ok(mdp)
}

/// Carries learned values into the table for a new reduced model: pairs of
/// `mdp` already in `old` keep their values, new pairs are initialized, and
/// pairs outside `mdp` are dropped.
pub fn merge_q<S, A>(old: QTable<S, A>, mdp: &ReducedMdp<S, A>, init: QInit) -> QTable<S, A>
where
    S: Ord + Clone + std::hash::Hash,
    A: Ord + Clone + std::hash::Hash,
{
    let kept: HashMap<(S, A), (f64, f64)> = old
        .entry_initial_pairs()
        .map(|(k, v, i)| (k.clone(), (v, i)))
        .collect();
    let mut out = QTable::with_rng(init, old.take_rng());
    for (s, a) in mdp.pairs() {
        match kept.get(&(s.clone(), a.clone())) {
            Some(&(v, i)) => out.insert_entry(s.clone(), a.clone(), v, i),
            None => {
                out.ensure(s, a);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_lang::{parse, Value};

    const GRID2: &str = "fluent at : cell(0..1, 0..1).\n\
        action up, right.\n\
        up causes at=(X,Y+1) if at=(X,Y).\n\
        right causes at=(X+1,Y) if at=(X,Y).\n\
        caused at=(X,1) after at=(X,1), up.\n\
        caused at=(1,Y) after at=(1,Y), right.\n\
        initially at=(0,0).\n\
        goal at=(1,1).";

    fn cell(x: i64, y: i64) -> State {
        State(vec![Value::Tuple(vec![x, y])])
    }

    #[test]
    fn two_by_two_enumeration() {
        let d = parse(GRID2).unwrap();
        let h = enumerate_trajectories(&d, 10, 0, 100).unwrap();
        assert_eq!(h.shortest, 2);
        assert_eq!(h.len(), 2);
        let mdp = build_reduced(&h).unwrap();
        let states: BTreeSet<State> = [cell(0, 0), cell(0, 1), cell(1, 0), cell(1, 1)].into();
        assert_eq!(mdp.states, states);
        assert_eq!(mdp.actions, ["right".to_string(), "up".to_string()].into());
        assert_eq!(mdp.num_pairs(), 4);
        assert_eq!(build_reduced_subtractive(&h, &d).unwrap(), mdp);
    }

    #[test]
    fn cap_limits_models() {
        let d = parse(GRID2).unwrap();
        let h = enumerate_trajectories(&d, 10, 0, 1).unwrap();
        assert_eq!(h.len(), 1);
        let mdp = build_reduced(&h).unwrap();
        assert_eq!(mdp.num_pairs(), 2);
    }

    #[test]
    fn slack_adds_longer_trajectories() {
        let d = parse(GRID2).unwrap();
        let h = enumerate_trajectories(&d, 10, 1, 1000).unwrap();
        assert_eq!(h.horizon_used, 3);
        assert!(h.trajectories().all(|t| t.is_chained()));
        assert!(h.trajectories().any(|t| t.len() == 3));
    }

    #[test]
    fn unreachable_goal() {
        let d = parse(&format!("{GRID2}\nnever at=(1,1).")).unwrap();
        assert!(matches!(
            enumerate_trajectories(&d, 4, 0, 10),
            Err(MdpError::NoFeasiblePolicy { max_horizon: 4 })
        ));
    }

    #[test]
    fn empty_set_is_rejected() {
        let h = TrajectorySet::from_trajectories(&[]);
        assert!(matches!(build_reduced(&h), Err(MdpError::EmptyTrajectorySet)));
    }

    #[test]
    fn merge_keeps_adds_and_drops() {
        let mut mdp: ReducedMdp<u32, &str> = ReducedMdp::empty();
        mdp.add_transition(0, "up", 1);
        mdp.add_transition(1, "up", 2);
        let mut old = QTable::new(QInit::Constant(0.0), 0);
        old.insert(0, "up", 3.5);
        old.insert(5, "up", 2.0);
        let q = merge_q(old, &mdp, QInit::Constant(0.0));
        assert_eq!(q.get(&0, &"up"), Some(3.5));
        assert_eq!(q.get(&1, &"up"), Some(0.0));
        assert_eq!(q.get(&5, &"up"), None);
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn text_round_trip() {
        let d = parse(GRID2).unwrap();
        let mdp = build_reduced(&enumerate_trajectories(&d, 10, 0, 100).unwrap()).unwrap();
        let text = mdp.to_text();
        assert!(text.starts_with("reduced-mdp 1\nstates 4\n(0,0)\n"));
        assert_eq!(ReducedMdp::<State, String>::from_text(&text).unwrap(), mdp);
        assert!(ReducedMdp::<State, String>::from_text("nope").is_err());
    }
}
