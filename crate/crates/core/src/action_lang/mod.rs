//! A causal action language with static and fluent dynamic laws, its
//! translation to ground programs for a fixed horizon, and decoding of
//! answer sets back into trajectories.
//!
//! Timed atoms are named `i:c=v` for fluents and `i:a` for actions. The
//! translation interns them first, in a fixed order, so the id of a timed
//! atom is a function of the description and the horizon alone.

mod parse;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::asp::{Atom, Interpretation, Literal, Program};

pub use parse::parse;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: undeclared constant '{name}'")]
    UndeclaredConstant { name: String, line: usize, col: usize },
    #[error("{line}:{col}: value {value} is outside the domain of '{fluent}'")]
    ValueOutsideDomain {
        fluent: String,
        value: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: '{name}' is declared twice")]
    DuplicateConstant { name: String, line: usize, col: usize },
    #[error("{line}:{col}: variable {name} has no range")]
    UnboundVariable { name: String, line: usize, col: usize },
    #[error("horizon must be at least 1, got {0}")]
    HorizonInvalid(usize),
    #[error("malformed model at step {step}: {msg}")]
    MalformedModel { step: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Sym(String),
    Int(i64),
    Tuple(Vec<i64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Sym(s) => f.write_str(s),
            Value::Int(n) => write!(f, "{n}"),
            Value::Tuple(parts) => {
                f.write_str("(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for Value {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
            return inner
                .split(',')
                .map(|p| p.trim().parse::<i64>().map_err(|e| e.to_string()))
                .collect::<Result<_, _>>()
                .map(Value::Tuple);
        }
        if let Ok(n) = s.parse() {
            return Ok(Value::Int(n));
        }
        if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Ok(Value::Sym(s.to_string()));
        }
        Err(format!("invalid value '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FluentConstant {
    pub name: String,
    pub domain: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionConstant {
    pub name: String,
}

/// `c = v` with both sides resolved to indices into the description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FluentAtom {
    pub fluent: usize,
    pub value: usize,
}

impl FluentAtom {
    fn holds(&self, valuation: &[usize]) -> bool {
        valuation[self.fluent] == self.value
    }
}

fn all_hold(conj: &[FluentAtom], valuation: &[usize]) -> bool {
    conj.iter().all(|a| a.holds(valuation))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticLaw {
    pub head: FluentAtom,
    pub condition: Vec<FluentAtom>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Single(FluentAtom),
    /// Exactly one of the alternatives becomes true.
    Choice(Vec<FluentAtom>),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Precondition {
    pub fluents: Vec<FluentAtom>,
    pub actions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FluentDynamicLaw {
    pub head: Effect,
    /// Evaluated at the next step.
    pub condition: Vec<FluentAtom>,
    /// Evaluated at the current step.
    pub precondition: Precondition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionDescription {
    pub fluents: Vec<FluentConstant>,
    pub actions: Vec<ActionConstant>,
    pub static_laws: Vec<StaticLaw>,
    pub dynamic_laws: Vec<FluentDynamicLaw>,
    /// Conjunctions that may hold at no time step.
    pub never: Vec<Vec<FluentAtom>>,
    pub initial: Vec<FluentAtom>,
    pub goal: Vec<FluentAtom>,
}

/// A fluent valuation, one value per fluent in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State(pub Vec<Value>);

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl FromStr for State {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(';').map(str::parse).collect::<Result<_, _>>().map(State)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub state: State,
    pub action: String,
    pub next: State,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Trajectory {
    pub triples: Vec<Triple>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn is_chained(&self) -> bool {
        self.triples.windows(2).all(|w| w[0].next == w[1].state)
    }
}

impl ActionDescription {
    pub fn fluent_index(&self, name: &str) -> Option<usize> {
        self.fluents.iter().position(|f| f.name == name)
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.name == name)
    }

    /// Fluents that head static laws and no dynamic law. They get no free
    /// choice at step 0; their value is always derived.
    pub fn statically_determined(&self) -> Vec<bool> {
        let mut stat = vec![false; self.fluents.len()];
        for law in &self.static_laws {
            stat[law.head.fluent] = true;
        }
        for law in &self.dynamic_laws {
            match &law.head {
                Effect::Single(h) => stat[h.fluent] = false,
                Effect::Choice(alts) => alts.iter().for_each(|h| stat[h.fluent] = false),
            }
        }
        stat
    }

    pub fn state_of(&self, valuation: &[usize]) -> State {
        State(
            valuation
                .iter()
                .enumerate()
                .map(|(f, &v)| self.fluents[f].domain[v].clone())
                .collect(),
        )
    }

    pub fn valuation_of(&self, state: &State) -> Option<Vec<usize>> {
        if state.0.len() != self.fluents.len() {
            return None;
        }
        state
            .0
            .iter()
            .zip(&self.fluents)
            .map(|(v, f)| f.domain.iter().position(|d| d == v))
            .collect()
    }

    fn valuations(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for f in &self.fluents {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..f.domain.len()).map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Least set of fluent atoms derivable in `valuation` from `seeds` and
    /// the static laws, compared with the valuation itself. A valuation is
    /// acceptable when every static law it triggers holds and every value
    /// is derived.
    fn closed_and_supported(&self, valuation: &[usize], seeds: &[FluentAtom]) -> bool {
        for law in &self.static_laws {
            if all_hold(&law.condition, valuation) && !law.head.holds(valuation) {
                return false;
            }
        }
        let mut derived = vec![false; self.fluents.len()];
        for s in seeds {
            if s.holds(valuation) {
                derived[s.fluent] = true;
            }
        }
        loop {
            let mut changed = false;
            for law in &self.static_laws {
                if !derived[law.head.fluent]
                    && law.head.holds(valuation)
                    && law.condition.iter().all(|c| derived[c.fluent])
                {
                    derived[law.head.fluent] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        derived.iter().all(|&d| d)
    }

    /// States consistent with the static laws: every valuation in which the
    /// statically determined fluents take their derived values.
    pub fn states(&self) -> Vec<State> {
        let stat = self.statically_determined();
        self.valuations()
            .into_iter()
            .filter(|v| {
                let seeds: Vec<FluentAtom> = (0..v.len())
                    .filter(|&f| !stat[f])
                    .map(|f| FluentAtom {
                        fluent: f,
                        value: v[f],
                    })
                    .collect();
                self.closed_and_supported(v, &seeds)
            })
            .map(|v| self.state_of(&v))
            .collect()
    }

    pub fn satisfies(&self, state: &State, conj: &[FluentAtom]) -> bool {
        self.valuation_of(state)
            .is_some_and(|v| all_hold(conj, &v))
    }

    pub fn violates_never(&self, state: &State) -> bool {
        match self.valuation_of(state) {
            Some(v) => self.never.iter().any(|c| all_hold(c, &v)),
            None => false,
        }
    }

    /// Next states reachable by executing `action` in `state`, obtained by
    /// simulating the laws directly rather than through the solver.
    pub fn successors(&self, state: &State, action: &str) -> Vec<State> {
        let (Some(now), Some(a)) = (self.valuation_of(state), self.action_index(action)) else {
            return Vec::new();
        };
        let active: Vec<&FluentDynamicLaw> = self
            .dynamic_laws
            .iter()
            .filter(|law| {
                law.precondition.actions.iter().all(|&x| x == a)
                    && all_hold(&law.precondition.fluents, &now)
            })
            .collect();
        let mut out = Vec::new();
        for next in self.valuations() {
            if self.never.iter().any(|c| all_hold(c, &next)) {
                continue;
            }
            let mut seeds = Vec::new();
            let mut ok = true;
            for law in &active {
                if !all_hold(&law.condition, &next) {
                    continue;
                }
                match &law.head {
                    Effect::Single(h) => {
                        ok &= h.holds(&next);
                        seeds.push(*h);
                    }
                    Effect::Choice(alts) => {
                        let chosen: Vec<&FluentAtom> =
                            alts.iter().filter(|h| h.holds(&next)).collect();
                        ok &= chosen.len() == 1;
                        seeds.extend(chosen.into_iter().copied());
                    }
                }
            }
            if ok && self.closed_and_supported(&next, &seeds) {
                out.push(self.state_of(&next));
            }
        }
        out
    }
}

/// Atom-id arithmetic for `translate(d, m)`.
#[derive(Debug, Clone)]
pub struct TimedLayout {
    offsets: Vec<usize>,
    width: usize,
    num_actions: usize,
    horizon: usize,
}

impl TimedLayout {
    pub fn new(d: &ActionDescription, horizon: usize) -> Self {
        let mut offsets = Vec::with_capacity(d.fluents.len());
        let mut width = 0;
        for f in &d.fluents {
            offsets.push(width);
            width += f.domain.len();
        }
        TimedLayout {
            offsets,
            width,
            num_actions: d.actions.len(),
            horizon,
        }
    }

    pub fn fluent(&self, step: usize, atom: FluentAtom) -> Atom {
        Atom((step * self.width + self.offsets[atom.fluent] + atom.value) as u32)
    }

    pub fn action(&self, step: usize, action: usize) -> Atom {
        Atom(((self.horizon + 1) * self.width + step * self.num_actions + action) as u32)
    }

    pub fn num_timed(&self) -> usize {
        (self.horizon + 1) * self.width + self.horizon * self.num_actions
    }

    fn decode(&self, atom: Atom) -> Option<Timed> {
        let id = atom.0 as usize;
        let fluent_atoms = (self.horizon + 1) * self.width;
        if id < fluent_atoms {
            let step = id / self.width;
            let rem = id % self.width;
            let fluent = self.offsets.partition_point(|&o| o <= rem) - 1;
            Some(Timed::Fluent(
                step,
                FluentAtom {
                    fluent,
                    value: rem - self.offsets[fluent],
                },
            ))
        } else if id < self.num_timed() {
            let rel = id - fluent_atoms;
            Some(Timed::Action(rel / self.num_actions, rel % self.num_actions))
        } else {
            None
        }
    }
}

enum Timed {
    Fluent(usize, FluentAtom),
    Action(usize, usize),
}

pub fn translate(d: &ActionDescription, m: usize) -> Result<Program, DomainError> {
    if m < 1 {
        return Err(DomainError::HorizonInvalid(m));
    }
    let layout = TimedLayout::new(d, m);
    let mut p = Program::new();
    for i in 0..=m {
        for (f, c) in d.fluents.iter().enumerate() {
            for (v, value) in c.domain.iter().enumerate() {
                let atom = p.atom(&format!("{i}:{}={value}", c.name));
                debug_assert_eq!(atom, layout.fluent(i, FluentAtom { fluent: f, value: v }));
            }
        }
    }
    for i in 0..m {
        for a in &d.actions {
            p.atom(&format!("{i}:{}", a.name));
        }
    }
    let fa = |i: usize, a: &FluentAtom| Literal::pos(layout.fluent(i, *a));

    for i in 0..=m {
        for law in &d.static_laws {
            let body = law.condition.iter().map(|c| fa(i, c)).collect();
            p.add_rule(layout.fluent(i, law.head), body);
        }
    }
    for i in 0..m {
        for law in &d.dynamic_laws {
            let mut body: Vec<Literal> = law.condition.iter().map(|c| fa(i + 1, c)).collect();
            body.extend(law.precondition.fluents.iter().map(|c| fa(i, c)));
            body.extend(
                law.precondition
                    .actions
                    .iter()
                    .map(|&a| Literal::pos(layout.action(i, a))),
            );
            match &law.head {
                Effect::Single(h) => p.add_rule(layout.fluent(i + 1, *h), body),
                Effect::Choice(alts) => {
                    let cands = alts.iter().map(|h| layout.fluent(i + 1, *h)).collect();
                    p.add_choice(1, 1, cands, body);
                }
            }
        }
    }
    let stat = d.statically_determined();
    for (f, c) in d.fluents.iter().enumerate() {
        if stat[f] {
            continue;
        }
        for v in 0..c.domain.len() {
            p.add_choice(0, 1, vec![layout.fluent(0, FluentAtom { fluent: f, value: v })], vec![]);
        }
    }
    for i in 0..=m {
        for (f, c) in d.fluents.iter().enumerate() {
            let atoms: Vec<Atom> = (0..c.domain.len())
                .map(|v| layout.fluent(i, FluentAtom { fluent: f, value: v }))
                .collect();
            p.add_cardinality_constraint(1, 1, &atoms, &[]);
        }
        for conj in &d.never {
            p.add_constraint(conj.iter().map(|c| fa(i, c)).collect());
        }
    }
    if !d.actions.is_empty() {
        for i in 0..m {
            let acts = (0..d.actions.len()).map(|a| layout.action(i, a)).collect();
            p.add_choice(1, 1, acts, vec![]);
        }
    }
    for c in &d.initial {
        p.add_constraint(vec![Literal::neg(layout.fluent(0, *c))]);
    }
    for c in &d.goal {
        p.add_constraint(vec![Literal::neg(layout.fluent(m, *c))]);
    }
    Ok(p)
}

fn decode_steps(
    model: &Interpretation,
    d: &ActionDescription,
    m: usize,
) -> Result<(Vec<Vec<usize>>, Vec<usize>), DomainError> {
    let layout = TimedLayout::new(d, m);
    let none = usize::MAX;
    let mut vals = vec![vec![none; d.fluents.len()]; m + 1];
    let mut acts = vec![none; m];
    for atom in model.iter() {
        match layout.decode(atom) {
            Some(Timed::Fluent(step, fa)) => {
                if vals[step][fa.fluent] != none {
                    return Err(DomainError::MalformedModel {
                        step,
                        msg: format!("'{}' has two values", d.fluents[fa.fluent].name),
                    });
                }
                vals[step][fa.fluent] = fa.value;
            }
            Some(Timed::Action(step, a)) => {
                if acts[step] != none {
                    return Err(DomainError::MalformedModel {
                        step,
                        msg: "more than one action".into(),
                    });
                }
                acts[step] = a;
            }
            None => {}
        }
    }
    for (step, v) in vals.iter().enumerate() {
        if let Some(f) = v.iter().position(|&x| x == none) {
            return Err(DomainError::MalformedModel {
                step,
                msg: format!("'{}' has no value", d.fluents[f].name),
            });
        }
    }
    if let Some(step) = acts.iter().position(|&a| a == none) {
        return Err(DomainError::MalformedModel {
            step,
            msg: "no action".into(),
        });
    }
    Ok((vals, acts))
}

/// Reads the trajectory encoded by an answer set of `translate(d, m)`.
pub fn extract_trajectory(
    model: &Interpretation,
    d: &ActionDescription,
    m: usize,
) -> Result<Trajectory, DomainError> {
    let (vals, acts) = decode_steps(model, d, m)?;
    let states: Vec<State> = vals.iter().map(|v| d.state_of(v)).collect();
    let triples = (0..m)
        .map(|i| Triple {
            state: states[i].clone(),
            action: d.actions[acts[i]].name.clone(),
            next: states[i + 1].clone(),
        })
        .collect();
    Ok(Trajectory { triples })
}

/// Like [`extract_trajectory`] but yields valuation indices and action
/// indices, avoiding per-step allocation of values.
pub fn extract_indices(
    model: &Interpretation,
    d: &ActionDescription,
    m: usize,
) -> Result<(Vec<Vec<usize>>, Vec<usize>), DomainError> {
    decode_steps(model, d, m)
}
