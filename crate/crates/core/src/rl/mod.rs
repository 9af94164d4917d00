//! Tabular Q-Learning and SARSA with ε-greedy exploration, restricted to the
//! actions a reduced MDP allows.

use std::hash::Hash;

use rand::Rng;
use thiserror::Error;

use crate::mdp::{QInit, QTable, ReducedMdp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlError {
    #[error("no available actions")]
    NoAvailableActions,
    #[error("invalid learning parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Terminal {
    Goal,
    Hole,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub next: S,
    pub reward: f64,
    pub terminal: Option<Terminal>,
}

/// An episodic environment. Implementations own whatever randomness their
/// dynamics need.
pub trait Environment {
    type State: Clone + Eq + Ord + Hash;
    type Action: Clone + Eq + Ord + Hash;

    fn reset(&mut self) -> Self::State;
    fn step(&mut self, action: &Self::Action) -> Transition<Self::State>;
    /// Every action of the domain, used where the reduced model has no entry.
    fn actions(&self) -> Vec<Self::Action>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub init: QInit,
}

impl Default for LearningParams {
    fn default() -> Self {
        LearningParams {
            alpha: 0.2,
            gamma: 0.9,
            epsilon: 0.1,
            init: QInit::default(),
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<(), RlError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(RlError::InvalidParams(format!("alpha {} not in (0,1]", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(RlError::InvalidParams(format!("gamma {} not in [0,1)", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(RlError::InvalidParams(format!(
                "epsilon {} not in [0,1]",
                self.epsilon
            )));
        }
        if let QInit::Uniform { lo, hi } = self.init {
            if !(lo <= hi) {
                return Err(RlError::InvalidParams(format!("empty init range [{lo},{hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    QLearning,
    Sarsa,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    pub steps: usize,
    pub return_: f64,
    pub terminal: Terminal,
}

/// Random action with probability `epsilon`, otherwise a greedy one with
/// ties broken uniformly. Missing pairs are added to `q`.
pub fn epsilon_greedy<S, A, R>(
    q: &mut QTable<S, A>,
    s: &S,
    available: &[A],
    epsilon: f64,
    rng: &mut R,
) -> Result<A, RlError>
where
    S: Clone + Eq + Hash,
    A: Clone + Eq + Hash,
    R: Rng + ?Sized,
{
    if available.is_empty() {
        return Err(RlError::NoAvailableActions);
    }
    let values: Vec<f64> = available.iter().map(|a| q.ensure(s, a)).collect();
    if rng.gen::<f64>() < epsilon {
        return Ok(available[rng.gen_range(0..available.len())].clone());
    }
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
    let pick = if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.gen_range(0..ties.len())]
    };
    Ok(available[pick].clone())
}

/// `q(s,a) += α (r + γ max_a' q(s',a') − q(s,a))`; `next` is `None` on a
/// terminal transition. Returns the new value.
pub fn q_learning_update<S, A>(
    q: &mut QTable<S, A>,
    s: &S,
    a: &A,
    reward: f64,
    next: Option<(&S, &[A])>,
    params: &LearningParams,
) -> f64
where
    S: Clone + Eq + Hash,
    A: Clone + Eq + Hash,
{
    let bootstrap = match next {
        Some((n, actions)) if !actions.is_empty() => q.max_value(n, actions),
        _ => 0.0,
    };
    td_update(q, s, a, reward + params.gamma * bootstrap, params.alpha)
}

/// `q(s,a) += α (r + γ q(s',a') − q(s,a))`; `next` is `None` on a terminal
/// transition. Returns the new value.
pub fn sarsa_update<S, A>(
    q: &mut QTable<S, A>,
    s: &S,
    a: &A,
    reward: f64,
    next: Option<(&S, &A)>,
    params: &LearningParams,
) -> f64
where
    S: Clone + Eq + Hash,
    A: Clone + Eq + Hash,
{
    let bootstrap = match next {
        Some((n, an)) => q.ensure(n, an),
        None => 0.0,
    };
    td_update(q, s, a, reward + params.gamma * bootstrap, params.alpha)
}

fn td_update<S, A>(q: &mut QTable<S, A>, s: &S, a: &A, target: f64, alpha: f64) -> f64
where
    S: Clone + Eq + Hash,
    A: Clone + Eq + Hash,
{
    let old = q.ensure(s, a);
    let new = old + alpha * (target - old);
    q.set(s, a, new);
    new
}

/// Actions the agent may take at `s`: the reduced model's, or every domain
/// action when the model has none for `s`.
pub fn available_actions<S: Ord + Clone, A: Ord + Clone>(
    mdp: &ReducedMdp<S, A>,
    s: &S,
    all: &[A],
) -> Vec<A> {
    mdp.available(s).unwrap_or_else(|| all.to_vec())
}

/// Runs one episode from `env.reset()` until a terminal transition or
/// `step_limit` steps, updating `q` after every step.
pub fn run_episode<E, R>(
    env: &mut E,
    q: &mut QTable<E::State, E::Action>,
    mdp: &ReducedMdp<E::State, E::Action>,
    params: &LearningParams,
    algorithm: Algorithm,
    step_limit: usize,
    rng: &mut R,
) -> Result<EpisodeResult, RlError>
where
    E: Environment,
    R: Rng + ?Sized,
{
    let all = env.actions();
    let mut s = env.reset();
    let avail = available_actions(mdp, &s, &all);
    let mut a = epsilon_greedy(q, &s, &avail, params.epsilon, rng)?;
    let mut steps = 0;
    let mut return_ = 0.0;
    while steps < step_limit {
        let t = env.step(&a);
        steps += 1;
        return_ += t.reward;
        if let Some(terminal) = t.terminal {
            match algorithm {
                Algorithm::QLearning => q_learning_update(q, &s, &a, t.reward, None, params),
                Algorithm::Sarsa => sarsa_update(q, &s, &a, t.reward, None, params),
            };
            return Ok(EpisodeResult {
                steps,
                return_,
                terminal,
            });
        }
        let next_avail = available_actions(mdp, &t.next, &all);
        let next_a = match algorithm {
            Algorithm::QLearning => {
                q_learning_update(q, &s, &a, t.reward, Some((&t.next, &next_avail)), params);
                epsilon_greedy(q, &t.next, &next_avail, params.epsilon, rng)?
            }
            Algorithm::Sarsa => {
                let next_a = epsilon_greedy(q, &t.next, &next_avail, params.epsilon, rng)?;
                sarsa_update(q, &s, &a, t.reward, Some((&t.next, &next_a)), params);
                next_a
            }
        };
        s = t.next;
        a = next_a;
    }
    Ok(EpisodeResult {
        steps,
        return_,
        terminal: Terminal::StepLimit,
    })
}

/// Greedy action at `s` among `available`, lowest position on ties, without
/// modifying the table. Unkeyed pairs count as negative infinity.
pub fn greedy_action<S, A>(q: &QTable<S, A>, s: &S, available: &[A]) -> Option<A>
where
    S: Clone + Eq + Hash,
    A: Clone + Eq + Hash,
{
    let mut best: Option<(&A, f64)> = None;
    for a in available {
        if let Some(v) = q.get(s, a) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((a, v));
            }
        }
    }
    best.map(|(a, _)| a.clone())
}
