//! Exact solution of small explicit MDPs, used as a reference for the
//! learned and reduced models.

use super::MdpError;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// `None` ends the episode after the reward is received.
    pub next: Option<usize>,
    pub probability: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionModel<A> {
    pub action: A,
    pub outcomes: Vec<Outcome>,
}

/// States are `0..actions.len()`; a state without actions is absorbing with
/// value 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitMdp<A> {
    pub actions: Vec<Vec<ActionModel<A>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    /// Index into the state's action list.
    pub policy: Vec<Option<usize>>,
}

const TIE: f64 = 1e-9;

impl<A> ExplicitMdp<A> {
    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    pub fn check(&self) -> Result<(), MdpError> {
        for (s, models) in self.actions.iter().enumerate() {
            for (a, m) in models.iter().enumerate() {
                let sum: f64 = m.outcomes.iter().map(|o| o.probability).sum();
                if (sum - 1.0).abs() > 1e-9 || m.outcomes.iter().any(|o| o.probability < 0.0) {
                    return Err(MdpError::BadDistribution {
                        state: s,
                        action: a,
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    fn q_value(&self, values: &[f64], s: usize, a: usize, gamma: f64) -> f64 {
        self.actions[s][a]
            .outcomes
            .iter()
            .map(|o| o.probability * (o.reward + gamma * o.next.map_or(0.0, |n| values[n])))
            .sum()
    }

    fn greedy(&self, values: &[f64], s: usize, gamma: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for a in 0..self.actions[s].len() {
            let q = self.q_value(values, s, a, gamma);
            if best.is_none_or(|(_, b)| q > b + TIE) {
                best = Some((a, q));
            }
        }
        best
    }

    /// Greedy action values at `s` under `values`.
    pub fn action_values(&self, values: &[f64], s: usize, gamma: f64) -> Vec<f64> {
        (0..self.actions[s].len())
            .map(|a| self.q_value(values, s, a, gamma))
            .collect()
    }
}

/// Gauss-Seidel value iteration until the largest Bellman residual is below
/// `tolerance`. Ties in the greedy policy go to the lowest action index.
pub fn value_iteration<A>(
    mdp: &ExplicitMdp<A>,
    gamma: f64,
    tolerance: f64,
) -> Result<Solution, MdpError> {
    mdp.check()?;
    assert!((0.0..1.0).contains(&gamma), "gamma must be in [0, 1)");
    let n = mdp.num_states();
    let mut values = vec![0.0; n];
    // A sweep residual of r bounds the Bellman residual by r.
    loop {
        let mut residual: f64 = 0.0;
        for s in 0..n {
            if let Some((_, q)) = mdp.greedy(&values, s, gamma) {
                residual = residual.max((q - values[s]).abs());
                values[s] = q;
            }
        }
        if residual < tolerance * (1.0 - gamma) || residual == 0.0 {
            break;
        }
    }
    let policy = (0..n)
        .map(|s| mdp.greedy(&values, s, gamma).map(|(a, _)| a))
        .collect();
    Ok(Solution { values, policy })
}

/// Value of a fixed policy. States whose policy entry is `None` are treated
/// as absorbing.
pub fn evaluate_policy<A>(
    mdp: &ExplicitMdp<A>,
    policy: &[Option<usize>],
    gamma: f64,
    tolerance: f64,
) -> Result<Vec<f64>, MdpError> {
    mdp.check()?;
    let n = mdp.num_states();
    let mut values = vec![0.0; n];
    loop {
        let mut residual: f64 = 0.0;
        for s in 0..n {
            if let Some(a) = policy[s] {
                let q = mdp.q_value(&values, s, a, gamma);
                residual = residual.max((q - values[s]).abs());
                values[s] = q;
            }
        }
        if residual < tolerance * (1.0 - gamma) || residual == 0.0 {
            break;
        }
    }
    Ok(values)
}
