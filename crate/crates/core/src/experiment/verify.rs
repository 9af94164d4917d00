use std::collections::{BTreeSet, HashSet};

use rand::Rng;

use crate::gridworld::{resolve, sufficient_slack, Cell, GridMap, GridMdp, Move, SlipModel};
use crate::mdp::{value_iteration, MdpError};

use super::{asp_model, Slack};

/// A random map of side 2..=`max_side` with walls and holes at density
/// `obstacle_p` each. The goal may be unreachable.
pub fn random_map<R: Rng + ?Sized>(rng: &mut R, max_side: i32, obstacle_p: f64) -> GridMap {
    let width = rng.gen_range(2..=max_side);
    let height = rng.gen_range(2..=max_side);
    let cells: Vec<Cell> = (0..height)
        .flat_map(|y| (0..width).map(move |x| Cell::new(x, y)))
        .collect();
    let start = cells[rng.gen_range(0..cells.len())];
    let goal = loop {
        let g = cells[rng.gen_range(0..cells.len())];
        if g != start {
            break g;
        }
    };
    let mut walls = BTreeSet::new();
    let mut holes = BTreeSet::new();
    for &c in &cells {
        if c == start || c == goal {
            continue;
        }
        let r: f64 = rng.gen();
        if r < obstacle_p {
            walls.insert(c);
        } else if r < 2.0 * obstacle_p {
            holes.insert(c);
        }
    }
    GridMap::new(width, height, walls, holes, start, goal).expect("generated map is valid")
}

#[derive(Debug, Clone)]
pub struct VerifyCase {
    pub map: GridMap,
    pub slack: usize,
    pub pairs: usize,
    pub v_full: f64,
    pub v_reduced: f64,
    /// Cells on the greedy path whose optimal move the reduced model lacks.
    pub missing: Vec<(Cell, Move)>,
}

impl VerifyCase {
    pub fn passed(&self, tolerance: f64) -> bool {
        (self.v_full - self.v_reduced).abs() <= tolerance && self.missing.is_empty()
    }
}

/// Solves `map` exactly with and without the reduction, enumerating with
/// enough slack to cover every useful pair. `None` when the goal is
/// unreachable.
pub fn verify_map(
    map: &GridMap,
    slip: &SlipModel,
    gamma: f64,
    max_models: usize,
) -> Result<Option<VerifyCase>, MdpError> {
    let Some(slack) = sufficient_slack(map) else {
        return Ok(None);
    };
    let reduced = match asp_model(map, Slack::Fixed(slack), 256, max_models) {
        Ok(m) => m,
        Err(MdpError::NoFeasiblePolicy { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let full = GridMdp::new(map, slip, None);
    let restricted = GridMdp::new(map, slip, Some(&reduced));
    let sf = value_iteration(&full.mdp, gamma, 1e-10)?;
    let sr = value_iteration(&restricted.mdp, gamma, 1e-10)?;
    let start = full.index[&map.start];

    // Follow the full optimum along intended moves from the start.
    let mut missing = Vec::new();
    let mut seen = HashSet::new();
    let mut c = map.start;
    while let Some(&i) = full.index.get(&c) {
        if !seen.insert(c) {
            break;
        }
        let Some(a) = sf.policy[i] else { break };
        let m = full.mdp.actions[i][a].action;
        if reduced.available(&c).is_some() && !reduced.is_allowed(&c, &m) {
            // A tied alternative in the reduced model is as good.
            let q = full.mdp.action_values(&sf.values, i, gamma);
            let best = q[a];
            let tied = full.mdp.actions[i]
                .iter()
                .zip(&q)
                .any(|(am, &v)| reduced.is_allowed(&c, &am.action) && v >= best - 1e-6);
            if !tied {
                missing.push((c, m));
            }
        }
        let o = resolve(map, c, m);
        if o.terminal {
            break;
        }
        c = o.next;
    }
    Ok(Some(VerifyCase {
        map: map.clone(),
        slack,
        pairs: reduced.num_pairs(),
        v_full: sf.values[start],
        v_reduced: sr.values[start],
        missing,
    }))
}

/// Checks the reduction on `cases` random maps with a reachable goal.
pub fn verify_reduction<R: Rng + ?Sized>(
    rng: &mut R,
    cases: usize,
    max_side: i32,
    slip: &SlipModel,
    gamma: f64,
) -> Result<Vec<VerifyCase>, MdpError> {
    let mut out = Vec::with_capacity(cases);
    while out.len() < cases {
        let map = random_map(rng, max_side, 0.15);
        if let Some(case) = verify_map(&map, slip, gamma, 1_000_000)? {
            out.push(case);
        }
    }
    Ok(out)
}
