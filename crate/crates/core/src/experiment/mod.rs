//! The comparison harness: sessions of the four learners over a map change,
//! per-episode metrics, summaries, and the reduction check on small maps.

mod verify;

use std::fmt;
use std::io;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::gridworld::{
    as_action_description, full_support, to_grid_mdp, Cell, GridEnv, GridError, GridMap, Move,
    SlipModel,
};
use crate::mdp::{
    build_reduced, enumerate_horizons, merge_q, shortest_horizon, MdpError, QTable, ReducedMdp,
};
use crate::rl::{run_episode, Algorithm, LearningParams, RlError};

pub use verify::{random_map, verify_reduction, VerifyCase};

pub const MAP1: &str = include_str!("../../maps/map1.txt");
pub const MAP2: &str = include_str!("../../maps/map2.txt");
pub const MAP3: &str = include_str!("../../maps/map3.txt");
pub const MAP4: &str = include_str!("../../maps/map4.txt");

/// Episodes on each side of the change that the summary averages over.
pub const WINDOW: usize = 100;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("both tables are empty")]
    EmptyTables,
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgoKind {
    Q,
    Sarsa,
    AspQ,
    AspSarsa,
}

impl AlgoKind {
    pub const ALL: [AlgoKind; 4] = [AlgoKind::Q, AlgoKind::Sarsa, AlgoKind::AspQ, AlgoKind::AspSarsa];

    pub fn name(self) -> &'static str {
        match self {
            AlgoKind::Q => "q",
            AlgoKind::Sarsa => "sarsa",
            AlgoKind::AspQ => "asp_q",
            AlgoKind::AspSarsa => "asp_sarsa",
        }
    }

    pub fn algorithm(self) -> Algorithm {
        match self {
            AlgoKind::Q | AlgoKind::AspQ => Algorithm::QLearning,
            AlgoKind::Sarsa | AlgoKind::AspSarsa => Algorithm::Sarsa,
        }
    }

    pub fn uses_asp(self) -> bool {
        matches!(self, AlgoKind::AspQ | AlgoKind::AspSarsa)
    }
}

impl fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgoKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlgoKind::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| ExperimentError::Config(format!("unknown algorithm '{s}'")))
    }
}

/// How far past the shortest horizon trajectories are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slack {
    Fixed(usize),
    /// A multiple of the shortest horizon.
    TimesShortest(usize),
}

impl Slack {
    pub fn resolve(self, shortest: usize) -> usize {
        match self {
            Slack::Fixed(n) => n,
            Slack::TimesShortest(k) => k * shortest,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Label written to the `situation` column.
    pub situation: String,
    pub map_before: GridMap,
    pub map_after: GridMap,
    pub algorithms: Vec<AlgoKind>,
    pub episodes: usize,
    pub change_at: usize,
    pub sessions: usize,
    pub seed: u64,
    pub params: LearningParams,
    pub slip: SlipModel,
    pub slack: Slack,
    pub max_horizon: usize,
    pub max_models: usize,
    pub step_limit: usize,
    pub jobs: usize,
}

impl ExperimentConfig {
    /// Map 1 followed by map 2, 3 or 4 with default settings.
    pub fn situation(n: u8) -> Result<Self, ExperimentError> {
        let after = match n {
            1 => MAP2,
            2 => MAP3,
            3 => MAP4,
            _ => return Err(ExperimentError::Config(format!("no situation {n}"))),
        };
        Ok(ExperimentConfig::custom(
            n.to_string(),
            GridMap::load(MAP1)?,
            GridMap::load(after)?,
        ))
    }

    pub fn custom(label: String, map_before: GridMap, map_after: GridMap) -> Self {
        ExperimentConfig {
            situation: label,
            map_before,
            map_after,
            algorithms: AlgoKind::ALL.to_vec(),
            episodes: 10_000,
            change_at: 5_000,
            sessions: 30,
            seed: 0,
            params: LearningParams::default(),
            slip: SlipModel::default(),
            slack: Slack::TimesShortest(2),
            max_horizon: 64,
            max_models: 100_000,
            step_limit: 2_000,
            jobs: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if !(1 <= self.change_at && self.change_at < self.episodes) {
            return bad(format!(
                "change-at {} must be in 1..{}",
                self.change_at, self.episodes
            ));
        }
        if self.sessions == 0 {
            return bad("sessions must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected".into());
        }
        if self.step_limit == 0 || self.max_horizon == 0 || self.max_models == 0 {
            return bad("step limit, max horizon and max models must be positive".into());
        }
        if (self.map_before.width, self.map_before.height)
            != (self.map_after.width, self.map_after.height)
        {
            return Err(GridError::DimensionMismatch(
                self.map_before.width,
                self.map_before.height,
                self.map_after.width,
                self.map_after.height,
            )
            .into());
        }
        self.params.validate()?;
        Ok(())
    }

    fn phases(&self) -> [(&GridMap, Range<usize>); 2] {
        [
            (&self.map_before, 0..self.change_at),
            (&self.map_after, self.change_at..self.episodes),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub session: usize,
    pub episode: usize,
    pub algorithm: AlgoKind,
    pub situation: String,
    pub steps: usize,
    pub return_: f64,
    pub rmsd: f64,
}

pub const CSV_HEADER: [&str; 7] = [
    "session",
    "episode",
    "algorithm",
    "situation",
    "steps",
    "return",
    "rmsd",
];

/// Root-mean-square difference over the union of keys. A key missing from
/// one table reads as the initial value it has in the other.
pub fn rmsd<S, A>(q_t: &QTable<S, A>, q_prev: &QTable<S, A>) -> Result<f64, ExperimentError>
where
    S: Clone + Eq + std::hash::Hash,
    A: Clone + Eq + std::hash::Hash,
{
    let mut sum = 0.0;
    let mut n = 0usize;
    for (s, a, v) in q_t.iter() {
        let prev = q_prev
            .get(s, a)
            .unwrap_or_else(|| q_t.initial(s, a).expect("key of q_t"));
        sum += (v - prev).powi(2);
        n += 1;
    }
    for (s, a, v) in q_prev.iter() {
        if !q_t.contains(s, a) {
            sum += (q_prev.initial(s, a).expect("key of q_prev") - v).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(ExperimentError::EmptyTables);
    }
    Ok((sum / n as f64).sqrt())
}

/// Independent generator seed for one stream of one session.
pub fn sub_seed(session_seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(session_seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const ENV_STREAM: u64 = 1;
const AGENT_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;

/// The reduced model for a map whose obstacles are all known.
pub fn asp_model(
    map: &GridMap,
    slack: Slack,
    max_horizon: usize,
    max_models: usize,
) -> Result<ReducedMdp<Cell, Move>, MdpError> {
    let d = as_action_description(map, &map.walls, &map.holes);
    let shortest = shortest_horizon(&d, max_horizon)?;
    let last = (shortest + slack.resolve(shortest)).min(max_horizon);
    let h = enumerate_horizons(&d, shortest, last, max_models)?;
    Ok(to_grid_mdp(&build_reduced(&h)?).expect("grid domain states are cells"))
}

/// Models shared by all sessions of an experiment.
pub struct Prepared {
    /// Per phase; `None` when the phase has no feasible policy.
    pub asp: [Option<ReducedMdp<Cell, Move>>; 2],
    pub full: [ReducedMdp<Cell, Move>; 2],
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    let needs_asp = config.algorithms.iter().any(|a| a.uses_asp());
    let model = |map: &GridMap| -> Result<Option<ReducedMdp<Cell, Move>>, ExperimentError> {
        if !needs_asp {
            return Ok(None);
        }
        match asp_model(map, config.slack, config.max_horizon, config.max_models) {
            Ok(m) => Ok(Some(m)),
            Err(MdpError::NoFeasiblePolicy { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    };
    let before = model(&config.map_before)?;
    let after = if config.map_after == config.map_before {
        before.clone()
    } else {
        model(&config.map_after)?
    };
    Ok(Prepared {
        asp: [before, after],
        full: [full_support(&config.map_before), full_support(&config.map_after)],
    })
}

pub struct SessionOutput {
    pub rows: Vec<MetricsRow>,
    pub q: QTable<Cell, Move>,
    /// Some phase had no feasible policy.
    pub infeasible: bool,
}

pub fn run_session(
    config: &ExperimentConfig,
    prepared: &Prepared,
    algo: AlgoKind,
    session: usize,
) -> Result<SessionOutput, ExperimentError> {
    let base = config.seed.wrapping_add(session as u64);
    let mut env = GridEnv::new(config.map_before.clone(), config.slip, sub_seed(base, ENV_STREAM));
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(base, AGENT_STREAM));
    let mut q = QTable::new(config.params.init, sub_seed(base, INIT_STREAM));
    let mut rows = Vec::with_capacity(config.episodes);
    let mut infeasible = false;
    for (phase, (map, episodes)) in config.phases().into_iter().enumerate() {
        if phase == 1 {
            env.switch_map(map.clone())?;
        }
        let support = if algo.uses_asp() {
            match &prepared.asp[phase] {
                Some(m) => {
                    q = merge_q(q, m, config.params.init);
                    m
                }
                None => {
                    infeasible = true;
                    rows.push(MetricsRow {
                        session,
                        episode: episodes.start,
                        algorithm: algo,
                        situation: config.situation.clone(),
                        steps: 0,
                        return_: 0.0,
                        rmsd: f64::NAN,
                    });
                    continue;
                }
            }
        } else {
            &prepared.full[phase]
        };
        for episode in episodes {
            let prev = q.clone();
            let r = run_episode(
                &mut env,
                &mut q,
                support,
                &config.params,
                algo.algorithm(),
                config.step_limit,
                &mut rng,
            )?;
            rows.push(MetricsRow {
                session,
                episode,
                algorithm: algo,
                situation: config.situation.clone(),
                steps: r.steps,
                return_: r.return_,
                rmsd: rmsd(&q, &prev)?,
            });
        }
    }
    Ok(SessionOutput {
        rows,
        q,
        infeasible,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub episodes: usize,
    pub mean_steps: f64,
    pub mean_return: f64,
    pub sd_return: f64,
}

/// Statistics over the rows of `algo` whose episode lies in `window`.
pub fn window_stats(rows: &[MetricsRow], algo: AlgoKind, window: Range<usize>) -> WindowStats {
    let picked: Vec<&MetricsRow> = rows
        .iter()
        .filter(|r| r.algorithm == algo && window.contains(&r.episode) && r.rmsd.is_finite())
        .collect();
    let n = picked.len() as f64;
    let mean_steps = picked.iter().map(|r| r.steps as f64).sum::<f64>() / n;
    let mean_return = picked.iter().map(|r| r.return_).sum::<f64>() / n;
    let var = picked
        .iter()
        .map(|r| (r.return_ - mean_return).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    WindowStats {
        episodes: picked.len(),
        mean_steps,
        mean_return,
        sd_return: var.sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoSummary {
    pub algorithm: AlgoKind,
    pub before: WindowStats,
    pub after: WindowStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub situation: String,
    pub change_at: usize,
    pub algorithms: Vec<AlgoSummary>,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "situation {}: means over {WINDOW} episodes before and after episode {}",
            self.situation, self.change_at
        )?;
        writeln!(
            f,
            "{:<10} {:>14} {:>14} {:>14} {:>14}",
            "algorithm", "steps before", "return before", "steps after", "return after"
        )?;
        for a in &self.algorithms {
            writeln!(
                f,
                "{:<10} {:>14.2} {:>14.2} {:>14.2} {:>14.2}",
                a.algorithm.name(),
                a.before.mean_steps,
                a.before.mean_return,
                a.after.mean_steps,
                a.after.mean_return
            )?;
        }
        Ok(())
    }
}

pub fn summarize(config: &ExperimentConfig, rows: &[MetricsRow]) -> Summary {
    let c = config.change_at;
    Summary {
        situation: config.situation.clone(),
        change_at: c,
        algorithms: config
            .algorithms
            .iter()
            .map(|&a| AlgoSummary {
                algorithm: a,
                before: window_stats(rows, a, c.saturating_sub(WINDOW)..c),
                after: window_stats(rows, a, c..c + WINDOW),
            })
            .collect(),
    }
}

pub struct ExperimentResult {
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
    pub infeasible: bool,
}

/// Runs every (session, algorithm) pair, on up to `jobs` threads; rows come
/// back ordered by session, then algorithm, then episode.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    config.validate()?;
    run_prepared(config, &prepare(config)?)
}

/// As [`run_experiment`], reusing models from [`prepare`] on the same maps
/// and enumeration settings.
pub fn run_prepared(
    config: &ExperimentConfig,
    prepared: &Prepared,
) -> Result<ExperimentResult, ExperimentError> {
    config.validate()?;
    let tasks: Vec<(usize, AlgoKind)> = (0..config.sessions)
        .flat_map(|s| config.algorithms.iter().map(move |&a| (s, a)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let outputs: Vec<SessionOutput> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, a)| run_session(config, prepared, a, s))
            .collect::<Result<_, _>>()
    })?;
    let infeasible = outputs.iter().any(|o| o.infeasible);
    let rows: Vec<MetricsRow> = outputs.into_iter().flat_map(|o| o.rows).collect();
    let summary = summarize(config, &rows);
    Ok(ExperimentResult {
        rows,
        summary,
        infeasible,
    })
}

pub fn write_csv<W: io::Write>(rows: &[MetricsRow], w: W) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record([
            r.session.to_string(),
            r.episode.to_string(),
            r.algorithm.name().to_string(),
            r.situation.clone(),
            r.steps.to_string(),
            r.return_.to_string(),
            r.rmsd.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[MetricsRow], path: &Path) -> Result<(), ExperimentError> {
    let file = std::fs::File::create(path)?;
    write_csv(rows, io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::QInit;

    fn table(entries: &[(u8, f64)]) -> QTable<u8, u8> {
        let mut q = QTable::new(QInit::Constant(0.0), 0);
        for &(s, v) in entries {
            q.insert(s, 0, v);
        }
        q
    }

    #[test]
    fn rmsd_examples() {
        let a = table(&[(0, 1.0), (1, 2.0)]);
        assert_eq!(rmsd(&a, &a).unwrap(), 0.0);
        assert_eq!(rmsd(&table(&[(0, 0.0)]), &table(&[(0, 2.0)])).unwrap(), 2.0);
        let base: Vec<(u8, f64)> = (0..100).map(|i| (i, 0.0)).collect();
        let mut changed = base.clone();
        changed[37].1 = 0.5;
        let r = rmsd(&table(&changed), &table(&base)).unwrap();
        assert!((r - (0.25f64 / 100.0).sqrt()).abs() < 1e-15);
        assert!(matches!(
            rmsd(&table(&[]), &table(&[])),
            Err(ExperimentError::EmptyTables)
        ));
    }

    #[test]
    fn rmsd_missing_keys_read_as_initial() {
        let mut grown = table(&[(0, 1.0)]);
        grown.insert(1, 0, 4.0);
        grown.set(&1, &0, 6.0);
        let r = rmsd(&grown, &table(&[(0, 1.0)])).unwrap();
        assert!((r - (4.0f64 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn config_checks() {
        let mut c = ExperimentConfig::situation(1).unwrap();
        assert!(c.validate().is_ok());
        c.change_at = c.episodes;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::situation(4).is_err());
        assert_eq!("asp_sarsa".parse::<AlgoKind>().unwrap(), AlgoKind::AspSarsa);
        assert!("dqn".parse::<AlgoKind>().is_err());
    }

    #[test]
    fn sub_seeds_differ_by_stream() {
        assert_ne!(sub_seed(5, 1), sub_seed(5, 2));
        assert_eq!(sub_seed(5, 1), sub_seed(5, 1));
    }
}
