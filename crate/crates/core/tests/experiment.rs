use std::collections::BTreeSet;

use asprl::experiment::{
    asp_model, prepare, run_experiment, run_session, write_csv, AlgoKind, ExperimentConfig,
    MetricsRow, Slack, MAP1, MAP4,
};
use asprl::gridworld::GridMap;

fn mean_rmsd(rows: &[MetricsRow], a: AlgoKind, range: std::ops::Range<usize>) -> f64 {
    let xs: Vec<f64> = rows
        .iter()
        .filter(|r| r.algorithm == a && range.contains(&r.episode))
        .map(|r| r.rmsd)
        .collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn rows_are_complete_and_ordered() {
    let mut c = ExperimentConfig::situation(1).unwrap();
    c.algorithms = vec![AlgoKind::Q, AlgoKind::AspQ];
    c.sessions = 2;
    c.episodes = 100;
    c.change_at = 50;
    c.slack = Slack::Fixed(0);
    let res = run_experiment(&c).unwrap();
    assert_eq!(res.rows.len(), 400);
    assert!(!res.infeasible);
    let mut expected = Vec::new();
    for s in 0..2 {
        for a in [AlgoKind::Q, AlgoKind::AspQ] {
            for e in 0..100 {
                expected.push((s, a, e));
            }
        }
    }
    let got: Vec<_> = res.rows.iter().map(|r| (r.session, r.algorithm, r.episode)).collect();
    assert_eq!(got, expected);
    assert!(res.rows.iter().all(|r| r.situation == "1" && r.rmsd.is_finite()));

    let mut out = Vec::new();
    write_csv(&res.rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next(), Some("session,episode,algorithm,situation,steps,return,rmsd"));
    assert_eq!(text.lines().count(), 401);
}

#[test]
fn change_restricts_the_table_to_the_corridor() {
    let mut c = ExperimentConfig::situation(3).unwrap();
    c.episodes = 400;
    c.change_at = 200;
    c.slack = Slack::Fixed(0);
    c.algorithms = vec![AlgoKind::AspQ];
    let prepared = prepare(&c).unwrap();
    let out = run_session(&c, &prepared, AlgoKind::AspQ, 0).unwrap();
    let corridor = asp_model(&GridMap::load(MAP4).unwrap(), Slack::Fixed(0), 64, 100_000).unwrap();
    let keys: BTreeSet<_> = out.q.keys().cloned().collect();
    let pairs: BTreeSet<_> = corridor.pairs().map(|(s, a)| (*s, *a)).collect();
    // Slip never leaves the corridor, so nothing is added lazily.
    assert_eq!(keys, pairs);
    assert_eq!(pairs.len(), 18);
    // Phase two starts at the change and walks the corridor.
    let after: Vec<_> = out.rows.iter().filter(|r| r.episode >= 200).collect();
    assert_eq!(after.first().unwrap().episode, 200);
    assert!(after.iter().all(|r| r.steps >= 18));
}

#[test]
fn unreachable_goal_reports_infeasible() {
    let before = GridMap::load(MAP1).unwrap();
    let mut text: Vec<Vec<char>> = before.serialize().lines().map(|l| l.chars().collect()).collect();
    // Wall off the goal in the top-right corner.
    text[0][8] = 'W';
    text[1][9] = 'W';
    let after = GridMap::load(
        &text.iter().map(|r| r.iter().collect::<String>() + "\n").collect::<String>(),
    )
    .unwrap();
    let mut c = ExperimentConfig::custom("custom".into(), before, after);
    c.algorithms = vec![AlgoKind::Q, AlgoKind::AspQ];
    c.sessions = 1;
    c.episodes = 60;
    c.change_at = 30;
    c.slack = Slack::Fixed(0);
    c.step_limit = 100;
    let res = run_experiment(&c).unwrap();
    assert!(res.infeasible);
    let asp: Vec<_> = res.rows.iter().filter(|r| r.algorithm == AlgoKind::AspQ).collect();
    assert_eq!(asp.len(), 31);
    let report = asp.last().unwrap();
    assert_eq!((report.episode, report.steps), (30, 0));
    assert!(report.rmsd.is_nan());
    // The baseline keeps running into the step limit.
    assert_eq!(res.rows.iter().filter(|r| r.algorithm == AlgoKind::Q).count(), 60);
}

#[test]
fn rmsd_falls_as_learning_converges() {
    let mut c = ExperimentConfig::situation(1).unwrap();
    c.sessions = 1;
    c.slack = Slack::Fixed(0);
    c.algorithms = vec![AlgoKind::Q, AlgoKind::Sarsa, AlgoKind::AspQ];
    let res = run_experiment(&c).unwrap();
    for a in &c.algorithms {
        for (start, end) in [(0, c.change_at), (c.change_at, c.episodes)] {
            let early = mean_rmsd(&res.rows, *a, start..start + 100);
            let late = mean_rmsd(&res.rows, *a, end - 500..end);
            assert!(late < early, "{a} phase at {start}: {late} vs {early}");
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = ExperimentConfig::situation(2).unwrap();
    c.sessions = 0;
    assert!(run_experiment(&c).is_err());
    let mut c = ExperimentConfig::situation(2).unwrap();
    c.map_after = GridMap::empty(4, 4);
    assert!(c.validate().is_err());
    let mut c = ExperimentConfig::situation(2).unwrap();
    c.params.alpha = 0.0;
    assert!(c.validate().is_err());
}
