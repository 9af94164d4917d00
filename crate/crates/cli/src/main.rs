use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use asprl::experiment::{
    run_experiment, verify_reduction, write_csv, write_csv_file, AlgoKind, ExperimentConfig, Slack,
};
use asprl::gridworld::GridMap;
use asprl::rl::LearningParams;

/// Compare Q-learning and SARSA with their answer-set-restricted variants on
/// a grid world whose map changes mid-run.
#[derive(Debug, Parser)]
#[command(name = "asprl", version)]
struct Args {
    /// Preset map change: 1 = map1->map2, 2 = map1->map3, 3 = map1->map4.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    situation: Option<u8>,
    /// Map used before the change (custom situation).
    #[arg(long, requires = "map_after", conflicts_with = "situation")]
    map_before: Option<PathBuf>,
    /// Map used from the change onwards (custom situation).
    #[arg(long, requires = "map_before")]
    map_after: Option<PathBuf>,
    /// Comma-separated subset of q,sarsa,asp_q,asp_sarsa.
    #[arg(long, value_delimiter = ',', default_value = "q,sarsa,asp_q,asp_sarsa")]
    algorithms: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    episodes: usize,
    #[arg(long, default_value_t = 5_000)]
    change_at: usize,
    #[arg(long, default_value_t = 30)]
    sessions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Extra horizon beyond the shortest plan. Default: twice the shortest.
    #[arg(long)]
    slack: Option<usize>,
    #[arg(long, default_value_t = 64)]
    max_horizon: usize,
    #[arg(long, default_value_t = 100_000)]
    max_models: usize,
    #[arg(long, default_value_t = 2_000)]
    step_limit: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cross-check the reduction against value iteration on small random maps.
    #[arg(long)]
    verify: bool,
}

fn load_map(path: &PathBuf) -> Result<GridMap> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    GridMap::load(&text).with_context(|| format!("parsing {}", path.display()))
}

fn config(args: &Args) -> Result<ExperimentConfig> {
    let mut c = match (&args.situation, &args.map_before, &args.map_after) {
        (Some(n), None, None) => ExperimentConfig::situation(*n)?,
        (None, Some(b), Some(a)) => {
            ExperimentConfig::custom("custom".into(), load_map(b)?, load_map(a)?)
        }
        (None, None, None) => bail!("give --situation or --map-before and --map-after"),
        _ => bail!("--situation cannot be combined with custom maps"),
    };
    c.algorithms = args
        .algorithms
        .iter()
        .map(|s| s.parse::<AlgoKind>())
        .collect::<Result<_, _>>()?;
    c.episodes = args.episodes;
    c.change_at = args.change_at;
    c.sessions = args.sessions;
    c.seed = args.seed;
    c.params = LearningParams {
        alpha: args.alpha,
        gamma: args.gamma,
        epsilon: args.epsilon,
        ..LearningParams::default()
    };
    if let Some(n) = args.slack {
        c.slack = Slack::Fixed(n);
    }
    c.max_horizon = args.max_horizon;
    c.max_models = args.max_models;
    c.step_limit = args.step_limit;
    c.jobs = args.jobs;
    c.validate()?;
    Ok(c)
}

fn verify(args: &Args) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let cases = verify_reduction(&mut rng, 25, 4, &Default::default(), args.gamma)?;
    let mut all = true;
    for (i, case) in cases.iter().enumerate() {
        let ok = case.passed(1e-6);
        all &= ok;
        println!(
            "case {i:>2} {}x{} slack {} pairs {}: V {:.6} vs {:.6} {}",
            case.map.width,
            case.map.height,
            case.slack,
            case.pairs,
            case.v_full,
            case.v_reduced,
            if ok { "pass" } else { "FAIL" }
        );
    }
    println!("verify: {}", if all { "pass" } else { "FAIL" });
    Ok(all)
}

fn run(args: &Args) -> Result<ExitCode> {
    if args.verify {
        return Ok(if verify(args)? {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        });
    }
    let c = config(args)?;
    let result = run_experiment(&c)?;
    match &args.out {
        Some(path) => write_csv_file(&result.rows, path)
            .with_context(|| format!("writing {}", path.display()))?,
        None => write_csv(&result.rows, std::io::stdout().lock())?,
    }
    // Keep standard output clean for the CSV when no file is given.
    if args.out.is_some() {
        print!("{}", result.summary);
    } else {
        eprint!("{}", result.summary);
    }
    if result.infeasible {
        eprintln!("no feasible policy for at least one phase");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // Usage errors exit with 1; 2 is reserved for infeasible phases.
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
