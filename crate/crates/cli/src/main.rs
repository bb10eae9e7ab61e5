use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use routine_core::agents::evaluate;
use routine_core::env::EnvId;
use routine_core::harness::{self, checkpoint, AblationSuite, ExperimentConfig, RunOutputs};
use routine_core::Error;

#[derive(Parser)]
#[command(name = "routine", version, about = "Train and analyse routine-space agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write metrics, checkpoints and a summary.
    Train { config: PathBuf },
    /// Evaluate a checkpoint with the deterministic policy.
    Eval {
        checkpoint: PathBuf,
        env: String,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an ablation suite derived from a base config.
    Ablate {
        config: PathBuf,
        /// replan, no_routine_noise, no_action_noise or length_sweep
        #[arg(long)]
        suite: String,
    },
    /// Compare state coverage of uniform actions and uniform routines.
    ExploreHist {
        env: String,
        #[arg(long = "L", default_value_t = 4)]
        max_len: usize,
        /// Episodes per sampler.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to `explore_hist_<env>_L<n>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render learning curves from metrics CSVs as SVG.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure with its exit code: 2 for bad input, 3 for runtime failures.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Display) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_config() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))
}

fn parse_env(s: &str) -> Result<EnvId, Failure> {
    Ok(s.parse::<EnvId>()?)
}

/// Loads a config, applying `ROUTINE_SEED` (one seed or a comma list).
fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::parse(&read_input(path)?)?;
    if let Ok(v) = std::env::var("ROUTINE_SEED") {
        cfg.seeds = v
            .split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Failure::config(format!("ROUTINE_SEED must be a seed or comma-separated seeds, got '{v}'")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(out: &RunOutputs) {
    let s = &out.summary_data;
    println!(
        "{}: {} on {}, last {} epochs: return {:.2} +- {:.2}, policy queries {:.1} +- {:.1}",
        s.name, s.algorithm, s.env, s.last_epochs, s.mean_return, s.std_return, s.mean_policy_queries, s.std_policy_queries
    );
    for p in &out.csvs {
        println!("  {}", p.display());
    }
    println!("  {}", out.summary.display());
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { config } => {
            let cfg = load_config(&config)?;
            report(&harness::run(&cfg)?);
        }
        Command::Eval {
            checkpoint: path,
            env,
            episodes,
            seed,
        } => {
            let env = parse_env(&env)?;
            let text = read_input(&path)?;
            let mut agent = checkpoint::from_text(&text, &env.make().spec())?;
            let r = evaluate(&mut agent, env, episodes, seed)?;
            for (i, (ret, q)) in r.returns.iter().zip(&r.policy_queries).enumerate() {
                println!("episode {i}: return {ret:.3}, policy queries {q}");
            }
            println!(
                "mean return {:.3} +- {:.3}, mean policy queries {:.2}, mean routine length {:.3}",
                r.mean_return, r.std_return, r.mean_policy_queries, r.mean_routine_length
            );
            let hist: Vec<String> = r.length_histogram.iter().map(usize::to_string).collect();
            println!("routine lengths 1..{}: {}", r.length_histogram.len(), hist.join(" "));
        }
        Command::Ablate { config, suite } => {
            let cfg = load_config(&config)?;
            let suite: AblationSuite = suite.parse()?;
            for out in harness::ablate(&cfg, suite)? {
                report(&out);
            }
        }
        Command::ExploreHist {
            env,
            max_len,
            samples,
            bins,
            seed,
            out,
        } => {
            let env = parse_env(&env)?;
            let h = harness::explore_hist(env, max_len, samples, bins, seed)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("explore_hist_{env}_L{max_len}.csv")));
            harness::write_histogram(&h, &out)?;
            println!(
                "{} states per sampler; non-empty bins: actions {}, routines {} of {bins}",
                h.visited,
                h.action_coverage(),
                h.routine_coverage()
            );
            println!("  {}", out.display());
        }
        Command::Plot { csv, out } => {
            for p in &csv {
                if !p.is_file() {
                    return Err(Failure::config(format!("no such metrics file: {}", p.display())));
                }
            }
            harness::plot::plot(&csv, &out)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("routine: {}", line.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("routine: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
