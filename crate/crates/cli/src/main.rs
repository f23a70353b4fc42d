//! `refnav`: generate worlds, run and score benchmarks, train the
//! navigator-pointer and serve episodes over HTTP.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};

use refnav_core::agents::{run_agent_suite, AgentConfig, AgentFactory, AgentKind, MAX_RANDOM_STEPS};
use refnav_core::env::{load_environment, load_tasks, save_environment, save_tasks};
use refnav_core::episode::{read_trajectories, write_trajectories, EpisodeConfig, Simulator, Trajectory};
use refnav_core::metrics::{aggregate, evaluate_all, render_csv, render_table, MetricsReport};
use refnav_core::navptr::{train, NavPointParams, Phase, TrainConfig};
use refnav_core::par::Exec;
use refnav_core::synth::{generate_synthetic_world, SynthesisParams};
use refnav_core::{Error, Task};
use refnav_server::{AppState, ServerConfig};

#[derive(Debug, Parser)]
#[command(name = "refnav", version, about = "Remote embodied referring-expression benchmark tools")]
struct Cli {
    /// Run batch work on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

/// Environment and task files, given as matching pairs in order.
#[derive(Debug, clap::Args)]
struct Suite {
    #[arg(long = "env", required = true)]
    envs: Vec<PathBuf>,
    #[arg(long = "tasks", required = true)]
    tasks: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AgentArg {
    Random,
    Shortest,
    StopNow,
    NavPoint,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world and its tasks.
    GenWorld {
        #[arg(long)]
        seed: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        viewpoints: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        objects: u64,
        #[arg(long, default_value_t = 12)]
        categories: usize,
        /// Output directory; receives `environment.json` and `tasks.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one or more agents and print a metrics table.
    RunBench {
        #[command(flatten)]
        suite: Suite,
        #[arg(long = "agent", required = true, value_enum)]
        agents: Vec<AgentArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = MAX_RANDOM_STEPS)]
        max_random_steps: usize,
        /// Trained weights for `nav-point`, and the pointer used by
        /// `shortest` when given.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write the table as CSV here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write trajectories as JSON lines (single agent only).
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Score a trajectory file.
    Score {
        #[command(flatten)]
        suite: Suite,
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "submission")]
        name: String,
    },
    /// Train the navigator-pointer; writes `checkpoint.json` and `loss.csv`.
    Train {
        #[command(flatten)]
        suite: Suite,
        /// `key = value` lines.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve episodes over HTTP.
    Serve {
        #[command(flatten)]
        suite: Suite,
        #[arg(long, env = "REFNAV_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// TOML file with `idle_timeout_secs`.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ArgumentConflict, msg).exit()
}

type World = (Arc<Simulator>, Vec<Task>);

fn load_suite(suite: &Suite, feature_dim: usize) -> Result<Vec<World>, Error> {
    if suite.envs.len() != suite.tasks.len() {
        usage_error("--env and --tasks must be given the same number of times");
    }
    let config = EpisodeConfig { feature_dim, ..EpisodeConfig::default() };
    suite
        .envs
        .iter()
        .zip(&suite.tasks)
        .map(|(e, t)| {
            let env = load_environment(e)?;
            let tasks = load_tasks(t, &env)?;
            Ok((Arc::new(Simulator::new(Arc::new(env), config)), tasks))
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn print_rows(rows: &[(String, MetricsReport)], report: Option<&Path>) -> Result<(), Error> {
    let refs: Vec<(String, &MetricsReport)> = rows.iter().map(|(n, r)| (n.clone(), r)).collect();
    print!("{}", render_table(&refs));
    if let Some(path) = report {
        write_file(path, &render_csv(&refs))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.command {
        Command::GenWorld { seed, viewpoints, objects, categories, out } => {
            let mut params = SynthesisParams::new(seed, viewpoints as usize, objects as usize);
            params.n_categories = categories;
            let (env, tasks) = generate_synthetic_world(&params)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            save_environment(&env, out.join("environment.json"))?;
            save_tasks(&tasks, out.join("tasks.json"))?;
            println!("{}: {} viewpoints, {} objects, {} tasks", env.id, env.viewpoints.len(), env.objects.len(), tasks.len());
        }
        Command::RunBench { suite, agents, seed, max_random_steps, checkpoint, report, trajectories } => {
            if trajectories.is_some() && agents.len() != 1 {
                usage_error("--trajectories needs exactly one --agent");
            }
            if agents.contains(&AgentArg::NavPoint) && checkpoint.is_none() {
                usage_error("--agent nav-point needs --checkpoint");
            }
            let feature_dim = match &checkpoint {
                Some(p) => NavPointParams::load(p)?.config.d_visual_base,
                None => EpisodeConfig::default().feature_dim,
            };
            let worlds = load_suite(&suite, feature_dim)?;
            let mut rows = Vec::new();
            for a in agents {
                let kind = match a {
                    AgentArg::Random => AgentKind::Random,
                    AgentArg::Shortest => AgentKind::Shortest { pointer: checkpoint.clone() },
                    AgentArg::StopNow => AgentKind::StopNow,
                    AgentArg::NavPoint => AgentKind::NavPoint { checkpoint: checkpoint.clone().expect("checked") },
                };
                let factory = AgentFactory::new(&AgentConfig { kind, seed, max_random_steps })?;
                let (report, trajs) = run_agent_suite(&worlds, &factory, exec)?;
                if let Some(path) = &trajectories {
                    let f = File::create(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                    write_trajectories(BufWriter::new(f), &trajs).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                }
                rows.push((factory.name.clone(), report));
            }
            print_rows(&rows, report.as_deref())?;
        }
        Command::Score { suite, trajectories, report, name } => {
            let worlds = load_suite(&suite, 0)?;
            let f = File::open(&trajectories).map_err(|e| Error::Io { path: trajectories.clone(), source: e })?;
            let trajs = read_trajectories(BufReader::new(f))?;
            let mut results = Vec::with_capacity(trajs.len());
            for tr in &trajs {
                let (sim, tasks) = worlds
                    .iter()
                    .find(|(s, _)| s.env().id == tr.env_id)
                    .ok_or_else(|| Error::Validation(format!("trajectory for unknown environment `{}`", tr.env_id)))?;
                results.extend(evaluate_all(sim, tasks, std::slice::from_ref::<Trajectory>(tr), Exec::Sequential)?);
            }
            print_rows(&[(name, aggregate(results)?)], report.as_deref())?;
        }
        Command::Train { suite, config, out } => {
            let cfg = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    TrainConfig::from_kv(&text)?
                }
                None => TrainConfig::default(),
            };
            let worlds = load_suite(&suite, cfg.model.d_visual_base)?;
            let outcome = train(&worlds, &cfg, exec)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            outcome.params.save(out.join("checkpoint.json"))?;
            write_file(&out.join("loss.csv"), &outcome.curve.to_csv())?;
            for phase in [Phase::Pointer, Phase::Navigator] {
                if let Some(last) = outcome.curve.phase(phase).last() {
                    println!("{} final loss {last:.6}", phase.as_str());
                }
            }
        }
        Command::Serve { suite, port, host, config } => {
            let cfg = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    ServerConfig::from_toml(&text).map_err(Error::Parse)?
                }
                None => ServerConfig::default(),
            };
            let worlds = load_suite(&suite, EpisodeConfig::default().feature_dim)?;
            let state = Arc::new(AppState::new(worlds, cfg));
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Io { path: PathBuf::from("<runtime>"), source: e })?;
            println!("listening on http://{addr}");
            rt.block_on(refnav_server::serve(addr, state))
                .map_err(|e| Error::Io { path: PathBuf::from(addr.to_string()), source: e })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
