use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fscforge::check::{check, mdp_optimize, SolverConfig, Verdict};
use fscforge::fsc::{build_fsc, collect_hidden_states, parse_fsc, serialize_fsc, simulate_rollouts};
use fscforge::model::{gen_grid, gen_maze, gen_navigation, parse_dtmc, parse_pomdp, serialize_pomdp, Pomdp};
use fscforge::network::{insert_qbn, train_bc, Hyperparams, RecurrentPolicy};
use fscforge::num::format_sig;
use fscforge::spec::{parse_spec, Spec};
use fscforge::synth::{induce_dtmc, initial_dataset, run_loop, LoopConfig, LoopReport};
use serde_json::json;

mod dataset;

type CliResult<T = ExitCode> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "fscforge", version, about = "Finite-state controller synthesis for POMDPs")]
struct Cli {
    /// Worker threads for rollout phases (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write a JSON run manifest to this path.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct SolverArgs {
    /// Solve linear systems by Gaussian elimination.
    #[arg(long, conflicts_with = "iterative")]
    exact: bool,
    /// Solve by Gauss-Seidel value iteration.
    #[arg(long)]
    iterative: bool,
}

impl SolverArgs {
    fn config(self) -> SolverConfig {
        if self.exact {
            SolverConfig::exact()
        } else if self.iterative {
            SolverConfig::iterative()
        } else {
            SolverConfig::default()
        }
    }

    fn name(self) -> &'static str {
        if self.exact {
            "exact"
        } else if self.iterative {
            "iterative"
        } else {
            "auto"
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Maze,
    Grid,
    Navigation,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark POMDP.
    Gen {
        kind: Kind,
        size: usize,
        /// Output path (default `<kind><size>.pomdp`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a controller on a POMDP against a specification.
    Check {
        model: PathBuf,
        fsc: PathBuf,
        spec: String,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Evaluate a specification on a DTMC, or on a POMDP with `--fsc`.
    Eval {
        model: PathBuf,
        spec: String,
        #[arg(long)]
        fsc: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run the iterative extraction and refinement loop.
    Loop {
        model: PathBuf,
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial bottleneck width.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        bh: u64,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
        bh_max: u64,
        #[arg(long, default_value_t = 0.5)]
        eta: f64,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        max_iters: u64,
        /// Controller-extraction rollouts per iteration.
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        rollouts: u64,
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
        max_steps: u64,
        #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
        hidden: u64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the best controller here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a policy network by behaviour cloning.
    Train {
        model: PathBuf,
        /// Clone the optimal MDP policy for this specification.
        #[arg(required_unless_present = "data")]
        spec: Option<String>,
        /// Clone sequences from a dataset file instead.
        #[arg(long, conflicts_with = "spec")]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
        hidden: u64,
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
        max_steps: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Insert a quantized bottleneck into a trained network and extract a controller.
    Extract {
        model: PathBuf,
        network: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        bh: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        rollouts: u64,
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
        max_steps: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimise the underlying MDP of a POMDP.
    SolveMdp {
        model: PathBuf,
        spec: String,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn load_pomdp(path: &Path) -> CliResult<Pomdp> {
    parse_pomdp(&read(path)?).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn load_spec(text: &str) -> CliResult<Spec> {
    Ok(parse_spec(text)?)
}

/// `SAT value=…`, `UNSAT value=…` or `value=…` for queries; exit code 0/1.
fn verdict_line(verdict: Verdict, value: f64) -> (String, ExitCode) {
    let v = format_sig(value, 10);
    match verdict {
        Verdict::Sat => (format!("SAT value={v}"), ExitCode::SUCCESS),
        Verdict::Unsat => (format!("UNSAT value={v}"), ExitCode::from(1)),
        Verdict::Value(_) => (format!("value={v}"), ExitCode::SUCCESS),
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

struct Manifest {
    subcommand: &'static str,
    inputs: Vec<String>,
    seed: Option<u64>,
    config: serde_json::Value,
}

fn run(cli: Cli, buf: &mut String) -> CliResult {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let (code, manifest) = match cli.command {
        Command::Gen { kind, size, out } => {
            let (name, p) = match kind {
                Kind::Maze => ("maze", gen_maze(size)?),
                Kind::Grid => ("grid", gen_grid(size)?),
                Kind::Navigation => ("navigation", gen_navigation(size)?),
            };
            let out = out.unwrap_or_else(|| PathBuf::from(format!("{name}{size}.pomdp")));
            write(&out, &serialize_pomdp(&p))?;
            writeln!(buf, "|S|={} |Z|={}", p.num_states(), p.num_observations())?;
            let m = Manifest {
                subcommand: "gen",
                inputs: vec![],
                seed: None,
                config: json!({ "kind": name, "size": size, "out": path_str(&out) }),
            };
            (ExitCode::SUCCESS, m)
        }
        Command::Check { model, fsc, spec, solver } => {
            let p = load_pomdp(&model)?;
            let f = parse_fsc(&read(&fsc)?).map_err(|e| format!("{}: {e}", fsc.display()))?;
            let spec = load_spec(&spec)?;
            let product = induce_dtmc(&p, &f)?;
            let r = check(&product.dtmc, &spec, &solver.config())?;
            let (line, code) = verdict_line(r.verdict, r.value);
            writeln!(buf, "{line}")?;
            let m = Manifest {
                subcommand: "check",
                inputs: vec![path_str(&model), path_str(&fsc)],
                seed: None,
                config: json!({ "spec": spec.to_string(), "solver": solver.name() }),
            };
            (code, m)
        }
        Command::Eval { model, spec, fsc, solver } => {
            let text = read(&model)?;
            let spec = load_spec(&spec)?;
            let is_dtmc = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .find(|l| !l.is_empty())
                == Some("dtmc");
            let chain = match (&fsc, is_dtmc) {
                (None, true) => parse_dtmc(&text).map_err(|e| format!("{}: {e}", model.display()))?,
                (Some(f), false) => {
                    let p = parse_pomdp(&text).map_err(|e| format!("{}: {e}", model.display()))?;
                    let c = parse_fsc(&read(f)?).map_err(|e| format!("{}: {e}", f.display()))?;
                    induce_dtmc(&p, &c)?.dtmc
                }
                (None, false) => return Err("a POMDP needs a controller (--fsc)".into()),
                (Some(_), true) => return Err("--fsc applies to POMDP models only".into()),
            };
            let r = check(&chain, &spec, &solver.config())?;
            let (line, code) = verdict_line(r.verdict, r.value);
            writeln!(buf, "{line} states={}", chain.num_states())?;
            let mut inputs = vec![path_str(&model)];
            inputs.extend(fsc.as_deref().map(path_str));
            let m = Manifest {
                subcommand: "eval",
                inputs,
                seed: None,
                config: json!({ "spec": spec.to_string(), "solver": solver.name() }),
            };
            (code, m)
        }
        Command::Loop {
            model,
            spec,
            seed,
            bh,
            bh_max,
            eta,
            max_iters,
            rollouts,
            max_steps,
            hidden,
            epochs,
            solver,
            out,
        } => {
            let p = load_pomdp(&model)?;
            let spec = load_spec(&spec)?;
            let defaults = LoopConfig::default();
            let cfg = LoopConfig {
                eta,
                bh_init: bh as usize,
                bh_max: bh_max as usize,
                max_iters: max_iters as usize,
                hidden: hidden as usize,
                rollouts: rollouts as usize,
                max_steps: max_steps as usize,
                seed,
                train: Hyperparams { epochs, ..defaults.train.clone() },
                solver: solver.config(),
                ..defaults
            };
            let report = run_loop(&p, &spec, &cfg)?;
            write!(buf, "{}", report.table())?;
            writeln!(buf, "{}", summary(&report))?;
            let fsc = serialize_fsc(&report.best);
            match &out {
                Some(path) => write(path, &fsc)?,
                None => write!(buf, "{fsc}")?,
            }
            let m = Manifest {
                subcommand: "loop",
                inputs: vec![path_str(&model)],
                seed: Some(seed),
                config: json!({
                    "spec": spec.to_string(),
                    "bh": bh,
                    "bh_max": bh_max,
                    "eta": eta,
                    "max_iters": max_iters,
                    "rollouts": rollouts,
                    "max_steps": max_steps,
                    "hidden": hidden,
                    "epochs": epochs,
                    "solver": solver.name(),
                    "out": out.as_deref().map(path_str),
                }),
            };
            (if report.sat { ExitCode::SUCCESS } else { ExitCode::from(1) }, m)
        }
        Command::Train {
            model,
            spec,
            data,
            seed,
            epochs,
            hidden,
            max_steps,
            out,
        } => {
            let p = load_pomdp(&model)?;
            let batch = match (&data, &spec) {
                (Some(path), _) => dataset::parse(&read(path)?, &p).map_err(|e| format!("{}: {e}", path.display()))?,
                (None, Some(s)) => {
                    let cfg = LoopConfig { seed, max_steps: max_steps as usize, ..LoopConfig::default() };
                    initial_dataset(&p, &load_spec(s)?, &cfg)?
                }
                (None, None) => unreachable!("clap requires a spec or a dataset"),
            };
            let net = RecurrentPolicy::new(p.num_observations(), p.num_actions(), hidden as usize, fscforge::seed::derive(seed, "network", 0))?
                .with_action_mask(p.observation_action_masks()?)?;
            let hp = Hyperparams { epochs, seed: fscforge::seed::derive(seed, "train", 1), ..Hyperparams::default() };
            let (net, trace) = train_bc(&net, &batch, &hp)?;
            write(&out, &net.to_checkpoint())?;
            writeln!(buf, 
                "sequences={} loss={}",
                batch.len(),
                trace.last().map_or("-".to_string(), |l| format_sig(*l, 10))
            )?;
            let mut inputs = vec![path_str(&model)];
            inputs.extend(data.as_deref().map(path_str));
            let m = Manifest {
                subcommand: "train",
                inputs,
                seed: Some(seed),
                config: json!({ "spec": spec, "epochs": epochs, "hidden": hidden, "max_steps": max_steps, "out": path_str(&out) }),
            };
            (ExitCode::SUCCESS, m)
        }
        Command::Extract {
            model,
            network,
            bh,
            seed,
            rollouts,
            max_steps,
            out,
        } => {
            let p = load_pomdp(&model)?;
            let net = RecurrentPolicy::from_checkpoint(&read(&network)?).map_err(|e| format!("{}: {e}", network.display()))?;
            let (n, ms) = (rollouts as usize, max_steps as usize);
            let hidden = collect_hidden_states(&p, &net.without_qbn(), n, ms, fscforge::seed::derive(seed, "hidden", 0))?;
            let hp = Hyperparams { seed: fscforge::seed::derive(seed, "qbn", 0), ..Hyperparams::default() };
            let (qnet, mse) = insert_qbn(&net, bh as usize, &hidden, &hp)?;
            let trajs = simulate_rollouts(&p, &qnet, n, ms, fscforge::seed::derive(seed, "extract", 0))?;
            let fsc = build_fsc(&trajs, &qnet, &p)?;
            writeln!(buf, "nodes={} mse={}", fsc.num_nodes(), format_sig(mse, 10))?;
            let text = serialize_fsc(&fsc);
            match &out {
                Some(path) => write(path, &text)?,
                None => write!(buf, "{text}")?,
            }
            let m = Manifest {
                subcommand: "extract",
                inputs: vec![path_str(&model), path_str(&network)],
                seed: Some(seed),
                config: json!({ "bh": bh, "rollouts": rollouts, "max_steps": max_steps, "out": out.as_deref().map(path_str) }),
            };
            (ExitCode::SUCCESS, m)
        }
        Command::SolveMdp { model, spec, solver } => {
            let p = load_pomdp(&model)?;
            let spec = load_spec(&spec)?;
            let sol = mdp_optimize(p.mdp(), &spec, &solver.config())?;
            let value: f64 = p
                .init()
                .iter()
                .map(|&(s, w)| if sol.values[s].is_infinite() { sol.values[s] } else { w * sol.values[s] })
                .sum();
            let verdict = match spec.satisfied_by(value) {
                Some(true) => Verdict::Sat,
                Some(false) => Verdict::Unsat,
                None => Verdict::Value(value),
            };
            let (line, code) = verdict_line(verdict, value);
            writeln!(buf, "{line}")?;
            for s in 0..p.num_states() {
                writeln!(buf, 
                    "{} {} {}",
                    p.state_names()[s],
                    p.action_names()[sol.policy[s]],
                    format_sig(sol.values[s], 10)
                )?;
            }
            let m = Manifest {
                subcommand: "solve-mdp",
                inputs: vec![path_str(&model)],
                seed: None,
                config: json!({ "spec": spec.to_string(), "solver": solver.name() }),
            };
            (code, m)
        }
    };
    if let Some(path) = &cli.manifest {
        write_manifest(path, &manifest)?;
    }
    Ok(code)
}

fn summary(r: &LoopReport) -> String {
    format!(
        "{} value={} nodes={} iter={}",
        if r.sat { "SAT" } else { "UNSAT" },
        format_sig(r.best_value, 10),
        r.best.num_nodes(),
        r.best_iter
    )
}

fn write_manifest(path: &Path, m: &Manifest) -> CliResult<()> {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let doc = json!({
        "subcommand": m.subcommand,
        "inputs": m.inputs,
        "seed": m.seed,
        "config": m.config,
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": timestamp,
    });
    write(path, &(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FSCFORGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let mut buf = String::new();
    let result = run(cli, &mut buf);
    if let Err(e) = std::io::stdout().lock().write_all(buf.as_bytes()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
