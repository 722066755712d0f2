use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fptrace_core::codec::{read_codebook, write_codebook, Codebook};
use fptrace_core::collusion::{build_attack, run_attack, AttackConfig};
use fptrace_core::decoders::{decoder_registry, DecodeConfig};
use fptrace_core::rng::stream;
use fptrace_core::{Error, Result, Sequence};
use fptrace_games::{
    memoryless_exponent_variant, psp_sweep, solve_capacity, solve_capacity_sequence, sweep_csv, GameProblem, InputLaw,
    PspOptions, SweepRow, Target,
};
use fptrace_simlab::{draw_codebook, estimate, CodeSpec, ExperimentConfig};
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "fptrace", version, about = "Collusion-resistant fingerprinting toolkit")]
struct Cli {
    /// Master seed; overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CodebookArgs {
    /// Directory holding `<stem>.header.json`, `<stem>.jsonl`, `<stem>.key.json`.
    #[arg(long)]
    codebook: PathBuf,
    #[arg(long, default_value = "codebook")]
    stem: String,
}

impl CodebookArgs {
    fn load(&self) -> Result<Codebook> {
        let p = |suffix: &str| self.codebook.join(format!("{}.{suffix}", self.stem));
        read_codebook(&p("header.json"), &p("jsonl"), &p("key.json"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a codebook (config: code settings plus `n`).
    Gen,
    /// Forge a pirated copy from a coalition (config: attack settings).
    Attack {
        #[command(flatten)]
        cb: CodebookArgs,
        /// Comma-separated colluder indices.
        #[arg(long, value_delimiter = ',', required = true)]
        coalition: Vec<usize>,
    },
    /// Trace a pirated copy (config: decoder name and settings).
    Decode {
        #[command(flatten)]
        cb: CodebookArgs,
        #[arg(long)]
        pirate: PathBuf,
    },
    /// Monte Carlo sweep over blocklengths (config: experiment).
    Simulate,
    /// Solve a max-min game (config: game problem).
    Capacity {
        /// Also solve every L up to this value.
        #[arg(long)]
        l_max: Option<usize>,
    },
    /// Evaluate false-negative exponents over rates (config: exponent request).
    Exponent,
}

#[derive(Deserialize)]
struct GenConfig {
    code: CodeSpec,
    n: usize,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
struct ExponentRequest {
    problem: GameProblem,
    /// Encoder law; uniform when absent.
    #[serde(default)]
    law: Option<InputLaw>,
    target: Target,
    rates: Vec<f64>,
    #[serde(default)]
    memoryless: bool,
}

#[derive(Serialize)]
struct PirateFile<'a> {
    coalition: &'a [usize],
    y: &'a Sequence,
}

#[derive(Deserialize)]
struct PirateInput {
    y: Sequence,
}

fn read_json<T: DeserializeOwned>(path: &Option<PathBuf>) -> Result<T> {
    let path = path.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write(out: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(out)?;
    let path = out.join(name);
    fs::write(&path, contents)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen => {
            let mut cfg: GenConfig = read_json(&cli.config)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let cb = draw_codebook(&cfg.code, cfg.seed, cfg.n, 0)?;
            write_codebook(&cb, &cli.out, "codebook")
        }
        Command::Attack { cb, coalition } => {
            let codebook = cb.load()?;
            let mut cfg: AttackConfig = read_json(&cli.config)?;
            if cfg.k == 0 {
                cfg.k = coalition.len();
            }
            let x = coalition
                .iter()
                .map(|&u| codebook.rows.get(u).ok_or_else(|| Error::Config(format!("user {u} is not in the codebook"))))
                .collect::<Result<Vec<_>>>()?;
            let attack = build_attack(&cfg)?;
            let result = run_attack(attack.as_ref(), &x, &mut stream(cli.seed.unwrap_or(0), "attack", &[]))?;
            let pirate = serde_json::to_string_pretty(&PirateFile { coalition, y: &result.y })?;
            write(&cli.out, "pirate.json", &pirate)?;
            write(&cli.out, "feasibility.csv", &result.feasibility.to_csv())
        }
        Command::Decode { cb, pirate } => {
            let codebook = cb.load()?;
            let mut req: serde_json::Map<String, serde_json::Value> = read_json(&cli.config)?;
            let name = match req.remove("decoder") {
                Some(serde_json::Value::String(s)) => s,
                None => "threshold".into(),
                Some(other) => return Err(Error::Config(format!("decoder name must be a string, got {other}"))),
            };
            let config: DecodeConfig =
                serde_json::from_value(req.into()).map_err(|e| Error::Config(format!("decode config: {e}")))?;
            let y: PirateInput = read_json(&Some(pirate.clone()))?;
            let decoder = decoder_registry().build(&name, &config)?;
            let outcome = decoder.decode(&codebook, &y.y)?;
            println!("{}", serde_json::to_string(&outcome.accused)?);
            write(&cli.out, "outcome.json", &serde_json::to_string_pretty(&outcome)?)
        }
        Command::Simulate => {
            let text = match &cli.config {
                Some(p) => fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                None => return Err(Error::Config("--config is required".into())),
            };
            let mut cfg = ExperimentConfig::from_json(&text).map_err(|e| Error::Config(e.to_string()))?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let report = estimate(&cfg, cli.workers)?;
            write(&cli.out, "estimate.csv", &report.to_csv())?;
            write(&cli.out, "estimate.json", &report.to_json()?)
        }
        Command::Capacity { l_max } => {
            let problem: GameProblem = read_json(&cli.config)?;
            let solutions = match l_max {
                Some(l) => solve_capacity_sequence(&problem, *l)?,
                None => vec![solve_capacity(&problem)?],
            };
            let rows: Vec<SweepRow> = solutions.iter().map(|s| SweepRow::from_solution(problem.k, s)).collect();
            for s in &solutions {
                println!("L={} value={:.8e}", s.l, s.value);
            }
            let last = solutions.last().ok_or(Error::Empty("solutions"))?;
            write(&cli.out, "solution.json", &last.to_json()?)?;
            write(&cli.out, "sweep.csv", &sweep_csv(&rows))
        }
        Command::Exponent => {
            let req: ExponentRequest = read_json(&cli.config)?;
            req.problem.validate()?;
            let law = req.law.clone().unwrap_or_else(|| InputLaw::uniform(&req.problem));
            let values = if req.memoryless {
                req.rates
                    .iter()
                    .map(|&r| memoryless_exponent_variant(r, &law, &req.problem, &req.target))
                    .collect::<Result<Vec<_>>>()?
            } else {
                psp_sweep(&req.rates, &law, &req.problem, &req.target)?
            };
            let rows: Vec<SweepRow> = req
                .rates
                .iter()
                .zip(&values)
                .map(|(&r, &value)| SweepRow {
                    k: req.problem.k,
                    l: req.problem.l,
                    r: Some(r),
                    value,
                    restarts: PspOptions::default().starts,
                    gap: 0.0,
                })
                .collect();
            write(&cli.out, "exponent.csv", &sweep_csv(&rows))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::UnknownStrategy { .. } | Error::Json(_) => 2,
                Error::BudgetExceeded { .. } => 3,
                _ => 1,
            })
        }
    }
}
