use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cmdp_bench::check::check_run;
use cmdp_bench::envelope::{envelope, EnvelopeParams};
use cmdp_bench::experiment::{self, aggregate, run_single, summarize, sweep};
use cmdp_bench::metrics::solve_baselines;
use cmdp_bench::scenario::{Scenario, ScenarioSource};
use cmdp_core::meta::{CostSource, RunConfig, XiRule};
use cmdp_core::oracle::OracleExport;
use cmdp_core::{LoopFreeCmdp, Mode};

#[derive(Parser, Debug)]
#[command(
    name = "cmdp-bench",
    version,
    about = "Primal-dual learning on loop-free constrained MDPs"
)]
struct Cli {
    /// Instance file (loop-free CMDP JSON).
    #[arg(long, global = true)]
    instance: Option<PathBuf>,
    /// Scenario file (reward and constraint generators).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Number of episodes.
    #[arg(long = "T", global = true, default_value_t = 1024)]
    episodes: usize,
    #[arg(long, global = true, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Practical)]
    mode: ModeArg,
    /// Seed count: `bench` and `check` use seeds `0..n`, `run` uses
    /// `seed..seed + n`.
    #[arg(long, global = true, default_value_t = 1)]
    seeds: u64,
    /// Seed of a single run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory; files are written there instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print tables as CSV.
    #[arg(long, global = true, conflicts_with = "json")]
    csv: bool,
    /// Print results as JSON.
    #[arg(long, global = true)]
    json: bool,
    /// Primal constant `C` in practical mode.
    #[arg(long, global = true, default_value_t = 1.0)]
    primal_constant: f64,
    /// Dual step size in practical mode; overrides `--dual-scale`.
    #[arg(long, global = true)]
    dual_step: Option<f64>,
    /// Practical dual step is `dual_scale / sqrt(T)`, capped at `1/(2mH)`.
    #[arg(long, global = true, default_value_t = 1.0)]
    dual_scale: f64,
    #[arg(long, global = true, value_enum, default_value_t = XiArg::PreStep)]
    xi_rule: XiArg,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the offline baselines for an instance and scenario.
    Solve,
    /// One learning run per seed; writes the per-episode CSV.
    Run,
    /// Seed sweep; writes the aggregate CSV and a JSON summary.
    Bench,
    /// Run the invariant suite on a short run.
    Check,
    /// Print the bound dictionary.
    Envelope {
        /// Slater margin; solved from the scenario when omitted.
        #[arg(long)]
        rho: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Paper,
    Practical,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum XiArg {
    PreStep,
    PostStep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    if cli.episodes == 0 {
        bail!("T: must be positive");
    }
    if !(cli.delta > 0.0 && cli.delta < 1.0) {
        bail!("delta: {} must lie in (0, 1)", cli.delta);
    }
    if cli.seeds == 0 {
        bail!("seeds: must be positive");
    }
    if !(cli.primal_constant > 0.0) {
        bail!("primal-constant: {} must be positive", cli.primal_constant);
    }
    if !(cli.dual_scale > 0.0) {
        bail!("dual-scale: {} must be positive", cli.dual_scale);
    }
    if let Some(eta) = cli.dual_step {
        if !(eta > 0.0) {
            bail!("dual-step: {eta} must be positive");
        }
    }
    match &cli.command {
        Command::Solve => solve(cli),
        Command::Run => run(cli),
        Command::Bench => bench(cli),
        Command::Check => check(cli),
        Command::Envelope { rho } => print_envelope(cli, *rho),
    }
}

fn load_instance(cli: &Cli) -> Result<LoopFreeCmdp> {
    let path = cli
        .instance
        .as_ref()
        .context("instance: --instance is required")?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("instance: cannot read {}", path.display()))?;
    LoopFreeCmdp::from_json(&text).with_context(|| format!("instance: {}", path.display()))
}

fn load_scenario(cli: &Cli, mdp: &LoopFreeCmdp) -> Result<Scenario> {
    let path = cli
        .scenario
        .as_ref()
        .context("scenario: --scenario is required")?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("scenario: cannot read {}", path.display()))?;
    let scenario =
        Scenario::from_json(&text).with_context(|| format!("scenario: {}", path.display()))?;
    scenario
        .validate(mdp)
        .with_context(|| format!("scenario: {}", path.display()))?;
    Ok(scenario)
}

fn config(cli: &Cli, seed: u64) -> RunConfig {
    let mode = match cli.mode {
        ModeArg::Paper => Mode::Paper,
        ModeArg::Practical => Mode::Practical,
    };
    let mut c = RunConfig::new(cli.episodes, mode, seed);
    c.delta = cli.delta;
    c.primal_constant = cli.primal_constant;
    c.dual_step = cli.dual_step;
    c.dual_scale = cli.dual_scale;
    c.xi_rule = match cli.xi_rule {
        XiArg::PreStep => XiRule::PreStep,
        XiArg::PostStep => XiRule::PostStep,
    };
    c
}

/// Writes `bytes` to `<out>/<name>` or stdout.
fn emit(cli: &Cli, name: &str, bytes: &[u8]) -> Result<()> {
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .with_context(|| format!("out: cannot create {}", dir.display()))?;
            let path = dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("out: cannot write {}", path.display()))
        }
        None => {
            io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn key_values(
    cli: &Cli,
    pairs: &[(&str, String)],
    json: &impl serde::Serialize,
) -> Result<Vec<u8>> {
    if cli.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["key", "value"])?;
        for (k, v) in pairs {
            w.write_record([*k, v.as_str()])?;
        }
        Ok(w.into_inner()?)
    } else if cli.json {
        let mut s = serde_json::to_string_pretty(json)?;
        s.push('\n');
        Ok(s.into_bytes())
    } else {
        let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        Ok(pairs
            .iter()
            .map(|(k, v)| format!("{k:width$}  {v}\n"))
            .collect::<String>()
            .into_bytes())
    }
}

fn opt_str(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "none".into())
}

fn solve(cli: &Cli) -> Result<ExitCode> {
    let mdp = load_instance(cli)?;
    let scenario = load_scenario(cli, &mdp)?;
    let stochastic = scenario.stochastic_constraints() && scenario.stochastic_rewards();
    let mut source = ScenarioSource::new(&mdp, scenario, cli.seed)?;
    if !stochastic {
        // replay the draws of a run with this seed; adaptive rewards see the uniform policy
        let uniform = cmdp_core::Policy::uniform(&mdp);
        let streams = cmdp_core::RngStreams::new(cli.seed);
        for t in 1..=cli.episodes {
            let mut rng = streams.episode(cmdp_core::Stream::Scenario, t as u64);
            source.costs(t, &uniform, &mut rng)?;
        }
    }
    let (baselines, solution) = solve_baselines(&mdp, &source, cli.episodes)?;
    let export = OracleExport::from(&solution);
    let pairs = [
        ("opt", baselines.opt.to_string()),
        ("weak_opt", opt_str(baselines.weak_opt)),
        ("rho", baselines.rho.to_string()),
        ("rho_raw", export.rho_raw.to_string()),
        ("lambda_cap", opt_str(baselines.lambda_cap)),
        (
            "margin_condition_threshold",
            baselines.margin_condition_threshold.to_string(),
        ),
        (
            "margin_condition_holds",
            baselines.margin_condition_holds.to_string(),
        ),
    ];
    #[derive(serde::Serialize)]
    struct Out<'a> {
        baselines: &'a cmdp_bench::metrics::Baselines,
        solution: &'a OracleExport,
    }
    let bytes = key_values(
        cli,
        &pairs,
        &Out {
            baselines: &baselines,
            solution: &export,
        },
    )?;
    emit(
        cli,
        if cli.csv { "solve.csv" } else { "solve.json" },
        &bytes,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let mdp = load_instance(cli)?;
    let scenario = load_scenario(cli, &mdp)?;
    if cli.seeds > 1 {
        cli.out
            .as_ref()
            .context("out: --out is required with more than one seed")?;
        let seeds: Vec<u64> = (cli.seed..cli.seed + cli.seeds).collect();
        for output in sweep(&mdp, &scenario, &config(cli, cli.seed), &seeds, cli.threads)? {
            let mut bytes = Vec::new();
            experiment::write_run_csv(&mut bytes, &output)?;
            emit(
                cli,
                &format!("run_{}.csv", output.record.config.seed),
                &bytes,
            )?;
        }
        return Ok(ExitCode::SUCCESS);
    }
    let output = run_single(&mdp, &scenario, &config(cli, cli.seed))?;
    let mut bytes = Vec::new();
    experiment::write_run_csv(&mut bytes, &output)?;
    emit(cli, "run.csv", &bytes)?;
    if let Some(dir) = &cli.out {
        let agg = aggregate(std::slice::from_ref(&output));
        let summary = summarize(std::slice::from_ref(&output), &agg);
        write_json(dir, "summary.json", &summary)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(dir.join(name), s).with_context(|| format!("out: cannot write {name}"))
}

fn bench(cli: &Cli) -> Result<ExitCode> {
    let mdp = load_instance(cli)?;
    let scenario = load_scenario(cli, &mdp)?;
    let seeds: Vec<u64> = (0..cli.seeds).collect();
    let runs = sweep(&mdp, &scenario, &config(cli, 0), &seeds, cli.threads)?;
    let agg = aggregate(&runs);
    let summary = summarize(&runs, &agg);
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("out: cannot create {}", dir.display()))?;
    let file =
        fs::File::create(dir.join("aggregate.csv")).context("out: cannot write aggregate.csv")?;
    experiment::write_aggregate_csv(io::BufWriter::new(file), &agg)?;
    write_json(&dir, "summary.json", &summary)?;
    println!(
        "wrote {} and {}",
        dir.join("aggregate.csv").display(),
        dir.join("summary.json").display()
    );
    Ok(ExitCode::SUCCESS)
}

fn check(cli: &Cli) -> Result<ExitCode> {
    let mdp = load_instance(cli)?;
    let scenario = load_scenario(cli, &mdp)?;
    let mut failed = false;
    for seed in 0..cli.seeds {
        let mut c = config(cli, seed);
        c.keep_occupancies = true;
        let out = run_single(&mdp, &scenario, &c);
        let out = match out {
            Ok(o) => o,
            Err(e) => {
                println!("seed {seed}: FAIL {e}");
                failed = true;
                continue;
            }
        };
        let rep = check_run(&mdp, &out.record);
        println!(
            "seed {seed}: {} ({} assertions over {} episodes)",
            if rep.passed() { "PASS" } else { "FAIL" },
            rep.assertions,
            rep.episodes
        );
        for f in &rep.failures {
            println!("  {f}");
        }
        failed |= !rep.passed();
    }
    Ok(if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn print_envelope(cli: &Cli, rho: Option<f64>) -> Result<ExitCode> {
    let mdp = load_instance(cli)?;
    let rho = match (rho, &cli.scenario) {
        (Some(r), _) => Some(r),
        (None, Some(_)) => {
            let scenario = load_scenario(cli, &mdp)?;
            let source = ScenarioSource::new(&mdp, scenario.clone(), cli.seed)?;
            if scenario.stochastic_constraints() {
                Some(solve_baselines(&mdp, &source, cli.episodes)?.0.rho)
            } else {
                None
            }
        }
        (None, None) => None,
    };
    let env = envelope(&EnvelopeParams::for_mdp(&mdp, cli.episodes, cli.delta, rho));
    let pairs = [
        ("C", env.c.to_string()),
        ("D", env.d.to_string()),
        ("dual_step", env.dual_step.to_string()),
        ("U1", env.u1.to_string()),
        ("U2", env.u2.to_string()),
        ("U3", env.u3.to_string()),
        ("U4", env.u4.to_string()),
        ("D1", env.d1.to_string()),
        ("D2", env.d2.to_string()),
        ("B1", env.b1.to_string()),
        ("F1", env.f1.to_string()),
        ("E_P_per_xi", env.primal_per_xi.to_string()),
        ("E_D", env.dual.to_string()),
        ("E_G", env.concentration.to_string()),
        ("E_I", env.indicator.to_string()),
        ("rho", opt_str(rho)),
        (
            "Lambda",
            env.lambda_cap
                .map(|v| v.to_string())
                .unwrap_or_else(|| "inf".into()),
        ),
        (
            "margin_condition_threshold",
            env.margin_condition_threshold.to_string(),
        ),
        (
            "margin_condition_holds",
            env.margin_condition_holds
                .map(|b| b.to_string())
                .unwrap_or_else(|| "unknown".into()),
        ),
    ];
    let bytes = key_values(cli, &pairs, &env)?;
    emit(
        cli,
        if cli.csv {
            "envelope.csv"
        } else {
            "envelope.json"
        },
        &bytes,
    )?;
    Ok(ExitCode::SUCCESS)
}
