use std::fs::{self, File};
use std::io::BufWriter;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use arld_core::envs::Task;
use arld_core::expert::{
    collect_demos, evaluate_expert, stats_table, DemoSet, ExpertPolicy, ExpertSelectionRule,
};
use arld_core::harness::bridge::{Bridge, BridgeConfig};
use arld_core::harness::{
    aggregate, expert_training_config, make_weak_expert, parse_variant, run_trial_with, run_trials_observed,
    summary_table, ExperimentConfig, JsonlLog, Method,
};
use arld_core::nn::checkpoint;
use arld_core::rng::seeded;

#[derive(Parser)]
#[command(name = "arld", version, about = "Active deep Q-learning with demonstration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one method over a range of seeds.
    Run(RunArgs),
    /// Evaluate a saved network greedily.
    Evaluate(EvaluateArgs),
    /// Train DQN and keep the earliest checkpoint that qualifies as a weak expert.
    MakeExpert(MakeExpertArgs),
    /// Record demonstrations from a saved expert.
    CollectDemos(CollectDemosArgs),
    /// Train one seed with a human expert answering through the console bridge.
    Serve(ServeArgs),
    /// Print a preset configuration as TOML.
    Preset(PresetArgs),
}

#[derive(Args)]
struct Selection {
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    #[arg(long)]
    method: Option<Method>,
    /// `bootstrapped` or `noisy`.
    #[arg(long)]
    variant: Option<String>,
    /// Number of bootstrapped heads.
    #[arg(long, default_value_t = 10)]
    heads: usize,
    /// TOML configuration; command-line selections override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sel: Selection,
    /// Seed range `a..b` (exclusive end) or a single seed.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Range<u64>>,
    /// Saved expert network.
    #[arg(long)]
    expert: Option<PathBuf>,
    /// Recorded demonstrations used for pretraining instead of the expert.
    #[arg(long)]
    demos: Option<PathBuf>,
    /// Output directory for logs, curves and records.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Write every n-th step to the run log.
    #[arg(long, default_value_t = 100)]
    log_stride: u64,
    #[arg(long)]
    training_steps: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MakeExpertArgs {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[arg(long, default_value = "bootstrapped")]
    variant: String,
    #[arg(long, default_value_t = 10)]
    heads: usize,
    /// Training seeds tried in order until one yields a qualifying checkpoint.
    #[arg(long, value_parser = parse_seeds, default_value = "0..5")]
    train_seeds: Range<u64>,
    #[arg(long)]
    training_steps: Option<u64>,
    #[arg(long, default_value_t = 12345)]
    eval_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CollectDemosArgs {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[arg(long)]
    expert: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    sel: Selection,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "127.0.0.1:8765")]
    addr: String,
    /// Seconds the human has to answer a query.
    #[arg(long, default_value_t = 15)]
    query_timeout: u64,
    /// Seconds to wait for the console before training starts.
    #[arg(long, default_value_t = 60)]
    wait: u64,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    training_steps: Option<u64>,
}

#[derive(Args)]
struct PresetArgs {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[arg(long)]
    method: Method,
    #[arg(long, default_value = "bootstrapped")]
    variant: String,
    #[arg(long, default_value_t = 10)]
    heads: usize,
}

fn parse_task(s: &str) -> Result<Task, String> {
    Task::ALL
        .into_iter()
        .find(|t| t.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown task {s:?} (cartpole, acrobot, mountaincar)"))
}

fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let num = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("bad seed {x:?}: {e}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let r = num(a)?..num(b)?;
            if r.is_empty() {
                return Err(format!("empty seed range {s:?}"));
            }
            Ok(r)
        }
        None => {
            let a = num(s)?;
            Ok(a..a + 1)
        }
    }
}

fn resolve(sel: &Selection) -> Result<ExperimentConfig> {
    let mut cfg = match &sel.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => {
            let (Some(task), Some(method)) = (sel.task, sel.method) else {
                bail!("pass --task and --method, or --config");
            };
            let variant = parse_variant(sel.variant.as_deref().unwrap_or("bootstrapped"), sel.heads)?;
            return Ok(ExperimentConfig::preset(task, method, variant));
        }
    };
    if let Some(t) = sel.task {
        cfg.task = t;
    }
    if let Some(m) = sel.method {
        cfg.method = m;
    }
    if let Some(v) = &sel.variant {
        cfg.agent.variant = parse_variant(v, sel.heads)?;
    }
    Ok(cfg)
}

fn load_expert(path: &Path) -> Result<ExpertPolicy> {
    let net = checkpoint::load_network(path).with_context(|| format!("loading expert {}", path.display()))?;
    Ok(ExpertPolicy::WeakCheckpoint(net))
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = resolve(&args.sel)?;
    if let Some(r) = args.seeds {
        cfg.seeds = r.collect();
    }
    if let Some(n) = args.training_steps {
        cfg.training_steps = n;
    }
    cfg.validate()?;
    let expert = args.expert.as_deref().map(load_expert).transpose()?;
    let demos = args.demos.as_deref().map(DemoSet::load).transpose()?;
    if let Some(d) = &demos {
        if d.task != cfg.task {
            bail!("demonstrations were recorded on {}", d.task.display_name());
        }
    }
    let label = cfg.label();
    let dir = args.out.join(format!("{}_{}", cfg.task.name(), label));
    fs::create_dir_all(&dir)?;
    cfg.save(dir.join("config.toml"))?;
    eprintln!("running {label} on {} for seeds {:?}", cfg.task.display_name(), cfg.seeds);

    let results = match &demos {
        None => run_trials_observed(&cfg, expert.as_ref(), |seed| {
            let file = File::create(dir.join(format!("seed_{seed}.jsonl")))?;
            Ok(JsonlLog::new(BufWriter::new(file)).with_stride(args.log_stride))
        })?,
        Some(d) => {
            let mut out = Vec::new();
            for &seed in &cfg.seeds {
                let file = File::create(dir.join(format!("seed_{seed}.jsonl")))?;
                let mut log = JsonlLog::new(BufWriter::new(file)).with_stride(args.log_stride);
                let rec = run_trial_with(&cfg, seed, expert.as_ref(), Some(&d.transitions), &mut log)?;
                out.push((rec, log));
            }
            out
        }
    };
    let mut records = Vec::new();
    for (rec, log) in results {
        log.finish()?;
        eprintln!(
            "  seed {:>3}: final {:>7.2}  solved at {:>8}  charged {}",
            rec.seed,
            rec.final_score().unwrap_or(f64::NAN),
            rec.steps_to_solve.map_or("-".to_string(), |s| s.to_string()),
            rec.charged
        );
        records.push(rec);
    }
    fs::write(dir.join("records.json"), serde_json::to_string_pretty(&records)?)?;
    let summary = aggregate(&label, &records, cfg.training_steps)?;
    fs::write(dir.join("curve.csv"), summary.curve_csv())?;
    let table = summary_table(&[cfg.task.display_name()], &[(label, vec![Some(&summary)])]);
    fs::write(dir.join("summary.md"), &table)?;
    print!("{table}");
    eprintln!("outputs in {}", dir.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let expert = load_expert(&args.checkpoint)?;
    let stats = evaluate_expert(&expert, args.task, args.episodes, args.seed)?;
    print!("{}", stats_table(&[(args.task, stats)]));
    Ok(())
}

fn make_expert(args: MakeExpertArgs) -> Result<()> {
    let variant = parse_variant(&args.variant, args.heads)?;
    let mut cfg = expert_training_config(args.task, variant);
    if let Some(n) = args.training_steps {
        cfg.training_steps = n;
    }
    let rule = ExpertSelectionRule::for_task(args.task);
    let seeds: Vec<u64> = args.train_seeds.collect();
    let (ckpt, stats, seed) = make_weak_expert(&cfg, &seeds, &rule, args.eval_seed)?;
    checkpoint::save_network(&args.out, &ckpt.net)?;
    eprintln!("training seed {seed}, checkpoint at step {}", ckpt.step);
    print!("{}", stats_table(&[(args.task, stats)]));
    Ok(())
}

fn collect(args: CollectDemosArgs) -> Result<()> {
    let mut expert = load_expert(&args.expert)?;
    let mut rng = seeded(args.seed);
    let transitions = collect_demos(&mut expert, args.task, args.count, 1, 1.0, &mut rng)?;
    let set = DemoSet {
        task: args.task,
        expert: expert.kind().to_string(),
        transitions,
    };
    set.save(&args.out)?;
    eprintln!("wrote {} demonstrations to {}", set.transitions.len(), args.out.display());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut cfg = resolve(&args.sel)?;
    cfg.seeds = vec![args.seed];
    if let Some(n) = args.training_steps {
        cfg.training_steps = n;
    }
    cfg.validate()?;
    let mut bridge_cfg = BridgeConfig::new(args.addr, cfg.task.spec().num_actions);
    bridge_cfg.query_timeout = Duration::from_secs(args.query_timeout);
    bridge_cfg.run_id = format!("{}-{}-seed{}", cfg.task.name(), cfg.label(), args.seed);
    let bridge = Bridge::serve(bridge_cfg)?;
    eprintln!("bridge listening on ws://{}", bridge.local_addr());
    if !bridge.wait_for_client(Duration::from_secs(args.wait)) {
        eprintln!("no console connected; queries will be abandoned");
    }
    let expert = ExpertPolicy::Human(bridge.adapter());
    fs::create_dir_all(&args.out)?;
    let file = File::create(args.out.join(format!("human_seed_{}.jsonl", args.seed)))?;
    let mut log = JsonlLog::new(BufWriter::new(file));
    let rec = run_trial_with(&cfg, args.seed, Some(&expert), None, &mut log)?;
    log.finish()?;
    bridge.shutdown();
    println!(
        "final score {:.2}, charged {}, abandoned {}",
        rec.final_score().unwrap_or(f64::NAN),
        rec.charged,
        rec.abandoned
    );
    Ok(())
}

fn preset(args: PresetArgs) -> Result<()> {
    let variant = parse_variant(&args.variant, args.heads)?;
    print!("{}", ExperimentConfig::preset(args.task, args.method, variant).to_toml()?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Evaluate(a) => evaluate(a),
        Command::MakeExpert(a) => make_expert(a),
        Command::CollectDemos(a) => collect(a),
        Command::Serve(a) => serve(a),
        Command::Preset(a) => preset(a),
    }
}
