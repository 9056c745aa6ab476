use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use susceptsim::config::RunConfig;
use susceptsim::pipeline::{
    dataset_tag, gateways, load_adapter, run_adapter_stage, run_counterfactual_stage,
    run_head_stage, run_sweep_stage, run_thematic_stage, Embedder, Workspace,
};
use susceptsim::report::emit_from_disk;
use susceptsim::Error;

#[derive(Parser)]
#[command(name = "susceptsim", version, about = "Persona simulation and counterfactual auditing runs")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "run.toml")]
    config: PathBuf,
    /// Replace every configured seed with this value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Keep records from an earlier sweep and only run the missing items.
    #[arg(long, global = true)]
    resume: bool,
    /// Answer from the deterministic offline backend instead of the endpoints.
    #[arg(long, global = true)]
    mock: bool,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration and load every input.
    Validate,
    /// Run the condition grid over every dataset.
    Sweep,
    /// Run the utility, shortcut and complementarity panels.
    Counterfactual,
    /// Fit and freeze the belief adapter.
    TrainAdapter,
    /// Fit susceptibility heads on the frozen adapter.
    TrainHead,
    /// Topic model over claims and per-topic demographic gaps.
    Thematic,
    /// Write tables, summary and manifest from stored artifacts.
    Report,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Transport { .. } => EXIT_TRANSPORT,
        Error::Io { .. } | Error::Training(_) => 1,
        _ => EXIT_VALIDATION,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(&cli.config).map_err(|e| match e {
        Error::Io { path, source } => Error::Config(format!("{}: {source}", path.display())),
        other => other,
    })?;
    if let Some(s) = cli.seed {
        cfg.seeds.sweep = s;
        cfg.seeds.dropout = s;
        cfg.seeds.training = s;
        cfg.seeds.topics = s;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let ws = Workspace::load(load_config(cli)?)?;
    match cli.command {
        Command::Validate => {
            for c in &ws.datasets {
                let r = c.report();
                println!(
                    "{}: {} participants, {} claims, {} evaluation judgments, axes {:?}",
                    dataset_tag(c.kind()),
                    c.n_participants(),
                    c.n_claims(),
                    c.evaluation().len(),
                    c.available_axes()
                );
                for w in &r.warnings {
                    println!("  warning: {w}");
                }
            }
            println!(
                "survey: {} questions, {} distributions; {} settings",
                ws.store.n_questions(),
                ws.store.n_distributions(),
                ws.config.settings()?.len()
            );
        }
        Command::Sweep => {
            let gws = gateways(&ws.config, cli.mock)?;
            let stages = run_sweep_stage(&ws, &gws, cli.resume)?;
            let mut transport = false;
            for s in &stages {
                let o = &s.outcome;
                println!(
                    "{}: {} records ({} resumed), {} failures, cache hit rate {:.3}",
                    dataset_tag(s.kind),
                    o.records.len(),
                    s.resumed,
                    o.failures.len(),
                    o.cache_hit_rate()
                );
                transport |= o.has_transport_failures();
            }
            if transport {
                eprintln!("some requests failed after all retries; rerun with --resume");
                return Ok(EXIT_TRANSPORT);
            }
        }
        Command::Counterfactual => {
            let gws = gateways(&ws.config, cli.mock)?;
            for (kind, panels) in run_counterfactual_stage(&ws, &gws)? {
                for p in panels {
                    println!(
                        "{} {} {} {}: flip {} over {} pairs{}",
                        dataset_tag(kind),
                        p.model_name,
                        p.axis,
                        p.panel,
                        p.flip_rate.map_or("-".into(), |f| format!("{f:.2}%")),
                        p.n_pairs,
                        p.skipped.map(|s| format!(" ({s})")).unwrap_or_default()
                    );
                }
            }
        }
        Command::TrainAdapter => {
            let gws = gateways(&ws.config, cli.mock)?;
            let mut embedder = Embedder::for_workspace(&ws, &gws)?;
            let (_, summary) = run_adapter_stage(&ws, &mut embedder)?;
            println!(
                "adapter: {} train / {} validation pairs, {} steps, validation KL {:?}",
                summary.n_train,
                summary.n_val,
                summary.steps,
                summary.final_val_kl()
            );
        }
        Command::TrainHead => {
            let gws = gateways(&ws.config, cli.mock)?;
            let adapter = load_adapter(&ws.layout().phase1_checkpoint())?;
            let mut embedder = Embedder::for_workspace(&ws, &gws)?;
            for (kind, rows) in run_head_stage(&ws, &adapter, &mut embedder)? {
                for r in rows {
                    println!(
                        "{} {}: val accuracy {:?}, zero-out flip {:?}, swap flip {:?}{}",
                        dataset_tag(kind),
                        r.axis,
                        r.val_accuracy,
                        r.zero_out.as_ref().map(|m| m.flip_rate),
                        r.swap.as_ref().map(|m| m.flip_rate),
                        r.skipped.map(|s| format!(" ({s})")).unwrap_or_default()
                    );
                }
            }
        }
        Command::Thematic => {
            for (kind, t) in run_thematic_stage(&ws)? {
                println!("{}: {} topics, reconstruction error {:.6}", dataset_tag(kind), t.k, t.final_error);
                for topic in &t.topics {
                    let terms: Vec<&str> = topic.top_terms.iter().take(5).map(|(w, _)| w.as_str()).collect();
                    println!("  {}: {} claims; {}", topic.topic, topic.claims.len(), terms.join(", "));
                }
            }
        }
        Command::Report => {
            let m = emit_from_disk(&ws)?;
            println!(
                "wrote {} files to {}",
                m.files.len() + 1,
                ws.layout().report_dir().display()
            );
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
