mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;

/// Scene-graph co-attention networks for text VQA on synthetic scenes.
#[derive(Parser, Debug)]
#[command(name = "scenegate", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset as JSON lines.
    GenData(GenData),
    /// Build scene graphs for scenes, optionally checking them against the brute-force builder.
    SceneGraph(SceneGraphArgs),
    /// Train a model and write checkpoints plus a metrics CSV.
    Train(Train),
    /// Score a checkpoint on a dataset.
    Eval(Eval),
    /// Dump per-head attention weights for one scene.
    AttnDump(AttnDump),
    /// Run the finite-difference gradient suite.
    GradCheck(GradCheck),
}

#[derive(Args, Debug)]
pub struct GenData {
    /// Number of scenes.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSON-lines file.
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args, Debug)]
pub struct SceneGraphArgs {
    /// Scene file: one JSON object or JSON lines, each with `objects` and `ocr`.
    #[arg(long = "in", conflicts_with = "n")]
    pub input: Option<std::path::PathBuf>,
    /// Generate this many scenes instead of reading `--in`.
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed for generated scenes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Graph output, one JSON object per line; stdout when absent.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    /// Compare every graph with the independent brute-force construction.
    #[arg(long)]
    pub verify_bruteforce: bool,
}

#[derive(Args, Debug)]
pub struct Train {
    /// JSON file overriding preset values.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// One of best, table1, toy.
    #[arg(long)]
    pub preset: Option<String>,
    /// Seed for initialization, batch order, dropout and generated data.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Training scenes; generated from the config when absent.
    #[arg(long)]
    pub data: Option<std::path::PathBuf>,
    /// Validation scenes, used together with `--data`.
    #[arg(long, requires = "data")]
    pub val: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
pub struct Eval {
    #[arg(long)]
    pub checkpoint: std::path::PathBuf,
    #[arg(long)]
    pub data: std::path::PathBuf,
    /// Report JSON; stdout when absent.
    #[arg(long)]
    pub report: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
pub struct AttnDump {
    #[arg(long)]
    pub checkpoint: std::path::PathBuf,
    /// Scenes as JSON lines.
    #[arg(long = "in")]
    pub input: std::path::PathBuf,
    /// Line of `--in` to use, counted from 0.
    #[arg(long, default_value_t = 0)]
    pub n: usize,
    /// Keep only this layer, e.g. `sra.0`.
    #[arg(long)]
    pub layer: Option<String>,
    /// Keep only this head.
    #[arg(long)]
    pub head: Option<usize>,
    /// Output JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradCheck {
    #[arg(long, default_value = "toy")]
    pub preset: String,
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Entries probed per parameter tensor.
    #[arg(long, default_value_t = 4)]
    pub entries: usize,
    /// Also write the results as JSON.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SCENEGATE_LOG", "info"))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::SceneGraph(a) => commands::scene_graph(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::AttnDump(a) => commands::attn_dump(a),
        Command::GradCheck(a) => commands::grad_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (category, message) = describe(&e);
            eprintln!("error[{category}]: {}", message.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn describe(e: &anyhow::Error) -> (&'static str, String) {
    if let Some(c) = e.downcast_ref::<CliError>() {
        return (c.category, format!("{e:#}"));
    }
    if let Some(s) = e.downcast_ref::<scenegate::Error>() {
        return (s.category(), format!("{e:#}"));
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return ("io", format!("{e:#}"));
    }
    ("internal", format!("{e:#}"))
}
