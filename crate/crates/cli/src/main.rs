use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gkm_cli::config::{self, BuildConfig, PretrainRunConfig, ProtocolRunConfig};
use gkm_cli::pipeline;
use gkm_cli::record::ErrorRecord;
use gkm_cli::service::{self, parse_coords, ServiceState};
use gkm_core::corpus::{ingest_corpus, IngestConfig};
use gkm_core::dimension::{intrinsic_dimension_pca, jl_min_dimension, JlQuery};
use gkm_core::gkm::{KnowledgeMap, NeighborQuery};
use gkm_core::mapfile::{load_map, to_debug_json};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "gkm", version, about = "Build, query and serve knowledge maps")]
struct Cli {
    /// Overrides the seed of whichever config the command uses.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a corpus, grow the map until stable and write the map file.
    Build(BuildArgs),
    /// Query a built map; results are JSON on stdout.
    Query {
        #[arg(long)]
        map: PathBuf,
        #[command(subcommand)]
        query: QueryCommand,
    },
    /// Dimensionality estimates.
    #[command(subcommand)]
    Dims(DimsCommand),
    /// Simulated decoder experiments.
    #[command(subcommand, name = "decode-sim")]
    DecodeSim(DecodeCommand),
    /// Serve a map over HTTP; the bind address falls back to $GKM_BIND.
    Serve {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON, or TOML by extension.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training log (JSON lines); defaults to `<out>.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    initial_dim: Option<usize>,
    #[arg(long)]
    max_dim: Option<usize>,
    #[arg(long)]
    nodes_per_axis: Option<usize>,
    #[arg(long)]
    epochs_per_phase: Option<usize>,
    #[arg(long)]
    parallel_runs: Option<usize>,
    #[arg(long)]
    stability_threshold: Option<f64>,
    #[arg(long)]
    probe_size: Option<usize>,
    #[arg(long)]
    max_terms: Option<usize>,
}

#[derive(Subcommand)]
enum QueryCommand {
    Neighbors {
        #[arg(long, conflicts_with = "coords", required_unless_present = "coords")]
        id: Option<String>,
        /// Comma-separated coordinates.
        #[arg(long)]
        coords: Option<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    Relevance {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    Locate {
        #[arg(long, conflicts_with = "text_file", required_unless_present = "text_file")]
        text: Option<String>,
        #[arg(long)]
        text_file: Option<PathBuf>,
    },
    View {
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// JSON debug export of the whole map.
    Export,
}

#[derive(Subcommand)]
enum DimsCommand {
    Jl {
        #[arg(long)]
        m: u64,
        #[arg(long)]
        epsilon: f64,
    },
    Pca {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        threshold: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DecodeCommand {
    /// Train one synthetic subject's decoder through the online protocol.
    Run {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Compare cohort-pretrained and from-scratch fine-tuning.
    Pretrain {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "decode-sim-out")]
        out_dir: PathBuf,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn open_map(path: &Path) -> Result<KnowledgeMap> {
    load_map(path).with_context(|| format!("loading map {}", path.display()))
}

fn run_build(args: BuildArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg: BuildConfig = config::load(args.config.as_deref())?;
    let som = &mut cfg.som;
    if let Some(s) = seed {
        som.seed = s;
    }
    macro_rules! set {
        ($($flag:ident => $target:expr),*) => { $(if let Some(v) = args.$flag { $target = v; })* };
    }
    set!(initial_dim => som.initial_dim, max_dim => som.max_dim, nodes_per_axis => som.nodes_per_axis,
         epochs_per_phase => som.epochs_per_phase, parallel_runs => som.parallel_runs,
         stability_threshold => som.stability_threshold, probe_size => som.probe_size,
         max_terms => cfg.vocabulary.max_terms);
    let log = args.log.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".log.jsonl");
        PathBuf::from(p)
    });
    let summary = pipeline::build_to_file(&args.corpus, &cfg, &args.out, Some(&log))?;
    print_json(&summary)
}

fn run_query(map_path: &Path, q: QueryCommand) -> Result<()> {
    let map = open_map(map_path)?;
    match q {
        QueryCommand::Neighbors { id, coords, k } => {
            let out = match (id, coords) {
                (Some(id), _) => map.neighbors(NeighborQuery::Id(&id), k)?,
                (None, Some(c)) => {
                    let c = parse_coords(&c).map_err(anyhow::Error::msg)?;
                    map.neighbors(NeighborQuery::Coords(&c), k)?
                }
                (None, None) => unreachable!("clap requires one of id or coords"),
            };
            print_json(&out)
        }
        QueryCommand::Relevance { a, b } => {
            let distance = map.relevance(&a, &b)?;
            print_json(&service::Relevance { a, b, distance })
        }
        QueryCommand::Locate { text, text_file } => {
            let text = match (text, text_file) {
                (Some(t), _) => t,
                (None, Some(p)) => std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                (None, None) => unreachable!("clap requires one of text or text_file"),
            };
            print_json(&service::Located {
                coords: map.locate(&text)?,
            })
        }
        QueryCommand::View { dim } => print_json(&map.project_to_view(dim)?),
        QueryCommand::Export => {
            println!("{}", to_debug_json(&map)?);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct JlOutput {
    m: u64,
    epsilon: f64,
    min_dimension: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

fn run_dims(cmd: DimsCommand) -> Result<()> {
    match cmd {
        DimsCommand::Jl { m, epsilon } => {
            let min_dimension = jl_min_dimension(JlQuery { m, epsilon })?;
            print_json(&JlOutput {
                m,
                epsilon,
                min_dimension,
                note: pipeline::jl_note(m, epsilon, min_dimension),
            })
        }
        DimsCommand::Pca {
            corpus,
            threshold,
            config: cfg_path,
        } => {
            let cfg: BuildConfig = config::load(cfg_path.as_deref())?;
            let corpus = ingest_corpus(
                &corpus,
                &IngestConfig {
                    vocabulary: cfg.vocabulary,
                },
            )
            .with_context(|| format!("ingesting corpus {}", corpus.display()))?;
            print_json(&intrinsic_dimension_pca(&corpus.dense_vectors(), threshold)?)
        }
    }
}

fn run_decode(cmd: DecodeCommand, seed: Option<u64>) -> Result<()> {
    match cmd {
        DecodeCommand::Run { map, config: c, out_dir } => {
            let mut cfg: ProtocolRunConfig = config::load(c.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let map = open_map(&map)?;
            let (decoder, log, outcome) = pipeline::protocol_run(&map, &cfg)?;
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                pipeline::write_jsonl(&log.steps, &dir.join("protocol.jsonl"))?;
                std::fs::write(dir.join("protocol_log.json"), serde_json::to_string(&log)?)?;
                std::fs::write(dir.join("decoder.json"), serde_json::to_string(&decoder)?)?;
                std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&outcome)?)?;
            }
            print_json(&outcome)
        }
        DecodeCommand::Pretrain { config: c, out_dir } => {
            let mut cfg: PretrainRunConfig = config::load(c.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let summary = pipeline::pretrain_run(&cfg, &out_dir)?;
            print!("{}", pipeline::summary_table(&summary));
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build(args) => run_build(args, cli.seed),
        Command::Query { map, query } => run_query(&map, query),
        Command::Dims(cmd) => run_dims(cmd),
        Command::DecodeSim(cmd) => run_decode(cmd, cli.seed),
        Command::Serve { map, bind } => {
            let state = ServiceState::new(open_map(&map)?)?;
            let addr = service::bind_address(bind.as_deref());
            tokio::runtime::Runtime::new()?.block_on(service::serve(state, &addr))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", ErrorRecord::from_anyhow(&e).to_json());
            ExitCode::FAILURE
        }
    }
}
