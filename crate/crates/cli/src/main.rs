//! `qedb`: build a question-answer explanation database and query it.
//!
//! Every command writes JSON lines to standard output. Exit codes: 0 on
//! success, 1 for usage errors, 2 for bad input data, 3 for store errors.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qedb::compose::{
    enumerate_bridge_joins, frame_query, related_entities, shared_answer_query, BridgeMode,
};
use qedb::graph::{graph_stats, load_store, read_export, save_store, write_export};
use qedb::ingest::{load_corpus, Strictness};
use qedb::model::EntityId;
use qedb::retrieve::{answer_one_hop, Bm25Index};
use qedb::{pipeline, Config, QedbGraph};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "qedb", version, about = "Build and query a question-answer explanation database")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "QEDB_STORE")]
    store: Option<PathBuf>,

    /// TOML file with threshold settings; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// One flag per config field.
#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    min_link_confidence: Option<f64>,
    #[arg(long, global = true)]
    min_match_similarity: Option<f64>,
    #[arg(long, global = true)]
    min_align_conf: Option<f64>,
    #[arg(long, global = true)]
    max_bridge_popularity: Option<u64>,
    #[arg(long, global = true)]
    distinctness_threshold: Option<f64>,
    #[arg(long, global = true)]
    bm25_k1: Option<f64>,
    #[arg(long, global = true)]
    bm25_b: Option<f64>,
    #[arg(long, global = true, value_enum)]
    strictness: Option<StrictnessArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrictnessArg {
    Strict,
    Lenient,
}

#[derive(Subcommand)]
enum Command {
    /// Build a store from passages, QA records and entity links.
    Build {
        #[arg(long, required_unless_present = "from_export")]
        passages: Option<PathBuf>,
        #[arg(long, required_unless_present = "from_export")]
        qa: Option<PathBuf>,
        #[arg(long)]
        links: Option<PathBuf>,
        /// Rebuild from an `export` dump instead of raw inputs.
        #[arg(long, conflicts_with_all = ["passages", "qa", "links"])]
        from_export: Option<PathBuf>,
        /// Output directory; defaults to --store.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-hop bridge questions.
    Join {
        /// Allow q2 to have several question references.
        #[arg(long)]
        multi_ref_q2: bool,
        /// Allow questions with several answer entities.
        #[arg(long)]
        multi_answer: bool,
        /// Allow year-like bridge entities.
        #[arg(long)]
        allow_years: bool,
        /// Keep pairs whose q2 answer occurs in q1.
        #[arg(long)]
        allow_answer_in_q1: bool,
        /// Join on normalized answer and reference text instead of entities.
        #[arg(long)]
        text_bridges: bool,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Entities co-occurring as question references with an answer entity.
    Related {
        #[arg(long)]
        entity: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Questions in which an entity is a reference, grouped by label.
    Frame {
        #[arg(long)]
        entity: String,
    },
    /// Pairs of distinct questions sharing an answer entity.
    Type2 {
        #[arg(long)]
        entity: String,
    },
    /// Answer a question by retrieving similar stored questions.
    Ask {
        query: String,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Summary counts for the store.
    Stats,
    /// Lossless line-delimited dump of the store.
    Export {
        /// Write here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl ToString) -> Failure {
    Failure { code: 1, message: message.to_string() }
}

fn data(message: impl ToString) -> Failure {
    Failure { code: 2, message: message.to_string() }
}

fn store_err(message: impl ToString) -> Failure {
    Failure { code: 3, message: message.to_string() }
}

/// Output errors; a closed pipe downstream is not a failure.
fn io_failure(e: io::Error) -> Failure {
    let code = if e.kind() == io::ErrorKind::BrokenPipe { 0 } else { 3 };
    Failure { code, message: e.to_string() }
}

fn resolve_config(path: Option<&Path>, o: &Overrides) -> Result<Config, Failure> {
    let mut config = match path {
        Some(p) => Config::load(p).map_err(usage)?,
        None => Config::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = o.$field { config.$field = v; })*
        };
    }
    apply!(
        min_link_confidence,
        min_match_similarity,
        min_align_conf,
        max_bridge_popularity,
        distinctness_threshold,
        bm25_k1,
        bm25_b
    );
    if let Some(s) = o.strictness {
        config.strictness = match s {
            StrictnessArg::Strict => Strictness::Strict,
            StrictnessArg::Lenient => Strictness::Lenient,
        };
    }
    config.validate().map_err(usage)?;
    Ok(config)
}

fn store_path(cli: &Cli) -> Result<&Path, Failure> {
    cli.store
        .as_deref()
        .ok_or_else(|| usage("no store given; pass --store or set QEDB_STORE"))
}

fn open_store(cli: &Cli) -> Result<QedbGraph, Failure> {
    load_store(store_path(cli)?).map_err(store_err)
}

fn emit<T: Serialize>(out: &mut impl Write, item: &T) -> Result<(), Failure> {
    serde_json::to_writer(&mut *out, item).map_err(|e| io_failure(e.into()))?;
    out.write_all(b"\n").map_err(io_failure)
}

fn build(
    cli: &Cli,
    config: &Config,
    inputs: (&Option<PathBuf>, &Option<PathBuf>, &Option<PathBuf>, &Option<PathBuf>),
    out_dir: Option<&Path>,
    out: &mut impl Write,
) -> Result<(), Failure> {
    let out_dir = match out_dir {
        Some(p) => p,
        None => store_path(cli)?,
    };
    let (passages, qa, links, from_export) = inputs;
    let (graph, load) = match from_export {
        Some(path) => {
            let file = File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
            let graph = read_export(BufReader::new(file))
                .map_err(|e| data(format!("{}: {e}", path.display())))?;
            (graph, None)
        }
        None => {
            let (passages, qa) = (passages.as_ref().expect("required without --from-export"), qa.as_ref().expect("required without --from-export"));
            let links = match links {
                Some(p) if p.exists() => Some(p.as_path()),
                Some(p) => {
                    eprintln!("warning: links file {} not found; building without entities", p.display());
                    None
                }
                None => {
                    eprintln!("warning: no links file; building without entities");
                    None
                }
            };
            let corpus = load_corpus(passages, qa, links, config.strictness).map_err(data)?;
            for d in &corpus.diagnostics {
                eprintln!("warning: {d}");
            }
            let graph = pipeline::build(&corpus, config).map_err(data)?;
            (graph, Some(corpus.stats))
        }
    };
    save_store(&graph, out_dir).map_err(store_err)?;
    emit(out, &json!({ "store": out_dir, "load": load, "graph": graph_stats(&graph) }))
}

fn run(cli: &Cli, out: &mut impl Write) -> Result<(), Failure> {
    let config = resolve_config(cli.config.as_deref(), &cli.overrides)?;
    match &cli.command {
        Command::Build {
            passages,
            qa,
            links,
            from_export,
            out: out_dir,
        } => build(cli, &config, (passages, qa, links, from_export), out_dir.as_deref(), out),
        Command::Join {
            multi_ref_q2,
            multi_answer,
            allow_years,
            allow_answer_in_q1,
            text_bridges,
            limit,
        } => {
            let graph = open_store(cli)?;
            let mut c = config.join_constraints();
            c.single_ref_q2 = !multi_ref_q2;
            c.single_answer = !multi_answer;
            c.bridge_not_year = !allow_years;
            c.q2_answer_not_in_q1 = !allow_answer_in_q1;
            if *text_bridges {
                c.mode = BridgeMode::Text;
            }
            for join in enumerate_bridge_joins(&graph, c).take(limit.unwrap_or(usize::MAX)) {
                emit(out, &join)?;
            }
            Ok(())
        }
        Command::Related { entity, top } => {
            let graph = open_store(cli)?;
            for r in related_entities(&graph, &EntityId::new(entity.as_str()), *top, config.min_link_confidence) {
                emit(out, &r)?;
            }
            Ok(())
        }
        Command::Frame { entity } => {
            let graph = open_store(cli)?;
            for group in frame_query(&graph, &EntityId::new(entity.as_str())) {
                emit(out, &group)?;
            }
            Ok(())
        }
        Command::Type2 { entity } => {
            let graph = open_store(cli)?;
            let entity = EntityId::new(entity.as_str());
            for pair in shared_answer_query(&graph, &entity, config.distinctness_threshold) {
                emit(out, &pair)?;
            }
            Ok(())
        }
        Command::Ask { query, top } => {
            let graph = open_store(cli)?;
            let index = Bm25Index::from_graph(&graph, config.bm25_params());
            for answer in answer_one_hop(&graph, &index, query, *top) {
                emit(out, &answer)?;
            }
            Ok(())
        }
        Command::Stats => {
            let graph = open_store(cli)?;
            emit(out, &graph_stats(&graph))
        }
        Command::Export { output } => {
            let graph = open_store(cli)?;
            match output {
                Some(path) => {
                    let file = File::create(path).map_err(|e| store_err(format!("{}: {e}", path.display())))?;
                    let mut w = BufWriter::new(file);
                    write_export(&graph, &mut w).map_err(io_failure)?;
                    w.flush().map_err(io_failure)
                }
                None => write_export(&graph, out).map_err(io_failure),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = run(&cli, &mut out).and_then(|()| out.flush().map_err(io_failure));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) if f.code == 0 => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
