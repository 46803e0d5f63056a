use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kmse::harness::{load_pairs, question_for, run_benchmark, BenchConfig, SessionClients, SharedClient};
use kmse::kb::{build_kb, load_kb, save_kb, Describer, LlmDescriber, MockDescriber, DEFAULT_MIN_COUNT};
use kmse::llm::{ChatClient, ChatParams, MockBook, OpenAiClient, OpenAiConfig, TokenBucket};
use kmse::scorer::{evaluate_pairs, load_checkpoint, save_checkpoint, train, ScorerConfig};
use kmse::search::{ElucidationQuestion, Engine, ImageDir, SearchConfig, StructureImages};

type Failure = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "kmse", version, about = "Molecular structure elucidation by scorer-guided tree search over an LLM")]
struct Cli {
    /// Log level: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or embed a substructure knowledge base.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Train or evaluate the molecule-spectrum scorer.
    #[command(subcommand)]
    Scorer(ScorerCommand),
    /// Write one question file per molecule with simulated spectra.
    Simulate(SimulateArgs),
    /// Solve one question.
    Elucidate(ElucidateArgs),
    /// Run every question of a dataset directory and write a metric report.
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum KbCommand {
    Build {
        /// One SMILES per line.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
        min_count: usize,
        #[arg(long, value_enum, default_value_t = DescriberKind::Mock)]
        describer: DescriberKind,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Store every record's embedding under a checkpoint.
    Embed {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DescriberKind {
    Llm,
    Mock,
}

#[derive(Subcommand)]
enum ScorerCommand {
    Train {
        /// Pair file: JSON Lines `{"smiles", "cnmr", "hnmr"}`, bare SMILES, or `SMILES<TAB>C-NMR<TAB>H-NMR`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0.07)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// JSON scorer config; command-line values override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for spectra simulated from bare SMILES lines.
        #[arg(long, default_value_t = 0)]
        sim_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Matched and mismatched score means and recall@1 on a pair file.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        sim_seed: u64,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// One SMILES per line.
    #[arg(long)]
    smiles: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Question ids are `<prefix><line number>`.
    #[arg(long, default_value = "q")]
    prefix: String,
}

#[derive(Args)]
struct LlmArgs {
    /// OpenAI-compatible base URL or completions URL; the key is read from LLM_API_KEY.
    #[arg(long, default_value = "https://api.openai.com/v1")]
    endpoint: String,
    #[arg(long, default_value = "gpt-4o-mini")]
    model: String,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1.0)]
    top_p: f64,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    /// Shared limit on requests per second.
    #[arg(long)]
    rate: Option<f64>,
}

impl LlmArgs {
    fn params(&self) -> ChatParams {
        ChatParams { model: self.model.clone(), temperature: self.temperature, top_p: self.top_p }
    }

    fn client(&self) -> Result<OpenAiClient, Failure> {
        let mut cfg = OpenAiConfig::from_env(&self.endpoint);
        cfg.timeout = Duration::from_secs(self.timeout_secs);
        cfg.max_retries = self.max_retries;
        cfg.rate_limit = self.rate.map(|r| Arc::new(TokenBucket::new(r.max(1.0), r)));
        Ok(OpenAiClient::new(cfg)?)
    }
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 8)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    topk: usize,
    #[arg(long, default_value_t = 2)]
    max_children: usize,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
}

impl SearchArgs {
    fn config(&self) -> SearchConfig {
        SearchConfig {
            iterations: self.iters,
            top_k: self.topk,
            max_children: self.max_children,
            c: self.c,
            epsilon: self.epsilon,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct ElucidateArgs {
    #[arg(long)]
    question: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    llm: LlmArgs,
    /// Scripted offline responses instead of the endpoint.
    #[arg(long)]
    mock: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Directory of `<canonical SMILES>.png` structure images for critiques.
    #[arg(long)]
    images: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    llm: LlmArgs,
    #[arg(long)]
    mock: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    /// Trace directory; defaults to `traces/` next to the report.
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    #[arg(long)]
    images: Option<PathBuf>,
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("value serializes"));
}

fn kb_command(cmd: KbCommand) -> Result<(), Failure> {
    match cmd {
        KbCommand::Build { corpus, min_count, describer, out, llm } => {
            let text = std::fs::read_to_string(&corpus)?;
            let client;
            let describer: Box<dyn Describer + '_> = match describer {
                DescriberKind::Mock => Box::new(MockDescriber),
                DescriberKind::Llm => {
                    client = llm.client()?;
                    Box::new(LlmDescriber { client: &client, params: llm.params() })
                }
            };
            let kb = build_kb(text.lines(), min_count, describer.as_ref())?;
            save_kb(&kb, &out)?;
            eprintln!("{} records from {} molecules written to {}", kb.len(), kb.meta.molecules, out.display());
        }
        KbCommand::Embed { kb, ckpt, out } => {
            let mut base = load_kb(&kb)?;
            base.embed(&load_checkpoint(&ckpt)?)?;
            save_kb(&base, &out)?;
            eprintln!("{} records embedded", base.len());
        }
    }
    Ok(())
}

fn scorer_command(cmd: ScorerCommand) -> Result<(), Failure> {
    let tokens = |pairs: Vec<kmse::harness::Pair>| {
        pairs
            .into_iter()
            .map(|p| {
                let t = p.tokens();
                (p.molecule, t)
            })
            .collect::<Vec<_>>()
    };
    match cmd {
        ScorerCommand::Train { data, val, epochs, tau, seed, learning_rate, batch_size, config, sim_seed, out } => {
            let mut cfg: ScorerConfig = match config {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => ScorerConfig::default(),
            };
            cfg.epochs = epochs;
            cfg.tau = tau;
            cfg.seed = seed;
            cfg.learning_rate = learning_rate.unwrap_or(cfg.learning_rate);
            cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
            let train_set = tokens(load_pairs(&data, sim_seed)?);
            let val_set = tokens(load_pairs(&val, sim_seed)?);
            let outcome = train(&train_set, &val_set, &cfg)?;
            save_checkpoint(&outcome.checkpoint, &out)?;
            print_json(&serde_json::json!({
                "checkpoint": out,
                "id": outcome.checkpoint.id(),
                "best_epoch": outcome.best_epoch,
                "best_val_loss": outcome.checkpoint.best_val_loss(),
                "initial_train_loss": outcome.initial_train_loss,
                "history": outcome.history,
            }));
        }
        ScorerCommand::Eval { ckpt, data, sim_seed } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let eval = evaluate_pairs(&ckpt, &tokens(load_pairs(&data, sim_seed)?))?;
            print_json(&serde_json::json!({
                "checkpoint": ckpt.id(),
                "pairs": eval.pairs,
                "matched_mean": eval.matched_mean,
                "mismatched_mean": eval.mismatched_mean,
                "separation": eval.separation(),
                "recall_at_1": eval.recall_at_1,
            }));
        }
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let pairs = load_pairs(&args.smiles, args.seed)?;
    std::fs::create_dir_all(&args.out_dir)?;
    for (i, pair) in pairs.iter().enumerate() {
        let id = format!("{}{:04}", args.prefix, i + 1);
        let q = question_for(&id, pair);
        std::fs::write(args.out_dir.join(format!("{id}.json")), serde_json::to_string_pretty(&q)?)?;
    }
    eprintln!("{} questions written to {}", pairs.len(), args.out_dir.display());
    Ok(())
}

fn image_dir(images: &Option<PathBuf>) -> Option<ImageDir> {
    images.clone().map(ImageDir)
}

fn elucidate(args: ElucidateArgs) -> Result<(), Failure> {
    let question = ElucidationQuestion::load(&args.question)?;
    let kb = load_kb(&args.kb)?;
    let ckpt = load_checkpoint(&args.ckpt)?;
    let images = image_dir(&args.images);
    let engine = Engine {
        kb: &kb,
        ckpt: &ckpt,
        params: args.llm.params(),
        images: images.as_ref().map(|i| i as &dyn StructureImages),
    };
    let client: Box<dyn ChatClient> = match &args.mock {
        Some(path) => Box::new(MockBook::load(path)?.session(&question.id)?),
        None => Box::new(args.llm.client()?),
    };
    let result = engine.run(&question, client.as_ref(), &args.search.config());
    let trace = match &result {
        Ok(out) => Some(&out.trace),
        Err(e) => e.partial_trace(),
    };
    if let (Some(path), Some(trace)) = (&args.trace, trace) {
        trace.save(path)?;
    }
    let out = result?;
    print_json(&serde_json::json!({
        "id": question.id,
        "smiles": out.smiles,
        "reward": out.reward,
        "node": out.node,
        "nodes": out.trace.nodes.len(),
        "tokens": out.trace.total_tokens(),
    }));
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let kb = load_kb(&args.kb)?;
    let ckpt = load_checkpoint(&args.ckpt)?;
    let images = image_dir(&args.images);
    let engine = Engine {
        kb: &kb,
        ckpt: &ckpt,
        params: args.llm.params(),
        images: images.as_ref().map(|i| i as &dyn StructureImages),
    };
    let traces = args.traces.clone().unwrap_or_else(|| args.report.parent().unwrap_or(Path::new(".")).join("traces"));
    let cfg = BenchConfig {
        search: args.search.config(),
        concurrency: args.concurrency,
        report: Some(args.report.clone()),
        traces: Some(traces),
    };
    let book;
    let client;
    let clients: &dyn SessionClients = match &args.mock {
        Some(path) => {
            book = MockBook::load(path)?;
            &book
        }
        None => {
            client = args.llm.client()?;
            &SharedClient(&client)
        }
    };
    let report = run_benchmark(&args.dataset, &engine, clients, &cfg)?;
    print_json(&report.aggregates);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Kb(cmd) => kb_command(cmd),
        Command::Scorer(cmd) => scorer_command(cmd),
        Command::Simulate(args) => simulate(args),
        Command::Elucidate(args) => elucidate(args),
        Command::Bench(args) => bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
