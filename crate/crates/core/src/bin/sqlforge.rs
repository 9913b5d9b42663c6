use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sqlforge::catalog::{DatabaseHandle, SchemaCatalog};
use sqlforge::generation::{nversion_generate, render_schema_context, GeneratorKind, RenderedSchemaContext};
use sqlforge::llm::TokenLedger;
use sqlforge::pipeline::{
    bench, ingest_dataset, render_table, sweep, write_bench, BenchReport, DatasetFormat, Pipeline, PipelineConfig,
};
use sqlforge::toolchain::{check_all, RevisionContext};
use sqlforge::value_index::{profile_columns, RetrievedValuesMap, ValueIndex};

#[derive(Parser)]
#[command(name = "sqlforge", version, about = "Training-free text-to-SQL over SQLite databases")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    theta_conf: Option<f64>,
    #[arg(long, global = true)]
    theta_val: Option<f64>,
    /// Samples per LLM sub-task.
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Values retrieved per TEXT column.
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Scripted backend file or directory; selects the scripted backend.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Chat-completions endpoint; selects the remote backend.
    #[arg(long, global = true)]
    backend_url: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    #[arg(long, global = true)]
    fewshot: Option<PathBuf>,
    #[arg(long, global = true)]
    timeout_secs: Option<u64>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct Question {
    /// SQLite database file.
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    question: String,
    #[arg(long, default_value = "")]
    hint: String,
    /// Prebuilt value index directory.
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Profile TEXT columns and build the value index.
    Index {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve values and link the schema for one question.
    Link(Question),
    /// Produce the initial candidate pool for one question.
    Generate(Question),
    /// Run every checker on a query without revision.
    Check {
        #[arg(long)]
        db: PathBuf,
        #[arg(long, conflicts_with = "sql_file", required_unless_present = "sql_file")]
        sql: Option<String>,
        #[arg(long)]
        sql_file: Option<PathBuf>,
    },
    /// Answer one question end to end.
    Ask {
        #[command(flatten)]
        q: Question,
        /// Write every intermediate artifact as JSON here.
        #[arg(long)]
        artifacts: Option<PathBuf>,
    },
    /// Evaluate a BIRD or Spider style dataset.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "bird")]
        format: DatasetFormat,
        /// Directory holding `<db_id>/<db_id>.sqlite`.
        #[arg(long)]
        db_root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Questions run concurrently.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Re-score recorded decisions across confidence thresholds.
    Sweep {
        /// `report.json` written by `bench`.
        #[arg(long)]
        report: PathBuf,
        /// Comma-separated thresholds; defaults to 0.0, 0.1, ..., 1.0.
        #[arg(long, value_delimiter = ',')]
        thetas: Vec<f64>,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Run(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.to_string())
    }
}

fn config_error(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn load_config(g: &Global) -> Result<PipelineConfig, Failure> {
    let mut c = match &g.config {
        Some(p) => PipelineConfig::from_file(p).map_err(config_error)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = g.theta_conf {
        c.theta_conf = v;
    }
    if let Some(v) = g.theta_val {
        c.theta_val = v;
    }
    if let Some(v) = g.budget {
        c.budget = v;
    }
    if let Some(v) = g.temperature {
        c.temperature = v;
    }
    if let Some(v) = g.top_k {
        c.top_k_values = v;
    }
    if let Some(v) = g.timeout_secs {
        c.timeout_secs = v;
    }
    if let Some(p) = &g.script {
        c.backend.kind = sqlforge::pipeline::BackendKind::Scripted;
        c.backend.script = Some(p.clone());
    }
    if let Some(u) = &g.backend_url {
        c.backend.kind = sqlforge::pipeline::BackendKind::Remote;
        c.backend.url = Some(u.clone());
    }
    if let Some(m) = &g.model {
        c.backend.model = Some(m.clone());
    }
    if let Some(p) = &g.templates {
        c.template_dir = Some(p.clone());
    }
    if let Some(p) = &g.fewshot {
        c.fewshot_path = Some(p.clone());
    }
    c.validate().map_err(config_error)?;
    Ok(c)
}

fn pipeline(g: &Global) -> Result<Pipeline, Failure> {
    Pipeline::new(load_config(g)?).map_err(config_error)
}

fn print_json<T: Serialize>(v: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), Failure> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Index { db, out } => {
            let config = load_config(&cli.global)?;
            let embedder = config.build_embedder().map_err(config_error)?;
            let db = DatabaseHandle::new(db);
            let catalog = SchemaCatalog::load(&db)?;
            let index = ValueIndex::build(&db, profile_columns(&db, &catalog)?, embedder.as_ref())?;
            index.save(&out)?;
            let values: usize = index.shards.iter().map(|s| s.len()).sum();
            eprintln!("indexed {} column(s), {values} value(s) into {}", index.shards.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Link(q) => {
            let p = pipeline(&cli.global)?;
            let dbc = p.open_database(&q.db, q.index.as_deref())?;
            let ledger = TokenLedger::new();
            let (_, values, warnings) = p.retrieve(&q.question, &q.hint, &dbc, &ledger);
            for w in warnings {
                log::warn!("{w}");
            }
            print_json(&p.link(&q.question, &q.hint, &dbc, &values, &ledger)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate(q) => {
            let p = pipeline(&cli.global)?;
            let dbc = p.open_database(&q.db, q.index.as_deref())?;
            let ledger = TokenLedger::new();
            let (_, values, _) = p.retrieve(&q.question, &q.hint, &dbc, &ledger);
            let link = p.link(&q.question, &q.hint, &dbc, &values, &ledger)?;
            let out = nversion_generate(
                &q.question,
                &q.hint,
                &link.linked,
                &dbc.catalog,
                &values,
                &p.fewshot,
                p.config.fewshot_n,
                &p.gateway,
                &ledger,
                p.config.sampling(),
                &GeneratorKind::ALL,
            )?;
            print_json(&out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { db, sql, sql_file } => {
            let config = load_config(&cli.global)?;
            let sql = match (sql, sql_file) {
                (Some(s), _) => s,
                (None, Some(f)) => std::fs::read_to_string(f)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let db = DatabaseHandle::new(db);
            let catalog = SchemaCatalog::load(&db)?;
            let schema: RenderedSchemaContext =
                render_schema_context(&sqlforge::generation::full_subset(&catalog), &catalog, &RetrievedValuesMap::default());
            let ctx = RevisionContext { question: "", hint: "", schema: &schema, catalog: &catalog, db: &db, timeout: config.timeout() };
            let reports = check_all(sql.trim(), &ctx);
            let mut clean = true;
            for r in &reports {
                match (&r.directive, &r.warning) {
                    (Some(d), _) => {
                        clean = false;
                        println!("{d}");
                    }
                    (None, Some(w)) => println!("[{}] warning: {w}", r.checker),
                    (None, None) => println!("[{}] ok", r.checker),
                }
            }
            Ok(if clean { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Ask { q, artifacts } => {
            let p = pipeline(&cli.global)?;
            let dbc = p.open_database(&q.db, q.index.as_deref())?;
            let ledger = TokenLedger::new();
            let run = p.run_question(&q.question, &q.hint, &dbc, &ledger)?;
            if let Some(dir) = artifacts {
                std::fs::create_dir_all(&dir)?;
                write_json(&dir.join("retrieved_values.json"), &run.retrieved)?;
                write_json(&dir.join("linked_schema.json"), &run.link)?;
                write_json(&dir.join("initial_candidates.json"), &run.generation)?;
                write_json(&dir.join("check_reports.json"), &run.chains)?;
                write_json(&dir.join("selection.json"), &run.decision)?;
                write_json(&dir.join("calls.json"), &ledger.records())?;
            }
            for w in &run.warnings {
                log::warn!("{w}");
            }
            println!("{}", run.final_sql());
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { dataset, format, db_root, out, jobs } => {
            let mut config = load_config(&cli.global)?;
            if let Some(j) = jobs {
                config.case_parallelism = j.max(1);
            }
            let p = Pipeline::new(config).map_err(config_error)?;
            let cases = ingest_dataset(&dataset, format, &db_root).map_err(config_error)?;
            let outcome = bench(&cases, &p);
            write_bench(&out, &outcome)?;
            print!("{}", render_table(&outcome.report));
            Ok(if outcome.report.aggregates.failed > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Sweep { report, thetas } => {
            let thetas = if thetas.is_empty() { (0..=10).map(|i| i as f64 / 10.0).collect() } else { thetas };
            if let Some(t) = thetas.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                return Err(Failure::Config(format!("threshold {t} is outside [0, 1]")));
            }
            let text = std::fs::read_to_string(&report)?;
            let report: BenchReport = serde_json::from_str(&text)?;
            let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |p| format!("{p:.2}%"));
            println!("{:>6} {:>10} {:>10} {:>10}", "theta", "shortcut", "EX", "unresolved");
            for row in sweep(&report, &thetas) {
                println!("{:>6.2} {:>10} {:>10} {:>10}", row.theta_conf, pct(row.shortcut_rate), pct(row.ex), row.unresolved);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
