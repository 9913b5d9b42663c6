//! End-to-end orchestration, dataset ingest and benchmark evaluation.

mod bench;
mod config;
mod dataset;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bench::{
    bench, render_table, sweep, write_bench, Aggregates, BenchOutcome, BenchReport, CaseArtifact, CaseReport, CaseStatus,
    SweepRow, REPORT_VERSION,
};
pub use config::{load_script, BackendKind, BackendSettings, ConfigError, EmbedderKind, EmbedderSettings, PipelineConfig};
pub use dataset::{ingest_dataset, parse_dataset, resolve_database, BenchCase, DatasetError, DatasetFormat};

use crate::catalog::{CatalogError, DatabaseHandle, SchemaCatalog};
use crate::executor::{execute, ExecutionOutcome};
use crate::generation::{nversion_generate, FewShotError, FewShotStore, GenerationError, GeneratorKind, NVersionOutput};
use crate::llm::{Gateway, TokenLedger};
use crate::schema_link::{robust_link, LinkError, LinkInputs, LinkOutcome};
use crate::selection::{cluster_by_result, select_final, AdjudicationContext, SelectionDecision, SelectionError};
use crate::sync::parallel_map;
use crate::toolchain::{run_chain, ChainOutcome, RevisionContext};
use crate::value_index::{
    extract_keywords, profile_columns, retrieve_values, Embedder, IndexError, KeywordSet, RetrievedValuesMap, ValueIndex,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    FewShot(#[from] FewShotError),
    #[error("schema linking: {0}")]
    Link(#[from] LinkError),
    #[error("generation: {0}")]
    Generation(#[from] GenerationError),
    #[error("selection: {0}")]
    Selection(#[from] SelectionError),
}

impl PipelineError {
    /// Short stage label for failure records.
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Catalog(_) | PipelineError::Index(_) => "database",
            PipelineError::FewShot(_) => "fewshot",
            PipelineError::Link(_) => "schema_linking",
            PipelineError::Generation(_) => "generation",
            PipelineError::Selection(_) => "selection",
        }
    }
}

/// One database with its catalog and value index.
pub struct DatabaseContext {
    pub db: DatabaseHandle,
    pub catalog: SchemaCatalog,
    pub index: ValueIndex,
}

impl DatabaseContext {
    /// Loads the index from `index_dir` when it holds a manifest, otherwise builds it in memory.
    pub fn open(db: DatabaseHandle, embedder: &dyn Embedder, index_dir: Option<&Path>) -> Result<Self, PipelineError> {
        let catalog = SchemaCatalog::load(&db)?;
        let index = match index_dir.filter(|d| d.join("manifest.json").is_file()) {
            Some(dir) => {
                let index = ValueIndex::load(dir)?;
                if index.embedder != embedder.name() || index.dimension != embedder.dimension() {
                    return Err(IndexError::Manifest(format!(
                        "index at {} was built with {} ({}-d), configured embedder is {} ({}-d)",
                        dir.display(),
                        index.embedder,
                        index.dimension,
                        embedder.name(),
                        embedder.dimension()
                    ))
                    .into());
                }
                index
            }
            None => ValueIndex::build(&db, profile_columns(&db, &catalog)?, embedder)?,
        };
        Ok(DatabaseContext { db, catalog, index })
    }
}

/// Every intermediate artifact of one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRun {
    pub keywords: Vec<String>,
    pub retrieved: RetrievedValuesMap,
    pub link: LinkOutcome,
    pub generation: NVersionOutput,
    /// One chain per initial candidate, in candidate order.
    pub chains: Vec<ChainOutcome>,
    /// Execution of each revised candidate.
    pub outcomes: Vec<ExecutionOutcome>,
    pub decision: SelectionDecision,
    pub warnings: Vec<String>,
}

impl QuestionRun {
    pub fn final_sql(&self) -> &str {
        self.decision.final_sql()
    }

    pub fn revision_count(&self) -> usize {
        self.chains.iter().map(|c| c.candidate.revisions.len()).sum()
    }
}

/// Configured backends plus shared resources.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub gateway: Gateway,
    pub embedder: Arc<dyn Embedder>,
    pub fewshot: FewShotStore,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let gateway = config.build_gateway()?;
        let embedder = config.build_embedder()?;
        let fewshot = match &config.fewshot_path {
            Some(p) => FewShotStore::load(p)?,
            None => FewShotStore::default(),
        };
        Ok(Pipeline { config, gateway, embedder, fewshot })
    }

    pub fn with_parts(config: PipelineConfig, gateway: Gateway, embedder: Arc<dyn Embedder>, fewshot: FewShotStore) -> Self {
        Pipeline { config, gateway, embedder, fewshot }
    }

    /// Index directory for a database id, when one is configured.
    pub fn index_dir_for(&self, db_id: &str) -> Option<PathBuf> {
        self.config.index_dir.as_ref().map(|d| d.join(db_id))
    }

    pub fn open_database(&self, path: &Path, index_dir: Option<&Path>) -> Result<DatabaseContext, PipelineError> {
        DatabaseContext::open(DatabaseHandle::new(path), self.embedder.as_ref(), index_dir)
    }

    /// Keywords and retrieved values; failures degrade to an empty map with a warning.
    pub fn retrieve(&self, question: &str, hint: &str, dbc: &DatabaseContext, ledger: &TokenLedger) -> (KeywordSet, RetrievedValuesMap, Vec<String>) {
        let mut warnings = Vec::new();
        let keywords = match extract_keywords(question, hint, &self.gateway, ledger, self.config.budget, self.config.temperature) {
            Ok(k) => k,
            Err(e) => {
                warnings.push(format!("keyword extraction failed, continuing without values: {e}"));
                KeywordSet::new()
            }
        };
        let values = match retrieve_values(&dbc.index, &keywords, self.embedder.as_ref(), self.config.top_k_values) {
            Ok(r) => {
                warnings.extend(r.warnings);
                r.values
            }
            Err(e) => {
                warnings.push(format!("value retrieval failed, continuing without values: {e}"));
                RetrievedValuesMap::default()
            }
        };
        (keywords, values, warnings)
    }

    pub fn link(&self, question: &str, hint: &str, dbc: &DatabaseContext, values: &RetrievedValuesMap, ledger: &TokenLedger) -> Result<LinkOutcome, PipelineError> {
        let inputs = LinkInputs { question, hint, catalog: &dbc.catalog, values };
        Ok(robust_link(&inputs, &self.fewshot, &self.gateway, ledger, self.config.link_config())?)
    }

    /// Retrieval, linking, generation, revision and selection for one question.
    pub fn run_question(&self, question: &str, hint: &str, dbc: &DatabaseContext, ledger: &TokenLedger) -> Result<QuestionRun, PipelineError> {
        let cfg = &self.config;
        let (keywords, retrieved, mut warnings) = self.retrieve(question, hint, dbc, ledger);
        let link = self.link(question, hint, dbc, &retrieved, ledger)?;
        warnings.extend(link.warnings.iter().cloned());
        let generation = nversion_generate(
            question,
            hint,
            &link.linked,
            &dbc.catalog,
            &retrieved,
            &self.fewshot,
            cfg.fewshot_n,
            &self.gateway,
            ledger,
            cfg.sampling(),
            &GeneratorKind::ALL,
        )?;
        warnings.extend(generation.warnings.iter().cloned());
        let ctx = RevisionContext {
            question,
            hint,
            schema: &generation.context,
            catalog: &dbc.catalog,
            db: &dbc.db,
            timeout: cfg.timeout(),
        };
        let chains = parallel_map(&generation.candidates, cfg.chain_parallelism, |c| run_chain(c, &ctx, &self.gateway, ledger));
        for ch in &chains {
            warnings.extend(ch.warnings.iter().cloned());
        }
        let revised: Vec<_> = chains.iter().map(|c| c.candidate.clone()).collect();
        let outcomes = parallel_map(&revised, cfg.chain_parallelism, |c| execute(&c.sql, &dbc.db, cfg.timeout()));
        let clusters = cluster_by_result(&revised, &outcomes)?;
        let adj = AdjudicationContext { question, hint, schema: &generation.context.text };
        let decision = select_final(clusters, revised.len(), &adj, &self.gateway, ledger, cfg.selection_config())?;
        Ok(QuestionRun {
            keywords: keywords.as_slice().to_vec(),
            retrieved,
            link,
            generation,
            chains,
            outcomes,
            decision,
            warnings,
        })
    }
}

#[cfg(test)]
mod tests;
