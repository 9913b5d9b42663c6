//! Training-free text-to-SQL over SQLite databases.

pub mod catalog;
pub mod sql_ast;
pub mod llm;
pub mod sync;
pub mod value_index;
pub mod generation;
pub mod schema_link;
pub mod executor;
pub mod toolchain;
pub mod selection;
pub mod pipeline;

#[cfg(test)]
mod testutil;
