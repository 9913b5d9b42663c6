use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::catalog::SchemaCatalog;
use crate::llm::estimate_tokens;
use crate::sql_ast::{quote_ident, Ident, SchemaSubset};
use crate::value_index::RetrievedValuesMap;

/// Prompt-ready schema text for `{DATABASE_SCHEMA}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedSchemaContext {
    pub text: String,
}

impl RenderedSchemaContext {
    pub fn tokens(&self) -> u64 {
        estimate_tokens(&self.text)
    }
}

pub fn display_ident(name: &str) -> String {
    quote_ident(&Ident::new(name))
}

/// Python `repr` of a string.
pub fn python_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

pub fn python_list(items: &[&str]) -> String {
    let parts: Vec<String> = items.iter().map(|s| python_repr(s)).collect();
    format!("[{}]", parts.join(", "))
}

/// Renders the tables and columns of `subset` in catalog order as annotated DDL.
pub fn render_schema_context(
    subset: &SchemaSubset,
    catalog: &SchemaCatalog,
    values: &RetrievedValuesMap,
) -> RenderedSchemaContext {
    let mut text = String::new();
    for table in &catalog.tables {
        if !subset.tables.contains(&table.name) {
            continue;
        }
        let pk = catalog.primary_key(&table.name);
        let columns: Vec<_> = table.columns.iter().filter(|c| subset.contains_column(&table.name, &c.name)).collect();
        let mut lines = Vec::new();
        for col in &columns {
            let mut line = format!("{} {}", display_ident(&col.name), col.decl_type);
            if pk.len() == 1 && pk[0] == col.name {
                line.push_str(" PRIMARY KEY");
            }
            let mut notes = Vec::new();
            if !col.description.is_empty() {
                notes.push(col.description.replace('\n', " "));
            }
            notes.push(format!("Total count: {}, Distinct count: {}", col.stats.total_count, col.stats.distinct_count));
            let examples: Vec<&str> = values.get(&table.name, &col.name).iter().map(|v| v.value.as_str()).collect();
            if !examples.is_empty() {
                notes.push(format!("Value Examples: {}", python_list(&examples)));
            }
            lines.push((line, notes.join("; ")));
        }
        let mut tail = Vec::new();
        if pk.len() > 1 && pk.iter().all(|c| subset.contains_column(&table.name, c)) {
            let cols: Vec<String> = pk.iter().map(|c| display_ident(c)).collect();
            tail.push(format!("PRIMARY KEY ({})", cols.join(", ")));
        }
        for fk in catalog.foreign_keys_from(&table.name) {
            if subset.contains_column(&fk.from_table, &fk.from_column) && subset.contains_column(&fk.to_table, &fk.to_column) {
                tail.push(format!(
                    "FOREIGN KEY ({}) REFERENCES {}({})",
                    display_ident(&fk.from_column),
                    display_ident(&fk.to_table),
                    display_ident(&fk.to_column)
                ));
            }
        }
        let _ = writeln!(text, "CREATE TABLE {} (", display_ident(&table.name));
        let total = lines.len() + tail.len();
        let mut n = 0;
        for (line, note) in lines {
            n += 1;
            let comma = if n < total { "," } else { "" };
            let _ = writeln!(text, "    {line}{comma} -- {note}");
        }
        for line in tail {
            n += 1;
            let comma = if n < total { "," } else { "" };
            let _ = writeln!(text, "    {line}{comma}");
        }
        text.push_str(");\n\n");
    }
    let text = text.trim_end().to_string();
    RenderedSchemaContext { text }
}

/// Every table and column of the catalog.
pub fn full_subset(catalog: &SchemaCatalog) -> SchemaSubset {
    let mut s = SchemaSubset::new();
    for t in &catalog.tables {
        s.insert_table(&t.name);
        for c in &t.columns {
            s.insert_column(&t.name, &c.name);
        }
    }
    s
}
