//! Alias-aware resolution of column references against a catalog.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::ast::*;
use crate::catalog::SchemaCatalog;

/// A set of tables and `(table, column)` pairs, in catalog spelling.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSubset {
    pub tables: BTreeSet<String>,
    pub columns: BTreeSet<(String, String)>,
}

impl SchemaSubset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_table(&mut self, table: &str) {
        self.tables.insert(table.to_string());
    }

    /// Inserts a column and its table.
    pub fn insert_column(&mut self, table: &str, column: &str) {
        self.tables.insert(table.to_string());
        self.columns.insert((table.to_string(), column.to_string()));
    }

    pub fn contains_column(&self, table: &str, column: &str) -> bool {
        self.columns.contains(&(table.to_string(), column.to_string()))
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty() && self.columns.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tables.len() + self.columns.len()
    }

    pub fn union_with(&mut self, other: &SchemaSubset) {
        self.tables.extend(other.tables.iter().cloned());
        self.columns.extend(other.columns.iter().cloned());
    }

    pub fn is_subset_of(&self, other: &SchemaSubset) -> bool {
        self.tables.is_subset(&other.tables) && self.columns.is_subset(&other.columns)
    }

    /// Every column's table is in the table set.
    pub fn is_well_formed(&self) -> bool {
        self.columns.iter().all(|(t, _)| self.tables.contains(t))
    }

    /// Keeps only elements that exist in `catalog`, rewriting to catalog spelling.
    /// Returns the names that were dropped.
    pub fn retain_in_catalog(&mut self, catalog: &SchemaCatalog) -> Vec<String> {
        let mut dropped = Vec::new();
        let mut out = SchemaSubset::new();
        for t in &self.tables {
            match catalog.table(t) {
                Some(def) => out.insert_table(&def.name),
                None => dropped.push(t.clone()),
            }
        }
        for (t, c) in &self.columns {
            match catalog.resolve_column(t, c) {
                Some((tt, cc)) => out.insert_column(&tt, &cc),
                None => dropped.push(format!("{t}.{c}")),
            }
        }
        *self = out;
        dropped
    }
}

/// Result of schema-reference extraction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaRefs {
    pub subset: SchemaSubset,
    /// References that could not be resolved against the catalog, as written.
    pub unresolved: Vec<String>,
}

#[derive(Debug, Clone)]
enum Source {
    Table(String),
    /// Derived table, CTE or table-valued function; `None` columns means unknown.
    Derived(Option<Vec<String>>),
    Unknown,
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    source: Source,
}

#[derive(Debug, Default, Clone)]
struct Scope {
    entries: Vec<Entry>,
    aliases: Vec<String>,
}

struct Resolver<'c> {
    catalog: &'c SchemaCatalog,
    scopes: Vec<Scope>,
    ctes: Vec<HashSet<String>>,
    tables: BTreeSet<String>,
    using_columns: Vec<(String, String)>,
    unresolved: Vec<String>,
}

impl SqlTree {
    /// Fills the `resolved` marker of every column reference that can be
    /// resolved against `catalog`.
    pub fn resolve(&mut self, catalog: &SchemaCatalog) -> SchemaRefs {
        let mut r = Resolver { catalog, scopes: Vec::new(), ctes: Vec::new(), tables: BTreeSet::new(), using_columns: Vec::new(), unresolved: Vec::new() };
        r.query(&mut self.query);
        let mut subset = SchemaSubset::new();
        for t in &r.tables {
            subset.insert_table(t);
        }
        for (t, c) in &r.using_columns {
            subset.insert_column(t, c);
        }
        collect_resolved(self, &mut subset);
        let mut unresolved = r.unresolved;
        let mut seen = HashSet::new();
        unresolved.retain(|u| seen.insert(u.clone()));
        SchemaRefs { subset, unresolved }
    }
}

/// Every table named in FROM/JOIN/subqueries and every column reference
/// resolvable against `catalog`. Stars contribute their table only.
pub fn extract_schema_refs(tree: &SqlTree, catalog: &SchemaCatalog) -> SchemaRefs {
    let mut copy = tree.clone();
    copy.resolve(catalog)
}

fn collect_resolved(tree: &SqlTree, out: &mut SchemaSubset) {
    super::visit::walk(tree, &mut |v| {
        if let super::visit::Node::Expr(Expr::Column(c)) = v.node {
            if let Some((t, col)) = &c.resolved {
                out.insert_column(t, col);
            }
        }
    });
}

fn output_columns(q: &Query) -> Option<Vec<String>> {
    let select = q.first_select()?;
    let mut cols = Vec::new();
    for item in &select.items {
        match item {
            SelectItem::Wildcard | SelectItem::QualifiedWildcard(_) => return None,
            SelectItem::Expr { expr, alias } => match (alias, expr) {
                (Some(a), _) => cols.push(a.value.clone()),
                (None, Expr::Column(c)) => cols.push(c.name.value.clone()),
                (None, other) => cols.push(other.to_string()),
            },
        }
    }
    Some(cols)
}

impl<'c> Resolver<'c> {
    fn is_cte(&self, name: &str) -> bool {
        let lower = name.to_ascii_lowercase();
        self.ctes.iter().any(|frame| frame.contains(&lower))
    }

    fn query(&mut self, q: &mut Query) {
        let mut frame = HashSet::new();
        if let Some(with) = &q.with {
            for cte in &with.ctes {
                frame.insert(cte.name.value.to_ascii_lowercase());
            }
        }
        self.ctes.push(frame);
        if let Some(with) = &mut q.with {
            for cte in &mut with.ctes {
                self.query(&mut cte.query);
            }
        }
        let first_scope = self.set_expr(&mut q.body);
        if let Some(scope) = first_scope {
            self.scopes.push(scope);
            for item in &mut q.order_by {
                self.expr(&mut item.expr);
            }
            self.scopes.pop();
        } else {
            for item in &mut q.order_by {
                self.expr(&mut item.expr);
            }
        }
        if let Some(limit) = &mut q.limit {
            self.expr(&mut limit.count);
            if let Some(off) = &mut limit.offset {
                self.expr(off);
            }
        }
        self.ctes.pop();
    }

    /// Resolves a set expression; returns the scope of its first SELECT.
    fn set_expr(&mut self, body: &mut SetExpr) -> Option<Scope> {
        match body {
            SetExpr::Select(s) => Some(self.select(s)),
            SetExpr::Values(rows) => {
                for row in rows {
                    for e in row {
                        self.expr(e);
                    }
                }
                None
            }
            SetExpr::Compound { left, right, .. } => {
                let first = self.set_expr(left);
                self.set_expr(right);
                first
            }
        }
    }

    fn select(&mut self, s: &mut Select) -> Scope {
        let mut scope = Scope::default();
        if let Some(from) = &mut s.from {
            self.from(from, &mut scope);
        }
        for item in &s.items {
            if let SelectItem::Expr { alias: Some(a), .. } = item {
                scope.aliases.push(a.value.to_ascii_lowercase());
            }
        }
        self.scopes.push(scope);
        for item in &mut s.items {
            if let SelectItem::Expr { expr, .. } = item {
                self.expr(expr);
            }
        }
        if let Some(from) = &mut s.from {
            self.join_constraints(from);
        }
        if let Some(w) = &mut s.selection {
            self.expr(w);
        }
        for g in &mut s.group_by {
            self.expr(g);
        }
        if let Some(h) = &mut s.having {
            self.expr(h);
        }
        self.scopes.pop().unwrap_or_default()
    }

    fn from(&mut self, from: &mut FromClause, scope: &mut Scope) {
        self.factor(&mut from.base, scope);
        for join in &mut from.joins {
            self.factor(&mut join.factor, scope);
        }
    }

    fn factor(&mut self, factor: &mut TableFactor, scope: &mut Scope) {
        match factor {
            TableFactor::Table { name, alias, .. } => {
                let visible = alias.as_ref().unwrap_or(name).value.clone();
                let source = if self.is_cte(&name.value) {
                    Source::Derived(None)
                } else if let Some(def) = self.catalog.table(&name.value) {
                    self.tables.insert(def.name.clone());
                    Source::Table(def.name.clone())
                } else {
                    self.unresolved.push(name.value.clone());
                    Source::Unknown
                };
                scope.entries.push(Entry { name: visible, source });
            }
            TableFactor::Derived { subquery, alias } => {
                self.query(subquery);
                let cols = output_columns(subquery);
                let name = alias.as_ref().map(|a| a.value.clone()).unwrap_or_default();
                scope.entries.push(Entry { name, source: Source::Derived(cols) });
            }
            TableFactor::Function { name, args, alias } => {
                for a in args {
                    self.expr(a);
                }
                let visible = alias.as_ref().unwrap_or(name).value.clone();
                scope.entries.push(Entry { name: visible, source: Source::Derived(None) });
            }
            TableFactor::Nested(inner) => self.from(inner, scope),
        }
    }

    fn join_constraints(&mut self, from: &mut FromClause) {
        if let TableFactor::Nested(inner) = &mut from.base {
            self.join_constraints(inner);
        }
        for join in &mut from.joins {
            if let TableFactor::Nested(inner) = &mut join.factor {
                self.join_constraints(inner);
            }
            match &mut join.constraint {
                JoinConstraint::On(e) => self.expr(e),
                JoinConstraint::Using(cols) => {
                    let scope = self.scopes.last().cloned().unwrap_or_default();
                    for col in cols.iter() {
                        for entry in &scope.entries {
                            if let Source::Table(t) = &entry.source {
                                if let Some((tt, cc)) = self.catalog.resolve_column(t, &col.value) {
                                    self.using_columns.push((tt, cc));
                                }
                            }
                        }
                    }
                }
                JoinConstraint::None => {}
            }
        }
    }

    fn expr(&mut self, e: &mut Expr) {
        match e {
            Expr::Column(c) => self.column(c),
            Expr::Literal(_) | Expr::Param(_) => {}
            Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } | Expr::Cast { expr, .. } | Expr::Collate { expr, .. } => {
                self.expr(expr)
            }
            Expr::Binary { left, right, .. } => {
                self.expr(left);
                self.expr(right);
            }
            Expr::Like { expr, pattern, escape, .. } => {
                self.expr(expr);
                self.expr(pattern);
                if let Some(esc) = escape {
                    self.expr(esc);
                }
            }
            Expr::Between { expr, low, high, .. } => {
                self.expr(expr);
                self.expr(low);
                self.expr(high);
            }
            Expr::InList { expr, list, .. } => {
                self.expr(expr);
                for item in list {
                    self.expr(item);
                }
            }
            Expr::InSubquery { expr, query, .. } => {
                self.expr(expr);
                self.query(query);
            }
            Expr::Function { args, filter, over, .. } => {
                if let FunctionArgs::List(list) = args {
                    for a in list {
                        self.expr(a);
                    }
                }
                if let Some(cond) = filter {
                    self.expr(cond);
                }
                if let Some(w) = over {
                    for p in &mut w.partition_by {
                        self.expr(p);
                    }
                    for o in &mut w.order_by {
                        self.expr(&mut o.expr);
                    }
                }
            }
            Expr::Case { operand, whens, else_result } => {
                if let Some(op) = operand {
                    self.expr(op);
                }
                for (c, r) in whens {
                    self.expr(c);
                    self.expr(r);
                }
                if let Some(el) = else_result {
                    self.expr(el);
                }
            }
            Expr::Subquery(q) | Expr::Exists { query: q, .. } => self.query(q),
            Expr::Tuple(list) => {
                for item in list {
                    self.expr(item);
                }
            }
        }
    }

    fn column(&mut self, c: &mut ColumnRef) {
        c.resolved = None;
        let written = || {
            let mut parts: Vec<&str> = c.qualifier.iter().map(|q| q.value.as_str()).collect();
            parts.push(&c.name.value);
            parts.join(".")
        };
        if let Some(q) = c.table_qualifier() {
            for scope in self.scopes.iter().rev() {
                if let Some(entry) = scope.entries.iter().find(|e| q.matches(&e.name)) {
                    match &entry.source {
                        Source::Table(t) => match self.catalog.resolve_column(t, &c.name.value) {
                            Some(rc) => c.resolved = Some(rc),
                            None => self.unresolved.push(written()),
                        },
                        Source::Derived(_) => {}
                        Source::Unknown => self.unresolved.push(written()),
                    }
                    return;
                }
            }
            self.unresolved.push(written());
            return;
        }
        for scope in self.scopes.iter().rev() {
            for entry in &scope.entries {
                match &entry.source {
                    Source::Table(t) => {
                        if let Some(rc) = self.catalog.resolve_column(t, &c.name.value) {
                            c.resolved = Some(rc);
                            return;
                        }
                    }
                    Source::Derived(Some(cols)) => {
                        if cols.iter().any(|col| c.name.matches(col)) {
                            return;
                        }
                    }
                    Source::Derived(None) | Source::Unknown => {}
                }
            }
            if scope.aliases.iter().any(|a| c.name.matches(a)) {
                return;
            }
        }
        // unknown-column derived sources may supply it; only report when none exist
        let any_opaque = self
            .scopes
            .iter()
            .any(|s| s.entries.iter().any(|e| matches!(e.source, Source::Derived(None) | Source::Unknown)));
        if !any_opaque {
            self.unresolved.push(written());
        }
    }
}
