use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{element_key, LinkedSchema, Provenance};
use crate::catalog::{ForeignKey, SchemaCatalog};
use crate::sql_ast::SchemaSubset;

/// Undirected FK adjacency: table -> [(fk index, neighbour)], ignoring self references.
fn adjacency(catalog: &SchemaCatalog) -> BTreeMap<&str, Vec<(usize, &str)>> {
    let mut adj: BTreeMap<&str, Vec<(usize, &str)>> = BTreeMap::new();
    for t in &catalog.tables {
        adj.entry(t.name.as_str()).or_default();
    }
    for (i, fk) in catalog.foreign_keys.iter().enumerate() {
        if fk.from_table == fk.to_table {
            continue;
        }
        adj.entry(fk.from_table.as_str()).or_default().push((i, fk.to_table.as_str()));
        adj.entry(fk.to_table.as_str()).or_default().push((i, fk.from_table.as_str()));
    }
    adj
}

/// Components of `tables` using only FKs with both ends inside `tables`, sorted.
fn components(tables: &BTreeSet<String>, catalog: &SchemaCatalog) -> Vec<Vec<String>> {
    let adj = adjacency(catalog);
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut out = Vec::new();
    for start in tables {
        if seen.contains(start.as_str()) {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start.as_str()]);
        seen.insert(start.as_str());
        while let Some(t) = queue.pop_front() {
            comp.push(t.to_string());
            for (_, n) in adj.get(t).map(Vec::as_slice).unwrap_or(&[]) {
                if tables.contains(*n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        comp.sort();
        out.push(comp);
    }
    out.sort();
    out
}

fn add_fk_columns(subset: &mut SchemaSubset, fk: &ForeignKey) {
    subset.insert_column(&fk.from_table, &fk.from_column);
    subset.insert_column(&fk.to_table, &fk.to_column);
}

fn direct_fk_columns(subset: &mut SchemaSubset, catalog: &SchemaCatalog) {
    for fk in &catalog.foreign_keys {
        if fk.from_table != fk.to_table && subset.tables.contains(&fk.from_table) && subset.tables.contains(&fk.to_table) {
            add_fk_columns(subset, fk);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct PathKey {
    edges: usize,
    added_columns: usize,
    tables: Vec<String>,
    fks: Vec<usize>,
}

/// Shortest FK path from `from` to any table of another component, with deterministic tie-breaks.
fn best_bridge(
    from: &[String],
    targets: &BTreeSet<&str>,
    subset: &SchemaSubset,
    catalog: &SchemaCatalog,
    adj: &BTreeMap<&str, Vec<(usize, &str)>>,
) -> Option<PathKey> {
    let mut dist: BTreeMap<&str, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for t in from {
        dist.insert(t.as_str(), 0);
        queue.push_back(t.as_str());
    }
    let mut reach = None;
    while let Some(t) = queue.pop_front() {
        let d = dist[t];
        if reach.is_some_and(|r| d >= r) {
            break;
        }
        for (_, n) in adj.get(t).map(Vec::as_slice).unwrap_or(&[]) {
            if !dist.contains_key(n) {
                dist.insert(n, d + 1);
                if targets.contains(n) {
                    reach.get_or_insert(d + 1);
                }
                queue.push_back(n);
            }
        }
    }
    let reach = reach?;
    // walk backwards from each reached target along strictly decreasing distance
    let mut best: Option<PathKey> = None;
    let mut stack: Vec<(&str, Vec<usize>, Vec<&str>)> =
        targets.iter().filter(|t| dist.get(*t) == Some(&reach)).map(|t| (*t, vec![], vec![*t])).collect();
    let mut explored = 0usize;
    while let Some((t, fks, tables)) = stack.pop() {
        explored += 1;
        if explored > 100_000 {
            break;
        }
        let d = dist[t];
        if d == 0 {
            let mut cols = subset.clone();
            for i in &fks {
                add_fk_columns(&mut cols, &catalog.foreign_keys[*i]);
            }
            let mut order: Vec<String> = tables.iter().rev().map(|s| s.to_string()).collect();
            let mut fk_order: Vec<usize> = fks.iter().rev().copied().collect();
            if order.last() < order.first() {
                order.reverse();
                fk_order.reverse();
            }
            let key = PathKey {
                edges: fks.len(),
                added_columns: cols.columns.len() - subset.columns.len(),
                tables: order,
                fks: fk_order,
            };
            if best.as_ref().is_none_or(|b| key < *b) {
                best = Some(key);
            }
            continue;
        }
        for (i, n) in adj.get(t).map(Vec::as_slice).unwrap_or(&[]) {
            if dist.get(n) == Some(&(d - 1)) {
                let mut f = fks.clone();
                f.push(*i);
                let mut ts = tables.clone();
                ts.push(n);
                stack.push((n, f, ts));
            }
        }
    }
    best
}

/// Adds FK endpoint columns, bridge tables along shortest FK paths, and primary keys.
pub fn enforce_closure(union: &SchemaSubset, catalog: &SchemaCatalog) -> LinkedSchema {
    let mut subset = union.clone();
    direct_fk_columns(&mut subset, catalog);
    let adj = adjacency(catalog);
    loop {
        let comps = components(&subset.tables, catalog);
        if comps.len() <= 1 {
            break;
        }
        let mut best: Option<PathKey> = None;
        for (ci, comp) in comps.iter().enumerate() {
            let targets: BTreeSet<&str> =
                comps.iter().enumerate().filter(|(j, _)| *j != ci).flat_map(|(_, c)| c.iter().map(String::as_str)).collect();
            if let Some(k) = best_bridge(comp, &targets, &subset, catalog, &adj) {
                if best.as_ref().is_none_or(|b| k < *b) {
                    best = Some(k);
                }
            }
        }
        let Some(path) = best else { break };
        for t in &path.tables {
            subset.insert_table(t);
        }
        for i in &path.fks {
            add_fk_columns(&mut subset, &catalog.foreign_keys[*i]);
        }
        direct_fk_columns(&mut subset, catalog);
    }
    let tables: Vec<String> = subset.tables.iter().cloned().collect();
    for t in &tables {
        for pk in catalog.primary_key(t) {
            subset.insert_column(t, pk);
        }
    }
    let comps = components(&subset.tables, catalog);
    let mut added_by = BTreeMap::new();
    for t in subset.tables.difference(&union.tables) {
        added_by.insert(element_key(t, None), BTreeSet::from([Provenance::Closure]));
    }
    for (t, c) in subset.columns.difference(&union.columns) {
        added_by.insert(element_key(t, Some(c)), BTreeSet::from([Provenance::Closure]));
    }
    LinkedSchema { connected: comps.len() <= 1, components: comps, subset, added_by }
}
