//! Defect-pattern queries over a syntax tree.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::visit::{shallow_exprs, walk, Clause, Node, NodePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    JoinNonstandard,
    OrderbyAggregateLimit,
    StrftimeInvalidFormat,
    StrftimeNumericCompare,
    SelectStar,
    MaxminSubquery,
    OrderbyColumn,
}

impl PatternKind {
    pub const ALL: [PatternKind; 7] = [
        PatternKind::JoinNonstandard,
        PatternKind::OrderbyAggregateLimit,
        PatternKind::StrftimeInvalidFormat,
        PatternKind::StrftimeNumericCompare,
        PatternKind::SelectStar,
        PatternKind::MaxminSubquery,
        PatternKind::OrderbyColumn,
    ];

    pub fn id(self) -> &'static str {
        match self {
            PatternKind::JoinNonstandard => "join-nonstandard",
            PatternKind::OrderbyAggregateLimit => "orderby-aggregate-limit",
            PatternKind::StrftimeInvalidFormat => "strftime-invalid-format",
            PatternKind::StrftimeNumericCompare => "strftime-numeric-compare",
            PatternKind::SelectStar => "select-star",
            PatternKind::MaxminSubquery => "maxmin-subquery",
            PatternKind::OrderbyColumn => "orderby-column",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown pattern kind `{0}`")]
pub struct UnknownPattern(pub String);

impl FromStr for PatternKind {
    type Err = UnknownPattern;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PatternKind::ALL.iter().copied().find(|k| k.id() == s).ok_or_else(|| UnknownPattern(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternMatch {
    pub kind: PatternKind,
    pub node_path: NodePath,
    pub details: BTreeMap<String, String>,
}

impl PatternMatch {
    fn new(kind: PatternKind, path: &NodePath, details: &[(&str, String)]) -> Self {
        PatternMatch {
            kind,
            node_path: path.clone(),
            details: details.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }
}

/// Strftime format specifiers SQLite understands.
pub const STRFTIME_SPECIFIERS: &[char] = &['d', 'f', 'H', 'j', 'J', 'm', 'M', 'S', 's', 'w', 'W', 'Y', '%'];

/// All matches of `kind` in document order.
pub fn find_patterns(tree: &SqlTree, kind: &str) -> Result<Vec<PatternMatch>, UnknownPattern> {
    let kind: PatternKind = kind.parse()?;
    Ok(find(tree, kind))
}

pub fn find(tree: &SqlTree, kind: PatternKind) -> Vec<PatternMatch> {
    let mut out = Vec::new();
    walk(tree, &mut |v| {
        let found: Vec<PatternMatch> = match kind {
            PatternKind::OrderbyAggregateLimit => orderby_aggregate(v.path, v.node),
            PatternKind::JoinNonstandard => join_nonstandard(v.path, v.node).into_iter().collect(),
            PatternKind::StrftimeInvalidFormat => strftime_invalid(v.path, v.node).into_iter().collect(),
            PatternKind::StrftimeNumericCompare => strftime_numeric(v.path, v.node).into_iter().collect(),
            PatternKind::SelectStar => select_star(v.path, v.node).into_iter().collect(),
            PatternKind::MaxminSubquery => maxmin_subquery(v.path, v.node).into_iter().collect(),
            PatternKind::OrderbyColumn => orderby_column(v.path, v.node, v.clause).into_iter().collect(),
        };
        out.extend(found);
    });
    out
}

fn join_nonstandard(path: &NodePath, node: Node) -> Option<PatternMatch> {
    let Node::Join(join) = node else { return None };
    let JoinConstraint::On(cond) = &join.constraint else { return None };
    let exprs = shallow_exprs(cond);
    let reason = if exprs.iter().any(|e| matches!(e, Expr::Binary { op: BinaryOp::Or, .. })) {
        "or"
    } else if exprs.iter().any(|e| matches!(e, Expr::InList { .. } | Expr::InSubquery { .. })) {
        "in"
    } else if exprs.iter().any(|e| match e {
        Expr::Binary { left, op, right } => {
            op.is_comparison() && !op.is_equality() && left.as_column().is_some() && right.as_column().is_some()
        }
        _ => false,
    }) {
        "non-equality"
    } else {
        return None;
    };
    Some(PatternMatch::new(
        PatternKind::JoinNonstandard,
        &path.child("on"),
        &[("condition", cond.to_string()), ("reason", reason.to_string())],
    ))
}

fn orderby_aggregate(path: &NodePath, node: Node) -> Vec<PatternMatch> {
    let Node::Query(q) = node else { return vec![] };
    let Some(limit) = &q.limit else { return vec![] };
    let SetExpr::Select(select) = &q.body else { return vec![] };
    if !select.group_by.is_empty() {
        return vec![];
    }
    let mut out = Vec::new();
    for (i, item) in q.order_by.iter().enumerate() {
        if let Some(agg) = shallow_exprs(&item.expr).into_iter().find(|e| e.is_aggregate_call()) {
            out.push(PatternMatch::new(
                PatternKind::OrderbyAggregateLimit,
                &path.indexed("order_by", i),
                &[
                    ("function", agg.function_name().unwrap_or_default().to_ascii_uppercase()),
                    ("expression", item.expr.to_string()),
                    ("limit", limit.count.to_string()),
                ],
            ));
        }
    }
    out
}

fn is_strftime(e: &Expr) -> bool {
    matches!(e, Expr::Function { name, .. } if name.matches("strftime"))
}

fn strftime_format(e: &Expr) -> Option<&str> {
    match e {
        Expr::Function { name, args: FunctionArgs::List(args), .. } if name.matches("strftime") => match args.first() {
            Some(Expr::Literal(Literal::String(s))) => Some(s),
            _ => None,
        },
        _ => None,
    }
}

/// First specifier in `format` outside the valid set, or a dangling `%`.
pub fn invalid_strftime_specifier(format: &str) -> Option<String> {
    let mut chars = format.chars();
    while let Some(c) = chars.next() {
        if c != '%' {
            continue;
        }
        match chars.next() {
            Some(s) if STRFTIME_SPECIFIERS.contains(&s) => {}
            Some(s) => return Some(format!("%{s}")),
            None => return Some("%".to_string()),
        }
    }
    None
}

fn strftime_invalid(path: &NodePath, node: Node) -> Option<PatternMatch> {
    let Node::Expr(e) = node else { return None };
    let format = strftime_format(e)?;
    let bad = invalid_strftime_specifier(format)?;
    Some(PatternMatch::new(
        PatternKind::StrftimeInvalidFormat,
        path,
        &[("format", format.to_string()), ("specifier", bad), ("expression", e.to_string())],
    ))
}

fn numeric_literal(e: &Expr) -> Option<String> {
    match e {
        Expr::Literal(Literal::Number(n)) => Some(n.clone()),
        Expr::Unary { op: UnaryOp::Neg | UnaryOp::Pos, expr } => numeric_literal(expr).map(|_| e.to_string()),
        _ => None,
    }
}

fn strftime_numeric(path: &NodePath, node: Node) -> Option<PatternMatch> {
    let Node::Expr(e) = node else { return None };
    let (call, literal) = match e {
        Expr::Binary { left, op, right } if op.is_comparison() => {
            if is_strftime(left) {
                (left.as_ref(), numeric_literal(right)?)
            } else if is_strftime(right) {
                (right.as_ref(), numeric_literal(left)?)
            } else {
                return None;
            }
        }
        Expr::Between { expr, low, high, .. } if is_strftime(expr) => {
            let lit = numeric_literal(low).or_else(|| numeric_literal(high))?;
            (expr.as_ref(), lit)
        }
        Expr::InList { expr, list, .. } if is_strftime(expr) => {
            let lit = list.iter().find_map(numeric_literal)?;
            (expr.as_ref(), lit)
        }
        _ => return None,
    };
    Some(PatternMatch::new(
        PatternKind::StrftimeNumericCompare,
        path,
        &[("call", call.to_string()), ("literal", literal), ("expression", e.to_string())],
    ))
}

/// True when `path` lies in the outermost query's select lists.
fn is_top_level(path: &NodePath) -> bool {
    path.0.iter().skip(1).all(|step| {
        matches!(step.as_str(), "body" | "left" | "right" | "select") || step.starts_with("items[")
    })
}

fn select_star(path: &NodePath, node: Node) -> Option<PatternMatch> {
    let Node::SelectItem(item) = node else { return None };
    if !is_top_level(path) {
        return None;
    }
    let text = match item {
        SelectItem::Wildcard => "*".to_string(),
        SelectItem::QualifiedWildcard(q) => format!("{}.*", super::render::quote_ident(q)),
        SelectItem::Expr { .. } => return None,
    };
    Some(PatternMatch::new(PatternKind::SelectStar, path, &[("item", text)]))
}

fn outer_table_for(select: &Select, col: &ColumnRef) -> Vec<String> {
    let Some(from) = &select.from else { return vec![] };
    let mut factors = vec![&from.base];
    factors.extend(from.joins.iter().map(|j| &j.factor));
    let tables: Vec<(&Ident, &Ident)> = factors
        .into_iter()
        .filter_map(|f| match f {
            TableFactor::Table { name, alias, .. } => Some((name, alias.as_ref().unwrap_or(name))),
            _ => None,
        })
        .collect();
    match col.table_qualifier() {
        Some(q) => tables.iter().filter(|(_, vis)| vis.matches(&q.value)).map(|(n, _)| n.value.clone()).collect(),
        None => tables.iter().map(|(n, _)| n.value.clone()).collect(),
    }
}

/// `MAX(col)`/`MIN(col)` over a single table with no other clauses.
fn extremum_subquery(q: &Query) -> Option<(String, &ColumnRef, &Ident)> {
    if q.with.is_some() || !q.order_by.is_empty() || q.limit.is_some() {
        return None;
    }
    let SetExpr::Select(s) = &q.body else { return None };
    if s.selection.is_some() || !s.group_by.is_empty() || s.having.is_some() || s.items.len() != 1 {
        return None;
    }
    let from = s.from.as_ref()?;
    if !from.joins.is_empty() {
        return None;
    }
    let TableFactor::Table { name: table, .. } = &from.base else { return None };
    let SelectItem::Expr { expr, .. } = &s.items[0] else { return None };
    let Expr::Function { name, args: FunctionArgs::List(args), distinct: false, filter: None, over: None } = expr else {
        return None;
    };
    if args.len() != 1 || !(name.matches("max") || name.matches("min")) {
        return None;
    }
    let col = args[0].as_column()?;
    Some((name.value.to_ascii_uppercase(), col, table))
}

fn maxmin_subquery(path: &NodePath, node: Node) -> Option<PatternMatch> {
    let Node::Select(select) = node else { return None };
    let Some(Expr::Binary { left, op, right }) = &select.selection else { return None };
    if !op.is_equality() {
        return None;
    }
    let (outer, sub) = match (left.as_ref(), right.as_ref()) {
        (Expr::Column(c), Expr::Subquery(q)) | (Expr::Subquery(q), Expr::Column(c)) => (c, q),
        _ => return None,
    };
    let (function, inner, table) = extremum_subquery(sub)?;
    if !inner.name.matches(&outer.name.value) {
        return None;
    }
    if !outer_table_for(select, outer).iter().any(|t| table.matches(t)) {
        return None;
    }
    let direction = if function == "MAX" { "DESC" } else { "ASC" };
    let column = super::render::quote_ident(&outer.name);
    Some(PatternMatch::new(
        PatternKind::MaxminSubquery,
        &path.child("where"),
        &[
            ("column", outer.name.value.clone()),
            ("table", table.value.clone()),
            ("function", function),
            ("suggestion", format!("ORDER BY {column} {direction} LIMIT 1")),
        ],
    ))
}

fn orderby_column(path: &NodePath, node: Node, clause: Clause) -> Option<PatternMatch> {
    if clause != Clause::OrderBy {
        return None;
    }
    let Node::OrderItem(item) = node else { return None };
    let Expr::Column(col) = &item.expr else { return None };
    let mut details = vec![("column", col.name.value.clone()), ("expression", item.expr.to_string())];
    if let Some((t, c)) = &col.resolved {
        details.push(("table", t.clone()));
        details.push(("catalog_column", c.clone()));
    }
    Some(PatternMatch::new(PatternKind::OrderbyColumn, path, &details))
}
