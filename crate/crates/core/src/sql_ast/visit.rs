use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;

/// Location of a node, as a sequence of field/index steps from the root.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodePath(pub Vec<String>);

impl NodePath {
    pub fn child(&self, step: impl Into<String>) -> NodePath {
        let mut steps = self.0.clone();
        steps.push(step.into());
        NodePath(steps)
    }

    pub fn indexed(&self, field: &str, idx: usize) -> NodePath {
        self.child(format!("{field}[{idx}]"))
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/{}", self.0.join("/"))
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Node<'a> {
    Query(&'a Query),
    Select(&'a Select),
    SelectItem(&'a SelectItem),
    TableFactor(&'a TableFactor),
    Join(&'a Join),
    Expr(&'a Expr),
    OrderItem(&'a OrderItem),
}

/// Which clause of its innermost SELECT an expression sits in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clause {
    Items,
    From,
    JoinOn,
    Where,
    GroupBy,
    Having,
    OrderBy,
    Limit,
    Other,
}

pub struct Visit<'a, 'b> {
    pub path: &'b NodePath,
    pub node: Node<'a>,
    pub clause: Clause,
}

/// Pre-order walk in document order.
pub fn walk<'a>(tree: &'a SqlTree, f: &mut dyn FnMut(Visit<'a, '_>)) {
    walk_query(&tree.query, &NodePath(vec!["query".into()]), Clause::Other, f);
}

fn emit<'a>(f: &mut dyn FnMut(Visit<'a, '_>), path: &NodePath, node: Node<'a>, clause: Clause) {
    f(Visit { path, node, clause });
}

fn walk_query<'a>(q: &'a Query, path: &NodePath, clause: Clause, f: &mut dyn FnMut(Visit<'a, '_>)) {
    emit(f, path, Node::Query(q), clause);
    if let Some(with) = &q.with {
        for (i, cte) in with.ctes.iter().enumerate() {
            walk_query(&cte.query, &path.indexed("with", i), Clause::Other, f);
        }
    }
    walk_set_expr(&q.body, &path.child("body"), f);
    for (i, item) in q.order_by.iter().enumerate() {
        let p = path.indexed("order_by", i);
        emit(f, &p, Node::OrderItem(item), Clause::OrderBy);
        walk_expr(&item.expr, &p.child("expr"), Clause::OrderBy, f);
    }
    if let Some(limit) = &q.limit {
        walk_expr(&limit.count, &path.child("limit"), Clause::Limit, f);
        if let Some(off) = &limit.offset {
            walk_expr(off, &path.child("offset"), Clause::Limit, f);
        }
    }
}

fn walk_set_expr<'a>(body: &'a SetExpr, path: &NodePath, f: &mut dyn FnMut(Visit<'a, '_>)) {
    match body {
        SetExpr::Select(s) => walk_select(s, &path.child("select"), f),
        SetExpr::Values(rows) => {
            for (i, row) in rows.iter().enumerate() {
                for (j, e) in row.iter().enumerate() {
                    walk_expr(e, &path.indexed("values", i).indexed("col", j), Clause::Other, f);
                }
            }
        }
        SetExpr::Compound { left, right, .. } => {
            walk_set_expr(left, &path.child("left"), f);
            walk_set_expr(right, &path.child("right"), f);
        }
    }
}

fn walk_select<'a>(s: &'a Select, path: &NodePath, f: &mut dyn FnMut(Visit<'a, '_>)) {
    emit(f, path, Node::Select(s), Clause::Other);
    for (i, item) in s.items.iter().enumerate() {
        let p = path.indexed("items", i);
        emit(f, &p, Node::SelectItem(item), Clause::Items);
        if let SelectItem::Expr { expr, .. } = item {
            walk_expr(expr, &p.child("expr"), Clause::Items, f);
        }
    }
    if let Some(from) = &s.from {
        walk_from(from, &path.child("from"), f);
    }
    if let Some(w) = &s.selection {
        walk_expr(w, &path.child("where"), Clause::Where, f);
    }
    for (i, g) in s.group_by.iter().enumerate() {
        walk_expr(g, &path.indexed("group_by", i), Clause::GroupBy, f);
    }
    if let Some(h) = &s.having {
        walk_expr(h, &path.child("having"), Clause::Having, f);
    }
}

fn walk_from<'a>(from: &'a FromClause, path: &NodePath, f: &mut dyn FnMut(Visit<'a, '_>)) {
    walk_factor(&from.base, &path.child("base"), f);
    for (i, join) in from.joins.iter().enumerate() {
        let p = path.indexed("joins", i);
        emit(f, &p, Node::Join(join), Clause::From);
        walk_factor(&join.factor, &p.child("factor"), f);
        if let JoinConstraint::On(e) = &join.constraint {
            walk_expr(e, &p.child("on"), Clause::JoinOn, f);
        }
    }
}

fn walk_factor<'a>(factor: &'a TableFactor, path: &NodePath, f: &mut dyn FnMut(Visit<'a, '_>)) {
    emit(f, path, Node::TableFactor(factor), Clause::From);
    match factor {
        TableFactor::Table { .. } => {}
        TableFactor::Derived { subquery, .. } => walk_query(subquery, &path.child("subquery"), Clause::From, f),
        TableFactor::Function { args, .. } => {
            for (i, a) in args.iter().enumerate() {
                walk_expr(a, &path.indexed("args", i), Clause::From, f);
            }
        }
        TableFactor::Nested(inner) => walk_from(inner, &path.child("nested"), f),
    }
}

fn walk_expr<'a>(e: &'a Expr, path: &NodePath, clause: Clause, f: &mut dyn FnMut(Visit<'a, '_>)) {
    emit(f, path, Node::Expr(e), clause);
    match e {
        Expr::Column(_) | Expr::Literal(_) | Expr::Param(_) => {}
        Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } | Expr::Cast { expr, .. } | Expr::Collate { expr, .. } => {
            walk_expr(expr, &path.child("expr"), clause, f)
        }
        Expr::Binary { left, right, .. } => {
            walk_expr(left, &path.child("left"), clause, f);
            walk_expr(right, &path.child("right"), clause, f);
        }
        Expr::Like { expr, pattern, escape, .. } => {
            walk_expr(expr, &path.child("expr"), clause, f);
            walk_expr(pattern, &path.child("pattern"), clause, f);
            if let Some(esc) = escape {
                walk_expr(esc, &path.child("escape"), clause, f);
            }
        }
        Expr::Between { expr, low, high, .. } => {
            walk_expr(expr, &path.child("expr"), clause, f);
            walk_expr(low, &path.child("low"), clause, f);
            walk_expr(high, &path.child("high"), clause, f);
        }
        Expr::InList { expr, list, .. } => {
            walk_expr(expr, &path.child("expr"), clause, f);
            for (i, item) in list.iter().enumerate() {
                walk_expr(item, &path.indexed("list", i), clause, f);
            }
        }
        Expr::InSubquery { expr, query, .. } => {
            walk_expr(expr, &path.child("expr"), clause, f);
            walk_query(query, &path.child("subquery"), clause, f);
        }
        Expr::Function { args, filter, over, .. } => {
            if let FunctionArgs::List(list) = args {
                for (i, a) in list.iter().enumerate() {
                    walk_expr(a, &path.indexed("args", i), clause, f);
                }
            }
            if let Some(cond) = filter {
                walk_expr(cond, &path.child("filter"), clause, f);
            }
            if let Some(w) = over {
                for (i, p) in w.partition_by.iter().enumerate() {
                    walk_expr(p, &path.indexed("partition_by", i), clause, f);
                }
                for (i, o) in w.order_by.iter().enumerate() {
                    walk_expr(&o.expr, &path.indexed("window_order_by", i), clause, f);
                }
            }
        }
        Expr::Case { operand, whens, else_result } => {
            if let Some(op) = operand {
                walk_expr(op, &path.child("operand"), clause, f);
            }
            for (i, (c, r)) in whens.iter().enumerate() {
                walk_expr(c, &path.indexed("when", i), clause, f);
                walk_expr(r, &path.indexed("then", i), clause, f);
            }
            if let Some(el) = else_result {
                walk_expr(el, &path.child("else"), clause, f);
            }
        }
        Expr::Subquery(q) => walk_query(q, &path.child("subquery"), clause, f),
        Expr::Exists { query, .. } => walk_query(query, &path.child("subquery"), clause, f),
        Expr::Tuple(list) => {
            for (i, item) in list.iter().enumerate() {
                walk_expr(item, &path.indexed("items", i), clause, f);
            }
        }
    }
}

/// Looks up the node at `path`, if it exists.
pub fn node_at<'a>(tree: &'a SqlTree, path: &NodePath) -> Option<Node<'a>> {
    let mut found = None;
    walk(tree, &mut |v| {
        if found.is_none() && v.path == path {
            found = Some(v.node);
        }
    });
    found
}

/// All expressions inside `e` (inclusive), not descending into subqueries.
pub fn shallow_exprs(e: &Expr) -> Vec<&Expr> {
    let mut out = Vec::new();
    collect_shallow(e, &mut out);
    out
}

fn collect_shallow<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    out.push(e);
    match e {
        Expr::Column(_) | Expr::Literal(_) | Expr::Param(_) => {}
        Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } | Expr::Cast { expr, .. } | Expr::Collate { expr, .. } => {
            collect_shallow(expr, out)
        }
        Expr::Binary { left, right, .. } => {
            collect_shallow(left, out);
            collect_shallow(right, out);
        }
        Expr::Like { expr, pattern, escape, .. } => {
            collect_shallow(expr, out);
            collect_shallow(pattern, out);
            if let Some(esc) = escape {
                collect_shallow(esc, out);
            }
        }
        Expr::Between { expr, low, high, .. } => {
            collect_shallow(expr, out);
            collect_shallow(low, out);
            collect_shallow(high, out);
        }
        Expr::InList { expr, list, .. } => {
            collect_shallow(expr, out);
            for item in list {
                collect_shallow(item, out);
            }
        }
        Expr::InSubquery { expr, .. } => collect_shallow(expr, out),
        Expr::Function { args, filter, .. } => {
            if let FunctionArgs::List(list) = args {
                for a in list {
                    collect_shallow(a, out);
                }
            }
            if let Some(cond) = filter {
                collect_shallow(cond, out);
            }
        }
        Expr::Case { operand, whens, else_result } => {
            if let Some(op) = operand {
                collect_shallow(op, out);
            }
            for (c, r) in whens {
                collect_shallow(c, out);
                collect_shallow(r, out);
            }
            if let Some(el) = else_result {
                collect_shallow(el, out);
            }
        }
        Expr::Subquery(_) | Expr::Exists { .. } => {}
        Expr::Tuple(list) => {
            for item in list {
                collect_shallow(item, out);
            }
        }
    }
}
