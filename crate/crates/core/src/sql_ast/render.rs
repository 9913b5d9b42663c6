use std::fmt::{self, Write};

use super::ast::*;
use super::parser::is_reserved;

pub fn quote_ident(ident: &Ident) -> String {
    let simple = !ident.value.is_empty()
        && ident.value.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && ident.value.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if simple && ident.quote.is_none() && !is_reserved(&ident.value) {
        return ident.value.clone();
    }
    match ident.quote {
        Some('"') => format!("\"{}\"", ident.value.replace('"', "\"\"")),
        Some('\'') => format!("'{}'", ident.value.replace('\'', "''")),
        _ => format!("`{}`", ident.value.replace('`', "``")),
    }
}

pub fn quote_string(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

impl fmt::Display for SqlTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_query(f, &self.query)
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_query(f, self)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}

fn write_query(f: &mut dyn Write, q: &Query) -> fmt::Result {
    if let Some(with) = &q.with {
        f.write_str("WITH ")?;
        if with.recursive {
            f.write_str("RECURSIVE ")?;
        }
        for (i, cte) in with.ctes.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(&quote_ident(&cte.name))?;
            if !cte.columns.is_empty() {
                let cols: Vec<String> = cte.columns.iter().map(quote_ident).collect();
                write!(f, "({})", cols.join(", "))?;
            }
            f.write_str(" AS (")?;
            write_query(f, &cte.query)?;
            f.write_str(")")?;
        }
        f.write_str(" ")?;
    }
    write_set_expr(f, &q.body)?;
    if !q.order_by.is_empty() {
        f.write_str(" ORDER BY ")?;
        write_order_items(f, &q.order_by)?;
    }
    if let Some(limit) = &q.limit {
        f.write_str(" LIMIT ")?;
        if limit.comma_form {
            write_expr(f, limit.offset.as_ref().expect("comma-form limit has offset"))?;
            f.write_str(", ")?;
            write_expr(f, &limit.count)?;
        } else {
            write_expr(f, &limit.count)?;
            if let Some(off) = &limit.offset {
                f.write_str(" OFFSET ")?;
                write_expr(f, off)?;
            }
        }
    }
    Ok(())
}

fn write_order_items(f: &mut dyn Write, items: &[OrderItem]) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write_expr(f, &item.expr)?;
        match item.asc {
            Some(true) => f.write_str(" ASC")?,
            Some(false) => f.write_str(" DESC")?,
            None => {}
        }
        match item.nulls {
            Some(NullsOrder::First) => f.write_str(" NULLS FIRST")?,
            Some(NullsOrder::Last) => f.write_str(" NULLS LAST")?,
            None => {}
        }
    }
    Ok(())
}

fn write_set_expr(f: &mut dyn Write, body: &SetExpr) -> fmt::Result {
    match body {
        SetExpr::Select(s) => write_select(f, s),
        SetExpr::Values(rows) => {
            f.write_str("VALUES ")?;
            for (i, row) in rows.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                f.write_str("(")?;
                write_expr_list(f, row)?;
                f.write_str(")")?;
            }
            Ok(())
        }
        SetExpr::Compound { op, left, right } => {
            write_set_expr(f, left)?;
            write!(f, " {} ", op.keyword())?;
            write_set_expr(f, right)
        }
    }
}

fn write_select(f: &mut dyn Write, s: &Select) -> fmt::Result {
    f.write_str("SELECT ")?;
    if s.distinct {
        f.write_str("DISTINCT ")?;
    }
    for (i, item) in s.items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        match item {
            SelectItem::Wildcard => f.write_str("*")?,
            SelectItem::QualifiedWildcard(t) => write!(f, "{}.*", quote_ident(t))?,
            SelectItem::Expr { expr, alias } => {
                write_expr(f, expr)?;
                if let Some(a) = alias {
                    write!(f, " AS {}", quote_ident(a))?;
                }
            }
        }
    }
    if let Some(from) = &s.from {
        f.write_str(" FROM ")?;
        write_from(f, from)?;
    }
    if let Some(w) = &s.selection {
        f.write_str(" WHERE ")?;
        write_expr(f, w)?;
    }
    if !s.group_by.is_empty() {
        f.write_str(" GROUP BY ")?;
        write_expr_list(f, &s.group_by)?;
    }
    if let Some(h) = &s.having {
        f.write_str(" HAVING ")?;
        write_expr(f, h)?;
    }
    Ok(())
}

fn write_from(f: &mut dyn Write, from: &FromClause) -> fmt::Result {
    write_factor(f, &from.base)?;
    for join in &from.joins {
        if join.kind == JoinKind::Comma {
            f.write_str(", ")?;
        } else {
            f.write_str(" ")?;
            if join.natural {
                f.write_str("NATURAL ")?;
            }
            f.write_str(join.kind.keyword())?;
            f.write_str(" ")?;
        }
        write_factor(f, &join.factor)?;
        match &join.constraint {
            JoinConstraint::None => {}
            JoinConstraint::On(e) => {
                f.write_str(" ON ")?;
                write_expr(f, e)?;
            }
            JoinConstraint::Using(cols) => {
                let cols: Vec<String> = cols.iter().map(quote_ident).collect();
                write!(f, " USING ({})", cols.join(", "))?;
            }
        }
    }
    Ok(())
}

fn write_alias(f: &mut dyn Write, alias: &Option<Ident>) -> fmt::Result {
    if let Some(a) = alias {
        write!(f, " AS {}", quote_ident(a))?;
    }
    Ok(())
}

fn write_factor(f: &mut dyn Write, factor: &TableFactor) -> fmt::Result {
    match factor {
        TableFactor::Table { schema, name, alias } => {
            if let Some(s) = schema {
                write!(f, "{}.", quote_ident(s))?;
            }
            f.write_str(&quote_ident(name))?;
            write_alias(f, alias)
        }
        TableFactor::Derived { subquery, alias } => {
            f.write_str("(")?;
            write_query(f, subquery)?;
            f.write_str(")")?;
            write_alias(f, alias)
        }
        TableFactor::Function { name, args, alias } => {
            write!(f, "{}(", quote_ident(name))?;
            write_expr_list(f, args)?;
            f.write_str(")")?;
            write_alias(f, alias)
        }
        TableFactor::Nested(inner) => {
            f.write_str("(")?;
            write_from(f, inner)?;
            f.write_str(")")
        }
    }
}

fn write_expr_list(f: &mut dyn Write, list: &[Expr]) -> fmt::Result {
    for (i, e) in list.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write_expr(f, e)?;
    }
    Ok(())
}

/// Writes `e`, parenthesized if it binds looser than `min_prec`.
fn write_operand(f: &mut dyn Write, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        f.write_str("(")?;
        write_expr(f, e)?;
        f.write_str(")")
    } else {
        write_expr(f, e)
    }
}

fn write_literal(f: &mut dyn Write, lit: &Literal) -> fmt::Result {
    match lit {
        Literal::Number(n) => f.write_str(n),
        Literal::String(s) => f.write_str(&quote_string(s)),
        Literal::Blob(b) => write!(f, "X'{b}'"),
        Literal::Null => f.write_str("NULL"),
        Literal::True => f.write_str("TRUE"),
        Literal::False => f.write_str("FALSE"),
        Literal::CurrentDate => f.write_str("CURRENT_DATE"),
        Literal::CurrentTime => f.write_str("CURRENT_TIME"),
        Literal::CurrentTimestamp => f.write_str("CURRENT_TIMESTAMP"),
    }
}

fn write_expr(f: &mut dyn Write, e: &Expr) -> fmt::Result {
    match e {
        Expr::Column(c) => {
            for q in &c.qualifier {
                write!(f, "{}.", quote_ident(q))?;
            }
            f.write_str(&quote_ident(&c.name))
        }
        Expr::Literal(lit) => write_literal(f, lit),
        Expr::Param(p) => f.write_str(p),
        Expr::Unary { op, expr } => {
            let (sym, p) = match op {
                UnaryOp::Neg => ("-", prec::UNARY),
                UnaryOp::Pos => ("+", prec::UNARY),
                UnaryOp::BitNot => ("~", prec::UNARY),
                UnaryOp::Not => ("NOT ", prec::NOT),
            };
            f.write_str(sym)?;
            // avoid `--x` turning into a comment
            if matches!(op, UnaryOp::Neg) && matches!(**expr, Expr::Unary { op: UnaryOp::Neg, .. }) {
                f.write_str("(")?;
                write_expr(f, expr)?;
                return f.write_str(")");
            }
            // `NOT (EXISTS ...)` must not collapse into `NOT EXISTS`
            if matches!(op, UnaryOp::Not) && matches!(**expr, Expr::Exists { negated: false, .. }) {
                f.write_str("(")?;
                write_expr(f, expr)?;
                return f.write_str(")");
            }
            write_operand(f, expr, p)
        }
        Expr::Binary { left, op, right } => {
            let p = op.precedence();
            write_operand(f, left, p)?;
            write!(f, " {} ", op.symbol())?;
            write_operand(f, right, p + 1)
        }
        Expr::Like { negated, op, expr, pattern, escape } => {
            write_operand(f, expr, prec::EQUALITY)?;
            f.write_str(if *negated { " NOT " } else { " " })?;
            f.write_str(op.keyword())?;
            f.write_str(" ")?;
            write_operand(f, pattern, prec::EQUALITY + 1)?;
            if let Some(esc) = escape {
                f.write_str(" ESCAPE ")?;
                write_operand(f, esc, prec::EQUALITY + 1)?;
            }
            Ok(())
        }
        Expr::Between { negated, expr, low, high } => {
            write_operand(f, expr, prec::EQUALITY)?;
            f.write_str(if *negated { " NOT BETWEEN " } else { " BETWEEN " })?;
            write_operand(f, low, prec::COMPARISON)?;
            f.write_str(" AND ")?;
            write_operand(f, high, prec::COMPARISON)
        }
        Expr::InList { negated, expr, list } => {
            write_operand(f, expr, prec::EQUALITY)?;
            f.write_str(if *negated { " NOT IN (" } else { " IN (" })?;
            write_expr_list(f, list)?;
            f.write_str(")")
        }
        Expr::InSubquery { negated, expr, query } => {
            write_operand(f, expr, prec::EQUALITY)?;
            f.write_str(if *negated { " NOT IN (" } else { " IN (" })?;
            write_query(f, query)?;
            f.write_str(")")
        }
        Expr::IsNull { negated, expr } => {
            write_operand(f, expr, prec::EQUALITY)?;
            f.write_str(if *negated { " IS NOT NULL" } else { " IS NULL" })
        }
        Expr::Function { name, distinct, args, filter, over } => {
            write!(f, "{}(", quote_ident(name))?;
            match args {
                FunctionArgs::Star => f.write_str("*")?,
                FunctionArgs::List(list) => {
                    if *distinct {
                        f.write_str("DISTINCT ")?;
                    }
                    write_expr_list(f, list)?;
                }
            }
            f.write_str(")")?;
            if let Some(cond) = filter {
                f.write_str(" FILTER (WHERE ")?;
                write_expr(f, cond)?;
                f.write_str(")")?;
            }
            if let Some(w) = over {
                f.write_str(" OVER (")?;
                let mut wrote = false;
                if !w.partition_by.is_empty() {
                    f.write_str("PARTITION BY ")?;
                    write_expr_list(f, &w.partition_by)?;
                    wrote = true;
                }
                if !w.order_by.is_empty() {
                    if wrote {
                        f.write_str(" ")?;
                    }
                    f.write_str("ORDER BY ")?;
                    write_order_items(f, &w.order_by)?;
                }
                f.write_str(")")?;
            }
            Ok(())
        }
        Expr::Cast { expr, type_name } => {
            f.write_str("CAST(")?;
            write_expr(f, expr)?;
            write!(f, " AS {type_name})")
        }
        Expr::Case { operand, whens, else_result } => {
            f.write_str("CASE")?;
            if let Some(op) = operand {
                f.write_str(" ")?;
                write_expr(f, op)?;
            }
            for (cond, result) in whens {
                f.write_str(" WHEN ")?;
                write_expr(f, cond)?;
                f.write_str(" THEN ")?;
                write_expr(f, result)?;
            }
            if let Some(e) = else_result {
                f.write_str(" ELSE ")?;
                write_expr(f, e)?;
            }
            f.write_str(" END")
        }
        Expr::Subquery(q) => {
            f.write_str("(")?;
            write_query(f, q)?;
            f.write_str(")")
        }
        Expr::Exists { negated, query } => {
            f.write_str(if *negated { "NOT EXISTS (" } else { "EXISTS (" })?;
            write_query(f, query)?;
            f.write_str(")")
        }
        Expr::Tuple(list) => {
            f.write_str("(")?;
            write_expr_list(f, list)?;
            f.write_str(")")
        }
        Expr::Collate { expr, collation } => {
            write_operand(f, expr, prec::COLLATE)?;
            write!(f, " COLLATE {}", quote_ident(collation))
        }
    }
}
