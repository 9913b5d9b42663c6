use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::ParseError;

/// Words that can never be bare identifiers or implicit aliases.
const RESERVED: &[&str] = &[
    "ALL", "ALTER", "AND", "AS", "ASC", "BETWEEN", "BY", "CASE", "CAST", "COLLATE", "CREATE", "CROSS",
    "CURRENT_DATE", "CURRENT_TIME", "CURRENT_TIMESTAMP", "DELETE", "DESC", "DISTINCT", "DROP", "ELSE",
    "END", "ESCAPE", "EXCEPT", "EXISTS", "FILTER", "FROM", "FULL", "GLOB", "GROUP", "HAVING", "IN",
    "INDEX", "INNER", "INSERT", "INTERSECT", "INTO", "IS", "ISNULL", "JOIN", "LEFT", "LIKE", "LIMIT",
    "MATCH", "NATURAL", "NOT", "NOTNULL", "NULL", "NULLS", "OFFSET", "ON", "OR", "ORDER", "OUTER",
    "OVER", "REGEXP", "RIGHT", "SELECT", "SET", "TABLE", "THEN", "UNION", "UPDATE", "USING", "VALUES",
    "WHEN", "WHERE", "WINDOW", "WITH",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

pub struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    pub fn new(text: &str) -> Result<Self, ParseError> {
        Ok(Parser { tokens: tokenize(text)?, pos: 0 })
    }

    pub fn parse_statement(&mut self) -> Result<SqlTree, ParseError> {
        if self.peek_keyword_any(&["INSERT", "UPDATE", "DELETE", "CREATE", "DROP", "ALTER", "REPLACE", "PRAGMA", "ATTACH"]) {
            return Err(self.error("a SELECT statement (only read queries are supported)"));
        }
        let query = self.parse_query()?;
        while self.eat_symbol(";") {}
        if !matches!(self.peek().kind, TokenKind::Eof) {
            return Err(self.error("end of statement"));
        }
        Ok(SqlTree { query })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Token {
        let idx = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[idx]
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    fn error(&self, expected: &str) -> ParseError {
        let tok = self.peek();
        ParseError::with_found(tok.offset, expected, tok.describe())
    }

    fn token_is_keyword(tok: &Token, kw: &str) -> bool {
        matches!(&tok.kind, TokenKind::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        Self::token_is_keyword(self.peek(), kw)
    }

    fn peek_keyword_any(&self, kws: &[&str]) -> bool {
        kws.iter().any(|k| self.peek_keyword(k))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(kw))
        }
    }

    fn peek_symbol(&self, sym: &str) -> bool {
        matches!(self.peek().kind, TokenKind::Symbol(s) if s == sym)
    }

    fn eat_symbol(&mut self, sym: &str) -> bool {
        if self.peek_symbol(sym) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_symbol(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_symbol(sym) {
            Ok(())
        } else {
            Err(self.error(&format!("`{sym}`")))
        }
    }

    fn peek_is_identifier(&self) -> bool {
        match &self.peek().kind {
            TokenKind::Word(w) => !is_reserved(w),
            TokenKind::QuotedIdent { .. } => true,
            _ => false,
        }
    }

    fn parse_ident(&mut self) -> Result<Ident, ParseError> {
        match &self.peek().kind {
            TokenKind::Word(w) if !is_reserved(w) => {
                let ident = Ident::new(w.clone());
                self.advance();
                Ok(ident)
            }
            TokenKind::QuotedIdent { value, quote } => {
                let ident = Ident::quoted(value.clone(), *quote);
                self.advance();
                Ok(ident)
            }
            _ => Err(self.error("identifier")),
        }
    }

    /// Alias after `AS`, which may also be a string literal in SQLite.
    fn parse_alias_after_as(&mut self) -> Result<Ident, ParseError> {
        if let TokenKind::String(s) = &self.peek().kind {
            let ident = Ident::quoted(s.clone(), '\'');
            self.advance();
            return Ok(ident);
        }
        self.parse_ident()
    }

    fn parse_optional_alias(&mut self) -> Result<Option<Ident>, ParseError> {
        if self.eat_keyword("AS") {
            return Ok(Some(self.parse_alias_after_as()?));
        }
        if self.peek_is_identifier() {
            return Ok(Some(self.parse_ident()?));
        }
        if let TokenKind::String(s) = &self.peek().kind {
            let ident = Ident::quoted(s.clone(), '\'');
            self.advance();
            return Ok(Some(ident));
        }
        Ok(None)
    }

    pub fn parse_query(&mut self) -> Result<Query, ParseError> {
        let with = if self.eat_keyword("WITH") {
            let recursive = self.eat_keyword("RECURSIVE");
            let mut ctes = Vec::new();
            loop {
                let name = self.parse_ident()?;
                let mut columns = Vec::new();
                if self.eat_symbol("(") {
                    loop {
                        columns.push(self.parse_ident()?);
                        if !self.eat_symbol(",") {
                            break;
                        }
                    }
                    self.expect_symbol(")")?;
                }
                self.expect_keyword("AS")?;
                if self.eat_keyword("NOT") {
                    self.expect_keyword("MATERIALIZED")?;
                } else {
                    self.eat_keyword("MATERIALIZED");
                }
                self.expect_symbol("(")?;
                let query = self.parse_query()?;
                self.expect_symbol(")")?;
                ctes.push(Cte { name, columns, query: Box::new(query) });
                if !self.eat_symbol(",") {
                    break;
                }
            }
            Some(With { recursive, ctes })
        } else {
            None
        };

        let mut body = self.parse_select_core()?;
        loop {
            let op = if self.eat_keyword("UNION") {
                if self.eat_keyword("ALL") {
                    CompoundOp::UnionAll
                } else {
                    CompoundOp::Union
                }
            } else if self.eat_keyword("INTERSECT") {
                CompoundOp::Intersect
            } else if self.eat_keyword("EXCEPT") {
                CompoundOp::Except
            } else {
                break;
            };
            let right = self.parse_select_core()?;
            body = SetExpr::Compound { op, left: Box::new(body), right: Box::new(right) };
        }

        let order_by = if self.peek_keyword("ORDER") {
            self.advance();
            self.expect_keyword("BY")?;
            self.parse_order_items()?
        } else {
            Vec::new()
        };

        let limit = if self.eat_keyword("LIMIT") {
            let first = self.parse_expr()?;
            if self.eat_keyword("OFFSET") {
                Some(Limit { count: first, offset: Some(self.parse_expr()?), comma_form: false })
            } else if self.eat_symbol(",") {
                Some(Limit { count: self.parse_expr()?, offset: Some(first), comma_form: true })
            } else {
                Some(Limit { count: first, offset: None, comma_form: false })
            }
        } else {
            None
        };

        Ok(Query { with, body, order_by, limit })
    }

    fn parse_order_items(&mut self) -> Result<Vec<OrderItem>, ParseError> {
        let mut items = Vec::new();
        loop {
            let expr = self.parse_expr()?;
            let asc = if self.eat_keyword("ASC") {
                Some(true)
            } else if self.eat_keyword("DESC") {
                Some(false)
            } else {
                None
            };
            let nulls = if self.eat_keyword("NULLS") {
                if self.eat_keyword("FIRST") {
                    Some(NullsOrder::First)
                } else {
                    self.expect_keyword("LAST")?;
                    Some(NullsOrder::Last)
                }
            } else {
                None
            };
            items.push(OrderItem { expr, asc, nulls });
            if !self.eat_symbol(",") {
                break;
            }
        }
        Ok(items)
    }

    fn parse_select_core(&mut self) -> Result<SetExpr, ParseError> {
        if self.eat_keyword("VALUES") {
            let mut rows = Vec::new();
            loop {
                self.expect_symbol("(")?;
                rows.push(self.parse_expr_list()?);
                self.expect_symbol(")")?;
                if !self.eat_symbol(",") {
                    break;
                }
            }
            return Ok(SetExpr::Values(rows));
        }
        if self.peek_symbol("(") && Self::token_is_keyword(self.peek_at(1), "SELECT") {
            // parenthesized compound operand is not SQLite, but a bare parenthesized
            // SELECT at statement level is a common LLM habit; reject explicitly
            return Err(self.error("SELECT (parenthesized compound operands are not SQLite)"));
        }
        self.expect_keyword("SELECT")?;
        let distinct = if self.eat_keyword("DISTINCT") {
            true
        } else {
            self.eat_keyword("ALL");
            false
        };
        let mut items = Vec::new();
        loop {
            items.push(self.parse_select_item()?);
            if !self.eat_symbol(",") {
                break;
            }
        }
        let from = if self.eat_keyword("FROM") { Some(self.parse_from()?) } else { None };
        let selection = if self.eat_keyword("WHERE") { Some(self.parse_expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.peek_keyword("GROUP") {
            self.advance();
            self.expect_keyword("BY")?;
            group_by = self.parse_expr_list()?;
        }
        let having = if self.eat_keyword("HAVING") { Some(self.parse_expr()?) } else { None };
        Ok(SetExpr::Select(Box::new(Select { distinct, items, from, selection, group_by, having })))
    }

    fn parse_select_item(&mut self) -> Result<SelectItem, ParseError> {
        if self.eat_symbol("*") {
            return Ok(SelectItem::Wildcard);
        }
        if self.peek_is_identifier()
            && matches!(self.peek_at(1).kind, TokenKind::Symbol("."))
            && matches!(self.peek_at(2).kind, TokenKind::Symbol("*"))
        {
            let table = self.parse_ident()?;
            self.advance();
            self.advance();
            return Ok(SelectItem::QualifiedWildcard(table));
        }
        let expr = self.parse_expr()?;
        let alias = self.parse_optional_alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn parse_from(&mut self) -> Result<FromClause, ParseError> {
        let base = self.parse_table_factor()?;
        let mut joins = Vec::new();
        loop {
            if self.eat_symbol(",") {
                let factor = self.parse_table_factor()?;
                joins.push(Join { natural: false, kind: JoinKind::Comma, factor, constraint: JoinConstraint::None });
                continue;
            }
            let natural = self.eat_keyword("NATURAL");
            let kind = if self.eat_keyword("JOIN") {
                JoinKind::Plain
            } else if self.eat_keyword("INNER") {
                self.expect_keyword("JOIN")?;
                JoinKind::Inner
            } else if self.eat_keyword("CROSS") {
                self.expect_keyword("JOIN")?;
                JoinKind::Cross
            } else if self.peek_keyword_any(&["LEFT", "RIGHT", "FULL"]) {
                let word = self.advance();
                let outer = self.eat_keyword("OUTER");
                self.expect_keyword("JOIN")?;
                match (Self::token_is_keyword(&word, "LEFT"), Self::token_is_keyword(&word, "RIGHT"), outer) {
                    (true, _, false) => JoinKind::Left,
                    (true, _, true) => JoinKind::LeftOuter,
                    (_, true, false) => JoinKind::Right,
                    (_, true, true) => JoinKind::RightOuter,
                    (_, _, false) => JoinKind::Full,
                    (_, _, true) => JoinKind::FullOuter,
                }
            } else if natural {
                return Err(self.error("JOIN after NATURAL"));
            } else {
                break;
            };
            let factor = self.parse_table_factor()?;
            let constraint = if self.eat_keyword("ON") {
                JoinConstraint::On(self.parse_expr()?)
            } else if self.eat_keyword("USING") {
                self.expect_symbol("(")?;
                let mut cols = Vec::new();
                loop {
                    cols.push(self.parse_ident()?);
                    if !self.eat_symbol(",") {
                        break;
                    }
                }
                self.expect_symbol(")")?;
                JoinConstraint::Using(cols)
            } else {
                JoinConstraint::None
            };
            joins.push(Join { natural, kind, factor, constraint });
        }
        Ok(FromClause { base, joins })
    }

    fn parse_table_factor(&mut self) -> Result<TableFactor, ParseError> {
        if self.eat_symbol("(") {
            if self.peek_keyword("SELECT") || self.peek_keyword("WITH") || self.peek_keyword("VALUES") {
                let subquery = self.parse_query()?;
                self.expect_symbol(")")?;
                let alias = self.parse_optional_alias()?;
                return Ok(TableFactor::Derived { subquery: Box::new(subquery), alias });
            }
            let inner = self.parse_from()?;
            self.expect_symbol(")")?;
            return Ok(TableFactor::Nested(Box::new(inner)));
        }
        let first = self.parse_ident()?;
        if self.eat_symbol("(") {
            let args = if self.peek_symbol(")") { Vec::new() } else { self.parse_expr_list()? };
            self.expect_symbol(")")?;
            let alias = self.parse_optional_alias()?;
            return Ok(TableFactor::Function { name: first, args, alias });
        }
        let (schema, name) = if self.eat_symbol(".") { (Some(first), self.parse_ident()?) } else { (None, first) };
        let alias = self.parse_optional_alias()?;
        if self.eat_keyword("INDEXED") {
            self.expect_keyword("BY")?;
            self.parse_ident()?;
        } else if self.peek_keyword("NOT") && Self::token_is_keyword(self.peek_at(1), "INDEXED") {
            self.advance();
            self.advance();
        }
        Ok(TableFactor::Table { schema, name, alias })
    }

    fn parse_expr_list(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut out = Vec::new();
        loop {
            out.push(self.parse_expr()?);
            if !self.eat_symbol(",") {
                break;
            }
        }
        Ok(out)
    }

    pub fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        self.parse_expr_prec(0)
    }

    fn parse_expr_prec(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut left = self.parse_prefix()?;
        loop {
            let tok = self.peek().clone();
            // postfix and special operators at equality level
            if min_prec <= prec::EQUALITY {
                if let Some(expr) = self.try_parse_equality_postfix(&left)? {
                    left = expr;
                    continue;
                }
            }
            if min_prec <= prec::COLLATE && self.peek_keyword("COLLATE") {
                self.advance();
                let collation = self.parse_ident()?;
                left = Expr::Collate { expr: Box::new(left), collation };
                continue;
            }
            let op = match &tok.kind {
                TokenKind::Word(w) if w.eq_ignore_ascii_case("OR") => BinaryOp::Or,
                TokenKind::Word(w) if w.eq_ignore_ascii_case("AND") => BinaryOp::And,
                TokenKind::Word(w) if w.eq_ignore_ascii_case("IS") => {
                    if Self::token_is_keyword(self.peek_at(1), "NOT") {
                        BinaryOp::IsNot
                    } else {
                        BinaryOp::Is
                    }
                }
                TokenKind::Symbol(s) => match *s {
                    "=" => BinaryOp::Eq,
                    "==" => BinaryOp::EqEq,
                    "!=" => BinaryOp::NotEq,
                    "<>" => BinaryOp::LtGt,
                    "<" => BinaryOp::Lt,
                    "<=" => BinaryOp::LtEq,
                    ">" => BinaryOp::Gt,
                    ">=" => BinaryOp::GtEq,
                    "&" => BinaryOp::BitAnd,
                    "|" => BinaryOp::BitOr,
                    "<<" => BinaryOp::ShiftLeft,
                    ">>" => BinaryOp::ShiftRight,
                    "+" => BinaryOp::Plus,
                    "-" => BinaryOp::Minus,
                    "*" => BinaryOp::Mul,
                    "/" => BinaryOp::Div,
                    "%" => BinaryOp::Mod,
                    "||" => BinaryOp::Concat,
                    "->" => BinaryOp::Arrow,
                    "->>" => BinaryOp::LongArrow,
                    _ => break,
                },
                _ => break,
            };
            let p = op.precedence();
            if p < min_prec {
                break;
            }
            self.advance();
            if matches!(op, BinaryOp::IsNot) {
                self.advance();
            }
            if matches!(op, BinaryOp::Is | BinaryOp::IsNot) && self.peek_keyword("NULL") {
                self.advance();
                left = Expr::IsNull { negated: matches!(op, BinaryOp::IsNot), expr: Box::new(left) };
                continue;
            }
            let right = self.parse_expr_prec(p + 1)?;
            left = Expr::Binary { left: Box::new(left), op, right: Box::new(right) };
        }
        Ok(left)
    }

    /// IN / LIKE / BETWEEN / ISNULL family, optionally prefixed by NOT.
    fn try_parse_equality_postfix(&mut self, left: &Expr) -> Result<Option<Expr>, ParseError> {
        let negated = self.peek_keyword("NOT")
            && (Self::token_is_keyword(self.peek_at(1), "IN")
                || Self::token_is_keyword(self.peek_at(1), "LIKE")
                || Self::token_is_keyword(self.peek_at(1), "GLOB")
                || Self::token_is_keyword(self.peek_at(1), "REGEXP")
                || Self::token_is_keyword(self.peek_at(1), "MATCH")
                || Self::token_is_keyword(self.peek_at(1), "BETWEEN")
                || Self::token_is_keyword(self.peek_at(1), "NULL"));
        if negated {
            self.advance();
        }
        let boxed = || Box::new(left.clone());
        if self.eat_keyword("ISNULL") {
            return Ok(Some(Expr::IsNull { negated: false, expr: boxed() }));
        }
        if self.eat_keyword("NOTNULL") {
            return Ok(Some(Expr::IsNull { negated: true, expr: boxed() }));
        }
        if negated && self.eat_keyword("NULL") {
            return Ok(Some(Expr::IsNull { negated: true, expr: boxed() }));
        }
        if self.eat_keyword("IN") {
            self.expect_symbol("(")?;
            if self.peek_keyword("SELECT") || self.peek_keyword("WITH") || self.peek_keyword("VALUES") {
                let query = self.parse_query()?;
                self.expect_symbol(")")?;
                return Ok(Some(Expr::InSubquery { negated, expr: boxed(), query: Box::new(query) }));
            }
            let list = if self.peek_symbol(")") { Vec::new() } else { self.parse_expr_list()? };
            self.expect_symbol(")")?;
            return Ok(Some(Expr::InList { negated, expr: boxed(), list }));
        }
        let like = if self.eat_keyword("LIKE") {
            Some(LikeOp::Like)
        } else if self.eat_keyword("GLOB") {
            Some(LikeOp::Glob)
        } else if self.eat_keyword("REGEXP") {
            Some(LikeOp::Regexp)
        } else if self.eat_keyword("MATCH") {
            Some(LikeOp::Match)
        } else {
            None
        };
        if let Some(op) = like {
            let pattern = self.parse_expr_prec(prec::EQUALITY + 1)?;
            let escape = if self.eat_keyword("ESCAPE") {
                Some(Box::new(self.parse_expr_prec(prec::EQUALITY + 1)?))
            } else {
                None
            };
            return Ok(Some(Expr::Like { negated, op, expr: boxed(), pattern: Box::new(pattern), escape }));
        }
        if self.eat_keyword("BETWEEN") {
            let low = self.parse_expr_prec(prec::COMPARISON)?;
            self.expect_keyword("AND")?;
            let high = self.parse_expr_prec(prec::COMPARISON)?;
            return Ok(Some(Expr::Between { negated, expr: boxed(), low: Box::new(low), high: Box::new(high) }));
        }
        if negated {
            return Err(self.error("IN, LIKE, BETWEEN or NULL after NOT"));
        }
        Ok(None)
    }

    fn parse_prefix(&mut self) -> Result<Expr, ParseError> {
        let tok = self.peek().clone();
        match &tok.kind {
            TokenKind::Symbol("-") => {
                self.advance();
                Ok(Expr::Unary { op: UnaryOp::Neg, expr: Box::new(self.parse_expr_prec(prec::UNARY)?) })
            }
            TokenKind::Symbol("+") => {
                self.advance();
                Ok(Expr::Unary { op: UnaryOp::Pos, expr: Box::new(self.parse_expr_prec(prec::UNARY)?) })
            }
            TokenKind::Symbol("~") => {
                self.advance();
                Ok(Expr::Unary { op: UnaryOp::BitNot, expr: Box::new(self.parse_expr_prec(prec::UNARY)?) })
            }
            TokenKind::Word(w) if w.eq_ignore_ascii_case("NOT") => {
                self.advance();
                if self.eat_keyword("EXISTS") {
                    self.expect_symbol("(")?;
                    let query = self.parse_query()?;
                    self.expect_symbol(")")?;
                    return Ok(Expr::Exists { negated: true, query: Box::new(query) });
                }
                Ok(Expr::Unary { op: UnaryOp::Not, expr: Box::new(self.parse_expr_prec(prec::NOT)?) })
            }
            _ => self.parse_primary(),
        }
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::Number(n) => {
                self.advance();
                Ok(Expr::Literal(Literal::Number(n)))
            }
            TokenKind::String(s) => {
                self.advance();
                Ok(Expr::Literal(Literal::String(s)))
            }
            TokenKind::Blob(b) => {
                self.advance();
                Ok(Expr::Literal(Literal::Blob(b)))
            }
            TokenKind::Param(p) => {
                self.advance();
                Ok(Expr::Param(p))
            }
            TokenKind::Symbol("(") => {
                self.advance();
                if self.peek_keyword("SELECT") || self.peek_keyword("WITH") || self.peek_keyword("VALUES") {
                    let query = self.parse_query()?;
                    self.expect_symbol(")")?;
                    return Ok(Expr::Subquery(Box::new(query)));
                }
                let mut list = self.parse_expr_list()?;
                self.expect_symbol(")")?;
                if list.len() == 1 {
                    Ok(list.pop().unwrap())
                } else {
                    Ok(Expr::Tuple(list))
                }
            }
            TokenKind::Word(ref w) => {
                let upper = w.to_ascii_uppercase();
                match upper.as_str() {
                    "NULL" => {
                        self.advance();
                        Ok(Expr::Literal(Literal::Null))
                    }
                    "CURRENT_DATE" => {
                        self.advance();
                        Ok(Expr::Literal(Literal::CurrentDate))
                    }
                    "CURRENT_TIME" => {
                        self.advance();
                        Ok(Expr::Literal(Literal::CurrentTime))
                    }
                    "CURRENT_TIMESTAMP" => {
                        self.advance();
                        Ok(Expr::Literal(Literal::CurrentTimestamp))
                    }
                    "TRUE" if !matches!(self.peek_at(1).kind, TokenKind::Symbol("(") | TokenKind::Symbol(".")) => {
                        self.advance();
                        Ok(Expr::Literal(Literal::True))
                    }
                    "FALSE" if !matches!(self.peek_at(1).kind, TokenKind::Symbol("(") | TokenKind::Symbol(".")) => {
                        self.advance();
                        Ok(Expr::Literal(Literal::False))
                    }
                    "EXISTS" => {
                        self.advance();
                        self.expect_symbol("(")?;
                        let query = self.parse_query()?;
                        self.expect_symbol(")")?;
                        Ok(Expr::Exists { negated: false, query: Box::new(query) })
                    }
                    "CASE" => self.parse_case(),
                    "CAST" => {
                        self.advance();
                        self.expect_symbol("(")?;
                        let expr = self.parse_expr()?;
                        self.expect_keyword("AS")?;
                        let type_name = self.parse_type_name()?;
                        self.expect_symbol(")")?;
                        Ok(Expr::Cast { expr: Box::new(expr), type_name })
                    }
                    _ => self.parse_name_expr(),
                }
            }
            TokenKind::QuotedIdent { .. } => self.parse_name_expr(),
            _ => Err(self.error("expression")),
        }
    }

    fn parse_type_name(&mut self) -> Result<String, ParseError> {
        let mut parts = Vec::new();
        while let TokenKind::Word(w) = &self.peek().kind {
            parts.push(w.clone());
            self.advance();
        }
        if parts.is_empty() {
            return Err(self.error("type name"));
        }
        let mut name = parts.join(" ");
        if self.eat_symbol("(") {
            let mut args = Vec::new();
            loop {
                let neg = self.eat_symbol("-");
                match self.advance().kind {
                    TokenKind::Number(n) => args.push(if neg { format!("-{n}") } else { n }),
                    _ => return Err(self.error("numeric type argument")),
                }
                if !self.eat_symbol(",") {
                    break;
                }
            }
            self.expect_symbol(")")?;
            name = format!("{name}({})", args.join(", "));
        }
        Ok(name)
    }

    fn parse_case(&mut self) -> Result<Expr, ParseError> {
        self.expect_keyword("CASE")?;
        let operand = if self.peek_keyword("WHEN") { None } else { Some(Box::new(self.parse_expr()?)) };
        let mut whens = Vec::new();
        while self.eat_keyword("WHEN") {
            let cond = self.parse_expr()?;
            self.expect_keyword("THEN")?;
            let result = self.parse_expr()?;
            whens.push((cond, result));
        }
        if whens.is_empty() {
            return Err(self.error("WHEN"));
        }
        let else_result = if self.eat_keyword("ELSE") { Some(Box::new(self.parse_expr()?)) } else { None };
        self.expect_keyword("END")?;
        Ok(Expr::Case { operand, whens, else_result })
    }

    /// Column reference or function call.
    fn parse_name_expr(&mut self) -> Result<Expr, ParseError> {
        // function names may be words that are otherwise reserved-free identifiers
        let first = match &self.peek().kind {
            TokenKind::Word(w) if matches!(self.peek_at(1).kind, TokenKind::Symbol("(")) && !is_reserved(w) => {
                let ident = Ident::new(w.clone());
                self.advance();
                ident
            }
            _ => self.parse_ident()?,
        };
        if self.eat_symbol("(") {
            return self.parse_function_rest(first);
        }
        let mut parts = vec![first];
        while self.peek_symbol(".") {
            self.advance();
            parts.push(self.parse_ident()?);
        }
        if parts.len() > 3 {
            return Err(ParseError::new(self.peek().offset, "at most schema.table.column qualification"));
        }
        let name = parts.pop().unwrap();
        Ok(Expr::Column(ColumnRef { qualifier: parts, name, resolved: None }))
    }

    fn parse_function_rest(&mut self, name: Ident) -> Result<Expr, ParseError> {
        let mut distinct = false;
        let args = if self.eat_symbol("*") {
            FunctionArgs::Star
        } else if self.peek_symbol(")") {
            FunctionArgs::List(Vec::new())
        } else {
            distinct = self.eat_keyword("DISTINCT");
            FunctionArgs::List(self.parse_expr_list()?)
        };
        self.expect_symbol(")")?;
        let filter = if self.peek_keyword("FILTER") {
            self.advance();
            self.expect_symbol("(")?;
            self.expect_keyword("WHERE")?;
            let cond = self.parse_expr()?;
            self.expect_symbol(")")?;
            Some(Box::new(cond))
        } else {
            None
        };
        let over = if self.eat_keyword("OVER") {
            self.expect_symbol("(")?;
            let mut partition_by = Vec::new();
            if self.eat_keyword("PARTITION") {
                self.expect_keyword("BY")?;
                partition_by = self.parse_expr_list()?;
            }
            let mut order_by = Vec::new();
            if self.eat_keyword("ORDER") {
                self.expect_keyword("BY")?;
                order_by = self.parse_order_items()?;
            }
            self.expect_symbol(")")?;
            Some(WindowSpec { partition_by, order_by })
        } else {
            None
        };
        Ok(Expr::Function { name, distinct, args, filter, over })
    }
}
