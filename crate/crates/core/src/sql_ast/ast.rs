use std::fmt;

/// Identifier in canonical unquoted form. Equality is exact on `value`;
/// the quote style only affects rendering.
#[derive(Debug, Clone, Eq)]
pub struct Ident {
    pub value: String,
    pub quote: Option<char>,
}

impl Ident {
    pub fn new(value: impl Into<String>) -> Self {
        Ident { value: value.into(), quote: None }
    }

    pub fn quoted(value: impl Into<String>, quote: char) -> Self {
        Ident { value: value.into(), quote: Some(quote) }
    }

    /// Case-insensitive comparison, following SQLite name resolution.
    pub fn matches(&self, other: &str) -> bool {
        self.value.eq_ignore_ascii_case(other)
    }
}

impl PartialEq for Ident {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl fmt::Display for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}

/// A parsed statement. Only read queries are representable.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlTree {
    pub query: Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub with: Option<With>,
    pub body: SetExpr,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<Limit>,
}

impl Query {
    /// The leftmost simple SELECT of the body, if any.
    pub fn first_select(&self) -> Option<&Select> {
        self.body.first_select()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct With {
    pub recursive: bool,
    pub ctes: Vec<Cte>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cte {
    pub name: Ident,
    pub columns: Vec<Ident>,
    pub query: Box<Query>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompoundOp {
    Union,
    UnionAll,
    Intersect,
    Except,
}

impl CompoundOp {
    pub fn keyword(self) -> &'static str {
        match self {
            CompoundOp::Union => "UNION",
            CompoundOp::UnionAll => "UNION ALL",
            CompoundOp::Intersect => "INTERSECT",
            CompoundOp::Except => "EXCEPT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetExpr {
    Select(Box<Select>),
    Values(Vec<Vec<Expr>>),
    Compound { op: CompoundOp, left: Box<SetExpr>, right: Box<SetExpr> },
}

impl SetExpr {
    pub fn first_select(&self) -> Option<&Select> {
        match self {
            SetExpr::Select(s) => Some(s),
            SetExpr::Values(_) => None,
            SetExpr::Compound { left, .. } => left.first_select(),
        }
    }

    /// All simple SELECTs of a compound body, left to right.
    pub fn selects(&self) -> Vec<&Select> {
        match self {
            SetExpr::Select(s) => vec![s],
            SetExpr::Values(_) => vec![],
            SetExpr::Compound { left, right, .. } => {
                let mut out = left.selects();
                out.extend(right.selects());
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub distinct: bool,
    pub items: Vec<SelectItem>,
    pub from: Option<FromClause>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    QualifiedWildcard(Ident),
    Expr { expr: Expr, alias: Option<Ident> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FromClause {
    pub base: TableFactor,
    pub joins: Vec<Join>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableFactor {
    Table { schema: Option<Ident>, name: Ident, alias: Option<Ident> },
    Derived { subquery: Box<Query>, alias: Option<Ident> },
    Function { name: Ident, args: Vec<Expr>, alias: Option<Ident> },
    Nested(Box<FromClause>),
}

impl TableFactor {
    pub fn alias(&self) -> Option<&Ident> {
        match self {
            TableFactor::Table { alias, .. }
            | TableFactor::Derived { alias, .. }
            | TableFactor::Function { alias, .. } => alias.as_ref(),
            TableFactor::Nested(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    /// `,` in the FROM list.
    Comma,
    Plain,
    Inner,
    Left,
    LeftOuter,
    Right,
    RightOuter,
    Full,
    FullOuter,
    Cross,
}

impl JoinKind {
    pub fn keyword(self) -> &'static str {
        match self {
            JoinKind::Comma => ",",
            JoinKind::Plain => "JOIN",
            JoinKind::Inner => "INNER JOIN",
            JoinKind::Left => "LEFT JOIN",
            JoinKind::LeftOuter => "LEFT OUTER JOIN",
            JoinKind::Right => "RIGHT JOIN",
            JoinKind::RightOuter => "RIGHT OUTER JOIN",
            JoinKind::Full => "FULL JOIN",
            JoinKind::FullOuter => "FULL OUTER JOIN",
            JoinKind::Cross => "CROSS JOIN",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub natural: bool,
    pub kind: JoinKind,
    pub factor: TableFactor,
    pub constraint: JoinConstraint,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JoinConstraint {
    None,
    On(Expr),
    Using(Vec<Ident>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullsOrder {
    First,
    Last,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub expr: Expr,
    /// `Some(true)` for ASC, `Some(false)` for DESC, `None` when omitted.
    pub asc: Option<bool>,
    pub nulls: Option<NullsOrder>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Limit {
    pub count: Expr,
    pub offset: Option<Expr>,
    /// `LIMIT offset, count` spelling.
    pub comma_form: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    /// Numeric literal kept in its source spelling.
    Number(String),
    String(String),
    Blob(String),
    Null,
    True,
    False,
    CurrentDate,
    CurrentTime,
    CurrentTimestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Pos,
    Not,
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    EqEq,
    NotEq,
    LtGt,
    Is,
    IsNot,
    Lt,
    LtEq,
    Gt,
    GtEq,
    BitAnd,
    BitOr,
    ShiftLeft,
    ShiftRight,
    Plus,
    Minus,
    Mul,
    Div,
    Mod,
    Concat,
    Arrow,
    LongArrow,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "OR",
            BinaryOp::And => "AND",
            BinaryOp::Eq => "=",
            BinaryOp::EqEq => "==",
            BinaryOp::NotEq => "!=",
            BinaryOp::LtGt => "<>",
            BinaryOp::Is => "IS",
            BinaryOp::IsNot => "IS NOT",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::BitAnd => "&",
            BinaryOp::BitOr => "|",
            BinaryOp::ShiftLeft => "<<",
            BinaryOp::ShiftRight => ">>",
            BinaryOp::Plus => "+",
            BinaryOp::Minus => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "%",
            BinaryOp::Concat => "||",
            BinaryOp::Arrow => "->",
            BinaryOp::LongArrow => "->>",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::EqEq | BinaryOp::NotEq | BinaryOp::LtGt | BinaryOp::Is | BinaryOp::IsNot => {
                prec::EQUALITY
            }
            BinaryOp::Lt | BinaryOp::LtEq | BinaryOp::Gt | BinaryOp::GtEq => 5,
            BinaryOp::BitAnd | BinaryOp::BitOr | BinaryOp::ShiftLeft | BinaryOp::ShiftRight => 6,
            BinaryOp::Plus | BinaryOp::Minus => 7,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => 8,
            BinaryOp::Concat | BinaryOp::Arrow | BinaryOp::LongArrow => 9,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq
                | BinaryOp::EqEq
                | BinaryOp::NotEq
                | BinaryOp::LtGt
                | BinaryOp::Lt
                | BinaryOp::LtEq
                | BinaryOp::Gt
                | BinaryOp::GtEq
        )
    }

    pub fn is_equality(self) -> bool {
        matches!(self, BinaryOp::Eq | BinaryOp::EqEq)
    }
}

pub mod prec {
    pub const NOT: u8 = 3;
    pub const EQUALITY: u8 = 4;
    pub const COMPARISON: u8 = 5;
    pub const COLLATE: u8 = 10;
    pub const UNARY: u8 = 11;
    pub const ATOM: u8 = 12;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikeOp {
    Like,
    Glob,
    Regexp,
    Match,
}

impl LikeOp {
    pub fn keyword(self) -> &'static str {
        match self {
            LikeOp::Like => "LIKE",
            LikeOp::Glob => "GLOB",
            LikeOp::Regexp => "REGEXP",
            LikeOp::Match => "MATCH",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionArgs {
    Star,
    List(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    pub partition_by: Vec<Expr>,
    pub order_by: Vec<OrderItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRef {
    /// Zero, one (table) or two (schema, table) qualifiers.
    pub qualifier: Vec<Ident>,
    pub name: Ident,
    /// Catalog `(table, column)` once resolved; `None` is the unresolved marker.
    pub resolved: Option<(String, String)>,
}

impl ColumnRef {
    pub fn table_qualifier(&self) -> Option<&Ident> {
        self.qualifier.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(ColumnRef),
    Literal(Literal),
    Param(String),
    Unary { op: UnaryOp, expr: Box<Expr> },
    Binary { left: Box<Expr>, op: BinaryOp, right: Box<Expr> },
    Like { negated: bool, op: LikeOp, expr: Box<Expr>, pattern: Box<Expr>, escape: Option<Box<Expr>> },
    Between { negated: bool, expr: Box<Expr>, low: Box<Expr>, high: Box<Expr> },
    InList { negated: bool, expr: Box<Expr>, list: Vec<Expr> },
    InSubquery { negated: bool, expr: Box<Expr>, query: Box<Query> },
    IsNull { negated: bool, expr: Box<Expr> },
    Function {
        name: Ident,
        distinct: bool,
        args: FunctionArgs,
        filter: Option<Box<Expr>>,
        over: Option<WindowSpec>,
    },
    Cast { expr: Box<Expr>, type_name: String },
    Case { operand: Option<Box<Expr>>, whens: Vec<(Expr, Expr)>, else_result: Option<Box<Expr>> },
    Subquery(Box<Query>),
    Exists { negated: bool, query: Box<Query> },
    Tuple(Vec<Expr>),
    Collate { expr: Box<Expr>, collation: Ident },
}

pub const AGGREGATE_FUNCTIONS: &[&str] =
    &["count", "sum", "avg", "min", "max", "total", "group_concat", "string_agg"];

impl Expr {
    pub fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Like { .. } | Expr::Between { .. } | Expr::InList { .. } | Expr::InSubquery { .. } | Expr::IsNull { .. } => {
                prec::EQUALITY
            }
            Expr::Unary { op: UnaryOp::Not, .. } => prec::NOT,
            Expr::Unary { .. } => prec::UNARY,
            Expr::Collate { .. } => prec::COLLATE,
            Expr::Literal(Literal::Number(n)) if n.starts_with('-') => prec::UNARY,
            _ => prec::ATOM,
        }
    }

    /// True for an aggregate call (`MAX(x)`, `COUNT(*)`, ...) that is not a window function.
    pub fn is_aggregate_call(&self) -> bool {
        match self {
            Expr::Function { name, args, over: None, .. } => {
                let lower = name.value.to_ascii_lowercase();
                // min/max with two or more arguments are scalar functions
                if (lower == "min" || lower == "max") && matches!(args, FunctionArgs::List(a) if a.len() > 1) {
                    return false;
                }
                AGGREGATE_FUNCTIONS.contains(&lower.as_str())
            }
            _ => false,
        }
    }

    pub fn function_name(&self) -> Option<&str> {
        match self {
            Expr::Function { name, .. } => Some(&name.value),
            _ => None,
        }
    }

    pub fn as_column(&self) -> Option<&ColumnRef> {
        match self {
            Expr::Column(c) => Some(c),
            _ => None,
        }
    }
}
