//! Hand-written lexer and recursive-descent parser for the SQL subset.
//!
//! ```text
//! query     := set_expr [ORDER BY order (, order)*] [LIMIT int] [;]
//! set_expr  := select (UNION [ALL] select)*
//! select    := SELECT item (, item)* FROM from (, from)*
//!              [WHERE expr] [GROUP BY expr (, expr)*] [HAVING expr]
//! item      := * | expr [[AS] ident]
//! from      := table_ref ([INNER | LEFT [OUTER] | RIGHT [OUTER]] JOIN table_ref ON expr)*
//! table_ref := ident [[AS] ident] | ( query ) [AS] ident
//! expr      := and (OR and)*
//! and       := pred (AND pred)*
//! pred      := operand [cmp operand | [NOT] LIKE string | [NOT] IN ( query | expr, ... )]
//! operand   := literal | column | YEAR(expr) | MONTH(expr)
//!            | SUM(expr) | MAX(expr) | MIN(expr) | COUNT(* | expr) | ( expr )
//! column    := ident [. ident]
//! ```
//!
//! Keywords are case-insensitive; identifiers may be backquoted and any word
//! may follow a `.`. Arithmetic, `NOT` outside `NOT LIKE`/`NOT IN`,
//! `IS [NOT] NULL`, `BETWEEN`, `DISTINCT`, `CROSS JOIN`, other functions and
//! scalar subqueries are reported as unsupported constructs.

use super::ast::*;
use super::QueryError;
use crate::value::CmpOp;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
    Int(i64),
    Float(f64),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const RESERVED: &[&str] = &[
    "select", "from", "where", "group", "by", "having", "order", "limit", "union", "all", "join", "inner", "left",
    "right", "outer", "cross", "on", "as", "and", "or", "not", "like", "in", "asc", "desc", "is", "between",
    "distinct", "null",
];

fn lex(text: &str) -> Result<Vec<Token>, QueryError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, col, m: String| QueryError::Syntax { line, column: col, message: m };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            for _ in 0..n {
                if chars[*i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                *i += 1;
            }
        };
        macro_rules! take_while {
            ($pred:expr) => {{
                let start = i;
                while i < chars.len() && $pred(chars[i]) {
                    advance(1, &mut i);
                }
                start
            }};
        }
        if c.is_whitespace() {
            advance(1, &mut i);
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i);
            }
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let start = take_while!(|c: char| c.is_ascii_alphanumeric() || c == '_' || c == '$');
            Tok::Word(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() {
            let start = take_while!(|c: char| c.is_ascii_digit());
            let mut float = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                float = true;
                advance(1, &mut i);
                take_while!(|c: char| c.is_ascii_digit());
            }
            let s: String = chars[start..i].iter().collect();
            if float {
                Tok::Float(s.parse().map_err(|_| err(tl, tc, format!("bad number {s}")))?)
            } else {
                Tok::Int(s.parse().map_err(|_| err(tl, tc, format!("number out of range {s}")))?)
            }
        } else if c == '\'' || c == '"' || c == '`' {
            let mut s = String::new();
            advance(1, &mut i);
            loop {
                if i >= chars.len() {
                    return Err(err(tl, tc, "unterminated quoted text".into()));
                }
                if chars[i] == c {
                    if chars.get(i + 1) == Some(&c) {
                        s.push(c);
                        advance(2, &mut i);
                        continue;
                    }
                    advance(1, &mut i);
                    break;
                }
                s.push(chars[i]);
                advance(1, &mut i);
            }
            if c == '`' {
                Tok::Quoted(s)
            } else {
                Tok::Str(s)
            }
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let sym: &'static str = match two.as_str() {
                "<=" => "<=",
                ">=" => ">=",
                "<>" => "<>",
                "!=" => "!=",
                _ => match c {
                    ',' => ",",
                    '.' => ".",
                    '(' => "(",
                    ')' => ")",
                    '*' => "*",
                    '=' => "=",
                    '<' => "<",
                    '>' => ">",
                    ';' => ";",
                    '+' => "+",
                    '-' => "-",
                    '/' => "/",
                    '%' => "%",
                    _ => return Err(err(tl, tc, format!("unexpected character '{c}'"))),
                },
            };
            advance(sym.len(), &mut i);
            Tok::Sym(sym)
        };
        out.push(Token { tok, line: tl, col: tc });
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

/// Parses one query.
pub fn parse(text: &str) -> Result<QueryAst, QueryError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let q = p.query()?;
    p.eat_sym(";");
    if p.peek() != &Tok::Eof {
        return p.error("unexpected trailing input");
    }
    Ok(q)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: &str) -> Result<T, QueryError> {
        let t = &self.toks[self.pos];
        let found = match &t.tok {
            Tok::Eof => "end of input".to_string(),
            Tok::Word(w) | Tok::Quoted(w) => format!("'{w}'"),
            Tok::Str(s) => format!("'{s}'"),
            Tok::Int(i) => i.to_string(),
            Tok::Float(f) => f.to_string(),
            Tok::Sym(s) => format!("'{s}'"),
        };
        Err(QueryError::Syntax { line: t.line, column: t.col, message: format!("{message}, found {found}") })
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.error(&format!("expected {}", kw.to_ascii_uppercase()))
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.peek() == &Tok::Sym(sym_static(s)) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), QueryError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(&format!("expected '{s}'"))
        }
    }

    fn ident(&mut self) -> Result<String, QueryError> {
        match self.peek().clone() {
            Tok::Quoted(s) => {
                self.bump();
                Ok(s)
            }
            Tok::Word(w) if !RESERVED.contains(&w.to_ascii_lowercase().as_str()) => {
                self.bump();
                Ok(w)
            }
            _ => self.error("expected identifier"),
        }
    }

    /// Any word after a `.`, including keywords.
    fn member(&mut self) -> Result<String, QueryError> {
        match self.peek().clone() {
            Tok::Quoted(s) | Tok::Word(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error("expected column name"),
        }
    }

    fn query(&mut self) -> Result<QueryAst, QueryError> {
        let body = self.set_expr()?;
        let mut order_by = Vec::new();
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            loop {
                let expr = self.expr()?;
                let desc = if self.eat_kw("desc") {
                    true
                } else {
                    self.eat_kw("asc");
                    false
                };
                order_by.push(OrderItem { expr, desc });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let mut limit = None;
        if self.eat_kw("limit") {
            match self.bump() {
                Tok::Int(n) if n >= 0 => limit = Some(n as u64),
                _ => {
                    self.pos -= 1;
                    return self.error("expected non-negative integer after LIMIT");
                }
            }
            if self.eat_sym(",") {
                return Err(QueryError::Unsupported("LIMIT offset".into()));
            }
        }
        Ok(QueryAst { body, order_by, limit })
    }

    fn set_expr(&mut self) -> Result<SetExpr, QueryError> {
        let mut left = SetExpr::Select(Box::new(self.select()?));
        while self.eat_kw("union") {
            let all = self.eat_kw("all");
            if !all {
                self.eat_kw("distinct");
            }
            let right = SetExpr::Select(Box::new(self.select()?));
            left = SetExpr::Union { left: Box::new(left), right: Box::new(right), all };
        }
        Ok(left)
    }

    fn select(&mut self) -> Result<Select, QueryError> {
        self.expect_kw("select")?;
        if self.is_kw("distinct") {
            return Err(QueryError::Unsupported("SELECT DISTINCT".into()));
        }
        let mut items = Vec::new();
        loop {
            if self.eat_sym("*") {
                items.push(SelectItem::Wildcard);
            } else {
                let expr = self.expr()?;
                let alias = if self.eat_kw("as") {
                    Some(self.ident()?)
                } else if matches!(self.peek(), Tok::Quoted(_))
                    || matches!(self.peek(), Tok::Word(w) if !RESERVED.contains(&w.to_ascii_lowercase().as_str()))
                {
                    Some(self.ident()?)
                } else {
                    None
                };
                items.push(SelectItem::Expr { expr, alias });
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_kw("from")?;
        let mut from = Vec::new();
        loop {
            from.push(self.from_item()?);
            if !self.eat_sym(",") {
                break;
            }
        }
        let selection = if self.eat_kw("where") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_kw("group") {
            self.expect_kw("by")?;
            loop {
                group_by.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let having = if self.eat_kw("having") { Some(self.expr()?) } else { None };
        Ok(Select { items, from, selection, group_by, having })
    }

    fn from_item(&mut self) -> Result<FromItem, QueryError> {
        let source = self.table_ref()?;
        let mut joins = Vec::new();
        loop {
            let kind = if self.eat_kw("join") {
                JoinKind::Inner
            } else if self.is_kw("inner") {
                self.bump();
                self.expect_kw("join")?;
                JoinKind::Inner
            } else if self.is_kw("left") || self.is_kw("right") {
                let left = self.is_kw("left");
                self.bump();
                self.eat_kw("outer");
                self.expect_kw("join")?;
                if left {
                    JoinKind::Left
                } else {
                    JoinKind::Right
                }
            } else if self.is_kw("cross") {
                return Err(QueryError::Unsupported("CROSS JOIN".into()));
            } else {
                break;
            };
            let source = self.table_ref()?;
            self.expect_kw("on")?;
            let on = self.expr()?;
            joins.push(Join { kind, source, on });
        }
        Ok(FromItem { source, joins })
    }

    fn table_ref(&mut self) -> Result<TableRef, QueryError> {
        if self.eat_sym("(") {
            let query = self.query()?;
            self.expect_sym(")")?;
            self.eat_kw("as");
            let alias = self.ident()?;
            return Ok(TableRef::Derived { query: Box::new(query), alias });
        }
        let name = self.ident()?;
        let alias = if self.eat_kw("as") {
            Some(self.ident()?)
        } else if matches!(self.peek(), Tok::Quoted(_))
            || matches!(self.peek(), Tok::Word(w) if !RESERVED.contains(&w.to_ascii_lowercase().as_str()))
        {
            Some(self.ident()?)
        } else {
            None
        };
        Ok(TableRef::Table { name, alias })
    }

    fn expr(&mut self) -> Result<Expr, QueryError> {
        let mut left = self.and_expr()?;
        while self.eat_kw("or") {
            let right = self.and_expr()?;
            left = Expr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, QueryError> {
        let mut left = self.predicate()?;
        while self.eat_kw("and") {
            let right = self.predicate()?;
            left = Expr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn predicate(&mut self) -> Result<Expr, QueryError> {
        if self.is_kw("not") {
            return Err(QueryError::Unsupported("NOT".into()));
        }
        let left = self.operand()?;
        let op = match self.peek() {
            Tok::Sym("=") => Some(CmpOp::Eq),
            Tok::Sym("<>") | Tok::Sym("!=") => Some(CmpOp::Ne),
            Tok::Sym("<") => Some(CmpOp::Lt),
            Tok::Sym("<=") => Some(CmpOp::Le),
            Tok::Sym(">") => Some(CmpOp::Gt),
            Tok::Sym(">=") => Some(CmpOp::Ge),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let right = self.operand()?;
            return Ok(Expr::Cmp { op, left: Box::new(left), right: Box::new(right) });
        }
        if self.is_kw("is") {
            return Err(QueryError::Unsupported("IS NULL".into()));
        }
        if self.is_kw("between") {
            return Err(QueryError::Unsupported("BETWEEN".into()));
        }
        let negated = if self.is_kw("not") && (matches!(self.peek_at(1), Tok::Word(w) if w.eq_ignore_ascii_case("like") || w.eq_ignore_ascii_case("in")))
        {
            self.bump();
            true
        } else {
            false
        };
        if self.eat_kw("like") {
            return match self.bump() {
                Tok::Str(pattern) => Ok(Expr::Like { expr: Box::new(left), pattern, negated }),
                _ => {
                    self.pos -= 1;
                    self.error("expected string pattern after LIKE")
                }
            };
        }
        if self.eat_kw("in") {
            self.expect_sym("(")?;
            if self.is_kw("select") {
                let query = self.query()?;
                self.expect_sym(")")?;
                return Ok(Expr::InSubquery { expr: Box::new(left), query: Box::new(query), negated });
            }
            let mut list = Vec::new();
            loop {
                list.push(self.operand()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(")")?;
            return Ok(Expr::InList { expr: Box::new(left), list, negated });
        }
        if negated {
            return self.error("expected LIKE or IN after NOT");
        }
        Ok(left)
    }

    fn operand(&mut self) -> Result<Expr, QueryError> {
        let e = self.primary()?;
        if matches!(self.peek(), Tok::Sym("+") | Tok::Sym("-") | Tok::Sym("*") | Tok::Sym("/") | Tok::Sym("%")) {
            return Err(QueryError::Unsupported("arithmetic".into()));
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, QueryError> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::Literal(Literal::Int(i)))
            }
            Tok::Float(f) => {
                self.bump();
                Ok(Expr::Literal(Literal::Float(f)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Literal(Literal::Str(s)))
            }
            Tok::Sym("-") => {
                self.bump();
                match self.bump() {
                    Tok::Int(i) => Ok(Expr::Literal(Literal::Int(-i))),
                    Tok::Float(f) => Ok(Expr::Literal(Literal::Float(-f))),
                    _ => Err(QueryError::Unsupported("arithmetic".into())),
                }
            }
            Tok::Sym("(") => {
                self.bump();
                if self.is_kw("select") {
                    return Err(QueryError::Unsupported("scalar subquery".into()));
                }
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Word(w) if self.peek_at(1) == &Tok::Sym("(") => {
                let lw = w.to_ascii_lowercase();
                let agg = match lw.as_str() {
                    "sum" => Some(AggFunc::Sum),
                    "count" => Some(AggFunc::Count),
                    "max" => Some(AggFunc::Max),
                    "min" => Some(AggFunc::Min),
                    _ => None,
                };
                let scalar = match lw.as_str() {
                    "year" => Some(ScalarFunc::Year),
                    "month" => Some(ScalarFunc::Month),
                    _ => None,
                };
                if agg.is_none() && scalar.is_none() {
                    if RESERVED.contains(&lw.as_str()) {
                        return self.error("expected expression");
                    }
                    return Err(QueryError::Unsupported(format!("function {}", w.to_ascii_uppercase())));
                }
                self.bump();
                self.bump();
                if self.is_kw("distinct") {
                    return Err(QueryError::Unsupported(format!("{}(DISTINCT ...)", w.to_ascii_uppercase())));
                }
                if let Some(func) = agg {
                    if func == AggFunc::Count && self.eat_sym("*") {
                        self.expect_sym(")")?;
                        return Ok(Expr::Agg { func, arg: None });
                    }
                    let arg = self.expr()?;
                    self.expect_sym(")")?;
                    return Ok(Expr::Agg { func, arg: Some(Box::new(arg)) });
                }
                let arg = self.expr()?;
                self.expect_sym(")")?;
                Ok(Expr::Func { func: scalar.unwrap(), arg: Box::new(arg) })
            }
            Tok::Word(w) if w.eq_ignore_ascii_case("null") => Err(QueryError::Unsupported("NULL literal".into())),
            Tok::Word(_) | Tok::Quoted(_) => {
                let first = self.ident()?;
                if self.eat_sym(".") {
                    let name = self.member()?;
                    Ok(Expr::Column { table: Some(first), name })
                } else {
                    Ok(Expr::Column { table: None, name: first })
                }
            }
            _ => self.error("expected expression"),
        }
    }
}

fn sym_static(s: &str) -> &'static str {
    match s {
        "," => ",",
        "." => ".",
        "(" => "(",
        ")" => ")",
        "*" => "*",
        ";" => ";",
        _ => "",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keywords_are_case_insensitive() {
        let a = parse("select a from t where b = 1 group by a").unwrap();
        let b = parse("SELECT a FROM t WHERE b = 1 GROUP BY a").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn backquoted_and_keyword_members() {
        let q = parse("SELECT n.`Year`, i.Order FROM nutrient n, inspection i").unwrap();
        let SetExpr::Select(s) = &q.body else { panic!() };
        assert_eq!(
            s.items[0],
            SelectItem::Expr { expr: Expr::Column { table: Some("n".into()), name: "Year".into() }, alias: None }
        );
        assert!(matches!(&s.items[1], SelectItem::Expr { expr: Expr::Column { name, .. }, .. } if name == "Order"));
    }

    #[test]
    fn incomplete_select_is_syntax_error() {
        match parse("SELECT 1 FROM") {
            Err(QueryError::Syntax { line, column, .. }) => assert_eq!((line, column), (1, 14)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn error_position_spans_lines() {
        match parse("SELECT a\nFROM t\nWHERE = 3") {
            Err(QueryError::Syntax { line, column, .. }) => assert_eq!((line, column), (3, 7)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsupported_constructs_are_named() {
        for (q, what) in [
            ("SELECT a + 1 FROM t", "arithmetic"),
            ("SELECT AVG(a) FROM t", "function AVG"),
            ("SELECT a FROM t WHERE a IS NULL", "IS NULL"),
            ("SELECT DISTINCT a FROM t", "SELECT DISTINCT"),
            ("SELECT a FROM t WHERE NOT a = 1", "NOT"),
        ] {
            match parse(q) {
                Err(QueryError::Unsupported(c)) => assert_eq!(c, what),
                other => panic!("{q}: {other:?}"),
            }
        }
    }

    #[test]
    fn union_order_limit_attach_to_whole_query() {
        let q = parse("SELECT a AS x FROM t UNION SELECT b FROM u ORDER BY x DESC LIMIT 5;").unwrap();
        assert!(matches!(q.body, SetExpr::Union { all: false, .. }));
        assert_eq!(q.order_by.len(), 1);
        assert!(q.order_by[0].desc);
        assert_eq!(q.limit, Some(5));
    }

    #[test]
    fn derived_table_and_in_subquery() {
        let q = parse(
            "SELECT a FROM t WHERE a IN (SELECT x FROM (SELECT b AS x, SUM(c) AS s FROM u GROUP BY b ORDER BY s DESC LIMIT 10) AS T1)",
        )
        .unwrap();
        let SetExpr::Select(s) = &q.body else { panic!() };
        let Some(Expr::InSubquery { query, .. }) = &s.selection else { panic!() };
        let SetExpr::Select(inner) = &query.body else { panic!() };
        assert!(matches!(&inner.from[0].source, TableRef::Derived { query, alias } if alias == "T1" && query.limit == Some(10)));
    }

    #[test]
    fn display_reparses_to_same_ast() {
        let text = "SELECT c.CropName, SUM(f.Yield) AS s FROM FieldFact f LEFT JOIN Crop c ON f.CropID = c.CropID \
                    WHERE (c.CropName LIKE 'P%' OR f.Yield >= 2.5) AND YEAR(f.D) NOT IN (2015, 2016) \
                    GROUP BY c.CropName HAVING s > 10 ORDER BY s DESC LIMIT 3";
        let q = parse(text).unwrap();
        assert_eq!(parse(&q.to_string()).unwrap(), q);
    }

    #[test]
    fn string_escapes() {
        let q = parse("SELECT a FROM t WHERE a = 'it''s'").unwrap();
        let SetExpr::Select(s) = &q.body else { panic!() };
        assert!(matches!(&s.selection, Some(Expr::Cmp { right, .. }) if **right == Expr::Literal(Literal::Str("it's".into()))));
    }
}
