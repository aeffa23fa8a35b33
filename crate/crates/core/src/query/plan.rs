//! Binding and logical planning.
//!
//! Every block works on a *wide row*: the columns of all FROM sources
//! concatenated in FROM order, independent of the join order chosen. Join
//! order is greedy and left-deep: the first fact table in FROM order (or the
//! first preserved source) starts, then each step takes the first source in
//! FROM order that is connected to the joined set by an equality edge.
//!
//! Single-source WHERE conjuncts are pushed into their source unless the
//! source is null-supplying in an outer join. Column equalities between two
//! inner sources become join keys. Everything else is a residual filter
//! evaluated as soon as all its sources are joined.
//!
//! In aggregate blocks the post-aggregation slots are the group keys
//! followed by the aggregate results. A column that is neither grouped nor
//! aggregated is bound to a hidden `MIN` of its group, which keeps the
//! result deterministic.

use std::collections::HashSet;
use std::sync::Arc;

use super::ast::*;
use super::QueryError;
use crate::schema::ConstellationSchema;
use crate::value::{parse_date, CmpOp, DataType, Value};

/// Values of an `IN` list or a materialized `IN` subquery.
#[derive(Debug, Clone, PartialEq)]
pub struct InValues {
    pub items: Vec<Value>,
    pub set: HashSet<Value>,
    pub has_null: bool,
}

impl InValues {
    pub fn new(mut items: Vec<Value>) -> Self {
        items.sort();
        items.dedup();
        let has_null = items.iter().any(Value::is_null);
        let set = items.iter().filter(|v| !v.is_null()).cloned().collect();
        InValues { items, set, has_null }
    }

    /// SQL `IN` / `NOT IN` with unknown collapsed to false.
    pub fn test(&self, v: &Value, negated: bool) -> bool {
        if v.is_null() {
            return false;
        }
        if self.set.contains(v) {
            return !negated;
        }
        if self.has_null {
            return false;
        }
        negated
    }
}

/// Bound scalar or predicate expression. `Col` indexes the wide row before
/// aggregation and the slot row after it.
#[derive(Debug, Clone, PartialEq)]
pub enum BExpr {
    Col(usize),
    Const(Value),
    Cmp(CmpOp, Box<BExpr>, Box<BExpr>),
    And(Box<BExpr>, Box<BExpr>),
    Or(Box<BExpr>, Box<BExpr>),
    Like { expr: Box<BExpr>, pattern: String, negated: bool },
    InList { expr: Box<BExpr>, list: Arc<InValues>, negated: bool },
    InSubquery { expr: Box<BExpr>, query: Arc<BoundQuery>, negated: bool },
    Func(ScalarFunc, Box<BExpr>),
}

impl BExpr {
    pub fn columns(&self, out: &mut Vec<usize>) {
        match self {
            BExpr::Col(i) => {
                if !out.contains(i) {
                    out.push(*i)
                }
            }
            BExpr::Const(_) => {}
            BExpr::Cmp(_, a, b) | BExpr::And(a, b) | BExpr::Or(a, b) => {
                a.columns(out);
                b.columns(out);
            }
            BExpr::Like { expr, .. } | BExpr::InList { expr, .. } | BExpr::InSubquery { expr, .. } => {
                expr.columns(out)
            }
            BExpr::Func(_, a) => a.columns(out),
        }
    }

    pub fn map_cols(&self, f: &dyn Fn(usize) -> usize) -> BExpr {
        match self {
            BExpr::Col(i) => BExpr::Col(f(*i)),
            BExpr::Const(v) => BExpr::Const(v.clone()),
            BExpr::Cmp(op, a, b) => BExpr::Cmp(*op, Box::new(a.map_cols(f)), Box::new(b.map_cols(f))),
            BExpr::And(a, b) => BExpr::And(Box::new(a.map_cols(f)), Box::new(b.map_cols(f))),
            BExpr::Or(a, b) => BExpr::Or(Box::new(a.map_cols(f)), Box::new(b.map_cols(f))),
            BExpr::Like { expr, pattern, negated } => {
                BExpr::Like { expr: Box::new(expr.map_cols(f)), pattern: pattern.clone(), negated: *negated }
            }
            BExpr::InList { expr, list, negated } => {
                BExpr::InList { expr: Box::new(expr.map_cols(f)), list: list.clone(), negated: *negated }
            }
            BExpr::InSubquery { expr, query, negated } => {
                BExpr::InSubquery { expr: Box::new(expr.map_cols(f)), query: query.clone(), negated: *negated }
            }
            BExpr::Func(func, a) => BExpr::Func(*func, Box::new(a.map_cols(f))),
        }
    }

    pub fn has_subquery(&self) -> bool {
        match self {
            BExpr::InSubquery { .. } => true,
            BExpr::Col(_) | BExpr::Const(_) => false,
            BExpr::Cmp(_, a, b) | BExpr::And(a, b) | BExpr::Or(a, b) => a.has_subquery() || b.has_subquery(),
            BExpr::Like { expr, .. } | BExpr::InList { expr, .. } => expr.has_subquery(),
            BExpr::Func(_, a) => a.has_subquery(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Base { table: String },
    Derived { query: Arc<BoundQuery> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourcePlan {
    /// Alias, or the table name when there is none.
    pub name: String,
    pub kind: SourceKind,
    pub columns: Vec<(String, DataType)>,
    /// Position of the first column in the wide row.
    pub offset: usize,
    /// Pushed-down conjuncts over this source's own column indices.
    pub filters: Vec<BExpr>,
    pub is_fact: bool,
    /// Null-supplying side of an outer join.
    pub null_supplying: bool,
    /// Sources that must be joined before this one (outer joins only).
    pub requires: Vec<usize>,
}

impl SourcePlan {
    pub fn base_table(&self) -> Option<&str> {
        match &self.kind {
            SourceKind::Base { table } => Some(table),
            SourceKind::Derived { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Scan,
    Inner,
    LeftOuter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinStep {
    pub source: usize,
    pub kind: StepKind,
    /// `(wide column already joined, local column of the new source)`.
    pub keys: Vec<(usize, usize)>,
    /// Outer joins: extra ON conditions over the wide row, tested per match.
    pub on_extra: Vec<BExpr>,
    /// Wide-row conjuncts applied once this step's source is joined.
    pub residual: Vec<BExpr>,
    /// Right joins normalized to left joins keep this for display.
    pub from_right: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggCall {
    pub func: AggFunc,
    pub arg: Option<BExpr>,
    /// Aggregate introduced for a bare column of a grouped query.
    pub hidden: bool,
    pub dtype: DataType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggPlan {
    pub keys: Vec<BExpr>,
    pub key_types: Vec<DataType>,
    pub aggs: Vec<AggCall>,
    /// `GROUP BY` present (as opposed to whole-input aggregation).
    pub grouped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockPlan {
    pub sources: Vec<SourcePlan>,
    pub steps: Vec<JoinStep>,
    pub width: usize,
    pub agg: Option<AggPlan>,
    pub having: Option<BExpr>,
    pub projection: Vec<BExpr>,
    pub headers: Vec<String>,
    pub types: Vec<DataType>,
}

impl BlockPlan {
    /// `(source index, local column)` of a wide column.
    pub fn locate(&self, wide: usize) -> (usize, usize) {
        let s = self.sources.iter().rposition(|s| s.offset <= wide).expect("wide column in range");
        (s, wide - self.sources[s].offset)
    }

    pub fn column_name(&self, wide: usize) -> String {
        let (s, c) = self.locate(wide);
        format!("{}.{}", self.sources[s].name, self.sources[s].columns[c].0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundBody {
    Block(Box<BlockPlan>),
    Union { left: Box<BoundBody>, right: Box<BoundBody>, all: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundQuery {
    pub body: BoundBody,
    /// `(output column, descending)`.
    pub order: Vec<(usize, bool)>,
    pub limit: Option<u64>,
    pub headers: Vec<String>,
    pub types: Vec<DataType>,
}

impl BoundQuery {
    pub fn ordered(&self) -> bool {
        !self.order.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecPath {
    Baseline,
    Rolap,
    Molap,
}

impl ExecPath {
    pub fn name(self) -> &'static str {
        match self {
            ExecPath::Baseline => "baseline",
            ExecPath::Rolap => "rolap",
            ExecPath::Molap => "molap",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub query: BoundQuery,
    /// Set by the executor that ran or routed the plan.
    pub path: Option<ExecPath>,
}

impl QueryPlan {
    pub fn ordered(&self) -> bool {
        self.query.ordered()
    }
}

/// Binds `ast` against `schema`.
pub fn plan(ast: &QueryAst, schema: &ConstellationSchema) -> Result<QueryPlan, QueryError> {
    Ok(QueryPlan { query: bind_query(ast, schema)?, path: None })
}

fn bind_err<T>(m: String) -> Result<T, QueryError> {
    Err(QueryError::Bind(m))
}

fn type_err<T>(m: String) -> Result<T, QueryError> {
    Err(QueryError::Type(m))
}

fn bind_query(ast: &QueryAst, schema: &ConstellationSchema) -> Result<BoundQuery, QueryError> {
    let (body, headers, types) = bind_body(&ast.body, schema)?;
    let mut order = Vec::new();
    for item in &ast.order_by {
        let idx = match (&body, &item.expr) {
            (_, Expr::Literal(Literal::Int(n))) => {
                if *n < 1 || *n as usize > headers.len() {
                    return bind_err(format!("ORDER BY position {n} is out of range"));
                }
                *n as usize - 1
            }
            (_, Expr::Column { table: None, name }) if headers.iter().any(|h| h.eq_ignore_ascii_case(name)) => {
                headers.iter().position(|h| h.eq_ignore_ascii_case(name)).unwrap()
            }
            (BoundBody::Block(block), e) => match order_in_block(block, e, ast, schema)? {
                Some(i) => i,
                None => return bind_err(format!("ORDER BY key {e} is not in the select list")),
            },
            (_, e) => return bind_err(format!("ORDER BY key {e} is not an output column of the union")),
        };
        order.push((idx, item.desc));
    }
    Ok(BoundQuery { body, order, limit: ast.limit, headers, types })
}

/// Matches an ORDER BY expression against the block's projection.
fn order_in_block(
    block: &BlockPlan,
    e: &Expr,
    ast: &QueryAst,
    schema: &ConstellationSchema,
) -> Result<Option<usize>, QueryError> {
    let SetExpr::Select(select) = &ast.body else { return Ok(None) };
    let scope = Scope { sources: &block.sources };
    let bound = if let Some(agg) = &block.agg {
        let mut ctx = AggBinder { keys: agg.keys.clone(), aggs: agg.aggs.clone(), scope: &scope, schema };
        let b = ctx.bind_post(e, &[])?;
        if ctx.aggs.len() != agg.aggs.len() {
            return Ok(None);
        }
        b.0
    } else {
        scope.bind(e, schema)?.0
    };
    let _ = select;
    Ok(block.projection.iter().position(|p| *p == bound))
}

fn compatible(a: DataType, b: DataType) -> bool {
    a == b || (a.is_numeric() && b.is_numeric())
}

fn bind_body(body: &SetExpr, schema: &ConstellationSchema) -> Result<(BoundBody, Vec<String>, Vec<DataType>), QueryError> {
    match body {
        SetExpr::Select(s) => {
            let block = bind_select(s, schema)?;
            let (h, t) = (block.headers.clone(), block.types.clone());
            Ok((BoundBody::Block(Box::new(block)), h, t))
        }
        SetExpr::Union { left, right, all } => {
            let (l, lh, lt) = bind_body(left, schema)?;
            let (r, _, rt) = bind_body(right, schema)?;
            if lt.len() != rt.len() {
                return type_err(format!("UNION branches have {} and {} columns", lt.len(), rt.len()));
            }
            let mut types = Vec::with_capacity(lt.len());
            for (i, (a, b)) in lt.iter().zip(&rt).enumerate() {
                if !compatible(*a, *b) {
                    return type_err(format!(
                        "UNION column {} mixes {} and {}",
                        i + 1,
                        a.name(),
                        b.name()
                    ));
                }
                types.push(if a != b { DataType::Float64 } else { *a });
            }
            Ok((BoundBody::Union { left: Box::new(l), right: Box::new(r), all: *all }, lh, types))
        }
    }
}

struct Scope<'a> {
    sources: &'a [SourcePlan],
}

impl<'a> Scope<'a> {
    fn resolve(&self, table: Option<&str>, name: &str) -> Result<(usize, DataType), QueryError> {
        let find_col = |s: &SourcePlan| s.columns.iter().position(|(c, _)| c.eq_ignore_ascii_case(name));
        match table {
            Some(t) => {
                let mut cands: Vec<&SourcePlan> =
                    self.sources.iter().filter(|s| s.name.eq_ignore_ascii_case(t)).collect();
                if cands.is_empty() {
                    cands = self
                        .sources
                        .iter()
                        .filter(|s| s.base_table().is_some_and(|b| b.eq_ignore_ascii_case(t)))
                        .collect();
                }
                match cands.as_slice() {
                    [] => bind_err(format!("unknown table or alias {t}")),
                    [s] => match find_col(s) {
                        Some(c) => Ok((s.offset + c, s.columns[c].1)),
                        None => bind_err(format!("unknown column {t}.{name}")),
                    },
                    _ => bind_err(format!("ambiguous table reference {t}")),
                }
            }
            None => {
                let hits: Vec<(usize, DataType)> = self
                    .sources
                    .iter()
                    .filter_map(|s| find_col(s).map(|c| (s.offset + c, s.columns[c].1)))
                    .collect();
                match hits.as_slice() {
                    [] => bind_err(format!("unknown column {name}")),
                    [h] => Ok(*h),
                    _ => bind_err(format!("ambiguous column {name}")),
                }
            }
        }
    }

    /// Binds a non-aggregate expression over the wide row.
    fn bind(&self, e: &Expr, schema: &ConstellationSchema) -> Result<(BExpr, DataType), QueryError> {
        match e {
            Expr::Column { table, name } => {
                let (i, t) = self.resolve(table.as_deref(), name)?;
                Ok((BExpr::Col(i), t))
            }
            Expr::Agg { .. } => bind_err(format!("aggregate {e} is not allowed here")),
            _ => bind_common(e, &mut |x| self.bind(x, schema), schema),
        }
    }
}

fn literal_value(l: &Literal) -> (Value, DataType) {
    match l {
        Literal::Int(i) => (Value::Int(*i), DataType::Int64),
        Literal::Float(f) => (Value::Float(*f), DataType::Float64),
        Literal::Str(s) => (Value::text(s), DataType::Text),
    }
}

/// Converts a text literal compared against `target` into that type.
fn coerce(e: BExpr, t: DataType, target: DataType) -> Result<(BExpr, DataType), QueryError> {
    if let (BExpr::Const(Value::Text(s)), DataType::Text) = (&e, t) {
        let s = s.trim();
        let v = match target {
            DataType::Int64 => s.parse::<i64>().ok().map(Value::Int).or_else(|| s.parse::<f64>().ok().map(Value::Float)),
            DataType::Float64 => s.parse::<f64>().ok().filter(|f| f.is_finite()).map(Value::Float),
            DataType::Date => parse_date(s).map(Value::Date),
            DataType::Text => return Ok((e, t)),
            _ => None,
        };
        return match v {
            Some(v) => {
                let vt = v.data_type().unwrap();
                Ok((BExpr::Const(v), vt))
            }
            None => type_err(format!("cannot compare '{s}' with {}", target.name())),
        };
    }
    Ok((e, t))
}

fn bind_common(
    e: &Expr,
    rec: &mut dyn FnMut(&Expr) -> Result<(BExpr, DataType), QueryError>,
    schema: &ConstellationSchema,
) -> Result<(BExpr, DataType), QueryError> {
    match e {
        Expr::Literal(l) => {
            let (v, t) = literal_value(l);
            Ok((BExpr::Const(v), t))
        }
        Expr::Cmp { op, left, right } => {
            let (l, lt) = rec(left)?;
            let (r, rt) = rec(right)?;
            let (l, lt) = coerce(l, lt, rt)?;
            let (r, rt) = coerce(r, rt, lt)?;
            if !compatible(lt, rt) || matches!(lt, DataType::GeoPolygon) {
                return type_err(format!("cannot compare {} with {} in {e}", lt.name(), rt.name()));
            }
            Ok((BExpr::Cmp(*op, Box::new(l), Box::new(r)), DataType::Bool))
        }
        Expr::And(a, b) | Expr::Or(a, b) => {
            let (l, lt) = rec(a)?;
            let (r, rt) = rec(b)?;
            if lt != DataType::Bool || rt != DataType::Bool {
                return type_err(format!("AND/OR operands must be predicates in {e}"));
            }
            Ok(if matches!(e, Expr::And(..)) {
                (BExpr::And(Box::new(l), Box::new(r)), DataType::Bool)
            } else {
                (BExpr::Or(Box::new(l), Box::new(r)), DataType::Bool)
            })
        }
        Expr::Like { expr, pattern, negated } => {
            let (x, t) = rec(expr)?;
            if t != DataType::Text {
                return type_err(format!("LIKE on {} operand {expr}", t.name()));
            }
            Ok((BExpr::Like { expr: Box::new(x), pattern: pattern.clone(), negated: *negated }, DataType::Bool))
        }
        Expr::InList { expr, list, negated } => {
            let (x, t) = rec(expr)?;
            let mut values = Vec::with_capacity(list.len());
            for item in list {
                let Expr::Literal(l) = item else {
                    return Err(QueryError::Unsupported("IN list with non-literal items".into()));
                };
                let (v, vt) = literal_value(l);
                let (c, ct) = coerce(BExpr::Const(v), vt, t)?;
                if !compatible(ct, t) {
                    return type_err(format!("IN list item {item} does not match {}", t.name()));
                }
                let BExpr::Const(v) = c else { unreachable!() };
                values.push(v);
            }
            Ok((BExpr::InList { expr: Box::new(x), list: Arc::new(InValues::new(values)), negated: *negated }, DataType::Bool))
        }
        Expr::InSubquery { expr, query, negated } => {
            let (x, t) = rec(expr)?;
            let q = bind_query(query, schema)?;
            if q.types.len() != 1 {
                return type_err(format!("IN subquery returns {} columns", q.types.len()));
            }
            if !compatible(q.types[0], t) {
                return type_err(format!("IN subquery yields {} but operand is {}", q.types[0].name(), t.name()));
            }
            Ok((BExpr::InSubquery { expr: Box::new(x), query: Arc::new(q), negated: *negated }, DataType::Bool))
        }
        Expr::Func { func, arg } => {
            let (a, t) = rec(arg)?;
            let (a, t) = coerce(a, t, DataType::Date)?;
            if t != DataType::Date {
                return type_err(format!("{}() needs a date, got {}", func.name(), t.name()));
            }
            Ok((BExpr::Func(*func, Box::new(a)), DataType::Int64))
        }
        Expr::Column { .. } | Expr::Agg { .. } => unreachable!("handled by caller"),
    }
}

struct AggBinder<'s, 'a> {
    keys: Vec<BExpr>,
    aggs: Vec<AggCall>,
    scope: &'s Scope<'a>,
    schema: &'s ConstellationSchema,
}

impl AggBinder<'_, '_> {
    fn add_agg(&mut self, call: AggCall) -> usize {
        if let Some(i) = self.aggs.iter().position(|a| a.func == call.func && a.arg == call.arg && a.hidden == call.hidden) {
            return i;
        }
        self.aggs.push(call);
        self.aggs.len() - 1
    }

    /// Binds over post-aggregation slots; `aliases` resolves unqualified
    /// names to already bound select items (used by HAVING).
    fn bind_post(&mut self, e: &Expr, aliases: &[(String, BExpr, DataType)]) -> Result<(BExpr, DataType), QueryError> {
        if let Expr::Column { table: None, name } = e {
            if let Some((_, b, t)) = aliases.iter().find(|(a, _, _)| a.eq_ignore_ascii_case(name)) {
                return Ok((b.clone(), *t));
            }
        }
        if let Expr::Agg { func, arg } = e {
            let (arg, at) = match arg {
                Some(a) => {
                    if a.contains_aggregate() {
                        return bind_err(format!("nested aggregate in {e}"));
                    }
                    let (b, t) = self.scope.bind(a, self.schema)?;
                    (Some(b), Some(t))
                }
                None => (None, None),
            };
            let dtype = match (func, at) {
                (AggFunc::Count, _) => DataType::Int64,
                (AggFunc::Sum, Some(t)) if t.is_numeric() => t,
                (AggFunc::Sum, Some(t)) => return type_err(format!("SUM over {} in {e}", t.name())),
                (_, Some(t)) if matches!(t, DataType::GeoPoint | DataType::GeoPolygon) => {
                    return type_err(format!("{} over {} in {e}", func.name(), t.name()))
                }
                (_, Some(t)) => t,
                (_, None) => return bind_err(format!("{}(*) is not supported", func.name())),
            };
            let slot = self.keys.len() + self.add_agg(AggCall { func: *func, arg, hidden: false, dtype });
            return Ok((BExpr::Col(slot), dtype));
        }
        if let Expr::Column { .. } = e {
            let (b, t) = self.scope.bind(e, self.schema)?;
            if let Some(k) = self.keys.iter().position(|k| *k == b) {
                return Ok((BExpr::Col(k), t));
            }
            let slot = self.keys.len() + self.add_agg(AggCall { func: AggFunc::Min, arg: Some(b), hidden: true, dtype: t });
            return Ok((BExpr::Col(slot), t));
        }
        if !e.contains_aggregate() {
            // A whole expression may itself be a group key; alias references
            // fail to bind here and fall through to the structural case.
            if let Ok((b, t)) = self.scope.bind(e, self.schema) {
                if let Some(k) = self.keys.iter().position(|k| *k == b) {
                    return Ok((BExpr::Col(k), t));
                }
            }
        }
        let schema = self.schema;
        match e {
            Expr::Column { .. } | Expr::Agg { .. } => unreachable!(),
            _ => bind_common(e, &mut |x| self.bind_post(x, aliases), schema),
        }
    }
}

fn conjuncts(e: &BExpr, out: &mut Vec<BExpr>) {
    if let BExpr::And(a, b) = e {
        conjuncts(a, out);
        conjuncts(b, out);
    } else {
        out.push(e.clone());
    }
}

fn expr_sources(e: &BExpr, sources: &[SourcePlan]) -> Vec<usize> {
    let mut cols = Vec::new();
    e.columns(&mut cols);
    let mut out: Vec<usize> = cols
        .iter()
        .map(|&c| sources.iter().rposition(|s| s.offset <= c).unwrap())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn to_local(e: &BExpr, offset: usize) -> BExpr {
    e.map_cols(&|c| c - offset)
}

/// `Some((a, b))` when `e` is `col_a = col_b`.
fn equi_edge(e: &BExpr) -> Option<(usize, usize)> {
    match e {
        BExpr::Cmp(CmpOp::Eq, a, b) => match (a.as_ref(), b.as_ref()) {
            (BExpr::Col(x), BExpr::Col(y)) => Some((*x, *y)),
            _ => None,
        },
        _ => None,
    }
}

fn bind_source(t: &TableRef, schema: &ConstellationSchema, offset: usize) -> Result<SourcePlan, QueryError> {
    match t {
        TableRef::Table { name, alias } => {
            let def = schema.table(name).ok_or_else(|| QueryError::Bind(format!("unknown table {name}")))?;
            Ok(SourcePlan {
                name: alias.clone().unwrap_or_else(|| name.clone()),
                kind: SourceKind::Base { table: def.name.clone() },
                columns: def.columns.iter().map(|c| (c.name.clone(), c.dtype)).collect(),
                offset,
                filters: Vec::new(),
                is_fact: def.is_fact(),
                null_supplying: false,
                requires: Vec::new(),
            })
        }
        TableRef::Derived { query, alias } => {
            let q = bind_query(query, schema)?;
            let columns = q.headers.iter().cloned().zip(q.types.iter().copied()).collect();
            Ok(SourcePlan {
                name: alias.clone(),
                kind: SourceKind::Derived { query: Arc::new(q) },
                columns,
                offset,
                filters: Vec::new(),
                is_fact: false,
                null_supplying: false,
                requires: Vec::new(),
            })
        }
    }
}

fn header_of(e: &Expr, alias: &Option<String>) -> String {
    match (alias, e) {
        (Some(a), _) => a.clone(),
        (None, Expr::Column { name, .. }) => name.clone(),
        (None, e) => e.to_string(),
    }
}

fn bind_select(s: &Select, schema: &ConstellationSchema) -> Result<BlockPlan, QueryError> {
    // Sources, in FROM order, with outer-join bookkeeping.
    let mut sources: Vec<SourcePlan> = Vec::new();
    let mut width = 0;
    // (source index, ON expression) for outer joins; inner ON joins into WHERE.
    let mut outer_on: Vec<(usize, Expr)> = Vec::new();
    let mut inner_on: Vec<Expr> = Vec::new();
    let mut right_joined: Vec<usize> = Vec::new();
    for item in &s.from {
        let root = sources.len();
        let src = bind_source(&item.source, schema, width)?;
        width += src.columns.len();
        sources.push(src);
        for (ji, j) in item.joins.iter().enumerate() {
            let idx = sources.len();
            let src = bind_source(&j.source, schema, width)?;
            width += src.columns.len();
            sources.push(src);
            match j.kind {
                JoinKind::Inner => inner_on.push(j.on.clone()),
                JoinKind::Left => {
                    sources[idx].null_supplying = true;
                    sources[idx].requires = (root..idx).collect();
                    outer_on.push((idx, j.on.clone()));
                }
                JoinKind::Right => {
                    if ji != 0 {
                        return Err(QueryError::Unsupported("RIGHT JOIN after another join".into()));
                    }
                    sources[root].null_supplying = true;
                    sources[root].requires = vec![idx];
                    outer_on.push((root, j.on.clone()));
                    right_joined.push(root);
                }
            }
        }
    }
    let names: Vec<String> = sources.iter().map(|s| s.name.to_ascii_lowercase()).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return bind_err(format!("duplicate source name {}", sources[i].name));
        }
    }

    let scope = Scope { sources: &sources };
    let mut where_conj = Vec::new();
    if let Some(w) = &s.selection {
        if w.contains_aggregate() {
            return bind_err("aggregate in WHERE".into());
        }
        let (b, t) = scope.bind(w, schema)?;
        if t != DataType::Bool {
            return type_err(format!("WHERE clause is not a predicate: {w}"));
        }
        conjuncts(&b, &mut where_conj);
    }
    for on in &inner_on {
        let (b, t) = scope.bind(on, schema)?;
        if t != DataType::Bool {
            return type_err(format!("ON clause is not a predicate: {on}"));
        }
        conjuncts(&b, &mut where_conj);
    }
    let mut outer_conj: Vec<(usize, Vec<BExpr>)> = Vec::new();
    for (idx, on) in &outer_on {
        let (b, t) = scope.bind(on, schema)?;
        if t != DataType::Bool {
            return type_err(format!("ON clause is not a predicate: {on}"));
        }
        let mut cs = Vec::new();
        conjuncts(&b, &mut cs);
        outer_conj.push((*idx, cs));
    }

    // Classify WHERE conjuncts.
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut residual: Vec<BExpr> = Vec::new();
    for c in where_conj {
        let srcs = expr_sources(&c, &sources);
        let nullable = srcs.iter().any(|&s| sources[s].null_supplying);
        if srcs.len() == 1 && !nullable && !c.has_subquery_outer() {
            let s = srcs[0];
            let off = sources[s].offset;
            sources[s].filters.push(to_local(&c, off));
            continue;
        }
        if let (Some((a, b)), false) = (equi_edge(&c), nullable) {
            let sa = sources.iter().rposition(|s| s.offset <= a).unwrap();
            let sb = sources.iter().rposition(|s| s.offset <= b).unwrap();
            if sa != sb {
                edges.push((a, b));
                continue;
            }
        }
        residual.push(c);
    }

    // Outer ON clauses: keys, pushed filters on the null-supplying side, extras.
    let mut outer_keys: Vec<(usize, Vec<(usize, usize)>, Vec<BExpr>)> = Vec::new();
    for (idx, cs) in outer_conj {
        let mut keys = Vec::new();
        let mut extra = Vec::new();
        let allowed: Vec<usize> = sources[idx].requires.iter().copied().chain([idx]).collect();
        for c in cs {
            let srcs = expr_sources(&c, &sources);
            if srcs.iter().any(|s| !allowed.contains(s)) {
                return bind_err("ON clause references a source outside its join".into());
            }
            if srcs == [idx] && !c.has_subquery_outer() {
                let off = sources[idx].offset;
                sources[idx].filters.push(to_local(&c, off));
                continue;
            }
            if let Some((a, b)) = equi_edge(&c) {
                let sa = sources.iter().rposition(|s| s.offset <= a).unwrap();
                let sb = sources.iter().rposition(|s| s.offset <= b).unwrap();
                if sa == idx && sb != idx {
                    keys.push((b, a - sources[idx].offset));
                    continue;
                }
                if sb == idx && sa != idx {
                    keys.push((a, b - sources[idx].offset));
                    continue;
                }
            }
            extra.push(c);
        }
        outer_keys.push((idx, keys, extra));
    }

    // Greedy left-deep join order.
    let n = sources.len();
    let preserved: Vec<usize> = (0..n).filter(|&i| !sources[i].null_supplying).collect();
    let first = preserved
        .iter()
        .copied()
        .find(|&i| sources[i].is_fact)
        .or_else(|| preserved.first().copied())
        .ok_or_else(|| QueryError::Bind("no preserved source in FROM".into()))?;
    let src_of = |c: usize| sources.iter().rposition(|s| s.offset <= c).unwrap();
    let mut joined = vec![first];
    let mut steps = vec![JoinStep {
        source: first,
        kind: StepKind::Scan,
        keys: Vec::new(),
        on_extra: Vec::new(),
        residual: Vec::new(),
        from_right: false,
    }];
    let mut used_edges = vec![false; edges.len()];
    while joined.len() < n {
        let eligible = |i: usize| {
            !joined.contains(&i) && sources[i].requires.iter().all(|r| joined.contains(r))
        };
        let connected = |i: usize| {
            sources[i].null_supplying
                || edges.iter().any(|&(a, b)| {
                    (src_of(a) == i && joined.contains(&src_of(b))) || (src_of(b) == i && joined.contains(&src_of(a)))
                })
        };
        let next = (0..n)
            .find(|&i| eligible(i) && connected(i))
            .or_else(|| (0..n).find(|&i| eligible(i)))
            .ok_or_else(|| QueryError::Bind("cannot order joins".into()))?;
        let step = if sources[next].null_supplying {
            let (_, keys, extra) = outer_keys.iter().find(|(i, _, _)| *i == next).unwrap().clone();
            JoinStep {
                source: next,
                kind: StepKind::LeftOuter,
                keys,
                on_extra: extra,
                residual: Vec::new(),
                from_right: right_joined.contains(&next),
            }
        } else {
            let mut keys = Vec::new();
            for (ei, &(a, b)) in edges.iter().enumerate() {
                if used_edges[ei] {
                    continue;
                }
                let (sa, sb) = (src_of(a), src_of(b));
                if sa == next && joined.contains(&sb) {
                    keys.push((b, a - sources[next].offset));
                    used_edges[ei] = true;
                } else if sb == next && joined.contains(&sa) {
                    keys.push((a, b - sources[next].offset));
                    used_edges[ei] = true;
                }
            }
            JoinStep { source: next, kind: StepKind::Inner, keys, on_extra: Vec::new(), residual: Vec::new(), from_right: false }
        };
        joined.push(next);
        steps.push(step);
    }
    for c in residual {
        let srcs = expr_sources(&c, &sources);
        let at = srcs.iter().map(|s| joined.iter().position(|j| j == s).unwrap()).max().unwrap_or(0);
        steps[at].residual.push(c);
    }

    // Select list, aggregation, HAVING.
    let scope = Scope { sources: &sources };
    let is_agg = !s.group_by.is_empty()
        || s.having.is_some()
        || s.items.iter().any(|i| matches!(i, SelectItem::Expr { expr, .. } if expr.contains_aggregate()));
    let mut items: Vec<(Expr, Option<String>)> = Vec::new();
    for item in &s.items {
        match item {
            SelectItem::Wildcard => {
                for src in &sources {
                    for (c, _) in &src.columns {
                        items.push((Expr::Column { table: Some(src.name.clone()), name: c.clone() }, None));
                    }
                }
            }
            SelectItem::Expr { expr, alias } => items.push((expr.clone(), alias.clone())),
        }
    }
    let headers: Vec<String> = items.iter().map(|(e, a)| header_of(e, a)).collect();
    let mut projection = Vec::new();
    let mut types = Vec::new();
    let mut agg = None;
    let mut having = None;
    if is_agg {
        let mut keys = Vec::new();
        let mut key_types = Vec::new();
        for g in &s.group_by {
            if g.contains_aggregate() {
                return bind_err(format!("aggregate in GROUP BY: {g}"));
            }
            let (b, t) = scope.bind(g, schema)?;
            if !keys.contains(&b) {
                keys.push(b);
                key_types.push(t);
            }
        }
        let mut ab = AggBinder { keys, aggs: Vec::new(), scope: &scope, schema };
        let mut aliases = Vec::new();
        for ((e, alias), h) in items.iter().zip(&headers) {
            let (b, t) = ab.bind_post(e, &[])?;
            if alias.is_some() {
                aliases.push((h.clone(), b.clone(), t));
            }
            projection.push(b);
            types.push(t);
        }
        if let Some(h) = &s.having {
            let (b, t) = ab.bind_post(h, &aliases)?;
            if t != DataType::Bool {
                return type_err(format!("HAVING clause is not a predicate: {h}"));
            }
            having = Some(b);
        }
        agg = Some(AggPlan { keys: ab.keys, key_types, aggs: ab.aggs, grouped: !s.group_by.is_empty() });
    } else {
        for (e, _) in &items {
            let (b, t) = scope.bind(e, schema)?;
            projection.push(b);
            types.push(t);
        }
    }
    Ok(BlockPlan { sources, steps, width, agg, having, projection, headers, types })
}

trait SubqueryCheck {
    fn has_subquery_outer(&self) -> bool;
}

impl SubqueryCheck for BExpr {
    /// Subquery predicates stay residual so they are evaluated once per
    /// block after materialization, on every path alike.
    fn has_subquery_outer(&self) -> bool {
        self.has_subquery()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse;
    use crate::schema::builtin_adw_schema;

    fn bind(sql: &str) -> Result<BoundQuery, QueryError> {
        Ok(plan(&parse(sql)?, &builtin_adw_schema())?.query)
    }

    fn block(q: &BoundQuery) -> &BlockPlan {
        match &q.body {
            BoundBody::Block(b) => b,
            _ => panic!("not a block"),
        }
    }

    #[test]
    fn implicit_joins_become_keys() {
        let q = bind("SELECT soil.PH, count(*) FROM fieldfact, soil WHERE fieldfact.SoildID = soil.SoilID and fieldfact.sprayquantity = 2 GROUP by soil.PH").unwrap();
        let b = block(&q);
        assert_eq!(b.steps.len(), 2);
        assert_eq!(b.steps[0].source, 0);
        assert_eq!(b.steps[1].kind, StepKind::Inner);
        assert_eq!(b.steps[1].keys.len(), 1);
        assert_eq!(b.sources[0].filters.len(), 1);
        let agg = b.agg.as_ref().unwrap();
        assert_eq!(agg.keys.len(), 1);
        assert_eq!(agg.aggs[0].func, AggFunc::Count);
        assert_eq!(q.headers, vec!["PH", "COUNT(*)"]);
    }

    #[test]
    fn right_join_normalizes_to_left() {
        let q = bind("SELECT fieldfact.yield, fertiliser.fertiliserName FROM fieldfact RIGHT JOIN fertiliser on fieldfact.fertiliserID = fertiliser.fertiliserID WHERE fieldfact.fertiliserQuantity = 10").unwrap();
        let b = block(&q);
        assert_eq!(b.steps[0].source, 1);
        assert_eq!(b.steps[1].kind, StepKind::LeftOuter);
        assert!(b.steps[1].from_right);
        assert!(b.sources[0].filters.is_empty(), "no pushdown into the null-supplying side");
        assert_eq!(b.steps[1].residual.len(), 1);
    }

    #[test]
    fn bind_errors() {
        assert!(matches!(bind("SELECT nope FROM crop"), Err(QueryError::Bind(_))));
        assert!(matches!(bind("SELECT x.CropName FROM crop"), Err(QueryError::Bind(_))));
        assert!(matches!(bind("SELECT CropID FROM crop, fieldfact"), Err(QueryError::Bind(m)) if m.contains("ambiguous")));
        assert!(matches!(bind("SELECT CropName FROM crop WHERE EstYield LIKE 'a%'"), Err(QueryError::Type(_))));
        assert!(matches!(bind("SELECT CropName FROM crop WHERE CropName = 3"), Err(QueryError::Type(_))));
        assert!(matches!(bind("SELECT CropName FROM crop WHERE SUM(EstYield) > 3"), Err(QueryError::Bind(_))));
    }

    #[test]
    fn text_literals_coerce() {
        let q = bind("SELECT SaleID FROM salefact WHERE Month(SaleDate) = '08' and SaleDate >= '2016-01-01'").unwrap();
        let f = &block(&q).sources[0].filters;
        assert!(matches!(&f[0], BExpr::Cmp(_, _, r) if **r == BExpr::Const(Value::Int(8))));
        assert!(matches!(&f[1], BExpr::Cmp(_, _, r) if matches!(**r, BExpr::Const(Value::Date(_)))));
    }

    #[test]
    fn having_aliases_and_hidden_min() {
        let q = bind("SELECT FA.FarmerName, CR.CropName, SUM(SF.Quantity) AS s FROM salefact SF, farmer FA, crop CR WHERE SF.FarmerID = FA.FarmerID and SF.CropID = CR.CropID GROUP BY CR.CropName HAVING s > 3").unwrap();
        let b = block(&q);
        let agg = b.agg.as_ref().unwrap();
        assert_eq!(agg.aggs.len(), 2);
        assert!(agg.aggs.iter().any(|a| a.hidden && a.func == AggFunc::Min));
        assert!(matches!(&b.having, Some(BExpr::Cmp(CmpOp::Gt, l, _)) if **l == b.projection[2]));
    }

    #[test]
    fn order_by_resolution() {
        let q = bind("SELECT fieldfact.fieldID, field.FieldName FROM fieldfact, field WHERE fieldfact.FieldID = field.FieldID ORDER BY field.FieldName").unwrap();
        assert_eq!(q.order, vec![(1, false)]);
        let q = bind("SELECT CropName AS n FROM crop ORDER BY n DESC, 1").unwrap();
        assert_eq!(q.order, vec![(0, true), (0, false)]);
        assert!(bind("SELECT CropName FROM crop ORDER BY EstYield").is_err());
    }

    #[test]
    fn union_checks_arity_and_types() {
        assert!(bind("SELECT CropName FROM crop UNION SELECT ProductName FROM product").is_ok());
        assert!(matches!(bind("SELECT CropName FROM crop UNION SELECT ProductID FROM product"), Err(QueryError::Type(_))));
        assert!(matches!(bind("SELECT CropName, CropID FROM crop UNION SELECT ProductName FROM product"), Err(QueryError::Type(_))));
    }

    #[test]
    fn fact_table_starts_join_order() {
        let q = bind("SELECT CR.CropName FROM Crop CR, FieldFact FF, Field FI WHERE FF.CropID = CR.CropID and FF.FieldID = FI.FieldID").unwrap();
        let b = block(&q);
        let order: Vec<usize> = b.steps.iter().map(|s| s.source).collect();
        assert_eq!(order, vec![1, 0, 2]);
    }
}
