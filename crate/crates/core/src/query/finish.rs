//! Steps shared by every executor: aggregate accumulators, HAVING and
//! projection over groups, subquery materialization, UNION, sort and limit.

use std::collections::HashSet;
use std::sync::Arc;

use super::ast::AggFunc;
use super::eval::{eval, truth};
use super::plan::{AggCall, BExpr, BlockPlan, BoundBody, BoundQuery, InValues, SourceKind};
use super::QueryError;
use crate::value::{CompensatedSum, DataType, Row, Value};

#[derive(Debug, Clone)]
pub enum Acc {
    Count(i64),
    SumInt { sum: i128, seen: bool },
    SumFloat { sum: CompensatedSum, seen: bool },
    Max(Option<Value>),
    Min(Option<Value>),
}

impl Acc {
    pub fn new(call: &AggCall) -> Acc {
        match call.func {
            AggFunc::Count => Acc::Count(0),
            AggFunc::Sum if call.dtype == DataType::Int64 => Acc::SumInt { sum: 0, seen: false },
            AggFunc::Sum => Acc::SumFloat { sum: CompensatedSum::default(), seen: false },
            AggFunc::Max => Acc::Max(None),
            AggFunc::Min => Acc::Min(None),
        }
    }

    /// Feeds one input value; nulls are ignored by every aggregate.
    pub fn add(&mut self, v: &Value) {
        if v.is_null() {
            return;
        }
        match self {
            Acc::Count(n) => *n += 1,
            Acc::SumInt { sum, seen } => {
                *sum += v.as_i64().expect("int sum input") as i128;
                *seen = true;
            }
            Acc::SumFloat { sum, seen } => {
                sum.add(v.as_f64().expect("numeric sum input"));
                *seen = true;
            }
            Acc::Max(m) => {
                if m.as_ref().is_none_or(|cur| v > cur) {
                    *m = Some(v.clone());
                }
            }
            Acc::Min(m) => {
                if m.as_ref().is_none_or(|cur| v < cur) {
                    *m = Some(v.clone());
                }
            }
        }
    }

    /// `COUNT(*)`: counts the row regardless of nulls.
    pub fn add_row(&mut self) {
        if let Acc::Count(n) = self {
            *n += 1;
        }
    }

    pub fn add_i64(&mut self, x: i64) {
        match self {
            Acc::SumInt { sum, seen } => {
                *sum += x as i128;
                *seen = true;
            }
            Acc::Count(n) => *n += 1,
            _ => self.add(&Value::Int(x)),
        }
    }

    pub fn add_f64(&mut self, x: f64) {
        match self {
            Acc::SumFloat { sum, seen } => {
                sum.add(x);
                *seen = true;
            }
            Acc::Count(n) => *n += 1,
            _ => self.add(&Value::Float(x)),
        }
    }

    pub fn merge(&mut self, other: &Acc) {
        match (self, other) {
            (Acc::Count(a), Acc::Count(b)) => *a += b,
            (Acc::SumInt { sum, seen }, Acc::SumInt { sum: s2, seen: e2 }) => {
                *sum += s2;
                *seen |= e2;
            }
            (Acc::SumFloat { sum, seen }, Acc::SumFloat { sum: s2, seen: e2 }) => {
                sum.merge(s2);
                *seen |= e2;
            }
            (a @ (Acc::Max(_) | Acc::Min(_)), Acc::Max(Some(v)) | Acc::Min(Some(v))) => a.add(v),
            (Acc::Max(_) | Acc::Min(_), _) => {}
            (a, b) => panic!("merging mismatched accumulators {a:?} and {b:?}"),
        }
    }

    pub fn finish(&self) -> Result<Value, QueryError> {
        Ok(match self {
            Acc::Count(n) => Value::Int(*n),
            Acc::SumInt { seen: false, .. } | Acc::SumFloat { seen: false, .. } => Value::Null,
            Acc::SumInt { sum, .. } => Value::Int(
                i64::try_from(*sum).map_err(|_| QueryError::Runtime("integer overflow in SUM".into()))?,
            ),
            Acc::SumFloat { sum, .. } => Value::Float(sum.value()),
            Acc::Max(m) | Acc::Min(m) => m.clone().unwrap_or(Value::Null),
        })
    }
}

/// Feeds one input row (any accessor) into a group's accumulators.
pub fn accumulate<R: super::eval::RowAccess + ?Sized>(calls: &[AggCall], accs: &mut [Acc], row: &R) {
    for (call, acc) in calls.iter().zip(accs.iter_mut()) {
        match &call.arg {
            None => acc.add_row(),
            Some(e) => acc.add(&eval(e, row)),
        }
    }
}

/// Turns finished groups into output rows: the empty-input rule, HAVING,
/// then the projection over slots.
pub fn finish_groups(block: &BlockPlan, mut groups: Vec<(Vec<Value>, Vec<Acc>)>) -> Result<Vec<Row>, QueryError> {
    let agg = block.agg.as_ref().expect("aggregate block");
    if groups.is_empty() && !agg.grouped {
        let mut visible = agg.aggs.iter().filter(|a| !a.hidden).peekable();
        if visible.peek().is_some() && visible.all(|a| a.func == AggFunc::Count) {
            groups.push((Vec::new(), agg.aggs.iter().map(Acc::new).collect()));
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for (keys, accs) in groups {
        let mut slots = keys;
        for a in &accs {
            slots.push(a.finish()?);
        }
        if let Some(h) = &block.having {
            if !truth(h, &slots) {
                continue;
            }
        }
        out.push(project(&block.projection, &slots));
    }
    Ok(out)
}

pub fn project<R: super::eval::RowAccess + ?Sized>(projection: &[BExpr], row: &R) -> Row {
    projection.iter().map(|e| eval(e, row).into_owned()).collect()
}

/// One executor's way of running a single SELECT block whose subqueries
/// have already been materialized.
pub trait BlockExec {
    fn exec_block(&self, block: &BlockPlan) -> Result<Vec<Row>, QueryError>;
}

pub fn run_query(q: &BoundQuery, ex: &dyn BlockExec) -> Result<Vec<Row>, QueryError> {
    let mut rows = run_body(&q.body, ex)?;
    order_and_limit(&mut rows, &q.order, q.limit);
    Ok(rows)
}

fn run_body(body: &BoundBody, ex: &dyn BlockExec) -> Result<Vec<Row>, QueryError> {
    match body {
        BoundBody::Block(b) => {
            let b = materialize(b, ex)?;
            ex.exec_block(&b)
        }
        BoundBody::Union { left, right, all } => {
            let mut rows = run_body(left, ex)?;
            rows.extend(run_body(right, ex)?);
            if !*all {
                let mut seen = HashSet::with_capacity(rows.len());
                rows.retain(|r| seen.insert(r.clone()));
            }
            Ok(rows)
        }
    }
}

/// Replaces `IN (subquery)` by the list of its values, running the subquery
/// once with the same executor.
pub fn materialize(block: &BlockPlan, ex: &dyn BlockExec) -> Result<BlockPlan, QueryError> {
    let mut b = block.clone();
    let fix = |e: &mut BExpr| -> Result<(), QueryError> { replace_subqueries(e, ex) };
    for s in &mut b.sources {
        for f in &mut s.filters {
            fix(f)?;
        }
    }
    for st in &mut b.steps {
        for e in st.on_extra.iter_mut().chain(st.residual.iter_mut()) {
            fix(e)?;
        }
    }
    if let Some(h) = &mut b.having {
        fix(h)?;
    }
    for p in &mut b.projection {
        fix(p)?;
    }
    if let Some(a) = &mut b.agg {
        for k in &mut a.keys {
            fix(k)?;
        }
        for c in &mut a.aggs {
            if let Some(e) = &mut c.arg {
                fix(e)?;
            }
        }
    }
    Ok(b)
}

fn replace_subqueries(e: &mut BExpr, ex: &dyn BlockExec) -> Result<(), QueryError> {
    match e {
        BExpr::InSubquery { expr, query, negated } => {
            replace_subqueries(expr, ex)?;
            let values = run_query(query, ex)?.into_iter().map(|mut r| r.swap_remove(0)).collect();
            *e = BExpr::InList { expr: expr.clone(), list: Arc::new(InValues::new(values)), negated: *negated };
        }
        BExpr::Col(_) | BExpr::Const(_) => {}
        BExpr::Cmp(_, a, b) | BExpr::And(a, b) | BExpr::Or(a, b) => {
            replace_subqueries(a, ex)?;
            replace_subqueries(b, ex)?;
        }
        BExpr::Like { expr, .. } | BExpr::InList { expr, .. } => replace_subqueries(expr, ex)?,
        BExpr::Func(_, a) => replace_subqueries(a, ex)?,
    }
    Ok(())
}

/// Rows of a derived source, produced by the same executor.
pub fn derived_rows(block: &BlockPlan, source: usize, ex: &dyn BlockExec) -> Result<Vec<Row>, QueryError> {
    match &block.sources[source].kind {
        SourceKind::Derived { query } => run_query(query, ex),
        SourceKind::Base { .. } => unreachable!("base source"),
    }
}

/// Stable sort on the ORDER BY keys (nulls first ascending) with the whole
/// row as final tie-break, so ordered output is fully determined by the
/// result multiset. A LIMIT without ORDER BY applies to the canonical
/// whole-row order for the same reason.
pub fn order_and_limit(rows: &mut Vec<Row>, order: &[(usize, bool)], limit: Option<u64>) {
    if !order.is_empty() {
        rows.sort_by(|a, b| {
            for &(i, desc) in order {
                let o = a[i].cmp(&b[i]);
                let o = if desc { o.reverse() } else { o };
                if o.is_ne() {
                    return o;
                }
            }
            a.cmp(b)
        });
    } else if limit.is_some() {
        rows.sort();
    }
    if let Some(n) = limit {
        rows.truncate(n.min(usize::MAX as u64) as usize);
    }
}
