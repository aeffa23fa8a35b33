//! Row-at-a-time evaluation of bound expressions.

use std::borrow::Cow;

use chrono::Datelike;

use super::ast::ScalarFunc;
use super::plan::BExpr;
use crate::value::{compare, like_match, Value};

static NULL: Value = Value::Null;

/// Positional cell access; lets the same evaluator run over owned rows and
/// over tuples of borrowed source rows.
pub trait RowAccess {
    fn cell(&self, i: usize) -> &Value;
}

impl RowAccess for [Value] {
    fn cell(&self, i: usize) -> &Value {
        &self[i]
    }
}

impl RowAccess for Vec<Value> {
    fn cell(&self, i: usize) -> &Value {
        &self[i]
    }
}

/// A join tuple: one optional row per source, addressed through the wide
/// column map. Missing rows read as null.
pub struct TupleView<'a, 'r> {
    pub rows: &'a [Option<&'r [Value]>],
    pub map: &'a [(usize, usize)],
}

impl RowAccess for TupleView<'_, '_> {
    fn cell(&self, i: usize) -> &Value {
        let (s, c) = self.map[i];
        match self.rows[s] {
            Some(r) => &r[c],
            None => &NULL,
        }
    }
}

pub fn eval<'e, R: RowAccess + ?Sized>(e: &'e BExpr, row: &'e R) -> Cow<'e, Value> {
    match e {
        BExpr::Col(i) => Cow::Borrowed(row.cell(*i)),
        BExpr::Const(v) => Cow::Borrowed(v),
        BExpr::Func(f, a) => {
            let v = eval(a, row);
            Cow::Owned(match v.as_date() {
                Some(d) => Value::Int(match f {
                    ScalarFunc::Year => d.year() as i64,
                    ScalarFunc::Month => d.month() as i64,
                }),
                None => Value::Null,
            })
        }
        pred => Cow::Owned(Value::Bool(truth(pred, row))),
    }
}

/// Predicate truth with SQL unknown collapsed to false. `NOT LIKE` and
/// `NOT IN` on a null operand are false too.
pub fn truth<R: RowAccess + ?Sized>(e: &BExpr, row: &R) -> bool {
    match e {
        BExpr::Cmp(op, a, b) => compare(&eval(a, row), *op, &eval(b, row)),
        BExpr::And(a, b) => truth(a, row) && truth(b, row),
        BExpr::Or(a, b) => truth(a, row) || truth(b, row),
        BExpr::Like { expr, pattern, negated } => match eval(expr, row).as_str() {
            Some(s) => like_match(s, pattern) != *negated,
            None => false,
        },
        BExpr::InList { expr, list, negated } => list.test(&eval(expr, row), *negated),
        BExpr::InSubquery { .. } => panic!("subquery must be materialized before evaluation"),
        other => matches!(eval(other, row).as_ref(), Value::Bool(true)),
    }
}

pub fn all_true<R: RowAccess + ?Sized>(es: &[BExpr], row: &R) -> bool {
    es.iter().all(|e| truth(e, row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::plan::InValues;
    use crate::value::{parse_date, CmpOp};
    use std::sync::Arc;

    fn col(i: usize) -> Box<BExpr> {
        Box::new(BExpr::Col(i))
    }

    #[test]
    fn null_semantics() {
        let row = vec![Value::Null, Value::Int(3), Value::text("abc")];
        let c = |op, i, v| BExpr::Cmp(op, col(i), Box::new(BExpr::Const(v)));
        assert!(!truth(&c(CmpOp::Eq, 0, Value::Int(1)), &row));
        assert!(!truth(&c(CmpOp::Ne, 0, Value::Int(1)), &row));
        assert!(truth(&c(CmpOp::Ge, 1, Value::Float(3.0)), &row));
        let or = BExpr::Or(Box::new(c(CmpOp::Eq, 0, Value::Int(1))), Box::new(c(CmpOp::Eq, 1, Value::Int(3))));
        assert!(truth(&or, &row));
        let not_like = BExpr::Like { expr: col(0), pattern: "a%".into(), negated: true };
        assert!(!truth(&not_like, &row));
        let like = BExpr::Like { expr: col(2), pattern: "a%".into(), negated: false };
        assert!(truth(&like, &row));
        let list = Arc::new(InValues::new(vec![Value::Int(1), Value::Null]));
        assert!(!truth(&BExpr::InList { expr: col(1), list: list.clone(), negated: true }, &row));
        assert!(!truth(&BExpr::InList { expr: col(1), list, negated: false }, &row));
        let list = Arc::new(InValues::new(vec![Value::Int(1)]));
        assert!(truth(&BExpr::InList { expr: col(1), list, negated: true }, &row));
    }

    #[test]
    fn date_parts() {
        let row = vec![Value::Date(parse_date("2016-08-03").unwrap()), Value::Null];
        assert_eq!(*eval(&BExpr::Func(ScalarFunc::Year, col(0)), &row), Value::Int(2016));
        assert_eq!(*eval(&BExpr::Func(ScalarFunc::Month, col(0)), &row), Value::Int(8));
        assert_eq!(*eval(&BExpr::Func(ScalarFunc::Month, col(1)), &row), Value::Null);
    }

    #[test]
    fn tuple_view_reads_null_for_missing_rows() {
        let a = vec![Value::Int(1), Value::Int(2)];
        let rows = [Some(a.as_slice()), None];
        let map = [(0, 0), (0, 1), (1, 0)];
        let v = TupleView { rows: &rows, map: &map };
        assert_eq!(*v.cell(1), Value::Int(2));
        assert!(v.cell(2).is_null());
    }
}
