//! Two scan-compatible in-memory engines: [`RowStore`], the deliberately
//! naive baseline, and [`ColumnStore`], the warehouse side. Both hold one
//! readers-writer lock per table.

pub mod column;
pub mod row;
pub mod snapshot;

use std::collections::HashSet;

use thiserror::Error;

use crate::schema::{ColumnDef, TableDef};
use crate::value::{compare, like_match, CmpOp, Row, Value};

pub use column::{Bitmap, ColumnData, ColumnSegment, ColumnStore, ColumnTable};
pub use row::{RowStore, RowTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StorageError {
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {column} in table {table}")]
    UnknownColumn { table: String, column: String },
    #[error("table {0} already exists")]
    TableExists(String),
    #[error("table {table}: type mismatch in column {column} at row {row}")]
    TypeMismatch { table: String, column: String, row: usize },
    #[error("table {table}: row {row} has {got} cells, expected {expected}")]
    Arity { table: String, row: usize, got: usize, expected: usize },
    #[error("table {table}: duplicate primary key {key}")]
    PkCollision { table: String, key: String },
    #[error("table {0} not empty")]
    NotEmpty(String),
    #[error("relation for {relation} does not match table definition {table}")]
    SchemaMismatch { relation: String, table: String },
    #[error("snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineKind {
    Row,
    Column,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Row => "row",
            EngineKind::Column => "column",
        }
    }
}

/// A named, typed, ordered collection of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub table: String,
    pub columns: Vec<ColumnDef>,
    pub rows: Vec<Row>,
}

impl Relation {
    pub fn new(table: impl Into<String>, columns: Vec<ColumnDef>, rows: Vec<Row>) -> Self {
        Relation { table: table.into(), columns, rows }
    }

    pub fn empty(def: &TableDef) -> Self {
        Relation::new(def.name.clone(), def.columns.clone(), Vec::new())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    /// Rows sorted by the total value order, for multiset comparison.
    pub fn sorted_rows(&self) -> Vec<Row> {
        let mut rows = self.rows.clone();
        rows.sort();
        rows
    }

    /// Checks arity, types and primary-key uniqueness against `def`.
    pub fn check_against(&self, def: &TableDef) -> Result<(), StorageError> {
        let same_shape = self.columns.len() == def.columns.len()
            && self
                .columns
                .iter()
                .zip(&def.columns)
                .all(|(a, b)| a.name.eq_ignore_ascii_case(&b.name) && a.dtype == b.dtype);
        if !same_shape {
            return Err(StorageError::SchemaMismatch { relation: self.table.clone(), table: def.name.clone() });
        }
        let pk = def.pk_index();
        let mut keys = HashSet::with_capacity(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != def.columns.len() {
                return Err(StorageError::Arity {
                    table: def.name.clone(),
                    row: i,
                    got: row.len(),
                    expected: def.columns.len(),
                });
            }
            for (v, c) in row.iter().zip(&def.columns) {
                let ok = if v.is_null() { c.nullable } else { v.conforms_to(c.dtype) };
                if !ok {
                    return Err(StorageError::TypeMismatch { table: def.name.clone(), column: c.name.clone(), row: i });
                }
            }
            if let Some(p) = pk {
                if !keys.insert(&row[p]) {
                    return Err(StorageError::PkCollision { table: def.name.clone(), key: row[p].to_string() });
                }
            }
        }
        Ok(())
    }
}

/// Single-table filter understood by both engines' `scan`.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Const(bool),
    Cmp { column: String, op: CmpOp, value: Value },
    Like { column: String, pattern: String, negated: bool },
    In { column: String, values: Vec<Value>, negated: bool },
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
}

impl Predicate {
    pub fn cmp(column: &str, op: CmpOp, value: Value) -> Predicate {
        Predicate::Cmp { column: column.to_string(), op, value }
    }

    pub fn and(self, other: Predicate) -> Predicate {
        Predicate::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Predicate) -> Predicate {
        Predicate::Or(Box::new(self), Box::new(other))
    }

    pub fn columns(&self, out: &mut Vec<String>) {
        match self {
            Predicate::Const(_) => {}
            Predicate::Cmp { column, .. } | Predicate::Like { column, .. } | Predicate::In { column, .. } => {
                if !out.iter().any(|c| c.eq_ignore_ascii_case(column)) {
                    out.push(column.clone());
                }
            }
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                a.columns(out);
                b.columns(out);
            }
        }
    }

    /// Evaluates against one value per referenced column, resolved by `get`.
    pub fn eval_with(&self, get: &dyn Fn(&str) -> Value) -> bool {
        match self {
            Predicate::Const(b) => *b,
            Predicate::Cmp { column, op, value } => compare(&get(column), *op, value),
            Predicate::Like { column, pattern, negated } => like_value(&get(column), pattern, *negated),
            Predicate::In { column, values, negated } => in_list(&get(column), values, *negated),
            Predicate::And(a, b) => a.eval_with(get) && b.eval_with(get),
            Predicate::Or(a, b) => a.eval_with(get) || b.eval_with(get),
        }
    }
}

/// LIKE / NOT LIKE; a null or non-text operand never matches either way.
pub fn like_value(v: &Value, pattern: &str, negated: bool) -> bool {
    match v {
        Value::Text(s) => like_match(s, pattern) != negated,
        _ => false,
    }
}

/// IN / NOT IN with SQL null handling collapsed to false.
pub fn in_list(v: &Value, values: &[Value], negated: bool) -> bool {
    if v.is_null() {
        return false;
    }
    if values.iter().any(|x| compare(v, CmpOp::Eq, x)) {
        return !negated;
    }
    if values.iter().any(Value::is_null) {
        return false;
    }
    negated
}

/// Operations common to both engines.
pub trait StorageEngine: Send + Sync {
    fn kind(&self) -> EngineKind;
    fn create_table(&self, def: &TableDef) -> Result<(), StorageError>;
    fn table_def(&self, table: &str) -> Result<TableDef, StorageError>;
    fn table_names(&self) -> Vec<String>;
    fn row_count(&self, table: &str) -> Result<usize, StorageError>;
    /// Appends all rows or none.
    fn insert_batch(&self, rel: &Relation) -> Result<usize, StorageError>;
    /// Projects `columns` (all when empty) of rows satisfying `predicate`, in insertion order.
    fn scan(&self, table: &str, columns: &[&str], predicate: Option<&Predicate>) -> Result<Relation, StorageError>;
    fn lookup_pk(&self, table: &str, key: &Value) -> Result<Option<Row>, StorageError>;
    /// Removes all rows, keeping the table definition.
    fn truncate(&self, table: &str) -> Result<(), StorageError>;
}

pub(crate) fn resolve_columns(def: &TableDef, columns: &[&str]) -> Result<Vec<usize>, StorageError> {
    if columns.is_empty() {
        return Ok((0..def.columns.len()).collect());
    }
    columns
        .iter()
        .map(|c| {
            def.column_index(c)
                .ok_or_else(|| StorageError::UnknownColumn { table: def.name.clone(), column: c.to_string() })
        })
        .collect()
}

pub(crate) fn check_predicate_columns(def: &TableDef, p: &Predicate) -> Result<Vec<usize>, StorageError> {
    let mut names = Vec::new();
    p.columns(&mut names);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    if refs.is_empty() {
        return Ok(Vec::new());
    }
    resolve_columns(def, &refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::DataType;

    fn def() -> TableDef {
        TableDef {
            name: "T".into(),
            kind: crate::schema::TableKind::Dimension,
            columns: vec![
                ColumnDef::new("ID", DataType::Int64),
                ColumnDef::new("Name", DataType::Text),
                ColumnDef::nullable("Qty", DataType::Float64),
            ],
            primary_key: "ID".into(),
            foreign_keys: vec![],
        }
    }

    fn rel(rows: Vec<Row>) -> Relation {
        let d = def();
        Relation::new("T", d.columns, rows)
    }

    fn sample() -> Vec<Row> {
        (1..=50)
            .map(|i| {
                vec![
                    Value::Int(i),
                    Value::text(if i % 3 == 0 { "Potato" } else { "Rye" }),
                    if i % 7 == 0 { Value::Null } else { Value::Float(i as f64 / 2.0) },
                ]
            })
            .collect()
    }

    fn engines() -> Vec<Box<dyn StorageEngine>> {
        vec![Box::new(RowStore::new()), Box::new(ColumnStore::new())]
    }

    #[test]
    fn insert_then_count() {
        for e in engines() {
            e.create_table(&def()).unwrap();
            assert_eq!(e.insert_batch(&rel(sample())).unwrap(), 50);
            assert_eq!(e.row_count("T").unwrap(), 50);
            assert_eq!(e.scan("t", &[], None).unwrap().rows, sample());
        }
    }

    #[test]
    fn pk_collision_rejected_without_partial_state() {
        for e in engines() {
            e.create_table(&def()).unwrap();
            let mut rows = sample();
            rows.push(rows[0].clone());
            assert!(matches!(e.insert_batch(&rel(rows)), Err(StorageError::PkCollision { .. })));
            assert_eq!(e.row_count("T").unwrap(), 0);
            e.insert_batch(&rel(sample()[..2].to_vec())).unwrap();
            let again = e.insert_batch(&rel(sample()[1..3].to_vec()));
            assert!(matches!(again, Err(StorageError::PkCollision { .. })));
            assert_eq!(e.row_count("T").unwrap(), 2);
        }
    }

    #[test]
    fn type_mismatch_rejected() {
        for e in engines() {
            e.create_table(&def()).unwrap();
            let bad = rel(vec![vec![Value::Int(1), Value::Int(5), Value::Null]]);
            assert!(matches!(e.insert_batch(&bad), Err(StorageError::TypeMismatch { .. })));
        }
    }

    #[test]
    fn empty_insert_is_noop() {
        for e in engines() {
            e.create_table(&def()).unwrap();
            assert_eq!(e.insert_batch(&rel(vec![])).unwrap(), 0);
            assert_eq!(e.row_count("T").unwrap(), 0);
        }
    }

    #[test]
    fn scans_agree_across_engines() {
        let preds = vec![
            Predicate::Const(false),
            Predicate::cmp("Qty", CmpOp::Gt, Value::Int(10)),
            Predicate::Like { column: "Name".into(), pattern: "P%".into(), negated: false },
            Predicate::cmp("ID", CmpOp::Le, Value::Int(5))
                .or(Predicate::In { column: "Qty".into(), values: vec![Value::Float(20.0)], negated: true }),
        ];
        let es = engines();
        for e in &es {
            e.create_table(&def()).unwrap();
            e.insert_batch(&rel(sample())).unwrap();
        }
        for p in &preds {
            let a = es[0].scan("T", &["Name", "Qty"], Some(p)).unwrap();
            let b = es[1].scan("T", &["Name", "Qty"], Some(p)).unwrap();
            assert_eq!(a.sorted_rows(), b.sorted_rows(), "{p:?}");
        }
        assert!(es[0].scan("T", &[], Some(&preds[0])).unwrap().is_empty());
    }

    #[test]
    fn lookup_by_key() {
        for e in engines() {
            e.create_table(&def()).unwrap();
            e.insert_batch(&rel(sample())).unwrap();
            assert_eq!(e.lookup_pk("T", &Value::Int(3)).unwrap(), Some(sample()[2].clone()));
            assert_eq!(e.lookup_pk("T", &Value::Int(99)).unwrap(), None);
            assert!(e.lookup_pk("Nope", &Value::Int(1)).is_err());
        }
    }

    #[test]
    fn unknown_names_are_errors() {
        for e in engines() {
            e.create_table(&def()).unwrap();
            assert!(matches!(e.scan("X", &[], None), Err(StorageError::UnknownTable(_))));
            assert!(matches!(e.scan("T", &["Nope"], None), Err(StorageError::UnknownColumn { .. })));
        }
    }

    #[test]
    fn column_store_reads_only_needed_segments() {
        let cs = ColumnStore::new();
        cs.create_table(&def()).unwrap();
        cs.insert_batch(&rel(sample())).unwrap();
        cs.reset_segment_accesses();
        let p = Predicate::cmp("Qty", CmpOp::Gt, Value::Int(3));
        cs.scan("T", &["Name"], Some(&p)).unwrap();
        assert_eq!(cs.segment_accesses(), 2);
        assert_eq!(cs.segment_reads("T", "ID"), 0);
    }

    #[test]
    fn null_handling_in_lists() {
        assert!(!in_list(&Value::Null, &[Value::Int(1)], true));
        assert!(!in_list(&Value::Int(2), &[Value::Int(1), Value::Null], true));
        assert!(in_list(&Value::Int(2), &[Value::Int(1)], true));
        assert!(in_list(&Value::Float(1.0), &[Value::Int(1)], false));
        assert!(!like_value(&Value::Null, "%", true));
    }
}
