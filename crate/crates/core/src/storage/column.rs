use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use chrono::{Datelike, NaiveDate};

use super::{check_predicate_columns, resolve_columns, EngineKind, Predicate, Relation, StorageEngine, StorageError};
use crate::schema::TableDef;
use crate::value::{compare, like_match, DataType, GeoPoint, Row, Value};

/// Text code stored at null positions.
pub const NULL_CODE: u32 = u32::MAX;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bitmap {
    words: Vec<u64>,
    len: usize,
}

impl Bitmap {
    pub fn push(&mut self, bit: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        if bit {
            *self.words.last_mut().unwrap() |= 1 << (self.len % 64);
        }
        self.len += 1;
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn from_words(words: Vec<u64>, len: usize) -> Self {
        Bitmap { words, len }
    }
}

/// Typed value vector; dates are days from the common era, text is
/// dictionary-coded in first-appearance order.
#[derive(Debug, Clone)]
pub enum ColumnData {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Bool(Vec<bool>),
    Date(Vec<i32>),
    Text { dict: Vec<Arc<str>>, codes: Vec<u32>, lookup: HashMap<Arc<str>, u32> },
    Point(Vec<GeoPoint>),
    Polygon(Vec<Arc<[GeoPoint]>>),
}

impl ColumnData {
    fn new(dtype: DataType) -> Self {
        match dtype {
            DataType::Int64 => ColumnData::Int(Vec::new()),
            DataType::Float64 => ColumnData::Float(Vec::new()),
            DataType::Bool => ColumnData::Bool(Vec::new()),
            DataType::Date => ColumnData::Date(Vec::new()),
            DataType::Text => ColumnData::Text { dict: Vec::new(), codes: Vec::new(), lookup: HashMap::new() },
            DataType::GeoPoint => ColumnData::Point(Vec::new()),
            DataType::GeoPolygon => ColumnData::Polygon(Vec::new()),
        }
    }
}

pub fn date_to_days(d: NaiveDate) -> i32 {
    d.num_days_from_ce()
}

pub fn days_to_date(days: i32) -> NaiveDate {
    NaiveDate::from_num_days_from_ce_opt(days).expect("stored day number is a valid date")
}

#[derive(Debug, Clone)]
pub struct ColumnSegment {
    pub name: String,
    pub dtype: DataType,
    pub data: ColumnData,
    pub nulls: Bitmap,
}

impl ColumnSegment {
    pub fn new(name: &str, dtype: DataType) -> Self {
        ColumnSegment { name: name.to_string(), dtype, data: ColumnData::new(dtype), nulls: Bitmap::default() }
    }

    pub fn len(&self) -> usize {
        self.nulls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nulls.is_empty()
    }

    #[inline]
    pub fn is_null(&self, i: usize) -> bool {
        self.nulls.get(i)
    }

    /// Appends a value already checked to conform to the column type.
    pub fn push(&mut self, v: &Value) {
        let null = v.is_null();
        self.nulls.push(null);
        match &mut self.data {
            ColumnData::Int(xs) => xs.push(v.as_i64().unwrap_or(0)),
            ColumnData::Float(xs) => xs.push(v.as_f64().unwrap_or(0.0)),
            ColumnData::Bool(xs) => xs.push(matches!(v, Value::Bool(true))),
            ColumnData::Date(xs) => xs.push(v.as_date().map_or(0, date_to_days)),
            ColumnData::Text { dict, codes, lookup } => match v {
                Value::Text(s) => {
                    let code = *lookup.entry(s.clone()).or_insert_with(|| {
                        dict.push(s.clone());
                        (dict.len() - 1) as u32
                    });
                    codes.push(code);
                }
                _ => codes.push(NULL_CODE),
            },
            ColumnData::Point(xs) => xs.push(match v {
                Value::Point(p) => *p,
                _ => GeoPoint::new(0.0, 0.0),
            }),
            ColumnData::Polygon(xs) => xs.push(match v {
                Value::Polygon(p) => p.clone(),
                _ => Arc::from(Vec::new()),
            }),
        }
    }

    pub fn get(&self, i: usize) -> Value {
        if self.nulls.get(i) {
            return Value::Null;
        }
        match &self.data {
            ColumnData::Int(xs) => Value::Int(xs[i]),
            ColumnData::Float(xs) => Value::Float(xs[i]),
            ColumnData::Bool(xs) => Value::Bool(xs[i]),
            ColumnData::Date(xs) => Value::Date(days_to_date(xs[i])),
            ColumnData::Text { dict, codes, .. } => Value::Text(dict[codes[i] as usize].clone()),
            ColumnData::Point(xs) => Value::Point(xs[i]),
            ColumnData::Polygon(xs) => Value::Polygon(xs[i].clone()),
        }
    }

    /// Row mask of a single-column predicate leaf.
    pub fn mask(&self, leaf: &Predicate) -> Vec<bool> {
        let n = self.len();
        let nulls = &self.nulls;
        match (leaf, &self.data) {
            (Predicate::Cmp { op, value, .. }, ColumnData::Int(xs)) if matches!(value, Value::Int(_)) => {
                let k = value.as_i64().unwrap();
                (0..n).map(|i| !nulls.get(i) && op.holds(xs[i].cmp(&k))).collect()
            }
            (Predicate::Cmp { op, value, .. }, ColumnData::Float(xs)) if matches!(value, Value::Float(_) | Value::Int(_)) => {
                (0..n).map(|i| !nulls.get(i) && compare(&Value::Float(xs[i]), *op, value)).collect()
            }
            (Predicate::Cmp { op, value: Value::Date(d), .. }, ColumnData::Date(xs)) => {
                let k = date_to_days(*d);
                (0..n).map(|i| !nulls.get(i) && op.holds(xs[i].cmp(&k))).collect()
            }
            (Predicate::Cmp { op, value: Value::Text(s), .. }, ColumnData::Text { dict, codes, .. }) => {
                let hits: Vec<bool> =
                    dict.iter().map(|d| op.holds(d.as_bytes().cmp(s.as_bytes()))).collect();
                codes.iter().map(|&c| c != NULL_CODE && hits[c as usize]).collect()
            }
            (Predicate::Like { pattern, negated, .. }, ColumnData::Text { dict, codes, .. }) => {
                let hits: Vec<bool> = dict.iter().map(|d| like_match(d, pattern) != *negated).collect();
                codes.iter().map(|&c| c != NULL_CODE && hits[c as usize]).collect()
            }
            (Predicate::Const(b), _) => vec![*b; n],
            _ => (0..n).map(|i| leaf.eval_with(&|_: &str| self.get(i))).collect(),
        }
    }
}

/// Typed segments sharing one row count, plus a primary-key hash.
#[derive(Debug)]
pub struct ColumnTable {
    pub def: TableDef,
    segments: Vec<ColumnSegment>,
    len: usize,
    pk: HashMap<Value, u32>,
    reads: Vec<AtomicU64>,
    total_reads: Arc<AtomicU64>,
}

impl ColumnTable {
    fn new(def: TableDef, total_reads: Arc<AtomicU64>) -> Self {
        let segments = def.columns.iter().map(|c| ColumnSegment::new(&c.name, c.dtype)).collect();
        let reads = def.columns.iter().map(|_| AtomicU64::new(0)).collect();
        ColumnTable { def, segments, len: 0, pk: HashMap::new(), reads, total_reads }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Accesses one segment, counting the read.
    pub fn segment(&self, i: usize) -> &ColumnSegment {
        self.reads[i].fetch_add(1, Ordering::Relaxed);
        self.total_reads.fetch_add(1, Ordering::Relaxed);
        &self.segments[i]
    }

    pub fn pk_row(&self, key: &Value) -> Option<u32> {
        self.pk.get(key).copied()
    }

    /// Row ids of each primary key, for join probes.
    pub fn pk_index(&self) -> &HashMap<Value, u32> {
        &self.pk
    }

    fn push_rows(&mut self, rows: &[Row]) {
        let pk = self.def.pk_index();
        for row in rows {
            if let Some(p) = pk {
                self.pk.insert(row[p].clone(), self.len as u32);
            }
            for (seg, v) in self.segments.iter_mut().zip(row) {
                seg.push(v);
            }
            self.len += 1;
        }
    }

    pub(crate) fn from_segments(def: TableDef, segments: Vec<ColumnSegment>, total_reads: Arc<AtomicU64>) -> Self {
        let mut t = ColumnTable::new(def, total_reads);
        t.len = segments.first().map_or(0, ColumnSegment::len);
        if let Some(p) = t.def.pk_index() {
            for i in 0..t.len {
                t.pk.insert(segments[p].get(i), i as u32);
            }
        }
        t.segments = segments;
        t
    }
}

#[derive(Debug, Default)]
pub struct ColumnStore {
    tables: RwLock<BTreeMap<String, Arc<RwLock<ColumnTable>>>>,
    reads: Arc<AtomicU64>,
}

impl ColumnStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn table(&self, name: &str) -> Result<Arc<RwLock<ColumnTable>>, StorageError> {
        self.tables
            .read()
            .unwrap()
            .get(&name.to_ascii_lowercase())
            .cloned()
            .ok_or_else(|| StorageError::UnknownTable(name.to_string()))
    }

    pub fn segment_accesses(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn reset_segment_accesses(&self) {
        self.reads.store(0, Ordering::Relaxed);
        for t in self.tables.read().unwrap().values() {
            for r in &t.read().unwrap().reads {
                r.store(0, Ordering::Relaxed);
            }
        }
    }

    /// Reads of one column's segment since the last reset.
    pub fn segment_reads(&self, table: &str, column: &str) -> u64 {
        let Ok(t) = self.table(table) else { return 0 };
        let t = t.read().unwrap();
        t.def.column_index(column).map_or(0, |i| t.reads[i].load(Ordering::Relaxed))
    }

    pub(crate) fn install(&self, table: ColumnTable) {
        self.tables.write().unwrap().insert(table.def.name.to_ascii_lowercase(), Arc::new(RwLock::new(table)));
    }

    pub(crate) fn read_counter(&self) -> Arc<AtomicU64> {
        self.reads.clone()
    }
}

fn eval_mask<'a>(p: &Predicate, seg: &dyn Fn(&str) -> &'a ColumnSegment, n: usize) -> Vec<bool> {
    match p {
        Predicate::Const(b) => vec![*b; n],
        Predicate::Cmp { column, .. } | Predicate::Like { column, .. } | Predicate::In { column, .. } => {
            seg(column).mask(p)
        }
        Predicate::And(a, b) => {
            let mut m = eval_mask(a, seg, n);
            for (x, y) in m.iter_mut().zip(eval_mask(b, seg, n)) {
                *x = *x && y;
            }
            m
        }
        Predicate::Or(a, b) => {
            let mut m = eval_mask(a, seg, n);
            for (x, y) in m.iter_mut().zip(eval_mask(b, seg, n)) {
                *x = *x || y;
            }
            m
        }
    }
}

impl StorageEngine for ColumnStore {
    fn kind(&self) -> EngineKind {
        EngineKind::Column
    }

    fn create_table(&self, def: &TableDef) -> Result<(), StorageError> {
        let mut tables = self.tables.write().unwrap();
        let key = def.name.to_ascii_lowercase();
        if tables.contains_key(&key) {
            return Err(StorageError::TableExists(def.name.clone()));
        }
        tables.insert(key, Arc::new(RwLock::new(ColumnTable::new(def.clone(), self.reads.clone()))));
        Ok(())
    }

    fn table_def(&self, table: &str) -> Result<TableDef, StorageError> {
        Ok(self.table(table)?.read().unwrap().def.clone())
    }

    fn table_names(&self) -> Vec<String> {
        self.tables.read().unwrap().values().map(|t| t.read().unwrap().def.name.clone()).collect()
    }

    fn row_count(&self, table: &str) -> Result<usize, StorageError> {
        Ok(self.table(table)?.read().unwrap().len)
    }

    fn insert_batch(&self, rel: &Relation) -> Result<usize, StorageError> {
        let t = self.table(&rel.table)?;
        let mut t = t.write().unwrap();
        rel.check_against(&t.def)?;
        if let Some(p) = t.def.pk_index() {
            if let Some(row) = rel.rows.iter().find(|r| t.pk.contains_key(&r[p])) {
                return Err(StorageError::PkCollision { table: t.def.name.clone(), key: row[p].to_string() });
            }
        }
        t.push_rows(&rel.rows);
        Ok(rel.rows.len())
    }

    fn scan(&self, table: &str, columns: &[&str], predicate: Option<&Predicate>) -> Result<Relation, StorageError> {
        let handle = self.table(table)?;
        let t = handle.read().unwrap();
        let t: &ColumnTable = &t;
        let proj = resolve_columns(&t.def, columns)?;
        let pred_cols = match predicate {
            Some(p) => check_predicate_columns(&t.def, p)?,
            None => Vec::new(),
        };
        let mut touched: BTreeMap<usize, &ColumnSegment> = BTreeMap::new();
        for &i in pred_cols.iter().chain(&proj) {
            touched.entry(i).or_insert_with(|| t.segment(i));
        }
        let n = t.len;
        let selected: Vec<usize> = match predicate {
            Some(p) => {
                let lookup = |c: &str| -> &ColumnSegment { touched[&t.def.column_index(c).unwrap()] };
                let mask = eval_mask(p, &lookup, n);
                (0..n).filter(|&i| mask[i]).collect()
            }
            None => (0..n).collect(),
        };
        let segs: Vec<&ColumnSegment> = proj.iter().map(|i| touched[i]).collect();
        let rows = selected.iter().map(|&r| segs.iter().map(|s| s.get(r)).collect()).collect();
        let cols = proj.iter().map(|&i| t.def.columns[i].clone()).collect();
        Ok(Relation::new(t.def.name.clone(), cols, rows))
    }

    fn lookup_pk(&self, table: &str, key: &Value) -> Result<Option<Row>, StorageError> {
        let t = self.table(table)?;
        let t = t.read().unwrap();
        Ok(t.pk.get(key).map(|&r| t.segments.iter().map(|s| s.get(r as usize)).collect()))
    }

    fn truncate(&self, table: &str) -> Result<(), StorageError> {
        let t = self.table(table)?;
        let mut t = t.write().unwrap();
        let def = t.def.clone();
        *t = ColumnTable::new(def, self.reads.clone());
        Ok(())
    }
}

