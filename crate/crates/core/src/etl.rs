//! Extract → cleanse → transform → load.
//!
//! Cleansing checks each row in file order and stops at the first class that
//! applies:
//!
//! 1. duplicate: all cells equal an earlier accepted row (first occurrence wins);
//! 2. missing: an empty cell in a non-nullable column;
//! 3. inconsistent: a cell that does not parse as its column type, a negative
//!    fact measure (numeric fact column that is neither key nor foreign key),
//!    a date outside the configured range, or a primary key already taken by
//!    a different accepted row;
//! 4. wrong: a foreign key with no matching accepted row in the target
//!    table. This runs after every table is typed and repeats until no more
//!    rows drop out, since rejecting a dimension row can orphan others.
//!
//! Every detected row is rejected; `corrected` is always zero.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::{Hash, Hasher};

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{default_date_range, DefectClass, RawFileSet};
use crate::schema::{ConstellationSchema, TableDef};
use crate::storage::{Relation, StorageEngine, StorageError};
use crate::value::{season_of, DataType, Row, Value};

#[derive(Debug, Error)]
pub enum EtlError {
    #[error("missing table file {0}")]
    MissingFile(String),
    #[error("{file}: line {line}: {message}")]
    Malformed { file: String, line: u64, message: String },
    #[error("{file}: unknown column {column}")]
    UnknownColumn { file: String, column: String },
    #[error("{file}: missing column {column}")]
    MissingColumn { file: String, column: String },
    #[error("unresolvable key {key} in {table}.{column}")]
    UnresolvedKey { table: String, column: String, key: String },
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

/// Raw text rows of one table, cells reordered to the schema's column order.
#[derive(Debug, Clone)]
pub struct StagingBatch {
    pub table: String,
    pub source: String,
    pub header: Vec<String>,
    /// Record field index for each schema column.
    column_map: Vec<usize>,
    records: Vec<csv::StringRecord>,
    /// 1-based data-row ordinals (header excluded), strictly increasing.
    pub ordinals: Vec<u64>,
}

impl StagingBatch {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Cell of schema column `col` in row `row`.
    pub fn cell(&self, row: usize, col: usize) -> &str {
        &self.records[row][self.column_map[col]]
    }

    pub fn row_cells(&self, row: usize) -> Vec<&str> {
        (0..self.column_map.len()).map(|c| self.cell(row, c)).collect()
    }
}

/// Parses every table file of `schema` from `files`.
pub fn extract(files: &RawFileSet, schema: &ConstellationSchema) -> Result<Vec<StagingBatch>, EtlError> {
    schema
        .tables
        .values()
        .map(|def| {
            let file = format!("{}.csv", def.name);
            let bytes = files
                .files
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(&def.name))
                .map(|(_, v)| v)
                .ok_or_else(|| EtlError::MissingFile(file.clone()))?;
            extract_one(def, &file, bytes)
        })
        .collect()
}

fn extract_one(def: &TableDef, file: &str, bytes: &[u8]) -> Result<StagingBatch, EtlError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let malformed = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        EtlError::Malformed { file: file.to_string(), line, message: e.to_string() }
    };
    let header: Vec<String> = rdr.headers().map_err(malformed)?.iter().map(str::to_string).collect();
    for h in &header {
        if def.column_index(h).is_none() {
            return Err(EtlError::UnknownColumn { file: file.to_string(), column: h.clone() });
        }
    }
    let column_map = def
        .columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h.eq_ignore_ascii_case(&c.name))
                .ok_or_else(|| EtlError::MissingColumn { file: file.to_string(), column: c.name.clone() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    let mut ordinals = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        records.push(rec.map_err(malformed)?);
        ordinals.push(i as u64 + 1);
    }
    Ok(StagingBatch { table: def.name.clone(), source: file.to_string(), header, column_map, records, ordinals })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CleansingAction {
    Rejected,
    Corrected,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassReport {
    pub detected: u64,
    pub rejected: u64,
    pub corrected: u64,
    pub ordinals: Vec<u64>,
}

impl ClassReport {
    fn reject(&mut self, ordinal: u64) {
        self.detected += 1;
        self.rejected += 1;
        self.ordinals.push(ordinal);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableReport {
    pub input_rows: u64,
    pub output_rows: u64,
    pub classes: BTreeMap<DefectClass, ClassReport>,
}

impl TableReport {
    fn new(input_rows: u64) -> Self {
        let classes = DefectClass::ALL.iter().map(|c| (*c, ClassReport::default())).collect();
        TableReport { input_rows, output_rows: 0, classes }
    }

    pub fn detected(&self, class: DefectClass) -> u64 {
        self.classes.get(&class).map_or(0, |c| c.detected)
    }

    pub fn rejected_total(&self) -> u64 {
        self.classes.values().map(|c| c.rejected).sum()
    }
}

/// Per table and class: detected count, action split and row ordinals.
/// JSON keys: `{"tables": {<table>: {"input_rows", "output_rows",
/// "classes": {<class>: {"detected", "rejected", "corrected", "ordinals"}}}}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleansingReport {
    pub tables: BTreeMap<String, TableReport>,
}

impl CleansingReport {
    pub fn detected(&self, table: &str, class: DefectClass) -> u64 {
        self.tables.get(table).map_or(0, |t| t.detected(class))
    }

    pub fn total_detected(&self) -> u64 {
        self.tables.values().flat_map(|t| t.classes.values()).map(|c| c.detected).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtlConfig {
    /// Dates outside this inclusive range are inconsistent.
    pub date_range: (NaiveDate, NaiveDate),
}

impl Default for EtlConfig {
    fn default() -> Self {
        EtlConfig { date_range: default_date_range() }
    }
}

/// Typed rows that survived per-table checks, with their source ordinals.
#[derive(Debug, Clone)]
pub struct Cleansed {
    pub relation: Relation,
    pub ordinals: Vec<u64>,
    pub report: TableReport,
}

fn is_measure(def: &TableDef, col: usize) -> bool {
    let c = &def.columns[col];
    def.is_fact()
        && c.dtype.is_numeric()
        && !c.name.eq_ignore_ascii_case(&def.primary_key)
        && def.foreign_key(&c.name).is_none()
}

/// Per-table checks (duplicate, missing, inconsistent). Foreign keys are
/// checked later by [`check_references`].
pub fn cleanse(batch: &StagingBatch, schema: &ConstellationSchema, cfg: &EtlConfig) -> Result<Cleansed, EtlError> {
    let def = schema.table(&batch.table).ok_or_else(|| EtlError::UnknownTable(batch.table.clone()))?;
    let mut report = TableReport::new(batch.len() as u64);
    let ncols = def.columns.len();
    let pk = def.pk_index();
    let measures: Vec<bool> = (0..ncols).map(|i| is_measure(def, i)).collect();
    let mut seen: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut pk_seen: HashSet<Value> = HashSet::new();
    let mut rows: Vec<Row> = Vec::new();
    let mut kept_raw: Vec<usize> = Vec::new();
    let mut ordinals = Vec::new();

    for r in 0..batch.len() {
        let ordinal = batch.ordinals[r];
        let mut h = DefaultHasher::new();
        for c in 0..ncols {
            batch.cell(r, c).hash(&mut h);
        }
        let key = h.finish();
        let dup = seen.get(&key).is_some_and(|ks| {
            ks.iter().any(|&k| (0..ncols).all(|c| batch.cell(kept_raw[k], c) == batch.cell(r, c)))
        });
        if dup {
            report.classes.get_mut(&DefectClass::Duplicate).unwrap().reject(ordinal);
            continue;
        }
        if (0..ncols).any(|c| !def.columns[c].nullable && batch.cell(r, c).is_empty()) {
            report.classes.get_mut(&DefectClass::Missing).unwrap().reject(ordinal);
            continue;
        }
        let mut typed = Vec::with_capacity(ncols);
        let mut ok = true;
        for c in 0..ncols {
            let cell = batch.cell(r, c);
            if cell.is_empty() {
                typed.push(Value::Null);
                continue;
            }
            let v = match Value::parse_as(cell, def.columns[c].dtype) {
                Ok(v) => v,
                Err(_) => {
                    ok = false;
                    break;
                }
            };
            let bad = match &v {
                Value::Date(d) => *d < cfg.date_range.0 || *d > cfg.date_range.1,
                Value::Int(i) if measures[c] => *i < 0,
                Value::Float(f) if measures[c] => *f < 0.0,
                _ => false,
            };
            if bad {
                ok = false;
                break;
            }
            typed.push(v);
        }
        if ok {
            if let Some(p) = pk {
                ok = pk_seen.insert(typed[p].clone());
            }
        }
        if !ok {
            report.classes.get_mut(&DefectClass::Inconsistent).unwrap().reject(ordinal);
            continue;
        }
        seen.entry(key).or_default().push(kept_raw.len());
        kept_raw.push(r);
        rows.push(typed);
        ordinals.push(ordinal);
    }
    report.output_rows = rows.len() as u64;
    Ok(Cleansed { relation: Relation::new(def.name.clone(), def.columns.clone(), rows), ordinals, report })
}

/// Rejects rows whose foreign keys point at no accepted row, repeating until stable.
pub fn check_references(cleansed: &mut BTreeMap<String, Cleansed>, schema: &ConstellationSchema) {
    loop {
        let keys: HashMap<String, HashSet<Value>> = cleansed
            .iter()
            .filter_map(|(name, c)| {
                let def = schema.table(name)?;
                let p = def.pk_index()?;
                Some((name.to_ascii_lowercase(), c.relation.rows.iter().map(|r| r[p].clone()).collect()))
            })
            .collect();
        let mut changed = false;
        for (name, c) in cleansed.iter_mut() {
            let Some(def) = schema.table(name) else { continue };
            let checks: Vec<(usize, &HashSet<Value>)> = def
                .foreign_keys
                .iter()
                .filter_map(|fk| Some((def.column_index(&fk.column)?, keys.get(&fk.ref_table.to_ascii_lowercase())?)))
                .collect();
            if checks.is_empty() {
                continue;
            }
            let mut keep_rows = Vec::with_capacity(c.relation.rows.len());
            let mut keep_ords = Vec::with_capacity(c.ordinals.len());
            let rows = std::mem::take(&mut c.relation.rows);
            for (row, ord) in rows.into_iter().zip(c.ordinals.drain(..)) {
                let dangling = checks.iter().any(|(i, ks)| !row[*i].is_null() && !ks.contains(&row[*i]));
                if dangling {
                    c.report.classes.get_mut(&DefectClass::Wrong).unwrap().reject(ord);
                    changed = true;
                } else {
                    keep_rows.push(row);
                    keep_ords.push(ord);
                }
            }
            c.relation.rows = keep_rows;
            c.ordinals = keep_ords;
            c.report.output_rows = c.relation.rows.len() as u64;
        }
        if !changed {
            break;
        }
    }
    for c in cleansed.values_mut() {
        for cr in c.report.classes.values_mut() {
            cr.ordinals.sort_unstable();
        }
    }
}

/// Cleanses all batches in parallel, then runs the reference pass.
pub fn cleanse_all(
    batches: &[StagingBatch],
    schema: &ConstellationSchema,
    cfg: &EtlConfig,
) -> Result<(BTreeMap<String, Relation>, CleansingReport), EtlError> {
    let results: Vec<Cleansed> = batches.par_iter().map(|b| cleanse(b, schema, cfg)).collect::<Result<_, _>>()?;
    let mut by_name: BTreeMap<String, Cleansed> = results.into_iter().map(|c| (c.relation.table.clone(), c)).collect();
    check_references(&mut by_name, schema);
    let mut report = CleansingReport::default();
    let mut relations = BTreeMap::new();
    for (name, c) in by_name {
        report.tables.insert(name.clone(), c.report);
        relations.insert(name, c.relation);
    }
    Ok((relations, report))
}

/// `(table, derived column, source date column, derivation)`.
const DERIVED: &[(&str, &str, &str, Derivation)] = &[
    ("OperationTime", "Season", "StartDate", Derivation::Season),
    ("TransTime", "Season", "OrderDate", Derivation::Season),
    ("Nutrient", "Year", "Date", Derivation::Year),
];

#[derive(Debug, Clone, Copy)]
enum Derivation {
    Season,
    Year,
}

/// Fills derived columns and verifies every foreign key resolves. Applying
/// it to its own output changes nothing.
pub fn transform(
    mut relations: BTreeMap<String, Relation>,
    schema: &ConstellationSchema,
) -> Result<BTreeMap<String, Relation>, EtlError> {
    for (table, target, source, how) in DERIVED {
        let Some(rel) = relations.values_mut().find(|r| r.table.eq_ignore_ascii_case(table)) else { continue };
        let (Some(t), Some(s)) = (rel.column_index(target), rel.column_index(source)) else { continue };
        for row in rel.rows.iter_mut() {
            row[t] = match (row[s].as_date(), how, rel.columns[t].dtype) {
                (Some(d), Derivation::Season, DataType::Text) => Value::text(season_of(d)),
                (Some(d), Derivation::Year, DataType::Int64) => Value::Int(d.year() as i64),
                (Some(d), Derivation::Year, DataType::Text) => Value::text(d.year().to_string()),
                _ => Value::Null,
            };
        }
    }
    for def in schema.tables.values() {
        let Some(rel) = relations.get(&def.name) else { continue };
        for fk in &def.foreign_keys {
            let (Some(c), Some(target)) = (def.column_index(&fk.column), schema.table(&fk.ref_table)) else {
                continue;
            };
            let Some(trel) = relations.get(&target.name) else { continue };
            let Some(tc) = trel.column_index(&fk.ref_column) else { continue };
            let keys: HashSet<&Value> = trel.rows.iter().map(|r| &r[tc]).collect();
            if let Some(row) = rel.rows.iter().find(|r| !r[c].is_null() && !keys.contains(&r[c])) {
                return Err(EtlError::UnresolvedKey {
                    table: def.name.clone(),
                    column: fk.column.clone(),
                    key: row[c].to_string(),
                });
            }
        }
    }
    Ok(relations)
}

/// Rows loaded per table and engine kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub tables: BTreeMap<String, BTreeMap<String, usize>>,
}

/// Creates missing tables and loads every relation into every target.
/// A target table that already holds rows is an error.
pub fn load(
    relations: &BTreeMap<String, Relation>,
    targets: &[&dyn StorageEngine],
    schema: &ConstellationSchema,
) -> Result<LoadSummary, EtlError> {
    let mut summary = LoadSummary::default();
    for name in schema.dependency_order() {
        let def = schema.table(name).unwrap();
        let empty = Relation::empty(def);
        let rel = relations.get(name).unwrap_or(&empty);
        for target in targets {
            match target.create_table(def) {
                Ok(()) | Err(StorageError::TableExists(_)) => {}
                Err(e) => return Err(e.into()),
            }
            if target.row_count(name)? > 0 {
                return Err(StorageError::NotEmpty(def.name.clone()).into());
            }
            let n = target.insert_batch(rel)?;
            summary.tables.entry(def.name.clone()).or_default().insert(target.kind().name().to_string(), n);
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, DefectRates, GenConfig};
    use crate::schema::builtin_adw_schema;
    use crate::storage::{ColumnStore, RowStore};

    fn files(table: &str, body: &str) -> RawFileSet {
        RawFileSet { files: BTreeMap::from([(table.to_string(), body.as_bytes().to_vec())]) }
    }

    fn small_schema() -> ConstellationSchema {
        crate::schema::load_schema(
            "fact F ( ID:int64, DID:int64, Qty:float64, When:date, pk=ID, fk=DID->D.ID )\n\
             fact G ( ID:int64, DID:int64, pk=ID, fk=DID->D.ID )\n\
             dimension D ( ID:int64, PH:float64, Note:text?, pk=ID )",
        )
        .unwrap()
    }

    fn small_files(f: &str, d: &str) -> RawFileSet {
        let mut fs = files("F", f);
        fs.files.insert("G".into(), b"ID,DID\n".to_vec());
        fs.files.insert("D".into(), d.as_bytes().to_vec());
        fs
    }

    #[test]
    fn extract_counts_generator_tables() {
        let s = builtin_adw_schema();
        let (fs, _) = generate(&s, &GenConfig::new(1, 100)).unwrap();
        let batches = extract(&fs, &s).unwrap();
        assert_eq!(batches.len(), s.fact_tables().count() + s.dimension_tables().count());
        assert_eq!(batches.len(), 24);
    }

    #[test]
    fn header_only_file_is_empty_batch() {
        let s = small_schema();
        let b = extract(&small_files("ID,DID,Qty,When\n", "ID,PH,Note\n"), &s).unwrap();
        assert!(b.iter().all(StagingBatch::is_empty));
    }

    #[test]
    fn headers_are_order_insensitive() {
        let s = small_schema();
        let b = extract(&small_files("When,Qty,DID,ID\n2016-01-01,2.5,1,9\n", "ID,PH,Note\n1,6.5,\n"), &s).unwrap();
        let f = b.iter().find(|b| b.table == "F").unwrap();
        assert_eq!(f.row_cells(0), vec!["9", "1", "2.5", "2016-01-01"]);
    }

    #[test]
    fn wrong_cell_count_names_line() {
        let s = small_schema();
        let err = extract(&small_files("ID,DID,Qty,When\n1,1,2,2016-01-01\n2,1\n", "ID,PH,Note\n"), &s).unwrap_err();
        match err {
            EtlError::Malformed { file, line, .. } => {
                assert_eq!(file, "F.csv");
                assert_eq!(line, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_column_and_missing_file() {
        let s = small_schema();
        let err = extract(&small_files("ID,DID,Qty,When,Extra\n", "ID,PH,Note\n"), &s).unwrap_err();
        assert!(matches!(err, EtlError::UnknownColumn { column, .. } if column == "Extra"));
        let mut fs = small_files("ID,DID,Qty,When\n", "ID,PH,Note\n");
        fs.files.remove("D");
        assert!(matches!(extract(&fs, &s), Err(EtlError::MissingFile(f)) if f == "D.csv"));
    }

    #[test]
    fn each_class_detected() {
        let s = small_schema();
        let f = "ID,DID,Qty,When\n\
                 1,1,2,2016-01-01\n\
                 1,1,2,2016-01-01\n\
                 2,,2,2016-01-01\n\
                 3,1,-2,2016-01-01\n\
                 4,1,2,2030-01-01\n\
                 5,1,x,2016-01-01\n\
                 6,7,2,2016-01-01\n\
                 1,1,3,2016-01-01\n";
        let d = "ID,PH,Note\n1,abc,\n1,6.5,\n";
        let batches = extract(&small_files(f, d), &s).unwrap();
        let (rels, rep) = cleanse_all(&batches, &s, &EtlConfig::default()).unwrap();
        let t = &rep.tables["F"];
        assert_eq!(t.detected(DefectClass::Duplicate), 1);
        assert_eq!(t.detected(DefectClass::Missing), 1);
        assert_eq!(t.detected(DefectClass::Inconsistent), 4);
        assert_eq!(t.detected(DefectClass::Wrong), 1);
        assert_eq!(t.classes[&DefectClass::Inconsistent].ordinals, vec![4, 5, 6, 8]);
        assert_eq!(rels["F"].len(), 1);
        assert_eq!(rep.tables["D"].detected(DefectClass::Inconsistent), 1);
        for t in rep.tables.values() {
            assert_eq!(t.input_rows, t.output_rows + t.rejected_total());
        }
    }

    #[test]
    fn zero_defects_preserve_rows() {
        let s = builtin_adw_schema();
        let (fs, _) = generate(&s, &GenConfig::new(5, 300)).unwrap();
        let (rels, rep) = cleanse_all(&extract(&fs, &s).unwrap(), &s, &EtlConfig::default()).unwrap();
        assert_eq!(rep.total_detected(), 0);
        assert_eq!(rels["FieldFact"].len(), 300);
    }

    #[test]
    fn detections_match_ledger() {
        let s = builtin_adw_schema();
        let rates = DefectRates { duplicate: 0.02, missing: 0.01, inconsistent: 0.01, wrong: 0.01 };
        let (fs, ledger) = generate(&s, &GenConfig::new(11, 2000).with_rates(rates)).unwrap();
        let (_, rep) = cleanse_all(&extract(&fs, &s).unwrap(), &s, &EtlConfig::default()).unwrap();
        for (table, tl) in &ledger.tables {
            for class in DefectClass::ALL {
                assert_eq!(rep.detected(table, class), tl.count(class), "{table} {class:?}");
                assert_eq!(rep.tables[table].classes[&class].ordinals, {
                    let mut o = tl.defects[&class].ordinals.clone();
                    o.sort();
                    o
                });
            }
        }
    }

    #[test]
    fn transform_derives_and_is_idempotent() {
        let s = builtin_adw_schema();
        let (fs, _) = generate(&s, &GenConfig::new(2, 200)).unwrap();
        let (rels, _) = cleanse_all(&extract(&fs, &s).unwrap(), &s, &EtlConfig::default()).unwrap();
        let once = transform(rels, &s).unwrap();
        let ot = &once["OperationTime"];
        let (sd, se) = (ot.column_index("StartDate").unwrap(), ot.column_index("Season").unwrap());
        for r in &ot.rows {
            assert_eq!(r[se].as_str(), Some(season_of(r[sd].as_date().unwrap())));
        }
        let twice = transform(once.clone(), &s).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn season_rule_examples() {
        let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).unwrap();
        assert_eq!(season_of(d(2016, 4, 10)), "Spring");
        assert_eq!(season_of(d(2016, 12, 20)), "Winter");
    }

    #[test]
    fn load_both_engines_and_refuse_reload() {
        let s = builtin_adw_schema();
        let (fs, _) = generate(&s, &GenConfig::new(2, 100)).unwrap();
        let (rels, _) = cleanse_all(&extract(&fs, &s).unwrap(), &s, &EtlConfig::default()).unwrap();
        let rels = transform(rels, &s).unwrap();
        let (rs, cs) = (RowStore::new(), ColumnStore::new());
        let summary = load(&rels, &[&rs, &cs], &s).unwrap();
        for (t, per) in &summary.tables {
            assert_eq!(per["row"], rs.row_count(t).unwrap());
            assert_eq!(per["column"], cs.row_count(t).unwrap());
            assert_eq!(rs.scan(t, &[], None).unwrap().rows, cs.scan(t, &[], None).unwrap().rows);
        }
        let err = load(&rels, &[&rs], &s).unwrap_err();
        assert!(err.to_string().contains("table FieldFact not empty") || err.to_string().contains("not empty"));
    }

    #[test]
    fn zero_row_relation_creates_table() {
        let s = small_schema();
        let rels = BTreeMap::new();
        let rs = RowStore::new();
        let summary = load(&rels, &[&rs], &s).unwrap();
        assert_eq!(summary.tables["F"]["row"], 0);
        assert_eq!(rs.row_count("F").unwrap(), 0);
    }
}
