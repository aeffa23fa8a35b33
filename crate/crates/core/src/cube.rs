//! Materialized data cubes over one fact table.
//!
//! A cube dimension follows a hierarchy of levels from fine to coarse, each
//! level a column of the dimension table (possibly reached through foreign
//! keys), a calendar part of a date column, or the single `ALL` member.
//! Cells are keyed by one member per dimension; a null attribute or an
//! unresolvable key becomes the `UNKNOWN` member, so every fact row lands in
//! exactly one cell.
//!
//! Every cube remembers, per dimension, the chain of coarser members above
//! each current member. Roll-up re-keys through that chain; drill-down has
//! to go back to the facts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use chrono::Datelike;
use serde_json::json;
use thiserror::Error;

use crate::query::ast::AggFunc;
use crate::query::Acc;
use crate::query::plan::AggCall;
use crate::schema::{ConstellationSchema, TableDef};
use crate::storage::{StorageEngine, StorageError};
use crate::value::{DataType, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CubeError {
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {table}.{column}")]
    UnknownColumn { table: String, column: String },
    #[error("{0} is not a fact table")]
    NotFact(String),
    #[error("fact table {fact} has no single foreign key to {table}")]
    NoForeignKey { fact: String, table: String },
    #[error("measure column {0} is not numeric")]
    NonNumericMeasure(String),
    #[error("dimension {0} appears twice")]
    DuplicateDimension(String),
    #[error("unknown dimension {0}")]
    UnknownDimension(String),
    #[error("dimension {dimension} has no level {level}")]
    UnknownLevel { dimension: String, level: String },
    #[error("level {level} is not coarser than the current level of {dimension}")]
    NotCoarser { dimension: String, level: String },
    #[error("level {level} is not finer than the current level of {dimension}")]
    NotFiner { dimension: String, level: String },
    #[error(
        "functional dependency {finer} -> {coarser} violated in {dimension}: {value} maps to {first} (row {first_row}) and {second} (row {second_row})"
    )]
    FunctionalDependency {
        dimension: String,
        finer: String,
        coarser: String,
        value: String,
        first: String,
        first_row: String,
        second: String,
        second_row: String,
    },
    #[error("pivot axes must partition the cube dimensions: {0}")]
    NotPartition(String),
    #[error("invalid cube definition: {0}")]
    Invalid(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

/// A coordinate on one dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Member {
    Unknown,
    Known(Value),
}

impl Member {
    pub fn from_value(v: Value) -> Member {
        if v.is_null() {
            Member::Unknown
        } else {
            Member::Known(v)
        }
    }

    /// The value a query sees; `UNKNOWN` reads as null.
    pub fn to_value(&self) -> Value {
        match self {
            Member::Unknown => Value::Null,
            Member::Known(v) => v.clone(),
        }
    }

    fn all() -> Member {
        Member::Known(Value::text("ALL"))
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Member::Unknown => json!("UNKNOWN"),
            Member::Known(v) => serde_json::to_value(v).expect("value serializes"),
        }
    }
}

impl fmt::Display for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Member::Unknown => f.write_str("UNKNOWN"),
            Member::Known(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevelSource {
    /// Column of the table reached by following `via` foreign keys
    /// (`(fk column, referenced table)`) from the dimension table.
    Column { via: Vec<(String, String)>, column: String },
    /// `YYYY-MM` of a date column.
    Month { column: String },
    Year { column: String },
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub name: String,
    pub source: LevelSource,
}

/// Levels ordered from finest to coarsest.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionHierarchy {
    pub name: String,
    pub table: String,
    pub levels: Vec<Level>,
}

fn table<'s>(schema: &'s ConstellationSchema, name: &str) -> Result<&'s TableDef, CubeError> {
    schema.table(name).ok_or_else(|| CubeError::UnknownTable(name.to_string()))
}

fn column_of(def: &TableDef, column: &str) -> Result<(String, DataType), CubeError> {
    def.column(column)
        .map(|c| (c.name.clone(), c.dtype))
        .ok_or_else(|| CubeError::UnknownColumn { table: def.name.clone(), column: column.to_string() })
}

impl DimensionHierarchy {
    /// Hierarchy over one attribute `Table.Column`: the column then `ALL`,
    /// or for dates the date, its month, its year, then `ALL`.
    pub fn attribute(schema: &ConstellationSchema, spec: &str) -> Result<Self, CubeError> {
        let (t, c) = spec
            .split_once('.')
            .ok_or_else(|| CubeError::Invalid(format!("attribute '{spec}' is not Table.Column")))?;
        let def = table(schema, t)?;
        let (column, dtype) = column_of(def, c)?;
        let mut levels = vec![Level {
            name: column.clone(),
            source: LevelSource::Column { via: Vec::new(), column: column.clone() },
        }];
        if dtype == DataType::Date {
            levels.push(Level { name: "Month".into(), source: LevelSource::Month { column: column.clone() } });
            levels.push(Level { name: "Year".into(), source: LevelSource::Year { column: column.clone() } });
        }
        levels.push(Level { name: "ALL".into(), source: LevelSource::All });
        Ok(DimensionHierarchy { name: format!("{}.{}", def.name, column), table: def.name.clone(), levels })
    }

    /// Field → Site → Farmer → ALL.
    pub fn field() -> Self {
        let col = |via: Vec<(String, String)>, column: &str| LevelSource::Column { via, column: column.to_string() };
        DimensionHierarchy {
            name: "Field".into(),
            table: "Field".into(),
            levels: vec![
                Level { name: "Field".into(), source: col(Vec::new(), "FieldID") },
                Level { name: "Site".into(), source: col(Vec::new(), "SiteID") },
                Level { name: "Farmer".into(), source: col(vec![("SiteID".into(), "Site".into())], "FarmerID") },
                Level { name: "ALL".into(), source: LevelSource::All },
            ],
        }
    }

    /// Operation → Season → ALL.
    pub fn operation_time() -> Self {
        let col = |column: &str| LevelSource::Column { via: Vec::new(), column: column.to_string() };
        DimensionHierarchy {
            name: "OperationTime".into(),
            table: "OperationTime".into(),
            levels: vec![
                Level { name: "Operation".into(), source: col("OperationTimeID") },
                Level { name: "Season".into(), source: col("Season") },
                Level { name: "ALL".into(), source: LevelSource::All },
            ],
        }
    }

    /// Named hierarchy (`Field`, `OperationTime`) or attribute hierarchy
    /// (`Table.Column`).
    pub fn named(schema: &ConstellationSchema, name: &str) -> Result<Self, CubeError> {
        if name.eq_ignore_ascii_case("Field") {
            Ok(Self::field())
        } else if name.eq_ignore_ascii_case("OperationTime") {
            Ok(Self::operation_time())
        } else {
            Self::attribute(schema, name)
        }
    }

    pub fn level_index(&self, name: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.name.eq_ignore_ascii_case(name))
    }

    fn check(&self, schema: &ConstellationSchema) -> Result<(), CubeError> {
        for level in &self.levels {
            let (via, column) = match &level.source {
                LevelSource::Column { via, column } => (via.as_slice(), column),
                LevelSource::Month { column } | LevelSource::Year { column } => (&[][..], column),
                LevelSource::All => continue,
            };
            let mut current = table(schema, &self.table)?;
            for (fk, target) in via {
                let key = current.foreign_key(fk).ok_or_else(|| CubeError::NoForeignKey {
                    fact: current.name.clone(),
                    table: target.clone(),
                })?;
                current = table(schema, &key.ref_table)?;
            }
            column_of(current, column)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeDimension {
    pub hierarchy: DimensionHierarchy,
    /// Current level index into the hierarchy.
    pub level: usize,
    /// Fact column referencing the dimension table; `None` when the
    /// dimension is an attribute of the fact table itself.
    pub fact_key: Option<String>,
}

impl CubeDimension {
    pub fn name(&self) -> &str {
        &self.hierarchy.name
    }

    pub fn level_name(&self) -> &str {
        &self.hierarchy.levels[self.level].name
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasureAgg {
    Sum,
    Count,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    pub agg: MeasureAgg,
    /// `None` only for `count(*)`.
    pub column: Option<String>,
    pub dtype: DataType,
}

impl Measure {
    pub fn name(&self) -> String {
        let f = match self.agg {
            MeasureAgg::Sum => "sum",
            MeasureAgg::Count => "count",
            MeasureAgg::Max => "max",
        };
        format!("{f}({})", self.column.as_deref().unwrap_or("*"))
    }

    fn call(&self) -> AggCall {
        let func = match self.agg {
            MeasureAgg::Sum => AggFunc::Sum,
            MeasureAgg::Count => AggFunc::Count,
            MeasureAgg::Max => AggFunc::Max,
        };
        AggCall { func, arg: None, hidden: false, dtype: if func == AggFunc::Count { DataType::Int64 } else { self.dtype } }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeDef {
    pub name: String,
    pub fact: String,
    pub dimensions: Vec<CubeDimension>,
    pub measures: Vec<Measure>,
}

impl CubeDef {
    /// Validates and resolves a definition. `dimensions` pairs a hierarchy
    /// with the level to build at; `measures` are `(aggregator, column)`.
    pub fn new(
        schema: &ConstellationSchema,
        name: &str,
        fact: &str,
        dimensions: Vec<(DimensionHierarchy, &str)>,
        measures: &[(MeasureAgg, Option<&str>)],
    ) -> Result<Self, CubeError> {
        let fdef = table(schema, fact)?;
        if !fdef.is_fact() {
            return Err(CubeError::NotFact(fdef.name.clone()));
        }
        let mut dims = Vec::new();
        let mut seen = BTreeSet::new();
        for (h, level) in dimensions {
            if !seen.insert(h.name.to_ascii_lowercase()) {
                return Err(CubeError::DuplicateDimension(h.name.clone()));
            }
            h.check(schema)?;
            let level_idx = h
                .level_index(level)
                .ok_or_else(|| CubeError::UnknownLevel { dimension: h.name.clone(), level: level.to_string() })?;
            let fact_key = if h.table.eq_ignore_ascii_case(&fdef.name) {
                None
            } else {
                let keys: Vec<&str> = fdef
                    .foreign_keys
                    .iter()
                    .filter(|k| k.ref_table.eq_ignore_ascii_case(&h.table))
                    .map(|k| k.column.as_str())
                    .collect();
                match keys.as_slice() {
                    [k] => Some(k.to_string()),
                    _ => return Err(CubeError::NoForeignKey { fact: fdef.name.clone(), table: h.table.clone() }),
                }
            };
            dims.push(CubeDimension { hierarchy: h, level: level_idx, fact_key });
        }
        let mut ms = Vec::new();
        for (agg, column) in measures {
            let m = match column {
                None if *agg == MeasureAgg::Count => Measure { agg: *agg, column: None, dtype: DataType::Int64 },
                None => return Err(CubeError::Invalid(format!("{agg:?} needs a column"))),
                Some(c) => {
                    let (c, dtype) = column_of(fdef, c)?;
                    if *agg != MeasureAgg::Count && !dtype.is_numeric() {
                        return Err(CubeError::NonNumericMeasure(c));
                    }
                    Measure { agg: *agg, column: Some(c), dtype }
                }
            };
            if !ms.contains(&m) {
                ms.push(m);
            }
        }
        if ms.is_empty() {
            return Err(CubeError::Invalid("a cube needs at least one measure".into()));
        }
        Ok(CubeDef { name: name.to_string(), fact: fdef.name.clone(), dimensions: dims, measures: ms })
    }

    /// Parses `sum:Yield`, `count`, `count:Col` or `max:Col`.
    pub fn parse_measure(spec: &str) -> Result<(MeasureAgg, Option<String>), CubeError> {
        let (f, c) = match spec.split_once(':') {
            Some((f, c)) => (f, Some(c.to_string())),
            None => (spec, None),
        };
        let agg = match f.to_ascii_lowercase().as_str() {
            "sum" => MeasureAgg::Sum,
            "count" => MeasureAgg::Count,
            "max" => MeasureAgg::Max,
            other => return Err(CubeError::Invalid(format!("unknown aggregator '{other}'"))),
        };
        Ok((agg, c.filter(|c| c != "*")))
    }

    /// Parses `Hierarchy[:Level]`; the level defaults to the finest.
    pub fn parse_dimension(schema: &ConstellationSchema, spec: &str) -> Result<(DimensionHierarchy, String), CubeError> {
        let (h, level) = match spec.split_once(':') {
            Some((h, l)) => (h, Some(l)),
            None => (spec, None),
        };
        let h = DimensionHierarchy::named(schema, h)?;
        let level = level.map(str::to_string).unwrap_or_else(|| h.levels[0].name.clone());
        Ok((h, level))
    }

    pub fn dimension_index(&self, name: &str) -> Result<usize, CubeError> {
        self.dimensions
            .iter()
            .position(|d| d.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| CubeError::UnknownDimension(name.to_string()))
    }
}

/// Coordinates → measure accumulators.
pub type Cells = BTreeMap<Vec<Member>, Vec<Acc>>;

#[derive(Debug, Clone)]
pub struct DataCube {
    pub def: CubeDef,
    pub cells: Cells,
    pub source_rows: u64,
    /// Per dimension: current member → members at the current and every
    /// coarser level.
    pub ancestry: Vec<HashMap<Member, Vec<Member>>>,
    /// Per dimension: fact rows whose key found no dimension row.
    pub unresolved: Vec<u64>,
}

/// Members of every level of `h` for one dimension row.
struct LevelReader {
    plans: Vec<LevelPlan>,
}

enum LevelPlan {
    Direct(usize),
    /// Start column, then per hop the target's key index, rows, and the
    /// column to read next.
    Via { first: usize, hops: Vec<(HashMap<Value, usize>, Vec<crate::value::Row>, usize)> },
    Month(usize),
    Year(usize),
    All,
}

impl LevelReader {
    fn new(hierarchy: &DimensionHierarchy, engine: &dyn StorageEngine, base: &TableDef) -> Result<Self, CubeError> {
        let mut plans = Vec::new();
        let idx = |def: &TableDef, c: &str| column_of(def, c).map(|_| def.column_index(c).unwrap());
        for level in &hierarchy.levels {
            plans.push(match &level.source {
                LevelSource::Column { via, column } if via.is_empty() => LevelPlan::Direct(idx(base, column)?),
                LevelSource::Column { via, column } => {
                    let first = idx(base, &via[0].0)?;
                    let mut hops = Vec::new();
                    for (i, (_, target)) in via.iter().enumerate() {
                        let tdef = engine.table_def(target)?;
                        let rows = engine.scan(target, &[], None)?.rows;
                        let pk = tdef.pk_index().ok_or_else(|| CubeError::Invalid(format!("{target} has no key")))?;
                        let index = rows.iter().enumerate().map(|(r, row)| (row[pk].clone(), r)).collect();
                        let next = match via.get(i + 1) {
                            Some((fk, _)) => idx(&tdef, fk)?,
                            None => idx(&tdef, column)?,
                        };
                        hops.push((index, rows, next));
                    }
                    LevelPlan::Via { first, hops }
                }
                LevelSource::Month { column } => LevelPlan::Month(idx(base, column)?),
                LevelSource::Year { column } => LevelPlan::Year(idx(base, column)?),
                LevelSource::All => LevelPlan::All,
            });
        }
        Ok(LevelReader { plans })
    }

    fn members(&self, row: &[Value], from: usize) -> Vec<Member> {
        self.plans[from..]
            .iter()
            .map(|p| match p {
                LevelPlan::Direct(c) => Member::from_value(row[*c].clone()),
                LevelPlan::Via { first, hops } => {
                    let mut key = row[*first].clone();
                    for (index, rows, next) in hops {
                        match index.get(&key) {
                            Some(&r) => key = rows[r][*next].clone(),
                            None => return Member::Unknown,
                        }
                    }
                    Member::from_value(key)
                }
                LevelPlan::Month(c) => match row[*c].as_date() {
                    Some(d) => Member::Known(Value::text(format!("{:04}-{:02}", d.year(), d.month()))),
                    None => Member::Unknown,
                },
                LevelPlan::Year(c) => match row[*c].as_date() {
                    Some(d) => Member::Known(Value::Int(d.year() as i64)),
                    None => Member::Unknown,
                },
                LevelPlan::All => Member::all(),
            })
            .collect()
    }

    fn unknown(&self, from: usize) -> Vec<Member> {
        self.plans[from..]
            .iter()
            .map(|p| if matches!(p, LevelPlan::All) { Member::all() } else { Member::Unknown })
            .collect()
    }
}

/// Records `chain` for its first member, checking it agrees with what was
/// seen before.
fn record_chain(
    ancestry: &mut HashMap<Member, (Vec<Member>, String)>,
    dim: &CubeDimension,
    chain: Vec<Member>,
    row_id: String,
) -> Result<(), CubeError> {
    match ancestry.get(&chain[0]) {
        None => {
            ancestry.insert(chain[0].clone(), (chain, row_id));
            Ok(())
        }
        Some((prev, prev_row)) => {
            if let Some(i) = (1..chain.len()).find(|&i| prev[i] != chain[i]) {
                let levels = &dim.hierarchy.levels;
                return Err(CubeError::FunctionalDependency {
                    dimension: dim.name().to_string(),
                    finer: levels[dim.level + i - 1].name.clone(),
                    coarser: levels[dim.level + i].name.clone(),
                    value: chain[i - 1].to_string(),
                    first: prev[i].to_string(),
                    first_row: prev_row.clone(),
                    second: chain[i].to_string(),
                    second_row: row_id,
                });
            }
            Ok(())
        }
    }
}

/// Builds `def` from the fact table in `engine`.
pub fn build_cube(engine: &dyn StorageEngine, def: &CubeDef) -> Result<DataCube, CubeError> {
    let fdef = engine.table_def(&def.fact)?;
    let facts = engine.scan(&def.fact, &[], None)?.rows;
    let fact_pk = fdef.pk_index();
    let row_id = |row: &[Value]| fact_pk.map_or_else(String::new, |p| row[p].to_string());

    // Per dimension: how to find the members of a fact row.
    enum Lookup {
        Fact(LevelReader),
        Table { key: usize, members: HashMap<Value, Vec<Member>>, reader: LevelReader },
    }
    let mut lookups = Vec::new();
    let mut chains: Vec<HashMap<Member, (Vec<Member>, String)>> = vec![HashMap::new(); def.dimensions.len()];
    for (d, dim) in def.dimensions.iter().enumerate() {
        match &dim.fact_key {
            None => lookups.push(Lookup::Fact(LevelReader::new(&dim.hierarchy, engine, &fdef)?)),
            Some(fk) => {
                let tdef = engine.table_def(&dim.hierarchy.table)?;
                let reader = LevelReader::new(&dim.hierarchy, engine, &tdef)?;
                let pk = tdef.pk_index().ok_or_else(|| CubeError::Invalid(format!("{} has no key", tdef.name)))?;
                let mut members = HashMap::new();
                for row in engine.scan(&tdef.name, &[], None)?.rows {
                    let chain = reader.members(&row, dim.level);
                    record_chain(&mut chains[d], dim, chain.clone(), format!("{}:{}", tdef.name, row[pk]))?;
                    members.insert(row[pk].clone(), chain);
                }
                let key = fdef.column_index(fk).expect("validated foreign key");
                lookups.push(Lookup::Table { key, members, reader });
            }
        }
    }
    let measure_cols: Vec<Option<usize>> = def
        .measures
        .iter()
        .map(|m| m.column.as_ref().map(|c| fdef.column_index(c).expect("validated measure")))
        .collect();
    let calls: Vec<AggCall> = def.measures.iter().map(Measure::call).collect();

    let mut cells: HashMap<Vec<Member>, Vec<Acc>> = HashMap::new();
    let mut unresolved = vec![0u64; def.dimensions.len()];
    for row in &facts {
        let mut coords = Vec::with_capacity(def.dimensions.len());
        for (d, (dim, lookup)) in def.dimensions.iter().zip(&lookups).enumerate() {
            let chain = match lookup {
                Lookup::Fact(reader) => {
                    let chain = reader.members(row, dim.level);
                    record_chain(&mut chains[d], dim, chain.clone(), format!("{}:{}", fdef.name, row_id(row)))?;
                    chain
                }
                Lookup::Table { key, members, reader } => match members.get(&row[*key]) {
                    Some(chain) => chain.clone(),
                    None => {
                        unresolved[d] += 1;
                        let chain = reader.unknown(dim.level);
                        chains[d].entry(Member::Unknown).or_insert_with(|| (chain.clone(), String::new()));
                        chain
                    }
                },
            };
            coords.push(chain[0].clone());
        }
        let accs = cells.entry(coords).or_insert_with(|| calls.iter().map(Acc::new).collect());
        for (acc, col) in accs.iter_mut().zip(&measure_cols) {
            match col {
                None => acc.add_row(),
                Some(c) => acc.add(&row[*c]),
            }
        }
    }
    Ok(DataCube {
        def: def.clone(),
        cells: cells.into_iter().collect(),
        source_rows: facts.len() as u64,
        ancestry: chains.into_iter().map(|m| m.into_iter().map(|(k, (chain, _))| (k, chain)).collect()).collect(),
        unresolved,
    })
}

fn merge_cells(cells: &mut Cells, coords: Vec<Member>, accs: &[Acc]) {
    match cells.get_mut(&coords) {
        Some(existing) => existing.iter_mut().zip(accs).for_each(|(a, b)| a.merge(b)),
        None => {
            cells.insert(coords, accs.to_vec());
        }
    }
}

impl DataCube {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Finished value of measure `m` summed over all cells.
    pub fn total(&self, m: usize) -> Value {
        let mut acc = Acc::new(&self.def.measures[m].call());
        for accs in self.cells.values() {
            acc.merge(&accs[m]);
        }
        acc.finish().unwrap_or(Value::Null)
    }

    /// Member of dimension `d` at `level` above current member `m`.
    pub fn member_at(&self, d: usize, m: &Member, level: usize) -> Member {
        let cur = self.def.dimensions[d].level;
        self.ancestry[d].get(m).map(|chain| chain[level - cur].clone()).unwrap_or(Member::Unknown)
    }

    /// The member of dimension `d` whose rendering is `text`; a value no
    /// cell carries yields a member that matches nothing.
    pub fn member_named(&self, d: usize, text: &str) -> Member {
        self.cells
            .keys()
            .map(|k| &k[d])
            .find(|m| m.to_string() == text)
            .cloned()
            .unwrap_or_else(|| Member::Known(Value::text(text)))
    }

    /// Cells as `(coordinates, finished measures)`.
    pub fn rows(&self) -> Vec<(Vec<Member>, Vec<Value>)> {
        self.cells
            .iter()
            .map(|(k, accs)| (k.clone(), accs.iter().map(|a| a.finish().unwrap_or(Value::Null)).collect()))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let cells: Vec<serde_json::Value> = self
            .rows()
            .into_iter()
            .map(|(k, ms)| {
                json!({
                    "coordinates": k.iter().map(Member::to_json).collect::<Vec<_>>(),
                    "measures": ms,
                })
            })
            .collect();
        let doc = json!({
            "name": self.def.name,
            "fact": self.def.fact,
            "dimensions": self.def.dimensions.iter().map(|d| json!({"name": d.name(), "level": d.level_name()})).collect::<Vec<_>>(),
            "measures": self.def.measures.iter().map(Measure::name).collect::<Vec<_>>(),
            "source_rows": self.source_rows,
            "cells": cells,
        });
        serde_json::to_string_pretty(&doc).expect("cube serializes")
    }
}

/// One measure's cube total next to the same aggregate computed directly
/// over the fact rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationLine {
    pub measure: String,
    pub cube: Value,
    pub oracle: Value,
    pub holds: bool,
}

/// Equal ints, or floats within 1e-9 relative.
pub fn totals_agree(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float(_), _) | (_, Value::Float(_)) => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0),
            _ => a == b,
        },
        _ => a == b,
    }
}

/// Compares every measure total of `cube` against a direct aggregate over
/// the fact table in `engine`. Meaningful for cubes that still cover every
/// fact row (built or rolled up, not sliced or diced).
pub fn conservation(cube: &DataCube, engine: &dyn StorageEngine) -> Result<Vec<ConservationLine>, CubeError> {
    let rel = engine.scan(&cube.def.fact, &[], None)?;
    let mut out = Vec::new();
    for (m, measure) in cube.def.measures.iter().enumerate() {
        let mut acc = Acc::new(&measure.call());
        let col = measure.column.as_ref().map(|c| rel.column_index(c).expect("validated measure"));
        for row in &rel.rows {
            match col {
                None => acc.add_row(),
                Some(c) => acc.add(&row[c]),
            }
        }
        let oracle = acc.finish().unwrap_or(Value::Null);
        let total = cube.total(m);
        out.push(ConservationLine { measure: measure.name(), holds: totals_agree(&total, &oracle), cube: total, oracle });
    }
    Ok(out)
}

/// Re-keys dimension `dim` at the coarser `level`, merging measures.
pub fn roll_up(cube: &DataCube, dim: &str, level: &str) -> Result<DataCube, CubeError> {
    let d = cube.def.dimension_index(dim)?;
    let cd = &cube.def.dimensions[d];
    let target = cd
        .hierarchy
        .level_index(level)
        .ok_or_else(|| CubeError::UnknownLevel { dimension: cd.name().to_string(), level: level.to_string() })?;
    if target <= cd.level {
        return Err(CubeError::NotCoarser { dimension: cd.name().to_string(), level: level.to_string() });
    }
    let step = target - cd.level;
    let mut cells = Cells::new();
    for (coords, accs) in &cube.cells {
        let mut k = coords.clone();
        k[d] = cube.member_at(d, &coords[d], target);
        merge_cells(&mut cells, k, accs);
    }
    let mut ancestry = cube.ancestry.clone();
    ancestry[d] = cube.ancestry[d].values().map(|chain| (chain[step].clone(), chain[step..].to_vec())).collect();
    let mut def = cube.def.clone();
    def.dimensions[d].level = target;
    Ok(DataCube { def, cells, source_rows: cube.source_rows, ancestry, unresolved: cube.unresolved.clone() })
}

/// Rebuilds the cube from the facts with `dim` at the finer `level`.
pub fn drill_down(cube: &DataCube, dim: &str, level: &str, engine: &dyn StorageEngine) -> Result<DataCube, CubeError> {
    let d = cube.def.dimension_index(dim)?;
    let cd = &cube.def.dimensions[d];
    let target = cd
        .hierarchy
        .level_index(level)
        .ok_or_else(|| CubeError::UnknownLevel { dimension: cd.name().to_string(), level: level.to_string() })?;
    if target >= cd.level {
        return Err(CubeError::NotFiner { dimension: cd.name().to_string(), level: level.to_string() });
    }
    let mut def = cube.def.clone();
    def.dimensions[d].level = target;
    build_cube(engine, &def)
}

fn remove_dim(cube: &DataCube, d: usize, keep: impl Fn(&Member) -> bool) -> DataCube {
    let mut cells = Cells::new();
    for (coords, accs) in &cube.cells {
        if keep(&coords[d]) {
            let mut k = coords.clone();
            k.remove(d);
            merge_cells(&mut cells, k, accs);
        }
    }
    let mut def = cube.def.clone();
    def.dimensions.remove(d);
    let mut ancestry = cube.ancestry.clone();
    ancestry.remove(d);
    let mut unresolved = cube.unresolved.clone();
    unresolved.remove(d);
    DataCube { def, cells, source_rows: cube.source_rows, ancestry, unresolved }
}

/// Keeps the cells whose `dim` member equals `value` and drops that dimension.
pub fn slice(cube: &DataCube, dim: &str, value: &Member) -> Result<DataCube, CubeError> {
    let d = cube.def.dimension_index(dim)?;
    Ok(remove_dim(cube, d, |m| m == value))
}

/// Keeps the cells whose members lie in the given per-dimension sets.
pub fn dice(cube: &DataCube, sets: &[(&str, Vec<Member>)]) -> Result<DataCube, CubeError> {
    let mut filters = Vec::new();
    for (dim, values) in sets {
        filters.push((cube.def.dimension_index(dim)?, values));
    }
    let cells = cube
        .cells
        .iter()
        .filter(|(k, _)| filters.iter().all(|(d, vs)| vs.contains(&k[*d])))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(DataCube { cells, ..cube.clone() })
}

/// Two-dimensional view of a cube: rows and columns are member tuples of
/// the row and column dimensions; a cell holds the finished measures.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotTable {
    pub row_dims: Vec<String>,
    pub col_dims: Vec<String>,
    pub row_keys: Vec<Vec<Member>>,
    pub col_keys: Vec<Vec<Member>>,
    pub cells: Vec<Vec<Option<Vec<Value>>>>,
}

impl PivotTable {
    pub fn transpose(&self) -> PivotTable {
        let cells = (0..self.col_keys.len())
            .map(|c| (0..self.row_keys.len()).map(|r| self.cells[r][c].clone()).collect())
            .collect();
        PivotTable {
            row_dims: self.col_dims.clone(),
            col_dims: self.row_dims.clone(),
            row_keys: self.col_keys.clone(),
            col_keys: self.row_keys.clone(),
            cells,
        }
    }
}

pub fn pivot(cube: &DataCube, rows: &[&str], cols: &[&str]) -> Result<PivotTable, CubeError> {
    let ri: Vec<usize> = rows.iter().map(|r| cube.def.dimension_index(r)).collect::<Result<_, _>>()?;
    let ci: Vec<usize> = cols.iter().map(|c| cube.def.dimension_index(c)).collect::<Result<_, _>>()?;
    let mut all: Vec<usize> = ri.iter().chain(&ci).copied().collect();
    all.sort_unstable();
    if all != (0..cube.def.dimensions.len()).collect::<Vec<_>>() {
        return Err(CubeError::NotPartition(format!("rows {rows:?}, columns {cols:?}")));
    }
    let pick = |k: &[Member], idx: &[usize]| idx.iter().map(|&i| k[i].clone()).collect::<Vec<_>>();
    let row_keys: Vec<Vec<Member>> = cube.cells.keys().map(|k| pick(k, &ri)).collect::<BTreeSet<_>>().into_iter().collect();
    let col_keys: Vec<Vec<Member>> = cube.cells.keys().map(|k| pick(k, &ci)).collect::<BTreeSet<_>>().into_iter().collect();
    let rpos: HashMap<&Vec<Member>, usize> = row_keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let cpos: HashMap<&Vec<Member>, usize> = col_keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let mut cells = vec![vec![None; col_keys.len()]; row_keys.len()];
    for (k, accs) in &cube.cells {
        let (r, c) = (rpos[&pick(k, &ri)], cpos[&pick(k, &ci)]);
        cells[r][c] = Some(accs.iter().map(|a| a.finish().unwrap_or(Value::Null)).collect());
    }
    Ok(PivotTable {
        row_dims: rows.iter().map(|s| s.to_string()).collect(),
        col_dims: cols.iter().map(|s| s.to_string()).collect(),
        row_keys,
        col_keys,
        cells,
    })
}

/// Built cubes available to the HOLAP router, by name.
#[derive(Debug, Clone, Default)]
pub struct CubeRegistry {
    cubes: BTreeMap<String, DataCube>,
}

impl CubeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, cube: DataCube) {
        self.cubes.insert(cube.def.name.clone(), cube);
    }

    pub fn get(&self, name: &str) -> Option<&DataCube> {
        self.cubes.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DataCube> {
        self.cubes.values()
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }
}
