//! Shared fixtures: a seeded warehouse, a grammar fuzzer over the built-in
//! schema, and result comparison up to ties.

#![allow(dead_code)]

pub mod cubes;

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cropdw::cube::{build_cube, CubeRegistry};
use cropdw::datagen::GenConfig;
use cropdw::pipeline::{PathChoice, Warehouse};
use cropdw::query::{self, ExecPath, QueryPlan, ResultTable};
use cropdw::schema::TableKind;
use cropdw::storage::StorageEngine;
use cropdw::{builtin_adw_schema, DataType, Value};

pub const SEED: u64 = 42;
pub const SCALE: u64 = 10_000;

/// Seed 42, scale 10 000, no injected defects; built once per test binary.
pub fn warehouse() -> &'static Warehouse {
    static WH: OnceLock<Warehouse> = OnceLock::new();
    WH.get_or_init(|| {
        Warehouse::generated(builtin_adw_schema(), &GenConfig::new(SEED, SCALE)).expect("fixture loads").0
    })
}

fn close(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) if matches!(a, Value::Float(_)) || matches!(b, Value::Float(_)) => {
            (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0)
        }
        _ => a == b,
    }
}

/// Multisets equal; when `plan` orders, the sequences of order keys agree
/// position by position too, so rows may differ only inside tie groups.
pub fn same_result(plan: &QueryPlan, expected: &ResultTable, actual: &ResultTable) -> Result<(), String> {
    if expected.headers != actual.headers {
        return Err(format!("headers {:?} vs {:?}", expected.headers, actual.headers));
    }
    let mut unordered = expected.clone();
    let mut other = actual.clone();
    unordered.ordered = false;
    other.ordered = false;
    if !unordered.equivalent(&other) {
        return Err(format!(
            "row multisets differ: {} vs {} rows\nexpected:\n{}\nactual:\n{}",
            expected.len(),
            actual.len(),
            preview(expected),
            preview(actual)
        ));
    }
    for (i, (e, a)) in expected.rows.iter().zip(&actual.rows).enumerate() {
        for &(k, _) in &plan.query.order {
            if !close(&e[k], &a[k]) {
                return Err(format!("order key {k} differs at row {i}: {} vs {}", e[k], a[k]));
            }
        }
    }
    Ok(())
}

fn preview(t: &ResultTable) -> String {
    let mut t = t.clone();
    t.rows.truncate(12);
    t.to_text()
}

/// Runs `sql` on every path (column store with one and with four
/// partitions, and HOLAP with `cubes`) and checks each against the
/// baseline. Returns the HOLAP path taken.
pub fn check_all_paths(wh: &Warehouse, sql: &str, cubes: &CubeRegistry) -> Result<ExecPath, String> {
    let plan = wh.plan(sql).map_err(|e| format!("plan: {e}"))?;
    let base = query::execute_baseline(&plan, &wh.rows).map_err(|e| format!("baseline: {e}"))?;
    for parts in [1, 4] {
        let r = query::execute_rolap_partitioned(&plan, &wh.columns, parts).map_err(|e| format!("rolap: {e}"))?;
        same_result(&plan, &base, &r).map_err(|e| format!("rolap/{parts}: {e}"))?;
    }
    let (path, h) = query::route_holap(&plan, &wh.schema, cubes, &wh.columns).map_err(|e| format!("holap: {e}"))?;
    same_result(&plan, &base, &h).map_err(|e| format!("holap ({}): {e}", path.name()))?;
    Ok(path)
}

/// Registry holding the advisor's cube for `sql`, if it proposes one.
pub fn advised_registry(wh: &Warehouse, sql: &str) -> CubeRegistry {
    let mut reg = CubeRegistry::new();
    if let Ok(plan) = wh.plan(sql) {
        if let Some(def) = query::advise_cube(&plan, &wh.schema, "advised") {
            reg.register(build_cube(&wh.columns, &def).expect("advised cube builds"));
        }
    }
    reg
}

pub fn run(wh: &Warehouse, sql: &str, path: PathChoice) -> ResultTable {
    wh.query(sql, path).unwrap_or_else(|e| panic!("{sql}\n{e}")).1
}

/// Random SELECT statements over the built-in schema. Literals are drawn
/// from the loaded data so predicates are selective without being empty.
pub struct Fuzzer<'w> {
    wh: &'w Warehouse,
    rng: ChaCha8Rng,
}

struct Src {
    alias: String,
    table: String,
}

const FILTERABLE: [DataType; 4] = [DataType::Int64, DataType::Float64, DataType::Text, DataType::Date];

fn lit(v: &Value) -> String {
    match v {
        Value::Text(s) => format!("'{}'", s.replace('\'', "''")),
        Value::Date(_) => format!("'{v}'"),
        Value::Float(x) => format!("{x:?}"),
        _ => v.to_string(),
    }
}

impl<'w> Fuzzer<'w> {
    pub fn new(wh: &'w Warehouse, seed: u64) -> Self {
        Fuzzer { wh, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn columns(&self, table: &str) -> Vec<(String, DataType)> {
        self.wh.schema.table(table).unwrap().columns.iter().map(|c| (c.name.clone(), c.dtype)).collect()
    }

    fn sample(&mut self, table: &str, column: &str) -> Option<Value> {
        let rel = self.wh.rows.scan(table, &[column], None).ok()?;
        for _ in 0..8 {
            let row = rel.rows.choose(&mut self.rng)?;
            if !row[0].is_null() {
                return Some(row[0].clone());
            }
        }
        None
    }

    fn predicate(&mut self, srcs: &[Src]) -> String {
        for _ in 0..20 {
            let s = &srcs[self.rng.gen_range(0..srcs.len())];
            let (alias, table) = (s.alias.clone(), s.table.clone());
            let cols: Vec<(String, DataType)> =
                self.columns(&table).into_iter().filter(|(_, t)| FILTERABLE.contains(t)).collect();
            let (col, dtype) = cols.choose(&mut self.rng).unwrap().clone();
            let Some(v) = self.sample(&table, &col) else { continue };
            let c = format!("{alias}.{col}");
            return match dtype {
                DataType::Text => match self.rng.gen_range(0..5) {
                    0 => format!("{c} = {}", lit(&v)),
                    1 => format!("{c} <> {}", lit(&v)),
                    2 => {
                        let s = v.as_str().unwrap();
                        let head: String = s.chars().take(self.rng.gen_range(0..=3)).collect();
                        format!("{c} like '{}%'", head.replace('\'', "''"))
                    }
                    3 => {
                        let s = v.as_str().unwrap();
                        let mid: String = s.chars().skip(1).take(2).collect();
                        format!("{c} {}like '%{}%'", if self.rng.gen_bool(0.2) { "not " } else { "" }, mid.replace('\'', "''"))
                    }
                    _ => {
                        let w = self.sample(&table, &col).unwrap_or(v.clone());
                        format!("{c} {}in ({}, {})", if self.rng.gen_bool(0.2) { "not " } else { "" }, lit(&v), lit(&w))
                    }
                },
                DataType::Date => {
                    let d = v.as_date().unwrap();
                    match self.rng.gen_range(0..3) {
                        0 => format!("Year({c}) = '{}'", chrono::Datelike::year(&d)),
                        1 => format!("Month({c}) <= {}", chrono::Datelike::month(&d)),
                        _ => format!("{c} >= {}", lit(&v)),
                    }
                }
                _ => {
                    let op = ["=", "<>", "<", "<=", ">", ">="].choose(&mut self.rng).unwrap();
                    format!("{c} {op} {}", lit(&v))
                }
            };
        }
        "1 = 1".into()
    }

    fn condition(&mut self, srcs: &[Src]) -> String {
        let n = self.rng.gen_range(1..=3);
        let mut parts = Vec::new();
        for _ in 0..n {
            if self.rng.gen_bool(0.2) {
                parts.push(format!("({} or {})", self.predicate(srcs), self.predicate(srcs)));
            } else {
                parts.push(self.predicate(srcs));
            }
        }
        parts.join(" and ")
    }

    /// `(from clause, join conditions, sources)`.
    fn from(&mut self) -> (String, Vec<String>, Vec<Src>) {
        let facts: Vec<String> = self
            .wh
            .schema
            .tables
            .values()
            .filter(|t| t.kind == TableKind::Fact)
            .map(|t| t.name.clone())
            .collect();
        let fact = if self.rng.gen_bool(0.6) {
            "FieldFact".to_string()
        } else {
            facts.choose(&mut self.rng).unwrap().clone()
        };
        let fdef = self.wh.schema.table(&fact).unwrap().clone();
        let mut fks = fdef.foreign_keys.clone();
        fks.shuffle(&mut self.rng);
        let k = self.rng.gen_range(0..=2.min(fks.len()));
        let mut srcs = vec![Src { alias: "f".into(), table: fact.clone() }];
        let mut from = format!("{fact} f");
        let mut conds = Vec::new();
        let explicit = k > 0 && self.rng.gen_bool(0.3);
        for (i, fk) in fks.iter().take(k).enumerate() {
            let alias = format!("d{}", i + 1);
            let on = format!("f.{} = {alias}.{}", fk.column, fk.ref_column);
            if i == 0 && explicit {
                let kind = if self.rng.gen_bool(0.5) { "left" } else { "right" };
                from += &format!(" {kind} join {} {alias} on {on}", fk.ref_table);
                if self.rng.gen_bool(0.3) {
                    let extra = self.predicate(&[Src { alias: alias.clone(), table: fk.ref_table.clone() }]);
                    from += &format!(" and {extra}");
                }
            } else {
                from += &format!(", {} {alias}", fk.ref_table);
                conds.push(on);
            }
            srcs.push(Src { alias, table: fk.ref_table.clone() });
        }
        (from, conds, srcs)
    }

    fn numeric(&self, srcs: &[Src]) -> Vec<String> {
        self.columns(&srcs[0].table)
            .into_iter()
            .filter(|(n, t)| t.is_numeric() && !n.ends_with("ID"))
            .map(|(n, _)| format!("f.{n}"))
            .collect()
    }

    fn key_columns(&mut self, srcs: &[Src]) -> Vec<String> {
        let mut out = Vec::new();
        for s in srcs {
            for (n, t) in self.columns(&s.table) {
                if matches!(t, DataType::Int64 | DataType::Text | DataType::Date) {
                    out.push(format!("{}.{n}", s.alias));
                }
            }
        }
        out.shuffle(&mut self.rng);
        out
    }

    /// One block; `shape` fixes the select list so union branches agree.
    fn block(&mut self, grouped: bool, shape: Option<&(Vec<String>, Vec<String>)>) -> (String, (Vec<String>, Vec<String>), usize) {
        let (from, mut conds, srcs) = self.from();
        if self.rng.gen_bool(0.9) {
            conds.push(self.condition(&srcs));
        }
        if self.rng.gen_bool(0.08) {
            let v = self.sample("Crop", "CropName").unwrap();
            if self.columns(&srcs[0].table).iter().any(|(n, _)| n == "CropID") {
                conds.push(format!("f.CropID in (select c.CropID from Crop c where c.CropName <> {})", lit(&v)));
            }
        }
        let mut sql = String::from("select ");
        let width;
        let (keys, aggs) = match shape {
            Some(s) => s.clone(),
            None if grouped => {
                let keys: Vec<String> = self.key_columns(&srcs).into_iter().take(self.rng.gen_range(0..=2)).collect();
                let mut aggs = vec!["count(*)".to_string()];
                let nums = self.numeric(&srcs);
                if let Some(n) = nums.choose(&mut self.rng) {
                    aggs.push(format!("sum({n})"));
                }
                if let Some(n) = nums.choose(&mut self.rng) {
                    aggs.push(format!("max({n})"));
                }
                aggs.shuffle(&mut self.rng);
                aggs.truncate(self.rng.gen_range(1..=aggs.len()));
                (keys, aggs)
            }
            None => {
                let cols: Vec<String> = self.key_columns(&srcs).into_iter().take(self.rng.gen_range(1..=3)).collect();
                (cols, Vec::new())
            }
        };
        // Union branches bind columns by position, so shapes are reused
        // only over the same fact alias.
        let items: Vec<String> = keys.iter().chain(&aggs).cloned().collect();
        width = items.len();
        sql += &items.join(", ");
        sql += &format!(" from {from}");
        if !conds.is_empty() {
            sql += &format!(" where {}", conds.join(" and "));
        }
        if grouped && !keys.is_empty() {
            sql += &format!(" group by {}", keys.join(", "));
            if self.rng.gen_bool(0.3) {
                let n = self.rng.gen_range(1..4);
                sql += &format!(" having count(*) >= {n}");
            }
        }
        (sql, (keys, aggs), width)
    }

    pub fn query(&mut self) -> String {
        let grouped = self.rng.gen_bool(0.5);
        let (mut sql, shape, width) = self.block(grouped, None);
        if self.rng.gen_bool(0.1) && shape.0.iter().chain(&shape.1).all(|c| !c.starts_with('d')) {
            // Same select list over the same fact table: re-pick until the
            // fact matches.
            for _ in 0..10 {
                let (other, _, _) = self.block(grouped, Some(&shape));
                let fact = |s: &str| s.split(" from ").nth(1).and_then(|r| r.split_whitespace().next()).map(str::to_string);
                if fact(&other) == fact(&sql) {
                    let all = if self.rng.gen_bool(0.3) { " all" } else { "" };
                    sql = format!("{sql} union{all} {other}");
                    break;
                }
            }
        }
        if self.rng.gen_bool(0.5) {
            let k = self.rng.gen_range(1..=width);
            let dir = if self.rng.gen_bool(0.5) { " desc" } else { "" };
            sql += &format!(" order by {k}{dir}");
            if self.rng.gen_bool(0.3) {
                sql += &format!(" limit {}", self.rng.gen_range(1..30));
            }
        } else if self.rng.gen_bool(0.1) {
            sql += &format!(" limit {}", self.rng.gen_range(1..30));
        }
        sql
    }
}
