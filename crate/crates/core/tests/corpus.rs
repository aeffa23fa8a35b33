//! The decision-support examples and the representative workload queries
//! parse, plan and run on every path.

mod common;

use std::collections::{HashMap, HashSet};

use chrono::Datelike;
use common::{run, warehouse};
use cropdw::bench::{decision_examples, representative_queries};
use cropdw::cube::{build_cube, CubeDef, CubeRegistry, DimensionHierarchy, MeasureAgg};
use cropdw::pipeline::PathChoice;
use cropdw::query::ast::{Expr, SetExpr};
use cropdw::query::plan::{BlockPlan, BoundBody, SourceKind, StepKind};
use cropdw::query::{self, explain, parse, ExecPath};
use cropdw::storage::StorageEngine;
use cropdw::{ConstellationSchema, Value};

const PATHS: [PathChoice; 3] = [PathChoice::Baseline, PathChoice::Rolap, PathChoice::Holap];

fn workload_sql(id: u32) -> String {
    representative_queries().into_iter().find(|q| q.id == id).unwrap().sql
}

#[test]
fn examples_return_rows_on_every_path() {
    let wh = warehouse();
    let examples = decision_examples();
    assert_eq!(examples.len(), 4);
    for (name, sql) in &examples {
        let base = run(wh, sql, PathChoice::Baseline);
        assert!(!base.is_empty(), "{name} returned no rows");
        for p in PATHS {
            let t = run(wh, sql, p);
            let plan = wh.plan(sql).unwrap();
            common::same_result(&plan, &base, &t).unwrap_or_else(|e| panic!("{name} {p:?}: {e}"));
        }
    }
    let first = run(wh, &examples[0].1, PathChoice::Rolap);
    for h in ["CropName", "FieldName", "Yield"] {
        assert!(first.headers.iter().any(|x| x == h), "missing header {h}");
    }
}

#[test]
fn representative_queries_run_on_every_path() {
    let wh = warehouse();
    let qs = representative_queries();
    assert_eq!(qs.iter().map(|q| q.id).collect::<Vec<_>>(), vec![5, 10, 15, 20, 25, 30, 35, 40, 45, 50]);
    for q in &qs {
        for p in PATHS {
            wh.query(&q.sql, p).unwrap_or_else(|e| panic!("{} on {p:?}: {e}", q.label()));
        }
    }
}

/// Example 2 recomputed from raw scans: Ori Agro sales in August 2016,
/// summed per crop name.
#[test]
fn example_two_matches_a_hand_join() {
    let wh = warehouse();
    let sql = &decision_examples()[1].1;
    let t = run(wh, sql, PathChoice::Baseline);
    let names: Vec<String> = t.rows.iter().map(|r| r[2].to_string()).collect();
    assert_eq!(names.iter().collect::<HashSet<_>>().len(), names.len(), "crop names repeat");

    let scan = |table: &str| wh.rows.scan(table, &[], None).unwrap();
    let business = scan("Business");
    let (bid, bname) = (business.column_index("BusinessID").unwrap(), business.column_index("BusinessName").unwrap());
    let ori: HashSet<Value> =
        business.rows.iter().filter(|r| r[bname] == Value::text("Ori Agro")).map(|r| r[bid].clone()).collect();
    let crop = scan("Crop");
    let (cid, cname) = (crop.column_index("CropID").unwrap(), crop.column_index("CropName").unwrap());
    let crop_name: HashMap<Value, Value> = crop.rows.iter().map(|r| (r[cid].clone(), r[cname].clone())).collect();
    let farmers: HashSet<Value> = {
        let f = scan("Farmer");
        let i = f.column_index("FarmerID").unwrap();
        f.rows.iter().map(|r| r[i].clone()).collect()
    };
    let sales = scan("SaleFact");
    let col = |n| sales.column_index(n).unwrap();
    let mut sums: HashMap<String, f64> = HashMap::new();
    for r in &sales.rows {
        let Some(d) = r[col("SaleDate")].as_date() else { continue };
        if d.month() == 8 && d.year() == 2016 && ori.contains(&r[col("BusinessID")]) && farmers.contains(&r[col("FarmerID")]) {
            if let Some(name) = crop_name.get(&r[col("CropID")]) {
                *sums.entry(name.to_string()).or_default() += r[col("Quantity")].as_f64().unwrap();
            }
        }
    }
    assert!(!sums.is_empty());
    assert_eq!(t.len(), sums.len());
    for r in &t.rows {
        let expected = sums[&r[2].to_string()];
        let got = r[4].as_f64().unwrap();
        assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{}: {got} vs {expected}", r[2]);
    }
}

#[test]
fn parse_shapes() {
    let q10 = parse(&workload_sql(10)).unwrap();
    let SetExpr::Select(s) = &q10.body else { panic!("q10 is a single block") };
    assert!(matches!(s.selection, Some(Expr::And(..))), "two conjuncts");
    assert_eq!(s.group_by.len(), 1);
    assert_eq!(s.group_by[0].to_string().to_lowercase(), "soil.ph");

    let ex4 = parse(&decision_examples()[3].1).unwrap();
    let SetExpr::Select(s) = &ex4.body else { panic!() };
    let text = format!("{:?}", s.selection);
    assert!(text.contains("InSubquery"), "example 4 has IN (subquery)");
    assert!(text.contains("limit: Some(10)"), "the inner derived table keeps LIMIT 10");

    assert!(matches!(parse("SELECT 1 FROM"), Err(query::QueryError::Syntax { .. })));
}

#[test]
fn plan_shapes() {
    let wh = warehouse();
    let q15 = wh.plan(&workload_sql(15)).unwrap();
    let BoundBody::Block(b) = &q15.query.body else { panic!() };
    assert!(b.steps.iter().any(|s| s.kind == StepKind::LeftOuter && s.from_right), "right outer join kept");

    let q30 = wh.plan(&workload_sql(30)).unwrap();
    assert_eq!(q30.query.limit, Some(10_000));
    assert!(!q30.query.order.is_empty());
    let text = explain(&q30, ExecPath::Rolap);
    assert!(text.contains("limit 10000") && text.contains("sort ["));

    assert!(matches!(wh.plan("select NoSuchColumn from FieldFact"), Err(query::QueryError::Bind(_))));
}

#[test]
fn q10_routes_to_a_matching_cube() {
    let wh = warehouse();
    let schema = &wh.schema;
    let def = CubeDef::new(
        schema,
        "ph_spray",
        "FieldFact",
        vec![
            (DimensionHierarchy::attribute(schema, "Soil.PH").unwrap(), "PH"),
            (DimensionHierarchy::attribute(schema, "FieldFact.SprayQuantity").unwrap(), "SprayQuantity"),
        ],
        &[(MeasureAgg::Count, None)],
    )
    .unwrap();
    let mut reg = CubeRegistry::new();
    reg.register(build_cube(&wh.columns, &def).unwrap());
    let plan = wh.plan(&workload_sql(10)).unwrap();
    let (path, holap) = query::route_holap(&plan, schema, &reg, &wh.columns).unwrap();
    assert_eq!(path, ExecPath::Molap);
    let rolap = query::execute_rolap(&plan, &wh.columns).unwrap();
    common::same_result(&plan, &rolap, &holap).unwrap();
    let text = explain(&plan, query::holap_path(&plan, schema, &reg));
    assert!(text.starts_with("path: molap\n"));
    assert_eq!(text, explain(&plan, query::holap_path(&plan, schema, &reg)), "stable rendering");

    // Outer joins and an empty registry stay relational.
    let q15 = wh.plan(&workload_sql(15)).unwrap();
    assert_eq!(query::route_holap(&q15, schema, &reg, &wh.columns).unwrap().0, ExecPath::Rolap);
    assert_eq!(query::route_holap(&plan, schema, &CubeRegistry::new(), &wh.columns).unwrap().0, ExecPath::Rolap);
}

#[test]
fn explain_shows_join_order() {
    let wh = warehouse();
    let plan = wh.plan(&workload_sql(45)).unwrap();
    let text = explain(&plan, ExecPath::Rolap);
    let start = text.find("1. start scan FieldFact").expect("fact starts");
    let join = text.find("2. left outer join scan Nutrient").expect("nutrient joins second");
    assert!(join < start, "steps render innermost last:\n{text}");
}

#[test]
fn empty_fact_table_gives_empty_results() {
    let wh = warehouse();
    let plan = wh.plan(&workload_sql(5)).unwrap();
    let empty = cropdw::storage::row::RowStore::new();
    for t in wh.schema.tables.values() {
        empty.create_table(t).unwrap();
    }
    assert!(query::execute_baseline(&plan, &empty).unwrap().is_empty());
}

/// Every equi-join key pairs a foreign key with the column it references,
/// or two foreign keys onto the same target.
fn check_join_keys(body: &BoundBody, schema: &ConstellationSchema, checked: &mut usize) {
    let block: &BlockPlan = match body {
        BoundBody::Block(b) => b,
        BoundBody::Union { left, right, .. } => {
            check_join_keys(left, schema, checked);
            return check_join_keys(right, schema, checked);
        }
    };
    for src in &block.sources {
        if let SourceKind::Derived { query } = &src.kind {
            check_join_keys(&query.body, schema, checked);
        }
    }
    let column_at = |w: usize| {
        let s = block.sources.iter().find(|s| s.offset <= w && w < s.offset + s.columns.len()).unwrap();
        (s.base_table(), s.columns[w - s.offset].0.clone())
    };
    for step in &block.steps {
        let new = &block.sources[step.source];
        for &(w, l) in &step.keys {
            let (Some(ta), ca) = column_at(w) else { continue };
            let (Some(tb), cb) = (new.base_table(), new.columns[l].0.clone()) else { continue };
            let fk = |t: &str, c: &str| schema.table(t).unwrap().foreign_key(c).cloned();
            let refers = |t: &str, c: &str, to_t: &str, to_c: &str| {
                fk(t, c).is_some_and(|k| k.ref_table.eq_ignore_ascii_case(to_t) && k.ref_column.eq_ignore_ascii_case(to_c))
            };
            let shared = matches!((fk(ta, &ca), fk(tb, &cb)), (Some(x), Some(y)) if x.ref_table == y.ref_table);
            assert!(
                refers(ta, &ca, tb, &cb) || refers(tb, &cb, ta, &ca) || shared,
                "{ta}.{ca} = {tb}.{cb} is not a declared key pair"
            );
            *checked += 1;
        }
    }
}

#[test]
fn workload_join_columns_are_declared_keys() {
    let wh = warehouse();
    let mut checked = 0;
    for q in cropdw::bench::builtin_workload() {
        check_join_keys(&wh.plan(&q.sql).unwrap().query.body, &wh.schema, &mut checked);
    }
    assert!(checked >= 50, "only {checked} join keys");
}
