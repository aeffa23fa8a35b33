//! Cube families and conservation checks shared by the cube and acceptance
//! tests. Oracles are computed here from raw row-store scans.

use std::collections::{BTreeMap, BTreeSet};

use cropdw::cube::{build_cube, roll_up, slice, totals_agree, CubeDef, DataCube, DimensionHierarchy, MeasureAgg, Member};
use cropdw::pipeline::Warehouse;
use cropdw::schema::ConstellationSchema;
use cropdw::storage::StorageEngine;
use cropdw::Value;

/// Members a slice partition may enumerate before the level is skipped in
/// favour of a coarser one; keeps the quadratic slice loop bounded.
pub const SLICE_MEMBERS: usize = 400;

fn def(
    schema: &ConstellationSchema,
    name: &str,
    fact: &str,
    dims: &[(&str, Option<&str>)],
    measures: &[(MeasureAgg, Option<&str>)],
) -> CubeDef {
    let dims = dims
        .iter()
        .map(|(h, l)| {
            let h = DimensionHierarchy::named(schema, h).unwrap();
            let level = l.map(str::to_string).unwrap_or_else(|| h.levels[0].name.clone());
            (h, level)
        })
        .collect::<Vec<_>>();
    let dims = dims.iter().map(|(h, l)| (h.clone(), l.as_str())).collect();
    CubeDef::new(schema, name, fact, dims, measures).unwrap()
}

/// Cubes over all three fact tables, with attribute, date and multi-level
/// hierarchies and every measure kind.
pub fn family(schema: &ConstellationSchema) -> Vec<CubeDef> {
    use MeasureAgg::{Count, Max, Sum};
    vec![
        def(
            schema,
            "crop_yield",
            "FieldFact",
            &[("Crop.CropName", None)],
            &[(Sum, Some("Yield")), (Count, None), (Max, Some("Yield"))],
        ),
        def(
            schema,
            "field_time",
            "FieldFact",
            &[("Field", None), ("OperationTime", None)],
            &[(Sum, Some("FertiliserQuantity")), (Count, None), (Max, Some("PestNumber")), (Sum, Some("PestNumber"))],
        ),
        def(
            schema,
            "ph_pests",
            "FieldFact",
            &[("Soil.PH", None), ("OperationTime.StartDate", Some("Month"))],
            &[(Sum, Some("PestNumber")), (Max, Some("SprayQuantity")), (Count, Some("SprayQuantity"))],
        ),
        def(
            schema,
            "sales",
            "SaleFact",
            &[("SaleFact.SaleDate", None), ("Crop.CropName", None)],
            &[(Sum, Some("Quantity")), (Count, None), (Max, Some("Price"))],
        ),
        def(schema, "orders", "OrderFact", &[("Farmer.FarmerName", None)], &[(Sum, Some("Quantity")), (Count, None)]),
    ]
}

/// Aggregate of `measure` over every fact row, straight from a scan.
pub fn oracle(wh: &Warehouse, cube: &DataCube, m: usize) -> Value {
    let measure = &cube.def.measures[m];
    let rel = wh.rows.scan(&cube.def.fact, &[], None).unwrap();
    let values: Vec<&Value> = match &measure.column {
        None => return Value::Int(rel.rows.len() as i64),
        Some(c) => {
            let i = rel.column_index(c).unwrap();
            rel.rows.iter().map(|r| &r[i]).filter(|v| !v.is_null()).collect()
        }
    };
    if measure.agg == MeasureAgg::Count {
        return Value::Int(values.len() as i64);
    }
    fold(measure.agg, values.into_iter().cloned())
}

/// Combines finished values the way `agg` combines partial aggregates.
pub fn fold(agg: MeasureAgg, values: impl IntoIterator<Item = Value>) -> Value {
    let mut out = Value::Null;
    for v in values.into_iter().filter(|v| !v.is_null()) {
        out = match (agg, &out, &v) {
            (_, Value::Null, _) => v,
            (MeasureAgg::Max, a, b) => {
                if b > a {
                    v
                } else {
                    out
                }
            }
            (_, Value::Int(a), Value::Int(b)) => Value::Int(a + b),
            (_, a, b) => Value::Float(a.as_f64().unwrap() + b.as_f64().unwrap()),
        };
    }
    out
}

fn count_as_fold(agg: MeasureAgg, values: Vec<Value>) -> Value {
    // Counts over no values are zero; sums and maxima over none are null.
    match (agg, values.is_empty()) {
        (MeasureAgg::Count, true) => Value::Int(0),
        _ => fold(agg, values),
    }
}

/// What one cube contributed to a conservation run.
#[derive(Debug, Default, Clone, Copy)]
pub struct Tally {
    pub cubes: usize,
    pub roll_ups: usize,
    pub partitions: usize,
    pub comparisons: usize,
}

impl std::ops::AddAssign for Tally {
    fn add_assign(&mut self, o: Tally) {
        self.cubes += o.cubes;
        self.roll_ups += o.roll_ups;
        self.partitions += o.partitions;
        self.comparisons += o.comparisons;
    }
}

fn expect_total(wh: &Warehouse, cube: &DataCube, what: &str, t: &mut Tally) -> Result<(), String> {
    for m in 0..cube.def.measures.len() {
        let (got, want) = (cube.total(m), oracle(wh, cube, m));
        t.comparisons += 1;
        if !totals_agree(&got, &want) {
            return Err(format!("{} {what}: {} total {got} vs oracle {want}", cube.def.name, cube.def.measures[m].name()));
        }
    }
    Ok(())
}

/// Every cell of `rolled` equals its constituent cells of `cube` folded
/// together; this is max coherence for max measures.
fn expect_coherent(cube: &DataCube, rolled: &DataCube, d: usize, t: &mut Tally) -> Result<(), String> {
    let target = rolled.def.dimensions[d].level;
    let mut groups: BTreeMap<Vec<Member>, Vec<Vec<Value>>> = BTreeMap::new();
    for (coords, values) in cube.rows() {
        let mut k = coords.clone();
        k[d] = cube.member_at(d, &coords[d], target);
        groups.entry(k).or_default().push(values);
    }
    if groups.len() != rolled.len() || rolled.len() > cube.len() {
        return Err(format!("{}: {} rolled cells vs {} groups", cube.def.name, rolled.len(), groups.len()));
    }
    for (coords, values) in rolled.rows() {
        let parts = groups.get(&coords).ok_or_else(|| format!("{}: stray cell {coords:?}", cube.def.name))?;
        for (m, got) in values.iter().enumerate() {
            let agg = cube.def.measures[m].agg;
            let want = count_as_fold(agg, parts.iter().map(|p| p[m].clone()).collect());
            t.comparisons += 1;
            if !totals_agree(got, &want) {
                return Err(format!("{}: cell {coords:?} {} = {got}, parts fold to {want}", cube.def.name, cube.def.measures[m].name()));
            }
        }
    }
    Ok(())
}

/// Slices `cube` on every member of dimension `d` and checks the slices
/// add back up to the oracle totals.
fn expect_partition(wh: &Warehouse, cube: &DataCube, d: usize, t: &mut Tally) -> Result<bool, String> {
    let members: BTreeSet<Member> = cube.cells.keys().map(|k| k[d].clone()).collect();
    if members.len() > SLICE_MEMBERS {
        return Ok(false);
    }
    let dim = cube.def.dimensions[d].name().to_string();
    let slices: Vec<DataCube> = members.iter().map(|m| slice(cube, &dim, m).unwrap()).collect();
    if slices.iter().map(DataCube::len).sum::<usize>() != cube.len() {
        return Err(format!("{}: slices of {dim} do not cover every cell", cube.def.name));
    }
    for m in 0..cube.def.measures.len() {
        let agg = cube.def.measures[m].agg;
        let got = count_as_fold(agg, slices.iter().map(|s| s.total(m)).collect());
        let want = oracle(wh, cube, m);
        t.comparisons += 1;
        if !totals_agree(&got, &want) {
            return Err(format!("{}: slices of {dim} fold {} to {got}, oracle {want}", cube.def.name, cube.def.measures[m].name()));
        }
    }
    t.partitions += 1;
    Ok(true)
}

/// Builds `def` on the column store and checks conservation for the cube,
/// each roll-up of each dimension to each coarser level, and slice
/// partitions of every dimension at each level small enough to enumerate.
pub fn check_family_member(wh: &Warehouse, def: &CubeDef) -> Result<Tally, String> {
    let mut t = Tally { cubes: 1, ..Tally::default() };
    let cube = build_cube(&wh.columns, def).map_err(|e| e.to_string())?;
    expect_total(wh, &cube, "built", &mut t)?;
    for d in 0..cube.def.dimensions.len() {
        let dim = cube.def.dimensions[d].clone();
        let mut sliced_any = expect_partition(wh, &cube, d, &mut t)?;
        for level in &dim.hierarchy.levels[dim.level + 1..] {
            let rolled = roll_up(&cube, dim.name(), &level.name).map_err(|e| e.to_string())?;
            t.roll_ups += 1;
            expect_total(wh, &rolled, &format!("rolled to {}", level.name), &mut t)?;
            expect_coherent(&cube, &rolled, d, &mut t)?;
            sliced_any |= expect_partition(wh, &rolled, d, &mut t)?;
        }
        if !sliced_any {
            return Err(format!("{}: no level of {} was sliced", def.name, dim.name()));
        }
    }
    Ok(t)
}
