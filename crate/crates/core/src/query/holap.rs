//! Routing between materialized cubes and the column store.
//!
//! A block is answered from a cube when it is a star join of the cube's
//! fact table with dimension tables (inner joins on fact foreign key =
//! dimension primary key), aggregates, and touches only columns that are
//! levels of cube dimensions at or above the built level, plus measure
//! columns inside matching aggregates. Each cell is then expanded into a
//! synthetic wide row holding the member values of the referenced levels;
//! filters and group keys are evaluated on that row, and cell accumulators
//! are merged into the groups.
//!
//! A cube dimension whose foreign key left fact rows unresolved cannot stand
//! in for an inner join, since those rows would have been dropped, so such
//! cubes are skipped.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::mem::discriminant;

use super::ast::AggFunc;
use super::eval::{all_true, eval};
use super::finish::{finish_groups, order_and_limit, Acc};
use super::plan::{BExpr, BlockPlan, BoundBody, ExecPath, QueryPlan, SourceKind, StepKind};
use super::{execute_rolap, QueryError, ResultTable};
use crate::cube::{CubeDef, CubeRegistry, DataCube, DimensionHierarchy, LevelSource, MeasureAgg};
use crate::schema::ConstellationSchema;
use crate::storage::column::ColumnStore;
use crate::value::{Row, Value};

/// How a block reads a cube: the cube dimension and level of each
/// referenced wide column, and the measure behind each aggregate.
struct CubeBinding {
    columns: Vec<(usize, usize, usize)>,
    measures: Vec<usize>,
}

fn single_block(plan: &QueryPlan) -> Option<&BlockPlan> {
    match &plan.query.body {
        BoundBody::Block(b) => Some(b),
        BoundBody::Union { .. } => None,
    }
}

/// Shape test shared by the router and the advisor: one fact scan followed
/// by inner primary-key joins, no residuals, no subqueries, an aggregate.
/// Returns the fact table and, per source, the fact column it joins on.
fn star_shape<'b>(block: &'b BlockPlan, schema: &ConstellationSchema) -> Option<(&'b str, Vec<Option<String>>)> {
    let agg = block.agg.as_ref()?;
    if agg.aggs.iter().any(|a| a.hidden || a.func == AggFunc::Min) {
        return None;
    }
    let subq = block.sources.iter().any(|s| s.filters.iter().any(BExpr::has_subquery))
        || block.having.as_ref().is_some_and(BExpr::has_subquery);
    if subq || block.sources.iter().any(|s| matches!(s.kind, SourceKind::Derived { .. })) {
        return None;
    }
    let first = block.steps.first()?;
    let fact_src = &block.sources[first.source];
    let fact = fact_src.base_table()?;
    let fdef = schema.table(fact)?;
    if first.kind != StepKind::Scan || !fdef.is_fact() || !first.residual.is_empty() {
        return None;
    }
    let mut via = vec![None; block.sources.len()];
    for step in &block.steps[1..] {
        if step.kind != StepKind::Inner || !step.residual.is_empty() || !step.on_extra.is_empty() {
            return None;
        }
        let src = &block.sources[step.source];
        let tdef = schema.table(src.base_table()?)?;
        if tdef.is_fact() {
            return None;
        }
        let [(wide, local)] = step.keys[..] else { return None };
        let (s, c) = block.locate(wide);
        if s != first.source || Some(local) != tdef.pk_index() {
            return None;
        }
        let fk = fdef.foreign_key(&fact_src.columns[c].0)?;
        if !fk.ref_table.eq_ignore_ascii_case(&tdef.name) {
            return None;
        }
        via[step.source] = Some(fk.column.clone());
    }
    Some((fact, via))
}

/// Wide columns referenced outside aggregate arguments.
fn referenced_columns(block: &BlockPlan) -> Vec<usize> {
    let mut cols = Vec::new();
    for s in &block.sources {
        for f in &s.filters {
            let mut local = Vec::new();
            f.columns(&mut local);
            cols.extend(local.into_iter().map(|c| s.offset + c));
        }
    }
    if let Some(agg) = &block.agg {
        for k in &agg.keys {
            k.columns(&mut cols);
        }
    }
    cols.sort_unstable();
    cols.dedup();
    cols
}

fn measure_for(cube: &CubeDef, block: &BlockPlan, call: &super::plan::AggCall, fact_source: usize) -> Option<usize> {
    let agg = match call.func {
        AggFunc::Sum => MeasureAgg::Sum,
        AggFunc::Count => MeasureAgg::Count,
        AggFunc::Max => MeasureAgg::Max,
        AggFunc::Min => return None,
    };
    let column = match &call.arg {
        None => None,
        Some(BExpr::Col(w)) => {
            let (s, c) = block.locate(*w);
            if s != fact_source {
                return None;
            }
            Some(block.sources[s].columns[c].0.as_str())
        }
        Some(_) => return None,
    };
    let m = cube
        .measures
        .iter()
        .position(|m| m.agg == agg && m.column.as_deref().map(str::to_ascii_lowercase) == column.map(str::to_ascii_lowercase))?;
    let probe = super::plan::AggCall { func: call.func, arg: None, hidden: false, dtype: cube.measures[m].dtype };
    // Accumulator kinds must agree for cell accumulators to merge into groups.
    (discriminant(&Acc::new(call)) == discriminant(&Acc::new(&probe))).then_some(m)
}

fn bind_cube(block: &BlockPlan, schema: &ConstellationSchema, cube: &DataCube) -> Option<CubeBinding> {
    let (fact, via) = star_shape(block, schema)?;
    if !cube.def.fact.eq_ignore_ascii_case(fact) {
        return None;
    }
    let fact_source = block.steps[0].source;
    let mut columns = Vec::new();
    for w in referenced_columns(block) {
        let (s, c) = block.locate(w);
        let src = &block.sources[s];
        let table = src.base_table()?;
        let name = &src.columns[c].0;
        let found = cube.def.dimensions.iter().enumerate().find_map(|(d, dim)| {
            if !dim.hierarchy.table.eq_ignore_ascii_case(table) {
                return None;
            }
            let joined_ok = if s == fact_source {
                dim.fact_key.is_none()
            } else {
                dim.fact_key.is_some() && dim.fact_key == via[s] && cube.unresolved[d] == 0
            };
            if !joined_ok {
                return None;
            }
            dim.hierarchy.levels.iter().enumerate().skip(dim.level).find_map(|(l, level)| match &level.source {
                LevelSource::Column { via, column } if via.is_empty() && column.eq_ignore_ascii_case(name) => Some((d, l)),
                _ => None,
            })
        })?;
        columns.push((w, found.0, found.1));
    }
    // A joined dimension table no column refers to still restricts the
    // facts to resolvable keys.
    for (s, fk) in via.iter().enumerate() {
        if let Some(fk) = fk {
            let covered = cube.def.dimensions.iter().enumerate().any(|(d, dim)| {
                dim.fact_key.as_ref() == Some(fk)
                    && dim.hierarchy.table.eq_ignore_ascii_case(block.sources[s].base_table().unwrap_or(""))
                    && cube.unresolved[d] == 0
            });
            if !covered {
                return None;
            }
        }
    }
    let agg = block.agg.as_ref()?;
    let measures = agg.aggs.iter().map(|a| measure_for(&cube.def, block, a, fact_source)).collect::<Option<Vec<_>>>()?;
    Some(CubeBinding { columns, measures })
}

fn answer_from_cube(block: &BlockPlan, cube: &DataCube, binding: &CubeBinding) -> Result<Vec<Row>, QueryError> {
    let agg = block.agg.as_ref().expect("aggregate block");
    let mut index: HashMap<Vec<Value>, usize> = HashMap::new();
    let mut groups: Vec<(Vec<Value>, Vec<Acc>)> = Vec::new();
    let mut wide = vec![Value::Null; block.width];
    for (coords, accs) in &cube.cells {
        for &(w, d, l) in &binding.columns {
            wide[w] = cube.member_at(d, &coords[d], l).to_value();
        }
        let pass = block
            .sources
            .iter()
            .all(|s| all_true(&s.filters, &wide[s.offset..s.offset + s.columns.len()]));
        if !pass {
            continue;
        }
        let key: Vec<Value> = agg.keys.iter().map(|k| eval(k, &wide).into_owned()).collect();
        let g = match index.get(&key) {
            Some(&g) => g,
            None => {
                groups.push((key.clone(), agg.aggs.iter().map(Acc::new).collect()));
                index.insert(key, groups.len() - 1);
                groups.len() - 1
            }
        };
        for (acc, &m) in groups[g].1.iter_mut().zip(&binding.measures) {
            acc.merge(&accs[m]);
        }
    }
    finish_groups(block, groups)
}

/// Answers `plan` from the first registered cube that covers it, else on the
/// column store. The returned tag names the path taken.
pub fn route_holap(
    plan: &QueryPlan,
    schema: &ConstellationSchema,
    cubes: &CubeRegistry,
    store: &ColumnStore,
) -> Result<(ExecPath, ResultTable), QueryError> {
    if let Some((block, cube, binding)) = find_cube(plan, schema, cubes) {
        let mut rows = answer_from_cube(block, cube, &binding)?;
        order_and_limit(&mut rows, &plan.query.order, plan.query.limit);
        return Ok((ExecPath::Molap, super::table_of(plan, rows)));
    }
    Ok((ExecPath::Rolap, execute_rolap(plan, store)?))
}

fn find_cube<'p, 'c>(
    plan: &'p QueryPlan,
    schema: &ConstellationSchema,
    cubes: &'c CubeRegistry,
) -> Option<(&'p BlockPlan, &'c DataCube, CubeBinding)> {
    let block = single_block(plan)?;
    cubes.iter().find_map(|cube| bind_cube(block, schema, cube).map(|b| (block, cube, b)))
}

/// The path `route_holap` would take, without executing.
pub fn holap_path(plan: &QueryPlan, schema: &ConstellationSchema, cubes: &CubeRegistry) -> ExecPath {
    match find_cube(plan, schema, cubes) {
        Some(_) => ExecPath::Molap,
        None => ExecPath::Rolap,
    }
}

/// Smallest cube that can answer `plan`: one attribute dimension per
/// referenced column at that column's level, and one measure per
/// aggregate. `None` when the query is not a cube-shaped aggregate.
pub fn advise_cube(plan: &QueryPlan, schema: &ConstellationSchema, name: &str) -> Option<CubeDef> {
    let block = single_block(plan)?;
    let (fact, _) = star_shape(block, schema)?;
    let fact_source = block.steps[0].source;
    let mut dims: Vec<(DimensionHierarchy, String)> = Vec::new();
    for w in referenced_columns(block) {
        let (s, c) = block.locate(w);
        let src = &block.sources[s];
        let h = DimensionHierarchy::attribute(schema, &format!("{}.{}", src.base_table()?, src.columns[c].0)).ok()?;
        if !dims.iter().any(|(d, _)| d.name == h.name) {
            let level = h.levels[0].name.clone();
            dims.push((h, level));
        }
    }
    let mut measures = Vec::new();
    for a in &block.agg.as_ref()?.aggs {
        let agg = match a.func {
            AggFunc::Sum => MeasureAgg::Sum,
            AggFunc::Count => MeasureAgg::Count,
            AggFunc::Max => MeasureAgg::Max,
            AggFunc::Min => return None,
        };
        let column = match &a.arg {
            None => None,
            Some(BExpr::Col(w)) => {
                let (s, c) = block.locate(*w);
                if s != fact_source {
                    return None;
                }
                Some(block.sources[s].columns[c].0.clone())
            }
            Some(_) => return None,
        };
        measures.push((agg, column));
    }
    // Joined dimensions with no referenced column still need a dimension so
    // the cube records which facts resolve.
    for step in &block.steps[1..] {
        let src = &block.sources[step.source];
        let table = src.base_table()?;
        if !dims.iter().any(|(d, _)| d.table.eq_ignore_ascii_case(table)) {
            let pk = schema.table(table)?.pk_index()?;
            let h = DimensionHierarchy::attribute(schema, &format!("{table}.{}", src.columns[pk].0)).ok()?;
            let level = h.levels[0].name.clone();
            dims.push((h, level));
        }
    }
    let dims_ref: Vec<(DimensionHierarchy, &str)> = dims.iter().map(|(h, l)| (h.clone(), l.as_str())).collect();
    let ms: Vec<(MeasureAgg, Option<&str>)> = measures.iter().map(|(a, c)| (*a, c.as_deref())).collect();
    CubeDef::new(schema, name, fact, dims_ref, &ms).ok()
}

fn render_expr(block: &BlockPlan, e: &BExpr, local_to: Option<usize>) -> String {
    let col = |i: usize| match local_to {
        Some(s) => format!("{}.{}", block.sources[s].name, block.sources[s].columns[i].0),
        None => block.column_name(i),
    };
    match e {
        BExpr::Col(i) => col(*i),
        BExpr::Const(v) => match v {
            Value::Text(_) | Value::Date(_) => format!("'{v}'"),
            Value::Null => "NULL".into(),
            _ => v.to_string(),
        },
        BExpr::Cmp(op, a, b) => {
            format!("{} {} {}", render_expr(block, a, local_to), op.symbol(), render_expr(block, b, local_to))
        }
        BExpr::And(a, b) => format!("({} AND {})", render_expr(block, a, local_to), render_expr(block, b, local_to)),
        BExpr::Or(a, b) => format!("({} OR {})", render_expr(block, a, local_to), render_expr(block, b, local_to)),
        BExpr::Like { expr, pattern, negated } => format!(
            "{} {}LIKE '{pattern}'",
            render_expr(block, expr, local_to),
            if *negated { "NOT " } else { "" }
        ),
        BExpr::InList { expr, list, negated } => format!(
            "{} {}IN ({} values)",
            render_expr(block, expr, local_to),
            if *negated { "NOT " } else { "" },
            list.items.len()
        ),
        BExpr::InSubquery { expr, negated, .. } => format!(
            "{} {}IN (subquery)",
            render_expr(block, expr, local_to),
            if *negated { "NOT " } else { "" }
        ),
        BExpr::Func(f, a) => format!("{}({})", f.name(), render_expr(block, a, local_to)),
    }
}

fn render_block(out: &mut String, block: &BlockPlan, depth: usize) {
    let pad = "  ".repeat(depth);
    let _ = writeln!(out, "{pad}project [{}]", block.headers.join(", "));
    if let Some(h) = &block.having {
        let _ = writeln!(out, "{pad}  having-filter [slots] {}", render_slots(h));
    }
    let inner = if let Some(agg) = &block.agg {
        let keys: Vec<String> = agg.keys.iter().map(|k| render_expr(block, k, None)).collect();
        let aggs: Vec<String> = agg
            .aggs
            .iter()
            .map(|a| {
                let arg = a.arg.as_ref().map_or("*".to_string(), |e| render_expr(block, e, None));
                format!("{}{}({arg})", if a.hidden { "hidden " } else { "" }, a.func.name())
            })
            .collect();
        let _ = writeln!(out, "{pad}  aggregate keys=[{}] aggs=[{}]", keys.join(", "), aggs.join(", "));
        depth + 2
    } else {
        depth + 1
    };
    let pad = "  ".repeat(inner);
    for (i, step) in block.steps.iter().enumerate().rev() {
        let src = &block.sources[step.source];
        let what = match &src.kind {
            SourceKind::Base { table } if table == &src.name => format!("scan {table}"),
            SourceKind::Base { table } => format!("scan {table} as {}", src.name),
            SourceKind::Derived { .. } => format!("derived {}", src.name),
        };
        let join = match (step.kind, step.from_right) {
            (StepKind::Scan, _) => "start".to_string(),
            (StepKind::Inner, _) => "inner join".to_string(),
            (StepKind::LeftOuter, false) => "left outer join".to_string(),
            (StepKind::LeftOuter, true) => "right outer join (preserving this side)".to_string(),
        };
        let keys: Vec<String> = step
            .keys
            .iter()
            .map(|&(w, c)| format!("{} = {}.{}", block.column_name(w), src.name, src.columns[c].0))
            .collect();
        let _ = write!(out, "{pad}{}. {join} {what}", i + 1);
        if !keys.is_empty() {
            let _ = write!(out, " on [{}]", keys.join(", "));
        }
        let _ = writeln!(out);
        for f in &src.filters {
            let _ = writeln!(out, "{pad}     filter {}", render_expr(block, f, Some(step.source)));
        }
        for f in &step.on_extra {
            let _ = writeln!(out, "{pad}     on {}", render_expr(block, f, None));
        }
        for f in &step.residual {
            let _ = writeln!(out, "{pad}     residual {}", render_expr(block, f, None));
        }
    }
}

fn render_slots(e: &BExpr) -> String {
    match e {
        BExpr::Col(i) => format!("#{i}"),
        BExpr::Const(v) => v.to_string(),
        BExpr::Cmp(op, a, b) => format!("{} {} {}", render_slots(a), op.symbol(), render_slots(b)),
        BExpr::And(a, b) => format!("({} AND {})", render_slots(a), render_slots(b)),
        BExpr::Or(a, b) => format!("({} OR {})", render_slots(a), render_slots(b)),
        BExpr::Like { expr, pattern, .. } => format!("{} LIKE '{pattern}'", render_slots(expr)),
        BExpr::InList { expr, .. } | BExpr::InSubquery { expr, .. } => format!("{} IN (...)", render_slots(expr)),
        BExpr::Func(f, a) => format!("{}({})", f.name(), render_slots(a)),
    }
}

fn render_body(out: &mut String, body: &BoundBody, depth: usize) {
    match body {
        BoundBody::Block(b) => render_block(out, b, depth),
        BoundBody::Union { left, right, all } => {
            let _ = writeln!(out, "{}union{}", "  ".repeat(depth), if *all { " all" } else { "" });
            render_body(out, left, depth + 1);
            render_body(out, right, depth + 1);
        }
    }
}

/// Deterministic text rendering of the operator tree, join order and
/// execution path.
pub fn explain(plan: &QueryPlan, path: ExecPath) -> String {
    let q = &plan.query;
    let mut out = format!("path: {}\n", path.name());
    let mut depth = 0;
    if let Some(n) = q.limit {
        let _ = writeln!(out, "limit {n}");
        depth += 1;
    }
    if !q.order.is_empty() {
        let keys: Vec<String> = q
            .order
            .iter()
            .map(|&(i, desc)| format!("{}{}", q.headers[i], if desc { " desc" } else { "" }))
            .collect();
        let _ = writeln!(out, "{}sort [{}]", "  ".repeat(depth), keys.join(", "));
        depth += 1;
    }
    render_body(&mut out, &q.body, depth);
    out
}
