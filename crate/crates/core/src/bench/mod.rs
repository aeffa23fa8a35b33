//! Query benchmark: the fixed 50-query workload, repeated timed runs on the
//! row-store baseline and on the warehouse, and the runtime ratio report.
//!
//! `Times` is always `RT_baseline / RT_adw`. Query runtimes are means over
//! the repetitions (one untimed warm-up run precedes them), group runtimes
//! are means over the five member queries, and the overall row is the mean
//! of the group runtimes.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cube::{build_cube, CubeError};
use crate::pipeline::{PathChoice, Warehouse};
use crate::query::ast::{Expr, JoinKind, QueryAst, SetExpr, TableRef};
use crate::query::{advise_cube, parse, OutputFormat, QueryError};

const WORKLOAD: &str = include_str!("queries.sql");
const EXAMPLES: &str = include_str!("examples.sql");

/// Per-execution wall-clock limit.
pub const QUERY_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Command {
    Where,
    GroupBy,
    Having,
    Join,
    Union,
    OrderBy,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Where => "Where",
            Command::GroupBy => "Group by",
            Command::Having => "Having",
            Command::Join => "Join",
            Command::Union => "Union",
            Command::OrderBy => "Order by",
        })
    }
}

/// Commands each query of group `g` (1-based) uses.
pub fn group_commands(g: u8) -> BTreeSet<Command> {
    use Command::*;
    let list: &[Command] = match g {
        1 => &[Where],
        2 => &[Where, GroupBy],
        3 => &[Where, Join],
        4 => &[Where, Union],
        5 => &[Where, OrderBy],
        6 => &[Where, Join, OrderBy],
        7 => &[Where, GroupBy, Having],
        8 => &[Where, GroupBy, Having, OrderBy],
        9 => &[Where, GroupBy, Having, Join, OrderBy],
        10 => &[Where, GroupBy, Having, Union, OrderBy],
        _ => &[],
    };
    list.iter().copied().collect()
}

/// Commands appearing anywhere in a query. `Join` means an explicit
/// `LEFT` or `RIGHT JOIN`; comma joins with WHERE equalities count as
/// `Where`.
pub fn commands_of(ast: &QueryAst) -> BTreeSet<Command> {
    let mut out = BTreeSet::new();
    collect_query(ast, &mut out);
    out
}

fn collect_query(ast: &QueryAst, out: &mut BTreeSet<Command>) {
    if !ast.order_by.is_empty() {
        out.insert(Command::OrderBy);
    }
    collect_set(&ast.body, out);
}

fn collect_set(body: &SetExpr, out: &mut BTreeSet<Command>) {
    match body {
        SetExpr::Union { left, right, .. } => {
            out.insert(Command::Union);
            collect_set(left, out);
            collect_set(right, out);
        }
        SetExpr::Select(s) => {
            if let Some(w) = &s.selection {
                out.insert(Command::Where);
                collect_expr(w, out);
            }
            if !s.group_by.is_empty() {
                out.insert(Command::GroupBy);
            }
            if let Some(h) = &s.having {
                out.insert(Command::Having);
                collect_expr(h, out);
            }
            for item in &s.from {
                collect_ref(&item.source, out);
                for j in &item.joins {
                    if matches!(j.kind, JoinKind::Left | JoinKind::Right) {
                        out.insert(Command::Join);
                    }
                    collect_ref(&j.source, out);
                    collect_expr(&j.on, out);
                }
            }
        }
    }
}

fn collect_ref(r: &TableRef, out: &mut BTreeSet<Command>) {
    if let TableRef::Derived { query, .. } = r {
        collect_query(query, out);
    }
}

fn collect_expr(e: &Expr, out: &mut BTreeSet<Command>) {
    match e {
        Expr::InSubquery { expr, query, .. } => {
            collect_expr(expr, out);
            collect_query(query, out);
        }
        Expr::Cmp { left, right, .. } => {
            collect_expr(left, out);
            collect_expr(right, out);
        }
        Expr::And(a, b) | Expr::Or(a, b) => {
            collect_expr(a, out);
            collect_expr(b, out);
        }
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadQuery {
    pub id: u32,
    pub group: u8,
    pub sql: String,
    pub commands: BTreeSet<Command>,
}

impl WorkloadQuery {
    pub fn label(&self) -> String {
        format!("q{}", self.id)
    }
}

pub fn group_label(g: u8) -> String {
    format!("G{g}")
}

/// The 50 built-in queries, q1…q50, five per group.
pub fn builtin_workload() -> Vec<WorkloadQuery> {
    parse_workload(WORKLOAD).expect("built-in workload is well formed")
}

/// The representative query of each group: q5, q10, …, q50.
pub fn representative_queries() -> Vec<WorkloadQuery> {
    builtin_workload().into_iter().filter(|q| q.id % 5 == 0).collect()
}

/// The four decision-support examples as `(name, sql)`.
pub fn decision_examples() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in EXAMPLES.lines() {
        if let Some(name) = line.strip_prefix("-- example") {
            out.push((format!("example{}", name.trim()), String::new()));
        } else if let Some((_, sql)) = out.last_mut() {
            sql.push_str(line);
            sql.push('\n');
        }
    }
    for (_, sql) in &mut out {
        *sql = sql.trim().trim_end_matches(';').to_string();
    }
    out
}

/// Parses `-- qN GM` headed, `;` terminated queries.
pub fn parse_workload(text: &str) -> Result<Vec<WorkloadQuery>, String> {
    let mut out = Vec::new();
    let mut current: Option<(u32, u8, String)> = None;
    let finish = |cur: &mut Option<(u32, u8, String)>, out: &mut Vec<WorkloadQuery>| -> Result<(), String> {
        if let Some((id, group, sql)) = cur.take() {
            let sql = sql.trim().trim_end_matches(';').trim().to_string();
            let ast = parse(&sql).map_err(|e| format!("q{id}: {e}"))?;
            out.push(WorkloadQuery { id, group, commands: commands_of(&ast), sql });
        }
        Ok(())
    };
    for line in text.lines() {
        let header = line.strip_prefix("-- q").and_then(|rest| {
            let (id, group) = rest.split_once(" G")?;
            Some((id.trim().parse::<u32>().ok()?, group.trim().parse::<u8>().ok()?))
        });
        match header {
            Some((id, group)) => {
                finish(&mut current, &mut out)?;
                current = Some((id, group, String::new()));
            }
            None => {
                if let Some((_, _, sql)) = current.as_mut() {
                    if !line.trim_start().starts_with("--") {
                        sql.push_str(line);
                        sql.push('\n');
                    }
                }
            }
        }
    }
    finish(&mut current, &mut out)?;
    Ok(out)
}

/// Which side of the comparison an execution belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Baseline,
    Adw,
}

/// Time source; tests inject scripted readings.
pub trait Clock {
    fn now(&mut self) -> Duration;
}

/// Monotonic wall clock.
pub struct WallClock(Instant);

impl Default for WallClock {
    fn default() -> Self {
        WallClock(Instant::now())
    }
}

impl Clock for WallClock {
    fn now(&mut self) -> Duration {
        self.0.elapsed()
    }
}

/// What one execution produced, for the report's non-timing fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub rows: usize,
    pub path: String,
    /// SHA-256 of the CSV rendering of the result.
    pub digest: String,
}

pub trait QueryRunner {
    fn execute(&mut self, side: Side, q: &WorkloadQuery) -> Result<Outcome, String>;
}

/// Runs the baseline on the row store and the warehouse side through the
/// HOLAP router (cubes in the registry, else the column store).
pub struct WarehouseRunner<'a> {
    pub warehouse: &'a Warehouse,
    pub adw_path: PathChoice,
}

impl QueryRunner for WarehouseRunner<'_> {
    fn execute(&mut self, side: Side, q: &WorkloadQuery) -> Result<Outcome, String> {
        let path = match side {
            Side::Baseline => PathChoice::Baseline,
            Side::Adw => self.adw_path,
        };
        let (used, table) = self.warehouse.query(&q.sql, path).map_err(|e| e.to_string())?;
        Ok(Outcome {
            rows: table.len(),
            path: used.name().to_string(),
            digest: hex::encode(Sha256::digest(table.render(OutputFormat::Csv).as_bytes())),
        })
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("{id} failed on {side:?}: {message}")]
    QueryFailed { id: String, side: Side, message: String },
    #[error("{id} on {side:?} took {seconds:.1} s, over the {limit} s limit")]
    Timeout { id: String, side: Side, seconds: f64, limit: u64 },
    #[error("cube preparation failed: {0}")]
    Cube(#[from] CubeError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTiming {
    pub id: String,
    pub group: String,
    pub rt_baseline: f64,
    pub rt_adw: f64,
    pub times: f64,
    pub baseline: Outcome,
    pub adw: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTiming {
    pub group: String,
    pub rt_baseline: f64,
    pub rt_adw: f64,
    pub times: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scale: u64,
    pub seed: u64,
    pub repetitions: u32,
    pub queries: Vec<QueryTiming>,
    pub groups: Vec<GroupTiming>,
    /// Means over the groups.
    pub mean: GroupTiming,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `RT_baseline / RT_adw`.
pub fn times(rt_baseline: f64, rt_adw: f64) -> f64 {
    rt_baseline / rt_adw
}

/// Times every query `repetitions` times per side after one warm-up run
/// per side. Executions are strictly serial.
pub fn run_benchmark(
    runner: &mut dyn QueryRunner,
    clock: &mut dyn Clock,
    workload: &[WorkloadQuery],
    repetitions: u32,
    scale: u64,
    seed: u64,
) -> Result<BenchmarkReport, BenchError> {
    if repetitions == 0 {
        return Err(BenchError::NoRepetitions);
    }
    let mut queries = Vec::with_capacity(workload.len());
    for q in workload {
        let mut measure = |side: Side| -> Result<(f64, Outcome), BenchError> {
            let fail = |message| BenchError::QueryFailed { id: q.label(), side, message };
            let outcome = runner.execute(side, q).map_err(fail)?;
            let mut total = 0.0;
            for _ in 0..repetitions {
                let start = clock.now();
                let again = runner.execute(side, q).map_err(fail)?;
                let elapsed = clock.now().saturating_sub(start);
                if elapsed > QUERY_TIMEOUT {
                    return Err(BenchError::Timeout {
                        id: q.label(),
                        side,
                        seconds: elapsed.as_secs_f64(),
                        limit: QUERY_TIMEOUT.as_secs(),
                    });
                }
                if again != outcome {
                    return Err(fail(format!("result changed between runs: {outcome:?} vs {again:?}")));
                }
                total += elapsed.as_secs_f64();
            }
            Ok((total / repetitions as f64, outcome))
        };
        let (rt_baseline, baseline) = measure(Side::Baseline)?;
        let (rt_adw, adw) = measure(Side::Adw)?;
        queries.push(QueryTiming {
            id: q.label(),
            group: group_label(q.group),
            rt_baseline,
            rt_adw,
            times: times(rt_baseline, rt_adw),
            baseline,
            adw,
        });
    }
    Ok(assemble(scale, seed, repetitions, queries))
}

/// Group and overall rows from per-query timings.
pub fn assemble(scale: u64, seed: u64, repetitions: u32, queries: Vec<QueryTiming>) -> BenchmarkReport {
    let mut labels: Vec<&str> = queries.iter().map(|q| q.group.as_str()).collect();
    labels.dedup();
    let mut seen = BTreeSet::new();
    labels.retain(|l| seen.insert(*l));
    let groups: Vec<GroupTiming> = labels
        .iter()
        .map(|g| {
            let members: Vec<&QueryTiming> = queries.iter().filter(|q| q.group == *g).collect();
            let b = mean(&members.iter().map(|q| q.rt_baseline).collect::<Vec<_>>());
            let a = mean(&members.iter().map(|q| q.rt_adw).collect::<Vec<_>>());
            GroupTiming { group: g.to_string(), rt_baseline: b, rt_adw: a, times: times(b, a) }
        })
        .collect();
    let b = mean(&groups.iter().map(|g| g.rt_baseline).collect::<Vec<_>>());
    let a = mean(&groups.iter().map(|g| g.rt_adw).collect::<Vec<_>>());
    let mean = GroupTiming { group: "Mean".into(), rt_baseline: b, rt_adw: a, times: times(b, a) };
    BenchmarkReport { scale, seed, repetitions, queries, groups, mean }
}

/// Builds, for every workload query the advisor finds cube-shaped, the
/// smallest cube answering it, and registers it. Returns the number of
/// cubes built. Cube construction is preprocessing and is not timed.
pub fn prepare_cubes(warehouse: &mut Warehouse, workload: &[WorkloadQuery]) -> Result<usize, BenchError> {
    let mut defs = Vec::new();
    for q in workload {
        let plan = warehouse.plan(&q.sql)?;
        if let Some(def) = advise_cube(&plan, &warehouse.schema, &format!("{}_cube", q.label())) {
            let same = |d: &crate::cube::CubeDef| d.fact == def.fact && d.dimensions == def.dimensions && d.measures == def.measures;
            if !defs.iter().any(same) {
                defs.push(def);
            }
        }
    }
    for def in &defs {
        let cube = build_cube(&warehouse.columns, def)?;
        warehouse.cubes.register(cube);
    }
    Ok(defs.len())
}

/// Groups whose speedup the live check expects above 1.
pub const AGGREGATE_HEAVY: [&str; 4] = ["G1", "G2", "G7", "G8"];
/// Scale from which the live checks apply.
pub const LIVE_SCALE: u64 = 1_000_000;

/// `(description, holds)` for each live performance property.
pub fn live_properties(report: &BenchmarkReport) -> Vec<(String, bool)> {
    let mut out = Vec::new();
    for g in AGGREGATE_HEAVY {
        match report.groups.iter().find(|r| r.group == g) {
            Some(r) => out.push((format!("Times({g}) = {:.3} > 1.0", r.times), r.times > 1.0)),
            None => out.push((format!("Times({g}) missing"), false)),
        }
    }
    out.push((format!("mean Times = {:.3} > 1.5", report.mean.times), report.mean.times > 1.5));
    out
}

/// True when runtimes do not drop by more than `slack` (relative) as
/// scale grows. `runs` holds `(scale, runtime)`.
pub fn monotonic_in_scale(runs: &[(u64, f64)], slack: f64) -> bool {
    let mut sorted = runs.to_vec();
    sorted.sort_by_key(|r| r.0);
    sorted.windows(2).all(|w| w[1].1 >= w[0].1 * (1.0 - slack))
}

fn secs(x: f64) -> String {
    format!("{x:.6}")
}

/// Per-query ratios, per-group ratios, and per-group runtimes with the
/// mean row.
pub fn render_report(report: &BenchmarkReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["kind", "id", "group", "rt_baseline", "rt_adw", "times", "adw_path", "rows"]).unwrap();
            for q in &report.queries {
                let (b, a, t) = (secs(q.rt_baseline), secs(q.rt_adw), secs(q.times));
                let rows = q.baseline.rows.to_string();
                w.write_record(["query", &q.id, &q.group, &b, &a, &t, &q.adw.path, &rows]).unwrap();
            }
            for g in report.groups.iter().chain(std::iter::once(&report.mean)) {
                let (b, a, t) = (secs(g.rt_baseline), secs(g.rt_adw), secs(g.times));
                w.write_record(["group", "", &g.group, &b, &a, &t, "", ""]).unwrap();
            }
            String::from_utf8(w.into_inner().unwrap()).unwrap()
        }
        OutputFormat::Text => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "scale {}  seed {}  repetitions {}\n",
                report.scale, report.seed, report.repetitions
            );
            let _ = writeln!(out, "Per-query runtime ratio");
            let _ = writeln!(out, "{:<5} {:<5} {:>12} {:>12} {:>8}  {}", "query", "group", "baseline s", "adw s", "times", "adw path");
            for q in &report.queries {
                let _ = writeln!(
                    out,
                    "{:<5} {:<5} {:>12.6} {:>12.6} {:>8.3}  {}",
                    q.id, q.group, q.rt_baseline, q.rt_adw, q.times, q.adw.path
                );
            }
            let _ = writeln!(out, "\nPer-group runtime ratio");
            let _ = writeln!(out, "{:<5} {:>8}", "group", "times");
            for g in &report.groups {
                let _ = writeln!(out, "{:<5} {:>8.3}", g.group, g.times);
            }
            let _ = writeln!(out, "\nPer-group mean runtime");
            let _ = writeln!(out, "{:<5} {:>12} {:>12} {:>8}", "group", "baseline s", "adw s", "times");
            for g in report.groups.iter().chain(std::iter::once(&report.mean)) {
                let _ = writeln!(out, "{:<5} {:>12.6} {:>12.6} {:>8.3}", g.group, g.rt_baseline, g.rt_adw, g.times);
            }
            out
        }
    }
}

/// Parses and plans every workload query, for callers that want to fail
/// fast before timing anything.
pub fn check_workload(warehouse: &Warehouse, workload: &[WorkloadQuery]) -> Result<(), BenchError> {
    for q in workload {
        warehouse.plan(&q.sql).map_err(|e| BenchError::QueryFailed {
            id: q.label(),
            side: Side::Baseline,
            message: e.to_string(),
        })?;
    }
    Ok(())
}
