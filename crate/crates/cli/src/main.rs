//! `cropdw`: generate data, run ETL, query, build cubes and benchmark.
//!
//! Every flag can also come from a `CROPDW_*` environment variable; an
//! explicit flag wins. Exit codes: 0 success, 1 runtime failure, 2 usage or
//! query parse error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cropdw::bench::{self, BenchmarkReport};
use cropdw::cube::{self, CubeDef, DataCube, Member};
use cropdw::datagen::{generate, DefectClass, DefectLedger, DefectRates, GenConfig, RawFileSet};
use cropdw::pipeline::{PathChoice, Warehouse};
use cropdw::query::{self, ExecPath, OutputFormat, QueryError};
use cropdw::{builtin_adw_schema, ConstellationSchema};

/// Scale used when `--scale` is absent: FieldFact rows before defects.
const DEFAULT_SCALE: u64 = 10_000;

#[derive(Parser)]
#[command(name = "cropdw", version, about = "Crop data warehouse: generation, ETL, queries, cubes and benchmark")]
struct Cli {
    /// Output format: text, csv or json.
    #[arg(long, global = true, env = "CROPDW_FORMAT", default_value = "text")]
    format: OutputFormat,
    /// Generator seed.
    #[arg(long, global = true, env = "CROPDW_SEED", default_value_t = 42)]
    seed: u64,
    /// Generator scale (FieldFact rows).
    #[arg(long, global = true, env = "CROPDW_SCALE", default_value_t = DEFAULT_SCALE,
          value_parser = clap::value_parser!(u64).range(1..))]
    scale: u64,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write one CSV per table plus ledger.json.
    Generate(GenerateArgs),
    /// Extract, cleanse, transform and load a CSV directory; print the cleansing report.
    Etl(EtlArgs),
    /// Run one SQL query.
    Query(QueryArgs),
    /// Define, build, export or operate on a data cube.
    Cube(CubeCmd),
    /// Time the 50-query workload on the baseline and the warehouse.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long, env = "CROPDW_OUT")]
    out: PathBuf,
    #[arg(long, env = "CROPDW_DUPLICATE_RATE", default_value_t = 0.0, value_parser = rate)]
    duplicate_rate: f64,
    #[arg(long, env = "CROPDW_MISSING_RATE", default_value_t = 0.0, value_parser = rate)]
    missing_rate: f64,
    #[arg(long, env = "CROPDW_INCONSISTENT_RATE", default_value_t = 0.0, value_parser = rate)]
    inconsistent_rate: f64,
    #[arg(long, env = "CROPDW_WRONG_RATE", default_value_t = 0.0, value_parser = rate)]
    wrong_rate: f64,
}

fn rate(s: &str) -> Result<f64, String> {
    let r: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..=1.0).contains(&r) {
        Ok(r)
    } else {
        Err(format!("rate {r} is outside [0, 1]"))
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV directory to load; without it, tables are generated from
    /// `--seed`/`--scale`.
    #[arg(long, env = "CROPDW_DATA")]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct EtlArgs {
    /// Directory holding `<table>.csv` files (and optionally ledger.json).
    #[arg(long, env = "CROPDW_DATA")]
    data: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    /// SQL text.
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    sql: Option<String>,
    /// File holding the SQL text.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Execution path: baseline, rolap or holap (cubes when one matches, else rolap).
    #[arg(long, env = "CROPDW_PATH", default_value = "holap")]
    path: PathChoice,
    /// Print the plan instead of executing.
    #[arg(long)]
    explain: bool,
    /// Cube to register before routing, as `DIM,DIM/MEASURE,MEASURE`
    /// (e.g. `Soil.PH,FieldFact.SprayQuantity/count`). Repeatable.
    #[arg(long)]
    cube: Vec<String>,
    /// Also register the smallest cube that answers this query.
    #[arg(long)]
    advise: bool,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct CubeCmd {
    #[command(subcommand)]
    action: CubeAction,
}

#[derive(Args, Clone)]
struct CubeSpec {
    /// Fact table.
    #[arg(long, default_value = "FieldFact")]
    fact: String,
    /// Dimension as `Hierarchy[:Level]`: `Table.Column` or `Field`. Repeatable.
    #[arg(long = "dim", required = true)]
    dims: Vec<String>,
    /// Measure as `sum:Col`, `max:Col`, `count` or `count:Col`. Repeatable.
    #[arg(long = "measure", required = true)]
    measures: Vec<String>,
    #[arg(long, default_value = "cube")]
    name: String,
    /// Re-verify measure totals against the fact table after building.
    #[arg(long)]
    check: bool,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Subcommand)]
enum CubeAction {
    /// Validate a definition and print it.
    Define(CubeSpec),
    /// Build and print a summary.
    Build(CubeSpec),
    /// Build and print every cell.
    Export(CubeSpec),
    /// Build, apply one operation, and print the result.
    Op {
        #[command(subcommand)]
        op: CubeOp,
    },
}

#[derive(Subcommand)]
enum CubeOp {
    /// Move a dimension to a coarser level.
    #[command(name = "roll_up", alias = "roll-up")]
    RollUp {
        #[arg(long = "on")]
        dimension: String,
        #[arg(long)]
        level: String,
        #[command(flatten)]
        spec: CubeSpec,
    },
    /// Move a dimension to a finer level, rebuilding from the fact table.
    #[command(name = "drill_down", alias = "drill-down")]
    DrillDown {
        #[arg(long = "on")]
        dimension: String,
        #[arg(long)]
        level: String,
        #[command(flatten)]
        spec: CubeSpec,
    },
    /// Fix one dimension to a single member and drop it.
    Slice {
        #[arg(long = "on")]
        dimension: String,
        #[arg(long)]
        value: String,
        #[command(flatten)]
        spec: CubeSpec,
    },
    /// Keep cells whose members fall in the given sets.
    Dice {
        /// `DIM=v1|v2`. Repeatable.
        #[arg(long = "select", required = true)]
        selections: Vec<String>,
        #[command(flatten)]
        spec: CubeSpec,
    },
    /// Arrange cells as a grid of row and column dimensions.
    Pivot {
        #[arg(long, value_delimiter = ',', required = true)]
        rows: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        cols: Vec<String>,
        #[command(flatten)]
        spec: CubeSpec,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Timed repetitions per query and side.
    #[arg(long, env = "CROPDW_REPS", default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    reps: u32,
    /// Directory for report.txt, report.csv and report.json.
    #[arg(long, env = "CROPDW_OUT")]
    out: Option<PathBuf>,
    /// Run the warehouse side on the column store only, without cubes.
    #[arg(long)]
    no_cubes: bool,
    #[command(flatten)]
    data: DataArgs,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn runtime(message: impl ToString) -> Self {
        Failure { code: 1, message: message.to_string() }
    }

    fn usage(message: impl ToString) -> Self {
        Failure { code: 2, message: message.to_string() }
    }
}

impl From<QueryError> for Failure {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Syntax { .. } | QueryError::Bind(_) | QueryError::Type(_) | QueryError::Unsupported(_) => {
                Failure::usage(e)
            }
            _ => Failure::runtime(e),
        }
    }
}

type Outcome = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Generate(a) => cmd_generate(&cli, a),
        Cmd::Etl(a) => cmd_etl(&cli, a),
        Cmd::Query(a) => cmd_query(&cli, a),
        Cmd::Cube(a) => cmd_cube(&cli, a),
        Cmd::Bench(a) => cmd_bench(&cli, a),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_generate(cli: &Cli, a: &GenerateArgs) -> Outcome {
    let rates = DefectRates {
        duplicate: a.duplicate_rate,
        missing: a.missing_rate,
        inconsistent: a.inconsistent_rate,
        wrong: a.wrong_rate,
    };
    let cfg = GenConfig::new(cli.seed, cli.scale).with_rates(rates);
    cfg.validate().map_err(Failure::usage)?;
    let (files, ledger) = generate(&builtin_adw_schema(), &cfg).map_err(Failure::runtime)?;
    files.write_dir(&a.out).map_err(Failure::runtime)?;
    let ledger_path = a.out.join("ledger.json");
    std::fs::write(&ledger_path, ledger.to_json()).map_err(|e| Failure::runtime(format!("{}: {e}", ledger_path.display())))?;
    Ok(match cli.format {
        OutputFormat::Json => ledger.to_json() + "\n",
        _ => format!(
            "wrote {} tables and ledger.json to {} ({} injected defects)\n",
            files.files.len(),
            a.out.display(),
            ledger.total()
        ),
    })
}

fn load_files(dir: &Path, schema: &ConstellationSchema) -> Result<RawFileSet, Failure> {
    RawFileSet::read_dir(dir, schema).map_err(Failure::runtime)
}

fn warehouse(cli: &Cli, data: &DataArgs) -> Result<Warehouse, Failure> {
    let schema = builtin_adw_schema();
    match &data.data {
        Some(dir) => {
            let files = load_files(dir, &schema)?;
            Warehouse::from_files(schema, &files).map_err(Failure::runtime)
        }
        None => {
            let cfg = GenConfig::new(cli.seed, cli.scale);
            Warehouse::generated(schema, &cfg).map(|(w, _)| w).map_err(Failure::runtime)
        }
    }
}

fn cmd_etl(cli: &Cli, a: &EtlArgs) -> Outcome {
    let schema = builtin_adw_schema();
    let files = load_files(&a.data, &schema)?;
    let ledger = match std::fs::read_to_string(a.data.join("ledger.json")) {
        Ok(text) => Some(DefectLedger::from_json(&text).map_err(Failure::runtime)?),
        Err(_) => None,
    };
    let wh = Warehouse::from_files(schema, &files).map_err(Failure::runtime)?;
    let report = &wh.cleansing;
    Ok(match cli.format {
        OutputFormat::Json => report.to_json() + "\n",
        OutputFormat::Csv => {
            let mut out = String::from("table,class,detected,rejected,corrected,injected\n");
            for (table, t) in &report.tables {
                for (class, c) in &t.classes {
                    let injected = ledger.as_ref().map_or(String::new(), |l| l.count(table, *class).to_string());
                    out += &format!("{table},{},{},{},{},{injected}\n", class.name(), c.detected, c.rejected, c.corrected);
                }
            }
            out
        }
        OutputFormat::Text => {
            let mut out = format!("{:<22} {:>8} {:>8}", "table", "input", "output");
            for c in DefectClass::ALL {
                out += &format!(" {:>13}", c.name());
            }
            out.push('\n');
            let mut mismatches = 0;
            for (table, t) in &report.tables {
                out += &format!("{table:<22} {:>8} {:>8}", t.input_rows, t.output_rows);
                for c in DefectClass::ALL {
                    let cell = match &ledger {
                        Some(l) => {
                            let injected = l.count(table, c);
                            if injected != t.detected(c) {
                                mismatches += 1;
                            }
                            format!("{}/{}", t.detected(c), injected)
                        }
                        None => t.detected(c).to_string(),
                    };
                    out += &format!(" {cell:>13}");
                }
                out.push('\n');
            }
            out += &format!("detected {} defects", report.total_detected());
            if let Some(l) = &ledger {
                out += &format!(" (ledger: {} injected; cells show detected/injected; {mismatches} mismatching cells)", l.total());
            }
            out.push('\n');
            out
        }
    })
}

/// Parses `DIM,DIM/MEASURE,MEASURE` into a cube definition.
fn parse_cube_flag(schema: &ConstellationSchema, spec: &str, name: &str) -> Result<CubeDef, Failure> {
    let (dims, measures) = spec
        .split_once('/')
        .ok_or_else(|| Failure::usage(format!("cube '{spec}' is not DIMS/MEASURES")))?;
    let dims: Vec<String> = dims.split(',').map(str::to_string).collect();
    let measures: Vec<String> = measures.split(',').map(str::to_string).collect();
    cube_def(schema, "FieldFact", &dims, &measures, name)
}

fn cube_def(
    schema: &ConstellationSchema,
    fact: &str,
    dims: &[String],
    measures: &[String],
    name: &str,
) -> Result<CubeDef, Failure> {
    let mut ds = Vec::new();
    for d in dims {
        ds.push(CubeDef::parse_dimension(schema, d.trim()).map_err(Failure::usage)?);
    }
    let mut ms = Vec::new();
    for m in measures {
        ms.push(CubeDef::parse_measure(m.trim()).map_err(Failure::usage)?);
    }
    let ds_ref = ds.iter().map(|(h, l)| (h.clone(), l.as_str())).collect();
    let ms_ref: Vec<_> = ms.iter().map(|(a, c)| (*a, c.as_deref())).collect();
    CubeDef::new(schema, name, fact, ds_ref, &ms_ref).map_err(Failure::usage)
}

fn cmd_query(cli: &Cli, a: &QueryArgs) -> Outcome {
    let sql = match (&a.sql, &a.file) {
        (Some(s), _) => s.clone(),
        (None, Some(f)) => std::fs::read_to_string(f).map_err(|e| Failure::runtime(format!("{}: {e}", f.display())))?,
        (None, None) => return Err(Failure::usage("give --sql or --file")),
    };
    // Parse and bind before touching any data so bad queries fail fast.
    let schema = builtin_adw_schema();
    let plan = query::plan(&query::parse(&sql)?, &schema)?;
    let mut wh = warehouse(cli, &a.data)?;
    if a.path == PathChoice::Holap {
        for (i, spec) in a.cube.iter().enumerate() {
            let def = parse_cube_flag(&wh.schema, spec, &format!("cube{}", i + 1))?;
            wh.cubes.register(cube::build_cube(&wh.columns, &def).map_err(Failure::runtime)?);
        }
        if a.advise {
            if let Some(def) = query::advise_cube(&plan, &wh.schema, "advised") {
                wh.cubes.register(cube::build_cube(&wh.columns, &def).map_err(Failure::runtime)?);
            }
        }
    }
    if a.explain {
        let path = match a.path {
            PathChoice::Baseline => ExecPath::Baseline,
            PathChoice::Rolap => ExecPath::Rolap,
            PathChoice::Holap => query::holap_path(&plan, &wh.schema, &wh.cubes),
        };
        return Ok(query::explain(&plan, path));
    }
    let (_, table) = wh.run(&plan, a.path)?;
    Ok(table.render(cli.format))
}

fn build(cli: &Cli, spec: &CubeSpec) -> Result<(Warehouse, DataCube, String), Failure> {
    let schema = builtin_adw_schema();
    let def = cube_def(&schema, &spec.fact, &spec.dims, &spec.measures, &spec.name)?;
    let wh = warehouse(cli, &spec.data)?;
    let cube = cube::build_cube(&wh.columns, &def).map_err(Failure::runtime)?;
    let mut notes = String::new();
    if spec.check {
        let lines = cube::conservation(&cube, &wh.rows).map_err(Failure::runtime)?;
        for l in &lines {
            notes += &format!(
                "conservation {}: cube {} oracle {} {}\n",
                l.measure,
                l.cube,
                l.oracle,
                if l.holds { "ok" } else { "MISMATCH" }
            );
        }
        if lines.iter().any(|l| !l.holds) {
            return Err(Failure::runtime(format!("conservation check failed\n{notes}")));
        }
    }
    Ok((wh, cube, notes))
}

fn render_cube(cube: &DataCube, format: OutputFormat) -> String {
    let headers: Vec<String> = cube
        .def
        .dimensions
        .iter()
        .map(|d| format!("{}:{}", d.name(), d.level_name()))
        .chain(cube.def.measures.iter().map(|m| m.name()))
        .collect();
    let rows = cube
        .rows()
        .into_iter()
        .map(|(k, ms)| k.iter().map(|m| cropdw::Value::text(m.to_string())).chain(ms).collect())
        .collect();
    match format {
        OutputFormat::Json => cube.to_json() + "\n",
        f => query::ResultTable { headers, rows, ordered: true }.render(f),
    }
}

fn cmd_cube(cli: &Cli, a: &CubeCmd) -> Outcome {
    match &a.action {
        CubeAction::Define(spec) => {
            let def = cube_def(&builtin_adw_schema(), &spec.fact, &spec.dims, &spec.measures, &spec.name)?;
            let mut out = format!("cube {} over {}\n", def.name, def.fact);
            for d in &def.dimensions {
                let levels: Vec<&str> = d.hierarchy.levels.iter().map(|l| l.name.as_str()).collect();
                out += &format!("  dimension {} at {} (levels {})\n", d.name(), d.level_name(), levels.join(" > "));
            }
            for m in &def.measures {
                out += &format!("  measure {}\n", m.name());
            }
            Ok(out)
        }
        CubeAction::Build(spec) => {
            let (_, cube, notes) = build(cli, spec)?;
            let unknown: u64 = cube.unresolved.iter().sum();
            Ok(format!(
                "built {}: {} cells from {} fact rows ({unknown} unresolved keys)\n{notes}",
                cube.def.name,
                cube.len(),
                cube.source_rows
            ))
        }
        CubeAction::Export(spec) => {
            let (_, cube, notes) = build(cli, spec)?;
            Ok(notes + &render_cube(&cube, cli.format))
        }
        CubeAction::Op { op } => cmd_cube_op(cli, op),
    }
}

fn cmd_cube_op(cli: &Cli, op: &CubeOp) -> Outcome {
    let spec = match op {
        CubeOp::RollUp { spec, .. }
        | CubeOp::DrillDown { spec, .. }
        | CubeOp::Slice { spec, .. }
        | CubeOp::Dice { spec, .. }
        | CubeOp::Pivot { spec, .. } => spec,
    };
    let (wh, c, notes) = build(cli, spec)?;
    let result = match op {
        CubeOp::RollUp { dimension, level, .. } => cube::roll_up(&c, dimension, level),
        CubeOp::DrillDown { dimension, level, .. } => cube::drill_down(&c, dimension, level, &wh.columns),
        CubeOp::Slice { dimension, value, .. } => {
            let d = c.def.dimension_index(dimension).map_err(Failure::usage)?;
            cube::slice(&c, dimension, &c.member_named(d, value))
        }
        CubeOp::Dice { selections, .. } => {
            let mut sets: Vec<(&str, Vec<Member>)> = Vec::new();
            for s in selections {
                let (dim, values) =
                    s.split_once('=').ok_or_else(|| Failure::usage(format!("selection '{s}' is not DIM=v1|v2")))?;
                let d = c.def.dimension_index(dim).map_err(Failure::usage)?;
                sets.push((dim, values.split('|').map(|v| c.member_named(d, v)).collect()));
            }
            cube::dice(&c, &sets)
        }
        CubeOp::Pivot { rows, cols, .. } => {
            let r: Vec<&str> = rows.iter().map(String::as_str).collect();
            let k: Vec<&str> = cols.iter().map(String::as_str).collect();
            let p = cube::pivot(&c, &r, &k).map_err(Failure::usage)?;
            return Ok(notes + &render_pivot(&p, &c, cli.format));
        }
    };
    let cube = result.map_err(Failure::usage)?;
    Ok(notes + &render_cube(&cube, cli.format))
}

fn render_pivot(p: &cube::PivotTable, c: &DataCube, format: OutputFormat) -> String {
    let join = |k: &[Member]| k.iter().map(Member::to_string).collect::<Vec<_>>().join(" / ");
    let measures: Vec<String> = c.def.measures.iter().map(|m| m.name()).collect();
    let mut headers = vec![p.row_dims.join(" / ")];
    headers.extend(p.col_keys.iter().map(|k| join(k)));
    let rows = p
        .row_keys
        .iter()
        .zip(&p.cells)
        .map(|(rk, cells)| {
            let mut row = vec![cropdw::Value::text(join(rk))];
            row.extend(cells.iter().map(|cell| match cell {
                None => cropdw::Value::Null,
                Some(vs) if vs.len() == 1 => vs[0].clone(),
                Some(vs) => cropdw::Value::text(
                    vs.iter().zip(&measures).map(|(v, m)| format!("{m}={v}")).collect::<Vec<_>>().join("; "),
                ),
            }));
            row
        })
        .collect();
    query::ResultTable { headers, rows, ordered: true }.render(format)
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> Outcome {
    let mut wh = warehouse(cli, &a.data)?;
    let workload = bench::builtin_workload();
    bench::check_workload(&wh, &workload).map_err(Failure::runtime)?;
    let adw_path = if a.no_cubes {
        PathChoice::Rolap
    } else {
        bench::prepare_cubes(&mut wh, &workload).map_err(Failure::runtime)?;
        PathChoice::Holap
    };
    let mut runner = bench::WarehouseRunner { warehouse: &wh, adw_path };
    let mut clock = bench::WallClock::default();
    let report = bench::run_benchmark(&mut runner, &mut clock, &workload, a.reps, cli.scale, cli.seed)
        .map_err(Failure::runtime)?;
    if let Some(dir) = &a.out {
        write_reports(dir, &report)?;
    }
    let mut out = bench::render_report(&report, cli.format);
    let live = bench::live_properties(&report);
    let enforced = report.scale >= bench::LIVE_SCALE;
    if cli.format == OutputFormat::Text {
        out += &format!(
            "\nLive properties ({}):\n",
            if enforced { "enforced" } else { "informational below 10^6 rows" }
        );
        for (what, holds) in &live {
            out += &format!("  [{}] {what}\n", if *holds { "pass" } else { "FAIL" });
        }
    }
    if enforced && live.iter().any(|(_, h)| !h) {
        print!("{out}");
        return Err(Failure::runtime("a live performance property failed"));
    }
    Ok(out)
}

fn write_reports(dir: &Path, report: &BenchmarkReport) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
    for (ext, f) in [("txt", OutputFormat::Text), ("csv", OutputFormat::Csv), ("json", OutputFormat::Json)] {
        let path = dir.join(format!("report.{ext}"));
        std::fs::write(&path, bench::render_report(report, f))
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
