//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned.
//!
//! Runs as a plain binary so the lines always reach stdout. It exits
//! non-zero when a criterion fails unexpectedly; criteria listed in
//! `KNOWN_RED` print FAIL with their analysis and do not fail the run.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use common::cubes::{check_family_member, family, Tally};
use cropdw::bench::{
    assemble, builtin_workload, decision_examples, live_properties, monotonic_in_scale, prepare_cubes,
    representative_queries, run_benchmark, times, Clock, Outcome, QueryRunner, QueryTiming, Side, WallClock,
    WarehouseRunner, WorkloadQuery,
};
use cropdw::datagen::{generate, DefectClass, DefectRates, GenConfig, RawFileSet};
use cropdw::pipeline::{PathChoice, Warehouse};
use cropdw::query::OutputFormat;
use cropdw::{builtin_adw_schema, validate_schema};

/// Criteria expected to print FAIL, with the reason.
const KNOWN_RED: &[(u32, &str)] = &[(
    6,
    "687.8 / 216.1 = 3.1828, outside 3.19 +/- 0.005. The ten per-group runtimes plotted with those \
     means average to 687.84 s and 215.96 s (the second does not round to the stated 216.1), and \
     their ratio 3.1850 is inside the tolerance at its lower edge. The stated 3.19 matches the \
     ratio of the group-level means, not the ratio of the two stated means. The formulas \
     themselves are exact under the scripted clock.",
)];

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn verdict(id: u32, name: &'static str, pass: bool, detail: String) -> Verdict {
    say(&format!("{} {id}. {name}: {detail}", if pass { "PASS" } else { "FAIL" }));
    Verdict { id, name, pass, detail }
}

// ---------- 1 ----------

/// Attributes by table as the catalog must name them. Table 1 lists
/// `Name` and `GroupName` unprefixed for some tables; the catalog prefixes
/// them the way the decision queries spell them (`FA.FarmerName`,
/// `BU.BusinessName`, `FE.FertiliserName`, `fertiliserGroupName`).
const GOLDEN: &[(&str, &str)] = &[
    ("Business", "BusinessID, BusinessName, Address, Phone, Mobile, Email"),
    ("CropState", "CropStateID, CropID, StageScale, Height, MajorStage, MinStage, MaxStage, Diameter, MinHeight, MaxHeight, CropCoveragePercent"),
    ("Farmer", "FarmerID, FarmerName, Address, Phone, Mobile, Email"),
    ("Fertiliser", "FertiliserID, FertiliserName, Unit, Status, Description, FertiliserGroupName"),
    ("Inspection", "InspectionID, CropID, Description, ProblemType, Severity, ProblemNotes, AreaValue, AreaUnit, Order, Date, Notes, GrowthStage"),
    ("Nutrient", "NutrientID, NutrientName, Date, Quantity"),
    ("OperationTime", "OperationTimeID, StartDate, EndDate, Season"),
    ("Plan", "PlanID, PName, RegisNo, ProductName, ProductRate, Date, WaterVolume"),
    ("Product", "ProductID, ProductName, GroupName"),
    ("Site", "SiteID, FarmerID, SiteName, Reference, Country, Address, GPS, CreatedBy"),
    ("Spray", "SprayID, SprayProductName, ProductRate, Area, Date, WaterVol, ConfDuration, ConfWindSPeed, ConfDirection, ConfHumidity, ConfTemp, ActivityType"),
    ("Supplier", "SupplierID, SupplierName, ContactName, Address, Phone, Mobile, Email"),
    ("Task", "TaskID, Desc, Status, TaskDate, TaskInterval, CompDate, AppCode"),
    ("TransTime", "TransTimeID, OrderDate, DeliverDate, ReceivedDate, Season"),
    ("Treatment", "TreatmentID, TreatmentName, FormType, LotCode, Rate, ApplCode, LevlNo, Type, Description, ApplDesc, TreatmentComment"),
    ("WeatherReading", "WeatherReadingID, WeatherStationID, ReadingDate, ReadingTime, AirTemperature, Rainfall, SPLite, RelativeHumidity, WindSpeed, WindDirection, SoilTemperature, LeafWetness"),
    ("WeatherStation", "WeatherStationID, StationName, Latitude, Longitude, Region"),
    ("Field", "FieldID, FieldName, FieldArea, FieldGPS, FieldGeometric, SiteID"),
    ("Crop", "CropID, CropName, EstYield, BbchScale, HarvestEquipment, HarvestEquipmentWeight"),
    ("Soil", "SoilID, PH, Nitrogen, Phosphorus, Potassium, Magnesium, Calcium, TextureLabel, Silt, Clay, Sand, CEC, OrganicMatter, RecommendedNutrient, TestingDate"),
    ("Pest", "PestID, CommonName, PestType, Description, Density, Coverage, DetectedDate"),
    ("FieldFact", "Yield, WaterVolumn, FertiliserQuantity, NutrientQuantity, SprayQuantity, PestNumber, FieldID, CropID, SoildID, PestID, FertiliserID, NutrientID, SprayID, TreatmentID, OperationTimeID"),
    ("OrderFact", "Quantity, Price"),
    ("SaleFact", "Quantity, Price, SaleDate, Unit, FarmerID, BusinessID, CropID"),
];

fn schema_fidelity() -> Verdict {
    let s = builtin_adw_schema();
    let facts = s.fact_tables().count();
    let dims = s.dimension_tables().count();
    let violations = validate_schema(&s);
    let mut missing = Vec::new();
    let mut total = 0;
    for (table, attrs) in GOLDEN {
        for a in attrs.split(", ") {
            total += 1;
            let present = s.tables.get(*table).is_some_and(|t| t.columns.iter().any(|c| c.name == a));
            if !present {
                missing.push(format!("{table}.{a}"));
            }
        }
    }
    let pass = facts == 3 && dims == 21 && violations.is_empty() && missing.is_empty() && GOLDEN.len() == 24;
    verdict(
        1,
        "schema fidelity",
        pass,
        format!(
            "{facts} fact / {dims} dimension tables, {}/{total} golden attributes, {} violations{}",
            total - missing.len(),
            violations.len(),
            if missing.is_empty() { String::new() } else { format!(", missing {missing:?}") }
        ),
    )
}

// ---------- 2 ----------

fn corpus_executability(wh: &Warehouse, built_in: Duration) -> Verdict {
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut runs = 0;
    let corpus: Vec<(String, String, bool)> = representative_queries()
        .into_iter()
        .map(|q| (q.label(), q.sql, false))
        .chain(decision_examples().into_iter().map(|(n, s)| (n, s, true)))
        .collect();
    for (name, sql, must_have_rows) in &corpus {
        for path in [PathChoice::Baseline, PathChoice::Rolap, PathChoice::Holap] {
            runs += 1;
            match wh.query(sql, path) {
                Ok((_, t)) if *must_have_rows && t.is_empty() => problems.push(format!("{name} empty on {path:?}")),
                Ok(_) => {}
                Err(e) => problems.push(format!("{name} on {path:?}: {e}")),
            }
        }
    }
    let elapsed = built_in + start.elapsed();
    let pass = problems.is_empty() && corpus.len() == 14 && elapsed < Duration::from_secs(60);
    verdict(
        2,
        "corpus executability",
        pass,
        format!(
            "{} statements x 3 paths = {runs} runs, {} problems, {:.1} s including data load (< 60 s){}",
            corpus.len(),
            problems.len(),
            elapsed.as_secs_f64(),
            if problems.is_empty() { String::new() } else { format!(": {problems:?}") }
        ),
    )
}

// ---------- 3 ----------

fn oracle_equivalence(wh: &Warehouse) -> Verdict {
    let mut failures = Vec::new();
    let mut molap = 0;
    let workload = builtin_workload();
    for q in &workload {
        for cubes in [common::advised_registry(wh, &q.sql), cropdw::cube::CubeRegistry::new()] {
            match common::check_all_paths(wh, &q.sql, &cubes) {
                Ok(p) => molap += (p == cropdw::query::ExecPath::Molap) as usize,
                Err(e) => failures.push(format!("{}: {e}", q.label())),
            }
        }
    }
    let mut fuzz = common::Fuzzer::new(wh, 7);
    for i in 0..200 {
        let sql = fuzz.query();
        let cubes = common::advised_registry(wh, &sql);
        match common::check_all_paths(wh, &sql, &cubes) {
            Ok(p) => molap += (p == cropdw::query::ExecPath::Molap) as usize,
            Err(e) => failures.push(format!("fuzz #{i}: {e}")),
        }
    }
    verdict(
        3,
        "oracle equivalence",
        failures.is_empty() && workload.len() == 50,
        format!(
            "{} workload (with and without cubes) + 200 fuzzed queries vs baseline on rolap/1, rolap/4, holap; \
             {molap} answered from cubes; {} mismatches{}",
            workload.len(),
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

// ---------- 4 ----------

fn cube_conservation() -> Verdict {
    let mut total = Tally::default();
    let mut failures = Vec::new();
    for scale in [1_000, 100_000] {
        let wh = Warehouse::generated(builtin_adw_schema(), &GenConfig::new(common::SEED, scale)).unwrap().0;
        for def in family(&wh.schema) {
            match check_family_member(&wh, &def) {
                Ok(t) => total += t,
                Err(e) => failures.push(format!("scale {scale}: {e}")),
            }
        }
    }
    verdict(
        4,
        "cube conservation",
        failures.is_empty() && total.cubes == 10,
        format!(
            "scales 1e3 and 1e5: {} cubes, {} roll-ups, {} slice partitions, {} comparisons \
             (ints exact, floats 1e-9 relative, max coherence per rolled cell); {} failures{}",
            total.cubes,
            total.roll_ups,
            total.partitions,
            total.comparisons,
            failures.len(),
            failures.first().map(|f| format!(": {f}")).unwrap_or_default()
        ),
    )
}

// ---------- 5 ----------

fn defect_recovery() -> Verdict {
    let rates = DefectRates { duplicate: 0.02, missing: 0.01, inconsistent: 0.01, wrong: 0.01 };
    let cfg = GenConfig::new(common::SEED, common::SCALE).with_rates(rates);
    let (wh, ledger) = Warehouse::generated(builtin_adw_schema(), &cfg).unwrap();
    let mut mismatches = Vec::new();
    let mut compared = 0;
    let mut injected = 0;
    for table in wh.schema.tables.keys() {
        for class in DefectClass::ALL {
            compared += 1;
            let (want, got) = (ledger.count(table, class), wh.cleansing.detected(table, class));
            injected += want;
            if want != got {
                mismatches.push(format!("{table}/{}: ledger {want}, detected {got}", class.name()));
            }
        }
    }
    verdict(
        5,
        "ETL defect recovery",
        mismatches.is_empty() && injected > 0,
        format!(
            "rates 2%/1%/1%/1%: {injected} injected, {} detected, {compared} table/class pairs, {} mismatches{}",
            wh.cleansing.total_detected(),
            mismatches.len(),
            if mismatches.is_empty() { String::new() } else { format!(": {mismatches:?}") }
        ),
    )
}

// ---------- 6 ----------

/// Advances by the next scripted duration on every stop reading.
struct Scripted {
    t: Duration,
    steps: std::vec::IntoIter<f64>,
    reading: usize,
}

impl Clock for Scripted {
    fn now(&mut self) -> Duration {
        if self.reading % 2 == 1 {
            self.t += Duration::from_secs_f64(self.steps.next().expect("script long enough"));
        }
        self.reading += 1;
        self.t
    }
}

struct Constant;

impl QueryRunner for Constant {
    fn execute(&mut self, _: Side, _: &WorkloadQuery) -> Result<Outcome, String> {
        Ok(Outcome { rows: 0, path: String::new(), digest: String::new() })
    }
}

fn benchmark_formulas() -> (Verdict, Verdict) {
    // Two repetitions per side; durations are dyadic so every mean is exact.
    #[rustfmt::skip]
    let script = vec![
        4.0, 6.0, 1.0, 1.5,   // q1 G1: 5 / 1.25
        3.0, 3.0, 2.0, 2.0,   // q2 G1: 3 / 2
        8.0, 8.5, 0.5, 0.25,  // q3 G2: 8.25 / 0.375
        0.75, 1.25, 2.0, 2.0, // q4 G2: 1 / 2
    ];
    let wq = |id, group| WorkloadQuery { id, group, sql: String::new(), commands: Default::default() };
    let workload = [wq(1, 1), wq(2, 1), wq(3, 2), wq(4, 2)];
    let mut clock = Scripted { t: Duration::ZERO, steps: script.into_iter(), reading: 0 };
    let r = run_benchmark(&mut Constant, &mut clock, &workload, 2, 1, 1).unwrap();
    let per_query: Vec<(f64, f64, f64)> = r.queries.iter().map(|q| (q.rt_baseline, q.rt_adw, q.times)).collect();
    let per_group: Vec<(f64, f64, f64)> = r.groups.iter().map(|g| (g.rt_baseline, g.rt_adw, g.times)).collect();
    let formulas = per_query == [(5.0, 1.25, 4.0), (3.0, 2.0, 1.5), (8.25, 0.375, 22.0), (1.0, 2.0, 0.5)]
        && per_group == [(4.0, 1.625, 32.0 / 13.0), (4.625, 1.1875, 74.0 / 19.0)]
        && (r.mean.rt_baseline, r.mean.rt_adw, r.mean.times) == (4.3125, 1.40625, 46.0 / 15.0);

    let stated = times(687.8, 216.1);
    let pass = formulas && (stated - 3.19).abs() <= 0.005;
    let main = verdict(
        6,
        "benchmark formulas",
        pass,
        format!(
            "scripted clock: per-query, per-group and mean rows exact = {formulas}; Times(687.8 s, 216.1 s) = {stated:.4} \
             (want 3.19 +/- 0.005)"
        ),
    );

    // The per-group runtimes and ratios plotted alongside the means.
    let groups: [(f64, f64, f64); 10] = [
        (1081.5, 173.4, 6.24),
        (599.7, 205.2, 2.92),
        (111.7, 91.2, 1.22),
        (790.4, 276.4, 2.86),
        (776.6, 342.8, 2.27),
        (1109.2, 238.0, 4.66),
        (483.0, 143.7, 3.36),
        (1057.3, 228.3, 4.63),
        (297.9, 94.2, 3.16),
        (571.1, 366.4, 1.56),
    ];
    let timings: Vec<QueryTiming> = groups
        .iter()
        .enumerate()
        .map(|(i, &(b, a, _))| QueryTiming {
            id: format!("q{}", i * 5 + 1),
            group: format!("G{}", i + 1),
            rt_baseline: b,
            rt_adw: a,
            times: times(b, a),
            baseline: Outcome { rows: 0, path: String::new(), digest: String::new() },
            adw: Outcome { rows: 0, path: String::new(), digest: String::new() },
        })
        .collect();
    let report = assemble(1, 1, 3, timings);
    let ratios_ok = report.groups.iter().zip(&groups).all(|(g, &(_, _, t))| (g.times - t).abs() <= 0.005);
    let mean_ok = (report.mean.times - 3.19).abs() <= 0.005;
    let supplementary = verdict(
        6,
        "benchmark formulas, from per-group runtimes",
        ratios_ok && mean_ok,
        format!(
            "10 group ratios reproduce the plotted values to 0.005 = {ratios_ok}; mean runtimes {:.2} s / {:.2} s; \
             Times(mean) = {:.4} (want 3.19 +/- 0.005)",
            report.mean.rt_baseline, report.mean.rt_adw, report.mean.times
        ),
    );
    (main, supplementary)
}

// ---------- 7 ----------

fn bench_at(scale: u64, reps: u32) -> (cropdw::bench::BenchmarkReport, Duration, Duration) {
    let load = Instant::now();
    let mut wh = Warehouse::generated(builtin_adw_schema(), &GenConfig::new(common::SEED, scale)).unwrap().0;
    let workload = builtin_workload();
    prepare_cubes(&mut wh, &workload).unwrap();
    let load = load.elapsed();
    let start = Instant::now();
    let mut runner = WarehouseRunner { warehouse: &wh, adw_path: PathChoice::Holap };
    let report = run_benchmark(&mut runner, &mut WallClock::default(), &workload, reps, scale, common::SEED).unwrap();
    (report, load, start.elapsed())
}

fn live_performance() -> (Verdict, Verdict) {
    let mut g1 = Vec::new();
    for scale in [10_000, 100_000] {
        let (r, _, _) = bench_at(scale, 3);
        g1.push((scale, r));
    }
    let (report, load, run) = bench_at(1_000_000, 3);
    let props = live_properties(&report);
    let within = load + run < Duration::from_secs(15 * 60);
    let pass = props.iter().all(|(_, ok)| *ok) && within;
    let mut groups = report.groups.iter().map(|g| format!("{} {:.2}", g.group, g.times)).collect::<Vec<_>>();
    groups.push(format!("mean {:.2}", report.mean.times));
    let main = verdict(
        7,
        "live performance direction",
        pass,
        format!(
            "1e6 FieldFact rows, 3 reps: {}; Times by group [{}]; load+cubes {:.0} s, benchmark {:.0} s (< 900 s)",
            props.iter().map(|(d, ok)| format!("{d} {}", if *ok { "ok" } else { "NOT MET" })).collect::<Vec<_>>().join(", "),
            groups.join(", "),
            load.as_secs_f64(),
            run.as_secs_f64()
        ),
    );

    // Where-only group: both sides scan the whole fact table.
    g1.push((1_000_000, report));
    let mut monotone = true;
    let mut shown = Vec::new();
    for pick in [|g: &cropdw::bench::GroupTiming| g.rt_baseline, |g: &cropdw::bench::GroupTiming| g.rt_adw] {
        let runs: Vec<(u64, f64)> =
            g1.iter().map(|(s, r)| (*s, pick(r.groups.iter().find(|g| g.group == "G1").unwrap()))).collect();
        monotone &= monotonic_in_scale(&runs, 0.2);
        shown.push(runs.iter().map(|(s, t)| format!("{s}:{:.4}s", t)).collect::<Vec<_>>().join(" "));
    }
    let scale = verdict(
        7,
        "runtime grows with scale",
        monotone,
        format!("G1 baseline [{}], adw [{}], 20% slack", shown[0], shown[1]),
    );
    (main, scale)
}

// ---------- 8 ----------

struct PipelineRun {
    files: BTreeMap<String, Vec<u8>>,
    ledger: String,
    cleansing: String,
    outcomes: Vec<(String, String, Outcome, Outcome)>,
    outputs: Vec<String>,
}

fn pipeline(dir: &std::path::Path) -> PipelineRun {
    let schema = builtin_adw_schema();
    let rates = DefectRates { duplicate: 0.02, missing: 0.01, inconsistent: 0.01, wrong: 0.01 };
    let (files, ledger) = generate(&schema, &GenConfig::new(common::SEED, common::SCALE).with_rates(rates)).unwrap();
    files.write_dir(dir).unwrap();
    let files = RawFileSet::read_dir(dir, &schema).unwrap();
    let mut wh = Warehouse::from_files(schema, &files).unwrap();
    let workload = builtin_workload();
    prepare_cubes(&mut wh, &workload).unwrap();
    let mut runner = WarehouseRunner { warehouse: &wh, adw_path: PathChoice::Holap };
    let report = run_benchmark(&mut runner, &mut WallClock::default(), &workload, 1, common::SCALE, common::SEED).unwrap();
    let outputs = decision_examples()
        .iter()
        .map(|(_, sql)| sql)
        .chain(workload.iter().map(|q| &q.sql))
        .map(|sql| wh.query(sql, PathChoice::Holap).unwrap().1.render(OutputFormat::Csv))
        .collect();
    PipelineRun {
        files: files.files,
        ledger: ledger.to_json(),
        cleansing: wh.cleansing.to_json(),
        outcomes: report.queries.into_iter().map(|q| (q.id, q.group, q.baseline, q.adw)).collect(),
        outputs,
    }
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (x, y) = (pipeline(a.path()), pipeline(b.path()));
    let checks = [
        ("raw files", x.files == y.files),
        ("ledger", x.ledger == y.ledger),
        ("cleansing report", x.cleansing == y.cleansing),
        ("report non-timing fields", x.outcomes == y.outcomes && x.outcomes.len() == 50),
        ("query outputs", x.outputs == y.outputs),
    ];
    let bytes: usize = x.outputs.iter().map(String::len).sum();
    verdict(
        8,
        "determinism",
        checks.iter().all(|c| c.1),
        format!(
            "two generate -> files -> etl -> bench runs, seed 42: {}; {} outputs, {bytes} bytes compared",
            checks.iter().map(|(n, ok)| format!("{n} {}", if *ok { "identical" } else { "DIFFER" })).collect::<Vec<_>>().join(", "),
            x.outputs.len()
        ),
    )
}

fn main() {
    say("acceptance criteria");
    let mut verdicts = vec![schema_fidelity()];
    let load = Instant::now();
    let wh = common::warehouse();
    let built = load.elapsed();
    verdicts.push(corpus_executability(wh, built));
    verdicts.push(oracle_equivalence(wh));
    verdicts.push(cube_conservation());
    verdicts.push(defect_recovery());
    let (six, six_b) = benchmark_formulas();
    verdicts.push(six);
    verdicts.push(six_b);
    let (seven, seven_b) = live_performance();
    verdicts.push(seven);
    verdicts.push(seven_b);
    verdicts.push(determinism());

    let mut unexpected = Vec::new();
    for v in &verdicts {
        let known = KNOWN_RED.iter().find(|(id, _)| *id == v.id && v.name == "benchmark formulas");
        match (v.pass, known) {
            (false, Some((_, why))) => say(&format!("note: criterion {} is red as analysed: {why}", v.id)),
            (false, None) => unexpected.push(format!("{}. {}: {}", v.id, v.name, v.detail)),
            (true, _) => {}
        }
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    say(&format!("{passed}/{} lines pass, {} unexpected failures", verdicts.len(), unexpected.len()));
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
