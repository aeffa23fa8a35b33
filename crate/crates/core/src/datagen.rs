//! Seeded synthetic source files shaped like the multi-table agronomy
//! datasets, with controlled injection of the four defect classes.
//!
//! Every table gets its own ChaCha stream derived from the seed and the table
//! name, so tables can be generated in parallel and the output does not
//! depend on scheduling.
//!
//! Row counts: each fact table has a base row count (`FieldFact` = scale,
//! `OrderFact` and `SaleFact` = scale / 10); each dimension table has
//! `max(min, scale / divisor)` rows, see [`DIMENSION_CARDINALITY`].
//!
//! Defects are injected into fact tables only, as additional rows with fresh
//! primary keys, so rejecting them never orphans another row. For a class
//! with rate `r` a table with `n` base rows receives `floor(r * n + 1e-9)`
//! defect rows (the epsilon absorbs binary representation error, e.g.
//! `0.29 * 100`).

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{ConstellationSchema, TableDef};
use crate::value::{DataType, GeoPoint, Value};

/// `(table, divisor, minimum)`: a dimension has `max(minimum, scale / divisor)` rows.
pub const DIMENSION_CARDINALITY: &[(&str, u64, u64)] = &[
    ("Business", 10_000, 5),
    ("Crop", 1_000, 24),
    ("CropState", 500, 24),
    ("Farmer", 1_000, 10),
    ("Fertiliser", 10_000, 12),
    ("Field", 200, 10),
    ("Inspection", 100, 40),
    ("Nutrient", 5_000, 10),
    ("OperationTime", 500, 24),
    ("Pest", 5_000, 12),
    ("Plan", 5_000, 10),
    ("Product", 5_000, 12),
    ("Site", 500, 10),
    ("Soil", 500, 40),
    ("Spray", 2_000, 12),
    ("Supplier", 10_000, 5),
    ("Task", 5_000, 10),
    ("TransTime", 500, 24),
    ("Treatment", 5_000, 10),
    ("WeatherReading", 50, 50),
    ("WeatherStation", 20_000, 5),
];
/// Cardinality rule for dimensions not listed above.
pub const DEFAULT_DIMENSION_CARDINALITY: (u64, u64) = (100, 10);
/// Secondary fact tables are this many times smaller than the scale.
pub const SECONDARY_FACT_DIVISOR: u64 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error("schema is not valid: {0}")]
    InvalidSchema(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed ledger: {0}")]
    Ledger(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefectClass {
    Duplicate,
    Missing,
    Inconsistent,
    Wrong,
}

impl DefectClass {
    pub const ALL: [DefectClass; 4] =
        [DefectClass::Duplicate, DefectClass::Missing, DefectClass::Inconsistent, DefectClass::Wrong];

    pub fn name(self) -> &'static str {
        match self {
            DefectClass::Duplicate => "duplicate",
            DefectClass::Missing => "missing",
            DefectClass::Inconsistent => "inconsistent",
            DefectClass::Wrong => "wrong",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DefectRates {
    pub duplicate: f64,
    pub missing: f64,
    pub inconsistent: f64,
    pub wrong: f64,
}

impl DefectRates {
    pub fn get(&self, class: DefectClass) -> f64 {
        match class {
            DefectClass::Duplicate => self.duplicate,
            DefectClass::Missing => self.missing,
            DefectClass::Inconsistent => self.inconsistent,
            DefectClass::Wrong => self.wrong,
        }
    }

    pub fn total(&self) -> f64 {
        DefectClass::ALL.iter().map(|c| self.get(*c)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub scale: u64,
    pub defect_rates: DefectRates,
    pub date_range: (NaiveDate, NaiveDate),
}

pub fn default_date_range() -> (NaiveDate, NaiveDate) {
    (NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(), NaiveDate::from_ymd_opt(2018, 12, 31).unwrap())
}

impl GenConfig {
    pub fn new(seed: u64, scale: u64) -> Self {
        GenConfig { seed, scale, defect_rates: DefectRates::default(), date_range: default_date_range() }
    }

    pub fn with_rates(mut self, rates: DefectRates) -> Self {
        self.defect_rates = rates;
        self
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.scale < 1 {
            return Err(GenError::InvalidConfig("scale must be at least 1".into()));
        }
        for c in DefectClass::ALL {
            let r = self.defect_rates.get(c);
            if !(0.0..=1.0).contains(&r) {
                return Err(GenError::InvalidConfig(format!("{} rate {r} outside [0, 1]", c.name())));
            }
        }
        if self.defect_rates.total() > 0.5 + 1e-12 {
            return Err(GenError::InvalidConfig(format!(
                "defect rates sum to {} (> 0.5)",
                self.defect_rates.total()
            )));
        }
        if self.date_range.0 > self.date_range.1 {
            return Err(GenError::InvalidConfig("date range start is after its end".into()));
        }
        Ok(())
    }
}

/// Number of defect rows of one class for a table with `rows` base rows.
pub fn defect_count(rate: f64, rows: u64) -> u64 {
    (rate * rows as f64 + 1e-9).floor() as u64
}

/// Injected defects of one class in one table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectEntries {
    pub count: u64,
    /// 1-based data-row ordinals in the emitted file (header excluded).
    pub ordinals: Vec<u64>,
    /// Primary-key cell text of each defect row.
    pub keys: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableLedger {
    pub base_rows: u64,
    pub emitted_rows: u64,
    pub defects: BTreeMap<DefectClass, DefectEntries>,
}

impl TableLedger {
    pub fn count(&self, class: DefectClass) -> u64 {
        self.defects.get(&class).map_or(0, |d| d.count)
    }

    pub fn total(&self) -> u64 {
        self.defects.values().map(|d| d.count).sum()
    }
}

/// Ground truth of injected defects, serialized as `ledger.json`:
/// `{"seed", "scale", "tables": {<table>: {"base_rows", "emitted_rows",
/// "defects": {<class>: {"count", "ordinals", "keys"}}}}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectLedger {
    pub seed: u64,
    pub scale: u64,
    pub tables: BTreeMap<String, TableLedger>,
}

impl DefectLedger {
    pub fn count(&self, table: &str, class: DefectClass) -> u64 {
        self.tables.get(table).map_or(0, |t| t.count(class))
    }

    pub fn total(&self) -> u64 {
        self.tables.values().map(TableLedger::total).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GenError> {
        serde_json::from_str(s).map_err(|e| GenError::Ledger(e.to_string()))
    }
}

/// One CSV document per table, keyed by table name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawFileSet {
    pub files: BTreeMap<String, Vec<u8>>,
}

impl RawFileSet {
    /// Writes `<table>.csv` for every table into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), GenError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (name, bytes) in &self.files {
            let path = dir.join(format!("{name}.csv"));
            std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }

    /// Reads `<table>.csv` for every table of `schema` from `dir`; a missing
    /// file is reported as an error naming it.
    pub fn read_dir(dir: &Path, schema: &ConstellationSchema) -> Result<Self, GenError> {
        let mut files = BTreeMap::new();
        for name in schema.tables.keys() {
            let path = dir.join(format!("{name}.csv"));
            let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
            files.insert(name.clone(), bytes);
        }
        Ok(RawFileSet { files })
    }
}

fn io_err(path: &Path, e: std::io::Error) -> GenError {
    GenError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Fixed value pools for categorical columns.
pub mod vocab {
    pub const CROPS: &[&str] = &[
        "Winter Wheat",
        "Spring Barley",
        "Winter Barley",
        "Spring Wheat",
        "Potato",
        "Peas",
        "Rapeseed",
        "Rye",
        "Grass",
        "Grass Silage",
        "Maize",
        "Oats",
        "Sugar Beet",
        "Field Beans",
        "Linseed",
        "Triticale",
    ];
    pub const FERTILISERS: &[&str] = &[
        "urea",
        "SO3",
        "P2O5",
        "K2O",
        "Ammonium Nitrate",
        "NPK 20-10-10",
        "Calcium Ammonium Nitrate",
        "Muriate of Potash",
        "Triple Superphosphate",
        "Ammonium Sulphate",
        "Lime",
        "Manure",
    ];
    pub const FERTILISER_GROUPS: &[&str] =
        &["Nitrogen", "Phosphate", "Potash", "Sulphur", "Compound", "Organic"];
    pub const PESTS: &[&str] = &[
        "Black twitch",
        "Aphid",
        "Slug",
        "Wireworm",
        "Leatherjacket",
        "Frit Fly",
        "Wheat Bulb Fly",
        "Orange Wheat Blossom Midge",
        "Pollen Beetle",
        "Cabbage Stem Flea Beetle",
        "Blackgrass",
        "Wild Oat",
    ];
    pub const PEST_TYPES: &[&str] = &["Insect", "Weed", "Mollusc", "Nematode"];
    pub const INSPECTIONS: &[&str] = &[
        "Yellow Rust",
        "Brown Rust",
        "Septoria Tritici",
        "Powdery Mildew",
        "Eyespot",
        "Take-all",
        "Fusarium",
        "Net Blotch",
    ];
    pub const PROBLEM_TYPES: &[&str] = &["Disease", "Pest", "Weed", "Nutrient"];
    pub const SEVERITIES: &[&str] = &["Low", "Medium", "High"];
    pub const SEASONS: &[&str] = &["Spring", "Summer", "Autumn", "Winter"];
    pub const BUSINESSES: &[&str] = &[
        "Ori Agro",
        "Harvest Traders",
        "Green Fields Ltd",
        "AgriMarket",
        "Celtic Grain",
        "Northern Mills",
        "Valley Produce",
        "Atlantic Feeds",
    ];
    pub const SUPPLIERS: &[&str] = &[
        "Agri Supplies Co",
        "FarmChem",
        "SeedLine",
        "Field Inputs Ltd",
        "Crop Care Direct",
        "Rural Stores",
    ];
    pub const NUTRIENTS: &[&str] = &[
        "Nitrogen",
        "Phosphorus",
        "Potassium",
        "Sulphur",
        "Magnesium",
        "Calcium",
        "Boron",
        "Zinc",
        "Manganese",
        "Copper",
    ];
    pub const SPRAY_PRODUCTS: &[&str] = &[
        "Aviator 235 Xpro",
        "Proline 275",
        "Siltra Xpro",
        "Elatus Era",
        "Revystar XE",
        "Ascra Xpro",
        "Glyphosate 360",
        "Atlantis OD",
        "Hallmark Zeon",
        "Biscaya",
        "Decis",
        "Liberator",
    ];
    pub const PRODUCTS: &[&str] = &[
        "Seed Wheat",
        "Seed Barley",
        "Fertiliser Bag",
        "Herbicide",
        "Fungicide",
        "Insecticide",
        "Lime",
        "Tractor Fuel",
        "Grain Store",
        "Seed Potato",
        "Rapeseed Seed",
        "Bale Wrap",
    ];
    pub const PRODUCT_GROUPS: &[&str] = &["Seed", "Crop Protection", "Nutrition", "Equipment"];
    pub const TREATMENTS: &[&str] = &[
        "Seed Dressing",
        "Foliar Spray",
        "Soil Drench",
        "Granular Application",
        "Stem Injection",
        "Broadcast",
        "Band Spray",
        "Fumigation",
    ];
    pub const FORM_TYPES: &[&str] = &["Liquid", "Granule", "Powder", "Emulsion"];
    pub const COUNTRIES: &[&str] = &["UK", "Ireland", "France", "Germany", "Poland", "Spain"];
    pub const REGIONS: &[&str] =
        &["East Anglia", "Midlands", "Scotland", "Leinster", "Brittany", "Bavaria"];
    pub const TEXTURES: &[&str] = &["Clay", "Clay Loam", "Sandy Loam", "Silt Loam", "Loam", "Sand"];
    pub const UNITS: &[&str] = &["kg/ha", "l/ha", "t/ha"];
    pub const SALE_UNITS: &[&str] = &["t", "kg"];
    pub const STATUSES: &[&str] = &["Active", "Inactive"];
    pub const EQUIPMENT: &[&str] =
        &["Combine Harvester", "Forage Harvester", "Potato Harvester", "Beet Harvester"];
    pub const DIRECTIONS: &[&str] = &["N", "NE", "E", "SE", "S", "SW", "W", "NW"];
    pub const GROWTH_STAGES: &[&str] =
        &["Germination", "Leaf Development", "Tillering", "Stem Elongation", "Heading", "Ripening"];
    pub const ACTIVITIES: &[&str] = &["Fungicide", "Herbicide", "Insecticide", "Growth Regulator"];
    pub const FIELD_NAMES: &[&str] = &[
        "North Meadow",
        "Long Acre",
        "Church Field",
        "Mill Field",
        "Top Piece",
        "Bottom Ground",
        "Home Field",
        "Far Close",
    ];
    pub const FIRST_NAMES: &[&str] =
        &["John", "Mary", "Patrick", "Siobhan", "David", "Emma", "Sean", "Claire", "Tom", "Aoife"];
    pub const SURNAMES: &[&str] =
        &["Murphy", "Smith", "Kelly", "Jones", "Walsh", "Brown", "Byrne", "Taylor", "Ryan", "Evans"];
    pub const TASK_STATUSES: &[&str] = &["Open", "Done", "Overdue"];
}

/// Named value pools, keyed by the categorical column they feed.
pub fn vocabularies() -> BTreeMap<&'static str, &'static [&'static str]> {
    use vocab::*;
    BTreeMap::from([
        ("Crop.CropName", CROPS),
        ("Fertiliser.FertiliserName", FERTILISERS),
        ("Fertiliser.FertiliserGroupName", FERTILISER_GROUPS),
        ("Pest.CommonName", PESTS),
        ("Pest.PestType", PEST_TYPES),
        ("Inspection.Description", INSPECTIONS),
        ("OperationTime.Season", SEASONS),
        ("Business.BusinessName", BUSINESSES),
        ("Supplier.SupplierName", SUPPLIERS),
        ("Nutrient.NutrientName", NUTRIENTS),
        ("Spray.SprayProductName", SPRAY_PRODUCTS),
        ("Product.ProductName", PRODUCTS),
        ("Treatment.TreatmentName", TREATMENTS),
        ("Site.Country", COUNTRIES),
        ("Soil.TextureLabel", TEXTURES),
    ])
}

/// Rows a table receives before defect injection.
pub fn base_row_count(table: &TableDef, schema: &ConstellationSchema, scale: u64) -> u64 {
    if table.is_fact() {
        let primary = schema.fact_tables().next().map(|t| t.name.as_str());
        if table.name == "FieldFact" || (schema.table("FieldFact").is_none() && Some(table.name.as_str()) == primary) {
            scale
        } else {
            (scale / SECONDARY_FACT_DIVISOR).max(1)
        }
    } else {
        let (div, min) = DIMENSION_CARDINALITY
            .iter()
            .find(|(n, _, _)| n.eq_ignore_ascii_case(&table.name))
            .map(|(_, d, m)| (*d, *m))
            .unwrap_or(DEFAULT_DIMENSION_CARDINALITY);
        (scale / div).max(min)
    }
}

#[derive(Debug, Clone)]
enum Gen {
    Pk,
    Fk(u64),
    Int(i64, i64),
    Float { lo: f64, hi: f64, decimals: i32 },
    Pick(&'static [&'static str]),
    Cycle(&'static [&'static str]),
    Numbered(&'static [&'static str]),
    Label(String),
    Person,
    Email,
    Phone,
    Date,
    DateSlot,
    DateAfter { col: usize, min: i64, max: i64 },
    Derived,
    Point,
    PolygonAround(usize),
    Bool,
}

fn plan_column(table: &TableDef, col: usize, schema: &ConstellationSchema, counts: &BTreeMap<String, u64>) -> Gen {
    use vocab::*;
    let c = &table.columns[col];
    if c.name.eq_ignore_ascii_case(&table.primary_key) {
        return Gen::Pk;
    }
    if let Some(fk) = table.foreign_key(&c.name) {
        let target = schema.table(&fk.ref_table).map(|t| t.name.clone()).unwrap_or_default();
        return Gen::Fk(counts.get(&target).copied().unwrap_or(1));
    }
    let idx = |name: &str| table.column_index(name);
    let f = |lo, hi, decimals| Gen::Float { lo, hi, decimals };
    let key = format!("{}.{}", table.name, c.name);
    let specific = match key.as_str() {
        "FieldFact.Yield" => Some(f(1.0, 15.0, 2)),
        "FieldFact.WaterVolumn" => Some(f(0.0, 30.0, 0)),
        "FieldFact.FertiliserQuantity" => Some(f(0.0, 20.0, 0)),
        "FieldFact.NutrientQuantity" => Some(f(0.0, 10.0, 0)),
        "FieldFact.SprayQuantity" => Some(f(0.0, 10.0, 0)),
        "FieldFact.PestNumber" => Some(Gen::Int(0, 20)),
        "OrderFact.Quantity" => Some(f(1.0, 20.0, 0)),
        "OrderFact.Price" => Some(f(1.0, 500.0, 2)),
        "SaleFact.Quantity" => Some(f(1.0, 100.0, 0)),
        "SaleFact.Price" => Some(f(100.0, 300.0, 2)),
        "SaleFact.Unit" => Some(Gen::Pick(SALE_UNITS)),
        "Crop.CropName" => Some(Gen::Cycle(CROPS)),
        "Crop.EstYield" => Some(f(0.5, 12.0, 2)),
        "Crop.BbchScale" => Some(Gen::Int(0, 99)),
        "Crop.HarvestEquipment" => Some(Gen::Pick(EQUIPMENT)),
        "Crop.HarvestEquipmentWeight" => Some(f(2.0, 20.0, 1)),
        "Soil.PH" => Some(f(4.5, 8.5, 1)),
        "Soil.Silt" | "Soil.Clay" | "Soil.Sand" => Some(f(0.0, 100.0, 1)),
        "Soil.TextureLabel" => Some(Gen::Pick(TEXTURES)),
        "Soil.CEC" => Some(f(2.0, 40.0, 1)),
        "Soil.OrganicMatter" => Some(f(0.5, 15.0, 1)),
        "Soil.RecommendedNutrient" => Some(Gen::Pick(NUTRIENTS)),
        "Pest.CommonName" => Some(Gen::Cycle(PESTS)),
        "Pest.PestType" => Some(Gen::Pick(PEST_TYPES)),
        "Pest.Description" => Some(Gen::Pick(SEVERITIES)),
        "Pest.Coverage" => Some(f(0.0, 100.0, 1)),
        "Field.FieldName" => Some(Gen::Numbered(FIELD_NAMES)),
        "Field.FieldArea" => Some(f(1.0, 80.0, 2)),
        "Field.FieldGeometric" => Some(idx("FieldGPS").map_or(Gen::Derived, Gen::PolygonAround)),
        "Business.BusinessName" => Some(Gen::Cycle(BUSINESSES)),
        "Supplier.SupplierName" => Some(Gen::Cycle(SUPPLIERS)),
        "Farmer.FarmerName" | "Supplier.ContactName" => Some(Gen::Person),
        "CropState.StageScale" | "CropState.MinStage" | "CropState.MaxStage" => Some(Gen::Int(0, 99)),
        "CropState.MajorStage" => Some(Gen::Pick(GROWTH_STAGES)),
        "CropState.CropCoveragePercent" => Some(f(0.0, 100.0, 1)),
        "Fertiliser.FertiliserName" => Some(Gen::Cycle(FERTILISERS)),
        "Fertiliser.FertiliserGroupName" => Some(Gen::Pick(FERTILISER_GROUPS)),
        "Fertiliser.Unit" => Some(Gen::Pick(UNITS)),
        "Fertiliser.Status" => Some(Gen::Pick(STATUSES)),
        "Inspection.Description" => Some(Gen::Pick(INSPECTIONS)),
        "Inspection.ProblemType" => Some(Gen::Pick(PROBLEM_TYPES)),
        "Inspection.Severity" => Some(Gen::Pick(SEVERITIES)),
        "Inspection.AreaUnit" => Some(Gen::Pick(&["ha", "m2"])),
        "Inspection.Order" => Some(Gen::Int(1, 10)),
        "Inspection.GrowthStage" => Some(Gen::Int(0, 99)),
        "Nutrient.NutrientName" => Some(Gen::Cycle(NUTRIENTS)),
        "Nutrient.Quantity" => Some(f(0.0, 50.0, 1)),
        "OperationTime.StartDate" => Some(Gen::DateSlot),
        "OperationTime.EndDate" => idx("StartDate").map(|col| Gen::DateAfter { col, min: 0, max: 45 }),
        "Plan.ProductName" => Some(Gen::Pick(SPRAY_PRODUCTS)),
        "Plan.ProductRate" | "Spray.ProductRate" => Some(f(0.1, 5.0, 2)),
        "Product.ProductName" => Some(Gen::Cycle(PRODUCTS)),
        "Product.GroupName" => Some(Gen::Pick(PRODUCT_GROUPS)),
        "Site.SiteName" => Some(Gen::Numbered(&["Farm Site"])),
        "Site.Country" => Some(Gen::Pick(COUNTRIES)),
        "Site.CreatedBy" => Some(Gen::Person),
        "Spray.SprayProductName" => Some(Gen::Cycle(SPRAY_PRODUCTS)),
        "Spray.ConfDirection" | "WeatherReading.WindDirection" => Some(Gen::Pick(DIRECTIONS)),
        "Spray.ConfHumidity" | "WeatherReading.RelativeHumidity" => Some(f(20.0, 100.0, 1)),
        "Spray.ConfTemp" | "WeatherReading.AirTemperature" | "WeatherReading.SoilTemperature" => {
            Some(f(-5.0, 30.0, 1))
        }
        "Spray.ConfWindSPeed" | "WeatherReading.WindSpeed" => Some(f(0.0, 25.0, 1)),
        "Spray.ActivityType" => Some(Gen::Pick(ACTIVITIES)),
        "Task.Status" => Some(Gen::Pick(TASK_STATUSES)),
        "Task.TaskInterval" => Some(Gen::Int(1, 30)),
        "Task.CompDate" => idx("TaskDate").map(|col| Gen::DateAfter { col, min: 0, max: 30 }),
        "TransTime.OrderDate" => Some(Gen::DateSlot),
        "TransTime.DeliverDate" => idx("OrderDate").map(|col| Gen::DateAfter { col, min: 1, max: 14 }),
        "TransTime.ReceivedDate" => idx("DeliverDate").map(|col| Gen::DateAfter { col, min: 0, max: 3 }),
        "Treatment.TreatmentName" => Some(Gen::Cycle(TREATMENTS)),
        "Treatment.FormType" => Some(Gen::Pick(FORM_TYPES)),
        "Treatment.Rate" => Some(f(0.1, 10.0, 2)),
        "Treatment.LevlNo" => Some(Gen::Int(1, 5)),
        "WeatherReading.ReadingTime" => Some(Gen::Label("time".into())),
        "WeatherReading.Rainfall" => Some(f(0.0, 40.0, 1)),
        "WeatherReading.LeafWetness" => Some(f(0.0, 15.0, 1)),
        "WeatherStation.Latitude" => Some(f(49.9, 58.6, 4)),
        "WeatherStation.Longitude" => Some(f(-8.0, 1.7, 4)),
        "WeatherStation.Region" => Some(Gen::Pick(REGIONS)),
        _ => None,
    };
    if let Some(g) = specific {
        return g;
    }
    if c.nullable && is_derived_column(&table.name, &c.name) {
        return Gen::Derived;
    }
    let lname = c.name.to_ascii_lowercase();
    match c.dtype {
        DataType::Int64 => Gen::Int(0, 100),
        DataType::Float64 => f(0.0, 100.0, 2),
        DataType::Date => Gen::Date,
        DataType::Bool => Gen::Bool,
        DataType::GeoPoint => Gen::Point,
        DataType::GeoPolygon => Gen::PolygonAround(usize::MAX),
        DataType::Text => {
            if lname.contains("email") {
                Gen::Email
            } else if lname.contains("phone") || lname.contains("mobile") {
                Gen::Phone
            } else if lname.ends_with("name") {
                Gen::Person
            } else {
                Gen::Label(c.name.clone())
            }
        }
    }
}

/// Columns left empty by the generator and filled in by ETL transform.
pub fn is_derived_column(table: &str, column: &str) -> bool {
    matches!(
        (table, column),
        ("OperationTime", "Season") | ("TransTime", "Season") | ("Nutrient", "Year")
    )
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let m = 10f64.powi(decimals);
    (x * m).round() / m
}

struct TableGen<'a> {
    table: &'a TableDef,
    plan: Vec<Gen>,
    slots: Vec<(i32, [u32; 3])>,
    range: (NaiveDate, NaiveDate),
}

impl<'a> TableGen<'a> {
    fn random_date(&self, rng: &mut ChaCha8Rng) -> NaiveDate {
        let span = (self.range.1 - self.range.0).num_days();
        self.range.0 + Duration::days(rng.gen_range(0..=span))
    }

    fn slot_date(&self, row: u64, rng: &mut ChaCha8Rng) -> NaiveDate {
        if self.slots.is_empty() {
            return self.random_date(rng);
        }
        let (year, months) = self.slots[(row as usize) % self.slots.len()];
        let month = months[rng.gen_range(0..3)];
        let day = rng.gen_range(1..=28);
        let d = NaiveDate::from_ymd_opt(year, month, day).unwrap();
        d.clamp(self.range.0, self.range.1)
    }

    fn row(&self, id: u64, rng: &mut ChaCha8Rng) -> Vec<Value> {
        let mut row: Vec<Value> = Vec::with_capacity(self.plan.len());
        for g in &self.plan {
            let v = match g {
                Gen::Pk => Value::Int(id as i64),
                Gen::Fk(n) => Value::Int(rng.gen_range(1..=*n.max(&1)) as i64),
                Gen::Int(lo, hi) => Value::Int(rng.gen_range(*lo..=*hi)),
                Gen::Float { lo, hi, decimals } => {
                    if *decimals == 0 {
                        Value::Float(rng.gen_range(*lo as i64..=*hi as i64) as f64)
                    } else {
                        Value::Float(round_to(rng.gen_range(*lo..=*hi), *decimals))
                    }
                }
                Gen::Pick(pool) => Value::text(pool[rng.gen_range(0..pool.len())]),
                Gen::Cycle(pool) => Value::text(pool[((id - 1) as usize) % pool.len()]),
                Gen::Numbered(pool) => {
                    Value::text(format!("{} {}", pool[((id - 1) as usize) % pool.len()], id))
                }
                Gen::Label(prefix) if prefix == "time" => {
                    Value::text(format!("{:02}:{:02}", rng.gen_range(0..24), rng.gen_range(0..60) / 15 * 15))
                }
                Gen::Label(prefix) => Value::text(format!("{prefix} {}", rng.gen_range(1..=20))),
                Gen::Person => Value::text(format!(
                    "{} {}",
                    vocab::FIRST_NAMES[rng.gen_range(0..vocab::FIRST_NAMES.len())],
                    vocab::SURNAMES[rng.gen_range(0..vocab::SURNAMES.len())]
                )),
                Gen::Email => Value::text(format!("contact{}@example.org", id)),
                Gen::Phone => Value::text(format!("+44 {:04} {:06}", rng.gen_range(1000..10000), rng.gen_range(0..1_000_000))),
                Gen::Date => Value::Date(self.random_date(rng)),
                Gen::DateSlot => Value::Date(self.slot_date(id - 1, rng)),
                Gen::DateAfter { col, min, max } => match row.get(*col).and_then(Value::as_date) {
                    Some(d) => Value::Date((d + Duration::days(rng.gen_range(*min..=*max))).min(self.range.1)),
                    None => Value::Date(self.random_date(rng)),
                },
                Gen::Derived => Value::Null,
                Gen::Point => Value::Point(GeoPoint::new(
                    round_to(rng.gen_range(49.9..58.6), 5),
                    round_to(rng.gen_range(-8.0..1.7), 5),
                )),
                Gen::PolygonAround(col) => {
                    let centre = match row.get(*col) {
                        Some(Value::Point(p)) => *p,
                        _ => GeoPoint::new(round_to(rng.gen_range(49.9..58.6), 5), round_to(rng.gen_range(-8.0..1.7), 5)),
                    };
                    let d = 0.002;
                    let pts = [(-d, -d), (-d, d), (d, d), (d, -d)]
                        .iter()
                        .map(|(a, b)| GeoPoint::new(round_to(centre.lat + a, 5), round_to(centre.lon + b, 5)))
                        .collect::<Vec<_>>();
                    Value::Polygon(pts.into())
                }
                Gen::Bool => Value::Bool(rng.gen_bool(0.5)),
            };
            row.push(v);
        }
        row
    }
}

fn season_slots(range: (NaiveDate, NaiveDate)) -> Vec<(i32, [u32; 3])> {
    let mut slots = Vec::new();
    for year in range.0.year()..=range.1.year() {
        for months in [[1, 2, 12], [3, 4, 5], [6, 7, 8], [9, 10, 11]] {
            let inside = months.iter().any(|m| {
                let first = NaiveDate::from_ymd_opt(year, *m, 1).unwrap();
                let last = NaiveDate::from_ymd_opt(year, *m, 28).unwrap();
                last >= range.0 && first <= range.1
            });
            if inside {
                slots.push((year, months));
            }
        }
    }
    slots
}

fn table_seed(seed: u64, table: &str) -> u64 {
    // FNV-1a over the table name, mixed with the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in table.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Generates one CSV file per table plus the ledger of injected defects.
pub fn generate(schema: &ConstellationSchema, cfg: &GenConfig) -> Result<(RawFileSet, DefectLedger), GenError> {
    cfg.validate()?;
    let violations = crate::schema::validate_schema(schema);
    if !violations.is_empty() {
        return Err(GenError::InvalidSchema(violations.join("; ")));
    }
    let counts: BTreeMap<String, u64> = schema
        .tables
        .values()
        .map(|t| (t.name.clone(), base_row_count(t, schema, cfg.scale)))
        .collect();
    let slots = season_slots(cfg.date_range);
    let results: Vec<(String, Vec<u8>, Option<TableLedger>)> = schema
        .tables
        .values()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|t| {
            let plan = (0..t.columns.len()).map(|i| plan_column(t, i, schema, &counts)).collect();
            let tg = TableGen { table: t, plan, slots: slots.clone(), range: cfg.date_range };
            let (bytes, ledger) = emit_table(&tg, counts[&t.name], cfg, schema, &counts);
            (t.name.clone(), bytes, ledger)
        })
        .collect();
    let mut files = RawFileSet::default();
    let mut ledger = DefectLedger { seed: cfg.seed, scale: cfg.scale, tables: BTreeMap::new() };
    for (name, bytes, tl) in results {
        files.files.insert(name.clone(), bytes);
        if let Some(tl) = tl {
            ledger.tables.insert(name, tl);
        }
    }
    Ok((files, ledger))
}

fn emit_table(
    tg: &TableGen<'_>,
    n: u64,
    cfg: &GenConfig,
    schema: &ConstellationSchema,
    counts: &BTreeMap<String, u64>,
) -> (Vec<u8>, Option<TableLedger>) {
    let table = tg.table;
    let mut rng = ChaCha8Rng::seed_from_u64(table_seed(cfg.seed, &table.name));
    let mut rows: Vec<Vec<Value>> = (1..=n).map(|id| tg.row(id, &mut rng)).collect();

    // (position after which the row is placed, tie-break, class)
    let mut placements: Vec<(u64, u64, Option<DefectClass>)> = (0..n).map(|i| (i, 0, None)).collect();
    let mut tledger = None;
    if table.is_fact() && n > 0 {
        let mut tl = TableLedger { base_rows: n, ..Default::default() };
        let pk = table.pk_index().unwrap_or(0);
        let non_key: Vec<usize> = (0..table.columns.len())
            .filter(|&i| i != pk && !table.columns[i].nullable)
            .collect();
        let measures: Vec<usize> = (0..table.columns.len())
            .filter(|&i| {
                i != pk && table.columns[i].dtype.is_numeric() && table.foreign_key(&table.columns[i].name).is_none()
            })
            .collect();
        let dates: Vec<usize> =
            (0..table.columns.len()).filter(|&i| table.columns[i].dtype == DataType::Date).collect();
        let fks: Vec<(usize, u64)> = table
            .foreign_keys
            .iter()
            .filter_map(|fk| {
                let i = table.column_index(&fk.column)?;
                let target = schema.table(&fk.ref_table)?;
                Some((i, counts.get(&target.name).copied().unwrap_or(0)))
            })
            .collect();
        let mut next_pk = n + 1;
        let mut seq = 1u64;
        for class in DefectClass::ALL {
            let k = defect_count(cfg.defect_rates.get(class), n);
            tl.defects.insert(class, DefectEntries::default());
            for _ in 0..k {
                let orig = rng.gen_range(0..n);
                let mut row = rows[orig as usize].clone();
                let injected = match class {
                    DefectClass::Duplicate => true,
                    DefectClass::Missing => match non_key.choose(&mut rng) {
                        Some(&c) => {
                            row[c] = Value::Null;
                            true
                        }
                        None => false,
                    },
                    DefectClass::Inconsistent => {
                        let use_date = !dates.is_empty() && (measures.is_empty() || rng.gen_bool(0.5));
                        if use_date {
                            let c = *dates.choose(&mut rng).unwrap();
                            let off = Duration::days(rng.gen_range(1..=365));
                            row[c] = Value::Date(if rng.gen_bool(0.5) {
                                cfg.date_range.1 + off
                            } else {
                                cfg.date_range.0 - off
                            });
                            true
                        } else if let Some(&c) = measures.choose(&mut rng) {
                            row[c] = match &row[c] {
                                Value::Int(i) => Value::Int(-(i.abs()) - 1),
                                Value::Float(f) => Value::Float(-(f.abs()) - 1.0),
                                _ => Value::Float(-1.0),
                            };
                            true
                        } else {
                            false
                        }
                    }
                    DefectClass::Wrong => match fks.choose(&mut rng) {
                        Some(&(c, target_n)) => {
                            row[c] = Value::Int((target_n + 1 + rng.gen_range(0..1000)) as i64);
                            true
                        }
                        None => false,
                    },
                };
                if !injected {
                    continue;
                }
                if class != DefectClass::Duplicate {
                    row[pk] = Value::Int(next_pk as i64);
                    next_pk += 1;
                }
                let pos = if class == DefectClass::Duplicate { rng.gen_range(orig..n) } else { rng.gen_range(0..n) };
                placements.push((pos, seq, Some(class)));
                seq += 1;
                rows.push(row);
            }
        }
        tledger = Some(tl);
    }

    // Defect rows were appended after the base rows in `seq` order.
    let mut order: Vec<usize> = (0..placements.len()).collect();
    order.sort_by_key(|&i| (placements[i].0, placements[i].1));

    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(table.columns.iter().map(|c| c.name.as_str())).unwrap();
    for (ordinal, &i) in order.iter().enumerate() {
        let row = &rows[i];
        w.write_record(row.iter().map(|v| v.to_cell().unwrap_or_default())).unwrap();
        if let (Some(class), Some(tl)) = (placements[i].2, tledger.as_mut()) {
            let e = tl.defects.get_mut(&class).unwrap();
            e.count += 1;
            e.ordinals.push(ordinal as u64 + 1);
            let pk = table.pk_index().unwrap_or(0);
            e.keys.push(row[pk].to_cell().unwrap_or_default());
        }
    }
    if let Some(tl) = tledger.as_mut() {
        tl.emitted_rows = order.len() as u64;
    }
    (w.into_inner().unwrap(), tledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::builtin_adw_schema;

    fn data_rows(files: &RawFileSet, table: &str) -> usize {
        let text = std::str::from_utf8(&files.files[table]).unwrap();
        text.lines().count() - 1
    }

    #[test]
    fn zero_defects_exact_scale() {
        let s = builtin_adw_schema();
        let (files, ledger) = generate(&s, &GenConfig::new(7, 1000)).unwrap();
        assert_eq!(files.files.len(), 24);
        assert_eq!(data_rows(&files, "FieldFact"), 1000);
        assert_eq!(ledger.total(), 0);
    }

    #[test]
    fn duplicate_rate_gives_exact_count() {
        let s = builtin_adw_schema();
        let rates = DefectRates { duplicate: 0.02, ..Default::default() };
        let (files, ledger) = generate(&s, &GenConfig::new(7, 1000).with_rates(rates)).unwrap();
        assert_eq!(ledger.count("FieldFact", DefectClass::Duplicate), 20);
        assert_eq!(ledger.count("OrderFact", DefectClass::Duplicate), 2);
        assert_eq!(data_rows(&files, "FieldFact"), 1020);
    }

    #[test]
    fn defect_count_rounding() {
        assert_eq!(defect_count(0.02, 1000), 20);
        assert_eq!(defect_count(0.29, 100), 29);
        assert_eq!(defect_count(0.07, 100), 7);
        assert_eq!(defect_count(0.015, 100), 1);
        assert_eq!(defect_count(0.0, 100), 0);
    }

    #[test]
    fn identical_config_is_byte_identical() {
        let s = builtin_adw_schema();
        let rates = DefectRates { duplicate: 0.02, missing: 0.01, inconsistent: 0.01, wrong: 0.01 };
        let cfg = GenConfig::new(42, 500).with_rates(rates);
        let a = generate(&s, &cfg).unwrap();
        let b = generate(&s, &cfg).unwrap();
        assert_eq!(a, b);
        let c = generate(&s, &GenConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn config_validation() {
        let s = builtin_adw_schema();
        assert!(matches!(generate(&s, &GenConfig::new(1, 0)), Err(GenError::InvalidConfig(_))));
        let too_much = DefectRates { duplicate: 0.3, missing: 0.3, ..Default::default() };
        assert!(GenConfig::new(1, 10).with_rates(too_much).validate().is_err());
        let negative = DefectRates { wrong: -0.1, ..Default::default() };
        assert!(GenConfig::new(1, 10).with_rates(negative).validate().is_err());
        let mut cfg = GenConfig::new(1, 10);
        cfg.date_range = (cfg.date_range.1, cfg.date_range.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn vocabulary_satisfies_decision_queries() {
        let v = vocabularies();
        assert!(v["Pest.CommonName"].contains(&"Black twitch"));
        assert!(v["Inspection.Description"].contains(&"Yellow Rust"));
        assert!(v["Inspection.Description"].contains(&"Brown Rust"));
        assert!(v["Business.BusinessName"].contains(&"Ori Agro"));
        let mut seasons = v["OperationTime.Season"].to_vec();
        seasons.sort();
        assert_eq!(seasons, vec!["Autumn", "Spring", "Summer", "Winter"]);
        for f in ["urea", "SO3", "P2O5"] {
            assert!(v["Fertiliser.FertiliserName"].contains(&f));
        }
        for c in ["Winter Wheat", "Spring Barley"] {
            assert!(v["Crop.CropName"].contains(&c));
        }
    }

    #[test]
    fn ledger_rows_exist_in_file() {
        let s = builtin_adw_schema();
        let rates = DefectRates { duplicate: 0.05, missing: 0.05, inconsistent: 0.05, wrong: 0.05 };
        let (files, ledger) = generate(&s, &GenConfig::new(3, 200).with_rates(rates)).unwrap();
        for (table, tl) in &ledger.tables {
            let text = std::str::from_utf8(&files.files[table]).unwrap();
            let lines: Vec<&str> = text.lines().skip(1).collect();
            assert_eq!(lines.len() as u64, tl.emitted_rows);
            for e in tl.defects.values() {
                assert_eq!(e.count as usize, e.ordinals.len());
                for (o, k) in e.ordinals.iter().zip(&e.keys) {
                    let line = lines[(*o - 1) as usize];
                    assert!(line.starts_with(&format!("{k},")), "{table} {o}: {line}");
                }
            }
        }
        let round = DefectLedger::from_json(&ledger.to_json()).unwrap();
        assert_eq!(round, ledger);
    }

    #[test]
    fn operation_times_cover_every_season_and_year() {
        let s = builtin_adw_schema();
        let (files, _) = generate(&s, &GenConfig::new(9, 100)).unwrap();
        let text = std::str::from_utf8(&files.files["OperationTime"]).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for line in text.lines().skip(1) {
            let start = crate::value::parse_date(line.split(',').nth(1).unwrap()).unwrap();
            seen.insert((start.year(), crate::value::season_of(start)));
        }
        for y in 2015..=2018 {
            for season in ["Spring", "Summer", "Autumn", "Winter"] {
                assert!(seen.contains(&(y, season)), "{y} {season}");
            }
        }
    }
}
