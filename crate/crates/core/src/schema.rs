//! Constellation schema catalog: table definitions, validation, the built-in
//! agronomy warehouse schema and the plain-text schema-definition format.
//!
//! # Schema-definition document
//!
//! ```text
//! # comment to end of line
//! version 1.0
//! fact FieldFact (
//!     FieldFactID:int64,
//!     CropID:int64,
//!     Yield:float64,
//!     Notes:text?,                 -- `?` marks nullable
//!     pk=FieldFactID,
//!     fk=CropID->Crop.CropID
//! )
//! dimension Crop ( CropID:int64, CropName:text, pk=CropID )
//! ```
//!
//! Entries inside the parentheses are comma separated; column entries must
//! precede `pk=` and `fk=` entries. Types are `int64`, `float64`, `text`,
//! `date`, `bool`, `geo-point`, `geo-polygon`. Identifiers are ASCII
//! letters, digits and `_`, not starting with a digit. Table and column
//! names are matched case-insensitively by the query engine, so two names
//! differing only in case are a validation error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::DataType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub dtype: DataType,
    pub nullable: bool,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, dtype: DataType) -> Self {
        ColumnDef { name: name.into(), dtype, nullable: false }
    }

    pub fn nullable(name: impl Into<String>, dtype: DataType) -> Self {
        ColumnDef { name: name.into(), dtype, nullable: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Fact,
    Dimension,
}

impl TableKind {
    fn keyword(self) -> &'static str {
        match self {
            TableKind::Fact => "fact",
            TableKind::Dimension => "dimension",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub ref_table: String,
    pub ref_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub kind: TableKind,
    pub columns: Vec<ColumnDef>,
    pub primary_key: String,
    pub foreign_keys: Vec<ForeignKey>,
}

impl TableDef {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.column_index(name).map(|i| &self.columns[i])
    }

    pub fn pk_index(&self) -> Option<usize> {
        self.column_index(&self.primary_key)
    }

    pub fn is_fact(&self) -> bool {
        self.kind == TableKind::Fact
    }

    /// Foreign key declared on `column`, if any.
    pub fn foreign_key(&self, column: &str) -> Option<&ForeignKey> {
        self.foreign_keys.iter().find(|fk| fk.column.eq_ignore_ascii_case(column))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstellationSchema {
    pub version: String,
    pub tables: BTreeMap<String, TableDef>,
}

impl ConstellationSchema {
    pub fn new(version: impl Into<String>, tables: impl IntoIterator<Item = TableDef>) -> Self {
        ConstellationSchema {
            version: version.into(),
            tables: tables.into_iter().map(|t| (t.name.clone(), t)).collect(),
        }
    }

    /// Case-insensitive table lookup.
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables
            .get(name)
            .or_else(|| self.tables.values().find(|t| t.name.eq_ignore_ascii_case(name)))
    }

    pub fn fact_tables(&self) -> impl Iterator<Item = &TableDef> {
        self.tables.values().filter(|t| t.is_fact())
    }

    pub fn dimension_tables(&self) -> impl Iterator<Item = &TableDef> {
        self.tables.values().filter(|t| !t.is_fact())
    }

    /// Fact tables holding a foreign key into `dimension`.
    pub fn referencing_facts(&self, dimension: &str) -> Vec<&str> {
        self.fact_tables()
            .filter(|f| f.foreign_keys.iter().any(|fk| fk.ref_table.eq_ignore_ascii_case(dimension)))
            .map(|f| f.name.as_str())
            .collect()
    }

    /// Tables ordered so that every FK target precedes the tables pointing at
    /// it (cycles are broken by name order).
    pub fn dependency_order(&self) -> Vec<&str> {
        let mut done: BTreeSet<&str> = BTreeSet::new();
        let mut order = Vec::new();
        while order.len() < self.tables.len() {
            let before = order.len();
            for t in self.tables.values() {
                if done.contains(t.name.as_str()) {
                    continue;
                }
                let ready = t.foreign_keys.iter().all(|fk| {
                    fk.ref_table.eq_ignore_ascii_case(&t.name)
                        || self.table(&fk.ref_table).map_or(true, |r| done.contains(r.name.as_str()))
                });
                if ready {
                    done.insert(&t.name);
                    order.push(t.name.as_str());
                }
            }
            if order.len() == before {
                let next = self.tables.keys().find(|k| !done.contains(k.as_str())).unwrap();
                done.insert(next);
                order.push(next.as_str());
            }
        }
        order
    }

    /// Serializes to the schema-definition document format.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        writeln!(out, "version {}", self.version).unwrap();
        for t in self.tables.values() {
            writeln!(out, "{} {} (", t.kind.keyword(), t.name).unwrap();
            let mut entries: Vec<String> = t
                .columns
                .iter()
                .map(|c| format!("{}:{}{}", c.name, c.dtype, if c.nullable { "?" } else { "" }))
                .collect();
            entries.push(format!("pk={}", t.primary_key));
            for fk in &t.foreign_keys {
                entries.push(format!("fk={}->{}.{}", fk.column, fk.ref_table, fk.ref_column));
            }
            let n = entries.len();
            for (i, e) in entries.into_iter().enumerate() {
                let sep = if i + 1 < n { "," } else { "" };
                writeln!(out, "    {e}{sep}").unwrap();
            }
            writeln!(out, ")").unwrap();
        }
        out
    }

    /// Stable digest of the catalog, used to tag storage snapshots.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.to_document().as_bytes()).into()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("schema parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema validation failed: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Lists every violated catalog invariant; empty iff the schema is valid.
pub fn validate_schema(schema: &ConstellationSchema) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen_tables: BTreeMap<String, &str> = BTreeMap::new();
    for t in schema.tables.values() {
        if let Some(prev) = seen_tables.insert(t.name.to_ascii_lowercase(), &t.name) {
            out.push(format!("table names '{}' and '{}' collide case-insensitively", prev, t.name));
        }
        let mut names = BTreeSet::new();
        for c in &t.columns {
            if !names.insert(c.name.to_ascii_lowercase()) {
                out.push(format!("{}: duplicate column '{}'", t.name, c.name));
            }
        }
        match t.column(&t.primary_key) {
            None => out.push(format!("{}: primary key '{}' is not a column", t.name, t.primary_key)),
            Some(c) if c.nullable => {
                out.push(format!("{}: primary key '{}' is nullable", t.name, t.primary_key))
            }
            Some(_) => {}
        }
        for fk in &t.foreign_keys {
            let label = format!("{}.{} -> {}.{}", t.name, fk.column, fk.ref_table, fk.ref_column);
            let local = t.column(&fk.column);
            if local.is_none() {
                out.push(format!("foreign key {label}: local column does not exist"));
            }
            match schema.table(&fk.ref_table) {
                None => out.push(format!("foreign key {label}: target table does not exist")),
                Some(target) => match target.column(&fk.ref_column) {
                    None => out.push(format!("foreign key {label}: target column does not exist")),
                    Some(rc) => {
                        if let Some(lc) = local {
                            if lc.dtype != rc.dtype {
                                out.push(format!(
                                    "foreign key {label}: type {} does not match target type {}",
                                    lc.dtype, rc.dtype
                                ));
                            }
                        }
                    }
                },
            }
        }
        if t.is_fact() && t.foreign_keys.is_empty() {
            out.push(format!("fact table {} has no foreign key", t.name));
        }
    }
    if schema.fact_tables().next().is_none() {
        out.push("no fact table".to_string());
    }
    let shared = schema
        .dimension_tables()
        .any(|d| schema.referencing_facts(&d.name).len() >= 2);
    if !shared {
        out.push("constellation property: no dimension table is referenced by two or more fact tables".into());
    }
    out
}

/// Parses and validates a schema-definition document.
pub fn load_schema(document: &str) -> Result<ConstellationSchema, SchemaError> {
    let schema = DocParser::new(document).parse()?;
    let violations = validate_schema(&schema);
    if violations.is_empty() {
        Ok(schema)
    } else {
        Err(SchemaError::Invalid(violations))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Sym(char),
    Arrow,
}

struct DocParser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    end: (usize, usize),
    lex_error: Option<SchemaError>,
    version: Option<String>,
}

impl DocParser {
    fn new(doc: &str) -> Self {
        let mut toks = Vec::new();
        let mut lex_error = None;
        let mut version = None;
        let mut last = (1, 1);
        'lines: for (li, line) in doc.lines().enumerate() {
            let line_no = li + 1;
            let trimmed = line.trim_start();
            if let Some(rest) = trimmed.strip_prefix("version") {
                if rest.starts_with(char::is_whitespace) && toks.is_empty() {
                    version = Some(rest.trim().to_string());
                    continue;
                }
            }
            let chars: Vec<char> = line.chars().collect();
            let mut i = 0;
            while i < chars.len() {
                let c = chars[i];
                let col = i + 1;
                if c == '#' {
                    continue 'lines;
                }
                if c.is_whitespace() {
                    i += 1;
                } else if c.is_ascii_alphanumeric() || c == '_' {
                    let start = i;
                    while i < chars.len()
                        && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '-')
                    {
                        if chars[i] == '-' && chars.get(i + 1) == Some(&'>') {
                            break;
                        }
                        i += 1;
                    }
                    toks.push((Tok::Word(chars[start..i].iter().collect()), line_no, col));
                } else if c == '-' && chars.get(i + 1) == Some(&'>') {
                    toks.push((Tok::Arrow, line_no, col));
                    i += 2;
                } else if "(),:?=.".contains(c) {
                    toks.push((Tok::Sym(c), line_no, col));
                    i += 1;
                } else {
                    lex_error.get_or_insert(SchemaError::Parse {
                        line: line_no,
                        column: col,
                        message: format!("unexpected character '{c}'"),
                    });
                    i += 1;
                }
            }
            last = (line_no, chars.len() + 1);
        }
        DocParser { toks, pos: 0, end: last, lex_error, version }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, SchemaError> {
        let (line, column) = self.toks.get(self.pos).map_or(self.end, |t| (t.1, t.2));
        Err(SchemaError::Parse { line, column, message: message.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn expect_sym(&mut self, c: char) -> Result<(), SchemaError> {
        match self.peek() {
            Some(Tok::Sym(s)) if *s == c => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(format!("expected '{c}'")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, SchemaError> {
        match self.peek() {
            Some(Tok::Word(w)) if is_ident(w) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn parse(mut self) -> Result<ConstellationSchema, SchemaError> {
        if let Some(e) = self.lex_error.take() {
            return Err(e);
        }
        let mut tables: BTreeMap<String, TableDef> = BTreeMap::new();
        while self.peek().is_some() {
            let kind = match self.next() {
                Some(Tok::Word(w)) if w == "fact" => TableKind::Fact,
                Some(Tok::Word(w)) if w == "dimension" => TableKind::Dimension,
                _ => {
                    self.pos -= 1;
                    return self.err("expected 'fact' or 'dimension'");
                }
            };
            let name = self.ident("table name")?;
            self.expect_sym('(')?;
            let mut columns = Vec::new();
            let mut pk = None;
            let mut fks = Vec::new();
            loop {
                let word = self.ident("column, pk= or fk= entry")?;
                match (word.as_str(), self.peek()) {
                    ("pk", Some(Tok::Sym('='))) => {
                        self.pos += 1;
                        if pk.is_some() {
                            self.pos -= 1;
                            return self.err("duplicate pk entry");
                        }
                        pk = Some(self.ident("primary key column")?);
                    }
                    ("fk", Some(Tok::Sym('='))) => {
                        self.pos += 1;
                        let column = self.ident("foreign key column")?;
                        if self.next() != Some(Tok::Arrow) {
                            self.pos -= 1;
                            return self.err("expected '->'");
                        }
                        let ref_table = self.ident("referenced table")?;
                        self.expect_sym('.')?;
                        let ref_column = self.ident("referenced column")?;
                        fks.push(ForeignKey { column, ref_table, ref_column });
                    }
                    _ => {
                        if pk.is_some() || !fks.is_empty() {
                            self.pos -= 1;
                            return self.err("column entries must precede pk= and fk= entries");
                        }
                        self.expect_sym(':')?;
                        let dtype = match self.next() {
                            Some(Tok::Word(t)) => match DataType::from_name(&t) {
                                Some(d) => d,
                                None => {
                                    self.pos -= 1;
                                    return self.err(format!("unknown type '{t}'"));
                                }
                            },
                            _ => {
                                self.pos -= 1;
                                return self.err("expected a type");
                            }
                        };
                        let nullable = if self.peek() == Some(&Tok::Sym('?')) {
                            self.pos += 1;
                            true
                        } else {
                            false
                        };
                        columns.push(ColumnDef { name: word, dtype, nullable });
                    }
                }
                match self.next() {
                    Some(Tok::Sym(',')) => continue,
                    Some(Tok::Sym(')')) => break,
                    _ => {
                        self.pos -= 1;
                        return self.err("expected ',' or ')'");
                    }
                }
            }
            let Some(primary_key) = pk else {
                return self.err(format!("table {name} has no pk= entry"));
            };
            if tables.contains_key(&name) {
                return self.err(format!("table {name} defined twice"));
            }
            tables.insert(name.clone(), TableDef { name, kind, columns, primary_key, foreign_keys: fks });
        }
        Ok(ConstellationSchema { version: self.version.unwrap_or_else(|| "1".into()), tables })
    }
}

fn is_ident(w: &str) -> bool {
    let mut chars = w.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Shorthand used by the built-in catalog: `"Name:type"` or `"Name:type?"`.
fn cols(specs: &[&str]) -> Vec<ColumnDef> {
    specs
        .iter()
        .map(|s| {
            let (name, ty) = s.split_once(':').expect("column spec");
            let (ty, nullable) = match ty.strip_suffix('?') {
                Some(t) => (t, true),
                None => (ty, false),
            };
            ColumnDef { name: name.into(), dtype: DataType::from_name(ty).expect("type"), nullable }
        })
        .collect()
}

fn table(kind: TableKind, name: &str, columns: &[&str], fks: &[(&str, &str)]) -> TableDef {
    let columns = cols(columns);
    TableDef {
        name: name.into(),
        kind,
        primary_key: columns[0].name.clone(),
        foreign_keys: fks
            .iter()
            .map(|(col, target)| {
                let (t, c) = target.split_once('.').unwrap();
                ForeignKey { column: (*col).into(), ref_table: t.into(), ref_column: c.into() }
            })
            .collect(),
        columns,
    }
}

/// The built-in agronomy warehouse catalog: three fact tables (`FieldFact`,
/// `OrderFact`, `SaleFact`) and 21 dimension tables.
///
/// Column names used verbatim by the reference queries are kept as written
/// there, including `SoildID`, `WaterVolumn` and `FertiliserGroupName`.
/// `OperationTime.Season`, `TransTime.Season` and `Nutrient.Year` are
/// nullable because ETL derives them from the corresponding dates.
pub fn builtin_adw_schema() -> ConstellationSchema {
    use TableKind::{Dimension as D, Fact as F};
    let tables = vec![
        table(
            F,
            "FieldFact",
            &[
                "FieldFactID:int64",
                "FieldID:int64",
                "CropID:int64",
                "SoildID:int64",
                "PestID:int64",
                "FertiliserID:int64",
                "NutrientID:int64",
                "SprayID:int64",
                "TreatmentID:int64",
                "OperationTimeID:int64",
                "Yield:float64",
                "WaterVolumn:float64",
                "FertiliserQuantity:float64",
                "NutrientQuantity:float64",
                "SprayQuantity:float64",
                "PestNumber:int64",
            ],
            &[
                ("FieldID", "Field.FieldID"),
                ("CropID", "Crop.CropID"),
                ("SoildID", "Soil.SoilID"),
                ("PestID", "Pest.PestID"),
                ("FertiliserID", "Fertiliser.FertiliserID"),
                ("NutrientID", "Nutrient.NutrientID"),
                ("SprayID", "Spray.SprayID"),
                ("TreatmentID", "Treatment.TreatmentID"),
                ("OperationTimeID", "OperationTime.OperationTimeID"),
            ],
        ),
        table(
            F,
            "OrderFact",
            &[
                "OrderID:int64",
                "FarmerID:int64",
                "SupplierID:int64",
                "ProductID:int64",
                "TransTimeID:int64",
                "Quantity:float64",
                "Price:float64",
            ],
            &[
                ("FarmerID", "Farmer.FarmerID"),
                ("SupplierID", "Supplier.SupplierID"),
                ("ProductID", "Product.ProductID"),
                ("TransTimeID", "TransTime.TransTimeID"),
            ],
        ),
        table(
            F,
            "SaleFact",
            &[
                "SaleID:int64",
                "FarmerID:int64",
                "BusinessID:int64",
                "CropID:int64",
                "SaleDate:date",
                "Unit:text",
                "Quantity:float64",
                "Price:float64",
            ],
            &[
                ("FarmerID", "Farmer.FarmerID"),
                ("BusinessID", "Business.BusinessID"),
                ("CropID", "Crop.CropID"),
            ],
        ),
        table(
            D,
            "Field",
            &[
                "FieldID:int64",
                "FieldName:text",
                "FieldArea:float64",
                "FieldGPS:geo-point",
                "FieldGeometric:geo-polygon",
                "SiteID:int64",
            ],
            &[("SiteID", "Site.SiteID")],
        ),
        table(
            D,
            "Crop",
            &[
                "CropID:int64",
                "CropName:text",
                "EstYield:float64",
                "BbchScale:int64",
                "HarvestEquipment:text",
                "HarvestEquipmentWeight:float64",
            ],
            &[],
        ),
        table(
            D,
            "Soil",
            &[
                "SoilID:int64",
                "PH:float64",
                "Nitrogen:float64",
                "Phosphorus:float64",
                "Potassium:float64",
                "Magnesium:float64",
                "Calcium:float64",
                "TextureLabel:text",
                "Silt:float64",
                "Clay:float64",
                "Sand:float64",
                "CEC:float64",
                "OrganicMatter:float64",
                "RecommendedNutrient:text",
                "TestingDate:date",
            ],
            &[],
        ),
        table(
            D,
            "Pest",
            &[
                "PestID:int64",
                "CommonName:text",
                "PestType:text",
                "Description:text",
                "Density:float64",
                "Coverage:float64",
                "DetectedDate:date",
            ],
            &[],
        ),
        table(
            D,
            "Business",
            &["BusinessID:int64", "BusinessName:text", "Address:text", "Phone:text", "Mobile:text", "Email:text"],
            &[],
        ),
        table(
            D,
            "CropState",
            &[
                "CropStateID:int64",
                "CropID:int64",
                "StageScale:int64",
                "Height:float64",
                "MajorStage:text",
                "MinStage:int64",
                "MaxStage:int64",
                "Diameter:float64",
                "MinHeight:float64",
                "MaxHeight:float64",
                "CropCoveragePercent:float64",
            ],
            &[("CropID", "Crop.CropID")],
        ),
        table(
            D,
            "Farmer",
            &["FarmerID:int64", "FarmerName:text", "Address:text", "Phone:text", "Mobile:text", "Email:text"],
            &[],
        ),
        table(
            D,
            "Fertiliser",
            &[
                "FertiliserID:int64",
                "FertiliserName:text",
                "Unit:text",
                "Status:text",
                "Description:text",
                "FertiliserGroupName:text",
            ],
            &[],
        ),
        table(
            D,
            "Inspection",
            &[
                "InspectionID:int64",
                "CropID:int64",
                "Description:text",
                "ProblemType:text",
                "Severity:text",
                "ProblemNotes:text",
                "AreaValue:float64",
                "AreaUnit:text",
                "Order:int64",
                "Date:date",
                "Notes:text",
                "GrowthStage:int64",
            ],
            &[("CropID", "Crop.CropID")],
        ),
        table(
            D,
            "Nutrient",
            &["NutrientID:int64", "NutrientName:text", "Date:date", "Quantity:float64", "Year:int64?"],
            &[],
        ),
        table(
            D,
            "OperationTime",
            &["OperationTimeID:int64", "StartDate:date", "EndDate:date", "Season:text?"],
            &[],
        ),
        table(
            D,
            "Plan",
            &[
                "PlanID:int64",
                "PName:text",
                "RegisNo:text",
                "ProductName:text",
                "ProductRate:float64",
                "Date:date",
                "WaterVolume:float64",
            ],
            &[],
        ),
        table(D, "Product", &["ProductID:int64", "ProductName:text", "GroupName:text"], &[]),
        table(
            D,
            "Site",
            &[
                "SiteID:int64",
                "FarmerID:int64",
                "SiteName:text",
                "Reference:text",
                "Country:text",
                "Address:text",
                "GPS:geo-point",
                "CreatedBy:text",
            ],
            &[("FarmerID", "Farmer.FarmerID")],
        ),
        table(
            D,
            "Spray",
            &[
                "SprayID:int64",
                "SprayProductName:text",
                "ProductRate:float64",
                "Area:float64",
                "Date:date",
                "WaterVol:float64",
                "ConfDuration:float64",
                "ConfWindSPeed:float64",
                "ConfDirection:text",
                "ConfHumidity:float64",
                "ConfTemp:float64",
                "ActivityType:text",
            ],
            &[],
        ),
        table(
            D,
            "Supplier",
            &[
                "SupplierID:int64",
                "SupplierName:text",
                "ContactName:text",
                "Address:text",
                "Phone:text",
                "Mobile:text",
                "Email:text",
            ],
            &[],
        ),
        table(
            D,
            "Task",
            &[
                "TaskID:int64",
                "Desc:text",
                "Status:text",
                "TaskDate:date",
                "TaskInterval:int64",
                "CompDate:date",
                "AppCode:text",
            ],
            &[],
        ),
        table(
            D,
            "TransTime",
            &["TransTimeID:int64", "OrderDate:date", "DeliverDate:date", "ReceivedDate:date", "Season:text?"],
            &[],
        ),
        table(
            D,
            "Treatment",
            &[
                "TreatmentID:int64",
                "TreatmentName:text",
                "FormType:text",
                "LotCode:text",
                "Rate:float64",
                "ApplCode:text",
                "LevlNo:int64",
                "Type:text",
                "Description:text",
                "ApplDesc:text",
                "TreatmentComment:text",
            ],
            &[],
        ),
        table(
            D,
            "WeatherReading",
            &[
                "WeatherReadingID:int64",
                "WeatherStationID:int64",
                "ReadingDate:date",
                "ReadingTime:text",
                "AirTemperature:float64",
                "Rainfall:float64",
                "SPLite:float64",
                "RelativeHumidity:float64",
                "WindSpeed:float64",
                "WindDirection:text",
                "SoilTemperature:float64",
                "LeafWetness:float64",
            ],
            &[("WeatherStationID", "WeatherStation.WeatherStationID")],
        ),
        table(
            D,
            "WeatherStation",
            &["WeatherStationID:int64", "StationName:text", "Latitude:float64", "Longitude:float64", "Region:text"],
            &[],
        ),
    ];
    ConstellationSchema::new("adw-1", tables)
}
