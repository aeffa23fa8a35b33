//! Typed cell values shared by every layer of the warehouse.
//!
//! `Value` carries a total order and a hash that agree with SQL equality on
//! non-null values: `Int(2)` and `Float(2.0)` compare and hash equal. `Null`
//! equals itself here so that grouping and set operations can treat it as a
//! single member; predicate evaluation handles null separately.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// The seven column kinds a warehouse table may declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataType {
    Int64,
    Float64,
    Text,
    Date,
    Bool,
    GeoPoint,
    GeoPolygon,
}

impl DataType {
    pub const ALL: [DataType; 7] = [
        DataType::Int64,
        DataType::Float64,
        DataType::Text,
        DataType::Date,
        DataType::Bool,
        DataType::GeoPoint,
        DataType::GeoPolygon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DataType::Int64 => "int64",
            DataType::Float64 => "float64",
            DataType::Text => "text",
            DataType::Date => "date",
            DataType::Bool => "bool",
            DataType::GeoPoint => "geo-point",
            DataType::GeoPolygon => "geo-polygon",
        }
    }

    pub fn from_name(name: &str) -> Option<DataType> {
        DataType::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Int64 | DataType::Float64)
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            DataType::Int64 => 0,
            DataType::Float64 => 1,
            DataType::Text => 2,
            DataType::Date => 3,
            DataType::Bool => 4,
            DataType::GeoPoint => 5,
            DataType::GeoPolygon => 6,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<DataType> {
        DataType::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        GeoPoint { lat, lon }
    }

    fn bits(&self) -> (u64, u64) {
        (norm_bits(self.lat), norm_bits(self.lon))
    }
}

fn norm_bits(x: f64) -> u64 {
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

/// A single typed cell.
#[derive(Debug, Clone, Default)]
pub enum Value {
    #[default]
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Date(NaiveDate),
    Text(Arc<str>),
    Point(GeoPoint),
    Polygon(Arc<[GeoPoint]>),
}

impl Value {
    pub fn text(s: impl AsRef<str>) -> Value {
        Value::Text(Arc::from(s.as_ref()))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn data_type(&self) -> Option<DataType> {
        Some(match self {
            Value::Null => return None,
            Value::Bool(_) => DataType::Bool,
            Value::Int(_) => DataType::Int64,
            Value::Float(_) => DataType::Float64,
            Value::Date(_) => DataType::Date,
            Value::Text(_) => DataType::Text,
            Value::Point(_) => DataType::GeoPoint,
            Value::Polygon(_) => DataType::GeoPolygon,
        })
    }

    /// True when the value may be stored in a column of type `dtype`.
    pub fn conforms_to(&self, dtype: DataType) -> bool {
        match self.data_type() {
            None => true,
            Some(t) => t == dtype,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_date(&self) -> Option<NaiveDate> {
        match self {
            Value::Date(d) => Some(*d),
            _ => None,
        }
    }

    fn type_rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Bool(_) => 1,
            Value::Int(_) | Value::Float(_) => 2,
            Value::Date(_) => 3,
            Value::Text(_) => 4,
            Value::Point(_) => 5,
            Value::Polygon(_) => 6,
        }
    }

    /// Parses the cell text used in CSV files and CLI arguments.
    pub fn parse_as(text: &str, dtype: DataType) -> Result<Value, String> {
        let t = text.trim();
        match dtype {
            DataType::Int64 => t
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| format!("'{text}' is not an int64")),
            DataType::Float64 => match t.parse::<f64>() {
                Ok(f) if f.is_finite() => Ok(Value::Float(f)),
                _ => Err(format!("'{text}' is not a float64")),
            },
            DataType::Text => Ok(Value::text(text)),
            DataType::Date => parse_date(t)
                .map(Value::Date)
                .ok_or_else(|| format!("'{text}' is not an ISO-8601 date")),
            DataType::Bool => match t.to_ascii_lowercase().as_str() {
                "true" | "1" => Ok(Value::Bool(true)),
                "false" | "0" => Ok(Value::Bool(false)),
                _ => Err(format!("'{text}' is not a bool")),
            },
            DataType::GeoPoint => parse_point(t)
                .map(Value::Point)
                .ok_or_else(|| format!("'{text}' is not a geo-point (lat;lon)")),
            DataType::GeoPolygon => {
                let points: Option<Vec<GeoPoint>> = t.split('|').map(parse_point).collect();
                match points {
                    Some(p) if p.len() >= 3 => Ok(Value::Polygon(p.into())),
                    _ => Err(format!("'{text}' is not a geo-polygon")),
                }
            }
        }
    }

    /// Cell text as written to CSV; `None` for null (an empty cell).
    pub fn to_cell(&self) -> Option<String> {
        match self {
            Value::Null => None,
            other => Some(other.to_string()),
        }
    }
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn parse_point(s: &str) -> Option<GeoPoint> {
    let (lat, lon) = s.split_once(';')?;
    let lat: f64 = lat.trim().parse().ok()?;
    let lon: f64 = lon.trim().parse().ok()?;
    ((-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon))
        .then_some(GeoPoint { lat, lon })
}

/// `Some(i)` when `f` is integral and representable as i64.
fn integral(f: f64) -> Option<i64> {
    if f.fract() == 0.0 && f >= -9.223_372_036_854_776e18 && f < 9.223_372_036_854_776e18 {
        Some(f as i64)
    } else {
        None
    }
}

fn cmp_int_float(a: i64, b: f64) -> Ordering {
    match integral(b) {
        Some(bi) => a.cmp(&bi),
        None => (a as f64).total_cmp(&b),
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        use Value::*;
        match (self, other) {
            (Null, Null) => Ordering::Equal,
            (Bool(a), Bool(b)) => a.cmp(b),
            (Int(a), Int(b)) => a.cmp(b),
            (Int(a), Float(b)) => cmp_int_float(*a, *b),
            (Float(a), Int(b)) => cmp_int_float(*b, *a).reverse(),
            (Float(a), Float(b)) => {
                if *a == *b {
                    Ordering::Equal
                } else {
                    a.total_cmp(b)
                }
            }
            (Date(a), Date(b)) => a.cmp(b),
            (Text(a), Text(b)) => a.as_bytes().cmp(b.as_bytes()),
            (Point(a), Point(b)) => a.bits().cmp(&b.bits()),
            (Polygon(a), Polygon(b)) => {
                let ab = a.iter().map(GeoPoint::bits);
                let bb = b.iter().map(GeoPoint::bits);
                ab.cmp(bb)
            }
            _ => self.type_rank().cmp(&other.type_rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Null => 0u8.hash(state),
            Value::Bool(b) => {
                1u8.hash(state);
                b.hash(state)
            }
            Value::Int(i) => {
                2u8.hash(state);
                i.hash(state)
            }
            Value::Float(f) => match integral(*f) {
                Some(i) => {
                    2u8.hash(state);
                    i.hash(state)
                }
                None => {
                    3u8.hash(state);
                    f.to_bits().hash(state)
                }
            },
            Value::Date(d) => {
                4u8.hash(state);
                d.num_days_from_ce().hash(state)
            }
            Value::Text(s) => {
                5u8.hash(state);
                s.hash(state)
            }
            Value::Point(p) => {
                6u8.hash(state);
                p.bits().hash(state)
            }
            Value::Polygon(ps) => {
                7u8.hash(state);
                for p in ps.iter() {
                    p.bits().hash(state);
                }
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Value::Text(s) => f.write_str(s),
            Value::Point(p) => write!(f, "{};{}", p.lat, p.lon),
            Value::Polygon(ps) => {
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str("|")?;
                    }
                    write!(f, "{};{}", p.lat, p.lon)?;
                }
                Ok(())
            }
        }
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_none(),
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Int(i) => s.serialize_i64(*i),
            Value::Float(x) => s.serialize_f64(*x),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

/// Row of cells, positionally matching a column list.
pub type Row = Vec<Value>;

/// Month → calendar season (Dec–Feb Winter, Mar–May Spring, Jun–Aug Summer,
/// Sep–Nov Autumn).
pub fn season_of_month(month: u32) -> &'static str {
    match month {
        12 | 1 | 2 => "Winter",
        3..=5 => "Spring",
        6..=8 => "Summer",
        _ => "Autumn",
    }
}

pub fn season_of(date: NaiveDate) -> &'static str {
    season_of_month(date.month())
}

/// Neumaier-compensated float accumulator. Merging two accumulators keeps
/// the compensation terms so partial sums combine without drift.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Comparison operators shared by scan predicates and the query engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }

    /// The operator with its operands swapped (`a < b` ⇔ `b > a`).
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }
}

/// SQL comparison: `None` when either side is null or the kinds are not
/// comparable (so the predicate is false).
pub fn sql_cmp(a: &Value, b: &Value) -> Option<Ordering> {
    use Value::*;
    match (a, b) {
        (Null, _) | (_, Null) => None,
        (Int(_) | Float(_), Int(_) | Float(_))
        | (Bool(_), Bool(_))
        | (Date(_), Date(_))
        | (Text(_), Text(_))
        | (Point(_), Point(_))
        | (Polygon(_), Polygon(_)) => Some(a.cmp(b)),
        _ => None,
    }
}

pub fn compare(a: &Value, op: CmpOp, b: &Value) -> bool {
    sql_cmp(a, b).is_some_and(|o| op.holds(o))
}

/// Case-sensitive LIKE: `%` matches any run of characters (including none),
/// `_` exactly one character. There is no escape character.
pub fn like_match(text: &str, pattern: &str) -> bool {
    let t: Vec<char> = text.chars().collect();
    let p: Vec<char> = pattern.chars().collect();
    let (mut ti, mut pi) = (0, 0);
    // Position of the last `%` and the text index it is currently absorbing up to.
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '_' || (p[pi] != '%' && p[pi] == t[ti])) {
            ti += 1;
            pi += 1;
        } else if pi < p.len() && p[pi] == '%' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '%')
}
