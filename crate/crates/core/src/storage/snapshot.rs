//! Single-file engine snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "CDWS"
//! version    u16      1
//! engine     u8       0 = row store, 1 = column store
//! schema     32 bytes SHA-256 digest of the schema document
//! tables     u32
//! per table:
//!   name     u16 length + UTF-8 bytes
//!   columns  u32
//!   rows     u64
//!   per column:
//!     name   u16 length + UTF-8 bytes
//!     dtype  u8 (int64=0 float64=1 text=2 date=3 bool=4 geo-point=5 geo-polygon=6)
//!     nulls  ceil(rows / 64) u64 words, bit i set = row i is null
//!     values rows entries; null slots hold a zero value:
//!            int64 i64 | float64 f64 | bool u8 | date i32 days from CE
//!            text u32 length + bytes | geo-point lat f64, lon f64
//!            geo-polygon u32 count + count × (lat f64, lon f64)
//! ```
//!
//! Both engines share the column-block layout; the row store is transposed
//! on write.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::column::{date_to_days, ColumnTable};
use super::{Bitmap, ColumnSegment, ColumnStore, EngineKind, Relation, RowStore, StorageEngine, StorageError};
use crate::schema::ConstellationSchema;
use crate::value::{DataType, GeoPoint, Value};

pub const MAGIC: &[u8; 4] = b"CDWS";
pub const VERSION: u16 = 1;

fn io(e: std::io::Error) -> StorageError {
    StorageError::Snapshot(e.to_string())
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_u16::<LE>(s.len() as u16)?;
    w.write_all(s.as_bytes())
}

fn read_str(r: &mut impl Read) -> std::io::Result<String> {
    let n = r.read_u16::<LE>()? as usize;
    let mut buf = vec![0; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

fn write_value(w: &mut impl Write, dtype: DataType, v: &Value) -> std::io::Result<()> {
    match dtype {
        DataType::Int64 => w.write_i64::<LE>(v.as_i64().unwrap_or(0)),
        DataType::Float64 => w.write_f64::<LE>(v.as_f64().unwrap_or(0.0)),
        DataType::Bool => w.write_u8(matches!(v, Value::Bool(true)) as u8),
        DataType::Date => w.write_i32::<LE>(v.as_date().map_or(0, date_to_days)),
        DataType::Text => {
            let s = v.as_str().unwrap_or("");
            w.write_u32::<LE>(s.len() as u32)?;
            w.write_all(s.as_bytes())
        }
        DataType::GeoPoint => {
            let p = match v {
                Value::Point(p) => *p,
                _ => GeoPoint::new(0.0, 0.0),
            };
            w.write_f64::<LE>(p.lat)?;
            w.write_f64::<LE>(p.lon)
        }
        DataType::GeoPolygon => {
            let pts: &[GeoPoint] = match v {
                Value::Polygon(p) => p,
                _ => &[],
            };
            w.write_u32::<LE>(pts.len() as u32)?;
            for p in pts {
                w.write_f64::<LE>(p.lat)?;
                w.write_f64::<LE>(p.lon)?;
            }
            Ok(())
        }
    }
}

fn read_value(r: &mut impl Read, dtype: DataType) -> std::io::Result<Value> {
    Ok(match dtype {
        DataType::Int64 => Value::Int(r.read_i64::<LE>()?),
        DataType::Float64 => Value::Float(r.read_f64::<LE>()?),
        DataType::Bool => Value::Bool(r.read_u8()? != 0),
        DataType::Date => Value::Date(
            chrono::NaiveDate::from_num_days_from_ce_opt(r.read_i32::<LE>()?)
                .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "bad day number"))?,
        ),
        DataType::Text => {
            let n = r.read_u32::<LE>()? as usize;
            let mut buf = vec![0; n];
            r.read_exact(&mut buf)?;
            Value::text(String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?)
        }
        DataType::GeoPoint => Value::Point(GeoPoint::new(r.read_f64::<LE>()?, r.read_f64::<LE>()?)),
        DataType::GeoPolygon => {
            let n = r.read_u32::<LE>()? as usize;
            let mut pts = Vec::with_capacity(n);
            for _ in 0..n {
                pts.push(GeoPoint::new(r.read_f64::<LE>()?, r.read_f64::<LE>()?));
            }
            Value::Polygon(Arc::from(pts))
        }
    })
}

/// Writes every table of `engine` that belongs to `schema`.
pub fn write_snapshot(engine: &dyn StorageEngine, schema: &ConstellationSchema, path: &Path) -> Result<(), StorageError> {
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    write_to(engine, schema, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

fn write_to(engine: &dyn StorageEngine, schema: &ConstellationSchema, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LE>(VERSION)?;
    w.write_u8(match engine.kind() {
        EngineKind::Row => 0,
        EngineKind::Column => 1,
    })?;
    w.write_all(&schema.digest())?;
    let names: Vec<&String> = schema.tables.keys().collect();
    w.write_u32::<LE>(names.len() as u32)?;
    for name in names {
        let rel = engine
            .scan(name, &[], None)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()))?;
        write_str(w, name)?;
        w.write_u32::<LE>(rel.columns.len() as u32)?;
        w.write_u64::<LE>(rel.rows.len() as u64)?;
        for (ci, col) in rel.columns.iter().enumerate() {
            write_str(w, &col.name)?;
            w.write_u8(col.dtype.tag())?;
            let mut nulls = Bitmap::default();
            for row in &rel.rows {
                nulls.push(row[ci].is_null());
            }
            for word in nulls.words() {
                w.write_u64::<LE>(*word)?;
            }
            for row in &rel.rows {
                write_value(w, col.dtype, &row[ci])?;
            }
        }
    }
    Ok(())
}

/// Snapshot contents restored into a fresh engine of the recorded kind.
pub enum Restored {
    Row(RowStore),
    Column(ColumnStore),
}

impl Restored {
    pub fn engine(&self) -> &dyn StorageEngine {
        match self {
            Restored::Row(r) => r,
            Restored::Column(c) => c,
        }
    }
}

/// Reads a snapshot written for `schema`; a digest mismatch is an error.
pub fn read_snapshot(schema: &ConstellationSchema, path: &Path) -> Result<Restored, StorageError> {
    let file = std::fs::File::open(path).map_err(io)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(StorageError::Snapshot("bad magic".into()));
    }
    let version = r.read_u16::<LE>().map_err(io)?;
    if version != VERSION {
        return Err(StorageError::Snapshot(format!("unsupported version {version}")));
    }
    let kind = r.read_u8().map_err(io)?;
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest).map_err(io)?;
    if digest != schema.digest() {
        return Err(StorageError::Snapshot("schema digest mismatch".into()));
    }
    let restored = match kind {
        0 => Restored::Row(RowStore::new()),
        1 => Restored::Column(ColumnStore::new()),
        k => return Err(StorageError::Snapshot(format!("unknown engine kind {k}"))),
    };
    let tables = r.read_u32::<LE>().map_err(io)?;
    for _ in 0..tables {
        let name = read_str(&mut r).map_err(io)?;
        let def = schema.table(&name).ok_or_else(|| StorageError::UnknownTable(name.clone()))?.clone();
        let ncols = r.read_u32::<LE>().map_err(io)? as usize;
        let nrows = r.read_u64::<LE>().map_err(io)? as usize;
        if ncols != def.columns.len() {
            return Err(StorageError::Snapshot(format!("table {name}: column count {ncols}")));
        }
        let mut segments = Vec::with_capacity(ncols);
        for col in &def.columns {
            let cname = read_str(&mut r).map_err(io)?;
            let tag = r.read_u8().map_err(io)?;
            if !cname.eq_ignore_ascii_case(&col.name) || DataType::from_tag(tag) != Some(col.dtype) {
                return Err(StorageError::Snapshot(format!("table {name}: column {cname} does not match schema")));
            }
            let mut words = vec![0u64; nrows.div_ceil(64)];
            for w in words.iter_mut() {
                *w = r.read_u64::<LE>().map_err(io)?;
            }
            let nulls = Bitmap::from_words(words, nrows);
            let mut seg = ColumnSegment::new(&col.name, col.dtype);
            for i in 0..nrows {
                let v = read_value(&mut r, col.dtype).map_err(io)?;
                seg.push(if nulls.get(i) { &Value::Null } else { &v });
            }
            segments.push(seg);
        }
        match &restored {
            Restored::Row(rs) => {
                rs.create_table(&def)?;
                let rows = (0..nrows).map(|i| segments.iter().map(|s| s.get(i)).collect()).collect();
                rs.insert_batch(&Relation::new(def.name.clone(), def.columns.clone(), rows))?;
            }
            Restored::Column(cs) => {
                cs.install(ColumnTable::from_segments(def, segments, cs.read_counter()));
            }
        }
    }
    Ok(restored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{load_schema, TableDef};

    fn schema() -> ConstellationSchema {
        load_schema(
            "version t\n\
             fact F ( ID:int64, DID:int64, X:float64?, pk=ID, fk=DID->D.ID )\n\
             fact G ( ID:int64, DID:int64, pk=ID, fk=DID->D.ID )\n\
             dimension D ( ID:int64, Name:text?, When:date, Ok:bool, At:geo-point, Area:geo-polygon, pk=ID )",
        )
        .unwrap()
    }

    fn fill(e: &dyn StorageEngine, s: &ConstellationSchema) {
        for t in s.tables.values() {
            e.create_table(t).unwrap();
        }
        let d: &TableDef = s.table("D").unwrap();
        let p = GeoPoint::new(52.5, -1.25);
        let rows = vec![
            vec![
                Value::Int(1),
                Value::text("a,b"),
                Value::Date(chrono::NaiveDate::from_ymd_opt(2016, 4, 10).unwrap()),
                Value::Bool(true),
                Value::Point(p),
                Value::Polygon(Arc::from(vec![p, p, p])),
            ],
            vec![
                Value::Int(2),
                Value::Null,
                Value::Date(chrono::NaiveDate::from_ymd_opt(2015, 1, 1).unwrap()),
                Value::Bool(false),
                Value::Point(p),
                Value::Polygon(Arc::from(vec![p, p, p, p])),
            ],
        ];
        e.insert_batch(&Relation::new("D", d.columns.clone(), rows)).unwrap();
        let f = s.table("F").unwrap();
        let rows = vec![vec![Value::Int(1), Value::Int(2), Value::Null], vec![Value::Int(2), Value::Int(1), Value::Float(-0.5)]];
        e.insert_batch(&Relation::new("F", f.columns.clone(), rows)).unwrap();
    }

    #[test]
    fn round_trip_both_engines() {
        let s = schema();
        let dir = tempfile::tempdir().unwrap();
        for (i, e) in [&RowStore::new() as &dyn StorageEngine, &ColumnStore::new()].into_iter().enumerate() {
            fill(e, &s);
            let path = dir.path().join(format!("snap{i}.bin"));
            write_snapshot(e, &s, &path).unwrap();
            let back = read_snapshot(&s, &path).unwrap();
            assert_eq!(back.engine().kind(), e.kind());
            for t in s.tables.keys() {
                assert_eq!(back.engine().scan(t, &[], None).unwrap(), e.scan(t, &[], None).unwrap());
            }
            assert!(back.engine().lookup_pk("D", &Value::Int(2)).unwrap().is_some());
        }
    }

    #[test]
    fn digest_mismatch_is_rejected() {
        let s = schema();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.bin");
        let e = ColumnStore::new();
        fill(&e, &s);
        write_snapshot(&e, &s, &path).unwrap();
        let other = crate::schema::builtin_adw_schema();
        assert!(matches!(read_snapshot(&other, &path), Err(StorageError::Snapshot(_))));
        std::fs::write(&path, b"nope").unwrap();
        assert!(read_snapshot(&s, &path).is_err());
    }
}
