//! Query results and their text, CSV and JSON renderings.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::value::{Row, Value};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub headers: Vec<String>,
    pub rows: Vec<Row>,
    /// True iff the query had ORDER BY.
    pub ordered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(OutputFormat::Text),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (expected text, csv or json)")),
        }
    }
}

fn cell(v: &Value) -> String {
    v.to_cell().unwrap_or_default()
}

impl ResultTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row multiset as counts, for order-insensitive comparison.
    pub fn multiset(&self) -> HashMap<&Row, usize> {
        let mut m = HashMap::new();
        for r in &self.rows {
            *m.entry(r).or_insert(0) += 1;
        }
        m
    }

    /// Same multiset of rows, and the same sequence when ordered. Float
    /// cells compare with a relative tolerance of 1e-9.
    pub fn equivalent(&self, other: &ResultTable) -> bool {
        if self.headers.len() != other.headers.len() || self.rows.len() != other.rows.len() {
            return false;
        }
        let mut a = self.rows.clone();
        let mut b = other.rows.clone();
        if !(self.ordered && other.ordered) {
            a.sort();
            b.sort();
        }
        a.iter().zip(&b).all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| close(p, q)))
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Text => self.to_text(),
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    /// Aligned table with a dashed rule under the headers and a row count.
    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(cell).collect()).collect();
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for r in &cells {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, items: &[String]| {
            let parts: Vec<String> = items.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", parts.join(" | ").trim_end());
        };
        line(&mut out, &self.headers);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let _ = writeln!(out, "{}", rule.join("-+-"));
        for r in &cells {
            line(&mut out, r);
        }
        let _ = writeln!(out, "({} row{})", self.rows.len(), if self.rows.len() == 1 { "" } else { "s" });
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(cell)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 cells")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable result")
    }
}

fn close(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float(_), _) | (_, Value::Float(_)) => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0),
            _ => a == b,
        },
        _ => a == b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: Vec<Row>, ordered: bool) -> ResultTable {
        ResultTable { headers: vec!["a".into(), "b".into()], rows, ordered }
    }

    #[test]
    fn renders_three_formats() {
        let t = table(vec![vec![Value::Int(1), Value::text("x,y")], vec![Value::Null, Value::Float(2.5)]], false);
        let text = t.to_text();
        assert!(text.starts_with("a | b\n"));
        assert!(text.ends_with("(2 rows)\n"));
        assert_eq!(t.to_csv(), "a,b\n1,\"x,y\"\n,2.5\n");
        let j: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(j["rows"][1][0], serde_json::Value::Null);
        assert_eq!(j["ordered"], false);
    }

    #[test]
    fn equivalence_respects_order_flag() {
        let a = table(vec![vec![Value::Int(1), Value::Int(2)], vec![Value::Int(3), Value::Int(4)]], false);
        let mut b = a.clone();
        b.rows.reverse();
        assert!(a.equivalent(&b));
        let (mut ao, mut bo) = (a.clone(), b.clone());
        ao.ordered = true;
        bo.ordered = true;
        assert!(!ao.equivalent(&bo));
        let mut c = a.clone();
        c.rows[0][1] = Value::Float(2.0 + 1e-12);
        assert!(a.equivalent(&c));
    }
}
