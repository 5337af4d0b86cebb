//! Plain CSV/JSON writers shared by all result types.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! inputs always give byte-identical files.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;

/// `prefix1,...,prefixn` column names using 1-based site labels.
pub fn site_columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn write_table<W, I, R>(writer: W, header: &[String], rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(header)?;
    for row in rows {
        csv.write_record(row.as_ref().iter().map(|v| v.to_string()))?;
    }
    csv.flush()?;
    Ok(())
}

pub fn table_string<I, R>(header: &[String], rows: I) -> Result<String>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let mut buf = Vec::new();
    write_table(&mut buf, header, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is ascii"))
}

pub fn json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
