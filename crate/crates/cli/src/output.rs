//! JSON and CSV rendering.

use anyhow::Result;
use clap::ValueEnum;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
}

/// Cell text for a scalar; arrays of scalars are joined with `;`, nested
/// objects are written as compact JSON.
pub fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) if items.iter().all(|i| !i.is_array() && !i.is_object()) => {
            items.iter().map(cell).collect::<Vec<_>>().join(";")
        }
        other => other.to_string(),
    }
}

/// CSV with the given columns; missing keys become empty cells.
pub fn csv_table(columns: &[String], rows: &[Value]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns)?;
    for row in rows {
        w.write_record(columns.iter().map(|c| row.get(c).map(cell).unwrap_or_default()))?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// One-row CSV of the top-level fields of an object.
pub fn csv_object(v: &Value) -> Result<String> {
    let columns: Vec<String> = v.as_object().map(|m| m.keys().cloned().collect()).unwrap_or_default();
    csv_table(&columns, std::slice::from_ref(v))
}

pub fn render(v: &Value, format: OutFormat) -> Result<String> {
    match format {
        OutFormat::Json => Ok(serde_json::to_string_pretty(v)? + "\n"),
        OutFormat::Csv => csv_object(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn cells() {
        assert_eq!(cell(&json!(null)), "");
        assert_eq!(cell(&json!([1.0, 2.5])), "1.0;2.5");
        assert_eq!(cell(&json!(0.1)), "0.1");
        assert_eq!(cell(&json!({"a": 1})), "{\"a\":1}");
    }

    #[test]
    fn table_quotes_and_fills() {
        let rows = vec![json!({"a": 1, "b": "x,y"}), json!({"a": 2})];
        let out = csv_table(&["a".into(), "b".into()], &rows).unwrap();
        assert_eq!(out, "a,b\n1,\"x,y\"\n2,\n");
        assert_eq!(csv_table(&["a".into()], &[]).unwrap(), "a\n");
    }

    #[test]
    fn floats_round_trip() {
        let x: f64 = 0.1 + 0.2;
        let text = render(&json!({"v": x}), OutFormat::Json).unwrap();
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["v"].as_f64().unwrap().to_bits(), x.to_bits());
    }
}
