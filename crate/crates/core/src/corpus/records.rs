//! Row-level reading of JSON-lines and CSV files into JSON objects.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// A rejected input row. Row numbers are 1-based file lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub row: usize,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

pub(crate) type Record = Map<String, Value>;

pub(crate) fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub(crate) type RecordStream = Box<dyn Iterator<Item = (usize, std::result::Result<Record, String>)> + Send>;

/// Streams `(row, record)` pairs. JSON-lines unless the file ends in `.csv`.
pub(crate) fn records(path: &Path) -> Result<RecordStream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if is_csv(path) {
        let reader = csv::ReaderBuilder::new()
            .flexible(false)
            .from_reader(BufReader::new(file));
        Ok(Box::new(CsvRecords::new(reader)))
    } else {
        let lines = BufReader::new(file).lines().enumerate();
        Ok(Box::new(lines.filter_map(|(i, line)| {
            let row = i + 1;
            match line {
                Err(e) => Some((row, Err(e.to_string()))),
                Ok(l) if l.trim().is_empty() => None,
                Ok(l) => Some((
                    row,
                    match serde_json::from_str::<Value>(&l) {
                        Ok(Value::Object(m)) => Ok(m),
                        Ok(_) => Err("expected a JSON object".to_string()),
                        Err(e) => Err(format!("invalid JSON: {e}")),
                    },
                )),
            }
        })))
    }
}

struct CsvRecords<R: std::io::Read> {
    reader: csv::Reader<R>,
    headers: Option<std::result::Result<Vec<String>, String>>,
    done: bool,
}

impl<R: std::io::Read> CsvRecords<R> {
    fn new(reader: csv::Reader<R>) -> Self {
        CsvRecords {
            reader,
            headers: None,
            done: false,
        }
    }
}

impl<R: std::io::Read> Iterator for CsvRecords<R> {
    type Item = (usize, std::result::Result<Record, String>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if self.headers.is_none() {
            self.headers = Some(
                self.reader
                    .headers()
                    .map(|h| h.iter().map(|s| s.trim().to_string()).collect())
                    .map_err(|e| e.to_string()),
            );
        }
        let headers = match self.headers.as_ref().unwrap() {
            Ok(h) => h.clone(),
            Err(e) => {
                self.done = true;
                return Some((1, Err(format!("bad header: {e}"))));
            }
        };
        let mut record = csv::StringRecord::new();
        match self.reader.read_record(&mut record) {
            Ok(false) => {
                self.done = true;
                None
            }
            Ok(true) => {
                let row = record.position().map_or(0, |p| p.line() as usize);
                let map = headers
                    .iter()
                    .zip(record.iter())
                    .map(|(k, v)| (k.clone(), Value::String(v.to_string())))
                    .collect();
                Some((row, Ok(map)))
            }
            Err(e) => {
                let row = e.position().map_or(0, |p| p.line() as usize);
                // unequal field counts and bad UTF-8 leave the reader usable
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    self.done = true;
                }
                Some((row, Err(e.to_string())))
            }
        }
    }
}

fn lookup<'a>(rec: &'a Record, keys: &[&str]) -> Option<&'a Value> {
    keys.iter()
        .find_map(|k| rec.get(*k))
        .filter(|v| !v.is_null() && !matches!(v, Value::String(s) if s.trim().is_empty()))
}

pub(crate) fn get_str(rec: &Record, keys: &[&str]) -> Option<String> {
    match lookup(rec, keys)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

pub(crate) fn require_str(rec: &Record, keys: &[&str]) -> std::result::Result<String, String> {
    get_str(rec, keys).ok_or_else(|| format!("missing field {:?}", keys[0]))
}

/// Numeric field; accepts JSON numbers and numeric strings.
pub(crate) fn get_f64(rec: &Record, keys: &[&str]) -> std::result::Result<Option<f64>, String> {
    match lookup(rec, keys) {
        None => Ok(None),
        Some(Value::Number(n)) => n
            .as_f64()
            .map(Some)
            .ok_or_else(|| format!("field {:?} is not a finite number", keys[0])),
        Some(Value::String(s)) => s
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Some)
            .ok_or_else(|| format!("field {:?} is not a number: {s:?}", keys[0])),
        Some(_) => Err(format!("field {:?} is not a number", keys[0])),
    }
}

/// Boolean field; accepts JSON booleans, 0/1 and true/false strings.
pub(crate) fn get_bool(rec: &Record, keys: &[&str]) -> std::result::Result<Option<bool>, String> {
    let bad = || format!("field {:?} is not a boolean", keys[0]);
    match lookup(rec, keys) {
        None => Ok(None),
        Some(Value::Bool(b)) => Ok(Some(*b)),
        Some(Value::Number(n)) => match n.as_f64() {
            Some(0.0) => Ok(Some(false)),
            Some(1.0) => Ok(Some(true)),
            _ => Err(bad()),
        },
        Some(Value::String(s)) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => Ok(Some(true)),
            "false" | "0" | "no" => Ok(Some(false)),
            _ => Err(bad()),
        },
        Some(_) => Err(bad()),
    }
}

/// A field holding either a string or an array of strings.
pub(crate) fn get_str_list(rec: &Record, keys: &[&str]) -> Option<Vec<String>> {
    match lookup(rec, keys)? {
        Value::String(s) => Some(vec![s.clone()]),
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect(),
        _ => None,
    }
}
