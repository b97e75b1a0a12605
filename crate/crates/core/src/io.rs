//! CSV ingestion, key=value configuration files and report provenance.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PanError, Result};
use crate::geometry::Dataset;

/// Parsed table: header names and row-major numeric cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| PanError::Schema(format!("no column named '{name}'")))
    }

    /// Split into a dataset with `outcome` as Y; `covariates` defaults to every
    /// other column in file order.
    pub fn to_dataset(&self, outcome: &str, covariates: Option<&[String]>) -> Result<Dataset> {
        let yi = self.column_index(outcome)?;
        let names: Vec<String> = match covariates {
            Some(c) => c.to_vec(),
            None => self.columns.iter().filter(|c| *c != outcome).cloned().collect(),
        };
        if names.is_empty() {
            return Err(PanError::Schema("no covariate columns".into()));
        }
        let idx = names
            .iter()
            .map(|n| {
                if n == outcome {
                    Err(PanError::Schema(format!("'{n}' is the outcome and a covariate")))
                } else {
                    self.column_index(n)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let n = self.rows.len();
        let x = DMatrix::from_fn(n, idx.len(), |i, j| self.rows[i][idx[j]]);
        let y = DVector::from_fn(n, |i, _| self.rows[i][yi]);
        Dataset::new(x, y)?.with_column_names(names)
    }
}

/// Read a headed CSV whose cells are all numeric. Rows are reported 1-based,
/// counting the header as row 1.
pub fn read_table(text: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| PanError::Schema(e.to_string()))?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(PanError::Schema("missing header row".into()));
    }
    let columns: Vec<String> = headers.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for c in &columns {
        if c.is_empty() {
            return Err(PanError::Schema("empty column name".into()));
        }
        if !seen.insert(c.as_str()) {
            return Err(PanError::Schema(format!("duplicate column '{c}'")));
        }
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let row_no = k + 2;
        let rec = rec.map_err(|e| PanError::Parse {
            row: row_no,
            column: String::new(),
            message: e.to_string(),
        })?;
        if rec.len() != columns.len() {
            return Err(PanError::Parse {
                row: row_no,
                column: String::new(),
                message: format!("expected {} fields, found {}", columns.len(), rec.len()),
            });
        }
        let mut vals = Vec::with_capacity(columns.len());
        for (cell, name) in rec.iter().zip(&columns) {
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                return Err(PanError::Parse {
                    row: row_no,
                    column: name.clone(),
                    message: "missing value".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| PanError::Parse {
                row: row_no,
                column: name.clone(),
                message: format!("not a number: '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(PanError::Parse {
                    row: row_no,
                    column: name.clone(),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            vals.push(v);
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(PanError::Schema("no data rows".into()));
    }
    Ok(Table { columns, rows })
}

pub fn read_table_file(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| PanError::Io(format!("{}: {e}", path.display())))?;
    read_table(&text)
}

/// Load a dataset with the named outcome column; all remaining columns (or
/// the listed ones) become covariates. The result is not centered.
pub fn ingest_csv(path: &Path, outcome: &str, covariates: Option<&[String]>) -> Result<Dataset> {
    read_table_file(path)?.to_dataset(outcome, covariates)
}

/// Flat `key = value` settings grouped by `[section]` headers. Keys before
/// any header live in the section "".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| PanError::Config(format!("line {}: unterminated section header", k + 1)))?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PanError::Config(format!("line {}: expected key = value", k + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(PanError::Config(format!("line {}: empty key", k + 1)));
            }
            let section = sections.entry(current.clone()).or_default();
            if section.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(PanError::Config(format!("line {}: duplicate key '{key}'", k + 1)));
            }
        }
        Ok(Config { sections })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| PanError::Io(format!("{}: {e}", path.display())))?;
        Config::parse(&text)
    }

    /// Look up `key` in `section`, falling back to the top-level section.
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .or_else(|| self.sections.get("").and_then(|s| s.get(key)))
            .map(String::as_str)
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| PanError::Config(format!("[{section}] {key}: cannot parse '{v}'"))),
        }
    }

    pub fn get_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => parse_list(v).map(Some),
        }
    }
}

/// Comma-separated reals, whitespace tolerated.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| PanError::Config(format!("not a number: '{t}'"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    /// SHA-256 of the canonical JSON of the effective settings.
    pub config_hash: String,
}

impl Provenance {
    pub fn new<S: Serialize>(command: &str, settings: &S, seed: Option<u64>) -> Result<Provenance> {
        let canonical = serde_json::to_vec(settings).map_err(|e| PanError::Io(e.to_string()))?;
        Ok(Provenance {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_hash: hex::encode(Sha256::digest(&canonical)),
        })
    }
}

/// Report envelope written by the command-line tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub provenance: Provenance,
    pub settings: serde_json::Value,
    pub result: T,
}

impl<T: Serialize> Document<T> {
    pub fn new<S: Serialize>(command: &str, settings: &S, seed: Option<u64>, result: T) -> Result<Self> {
        Ok(Document {
            provenance: Provenance::new(command, settings, seed)?,
            settings: serde_json::to_value(settings).map_err(|e| PanError::Io(e.to_string()))?,
            result,
        })
    }

    /// Pretty JSON in canonical key order, so that parsing and re-emitting
    /// reproduces the same bytes.
    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::to_value(self).map_err(|e| PanError::Io(e.to_string()))?;
        serde_json::to_string_pretty(&v).map_err(|e| PanError::Io(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_row_csv_reads_exactly() {
        let t = read_table("a,b,y\n1,2.5,3\n-4,0.125,6e-1\n7,8,9\n").unwrap();
        assert_eq!(t.columns, vec!["a", "b", "y"]);
        assert_eq!(t.rows, vec![vec![1.0, 2.5, 3.0], vec![-4.0, 0.125, 0.6], vec![7.0, 8.0, 9.0]]);
        let d = t.to_dataset("y", None).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.x[(1, 0)], -4.0);
        assert_eq!(d.y[2], 9.0);
        assert!(!d.centered);
        assert_eq!(d.column_names, vec!["a", "b"]);
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(read_table(""), Err(PanError::Schema(_))));
        assert!(matches!(read_table("a,b\n"), Err(PanError::Schema(_))));
        assert!(matches!(read_table("a,a\n1,2\n"), Err(PanError::Schema(_))));
        let t = read_table("a,b\n1,2\n").unwrap();
        assert!(matches!(t.to_dataset("z", None), Err(PanError::Schema(_))));
    }

    #[test]
    fn parse_errors_carry_location() {
        match read_table("a,b\n1,2\n3,x\n") {
            Err(PanError::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
            }
            other => panic!("{other:?}"),
        }
        match read_table("a,b\n1,\n") {
            Err(PanError::Parse { row: 2, column, message }) => {
                assert_eq!(column, "b");
                assert!(message.contains("missing"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_table("a,b\n1,2,3\n"), Err(PanError::Parse { row: 2, .. })));
    }

    #[test]
    fn covariate_selection() {
        let t = read_table("a,b,c,y\n1,2,3,4\n5,6,7,8\n").unwrap();
        let d = t.to_dataset("y", Some(&["c".to_string(), "a".to_string()])).unwrap();
        assert_eq!(d.column_names, vec!["c", "a"]);
        assert_eq!(d.x[(1, 0)], 7.0);
        assert!(t.to_dataset("y", Some(&["y".to_string()])).is_err());
    }

    #[test]
    fn config_sections_and_fallback() {
        let c = Config::parse("seed = 7 # global\n\n[tune]\nb = 200\nlambda2 = -1, 0, 2.5\n[cv]\nmethod=pan\n").unwrap();
        assert_eq!(c.get("tune", "b"), Some("200"));
        assert_eq!(c.get("tune", "seed"), Some("7"));
        assert_eq!(c.get("cv", "b"), None);
        assert_eq!(c.get_parsed::<u64>("cv", "seed").unwrap(), Some(7));
        assert_eq!(c.get_list("tune", "lambda2").unwrap(), Some(vec![-1.0, 0.0, 2.5]));
        assert!(c.get_parsed::<usize>("cv", "method").is_err());
        assert!(Config::parse("[tune\n").is_err());
        assert!(Config::parse("novalue\n").is_err());
        assert!(Config::parse("a=1\na=2\n").is_err());
    }

    #[test]
    fn provenance_hash_is_stable() {
        let a = Provenance::new("fit", &serde_json::json!({"l1": 1.0, "l2": 2.5}), Some(3)).unwrap();
        let b = Provenance::new("fit", &serde_json::json!({"l1": 1.0, "l2": 2.5}), Some(3)).unwrap();
        let c = Provenance::new("fit", &serde_json::json!({"l1": 1.0, "l2": 2.0}), Some(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.config_hash, c.config_hash);
        assert_eq!(a.config_hash.len(), 64);
    }

    #[test]
    fn document_round_trips_byte_identical() {
        let doc = Document::new("theory", &serde_json::json!({"p": 15}), None, vec![0.1, 1.0 / 3.0, -2.5e-300]).unwrap();
        let s = doc.to_json().unwrap();
        let back: Document<Vec<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_json().unwrap(), s);
    }
}
