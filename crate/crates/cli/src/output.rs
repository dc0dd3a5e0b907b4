//! Output emission: a JSON record format for machine use and a
//! delimiter-separated table for plotting, both prefixed with the resolved
//! configuration for provenance. Every float is printed with 17
//! significant digits so values round-trip exactly.

use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;

use crate::config::{OutputFormat, RunConfig};
use crate::CliError;

/// serde_json formatter printing floats with 17 significant digits.
struct SigDigits17;

impl serde_json::ser::Formatter for SigDigits17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize any value to JSON with round-trippable floats.
pub fn to_json17<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits17);
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::config(format!("serialization failed: {e}")))?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// A flat table: named columns plus rows, rendered as CSV.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn cell(v: f64) -> String {
        fmt17(v)
    }

    pub fn cell_opt(v: Option<f64>) -> String {
        v.map(fmt17).unwrap_or_else(|| "NA".to_owned())
    }
}

/// Key/value pairs flattened from a serializable record (for the table
/// rendering of scalar reports).
pub fn flatten<T: Serialize>(value: &T) -> Result<Vec<(String, String)>, CliError> {
    let json: serde_json::Value = serde_json::to_value(value)
        .map_err(|e| CliError::config(format!("serialization failed: {e}")))?;
    let mut out = Vec::new();
    fn walk(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
        match v {
            serde_json::Value::Object(map) => {
                for (k, v) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            serde_json::Value::Array(items) => {
                for (i, v) in items.iter().enumerate() {
                    walk(&format!("{prefix}[{i}]"), v, out);
                }
            }
            serde_json::Value::Number(n) => {
                let rendered = n.as_f64().map(fmt17).unwrap_or_else(|| n.to_string());
                out.push((prefix.to_owned(), rendered));
            }
            other => out.push((prefix.to_owned(), other.to_string())),
        }
    }
    walk("", &json, &mut out);
    Ok(out)
}

/// Destination resolved from the config and the output-directory
/// environment variable `MFOS_OUTPUT_DIR` (applied to relative paths).
pub fn resolve_path(config: &RunConfig) -> Option<PathBuf> {
    let path = config.output.path.clone()?;
    if path.is_relative() {
        if let Ok(dir) = std::env::var("MFOS_OUTPUT_DIR") {
            return Some(PathBuf::from(dir).join(path));
        }
    }
    Some(path)
}

pub struct Emitter<'a> {
    pub command: &'a str,
    pub config: &'a RunConfig,
}

impl<'a> Emitter<'a> {
    /// Emit a machine-readable record (JSON) or a key/value table.
    pub fn record<T: Serialize>(&self, result: &T) -> Result<(), CliError> {
        match self.config.output.format {
            OutputFormat::Json => self.write(&self.json_envelope(result)?),
            OutputFormat::Table => {
                let mut text = self.header()?;
                text.push_str("key,value\n");
                for (k, v) in flatten(result)? {
                    text.push_str(&format!("{k},{v}\n"));
                }
                self.write(&text)
            }
        }
    }

    /// Emit a row-oriented result. In JSON mode the rows nest under
    /// `result` next to any `extra` top-level fields.
    pub fn table<T: Serialize>(&self, table: Table, json_result: &T) -> Result<(), CliError> {
        match self.config.output.format {
            OutputFormat::Json => self.write(&self.json_envelope(json_result)?),
            OutputFormat::Table => {
                let mut text = self.header()?;
                text.push_str(&table.columns.join(","));
                text.push('\n');
                for row in &table.rows {
                    text.push_str(&row.join(","));
                    text.push('\n');
                }
                self.write(&text)
            }
        }
    }

    fn json_envelope<T: Serialize>(&self, result: &T) -> Result<String, CliError> {
        #[derive(Serialize)]
        struct Envelope<'e, T> {
            command: &'e str,
            config: &'e RunConfig,
            result: T,
        }
        let mut s = to_json17(&Envelope { command: self.command, config: self.config, result })?;
        s.push('\n');
        Ok(s)
    }

    fn header(&self) -> Result<String, CliError> {
        Ok(format!("# mfos {}\n# config: {}\n", self.command, to_json17(self.config)?))
    }

    fn write(&self, text: &str) -> Result<(), CliError> {
        match resolve_path(self.config) {
            Some(path) => {
                if let Some(parent) = path.parent() {
                    if !parent.as_os_str().is_empty() {
                        std::fs::create_dir_all(parent).map_err(|e| {
                            CliError::config(format!("cannot create {}: {e}", parent.display()))
                        })?;
                    }
                }
                std::fs::write(&path, text)
                    .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
            }
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(text.as_bytes())
                    .map_err(|e| CliError::config(format!("cannot write stdout: {e}")))
            }
        }
    }
}
