//! Rendering of command artifacts as JSON, CSV or plain tables.

use serde::Serialize;
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Table,
}

/// A command result: the resolved configuration, a JSON body, and an
/// optional row set used by the CSV and table renderings.
pub struct Artifact {
    pub config: Value,
    pub body: Value,
    pub rows: Option<Vec<Value>>,
}

impl Artifact {
    pub fn new(config: Value, body: impl Serialize) -> Self {
        Self {
            config,
            body: serde_json::to_value(body).expect("artifact bodies serialise"),
            rows: None,
        }
    }

    pub fn with_rows(mut self, rows: Vec<Value>) -> Self {
        self.rows = Some(rows);
        self
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.json(),
            Format::Csv => self.csv(),
            Format::Table => self.table(),
        }
    }

    fn json(&self) -> String {
        let mut map = serde_json::Map::new();
        map.insert("config".into(), self.config.clone());
        match &self.body {
            Value::Object(body) => {
                for (k, v) in body {
                    map.insert(k.clone(), v.clone());
                }
            }
            other => {
                map.insert("result".into(), other.clone());
            }
        }
        let mut s = serde_json::to_string_pretty(&Value::Object(map)).expect("json renders");
        s.push('\n');
        s
    }

    /// Rows of the artifact, or the scalar fields of the body as key/value pairs.
    fn records(&self) -> (Vec<String>, Vec<Vec<String>>) {
        if let Some(rows) = &self.rows {
            let mut header: Vec<String> = Vec::new();
            for r in rows {
                if let Value::Object(m) = r {
                    for k in m.keys() {
                        if !header.contains(k) {
                            header.push(k.clone());
                        }
                    }
                }
            }
            let body = rows
                .iter()
                .map(|r| header.iter().map(|h| cell(r.get(h).unwrap_or(&Value::Null))).collect())
                .collect();
            return (header, body);
        }
        let mut out = Vec::new();
        flatten("", &self.body, &mut out);
        (
            vec!["key".into(), "value".into()],
            out.into_iter().map(|(k, v)| vec![k, v]).collect(),
        )
    }

    fn csv(&self) -> String {
        let (header, rows) = self.records();
        let mut s = format!("# config: {}\n", serde_json::to_string(&self.config).expect("json renders"));
        s.push_str(&header.iter().map(|h| quote(h)).collect::<Vec<_>>().join(","));
        s.push('\n');
        for r in rows {
            s.push_str(&r.iter().map(|c| quote(c)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }

    fn table(&self) -> String {
        if self.rows.is_none() {
            if let Value::Object(m) = &self.body {
                if m.len() == 1 {
                    let v = m.values().next().expect("one entry");
                    if !v.is_object() && !v.is_array() {
                        return format!("{}\n", cell(v));
                    }
                }
            }
        }
        let (header, rows) = self.records();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut s = line(&header);
        s.push('\n');
        for r in &rows {
            s.push_str(&line(r));
            s.push('\n');
        }
        s
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x}"),
            _ => n.to_string(),
        },
        other => serde_json::to_string(other).expect("json renders"),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        other => out.push((prefix.to_string(), cell(other))),
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
