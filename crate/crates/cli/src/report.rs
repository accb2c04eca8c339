//! Run reports, rendered both as `key: value` text with tables and as JSON.

use serde_json::{Map, Value};

pub struct Table {
    name: String,
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub struct Report {
    command: String,
    fields: Vec<(String, Value)>,
    tables: Vec<Table>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_owned(),
            fields: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn field(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.fields.push((key.to_owned(), value.into()));
        self
    }

    pub fn table(&mut self, table: Table) -> &mut Self {
        self.tables.push(table);
        self
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("command: {}\n", self.command);
        for (k, v) in &self.fields {
            out.push_str(&format!("{k}: {}\n", plain(v)));
        }
        for t in &self.tables {
            out.push_str(&format!("\n[{}]\n", t.name));
            let cells: Vec<Vec<String>> = t.rows.iter().map(|r| r.iter().map(plain).collect()).collect();
            let widths: Vec<usize> = (0..t.columns.len())
                .map(|i| cells.iter().map(|r| r[i].len()).chain([t.columns[i].len()]).max().unwrap_or(0))
                .collect();
            let line = |row: &[String]| {
                let padded: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
                padded.join("  ").trim_end().to_owned() + "\n"
            };
            out.push_str(&line(&t.columns));
            for r in &cells {
                out.push_str(&line(r));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut obj = Map::new();
        obj.insert("command".into(), Value::from(self.command.clone()));
        for (k, v) in &self.fields {
            obj.insert(k.clone(), v.clone());
        }
        for t in &self.tables {
            let rows: Vec<Value> = t
                .rows
                .iter()
                .map(|r| Value::Object(t.columns.iter().cloned().zip(r.iter().cloned()).collect()))
                .collect();
            obj.insert(t.name.clone(), Value::Array(rows));
        }
        let mut s = serde_json::to_string_pretty(&Value::Object(obj)).expect("report values serialize");
        s.push('\n');
        s
    }
}

fn plain(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(plain).collect::<Vec<_>>().join(" x "),
        other => other.to_string(),
    }
}

/// JSON number for finite values, `null` otherwise.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_json_agree() {
        let mut r = Report::new("demo");
        r.field("rmse", num(0.5)).field("dims", vec![3, 4]);
        let mut t = Table::new("terms", &["a", "bb"]);
        t.push(vec![num(1.0), "x".into()]);
        r.table(t);
        let text = r.to_text();
        assert!(text.contains("rmse: 0.5\n"));
        assert!(text.contains("dims: 3 x 4\n"));
        assert!(text.contains("[terms]\n  a  bb\n1.0   x\n"));
        let json: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["terms"][0]["bb"], "x");
        assert_eq!(json["rmse"], 0.5);
        assert_eq!(num(f64::NAN), Value::Null);
    }
}
