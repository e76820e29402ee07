//! CSV tables with a fixed header and nine significant digits per value.

use std::io::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; panics if its width differs from the header's, which
    /// would be a bug in the caller.
    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Nine significant digits in scientific notation.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == 0.0 {
        // no "-0" in the output
        format!("{:.8e}", 0.0)
    } else {
        format!("{v:.8e}")
    }
}

pub fn write_csv(table: &Table, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", table.header.join(","))?;
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()
}

pub fn to_csv_string(table: &Table) -> String {
    let mut buf = Vec::new();
    write_csv(table, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

/// Parses text produced by [`write_csv`].
pub fn parse_csv(text: &str) -> Result<Table, String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().ok_or("missing header")?.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| c.parse::<f64>().map_err(|e| format!("row {}: `{c}`: {e}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != header.len() {
            return Err(format!("row {} has {} cells, header has {}", i + 1, row.len(), header.len()));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}
