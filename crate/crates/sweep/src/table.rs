//! CSV tables with a `# key=value` provenance line on top.

use crate::SweepError;

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[&'static str] {
        &self.columns
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self, header: &str) -> Result<String, SweepError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| SweepError::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        let body = w.into_inner().map_err(|e| SweepError::Io(e.into_error()))?;
        let body = String::from_utf8(body).expect("csv output is utf-8");
        Ok(format!("{header}\n{body}"))
    }
}

/// Shortest round-trip formatting; NaN prints as an empty field.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

/// Parses a CSV produced by [`Table::to_csv`] into its header and rows,
/// skipping the provenance line.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>), SweepError> {
    let body = text.split_once('\n').map_or("", |(_, rest)| rest);
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let bad = |e: csv::Error| SweepError::Config(e.to_string());
    let header = r.headers().map_err(bad)?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(bad)?;
    Ok((header, rows))
}
