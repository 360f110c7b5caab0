//! Plaintext datasets as CSV: each row holds `m` integer attributes followed by an integer
//! class label. A first row with no integer cell is taken as a header.

use thiserror::Error;

use crate::ppknn::PlainRecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {reason}")]
pub struct DatasetError {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub header: Option<Vec<String>>,
    pub records: Vec<PlainRecord>,
    /// Source line of each record.
    pub lines: Vec<u64>,
}

impl Dataset {
    /// Attribute count, from the header if there are no rows.
    pub fn attribute_count(&self) -> usize {
        match (self.records.first(), &self.header) {
            (Some(r), _) => r.attributes.len(),
            (None, Some(h)) => h.len().saturating_sub(1),
            (None, None) => 0,
        }
    }

    /// One more than the largest label, or 0 when empty.
    pub fn class_count(&self) -> u64 {
        self.records.iter().map(|r| r.label + 1).max().unwrap_or(0)
    }
}

pub fn parse_csv(text: &str) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut dataset = Dataset::default();
    let mut width = None;
    for (idx, row) in reader.records().enumerate() {
        let row = row.map_err(|e| DatasetError {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(idx as u64 + 1, |p| p.line());
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        let cells: Vec<Option<u64>> = row.iter().map(|c| c.parse::<u64>().ok()).collect();
        if idx == 0 && cells.iter().all(Option::is_none) {
            dataset.header = Some(row.iter().map(str::to_owned).collect());
            width = Some(row.len());
            continue;
        }
        if row.len() < 2 {
            return Err(DatasetError {
                line,
                reason: "a row needs at least one attribute and a label".into(),
            });
        }
        let expected = *width.get_or_insert(row.len());
        if row.len() != expected {
            return Err(DatasetError {
                line,
                reason: format!("{} cells, expected {expected}", row.len()),
            });
        }
        let mut values = Vec::with_capacity(cells.len());
        for (col, cell) in cells.into_iter().enumerate() {
            values.push(cell.ok_or_else(|| DatasetError {
                line,
                reason: format!(
                    "cell {} ({:?}) is not a nonnegative integer",
                    col + 1,
                    &row[col]
                ),
            })?);
        }
        let label = values.pop().expect("at least two cells");
        dataset.records.push(PlainRecord {
            attributes: values,
            label,
        });
        dataset.lines.push(line);
    }
    Ok(dataset)
}

pub fn to_csv(records: &[PlainRecord]) -> String {
    let mut out = String::new();
    for r in records {
        for a in &r.attributes {
            out.push_str(&a.to_string());
            out.push(',');
        }
        out.push_str(&r.label.to_string());
        out.push('\n');
    }
    out
}
