//! Raw table rows and the delimited text format used for data and samples.

use std::io::{Read, Write};
use std::path::Path;

use crate::catalog::TableMeta;
use crate::error::{Error, Result};

/// Rows of one table, columns ordered as in its metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub meta: TableMeta,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Builds a table from string rows; `meta.row_count` is set from the rows.
    pub fn new(mut meta: TableMeta, rows: Vec<Vec<String>>) -> Result<Self> {
        meta.validate()?;
        let width = meta.attributes.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(Error::Ingestion(format!(
                "table {} row {i} has {} values, expected {width}",
                meta.table_id,
                r.len()
            )));
        }
        meta.row_count = rows.len() as u64;
        Ok(Table { meta, rows })
    }

    pub fn from_strs(meta: TableMeta, rows: &[&[&str]]) -> Result<Self> {
        let rows = rows
            .iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect();
        Table::new(meta, rows)
    }

    pub fn id(&self) -> &str {
        &self.meta.table_id
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, attr: &str) -> Result<usize> {
        self.meta.attr_index(attr).ok_or_else(|| {
            Error::Schema(format!("table {} has no attribute {attr}", self.meta.table_id))
        })
    }

    /// Reads a headed delimited file. Columns are reordered to the metadata order;
    /// the header must name exactly the metadata attributes.
    pub fn read_csv<R: Read>(meta: TableMeta, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Ingestion(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut sorted_header = header.clone();
        sorted_header.sort();
        let mut sorted_meta = meta.attributes.clone();
        sorted_meta.sort();
        if sorted_header != sorted_meta {
            return Err(Error::Ingestion(format!(
                "header {:?} does not match attributes {:?} of table {}",
                header, meta.attributes, meta.table_id
            )));
        }
        let order: Vec<usize> = meta
            .attributes
            .iter()
            .map(|a| header.iter().position(|h| h == a).expect("same attribute set"))
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Ingestion(format!("table {}: {e}", meta.table_id)))?;
            if rec.len() != header.len() {
                return Err(Error::Ingestion(format!(
                    "table {} row {i} has {} values, expected {}",
                    meta.table_id,
                    rec.len(),
                    header.len()
                )));
            }
            rows.push(order.iter().map(|&j| rec[j].trim().to_string()).collect());
        }
        Table::new(meta, rows)
    }

    pub fn load_csv(meta: TableMeta, path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Table::read_csv(meta, std::io::BufReader::new(f))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(writer, &self.meta.attributes, &self.rows)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Writes a header row followed by `rows`.
pub fn write_rows<W: Write, S: AsRef<str>>(
    writer: W,
    header: &[S],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(header.iter().map(|h| h.as_ref()))?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headed delimited file without a schema.
pub fn read_rows<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.iter().map(|h| h.to_string()).collect::<Vec<_>>();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Ingestion(e.to_string()))?;
        rows.push(rec.iter().map(|v| v.to_string()).collect());
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> TableMeta {
        TableMeta::new("T", &["a", "b"], 0, &["a"])
    }

    #[test]
    fn reorders_columns_to_metadata() {
        let t = Table::read_csv(meta(), "b,a\n1,x\n2,y\n".as_bytes()).unwrap();
        assert_eq!(t.rows, vec![vec!["x", "1"], vec!["y", "2"]]);
        assert_eq!(t.meta.row_count, 2);
    }

    #[test]
    fn header_only_is_empty_table() {
        let t = Table::read_csv(meta(), "a,b\n".as_bytes()).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.meta.row_count, 0);
    }

    #[test]
    fn missing_column_is_an_error() {
        let err = Table::read_csv(meta(), "a\nx\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Ingestion(_)));
    }

    #[test]
    fn ragged_row_is_an_error() {
        let err = Table::read_csv(meta(), "a,b\nx,1\ny\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Ingestion(_)));
    }

    #[test]
    fn csv_round_trip() {
        let t = Table::from_strs(meta(), &[&["x,1", "\"q\""], &["y", ""]]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Table::read_csv(meta(), buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }
}
