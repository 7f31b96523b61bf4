use std::fs::File;
use std::path::Path;

use csv::StringRecord;

use crate::error::{Error, Result};

pub(crate) fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

pub(crate) fn open_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}

pub(crate) fn headers(reader: &mut csv::Reader<File>, path: &Path) -> Result<StringRecord> {
    reader.headers().cloned().map_err(|e| csv_error(path, e))
}

pub(crate) fn column(headers: &StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::parse(path, 1, format!("missing column {name:?}")))
}

pub(crate) fn record_line(rec: &StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    rec: &StringRecord,
    col: usize,
    what: &str,
    path: &Path,
) -> Result<T> {
    let tok = rec.get(col).unwrap_or("");
    tok.parse()
        .map_err(|_| Error::parse(path, record_line(rec), format!("bad {what} {tok:?}")))
}
