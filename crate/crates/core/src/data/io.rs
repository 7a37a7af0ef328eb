use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{DataError, Dataset, Provenance, Sex, SubjectRecord};

/// Reads `id,sex,age,f1_0..[,f2_0..]`. Without `f2_` columns every record is
/// unimodal; a row whose `f2_` cells are all empty is unimodal too.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    parse_dataset(File::open(path)?)
}

pub fn parse_dataset(reader: impl Read) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let layout = Layout::from_header(&header)?;

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        // Header is line 1.
        let line = i + 2;
        if row.len() != header.len() {
            return Err(DataError::Row {
                row: line,
                detail: format!("{} cells, header has {}", row.len(), header.len()),
            });
        }
        let id = row[layout.id].to_string();
        let sex_cell = &row[layout.sex];
        let sex = match sex_cell {
            "0" => Sex::Female,
            "1" => Sex::Male,
            other => {
                return Err(DataError::Sex {
                    row: line,
                    value: other.into(),
                })
            }
        };
        let age = parse_cell(&row[layout.age], line, "age")?;
        if !(age > 0.0 && age < 120.0) {
            return Err(DataError::Age { row: line, age });
        }
        let x1 = layout
            .f1
            .iter()
            .map(|&c| parse_cell(&row[c], line, &header[c]))
            .collect::<Result<Vec<_>, _>>()?;
        let x2 = if layout.f2.is_empty() {
            None
        } else {
            let empty = layout.f2.iter().filter(|&&c| row[c].is_empty()).count();
            if empty == layout.f2.len() {
                None
            } else if empty > 0 {
                return Err(DataError::Row {
                    row: line,
                    detail: "modality-2 cells partially empty".into(),
                });
            } else {
                Some(
                    layout
                        .f2
                        .iter()
                        .map(|&c| parse_cell(&row[c], line, &header[c]))
                        .collect::<Result<Vec<_>, _>>()?,
                )
            }
        };
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId { row: line, id });
        }
        records.push(SubjectRecord {
            id,
            sex,
            age,
            x1,
            x2,
        });
    }
    Dataset::new(records, Provenance::File)
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64, DataError> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::Parse {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

struct Layout {
    id: usize,
    sex: usize,
    age: usize,
    f1: Vec<usize>,
    f2: Vec<usize>,
}

impl Layout {
    fn from_header(header: &[String]) -> Result<Self, DataError> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DataError::Header(format!("missing column '{name}'")))
        };
        let block = |prefix: &str| -> Result<Vec<usize>, DataError> {
            let mut cols: Vec<(usize, usize)> = Vec::new();
            for (c, h) in header.iter().enumerate() {
                if let Some(rest) = h.strip_prefix(prefix) {
                    let k: usize = rest
                        .parse()
                        .map_err(|_| DataError::Header(format!("bad feature column '{h}'")))?;
                    cols.push((k, c));
                }
            }
            cols.sort_unstable();
            for (expect, (k, _)) in cols.iter().enumerate() {
                if *k != expect {
                    return Err(DataError::Header(format!(
                        "{prefix} columns must run 0..{} without gaps",
                        cols.len()
                    )));
                }
            }
            Ok(cols.into_iter().map(|(_, c)| c).collect())
        };
        let f1 = block("f1_")?;
        if f1.is_empty() {
            return Err(DataError::Header("no f1_ feature columns".into()));
        }
        Ok(Self {
            id: find("id")?,
            sex: find("sex")?,
            age: find("age")?,
            f1,
            f2: block("f2_")?,
        })
    }
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = File::create(path)?;
    write_dataset(dataset, file)
}

/// Writes the CSV form. `f64` cells use the shortest round-trip representation.
pub fn write_dataset(dataset: &Dataset, writer: impl Write) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let m1 = dataset.m1();
    let m2 = dataset.m2();
    let mut header = vec!["id".to_string(), "sex".into(), "age".into()];
    header.extend((0..m1).map(|k| format!("f1_{k}")));
    if let Some(m2) = m2 {
        header.extend((0..m2).map(|k| format!("f2_{k}")));
    }
    w.write_record(&header)?;
    for r in dataset.records() {
        let mut row = vec![r.id.clone(), r.sex.to_string(), r.age.to_string()];
        row.extend(r.x1.iter().map(f64::to_string));
        if let Some(m2) = m2 {
            match &r.x2 {
                Some(x2) => row.extend(x2.iter().map(f64::to_string)),
                None => row.extend(std::iter::repeat_n(String::new(), m2)),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
