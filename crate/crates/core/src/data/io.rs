use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::Dataset;

const BINARY_MAGIC: &[u8; 4] = b"FSLF";

/// On-disk feature file layouts.
///
/// * CSV: header `label,f0,...,f{D-1}`, one sample per row.
/// * Binary: `FSLF`, `u32` n, `u32` D, `n·D` `f32` row-major, then n labels
///   each as a `u16` byte length followed by UTF-8. All little-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    Binary,
}

impl FeatureFormat {
    /// `.csv` selects CSV; anything else is treated as binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Binary,
        }
    }
}

impl FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "binary" | "bin" | "fslf" => Ok(Self::Binary),
            other => Err(Error::Config(format!("unknown feature format `{other}`"))),
        }
    }
}

pub fn load_features(path: &Path, format: FeatureFormat) -> Result<Dataset> {
    let file = File::open(path)?;
    match format {
        FeatureFormat::Csv => read_csv(BufReader::new(file)),
        FeatureFormat::Binary => read_binary(BufReader::new(file)),
    }
}

pub fn save_features(dataset: &Dataset, path: &Path, format: FeatureFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        FeatureFormat::Csv => write_csv(dataset, &mut out)?,
        FeatureFormat::Binary => write_binary(dataset, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Ingestion {
        line: 1,
        message: e.to_string(),
    })?;
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Ingestion {
            line: 1,
            message: "empty file".into(),
        });
    }
    if &header[0] != "label" {
        return Err(Error::Ingestion {
            line: 1,
            message: format!("first column must be `label`, found `{}`", &header[0]),
        });
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::Ingestion {
                line: 1,
                message: format!("column {} must be `f{j}`, found `{name}`", j + 1),
            });
        }
    }
    let dim = header.len() - 1;

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Ingestion {
            line,
            message: e.to_string(),
        })?;
        if record.len() != dim + 1 {
            return Err(Error::Ingestion {
                line,
                message: format!("expected {} fields, found {}", dim + 1, record.len()),
            });
        }
        let features = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, field)| {
                let v: f64 = field.parse().map_err(|_| Error::Ingestion {
                    line,
                    message: format!("unparsable value `{field}` in f{j}"),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Ingestion {
                        line,
                        message: format!("non-finite value `{field}` in f{j}"),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((record[0].to_string(), features));
    }
    if rows.is_empty() {
        return Err(Error::Ingestion {
            line: 2,
            message: "no samples".into(),
        });
    }
    Dataset::from_rows(rows).map_err(|e| match e {
        Error::Ingestion { line, message } => Error::Ingestion {
            line: line + 1,
            message,
        },
        other => other,
    })
}

pub(crate) fn write_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["label".to_string()];
    header.extend((0..dataset.dim()).map(|j| format!("f{j}")));
    wtr.write_record(&header).map_err(csv_io)?;
    for item in dataset.items() {
        let mut record = Vec::with_capacity(dataset.dim() + 1);
        record.push(dataset.label_name(item.label).to_string());
        record.extend(item.features.iter().map(|v| v.to_string()));
        wtr.write_record(&record).map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub(crate) fn read_binary<R: Read>(mut reader: R) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    read_exact(&mut reader, &mut magic, 0, "magic")?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Ingestion {
            line: 0,
            message: "missing FSLF magic".into(),
        });
    }
    let n = read_u32(&mut reader, 0, "sample count")? as usize;
    let dim = read_u32(&mut reader, 0, "dimension")? as usize;
    if n == 0 {
        return Err(Error::Ingestion {
            line: 0,
            message: "no samples".into(),
        });
    }
    let mut features = Vec::with_capacity(n);
    let mut buf = vec![0u8; dim * 4];
    for i in 0..n {
        read_exact(&mut reader, &mut buf, i + 1, "feature row")?;
        let row: Vec<f64> = buf
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        features.push(row);
    }
    let mut rows = Vec::with_capacity(n);
    for (i, row) in features.into_iter().enumerate() {
        let mut len = [0u8; 2];
        read_exact(&mut reader, &mut len, i + 1, "label length")?;
        let mut bytes = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact(&mut reader, &mut bytes, i + 1, "label")?;
        let label = String::from_utf8(bytes).map_err(|_| Error::Ingestion {
            line: i + 1,
            message: "label is not valid UTF-8".into(),
        })?;
        rows.push((label, row));
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(Error::Ingestion {
            line: n,
            message: "trailing bytes after last label".into(),
        });
    }
    Dataset::from_rows(rows)
}

pub(crate) fn write_binary<W: Write>(dataset: &Dataset, out: &mut W) -> Result<()> {
    let n = u32::try_from(dataset.len())
        .map_err(|_| Error::Format("too many samples for binary format".into()))?;
    let dim = u32::try_from(dataset.dim())
        .map_err(|_| Error::Format("dimension too large for binary format".into()))?;
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&dim.to_le_bytes())?;
    for item in dataset.items() {
        for &v in &item.features {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    for item in dataset.items() {
        let name = dataset.label_name(item.label).as_bytes();
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Format("label longer than 65535 bytes".into()))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(name)?;
    }
    Ok(())
}

fn read_exact<R: Read>(reader: &mut R, buf: &mut [u8], record: usize, what: &str) -> Result<()> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Ingestion {
            line: record,
            message: format!("truncated file while reading {what}"),
        },
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(reader: &mut R, record: usize, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(reader, &mut b, record, what)?;
    Ok(u32::from_le_bytes(b))
}
