//! Dataset files.
//!
//! CSV: one row per sample, `label,f1,...,fd`, no header. Labels are
//! nonnegative integers.
//!
//! raw-f32 (all little-endian):
//!
//! ```text
//! magic   4 bytes  "FDSF"
//! N       u64      rows
//! d       u32      features per row
//! K       u32      number of classes
//! N*d     f32      features, row-major
//! N       u32      labels
//! ```

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Label, LabeledDataset};
use crate::io::{read_file, write_file, LeReader, LeWriter};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"FDSF";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Csv,
    RawF32,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "raw-f32" => Ok(Self::RawF32),
            other => Err(Error::param(format!("unknown dataset format `{other}`"))),
        }
    }
}

/// Loads a dataset. For CSV the class count is one past the largest label.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<LabeledDataset> {
    match format {
        DatasetFormat::Csv => load_csv(path, None),
        DatasetFormat::RawF32 => load_raw(path),
    }
}

/// Loads a CSV dataset whose labels must lie in `[0, num_classes)`.
pub fn load_csv(path: &Path, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let bytes = read_file(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let mut features = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::format(path, row, e.to_string()))?;
        let mut fields = record.iter();
        let label_text = fields.next().unwrap_or("");
        let label: Label = label_text
            .parse()
            .map_err(|_| Error::format(path, row, format!("label `{label_text}` is not a class index")))?;
        if let Some(k) = num_classes {
            if label as usize >= k {
                return Err(Error::format(path, row, format!("label {label} >= K = {k}")));
            }
        }
        let before = features.len();
        for text in fields {
            let v: f32 = text
                .parse()
                .map_err(|_| Error::format(path, row, format!("feature `{text}` is not a number")))?;
            features.push(v);
        }
        let d = features.len() - before;
        match dim {
            None if d == 0 => return Err(Error::format(path, row, "row has no features")),
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::format(
                    path,
                    row,
                    format!("row has {d} features, earlier rows have {expected}"),
                ))
            }
            Some(_) => {}
        }
        labels.push(label);
    }
    let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |&m| m as usize + 1));
    LabeledDataset::new(features, labels, dim.unwrap_or(0), k)
}

fn load_raw(path: &Path) -> Result<LabeledDataset> {
    let bytes = read_file(path)?;
    let mut r = LeReader::new(&bytes, path);
    r.magic(MAGIC)?;
    let n = usize::try_from(r.u64()?).map_err(|_| r.error("row count overflows"))?;
    let d = r.u32()? as usize;
    let k = r.u32()? as usize;
    let values = n.checked_mul(d).ok_or_else(|| r.error("N*d overflows"))?;
    r.expect_remaining(values, 4)?;
    let features = (0..values).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
    r.expect_remaining(n, 4)?;
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let l = r.u32()?;
        if l as usize >= k {
            return Err(Error::format(path, i + 1, format!("label {l} >= K = {k}")));
        }
        labels.push(l);
    }
    r.finish()?;
    LabeledDataset::new(features, labels, d, k)
}

pub fn save_dataset(ds: &LabeledDataset, path: &Path, format: DatasetFormat) -> Result<()> {
    let bytes = match format {
        DatasetFormat::Csv => {
            let mut out = String::with_capacity(ds.len() * (ds.dim() + 1) * 8);
            for (x, label) in ds.iter() {
                out.push_str(&label.to_string());
                for v in x {
                    out.push(',');
                    // Display prints the shortest text that parses back to the same f32.
                    out.push_str(&v.to_string());
                }
                out.push('\n');
            }
            out.into_bytes()
        }
        DatasetFormat::RawF32 => {
            let mut w = LeWriter::with_capacity(20 + ds.features().len() * 4 + ds.len() * 4);
            w.bytes(MAGIC);
            w.u64(ds.len() as u64);
            w.u32(ds.dim() as u32);
            w.u32(ds.num_classes() as u32);
            for &v in ds.features() {
                w.f32(v);
            }
            for &l in ds.labels() {
                w.u32(l);
            }
            w.finish()
        }
    };
    write_file(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents).unwrap();
        f
    }

    #[test]
    fn parses_csv() {
        let f = write_tmp("0,1.5,2.0\n1,0.0,-1.0".as_bytes());
        let ds = load_dataset(f.path(), DatasetFormat::Csv).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels(), &[0, 1]);
        assert_eq!(ds.row(1), &[0.0, -1.0]);
        assert_eq!(ds.num_classes(), 2);
    }

    #[test]
    fn empty_csv() {
        let f = write_tmp(b"");
        let ds = load_dataset(f.path(), DatasetFormat::Csv).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn ragged_csv_names_row() {
        let f = write_tmp(b"0,1,2\n1,1,2,3\n");
        match load_dataset(f.path(), DatasetFormat::Csv) {
            Err(Error::Format { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn csv_label_checks() {
        let f = write_tmp(b"0,1\n4,2\n");
        match load_csv(f.path(), Some(3)) {
            Err(Error::Format { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected format error, got {other:?}"),
        }
        let f = write_tmp(b"-1,1\n");
        assert!(load_dataset(f.path(), DatasetFormat::Csv).is_err());
        let f = write_tmp(b"a,1\n");
        assert!(load_dataset(f.path(), DatasetFormat::Csv).is_err());
    }

    #[test]
    fn raw_rejects_corruption() {
        let ds = LabeledDataset::new(vec![1.0, 2.0, 3.0, 4.0], vec![0, 2], 2, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.f32");
        save_dataset(&ds, &p, DatasetFormat::RawF32).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.pop();
        std::fs::write(&p, &bytes).unwrap();
        assert!(load_dataset(&p, DatasetFormat::RawF32).is_err());
        bytes[0] = b'X';
        std::fs::write(&p, &bytes).unwrap();
        assert!(load_dataset(&p, DatasetFormat::RawF32).is_err());
    }

    #[test]
    fn raw_label_out_of_range() {
        let mut w = LeWriter::default();
        w.bytes(MAGIC);
        w.u64(1);
        w.u32(1);
        w.u32(2);
        w.f32(0.5);
        w.u32(2);
        let f = write_tmp(&w.finish());
        assert!(matches!(
            load_dataset(f.path(), DatasetFormat::RawF32),
            Err(Error::Format { row: 1, .. })
        ));
    }
}
