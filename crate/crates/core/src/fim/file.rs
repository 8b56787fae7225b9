//! Fisher files, little-endian: magic `"FFIM"`, `length: u64`,
//! `sample_count: u64`, then `length` values as `f64`.

use std::path::Path;

use super::DiagonalFim;
use crate::io::{read_file, write_file, LeReader, LeWriter};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"FFIM";

pub fn save_fim(fim: &DiagonalFim, path: &Path) -> Result<()> {
    let mut w = LeWriter::with_capacity(20 + fim.len() * 8);
    w.bytes(MAGIC);
    w.u64(fim.len() as u64);
    w.u64(fim.sample_count());
    for &v in fim.values() {
        w.f64(v);
    }
    write_file(path, &w.finish())
}

pub fn load_fim(path: &Path) -> Result<DiagonalFim> {
    let bytes = read_file(path)?;
    let mut r = LeReader::new(&bytes, path);
    r.magic(MAGIC)?;
    let len = usize::try_from(r.u64()?).map_err(|_| r.error("length overflows"))?;
    let count = r.u64()?;
    r.expect_remaining(len, 8)?;
    let values = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    DiagonalFim::new(values, count).map_err(|e| Error::format(path, 0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_entry_in_file_rejected() {
        let mut w = LeWriter::default();
        w.bytes(MAGIC);
        w.u64(1);
        w.u64(1);
        w.f64(-1.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.fim");
        std::fs::write(&p, w.finish()).unwrap();
        assert!(load_fim(&p).is_err());
    }
}
