//! EMB1 embedding container.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! b"EMB1" | dim: u32 | count: u32 | count * dim * f32
//! ```
//!
//! Row ids live in a sidecar text file next to the binary (`<file>.ids`), one
//! record per line as `<ordinal>\t<id>`. Lines starting with `#` are header
//! records (`# key=value`) and carry provenance; they are not rows.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub rows: Vec<Vec<f32>>,
    /// One id per row: a frame id or a class index rendered as text.
    pub ids: Vec<String>,
    /// Sidecar header records as `(key, value)`, in file order.
    pub header: Vec<(String, String)>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            ids: Vec::new(),
            header: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, id: impl Into<String>, row: Vec<f32>) -> Result<()> {
        let id = id.into();
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: row.len(),
            });
        }
        if id.is_empty() || id.contains(['\t', '\n', '\r']) {
            return Err(Error::format("<memory>", format!("invalid row id {id:?}")));
        }
        self.ids.push(id);
        self.rows.push(row);
        Ok(())
    }

    pub fn push_vector(&mut self, id: impl Into<String>, v: &EmbeddingVector) -> Result<()> {
        self.push(id, v.as_slice().iter().map(|&x| x as f32).collect())
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Rows as `(id, vector)` pairs. Fails if any row is non-finite.
    pub fn vectors(&self) -> Result<Vec<(String, EmbeddingVector)>> {
        self.ids
            .iter()
            .zip(&self.rows)
            .map(|(id, row)| Ok((id.clone(), EmbeddingVector::from_f32(row)?)))
            .collect()
    }

    /// Rows keyed by id. Duplicate ids are rejected.
    pub fn to_map(&self) -> Result<HashMap<String, EmbeddingVector>> {
        let mut map = HashMap::with_capacity(self.len());
        for (id, v) in self.vectors()? {
            if map.contains_key(&id) {
                return Err(Error::format(
                    "<memory>",
                    format!("duplicate row id {id:?}"),
                ));
            }
            map.insert(id, v);
        }
        Ok(map)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.len() * self.dim * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for row in &self.rows {
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn sidecar_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            out.push_str(&format!("# {k}={v}\n"));
        }
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(&format!("{i}\t{id}\n"));
        }
        out
    }

    /// Decodes the binary payload. Rows get empty ids until a sidecar is applied.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(origin, "truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::format(origin, "bad magic, expected EMB1"));
        }
        let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if dim == 0 && count > 0 {
            return Err(Error::format(
                origin,
                "zero dimension with non-empty payload",
            ));
        }
        let expected = dim
            .checked_mul(count)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(origin, "payload size overflows"))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() < expected {
            return Err(Error::format(
                origin,
                format!("truncated payload: {} of {expected} bytes", payload.len()),
            ));
        }
        if payload.len() > expected {
            return Err(Error::format(
                origin,
                format!("{} trailing bytes after payload", payload.len() - expected),
            ));
        }
        let rows = if dim == 0 {
            Vec::new()
        } else {
            payload
                .chunks_exact(dim * 4)
                .map(|row| {
                    row.chunks_exact(4)
                        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                        .collect()
                })
                .collect()
        };
        Ok(Self {
            dim,
            rows,
            ids: vec![String::new(); count],
            header: Vec::new(),
        })
    }

    /// Applies sidecar text: ordinals must cover `0..count` exactly once.
    pub fn apply_sidecar(&mut self, text: &str, origin: &Path) -> Result<()> {
        let mut ids: Vec<Option<String>> = vec![None; self.len()];
        let mut header = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                let (k, v) = rest.split_once('=').unwrap_or((rest, ""));
                header.push((k.trim().to_string(), v.trim().to_string()));
                continue;
            }
            let (ordinal, id) = line.split_once('\t').ok_or_else(|| {
                Error::format(
                    origin,
                    format!("sidecar line {}: expected ordinal<TAB>id", lineno + 1),
                )
            })?;
            let ordinal: usize = ordinal.trim().parse().map_err(|_| {
                Error::format(origin, format!("sidecar line {}: bad ordinal", lineno + 1))
            })?;
            let slot = ids.get_mut(ordinal).ok_or_else(|| {
                Error::format(
                    origin,
                    format!(
                        "sidecar ordinal {ordinal} out of range for {} rows",
                        self.len()
                    ),
                )
            })?;
            if slot.is_some() {
                return Err(Error::format(
                    origin,
                    format!("sidecar ordinal {ordinal} repeated"),
                ));
            }
            if id.is_empty() {
                return Err(Error::format(
                    origin,
                    format!("sidecar ordinal {ordinal} has empty id"),
                ));
            }
            *slot = Some(id.to_string());
        }
        let mut resolved = Vec::with_capacity(ids.len());
        for (i, id) in ids.into_iter().enumerate() {
            resolved.push(
                id.ok_or_else(|| Error::format(origin, format!("sidecar has no id for row {i}")))?,
            );
        }
        self.ids = resolved;
        self.header = header;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut table = Self::from_bytes(&bytes, path)?;
        let sidecar = sidecar_path(path);
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        table.apply_sidecar(&text, &sidecar)?;
        Ok(table)
    }

    /// Writes the binary and its sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        if self.rows.len() != self.ids.len() {
            return Err(Error::format(path, "row and id counts differ"));
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let sidecar = sidecar_path(path);
        std::fs::write(&sidecar, self.sidecar_text()).map_err(|e| Error::io(&sidecar, e))?;
        Ok(())
    }
}

/// `<path>.ids`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".ids");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(3);
        t.push("a", vec![1.0, -2.5, 0.25]).unwrap();
        t.push("b", vec![0.0, 3.0, 1e-7]).unwrap();
        t.header.push(("seed".into(), "7".into()));
        t
    }

    #[test]
    fn byte_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(&bytes[4..8], &[3, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 12 + 2 * 3 * 4);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb");
        let t = sample();
        t.write(&path).unwrap();
        assert!(sidecar_path(&path).exists());
        let back = EmbeddingTable::read(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.header_value("seed"), Some("7"));
    }

    #[test]
    fn rejects_wrong_magic() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(EmbeddingTable::from_bytes(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        let bytes = sample().to_bytes();
        for cut in [0, 5, 11, 13, bytes.len() - 1] {
            assert!(
                EmbeddingTable::from_bytes(&bytes[..cut], Path::new("x")).is_err(),
                "cut {cut}"
            );
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(EmbeddingTable::from_bytes(&longer, Path::new("x")).is_err());
    }

    #[test]
    fn empty_table() {
        let t = EmbeddingTable::new(0);
        let back = EmbeddingTable::from_bytes(&t.to_bytes(), Path::new("x")).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn sidecar_validation() {
        let mut t = EmbeddingTable::from_bytes(&sample().to_bytes(), Path::new("x")).unwrap();
        let p = Path::new("x.ids");
        assert!(t.clone().apply_sidecar("0\ta\n", p).is_err());
        assert!(t.clone().apply_sidecar("0\ta\n0\tb\n", p).is_err());
        assert!(t.clone().apply_sidecar("0\ta\n2\tb\n", p).is_err());
        assert!(t.clone().apply_sidecar("0 a\n1\tb\n", p).is_err());
        t.apply_sidecar("# model=vit\n1\tb\n0\ta\n", p).unwrap();
        assert_eq!(t.ids, vec!["a", "b"]);
        assert_eq!(t.header_value("model"), Some("vit"));
    }

    #[test]
    fn rejects_non_finite_rows_on_conversion() {
        let mut t = EmbeddingTable::new(1);
        t.push("a", vec![f32::NAN]).unwrap();
        assert!(t.vectors().is_err());
    }

    proptest! {
        #[test]
        fn bytes_round_trip(dim in 1usize..8, rows in proptest::collection::vec(proptest::collection::vec(-1e6f32..1e6, 8), 0..6)) {
            let mut t = EmbeddingTable::new(dim);
            for (i, r) in rows.iter().enumerate() {
                t.push(format!("r{i}"), r[..dim].to_vec()).unwrap();
            }
            let mut back = EmbeddingTable::from_bytes(&t.to_bytes(), Path::new("x")).unwrap();
            back.apply_sidecar(&t.sidecar_text(), Path::new("x.ids")).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
