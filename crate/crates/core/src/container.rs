//! Binary embedding container and its companion metadata file.
//!
//! Layout (little-endian):
//!
//! ```text
//! "UDFS"            4 bytes
//! version = 1       u32
//! n                 u64
//! d                 u64
//! label_count       u32
//! features          n*d f32, row-major
//! labels            n i64
//! ```
//!
//! Metadata lives next to the container at `<path>.meta`, one `key=value`
//! per line (UTF-8). Class names are stored as `class.<id>=<name>`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::error::{Result, UnidaError};

pub const MAGIC: &[u8; 4] = b"UDFS";
pub const VERSION: u32 = 1;
/// Bytes before the feature payload.
pub const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 4;

/// Raw container contents, before any domain-level validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub features: Array2<f32>,
    pub labels: Vec<i64>,
    pub label_count: u32,
    pub meta: BTreeMap<String, String>,
}

/// Path of the companion metadata file for a container.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Size in bytes of a container body holding `n` rows of `d` features.
pub fn encoded_len(n: usize, d: usize) -> usize {
    HEADER_LEN + 4 * n * d + 8 * n
}

impl Container {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let (n, d) = self.features.dim();
        if self.labels.len() != n {
            return Err(UnidaError::Format(format!(
                "{} labels for {} rows",
                self.labels.len(),
                n
            )));
        }
        let mut buf = Vec::with_capacity(encoded_len(n, d));
        buf.extend_from_slice(MAGIC);
        buf.write_u32::<LittleEndian>(VERSION)?;
        buf.write_u64::<LittleEndian>(n as u64)?;
        buf.write_u64::<LittleEndian>(d as u64)?;
        buf.write_u32::<LittleEndian>(self.label_count)?;
        for v in self.features.iter() {
            buf.write_f32::<LittleEndian>(*v)?;
        }
        for l in &self.labels {
            buf.write_i64::<LittleEndian>(*l)?;
        }
        Ok(buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(UnidaError::Format(format!(
                "container truncated: {} bytes",
                bytes.len()
            )));
        }
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(UnidaError::Format(format!("bad magic {magic:?}")));
        }
        let version = cur.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(UnidaError::Format(format!("unsupported version {version}")));
        }
        let n = cur.read_u64::<LittleEndian>()?;
        let d = cur.read_u64::<LittleEndian>()?;
        let label_count = cur.read_u32::<LittleEndian>()?;
        let expected = n
            .checked_mul(d)
            .and_then(|nd| nd.checked_mul(4))
            .and_then(|f| n.checked_mul(8).and_then(|l| f.checked_add(l)))
            .and_then(|p| p.checked_add(HEADER_LEN as u64))
            .ok_or_else(|| UnidaError::Format("header sizes overflow".into()))?;
        if expected != bytes.len() as u64 {
            return Err(UnidaError::Format(format!(
                "expected {expected} bytes for n={n}, d={d}, found {}",
                bytes.len()
            )));
        }
        let (n, d) = (n as usize, d as usize);
        let mut data = vec![0f32; n * d];
        cur.read_f32_into::<LittleEndian>(&mut data)?;
        let mut labels = vec![0i64; n];
        cur.read_i64_into::<LittleEndian>(&mut labels)?;
        let features = Array2::from_shape_vec((n, d), data)
            .map_err(|e| UnidaError::Format(e.to_string()))?;
        Ok(Container {
            features,
            labels,
            label_count,
            meta: BTreeMap::new(),
        })
    }

    /// Reads a container and, when present, its metadata file.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut c = Self::decode(&bytes)?;
        let mp = meta_path(path);
        if mp.exists() {
            c.meta = parse_meta(&fs::read_to_string(mp)?)?;
        }
        Ok(c)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.encode()?;
        let meta = render_meta(&self.meta)?;
        fs::File::create(path)?.write_all(&bytes)?;
        fs::write(meta_path(path), meta)?;
        Ok(())
    }
}

pub fn parse_meta(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            UnidaError::Format(format!("metadata line {}: missing '='", lineno + 1))
        })?;
        out.insert(k.trim().to_string(), v.to_string());
    }
    Ok(out)
}

/// Renders metadata with plain keys sorted first, then `class.<id>` in id order.
pub fn render_meta(meta: &BTreeMap<String, String>) -> Result<String> {
    let mut plain = Vec::new();
    let mut classes = Vec::new();
    for (k, v) in meta {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(UnidaError::Format(format!("unencodable metadata entry {k:?}")));
        }
        match k.strip_prefix("class.").and_then(|id| id.parse::<usize>().ok()) {
            Some(id) => classes.push((id, k, v)),
            None => plain.push((k, v)),
        }
    }
    classes.sort_by_key(|(id, _, _)| *id);
    let mut s = String::new();
    for (k, v) in plain {
        s.push_str(&format!("{k}={v}\n"));
    }
    for (_, k, v) in classes {
        s.push_str(&format!("{k}={v}\n"));
    }
    Ok(s)
}

/// Collects `class.<id>` entries into a dense list; ids must be `0..count`.
pub fn class_names_from_meta(meta: &BTreeMap<String, String>) -> Result<Vec<String>> {
    let mut entries = BTreeMap::new();
    for (k, v) in meta {
        if let Some(id) = k.strip_prefix("class.") {
            let id: usize = id
                .parse()
                .map_err(|_| UnidaError::Format(format!("bad class key {k:?}")))?;
            entries.insert(id, v.clone());
        }
    }
    entries
        .into_iter()
        .enumerate()
        .map(|(expected, (id, name))| {
            if id == expected {
                Ok(name)
            } else {
                Err(UnidaError::Format(format!("class ids not contiguous at {expected}")))
            }
        })
        .collect()
}
