//! Bit-exact field snapshots: one line of structured text followed by the
//! raw little-endian binary64 payload in (component, i3, i2, i1) order with
//! i1 fastest.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const FORMAT_VERSION: u32 = 1;

/// Parsed snapshot header.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub version: u32,
    pub name: String,
    pub components: usize,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub time: f64,
    pub payload_len: usize,
}

impl SnapshotHeader {
    fn expected_payload(&self) -> usize {
        8 * self.components * self.n1 * self.n2 * self.n3
    }
}

/// Write a field snapshot; the payload is the field's value buffer verbatim.
pub fn write_snapshot(field: &Field, name: &str, time: f64, path: &Path) -> Result<()> {
    if name.contains(char::is_whitespace) {
        return Err(Error::Format(format!("snapshot name '{name}' must not contain spaces")));
    }
    let g = &field.grid;
    let payload_len = 8 * field.values.len();
    let header = format!(
        "fbns-snap {FORMAT_VERSION} name={name} components={} n1={} n2={} n3={} time={:.16e} payload={payload_len}\n",
        field.components, g.n1, g.n2, g.n3, time
    );
    let mut out = std::fs::File::create(path)?;
    out.write_all(header.as_bytes())?;
    let mut bytes = Vec::with_capacity(payload_len);
    for v in &field.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

/// Read a snapshot back onto a grid; dimensions must match and the payload
/// must be exactly as promised by the header.
pub fn read_snapshot(path: &Path, grid: &Grid) -> Result<(SnapshotHeader, Field)> {
    let mut file = std::fs::File::open(path)?;
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)?;
    let newline = raw
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let header_text = std::str::from_utf8(&raw[..newline])
        .map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let header = parse_header(header_text)?;
    if header.payload_len != header.expected_payload() {
        return Err(Error::Format(format!(
            "header payload length {} does not match dimensions (expected {})",
            header.payload_len,
            header.expected_payload()
        )));
    }
    let payload = &raw[newline + 1..];
    if payload.len() != header.payload_len {
        return Err(Error::Format(format!(
            "payload truncated: got {} bytes, header promised {}",
            payload.len(),
            header.payload_len
        )));
    }
    if header.n1 != grid.n1 || header.n2 != grid.n2 || header.n3 != grid.n3 {
        return Err(Error::Format(format!(
            "snapshot dimensions {}x{}x{} do not match the grid {}x{}x{}",
            header.n1, header.n2, header.n3, grid.n1, grid.n2, grid.n3
        )));
    }
    let mut field = Field::zeros(grid, header.components);
    for (i, chunk) in payload.chunks_exact(8).enumerate() {
        field.values[i] = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
    }
    Ok((header, field))
}

fn parse_header(text: &str) -> Result<SnapshotHeader> {
    let mut parts = text.split_whitespace();
    let magic = parts.next().unwrap_or("");
    if magic != "fbns-snap" {
        return Err(Error::Format(format!("bad magic '{magic}'")));
    }
    let version: u32 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("missing format version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let mut name = None;
    let mut components = None;
    let mut n1 = None;
    let mut n2 = None;
    let mut n3 = None;
    let mut time = None;
    let mut payload = None;
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header token '{kv}'")))?;
        match k {
            "name" => name = Some(v.to_string()),
            "components" => components = v.parse().ok(),
            "n1" => n1 = v.parse().ok(),
            "n2" => n2 = v.parse().ok(),
            "n3" => n3 = v.parse().ok(),
            "time" => time = v.parse().ok(),
            "payload" => payload = v.parse().ok(),
            other => return Err(Error::Format(format!("unknown header key '{other}'"))),
        }
    }
    Ok(SnapshotHeader {
        version,
        name: name.ok_or_else(|| Error::Format("missing name".into()))?,
        components: components.ok_or_else(|| Error::Format("missing components".into()))?,
        n1: n1.ok_or_else(|| Error::Format("missing n1".into()))?,
        n2: n2.ok_or_else(|| Error::Format("missing n2".into()))?,
        n3: n3.ok_or_else(|| Error::Format("missing n3".into()))?,
        time: time.ok_or_else(|| Error::Format("missing time".into()))?,
        payload_len: payload.ok_or_else(|| Error::Format("missing payload length".into()))?,
    })
}
