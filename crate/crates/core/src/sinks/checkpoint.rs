//! Legacy VTK `STRUCTURED_POINTS` checkpoints.
//!
//! Layout written by [`checkpoint_write`] (one line per entry, `\n` endings):
//!
//! ```text
//! # vtk DataFile Version 3.0
//! nekmini step <step> producer <id> time <t> extents <i0> <i1> <j0> <j1> <k0> <k1>
//! BINARY | ASCII
//! DATASET STRUCTURED_POINTS
//! DIMENSIONS <nx> <ny> <nz>
//! ORIGIN <x> <y> <z>
//! SPACING <dx> <dy> <dz>
//! POINT_DATA <n>                      (when point fields exist)
//! SCALARS <name> double <components>  (per field)
//! LOOKUP_TABLE default
//! <values>
//! CELL_DATA <m>                       (when cell fields exist, same per-field layout)
//! ```
//!
//! Floats in the text header use 17 significant digits (`{:.16e}`). Binary
//! payloads are big-endian f64 followed by a newline; ASCII payloads put one
//! tuple per line, also at 17 significant digits, so both modes round-trip
//! exactly.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::data::{Association, Block, Extents, FieldArray, Snapshot};

const MAGIC: &str = "# vtk DataFile Version 3.0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CheckpointFormat {
    Ascii,
    #[default]
    Binary,
}

impl FromStr for CheckpointFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ascii" => Ok(Self::Ascii),
            "binary" => Ok(Self::Binary),
            other => Err(format!("unknown checkpoint format '{other}'")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("snapshot has no fields to checkpoint")]
    NoFields,
    #[error("field name '{0}' contains whitespace")]
    BadFieldName(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported dataset type '{0}'")]
    UnsupportedDataset(String),
    #[error("truncated payload in field '{0}'")]
    Truncated(String),
}

/// Checkpoint content parsed back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointFile {
    pub step: u64,
    pub producer_id: u32,
    pub time: f64,
    pub block: Block,
}

/// File name for a snapshot block. Extra blocks of one producer get an index
/// suffix so they do not collide.
pub fn checkpoint_file_name(step: u64, producer_id: u32, block_index: usize) -> String {
    if block_index == 0 {
        format!("step{step:06}_blk{producer_id:03}.vtk")
    } else {
        format!("step{step:06}_blk{producer_id:03}_{block_index:02}.vtk")
    }
}

/// Writes one VTK file per block into `dir`. Returns the paths and the total
/// number of bytes written.
pub fn checkpoint_write(
    s: &Snapshot,
    dir: &Path,
    format: CheckpointFormat,
) -> Result<(Vec<PathBuf>, u64), CheckpointError> {
    let mut paths = Vec::with_capacity(s.blocks.len());
    let mut total = 0;
    for (bi, block) in s.blocks.iter().enumerate() {
        let bytes = encode_block(s, block, format)?;
        let path = dir.join(checkpoint_file_name(s.step, s.producer_id, bi));
        write_file(&path, &bytes)?;
        total += bytes.len() as u64;
        paths.push(path);
    }
    Ok((paths, total))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(io_err)?;
    let file = w.into_inner().map_err(|e| io_err(e.into_error()))?;
    file.sync_all().map_err(io_err)
}

fn encode_block(s: &Snapshot, b: &Block, format: CheckpointFormat) -> Result<Vec<u8>, CheckpointError> {
    if b.fields.is_empty() {
        return Err(CheckpointError::NoFields);
    }
    if let Some(f) = b.fields.iter().find(|f| f.name.is_empty() || f.name.contains(char::is_whitespace)) {
        return Err(CheckpointError::BadFieldName(f.name.clone()));
    }
    let e = &b.extents.0;
    let [nx, ny, nz] = b.extents.point_dims();
    let mut out = Vec::with_capacity(512 + 8 * b.value_count());
    let header = format!(
        "{MAGIC}\nnekmini step {} producer {} time {:.16e} extents {} {} {} {} {} {}\n{}\nDATASET STRUCTURED_POINTS\nDIMENSIONS {nx} {ny} {nz}\nORIGIN {:.16e} {:.16e} {:.16e}\nSPACING {:.16e} {:.16e} {:.16e}\n",
        s.step,
        s.producer_id,
        s.time,
        e[0],
        e[1],
        e[2],
        e[3],
        e[4],
        e[5],
        match format {
            CheckpointFormat::Ascii => "ASCII",
            CheckpointFormat::Binary => "BINARY",
        },
        b.origin[0],
        b.origin[1],
        b.origin[2],
        b.spacing[0],
        b.spacing[1],
        b.spacing[2],
    );
    out.extend_from_slice(header.as_bytes());

    for (assoc, section) in [(Association::Point, "POINT_DATA"), (Association::Cell, "CELL_DATA")] {
        let fields: Vec<&FieldArray> = b.fields.iter().filter(|f| f.association == assoc).collect();
        if fields.is_empty() {
            continue;
        }
        out.extend_from_slice(format!("{section} {}\n", b.extents.count(assoc)).as_bytes());
        for f in fields {
            out.extend_from_slice(
                format!("SCALARS {} double {}\nLOOKUP_TABLE default\n", f.name, f.components).as_bytes(),
            );
            match format {
                CheckpointFormat::Binary => {
                    for v in &f.values {
                        out.extend_from_slice(&v.to_be_bytes());
                    }
                    out.push(b'\n');
                }
                CheckpointFormat::Ascii => {
                    let nc = f.components.max(1) as usize;
                    for tuple in f.values.chunks(nc) {
                        let line: Vec<String> = tuple.iter().map(|v| format!("{v:.16e}")).collect();
                        out.extend_from_slice(line.join(" ").as_bytes());
                        out.push(b'\n');
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Reads a checkpoint written by [`checkpoint_write`].
///
/// Step and producer come from the file name when it follows the
/// `step{step}_blk{producer}` pattern, otherwise from the header title.
/// Point fields come back before cell fields, each group in written order.
pub fn checkpoint_read(path: &Path) -> Result<CheckpointFile, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut file = decode(&bytes)?;
    if let Some((step, producer)) = path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(parse_file_name)
    {
        file.step = step;
        file.producer_id = producer;
    }
    Ok(file)
}

fn parse_file_name(name: &str) -> Option<(u64, u32)> {
    let stem = name.strip_suffix(".vtk")?;
    let rest = stem.strip_prefix("step")?;
    let (step, rest) = rest.split_once("_blk")?;
    let producer = rest.split('_').next()?;
    Some((step.parse().ok()?, producer.parse().ok()?))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Option<&'a str> {
        if self.pos >= self.bytes.len() {
            return None;
        }
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&c| c == b'\n').unwrap_or(rest.len());
        self.pos += (end + 1).min(rest.len());
        std::str::from_utf8(&rest[..end]).ok().map(|l| l.trim_end_matches('\r'))
    }

    /// Next non-blank line.
    fn content_line(&mut self) -> Option<&'a str> {
        loop {
            let l = self.line()?;
            if !l.trim().is_empty() {
                return Some(l);
            }
        }
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        if end > self.bytes.len() {
            return None;
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Some(out)
    }
}

fn malformed(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::MalformedHeader(msg.into())
}

fn keyword_values<'a>(line: Option<&'a str>, key: &str, count: usize) -> Result<Vec<&'a str>, CheckpointError> {
    let line = line.ok_or_else(|| malformed(format!("missing {key}")))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(malformed(format!("expected {key}, found '{line}'")));
    }
    let vals: Vec<&str> = parts.collect();
    if vals.len() != count {
        return Err(malformed(format!("{key} expects {count} values")));
    }
    Ok(vals)
}

fn parse_all<T: FromStr>(vals: &[&str], what: &str) -> Result<Vec<T>, CheckpointError> {
    vals.iter()
        .map(|v| v.parse().map_err(|_| malformed(format!("bad {what} value '{v}'"))))
        .collect()
}

fn decode(bytes: &[u8]) -> Result<CheckpointFile, CheckpointError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.line() != Some(MAGIC) {
        return Err(malformed("missing vtk magic line"));
    }
    let title = c.line().ok_or_else(|| malformed("missing title"))?;
    let (step, producer_id, time, extents) = parse_title(title)?;
    let format = match c.line().map(str::trim) {
        Some("BINARY") => CheckpointFormat::Binary,
        Some("ASCII") => CheckpointFormat::Ascii,
        other => return Err(malformed(format!("bad format line {other:?}"))),
    };
    let dataset = keyword_values(c.line(), "DATASET", 1)?;
    if dataset[0] != "STRUCTURED_POINTS" {
        return Err(CheckpointError::UnsupportedDataset(dataset[0].to_string()));
    }
    let dims: Vec<usize> = parse_all(&keyword_values(c.line(), "DIMENSIONS", 3)?, "DIMENSIONS")?;
    let origin: Vec<f64> = parse_all(&keyword_values(c.line(), "ORIGIN", 3)?, "ORIGIN")?;
    let spacing: Vec<f64> = parse_all(&keyword_values(c.line(), "SPACING", 3)?, "SPACING")?;

    let extents = extents.unwrap_or_else(|| Extents::from_dims(dims[0], dims[1], dims[2]));
    if extents.point_dims().to_vec() != dims {
        return Err(malformed("title extents disagree with DIMENSIONS"));
    }

    let mut fields = Vec::new();
    let mut section: Option<(Association, usize)> = None;
    while let Some(line) = c.content_line() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(kw @ ("POINT_DATA" | "CELL_DATA")) => {
                let assoc = if kw == "POINT_DATA" {
                    Association::Point
                } else {
                    Association::Cell
                };
                let n: usize = parts
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| malformed(format!("bad {kw} count")))?;
                if n != extents.count(assoc) {
                    return Err(malformed(format!("{kw} {n} disagrees with dimensions")));
                }
                section = Some((assoc, n));
            }
            Some("SCALARS") => {
                let (assoc, n) = section.ok_or_else(|| malformed("SCALARS outside a data section"))?;
                let name = parts.next().ok_or_else(|| malformed("SCALARS without name"))?.to_string();
                if parts.next() != Some("double") {
                    return Err(malformed(format!("field '{name}' is not double")));
                }
                let components: u32 = match parts.next() {
                    Some(v) => v.parse().map_err(|_| malformed("bad component count"))?,
                    None => 1,
                };
                let lut = c.line().ok_or_else(|| CheckpointError::Truncated(name.clone()))?;
                if !lut.starts_with("LOOKUP_TABLE") {
                    return Err(malformed("missing LOOKUP_TABLE"));
                }
                let count = n * components as usize;
                let values = match format {
                    CheckpointFormat::Binary => {
                        let raw = c
                            .take(8 * count)
                            .ok_or_else(|| CheckpointError::Truncated(name.clone()))?;
                        raw.chunks_exact(8)
                            .map(|w| f64::from_be_bytes(w.try_into().expect("8-byte chunk")))
                            .collect()
                    }
                    CheckpointFormat::Ascii => read_ascii_values(&mut c, count, &name)?,
                };
                fields.push(FieldArray::new(name, assoc, components, values));
            }
            Some(other) => return Err(malformed(format!("unexpected keyword '{other}'"))),
            None => {}
        }
    }

    Ok(CheckpointFile {
        step,
        producer_id,
        time,
        block: Block {
            origin: [origin[0], origin[1], origin[2]],
            spacing: [spacing[0], spacing[1], spacing[2]],
            extents,
            fields,
        },
    })
}

fn read_ascii_values(c: &mut Cursor<'_>, count: usize, name: &str) -> Result<Vec<f64>, CheckpointError> {
    let mut values = Vec::with_capacity(count);
    while values.len() < count {
        let line = c.line().ok_or_else(|| CheckpointError::Truncated(name.to_string()))?;
        for tok in line.split_whitespace() {
            values.push(
                tok.parse()
                    .map_err(|_| malformed(format!("bad value '{tok}' in field '{name}'")))?,
            );
        }
    }
    if values.len() != count {
        return Err(malformed(format!("field '{name}' has excess values")));
    }
    Ok(values)
}

type Title = (u64, u32, f64, Option<Extents>);

fn parse_title(title: &str) -> Result<Title, CheckpointError> {
    let toks: Vec<&str> = title.split_whitespace().collect();
    if toks.first() != Some(&"nekmini") {
        // Foreign file: no step/time metadata.
        return Ok((0, 0, 0.0, None));
    }
    let find = |key: &str, n: usize| -> Result<&[&str], CheckpointError> {
        let at = toks
            .iter()
            .position(|t| *t == key)
            .ok_or_else(|| malformed(format!("title lacks '{key}'")))?;
        toks.get(at + 1..at + 1 + n)
            .ok_or_else(|| malformed(format!("title '{key}' is short")))
    };
    let step = parse_all::<u64>(find("step", 1)?, "step")?[0];
    let producer = parse_all::<u32>(find("producer", 1)?, "producer")?[0];
    let time = parse_all::<f64>(find("time", 1)?, "time")?[0];
    let e = parse_all::<i64>(find("extents", 6)?, "extents")?;
    Ok((step, producer, time, Some(Extents([e[0], e[1], e[2], e[3], e[4], e[5]]))))
}

/// Exact size in bytes of the binary checkpoint of `b`.
pub fn binary_checkpoint_size(s: &Snapshot, b: &Block) -> Result<u64, CheckpointError> {
    encode_block(s, b, CheckpointFormat::Binary).map(|v| v.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Snapshot {
        Snapshot {
            time: 0.125,
            step: 7,
            producer_id: 2,
            blocks: vec![Block {
                origin: [0.1, 0.0, 0.0],
                spacing: [1.0 / 3.0, 0.5, 1.0],
                extents: Extents::new((4, 5), (0, 1), (0, 0)),
                fields: vec![FieldArray::point_scalar("temperature", vec![0.1, 0.2, 1.0 / 3.0, -7e-300])],
            }],
        }
    }

    #[test]
    fn ascii_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let s = small();
        let (paths, bytes) = checkpoint_write(&s, dir.path(), CheckpointFormat::Ascii).unwrap();
        assert_eq!(paths[0].file_name().unwrap(), "step000007_blk002.vtk");
        assert_eq!(bytes, fs::metadata(&paths[0]).unwrap().len());
        let back = checkpoint_read(&paths[0]).unwrap();
        assert_eq!(back.block, s.blocks[0]);
        assert_eq!((back.step, back.producer_id, back.time), (7, 2, 0.125));
    }

    #[test]
    fn header_is_exact() {
        let s = small();
        let bytes = encode_block(&s, &s.blocks[0], CheckpointFormat::Binary).unwrap();
        let text = String::from_utf8_lossy(&bytes[..bytes.len() - 33]).to_string();
        let expected = "# vtk DataFile Version 3.0\n\
nekmini step 7 producer 2 time 1.2500000000000000e-1 extents 4 5 0 1 0 0\n\
BINARY\n\
DATASET STRUCTURED_POINTS\n\
DIMENSIONS 2 2 1\n\
ORIGIN 1.0000000000000001e-1 0.0000000000000000e0 0.0000000000000000e0\n\
SPACING 3.3333333333333331e-1 5.0000000000000000e-1 1.0000000000000000e0\n\
POINT_DATA 4\n\
SCALARS temperature double 1\n\
LOOKUP_TABLE default\n";
        assert_eq!(text, expected);
        assert_eq!(bytes.len(), expected.len() + 4 * 8 + 1);
        assert_eq!(&bytes[expected.len()..expected.len() + 8], &0.1f64.to_be_bytes());
    }

    #[test]
    fn empty_fields_rejected() {
        let mut s = small();
        s.blocks[0].fields.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            checkpoint_write(&s, dir.path(), CheckpointFormat::Binary),
            Err(CheckpointError::NoFields)
        ));
    }

    #[test]
    fn truncated_payload_detected() {
        let dir = tempfile::tempdir().unwrap();
        let (paths, _) = checkpoint_write(&small(), dir.path(), CheckpointFormat::Binary).unwrap();
        let bytes = fs::read(&paths[0]).unwrap();
        fs::write(&paths[0], &bytes[..bytes.len() - 10]).unwrap();
        let err = checkpoint_read(&paths[0]).unwrap_err();
        assert!(matches!(err, CheckpointError::Truncated(ref f) if f == "temperature"));
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn rejects_other_datasets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.vtk");
        fs::write(&path, "# vtk DataFile Version 3.0\nx\nASCII\nDATASET UNSTRUCTURED_GRID\n").unwrap();
        assert!(matches!(
            checkpoint_read(&path),
            Err(CheckpointError::UnsupportedDataset(_))
        ));
        fs::write(&path, "not vtk\n").unwrap();
        assert!(matches!(checkpoint_read(&path), Err(CheckpointError::MalformedHeader(_))));
    }

    #[test]
    fn cell_fields_survive() {
        let mut s = small();
        s.blocks[0]
            .fields
            .push(FieldArray::new("flux", Association::Cell, 2, vec![1.5, -2.5]));
        let dir = tempfile::tempdir().unwrap();
        for format in [CheckpointFormat::Binary, CheckpointFormat::Ascii] {
            let (paths, _) = checkpoint_write(&s, dir.path(), format).unwrap();
            assert_eq!(checkpoint_read(&paths[0]).unwrap().block, s.blocks[0]);
        }
    }

    #[test]
    fn file_names() {
        assert_eq!(checkpoint_file_name(3000, 0, 0), "step003000_blk000.vtk");
        assert_eq!(checkpoint_file_name(1, 4, 2), "step000001_blk004_02.vtk");
        assert_eq!(parse_file_name("step003000_blk004_02.vtk"), Some((3000, 4)));
    }
}
