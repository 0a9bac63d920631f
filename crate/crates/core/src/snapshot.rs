//! Checksummed JSON-lines snapshot files.
//!
//! Layout:
//!
//! ```text
//! GFG1 <version> <record count> <crc32 of body, 8 hex digits>\n
//! [optional preamble object]\n
//! {record}\n
//! {record}\n
//! ...
//! ```
//!
//! The body is every byte after the header line. Registry snapshots carry no
//! preamble; device caches put their state record there. Files are replaced
//! atomically: the new contents go to a sibling temp file which is synced and
//! then renamed over the target.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub const MAGIC: &str = "GFG1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("storage failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt snapshot {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },
}

impl SnapshotError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        SnapshotError::Io {
            path: path.to_owned(),
            source,
        }
    }

    fn corrupt(path: &Path, detail: impl Into<String>) -> Self {
        SnapshotError::Corrupt {
            path: path.to_owned(),
            detail: detail.into(),
        }
    }
}

/// Serializes a snapshot to bytes.
pub fn encode<P, R, I>(preamble: Option<&P>, records: I) -> Vec<u8>
where
    P: Serialize,
    R: Serialize,
    I: IntoIterator<Item = R>,
{
    let mut body = Vec::new();
    if let Some(p) = preamble {
        serde_json::to_writer(&mut body, p).expect("preamble serializes");
        body.push(b'\n');
    }
    let mut count = 0u64;
    for r in records {
        serde_json::to_writer(&mut body, &r).expect("record serializes");
        body.push(b'\n');
        count += 1;
    }
    let crc = crc32fast::hash(&body);
    let mut out = format!("{MAGIC} {FORMAT_VERSION} {count} {crc:08x}\n").into_bytes();
    out.extend_from_slice(&body);
    out
}

/// Writes `bytes` to `path` via temp file, fsync and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SnapshotError> {
    let tmp = temp_path(path);
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        drop(f);
        fs::rename(&tmp, path)?;
        sync_parent(path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| SnapshotError::io(path, e))
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

fn sync_parent(path: &Path) -> io::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            // directories cannot be opened for sync on every platform
            if let Ok(d) = OpenOptions::new().read(true).open(dir) {
                let _ = d.sync_all();
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

pub fn save<P, R, I>(path: &Path, preamble: Option<&P>, records: I) -> Result<u64, SnapshotError>
where
    P: Serialize,
    R: Serialize,
    I: IntoIterator<Item = R>,
{
    let bytes = encode(preamble, records);
    write_atomic(path, &bytes)?;
    Ok(bytes.len() as u64)
}

/// A decoded snapshot.
#[derive(Debug)]
pub struct Decoded<P, R> {
    pub preamble: Option<P>,
    pub records: Vec<R>,
}

/// Reads and verifies a snapshot. `with_preamble` states whether the first
/// body line is a preamble object rather than a record.
pub fn load<P, R>(path: &Path, with_preamble: bool) -> Result<Decoded<P, R>, SnapshotError>
where
    P: DeserializeOwned,
    R: DeserializeOwned,
{
    let bytes = fs::read(path).map_err(|e| SnapshotError::io(path, e))?;
    decode(path, &bytes, with_preamble)
}

fn decode<P, R>(path: &Path, bytes: &[u8], with_preamble: bool) -> Result<Decoded<P, R>, SnapshotError>
where
    P: DeserializeOwned,
    R: DeserializeOwned,
{
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| SnapshotError::corrupt(path, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| SnapshotError::corrupt(path, "header is not UTF-8"))?;
    let fields: Vec<&str> = header.split(' ').collect();
    let [magic, version, count, crc] = fields[..] else {
        return Err(SnapshotError::corrupt(path, format!("bad header {header:?}")));
    };
    if magic != MAGIC {
        return Err(SnapshotError::corrupt(path, format!("bad magic {magic:?}")));
    }
    let version: u32 = version
        .parse()
        .map_err(|_| SnapshotError::corrupt(path, format!("bad version {version:?}")))?;
    if version != FORMAT_VERSION {
        return Err(SnapshotError::corrupt(path, format!("unsupported version {version}")));
    }
    let count: usize = count
        .parse()
        .map_err(|_| SnapshotError::corrupt(path, format!("bad record count {count:?}")))?;
    let crc = u32::from_str_radix(crc, 16)
        .ok()
        .filter(|_| crc.len() == 8)
        .ok_or_else(|| SnapshotError::corrupt(path, format!("bad checksum field {crc:?}")))?;

    let body = &bytes[header_end + 1..];
    let actual = crc32fast::hash(body);
    if actual != crc {
        return Err(SnapshotError::corrupt(
            path,
            format!("checksum mismatch: header {crc:08x}, body {actual:08x}"),
        ));
    }
    if !body.is_empty() && body.last() != Some(&b'\n') {
        return Err(SnapshotError::corrupt(path, "body does not end with a newline"));
    }

    let mut lines = body.split(|&b| b == b'\n');
    // split yields a trailing empty slice after the final newline
    let mut next_line = |what: &str| -> Result<&[u8], SnapshotError> {
        match lines.next() {
            Some(l) if !l.is_empty() => Ok(l),
            _ => Err(SnapshotError::corrupt(path, format!("missing {what}"))),
        }
    };

    let preamble = if with_preamble {
        let line = next_line("preamble")?;
        Some(
            serde_json::from_slice(line)
                .map_err(|e| SnapshotError::corrupt(path, format!("preamble: {e}")))?,
        )
    } else {
        None
    };

    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let line = next_line(&format!("record {}", i + 1))?;
        records.push(
            serde_json::from_slice(line)
                .map_err(|e| SnapshotError::corrupt(path, format!("record {}: {e}", i + 1)))?,
        );
    }
    if lines.any(|l| !l.is_empty()) {
        return Err(SnapshotError::corrupt(path, "more records than the header declares"));
    }
    Ok(Decoded { preamble, records })
}
