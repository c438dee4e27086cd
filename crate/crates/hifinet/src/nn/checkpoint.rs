//! Flat binary checkpoint container for parameter stores.
//!
//! Layout: magic `HFNC`, format version (u32 LE), tensor count (u32 LE),
//! then per tensor a header of name length (u32 LE) + UTF-8 name + rows +
//! cols (u32 LE each), followed by every tensor's values as little-endian
//! f64 in header order. Tensors are written in sorted-name order so the
//! bytes are reproducible.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::tensor::Tensor2;
use super::ParamStore;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HFNC";
const VERSION: u32 = 1;

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let names = store.names();
    buf.extend_from_slice(&(names.len() as u32).to_le_bytes());
    for name in &names {
        let t = store.value(name);
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    }
    for name in &names {
        for v in store.value(name).data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(&buf)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamStore> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut at = 0usize;

    let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
        if *at + n > bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated checkpoint {} at byte {}",
                path.display(),
                at
            )));
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    let take_u32 = |at: &mut usize| -> Result<u32> {
        let s = take(at, 4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    };

    if take(&mut at, 4)? != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a parameter checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = take_u32(&mut at)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = take_u32(&mut at)? as usize;
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = take_u32(&mut at)? as usize;
        let name = String::from_utf8(take(&mut at, name_len)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("invalid tensor name: {e}")))?;
        let rows = take_u32(&mut at)? as usize;
        let cols = take_u32(&mut at)? as usize;
        headers.push((name, rows, cols));
    }

    let mut store = ParamStore::new();
    for (name, rows, cols) in headers {
        let n = rows * cols;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let s = take(&mut at, 8)?;
            data.push(f64::from_le_bytes([
                s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7],
            ]));
        }
        store.insert(&name, Tensor2::from_vec(rows, cols, data));
    }
    Ok(store)
}
