//! Reader for the IDX files the MNIST family ships in, optionally gzipped.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Result, VarNetError};

/// Reads a whole IDX file, transparently gunzipping `*.gz`.
fn read_raw(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| VarNetError::io(path, e))?;
    let mut buf = Vec::new();
    let res = if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut buf)
    } else {
        let mut f = file;
        f.read_to_end(&mut buf)
    };
    res.map_err(|e| VarNetError::io(path, e))?;
    Ok(buf)
}

/// Parses an unsigned-byte IDX payload into its dimensions and data.
pub fn parse_idx(bytes: &[u8]) -> Result<(Vec<usize>, &[u8])> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(VarNetError::Format("not an IDX file".into()));
    }
    if bytes[2] != 0x08 {
        return Err(VarNetError::Format(format!("unsupported IDX element type 0x{:02x}", bytes[2])));
    }
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(VarNetError::Format("truncated IDX header".into()));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let body = &bytes[header..];
    if body.len() != count {
        return Err(VarNetError::Format(format!(
            "IDX body has {} bytes, dimensions {dims:?} need {count}",
            body.len()
        )));
    }
    Ok((dims, body))
}

/// Finds `name` or `name.gz` in `dir`.
pub fn locate(dir: &Path, name: &str) -> Option<PathBuf> {
    [dir.join(name), dir.join(format!("{name}.gz"))]
        .into_iter()
        .find(|p| p.is_file())
}

/// Images scaled to `[0, 1]` plus labels, as `(n, rows, cols, pixels, labels)`.
pub fn load_pair(images: &Path, labels: &Path) -> Result<(usize, usize, usize, Vec<f64>, Vec<usize>)> {
    let raw = read_raw(images)?;
    let (dims, body) = parse_idx(&raw)?;
    let [n, h, w] = dims[..] else {
        return Err(VarNetError::Format(format!("image file has rank {}, expected 3", dims.len())));
    };
    let pixels = body.iter().map(|&b| b as f64 / 255.0).collect();
    let raw = read_raw(labels)?;
    let (ldims, lbody) = parse_idx(&raw)?;
    if ldims != [n] {
        return Err(VarNetError::Format(format!("label file dims {ldims:?} do not match {n} images")));
    }
    Ok((n, h, w, pixels, lbody.iter().map(|&b| b as usize).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let mut f = vec![0, 0, 8, 2, 0, 0, 0, 2, 0, 0, 0, 3];
        f.extend([1, 2, 3, 4, 5, 6]);
        let (dims, body) = parse_idx(&f).unwrap();
        assert_eq!(dims, vec![2, 3]);
        assert_eq!(body, &[1, 2, 3, 4, 5, 6]);
        assert!(matches!(parse_idx(&f[..15]), Err(VarNetError::Format(_))));
        assert!(matches!(parse_idx(&[1, 2, 3]), Err(VarNetError::Format(_))));
    }
}
