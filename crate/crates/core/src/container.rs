//! Self-describing binary arrays.
//!
//! Layout (all integers little-endian): `b"MHDC"`, `u16` version, `u8` dtype
//! (1 = f64), `u8` rank, `rank × u64` dims, `rank × (u16 length, UTF-8 bytes)`
//! axis labels, then the row-major payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MHDC";
pub const VERSION: u16 = 1;
pub const DTYPE_F64_LE: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayContainer {
    pub dims: Vec<u64>,
    pub labels: Vec<String>,
    pub data: Vec<f64>,
}

impl ArrayContainer {
    pub fn new(dims: Vec<u64>, labels: Vec<String>, data: Vec<f64>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::Container(format!(
                "{} labels for rank {}",
                labels.len(),
                dims.len()
            )));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::Container("rank exceeds 255".into()));
        }
        let count = element_count(&dims)?;
        if count != data.len() as u64 {
            return Err(Error::Container(format!(
                "dims hold {count} elements, data has {}",
                data.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| l.len() > u16::MAX as usize) {
            return Err(Error::Container(format!("axis label too long: {} bytes", l.len())));
        }
        Ok(ArrayContainer { dims, labels, data })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.data.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(DTYPE_F64_LE);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&(l.len() as u16).to_le_bytes());
            out.extend_from_slice(l.as_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Container("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let dtype = r.take(1)?[0];
        if dtype != DTYPE_F64_LE {
            return Err(Error::Container(format!("unsupported dtype code {dtype}")));
        }
        let rank = r.take(1)?[0] as usize;
        let dims = (0..rank)
            .map(|_| Ok(u64::from_le_bytes(r.array()?)))
            .collect::<Result<Vec<u64>>>()?;
        let labels = (0..rank)
            .map(|_| {
                let len = u16::from_le_bytes(r.array()?) as usize;
                String::from_utf8(r.take(len)?.to_vec())
                    .map_err(|_| Error::Container("axis label is not UTF-8".into()))
            })
            .collect::<Result<Vec<String>>>()?;
        let count = element_count(&dims)?;
        let payload = &bytes[r.pos..];
        if count.checked_mul(8) != Some(payload.len() as u64) {
            return Err(Error::Container(format!(
                "payload length mismatch: expected {count} f64 values, found {} bytes",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(ArrayContainer { dims, labels, data })
    }
}

fn element_count(dims: &[u64]) -> Result<u64> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Container("dims overflow".into()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Container("truncated header".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(std::io::Error::other(format!("no file name in {}", path.display()))))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_array(path: &Path, array: &ArrayContainer) -> Result<()> {
    write_atomic(path, &array.encode())
}

pub fn load_array(path: &Path) -> Result<ArrayContainer> {
    ArrayContainer::decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ArrayContainer {
        ArrayContainer::new(vec![2, 3], vec!["x".into(), "y".into()], vec![1.0, -0.5, f64::MIN_POSITIVE, 3e300, -0.0, 7.25]).unwrap()
    }

    #[test]
    fn header_bytes() {
        let b = sample().encode();
        assert_eq!(&b[..4], b"MHDC");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(b[6], 1);
        assert_eq!(b[7], 2);
        assert_eq!(&b[8..16], &[2, 0, 0, 0, 0, 0, 0, 0]);
        // labels follow the dims
        assert_eq!(&b[24..27], &[1, 0, b'x']);
        // 1.0 little-endian is 00 .. 00 f0 3f
        let payload = &b[b.len() - 48..];
        assert_eq!(&payload[..8], &[0, 0, 0, 0, 0, 0, 0xf0, 0x3f]);
    }

    #[test]
    fn roundtrip_and_errors() {
        let a = sample();
        let bytes = a.encode();
        let back = ArrayContainer::decode(&bytes).unwrap();
        assert_eq!(back.encode(), bytes);
        assert!(back.data[4].is_sign_negative());

        let err = ArrayContainer::decode(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("payload length mismatch"), "{err}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ArrayContainer::decode(&bad).is_err());
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(ArrayContainer::decode(&v2).unwrap_err().to_string().contains("version"));
        assert!(ArrayContainer::new(vec![2], vec!["x".into()], vec![1.0]).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mhdc");
        save_array(&p, &sample()).unwrap();
        assert_eq!(load_array(&p).unwrap(), sample());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
