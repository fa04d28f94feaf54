//! `MMCK` named-array container used for model checkpoints.
//!
//! ```text
//! magic "MMCK" | u32 version | u32 array count
//! per array: u16 name length | name bytes | u8 ndim | ndim * u32 dims | f64 payload
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: [u8; 4] = *b"MMCK";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: &str, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        NamedArray {
            name: name.to_owned(),
            shape,
            data,
        }
    }

    pub fn scalar(name: &str, v: f64) -> Self {
        Self::new(name, vec![1], vec![v])
    }

    pub fn vector(name: &str, data: Vec<f64>) -> Self {
        Self::new(name, vec![data.len()], data)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub arrays: Vec<NamedArray>,
}

impl Container {
    pub fn push(&mut self, a: NamedArray) {
        self.arrays.push(a);
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array {name:?}")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let a = self.get(name)?;
        match a.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Checkpoint(format!("{name:?} is not a scalar"))),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&CONTAINER_MAGIC);
        buf.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            let name = a.name.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Checkpoint(format!("array name too long: {}", a.name)))?;
            let ndim = u8::try_from(a.shape.len())
                .map_err(|_| Error::Checkpoint(format!("too many dims for {}", a.name)))?;
            if a.shape.iter().product::<usize>() != a.data.len() {
                return Err(Error::Checkpoint(format!("shape/data mismatch for {}", a.name)));
            }
            buf.extend_from_slice(&name_len.to_le_bytes());
            buf.extend_from_slice(name);
            buf.push(ndim);
            for &d in &a.shape {
                let d = u32::try_from(d)
                    .map_err(|_| Error::Checkpoint(format!("dim too large in {}", a.name)))?;
                buf.extend_from_slice(&d.to_le_bytes());
            }
            for v in &a.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        if magic != CONTAINER_MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let version = r.u32()?;
        if version != CONTAINER_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("array name is not UTF-8".into()))?
                .to_owned();
            let ndim = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let payload = r.take(n.checked_mul(8).ok_or_else(|| {
                Error::Checkpoint(format!("array {name} too large"))
            })?)?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.push(NamedArray { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Container { arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated container".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_and_errors() {
        let mut c = Container::default();
        c.push(NamedArray::scalar("k", 16.0));
        let bytes = c.encode().unwrap();
        assert_eq!(&bytes[..4], b"MMCK");
        // header 12 + name len 2 + "k" 1 + ndim 1 + dim 4 + payload 8
        assert_eq!(bytes.len(), 12 + 2 + 1 + 1 + 4 + 8);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Container::decode(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(Container::decode(&bad).is_err());
        assert!(Container::decode(&bytes[..bytes.len() - 3]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            rows in 1usize..5,
            cols in 1usize..5,
            seed in prop::collection::vec(any::<u64>(), 25),
        ) {
            // arbitrary bit patterns, including NaN payloads and signed zeros
            let data: Vec<f64> = seed.iter().take(rows * cols).map(|&b| f64::from_bits(b)).collect();
            let mut c = Container::default();
            c.push(NamedArray::new("m", vec![rows, cols], data.clone()));
            c.push(NamedArray::vector("v", vec![-0.0, 1.5]));
            let back = Container::decode(&c.encode().unwrap()).unwrap();
            let got: Vec<u64> = back.get("m").unwrap().data.iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
            prop_assert_eq!(back.get("v").unwrap().data[0].to_bits(), (-0.0f64).to_bits());
        }
    }
}
