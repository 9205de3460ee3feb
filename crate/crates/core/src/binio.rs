//! Little-endian binary artifact encoding: an 8-byte magic, a u32 format
//! version, then the payload. Used for indexes and model files.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(mut inner: W, magic: &[u8; 8], version: u32) -> Result<Self> {
        inner.write_all(magic)?;
        inner.write_all(&version.to_le_bytes())?;
        Ok(BinWriter { inner })
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.inner.write_all(&[v])?;
        Ok(())
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn usize(&mut self, v: usize) -> Result<()> {
        self.u64(v as u64)
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.usize(s.len())?;
        self.inner.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn f64s(&mut self, xs: &[f64]) -> Result<()> {
        self.usize(xs.len())?;
        let mut buf = Vec::with_capacity(xs.len() * 8);
        for x in xs {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.inner.write_all(&buf)?;
        Ok(())
    }

    pub fn u32s(&mut self, xs: &[u32]) -> Result<()> {
        self.usize(xs.len())?;
        let mut buf = Vec::with_capacity(xs.len() * 4);
        for x in xs {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.inner.write_all(&buf)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct BinReader<R: Read> {
    inner: R,
    what: &'static str,
}

impl<R: Read> BinReader<R> {
    /// Check the magic and return the reader with the stored version.
    pub fn open(mut inner: R, magic: &[u8; 8], what: &'static str) -> Result<(Self, u32)> {
        let mut m = [0u8; 8];
        inner.read_exact(&mut m).map_err(|_| Error::Format { what, reason: "truncated header".into() })?;
        if &m != magic {
            return Err(Error::Format { what, reason: format!("bad magic {:?}", String::from_utf8_lossy(&m)) });
        }
        let mut r = BinReader { inner, what };
        let version = r.u32()?;
        Ok((r, version))
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Format { what: self.what, reason: format!("truncated payload: {e}") })?;
        Ok(b)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.err(format!("length {v} overflows usize")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn len_checked(&mut self, elem: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.checked_mul(elem).is_none_or(|b| b > (1 << 40)) {
            return Err(self.err(format!("implausible length {n}")));
        }
        Ok(n)
    }

    fn exact(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Format { what: self.what, reason: format!("truncated payload: {e}") })?;
        Ok(buf)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len_checked(1)?;
        let buf = self.exact(n)?;
        String::from_utf8(buf).map_err(|e| self.err(e.to_string()))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len_checked(8)?;
        let buf = self.exact(n * 8)?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn u32s(&mut self) -> Result<Vec<u32>> {
        let n = self.len_checked(4)?;
        let buf = self.exact(n * 4)?;
        Ok(buf.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn err(&self, reason: String) -> Error {
        Error::Format { what: self.what, reason }
    }

    /// Fail unless the stream is exhausted.
    pub fn finish(mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(self.err("trailing bytes".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_magic_check() {
        let mut w = BinWriter::new(Vec::new(), b"TESTMAGC", 3).unwrap();
        w.u32(7).unwrap();
        w.str("héllo").unwrap();
        w.f64s(&[1.5, -0.25]).unwrap();
        w.u32s(&[1, 2, 3]).unwrap();
        let bytes = w.finish().unwrap();

        let (mut r, v) = BinReader::open(&bytes[..], b"TESTMAGC", "test").unwrap();
        assert_eq!(v, 3);
        assert_eq!(r.u32().unwrap(), 7);
        assert_eq!(r.str().unwrap(), "héllo");
        assert_eq!(r.f64s().unwrap(), vec![1.5, -0.25]);
        assert_eq!(r.u32s().unwrap(), vec![1, 2, 3]);
        r.finish().unwrap();

        assert!(BinReader::open(&bytes[..], b"OTHERMAG", "test").is_err());
        assert!(BinReader::open(&bytes[..4], b"TESTMAGC", "test").is_err());
    }
}
