//! Flat binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "HSEG" | version: u16 | rank: u16 | rank x extent: u64 | N x f64
//! ```

use super::Tensor;
use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: [u8; 4] = *b"HSEG";
pub const CONTAINER_VERSION: u16 = 1;

const WHAT: &str = "tensor container";

pub(super) fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * t.rank() + 8 * t.len());
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.rank() as u16).to_le_bytes());
    for &extent in t.shape() {
        out.extend_from_slice(&(extent as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
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
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(WHAT, format!("truncated at byte {} (need {n})", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CONTAINER_MAGIC {
        return Err(Error::format(WHAT, "bad magic"));
    }
    let version = r.u16()?;
    if version != CONTAINER_VERSION {
        return Err(Error::format(WHAT, format!("unsupported version {version}")));
    }
    let rank = r.u16()? as usize;
    let mut shape = Vec::with_capacity(rank.min(64));
    let mut count: usize = 1;
    for axis in 0..rank {
        let extent = usize::try_from(r.u64()?)
            .ok()
            .filter(|&e| e > 0)
            .ok_or_else(|| Error::format(WHAT, format!("axis {axis} extent invalid")))?;
        count = count
            .checked_mul(extent)
            .ok_or_else(|| Error::format(WHAT, "element count overflows"))?;
        shape.push(extent);
    }
    let payload = count
        .checked_mul(8)
        .ok_or_else(|| Error::format(WHAT, "payload size overflows"))?;
    if bytes.len() - r.pos != payload {
        return Err(Error::format(
            WHAT,
            format!(
                "payload is {} bytes, header declares {payload}",
                bytes.len() - r.pos
            ),
        ));
    }
    let data: Vec<f64> = r
        .take(payload)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(WHAT, "non-finite value in payload"));
    }
    Ok(Tensor::from_parts(shape, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 1], vec![1.5, -2.0]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[..4], b"HSEG");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..8], &[2, 0]);
        assert_eq!(&b[8..16], &2u64.to_le_bytes());
        assert_eq!(&b[16..24], &1u64.to_le_bytes());
        assert_eq!(&b[24..32], &1.5f64.to_le_bytes());
        assert_eq!(b.len(), 40);
    }

    #[test]
    fn rejects_corrupt_payloads() {
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let good = t.to_bytes();
        assert!(Tensor::from_bytes(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(Tensor::from_bytes(&extra).is_err());
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(Tensor::from_bytes(&magic).is_err());
        let mut version = good.clone();
        version[4] = 9;
        assert!(Tensor::from_bytes(&version).is_err());
        let mut nan = good.clone();
        let off = nan.len() - 8;
        nan[off..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(Tensor::from_bytes(&nan).is_err());
        let mut huge = good;
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(Tensor::from_bytes(&huge).is_err());
    }
}
