//! Binary containers for complex fields (`CGHF`) and Gaussian sets (`CGGS`).
//!
//! Both are little-endian. Files are written to a sibling temporary path and
//! renamed into place.
//!
//! ```text
//! CGHF: "CGHF" u16:version u32:C u32:H u32:W u8:dtype  real[C·H·W] imag[C·H·W]
//! CGGS: "CGGS" u16:version u32:N u32:C  pre_position[2N] pre_scale[2N]
//!       rotation[N] amplitude[N·C] phase[N·C] pre_opacity[N]   (all f32)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::complex_field::ComplexField;
use crate::error::{Error, Result};
use crate::field::GaussianSet;

pub const FIELD_MAGIC: &[u8; 4] = b"CGHF";
pub const GAUSSIAN_MAGIC: &[u8; 4] = b"CGGS";
pub const FORMAT_VERSION: u16 = 1;

/// Sample type of a stored field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldDtype {
    F32 = 1,
    F64 = 2,
}

impl FieldDtype {
    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Self::F32),
            2 => Ok(Self::F64),
            other => Err(Error::Format(format!("unknown dtype tag {other}"))),
        }
    }

    fn size(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

/// Writes `bytes` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
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
            .ok_or_else(|| Error::Format("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Format(format!(
                "bad magic, expected {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported version {version}, expected {FORMAT_VERSION}"
            )));
        }
        Ok(())
    }

    fn values(&mut self, count: usize, dtype: FieldDtype) -> Result<Vec<f64>> {
        let len = count
            .checked_mul(dtype.size())
            .ok_or_else(|| Error::Format("size overflow".into()))?;
        let raw = self.take(len)?;
        Ok(match dtype {
            FieldDtype::F32 => raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect(),
            FieldDtype::F64 => raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        })
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn dim_u32(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

fn push_values(out: &mut Vec<u8>, values: &[f64], dtype: FieldDtype) {
    for &v in values {
        match dtype {
            FieldDtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            FieldDtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
}

pub fn encode_field(field: &ComplexField, dtype: FieldDtype) -> Result<Vec<u8>> {
    let (c, h, w) = field.dims();
    let mut out = Vec::with_capacity(19 + 2 * c * h * w * dtype.size());
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dim_u32(c, "channel count")?);
    out.extend_from_slice(&dim_u32(h, "height")?);
    out.extend_from_slice(&dim_u32(w, "width")?);
    out.push(dtype as u8);
    push_values(&mut out, &field.real, dtype);
    push_values(&mut out, &field.imag, dtype);
    Ok(out)
}

pub fn decode_field(bytes: &[u8]) -> Result<ComplexField> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(FIELD_MAGIC)?;
    let (c, h, w) = (r.u32()?, r.u32()?, r.u32()?);
    let dtype = FieldDtype::from_tag(r.u8()?)?;
    let n = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::Format("size overflow".into()))?;
    let real = r.values(n, dtype)?;
    let imag = r.values(n, dtype)?;
    r.finish()?;
    ComplexField::from_parts(c, h, w, real, imag)
}

pub fn save_field(path: &Path, field: &ComplexField, dtype: FieldDtype) -> Result<()> {
    write_atomic(path, &encode_field(field, dtype)?)
}

pub fn load_field(path: &Path) -> Result<ComplexField> {
    decode_field(&read_all(path)?)
}

pub fn encode_gaussians(set: &GaussianSet) -> Result<Vec<u8>> {
    set.validate_shapes()?;
    let mut out = Vec::with_capacity(14 + set.parameter_count() * 4);
    out.extend_from_slice(GAUSSIAN_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dim_u32(set.len(), "primitive count")?);
    out.extend_from_slice(&dim_u32(set.channels(), "channel count")?);
    for (_, values) in set.groups() {
        push_values(&mut out, values, FieldDtype::F32);
    }
    Ok(out)
}

pub fn decode_gaussians(bytes: &[u8]) -> Result<GaussianSet> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(GAUSSIAN_MAGIC)?;
    let n = r.u32()?;
    let c = r.u32()?;
    if c == 0 {
        return Err(Error::Format("zero channels".into()));
    }
    let f = FieldDtype::F32;
    let pre_position = r.values(2 * n, f)?;
    let pre_scale = r.values(2 * n, f)?;
    let rotation = r.values(n, f)?;
    let amplitude = r.values(n * c, f)?;
    let phase = r.values(n * c, f)?;
    let pre_opacity = r.values(n, f)?;
    r.finish()?;
    GaussianSet::from_parts(c, pre_position, pre_scale, rotation, amplitude, phase, pre_opacity)
}

pub fn save_gaussians(path: &Path, set: &GaussianSet) -> Result<()> {
    write_atomic(path, &encode_gaussians(set)?)
}

pub fn load_gaussians(path: &Path) -> Result<GaussianSet> {
    decode_gaussians(&read_all(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_header_layout() {
        let f = ComplexField::zeros(3, 2, 5);
        let b = encode_field(&f, FieldDtype::F64).unwrap();
        assert_eq!(&b[..4], b"CGHF");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..10], &[3, 0, 0, 0]);
        assert_eq!(&b[10..14], &[2, 0, 0, 0]);
        assert_eq!(&b[14..18], &[5, 0, 0, 0]);
        assert_eq!(b[18], 2);
        assert_eq!(b.len(), 19 + 2 * 30 * 8);
    }

    #[test]
    fn truncated_and_trailing_bytes_are_rejected() {
        let mut f = ComplexField::zeros(1, 2, 2);
        f.real[1] = 0.25;
        let b = encode_field(&f, FieldDtype::F32).unwrap();
        assert!(matches!(decode_field(&b[..b.len() - 1]), Err(Error::Format(_))));
        let mut longer = b.clone();
        longer.push(0);
        assert!(matches!(decode_field(&longer), Err(Error::Format(_))));
        assert_eq!(decode_field(&b).unwrap(), f);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut b = encode_gaussians(&GaussianSet::zeros(1, 1)).unwrap();
        b[4] = 9;
        assert!(matches!(decode_gaussians(&b), Err(Error::Format(_))));
        b[0] = b'X';
        assert!(matches!(decode_gaussians(&b), Err(Error::Format(_))));
    }
}
