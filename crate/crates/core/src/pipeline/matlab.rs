//! Minimal reader for Level 5 MAT-files, enough for the public bearing datasets.
//!
//! Numeric (real) matrices are decoded to `f64`; other classes are listed with
//! no payload. Compressed elements are inflated with zlib.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::VibrationSignal;
use crate::Float;

const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_INT64: u32 = 12;
const MI_UINT64: u32 = 13;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;

/// Numeric array classes (`mxDOUBLE_CLASS` through `mxUINT64_CLASS`).
const NUMERIC_CLASSES: std::ops::RangeInclusive<u8> = 6..=15;

/// Where a record comes from, which fixes its documented sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordSource {
    /// CWRU drive-end accelerometer, 12 kHz.
    CwruDriveEnd,
    /// JNU roller-bearing rig, 50 kHz.
    Jnu,
    Custom(f64),
}

impl RecordSource {
    pub fn sample_rate(self) -> f64 {
        match self {
            RecordSource::CwruDriveEnd => 12_000.0,
            RecordSource::Jnu => 50_000.0,
            RecordSource::Custom(fs) => fs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub class: u8,
    /// Column-major real part; `None` for non-numeric or complex arrays.
    pub data: Option<Vec<f64>>,
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    endian: Endian,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!("truncated MAT data at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b: [u8; 4] = self.take(4)?.try_into().expect("4 bytes");
        Ok(match self.endian {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        })
    }

    /// Reads one element tag and payload, skipping alignment padding.
    fn element(&mut self) -> Result<(u32, &'a [u8])> {
        let first = self.u32()?;
        if first >> 16 != 0 {
            // small data element: 2-byte size, 2-byte type, 4 bytes of data
            let size = (first >> 16) as usize;
            let data = self.take(4)?;
            return Ok((first & 0xffff, &data[..size.min(4)]));
        }
        let size = self.u32()? as usize;
        let data = self.take(size)?;
        if first != MI_COMPRESSED {
            let pad = (8 - size % 8) % 8;
            let pad = pad.min(self.remaining());
            self.take(pad)?;
        }
        Ok((first, data))
    }
}

fn decode_numeric(ty: u32, data: &[u8], endian: Endian) -> Result<Vec<f64>> {
    macro_rules! conv {
        ($t:ty, $n:expr) => {
            data.chunks_exact($n)
                .map(|c| {
                    let b: [u8; $n] = c.try_into().expect("chunk");
                    (match endian {
                        Endian::Little => <$t>::from_le_bytes(b),
                        Endian::Big => <$t>::from_be_bytes(b),
                    }) as f64
                })
                .collect()
        };
    }
    Ok(match ty {
        MI_INT8 => data.iter().map(|&b| f64::from(b as i8)).collect(),
        MI_UINT8 => data.iter().map(|&b| f64::from(b)).collect(),
        MI_INT16 => conv!(i16, 2),
        MI_UINT16 => conv!(u16, 2),
        MI_INT32 => conv!(i32, 4),
        MI_UINT32 => conv!(u32, 4),
        MI_SINGLE => conv!(f32, 4),
        MI_DOUBLE => conv!(f64, 8),
        MI_INT64 => conv!(i64, 8),
        MI_UINT64 => conv!(u64, 8),
        other => return Err(Error::Format(format!("unsupported MAT numeric type {other}"))),
    })
}

fn parse_matrix(payload: &[u8], endian: Endian) -> Result<MatArray> {
    let mut cur = Cursor { buf: payload, pos: 0, endian };
    let (_, flags) = cur.element()?;
    if flags.len() < 4 {
        return Err(Error::Format("MAT array flags too short".into()));
    }
    let flag_word = match endian {
        Endian::Little => u32::from_le_bytes(flags[..4].try_into().expect("4 bytes")),
        Endian::Big => u32::from_be_bytes(flags[..4].try_into().expect("4 bytes")),
    };
    let class = (flag_word & 0xff) as u8;
    let complex = flag_word & 0x800 != 0;
    let (_, dims_raw) = cur.element()?;
    let dims = decode_numeric(MI_INT32, dims_raw, endian)?
        .into_iter()
        .map(|d| d as usize)
        .collect();
    let (_, name) = cur.element()?;
    let name = String::from_utf8_lossy(name).trim_end_matches('\0').to_string();
    let data = if NUMERIC_CLASSES.contains(&class) && !complex {
        let (ty, real) = cur.element()?;
        Some(decode_numeric(ty, real, endian)?)
    } else {
        None
    };
    Ok(MatArray { name, dims, class, data })
}

fn parse_elements(buf: &[u8], endian: Endian, out: &mut Vec<MatArray>) -> Result<()> {
    let mut cur = Cursor { buf, pos: 0, endian };
    while cur.remaining() >= 8 {
        let (ty, payload) = cur.element()?;
        match ty {
            MI_MATRIX => out.push(parse_matrix(payload, endian)?),
            MI_COMPRESSED => {
                let mut inflated = Vec::new();
                flate2::read::ZlibDecoder::new(payload)
                    .read_to_end(&mut inflated)
                    .map_err(|e| Error::Format(format!("bad compressed MAT element: {e}")))?;
                parse_elements(&inflated, endian, out)?;
            }
            _ => {}
        }
    }
    Ok(())
}

/// Lists every top-level array in a Level 5 MAT-file.
pub fn read_mat_arrays(path: &Path) -> Result<Vec<MatArray>> {
    let bytes = fs::read(path).map_err(|e| Error::io_at(path, e))?;
    if bytes.len() < 128 {
        return Err(Error::Format(format!("{}: too short for a MAT-file header", path.display())));
    }
    let endian = match &bytes[126..128] {
        b"IM" => Endian::Little,
        b"MI" => Endian::Big,
        _ => {
            return Err(Error::Format(format!(
                "{}: not a Level 5 MAT-file (v7.3/HDF5 files are unsupported)",
                path.display()
            )))
        }
    };
    let mut out = Vec::new();
    parse_elements(&bytes[128..], endian, &mut out)?;
    Ok(out)
}

/// Loads one channel of a bearing record.
///
/// `channel_key` matches an array name exactly, or failing that, as a unique
/// suffix (`DE_time` finds `X097_DE_time`).
pub fn ingest_matlab_records<T: Float>(path: &Path, channel_key: &str, source: RecordSource) -> Result<VibrationSignal<T>> {
    let arrays = read_mat_arrays(path)?;
    let array = match arrays.iter().find(|a| a.name == channel_key) {
        Some(a) => a,
        None => {
            let mut hits = arrays.iter().filter(|a| a.name.ends_with(channel_key));
            match (hits.next(), hits.next()) {
                (Some(a), None) => a,
                (Some(_), Some(_)) => {
                    return Err(Error::KeyNotFound(format!("{channel_key} (ambiguous suffix in {})", path.display())))
                }
                _ => return Err(Error::KeyNotFound(channel_key.to_string())),
            }
        }
    };
    let data = array
        .data
        .as_ref()
        .ok_or_else(|| Error::Format(format!("array `{}` is not a real numeric array", array.name)))?;
    VibrationSignal::new(data.iter().map(|&v| T::lit(v)).collect(), source.sample_rate())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::io::Write;

    fn tag(ty: u32, len: usize) -> Vec<u8> {
        let mut v = ty.to_le_bytes().to_vec();
        v.extend((len as u32).to_le_bytes());
        v
    }

    fn padded(ty: u32, data: &[u8]) -> Vec<u8> {
        let mut v = tag(ty, data.len());
        v.extend_from_slice(data);
        v.resize(v.len() + (8 - data.len() % 8) % 8, 0);
        v
    }

    /// Encodes a column vector as an `miMATRIX` element.
    pub(crate) fn matrix_element(name: &str, class: u8, ty: u32, payload: &[u8], n: usize) -> Vec<u8> {
        let mut body = padded(MI_UINT32, &[class, 0, 0, 0, 0, 0, 0, 0]);
        let dims: Vec<u8> = [n as i32, 1].iter().flat_map(|d| d.to_le_bytes()).collect();
        body.extend(padded(MI_INT32, &dims));
        body.extend(padded(MI_INT8, name.as_bytes()));
        body.extend(padded(ty, payload));
        let mut el = tag(MI_MATRIX, body.len());
        el.extend(body);
        el
    }

    pub(crate) fn mat_file(elements: &[Vec<u8>]) -> Vec<u8> {
        let mut bytes = vec![b' '; 116];
        bytes[..20].copy_from_slice(b"MATLAB 5.0 MAT-file,");
        bytes.extend([0u8; 8]);
        bytes.extend([0x00, 0x01]);
        bytes.extend(b"IM");
        for e in elements {
            bytes.extend(e);
        }
        bytes
    }

    pub(crate) fn doubles(values: &[f64]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn reads_cwru_style_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("97.mat");
        let values = [0.1, -0.2, 0.3, 0.05, -0.01];
        let file = mat_file(&[
            matrix_element("X097_DE_time", 6, MI_DOUBLE, &doubles(&values), 5),
            matrix_element("X097_FE_time", 6, MI_DOUBLE, &doubles(&[1.0, 2.0]), 2),
            matrix_element("X097RPM", 6, MI_DOUBLE, &doubles(&[1796.0]), 1),
        ]);
        fs::write(&path, file).unwrap();
        let sig = ingest_matlab_records::<f64>(&path, "DE_time", RecordSource::CwruDriveEnd).unwrap();
        assert_eq!(sig.samples, values);
        assert_eq!(sig.fs, 12_000.0);
        let arrays = read_mat_arrays(&path).unwrap();
        assert_eq!(arrays.len(), 3);
        assert_eq!(arrays[2].data.as_deref(), Some(&[1796.0][..]));
    }

    #[test]
    fn reads_compressed_single_precision_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("jnu.mat");
        let payload: Vec<u8> = [1.5f32, -2.5, 3.25].iter().flat_map(|v| v.to_le_bytes()).collect();
        let raw = matrix_element("ib600", 7, MI_SINGLE, &payload, 3);
        let mut enc = flate2::write::ZlibEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&raw).unwrap();
        let z = enc.finish().unwrap();
        let mut el = tag(MI_COMPRESSED, z.len());
        el.extend(z);
        fs::write(&path, mat_file(&[el])).unwrap();
        let sig = ingest_matlab_records::<f32>(&path, "ib600", RecordSource::Jnu).unwrap();
        assert_eq!(sig.samples, vec![1.5, -2.5, 3.25]);
        assert_eq!(sig.fs, 50_000.0);
    }

    #[test]
    fn error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.mat");
        let chars: Vec<u8> = "ab".encode_utf16().flat_map(|c| c.to_le_bytes()).collect();
        fs::write(
            &path,
            mat_file(&[
                matrix_element("label", 4, MI_UINT16, &chars, 2),
                matrix_element("X1_DE_time", 6, MI_DOUBLE, &doubles(&[0.0]), 1),
                matrix_element("X2_DE_time", 6, MI_DOUBLE, &doubles(&[0.0]), 1),
            ]),
        )
        .unwrap();
        assert!(matches!(
            ingest_matlab_records::<f64>(&path, "missing", RecordSource::CwruDriveEnd),
            Err(Error::KeyNotFound(_))
        ));
        assert!(matches!(
            ingest_matlab_records::<f64>(&path, "label", RecordSource::CwruDriveEnd),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            ingest_matlab_records::<f64>(&path, "DE_time", RecordSource::CwruDriveEnd),
            Err(Error::KeyNotFound(_))
        ));
        assert!(matches!(
            ingest_matlab_records::<f64>(&dir.path().join("nope.mat"), "x", RecordSource::Jnu),
            Err(Error::FileNotFound(_))
        ));
    }
}
