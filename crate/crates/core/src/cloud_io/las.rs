//! Reader for uncompressed LAS 1.2 files, point data record formats 0 to 3.
//!
//! Only the public header block and the point records are consumed; variable
//! length records are skipped via the offset-to-point-data field. GPS time and
//! RGB fields of formats 1 to 3 are ignored.

use std::io::Read;

use byteorder::{ByteOrder, LittleEndian as LE};

use super::{PointCloud, PointRecord};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LASF";
pub const HEADER_SIZE_1_2: usize = 227;

/// Minimum record length for each supported point data format.
const MIN_RECORD_LEN: [usize; 4] = [20, 28, 26, 34];

/// Fields of the public header block the reader needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LasHeader {
    pub version: (u8, u8),
    pub header_size: u16,
    pub offset_to_points: u32,
    pub point_format: u8,
    pub record_length: u16,
    pub point_count: u32,
    pub scale: [f64; 3],
    pub offset: [f64; 3],
}

impl LasHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing LASF signature".into()));
        }
        if bytes.len() < HEADER_SIZE_1_2 {
            return Err(Error::Truncated(format!(
                "header needs {HEADER_SIZE_1_2} bytes, file has {}",
                bytes.len()
            )));
        }
        let f64_at = |o: usize| LE::read_f64(&bytes[o..o + 8]);
        Ok(LasHeader {
            version: (bytes[24], bytes[25]),
            header_size: LE::read_u16(&bytes[94..96]),
            offset_to_points: LE::read_u32(&bytes[96..100]),
            point_format: bytes[104],
            record_length: LE::read_u16(&bytes[105..107]),
            point_count: LE::read_u32(&bytes[107..111]),
            scale: [f64_at(131), f64_at(139), f64_at(147)],
            offset: [f64_at(155), f64_at(163), f64_at(171)],
        })
    }
}

/// Decodes a LAS 1.2 stream into a cloud.
///
/// Coordinates are `raw * scale + offset`. A zero return number or number of
/// returns (written by some producers that do not track returns) is read as 1.
pub fn read_las<R: Read>(mut source: R) -> Result<PointCloud> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let header = LasHeader::parse(&bytes)?;
    if header.version.0 != 1 || header.version.1 > 2 {
        return Err(Error::Unsupported(format!(
            "LAS version {}.{}",
            header.version.0, header.version.1
        )));
    }
    let format = header.point_format & 0x3f;
    if format as usize >= MIN_RECORD_LEN.len() || header.point_format & 0xc0 != 0 {
        return Err(Error::Unsupported(format!(
            "point data record format {}",
            header.point_format
        )));
    }
    let rec_len = header.record_length as usize;
    if rec_len < MIN_RECORD_LEN[format as usize] {
        return Err(Error::Format(format!(
            "record length {rec_len} too short for format {format}"
        )));
    }
    let start = header.offset_to_points as usize;
    let count = header.point_count as usize;
    let available = bytes.len().saturating_sub(start) / rec_len;
    if start > bytes.len() || available < count {
        return Err(Error::Truncated(format!(
            "header declares {count} points, data holds {available}"
        )));
    }

    let mut records = Vec::with_capacity(count);
    for n in 0..count {
        let rec = &bytes[start + n * rec_len..start + (n + 1) * rec_len];
        let raw = [
            LE::read_i32(&rec[0..4]),
            LE::read_i32(&rec[4..8]),
            LE::read_i32(&rec[8..12]),
        ];
        let coord = |a: usize| raw[a] as f64 * header.scale[a] + header.offset[a];
        let flags = rec[14];
        let return_number = (flags & 0x07).max(1);
        let number_of_returns = ((flags >> 3) & 0x07).max(1);
        records.push(PointRecord {
            x: coord(0),
            y: coord(1),
            z: coord(2),
            intensity: LE::read_u16(&rec[12..14]) as f64,
            return_number,
            number_of_returns,
            classification: rec[15] & 0x1f,
            spectral: None,
        });
    }
    PointCloud::from_records(records)
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;

    fn raw(xyz: [i32; 3]) -> RawPoint {
        RawPoint {
            xyz,
            intensity: 77,
            return_number: 2,
            number_of_returns: 3,
            classification: 5,
        }
    }

    /// Reads X from the first record using fixed offsets only.
    fn reference_first_x(bytes: &[u8]) -> f64 {
        let scale = f64::from_le_bytes(bytes[131..139].try_into().unwrap());
        let offset = f64::from_le_bytes(bytes[155..163].try_into().unwrap());
        let data = u32::from_le_bytes(bytes[96..100].try_into().unwrap()) as usize;
        let x = i32::from_le_bytes(bytes[data..data + 4].try_into().unwrap());
        x as f64 * scale + offset
    }

    #[test]
    fn one_point_format_0() {
        let bytes = build_las(0, [0.01; 3], [0.0; 3], 1, &[raw([1000, 0, 0])]);
        let expected = reference_first_x(&bytes);
        assert_eq!(expected, 10.0);
        let cloud = read_las(bytes.as_slice()).unwrap();
        assert_eq!(cloud.len(), 1);
        let r = cloud.record(0);
        assert_eq!(r.x, expected);
        assert_eq!((r.return_number, r.number_of_returns), (2, 3));
        assert_eq!(r.intensity, 77.0);
        assert_eq!(r.classification, 5);
    }

    #[test]
    fn all_supported_formats() {
        for format in 0..4 {
            let bytes = build_las(format, [0.001; 3], [100.0, 200.0, 0.0], 2, &[raw([1, 2, 3]), raw([-5, 0, 7])]);
            let c = read_las(bytes.as_slice()).unwrap();
            assert_eq!(c.len(), 2);
            assert!((c.record(1).x - 99.995).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_magic() {
        let mut bytes = build_las(0, [0.01; 3], [0.0; 3], 1, &[raw([0, 0, 0])]);
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(read_las(bytes.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn declared_count_exceeds_data() {
        let bytes = build_las(0, [0.01; 3], [0.0; 3], 2, &[raw([0, 0, 0])]);
        assert!(matches!(read_las(bytes.as_slice()), Err(Error::Truncated(_))));
    }

    #[test]
    fn unsupported_format() {
        let mut bytes = build_las(0, [0.01; 3], [0.0; 3], 1, &[raw([0, 0, 0])]);
        bytes[104] = 6;
        assert!(matches!(read_las(bytes.as_slice()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn zero_returns_read_as_one() {
        let mut p = raw([0, 0, 0]);
        p.return_number = 0;
        p.number_of_returns = 0;
        let bytes = build_las(0, [0.01; 3], [0.0; 3], 1, &[p]);
        let r = read_las(bytes.as_slice()).unwrap().record(0);
        assert_eq!((r.return_number, r.number_of_returns), (1, 1));
    }

    proptest! {
        #[test]
        fn dequantization_is_exact(
            xyz in prop::array::uniform3(any::<i32>()),
            scale in prop::array::uniform3(prop::sample::select(vec![1.0, 0.1, 0.01, 0.001, 0.00025])),
            offset in prop::array::uniform3(-1.0e6..1.0e6f64),
        ) {
            let bytes = build_las(0, scale, offset, 1, &[raw(xyz)]);
            let r = read_las(bytes.as_slice()).unwrap().record(0);
            let got = [r.x, r.y, r.z];
            for a in 0..3 {
                prop_assert_eq!(got[a], xyz[a] as f64 * scale[a] + offset[a]);
            }
        }
    }
}
