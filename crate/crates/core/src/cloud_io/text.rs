//! Plain-text point clouds.
//!
//! Line 1 is the header `x y z intensity return_number number_of_returns
//! classification`, optionally followed by ` ir r g`. Every further non-blank
//! line is one whitespace-separated record with exactly the header's columns.
//! Coordinates, intensity and spectral bands are written with six decimals,
//! the integer fields as integers.

use std::io::{BufRead, Write};

use super::{PointCloud, PointRecord};
use crate::error::{Error, Result};

pub const BASE_COLUMNS: [&str; 7] = [
    "x",
    "y",
    "z",
    "intensity",
    "return_number",
    "number_of_returns",
    "classification",
];
pub const SPECTRAL_COLUMNS: [&str; 3] = ["ir", "r", "g"];

fn parse_header(line: &str) -> Option<bool> {
    let cols: Vec<&str> = line.split_whitespace().collect();
    if cols.len() == BASE_COLUMNS.len() && cols == BASE_COLUMNS {
        Some(false)
    } else if cols.len() == BASE_COLUMNS.len() + SPECTRAL_COLUMNS.len()
        && cols[..7] == BASE_COLUMNS
        && cols[7..] == SPECTRAL_COLUMNS
    {
        Some(true)
    } else {
        None
    }
}

fn field<T: std::str::FromStr>(tok: &str, name: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {name}: cannot parse {tok:?}"),
    })
}

fn parse_row(text: &str, line: usize, spectral: bool) -> Result<PointRecord> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let expected = if spectral { 10 } else { 7 };
    if toks.len() != expected {
        return Err(Error::Parse {
            line,
            message: format!("expected {expected} columns, found {}", toks.len()),
        });
    }
    let mut r = PointRecord {
        x: field(toks[0], "x", line)?,
        y: field(toks[1], "y", line)?,
        z: field(toks[2], "z", line)?,
        intensity: field(toks[3], "intensity", line)?,
        return_number: field(toks[4], "return_number", line)?,
        number_of_returns: field(toks[5], "number_of_returns", line)?,
        classification: field(toks[6], "classification", line)?,
        spectral: None,
    };
    if spectral {
        r.spectral = Some([
            field(toks[7], "ir", line)?,
            field(toks[8], "r", line)?,
            field(toks[9], "g", line)?,
        ]);
    }
    r.validate()
        .map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
    Ok(r)
}

/// Reads a text cloud. Parse errors carry the 1-based line number.
pub fn read_text_cloud<R: BufRead>(source: R) -> Result<PointCloud> {
    let mut lines = source.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let spectral = parse_header(header.trim_start_matches('\u{feff}')).ok_or_else(|| {
        Error::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        }
    })?;
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_row(&line, n + 2, spectral)?);
    }
    PointCloud::from_records(records)
}

/// Writes `cloud` in the text format, spectral columns included when present.
pub fn write_text_cloud<W: Write>(cloud: &PointCloud, mut sink: W) -> Result<()> {
    let mut header = BASE_COLUMNS.join(" ");
    if cloud.has_spectral() {
        header.push(' ');
        header.push_str(&SPECTRAL_COLUMNS.join(" "));
    }
    writeln!(sink, "{header}")?;
    for r in cloud.records() {
        write!(
            sink,
            "{:.6} {:.6} {:.6} {:.6} {} {} {}",
            r.x, r.y, r.z, r.intensity, r.return_number, r.number_of_returns, r.classification
        )?;
        if let Some([ir, red, green]) = r.spectral {
            write!(sink, " {ir:.6} {red:.6} {green:.6}")?;
        }
        writeln!(sink)?;
    }
    sink.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "x y z intensity return_number number_of_returns classification\n";

    #[test]
    fn single_row() {
        let src = format!("{HEADER}1.0 2.0 3.0 100 1 2 5\n");
        let c = read_text_cloud(src.as_bytes()).unwrap();
        assert_eq!(c.len(), 1);
        let r = c.record(0);
        assert_eq!((r.x, r.y, r.z), (1.0, 2.0, 3.0));
        assert_eq!(r.intensity, 100.0);
        assert_eq!((r.return_number, r.number_of_returns), (1, 2));
        assert_eq!(r.classification, 5);
        assert!(r.spectral.is_none());
    }

    #[test]
    fn header_only_is_empty() {
        let c = read_text_cloud(HEADER.as_bytes()).unwrap();
        assert_eq!(c.len(), 0);
        assert!(c.bounds().is_empty());
    }

    #[test]
    fn return_above_count_is_validation_error() {
        let src = format!("{HEADER}1 2 3 100 3 2 5\n");
        assert!(matches!(
            read_text_cloud(src.as_bytes()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn malformed_rows_name_line() {
        let src = format!("{HEADER}1 2 3 100 1 1 5\n1 2 3 100 1 1\n");
        match read_text_cloud(src.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let src = format!("{HEADER}1 2 zz 100 1 1 5\n");
        match read_text_cloud(src.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains('z'));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_header() {
        assert!(matches!(
            read_text_cloud("x y z\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            read_text_cloud("".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn write_shapes() {
        let c = PointCloud::from_positions(&[[1.0, 2.0, 3.0]]).unwrap();
        let mut out = Vec::new();
        write_text_cloud(&c, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s.lines().count(), 2);
        assert_eq!(s.lines().next().unwrap(), HEADER.trim_end());

        let mut out = Vec::new();
        write_text_cloud(&PointCloud::new(), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), HEADER);
    }

    #[test]
    fn spectral_columns_round_trip() {
        let mut r = PointRecord::at(1.0, 2.0, 3.0);
        r.spectral = Some([10.5, 20.25, 255.0]);
        let c = PointCloud::from_records([r]).unwrap();
        let mut out = Vec::new();
        write_text_cloud(&c, &mut out).unwrap();
        assert!(out.starts_with(b"x y z intensity return_number number_of_returns classification ir r g\n"));
        let back = read_text_cloud(out.as_slice()).unwrap();
        assert_eq!(back, c);
    }

    fn arb_record() -> impl Strategy<Value = PointRecord> {
        (
            -1.0e5..1.0e5f64,
            -1.0e5..1.0e5f64,
            -500.0..3000.0f64,
            0.0..65535.0f64,
            1u8..=7,
            0u8..7,
            0u8..32,
        )
            .prop_map(|(x, y, z, intensity, n, r, class)| PointRecord {
                x,
                y,
                z,
                intensity,
                return_number: r % n + 1,
                number_of_returns: n,
                classification: class,
                spectral: None,
            })
    }

    proptest! {
        #[test]
        fn round_trip_within_declared_precision(records in prop::collection::vec(arb_record(), 0..200)) {
            let cloud = PointCloud::from_records(records).unwrap();
            let mut buf = Vec::new();
            write_text_cloud(&cloud, &mut buf).unwrap();
            let back = read_text_cloud(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), cloud.len());
            for (a, b) in cloud.records().zip(back.records()) {
                prop_assert!((a.x - b.x).abs() <= 1e-6);
                prop_assert!((a.y - b.y).abs() <= 1e-6);
                prop_assert!((a.z - b.z).abs() <= 1e-6);
                prop_assert!((a.intensity - b.intensity).abs() <= 1e-6);
                prop_assert_eq!(a.return_number, b.return_number);
                prop_assert_eq!(a.number_of_returns, b.number_of_returns);
                prop_assert_eq!(a.classification, b.classification);
            }
        }
    }
}
