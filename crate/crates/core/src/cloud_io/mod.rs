//! Point records, columnar point clouds and their file formats.
//!
//! Two cloud formats are supported: a whitespace-separated text format (see
//! [`text`]) and a little-endian LAS 1.2 subset (point formats 0 to 3, see
//! [`las`]). Rasters (density maps, spectral images) live in [`raster`].

pub mod las;
pub mod raster;
pub mod text;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};

pub use las::read_las;
pub use raster::{density_map, fuse_spectral, Raster};
pub use text::{read_text_cloud, write_text_cloud};

/// A single LiDAR return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
    pub return_number: u8,
    pub number_of_returns: u8,
    pub classification: u8,
    /// Infrared, red and green, each in `[0, 255]`.
    pub spectral: Option<[f64; 3]>,
}

impl PointRecord {
    /// A single-return point with zero intensity and classification 1.
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        PointRecord {
            x,
            y,
            z,
            intensity: 0.0,
            return_number: 1,
            number_of_returns: 1,
            classification: 1,
            spectral: None,
        }
    }

    pub fn with_returns(mut self, return_number: u8, number_of_returns: u8) -> Self {
        self.return_number = return_number;
        self.number_of_returns = number_of_returns;
        self
    }

    pub fn with_intensity(mut self, intensity: f64) -> Self {
        self.intensity = intensity;
        self
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(Error::Validation("non-finite coordinate".into()));
        }
        if !(self.intensity.is_finite() && self.intensity >= 0.0) {
            return Err(Error::Validation(format!(
                "intensity {} must be a non-negative number",
                self.intensity
            )));
        }
        if self.return_number == 0 || self.number_of_returns == 0 {
            return Err(Error::Validation(
                "return_number and number_of_returns must be >= 1".into(),
            ));
        }
        if self.return_number > self.number_of_returns {
            return Err(Error::Validation(format!(
                "return {} of {}",
                self.return_number, self.number_of_returns
            )));
        }
        if let Some(bands) = self.spectral {
            if bands.iter().any(|v| !(0.0..=255.0).contains(v)) {
                return Err(Error::Validation(format!(
                    "spectral values {bands:?} outside [0, 255]"
                )));
            }
        }
        Ok(())
    }
}

/// Axis-aligned box in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Bounds of a cloud. An empty cloud has [`Bounds::Empty`], never a zero box.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bounds {
    #[default]
    Empty,
    Extent(Aabb),
}

impl Bounds {
    pub fn extend(&mut self, p: [f64; 3]) {
        match self {
            Bounds::Empty => *self = Bounds::Extent(Aabb { min: p, max: p }),
            Bounds::Extent(b) => {
                for (a, &v) in p.iter().enumerate() {
                    b.min[a] = b.min[a].min(v);
                    b.max[a] = b.max[a].max(v);
                }
            }
        }
    }

    pub fn aabb(&self) -> Option<&Aabb> {
        match self {
            Bounds::Empty => None,
            Bounds::Extent(b) => Some(b),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Bounds::Empty)
    }
}

/// An ordered set of LiDAR returns held column by column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    xyz: Vec<[f64; 3]>,
    intensity: Vec<f64>,
    return_number: Vec<u8>,
    number_of_returns: Vec<u8>,
    classification: Vec<u8>,
    spectral: Option<Vec<[f64; 3]>>,
    bounds: Bounds,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a cloud from records, validating each one. Either every record
    /// carries spectral bands or none does.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = PointRecord>,
    {
        let mut cloud = PointCloud::new();
        for (i, r) in records.into_iter().enumerate() {
            r.validate()
                .map_err(|e| Error::Validation(format!("point {i}: {e}")))?;
            cloud.push_unchecked(i, r)?;
        }
        Ok(cloud)
    }

    /// Cloud of single-return points at the given positions.
    pub fn from_positions(positions: &[[f64; 3]]) -> Result<Self> {
        Self::from_records(positions.iter().map(|p| PointRecord::at(p[0], p[1], p[2])))
    }

    fn push_unchecked(&mut self, i: usize, r: PointRecord) -> Result<()> {
        match (&mut self.spectral, r.spectral, i) {
            (None, Some(s), 0) => self.spectral = Some(vec![s]),
            (None, None, _) => {}
            (Some(col), Some(s), _) => col.push(s),
            _ => {
                return Err(Error::Validation(format!(
                    "point {i}: spectral bands must be present on all points or none"
                )))
            }
        }
        let p = r.position();
        self.xyz.push(p);
        self.intensity.push(r.intensity);
        self.return_number.push(r.return_number);
        self.number_of_returns.push(r.number_of_returns);
        self.classification.push(r.classification);
        self.bounds.extend(p);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.xyz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xyz.is_empty()
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.xyz
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensity
    }

    pub fn numbers_of_returns(&self) -> &[u8] {
        &self.number_of_returns
    }

    pub fn spectral(&self) -> Option<&[[f64; 3]]> {
        self.spectral.as_deref()
    }

    pub fn has_spectral(&self) -> bool {
        self.spectral.is_some()
    }

    pub fn record(&self, i: usize) -> PointRecord {
        let [x, y, z] = self.xyz[i];
        PointRecord {
            x,
            y,
            z,
            intensity: self.intensity[i],
            return_number: self.return_number[i],
            number_of_returns: self.number_of_returns[i],
            classification: self.classification[i],
            spectral: self.spectral.as_ref().map(|s| s[i]),
        }
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = PointRecord> + '_ {
        (0..self.len()).map(move |i| self.record(i))
    }

    /// New cloud holding the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let mut out = PointCloud::new();
        for (n, &i) in indices.iter().enumerate() {
            // Records of a valid cloud stay valid.
            out.push_unchecked(n, self.record(i))
                .expect("subset of a consistent cloud");
        }
        out
    }

    /// New cloud holding the points whose mask entry is `keep`.
    pub fn filter_mask(&self, mask: &[bool], keep: bool) -> PointCloud {
        let idx: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == keep)
            .map(|(i, _)| i)
            .collect();
        self.select(&idx)
    }

    /// Same points with every coordinate shifted by `delta`.
    pub fn translated(&self, delta: [f64; 3]) -> PointCloud {
        let mut out = self.clone();
        out.bounds = Bounds::Empty;
        for p in &mut out.xyz {
            for a in 0..3 {
                p[a] += delta[a];
            }
            out.bounds.extend(*p);
        }
        out
    }

    pub(crate) fn with_spectral(&self, spectral: Vec<[f64; 3]>) -> PointCloud {
        assert_eq!(spectral.len(), self.len());
        let mut out = self.clone();
        out.spectral = Some(spectral);
        out
    }
}

/// Reads a cloud from disk, choosing LAS for `.las` files and the text format
/// otherwise.
pub fn read_cloud_file(path: &Path) -> Result<PointCloud> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let is_las = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("las"));
    if is_las {
        read_las(reader)
    } else {
        read_text_cloud(reader)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cloud_has_empty_bounds() {
        let c = PointCloud::new();
        assert!(c.bounds().is_empty());
        assert_eq!(c.len(), 0);
    }

    #[test]
    fn bounds_enclose_points() {
        let c = PointCloud::from_positions(&[[1.0, 5.0, -2.0], [3.0, 2.0, 0.0]]).unwrap();
        let b = c.bounds().aabb().copied().unwrap();
        assert_eq!(b.min, [1.0, 2.0, -2.0]);
        assert_eq!(b.max, [3.0, 5.0, 0.0]);
    }

    #[test]
    fn mixed_spectral_presence_rejected() {
        let mut a = PointRecord::at(0.0, 0.0, 0.0);
        a.spectral = Some([1.0, 2.0, 3.0]);
        let b = PointRecord::at(1.0, 0.0, 0.0);
        assert!(matches!(
            PointCloud::from_records([a, b]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            PointCloud::from_records([b, a]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn return_number_above_count_rejected() {
        let r = PointRecord::at(0.0, 0.0, 0.0).with_returns(3, 2);
        assert!(matches!(r.validate(), Err(Error::Validation(_))));
    }
}
