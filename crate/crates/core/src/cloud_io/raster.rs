//! Georeferenced rasters: point-density maps and spectral images.
//!
//! Cell `(col, row)` covers `[ox + col*s, ox + (col+1)*s) x [oy + row*s, oy +
//! (row+1)*s)`, so row 0 is the southern edge. Points exactly on the maximum
//! boundary of a grid built over a cloud join the last cell.
//!
//! ## CSV layout
//!
//! ```text
//! # origin_x=<f> origin_y=<f> cell_size=<f> width=<n> height=<n> bands=<n>
//! v,v,v,...      <- northernmost row (row height-1) of band 0
//! ...
//! v,v,v,...      <- row 0 of band 0, then the same block for band 1, ...
//! ```
//!
//! PGM output is plain `P2` with maxval 65535, north-up, values scaled
//! linearly so the raster maximum maps to 65535. A `# scale=<s>` comment
//! records the value of one grey level.

use std::io::{BufRead, Write};

use super::{Bounds, PointCloud};
use crate::error::{argument, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    origin: [f64; 2],
    cell_size: f64,
    width: usize,
    height: usize,
    bands: usize,
    /// Band-interleaved: `values[(row * width + col) * bands + band]`.
    values: Vec<f64>,
}

impl Raster {
    pub fn new(origin: [f64; 2], cell_size: f64, width: usize, height: usize, bands: usize) -> Result<Self> {
        Self::from_values(origin, cell_size, width, height, bands, vec![0.0; width * height * bands])
    }

    pub fn from_values(
        origin: [f64; 2],
        cell_size: f64,
        width: usize,
        height: usize,
        bands: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(argument(format!("cell size {cell_size} must be > 0")));
        }
        if bands == 0 {
            return Err(argument("raster needs at least one band"));
        }
        if values.len() != width * height * bands {
            return Err(argument(format!(
                "{} values for a {width}x{height}x{bands} raster",
                values.len()
            )));
        }
        Ok(Raster { origin, cell_size, width, height, bands, values })
    }

    /// A 0x0 raster.
    pub fn empty(cell_size: f64) -> Self {
        Raster { origin: [0.0, 0.0], cell_size, width: 0, height: 0, bands: 1, values: Vec::new() }
    }

    /// Single-band zero raster tiling the x-y extent of `bounds`.
    pub fn covering(bounds: &Bounds, cell_size: f64) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(argument(format!("cell size {cell_size} must be > 0")));
        }
        let Some(b) = bounds.aabb() else {
            return Ok(Raster::empty(cell_size));
        };
        let ext = b.extent();
        let cells = |e: f64| ((e / cell_size).ceil() as usize).max(1);
        Raster::new([b.min[0], b.min[1]], cell_size, cells(ext[0]), cells(ext[1]), 1)
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn band_count(&self) -> usize {
        self.bands
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, col: usize, row: usize, band: usize) -> f64 {
        self.values[(row * self.width + col) * self.bands + band]
    }

    pub fn set(&mut self, col: usize, row: usize, band: usize, v: f64) {
        self.values[(row * self.width + col) * self.bands + band] = v;
    }

    /// Values of one band in row-major order (row 0 first).
    pub fn band(&self, band: usize) -> Vec<f64> {
        self.values.iter().skip(band).step_by(self.bands).copied().collect()
    }

    /// Same geometry, single band holding `values`.
    pub fn with_band(&self, values: Vec<f64>) -> Result<Raster> {
        Raster::from_values(self.origin, self.cell_size, self.width, self.height, 1, values)
    }

    /// Half-open cell lookup, clamped into the grid. `None` for a 0x0 raster.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if self.width == 0 || self.height == 0 {
            return None;
        }
        let idx = |v: f64, o: f64, n: usize| {
            let f = ((v - o) / self.cell_size).floor();
            if f <= 0.0 {
                0
            } else {
                (f as usize).min(n - 1)
            }
        };
        Some((idx(x, self.origin[0], self.width), idx(y, self.origin[1], self.height)))
    }

    /// Bilinear interpolation between cell centres, clamped to the edge
    /// cells outside the grid.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) {
        let axis = |v: f64, o: f64, n: usize| -> (usize, usize, f64) {
            let f = ((v - o) / self.cell_size - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = f.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, f - i0 as f64)
        };
        let (c0, c1, tx) = axis(x, self.origin[0], self.width);
        let (r0, r1, ty) = axis(y, self.origin[1], self.height);
        for (b, o) in out.iter_mut().enumerate().take(self.bands) {
            let v00 = self.get(c0, r0, b);
            let v10 = self.get(c1, r0, b);
            let v01 = self.get(c0, r1, b);
            let v11 = self.get(c1, r1, b);
            let south = v00 + (v10 - v00) * tx;
            let north = v01 + (v11 - v01) * tx;
            *o = south + (north - south) * ty;
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# origin_x={} origin_y={} cell_size={} width={} height={} bands={}",
            self.origin[0], self.origin[1], self.cell_size, self.width, self.height, self.bands
        )?;
        for b in 0..self.bands {
            for row in (0..self.height).rev() {
                let line: Vec<String> = (0..self.width).map(|c| self.get(c, row, b).to_string()).collect();
                writeln!(w, "{}", line.join(","))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Raster> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let meta = header.strip_prefix('#').ok_or_else(|| Error::Parse {
            line: 1,
            message: "raster header must start with '#'".into(),
        })?;
        let mut origin = [f64::NAN; 2];
        let (mut cell, mut width, mut height, mut bands) = (f64::NAN, None, None, None);
        for kv in meta.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("bad header entry {kv:?}"),
            })?;
            let num = |v: &str| -> Result<f64> {
                v.parse().map_err(|_| Error::Parse { line: 1, message: format!("{k}: cannot parse {v:?}") })
            };
            let int = |v: &str| -> Result<usize> {
                v.parse().map_err(|_| Error::Parse { line: 1, message: format!("{k}: cannot parse {v:?}") })
            };
            match k {
                "origin_x" => origin[0] = num(v)?,
                "origin_y" => origin[1] = num(v)?,
                "cell_size" => cell = num(v)?,
                "width" => width = Some(int(v)?),
                "height" => height = Some(int(v)?),
                "bands" => bands = Some(int(v)?),
                _ => return Err(Error::Parse { line: 1, message: format!("unknown header key {k:?}") }),
            }
        }
        let (Some(width), Some(height), Some(bands)) = (width, height, bands) else {
            return Err(Error::Parse { line: 1, message: "header needs width, height and bands".into() });
        };
        if origin.iter().any(|v| v.is_nan()) {
            return Err(Error::Parse { line: 1, message: "header needs origin_x and origin_y".into() });
        }
        let mut raster = Raster::new(origin, cell, width, height, bands)?;
        let mut n = 1;
        for b in 0..bands {
            for row in (0..height).rev() {
                n += 1;
                let line = lines.next().transpose()?.ok_or_else(|| Error::Parse {
                    line: n,
                    message: "missing raster row".into(),
                })?;
                let vals: Vec<&str> = line.split(',').map(str::trim).collect();
                if vals.len() != width {
                    return Err(Error::Parse {
                        line: n,
                        message: format!("expected {width} values, found {}", vals.len()),
                    });
                }
                for (c, v) in vals.iter().enumerate() {
                    let v: f64 = v.parse().map_err(|_| Error::Parse {
                        line: n,
                        message: format!("cannot parse {v:?}"),
                    })?;
                    raster.set(c, row, b, v);
                }
            }
        }
        Ok(raster)
    }

    /// Writes one band as plain PGM.
    pub fn write_pgm<W: Write>(&self, band: usize, mut w: W) -> Result<()> {
        let vals = self.band(band);
        let max = vals.iter().copied().fold(0.0f64, f64::max);
        let scale = if max > 0.0 { max / 65535.0 } else { 0.0 };
        writeln!(w, "P2")?;
        writeln!(w, "# scale={scale}")?;
        writeln!(w, "{} {}", self.width, self.height)?;
        writeln!(w, "65535")?;
        for row in (0..self.height).rev() {
            let line: Vec<String> = (0..self.width)
                .map(|c| {
                    let v = self.get(c, row, band).max(0.0);
                    let level = if scale > 0.0 { (v / scale).round().min(65535.0) } else { 0.0 };
                    (level as u32).to_string()
                })
                .collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Planimetric point density in points per square metre.
///
/// The grid is anchored at the cloud's minimum x-y corner. An empty cloud
/// yields a 0x0 raster.
pub fn density_map(cloud: &PointCloud, cell_size: f64) -> Result<Raster> {
    let mut raster = Raster::covering(&cloud.bounds(), cell_size)?;
    if cloud.is_empty() {
        return Ok(raster);
    }
    let mut counts = vec![0u64; raster.width * raster.height];
    for p in cloud.positions() {
        let (c, r) = raster.cell_of(p[0], p[1]).expect("non-empty grid");
        counts[r * raster.width + c] += 1;
    }
    let area = cell_size * cell_size;
    for (v, n) in raster.values.iter_mut().zip(counts) {
        *v = n as f64 / area;
    }
    Ok(raster)
}

/// Attaches IR-R-G values to every point by bilinear interpolation of a
/// three-band raster.
pub fn fuse_spectral(cloud: &PointCloud, raster: &Raster) -> Result<PointCloud> {
    if raster.bands != 3 {
        return Err(argument(format!("spectral raster needs 3 bands, has {}", raster.bands)));
    }
    if raster.width == 0 || raster.height == 0 {
        return Err(argument("spectral raster is empty"));
    }
    if raster.values.iter().any(|v| !(0.0..=255.0).contains(v)) {
        return Err(argument("spectral raster values must lie in [0, 255]"));
    }
    let spectral = cloud
        .positions()
        .iter()
        .map(|p| {
            let mut out = [0.0; 3];
            raster.sample_bilinear(p[0], p[1], &mut out);
            out
        })
        .collect();
    Ok(cloud.with_spectral(spectral))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud_io::PointRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_positions(pts).unwrap()
    }

    #[test]
    fn four_points_in_one_cell() {
        let c = cloud(&[[0.1, 0.1, 0.0], [0.2, 0.3, 0.0], [0.5, 0.5, 1.0], [0.9, 0.9, 2.0]]);
        let r = density_map(&c, 1.0).unwrap();
        assert_eq!((r.width(), r.height()), (1, 1));
        assert_eq!(r.get(0, 0, 0), 4.0);
    }

    #[test]
    fn single_point_half_metre_cell() {
        let r = density_map(&cloud(&[[3.0, 4.0, 0.0]]), 0.5).unwrap();
        assert_eq!(r.get(0, 0, 0), 4.0);
    }

    #[test]
    fn empty_cloud_gives_empty_raster() {
        let r = density_map(&PointCloud::new(), 1.0).unwrap();
        assert_eq!((r.width(), r.height()), (0, 0));
    }

    #[test]
    fn max_boundary_joins_last_cell() {
        let r = density_map(&cloud(&[[0.0, 0.0, 0.0], [2.0, 2.0, 0.0]]), 1.0).unwrap();
        assert_eq!((r.width(), r.height()), (2, 2));
        assert_eq!(r.get(1, 1, 0), 1.0);
        assert_eq!(r.get(0, 0, 0), 1.0);
    }

    #[test]
    fn density_matches_brute_force_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<[f64; 3]> = (0..10_000)
            .map(|_| [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), 0.0])
            .collect();
        let c = cloud(&pts);
        let r = density_map(&c, 1.0).unwrap();
        let b = c.bounds().aabb().copied().unwrap();
        let mut total = 0.0;
        for row in 0..r.height() {
            for col in 0..r.width() {
                let x0 = b.min[0] + col as f64;
                let y0 = b.min[1] + row as f64;
                let last_c = col + 1 == r.width();
                let last_r = row + 1 == r.height();
                let n = pts
                    .iter()
                    .filter(|p| {
                        p[0] >= x0 && (p[0] < x0 + 1.0 || last_c) && p[1] >= y0 && (p[1] < y0 + 1.0 || last_r)
                    })
                    .count();
                assert_eq!(r.get(col, row, 0), n as f64);
                total += r.get(col, row, 0);
            }
        }
        assert_eq!(total, 10_000.0);
    }

    fn rgb_raster() -> Raster {
        // 2x2 cells of 1 m at origin (0, 0); band 0 = 100 / 200 by column.
        let mut r = Raster::new([0.0, 0.0], 1.0, 2, 2, 3).unwrap();
        for row in 0..2 {
            r.set(0, row, 0, 100.0);
            r.set(1, row, 0, 200.0);
            r.set(0, row, 1, 10.0 * (row + 1) as f64);
            r.set(1, row, 1, 10.0 * (row + 1) as f64);
            r.set(0, row, 2, 255.0);
            r.set(1, row, 2, 0.0);
        }
        r
    }

    #[test]
    fn fuse_at_cell_centre_is_verbatim() {
        let c = cloud(&[[0.5, 1.5, 9.0]]);
        let s = fuse_spectral(&c, &rgb_raster()).unwrap().record(0).spectral.unwrap();
        assert_eq!(s, [100.0, 20.0, 255.0]);
    }

    #[test]
    fn fuse_midpoint_averages() {
        let c = cloud(&[[1.0, 0.5, 0.0]]);
        let s = fuse_spectral(&c, &rgb_raster()).unwrap().record(0).spectral.unwrap();
        assert_eq!(s[0], 150.0);
    }

    /// Scalar reference: clamp the query into the span of cell centres, then
    /// weight the four surrounding centres by area.
    fn reference_bilinear(r: &Raster, x: f64, y: f64, band: usize) -> f64 {
        let cx = |c: usize| r.origin()[0] + (c as f64 + 0.5) * r.cell_size();
        let cy = |c: usize| r.origin()[1] + (c as f64 + 0.5) * r.cell_size();
        let x = x.clamp(cx(0), cx(r.width() - 1));
        let y = y.clamp(cy(0), cy(r.height() - 1));
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for row in 0..r.height() {
            for col in 0..r.width() {
                let wx = (1.0 - (x - cx(col)).abs() / r.cell_size()).max(0.0);
                let wy = (1.0 - (y - cy(row)).abs() / r.cell_size()).max(0.0);
                acc += wx * wy * r.get(col, row, band);
                wsum += wx * wy;
            }
        }
        acc / wsum
    }

    #[test]
    fn fuse_clamps_outside_raster() {
        let r = rgb_raster();
        let c = cloud(&[[-10.0, 1.0, 0.0]]);
        let s = fuse_spectral(&c, &r).unwrap().record(0).spectral.unwrap();
        assert_eq!(s[0], 100.0);
        assert_eq!(s[1], reference_bilinear(&r, -10.0, 1.0, 1));
        assert_eq!(s[1], 15.0);
    }

    #[test]
    fn fuse_matches_reference_on_random_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = Raster::new([10.0, -5.0], 2.0, 7, 5, 3).unwrap();
        for v in 0..r.values.len() {
            r.values[v] = rng.random_range(0.0..255.0);
        }
        let pts: Vec<[f64; 3]> = (0..500)
            .map(|_| [rng.random_range(0.0..30.0), rng.random_range(-10.0..10.0), 0.0])
            .collect();
        let fused = fuse_spectral(&cloud(&pts), &r).unwrap();
        for (i, p) in pts.iter().enumerate() {
            let s = fused.record(i).spectral.unwrap();
            for (b, &got) in s.iter().enumerate().take(3) {
                let want = reference_bilinear(&r, p[0], p[1], b);
                assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{} vs {}", got, want);
            }
        }
    }

    #[test]
    fn fuse_keeps_other_fields() {
        let recs = [
            PointRecord::at(0.2, 0.3, 4.0).with_returns(2, 4).with_intensity(9.0),
            PointRecord::at(1.7, 1.1, 5.0),
        ];
        let c = PointCloud::from_records(recs).unwrap();
        let f = fuse_spectral(&c, &rgb_raster()).unwrap();
        assert_eq!(f.len(), c.len());
        for (a, mut b) in c.records().zip(f.records()) {
            b.spectral = None;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fuse_rejects_wrong_band_count() {
        let r = Raster::new([0.0, 0.0], 1.0, 2, 2, 1).unwrap();
        assert!(matches!(fuse_spectral(&cloud(&[[0.0; 3]]), &r), Err(Error::Argument(_))));
    }

    #[test]
    fn csv_round_trip_and_pgm_header() {
        let r = rgb_raster();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let back = Raster::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, r);

        let d = density_map(&cloud(&[[0.0, 0.0, 0.0], [0.1, 0.1, 0.0], [1.5, 0.2, 0.0]]), 1.0).unwrap();
        let mut pgm = Vec::new();
        d.write_pgm(0, &mut pgm).unwrap();
        let s = String::from_utf8(pgm).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "P2");
        assert_eq!(lines[1], format!("# scale={}", 2.0 / 65535.0));
        assert_eq!(lines[2], "2 1");
        assert_eq!(lines[4], "65535 32768");
    }
}
