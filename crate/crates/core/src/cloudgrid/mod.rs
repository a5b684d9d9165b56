//! Gridded binary cloud-mask time series and their reduction to
//! availability statistics and per-site series.
//!
//! Grids are equirectangular. Row 0 is the northernmost row (`lat_max`
//! edge) and column 0 the westernmost (`lon_min` edge); pixel centers sit
//! half a pixel inside those edges.

mod cmg;
mod seasonal;
mod synth;

pub use cmg::{load_cloud_masks, read_cmg, save_cloud_masks, write_cmg, CellEncoding};
pub use seasonal::{seasonal_profile, OutlierPolicy, SeasonalProfile, SourceSummary};
pub use synth::synth_generate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ROI binarization threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

const SPACING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_lat: usize,
    pub n_lon: usize,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GridSpec {
    /// Validated grid with square pixels.
    pub fn new(n_lat: usize, n_lon: usize, lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self> {
        let spec = GridSpec {
            n_lat,
            n_lon,
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid of `n_lat x n_lon` square pixels of `pixel_size` degrees whose
    /// south-west corner is at (`lat_min`, `lon_min`).
    pub fn from_corner(n_lat: usize, n_lon: usize, lat_min: f64, lon_min: f64, pixel_size: f64) -> Result<Self> {
        Self::new(
            n_lat,
            n_lon,
            lat_min,
            lat_min + n_lat as f64 * pixel_size,
            lon_min,
            lon_min + n_lon as f64 * pixel_size,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lat == 0 || self.n_lon == 0 {
            return Err(Error::InvalidGrid("n_lat and n_lon must be at least 1".into()));
        }
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidGrid("non-finite bounds".into()));
        }
        if self.lat_min >= self.lat_max || self.lon_min >= self.lon_max {
            return Err(Error::InvalidGrid(format!(
                "bounds must be increasing (lat {}..{}, lon {}..{})",
                self.lat_min, self.lat_max, self.lon_min, self.lon_max
            )));
        }
        if self.lat_min < -90.0 || self.lat_max > 90.0 {
            return Err(Error::InvalidGrid("latitude bounds outside [-90, 90]".into()));
        }
        let dlat = self.lat_step();
        let dlon = self.lon_step();
        if (dlat - dlon).abs() > SPACING_TOL * dlat.max(dlon) {
            return Err(Error::InvalidGrid(format!(
                "pixels must be square: lat step {dlat} vs lon step {dlon}"
            )));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_lat * self.n_lon
    }

    fn lat_step(&self) -> f64 {
        (self.lat_max - self.lat_min) / self.n_lat as f64
    }

    fn lon_step(&self) -> f64 {
        (self.lon_max - self.lon_min) / self.n_lon as f64
    }

    /// Degrees per pixel.
    pub fn pixel_size(&self) -> f64 {
        self.lat_step()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_lon + col
    }

    #[inline]
    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.n_lon, index % self.n_lon)
    }

    /// Center of pixel (`row`, `col`) as (lat, lon) degrees.
    pub fn center(&self, row: usize, col: usize) -> (f64, f64) {
        let lat = self.lat_max - (row as f64 + 0.5) * self.lat_step();
        let lon = self.lon_min + (col as f64 + 0.5) * self.lon_step();
        (lat, lon)
    }

    /// Pixel containing (lat, lon). Points on the southern or eastern outer
    /// edge belong to the last row/column.
    pub fn locate(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        if !(self.lat_min..=self.lat_max).contains(&lat) || !(self.lon_min..=self.lon_max).contains(&lon) {
            return None;
        }
        let row = (((self.lat_max - lat) / self.lat_step()).floor() as usize).min(self.n_lat - 1);
        let col = (((lon - self.lon_min) / self.lon_step()).floor() as usize).min(self.n_lon - 1);
        Some((row, col))
    }
}

/// Time-ordered stack of binary cloud grids (0 = clear, 1 = cloud).
#[derive(Debug, Clone, PartialEq)]
pub struct CloudMaskSeries {
    spec: GridSpec,
    timestamps: Vec<i64>,
    /// Row-major frames, concatenated.
    cells: Vec<u8>,
    source_id: String,
}

impl CloudMaskSeries {
    pub fn new(spec: GridSpec, timestamps: Vec<i64>, cells: Vec<u8>, source_id: impl Into<String>) -> Result<Self> {
        spec.validate()?;
        if timestamps.is_empty() {
            return Err(Error::DimensionMismatch("series needs at least one frame".into()));
        }
        let n_cells = spec.n_cells();
        if cells.len() != timestamps.len() * n_cells {
            return Err(Error::DimensionMismatch(format!(
                "{} cells supplied for {} frames of {} cells",
                cells.len(),
                timestamps.len(),
                n_cells
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotoneTimestamps { index: i + 1 });
        }
        if let Some(pos) = cells.iter().position(|&v| v > 1) {
            return Err(Error::NonBinaryCell {
                frame: pos / n_cells,
                cell: pos % n_cells,
                value: cells[pos],
            });
        }
        Ok(CloudMaskSeries {
            spec,
            timestamps,
            cells,
            source_id: source_id.into(),
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn n_frames(&self) -> usize {
        self.timestamps.len()
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.spec.n_cells();
        &self.cells[t * n..(t + 1) * n]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[u8]> {
        self.cells.chunks_exact(self.spec.n_cells())
    }

    /// Time series of a single pixel.
    pub fn pixel_series(&self, row: usize, col: usize) -> Vec<u8> {
        let idx = self.spec.index(row, col);
        self.frames().map(|f| f[idx]).collect()
    }

    /// Block majority-vote downsampling by `factor` in both directions.
    /// A coarse cell is cloudy when at least half of its fine cells are.
    pub fn downsample(&self, factor: usize) -> Result<CloudMaskSeries> {
        if factor == 0 {
            return Err(Error::InvalidArgument("downsample factor must be >= 1".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let s = &self.spec;
        if !s.n_lat.is_multiple_of(factor) || !s.n_lon.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "grid {}x{} not divisible by factor {factor}",
                s.n_lat, s.n_lon
            )));
        }
        let coarse = GridSpec::new(s.n_lat / factor, s.n_lon / factor, s.lat_min, s.lat_max, s.lon_min, s.lon_max)?;
        let block = factor * factor;
        let mut cells = Vec::with_capacity(self.n_frames() * coarse.n_cells());
        for frame in self.frames() {
            for r in 0..coarse.n_lat {
                for c in 0..coarse.n_lon {
                    let mut count = 0usize;
                    for dr in 0..factor {
                        let row = r * factor + dr;
                        let start = s.index(row, c * factor);
                        count += frame[start..start + factor].iter().map(|&v| v as usize).sum::<usize>();
                    }
                    cells.push(u8::from(2 * count >= block));
                }
            }
        }
        CloudMaskSeries::new(coarse, self.timestamps.clone(), cells, self.source_id.clone())
    }
}

/// Per-pixel mean cloud fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityGrid {
    pub spec: GridSpec,
    /// Ω per pixel, row-major.
    pub omega: Vec<f64>,
    pub n_samples: Vec<usize>,
}

impl AvailabilityGrid {
    pub fn omega_at(&self, row: usize, col: usize) -> f64 {
        self.omega[self.spec.index(row, col)]
    }

    pub fn availability_at(&self, row: usize, col: usize) -> f64 {
        1.0 - self.omega_at(row, col)
    }

    pub fn availability(&self) -> Vec<f64> {
        self.omega.iter().map(|o| 1.0 - o).collect()
    }
}

/// Ω per pixel as the exact time mean of the frame values.
pub fn availability_grid(series: &CloudMaskSeries) -> AvailabilityGrid {
    let n_cells = series.spec.n_cells();
    let mut counts = vec![0u64; n_cells];
    for frame in series.frames() {
        for (c, &v) in counts.iter_mut().zip(frame) {
            *c += v as u64;
        }
    }
    let n = series.n_frames();
    AvailabilityGrid {
        spec: series.spec,
        omega: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        n_samples: vec![n; n_cells],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    /// Half-width of the square ROI in pixels.
    pub roi_radius_px: usize,
}

impl Site {
    pub fn new(name: impl Into<String>, lat: f64, lon: f64, roi_radius_px: usize) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !lon.is_finite() {
            return Err(Error::InvalidArgument(format!("site coordinates ({lat}, {lon}) out of range")));
        }
        Ok(Site {
            name: name.into(),
            lat,
            lon,
            roi_radius_px,
        })
    }

    /// Grid pixel of the site center, if the site lies on the grid.
    pub fn pixel(&self, spec: &GridSpec) -> Option<(usize, usize)> {
        spec.locate(self.lat, self.lon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteSeries {
    pub site: Site,
    pub source_id: String,
    pub timestamps: Vec<i64>,
    pub cloud_fraction: Vec<f64>,
    pub binary: Vec<u8>,
}

impl SiteSeries {
    /// Mean of the ROI cloud fraction; availability is one minus this.
    pub fn mean_cloud_fraction(&self) -> f64 {
        self.cloud_fraction.iter().sum::<f64>() / self.cloud_fraction.len() as f64
    }

    /// Ω of the binarized series.
    pub fn binary_omega(&self) -> f64 {
        self.binary.iter().map(|&b| b as u64).sum::<u64>() as f64 / self.binary.len() as f64
    }

    pub fn availability(&self) -> f64 {
        1.0 - self.mean_cloud_fraction()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Averages the site's square ROI per frame and thresholds the result:
/// `binary[t] = 1` exactly when `cloud_fraction[t] >= threshold`.
pub fn extract_site_series(series: &CloudMaskSeries, site: &Site, threshold: f64) -> Result<SiteSeries> {
    if !(threshold.is_finite()) {
        return Err(Error::InvalidArgument("threshold must be finite".into()));
    }
    let spec = series.spec();
    let out_of_bounds = || Error::RoiOutOfBounds { site: site.name.clone() };
    let (row, col) = site.pixel(spec).ok_or_else(out_of_bounds)?;
    let r = site.roi_radius_px;
    if row < r || col < r || row + r >= spec.n_lat || col + r >= spec.n_lon {
        return Err(out_of_bounds());
    }
    let width = 2 * r + 1;
    let n_roi = (width * width) as f64;
    let mut cloud_fraction = Vec::with_capacity(series.n_frames());
    let mut binary = Vec::with_capacity(series.n_frames());
    for frame in series.frames() {
        let mut count = 0u32;
        for rr in row - r..=row + r {
            let start = spec.index(rr, col - r);
            count += frame[start..start + width].iter().map(|&v| v as u32).sum::<u32>();
        }
        let fraction = count as f64 / n_roi;
        cloud_fraction.push(fraction);
        binary.push(u8::from(fraction >= threshold));
    }
    Ok(SiteSeries {
        site: site.clone(),
        source_id: series.source_id().to_owned(),
        timestamps: series.timestamps().to_vec(),
        cloud_fraction,
        binary,
    })
}
