//! Greedy site selection over a cloud-mask grid.
//!
//! The first site (unless the network is seeded) is the clearest pixel.
//! Every later site minimizes
//!
//! ```text
//! g_ij(N) = (w0 * Omega_ij)^2 + ((1/N) * sum_k w_k * r_ij(site k))^2
//! ```
//!
//! over the pixels not yet excluded, where the sum runs over the N sites
//! already in the network. An optional per-pixel weight field multiplies
//! every weight (or every weight except `w0`). Ties go to the first pixel in
//! row-major order.

use serde::Serialize;

use crate::cloudgrid::{availability_grid, extract_site_series, AvailabilityGrid, CloudMaskSeries, GridSpec, Site, SiteSeries};
use crate::correlation::{correlation_matrix, correlation_surface, mean_abs_correlation, CorrelationSurface, MeanAbsCorrelation};
use crate::dgmodel::{fit_model, moments_from_series, sample, FitOptions};
use crate::error::{Error, Result};

/// Slope of the linear latitude weighting, per degree.
pub const LATITUDE_SLOPE: f64 = 0.00745;

/// Linear latitude weighting normalized to 1 at the equator.
pub fn latitude_weighting(lat: f64) -> f64 {
    latitude_weighting_with_slope(lat, LATITUDE_SLOPE)
}

pub fn latitude_weighting_with_slope(lat: f64, slope: f64) -> f64 {
    slope * lat + 1.0
}

/// Latitude weighting evaluated at every pixel center.
pub fn latitude_weight_field(spec: &GridSpec, slope: f64) -> Vec<f64> {
    (0..spec.n_cells())
        .map(|i| {
            let (row, col) = spec.row_col(i);
            latitude_weighting_with_slope(spec.center(row, col).0, slope)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Weights {
    /// Weight of the cloud-fraction term.
    pub w0: f64,
    /// Correlation weight of the k-th network site; missing entries are 1.
    pub site_weights: Vec<f64>,
    /// Optional per-pixel multiplier of the weights.
    pub spatial: Option<Vec<f64>>,
    /// Leave `w0` unscaled by the spatial field.
    pub spatial_excludes_w0: bool,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            w0: 1.0,
            site_weights: Vec::new(),
            spatial: None,
            spatial_excludes_w0: false,
        }
    }
}

impl Weights {
    pub fn site_weight(&self, k: usize) -> f64 {
        self.site_weights.get(k).copied().unwrap_or(1.0)
    }

    fn validate(&self, spec: &GridSpec) -> Result<()> {
        let bad = |w: f64| w.is_nan() || w < 0.0;
        if bad(self.w0) || self.site_weights.iter().any(|&w| bad(w)) {
            return Err(Error::InvalidArgument("weights must be non-negative".into()));
        }
        if let Some(field) = &self.spatial {
            if field.len() != spec.n_cells() {
                return Err(Error::DimensionMismatch(format!(
                    "spatial weight field has {} values for {} pixels",
                    field.len(),
                    spec.n_cells()
                )));
            }
            if field.iter().any(|&w| bad(w)) {
                return Err(Error::InvalidArgument("spatial weights must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Spatial multipliers at pixel `i` for the cloud term and the
    /// correlation term.
    fn scale_at(&self, i: usize) -> (f64, f64) {
        match &self.spatial {
            None => (1.0, 1.0),
            Some(f) if self.spatial_excludes_w0 => (1.0, f[i]),
            Some(f) => (f[i], f[i]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveSurface {
    pub spec: GridSpec,
    pub g: Vec<f64>,
    pub n_selected: usize,
    /// Pixels that may not be selected.
    pub mask: Vec<bool>,
}

impl ObjectiveSurface {
    pub fn argmin(&self) -> Option<(usize, usize)> {
        argmin(&self.g, &self.mask).map(|i| self.spec.row_col(i))
    }
}

/// Index of the smallest value among unmasked, non-NaN entries; the first
/// such index wins ties.
fn argmin(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&v, &m)) in values.iter().zip(mask).enumerate() {
        if m || v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn check_mask(spec: &GridSpec, mask: &[bool]) -> Result<()> {
    if mask.len() != spec.n_cells() {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} pixels, grid has {}",
            mask.len(),
            spec.n_cells()
        )));
    }
    Ok(())
}

/// Pixel with the lowest cloud fraction among unmasked pixels.
pub fn select_first(avail: &AvailabilityGrid, mask: &[bool]) -> Result<(usize, usize)> {
    check_mask(&avail.spec, mask)?;
    argmin(&avail.omega, mask)
        .map(|i| avail.spec.row_col(i))
        .ok_or_else(|| Error::InvalidArgument("every pixel is masked".into()))
}

/// Objective surface for the next site given the correlation surfaces of
/// the sites already in the network.
pub fn objective_surface(avail: &AvailabilityGrid, surfaces: &[CorrelationSurface], weights: &Weights) -> Result<ObjectiveSurface> {
    if surfaces.is_empty() {
        return Err(Error::InvalidArgument("objective surface needs at least one selected site".into()));
    }
    let spec = avail.spec;
    weights.validate(&spec)?;
    if let Some(s) = surfaces.iter().find(|s| s.spec != spec) {
        return Err(Error::DimensionMismatch(format!(
            "surface of '{}' does not match the grid",
            s.site.name
        )));
    }
    let n = surfaces.len() as f64;
    let site_w: Vec<f64> = (0..surfaces.len()).map(|k| weights.site_weight(k)).collect();
    let g = (0..spec.n_cells())
        .map(|i| {
            let (s0, s1) = weights.scale_at(i);
            let cloud = s0 * weights.w0 * avail.omega[i];
            let corr = s1 * surfaces.iter().zip(&site_w).map(|(s, w)| w * s.r[i]).sum::<f64>() / n;
            cloud * cloud + corr * corr
        })
        .collect();
    Ok(ObjectiveSurface {
        spec,
        g,
        n_selected: surfaces.len(),
        mask: vec![false; spec.n_cells()],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizeOptions {
    pub threshold: f64,
    /// Pixels closer than this (in pixel units) to a network site are
    /// excluded. 0 excludes only the site pixel itself.
    pub min_separation_px: f64,
    /// Keep the surface of every step in the result.
    pub keep_step_surfaces: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            threshold: crate::cloudgrid::DEFAULT_THRESHOLD,
            min_separation_px: 0.0,
            keep_step_surfaces: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectedSite {
    pub step: usize,
    pub site: Site,
    pub row: usize,
    pub col: usize,
    /// Objective value at the chosen pixel (Omega for an unseeded first
    /// step).
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub seeds: Vec<Site>,
    pub selected: Vec<SelectedSite>,
    /// Surface the final selection was made from.
    pub final_surface: ObjectiveSurface,
    #[serde(skip)]
    pub step_surfaces: Vec<ObjectiveSurface>,
}

impl SelectionResult {
    /// Seeds followed by selected sites.
    pub fn network(&self) -> Vec<Site> {
        self.seeds
            .iter()
            .cloned()
            .chain(self.selected.iter().map(|s| s.site.clone()))
            .collect()
    }
}

fn exclude_around(spec: &GridSpec, mask: &mut [bool], row: usize, col: usize, radius: f64) {
    mask[spec.index(row, col)] = true;
    if radius <= 0.0 {
        return;
    }
    let reach = radius.ceil() as isize;
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            let (r, c) = (row as isize + dr, col as isize + dc);
            if r < 0 || c < 0 || r >= spec.n_lat as isize || c >= spec.n_lon as isize {
                continue;
            }
            if ((dr * dr + dc * dc) as f64).sqrt() < radius {
                mask[spec.index(r as usize, c as usize)] = true;
            }
        }
    }
}

/// Greedily grows a network of `n_sites` new sites, optionally starting
/// from existing `seeds`.
pub fn optimize_network(
    series: &CloudMaskSeries,
    n_sites: usize,
    weights: &Weights,
    mask: Option<&[bool]>,
    seeds: &[Site],
    opts: OptimizeOptions,
) -> Result<SelectionResult> {
    if n_sites == 0 {
        return Err(Error::InvalidArgument("n_sites must be >= 1".into()));
    }
    let spec = *series.spec();
    weights.validate(&spec)?;
    let avail = availability_grid(series);
    let mut excluded = match mask {
        Some(m) => {
            check_mask(&spec, m)?;
            m.to_vec()
        }
        None => vec![false; spec.n_cells()],
    };

    let mut surfaces = Vec::with_capacity(seeds.len() + n_sites);
    for seed in seeds {
        let ss = extract_site_series(series, seed, opts.threshold)?;
        surfaces.push(correlation_surface(series, &ss)?);
        let (row, col) = seed.pixel(&spec).ok_or_else(|| Error::RoiOutOfBounds { site: seed.name.clone() })?;
        exclude_around(&spec, &mut excluded, row, col, opts.min_separation_px);
    }

    let mut selected = Vec::with_capacity(n_sites);
    let mut step_surfaces = Vec::new();
    let mut last = None;
    for step in 0..n_sites {
        let mut surface = if surfaces.is_empty() {
            // Unseeded first step: the (weighted) cloud fraction alone.
            let g = (0..spec.n_cells()).map(|i| weights.scale_at(i).0 * avail.omega[i]).collect();
            ObjectiveSurface {
                spec,
                g,
                n_selected: 0,
                mask: Vec::new(),
            }
        } else {
            objective_surface(&avail, &surfaces, weights)?
        };
        surface.mask = excluded.clone();
        let (row, col) = surface
            .argmin()
            .ok_or_else(|| Error::InvalidArgument(format!("requested {n_sites} sites but only {step} unmasked pixels were available")))?;
        let (lat, lon) = spec.center(row, col);
        let site = Site::new(format!("S{}", seeds.len() + step + 1), lat, lon, 0)?;
        let ss = extract_site_series(series, &site, opts.threshold)?;
        surfaces.push(correlation_surface(series, &ss)?);
        exclude_around(&spec, &mut excluded, row, col, opts.min_separation_px);
        selected.push(SelectedSite {
            step: step + 1,
            objective: surface.g[spec.index(row, col)],
            site,
            row,
            col,
        });
        if opts.keep_step_surfaces {
            step_surfaces.push(surface.clone());
        }
        last = Some(surface);
    }

    Ok(SelectionResult {
        seeds: seeds.to_vec(),
        selected,
        final_surface: last.expect("n_sites >= 1"),
        step_surfaces,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkReport {
    pub n_sites: usize,
    pub mean_availability: f64,
    /// Population spread of site availabilities.
    pub std_availability: f64,
    /// Absent for a single site.
    pub mean_abs_correlation: Option<MeanAbsCorrelation>,
    pub p_outage: f64,
    pub p_outage_ci95: f64,
    pub psd_repaired: bool,
    pub repair_delta: f64,
    pub n_mc: u64,
}

/// Network-level summary: availability, diversity and Monte Carlo total
/// outage from the sites' measured marginals and covariances.
pub fn network_report(
    sites: &[Site],
    series: &CloudMaskSeries,
    threshold: f64,
    n_mc: u64,
    seed: u64,
    fit: FitOptions,
) -> Result<NetworkReport> {
    if sites.is_empty() {
        return Err(Error::InvalidArgument("report needs at least one site".into()));
    }
    let site_series: Vec<SiteSeries> = sites
        .iter()
        .map(|s| extract_site_series(series, s, threshold))
        .collect::<Result<_>>()?;
    let avail: Vec<f64> = site_series.iter().map(SiteSeries::availability).collect();
    let n = avail.len() as f64;
    let mean = avail.iter().sum::<f64>() / n;
    let std = (avail.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mean_abs = if site_series.len() >= 2 {
        Some(mean_abs_correlation(&correlation_matrix(&site_series)?)?)
    } else {
        None
    };
    let (omega, gamma) = moments_from_series(&site_series)?;
    let model = fit_model(&omega, &gamma, fit)?;
    let dist = sample(&model, n_mc, seed)?;
    Ok(NetworkReport {
        n_sites: sites.len(),
        mean_availability: mean,
        std_availability: std,
        mean_abs_correlation: mean_abs,
        p_outage: dist.p_outage(),
        p_outage_ci95: dist.ci95[0],
        psd_repaired: model.psd_repaired,
        repair_delta: model.repair_delta,
        n_mc,
    })
}
