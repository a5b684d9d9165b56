//! Python bindings for the `ogsnet` crate.
//!
//! Matrices cross the boundary as flat row-major lists of floats. Library
//! errors raise `OSError` for file problems and `ValueError` otherwise.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use ogsnet::capacity as cap;
use ogsnet::cloudgrid as cg;
use ogsnet::{correlation, dgmodel, optimizer, orbits};

fn err(e: ogsnet::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyOSError::new_err(e.to_string())
    }
}

#[pyfunction]
fn phi(x: f64) -> f64 {
    dgmodel::phi(x)
}

#[pyfunction]
fn phi_inv(p: f64) -> PyResult<f64> {
    dgmodel::phi_inv(p).map_err(err)
}

#[pyfunction]
fn phi2(a: f64, b: f64, rho: f64) -> f64 {
    dgmodel::phi2(a, b, rho)
}

#[pyfunction]
fn frechet_bounds(omega_k: f64, omega_l: f64) -> (f64, f64) {
    dgmodel::frechet_bounds(omega_k, omega_l)
}

/// Covariance matrix from cloud probabilities and a row-major correlation
/// matrix.
#[pyfunction]
fn gamma_from_correlation(omega: Vec<f64>, r: Vec<f64>) -> PyResult<Vec<f64>> {
    dgmodel::gamma_from_correlation(&omega, &r).map_err(err)
}

#[pyfunction]
fn equicorrelated_gamma(omega: Vec<f64>, r: f64) -> Vec<f64> {
    dgmodel::equicorrelated_gamma(&omega, r)
}

#[pyfunction]
fn analytic_outage_uncorrelated(omega: Vec<f64>) -> PyResult<f64> {
    dgmodel::analytic_outage_uncorrelated(&omega).map_err(err)
}

/// Returns `(r, zero_variance)` for two binary series.
#[pyfunction]
fn pearson(a: Vec<u8>, b: Vec<u8>) -> PyResult<(f64, bool)> {
    correlation::pearson(&a, &b).map(|p| (p.value, p.zero_variance)).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (lat_deg, slope = optimizer::LATITUDE_SLOPE))]
fn latitude_weighting(lat_deg: f64, slope: f64) -> f64 {
    optimizer::latitude_weighting_with_slope(lat_deg, slope)
}

/// Returns `(central_angle_deg, ground_range_km)`.
#[pyfunction]
fn coverage_radius(altitude_km: f64, min_elevation_deg: f64) -> PyResult<(f64, f64)> {
    orbits::coverage_radius(altitude_km, min_elevation_deg)
        .map(|c| (c.central_angle_deg, c.ground_range_km))
        .map_err(err)
}

/// Elevation of a GEO satellite at `sat_lon_deg` seen from a site.
#[pyfunction]
fn geo_elevation(site: &Site, sat_lon_deg: f64) -> f64 {
    orbits::elevation(&site.0, &orbits::geo_position(sat_lon_deg))
}

#[pyclass(module = "ogsnet_py", from_py_object)]
#[derive(Clone)]
struct Site(cg::Site);

#[pymethods]
impl Site {
    #[new]
    #[pyo3(signature = (name, lat, lon, roi_radius_px = 0))]
    fn new(name: String, lat: f64, lon: f64, roi_radius_px: usize) -> PyResult<Self> {
        cg::Site::new(name, lat, lon, roi_radius_px).map(Site).map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn lat(&self) -> f64 {
        self.0.lat
    }

    #[getter]
    fn lon(&self) -> f64 {
        self.0.lon
    }

    #[getter]
    fn roi_radius_px(&self) -> usize {
        self.0.roi_radius_px
    }

    fn __repr__(&self) -> String {
        format!("Site({:?}, {}, {}, {})", self.0.name, self.0.lat, self.0.lon, self.0.roi_radius_px)
    }
}

#[pyclass(module = "ogsnet_py", get_all)]
struct OutageDistribution {
    n_sites: usize,
    /// P(at most M sites available) for M = 0..=n_sites.
    cdf: Vec<f64>,
    ci95: Vec<f64>,
    counts: Vec<u64>,
    n_samples: u64,
}

#[pymethods]
impl OutageDistribution {
    fn p_outage(&self) -> f64 {
        self.cdf[0]
    }
}

impl From<dgmodel::OutageDistribution> for OutageDistribution {
    fn from(d: dgmodel::OutageDistribution) -> Self {
        OutageDistribution {
            n_sites: d.n_sites,
            cdf: d.cdf,
            ci95: d.ci95,
            counts: d.counts,
            n_samples: d.n_samples,
        }
    }
}

#[pyclass(module = "ogsnet_py")]
struct JointAvailabilityModel(dgmodel::JointAvailabilityModel);

#[pymethods]
impl JointAvailabilityModel {
    #[getter]
    fn n_sites(&self) -> usize {
        self.0.n_sites
    }

    #[getter]
    fn omega(&self) -> Vec<f64> {
        self.0.omega.clone()
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.0.mu.clone()
    }

    /// Latent correlation matrix, row-major.
    #[getter]
    fn lambda_(&self) -> Vec<f64> {
        self.0.lambda.clone()
    }

    #[getter]
    fn psd_repaired(&self) -> bool {
        self.0.psd_repaired
    }

    #[getter]
    fn repair_delta(&self) -> f64 {
        self.0.repair_delta
    }

    #[getter]
    fn max_residual(&self) -> f64 {
        self.0.max_residual
    }

    fn lambda_at(&self, k: usize, l: usize) -> PyResult<f64> {
        if k >= self.0.n_sites || l >= self.0.n_sites {
            return Err(PyValueError::new_err("site index out of range"));
        }
        Ok(self.0.lambda_at(k, l))
    }

    #[pyo3(signature = (n_samples = dgmodel::DEFAULT_SAMPLES, seed = 0))]
    fn sample(&self, py: Python<'_>, n_samples: u64, seed: u64) -> PyResult<OutageDistribution> {
        py.detach(|| dgmodel::sample(&self.0, n_samples, seed)).map(Into::into).map_err(err)
    }

    /// Returns `(omega, gamma)` estimated from the sampler.
    #[pyo3(signature = (n_samples, seed = 0))]
    fn sample_moments(&self, py: Python<'_>, n_samples: u64, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let m = py.detach(|| dgmodel::sample_moments(&self.0, n_samples, seed)).map_err(err)?;
        Ok((m.omega(), m.gamma()))
    }

    fn subset(&self, sites: Vec<usize>) -> PyResult<JointAvailabilityModel> {
        self.0.subset(&sites).map(JointAvailabilityModel).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (omega, gamma, clamp_degenerate = false))]
fn fit_model(omega: Vec<f64>, gamma: Vec<f64>, clamp_degenerate: bool) -> PyResult<JointAvailabilityModel> {
    dgmodel::fit_model(&omega, &gamma, dgmodel::FitOptions { clamp_degenerate })
        .map(JointAvailabilityModel)
        .map_err(err)
}

#[pyclass(module = "ogsnet_py")]
struct SiteSeries(cg::SiteSeries);

#[pymethods]
impl SiteSeries {
    #[getter]
    fn site(&self) -> Site {
        Site(self.0.site.clone())
    }

    #[getter]
    fn timestamps(&self) -> Vec<i64> {
        self.0.timestamps.clone()
    }

    #[getter]
    fn cloud_fraction(&self) -> Vec<f64> {
        self.0.cloud_fraction.clone()
    }

    #[getter]
    fn binary(&self) -> Vec<u8> {
        self.0.binary.clone()
    }

    fn availability(&self) -> f64 {
        self.0.availability()
    }

    fn binary_omega(&self) -> f64 {
        self.0.binary_omega()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

fn collect_series(series: &[Bound<'_, SiteSeries>]) -> Vec<cg::SiteSeries> {
    series.iter().map(|s| s.borrow().0.clone()).collect()
}

#[pyclass(module = "ogsnet_py")]
struct CloudMaskSeries(cg::CloudMaskSeries);

#[pymethods]
impl CloudMaskSeries {
    /// Thresholded Gaussian random fields on a regular grid. `omega` is a
    /// uniform cloud probability or a row-major per-pixel list.
    #[staticmethod]
    #[pyo3(signature = (n_lat, n_lon, lat_min, lon_min, pixel_size, n_frames, corr_length_px, omega, seed = 1))]
    #[allow(clippy::too_many_arguments)]
    fn synth(
        py: Python<'_>,
        n_lat: usize,
        n_lon: usize,
        lat_min: f64,
        lon_min: f64,
        pixel_size: f64,
        n_frames: usize,
        corr_length_px: f64,
        omega: &Bound<'_, PyAny>,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = cg::GridSpec::from_corner(n_lat, n_lon, lat_min, lon_min, pixel_size).map_err(err)?;
        let field: Vec<f64> = match omega.extract::<f64>() {
            Ok(v) => vec![v; spec.n_cells()],
            Err(_) => omega.extract()?,
        };
        py.detach(|| cg::synth_generate(spec, n_frames, corr_length_px, &field, seed))
            .map(CloudMaskSeries)
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        cg::load_cloud_masks(path).map(CloudMaskSeries).map_err(err)
    }

    #[pyo3(signature = (path, ascii = false))]
    fn save(&self, path: std::path::PathBuf, ascii: bool) -> PyResult<()> {
        let enc = if ascii { cg::CellEncoding::Ascii } else { cg::CellEncoding::Bits };
        cg::save_cloud_masks(&self.0, path, enc).map_err(err)
    }

    /// `(n_lat, n_lon)`.
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.spec().n_lat, self.0.spec().n_lon)
    }

    #[getter]
    fn n_frames(&self) -> usize {
        self.0.n_frames()
    }

    /// Pixel-center `(lat, lon)`.
    fn center(&self, row: usize, col: usize) -> PyResult<(f64, f64)> {
        let s = self.0.spec();
        if row >= s.n_lat || col >= s.n_lon {
            return Err(PyValueError::new_err("pixel out of range"));
        }
        Ok(s.center(row, col))
    }

    /// Per-pixel availability, row-major.
    fn availability(&self) -> Vec<f64> {
        cg::availability_grid(&self.0).availability()
    }

    #[pyo3(signature = (site, threshold = cg::DEFAULT_THRESHOLD))]
    fn site_series(&self, site: &Site, threshold: f64) -> PyResult<SiteSeries> {
        cg::extract_site_series(&self.0, &site.0, threshold).map(SiteSeries).map_err(err)
    }

    /// Greedy selection of `n_sites` new sites. Returns
    /// `(name, lat, lon, objective)` per step.
    #[pyo3(signature = (n_sites, seeds = Vec::new(), lat_weight = false, w0 = 1.0, min_separation_px = 0.0))]
    fn optimize(
        &self,
        py: Python<'_>,
        n_sites: usize,
        seeds: Vec<Site>,
        lat_weight: bool,
        w0: f64,
        min_separation_px: f64,
    ) -> PyResult<Vec<(String, f64, f64, f64)>> {
        let weights = optimizer::Weights {
            w0,
            spatial: lat_weight.then(|| optimizer::latitude_weight_field(self.0.spec(), optimizer::LATITUDE_SLOPE)),
            ..Default::default()
        };
        let opts = optimizer::OptimizeOptions {
            min_separation_px,
            ..Default::default()
        };
        let seeds: Vec<cg::Site> = seeds.into_iter().map(|s| s.0).collect();
        let res = py
            .detach(|| optimizer::optimize_network(&self.0, n_sites, &weights, None, &seeds, opts))
            .map_err(err)?;
        Ok(res
            .selected
            .into_iter()
            .map(|s| (s.site.name, s.site.lat, s.site.lon, s.objective))
            .collect())
    }
}

/// Row-major Pearson matrix of aligned site series.
#[pyfunction]
fn correlation_matrix(series: Vec<Bound<'_, SiteSeries>>) -> PyResult<Vec<f64>> {
    correlation::correlation_matrix(&collect_series(&series)).map(|m| m.r).map_err(err)
}

/// `(omega, gamma)` of aligned binary site series.
#[pyfunction]
fn moments_from_series(series: Vec<Bound<'_, SiteSeries>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    dgmodel::moments_from_series(&collect_series(&series)).map_err(err)
}

#[pyfunction]
fn empirical_cdf(series: Vec<Bound<'_, SiteSeries>>) -> PyResult<OutageDistribution> {
    dgmodel::empirical_cdf_from_data(&collect_series(&series))
        .map(Into::into)
        .map_err(err)
}

/// Mean daily link seconds of a circular orbit per inclination.
#[pyfunction]
#[pyo3(signature = (site, inclinations, altitude_km = orbits::DEFAULT_ALTITUDE_KM, days = orbits::DEFAULT_DAYS, min_elevation_deg = orbits::DEFAULT_MIN_ELEVATION_DEG, step_s = orbits::DEFAULT_STEP_S))]
fn tau_profile(
    py: Python<'_>,
    site: &Site,
    inclinations: Vec<f64>,
    altitude_km: f64,
    days: f64,
    min_elevation_deg: f64,
    step_s: f64,
) -> PyResult<Vec<f64>> {
    let opts = orbits::TauOptions {
        altitude_km,
        days,
        min_elevation_deg,
        step_s,
    };
    py.detach(|| orbits::tau_profile(&site.0, &inclinations, opts))
        .map(|p| p.tau)
        .map_err(err)
}

/// Passes of the fiducial orbit in `[t0, t1]` seconds as
/// `(start, end, max_elevation_deg)`.
#[pyfunction]
#[pyo3(signature = (site, altitude_km, inclination_deg, t0, t1, min_elevation_deg = orbits::DEFAULT_MIN_ELEVATION_DEG, step_s = orbits::DEFAULT_STEP_S))]
fn detect_passes(
    site: &Site,
    altitude_km: f64,
    inclination_deg: f64,
    t0: f64,
    t1: f64,
    min_elevation_deg: f64,
    step_s: f64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let orbit = orbits::OrbitSpec::fiducial(altitude_km, inclination_deg).map_err(err)?;
    let passes = orbits::detect_passes(&orbit, &site.0, t0, t1, step_s, min_elevation_deg).map_err(err)?;
    Ok(passes.into_iter().map(|p| (p.start, p.end, p.max_elevation_deg)).collect())
}

/// Availability-weighted link seconds per day for each inclination.
#[pyfunction]
fn network_capacity(availabilities: Vec<f64>, inclinations: Vec<f64>, taus: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let rows: Vec<&[f64]> = taus.iter().map(Vec::as_slice).collect();
    cap::capacity_from_tau("network", &availabilities, &inclinations, &rows, cap::DEFAULT_BITRATE_BPS)
        .map(|p| p.t)
        .map_err(err)
}

/// Runs the command-line tool; `argv` excludes the program name.
#[pyfunction]
fn run_cli(py: Python<'_>, argv: Vec<String>) -> i32 {
    let full: Vec<String> = std::iter::once("ogsnet".to_owned()).chain(argv).collect();
    py.detach(|| ogsnet::cli::run(full))
}

#[pymodule]
fn ogsnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Site>()?;
    m.add_class::<SiteSeries>()?;
    m.add_class::<CloudMaskSeries>()?;
    m.add_class::<JointAvailabilityModel>()?;
    m.add_class::<OutageDistribution>()?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(phi_inv, m)?)?;
    m.add_function(wrap_pyfunction!(phi2, m)?)?;
    m.add_function(wrap_pyfunction!(frechet_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_from_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(equicorrelated_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_outage_uncorrelated, m)?)?;
    m.add_function(wrap_pyfunction!(fit_model, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(moments_from_series, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(latitude_weighting, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_radius, m)?)?;
    m.add_function(wrap_pyfunction!(geo_elevation, m)?)?;
    m.add_function(wrap_pyfunction!(tau_profile, m)?)?;
    m.add_function(wrap_pyfunction!(detect_passes, m)?)?;
    m.add_function(wrap_pyfunction!(network_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
