//! Circular-orbit propagation, pass detection and GEO look angles on a
//! spherical Earth.
//!
//! The orbit model is two-body and circular with no J2 or drag. Inertial
//! and Earth-fixed frames coincide at the orbit epoch, so `raan_deg` is the
//! Earth-fixed longitude of the ascending node at that instant.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::cloudgrid::Site;
use crate::dgmodel::{fit_model, sample, FitOptions};
use crate::error::{Error, Result};

/// Gravitational parameter, km^3/s^2.
pub const MU_EARTH: f64 = 398_600.441_8;
/// Mean Earth radius, km.
pub const R_EARTH: f64 = 6371.0;
/// Sidereal rotation rate, rad/s.
pub const OMEGA_EARTH: f64 = 7.292_115_9e-5;
/// Geostationary orbit radius, km.
pub const GEO_RADIUS: f64 = 42_157.0;

pub const DEFAULT_ALTITUDE_KM: f64 = 530.0;
pub const DEFAULT_MIN_ELEVATION_DEG: f64 = 30.0;
pub const DEFAULT_STEP_S: f64 = 10.0;
pub const DEFAULT_DAYS: f64 = 365.0;
/// Largest sampling step accepted by [`detect_passes`].
pub const MAX_STEP_S: f64 = 10.0;

const DAY_S: f64 = 86_400.0;
/// Bisection stops once the bracket is this narrow (seconds). Well below
/// the 0.1 s boundary resolution, and tight enough that the elevation at
/// the boundary sits within 1e-3 degrees of the threshold for LEO rates.
const BISECT_TOL_S: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitSpec {
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    /// Argument of latitude at epoch.
    pub phase_deg: f64,
    pub epoch: f64,
}

impl OrbitSpec {
    pub fn new(altitude_km: f64, inclination_deg: f64, raan_deg: f64, phase_deg: f64, epoch: f64) -> Result<Self> {
        let o = OrbitSpec {
            altitude_km,
            inclination_deg,
            raan_deg,
            phase_deg,
            epoch,
        };
        o.validate()?;
        Ok(o)
    }

    /// Orbit with the fiducial node and phase (both zero) at epoch 0.
    pub fn fiducial(altitude_km: f64, inclination_deg: f64) -> Result<Self> {
        OrbitSpec::new(altitude_km, inclination_deg, 0.0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.altitude_km > 0.0 && self.altitude_km.is_finite()) {
            return Err(Error::InvalidArgument(format!("altitude {} km must be positive", self.altitude_km)));
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return Err(Error::InvalidArgument(format!(
                "inclination {} outside [0, 180]",
                self.inclination_deg
            )));
        }
        if !(self.raan_deg.is_finite() && self.phase_deg.is_finite() && self.epoch.is_finite()) {
            return Err(Error::InvalidArgument("orbit elements must be finite".into()));
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        R_EARTH + self.altitude_km
    }

    pub fn mean_motion(&self) -> f64 {
        (MU_EARTH / self.radius().powi(3)).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.mean_motion()
    }
}

/// Geocentric spherical position in the Earth-fixed frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoPosition {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub radius_km: f64,
}

impl GeoPosition {
    pub fn to_cartesian(&self) -> [f64; 3] {
        let (slat, clat) = self.lat_deg.to_radians().sin_cos();
        let (slon, clon) = self.lon_deg.to_radians().sin_cos();
        [self.radius_km * clat * clon, self.radius_km * clat * slon, self.radius_km * slat]
    }

    fn from_cartesian(p: [f64; 3]) -> Self {
        let r = norm(p);
        GeoPosition {
            lat_deg: (p[2] / r).clamp(-1.0, 1.0).asin().to_degrees(),
            lon_deg: p[1].atan2(p[0]).to_degrees(),
            radius_km: r,
        }
    }
}

fn norm(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Inertial position at time `t`, in a frame aligned with the Earth-fixed
/// frame at the orbit epoch.
pub fn inertial_position(orbit: &OrbitSpec, t: f64) -> [f64; 3] {
    let a = orbit.radius();
    let u = orbit.phase_deg.to_radians() + orbit.mean_motion() * (t - orbit.epoch);
    let (su, cu) = u.sin_cos();
    let (so, co) = orbit.raan_deg.to_radians().sin_cos();
    let (si, ci) = orbit.inclination_deg.to_radians().sin_cos();
    [a * (co * cu - so * su * ci), a * (so * cu + co * su * ci), a * su * si]
}

pub fn propagate(orbit: &OrbitSpec, t: f64) -> GeoPosition {
    let p = inertial_position(orbit, t);
    let (s, c) = (-OMEGA_EARTH * (t - orbit.epoch)).sin_cos();
    GeoPosition::from_cartesian([c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])
}

fn site_position(site: &Site) -> GeoPosition {
    GeoPosition {
        lat_deg: site.lat,
        lon_deg: site.lon,
        radius_km: R_EARTH,
    }
}

/// Elevation of `sat` above the local horizon of `site`, in degrees.
pub fn elevation(site: &Site, sat: &GeoPosition) -> f64 {
    let s = site_position(site).to_cartesian();
    let p = sat.to_cartesian();
    let d = [p[0] - s[0], p[1] - s[1], p[2] - s[2]];
    let up = [s[0] / R_EARTH, s[1] / R_EARTH, s[2] / R_EARTH];
    let vertical = d[0] * up[0] + d[1] * up[1] + d[2] * up[2];
    let cross = [
        d[1] * up[2] - d[2] * up[1],
        d[2] * up[0] - d[0] * up[2],
        d[0] * up[1] - d[1] * up[0],
    ];
    vertical.atan2(norm(cross)).to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coverage {
    pub central_angle_deg: f64,
    pub ground_range_km: f64,
}

/// Footprint radius of a satellite at `altitude_km` for sites requiring
/// `min_elevation_deg`.
pub fn coverage_radius(altitude_km: f64, min_elevation_deg: f64) -> Result<Coverage> {
    if !(altitude_km > 0.0 && altitude_km.is_finite()) {
        return Err(Error::InvalidArgument(format!("altitude {altitude_km} km must be positive")));
    }
    if !(min_elevation_deg > 0.0 && min_elevation_deg < 90.0) {
        return Err(Error::InvalidArgument(format!("elevation {min_elevation_deg} outside (0, 90)")));
    }
    let lambda = central_angle(R_EARTH + altitude_km, min_elevation_deg);
    Ok(Coverage {
        central_angle_deg: lambda.to_degrees(),
        ground_range_km: R_EARTH * lambda,
    })
}

fn central_angle(radius_km: f64, min_elevation_deg: f64) -> f64 {
    let theta = min_elevation_deg.to_radians();
    (R_EARTH / radius_km * theta.cos()).acos() - theta
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassRecord {
    pub site: Site,
    pub start: f64,
    pub end: f64,
    pub max_elevation_deg: f64,
    pub duration_s: f64,
}

/// Finds the visibility intervals of `orbit` from `site` in `[t0, t1]`.
///
/// Elevation is sampled every `step_s` seconds; each threshold crossing is
/// refined by bisection and each pass's peak by golden-section search
/// around its highest sample. Passes shorter than one step can be missed.
pub fn detect_passes(orbit: &OrbitSpec, site: &Site, t0: f64, t1: f64, step_s: f64, min_elevation_deg: f64) -> Result<Vec<PassRecord>> {
    orbit.validate()?;
    if !(step_s > 0.0 && step_s <= MAX_STEP_S) {
        return Err(Error::InvalidArgument(format!("step {step_s} s outside (0, {MAX_STEP_S}]")));
    }
    if t1.is_nan() || t0.is_nan() || t1 - t0 < step_s {
        return Err(Error::InvalidArgument(format!("window [{t0}, {t1}] shorter than one step")));
    }
    let el = |t: f64| elevation(site, &propagate(orbit, t));
    let above = |t: f64| el(t) >= min_elevation_deg;
    let refine = |mut lo: f64, mut hi: f64, rising: bool| {
        // Invariant: above(lo) != above(hi), with above(hi) == rising.
        while hi - lo > BISECT_TOL_S {
            let mid = 0.5 * (lo + hi);
            if above(mid) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let n_steps = ((t1 - t0) / step_s).ceil() as u64;
    let time = |k: u64| (t0 + k as f64 * step_s).min(t1);
    let mut passes = Vec::new();
    let mut prev_t = t0;
    let e0 = el(t0);
    let mut start = (e0 >= min_elevation_deg).then_some(t0);
    let mut peak = (e0, t0);
    for k in 1..=n_steps {
        let t = time(k);
        let e = el(t);
        let up = e >= min_elevation_deg;
        match (start, up) {
            (None, true) => {
                start = Some(refine(prev_t, t, true));
                peak = (e, t);
            }
            (Some(s), false) => {
                let end = refine(prev_t, t, false);
                push_pass(&mut passes, site, s, end, peak, step_s, &el);
                start = None;
            }
            (Some(_), true) if e > peak.0 => peak = (e, t),
            _ => {}
        }
        prev_t = t;
    }
    if let Some(s) = start {
        push_pass(&mut passes, site, s, t1, peak, step_s, &el);
    }
    Ok(passes)
}

fn push_pass(passes: &mut Vec<PassRecord>, site: &Site, start: f64, end: f64, peak: (f64, f64), step_s: f64, el: &impl Fn(f64) -> f64) {
    if end <= start {
        return;
    }
    let lo = (peak.1 - step_s).max(start);
    let hi = (peak.1 + step_s).min(end);
    let max_elevation_deg = golden_max(el, lo, hi).max(peak.0);
    passes.push(PassRecord {
        site: site.clone(),
        start,
        end,
        max_elevation_deg,
        duration_s: end - start,
    });
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-3 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// Mean daily link duration of one site versus orbit inclination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassProfile {
    pub site: Site,
    pub inclinations: Vec<f64>,
    /// Seconds per day, aligned with `inclinations`.
    pub tau: Vec<f64>,
    pub sim_duration_days: f64,
}

impl PassProfile {
    pub fn tau_at(&self, inclination_deg: f64) -> Option<f64> {
        self.inclinations.iter().position(|&i| i == inclination_deg).map(|k| self.tau[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauOptions {
    pub altitude_km: f64,
    pub days: f64,
    pub min_elevation_deg: f64,
    pub step_s: f64,
}

impl Default for TauOptions {
    fn default() -> Self {
        TauOptions {
            altitude_km: DEFAULT_ALTITUDE_KM,
            days: DEFAULT_DAYS,
            min_elevation_deg: DEFAULT_MIN_ELEVATION_DEG,
            step_s: DEFAULT_STEP_S,
        }
    }
}

/// τ(i) for each inclination, using the fiducial orbit (node and phase 0
/// at epoch 0) over `opts.days` days. Inclinations run in parallel.
pub fn tau_profile(site: &Site, inclinations: &[f64], opts: TauOptions) -> Result<PassProfile> {
    if inclinations.is_empty() {
        return Err(Error::InvalidArgument("empty inclination sweep".into()));
    }
    if !(opts.days > 0.0 && opts.days.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "simulation span {} days must be positive",
            opts.days
        )));
    }
    let tau = inclinations
        .par_iter()
        .map(|&inc| {
            let orbit = OrbitSpec::fiducial(opts.altitude_km, inc)?;
            let passes = detect_passes(&orbit, site, 0.0, opts.days * DAY_S, opts.step_s, opts.min_elevation_deg)?;
            Ok(passes.iter().fold(0.0, |acc, p| acc + p.duration_s) / opts.days)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PassProfile {
        site: site.clone(),
        inclinations: inclinations.to_vec(),
        tau,
        sim_duration_days: opts.days,
    })
}

/// τ profiles for several sites, one per site in input order.
pub fn tau_profiles(sites: &[Site], inclinations: &[f64], opts: TauOptions) -> Result<Vec<PassProfile>> {
    sites.par_iter().map(|s| tau_profile(s, inclinations, opts)).collect()
}

pub fn geo_position(lon_deg: f64) -> GeoPosition {
    GeoPosition {
        lat_deg: 0.0,
        lon_deg,
        radius_km: GEO_RADIUS,
    }
}

/// Largest site-to-subsatellite central angle at which a GEO satellite
/// stays above `min_elevation_deg`, in degrees.
pub fn geo_visibility_half_angle(min_elevation_deg: f64) -> f64 {
    central_angle(GEO_RADIUS, min_elevation_deg).to_degrees()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeoVisibilityProfile {
    pub longitudes: Vec<f64>,
    pub visible_count: Vec<usize>,
    /// Indices of the visible sites at each longitude.
    pub visible: Vec<Vec<usize>>,
    /// P(no visible site available); 1 where nothing is visible.
    pub outage: Vec<f64>,
}

/// Visibility of a GEO satellite from `sites` along a longitude sweep, with
/// the total-outage probability of the visible subset.
///
/// `outage` is called once per distinct visible set with the sorted site
/// indices; it is never called with an empty set.
pub fn geo_profile(
    sites: &[Site],
    longitudes: &[f64],
    min_elevation_deg: f64,
    mut outage: impl FnMut(&[usize]) -> Result<f64>,
) -> Result<GeoVisibilityProfile> {
    if sites.is_empty() || longitudes.is_empty() {
        return Err(Error::InvalidArgument("geo profile needs sites and longitudes".into()));
    }
    let visible: Vec<Vec<usize>> = longitudes
        .iter()
        .map(|&lon| {
            let sat = geo_position(lon);
            (0..sites.len())
                .filter(|&k| elevation(&sites[k], &sat) > min_elevation_deg)
                .collect()
        })
        .collect();
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut out = Vec::with_capacity(visible.len());
    for set in &visible {
        let p = if set.is_empty() {
            1.0
        } else if let Some(&p) = cache.get(set) {
            p
        } else {
            let p = outage(set)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("outage sampler returned {p}")));
            }
            cache.insert(set.clone(), p);
            p
        };
        out.push(p);
    }
    Ok(GeoVisibilityProfile {
        longitudes: longitudes.to_vec(),
        visible_count: visible.iter().map(Vec::len).collect(),
        visible,
        outage: out,
    })
}

/// Outage hook for [`geo_profile`] backed by the dichotomized-Gaussian
/// sampler. Each subset is fitted from its own marginals and covariances
/// (row-major `gamma` over all sites) and sampled with the given seed.
pub fn dgmodel_outage<'a>(
    omega: &'a [f64],
    gamma: &'a [f64],
    opts: FitOptions,
    n_samples: u64,
    seed: u64,
) -> impl FnMut(&[usize]) -> Result<f64> + 'a {
    let n = omega.len();
    move |subset: &[usize]| {
        if gamma.len() != n * n || subset.iter().any(|&k| k >= n) {
            return Err(Error::DimensionMismatch("outage hook indices do not match the network".into()));
        }
        let om: Vec<f64> = subset.iter().map(|&k| omega[k]).collect();
        let g: Vec<f64> = subset.iter().flat_map(|&k| subset.iter().map(move |&l| gamma[k * n + l])).collect();
        let model = fit_model(&om, &g, opts)?;
        Ok(sample(&model, n_samples, seed)?.p_outage())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(lat: f64, lon: f64) -> Site {
        Site::new("s", lat, lon, 0).unwrap()
    }

    #[test]
    fn equatorial_orbit_stays_on_equator() {
        let o = OrbitSpec::fiducial(530.0, 0.0).unwrap();
        for k in 0..200 {
            let p = propagate(&o, k as f64 * 37.0);
            assert!(p.lat_deg.abs() < 1e-12);
        }
    }

    #[test]
    fn radius_is_constant() {
        let o = OrbitSpec::new(700.0, 51.6, 20.0, 33.0, 100.0).unwrap();
        for k in 0..500 {
            let p = propagate(&o, 100.0 + k as f64 * 123.4);
            assert!((p.radius_km / o.radius() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn one_period_closes_and_drifts_west() {
        let o = OrbitSpec::new(530.0, 51.6, 40.0, 10.0, 0.0).unwrap();
        let p0 = inertial_position(&o, 0.0);
        let p1 = inertial_position(&o, o.period());
        for j in 0..3 {
            assert!((p0[j] - p1[j]).abs() < 1e-6);
        }
        let g0 = propagate(&o, 0.0);
        let g1 = propagate(&o, o.period());
        let shift = (g1.lon_deg - g0.lon_deg + 540.0).rem_euclid(360.0) - 180.0;
        assert!((shift + (o.period() * OMEGA_EARTH).to_degrees()).abs() < 1e-9);
        assert!((g1.lat_deg - g0.lat_deg).abs() < 1e-9);
    }

    #[test]
    fn polar_latitude_is_arcsin_of_sine() {
        let o = OrbitSpec::fiducial(530.0, 90.0).unwrap();
        for k in 0..100 {
            let t = k as f64 * 61.0;
            let u = o.mean_motion() * t;
            let expected = u.sin().asin().to_degrees();
            assert!((propagate(&o, t).lat_deg - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn zenith_and_colinear_geo_are_ninety() {
        let s = site(12.0, 34.0);
        let sat = GeoPosition {
            lat_deg: 12.0,
            lon_deg: 34.0,
            radius_km: R_EARTH + 500.0,
        };
        assert!((elevation(&s, &sat) - 90.0).abs() < 1e-9);
        assert!((elevation(&site(0.0, 77.0), &geo_position(77.0)) - 90.0).abs() < 1e-9);
    }

    #[test]
    fn elevation_is_east_west_symmetric() {
        let s = site(0.0, 10.0);
        for d in [1.0, 5.0, 20.0, 60.0] {
            let e = elevation(&s, &geo_position(10.0 + d));
            let w = elevation(&s, &geo_position(10.0 - d));
            assert!((e - w).abs() < 1e-9);
        }
    }

    #[test]
    fn coverage_edge_has_threshold_elevation() {
        let c = coverage_radius(500.0, 30.0).unwrap();
        let sat = GeoPosition {
            lat_deg: c.central_angle_deg,
            lon_deg: 0.0,
            radius_km: R_EARTH + 500.0,
        };
        assert!((elevation(&site(0.0, 0.0), &sat) - 30.0).abs() < 1e-6);
    }

    #[test]
    fn coverage_is_monotone() {
        let a = coverage_radius(500.0, 30.0).unwrap();
        assert!(coverage_radius(500.0, 40.0).unwrap().ground_range_km < a.ground_range_km);
        assert!(coverage_radius(800.0, 30.0).unwrap().ground_range_km > a.ground_range_km);
        assert!(coverage_radius(500.0, 89.999).unwrap().central_angle_deg < 1e-3);
        assert!(coverage_radius(0.0, 30.0).is_err());
        assert!(coverage_radius(500.0, 90.0).is_err());
    }

    #[test]
    fn no_passes_from_pole_for_equatorial_orbit() {
        let o = OrbitSpec::fiducial(530.0, 0.0).unwrap();
        let p = detect_passes(&o, &site(90.0, 0.0), 0.0, DAY_S, 10.0, 30.0).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn polar_orbit_passes_overhead() {
        // The site sits on the ground track at t = 0.
        let o = OrbitSpec::fiducial(530.0, 90.0).unwrap();
        let s = site(0.0, 0.0);
        let passes = detect_passes(&o, &s, -600.0, DAY_S, 10.0, 30.0).unwrap();
        assert!(!passes.is_empty());
        let best = passes.iter().map(|p| p.max_elevation_deg).fold(0.0, f64::max);
        // Dense 1 s oracle over the first pass.
        let dense = (-600..600).map(|t| elevation(&s, &propagate(&o, t as f64))).fold(0.0, f64::max);
        assert!(dense > 89.0);
        assert!((best - dense).abs() < 0.05, "{best} vs {dense}");
    }

    #[test]
    fn boundaries_sit_on_threshold() {
        let o = OrbitSpec::fiducial(530.0, 51.6).unwrap();
        let s = site(40.0, 5.0);
        let passes = detect_passes(&o, &s, 0.0, 3.0 * DAY_S, 10.0, 30.0).unwrap();
        assert!(!passes.is_empty());
        for p in &passes {
            assert!(p.duration_s > 0.0 && p.max_elevation_deg >= 30.0);
            for t in [p.start, p.end] {
                assert!((elevation(&s, &propagate(&o, t)) - 30.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn durations_converge_with_step() {
        let o = OrbitSpec::fiducial(530.0, 45.0).unwrap();
        let s = site(-35.0, 140.0);
        let a = detect_passes(&o, &s, 0.0, 5.0 * DAY_S, 10.0, 30.0).unwrap();
        let b = detect_passes(&o, &s, 0.0, 5.0 * DAY_S, 5.0, 30.0).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x.duration_s - y.duration_s).abs() < 0.5);
        }
    }

    #[test]
    fn pass_errors() {
        let o = OrbitSpec::fiducial(530.0, 45.0).unwrap();
        let s = site(0.0, 0.0);
        assert!(detect_passes(&o, &s, 0.0, 5.0, 10.0, 30.0).is_err());
        assert!(detect_passes(&o, &s, 0.0, 100.0, 20.0, 30.0).is_err());
        assert!(OrbitSpec::fiducial(-1.0, 45.0).is_err());
        assert!(OrbitSpec::fiducial(500.0, 181.0).is_err());
    }

    #[test]
    fn tau_zero_beyond_reach() {
        let opts = TauOptions {
            days: 3.0,
            ..TauOptions::default()
        };
        let reach = 20.0 + coverage_radius(530.0, 30.0).unwrap().central_angle_deg;
        let p = tau_profile(&site(reach + 1.0, 0.0), &[20.0], opts).unwrap();
        assert_eq!(p.tau, vec![0.0]);
        let p = tau_profile(&site(reach - 3.0, 0.0), &[20.0], opts).unwrap();
        assert!(p.tau[0] > 0.0);
        assert_eq!(p.tau_at(20.0), Some(p.tau[0]));
    }

    #[test]
    fn geo_half_angle_matches_single_site() {
        let half = geo_visibility_half_angle(30.0);
        let s = vec![site(0.0, 50.0)];
        let lons: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let g = geo_profile(&s, &lons, 30.0, |_| Ok(0.25)).unwrap();
        for (k, &lon) in lons.iter().enumerate() {
            let d = (lon - 50.0).abs();
            if (d - half).abs() > 1e-9 {
                assert_eq!(g.visible_count[k] == 1, d < half, "lon {lon}");
            }
            assert_eq!(g.visible_count[k], g.visible_count[100 - k]);
            assert_eq!(g.outage[k], if g.visible_count[k] == 0 { 1.0 } else { 0.25 });
        }
    }

    #[test]
    fn geo_hook_called_once_per_set() {
        let s = vec![site(0.0, 0.0), site(10.0, 40.0)];
        let lons: Vec<f64> = (-180..180).map(|k| k as f64).collect();
        let mut calls = 0;
        let g = geo_profile(&s, &lons, 30.0, |set| {
            calls += 1;
            Ok(0.1 * set.len() as f64)
        })
        .unwrap();
        let distinct: std::collections::HashSet<_> = g.visible.iter().filter(|v| !v.is_empty()).collect();
        assert_eq!(calls, distinct.len());
        assert!(g.visible_count.iter().all(|&c| c <= 2));
    }

    #[test]
    fn dgmodel_hook_matches_direct_subset_run() {
        let omega = [0.3, 0.4, 0.5];
        let r = [1.0, 0.2, 0.1, 0.2, 1.0, 0.3, 0.1, 0.3, 1.0];
        let gamma = crate::dgmodel::gamma_from_correlation(&omega, &r).unwrap();
        let mut hook = dgmodel_outage(&omega, &gamma, FitOptions::default(), 100_000, 5);
        let via_hook = hook(&[0, 2]).unwrap();
        let sub_g = [gamma[0], gamma[2], gamma[6], gamma[8]];
        let m = fit_model(&[0.3, 0.5], &sub_g, FitOptions::default()).unwrap();
        assert_eq!(via_hook, sample(&m, 100_000, 5).unwrap().p_outage());
    }
}
