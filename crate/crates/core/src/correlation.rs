//! Temporal Pearson correlation between binary cloud series.
//!
//! All moments are population (1/n) moments accumulated as integers, so the
//! coefficients are exact up to the final division. Series with zero
//! variance correlate as 0 and carry a flag.

use rayon::prelude::*;
use serde::Serialize;

use crate::cloudgrid::{CloudMaskSeries, GridSpec, Site, SiteSeries};
use crate::error::{Error, Result};

/// Contour levels exported next to correlation surfaces.
pub const CONTOUR_LEVELS: [f64; 2] = [0.2, 0.4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pearson {
    pub value: f64,
    pub zero_variance: bool,
}

#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    n: u64,
    sa: u64,
    sb: u64,
    saa: u64,
    sbb: u64,
    sab: u64,
}

impl Moments {
    fn of(a: &[u8], b: &[u8]) -> Self {
        let mut m = Moments {
            n: a.len() as u64,
            ..Default::default()
        };
        for (&x, &y) in a.iter().zip(b) {
            let (x, y) = (x as u64, y as u64);
            m.sa += x;
            m.sb += y;
            m.saa += x * x;
            m.sbb += y * y;
            m.sab += x * y;
        }
        m
    }

    /// n^2 times the population covariance.
    fn cov_num(&self) -> i128 {
        self.n as i128 * self.sab as i128 - self.sa as i128 * self.sb as i128
    }

    fn var_nums(&self) -> (i128, i128) {
        let n = self.n as i128;
        (
            n * self.saa as i128 - (self.sa as i128).pow(2),
            n * self.sbb as i128 - (self.sb as i128).pow(2),
        )
    }
}

fn ratio(cov: i128, var_a: i128, var_b: i128) -> Pearson {
    if var_a <= 0 || var_b <= 0 {
        return Pearson {
            value: 0.0,
            zero_variance: true,
        };
    }
    let denom = ((var_a * var_b) as f64).sqrt();
    Pearson {
        value: (cov as f64 / denom).clamp(-1.0, 1.0),
        zero_variance: false,
    }
}

fn check_lengths(a: &[u8], b: &[u8], min: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "series lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    if a.len() < min {
        return Err(Error::InvalidArgument(format!("need at least {min} samples, got {}", a.len())));
    }
    Ok(())
}

pub fn pearson(a: &[u8], b: &[u8]) -> Result<Pearson> {
    check_lengths(a, b, 2)?;
    let m = Moments::of(a, b);
    let (va, vb) = m.var_nums();
    Ok(ratio(m.cov_num(), va, vb))
}

/// Population covariance `mean[(a - mean a)(b - mean b)]`.
pub fn covariance_pair(a: &[u8], b: &[u8]) -> Result<f64> {
    check_lengths(a, b, 1)?;
    let m = Moments::of(a, b);
    let n = m.n as f64;
    Ok(m.cov_num() as f64 / (n * n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSurface {
    pub spec: GridSpec,
    pub site: Site,
    /// Row-major r per pixel.
    pub r: Vec<f64>,
    pub zero_variance_mask: Vec<bool>,
    pub n_frames: usize,
}

impl CorrelationSurface {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.r[self.spec.index(row, col)]
    }
}

fn check_aligned(reference: &[i64], other: &[i64], what: &str) -> Result<()> {
    if reference != other {
        return Err(Error::Misaligned(format!(
            "{what}: {} vs {} timestamps or differing epochs",
            reference.len(),
            other.len()
        )));
    }
    Ok(())
}

/// Per-pixel Pearson r of every grid cell against the site's binary series.
pub fn correlation_surface(series: &CloudMaskSeries, site_series: &SiteSeries) -> Result<CorrelationSurface> {
    check_aligned(series.timestamps(), &site_series.timestamps, "site series vs grid")?;
    let spec = *series.spec();
    let a = &site_series.binary;
    let n = a.len() as i128;
    let sa: u64 = a.iter().map(|&v| v as u64).sum();
    let saa: u64 = a.iter().map(|&v| (v as u64).pow(2)).sum();
    let var_a = n * saa as i128 - (sa as i128).pow(2);

    let n_lon = spec.n_lon;
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..spec.n_lat)
        .into_par_iter()
        .map(|row| {
            let mut sb = vec![0u64; n_lon];
            let mut sab = vec![0u64; n_lon];
            for (frame, &at) in series.frames().zip(a) {
                let cells = &frame[row * n_lon..(row + 1) * n_lon];
                for (acc, &v) in sb.iter_mut().zip(cells) {
                    *acc += v as u64;
                }
                if at != 0 {
                    for (acc, &v) in sab.iter_mut().zip(cells) {
                        *acc += (at as u64) * v as u64;
                    }
                }
            }
            sb.iter()
                .zip(&sab)
                .map(|(&b, &ab)| {
                    // Cells are binary, so sum(b^2) == sum(b).
                    let var_b = n * b as i128 - (b as i128).pow(2);
                    let cov = n * ab as i128 - sa as i128 * b as i128;
                    let p = ratio(cov, var_a, var_b);
                    (p.value, p.zero_variance)
                })
                .unzip()
        })
        .collect();
    let (r, zero_variance_mask) = rows.into_iter().fold((Vec::new(), Vec::new()), |(mut r, mut z), (rr, zz)| {
        r.extend(rr);
        z.extend(zz);
        (r, z)
    });
    Ok(CorrelationSurface {
        spec,
        site: site_series.site.clone(),
        r,
        zero_variance_mask,
        n_frames: series.n_frames(),
    })
}

/// Pixels on the `level` contour: r at or above the level with at least one
/// 4-neighbour below it. Returns (row, col) pairs in raster order.
pub fn contour_pixels(surface: &CorrelationSurface, level: f64) -> Vec<(usize, usize)> {
    let spec = surface.spec;
    let mut out = Vec::new();
    for row in 0..spec.n_lat {
        for col in 0..spec.n_lon {
            if surface.at(row, col) < level {
                continue;
            }
            let below = |r: usize, c: usize| surface.at(r, c) < level;
            let edge = (row > 0 && below(row - 1, col))
                || (row + 1 < spec.n_lat && below(row + 1, col))
                || (col > 0 && below(row, col - 1))
                || (col + 1 < spec.n_lon && below(row, col + 1));
            if edge {
                out.push((row, col));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub sites: Vec<Site>,
    /// Row-major N x N.
    pub r: Vec<f64>,
    /// Per site: the binary series has zero variance.
    pub zero_variance: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.r[k * self.n() + l]
    }

    /// Upper-triangle off-diagonal entries, row by row.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .flat_map(|k| (k + 1..n).map(move |l| (k, l)))
            .map(|(k, l)| self.get(k, l))
            .collect()
    }
}

pub fn correlation_matrix(site_series: &[SiteSeries]) -> Result<CorrelationMatrix> {
    if site_series.len() < 2 {
        return Err(Error::InvalidArgument("correlation matrix needs at least 2 sites".into()));
    }
    for s in &site_series[1..] {
        check_aligned(&site_series[0].timestamps, &s.timestamps, &s.site.name)?;
    }
    let n = site_series.len();
    let mut r = vec![0.0; n * n];
    let mut zero_variance = vec![false; n];
    for k in 0..n {
        let own = pearson(&site_series[k].binary, &site_series[k].binary)?;
        zero_variance[k] = own.zero_variance;
        r[k * n + k] = 1.0;
        for l in k + 1..n {
            let p = pearson(&site_series[k].binary, &site_series[l].binary)?;
            r[k * n + l] = p.value;
            r[l * n + k] = p.value;
        }
    }
    Ok(CorrelationMatrix {
        sites: site_series.iter().map(|s| s.site.clone()).collect(),
        r,
        zero_variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanAbsCorrelation {
    pub mean: f64,
    /// Population std of |r| over the pairs.
    pub std: f64,
}

/// Mean and spread of |r| over the N(N-1)/2 distinct site pairs.
pub fn mean_abs_correlation(m: &CorrelationMatrix) -> Result<MeanAbsCorrelation> {
    if m.n() < 2 {
        return Err(Error::InvalidArgument("mean |r| needs at least 2 sites".into()));
    }
    let abs: Vec<f64> = m.off_diagonal().iter().map(|v| v.abs()).collect();
    let k = abs.len() as f64;
    let mean = abs.iter().sum::<f64>() / k;
    let std = (abs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k).sqrt();
    Ok(MeanAbsCorrelation { mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn site_series(name: &str, binary: Vec<u8>) -> SiteSeries {
        SiteSeries {
            site: Site::new(name, 0.0, 0.0, 0).unwrap(),
            source_id: "t".into(),
            timestamps: (0..binary.len() as i64).collect(),
            cloud_fraction: binary.iter().map(|&v| v as f64).collect(),
            binary,
        }
    }

    fn random_bits(n: usize, p: f64, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| u8::from(rng.random::<f64>() < p)).collect()
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[0, 1, 0, 1], &[0, 1, 0, 1]).unwrap().value, 1.0);
        assert_eq!(pearson(&[0, 1, 0, 1], &[1, 0, 1, 0]).unwrap().value, -1.0);
        assert_eq!(pearson(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().value, 0.0);
        let z = pearson(&[1, 1, 1], &[0, 1, 0]).unwrap();
        assert!(z.zero_variance);
        assert_eq!(z.value, 0.0);
        assert!(pearson(&[1], &[1]).is_err());
        assert!(pearson(&[1, 0], &[1, 0, 1]).is_err());
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(covariance_pair(&[0, 1, 0, 1], &[0, 1, 0, 1]).unwrap(), 0.25);
        let n = 20_000;
        let a = random_bits(n, 0.5, 1);
        let b = random_bits(n, 0.5, 2);
        assert!(covariance_pair(&a, &b).unwrap().abs() < 4.0 * 0.25 / (n as f64).sqrt());
    }

    #[test]
    fn covariance_matches_pearson_identity() {
        for seed in 0..20 {
            let a = random_bits(500, 0.3, seed);
            let b = random_bits(500, 0.6, seed + 100);
            let g = covariance_pair(&a, &b).unwrap();
            let gaa = covariance_pair(&a, &a).unwrap();
            let gbb = covariance_pair(&b, &b).unwrap();
            let r = pearson(&a, &b).unwrap().value;
            assert!((g - r * (gaa * gbb).sqrt()).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn pearson_bounded_and_symmetric(bits in proptest::collection::vec((0u8..=1, 0u8..=1), 2..200)) {
            let (a, b): (Vec<u8>, Vec<u8>) = bits.into_iter().unzip();
            let r = pearson(&a, &b).unwrap();
            prop_assert!(r.value.abs() <= 1.0);
            prop_assert_eq!(r.value, pearson(&b, &a).unwrap().value);
            let na: Vec<u8> = a.iter().map(|v| 1 - v).collect();
            let nb: Vec<u8> = b.iter().map(|v| 1 - v).collect();
            prop_assert_eq!(pearson(&na, &nb).unwrap().value, r.value);
            prop_assert_eq!(pearson(&na, &b).unwrap().value, -r.value);
        }
    }

    #[test]
    fn matrix_matches_pairwise() {
        let series: Vec<SiteSeries> = (0..4).map(|k| site_series(&format!("s{k}"), random_bits(300, 0.4, k))).collect();
        let m = correlation_matrix(&series).unwrap();
        for k in 0..4 {
            assert_eq!(m.get(k, k), 1.0);
            for l in 0..4 {
                assert_eq!(m.get(k, l), m.get(l, k));
                if k != l {
                    assert_eq!(m.get(k, l), pearson(&series[k].binary, &series[l].binary).unwrap().value);
                }
            }
        }
        let same = correlation_matrix(&[series[0].clone(), series[0].clone()]).unwrap();
        assert_eq!(same.r, vec![1.0; 4]);
    }

    #[test]
    fn independent_matrix_is_near_zero() {
        let n = 10_000;
        let series: Vec<SiteSeries> = (0..5).map(|k| site_series("s", random_bits(n, 0.3, 50 + k))).collect();
        let m = correlation_matrix(&series).unwrap();
        let bound = 4.0 / (n as f64).sqrt();
        assert!(m.off_diagonal().iter().all(|r| r.abs() < bound));
    }

    fn matrix_from_off(n: usize, off: &[f64]) -> CorrelationMatrix {
        let mut r = vec![0.0; n * n];
        let mut it = off.iter();
        for k in 0..n {
            r[k * n + k] = 1.0;
            for l in k + 1..n {
                let v = *it.next().unwrap();
                r[k * n + l] = v;
                r[l * n + k] = v;
            }
        }
        CorrelationMatrix {
            sites: (0..n).map(|k| Site::new(format!("s{k}"), 0.0, 0.0, 0).unwrap()).collect(),
            r,
            zero_variance: vec![false; n],
        }
    }

    #[test]
    fn mean_abs_examples() {
        let zero = matrix_from_off(4, &[0.0; 6]);
        assert_eq!(mean_abs_correlation(&zero).unwrap().mean, 0.0);
        let m = matrix_from_off(3, &[0.5, -0.5, 0.0]);
        let s = mean_abs_correlation(&m).unwrap();
        assert!((s.mean - 1.0 / 3.0).abs() < 1e-15);
        let expected_std = ((2.0 * (0.5f64 - 1.0 / 3.0).powi(2) + (1.0f64 / 3.0).powi(2)) / 3.0).sqrt();
        assert!((s.std - expected_std).abs() < 1e-15);
    }

    #[test]
    fn mean_abs_invariant_under_reordering() {
        let m = matrix_from_off(4, &[0.1, -0.3, 0.25, 0.05, -0.6, 0.2]);
        let perm = [2usize, 0, 3, 1];
        let mut p = m.clone();
        for k in 0..4 {
            for l in 0..4 {
                p.r[k * 4 + l] = m.get(perm[k], perm[l]);
            }
        }
        let a = mean_abs_correlation(&m).unwrap();
        let b = mean_abs_correlation(&p).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-15);
        assert!((a.std - b.std).abs() < 1e-15);
    }

    #[test]
    fn surface_of_identical_pixels_is_one() {
        let spec = GridSpec::from_corner(3, 3, 0.0, 0.0, 1.0).unwrap();
        let pattern = random_bits(50, 0.5, 9);
        let cells: Vec<u8> = pattern.iter().flat_map(|&v| std::iter::repeat_n(v, 9)).collect();
        let series = CloudMaskSeries::new(spec, (0..50).collect(), cells, "t").unwrap();
        let (lat, lon) = spec.center(1, 1);
        let ss = crate::cloudgrid::extract_site_series(&series, &Site::new("c", lat, lon, 0).unwrap(), 0.5).unwrap();
        let surf = correlation_surface(&series, &ss).unwrap();
        assert!(surf.r.iter().all(|&r| r == 1.0));
        assert!(surf.zero_variance_mask.iter().all(|z| !z));
    }

    #[test]
    fn surface_matches_pearson_and_flags_constant_pixels() {
        let spec = GridSpec::from_corner(4, 5, 0.0, 0.0, 1.0).unwrap();
        let n = 200;
        let mut cells = random_bits(n * 20, 0.45, 4);
        for t in 0..n {
            cells[t * 20 + 7] = 0;
        }
        let series = CloudMaskSeries::new(spec, (0..n as i64).collect(), cells, "t").unwrap();
        let (lat, lon) = spec.center(2, 3);
        let ss = crate::cloudgrid::extract_site_series(&series, &Site::new("c", lat, lon, 0).unwrap(), 0.5).unwrap();
        let surf = correlation_surface(&series, &ss).unwrap();
        assert_eq!(surf.at(2, 3), 1.0);
        for row in 0..4 {
            for col in 0..5 {
                let p = pearson(&ss.binary, &series.pixel_series(row, col)).unwrap();
                assert_eq!(surf.at(row, col), p.value);
                assert_eq!(surf.zero_variance_mask[spec.index(row, col)], p.zero_variance);
            }
        }
        assert!(surf.zero_variance_mask[7]);
        let mut shifted = ss.clone();
        shifted.timestamps[0] = -1;
        assert!(matches!(correlation_surface(&series, &shifted), Err(Error::Misaligned(_))));
    }

    #[test]
    fn contour_extraction() {
        let spec = GridSpec::from_corner(3, 3, 0.0, 0.0, 1.0).unwrap();
        let surf = CorrelationSurface {
            spec,
            site: Site::new("c", 1.5, 1.5, 0).unwrap(),
            r: vec![0.1, 0.3, 0.1, 0.3, 1.0, 0.3, 0.1, 0.3, 0.1],
            zero_variance_mask: vec![false; 9],
            n_frames: 10,
        };
        assert_eq!(contour_pixels(&surf, 0.2), vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert_eq!(contour_pixels(&surf, 0.4), vec![(1, 1)]);
    }
}
