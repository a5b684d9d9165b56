//! Availability-weighted network link time and data volume versus orbit
//! inclination.
//!
//! Simultaneous visibility from several sites is counted once per site, so
//! the totals overestimate what a single terminal could use.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::orbits::PassProfile;

pub const DEFAULT_BITRATE_BPS: f64 = 5e9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityProfile {
    pub label: String,
    pub inclinations: Vec<f64>,
    /// Availability-weighted link seconds per day.
    pub t: Vec<f64>,
    /// Bits per day, `t * bitrate_bps`.
    pub data_volume: Vec<f64>,
    pub bitrate_bps: f64,
}

/// `T(i) = sum_k A_k tau_k(i)` over the network.
pub fn network_capacity(
    label: impl Into<String>,
    availabilities: &[f64],
    profiles: &[PassProfile],
    bitrate_bps: f64,
) -> Result<CapacityProfile> {
    let taus: Vec<&[f64]> = profiles.iter().map(|p| p.tau.as_slice()).collect();
    let first = profiles
        .first()
        .ok_or_else(|| Error::InvalidArgument("network has no pass profiles".into()))?;
    for p in profiles {
        if p.inclinations != first.inclinations {
            return Err(Error::DimensionMismatch(format!(
                "inclination grid of '{}' differs from '{}'",
                p.site.name, first.site.name
            )));
        }
    }
    capacity_from_tau(label, availabilities, &first.inclinations, &taus, bitrate_bps)
}

/// Same as [`network_capacity`] on bare τ rows sharing `inclinations`.
pub fn capacity_from_tau(
    label: impl Into<String>,
    availabilities: &[f64],
    inclinations: &[f64],
    taus: &[&[f64]],
    bitrate_bps: f64,
) -> Result<CapacityProfile> {
    if availabilities.len() != taus.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} availabilities for {} sites",
            availabilities.len(),
            taus.len()
        )));
    }
    if let Some(a) = availabilities.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::InvalidArgument(format!("availability {a} outside [0, 1]")));
    }
    if !(bitrate_bps > 0.0 && bitrate_bps.is_finite()) {
        return Err(Error::InvalidArgument(format!("bitrate {bitrate_bps} must be positive")));
    }
    if let Some(row) = taus.iter().find(|row| row.len() != inclinations.len()) {
        return Err(Error::DimensionMismatch(format!(
            "{} tau values for {} inclinations",
            row.len(),
            inclinations.len()
        )));
    }
    if taus.iter().flat_map(|r| r.iter()).any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument("link durations must be finite and non-negative".into()));
    }
    let t: Vec<f64> = (0..inclinations.len())
        .map(|i| availabilities.iter().zip(taus).fold(0.0, |acc, (a, row)| acc + a * row[i]))
        .collect();
    Ok(CapacityProfile {
        label: label.into(),
        inclinations: inclinations.to_vec(),
        data_volume: t.iter().map(|x| x * bitrate_bps).collect(),
        t,
        bitrate_bps,
    })
}

/// Trapezoidal integral of `T` over inclination (link seconds per day times
/// degrees).
pub fn capacity_integral(profile: &CapacityProfile) -> Result<f64> {
    let x = &profile.inclinations;
    if x.len() < 2 {
        return Err(Error::InvalidArgument("integral needs at least two inclinations".into()));
    }
    if profile.t.len() != x.len() {
        return Err(Error::DimensionMismatch("T and inclination lengths differ".into()));
    }
    Ok(x.windows(2)
        .zip(profile.t.windows(2))
        .map(|(xi, ti)| 0.5 * (xi[1] - xi[0]) * (ti[0] + ti[1]))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    /// `T / T_baseline` per inclination.
    pub ratios: Vec<f64>,
    pub integral: f64,
    pub integral_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkComparison {
    pub baseline: String,
    pub inclinations: Vec<f64>,
    pub rows: Vec<ComparisonRow>,
}

/// `a / b`, except that two zeros compare as equal (ratio 1).
fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        1.0
    } else {
        a / b
    }
}

/// Ratios of every profile to `profiles[baseline]`.
pub fn compare_networks(profiles: &[CapacityProfile], baseline: usize) -> Result<NetworkComparison> {
    let base = profiles
        .get(baseline)
        .ok_or_else(|| Error::InvalidArgument(format!("baseline index {baseline} out of range")))?;
    if let Some(p) = profiles.iter().find(|p| p.inclinations != base.inclinations) {
        return Err(Error::DimensionMismatch(format!(
            "inclination grid of '{}' differs from baseline '{}'",
            p.label, base.label
        )));
    }
    let base_integral = capacity_integral(base)?;
    let rows = profiles
        .iter()
        .map(|p| {
            let integral = capacity_integral(p)?;
            Ok(ComparisonRow {
                label: p.label.clone(),
                ratios: p.t.iter().zip(&base.t).map(|(&a, &b)| ratio(a, b)).collect(),
                integral,
                integral_ratio: ratio(integral, base_integral),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkComparison {
        baseline: base.label.clone(),
        inclinations: base.inclinations.clone(),
        rows,
    })
}
