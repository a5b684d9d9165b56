use std::collections::BTreeMap;

use chrono::{DateTime, Datelike};
use serde::Serialize;

use super::SiteSeries;
use crate::error::{Error, Result};

const MIN_SCREENED_SOURCES: usize = 3;

/// Source outlier screening. A source is flagged when its annual
/// availability lies more than `z` standard deviations from the mean of the
/// other sources; the deviation scale is the spread of those other sources,
/// floored at `min_sigma`. Screening needs at least three sources, since
/// with two neither can be singled out. Flagging never removes a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutlierPolicy {
    pub z: f64,
    pub min_sigma: f64,
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        OutlierPolicy { z: 3.0, min_sigma: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceSummary {
    pub source_id: String,
    pub annual_availability: f64,
    pub monthly: [Option<f64>; 12],
    pub month_counts: [usize; 12],
    /// Leave-one-out z-score; absent with fewer than three sources.
    pub z_score: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeasonalProfile {
    /// Mean availability per calendar month (January first), averaged over
    /// sources. `None` when no source has frames in that month.
    pub monthly_mean: [Option<f64>; 12],
    /// Root-sum-square of the across-source and across-year spreads.
    pub monthly_std: [Option<f64>; 12],
    pub across_source_std: [Option<f64>; 12],
    pub across_year_std: [Option<f64>; 12],
    pub sources: Vec<SourceSummary>,
}

fn month_of(ts: i64) -> Result<(i32, usize)> {
    let dt = DateTime::from_timestamp(ts, 0).ok_or_else(|| Error::InvalidArgument(format!("timestamp {ts} out of range")))?;
    Ok((dt.year(), dt.month0() as usize))
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

struct SourceAccum {
    sum: [f64; 12],
    count: [usize; 12],
    by_year: BTreeMap<(i32, usize), (f64, usize)>,
}

/// Monthly availability averaged across data sources. Series sharing a
/// `source_id` are pooled into one source.
pub fn seasonal_profile(series: &[SiteSeries], policy: OutlierPolicy) -> Result<SeasonalProfile> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("seasonal profile needs at least one source".into()));
    }
    let mut sources: BTreeMap<&str, SourceAccum> = BTreeMap::new();
    for s in series {
        let acc = sources.entry(s.source_id.as_str()).or_insert_with(|| SourceAccum {
            sum: [0.0; 12],
            count: [0; 12],
            by_year: BTreeMap::new(),
        });
        for (&ts, &fraction) in s.timestamps.iter().zip(&s.cloud_fraction) {
            let (year, month) = month_of(ts)?;
            let availability = 1.0 - fraction;
            acc.sum[month] += availability;
            acc.count[month] += 1;
            let e = acc.by_year.entry((year, month)).or_insert((0.0, 0));
            e.0 += availability;
            e.1 += 1;
        }
    }

    let mut summaries = Vec::with_capacity(sources.len());
    let mut year_vars: Vec<Vec<f64>> = vec![Vec::new(); 12];
    for (id, acc) in &sources {
        let monthly: [Option<f64>; 12] = std::array::from_fn(|m| (acc.count[m] > 0).then(|| acc.sum[m] / acc.count[m] as f64));
        let total: usize = acc.count.iter().sum();
        let annual = acc.sum.iter().sum::<f64>() / total as f64;
        for (m, vars) in year_vars.iter_mut().enumerate() {
            let per_year: Vec<f64> = acc
                .by_year
                .iter()
                .filter(|((_, month), _)| *month == m)
                .map(|(_, (sum, n))| sum / *n as f64)
                .collect();
            if !per_year.is_empty() {
                vars.push(population_std(&per_year).powi(2));
            }
        }
        summaries.push(SourceSummary {
            source_id: id.to_string(),
            annual_availability: annual,
            monthly,
            month_counts: acc.count,
            z_score: None,
            flagged: false,
        });
    }

    if summaries.len() >= MIN_SCREENED_SOURCES {
        let annual: Vec<f64> = summaries.iter().map(|s| s.annual_availability).collect();
        for (i, summary) in summaries.iter_mut().enumerate() {
            let others: Vec<f64> = annual.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &a)| a).collect();
            let mean = others.iter().sum::<f64>() / others.len() as f64;
            let sigma = population_std(&others).max(policy.min_sigma);
            let z = (summary.annual_availability - mean) / sigma;
            summary.z_score = Some(z);
            summary.flagged = z.abs() > policy.z;
        }
    }

    let mut monthly_mean = [None; 12];
    let mut monthly_std = [None; 12];
    let mut across_source_std = [None; 12];
    let mut across_year_std = [None; 12];
    for m in 0..12 {
        let values: Vec<f64> = summaries.iter().filter_map(|s| s.monthly[m]).collect();
        if values.is_empty() {
            continue;
        }
        let src = population_std(&values);
        let yr = (year_vars[m].iter().sum::<f64>() / year_vars[m].len() as f64).sqrt();
        monthly_mean[m] = Some(values.iter().sum::<f64>() / values.len() as f64);
        across_source_std[m] = Some(src);
        across_year_std[m] = Some(yr);
        monthly_std[m] = Some(src.hypot(yr));
    }

    Ok(SeasonalProfile {
        monthly_mean,
        monthly_std,
        across_source_std,
        across_year_std,
        sources: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloudgrid::Site;

    const DAY: i64 = 86_400;

    fn series(source: &str, days: i64, fraction: impl Fn(i64) -> f64) -> SiteSeries {
        let timestamps: Vec<i64> = (0..days).map(|d| d * DAY).collect();
        let cloud_fraction: Vec<f64> = timestamps.iter().map(|&t| fraction(t)).collect();
        SiteSeries {
            site: Site::new("s", -30.0, 140.0, 0).unwrap(),
            source_id: source.into(),
            binary: cloud_fraction.iter().map(|&f| u8::from(f >= 0.5)).collect(),
            timestamps,
            cloud_fraction,
        }
    }

    #[test]
    fn constant_single_source() {
        let s = series("a", 2 * 365, |_| 0.3);
        let p = seasonal_profile(&[s], OutlierPolicy::default()).unwrap();
        for m in 0..12 {
            assert!((p.monthly_mean[m].unwrap() - 0.7).abs() < 1e-12);
            assert!(p.monthly_std[m].unwrap().abs() < 1e-12);
        }
        assert_eq!(p.sources[0].z_score, None);
    }

    #[test]
    fn two_sources_average() {
        let a = series("a", 365, |_| 0.4);
        let b = series("b", 365, |_| 0.2);
        let p = seasonal_profile(&[a, b], OutlierPolicy::default()).unwrap();
        for m in 0..12 {
            assert!((p.monthly_mean[m].unwrap() - 0.7).abs() < 1e-12);
            assert!((p.across_source_std[m].unwrap() - 0.1).abs() < 1e-12);
        }
        assert!(p.sources.iter().all(|s| s.z_score.is_none() && !s.flagged));
    }

    #[test]
    fn empty_months_are_absent() {
        let s = series("a", 31, |_| 0.5);
        let p = seasonal_profile(&[s], OutlierPolicy::default()).unwrap();
        assert_eq!(p.monthly_mean[0], Some(0.5));
        assert!(p.monthly_mean[1..].iter().all(Option::is_none));
    }

    #[test]
    fn monthly_means_recombine_to_annual() {
        let s = series("a", 3 * 365 + 17, |t| ((t / DAY) % 7) as f64 / 7.0);
        let p = seasonal_profile(std::slice::from_ref(&s), OutlierPolicy::default()).unwrap();
        let src = &p.sources[0];
        let total: usize = src.month_counts.iter().sum();
        let weighted: f64 = (0..12).map(|m| src.monthly[m].unwrap() * src.month_counts[m] as f64).sum::<f64>() / total as f64;
        assert!((weighted - src.annual_availability).abs() < 1e-12);
        assert!((src.annual_availability - s.availability()).abs() < 1e-12);
    }

    #[test]
    fn across_year_spread() {
        // Year 1 fully clear, year 2 fully cloudy -> each month std 0.5.
        let s = series("a", 2 * 365, |t| if t < 365 * DAY { 0.0 } else { 1.0 });
        let p = seasonal_profile(&[s], OutlierPolicy::default()).unwrap();
        assert!((p.across_year_std[5].unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn outlier_flagged_by_z_score() {
        // Oracle: leave-one-out z = (A_c - mean(A_a, A_b)) / max(std(A_a, A_b), floor).
        let a = series("a", 365, |_| 0.30);
        let b = series("b", 365, |_| 0.32);
        let c = series("c", 365, |_| 0.60);
        let p = seasonal_profile(&[a, b, c], OutlierPolicy::default()).unwrap();
        let (aa, ab, ac) = (0.70, 0.68, 0.40);
        let expected_z = (ac - (aa + ab) / 2.0) / 0.01_f64.max(((aa - ab) / 2.0f64).abs());
        let sc = p.sources.iter().find(|s| s.source_id == "c").unwrap();
        assert!((sc.z_score.unwrap() - expected_z).abs() < 1e-9);
        assert!(sc.flagged);
        let flagged: Vec<&str> = p.sources.iter().filter(|s| s.flagged).map(|s| s.source_id.as_str()).collect();
        assert_eq!(flagged, vec!["c"]);
    }
}
