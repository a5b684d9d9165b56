use std::path::Path;

use serde::Serialize;

use super::tables::{self, labeled, parse_sweep, write_table};
use super::{
    sibling, AvailabilityArgs, CapacityArgs, CorrMatrixArgs, CorrSurfaceArgs, Ctx, Encoding, GeoArgs, OptimizeArgs, OutageArgs, PassesArgs,
    ReportArgs, SiteSeriesArgs, SynthArgs,
};
use crate::capacity::{capacity_from_tau, compare_networks, CapacityProfile};
use crate::cloudgrid::{
    availability_grid, extract_site_series, seasonal_profile, synth_generate, write_cmg, CellEncoding, CloudMaskSeries, GridSpec,
    OutlierPolicy, Site, SiteSeries,
};
use crate::correlation::{contour_pixels, correlation_matrix, correlation_surface, mean_abs_correlation};
use crate::dgmodel::{equicorrelated_gamma, fit_model, gamma_from_correlation, sample, FitOptions};
use crate::error::{Error, Result};
use crate::io::{decode_pgm, fmt_f64, format_matrix, format_sites, parse_matrix};
use crate::optimizer::{latitude_weight_field, network_report, optimize_network, OptimizeOptions, Weights};
use crate::orbits::{dgmodel_outage, geo_profile, tau_profiles, TauOptions};

fn grid_comments(spec: &GridSpec) -> Vec<String> {
    vec![
        format!("n_lat = {}", spec.n_lat),
        format!("n_lon = {}", spec.n_lon),
        format!("lat_min = {}", spec.lat_min),
        format!("lat_max = {}", spec.lat_max),
        format!("lon_min = {}", spec.lon_min),
        format!("lon_max = {}", spec.lon_max),
    ]
}

fn site_series_all(series: &CloudMaskSeries, sites: &[Site], threshold: f64) -> Result<Vec<SiteSeries>> {
    sites.iter().map(|s| extract_site_series(series, s, threshold)).collect()
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub(super) fn synth(ctx: &mut Ctx, a: &SynthArgs) -> Result<()> {
    let spec = GridSpec::from_corner(a.n_lat, a.n_lon, a.lat_min, a.lon_min, a.pixel_size)?;
    let omega = match &a.omega_field {
        Some(p) => {
            let (values, rows, cols) = parse_matrix(&ctx.input_text(p)?)?;
            if (rows, cols) != (a.n_lat, a.n_lon) {
                return Err(Error::DimensionMismatch(format!(
                    "omega field is {rows}x{cols}, grid is {}x{}",
                    a.n_lat, a.n_lon
                )));
            }
            values
        }
        None => vec![a.omega; spec.n_cells()],
    };
    let series = synth_generate(spec, a.frames, a.corr_length, &omega, a.seed)?;
    let encoding = match a.encoding {
        Encoding::Bits => CellEncoding::Bits,
        Encoding::Ascii => CellEncoding::Ascii,
    };
    ctx.output(&a.out, write_cmg(&series, encoding));
    ctx.result("source_id", series.source_id())?;
    ctx.finish("synth", &a.out, a)
}

pub(super) fn availability(ctx: &mut Ctx, a: &AvailabilityArgs) -> Result<()> {
    let series = ctx.masks(&a.masks)?;
    let grid = availability_grid(&series);
    let spec = grid.spec;
    let avail = grid.availability();
    let mut comments = grid_comments(&spec);
    comments.push(format!("n_frames = {}", series.n_frames()));
    ctx.output(&a.out, format_matrix(&avail, spec.n_lon, &comments));
    if let Some(r) = &a.raster {
        ctx.raster(r, &avail, spec.n_lon, spec.n_lat);
    }
    if let (Some(sites), Some(table)) = (&a.sites, &a.site_table) {
        let sites = ctx.sites(sites)?;
        let ss = site_series_all(&series, &sites, a.threshold)?;
        ctx.output(table, tables::format_avail(&ss)?);
    }
    ctx.finish("availability", &a.out, a)
}

pub(super) fn site_series(ctx: &mut Ctx, a: &SiteSeriesArgs) -> Result<()> {
    let sites = ctx.sites(&a.sites)?;
    let mut all: Vec<SiteSeries> = Vec::new();
    for m in &a.masks {
        let series = ctx.masks(m)?;
        all.extend(site_series_all(&series, &sites, a.threshold)?);
    }
    let rows = all.iter().flat_map(|s| {
        (0..s.len()).map(move |t| {
            vec![
                s.site.name.clone(),
                s.source_id.clone(),
                s.timestamps[t].to_string(),
                fmt_f64(s.cloud_fraction[t]),
                s.binary[t].to_string(),
            ]
        })
    });
    ctx.output(
        &a.out,
        write_table(&["site", "source", "timestamp", "cloud_fraction", "binary"], rows, &[])?,
    );

    if let Some(path) = &a.seasonal {
        let policy = OutlierPolicy {
            z: a.outlier_z,
            min_sigma: a.outlier_min_sigma,
        };
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "nan".into());
        let mut monthly = Vec::new();
        let mut sources = Vec::new();
        for site in &sites {
            let mine: Vec<SiteSeries> = all.iter().filter(|s| s.site.name == site.name).cloned().collect();
            let prof = seasonal_profile(&mine, policy)?;
            for m in 0..12 {
                monthly.push(vec![
                    site.name.clone(),
                    (m + 1).to_string(),
                    opt(prof.monthly_mean[m]),
                    opt(prof.monthly_std[m]),
                    opt(prof.across_source_std[m]),
                    opt(prof.across_year_std[m]),
                ]);
            }
            for s in &prof.sources {
                sources.push(vec![
                    site.name.clone(),
                    s.source_id.clone(),
                    fmt_f64(s.annual_availability),
                    opt(s.z_score),
                    s.flagged.to_string(),
                ]);
            }
        }
        ctx.output(
            path,
            write_table(
                &["site", "month", "availability", "std", "across_source_std", "across_year_std"],
                monthly,
                &[],
            )?,
        );
        ctx.output(
            &sibling(path, "_sources.csv"),
            write_table(&["site", "source", "annual_availability", "z_score", "flagged"], sources, &[])?,
        );
    }
    ctx.finish("site-series", &a.out, a)
}

pub(super) fn corr_surface(ctx: &mut Ctx, a: &CorrSurfaceArgs) -> Result<()> {
    let series = ctx.masks(&a.masks)?;
    let sites = ctx.sites(&a.sites)?;
    let spec = *series.spec();
    for ss in site_series_all(&series, &sites, a.threshold)? {
        let surface = correlation_surface(&series, &ss)?;
        let stem = file_safe(&ss.site.name);
        let mut comments = grid_comments(&spec);
        comments.push(format!("site = {}", ss.site.name));
        ctx.output(
            &a.out_dir.join(format!("corr_{stem}.txt")),
            format_matrix(&surface.r, spec.n_lon, &comments),
        );
        ctx.raster(&a.out_dir.join(format!("corr_{stem}.pgm")), &surface.r, spec.n_lon, spec.n_lat);
        let mut rows = Vec::new();
        for &level in &a.levels {
            for (row, col) in contour_pixels(&surface, level) {
                let (lat, lon) = spec.center(row, col);
                rows.push(vec![fmt_f64(level), row.to_string(), col.to_string(), fmt_f64(lat), fmt_f64(lon)]);
            }
        }
        ctx.output(
            &a.out_dir.join(format!("contours_{stem}.csv")),
            write_table(&["level", "row", "col", "lat_deg", "lon_deg"], rows, &[])?,
        );
    }
    ctx.finish("corr-surface", &a.out_dir.join("corr-surface"), a)
}

pub(super) fn corr_matrix(ctx: &mut Ctx, a: &CorrMatrixArgs) -> Result<()> {
    let series = ctx.masks(&a.masks)?;
    let sites = ctx.sites(&a.sites)?;
    let ss = site_series_all(&series, &sites, a.threshold)?;
    let m = correlation_matrix(&ss)?;
    let names: Vec<String> = sites.iter().map(|s| s.name.clone()).collect();
    ctx.output(&a.out, tables::format_corr(&names, &m.r)?);
    ctx.result("mean_abs_correlation", mean_abs_correlation(&m)?)?;
    ctx.result("zero_variance", &m.zero_variance)?;
    ctx.finish("corr-matrix", &a.out, a)
}

fn load_dependence(
    ctx: &mut Ctx,
    names: &[String],
    omega: &[f64],
    corr: Option<&Path>,
    r: Option<f64>,
    gamma: Option<&Path>,
) -> Result<Vec<f64>> {
    let n = omega.len();
    if let Some(p) = corr {
        let table = tables::parse_corr(&ctx.input_text(p)?)?;
        let r = if names.is_empty() {
            if table.names.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} correlation columns for {n} sites",
                    table.names.len()
                )));
            }
            table.r
        } else {
            table.reorder(names)?
        };
        return gamma_from_correlation(omega, &r);
    }
    if let Some(p) = gamma {
        let (g, rows, cols) = parse_matrix(&ctx.input_text(p)?)?;
        if rows != n || cols != n {
            return Err(Error::DimensionMismatch(format!("gamma is {rows}x{cols} for {n} sites")));
        }
        return Ok(g);
    }
    Ok(equicorrelated_gamma(omega, r.unwrap_or(0.0)))
}

pub(super) fn outage(ctx: &mut Ctx, a: &OutageArgs) -> Result<()> {
    let (names, omega) = match (&a.avail, &a.omega) {
        (Some(p), _) => {
            let rows = tables::parse_avail(&ctx.input_text(p)?)?;
            (
                rows.iter().map(|r| r.name.clone()).collect(),
                rows.iter().map(|r| r.omega).collect(),
            )
        }
        (None, Some(o)) => match (a.n, o.as_slice()) {
            (Some(n), [single]) => (Vec::new(), vec![*single; n]),
            (Some(_), _) => return Err(Error::InvalidArgument("--n repeats exactly one --omega value".into())),
            (None, _) => (Vec::new(), o.clone()),
        },
        (None, None) => return Err(Error::InvalidArgument("either --avail or --omega is required".into())),
    };
    let gamma = load_dependence(ctx, &names, &omega, a.corr.as_deref(), a.r, a.gamma.as_deref())?;
    let model = fit_model(
        &omega,
        &gamma,
        FitOptions {
            clamp_degenerate: a.clamp_degenerate,
        },
    )?;
    let dist = sample(&model, a.samples, a.seed)?;
    let comments = vec![
        format!("n_sites = {}", model.n_sites),
        format!("n_samples = {}", dist.n_samples),
        format!("seed = {}", a.seed),
        format!("psd_repaired = {}", model.psd_repaired),
        format!("repair_delta = {}", fmt_f64(model.repair_delta)),
        format!("max_residual = {}", fmt_f64(model.max_residual)),
    ];
    let rows = (0..=model.n_sites).map(|m| {
        vec![
            m.to_string(),
            fmt_f64(dist.cdf[m]),
            fmt_f64(dist.ci95[m]),
            dist.counts[m].to_string(),
        ]
    });
    ctx.output(&a.out, write_table(&["m", "p_at_most_m", "ci95", "count"], rows, &comments)?);
    ctx.result("p_outage", dist.p_outage())?;
    ctx.result("psd_repaired", model.psd_repaired)?;
    ctx.result("repair_delta", model.repair_delta)?;
    ctx.finish("outage", &a.out, a)
}

#[derive(Serialize)]
struct SelectionFile<'a> {
    n_requested: usize,
    threshold: f64,
    weights: &'a Weights,
    seeds: &'a [Site],
    selected: &'a [crate::optimizer::SelectedSite],
}

pub(super) fn optimize(ctx: &mut Ctx, a: &OptimizeArgs) -> Result<()> {
    let series = ctx.masks(&a.masks)?;
    let spec = *series.spec();
    let seeds = match &a.seeds {
        Some(p) => ctx.sites(p)?,
        None => Vec::new(),
    };
    let mask = match &a.mask {
        Some(p) => {
            let (px, w, h) = decode_pgm(&ctx.input(p)?)?;
            if (w, h) != (spec.n_lon, spec.n_lat) {
                return Err(Error::DimensionMismatch(format!(
                    "mask raster is {w}x{h}, grid is {}x{}",
                    spec.n_lon, spec.n_lat
                )));
            }
            Some(px.iter().map(|&v| v == 0).collect::<Vec<bool>>())
        }
        None => None,
    };
    let weights = Weights {
        w0: a.w0,
        spatial: a.lat_weight.then(|| latitude_weight_field(&spec, a.lat_slope)),
        spatial_excludes_w0: a.lat_weight_corr_only,
        ..Weights::default()
    };
    let opts = OptimizeOptions {
        threshold: a.threshold,
        min_separation_px: a.min_separation,
        keep_step_surfaces: true,
    };
    let result = optimize_network(&series, a.n, &weights, mask.as_deref(), &seeds, opts)?;

    let mut json = serde_json::to_vec_pretty(&SelectionFile {
        n_requested: a.n,
        threshold: a.threshold,
        weights: &Weights {
            spatial: None,
            ..weights.clone()
        },
        seeds: &result.seeds,
        selected: &result.selected,
    })?;
    json.push(b'\n');
    ctx.output(&a.out, json);
    ctx.output(&sibling(&a.out, "_sites.csv"), format_sites(&result.network())?);
    for s in &result.step_surfaces {
        let g: Vec<f64> = s.g.iter().zip(&s.mask).map(|(&v, &m)| if m { f64::NAN } else { v }).collect();
        let step = s.n_selected + 1 - result.seeds.len();
        ctx.raster(&sibling(&a.out, &format!("_g{step}.pgm")), &g, spec.n_lon, spec.n_lat);
    }
    ctx.finish("optimize", &a.out, a)
}

pub(super) fn passes(ctx: &mut Ctx, a: &PassesArgs) -> Result<()> {
    let sites = ctx.sites(&a.sites)?;
    let inc = parse_sweep(&a.inc)?;
    let opts = TauOptions {
        altitude_km: a.alt,
        days: a.days,
        min_elevation_deg: a.min_elev,
        step_s: a.step,
    };
    let profiles = tau_profiles(&sites, &inc, opts)?;
    let rows = profiles.iter().flat_map(|p| {
        p.inclinations
            .iter()
            .zip(&p.tau)
            .map(|(i, t)| vec![p.site.name.clone(), fmt_f64(*i), fmt_f64(*t)])
            .collect::<Vec<_>>()
    });
    let comments = vec![
        format!("altitude_km = {}", a.alt),
        format!("days = {}", a.days),
        format!("min_elevation_deg = {}", a.min_elev),
        format!("step_s = {}", a.step),
        "raan_deg = 0".into(),
        "phase_deg = 0".into(),
    ];
    ctx.output(&a.out, write_table(&["site", "inclination_deg", "tau_s_per_day"], rows, &comments)?);
    ctx.finish("passes", &a.out, a)
}

pub(super) fn geo(ctx: &mut Ctx, a: &GeoArgs) -> Result<()> {
    let sites = ctx.sites(&a.sites)?;
    let lons = parse_sweep(&a.lon)?;
    let avail = tables::parse_avail(&ctx.input_text(&a.avail)?)?;
    let names: Vec<String> = sites.iter().map(|s| s.name.clone()).collect();
    let omega = names
        .iter()
        .map(|n| {
            avail
                .iter()
                .find(|r| &r.name == n)
                .map(|r| r.omega)
                .ok_or_else(|| Error::DimensionMismatch(format!("site '{n}' missing from availability table")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let gamma = load_dependence(ctx, &names, &omega, a.corr.as_deref(), None, None)?;
    let hook = dgmodel_outage(
        &omega,
        &gamma,
        FitOptions {
            clamp_degenerate: a.clamp_degenerate,
        },
        a.samples,
        a.seed,
    );
    let prof = geo_profile(&sites, &lons, a.min_elev, hook)?;
    let rows = (0..lons.len()).map(|k| {
        let visible: Vec<&str> = prof.visible[k].iter().map(|&i| names[i].as_str()).collect();
        vec![
            fmt_f64(lons[k]),
            prof.visible_count[k].to_string(),
            visible.join(";"),
            fmt_f64(prof.outage[k]),
        ]
    });
    let comments = vec![
        format!("min_elevation_deg = {}", a.min_elev),
        format!("samples = {}", a.samples),
        format!("seed = {}", a.seed),
    ];
    ctx.output(
        &a.out,
        write_table(&["lon_deg", "visible_count", "visible_sites", "p_outage"], rows, &comments)?,
    );
    ctx.finish("geo", &a.out, a)
}

pub(super) fn capacity(ctx: &mut Ctx, a: &CapacityArgs) -> Result<()> {
    let tau = tables::parse_tau(&ctx.input_text(&a.tau)?)?;
    let mut profiles: Vec<CapacityProfile> = Vec::new();
    for arg in &a.avail {
        let (label, path) = labeled(arg);
        let rows = tables::parse_avail(&ctx.input_text(&path)?)?;
        let mut taus = Vec::with_capacity(rows.len());
        for r in &rows {
            let t = tau
                .iter()
                .find(|t| t.name == r.name)
                .ok_or_else(|| Error::DimensionMismatch(format!("site '{}' of network '{label}' missing from tau table", r.name)))?;
            if t.inclinations != tau[0].inclinations {
                return Err(Error::DimensionMismatch(format!("inclination grid of '{}' differs", t.name)));
            }
            taus.push(t.tau.as_slice());
        }
        let availability: Vec<f64> = rows.iter().map(|r| r.availability).collect();
        profiles.push(capacity_from_tau(label, &availability, &tau[0].inclinations, &taus, a.bitrate)?);
    }
    let baseline = match &a.baseline {
        Some(b) => profiles
            .iter()
            .position(|p| &p.label == b)
            .ok_or_else(|| Error::InvalidArgument(format!("baseline '{b}' is not one of the networks")))?,
        None => 0,
    };
    let cmp = compare_networks(&profiles, baseline)?;
    let mut rows = Vec::new();
    for (p, row) in profiles.iter().zip(&cmp.rows) {
        for i in 0..p.inclinations.len() {
            rows.push(vec![
                p.label.clone(),
                fmt_f64(p.inclinations[i]),
                fmt_f64(p.t[i]),
                fmt_f64(p.data_volume[i]),
                fmt_f64(row.ratios[i]),
            ]);
        }
    }
    let comments = vec![
        format!("bitrate_bps = {}", fmt_f64(a.bitrate)),
        format!("baseline = {}", cmp.baseline),
    ];
    ctx.output(
        &a.out,
        write_table(
            &[
                "network",
                "inclination_deg",
                "t_s_per_day",
                "data_bits_per_day",
                "ratio_to_baseline",
            ],
            rows,
            &comments,
        )?,
    );
    let summary = cmp
        .rows
        .iter()
        .map(|r| vec![r.label.clone(), fmt_f64(r.integral), fmt_f64(r.integral_ratio)]);
    ctx.output(
        &sibling(&a.out, "_summary.csv"),
        write_table(&["network", "integral_t", "integral_ratio"], summary, &comments)?,
    );
    ctx.finish("capacity", &a.out, a)
}

pub(super) fn report(ctx: &mut Ctx, a: &ReportArgs) -> Result<()> {
    let series = ctx.masks(&a.masks)?;
    let mut rows = Vec::new();
    for arg in &a.sites {
        let (label, path) = labeled(arg);
        let sites = ctx.sites(&path)?;
        let r = network_report(
            &sites,
            &series,
            a.threshold,
            a.samples,
            a.seed,
            FitOptions {
                clamp_degenerate: a.clamp_degenerate,
            },
        )?;
        let (mr, sr) = r
            .mean_abs_correlation
            .map(|m| (fmt_f64(m.mean), fmt_f64(m.std)))
            .unwrap_or_else(|| ("nan".into(), "nan".into()));
        rows.push(vec![
            label,
            r.n_sites.to_string(),
            fmt_f64(r.mean_availability),
            fmt_f64(r.std_availability),
            mr,
            sr,
            fmt_f64(r.p_outage),
            fmt_f64(r.p_outage_ci95),
            r.psd_repaired.to_string(),
            fmt_f64(r.repair_delta),
        ]);
    }
    let comments = vec![format!("samples = {}", a.samples), format!("seed = {}", a.seed)];
    ctx.output(
        &a.out,
        write_table(
            &[
                "network",
                "n_sites",
                "mean_availability",
                "std_availability",
                "mean_abs_r",
                "std_abs_r",
                "p_outage",
                "p_outage_ci95",
                "psd_repaired",
                "repair_delta",
            ],
            rows,
            &comments,
        )?,
    );
    ctx.finish("report", &a.out, a)
}
