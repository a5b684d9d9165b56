//! CSV tables exchanged between subcommands.

use std::collections::HashMap;

use crate::cloudgrid::SiteSeries;
use crate::error::{Error, Result};
use crate::io::fmt_f64;

fn csv_text(rows: impl IntoIterator<Item = Vec<String>>, comments: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r)?;
    }
    let body = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(std::str::from_utf8(&body).expect("csv output is UTF-8"));
    Ok(out)
}

pub(crate) fn write_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>, comments: &[String]) -> Result<String> {
    let head = header.iter().map(|s| s.to_string()).collect();
    csv_text(std::iter::once(head).chain(rows), comments)
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn column(headers: &csv::StringRecord, name: &str, what: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Parse(format!("{what} table lacks a '{name}' column")))
}

fn number(field: &str, what: &str) -> Result<f64> {
    field.parse().map_err(|_| Error::Parse(format!("{what}: bad number '{field}'")))
}

/// One row of a site availability table.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AvailRow {
    pub name: String,
    pub omega: f64,
    pub availability: f64,
}

pub(crate) fn format_avail(series: &[SiteSeries]) -> Result<String> {
    let rows = series.iter().map(|s| {
        vec![
            s.site.name.clone(),
            fmt_f64(s.site.lat),
            fmt_f64(s.site.lon),
            fmt_f64(s.availability()),
            fmt_f64(s.binary_omega()),
            fmt_f64(s.mean_cloud_fraction()),
            s.len().to_string(),
        ]
    });
    write_table(
        &[
            "name",
            "lat_deg",
            "lon_deg",
            "availability",
            "omega",
            "mean_cloud_fraction",
            "n_frames",
        ],
        rows,
        &[],
    )
}

/// Reads `name` with `omega` and/or `availability`; a missing one is the
/// complement of the other.
pub(crate) fn parse_avail(text: &str) -> Result<Vec<AvailRow>> {
    let mut rdr = reader(text);
    let headers = rdr.headers()?.clone();
    let name = column(&headers, "name", "availability")?;
    let omega = column(&headers, "omega", "availability").ok();
    let avail = column(&headers, "availability", "availability").ok();
    if omega.is_none() && avail.is_none() {
        return Err(Error::Parse("availability table needs an 'omega' or 'availability' column".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let o = omega.map(|c| number(&rec[c], "omega")).transpose()?;
        let av = avail.map(|c| number(&rec[c], "availability")).transpose()?;
        let (omega, availability) = match (o, av) {
            (Some(o), Some(av)) => (o, av),
            (Some(o), None) => (o, 1.0 - o),
            (None, Some(av)) => (1.0 - av, av),
            (None, None) => unreachable!("checked above"),
        };
        out.push(AvailRow {
            name: rec[name].to_owned(),
            omega,
            availability,
        });
    }
    if out.is_empty() {
        return Err(Error::Parse("availability table is empty".into()));
    }
    Ok(out)
}

pub(crate) fn format_corr(names: &[String], r: &[f64]) -> Result<String> {
    let n = names.len();
    let mut header = vec!["site"];
    header.extend(names.iter().map(String::as_str));
    let rows = (0..n).map(|k| {
        std::iter::once(names[k].clone())
            .chain((0..n).map(|l| fmt_f64(r[k * n + l])))
            .collect()
    });
    write_table(&header, rows, &[])
}

/// Square correlation table keyed by site name in its header row.
pub(crate) struct CorrTable {
    pub names: Vec<String>,
    pub r: Vec<f64>,
}

impl CorrTable {
    /// Row-major matrix reordered to `order`.
    pub fn reorder(&self, order: &[String]) -> Result<Vec<f64>> {
        let pos: HashMap<&str, usize> = self.names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let idx = order
            .iter()
            .map(|s| {
                pos.get(s.as_str())
                    .copied()
                    .ok_or_else(|| Error::DimensionMismatch(format!("site '{s}' missing from correlation table")))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = self.names.len();
        Ok(idx.iter().flat_map(|&k| idx.iter().map(move |&l| self.r[k * n + l])).collect())
    }
}

pub(crate) fn parse_corr(text: &str) -> Result<CorrTable> {
    let mut rdr = reader(text);
    let headers = rdr.headers()?.clone();
    let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let n = names.len();
    let mut r = Vec::with_capacity(n * n);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rows >= n || rec.len() != n + 1 || rec[0] != names[rows] {
            return Err(Error::Parse(format!(
                "correlation table row {} does not match the header",
                rows + 1
            )));
        }
        for f in rec.iter().skip(1) {
            r.push(number(f, "correlation")?);
        }
        rows += 1;
    }
    if rows != n || n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "correlation table has {rows} rows for {n} columns"
        )));
    }
    Ok(CorrTable { names, r })
}

/// τ rows of one site.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TauRows {
    pub name: String,
    pub inclinations: Vec<f64>,
    pub tau: Vec<f64>,
}

pub(crate) fn parse_tau(text: &str) -> Result<Vec<TauRows>> {
    let mut rdr = reader(text);
    let headers = rdr.headers()?.clone();
    let site = column(&headers, "site", "tau")?;
    let inc = column(&headers, "inclination_deg", "tau")?;
    let tau = column(&headers, "tau_s_per_day", "tau")?;
    let mut out: Vec<TauRows> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let name = &rec[site];
        let i = number(&rec[inc], "inclination")?;
        let t = number(&rec[tau], "tau")?;
        match out.iter_mut().find(|r| r.name == name) {
            Some(r) => {
                r.inclinations.push(i);
                r.tau.push(t);
            }
            None => out.push(TauRows {
                name: name.to_owned(),
                inclinations: vec![i],
                tau: vec![t],
            }),
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("tau table is empty".into()));
    }
    Ok(out)
}

/// Parses `start:stop:step` into an inclusive, drift-free sweep.
pub(crate) fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::InvalidArgument(format!("sweep '{s}' must be start:stop:step with step > 0 and stop >= start"));
    let [a, b, step] = parts.as_slice() else {
        return Err(bad());
    };
    let (a, b, step) = (number(a, "sweep")?, number(b, "sweep")?, number(step, "sweep")?);
    if !(step > 0.0 && b >= a && a.is_finite() && b.is_finite()) {
        return Err(bad());
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| a + k as f64 * step).collect())
}

/// `label=path` or bare `path` (label = file stem).
pub(crate) fn labeled(arg: &str) -> (String, std::path::PathBuf) {
    match arg.split_once('=') {
        Some((l, p)) if !l.is_empty() => (l.to_owned(), p.into()),
        _ => {
            let p = std::path::PathBuf::from(arg);
            let label = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_owned());
            (label, p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweeps() {
        assert_eq!(parse_sweep("20:100:5").unwrap().len(), 17);
        let lon = parse_sweep("-180:180:1").unwrap();
        assert_eq!((lon.len(), lon[0], lon[360]), (361, -180.0, 180.0));
        assert_eq!(parse_sweep("0:1:0.1").unwrap().len(), 11);
        assert!(parse_sweep("5:1:1").is_err());
        assert!(parse_sweep("1:5").is_err());
        assert!(parse_sweep("1:5:0").is_err());
    }

    #[test]
    fn corr_round_trip_and_reorder() {
        let names = vec!["a".to_owned(), "b".to_owned()];
        let text = format_corr(&names, &[1.0, 0.25, 0.25, 1.0]).unwrap();
        let t = parse_corr(&text).unwrap();
        assert_eq!(t.r, vec![1.0, 0.25, 0.25, 1.0]);
        let m = CorrTable {
            names: names.clone(),
            r: vec![1.0, 0.1, 0.2, 1.0],
        };
        assert_eq!(m.reorder(&["b".into(), "a".into()]).unwrap(), vec![1.0, 0.2, 0.1, 1.0]);
        assert!(m.reorder(&["c".into()]).is_err());
        assert!(parse_corr("site,a,b\na,1,0\n").is_err());
    }

    #[test]
    fn avail_and_tau_tables() {
        let a = parse_avail("name,availability\nx,0.75\n").unwrap();
        assert_eq!(a[0].omega, 0.25);
        let a = parse_avail("# c\nname,omega,availability\nx,0.3,0.7\n").unwrap();
        assert_eq!(a[0].omega, 0.3);
        assert!(parse_avail("name,lat\nx,1\n").is_err());
        let t = parse_tau("site,inclination_deg,tau_s_per_day\na,20,1\na,25,2\nb,20,3\nb,25,4\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].tau, vec![3.0, 4.0]);
    }

    #[test]
    fn labels() {
        assert_eq!(labeled("base=x/y.csv"), ("base".into(), "x/y.csv".into()));
        assert_eq!(labeled("x/full.csv"), ("full".into(), "x/full.csv".into()));
    }
}
