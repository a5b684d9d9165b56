//! Text tables, grayscale rasters and atomic file output.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloudgrid::Site;
use crate::error::{Error, Result};

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".ogsnet-")
        .tempfile_in(dir)
        .map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Shortest round-trip text for `v`, in exponent form outside
/// `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v.is_nan() {
        "nan".to_owned()
    } else if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Whitespace-separated matrix, one grid row per line. `comments` become
/// leading `#` lines.
pub fn format_matrix(values: &[f64], n_cols: usize, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    for row in values.chunks(n_cols) {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a whitespace-separated matrix, returning (values, n_rows, n_cols).
pub fn parse_matrix(text: &str) -> Result<(Vec<f64>, usize, usize)> {
    let mut values = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number '{t}'", i + 1)))
            })
            .collect::<Result<_>>()?;
        match n_cols {
            None => n_cols = Some(row.len()),
            Some(n) if n != row.len() => return Err(Error::Parse(format!("line {}: {} columns, expected {n}", i + 1, row.len()))),
            _ => {}
        }
        values.extend(row);
        n_rows += 1;
    }
    let n_cols = n_cols.ok_or_else(|| Error::Parse("empty matrix".into()))?;
    Ok((values, n_rows, n_cols))
}

/// Linear min/max scaling used for a raster export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterScale {
    pub min: f64,
    pub max: f64,
}

/// Encodes values as an 8-bit binary PGM, scaled linearly from the finite
/// min (0) to max (255). Non-finite values map to 0.
pub fn encode_pgm(values: &[f64], width: usize, height: usize) -> (Vec<u8>, RasterScale) {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let min = finite.clone().fold(f64::INFINITY, f64::min);
    let max = finite.fold(f64::NEG_INFINITY, f64::max);
    let (min, max) = if min.is_finite() { (min, max) } else { (0.0, 0.0) };
    let span = max - min;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if !v.is_finite() || span <= 0.0 {
            0
        } else {
            ((v - min) / span * 255.0).round().clamp(0.0, 255.0) as u8
        }
    }));
    (out, RasterScale { min, max })
}

/// Decodes an 8-bit PGM (binary P5 or plain P2) into (pixels, width, height).
pub fn decode_pgm(bytes: &[u8]) -> Result<(Vec<u8>, usize, usize)> {
    let bad = |m: &str| Error::Parse(format!("PGM: {m}"));
    let mut pos = 0;
    let mut token = |bytes: &[u8]| -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token(bytes).ok_or_else(|| bad("empty"))?;
    let mut num = |what: &str| -> Result<usize> { token(bytes).and_then(|t| t.parse().ok()).ok_or_else(|| bad(&format!("bad {what}"))) };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit maxval supported"));
    }
    match magic.as_str() {
        "P5" => {
            let data = &bytes[pos + 1..];
            if data.len() < width * height {
                return Err(bad("truncated pixel data"));
            }
            Ok((data[..width * height].to_vec(), width, height))
        }
        "P2" => {
            let px = (0..width * height).map(|_| num("pixel").map(|v| v as u8)).collect::<Result<_>>()?;
            Ok((px, width, height))
        }
        _ => Err(bad("unsupported magic")),
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct SiteRow {
    name: String,
    lat_deg: f64,
    lon_deg: f64,
    roi_radius_px: usize,
}

/// Sites table: CSV with columns `name,lat_deg,lon_deg,roi_radius_px`;
/// `#` lines are comments.
pub fn parse_sites(text: &str) -> Result<Vec<Site>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut sites = Vec::new();
    for row in rdr.deserialize() {
        let row: SiteRow = row?;
        sites.push(Site::new(row.name, row.lat_deg, row.lon_deg, row.roi_radius_px)?);
    }
    if sites.is_empty() {
        return Err(Error::Parse("sites table is empty".into()));
    }
    Ok(sites)
}

pub fn load_sites(path: &Path) -> Result<Vec<Site>> {
    parse_sites(&read_to_string(path)?)
}

pub fn format_sites(sites: &[Site]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in sites {
        w.serialize(SiteRow {
            name: s.name.clone(),
            lat_deg: s.lat,
            lon_deg: s.lon,
            roi_radius_px: s.roi_radius_px,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_text_round_trips() {
        for v in [0.0, 1.0, 0.31, 8.54e-5, 5.551115123125783e-17, 5e12, 2e15, -3.25e-7] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(5.551115123125783e-17), "5.551115123125783e-17");
        assert_eq!(fmt_f64(0.078777), "0.078777");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn matrix_round_trip() {
        let v = vec![0.1, -2.5, f64::NAN, 1e-17, 3.0, 0.0];
        let text = format_matrix(&v, 3, &["r surface".into()]);
        let (back, rows, cols) = parse_matrix(&text).unwrap();
        assert_eq!((rows, cols), (2, 3));
        for (a, b) in v.iter().zip(&back) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
        assert!(parse_matrix("1 2\n3\n").is_err());
    }

    #[test]
    fn pgm_round_trip_and_scaling() {
        let (bytes, scale) = encode_pgm(&[0.0, 0.5, 1.0, f64::NAN], 2, 2);
        assert_eq!(scale, RasterScale { min: 0.0, max: 1.0 });
        let (px, w, h) = decode_pgm(&bytes).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(px, vec![0, 128, 255, 0]);
        let (px, _, _) = decode_pgm(b"P2\n# mask\n3 1\n255\n0 1 255\n").unwrap();
        assert_eq!(px, vec![0, 1, 255]);
    }

    #[test]
    fn sites_table() {
        let text = "# extended network\nname,lat_deg,lon_deg,roi_radius_px\nMt Stromlo, -35.32, 149.01, 2\nPerth,-31.95,115.86,2\n";
        let sites = parse_sites(text).unwrap();
        assert_eq!(sites.len(), 2);
        assert_eq!(sites[0].name, "Mt Stromlo");
        assert_eq!(parse_sites(&format_sites(&sites).unwrap()).unwrap(), sites);
        assert!(parse_sites("name,lat_deg,lon_deg,roi_radius_px\nx,95,0,1\n").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
