//! CMG cloud-mask container.
//!
//! ```text
//! CMG1
//! n_lat = 2
//! n_lon = 3
//! lat_min = -10
//! lat_max = -8
//! lon_min = 110
//! lon_max = 113
//! n_frames = 4
//! source_id = sat_a
//! encoding = bits
//! start = 1420070400
//! stride = 43200
//! end_header
//! <payload>
//! ```
//!
//! Timestamps are either `start` + `stride` or an explicit comma-separated
//! `epochs` list. With `encoding = bits` (the default) every frame is
//! row-major, packed MSB-first, and padded with zero bits to a byte
//! boundary. With `encoding = ascii` every frame is `n_lat` lines of `n_lon`
//! digits.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{CloudMaskSeries, GridSpec};
use crate::error::{Error, Result};
use crate::io::write_atomic;

const MAGIC: &str = "CMG1";
const END: &str = "end_header";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellEncoding {
    #[default]
    Bits,
    Ascii,
}

pub fn load_cloud_masks(path: impl AsRef<Path>) -> Result<CloudMaskSeries> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_cmg(&bytes)
}

pub fn save_cloud_masks(series: &CloudMaskSeries, path: impl AsRef<Path>, encoding: CellEncoding) -> Result<()> {
    write_atomic(path.as_ref(), &write_cmg(series, encoding))
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedHeader(msg.into())
}

pub fn read_cmg(bytes: &[u8]) -> Result<CloudMaskSeries> {
    let mut pos = 0usize;
    let mut next_line = || -> Option<&[u8]> {
        if pos >= bytes.len() {
            return None;
        }
        let rest = &bytes[pos..];
        let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        pos += (end + 1).min(rest.len());
        Some(&rest[..end])
    };

    let first = next_line().ok_or_else(|| malformed("empty file"))?;
    if std::str::from_utf8(first).map(str::trim) != Ok(MAGIC) {
        return Err(malformed("missing CMG1 magic"));
    }
    let mut fields: HashMap<String, String> = HashMap::new();
    loop {
        let raw = next_line().ok_or_else(|| malformed("missing end_header"))?;
        let line = std::str::from_utf8(raw).map_err(|_| malformed("header is not UTF-8"))?.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == END {
            break;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| malformed(format!("expected key = value, got '{line}'")))?;
        let key = key.trim().to_owned();
        if fields.insert(key.clone(), value.trim().to_owned()).is_some() {
            return Err(malformed(format!("duplicate key '{key}'")));
        }
    }
    let payload = &bytes[pos..];

    let get = |key: &str| fields.get(key).ok_or_else(|| malformed(format!("missing key '{key}'")));
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| malformed(format!("bad value for '{key}': '{v}'")))
    }
    let n_lat: usize = num("n_lat", get("n_lat")?)?;
    let n_lon: usize = num("n_lon", get("n_lon")?)?;
    let lat_min: f64 = num("lat_min", get("lat_min")?)?;
    let lat_max: f64 = num("lat_max", get("lat_max")?)?;
    let lon_min: f64 = num("lon_min", get("lon_min")?)?;
    let lon_max: f64 = num("lon_max", get("lon_max")?)?;
    let n_frames: usize = num("n_frames", get("n_frames")?)?;
    let source_id = fields.get("source_id").cloned().unwrap_or_default();
    let encoding = match fields.get("encoding").map(String::as_str) {
        None | Some("bits") => CellEncoding::Bits,
        Some("ascii") => CellEncoding::Ascii,
        Some(other) => return Err(malformed(format!("unknown encoding '{other}'"))),
    };
    let spec = GridSpec::new(n_lat, n_lon, lat_min, lat_max, lon_min, lon_max)?;

    let timestamps: Vec<i64> = match (fields.get("epochs"), fields.get("start"), fields.get("stride")) {
        (Some(list), None, None) => list.split(',').map(|t| num::<i64>("epochs", t.trim())).collect::<Result<_>>()?,
        (None, Some(start), Some(stride)) => {
            let start: i64 = num("start", start)?;
            let stride: i64 = num("stride", stride)?;
            (0..n_frames as i64).map(|i| start + i * stride).collect()
        }
        _ => return Err(malformed("need either 'epochs' or both 'start' and 'stride'")),
    };
    if timestamps.len() != n_frames {
        return Err(Error::DimensionMismatch(format!(
            "header declares {n_frames} frames but lists {} epochs",
            timestamps.len()
        )));
    }

    let cells = match encoding {
        CellEncoding::Bits => unpack_bits(payload, n_frames, spec.n_cells())?,
        CellEncoding::Ascii => parse_ascii(payload, n_frames, &spec)?,
    };
    CloudMaskSeries::new(spec, timestamps, cells, source_id)
}

fn unpack_bits(payload: &[u8], n_frames: usize, n_cells: usize) -> Result<Vec<u8>> {
    let frame_bytes = n_cells.div_ceil(8);
    if payload.len() != n_frames * frame_bytes {
        return Err(Error::DimensionMismatch(format!(
            "payload has {} bytes, expected {} ({} frames x {} bytes)",
            payload.len(),
            n_frames * frame_bytes,
            n_frames,
            frame_bytes
        )));
    }
    let mut cells = Vec::with_capacity(n_frames * n_cells);
    for (f, chunk) in payload.chunks_exact(frame_bytes.max(1)).enumerate().take(n_frames) {
        for i in 0..frame_bytes * 8 {
            let bit = (chunk[i / 8] >> (7 - i % 8)) & 1;
            if i < n_cells {
                cells.push(bit);
            } else if bit != 0 {
                return Err(Error::DimensionMismatch(format!("non-zero padding bits in frame {f}")));
            }
        }
    }
    Ok(cells)
}

fn parse_ascii(payload: &[u8], n_frames: usize, spec: &GridSpec) -> Result<Vec<u8>> {
    let text = std::str::from_utf8(payload).map_err(|_| Error::DimensionMismatch("ascii payload is not UTF-8".into()))?;
    let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if rows.len() != n_frames * spec.n_lat {
        return Err(Error::DimensionMismatch(format!(
            "ascii payload has {} rows, expected {}",
            rows.len(),
            n_frames * spec.n_lat
        )));
    }
    let n_cells = spec.n_cells();
    let mut cells = Vec::with_capacity(n_frames * n_cells);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != spec.n_lon {
            return Err(Error::DimensionMismatch(format!(
                "ascii row {r} has {} cells, expected {}",
                row.len(),
                spec.n_lon
            )));
        }
        for (c, ch) in row.bytes().enumerate() {
            let value = match ch {
                b'0'..=b'9' => ch - b'0',
                _ => return Err(Error::DimensionMismatch(format!("non-digit cell '{}' in row {r}", ch as char))),
            };
            if value > 1 {
                let cell = (r % spec.n_lat) * spec.n_lon + c;
                return Err(Error::NonBinaryCell {
                    frame: r / spec.n_lat,
                    cell,
                    value,
                });
            }
            cells.push(value);
        }
    }
    Ok(cells)
}

pub fn write_cmg(series: &CloudMaskSeries, encoding: CellEncoding) -> Vec<u8> {
    let spec = series.spec();
    let ts = series.timestamps();
    let mut header = String::new();
    let _ = writeln!(header, "{MAGIC}");
    let _ = writeln!(header, "n_lat = {}", spec.n_lat);
    let _ = writeln!(header, "n_lon = {}", spec.n_lon);
    let _ = writeln!(header, "lat_min = {}", spec.lat_min);
    let _ = writeln!(header, "lat_max = {}", spec.lat_max);
    let _ = writeln!(header, "lon_min = {}", spec.lon_min);
    let _ = writeln!(header, "lon_max = {}", spec.lon_max);
    let _ = writeln!(header, "n_frames = {}", series.n_frames());
    if !series.source_id().is_empty() {
        let _ = writeln!(header, "source_id = {}", series.source_id());
    }
    let _ = writeln!(
        header,
        "encoding = {}",
        match encoding {
            CellEncoding::Bits => "bits",
            CellEncoding::Ascii => "ascii",
        }
    );
    let uniform = ts.len() >= 2 && ts.windows(2).all(|w| w[1] - w[0] == ts[1] - ts[0]);
    if uniform {
        let _ = writeln!(header, "start = {}", ts[0]);
        let _ = writeln!(header, "stride = {}", ts[1] - ts[0]);
    } else {
        let list: Vec<String> = ts.iter().map(i64::to_string).collect();
        let _ = writeln!(header, "epochs = {}", list.join(","));
    }
    let _ = writeln!(header, "{END}");

    let mut out = header.into_bytes();
    match encoding {
        CellEncoding::Bits => {
            let frame_bytes = spec.n_cells().div_ceil(8);
            for frame in series.frames() {
                let mut packed = vec![0u8; frame_bytes];
                for (i, &v) in frame.iter().enumerate() {
                    packed[i / 8] |= v << (7 - i % 8);
                }
                out.extend_from_slice(&packed);
            }
        }
        CellEncoding::Ascii => {
            for frame in series.frames() {
                for row in frame.chunks_exact(spec.n_lon) {
                    out.extend(row.iter().map(|&v| b'0' + v));
                    out.push(b'\n');
                }
            }
        }
    }
    out
}
