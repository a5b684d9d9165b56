use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{CloudMaskSeries, GridSpec};
use crate::dgmodel::phi_inv;
use crate::error::{Error, Result};

/// Below this correlation length the field is white noise.
const MIN_CORR_LENGTH: f64 = 1e-3;

/// Separable Gaussian kernel normalized to unit sum of squares, so that
/// smoothing unit white noise in both directions keeps unit variance.
fn kernel(corr_length_px: f64) -> Vec<f64> {
    if corr_length_px < MIN_CORR_LENGTH {
        return vec![1.0];
    }
    let radius = (4.0 * corr_length_px).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * corr_length_px * corr_length_px)).exp())
        .collect();
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    k.iter_mut().for_each(|v| *v /= norm);
    k
}

fn smooth_field(k: &[f64], n_lat: usize, n_lon: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let pad = k.len() - 1;
    let (h, w) = (n_lat + pad, n_lon + pad);
    let noise: Vec<f64> = (0..h * w).map(|_| StandardNormal.sample(rng)).collect();
    // Horizontal pass on every padded row, then vertical.
    let mut horiz = vec![0.0; h * n_lon];
    for r in 0..h {
        let row = &noise[r * w..(r + 1) * w];
        for c in 0..n_lon {
            horiz[r * n_lon + c] = k.iter().zip(&row[c..c + k.len()]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; n_lat * n_lon];
    for r in 0..n_lat {
        for c in 0..n_lon {
            out[r * n_lon + c] = k.iter().enumerate().map(|(i, kv)| kv * horiz[(r + i) * n_lon + c]).sum();
        }
    }
    out
}

/// Independent thresholded Gaussian random fields: cell = 1 iff the smooth
/// standard-normal field is below `phi_inv(omega)` at that pixel.
///
/// Frame `t` draws from its own ChaCha stream so output depends only on
/// `seed`. Timestamps start at 0 with a 12 h stride.
pub fn synth_generate(spec: GridSpec, n_frames: usize, corr_length_px: f64, omega_field: &[f64], seed: u64) -> Result<CloudMaskSeries> {
    spec.validate()?;
    if n_frames == 0 {
        return Err(Error::InvalidArgument("n_frames must be >= 1".into()));
    }
    if !(corr_length_px.is_finite() && corr_length_px >= 0.0) {
        return Err(Error::InvalidArgument(format!("corr_length_px must be >= 0, got {corr_length_px}")));
    }
    if omega_field.len() != spec.n_cells() {
        return Err(Error::DimensionMismatch(format!(
            "omega field has {} values for {} cells",
            omega_field.len(),
            spec.n_cells()
        )));
    }
    let thresholds = omega_field.iter().map(|&o| phi_inv(o)).collect::<Result<Vec<f64>>>()?;
    let k = kernel(corr_length_px);

    let frames: Vec<Vec<u8>> = (0..n_frames)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let field = smooth_field(&k, spec.n_lat, spec.n_lon, &mut rng);
            field.iter().zip(&thresholds).map(|(z, th)| u8::from(z < th)).collect()
        })
        .collect();
    let timestamps = (0..n_frames as i64).map(|t| t * 43_200).collect();
    CloudMaskSeries::new(spec, timestamps, frames.concat(), format!("synth:{seed}"))
}
