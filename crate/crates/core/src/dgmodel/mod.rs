//! Dichotomized-Gaussian model of correlated site outages.
//!
//! A latent Gaussian vector `x ~ N(mu, Lambda)` with unit variances is
//! thresholded at zero: site k is cloudy when `x_k > 0`. The latent means
//! reproduce the cloud probabilities (`Omega_k = phi(mu_k)`), and each latent
//! correlation is solved so that the thresholded pair reproduces the target
//! Bernoulli covariance.

mod nearest;
mod normal;

pub use nearest::{min_eigenvalue, nearest_correlation, PSD_TOL};
pub use normal::{phi, phi2, phi_inv};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::cloudgrid::SiteSeries;
use crate::correlation::covariance_pair;
use crate::error::{Error, Result};

/// Default Monte Carlo draw count for outage estimates.
pub const DEFAULT_SAMPLES: u64 = 100_000_000;

/// Draws per RNG stream. Stream `b` covers draws `b * BLOCK .. (b + 1) * BLOCK`.
const BLOCK: u64 = 1 << 16;

/// Bracket half-width inset for the latent correlation search.
const ROOT_EPS: f64 = 1e-12;
const ROOT_TOL: f64 = 1e-10;
const DIAG_TOL: f64 = 1e-6;
const CLAMP_MARGIN: f64 = 1e-6;
const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitOptions {
    /// Clamp marginals at 0 or 1 into `[1e-6, 1 - 1e-6]` instead of
    /// rejecting them. Covariances are then pulled inside the feasible range.
    pub clamp_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointAvailabilityModel {
    pub n_sites: usize,
    pub omega: Vec<f64>,
    pub mu: Vec<f64>,
    /// Latent correlation matrix, row-major, after any PSD repair.
    pub lambda: Vec<f64>,
    pub gamma_target: Vec<f64>,
    pub psd_repaired: bool,
    /// Largest absolute change of a latent correlation made by the repair.
    pub repair_delta: f64,
    /// Largest root-search residual over all pairs.
    pub max_residual: f64,
}

impl JointAvailabilityModel {
    pub fn lambda_at(&self, k: usize, l: usize) -> f64 {
        self.lambda[k * self.n_sites + l]
    }

    fn lambda_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_sites, self.n_sites, &self.lambda)
    }

    /// Model restricted to the listed sites, keeping their latent
    /// parameters.
    pub fn subset(&self, sites: &[usize]) -> Result<JointAvailabilityModel> {
        if sites.iter().any(|&s| s >= self.n_sites) {
            return Err(Error::InvalidArgument("subset index out of range".into()));
        }
        let n = self.n_sites;
        let pick = |m: &[f64]| -> Vec<f64> { sites.iter().flat_map(|&k| sites.iter().map(move |&l| m[k * n + l])).collect() };
        Ok(JointAvailabilityModel {
            n_sites: sites.len(),
            omega: sites.iter().map(|&k| self.omega[k]).collect(),
            mu: sites.iter().map(|&k| self.mu[k]).collect(),
            lambda: pick(&self.lambda),
            gamma_target: pick(&self.gamma_target),
            psd_repaired: self.psd_repaired,
            repair_delta: self.repair_delta,
            max_residual: self.max_residual,
        })
    }
}

/// Converts a Bernoulli correlation matrix (row-major) into covariances,
/// `Gamma_kl = r_kl sqrt(Omega_k (1 - Omega_k) Omega_l (1 - Omega_l))`.
pub fn gamma_from_correlation(omega: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let n = omega.len();
    if r.len() != n * n {
        return Err(Error::DimensionMismatch(format!("{} correlations for {n} sites", r.len())));
    }
    let sd: Vec<f64> = omega.iter().map(|o| (o * (1.0 - o)).sqrt()).collect();
    Ok((0..n * n)
        .map(|i| {
            let (k, l) = (i / n, i % n);
            if k == l {
                sd[k] * sd[k]
            } else {
                r[i] * sd[k] * sd[l]
            }
        })
        .collect())
}

/// Equicorrelated covariance target with Bernoulli correlation `r` for
/// every pair.
pub fn equicorrelated_gamma(omega: &[f64], r: f64) -> Vec<f64> {
    let n = omega.len();
    let rm: Vec<f64> = (0..n * n).map(|i| if i / n == i % n { 1.0 } else { r }).collect();
    gamma_from_correlation(omega, &rm).expect("square by construction")
}

/// Feasible covariance range of two Bernoulli variables with the given
/// marginals.
pub fn frechet_bounds(omega_k: f64, omega_l: f64) -> (f64, f64) {
    let prod = omega_k * omega_l;
    ((omega_k + omega_l - 1.0).max(0.0) - prod, omega_k.min(omega_l) - prod)
}

/// Brent's method on a bracket with `f(lo) < 0 < f(hi)`.
fn brent(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut bisected = true;
    for _ in 0..200 {
        if fb == 0.0 || (b - a).abs() < 1e-16 {
            break;
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc)) + b * fa * fc / ((fb - fa) * (fb - fc)) + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let outside = !((s > lo.min(b)) && (s < lo.max(b)));
        if outside || (bisected && (s - b).abs() >= (b - c).abs() / 2.0) || (!bisected && (s - b).abs() >= (c - d).abs() / 2.0) {
            s = 0.5 * (a + b);
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
        if fb.abs() < 1e-15 {
            break;
        }
    }
    (b, fb)
}

/// Latent correlation reproducing Bernoulli covariance `gamma` for latent
/// means `mu_k`, `mu_l`. Returns (lambda, residual).
fn solve_lambda(mu_k: f64, mu_l: f64, gamma: f64) -> (f64, f64) {
    let base = phi(mu_k) * phi(mu_l);
    let f = |lam: f64| phi2(mu_k, mu_l, lam) - base - gamma;
    let (lo, hi) = (-1.0 + ROOT_EPS, 1.0 - ROOT_EPS);
    let (flo, fhi) = (f(lo), f(hi));
    if flo >= 0.0 {
        // Target at or beyond the antithetic limit.
        let f_end = f(-1.0);
        return if f_end.abs() < flo.abs() { (-1.0, f_end) } else { (lo, flo) };
    }
    if fhi <= 0.0 {
        let f_end = f(1.0);
        return if f_end.abs() < fhi.abs() { (1.0, f_end) } else { (hi, fhi) };
    }
    brent(f, lo, hi)
}

fn check_square(n: usize, gamma: &[f64]) -> Result<()> {
    if gamma.len() != n * n {
        return Err(Error::DimensionMismatch(format!("gamma has {} entries for {n} sites", gamma.len())));
    }
    Ok(())
}

/// Fits latent means and correlations to target marginals `omega` and
/// covariances `gamma` (row-major N x N), repairing Lambda to the nearest
/// correlation matrix when it is not positive semi-definite.
pub fn fit_model(omega: &[f64], gamma: &[f64], opts: FitOptions) -> Result<JointAvailabilityModel> {
    let n = omega.len();
    if n == 0 {
        return Err(Error::InvalidArgument("model needs at least one site".into()));
    }
    check_square(n, gamma)?;
    let mut omega = omega.to_vec();
    let mut gamma = gamma.to_vec();
    if opts.clamp_degenerate {
        let mut clamped = false;
        for o in omega.iter_mut() {
            let c = o.clamp(CLAMP_MARGIN, 1.0 - CLAMP_MARGIN);
            clamped |= c != *o;
            *o = c;
        }
        if clamped {
            for k in 0..n {
                gamma[k * n + k] = omega[k] * (1.0 - omega[k]);
                for l in 0..n {
                    if k != l {
                        let (lo, hi) = frechet_bounds(omega[k], omega[l]);
                        gamma[k * n + l] = gamma[k * n + l].clamp(lo, hi);
                    }
                }
            }
        }
    }
    let mu = omega.iter().map(|&o| phi_inv(o)).collect::<Result<Vec<f64>>>()?;

    for k in 0..n {
        let expected = omega[k] * (1.0 - omega[k]);
        if (gamma[k * n + k] - expected).abs() > DIAG_TOL {
            return Err(Error::InvalidArgument(format!(
                "gamma[{k}][{k}] = {} inconsistent with omega(1 - omega) = {expected}",
                gamma[k * n + k]
            )));
        }
        for l in 0..k {
            if (gamma[k * n + l] - gamma[l * n + k]).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("gamma not symmetric at ({l}, {k})")));
            }
        }
    }

    let mut lambda = DMatrix::<f64>::identity(n, n);
    let mut max_residual: f64 = 0.0;
    for k in 0..n {
        for l in k + 1..n {
            let g = gamma[k * n + l];
            let (lo, hi) = frechet_bounds(omega[k], omega[l]);
            if g < lo - 1e-12 || g > hi + 1e-12 {
                return Err(Error::InfeasibleCovariance {
                    k,
                    l,
                    gamma: g,
                    lower: lo,
                    upper: hi,
                });
            }
            let (lam, residual) = solve_lambda(mu[k], mu[l], g.clamp(lo, hi));
            if residual.abs() > ROOT_TOL {
                return Err(Error::NonConvergent {
                    k,
                    l,
                    residual: residual.abs(),
                });
            }
            max_residual = max_residual.max(residual.abs());
            lambda[(k, l)] = lam;
            lambda[(l, k)] = lam;
        }
    }

    let (lambda, psd_repaired, repair_delta) = if n > 1 && min_eigenvalue(&lambda) < -PSD_TOL {
        let repaired = nearest_correlation(&lambda);
        let delta = (&repaired - &lambda).amax();
        (repaired, true, delta)
    } else {
        (lambda, false, 0.0)
    };

    Ok(JointAvailabilityModel {
        n_sites: n,
        omega,
        mu,
        lambda: lambda.transpose().as_slice().to_vec(),
        gamma_target: gamma,
        psd_repaired,
        repair_delta,
        max_residual,
    })
}

/// Marginals and covariance matrix (row-major) of aligned binary site
/// series, ready for [`fit_model`].
pub fn moments_from_series(series: &[SiteSeries]) -> Result<(Vec<f64>, Vec<f64>)> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("no site series".into()));
    }
    check_aligned(series)?;
    let n = series.len();
    let omega: Vec<f64> = series.iter().map(SiteSeries::binary_omega).collect();
    let mut gamma = vec![0.0; n * n];
    for k in 0..n {
        for l in k..n {
            let g = covariance_pair(&series[k].binary, &series[l].binary)?;
            gamma[k * n + l] = g;
            gamma[l * n + k] = g;
        }
    }
    Ok((omega, gamma))
}

fn check_aligned(series: &[SiteSeries]) -> Result<()> {
    for s in &series[1..] {
        if s.timestamps != series[0].timestamps {
            return Err(Error::Misaligned(format!(
                "site '{}' is not aligned with '{}'",
                s.site.name, series[0].site.name
            )));
        }
    }
    Ok(())
}

/// Distribution of the number of available sites, as a CDF over M.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutageDistribution {
    pub n_sites: usize,
    /// `cdf[M]` = P(at most M sites available).
    pub cdf: Vec<f64>,
    /// `counts[j]` = draws (or frames) with exactly j sites available.
    pub counts: Vec<u64>,
    pub n_samples: u64,
    /// Binomial 95% half-widths of each CDF value.
    pub ci95: Vec<f64>,
}

impl OutageDistribution {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let n: u64 = counts.iter().sum();
        let mut cum = 0u64;
        let cdf: Vec<f64> = counts
            .iter()
            .map(|&c| {
                cum += c;
                cum as f64 / n as f64
            })
            .collect();
        let ci95 = cdf.iter().map(|&p| Z95 * (p * (1.0 - p) / n as f64).sqrt()).collect();
        OutageDistribution {
            n_sites: counts.len() - 1,
            cdf,
            counts,
            n_samples: n,
            ci95,
        }
    }

    /// P(no site available).
    pub fn p_outage(&self) -> f64 {
        self.cdf[0]
    }
}

/// Per-site and pairwise cloud frequencies from the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledMoments {
    pub n_samples: u64,
    pub cloudy: Vec<u64>,
    /// Row-major co-cloudy counts; the diagonal repeats `cloudy`.
    pub joint_cloudy: Vec<u64>,
}

impl SampledMoments {
    pub fn omega(&self) -> Vec<f64> {
        self.cloudy.iter().map(|&c| c as f64 / self.n_samples as f64).collect()
    }

    pub fn gamma(&self) -> Vec<f64> {
        let n = self.cloudy.len();
        let omega = self.omega();
        let total = self.n_samples as f64;
        (0..n * n)
            .map(|i| self.joint_cloudy[i] as f64 / total - omega[i / n] * omega[i % n])
            .collect()
    }

    pub fn correlation(&self, k: usize, l: usize) -> f64 {
        let n = self.cloudy.len();
        let omega = self.omega();
        let g = self.gamma()[k * n + l];
        g / (omega[k] * (1.0 - omega[k]) * omega[l] * (1.0 - omega[l])).sqrt()
    }
}

/// Symmetric square-root factor of Lambda from its eigendecomposition,
/// robust to semi-definite input. Returned row-major.
fn factor(model: &JointAvailabilityModel) -> Vec<f64> {
    let eig = SymmetricEigen::new(model.lambda_matrix());
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let f = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt);
    f.transpose().as_slice().to_vec()
}

/// Runs `n_samples` draws in fixed-size blocks, each with its own ChaCha
/// stream keyed by (seed, block index), and merges per-block tallies in
/// block order. The result does not depend on the thread count.
fn simulate<T, Init, Rec, Merge>(model: &JointAvailabilityModel, n_samples: u64, seed: u64, init: Init, record: Rec, merge: Merge) -> T
where
    T: Send,
    Init: Fn() -> T + Sync,
    Rec: Fn(&mut T, &[bool]) + Sync,
    Merge: Fn(T, T) -> T + Sync + Send,
{
    let n = model.n_sites;
    let f = factor(model);
    let mu = &model.mu;
    let n_blocks = n_samples.div_ceil(BLOCK);
    (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let draws = BLOCK.min(n_samples - b * BLOCK);
            let mut tally = init();
            let mut z = vec![0.0f64; n];
            let mut cloudy = vec![false; n];
            for _ in 0..draws {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                for (k, c) in cloudy.iter_mut().enumerate() {
                    let row = &f[k * n..(k + 1) * n];
                    let x = mu[k] + row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
                    *c = x > 0.0;
                }
                record(&mut tally, &cloudy);
            }
            tally
        })
        .collect::<Vec<T>>()
        .into_iter()
        .reduce(&merge)
        .unwrap_or_else(init)
}

fn validate_samples(n_samples: u64) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    Ok(())
}

/// Monte Carlo estimate of the distribution of available-site counts.
pub fn sample(model: &JointAvailabilityModel, n_samples: u64, seed: u64) -> Result<OutageDistribution> {
    validate_samples(n_samples)?;
    let n = model.n_sites;
    let counts = simulate(
        model,
        n_samples,
        seed,
        || vec![0u64; n + 1],
        |t, cloudy| t[cloudy.iter().filter(|&&c| !c).count()] += 1,
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    );
    Ok(OutageDistribution::from_counts(counts))
}

/// Sampled per-site and pairwise cloud frequencies.
pub fn sample_moments(model: &JointAvailabilityModel, n_samples: u64, seed: u64) -> Result<SampledMoments> {
    validate_samples(n_samples)?;
    let n = model.n_sites;
    let joint = simulate(
        model,
        n_samples,
        seed,
        || vec![0u64; n * n],
        |t, cloudy| {
            for k in (0..n).filter(|&k| cloudy[k]) {
                for l in (k..n).filter(|&l| cloudy[l]) {
                    t[k * n + l] += 1;
                }
            }
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    );
    let mut joint_cloudy = joint;
    for k in 0..n {
        for l in 0..k {
            joint_cloudy[k * n + l] = joint_cloudy[l * n + k];
        }
    }
    Ok(SampledMoments {
        n_samples,
        cloudy: (0..n).map(|k| joint_cloudy[k * n + k]).collect(),
        joint_cloudy,
    })
}

/// Total-outage probability of independent sites, the product of the
/// cloud probabilities.
pub fn analytic_outage_uncorrelated(omega: &[f64]) -> Result<f64> {
    if let Some(bad) = omega.iter().find(|o| !(0.0..=1.0).contains(*o)) {
        return Err(Error::InvalidArgument(format!("cloud probability {bad} outside [0, 1]")));
    }
    Ok(omega.iter().product())
}

/// Empirical distribution of available-site counts over the frames of
/// aligned site series.
pub fn empirical_cdf_from_data(series: &[SiteSeries]) -> Result<OutageDistribution> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("no site series".into()));
    }
    check_aligned(series)?;
    let n = series.len();
    let mut counts = vec![0u64; n + 1];
    for t in 0..series[0].len() {
        let available = series.iter().filter(|s| s.binary[t] == 0).count();
        counts[available] += 1;
    }
    Ok(OutageDistribution::from_counts(counts))
}
