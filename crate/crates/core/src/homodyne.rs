//! Monte-Carlo homodyne statistics and spectrum-analyzer style noise traces.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{snl, to_db, GaussianState, QuadForm, PHYSICALITY_TOL};

/// Factor `L` with `L Lᵀ = cov`, from a symmetric eigendecomposition with
/// round-off negative eigenvalues clamped to zero.
fn covariance_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(cov.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PHYSICALITY_TOL {
        return Err(Error::Unphysical(min));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

fn check_state(state: &GaussianState) -> Result<()> {
    if !state.is_physical(PHYSICALITY_TOL) {
        let min = crate::gaussian::uncertainty_min_eigenvalue(state.cov());
        return Err(Error::Unphysical(min));
    }
    Ok(())
}

/// Row-major block of quadrature samples, one row per shot.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureSamples {
    dim: usize,
    data: Vec<f64>,
}

impl QuadratureSamples {
    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.len(),
            });
        }
        Ok(QuadratureSamples { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.len();
        let mean = self
            .rows()
            .fold(DVector::zeros(self.dim), |acc, r| acc + DVector::from_column_slice(r))
            / n as f64;
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for r in self.rows() {
            let d = DVector::from_column_slice(r) - &mean;
            cov += &d * d.transpose();
        }
        cov / (n as f64 - 1.0)
    }
}

/// Zero-mean draws with the state's covariance. Deterministic in `seed`.
pub fn sample_quadratures(state: &GaussianState, n: usize, seed: u64) -> Result<QuadratureSamples> {
    check_state(state)?;
    let factor = covariance_factor(state.cov())?;
    let dim = factor.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; dim];
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..dim {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate() {
                acc += factor[(i, j)] * zj;
            }
            data.push(acc);
        }
    }
    Ok(QuadratureSamples { dim, data })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub variance: f64,
    /// `variance · √(2/(n−1))`, the Gaussian standard error.
    pub stderr: f64,
    pub n: usize,
}

fn variance_of(values: impl Iterator<Item = f64>) -> (f64, usize) {
    // Welford
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for v in values {
        n += 1;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    (if n > 1 { m2 / (n - 1) as f64 } else { 0.0 }, n)
}

pub fn estimate_variance(samples: &QuadratureSamples, form: &QuadForm) -> Result<VarianceEstimate> {
    if form.coeffs().len() != samples.dim {
        return Err(Error::DimensionMismatch {
            expected: samples.dim,
            found: form.coeffs().len(),
        });
    }
    if samples.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "samples",
            value: samples.len() as f64,
            reason: "need at least two samples",
        });
    }
    let c = form.coeffs().as_slice();
    let (variance, n) = variance_of(samples.rows().map(|r| r.iter().zip(c).map(|(a, b)| a * b).sum()));
    Ok(VarianceEstimate {
        variance,
        stderr: variance * (2.0 / (n as f64 - 1.0)).sqrt(),
        n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    /// Sideband frequency; recorded, not simulated.
    pub analysis_frequency_hz: f64,
    pub rbw_hz: f64,
    pub vbw_hz: f64,
    pub duration_s: f64,
    pub points: usize,
    pub samples_per_point: usize,
    pub seed: u64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            analysis_frequency_hz: 2e6,
            rbw_hz: 30e3,
            vbw_hz: 30.0,
            duration_s: 1.0,
            points: 100,
            samples_per_point: 10_000,
            seed: 0,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |name, value: f64, reason| Error::InvalidParameter { name, value, reason };
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(invalid("duration_s", self.duration_s, "must be positive"));
        }
        if !(self.vbw_hz > 0.0 && self.rbw_hz > 0.0) {
            return Err(invalid("vbw_hz", self.vbw_hz, "bandwidths must be positive"));
        }
        if self.vbw_hz > self.rbw_hz {
            return Err(invalid("vbw_hz", self.vbw_hz, "must not exceed rbw_hz"));
        }
        if self.points == 0 {
            return Err(invalid("points", 0.0, "need at least one point"));
        }
        if self.samples_per_point < 2 {
            return Err(invalid(
                "samples_per_point",
                self.samples_per_point as f64,
                "need at least two samples per point",
            ));
        }
        Ok(())
    }

    pub fn time_step(&self) -> f64 {
        self.duration_s / self.points as f64
    }

    /// Weight of a new point in the single-pole video filter.
    pub fn smoothing_weight(&self) -> f64 {
        let tau = 1.0 / (2.0 * std::f64::consts::PI * self.vbw_hz);
        1.0 - (-self.time_step() / tau).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseTrace {
    pub times: Vec<f64>,
    /// Correlation noise power relative to the shot-noise limit.
    pub power_db: Vec<f64>,
    /// Vacuum reference measured the same way.
    pub snl_db: Vec<f64>,
    pub config: TraceConfig,
}

impl NoiseTrace {
    pub fn mean_power_db(&self) -> f64 {
        self.power_db.iter().sum::<f64>() / self.power_db.len() as f64
    }

    pub fn mean_snl_db(&self) -> f64 {
        self.snl_db.iter().sum::<f64>() / self.snl_db.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# analysis_frequency_hz={},rbw_hz={},vbw_hz={},duration_s={},points={},samples_per_point={},seed={}",
            c.analysis_frequency_hz, c.rbw_hz, c.vbw_hz, c.duration_s, c.points, c.samples_per_point, c.seed
        );
        out.push_str("time_s,power_db,snl_db\n");
        for ((t, p), s) in self.times.iter().zip(&self.power_db).zip(&self.snl_db) {
            let _ = writeln!(out, "{t:.6},{p:.6},{s:.6}");
        }
        out
    }
}

/// Block variance of `n` draws of `w·z`, `z` standard normal, in stream `stream`.
fn block_variance(weights: &[f64], n: usize, seed: u64, stream: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    variance_of((0..n).map(|_| weights.iter().map(|w| w * rng.sample::<f64, _>(StandardNormal)).sum())).0
}

fn smooth(values: &[f64], weight: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut y = match values.first() {
        Some(&v) => v,
        None => return out,
    };
    for &v in values {
        y += weight * (v - y);
        out.push(y);
    }
    out
}

/// Emulated analyzer trace of `form` measured on `state`, in dB relative to
/// the form's shot-noise limit, plus the matching vacuum reference trace.
///
/// Every point uses its own ChaCha stream, so the result does not depend on
/// how the points are scheduled across threads.
pub fn emit_trace(state: &GaussianState, form: &QuadForm, config: &TraceConfig) -> Result<NoiseTrace> {
    config.validate()?;
    check_state(state)?;
    if form.coeffs().len() != state.cov().nrows() {
        return Err(Error::DimensionMismatch {
            expected: state.cov().nrows(),
            found: form.coeffs().len(),
        });
    }
    let factor = covariance_factor(state.cov())?;
    // x = L z, so c·x = (Lᵀc)·z
    let weights: Vec<f64> = (factor.transpose() * form.coeffs()).iter().copied().collect();
    let vacuum_weights: Vec<f64> = form.coeffs().iter().map(|c| c * 0.5).collect();
    let reference = snl(form);
    let n = config.samples_per_point;

    let raw: Vec<(f64, f64)> = (0..config.points as u64)
        .into_par_iter()
        .map(|i| {
            let signal = block_variance(&weights, n, config.seed, 2 * i);
            let vacuum = block_variance(&vacuum_weights, n, config.seed, 2 * i + 1);
            (to_db(signal / reference), to_db(vacuum / reference))
        })
        .collect();
    let (power, vac): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
    let weight = config.smoothing_weight();
    Ok(NoiseTrace {
        times: (0..config.points).map(|i| i as f64 * config.time_step()).collect(),
        power_db: smooth(&power, weight),
        snl_db: smooth(&vac, weight),
        config: *config,
    })
}
