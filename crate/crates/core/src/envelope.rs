//! Event-locked envelope extraction via the analytic signal and condensation
//! into the 12-dimensional clustering feature vector: per-event log-envelope
//! averages are subsampled to 18 bins per event, concatenated, standardized,
//! reduced to 10 kernel-PCA coordinates, and rejoined with the two
//! standardization features.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{bandpass_filter, Recording};
use crate::sweep::Component;

/// Envelope profile window relative to each event, seconds.
pub const PROFILE_T_START: f64 = -0.3;
pub const PROFILE_T_END: f64 = 2.0;
/// Temporal subsampling bins per event.
pub const N_SUBSAMPLES: usize = 18;
/// Kernel-PCA output dimensionality.
pub const D_RED: usize = 10;
/// Final clustering feature dimensionality (kernel-PCA coordinates + mu + sigma).
pub const D_FEATURE: usize = D_RED + 2;

/// Number of samples in one event-locked profile series.
pub fn profile_len(fs: f64) -> usize {
    ((PROFILE_T_END - PROFILE_T_START) * fs).round() as usize + 1
}

/// Magnitude of the analytic signal, computed in the frequency domain.
pub fn analytic_envelope(s: &[f64]) -> Result<Vec<f64>> {
    let n = s.len();
    if n < 64 {
        return Err(Error::InsufficientData(format!(
            "analytic envelope needs at least 64 samples, got {n}"
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = s.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    // analytic-signal spectrum: keep DC (and Nyquist for even n), double the
    // positive frequencies, null the negative ones
    let half = n / 2;
    for v in buf.iter_mut().take(half).skip(1) {
        *v *= 2.0;
    }
    if n % 2 == 1 {
        buf[half] *= 2.0;
    }
    for v in buf.iter_mut().skip(half + 1) {
        *v = Complex64::new(0.0, 0.0);
    }
    ifft.process(&mut buf);
    Ok(buf.iter().map(|c| c.norm() / n as f64).collect())
}

/// One event's averaged log-envelope series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventProfile {
    pub series: Vec<f64>,
    pub n_epochs_averaged: usize,
}

/// Per-component, per-event averaged log-envelope time courses over
/// `[-0.3, 2.0]` s around each event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EnvelopeProfile {
    pub fs: f64,
    pub events: BTreeMap<String, EventProfile>,
    /// Events that were requested but had no usable epochs.
    pub omitted_events: Vec<String>,
}

impl EnvelopeProfile {
    pub fn event(&self, name: &str) -> Result<&EventProfile> {
        self.events.get(name).ok_or_else(|| Error::MissingEvent(name.to_string()))
    }
}

/// Natural-log envelope of the component time course `w' x(t)` on the
/// already band-passed recording.
pub fn log_envelope_timecourse(filtered: &Recording, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != filtered.n_channels() {
        return Err(Error::DimensionMismatch(format!(
            "filter of {} weights for {} channels",
            w.len(),
            filtered.n_channels()
        )));
    }
    let n_s = filtered.n_samples();
    let mut projected = vec![0.0f64; n_s];
    for (c, row) in filtered.data().outer_iter().enumerate() {
        let wc = w[c];
        if wc == 0.0 {
            continue;
        }
        for (t, &v) in row.iter().enumerate() {
            projected[t] += wc * v;
        }
    }
    let env = analytic_envelope(&projected)?;
    Ok(env.iter().map(|&v| v.max(f64::MIN_POSITIVE).ln()).collect())
}

/// Segment a log-envelope time course around each event and average.
pub fn profile_from_timecourse(
    log_env: &[f64],
    recording: &Recording,
    event_names: &[String],
) -> EnvelopeProfile {
    let fs = recording.fs();
    let len = profile_len(fs);
    let start_offset = (PROFILE_T_START * fs).round() as i64;
    let n_s = log_env.len() as i64;

    let mut profile = EnvelopeProfile { fs, ..Default::default() };
    for name in event_names {
        let mut acc = vec![0.0f64; len];
        let mut count = 0usize;
        for &ev in &recording.event_samples(name) {
            let start = ev as i64 + start_offset;
            if start < 0 || start + len as i64 > n_s {
                continue;
            }
            for (i, a) in acc.iter_mut().enumerate() {
                *a += log_env[(start as usize) + i];
            }
            count += 1;
        }
        if count == 0 {
            profile.omitted_events.push(name.clone());
        } else {
            for a in &mut acc {
                *a /= count as f64;
            }
            profile
                .events
                .insert(name.clone(), EventProfile { series: acc, n_epochs_averaged: count });
        }
    }
    profile
}

/// Full event-locked log-envelope extraction for one component: band-pass at
/// the component's band, project, envelope, log, segment and average.
pub fn event_locked_log_envelope(
    component: &Component,
    recording: &Recording,
    event_names: &[String],
) -> Result<EnvelopeProfile> {
    let filtered = bandpass_filter(recording, component.config.band())?;
    let log_env = log_envelope_timecourse(&filtered, &component.filter)?;
    Ok(profile_from_timecourse(&log_env, recording, event_names))
}

/// Within-bin means over `n_sub` equal contiguous bins per event,
/// concatenated in the given event order.
pub fn subsample_concat(
    profile: &EnvelopeProfile,
    event_names: &[String],
    n_sub: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(event_names.len() * n_sub);
    for name in event_names {
        let ev = profile.event(name)?;
        let n = ev.series.len();
        for b in 0..n_sub {
            let lo = b * n / n_sub;
            let hi = (b + 1) * n / n_sub;
            let bin = &ev.series[lo..hi];
            out.push(bin.iter().sum::<f64>() / bin.len() as f64);
        }
    }
    Ok(out)
}

/// A standardized vector together with its standardization features.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub values: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub degenerate: bool,
}

/// Zero-mean unit-variance scaling with a degenerate flag for (near-)constant
/// input. Uses the n-1 denominator.
pub fn standardize(v: &[f64]) -> Result<Standardized> {
    let n = v.len();
    if n < 2 {
        return Err(Error::InsufficientData("standardize needs at least 2 values".into()));
    }
    let mu = v.iter().sum::<f64>() / n as f64;
    let sigma = (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if sigma < 1e-12 {
        return Ok(Standardized { values: vec![0.0; n], mu, sigma, degenerate: true });
    }
    Ok(Standardized {
        values: v.iter().map(|x| (x - mu) / sigma).collect(),
        mu,
        sigma,
        degenerate: false,
    })
}

/// Kernel choice for the dimensionality-reduction step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Kernel::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }
}

/// Fitted kernel-PCA projection model.
///
/// The centered kernel matrix is eigendecomposed densely (exact and
/// deterministic); fits beyond a few thousand samples get slow and would want
/// an iterative solver instead.
#[derive(Debug, Clone)]
pub struct KernelPca {
    kernel: Kernel,
    train: Vec<Vec<f64>>,
    /// Projection coefficients, `d_red` rows of length n (eigenvectors scaled
    /// by inverse root eigenvalues; zero rows for degenerate directions).
    alphas: Vec<Vec<f64>>,
    row_means: Vec<f64>,
    total_mean: f64,
    pub d_red: usize,
}

impl KernelPca {
    pub fn fit(data: &[Vec<f64>], d_red: usize, kernel: Kernel) -> Result<Self> {
        let n = data.len();
        if n <= d_red {
            return Err(Error::InsufficientData(format!(
                "kernel PCA with {d_red} components needs more than {d_red} samples, got {n}"
            )));
        }
        let dim = data[0].len();
        if data.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("ragged feature rows".into()));
        }

        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = kernel.eval(&data[i], &data[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / n as f64).collect();
        let total_mean = row_means.iter().sum::<f64>() / n as f64;
        let mut centered = k;
        for i in 0..n {
            for j in 0..n {
                centered[(i, j)] += total_mean - row_means[i] - row_means[j];
            }
        }

        let eig = centered.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal)
        });
        let lambda_max = eig.eigenvalues[order[0]].max(0.0);

        let mut alphas = Vec::with_capacity(d_red);
        for &col in order.iter().take(d_red) {
            let lambda = eig.eigenvalues[col];
            if lambda <= 1e-12 * lambda_max.max(1e-300) {
                alphas.push(vec![0.0; n]);
                continue;
            }
            let scale = 1.0 / lambda.sqrt();
            let mut alpha: Vec<f64> = eig.eigenvectors.column(col).iter().map(|v| v * scale).collect();
            // sign convention: largest-magnitude loading positive
            let mut pivot = 0usize;
            for (i, v) in alpha.iter().enumerate() {
                if v.abs() > alpha[pivot].abs() {
                    pivot = i;
                }
            }
            if alpha[pivot] < 0.0 {
                for v in &mut alpha {
                    *v = -*v;
                }
            }
            alphas.push(alpha);
        }

        Ok(Self { kernel, train: data.to_vec(), alphas, row_means, total_mean, d_red })
    }

    /// Project one vector into the `d_red`-dimensional subspace.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let n = self.train.len();
        let kx: Vec<f64> = self.train.iter().map(|t| self.kernel.eval(x, t)).collect();
        let kx_mean = kx.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = kx
            .iter()
            .zip(&self.row_means)
            .map(|(&v, &rm)| v - kx_mean - rm + self.total_mean)
            .collect();
        self.alphas
            .iter()
            .map(|alpha| alpha.iter().zip(&centered).map(|(a, c)| a * c).sum())
            .collect()
    }
}

/// Fit the reduction used for clustering features: RBF kernel with
/// `gamma = 1 / d_red`.
pub fn kernel_pca_fit(phi: &[Vec<f64>], d_red: usize) -> Result<KernelPca> {
    KernelPca::fit(phi, d_red, Kernel::Rbf { gamma: 1.0 / d_red as f64 })
}

/// The assembled clustering feature set, rows in input order.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    /// One row per component, each of length [`D_FEATURE`].
    pub rows: Vec<Vec<f64>>,
    pub kpca: KernelPca,
    /// Rows whose concatenated envelope vector was (near-)constant.
    pub degenerate_rows: Vec<bool>,
}

/// Condense profiles into feature vectors `e = [10 kernel-PCA coords, mu, sigma]`.
pub fn assemble_features(
    profiles: &[EnvelopeProfile],
    cluster_events: &[String],
    n_sub: usize,
    d_red: usize,
) -> Result<FeatureSet> {
    let mut standardized = Vec::with_capacity(profiles.len());
    for p in profiles {
        let cat = subsample_concat(p, cluster_events, n_sub)?;
        standardized.push(standardize(&cat)?);
    }
    let phi: Vec<Vec<f64>> = standardized.iter().map(|s| s.values.clone()).collect();
    let kpca = kernel_pca_fit(&phi, d_red)?;
    let rows = standardized
        .iter()
        .map(|s| {
            let mut row = kpca.transform(&s.values);
            row.push(s.mu);
            row.push(s.sigma);
            row
        })
        .collect();
    Ok(FeatureSet {
        rows,
        kpca,
        degenerate_rows: standardized.iter().map(|s| s.degenerate).collect(),
    })
}
