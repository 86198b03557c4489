//! Cluster validation metrics and per-cluster reports: silhouette scores,
//! intra-cluster envelope error over the full event set, representative
//! selection, spatial-pattern heterogeneity, center-frequency variation and
//! the signed event-locked maximal envelope difference (negative for ERD,
//! positive for ERS).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::{silhouette_all, DistanceMatrix};
use crate::envelope::{EnvelopeProfile, PROFILE_T_START};
use crate::error::{Error, Result};

/// Silhouette of one sample against its assignment groups.
///
/// `assignment` may use any integer group ids; -1 marks the outlier group,
/// which participates as a comparison group. A singleton own group scores 0.
pub fn silhouette(i: usize, assignment: &[i64], rows: &[Vec<f64>]) -> Result<f64> {
    let n = rows.len();
    if assignment.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} assignments for {} samples",
            assignment.len(),
            n
        )));
    }
    let own = assignment[i];
    let mut group_sum: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for j in 0..n {
        let entry = group_sum.entry(assignment[j]).or_insert((0.0, 0));
        entry.1 += 1;
        if j != i {
            let d: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            entry.0 += d;
        }
    }
    if group_sum.len() < 2 {
        return Err(Error::UndefinedMetric("silhouette needs at least two groups".into()));
    }
    let (own_sum, own_size) = group_sum[&own];
    if own_size == 1 {
        return Ok(0.0);
    }
    let a = own_sum / (own_size - 1) as f64;
    let mut b = f64::INFINITY;
    for (&g, &(sum, size)) in &group_sum {
        if g != own && size > 0 {
            b = b.min(sum / size as f64);
        }
    }
    let denom = a.max(b);
    Ok(if denom > 0.0 { (b - a) / denom } else { 0.0 })
}

/// Silhouettes for every sample at once.
pub fn silhouette_samples(assignment: &[i64], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    if assignment.len() != rows.len() {
        return Err(Error::DimensionMismatch("assignment length".into()));
    }
    let dists = DistanceMatrix::from_rows(rows);
    silhouette_all(&dists, assignment)
        .ok_or_else(|| Error::UndefinedMetric("silhouette needs at least two groups".into()))
}

/// Intra-cluster mean squared error of full-resolution log-envelopes over the
/// full event set. Zero iff all member profiles are identical.
pub fn ic_mse(member_profiles: &[&EnvelopeProfile], events: &[String]) -> Result<f64> {
    if member_profiles.is_empty() {
        return Err(Error::InsufficientData("empty cluster".into()));
    }
    if events.is_empty() {
        return Err(Error::InvalidParameter("empty event set".into()));
    }
    let mut total = 0.0f64;
    let mut n_t = 0usize;
    for event in events {
        let series: Vec<&[f64]> = member_profiles
            .iter()
            .map(|p| p.event(event).map(|e| e.series.as_slice()))
            .collect::<Result<_>>()?;
        let len = series[0].len();
        if series.iter().any(|s| s.len() != len) {
            return Err(Error::DimensionMismatch(format!(
                "profile lengths differ for event '{event}'"
            )));
        }
        n_t = len;
        // Welford accumulation per time point: exactly zero when all members
        // agree, which the zero-iff-identical contract requires.
        for t in 0..len {
            let mut mean = 0.0f64;
            let mut m2 = 0.0f64;
            for (k, s) in series.iter().enumerate() {
                let delta = s[t] - mean;
                mean += delta / (k + 1) as f64;
                m2 += delta * (s[t] - mean);
            }
            total += m2;
        }
    }
    let beta = (member_profiles.len() * events.len() * n_t) as f64;
    Ok(total / beta)
}

/// Member with minimal total Euclidean distance to all other members; ties
/// break toward the lowest member index.
pub fn representative(member_rows: &[Vec<f64>]) -> Result<usize> {
    if member_rows.is_empty() {
        return Err(Error::InsufficientData("empty cluster".into()));
    }
    let n = member_rows.len();
    let mut best = 0usize;
    let mut best_sum = f64::INFINITY;
    for i in 0..n {
        let sum: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                member_rows[i]
                    .iter()
                    .zip(&member_rows[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum();
        if sum < best_sum {
            best_sum = sum;
            best = i;
        }
    }
    Ok(best)
}

/// Sign-invariant angle between two patterns, degrees in [0, 90].
pub fn pattern_angle_deg(a: &[f64], b: &[f64]) -> Result<f64> {
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::UndefinedMetric("zero-norm activity pattern".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot.abs() / (na * nb)).clamp(0.0, 1.0).acos().to_degrees())
}

/// Intra-cluster pattern heterogeneity: mean sign-invariant angle of member
/// patterns to the representative's pattern (whose own angle is zero).
pub fn icph(member_patterns: &[Vec<f64>], representative: usize) -> Result<f64> {
    if member_patterns.is_empty() {
        return Err(Error::InsufficientData("empty cluster".into()));
    }
    let rep = &member_patterns[representative];
    let mut total = 0.0;
    for p in member_patterns {
        total += pattern_angle_deg(p, rep)?;
    }
    Ok(total / member_patterns.len() as f64)
}

/// Sample standard deviation of member center frequencies; singleton is 0.
pub fn f0_std(f0_values: &[f64]) -> f64 {
    let n = f0_values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = f0_values.iter().sum::<f64>() / n as f64;
    (f0_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Signed maximal envelope deviation from the pre-event baseline for one
/// member profile: baseline is the mean over [-300, 0] ms, the value is the
/// largest-magnitude deviation over [0, 2000] ms, keeping its sign.
pub fn max_envelope_diff_single(profile: &EnvelopeProfile, event: &str) -> Result<f64> {
    let ev = profile.event(event)?;
    let fs = profile.fs;
    let baseline_len = ((-PROFILE_T_START) * fs).round() as usize + 1;
    if ev.series.len() <= baseline_len {
        return Err(Error::InsufficientData("profile shorter than its baseline window".into()));
    }
    let baseline: f64 =
        ev.series[..baseline_len].iter().sum::<f64>() / baseline_len as f64;
    let mut best = 0.0f64;
    for &v in &ev.series[baseline_len - 1..] {
        let diff = v - baseline;
        if diff.abs() > best.abs() {
            best = diff;
        }
    }
    Ok(best)
}

/// Cluster-average signed maximal envelope difference for one event.
pub fn max_envelope_diff(member_profiles: &[&EnvelopeProfile], event: &str) -> Result<f64> {
    if member_profiles.is_empty() {
        return Err(Error::InsufficientData("empty cluster".into()));
    }
    let mut total = 0.0;
    for p in member_profiles {
        total += max_envelope_diff_single(p, event)?;
    }
    Ok(total / member_profiles.len() as f64)
}

/// Everything reported per cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster_id: i64,
    pub size: usize,
    pub mean_silhouette: f64,
    pub min_silhouette: f64,
    pub ic_mse: f64,
    pub icph_deg: f64,
    pub f0_std_hz: f64,
    /// Signed maximal envelope difference per event.
    pub delta_phi_max: BTreeMap<String, f64>,
    /// Member index (within the run's sample list) of the representative.
    pub representative: usize,
    pub mean_z_auc: f64,
    pub mean_p_art: f64,
}

/// Per-member inputs needed to build a cluster report.
pub struct ClusterInputs<'a> {
    pub cluster_id: i64,
    /// Member indices within the run's sample list.
    pub members: Vec<usize>,
    pub feature_rows: Vec<Vec<f64>>,
    pub patterns: Vec<Vec<f64>>,
    pub f0_values: Vec<f64>,
    pub z_aucs: Vec<f64>,
    pub p_arts: Vec<f64>,
    pub profiles: Vec<&'a EnvelopeProfile>,
    /// Silhouettes of the members (aligned with `members`).
    pub silhouettes: Vec<f64>,
}

/// Assemble the full report for one cluster.
pub fn cluster_report(inputs: &ClusterInputs<'_>, events: &[String]) -> Result<ClusterReport> {
    let n = inputs.members.len();
    if n == 0 {
        return Err(Error::InsufficientData("empty cluster".into()));
    }
    let rep = representative(&inputs.feature_rows)?;
    let mut delta = BTreeMap::new();
    for event in events {
        delta.insert(event.clone(), max_envelope_diff(&inputs.profiles, event)?);
    }
    Ok(ClusterReport {
        cluster_id: inputs.cluster_id,
        size: n,
        mean_silhouette: inputs.silhouettes.iter().sum::<f64>() / n as f64,
        min_silhouette: inputs.silhouettes.iter().cloned().fold(f64::INFINITY, f64::min),
        ic_mse: ic_mse(&inputs.profiles, events)?,
        icph_deg: icph(&inputs.patterns, rep)?,
        f0_std_hz: f0_std(&inputs.f0_values),
        delta_phi_max: delta,
        representative: inputs.members[rep],
        mean_z_auc: inputs.z_aucs.iter().sum::<f64>() / n as f64,
        mean_p_art: inputs.p_arts.iter().sum::<f64>() / n as f64,
    })
}

/// Scatter-plot rows of `(cluster, event-x value, event-y value)`.
pub fn scatter_data(
    reports: &[ClusterReport],
    event_x: &str,
    event_y: &str,
) -> Vec<(i64, f64, f64)> {
    reports
        .iter()
        .filter_map(|r| {
            let x = r.delta_phi_max.get(event_x)?;
            let y = r.delta_phi_max.get(event_y)?;
            Some((r.cluster_id, *x, *y))
        })
        .collect()
}

/// The flattened `(cluster, event) -> delta-phi` table.
pub fn functional_summary(reports: &[ClusterReport]) -> Vec<(i64, String, f64)> {
    let mut rows = Vec::new();
    for r in reports {
        for (event, &v) in &r.delta_phi_max {
            rows.push((r.cluster_id, event.clone(), v));
        }
    }
    rows
}
