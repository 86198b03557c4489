//! Hyperparameter grid enumeration, chronological cross-validation, the
//! component harvest over the full grid, and the denoising selection gate.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{ArtifactInput, ArtifactScorer};
use crate::error::{Error, Result};
use crate::signal::{band_grid, bandpass_filter, segment, Band, Recording};
use crate::spoc::{estimate_z, spoc_train, z_auc, CovarianceSet};

/// One cell of the hyperparameter grid. `fold_q` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigPoint {
    pub t0: f64,
    pub f0: f64,
    pub df: f64,
    pub rank_k: usize,
    pub alpha: f64,
    pub fold_q: usize,
}

impl ConfigPoint {
    pub fn band(&self) -> Band {
        Band::new(self.f0, self.df)
    }
}

fn default_t0_values() -> Vec<f64> {
    vec![-1.0, -0.75, -0.5]
}

fn default_bands() -> Vec<Band> {
    band_grid(45, [1.0, 95.0], [2.0, 10.0]).expect("default band grid")
}

fn default_rank_min() -> usize {
    1
}

fn default_rank_max() -> usize {
    8
}

fn default_alphas() -> Vec<f64> {
    let n = 15;
    (0..n)
        .map(|i| {
            if i == 0 {
                1e-8
            } else if i == n - 1 {
                1e-3
            } else {
                10f64.powf(-8.0 + 5.0 * i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

fn default_n_folds() -> usize {
    5
}

fn default_dt() -> f64 {
    1.0
}

/// The grid dimensions spanned by a harvest run. Every field defaults to the
/// reference configuration, so partial overrides deserialize cleanly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpace {
    #[serde(default = "default_t0_values")]
    pub t0_values: Vec<f64>,
    #[serde(default = "default_bands")]
    pub bands: Vec<Band>,
    #[serde(default = "default_rank_min")]
    pub rank_min: usize,
    #[serde(default = "default_rank_max")]
    pub rank_max: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_n_folds")]
    pub n_folds: usize,
    /// Epoch length in seconds.
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl SweepSpace {
    pub fn n_ranks(&self) -> usize {
        self.rank_max - self.rank_min + 1
    }

    pub fn cardinality(&self) -> usize {
        self.t0_values.len() * self.bands.len() * self.alphas.len() * self.n_folds * self.n_ranks()
    }

    fn validate(&self) -> Result<()> {
        if self.t0_values.is_empty()
            || self.bands.is_empty()
            || self.alphas.is_empty()
            || self.n_folds == 0
            || self.rank_min == 0
            || self.rank_max < self.rank_min
        {
            return Err(Error::InvalidParameter("empty sweep-space dimension".into()));
        }
        Ok(())
    }
}

/// The grid from the reference configuration: three segmentation onsets with
/// one-second epochs, 45 overlapping bands from 1 to 95 Hz, ranks 1 to 8,
/// fifteen log-spaced shrinkage strengths from 1e-8 to 1e-3, and 5-fold
/// chronological cross-validation. 81,000 cells in total.
pub fn default_space() -> SweepSpace {
    SweepSpace {
        t0_values: default_t0_values(),
        bands: default_bands(),
        rank_min: default_rank_min(),
        rank_max: default_rank_max(),
        alphas: default_alphas(),
        n_folds: default_n_folds(),
        dt: default_dt(),
    }
}

/// A reduced grid for demonstration runs and desk-scale end-to-end tests:
/// 15 bands from 6 to 45 Hz, five shrinkage strengths, ranks 1 and 2.
/// 2,250 cells.
pub fn demo_reduced_space() -> SweepSpace {
    SweepSpace {
        t0_values: default_t0_values(),
        bands: band_grid(15, [6.0, 45.0], [4.0, 6.0]).expect("demo band grid"),
        rank_min: 1,
        rank_max: 2,
        alphas: vec![1e-7, 1e-6, 1e-5, 1e-4, 1e-3],
        n_folds: 5,
        dt: 1.0,
    }
}

/// All grid cells in lexicographic (t0, band, alpha, fold, rank) order.
pub fn enumerate_configs(space: &SweepSpace) -> Result<Vec<ConfigPoint>> {
    space.validate()?;
    let mut configs = Vec::with_capacity(space.cardinality());
    for &t0 in &space.t0_values {
        for band in &space.bands {
            for &alpha in &space.alphas {
                for fold in 1..=space.n_folds {
                    for rank in space.rank_min..=space.rank_max {
                        configs.push(ConfigPoint {
                            t0,
                            f0: band.f0,
                            df: band.df,
                            rank_k: rank,
                            alpha,
                            fold_q: fold,
                        });
                    }
                }
            }
        }
    }
    Ok(configs)
}

/// Contiguous chronological train/test splits covering all epochs.
pub fn chronological_folds(n_epochs: usize, n_folds: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if n_folds == 0 {
        return Err(Error::InvalidParameter("need at least one fold".into()));
    }
    if n_epochs < 2 * n_folds {
        return Err(Error::InsufficientData(format!(
            "{n_epochs} epochs cannot fill {n_folds} chronological folds"
        )));
    }
    let base = n_epochs / n_folds;
    let extra = n_epochs % n_folds;
    let mut folds = Vec::with_capacity(n_folds);
    let mut start = 0usize;
    for q in 0..n_folds {
        let len = base + usize::from(q < extra);
        let test: Vec<usize> = (start..start + len).collect();
        let train: Vec<usize> = (0..start).chain(start + len..n_epochs).collect();
        folds.push((train, test));
        start += len;
    }
    Ok(folds)
}

/// One harvested oscillatory component.
#[derive(Debug, Clone)]
pub struct Component {
    pub config: ConfigPoint,
    /// Spatial filter `w`.
    pub filter: Vec<f64>,
    /// Activity pattern `a = sigma_avg w` of the training fold.
    pub pattern: Vec<f64>,
    /// Unit-norm copy of the pattern for angle computations.
    pub pattern_unit: Vec<f64>,
    pub eigenvalue: f64,
    pub z_auc: f64,
    pub p_art: f64,
}

/// A grid cell that could not produce a component, with the reason.
#[derive(Debug, Clone)]
pub struct SkipRecord {
    pub config: ConfigPoint,
    pub reason: String,
}

/// Output of a full harvest: components in enumeration order plus skips.
#[derive(Debug, Clone, Default)]
pub struct HarvestResult {
    pub components: Vec<Component>,
    pub skipped: Vec<SkipRecord>,
}

fn excess_kurtosis(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 4 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if m2 <= 0.0 {
        return None;
    }
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
    Some(m4 / (m2 * m2) - 3.0)
}

/// Result of training one (t0, band) group across alphas, folds and ranks.
type GroupOutput = Vec<(usize, std::result::Result<Component, String>)>;

fn harvest_group(
    recording: &Recording,
    z: &[f64],
    space: &SweepSpace,
    training_event: &str,
    scorer: &dyn ArtifactScorer,
    i_t0: usize,
    i_band: usize,
) -> GroupOutput {
    let n_alphas = space.alphas.len();
    let n_folds = space.n_folds;
    let n_ranks = space.n_ranks();
    let group_base = (i_t0 * space.bands.len() + i_band) * n_alphas * n_folds * n_ranks;
    let group_size = n_alphas * n_folds * n_ranks;
    let t0 = space.t0_values[i_t0];
    let band = space.bands[i_band];

    let fail_all = |reason: String| -> GroupOutput {
        (0..group_size).map(|off| (group_base + off, Err(reason.clone()))).collect()
    };

    let filtered = match bandpass_filter(recording, band) {
        Ok(r) => r,
        Err(e) => return fail_all(e.to_string()),
    };
    let epochs = match segment(&filtered, training_event, t0, space.dt) {
        Ok(s) => s,
        Err(e) => return fail_all(e.to_string()),
    };
    if epochs.unknown_event {
        return fail_all(format!("no '{training_event}' events in recording"));
    }
    let z_kept: Vec<f64> = epochs.kept_occurrences.iter().map(|&occ| z[occ]).collect();
    let n_e = epochs.n_epochs();
    let folds = match chronological_folds(n_e, n_folds) {
        Ok(f) => f,
        Err(e) => return fail_all(e.to_string()),
    };
    let covs = match CovarianceSet::from_epochs((0..n_e).map(|i| epochs.epoch(i))) {
        Ok(c) => c,
        Err(e) => return fail_all(e.to_string()),
    };

    let mut out = Vec::with_capacity(group_size);
    for (i_alpha, &alpha) in space.alphas.iter().enumerate() {
        for (i_fold, (train_idx, test_idx)) in folds.iter().enumerate() {
            let cell_base = group_base + (i_alpha * n_folds + i_fold) * n_ranks;
            let config_at = |rank: usize| ConfigPoint {
                t0,
                f0: band.f0,
                df: band.df,
                rank_k: rank,
                alpha,
                fold_q: i_fold + 1,
            };
            let fail_cell =
                |out: &mut GroupOutput, reason: String| {
                    for (r, rank) in (space.rank_min..=space.rank_max).enumerate() {
                        let _ = rank;
                        out.push((cell_base + r, Err(reason.clone())));
                    }
                };

            let covs_train = match covs.subset(train_idx) {
                Ok(c) => c,
                Err(e) => {
                    fail_cell(&mut out, e.to_string());
                    continue;
                }
            };
            let covs_test = match covs.subset(test_idx) {
                Ok(c) => c,
                Err(e) => {
                    fail_cell(&mut out, e.to_string());
                    continue;
                }
            };
            let z_train: Vec<f64> = train_idx.iter().map(|&i| z_kept[i]).collect();
            let z_test: Vec<f64> = test_idx.iter().map(|&i| z_kept[i]).collect();

            let dec = match spoc_train(&covs_train, &z_train, alpha) {
                Ok(d) => d,
                Err(e) => {
                    fail_cell(&mut out, e.to_string());
                    continue;
                }
            };
            if dec.degenerate_target {
                fail_cell(&mut out, "degenerate target variable in training fold".into());
                continue;
            }

            for (r, rank) in (space.rank_min..=space.rank_max).enumerate() {
                let idx = cell_base + r;
                if rank > dec.pairs.len() {
                    out.push((idx, Err(format!("rank {rank} exceeds decomposition size"))));
                    continue;
                }
                let pair = &dec.pairs[rank - 1];
                let w = &pair.filter;
                let a = &covs_train.average * w;
                let norm = a.norm();
                if !(norm > 0.0) || !w.iter().all(|v| v.is_finite()) {
                    out.push((idx, Err("non-finite filter or zero pattern".into())));
                    continue;
                }
                let a_unit = &a / norm;
                let z_est = estimate_z(w, &covs_test);
                let auc = match z_auc(&z_est, &z_test) {
                    Ok(v) => v,
                    Err(e) => {
                        out.push((idx, Err(e.to_string())));
                        continue;
                    }
                };
                let pattern_unit: Vec<f64> = a_unit.iter().copied().collect();
                let p_art = scorer.score(&ArtifactInput {
                    pattern: &pattern_unit,
                    channel_names: recording.channel_names(),
                    band,
                    envelope_kurtosis: excess_kurtosis(&z_est),
                });
                out.push((
                    idx,
                    Ok(Component {
                        config: config_at(rank),
                        filter: w.iter().copied().collect(),
                        pattern: a.iter().copied().collect(),
                        pattern_unit,
                        eigenvalue: pair.eigenvalue,
                        z_auc: auc,
                        p_art,
                    }),
                ));
            }
        }
    }
    out
}

/// Run chronologically cross-validated training for every grid cell.
///
/// `z` holds one target value per chronological occurrence of
/// `training_event`. Failures of individual cells become skip records; the
/// sweep itself never aborts. The component list follows
/// [`enumerate_configs`] order and is identical whether the (t0, band)
/// groups run sequentially or in parallel.
pub fn harvest(
    recording: &Recording,
    z: &[f64],
    space: &SweepSpace,
    training_event: &str,
    scorer: &dyn ArtifactScorer,
) -> Result<HarvestResult> {
    space.validate()?;
    let n_occurrences = recording.event_samples(training_event).len();
    if n_occurrences > 0 && z.len() != n_occurrences {
        return Err(Error::DimensionMismatch(format!(
            "{} z values for {} '{training_event}' occurrences",
            z.len(),
            n_occurrences
        )));
    }

    let groups: Vec<(usize, usize)> = (0..space.t0_values.len())
        .flat_map(|i_t0| (0..space.bands.len()).map(move |i_band| (i_t0, i_band)))
        .collect();

    let mut all: Vec<(usize, std::result::Result<Component, String>)> = groups
        .par_iter()
        .map(|&(i_t0, i_band)| {
            harvest_group(recording, z, space, training_event, scorer, i_t0, i_band)
        })
        .reduce(Vec::new, |mut acc, mut chunk| {
            acc.append(&mut chunk);
            acc
        });
    all.sort_by_key(|(idx, _)| *idx);

    let configs = enumerate_configs(space)?;
    let mut result = HarvestResult::default();
    for (idx, entry) in all {
        match entry {
            Ok(c) => result.components.push(c),
            Err(reason) => result.skipped.push(SkipRecord { config: configs[idx], reason }),
        }
    }
    Ok(result)
}

/// Components surviving the denoising gate, as indices into the input list.
#[derive(Debug, Clone)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub fraction: f64,
}

/// Keep components with `z_auc >= zauc_min` and `p_art <= p_art_max`.
pub fn select_components(components: &[Component], zauc_min: f64, p_art_max: f64) -> Result<Selection> {
    if !(0.0..=1.0).contains(&zauc_min) || !(0.0..=1.0).contains(&p_art_max) {
        return Err(Error::InvalidParameter("selection thresholds must be in [0, 1]".into()));
    }
    let indices: Vec<usize> = components
        .iter()
        .enumerate()
        .filter(|(_, c)| c.z_auc >= zauc_min && c.p_art <= p_art_max)
        .map(|(i, _)| i)
        .collect();
    let fraction = if components.is_empty() {
        0.0
    } else {
        indices.len() as f64 / components.len() as f64
    };
    Ok(Selection { indices, fraction })
}

/// Convenience: unit-norm pattern as a vector type for angle computations.
pub fn pattern_vector(component: &Component) -> DVector<f64> {
    DVector::from_vec(component.pattern_unit.clone())
}
