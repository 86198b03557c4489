//! Supervised spatial filtering by source power comodulation with trace
//! normalization and Tikhonov shrinkage of the constraint covariance.
//!
//! Training solves the generalized eigenvalue problem
//! `sigma_z w = lambda sigma_avg_shrunk w` via Cholesky whitening, where
//! `sigma_z` is the z-weighted mean of trace-normalized epoch covariances.
//! Every returned filter satisfies `w' sigma_avg_shrunk w = 1`.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Maximum acceptable condition number of the shrunk constraint matrix.
const MAX_CONDITION: f64 = 1e12;

/// Per-epoch covariance matrices plus their average.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    pub per_epoch: Vec<DMatrix<f64>>,
    pub average: DMatrix<f64>,
}

impl CovarianceSet {
    /// Build from raw epoch matrices (channel x sample), trace-normalizing
    /// each epoch covariance as required by the regularized variant.
    pub fn from_epochs<'a, I>(epochs: I) -> Result<Self>
    where
        I: IntoIterator<Item = ArrayView2<'a, f64>>,
    {
        let mut per_epoch = Vec::new();
        for ep in epochs {
            let cov = epoch_covariance(ep)?;
            per_epoch.push(trace_normalize(&cov)?);
        }
        if per_epoch.is_empty() {
            return Err(Error::InsufficientData("no epochs for covariance set".into()));
        }
        let average = average_of(&per_epoch);
        Ok(Self { per_epoch, average })
    }

    /// Assemble from already-computed per-epoch covariances (not normalized).
    pub fn from_matrices(per_epoch: Vec<DMatrix<f64>>) -> Result<Self> {
        if per_epoch.is_empty() {
            return Err(Error::InsufficientData("no epoch covariances".into()));
        }
        let normalized: Result<Vec<_>> = per_epoch.iter().map(trace_normalize).collect();
        let per_epoch = normalized?;
        let average = average_of(&per_epoch);
        Ok(Self { per_epoch, average })
    }

    pub fn n_epochs(&self) -> usize {
        self.per_epoch.len()
    }

    pub fn n_channels(&self) -> usize {
        self.average.nrows()
    }

    /// Covariance set restricted to a subset of epoch indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InsufficientData("empty covariance subset".into()));
        }
        let per_epoch: Vec<DMatrix<f64>> =
            indices.iter().map(|&i| self.per_epoch[i].clone()).collect();
        let average = average_of(&per_epoch);
        Ok(Self { per_epoch, average })
    }
}

fn average_of(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = mats.len() as f64;
    let mut avg = DMatrix::zeros(mats[0].nrows(), mats[0].ncols());
    for m in mats {
        avg += m;
    }
    avg / n
}

/// Sample covariance of one epoch after within-epoch channel mean removal.
pub fn epoch_covariance(epoch: ArrayView2<'_, f64>) -> Result<DMatrix<f64>> {
    let (n_c, t_e) = epoch.dim();
    if t_e < 2 {
        return Err(Error::InsufficientData(format!(
            "epoch covariance needs at least 2 samples, got {t_e}"
        )));
    }
    let mut centered = DMatrix::zeros(n_c, t_e);
    for c in 0..n_c {
        let row = epoch.row(c);
        let mean = row.sum() / t_e as f64;
        for t in 0..t_e {
            centered[(c, t)] = row[t] - mean;
        }
    }
    let mut cov = &centered * centered.transpose();
    cov /= (t_e - 1) as f64;
    // enforce exact symmetry against rounding
    for i in 0..n_c {
        for j in 0..i {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    Ok(cov)
}

/// Scale a covariance matrix to unit trace.
pub fn trace_normalize(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let tr = cov.trace();
    if !(tr > 0.0) {
        return Err(Error::DegenerateEpoch(format!("covariance trace {tr} is not positive")));
    }
    Ok(cov / tr)
}

/// Shrink a covariance matrix toward the identity.
pub fn shrink(cov: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
    }
    let n = cov.nrows();
    let mut out = cov * (1.0 - alpha);
    for i in 0..n {
        out[(i, i)] += alpha;
    }
    Ok(out)
}

/// One eigenpair of the training problem.
#[derive(Debug, Clone)]
pub struct SpocPair {
    pub filter: DVector<f64>,
    pub eigenvalue: f64,
    /// 1-based position in the descending-eigenvalue ordering.
    pub rank_k: usize,
}

/// Full decomposition returned by [`spoc_train`].
#[derive(Debug, Clone)]
pub struct SpocDecomposition {
    pub pairs: Vec<SpocPair>,
    /// Set when the target variable had no variance; all eigenvalues are zero.
    pub degenerate_target: bool,
}

/// Train spatial filters maximizing comodulation of epoch-wise source power
/// with the target variable `z`.
///
/// `z` is centered and scaled to unit variance internally. Returns all
/// `n_channels` eigenpairs sorted by descending eigenvalue, each filter
/// normalized so that `w' sigma_avg_shrunk w = 1` and signed so the
/// largest-magnitude entry of the activity pattern `sigma_avg w` is positive.
pub fn spoc_train(covariances: &CovarianceSet, z: &[f64], alpha: f64) -> Result<SpocDecomposition> {
    let n_e = covariances.n_epochs();
    let n_c = covariances.n_channels();
    if z.len() != n_e {
        return Err(Error::DimensionMismatch(format!(
            "{} z values for {} epochs",
            z.len(),
            n_e
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
    }

    let mean = z.iter().sum::<f64>() / n_e as f64;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_e as f64;
    let degenerate_target = var < 1e-24;
    let z_norm: Vec<f64> = if degenerate_target {
        vec![0.0; n_e]
    } else {
        let sd = var.sqrt();
        z.iter().map(|v| (v - mean) / sd).collect()
    };

    let mut sigma_z = DMatrix::zeros(n_c, n_c);
    for (cov, &zv) in covariances.per_epoch.iter().zip(&z_norm) {
        sigma_z += cov * zv;
    }
    sigma_z /= n_e as f64;

    let shrunk = shrink(&covariances.average, alpha)?;

    // Condition guard on the constraint matrix.
    let eig_c = shrunk.clone().symmetric_eigen();
    let mut lmin = f64::INFINITY;
    let mut lmax = f64::NEG_INFINITY;
    for &l in eig_c.eigenvalues.iter() {
        lmin = lmin.min(l);
        lmax = lmax.max(l);
    }
    if !(lmin > 0.0) || lmax / lmin > MAX_CONDITION {
        return Err(Error::IllConditioned { cond: if lmin > 0.0 { lmax / lmin } else { f64::INFINITY } });
    }

    // Whiten: with shrunk = L L', solve the symmetric problem
    // inv(L) sigma_z inv(L)' v = lambda v, then w = inv(L)' v.
    let chol = shrunk
        .clone()
        .cholesky()
        .ok_or(Error::IllConditioned { cond: lmax / lmin })?;
    let l = chol.l();
    let linv_sz = l.clone().solve_lower_triangular(&sigma_z).ok_or_else(|| {
        Error::IllConditioned { cond: lmax / lmin }
    })?;
    let mut whitened = l
        .clone()
        .solve_lower_triangular(&linv_sz.transpose())
        .ok_or(Error::IllConditioned { cond: lmax / lmin })?;
    for i in 0..n_c {
        for j in 0..i {
            let s = 0.5 * (whitened[(i, j)] + whitened[(j, i)]);
            whitened[(i, j)] = s;
            whitened[(j, i)] = s;
        }
    }

    let eig = whitened.symmetric_eigen();
    let mut order: Vec<usize> = (0..n_c).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let lt = l.transpose();
    let mut pairs = Vec::with_capacity(n_c);
    for (rank_idx, &col) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(col).clone_owned();
        let mut w = lt
            .solve_upper_triangular(&v)
            .ok_or(Error::IllConditioned { cond: lmax / lmin })?;
        // Sign: largest-magnitude entry of the activity pattern positive.
        let a = &covariances.average * &w;
        let mut pivot = 0usize;
        for i in 1..n_c {
            if a[i].abs() > a[pivot].abs() {
                pivot = i;
            }
        }
        if a[pivot] < 0.0 {
            w = -w;
        }
        pairs.push(SpocPair {
            filter: w,
            eigenvalue: eig.eigenvalues[col],
            rank_k: rank_idx + 1,
        });
    }

    Ok(SpocDecomposition { pairs, degenerate_target })
}

/// Activity pattern of a filter: `a = sigma_avg w`, plus a unit-norm copy.
pub fn activity_pattern(w: &DVector<f64>, sigma_avg: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let a = sigma_avg * w;
    let norm = a.norm();
    let unit = if norm > 0.0 { &a / norm } else { a.clone() };
    (a, unit)
}

/// Epoch-wise source power under a trained filter: `z_est(e) = w' cov(e) w`.
pub fn estimate_z(w: &DVector<f64>, test_covariances: &CovarianceSet) -> Vec<f64> {
    test_covariances
        .per_epoch
        .iter()
        .map(|cov| {
            let v = (w.transpose() * cov * w)[(0, 0)];
            v.max(0.0)
        })
        .collect()
}

/// Ranking-based decoding score in [0, 1].
///
/// The true targets are binarized by a median split (values equal to the
/// median go to the lower class) and the estimates are scored as the area
/// under the ROC curve; 1 is perfect decoding, 0.5 chance level.
pub fn z_auc(z_est: &[f64], z_true: &[f64]) -> Result<f64> {
    let n = z_true.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!("z-AUC needs at least 4 epochs, got {n}")));
    }
    if z_est.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates for {} targets",
            z_est.len(),
            n
        )));
    }
    let mut sorted = z_true.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let labels: Vec<bool> = z_true.iter().map(|&v| v > median).collect();
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "constant target variable, median split left one class empty".into(),
        ));
    }

    // Mann-Whitney U with midranks for tied scores.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| z_est[i].partial_cmp(&z_est[j]).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && z_est[idx[j + 1]] == z_est[idx[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}
