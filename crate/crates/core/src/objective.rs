//! Goodness-of-fit metrics: variance accounted for (VAF) per channel, the
//! weighted fitting objective `J_ISOC` and relative parameter errors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::GroundTruthMoments;
use crate::{Error, Result};

/// Which covariance entries enter the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovMode {
    #[default]
    Diagonal,
    Full,
}

/// Weights of the mean and covariance VAF entries.
///
/// In full mode `w_v` has n̄² entries ordered as `vec(Ω^VAF)` (column-major);
/// in diagonal mode it has n̄ entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub w_m: Vec<f64>,
    pub w_v: Vec<f64>,
    #[serde(default)]
    pub mode: CovMode,
}

impl ObjectiveConfig {
    /// Uniform weights `mean_weight` on every mean channel and
    /// `var_weight` on every variance, diagonal mode.
    pub fn diagonal(n_measured: usize, mean_weight: f64, var_weight: f64) -> Self {
        Self { w_m: vec![mean_weight; n_measured], w_v: vec![var_weight; n_measured], mode: CovMode::Diagonal }
    }

    pub fn validate(&self, n_measured: usize) -> Result<()> {
        let expected_v = match self.mode {
            CovMode::Diagonal => n_measured,
            CovMode::Full => n_measured * n_measured,
        };
        if self.w_m.len() != n_measured || self.w_v.len() != expected_v {
            return Err(Error::InvalidConfig(format!(
                "objective weights have {}/{} entries, expected {n_measured}/{expected_v}",
                self.w_m.len(),
                self.w_v.len()
            )));
        }
        if self.w_m.iter().chain(&self.w_v).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("objective weights must be finite and nonnegative".into()));
        }
        if self.w_m.iter().chain(&self.w_v).sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig("objective weights are all zero".into()));
        }
        Ok(())
    }
}

/// Covariance VAF entries; `None` marks a constant ground-truth channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovVaf {
    Diagonal(Vec<Option<f64>>),
    /// Row-major n̄×n̄ table.
    Full(Vec<Vec<Option<f64>>>),
}

impl CovVaf {
    pub fn diagonal(&self) -> Vec<Option<f64>> {
        match self {
            CovVaf::Diagonal(v) => v.clone(),
            CovVaf::Full(rows) => rows.iter().enumerate().map(|(i, r)| r[i]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub m_vaf: Vec<Option<f64>>,
    pub omega_vaf: CovVaf,
    pub j_isoc: f64,
}

/// `1 - Σ(pred - truth)² / Σ(truth - mean(truth))²`, or `None` when the
/// truth series is constant.
pub fn vaf(predicted: &[f64], truth: &[f64]) -> Option<f64> {
    let len = truth.len() as f64;
    let center = truth.iter().sum::<f64>() / len;
    let total: f64 = truth.iter().map(|v| (v - center).powi(2)).sum();
    if !(total > 0.0) {
        return None;
    }
    let residual: f64 = predicted.iter().zip(truth).map(|(p, v)| (p - v).powi(2)).sum();
    Some(1.0 - residual / total)
}

fn check_lengths(pred_len: usize, truth: &GroundTruthMoments) -> Result<()> {
    if pred_len != truth.len() || truth.is_empty() {
        return Err(Error::Dimension(format!(
            "prediction has {pred_len} time points, ground truth {}",
            truth.len()
        )));
    }
    Ok(())
}

/// Per-channel VAF of predicted measured means.
pub fn vaf_mean(predicted: &[DVector<f64>], truth: &GroundTruthMoments) -> Result<Vec<Option<f64>>> {
    check_lengths(predicted.len(), truth)?;
    let dim = truth.dim();
    if predicted.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension("predicted mean dimension differs from ground truth".into()));
    }
    Ok((0..dim)
        .map(|i| {
            let p: Vec<f64> = predicted.iter().map(|v| v[i]).collect();
            let t: Vec<f64> = truth.m_hat.iter().map(|v| v[i]).collect();
            vaf(&p, &t)
        })
        .collect())
}

/// Per-entry VAF of predicted measured covariances.
pub fn vaf_cov(predicted: &[DMatrix<f64>], truth: &GroundTruthMoments, mode: CovMode) -> Result<CovVaf> {
    check_lengths(predicted.len(), truth)?;
    let dim = truth.dim();
    if predicted.iter().any(|p| p.shape() != (dim, dim)) {
        return Err(Error::Dimension("predicted covariance dimension differs from ground truth".into()));
    }
    let entry = |i: usize, j: usize| {
        let p: Vec<f64> = predicted.iter().map(|c| c[(i, j)]).collect();
        let t: Vec<f64> = truth.omega_hat.iter().map(|c| c[(i, j)]).collect();
        vaf(&p, &t)
    };
    Ok(match mode {
        CovMode::Diagonal => CovVaf::Diagonal((0..dim).map(|i| entry(i, i)).collect()),
        CovMode::Full => CovVaf::Full((0..dim).map(|i| (0..dim).map(|j| entry(i, j)).collect()).collect()),
    })
}

/// Weighted mean of the VAF entries. Entries without a VAF (constant truth)
/// are dropped together with their weights.
pub fn j_isoc(m_vaf: &[Option<f64>], omega_vaf: &CovVaf, cfg: &ObjectiveConfig) -> Result<f64> {
    cfg.validate(m_vaf.len())?;
    let cov_entries: Vec<Option<f64>> = match (omega_vaf, cfg.mode) {
        (CovVaf::Diagonal(v), CovMode::Diagonal) => v.clone(),
        // vec(·) is column-major
        (CovVaf::Full(rows), CovMode::Full) => {
            let dim = rows.len();
            (0..dim * dim).map(|k| rows[k % dim][k / dim]).collect()
        }
        _ => return Err(Error::InvalidConfig("covariance VAF does not match objective mode".into())),
    };
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for (w, v) in cfg.w_m.iter().zip(m_vaf).chain(cfg.w_v.iter().zip(&cov_entries)) {
        if let Some(v) = v {
            numerator += w * v;
            denominator += w;
        }
    }
    if denominator <= 0.0 {
        return Err(Error::DegenerateTruth);
    }
    Ok(numerator / denominator)
}

/// VAF tables plus objective for a predicted measured trajectory.
pub fn fit_report(predicted: &GroundTruthMoments, truth: &GroundTruthMoments, cfg: &ObjectiveConfig) -> Result<FitReport> {
    let m_vaf = vaf_mean(&predicted.m_hat, truth)?;
    let omega_vaf = vaf_cov(&predicted.omega_hat, truth, cfg.mode)?;
    let j = j_isoc(&m_vaf, &omega_vaf, cfg)?;
    Ok(FitReport { m_vaf, omega_vaf, j_isoc: j })
}

/// One parameter error; `raw` entries carry the estimate itself because the
/// ground-truth value is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamError {
    pub value: f64,
    pub raw: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterErrors {
    pub delta_s: Vec<ParamError>,
    pub delta_sigma: Vec<ParamError>,
}

/// Relative errors of recovered parameters.
///
/// Weights are compared after normalizing both vectors by entry
/// `normalizer`, since cost weights are only identifiable up to scale:
/// `|1 - (s̃_i / s*_i)(s*_k / s̃_k)|`. Noise parameters use `|1 - σ̃_i / σ*_i|`.
pub fn parameter_errors(
    s_tilde: &[f64],
    s_star: &[f64],
    sigma_tilde: &[f64],
    sigma_star: &[f64],
    normalizer: usize,
) -> Result<ParameterErrors> {
    if s_tilde.len() != s_star.len() || sigma_tilde.len() != sigma_star.len() {
        return Err(Error::Dimension("estimated and true parameter vectors differ in length".into()));
    }
    let (Some(&norm_tilde), Some(&norm_star)) = (s_tilde.get(normalizer), s_star.get(normalizer)) else {
        return Err(Error::InvalidConfig(format!("normalizer index {normalizer} out of range")));
    };
    if norm_tilde == 0.0 || norm_star == 0.0 {
        return Err(Error::InvalidNormalizer);
    }
    let relative = |est: f64, truth: f64, scale: f64| {
        if truth == 0.0 {
            ParamError { value: est, raw: true }
        } else {
            ParamError { value: (1.0 - (est / truth) * scale).abs(), raw: false }
        }
    };
    Ok(ParameterErrors {
        delta_s: s_tilde
            .iter()
            .zip(s_star)
            .map(|(&e, &t)| relative(e, t, norm_star / norm_tilde))
            .collect(),
        delta_sigma: sigma_tilde.iter().zip(sigma_star).map(|(&e, &t)| relative(e, t, 1.0)).collect(),
    })
}
