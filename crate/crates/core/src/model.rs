//! Problem definition: plant, cost basis, noise structure, free-parameter
//! layout, ground-truth moments and the planar reaching task.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, PSD_REL_TOL};
use crate::{Error, Result};

/// Row-major nested-array (de)serialization for dense matrices and vectors.
pub(crate) mod mat {
    use nalgebra::{DMatrix, DVector};
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_row_iterator(nrows, ncols, rows.into_iter().flatten()))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        from_rows(Vec::<Vec<f64>>::deserialize(d)?).map_err(D::Error::custom)
    }

    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
            Vec::<Vec<Vec<f64>>>::deserialize(d)?
                .into_iter()
                .map(|m| from_rows(m).map_err(D::Error::custom))
                .collect()
        }
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(to_rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
            Option::<Vec<Vec<f64>>>::deserialize(d)?
                .map(|m| from_rows(m).map_err(D::Error::custom))
                .transpose()
        }
    }

    pub mod vector {
        use super::*;

        pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
            v.as_slice().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
            Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
        }
    }

    pub mod vectors {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
            Ok(Vec::<Vec<f64>>::deserialize(d)?
                .into_iter()
                .map(DVector::from_vec)
                .collect())
        }
    }
}

/// Which forward model a bundle is solved with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Lqg,
    Lqs,
}

/// Discrete-time linear plant `x' = A x + B u`, output `y = H x`, and the
/// selector `M` of states present in the ground-truth data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    #[serde(rename = "A", with = "mat")]
    pub a: DMatrix<f64>,
    #[serde(rename = "B", with = "mat")]
    pub b: DMatrix<f64>,
    #[serde(rename = "H", with = "mat")]
    pub h: DMatrix<f64>,
    #[serde(rename = "M", with = "mat")]
    pub m: DMatrix<f64>,
    #[serde(with = "mat::vector")]
    pub x0_mean: DVector<f64>,
    #[serde(rename = "Omega_x0", with = "mat")]
    pub omega_x0: DMatrix<f64>,
    /// Number of control steps; moments run over `t = 0..=N`.
    #[serde(rename = "N")]
    pub horizon: usize,
    /// Step duration in seconds. Metadata only.
    pub dt: f64,
}

impl SystemModel {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn r(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_measured(&self) -> usize {
        self.m.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 || !self.a.is_square() {
            return Err(Error::Dimension(format!("A must be square and non-empty, got {:?}", self.a.shape())));
        }
        if self.b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, expected {n}", self.b.nrows())));
        }
        if self.h.ncols() != n {
            return Err(Error::Dimension(format!("H has {} columns, expected {n}", self.h.ncols())));
        }
        if self.m.ncols() != n || self.m.nrows() == 0 {
            return Err(Error::Dimension(format!("M must be n̄×{n} with n̄ ≥ 1, got {:?}", self.m.shape())));
        }
        if self.x0_mean.len() != n {
            return Err(Error::Dimension(format!("x0_mean has length {}, expected {n}", self.x0_mean.len())));
        }
        if self.omega_x0.shape() != (n, n) {
            return Err(Error::Dimension(format!("Omega_x0 is {:?}, expected {n}×{n}", self.omega_x0.shape())));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidModel("horizon N must be positive".into()));
        }
        let finite = [&self.a, &self.b, &self.h, &self.omega_x0].iter().all(|m| linalg::all_finite(m))
            && self.x0_mean.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidModel("system matrices contain non-finite values".into()));
        }
        if !linalg::is_symmetric(&self.omega_x0, 1e-12) || !linalg::is_psd(&self.omega_x0, PSD_REL_TOL) {
            return Err(Error::InvalidModel("Omega_x0 must be symmetric positive semi-definite".into()));
        }
        self.measured_indices().map(|_| ())
    }

    /// State indices picked by the rows of `M`; each row must be a distinct
    /// standard unit vector.
    pub fn measured_indices(&self) -> Result<Vec<usize>> {
        let mut seen = HashSet::new();
        self.m
            .row_iter()
            .enumerate()
            .map(|(row, r)| {
                let ones: Vec<usize> = (0..r.len()).filter(|&j| r[j] == 1.0).collect();
                let zeros = r.iter().filter(|v| **v == 0.0).count();
                if ones.len() != 1 || zeros + 1 != r.len() || !seen.insert(ones[0]) {
                    return Err(Error::InvalidModel(format!("row {row} of M is not a distinct unit vector")));
                }
                Ok(ones[0])
            })
            .collect()
    }
}

/// Assembled cost matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrices {
    pub q_n: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Cost matrices written as weighted sums of rank-one basis terms
/// `Σ s_i q_i q_iᵀ`. `s` is ordered terminal, running, effort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(rename = "qN_basis", with = "mat::vectors")]
    pub qn_basis: Vec<DVector<f64>>,
    #[serde(rename = "qQ_basis", with = "mat::vectors")]
    pub qq_basis: Vec<DVector<f64>>,
    #[serde(rename = "qR_basis", with = "mat::vectors")]
    pub qr_basis: Vec<DVector<f64>>,
    pub s: Vec<f64>,
}

fn weighted_outer_sum(basis: &[DVector<f64>], weights: &[f64], dim: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(dim, dim);
    for (q, &w) in basis.iter().zip(weights) {
        for i in 0..dim {
            for j in 0..dim {
                acc[(i, j)] += w * (q[i] * q[j]);
            }
        }
    }
    acc
}

impl CostModel {
    pub fn len(&self) -> usize {
        self.qn_basis.len() + self.qq_basis.len() + self.qr_basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_weights(&self, s: Vec<f64>) -> Self {
        Self { s, ..self.clone() }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.s.len() != self.len() {
            return Err(Error::Dimension(format!("s has {} entries, basis has {}", self.s.len(), self.len())));
        }
        let dims_ok = self.qn_basis.iter().chain(&self.qq_basis).all(|q| q.len() == n)
            && self.qr_basis.iter().all(|q| q.len() == m);
        if !dims_ok {
            return Err(Error::Dimension(format!("basis vectors must have length {n} (state) or {m} (input)")));
        }
        if self.s.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidCost("weights must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Builds `Q_N`, `Q` and `R`; fails when `R` is not positive definite.
    pub fn assemble(&self, n: usize, m: usize) -> Result<CostMatrices> {
        self.validate(n, m)?;
        let (sn, rest) = self.s.split_at(self.qn_basis.len());
        let (sq, sr) = rest.split_at(self.qq_basis.len());
        let q_n = weighted_outer_sum(&self.qn_basis, sn, n);
        let q = weighted_outer_sum(&self.qq_basis, sq, n);
        let r = weighted_outer_sum(&self.qr_basis, sr, m);
        if m > 0 {
            let threshold = 1e-12 * r.trace();
            if !(r.trace() > 0.0) || linalg::min_eigenvalue(&r) <= threshold {
                return Err(Error::InvalidCost("assembled R is not positive definite".into()));
            }
        }
        Ok(CostMatrices { q_n, q, r })
    }
}

/// Assembled noise terms.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMatrices {
    pub omega_xi: DMatrix<f64>,
    pub omega_omega: DMatrix<f64>,
    pub omega_eta: DMatrix<f64>,
    /// Control-dependent scale matrices `C_i = σ_i^u B F_i`.
    pub c: Vec<DMatrix<f64>>,
    /// State-dependent scale matrices `D_i = σ_i^x H G_i`.
    pub d: Vec<DMatrix<f64>>,
}

impl NoiseMatrices {
    pub fn has_signal_dependent(&self) -> bool {
        !self.c.is_empty() || !self.d.is_empty()
    }
}

/// Additive and signal-dependent noise structure.
///
/// The flattened noise-parameter vector is `vec(Σ^ξ)` (column-major),
/// `vec(Σ^ω)` (column-major), then `σ^u`, then `σ^x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(rename = "Sigma_xi", with = "mat")]
    pub sigma_xi: DMatrix<f64>,
    #[serde(rename = "Sigma_omega", with = "mat")]
    pub sigma_omega: DMatrix<f64>,
    #[serde(rename = "F", with = "mat::list", default)]
    pub f: Vec<DMatrix<f64>>,
    #[serde(default)]
    pub sigma_u: Vec<f64>,
    #[serde(rename = "G", with = "mat::list", default)]
    pub g: Vec<DMatrix<f64>>,
    #[serde(default)]
    pub sigma_x: Vec<f64>,
    /// Internal-model noise covariance; zero when absent.
    #[serde(rename = "Omega_eta", with = "mat::opt", default, skip_serializing_if = "Option::is_none")]
    pub omega_eta: Option<DMatrix<f64>>,
}

impl NoiseModel {
    pub fn sigma_len(&self) -> usize {
        self.sigma_xi.len() + self.sigma_omega.len() + self.sigma_u.len() + self.sigma_x.len()
    }

    pub fn sigma_vector(&self) -> Vec<f64> {
        self.sigma_xi
            .as_slice()
            .iter()
            .chain(self.sigma_omega.as_slice())
            .chain(&self.sigma_u)
            .chain(&self.sigma_x)
            .copied()
            .collect()
    }

    /// Copy of `self` with every noise parameter replaced from a flattened vector.
    pub fn with_sigma_vector(&self, sigma: &[f64]) -> Result<Self> {
        if sigma.len() != self.sigma_len() {
            return Err(Error::Dimension(format!(
                "noise vector has {} entries, expected {}",
                sigma.len(),
                self.sigma_len()
            )));
        }
        let mut out = self.clone();
        let (xi, rest) = sigma.split_at(self.sigma_xi.len());
        let (om, rest) = rest.split_at(self.sigma_omega.len());
        let (su, sx) = rest.split_at(self.sigma_u.len());
        out.sigma_xi.as_mut_slice().copy_from_slice(xi);
        out.sigma_omega.as_mut_slice().copy_from_slice(om);
        out.sigma_u.copy_from_slice(su);
        out.sigma_x.copy_from_slice(sx);
        Ok(out)
    }

    pub fn validate(&self, sys: &SystemModel) -> Result<()> {
        let (n, m, r) = (sys.n(), sys.m_inputs(), sys.r());
        if self.sigma_xi.nrows() != n {
            return Err(Error::Dimension(format!("Sigma_xi has {} rows, expected {n}", self.sigma_xi.nrows())));
        }
        if self.sigma_omega.nrows() != r {
            return Err(Error::Dimension(format!("Sigma_omega has {} rows, expected {r}", self.sigma_omega.nrows())));
        }
        if self.f.len() != self.sigma_u.len() || self.f.iter().any(|f| f.shape() != (m, m)) {
            return Err(Error::Dimension(format!("need one {m}×{m} F per sigma_u entry")));
        }
        if self.g.len() != self.sigma_x.len() || self.g.iter().any(|g| g.shape() != (n, n)) {
            return Err(Error::Dimension(format!("need one {n}×{n} G per sigma_x entry")));
        }
        if self.sigma_u.iter().chain(&self.sigma_x).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidModel("signal-dependent noise scales must be finite and nonnegative".into()));
        }
        if !linalg::all_finite(&self.sigma_xi) || !linalg::all_finite(&self.sigma_omega) {
            return Err(Error::InvalidModel("additive noise scales must be finite".into()));
        }
        if let Some(eta) = &self.omega_eta {
            if eta.shape() != (n, n) {
                return Err(Error::Dimension(format!("Omega_eta is {:?}, expected {n}×{n}", eta.shape())));
            }
            if !linalg::is_symmetric(eta, 1e-12) || !linalg::is_psd(eta, PSD_REL_TOL) {
                return Err(Error::InvalidModel("Omega_eta must be symmetric positive semi-definite".into()));
            }
        }
        Ok(())
    }

    /// Builds `Ω^ξ`, `Ω^ω`, `Ω^η` and the `C_i`, `D_i` matrices.
    pub fn assemble(&self, b: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<NoiseMatrices> {
        let n = b.nrows();
        let m = b.ncols();
        if self.sigma_xi.nrows() != n || self.sigma_omega.nrows() != h.nrows() || h.ncols() != n {
            return Err(Error::Dimension("noise scales do not match B and H".into()));
        }
        if self.f.len() != self.sigma_u.len() || self.f.iter().any(|f| f.shape() != (m, m)) {
            return Err(Error::Dimension(format!("need one {m}×{m} F per sigma_u entry")));
        }
        if self.g.len() != self.sigma_x.len() || self.g.iter().any(|g| g.shape() != (n, n)) {
            return Err(Error::Dimension(format!("need one {n}×{n} G per sigma_x entry")));
        }
        let omega_eta = match &self.omega_eta {
            Some(eta) if eta.shape() == (n, n) => eta.clone(),
            Some(eta) => return Err(Error::Dimension(format!("Omega_eta is {:?}, expected {n}×{n}", eta.shape()))),
            None => DMatrix::zeros(n, n),
        };
        Ok(NoiseMatrices {
            omega_xi: &self.sigma_xi * self.sigma_xi.transpose(),
            omega_omega: &self.sigma_omega * self.sigma_omega.transpose(),
            omega_eta,
            c: self.f.iter().zip(&self.sigma_u).map(|(f, &s)| s * (b * f)).collect(),
            d: self.g.iter().zip(&self.sigma_x).map(|(g, &s)| s * (h * g)).collect(),
        })
    }
}

/// One free parameter: a single position in `s` / `σ`, or several positions
/// that always share one value (e.g. one `σ^u` scaling two `F_i`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSlot {
    Single(usize),
    Tied(Vec<usize>),
}

impl ParamSlot {
    pub fn indices(&self) -> &[usize] {
        match self {
            ParamSlot::Single(i) => std::slice::from_ref(i),
            ParamSlot::Tied(v) => v,
        }
    }
}

/// Which entries of `s` and of the flattened noise vector are optimized.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub free_s_indices: Vec<ParamSlot>,
    pub free_sigma_indices: Vec<ParamSlot>,
}

fn check_slots(slots: &[ParamSlot], len: usize, what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for slot in slots {
        if slot.indices().is_empty() {
            return Err(Error::InvalidConfig(format!("empty tied group in {what}")));
        }
        for &i in slot.indices() {
            if i >= len {
                return Err(Error::InvalidConfig(format!("{what} index {i} out of range (len {len})")));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidConfig(format!("{what} index {i} listed twice")));
            }
        }
    }
    Ok(())
}

/// Reads the free parameters out of a full vector (first index of each slot).
pub fn extract_free(slots: &[ParamSlot], full: &[f64]) -> Vec<f64> {
    slots.iter().map(|s| full[s.indices()[0]]).collect()
}

/// Writes free parameter values into a full vector.
pub fn inject_free(slots: &[ParamSlot], full: &mut [f64], values: &[f64]) {
    for (slot, &v) in slots.iter().zip(values) {
        for &i in slot.indices() {
            full[i] = v;
        }
    }
}

impl ParameterLayout {
    pub fn validate(&self, s_len: usize, sigma_len: usize) -> Result<()> {
        check_slots(&self.free_s_indices, s_len, "free_s_indices")?;
        check_slots(&self.free_sigma_indices, sigma_len, "free_sigma_indices")
    }
}

/// Mean and covariance of the measured states over `t = 0..=N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMoments {
    #[serde(with = "mat::vectors")]
    pub m_hat: Vec<DVector<f64>>,
    #[serde(with = "mat::list")]
    pub omega_hat: Vec<DMatrix<f64>>,
}

impl GroundTruthMoments {
    pub fn len(&self) -> usize {
        self.m_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m_hat.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.m_hat.first().map_or(0, DVector::len)
    }

    pub fn validate(&self, n_measured: usize, horizon: usize) -> Result<()> {
        if self.m_hat.len() != horizon + 1 || self.omega_hat.len() != horizon + 1 {
            return Err(Error::Dimension(format!(
                "ground truth has {} / {} time points, expected {}",
                self.m_hat.len(),
                self.omega_hat.len(),
                horizon + 1
            )));
        }
        for (t, (m, c)) in self.m_hat.iter().zip(&self.omega_hat).enumerate() {
            if m.len() != n_measured || c.shape() != (n_measured, n_measured) {
                return Err(Error::Dimension(format!("ground truth at t={t} does not have dimension {n_measured}")));
            }
            if !linalg::is_symmetric(c, 1e-8) || !linalg::is_psd(c, 1e-8) {
                return Err(Error::InvalidModel(format!("ground-truth covariance at t={t} is not symmetric PSD")));
            }
        }
        Ok(())
    }
}

/// Everything needed to solve a forward problem and to map free parameters.
/// Serialized as the JSON model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub system: SystemModel,
    pub cost: CostModel,
    pub noise: NoiseModel,
    #[serde(default)]
    pub layout: ParameterLayout,
    #[serde(default)]
    pub kind: ModelKind,
}

impl ModelBundle {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.cost.validate(self.system.n(), self.system.m_inputs())?;
        self.noise.validate(&self.system)?;
        self.layout.validate(self.cost.len(), self.noise.sigma_len())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: Self = serde_json::from_str(text)?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Copy with the full weight and noise-parameter vectors replaced.
    pub fn with_parameters(&self, s: &[f64], sigma: &[f64]) -> Result<Self> {
        Ok(Self {
            cost: self.cost.with_weights(s.to_vec()),
            noise: self.noise.with_sigma_vector(sigma)?,
            ..self.clone()
        })
    }
}

/// Settings of the planar point-to-point reaching task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReachingConfig {
    /// Target position `(p_x, p_y)` in metres.
    pub target: (f64, f64),
    pub kind: ModelKind,
}

impl Default for ReachingConfig {
    fn default() -> Self {
        Self { target: (0.1, 0.1), kind: ModelKind::Lqg }
    }
}

pub mod reaching {
    //! Constants of the reaching task and the indices of its parameters.

    pub const MASS: f64 = 1.0;
    pub const TAU_1: f64 = 0.04;
    pub const TAU_2: f64 = 0.04;
    pub const DT: f64 = 0.01;
    pub const HORIZON: usize = 41;
    /// Base states `p_x, p_y, ṗ_x, ṗ_y, f_x, f_y, g_x, g_y` plus two
    /// reference states.
    pub const N_BASE: usize = 8;
    pub const N_STATES: usize = 10;
    pub const N_OUTPUTS: usize = 6;
    pub const S_TERMINAL: [f64; 6] = [1.0, 1.0, 0.04, 0.04, 0.0004, 0.0004];
    pub const S_EFFORT: f64 = 1e-5 / 42.0;
    pub const SIGMA_XI_G: f64 = 1.5;
    pub const SIGMA_OMEGA: [f64; 6] = [0.02, 0.02, 0.2, 0.2, 1.0, 1.0];
    pub const SIGMA_U: f64 = 0.5;
    pub const SIGMA_X: f64 = 0.1;

    /// Flattened-σ index of diagonal entry `i` of `Σ^ξ`.
    pub const fn xi_diag(i: usize) -> usize {
        i * N_STATES + i
    }

    /// Flattened-σ index of diagonal entry `j` of `Σ^ω`.
    pub const fn omega_diag(j: usize) -> usize {
        N_STATES * N_STATES + j * N_OUTPUTS + j
    }

    /// Flattened-σ indices of the two `σ^u` entries (shared value).
    pub const SIGMA_U_INDICES: [usize; 2] = [N_STATES * N_STATES + N_OUTPUTS * N_OUTPUTS, N_STATES * N_STATES + N_OUTPUTS * N_OUTPUTS + 1];
    pub const SIGMA_X_INDEX: usize = N_STATES * N_STATES + N_OUTPUTS * N_OUTPUTS + 2;
}

/// Builds the augmented 10-state reaching model with its ground-truth
/// parameters and the free-parameter layout (8 weights; 14 noise parameters
/// for LQG, 16 for LQS).
pub fn build_reaching_model(cfg: ReachingConfig) -> ModelBundle {
    use reaching::*;
    let n = N_STATES;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for axis in 0..2 {
        let (p, v, f, g) = (axis, 2 + axis, 4 + axis, 6 + axis);
        a[(p, p)] = 1.0;
        a[(p, v)] = DT;
        a[(v, v)] = 1.0;
        a[(v, f)] = DT / MASS;
        a[(f, f)] = 1.0 - DT / TAU_2;
        a[(f, g)] = DT / TAU_2;
        a[(g, g)] = 1.0 - DT / TAU_1;
    }
    a[(8, 8)] = 1.0;
    a[(9, 9)] = 1.0;

    let mut b = DMatrix::<f64>::zeros(n, 2);
    b[(6, 0)] = DT / TAU_1;
    b[(7, 1)] = DT / TAU_1;

    let mut h = DMatrix::<f64>::zeros(N_OUTPUTS, n);
    let mut m = DMatrix::<f64>::zeros(4, n);
    for i in 0..N_OUTPUTS {
        h[(i, i)] = 1.0;
    }
    for i in 0..4 {
        m[(i, i)] = 1.0;
    }

    let mut x0_mean = DVector::zeros(n);
    x0_mean[8] = cfg.target.0;
    x0_mean[9] = cfg.target.1;

    let system = SystemModel {
        a,
        b: b.clone(),
        h: h.clone(),
        m,
        x0_mean,
        omega_x0: DMatrix::zeros(n, n),
        horizon: HORIZON,
        dt: DT,
    };

    let e = |i: usize| linalg::unit_vector(n, i);
    let qn_basis = vec![&e(0) - &e(8), &e(1) - &e(9), e(2), e(3), e(4), e(5)];
    let qr_basis = vec![linalg::unit_vector(2, 0), linalg::unit_vector(2, 1)];
    let mut s = S_TERMINAL.to_vec();
    s.extend([S_EFFORT, S_EFFORT]);
    let cost = CostModel { qn_basis, qq_basis: Vec::new(), qr_basis, s };

    let mut sigma_xi = DMatrix::<f64>::zeros(n, n);
    if cfg.kind == ModelKind::Lqg {
        sigma_xi[(6, 6)] = SIGMA_XI_G;
        sigma_xi[(7, 7)] = SIGMA_XI_G;
    }
    let sigma_omega = DMatrix::from_diagonal(&DVector::from_row_slice(&SIGMA_OMEGA));
    let noise = match cfg.kind {
        ModelKind::Lqg => NoiseModel {
            sigma_xi,
            sigma_omega,
            f: Vec::new(),
            sigma_u: Vec::new(),
            g: Vec::new(),
            sigma_x: Vec::new(),
            omega_eta: None,
        },
        ModelKind::Lqs => NoiseModel {
            sigma_xi,
            sigma_omega,
            f: vec![DMatrix::identity(2, 2), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])],
            sigma_u: vec![SIGMA_U, SIGMA_U],
            g: vec![DMatrix::identity(n, n)],
            sigma_x: vec![SIGMA_X],
            omega_eta: None,
        },
    };

    let mut free_sigma: Vec<ParamSlot> = (0..N_BASE).map(|i| ParamSlot::Single(xi_diag(i))).collect();
    free_sigma.extend((0..N_OUTPUTS).map(|j| ParamSlot::Single(omega_diag(j))));
    if cfg.kind == ModelKind::Lqs {
        free_sigma.push(ParamSlot::Tied(SIGMA_U_INDICES.to_vec()));
        free_sigma.push(ParamSlot::Single(SIGMA_X_INDEX));
    }
    let layout = ParameterLayout {
        free_s_indices: (0..8).map(ParamSlot::Single).collect(),
        free_sigma_indices: free_sigma,
    };

    ModelBundle { system, cost, noise, layout, kind: cfg.kind }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lqg() -> ModelBundle {
        build_reaching_model(ReachingConfig::default())
    }

    fn lqs() -> ModelBundle {
        build_reaching_model(ReachingConfig { kind: ModelKind::Lqs, ..Default::default() })
    }

    #[test]
    fn single_basis_cost() {
        let cost = CostModel {
            qn_basis: vec![linalg::unit_vector(3, 0), linalg::unit_vector(3, 1)],
            qq_basis: vec![],
            qr_basis: vec![linalg::unit_vector(1, 0)],
            s: vec![1.0, 0.0, 1.0],
        };
        let cm = cost.assemble(3, 1).unwrap();
        let mut expected = DMatrix::zeros(3, 3);
        expected[(0, 0)] = 1.0;
        assert_eq!(cm.q_n, expected);
        assert_eq!(cm.q, DMatrix::zeros(3, 3));
        assert_eq!(cm.r, DMatrix::identity(1, 1));
    }

    #[test]
    fn reaching_cost_matrices() {
        let b = lqg();
        let cm = b.cost.assemble(10, 2).unwrap();
        assert_eq!(cm.r, DMatrix::identity(2, 2) * (1e-5 / 42.0));
        // (x_N - x_ref) error coordinates for positions.
        assert_eq!(cm.q_n[(0, 0)], 1.0);
        assert_eq!(cm.q_n[(0, 8)], -1.0);
        assert_eq!(cm.q_n[(8, 8)], 1.0);
        assert_eq!(cm.q_n[(2, 2)], 0.04);
        assert_eq!(cm.q_n[(5, 5)], 0.0004);
        assert_eq!(cm.q_n[(6, 6)], 0.0);
    }

    #[test]
    fn zero_effort_weights_rejected() {
        let b = lqg();
        let zero = b.cost.with_weights(vec![0.0; 8]);
        assert!(matches!(zero.assemble(10, 2), Err(Error::InvalidCost(_))));
        let mut s = b.cost.s.clone();
        s[6] = 0.0;
        assert!(matches!(b.cost.with_weights(s).assemble(10, 2), Err(Error::InvalidCost(_))));
    }

    #[test]
    fn negative_weight_rejected() {
        let b = lqg();
        let mut s = b.cost.s.clone();
        s[0] = -1.0;
        assert!(b.cost.with_weights(s).assemble(10, 2).is_err());
    }

    #[test]
    fn zero_process_noise() {
        let b = lqs();
        let nm = b.noise.assemble(&b.system.b, &b.system.h).unwrap();
        assert_eq!(nm.omega_xi, DMatrix::zeros(10, 10));
    }

    #[test]
    fn control_noise_matrices() {
        let b = lqs();
        let nm = b.noise.assemble(&b.system.b, &b.system.h).unwrap();
        assert_eq!(nm.c[0], &b.system.b * 0.5);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(nm.c[1], 0.5 * (&b.system.b * rot));
        assert_eq!(nm.d[0], &b.system.h * 0.1);
    }

    #[test]
    fn reaching_dimensions() {
        let b = lqg();
        b.validate().unwrap();
        let s = &b.system;
        assert_eq!((s.n(), s.m_inputs(), s.r(), s.n_measured(), s.horizon), (10, 2, 6, 4, 41));
        assert_eq!(s.measured_indices().unwrap(), vec![0, 1, 2, 3]);
        lqs().validate().unwrap();
    }

    #[test]
    fn reaching_dynamics_rows() {
        let s = lqg().system;
        assert_eq!(s.a[(0, 0)], 1.0);
        assert_eq!(s.a[(0, 2)], 0.01);
        assert_eq!(s.a.row(0).iter().filter(|v| **v != 0.0).count(), 2);
        assert_eq!(s.a[(2, 4)], 0.01);
        assert_eq!(s.a[(4, 4)], 0.75);
        assert_eq!(s.a[(4, 6)], 0.25);
        assert_eq!(s.a[(6, 6)], 0.75);
        assert_eq!(s.b[(6, 0)], 0.25);
    }

    #[test]
    fn reference_states_are_constant_and_noise_free() {
        for b in [lqg(), lqs()] {
            let s = &b.system;
            for i in 8..10 {
                assert_eq!(s.a.row(i).transpose(), linalg::unit_vector(10, i));
                assert!(s.b.row(i).iter().all(|v| *v == 0.0));
                assert!(s.omega_x0.row(i).iter().all(|v| *v == 0.0));
            }
            assert_eq!((s.x0_mean[8], s.x0_mean[9]), (0.1, 0.1));
            let nm = b.noise.assemble(&s.b, &s.h).unwrap();
            for i in 8..10 {
                assert!(nm.omega_xi.row(i).iter().all(|v| *v == 0.0));
                for c in &nm.c {
                    assert!(c.row(i).iter().all(|v| *v == 0.0));
                }
            }
        }
    }

    #[test]
    fn sigma_layout_matches_flattening() {
        let b = lqs();
        let sigma = b.noise.sigma_vector();
        assert_eq!(sigma.len(), 100 + 36 + 2 + 1);
        let free = extract_free(&b.layout.free_sigma_indices, &sigma);
        let mut expected = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        expected.extend(reaching::SIGMA_OMEGA);
        expected.extend([0.5, 0.1]);
        assert_eq!(free, expected);
        let g = lqg();
        let free = extract_free(&g.layout.free_sigma_indices, &g.noise.sigma_vector());
        assert_eq!(&free[6..8], &[1.5, 1.5]);
    }

    #[test]
    fn tied_slot_writes_every_index() {
        let b = lqs();
        let mut sigma = b.noise.sigma_vector();
        let mut free = extract_free(&b.layout.free_sigma_indices, &sigma);
        free[14] = 0.9;
        inject_free(&b.layout.free_sigma_indices, &mut sigma, &free);
        let noise = b.noise.with_sigma_vector(&sigma).unwrap();
        assert_eq!(noise.sigma_u, vec![0.9, 0.9]);
    }

    #[test]
    fn layout_rejects_duplicates() {
        let layout = ParameterLayout {
            free_s_indices: vec![ParamSlot::Single(0), ParamSlot::Tied(vec![1, 0])],
            free_sigma_indices: vec![],
        };
        assert!(layout.validate(3, 0).is_err());
        let layout = ParameterLayout { free_s_indices: vec![ParamSlot::Single(5)], free_sigma_indices: vec![] };
        assert!(layout.validate(3, 0).is_err());
    }

    #[test]
    fn invalid_selector_rejected() {
        let mut b = lqg();
        b.system.m[(1, 0)] = 1.0;
        b.system.m[(1, 1)] = 0.0;
        assert!(b.validate().is_err());
    }

    #[test]
    fn non_psd_initial_covariance_rejected() {
        let mut b = lqg();
        b.system.omega_x0[(0, 0)] = -1.0;
        assert!(matches!(b.validate(), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn model_file_round_trip() {
        for b in [lqg(), lqs()] {
            let text = b.to_json().unwrap();
            assert_eq!(ModelBundle::from_json(&text).unwrap(), b);
        }
    }

    #[test]
    fn model_file_uses_row_major_arrays() {
        let value: serde_json::Value = serde_json::from_str(&lqg().to_json().unwrap()).unwrap();
        assert_eq!(value["system"]["A"][0][2], 0.01);
        assert_eq!(value["system"]["B"][6][0], 0.25);
        for key in ["system", "cost", "noise", "layout"] {
            assert!(value.get(key).is_some());
        }
    }

    proptest! {
        #[test]
        fn assembled_cost_is_symmetric_psd(
            weights in proptest::collection::vec(0.0f64..10.0, 5),
            basis in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 3),
        ) {
            let cost = CostModel {
                qn_basis: basis[..2].iter().map(|v| DVector::from_row_slice(v)).collect(),
                qq_basis: vec![DVector::from_row_slice(&basis[2])],
                qr_basis: vec![linalg::unit_vector(2, 0), linalg::unit_vector(2, 1)],
                s: vec![weights[0], weights[1], weights[2], weights[3] + 0.1, weights[4] + 0.1],
            };
            let cm = cost.assemble(3, 2).unwrap();
            for m in [&cm.q_n, &cm.q, &cm.r] {
                prop_assert_eq!(m.clone(), m.transpose());
                prop_assert!(linalg::min_eigenvalue(m) >= -1e-10 * m.norm().max(1e-300));
            }
        }

        #[test]
        fn matrices_round_trip_exactly(values in proptest::collection::vec(-1e6f64..1e6, 12)) {
            let m = DMatrix::from_row_slice(3, 4, &values);
            let json = serde_json::to_string(&mat::to_rows(&m)).unwrap();
            let back = mat::from_rows(serde_json::from_str(&json).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
