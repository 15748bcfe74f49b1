//! Linear-quadratic Gaussian control: Riccati gains and the exact mean and
//! covariance of the joint state/estimate process.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, block_diag};
use crate::model::{mat, CostMatrices, GroundTruthMoments, ModelBundle, NoiseMatrices, SystemModel};
use crate::{Error, Result};

/// Time-indexed control gains `L_t` (m×n) and filter gains `K_t` (n×r),
/// `t = 0..N-1`. The loop runs `u_t = -L_t x̂_t` and
/// `x̂_{t+1} = A x̂_t + B u_t + K_t (y_t - H x̂_t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    #[serde(rename = "L", with = "mat::list")]
    pub l: Vec<DMatrix<f64>>,
    #[serde(rename = "K", with = "mat::list")]
    pub k: Vec<DMatrix<f64>>,
}

impl GainSchedule {
    pub fn horizon(&self) -> usize {
        self.l.len()
    }

    pub fn check(&self, sys: &SystemModel) -> Result<()> {
        let n = sys.horizon;
        if self.l.len() != n || self.k.len() != n {
            return Err(Error::Dimension(format!(
                "gain schedule has {}/{} entries, expected {n}",
                self.l.len(),
                self.k.len()
            )));
        }
        let (nx, m, r) = (sys.n(), sys.m_inputs(), sys.r());
        if self.l.iter().any(|l| l.shape() != (m, nx)) || self.k.iter().any(|k| k.shape() != (nx, r)) {
            return Err(Error::Dimension("gain matrices do not match the system".into()));
        }
        Ok(())
    }

    /// Largest elementwise change in `L` or `K` between two schedules.
    pub fn max_abs_diff(&self, other: &GainSchedule) -> f64 {
        let dl = self.l.iter().zip(&other.l).map(|(a, b)| linalg::max_abs_diff(a, b));
        let dk = self.k.iter().zip(&other.k).map(|(a, b)| linalg::max_abs_diff(a, b));
        dl.chain(dk).fold(0.0, f64::max)
    }
}

/// Joint moments of `(x_t, x̂_t)` for `t = 0..=N`: stacked means of length
/// 2n and 2n×2n covariances with blocks `Ω^x`, `Ω^{xx̂}`, `Ω^{x̂x}`, `Ω^{x̂}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory {
    #[serde(with = "mat::vectors")]
    pub mean: Vec<DVector<f64>>,
    #[serde(with = "mat::list")]
    pub cov: Vec<DMatrix<f64>>,
}

impl MomentTrajectory {
    pub fn state_dim(&self) -> usize {
        self.mean.first().map_or(0, |m| m.len() / 2)
    }

    pub fn state_mean(&self, t: usize) -> DVector<f64> {
        let n = self.state_dim();
        self.mean[t].rows(0, n).into_owned()
    }

    pub fn estimate_mean(&self, t: usize) -> DVector<f64> {
        let n = self.state_dim();
        self.mean[t].rows(n, n).into_owned()
    }

    pub fn state_cov(&self, t: usize) -> DMatrix<f64> {
        let n = self.state_dim();
        self.cov[t].view((0, 0), (n, n)).into_owned()
    }

    pub fn estimate_cov(&self, t: usize) -> DMatrix<f64> {
        let n = self.state_dim();
        self.cov[t].view((n, n), (n, n)).into_owned()
    }

    /// `M E[x_t]` and `M Ω^x_t Mᵀ`.
    pub fn measured(&self, sys: &SystemModel) -> GroundTruthMoments {
        let mt = sys.m.transpose();
        GroundTruthMoments {
            m_hat: (0..self.mean.len()).map(|t| &sys.m * self.state_mean(t)).collect(),
            omega_hat: (0..self.cov.len()).map(|t| &sys.m * self.state_cov(t) * &mt).collect(),
        }
    }
}

/// Control gains together with the cost-to-go matrices `Z_t`, `t = 0..=N`.
pub fn control_gains_with_cost_to_go(
    sys: &SystemModel,
    cost: &CostMatrices,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let n_steps = sys.horizon;
    let (a, b) = (&sys.a, &sys.b);
    let mut z = cost.q_n.clone();
    let mut gains = vec![DMatrix::zeros(0, 0); n_steps];
    let mut cost_to_go = vec![DMatrix::zeros(0, 0); n_steps + 1];
    cost_to_go[n_steps] = z.clone();
    for t in (0..n_steps).rev() {
        let bt_z = b.transpose() * &z;
        let lhs = &cost.r + &bt_z * b;
        let l = linalg::cholesky_solve(&lhs, &(&bt_z * a))
            .map_err(|e| Error::Numerical(format!("control gain at t={t}: {e}")))?;
        let closed = a - b * &l;
        z = &cost.q + a.transpose() * &z * closed;
        linalg::symmetrize(&mut z);
        if !linalg::all_finite(&z) {
            return Err(Error::Numerical(format!("non-finite cost-to-go at t={t}")));
        }
        gains[t] = l;
        cost_to_go[t] = z.clone();
    }
    Ok((gains, cost_to_go))
}

/// `L_t = (R + Bᵀ Z_{t+1} B)⁻¹ Bᵀ Z_{t+1} A` with `Z_N = Q_N` and
/// `Z_t = Q + Aᵀ Z_{t+1} (A - B L_t)`.
pub fn control_gains(sys: &SystemModel, cost: &CostMatrices) -> Result<Vec<DMatrix<f64>>> {
    control_gains_with_cost_to_go(sys, cost).map(|(l, _)| l)
}

/// Filter gains and error covariances `P_t`, `t = 0..=N`.
pub fn filter_gains_with_covariance(
    sys: &SystemModel,
    noise: &NoiseMatrices,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let (a, h) = (&sys.a, &sys.h);
    let mut p = sys.omega_x0.clone();
    let mut gains = Vec::with_capacity(sys.horizon);
    let mut covs = Vec::with_capacity(sys.horizon + 1);
    covs.push(p.clone());
    for t in 0..sys.horizon {
        let innovation = h * &p * h.transpose() + &noise.omega_omega;
        let k = linalg::solve_spd_jittered(&innovation, &(h * &p * a.transpose()))
            .map_err(|e| Error::Numerical(format!("filter gain at t={t}: {e}")))?
            .transpose();
        let ak = a - &k * h;
        p = &ak * &p * ak.transpose() + &noise.omega_xi + &k * &noise.omega_omega * k.transpose();
        linalg::symmetrize(&mut p);
        if !linalg::all_finite(&p) {
            return Err(Error::Numerical(format!("non-finite estimation covariance at t={t}")));
        }
        gains.push(k);
        covs.push(p.clone());
    }
    Ok((gains, covs))
}

/// `K_t = A P_t Hᵀ (H P_t Hᵀ + Ω^ω)⁻¹` with `P_0 = Ω^x_0` and
/// `P_{t+1} = (A - K_t H) P_t (A - K_t H)ᵀ + Ω^ξ + K_t Ω^ω K_tᵀ`.
pub fn filter_gains(sys: &SystemModel, noise: &NoiseMatrices) -> Result<Vec<DMatrix<f64>>> {
    filter_gains_with_covariance(sys, noise).map(|(k, _)| k)
}

/// Solves the forward LQG problem for a bundle.
pub fn solve(bundle: &ModelBundle) -> Result<GainSchedule> {
    let sys = &bundle.system;
    let cost = bundle.cost.assemble(sys.n(), sys.m_inputs())?;
    let noise = bundle.noise.assemble(&sys.b, &sys.h)?;
    Ok(GainSchedule { l: control_gains(sys, &cost)?, k: filter_gains(sys, &noise)? })
}

/// Closed-loop propagator `[A, -B L; K H, A - K H - B L]`.
pub(crate) fn loop_matrix(sys: &SystemModel, l: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sys.n();
    let bl = &sys.b * l;
    let kh = k * &sys.h;
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    out.view_mut((0, n), (n, n)).copy_from(&(-&bl));
    out.view_mut((n, 0), (n, n)).copy_from(&kh);
    out.view_mut((n, n), (n, n)).copy_from(&(&sys.a - &kh - &bl));
    out
}

/// Shared moment recursion. With `signal_dependent` the internal-model noise
/// and the `C_i`/`D_i` terms are included.
pub(crate) fn propagate(
    sys: &SystemModel,
    gains: &GainSchedule,
    noise: &NoiseMatrices,
    signal_dependent: bool,
) -> Result<MomentTrajectory> {
    gains.check(sys)?;
    let n = sys.n();
    let mut mean = DVector::zeros(2 * n);
    mean.rows_mut(0, n).copy_from(&sys.x0_mean);
    mean.rows_mut(n, n).copy_from(&sys.x0_mean);
    let mut cov = block_diag(&sys.omega_x0, &DMatrix::zeros(n, n));
    let mut means = Vec::with_capacity(sys.horizon + 1);
    let mut covs = Vec::with_capacity(sys.horizon + 1);
    means.push(mean.clone());
    covs.push(cov.clone());
    for t in 0..sys.horizon {
        let (l, k) = (&gains.l[t], &gains.k[t]);
        let big_a = loop_matrix(sys, l, k);
        let mut estimate_noise = k * &noise.omega_omega * k.transpose();
        if signal_dependent {
            estimate_noise = &noise.omega_eta + estimate_noise;
        }
        let mut next = &big_a * &cov * big_a.transpose() + block_diag(&noise.omega_xi, &estimate_noise);
        if signal_dependent && noise.has_signal_dependent() {
            let x_mean = mean.rows(0, n).into_owned();
            let xh_mean = mean.rows(n, n).into_owned();
            let x_second = cov.view((0, 0), (n, n)) + linalg::outer(&x_mean);
            let xh_second = cov.view((n, n), (n, n)) + linalg::outer(&xh_mean);
            let control_second = l * xh_second * l.transpose();
            let mut motor = DMatrix::zeros(n, n);
            for c in &noise.c {
                motor += c * &control_second * c.transpose();
            }
            let mut sensory = DMatrix::zeros(n, n);
            for d in &noise.d {
                let kd = k * d;
                sensory += &kd * &x_second * kd.transpose();
            }
            next += block_diag(&motor, &sensory);
        }
        linalg::symmetrize(&mut next);
        mean = &big_a * &mean;
        if !linalg::all_finite(&next) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite moments at t={}", t + 1)));
        }
        cov = next;
        means.push(mean.clone());
        covs.push(cov.clone());
    }
    Ok(MomentTrajectory { mean: means, cov: covs })
}

/// Mean and covariance of the LQG estimation-control loop for given gains.
pub fn propagate_moments(sys: &SystemModel, gains: &GainSchedule, noise: &NoiseMatrices) -> Result<MomentTrajectory> {
    propagate(sys, gains, noise, false)
}
