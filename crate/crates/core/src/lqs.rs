//! Linear-quadratic sensorimotor control: LQG extended with control-dependent
//! motor noise `Σ ε_i C_i u_t` and state-dependent sensory noise
//! `Σ ϵ_i D_i x_t`.
//!
//! Separation no longer holds, so control and filter gains are found by
//! alternating a backward sweep for `L_t` (given `K_t`) with a forward sweep
//! for `K_t` (given `L_t`) until the gains stop changing. With the estimation
//! error `e_t = x_t - x̂_t` the cost-to-go is `xᵀ Z^x x + eᵀ Z^e e`, and the
//! forward sweep tracks the unconditional second moments `E[e eᵀ]`,
//! `E[x̂ x̂ᵀ]` and `E[x̂ eᵀ]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::lqg::{self, GainSchedule, MomentTrajectory};
use crate::model::{CostMatrices, ModelBundle, NoiseMatrices, SystemModel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqsOptions {
    pub max_iters: usize,
    /// Stop once the largest elementwise change of `L` and `K` between two
    /// sweeps falls below this value.
    pub tol: f64,
}

impl Default for LqsOptions {
    fn default() -> Self {
        Self { max_iters: 500, tol: 1e-9 }
    }
}

/// Riccati matrices of the last sweep plus convergence diagnostics.
#[derive(Clone, Debug)]
pub struct LqsSolverState {
    /// `Z^x_t`, `t = 0..=N`, with `Z^x_N = Q_N`.
    pub zx: Vec<DMatrix<f64>>,
    /// `Z^e_t`, `t = 0..=N`, with `Z^e_N = 0`.
    pub ze: Vec<DMatrix<f64>>,
    /// `E[e eᵀ]`, `t = 0..=N`, starting from `Ω^x_0`.
    pub pe: Vec<DMatrix<f64>>,
    /// `E[x̂ x̂ᵀ]`.
    pub pxh: Vec<DMatrix<f64>>,
    /// `E[x̂ eᵀ]`.
    pub pxhe: Vec<DMatrix<f64>>,
    /// `E[e x̂ᵀ]`.
    pub pexh: Vec<DMatrix<f64>>,
    pub iteration: usize,
    pub gain_delta: f64,
    pub converged: bool,
}

/// Diagnostics written next to forward solutions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqsDiagnostics {
    pub iterations: usize,
    pub gain_delta: f64,
    pub converged: bool,
}

impl LqsSolverState {
    pub fn diagnostics(&self) -> LqsDiagnostics {
        LqsDiagnostics { iterations: self.iteration, gain_delta: self.gain_delta, converged: self.converged }
    }
}

/// Backward sweep: control gains for fixed filter gains `k`.
///
/// `L_t = (R + Bᵀ Z^x B + Σ C_iᵀ (Z^x + Z^e) C_i)⁻¹ Bᵀ Z^x A`,
/// `Z^x_t = Q + Aᵀ Z^x (A - B L_t) + Σ D_iᵀ K_tᵀ Z^e K_t D_i`,
/// `Z^e_t = Aᵀ Z^x B L_t + (A - K_t H)ᵀ Z^e (A - K_t H)`.
pub fn control_sweep(
    sys: &SystemModel,
    cost: &CostMatrices,
    noise: &NoiseMatrices,
    k: &[DMatrix<f64>],
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let n_steps = sys.horizon;
    let (a, b, h) = (&sys.a, &sys.b, &sys.h);
    let n = sys.n();
    let mut zx = cost.q_n.clone();
    let mut ze = DMatrix::zeros(n, n);
    let mut gains = vec![DMatrix::zeros(0, 0); n_steps];
    let mut zx_all = vec![DMatrix::zeros(0, 0); n_steps + 1];
    let mut ze_all = vec![DMatrix::zeros(0, 0); n_steps + 1];
    zx_all[n_steps] = zx.clone();
    ze_all[n_steps] = ze.clone();
    for t in (0..n_steps).rev() {
        let bt_z = b.transpose() * &zx;
        let mut lhs = &cost.r + &bt_z * b;
        if !noise.c.is_empty() {
            let z_sum = &zx + &ze;
            for c in &noise.c {
                lhs += c.transpose() * &z_sum * c;
            }
        }
        let l = linalg::cholesky_solve(&lhs, &(&bt_z * a))
            .map_err(|e| Error::Numerical(format!("control gain at t={t}: {e}")))?;
        let kt = &k[t];
        let ak = a - kt * h;
        let mut zx_next = &cost.q + a.transpose() * &zx * (a - b * &l);
        for d in &noise.d {
            let kd = kt * d;
            zx_next += kd.transpose() * &ze * kd;
        }
        let mut ze_next = a.transpose() * &zx * b * &l + ak.transpose() * &ze * &ak;
        linalg::symmetrize(&mut zx_next);
        linalg::symmetrize(&mut ze_next);
        if !linalg::all_finite(&zx_next) || !linalg::all_finite(&ze_next) {
            return Err(Error::Numerical(format!("non-finite cost-to-go at t={t}")));
        }
        zx = zx_next;
        ze = ze_next;
        gains[t] = l;
        zx_all[t] = zx.clone();
        ze_all[t] = ze.clone();
    }
    Ok((gains, zx_all, ze_all))
}

/// Second moments tracked by the forward sweep, `t = 0..=N`.
#[derive(Clone, Debug)]
pub struct EstimatorMoments {
    pub pe: Vec<DMatrix<f64>>,
    pub pxh: Vec<DMatrix<f64>>,
    pub pxhe: Vec<DMatrix<f64>>,
}

/// Forward sweep: filter gains for fixed control gains `l`.
///
/// `K_t = A P^e Hᵀ (H P^e Hᵀ + Ω^ω + Σ D_i E[x xᵀ] D_iᵀ)⁻¹` with
/// `E[x xᵀ] = P^e + P^{x̂} + P^{x̂e} + P^{ex̂}`. The moment updates are
/// written for an arbitrary `K_t`; they reduce to the familiar short forms
/// when `K_t` is the minimizer above.
pub fn filter_sweep(
    sys: &SystemModel,
    noise: &NoiseMatrices,
    l: &[DMatrix<f64>],
) -> Result<(Vec<DMatrix<f64>>, EstimatorMoments)> {
    let (a, b, h) = (&sys.a, &sys.b, &sys.h);
    let n = sys.n();
    let mut pe = sys.omega_x0.clone();
    let mut pxh = linalg::outer(&sys.x0_mean);
    let mut pxhe = DMatrix::zeros(n, n);
    let mut gains = Vec::with_capacity(sys.horizon);
    let mut moments = EstimatorMoments {
        pe: vec![pe.clone()],
        pxh: vec![pxh.clone()],
        pxhe: vec![pxhe.clone()],
    };
    for t in 0..sys.horizon {
        let lt = &l[t];
        let mut obs_noise = noise.omega_omega.clone();
        if !noise.d.is_empty() {
            let second = &pe + &pxh + &pxhe + pxhe.transpose();
            for d in &noise.d {
                obs_noise += d * &second * d.transpose();
            }
        }
        let innovation = h * &pe * h.transpose() + &obs_noise;
        let k = linalg::solve_spd_jittered(&innovation, &(h * &pe * a.transpose()))
            .map_err(|e| Error::Numerical(format!("filter gain at t={t}: {e}")))?
            .transpose();
        let ak = a - &k * h;
        let al = a - b * lt;
        let kh = &k * h;
        let injected = &k * &obs_noise * k.transpose();

        let mut pe_next = &ak * &pe * ak.transpose() + &noise.omega_xi;
        pe_next += &noise.omega_eta;
        if !noise.c.is_empty() {
            let control_second = lt * &pxh * lt.transpose();
            for c in &noise.c {
                pe_next += c * &control_second * c.transpose();
            }
        }
        pe_next += &injected;

        let cross = &al * &pxhe * kh.transpose();
        let mut pxh_next = &al * &pxh * al.transpose() + &kh * &pe * kh.transpose() + &cross + cross.transpose();
        pxh_next += &injected + &noise.omega_eta;

        let pxhe_next = &al * &pxhe * ak.transpose() + &kh * &pe * ak.transpose() - &injected - &noise.omega_eta;

        linalg::symmetrize(&mut pe_next);
        linalg::symmetrize(&mut pxh_next);
        if !linalg::all_finite(&pe_next) || !linalg::all_finite(&pxh_next) || !linalg::all_finite(&pxhe_next) {
            return Err(Error::Numerical(format!("non-finite estimator moments at t={t}")));
        }
        pe = pe_next;
        pxh = pxh_next;
        pxhe = pxhe_next;
        gains.push(k);
        moments.pe.push(pe.clone());
        moments.pxh.push(pxh.clone());
        moments.pxhe.push(pxhe.clone());
    }
    Ok((gains, moments))
}

/// Fixed-point iteration between [`control_sweep`] and [`filter_sweep`],
/// warm-started from the LQG filter gains for the same additive noise.
///
/// Hitting `max_iters` is not an error: the last iterate is returned with
/// `converged = false`.
pub fn lqs_gains(
    sys: &SystemModel,
    cost: &CostMatrices,
    noise: &NoiseMatrices,
    opts: LqsOptions,
) -> Result<(GainSchedule, LqsSolverState)> {
    if opts.max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
    }
    let mut k = lqg::filter_gains(sys, noise)?;
    let mut previous_l: Option<Vec<DMatrix<f64>>> = None;
    let mut iteration = 0;
    loop {
        iteration += 1;
        let (l, zx, ze) = control_sweep(sys, cost, noise, &k)?;
        let (k_next, est) = filter_sweep(sys, noise, &l)?;
        let dk = k.iter().zip(&k_next).map(|(x, y)| linalg::max_abs_diff(x, y)).fold(0.0, f64::max);
        let dl = match &previous_l {
            Some(prev) => prev.iter().zip(&l).map(|(x, y)| linalg::max_abs_diff(x, y)).fold(0.0, f64::max),
            None => f64::INFINITY,
        };
        let gain_delta = dk.max(dl);
        let converged = gain_delta < opts.tol;
        if converged || iteration >= opts.max_iters {
            let pexh = est.pxhe.iter().map(|m| m.transpose()).collect();
            let state = LqsSolverState {
                zx,
                ze,
                pe: est.pe,
                pxh: est.pxh,
                pxhe: est.pxhe,
                pexh,
                iteration,
                gain_delta,
                converged,
            };
            return Ok((GainSchedule { l, k: k_next }, state));
        }
        k = k_next;
        previous_l = Some(l);
    }
}

/// Solves the forward LQS problem for a bundle.
pub fn solve(bundle: &ModelBundle, opts: LqsOptions) -> Result<(GainSchedule, LqsSolverState)> {
    let sys = &bundle.system;
    let cost = bundle.cost.assemble(sys.n(), sys.m_inputs())?;
    let noise = bundle.noise.assemble(&sys.b, &sys.h)?;
    lqs_gains(sys, &cost, &noise, opts)
}

/// Mean and covariance of the LQS loop for given gains, including the
/// internal-model noise and the motor/sensory signal-dependent terms.
pub fn propagate_moments(sys: &SystemModel, gains: &GainSchedule, noise: &NoiseMatrices) -> Result<MomentTrajectory> {
    lqg::propagate(sys, gains, noise, true)
}
