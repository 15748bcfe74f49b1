//! Seeded simulation of the closed estimation-control loop.
//!
//! Sample `k` draws all of its noise from `ChaCha8Rng::seed_from_u64(seed)`
//! switched to stream `k`, so a batch depends only on `(seed, K, mode)` and
//! not on the number of worker threads or the order samples are computed in.
//! Per time step the draws are, in order: the process noise (n values), the
//! observation noise (r values), and in LQS mode the internal noise (n),
//! one scalar per control-dependent term and one per state-dependent term.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::psd_sqrt;
use crate::lqg::GainSchedule;
use crate::model::{GroundTruthMoments, ModelKind, NoiseMatrices, SystemModel};
use crate::{Error, Result};

/// Measured-state realizations `M x_t`, stored sample-major then time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    pub seed: u64,
    pub mode: ModelKind,
    samples: usize,
    steps: usize,
    dim: usize,
    data: Vec<f64>,
}

/// JSON sidecar stored next to a batch CSV.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchMeta {
    pub seed: u64,
    #[serde(rename = "K")]
    pub samples: usize,
    pub mode: ModelKind,
}

impl TrajectoryBatch {
    pub fn from_parts(meta: BatchMeta, steps: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != meta.samples * steps * dim {
            return Err(Error::Dimension(format!(
                "batch data has {} values, expected {}x{}x{}",
                data.len(),
                meta.samples,
                steps,
                dim
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("batch contains non-finite values".into()));
        }
        Ok(Self { seed: meta.seed, mode: meta.mode, samples: meta.samples, steps, dim, data })
    }

    pub fn meta(&self) -> BatchMeta {
        BatchMeta { seed: self.seed, samples: self.samples, mode: self.mode }
    }

    /// Number of samples `K`.
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Number of recorded time points `N + 1`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, sample: usize, t: usize) -> &[f64] {
        let start = (sample * self.steps + t) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

struct LoopNoise {
    xi: DMatrix<f64>,
    omega: DMatrix<f64>,
    eta: Option<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    d: Vec<DMatrix<f64>>,
}

fn normals(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

fn simulate(
    sys: &SystemModel,
    gains: &GainSchedule,
    noise: &LoopNoise,
    x0_root: &DMatrix<f64>,
    seed: u64,
    stream: u64,
    out: &mut [f64],
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let (n, r) = (sys.n(), sys.r());
    let dim = sys.n_measured();
    let mut x = &sys.x0_mean + x0_root * normals(&mut rng, n);
    let mut xh = sys.x0_mean.clone();
    out[..dim].copy_from_slice((&sys.m * &x).as_slice());
    for t in 0..sys.horizon {
        let u = -&gains.l[t] * &xh;
        let alpha = normals(&mut rng, n);
        let beta = normals(&mut rng, r);
        let mut y = &sys.h * &x + &noise.omega * beta;
        let mut next = &sys.a * &x + &sys.b * &u + &noise.xi * alpha;
        let mut next_h = &sys.a * &xh + &sys.b * &u;
        if let Some(eta) = &noise.eta {
            next_h += eta * normals(&mut rng, n);
            for c in &noise.c {
                let e: f64 = StandardNormal.sample(&mut rng);
                next += e * (c * &u);
            }
            for d in &noise.d {
                let e: f64 = StandardNormal.sample(&mut rng);
                y += e * (d * &x);
            }
        }
        next_h += &gains.k[t] * (y - &sys.h * &xh);
        x = next;
        xh = next_h;
        let slot = (t + 1) * dim;
        out[slot..slot + dim].copy_from_slice((&sys.m * &x).as_slice());
    }
}

/// Simulates `samples` independent rollouts of plant, observation, control
/// `u_t = -L_t x̂_t` and filter, recording `M x_t` for `t = 0..=N`.
///
/// In [`ModelKind::Lqg`] mode only the additive process and observation
/// noise act; LQS mode adds internal-model, control- and state-dependent
/// noise. Runs on the current rayon pool.
pub fn sample_trajectories(
    sys: &SystemModel,
    gains: &GainSchedule,
    noise: &NoiseMatrices,
    samples: usize,
    seed: u64,
    mode: ModelKind,
) -> Result<TrajectoryBatch> {
    gains.check(sys)?;
    if samples == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    let lqs = mode == ModelKind::Lqs;
    let loop_noise = LoopNoise {
        xi: psd_sqrt(&noise.omega_xi),
        omega: psd_sqrt(&noise.omega_omega),
        eta: lqs.then(|| psd_sqrt(&noise.omega_eta)),
        c: if lqs { noise.c.clone() } else { Vec::new() },
        d: if lqs { noise.d.clone() } else { Vec::new() },
    };
    let x0_root = psd_sqrt(&sys.omega_x0);
    let steps = sys.horizon + 1;
    let dim = sys.n_measured();
    let mut data = vec![0.0; samples * steps * dim];
    data.par_chunks_mut(steps * dim).enumerate().for_each(|(k, chunk)| {
        simulate(sys, gains, &loop_noise, &x0_root, seed, k as u64, chunk);
    });
    TrajectoryBatch::from_parts(BatchMeta { seed, samples, mode }, steps, dim, data)
}

/// Sample mean and unbiased (`K - 1`) sample covariance per time point.
pub fn estimate_moments(batch: &TrajectoryBatch) -> Result<GroundTruthMoments> {
    let k = batch.samples();
    if k < 2 {
        return Err(Error::InsufficientSamples(k));
    }
    let dim = batch.dim();
    let mut m_hat = Vec::with_capacity(batch.steps());
    let mut omega_hat = Vec::with_capacity(batch.steps());
    for t in 0..batch.steps() {
        // deviations from the first sample keep identical samples exactly degenerate
        let pivot = DVector::from_column_slice(batch.get(0, t));
        let mut shift = DVector::zeros(dim);
        let mut scatter = DMatrix::zeros(dim, dim);
        for s in 1..k {
            let dev = DVector::from_column_slice(batch.get(s, t)) - &pivot;
            shift += &dev;
            scatter.ger(1.0, &dev, &dev, 1.0);
        }
        shift /= k as f64;
        scatter.ger(-(k as f64), &shift, &shift, 1.0);
        let mut cov = scatter / (k - 1) as f64;
        crate::linalg::symmetrize(&mut cov);
        m_hat.push(pivot + shift);
        omega_hat.push(cov);
    }
    Ok(GroundTruthMoments { m_hat, omega_hat })
}
