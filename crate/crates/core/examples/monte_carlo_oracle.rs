//! Rolls out the LQS reaching loop with seeded noise and compares the sample
//! moments with the exact moment recursion.

use isoc_core::lqs::{self, LqsOptions};
use isoc_core::model::{build_reaching_model, ModelKind, ReachingConfig};
use isoc_core::montecarlo::{estimate_moments, sample_trajectories};
use isoc_core::objective::{vaf_cov, vaf_mean, CovMode};

fn main() -> isoc_core::Result<()> {
    let samples = std::env::args().nth(1).and_then(|v| v.parse().ok()).unwrap_or(5000);
    let bundle = build_reaching_model(ReachingConfig { kind: ModelKind::Lqs, ..Default::default() });
    let sys = &bundle.system;
    let noise = bundle.noise.assemble(&sys.b, &sys.h)?;
    let (gains, _) = lqs::solve(&bundle, LqsOptions::default())?;
    let exact = lqs::propagate_moments(sys, &gains, &noise)?.measured(sys);

    let batch = sample_trajectories(sys, &gains, &noise, samples, 7, ModelKind::Lqs)?;
    let sampled = estimate_moments(&batch)?;
    let m_vaf = vaf_mean(&sampled.m_hat, &exact)?;
    let v_vaf = vaf_cov(&sampled.omega_hat, &exact, CovMode::Diagonal)?;
    println!("{samples} rollouts of {} steps", batch.steps());
    println!("mean VAF     {m_vaf:?}");
    println!("variance VAF {:?}", v_vaf.diagonal());
    Ok(())
}
