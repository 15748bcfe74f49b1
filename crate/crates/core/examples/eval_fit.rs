//! Scores a perturbed model against reaching-task ground truth with the VAF
//! metrics and the weighted fit objective.

use isoc_core::isoc::predict;
use isoc_core::lqs::LqsOptions;
use isoc_core::model::{build_reaching_model, ModelKind, ReachingConfig};
use isoc_core::objective::{fit_report, parameter_errors, ObjectiveConfig};

fn main() -> isoc_core::Result<()> {
    let truth_model = build_reaching_model(ReachingConfig::default());
    let truth = predict(&truth_model, ModelKind::Lqg, LqsOptions::default())?;

    let mut s = truth_model.cost.s.clone();
    s[1] *= 3.0;
    let mut sigma = truth_model.noise.sigma_vector();
    sigma.iter_mut().for_each(|v| *v *= 1.5);
    let guess = truth_model.with_parameters(&s, &sigma)?;
    let predicted = predict(&guess, ModelKind::Lqg, LqsOptions::default())?;

    let cfg = ObjectiveConfig::diagonal(truth.dim(), 0.5, 0.5);
    let report = fit_report(&predicted, &truth, &cfg)?;
    println!("mean VAF     {:?}", report.m_vaf);
    println!("variance VAF {:?}", report.omega_vaf.diagonal());
    println!("J = {:.4}", report.j_isoc);
    let errors = parameter_errors(&s, &truth_model.cost.s, &sigma, &truth_model.noise.sigma_vector(), 0)?;
    println!("relative error of s2 {:.2}", errors.delta_s[1].value);
    Ok(())
}
