//! Recovers the reaching-task cost weights and noise scales from analytic
//! LQG ground truth with a reduced search budget.

use isoc_core::isoc::{isoc_solve, predict, reaching_search_config};
use isoc_core::lqs::LqsOptions;
use isoc_core::model::{build_reaching_model, ModelKind, ReachingConfig};
use isoc_core::objective::parameter_errors;

fn main() -> isoc_core::Result<()> {
    let workers = std::env::var("ISOC_WORKERS").ok().and_then(|v| v.parse().ok()).unwrap_or(8);
    let bundle = build_reaching_model(ReachingConfig::default());
    let truth = predict(&bundle, ModelKind::Lqg, LqsOptions::default())?;
    let cfg = reaching_search_config(ModelKind::Lqg, 6, 10, 2);
    let result = isoc_solve(&truth, &bundle, &cfg, workers)?;

    println!("evaluations {} in {:.1} s", result.evaluations, result.wall_time_s);
    println!("mean VAF     {:?}", result.report.m_vaf);
    println!("variance VAF {:?}", result.report.omega_vaf.diagonal());
    let errors = parameter_errors(&result.s_tilde, &bundle.cost.s, &result.sigma_tilde, &bundle.noise.sigma_vector(), 0)?;
    for (i, (s, e)) in result.s_free.iter().zip(&errors.delta_s).enumerate() {
        println!("s{:<2} {:>12.4e}  rel. error {:.3}", i + 1, s, e.value);
    }
    for (i, s) in result.sigma_free.iter().enumerate() {
        println!("sigma{:<2} {:>9.4}", i + 1, s);
    }
    Ok(())
}
