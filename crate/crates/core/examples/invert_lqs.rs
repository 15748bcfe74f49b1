//! Recovers the motor-noise scale, the state-noise scale and the two
//! terminal position weights of the LQS reaching task, all other
//! parameters held at their true values.

use isoc_core::isoc::{isoc_solve, predict, GridSearchConfig, IsocConfig};
use isoc_core::lqs::LqsOptions;
use isoc_core::model::{build_reaching_model, reaching, ModelKind, ParamSlot, ParameterLayout, ReachingConfig};
use isoc_core::objective::{parameter_errors, ObjectiveConfig};

fn main() -> isoc_core::Result<()> {
    let workers = std::env::var("ISOC_WORKERS").ok().and_then(|v| v.parse().ok()).unwrap_or(8);
    let mut bundle = build_reaching_model(ReachingConfig { kind: ModelKind::Lqs, ..Default::default() });
    bundle.layout = ParameterLayout {
        free_s_indices: vec![ParamSlot::Single(0), ParamSlot::Single(1)],
        free_sigma_indices: vec![
            ParamSlot::Tied(reaching::SIGMA_U_INDICES.to_vec()),
            ParamSlot::Single(reaching::SIGMA_X_INDEX),
        ],
    };
    let truth = predict(&bundle, ModelKind::Lqs, LqsOptions::default())?;

    let grid = |objective| GridSearchConfig {
        lower: vec![0.0; 2],
        upper: vec![4.0; 2],
        grid_points: 8,
        subsets: vec![vec![0, 1]],
        shrink: 2.0,
        shrink_trigger: 0.01,
        stop_threshold: 0.001,
        max_iters: 8,
        objective,
        elitism: true,
    };
    let cfg = IsocConfig {
        s_grid: grid(ObjectiveConfig::diagonal(4, 0.9, 0.1)),
        sigma_grid: grid(ObjectiveConfig::diagonal(4, 0.1, 0.9)),
        outer_shrink: 2.0,
        outer_iters: 2,
        kind: Some(ModelKind::Lqs),
        lqs: LqsOptions::default(),
        trace_candidates: false,
    };
    let result = isoc_solve(&truth, &bundle, &cfg, workers)?;

    println!("evaluations {} in {:.1} s", result.evaluations, result.wall_time_s);
    println!("mean VAF     {:?}", result.report.m_vaf);
    println!("variance VAF {:?}", result.report.omega_vaf.diagonal());
    let errors = parameter_errors(&result.s_tilde, &bundle.cost.s, &result.sigma_tilde, &bundle.noise.sigma_vector(), 0)?;
    println!("s_N1, s_N2   {:?}", result.s_free);
    println!("sigma_u {:.4} (rel. error {:.3})", result.sigma_free[0], errors.delta_sigma[reaching::SIGMA_U_INDICES[0]].value);
    println!("sigma_x {:.4} (rel. error {:.3})", result.sigma_free[1], errors.delta_sigma[reaching::SIGMA_X_INDEX].value);
    Ok(())
}
