//! Solves the LQS reaching task by fixed-point iteration and compares the
//! positional variance with the LQG version of the same task.

use isoc_core::lqs::{self, LqsOptions};
use isoc_core::lqg;
use isoc_core::model::{build_reaching_model, ModelKind, ReachingConfig};

fn main() -> isoc_core::Result<()> {
    let lqs_model = build_reaching_model(ReachingConfig { kind: ModelKind::Lqs, ..Default::default() });
    let lqg_model = build_reaching_model(ReachingConfig::default());

    let (gains, state) = lqs::solve(&lqs_model, LqsOptions::default())?;
    println!("LQS fixed point: {:?}", state.diagnostics());
    let sys = &lqs_model.system;
    let noise = lqs_model.noise.assemble(&sys.b, &sys.h)?;
    let senso = lqs::propagate_moments(sys, &gains, &noise)?.measured(sys);

    let sys = &lqg_model.system;
    let noise = lqg_model.noise.assemble(&sys.b, &sys.h)?;
    let gauss = lqg::propagate_moments(sys, &lqg::solve(&lqg_model)?, &noise)?.measured(sys);

    println!("{:>3} {:>10} {:>12} {:>12} {:>12}", "t", "E[p_y] LQS", "var p_y LQS", "var p_y LQG", "var v_y LQS");
    for t in 0..senso.len() {
        println!(
            "{t:>3} {:>10.5} {:>12.4e} {:>12.4e} {:>12.4e}",
            senso.m_hat[t][1],
            senso.omega_hat[t][(1, 1)],
            gauss.omega_hat[t][(1, 1)],
            senso.omega_hat[t][(3, 3)]
        );
    }
    Ok(())
}
