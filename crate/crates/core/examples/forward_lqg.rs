//! Computes LQG gains for the reaching task and prints the expected
//! trajectory of the measured states with their standard deviations.

use isoc_core::lqg;
use isoc_core::model::{build_reaching_model, ReachingConfig};

fn main() -> isoc_core::Result<()> {
    let bundle = build_reaching_model(ReachingConfig::default());
    let gains = lqg::solve(&bundle)?;
    let sys = &bundle.system;
    let noise = bundle.noise.assemble(&sys.b, &sys.h)?;
    let moments = lqg::propagate_moments(sys, &gains, &noise)?.measured(sys);

    println!("horizon {} steps, first control gain norm {:.3}", gains.horizon(), gains.l[0].norm());
    println!("{:>3} {:>9} {:>9} {:>9} {:>9} {:>10}", "t", "p_x", "p_y", "v_x", "v_y", "sd p_y");
    for (t, (m, c)) in moments.m_hat.iter().zip(&moments.omega_hat).enumerate() {
        println!("{t:>3} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>10.3e}", m[0], m[1], m[2], m[3], c[(1, 1)].sqrt());
    }
    Ok(())
}
