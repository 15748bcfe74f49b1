//! Runs the shrinking grid search on a known quadratic and prints each pass.

use isoc_core::isoc::{grid_search, worker_pool, GridSearchConfig};
use isoc_core::objective::ObjectiveConfig;

fn main() -> isoc_core::Result<()> {
    let target = [1.3, 0.42, 7.9];
    let cfg = GridSearchConfig {
        lower: vec![0.0; 3],
        upper: vec![4.0, 1.0, 10.0],
        grid_points: 5,
        subsets: vec![vec![0, 1], vec![2]],
        shrink: 2.0,
        shrink_trigger: 0.01,
        stop_threshold: 1e-9,
        max_iters: 30,
        objective: ObjectiveConfig::diagonal(1, 1.0, 0.0),
        elitism: true,
    };
    let pool = worker_pool(2)?;
    let surrogate = |theta: &[f64]| -theta.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let outcome = grid_search(&[2.0, 0.5, 5.0], &cfg, &pool, surrogate, |event| {
        println!(
            "pass {:>2} subset {} gamma {:>8} best J {:.3e}",
            event.v, event.subset, event.gamma, event.scores[event.best]
        );
    })?;
    println!("theta {:?} after {} evaluations (target {target:?})", outcome.theta, outcome.evaluations);
    Ok(())
}
