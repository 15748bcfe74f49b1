//! Inverse stochastic optimal control by alternating grid search.
//!
//! [`isoc_solve`] alternates between fitting the cost weights `s` with the
//! noise parameters held fixed and fitting the noise parameters `σ` with the
//! weights held fixed. Each step is a [`grid_search`]: a sequence of passes,
//! each pass running a full-factorial grid over every parameter subset in
//! turn, centred on the incumbent, with the grid half-width `(b - a) / γ`
//! shrinking whenever a pass stops improving the objective.

use std::time::Instant;

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::lqs::LqsOptions;
use crate::model::{extract_free, inject_free, GroundTruthMoments, ModelBundle, ModelKind};
use crate::objective::{self, FitReport, ObjectiveConfig};
use crate::{lqg, lqs, Error, Result};

fn default_true() -> bool {
    true
}

/// Settings of one grid search over a parameter vector `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchConfig {
    /// Lower bounds `a_i`, one per free parameter.
    pub lower: Vec<f64>,
    /// Upper bounds `b_i`, one per free parameter.
    pub upper: Vec<f64>,
    /// Grid points per coordinate, `N_θ`.
    pub grid_points: usize,
    /// Parameter subsets searched jointly, as positions into the free vector.
    pub subsets: Vec<Vec<usize>>,
    /// Factor `γ̄` applied to `γ` when a pass stalls.
    pub shrink: f64,
    /// Stall threshold `δ_γ` on the change of the pass objective.
    pub shrink_trigger: f64,
    /// Stop threshold `δ` of the two-lag termination test.
    pub stop_threshold: f64,
    /// Maximum number of passes `v_max`.
    pub max_iters: usize,
    pub objective: ObjectiveConfig,
    /// Re-admit the incumbent as a candidate of every subset grid.
    #[serde(default = "default_true")]
    pub elitism: bool,
}

impl GridSearchConfig {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.upper.len() != self.lower.len() {
            return bad(format!("{} lower but {} upper bounds", self.lower.len(), self.upper.len()));
        }
        for (i, (a, b)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(a.is_finite() && b.is_finite() && *a >= 0.0 && b >= a) {
                return bad(format!("bounds of parameter {i} must satisfy 0 <= a <= b < inf, got [{a}, {b}]"));
            }
        }
        if self.grid_points < 2 {
            return bad("grid_points must be at least 2".into());
        }
        if !(self.shrink > 1.0 && self.shrink.is_finite()) {
            return bad("shrink must be a finite factor > 1".into());
        }
        if !(self.shrink_trigger > 0.0) || !(self.stop_threshold > 0.0) {
            return bad("shrink_trigger and stop_threshold must be positive".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        let mut covered = vec![false; self.dim()];
        for subset in &self.subsets {
            if subset.is_empty() {
                return bad("empty parameter subset".into());
            }
            for &i in subset {
                if i >= self.dim() {
                    return bad(format!("subset index {i} out of range ({} parameters)", self.dim()));
                }
                if subset.iter().filter(|&&j| j == i).count() > 1 {
                    return bad(format!("subset lists parameter {i} twice"));
                }
                covered[i] = true;
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return bad(format!("parameter {i} is in no subset"));
        }
        Ok(())
    }

    /// Number of candidates of one subset grid, without the incumbent.
    pub fn grid_size(&self, subset: usize) -> usize {
        self.grid_points.pow(self.subsets[subset].len() as u32)
    }
}

/// Settings of the alternating inverse solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsocConfig {
    pub s_grid: GridSearchConfig,
    pub sigma_grid: GridSearchConfig,
    /// Outer bound shrink factor `γ̄_l`.
    pub outer_shrink: f64,
    /// Outer iterations `l_max`.
    pub outer_iters: usize,
    /// Overrides the model kind stored in the model file.
    #[serde(default)]
    pub kind: Option<ModelKind>,
    #[serde(default)]
    pub lqs: LqsOptions,
    /// Also log every evaluated candidate.
    #[serde(default)]
    pub trace_candidates: bool,
}

impl IsocConfig {
    pub fn validate(&self, bundle: &ModelBundle) -> Result<()> {
        self.s_grid.validate()?;
        self.sigma_grid.validate()?;
        if self.s_grid.dim() != bundle.layout.free_s_indices.len() {
            return Err(Error::InvalidConfig(format!(
                "s_grid has {} parameters, model layout frees {}",
                self.s_grid.dim(),
                bundle.layout.free_s_indices.len()
            )));
        }
        if self.sigma_grid.dim() != bundle.layout.free_sigma_indices.len() {
            return Err(Error::InvalidConfig(format!(
                "sigma_grid has {} parameters, model layout frees {}",
                self.sigma_grid.dim(),
                bundle.layout.free_sigma_indices.len()
            )));
        }
        let n_measured = bundle.system.n_measured();
        self.s_grid.objective.validate(n_measured)?;
        self.sigma_grid.objective.validate(n_measured)?;
        if !(self.outer_shrink > 1.0 && self.outer_shrink.is_finite()) {
            return Err(Error::InvalidConfig("outer_shrink must be a finite factor > 1".into()));
        }
        if self.outer_iters == 0 {
            return Err(Error::InvalidConfig("outer_iters must be at least 1".into()));
        }
        if self.lqs.max_iters == 0 || !(self.lqs.tol > 0.0) {
            return Err(Error::InvalidConfig("lqs options need max_iters >= 1 and tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    S,
    Sigma,
}

/// One line of the search log: the best candidate of one subset grid, or
/// (with `candidate` set) a single evaluated candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub l: usize,
    pub step: Step,
    pub v: usize,
    pub subset: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<usize>,
    /// `None` encodes a rejected candidate (`-∞`).
    pub j_isoc: Option<f64>,
    pub theta: Vec<f64>,
    pub gamma: f64,
    pub evaluations: usize,
}

impl TraceRecord {
    pub fn j(&self) -> f64 {
        self.j_isoc.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Result of one [`grid_search`] call.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub theta: Vec<f64>,
    pub j_isoc: f64,
    /// Incumbent objective after each pass `v = 1, 2, ...`.
    pub pass_j: Vec<f64>,
    pub gamma: f64,
    pub evaluations: usize,
}

/// Evaluated points of one subset grid, reported to the grid-search hook.
pub struct SubsetEvent<'a> {
    pub v: usize,
    pub subset: usize,
    pub gamma: f64,
    pub candidates: &'a [Vec<f64>],
    pub scores: &'a [f64],
    pub best: usize,
    pub evaluations: usize,
}

fn finite_or_neg_inf(j: f64) -> f64 {
    if j.is_nan() {
        f64::NEG_INFINITY
    } else {
        j
    }
}

/// Index of the largest score; ties go to the smallest index.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Grid values of one coordinate: `N` equally spaced points on `[a, b]`.
fn axis(a: f64, b: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| if k + 1 == points { b } else { a + (k as f64 / (points - 1) as f64) * (b - a) })
        .collect()
}

/// Full-factorial grid over `subset`, lexicographic with the first subset
/// coordinate varying slowest; other coordinates copy `incumbent`.
fn factorial_grid(incumbent: &[f64], subset: &[usize], axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let points = axes.first().map_or(1, Vec::len);
    let total = points.pow(subset.len() as u32);
    (0..total)
        .map(|mut j| {
            let mut theta = incumbent.to_vec();
            for (pos, &i) in subset.iter().enumerate().rev() {
                theta[i] = axes[pos][j % points];
                j /= points;
            }
            theta
        })
        .collect()
}

/// Shrinking subset grid search maximizing `objective`.
///
/// `objective` must be pure; candidates of one subset grid are scored on
/// `pool` and NaN scores count as `-∞`. The returned incumbent and every
/// hook call are independent of the pool size.
pub fn grid_search<F, H>(
    theta0: &[f64],
    cfg: &GridSearchConfig,
    pool: &ThreadPool,
    objective: F,
    mut hook: H,
) -> Result<SearchOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
    H: FnMut(SubsetEvent<'_>),
{
    cfg.validate()?;
    if theta0.len() != cfg.dim() || theta0.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidConfig("initial parameters must be finite, nonnegative and match the bounds".into()));
    }
    let mut theta = theta0.to_vec();
    let mut incumbent_j: Option<f64> = None;
    let mut gamma = 2.0;
    let mut evaluations = 0;
    // pass objectives J(1), J(2), ...; J(0) and earlier are -∞
    let mut pass_j: Vec<f64> = Vec::new();
    let history = |pass_j: &[f64], v: isize| if v >= 1 { pass_j[v as usize - 1] } else { f64::NEG_INFINITY };
    let mut v = 1;
    loop {
        for (p, subset) in cfg.subsets.iter().enumerate() {
            let axes: Vec<Vec<f64>> = subset
                .iter()
                .map(|&i| {
                    let half = (cfg.upper[i] - cfg.lower[i]) / gamma;
                    axis((theta[i] - half).max(0.0), theta[i] + half, cfg.grid_points)
                })
                .collect();
            let mut candidates = factorial_grid(&theta, subset, &axes);
            let grid_len = candidates.len();
            let mut scores: Vec<f64> =
                pool.install(|| candidates.par_iter().map(|c| finite_or_neg_inf(objective(c))).collect());
            let mut spent = grid_len;
            if cfg.elitism {
                let j = match incumbent_j {
                    Some(j) => j,
                    None => {
                        spent += 1;
                        finite_or_neg_inf(pool.install(|| objective(&theta)))
                    }
                };
                candidates.push(theta.clone());
                scores.push(j);
            }
            evaluations += spent;
            let best = argmax(&scores);
            hook(SubsetEvent { v, subset: p, gamma, candidates: &candidates, scores: &scores, best, evaluations: spent });
            theta = candidates.swap_remove(best);
            incumbent_j = Some(scores[best]);
        }
        let j_v = incumbent_j.unwrap_or(f64::NEG_INFINITY);
        pass_j.push(j_v);
        if (j_v - history(&pass_j, v as isize - 1)).abs() <= cfg.shrink_trigger {
            gamma *= cfg.shrink;
        }
        v += 1;
        let last = history(&pass_j, v as isize - 1);
        let stalled = (last - history(&pass_j, v as isize - 2)).abs() < cfg.stop_threshold
            && (last - history(&pass_j, v as isize - 3)).abs() < cfg.stop_threshold;
        if v > cfg.max_iters || stalled {
            break;
        }
    }
    Ok(SearchOutcome { theta, j_isoc: incumbent_j.unwrap_or(f64::NEG_INFINITY), pass_j, gamma, evaluations })
}

/// Moments of the measured states predicted by a fully specified bundle.
pub fn predict(bundle: &ModelBundle, kind: ModelKind, opts: LqsOptions) -> Result<GroundTruthMoments> {
    let sys = &bundle.system;
    let noise = bundle.noise.assemble(&sys.b, &sys.h)?;
    let moments = match kind {
        ModelKind::Lqg => {
            let gains = lqg::solve(bundle)?;
            lqg::propagate_moments(sys, &gains, &noise)?
        }
        ModelKind::Lqs => {
            let (gains, state) = lqs::solve(bundle, opts)?;
            if !state.converged {
                return Err(Error::Numerical(format!(
                    "LQS iteration did not converge in {} sweeps (gain change {:e})",
                    state.iteration, state.gain_delta
                )));
            }
            lqs::propagate_moments(sys, &gains, &noise)?
        }
    };
    Ok(moments.measured(sys))
}

/// Everything needed to score a candidate besides the candidate itself.
pub struct CandidateContext<'a> {
    pub bundle: &'a ModelBundle,
    pub truth: &'a GroundTruthMoments,
    pub kind: ModelKind,
    pub lqs: LqsOptions,
}

impl CandidateContext<'_> {
    /// Full `(s, σ)` vectors with the free entries replaced.
    pub fn full_parameters(&self, s_free: &[f64], sigma_free: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut s = self.bundle.cost.s.clone();
        let mut sigma = self.bundle.noise.sigma_vector();
        inject_free(&self.bundle.layout.free_s_indices, &mut s, s_free);
        inject_free(&self.bundle.layout.free_sigma_indices, &mut sigma, sigma_free);
        (s, sigma)
    }

    fn try_evaluate(&self, s_free: &[f64], sigma_free: &[f64], weights: &ObjectiveConfig) -> Result<f64> {
        if s_free.iter().chain(sigma_free).any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidConfig("negative parameter".into()));
        }
        let (s, sigma) = self.full_parameters(s_free, sigma_free);
        let bundle = self.bundle.with_parameters(&s, &sigma)?;
        let predicted = predict(&bundle, self.kind, self.lqs)?;
        Ok(objective::fit_report(&predicted, self.truth, weights)?.j_isoc)
    }

    /// `J_ISOC` of a candidate; any failure scores `-∞`.
    pub fn evaluate(&self, s_free: &[f64], sigma_free: &[f64], weights: &ObjectiveConfig) -> f64 {
        self.try_evaluate(s_free, sigma_free, weights).unwrap_or(f64::NEG_INFINITY)
    }
}

/// `J_ISOC` of candidate `theta` for `step`, with `lambda` holding the free
/// parameters of the other step. Failures score `-∞`.
pub fn evaluate_candidate(
    theta: &[f64],
    lambda: &[f64],
    step: Step,
    ctx: &CandidateContext<'_>,
    weights: &ObjectiveConfig,
) -> f64 {
    match step {
        Step::S => ctx.evaluate(theta, lambda, weights),
        Step::Sigma => ctx.evaluate(lambda, theta, weights),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsocResult {
    /// Full weight vector with the recovered free entries.
    pub s_tilde: Vec<f64>,
    /// Full flattened noise vector with the recovered free entries.
    pub sigma_tilde: Vec<f64>,
    pub s_free: Vec<f64>,
    pub sigma_free: Vec<f64>,
    pub kind: ModelKind,
    /// Fit of the final parameters, weighted as in the noise step.
    pub report: FitReport,
    pub evaluations: usize,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

impl IsocResult {
    /// Model bundle carrying the recovered parameters.
    pub fn apply(&self, bundle: &ModelBundle) -> Result<ModelBundle> {
        bundle.with_parameters(&self.s_tilde, &self.sigma_tilde)
    }
}

/// Builds a rayon pool with `workers` threads (at least one).
pub fn worker_pool(workers: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))
}

/// Recovers the free cost weights and noise parameters of `bundle` from
/// measured ground-truth moments.
///
/// Starts from `σ = 0` and `s` at the bound midpoints, then for each outer
/// iteration fits `s`, fits `σ`, and shrinks every upper bound to
/// `a + (b - a) / γ̄_l`. Non-free entries keep their model-file values.
pub fn isoc_solve(
    truth: &GroundTruthMoments,
    bundle: &ModelBundle,
    cfg: &IsocConfig,
    workers: usize,
) -> Result<IsocResult> {
    let started = Instant::now();
    bundle.validate()?;
    cfg.validate(bundle)?;
    truth.validate(bundle.system.n_measured(), bundle.system.horizon)?;
    let kind = cfg.kind.unwrap_or(bundle.kind);
    let ctx = CandidateContext { bundle, truth, kind, lqs: cfg.lqs };
    let pool = worker_pool(workers)?;

    let mut s_grid = cfg.s_grid.clone();
    let mut sigma_grid = cfg.sigma_grid.clone();
    let mut s_free: Vec<f64> = s_grid.lower.iter().zip(&s_grid.upper).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut sigma_free = vec![0.0; sigma_grid.dim()];
    let mut trace = Vec::new();
    let mut evaluations = 0;

    for l in 1..=cfg.outer_iters {
        for step in [Step::S, Step::Sigma] {
            let (grid, theta0, lambda) = match step {
                Step::S => (&s_grid, s_free.clone(), sigma_free.clone()),
                Step::Sigma => (&sigma_grid, sigma_free.clone(), s_free.clone()),
            };
            let weights = &grid.objective;
            let outcome = grid_search(
                &theta0,
                grid,
                &pool,
                |theta| evaluate_candidate(theta, &lambda, step, &ctx, weights),
                |event| {
                    let j = |s: f64| s.is_finite().then_some(s);
                    if cfg.trace_candidates {
                        for (c, (theta, &score)) in event.candidates.iter().zip(event.scores).enumerate() {
                            trace.push(TraceRecord {
                                l,
                                step,
                                v: event.v,
                                subset: event.subset,
                                candidate: Some(c),
                                j_isoc: j(score),
                                theta: theta.clone(),
                                gamma: event.gamma,
                                evaluations: 1,
                            });
                        }
                    }
                    trace.push(TraceRecord {
                        l,
                        step,
                        v: event.v,
                        subset: event.subset,
                        candidate: None,
                        j_isoc: j(event.scores[event.best]),
                        theta: event.candidates[event.best].clone(),
                        gamma: event.gamma,
                        evaluations: event.evaluations,
                    });
                },
            )?;
            evaluations += outcome.evaluations;
            match step {
                Step::S => s_free = outcome.theta,
                Step::Sigma => sigma_free = outcome.theta,
            }
        }
        for grid in [&mut s_grid, &mut sigma_grid] {
            for (a, b) in grid.lower.iter().zip(grid.upper.iter_mut()) {
                *b = *a + (*b - *a) / cfg.outer_shrink;
            }
        }
    }

    let (s_tilde, sigma_tilde) = ctx.full_parameters(&s_free, &sigma_free);
    let fitted = bundle.with_parameters(&s_tilde, &sigma_tilde)?;
    let report = objective::fit_report(&predict(&fitted, kind, cfg.lqs)?, truth, &cfg.sigma_grid.objective)?;
    debug_assert_eq!(extract_free(&bundle.layout.free_s_indices, &s_tilde), s_free);
    Ok(IsocResult {
        s_tilde,
        sigma_tilde,
        s_free,
        sigma_free,
        kind,
        report,
        evaluations,
        wall_time_s: started.elapsed().as_secs_f64(),
        trace,
    })
}

/// Search settings for the reaching task layout of
/// [`build_reaching_model`](crate::model::build_reaching_model): block-wise
/// weight bounds, noise bounds `[0, 4]`, `γ̄ = 2` everywhere, `δ_γ = 0.01`,
/// `δ = 0.001`, and subsets pairing the x- and y-axis parameters.
pub fn reaching_search_config(kind: ModelKind, grid_points: usize, max_iters: usize, outer_iters: usize) -> IsocConfig {
    let s_upper = vec![4.0, 4.0, 0.4, 0.4, 0.004, 0.004, 4e-6, 4e-6];
    let sigma_subsets = match kind {
        ModelKind::Lqg => vec![vec![0, 2, 4, 6], vec![1, 3, 5, 7], vec![8, 10, 12], vec![9, 11, 13]],
        ModelKind::Lqs => vec![
            vec![0, 2],
            vec![1, 3],
            vec![4, 6, 14],
            vec![5, 7, 14],
            vec![8, 10, 12, 15],
            vec![9, 11, 13, 15],
        ],
    };
    let sigma_dim = if kind == ModelKind::Lqs { 16 } else { 14 };
    let grid = |upper: Vec<f64>, subsets: Vec<Vec<usize>>, objective: ObjectiveConfig| GridSearchConfig {
        lower: vec![0.0; upper.len()],
        upper,
        grid_points,
        subsets,
        shrink: 2.0,
        shrink_trigger: 0.01,
        stop_threshold: 0.001,
        max_iters,
        objective,
        elitism: true,
    };
    IsocConfig {
        s_grid: grid(s_upper, vec![vec![0, 2, 4, 6], vec![1, 3, 5, 7]], ObjectiveConfig::diagonal(4, 0.9, 0.1)),
        sigma_grid: grid(vec![4.0; sigma_dim], sigma_subsets, ObjectiveConfig::diagonal(4, 0.1, 0.9)),
        outer_shrink: 2.0,
        outer_iters,
        kind: Some(kind),
        lqs: LqsOptions::default(),
        trace_candidates: false,
    }
}
