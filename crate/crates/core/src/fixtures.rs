//! Small models shared by unit tests.

use nalgebra::{DMatrix, DVector};

use crate::isoc::{GridSearchConfig, IsocConfig};
use crate::model::{CostModel, ModelBundle, ModelKind, NoiseModel, ParamSlot, ParameterLayout, SystemModel};
use crate::objective::ObjectiveConfig;

/// One-dimensional reach: state `[p, g]` with goal `g = 1`, position
/// observed and measured, terminal error weight `s_n`, unit effort weight.
/// Free parameters are `s_n` and the position process-noise scale.
pub fn scalar_model(s_n: f64, process_scale: f64, observation_scale: f64) -> ModelBundle {
    ModelBundle {
        system: SystemModel {
            a: DMatrix::identity(2, 2),
            b: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            h: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            m: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            x0_mean: DVector::from_vec(vec![0.0, 1.0]),
            omega_x0: DMatrix::zeros(2, 2),
            horizon: 20,
            dt: 1.0,
        },
        cost: CostModel {
            qn_basis: vec![DVector::from_vec(vec![1.0, -1.0])],
            qq_basis: vec![],
            qr_basis: vec![DVector::from_vec(vec![1.0])],
            s: vec![s_n, 1.0],
        },
        noise: NoiseModel {
            sigma_xi: DMatrix::from_row_slice(2, 2, &[process_scale, 0.0, 0.0, 0.0]),
            sigma_omega: DMatrix::from_element(1, 1, observation_scale),
            f: vec![],
            sigma_u: vec![],
            g: vec![],
            sigma_x: vec![],
            omega_eta: None,
        },
        layout: ParameterLayout { free_s_indices: vec![ParamSlot::Single(0)], free_sigma_indices: vec![ParamSlot::Single(0)] },
        kind: ModelKind::Lqg,
    }
}

fn grid(upper: f64, objective: ObjectiveConfig) -> GridSearchConfig {
    GridSearchConfig {
        lower: vec![0.0],
        upper: vec![upper],
        grid_points: 6,
        subsets: vec![vec![0]],
        shrink: 2.0,
        shrink_trigger: 1e-4,
        stop_threshold: 1e-9,
        max_iters: 30,
        objective,
        elitism: true,
    }
}

pub fn scalar_config() -> IsocConfig {
    IsocConfig {
        s_grid: grid(20.0, ObjectiveConfig::diagonal(1, 0.9, 0.1)),
        sigma_grid: grid(0.1, ObjectiveConfig::diagonal(1, 0.1, 0.9)),
        outer_shrink: 2.0,
        outer_iters: 3,
        kind: None,
        lqs: Default::default(),
        trace_candidates: false,
    }
}
