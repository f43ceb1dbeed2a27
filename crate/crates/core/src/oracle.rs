//! Brute-force finite-horizon values for validating iterated Bellman sweeps.
//!
//! The value at a node is expanded recursively over every sampled control
//! and every interpolation neighbour of the successor, down to the terminal
//! function. Nothing is memoised and nothing is read from [`Model`]'s
//! tables: costs and dynamics are re-evaluated from the expressions.
//!
//! [`Model`]: crate::problem::Model

use rayon::prelude::*;
use thiserror::Error;

use crate::problem::{project, GridFunction, ProblemError, ProblemSpec};

/// Bound on `(control samples)^k`.
pub const BUDGET: f64 = 1e6;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration budget exceeded: {samples}^{k} control sequences")]
    BudgetExceeded { samples: usize, k: usize },
    #[error("terminal function grid does not cover the problem box")]
    GridMismatch,
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// `T^k psi` on `psi`'s grid by exhaustive expansion.
pub fn brute_force_value(spec: &ProblemSpec, psi: &GridFunction, k: usize) -> Result<GridFunction, OracleError> {
    spec.validate()?;
    let grid = psi.grid();
    if grid.dim() != spec.dim || grid.bounds() != spec.bounds {
        return Err(OracleError::GridMismatch);
    }
    let samples = spec.control.samples + spec.control.mandatory.len();
    if (samples as f64).powi(k as i32) > BUDGET {
        return Err(OracleError::BudgetExceeded { samples, k });
    }
    let gamma = spec.discount_factor();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| expand(spec, psi, gamma, &grid.node(i), k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GridFunction::new(grid.clone(), values))
}

fn expand(spec: &ProblemSpec, psi: &GridFunction, gamma: f64, x: &[f64], k: usize) -> Result<f64, OracleError> {
    if k == 0 {
        return Ok(psi.interpolate(x));
    }
    let grid = psi.grid();
    let mut best = f64::INFINITY;
    let mut stencil = Vec::new();
    for u in spec.control.samples_at(x)? {
        let cost = spec.stage_cost(x, u)?;
        let (next, _) = project(&spec.successor(x, u)?, &spec.bounds);
        grid.stencil(&next, &mut stencil);
        let mut cont = 0.0;
        for &(j, w) in &stencil {
            cont += w * expand(spec, psi, gamma, &grid.node(j as usize), k - 1)?;
        }
        best = best.min(cost + gamma * cont);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::apply_t_value;
    use crate::exprlang::Expr;
    use crate::problem::{builtin, ControlInterval, GridSpec, Model};

    fn coarse(name: &str) -> (ProblemSpec, Model) {
        let spec = builtin(name).unwrap().with_resolution(&[21], 11);
        let model = Model::new(&spec).unwrap();
        (spec, model)
    }

    fn dp(model: &Model, psi: &GridFunction, k: usize) -> GridFunction {
        (0..k).fold(psi.clone(), |p, _| apply_t_value(model, &p).unwrap())
    }

    #[test]
    fn one_step_equals_bellman() {
        let (spec, model) = coarse("logistic-chaos");
        let psi = GridFunction::from_fn(model.grid().clone(), |x| (4.0 * x[0]).sin());
        let bf = brute_force_value(&spec, &psi, 1).unwrap();
        assert!(bf.sup_distance(&dp(&model, &psi, 1)) <= 1e-12);
    }

    #[test]
    fn three_steps_on_pwl() {
        let (spec, model) = coarse("pwl-zero-avg");
        let psi = GridFunction::constant(model.grid().clone(), 0.0);
        let bf = brute_force_value(&spec, &psi, 3).unwrap();
        assert!(bf.sup_distance(&dp(&model, &psi, 3)) <= 1e-10);
    }

    #[test]
    fn single_control_sums_costs() {
        let spec = ProblemSpec {
            name: "drift".into(),
            dim: 1,
            bounds: vec![(0.0, 1.0)],
            dynamics: vec![Expr::parse("x1/2").unwrap()],
            cost: Expr::parse("x1").unwrap(),
            control: ControlInterval::new(Expr::constant(0.0), Expr::constant(0.0), 1),
            discount: None,
            storage: None,
            equilibrium: None,
            shift_c: None,
            grid: GridSpec {
                nodes: vec![5],
                mandatory: vec![vec![]],
            },
            attachments: Vec::new(),
        };
        let grid = std::sync::Arc::new(spec.build_grid().unwrap());
        let psi = GridFunction::from_fn(grid.clone(), |x| 10.0 * x[0]);
        let bf = brute_force_value(&spec, &psi, 2).unwrap();
        for (i, v) in bf.values().iter().enumerate() {
            let x = grid.node(i)[0];
            assert!((v - (x + x / 2.0 + 10.0 * x / 4.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn budget_guard() {
        let spec = builtin("pwl-zero-avg").unwrap();
        let model = Model::new(&spec).unwrap();
        let psi = GridFunction::constant(model.grid().clone(), 0.0);
        assert!(matches!(
            brute_force_value(&spec, &psi, 3),
            Err(OracleError::BudgetExceeded { .. })
        ));
    }
}
