//! Bellman operators on grid functions: plain `T`, the min- and max-shifted
//! operators, their weighted-shift variants, normalisation and rotated
//! costs.

use thiserror::Error;

use crate::exprlang::Expr;
use crate::problem::{FunctionSource, GridFunction, Model, ProblemError, ProblemSpec};

/// Largest horizon accepted by [`min_formula_check`].
pub const MIN_FORMULA_MAX_K: usize = 6;

#[derive(Debug, Error)]
pub enum BellmanError {
    #[error("value function lives on a different grid than the problem")]
    GridMismatch,
    #[error("shifted operators need an undiscounted problem, discount is {0}")]
    Discounted(f64),
    #[error("alpha must lie strictly inside (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("horizon {k} exceeds the limit of {max}")]
    HorizonTooLarge { k: usize, max: usize },
    #[error("rotation needs a storage function given as an expression")]
    MissingStorage,
    #[error("rotation needs a shift constant")]
    MissingShift,
    #[error("rotation needs an equilibrium")]
    MissingEquilibrium,
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Extrema of `psi1 - psi2` over the grid nodes, with the optimal
/// translation `c` and the distance `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftPair {
    pub max_diff: f64,
    pub min_diff: f64,
    pub c: f64,
    pub d: f64,
}

impl ShiftPair {
    /// Weighted shift `alpha * max + (1 - alpha) * min`; `alpha = 1/2` gives
    /// `c` exactly.
    pub fn weighted(&self, alpha: f64) -> f64 {
        if alpha == 0.5 {
            self.c
        } else {
            alpha * self.max_diff + (1.0 - alpha) * self.min_diff
        }
    }
}

pub fn shift_pair(psi1: &GridFunction, psi2: &GridFunction) -> ShiftPair {
    assert!(psi1.same_grid(psi2), "shift_pair: grid mismatch");
    let (mut max_diff, mut min_diff) = (f64::NEG_INFINITY, f64::INFINITY);
    for (a, b) in psi1.values().iter().zip(psi2.values()) {
        let diff = a - b;
        max_diff = max_diff.max(diff);
        min_diff = min_diff.min(diff);
    }
    ShiftPair {
        max_diff,
        min_diff,
        c: (max_diff + min_diff) / 2.0,
        d: (max_diff - min_diff) / 2.0,
    }
}

/// `d(psi1, psi2)`.
pub fn distance(psi1: &GridFunction, psi2: &GridFunction) -> f64 {
    shift_pair(psi1, psi2).d
}

/// Which side the shifted operator clips to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `min{psi, T psi + c}`
    Min,
    /// `max{psi, T psi + c}`
    Max,
}

fn check_grid(model: &Model, psi: &GridFunction) -> Result<(), BellmanError> {
    let g = psi.grid();
    if std::sync::Arc::ptr_eq(g, model.grid()) || **g == **model.grid() {
        Ok(())
    } else {
        Err(BellmanError::GridMismatch)
    }
}

fn check_undiscounted(model: &Model) -> Result<(), BellmanError> {
    if model.discount() < 1.0 {
        Err(BellmanError::Discounted(model.discount()))
    } else {
        Ok(())
    }
}

/// `T psi` and the minimising control at every node.
pub fn apply_t(model: &Model, psi: &GridFunction) -> Result<(GridFunction, GridFunction), BellmanError> {
    check_grid(model, psi)?;
    let (values, arg) = model.backup(psi);
    let controls = arg
        .iter()
        .enumerate()
        .map(|(i, &j)| model.controls_at(i)[j])
        .collect();
    let grid = model.grid().clone();
    Ok((GridFunction::new(grid.clone(), values), GridFunction::new(grid, controls)))
}

/// `T psi` without the control table.
pub fn apply_t_value(model: &Model, psi: &GridFunction) -> Result<GridFunction, BellmanError> {
    check_grid(model, psi)?;
    let (values, _) = model.backup(psi);
    Ok(GridFunction::new(model.grid().clone(), values))
}

/// Combines `psi` and a precomputed `T psi` into the shifted update with
/// weight `alpha`. Also returns the shift pair of `(psi, T psi)`.
pub fn shifted_from(psi: &GridFunction, t_psi: &GridFunction, alpha: f64, side: Side) -> (GridFunction, ShiftPair) {
    let pair = shift_pair(psi, t_psi);
    let c = pair.weighted(alpha);
    let next = match side {
        Side::Min => psi.zip_with(t_psi, |p, t| p.min(t + c)),
        Side::Max => psi.zip_with(t_psi, |p, t| p.max(t + c)),
    };
    (next, pair)
}

/// Min-shifted operator `min{psi, T psi + c(psi, T psi)}`.
pub fn apply_t_hat(model: &Model, psi: &GridFunction) -> Result<GridFunction, BellmanError> {
    check_undiscounted(model)?;
    let t_psi = apply_t_value(model, psi)?;
    Ok(shifted_from(psi, &t_psi, 0.5, Side::Min).0)
}

/// Max-shifted operator `max{psi, T psi + c(psi, T psi)}`.
pub fn apply_t_check(model: &Model, psi: &GridFunction) -> Result<GridFunction, BellmanError> {
    check_undiscounted(model)?;
    let t_psi = apply_t_value(model, psi)?;
    Ok(shifted_from(psi, &t_psi, 0.5, Side::Max).0)
}

/// Shifted operator with shift `alpha * max[psi - T psi] + (1 - alpha) * min[psi - T psi]`.
pub fn apply_alpha_shift(
    model: &Model,
    psi: &GridFunction,
    alpha: f64,
    side: Side,
) -> Result<GridFunction, BellmanError> {
    check_alpha(alpha)?;
    check_undiscounted(model)?;
    let t_psi = apply_t_value(model, psi)?;
    Ok(shifted_from(psi, &t_psi, alpha, side).0)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<(), BellmanError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(BellmanError::AlphaOutOfRange(alpha))
    }
}

/// `psi - min psi`.
pub fn normalize(psi: &GridFunction) -> GridFunction {
    let m = psi.min_value();
    psi.map(|v| v - m)
}

/// Where the constant of a rotation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationForm {
    /// The problem's shift constant `c`.
    Shift,
    /// The stage cost at the problem's equilibrium.
    Equilibrium,
}

/// Problem with stage cost `l(x,u) - c + lambda(x) - lambda(f(x,u))`.
/// Everything else is kept; attached functions are dropped since they
/// belong to the original cost.
pub fn rotated_cost_with(spec: &ProblemSpec, storage: &Expr, c: f64) -> ProblemSpec {
    let after = storage.substitute(&spec.dynamics, None);
    let cost = spec.cost.clone() - Expr::constant(c) + storage.clone() - after;
    let mut out = spec.clone();
    out.name = format!("{}-rotated", spec.name);
    out.cost = cost;
    out.storage = None;
    out.shift_c = Some(0.0);
    out.attachments.clear();
    out
}

/// Rotates `spec` with its own storage function and either its shift
/// constant or its equilibrium cost.
pub fn rotated_cost(spec: &ProblemSpec, form: RotationForm) -> Result<ProblemSpec, BellmanError> {
    let storage = match spec.storage_function().map(|f| f.source) {
        Some(FunctionSource::Expr(e)) => e,
        _ => return Err(BellmanError::MissingStorage),
    };
    let c = match form {
        RotationForm::Shift => spec.shift_c.ok_or(BellmanError::MissingShift)?,
        RotationForm::Equilibrium => {
            let eq = spec.equilibrium.as_ref().ok_or(BellmanError::MissingEquilibrium)?;
            spec.stage_cost(&eq.x, eq.u)?
        }
    };
    Ok(rotated_cost_with(spec, &storage, c))
}

/// `T~ psi`: the Bellman operator of a rotated model.
pub fn apply_t_tilde(rotated: &Model, psi: &GridFunction) -> Result<GridFunction, BellmanError> {
    apply_t_value(rotated, psi)
}

/// Largest nodewise gap between `T~^k psi` and `T^k(psi - lambda) + lambda - k c`.
pub fn tilde_identity_gap(
    model: &Model,
    rotated: &Model,
    lambda: &GridFunction,
    c: f64,
    psi: &GridFunction,
    k: usize,
) -> Result<f64, BellmanError> {
    let mut lhs = psi.clone();
    let mut rhs = psi.zip_with(lambda, |p, l| p - l);
    for _ in 0..k {
        lhs = apply_t_tilde(rotated, &lhs)?;
        rhs = apply_t_value(model, &rhs)?;
    }
    let kc = k as f64 * c;
    let rhs = rhs.zip_with(lambda, |v, l| v + l - kc);
    Ok(lhs.sup_distance(&rhs))
}

/// Evaluates both sides of the min formula
/// `T^^k psi = min_tau { T^tau psi + min_{|S| = tau, S in 0..k} sum_{s in S} c_s }`
/// with `c_s = c(T^^s psi, T T^^s psi)`, enumerating subsets directly.
/// Returns the largest nodewise gap.
pub fn min_formula_gap(model: &Model, psi: &GridFunction, k: usize) -> Result<f64, BellmanError> {
    if k > MIN_FORMULA_MAX_K {
        return Err(BellmanError::HorizonTooLarge {
            k,
            max: MIN_FORMULA_MAX_K,
        });
    }
    check_undiscounted(model)?;
    let mut shifts = Vec::with_capacity(k);
    let mut hat = psi.clone();
    for _ in 0..k {
        let t_hat = apply_t_value(model, &hat)?;
        let (next, pair) = shifted_from(&hat, &t_hat, 0.5, Side::Min);
        shifts.push(pair.c);
        hat = next;
    }
    let mut best_sum = vec![f64::INFINITY; k + 1];
    for mask in 0u32..(1u32 << k) {
        let tau = mask.count_ones() as usize;
        let sum: f64 = (0..k).filter(|s| mask & (1 << s) != 0).map(|s| shifts[s]).sum();
        best_sum[tau] = best_sum[tau].min(sum);
    }
    let mut rhs = psi.clone();
    let mut t_tau = psi.clone();
    for &s in best_sum.iter().skip(1) {
        t_tau = apply_t_value(model, &t_tau)?;
        rhs = rhs.zip_with(&t_tau, |r, t| r.min(t + s));
    }
    Ok(hat.sup_distance(&rhs))
}

/// True when the min formula holds within `1e-9` at every node.
pub fn min_formula_check(model: &Model, psi: &GridFunction, k: usize) -> Result<bool, BellmanError> {
    Ok(min_formula_gap(model, psi, k)? <= 1e-9)
}
