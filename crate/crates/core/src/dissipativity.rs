//! Sampled dissipation-inequality certificates.
//!
//! Every check sweeps all grid nodes against all sampled controls; a pass
//! means "no violation on these samples", not a proof.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exprlang::{EvalError, Expr};
use crate::problem::{FunctionSource, GridFunction, Model, NamedFunction, ProblemError};

/// Slack allowed before a sample counts as a violation.
pub const TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DissipativityError {
    #[error("storage function: {0}")]
    Storage(#[source] EvalError),
    #[error("storage grid does not match the problem grid")]
    GridMismatch,
    #[error("({x:?}, {u}) is not an equilibrium: |f(x,u) - x| = {residual:e}")]
    NotEquilibrium { x: Vec<f64>, u: f64, residual: f64 },
    #[error("alpha: {0}")]
    Alpha(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// A candidate storage function.
#[derive(Debug, Clone)]
pub enum Storage {
    Expr(Expr),
    Native(fn(&[f64]) -> f64),
    /// Nodal values, interpolated off the nodes.
    Grid(GridFunction),
}

impl Storage {
    pub fn zero() -> Storage {
        Storage::Expr(Expr::constant(0.0))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, DissipativityError> {
        match self {
            Storage::Expr(e) => e.eval(x, 0.0).map_err(DissipativityError::Storage),
            Storage::Native(f) => Ok(f(x)),
            Storage::Grid(g) => Ok(g.interpolate(x)),
        }
    }
}

impl From<&NamedFunction> for Storage {
    fn from(f: &NamedFunction) -> Storage {
        match &f.source {
            FunctionSource::Expr(e) => Storage::Expr(e.clone()),
            FunctionSource::Native(n) => Storage::Native(*n),
        }
    }
}

/// Outcome of a sweep. `margin = lambda(x) + l(x,u) - c - lambda(f(x,u))`
/// (minus `alpha(|x - x_e|)` for the strict check); `worst_violation` is
/// the negated smallest margin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipativityReport {
    pub pass: bool,
    pub worst_violation: f64,
    pub worst_x: Vec<f64>,
    pub worst_u: f64,
    pub samples: usize,
    pub min_margin: f64,
    pub mean_margin: f64,
}

impl DissipativityReport {
    pub fn summary(&self) -> String {
        format!(
            "{} on {} samples (worst violation {:e} at x={:?}, u={})",
            if self.pass { "passed" } else { "failed" },
            self.samples,
            self.worst_violation,
            self.worst_x,
            self.worst_u
        )
    }
}

struct NodeSweep {
    min: f64,
    arg_u: f64,
    sum: f64,
    count: usize,
}

fn check_storage_grid(model: &Model, storage: &Storage) -> Result<(), DissipativityError> {
    if let Storage::Grid(g) = storage {
        if **g.grid() != **model.grid() {
            return Err(DissipativityError::GridMismatch);
        }
    }
    Ok(())
}

/// Sweeps `margin(x, u) = lambda(x) + l(x,u) - lambda(f(x,u)) - penalty(x)`.
fn sweep(
    model: &Model,
    storage: &Storage,
    penalty: &(dyn Fn(&[f64]) -> Result<f64, DissipativityError> + Sync),
) -> Result<(f64, Vec<f64>, f64, usize, f64), DissipativityError> {
    check_storage_grid(model, storage)?;
    let grid = model.grid();
    let nodes: Vec<NodeSweep> = (0..model.node_count())
        .into_par_iter()
        .map(|i| {
            let x = grid.node(i);
            let here = storage.eval(&x)? - penalty(&x)?;
            let mut s = NodeSweep {
                min: f64::INFINITY,
                arg_u: f64::NAN,
                sum: 0.0,
                count: 0,
            };
            for t in model.transitions(i) {
                let m = here + t.cost - storage.eval(t.successor)?;
                if m < s.min {
                    s.min = m;
                    s.arg_u = t.u;
                }
                s.sum += m;
                s.count += 1;
            }
            Ok(s)
        })
        .collect::<Result<_, DissipativityError>>()?;
    let mut best = (f64::INFINITY, 0, f64::NAN);
    let (mut sum, mut count) = (0.0, 0);
    for (i, s) in nodes.iter().enumerate() {
        if s.min < best.0 {
            best = (s.min, i, s.arg_u);
        }
        sum += s.sum;
        count += s.count;
    }
    Ok((best.0, grid.node(best.1), best.2, count, sum / count as f64))
}

fn report(min: f64, x: Vec<f64>, u: f64, samples: usize, mean: f64, c: f64) -> DissipativityReport {
    let min_margin = min - c;
    DissipativityReport {
        pass: min_margin >= -TOL,
        worst_violation: -min_margin,
        worst_x: x,
        worst_u: u,
        samples,
        min_margin,
        mean_margin: mean - c,
    }
}

/// Checks `lambda(f(x,u)) <= lambda(x) + l(x,u) - c` on every sample.
pub fn check_dissipativity(
    model: &Model,
    storage: &Storage,
    c: f64,
) -> Result<DissipativityReport, DissipativityError> {
    let (min, x, u, n, mean) = sweep(model, storage, &|_| Ok(0.0))?;
    Ok(report(min, x, u, n, mean, c))
}

/// Largest `c` the storage certifies: `min over samples of lambda(x) + l(x,u) - lambda(f(x,u))`.
pub fn best_certified_shift(model: &Model, storage: &Storage) -> Result<f64, DissipativityError> {
    Ok(sweep(model, storage, &|_| Ok(0.0))?.0)
}

/// Checks `lambda(f(x,u)) <= lambda(x) + l(x,u) - l(x_e,u_e) - alpha(|x - x_e|)`.
/// `alpha` is an expression in `x1`, read as the Euclidean radius.
pub fn check_strict_dissipativity(
    model: &Model,
    storage: &Storage,
    xe: &[f64],
    ue: f64,
    alpha: &Expr,
) -> Result<DissipativityReport, DissipativityError> {
    let spec = model.spec();
    let image = spec.successor(xe, ue)?;
    let residual = image
        .iter()
        .zip(xe)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if xe.len() != spec.dim || !(residual <= 1e-9) {
        return Err(DissipativityError::NotEquilibrium {
            x: xe.to_vec(),
            u: ue,
            residual,
        });
    }
    if alpha.uses_control() || alpha.max_state_index().is_some_and(|i| i > 0) {
        return Err(DissipativityError::Alpha("must depend on x1 (the radius) only".into()));
    }
    let radius = |x: &[f64]| x.iter().zip(xe).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let alpha_at = |r: f64| {
        alpha
            .eval(&[r], 0.0)
            .map_err(|e| DissipativityError::Alpha(e.to_string()))
    };
    if alpha_at(0.0)?.abs() > 1e-12 {
        return Err(DissipativityError::Alpha("alpha(0) must be 0".into()));
    }
    let mut radii: Vec<f64> = (0..model.node_count()).map(|i| radius(&model.grid().node(i))).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let mut last = 0.0;
    for r in radii {
        let a = alpha_at(r)?;
        if a < last - 1e-12 {
            return Err(DissipativityError::Alpha(format!("alpha decreases at r = {r}")));
        }
        last = a;
    }
    let c = spec.stage_cost(xe, ue)?;
    let (min, x, u, n, mean) = sweep(model, storage, &|x| alpha_at(radius(x)))?;
    Ok(report(min, x, u, n, mean, c))
}

/// Terminal penalty `psi = -lambda` on the model grid.
pub fn terminal_from_storage(model: &Model, storage: &Storage) -> Result<GridFunction, DissipativityError> {
    check_storage_grid(model, storage)?;
    GridFunction::try_from_fn(model.grid().clone(), |x| storage.eval(x).map(|v| -v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin;

    fn model(name: &str) -> Model {
        Model::new(&builtin(name).unwrap()).unwrap()
    }

    fn storage(m: &Model, name: &str) -> Storage {
        m.spec().attachment(name).unwrap().into()
    }

    #[test]
    fn pwl_storages_pass() {
        let m = model("pwl-zero-avg");
        for name in ["lambda1", "lambda2"] {
            let r = check_dissipativity(&m, &storage(&m, name), 0.0).unwrap();
            assert!(r.pass, "{name}: {}", r.summary());
        }
        assert!(best_certified_shift(&m, &storage(&m, "lambda1")).unwrap().abs() <= 1e-9);
    }

    #[test]
    fn slack_direction() {
        let m = model("pwl-zero-avg");
        let min_cost = (0..m.node_count())
            .flat_map(|i| m.transitions(i).map(|t| t.cost).collect::<Vec<_>>())
            .fold(f64::INFINITY, f64::min);
        let max_cost = (0..m.node_count())
            .flat_map(|i| m.transitions(i).map(|t| t.cost).collect::<Vec<_>>())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(check_dissipativity(&m, &Storage::zero(), min_cost - 1.0).unwrap().pass);
        assert!(!check_dissipativity(&m, &Storage::zero(), max_cost + 1.0).unwrap().pass);
    }

    #[test]
    fn best_shift_is_tight() {
        let m = model("pwl-zero-avg");
        let s = storage(&m, "lambda2");
        let c = best_certified_shift(&m, &s).unwrap();
        let r = check_dissipativity(&m, &s, c).unwrap();
        assert!(r.pass && r.min_margin.abs() <= 1e-15);
        assert!(!check_dissipativity(&m, &s, c + 1e-6).unwrap().pass);
    }

    #[test]
    fn unbounded_problem_is_trivially_dissipative() {
        let m = model("bilinear-unbounded");
        assert_eq!(best_certified_shift(&m, &Storage::zero()).unwrap(), 0.0);
    }

    #[test]
    fn translated_cost_translates_shift() {
        let spec = builtin("two-policies").unwrap();
        let mut shifted = spec.clone();
        shifted.cost = spec.cost.clone() + Expr::constant(5.0);
        let a = best_certified_shift(&Model::new(&spec).unwrap(), &Storage::zero()).unwrap();
        let b = best_certified_shift(&Model::new(&shifted).unwrap(), &Storage::zero()).unwrap();
        assert!((b - a - 5.0).abs() <= 1e-12);
    }

    #[test]
    fn lq_strict_dissipativity() {
        let spec = builtin("lq-discounted").unwrap().with_discount(None);
        let m = Model::new(&spec).unwrap();
        let alpha = Expr::parse("x1^2/2").unwrap();
        let linear = Storage::Expr(Expr::parse("2*x1").unwrap());
        let r = check_strict_dissipativity(&m, &linear, &[0.5], 0.5, &alpha).unwrap();
        assert!(r.pass, "{}", r.summary());
        // Without a storage the cost dips below its equilibrium value.
        let r = check_strict_dissipativity(&m, &Storage::zero(), &[0.5], 0.5, &alpha).unwrap();
        assert!(!r.pass);
        assert!(matches!(
            check_strict_dissipativity(&m, &linear, &[0.5], 0.3, &alpha),
            Err(DissipativityError::NotEquilibrium { .. })
        ));
    }

    #[test]
    fn nonunique_problem_not_strict() {
        let m = model("nonunique-eps");
        let alpha = Expr::parse("x1/10").unwrap();
        let r = check_strict_dissipativity(&m, &Storage::zero(), &[0.0], 0.0, &alpha).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn zero_alpha_matches_plain_check() {
        let m = model("pwl-zero-avg");
        let s = storage(&m, "lambda1");
        let a = check_strict_dissipativity(&m, &s, &[0.0], 0.0, &Expr::constant(0.0)).unwrap();
        let c = m.spec().stage_cost(&[0.0], 0.0).unwrap();
        let b = check_dissipativity(&m, &s, c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_alpha_rejected() {
        let m = model("nonunique-eps");
        for src in ["1 + x1", "-x1", "u"] {
            let alpha = Expr::parse(src).unwrap();
            assert!(matches!(
                check_strict_dissipativity(&m, &Storage::zero(), &[0.0], 0.0, &alpha),
                Err(DissipativityError::Alpha(_))
            ));
        }
    }

    #[test]
    fn terminal_penalty_is_negated_storage() {
        let m = model("pwl-zero-avg");
        let psi = terminal_from_storage(&m, &Storage::zero()).unwrap();
        assert!(psi.values().iter().all(|&v| v == 0.0));
        let s = storage(&m, "lambda1");
        let psi = terminal_from_storage(&m, &s).unwrap();
        for (i, v) in psi.values().iter().enumerate() {
            assert_eq!(*v, -s.eval(&m.grid().node(i)).unwrap());
        }
    }
}
