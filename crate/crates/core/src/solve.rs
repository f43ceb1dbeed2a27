//! Iteration drivers and diagnostics.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::bellman::{
    apply_t, apply_t_value, check_alpha, normalize, shift_pair, shifted_from, BellmanError, Side,
};
use crate::problem::{GridFunction, Model};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: BellmanError,
    },
    #[error(transparent)]
    Bellman(#[from] BellmanError),
    #[error("reference function lives on a different grid")]
    GridMismatch,
}

/// The operator applied at each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operator {
    T,
    THat,
    TCheck,
    /// Shifted operator with weight `alpha` on the maximum of `psi - T psi`.
    Alpha { alpha: f64, side: Side },
}

impl Operator {
    fn shifted(self) -> Option<(f64, Side)> {
        match self {
            Operator::T => None,
            Operator::THat => Some((0.5, Side::Min)),
            Operator::TCheck => Some((0.5, Side::Max)),
            Operator::Alpha { alpha, side } => Some((alpha, side)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Converged,
    Period2,
    Diverged,
    Maxiter,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::Period2 => "period2",
            Status::Diverged => "diverged",
            Status::Maxiter => "maxiter",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterateOptions {
    /// Sup-norm step size (and shift change, for shifted operators) that
    /// counts as converged.
    pub tol: f64,
    pub tol_residual: f64,
    pub max_iter: usize,
    /// Divergence is declared once the sup norm or the range of an iterate
    /// exceeds this.
    pub divergence: f64,
    /// Optional fixed point used for the Lyapunov column.
    pub reference: Option<GridFunction>,
}

impl Default for IterateOptions {
    fn default() -> Self {
        IterateOptions {
            tol: 1e-9,
            tol_residual: 1e-8,
            max_iter: 10_000,
            divergence: 1e12,
            reference: None,
        }
    }
}

/// Diagnostics of one step `psi_k -> psi_{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub k: usize,
    /// `c(psi_k, T psi_k)`
    pub c_k: f64,
    /// `W(psi_k) = d(psi_k, T psi_k)`
    pub w_k: f64,
    pub sup_delta: f64,
    /// Extrema of `psi_k - T psi_k`.
    pub min_diff: f64,
    pub max_diff: f64,
    /// `V(psi_k)` against the reference, when one was supplied.
    pub v_k: Option<f64>,
    /// Normalized iteration only: `min[(psi_{k+1} + lambda)^n - (psi_k + lambda)^n]`.
    pub rotated_increase: Option<f64>,
    /// Normalized iteration only: `min[T psi_k - psi_k - c]`.
    pub supersolution_margin: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
}

impl IterationTrace {
    /// CSV with header `k,c_k,W_k,sup_delta,min_diff,max_diff`, plus a `V_k`
    /// column when every row carries one.
    pub fn to_csv(&self) -> String {
        let with_v = !self.rows.is_empty() && self.rows.iter().all(|r| r.v_k.is_some());
        let mut out = String::from("k,c_k,W_k,sup_delta,min_diff,max_diff");
        if with_v {
            out.push_str(",V_k");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.k, r.c_k, r.w_k, r.sup_delta, r.min_diff, r.max_diff
            );
            if with_v {
                let _ = write!(out, ",{:.16e}", r.v_k.unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        out
    }

    pub fn shifts(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.c_k)
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub psi: GridFunction,
    /// Last recorded shift `c(psi_k, T psi_k)`.
    pub c_infty: f64,
    pub status: Status,
    /// `d(psi, T psi)` of the final iterate.
    pub residual: f64,
    /// Shifted Bellman constant of the final iterate (`T psi ~ psi + c`).
    pub be_shift: f64,
    pub iterations: usize,
    pub wall_time: Duration,
}

impl SolveReport {
    /// Anything but convergence only gives a bound on the average cost.
    pub fn bound_only(&self) -> bool {
        self.status != Status::Converged
    }
}

/// Estimated optimal average cost `-c_infty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AverageCost {
    pub value: f64,
    pub bound_only: bool,
}

pub fn average_cost_estimate(report: &SolveReport) -> AverageCost {
    AverageCost {
        value: -report.c_infty,
        bound_only: report.bound_only(),
    }
}

/// `(c, residual)` with `c` the midpoint of the extrema of `T psi - psi` and
/// `residual = d(psi, T psi)`.
pub fn residual_shifted_be(model: &Model, psi: &GridFunction) -> Result<(f64, f64), BellmanError> {
    let t = apply_t_value(model, psi)?;
    let pair = shift_pair(&t, psi);
    Ok((pair.c, pair.d))
}

/// Minimising control at every node for the continuation value `psi`.
pub fn greedy_policy(model: &Model, psi: &GridFunction) -> Result<GridFunction, BellmanError> {
    Ok(apply_t(model, psi)?.1)
}

/// `max[psi - reference] - min[psi - reference]`.
pub fn lyapunov_v(psi: &GridFunction, reference: &GridFunction) -> Result<f64, SolveError> {
    if !psi.same_grid(reference) {
        return Err(SolveError::GridMismatch);
    }
    Ok(2.0 * shift_pair(psi, reference).d)
}

fn diverged(psi: &GridFunction, bound: f64) -> bool {
    psi.sup_norm() > bound || psi.range() > bound
}

struct Normalized<'a> {
    lambda: &'a GridFunction,
    shift: f64,
}

/// Iterates `operator` from `psi0` until convergence, a detected period-2
/// cycle (plain `T` only), divergence or `max_iter`.
pub fn iterate(
    model: &Model,
    psi0: &GridFunction,
    operator: Operator,
    opts: &IterateOptions,
) -> Result<(SolveReport, IterationTrace), SolveError> {
    run(model, psi0, operator, opts, None)
}

/// The normalized recursion `psi^{k+1} = (T^ psi^k)^n` from `psi^0 = -lambda`.
/// Each trace row also records the rotated-problem monotonicity margins
/// with respect to `lambda` and the shift `c`.
pub fn iterate_normalized(
    model: &Model,
    lambda: &GridFunction,
    shift: f64,
    opts: &IterateOptions,
) -> Result<(SolveReport, IterationTrace), SolveError> {
    let psi0 = lambda.map(|v| -v);
    run(model, &psi0, Operator::THat, opts, Some(Normalized { lambda, shift }))
}

fn run(
    model: &Model,
    psi0: &GridFunction,
    operator: Operator,
    opts: &IterateOptions,
    normalized: Option<Normalized<'_>>,
) -> Result<(SolveReport, IterationTrace), SolveError> {
    let start = Instant::now();
    let shifted = operator.shifted();
    if let Some((alpha, _)) = shifted {
        check_alpha(alpha)?;
        if model.discount() < 1.0 {
            return Err(BellmanError::Discounted(model.discount()).into());
        }
    }
    if let Some(r) = &opts.reference {
        if !r.same_grid(psi0) {
            return Err(SolveError::GridMismatch);
        }
    }
    let step_err = |step| move |source| SolveError::Step { step, source };

    let mut trace = IterationTrace::default();
    let mut psi = psi0.clone();
    let mut prev: Option<GridFunction> = None;
    let mut status = Status::Maxiter;
    let mut iterations = 0;
    let mut last_c = f64::NAN;

    for k in 0..opts.max_iter {
        let t = apply_t_value(model, &psi).map_err(step_err(k))?;
        let (mut next, pair) = match shifted {
            None => (t.clone(), shift_pair(&psi, &t)),
            Some((alpha, side)) => shifted_from(&psi, &t, alpha, side),
        };
        let mut row = TraceRow {
            k,
            c_k: pair.c,
            w_k: pair.d,
            sup_delta: 0.0,
            min_diff: pair.min_diff,
            max_diff: pair.max_diff,
            v_k: match &opts.reference {
                Some(r) => Some(lyapunov_v(&psi, r)?),
                None => None,
            },
            rotated_increase: None,
            supersolution_margin: None,
        };
        if let Some(n) = &normalized {
            next = normalize(&next);
            let before = normalize(&psi.zip_with(n.lambda, |p, l| p + l));
            let after = normalize(&next.zip_with(n.lambda, |p, l| p + l));
            row.rotated_increase = Some(shift_pair(&after, &before).min_diff);
            row.supersolution_margin = Some(shift_pair(&t, &psi).min_diff - n.shift);
        }
        row.sup_delta = next.sup_distance(&psi);
        let shift_change = (pair.c - last_c).abs();
        last_c = pair.c;
        trace.rows.push(row.clone());
        iterations = k + 1;

        if diverged(&next, opts.divergence) {
            psi = next;
            status = Status::Diverged;
            break;
        }
        let settled = row.sup_delta <= opts.tol && (shifted.is_none() || shift_change <= opts.tol);
        if settled && residual_shifted_be(model, &next).map_err(step_err(k))?.1 <= opts.tol_residual {
            psi = next;
            status = Status::Converged;
            break;
        }
        if shifted.is_none() {
            if let Some(p) = &prev {
                if shift_pair(&next, p).d <= opts.tol && shift_pair(&next, &psi).d > 10.0 * opts.tol {
                    psi = next;
                    status = Status::Period2;
                    break;
                }
            }
        }
        prev = Some(std::mem::replace(&mut psi, next));
    }

    let (be_shift, residual) = residual_shifted_be(model, &psi).map_err(step_err(iterations))?;
    let report = SolveReport {
        psi,
        c_infty: last_c,
        status,
        residual,
        be_shift,
        iterations,
        wall_time: start.elapsed(),
    };
    Ok((report, trace))
}
