#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use shiftdp::bellman::{
    apply_alpha_shift, apply_t, apply_t_check, apply_t_hat, apply_t_value, distance, Side,
};
use shiftdp::problem::{builtin, Grid, GridFunction, Model};

pub type Check = Result<(), String>;

/// Builtins whose successors land exactly on grid nodes at default
/// resolution.
pub const ALIGNED: &[&str] = &["nonunique-eps", "pwl-shifted", "pwl-zero-avg", "rotation-2d", "two-policies"];

/// Builtins checked by the law suite. lq-discounted is taken undiscounted so
/// translation laws apply.
pub const LAW_BUILTINS: &[&str] = &[
    "bilinear-lsc",
    "bilinear-unbounded",
    "cubic-autonomous",
    "logistic-chaos",
    "lq-discounted",
    "nonunique-eps",
    "pwl-shifted",
    "pwl-zero-avg",
    "rotation-2d",
    "two-policies",
    "usc-modified",
];

pub fn model(name: &str) -> Model {
    Model::new(&builtin(name).unwrap()).unwrap()
}

pub fn law_model(name: &str) -> Model {
    Model::new(&builtin(name).unwrap().with_discount(None)).unwrap()
}

pub fn named(model: &Model, name: &str) -> GridFunction {
    model
        .spec()
        .attachment(name)
        .unwrap_or_else(|| panic!("{} has no function {name}", model.spec().name))
        .sample(model.grid())
        .unwrap()
}

pub fn zero(model: &Model) -> GridFunction {
    GridFunction::constant(model.grid().clone(), 0.0)
}

/// A smooth random bump plus nodewise noise.
pub fn random_function(grid: &Arc<Grid>, rng: &mut impl Rng) -> GridFunction {
    let amp: f64 = rng.gen_range(0.1..3.0);
    let freq: Vec<f64> = (0..grid.dim()).map(|_| rng.gen_range(0.5..6.0)).collect();
    let phase: f64 = rng.gen_range(0.0..6.3);
    let noise: f64 = rng.gen_range(0.0..1.0);
    let offset: f64 = rng.gen_range(-5.0..5.0);
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let x = grid.node(i);
        let s: f64 = x.iter().zip(&freq).map(|(a, f)| a * f).sum();
        values.push(offset + amp * (s + phase).sin() + noise * rng.gen_range(-1.0..1.0));
    }
    GridFunction::new(grid.clone(), values)
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Largest amount by which `a <= b` is violated.
pub fn excess(a: &GridFunction, b: &GridFunction) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0_f64, |m, (x, y)| m.max(x - y))
}

fn t(model: &Model, psi: &GridFunction) -> GridFunction {
    apply_t_value(model, psi).unwrap()
}

pub fn monotonicity(model: &Model, psi: &GridFunction, bump: &GridFunction) -> Check {
    let upper = psi.zip_with(bump, |p, b| p + b.abs());
    let gap = excess(&t(model, psi), &t(model, &upper));
    ensure(gap <= 1e-9, || format!("monotonicity violated by {gap:e}"))
}

pub fn translation(model: &Model, psi: &GridFunction) -> Check {
    let tp = t(model, psi);
    for c in [-3.0, 0.1, 7.0] {
        let gap = t(model, &psi.add_const(c)).sup_distance(&tp.add_const(c));
        ensure(gap <= 1e-9, || format!("T translation by {c} off by {gap:e}"))?;
        let hat = apply_t_hat(model, &psi.add_const(c)).unwrap();
        let gap = hat.sup_distance(&apply_t_hat(model, psi).unwrap().add_const(c));
        ensure(gap <= 1e-9, || format!("T^ translation by {c} off by {gap:e}"))?;
        let chk = apply_t_check(model, &psi.add_const(c)).unwrap();
        let gap = chk.sup_distance(&apply_t_check(model, psi).unwrap().add_const(c));
        ensure(gap <= 1e-9, || format!("Tv translation by {c} off by {gap:e}"))?;
    }
    Ok(())
}

pub fn min_commutativity(model: &Model, a: &GridFunction, b: &GridFunction, exact: bool) -> Check {
    let lhs = t(model, &a.zip_with(b, f64::min));
    let rhs = t(model, a).zip_with(&t(model, b), f64::min);
    if exact {
        let gap = lhs.sup_distance(&rhs);
        ensure(gap <= 1e-9, || format!("min commutativity off by {gap:e}"))
    } else {
        let gap = excess(&lhs, &rhs);
        ensure(gap <= 1e-9, || format!("T(min) exceeds min(T) by {gap:e}"))
    }
}

pub fn concavity(model: &Model, a: &GridFunction, b: &GridFunction) -> Check {
    let (ta, tb) = (t(model, a), t(model, b));
    for w in [0.25, 0.5] {
        let mix = t(model, &a.zip_with(b, |x, y| w * x + (1.0 - w) * y));
        let gap = excess(&ta.zip_with(&tb, |x, y| w * x + (1.0 - w) * y), &mix);
        ensure(gap <= 1e-9, || format!("concavity at {w} violated by {gap:e}"))?;
    }
    Ok(())
}

pub fn max_super_commutativity(model: &Model, a: &GridFunction, b: &GridFunction) -> Check {
    let lhs = t(model, &a.zip_with(b, f64::max));
    let gap = excess(&t(model, a).zip_with(&t(model, b), f64::max), &lhs);
    ensure(gap <= 1e-9, || format!("max super-commutativity violated by {gap:e}"))
}

pub fn non_expansive(model: &Model, a: &GridFunction, b: &GridFunction) -> Check {
    let before = distance(a, b);
    let after = distance(&t(model, a), &t(model, b));
    ensure(after <= before + 1e-9, || format!("d grew from {before:e} to {after:e}"))
}

pub fn monotone_chains(model: &Model, psi: &GridFunction, steps: usize) -> Check {
    let (mut hat, mut chk) = (psi.clone(), psi.clone());
    for k in 0..steps {
        let h = apply_t_hat(model, &hat).unwrap();
        let c = apply_t_check(model, &chk).unwrap();
        let up = excess(&h, &hat);
        let down = excess(&chk, &c);
        ensure(up <= 0.0, || format!("T^ chain rose by {up:e} at step {k}"))?;
        ensure(down <= 0.0, || format!("Tv chain fell by {down:e} at step {k}"))?;
        hat = h;
        chk = c;
    }
    Ok(())
}

pub fn argmin_determinism(model: &Model, psi: &GridFunction) -> Check {
    let a = apply_t(model, psi).unwrap().1;
    let b = apply_t(model, psi).unwrap().1;
    ensure(a.values() == b.values(), || "argmin tables differ between runs".into())
}

pub fn alpha_half_matches(model: &Model, psi: &GridFunction) -> Check {
    for side in [Side::Min, Side::Max] {
        let a = apply_alpha_shift(model, psi, 0.5, side).unwrap();
        let b = match side {
            Side::Min => apply_t_hat(model, psi).unwrap(),
            Side::Max => apply_t_check(model, psi).unwrap(),
        };
        let gap = a.sup_distance(&b);
        ensure(gap <= 1e-12, || format!("alpha = 1/2 differs by {gap:e}"))?;
    }
    Ok(())
}

/// `range(max_i psi_i)` and `range(min_i psi_i)` are bounded by the largest
/// individual range.
pub fn oscillation_bounds(family: &[GridFunction]) -> Check {
    let widest = family.iter().map(GridFunction::range).fold(0.0, f64::max);
    let hi = family[1..].iter().fold(family[0].clone(), |m, p| m.zip_with(p, f64::max));
    let lo = family[1..].iter().fold(family[0].clone(), |m, p| m.zip_with(p, f64::min));
    ensure(hi.range() <= widest + 1e-12 && lo.range() <= widest + 1e-12, || {
        format!("ranges {} / {} exceed {widest}", hi.range(), lo.range())
    })
}

/// Every pairwise law on one random pair.
pub fn pair_laws(model: &Model, aligned: bool, a: &GridFunction, b: &GridFunction) -> Check {
    monotonicity(model, a, b)?;
    translation(model, a)?;
    min_commutativity(model, a, b, aligned)?;
    concavity(model, a, b)?;
    max_super_commutativity(model, a, b)?;
    non_expansive(model, a, b)?;
    argmin_determinism(model, a)?;
    alpha_half_matches(model, a)
}
