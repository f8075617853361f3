//! Certified box-constrained maximization.
//!
//! The certified mode runs a deterministic branch-and-bound search.  Each
//! cell carries an upper bound taken as the tighter of the interval hull and
//! a first-order bound `f(center) + sum_i sup|df/dx_i| * halfwidth_i` from
//! interval-valued partial derivatives.  Cells are processed in synchronous
//! waves; results are collected in cell order before any reduction, so the
//! outcome does not depend on thread count.  Nested partial maximizations in
//! the expression are resolved by recursive searches whose two-sided error is
//! threaded through the arithmetic of the enclosing evaluation.
//!
//! Certificates are exact up to f64 rounding: interval arithmetic here rounds
//! to nearest rather than outward, which is far below the tolerances this
//! crate works at.
//!
//! The heuristic mode (multi-start pattern search) handles any arity but
//! reports an infinite error bound.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{simplify, Expr, Track};
use crate::interval::{Interval, MaximalVector};

/// Beyond this many search axes the certified mode refuses to run.
pub const DEFAULT_CERTIFIED_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Certified,
    Heuristic,
}

#[derive(Debug, Clone)]
pub struct MaxOptions {
    /// Target error bound for the certified search.
    pub epsilon: f64,
    pub mode: SearchMode,
    /// Arity limit for the certified mode.
    pub certified_cap: usize,
    /// Hard cap on point evaluations across the whole search tree.
    pub eval_budget: u64,
    /// Seed for the heuristic starts; ignored by the certified mode.
    pub seed: u64,
}

impl Default for MaxOptions {
    fn default() -> Self {
        MaxOptions {
            epsilon: 1e-6,
            mode: SearchMode::Certified,
            certified_cap: DEFAULT_CERTIFIED_CAP,
            eval_budget: 200_000_000,
            seed: 0,
        }
    }
}

impl MaxOptions {
    pub fn with_epsilon(epsilon: f64) -> Self {
        MaxOptions { epsilon, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::BadEpsilon(self.epsilon));
        }
        Ok(())
    }
}

/// Result of a maximization or point evaluation.
///
/// When `certified` holds, the true value lies within `error_bound` of
/// `value`.  Heuristic results report `f64::INFINITY`.
#[derive(Debug, Clone)]
pub struct CertifiedValue {
    pub value: f64,
    pub error_bound: f64,
    pub evaluations: u64,
    /// Point at which `value` was attained (search axes in order).
    pub argmax: Vec<f64>,
    pub certified: bool,
}

struct Budget {
    used: AtomicU64,
    cap: u64,
}

impl Budget {
    fn new(cap: u64) -> Self {
        Budget { used: AtomicU64::new(0), cap }
    }

    fn charge(&self) -> Result<()> {
        let prev = self.used.fetch_add(1, Ordering::Relaxed);
        if prev >= self.cap {
            Err(Error::EvalBudget { evals: prev + 1, budget: self.cap })
        } else {
            Ok(())
        }
    }

    fn total(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }
}

/// Point value with a two-sided enclosure of the true value.
#[derive(Clone, Copy, Debug)]
struct Enc {
    v: f64,
    lo: f64,
    hi: f64,
}

impl Enc {
    fn exact(v: f64) -> Enc {
        Enc { v, lo: v, hi: v }
    }

    fn iv(self) -> Interval {
        Interval { lo: self.lo, hi: self.hi }
    }

    fn from_iv(v: f64, i: Interval) -> Enc {
        Enc { v, lo: i.lo.min(v), hi: i.hi.max(v) }
    }
}

/// Maximize `e` over the box `domain`; the i-th interval bounds variable i.
pub fn maximize(e: &Expr, domain: &MaximalVector, opts: &MaxOptions) -> Result<CertifiedValue> {
    opts.validate()?;
    let e = simplify(e);
    let arity = e.arity();
    if domain.dim() < arity {
        return Err(Error::DimensionMismatch { expected: arity, got: domain.dim() });
    }
    let boxes: Vec<(f64, f64)> = domain.intervals().iter().map(|b| (b.lo(), b.hi())).collect();
    let axes: Vec<usize> = (0..domain.dim()).collect();
    let base_env = vec![0.0; e.env_size().max(domain.dim())];
    let budget = Budget::new(opts.eval_budget);
    match opts.mode {
        SearchMode::Certified => {
            if domain.dim() > opts.certified_cap {
                return Err(Error::CertifiedCap { arity: domain.dim(), cap: opts.certified_cap });
            }
            let out = bnb(&e, &axes, &boxes, &base_env, opts.epsilon, opts.epsilon / 4.0, &budget)?;
            // Reported value is the guaranteed attained lower end; the true
            // maximum lies in [value, value + error_bound].
            Ok(CertifiedValue {
                value: out.lower,
                error_bound: (out.upper - out.lower).max(0.0),
                evaluations: budget.total(),
                argmax: out.argmax,
                certified: true,
            })
        }
        SearchMode::Heuristic => {
            let out = heuristic(&e, &boxes, &base_env, opts, &budget)?;
            Ok(CertifiedValue {
                value: out.value,
                error_bound: f64::INFINITY,
                evaluations: budget.total(),
                argmax: out.argmax,
                certified: false,
            })
        }
    }
}

/// Certified evaluation of a closed or fully supplied expression.  `env`
/// provides the free variables; nested partial maximizations are resolved to
/// precision `opts.epsilon`.
pub fn certified_eval(e: &Expr, env: &[f64], opts: &MaxOptions) -> Result<CertifiedValue> {
    opts.validate()?;
    let e = simplify(e);
    let arity = e.arity();
    if env.len() < arity {
        return Err(Error::DimensionMismatch { expected: arity, got: env.len() });
    }
    let budget = Budget::new(opts.eval_budget);
    let mut full = vec![0.0; e.env_size().max(env.len())];
    full[..env.len()].copy_from_slice(env);
    let enc = eval_enclosed(&e, &full, opts.epsilon, &budget)?;
    Ok(CertifiedValue {
        value: enc.lo,
        error_bound: (enc.hi - enc.lo).max(0.0),
        evaluations: budget.total(),
        argmax: env.to_vec(),
        certified: true,
    })
}

/// Supremum of the Euclidean gradient norm over the box, from interval
/// partial derivatives.  Subgradient hulls cover the kinks of abs/min/max.
pub fn lipschitz_bound(e: &Expr, domain: &MaximalVector) -> Result<f64> {
    let e = simplify(&e.clone());
    let arity = e.arity();
    if domain.dim() < arity {
        return Err(Error::DimensionMismatch { expected: arity, got: domain.dim() });
    }
    let axes: Vec<usize> = (0..domain.dim()).collect();
    let track = Track::new(&axes, e.env_size().max(domain.dim()));
    let mut env = vec![Interval::ZERO; e.env_size().max(domain.dim())];
    for (i, b) in domain.intervals().iter().enumerate() {
        env[i] = Interval { lo: b.lo(), hi: b.hi() };
    }
    let (_, grads) = e.hull_grad(&mut env, &track);
    let sq: f64 = grads.iter().map(|g| g.abs_max() * g.abs_max()).sum();
    let l = sq.sqrt();
    if !l.is_finite() {
        return Err(Error::NonFinite("gradient bound"));
    }
    Ok(l)
}

struct BnbOutcome {
    value: f64,
    lower: f64,
    upper: f64,
    argmax: Vec<f64>,
}

struct CellEval {
    ub: f64,
    /// Best evaluated point of this cell: guaranteed lower end, raw value,
    /// and the coordinates.
    lower: f64,
    value: f64,
    point: Vec<f64>,
    /// Axis whose refinement can actually tighten the bound: largest
    /// slope-bound × halfwidth product.  None when the cell is provably flat
    /// along every axis, in which case splitting is pointless.
    split_axis: Option<usize>,
}

fn midpoints(cell: &[(f64, f64)]) -> Vec<f64> {
    cell.iter().map(|&(lo, hi)| lo + (hi - lo) / 2.0).collect()
}

fn eval_cell(
    e: &Expr,
    cell: &[(f64, f64)],
    axes: &[usize],
    base_env: &[f64],
    track: &Track,
    env_size: usize,
    delta: f64,
    budget: &Budget,
) -> Result<CellEval> {
    let mut ienv = vec![Interval::ZERO; env_size];
    for (i, &x) in base_env.iter().enumerate() {
        ienv[i] = Interval::point(x);
    }
    for (&a, &(lo, hi)) in axes.iter().zip(cell) {
        ienv[a] = Interval { lo, hi };
    }
    let (hull, grads) = e.hull_grad(&mut ienv, track);
    let center = midpoints(cell);
    let mut env = vec![0.0; env_size];
    env[..base_env.len()].copy_from_slice(base_env);
    for (&a, &c) in axes.iter().zip(&center) {
        env[a] = c;
    }
    let enc = eval_enclosed(e, &env, delta, budget)?;
    let mut first_order = enc.hi;
    let mut split_axis = None;
    let mut split_score = 0.0;
    for (i, (g, &(lo, hi))) in grads.iter().zip(cell).enumerate() {
        let half = (hi - lo) / 2.0;
        let term = g.abs_max() * half;
        first_order += term;
        let mid = lo + half;
        if term > split_score && mid > lo && mid < hi {
            split_score = term;
            split_axis = Some(i);
        }
    }
    let ub = hull.hi.min(first_order);
    if !ub.is_finite() || !enc.v.is_finite() {
        return Err(Error::NonFinite("cell bound"));
    }
    // A maximum on the cell boundary defeats center sampling (the gap then
    // shrinks only linearly), so also probe the corner the derivative signs
    // point at; on axes where the sign is undecided, stay at the center.
    let mut corner = center.clone();
    let mut moved = false;
    for (i, (g, &(lo, hi))) in grads.iter().zip(cell).enumerate() {
        if g.lo > 0.0 {
            corner[i] = hi;
            moved = true;
        } else if g.hi < 0.0 {
            corner[i] = lo;
            moved = true;
        }
    }
    let (lower, value, point) = if moved {
        for (&a, &c) in axes.iter().zip(&corner) {
            env[a] = c;
        }
        let enc2 = eval_enclosed(e, &env, delta, budget)?;
        if enc2.lo > enc.lo {
            (enc2.lo, enc2.v, corner)
        } else {
            (enc.lo, enc.v, center)
        }
    } else {
        (enc.lo, enc.v, center)
    };
    Ok(CellEval { ub, lower, value, point, split_axis })
}

/// Branch and bound for the maximum of `e` as the variables listed in `axes`
/// range over `boxes`, all other variables pinned to `base_env`.
fn bnb(
    e: &Expr,
    axes: &[usize],
    boxes: &[(f64, f64)],
    base_env: &[f64],
    gap_target: f64,
    delta: f64,
    budget: &Budget,
) -> Result<BnbOutcome> {
    let env_size = e
        .env_size()
        .max(base_env.len())
        .max(axes.iter().map(|&a| a + 1).max().unwrap_or(0));
    if axes.is_empty() {
        let mut env = vec![0.0; env_size];
        env[..base_env.len()].copy_from_slice(base_env);
        let enc = eval_enclosed(e, &env, delta, budget)?;
        return Ok(BnbOutcome { value: enc.v, lower: enc.lo, upper: enc.hi, argmax: vec![] });
    }
    let track = Track::new(axes, env_size);

    let root = eval_cell(e, boxes, axes, base_env, &track, env_size, delta, budget)?;
    let mut best_value = root.value;
    let mut best_lower = root.lower;
    let mut best_arg = root.point.clone();
    let mut live: Vec<(Vec<(f64, f64)>, f64, Option<usize>)> =
        vec![(boxes.to_vec(), root.ub, root.split_axis)];

    let upper = loop {
        live.retain(|&(_, ub, _)| ub > best_lower);
        let upper = live
            .iter()
            .map(|&(_, ub, _)| ub)
            .fold(best_lower, f64::max);
        if upper - best_lower <= gap_target || live.is_empty() {
            break upper;
        }
        // Unsplittable cells (flat in every axis, or at f64 resolution) ride
        // along so the global upper bound stays honest.
        let mut carried: Vec<(Vec<(f64, f64)>, f64, Option<usize>)> = Vec::new();
        let mut children: Vec<Vec<(f64, f64)>> = Vec::with_capacity(live.len() * 2);
        for (cell, ub, split_axis) in live.drain(..) {
            let Some(axis) = split_axis else {
                carried.push((cell, ub, None));
                continue;
            };
            let (lo, hi) = cell[axis];
            let mid = lo + (hi - lo) / 2.0;
            let mut left = cell.clone();
            left[axis] = (lo, mid);
            let mut right = cell;
            right[axis] = (mid, hi);
            children.push(left);
            children.push(right);
        }
        if children.is_empty() {
            // Every live cell is flat or resolved; the fold above already
            // priced them into the upper bound.
            break upper;
        }
        let evals: Vec<CellEval> = children
            .par_iter()
            .map(|c| eval_cell(e, c, axes, base_env, &track, env_size, delta, budget))
            .collect::<Result<Vec<_>>>()?;
        for (cell, ev) in children.into_iter().zip(evals) {
            if ev.lower > best_lower {
                best_lower = ev.lower;
                best_value = ev.value;
                best_arg = ev.point;
            }
            // A cell already resolved to within the target gap cannot improve
            // the answer by splitting; carry it so only the frontier refines.
            let axis = if ev.ub - ev.lower <= gap_target { None } else { ev.split_axis };
            carried.push((cell, ev.ub, axis));
        }
        live = carried;
    };
    let upper = upper.max(best_lower);
    Ok(BnbOutcome { value: best_value, lower: best_lower, upper, argmax: best_arg })
}

fn heuristic(
    e: &Expr,
    boxes: &[(f64, f64)],
    base_env: &[f64],
    opts: &MaxOptions,
    budget: &Budget,
) -> Result<BnbOutcome> {
    let env_size = e.env_size().max(boxes.len()).max(base_env.len());
    let delta = opts.epsilon / 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n_starts = 8;
    let mut starts: Vec<Vec<f64>> = vec![midpoints(boxes)];
    for _ in 1..n_starts {
        starts.push(
            boxes
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..hi) } else { lo })
                .collect(),
        );
    }
    let mut best_value = f64::NEG_INFINITY;
    let mut best_arg = starts[0].clone();
    for start in starts {
        let mut x = start;
        let mut step: Vec<f64> = boxes.iter().map(|&(lo, hi)| (hi - lo) / 4.0).collect();
        let mut env = vec![0.0; env_size];
        env[..base_env.len()].copy_from_slice(base_env);
        env[..x.len()].copy_from_slice(&x);
        let mut val = eval_enclosed(e, &env, delta, budget)?.v;
        let tol: f64 = boxes
            .iter()
            .map(|&(lo, hi)| hi - lo)
            .fold(0.0, f64::max)
            * 1e-9;
        while step.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > tol.max(1e-12) {
            let mut improved = false;
            for axis in 0..boxes.len() {
                for dir in [-1.0, 1.0] {
                    let mut cand = x.clone();
                    cand[axis] =
                        (cand[axis] + dir * step[axis]).clamp(boxes[axis].0, boxes[axis].1);
                    if cand[axis] == x[axis] {
                        continue;
                    }
                    let mut env = vec![0.0; env_size];
                    env[..base_env.len()].copy_from_slice(base_env);
                    env[..cand.len()].copy_from_slice(&cand);
                    let v = eval_enclosed(e, &env, delta, budget)?.v;
                    if v > val {
                        val = v;
                        x = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                for s in &mut step {
                    *s /= 2.0;
                }
            }
        }
        if val > best_value {
            best_value = val;
            best_arg = x;
        }
    }
    Ok(BnbOutcome { value: best_value, lower: best_value, upper: f64::INFINITY, argmax: best_arg })
}

/// Evaluate with nested partial maximizations resolved by recursive certified
/// searches; returns the point value and an enclosure of the true value.
fn eval_enclosed(e: &Expr, env: &[f64], delta: f64, budget: &Budget) -> Result<Enc> {
    budget.charge()?;
    eval_node(e, env, delta, budget)
}

fn eval_node(e: &Expr, env: &[f64], delta: f64, budget: &Budget) -> Result<Enc> {
    Ok(match e {
        Expr::Const(c) => Enc::exact(*c),
        Expr::Var(i) => {
            let v = *env.get(*i).ok_or(Error::ArityMismatch { var: *i, supplied: env.len() })?;
            Enc::exact(v)
        }
        Expr::Add(a, b) => {
            let x = eval_node(a, env, delta, budget)?;
            let y = eval_node(b, env, delta, budget)?;
            Enc::from_iv(x.v + y.v, x.iv().add(y.iv()))
        }
        Expr::Sub(a, b) => {
            let x = eval_node(a, env, delta, budget)?;
            let y = eval_node(b, env, delta, budget)?;
            Enc::from_iv(x.v - y.v, x.iv().sub(y.iv()))
        }
        Expr::Mul(a, b) => {
            let x = eval_node(a, env, delta, budget)?;
            let y = eval_node(b, env, delta, budget)?;
            Enc::from_iv(x.v * y.v, x.iv().mul(y.iv()))
        }
        Expr::Neg(a) => {
            let x = eval_node(a, env, delta, budget)?;
            Enc::from_iv(-x.v, x.iv().neg())
        }
        Expr::Abs(a) => {
            let x = eval_node(a, env, delta, budget)?;
            Enc::from_iv(x.v.abs(), x.iv().abs())
        }
        Expr::Min(a, b) => {
            let x = eval_node(a, env, delta, budget)?;
            let y = eval_node(b, env, delta, budget)?;
            Enc::from_iv(x.v.min(y.v), x.iv().min(y.iv()))
        }
        Expr::Max(a, b) => {
            let x = eval_node(a, env, delta, budget)?;
            let y = eval_node(b, env, delta, budget)?;
            Enc::from_iv(x.v.max(y.v), x.iv().max(y.iv()))
        }
        Expr::Pow(a, k) => {
            let x = eval_node(a, env, delta, budget)?;
            Enc::from_iv(crate::interval::powi(x.v, *k), x.iv().pow(*k))
        }
        Expr::BoxMax { vars, bounds, body } => {
            // Maximize the body over the bound variables, every other
            // variable pinned to its current value.
            let inner_boxes: Vec<(f64, f64)> =
                bounds.iter().map(|b| (b.lo(), b.hi())).collect();
            let out = bnb(body, vars, &inner_boxes, env, delta, delta / 4.0, budget)?;
            Enc { v: out.value, lo: out.lower, hi: out.upper }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::UncertaintyInterval;

    fn iv(lo: f64, hi: f64) -> UncertaintyInterval {
        UncertaintyInterval::new(lo, hi).unwrap()
    }

    fn unit_square() -> MaximalVector {
        MaximalVector::new(vec![iv(0.0, 1.0), iv(0.0, 1.0)]).unwrap()
    }

    #[test]
    fn factored_product_under_nested_max_stays_cheap() {
        // Quadratic-times-quadratic in separate variables, one maximized out
        // by an inner search.  Expanding the product would wreck the interval
        // gradients (every monomial sees the inner variable independently),
        // turning the outer search linear; factored it converges in a few
        // hundred evaluations.
        let a = Expr::constant(-1.0)
            + Expr::constant(-1.25) * Expr::var(2)
            + Expr::constant(-1.75) * Expr::var(2) * Expr::var(2);
        let b = Expr::constant(-1.0)
            + Expr::constant(-1.75) * Expr::var(0)
            + Expr::constant(1.0) * Expr::var(0) * Expr::var(0);
        let nested = Expr::box_max(vec![2], vec![iv(0.0, 1.0)], a * b).unwrap();
        let dom = MaximalVector::new(vec![iv(0.0, 1.0)]).unwrap();
        let r = maximize(&nested, &dom, &MaxOptions::with_epsilon(2.5e-7)).unwrap();
        // max over x2 of alpha is alpha(1) = -4 (negative beta flips it to the
        // minimum of alpha); outer max of -4*beta(x0) sits at x0 = 7/8.
        assert!((r.value - 7.0625).abs() <= 2.5e-7);
        assert!(r.evaluations < 10_000, "evals = {}", r.evaluations);
    }

    #[test]
    fn quadratic_saddle_on_unit_square() {
        // max of x0*x1 - x0^2 is 1/4 at (1/2, 1).
        let e = Expr::var(0) * Expr::var(1) - Expr::var(0) * Expr::var(0);
        let r = maximize(&e, &unit_square(), &MaxOptions::with_epsilon(1e-8)).unwrap();
        assert!(r.certified);
        assert!(r.error_bound <= 1e-8, "error bound {}", r.error_bound);
        assert!((r.value - 0.25).abs() <= 1e-8, "value {}", r.value);
        assert!((r.argmax[0] - 0.5).abs() < 1e-3 && (r.argmax[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kinked_objective() {
        // max of |x0 - 1/4| on [0,1] is 3/4 at x0 = 1.
        let e = (Expr::var(0) - Expr::constant(0.25)).abs();
        let dom = MaximalVector::new(vec![iv(0.0, 1.0)]).unwrap();
        let r = maximize(&e, &dom, &MaxOptions::with_epsilon(1e-9)).unwrap();
        assert!((r.value - 0.75).abs() <= 1e-9);
    }

    #[test]
    fn cancelled_expression_is_free() {
        let s = Expr::var(0) + Expr::var(1);
        let e = s.clone() - s;
        let r = maximize(&e, &unit_square(), &MaxOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.error_bound, 0.0);
        assert!(r.evaluations <= 2);
    }

    #[test]
    fn nested_partial_max_resolved() {
        // f(x0) = max_y (x0*y - y^2) = x0^2/4; its max over [0,1] is 1/4.
        let inner = Expr::box_max(
            vec![1],
            vec![iv(0.0, 1.0)],
            Expr::var(0) * Expr::var(1) - Expr::var(1) * Expr::var(1),
        )
        .unwrap();
        let dom = MaximalVector::new(vec![iv(0.0, 1.0)]).unwrap();
        let r = maximize(&inner, &dom, &MaxOptions::with_epsilon(1e-5)).unwrap();
        assert!(r.certified);
        assert!((r.value - 0.25).abs() <= 2e-5, "value {}", r.value);
        assert!(r.error_bound <= 1e-5 + 1e-9, "error {}", r.error_bound);
    }

    #[test]
    fn closed_expression_certified_eval() {
        let e = Expr::box_max(vec![0], vec![iv(-1.0, 2.0)], Expr::var(0) * Expr::var(0)).unwrap();
        let r = certified_eval(&e, &[], &MaxOptions::with_epsilon(1e-7)).unwrap();
        assert!((r.value - 4.0).abs() <= 1e-6, "value {}", r.value);
    }

    #[test]
    fn heuristic_mode_reports_unbounded_error() {
        let e = Expr::var(0) * Expr::var(1) - Expr::var(0) * Expr::var(0);
        let mut opts = MaxOptions::with_epsilon(1e-6);
        opts.mode = SearchMode::Heuristic;
        opts.seed = 7;
        let r = maximize(&e, &unit_square(), &opts).unwrap();
        assert!(!r.certified);
        assert!(r.error_bound.is_infinite());
        assert!((r.value - 0.25).abs() < 1e-3, "value {}", r.value);
    }

    #[test]
    fn certified_cap_enforced() {
        let e = Expr::sum((0..9).map(Expr::var).collect());
        let dom = MaximalVector::new(vec![iv(0.0, 1.0); 9]).unwrap();
        let err = maximize(&e, &dom, &MaxOptions::default()).unwrap_err();
        assert!(matches!(err, Error::CertifiedCap { arity: 9, cap: 8 }));
    }

    #[test]
    fn eval_budget_enforced() {
        let e = Expr::var(0) * Expr::var(1) - Expr::var(0) * Expr::var(0);
        let mut opts = MaxOptions::with_epsilon(1e-12);
        opts.eval_budget = 3;
        let err = maximize(&e, &unit_square(), &opts).unwrap_err();
        assert!(matches!(err, Error::EvalBudget { .. }));
    }

    #[test]
    fn deterministic_across_runs() {
        let e = (Expr::var(0) - Expr::constant(0.3)).abs() * Expr::var(1)
            + Expr::var(2).pow(2).unwrap();
        let dom = MaximalVector::new(vec![iv(-1.0, 1.0); 3]).unwrap();
        let a = maximize(&e, &dom, &MaxOptions::with_epsilon(1e-7)).unwrap();
        let b = maximize(&e, &dom, &MaxOptions::with_epsilon(1e-7)).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.error_bound.to_bits(), b.error_bound.to_bits());
        assert_eq!(a.evaluations, b.evaluations);
        assert_eq!(a.argmax, b.argmax);
    }

    #[test]
    fn lipschitz_bound_covers_slope() {
        // |x0| + 3*x1 has gradient (sign(x0), 3); norm bound sqrt(1 + 9).
        let e = Expr::var(0).abs() + Expr::constant(3.0) * Expr::var(1);
        let dom = MaximalVector::new(vec![iv(-1.0, 1.0), iv(-1.0, 1.0)]).unwrap();
        let l = lipschitz_bound(&e, &dom).unwrap();
        assert!((l - (10.0f64).sqrt()).abs() < 1e-12);
    }
}
