//! Expression trees for the test functions φ.
//!
//! The node set is deliberately small: constants, variables, +, -, *, unary
//! minus, abs, min, max, positive integer powers, and `BoxMax`, a partial
//! maximization of the body over a sub-list of variables confined to an
//! interval box.  Every node is globally Lipschitz on compact boxes, which is
//! what the certified maximizer needs; division never appears.
//!
//! `BoxMax` is how conditional expectations and closed-form PDE solutions stay
//! inside the expression language: maximizing out future coordinates leaves an
//! ordinary expression of the observed ones.

mod simplify;

pub use simplify::simplify;

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::interval::{powi, Interval, UncertaintyInterval};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    /// `base ^ exponent` with a positive integer exponent.
    Pow(Box<Expr>, u32),
    /// `max over (x_v)_{v in vars} in bounds of body`; `vars` and `bounds` run
    /// in lockstep and are kept sorted by variable index.
    BoxMax {
        vars: Vec<usize>,
        bounds: Vec<UncertaintyInterval>,
        body: Box<Expr>,
    },
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c + 0.0)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn abs(self) -> Expr {
        Expr::Abs(Box::new(self))
    }

    pub fn min_of(a: Expr, b: Expr) -> Expr {
        Expr::Min(Box::new(a), Box::new(b))
    }

    pub fn max_of(a: Expr, b: Expr) -> Expr {
        Expr::Max(Box::new(a), Box::new(b))
    }

    pub fn pow(self, k: u32) -> Result<Expr> {
        if k == 0 {
            return Err(Error::invalid("exponent must be a positive integer"));
        }
        Ok(Expr::Pow(Box::new(self), k))
    }

    /// Partial maximization node.  Variables are deduplicated, sorted, and
    /// must come with one bound each.
    pub fn box_max(vars: Vec<usize>, bounds: Vec<UncertaintyInterval>, body: Expr) -> Result<Expr> {
        if vars.is_empty() || vars.len() != bounds.len() {
            return Err(Error::invalid("box_max needs one bound per variable"));
        }
        let mut pairs: Vec<(usize, UncertaintyInterval)> =
            vars.into_iter().zip(bounds).collect();
        pairs.sort_by_key(|&(v, _)| v);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid("box_max variables must be distinct"));
            }
        }
        let (vars, bounds) = pairs.into_iter().unzip();
        Ok(Expr::BoxMax { vars, bounds, body: Box::new(body) })
    }

    /// Sum of a list of expressions; empty list is the constant 0.
    pub fn sum(terms: Vec<Expr>) -> Expr {
        let mut it = terms.into_iter();
        match it.next() {
            None => Expr::Const(0.0),
            Some(first) => it.fold(first, |acc, t| acc + t),
        }
    }

    /// Largest variable index appearing anywhere, bound variables included.
    pub fn max_var_index(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Min(a, b) | Expr::Max(a, b) => {
                match (a.max_var_index(), b.max_var_index()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
            Expr::Neg(a) | Expr::Abs(a) | Expr::Pow(a, _) => a.max_var_index(),
            Expr::BoxMax { vars, body, .. } => {
                let inner = body.max_var_index();
                let bound = vars.iter().copied().max();
                match (inner, bound) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    /// Environment length needed to evaluate this expression.
    pub fn env_size(&self) -> usize {
        self.max_var_index().map_or(0, |i| i + 1)
    }

    /// Variables not bound by any enclosing `BoxMax`.
    pub fn free_vars(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => {
                out.insert(*i);
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Min(a, b) | Expr::Max(a, b) => {
                a.collect_free(out);
                b.collect_free(out);
            }
            Expr::Neg(a) | Expr::Abs(a) | Expr::Pow(a, _) => a.collect_free(out),
            Expr::BoxMax { vars, body, .. } => {
                let mut inner = BTreeSet::new();
                body.collect_free(&mut inner);
                for v in vars {
                    inner.remove(v);
                }
                out.extend(inner);
            }
        }
    }

    /// Number of leading variable slots covering every free variable.
    pub fn arity(&self) -> usize {
        self.free_vars().last().map_or(0, |&i| i + 1)
    }

    pub fn contains_box_max(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Min(a, b) | Expr::Max(a, b) => {
                a.contains_box_max() || b.contains_box_max()
            }
            Expr::Neg(a) | Expr::Abs(a) | Expr::Pow(a, _) => a.contains_box_max(),
            Expr::BoxMax { .. } => true,
        }
    }

    /// Evaluate an expression without `BoxMax` nodes.
    pub fn eval_plain(&self, env: &[f64]) -> Result<f64> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => env
                .get(*i)
                .copied()
                .ok_or(Error::ArityMismatch { var: *i, supplied: env.len() }),
            Expr::Add(a, b) => Ok(a.eval_plain(env)? + b.eval_plain(env)?),
            Expr::Sub(a, b) => Ok(a.eval_plain(env)? - b.eval_plain(env)?),
            Expr::Mul(a, b) => Ok(a.eval_plain(env)? * b.eval_plain(env)?),
            Expr::Neg(a) => Ok(-a.eval_plain(env)?),
            Expr::Abs(a) => Ok(a.eval_plain(env)?.abs()),
            Expr::Min(a, b) => Ok(a.eval_plain(env)?.min(b.eval_plain(env)?)),
            Expr::Max(a, b) => Ok(a.eval_plain(env)?.max(b.eval_plain(env)?)),
            Expr::Pow(a, k) => Ok(powi(a.eval_plain(env)?, *k)),
            Expr::BoxMax { .. } => Err(Error::invalid(
                "expression contains a partial maximization; evaluate it through the maximizer",
            )),
        }
    }

    /// Evaluate with a resolver for `BoxMax` nodes.  The environment must have
    /// `env_size()` slots; bound slots are scratch space for the resolver.
    pub fn eval_with<R: BoxMaxResolver>(&self, env: &mut Vec<f64>, resolver: &mut R) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => env[*i],
            Expr::Add(a, b) => a.eval_with(env, resolver) + b.eval_with(env, resolver),
            Expr::Sub(a, b) => a.eval_with(env, resolver) - b.eval_with(env, resolver),
            Expr::Mul(a, b) => a.eval_with(env, resolver) * b.eval_with(env, resolver),
            Expr::Neg(a) => -a.eval_with(env, resolver),
            Expr::Abs(a) => a.eval_with(env, resolver).abs(),
            Expr::Min(a, b) => {
                let x = a.eval_with(env, resolver);
                let y = b.eval_with(env, resolver);
                x.min(y)
            }
            Expr::Max(a, b) => {
                let x = a.eval_with(env, resolver);
                let y = b.eval_with(env, resolver);
                x.max(y)
            }
            Expr::Pow(a, k) => powi(a.eval_with(env, resolver), *k),
            Expr::BoxMax { vars, bounds, body } => resolver.resolve(vars, bounds, body, env),
        }
    }

    /// Interval enclosure of value and of the partial derivatives with respect
    /// to the tracked variables.  Min/max/abs propagate the subgradient hull,
    /// so the result bounds every Clarke subgradient on the box.
    pub(crate) fn hull_grad(&self, env: &mut Vec<Interval>, track: &Track) -> (Interval, Vec<Interval>) {
        let zero = || vec![Interval::ZERO; track.len()];
        match self {
            Expr::Const(c) => (Interval::point(*c), zero()),
            Expr::Var(i) => {
                let mut g = zero();
                if let Some(p) = track.pos(*i) {
                    g[p] = Interval::point(1.0);
                }
                (env[*i], g)
            }
            Expr::Add(..) => {
                // One-variable quadratic groups evaluate as exact ranges
                // (endpoints plus interior vertex); distinct variables are
                // independent, so exactness survives the sum.  Gradients of
                // such terms are linear and already exact.
                let mut terms = Vec::new();
                add_chain(self, &mut terms);
                let mut quads: std::collections::BTreeMap<usize, (f64, f64)> = Default::default();
                let mut rest = Interval::ZERO;
                let mut gsum = zero();
                for t in terms {
                    let (v, g) = t.hull_grad(env, track);
                    for (acc, gi) in gsum.iter_mut().zip(g) {
                        *acc = acc.add(gi);
                    }
                    match quad_term(t) {
                        Some((i, b, c)) => {
                            let e = quads.entry(i).or_insert((0.0, 0.0));
                            e.0 += b;
                            e.1 += c;
                        }
                        None => rest = rest.add(v),
                    }
                }
                for (i, (b, c)) in quads {
                    rest = rest.add(quad_range(b, c, env[i]));
                }
                (rest, gsum)
            }
            Expr::Sub(a, b) => {
                let (va, ga) = a.hull_grad(env, track);
                let (vb, gb) = b.hull_grad(env, track);
                let g = ga.iter().zip(&gb).map(|(x, y)| x.sub(*y)).collect();
                (va.sub(vb), g)
            }
            Expr::Mul(a, b) => {
                let (va, ga) = a.hull_grad(env, track);
                let (vb, gb) = b.hull_grad(env, track);
                let g = ga
                    .iter()
                    .zip(&gb)
                    .map(|(x, y)| x.mul(vb).add(y.mul(va)))
                    .collect();
                (va.mul(vb), g)
            }
            Expr::Neg(a) => {
                let (va, ga) = a.hull_grad(env, track);
                (va.neg(), ga.into_iter().map(Interval::neg).collect())
            }
            Expr::Abs(a) => {
                let (va, ga) = a.hull_grad(env, track);
                let g = if va.lo >= 0.0 {
                    ga
                } else if va.hi <= 0.0 {
                    ga.into_iter().map(Interval::neg).collect()
                } else {
                    ga.into_iter().map(|x| x.hull(x.neg())).collect()
                };
                (va.abs(), g)
            }
            Expr::Min(a, b) => {
                let (va, ga) = a.hull_grad(env, track);
                let (vb, gb) = b.hull_grad(env, track);
                let g = if va.hi <= vb.lo {
                    ga
                } else if vb.hi <= va.lo {
                    gb
                } else {
                    ga.iter().zip(&gb).map(|(x, y)| x.hull(*y)).collect()
                };
                (va.min(vb), g)
            }
            Expr::Max(a, b) => {
                let (va, ga) = a.hull_grad(env, track);
                let (vb, gb) = b.hull_grad(env, track);
                let g = if va.lo >= vb.hi {
                    ga
                } else if vb.lo >= va.hi {
                    gb
                } else {
                    ga.iter().zip(&gb).map(|(x, y)| x.hull(*y)).collect()
                };
                (va.max(vb), g)
            }
            Expr::Pow(a, k) => {
                let (va, ga) = a.hull_grad(env, track);
                let dcoef = if *k == 1 {
                    Interval::point(1.0)
                } else {
                    va.pow(*k - 1).scale(*k as f64)
                };
                let g = ga.into_iter().map(|x| x.mul(dcoef)).collect();
                (va.pow(*k), g)
            }
            Expr::BoxMax { vars, bounds, body } => {
                // Bound variables range over their bounds and contribute no
                // derivative of their own; the hull of the body's partials in
                // the tracked (outer) variables dominates every subgradient of
                // the partial maximum.  A binder that shadows a tracked index
                // hides it from this subtree, so its entry is zeroed.
                let saved: Vec<Interval> = vars.iter().map(|&v| env[v]).collect();
                for (&v, b) in vars.iter().zip(bounds) {
                    env[v] = b.as_arith();
                }
                let (val, mut g) = body.hull_grad(env, track);
                for &v in vars {
                    if let Some(p) = track.pos(v) {
                        g[p] = Interval::ZERO;
                    }
                }
                for (&v, s) in vars.iter().zip(saved) {
                    env[v] = s;
                }
                (val, g)
            }
        }
    }

    /// Replace free variables according to `map`.  Binders are left untouched
    /// unless a replacement would be captured, in which case only the
    /// colliding bound variables move to fresh indices.  Keeping indices
    /// stable lets independently staged constructions stay structurally
    /// comparable.
    pub fn substitute_free(&self, map: &std::collections::HashMap<usize, Expr>) -> Expr {
        let mut fresh = 1 + self
            .max_var_index()
            .into_iter()
            .chain(map.values().filter_map(|e| e.max_var_index()))
            .chain(map.keys().copied())
            .max()
            .unwrap_or(0);
        self.subst_inner(map, &mut fresh)
    }

    fn subst_inner(&self, map: &std::collections::HashMap<usize, Expr>, fresh: &mut usize) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => map.get(i).cloned().unwrap_or(Expr::Var(*i)),
            Expr::Add(a, b) => Expr::Add(
                Box::new(a.subst_inner(map, fresh)),
                Box::new(b.subst_inner(map, fresh)),
            ),
            Expr::Sub(a, b) => Expr::Sub(
                Box::new(a.subst_inner(map, fresh)),
                Box::new(b.subst_inner(map, fresh)),
            ),
            Expr::Mul(a, b) => Expr::Mul(
                Box::new(a.subst_inner(map, fresh)),
                Box::new(b.subst_inner(map, fresh)),
            ),
            Expr::Neg(a) => Expr::Neg(Box::new(a.subst_inner(map, fresh))),
            Expr::Abs(a) => Expr::Abs(Box::new(a.subst_inner(map, fresh))),
            Expr::Min(a, b) => Expr::Min(
                Box::new(a.subst_inner(map, fresh)),
                Box::new(b.subst_inner(map, fresh)),
            ),
            Expr::Max(a, b) => Expr::Max(
                Box::new(a.subst_inner(map, fresh)),
                Box::new(b.subst_inner(map, fresh)),
            ),
            Expr::Pow(a, k) => Expr::Pow(Box::new(a.subst_inner(map, fresh)), *k),
            Expr::BoxMax { vars, bounds, body } => {
                // Entries targeting a bound variable are shadowed and must not
                // reach the body.  A bound index occurring free in an applied
                // replacement would be captured; only those binders move.
                let body_free = body.free_vars();
                let mut collide: BTreeSet<usize> = BTreeSet::new();
                for (k, repl) in map {
                    if vars.contains(k) || !body_free.contains(k) {
                        continue;
                    }
                    for fv in repl.free_vars() {
                        if vars.contains(&fv) {
                            collide.insert(fv);
                        }
                    }
                }
                let mut extended = map.clone();
                for &v in vars {
                    extended.remove(&v);
                }
                let mut new_vars = Vec::with_capacity(vars.len());
                for &v in vars {
                    if collide.contains(&v) {
                        let nv = *fresh;
                        *fresh += 1;
                        extended.insert(v, Expr::Var(nv));
                        new_vars.push(nv);
                    } else {
                        new_vars.push(v);
                    }
                }
                Expr::BoxMax {
                    vars: new_vars,
                    bounds: bounds.clone(),
                    body: Box::new(body.subst_inner(&extended, fresh)),
                }
            }
        }
    }

    /// Rename free variables by a plain index map (values become `Var`).
    pub fn remap_vars(&self, index_map: &std::collections::HashMap<usize, usize>) -> Expr {
        let map = index_map
            .iter()
            .map(|(&from, &to)| (from, Expr::Var(to)))
            .collect();
        self.substitute_free(&map)
    }
}

/// Callback used by the evaluator to resolve partial maximizations.
pub trait BoxMaxResolver {
    fn resolve(
        &mut self,
        vars: &[usize],
        bounds: &[UncertaintyInterval],
        body: &Expr,
        env: &mut Vec<f64>,
    ) -> f64;
}

/// Lookup from variable index to position in the tracked list.
pub(crate) struct Track {
    pos: Vec<Option<u32>>,
    n: usize,
}

impl Track {
    pub fn new(vars: &[usize], env_size: usize) -> Track {
        let size = env_size.max(vars.iter().map(|&v| v + 1).max().unwrap_or(0));
        let mut pos = vec![None; size];
        for (p, &v) in vars.iter().enumerate() {
            pos[v] = Some(p as u32);
        }
        Track { pos, n: vars.len() }
    }

    fn pos(&self, var: usize) -> Option<usize> {
        self.pos.get(var).copied().flatten().map(|p| p as usize)
    }

    fn len(&self) -> usize {
        self.n
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

fn add_chain<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    match e {
        Expr::Add(a, b) => {
            add_chain(a, out);
            add_chain(b, out);
        }
        other => out.push(other),
    }
}

/// Recognize a sum term of the form `b·x_i + c·x_i²` (a single monomial of
/// degree one or two in one variable, scaled); returns `(i, b, c)`.
fn quad_term(e: &Expr) -> Option<(usize, f64, f64)> {
    match e {
        Expr::Var(i) => Some((*i, 1.0, 0.0)),
        Expr::Pow(base, 2) => match **base {
            Expr::Var(i) => Some((i, 0.0, 1.0)),
            _ => None,
        },
        Expr::Neg(x) => quad_term(x).map(|(i, b, c)| (i, -b, -c)),
        Expr::Mul(a, b) => match (&**a, &**b) {
            (Expr::Const(k), _) => quad_term(b).map(|(i, bb, cc)| (i, k * bb, k * cc)),
            (_, Expr::Const(k)) => quad_term(a).map(|(i, bb, cc)| (i, k * bb, k * cc)),
            (Expr::Var(i), Expr::Var(j)) if i == j => Some((*i, 0.0, 1.0)),
            _ => None,
        },
        _ => None,
    }
}

/// Exact range of `b·x + c·x²` over an interval: endpoints plus the interior
/// vertex when there is one.
fn quad_range(b: f64, c: f64, x: Interval) -> Interval {
    let f = |t: f64| (b + c * t) * t;
    let (e0, e1) = (f(x.lo), f(x.hi));
    let mut out = Interval { lo: e0.min(e1), hi: e0.max(e1) };
    if c != 0.0 {
        let v = -b / (2.0 * c);
        if v > x.lo && v < x.hi {
            let fv = f(v);
            out.lo = out.lo.min(fv);
            out.hi = out.hi.max(fv);
        }
    }
    out
}

// Precedence levels for printing: additive 1, multiplicative 2, unary 3,
// power 4, atoms 5.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(c) if *c < 0.0 => 3,
        _ => 5,
    }
}

fn fmt_child(e: &Expr, parent_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if prec(e) < parent_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Add(a, b) => {
                fmt_child(a, 1, f)?;
                write!(f, " + ")?;
                fmt_child(b, 2, f)
            }
            Expr::Sub(a, b) => {
                fmt_child(a, 1, f)?;
                write!(f, " - ")?;
                fmt_child(b, 2, f)
            }
            Expr::Mul(a, b) => {
                fmt_child(a, 2, f)?;
                write!(f, " * ")?;
                fmt_child(b, 3, f)
            }
            Expr::Neg(a) => {
                write!(f, "-")?;
                fmt_child(a, 3, f)
            }
            Expr::Abs(a) => write!(f, "abs({a})"),
            Expr::Min(a, b) => write!(f, "min({a}, {b})"),
            Expr::Max(a, b) => write!(f, "max({a}, {b})"),
            Expr::Pow(a, k) => {
                fmt_child(a, 5, f)?;
                write!(f, "^{k}")
            }
            Expr::BoxMax { vars, bounds, body } => {
                write!(f, "max[")?;
                for (n, (v, b)) in vars.iter().zip(bounds).enumerate() {
                    if n > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "x{v} in [{}, {}]", b.lo(), b.hi())?;
                }
                write!(f, "]({body})")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> UncertaintyInterval {
        UncertaintyInterval::new(lo, hi).unwrap()
    }

    #[test]
    fn eval_plain_matches_hand_values() {
        // max(x0, 1) * x1^2 at (0.5, 3).
        let e = Expr::max_of(Expr::var(0), Expr::constant(1.0)) * Expr::var(1).pow(2).unwrap();
        assert_eq!(e.arity(), 2);
        assert_eq!(e.eval_plain(&[0.5, 3.0]).unwrap(), 9.0);
        assert_eq!(e.eval_plain(&[2.0, 3.0]).unwrap(), 18.0);
    }

    #[test]
    fn eval_plain_rejects_missing_slot() {
        let e = Expr::var(2);
        assert!(matches!(
            e.eval_plain(&[0.0, 1.0]),
            Err(Error::ArityMismatch { var: 2, supplied: 2 })
        ));
    }

    #[test]
    fn free_vars_skip_bound_ones() {
        let body = Expr::var(0) + Expr::var(3);
        let e = Expr::box_max(vec![3], vec![iv(0.0, 1.0)], body).unwrap();
        let free = e.free_vars();
        assert!(free.contains(&0));
        assert!(!free.contains(&3));
        assert_eq!(e.arity(), 1);
        assert_eq!(e.env_size(), 4);
    }

    #[test]
    fn hull_encloses_values() {
        let e = Expr::var(0) * Expr::var(1) - Expr::var(0).pow(2).unwrap();
        let track = Track::new(&[0, 1], 2);
        let mut env = vec![
            Interval { lo: 0.0, hi: 1.0 },
            Interval { lo: 0.0, hi: 1.0 },
        ];
        let (h, _) = e.hull_grad(&mut env, &track);
        assert!(h.lo <= -0.0 && h.hi >= 0.25);
    }

    #[test]
    fn hull_sum_of_quadratics_is_exact_per_variable() {
        // 2*x0 + (-1.75)*x0^2 on [0,1]: endpoints give 0 and 0.25, the
        // interior vertex 4/7; a term-by-term hull would report [-1.75, 2].
        let e = Expr::constant(2.0) * Expr::var(0)
            + Expr::constant(-1.75) * Expr::var(0).pow(2).unwrap();
        let track = Track::new(&[0], 1);
        let mut env = vec![Interval { lo: 0.0, hi: 1.0 }];
        let (h, _) = e.hull_grad(&mut env, &track);
        assert_eq!(h.lo, 0.0);
        assert!((h.hi - 4.0 / 7.0).abs() <= 1e-12);
    }

    #[test]
    fn hull_grad_detects_cancellation() {
        // The value hull of (x0 + x1) - (x0 + x1) cannot see the dependency,
        // but the derivative intervals cancel exactly: [1,1] - [1,1] = [0,0].
        let s = Expr::var(0) + Expr::var(1);
        let e = s.clone() - s;
        let track = Track::new(&[0, 1], 2);
        let mut env = vec![Interval { lo: -1.0, hi: 1.0 }; 2];
        let (v, g) = e.hull_grad(&mut env, &track);
        assert!(v.lo <= 0.0 && v.hi >= 0.0);
        for gi in g {
            assert_eq!(gi.lo, 0.0);
            assert_eq!(gi.hi, 0.0);
        }
    }

    #[test]
    fn hull_grad_product_bound() {
        // d(x0*x1) on [0,1]^2 is ([0,1], [0,1]).
        let e = Expr::var(0) * Expr::var(1);
        let track = Track::new(&[0, 1], 2);
        let mut env = vec![Interval { lo: 0.0, hi: 1.0 }; 2];
        let (_, g) = e.hull_grad(&mut env, &track);
        assert_eq!(g[0].hi, 1.0);
        assert_eq!(g[1].hi, 1.0);
    }

    #[test]
    fn substitution_renames_bound_vars() {
        let body = Expr::var(0) + Expr::var(5);
        let e = Expr::box_max(vec![5], vec![iv(0.0, 1.0)], body).unwrap();
        let mut map = std::collections::HashMap::new();
        map.insert(0usize, Expr::var(5));
        let s = e.substitute_free(&map);
        // The free x0 became x5; the bound variable moved out of the way.
        match &s {
            Expr::BoxMax { vars, body, .. } => {
                assert_ne!(vars[0], 5);
                let free = body.free_vars();
                assert!(free.contains(&5));
            }
            other => panic!("unexpected shape {other:?}"),
        }
        assert_eq!(s.free_vars().into_iter().collect::<Vec<_>>(), vec![5]);
    }

    #[test]
    fn substitution_keeps_binders_when_no_capture() {
        let body = Expr::var(0) + Expr::var(5);
        let e = Expr::box_max(vec![5], vec![iv(0.0, 1.0)], body).unwrap();
        let mut map = std::collections::HashMap::new();
        map.insert(0usize, Expr::var(1) * Expr::constant(2.0));
        let s = e.substitute_free(&map);
        match &s {
            Expr::BoxMax { vars, .. } => assert_eq!(vars, &vec![5]),
            other => panic!("unexpected shape {other:?}"),
        }
    }

    #[test]
    fn display_round_trips_visually() {
        let e = (Expr::var(0) - Expr::var(1)).abs();
        assert_eq!(e.to_string(), "abs(x0 - x1)");
        let e = Expr::max_of(Expr::var(0), Expr::constant(1.0)) * Expr::var(1).pow(2).unwrap();
        assert_eq!(e.to_string(), "max(x0, 1) * x1^2");
        let e = (Expr::var(0) + Expr::var(1)) * Expr::var(2);
        assert_eq!(e.to_string(), "(x0 + x1) * x2");
    }
}
