//! Algebraic normalization.
//!
//! Expressions are rewritten into a canonical form: sums become flattened,
//! key-sorted linear combinations with merged coefficients, products pull
//! constants out front and merge repeated factors into powers, symmetric
//! min/max sort their operands, and directly nested partial maximizations
//! collapse into one.  Structurally equal subtrees therefore cancel exactly,
//! which turns identities like additivity residuals and tower-property
//! differences into the literal constant zero before any numeric search runs.
//!
//! Products over sums are expanded only when the expanded sum ends up with
//! strictly fewer terms, i.e. when cross terms actually cancel or merge.
//! Factored products evaluate much tighter in interval arithmetic (the
//! expansion decouples every monomial), so they are kept whenever expansion
//! buys nothing.
//!
//! Normalization may reassociate floating-point arithmetic; certified values
//! always refer to the normalized expression.

use std::collections::BTreeMap;

use super::Expr;

/// Expansion of a product over sums is abandoned beyond this many monomials.
const MAX_DISTRIBUTED_TERMS: usize = 32;

pub fn simplify(e: &Expr) -> Expr {
    simp(e.clone())
}

/// Structural key; total order on canonical trees.  Two expressions built
/// through the same normalization compare byte-equal exactly when they are the
/// same function written the same way.
pub(crate) fn canon_key(e: &Expr) -> Vec<u8> {
    let mut out = Vec::new();
    encode(e, &mut out);
    out
}

fn encode(e: &Expr, out: &mut Vec<u8>) {
    match e {
        Expr::Const(c) => {
            out.push(1);
            out.extend_from_slice(&(c + 0.0).to_bits().to_be_bytes());
        }
        Expr::Var(i) => {
            out.push(2);
            out.extend_from_slice(&(*i as u64).to_be_bytes());
        }
        Expr::Add(a, b) => {
            out.push(3);
            encode(a, out);
            encode(b, out);
        }
        Expr::Sub(a, b) => {
            out.push(4);
            encode(a, out);
            encode(b, out);
        }
        Expr::Mul(a, b) => {
            out.push(5);
            encode(a, out);
            encode(b, out);
        }
        Expr::Neg(a) => {
            out.push(6);
            encode(a, out);
        }
        Expr::Abs(a) => {
            out.push(7);
            encode(a, out);
        }
        Expr::Min(a, b) => {
            out.push(8);
            encode(a, out);
            encode(b, out);
        }
        Expr::Max(a, b) => {
            out.push(9);
            encode(a, out);
            encode(b, out);
        }
        Expr::Pow(a, k) => {
            out.push(10);
            out.extend_from_slice(&k.to_be_bytes());
            encode(a, out);
        }
        Expr::BoxMax { vars, bounds, body } => {
            out.push(11);
            out.extend_from_slice(&(vars.len() as u32).to_be_bytes());
            for (v, b) in vars.iter().zip(bounds) {
                out.extend_from_slice(&(*v as u64).to_be_bytes());
                out.extend_from_slice(&b.lo().to_bits().to_be_bytes());
                out.extend_from_slice(&b.hi().to_bits().to_be_bytes());
            }
            encode(body, out);
        }
    }
}

fn simp(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(c + 0.0),
        Expr::Var(i) => Expr::Var(i),
        Expr::Add(a, b) => {
            let mut lin = Lin::default();
            lin.absorb(simp(*a), 1.0);
            lin.absorb(simp(*b), 1.0);
            lin.build_best()
        }
        Expr::Sub(a, b) => {
            let mut lin = Lin::default();
            lin.absorb(simp(*a), 1.0);
            lin.absorb(simp(*b), -1.0);
            lin.build_best()
        }
        Expr::Neg(a) => {
            let mut lin = Lin::default();
            lin.absorb(simp(*a), -1.0);
            lin.build()
        }
        Expr::Mul(a, b) => {
            let mut coeff = 1.0;
            let mut factors = Vec::new();
            collect_factors(simp(*a), &mut coeff, &mut factors);
            collect_factors(simp(*b), &mut coeff, &mut factors);
            product(coeff, factors)
        }
        Expr::Abs(a) => {
            let sa = simp(*a);
            if let Expr::Const(c) = sa {
                return Expr::Const(c.abs());
            }
            if let Expr::Abs(_) = sa {
                return sa;
            }
            // |c * T| = |c| * |T|; in particular |-T| = |T|.
            let (coeff, core) = split_scale(sa);
            let coeff = coeff.abs();
            let core = Expr::Abs(Box::new(core));
            if coeff == 1.0 {
                core
            } else {
                Expr::Mul(Box::new(Expr::Const(coeff)), Box::new(core))
            }
        }
        Expr::Min(a, b) => {
            let sa = simp(*a);
            let sb = simp(*b);
            if let (Expr::Const(x), Expr::Const(y)) = (&sa, &sb) {
                return Expr::Const(x.min(*y));
            }
            let (sa, sb) = order_pair(sa, sb);
            if sa == sb {
                return sa;
            }
            Expr::Min(Box::new(sa), Box::new(sb))
        }
        Expr::Max(a, b) => {
            let sa = simp(*a);
            let sb = simp(*b);
            if let (Expr::Const(x), Expr::Const(y)) = (&sa, &sb) {
                return Expr::Const(x.max(*y));
            }
            let (sa, sb) = order_pair(sa, sb);
            if sa == sb {
                return sa;
            }
            Expr::Max(Box::new(sa), Box::new(sb))
        }
        Expr::Pow(a, k) => {
            let sa = simp(*a);
            if k == 1 {
                return sa;
            }
            match sa {
                Expr::Const(c) => Expr::Const(crate::interval::powi(c, k)),
                Expr::Pow(inner, j) => Expr::Pow(inner, j.saturating_mul(k)),
                sa => {
                    // (c * T)^k = c^k * T^k.
                    let (coeff, core) = split_scale(sa);
                    let ck = crate::interval::powi(coeff, k);
                    let p = Expr::Pow(Box::new(core), k);
                    if ck == 1.0 {
                        p
                    } else {
                        Expr::Mul(Box::new(Expr::Const(ck)), Box::new(p))
                    }
                }
            }
        }
        Expr::BoxMax { vars, bounds, body } => {
            let sb = simp(*body);
            simp_box_max(vars, bounds, sb)
        }
    }
}

fn simp_box_max(
    mut vars: Vec<usize>,
    mut bounds: Vec<crate::interval::UncertaintyInterval>,
    body: Expr,
) -> Expr {
    // Collapse a directly nested partial maximization: iterated maxima over
    // disjoint variable lists equal the joint maximum.
    let core = match body {
        Expr::BoxMax { vars: iv, bounds: ib, body: inner } => {
            vars.extend(iv);
            bounds.extend(ib);
            *inner
        }
        other => other,
    };
    // Degenerate bounds pin their variable to a constant.
    let mut pinned = std::collections::HashMap::new();
    for (&v, b) in vars.iter().zip(&bounds) {
        if b.is_degenerate() {
            pinned.insert(v, Expr::Const(b.lo()));
        }
    }
    let core = if pinned.is_empty() {
        core
    } else {
        simp(core.substitute_free(&pinned))
    };
    let free = core.free_vars();
    let mut pairs: Vec<(usize, crate::interval::UncertaintyInterval)> = vars
        .into_iter()
        .zip(bounds)
        .filter(|(v, b)| free.contains(v) && !b.is_degenerate())
        .collect();
    if pairs.is_empty() {
        return core;
    }
    pairs.sort_by_key(|&(v, _)| v);
    let (vars, bounds) = pairs.into_iter().unzip();
    Expr::BoxMax { vars, bounds, body: Box::new(core) }
}

/// Split a canonical term into (scalar coefficient, remaining factor).
fn split_scale(e: Expr) -> (f64, Expr) {
    match e {
        Expr::Neg(x) => {
            let (c, t) = split_scale(*x);
            (-c, t)
        }
        Expr::Mul(a, b) => {
            if let Expr::Const(c) = *a {
                let (c2, t) = split_scale(*b);
                (c * c2, t)
            } else {
                (1.0, Expr::Mul(a, b))
            }
        }
        other => (1.0, other),
    }
}

fn order_pair(a: Expr, b: Expr) -> (Expr, Expr) {
    if canon_key(&a) <= canon_key(&b) {
        (a, b)
    } else {
        (b, a)
    }
}

/// Linear combination accumulator: constant + sum of coeff * core terms,
/// merged by structural key.
#[derive(Default)]
struct Lin {
    konst: f64,
    terms: BTreeMap<Vec<u8>, (f64, Expr)>,
}

impl Lin {
    /// Fold a canonical expression, scaled, into the combination.
    fn absorb(&mut self, e: Expr, scale: f64) {
        match e {
            Expr::Const(c) => self.konst += scale * c,
            Expr::Add(a, b) => {
                self.absorb(*a, scale);
                self.absorb(*b, scale);
            }
            Expr::Sub(a, b) => {
                self.absorb(*a, scale);
                self.absorb(*b, -scale);
            }
            Expr::Neg(a) => self.absorb(*a, -scale),
            other => {
                let (c, core) = split_scale(other);
                let key = canon_key(&core);
                let entry = self.terms.entry(key).or_insert((0.0, core));
                entry.0 += scale * c;
            }
        }
    }

    /// Like `build`, but first tries expanding every product-over-sum term;
    /// the expanded combination is kept only when cross-term cancellation
    /// leaves it with strictly fewer terms than the factored one.
    fn build_best(self) -> Expr {
        if !self.terms.values().any(|(c, core)| *c != 0.0 && mul_chain_has_add(core)) {
            return self.build();
        }
        let mut expanded = Lin { konst: self.konst, terms: BTreeMap::new() };
        for (c, core) in self.terms.values() {
            if *c == 0.0 {
                continue;
            }
            if mul_chain_has_add(core) {
                let mut coeff = 1.0;
                let mut fs = Vec::new();
                collect_factors(core.clone(), &mut coeff, &mut fs);
                let mut monomials = Vec::new();
                if expand_factors(coeff, fs, &mut monomials) {
                    for (mc, mfs) in monomials {
                        expanded.absorb(product(mc, mfs), *c);
                    }
                    continue;
                }
            }
            expanded.absorb(core.clone(), *c);
        }
        if expanded.size() < self.size() {
            expanded.build()
        } else {
            self.build()
        }
    }

    fn size(&self) -> usize {
        self.terms.values().filter(|(c, _)| *c != 0.0).count() + (self.konst != 0.0) as usize
    }

    fn build(self) -> Expr {
        let mut parts: Vec<Expr> = Vec::new();
        if self.konst != 0.0 {
            parts.push(Expr::Const(self.konst + 0.0));
        }
        for (_, (c, core)) in self.terms {
            if c == 0.0 {
                continue;
            }
            parts.push(if c == 1.0 {
                core
            } else if c == -1.0 {
                Expr::Neg(Box::new(core))
            } else {
                Expr::Mul(Box::new(Expr::Const(c)), Box::new(core))
            });
        }
        match parts.len() {
            0 => Expr::Const(0.0),
            _ => {
                let mut it = parts.into_iter();
                let first = it.next().unwrap();
                it.fold(first, |acc, t| Expr::Add(Box::new(acc), Box::new(t)))
            }
        }
    }
}

fn collect_factors(e: Expr, coeff: &mut f64, out: &mut Vec<Expr>) {
    match e {
        Expr::Const(c) => *coeff *= c,
        Expr::Neg(x) => {
            *coeff = -*coeff;
            collect_factors(*x, coeff, out);
        }
        Expr::Mul(a, b) => {
            collect_factors(*a, coeff, out);
            collect_factors(*b, coeff, out);
        }
        other => out.push(other),
    }
}

fn collect_add_terms(e: Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Add(a, b) => {
            collect_add_terms(*a, out);
            collect_add_terms(*b, out);
        }
        other => out.push(other),
    }
}

/// Distribute a factor list over its sum factors, appending the resulting
/// (coefficient, factor list) monomials.  Fails (false) past the size cap.
fn expand_factors(coeff: f64, factors: Vec<Expr>, out: &mut Vec<(f64, Vec<Expr>)>) -> bool {
    match factors.iter().position(|f| matches!(f, Expr::Add(..))) {
        None => {
            out.push((coeff, factors));
            out.len() <= MAX_DISTRIBUTED_TERMS
        }
        Some(i) => {
            let mut rest = factors;
            let sum = rest.remove(i);
            let mut summands = Vec::new();
            collect_add_terms(sum, &mut summands);
            for s in summands {
                let mut c = coeff;
                let mut fs = rest.clone();
                collect_factors(s, &mut c, &mut fs);
                if !expand_factors(c, fs, out) {
                    return false;
                }
            }
            true
        }
    }
}

fn mul_chain_has_add(e: &Expr) -> bool {
    match e {
        Expr::Mul(a, b) => mul_chain_has_add(a) || mul_chain_has_add(b),
        Expr::Add(..) => true,
        _ => false,
    }
}

/// Canonical factored product of a scalar and a factor list: constants out
/// front, repeated factors merged into powers, factors sorted by key.
fn product(coeff: f64, factors: Vec<Expr>) -> Expr {
    if coeff == 0.0 {
        return Expr::Const(0.0);
    }
    if factors.is_empty() {
        return Expr::Const(coeff + 0.0);
    }
    // Merge powers of structurally equal factors.
    let mut keyed: Vec<(Vec<u8>, Expr, u32)> = Vec::with_capacity(factors.len());
    for f in factors {
        let (core, k) = match f {
            Expr::Pow(t, k) => (*t, k),
            other => (other, 1),
        };
        keyed.push((canon_key(&core), core, k));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let mut merged: Vec<Expr> = Vec::new();
    let mut iter = keyed.into_iter();
    let (mut cur_key, mut cur_core, mut cur_exp) = iter.next().unwrap();
    for (k, core, exp) in iter {
        if k == cur_key {
            cur_exp = cur_exp.saturating_add(exp);
        } else {
            merged.push(rebuild_pow(cur_core, cur_exp));
            cur_key = k;
            cur_core = core;
            cur_exp = exp;
        }
    }
    merged.push(rebuild_pow(cur_core, cur_exp));
    let mut it = merged.into_iter();
    let first = it.next().unwrap();
    let chain = it.fold(first, |acc, f| Expr::Mul(Box::new(acc), Box::new(f)));
    if coeff == 1.0 {
        chain
    } else if coeff == -1.0 {
        Expr::Neg(Box::new(chain))
    } else {
        Expr::Mul(Box::new(Expr::Const(coeff + 0.0)), Box::new(chain))
    }
}

fn rebuild_pow(core: Expr, k: u32) -> Expr {
    if k == 1 {
        core
    } else {
        Expr::Pow(Box::new(core), k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::UncertaintyInterval;

    fn iv(lo: f64, hi: f64) -> UncertaintyInterval {
        UncertaintyInterval::new(lo, hi).unwrap()
    }

    #[test]
    fn identical_sums_cancel_exactly() {
        // (x0 + x1 + x2) - ((x2 + x0) + x1) -> 0 regardless of association.
        let a = Expr::var(0) + Expr::var(1) + Expr::var(2);
        let b = Expr::var(2) + Expr::var(0) + Expr::var(1);
        let d = simplify(&(a - b));
        assert_eq!(d, Expr::Const(0.0));
    }

    #[test]
    fn abs_of_cancelled_difference_is_zero() {
        let a = Expr::var(0) + Expr::var(1);
        let b = Expr::var(1) + Expr::var(0);
        let d = simplify(&(a - b).abs());
        assert_eq!(d, Expr::Const(0.0));
    }

    #[test]
    fn coefficients_merge() {
        // 2*x0 + x0 - 3*x0 -> 0.
        let e = Expr::constant(2.0) * Expr::var(0) + Expr::var(0)
            - Expr::constant(3.0) * Expr::var(0);
        assert_eq!(simplify(&e), Expr::Const(0.0));
    }

    #[test]
    fn repeated_factors_become_powers() {
        let e = Expr::var(0) * Expr::var(0);
        assert_eq!(simplify(&e), Expr::Pow(Box::new(Expr::Var(0)), 2));
    }

    #[test]
    fn distribution_enables_cancellation() {
        // a*(x+y) - a*x - a*y -> 0 with a non-constant.
        let a = || Expr::var(2).abs();
        let e = a() * (Expr::var(0) + Expr::var(1)) - a() * Expr::var(0) - a() * Expr::var(1);
        assert_eq!(simplify(&e), Expr::Const(0.0));
    }

    #[test]
    fn min_operands_sorted_and_deduped() {
        let m1 = simplify(&Expr::min_of(Expr::var(1), Expr::var(0)));
        let m2 = simplify(&Expr::min_of(Expr::var(0), Expr::var(1)));
        assert_eq!(m1, m2);
        let m3 = simplify(&Expr::min_of(Expr::var(0), Expr::var(0)));
        assert_eq!(m3, Expr::Var(0));
    }

    #[test]
    fn nested_box_max_collapses() {
        let body = Expr::var(0) + Expr::var(4) + Expr::var(5);
        let inner = Expr::box_max(vec![5], vec![iv(0.0, 1.0)], body).unwrap();
        let outer = Expr::box_max(vec![4], vec![iv(0.0, 2.0)], inner).unwrap();
        match simplify(&outer) {
            Expr::BoxMax { vars, bounds, .. } => {
                assert_eq!(vars, vec![4, 5]);
                assert_eq!(bounds[0], iv(0.0, 2.0));
                assert_eq!(bounds[1], iv(0.0, 1.0));
            }
            other => panic!("expected collapsed BoxMax, got {other}"),
        }
    }

    #[test]
    fn box_max_over_unused_vars_drops() {
        let e = Expr::box_max(vec![3], vec![iv(0.0, 1.0)], Expr::var(0)).unwrap();
        assert_eq!(simplify(&e), Expr::Var(0));
    }

    #[test]
    fn degenerate_bound_pins_variable() {
        // max over x1 in [2,2] of x0 + x1 -> x0 + 2.
        let e = Expr::box_max(
            vec![1],
            vec![iv(2.0, 2.0)],
            Expr::var(0) + Expr::var(1),
        )
        .unwrap();
        let s = simplify(&e);
        assert_eq!(s.eval_plain(&[5.0]).unwrap(), 7.0);
        assert!(!s.contains_box_max());
    }

    #[test]
    fn constant_folding() {
        let e = Expr::constant(2.0) * Expr::constant(3.0) + Expr::constant(-6.0);
        assert_eq!(simplify(&e), Expr::Const(0.0));
        let e = Expr::constant(-2.0).abs();
        assert_eq!(simplify(&e), Expr::Const(2.0));
    }

    #[test]
    fn tower_shaped_terms_cancel() {
        // boxmax([2,3]) wrapped around boxmax([4,5]) minus the joint boxmax.
        let phi = || (Expr::var(0) + Expr::var(2) + Expr::var(4)) * Expr::var(3) + Expr::var(5);
        let staged = Expr::box_max(
            vec![2, 3],
            vec![iv(0.0, 1.0), iv(0.0, 0.5)],
            Expr::box_max(vec![4, 5], vec![iv(-1.0, 1.0), iv(0.0, 2.0)], phi()).unwrap(),
        )
        .unwrap();
        let joint = Expr::box_max(
            vec![2, 3, 4, 5],
            vec![iv(0.0, 1.0), iv(0.0, 0.5), iv(-1.0, 1.0), iv(0.0, 2.0)],
            phi(),
        )
        .unwrap();
        let d = simplify(&(staged - joint).abs());
        assert_eq!(d, Expr::Const(0.0));
    }
}
