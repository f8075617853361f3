//! Worst-case expectation over a box of parameter vectors.
//!
//! The expectation of a payoff φ under the box Λ is max over Λ of φ; the
//! generating function g(p) = max over Λ of v·p splits per axis for product
//! boxes.  The checks here exercise the functional's defining properties:
//! monotonicity, constants, sub-additivity, positive homogeneity, and the
//! product/iterated-maximum factorization for independent coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::interval::{MaximalVector, UncertaintyInterval};
use crate::maximize::{maximize, CertifiedValue, MaxOptions};

/// One-axis generating function: `g(p) = hi·p⁺ − lo·p⁻ = max_{v∈[lo,hi]} v·p`.
pub fn g_eval(p: f64, u: &UncertaintyInterval) -> f64 {
    u.hi() * p.max(0.0) - u.lo() * (-p).max(0.0)
}

/// Generating function of the product box: sum of per-axis terms.
pub fn generating_function(mv: &MaximalVector, p: &[f64]) -> Result<f64> {
    if p.len() != mv.dim() {
        return Err(Error::DimensionMismatch { expected: mv.dim(), got: p.len() });
    }
    Ok(p.iter().zip(mv.intervals()).map(|(&pi, u)| g_eval(pi, u)).sum())
}

/// Expectation of `e` under the box `mv`: the certified maximum over the box.
pub fn expect(mv: &MaximalVector, e: &Expr, opts: &MaxOptions) -> Result<CertifiedValue> {
    maximize(e, mv, opts)
}

/// Range of `psi` over the box: the law of the image variable.
pub fn pushforward(
    mv: &MaximalVector,
    psi: &Expr,
    opts: &MaxOptions,
) -> Result<UncertaintyInterval> {
    let hi = maximize(psi, mv, opts)?;
    let neg = Expr::Neg(Box::new(psi.clone()));
    let lo = maximize(&neg, mv, opts)?;
    let lo_v = -(lo.value + lo.error_bound);
    let hi_v = hi.value + hi.error_bound;
    UncertaintyInterval::new(lo_v.min(hi_v), hi_v)
}

#[derive(Debug, Clone)]
pub struct AxiomsReport {
    pub tolerance: f64,
    /// Ê[e1] + Ê[e2] − Ê[e1 + e2]; sub-additivity requires ≥ −tolerance.
    pub subadditivity_gap: f64,
    pub subadditive: bool,
    /// |Ê[λ·e1] − λ·Ê[e1]|.
    pub homogeneity_residual: f64,
    pub homogeneous: bool,
    /// Whether e1 ≥ e2 held pointwise on the box (certified).
    pub monotone_precondition: bool,
    /// Ê[e1] − Ê[e2]; only meaningful when the precondition held.
    pub monotone_gap: f64,
    pub monotone: bool,
    pub ok: bool,
}

/// Check monotonicity, sub-additivity and positive homogeneity (factor
/// `lambda`) of the expectation on the pair `e1`, `e2`, to 3·epsilon.
pub fn axioms_check(
    mv: &MaximalVector,
    e1: &Expr,
    e2: &Expr,
    lambda: f64,
    opts: &MaxOptions,
) -> Result<AxiomsReport> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("homogeneity factor must be finite and nonnegative"));
    }
    let tol = 3.0 * opts.epsilon;
    let v1 = expect(mv, e1, opts)?.value;
    let v2 = expect(mv, e2, opts)?.value;
    let v_sum = expect(mv, &(e1.clone() + e2.clone()), opts)?.value;
    let subadditivity_gap = v1 + v2 - v_sum;
    let subadditive = subadditivity_gap >= -tol;

    let scaled = Expr::constant(lambda) * e1.clone();
    let v_scaled = expect(mv, &scaled, opts)?.value;
    let homogeneity_residual = (v_scaled - lambda * v1).abs();
    let homogeneous = homogeneity_residual <= tol * lambda.max(1.0);

    // e1 ≥ e2 on the box iff max(e2 − e1) ≤ 0.  The certificate cannot
    // separate an exact zero from the search precision, so the dominance
    // test allows epsilon.
    let dominance = expect(mv, &(e2.clone() - e1.clone()), opts)?;
    let monotone_precondition = dominance.value + dominance.error_bound <= opts.epsilon;
    let monotone_gap = v1 - v2;
    let monotone = !monotone_precondition || monotone_gap >= -tol;

    Ok(AxiomsReport {
        tolerance: tol,
        subadditivity_gap,
        subadditive,
        homogeneity_residual,
        homogeneous,
        monotone_precondition,
        monotone_gap,
        monotone,
        ok: subadditive && homogeneous && monotone,
    })
}

#[derive(Debug, Clone)]
pub struct IndependenceReport {
    pub trials: u32,
    /// Largest |joint generating function − per-axis sum| over sampled p.
    pub generating_max_residual: f64,
    /// Largest |joint max − iterated max| over sampled product payoffs,
    /// both variable orders.
    pub iterated_max_residual: f64,
    pub tolerance: f64,
    pub ok: bool,
}

/// Check that coordinates of the product box behave as independent factors:
/// the generating function is the per-axis sum, and for product payoffs
/// α(x)·β(y) the joint maximum equals the iterated one in either order.
pub fn independence_factorization_check(
    intervals: &[UncertaintyInterval],
    trials: u32,
    opts: &MaxOptions,
) -> Result<IndependenceReport> {
    if intervals.len() < 2 {
        return Err(Error::invalid("need at least two coordinates"));
    }
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let mv = MaximalVector::new(intervals.to_vec())?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x1f2e_3d4c);
    let inner = MaxOptions { epsilon: opts.epsilon / 4.0, ..opts.clone() };

    let mut generating_max_residual: f64 = 0.0;
    let mut iterated_max_residual: f64 = 0.0;
    for _ in 0..trials {
        // Dyadic p keeps the closed-form arithmetic exact.
        let p: Vec<f64> = (0..intervals.len())
            .map(|_| rng.gen_range(-16i32..=16) as f64 / 8.0)
            .collect();
        let joint = generating_function(&mv, &p)?;
        let split: f64 = p.iter().zip(intervals).map(|(&pi, u)| g_eval(pi, u)).sum();
        generating_max_residual = generating_max_residual.max((joint - split).abs());

        // Product payoff α(x0)·β(x1) on the first two coordinates.
        let alpha = random_quadratic(&mut rng, 0);
        let beta = random_quadratic(&mut rng, 1);
        let phi = alpha * beta;
        let pair = MaximalVector::new(vec![intervals[0], intervals[1]])?;
        let joint_max = maximize(&phi, &pair, &inner)?.value;
        for (outer_idx, inner_idx) in [(0usize, 1usize), (1, 0)] {
            let nested = Expr::box_max(
                vec![inner_idx],
                vec![intervals[inner_idx]],
                phi.clone(),
            )?;
            let outer_dom = MaximalVector::new(vec![intervals[outer_idx]])?;
            let mut to_front = std::collections::HashMap::new();
            to_front.insert(outer_idx, 0usize);
            let remapped = nested.remap_vars(&to_front);
            let iter_max = maximize(&remapped, &outer_dom, &inner)?.value;
            iterated_max_residual = iterated_max_residual.max((joint_max - iter_max).abs());
        }
    }
    let tolerance = opts.epsilon;
    Ok(IndependenceReport {
        trials,
        generating_max_residual,
        iterated_max_residual,
        tolerance,
        ok: generating_max_residual == 0.0 && iterated_max_residual <= tolerance,
    })
}

fn random_quadratic(rng: &mut ChaCha8Rng, var: usize) -> Expr {
    let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-8i32..=8) as f64 / 4.0).collect();
    Expr::constant(c[0])
        + Expr::constant(c[1]) * Expr::var(var)
        + Expr::constant(c[2]) * Expr::var(var) * Expr::var(var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maximize::lipschitz_bound;

    fn iv(lo: f64, hi: f64) -> UncertaintyInterval {
        UncertaintyInterval::new(lo, hi).unwrap()
    }

    #[test]
    fn generating_one_axis() {
        let u = iv(-1.0, 2.0);
        assert_eq!(g_eval(1.0, &u), 2.0);
        assert_eq!(g_eval(-3.0, &u), 3.0);
        assert_eq!(g_eval(0.0, &u), 0.0);
    }

    #[test]
    fn generating_products() {
        let unit2 = MaximalVector::new(vec![iv(0.0, 1.0), iv(0.0, 1.0)]).unwrap();
        assert_eq!(generating_function(&unit2, &[1.0, 1.0]).unwrap(), 2.0);
        let mixed = MaximalVector::new(vec![iv(-1.0, 2.0), iv(0.0, 1.0)]).unwrap();
        assert_eq!(generating_function(&mixed, &[1.0, -1.0]).unwrap(), 2.0);
        let one = MaximalVector::new(vec![iv(-1.0, 2.0)]).unwrap();
        assert_eq!(generating_function(&one, &[-1.0]).unwrap(), 1.0);
        assert!(generating_function(&one, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn generating_subadditive_homogeneous_in_p() {
        let mv = MaximalVector::new(vec![iv(-1.0, 2.0), iv(0.0, 1.5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p: Vec<f64> =
                (0..2).map(|_| rng.gen_range(-16i32..=16) as f64 / 8.0).collect();
            let q: Vec<f64> =
                (0..2).map(|_| rng.gen_range(-16i32..=16) as f64 / 8.0).collect();
            let sum: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a + b).collect();
            let gp = generating_function(&mv, &p).unwrap();
            let gq = generating_function(&mv, &q).unwrap();
            let gs = generating_function(&mv, &sum).unwrap();
            assert!(gs <= gp + gq);
            let lam = rng.gen_range(0i32..=8) as f64 / 2.0;
            let scaled: Vec<f64> = p.iter().map(|a| a * lam).collect();
            assert_eq!(generating_function(&mv, &scaled).unwrap(), lam * gp);
        }
    }

    #[test]
    fn expect_frozen_examples() {
        let one = MaximalVector::new(vec![iv(-1.0, 2.0)]).unwrap();
        let opts = MaxOptions::with_epsilon(1e-8);
        let r = expect(&one, &Expr::var(0), &opts).unwrap();
        assert!((r.value - 2.0).abs() <= 1e-8);
        let r = expect(&one, &(-Expr::var(0)), &opts).unwrap();
        assert!((r.value - 1.0).abs() <= 1e-8);
        let unit2 = MaximalVector::new(vec![iv(0.0, 1.0), iv(0.0, 1.0)]).unwrap();
        let r = expect(&unit2, &(Expr::var(0) - Expr::var(1)).abs(), &opts).unwrap();
        assert!((r.value - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn expect_square_on_asymmetric_interval() {
        let one = MaximalVector::new(vec![iv(-1.0, 2.0)]).unwrap();
        let opts = MaxOptions::with_epsilon(1e-6);
        let r = expect(&one, &Expr::var(0).pow(2).unwrap(), &opts).unwrap();
        assert!((r.value - 4.0).abs() <= 1e-6);
        assert!(r.error_bound <= 1e-6);
    }

    #[test]
    fn constant_payoff_is_exact() {
        let one = MaximalVector::new(vec![iv(-1.0, 2.0)]).unwrap();
        let r = expect(&one, &Expr::constant(3.5), &MaxOptions::default()).unwrap();
        assert_eq!(r.value, 3.5);
        assert_eq!(r.error_bound, 0.0);
    }

    #[test]
    fn pushforward_frozen_examples() {
        let opts = MaxOptions::with_epsilon(1e-7);
        let one = MaximalVector::new(vec![iv(-1.0, 2.0)]).unwrap();
        let r = pushforward(&one, &Expr::var(0).pow(2).unwrap(), &opts).unwrap();
        assert!((r.lo() - 0.0).abs() <= 1e-6 && (r.hi() - 4.0).abs() <= 1e-6);
        let unit = MaximalVector::new(vec![iv(0.0, 1.0)]).unwrap();
        let r = pushforward(&unit, &Expr::var(0), &opts).unwrap();
        assert!((r.lo() - 0.0).abs() <= 1e-6 && (r.hi() - 1.0).abs() <= 1e-6);
        let unit2 = MaximalVector::new(vec![iv(0.0, 1.0), iv(0.0, 1.0)]).unwrap();
        let r = pushforward(&unit2, &(Expr::var(0) + Expr::var(1)), &opts).unwrap();
        assert!((r.lo() - 0.0).abs() <= 1e-6 && (r.hi() - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn composed_payoff_matches_pushforward_interval() {
        // Ê[φ(ψ(X))] over Λ = Ê[φ(Y)] over the pushforward interval of ψ.
        let unit2 = MaximalVector::new(vec![iv(0.0, 1.0), iv(0.0, 1.0)]).unwrap();
        let psi = Expr::var(0) + Expr::var(1);
        let opts = MaxOptions::with_epsilon(1e-7);
        let range = pushforward(&unit2, &psi, &opts).unwrap();
        // φ(y) = y² − y.
        let composed = psi.clone().pow(2).unwrap() - psi;
        let direct = expect(&unit2, &composed, &opts).unwrap().value;
        let image_dom = MaximalVector::new(vec![range]).unwrap();
        let phi = Expr::var(0).pow(2).unwrap() - Expr::var(0);
        let via_image = expect(&image_dom, &phi, &opts).unwrap().value;
        assert!((direct - via_image).abs() <= 2e-6, "{direct} vs {via_image}");
    }

    #[test]
    fn iterated_partial_max_matches_joint() {
        let dom = MaximalVector::new(vec![iv(-1.0, 1.0), iv(0.0, 2.0)]).unwrap();
        let phi = (Expr::var(0) - Expr::var(1)).abs() + Expr::var(0) * Expr::var(1);
        let opts = MaxOptions::with_epsilon(1e-6);
        let joint = expect(&dom, &phi, &opts).unwrap().value;
        let nested = Expr::box_max(vec![1], vec![iv(0.0, 2.0)], phi).unwrap();
        let outer = MaximalVector::new(vec![iv(-1.0, 1.0)]).unwrap();
        let iterated = expect(&outer, &nested, &opts).unwrap().value;
        assert!((joint - iterated).abs() <= 2e-6, "{joint} vs {iterated}");
    }

    #[test]
    fn lipschitz_frozen_examples() {
        let any = MaximalVector::new(vec![iv(-1.0, 2.0)]).unwrap();
        assert_eq!(lipschitz_bound(&Expr::var(0), &any).unwrap(), 1.0);
        assert_eq!(lipschitz_bound(&Expr::var(0).abs(), &any).unwrap(), 1.0);
        let unit2 = MaximalVector::new(vec![iv(0.0, 1.0), iv(0.0, 1.0)]).unwrap();
        let l = lipschitz_bound(&(Expr::var(0) * Expr::var(1)), &unit2).unwrap();
        assert!(l >= 1.0 && l <= (2.0f64).sqrt() + 1e-12, "L = {l}");
    }

    #[test]
    fn refined_epsilon_stays_within_old_bound() {
        let dom = MaximalVector::new(vec![iv(-1.0, 1.0), iv(-1.0, 1.0)]).unwrap();
        let e = (Expr::var(0) - Expr::constant(0.3)).abs() * Expr::var(1);
        let coarse = maximize(&e, &dom, &MaxOptions::with_epsilon(1e-3)).unwrap();
        let fine = maximize(&e, &dom, &MaxOptions::with_epsilon(1e-6)).unwrap();
        assert!(fine.value + 1e-12 >= coarse.value);
        assert!(fine.value <= coarse.value + coarse.error_bound + 1e-12);
    }

    #[test]
    fn value_attained_at_argmax() {
        let dom = MaximalVector::new(vec![iv(-1.0, 1.0), iv(-1.0, 1.0)]).unwrap();
        let e = (Expr::var(0) - Expr::constant(0.3)).abs() * Expr::var(1);
        let r = maximize(&e, &dom, &MaxOptions::with_epsilon(1e-6)).unwrap();
        let at = crate::expr::simplify(&e).eval_plain(&r.argmax).unwrap();
        assert_eq!(at.to_bits(), r.value.to_bits());
    }

    #[test]
    fn axioms_hold_on_sample_pair() {
        let dom = MaximalVector::new(vec![iv(-1.0, 1.0)]).unwrap();
        let e1 = Expr::var(0).abs();
        let e2 = Expr::var(0).pow(2).unwrap();
        let opts = MaxOptions::with_epsilon(1e-7);
        let rep = axioms_check(&dom, &e1, &e2, 2.0, &opts).unwrap();
        assert!(rep.ok, "{rep:?}");
        // |x| + x² attains 2 = 1 + 1 at x = ±1: co-monotone maximizers.
        assert!(rep.subadditivity_gap.abs() <= rep.tolerance);
        // |x| ≥ x² on [−1,1], so monotonicity applies.
        assert!(rep.monotone_precondition);
        assert!(rep.monotone_gap >= -rep.tolerance);
    }

    #[test]
    fn axioms_zero_lambda() {
        let dom = MaximalVector::new(vec![iv(-1.0, 2.0)]).unwrap();
        let rep =
            axioms_check(&dom, &Expr::var(0), &(-Expr::var(0)), 0.0, &MaxOptions::default())
                .unwrap();
        assert!(rep.homogeneous);
        assert!(rep.subadditive);
        // Ê[X − X] = 0 ≤ Ê[X] + Ê[−X] = 2 + 1.
        assert!((rep.subadditivity_gap - 3.0).abs() <= rep.tolerance);
    }

    #[test]
    fn independence_factorization() {
        let opts = MaxOptions::with_epsilon(1e-6);
        let rep = independence_factorization_check(
            &[iv(0.0, 1.0), iv(0.0, 1.0)],
            20,
            &opts,
        )
        .unwrap();
        assert!(rep.ok, "{rep:?}");
        assert_eq!(rep.generating_max_residual, 0.0);
        assert!(rep.iterated_max_residual <= 1e-6);
    }

    #[test]
    fn independence_product_payoff_example() {
        // φ = x·y on [0,1]²: joint and iterated maxima are all 1.
        let phi = Expr::var(0) * Expr::var(1);
        let pair = MaximalVector::new(vec![iv(0.0, 1.0), iv(0.0, 1.0)]).unwrap();
        let opts = MaxOptions::with_epsilon(1e-7);
        let joint = maximize(&phi, &pair, &opts).unwrap().value;
        assert!((joint - 1.0).abs() <= 1e-7);
        let nested = Expr::box_max(vec![1], vec![iv(0.0, 1.0)], phi).unwrap();
        let outer = MaximalVector::new(vec![iv(0.0, 1.0)]).unwrap();
        let iterated = maximize(&nested, &outer, &opts).unwrap().value;
        assert!((joint - iterated).abs() <= 1e-6);
        // Additive payoff on [−1,0]×[2,3]: −1 + 3 would need minimization;
        // the maximum is 0 + 3 = 3 either way.
        let add = Expr::var(0) + Expr::var(1);
        let dom = MaximalVector::new(vec![iv(-1.0, 0.0), iv(2.0, 3.0)]).unwrap();
        let j = maximize(&add, &dom, &opts).unwrap().value;
        assert!((j - 3.0).abs() <= 1e-7);
    }
}
