//! Finite-dimensional queries against spatial white noise with volatility
//! uncertainty.
//!
//! A model is a dimension and an uncertainty interval `mu`; the mass a noise
//! variable `W_A` puts on a region is only known to lie in
//! `[mu.lo * measure(A), mu.hi * measure(A)]`.  Every query is answered
//! through the worst-case expectation semantics — the field is never sampled.
//!
//! Queries over several regions work in atom coordinates: the regions are cut
//! into disjoint atoms, one free variable per atom, and each `W_{A_i}` is the
//! sum of the atoms covering `A_i`.  The W-coordinates themselves are
//! linearly dependent as soon as regions overlap, so the atom box is the
//! faithful search domain.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::expectation::g_eval;
use crate::expr::Expr;
use crate::interval::{MaximalVector, UncertaintyInterval};
use crate::maximize::{certified_eval, maximize, CertifiedValue, MaxOptions};
use crate::region::{atoms, AtomDecomposition, Region};

#[derive(Debug, Clone)]
pub struct WhiteNoiseModel {
    dim: usize,
    mu: UncertaintyInterval,
}

impl WhiteNoiseModel {
    pub fn new(dim: usize, mu: UncertaintyInterval) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("white noise needs a positive dimension"));
        }
        Ok(WhiteNoiseModel { dim, mu })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu(&self) -> UncertaintyInterval {
        self.mu
    }

    fn check_region(&self, r: &Region) -> Result<()> {
        if r.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: r.dim() });
        }
        Ok(())
    }
}

/// A finite-dimensional query: a payoff over `(W_{A_1}, …, W_{A_n})`.
#[derive(Debug, Clone)]
pub struct FddQuery {
    model: WhiteNoiseModel,
    regions: Vec<Region>,
    phi: Expr,
}

impl FddQuery {
    pub fn new(model: WhiteNoiseModel, regions: Vec<Region>, phi: Expr) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::invalid("a query needs at least one region"));
        }
        for r in &regions {
            model.check_region(r)?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for r in &regions {
            if let Some(name) = r.name() {
                if !seen.insert(name) {
                    return Err(Error::DuplicateName(name.to_string()));
                }
            }
        }
        if phi.arity() > regions.len() {
            return Err(Error::ArityMismatch { var: phi.arity() - 1, supplied: regions.len() });
        }
        Ok(FddQuery { model, regions, phi })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn phi(&self) -> &Expr {
        &self.phi
    }
}

/// Closed-form generating function of the joint vector `(W_{A_1},…,W_{A_n})`
/// at direction `p`: the atoms are independent, so the value is the sum over
/// atoms of `g(sum of p_i over covering regions) * atom measure`.
pub fn fdd_generating(model: &WhiteNoiseModel, regions: &[Region], p: &[f64]) -> Result<f64> {
    if p.len() != regions.len() {
        return Err(Error::DimensionMismatch { expected: regions.len(), got: p.len() });
    }
    for r in regions {
        model.check_region(r)?;
    }
    let decomp = atoms(regions)?;
    Ok(generating_from_atoms(&model.mu, &decomp, p))
}

fn generating_from_atoms(mu: &UncertaintyInterval, decomp: &AtomDecomposition, p: &[f64]) -> f64 {
    decomp
        .atoms()
        .iter()
        .map(|a| {
            let weight: f64 =
                p.iter().enumerate().filter(|&(i, _)| a.covers_source(i)).map(|(_, &pi)| pi).sum();
            g_eval(weight, mu) * a.measure
        })
        .sum()
}

/// Worst-case expectation of `phi(W_{A_1},…,W_{A_n})`, certified.
///
/// Each atom contributes one search variable ranging over
/// `[mu.lo * measure, mu.hi * measure]`; region variables are substituted by
/// the sums of their atoms and the payoff is maximized over the atom box.
pub fn fdd_expect(query: &FddQuery, opts: &MaxOptions) -> Result<CertifiedValue> {
    let decomp = atoms(&query.regions)?;
    let (expr, domain) = atomized(&query.model, &decomp, &query.phi)?;
    match domain {
        Some(dom) => maximize(&expr, &dom, opts),
        None => certified_eval(&expr, &[], opts),
    }
}

/// Rewrite a payoff over region variables into atom coordinates, together
/// with the atom box.  `None` domain means every region is null: the payoff
/// collapses to a closed expression at `W = 0`.
fn atomized(
    model: &WhiteNoiseModel,
    decomp: &AtomDecomposition,
    phi: &Expr,
) -> Result<(Expr, Option<MaximalVector>)> {
    let n = decomp.sources().len();
    let mut map = HashMap::new();
    for i in 0..n {
        let parts: Vec<Expr> = decomp
            .atoms()
            .iter()
            .enumerate()
            .filter(|(_, a)| a.covers_source(i))
            .map(|(k, _)| Expr::var(k))
            .collect();
        map.insert(i, Expr::sum(parts));
    }
    let expr = phi.substitute_free(&map);
    if decomp.is_empty() {
        return Ok((expr, None));
    }
    let bounds: Vec<UncertaintyInterval> =
        decomp.atoms().iter().map(|a| model.mu.scale(a.measure)).collect::<Result<_>>()?;
    Ok((expr, Some(MaximalVector::new(bounds)?)))
}

/// The exact value interval of a single noise variable:
/// `[mu.lo * measure(A), mu.hi * measure(A)]`.
pub fn marginal_bounds(model: &WhiteNoiseModel, region: &Region) -> Result<UncertaintyInterval> {
    model.check_region(region)?;
    model.mu.scale(region.measure())
}

/// Certified value of `E|W_{A_1} + … + W_{A_n} − W_{A_1 ∪ … ∪ A_n}|` for
/// pairwise disjoint regions.  In atom coordinates the argument cancels
/// symbolically, so the residual is exactly zero; the certificate makes the
/// cancellation observable.
pub fn additivity_residual(
    model: &WhiteNoiseModel,
    regions: &[Region],
    opts: &MaxOptions,
) -> Result<CertifiedValue> {
    if regions.is_empty() {
        return Err(Error::invalid("additivity needs at least one region"));
    }
    require_disjoint(regions)?;
    let union = Region::union(model.dim, regions, None)?;
    let n = regions.len();
    let mut all = regions.to_vec();
    all.push(union);
    let sum = Expr::sum((0..n).map(Expr::var).collect());
    let phi = (sum - Expr::var(n)).abs();
    fdd_expect(&FddQuery::new(model.clone(), all, phi)?, opts)
}

fn require_disjoint(regions: &[Region]) -> Result<()> {
    for (i, a) in regions.iter().enumerate() {
        for (j, b) in regions.iter().enumerate().skip(i + 1) {
            if a.intersects(b) {
                return Err(Error::NotDisjoint { a: region_label(a, i), b: region_label(b, j) });
            }
        }
    }
    Ok(())
}

fn region_label(r: &Region, index: usize) -> String {
    r.name().map_or_else(|| format!("#{index}"), str::to_string)
}

#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub trials: u32,
    /// Largest |g with a padded zero-weight region − g without| (exact zero).
    pub compatibility_residual: f64,
    /// Largest |g under permuted regions − g at permuted p| (exact zero).
    pub symmetry_residual: f64,
    pub ok: bool,
}

/// Check the two marginal-consistency identities of the generating family on
/// randomized directions: appending a region with weight zero changes
/// nothing, and permuting regions together with weights changes nothing.
pub fn consistency_check(
    model: &WhiteNoiseModel,
    regions: &[Region],
    trials: u32,
    seed: u64,
) -> Result<ConsistencyReport> {
    use rand::{Rng, SeedableRng};
    if regions.is_empty() {
        return Err(Error::invalid("consistency check needs at least one region"));
    }
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    for r in regions {
        model.check_region(r)?;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x77aa_11ee);
    let n = regions.len();
    let mut compatibility_residual: f64 = 0.0;
    let mut symmetry_residual: f64 = 0.0;
    for _ in 0..trials {
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-16i32..=16) as f64 / 8.0).collect();
        let base = fdd_generating(model, regions, &p)?;

        // Pad with a random dyadic box at weight 0.
        let extra = random_box(&mut rng, model.dim)?;
        let mut padded_regions = regions.to_vec();
        padded_regions.push(extra);
        let mut padded_p = p.clone();
        padded_p.push(0.0);
        let padded = fdd_generating(model, &padded_regions, &padded_p)?;
        compatibility_residual = compatibility_residual.max((padded - base).abs());

        // Permute regions and weights together.
        let perm = random_permutation(&mut rng, n);
        let permuted_regions: Vec<Region> = perm.iter().map(|&i| regions[i].clone()).collect();
        let permuted_p: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let permuted = fdd_generating(model, &permuted_regions, &permuted_p)?;
        symmetry_residual = symmetry_residual.max((permuted - base).abs());
    }
    Ok(ConsistencyReport {
        trials,
        compatibility_residual,
        symmetry_residual,
        ok: compatibility_residual == 0.0 && symmetry_residual == 0.0,
    })
}

fn random_box(rng: &mut rand_chacha::ChaCha8Rng, dim: usize) -> Result<Region> {
    use rand::Rng;
    let mut extents = Vec::with_capacity(dim);
    for _ in 0..dim {
        let lo = rng.gen_range(-8i32..6) as f64 / 2.0;
        let len = rng.gen_range(1i32..=4) as f64 / 2.0;
        extents.push((lo, lo + len));
    }
    Ok(Region::from_rect(crate::region::Rect::new(extents)?, None))
}

fn random_permutation(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// One term of the three-set expansion: the regions covered (`mask` bit i =
/// region i), the summed weight fed to `g`, its `g` value, and the measure of
/// the exclusive intersection.
#[derive(Debug, Clone, Copy)]
pub struct ExpansionTerm {
    pub mask: u32,
    pub weight: f64,
    pub coefficient: f64,
    pub measure: f64,
}

#[derive(Debug, Clone)]
pub struct Expansion3 {
    /// Seven terms: triple intersection, the three pairwise-only pieces, the
    /// three exclusive singles.
    pub terms: Vec<ExpansionTerm>,
    pub total: f64,
}

/// Expand the generating function of three regions into its seven exclusive
/// pieces.  The total equals `fdd_generating` on the same input.
pub fn expansion_3set(
    model: &WhiteNoiseModel,
    a1: &Region,
    a2: &Region,
    a3: &Region,
    p: &[f64],
) -> Result<Expansion3> {
    if p.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: p.len() });
    }
    let regions = [a1.clone(), a2.clone(), a3.clone()];
    for r in &regions {
        model.check_region(r)?;
    }
    let decomp = atoms(&regions)?;
    let masks: [u32; 7] = [0b111, 0b011, 0b101, 0b110, 0b001, 0b010, 0b100];
    let terms: Vec<ExpansionTerm> = masks
        .iter()
        .map(|&mask| {
            let weight: f64 =
                (0..3).filter(|i| mask & (1 << i) != 0).map(|i| p[i]).sum();
            ExpansionTerm {
                mask,
                weight,
                coefficient: g_eval(weight, &model.mu),
                measure: decomp.measure_of_mask(mask),
            }
        })
        .collect();
    let total = terms.iter().map(|t| t.coefficient * t.measure).sum();
    Ok(Expansion3 { terms, total })
}

#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub original: f64,
    pub transformed: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub ok: bool,
}

/// Check distributional invariance under a rigid motion of the index regions:
/// translating and signed-permuting every region leaves the query value
/// unchanged (the atoms keep their measures).
pub fn invariance_check(
    model: &WhiteNoiseModel,
    regions: &[Region],
    phi: &Expr,
    shift: &[f64],
    perm: &crate::region::SignedPermutation,
    opts: &MaxOptions,
) -> Result<InvarianceReport> {
    let original =
        fdd_expect(&FddQuery::new(model.clone(), regions.to_vec(), phi.clone())?, opts)?;
    let moved: Vec<Region> =
        regions.iter().map(|r| r.transform(shift, perm)).collect::<Result<_>>()?;
    let transformed = fdd_expect(&FddQuery::new(model.clone(), moved, phi.clone())?, opts)?;
    let residual = (original.value - transformed.value).abs();
    let tolerance = 2.0 * opts.epsilon;
    Ok(InvarianceReport {
        original: original.value,
        transformed: transformed.value,
        residual,
        tolerance,
        ok: residual <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{Rect, SignedPermutation};

    fn iv(lo: f64, hi: f64) -> UncertaintyInterval {
        UncertaintyInterval::new(lo, hi).unwrap()
    }

    fn seg(lo: f64, hi: f64) -> Region {
        Region::from_rect(Rect::new(vec![(lo, hi)]).unwrap(), None)
    }

    fn model1(mu: UncertaintyInterval) -> WhiteNoiseModel {
        WhiteNoiseModel::new(1, mu).unwrap()
    }

    #[test]
    fn generating_overlapping_pair() {
        // [0,1) and [0.5,1.5) cut into three atoms of measure 1/2; only the
        // first-only atom carries weight after p = (1,-1) cancels the overlap.
        let m = model1(iv(0.0, 1.0));
        let v = fdd_generating(&m, &[seg(0.0, 1.0), seg(0.5, 1.5)], &[1.0, -1.0]).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn generating_disjoint_splits_per_region() {
        let m = model1(iv(-1.0, 2.0));
        let a = seg(0.0, 1.5);
        let b = seg(2.0, 3.0);
        let p = [0.75, -1.25];
        let v = fdd_generating(&m, &[a.clone(), b.clone()], &p).unwrap();
        let split = g_eval(p[0], &m.mu()) * a.measure() + g_eval(p[1], &m.mu()) * b.measure();
        assert_eq!(v, split);
    }

    #[test]
    fn generating_zero_direction() {
        let m = model1(iv(-3.0, 5.0));
        let v = fdd_generating(&m, &[seg(0.0, 4.0)], &[0.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn expect_abs_of_symmetric_marginal() {
        // W over [0,2) with mu = [-1,1] ranges over [-2,2]; E|W| = 2.
        let m = model1(iv(-1.0, 1.0));
        let q = FddQuery::new(m, vec![seg(0.0, 2.0)], Expr::var(0).abs()).unwrap();
        let v = fdd_expect(&q, &MaxOptions::default()).unwrap();
        assert!((v.value - 2.0).abs() <= 1e-6, "{v:?}");
        assert!(v.error_bound <= 1e-6);
    }

    #[test]
    fn expect_sum_of_adjacent_cells() {
        let m = model1(iv(0.0, 1.0));
        let q = FddQuery::new(
            m,
            vec![seg(0.0, 1.0), seg(1.0, 2.0)],
            Expr::var(0) + Expr::var(1),
        )
        .unwrap();
        let v = fdd_expect(&q, &MaxOptions::default()).unwrap();
        assert!((v.value - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn expect_difference_of_overlapping_cells() {
        // (a+b) - (b+c) = a - c with a, c in [0, 1/2]: max is 1/2.
        let m = model1(iv(0.0, 1.0));
        let q = FddQuery::new(
            m,
            vec![seg(0.0, 1.0), seg(0.5, 1.5)],
            Expr::var(0) - Expr::var(1),
        )
        .unwrap();
        let v = fdd_expect(&q, &MaxOptions::default()).unwrap();
        assert!((v.value - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn marginal_bounds_scale_mu_by_measure() {
        let m = model1(iv(-1.0, 1.0));
        assert_eq!(marginal_bounds(&m, &seg(0.0, 2.0)).unwrap(), iv(-2.0, 2.0));
        let empty = Region::new(1, vec![], None).unwrap();
        assert_eq!(marginal_bounds(&m, &empty).unwrap(), iv(0.0, 0.0));
        let m2 = model1(iv(0.0, 1.0));
        assert_eq!(marginal_bounds(&m2, &seg(1.0, 2.5)).unwrap(), iv(0.0, 1.5));
    }

    #[test]
    fn additivity_cancels_exactly() {
        let m = model1(iv(-1.0, 2.0));
        let pair = [seg(0.0, 1.0), seg(1.0, 2.0)];
        let v = additivity_residual(&m, &pair, &MaxOptions::default()).unwrap();
        assert_eq!(v.value, 0.0);
        assert_eq!(v.error_bound, 0.0);

        let single = [seg(3.0, 4.5)];
        let v = additivity_residual(&m, &single, &MaxOptions::default()).unwrap();
        assert_eq!(v.value, 0.0);

        let three = [seg(0.0, 1.0), seg(2.0, 3.0), seg(5.0, 6.0)];
        let v = additivity_residual(&m, &three, &MaxOptions::default()).unwrap();
        assert_eq!(v.value, 0.0);
        assert_eq!(v.error_bound, 0.0);
    }

    #[test]
    fn additivity_rejects_overlap() {
        let m = model1(iv(0.0, 1.0));
        let out = additivity_residual(
            &m,
            &[seg(0.0, 1.0), seg(0.5, 1.5)],
            &MaxOptions::default(),
        );
        assert!(matches!(out, Err(Error::NotDisjoint { .. })));
    }

    #[test]
    fn consistency_identities_are_exact() {
        let m = model1(iv(-1.0, 1.5));
        let regions = [seg(0.0, 1.0), seg(0.5, 2.0), seg(3.0, 4.0)];
        let rep = consistency_check(&m, &regions, 25, 7).unwrap();
        assert!(rep.ok, "{rep:?}");
        assert_eq!(rep.compatibility_residual, 0.0);
        assert_eq!(rep.symmetry_residual, 0.0);
    }

    #[test]
    fn expansion_disjoint_keeps_singles() {
        let m = model1(iv(0.0, 1.0));
        let (a, b, c) = (seg(0.0, 1.0), seg(2.0, 3.0), seg(4.0, 5.5));
        let ex = expansion_3set(&m, &a, &b, &c, &[1.0, -2.0, 0.5]).unwrap();
        for t in &ex.terms {
            let single = t.mask.count_ones() == 1;
            assert!(single || t.measure == 0.0, "{t:?}");
        }
        let direct = fdd_generating(&m, &[a, b, c], &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(ex.total, direct);
    }

    #[test]
    fn expansion_equal_regions_keep_triple() {
        let m = model1(iv(-1.0, 1.0));
        let a = seg(0.0, 2.0);
        let ex = expansion_3set(&m, &a, &a, &a, &[1.0, 1.0, -0.5]).unwrap();
        for t in &ex.terms {
            assert!(t.mask == 0b111 || t.measure == 0.0, "{t:?}");
        }
        // 1 + 1 - 0.5 = 1.5 on the shared mass of 2.
        assert_eq!(ex.total, 3.0);
    }

    #[test]
    fn expansion_chain_of_overlaps() {
        // [0,2), [1,3), [2,4): four unit pieces, no triple overlap.
        let m = model1(iv(0.0, 1.0));
        let ex = expansion_3set(
            &m,
            &seg(0.0, 2.0),
            &seg(1.0, 3.0),
            &seg(2.0, 4.0),
            &[1.0, 1.0, 1.0],
        )
        .unwrap();
        let by_mask = |mask: u32| ex.terms.iter().find(|t| t.mask == mask).unwrap();
        assert_eq!(by_mask(0b111).measure, 0.0);
        assert_eq!(by_mask(0b011).measure, 1.0); // [1,2)
        assert_eq!(by_mask(0b011).coefficient, 2.0);
        assert_eq!(by_mask(0b110).measure, 1.0); // [2,3)
        assert_eq!(by_mask(0b101).measure, 0.0);
        assert_eq!(by_mask(0b001).measure, 1.0); // [0,1)
        assert_eq!(by_mask(0b010).measure, 0.0);
        assert_eq!(by_mask(0b100).measure, 1.0); // [3,4)
        assert_eq!(ex.total, 6.0);
        let direct = fdd_generating(
            &m,
            &[seg(0.0, 2.0), seg(1.0, 3.0), seg(2.0, 4.0)],
            &[1.0, 1.0, 1.0],
        )
        .unwrap();
        assert_eq!(ex.total, direct);
    }

    #[test]
    fn invariance_under_shift_swap_reflection() {
        let opts = MaxOptions::default();
        let m1 = model1(iv(-1.0, 1.0));
        let phi = Expr::var(0).abs() + Expr::var(1) * Expr::var(1);
        let regions = [seg(0.0, 1.0), seg(0.5, 2.0)];

        let shift = invariance_check(
            &m1,
            &regions,
            &phi,
            &[5.0],
            &SignedPermutation::identity(1),
            &opts,
        )
        .unwrap();
        assert!(shift.ok, "{shift:?}");

        let reflect = invariance_check(
            &m1,
            &regions,
            &phi,
            &[0.0],
            &SignedPermutation::new(vec![0], vec![true]).unwrap(),
            &opts,
        )
        .unwrap();
        assert!(reflect.ok, "{reflect:?}");

        let m2 = WhiteNoiseModel::new(2, iv(0.0, 1.0)).unwrap();
        let sq = |x0: (f64, f64), x1: (f64, f64)| {
            Region::from_rect(Rect::new(vec![x0, x1]).unwrap(), None)
        };
        let swap = invariance_check(
            &m2,
            &[sq((0.0, 1.0), (0.0, 2.0)), sq((0.5, 1.5), (1.0, 2.0))],
            &phi,
            &[0.0, 0.0],
            &SignedPermutation::new(vec![1, 0], vec![false, false]).unwrap(),
            &opts,
        )
        .unwrap();
        assert!(swap.ok, "{swap:?}");
    }

    #[test]
    fn generating_matches_linear_payoff() {
        let m = model1(iv(-1.0, 2.0));
        let regions = [seg(0.0, 1.0), seg(0.5, 2.5)];
        let p = [1.5, -0.5];
        let g = fdd_generating(&m, &regions, &p).unwrap();
        let phi = Expr::constant(p[0]) * Expr::var(0) + Expr::constant(p[1]) * Expr::var(1);
        let q = FddQuery::new(m, regions.to_vec(), phi).unwrap();
        let v = fdd_expect(&q, &MaxOptions::default()).unwrap();
        assert!((g - v.value).abs() <= 1e-6, "g = {g}, expect = {}", v.value);
    }

    #[test]
    fn marginal_monotone_for_nonnegative_mu() {
        let m = model1(iv(0.5, 2.0));
        let small = marginal_bounds(&m, &seg(0.0, 1.0)).unwrap();
        let large = marginal_bounds(&m, &seg(-1.0, 2.0)).unwrap();
        assert!(small.hi() <= large.hi());
        assert!(small.lo() <= large.lo());
    }

    #[test]
    fn marginal_distance_payoff_vanishes() {
        // dist(W, [mu.lo * m, mu.hi * m]) has worst-case expectation zero.
        let m = model1(iv(-1.0, 2.0));
        let a = seg(0.0, 1.5);
        let b = marginal_bounds(&m, &a).unwrap();
        let x = Expr::var(0);
        let dist = Expr::max_of(
            Expr::max_of(Expr::constant(b.lo()) - x.clone(), x - Expr::constant(b.hi())),
            Expr::constant(0.0),
        );
        let q = FddQuery::new(m, vec![a], dist).unwrap();
        let v = fdd_expect(&q, &MaxOptions::default()).unwrap();
        assert!(v.value.abs() <= 1e-6, "{v:?}");
    }

    #[test]
    fn expect_monotone_in_payoff() {
        let m = model1(iv(-1.0, 1.0));
        let regions = vec![seg(0.0, 1.0)];
        let lo = FddQuery::new(m.clone(), regions.clone(), Expr::var(0)).unwrap();
        let hi = FddQuery::new(m, regions, Expr::var(0).abs()).unwrap();
        let opts = MaxOptions::default();
        let v_lo = fdd_expect(&lo, &opts).unwrap();
        let v_hi = fdd_expect(&hi, &opts).unwrap();
        assert!(v_lo.value <= v_hi.value + 2.0 * opts.epsilon);
    }

    #[test]
    fn query_validation() {
        let m = model1(iv(0.0, 1.0));
        assert!(FddQuery::new(m.clone(), vec![], Expr::var(0)).is_err());
        // Payoff refers to more regions than supplied.
        assert!(matches!(
            FddQuery::new(m.clone(), vec![seg(0.0, 1.0)], Expr::var(1)),
            Err(Error::ArityMismatch { var: 1, supplied: 1 })
        ));
        let named = seg(0.0, 1.0).with_name("a");
        assert!(matches!(
            FddQuery::new(m.clone(), vec![named.clone(), named], Expr::var(0)),
            Err(Error::DuplicateName(_))
        ));
        let m2 = WhiteNoiseModel::new(2, iv(0.0, 1.0)).unwrap();
        assert!(FddQuery::new(m2, vec![seg(0.0, 1.0)], Expr::var(0)).is_err());
    }

    #[test]
    fn null_regions_collapse_to_point_query() {
        let m = model1(iv(-1.0, 1.0));
        let empty = Region::new(1, vec![], None).unwrap();
        let q = FddQuery::new(m, vec![empty], Expr::var(0).abs() + Expr::constant(3.0)).unwrap();
        let v = fdd_expect(&q, &MaxOptions::default()).unwrap();
        assert_eq!(v.value, 3.0);
        assert_eq!(v.error_bound, 0.0);
    }
}
