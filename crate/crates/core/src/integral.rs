//! Integrals of simple random fields against the noise, and the
//! conditional-expectation calculus of cylinder variables.
//!
//! A cylinder variable is a payoff of finitely many noise values,
//! `expr(W_{A_1},…,W_{A_n})`.  Integrating a simple field produces another
//! cylinder variable — the construction is purely symbolic — and every numeric
//! question (norms, bounds, residuals) goes through the certified worst-case
//! expectation.  Composing variables works in a shared region space: regions
//! are interned by geometric identity and expressions remapped accordingly, so
//! algebraic identities cancel structurally whenever the operands were built
//! over the same regions.
//!
//! Conditioning on the information up to a time cut is symbolic too: regions
//! ahead of the cut are maximized out through a partial-maximization node
//! while observed coordinates stay free.  Composed cuts then collapse into a
//! single node, which is what makes the tower identity hold at zero numeric
//! cost for grid-aligned inputs.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::expr::{simplify, Expr};
use crate::interval::UncertaintyInterval;
use crate::maximize::{certified_eval, CertifiedValue, MaxOptions};
use crate::region::{atoms, Rect, Region};
use crate::white_noise::{fdd_expect, FddQuery, WhiteNoiseModel};

/// Observation horizon for conditioning: noise on regions that fit below this
/// time (axis 0) counts as known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiltrationTime(f64);

impl FiltrationTime {
    pub fn new(t: f64) -> Result<Self> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::BadTime(t));
        }
        Ok(FiltrationTime(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A random variable depending on finitely many noise values:
/// `expr(W_{A_1},…,W_{A_n})` with one variable slot per listed region.
#[derive(Debug, Clone)]
pub struct CylinderVariable {
    regions: Vec<Region>,
    expr: Expr,
}

impl CylinderVariable {
    pub fn new(regions: Vec<Region>, expr: Expr) -> Result<Self> {
        if let Some(first) = regions.first() {
            for r in &regions {
                if r.dim() != first.dim() {
                    return Err(Error::DimensionMismatch { expected: first.dim(), got: r.dim() });
                }
            }
        }
        if expr.arity() > regions.len() {
            return Err(Error::ArityMismatch { var: expr.arity() - 1, supplied: regions.len() });
        }
        Ok(CylinderVariable { regions, expr })
    }

    /// Deterministic value, independent of the noise.
    pub fn constant(c: f64) -> CylinderVariable {
        CylinderVariable { regions: Vec::new(), expr: Expr::constant(c) }
    }

    /// The noise value of one region.
    pub fn noise(region: Region) -> CylinderVariable {
        CylinderVariable { regions: vec![region], expr: Expr::var(0) }
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn dim(&self) -> Option<usize> {
        self.regions.first().map(Region::dim)
    }

    /// Certified worst-case expectation of the variable.
    pub fn expect(&self, model: &WhiteNoiseModel, opts: &MaxOptions) -> Result<CertifiedValue> {
        if self.regions.is_empty() {
            return certified_eval(&self.expr, &[], opts);
        }
        let query = FddQuery::new(model.clone(), self.regions.clone(), self.expr.clone())?;
        fdd_expect(&query, opts)
    }

    pub fn add(&self, other: &CylinderVariable) -> Result<CylinderVariable> {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &CylinderVariable) -> Result<CylinderVariable> {
        self.combine(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &CylinderVariable) -> Result<CylinderVariable> {
        self.combine(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> CylinderVariable {
        self.unary(|e| Expr::constant(c) * e)
    }

    pub fn neg(&self) -> CylinderVariable {
        self.unary(|e| -e)
    }

    pub fn abs(&self) -> CylinderVariable {
        self.unary(Expr::abs)
    }

    /// `max(self, 0)`.
    pub fn pos_part(&self) -> CylinderVariable {
        self.unary(|e| Expr::max_of(e, Expr::constant(0.0)))
    }

    /// `max(-self, 0)`.
    pub fn neg_part(&self) -> CylinderVariable {
        self.unary(|e| Expr::max_of(-e, Expr::constant(0.0)))
    }

    fn combine(
        &self,
        other: &CylinderVariable,
        f: impl FnOnce(Expr, Expr) -> Expr,
    ) -> Result<CylinderVariable> {
        let mut m = Merger::default();
        let ea = m.admit(self)?;
        let eb = m.admit(other)?;
        CylinderVariable::new(m.into_regions(), simplify(&f(ea, eb)))
    }

    fn unary(&self, f: impl FnOnce(Expr) -> Expr) -> CylinderVariable {
        CylinderVariable { regions: self.regions.clone(), expr: simplify(&f(self.expr.clone())) }
    }
}

/// Shared variable space for composing cylinder variables.  Regions are
/// interned by geometric identity; admitting a variable remaps its expression
/// into the common index space.  Identity remaps are skipped so operands built
/// over the same regions keep their exact structure.
#[derive(Default)]
struct Merger {
    regions: Vec<Region>,
    index: HashMap<Vec<u8>, usize>,
}

impl Merger {
    fn intern(&mut self, r: &Region) -> Result<usize> {
        if let Some(first) = self.regions.first() {
            if r.dim() != first.dim() {
                return Err(Error::DimensionMismatch { expected: first.dim(), got: r.dim() });
            }
        }
        let key = r.canonical_key();
        if let Some(&i) = self.index.get(&key) {
            return Ok(i);
        }
        let i = self.regions.len();
        self.index.insert(key, i);
        self.regions.push(r.clone());
        Ok(i)
    }

    fn admit(&mut self, v: &CylinderVariable) -> Result<Expr> {
        let mut map = HashMap::new();
        let mut identity = true;
        for (i, r) in v.regions.iter().enumerate() {
            let j = self.intern(r)?;
            identity &= i == j;
            map.insert(i, j);
        }
        Ok(if identity { v.expr.clone() } else { v.expr.remap_vars(&map) })
    }

    fn into_regions(self) -> Vec<Region> {
        self.regions
    }
}

/// A field constant on each of finitely many disjoint carrier regions, with
/// cylinder-variable values: `x ↦ Σ ξ_i · 1_{A_i}(x)`.
#[derive(Debug, Clone)]
pub struct SimpleRandomField {
    terms: Vec<(CylinderVariable, Region)>,
}

impl SimpleRandomField {
    pub fn new(terms: Vec<(CylinderVariable, Region)>) -> Result<Self> {
        if let Some((_, first)) = terms.first() {
            let d = first.dim();
            for (xi, carrier) in &terms {
                if carrier.dim() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: carrier.dim() });
                }
                if let Some(cd) = xi.dim() {
                    if cd != d {
                        return Err(Error::DimensionMismatch { expected: d, got: cd });
                    }
                }
            }
        }
        let carriers: Vec<&Region> = terms.iter().map(|(_, a)| a).collect();
        require_disjoint(&carriers)?;
        Ok(SimpleRandomField { terms })
    }

    pub fn terms(&self) -> &[(CylinderVariable, Region)] {
        &self.terms
    }

    /// Multiply every value by a random factor.
    pub fn scale_by(&self, alpha: &CylinderVariable) -> Result<SimpleRandomField> {
        let terms = self
            .terms
            .iter()
            .map(|(xi, a)| Ok((alpha.mul(xi)?, a.clone())))
            .collect::<Result<_>>()?;
        SimpleRandomField::new(terms)
    }

    /// Pointwise sum.  Carriers pair up by geometric identity; carriers unique
    /// to one side must stay disjoint from everything else.
    pub fn add(&self, other: &SimpleRandomField) -> Result<SimpleRandomField> {
        let mut terms = self.terms.clone();
        'outer: for (xi, a) in &other.terms {
            let key = a.canonical_key();
            for (existing, b) in &mut terms {
                if b.canonical_key() == key {
                    *existing = existing.add(xi)?;
                    continue 'outer;
                }
            }
            terms.push((xi.clone(), a.clone()));
        }
        SimpleRandomField::new(terms)
    }
}

fn require_disjoint(regions: &[&Region]) -> Result<()> {
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

/// `Σ ξ_i · W_{A_i}` as a cylinder variable.  Purely symbolic: the region
/// list is the union of coefficient regions and carriers, deduplicated by
/// geometry; no maximization runs.
pub fn integrate_spatial(
    field: &SimpleRandomField,
    model: &WhiteNoiseModel,
) -> Result<CylinderVariable> {
    let mut m = Merger::default();
    let mut parts = Vec::new();
    for (xi, carrier) in field.terms() {
        if carrier.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), got: carrier.dim() });
        }
        let coeff = m.admit(xi)?;
        let w = Expr::var(m.intern(carrier)?);
        parts.push(coeff * w);
    }
    CylinderVariable::new(m.into_regions(), simplify(&Expr::sum(parts)))
}

/// `Ê[Σ |ξ_i| · λ(A_i)]`, the L¹-type size of a simple field.  Carriers enter
/// only through their measure.
pub fn norm_m1(
    field: &SimpleRandomField,
    model: &WhiteNoiseModel,
    opts: &MaxOptions,
) -> Result<CertifiedValue> {
    let mut m = Merger::default();
    let mut parts = Vec::new();
    for (xi, carrier) in field.terms() {
        parts.push(Expr::constant(carrier.measure()) * m.admit(xi)?.abs());
    }
    let v = CylinderVariable::new(m.into_regions(), simplify(&Expr::sum(parts)))?;
    v.expect(model, opts)
}

/// One verdict of the integral-versus-norm comparison
/// `Ê[|∫ η dW|] ≤ κ·‖η‖ + slack` with `κ = max(|mu.lo|, |mu.hi|)`.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// Worst-case expectation of the integral's absolute value.
    pub integral_abs: f64,
    pub kappa: f64,
    /// The field's norm.
    pub norm: f64,
    /// Tolerance added to the right-hand side (twice the search epsilon).
    pub slack: f64,
    pub ok: bool,
}

pub fn bound_check_spatial(
    field: &SimpleRandomField,
    model: &WhiteNoiseModel,
    opts: &MaxOptions,
) -> Result<BoundReport> {
    let lhs = integrate_spatial(field, model)?.abs().expect(model, opts)?;
    let norm = norm_m1(field, model, opts)?;
    bound_report(lhs.value, norm.value, model, opts)
}

fn bound_report(
    integral_abs: f64,
    norm: f64,
    model: &WhiteNoiseModel,
    opts: &MaxOptions,
) -> Result<BoundReport> {
    let kappa = model.mu().abs_max();
    let slack = 2.0 * opts.epsilon;
    let ok = integral_abs <= kappa * norm + slack;
    Ok(BoundReport { integral_abs, kappa, norm, slack, ok })
}

/// A field piecewise constant in time and space: value `X_ij` on the box
/// `[t_i, t_{i+1}) × A_j`.  Coefficients are cylinder variables over the
/// temporal-spatial noise (dimension `1 + d`, axis 0 = time).
#[derive(Debug, Clone)]
pub struct TemporalSpatialField {
    time_grid: Vec<f64>,
    spatial_regions: Vec<Region>,
    coefficients: Vec<Vec<CylinderVariable>>,
}

impl TemporalSpatialField {
    pub fn new(
        time_grid: Vec<f64>,
        spatial_regions: Vec<Region>,
        coefficients: Vec<Vec<CylinderVariable>>,
    ) -> Result<Self> {
        if time_grid.len() < 2
            || time_grid.iter().any(|t| !t.is_finite() || *t < 0.0)
            || time_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::BadTimeGrid);
        }
        if spatial_regions.is_empty() {
            return Err(Error::invalid("a temporal-spatial field needs a spatial region"));
        }
        let d = spatial_regions[0].dim();
        for r in &spatial_regions {
            if r.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.dim() });
            }
        }
        let refs: Vec<&Region> = spatial_regions.iter().collect();
        require_disjoint(&refs)?;
        if coefficients.len() != time_grid.len() - 1
            || coefficients.iter().any(|row| row.len() != spatial_regions.len())
        {
            return Err(Error::invalid("coefficient table must be slabs x spatial regions"));
        }
        for row in &coefficients {
            for xi in row {
                if let Some(cd) = xi.dim() {
                    if cd != d + 1 {
                        return Err(Error::DimensionMismatch { expected: d + 1, got: cd });
                    }
                }
            }
        }
        Ok(TemporalSpatialField { time_grid, spatial_regions, coefficients })
    }

    /// Same value everywhere on one slab grid.
    pub fn constant(
        c: f64,
        time_grid: Vec<f64>,
        spatial_regions: Vec<Region>,
    ) -> Result<TemporalSpatialField> {
        let slabs = time_grid.len().saturating_sub(1);
        let row = vec![CylinderVariable::constant(c); spatial_regions.len()];
        TemporalSpatialField::new(time_grid, spatial_regions, vec![row; slabs])
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn spatial_regions(&self) -> &[Region] {
        &self.spatial_regions
    }

    pub fn coefficient(&self, slab: usize, region: usize) -> &CylinderVariable {
        &self.coefficients[slab][region]
    }

    /// Insert extra cut times; new slabs inherit the coefficients of the slab
    /// they subdivide.  Cuts outside the grid span are ignored.
    pub fn refine(&self, cuts: &[f64]) -> Result<TemporalSpatialField> {
        let lo = self.time_grid[0];
        let hi = *self.time_grid.last().expect("grid has at least two points");
        let mut grid = self.time_grid.clone();
        for &c in cuts {
            if !c.is_finite() {
                return Err(Error::BadTime(c));
            }
            if c > lo && c < hi && !grid.contains(&c) {
                grid.push(c);
            }
        }
        grid.sort_by(f64::total_cmp);
        let coefficients =
            grid.windows(2).map(|w| self.coefficients[self.slab_of(w[0])].clone()).collect();
        Ok(TemporalSpatialField {
            time_grid: grid,
            spatial_regions: self.spatial_regions.clone(),
            coefficients,
        })
    }

    fn slab_of(&self, t: f64) -> usize {
        self.time_grid
            .windows(2)
            .position(|w| w[0] <= t && t < w[1])
            .unwrap_or(self.time_grid.len() - 2)
    }

    /// The sub-field supported on `[s, t)`; both endpoints become grid points.
    pub fn restrict(&self, s: f64, t: f64) -> Result<TemporalSpatialField> {
        let lo = self.time_grid[0];
        let hi = *self.time_grid.last().expect("grid has at least two points");
        if !(s.is_finite() && t.is_finite()) || s >= t || s < lo || t > hi {
            return Err(Error::BadTimeGrid);
        }
        let refined = self.refine(&[s, t])?;
        let i0 = refined
            .time_grid
            .iter()
            .position(|&x| x == s)
            .expect("start point is on the refined grid");
        let i1 = refined
            .time_grid
            .iter()
            .position(|&x| x == t)
            .expect("end point is on the refined grid");
        Ok(TemporalSpatialField {
            time_grid: refined.time_grid[i0..=i1].to_vec(),
            spatial_regions: refined.spatial_regions.clone(),
            coefficients: refined.coefficients[i0..i1].to_vec(),
        })
    }

    /// Multiply every coefficient by a random factor.
    pub fn scale_by(&self, alpha: &CylinderVariable) -> Result<TemporalSpatialField> {
        let coefficients = self
            .coefficients
            .iter()
            .map(|row| row.iter().map(|xi| alpha.mul(xi)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        TemporalSpatialField::new(self.time_grid.clone(), self.spatial_regions.clone(), coefficients)
    }

    /// Coefficient-wise sum; grids and spatial regions must agree.
    pub fn add(&self, other: &TemporalSpatialField) -> Result<TemporalSpatialField> {
        if self.time_grid != other.time_grid {
            return Err(Error::invalid("time grids must match; refine first"));
        }
        if self.spatial_regions.len() != other.spatial_regions.len()
            || self
                .spatial_regions
                .iter()
                .zip(&other.spatial_regions)
                .any(|(a, b)| a.canonical_key() != b.canonical_key())
        {
            return Err(Error::invalid("spatial regions must match"));
        }
        let coefficients = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(a, b)| a.add(b)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        TemporalSpatialField::new(self.time_grid.clone(), self.spatial_regions.clone(), coefficients)
    }
}

/// `[t0, t1) × A` as one region.
fn slab_region(spatial: &Region, t0: f64, t1: f64) -> Result<Region> {
    let rects = spatial
        .rects()
        .iter()
        .map(|r| r.with_time_slab(t0, t1))
        .collect::<Result<Vec<_>>>()?;
    let name = spatial.name().map(|n| format!("{n}[{t0},{t1})"));
    Region::new(spatial.dim() + 1, rects, name)
}

/// `ΣΣ X_ij · W([t_i, t_{i+1}) × A_j)` as a cylinder variable over the
/// temporal-spatial noise.  The slab-and-region carriers are pairwise disjoint
/// by construction.
pub fn integrate_temporal_spatial(
    field: &TemporalSpatialField,
    model: &WhiteNoiseModel,
) -> Result<CylinderVariable> {
    let d = field.spatial_regions[0].dim();
    if model.dim() != d + 1 {
        return Err(Error::DimensionMismatch { expected: d + 1, got: model.dim() });
    }
    let mut m = Merger::default();
    let mut parts = Vec::new();
    for (i, row) in field.coefficients.iter().enumerate() {
        let (t0, t1) = (field.time_grid[i], field.time_grid[i + 1]);
        for (j, xi) in row.iter().enumerate() {
            let carrier = slab_region(&field.spatial_regions[j], t0, t1)?;
            let coeff = m.admit(xi)?;
            let w = Expr::var(m.intern(&carrier)?);
            parts.push(coeff * w);
        }
    }
    CylinderVariable::new(m.into_regions(), simplify(&Expr::sum(parts)))
}

/// `Ê[ΣΣ |X_ij| · λ(A_j) · (t_{i+1} − t_i)]`.
pub fn norm_m1_temporal(
    field: &TemporalSpatialField,
    model: &WhiteNoiseModel,
    opts: &MaxOptions,
) -> Result<CertifiedValue> {
    let mut m = Merger::default();
    let mut parts = Vec::new();
    for (i, row) in field.coefficients.iter().enumerate() {
        let dt = field.time_grid[i + 1] - field.time_grid[i];
        for (j, xi) in row.iter().enumerate() {
            let weight = field.spatial_regions[j].measure() * dt;
            parts.push(Expr::constant(weight) * m.admit(xi)?.abs());
        }
    }
    let v = CylinderVariable::new(m.into_regions(), simplify(&Expr::sum(parts)))?;
    v.expect(model, opts)
}

pub fn bound_check_temporal_spatial(
    field: &TemporalSpatialField,
    model: &WhiteNoiseModel,
    opts: &MaxOptions,
) -> Result<BoundReport> {
    let lhs = integrate_temporal_spatial(field, model)?.abs().expect(model, opts)?;
    let norm = norm_m1_temporal(field, model, opts)?;
    bound_report(lhs.value, norm.value, model, opts)
}

/// Residuals of the two algebraic identities of the temporal-spatial
/// integral: splitting the time range at `s ≤ r ≤ t`, and linearity with a
/// random factor.  Both cancel structurally, so the residuals come out as
/// exact zeros; the report keeps them observable.
#[derive(Debug, Clone)]
pub struct IntegralPropertiesReport {
    /// `Ê[|∫_s^t f − ∫_s^r f − ∫_r^t f|]` after refining the grid at the cuts.
    pub split_residual: f64,
    /// `Ê[|∫(αf + g) − α∫f − ∫g|]` over the common grid refinement.
    pub linearity_residual: f64,
    pub tolerance: f64,
    pub ok: bool,
}

pub fn integral_properties_check(
    f: &TemporalSpatialField,
    g: &TemporalSpatialField,
    alpha: &CylinderVariable,
    s: f64,
    r: f64,
    t: f64,
    model: &WhiteNoiseModel,
    opts: &MaxOptions,
) -> Result<IntegralPropertiesReport> {
    if !(s <= r && r <= t) {
        return Err(Error::invalid("time points must satisfy s <= r <= t"));
    }
    let refined = f.refine(&[s, r, t])?;
    let i_st = range_integral(&refined, s, t, model)?;
    let i_sr = range_integral(&refined, s, r, model)?;
    let i_rt = range_integral(&refined, r, t, model)?;
    let split = i_st.sub(&i_sr)?.sub(&i_rt)?.abs().expect(model, opts)?;

    let ff = f.refine(g.time_grid())?;
    let gg = g.refine(f.time_grid())?;
    let lhs = integrate_temporal_spatial(&ff.scale_by(alpha)?.add(&gg)?, model)?;
    let rhs = alpha
        .mul(&integrate_temporal_spatial(&ff, model)?)?
        .add(&integrate_temporal_spatial(&gg, model)?)?;
    let lin = lhs.sub(&rhs)?.abs().expect(model, opts)?;

    let tolerance = opts.epsilon;
    let ok = split.value <= tolerance && lin.value <= tolerance;
    Ok(IntegralPropertiesReport {
        split_residual: split.value,
        linearity_residual: lin.value,
        tolerance,
        ok,
    })
}

fn range_integral(
    field: &TemporalSpatialField,
    a: f64,
    b: f64,
    model: &WhiteNoiseModel,
) -> Result<CylinderVariable> {
    if a == b {
        return Ok(CylinderVariable::constant(0.0));
    }
    integrate_temporal_spatial(&field.restrict(a, b)?, model)
}

enum TimePart {
    Observed(Region),
    Future(Region),
    /// Straddling region cut at the filtration time: before and after halves.
    Split(Region, Region),
}

/// Conditional expectation given the noise below time `t`: observed regions
/// (every box before the cut) keep free variables, numbered by their position
/// among the observed; future regions are rewritten to atom coordinates and
/// maximized out with bounds `mu · atom measure` through a
/// partial-maximization node.  Regions straddling the cut are first split
/// box-wise, the variable becoming the sum of the two halves.
///
/// When the input is already laid out observed-first with pairwise disjoint
/// future regions, the expression is wrapped without any rewriting; composed
/// cuts then collapse into one node, so tower-style identities cancel
/// structurally.
pub fn conditional_expect(
    x: &CylinderVariable,
    t: FiltrationTime,
    model: &WhiteNoiseModel,
) -> Result<CylinderVariable> {
    let cut = t.value();
    for r in x.regions() {
        if r.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), got: r.dim() });
        }
    }
    let mut parts = Vec::with_capacity(x.regions().len());
    for r in x.regions() {
        let all_before = r.rects().iter().all(|rc| rc.extent(0).1 <= cut);
        let all_after = r.rects().iter().all(|rc| rc.extent(0).0 >= cut);
        parts.push(if all_before {
            TimePart::Observed(r.clone())
        } else if all_after {
            TimePart::Future(r.clone())
        } else {
            let (before, after) = cut_region(r, cut)?;
            TimePart::Split(before, after)
        });
    }

    let observed: Vec<Region> = parts
        .iter()
        .filter_map(|p| match p {
            TimePart::Observed(r) | TimePart::Split(r, _) => Some(r.clone()),
            TimePart::Future(_) => None,
        })
        .collect();
    let futures: Vec<Region> = parts
        .iter()
        .filter_map(|p| match p {
            TimePart::Future(r) | TimePart::Split(_, r) => Some(r.clone()),
            TimePart::Observed(_) => None,
        })
        .collect();

    if futures.is_empty() {
        return Ok(x.clone());
    }

    let n_obs = observed.len();
    let plain_layout = parts
        .iter()
        .enumerate()
        .all(|(i, p)| matches!(p, TimePart::Observed(_)) == (i < n_obs))
        && !parts.iter().any(|p| matches!(p, TimePart::Split(..)));
    let futures_disjoint = futures
        .iter()
        .enumerate()
        .all(|(i, a)| futures.iter().skip(i + 1).all(|b| a.disjoint_from(b)));

    let expr = if plain_layout && futures_disjoint {
        let vars = (n_obs..n_obs + futures.len()).collect();
        let bounds =
            futures.iter().map(|r| model.mu().scale(r.measure())).collect::<Result<Vec<_>>>()?;
        simplify(&Expr::box_max(vars, bounds, x.expr().clone())?)
    } else {
        // Rebuild the variable space: observed positions first, then one
        // bound variable per future atom.
        let decomp = atoms(&futures)?;
        let atom_sum = |src: usize| {
            Expr::sum(
                decomp
                    .atoms()
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| a.covers_source(src))
                    .map(|(k, _)| Expr::var(n_obs + k))
                    .collect(),
            )
        };
        let mut map = HashMap::new();
        let (mut obs_pos, mut fut_pos) = (0, 0);
        for (i, p) in parts.iter().enumerate() {
            let repl = match p {
                TimePart::Observed(_) => {
                    obs_pos += 1;
                    Expr::var(obs_pos - 1)
                }
                TimePart::Future(_) => {
                    fut_pos += 1;
                    atom_sum(fut_pos - 1)
                }
                TimePart::Split(..) => {
                    obs_pos += 1;
                    fut_pos += 1;
                    Expr::var(obs_pos - 1) + atom_sum(fut_pos - 1)
                }
            };
            map.insert(i, repl);
        }
        let body = x.expr().substitute_free(&map);
        if decomp.is_empty() {
            // Every future region is null, so its noise value is exactly zero.
            simplify(&body)
        } else {
            let vars = (n_obs..n_obs + decomp.atoms().len()).collect();
            let bounds = decomp
                .atoms()
                .iter()
                .map(|a| model.mu().scale(a.measure))
                .collect::<Result<Vec<_>>>()?;
            simplify(&Expr::box_max(vars, bounds, body)?)
        }
    };
    CylinderVariable::new(observed, expr)
}

/// Cut a region at a time value, returning the before and after parts.  Both
/// are nonempty whenever the region genuinely straddles the cut.
fn cut_region(r: &Region, cut: f64) -> Result<(Region, Region)> {
    let mut before = Vec::new();
    let mut after = Vec::new();
    for rc in r.rects() {
        let (a, b) = rc.extent(0);
        if b <= cut {
            before.push(rc.clone());
        } else if a >= cut {
            after.push(rc.clone());
        } else {
            let mut lo_half = rc.extents().to_vec();
            let mut hi_half = lo_half.clone();
            lo_half[0] = (a, cut);
            hi_half[0] = (cut, b);
            before.push(Rect::new(lo_half)?);
            after.push(Rect::new(hi_half)?);
        }
    }
    let name = r.name().map(str::to_string);
    Ok((Region::new(r.dim(), before, name)?, Region::new(r.dim(), after, None)?))
}

/// Residuals of the conditional-expectation calculus at cut times `t` and
/// `s`.  `x` and `y` feed the order and subadditivity lines (callers pass `x`
/// pointwise below `y` for the order line); `eta` must be observable at `t`.
#[derive(Debug, Clone)]
pub struct ConditionalReport {
    /// Worst case of `x − y` (the premise) and of the conditioned difference
    /// (the conclusion), whichever is larger.
    pub monotone_residual: f64,
    /// `Ê[|E[η | t] − η|]`; exact zero when η is observable at `t`.
    pub triviality_residual: f64,
    /// Worst case of `E[x+y | t] − E[x | t] − E[y | t]` over observed
    /// coordinates, also sampled on a coordinate grid.
    pub subadditivity_residual: f64,
    /// `Ê[|E[ηx | t] − η⁺E[x | t] − η⁻E[−x | t]|]`.
    pub factor_residual: f64,
    /// `Ê[|E[E[x | t] | s] − E[x | min(s,t)]|]`.
    pub tower_residual: f64,
    pub tolerance: f64,
    pub ok: bool,
}

pub fn conditional_properties_check(
    x: &CylinderVariable,
    y: &CylinderVariable,
    eta: &CylinderVariable,
    t: FiltrationTime,
    s: FiltrationTime,
    model: &WhiteNoiseModel,
    opts: &MaxOptions,
) -> Result<ConditionalReport> {
    for (i, r) in eta.regions().iter().enumerate() {
        if r.rects().iter().any(|rc| rc.extent(0).1 > t.value()) {
            return Err(Error::NotMeasurable { what: region_label(r, i), t: t.value() });
        }
    }
    let cx = conditional_expect(x, t, model)?;
    let cy = conditional_expect(y, t, model)?;

    let premise = x.sub(y)?.expect(model, opts)?.value;
    let order = cx.sub(&cy)?.expect(model, opts)?.value;
    let monotone_residual = premise.max(order);

    let triviality_residual =
        conditional_expect(eta, t, model)?.sub(eta)?.abs().expect(model, opts)?.value;

    let gap = conditional_expect(&x.add(y)?, t, model)?.sub(&cx)?.sub(&cy)?;
    let mut subadditivity_residual = gap.expect(model, opts)?.value;
    if pairwise_disjoint(gap.regions()) {
        let ranges = gap
            .regions()
            .iter()
            .map(|r| model.mu().scale(r.measure()))
            .collect::<Result<Vec<_>>>()?;
        for env in sample_grid(&ranges, 3) {
            let v = certified_eval(gap.expr(), &env, opts)?.value;
            subadditivity_residual = subadditivity_residual.max(v);
        }
    }

    let lhs = conditional_expect(&eta.mul(x)?, t, model)?;
    let rhs = eta
        .pos_part()
        .mul(&cx)?
        .add(&eta.neg_part().mul(&conditional_expect(&x.neg(), t, model)?)?)?;
    let factor_residual = lhs.sub(&rhs)?.abs().expect(model, opts)?.value;

    let staged = conditional_expect(&cx, s, model)?;
    let earlier = FiltrationTime::new(s.value().min(t.value()))?;
    let direct = conditional_expect(x, earlier, model)?;
    let tower_residual = staged.sub(&direct)?.abs().expect(model, opts)?.value;

    let tolerance = opts.epsilon;
    let ok = [
        monotone_residual,
        triviality_residual,
        subadditivity_residual,
        factor_residual,
        tower_residual,
    ]
    .iter()
    .all(|&v| v <= tolerance);
    Ok(ConditionalReport {
        monotone_residual,
        triviality_residual,
        subadditivity_residual,
        factor_residual,
        tower_residual,
        tolerance,
        ok,
    })
}

fn pairwise_disjoint(regions: &[Region]) -> bool {
    regions
        .iter()
        .enumerate()
        .all(|(i, a)| regions.iter().skip(i + 1).all(|b| a.disjoint_from(b)))
}

/// Cartesian sample of each range at `per_axis` evenly spaced points,
/// endpoints included.  Empty when the product would be unreasonably large.
fn sample_grid(ranges: &[UncertaintyInterval], per_axis: usize) -> Vec<Vec<f64>> {
    const MAX_POINTS: usize = 1024;
    if ranges.is_empty() || per_axis < 2 {
        return Vec::new();
    }
    let total = per_axis.checked_pow(ranges.len() as u32).unwrap_or(usize::MAX);
    if total > MAX_POINTS {
        return Vec::new();
    }
    let mut out = vec![Vec::new()];
    for r in ranges {
        let step = r.width() / (per_axis - 1) as f64;
        let mut next = Vec::with_capacity(out.len() * per_axis);
        for prefix in &out {
            for k in 0..per_axis {
                let mut p = prefix.clone();
                p.push(r.lo() + step * k as f64);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::UncertaintyInterval;

    fn opts() -> MaxOptions {
        MaxOptions::with_epsilon(1e-6)
    }

    fn iv(lo: f64, hi: f64) -> UncertaintyInterval {
        UncertaintyInterval::new(lo, hi).unwrap()
    }

    fn seg(lo: f64, hi: f64, name: &str) -> Region {
        Region::from_rect(Rect::new(vec![(lo, hi)]).unwrap(), Some(name.into()))
    }

    fn box2(t: (f64, f64), x: (f64, f64), name: &str) -> Region {
        Region::from_rect(Rect::new(vec![t, x]).unwrap(), Some(name.into()))
    }

    #[test]
    fn integral_of_indicator_is_noise_of_carrier() {
        let model = WhiteNoiseModel::new(1, iv(-1.0, 1.0)).unwrap();
        let a = seg(0.0, 2.0, "A");
        let field = SimpleRandomField::new(vec![(CylinderVariable::constant(1.0), a.clone())])
            .unwrap();
        let integral = integrate_spatial(&field, &model).unwrap();
        assert_eq!(integral.regions().len(), 1);
        assert_eq!(integral.regions()[0].canonical_key(), a.canonical_key());
        assert_eq!(*integral.expr(), Expr::var(0));
        let e = integral.expect(&model, &opts()).unwrap();
        assert!((e.value - 2.0).abs() <= 1e-6, "E[W_A] = {}", e.value);
    }

    #[test]
    fn integral_scales_with_constant_coefficient() {
        let model = WhiteNoiseModel::new(1, iv(-1.0, 1.0)).unwrap();
        let a = seg(0.0, 2.0, "A");
        let field =
            SimpleRandomField::new(vec![(CylinderVariable::constant(-3.0), a)]).unwrap();
        let e = integrate_spatial(&field, &model).unwrap().expect(&model, &opts()).unwrap();
        // max of -3v over v in [-2, 2].
        assert!((e.value - 6.0).abs() <= 1e-6);
    }

    #[test]
    fn integral_with_noise_coefficient_on_disjoint_carrier() {
        let model = WhiteNoiseModel::new(1, iv(-1.0, 1.0)).unwrap();
        let a = seg(0.0, 1.0, "A");
        let b = seg(1.0, 2.0, "B");
        let field =
            SimpleRandomField::new(vec![(CylinderVariable::noise(b), a)]).unwrap();
        let integral = integrate_spatial(&field, &model).unwrap();
        assert_eq!(integral.regions().len(), 2);
        let e = integral.abs().expect(&model, &opts()).unwrap();
        // max |u * v| over the unit square of marginals.
        assert!((e.value - 1.0).abs() <= 1e-6, "E|W_B W_A| = {}", e.value);
    }

    #[test]
    fn norms_of_reference_fields() {
        let model = WhiteNoiseModel::new(1, iv(-1.0, 1.0)).unwrap();
        let a = seg(0.0, 2.0, "A");
        let unit_a = seg(0.0, 1.0, "A");
        let b = seg(1.0, 2.0, "B");

        let indicator =
            SimpleRandomField::new(vec![(CylinderVariable::constant(1.0), a)]).unwrap();
        let n = norm_m1(&indicator, &model, &opts()).unwrap();
        assert!((n.value - 2.0).abs() <= 1e-6);

        let weighted =
            SimpleRandomField::new(vec![(CylinderVariable::noise(b), unit_a)]).unwrap();
        let n = norm_m1(&weighted, &model, &opts()).unwrap();
        assert!((n.value - 1.0).abs() <= 1e-6);

        let zero = SimpleRandomField::new(Vec::new()).unwrap();
        let n = norm_m1(&zero, &model, &opts()).unwrap();
        assert_eq!(n.value, 0.0);
    }

    #[test]
    fn spatial_bound_holds_with_equality_for_indicator() {
        let model = WhiteNoiseModel::new(1, iv(-1.0, 1.0)).unwrap();
        let field = SimpleRandomField::new(vec![(
            CylinderVariable::constant(1.0),
            seg(0.0, 2.0, "A"),
        )])
        .unwrap();
        let report = bound_check_spatial(&field, &model, &opts()).unwrap();
        assert!(report.ok);
        assert_eq!(report.kappa, 1.0);
        assert!((report.integral_abs - 2.0).abs() <= 1e-6);
        assert!((report.norm - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn spatial_bound_degenerates_with_zero_noise() {
        let model = WhiteNoiseModel::new(1, iv(0.0, 0.0)).unwrap();
        let field = SimpleRandomField::new(vec![(
            CylinderVariable::constant(1.0),
            seg(0.0, 2.0, "A"),
        )])
        .unwrap();
        let report = bound_check_spatial(&field, &model, &opts()).unwrap();
        assert!(report.ok);
        assert_eq!(report.kappa, 0.0);
        assert!(report.integral_abs.abs() <= 1e-9);
    }

    #[test]
    fn overlapping_carriers_are_rejected() {
        let err = SimpleRandomField::new(vec![
            (CylinderVariable::constant(1.0), seg(0.0, 2.0, "A")),
            (CylinderVariable::constant(1.0), seg(1.0, 3.0, "B")),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::NotDisjoint { .. }), "{err}");
    }

    #[test]
    fn field_addition_merges_matching_carriers() {
        let model = WhiteNoiseModel::new(1, iv(-1.0, 1.0)).unwrap();
        let a = seg(0.0, 1.0, "A");
        let f = SimpleRandomField::new(vec![(CylinderVariable::constant(2.0), a.clone())])
            .unwrap();
        let g = SimpleRandomField::new(vec![(CylinderVariable::constant(3.0), a)]).unwrap();
        let sum = f.add(&g).unwrap();
        assert_eq!(sum.terms().len(), 1);
        let e = integrate_spatial(&sum, &model).unwrap().expect(&model, &opts()).unwrap();
        assert!((e.value - 5.0).abs() <= 1e-6);
    }

    #[test]
    fn spatial_linearity_cancels_symbolically() {
        let model = WhiteNoiseModel::new(1, iv(-1.0, 1.0)).unwrap();
        let a = seg(0.0, 1.0, "A");
        let b = seg(1.0, 2.0, "B");
        let c = seg(2.0, 3.0, "C");
        let alpha = CylinderVariable::noise(c.clone());
        let f = SimpleRandomField::new(vec![(CylinderVariable::noise(c), a.clone())]).unwrap();
        let g = SimpleRandomField::new(vec![
            (CylinderVariable::constant(1.0), a),
            (CylinderVariable::constant(-2.0), b),
        ])
        .unwrap();
        let lhs = integrate_spatial(&f.scale_by(&alpha).unwrap().add(&g).unwrap(), &model)
            .unwrap();
        let rhs = alpha
            .mul(&integrate_spatial(&f, &model).unwrap())
            .unwrap()
            .add(&integrate_spatial(&g, &model).unwrap())
            .unwrap();
        let residual = lhs.sub(&rhs).unwrap().abs().expect(&model, &opts()).unwrap();
        assert_eq!(residual.value, 0.0);
        assert_eq!(residual.evaluations, 1);
    }

    #[test]
    fn temporal_integral_of_constant_field() {
        let model = WhiteNoiseModel::new(2, iv(0.0, 1.0)).unwrap();
        let a = seg(0.0, 1.0, "A");
        let field = TemporalSpatialField::constant(1.0, vec![0.0, 1.0], vec![a]).unwrap();
        let e = integrate_temporal_spatial(&field, &model)
            .unwrap()
            .expect(&model, &opts())
            .unwrap();
        assert!((e.value - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn temporal_integral_allows_non_adapted_coefficient() {
        let model = WhiteNoiseModel::new(2, iv(0.0, 1.0)).unwrap();
        let a = seg(0.0, 1.0, "A");
        let ahead = box2((1.0, 2.0), (0.0, 1.0), "ahead");
        let field = TemporalSpatialField::new(
            vec![0.0, 1.0],
            vec![a],
            vec![vec![CylinderVariable::noise(ahead)]],
        )
        .unwrap();
        let e = integrate_temporal_spatial(&field, &model)
            .unwrap()
            .expect(&model, &opts())
            .unwrap();
        // max u*v over the unit square.
        assert!((e.value - 1.0).abs() <= 1e-6, "got {}", e.value);
    }

    #[test]
    fn temporal_integral_matches_closed_form_for_two_slabs() {
        let model = WhiteNoiseModel::new(2, iv(-1.0, 1.0)).unwrap();
        let a = seg(0.0, 1.0, "A");
        let field = TemporalSpatialField::new(
            vec![0.0, 1.0, 2.0],
            vec![a],
            vec![
                vec![CylinderVariable::constant(2.0)],
                vec![CylinderVariable::constant(-1.0)],
            ],
        )
        .unwrap();
        let e = integrate_temporal_spatial(&field, &model)
            .unwrap()
            .expect(&model, &opts())
            .unwrap();
        // g(2)*1 + g(-1)*1 with mu = [-1, 1].
        assert!((e.value - 3.0).abs() <= 1e-6, "got {}", e.value);
    }

    #[test]
    fn refinement_never_moves_the_integral() {
        let model = WhiteNoiseModel::new(2, iv(-1.0, 1.0)).unwrap();
        let a = seg(0.0, 1.0, "A");
        let ahead = box2((1.0, 2.0), (0.0, 1.0), "ahead");
        let field = TemporalSpatialField::new(
            vec![0.0, 1.0, 2.0],
            vec![a],
            vec![
                vec![CylinderVariable::noise(ahead)],
                vec![CylinderVariable::constant(-1.0)],
            ],
        )
        .unwrap();
        let base = integrate_temporal_spatial(&field, &model)
            .unwrap()
            .expect(&model, &opts())
            .unwrap();
        let refined = field.refine(&[0.25, 0.5, 1.5]).unwrap();
        assert_eq!(refined.time_grid().len(), 6);
        let again = integrate_temporal_spatial(&refined, &model)
            .unwrap()
            .expect(&model, &opts())
            .unwrap();
        assert!((base.value - again.value).abs() <= 1e-6);
    }

    #[test]
    fn restrict_keeps_the_matching_slabs() {
        let a = seg(0.0, 1.0, "A");
        let field = TemporalSpatialField::new(
            vec![0.0, 1.0, 2.0],
            vec![a],
            vec![
                vec![CylinderVariable::constant(5.0)],
                vec![CylinderVariable::constant(7.0)],
            ],
        )
        .unwrap();
        let part = field.restrict(0.5, 1.5).unwrap();
        assert_eq!(part.time_grid(), &[0.5, 1.0, 1.5]);
        let c0 = part.coefficient(0, 0).expr().clone();
        let c1 = part.coefficient(1, 0).expr().clone();
        assert_eq!(c0, Expr::constant(5.0));
        assert_eq!(c1, Expr::constant(7.0));
    }

    #[test]
    fn splitting_and_linearity_are_exact_at_grid_points() {
        let model = WhiteNoiseModel::new(2, iv(-1.0, 1.0)).unwrap();
        let a = seg(0.0, 1.0, "A");
        let ahead = box2((1.0, 2.0), (0.0, 1.0), "ahead");
        let f = TemporalSpatialField::new(
            vec![0.0, 1.0, 2.0],
            vec![a.clone()],
            vec![
                vec![CylinderVariable::noise(ahead.clone())],
                vec![CylinderVariable::constant(2.0)],
            ],
        )
        .unwrap();
        let g = TemporalSpatialField::constant(-1.0, vec![0.0, 1.0, 2.0], vec![a]).unwrap();
        let alpha = CylinderVariable::noise(ahead);
        let report =
            integral_properties_check(&f, &g, &alpha, 0.0, 1.0, 2.0, &model, &opts()).unwrap();
        assert!(report.ok, "{report:?}");
        assert_eq!(report.split_residual, 0.0);
        assert_eq!(report.linearity_residual, 0.0);
    }

    #[test]
    fn splitting_refines_at_interior_points() {
        let model = WhiteNoiseModel::new(2, iv(-1.0, 1.0)).unwrap();
        let a = seg(0.0, 1.0, "A");
        let f = TemporalSpatialField::new(
            vec![0.0, 2.0],
            vec![a.clone()],
            vec![vec![CylinderVariable::constant(3.0)]],
        )
        .unwrap();
        let g = TemporalSpatialField::constant(1.0, vec![0.0, 2.0], vec![a]).unwrap();
        let alpha = CylinderVariable::constant(2.0);
        let report =
            integral_properties_check(&f, &g, &alpha, 0.0, 0.7, 2.0, &model, &opts()).unwrap();
        assert!(report.ok, "{report:?}");
        assert_eq!(report.split_residual, 0.0);
    }

    #[test]
    fn temporal_bound_check_holds() {
        let model = WhiteNoiseModel::new(2, iv(-1.0, 2.0)).unwrap();
        let a = seg(0.0, 1.0, "A");
        let ahead = box2((1.0, 2.0), (0.0, 0.5), "ahead");
        let field = TemporalSpatialField::new(
            vec![0.0, 0.5, 1.0],
            vec![a],
            vec![
                vec![CylinderVariable::noise(ahead)],
                vec![CylinderVariable::constant(-2.0)],
            ],
        )
        .unwrap();
        let report = bound_check_temporal_spatial(&field, &model, &opts()).unwrap();
        assert!(report.ok, "{report:?}");
        assert_eq!(report.kappa, 2.0);
    }

    fn two_slab_sum(model_mu: (f64, f64)) -> (WhiteNoiseModel, CylinderVariable) {
        let model = WhiteNoiseModel::new(2, iv(model_mu.0, model_mu.1)).unwrap();
        let first = box2((0.0, 1.0), (0.0, 1.0), "first");
        let second = box2((1.0, 2.0), (0.0, 1.0), "second");
        let x = CylinderVariable::new(
            vec![first, second],
            Expr::var(0) + Expr::var(1),
        )
        .unwrap();
        (model, x)
    }

    #[test]
    fn conditional_of_two_slab_sum_shifts_by_the_future_mean() {
        let (model, x) = two_slab_sum((0.0, 1.0));
        let cond = conditional_expect(&x, FiltrationTime::new(1.0).unwrap(), &model).unwrap();
        assert_eq!(cond.regions().len(), 1);
        assert_eq!(cond.regions()[0].name(), Some("first"));
        // psi(w) = w + max over v in [0,1] of v = w + 1.
        for w in [0.0, 0.25, 0.8] {
            let v = certified_eval(cond.expr(), &[w], &opts()).unwrap();
            assert!((v.value - (w + 1.0)).abs() <= 1e-6, "psi({w}) = {}", v.value);
        }
        let e = cond.expect(&model, &opts()).unwrap();
        assert!((e.value - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn conditional_is_identity_when_everything_is_observed() {
        let (model, x) = two_slab_sum((0.0, 1.0));
        let cond = conditional_expect(&x, FiltrationTime::new(2.0).unwrap(), &model).unwrap();
        assert_eq!(cond.expr(), x.expr());
        assert_eq!(cond.regions().len(), 2);
    }

    #[test]
    fn conditional_at_time_zero_is_the_expectation() {
        let (model, x) = two_slab_sum((0.0, 1.0));
        let cond = conditional_expect(&x, FiltrationTime::new(0.0).unwrap(), &model).unwrap();
        assert!(cond.regions().is_empty());
        let whole = cond.expect(&model, &opts()).unwrap();
        let direct = x.expect(&model, &opts()).unwrap();
        assert!((whole.value - 2.0).abs() <= 1e-6);
        assert!((whole.value - direct.value).abs() <= 1e-6);
    }

    #[test]
    fn conditional_splits_straddling_regions() {
        let model = WhiteNoiseModel::new(2, iv(0.0, 1.0)).unwrap();
        let long = box2((0.0, 2.0), (0.0, 1.0), "long");
        let x = CylinderVariable::noise(long);
        let cond = conditional_expect(&x, FiltrationTime::new(1.0).unwrap(), &model).unwrap();
        assert_eq!(cond.regions().len(), 1);
        let rect = cond.regions()[0].as_single_rect().unwrap();
        assert_eq!(rect.extent(0), (0.0, 1.0));
        for w in [0.0, 0.5] {
            let v = certified_eval(cond.expr(), &[w], &opts()).unwrap();
            assert!((v.value - (w + 1.0)).abs() <= 1e-6);
        }
    }

    #[test]
    fn tower_composition_collapses_structurally() {
        let model = WhiteNoiseModel::new(2, iv(-1.0, 1.0)).unwrap();
        let slabs: Vec<Region> = (0..3)
            .map(|i| box2((i as f64, i as f64 + 1.0), (0.0, 1.0), &format!("s{i}")))
            .collect();
        let x = CylinderVariable::new(
            slabs,
            Expr::var(0) + Expr::var(1) * Expr::var(2),
        )
        .unwrap();
        let at = |t: f64| FiltrationTime::new(t).unwrap();
        let inner = conditional_expect(&x, at(2.0), &model).unwrap();
        let staged = conditional_expect(&inner, at(1.0), &model).unwrap();
        let direct = conditional_expect(&x, at(1.0), &model).unwrap();
        assert_eq!(staged.expr(), direct.expr());
        let residual = staged.sub(&direct).unwrap().abs().expect(&model, &opts()).unwrap();
        assert_eq!(residual.value, 0.0);
        assert_eq!(residual.evaluations, 1);
    }

    #[test]
    fn conditional_properties_hold_on_the_running_example() {
        let (model, x) = two_slab_sum((0.0, 1.0));
        let bump = CylinderVariable::noise(box2((0.0, 1.0), (2.0, 3.0), "bump"));
        let y = x.add(&bump.abs()).unwrap();
        let eta = CylinderVariable::noise(box2((0.0, 1.0), (0.0, 1.0), "first"));
        let t = FiltrationTime::new(1.0).unwrap();
        let s = FiltrationTime::new(0.0).unwrap();
        let opts = MaxOptions::with_epsilon(1e-4);
        let report = conditional_properties_check(&x, &y, &eta, t, s, &model, &opts).unwrap();
        assert!(report.ok, "{report:?}");
        assert_eq!(report.triviality_residual, 0.0);
        assert_eq!(report.tower_residual, 0.0);
    }

    #[test]
    fn eta_must_be_observable_at_the_cut() {
        let (model, x) = two_slab_sum((0.0, 1.0));
        let eta = CylinderVariable::noise(box2((0.0, 2.0), (0.0, 1.0), "wide"));
        let t = FiltrationTime::new(1.0).unwrap();
        let err = conditional_properties_check(&x, &x, &eta, t, t, &model, &opts()).unwrap_err();
        assert!(matches!(err, Error::NotMeasurable { .. }), "{err}");
    }

    #[test]
    fn factor_identity_reduces_to_equality_for_unit_factor() {
        let (model, x) = two_slab_sum((0.0, 1.0));
        let eta = CylinderVariable::constant(1.0);
        let t = FiltrationTime::new(1.0).unwrap();
        let opts = MaxOptions::with_epsilon(1e-4);
        let report =
            conditional_properties_check(&x, &x, &eta, t, t, &model, &opts).unwrap();
        assert!(report.factor_residual <= 1e-4, "{report:?}");
    }

    #[test]
    fn filtration_time_rejects_bad_values() {
        assert!(FiltrationTime::new(-0.5).is_err());
        assert!(FiltrationTime::new(f64::NAN).is_err());
        assert_eq!(FiltrationTime::new(1.5).unwrap().value(), 1.5);
    }
}
