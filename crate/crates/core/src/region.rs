//! Finite unions of half-open axis-aligned boxes in R^d, with exact Lebesgue
//! measure, refinement into disjoint pieces, atom decompositions of several
//! regions at once, and measure-preserving rigid transforms (translations
//! composed with signed permutations of the axes).
//!
//! All refinement is done by a coordinate sweep: collect every boundary
//! hyperplane of the inputs, form the elementary grid cells they induce, and
//! classify each cell by membership.  Cell coordinates are copied, never
//! computed, so refinement introduces no rounding of its own.

use crate::error::{Error, Result};

/// Upper bound on the number of source regions in one atom decomposition.
/// Atoms are indexed by bitmasks over the sources, so this caps the mask width.
pub const MAX_ATOM_SOURCES: usize = 20;

/// Upper bound on elementary cells produced by one sweep.
const MAX_CELLS: usize = 1 << 21;

/// A half-open box `[lo_1, hi_1) x ... x [lo_d, hi_d)`.  Extents with
/// `lo == hi` are valid and denote the empty box.
#[derive(Debug, Clone, PartialEq)]
pub struct Rect {
    extents: Vec<(f64, f64)>,
}

impl Rect {
    pub fn new(extents: Vec<(f64, f64)>) -> Result<Self> {
        if extents.is_empty() {
            return Err(Error::invalid("box needs at least one axis"));
        }
        for (axis, &(lo, hi)) in extents.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite("box extent"));
            }
            if lo > hi {
                return Err(Error::InvalidExtent { axis, lo, hi });
            }
        }
        // Flush -0.0 to +0.0 so identical geometry is bit-identical.
        let extents = extents.iter().map(|&(lo, hi)| (lo + 0.0, hi + 0.0)).collect();
        Ok(Self { extents })
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extents
    }

    pub fn extent(&self, axis: usize) -> (f64, f64) {
        self.extents[axis]
    }

    pub fn is_empty(&self) -> bool {
        self.extents.iter().any(|&(lo, hi)| lo >= hi)
    }

    /// Product of the side lengths.
    pub fn volume(&self) -> f64 {
        self.extents.iter().map(|&(lo, hi)| hi - lo).product()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        debug_assert_eq!(point.len(), self.dim());
        self.extents
            .iter()
            .zip(point)
            .all(|(&(lo, hi), &x)| lo <= x && x < hi)
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        debug_assert_eq!(self.dim(), other.dim());
        let mut extents = Vec::with_capacity(self.dim());
        for (&(a, b), &(c, d)) in self.extents.iter().zip(&other.extents) {
            let lo = a.max(c);
            let hi = b.min(d);
            if lo >= hi {
                return None;
            }
            extents.push((lo, hi));
        }
        Some(Rect { extents })
    }

    /// Prefix a time axis, turning a spatial box into `[t0, t1) x self`.
    pub fn with_time_slab(&self, t0: f64, t1: f64) -> Result<Rect> {
        let mut extents = Vec::with_capacity(self.dim() + 1);
        extents.push((t0, t1));
        extents.extend_from_slice(&self.extents);
        Rect::new(extents)
    }

    fn key_bytes(&self, out: &mut Vec<u8>) {
        for &(lo, hi) in &self.extents {
            out.extend_from_slice(&lo.to_bits().to_be_bytes());
            out.extend_from_slice(&hi.to_bits().to_be_bytes());
        }
    }
}

/// A signed permutation of the axes: output axis `i` reads input axis
/// `source[i]`, negated when `flip[i]` is set.  Composed with a translation
/// this is exactly the class of rigid motions that map half-open boxes to
/// half-open boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPermutation {
    source: Vec<usize>,
    flip: Vec<bool>,
}

impl SignedPermutation {
    pub fn new(source: Vec<usize>, flip: Vec<bool>) -> Result<Self> {
        let d = source.len();
        if d == 0 || flip.len() != d {
            return Err(Error::BadPermutation("length mismatch".into()));
        }
        let mut seen = vec![false; d];
        for &s in &source {
            if s >= d || seen[s] {
                return Err(Error::BadPermutation(format!("source axes {source:?} are not a permutation")));
            }
            seen[s] = true;
        }
        Ok(Self { source, flip })
    }

    pub fn identity(dim: usize) -> Self {
        Self { source: (0..dim).collect(), flip: vec![false; dim] }
    }

    pub fn dim(&self) -> usize {
        self.source.len()
    }

    /// Map one box.  A flipped axis turns `[lo, hi)` into `(-hi, -lo]`, which
    /// renormalizes to the half-open `[-hi, -lo)`; the face that changes sides
    /// has measure zero, so the measure is untouched.
    fn apply_rect(&self, rect: &Rect, shift: &[f64]) -> Rect {
        let extents = (0..self.dim())
            .map(|i| {
                let (lo, hi) = rect.extents[self.source[i]];
                if self.flip[i] {
                    (-hi + shift[i], -lo + shift[i])
                } else {
                    (lo + shift[i], hi + shift[i])
                }
            })
            .map(|(lo, hi)| (lo + 0.0, hi + 0.0))
            .collect();
        Rect { extents }
    }
}

/// A finite union of half-open boxes, stored pairwise disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    dim: usize,
    rects: Vec<Rect>,
    name: Option<String>,
}

impl Region {
    /// Build a region from arbitrary (possibly overlapping) boxes.  The input
    /// is swept into disjoint cells and compacted, so the stored form is
    /// always pairwise disjoint.
    pub fn new(dim: usize, rects: Vec<Rect>, name: Option<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("region dimension must be at least 1"));
        }
        for r in &rects {
            if r.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.dim() });
            }
        }
        let live: Vec<Rect> = rects.into_iter().filter(|r| !r.is_empty()).collect();
        let cells = sweep_cells(dim, &live, |cell_rep| live.iter().any(|r| r.contains(cell_rep)))?;
        Ok(Self { dim, rects: merge_cells(dim, cells), name })
    }

    pub fn from_rect(rect: Rect, name: Option<String>) -> Self {
        let dim = rect.dim();
        let rects = if rect.is_empty() { vec![] } else { vec![rect] };
        Self { dim, rects, name }
    }

    /// Internal: wrap cells already known pairwise disjoint.
    fn from_disjoint_cells(dim: usize, cells: Vec<Rect>, name: Option<String>) -> Self {
        Self { dim, rects: merge_cells(dim, cells), name }
    }

    pub fn union(dim: usize, parts: &[Region], name: Option<String>) -> Result<Self> {
        let mut rects = Vec::new();
        for p in parts {
            if p.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.dim });
            }
            rects.extend(p.rects.iter().cloned());
        }
        Region::new(dim, rects, name)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    /// Lebesgue measure: sum of box volumes of the disjoint representation,
    /// taken in stored order.
    pub fn measure(&self) -> f64 {
        self.rects.iter().map(Rect::volume).sum()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        self.rects.iter().any(|r| r.contains(point))
    }

    pub fn bounding_rect(&self) -> Option<Rect> {
        let first = self.rects.first()?;
        let mut extents = first.extents.clone();
        for r in &self.rects[1..] {
            for (axis, &(lo, hi)) in r.extents.iter().enumerate() {
                extents[axis].0 = extents[axis].0.min(lo);
                extents[axis].1 = extents[axis].1.max(hi);
            }
        }
        Some(Rect { extents })
    }

    pub fn intersects(&self, other: &Region) -> bool {
        self.rects
            .iter()
            .any(|a| other.rects.iter().any(|b| a.intersect(b).is_some()))
    }

    /// The region shares no point with `other`.
    pub fn disjoint_from(&self, other: &Region) -> bool {
        !self.intersects(other)
    }

    /// Apply `x -> P x + shift` for a signed permutation `P`.
    pub fn transform(&self, shift: &[f64], perm: &SignedPermutation) -> Result<Region> {
        if shift.len() != self.dim || perm.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: shift.len().max(perm.dim()) });
        }
        if shift.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("shift"));
        }
        let rects = self.rects.iter().map(|r| perm.apply_rect(r, shift)).collect();
        // The map is a bijection, so disjointness is preserved; re-merge only
        // to keep the stored form compact and canonical.
        Ok(Region::from_disjoint_cells(self.dim, rects, self.name.clone()))
    }

    /// If the region is a single box, return it.
    pub fn as_single_rect(&self) -> Option<&Rect> {
        if self.rects.len() == 1 {
            Some(&self.rects[0])
        } else {
            None
        }
    }

    /// Byte key identifying the region as a set (dimension plus the sorted
    /// disjoint representation).  Regions built through identical refinement
    /// paths compare equal; used to merge variable spaces of cylinder
    /// functionals.
    pub fn canonical_key(&self) -> Vec<u8> {
        let mut rect_keys: Vec<Vec<u8>> = self
            .rects
            .iter()
            .map(|r| {
                let mut k = Vec::with_capacity(16 * self.dim);
                r.key_bytes(&mut k);
                k
            })
            .collect();
        rect_keys.sort();
        let mut out = Vec::with_capacity(4 + rect_keys.len() * 16 * self.dim);
        out.extend_from_slice(&(self.dim as u32).to_be_bytes());
        for k in rect_keys {
            out.extend_from_slice(&k);
        }
        out
    }
}

/// Refine arbitrary boxes into pairwise disjoint ones covering the same set.
pub fn normalize(dim: usize, rects: Vec<Rect>) -> Result<Vec<Rect>> {
    Ok(Region::new(dim, rects, None)?.rects)
}

/// One piece of an atom decomposition: the set of points lying in exactly the
/// sources flagged in `mask` (bit i set = inside source i), restricted to the
/// bounding box of the union.  The all-zero mask is never emitted.
#[derive(Debug, Clone)]
pub struct Atom {
    pub mask: u32,
    pub measure: f64,
    pub geometry: Region,
}

impl Atom {
    pub fn covers_source(&self, i: usize) -> bool {
        self.mask & (1 << i) != 0
    }
}

/// The full decomposition of several regions into disjoint atoms.
#[derive(Debug, Clone)]
pub struct AtomDecomposition {
    sources: Vec<Region>,
    atoms: Vec<Atom>,
}

impl AtomDecomposition {
    pub fn sources(&self) -> &[Region] {
        &self.sources
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Measure of the atom with the given mask, zero if absent.
    pub fn measure_of_mask(&self, mask: u32) -> f64 {
        self.atoms
            .iter()
            .find(|a| a.mask == mask)
            .map_or(0.0, |a| a.measure)
    }

    /// Measure of source `i` recovered from the atoms that cover it.
    pub fn source_measure_from_atoms(&self, i: usize) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.covers_source(i))
            .map(|a| a.measure)
            .sum()
    }
}

/// Decompose `regions` into the disjoint atoms generated by intersections and
/// complements (complements taken inside the bounding box of the union).
pub fn atoms(regions: &[Region]) -> Result<AtomDecomposition> {
    if regions.is_empty() {
        return Err(Error::invalid("atom decomposition needs at least one region"));
    }
    if regions.len() > MAX_ATOM_SOURCES {
        return Err(Error::AtomGuard { sources: regions.len(), limit: MAX_ATOM_SOURCES });
    }
    let dim = regions[0].dim;
    for r in regions {
        if r.dim != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: r.dim });
        }
    }
    let all_rects: Vec<Rect> = regions.iter().flat_map(|r| r.rects.iter().cloned()).collect();
    let mut by_mask: std::collections::BTreeMap<u32, Vec<Rect>> = std::collections::BTreeMap::new();
    sweep_visit(dim, &all_rects, |cell, rep| {
        let mut mask = 0u32;
        for (i, r) in regions.iter().enumerate() {
            if r.contains(rep) {
                mask |= 1 << i;
            }
        }
        if mask != 0 {
            by_mask.entry(mask).or_default().push(cell);
        }
    })?;
    let atoms = by_mask
        .into_iter()
        .map(|(mask, cells)| {
            let measure = cells.iter().map(Rect::volume).sum();
            let geometry = Region::from_disjoint_cells(dim, cells, None);
            Atom { mask, measure, geometry }
        })
        .collect();
    Ok(AtomDecomposition { sources: regions.to_vec(), atoms })
}

/// Sorted distinct boundary coordinates of the rects, per axis.
fn axis_coords(dim: usize, rects: &[Rect]) -> Vec<Vec<f64>> {
    let mut coords = vec![Vec::new(); dim];
    for r in rects {
        for (axis, &(lo, hi)) in r.extents.iter().enumerate() {
            coords[axis].push(lo);
            coords[axis].push(hi);
        }
    }
    for c in &mut coords {
        c.sort_by(f64::total_cmp);
        c.dedup();
    }
    coords
}

/// Visit every elementary cell of the sweep grid with a representative point
/// (its lower corner).  Cells are elementary with respect to every input box,
/// so membership at the representative decides membership of the whole cell.
fn sweep_visit(
    dim: usize,
    rects: &[Rect],
    mut visit: impl FnMut(Rect, &[f64]),
) -> Result<()> {
    if rects.is_empty() {
        return Ok(());
    }
    let coords = axis_coords(dim, rects);
    let counts: Vec<usize> = coords.iter().map(|c| c.len().saturating_sub(1)).collect();
    let total: usize = counts.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).unwrap_or(usize::MAX);
    if total > MAX_CELLS {
        return Err(Error::CellGuard { cells: total, limit: MAX_CELLS });
    }
    if counts.iter().any(|&n| n == 0) {
        return Ok(());
    }
    let mut idx = vec![0usize; dim];
    let mut rep = vec![0.0f64; dim];
    loop {
        let mut extents = Vec::with_capacity(dim);
        for axis in 0..dim {
            let lo = coords[axis][idx[axis]];
            let hi = coords[axis][idx[axis] + 1];
            rep[axis] = lo;
            extents.push((lo, hi));
        }
        visit(Rect { extents }, &rep);
        // Mixed-radix increment.
        let mut axis = dim;
        loop {
            if axis == 0 {
                return Ok(());
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < counts[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Collect the cells selected by `keep`.
fn sweep_cells(
    dim: usize,
    rects: &[Rect],
    mut keep: impl FnMut(&[f64]) -> bool,
) -> Result<Vec<Rect>> {
    let mut cells = Vec::new();
    sweep_visit(dim, rects, |cell, rep| {
        if keep(rep) {
            cells.push(cell);
        }
    })?;
    Ok(cells)
}

/// Greedily glue disjoint cells that share a facet, axis by axis, until no
/// merge applies.  Output order is deterministic.
fn merge_cells(dim: usize, mut cells: Vec<Rect>) -> Vec<Rect> {
    loop {
        let mut changed = false;
        for axis in 0..dim {
            cells.sort_by(|a, b| {
                for k in 0..dim {
                    if k == axis {
                        continue;
                    }
                    let ord = a.extents[k]
                        .0
                        .total_cmp(&b.extents[k].0)
                        .then(a.extents[k].1.total_cmp(&b.extents[k].1));
                    if ord != std::cmp::Ordering::Equal {
                        return ord;
                    }
                }
                a.extents[axis].0.total_cmp(&b.extents[axis].0)
            });
            let mut merged: Vec<Rect> = Vec::with_capacity(cells.len());
            for cell in cells.drain(..) {
                if let Some(last) = merged.last_mut() {
                    let same_profile = (0..dim)
                        .filter(|&k| k != axis)
                        .all(|k| last.extents[k] == cell.extents[k]);
                    if same_profile && last.extents[axis].1 == cell.extents[axis].0 {
                        last.extents[axis].1 = cell.extents[axis].1;
                        changed = true;
                        continue;
                    }
                }
                merged.push(cell);
            }
            cells = merged;
        }
        if !changed {
            return cells;
        }
    }
}
