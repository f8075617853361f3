//! Front-propagation check: the box-maximum semigroup
//! `u(t,x) = max_{v in Λ} φ(x + t·v)` solves `∂_t u − g(∇u) = 0` with
//! `g(p) = max_{v in Λ} v·p`, and a monotone scheme must converge to it.
//!
//! The numeric side is a semi-Lagrangian update
//! `u^{k+1}(x) = max_v I[u^k](x + τ·v)` with linear interpolation `I` and `v`
//! ranging over a per-axis grid of Λ (endpoints, zero, spacing ≤ h).  Because
//! Λ is a box, maximizing axis by axis equals the joint maximum exactly, so
//! the scheme runs as one 1-D sweep per axis per step — no splitting error,
//! and each sweep is monotone and constant-preserving.
//!
//! No boundary condition is imposed: the window must be wide enough that the
//! numeric domain of dependence of the interior report box never reaches the
//! edge, which makes the reported values identical to the whole-space scheme.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{simplify, Expr};
use crate::interval::MaximalVector;
use crate::maximize::{maximize, CertifiedValue, MaxOptions};
use crate::region::Rect;

/// Initial-value problem for the front-propagation equation on a window.
#[derive(Debug, Clone)]
pub struct PdeProblem {
    dim: usize,
    lambda: MaximalVector,
    phi: Expr,
    horizon: f64,
    window: Rect,
    h: f64,
    tau: f64,
}

impl PdeProblem {
    pub fn new(
        dim: usize,
        lambda: MaximalVector,
        phi: Expr,
        horizon: f64,
        window: Rect,
        h: f64,
        tau: f64,
    ) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::invalid("problem dimension must be 1 or 2"));
        }
        if lambda.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: lambda.dim() });
        }
        if window.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: window.dim() });
        }
        if phi.arity() > dim {
            return Err(Error::ArityMismatch { var: phi.arity() - 1, supplied: dim });
        }
        if phi.contains_box_max() {
            return Err(Error::invalid("initial condition must be an explicit formula"));
        }
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::BadTime(horizon));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid("space step must be positive"));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        for i in 0..dim {
            let ratio = tau * lambda.interval(i).abs_max() / h;
            if ratio > 1.0 + 1e-12 {
                return Err(Error::CflViolation { ratio });
            }
        }
        for axis in 0..dim {
            let (lo, hi) = window.extent(axis);
            let need = 2.0 * horizon * lambda.interval(axis).abs_max() + h;
            if hi - lo < need {
                return Err(Error::WindowTooSmall { axis, need, have: hi - lo });
            }
        }
        Ok(PdeProblem { dim, lambda, phi, horizon, window, h, tau })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> &MaximalVector {
        &self.lambda
    }

    pub fn phi(&self) -> &Expr {
        &self.phi
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn window(&self) -> &Rect {
        &self.window
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// The same problem on a finer (or coarser) grid, with the time step
    /// rescaled to keep the CFL ratio.
    pub fn with_resolution(&self, h: f64) -> Result<PdeProblem> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid("space step must be positive"));
        }
        let tau = self.tau / self.h * h;
        PdeProblem::new(
            self.dim,
            self.lambda.clone(),
            self.phi.clone(),
            self.horizon,
            self.window.clone(),
            h,
            tau,
        )
    }
}

/// `u(t,x) = max_{v in Λ} φ(x + t·v)`, certified.
pub fn closed_form(p: &PdeProblem, t: f64, x: &[f64], opts: &MaxOptions) -> Result<CertifiedValue> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::BadTime(t));
    }
    if x.len() != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: x.len() });
    }
    let map = (0..p.dim)
        .map(|i| (i, Expr::constant(x[i]) + Expr::constant(t) * Expr::var(i)))
        .collect();
    let shifted = simplify(&p.phi.substitute_free(&map));
    maximize(&shifted, &p.lambda, opts)
}

/// Outcome of one numeric run: the final field, the closed form at the same
/// nodes, and their gap on the interior report box.
#[derive(Debug, Clone)]
pub struct PdeResult {
    /// Node coordinates per axis, covering the whole window.
    pub axes: Vec<Vec<f64>>,
    /// Final numeric field, row-major over `axes`.
    pub numeric: Vec<f64>,
    /// Closed-form values at the same nodes.
    pub closed: Vec<f64>,
    /// Largest |numeric − closed| over nodes inside `report_box`.
    pub sup_error: f64,
    /// Window shrunk by the numeric domain of dependence; only nodes inside
    /// are untouched by the missing boundary data.
    pub report_box: Rect,
    pub h: f64,
    pub tau: f64,
    pub steps: usize,
    pub node_updates: u64,
    pub elapsed: Duration,
}

/// Run the semi-Lagrangian scheme to the horizon and compare with the
/// certified closed form.
pub fn solve_fd(p: &PdeProblem, opts: &MaxOptions) -> Result<PdeResult> {
    let start = Instant::now();
    let axes: Vec<Vec<f64>> = (0..p.dim)
        .map(|a| {
            let (lo, hi) = p.window.extent(a);
            let n = ((hi - lo) / p.h + 1e-9).floor() as usize + 1;
            (0..n).map(|k| lo + k as f64 * p.h).collect()
        })
        .collect();
    let dims: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = dims.iter().product();

    // Land on the horizon exactly; shrinking the step keeps the CFL bound.
    let steps = if p.horizon == 0.0 { 0 } else { (p.horizon / p.tau - 1e-9).ceil() as usize };
    let tau = if steps == 0 { p.tau } else { p.horizon / steps as f64 };

    let report_box = report_box(p, steps)?;

    let mut u = (0..total)
        .map(|idx| p.phi.eval_plain(&node_coords(idx, &dims, &axes)))
        .collect::<Result<Vec<f64>>>()?;

    let vgrids: Vec<Vec<f64>> = (0..p.dim).map(|a| velocity_grid(p, a)).collect();
    let mut node_updates = 0u64;
    for _ in 0..steps {
        for axis in 0..p.dim {
            u = sweep(&u, axis, tau, &vgrids[axis], &dims, &axes, p.h);
            node_updates += total as u64;
        }
    }

    let closed = (0..total)
        .into_par_iter()
        .map(|idx| closed_form(p, p.horizon, &node_coords(idx, &dims, &axes), opts).map(|c| c.value))
        .collect::<Result<Vec<f64>>>()?;

    let mut sup_error = 0.0f64;
    for idx in 0..total {
        let x = node_coords(idx, &dims, &axes);
        if report_box.contains(&x) {
            sup_error = sup_error.max((u[idx] - closed[idx]).abs());
        }
    }

    Ok(PdeResult {
        axes,
        numeric: u,
        closed,
        sup_error,
        report_box,
        h: p.h,
        tau,
        steps,
        node_updates,
        elapsed: start.elapsed(),
    })
}

/// Interior box whose values never see the window edge: the numeric domain
/// of dependence grows by at most one cell per step along each axis with a
/// moving front.
fn report_box(p: &PdeProblem, steps: usize) -> Result<Rect> {
    let mut extents = Vec::with_capacity(p.dim);
    for axis in 0..p.dim {
        let (lo, hi) = p.window.extent(axis);
        let margin = if p.lambda.interval(axis).abs_max() > 0.0 {
            (steps as f64 + 1.0) * p.h
        } else {
            0.0
        };
        if hi - lo <= 2.0 * margin {
            return Err(Error::WindowTooSmall {
                axis,
                need: 2.0 * margin + p.h,
                have: hi - lo,
            });
        }
        extents.push((lo + margin, hi - margin));
    }
    Rect::new(extents)
}

fn node_coords(idx: usize, dims: &[usize], axes: &[Vec<f64>]) -> Vec<f64> {
    let mut rem = idx;
    let mut out = vec![0.0; dims.len()];
    for a in (0..dims.len()).rev() {
        out[a] = axes[a][rem % dims[a]];
        rem /= dims[a];
    }
    out
}

/// Per-axis velocity set: endpoints, zero when admissible, and a uniform fill
/// at spacing ≤ h so the quantization error stays first order.
fn velocity_grid(p: &PdeProblem, axis: usize) -> Vec<f64> {
    let b = p.lambda.interval(axis);
    let (lo, hi) = (b.lo(), b.hi());
    if hi - lo == 0.0 {
        return vec![lo];
    }
    let n = ((hi - lo) / p.h).ceil() as usize;
    let mut vs: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    if lo < 0.0 && 0.0 < hi {
        vs.push(0.0);
    }
    vs.sort_by(f64::total_cmp);
    vs.dedup();
    vs
}

/// One semi-Lagrangian sweep along `axis`, reading the old field only.
fn sweep(
    u: &[f64],
    axis: usize,
    tau: f64,
    velocities: &[f64],
    dims: &[usize],
    axes: &[Vec<f64>],
    h: f64,
) -> Vec<f64> {
    let n_axis = dims[axis];
    // Row-major stride of one step along `axis`.
    let stride: usize = dims[axis + 1..].iter().product();
    let lo = axes[axis][0];
    (0..u.len())
        .into_par_iter()
        .map(|idx| {
            let j = idx / stride % n_axis;
            let base = idx - j * stride;
            let x = axes[axis][j];
            let mut best = f64::NEG_INFINITY;
            for &v in velocities {
                let rel = ((x + tau * v - lo) / h).clamp(0.0, (n_axis - 1) as f64);
                let j0 = rel.floor() as usize;
                let j1 = (j0 + 1).min(n_axis - 1);
                let w = rel - j0 as f64;
                let val = (1.0 - w) * u[base + j0 * stride] + w * u[base + j1 * stride];
                best = best.max(val);
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub h: f64,
    pub tau: f64,
    pub sup_error: f64,
}

/// Errors per resolution plus the two assertions that make the study a check:
/// errors never increase under refinement and the finest one meets the
/// threshold.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub threshold: f64,
    pub monotone: bool,
    pub final_below_threshold: bool,
    pub ok: bool,
}

/// Run the scheme at every resolution in `refinements` (finer grids keep the
/// CFL ratio of the base problem).
pub fn convergence_study(
    p: &PdeProblem,
    refinements: &[f64],
    threshold: f64,
    opts: &MaxOptions,
) -> Result<ConvergenceTable> {
    if refinements.len() < 2 {
        return Err(Error::invalid("a convergence study needs at least two resolutions"));
    }
    let mut rows = Vec::with_capacity(refinements.len());
    for &h in refinements {
        let level = p.with_resolution(h)?;
        let result = solve_fd(&level, opts)?;
        rows.push(ConvergenceRow { h, tau: result.tau, sup_error: result.sup_error });
    }
    let monotone = rows.windows(2).all(|w| w[1].sup_error <= w[0].sup_error + 1e-12);
    let final_below_threshold =
        rows.last().map(|r| r.sup_error <= threshold).unwrap_or(false);
    let ok = monotone && final_below_threshold;
    Ok(ConvergenceTable { rows, threshold, monotone, final_below_threshold, ok })
}
