//! Monte Carlo check of the law of large numbers for the maximal limit.
//!
//! The engine's expectation is a sup over classical laws whose means are
//! confined to an interval [μ̲, μ̄].  For zero-mean bounded noise the sample
//! average S_n/n then converges in law to the maximal distribution on that
//! interval: sup_θ E_θ[φ(S_n/n)] → max over v in [μ̲, μ̄] of φ(v).
//!
//! The abstract sup is sampled over a finite adversary: constant means on a
//! grid of the interval, plus optional piecewise switching sequences.  The
//! right-hand side comes from the certified maximizer, so the reported gap
//! compares a Monte Carlo estimate against a certified reference.
//!
//! Determinism: every (strategy, batch) pair draws from a ChaCha substream
//! keyed by the strategy's *content* and the batch index, and batch results
//! combine in batch order.  Estimates are therefore bitwise reproducible
//! across thread counts, and a strategy's estimate does not change when other
//! strategies join the family — which is what makes "a larger adversary never
//! reports less" an exact statement rather than a statistical one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::interval::{MaximalVector, UncertaintyInterval};
use crate::maximize::{maximize, MaxOptions};

/// Samples per parallel work unit; also the grain of the substream split.
const BATCH: usize = 512;

/// Zero-mean noise shapes.  Both have bounded support, so the family is
/// uniformly integrable by construction and the limit theorem applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Uniform on [-σ√3, σ√3]; the scale σ is the standard deviation.
    UniformBounded,
    /// N(0, σ²) conditioned on |x| ≤ 3σ (rejection sampling).
    TruncatedGaussian,
}

/// One adversary: a rule assigning a mean to each draw index.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// The same mean for every draw.
    Constant(f64),
    /// Cycle through `means`, switching every `period` draws.
    Switching { means: Vec<f64>, period: usize },
}

impl Strategy {
    /// Mean of the `i`-th draw under this strategy.
    pub fn mean_at(&self, i: usize) -> f64 {
        match self {
            Strategy::Constant(m) => *m,
            Strategy::Switching { means, period } => means[(i / period) % means.len()],
        }
    }

    fn validate(&self, mu: &UncertaintyInterval) -> Result<()> {
        let check = |m: f64| -> Result<()> {
            if !m.is_finite() {
                return Err(Error::NonFinite("strategy mean"));
            }
            if !mu.contains(m) {
                return Err(Error::invalid(format!(
                    "strategy mean {m} leaves the mean interval [{}, {}]",
                    mu.lo(),
                    mu.hi()
                )));
            }
            Ok(())
        };
        match self {
            Strategy::Constant(m) => check(*m),
            Strategy::Switching { means, period } => {
                if means.is_empty() || *period == 0 {
                    return Err(Error::invalid(
                        "switching strategy needs at least one mean and a positive period",
                    ));
                }
                means.iter().try_for_each(|&m| check(m))
            }
        }
    }

    // Substream key derived from the strategy's content, not its position in
    // the family: the same strategy draws the same noise in any family.
    fn stream_key(&self) -> u64 {
        match self {
            Strategy::Constant(m) => splitmix64(m.to_bits()),
            Strategy::Switching { means, period } => {
                let mut h = splitmix64(0x5357_4954_4348 ^ *period as u64);
                for m in means {
                    h = splitmix64(h ^ m.to_bits());
                }
                h
            }
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A finite family of laws for the i.i.d.-up-to-mean draws: every law is
/// "mean from the strategy, plus zero-mean noise of fixed shape and scale".
#[derive(Debug, Clone)]
pub struct MeasureFamily {
    mu: UncertaintyInterval,
    noise: NoiseKind,
    sigma: f64,
    strategies: Vec<Strategy>,
}

impl MeasureFamily {
    /// Family with constant-mean adversaries on a uniform grid over the mean
    /// interval (endpoints included; a single point sits at the midpoint).
    pub fn new(
        mu: UncertaintyInterval,
        noise: NoiseKind,
        sigma: f64,
        grid: usize,
    ) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::NonFinite("noise scale"));
        }
        if grid == 0 {
            return Err(Error::invalid("adversary grid is empty"));
        }
        let mut means: Vec<f64> = if grid == 1 {
            vec![mu.midpoint()]
        } else {
            (0..grid)
                .map(|k| mu.lo() + mu.width() * k as f64 / (grid - 1) as f64)
                .collect()
        };
        means.dedup();
        let strategies = means.into_iter().map(Strategy::Constant).collect();
        Ok(MeasureFamily { mu, noise, sigma, strategies })
    }

    /// Add a piecewise switching adversary.  Every mean must stay inside the
    /// mean interval — otherwise the sequence leaves the family.
    pub fn add_switching(&mut self, means: Vec<f64>, period: usize) -> Result<()> {
        let s = Strategy::Switching { means, period };
        s.validate(&self.mu)?;
        self.strategies.push(s);
        Ok(())
    }

    pub fn mu(&self) -> UncertaintyInterval {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn strategies(&self) -> &[Strategy] {
        &self.strategies
    }
}

/// One point of the limit check.
#[derive(Debug, Clone)]
pub struct LlnEstimate {
    /// Number of draws averaged per sample.
    pub n: usize,
    /// max over strategies of the Monte Carlo estimate of E_θ[φ(S_n/n)].
    pub value: f64,
    /// Standard error of the winning strategy's estimate.
    pub std_error: f64,
    /// Certified max of φ over the mean interval — the claimed n→∞ limit.
    pub reference: f64,
}

/// Estimate sup over the family of E[φ(S_n/n)] from `samples` Monte Carlo
/// repetitions per strategy, and attach the certified limit for comparison.
///
/// Same seed ⇒ bitwise identical output, independent of thread count.
pub fn simulate(
    family: &MeasureFamily,
    phi: &Expr,
    n: usize,
    samples: usize,
    seed: u64,
    opts: &MaxOptions,
) -> Result<LlnEstimate> {
    if family.strategies.is_empty() {
        return Err(Error::invalid("adversary grid is empty"));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one draw per sample"));
    }
    if samples < 100 {
        return Err(Error::invalid(format!(
            "need at least 100 samples for a standard error, got {samples}"
        )));
    }
    if phi.arity() > 1 {
        return Err(Error::ArityMismatch { var: phi.arity() - 1, supplied: 1 });
    }
    let reference = reference_max(family, phi, opts)?;

    let mut value = f64::NEG_INFINITY;
    let mut std_error = 0.0;
    for th in &family.strategies {
        let (mean, se) = strategy_estimate(family, th, phi, n, samples, seed)?;
        if mean > value {
            value = mean;
            std_error = se;
        }
    }
    Ok(LlnEstimate { n, value, std_error, reference })
}

/// One row of a convergence run.
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub n: usize,
    pub value: f64,
    pub std_error: f64,
    /// |value − reference|.
    pub gap: f64,
}

/// Convergence table over increasing sample sizes.
#[derive(Debug, Clone)]
pub struct LlnCurve {
    pub rows: Vec<CurveRow>,
    pub reference: f64,
    pub threshold: f64,
    /// Final gap at or below the threshold.
    pub ok: bool,
}

/// Run `simulate` over a strictly increasing list of n and tabulate the gap
/// to the certified limit.  Each row reseeds from the master seed and its n,
/// so rows are independent experiments.
pub fn convergence_curve(
    family: &MeasureFamily,
    phi: &Expr,
    n_list: &[usize],
    samples: usize,
    seed: u64,
    threshold: f64,
    opts: &MaxOptions,
) -> Result<LlnCurve> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("n_list must be strictly increasing and non-empty"));
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::invalid(format!("threshold must be positive and finite, got {threshold}")));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    let mut reference = 0.0;
    for &n in n_list {
        let row_seed = seed ^ splitmix64(n as u64);
        let est = simulate(family, phi, n, samples, row_seed, opts)?;
        reference = est.reference;
        rows.push(CurveRow {
            n,
            value: est.value,
            std_error: est.std_error,
            gap: (est.value - est.reference).abs(),
        });
    }
    let ok = rows.last().is_some_and(|r| r.gap <= threshold);
    Ok(LlnCurve { rows, reference, threshold, ok })
}

fn reference_max(family: &MeasureFamily, phi: &Expr, opts: &MaxOptions) -> Result<f64> {
    let domain = MaximalVector::new(vec![family.mu])?;
    Ok(maximize(phi, &domain, opts)?.value)
}

/// Monte Carlo mean and standard error of φ(S_n/n) under one strategy.
/// Batches run in parallel on content-keyed substreams and combine in batch
/// order, so the result is a pure function of (strategy, seed).
fn strategy_estimate(
    family: &MeasureFamily,
    th: &Strategy,
    phi: &Expr,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let key = th.stream_key();
    let batches = samples.div_ceil(BATCH);
    let parts: Vec<(f64, f64)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(splitmix64(key ^ b as u64));
            let sampler = Sampler::new(family.noise, family.sigma);
            let count = BATCH.min(samples - b * BATCH);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..count {
                let mut s = 0.0;
                for i in 0..n {
                    s += th.mean_at(i) + sampler.draw(&mut rng);
                }
                let y = phi.eval_plain(&[s / n as f64])?;
                sum += y;
                sumsq += y * y;
            }
            Ok((sum, sumsq))
        })
        .collect::<Result<_>>()?;

    let (sum, sumsq) = parts
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (s, q)| (a + s, b + q));
    let m = samples as f64;
    let mean = sum / m;
    let var = ((sumsq - sum * sum / m) / (m - 1.0)).max(0.0);
    Ok((mean, (var / m).sqrt()))
}

enum Sampler {
    Zero,
    Uniform { half: f64 },
    Gauss { normal: Normal<f64>, cut: f64 },
}

impl Sampler {
    fn new(kind: NoiseKind, sigma: f64) -> Self {
        if sigma == 0.0 {
            return Sampler::Zero;
        }
        match kind {
            NoiseKind::UniformBounded => Sampler::Uniform { half: sigma * 3f64.sqrt() },
            NoiseKind::TruncatedGaussian => Sampler::Gauss {
                normal: Normal::new(0.0, sigma).expect("scale validated at construction"),
                cut: 3.0 * sigma,
            },
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Zero => 0.0,
            Sampler::Uniform { half } => rng.gen_range(-half..=*half),
            Sampler::Gauss { normal, cut } => loop {
                let x = normal.sample(rng);
                if x.abs() <= *cut {
                    return x;
                }
            },
        }
    }
}
