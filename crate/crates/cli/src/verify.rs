//! The verification suite: replay pinned fixtures, then run a battery of
//! structural property checks on small deterministic inputs.
//!
//! Fixtures are ordinary scenario files with an `expect` clause; the embedded
//! set ships in the binary and `--fixtures DIR` swaps in an external one.
//! The battery always runs in certified mode — its tolerances assume error
//! bounds, which heuristic search does not provide.

use std::path::Path;

use maxfield_core::expectation::{axioms_check, independence_factorization_check};
use maxfield_core::integral::{
    bound_check_spatial, bound_check_temporal_spatial, conditional_properties_check,
    integral_properties_check,
};
use maxfield_core::region::SignedPermutation;
use maxfield_core::white_noise::{
    additivity_residual, consistency_check, expansion_3set, invariance_check,
};
use maxfield_core::{
    fdd_generating, CylinderVariable, Expr, FiltrationTime, MaxOptions, MaximalVector, PdeProblem,
    Rect, Region, SearchMode, SimpleRandomField, TemporalSpatialField, UncertaintyInterval,
    WhiteNoiseModel,
};

use crate::parse::parse_expression;
use crate::report::{CheckLine, ValueLine};
use crate::run::{run_scenario, InputError, Overrides, QueryOutput};
use crate::scenario::parse_scenario;

/// Named scenario documents, in the order they will run.
pub struct FixtureSet {
    pub fixtures: Vec<(String, String)>,
}

/// The embedded fixtures, or the `*.json` files of an override directory in
/// file-name order.
pub fn fixture_set(over: &Overrides) -> Result<FixtureSet, InputError> {
    match &over.fixtures {
        Some(dir) => load_dir(dir),
        None => Ok(embedded()),
    }
}

fn embedded() -> FixtureSet {
    let raw: [(&str, &str); 7] = [
        ("additivity", include_str!("../fixtures/additivity.json")),
        ("conditional_small", include_str!("../fixtures/conditional_small.json")),
        ("fdd_pair", include_str!("../fixtures/fdd_pair.json")),
        ("generating", include_str!("../fixtures/generating.json")),
        ("integral_bound", include_str!("../fixtures/integral_bound.json")),
        ("lln_small", include_str!("../fixtures/lln_small.json")),
        ("pde_small", include_str!("../fixtures/pde_small.json")),
    ];
    FixtureSet {
        fixtures: raw.iter().map(|&(n, t)| (n.to_string(), t.to_string())).collect(),
    }
}

fn load_dir(dir: &Path) -> Result<FixtureSet, InputError> {
    let label = dir.display().to_string();
    let entries = std::fs::read_dir(dir).map_err(|e| InputError::at(&label, e.to_string()))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| InputError::at(&label, e.to_string()))?.path();
        if path.extension().is_some_and(|ext| ext == "json") {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(InputError::at(&label, "no .json fixtures found"));
    }
    paths.sort();
    let mut fixtures = Vec::with_capacity(paths.len());
    for path in paths {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let text = std::fs::read_to_string(&path)
            .map_err(|e| InputError::at(path.display().to_string(), e.to_string()))?;
        fixtures.push((name, text));
    }
    Ok(FixtureSet { fixtures })
}

/// Replay every fixture, then run the battery.  Broken fixtures are input
/// errors; failed assertions only clear `ok`.
pub fn run_suite(set: &FixtureSet, epsilon: f64, seed: u64) -> Result<QueryOutput, InputError> {
    let mut out = QueryOutput::empty();
    for (name, text) in &set.fixtures {
        let scenario = parse_scenario(text)
            .map_err(|e| InputError::at(format!("fixture:{name}:{}", e.path), e.message))?;
        if scenario.query.kind() == "verify" {
            return Err(InputError::at(
                format!("fixture:{name}"),
                "fixtures cannot nest the verify suite",
            ));
        }
        let (report, _) = run_scenario(&scenario, &Overrides::default(), false)
            .map_err(|e| InputError::at(format!("fixture:{name}:{}", e.path), e.message))?;
        for check in report.checks {
            out.ok &= check.ok;
            out.checks.push(CheckLine {
                name: format!("fixture:{name}:{}", check.name),
                residual: check.residual,
                tolerance: check.tolerance,
                ok: check.ok,
            });
        }
    }

    battery(&mut out, epsilon, seed).map_err(|e| InputError::at("verify battery", e.to_string()))?;

    let passed = out.checks.iter().filter(|c| c.ok).count();
    out.values.push(ValueLine::exact("checks_passed", passed as f64));
    out.values.push(ValueLine::exact("checks_total", out.checks.len() as f64));
    Ok(out)
}

fn push(out: &mut QueryOutput, line: CheckLine) {
    out.ok &= line.ok;
    out.checks.push(line);
}

fn phi(text: &str) -> Expr {
    parse_expression(text).expect("battery expression parses")
}

fn region(dim: usize, boxes: &[&[(f64, f64)]], name: &str) -> Region {
    let rects = boxes
        .iter()
        .map(|b| Rect::new(b.to_vec()).expect("battery box is valid"))
        .collect();
    Region::new(dim, rects, Some(name.to_string())).expect("battery region is valid")
}

/// Deterministic structural checks over hand-picked small inputs.  Each line
/// is named after the property it probes; tolerances follow the certified
/// error bounds of the underlying computations.
fn battery(out: &mut QueryOutput, epsilon: f64, seed: u64) -> maxfield_core::Result<()> {
    let opts = MaxOptions { epsilon, mode: SearchMode::Certified, seed, ..MaxOptions::default() };
    let exact = 1e-12;

    // Sub-additivity, homogeneity, and monotonicity of the expectation on a
    // two-axis box, with e2 = e1 minus a certified-nonnegative term.
    let mv = MaximalVector::from_pairs(&[(-1.0, 2.0), (0.0, 1.5)])?;
    let e1 = phi("min(x0, 1 - x1)");
    let e2 = phi("min(x0, 1 - x1) - 0.5 - 0.25 * x1^2");
    let ax = axioms_check(&mv, &e1, &e2, 0.75, &opts)?;
    push(out, CheckLine::flag("expectation_subadditive", ax.subadditive));
    push(out, CheckLine::residual("expectation_homogeneous", ax.homogeneity_residual, ax.tolerance));
    push(out, CheckLine::flag("expectation_monotone", ax.monotone));

    // Coordinates of a product box factorize: per-axis generating sums and
    // iterated maxima in both orders.
    let axes = [
        UncertaintyInterval::new(-1.0, 2.0)?,
        UncertaintyInterval::new(0.0, 1.5)?,
        UncertaintyInterval::new(-0.5, 0.5)?,
    ];
    let ind = independence_factorization_check(&axes, 40, &opts)?;
    push(out, CheckLine::residual("independence_generating", ind.generating_max_residual, ind.tolerance));
    push(out, CheckLine::residual("independence_iterated_max", ind.iterated_max_residual, ind.tolerance));

    // Noise of disjoint pieces sums to the noise of the union; in atom
    // coordinates the difference cancels symbolically.
    let model2 = WhiteNoiseModel::new(2, UncertaintyInterval::new(-1.0, 2.0)?)?;
    let disjoint = [
        region(2, &[&[(0.0, 1.0), (0.0, 1.0)]], "a"),
        region(2, &[&[(1.0, 2.0), (0.0, 1.0)]], "b"),
        region(2, &[&[(0.0, 2.0), (1.0, 1.5)]], "c"),
    ];
    let add = additivity_residual(&model2, &disjoint, &opts)?;
    push(out, CheckLine::residual("additivity", add.value.abs(), epsilon));

    // Marginal consistency of the generating family under padding and
    // permutation, on randomized weight directions.
    let overlapping = [
        region(2, &[&[(0.0, 1.0), (0.0, 1.0)]], "a"),
        region(2, &[&[(0.5, 1.5), (0.0, 1.0)]], "b"),
        region(2, &[&[(0.0, 1.5), (0.5, 1.25)]], "c"),
    ];
    let cons = consistency_check(&model2, &overlapping, 50, seed)?;
    push(out, CheckLine::residual("consistency_compatibility", cons.compatibility_residual, exact));
    push(out, CheckLine::residual("consistency_symmetry", cons.symmetry_residual, exact));

    // The seven-piece expansion of a three-region generating function adds
    // back up to the direct closed form.
    let model1 = WhiteNoiseModel::new(1, UncertaintyInterval::new(-1.0, 2.0)?)?;
    let (a1, a2, a3) = (
        region(1, &[&[(0.0, 2.0)]], "a1"),
        region(1, &[&[(1.0, 3.0)]], "a2"),
        region(1, &[&[(2.0, 4.0)]], "a3"),
    );
    let p = [0.4, -0.7, 0.2];
    let expansion = expansion_3set(&model1, &a1, &a2, &a3, &p)?;
    let direct = fdd_generating(&model1, &[a1, a2, a3], &p)?;
    push(out, CheckLine::residual(
        "three_set_expansion",
        (expansion.total - direct).abs(),
        exact * (1.0 + direct.abs()),
    ));

    // Rigid motions of the index regions leave query values unchanged.
    let perm = SignedPermutation::new(vec![1, 0], vec![true, false])?;
    let inv = invariance_check(
        &model2,
        &overlapping[..2],
        &phi("max(x0, x1) - 0.25 * x0"),
        &[0.5, -1.0],
        &perm,
        &opts,
    )?;
    push(out, CheckLine::residual("invariance", inv.residual, inv.tolerance));

    // Integral bound, spatial: the constant field meets the bound with
    // equality, a noise-coefficient field stays under it.
    let bound_model = WhiteNoiseModel::new(1, UncertaintyInterval::new(-1.0, 1.0)?)?;
    let witness = SimpleRandomField::new(vec![(
        CylinderVariable::constant(1.0),
        region(1, &[&[(0.0, 2.0)]], "carrier"),
    )])?;
    let wb = bound_check_spatial(&witness, &bound_model, &opts)?;
    push(out, CheckLine::flag("integral_bound_spatial", wb.ok));
    push(out, CheckLine::residual(
        "integral_bound_witness",
        (wb.integral_abs - wb.kappa * wb.norm).abs(),
        2.0 * epsilon + 1e-9,
    ));
    let adapted = SimpleRandomField::new(vec![(
        CylinderVariable::new(vec![region(1, &[&[(0.0, 1.0)]], "b")], phi("x0"))?,
        region(1, &[&[(1.0, 2.0)]], "carrier"),
    )])?;
    let ab = bound_check_spatial(&adapted, &bound_model, &opts)?;
    push(out, CheckLine::flag("integral_bound_adapted", ab.ok));

    // Integral bound, temporal-spatial, plus splitting and linearity of the
    // time integral.  Axis 0 is time, axis 1 space.
    let ts_model = WhiteNoiseModel::new(2, UncertaintyInterval::new(-1.0, 1.0)?)?;
    let cell = region(1, &[&[(0.0, 1.0)]], "cell");
    let f = TemporalSpatialField::new(
        vec![0.0, 1.0, 2.0],
        vec![cell.clone()],
        vec![
            vec![CylinderVariable::constant(1.0)],
            vec![CylinderVariable::constant(-0.5)],
        ],
    )?;
    let g = TemporalSpatialField::new(
        vec![0.0, 0.8, 2.0],
        vec![cell],
        vec![
            vec![CylinderVariable::constant(0.5)],
            vec![CylinderVariable::constant(1.0)],
        ],
    )?;
    let tb = bound_check_temporal_spatial(&f, &ts_model, &opts)?;
    push(out, CheckLine::flag("integral_bound_temporal", tb.ok));
    let props = integral_properties_check(
        &f,
        &g,
        &CylinderVariable::constant(0.75),
        0.0,
        1.0,
        2.0,
        &ts_model,
        &opts,
    )?;
    push(out, CheckLine::residual("integral_split", props.split_residual, props.tolerance));
    push(out, CheckLine::residual("integral_linearity", props.linearity_residual, props.tolerance));

    // Conditioning on the noise before time t: monotone, trivial on observed
    // variables, sub-additive, factoring observed coefficients, tower rule.
    let cond_model = WhiteNoiseModel::new(2, UncertaintyInterval::new(0.0, 1.0)?)?;
    let early = region(2, &[&[(0.0, 1.0), (0.0, 2.0)]], "early");
    let late = region(2, &[&[(1.0, 3.0), (0.0, 2.0)]], "late");
    let x = CylinderVariable::new(vec![early.clone(), late.clone()], phi("min(x0, x1)"))?;
    let y = CylinderVariable::new(vec![early.clone(), late], phi("max(x0, x1)"))?;
    let eta = CylinderVariable::new(vec![early], phi("0.5 * x0"))?;
    let cond = conditional_properties_check(
        &x,
        &y,
        &eta,
        FiltrationTime::new(1.0)?,
        FiltrationTime::new(0.5)?,
        &cond_model,
        &opts,
    )?;
    push(out, CheckLine::residual("conditional_monotone", cond.monotone_residual, cond.tolerance));
    push(out, CheckLine::residual("conditional_triviality", cond.triviality_residual, cond.tolerance));
    push(out, CheckLine::residual(
        "conditional_subadditivity",
        cond.subadditivity_residual,
        cond.tolerance,
    ));
    push(out, CheckLine::residual("conditional_factorization", cond.factor_residual, cond.tolerance));
    push(out, CheckLine::residual("conditional_tower", cond.tower_residual, cond.tolerance));

    // Front-propagation solver against the certified closed form, refined
    // once; errors must shrink and end under the threshold.
    let pde = PdeProblem::new(
        1,
        MaximalVector::from_pairs(&[(-1.0, 1.0)])?,
        phi("-abs(x0)"),
        0.5,
        Rect::new(vec![(-2.0, 2.0)])?,
        0.05,
        0.025,
    )?;
    let study = maxfield_core::convergence_study(&pde, &[0.05, 0.025], 0.1, &opts)?;
    push(out, CheckLine::flag("pde_errors_monotone", study.monotone));
    let finest = study.rows.last().expect("study has rows");
    push(out, CheckLine::residual("pde_final_error", finest.sup_error, study.threshold));

    // Adversarial empirical means, driven to the certified limit.
    let family = maxfield_core::lln::MeasureFamily::new(
        UncertaintyInterval::new(-1.0, 2.0)?,
        maxfield_core::lln::NoiseKind::UniformBounded,
        0.5,
        3,
    )?;
    let curve = maxfield_core::lln::convergence_curve(
        &family,
        &phi("x0^2"),
        &[50, 500],
        300,
        seed,
        0.1,
        &opts,
    )?;
    let last = curve.rows.last().expect("curve has rows");
    push(out, CheckLine::residual("lln_final_gap", last.gap, curve.threshold));

    Ok(())
}
