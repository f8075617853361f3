//! Query dispatch and the exit-code contract.
//!
//! Exit 0: the query ran and every property it checks held.
//! Exit 1: the input was unusable — file, syntax, schema, or semantics.
//! Exit 2: the input was fine but a checked mathematical property failed.
//!
//! The split lets CI tell tooling regressions from mathematical violations.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use maxfield_core::lln::{self, MeasureFamily, NoiseKind};
use maxfield_core::region::atoms;
use maxfield_core::{
    conditional_expect, convergence_study, fdd_expect, fdd_generating, integrate_spatial,
    maximize, solve_fd, CylinderVariable, Expr, FddQuery, FiltrationTime, MaxOptions,
    MaximalVector, PdeProblem, PdeResult, Rect, SearchMode, SimpleRandomField, WhiteNoiseModel,
};

use crate::parse::parse_expression;
use crate::report::{atoms_csv, csv_table, AtomLine, CheckLine, Report, ValueLine, TOOL};
use crate::scenario::{
    parse_scenario, ConditionalSpec, FddSpec, GeneratingSpec, IntegralSpec, LlnSpec, Mode,
    NoiseName, PdeSpec, Query, Scenario,
};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_PROPERTY: i32 = 2;

/// An input problem, attributed to a scenario field or source position.
#[derive(Debug, Clone)]
pub struct InputError {
    pub path: String,
    pub message: String,
}

impl InputError {
    pub fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        InputError { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for InputError {}

/// Command-line settings that override the scenario's own fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub no_timestamp: bool,
    /// Fixture directory for verify; `None` means the embedded set.
    pub fixtures: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self, s: Option<&Scenario>) -> (f64, Mode, u64) {
        let epsilon = self
            .epsilon
            .or_else(|| s.and_then(|s| s.epsilon))
            .unwrap_or(1e-6);
        let mode = self.mode.or_else(|| s.and_then(|s| s.mode)).unwrap_or(Mode::Certified);
        let seed = self.seed.or_else(|| s.and_then(|s| s.seed)).unwrap_or(0);
        (epsilon, mode, seed)
    }
}

fn max_options(epsilon: f64, mode: Mode, seed: u64) -> MaxOptions {
    MaxOptions {
        epsilon,
        mode: match mode {
            Mode::Certified => SearchMode::Certified,
            Mode::Heuristic => SearchMode::Heuristic,
        },
        seed,
        ..MaxOptions::default()
    }
}

/// What a single query produces, before report assembly.
pub struct QueryOutput {
    pub values: Vec<ValueLine>,
    pub expression: Option<String>,
    pub atoms: Option<Vec<AtomLine>>,
    pub checks: Vec<CheckLine>,
    pub csv: Option<String>,
    pub ok: bool,
}

impl QueryOutput {
    pub fn empty() -> Self {
        QueryOutput {
            values: Vec::new(),
            expression: None,
            atoms: None,
            checks: Vec::new(),
            csv: None,
            ok: true,
        }
    }
}

fn core_err(path: &str) -> impl Fn(maxfield_core::Error) -> InputError + '_ {
    move |e| InputError::at(path, e.to_string())
}

/// Does this query kind emit a CSV table?
pub fn has_csv(kind: &str) -> bool {
    matches!(kind, "fdd" | "generating" | "pde" | "lln")
}

/// Run one scenario and assemble the report.  `want_csv` controls whether the
/// (sometimes costly) CSV table is materialized.
pub fn run_scenario(
    s: &Scenario,
    over: &Overrides,
    want_csv: bool,
) -> Result<(Report, Option<String>), InputError> {
    let started = Instant::now();
    let (epsilon, mode, seed) = over.resolve(Some(s));
    let opts = max_options(epsilon, mode, seed);

    let mut out = match &s.query {
        Query::Fdd(spec) => run_fdd(s, spec, &opts, want_csv)?,
        Query::Generating(spec) => run_generating(s, spec, want_csv)?,
        Query::Integral(spec) => run_integral(s, spec, &opts)?,
        Query::Conditional(spec) => run_conditional(s, spec, &opts)?,
        Query::Pde(spec) => run_pde(s, spec, &opts, want_csv)?,
        Query::Lln(spec) => run_lln(s, spec, &opts, seed)?,
        Query::Verify(_) => {
            let set = verify::fixture_set(over)?;
            verify::run_suite(&set, epsilon, seed)?
        }
    };

    if let Some(expect) = &s.expect {
        let line = match out.values.first() {
            Some(head) => CheckLine::residual(
                format!("expected {}", head.label),
                (head.value - expect.value).abs(),
                expect.tolerance,
            ),
            None => CheckLine::flag("expected value (no value to compare)", false),
        };
        out.ok &= line.ok;
        out.checks.push(line);
    }

    let report = Report {
        tool: TOOL,
        timestamp: timestamp(over),
        query: s.query.kind().to_string(),
        scenario: Some(s.clone()),
        epsilon,
        mode: mode_name(mode),
        seed,
        values: out.values,
        expression: out.expression,
        atoms: out.atoms,
        checks: out.checks,
        elapsed_ms: elapsed(over, started),
        ok: out.ok,
    };
    Ok((report, out.csv))
}

/// The fixture-driven suite as a standalone report (the `verify` subcommand).
pub fn verify_report(over: &Overrides) -> Result<Report, InputError> {
    let started = Instant::now();
    let (epsilon, mode, seed) = over.resolve(None);
    let set = verify::fixture_set(over)?;
    let out = verify::run_suite(&set, epsilon, seed)?;
    Ok(Report {
        tool: TOOL,
        timestamp: timestamp(over),
        query: "verify".to_string(),
        scenario: None,
        epsilon,
        mode: mode_name(mode),
        seed,
        values: out.values,
        expression: None,
        atoms: None,
        checks: out.checks,
        elapsed_ms: elapsed(over, started),
        ok: out.ok,
    })
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Certified => "certified",
        Mode::Heuristic => "heuristic",
    }
}

fn timestamp(over: &Overrides) -> Option<String> {
    (!over.no_timestamp).then(|| chrono::Utc::now().to_rfc3339())
}

fn elapsed(over: &Overrides, started: Instant) -> Option<u64> {
    (!over.no_timestamp).then(|| started.elapsed().as_millis() as u64)
}

fn parse_phi(s: &Scenario) -> Result<Expr, InputError> {
    let text = s.phi_text()?;
    parse_expression(text).map_err(|e| InputError::at("phi", e.to_string()))
}

fn run_fdd(
    s: &Scenario,
    spec: &FddSpec,
    opts: &MaxOptions,
    want_csv: bool,
) -> Result<QueryOutput, InputError> {
    let model = s.model()?;
    let regions = s.region_list(&spec.regions, "query.fdd.regions")?;
    let phi = parse_phi(s)?;
    let query =
        FddQuery::new(model, regions.clone(), phi).map_err(core_err("query.fdd"))?;
    let value = fdd_expect(&query, opts).map_err(core_err("query.fdd"))?;

    let decomp = atoms(&regions).map_err(core_err("query.fdd.regions"))?;
    let table = AtomLine::table(decomp.atoms());
    let mut out = QueryOutput::empty();
    out.values.push(ValueLine::certified("expectation", &value));
    if want_csv {
        out.csv = Some(atoms_csv(&table));
    }
    out.atoms = Some(table);
    Ok(out)
}

fn run_generating(
    s: &Scenario,
    spec: &GeneratingSpec,
    want_csv: bool,
) -> Result<QueryOutput, InputError> {
    let model = s.model()?;
    let regions = s.region_list(&spec.regions, "query.generating.regions")?;
    if spec.p.len() != regions.len() {
        return Err(InputError::at(
            "query.generating.p",
            format!("expected {} weights, got {}", regions.len(), spec.p.len()),
        ));
    }
    let value =
        fdd_generating(&model, &regions, &spec.p).map_err(core_err("query.generating"))?;

    let decomp = atoms(&regions).map_err(core_err("query.generating.regions"))?;
    let table = AtomLine::table(decomp.atoms());
    let mut out = QueryOutput::empty();
    out.values.push(ValueLine::exact("generating_function", value));
    if want_csv {
        out.csv = Some(atoms_csv(&table));
    }
    out.atoms = Some(table);
    Ok(out)
}

fn run_integral(
    s: &Scenario,
    spec: &IntegralSpec,
    opts: &MaxOptions,
) -> Result<QueryOutput, InputError> {
    let model = s.model()?;
    if spec.terms.is_empty() {
        return Err(InputError::at("query.integral.terms", "need at least one term"));
    }
    let mut terms = Vec::with_capacity(spec.terms.len());
    for (k, term) in spec.terms.iter().enumerate() {
        let path = format!("query.integral.terms[{k}]");
        let xi_regions = if term.xi_regions.is_empty() {
            Vec::new()
        } else {
            s.region_list(&term.xi_regions, &format!("{path}.xi_regions"))?
        };
        let expr = parse_expression(&term.xi)
            .map_err(|e| InputError::at(format!("{path}.xi"), e.to_string()))?;
        let xi = CylinderVariable::new(xi_regions, expr)
            .map_err(|e| InputError::at(format!("{path}.xi"), e.to_string()))?;
        let carrier = s.region(&term.carrier, &format!("{path}.carrier"))?;
        terms.push((xi, carrier));
    }
    let field = SimpleRandomField::new(terms).map_err(core_err("query.integral.terms"))?;

    let integral = integrate_spatial(&field, &model).map_err(core_err("query.integral"))?;
    let lhs = integral.abs().expect(&model, opts).map_err(core_err("query.integral"))?;
    let norm =
        maxfield_core::integral::norm_m1(&field, &model, opts).map_err(core_err("query.integral"))?;
    let kappa = model.mu().abs_max();
    let slack = 2.0 * opts.epsilon;
    let margin = lhs.value - kappa * norm.value;

    let mut out = QueryOutput::empty();
    out.values.push(ValueLine::certified("integral_abs", &lhs));
    out.values.push(ValueLine::exact("kappa", kappa));
    out.values.push(ValueLine::certified("norm_m1", &norm));
    out.expression = Some(integral.expr().to_string());
    let line = CheckLine::residual("integral_bound", margin, slack);
    out.ok &= line.ok;
    out.checks.push(line);
    Ok(out)
}

fn run_conditional(
    s: &Scenario,
    spec: &ConditionalSpec,
    opts: &MaxOptions,
) -> Result<QueryOutput, InputError> {
    let model = s.model()?;
    let regions = s.region_list(&spec.regions, "query.conditional.regions")?;
    let phi = parse_phi(s)?;
    let x = CylinderVariable::new(regions, phi).map_err(core_err("query.conditional"))?;
    let t = FiltrationTime::new(spec.t)
        .map_err(|e| InputError::at("query.conditional.t", e.to_string()))?;

    let cond = conditional_expect(&x, t, &model).map_err(core_err("query.conditional"))?;
    let prior = x.expect(&model, opts).map_err(core_err("query.conditional"))?;
    let iterated = cond.expect(&model, opts).map_err(core_err("query.conditional"))?;

    let mut out = QueryOutput::empty();
    out.values.push(ValueLine::certified("prior_expectation", &prior));
    out.values.push(ValueLine::certified("conditioned_expectation", &iterated));
    out.expression = Some(cond.expr().to_string());
    // Ê of the conditioned variable equals Ê of the original: the projection
    // loses no worst case.
    let line = CheckLine::residual(
        "iterated_expectation_consistency",
        (iterated.value - prior.value).abs(),
        2.0 * opts.epsilon,
    );
    out.ok &= line.ok;
    out.checks.push(line);
    Ok(out)
}

fn pde_problem(s: &Scenario, spec: &PdeSpec) -> Result<PdeProblem, InputError> {
    if spec.lambda.len() != s.dimension {
        return Err(InputError::at(
            "query.pde.lambda",
            format!("expected {} velocity intervals, got {}", s.dimension, spec.lambda.len()),
        ));
    }
    if spec.window.len() != s.dimension {
        return Err(InputError::at(
            "query.pde.window",
            format!("expected {} window extents, got {}", s.dimension, spec.window.len()),
        ));
    }
    if !(spec.threshold.is_finite() && spec.threshold > 0.0) {
        return Err(InputError::at("query.pde.threshold", "must be positive and finite"));
    }
    let lambda = MaximalVector::from_pairs(
        &spec.lambda.iter().map(|&[lo, hi]| (lo, hi)).collect::<Vec<_>>(),
    )
    .map_err(|e| InputError::at("query.pde.lambda", e.to_string()))?;
    let window = Rect::new(spec.window.iter().map(|&[lo, hi]| (lo, hi)).collect())
        .map_err(|e| InputError::at("query.pde.window", e.to_string()))?;
    let phi = parse_phi(s)?;
    PdeProblem::new(s.dimension, lambda, phi, spec.horizon, window, spec.h, spec.tau)
        .map_err(core_err("query.pde"))
}

fn run_pde(
    s: &Scenario,
    spec: &PdeSpec,
    opts: &MaxOptions,
    want_csv: bool,
) -> Result<QueryOutput, InputError> {
    let problem = pde_problem(s, spec)?;
    let mut out = QueryOutput::empty();

    if spec.refinements.is_empty() {
        let result = solve_fd(&problem, opts).map_err(core_err("query.pde"))?;
        let line = CheckLine::residual("closed_form_agreement", result.sup_error, spec.threshold);
        out.values.push(ValueLine::plain("sup_error", result.sup_error));
        out.values.push(ValueLine::plain("steps", result.steps as f64));
        if want_csv {
            out.csv = Some(pde_csv(&result, s.dimension, spec.horizon, None));
        }
        out.ok &= line.ok;
        out.checks.push(line);
    } else {
        let table = convergence_study(&problem, &spec.refinements, spec.threshold, opts)
            .map_err(core_err("query.pde.refinements"))?;
        for row in &table.rows {
            out.values.push(ValueLine::plain(format!("sup_error[h={}]", row.h), row.sup_error));
        }
        if want_csv {
            let finest = problem
                .with_resolution(*spec.refinements.last().unwrap())
                .map_err(core_err("query.pde.refinements"))?;
            let result = solve_fd(&finest, opts).map_err(core_err("query.pde"))?;
            out.csv = Some(pde_csv(&result, s.dimension, spec.horizon, Some(&table)));
        }
        let monotone = CheckLine::flag("errors_monotone_under_refinement", table.monotone);
        let final_ok = CheckLine::flag("final_error_below_threshold", table.final_below_threshold);
        out.ok &= monotone.ok && final_ok.ok;
        out.checks.push(monotone);
        out.checks.push(final_ok);
    }
    Ok(out)
}

/// Field table at the horizon; a second gnuplot-style block holds the
/// convergence rows when a study ran.
fn pde_csv(
    result: &PdeResult,
    dim: usize,
    horizon: f64,
    table: Option<&maxfield_core::pde::ConvergenceTable>,
) -> String {
    let header = if dim == 1 {
        "t,x,u_numeric,u_closed,abs_err"
    } else {
        "t,x,y,u_numeric,u_closed,abs_err"
    };
    let inner = if dim == 2 { result.axes[1].len() } else { 1 };
    let rows = result.numeric.iter().zip(&result.closed).enumerate().map(|(idx, (n, c))| {
        let coords = if dim == 1 {
            format!("{}", result.axes[0][idx])
        } else {
            format!("{},{}", result.axes[0][idx / inner], result.axes[1][idx % inner])
        };
        format!("{horizon},{coords},{n},{c},{}", (n - c).abs())
    });
    let mut out = csv_table(header, rows);
    if let Some(t) = table {
        out.push('\n');
        out.push_str(&csv_table(
            "h,tau,sup_error",
            t.rows.iter().map(|r| format!("{},{},{}", r.h, r.tau, r.sup_error)),
        ));
    }
    out
}

fn run_lln(
    s: &Scenario,
    spec: &LlnSpec,
    opts: &MaxOptions,
    seed: u64,
) -> Result<QueryOutput, InputError> {
    let mu = s.mu_interval()?;
    let kind = match spec.noise {
        NoiseName::Uniform => NoiseKind::UniformBounded,
        NoiseName::Gaussian => NoiseKind::TruncatedGaussian,
    };
    let mut family = MeasureFamily::new(mu, kind, spec.sigma, spec.grid)
        .map_err(core_err("query.lln"))?;
    for (i, sw) in spec.switching.iter().enumerate() {
        family
            .add_switching(sw.means.clone(), sw.period)
            .map_err(|e| InputError::at(format!("query.lln.switching[{i}]"), e.to_string()))?;
    }
    let phi = parse_phi(s)?;
    let curve = lln::convergence_curve(
        &family,
        &phi,
        &spec.n_list,
        spec.samples,
        seed,
        spec.threshold,
        opts,
    )
    .map_err(core_err("query.lln"))?;

    let reference = maximize(&phi, &MaximalVector::new(vec![mu]).map_err(core_err("mu"))?, opts)
        .map_err(core_err("phi"))?;
    let last = curve.rows.last().expect("curve has at least one row");

    let mut out = QueryOutput::empty();
    out.values.push(ValueLine::certified("reference", &reference));
    out.values.push(ValueLine::plain(format!("value[n={}]", last.n), last.value));
    out.values.push(ValueLine::plain(format!("std_error[n={}]", last.n), last.std_error));
    out.csv = Some(csv_table(
        "n,value,std_error,gap",
        curve.rows.iter().map(|r| format!("{},{},{},{}", r.n, r.value, r.std_error, r.gap)),
    ));
    let line = CheckLine::residual("final_gap_below_threshold", last.gap, spec.threshold);
    out.ok &= line.ok;
    out.checks.push(line);
    Ok(out)
}

/// Load, check, run, write: the whole life of one invocation.  Returns the
/// process exit code; errors go to stderr.
pub fn run_file(
    scenario_path: &Path,
    expected_kinds: &[&str],
    over: &Overrides,
    output: Option<&Path>,
    csv_path: Option<&Path>,
) -> i32 {
    match run_file_inner(scenario_path, expected_kinds, over, output, csv_path) {
        Ok(ok) => {
            if ok {
                EXIT_OK
            } else {
                EXIT_PROPERTY
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn run_file_inner(
    scenario_path: &Path,
    expected_kinds: &[&str],
    over: &Overrides,
    output: Option<&Path>,
    csv_path: Option<&Path>,
) -> Result<bool, InputError> {
    let text = std::fs::read_to_string(scenario_path)
        .map_err(|e| InputError::at(scenario_path.display().to_string(), e.to_string()))?;
    let scenario = parse_scenario(&text)?;
    let kind = scenario.query.kind();
    if !expected_kinds.contains(&kind) {
        return Err(InputError::at(
            "query",
            format!("kind `{kind}` does not fit this subcommand (expected {expected_kinds:?})"),
        ));
    }
    if csv_path.is_some() && !has_csv(kind) {
        return Err(InputError::at("--csv", format!("query kind `{kind}` has no CSV output")));
    }
    let (report, csv) = run_scenario(&scenario, over, csv_path.is_some())?;
    write_text(output, &report.render())?;
    if let Some(path) = csv_path {
        let table = csv.expect("csv presence checked above");
        std::fs::write(path, table)
            .map_err(|e| InputError::at(path.display().to_string(), e.to_string()))?;
    }
    Ok(report.ok)
}

/// Run the verify subcommand; returns the exit code.
pub fn run_verify_command(over: &Overrides, output: Option<&Path>) -> i32 {
    match verify_report(over) {
        Ok(report) => match write_text(output, &report.render()) {
            Ok(()) => {
                if report.ok {
                    EXIT_OK
                } else {
                    EXIT_PROPERTY
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_INPUT
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn write_text(target: Option<&Path>, text: &str) -> Result<(), InputError> {
    match target {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| InputError::at(path.display().to_string(), e.to_string())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
