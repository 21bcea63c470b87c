use std::fs::File;
use std::path::Path;

use exmex::Express;
use serde_json::{json, Value};

use rough_core::controlled::{ControlledPath, FunctionModel};
use rough_core::convergence::{self, default_solver, dyadic_ladder, ConvergenceConfig, Solver};
use rough_core::grid::{SampledPath, TimeGrid};
use rough_core::integral::{outer_integrand, rough_integral};
use rough_core::noise::{ito_enhance, sample_bm, sample_enhanced, strat_enhance, Enhancement, NoiseConfig};
use rough_core::presets::{build, exact_path, Preset, PresetParams};
use rough_core::rde::{default_window, residual_check, solve_picard, solve_step_scheme, RDESolution};
use rough_core::rough_path::{lift_piecewise_linear, RoughPath, RoughPathJson};
use rough_core::semigroup::{expm, mild_residual_check, solve_mild_picard, solve_mild_step, MatrixSemigroup, RPDEProblem};
use rough_core::tensor::{distance, outer, Mat};

use crate::args::*;
use crate::output::{csv_artifact, emit, json_artifact, metadata};
use crate::Failure;

type Outcome = Result<(), Failure>;

pub fn dispatch(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Lift(a) => lift(cli, a),
        Command::Enhance(a) => enhance(cli, a),
        Command::Integrate(a) => integrate(cli, a),
        Command::Bracket(a) => bracket(cli, a),
        Command::Solve(a) => solve(cli, a),
        Command::SolveRpde(a) => solve_rpde(cli, a),
        Command::Convergence(a) => convergence_study(cli, a),
    }
}

fn parsed<T: std::str::FromStr<Err = rough_core::Error>>(s: &str) -> Result<T, Failure> {
    s.parse().map_err(Failure::usage)
}

fn lift(cli: &Cli, a: &LiftArgs) -> Outcome {
    let path = match (&a.input, &a.generator) {
        (Some(p), _) => SampledPath::read_csv(open(p)?)?,
        (None, Some(g)) => generated(g, a.steps, a.horizon)?,
        (None, None) => return Err(Failure::usage("either --input or --generator is required")),
    };
    let r = lift_piecewise_linear(&path);
    let defect = r.max_chen_defect();
    eprintln!("max Chen defect {defect:e}");
    let body = json!({
        "rough_path": r.to_json(),
        "report": {
            "chen_defect": defect,
            "level2_total": r.second_level(0, r.grid().steps())?.to_rows(),
        },
    });
    emit(cli, "lift.json", &json_artifact(metadata(cli), body)?)
}

/// Samples `t ↦ (e_1(t), ..., e_d(t))` for comma-separated expressions.
fn generated(exprs: &str, steps: usize, horizon: f64) -> Result<SampledPath, Failure> {
    let funcs = split_top_level(exprs)
        .into_iter()
        .map(|src| {
            let expr = exmex::parse::<f64>(src)
                .map_err(|e| Failure::usage(format!("generator component `{src}`: {e}")))?;
            match expr.var_names() {
                [] => Ok(expr),
                [v] if v == "t" => Ok(expr),
                other => Err(Failure::usage(format!(
                    "generator component `{src}` may only use the variable t, found {other:?}"
                ))),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let grid = TimeGrid::uniform(steps, horizon)?;
    Ok(SampledPath::from_fn(grid, funcs.len(), |t| {
        funcs
            .iter()
            .map(|f| if f.var_names().is_empty() { f.eval(&[]) } else { f.eval(&[t]) }.unwrap_or(f64::NAN))
            .collect()
    })?)
}

fn split_top_level(exprs: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, ch) in exprs.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(exprs[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(exprs[start..].trim());
    parts
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// Reads a bare rough-path JSON or an artifact carrying a `rough_path` field.
fn read_rough_path(path: &Path) -> Result<RoughPath, Failure> {
    let mut v: Value = serde_json::from_reader(open(path)?)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    if let Some(inner) = v.get_mut("rough_path") {
        v = inner.take();
    }
    let json: RoughPathJson = serde_json::from_value(v).map_err(Failure::data)?;
    Ok(RoughPath::from_json(&json)?)
}

fn noise(cli: &Cli, dim: usize, steps: usize, horizon: f64, oversample: usize) -> Result<NoiseConfig, Failure> {
    Ok(NoiseConfig::new(dim, TimeGrid::uniform(steps, horizon)?, oversample, cli.seed)?)
}

fn sample(cli: &Cli, a: &SampleArgs) -> Result<RoughPath, Failure> {
    let cfg = noise(cli, a.dim, a.steps, a.horizon, a.oversample)?;
    Ok(sample_enhanced(&cfg, a.path_index, parsed(&a.enhancement)?)?)
}

fn enhance(cli: &Cli, a: &SampleArgs) -> Outcome {
    let r = sample(cli, a)?;
    let defect = r.max_chen_defect();
    eprintln!("max Chen defect {defect:e}");
    let body = json!({
        "rough_path": r.to_json(),
        "report": {
            "chen_defect": defect,
            "geometric_defect": r.geometric_defect(),
            "bracket_terminal": r.bracket_one_param(r.grid().steps())?.to_rows(),
        },
    });
    emit(cli, "enhance.json", &json_artifact(metadata(cli), body)?)
}

fn integrate(cli: &Cli, a: &IntegrateArgs) -> Outcome {
    let kind = a.integral.to_ascii_lowercase();
    let report = if kind == "x-dx" {
        let input = a
            .input
            .as_ref()
            .ok_or_else(|| Failure::usage("x-dx needs --input with a rough-path JSON"))?;
        let r = read_rough_path(input)?;
        let n = r.grid().steps();
        let c = outer_integrand(&ControlledPath::identity_of(r.path()))?;
        let int = rough_integral(&c, &r, 0, n)?;
        let mut oracle = r.second_level(0, n)?;
        oracle += &outer(r.path().value(0), &r.path().increment(0, n)?)?;
        let err = distance(&int.value, oracle.data());
        eprintln!("|∫X⊗dX − oracle| = {err:e}");
        json!({
            "integral": "x-dx",
            "value": Mat::from_vec(r.dim(), r.dim(), int.value)?.to_rows(),
            "oracle": oracle.to_rows(),
            "abs_error": err,
            "defect": int.defect,
        })
    } else {
        let cfg = noise(cli, 1, a.steps, 1.0, a.oversample)?;
        let fine = sample_bm(&cfg, a.path_index);
        let ito = kind == "b-db-ito";
        let r = if ito {
            ito_enhance(&fine, cfg.coarse())?
        } else {
            strat_enhance(&fine, cfg.coarse())?
        };
        let n = a.steps;
        let int = rough_integral(&ControlledPath::identity_of(r.path()), &r, 0, n)?;
        let bt = fine.value(fine.grid().steps())[0];
        let qv: f64 = (0..fine.grid().steps())
            .map(|k| fine.increment(k, k + 1).map(|s| s[0] * s[0]))
            .sum::<rough_core::Result<f64>>()?;
        let oracle = if ito { 0.5 * (bt * bt - qv) } else { 0.5 * bt * bt };
        let err = (int.value[0] - oracle).abs();
        eprintln!("|∫B dB − oracle| = {err:e}");
        json!({
            "integral": kind,
            "value": int.value[0],
            "oracle": oracle,
            "abs_error": err,
            "defect": int.defect,
            "terminal": bt,
            "quadratic_variation": qv,
        })
    };
    emit(cli, "integrate.json", &json_artifact(metadata(cli), json!({ "report": report }))?)
}

fn bracket(cli: &Cli, a: &BracketArgs) -> Outcome {
    let r = match &a.input {
        Some(p) => read_rough_path(p)?,
        None => sample(cli, &a.sample)?,
    };
    let brackets = r.brackets();
    let max_abs = brackets.iter().map(Mat::max_abs).fold(0.0, f64::max);
    eprintln!("max |bracket| {max_abs:e}");
    let meta = metadata(cli);
    match a.format {
        Format::Csv => emit(cli, "bracket.csv", &csv_artifact(meta, |buf| r.write_bracket_csv(buf))?),
        Format::Json => {
            let body = json!({
                "report": { "max_abs": max_abs },
                "t": r.grid().times(),
                "brackets": brackets.iter().map(Mat::to_rows).collect::<Vec<_>>(),
            });
            emit(cli, "bracket.json", &json_artifact(meta, body)?)
        }
    }
}

fn window_or(s: &SolverArgs, default: f64) -> f64 {
    s.window.unwrap_or(default)
}

fn solver_report(sol: &RDESolution, solver: Solver) -> Value {
    json!({
        "solver": match solver { Solver::Step => "step", Solver::Picard => "picard" },
        "terminal": sol.terminal(),
        "residual": sol.diagnostics.residual,
        "iterations": sol.diagnostics.iterations,
        "halvings": sol.diagnostics.halvings,
        "converged": sol.diagnostics.converged,
    })
}

fn check_converged(sol: &RDESolution, solver: Solver) -> Outcome {
    if solver == Solver::Picard && !sol.diagnostics.converged {
        return Err(Failure::numerical("Picard iteration did not reach the tolerance"));
    }
    Ok(())
}

fn solve(cli: &Cli, a: &SolveArgs) -> Outcome {
    let preset: Preset = parsed(&a.preset)?;
    let params = PresetParams {
        sigma: a.params.sigma,
        lambda: a.params.lambda,
        theta: a.params.theta,
        xi: a.params.xi,
    };
    let kind = match &a.enhancement {
        Some(e) => parsed(e)?,
        None if preset.wants_ito() => Enhancement::Ito,
        None => Enhancement::Strat,
    };
    let cfg = noise(cli, 1, a.steps, a.horizon, a.oversample)?;
    let driver = sample_enhanced(&cfg, a.path_index, kind)?;
    let problem = build(preset, params, driver.clone())?;
    let solver = match &a.solver.solver {
        Some(s) => parsed(s)?,
        None => default_solver(preset),
    };
    let mut sol = match solver {
        Solver::Step => solve_step_scheme(&problem)?,
        Solver::Picard => solve_picard(
            &problem,
            window_or(&a.solver, default_window(&problem)),
            a.solver.max_iter,
            a.solver.tol,
        )?,
    };
    sol.diagnostics.residual = Some(residual_check(&sol, &problem)?);
    let mut report = solver_report(&sol, solver);
    if let Some(exact) = exact_path(preset, params, &driver) {
        let (sup_abs, sup_rel) = convergence::errors_against_exact(preset, params, &driver, &sol)?;
        let last = *exact.last().expect("grids have nodes");
        let extra = json!({
            "exact_terminal": last,
            "terminal_abs_error": (sol.terminal()[0] - last).abs(),
            "terminal_rel_error": (sol.terminal()[0] - last).abs() / last.abs(),
            "sup_abs_error": sup_abs,
            "sup_rel_error": sup_rel,
        });
        report.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
        eprintln!("terminal {:e}, exact {last:e}", sol.terminal()[0]);
    }
    let meta = metadata(cli);
    let text = match a.format {
        Format::Json => json_artifact(meta, json!({ "solution": sol.to_json(), "report": report }))?,
        Format::Csv => csv_artifact(meta, |buf| sol.path.write_csv(driver.path(), buf))?,
    };
    emit(cli, if a.format == Format::Json { "solve.json" } else { "solve.csv" }, &text)?;
    check_converged(&sol, solver)
}

fn solve_rpde(cli: &Cli, a: &RpdeArgs) -> Outcome {
    let rows: Vec<Vec<f64>> =
        serde_json::from_str(&a.a).map_err(|e| Failure::usage(format!("--A is not a JSON matrix: {e}")))?;
    let g = MatrixSemigroup::new(Mat::from_rows(&rows)?)?;
    let p = g.dim();
    let cfg = noise(cli, 1, a.steps, a.horizon, a.oversample)?;
    let driver = sample_enhanced(&cfg, a.path_index, parsed(&a.enhancement)?)?;
    let diffusion = match a.preset.as_str() {
        "orbit" => FunctionModel::zero(p, p),
        "additive" => FunctionModel::constant(p, vec![a.sigma; p]),
        _ => FunctionModel::linear(Mat::identity(p).scaled(a.sigma)),
    };
    let xi = vec![a.xi; p];
    let problem = RPDEProblem::new(g.clone(), driver, FunctionModel::zero(p, p), diffusion, xi.clone())?;
    let solver = match &a.solver.solver {
        Some(s) => parsed(s)?,
        None => Solver::Step,
    };
    let mut sol = match solver {
        Solver::Step => solve_mild_step(&problem)?,
        Solver::Picard => solve_mild_picard(
            &problem,
            window_or(&a.solver, default_window(problem.base())),
            a.solver.max_iter,
            a.solver.tol,
        )?,
    };
    sol.diagnostics.residual = Some(mild_residual_check(&sol, &problem)?);
    let mut report = solver_report(&sol, solver);
    if a.preset == "orbit" {
        let exact = expm(&g.generator().scaled(a.horizon))?.matvec(&xi)?;
        let extra = json!({
            "exact_terminal": exact,
            "terminal_abs_error": distance(sol.terminal(), &exact),
        });
        report.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    }
    let body = json!({ "solution": sol.to_json(), "report": report });
    emit(cli, "solve-rpde.json", &json_artifact(metadata(cli), body)?)?;
    check_converged(&sol, solver)
}

fn parse_levels(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::usage(format!("--levels expects LO:HI with LO ≤ HI ≤ 30, got `{s}`"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi || hi > 30 {
        return Err(bad());
    }
    Ok(dyadic_ladder(lo, hi))
}

fn convergence_study(cli: &Cli, a: &ConvergenceArgs) -> Outcome {
    let preset: Preset = parsed(&a.preset)?;
    let ladder = match &a.ladder {
        Some(l) => l.clone(),
        None => parse_levels(&a.levels)?,
    };
    let mut cfg = ConvergenceConfig::new(preset, ladder, a.samples, cli.seed);
    cfg.params = PresetParams {
        sigma: a.params.sigma,
        lambda: a.params.lambda,
        theta: a.params.theta,
        xi: a.params.xi,
    };
    cfg.horizon = a.horizon;
    cfg.oversample = a.oversample.unwrap_or(if preset.wants_ito() {
        rough_core::noise::DEFAULT_OVERSAMPLE
    } else {
        1
    });
    if let Some(s) = &a.solver {
        cfg.solver = parsed(s)?;
    }
    let table = convergence::run(&cfg)?;
    eprintln!("fitted order {:.4}", table.fitted_order);
    emit(cli, "convergence.csv", &csv_artifact(metadata(cli), |buf| table.write_csv(buf))?)
}
