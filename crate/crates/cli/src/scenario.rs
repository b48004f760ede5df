//! Scenario orchestration: bundle and initial state construction, structure
//! checks, flows and artifact files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use covforms_core::calculus::{constant_cochain, d_cov, norm, norm_cochain, random_cochain, random_graded};
use covforms_core::structures::*;
use covforms_core::variational::*;
use covforms_core::{BundleData, Cochain, GradedCochain, TorusGrid};
use serde_json::{json, Value};

use crate::config::{InitSpec, Scenario, ScenarioConfig};
use crate::error::{CliError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;

/// Grid plus the two bundles a scenario needs: the flow bundle `E` and the
/// tangent bundle used by the J checks (equal to `E` except for Kähler).
pub struct Setup {
    pub grid: TorusGrid,
    pub bundle: BundleData,
    pub tangent: Option<BundleData>,
}

pub fn build_setup(cfg: &ScenarioConfig) -> Result<Setup> {
    let grid = cfg.grid.build()?;
    let n = grid.dim();
    let (bundle, tangent) = match cfg.scenario {
        Scenario::Symplectic | Scenario::Custom => (cfg.bundle.build(&grid, cfg.rank)?, None),
        Scenario::Kaehler => {
            let t = cfg.bundle.build(&grid, n)?;
            (t.induced_end_bundle(&grid)?, Some(t))
        }
        Scenario::SpecialComplex => {
            let t = cfg.bundle.build(&grid, n)?;
            (t.clone(), Some(t))
        }
    };
    Ok(Setup { grid, bundle, tangent })
}

/// The closed reference state of each scenario.
fn closed_component(cfg: &ScenarioConfig, s: &Setup) -> Result<Cochain> {
    let grid = &s.grid;
    let j0 = || JField::constant(grid, &standard_complex_structure(grid.dim()));
    Ok(match cfg.scenario {
        Scenario::Symplectic => standard_symplectic_cochain(grid)?,
        Scenario::Kaehler => j_to_end_cochain(grid, &j0())?,
        Scenario::SpecialComplex => j_to_tangent_one_form(grid, &j0())?,
        Scenario::Custom => constant_cochain(grid, cfg.rank, cfg.k, |_| vec![1.0; cfg.rank])?,
    })
}

pub fn initial_state(cfg: &ScenarioConfig, s: &Setup) -> Result<GradedCochain> {
    let (grid, b) = (&s.grid, &s.bundle);
    let n = grid.dim();
    match &cfg.init {
        InitSpec::Closed => Ok(GradedCochain::from_component(n, closed_component(cfg, s)?)),
        InitSpec::PerturbedClosed(amp) => {
            let mut g = GradedCochain::from_component(n, closed_component(cfg, s)?);
            // exact perturbation d∇η one degree up, keeping p_k closed
            if cfg.k < n {
                let eta = random_cochain(grid, b, cfg.k, cfg.seed, *amp)?;
                g.set(d_cov(grid, b, &eta)?);
            }
            Ok(g)
        }
        InitSpec::Random(amp) => Ok(random_graded(grid, b, cfg.seed, *amp)?),
        InitSpec::File(path) => Ok(covforms_core::io::read_graded_file(path, grid, b.rank())?),
    }
}

/// Structure checks on `p_k γ` as JSON.
pub fn structure_checks(cfg: &ScenarioConfig, s: &Setup, g: &GradedCochain) -> Result<Value> {
    let (grid, b) = (&s.grid, &s.bundle);
    let p = extract_pk(cfg.k, grid, g);
    let closedness = if cfg.k < grid.dim() {
        norm_cochain(grid, b, &d_cov(grid, b, &p)?)?
    } else {
        0.0
    };
    Ok(match cfg.scenario {
        Scenario::Symplectic => {
            let field = reconstruct_two_form(grid, &p)?;
            let (ok, min_abs_det) = check_nondegenerate(&field, DEFAULT_NONDEGENERACY_EPS);
            json!({
                "closedness": closedness,
                "nondegenerate": ok,
                "min_abs_det": min_abs_det,
                "eps": DEFAULT_NONDEGENERACY_EPS,
            })
        }
        Scenario::Kaehler => {
            let tangent = s.tangent.as_ref().expect("kaehler setup has a tangent bundle");
            let j = end_cochain_to_j(grid, &p)?;
            let (ac, orth) = check_ac_orthogonal(&j, tangent.metrics())?;
            json!({
                "kaehler_residual": kaehler_residual(grid, tangent, &j)?,
                "ac_residual": ac,
                "orth_residual": orth,
            })
        }
        Scenario::SpecialComplex => {
            let tangent = s.tangent.as_ref().expect("special-complex setup has a tangent bundle");
            let j = tangent_one_form_to_j(grid, &p)?;
            let (ac, orth) = check_ac_orthogonal(&j, tangent.metrics())?;
            let nij = nijenhuis_residual(grid, &j)?;
            json!({
                "special_complex_residual": special_complex_residual(grid, tangent, &j)?,
                "ac_residual": ac,
                "orth_residual": orth,
                "nijenhuis_residual": nij,
                "integrable": nij <= INTEGRABILITY_THRESHOLD,
            })
        }
        Scenario::Custom => json!({ "closedness": closedness }),
    })
}

fn diagnostics(cfg: &ScenarioConfig, s: &Setup, g: &GradedCochain) -> Result<Value> {
    let (grid, b) = (&s.grid, &s.bundle);
    let grad = gradient_f(cfg.k, grid, b, g)?;
    let (low, high) = TildeDomain::new(cfg.k).constraint_norms(grid, b, g)?;
    Ok(json!({
        "F": functional_f(cfg.k, grid, b, g)?,
        "grad_norm": norm(grid, b, &grad)?,
        "residual_by_degree": residuals_of(grid, b, &grad)?,
        "norm": norm(grid, b, g)?,
        "constraint_drift": low.max(high),
    }))
}

pub fn check(cfg: &ScenarioConfig) -> Result<Value> {
    let s = build_setup(cfg)?;
    let g = initial_state(cfg, &s)?;
    Ok(json!({
        "scenario": cfg.scenario.name(),
        "k": cfg.k,
        "state": diagnostics(cfg, &s, &g)?,
        "structure_checks": structure_checks(cfg, &s, &g)?,
    }))
}

pub fn spectrum(cfg: &ScenarioConfig) -> Result<Value> {
    let s = build_setup(cfg)?;
    let rho = estimate_operator_norm(cfg.k, &s.grid, &s.bundle, cfg.seed, POWER_ITERATIONS)?;
    Ok(json!({
        "scenario": cfg.scenario.name(),
        "k": cfg.k,
        "rank": s.bundle.rank(),
        "seed": cfg.seed,
        "iterations": POWER_ITERATIONS,
        "operator_norm_estimate": rho,
        "auto_step": if rho > 0.0 { AUTO_STEP_FACTOR / rho } else { AUTO_STEP_FACTOR },
    }))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub termination: Termination,
    pub exit_code: i32,
    pub summary: Value,
    pub out_dir: PathBuf,
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::MaxSteps => "max_steps",
        Termination::Diverged => "diverged",
    }
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(fs::File) -> covforms_core::Result<()>,
{
    let file = fs::File::create(path).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })?;
    f(file)?;
    Ok(())
}

/// Runs the flow and writes `trace.csv`, `summary.json`, `final_state.csv`
/// and, for structure scenarios, the final field (`two_form.csv` or `j_field.csv`).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    let out_dir = cfg.outputs.clone();
    fs::create_dir_all(&out_dir).map_err(|source| CliError::Output {
        path: out_dir.display().to_string(),
        source,
    })?;
    let s = build_setup(cfg)?;
    let (grid, b) = (&s.grid, &s.bundle);
    let gamma0 = initial_state(cfg, &s)?;
    let params = FlowParams {
        step: cfg.flow.step,
        max_steps: cfg.flow.max_steps,
        renormalize: cfg.flow.renormalize,
        project_each_step: cfg.flow.project_each_step,
        power_seed: cfg.seed,
    };
    let result = match (cfg.scenario, s.tangent.as_ref()) {
        (Scenario::Kaehler, Some(t)) => {
            let p = kaehler_projector(grid, t);
            run_flow(cfg.k, grid, b, &gamma0, &params, Some(&p))?
        }
        (Scenario::SpecialComplex, Some(t)) => {
            let p = special_complex_projector(grid, t);
            run_flow(cfg.k, grid, b, &gamma0, &params, Some(&p))?
        }
        _ => run_flow(cfg.k, grid, b, &gamma0, &params, None)?,
    };

    write_with(&out_dir.join("trace.csv"), |f| result.trace.write_csv(grid.dim(), f))?;
    write_with(&out_dir.join("final_state.csv"), |f| {
        covforms_core::io::write_graded(&result.state, f)
    })?;
    let pk = extract_pk(cfg.k, grid, &result.state);
    match cfg.scenario {
        Scenario::Symplectic => {
            let field = reconstruct_two_form(grid, &pk)?;
            write_with(&out_dir.join("two_form.csv"), |f| covforms_core::io::write_two_form_field(&field, f))?;
        }
        Scenario::Kaehler => {
            let j = end_cochain_to_j(grid, &pk)?;
            write_with(&out_dir.join("j_field.csv"), |f| covforms_core::io::write_j_field(&j, f))?;
        }
        Scenario::SpecialComplex => {
            let j = tangent_one_form_to_j(grid, &pk)?;
            write_with(&out_dir.join("j_field.csv"), |f| covforms_core::io::write_j_field(&j, f))?;
        }
        Scenario::Custom => {}
    }

    let exit_code = if result.termination == Termination::Diverged {
        EXIT_DIVERGED
    } else {
        EXIT_OK
    };
    let summary = json!({
        "library_version": covforms_core::VERSION,
        "config": cfg.echo(),
        "termination": termination_name(result.termination),
        "exit_code": exit_code,
        "steps": result.trace.len().saturating_sub(1),
        "step_size": result.step_size,
        "initial": diagnostics(cfg, &s, &gamma0)?,
        "final": diagnostics(cfg, &s, &result.state)?,
        "structure_checks": {
            "initial": structure_checks(cfg, &s, &gamma0)?,
            "final": structure_checks(cfg, &s, &result.state)?,
        },
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    let path = out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    fs::write(&path, text).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })?;
    Ok(RunOutcome {
        termination: result.termination,
        exit_code,
        summary,
        out_dir,
    })
}
