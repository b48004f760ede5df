//! Acceptance suite. Each test prints one `[PASS]`/`[FAIL]` line straight to
//! stderr (bypassing the test harness capture) and then asserts.

use std::io::Write;

use covforms_core::bundle::{random_orthogonal, random_well_conditioned, check_morphism, BundleData, Mat, Step};
use covforms_core::calculus::*;
use covforms_core::structures::*;
use covforms_core::variational::*;
use covforms_core::{Cell, Cochain, GradedCochain, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(name: &str, ok: bool, detail: String) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {name}: {detail}");
}

fn t2() -> TorusGrid {
    TorusGrid::new(2, &[4, 4], &[1.0, 0.7]).unwrap()
}

fn t3() -> TorusGrid {
    TorusGrid::new(3, &[3, 3, 3], &[0.5, 1.0, 1.5]).unwrap()
}

/// Seeded random SPD metrics and invertible transports of random rank 1..=4.
fn random_bundle(grid: &TorusGrid, seed: u64) -> BundleData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rank = rng.random_range(1..=4);
    let metric = (0..grid.vertex_count())
        .map(|_| {
            let a = random_well_conditioned(&mut rng, rank, 2.0);
            a.transpose() * a
        })
        .collect();
    let transport = (0..grid.edge_count())
        .map(|_| random_well_conditioned(&mut rng, rank, 1.5))
        .collect();
    BundleData::new(grid, rank, metric, transport).unwrap()
}

/// Twenty (grid, bundle, seed) tuples split over T² 4×4 and T³ 3×3×3.
fn tuples() -> Vec<(TorusGrid, BundleData, u64)> {
    (0..20u64)
        .map(|i| {
            let grid = if i % 2 == 0 { t2() } else { t3() };
            let b = random_bundle(&grid, 1000 + i);
            (grid, b, 7 * i + 1)
        })
        .collect()
}

#[test]
fn adjointness() {
    let mut worst: f64 = 0.0;
    for (grid, b, seed) in tuples() {
        for k in 0..grid.dim() {
            let a = random_cochain(&grid, &b, k, seed, 1.0).unwrap();
            let c = random_cochain(&grid, &b, k + 1, seed + 500, 1.0).unwrap();
            let lhs = inner_cochain(&grid, &b, &d_cov(&grid, &b, &a).unwrap(), &c).unwrap();
            let rhs = inner_cochain(&grid, &b, &a, &delta_cov(&grid, &b, &c).unwrap()).unwrap();
            let scale = norm_cochain(&grid, &b, &a).unwrap() * norm_cochain(&grid, &b, &c).unwrap();
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    let ok = worst <= 1e-10;
    report("adjointness", ok, format!("max |<<dα,β>> - <<α,δβ>>| / (‖α‖‖β‖) = {worst:.3e} (bound 1e-10)"));
    assert!(ok);
}

#[test]
fn masked_adjointness() {
    let mut worst: f64 = 0.0;
    for (grid, b, seed) in tuples() {
        let a = random_graded(&grid, &b, seed, 1.0).unwrap();
        let c = random_graded(&grid, &b, seed + 500, 1.0).unwrap();
        let scale = norm(&grid, &b, &a).unwrap() * norm(&grid, &b, &c).unwrap();
        for k in 0..=grid.dim() {
            let lhs = inner(&grid, &b, &masked_d(k, &grid, &b, &a).unwrap(), &c).unwrap();
            let rhs = inner(&grid, &b, &a, &masked_delta(k, &grid, &b, &c).unwrap()).unwrap();
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    let ok = worst <= 1e-10;
    report("masked adjointness", ok, format!("max relative gap over all k = {worst:.3e} (bound 1e-10)"));
    assert!(ok);
}

/// Sum over axis pairs of the plaquette holonomy defect applied to the far face.
fn holonomy_oracle(grid: &TorusGrid, b: &BundleData, alpha: &Cochain) -> Cochain {
    let m = b.rank();
    let mut out = Cochain::zeros(grid, m, alpha.degree() + 2);
    for (id, cell) in grid.cells(alpha.degree() + 2).enumerate() {
        let v = grid.vertex_index(&cell.base);
        let mut acc = nalgebra::DVector::zeros(m);
        for p in 0..cell.axes.len() {
            for q in (p + 1)..cell.axes.len() {
                let (a, c) = (cell.axes[p], cell.axes[q]);
                let plaquette = Cell { axes: vec![a, c], base: cell.base.clone() };
                let hol = b.plaquette_holonomy(grid, &plaquette).unwrap();
                let route = b
                    .transport_path(
                        grid,
                        &[Step::backward(grid.edge_id(grid.shift(v, a, 1), c)), Step::backward(grid.edge_id(v, a))],
                    )
                    .unwrap();
                let mut base = cell.base.clone();
                base[a] = (base[a] + 1) % grid.sizes()[a];
                base[c] = (base[c] + 1) % grid.sizes()[c];
                let face = Cell {
                    axes: cell.axes.iter().copied().filter(|&x| x != a && x != c).collect(),
                    base,
                };
                let val = nalgebra::DVector::from_column_slice(alpha.value_at(grid, &face).unwrap());
                let sign = if (p + q) % 2 == 0 { 1.0 } else { -1.0 };
                acc += (&hol - Mat::identity(m, m)) * route * val * sign;
            }
        }
        out.value_mut(id).copy_from_slice(acc.as_slice());
    }
    out
}

#[test]
fn flatness() {
    let mut flat_worst: f64 = 0.0;
    for grid in [t2(), t3(), TorusGrid::new(4, &[3, 3, 3, 3], &[1.0; 4]).unwrap()] {
        for (i, b) in [
            BundleData::trivial(&grid, 2).unwrap(),
            BundleData::pure_gauge(&grid, 3, 11).unwrap(),
        ]
        .iter()
        .enumerate()
        {
            for k in 0..=grid.dim() - 2 {
                let a = random_cochain(&grid, b, k, 20 + i as u64, 1.0).unwrap();
                let dd = norm_cochain(&grid, b, &curvature_action(&grid, b, &a).unwrap()).unwrap();
                flat_worst = flat_worst.max(dd / norm_cochain(&grid, b, &a).unwrap());
            }
        }
    }
    let grid = t3();
    let b = BundleData::random_orthogonal(&grid, 2, 42, 0.9).unwrap();
    let mut curved_min = f64::INFINITY;
    let mut oracle_gap: f64 = 0.0;
    for k in 0..=1 {
        let a = random_cochain(&grid, &b, k, 5, 1.0).unwrap();
        let dd = curvature_action(&grid, &b, &a).unwrap();
        curved_min = curved_min.min(norm_cochain(&grid, &b, &dd).unwrap() / norm_cochain(&grid, &b, &a).unwrap());
        let mut diff = dd.clone();
        diff.axpy(-1.0, &holonomy_oracle(&grid, &b, &a));
        oracle_gap = oracle_gap.max(diff.max_abs());
    }
    let ok = flat_worst <= 1e-10 && curved_min > 1e-3 && oracle_gap <= 1e-10;
    report(
        "flatness",
        ok,
        format!(
            "flat max ‖d²α‖/‖α‖ = {flat_worst:.3e} (bound 1e-10); non-flat min = {curved_min:.3e} (need > 1e-3); holonomy oracle gap = {oracle_gap:.3e} (bound 1e-10)"
        ),
    );
    assert!(ok);
}

#[test]
fn first_variation() {
    let t = 1e-3;
    let mut worst: f64 = 0.0;
    for (i, (grid, b, seed)) in tuples().into_iter().enumerate() {
        let k = i % (grid.dim() + 1);
        let g = random_graded(&grid, &b, seed, 1.0).unwrap();
        let dir = random_graded(&grid, &b, seed + 77, 1.0).unwrap();
        let mut plus = g.clone();
        plus.axpy(t, &dir);
        let mut minus = g.clone();
        minus.axpy(-t, &dir);
        let fd = (functional_f(k, &grid, &b, &plus).unwrap() - functional_f(k, &grid, &b, &minus).unwrap()) / (2.0 * t);
        let exact = inner(&grid, &b, &gradient_f(k, &grid, &b, &g).unwrap(), &dir).unwrap();
        worst = worst.max((fd - exact).abs() / exact.abs());
    }
    let ok = worst <= 1e-9;
    report("first variation", ok, format!("max relative central-difference gap at t = 1e-3: {worst:.3e} (bound 1e-9)"));
    assert!(ok);
}

#[test]
fn redundancy() {
    let mut nonzero = 0;
    let mut cases = 0;
    for (i, (grid, b, seed)) in tuples().into_iter().enumerate() {
        let k = 1 + i % grid.dim();
        let dom = TildeDomain::new(k);
        let g = project_tilde(&dom, &grid, &b, &random_graded(&grid, &b, seed, 1.0).unwrap()).unwrap();
        assert!(dom.contains(&grid, &b, &g).unwrap());
        let res = critical_residual(k, &grid, &b, &g).unwrap();
        cases += 1;
        if res[k - 1] != 0.0 {
            nonzero += 1;
        }
    }
    let ok = nonzero == 0;
    report("redundancy", ok, format!("{nonzero} of {cases} projected states have a non-zero residual at degree k-1"));
    assert!(ok);
}

#[test]
fn symplectic_critical_points() {
    let grid = TorusGrid::new(4, &[3, 3, 3, 3], &[1.0; 4]).unwrap();
    let b = BundleData::trivial(&grid, 1).unwrap();
    let omega = standard_symplectic_cochain(&grid).unwrap();
    let g = GradedCochain::from_component(4, omega.clone());
    let residual = critical_residual(2, &grid, &b, &g).unwrap().into_iter().fold(0.0, f64::max);
    let (nondeg, det) = check_nondegenerate(&reconstruct_two_form(&grid, &omega).unwrap(), DEFAULT_NONDEGENERACY_EPS);
    let first = residual <= 1e-12 && nondeg;

    // exact perturbation one degree up: γ = ω + d∇η
    let eta = random_cochain(&grid, &b, 2, 2024, 1e-3).unwrap();
    let mut g0 = g.clone();
    g0.set(d_cov(&grid, &b, &eta).unwrap());
    let r = run_flow(2, &grid, &b, &g0, &FlowParams::default(), None).unwrap();
    let monotone = r.trace.f_values.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
    let closed = norm_cochain(&grid, &b, &d_cov(&grid, &b, &extract_pk(2, &grid, &r.state)).unwrap()).unwrap();
    let second = monotone && closed <= 1e-6 && r.termination != Termination::Diverged;
    let ok = first && second;
    report(
        "symplectic critical points",
        ok,
        format!(
            "ω residual = {residual:.3e} (bound 1e-12), min |det| = {det:.3e}, nondegenerate = {nondeg}; \
             perturbed flow: {:?} after {} steps (τ = {:.4}), F monotone = {monotone}, final ‖d p_2 γ‖ = {closed:.3e} (bound 1e-6)",
            r.termination,
            r.trace.len() - 1,
            r.step_size
        ),
    );
    assert!(ok);
}

#[test]
fn kaehler_fixed_point() {
    let grid = TorusGrid::new(2, &[4, 4], &[1.0, 1.0]).unwrap();
    let tangent = BundleData::trivial(&grid, 2).unwrap();
    let end = tangent.induced_end_bundle(&grid).unwrap();
    let j0 = JField::constant(&grid, &standard_complex_structure(2));
    let g0 = GradedCochain::from_component(2, j_to_end_cochain(&grid, &j0).unwrap());
    let projector = kaehler_projector(&grid, &tangent);
    let r = run_flow(0, &grid, &end, &g0, &FlowParams::default(), Some(&projector)).unwrap();
    let grad0 = r.trace.gradient_norms[0];

    // g-orthogonal anti-involutions Q J₀ Qᵀ with seeded random orthogonal Q per vertex
    let grid4 = TorusGrid::new(4, &[3, 3, 3, 3], &[1.0; 4]).unwrap();
    let t4 = BundleData::trivial(&grid4, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let j0 = standard_complex_structure(4);
    let field = JField::new(
        (0..grid4.vertex_count())
            .map(|_| {
                let q = random_orthogonal(&mut rng, 4);
                &q * &j0 * q.transpose()
            })
            .collect(),
    )
    .unwrap();
    let (ac, orth) = check_ac_orthogonal(&field, t4.metrics()).unwrap();
    let residual = kaehler_residual(&grid4, &t4, &field).unwrap();
    let ok = grad0 <= 1e-12 && ac <= 1e-12 && orth <= 1e-12 && residual > 1e-3;
    report(
        "kaehler fixed point",
        ok,
        format!(
            "constant J₀ gradient norm at step 0 = {grad0:.3e} (bound 1e-12); non-constant field kaehler residual = {residual:.3e} (need > 1e-3), AC/orth residuals {ac:.1e}/{orth:.1e}"
        ),
    );
    assert!(ok);
}

#[test]
fn morphism_checks() {
    let grid = t3();
    let b = BundleData::random_orthogonal(&grid, 3, 8, 0.5).unwrap();
    let samples: Vec<Cochain> = (0..5).map(|s| random_cochain(&grid, &b, 1, s, 1.0).unwrap()).collect();
    let closed_in = |bundle: BundleData, grid: TorusGrid| {
        move |c: &Cochain| d_cov(&grid, &bundle, c).map(|d| d.max_abs() <= 1e-12).unwrap_or(false)
    };
    let any = |_: &Cochain| true;
    let id: Vec<Mat> = vec![Mat::identity(3, 3); grid.vertex_count()];
    let ident = check_morphism(&grid, &id, &b, &b, &any, &closed_in(b.clone(), grid.clone()), &[]).unwrap();
    let same = check_morphism(&grid, &id, &b, &b, &closed_in(b.clone(), grid.clone()), &closed_in(b.clone(), grid.clone()), &samples).unwrap();
    let first = ident.naturality_residual == 0.0 && ident.isometry_residual == 0.0 && same.inclusion_ok;

    let mut gap: f64 = 0.0;
    for m in 1..=4usize {
        let triv = BundleData::trivial(&grid, m).unwrap();
        let sigma = vec![Mat::identity(m, m) * 2.0; grid.vertex_count()];
        let r = check_morphism(&grid, &sigma, &triv, &triv, &any, &any, &[]).unwrap();
        gap = gap.max((r.isometry_residual - 3.0 * (m as f64).sqrt()).abs());
    }
    let ok = first && gap <= 1e-12;
    report(
        "morphism checks",
        ok,
        format!(
            "identity: naturality {:.1e}, isometry {:.1e}, inclusion_ok {}; 2I isometry residual vs 3√m max gap = {gap:.3e} (bound 1e-12)",
            ident.naturality_residual, ident.isometry_residual, same.inclusion_ok
        ),
    );
    assert!(ok);
}

#[test]
fn gauge_invariance() {
    let mut worst: f64 = 0.0;
    for (grid, b, seed) in tuples() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
        let s: Vec<Mat> = (0..grid.vertex_count()).map(|_| random_well_conditioned(&mut rng, b.rank(), 2.0)).collect();
        let bg = b.gauge_transform(&grid, &s, 1e8).unwrap();
        let a = random_graded(&grid, &b, seed, 1.0).unwrap();
        let c = random_graded(&grid, &b, seed + 1, 1.0).unwrap();
        let (ag, cg) = (a.gauge(&grid, &s).unwrap(), c.gauge(&grid, &s).unwrap());
        let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(1.0);
        worst = worst.max(rel(inner(&grid, &b, &a, &c).unwrap(), inner(&grid, &bg, &ag, &cg).unwrap()));
        for k in 0..=grid.dim() {
            worst = worst.max(rel(functional_f(k, &grid, &b, &a).unwrap(), functional_f(k, &grid, &bg, &ag).unwrap()));
            let r = critical_residual(k, &grid, &b, &a).unwrap();
            let rg = critical_residual(k, &grid, &bg, &ag).unwrap();
            for (x, y) in r.iter().zip(&rg) {
                worst = worst.max(rel(*x, *y));
            }
        }
    }
    let ok = worst <= 1e-10;
    report("gauge invariance", ok, format!("max relative change of inner products, F and residuals = {worst:.3e} (bound 1e-10)"));
    assert!(ok);
}

#[test]
fn cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "scenario = \"custom\"\nk = 1\nrank = 2\nseed = 5\nbundle = \"random-orthogonal:3:0.4\"\ninit = \"random:0.5\"\noutputs = \"{}\"\n[grid]\nn = 3\nsizes = [3, 3, 4]\n[flow]\nmax_steps = 25\n",
            out.display()
        ),
    )
    .unwrap();
    let run = || {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_covforms"))
            .args(["run", cfg.to_str().unwrap()])
            .status()
            .unwrap();
        let trace = std::fs::read(out.join("trace.csv")).unwrap();
        let state = std::fs::read(out.join("final_state.csv")).unwrap();
        let mut summary: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
        summary.as_object_mut().unwrap().remove("wall_time_seconds");
        (trace, state, summary, status.code())
    };
    let first = run();
    let second = run();
    let ok = first == second;
    report(
        "cli determinism",
        ok,
        format!("two runs: trace.csv {} bytes, identical = {}; summary.json identical modulo wall time = {}", first.0.len(), first.0 == second.0, first.2 == second.2),
    );
    assert!(ok);
}
