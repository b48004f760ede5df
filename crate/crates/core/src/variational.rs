//! The masked functional `F(γ) = ⟨⟨d∇[k]γ, γ⟩⟩`, its gradient, the critical
//! residual system and the explicit gradient flow `γ ← γ − τ (d∇[k] + δ∇[k]) γ`.
//!
//! `D_k = d∇[k] + δ∇[k]` is self-adjoint for the weighted inner product but
//! indefinite, so the flow can grow without bound; divergence is reported as a
//! termination reason rather than an error.

use std::io::Write;

use crate::bundle::BundleData;
use crate::calculus::{
    d_cov, delta_cov, inner, inner_cochain, masked_d, masked_delta, norm, norm_cochain,
    random_graded, Cochain, GradedCochain,
};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::mesh::TorusGrid;

pub const DEFAULT_TILDE_TOLERANCE: f64 = 1e-8;
pub const CG_RELATIVE_TOLERANCE: f64 = 1e-10;
pub const GRADIENT_TOLERANCE: f64 = 1e-10;
pub const DIVERGENCE_FACTOR: f64 = 1e6;
pub const POWER_ITERATIONS: usize = 50;
pub const AUTO_STEP_FACTOR: f64 = 0.9;
const REFINEMENT_PASSES: usize = 3;

/// The constrained domain: `γ_{k−2} = 0` and `δ∇γ_{k+2} = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TildeDomain {
    pub k: usize,
    pub tolerance: f64,
}

impl TildeDomain {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            tolerance: DEFAULT_TILDE_TOLERANCE,
        }
    }

    /// `(‖γ_{k−2}‖, ‖δ∇γ_{k+2}‖)`, zero for absent degrees.
    pub fn constraint_norms(&self, grid: &TorusGrid, bundle: &BundleData, g: &GradedCochain) -> Result<(f64, f64)> {
        let low = match self.k.checked_sub(2).and_then(|i| g.component(i)) {
            Some(c) => norm_cochain(grid, bundle, c)?,
            None => 0.0,
        };
        let high = match g.component(self.k + 2) {
            Some(c) => norm_cochain(grid, bundle, &delta_cov(grid, bundle, c)?)?,
            None => 0.0,
        };
        Ok((low, high))
    }

    pub fn contains(&self, grid: &TorusGrid, bundle: &BundleData, g: &GradedCochain) -> Result<bool> {
        let low_zero = self
            .k
            .checked_sub(2)
            .and_then(|i| g.component(i))
            .is_none_or(Cochain::is_zero);
        if !low_zero {
            return Ok(false);
        }
        match g.component(self.k + 2) {
            None => Ok(true),
            Some(c) => {
                let d = norm_cochain(grid, bundle, &delta_cov(grid, bundle, c)?)?;
                Ok(d <= self.tolerance * norm_cochain(grid, bundle, c)?)
            }
        }
    }
}

/// Orthogonal projection onto `Ω̃^k`: drops degree k−2 and removes the
/// `range(d∇)` part of degree k+2 by solving `δ∇d∇ η = δ∇γ_{k+2}` with CG.
pub fn project_tilde(
    dom: &TildeDomain,
    grid: &TorusGrid,
    bundle: &BundleData,
    g: &GradedCochain,
) -> Result<GradedCochain> {
    let mut out = g.clone();
    if let Some(i) = dom.k.checked_sub(2) {
        out.clear(i);
    }
    let Some(top) = g.component(dom.k + 2) else {
        return Ok(out);
    };
    let top_norm = norm_cochain(grid, bundle, top)?;
    let max_iter = 10 * grid.cell_count(dom.k + 1);
    let mut projected = top.clone();
    for _ in 0..REFINEMENT_PASSES {
        let mut probe = out.clone();
        probe.set(projected.clone());
        if dom.contains(grid, bundle, &probe)? {
            break;
        }
        let rhs = delta_cov(grid, bundle, &projected)?;
        let eta = conjugate_gradient(
            grid,
            bundle,
            |x| delta_cov(grid, bundle, &d_cov(grid, bundle, x)?),
            &rhs,
            CG_RELATIVE_TOLERANCE,
            max_iter,
        )?;
        projected.axpy(-1.0, &d_cov(grid, bundle, &eta)?);
        // entirely in range(d∇) up to solver resolution
        if norm_cochain(grid, bundle, &projected)? <= dom.tolerance * top_norm {
            projected = Cochain::zeros(grid, top.rank(), top.degree());
            break;
        }
    }
    out.set(projected);
    Ok(out)
}

/// CG for an operator self-adjoint in the weighted inner product.
fn conjugate_gradient<A>(
    grid: &TorusGrid,
    bundle: &BundleData,
    apply: A,
    rhs: &Cochain,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Cochain>
where
    A: Fn(&Cochain) -> Result<Cochain>,
{
    let dot = |a: &Cochain, b: &Cochain| inner_cochain(grid, bundle, a, b);
    let b_norm = dot(rhs, rhs)?.sqrt();
    let mut x = Cochain::zeros(grid, rhs.rank(), rhs.degree());
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r)?;
    let mut rel = rr.sqrt() / b_norm;
    for _ in 0..max_iter {
        if rel <= rel_tol {
            return Ok(x);
        }
        let ap = apply(&p)?;
        let pap = dot(&p, &ap)?;
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rr_new = dot(&r, &r)?;
        rel = rr_new.sqrt() / b_norm;
        let beta = rr_new / rr;
        rr = rr_new;
        let mut next = r.clone();
        next.axpy(beta, &p);
        p = next;
    }
    if rel <= rel_tol {
        Ok(x)
    } else {
        Err(Error::CgNotConverged {
            iterations: max_iter,
            residual: rel,
        })
    }
}

/// `F(γ) = ⟨⟨d∇[k]γ, γ⟩⟩`.
pub fn functional_f(k: usize, grid: &TorusGrid, bundle: &BundleData, g: &GradedCochain) -> Result<f64> {
    inner(grid, bundle, &masked_d(k, grid, bundle, g)?, g)
}

/// `(d∇[k] + δ∇[k]) γ`, the first variation of `F`.
pub fn gradient_f(k: usize, grid: &TorusGrid, bundle: &BundleData, g: &GradedCochain) -> Result<GradedCochain> {
    let mut out = masked_d(k, grid, bundle, g)?;
    out.axpy(1.0, &masked_delta(k, grid, bundle, g)?);
    Ok(out)
}

/// Per-degree norms of an already computed gradient.
pub fn residuals_of(grid: &TorusGrid, bundle: &BundleData, gradient: &GradedCochain) -> Result<Vec<f64>> {
    (0..=grid.dim())
        .map(|l| match gradient.component(l) {
            Some(c) => norm_cochain(grid, bundle, c),
            None => Ok(0.0),
        })
        .collect()
}

/// For each degree l, the norm of `d∇[k]γ_{l−1} + δ∇[k]γ_{l+1}`.
pub fn critical_residual(k: usize, grid: &TorusGrid, bundle: &BundleData, g: &GradedCochain) -> Result<Vec<f64>> {
    residuals_of(grid, bundle, &gradient_f(k, grid, bundle, g)?)
}

/// `p_k(γ) = γ_k`, a zero cochain when the component is absent.
pub fn extract_pk(k: usize, grid: &TorusGrid, g: &GradedCochain) -> Cochain {
    g.component_or_zero(grid, k)
}

/// Power-iteration estimate of `‖d∇[k] + δ∇[k]‖` from a seeded random start.
pub fn estimate_operator_norm(
    k: usize,
    grid: &TorusGrid,
    bundle: &BundleData,
    seed: u64,
    iterations: usize,
) -> Result<f64> {
    let mut x = random_graded(grid, bundle, seed, 1.0)?;
    let n0 = norm(grid, bundle, &x)?;
    if n0 == 0.0 {
        return Ok(0.0);
    }
    x = x.scaled(1.0 / n0);
    let mut rho = 0.0;
    for _ in 0..iterations {
        let y = gradient_f(k, grid, bundle, &x)?;
        rho = norm(grid, bundle, &y)?;
        if rho == 0.0 {
            break;
        }
        x = y.scaled(1.0 / rho);
    }
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    pub step: StepSize,
    pub max_steps: usize,
    pub renormalize: bool,
    pub project_each_step: bool,
    /// Seed of the power-iteration start vector for [`StepSize::Auto`].
    pub power_seed: u64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            step: StepSize::Auto,
            max_steps: 2000,
            renormalize: false,
            project_each_step: false,
            power_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Gradient norm fell below the tolerance.
    Converged,
    MaxSteps,
    /// `‖γ‖` exceeded `10⁶ ‖γ₀‖` or became non-finite.
    Diverged,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    pub f_values: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    pub residual_by_degree: Vec<Vec<f64>>,
    /// `max(‖γ_{k−2}‖, ‖δ∇γ_{k+2}‖)` per recorded step.
    pub constraint_drift: Vec<f64>,
}

impl FlowTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Equal lengths and strictly increasing times.
    pub fn is_consistent(&self) -> bool {
        let n = self.times.len();
        self.f_values.len() == n
            && self.gradient_norms.len() == n
            && self.residual_by_degree.len() == n
            && self.constraint_drift.len() == n
            && self.times.windows(2).all(|w| w[0] < w[1])
    }

    /// CSV with columns `step,time,F,grad_norm,residual_deg_0..residual_deg_n`.
    pub fn write_csv<W: Write>(&self, dim: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "step".to_string(),
            "time".into(),
            "F".into(),
            "grad_norm".into(),
        ];
        header.extend((0..=dim).map(|l| format!("residual_deg_{l}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![
                i.to_string(),
                fmt_f64(self.times[i]),
                fmt_f64(self.f_values[i]),
                fmt_f64(self.gradient_norms[i]),
            ];
            row.extend(self.residual_by_degree[i].iter().map(|&x| fmt_f64(x)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub state: GradedCochain,
    pub trace: FlowTrace,
    pub termination: Termination,
    pub step_size: f64,
}

pub type StructureProjector<'a> = &'a dyn Fn(&GradedCochain) -> Result<GradedCochain>;

/// Explicit Euler integration of `∂γ/∂t = −(d∇[k] + δ∇[k])γ`.
///
/// Step 0 records the initial state. After each update the state is
/// optionally re-projected onto `Ω̃^k`, then onto the structure set, then
/// rescaled to the initial norm.
pub fn run_flow(
    k: usize,
    grid: &TorusGrid,
    bundle: &BundleData,
    gamma0: &GradedCochain,
    params: &FlowParams,
    projector: Option<StructureProjector<'_>>,
) -> Result<FlowResult> {
    if !gamma0.is_finite() {
        return Err(Error::Mismatch("initial state is not finite".into()));
    }
    let tau = match params.step {
        StepSize::Fixed(t) if t > 0.0 && t.is_finite() => t,
        StepSize::Fixed(t) => {
            return Err(Error::Parse(format!("step size must be positive, got {t}")));
        }
        StepSize::Auto => {
            let rho = estimate_operator_norm(k, grid, bundle, params.power_seed, POWER_ITERATIONS)?;
            if rho > 0.0 {
                AUTO_STEP_FACTOR / rho
            } else {
                AUTO_STEP_FACTOR
            }
        }
    };
    let dom = TildeDomain::new(k);
    let norm0 = norm(grid, bundle, gamma0)?;
    let mut gamma = gamma0.clone();
    let mut trace = FlowTrace::default();
    let mut termination = Termination::MaxSteps;

    for step in 0..=params.max_steps {
        let grad = gradient_f(k, grid, bundle, &gamma)?;
        let grad_norm = norm(grid, bundle, &grad)?;
        let (low, high) = dom.constraint_norms(grid, bundle, &gamma)?;
        trace.times.push(step as f64 * tau);
        trace.f_values.push(functional_f(k, grid, bundle, &gamma)?);
        trace.gradient_norms.push(grad_norm);
        trace.residual_by_degree.push(residuals_of(grid, bundle, &grad)?);
        trace.constraint_drift.push(low.max(high));

        if grad_norm <= GRADIENT_TOLERANCE {
            termination = Termination::Converged;
            break;
        }
        if step == params.max_steps {
            break;
        }

        let mut next = gamma.clone();
        next.axpy(-tau, &grad);
        if params.project_each_step {
            next = project_tilde(&dom, grid, bundle, &next)?;
        }
        if let Some(p) = projector {
            next = p(&next)?;
        }
        let n_next = norm(grid, bundle, &next)?;
        if params.renormalize && n_next > 0.0 && norm0 > 0.0 {
            next = next.scaled(norm0 / n_next);
        }
        if !next.is_finite() || !n_next.is_finite() || n_next > DIVERGENCE_FACTOR * norm0 {
            termination = Termination::Diverged;
            break;
        }
        gamma = next;
    }

    Ok(FlowResult {
        state: gamma,
        trace,
        termination,
        step_size: tau,
    })
}
