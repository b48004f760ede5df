//! Constraint sets for the three concrete structure types: non-degenerate
//! 2-forms, metric-orthogonal almost-complex structures (Kähler when
//! covariantly constant), and almost-complex structures viewed as
//! tangent-valued 1-forms (special complex when `d∇`-closed and integrable).
//!
//! Fields are stored per vertex. Tangent vectors use the physical coordinate
//! basis `e_i`, which is orthonormal for the flat metric of the torus.

use nalgebra::{DVector, SymmetricEigen};

use crate::bundle::{BundleData, Mat};
use crate::calculus::{constant_cochain, d_cov, norm_cochain, Cochain, GradedCochain};
use crate::error::{Error, Result};
use crate::mesh::TorusGrid;

pub const DEFAULT_NONDEGENERACY_EPS: f64 = 1e-6;
pub const INTEGRABILITY_THRESHOLD: f64 = 1e-6;

/// Per-vertex antisymmetric matrices, stored as the strict upper triangle
/// in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoFormField {
    n: usize,
    upper: Vec<Vec<f64>>,
}

impl TwoFormField {
    pub fn from_matrices(mats: &[Mat]) -> Result<Self> {
        let n = mats.first().map_or(0, Mat::nrows);
        let upper = mats
            .iter()
            .map(|m| {
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::RankMismatch("two-form matrices must be n x n".into()));
                }
                Ok((0..n)
                    .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                    .map(|(i, j)| 0.5 * (m[(i, j)] - m[(j, i)]))
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self { n, upper })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn vertex_count(&self) -> usize {
        self.upper.len()
    }

    pub fn matrix(&self, v: usize) -> Mat {
        let mut m = Mat::zeros(self.n, self.n);
        let mut it = self.upper[v].iter();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let x = *it.next().expect("triangle length");
                m[(i, j)] = x;
                m[(j, i)] = -x;
            }
        }
        m
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            upper: self
                .upper
                .iter()
                .map(|u| u.iter().map(|x| c * x).collect())
                .collect(),
        }
    }
}

/// Per-vertex n×n matrices, unconstrained until checked.
#[derive(Debug, Clone, PartialEq)]
pub struct JField {
    mats: Vec<Mat>,
}

impl JField {
    pub fn new(mats: Vec<Mat>) -> Result<Self> {
        let n = mats.first().map_or(0, Mat::nrows);
        if mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::RankMismatch("J field matrices must all be n x n".into()));
        }
        Ok(Self { mats })
    }

    pub fn constant(grid: &TorusGrid, j: &Mat) -> Self {
        Self {
            mats: vec![j.clone(); grid.vertex_count()],
        }
    }

    pub fn from_fn<F: Fn(&[f64]) -> Mat>(grid: &TorusGrid, f: F) -> Result<Self> {
        Self::new(
            (0..grid.vertex_count())
                .map(|v| f(&grid.position(v)))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.mats.first().map_or(0, Mat::nrows)
    }

    pub fn matrices(&self) -> &[Mat] {
        &self.mats
    }

    pub fn at(&self, v: usize) -> &Mat {
        &self.mats[v]
    }

    fn ensure_fits(&self, grid: &TorusGrid) -> Result<()> {
        if self.mats.len() != grid.vertex_count() || self.dim() != grid.dim() {
            return Err(Error::Mismatch(format!(
                "J field has {} vertices of size {}, grid has {} vertices of dimension {}",
                self.mats.len(),
                self.dim(),
                grid.vertex_count(),
                grid.dim()
            )));
        }
        Ok(())
    }
}

/// Block-diagonal `[[0, −1], [1, 0]]`; the last diagonal entry stays 0 when n is odd.
pub fn standard_complex_structure(n: usize) -> Mat {
    let mut j = Mat::zeros(n, n);
    for p in 0..n / 2 {
        j[(2 * p, 2 * p + 1)] = -1.0;
        j[(2 * p + 1, 2 * p)] = 1.0;
    }
    j
}

/// `Σ_p dx^{2p} ∧ dx^{2p+1}` integrated over plaquettes (value `h_a h_b` on
/// the paired planes, 0 elsewhere). Scalar 2-cochain.
pub fn standard_symplectic_cochain(grid: &TorusGrid) -> Result<Cochain> {
    if grid.dim() < 2 {
        return Err(Error::DegreeOutOfRange { degree: 2, dim: grid.dim() });
    }
    constant_cochain(grid, 1, 2, |axes| {
        vec![if axes[0] % 2 == 0 && axes[1] == axes[0] + 1 { 1.0 } else { 0.0 }]
    })
}

/// Vertex-averaged reconstruction of the 2-form matrix from plaquette values.
pub fn reconstruct_two_form(grid: &TorusGrid, omega: &Cochain) -> Result<TwoFormField> {
    let n = grid.dim();
    if n < 2 {
        return Err(Error::DegreeOutOfRange { degree: 2, dim: n });
    }
    if omega.degree() != 2 || omega.rank() != 1 || omega.cell_count() != grid.cell_count(2) {
        return Err(Error::Mismatch("expected a scalar 2-cochain on this grid".into()));
    }
    let h = grid.spacings();
    let upper = (0..grid.vertex_count())
        .map(|v| {
            let mut tri = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    let mask = (1u32 << i) | (1u32 << j);
                    let vi = grid.shift(v, i, -1);
                    let sum: f64 = [v, vi, grid.shift(v, j, -1), grid.shift(vi, j, -1)]
                        .iter()
                        .map(|&b| omega.value(grid.cell_id_from_mask(mask, b))[0])
                        .sum();
                    tri.push(0.25 * sum / (h[i] * h[j]));
                }
            }
            tri
        })
        .collect();
    Ok(TwoFormField { n, upper })
}

/// `(min_v |det ω(v)| ≥ ε, min_v |det ω(v)|)`.
pub fn check_nondegenerate(field: &TwoFormField, eps: f64) -> (bool, f64) {
    if field.vertex_count() == 0 {
        return (false, 0.0);
    }
    let min_abs_det = (0..field.vertex_count())
        .map(|v| {
            if field.n % 2 == 1 {
                0.0
            } else {
                field.matrix(v).determinant().abs()
            }
        })
        .fold(f64::INFINITY, f64::min);
    (min_abs_det >= eps, min_abs_det)
}

/// `(max_v ‖J² + I‖_F, max_v ‖JᵀGJ − G‖_F)`.
pub fn check_ac_orthogonal(j: &JField, metric: &[Mat]) -> Result<(f64, f64)> {
    if metric.len() != j.mats.len() {
        return Err(Error::Mismatch(format!(
            "{} metric matrices for {} J values",
            metric.len(),
            j.mats.len()
        )));
    }
    let n = j.dim();
    let id = Mat::identity(n, n);
    let mut ac: f64 = 0.0;
    let mut orth: f64 = 0.0;
    for (jm, g) in j.mats.iter().zip(metric) {
        if g.nrows() != n || g.ncols() != n {
            return Err(Error::RankMismatch("metric size differs from J size".into()));
        }
        ac = ac.max((jm * jm + &id).norm());
        orth = orth.max((jm.transpose() * g * jm - g).norm());
    }
    Ok((ac, orth))
}

/// Cyclic Jacobi sweeps on a symmetric matrix; returns the accumulated rotation.
fn jacobi_refine(d: &mut Mat) -> Mat {
    let n = d.nrows();
    let mut q = Mat::identity(n, n);
    for _ in 0..30 {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| d[(i, j)] * d[(i, j)])
            .sum();
        if off.sqrt() <= f64::EPSILON * d.norm() * 1e-2 {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                if d[(p, r)] == 0.0 {
                    continue;
                }
                let theta = (d[(r, r)] - d[(p, p)]) / (2.0 * d[(p, r)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let mut rot = Mat::identity(n, n);
                rot[(p, p)] = c;
                rot[(r, r)] = c;
                rot[(p, r)] = s;
                rot[(r, p)] = -s;
                *d = rot.transpose() * &*d * &rot;
                q *= rot;
            }
        }
    }
    q
}

fn sym_sqrt_pair(g: &Mat) -> (Mat, Mat) {
    // SymmetricEigen alone can leave ~1e-9 residuals on some well-conditioned
    // 4x4 inputs; polish its output with Jacobi sweeps
    let eig = SymmetricEigen::new(g.clone());
    let mut d = eig.eigenvectors.transpose() * g * &eig.eigenvectors;
    d = (&d + d.transpose()) * 0.5;
    let q = &eig.eigenvectors * jacobi_refine(&mut d);
    let s = d.diagonal().map(f64::sqrt);
    let sqrt = &q * Mat::from_diagonal(&s) * q.transpose();
    let inv_sqrt = &q * Mat::from_diagonal(&s.map(|x| 1.0 / x)) * q.transpose();
    (sqrt, inv_sqrt)
}

/// Retraction onto `AC(M)_g`: in the `G^{1/2}` frame take the skew part and
/// its orthogonal polar factor, then conjugate back.
pub fn project_ac_g(fields: &[Mat], metric: &[Mat]) -> Result<JField> {
    if fields.len() != metric.len() {
        return Err(Error::Mismatch("field and metric lengths differ".into()));
    }
    let mut out = Vec::with_capacity(fields.len());
    for (v, (m, g)) in fields.iter().zip(metric).enumerate() {
        let n = m.nrows();
        if n % 2 == 1 || m.ncols() != n || g.nrows() != n || g.ncols() != n {
            return Err(Error::RankMismatch(format!(
                "vertex {v}: need even square matrices, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let (gs, gs_inv) = sym_sqrt_pair(g);
        let mt = &gs * m * &gs_inv;
        let skew = (&mt - mt.transpose()) * 0.5;
        let svd = skew.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-12 * smax.max(f64::MIN_POSITIVE)) || smax == 0.0 {
            return Err(Error::SingularSkewPart { vertex: v });
        }
        let q = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
        // skew and orthogonal; symmetrise away rounding in the skew part
        let q = (&q - q.transpose()) * 0.5;
        out.push(&gs_inv * q * &gs);
    }
    JField::new(out)
}

/// `J` flattened row-major as a 0-cochain of `End(T)`.
pub fn j_to_end_cochain(grid: &TorusGrid, j: &JField) -> Result<Cochain> {
    j.ensure_fits(grid)?;
    let n = grid.dim();
    let values = j
        .mats
        .iter()
        .flat_map(|m| m.transpose().as_slice().to_vec())
        .collect();
    Cochain::from_values(grid, n * n, 0, values)
}

pub fn end_cochain_to_j(grid: &TorusGrid, c: &Cochain) -> Result<JField> {
    let n = grid.dim();
    if c.degree() != 0 || c.rank() != n * n || c.cell_count() != grid.vertex_count() {
        return Err(Error::Mismatch("expected an End(T)-valued 0-cochain".into()));
    }
    JField::new(
        (0..grid.vertex_count())
            .map(|v| Mat::from_row_slice(n, n, c.value(v)))
            .collect(),
    )
}

/// Edge `(v, i)` carries `h_i · J(v) e_i`.
pub fn j_to_tangent_one_form(grid: &TorusGrid, j: &JField) -> Result<Cochain> {
    j.ensure_fits(grid)?;
    let n = grid.dim();
    let mut c = Cochain::zeros(grid, n, 1);
    for v in 0..grid.vertex_count() {
        for i in 0..n {
            let h = grid.spacings()[i];
            let col = j.mats[v].column(i);
            for (x, y) in c.value_mut(grid.edge_id(v, i)).iter_mut().zip(col.iter()) {
                *x = h * y;
            }
        }
    }
    Ok(c)
}

pub fn tangent_one_form_to_j(grid: &TorusGrid, c: &Cochain) -> Result<JField> {
    let n = grid.dim();
    if c.degree() != 1 || c.rank() != n || c.cell_count() != grid.edge_count() {
        return Err(Error::Mismatch("expected a T-valued 1-cochain".into()));
    }
    JField::new(
        (0..grid.vertex_count())
            .map(|v| {
                Mat::from_fn(n, n, |r, i| {
                    c.value(grid.edge_id(v, i))[r] / grid.spacings()[i]
                })
            })
            .collect(),
    )
}

/// `‖d∇ J‖` with J a 0-cochain of the endomorphism bundle of `tangent`.
pub fn kaehler_residual(grid: &TorusGrid, tangent: &BundleData, j: &JField) -> Result<f64> {
    let end = tangent.induced_end_bundle(grid)?;
    let c = j_to_end_cochain(grid, j)?;
    norm_cochain(grid, &end, &d_cov(grid, &end, &c)?)
}

/// `‖d∇ J‖` with J as a tangent-valued 1-cochain.
pub fn special_complex_residual(grid: &TorusGrid, tangent: &BundleData, j: &JField) -> Result<f64> {
    let c = j_to_tangent_one_form(grid, j)?;
    norm_cochain(grid, tangent, &d_cov(grid, tangent, &c)?)
}

/// Max over vertices and coordinate pairs of the Nijenhuis tensor with
/// central-difference derivatives of J.
pub fn nijenhuis_residual(grid: &TorusGrid, j: &JField) -> Result<f64> {
    j.ensure_fits(grid)?;
    let n = grid.dim();
    let h = grid.spacings();
    let mut worst: f64 = 0.0;
    for v in 0..grid.vertex_count() {
        let deriv: Vec<Mat> = (0..n)
            .map(|l| {
                (&j.mats[grid.shift(v, l, 1)] - &j.mats[grid.shift(v, l, -1)]) / (2.0 * h[l])
            })
            .collect();
        let jv = &j.mats[v];
        let directional = |x: &DVector<f64>| -> Mat {
            deriv
                .iter()
                .zip(x.iter())
                .fold(Mat::zeros(n, n), |acc, (d, &c)| acc + d * c)
        };
        for a in 0..n {
            for b in (a + 1)..n {
                let ea = DVector::from_fn(n, |r, _| if r == a { 1.0 } else { 0.0 });
                let eb = DVector::from_fn(n, |r, _| if r == b { 1.0 } else { 0.0 });
                let nij = directional(&(jv * &ea)) * &eb - directional(&(jv * &eb)) * &ea
                    + jv * (&deriv[b] * &ea)
                    - jv * (&deriv[a] * &eb);
                worst = worst.max(nij.norm());
            }
        }
    }
    Ok(worst)
}

/// Projects the degree-0 component (End(T)-valued) onto `AC(M)_g`.
pub fn kaehler_projector<'a>(
    grid: &'a TorusGrid,
    tangent: &'a BundleData,
) -> impl Fn(&GradedCochain) -> Result<GradedCochain> + 'a {
    move |g: &GradedCochain| {
        let mut out = g.clone();
        if let Some(c) = g.component(0) {
            let j = end_cochain_to_j(grid, c)?;
            let p = project_ac_g(j.matrices(), tangent.metrics())?;
            out.set(j_to_end_cochain(grid, &p)?);
        }
        Ok(out)
    }
}

/// Reads J off the degree-1 component, projects it onto `AC(M)_g`, and
/// re-embeds it. Integrability is not enforced here.
pub fn special_complex_projector<'a>(
    grid: &'a TorusGrid,
    tangent: &'a BundleData,
) -> impl Fn(&GradedCochain) -> Result<GradedCochain> + 'a {
    move |g: &GradedCochain| {
        let mut out = g.clone();
        if let Some(c) = g.component(1) {
            let j = tangent_one_form_to_j(grid, c)?;
            let p = project_ac_g(j.matrices(), tangent.metrics())?;
            out.set(j_to_tangent_one_form(grid, &p)?);
        }
        Ok(out)
    }
}
