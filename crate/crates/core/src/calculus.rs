//! Bundle-valued cochains and the covariant operators acting on them.
//!
//! A k-cochain stores one fiber vector per k-cell, attached at the cell's
//! anchor. Inner products use the diagonal Hodge weight `dual / primal` per
//! cell and the bundle metric at the anchor:
//!
//! ```text
//! ⟨⟨A, B⟩⟩ = Σ_k Σ_c primal(c) · w(c) · A_k(c)^T H_anchor(c) B_k(c)
//! ```
//!
//! The covariant coboundary transports far-face values back to the anchor:
//!
//! ```text
//! (d∇α)(c) = Σ_j (-1)^j [ U_{anchor, s_j}^{-1} α(far_j) − α(near_j) ]
//! ```
//!
//! and `δ∇` is its exact adjoint for the inner product above (no extra sign
//! normalisation).

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bundle::{BundleData, Mat};
use crate::error::{Error, Result};
use crate::mesh::{Cell, TorusGrid};

/// An E-valued k-cochain; values are stored cell-major, `rank` entries per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cochain {
    degree: usize,
    rank: usize,
    values: Vec<f64>,
}

impl Cochain {
    pub fn zeros(grid: &TorusGrid, rank: usize, degree: usize) -> Self {
        Self {
            degree,
            rank,
            values: vec![0.0; grid.cell_count(degree) * rank],
        }
    }

    pub fn from_values(grid: &TorusGrid, rank: usize, degree: usize, values: Vec<f64>) -> Result<Self> {
        if degree > grid.dim() {
            return Err(Error::DegreeOutOfRange {
                degree,
                dim: grid.dim(),
            });
        }
        let expected = grid.cell_count(degree) * rank;
        if values.len() != expected {
            return Err(Error::Mismatch(format!(
                "{} values for a degree-{degree} rank-{rank} cochain, expected {expected}",
                values.len()
            )));
        }
        Ok(Self {
            degree,
            rank,
            values,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn cell_count(&self) -> usize {
        self.values.len() / self.rank
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Fiber vector on the cell with the given id.
    pub fn value(&self, id: usize) -> &[f64] {
        &self.values[id * self.rank..(id + 1) * self.rank]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.values[id * self.rank..(id + 1) * self.rank]
    }

    pub fn value_at(&self, grid: &TorusGrid, cell: &Cell) -> Result<&[f64]> {
        Ok(self.value(grid.locate(cell)?))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&x| x == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &x| a.max(x.abs()))
    }

    pub(crate) fn ensure_fits(&self, grid: &TorusGrid, bundle: &BundleData) -> Result<()> {
        bundle.ensure_matches(grid)?;
        if self.rank != bundle.rank() || self.values.len() != grid.cell_count(self.degree) * self.rank {
            return Err(Error::Mismatch(format!(
                "degree-{} cochain of rank {} with {} cells does not fit rank-{} bundle ({} cells)",
                self.degree,
                self.rank,
                self.cell_count(),
                bundle.rank(),
                grid.cell_count(self.degree)
            )));
        }
        Ok(())
    }

    /// Applies a per-anchor linear map to every fiber value.
    pub fn map_fibers<F>(&self, grid: &TorusGrid, new_rank: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, &DVector<f64>) -> DVector<f64>,
    {
        let mut out = Vec::with_capacity(self.cell_count() * new_rank);
        for id in 0..self.cell_count() {
            let (_, v) = grid.split_id(self.degree, id);
            let y = f(v, &DVector::from_column_slice(self.value(id)));
            if y.len() != new_rank {
                return Err(Error::RankMismatch(format!(
                    "fiber map produced length {}, expected {new_rank}",
                    y.len()
                )));
            }
            out.extend(y.iter());
        }
        Self::from_values(grid, new_rank, self.degree, out)
    }

    /// Gauge action on values: `α'(c) = s_{anchor(c)}^{-1} α(c)`.
    pub fn gauge(&self, grid: &TorusGrid, gauge: &[Mat]) -> Result<Self> {
        let inverses = gauge
            .iter()
            .enumerate()
            .map(|(v, s)| {
                s.clone().try_inverse().ok_or(Error::SingularGauge {
                    vertex: v,
                    condition: f64::INFINITY,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.map_fibers(grid, self.rank, |v, x| &inverses[v] * x)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            degree: self.degree,
            rank: self.rank,
            values: self.values.iter().map(|x| a * x).collect(),
        }
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        assert_eq!(self.values.len(), other.values.len(), "cochain shape mismatch");
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }
}

/// A sum of cochains of degrees `0..=n`; absent components are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedCochain {
    rank: usize,
    components: Vec<Option<Cochain>>,
}

impl GradedCochain {
    pub fn zero(dim: usize, rank: usize) -> Self {
        Self {
            rank,
            components: vec![None; dim + 1],
        }
    }

    pub fn from_component(dim: usize, c: Cochain) -> Self {
        let mut g = Self::zero(dim, c.rank());
        g.set(c);
        g
    }

    pub fn dim(&self) -> usize {
        self.components.len() - 1
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn component(&self, k: usize) -> Option<&Cochain> {
        self.components.get(k).and_then(Option::as_ref)
    }

    pub fn component_mut(&mut self, k: usize) -> Option<&mut Cochain> {
        self.components.get_mut(k).and_then(Option::as_mut)
    }

    /// Component of degree k, materialising a zero cochain when absent.
    pub fn component_or_zero(&self, grid: &TorusGrid, k: usize) -> Cochain {
        self.component(k)
            .cloned()
            .unwrap_or_else(|| Cochain::zeros(grid, self.rank, k))
    }

    /// Inserts (or replaces) the component of the cochain's degree.
    pub fn set(&mut self, c: Cochain) {
        assert_eq!(c.rank(), self.rank, "rank mismatch in graded cochain");
        let k = c.degree();
        assert!(k < self.components.len(), "degree {k} exceeds graded dimension");
        self.components[k] = Some(c);
    }

    pub fn clear(&mut self, k: usize) {
        if let Some(slot) = self.components.get_mut(k) {
            *slot = None;
        }
    }

    pub fn components(&self) -> impl Iterator<Item = &Cochain> {
        self.components.iter().flatten()
    }

    pub fn is_zero(&self) -> bool {
        self.components().all(Cochain::is_zero)
    }

    pub fn is_finite(&self) -> bool {
        self.components()
            .all(|c| c.values().iter().all(|x| x.is_finite()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            rank: self.rank,
            components: self
                .components
                .iter()
                .map(|c| c.as_ref().map(|c| c.scaled(a)))
                .collect(),
        }
    }

    /// `self += a · other`, materialising components present only in `other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        assert_eq!(self.components.len(), other.components.len());
        for (mine, theirs) in self.components.iter_mut().zip(&other.components) {
            match (mine.as_mut(), theirs) {
                (_, None) => {}
                (Some(x), Some(y)) => x.axpy(a, y),
                (None, Some(y)) => *mine = Some(y.scaled(a)),
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn gauge(&self, grid: &TorusGrid, gauge: &[Mat]) -> Result<Self> {
        let mut out = Self::zero(self.dim(), self.rank);
        for c in self.components() {
            out.set(c.gauge(grid, gauge)?);
        }
        Ok(out)
    }
}

/// Uniform entries in `[-amplitude, amplitude]`, reproducible from `seed`.
pub fn random_cochain(
    grid: &TorusGrid,
    bundle: &BundleData,
    k: usize,
    seed: u64,
    amplitude: f64,
) -> Result<Cochain> {
    if k > grid.dim() {
        return Err(Error::DegreeOutOfRange {
            degree: k,
            dim: grid.dim(),
        });
    }
    let mut c = Cochain::zeros(grid, bundle.rank(), k);
    if amplitude != 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = amplitude.abs();
        for x in c.values_mut() {
            *x = rng.random_range(-a..=a);
        }
    }
    Ok(c)
}

/// Random components in every degree; degree k uses seed `seed·(n+1) + k`.
pub fn random_graded(grid: &TorusGrid, bundle: &BundleData, seed: u64, amplitude: f64) -> Result<GradedCochain> {
    let n = grid.dim();
    let mut g = GradedCochain::zero(n, bundle.rank());
    for k in 0..=n {
        let s = seed.wrapping_mul(n as u64 + 1).wrapping_add(k as u64);
        g.set(random_cochain(grid, bundle, k, s, amplitude)?);
    }
    Ok(g)
}

/// Diagonal Hodge weight `dual_volume / primal_volume`.
pub fn hodge_weight(grid: &TorusGrid, cell: &Cell) -> f64 {
    let (primal, dual) = grid.volumes(cell);
    dual / primal
}

fn mask_weight(grid: &TorusGrid, mask: u32) -> (f64, f64) {
    let (primal, dual) = grid.mask_volumes(mask);
    (primal, dual / primal)
}

/// Weighted pairing of two cochains of the same degree.
pub fn inner_cochain(grid: &TorusGrid, bundle: &BundleData, a: &Cochain, b: &Cochain) -> Result<f64> {
    a.ensure_fits(grid, bundle)?;
    b.ensure_fits(grid, bundle)?;
    if a.degree() != b.degree() {
        return Err(Error::Mismatch(format!(
            "pairing degree {} with degree {}",
            a.degree(),
            b.degree()
        )));
    }
    let k = a.degree();
    let m = bundle.rank();
    let nv = grid.vertex_count();
    let mut total = 0.0;
    for (p, &mask) in grid.axis_masks(k).iter().enumerate() {
        let (primal, w) = mask_weight(grid, mask);
        let scale = primal * w;
        let mut sub = 0.0;
        for v in 0..nv {
            let id = p * nv + v;
            let (x, y) = (a.value(id), b.value(id));
            let h = bundle.metric(v);
            let mut s = 0.0;
            for c in 0..m {
                let mut hy = 0.0;
                for r in 0..m {
                    hy += h[(r, c)] * y[r];
                }
                s += x[c] * hy;
            }
            sub += s;
        }
        total += scale * sub;
    }
    Ok(total)
}

/// `⟨⟨A, B⟩⟩ = Σ_k ⟨A_k, B_k⟩_k`.
pub fn inner(grid: &TorusGrid, bundle: &BundleData, a: &GradedCochain, b: &GradedCochain) -> Result<f64> {
    if a.dim() != grid.dim() || b.dim() != grid.dim() {
        return Err(Error::Mismatch("graded cochain dimension differs from grid".into()));
    }
    if a.rank() != bundle.rank() || b.rank() != bundle.rank() {
        return Err(Error::Mismatch("graded cochain rank differs from bundle".into()));
    }
    let mut total = 0.0;
    for k in 0..=grid.dim() {
        if let (Some(x), Some(y)) = (a.component(k), b.component(k)) {
            total += inner_cochain(grid, bundle, x, y)?;
        }
    }
    Ok(total)
}

pub fn norm_cochain(grid: &TorusGrid, bundle: &BundleData, a: &Cochain) -> Result<f64> {
    Ok(inner_cochain(grid, bundle, a, a)?.max(0.0).sqrt())
}

pub fn norm(grid: &TorusGrid, bundle: &BundleData, a: &GradedCochain) -> Result<f64> {
    Ok(inner(grid, bundle, a, a)?.max(0.0).sqrt())
}

#[inline]
fn mat_vec_acc(m: &Mat, x: &[f64], scale: f64, out: &mut [f64]) {
    let n = out.len();
    for c in 0..n {
        let xc = scale * x[c];
        if xc != 0.0 {
            for r in 0..n {
                out[r] += m[(r, c)] * xc;
            }
        }
    }
}

#[inline]
fn mat_t_vec_acc(m: &Mat, x: &[f64], scale: f64, out: &mut [f64]) {
    let n = out.len();
    for c in 0..n {
        let mut s = 0.0;
        for r in 0..n {
            s += m[(r, c)] * x[r];
        }
        out[c] += scale * s;
    }
}

/// Covariant coboundary, degree k to k+1.
pub fn d_cov(grid: &TorusGrid, bundle: &BundleData, alpha: &Cochain) -> Result<Cochain> {
    alpha.ensure_fits(grid, bundle)?;
    let k = alpha.degree();
    if k >= grid.dim() {
        return Err(Error::DegreeOutOfRange {
            degree: k,
            dim: grid.dim(),
        });
    }
    let m = bundle.rank();
    let mut out = Cochain::zeros(grid, m, k + 1);
    out.values
        .par_chunks_mut(m)
        .enumerate()
        .for_each(|(id, y)| {
            let (mask, v) = grid.split_id(k + 1, id);
            let mut j = 0;
            for axis in 0..grid.dim() {
                if mask & (1 << axis) == 0 {
                    continue;
                }
                let face = mask & !(1 << axis);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                let far = grid.cell_id_from_mask(face, grid.shift(v, axis, 1));
                let near = grid.cell_id_from_mask(face, v);
                let u_inv = bundle.transport_inverse(grid.edge_id(v, axis));
                mat_vec_acc(u_inv, alpha.value(far), sign, y);
                for (yr, xr) in y.iter_mut().zip(alpha.value(near)) {
                    *yr -= sign * xr;
                }
                j += 1;
            }
        });
    Ok(out)
}

/// Adjoint of [`d_cov`], degree k to k−1.
pub fn delta_cov(grid: &TorusGrid, bundle: &BundleData, beta: &Cochain) -> Result<Cochain> {
    beta.ensure_fits(grid, bundle)?;
    let k = beta.degree();
    if k == 0 {
        return Err(Error::DegreeOutOfRange {
            degree: 0,
            dim: grid.dim(),
        });
    }
    let m = bundle.rank();
    let mut out = Cochain::zeros(grid, m, k - 1);
    out.values
        .par_chunks_mut(m)
        .enumerate()
        .for_each(|(id, y)| {
            let (mask, v) = grid.split_id(k - 1, id);
            let dual_f = grid.mask_volumes(mask).1;
            let mut acc = vec![0.0; m];
            for axis in 0..grid.dim() {
                if mask & (1 << axis) != 0 {
                    continue;
                }
                let coface = mask | (1 << axis);
                let j = (coface & ((1u32 << axis) - 1)).count_ones();
                let far_sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                let dual_c = grid.mask_volumes(coface).1;

                // this face is the near face of the coface anchored at v
                let near = grid.cell_id_from_mask(coface, v);
                mat_t_vec_acc(bundle.metric(v), beta.value(near), -far_sign * dual_c, &mut acc);

                // and the far face of the coface anchored one step back
                let w = grid.shift(v, axis, -1);
                let far = grid.cell_id_from_mask(coface, w);
                let mut hb = vec![0.0; m];
                mat_t_vec_acc(bundle.metric(w), beta.value(far), 1.0, &mut hb);
                mat_t_vec_acc(
                    bundle.transport_inverse(grid.edge_id(w, axis)),
                    &hb,
                    far_sign * dual_c,
                    &mut acc,
                );
            }
            let x = bundle
                .metric_cholesky(v)
                .solve(&DVector::from_vec(acc));
            for (yr, xr) in y.iter_mut().zip(x.iter()) {
                *yr = xr / dual_f;
            }
        });
    Ok(out)
}

fn check_target(grid: &TorusGrid, bundle: &BundleData, k: usize, g: &GradedCochain) -> Result<()> {
    if k > grid.dim() {
        return Err(Error::DegreeOutOfRange {
            degree: k,
            dim: grid.dim(),
        });
    }
    if g.dim() != grid.dim() || g.rank() != bundle.rank() {
        return Err(Error::Mismatch(
            "graded cochain does not match grid dimension or bundle rank".into(),
        ));
    }
    Ok(())
}

/// `d∇[k]`: `d∇` on every degree except k−1, whose image is zeroed.
pub fn masked_d(k: usize, grid: &TorusGrid, bundle: &BundleData, g: &GradedCochain) -> Result<GradedCochain> {
    check_target(grid, bundle, k, g)?;
    let mut out = GradedCochain::zero(grid.dim(), bundle.rank());
    for i in 0..grid.dim() {
        if k >= 1 && i == k - 1 {
            continue;
        }
        if let Some(c) = g.component(i) {
            out.set(d_cov(grid, bundle, c)?);
        }
    }
    Ok(out)
}

/// `δ∇[k]`: `δ∇` on every degree except k, whose image is zeroed.
pub fn masked_delta(k: usize, grid: &TorusGrid, bundle: &BundleData, g: &GradedCochain) -> Result<GradedCochain> {
    check_target(grid, bundle, k, g)?;
    let mut out = GradedCochain::zero(grid.dim(), bundle.rank());
    for i in 1..=grid.dim() {
        if i == k {
            continue;
        }
        if let Some(c) = g.component(i) {
            out.set(delta_cov(grid, bundle, c)?);
        }
    }
    Ok(out)
}

/// `d∇ ∘ d∇`, degree k to k+2.
pub fn curvature_action(grid: &TorusGrid, bundle: &BundleData, alpha: &Cochain) -> Result<Cochain> {
    if alpha.degree() + 2 > grid.dim() {
        return Err(Error::DegreeOutOfRange {
            degree: alpha.degree(),
            dim: grid.dim(),
        });
    }
    d_cov(grid, bundle, &d_cov(grid, bundle, alpha)?)
}

/// Constant cochain: on every cell spanning `axes`, the value
/// `primal_volume · fiber(axes)` (the integral of a constant-coefficient form).
pub fn constant_cochain<F>(grid: &TorusGrid, rank: usize, k: usize, fiber: F) -> Result<Cochain>
where
    F: Fn(&[usize]) -> Vec<f64>,
{
    let mut c = Cochain::zeros(grid, rank, k);
    let nv = grid.vertex_count();
    for (p, &mask) in grid.axis_masks(k).iter().enumerate() {
        let axes = crate::mesh::mask_axes(mask);
        let val = fiber(&axes);
        if val.len() != rank {
            return Err(Error::RankMismatch(format!(
                "constant fiber has length {}, expected {rank}",
                val.len()
            )));
        }
        let primal = grid.mask_volumes(mask).0;
        for v in 0..nv {
            for (x, f) in c.value_mut(p * nv + v).iter_mut().zip(&val) {
                *x = primal * f;
            }
        }
    }
    Ok(c)
}
