//! Vector bundles over a [`TorusGrid`].
//!
//! A bundle of rank m stores an SPD metric `H_v` per vertex and a transport
//! matrix `U_e` per edge, mapping the fiber at the tail of `e` to the fiber at
//! its head. Traversing an edge backwards applies the stored inverse, so
//! `U_{-e} = U_e^{-1}` holds exactly.
//!
//! Gauge transformations act by `U'_e = s_head^{-1} U_e s_tail`,
//! `H'_v = s_v^T H_v s_v`, and on fiber values by `v ↦ s^{-1} v`.
//!
//! The endomorphism bundle `End(E) = E* ⊗ E` stores m×m fiber matrices
//! flattened row-major (entry `(r, c)` at `r·m + c`). Transport acts by
//! conjugation `A ↦ U A U^{-1}` and the induced metric is
//! `⟨A, B⟩ = tr(H^{-1} A^T H B)`, which is the Frobenius pairing when `H = I`.

use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calculus::Cochain;
use crate::error::{Error, Result};
use crate::mesh::TorusGrid;

pub type Mat = DMatrix<f64>;

/// Default condition-number ceiling for gauge matrices.
pub const DEFAULT_GAUGE_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct BundleData {
    rank: usize,
    metric: Vec<Mat>,
    metric_chol: Vec<Cholesky<f64, Dyn>>,
    transport: Vec<Mat>,
    transport_inv: Vec<Mat>,
}

/// One step of a lattice path: an edge traversed forwards or backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub edge: usize,
    pub forward: bool,
}

impl Step {
    pub fn forward(edge: usize) -> Self {
        Self {
            edge,
            forward: true,
        }
    }

    pub fn backward(edge: usize) -> Self {
        Self {
            edge,
            forward: false,
        }
    }

    pub fn reversed(self) -> Self {
        Self {
            edge: self.edge,
            forward: !self.forward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphismReport {
    pub naturality_residual: f64,
    pub isometry_residual: f64,
    pub inclusion_ok: bool,
}

impl BundleData {
    /// Builds a bundle from explicit per-vertex metrics and per-edge transports.
    pub fn new(grid: &TorusGrid, rank: usize, metric: Vec<Mat>, transport: Vec<Mat>) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidBundle("rank must be at least 1".into()));
        }
        if metric.len() != grid.vertex_count() || transport.len() != grid.edge_count() {
            return Err(Error::InvalidBundle(format!(
                "expected {} metrics and {} transports, got {} and {}",
                grid.vertex_count(),
                grid.edge_count(),
                metric.len(),
                transport.len()
            )));
        }
        if let Some(bad) = metric
            .iter()
            .chain(&transport)
            .find(|m| m.nrows() != rank || m.ncols() != rank)
        {
            return Err(Error::RankMismatch(format!(
                "found a {}x{} matrix in a rank-{rank} bundle",
                bad.nrows(),
                bad.ncols()
            )));
        }

        let mut metric_chol = Vec::with_capacity(metric.len());
        for (v, h) in metric.iter().enumerate() {
            let asym = (h - h.transpose()).norm();
            if asym > 1e-12 * h.norm().max(1.0) {
                return Err(Error::NotPositiveDefinite { vertex: v });
            }
            let min_eig = h.clone().symmetric_eigenvalues().min();
            if !(min_eig > 0.0) {
                return Err(Error::NotPositiveDefinite { vertex: v });
            }
            let chol = Cholesky::new(h.clone()).ok_or(Error::NotPositiveDefinite { vertex: v })?;
            metric_chol.push(chol);
        }

        let transport_inv = transport
            .iter()
            .enumerate()
            .map(|(e, u)| {
                u.clone().try_inverse().ok_or_else(|| {
                    Error::InvalidBundle(format!("transport on edge {e} is singular"))
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            rank,
            metric,
            metric_chol,
            transport,
            transport_inv,
        })
    }

    /// Identity metric and identity transports.
    pub fn trivial(grid: &TorusGrid, rank: usize) -> Result<Self> {
        let id = Mat::identity(rank, rank);
        Self::new(
            grid,
            rank,
            vec![id.clone(); grid.vertex_count()],
            vec![id; grid.edge_count()],
        )
    }

    /// Identity metric with the given transports.
    pub fn with_transports(grid: &TorusGrid, rank: usize, transport: Vec<Mat>) -> Result<Self> {
        Self::new(
            grid,
            rank,
            vec![Mat::identity(rank, rank); grid.vertex_count()],
            transport,
        )
    }

    /// Trivial bundle transformed by a seeded random orthogonal gauge: flat,
    /// metric-compatible, identity metric.
    pub fn pure_gauge(grid: &TorusGrid, rank: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gauge: Vec<Mat> = (0..grid.vertex_count())
            .map(|_| random_orthogonal(&mut rng, rank))
            .collect();
        Self::trivial(grid, rank)?.gauge_transform(grid, &gauge, DEFAULT_GAUGE_CONDITION_LIMIT)
    }

    /// Independent orthogonal transports `exp(strength · A_e)` with `A_e`
    /// skew with entries uniform in [-1, 1]. Generically not flat.
    pub fn random_orthogonal(grid: &TorusGrid, rank: usize, seed: u64, strength: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let transport = (0..grid.edge_count())
            .map(|_| (random_skew(&mut rng, rank) * strength).exp())
            .collect();
        Self::with_transports(grid, rank, transport)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn vertex_count(&self) -> usize {
        self.metric.len()
    }

    pub fn edge_count(&self) -> usize {
        self.transport.len()
    }

    pub fn metric(&self, vertex: usize) -> &Mat {
        &self.metric[vertex]
    }

    pub fn metrics(&self) -> &[Mat] {
        &self.metric
    }

    pub(crate) fn metric_cholesky(&self, vertex: usize) -> &Cholesky<f64, Dyn> {
        &self.metric_chol[vertex]
    }

    /// `U_e`: tail fiber to head fiber.
    pub fn transport(&self, edge: usize) -> &Mat {
        &self.transport[edge]
    }

    pub fn transports(&self) -> &[Mat] {
        &self.transport
    }

    /// `U_e^{-1}`: head fiber to tail fiber.
    pub fn transport_inverse(&self, edge: usize) -> &Mat {
        &self.transport_inv[edge]
    }

    pub fn step_matrix(&self, step: Step) -> &Mat {
        if step.forward {
            &self.transport[step.edge]
        } else {
            &self.transport_inv[step.edge]
        }
    }

    pub fn matches(&self, grid: &TorusGrid) -> bool {
        self.metric.len() == grid.vertex_count() && self.transport.len() == grid.edge_count()
    }

    pub(crate) fn ensure_matches(&self, grid: &TorusGrid) -> Result<()> {
        if self.matches(grid) {
            Ok(())
        } else {
            Err(Error::Mismatch(format!(
                "bundle has {} vertices/{} edges, grid has {}/{}",
                self.metric.len(),
                self.transport.len(),
                grid.vertex_count(),
                grid.edge_count()
            )))
        }
    }

    /// Smallest eigenvalue of the metric over all vertices.
    pub fn min_metric_eigenvalue(&self) -> f64 {
        self.metric
            .iter()
            .map(|h| h.clone().symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min)
    }

    /// `max_e ‖U_e^T H_head U_e − H_tail‖_F`; zero for metric-compatible bundles.
    pub fn compatibility_residual(&self, grid: &TorusGrid) -> f64 {
        (0..self.transport.len())
            .map(|e| {
                let (tail, head, _) = grid.edge_endpoints(e);
                let u = &self.transport[e];
                (u.transpose() * &self.metric[head] * u - &self.metric[tail]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Applies a gauge `s_v` per vertex. Gauges whose 2-norm condition number
    /// exceeds `condition_limit` are rejected.
    pub fn gauge_transform(&self, grid: &TorusGrid, gauge: &[Mat], condition_limit: f64) -> Result<Self> {
        self.ensure_matches(grid)?;
        if gauge.len() != self.vertex_count() {
            return Err(Error::Mismatch(format!(
                "gauge has {} entries, expected {}",
                gauge.len(),
                self.vertex_count()
            )));
        }
        let mut inverses = Vec::with_capacity(gauge.len());
        for (v, s) in gauge.iter().enumerate() {
            if s.nrows() != self.rank || s.ncols() != self.rank {
                return Err(Error::RankMismatch(format!(
                    "gauge at vertex {v} is {}x{}, bundle rank {}",
                    s.nrows(),
                    s.ncols(),
                    self.rank
                )));
            }
            let condition = condition_number(s);
            if !(condition <= condition_limit) {
                return Err(Error::SingularGauge { vertex: v, condition });
            }
            inverses.push(
                s.clone()
                    .try_inverse()
                    .ok_or(Error::SingularGauge { vertex: v, condition })?,
            );
        }
        let metric = self
            .metric
            .iter()
            .zip(gauge)
            .map(|(h, s)| {
                let m = s.transpose() * h * s;
                (&m + m.transpose()) * 0.5
            })
            .collect();
        let transport = self
            .transport
            .iter()
            .enumerate()
            .map(|(e, u)| {
                let (tail, head, _) = grid.edge_endpoints(e);
                &inverses[head] * u * &gauge[tail]
            })
            .collect();
        Self::new(grid, self.rank, metric, transport)
    }

    /// Ordered product `U_{e_L} ··· U_{e_1}` along a consecutive path.
    pub fn transport_path(&self, grid: &TorusGrid, path: &[Step]) -> Result<Mat> {
        let mut acc = Mat::identity(self.rank, self.rank);
        let mut at: Option<usize> = None;
        for (i, &step) in path.iter().enumerate() {
            if step.edge >= self.transport.len() {
                return Err(Error::InvalidCell(format!("edge {} out of range", step.edge)));
            }
            let (tail, head, _) = grid.edge_endpoints(step.edge);
            let (from, to) = if step.forward { (tail, head) } else { (head, tail) };
            if at.is_some_and(|v| v != from) {
                return Err(Error::BrokenPath { step: i });
            }
            acc = self.step_matrix(step) * acc;
            at = Some(to);
        }
        Ok(acc)
    }

    /// Transport around the boundary loop of a 2-cell spanning axes `a < b`,
    /// starting at its anchor: `+a`, `+b`, `-a`, `-b`.
    pub fn plaquette_holonomy(&self, grid: &TorusGrid, cell: &crate::mesh::Cell) -> Result<Mat> {
        if cell.degree() != 2 {
            return Err(Error::DegreeOutOfRange {
                degree: cell.degree(),
                dim: grid.dim(),
            });
        }
        grid.locate(cell)?;
        let v = grid.vertex_index(&cell.base);
        let path = plaquette_loop(grid, v, cell.axes[0], cell.axes[1]);
        self.transport_path(grid, &path)
    }

    /// The endomorphism bundle `E* ⊗ E` of rank m².
    pub fn induced_end_bundle(&self, grid: &TorusGrid) -> Result<Self> {
        let metric = self
            .metric_chol
            .iter()
            .zip(&self.metric)
            .map(|(chol, h)| {
                let g = h.kronecker(&chol.inverse());
                (&g + g.transpose()) * 0.5
            })
            .collect();
        let transport = self
            .transport
            .iter()
            .zip(&self.transport_inv)
            .map(|(u, ui)| u.kronecker(&ui.transpose()))
            .collect();
        Self::new(grid, self.rank * self.rank, metric, transport)
    }
}

/// Loop around the plaquette at `vertex` spanned by axes `a` then `b`.
pub fn plaquette_loop(grid: &TorusGrid, vertex: usize, a: usize, b: usize) -> [Step; 4] {
    let va = grid.shift(vertex, a, 1);
    let vb = grid.shift(vertex, b, 1);
    [
        Step::forward(grid.edge_id(vertex, a)),
        Step::forward(grid.edge_id(va, b)),
        Step::backward(grid.edge_id(vb, a)),
        Step::backward(grid.edge_id(vertex, b)),
    ]
}

/// Compares a vertex-wise bundle map `σ: E → F` against the connection,
/// the metrics, and a pair of predicates on sample cochains.
pub fn check_morphism(
    grid: &TorusGrid,
    sigma: &[Mat],
    b_e: &BundleData,
    b_f: &BundleData,
    u_pred: &dyn Fn(&Cochain) -> bool,
    v_pred: &dyn Fn(&Cochain) -> bool,
    samples: &[Cochain],
) -> Result<MorphismReport> {
    b_e.ensure_matches(grid)?;
    b_f.ensure_matches(grid)?;
    if sigma.len() != grid.vertex_count() {
        return Err(Error::Mismatch(format!(
            "morphism has {} entries, expected {}",
            sigma.len(),
            grid.vertex_count()
        )));
    }
    if let Some(s) = sigma
        .iter()
        .find(|s| s.nrows() != b_f.rank() || s.ncols() != b_e.rank())
    {
        return Err(Error::RankMismatch(format!(
            "morphism matrix is {}x{}, expected {}x{}",
            s.nrows(),
            s.ncols(),
            b_f.rank(),
            b_e.rank()
        )));
    }

    let naturality_residual = (0..grid.edge_count())
        .map(|e| {
            let (tail, head, _) = grid.edge_endpoints(e);
            (&sigma[head] * b_e.transport(e) - b_f.transport(e) * &sigma[tail]).norm()
        })
        .fold(0.0, f64::max);
    let isometry_residual = (0..grid.vertex_count())
        .map(|v| (sigma[v].transpose() * b_f.metric(v) * &sigma[v] - b_e.metric(v)).norm())
        .fold(0.0, f64::max);

    let mut inclusion_ok = true;
    for sample in samples.iter().filter(|s| u_pred(s)) {
        let mapped = sample.map_fibers(grid, b_f.rank(), |v, x| &sigma[v] * x)?;
        if !v_pred(&mapped) {
            inclusion_ok = false;
            break;
        }
    }

    Ok(MorphismReport {
        naturality_residual,
        isometry_residual,
        inclusion_ok,
    })
}

/// Connection descriptions accepted by configuration files.
#[derive(Debug, Clone, PartialEq)]
pub enum ConnectionSpec {
    Trivial,
    PureGauge { seed: u64 },
    RandomOrthogonal { seed: u64, strength: f64 },
    File(String),
}

impl FromStr for ConnectionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || {
            Error::Parse(format!(
                "malformed connection spec {s:?}; expected \"trivial\", \"pure-gauge:<seed>\", \
                 \"random-orthogonal:<seed>:<strength>\" or \"file:<path>\""
            ))
        };
        match parts.as_slice() {
            ["trivial"] => Ok(Self::Trivial),
            ["pure-gauge", seed] => Ok(Self::PureGauge {
                seed: seed.parse().map_err(|_| bad())?,
            }),
            ["random-orthogonal", seed, strength] => {
                let strength: f64 = strength.parse().map_err(|_| bad())?;
                if !strength.is_finite() {
                    return Err(bad());
                }
                Ok(Self::RandomOrthogonal {
                    seed: seed.parse().map_err(|_| bad())?,
                    strength,
                })
            }
            ["file", ..] if s.len() > 5 => Ok(Self::File(s.trim()[5..].to_string())),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for ConnectionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Trivial => write!(f, "trivial"),
            Self::PureGauge { seed } => write!(f, "pure-gauge:{seed}"),
            Self::RandomOrthogonal { seed, strength } => {
                write!(f, "random-orthogonal:{seed}:{strength}")
            }
            Self::File(p) => write!(f, "file:{p}"),
        }
    }
}

impl ConnectionSpec {
    /// Builds the bundle of the given rank; file specs read per-edge matrices.
    pub fn build(&self, grid: &TorusGrid, rank: usize) -> Result<BundleData> {
        match self {
            Self::Trivial => BundleData::trivial(grid, rank),
            Self::PureGauge { seed } => BundleData::pure_gauge(grid, rank, *seed),
            Self::RandomOrthogonal { seed, strength } => {
                BundleData::random_orthogonal(grid, rank, *seed, *strength)
            }
            Self::File(path) => {
                let transport = crate::io::read_edge_matrices(path, grid, rank)?;
                BundleData::with_transports(grid, rank, transport)
            }
        }
    }
}

pub fn random_skew<R: Rng>(rng: &mut R, m: usize) -> Mat {
    let mut a = Mat::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let x: f64 = rng.random_range(-1.0..=1.0);
            a[(i, j)] = x;
            a[(j, i)] = -x;
        }
    }
    a
}

/// Orthogonal factor of a QR decomposition of a random matrix, sign-fixed.
pub fn random_orthogonal<R: Rng>(rng: &mut R, m: usize) -> Mat {
    loop {
        let a = Mat::from_fn(m, m, |_, _| rng.random_range(-1.0..=1.0));
        let qr = a.qr();
        let r = qr.r();
        if (0..m).any(|i| r[(i, i)].abs() < 1e-3) {
            continue;
        }
        let mut q = qr.q();
        for j in 0..m {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        return q;
    }
}

/// Random matrix with singular values in `[1/spread, spread]`-ish range.
pub fn random_well_conditioned<R: Rng>(rng: &mut R, m: usize, spread: f64) -> Mat {
    let q1 = random_orthogonal(rng, m);
    let q2 = random_orthogonal(rng, m);
    let d = Mat::from_diagonal(&nalgebra::DVector::from_fn(m, |_, _| {
        spread.powf(rng.random_range(-1.0..=1.0))
    }));
    q1 * d * q2
}

pub fn condition_number(s: &Mat) -> f64 {
    let sv = s.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2() -> TorusGrid {
        TorusGrid::new(2, &[4, 4], &[1.0, 1.0]).unwrap()
    }

    fn assert_identity(m: &Mat, tol: f64) {
        let id = Mat::identity(m.nrows(), m.ncols());
        assert!((m - id).norm() <= tol, "not identity: {m}");
    }

    #[test]
    fn trivial_bundle_is_flat_and_compatible() {
        let g = t2();
        let b = BundleData::trivial(&g, 4).unwrap();
        for c in g.cells(2) {
            assert_eq!(b.plaquette_holonomy(&g, &c).unwrap(), Mat::identity(4, 4));
        }
        let g3 = TorusGrid::new(3, &[3, 3, 3], &[1.0; 3]).unwrap();
        assert_eq!(BundleData::trivial(&g3, 2).unwrap().compatibility_residual(&g3), 0.0);
    }

    #[test]
    fn identity_gauge_is_noop() {
        let g = t2();
        let b = BundleData::random_orthogonal(&g, 3, 1, 0.5).unwrap();
        let id = vec![Mat::identity(3, 3); g.vertex_count()];
        let b2 = b.gauge_transform(&g, &id, DEFAULT_GAUGE_CONDITION_LIMIT).unwrap();
        for e in 0..g.edge_count() {
            assert_eq!(b.transport(e), b2.transport(e));
        }
        for v in 0..g.vertex_count() {
            assert_eq!(b.metric(v), b2.metric(v));
        }
    }

    #[test]
    fn pure_gauge_has_trivial_holonomy() {
        let g = TorusGrid::new(3, &[3, 4, 3], &[1.0, 0.5, 2.0]).unwrap();
        let b = BundleData::pure_gauge(&g, 3, 42).unwrap();
        for c in g.cells(2) {
            assert_identity(&b.plaquette_holonomy(&g, &c).unwrap(), 1e-12);
        }
        assert!(b.compatibility_residual(&g) < 1e-12);
    }

    #[test]
    fn singular_gauge_rejected() {
        let g = t2();
        let b = BundleData::trivial(&g, 2).unwrap();
        let mut gauge = vec![Mat::identity(2, 2); g.vertex_count()];
        gauge[3] = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            b.gauge_transform(&g, &gauge, 1e8),
            Err(Error::SingularGauge { vertex: 3, .. })
        ));
    }

    #[test]
    fn path_examples() {
        let g = t2();
        let b = BundleData::random_orthogonal(&g, 2, 7, 1.0).unwrap();
        assert_eq!(b.transport_path(&g, &[]).unwrap(), Mat::identity(2, 2));
        let e = g.edge_id(5, 1);
        let back = b
            .transport_path(&g, &[Step::forward(e), Step::backward(e)])
            .unwrap();
        assert_identity(&back, 1e-14);

        let t = BundleData::trivial(&g, 2).unwrap();
        let lp = plaquette_loop(&g, 0, 0, 1);
        assert_eq!(t.transport_path(&g, &lp).unwrap(), Mat::identity(2, 2));
    }

    #[test]
    fn broken_path_rejected() {
        let g = t2();
        let b = BundleData::trivial(&g, 1).unwrap();
        let p = [Step::forward(g.edge_id(0, 0)), Step::forward(g.edge_id(0, 1))];
        assert!(matches!(b.transport_path(&g, &p), Err(Error::BrokenPath { step: 1 })));
    }

    #[test]
    fn holonomy_matches_explicit_product() {
        let g = TorusGrid::new(2, &[3, 3], &[1.0, 1.0]).unwrap();
        let b = BundleData::random_orthogonal(&g, 2, 9, 0.7).unwrap();
        for c in g.cells(2) {
            let v = g.vertex_index(&c.base);
            let (a, bx) = (c.axes[0], c.axes[1]);
            let u1 = b.transport(g.edge_id(v, a));
            let u2 = b.transport(g.edge_id(g.shift(v, a, 1), bx));
            let u3 = b.transport(g.edge_id(g.shift(v, bx, 1), a)).clone().try_inverse().unwrap();
            let u4 = b.transport(g.edge_id(v, bx)).clone().try_inverse().unwrap();
            let expected = u4 * u3 * u2 * u1;
            let hol = b.plaquette_holonomy(&g, &c).unwrap();
            assert!((hol - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn end_bundle_conjugates() {
        let g = t2();
        let b = BundleData::trivial(&g, 2).unwrap();
        let end = b.induced_end_bundle(&g).unwrap();
        assert_eq!(end.rank(), 4);
        for e in 0..g.edge_count() {
            assert_eq!(end.transport(e), &Mat::identity(4, 4));
        }

        let b = BundleData::random_orthogonal(&g, 3, 3, 1.0).unwrap();
        let end = b.induced_end_bundle(&g).unwrap();
        let id = nalgebra::DVector::from_row_slice(Mat::identity(3, 3).transpose().as_slice());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Mat::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let a_vec = nalgebra::DVector::from_row_slice(a.transpose().as_slice());
        let trace_of = |v: &nalgebra::DVector<f64>| v[0] + v[4] + v[8];
        for e in 0..g.edge_count() {
            assert!((end.transport(e) * &id - &id).norm() < 1e-12);
            let moved = end.transport(e) * &a_vec;
            assert!((trace_of(&moved) - a.trace()).abs() < 1e-12);
            // row-major flattening of U A U^{-1}
            let direct = b.transport(e) * &a * b.transport_inverse(e);
            let direct_vec = nalgebra::DVector::from_row_slice(direct.transpose().as_slice());
            assert!((moved - direct_vec).norm() < 1e-12);
        }
    }

    #[test]
    fn end_metric_reduces_to_frobenius() {
        let g = t2();
        let end = BundleData::trivial(&g, 2).unwrap().induced_end_bundle(&g).unwrap();
        assert_eq!(end.metric(0), &Mat::identity(4, 4));
    }

    #[test]
    fn end_metric_general_form() {
        let g = t2();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gauge: Vec<Mat> = (0..g.vertex_count())
            .map(|_| random_well_conditioned(&mut rng, 2, 2.0))
            .collect();
        let b = BundleData::trivial(&g, 2)
            .unwrap()
            .gauge_transform(&g, &gauge, 1e6)
            .unwrap();
        let end = b.induced_end_bundle(&g).unwrap();
        let h = b.metric(0);
        let hinv = h.clone().try_inverse().unwrap();
        let a = Mat::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let c = Mat::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let direct = (hinv * a.transpose() * h * &c).trace();
        let av = nalgebra::DVector::from_row_slice(a.transpose().as_slice());
        let cv = nalgebra::DVector::from_row_slice(c.transpose().as_slice());
        let via = (av.transpose() * end.metric(0) * cv)[(0, 0)];
        assert!((direct - via).abs() < 1e-12);
        // metric-compatible input stays compatible
        assert!(end.compatibility_residual(&g) < 1e-10);
    }

    #[test]
    fn morphism_examples() {
        let g = t2();
        let b = BundleData::random_orthogonal(&g, 2, 2, 0.4).unwrap();
        let id = vec![Mat::identity(2, 2); g.vertex_count()];
        let yes = |_: &Cochain| true;
        let r = check_morphism(&g, &id, &b, &b, &yes, &yes, &[]).unwrap();
        assert_eq!(r.naturality_residual, 0.0);
        assert_eq!(r.isometry_residual, 0.0);
        assert!(r.inclusion_ok);

        let t = BundleData::trivial(&g, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthogonal(&mut rng, 3);
        let sigma = vec![q; g.vertex_count()];
        let r = check_morphism(&g, &sigma, &t, &t, &yes, &yes, &[]).unwrap();
        assert!(r.isometry_residual < 1e-14);
        assert!(r.naturality_residual < 1e-14);

        for m in 1..=4 {
            let t = BundleData::trivial(&g, m).unwrap();
            let sigma = vec![Mat::identity(m, m) * 2.0; g.vertex_count()];
            let r = check_morphism(&g, &sigma, &t, &t, &yes, &yes, &[]).unwrap();
            assert!((r.isometry_residual - 3.0 * (m as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn morphism_rank_mismatch() {
        let g = t2();
        let e = BundleData::trivial(&g, 2).unwrap();
        let f = BundleData::trivial(&g, 3).unwrap();
        let sigma = vec![Mat::identity(2, 2); g.vertex_count()];
        let yes = |_: &Cochain| true;
        assert!(matches!(
            check_morphism(&g, &sigma, &e, &f, &yes, &yes, &[]),
            Err(Error::RankMismatch(_))
        ));
    }

    #[test]
    fn connection_spec_parsing() {
        assert_eq!("trivial".parse::<ConnectionSpec>().unwrap(), ConnectionSpec::Trivial);
        assert_eq!(
            "pure-gauge:12".parse::<ConnectionSpec>().unwrap(),
            ConnectionSpec::PureGauge { seed: 12 }
        );
        assert_eq!(
            "random-orthogonal:3:0.25".parse::<ConnectionSpec>().unwrap(),
            ConnectionSpec::RandomOrthogonal {
                seed: 3,
                strength: 0.25
            }
        );
        assert_eq!(
            "file:a/b.csv".parse::<ConnectionSpec>().unwrap(),
            ConnectionSpec::File("a/b.csv".into())
        );
        for bad in ["", "flat", "pure-gauge", "pure-gauge:x", "random-orthogonal:1", "file:"] {
            assert!(bad.parse::<ConnectionSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn non_spd_metric_rejected() {
        let g = t2();
        let mut metric = vec![Mat::identity(2, 2); g.vertex_count()];
        metric[2] = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let tr = vec![Mat::identity(2, 2); g.edge_count()];
        assert!(matches!(
            BundleData::new(&g, 2, metric, tr),
            Err(Error::NotPositiveDefinite { vertex: 2 })
        ));
    }
}
