//! Periodic cubical complex on the flat torus.
//!
//! A `TorusGrid` describes `T^n = ∏ R/(N_i h_i)` cut into `∏ N_i` axis-aligned
//! boxes. A k-cell is identified by the sorted set of axes it spans and the
//! vertex at its minimal corner (the *anchor*). All bundle-valued data of a
//! cell is attached at that anchor.
//!
//! Cells of a fixed degree are ordered lexicographically by `(axes, base)`:
//! the axis subsets of size k in lexicographic order, and for each subset the
//! base vertices in row-major order (axis 0 most significant). The position
//! of a cell in that ordering is its *cell id*.
//!
//! Orientation convention for the boundary: for a cell spanning
//! `s_0 < s_1 < ... < s_{k-1}`, the face omitting `s_j` on the far side
//! (base shifted by `+e_{s_j}`) carries sign `(-1)^j`, and the near face
//! carries `(-1)^{j+1}`.

use crate::error::{Error, Result};

/// Largest supported dimension; axis sets are stored as bitmasks.
pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    /// Spanned axes, strictly increasing (0-based).
    pub axes: Vec<usize>,
    /// Multi-index of the anchor vertex, reduced modulo the grid sizes.
    pub base: Vec<usize>,
}

impl Cell {
    pub fn degree(&self) -> usize {
        self.axes.len()
    }

    /// The vertex fiber values of this cell attach to.
    pub fn anchor(&self) -> &[usize] {
        &self.base
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    n: usize,
    sizes: Vec<usize>,
    spacings: Vec<f64>,
    strides: Vec<usize>,
    vertex_count: usize,
    /// `subsets[k]` lists the k-element axis masks in lexicographic order.
    subsets: Vec<Vec<u32>>,
    /// Position of each mask inside `subsets[popcount(mask)]`.
    subset_pos: Vec<usize>,
}

impl TorusGrid {
    pub fn new(n: usize, sizes: &[usize], spacings: &[f64]) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::InvalidGrid(format!(
                "dimension must be in 1..={MAX_DIM}, got {n}"
            )));
        }
        if sizes.len() != n || spacings.len() != n {
            return Err(Error::InvalidGrid(format!(
                "expected {n} sizes and {n} spacings, got {} and {}",
                sizes.len(),
                spacings.len()
            )));
        }
        if let Some((i, &s)) = sizes.iter().enumerate().find(|(_, &s)| s < 3) {
            return Err(Error::InvalidGrid(format!(
                "sizes[{i}] = {s}: every axis needs N_i >= 3 cells"
            )));
        }
        if let Some((i, &h)) = spacings
            .iter()
            .enumerate()
            .find(|(_, &h)| !(h > 0.0 && h.is_finite()))
        {
            return Err(Error::InvalidGrid(format!(
                "spacings[{i}] = {h}: spacings must be finite and positive"
            )));
        }

        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        let vertex_count = sizes.iter().product();

        let mut subsets = vec![Vec::new(); n + 1];
        for k in 0..=n {
            subsets[k] = combinations(n, k);
        }
        let mut subset_pos = vec![0usize; 1 << n];
        for list in &subsets {
            for (p, &mask) in list.iter().enumerate() {
                subset_pos[mask as usize] = p;
            }
        }

        Ok(Self {
            n,
            sizes: sizes.to_vec(),
            spacings: spacings.to_vec(),
            strides,
            vertex_count,
            subsets,
            subset_pos,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.cell_count(1)
    }

    /// Number of k-cells, `C(n,k) · ∏ N_i`; zero outside `0..=n`.
    pub fn cell_count(&self, k: usize) -> usize {
        if k > self.n {
            0
        } else {
            self.subsets[k].len() * self.vertex_count
        }
    }

    /// Axis masks of degree k, in cell-id order.
    pub fn axis_masks(&self, k: usize) -> &[u32] {
        &self.subsets[k]
    }

    pub(crate) fn mask_position(&self, mask: u32) -> usize {
        self.subset_pos[mask as usize]
    }

    /// Cell id from an axis mask and a base vertex index.
    pub(crate) fn cell_id_from_mask(&self, mask: u32, vertex: usize) -> usize {
        self.mask_position(mask) * self.vertex_count + vertex
    }

    /// Splits a cell id of degree k into its axis mask and anchor vertex.
    pub(crate) fn split_id(&self, k: usize, id: usize) -> (u32, usize) {
        (
            self.subsets[k][id / self.vertex_count],
            id % self.vertex_count,
        )
    }

    /// Edge id of the edge leaving `vertex` along `axis`.
    pub fn edge_id(&self, vertex: usize, axis: usize) -> usize {
        self.cell_id_from_mask(1 << axis, vertex)
    }

    /// Tail vertex and axis of an edge id.
    pub fn edge_endpoints(&self, edge: usize) -> (usize, usize, usize) {
        let (mask, tail) = self.split_id(1, edge);
        let axis = mask.trailing_zeros() as usize;
        (tail, self.shift(tail, axis, 1), axis)
    }

    pub fn vertex_index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.sizes)
            .zip(&self.strides)
            .map(|((&c, &s), &st)| (c % s) * st)
            .sum()
    }

    pub fn vertex_coords(&self, vertex: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.sizes)
            .map(|(&st, &s)| (vertex / st) % s)
            .collect()
    }

    /// Vertex reached by moving `delta` steps along `axis`, with wrap-around.
    pub fn shift(&self, vertex: usize, axis: usize, delta: isize) -> usize {
        let size = self.sizes[axis] as isize;
        let st = self.strides[axis];
        let c = ((vertex / st) % self.sizes[axis]) as isize;
        let nc = (c + delta).rem_euclid(size) as usize;
        vertex - (c as usize) * st + nc * st
    }

    /// Position of a vertex in physical coordinates, `x_i = c_i h_i`.
    pub fn position(&self, vertex: usize) -> Vec<f64> {
        self.vertex_coords(vertex)
            .iter()
            .zip(&self.spacings)
            .map(|(&c, &h)| c as f64 * h)
            .collect()
    }

    pub fn total_volume(&self) -> f64 {
        self.sizes
            .iter()
            .zip(&self.spacings)
            .map(|(&s, &h)| s as f64 * h)
            .product()
    }

    pub fn cell(&self, k: usize, id: usize) -> Result<Cell> {
        if k > self.n || id >= self.cell_count(k) {
            return Err(Error::InvalidCell(format!(
                "no {k}-cell with id {id} (count {})",
                self.cell_count(k)
            )));
        }
        let (mask, v) = self.split_id(k, id);
        Ok(Cell {
            axes: mask_axes(mask),
            base: self.vertex_coords(v),
        })
    }

    /// Cell id of a cell; validates axes and reduces the base.
    pub fn locate(&self, cell: &Cell) -> Result<usize> {
        let mask = self.validate_axes(&cell.axes)?;
        if cell.base.len() != self.n {
            return Err(Error::InvalidCell(format!(
                "base has {} coordinates, grid dimension is {}",
                cell.base.len(),
                self.n
            )));
        }
        Ok(self.cell_id_from_mask(mask, self.vertex_index(&cell.base)))
    }

    /// Enumerates all k-cells in id order.
    pub fn cells(&self, k: usize) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count(k)).map(move |id| self.cell(k, id).expect("id in range"))
    }

    fn validate_axes(&self, axes: &[usize]) -> Result<u32> {
        let mut mask = 0u32;
        for w in axes.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidCell(format!(
                    "axes {axes:?} are not strictly increasing"
                )));
            }
        }
        for &a in axes {
            if a >= self.n {
                return Err(Error::InvalidCell(format!(
                    "axis {a} out of range for dimension {}",
                    self.n
                )));
            }
            mask |= 1 << a;
        }
        Ok(mask)
    }

    /// Signed faces of a cell, `2k` entries for a k-cell, empty for vertices.
    pub fn boundary(&self, cell: &Cell) -> Result<Vec<(Cell, i8)>> {
        self.validate_axes(&cell.axes)?;
        let mut out = Vec::with_capacity(2 * cell.axes.len());
        for (j, &axis) in cell.axes.iter().enumerate() {
            let mut axes = cell.axes.clone();
            axes.remove(j);
            let far_sign: i8 = if j % 2 == 0 { 1 } else { -1 };
            let mut far_base = cell.base.clone();
            far_base[axis] = (far_base[axis] + 1) % self.sizes[axis];
            out.push((
                Cell {
                    axes: axes.clone(),
                    base: far_base,
                },
                far_sign,
            ));
            out.push((
                Cell {
                    axes,
                    base: cell.base.clone(),
                },
                -far_sign,
            ));
        }
        Ok(out)
    }

    /// `(primal, dual)` volumes: product of spacings along / across the cell.
    pub fn volumes(&self, cell: &Cell) -> (f64, f64) {
        let mut mask = 0u32;
        for &a in &cell.axes {
            mask |= 1 << a;
        }
        self.mask_volumes(mask)
    }

    pub(crate) fn mask_volumes(&self, mask: u32) -> (f64, f64) {
        let mut primal = 1.0;
        let mut dual = 1.0;
        for (i, &h) in self.spacings.iter().enumerate() {
            if mask & (1 << i) != 0 {
                primal *= h;
            } else {
                dual *= h;
            }
        }
        (primal, dual)
    }
}

pub(crate) fn mask_axes(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

/// k-element subsets of `0..n` as bitmasks, lexicographic in the sorted axis list.
fn combinations(n: usize, k: usize) -> Vec<u32> {
    fn rec(start: usize, n: usize, left: usize, acc: u32, out: &mut Vec<u32>) {
        if left == 0 {
            out.push(acc);
            return;
        }
        for i in start..n {
            if n - i < left {
                break;
            }
            rec(i + 1, n, left - 1, acc | (1 << i), out);
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, 0, &mut out);
    out
}
