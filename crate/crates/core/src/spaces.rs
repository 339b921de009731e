//! Block-structured Euclidean spaces and block linear operators.
//!
//! A [`BlockLayout`] describes a Cartesian product of Euclidean blocks; a
//! [`BlockVector`] is an element of such a product stored contiguously. The
//! [`BlockOperator`] maps the column layout (the primal index set) into the row
//! layout (the dual index set) through a sparse grid of dense blocks.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

const POWER_MAX_ITER: usize = 200;
const POWER_REL_TOL: f64 = 1e-12;

/// Dimensions of the blocks of a product space.
#[derive(Clone, PartialEq, Eq)]
pub struct BlockLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl BlockLayout {
    pub fn new(dims: Vec<usize>) -> Result<Arc<Self>> {
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "block {pos} has dimension 0"
            )));
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut total = 0;
        for &d in &dims {
            offsets.push(total);
            total += d;
        }
        offsets.push(total);
        Ok(Arc::new(BlockLayout {
            dims,
            offsets,
            total,
        }))
    }

    /// `count` blocks of the same dimension.
    pub fn uniform(count: usize, dim: usize) -> Result<Arc<Self>> {
        Self::new(vec![dim; count])
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn block_dim(&self, q: usize) -> usize {
        self.dims[q]
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn range(&self, q: usize) -> std::ops::Range<usize> {
        self.offsets[q]..self.offsets[q + 1]
    }
}

impl fmt::Debug for BlockLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockLayout{:?}", self.dims)
    }
}

fn same_layout(a: &Arc<BlockLayout>, b: &Arc<BlockLayout>) -> bool {
    Arc::ptr_eq(a, b) || a.dims == b.dims
}

fn check_layout(expected: &Arc<BlockLayout>, got: &Arc<BlockLayout>, what: &str) -> Result<()> {
    if same_layout(expected, got) {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what}: expected layout {:?}, got {:?}",
            expected.dims, got.dims
        )))
    }
}

/// An element of a product space, blocks stored back to back.
#[derive(Clone, Debug)]
pub struct BlockVector {
    layout: Arc<BlockLayout>,
    data: Vec<f64>,
}

impl PartialEq for BlockVector {
    fn eq(&self, other: &Self) -> bool {
        same_layout(&self.layout, &other.layout) && self.data == other.data
    }
}

impl BlockVector {
    pub fn zeros(layout: &Arc<BlockLayout>) -> Self {
        BlockVector {
            layout: Arc::clone(layout),
            data: vec![0.0; layout.total_dim()],
        }
    }

    pub fn from_flat(layout: &Arc<BlockLayout>, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.total_dim() {
            return Err(Error::Dimension(format!(
                "flat data has {} entries, layout needs {}",
                data.len(),
                layout.total_dim()
            )));
        }
        Ok(BlockVector {
            layout: Arc::clone(layout),
            data,
        })
    }

    pub fn from_blocks(layout: &Arc<BlockLayout>, blocks: &[Vec<f64>]) -> Result<Self> {
        if blocks.len() != layout.num_blocks() {
            return Err(Error::Dimension(format!(
                "{} blocks given, layout has {}",
                blocks.len(),
                layout.num_blocks()
            )));
        }
        let mut data = Vec::with_capacity(layout.total_dim());
        for (q, b) in blocks.iter().enumerate() {
            if b.len() != layout.block_dim(q) {
                return Err(Error::Dimension(format!(
                    "block {q} has {} entries, expected {}",
                    b.len(),
                    layout.block_dim(q)
                )));
            }
            data.extend_from_slice(b);
        }
        Ok(BlockVector {
            layout: Arc::clone(layout),
            data,
        })
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    pub fn num_blocks(&self) -> usize {
        self.layout.num_blocks()
    }

    pub fn block(&self, q: usize) -> &[f64] {
        &self.data[self.layout.range(q)]
    }

    pub fn block_mut(&mut self, q: usize) -> &mut [f64] {
        let r = self.layout.range(q);
        &mut self.data[r]
    }

    pub fn set_block(&mut self, q: usize, v: &[f64]) {
        self.block_mut(q).copy_from_slice(v);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.num_blocks()).map(move |q| self.block(q))
    }

    pub fn dot(&self, other: &BlockVector) -> f64 {
        debug_assert!(same_layout(&self.layout, &other.layout));
        dot(&self.data, &other.data)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &BlockVector) -> f64 {
        debug_assert!(same_layout(&self.layout, &other.layout));
        dist_sq(&self.data, &other.data)
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &BlockVector) {
        debug_assert!(same_layout(&self.layout, &other.layout));
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
    }

    pub fn scaled(&self, a: f64) -> BlockVector {
        BlockVector {
            layout: Arc::clone(&self.layout),
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &BlockVector) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// The embedding of a single block into the product space, zeros elsewhere.
pub fn embed_block(layout: &Arc<BlockLayout>, q: usize, v: &[f64]) -> Result<BlockVector> {
    if q >= layout.num_blocks() {
        return Err(Error::IndexOutOfRange {
            index: q,
            len: layout.num_blocks(),
        });
    }
    if v.len() != layout.block_dim(q) {
        return Err(Error::Dimension(format!(
            "embedded vector has {} entries, block {q} has {}",
            v.len(),
            layout.block_dim(q)
        )));
    }
    let mut out = BlockVector::zeros(layout);
    out.set_block(q, v);
    Ok(out)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-major dense real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("matrix must be nonempty".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for k in 0..n {
            data[k * n + k] = 1.0;
        }
        DenseMatrix {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// `out += M x`
    pub fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        if self.cols == 1 {
            let x0 = x[0];
            for (o, m) in out.iter_mut().zip(&self.data) {
                *o += m * x0;
            }
            return;
        }
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `out += a * M x`
    pub fn mul_add_scaled(&self, a: f64, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += a * dot(row, x);
        }
    }

    /// `out += Mᵀ y`
    pub fn tmul_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        if self.cols == 1 {
            out[0] += dot(&self.data, y);
            return;
        }
        for (yr, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if *yr == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(row) {
                *o += yr * m;
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_add(x, &mut out);
        out
    }

    pub fn tmul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.tmul_add(y, &mut out);
        out
    }
}

/// Spectral norm by power iteration on the smaller Gram matrix.
///
/// Starts from the normalized all-ones vector, stops when the eigenvalue
/// estimate changes by less than `1e-12` relative or after 200 iterations.
/// If the start vector lies in the null space of a nonzero matrix the
/// iteration restarts from successive coordinate vectors.
pub fn operator_block_norm(m: &DenseMatrix) -> f64 {
    if m.data.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    // Gram matrix G = MᵀM (cols×cols) or MMᵀ (rows×rows), whichever is smaller.
    let use_cols = m.cols <= m.rows;
    let n = if use_cols { m.cols } else { m.rows };
    let gram_apply = |v: &[f64]| -> Vec<f64> {
        if use_cols {
            m.tmul_vec(&m.mul_vec(v))
        } else {
            m.mul_vec(&m.tmul_vec(v))
        }
    };

    let starts = std::iter::once(vec![1.0; n]).chain((0..n).map(|k| {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        e
    }));
    for start in starts {
        if let Some(lambda) = power_iterate(start, &gram_apply) {
            return lambda.sqrt();
        }
    }
    0.0
}

fn power_iterate(start: Vec<f64>, apply: &dyn Fn(&[f64]) -> Vec<f64>) -> Option<f64> {
    let mut v = start;
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = apply(&v);
        let est = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return None;
        }
        v = w.into_iter().map(|x| x / nw).collect();
        let done = (est - lambda).abs() <= POWER_REL_TOL * est.abs();
        lambda = est;
        if done {
            break;
        }
    }
    // Rayleigh quotient at the final iterate.
    let w = apply(&v);
    Some(dot(&v, &w).max(lambda))
}

#[derive(Clone, Debug)]
struct OperatorEntry {
    row: usize,
    col: usize,
    matrix: DenseMatrix,
    norm: f64,
}

/// Sparse grid of dense blocks `A_ji` mapping the column layout into the row
/// layout. Absent entries are zero maps.
#[derive(Clone, Debug)]
pub struct BlockOperator {
    row_layout: Arc<BlockLayout>,
    col_layout: Arc<BlockLayout>,
    entries: Vec<OperatorEntry>,
    by_row: Vec<Vec<usize>>,
    by_col: Vec<Vec<usize>>,
}

impl BlockOperator {
    /// Assemble from `(j, i, A_ji)` triples. Duplicate keys are rejected.
    pub fn new(
        row_layout: &Arc<BlockLayout>,
        col_layout: &Arc<BlockLayout>,
        blocks: impl IntoIterator<Item = (usize, usize, DenseMatrix)>,
    ) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize), DenseMatrix> = BTreeMap::new();
        for (j, i, m) in blocks {
            if j >= row_layout.num_blocks() {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    len: row_layout.num_blocks(),
                });
            }
            if i >= col_layout.num_blocks() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: col_layout.num_blocks(),
                });
            }
            if m.rows != row_layout.block_dim(j) || m.cols != col_layout.block_dim(i) {
                return Err(Error::Dimension(format!(
                    "block ({j},{i}) is {}x{}, expected {}x{}",
                    m.rows,
                    m.cols,
                    row_layout.block_dim(j),
                    col_layout.block_dim(i)
                )));
            }
            if map.insert((j, i), m).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate operator block ({j},{i})"
                )));
            }
        }
        let mut by_row = vec![Vec::new(); row_layout.num_blocks()];
        let mut by_col = vec![Vec::new(); col_layout.num_blocks()];
        let entries: Vec<OperatorEntry> = map
            .into_iter()
            .enumerate()
            .map(|(e, ((j, i), matrix))| {
                by_row[j].push(e);
                by_col[i].push(e);
                let norm = operator_block_norm(&matrix);
                OperatorEntry {
                    row: j,
                    col: i,
                    matrix,
                    norm,
                }
            })
            .collect();
        Ok(BlockOperator {
            row_layout: Arc::clone(row_layout),
            col_layout: Arc::clone(col_layout),
            entries,
            by_row,
            by_col,
        })
    }

    pub fn row_layout(&self) -> &Arc<BlockLayout> {
        &self.row_layout
    }

    pub fn col_layout(&self) -> &Arc<BlockLayout> {
        &self.col_layout
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    /// Stored blocks as `(j, i, A_ji, ‖A_ji‖)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &DenseMatrix, f64)> {
        self.entries
            .iter()
            .map(|e| (e.row, e.col, &e.matrix, e.norm))
    }

    pub fn block(&self, j: usize, i: usize) -> Option<&DenseMatrix> {
        self.by_row
            .get(j)?
            .iter()
            .map(|&e| &self.entries[e])
            .find(|e| e.col == i)
            .map(|e| &e.matrix)
    }

    /// Cached `‖A_ji‖`, zero for absent blocks.
    pub fn block_norm(&self, j: usize, i: usize) -> f64 {
        self.by_row
            .get(j)
            .and_then(|row| row.iter().map(|&e| &self.entries[e]).find(|e| e.col == i))
            .map_or(0.0, |e| e.norm)
    }

    /// Column indices `i` with a stored block in row `j`.
    pub fn cols_in_row(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.by_row[j].iter().map(|&e| self.entries[e].col)
    }

    /// Row indices `j` with a stored block in column `i`.
    pub fn rows_in_col(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.by_col[i].iter().map(|&e| self.entries[e].row)
    }

    /// Norms `‖A_ji‖` of the stored blocks in column `i`.
    pub fn col_norms(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.by_col[i].iter().map(|&e| self.entries[e].norm)
    }

    pub fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        check_layout(&self.col_layout, x.layout(), "apply")?;
        let mut out = BlockVector::zeros(&self.row_layout);
        for e in &self.entries {
            let r = self.row_layout.range(e.row);
            e.matrix.mul_add(x.block(e.col), &mut out.data[r]);
        }
        Ok(out)
    }

    pub fn adjoint_apply(&self, y: &BlockVector) -> Result<BlockVector> {
        check_layout(&self.row_layout, y.layout(), "adjoint_apply")?;
        let mut out = BlockVector::zeros(&self.col_layout);
        for i in 0..self.col_layout.num_blocks() {
            let r = self.col_layout.range(i);
            self.col_adjoint_into(i, y, &mut out.data[r]);
        }
        Ok(out)
    }

    /// `out = Σ_i A_ji x_i` for a single row block `j`.
    pub fn row_apply_into(&self, j: usize, x: &BlockVector, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &e in &self.by_row[j] {
            let e = &self.entries[e];
            e.matrix.mul_add(x.block(e.col), out);
        }
    }

    /// `out = Σ_j A_jiᵀ y_j` for a single column block `i`.
    pub fn col_adjoint_into(&self, i: usize, y: &BlockVector, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &e in &self.by_col[i] {
            let e = &self.entries[e];
            e.matrix.tmul_add(y.block(e.row), out);
        }
    }

    /// `agg_j += A_ji delta` for every stored block of column `i`.
    pub fn col_scatter_add(&self, i: usize, delta: &[f64], agg: &mut BlockVector) {
        for &e in &self.by_col[i] {
            let e = &self.entries[e];
            let r = self.row_layout.range(e.row);
            e.matrix.mul_add(delta, &mut agg.data[r]);
        }
    }

    /// The fully assembled dense matrix.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.row_layout.total_dim(), self.col_layout.total_dim());
        for e in &self.entries {
            let r0 = self.row_layout.range(e.row).start;
            let c0 = self.col_layout.range(e.col).start;
            for r in 0..e.matrix.rows {
                for c in 0..e.matrix.cols {
                    d.set(r0 + r, c0 + c, e.matrix.get(r, c));
                }
            }
        }
        d
    }

    /// `(Σ_j (Σ_i ‖A_ji‖)²)^{1/2}`, an upper bound on `‖A‖`.
    pub fn norm_bound(&self) -> f64 {
        (0..self.row_layout.num_blocks())
            .map(|j| {
                let s: f64 = self.by_row[j].iter().map(|&e| self.entries[e].norm).sum();
                s * s
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `‖A‖` estimated by power iteration on `A*A` through apply/adjoint.
    pub fn operator_norm(&self) -> f64 {
        let n = self.col_layout.total_dim();
        let apply = |v: &[f64]| -> Vec<f64> {
            let x = BlockVector::from_flat(&self.col_layout, v.to_vec()).expect("layout");
            let ax = self.apply(&x).expect("layout");
            self.adjoint_apply(&ax).expect("layout").data
        };
        let starts = std::iter::once(vec![1.0; n]).chain((0..n).map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            e
        }));
        for start in starts {
            if let Some(lambda) = power_iterate(start, &apply) {
                return lambda.sqrt();
            }
        }
        0.0
    }
}
