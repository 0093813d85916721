//! 16x16 tiled matrix kernels and the elementwise batch operators.
//!
//! A [`TiledMatrix`] splits a logical `rows x cols` matrix into a grid of
//! [`Tile`]s, zero padding everything past the logical extent. Products are
//! accumulated tile by tile in ascending inner-tile order, so single threaded
//! results are bit-reproducible.

use crate::error::{Error, Result};

/// Tile edge length.
pub const TILE: usize = 16;
const TILE_LEN: usize = TILE * TILE;

/// A 16x16 block, row-major.
#[derive(Clone, Copy, PartialEq)]
#[repr(C, align(64))]
pub struct Tile(pub [f32; TILE_LEN]);

impl Default for Tile {
    fn default() -> Self {
        Self::ZERO
    }
}

impl std::fmt::Debug for Tile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.0.chunks_exact(TILE)).finish()
    }
}

impl Tile {
    pub const ZERO: Tile = Tile([0.0; TILE_LEN]);

    pub fn splat(v: f32) -> Self {
        Tile([v; TILE_LEN])
    }

    pub fn identity() -> Self {
        Self::from_fn(|i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut t = Self::ZERO;
        for i in 0..TILE {
            for j in 0..TILE {
                t.0[i * TILE + j] = f(i, j);
            }
        }
        t
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.0[i * TILE + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.0[i * TILE + j] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|i, j| self.get(j, i))
    }
}

/// `D = A . B + C`.
pub fn tile_mma(a: &Tile, b: &Tile, c: &Tile) -> Tile {
    let mut d = *c;
    mma_accumulate(a, b, &mut d);
    d
}

/// `acc += a . b`, inner index ascending.
#[inline]
pub(crate) fn mma_accumulate(a: &Tile, b: &Tile, acc: &mut Tile) {
    for i in 0..TILE {
        let a_row: &[f32; TILE] = a.0[i * TILE..(i + 1) * TILE].try_into().unwrap();
        let acc_row: &mut [f32; TILE] = (&mut acc.0[i * TILE..(i + 1) * TILE]).try_into().unwrap();
        for (p, &s) in a_row.iter().enumerate() {
            let b_row: &[f32; TILE] = b.0[p * TILE..(p + 1) * TILE].try_into().unwrap();
            for j in 0..TILE {
                acc_row[j] += s * b_row[j];
            }
        }
    }
}

/// Number of tiles needed to cover `n` rows or columns.
#[inline]
pub fn tiles_for(n: usize) -> usize {
    n.div_ceil(TILE)
}

/// A matrix stored as a grid of zero-padded 16x16 tiles.
#[derive(Clone, PartialEq)]
pub struct TiledMatrix {
    rows: usize,
    cols: usize,
    grid_rows: usize,
    grid_cols: usize,
    tiles: Vec<Tile>,
}

impl std::fmt::Debug for TiledMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TiledMatrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("grid", &(self.grid_rows, self.grid_cols))
            .finish()
    }
}

impl TiledMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let grid_rows = tiles_for(rows);
        let grid_cols = tiles_for(cols);
        Self {
            rows,
            cols,
            grid_rows,
            grid_cols,
            tiles: vec![Tile::ZERO; grid_rows * grid_cols],
        }
    }

    /// Tiles a row-major `rows x cols` slice.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f32]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            m.set_row(i, &data[i * cols..(i + 1) * cols]);
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Logical rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Logical columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(tile rows, tile columns)`.
    pub fn grid(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    pub fn padded_rows(&self) -> usize {
        self.grid_rows * TILE
    }

    pub fn padded_cols(&self) -> usize {
        self.grid_cols * TILE
    }

    pub fn tile(&self, p: usize, q: usize) -> &Tile {
        &self.tiles[p * self.grid_cols + q]
    }

    pub fn tile_mut(&mut self, p: usize, q: usize) -> &mut Tile {
        &mut self.tiles[p * self.grid_cols + q]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.tiles[(i / TILE) * self.grid_cols + j / TILE].get(i % TILE, j % TILE)
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        let gc = self.grid_cols;
        self.tiles[(i / TILE) * gc + j / TILE].set(i % TILE, j % TILE, v);
    }

    /// Writes logical row `i` from `row` (length `cols`).
    #[inline]
    pub fn set_row(&mut self, i: usize, row: &[f32]) {
        debug_assert_eq!(row.len(), self.cols);
        let (p, ii) = (i / TILE, i % TILE);
        for (q, chunk) in row.chunks(TILE).enumerate() {
            let t = &mut self.tiles[p * self.grid_cols + q];
            t.0[ii * TILE..ii * TILE + chunk.len()].copy_from_slice(chunk);
        }
    }

    /// Copies logical row `i` into `out` (length `cols`).
    #[inline]
    pub fn row_into(&self, i: usize, out: &mut [f32]) {
        debug_assert_eq!(out.len(), self.cols);
        let (p, ii) = (i / TILE, i % TILE);
        for (q, chunk) in out.chunks_mut(TILE).enumerate() {
            let t = &self.tiles[p * self.grid_cols + q];
            chunk.copy_from_slice(&t.0[ii * TILE..ii * TILE + chunk.len()]);
        }
    }

    pub fn row(&self, i: usize) -> Vec<f32> {
        let mut out = vec![0.0; self.cols];
        self.row_into(i, &mut out);
        out
    }

    pub fn to_row_major(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            self.row_into(i, &mut out[i * self.cols..(i + 1) * self.cols]);
        }
        out
    }

    /// Shrinks or grows the logical row count within the allocated grid,
    /// zeroing every row at or past the new extent.
    pub fn set_logical_rows(&mut self, rows: usize) {
        assert!(rows <= self.padded_rows(), "rows exceed the tile grid");
        let clear_from = rows.min(self.rows);
        for i in clear_from..self.padded_rows() {
            let (p, ii) = (i / TILE, i % TILE);
            for q in 0..self.grid_cols {
                self.tiles[p * self.grid_cols + q].0[ii * TILE..(ii + 1) * TILE].fill(0.0);
            }
        }
        self.rows = rows;
    }

    pub fn fill_zero(&mut self) {
        self.tiles.fill(Tile::ZERO);
    }

    /// True when every cell outside the logical extent is exactly zero.
    pub fn padding_is_zero(&self) -> bool {
        (0..self.padded_rows()).all(|i| {
            (0..self.padded_cols()).all(|j| i < self.rows && j < self.cols || self.get(i, j) == 0.0)
        })
    }

    pub fn transpose(&self) -> TiledMatrix {
        let mut out = TiledMatrix::zeros(self.cols, self.rows);
        for p in 0..self.grid_rows {
            for q in 0..self.grid_cols {
                *out.tile_mut(q, p) = self.tile(p, q).transpose();
            }
        }
        out
    }

    /// In-place Hadamard product with a matrix of the same shape.
    pub fn hadamard_assign(&mut self, other: &TiledMatrix) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (t, o) in self.tiles.iter_mut().zip(&other.tiles) {
            for (a, b) in t.0.iter_mut().zip(&o.0) {
                *a *= b;
            }
        }
    }

    /// Overwrites `self` with `other` (same grid).
    pub fn copy_from(&mut self, other: &TiledMatrix) {
        debug_assert_eq!(self.tiles.len(), other.tiles.len());
        self.rows = other.rows;
        self.cols = other.cols;
        self.tiles.copy_from_slice(&other.tiles);
    }

    /// `out[m] = self[m,:] . other[m,:]` for each logical row.
    pub fn row_dots_into(&self, other: &TiledMatrix, out: &mut [f32]) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        out.fill(0.0);
        for p in 0..self.grid_rows {
            let lo = p * TILE;
            let hi = (lo + TILE).min(self.rows);
            if lo >= hi {
                break;
            }
            for q in 0..self.grid_cols {
                let a = self.tile(p, q);
                let b = other.tile(p, q);
                for ii in 0..hi - lo {
                    let mut s = 0.0f32;
                    for jj in 0..TILE {
                        s += a.0[ii * TILE + jj] * b.0[ii * TILE + jj];
                    }
                    out[lo + ii] += s;
                }
            }
        }
    }

    /// `self[m,:] = v[m] * src[m,:]`; rows past `v.len()` become zero.
    pub fn scale_rows_from(&mut self, v: &[f32], src: &TiledMatrix) {
        debug_assert_eq!(self.tiles.len(), src.tiles.len());
        self.rows = src.rows;
        self.cols = src.cols;
        for p in 0..self.grid_rows {
            for q in 0..self.grid_cols {
                let s = &src.tiles[p * self.grid_cols + q];
                let d = &mut self.tiles[p * self.grid_cols + q];
                for ii in 0..TILE {
                    let w = v.get(p * TILE + ii).copied().unwrap_or(0.0);
                    for jj in 0..TILE {
                        d.0[ii * TILE + jj] = w * s.0[ii * TILE + jj];
                    }
                }
            }
        }
    }
}

/// `x . y` on tiles.
pub fn matmul_tiled(x: &TiledMatrix, y: &TiledMatrix) -> Result<TiledMatrix> {
    if x.cols != y.rows {
        return Err(Error::ShapeMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            x.rows, x.cols, y.rows, y.cols
        )));
    }
    let mut out = TiledMatrix::zeros(x.rows, y.cols);
    matmul_into(x, y, &mut out);
    Ok(out)
}

/// `out = x . y`; `out` must already have the product's grid.
pub(crate) fn matmul_into(x: &TiledMatrix, y: &TiledMatrix, out: &mut TiledMatrix) {
    debug_assert_eq!(x.cols, y.rows);
    debug_assert_eq!((out.grid_rows, out.grid_cols), (x.grid_rows, y.grid_cols));
    out.rows = x.rows;
    out.cols = y.cols;
    for p in 0..x.grid_rows {
        for q in 0..y.grid_cols {
            let mut acc = Tile::ZERO;
            for k in 0..x.grid_cols {
                mma_accumulate(x.tile(p, k), y.tile(k, q), &mut acc);
            }
            out.tiles[p * out.grid_cols + q] = acc;
        }
    }
}

/// `acc += x^T . y` without materializing the transpose.
pub(crate) fn matmul_transposed_acc(x: &TiledMatrix, y: &TiledMatrix, acc: &mut TiledMatrix) {
    debug_assert_eq!(x.grid_rows, y.grid_rows);
    debug_assert_eq!((acc.grid_rows, acc.grid_cols), (x.grid_cols, y.grid_cols));
    for p in 0..x.grid_cols {
        for q in 0..y.grid_cols {
            let t = &mut acc.tiles[p * acc.grid_cols + q];
            for k in 0..x.grid_rows {
                let xt = x.tile(k, p).transpose();
                mma_accumulate(&xt, y.tile(k, q), t);
            }
        }
    }
}

/// A plain row-major matrix, the operand type of the elementwise operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

/// Hadamard product `A * B` of equally shaped matrices.
pub fn hadamard(a: &Mat, b: &Mat) -> Result<Mat> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(Error::ShapeMismatch(format!(
            "hadamard of {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    Ok(Mat {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

/// R Dot product: for `A` (`M x R`) and `B` (`R x M`), `out[m] = a[m,:] . b[:,m]`.
pub fn r_dot(a: &Mat, b: &Mat) -> Result<Vec<f32>> {
    if a.cols != b.rows || a.rows != b.cols {
        return Err(Error::ShapeMismatch(format!(
            "r_dot needs MxR and RxM, got {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok((0..a.rows)
        .map(|m| (0..a.cols).map(|r| a.get(m, r) * b.get(r, m)).sum())
        .collect())
}

/// R Hadamard product: column `r` of the result is `v * B[:,r]`.
pub fn r_hadamard(v: &[f32], b: &Mat) -> Result<Mat> {
    if v.len() != b.rows {
        return Err(Error::ShapeMismatch(format!(
            "r_hadamard of a length-{} column and a {}x{} matrix",
            v.len(),
            b.rows,
            b.cols
        )));
    }
    Ok(Mat::from_fn(b.rows, b.cols, |i, j| v[i] * b.get(i, j)))
}
