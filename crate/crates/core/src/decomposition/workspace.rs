//! Per-worker buffers and the tiled batch pipeline shared by the
//! FastTucker and FastTuckerPlus kernels.
//!
//! A batch of `m <= capacity` entries is staged into `M x J_n` factor tiles,
//! then `C(n) = A(n) B(n)`, `D(n) = prod_{k != n} C(k)`, `G(n) = D(n) B(n)^T`
//! and the predictions follow. Rows at or past `m` are kept at zero in every
//! buffer. Every stage charges its logical cost to [`Workspace::cost`].

use crate::evaluation::CostCounters;
use crate::tensor_store::SparseTensor;
use crate::tile::{matmul_into, TiledMatrix};

use super::cache::CCache;
use super::shared::SharedModel;

pub struct Workspace {
    rank: usize,
    ranks: Vec<usize>,
    capacity: usize,
    m: usize,
    rows: Vec<Vec<u32>>,
    x: Vec<f32>,
    xhat: Vec<f32>,
    resid: Vec<f32>,
    pub(crate) a: Vec<TiledMatrix>,
    pub(crate) b: Vec<TiledMatrix>,
    pub(crate) bt: Vec<TiledMatrix>,
    pub(crate) c: Vec<TiledMatrix>,
    pub(crate) d: Vec<TiledMatrix>,
    pub(crate) g: Vec<TiledMatrix>,
    pub(crate) e: Vec<TiledMatrix>,
    pub(crate) core_scratch: Vec<TiledMatrix>,
    pub(crate) row_buf: Vec<f32>,
    pub(crate) core_buf: Vec<f32>,
    /// Counters of the batch in flight.
    pub cost: CostCounters,
}

impl Workspace {
    pub fn new(ranks: &[usize], rank: usize, capacity: usize) -> Self {
        let per_mode = |f: &dyn Fn(usize) -> TiledMatrix| ranks.iter().map(|&j| f(j)).collect::<Vec<_>>();
        let jmax = ranks.iter().copied().max().unwrap_or(0);
        Self {
            rank,
            ranks: ranks.to_vec(),
            capacity,
            m: 0,
            rows: vec![Vec::with_capacity(capacity); ranks.len()],
            x: vec![0.0; capacity],
            xhat: vec![0.0; capacity],
            resid: vec![0.0; capacity],
            a: per_mode(&|j| TiledMatrix::zeros(capacity, j)),
            b: per_mode(&|j| TiledMatrix::zeros(j, rank)),
            bt: per_mode(&|j| TiledMatrix::zeros(rank, j)),
            c: per_mode(&|_| TiledMatrix::zeros(capacity, rank)),
            d: per_mode(&|_| TiledMatrix::zeros(capacity, rank)),
            g: per_mode(&|j| TiledMatrix::zeros(capacity, j)),
            e: per_mode(&|j| TiledMatrix::zeros(capacity, j)),
            core_scratch: per_mode(&|j| TiledMatrix::zeros(j, rank)),
            row_buf: vec![0.0; jmax.max(rank)],
            core_buf: vec![0.0; jmax * rank],
            cost: CostCounters::default(),
        }
    }

    pub fn order(&self) -> usize {
        self.ranks.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Rows of the batch in flight.
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Mode-`n` indices of the batch rows.
    pub fn row_indices(&self, n: usize) -> &[u32] {
        &self.rows[n]
    }

    pub fn values(&self) -> &[f32] {
        &self.x[..self.m]
    }

    pub fn predictions(&self) -> &[f32] {
        &self.xhat[..self.m]
    }

    pub fn residuals(&self) -> &[f32] {
        &self.resid[..self.m]
    }

    pub fn c(&self, n: usize) -> &TiledMatrix {
        &self.c[n]
    }

    pub fn d(&self, n: usize) -> &TiledMatrix {
        &self.d[n]
    }

    /// Starts a batch: records indices and values, clears the counters and
    /// shrinks every row buffer to the batch length.
    pub fn load_batch(&mut self, t: &SparseTensor, positions: &[u32]) {
        let m = positions.len();
        assert!(m <= self.capacity, "batch of {m} exceeds workspace capacity {}", self.capacity);
        self.m = m;
        self.cost = CostCounters::default();
        for col in &mut self.rows {
            col.clear();
        }
        for (slot, &p) in positions.iter().enumerate() {
            for (col, &i) in self.rows.iter_mut().zip(t.index(p as usize)) {
                col.push(i);
            }
            self.x[slot] = t.value(p as usize);
        }
        self.x[m..].fill(0.0);
        self.xhat.fill(0.0);
        self.resid.fill(0.0);
        for mats in [&mut self.a, &mut self.c, &mut self.d, &mut self.g, &mut self.e] {
            for mat in mats.iter_mut() {
                mat.set_logical_rows(m);
            }
        }
    }

    /// Copies `B(n)` into the core tiles. Charged separately by the caller,
    /// since whether `B(n)` counts as a batch read depends on the algorithm.
    pub fn stage_core(&mut self, s: &SharedModel, n: usize) {
        let len = self.ranks[n] * self.rank;
        let buf = &mut self.core_buf[..len];
        s.read_core(n, buf);
        for j in 0..self.ranks[n] {
            self.b[n].set_row(j, &buf[j * self.rank..(j + 1) * self.rank]);
        }
        for r in 0..self.rank {
            for j in 0..self.ranks[n] {
                self.bt[n].set(r, j, buf[j * self.rank + r]);
            }
        }
    }

    /// Gathers `A(n)[i_n,:]` for every batch row.
    pub fn stage_rows(&mut self, s: &SharedModel, n: usize) {
        let j = self.ranks[n];
        let buf = &mut self.row_buf[..j];
        for slot in 0..self.m {
            s.read_factor_row(n, self.rows[n][slot] as usize, buf);
            self.a[n].set_row(slot, buf);
        }
        self.cost.reads += (self.m * j) as u64;
    }

    /// Fills every batch row of the mode-`n` factor tile with `A(n)[i,:]`,
    /// read once.
    pub fn stage_broadcast_row(&mut self, s: &SharedModel, n: usize, i: usize) {
        let j = self.ranks[n];
        let buf = &mut self.row_buf[..j];
        s.read_factor_row(n, i, buf);
        for slot in 0..self.m {
            self.a[n].set_row(slot, buf);
        }
        self.cost.reads += j as u64;
    }

    /// Gathers precomputed `C(n)` rows instead of forming them.
    pub fn stage_c_rows(&mut self, cache: &CCache, n: usize) {
        for slot in 0..self.m {
            self.c[n].set_row(slot, cache.row(n, self.rows[n][slot] as usize));
        }
        self.cost.reads += (self.m * self.rank) as u64;
    }

    /// `C(n) = A(n) B(n)` on tiles.
    pub fn compute_c(&mut self, n: usize) {
        matmul_into(&self.a[n], &self.b[n], &mut self.c[n]);
        self.cost.d_stage_mults += (self.m * self.rank * self.ranks[n]) as u64;
    }

    /// Forms every `C(n)` (unless `c_staged`) and every `D(n)` with the shared
    /// schedule: each `C(n)` is folded into all `D(k)`, `k != n`, right after
    /// it is produced. The first factor of each `D(k)` is a copy.
    pub fn compute_c_and_d(&mut self, c_staged: bool) {
        let order = self.order();
        let mut started = vec![false; order];
        for n in 0..order {
            if !c_staged {
                self.compute_c(n);
            }
            for k in (0..order).filter(|&k| k != n) {
                let (c, d) = (&self.c[n], &mut self.d[k]);
                if started[k] {
                    d.hadamard_assign(c);
                    self.cost.d_stage_mults += (self.m * self.rank) as u64;
                } else {
                    d.copy_from(c);
                    started[k] = true;
                }
            }
        }
    }

    /// `D(n) = prod_{k != n} C(k)` alone, from already formed `C(k)`.
    pub fn compute_d_for(&mut self, n: usize) {
        let mut started = false;
        for k in (0..self.order()).filter(|&k| k != n) {
            let (c, d) = (&self.c[k], &mut self.d[n]);
            if started {
                d.hadamard_assign(c);
                self.cost.d_stage_mults += (self.m * self.rank) as u64;
            } else {
                d.copy_from(c);
                started = true;
            }
        }
    }

    /// `G(n) = D(n) B(n)^T`.
    pub fn compute_g(&mut self, n: usize) {
        matmul_into(&self.d[n], &self.bt[n], &mut self.g[n]);
        self.cost.bdt_mults += (self.m * self.rank * self.ranks[n]) as u64;
    }

    /// `x_hat = A(n) (.) (B(n) D(n)^T)`, one row dot per entry. Needs `G(n)`.
    pub fn predict_from_factors(&mut self, n: usize) {
        self.a[n].row_dots_into(&self.g[n], &mut self.xhat[..self.m]);
        self.update_residuals();
    }

    /// `x_hat = C(n) (.) D(n)^T`.
    pub fn predict_from_c(&mut self, n: usize) {
        self.c[n].row_dots_into(&self.d[n], &mut self.xhat[..self.m]);
        self.update_residuals();
    }

    /// `x_hat[m] = c . D(n)[m,:]` for a single shared `c` row.
    pub(crate) fn predict_from_row(&mut self, n: usize, c: &[f32]) {
        let d = &self.d[n];
        for slot in 0..self.m {
            let mut s = 0.0f32;
            for (r, &cv) in c.iter().enumerate() {
                s += cv * d.get(slot, r);
            }
            self.xhat[slot] = s;
        }
        self.update_residuals();
    }

    fn update_residuals(&mut self) {
        for slot in 0..self.m {
            self.resid[slot] = self.x[slot] - self.xhat[slot];
        }
    }

    /// `E(n) = (X - X_hat) (*) A(n)`.
    pub fn compute_e(&mut self, n: usize) {
        let (e, a) = (&mut self.e[n], &self.a[n]);
        e.scale_rows_from(&self.resid[..self.m], a);
    }
}
